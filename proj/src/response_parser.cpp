#include "ncq/response_parser.hpp"

#include <algorithm>

#include "ncq/assets.hpp"
#include "ncq/text.hpp"

namespace ncq {

namespace {

std::string normalize_marker(std::string_view s) {
  std::string v = text::replace_all(s, "\xE2\x80\x99", "'");  // curly apostrophe
  v = text::to_lower(strip_answer(v));
  while (!v.empty() && (v.back() == '!' || v.back() == '?')) v.pop_back();
  std::string out;
  bool space = false;
  for (char c : text::trim(v)) {
    if (c == ' ' || c == '\t') {
      space = true;
      continue;
    }
    if (space && !out.empty()) out.push_back(' ');
    space = false;
    out.push_back(c);
  }
  return out;
}

// Longest labels first so "Standard answer:" is not read as "Answer:".
constexpr std::array<Section, 5> kMatchOrder = {Section::StandardQuestion, Section::StandardAnswer,
                                                Section::NegationLogic, Section::StandardReasoning,
                                                Section::FinalAnswer};

// If `line` starts with "<Label>:", returns the section and the remaining text.
std::optional<std::pair<Section, std::string>> match_label(std::string_view line) {
  for (Section s : kMatchOrder) {
    const auto lab = label(s);
    if (line.size() > lab.size() && text::starts_with_icase(line, lab) && line[lab.size()] == ':') {
      return std::make_pair(s, text::trim(line.substr(lab.size() + 1)));
    }
  }
  return std::nullopt;
}

std::optional<std::string> match_question(std::string_view line) {
  const auto lab = kQuestionLabel;
  if (line.size() > lab.size() && text::starts_with_icase(line, lab) && line[lab.size()] == ':') {
    return text::trim(line.substr(lab.size() + 1));
  }
  return std::nullopt;
}

void upsert(SectionMap& map, Section s, std::string value) {
  for (auto& [k, v] : map) {
    if (k == s) {
      v = std::move(value);
      return;
    }
  }
  map.emplace_back(s, std::move(value));
}

// Shared by completions and prompt blocks: reads labeled lines, folding
// unlabeled continuation lines into the open section.
struct SectionScan {
  SectionMap sections;
  bool stray_text = false;
};

SectionScan scan_sections(const std::vector<std::string>& lines, size_t begin, size_t end) {
  SectionScan scan;
  std::optional<Section> open;
  for (size_t i = begin; i < end; ++i) {
    const std::string line = text::trim(lines[i]);
    if (auto m = match_label(line)) {
      // A repeated label overwrites: the last occurrence wins.
      upsert(scan.sections, m->first, m->second);
      open = m->first;
      continue;
    }
    if (line.empty()) continue;
    if (!open) {
      scan.stray_text = true;
      continue;
    }
    for (auto& [k, v] : scan.sections) {
      if (k == *open) v = v.empty() ? line : v + " " + line;
    }
  }
  return scan;
}

}  // namespace

std::string render_exemplar(const SectionMap& sections) {
  std::string out;
  int last = -1;
  for (const auto& [sec, body] : sections) {
    const int idx = static_cast<int>(sec);
    if (idx <= last) {
      throw FormatError("section '" + std::string(label(sec)) + "' is duplicated or out of canonical order");
    }
    last = idx;
    if (body.empty()) throw FormatError("section '" + std::string(label(sec)) + "' has empty text");
    if (body.find('\n') != std::string::npos || body.find('\r') != std::string::npos) {
      throw FormatError("section '" + std::string(label(sec)) + "' spans multiple lines");
    }
    if (text::trim(body) != body) {
      throw FormatError("section '" + std::string(label(sec)) + "' has surrounding whitespace");
    }
    if (!out.empty()) out += '\n';
    out += label(sec);
    out += ": ";
    out += body;
  }
  return out;
}

RefusalMarkers::RefusalMarkers(std::vector<std::string> markers) {
  for (const auto& m : markers) {
    auto n = normalize_marker(m);
    if (!n.empty()) markers_.push_back(std::move(n));
  }
}

RefusalMarkers RefusalMarkers::parse(std::string_view content) {
  std::vector<std::string> list;
  for (const auto& line : text::split_lines(content)) {
    const auto t = text::trim(line);
    if (t.empty() || t.front() == '#') continue;
    list.push_back(t);
  }
  return RefusalMarkers(std::move(list));
}

RefusalMarkers RefusalMarkers::from_file(const std::string& path) {
  return parse(text::read_file(path));
}

const RefusalMarkers& RefusalMarkers::defaults() {
  static const RefusalMarkers markers = from_file(asset_path("refusal_markers.txt"));
  return markers;
}

bool RefusalMarkers::matches(std::string_view answer) const {
  const auto n = normalize_marker(answer);
  return std::find(markers_.begin(), markers_.end(), n) != markers_.end();
}

std::string strip_answer(std::string_view s) {
  std::string v = text::trim(s);
  while (!v.empty() && v.back() == '.') {
    v.pop_back();
    v = text::trim(v);
  }
  return v;
}

ParsedAnswer parse_completion(std::string_view completion, PromptStrategy strategy,
                              const RefusalMarkers& markers) {
  ParsedAnswer out;
  out.raw = std::string(completion);
  const auto lines = text::split_lines(completion);

  if (strategy == PromptStrategy::FewShot) {
    size_t i = 0;
    while (i < lines.size() && text::trim(lines[i]).empty()) ++i;
    if (i < lines.size()) {
      std::string first = text::trim(lines[i]);
      if (auto m = match_label(first); m && m->first == Section::FinalAnswer) {
        first = m->second;
        out.salvaged = true;
      }
      if (!match_question(first)) {
        out.final_answer = strip_answer(first);
        if (!out.final_answer.empty()) out.sections.emplace_back(Section::FinalAnswer, out.final_answer);
      }
    }
  } else {
    // Cut at a new "Question:" once the answer body has started.
    size_t end = lines.size();
    bool seen_section = false;
    for (size_t i = 0; i < lines.size(); ++i) {
      const auto t = text::trim(lines[i]);
      if (match_label(t)) seen_section = true;
      if (seen_section && match_question(t)) {
        end = i;
        break;
      }
    }
    auto scan = scan_sections(lines, 0, end);
    out.sections = std::move(scan.sections);
    bool has_answer = false;
    for (const auto& [k, v] : out.sections) {
      if (k == Section::FinalAnswer) {
        out.final_answer = strip_answer(v);
        has_answer = true;
      }
    }
    if (has_answer) {
      bool complete = !scan.stray_text;
      for (Section req : required_sections(strategy)) {
        const bool present = std::any_of(out.sections.begin(), out.sections.end(),
                                         [req](const auto& kv) { return kv.first == req; });
        complete = complete && present;
      }
      out.salvaged = !complete;
    }
  }
  out.no_answer = is_no_answer(out, markers);
  return out;
}

bool is_no_answer(const ParsedAnswer& parsed, const RefusalMarkers& markers) {
  return parsed.final_answer.empty() || markers.matches(parsed.final_answer);
}

ParsedPrompt parse_prompt(std::string_view rendered) {
  ParsedPrompt out;
  const auto lines = text::split_lines(rendered);
  // Paragraphs separated by blank lines; items start with "Question:".
  std::vector<std::pair<size_t, size_t>> paragraphs;
  size_t i = 0;
  while (i < lines.size()) {
    while (i < lines.size() && text::trim(lines[i]).empty()) ++i;
    if (i >= lines.size()) break;
    size_t j = i;
    while (j < lines.size() && !text::trim(lines[j]).empty()) ++j;
    paragraphs.emplace_back(i, j);
    i = j;
  }
  std::vector<std::string> preamble;
  bool in_items = false;
  std::vector<ParsedPromptBlock> blocks;
  for (auto [b, e] : paragraphs) {
    auto q = match_question(text::trim(lines[b]));
    if (!q) {
      if (!in_items) {
        for (size_t k = b; k < e; ++k) preamble.push_back(lines[k]);
        preamble.emplace_back();
      }
      continue;
    }
    in_items = true;
    ParsedPromptBlock block;
    block.question = *q;
    block.sections = scan_sections(lines, b + 1, e).sections;
    blocks.push_back(std::move(block));
  }
  while (!preamble.empty() && preamble.back().empty()) preamble.pop_back();
  out.preamble = text::join(preamble, "\n");
  if (!blocks.empty()) {
    const auto& last = blocks.back();
    const bool open_slot = std::all_of(last.sections.begin(), last.sections.end(),
                                       [](const auto& kv) { return kv.second.empty(); });
    if (open_slot) {
      out.target_question = last.question;
      blocks.pop_back();
    }
  }
  out.exemplars = std::move(blocks);
  return out;
}

}  // namespace ncq
