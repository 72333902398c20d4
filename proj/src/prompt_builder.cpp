#include "ncq/prompt_builder.hpp"

#include <filesystem>

#include <nlohmann/json.hpp>

#include "ncq/assets.hpp"
#include "ncq/response_parser.hpp"
#include "ncq/text.hpp"

namespace ncq {

namespace {

void check_preamble(const std::string& text, const std::string& which) {
  for (const auto& line : text::split_lines(text)) {
    if (text::starts_with_icase(text::trim(line), "Question:")) {
      throw PromptError(which + " must not contain a line starting with 'Question:'");
    }
  }
}

std::string section_text(const SectionMap& map, Section s) {
  for (const auto& [k, v] : map) {
    if (k == s) return v;
  }
  return {};
}

}  // namespace

ExemplarSource parse_exemplar_source(const std::string& content, const std::string& origin) {
  // Reuse the prompt parser: an exemplar file is a single "Question:" block.
  auto parsed = parse_prompt(content);
  std::vector<ParsedPromptBlock> blocks = parsed.exemplars;
  if (parsed.target_question) blocks.push_back({*parsed.target_question, {}});
  if (blocks.size() != 1 || !parsed.preamble.empty()) {
    throw PromptError(origin + ": expected exactly one 'Question:' block");
  }
  const auto& b = blocks.front();
  ExemplarSource src;
  src.origin = origin;
  src.negated_question = b.question;
  src.standard_question = section_text(b.sections, Section::StandardQuestion);
  src.standard_reasoning = section_text(b.sections, Section::StandardReasoning);
  src.standard_answer = section_text(b.sections, Section::StandardAnswer);
  src.negation_logic = section_text(b.sections, Section::NegationLogic);
  src.negated_answer = section_text(b.sections, Section::FinalAnswer);
  return src;
}

PromptAssets PromptAssets::load(const std::string& dir) {
  namespace fs = std::filesystem;
  const std::string manifest_text = text::read_file(dir + "/manifest.json");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(manifest_text);
  } catch (const nlohmann::json::exception& e) {
    throw PromptError("prompt bundle manifest: " + std::string(e.what()));
  }
  PromptAssets assets;
  assets.name = manifest.value("name", "unnamed");
  assets.version = manifest.value("version", "0");
  std::string digest_input = manifest_text;
  auto read = [&](const std::string& rel) {
    std::string body = text::read_file((fs::path(dir) / rel).string());
    digest_input += "\n--" + rel + "--\n" + body;
    return body;
  };
  assets.negation_preamble = text::trim(read(manifest.value("preamble", "preamble.txt")));
  assets.standard_preamble = text::trim(read(manifest.value("standard_preamble", "preamble_standard.txt")));
  check_preamble(assets.negation_preamble, "preamble");
  check_preamble(assets.standard_preamble, "standard preamble");
  if (!manifest.contains("exemplars") || !manifest["exemplars"].is_array()) {
    throw PromptError("prompt bundle manifest lists no exemplars");
  }
  for (const auto& rel : manifest["exemplars"]) {
    const auto path = rel.get<std::string>();
    assets.items.push_back(parse_exemplar_source(read(path), path));
  }
  assets.version_hash = text::sha256_hex(digest_input);
  return assets;
}

PromptAssets PromptAssets::defaults() {
  return load(asset_path("prompts"));
}

Exemplar project_exemplar(const ExemplarSource& src, PromptStrategy strategy, QuestionForm form) {
  Exemplar ex;
  switch (strategy) {
    case PromptStrategy::FewShot:
      if (form == QuestionForm::Standard) {
        ex.question = src.standard_question;
        ex.answer = src.standard_answer;
      } else {
        ex.question = src.negated_question;
        ex.answer = src.negated_answer;
      }
      break;
    case PromptStrategy::CoTFull:
      ex.question = src.negated_question;
      ex.sections = {{Section::StandardQuestion, src.standard_question},
                     {Section::StandardReasoning, src.standard_reasoning},
                     {Section::StandardAnswer, src.standard_answer},
                     {Section::NegationLogic, src.negation_logic},
                     {Section::FinalAnswer, src.negated_answer}};
      break;
    case PromptStrategy::CoTNoNegationLogic:
      ex.question = src.negated_question;
      ex.sections = {{Section::StandardReasoning, src.standard_reasoning},
                     {Section::FinalAnswer, src.negated_answer}};
      break;
    case PromptStrategy::CoTStandard:
      ex.question = src.standard_question;
      ex.sections = {{Section::StandardReasoning, src.standard_reasoning},
                     {Section::FinalAnswer, src.standard_answer}};
      break;
  }
  return ex;
}

std::vector<ValidationFinding> validate_exemplar(const Exemplar& exemplar, PromptStrategy strategy) {
  using Kind = ValidationFinding::Kind;
  std::vector<ValidationFinding> findings;
  const auto required = required_sections(strategy);
  auto is_required = [&](Section s) {
    return std::find(required.begin(), required.end(), s) != required.end();
  };
  int last = -1;
  for (const auto& [sec, body] : exemplar.sections) {
    const std::string name(label(sec));
    if (!is_required(sec)) {
      findings.push_back({Kind::ExtraSection, sec, "unexpected section '" + name + "'"});
      continue;
    }
    if (static_cast<int>(sec) <= last) {
      findings.push_back({Kind::OutOfOrder, sec, "section '" + name + "' duplicated or out of order"});
    }
    last = std::max(last, static_cast<int>(sec));
    if (text::trim(body).empty()) findings.push_back({Kind::EmptyText, sec, "section '" + name + "' is empty"});
  }
  for (Section req : required) {
    const bool present = std::any_of(exemplar.sections.begin(), exemplar.sections.end(),
                                     [req](const auto& kv) { return kv.first == req; });
    if (!present) {
      findings.push_back({Kind::MissingSection, req, "missing section '" + std::string(label(req)) + "'"});
    }
  }
  if (text::trim(exemplar.question).empty()) {
    findings.push_back({Kind::EmptyText, Section::FinalAnswer, "exemplar question is empty"});
  }
  if (strategy == PromptStrategy::FewShot && text::trim(exemplar.answer).empty()) {
    findings.push_back({Kind::EmptyText, Section::FinalAnswer, "few-shot exemplar answer is empty"});
  }
  return findings;
}

std::string Prompt::hash() const {
  return text::sha256_hex(rendered);
}

Prompt build_prompt(PromptStrategy strategy, const VerbalizedQuestion& question, const PromptAssets& assets) {
  const bool negated = question.form == QuestionForm::NegatedComplementary;
  if ((strategy == PromptStrategy::CoTFull || strategy == PromptStrategy::CoTNoNegationLogic) && !negated) {
    throw PromptError(std::string(to_string(strategy)) + " requires a negated complementary question");
  }
  if (strategy == PromptStrategy::CoTStandard && negated) {
    throw PromptError("CoTStandard requires a standard question");
  }
  if (question.text.find('\n') != std::string::npos) throw PromptError("target question spans lines");
  if (assets.items.size() < kExemplarsPerPrompt) {
    throw PromptError("prompt bundle has " + std::to_string(assets.items.size()) + " exemplars, need " +
                      std::to_string(kExemplarsPerPrompt));
  }

  Prompt prompt{strategy, negated ? assets.negation_preamble : assets.standard_preamble, {}, question, {}};
  for (size_t i = 0; i < kExemplarsPerPrompt; ++i) {
    auto ex = project_exemplar(assets.items[i], strategy, question.form);
    if (auto findings = validate_exemplar(ex, strategy); !findings.empty()) {
      throw PromptError(assets.items[i].origin + " is not a valid " + std::string(to_string(strategy)) +
                        " exemplar: " + findings.front().message);
    }
    prompt.exemplars.push_back(std::move(ex));
  }

  std::string out = prompt.preamble;
  for (const auto& ex : prompt.exemplars) {
    out += "\n\n";
    out += kQuestionLabel;
    out += ": " + ex.question + "\n";
    if (strategy == PromptStrategy::FewShot) {
      out += render_exemplar({{Section::FinalAnswer, ex.answer}});
    } else {
      out += render_exemplar(ex.sections);
    }
  }
  out += "\n\n";
  out += kQuestionLabel;
  out += ": " + question.text + "\n";
  if (strategy == PromptStrategy::FewShot) out += std::string(label(Section::FinalAnswer)) + ":";
  prompt.rendered = std::move(out);
  return prompt;
}

}  // namespace ncq
