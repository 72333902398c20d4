#include "ncq/evaluation.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>

#include "ncq/text.hpp"

namespace ncq {

using nlohmann::json;

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::Correct: return "Correct";
    case Verdict::Incorrect: return "Incorrect";
    case Verdict::Unfamiliar: return "Unfamiliar";
  }
  return "";
}

void ClosedWorldOracle::validate() const {
  if (universe.empty()) throw OracleError("oracle " + question_id + ": U is empty");
  if (valid.empty()) throw OracleError("oracle " + question_id + ": V is empty");
  for (const auto& v : valid) {
    if (!universe.contains(v)) throw OracleError("oracle " + question_id + ": '" + v + "' is in V but not in U");
  }
  for (const auto& a : standard_correct) {
    if (!valid.contains(a)) throw OracleError("oracle " + question_id + ": '" + a + "' is in A but not in V");
  }
}

ClosedWorldOracle ClosedWorldOracle::from_json(const json& j) {
  ClosedWorldOracle o;
  o.question_id = j.value("question_id", j.value("triple_id", ""));
  auto read = [&j](const char* k) {
    std::set<std::string> s;
    if (j.contains(k)) {
      for (const auto& v : j.at(k)) s.insert(v.get<std::string>());
    }
    return s;
  };
  o.universe = read("U");
  o.valid = read("V");
  o.standard_correct = read("A");
  o.validate();
  return o;
}

json ClosedWorldOracle::to_json() const {
  return json{{"question_id", question_id}, {"U", universe}, {"V", valid}, {"A", standard_correct}};
}

std::string normalize_answer(std::string_view answer) {
  std::string s = text::to_lower(text::trim(answer));
  while (!s.empty() && std::string_view(".,;:!?").find(s.back()) != std::string_view::npos) {
    s.pop_back();
    s = text::trim(s);
  }
  std::string out;
  bool pending_space = false;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = true;
      continue;
    }
    if (pending_space && !out.empty()) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

std::set<std::string> nc_answer_set(const ClosedWorldOracle& oracle) {
  oracle.validate();
  std::set<std::string> out;
  for (const auto& v : oracle.valid) {
    if (!oracle.standard_correct.contains(v)) out.insert(v);
  }
  return out;
}

namespace {
bool contains_normalized(const std::set<std::string>& set, const std::string& normalized) {
  return std::any_of(set.begin(), set.end(), [&](const std::string& m) { return normalize_answer(m) == normalized; });
}
}  // namespace

Verdict judge_against_oracle(std::string_view answer, QuestionForm form, const ClosedWorldOracle& oracle) {
  const std::string a = normalize_answer(answer);
  if (a.starts_with("not ") && contains_normalized(oracle.standard_correct, a.substr(4))) {
    return Verdict::Incorrect;
  }
  if (form == QuestionForm::Standard) {
    return contains_normalized(oracle.standard_correct, a) ? Verdict::Correct : Verdict::Incorrect;
  }
  return contains_normalized(nc_answer_set(oracle), a) ? Verdict::Correct : Verdict::Incorrect;
}

std::map<std::string, ClosedWorldOracle> parse_oracle_worlds(std::string_view content) {
  std::map<std::string, ClosedWorldOracle> out;
  size_t lineno = 0;
  for (const auto& line : text::split_lines(content)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    try {
      auto o = ClosedWorldOracle::from_json(json::parse(line));
      if (o.question_id.empty()) throw OracleError("missing question_id");
      const auto id = o.question_id;
      if (!out.emplace(id, std::move(o)).second) throw OracleError("duplicate question_id " + id);
    } catch (const json::exception& e) {
      throw OracleError("oracle line " + std::to_string(lineno) + ": " + e.what());
    } catch (const OracleError& e) {
      throw OracleError("oracle line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::map<std::string, ClosedWorldOracle> load_oracle_worlds(const std::string& path) {
  return parse_oracle_worlds(text::read_file(path));
}

// -------------------------------------------------------------- labels

std::string_view to_string(Label label) {
  switch (label) {
    case Label::MakesSense: return "MakesSense";
    case Label::SometimesMakesSense: return "SometimesMakesSense";
    case Label::DoesNotMakeSenseOrIncorrect: return "DoesNotMakeSenseOrIncorrect";
    case Label::UnrelatedOrInsufficient: return "UnrelatedOrInsufficient";
    case Label::Unfamiliar: return "Unfamiliar";
  }
  return "";
}

std::string_view option_text(Label label) {
  switch (label) {
    case Label::MakesSense: return "Makes sense";
    case Label::SometimesMakesSense: return "Sometimes makes sense";
    case Label::DoesNotMakeSenseOrIncorrect: return "Does not make sense or incorrect";
    case Label::UnrelatedOrInsufficient:
      return "The first part and the second part are not related; or not enough information to judge";
    case Label::Unfamiliar: return "Unfamiliar to me to judge";
  }
  return "";
}

std::optional<Label> parse_label(std::string_view s) {
  const std::string t = text::trim(s);
  for (size_t i = 0; i < kLabelOptions.size(); ++i) {
    if (t == to_string(kLabelOptions[i]) || t == std::to_string(i + 1)) return kLabelOptions[i];
  }
  return std::nullopt;
}

Verdict map_label(Label label) {
  switch (label) {
    case Label::MakesSense:
    case Label::SometimesMakesSense: return Verdict::Correct;
    case Label::DoesNotMakeSenseOrIncorrect:
    case Label::UnrelatedOrInsufficient: return Verdict::Incorrect;
    case Label::Unfamiliar: return Verdict::Unfamiliar;
  }
  return Verdict::Unfamiliar;
}

json AnnotationRecord::to_json() const {
  return json{{"answer_id", answer_id}, {"annotator_id", annotator_id}, {"label", to_string(label)}, {"timestamp", timestamp}};
}

AnnotationRecord AnnotationRecord::from_json(const json& j) {
  AnnotationRecord r;
  r.answer_id = j.at("answer_id").get<std::string>();
  r.annotator_id = j.at("annotator_id").get<std::string>();
  const auto& lab = j.at("label");
  auto parsed = parse_label(lab.is_string() ? lab.get<std::string>() : lab.dump());
  if (!parsed) throw std::invalid_argument("unknown label " + lab.dump());
  r.label = *parsed;
  r.timestamp = j.value("timestamp", "");
  return r;
}

std::vector<AnnotationRecord> load_annotations(const std::string& path) {
  std::vector<AnnotationRecord> out;
  std::ifstream in(path);
  if (!in) return out;
  std::string line;
  while (std::getline(in, line)) {
    if (text::trim(line).empty()) continue;
    out.push_back(AnnotationRecord::from_json(json::parse(line)));
  }
  return out;
}

// ------------------------------------------------------------------ alpha

ReliabilityReport krippendorff_alpha_nominal(const std::vector<std::vector<int>>& units, int categories) {
  if (categories < 1) throw std::invalid_argument("need at least one category");
  const auto k = static_cast<size_t>(categories);
  std::vector<double> coincidence(k * k, 0.0);
  ReliabilityReport rep;
  std::vector<double> counts(k);
  for (const auto& unit : units) {
    if (unit.size() < 2) continue;
    std::fill(counts.begin(), counts.end(), 0.0);
    for (int v : unit) {
      if (v < 0 || v >= categories) throw std::invalid_argument("category index out of range");
      counts[static_cast<size_t>(v)] += 1.0;
    }
    const double m = static_cast<double>(unit.size());
    for (size_t c = 0; c < k; ++c) {
      for (size_t d = 0; d < k; ++d) {
        coincidence[c * k + d] += counts[c] * (counts[d] - (c == d ? 1.0 : 0.0)) / (m - 1.0);
      }
    }
    ++rep.n_units;
    rep.n_pairable_values += unit.size();
  }
  if (rep.n_units == 0) throw UndefinedAlpha("Krippendorff's alpha is undefined: no unit has two or more labels");

  std::vector<double> marginal(k, 0.0);
  for (size_t c = 0; c < k; ++c) {
    for (size_t d = 0; d < k; ++d) marginal[c] += coincidence[c * k + d];
  }
  const double n = static_cast<double>(rep.n_pairable_values);
  double observed = 0.0;
  double expected = 0.0;
  for (size_t c = 0; c < k; ++c) {
    for (size_t d = 0; d < k; ++d) {
      if (c == d) continue;
      observed += coincidence[c * k + d];
      expected += marginal[c] * marginal[d];
    }
  }
  if (expected == 0.0) {
    rep.alpha = 1.0;
    rep.degenerate = true;
    rep.warning = "all pairable values fall in one category; alpha set to 1.0 by convention";
  } else {
    rep.alpha = 1.0 - (n - 1.0) * observed / expected;
  }
  rep.pass = rep.alpha >= kAlphaThreshold;
  return rep;
}

ReliabilityReport krippendorff_alpha(const std::vector<AnnotationRecord>& records) {
  std::map<std::string, std::map<std::string, Label>> units;
  for (const auto& r : records) {
    auto [it, inserted] = units[r.answer_id].emplace(r.annotator_id, r.label);
    if (!inserted && it->second != r.label) {
      throw std::invalid_argument("annotator " + r.annotator_id + " gave conflicting labels for " + r.answer_id);
    }
  }
  std::vector<std::vector<int>> raw;
  raw.reserve(units.size());
  for (const auto& [_, by_annotator] : units) {
    std::vector<int> values;
    for (const auto& [__, label] : by_annotator) values.push_back(static_cast<int>(label));
    raw.push_back(std::move(values));
  }
  return krippendorff_alpha_nominal(raw, static_cast<int>(kLabelOptions.size()));
}

// ------------------------------------------------------------ aggregation

std::optional<Verdict> plurality_verdict(const std::vector<Verdict>& votes) {
  if (votes.empty()) throw std::invalid_argument("answer has no verdicts");
  const auto correct = std::count(votes.begin(), votes.end(), Verdict::Correct);
  const auto incorrect = std::count(votes.begin(), votes.end(), Verdict::Incorrect);
  if (correct == 0 && incorrect == 0) return std::nullopt;
  return correct > incorrect ? Verdict::Correct : Verdict::Incorrect;
}

double AccuracyCell::percent() const {
  return denominator == 0 ? 0.0 : 100.0 * static_cast<double>(correct) / static_cast<double>(denominator);
}

std::string AccuracyCell::formatted() const {
  if (denominator == 0) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", percent());
  return buf;
}

AccuracyTables aggregate_accuracy(const std::vector<AnswerVotes>& answers) {
  AccuracyTables out;
  for (const auto& a : answers) {
    if (a.votes.empty()) throw std::invalid_argument("answer " + a.answer_id + " has no verdicts");
    const CellKey key{a.arm, a.form};
    auto& cell = out.per_answer[key];
    if (auto v = plurality_verdict(a.votes)) {
      ++cell.denominator;
      if (*v == Verdict::Correct) ++cell.correct;
    } else {
      ++cell.excluded;
    }
    auto& pooled = out.pooled[key];
    for (Verdict v : a.votes) {
      if (v == Verdict::Unfamiliar) {
        ++pooled.excluded;
        continue;
      }
      ++pooled.denominator;
      if (v == Verdict::Correct) ++pooled.correct;
    }
  }
  return out;
}

}  // namespace ncq
