#include <algorithm>
#include <cstdio>
#include <set>
#include <sstream>

#include "ncq/experiment_runner.hpp"
#include "ncq/text.hpp"

namespace ncq {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const PublishedReference* reference_for(std::string_view arm) {
  for (const auto& r : kPublishedReference) {
    if (r.arm == arm) return &r;
  }
  return nullptr;
}

std::string fmt_ref(const std::optional<double>& v) {
  if (!v) return "-";
  char buf[16];
  std::snprintf(buf, sizeof buf, "%.1f", *v);
  return buf;
}

json cell_json(const AccuracyCell& c) {
  return json{{"correct", c.correct},
              {"denominator", c.denominator},
              {"excluded", c.excluded},
              {"percent", c.formatted()}};
}

std::string pad(std::string s, size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

}  // namespace

Report export_report(const fs::path& run_dir, LabelSource source, const std::string& oracle_path) {
  const json manifest = read_manifest(run_dir);
  Report report;
  report.run_id = manifest["run_id"];
  report.source = source;
  for (const auto& a : manifest["config"]["arms"]) report.arms.push_back(a.get<std::string>());
  const auto finals = final_answers(run_dir);

  std::map<std::string, ClosedWorldOracle> worlds;
  std::map<std::string, std::vector<Verdict>> annotated;
  if (source == LabelSource::Oracle) {
    if (oracle_path.empty()) throw RunError("oracle evaluation needs an oracle worlds file");
    worlds = load_oracle_worlds(oracle_path);
  } else {
    const auto labels = load_annotations((run_dir / kLabelsFile).string());
    std::set<std::pair<std::string, std::string>> seen;
    for (const auto& l : labels) {
      if (!seen.insert({l.answer_id, l.annotator_id}).second) continue;
      annotated[l.answer_id].push_back(map_label(l.label));
    }
    try {
      report.reliability = krippendorff_alpha(labels);
    } catch (const UndefinedAlpha& e) {
      report.reliability_error = e.what();
    }
  }

  std::vector<AnswerVotes> retained_votes;
  std::vector<AnswerVotes> all_votes;
  size_t unlabeled_dropped = 0;
  for (const auto& r : finals) {
    const Arm& arm = arm_by_name(r.arm);
    const bool retained = !arm.filter || r.retained();
    auto& cell = report.cells[{r.arm, r.form}];
    ++cell.answers;
    ++(retained ? cell.retained : cell.dropped);
    if (r.no_answer) ++cell.no_answer;
    if (r.salvaged) ++cell.salvaged;

    AnswerVotes votes{r.answer_id(), r.arm, r.form, {}};
    if (source == LabelSource::Oracle) {
      auto it = worlds.find(r.triple_id);
      if (it != worlds.end()) {
        votes.votes.push_back(r.no_answer ? Verdict::Incorrect : judge_against_oracle(r.final_answer, r.form, it->second));
      }
    } else if (auto it = annotated.find(r.answer_id()); it != annotated.end()) {
      votes.votes = it->second;
    } else if (r.no_answer) {
      // No-answer completions are not sent to annotators; they count as wrong.
      votes.votes.push_back(Verdict::Incorrect);
    }
    if (votes.votes.empty()) {
      if (retained) throw RunError("no labels for retained answer " + r.answer_id());
      ++unlabeled_dropped;
      continue;
    }
    if (retained) retained_votes.push_back(votes);
    all_votes.push_back(std::move(votes));
  }

  const auto headline = aggregate_accuracy(retained_votes);
  const auto unfiltered = aggregate_accuracy(all_votes);
  for (auto& [key, cell] : report.cells) {
    if (auto it = headline.per_answer.find(key); it != headline.per_answer.end()) cell.headline = it->second;
    if (auto it = headline.pooled.find(key); it != headline.pooled.end()) cell.pooled = it->second;
    if (auto it = unfiltered.per_answer.find(key); it != unfiltered.per_answer.end()) cell.unfiltered = it->second;
  }

  report.notes.push_back("per-answer verdict: plurality of Correct vs Incorrect labels, Unfamiliar ignored, ties Incorrect");
  report.notes.push_back("answers with only Unfamiliar labels are excluded from the denominator");
  report.notes.push_back("headline counts retained answers only; 'all' counts every answer regardless of the filter");
  if (unlabeled_dropped > 0) {
    report.notes.push_back(std::to_string(unlabeled_dropped) + " filtered-out answers have no labels and are missing from 'all'");
  }
  if (report.reliability && !report.reliability->pass) {
    report.notes.push_back("Krippendorff's alpha is below 0.667: results are NOT marked reliable");
  }
  if (report.reliability && report.reliability->degenerate) report.notes.push_back(report.reliability->warning);
  if (!report.reliability_error.empty()) report.notes.push_back(report.reliability_error);
  return report;
}

json Report::to_json() const {
  json cells_json = json::array();
  for (const auto& arm : arms) {
    for (QuestionForm f : kQuestionForms) {
      auto it = cells.find({arm, f});
      if (it == cells.end()) continue;
      const auto& c = it->second;
      const auto* ref = reference_for(arm);
      std::optional<double> published;
      if (ref) published = f == QuestionForm::Standard ? ref->standard : ref->negated;
      cells_json.push_back({{"arm", arm},
                            {"form", to_string(f)},
                            {"headline", cell_json(c.headline)},
                            {"all", cell_json(c.unfiltered)},
                            {"pooled", cell_json(c.pooled)},
                            {"answers", c.answers},
                            {"retained", c.retained},
                            {"dropped", c.dropped},
                            {"no_answer", c.no_answer},
                            {"salvaged", c.salvaged},
                            {"reference", published ? json(fmt_ref(published)) : json(nullptr)}});
    }
  }
  json ablation = json::array();
  for (const auto& arm : arms) {
    auto it = cells.find({arm, QuestionForm::NegatedComplementary});
    const auto* ref = reference_for(arm);
    ablation.push_back({{"arm", arm},
                        {"negated", it == cells.end() ? json(nullptr) : cell_json(it->second.headline)},
                        {"reference", ref && ref->ablation ? json(fmt_ref(ref->ablation)) : json(nullptr)}});
  }
  json j{{"run_id", run_id},
         {"labels", source == LabelSource::Oracle ? "oracle" : "annotations"},
         {"accuracy", cells_json},
         {"ablation", ablation},
         {"notes", notes}};
  if (reliability) {
    j["reliability"] = {{"alpha", reliability->alpha},
                        {"n_units", reliability->n_units},
                        {"n_pairable_values", reliability->n_pairable_values},
                        {"reliable", reliability->pass},
                        {"threshold", kAlphaThreshold}};
  } else if (!reliability_error.empty()) {
    j["reliability"] = {{"error", reliability_error}};
  }
  return j;
}

std::string Report::to_text() const {
  std::ostringstream out;
  out << "Run " << run_id << " (labels: " << (source == LabelSource::Oracle ? "oracle" : "annotations") << ")\n\n";
  out << "Accuracy by method and question form (%), published reference in brackets\n";
  out << pad("Method", 16) << pad("Standard", 22) << pad("Negated Complementary", 22) << "All answers (std / neg)\n";
  for (const auto& arm : arms) {
    const auto* ref = reference_for(arm);
    std::string line = pad(std::string(arm_by_name(arm).display), 16);
    std::string all;
    for (QuestionForm f : kQuestionForms) {
      auto it = cells.find({arm, f});
      const std::string v = it == cells.end() ? "n/a" : it->second.headline.formatted();
      const auto r = ref ? (f == QuestionForm::Standard ? ref->standard : ref->negated) : std::nullopt;
      line += pad(v + " [" + fmt_ref(r) + "]", 22);
      all += (all.empty() ? "" : " / ") + (it == cells.end() ? std::string("n/a") : it->second.unfiltered.formatted());
    }
    out << line << all << "\n";
  }
  out << "\nAblation, negated complementary questions (%)\n";
  out << pad("Method", 16) << pad("Neg. Comp.", 14) << "Published\n";
  for (const auto& arm : arms) {
    auto it = cells.find({arm, QuestionForm::NegatedComplementary});
    const auto* ref = reference_for(arm);
    out << pad(std::string(arm_by_name(arm).display), 16)
        << pad(it == cells.end() ? "n/a" : it->second.headline.formatted(), 14)
        << fmt_ref(ref ? ref->ablation : std::nullopt) << "\n";
  }
  out << "\nCounts\n";
  for (const auto& [key, c] : cells) {
    out << "  " << pad(key.first, 14) << pad(std::string(to_string(key.second)), 10) << "answers " << c.answers
        << ", retained " << c.retained << ", dropped " << c.dropped << ", no answer " << c.no_answer
        << ", salvaged " << c.salvaged << ", pooled " << c.pooled.formatted() << "\n";
  }
  if (reliability) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f", reliability->alpha);
    out << "\nKrippendorff's alpha: " << buf << " over " << reliability->n_units << " units ("
        << (reliability->pass ? "reliable" : "NOT reliable") << ", threshold 0.667)\n";
  }
  if (!notes.empty()) {
    out << "\nNotes\n";
    for (const auto& n : notes) out << "  - " << n << "\n";
  }
  return out.str();
}

}  // namespace ncq
