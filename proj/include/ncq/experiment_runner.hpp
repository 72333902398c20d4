#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ncq/evaluation.hpp"
#include "ncq/format.hpp"
#include "ncq/llm_gateway.hpp"
#include "ncq/run_record.hpp"
#include "ncq/triple_store.hpp"

namespace ncq {

/// One experimental configuration of the ablation.
struct Arm {
  std::string_view name;
  std::string_view display;
  PromptStrategy negated_strategy;
  PromptStrategy standard_strategy;
  bool filter;

  PromptStrategy strategy_for(QuestionForm form) const {
    return form == QuestionForm::Standard ? standard_strategy : negated_strategy;
  }
};

inline constexpr std::array<Arm, 4> kArms = {{
    {"Ours", "Ours", PromptStrategy::CoTFull, PromptStrategy::CoTStandard, true},
    {"Ours-wo-pp", "Ours-wo-pp", PromptStrategy::CoTFull, PromptStrategy::CoTStandard, false},
    {"Ours-wo-nl-pp", "Ours-wo-nl-pp", PromptStrategy::CoTNoNegationLogic, PromptStrategy::CoTStandard, false},
    {"FewShot", "Few-shot", PromptStrategy::FewShot, PromptStrategy::FewShot, false},
}};

const Arm& arm_by_name(std::string_view name);
std::vector<std::string> parse_arm_list(std::string_view comma_separated);

int max_tokens_for(PromptStrategy strategy);

class RunError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::string triples_path;
  TripleFormat triples_format = TripleFormat::Tsv;
  SampleSpec sample;
  std::vector<std::string> arms = {"Ours", "Ours-wo-pp", "Ours-wo-nl-pp", "FewShot"};
  int responses_per_question = 3;
  BackendSpec backend;
  // Empty paths select the bundled assets.
  std::string prompt_assets_dir;
  std::string assessment_assets_dir;
  std::string templates_path;
  std::string refusal_markers_path;
  bool normalize_punctuation = false;
  int workers = 1;
  // "wall" stamps records with UTC time; "fixed" with the epoch so scripted
  // runs are byte-reproducible. "auto" picks fixed for the mock backend.
  std::string clock = "auto";

  void validate() const;
  /// Relative paths are resolved against `base_dir`.
  static RunConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  static RunConfig load(const std::string& path);
  nlohmann::json to_json() const;
};

struct RunHooks {
  // Overrides BackendSpec-based construction (tests inject backends).
  std::function<std::unique_ptr<Gateway>(const BackendSpec&)> make_gateway;
  // Called with each work item before it executes.
  std::function<void(const std::string& item_key)> on_item;
};

inline constexpr std::string_view kManifestFile = "manifest.json";
inline constexpr std::string_view kRecordsFile = "records.jsonl";
inline constexpr std::string_view kLabelsFile = "labels.jsonl";
inline constexpr std::string_view kAssessmentsFile = "assessments.jsonl";

struct RunSummary {
  std::filesystem::path dir;
  std::string run_id;
  size_t items_total = 0;
  size_t items_complete = 0;
  size_t items_executed = 0;
  size_t records_written = 0;
  bool complete = false;
};

/// Samples, verbalizes both forms, runs every arm and persists manifest +
/// append-only records under `out_dir`. Refuses a directory that already
/// holds a manifest.
RunSummary run_experiment(const RunConfig& config, const std::filesystem::path& out_dir, const RunHooks& hooks = {});

/// Executes only incomplete work items. Refuses a corrupt manifest, a
/// records file whose line count disagrees with it, or changed assets.
RunSummary resume_run(const std::filesystem::path& run_dir, const RunHooks& hooks = {},
                      const std::optional<BackendSpec>& backend_override = std::nullopt);

nlohmann::json read_manifest(const std::filesystem::path& run_dir);
std::vector<RunRecord> read_records(const std::filesystem::path& run_dir);

/// Final attempt per answer slot, in file order, with `assess` overrides applied.
std::vector<RunRecord> final_answers(const std::filesystem::path& run_dir);

/// Re-runs the self-assessment filter over the final answers of `arms`
/// (default: arms with filtering on) and appends verdicts to
/// assessments.jsonl; records.jsonl is left untouched. Returns the number assessed.
size_t reassess_run(const std::filesystem::path& run_dir, Gateway& gateway,
                    const std::vector<std::string>& arms = {});

// ------------------------------------------------------------------ report

enum class LabelSource { Oracle, Annotations };

struct ReportCell {
  AccuracyCell headline;  // retained answers, plurality per answer
  AccuracyCell unfiltered;  // every answer, ignoring the filter
  AccuracyCell pooled;  // retained answers, every vote counted
  size_t answers = 0;
  size_t retained = 0;
  size_t dropped = 0;
  size_t no_answer = 0;
  size_t salvaged = 0;
};

struct PublishedReference {
  std::string_view arm;
  std::optional<double> standard;
  std::optional<double> negated;
  std::optional<double> ablation;
};

// Reference percentages printed next to new runs for comparison only.
inline constexpr std::array<PublishedReference, 4> kPublishedReference = {{
    {"Ours", 88.1, 89.8, 89.8},
    {"Ours-wo-pp", std::nullopt, std::nullopt, 89.0},
    {"Ours-wo-nl-pp", std::nullopt, std::nullopt, 86.0},
    {"FewShot", 88.7, 78.7, 78.7},
}};

struct Report {
  std::string run_id;
  LabelSource source = LabelSource::Oracle;
  std::vector<std::string> arms;
  std::map<CellKey, ReportCell> cells;
  std::optional<ReliabilityReport> reliability;
  std::string reliability_error;
  std::vector<std::string> notes;

  nlohmann::json to_json() const;
  std::string to_text() const;
};

/// Recomputes every table from records (and labels or oracle worlds); nothing
/// is cached. Throws RunError when a retained answer has no label source.
Report export_report(const std::filesystem::path& run_dir, LabelSource source,
                     const std::string& oracle_path = {});

}  // namespace ncq
