#pragma once

#include <array>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ncq/verbalizer.hpp"

namespace ncq {

enum class Verdict { Correct, Incorrect, Unfamiliar };
std::string_view to_string(Verdict v);

// ------------------------------------------------------- closed-world oracle

class OracleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A finite answer world for one question: universe U, valid answers V and
/// correct standard answers A, with A ⊆ V ⊆ U.
struct ClosedWorldOracle {
  std::string question_id;
  std::set<std::string> universe;
  std::set<std::string> valid;
  std::set<std::string> standard_correct;

  /// Throws OracleError unless A ⊆ V ⊆ U and U, V are non-empty.
  void validate() const;

  static ClosedWorldOracle from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

/// Lowercase, trim, strip terminal punctuation, collapse inner whitespace.
std::string normalize_answer(std::string_view answer);

/// Correct answers to the negated complementary question: V ∩ (U \ A).
std::set<std::string> nc_answer_set(const ClosedWorldOracle& oracle);

/// Standard: correct iff the normalized answer is in A. Negated: correct iff
/// it is in V \ A. "not <x>" with x in A is incorrect for both forms.
Verdict judge_against_oracle(std::string_view answer, QuestionForm form, const ClosedWorldOracle& oracle);

/// JSON-lines, one {"question_id", "U", "V", "A"} object per line; keyed by question_id.
std::map<std::string, ClosedWorldOracle> load_oracle_worlds(const std::string& path);
std::map<std::string, ClosedWorldOracle> parse_oracle_worlds(std::string_view content);

// -------------------------------------------------------------- human labels

enum class Label { MakesSense, SometimesMakesSense, DoesNotMakeSenseOrIncorrect, UnrelatedOrInsufficient, Unfamiliar };

inline constexpr std::array<Label, 5> kLabelOptions = {Label::MakesSense, Label::SometimesMakesSense,
                                                       Label::DoesNotMakeSenseOrIncorrect,
                                                       Label::UnrelatedOrInsufficient, Label::Unfamiliar};

std::string_view to_string(Label label);
// Wording shown to annotators.
std::string_view option_text(Label label);
// Accepts the enum name or the 1-based option number.
std::optional<Label> parse_label(std::string_view s);

Verdict map_label(Label label);

struct AnnotationRecord {
  std::string answer_id;
  std::string annotator_id;
  Label label = Label::Unfamiliar;
  std::string timestamp;

  nlohmann::json to_json() const;
  static AnnotationRecord from_json(const nlohmann::json& j);
};

std::vector<AnnotationRecord> load_annotations(const std::string& path);

// ------------------------------------------------------ Krippendorff's alpha

inline constexpr double kAlphaThreshold = 0.667;

class UndefinedAlpha : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ReliabilityReport {
  double alpha = 0.0;
  size_t n_units = 0;  // units with at least two labels
  size_t n_pairable_values = 0;
  bool pass = false;  // alpha >= kAlphaThreshold
  bool degenerate = false;
  std::string warning;
};

/// Nominal-level alpha from the coincidence matrix over the five label
/// categories. Records repeating an (answer, annotator) pair with the same
/// label count once; conflicting repeats throw std::invalid_argument. Throws
/// UndefinedAlpha when no unit has two labels.
ReliabilityReport krippendorff_alpha(const std::vector<AnnotationRecord>& records);

/// Same statistic over raw units of category indices in [0, categories).
ReliabilityReport krippendorff_alpha_nominal(const std::vector<std::vector<int>>& units, int categories);

// ------------------------------------------------------------- aggregation

struct AnswerVotes {
  std::string answer_id;
  std::string arm;
  QuestionForm form = QuestionForm::Standard;
  std::vector<Verdict> votes;
};

/// Plurality of Correct vs Incorrect ignoring Unfamiliar; ties are Incorrect.
/// nullopt when only Unfamiliar votes exist. Throws on an empty vote list.
std::optional<Verdict> plurality_verdict(const std::vector<Verdict>& votes);

struct AccuracyCell {
  size_t correct = 0;
  size_t denominator = 0;
  size_t excluded = 0;  // answers (or votes, when pooled) that were all Unfamiliar

  double percent() const;
  std::string formatted() const;  // one decimal, e.g. "90.0"; "n/a" when empty
  friend bool operator==(const AccuracyCell&, const AccuracyCell&) = default;
};

using CellKey = std::pair<std::string, QuestionForm>;

struct AccuracyTables {
  std::map<CellKey, AccuracyCell> per_answer;  // headline: plurality per answer
  std::map<CellKey, AccuracyCell> pooled;      // every Correct/Incorrect vote counted
};

/// Throws std::invalid_argument for an answer with no votes.
AccuracyTables aggregate_accuracy(const std::vector<AnswerVotes>& answers);

}  // namespace ncq
