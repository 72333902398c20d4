#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "ncq/llm_gateway.hpp"
#include "ncq/run_record.hpp"

namespace ncq {

inline constexpr size_t kAssessmentExemplars = 5;
inline constexpr int kAssessmentMaxTokens = 10;

class AssessmentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AssessmentExemplar {
  std::string question;
  std::string answer;
  bool correct = true;
};

/// instructions.txt + exemplars.jsonl ({"question","answer","verdict"}).
struct AssessmentAssets {
  std::string instructions;
  std::vector<AssessmentExemplar> exemplars;
  std::string version_hash;

  static AssessmentAssets load(const std::string& dir);
  static AssessmentAssets defaults();
};

/// Instructions, the five exemplars each closed by "Verdict: Correct|Incorrect",
/// then the target pair with an empty verdict slot.
std::string build_assessment_prompt(const std::string& question, const std::string& answer,
                                    const AssessmentAssets& assets);

struct AssessmentVerdict {
  bool keep = true;
  bool parsed = false;
  std::string raw_judgment;
  std::string question_id;
  int answer_index = 0;
};

/// The first word after an optional "Verdict:" decides: "correct" keeps,
/// "incorrect" drops, anything else keeps (fail-open).
AssessmentVerdict parse_verdict(const std::string& raw_judgment);

/// Greedy (temperature 0) single completion.
AssessmentVerdict assess(const std::string& question, const std::string& answer, Gateway& gateway,
                         const AssessmentAssets& assets, const std::string& question_id = {},
                         int answer_index = 0);

/// Writes a verdict into every record and returns the kept ones in input
/// order. No-answer records are not sent to the model; their empty judgment
/// keeps them fail-open so they still count against accuracy.
std::vector<RunRecord> filter_answers(std::vector<RunRecord>& records, Gateway& gateway,
                                      const AssessmentAssets& assets);

}  // namespace ncq
