#pragma once

#include <optional>
#include <string>
#include <tuple>

#include <nlohmann/json.hpp>

#include "ncq/verbalizer.hpp"

namespace ncq {

struct FilterVerdict {
  bool keep = true;
  bool parsed = false;  // false: judgment was unreadable and kept fail-open
  std::string raw_judgment;

  friend bool operator==(const FilterVerdict&, const FilterVerdict&) = default;
};

/// One completion attempt. Retries are separate records sharing
/// sample_index; the highest attempt is the answer that gets evaluated.
struct RunRecord {
  std::string run_id;
  std::string triple_id;
  std::string relation;
  std::string head;
  QuestionForm form = QuestionForm::Standard;
  std::string arm;
  std::string strategy;
  std::string question;
  int sample_index = 0;
  int attempt = 0;
  double temperature = 0.7;
  std::string prompt_hash;
  std::string raw_completion;
  std::string final_answer;
  bool no_answer = false;
  bool salvaged = false;
  std::optional<FilterVerdict> filter;
  std::string timestamp;

  using Key = std::tuple<std::string, QuestionForm, std::string, int, int>;
  Key key() const { return {triple_id, form, arm, sample_index, attempt}; }
  // Identifies the answer slot (all attempts of one sample).
  std::string answer_id() const;
  bool retained() const { return !filter || filter->keep; }

  nlohmann::json to_json() const;
  static RunRecord from_json(const nlohmann::json& j);

  friend bool operator==(const RunRecord&, const RunRecord&) = default;
};

}  // namespace ncq
