#include "ncq/run_record.hpp"

namespace ncq {

using nlohmann::json;

std::string RunRecord::answer_id() const {
  return run_id + "/" + triple_id + "/" + std::string(to_string(form)) + "/" + arm + "/" + std::to_string(sample_index);
}

json RunRecord::to_json() const {
  json j;
  j["run_id"] = run_id;
  j["triple_id"] = triple_id;
  j["relation"] = relation;
  j["head"] = head;
  j["form"] = to_string(form);
  j["arm"] = arm;
  j["strategy"] = strategy;
  j["question"] = question;
  j["sample_index"] = sample_index;
  j["attempt"] = attempt;
  j["temperature"] = temperature;
  j["prompt_hash"] = prompt_hash;
  j["raw_completion"] = raw_completion;
  j["final_answer"] = final_answer;
  j["no_answer"] = no_answer;
  j["salvaged"] = salvaged;
  if (filter) {
    j["filter"] = {{"keep", filter->keep}, {"parsed", filter->parsed}, {"raw_judgment", filter->raw_judgment}};
  } else {
    j["filter"] = nullptr;
  }
  j["timestamp"] = timestamp;
  return j;
}

RunRecord RunRecord::from_json(const json& j) {
  RunRecord r;
  r.run_id = j.at("run_id").get<std::string>();
  r.triple_id = j.at("triple_id").get<std::string>();
  r.relation = j.value("relation", "");
  r.head = j.value("head", "");
  r.form = parse_question_form(j.at("form").get<std::string>());
  r.arm = j.at("arm").get<std::string>();
  r.strategy = j.value("strategy", "");
  r.question = j.value("question", "");
  r.sample_index = j.at("sample_index").get<int>();
  r.attempt = j.at("attempt").get<int>();
  r.temperature = j.value("temperature", 0.7);
  r.prompt_hash = j.value("prompt_hash", "");
  r.raw_completion = j.value("raw_completion", "");
  r.final_answer = j.value("final_answer", "");
  r.no_answer = j.value("no_answer", false);
  r.salvaged = j.value("salvaged", false);
  if (j.contains("filter") && j["filter"].is_object()) {
    const auto& f = j["filter"];
    r.filter = FilterVerdict{f.value("keep", true), f.value("parsed", false), f.value("raw_judgment", "")};
  }
  r.timestamp = j.value("timestamp", "");
  return r;
}

}  // namespace ncq
