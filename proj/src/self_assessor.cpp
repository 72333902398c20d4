#include "ncq/self_assessor.hpp"

#include <nlohmann/json.hpp>

#include "ncq/assets.hpp"
#include "ncq/text.hpp"

namespace ncq {

AssessmentAssets AssessmentAssets::load(const std::string& dir) {
  AssessmentAssets assets;
  const std::string instructions = text::read_file(dir + "/instructions.txt");
  const std::string exemplars = text::read_file(dir + "/exemplars.jsonl");
  assets.instructions = text::trim(instructions);
  for (const auto& line : text::split_lines(exemplars)) {
    if (text::trim(line).empty()) continue;
    const auto j = nlohmann::json::parse(line);
    AssessmentExemplar ex;
    ex.question = j.at("question").get<std::string>();
    ex.answer = j.at("answer").get<std::string>();
    const auto verdict = text::to_lower(j.at("verdict").get<std::string>());
    if (verdict != "correct" && verdict != "incorrect") {
      throw AssessmentError("assessment exemplar verdict must be Correct or Incorrect");
    }
    ex.correct = verdict == "correct";
    assets.exemplars.push_back(std::move(ex));
  }
  assets.version_hash = text::sha256_hex(instructions + "\n--\n" + exemplars);
  return assets;
}

AssessmentAssets AssessmentAssets::defaults() {
  return load(asset_path("assessment"));
}

std::string build_assessment_prompt(const std::string& question, const std::string& answer,
                                    const AssessmentAssets& assets) {
  if (assets.exemplars.size() != kAssessmentExemplars) {
    throw AssessmentError("assessment bundle needs exactly " + std::to_string(kAssessmentExemplars) +
                          " exemplars, has " + std::to_string(assets.exemplars.size()));
  }
  std::string out = assets.instructions;
  for (const auto& ex : assets.exemplars) {
    out += "\n\nQuestion: " + ex.question + "\nAnswer: " + ex.answer +
           "\nVerdict: " + (ex.correct ? "Correct" : "Incorrect");
  }
  out += "\n\nQuestion: " + question + "\nAnswer: " + answer + "\nVerdict:";
  return out;
}

AssessmentVerdict parse_verdict(const std::string& raw_judgment) {
  AssessmentVerdict v;
  v.raw_judgment = raw_judgment;
  std::string body = text::trim(raw_judgment);
  if (text::starts_with_icase(body, "Verdict:")) body = body.substr(8);
  const auto words = text::words(body);
  if (!words.empty()) {
    if (words.front() == "correct") {
      v.keep = true;
      v.parsed = true;
    } else if (words.front() == "incorrect") {
      v.keep = false;
      v.parsed = true;
    }
  }
  return v;
}

AssessmentVerdict assess(const std::string& question, const std::string& answer, Gateway& gateway,
                         const AssessmentAssets& assets, const std::string& question_id, int answer_index) {
  CompletionRequest req;
  req.prompt = build_assessment_prompt(question, answer, assets);
  req.temperature = kAssessmentTemperature;
  req.max_tokens = kAssessmentMaxTokens;
  req.n = 1;
  auto result = gateway.complete(req);
  auto v = parse_verdict(result.texts.front());
  v.question_id = question_id;
  v.answer_index = answer_index;
  return v;
}

std::vector<RunRecord> filter_answers(std::vector<RunRecord>& records, Gateway& gateway,
                                      const AssessmentAssets& assets) {
  std::vector<RunRecord> kept;
  for (auto& r : records) {
    AssessmentVerdict v = r.no_answer ? parse_verdict("")
                                      : assess(r.question, r.final_answer, gateway, assets, r.triple_id, r.sample_index);
    r.filter = FilterVerdict{v.keep, v.parsed, v.raw_judgment};
    if (v.keep) kept.push_back(r);
  }
  return kept;
}

}  // namespace ncq
