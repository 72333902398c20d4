#include "ncq/format.hpp"

#include <stdexcept>

namespace ncq {

std::string_view label(Section s) {
  switch (s) {
    case Section::StandardQuestion: return "Standard question";
    case Section::StandardReasoning: return "Reasoning";
    case Section::StandardAnswer: return "Standard answer";
    case Section::NegationLogic: return "Negation logic";
    case Section::FinalAnswer: return "Answer";
  }
  return "";
}

std::string_view key(Section s) {
  switch (s) {
    case Section::StandardQuestion: return "standard_question";
    case Section::StandardReasoning: return "standard_reasoning";
    case Section::StandardAnswer: return "standard_answer";
    case Section::NegationLogic: return "negation_logic";
    case Section::FinalAnswer: return "final_answer";
  }
  return "";
}

Section section_from_key(std::string_view k) {
  for (Section s : kSectionOrder) {
    if (key(s) == k) return s;
  }
  throw std::invalid_argument("unknown section key: " + std::string(k));
}

std::string_view to_string(PromptStrategy s) {
  switch (s) {
    case PromptStrategy::FewShot: return "FewShot";
    case PromptStrategy::CoTFull: return "CoTFull";
    case PromptStrategy::CoTNoNegationLogic: return "CoTNoNegationLogic";
    case PromptStrategy::CoTStandard: return "CoTStandard";
  }
  return "";
}

PromptStrategy parse_strategy(std::string_view s) {
  for (auto st : kStrategies) {
    if (to_string(st) == s) return st;
  }
  throw std::invalid_argument("unknown prompt strategy: " + std::string(s));
}

std::vector<Section> required_sections(PromptStrategy s) {
  switch (s) {
    case PromptStrategy::FewShot: return {};
    case PromptStrategy::CoTFull: return {kSectionOrder.begin(), kSectionOrder.end()};
    case PromptStrategy::CoTNoNegationLogic:
    case PromptStrategy::CoTStandard: return {Section::StandardReasoning, Section::FinalAnswer};
  }
  return {};
}

}  // namespace ncq
