#pragma once

#include <array>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace ncq {

// The five chain-of-thought steps, in the order they appear in an answer.
enum class Section { StandardQuestion, StandardReasoning, StandardAnswer, NegationLogic, FinalAnswer };

inline constexpr std::array<Section, 5> kSectionOrder = {
    Section::StandardQuestion, Section::StandardReasoning, Section::StandardAnswer,
    Section::NegationLogic, Section::FinalAnswer};

// Surface label without the trailing colon, e.g. "Negation logic".
std::string_view label(Section s);
// Machine key used in JSON, e.g. "negation_logic".
std::string_view key(Section s);
Section section_from_key(std::string_view k);

inline constexpr std::string_view kQuestionLabel = "Question";

using SectionMap = std::vector<std::pair<Section, std::string>>;

enum class PromptStrategy { FewShot, CoTFull, CoTNoNegationLogic, CoTStandard };

inline constexpr std::array<PromptStrategy, 4> kStrategies = {
    PromptStrategy::FewShot, PromptStrategy::CoTFull, PromptStrategy::CoTNoNegationLogic,
    PromptStrategy::CoTStandard};

std::string_view to_string(PromptStrategy s);
PromptStrategy parse_strategy(std::string_view s);

// Sections an exemplar of this strategy must carry, in canonical order.
std::vector<Section> required_sections(PromptStrategy s);

}  // namespace ncq
