#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "ncq/format.hpp"
#include "ncq/verbalizer.hpp"

namespace ncq {

inline constexpr size_t kExemplarsPerPrompt = 5;

class PromptError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One worked item from the asset bundle, holding both question forms and all
/// five reasoning steps. Strategies project it down to what they show.
struct ExemplarSource {
  std::string negated_question;
  std::string standard_question;
  std::string standard_reasoning;
  std::string standard_answer;
  std::string negation_logic;
  std::string negated_answer;
  std::string origin;  // file it came from
};

struct Exemplar {
  std::string question;
  SectionMap sections;
  std::string answer;  // FewShot only
};

/// Preambles plus ordered exemplar items. Immutable once loaded.
struct PromptAssets {
  std::string name;
  std::string version;
  std::string negation_preamble;  // used for negated-form prompts
  std::string standard_preamble;  // used for standard-form prompts
  std::vector<ExemplarSource> items;
  std::string version_hash;  // SHA-256 over every file the bundle reads

  /// Reads `<dir>/manifest.json`, the two preamble files and the exemplar
  /// files it lists, in listed order.
  static PromptAssets load(const std::string& dir);
  static PromptAssets defaults();
};

ExemplarSource parse_exemplar_source(const std::string& content, const std::string& origin);

Exemplar project_exemplar(const ExemplarSource& src, PromptStrategy strategy, QuestionForm form);

struct ValidationFinding {
  enum class Kind { MissingSection, ExtraSection, EmptyText, OutOfOrder };
  Kind kind;
  Section section;
  std::string message;
};

/// Empty iff the exemplar carries exactly the strategy's sections, in order,
/// with non-empty text.
std::vector<ValidationFinding> validate_exemplar(const Exemplar& exemplar, PromptStrategy strategy);

struct Prompt {
  PromptStrategy strategy;
  std::string preamble;
  std::vector<Exemplar> exemplars;
  VerbalizedQuestion target;
  std::string rendered;

  std::string hash() const;
};

/// CoTFull and CoTNoNegationLogic need a negated target, CoTStandard a
/// standard one; FewShot takes either and projects exemplars to match.
Prompt build_prompt(PromptStrategy strategy, const VerbalizedQuestion& question, const PromptAssets& assets);

}  // namespace ncq
