#pragma once

#include <array>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace ncq {

/// The ten relation types the harness targets. Any other name is an
/// extension relation and is usable only once a template is registered.
inline constexpr std::array<std::string_view, 10> kCanonicalRelations = {
    "xWant",      "xReact",  "oWant",   "CapableOf",  "Desires",
    "HinderedBy", "isBefore", "isAfter", "AtLocation", "HasSubEvent"};

bool is_canonical_relation(std::string_view name);

struct Relation {
  std::string name;

  friend auto operator<=>(const Relation&, const Relation&) = default;
};

struct Triple {
  std::string id;
  std::string head;
  Relation relation;
  std::string tail;

  friend bool operator==(const Triple&, const Triple&) = default;
};

enum class QuestionForm { Standard, NegatedComplementary };

inline constexpr std::array<QuestionForm, 2> kQuestionForms = {QuestionForm::Standard,
                                                               QuestionForm::NegatedComplementary};

std::string_view to_string(QuestionForm form);
// Accepts "standard"/"negated" plus the long name "negated_complementary" and "nc".
QuestionForm parse_question_form(std::string_view s);

inline constexpr std::string_view kHeadPlaceholder = "[head]";

struct QuestionTemplate {
  Relation relation;
  QuestionForm form;
  std::string pattern;
};

struct VerbalizedQuestion {
  std::string triple_id;
  QuestionForm form;
  std::string text;
  Relation relation;
};

class TemplateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

bool has_negation_token(std::string_view text);

struct VerbalizeOptions {
  // Appends '?' to renderings that lack terminal punctuation (the shipped
  // HasSubEvent negated pattern has none).
  bool normalize_punctuation = false;
};

/// Registry of (relation, form) -> question pattern. Immutable after setup;
/// lookups are safe from any thread.
class TemplateRegistry {
 public:
  TemplateRegistry() = default;

  /// Parses the plain-text asset: `relation<TAB>form<TAB>pattern` per line,
  /// '#' comments and blank lines ignored.
  static TemplateRegistry parse(std::string_view text);
  static TemplateRegistry from_file(const std::string& path);
  /// Templates bundled with the repository (assets/templates.tsv).
  static TemplateRegistry defaults();

  /// Throws TemplateError if the pattern lacks the placeholder, or violates
  /// the negation-token rule for its form, or the pair is already registered.
  void register_template(QuestionTemplate tmpl);

  bool has_template(std::string_view relation) const;
  /// Canonical names are always recognized; others only when registered.
  bool knows_relation(std::string_view relation) const;
  std::vector<std::string> relations() const;

  const QuestionTemplate& template_for(const Relation& relation, QuestionForm form) const;

  VerbalizedQuestion verbalize(const Triple& triple, QuestionForm form,
                               const VerbalizeOptions& opts = {}) const;

  /// SHA-256 over the registered templates in key order.
  std::string version_hash() const;

 private:
  std::map<std::pair<std::string, QuestionForm>, QuestionTemplate> templates_;
};

}  // namespace ncq
