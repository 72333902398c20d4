#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ncq/format.hpp"

namespace ncq {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One "<Label>: <text>" line per section, joined with '\n'. Labels must be
/// unique and in canonical order; text must be non-empty, single-line and
/// already trimmed.
std::string render_exemplar(const SectionMap& sections);

/// Case-insensitive exact-match list of refusal phrases ("I don't know", ...).
class RefusalMarkers {
 public:
  RefusalMarkers() = default;
  explicit RefusalMarkers(std::vector<std::string> markers);

  // One marker per line; '#' comments and blank lines skipped.
  static RefusalMarkers parse(std::string_view content);
  static RefusalMarkers from_file(const std::string& path);
  // The bundled assets/refusal_markers.txt, loaded once.
  static const RefusalMarkers& defaults();

  bool matches(std::string_view answer) const;
  const std::vector<std::string>& markers() const { return markers_; }

 private:
  std::vector<std::string> markers_;  // normalized
};

struct ParsedAnswer {
  SectionMap sections;
  std::string final_answer;
  bool no_answer = true;
  // An answer was recovered although the completion did not follow the
  // strategy's full section layout.
  bool salvaged = false;
  std::string raw;
};

// Trims whitespace and trailing periods. Idempotent.
std::string strip_answer(std::string_view s);

/// Total over arbitrary text. CoT strategies take the text after the last
/// "Answer:" label; FewShot takes the first line. Parsing stops at a
/// "Question:" line that follows any section (the model starting a new item).
ParsedAnswer parse_completion(std::string_view completion, PromptStrategy strategy,
                              const RefusalMarkers& markers = RefusalMarkers::defaults());

bool is_no_answer(const ParsedAnswer& parsed, const RefusalMarkers& markers = RefusalMarkers::defaults());

/// A rendered prompt split back into its parts.
struct ParsedPromptBlock {
  std::string question;
  SectionMap sections;
};

struct ParsedPrompt {
  std::string preamble;
  std::vector<ParsedPromptBlock> exemplars;
  std::optional<std::string> target_question;
};

ParsedPrompt parse_prompt(std::string_view rendered);

}  // namespace ncq
