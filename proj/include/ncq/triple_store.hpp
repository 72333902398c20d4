#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ncq/verbalizer.hpp"

namespace ncq {

enum class TripleFormat { Tsv, JsonLines };

// ".jsonl"/".json" -> JsonLines, everything else -> Tsv.
TripleFormat format_from_path(std::string_view path);

struct TripleReject {
  size_t row = 0;  // 0-based line index in the source
  std::string reason;
  std::string raw;
};

struct LoadResult {
  std::vector<Triple> triples;
  std::vector<TripleReject> rejects;
};

/// Parses triples in file order. Rows with an empty head, a relation the
/// registry does not know, or a duplicate id go to `rejects`. Missing ids
/// become `<relation>:<row-index>`.
LoadResult parse_triples(std::string_view content, TripleFormat format, const TemplateRegistry& registry);
/// Throws std::runtime_error when the file cannot be read.
LoadResult load_triples(const std::string& path, TripleFormat format, const TemplateRegistry& registry);

void write_rejects_jsonl(const std::string& path, const std::vector<TripleReject>& rejects);
void write_triples_jsonl(const std::string& path, const std::vector<Triple>& triples);

struct SampleSpec {
  int per_relation_count = 10;
  std::uint64_t seed = 0;
  // Relations to draw from. Empty means every relation present in the store.
  std::vector<std::string> relations;
};

class SampleError : public std::runtime_error {
 public:
  SampleError(std::string relation, size_t available, size_t requested);
  const std::string& relation() const { return relation_; }
  size_t shortfall() const { return requested_ - available_; }

 private:
  std::string relation_;
  size_t available_;
  size_t requested_;
};

/// Draws per_relation_count triples per relation uniformly without
/// replacement. The result depends only on the set of triples and the seed,
/// not on input order, and is sorted by (relation, id).
std::vector<Triple> sample_triples(const std::vector<Triple>& store, const SampleSpec& spec);

}  // namespace ncq
