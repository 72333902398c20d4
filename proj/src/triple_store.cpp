#include "ncq/triple_store.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <map>
#include <random>
#include <set>

#include <nlohmann/json.hpp>

#include "ncq/text.hpp"

namespace ncq {

using nlohmann::json;

TripleFormat format_from_path(std::string_view path) {
  if (path.ends_with(".jsonl") || path.ends_with(".json")) return TripleFormat::JsonLines;
  return TripleFormat::Tsv;
}

namespace {

struct RawRow {
  std::string id;
  std::string head;
  std::string relation;
  std::string tail;
};

std::string check_row(const RawRow& r, const TemplateRegistry& registry) {
  if (text::trim(r.head).empty()) return "empty head";
  if (r.relation.empty()) return "empty relation";
  if (!registry.knows_relation(r.relation)) return "relation '" + r.relation + "' has no registered template";
  return {};
}

}  // namespace

LoadResult parse_triples(std::string_view content, TripleFormat format, const TemplateRegistry& registry) {
  LoadResult out;
  std::set<std::string> seen_ids;
  const auto lines = text::split_lines(content);
  for (size_t row = 0; row < lines.size(); ++row) {
    const std::string& line = lines[row];
    if (text::trim(line).empty()) continue;
    RawRow r;
    if (format == TripleFormat::Tsv) {
      auto cols = text::split(line, '\t');
      if (cols.size() < 2 || cols.size() > 3) {
        out.rejects.push_back({row, "expected 2 or 3 tab-separated columns", line});
        continue;
      }
      r.head = text::trim(cols[0]);
      r.relation = text::trim(cols[1]);
      if (cols.size() == 3) r.tail = text::trim(cols[2]);
    } else {
      json obj;
      try {
        obj = json::parse(line);
      } catch (const json::parse_error& e) {
        out.rejects.push_back({row, std::string("invalid JSON: ") + e.what(), line});
        continue;
      }
      auto get = [&obj](const char* key) -> std::string {
        auto it = obj.find(key);
        if (it == obj.end() || it->is_null()) return {};
        return it->is_string() ? it->get<std::string>() : it->dump();
      };
      if (!obj.is_object()) {
        out.rejects.push_back({row, "row is not a JSON object", line});
        continue;
      }
      r.id = get("id");
      r.head = text::trim(get("head"));
      r.relation = text::trim(get("relation"));
      r.tail = text::trim(get("tail"));
    }
    if (auto why = check_row(r, registry); !why.empty()) {
      out.rejects.push_back({row, why, line});
      continue;
    }
    if (r.id.empty()) r.id = r.relation + ":" + std::to_string(row);
    if (!seen_ids.insert(r.id).second) {
      out.rejects.push_back({row, "duplicate id '" + r.id + "'", line});
      continue;
    }
    out.triples.push_back(Triple{r.id, r.head, Relation{r.relation}, r.tail});
  }
  return out;
}

LoadResult load_triples(const std::string& path, TripleFormat format, const TemplateRegistry& registry) {
  return parse_triples(text::read_file(path), format, registry);
}

void write_rejects_jsonl(const std::string& path, const std::vector<TripleReject>& rejects) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const auto& r : rejects) {
    out << json{{"row", r.row}, {"reason", r.reason}, {"raw", r.raw}}.dump() << '\n';
  }
}

void write_triples_jsonl(const std::string& path, const std::vector<Triple>& triples) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const auto& t : triples) {
    out << json{{"id", t.id}, {"head", t.head}, {"relation", t.relation.name}, {"tail", t.tail}}.dump()
        << '\n';
  }
}

SampleError::SampleError(std::string relation, size_t available, size_t requested)
    : std::runtime_error("relation '" + relation + "' has " + std::to_string(available) +
                         " triples, " + std::to_string(requested) + " requested (short by " +
                         std::to_string(requested - available) + ")"),
      relation_(std::move(relation)),
      available_(available),
      requested_(requested) {}

namespace {

// Uniform integer in [0, bound) from raw mt19937_64 output. The standard
// distributions are implementation-defined, which would break cross-platform
// reproducibility of samples.
std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              (std::numeric_limits<std::uint64_t>::max() % bound);
  for (;;) {
    const std::uint64_t x = rng();
    if (x < limit) return x % bound;
  }
}

}  // namespace

std::vector<Triple> sample_triples(const std::vector<Triple>& store, const SampleSpec& spec) {
  if (spec.per_relation_count < 1) throw std::invalid_argument("per_relation_count must be >= 1");
  std::map<std::string, std::vector<const Triple*>> by_relation;
  for (const auto& t : store) by_relation[t.relation.name].push_back(&t);

  std::vector<std::string> wanted = spec.relations;
  if (wanted.empty()) {
    for (const auto& [name, _] : by_relation) wanted.push_back(name);
  }
  std::sort(wanted.begin(), wanted.end());
  wanted.erase(std::unique(wanted.begin(), wanted.end()), wanted.end());

  const auto k = static_cast<size_t>(spec.per_relation_count);
  for (const auto& rel : wanted) {
    const size_t have = by_relation.contains(rel) ? by_relation[rel].size() : 0;
    if (have < k) throw SampleError(rel, have, k);
  }

  std::vector<Triple> out;
  for (const auto& rel : wanted) {
    auto pool = by_relation[rel];
    std::sort(pool.begin(), pool.end(), [](const Triple* a, const Triple* b) { return a->id < b->id; });
    // FNV-1a over the relation name; std::hash is not stable across implementations.
    std::uint32_t name_mix = 2166136261u;
    for (unsigned char c : rel) name_mix = (name_mix ^ c) * 16777619u;
    std::seed_seq stable{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                         name_mix};
    std::mt19937_64 rng(stable);
    // Partial Fisher-Yates: the first k slots become the sample.
    for (size_t i = 0; i < k; ++i) {
      const size_t j = i + static_cast<size_t>(uniform_below(rng, pool.size() - i));
      std::swap(pool[i], pool[j]);
    }
    std::vector<const Triple*> chosen(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k));
    std::sort(chosen.begin(), chosen.end(), [](const Triple* a, const Triple* b) { return a->id < b->id; });
    for (const auto* t : chosen) out.push_back(*t);
  }
  return out;
}

}  // namespace ncq
