#include "ncq/experiment_runner.hpp"

#include <algorithm>
#include <atomic>
#include <ctime>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

#include "ncq/assets.hpp"
#include "ncq/prompt_builder.hpp"
#include "ncq/response_parser.hpp"
#include "ncq/self_assessor.hpp"
#include "ncq/text.hpp"

namespace ncq {

namespace fs = std::filesystem;
using nlohmann::json;

const Arm& arm_by_name(std::string_view name) {
  for (const auto& arm : kArms) {
    if (arm.name == name || arm.display == name) return arm;
  }
  throw RunError("unknown arm '" + std::string(name) + "' (expected Ours, Ours-wo-pp, Ours-wo-nl-pp, FewShot)");
}

std::vector<std::string> parse_arm_list(std::string_view comma_separated) {
  std::vector<std::string> out;
  for (const auto& part : text::split(comma_separated, ',')) {
    const auto name = text::trim(part);
    if (name.empty()) continue;
    out.emplace_back(arm_by_name(name).name);
  }
  return out;
}

int max_tokens_for(PromptStrategy strategy) {
  return strategy == PromptStrategy::FewShot ? kFewShotMaxTokens : kChainOfThoughtMaxTokens;
}

// ------------------------------------------------------------------ config

void RunConfig::validate() const {
  if (triples_path.empty()) throw RunError("config: triples path is required");
  if (sample.per_relation_count < 1) throw RunError("config: per_relation_count must be >= 1");
  if (responses_per_question < 1) throw RunError("config: responses_per_question must be >= 1");
  if (arms.empty()) throw RunError("config: no arms selected");
  std::set<std::string> seen;
  for (const auto& a : arms) {
    arm_by_name(a);
    if (!seen.insert(a).second) throw RunError("config: arm '" + a + "' listed twice");
  }
  if (workers < 1) throw RunError("config: workers must be >= 1");
  if (clock != "auto" && clock != "wall" && clock != "fixed") throw RunError("config: clock must be auto, wall or fixed");
}

RunConfig RunConfig::from_json(const json& j, const fs::path& base_dir) {
  auto resolve = [&base_dir](const std::string& p) -> std::string {
    if (p.empty() || fs::path(p).is_absolute() || base_dir.empty()) return p;
    return (base_dir / p).lexically_normal().string();
  };
  RunConfig c;
  c.triples_path = resolve(j.value("triples", ""));
  if (j.contains("triples_format")) {
    c.triples_format = j["triples_format"] == "jsonl" ? TripleFormat::JsonLines : TripleFormat::Tsv;
  } else {
    c.triples_format = format_from_path(c.triples_path);
  }
  c.sample.per_relation_count = j.value("per_relation_count", c.sample.per_relation_count);
  c.sample.seed = j.value("seed", static_cast<std::uint64_t>(0));
  c.sample.relations = j.value("relations", std::vector<std::string>{});
  if (j.contains("arms")) c.arms = j["arms"].get<std::vector<std::string>>();
  c.responses_per_question = j.value("responses_per_question", c.responses_per_question);
  if (j.contains("backend")) {
    json b = j["backend"];
    if (b.contains("script")) b["script"] = resolve(b["script"].get<std::string>());
    c.backend = BackendSpec::from_json(b);
  }
  c.prompt_assets_dir = resolve(j.value("prompt_assets", ""));
  c.assessment_assets_dir = resolve(j.value("assessment_assets", ""));
  c.templates_path = resolve(j.value("templates", ""));
  c.refusal_markers_path = resolve(j.value("refusal_markers", ""));
  c.normalize_punctuation = j.value("normalize_punctuation", false);
  c.workers = j.value("workers", 1);
  c.clock = j.value("clock", "auto");
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  json j;
  try {
    j = json::parse(text::read_file(path));
  } catch (const json::exception& e) {
    throw RunError("config " + path + ": " + e.what());
  }
  return from_json(j, fs::path(path).parent_path());
}

json RunConfig::to_json() const {
  return json{{"triples", triples_path},
              {"triples_format", triples_format == TripleFormat::Tsv ? "tsv" : "jsonl"},
              {"per_relation_count", sample.per_relation_count},
              {"seed", sample.seed},
              {"relations", sample.relations},
              {"arms", arms},
              {"responses_per_question", responses_per_question},
              {"backend", backend.to_json()},
              {"prompt_assets", prompt_assets_dir},
              {"assessment_assets", assessment_assets_dir},
              {"templates", templates_path},
              {"refusal_markers", refusal_markers_path},
              {"normalize_punctuation", normalize_punctuation},
              {"workers", workers},
              {"clock", clock}};
}

// ------------------------------------------------------------------ assets

namespace {

struct LoadedAssets {
  TemplateRegistry templates;
  PromptAssets prompts;
  AssessmentAssets assessment;
  RefusalMarkers markers;
  json hashes;
};

LoadedAssets load_assets(const RunConfig& c) {
  LoadedAssets a;
  a.templates = c.templates_path.empty() ? TemplateRegistry::defaults() : TemplateRegistry::from_file(c.templates_path);
  a.prompts = c.prompt_assets_dir.empty() ? PromptAssets::defaults() : PromptAssets::load(c.prompt_assets_dir);
  a.assessment = c.assessment_assets_dir.empty() ? AssessmentAssets::defaults()
                                                 : AssessmentAssets::load(c.assessment_assets_dir);
  const std::string markers_path =
      c.refusal_markers_path.empty() ? asset_path("refusal_markers.txt") : c.refusal_markers_path;
  const std::string markers_text = text::read_file(markers_path);
  a.markers = RefusalMarkers::parse(markers_text);
  a.hashes = json{{"templates", a.templates.version_hash()},
                  {"prompts", a.prompts.version_hash},
                  {"assessment", a.assessment.version_hash},
                  {"refusal_markers", text::sha256_hex(markers_text)}};
  return a;
}

// Recorded in every manifest: choices the harness makes where the method
// description leaves room.
json assumptions() {
  return json::array({
      "sampling is stratified: per_relation_count triples per relation",
      "the responses for one question come from a single n-completion request",
      "a no-answer completion is re-requested once at temperature 1.0",
      "standard and negated questions of one triple use independent prompts",
      "standard-form prompts use the neutral preamble; negated-form prompts use the negation preamble",
      "filtered-out answers are excluded from the headline denominator; the unfiltered view is reported too",
      "oWant questions are verbalized as-is even when the head names no PersonY",
      "each arm samples its own completions",
  });
}

struct WorkItem {
  std::string arm;
  std::string triple_id;
  QuestionForm form;

  std::string key() const { return arm + "|" + triple_id + "|" + std::string(to_string(form)); }
};

std::vector<WorkItem> plan_items(const std::vector<std::string>& arms, const std::vector<Triple>& triples) {
  std::vector<WorkItem> items;
  for (const auto& arm : arms) {
    for (const auto& t : triples) {
      for (QuestionForm form : kQuestionForms) items.push_back({arm, t.id, form});
    }
  }
  return items;
}

std::string timestamp_now(bool fixed) {
  if (fixed) return "1970-01-01T00:00:00Z";
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

bool use_fixed_clock(const RunConfig& c) {
  if (c.clock == "fixed") return true;
  if (c.clock == "wall") return false;
  return c.backend.kind == BackendKind::ScriptedMock;
}

json triple_to_json(const Triple& t) {
  return json{{"id", t.id}, {"head", t.head}, {"relation", t.relation.name}, {"tail", t.tail}};
}

Triple triple_from_json(const json& j) {
  return Triple{j.at("id").get<std::string>(), j.at("head").get<std::string>(),
                Relation{j.at("relation").get<std::string>()}, j.value("tail", "")};
}

struct ItemResult {
  bool ok = false;
  std::vector<RunRecord> records;
  std::string error;
};

ItemResult execute_item(const WorkItem& item, const Triple& triple, const RunConfig& config,
                        const LoadedAssets& assets, Gateway& gateway, const std::string& run_id) {
  ItemResult out;
  try {
    const Arm& arm = arm_by_name(item.arm);
    const auto strategy = arm.strategy_for(item.form);
    const auto question = assets.templates.verbalize(triple, item.form, {config.normalize_punctuation});
    const auto prompt = build_prompt(strategy, question, assets.prompts);

    CompletionRequest req;
    req.prompt = prompt.rendered;
    req.max_tokens = max_tokens_for(strategy);
    auto detector = [&](const std::string& t) { return parse_completion(t, strategy, assets.markers).no_answer; };
    auto outcome = sample_answers_with_retry(gateway, req, config.responses_per_question, detector);

    const bool fixed = use_fixed_clock(config);
    const std::string prompt_hash = prompt.hash();
    for (const auto& c : outcome.completions) {
      const auto parsed = parse_completion(c.text, strategy, assets.markers);
      RunRecord r;
      r.run_id = run_id;
      r.triple_id = triple.id;
      r.relation = triple.relation.name;
      r.head = triple.head;
      r.form = item.form;
      r.arm = item.arm;
      r.strategy = std::string(to_string(strategy));
      r.question = question.text;
      r.sample_index = c.sample_index;
      r.attempt = c.attempt;
      r.temperature = c.temperature;
      r.prompt_hash = prompt_hash;
      r.raw_completion = c.text;
      r.final_answer = parsed.final_answer;
      r.no_answer = parsed.no_answer;
      r.salvaged = parsed.salvaged;
      r.timestamp = timestamp_now(fixed);
      out.records.push_back(std::move(r));
    }
    std::stable_sort(out.records.begin(), out.records.end(), [](const RunRecord& a, const RunRecord& b) {
      return std::tie(a.sample_index, a.attempt) < std::tie(b.sample_index, b.attempt);
    });

    if (arm.filter) {
      // Only the last attempt of each sample is the answer under test.
      std::vector<RunRecord> finals;
      std::vector<size_t> where;
      for (size_t i = 0; i < out.records.size(); ++i) {
        const bool last = i + 1 == out.records.size() ||
                          out.records[i + 1].sample_index != out.records[i].sample_index;
        if (last) {
          finals.push_back(out.records[i]);
          where.push_back(i);
        }
      }
      filter_answers(finals, gateway, assets.assessment);
      for (size_t k = 0; k < finals.size(); ++k) out.records[where[k]].filter = finals[k].filter;
    }
    out.ok = true;
  } catch (const std::exception& e) {
    out.records.clear();
    out.error = e.what();
  }
  return out;
}

json empty_counts(const std::vector<std::string>& arms) {
  json counts = json::object();
  for (const auto& arm : arms) {
    for (QuestionForm f : kQuestionForms) {
      counts[arm][std::string(to_string(f))] = json{{"answers", 0},  {"retained", 0}, {"dropped", 0},
                                                    {"no_answer", 0}, {"salvaged", 0}, {"attempt_records", 0},
                                                    {"retries", 0}};
    }
  }
  return counts;
}

void add_counts(json& counts, const WorkItem& item, const std::vector<RunRecord>& records) {
  auto& c = counts[item.arm][std::string(to_string(item.form))];
  for (size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    c["attempt_records"] = c["attempt_records"].get<int>() + 1;
    if (r.attempt > 0) c["retries"] = c["retries"].get<int>() + 1;
    const bool last = i + 1 == records.size() || records[i + 1].sample_index != r.sample_index;
    if (!last) continue;
    c["answers"] = c["answers"].get<int>() + 1;
    c[r.retained() ? "retained" : "dropped"] = c[r.retained() ? "retained" : "dropped"].get<int>() + 1;
    if (r.no_answer) c["no_answer"] = c["no_answer"].get<int>() + 1;
    if (r.salvaged) c["salvaged"] = c["salvaged"].get<int>() + 1;
  }
}

size_t count_lines(const fs::path& p) {
  std::ifstream in(p);
  if (!in) return 0;
  size_t n = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (!text::trim(line).empty()) ++n;
  }
  return n;
}

class RunContext {
 public:
  RunContext(fs::path dir, json manifest, RunConfig config, LoadedAssets assets, std::unique_ptr<Gateway> gateway)
      : dir_(std::move(dir)),
        manifest_(std::move(manifest)),
        config_(std::move(config)),
        assets_(std::move(assets)),
        gateway_(std::move(gateway)) {
    for (const auto& t : manifest_["triples"]) {
      auto triple = triple_from_json(t);
      triples_.emplace(triple.id, std::move(triple));
    }
  }

  void write_manifest() {
    bool complete = true;
    for (const auto& it : manifest_["items"]) complete = complete && it["status"] == "complete";
    manifest_["complete"] = complete;
    text::write_file_atomic((dir_ / kManifestFile).string(), manifest_.dump(2) + "\n");
  }

  RunSummary execute(const RunHooks& hooks) {
    std::vector<size_t> pending;
    const auto& items = manifest_["items"];
    for (size_t i = 0; i < items.size(); ++i) {
      if (items[i]["status"] != "complete") pending.push_back(i);
    }
    std::vector<WorkItem> work;
    for (size_t idx : pending) work.push_back(manifest_item(idx));
    const std::string run_id = manifest_["run_id"];
    std::vector<std::optional<ItemResult>> results(pending.size());
    std::atomic<size_t> next{0};
    std::mutex commit_mu;
    size_t next_commit = 0;
    std::exception_ptr commit_error;

    auto worker = [&] {
      for (;;) {
        const size_t slot = next.fetch_add(1);
        if (slot >= pending.size()) return;
        const WorkItem& entry = work[slot];
        if (hooks.on_item) hooks.on_item(entry.key());
        auto triple_it = triples_.find(entry.triple_id);
        ItemResult res;
        if (triple_it == triples_.end()) {
          res.error = "triple " + entry.triple_id + " missing from manifest";
        } else {
          res = execute_item(entry, triple_it->second, config_, assets_, *gateway_, run_id);
        }
        // Commit strictly in plan order so records.jsonl is independent of
        // worker scheduling.
        std::lock_guard lock(commit_mu);
        results[slot] = std::move(res);
        while (next_commit < pending.size() && results[next_commit] && !commit_error) {
          try {
            commit(pending[next_commit], *results[next_commit]);
          } catch (...) {
            commit_error = std::current_exception();
          }
          results[next_commit].reset();
          ++next_commit;
        }
      }
    };

    const size_t nworkers = std::min<size_t>(static_cast<size_t>(config_.workers), std::max<size_t>(1, pending.size()));
    std::vector<std::thread> threads;
    for (size_t i = 1; i < nworkers; ++i) threads.emplace_back(worker);
    worker();
    for (auto& t : threads) t.join();
    if (commit_error) std::rethrow_exception(commit_error);

    RunSummary s;
    s.dir = dir_;
    s.run_id = manifest_["run_id"];
    s.items_total = manifest_["items"].size();
    for (const auto& it : manifest_["items"]) s.items_complete += it["status"] == "complete" ? 1 : 0;
    s.items_executed = pending.size();
    s.records_written = written_;
    s.complete = s.items_complete == s.items_total;
    return s;
  }

 private:
  WorkItem manifest_item(size_t idx) const {
    const auto& it = manifest_["items"][idx];
    return WorkItem{it["arm"], it["triple_id"], parse_question_form(it["form"].get<std::string>())};
  }

  void commit(size_t idx, const ItemResult& res) {
    auto& entry = manifest_["items"][idx];
    if (res.ok) {
      std::ofstream out(dir_ / kRecordsFile, std::ios::app | std::ios::binary);
      if (!out) throw RunError("cannot append to records file");
      for (const auto& r : res.records) out << r.to_json().dump() << '\n';
      out.flush();
      if (!out) throw RunError("short write to records file");
      entry["status"] = "complete";
      entry["records"] = res.records.size();
      entry.erase("error");
      manifest_["records_count"] = manifest_["records_count"].get<size_t>() + res.records.size();
      add_counts(manifest_["counts"], manifest_item(idx), res.records);
      written_ += res.records.size();
    } else {
      entry["status"] = "incomplete";
      entry["records"] = 0;
      entry["error"] = res.error;
    }
    write_manifest();
  }

  fs::path dir_;
  json manifest_;
  RunConfig config_;
  LoadedAssets assets_;
  std::unique_ptr<Gateway> gateway_;
  std::map<std::string, Triple> triples_;
  size_t written_ = 0;
};

std::unique_ptr<Gateway> gateway_for(const BackendSpec& spec, const RunHooks& hooks) {
  return hooks.make_gateway ? hooks.make_gateway(spec) : make_gateway(spec);
}

}  // namespace

// ---------------------------------------------------------------- run/resume

RunSummary run_experiment(const RunConfig& config, const fs::path& out_dir, const RunHooks& hooks) {
  config.validate();
  if (fs::exists(out_dir / kManifestFile) || fs::exists(out_dir / kRecordsFile)) {
    throw RunError("run directory " + out_dir.string() + " already holds a run; use resume");
  }
  auto assets = load_assets(config);
  auto loaded = load_triples(config.triples_path, config.triples_format, assets.templates);
  auto sample = sample_triples(loaded.triples, config.sample);

  json triples = json::array();
  for (const auto& t : sample) triples.push_back(triple_to_json(t));
  json rejects = json::array();
  for (const auto& r : loaded.rejects) rejects.push_back({{"row", r.row}, {"reason", r.reason}, {"raw", r.raw}});

  const json config_echo = config.to_json();
  const std::string run_id =
      "run-" + text::sha256_hex(config_echo.dump() + triples.dump() + assets.hashes.dump()).substr(0, 12);

  json items = json::array();
  for (const auto& item : plan_items(config.arms, sample)) {
    items.push_back({{"key", item.key()},
                     {"arm", item.arm},
                     {"triple_id", item.triple_id},
                     {"form", to_string(item.form)},
                     {"status", "pending"},
                     {"records", 0}});
  }
  json manifest{{"format_version", 1},
                {"run_id", run_id},
                {"config", config_echo},
                {"assets", assets.hashes},
                {"backend", config.backend.identity()},
                {"triples", triples},
                {"rejects", rejects},
                {"responses_per_question", config.responses_per_question},
                {"expected_answers_per_arm", sample.size() * kQuestionForms.size() *
                                                 static_cast<size_t>(config.responses_per_question)},
                {"counts", empty_counts(config.arms)},
                {"items", items},
                {"records_count", 0},
                {"complete", false},
                {"assumptions", assumptions()}};

  fs::create_directories(out_dir);
  { std::ofstream(out_dir / kRecordsFile, std::ios::trunc); }
  if (!fs::exists(out_dir / kLabelsFile)) std::ofstream(out_dir / kLabelsFile);

  auto gateway = gateway_for(config.backend, hooks);
  RunContext ctx(out_dir, std::move(manifest), config, std::move(assets), std::move(gateway));
  ctx.write_manifest();
  return ctx.execute(hooks);
}

json read_manifest(const fs::path& run_dir) {
  const auto path = run_dir / kManifestFile;
  if (!fs::exists(path)) throw RunError("no manifest in " + run_dir.string());
  json m;
  try {
    m = json::parse(text::read_file(path.string()));
  } catch (const json::exception& e) {
    throw RunError("corrupt manifest " + path.string() + ": " + e.what());
  }
  for (const char* key : {"run_id", "config", "items", "triples", "records_count", "counts", "assets"}) {
    if (!m.contains(key)) throw RunError("corrupt manifest " + path.string() + ": missing '" + key + "'");
  }
  return m;
}

RunSummary resume_run(const fs::path& run_dir, const RunHooks& hooks,
                      const std::optional<BackendSpec>& backend_override) {
  json manifest = read_manifest(run_dir);
  const size_t declared = manifest["records_count"].get<size_t>();
  size_t per_item = 0;
  for (const auto& it : manifest["items"]) per_item += it.value("records", static_cast<size_t>(0));
  if (per_item != declared) {
    throw RunError("corrupt manifest: items account for " + std::to_string(per_item) + " records, header says " +
                   std::to_string(declared));
  }
  const size_t on_disk = count_lines(run_dir / kRecordsFile);
  if (on_disk != declared) {
    throw RunError("records file has " + std::to_string(on_disk) + " lines but the manifest expects " +
                   std::to_string(declared) + "; refusing to resume");
  }

  RunConfig config = RunConfig::from_json(manifest["config"]);
  if (backend_override) config.backend = *backend_override;
  auto assets = load_assets(config);
  if (assets.hashes != manifest["assets"]) {
    throw RunError("assets changed since the run started; refusing to resume");
  }
  auto gateway = gateway_for(config.backend, hooks);
  RunContext ctx(run_dir, std::move(manifest), config, std::move(assets), std::move(gateway));
  return ctx.execute(hooks);
}

std::vector<RunRecord> read_records(const fs::path& run_dir) {
  std::vector<RunRecord> out;
  std::ifstream in(run_dir / kRecordsFile);
  if (!in) throw RunError("no records file in " + run_dir.string());
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    try {
      out.push_back(RunRecord::from_json(json::parse(line)));
    } catch (const std::exception& e) {
      throw RunError("records line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::vector<RunRecord> final_answers(const fs::path& run_dir) {
  const auto records = read_records(run_dir);
  std::map<std::string, size_t> slot;
  std::vector<RunRecord> out;
  for (const auto& r : records) {
    const auto id = r.answer_id();
    auto it = slot.find(id);
    if (it == slot.end()) {
      slot.emplace(id, out.size());
      out.push_back(r);
    } else if (r.attempt >= out[it->second].attempt) {
      out[it->second] = r;
    }
  }
  std::ifstream in(run_dir / kAssessmentsFile);
  std::string line;
  while (in && std::getline(in, line)) {
    if (text::trim(line).empty()) continue;
    const auto j = json::parse(line);
    auto it = slot.find(j.at("answer_id").get<std::string>());
    if (it == slot.end()) continue;
    out[it->second].filter = FilterVerdict{j.value("keep", true), j.value("parsed", false), j.value("raw_judgment", "")};
  }
  return out;
}

size_t reassess_run(const fs::path& run_dir, Gateway& gateway, const std::vector<std::string>& arms) {
  const json manifest = read_manifest(run_dir);
  std::set<std::string> targets;
  if (arms.empty()) {
    for (const auto& a : manifest["config"]["arms"]) {
      if (arm_by_name(a.get<std::string>()).filter) targets.insert(a.get<std::string>());
    }
  } else {
    for (const auto& a : arms) {
      if (!arm_by_name(a).filter) throw RunError("arm " + a + " does not use the self-assessment filter");
      targets.insert(a);
    }
  }
  const RunConfig config = RunConfig::from_json(manifest["config"]);
  const auto assessment = config.assessment_assets_dir.empty() ? AssessmentAssets::defaults()
                                                               : AssessmentAssets::load(config.assessment_assets_dir);
  std::vector<RunRecord> finals;
  for (auto& r : final_answers(run_dir)) {
    if (targets.contains(r.arm)) finals.push_back(std::move(r));
  }
  filter_answers(finals, gateway, assessment);
  std::ofstream out(run_dir / kAssessmentsFile, std::ios::app);
  for (const auto& r : finals) {
    out << json{{"answer_id", r.answer_id()},
                {"keep", r.filter->keep},
                {"parsed", r.filter->parsed},
                {"raw_judgment", r.filter->raw_judgment}}
               .dump()
        << '\n';
  }
  return finals.size();
}

}  // namespace ncq
