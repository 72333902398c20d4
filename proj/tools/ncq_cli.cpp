#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "ncq/annotation_service.hpp"
#include "ncq/assets.hpp"
#include "ncq/experiment_runner.hpp"
#include "ncq/text.hpp"

using namespace ncq;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

AnnotationServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

void emit(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + out_path);
  out << text;
  std::cerr << "wrote " << out_path << "\n";
}

void print_summary(const RunSummary& s) {
  std::cout << "run " << s.run_id << " at " << s.dir.string() << "\n"
            << "  items: " << s.items_complete << "/" << s.items_total << " complete (" << s.items_executed
            << " executed now)\n"
            << "  records written: " << s.records_written << "\n"
            << "  status: " << (s.complete ? "complete" : "INCOMPLETE, use `ncq resume`") << "\n";
}

BackendSpec backend_of_run(const fs::path& run_dir) {
  return BackendSpec::from_json(read_manifest(run_dir)["config"]["backend"]);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Negated complementary commonsense question runner"};
  app.require_subcommand(1);

  // Shared flags.
  std::string config_path, backend, arms, out;
  std::uint64_t seed = 0;

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Validate a triple file and write a clean JSON-lines store");
  std::string ingest_in, ingest_format, rejects_out;
  ingest->add_option("input", ingest_in, "Triples (.tsv head/relation/tail or .jsonl)")->required()->check(CLI::ExistingFile);
  ingest->add_option("--format", ingest_format, "tsv or jsonl (default: from extension)")->check(CLI::IsMember({"tsv", "jsonl"}));
  ingest->add_option("--out", out, "Store file to write")->required();
  ingest->add_option("--rejects", rejects_out, "Write rejected rows here");

  // sample
  auto* sample = app.add_subcommand("sample", "Draw the per-relation sample a run would use");
  std::string triples_file, relations;
  int per_relation = 0;
  sample->add_option("--config", config_path, "Run configuration (JSON)");
  sample->add_option("--triples", triples_file, "Triple file (overrides the config)");
  sample->add_option("--per-relation", per_relation, "Triples per relation");
  sample->add_option("--relations", relations, "Comma-separated relations");
  sample->add_option("--seed", seed, "Sampling seed");
  sample->add_option("--out", out, "Write sampled triples as JSON lines (default: stdout)");

  // run
  auto* run = app.add_subcommand("run", "Run the experiment into a new directory");
  int workers = 0;
  run->add_option("--config", config_path, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out, "Run directory (must not hold a run yet)")->required();
  run->add_option("--backend", backend, "mock:<script.jsonl> or a completion endpoint URL");
  run->add_option("--seed", seed, "Sampling seed");
  run->add_option("--arms", arms, "Comma-separated arms: Ours,Ours-wo-pp,Ours-wo-nl-pp,FewShot");
  run->add_option("--workers", workers, "Concurrent work items");

  // resume
  auto* resume = app.add_subcommand("resume", "Finish the incomplete items of a run");
  std::string run_dir;
  resume->add_option("run_dir", run_dir)->required()->check(CLI::ExistingDirectory);
  resume->add_option("--backend", backend, "Override the recorded backend");

  // assess
  auto* assess = app.add_subcommand("assess", "Re-run the self-assessment filter on an existing run");
  assess->add_option("run_dir", run_dir)->required()->check(CLI::ExistingDirectory);
  assess->add_option("--backend", backend, "Override the recorded backend");
  assess->add_option("--arms", arms, "Arms to assess (default: arms that filter)");

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Score a run against closed-world oracle answer sets");
  std::string oracle_path;
  bool as_json = false;
  evaluate->add_option("run_dir", run_dir)->required()->check(CLI::ExistingDirectory);
  evaluate->add_option("--oracle", oracle_path, "Oracle worlds (JSON lines)")->required()->check(CLI::ExistingFile);
  evaluate->add_flag("--json", as_json, "Emit JSON instead of text");
  evaluate->add_option("--out", out, "Write the report here");

  // report
  auto* report = app.add_subcommand("report", "Tables from human labels, with inter-annotator agreement");
  report->add_option("run_dir", run_dir)->required()->check(CLI::ExistingDirectory);
  report->add_flag("--json", as_json, "Emit JSON instead of text");
  report->add_option("--out", out, "Write the report here");

  // annotate
  auto* annotate = app.add_subcommand("annotate", "Human annotation");
  annotate->require_subcommand(1);
  auto* serve = annotate->add_subcommand("serve", "Serve the labeling API for a run");
  std::string host = "127.0.0.1", token, ui_dir, sentences_path, instructions_path;
  int port = 8080;
  size_t required = kDefaultRequiredAnnotators;
  serve->add_option("run_dir", run_dir)->required()->check(CLI::ExistingDirectory);
  serve->add_option("--host", host, "Bind address")->capture_default_str();
  serve->add_option("--port", port, "Port (0 picks a free one)")->capture_default_str();
  serve->add_option("--token", token, "Shared access token");
  serve->add_option("--ui-dir", ui_dir, "Static labeling UI bundle")->check(CLI::ExistingDirectory);
  serve->add_option("--annotators", required, "Labels required per answer")->capture_default_str();
  serve->add_option("--sentences", sentences_path, "Sentence templates (TSV)")->check(CLI::ExistingFile);
  serve->add_option("--instructions", instructions_path, "Annotator instructions")->check(CLI::ExistingFile);
  auto* export_labels = annotate->add_subcommand("export", "Print the labels collected for a run");
  export_labels->add_option("run_dir", run_dir)->required()->check(CLI::ExistingDirectory);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest) {
      const auto format = ingest_format.empty() ? format_from_path(ingest_in)
                          : ingest_format == "jsonl" ? TripleFormat::JsonLines
                                                     : TripleFormat::Tsv;
      const auto loaded = load_triples(ingest_in, format, TemplateRegistry::defaults());
      write_triples_jsonl(out, loaded.triples);
      if (!rejects_out.empty()) write_rejects_jsonl(rejects_out, loaded.rejects);
      std::cout << loaded.triples.size() << " triples stored, " << loaded.rejects.size() << " rejected\n";
      for (const auto& r : loaded.rejects) std::cerr << "  row " << r.row << ": " << r.reason << "\n";
    } else if (*sample) {
      RunConfig c;
      if (!config_path.empty()) c = RunConfig::load(config_path);
      if (!triples_file.empty()) {
        c.triples_path = triples_file;
        c.triples_format = format_from_path(triples_file);
      }
      if (c.triples_path.empty()) throw std::runtime_error("give --config or --triples");
      if (per_relation > 0) c.sample.per_relation_count = per_relation;
      if (!relations.empty()) c.sample.relations = text::split(relations, ',');
      if (sample->count("--seed")) c.sample.seed = seed;
      const auto loaded = load_triples(c.triples_path, c.triples_format, TemplateRegistry::defaults());
      const auto picked = sample_triples(loaded.triples, c.sample);
      if (out.empty()) {
        for (const auto& t : picked) {
          std::cout << json{{"id", t.id}, {"head", t.head}, {"relation", t.relation.name}, {"tail", t.tail}}.dump()
                    << "\n";
        }
      } else {
        write_triples_jsonl(out, picked);
        std::cerr << picked.size() << " triples written to " << out << "\n";
      }
    } else if (*run) {
      auto c = RunConfig::load(config_path);
      if (!backend.empty()) c.backend = BackendSpec::parse(backend);
      if (run->count("--seed")) c.sample.seed = seed;
      if (!arms.empty()) c.arms = parse_arm_list(arms);
      if (workers > 0) c.workers = workers;
      print_summary(run_experiment(c, out));
    } else if (*resume) {
      std::optional<BackendSpec> override_spec;
      if (!backend.empty()) override_spec = BackendSpec::parse(backend);
      print_summary(resume_run(run_dir, {}, override_spec));
    } else if (*assess) {
      const auto spec = backend.empty() ? backend_of_run(run_dir) : BackendSpec::parse(backend);
      auto gateway = make_gateway(spec);
      const auto n = reassess_run(run_dir, *gateway, arms.empty() ? std::vector<std::string>{} : parse_arm_list(arms));
      std::cout << n << " answers assessed; verdicts appended to " << (fs::path(run_dir) / kAssessmentsFile).string()
                << "\n";
    } else if (*evaluate || *report) {
      const auto rep = *evaluate ? export_report(run_dir, LabelSource::Oracle, oracle_path)
                                 : export_report(run_dir, LabelSource::Annotations);
      emit(as_json ? rep.to_json().dump(2) + "\n" : rep.to_text(), out);
    } else if (*serve) {
      const auto instructions =
          text::read_file(instructions_path.empty() ? asset_path("annotation/instructions.txt") : instructions_path);
      const auto sentences =
          sentences_path.empty() ? SentenceTemplates::defaults() : SentenceTemplates::from_file(sentences_path);
      const auto manifest = read_manifest(run_dir);
      const std::string run_id = manifest["run_id"];
      const auto items = build_batch_items(final_answers(run_dir), sentences, manifest["config"]["seed"].get<std::uint64_t>());

      AnnotationService::Options opts;
      opts.required_annotators = required;
      AnnotationService service(instructions, opts);
      service.add_batch(run_id, items, fs::path(run_dir) / kLabelsFile);
      AnnotationServer server(service, {token, ui_dir});
      const int bound = server.bind(host, port);
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      const auto p = service.progress(run_id);
      std::cout << "serving batch " << run_id << " (" << p.answers << " answers, " << p.labels
                << " labels so far) on http://" << host << ":" << bound << "/" << std::endl;
      server.listen();
      g_server = nullptr;
    } else if (*export_labels) {
      std::cout << text::read_file((fs::path(run_dir) / kLabelsFile).string());
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
