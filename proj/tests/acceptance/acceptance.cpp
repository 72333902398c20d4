// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ncq/experiment_runner.hpp"
#include "ncq/prompt_builder.hpp"
#include "ncq/response_parser.hpp"
#include "ncq/self_assessor.hpp"
#include "ncq/text.hpp"
#include "oracles.hpp"
#include "run_fixture.hpp"

using namespace ncq;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Thrown by expect(); carries the first failed condition.
struct Failure {
  std::string what;
};

void expect(bool ok, const std::string& what) {
  if (!ok) throw Failure{what};
}

template <typename T>
std::string str(const T& v) {
  std::ostringstream o;
  o << v;
  return o.str();
}

void no_sleep(std::chrono::milliseconds) {}

// Wraps a backend, recording every request it receives.
class Recording final : public Backend {
 public:
  explicit Recording(std::unique_ptr<Backend> inner) : inner_(std::move(inner)) {}
  std::vector<std::string> complete_once(const CompletionRequest& r, std::string& model) override {
    requests.push_back(r);
    return inner_->complete_once(r, model);
  }
  std::string id() const override { return inner_->id(); }
  std::vector<CompletionRequest> requests;

 private:
  std::unique_ptr<Backend> inner_;
};

// ------------------------------------------------------------ 1. determinism

std::string mock_determinism() {
  test::TempDir dir;
  const auto c = test::fixture_config(dir.path(), {"xWant", "AtLocation"}, 5);
  double slowest = 0;
  for (const char* name : {"a", "b"}) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto s = run_experiment(c, dir / name);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    slowest = std::max(slowest, secs);
    expect(s.complete, "run incomplete");
  }
  const auto a = test::slurp(dir / "a/records.jsonl");
  expect(!a.empty(), "no records");
  expect(a == test::slurp(dir / "b/records.jsonl"), "records.jsonl differs between runs");
  const auto m = read_manifest(dir / "a");
  for (const auto& arm : c.arms) {
    int answers = 0;
    for (const auto& [form, counts] : m["counts"][arm].items()) answers += counts["answers"].get<int>();
    expect(answers == 2 * 5 * 2 * 3, arm + ": " + str(answers) + " answers");
  }
  expect(slowest < 10.0, "run took " + str(slowest) + " s");
  char buf[64];
  std::snprintf(buf, sizeof buf, "slowest run %.2f s", slowest);
  return buf;
}

// ------------------------------------------------------------- 2. count law

std::string count_law() {
  test::TempDir dir;
  std::vector<std::string> rels(kCanonicalRelations.begin(), kCanonicalRelations.end());
  auto c = test::fixture_config(dir.path(), rels, 10);
  const auto s = run_experiment(c, dir / "run");
  expect(s.complete, "run incomplete");
  const auto m = read_manifest(dir / "run");
  expect(m["triples"].size() == 100, "triples: " + str(m["triples"].size()));
  expect(m["expected_answers_per_arm"] == 600, "expected_answers_per_arm " + m["expected_answers_per_arm"].dump());
  std::map<std::string, int> per_arm;
  for (const auto& r : final_answers(dir / "run")) ++per_arm[r.arm];
  for (const auto& arm : c.arms) {
    const auto& cs = m["counts"][arm];
    const int answers = cs["standard"]["answers"].get<int>() + cs["negated"]["answers"].get<int>();
    expect(answers == 600, arm + " manifest answers " + str(answers));
    expect(per_arm[arm] == 600, arm + " answer slots in records " + str(per_arm[arm]));
  }
  return "600 answers per arm for 100 triples";
}

// ------------------------------------------------------- 3. oracle equivalence

void check_world(int n, std::uint32_t v, std::uint32_t a) {
  const auto w = test::world_from_masks(n, v, a);
  const auto expected = test::brute_nc(n, v, a);
  expect(nc_answer_set(w) == expected, "nc set mismatch n=" + str(n) + " V=" + str(v) + " A=" + str(a));
  for (QuestionForm form : kQuestionForms) {
    for (int i = 0; i < n; ++i) {
      for (bool neg : {false, true}) {
        const std::string answer = (neg ? "not " : "") + test::element(i);
        const auto want = test::brute_judge(i, neg, form, v, a);
        expect(judge_against_oracle(answer, form, w) == want,
               "judge mismatch '" + answer + "' n=" + str(n) + " V=" + str(v) + " A=" + str(a));
      }
    }
    expect(judge_against_oracle("outside the universe", form, w) == Verdict::Incorrect, "answer outside U judged correct");
  }
}

std::string oracle_equivalence() {
  size_t worlds = 0;
  for (int n = 1; n <= 6; ++n) {
    const std::uint32_t full = (1U << n) - 1;
    for (std::uint32_t v = 1; v <= full; ++v) {
      // every A ⊆ V, via submask enumeration
      for (std::uint32_t a = v;; a = (a - 1) & v) {
        check_world(n, v, a);
        ++worlds;
        if (a == 0) break;
      }
    }
  }
  test::Gen g(1234);
  for (int i = 0; i < 1000; ++i) {
    const int n = g.range(7, 12);
    std::uint32_t v = 0, a = 0;
    for (int k = 0; k < n; ++k) {
      if (g.coin(0.6)) v |= 1U << k;
      if ((v >> k & 1U) && g.coin(0.5)) a |= 1U << k;
    }
    if (v == 0) v = 1U << g.range(0, n - 1);
    check_world(n, v, a);
  }
  return str(worlds) + " exhaustive worlds + 1000 random, 0 mismatches";
}

// ---------------------------------------------------------------- 4. alpha

std::vector<AnnotationRecord> to_records(const std::vector<std::vector<int>>& units) {
  std::vector<AnnotationRecord> out;
  for (size_t u = 0; u < units.size(); ++u) {
    for (size_t k = 0; k < units[u].size(); ++k) {
      out.push_back({"u" + str(u), "c" + str(k), kLabelOptions[static_cast<size_t>(units[u][k])], ""});
    }
  }
  return out;
}

std::string alpha() {
  test::Gen g(77);
  int compared = 0;
  for (int i = 0; i < 500; ++i) {
    std::vector<std::vector<int>> units(static_cast<size_t>(g.range(1, 6)));
    const int annotators = g.coin(0.1) ? 1 : g.range(2, 4);
    const int spread = g.range(1, 5);  // narrow spreads give high agreement
    for (auto& u : units) {
      for (int k = 0; k < annotators; ++k) {
        if (g.coin(0.85)) u.push_back(g.range(0, spread - 1));
      }
    }
    const auto recs = to_records(units);
    const auto want = test::brute_alpha(units);
    bool pairable = false;
    for (const auto& u : units) pairable |= u.size() >= 2;
    if (!pairable) {
      bool threw = false;
      try {
        krippendorff_alpha(recs);
      } catch (const UndefinedAlpha&) {
        threw = true;
      }
      expect(threw, "instance " + str(i) + ": expected undefined alpha");
      continue;
    }
    const auto got = krippendorff_alpha(recs);
    if (!want) {
      expect(got.degenerate && got.alpha == 1.0, "instance " + str(i) + ": single-category data not flagged");
      continue;
    }
    expect(std::abs(got.alpha - *want) <= 1e-9,
           "instance " + str(i) + ": alpha " + str(got.alpha) + " vs brute force " + str(*want));
    expect(got.pass == (got.alpha >= kAlphaThreshold), "instance " + str(i) + ": reliability flag wrong");
    ++compared;
  }
  expect(compared > 300, "only " + str(compared) + " instances compared");

  const auto perfect = krippendorff_alpha(to_records({{0, 0, 0}, {2, 2}, {4, 4, 4}, {1, 1}}));
  expect(perfect.alpha == 1.0, "perfect agreement gave " + str(perfect.alpha));
  expect(perfect.pass, "perfect agreement not marked reliable");

  bool threw = false;
  try {
    krippendorff_alpha(to_records({{0}, {1}, {3}}));
  } catch (const UndefinedAlpha&) {
    threw = true;
  }
  expect(threw, "single annotator did not raise undefined alpha");

  const auto poor = krippendorff_alpha(to_records({{0, 2, 3}, {1, 3, 4}, {0, 4, 2}, {3, 0, 1}}));
  expect(poor.alpha < kAlphaThreshold && !poor.pass, "low agreement not flagged");
  return str(compared) + " instances within 1e-9";
}

// ------------------------------------------------------- 5. prompt structure

std::string prompt_structure() {
  const auto assets = PromptAssets::defaults();
  const auto reg = TemplateRegistry::defaults();
  const std::vector<Section> full(kSectionOrder.begin(), kSectionOrder.end());
  int prompts = 0;
  for (const auto& rel : kCanonicalRelations) {
    const Triple t{"t-" + std::string(rel), "PersonX reads a book", Relation{std::string(rel)}, "learn"};
    for (PromptStrategy s : kStrategies) {
      for (QuestionForm f : kQuestionForms) {
        const bool negated = f == QuestionForm::NegatedComplementary;
        if (s == PromptStrategy::CoTStandard && negated) continue;
        if ((s == PromptStrategy::CoTFull || s == PromptStrategy::CoTNoNegationLogic) && !negated) continue;
        const auto p = build_prompt(s, reg.verbalize(t, f), assets);
        const auto parsed = parse_prompt(p.rendered);
        const std::string where = std::string(to_string(s)) + "/" + std::string(rel);
        expect(parsed.exemplars.size() == kExemplarsPerPrompt, where + ": " + str(parsed.exemplars.size()) + " exemplars");
        expect(parsed.target_question.has_value(), where + ": no target question");
        if (s == PromptStrategy::CoTFull) {
          for (const auto& ex : parsed.exemplars) {
            std::vector<Section> got;
            for (const auto& [k, v] : ex.sections) got.push_back(k);
            expect(got == full, where + ": exemplar sections out of order or missing");
          }
        }
        if (s == PromptStrategy::CoTStandard || s == PromptStrategy::CoTNoNegationLogic) {
          expect(p.rendered.find("Negation logic:") == std::string::npos, where + ": negation-logic label present");
        }
        ++prompts;
      }
    }
  }
  return str(prompts) + " prompts re-parsed";
}

// ------------------------------------------------------------- 6. retry rule

std::string retry_rule() {
  const auto detector = [](const std::string& text) {
    return is_no_answer(parse_completion(text, PromptStrategy::FewShot));
  };
  CompletionRequest base;
  base.prompt = "Question: Where is a cat?\nAnswer:";
  base.max_tokens = max_tokens_for(PromptStrategy::FewShot);

  // One refusal among three: exactly one re-request, alone, at 1.0.
  {
    auto mock = std::make_unique<ScriptedMockBackend>(ScriptedMockBackend::parse_script(test::mock_script(
        {{{"default", true}, {"temperature", 0.7}, {"completions", {" a house", " I don't know", " a bed"}}},
         {{"default", true}, {"temperature", 1.0}, {"completions", {" a sofa"}}}})));
    auto rec = std::make_unique<Recording>(std::move(mock));
    auto* r = rec.get();
    Gateway gw(std::move(rec), {}, {}, no_sleep);
    const auto out = sample_answers_with_retry(gw, base, 3, detector);
    expect(r->requests.size() == 2, str(r->requests.size()) + " requests for one refusal");
    expect(r->requests[1].temperature == 1.0, "re-request temperature " + str(r->requests[1].temperature));
    expect(r->requests[1].n == 1, "re-request asked for " + str(r->requests[1].n) + " completions");
    expect(out.retry_requests == 1, "retry_requests " + str(out.retry_requests));
    expect(!out.completions.back().flagged_no_answer, "recovered answer still flagged");
  }
  // A second refusal ends it: flagged, no further calls.
  {
    auto mock = std::make_unique<ScriptedMockBackend>(ScriptedMockBackend::parse_script(test::mock_script(
        {{{"default", true}, {"temperature", 0.7}, {"completions", {" a house", " I don't know", " a bed"}}},
         {{"default", true}, {"temperature", 1.0}, {"completions", {" unknown"}}}})));
    auto rec = std::make_unique<Recording>(std::move(mock));
    auto* r = rec.get();
    Gateway gw(std::move(rec), {}, {}, no_sleep);
    const auto out = sample_answers_with_retry(gw, base, 3, detector);
    expect(r->requests.size() == 2, str(r->requests.size()) + " requests after a second refusal");
    expect(out.completions.back().flagged_no_answer, "second refusal not flagged");
  }
  // The same rule end to end: the persisted record says no_answer.
  {
    test::TempDir dir;
    auto c = test::fixture_config(
        dir.path(), {"xWant"}, 1,
        {{{"default", true}, {"temperature", 0.7}, {"completions", {" a house", " I don't know", " a bed"}}},
         {{"default", true}, {"temperature", 1.0}, {"completions", {" I don't know"}}}});
    c.arms = {"FewShot"};
    size_t calls = 0;
    std::vector<ScriptedMockBackend*> mocks;
    RunHooks hooks;
    hooks.make_gateway = [&](const BackendSpec& spec) {
      auto g = make_gateway(spec, no_sleep);
      mocks.push_back(&test::mock_of(*g));
      return g;
    };
    run_experiment(c, dir / "run", hooks);
    for (auto* m : mocks) calls += m->calls();
    expect(calls == 4, str(calls) + " calls for two questions");
    size_t flagged = 0;
    for (const auto& r : final_answers(dir / "run")) {
      if (r.sample_index == 1) {
        expect(r.attempt == 1 && r.temperature == 1.0 && r.no_answer, "final record of the refused sample is wrong");
        ++flagged;
      } else {
        expect(!r.no_answer && r.attempt == 0, "clean sample marked as retried");
      }
    }
    expect(flagged == 2, str(flagged) + " no-answer slots");
  }
  return "one re-request at 1.0; second refusal gives no_answer";
}

// ------------------------------------------------------- 7. filter properties

std::string filter_properties() {
  const auto assets = AssessmentAssets::defaults();
  test::Gen g(8);
  size_t dropped_total = 0;
  for (int world = 0; world < 200; ++world) {
    auto backend = std::make_unique<test::OracleAssessorBackend>();
    auto* oracle = backend.get();
    Gateway gw(std::move(backend), {}, {}, no_sleep);

    std::vector<RunRecord> recs;
    std::map<std::string, ClosedWorldOracle> worlds;
    for (int q = 0, nq = g.range(1, 4); q < nq; ++q) {
      const int n = g.range(2, 8);
      std::uint32_t v = 0, a = 0;
      for (int i = 0; i < n; ++i) {
        if (g.coin(0.7)) v |= 1U << i;
        if ((v >> i & 1U) && g.coin(0.4)) a |= 1U << i;
      }
      if (v == 0) v = 1;
      const auto form = g.coin(0.5) ? QuestionForm::NegatedComplementary : QuestionForm::Standard;
      const std::string question = "Question " + str(q) + " of world " + str(world) + "?";
      const auto w = test::world_from_masks(n, v, a, "t" + str(q));
      oracle->add(question, form, w);
      worlds[w.question_id] = w;
      for (int s = 0; s < 3; ++s) {
        RunRecord r;
        r.run_id = "synthetic";
        r.triple_id = w.question_id;
        r.arm = "Ours";
        r.form = form;
        r.question = question;
        r.sample_index = s;
        r.final_answer = test::element(g.range(0, n - 1));
        if (g.coin(0.2)) r.final_answer = "not " + r.final_answer;
        recs.push_back(r);
      }
    }
    const auto before = recs;
    const auto kept = filter_answers(recs, gw, assets);

    auto strip = [](RunRecord r) {
      r.filter.reset();
      return r;
    };
    size_t j = 0;
    for (size_t i = 0; i < before.size() && j < kept.size(); ++i) {
      if (strip(kept[j]) == before[i]) ++j;
    }
    expect(j == kept.size(), "world " + str(world) + ": output is not a subsequence of the input");

    auto accuracy = [&](const std::vector<RunRecord>& rs) {
      if (rs.empty()) return 100.0;
      size_t ok = 0;
      for (const auto& r : rs) {
        // independent recount with the brute-force judge
        const auto& w = worlds.at(r.triple_id);
        const bool neg = r.final_answer.starts_with("not ");
        const std::string el = neg ? r.final_answer.substr(4) : r.final_answer;
        const int idx = std::stoi(el.substr(1));
        std::uint32_t v = 0, a = 0;
        for (int i = 0; i < static_cast<int>(w.universe.size()); ++i) {
          if (w.valid.contains(test::element(i))) v |= 1U << i;
          if (w.standard_correct.contains(test::element(i))) a |= 1U << i;
        }
        ok += test::brute_judge(idx, neg, r.form, v, a) == Verdict::Correct;
      }
      return 100.0 * static_cast<double>(ok) / static_cast<double>(rs.size());
    };
    const double after = accuracy(kept);
    expect(after == 100.0, "world " + str(world) + ": retained accuracy " + str(after));
    expect(after >= accuracy(before), "world " + str(world) + ": filtering lowered accuracy");
    dropped_total += before.size() - kept.size();
  }
  expect(dropped_total > 0, "the assessor never dropped anything");
  return "200 worlds, " + str(dropped_total) + " answers dropped";
}

// --------------------------------------------------------- 8. parser round trip

std::string parser_round_trip() {
  test::Gen g(2024);
  for (int i = 0; i < 1000; ++i) {
    SectionMap m;
    for (Section s : kSectionOrder) {
      if (g.coin(0.6)) {
        std::string body = g.phrase(1, 8);
        if (g.coin(0.2)) body += g.pick(std::vector<std::string>{"?", ",", "!", " (maybe)", ": yes"});
        m.emplace_back(s, body);
      }
    }
    if (m.empty()) m.emplace_back(Section::FinalAnswer, g.phrase());
    const auto parsed = parse_completion(render_exemplar(m), PromptStrategy::CoTFull);
    expect(parsed.sections == m, "map " + str(i) + " did not survive render/parse");
  }
  const std::vector<std::pair<std::string, PromptStrategy>> refusals = {
      {" I don't know", PromptStrategy::FewShot},
      {" I don't know.", PromptStrategy::FewShot},
      {" Unknown", PromptStrategy::FewShot},
      {" N/A", PromptStrategy::FewShot},
      {" no answer.", PromptStrategy::FewShot},
      {"", PromptStrategy::FewShot},
      {"   \n  ", PromptStrategy::FewShot},
      {"Standard question: Where?\nReasoning: Hard to say.\nStandard answer: a park\n"
       "Negation logic: Not the park.\nAnswer: I don't know",
       PromptStrategy::CoTFull},
      {"Reasoning: No idea.\nAnswer: unknown", PromptStrategy::CoTNoNegationLogic},
      {"Reasoning: Nothing comes to mind.", PromptStrategy::CoTStandard},
  };
  for (const auto& [text, strategy] : refusals) {
    expect(is_no_answer(parse_completion(text, strategy)), "refusal fixture not no_answer: '" + text + "'");
  }
  expect(!is_no_answer(parse_completion(" I don't know the way home", PromptStrategy::FewShot)),
         "marker matched inside a real answer");
  return "1000 maps, " + str(refusals.size()) + " refusal fixtures";
}

// ---------------------------------------------------------- 9. report fidelity

const std::vector<std::string> kAnswerPool = {"something else", "the usual thing", "a rock", "a tree",
                                              "Not the usual thing", "I don't know"};

std::string cot_completion(const std::string& answer) {
  return "Standard question: What is usual here?\nReasoning: Think it through.\nStandard answer: the usual thing\n"
         "Negation logic: Anything else is not the usual thing.\nAnswer: " +
         answer;
}

struct Tally {
  size_t answers = 0, retained = 0, dropped = 0, no_answer = 0, salvaged = 0;
  AccuracyCell headline, unfiltered, pooled;
};

// Plurality over C/I votes with ties Incorrect; nullopt when no C/I vote.
std::optional<bool> recount_plurality(const std::vector<char>& votes) {
  int c = 0, i = 0;
  for (char v : votes) {
    c += v == 'C';
    i += v == 'I';
  }
  if (c + i == 0) return std::nullopt;
  return c > i;
}

void add_votes(AccuracyCell& per_answer, AccuracyCell* pooled, const std::vector<char>& votes) {
  if (auto p = recount_plurality(votes)) {
    ++per_answer.denominator;
    per_answer.correct += *p;
  } else {
    ++per_answer.excluded;
  }
  if (!pooled) return;
  for (char v : votes) {
    if (v == 'U') {
      ++pooled->excluded;
    } else {
      ++pooled->denominator;
      pooled->correct += v == 'C';
    }
  }
}

std::string report_fidelity() {
  test::Gen g(9090);
  const std::vector<std::string> rel_pool = {"xWant", "isAfter", "AtLocation", "CapableOf", "xReact"};
  const std::vector<std::string> arm_pool = {"Ours", "Ours-wo-pp", "Ours-wo-nl-pp", "FewShot"};
  size_t cells_checked = 0;
  size_t annotated_runs = 0;
  for (int run = 0; run < 50; ++run) {
    test::TempDir dir;
    std::vector<std::string> rels = rel_pool;
    g.shuffle(rels);
    rels.resize(static_cast<size_t>(g.range(1, 2)));
    const int per = g.range(1, 3);

    auto pick_answers = [&](bool cot) {
      std::vector<std::string> out;
      for (int k = 0, n = g.range(1, 5); k < n; ++k) {
        const auto& a = g.pick(kAnswerPool);
        out.push_back(cot ? cot_completion(a) : " " + a);
      }
      return out;
    };
    std::vector<std::string> verdicts;
    for (int k = 0, n = g.range(1, 4); k < n; ++k) verdicts.push_back(g.pick(std::vector<std::string>{" Correct", " Incorrect", " maybe"}));
    auto c = test::fixture_config(dir.path(), rels, per,
                                  {test::mock_contains("\nVerdict:", verdicts),
                                   test::mock_contains("Reasoning:", pick_answers(true)),
                                   test::mock_default(pick_answers(false))});
    c.arms.clear();
    for (const auto& a : arm_pool)
      if (g.coin(0.6)) c.arms.push_back(a);
    if (c.arms.empty()) c.arms.push_back(g.pick(arm_pool));
    run_experiment(c, dir / "run");

    // Raw records, final attempt per answer slot.
    std::map<std::string, json> finals;
    std::vector<std::string> order;
    {
      std::istringstream in(test::slurp(dir / "run/records.jsonl"));
      std::string line;
      while (std::getline(in, line)) {
        const auto j = json::parse(line);
        const std::string id = j["run_id"].get<std::string>() + "/" + j["triple_id"].get<std::string>() + "/" +
                               j["form"].get<std::string>() + "/" + j["arm"].get<std::string>() + "/" +
                               str(j["sample_index"].get<int>());
        auto it = finals.find(id);
        if (it == finals.end()) {
          finals.emplace(id, j);
          order.push_back(id);
        } else if (j["attempt"].get<int>() >= it->second["attempt"].get<int>()) {
          it->second = j;
        }
      }
    }

    const bool annotated = g.coin(0.5);
    std::map<std::string, std::vector<char>> labels;
    std::map<std::string, std::tuple<std::set<std::string>, std::set<std::string>, std::set<std::string>>> worlds;
    std::string side_file;
    if (annotated) {
      ++annotated_runs;
      std::string lines;
      const char* codes = "CCIIU";
      for (const auto& id : order) {
        if (finals[id]["no_answer"].get<bool>() && g.coin(0.7)) continue;
        for (int k = 0, n = g.range(1, 4); k < n; ++k) {
          const int option = g.range(0, 4);
          labels[id].push_back(codes[option]);
          lines += json{{"answer_id", id}, {"annotator_id", "ann" + str(k)}, {"label", to_string(kLabelOptions[static_cast<size_t>(option)])},
                        {"timestamp", ""}}
                       .dump() +
                   "\n";
        }
      }
      test::write(dir / "run/labels.jsonl", lines);
    } else {
      std::string lines;
      const json manifest = read_manifest(dir / "run");
      for (const auto& t : manifest["triples"]) {
        std::set<std::string> u(kAnswerPool.begin(), kAnswerPool.begin() + 4), v, a;
        for (const auto& x : u) {
          if (g.coin(0.7)) v.insert(x);
        }
        if (v.empty()) v.insert(*u.begin());
        for (const auto& x : v) {
          if (g.coin(0.4)) a.insert(x);
        }
        const std::string tid = t["id"];
        worlds[tid] = {u, v, a};
        lines += json{{"triple_id", tid}, {"U", u}, {"V", v}, {"A", a}}.dump() + "\n";
      }
      side_file = (dir / "worlds.jsonl").string();
      test::write(side_file, lines);
    }

    std::map<std::pair<std::string, std::string>, Tally> expected;
    for (const auto& id : order) {
      const auto& j = finals[id];
      const std::string arm = j["arm"];
      const std::string form = j["form"];
      auto& t = expected[{arm, form}];
      const bool retained = arm != "Ours" || j["filter"].is_null() || j["filter"]["keep"].get<bool>();
      const bool no_answer = j["no_answer"];
      ++t.answers;
      ++(retained ? t.retained : t.dropped);
      t.no_answer += no_answer;
      t.salvaged += j["salvaged"].get<bool>();
      std::vector<char> votes;
      if (annotated) {
        if (auto it = labels.find(id); it != labels.end()) {
          votes = it->second;
        } else if (no_answer) {
          votes = {'I'};
        }
      } else {
        const auto& [u, v, a] = worlds.at(j["triple_id"].get<std::string>());
        std::string ans = text::to_lower(j["final_answer"].get<std::string>());
        bool ok;
        if (no_answer) {
          ok = false;
        } else if (form == "standard") {
          ok = a.contains(ans);
        } else {
          ok = v.contains(ans) && !a.contains(ans);
        }
        votes = {ok ? 'C' : 'I'};
      }
      if (votes.empty()) continue;  // filtered out and never labeled
      add_votes(t.unfiltered, nullptr, votes);
      if (retained) add_votes(t.headline, &t.pooled, votes);
    }

    const auto rep = export_report(dir / "run", annotated ? LabelSource::Annotations : LabelSource::Oracle, side_file);
    expect(rep.cells.size() == expected.size(), "run " + str(run) + ": cell count differs");
    for (const auto& [key, t] : expected) {
      const auto it = rep.cells.find({key.first, parse_question_form(key.second)});
      const std::string where = "run " + str(run) + " " + key.first + "/" + key.second;
      expect(it != rep.cells.end(), where + ": missing cell");
      const auto& c = it->second;
      expect(c.answers == t.answers && c.retained == t.retained && c.dropped == t.dropped &&
                 c.no_answer == t.no_answer && c.salvaged == t.salvaged,
             where + ": answer counts differ");
      expect(c.headline == t.headline, where + ": headline " + c.headline.formatted() + " vs recount " + t.headline.formatted());
      expect(c.unfiltered == t.unfiltered, where + ": all-answers column differs");
      expect(c.pooled == t.pooled, where + ": pooled column differs");
      ++cells_checked;
    }
    if (annotated && rep.reliability) {
      const bool flagged = rep.to_text().find("NOT marked reliable") != std::string::npos;
      expect(flagged == (rep.reliability->alpha < kAlphaThreshold), "run " + str(run) + ": reliability flag wrong");
    }
  }
  expect(annotated_runs > 0 && annotated_runs < 50, "label sources not both exercised");

  // Reference columns, verbatim.
  test::TempDir dir;
  auto c = test::fixture_config(dir.path(), {"xWant"}, 1);
  run_experiment(c, dir / "run");
  std::string worlds;
  const json manifest = read_manifest(dir / "run");
  for (const auto& t : manifest["triples"]) {
    worlds += json{{"triple_id", t["id"]}, {"U", json::array({"x"})}, {"V", json::array({"x"})}, {"A", json::array()}}.dump() + "\n";
  }
  test::write(dir / "w.jsonl", worlds);
  const auto rep = export_report(dir / "run", LabelSource::Oracle, (dir / "w.jsonl").string());
  const auto j = rep.to_json();
  std::map<std::string, std::pair<json, json>> by_arm;
  for (const auto& row : j["accuracy"]) {
    (row["form"] == "standard" ? by_arm[row["arm"]].first : by_arm[row["arm"]].second) = row["reference"];
  }
  const std::vector<json> accuracy_refs = {by_arm["FewShot"].second, by_arm["FewShot"].first, by_arm["Ours"].first, by_arm["Ours"].second};
  const std::vector<json> want1 = {"78.7", "88.7", "88.1", "89.8"};
  expect(accuracy_refs == want1, "accuracy reference column: " + json(accuracy_refs).dump());
  std::vector<json> ablation_refs;
  for (const auto& row : j["ablation"]) ablation_refs.push_back(row["reference"]);
  const std::vector<json> want2 = {"89.8", "89.0", "86.0", "78.7"};
  expect(ablation_refs == want2, "ablation reference column: " + json(ablation_refs).dump());
  const auto text = rep.to_text();
  for (const char* v : {"[78.7]", "[88.7]", "[88.1]", "[89.8]", "89.0", "86.0"}) {
    expect(text.find(v) != std::string::npos, std::string("text report lacks ") + v);
  }
  return str(cells_checked) + " cells over 50 runs (" + str(annotated_runs) + " annotated) match the recount";
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<std::string()>>> criteria = {
      {"mock end-to-end determinism", mock_determinism},
      {"count law", count_law},
      {"oracle equivalence", oracle_equivalence},
      {"krippendorff alpha", alpha},
      {"prompt structure", prompt_structure},
      {"retry rule", retry_rule},
      {"filter properties", filter_properties},
      {"parser round trip", parser_round_trip},
      {"report fidelity", report_fidelity},
  };
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    std::string detail;
    bool ok = false;
    try {
      detail = check();
      ok = true;
    } catch (const Failure& f) {
      detail = f.what;
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
      if (std::getenv("NCQ_ACCEPTANCE_RETHROW")) throw;
    }
    failures += !ok;
    std::cout << (ok ? "PASS " : "FAIL ") << name << " - " << detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
