#include <doctest.h>

#include "ncq/prompt_builder.hpp"
#include "ncq/response_parser.hpp"
#include "ncq/text.hpp"
#include "support.hpp"

using namespace ncq;

namespace {

VerbalizedQuestion question(QuestionForm form) {
  const auto reg = TemplateRegistry::defaults();
  return reg.verbalize(Triple{"t1", "PersonX goes to the beach", Relation{"xWant"}, "swim"}, form);
}

QuestionForm form_for(PromptStrategy s) {
  return s == PromptStrategy::CoTStandard ? QuestionForm::Standard : QuestionForm::NegatedComplementary;
}

std::vector<Section> sections_of(const SectionMap& m) {
  std::vector<Section> out;
  for (const auto& [k, v] : m) out.push_back(k);
  return out;
}

}  // namespace

TEST_CASE("bundled exemplars are valid for every strategy") {
  const auto assets = PromptAssets::defaults();
  REQUIRE(assets.items.size() >= kExemplarsPerPrompt);
  for (PromptStrategy s : kStrategies) {
    for (QuestionForm f : kQuestionForms) {
      if (s == PromptStrategy::CoTStandard && f != QuestionForm::Standard) continue;
      if ((s == PromptStrategy::CoTFull || s == PromptStrategy::CoTNoNegationLogic) && f == QuestionForm::Standard)
        continue;
      for (const auto& src : assets.items) CHECK(validate_exemplar(project_exemplar(src, s, f), s).empty());
    }
  }
}

TEST_CASE("CoTFull prompt shows the five sections in order for every exemplar") {
  const auto assets = PromptAssets::defaults();
  const auto p = build_prompt(PromptStrategy::CoTFull, question(QuestionForm::NegatedComplementary), assets);
  const auto parsed = parse_prompt(p.rendered);
  REQUIRE(parsed.exemplars.size() == 5);
  const std::vector<Section> full(kSectionOrder.begin(), kSectionOrder.end());
  for (const auto& ex : parsed.exemplars) CHECK(sections_of(ex.sections) == full);
  REQUIRE(parsed.target_question);
  CHECK(*parsed.target_question == "PersonX goes to the beach. What does PersonX not want to do?");
  CHECK(p.preamble == assets.negation_preamble);
  CHECK(p.rendered.ends_with("Question: PersonX goes to the beach. What does PersonX not want to do?\n"));
}

TEST_CASE("FewShot prompt has five question/answer pairs and no reasoning") {
  const auto assets = PromptAssets::defaults();
  for (QuestionForm f : kQuestionForms) {
    const auto p = build_prompt(PromptStrategy::FewShot, question(f), assets);
    const auto parsed = parse_prompt(p.rendered);
    REQUIRE(parsed.exemplars.size() == 5);
    for (const auto& ex : parsed.exemplars) CHECK(sections_of(ex.sections) == std::vector{Section::FinalAnswer});
    CHECK(p.rendered.find("Reasoning:") == std::string::npos);
    CHECK(p.rendered.ends_with("\nAnswer:"));
    CHECK(p.preamble == (f == QuestionForm::Standard ? assets.standard_preamble : assets.negation_preamble));
  }
}

TEST_CASE("reduced chains carry no negation-logic label") {
  const auto assets = PromptAssets::defaults();
  const auto nl = build_prompt(PromptStrategy::CoTNoNegationLogic, question(QuestionForm::NegatedComplementary), assets);
  const auto st = build_prompt(PromptStrategy::CoTStandard, question(QuestionForm::Standard), assets);
  for (const auto* p : {&nl, &st}) {
    CHECK(p->rendered.find("Negation logic:") == std::string::npos);
    CHECK(p->rendered.find("Standard answer:") == std::string::npos);
    const auto parsed = parse_prompt(p->rendered);
    REQUIRE(parsed.exemplars.size() == 5);
    for (const auto& ex : parsed.exemplars) {
      CHECK(sections_of(ex.sections) == std::vector{Section::StandardReasoning, Section::FinalAnswer});
    }
  }
}

TEST_CASE("exemplar questions do not depend on the strategy within a form") {
  const auto assets = PromptAssets::defaults();
  const auto nc = question(QuestionForm::NegatedComplementary);
  std::vector<std::vector<std::string>> seen;
  for (PromptStrategy s : {PromptStrategy::FewShot, PromptStrategy::CoTFull, PromptStrategy::CoTNoNegationLogic}) {
    std::vector<std::string> qs;
    for (const auto& ex : parse_prompt(build_prompt(s, nc, assets).rendered).exemplars) qs.push_back(ex.question);
    seen.push_back(qs);
  }
  CHECK(seen[0] == seen[1]);
  CHECK(seen[1] == seen[2]);

  const auto st = question(QuestionForm::Standard);
  std::vector<std::string> a, b;
  for (const auto& ex : parse_prompt(build_prompt(PromptStrategy::FewShot, st, assets).rendered).exemplars)
    a.push_back(ex.question);
  for (const auto& ex : parse_prompt(build_prompt(PromptStrategy::CoTStandard, st, assets).rendered).exemplars)
    b.push_back(ex.question);
  CHECK(a == b);
}

TEST_CASE("prompt building is deterministic") {
  const auto assets = PromptAssets::defaults();
  for (PromptStrategy s : kStrategies) {
    const auto q = question(form_for(s));
    CHECK(build_prompt(s, q, assets).rendered == build_prompt(s, q, assets).rendered);
    CHECK(build_prompt(s, q, assets).hash() == text::sha256_hex(build_prompt(s, q, assets).rendered));
  }
}

TEST_CASE("strategy and question form must agree") {
  const auto assets = PromptAssets::defaults();
  CHECK_THROWS_AS(build_prompt(PromptStrategy::CoTFull, question(QuestionForm::Standard), assets), PromptError);
  CHECK_THROWS_AS(build_prompt(PromptStrategy::CoTStandard, question(QuestionForm::NegatedComplementary), assets),
                  PromptError);
}

TEST_CASE("too few exemplars is an error") {
  auto assets = PromptAssets::defaults();
  assets.items.resize(4);
  CHECK_THROWS_AS(build_prompt(PromptStrategy::FewShot, question(QuestionForm::Standard), assets), PromptError);
}

TEST_CASE("validate_exemplar findings") {
  const auto src = PromptAssets::defaults().items.front();
  auto full = project_exemplar(src, PromptStrategy::CoTFull, QuestionForm::NegatedComplementary);
  CHECK(validate_exemplar(full, PromptStrategy::CoTFull).empty());

  auto missing = full;
  std::erase_if(missing.sections, [](const auto& kv) { return kv.first == Section::NegationLogic; });
  const auto f1 = validate_exemplar(missing, PromptStrategy::CoTFull);
  REQUIRE(f1.size() == 1);
  CHECK(f1[0].kind == ValidationFinding::Kind::MissingSection);
  CHECK(f1[0].section == Section::NegationLogic);

  auto few = project_exemplar(src, PromptStrategy::FewShot, QuestionForm::NegatedComplementary);
  few.sections = {{Section::StandardReasoning, "because"}};
  const auto f2 = validate_exemplar(few, PromptStrategy::FewShot);
  REQUIRE(f2.size() == 1);
  CHECK(f2[0].kind == ValidationFinding::Kind::ExtraSection);

  auto swapped = full;
  std::swap(swapped.sections[0], swapped.sections[1]);
  bool out_of_order = false;
  for (const auto& f : validate_exemplar(swapped, PromptStrategy::CoTFull))
    out_of_order = out_of_order || f.kind == ValidationFinding::Kind::OutOfOrder;
  CHECK(out_of_order);

  auto empty = full;
  empty.sections[2].second = "  ";
  CHECK(validate_exemplar(empty, PromptStrategy::CoTFull).at(0).kind == ValidationFinding::Kind::EmptyText);
}

TEST_CASE("a bundle loaded from disk hashes all of its files") {
  test::TempDir dir;
  std::filesystem::create_directories(dir / "ex");
  test::write(dir / "manifest.json",
              R"({"name":"t","version":"2","exemplars":["ex/1.txt","ex/2.txt","ex/3.txt","ex/4.txt","ex/5.txt"]})");
  test::write(dir / "preamble.txt", "Negated preamble.\n");
  test::write(dir / "preamble_standard.txt", "Standard preamble.\n");
  const std::string body =
      "Question: Where is a fish not found?\nStandard question: Where is a fish found?\n"
      "Reasoning: Fish live in water.\nStandard answer: the sea\n"
      "Negation logic: Any dry place is not water.\nAnswer: the desert\n";
  for (int i = 1; i <= 5; ++i) test::write(dir / ("ex/" + std::to_string(i) + ".txt"), body);
  const auto a = PromptAssets::load(dir.path().string());
  CHECK(a.items.size() == 5);
  CHECK(a.items[0].negated_answer == "the desert");
  test::write(dir / "ex/3.txt", text::replace_all(body, "the desert", "a road"));
  CHECK(PromptAssets::load(dir.path().string()).version_hash != a.version_hash);
  test::write(dir / "preamble.txt", "Preamble.\nQuestion: sneaky\n");
  CHECK_THROWS_AS(PromptAssets::load(dir.path().string()), PromptError);
}
