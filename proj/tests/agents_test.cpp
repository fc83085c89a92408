#include <deque>

#include "doctest.h"

#include "collage/critique.hpp"
#include "collage/errors.hpp"
#include "collage/generation.hpp"
#include "collage/ideation.hpp"
#include "collage/reference.hpp"
#include "collage/structured_output.hpp"
#include "test_support.hpp"

using namespace collage;
using namespace collage::agents;
using collage::testing::ScriptedChatProvider;
using collage::testing::TempDir;

namespace {

PromptStore& shared_prompts() {
  static PromptStore store(testing::prompts_dir());
  return store;
}

providers::MockChatProvider make_mock(
    std::map<std::string, std::filesystem::path> overrides = {}) {
  return providers::MockChatProvider(testing::fixtures_dir(), std::move(overrides));
}

model::ProductNarrativeFramework fixture_framework() {
  return model::parse_framework(util::read_text_file(testing::fixtures_dir() / "stage1.json"));
}

}  // namespace

TEST_CASE("stage 1 produces the framework and validates it") {
  providers::MockChatProvider mock = make_mock();
  IdeationAgent agent(mock, shared_prompts());
  ProductInput input = testing::make_input();

  model::ProductNarrativeFramework framework =
      agent.plan_what(input, std::nullopt, std::nullopt, std::nullopt);
  CHECK(model::validate(framework).ok());
  CHECK(model::fields_equal(framework, fixture_framework()));
  CHECK(agent.last_repair_turns() == 0);
}

TEST_CASE("stage 1 revision freezes every field the suggestion does not name") {
  providers::MockChatProvider mock = make_mock();
  IdeationAgent agent(mock, shared_prompts());
  ProductInput input = testing::make_input();

  model::ProductNarrativeFramework prior = fixture_framework();
  prior.product_essence = "a prior essence the model must not touch";
  prior.usage_context = "a prior context the model must not touch";
  prior.target_consumer_profile = "a prior profile the model must not touch";
  prior.product_usage = "the weak field the suggestion names";

  model::Suggestion suggestion;
  suggestion.gate = model::GateKind::narrative;
  suggestion.what = "usage is invisible";
  suggestion.where = "product_usage";
  suggestion.how = "show the dose being worked in";

  model::ProductNarrativeFramework revised =
      agent.plan_what(input, std::nullopt, suggestion, prior);
  CHECK(revised.product_essence == prior.product_essence);
  CHECK(revised.usage_context == prior.usage_context);
  CHECK(revised.target_consumer_profile == prior.target_consumer_profile);
  CHECK(revised.product_usage != prior.product_usage);
  CHECK(revised.product_usage.find("show the dose being worked in") != std::string::npos);
  CHECK(revised.narrative_framework != prior.narrative_framework);
}

TEST_CASE("stage 1 revision preconditions") {
  providers::MockChatProvider mock = make_mock();
  IdeationAgent agent(mock, shared_prompts());
  ProductInput input = testing::make_input();
  model::Suggestion suggestion;
  suggestion.gate = model::GateKind::narrative;
  suggestion.what = "w";
  suggestion.where = "product_usage";
  suggestion.how = "h";

  CHECK_THROWS_AS(agent.plan_what(input, std::nullopt, suggestion, std::nullopt),
                  PreconditionError);
  CHECK_THROWS_AS(agent.plan_what(input, std::nullopt, std::nullopt, fixture_framework()),
                  PreconditionError);
  suggestion.gate = model::GateKind::photography;
  CHECK_THROWS_AS(agent.plan_what(input, std::nullopt, suggestion, fixture_framework()),
                  PreconditionError);

  ProductInput nameless = input;
  nameless.name = "";
  CHECK_THROWS_AS(agent.plan_what(nameless, std::nullopt, std::nullopt, std::nullopt),
                  PreconditionError);
}

TEST_CASE("stage 2 echoes the requested layout and covers every panel") {
  providers::MockChatProvider mock = make_mock();
  IdeationAgent agent(mock, shared_prompts());
  ProductInput input = testing::make_input();
  model::ProductNarrativeFramework framework = fixture_framework();

  for (const auto& [rows, cols] : std::vector<std::pair<int, int>>{{2, 2}, {3, 3}, {1, 3}}) {
    model::GridLayout layout = model::GridLayout::standard(rows, cols);
    model::PhotographicPlan plan =
        agent.plan_how(input, framework, layout, std::nullopt, std::nullopt);
    CHECK(plan.layout == layout);
    CHECK(model::validate(plan).ok());
    for (const auto& label : layout.panel_order) CHECK(plan.panels.count(label) == 1);
  }
}

TEST_CASE("stage 2 refinement switches to the refined style and checks the gate kind") {
  providers::MockChatProvider mock = make_mock();
  IdeationAgent agent(mock, shared_prompts());
  ProductInput input = testing::make_input();
  model::ProductNarrativeFramework framework = fixture_framework();
  model::GridLayout layout = model::GridLayout::standard(2, 2);

  model::PhotographicPlan fresh =
      agent.plan_how(input, framework, layout, std::nullopt, std::nullopt);

  model::Suggestion refinement;
  refinement.gate = model::GateKind::photography;
  refinement.what = "palette drifts";
  refinement.where = "global";
  refinement.how = "lock the palette";
  model::PhotographicPlan refined =
      agent.plan_how(input, framework, layout, std::nullopt, refinement);
  CHECK(refined.style.color != fresh.style.color);
  CHECK(model::validate(refined).ok());

  refinement.gate = model::GateKind::narrative;
  CHECK_THROWS_AS(agent.plan_how(input, framework, layout, std::nullopt, refinement),
                  PreconditionError);

  model::ProductNarrativeFramework hollow;
  CHECK_THROWS_AS(agent.plan_how(input, hollow, layout, std::nullopt, std::nullopt),
                  PreconditionError);
}

TEST_CASE("stage 3 prompts carry the style digest and cover the grid") {
  providers::MockChatProvider mock = make_mock();
  providers::MockImageProvider image;
  IdeationAgent ideation(mock, shared_prompts());
  GenerationAgent generation(mock, image, shared_prompts());
  ProductInput input = testing::make_input();
  model::ProductNarrativeFramework framework = fixture_framework();
  model::GridLayout layout = model::GridLayout::standard(2, 2);
  model::PhotographicPlan plan =
      ideation.plan_how(input, framework, layout, std::nullopt, std::nullopt);

  model::PromptSet set = generation.compile_prompts(plan, framework, input);
  CHECK(model::validate(set, layout).ok());
  std::string digest = model::style_digest(plan.style);
  for (const auto& label : layout.panel_order) {
    const std::string& prompt = set.prompts.at(label);
    CHECK(prompt.find(digest) != std::string::npos);
    CHECK(prompt.size() >= 20);
  }
  CHECK(set.fidelity_block.find(input.name) != std::string::npos);
  CHECK_FALSE(set.aesthetic_block.empty());

  model::PhotographicPlan invalid = plan;
  invalid.panels.erase("top_left");
  CHECK_THROWS_AS(generation.compile_prompts(invalid, framework, input), PreconditionError);
}

TEST_CASE("synthesis writes the canvas and prompt artifacts with one image call") {
  providers::MockChatProvider mock = make_mock();
  providers::MockImageProvider image;
  providers::CountingImageProvider image_spy(image);
  IdeationAgent ideation(mock, shared_prompts());
  GenerationAgent generation(mock, image_spy, shared_prompts());
  ProductInput input = testing::make_input();
  model::ProductNarrativeFramework framework = fixture_framework();
  model::GridLayout layout = model::GridLayout::standard(2, 2);
  model::PhotographicPlan plan =
      ideation.plan_how(input, framework, layout, std::nullopt, std::nullopt);
  model::PromptSet set = generation.compile_prompts(plan, framework, input);

  TempDir dir;
  std::filesystem::path collage_path =
      generation.synthesize_collage(set, input, layout, 0, dir.path);
  CHECK(collage_path.filename() == "collage_iter0.png");
  CHECK(image_spy.calls() == 1);
  CHECK(std::filesystem::exists(dir.path / "prompts_iter0.json"));

  Image collage = load_image(collage_path);
  CHECK(collage.width == 1024);
  CHECK(collage.height == 1024);
  CHECK_FALSE(generation.last_generation_resized());

  model::PromptSet stored =
      model::parse_prompt_set(util::read_text_file(dir.path / "prompts_iter0.json"));
  CHECK(stored.prompts == set.prompts);
}

TEST_CASE("synthesis panel edge scales with the layout") {
  providers::MockChatProvider mock = make_mock();
  providers::MockImageProvider image;
  IdeationAgent ideation(mock, shared_prompts());
  GenerationAgent::Config config;
  config.panel_edge = 64;
  GenerationAgent generation(mock, image, shared_prompts(), config);
  ProductInput input = testing::make_input();
  model::GridLayout layout = model::GridLayout::standard(1, 3);
  model::PhotographicPlan plan =
      ideation.plan_how(input, fixture_framework(), layout, std::nullopt, std::nullopt);
  model::PromptSet set = generation.compile_prompts(plan, fixture_framework(), input);

  TempDir dir;
  std::filesystem::path path = generation.synthesize_collage(set, input, layout, 2, dir.path);
  Image collage = load_image(path);
  CHECK(collage.width == 192);
  CHECK(collage.height == 64);
  CHECK(path.filename() == "collage_iter2.png");
}

TEST_CASE("reference agent reads the reference in two turns without the packshot") {
  providers::MockChatProvider mock = make_mock();
  testing::MarkerCountingChat markers(mock);
  providers::CountingChatProvider spy(markers);
  ReferenceAgent agent(spy, shared_prompts());
  ProductInput input = testing::make_input();
  input.reference = testing::make_reference_grid();
  model::GridLayout layout = model::GridLayout::standard(2, 2);

  model::TransferDirections directions =
      agent.extract_transfer_plan(*input.reference, layout, input);
  CHECK(spy.calls() == 2);
  CHECK(markers.count(providers::kMarkerRefAbstract) == 1);
  CHECK(markers.count(providers::kMarkerRefExtract) == 1);
  CHECK(model::validate(directions, layout).ok());
  CHECK(directions.panel_roles.at("top_left") == "establishing the setting");
  CHECK(directions.panel_roles.at("bottom_right") == "landing the emotional payoff");
  CHECK(directions.panel_directives.at("top_left").hero_presence == model::HeroPresence::none);
  CHECK(directions.panel_directives.at("top_left").hero_number == 0);
  CHECK(directions.panel_directives.at("top_right").hero_presence == model::HeroPresence::full);
}

TEST_CASE("reference agent adapts roles to layouts the fixture does not cover") {
  providers::MockChatProvider mock = make_mock();
  ReferenceAgent agent(mock, shared_prompts());
  ProductInput input = testing::make_input();
  Image reference = testing::make_reference_grid();
  model::GridLayout layout = model::GridLayout::standard(3, 3);

  model::TransferDirections directions = agent.extract_transfer_plan(reference, layout, input);
  CHECK(model::validate(directions, layout).ok());
  CHECK(directions.panel_roles.size() == 9);
  CHECK(directions.panel_directives.size() == 9);
}

TEST_CASE("critique passes both gates on the happy fixtures") {
  providers::MockChatProvider mock = make_mock();
  testing::MarkerCountingChat markers(mock);
  CritiqueAgent agent(markers, shared_prompts());
  IdeationAgent ideation(markers, shared_prompts());
  ProductInput input = testing::make_input();
  model::ProductNarrativeFramework framework = fixture_framework();
  model::PhotographicPlan plan = ideation.plan_how(input, framework,
                                                   model::GridLayout::standard(2, 2),
                                                   std::nullopt, std::nullopt);
  Image collage = testing::make_panel_grid(2, 2, {{{10, 20, 30}}, {{40, 50, 60}},
                                                  {{70, 80, 90}}, {{100, 110, 120}}}, 8);

  model::GateConfig gates;
  model::CritiqueReport report = agent.critique(collage, input, framework, plan, gates);
  CHECK(report.gate1_pass);
  REQUIRE(report.gate2_pass.has_value());
  CHECK(*report.gate2_pass);
  CHECK(model::overall_pass(report));
  CHECK_FALSE(report.suggestion.has_value());
  REQUIRE(report.photography.has_value());
  CHECK(markers.count(providers::kMarkerGate1) == 1);
  CHECK(markers.count(providers::kMarkerGate2) == 1);
  CHECK(markers.count(providers::kMarkerSuggest) == 0);
  CHECK(report.gates.tau_narrative == gates.tau_narrative);
}

TEST_CASE("gate 1 failure short-circuits gate 2 and asks for a narrative suggestion") {
  providers::MockChatProvider mock = make_mock(
      {{providers::kMarkerGate1, testing::fixtures_dir() / "variants" / "gate1_low.json"}});
  testing::MarkerCountingChat markers(mock);
  CritiqueAgent agent(markers, shared_prompts());
  IdeationAgent ideation(markers, shared_prompts());
  ProductInput input = testing::make_input();
  model::ProductNarrativeFramework framework = fixture_framework();
  model::PhotographicPlan plan = ideation.plan_how(input, framework,
                                                   model::GridLayout::standard(2, 2),
                                                   std::nullopt, std::nullopt);
  Image collage = testing::make_panel_grid(2, 2, {{{9, 9, 9}}}, 8);

  model::CritiqueReport report =
      agent.critique(collage, input, framework, plan, model::GateConfig{});
  CHECK_FALSE(report.gate1_pass);
  CHECK_FALSE(report.photography.has_value());
  CHECK_FALSE(report.gate2_pass.has_value());
  CHECK(markers.count(providers::kMarkerGate2) == 0);
  REQUIRE(report.suggestion.has_value());
  CHECK(report.suggestion->gate == model::GateKind::narrative);
  CHECK(report.suggestion->where == "product_usage");
  CHECK(model::min_score(report.narrative) == 3);
}

TEST_CASE("gate 2 failure yields a photography suggestion") {
  providers::MockChatProvider mock = make_mock(
      {{providers::kMarkerGate2, testing::fixtures_dir() / "variants" / "gate2_low.json"}});
  testing::MarkerCountingChat markers(mock);
  CritiqueAgent agent(markers, shared_prompts());
  IdeationAgent ideation(markers, shared_prompts());
  ProductInput input = testing::make_input();
  model::ProductNarrativeFramework framework = fixture_framework();
  model::PhotographicPlan plan = ideation.plan_how(input, framework,
                                                   model::GridLayout::standard(2, 2),
                                                   std::nullopt, std::nullopt);
  Image collage = testing::make_panel_grid(2, 2, {{{9, 9, 9}}}, 8);

  model::CritiqueReport report =
      agent.critique(collage, input, framework, plan, model::GateConfig{});
  CHECK(report.gate1_pass);
  REQUIRE(report.gate2_pass.has_value());
  CHECK_FALSE(*report.gate2_pass);
  REQUIRE(report.suggestion.has_value());
  CHECK(report.suggestion->gate == model::GateKind::photography);
  CHECK(report.suggestion->where == "global");
  CHECK(markers.count(providers::kMarkerSuggest) == 1);
}

TEST_CASE("mean rule can pass a report the min rule fails") {
  providers::MockChatProvider mock = make_mock(
      {{providers::kMarkerGate1, testing::fixtures_dir() / "variants" / "gate1_low.json"}});
  CritiqueAgent agent(mock, shared_prompts());
  IdeationAgent ideation(mock, shared_prompts());
  ProductInput input = testing::make_input();
  model::ProductNarrativeFramework framework = fixture_framework();
  model::PhotographicPlan plan = ideation.plan_how(input, framework,
                                                   model::GridLayout::standard(2, 2),
                                                   std::nullopt, std::nullopt);
  Image collage = testing::make_panel_grid(2, 2, {{{9, 9, 9}}}, 8);

  model::GateConfig mean_gates;
  mean_gates.rule = model::GateRule::mean;
  model::CritiqueReport report = agent.critique(collage, input, framework, plan, mean_gates);
  CHECK(report.gate1_pass);

  model::GateConfig bad;
  bad.tau_narrative = 9;
  CHECK_THROWS_AS(agent.critique(collage, input, framework, plan, bad), PreconditionError);
}

TEST_CASE("a malformed first answer is repaired within budget") {
  providers::MockChatProvider mock = make_mock(
      {{providers::kMarkerStage1, testing::fixtures_dir() / "variants" / "stage1_invalid.json"}});
  providers::CountingChatProvider spy(mock);
  IdeationAgent agent(spy, shared_prompts());
  ProductInput input = testing::make_input();

  model::ProductNarrativeFramework framework =
      agent.plan_what(input, std::nullopt, std::nullopt, std::nullopt);
  CHECK(agent.last_repair_turns() == 1);
  CHECK(spy.calls() == 2);
  CHECK(model::validate(framework).ok());
  CHECK(model::fields_equal(framework, fixture_framework()));
}

TEST_CASE("stage 2 repair also recovers") {
  providers::MockChatProvider mock = make_mock(
      {{providers::kMarkerStage2, testing::fixtures_dir() / "variants" / "stage2_invalid.json"}});
  IdeationAgent agent(mock, shared_prompts());
  ProductInput input = testing::make_input();

  model::PhotographicPlan plan =
      agent.plan_how(input, fixture_framework(), model::GridLayout::standard(2, 2), std::nullopt,
                     std::nullopt);
  CHECK(agent.last_repair_turns() == 1);
  CHECK(model::validate(plan).ok());
}

TEST_CASE("the repair budget is finite and exhausts into MalformedPlan") {
  providers::MockChatProvider mock(testing::fixtures_dir() / "variants" / "exhaust");
  providers::CountingChatProvider spy(mock);
  IdeationAgent agent(spy, shared_prompts());
  ProductInput input = testing::make_input();

  try {
    agent.plan_what(input, std::nullopt, std::nullopt, std::nullopt);
    FAIL("expected MalformedPlan");
  } catch (const MalformedPlan& e) {
    CHECK_FALSE(e.violations().empty());
  }
  CHECK(spy.calls() == 3);

  IdeationAgent::Config tight;
  tight.repair.budget = 0;
  providers::MockChatProvider mock2(testing::fixtures_dir() / "variants" / "exhaust");
  providers::CountingChatProvider spy2(mock2);
  IdeationAgent strict(spy2, shared_prompts(), tight);
  CHECK_THROWS_AS(strict.plan_what(input, std::nullopt, std::nullopt, std::nullopt),
                  MalformedPlan);
  CHECK(spy2.calls() == 1);
}

TEST_CASE("run_structured repairs with the violations and the original request") {
  ScriptedChatProvider chat({"not json at all", "{\"answer\": 42}"});
  PromptStore& prompts = shared_prompts();

  providers::ChatRequest initial;
  initial.system_prompt = "sys";
  initial.user_parts.push_back(providers::ChatPart::make_text("TASK: DEMO\nproduce the answer"));

  int parsed_value = 0;
  auto accept = [&parsed_value](const std::string& raw) {
    return violations_of([&]() {
      model::json j = model::parse_json_text(raw);
      if (!j.contains("answer")) throw SchemaError("answer: missing", {"answer: missing"});
      parsed_value = j["answer"].get<int>();
    });
  };

  StructuredOutcome outcome = run_structured(chat, prompts, initial, accept, RepairConfig{});
  CHECK(outcome.repair_turns == 1);
  CHECK(parsed_value == 42);
  REQUIRE(chat.requests.size() == 2);
  std::string repair_text = chat.requests[1].joined_text();
  CHECK(repair_text.find(providers::kMarkerRepair) == 0);
  CHECK(repair_text.find("not json at all") != std::string::npos);
  CHECK(repair_text.find("produce the answer") != std::string::npos);
  CHECK(chat.requests[1].system_prompt == "sys");
  CHECK(chat.requests[1].temperature == 0.0);
}

TEST_CASE("run_structured gives up when the budget is spent") {
  ScriptedChatProvider chat({"bad", "still bad", "no better"});
  providers::ChatRequest initial;
  initial.user_parts.push_back(providers::ChatPart::make_text("TASK: DEMO"));
  auto reject_all = [](const std::string&) {
    return std::vector<std::string>{"never acceptable"};
  };
  CHECK_THROWS_AS(
      run_structured(chat, shared_prompts(), initial, reject_all, RepairConfig{}),
      MalformedPlan);
  CHECK(chat.requests.size() == 3);
}

TEST_CASE("fenced blocks print the label and fence exactly") {
  CHECK(fenced_json("PLAN", model::json{{"a", 1}}) == "PLAN:\n```json\n{\n  \"a\": 1\n}\n```\n");
  CHECK(fenced_text("NOTES", "line") == "NOTES:\n```\nline\n```\n");
}

TEST_CASE("violations_of captures structured failures and lets others fly") {
  auto schema = violations_of([]() {
    throw SchemaError("two problems", {"first", "second"});
  });
  CHECK(schema == std::vector<std::string>{"first", "second"});
  auto parse = violations_of([]() { throw ParseError("unreadable"); });
  REQUIRE(parse.size() == 1);
  CHECK(parse[0] == "unreadable");
  CHECK(violations_of([]() {}).empty());
  CHECK_THROWS_AS(violations_of([]() { throw IoError("disk"); }), IoError);
}
