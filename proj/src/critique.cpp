#include "collage/critique.hpp"

#include "collage/errors.hpp"
#include "collage/util.hpp"

namespace collage::agents {

using model::CritiqueReport;
using model::GateConfig;
using model::GateKind;
using model::NarrativeScores;
using model::PhotographicPlan;
using model::PhotoScores;
using model::ProductNarrativeFramework;
using model::Suggestion;
using providers::ChatPart;
using providers::ChatRequest;

CritiqueAgent::CritiqueAgent(providers::ChatProvider& chat, const PromptStore& prompts,
                             RepairConfig repair)
    : chat_(chat), prompts_(prompts), repair_(repair) {}

NarrativeScores CritiqueAgent::score_narrative(const Image& collage, const ProductInput& input,
                                               const ProductNarrativeFramework& framework) {
  if (collage.empty()) throw PreconditionError("cannot critique an empty collage");
  check_product_input(input);
  std::string text = prompts_.render(
      "gate1", {{"product_name", input.name},
                {"framework_json", fenced_json("FRAMEWORK", model::to_json(framework))}});
  ChatRequest request;
  request.system_prompt = "You are a strict critic of product marketing collages.";
  request.user_parts.push_back(ChatPart::make_text(text));
  request.user_parts.push_back(ChatPart::make_image(collage));
  request.user_parts.push_back(ChatPart::make_image(input.packshot));
  request.format = providers::ResponseFormat::json_object;
  request.temperature = 0.0;

  NarrativeScores scores;
  auto accept = [&scores](const std::string& raw) {
    return violations_of([&]() {
      scores = model::narrative_scores_from_json(model::parse_json_text(raw));
      model::ValidationReport report = model::validate(scores);
      if (!report.ok()) throw SchemaError("narrative scores: " + report.joined(), report.violations);
    });
  };
  run_structured(chat_, prompts_, request, accept, repair_);
  return scores;
}

PhotoScores CritiqueAgent::score_photography(const Image& collage, const ProductInput& input,
                                             const PhotographicPlan& plan) {
  if (collage.empty()) throw PreconditionError("cannot critique an empty collage");
  check_product_input(input);
  std::string text =
      prompts_.render("gate2", {{"product_name", input.name},
                                {"plan_json", fenced_json("PLAN", model::to_json(plan))}});
  ChatRequest request;
  request.system_prompt = "You are a strict critic of product marketing collages.";
  request.user_parts.push_back(ChatPart::make_text(text));
  request.user_parts.push_back(ChatPart::make_image(collage));
  request.user_parts.push_back(ChatPart::make_image(input.packshot));
  request.format = providers::ResponseFormat::json_object;
  request.temperature = 0.0;

  PhotoScores scores;
  auto accept = [&scores](const std::string& raw) {
    return violations_of([&]() {
      scores = model::photo_scores_from_json(model::parse_json_text(raw));
      model::ValidationReport report = model::validate(scores);
      if (!report.ok()) {
        throw SchemaError("photography scores: " + report.joined(), report.violations);
      }
    });
  };
  run_structured(chat_, prompts_, request, accept, repair_);
  return scores;
}

Suggestion CritiqueAgent::suggest(GateKind failing, const model::json& scores,
                                  const ProductNarrativeFramework& framework,
                                  const PhotographicPlan& plan) {
  std::string text = prompts_.render(
      "suggest",
      {{"failing_gate", model::to_string(failing)},
       {"scores_json", fenced_json("SCORES", scores)},
       {"framework_json", fenced_json("FRAMEWORK", model::to_json(framework))},
       {"plan_json", fenced_json("PLAN", model::to_json(plan))},
       {"positions", util::join(plan.layout.panel_order, ", ")},
       {"framework_fields", util::join(model::framework_field_names(), ", ")}});
  ChatRequest request;
  request.system_prompt = "You are a strict critic of product marketing collages.";
  request.user_parts.push_back(ChatPart::make_text(text));
  request.format = providers::ResponseFormat::json_object;
  request.temperature = 0.0;

  Suggestion suggestion;
  const model::GridLayout& layout = plan.layout;
  auto accept = [&suggestion, &layout, failing](const std::string& raw) {
    return violations_of([&]() {
      suggestion = model::suggestion_from_json(model::parse_json_text(raw));
      model::ValidationReport report = model::validate(suggestion, layout);
      if (suggestion.gate != failing) {
        report.add("suggestion.gate: must name the failing gate");
      }
      if (!report.ok()) throw SchemaError("suggestion: " + report.joined(), report.violations);
    });
  };
  run_structured(chat_, prompts_, request, accept, repair_);
  return suggestion;
}

CritiqueReport CritiqueAgent::critique(const Image& collage, const ProductInput& input,
                                       const ProductNarrativeFramework& framework,
                                       const PhotographicPlan& plan, const GateConfig& gates) {
  {
    model::ValidationReport report = model::validate(gates);
    if (!report.ok()) throw PreconditionError("bad gate config: " + report.joined());
  }
  CritiqueReport report;
  report.gates = gates;
  report.narrative = score_narrative(collage, input, framework);
  report.gate1_pass = model::gate_pass(report.narrative, gates);

  if (report.gate1_pass) {
    report.photography = score_photography(collage, input, plan);
    report.gate2_pass = model::gate_pass(*report.photography, gates);
  }

  if (!model::overall_pass(report)) {
    GateKind failing = report.gate1_pass ? GateKind::photography : GateKind::narrative;
    model::json scores = report.gate1_pass ? model::to_json(*report.photography)
                                           : model::to_json(report.narrative);
    report.suggestion = suggest(failing, scores, framework, plan);
  }
  return report;
}

}  // namespace collage::agents
