#include "collage/ideation.hpp"

#include "collage/errors.hpp"
#include "collage/util.hpp"

namespace collage::agents {

using model::GridLayout;
using model::PhotographicPlan;
using model::ProductNarrativeFramework;
using model::Suggestion;
using model::TransferDirections;
using providers::ChatPart;
using providers::ChatRequest;

namespace {

std::string intent_or_none(const std::string& intent) {
  return util::trim(intent).empty() ? "(none given)" : intent;
}

}  // namespace

IdeationAgent::IdeationAgent(providers::ChatProvider& chat, const PromptStore& prompts,
                             Config config)
    : chat_(chat), prompts_(prompts), config_(config) {}

ProductNarrativeFramework IdeationAgent::plan_what(
    const ProductInput& input, const std::optional<TransferDirections>& transfer,
    const std::optional<Suggestion>& revision,
    const std::optional<ProductNarrativeFramework>& prior) {
  check_product_input(input);
  if (revision.has_value() != prior.has_value()) {
    throw PreconditionError("a revision needs both the suggestion and the prior framework");
  }
  if (revision && revision->gate != model::GateKind::narrative) {
    throw PreconditionError("only a narrative suggestion can drive a revision");
  }

  std::string transfer_block;
  if (transfer) {
    transfer_block = prompts_.render(
        "stage1_transfer_block", {{"transfer_json", fenced_json("TRANSFER_DIRECTIONS",
                                                                model::to_json(*transfer))}});
  }
  std::string revision_block;
  if (revision) {
    revision_block = prompts_.render(
        "stage1_revision_block",
        {{"prior_json", fenced_json("PRIOR_FRAMEWORK", model::to_json(*prior))},
         {"suggestion_json", fenced_json("SUGGESTION", model::to_json(*revision))}});
  }

  std::string text = prompts_.render("stage1", {{"product_name", input.name},
                                                {"user_intent", intent_or_none(input.user_intent)},
                                                {"transfer_block", transfer_block},
                                                {"revision_block", revision_block}});
  ChatRequest request;
  request.system_prompt = "You plan product marketing collages.";
  request.user_parts.push_back(ChatPart::make_text(text));
  request.user_parts.push_back(ChatPart::make_image(input.packshot));
  request.format = providers::ResponseFormat::json_object;
  request.temperature = config_.stage1_temperature;

  ProductNarrativeFramework framework;
  auto accept = [&framework](const std::string& raw) {
    return violations_of([&]() { framework = model::parse_framework(raw); });
  };
  StructuredOutcome outcome = run_structured(chat_, prompts_, request, accept, config_.repair);
  last_repair_turns_ = outcome.repair_turns;

  if (revision) {
    // Freeze everything the suggestion did not name. The model already saw
    // this instruction; enforcing it here makes it a guarantee, not a hope.
    for (const auto& field : model::framework_field_names()) {
      if (field == revision->where) continue;
      if (field == "product_essence") framework.product_essence = prior->product_essence;
      if (field == "product_usage") framework.product_usage = prior->product_usage;
      if (field == "usage_context") framework.usage_context = prior->usage_context;
      if (field == "target_consumer_profile") {
        framework.target_consumer_profile = prior->target_consumer_profile;
      }
    }
  }
  return framework;
}

PhotographicPlan IdeationAgent::plan_how(const ProductInput& input,
                                         const ProductNarrativeFramework& framework,
                                         const GridLayout& layout,
                                         const std::optional<TransferDirections>& transfer,
                                         const std::optional<Suggestion>& refinement) {
  check_product_input(input);
  {
    model::ValidationReport report = model::validate(framework);
    if (!report.ok()) {
      throw PreconditionError("plan_how needs a valid framework: " + report.joined());
    }
  }
  if (!model::validate(layout).ok()) throw PreconditionError("plan_how needs a valid layout");
  if (refinement && refinement->gate != model::GateKind::photography) {
    throw PreconditionError("only a photography suggestion can drive a refinement");
  }

  std::string transfer_block;
  if (transfer) {
    transfer_block = prompts_.render(
        "stage2_transfer_block", {{"transfer_json", fenced_json("TRANSFER_DIRECTIONS",
                                                                model::to_json(*transfer))}});
  }
  std::string refinement_block;
  if (refinement) {
    refinement_block = prompts_.render(
        "stage2_refinement_block",
        {{"suggestion_json", fenced_json("REFINEMENT", model::to_json(*refinement))}});
  }

  std::string layout_spec = std::to_string(layout.rows) + "x" + std::to_string(layout.cols);
  std::string text = prompts_.render(
      "stage2", {{"framework_json", fenced_json("FRAMEWORK", model::to_json(framework))},
                 {"layout", layout_spec},
                 {"positions", util::join(layout.panel_order, ", ")},
                 {"transfer_block", transfer_block},
                 {"refinement_block", refinement_block}});
  ChatRequest request;
  request.system_prompt = "You plan product marketing collages.";
  request.user_parts.push_back(ChatPart::make_text(text));
  request.user_parts.push_back(ChatPart::make_image(input.packshot));
  request.format = providers::ResponseFormat::json_object;
  request.temperature = config_.stage2_temperature;

  PhotographicPlan plan;
  auto accept = [&plan, &layout](const std::string& raw) {
    return violations_of([&]() {
      plan = model::parse_plan(raw);
      if (!(plan.layout == layout)) {
        throw SchemaError("plan.layout: does not match the requested grid",
                          {"plan.layout: does not match the requested grid"});
      }
    });
  };
  StructuredOutcome outcome = run_structured(chat_, prompts_, request, accept, config_.repair);
  last_repair_turns_ = outcome.repair_turns;
  return plan;
}

}  // namespace collage::agents
