#include "collage/reference.hpp"

#include "collage/errors.hpp"
#include "collage/util.hpp"

namespace collage::agents {

using providers::ChatPart;
using providers::ChatRequest;

ReferenceAgent::ReferenceAgent(providers::ChatProvider& chat, const PromptStore& prompts,
                               RepairConfig repair)
    : chat_(chat), prompts_(prompts), repair_(repair) {}

model::TransferDirections ReferenceAgent::extract_transfer_plan(const Image& reference,
                                                                const model::GridLayout& layout,
                                                                const ProductInput& target) {
  if (reference.empty()) throw PreconditionError("reference image must not be empty");
  if (!model::validate(layout).ok()) {
    throw PreconditionError("transfer extraction needs a valid layout");
  }
  check_product_input(target);

  // Turn 1: read the reference on its own. No target packshot here; the
  // analysis must describe the reference, not negotiate with the new product.
  ChatRequest analyze;
  analyze.system_prompt = "You analyze product marketing collages.";
  analyze.user_parts.push_back(ChatPart::make_text(prompts_.render("reference_abstract", {})));
  analyze.user_parts.push_back(ChatPart::make_image(reference));
  analyze.format = providers::ResponseFormat::free_text;
  analyze.temperature = 0.7;
  std::string analysis = chat_.chat_complete(analyze);
  if (util::trim(analysis).empty()) {
    throw SchemaError("reference analysis came back empty", {"reference analysis is empty"});
  }

  // Turn 2: structure the analysis into directions for the target layout.
  std::string layout_spec = std::to_string(layout.rows) + "x" + std::to_string(layout.cols);
  std::string text = prompts_.render(
      "reference_extract", {{"analysis_block", fenced_text("ANALYSIS", analysis)},
                            {"layout", layout_spec},
                            {"positions", util::join(layout.panel_order, ", ")},
                            {"product_name", target.name},
                            {"user_intent", util::trim(target.user_intent).empty()
                                                ? "(none given)"
                                                : target.user_intent}});
  ChatRequest extract;
  extract.system_prompt = "You analyze product marketing collages.";
  extract.user_parts.push_back(ChatPart::make_text(text));
  extract.user_parts.push_back(ChatPart::make_image(reference));
  extract.format = providers::ResponseFormat::json_object;
  extract.temperature = 0.0;

  model::TransferDirections directions;
  auto accept = [&directions, &layout](const std::string& raw) {
    return violations_of([&]() { directions = model::parse_transfer(raw, layout); });
  };
  run_structured(chat_, prompts_, extract, accept, repair_);
  directions.extras["raw_reference_analysis"] = analysis;
  return directions;
}

}  // namespace collage::agents
