#include "collage/generation.hpp"

#include <algorithm>

#include "collage/errors.hpp"
#include "collage/util.hpp"

namespace collage::agents {

using model::GridLayout;
using model::PhotographicPlan;
using model::ProductNarrativeFramework;
using model::PromptSet;
using providers::ChatPart;
using providers::ChatRequest;

GenerationAgent::GenerationAgent(providers::ChatProvider& chat,
                                 providers::ImageGenProvider& image, const PromptStore& prompts,
                                 Config config)
    : chat_(chat), image_(image), prompts_(prompts), config_(config) {}

std::pair<std::string, std::string> GenerationAgent::build_constraint_blocks(
    const ProductInput& input) const {
  std::string fidelity = prompts_.render("fidelity_block", {{"product_name", input.name}});
  std::string aesthetic = prompts_.render("aesthetic_block", {{"product_name", input.name}});
  return {fidelity, aesthetic};
}

PromptSet GenerationAgent::compile_prompts(const PhotographicPlan& plan,
                                           const ProductNarrativeFramework& framework,
                                           const ProductInput& input) {
  check_product_input(input);
  {
    model::ValidationReport report = model::validate(plan);
    if (!report.ok()) {
      throw PreconditionError("compile_prompts needs a valid plan: " + report.joined());
    }
  }
  std::string digest = model::style_digest(plan.style);
  std::string text = prompts_.render(
      "stage3", {{"plan_json", fenced_json("PLAN", model::to_json(plan))},
                 {"framework_json", fenced_json("FRAMEWORK", model::to_json(framework))},
                 {"style_digest", digest},
                 {"positions", util::join(plan.layout.panel_order, ", ")}});
  ChatRequest request;
  request.system_prompt = "You write prompts for a photographic image model.";
  request.user_parts.push_back(ChatPart::make_text(text));
  request.format = providers::ResponseFormat::json_object;
  request.temperature = config_.stage3_temperature;

  PromptSet result;
  const GridLayout& layout = plan.layout;
  auto accept = [&result, &layout, &digest](const std::string& raw) {
    return violations_of([&]() {
      model::json j = model::parse_json_text(raw);
      if (!j.is_object() || !j.contains("prompts") || !j["prompts"].is_object()) {
        throw SchemaError("prompts: missing (object)", {"prompts: missing (object)"});
      }
      PromptSet parsed;
      std::vector<std::string> violations;
      for (auto it = j["prompts"].begin(); it != j["prompts"].end(); ++it) {
        if (!it.value().is_string()) {
          violations.push_back("prompts." + it.key() + ": expected string");
          continue;
        }
        parsed.prompts[it.key()] = it.value().get<std::string>();
      }
      for (const auto& label : layout.panel_order) {
        auto found = parsed.prompts.find(label);
        if (found == parsed.prompts.end()) {
          violations.push_back("prompts." + label + ": missing");
          continue;
        }
        if (found->second.size() < 20) {
          violations.push_back("prompts." + label + ": shorter than 20 characters");
        }
        if (found->second.find(digest) == std::string::npos) {
          violations.push_back("prompts." + label + ": style digest not included verbatim");
        }
      }
      for (const auto& [label, prompt] : parsed.prompts) {
        if (std::find(layout.panel_order.begin(), layout.panel_order.end(), label) ==
            layout.panel_order.end()) {
          violations.push_back("prompts." + label + ": not a panel of this layout");
        }
      }
      if (!violations.empty()) {
        throw SchemaError("prompt set rejected: " + util::join(violations, "; "), violations);
      }
      result.prompts = std::move(parsed.prompts);
    });
  };
  StructuredOutcome outcome = run_structured(chat_, prompts_, request, accept, config_.repair);
  last_repair_turns_ = outcome.repair_turns;

  auto [fidelity, aesthetic] = build_constraint_blocks(input);
  result.fidelity_block = fidelity;
  result.aesthetic_block = aesthetic;
  return result;
}

std::filesystem::path GenerationAgent::synthesize_collage(const PromptSet& prompt_set,
                                                          const ProductInput& input,
                                                          const GridLayout& layout, int iteration,
                                                          const std::filesystem::path& run_dir) {
  check_product_input(input);
  if (iteration < 0) throw PreconditionError("iteration must be >= 0");
  {
    model::ValidationReport report = model::validate(prompt_set, layout);
    if (!report.ok()) {
      throw PreconditionError("synthesize_collage needs a valid prompt set: " + report.joined());
    }
  }

  providers::ImageGenRequest request;
  request.layout = layout;
  request.target_width = config_.panel_edge * layout.cols;
  request.target_height = config_.panel_edge * layout.rows;
  request.prompt_blocks.push_back(prompt_set.fidelity_block);
  request.prompt_blocks.push_back(prompt_set.aesthetic_block);
  for (const auto& label : layout.panel_order) {
    request.prompt_blocks.push_back("PANEL " + label + ": " + prompt_set.prompts.at(label));
  }
  request.condition_images.push_back(input.packshot);
  if (config_.attach_reference && input.reference) {
    request.condition_images.push_back(*input.reference);
  }

  providers::GenResult result = image_.generate_image(request);
  if (result.image.width != request.target_width ||
      result.image.height != request.target_height) {
    throw DecodeError("image provider returned a canvas of the wrong size");
  }
  last_generation_resized_ = result.metadata.resized;

  std::string suffix = std::to_string(iteration);
  util::atomic_write_file(run_dir / ("prompts_iter" + suffix + ".json"),
                          model::serialize(prompt_set));
  std::filesystem::path collage_path = run_dir / ("collage_iter" + suffix + ".png");
  save_png_atomic(result.image, collage_path);
  return collage_path;
}

}  // namespace collage::agents
