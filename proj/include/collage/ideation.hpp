#pragma once

#include <optional>

#include "collage/product_input.hpp"
#include "collage/structured_output.hpp"

namespace collage::agents {

// Stage 1 and Stage 2 planner. Stage 1 settles WHAT the grid says about the
// product; Stage 2 settles HOW each panel shows it. Both go through the
// structured-output repair loop, so a sloppy model answer costs repair turns
// rather than the run.
class IdeationAgent {
 public:
  struct Config {
    double stage1_temperature = 0.7;
    double stage2_temperature = 0.7;
    RepairConfig repair;
  };

  IdeationAgent(providers::ChatProvider& chat, const PromptStore& prompts)
      : IdeationAgent(chat, prompts, Config()) {}
  IdeationAgent(providers::ChatProvider& chat, const PromptStore& prompts, Config config);

  // Builds the narrative framework. A revision pass must carry the narrative
  // suggestion plus the prior framework; every framework field other than the
  // one the suggestion targets is copied from the prior verbatim, whatever
  // the model answered, and only the story synthesis may drift.
  model::ProductNarrativeFramework plan_what(
      const ProductInput& input, const std::optional<model::TransferDirections>& transfer,
      const std::optional<model::Suggestion>& revision,
      const std::optional<model::ProductNarrativeFramework>& prior);

  // Builds the photographic plan for the given layout. A refinement pass
  // carries the photography suggestion; the framework is read-only here.
  model::PhotographicPlan plan_how(const ProductInput& input,
                                   const model::ProductNarrativeFramework& framework,
                                   const model::GridLayout& layout,
                                   const std::optional<model::TransferDirections>& transfer,
                                   const std::optional<model::Suggestion>& refinement);

  int last_repair_turns() const { return last_repair_turns_; }

 private:
  providers::ChatProvider& chat_;
  const PromptStore& prompts_;
  Config config_;
  int last_repair_turns_ = 0;
};

}  // namespace collage::agents
