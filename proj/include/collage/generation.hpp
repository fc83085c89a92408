#pragma once

#include <filesystem>
#include <utility>

#include "collage/product_input.hpp"
#include "collage/structured_output.hpp"

namespace collage::agents {

// Stage 3 plus synthesis. Compiles the photographic plan into per-panel
// prompts, then makes exactly one image call that renders the whole grid
// jointly, conditioned on the packshot (and the reference, when present).
class GenerationAgent {
 public:
  struct Config {
    double stage3_temperature = 0.7;
    RepairConfig repair;
    bool attach_reference = true;  // pass the reference as a condition image
    int panel_edge = 512;          // canvas is panel_edge * cols x panel_edge * rows
  };

  GenerationAgent(providers::ChatProvider& chat, providers::ImageGenProvider& image,
                  const PromptStore& prompts)
      : GenerationAgent(chat, image, prompts, Config()) {}
  GenerationAgent(providers::ChatProvider& chat, providers::ImageGenProvider& image,
                  const PromptStore& prompts, Config config);

  // The two fixed blocks that open every synthesis request: packshot
  // fidelity first, then the shared campaign aesthetic.
  std::pair<std::string, std::string> build_constraint_blocks(const ProductInput& input) const;

  // Every compiled prompt must cover its panel, run at least 20 characters,
  // and contain the plan's style digest verbatim; violations are repaired.
  model::PromptSet compile_prompts(const model::PhotographicPlan& plan,
                                   const model::ProductNarrativeFramework& framework,
                                   const ProductInput& input);

  // Writes prompts_iter{n}.json and collage_iter{n}.png into run_dir and
  // returns the collage path. One image call, no more.
  std::filesystem::path synthesize_collage(const model::PromptSet& prompt_set,
                                           const ProductInput& input,
                                           const model::GridLayout& layout, int iteration,
                                           const std::filesystem::path& run_dir);

  int last_repair_turns() const { return last_repair_turns_; }
  bool last_generation_resized() const { return last_generation_resized_; }

 private:
  providers::ChatProvider& chat_;
  providers::ImageGenProvider& image_;
  const PromptStore& prompts_;
  Config config_;
  int last_repair_turns_ = 0;
  bool last_generation_resized_ = false;
};

}  // namespace collage::agents
