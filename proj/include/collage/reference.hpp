#pragma once

#include "collage/product_input.hpp"
#include "collage/structured_output.hpp"

namespace collage::agents {

// Distills a reference collage into transfer directions: the narrative role
// each panel plays and the photographic decisions behind it, freed from the
// reference's own subject so another product can step into the same story.
//
// Two turns: a free-form read of the reference alone, then a structured
// extraction over that analysis. The target product appears only as text
// hints for re-instantiation; its packshot is never shown to this agent.
class ReferenceAgent {
 public:
  ReferenceAgent(providers::ChatProvider& chat, const PromptStore& prompts,
                 RepairConfig repair = {});

  model::TransferDirections extract_transfer_plan(const Image& reference,
                                                  const model::GridLayout& layout,
                                                  const ProductInput& target);

 private:
  providers::ChatProvider& chat_;
  const PromptStore& prompts_;
  RepairConfig repair_;
};

}  // namespace collage::agents
