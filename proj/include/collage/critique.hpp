#pragma once

#include "collage/product_input.hpp"
#include "collage/structured_output.hpp"

namespace collage::agents {

// The two critique gates. Gate 1 judges the narrative against the framework;
// gate 2 judges the photography against the plan, and runs only after gate 1
// passes. Whenever a gate fails, one more call turns the scores into a
// (what, where, how) suggestion the next iteration can act on.
class CritiqueAgent {
 public:
  CritiqueAgent(providers::ChatProvider& chat, const PromptStore& prompts,
                RepairConfig repair = {});

  model::NarrativeScores score_narrative(const Image& collage, const ProductInput& input,
                                         const model::ProductNarrativeFramework& framework);

  model::PhotoScores score_photography(const Image& collage, const ProductInput& input,
                                       const model::PhotographicPlan& plan);

  model::Suggestion suggest(model::GateKind failing, const model::json& scores,
                            const model::ProductNarrativeFramework& framework,
                            const model::PhotographicPlan& plan);

  // Full round: gate 1, then gate 2 if it may run, then the suggestion if
  // either gate failed. The report carries the thresholds it was judged by.
  model::CritiqueReport critique(const Image& collage, const ProductInput& input,
                                 const model::ProductNarrativeFramework& framework,
                                 const model::PhotographicPlan& plan,
                                 const model::GateConfig& gates);

 private:
  providers::ChatProvider& chat_;
  const PromptStore& prompts_;
  RepairConfig repair_;
};

}  // namespace collage::agents
