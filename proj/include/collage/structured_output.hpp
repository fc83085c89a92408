#pragma once

#include <functional>
#include <string>
#include <vector>

#include "collage/plan_model.hpp"
#include "collage/prompt_store.hpp"
#include "collage/providers.hpp"

namespace collage::agents {

struct RepairConfig {
  int budget = 2;                  // repair turns after the first response
  double repair_temperature = 0.0; // repair should reformat, not reimagine
};

// Returns the problems with a raw response; empty means accepted. The
// callable keeps the parsed value for itself.
using Acceptor = std::function<std::vector<std::string>(const std::string& raw)>;

struct StructuredOutcome {
  std::string raw;       // the accepted response
  int repair_turns = 0;  // how many repair round trips it took
};

// Sends `initial`, runs `accept` on the response, and on rejection sends a
// repair turn quoting the violations and the original request. Gives up with
// MalformedPlan once the budget is spent.
StructuredOutcome run_structured(providers::ChatProvider& chat, const PromptStore& prompts,
                                 const providers::ChatRequest& initial, const Acceptor& accept,
                                 const RepairConfig& cfg);

// "LABEL:\n```json\n<canonical json>\n```" with a trailing newline.
std::string fenced_json(const std::string& label, const model::json& value);
std::string fenced_text(const std::string& label, const std::string& text);

// Collects parse or schema exceptions from `parse` into a violation list.
std::vector<std::string> violations_of(const std::function<void()>& parse);

}  // namespace collage::agents
