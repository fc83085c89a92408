#include "collage/structured_output.hpp"

#include "collage/errors.hpp"
#include "collage/util.hpp"

namespace collage::agents {

std::string fenced_json(const std::string& label, const model::json& value) {
  return label + ":\n```json\n" + value.dump(2) + "\n```\n";
}

std::string fenced_text(const std::string& label, const std::string& text) {
  return label + ":\n```\n" + text + "\n```\n";
}

std::vector<std::string> violations_of(const std::function<void()>& parse) {
  try {
    parse();
    return {};
  } catch (const SchemaError& e) {
    return e.violations();
  } catch (const ParseError& e) {
    return {e.what()};
  }
}

StructuredOutcome run_structured(providers::ChatProvider& chat, const PromptStore& prompts,
                                 const providers::ChatRequest& initial, const Acceptor& accept,
                                 const RepairConfig& cfg) {
  if (cfg.budget < 0) throw PreconditionError("repair budget must be >= 0");
  std::string raw = chat.chat_complete(initial);
  std::vector<std::string> violations = accept(raw);
  int turns = 0;
  while (!violations.empty() && turns < cfg.budget) {
    std::vector<std::string> bullets;
    bullets.reserve(violations.size());
    for (const auto& v : violations) bullets.push_back("- " + v);
    std::string repair_text =
        prompts.render("repair", {{"violations", util::join(bullets, "\n")},
                                  {"raw_response", raw},
                                  {"original_request", initial.joined_text()}});
    providers::ChatRequest repair;
    repair.system_prompt = initial.system_prompt;
    repair.user_parts.push_back(providers::ChatPart::make_text(repair_text));
    repair.format = providers::ResponseFormat::json_object;
    repair.temperature = cfg.repair_temperature;
    raw = chat.chat_complete(repair);
    violations = accept(raw);
    ++turns;
  }
  if (!violations.empty()) {
    throw MalformedPlan("structured output still invalid after " + std::to_string(turns) +
                            " repair turns: " + util::join(violations, "; "),
                        violations);
  }
  return {raw, turns};
}

}  // namespace collage::agents
