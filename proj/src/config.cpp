#include "collage/config.hpp"

#include <cstdlib>

#include "collage/errors.hpp"
#include "collage/util.hpp"

namespace collage {

std::map<std::string, std::map<std::string, std::string>> parse_ini(const std::string& text) {
  std::map<std::string, std::map<std::string, std::string>> out;
  std::string section;
  int line_no = 0;
  for (const std::string& raw : util::split_trimmed(text, '\n')) {
    ++line_no;
    if (raw.empty() || raw[0] == '#' || raw[0] == ';') continue;
    if (raw.front() == '[') {
      if (raw.back() != ']' || raw.size() < 3) {
        throw ParseError("config line " + std::to_string(line_no) + ": malformed section header");
      }
      section = util::trim(raw.substr(1, raw.size() - 2));
      out.emplace(section, std::map<std::string, std::string>{});
      continue;
    }
    std::size_t eq = raw.find('=');
    if (eq == std::string::npos) {
      throw ParseError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    if (section.empty()) {
      throw ParseError("config line " + std::to_string(line_no) + ": key outside any section");
    }
    std::string key = util::trim(raw.substr(0, eq));
    std::string value = util::trim(raw.substr(eq + 1));
    if (key.empty()) {
      throw ParseError("config line " + std::to_string(line_no) + ": empty key");
    }
    out[section][key] = value;
  }
  return out;
}

namespace {

int parse_int(const std::string& value, const std::string& where,
              std::vector<std::string>& violations) {
  try {
    std::size_t used = 0;
    int v = std::stoi(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    violations.push_back(where + ": not an integer: \"" + value + "\"");
    return 0;
  }
}

}  // namespace

void apply_config_file(AppConfig& config, const std::filesystem::path& path) {
  auto sections = parse_ini(util::read_text_file(path));
  std::vector<std::string> violations;

  auto endpoint = [&](const std::string& name, providers::EndpointConfig& target) {
    auto it = sections.find(name);
    if (it == sections.end()) return;
    for (const auto& [key, value] : it->second) {
      if (key == "url") {
        target.url = value;
      } else if (key == "model") {
        target.model = value;
      } else if (name == "embed" && key == "dimension") {
        int d = parse_int(value, "[embed] dimension", violations);
        if (d < 2) {
          violations.push_back("[embed] dimension must be at least 2");
        } else {
          config.embed_dimension = d;
        }
      } else {
        violations.push_back("[" + name + "] unknown key: " + key);
      }
    }
    sections.erase(it);
  };
  endpoint("chat", config.chat);
  endpoint("image", config.image);
  endpoint("embed", config.embed);

  if (auto it = sections.find("pipeline"); it != sections.end()) {
    for (const auto& [key, value] : it->second) {
      if (key == "max_iter") {
        int k = parse_int(value, "[pipeline] max_iter", violations);
        if (k < 1) {
          violations.push_back("[pipeline] max_iter must be at least 1");
        } else {
          config.max_iterations = k;
        }
      } else if (key == "layout") {
        auto layout = model::GridLayout::parse_spec(value);
        if (!layout) {
          violations.push_back("[pipeline] layout must look like 2x2, got \"" + value + "\"");
        } else {
          config.layout = *layout;
        }
      } else if (key == "return_policy") {
        auto policy = model::return_policy_from_string(value);
        if (!policy) {
          violations.push_back("[pipeline] return_policy must be last or best, got \"" + value +
                               "\"");
        } else {
          config.return_policy = *policy;
        }
      } else if (key == "run_dir") {
        config.run_dir = value;
      } else {
        violations.push_back("[pipeline] unknown key: " + key);
      }
    }
    sections.erase(it);
  }

  if (auto it = sections.find("gates"); it != sections.end()) {
    for (const auto& [key, value] : it->second) {
      if (key == "tau_narr") {
        config.gates.tau_narrative = parse_int(value, "[gates] tau_narr", violations);
      } else if (key == "tau_photo") {
        config.gates.tau_photography = parse_int(value, "[gates] tau_photo", violations);
      } else if (key == "rule") {
        auto rule = model::gate_rule_from_string(value);
        if (!rule) {
          violations.push_back("[gates] rule must be min or mean, got \"" + value + "\"");
        } else {
          config.gates.rule = *rule;
        }
      } else {
        violations.push_back("[gates] unknown key: " + key);
      }
    }
    sections.erase(it);
  }

  for (const auto& [name, keys] : sections) {
    (void)keys;
    violations.push_back("unknown section: [" + name + "]");
  }
  model::ValidationReport gate_report = model::validate(config.gates);
  for (const std::string& v : gate_report.violations) violations.push_back("[gates] " + v);
  if (!violations.empty()) {
    throw SchemaError("config " + path.string() + ": " + util::join(violations, "; "), violations);
  }
}

void apply_env_credentials(AppConfig& config) {
  auto read = [](const char* name) {
    const char* value = std::getenv(name);
    return value == nullptr ? std::string() : std::string(value);
  };
  config.chat.api_key = read("COLLAGE_CHAT_API_KEY");
  config.image.api_key = read("COLLAGE_IMAGE_API_KEY");
  config.embed.api_key = read("COLLAGE_EMBED_API_KEY");
}

}  // namespace collage
