#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "collage/plan_model.hpp"
#include "collage/providers_http.hpp"

namespace collage {

// Everything a command needs to wire providers and the pipeline. Endpoints
// and knobs come from the config file and flags; credentials come only from
// the environment, so config files stay safe to share.
struct AppConfig {
  providers::EndpointConfig chat;
  providers::EndpointConfig image;
  providers::EndpointConfig embed;
  int embed_dimension = 8;

  int max_iterations = 3;
  model::GridLayout layout = model::GridLayout::standard(2, 2);
  model::ReturnPolicy return_policy = model::ReturnPolicy::best;
  model::GateConfig gates;
  std::string run_dir;
};

// Minimal INI: [section] headers, key = value lines, # or ; comments.
// Throws ParseError on malformed lines.
std::map<std::string, std::map<std::string, std::string>> parse_ini(const std::string& text);

// Applies a config file over the given config. Unknown sections or keys and
// unusable values are SchemaErrors; settings given in the file replace the
// corresponding fields.
void apply_config_file(AppConfig& config, const std::filesystem::path& path);

// Pulls COLLAGE_CHAT_API_KEY, COLLAGE_IMAGE_API_KEY, COLLAGE_EMBED_API_KEY
// from the environment into the endpoint configs. Missing vars leave the
// keys empty.
void apply_env_credentials(AppConfig& config);

}  // namespace collage
