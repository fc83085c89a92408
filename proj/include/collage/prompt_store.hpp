#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <string>

namespace collage {

// Loads prompt templates from a directory of .txt files and renders them by
// substituting {{key}} placeholders. Substitution is a single pass over the
// template: placeholder-looking text inside substituted values is left alone.
class PromptStore {
 public:
  explicit PromptStore(std::filesystem::path dir);

  // Raw template text. Loaded lazily, cached. Throws IoError if missing.
  const std::string& raw(const std::string& name) const;

  // Renders template `name` with the given values. A placeholder with no
  // matching key, or a key that matches no placeholder, is an error: both
  // directions of drift between template and call site should fail loudly.
  std::string render(const std::string& name, const std::map<std::string, std::string>& values) const;

  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
  mutable std::mutex mutex_;
  mutable std::map<std::string, std::string> cache_;
};

// Single-pass {{key}} substitution over arbitrary text.
std::string render_template(const std::string& text, const std::map<std::string, std::string>& values);

}  // namespace collage
