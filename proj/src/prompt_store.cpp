#include "collage/prompt_store.hpp"

#include <set>

#include "collage/errors.hpp"
#include "collage/util.hpp"

namespace collage {

PromptStore::PromptStore(std::filesystem::path dir) : dir_(std::move(dir)) {}

const std::string& PromptStore::raw(const std::string& name) const {
  std::lock_guard<std::mutex> lock(mutex_);
  auto it = cache_.find(name);
  if (it != cache_.end()) return it->second;
  std::filesystem::path path = dir_ / (name + ".txt");
  std::string text = util::read_text_file(path);
  return cache_.emplace(name, std::move(text)).first->second;
}

std::string render_template(const std::string& text, const std::map<std::string, std::string>& values) {
  std::string out;
  out.reserve(text.size());
  std::set<std::string> used;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t open = text.find("{{", pos);
    if (open == std::string::npos) {
      out.append(text, pos, std::string::npos);
      break;
    }
    std::size_t close = text.find("}}", open + 2);
    if (close == std::string::npos) {
      throw PreconditionError("unterminated placeholder in template");
    }
    out.append(text, pos, open - pos);
    std::string key = text.substr(open + 2, close - open - 2);
    auto it = values.find(key);
    if (it == values.end()) {
      throw PreconditionError("template placeholder has no value: " + key);
    }
    out += it->second;
    used.insert(key);
    pos = close + 2;
  }
  for (const auto& [key, value] : values) {
    if (!used.count(key)) {
      throw PreconditionError("template does not use value: " + key);
    }
  }
  return out;
}

std::string PromptStore::render(const std::string& name,
                                const std::map<std::string, std::string>& values) const {
  try {
    return render_template(raw(name), values);
  } catch (const PreconditionError& e) {
    throw PreconditionError(name + ": " + e.what());
  }
}

}  // namespace collage
