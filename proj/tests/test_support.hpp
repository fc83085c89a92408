#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include <unistd.h>

#include "collage/image.hpp"
#include "collage/product_input.hpp"
#include "collage/providers.hpp"
#include "collage/providers_mock.hpp"
#include "collage/util.hpp"

namespace collage::testing {

inline std::filesystem::path prompts_dir() { return COLLAGE_PROMPTS_DIR; }
inline std::filesystem::path fixtures_dir() { return COLLAGE_FIXTURES_DIR; }

// Fresh directory under the system temp root, removed when the guard dies.
struct TempDir {
  std::filesystem::path path;

  TempDir() {
    static std::atomic<int> counter{0};
    path = std::filesystem::temp_directory_path() /
           ("collage_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter.fetch_add(1)));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

inline Image checker_packshot(int edge = 64) {
  Image img = Image::solid(edge, edge, 230, 226, 220);
  fill_rect(img, edge / 4, edge / 4, edge / 2, edge / 2, 180, 40, 60);
  return img;
}

inline ProductInput make_input(const std::string& name = "Velvet Hand Cream") {
  ProductInput input;
  input.name = name;
  input.user_intent = "cozy winter care";
  input.packshot = checker_packshot();
  return input;
}

inline Image make_reference_grid() {
  Image img = Image::solid(128, 128, 240, 240, 240);
  fill_rect(img, 0, 0, 64, 64, 200, 60, 60);
  fill_rect(img, 64, 0, 64, 64, 60, 200, 60);
  fill_rect(img, 0, 64, 64, 64, 60, 60, 200);
  fill_rect(img, 64, 64, 64, 64, 200, 200, 60);
  return img;
}

// Grid of solid panels, one color per panel in row-major order.
inline Image make_panel_grid(int rows, int cols, const std::vector<std::array<std::uint8_t, 3>>& colors,
                             int edge = 16) {
  Image img = Image::solid(cols * edge, rows * edge, 0, 0, 0);
  for (int i = 0; i < rows * cols; ++i) {
    const auto& c = colors[static_cast<std::size_t>(i) % colors.size()];
    fill_rect(img, (i % cols) * edge, (i / cols) * edge, edge, edge, c[0], c[1], c[2]);
  }
  return img;
}

// Canned responses in order; records every request it saw.
class ScriptedChatProvider : public providers::ChatProvider {
 public:
  explicit ScriptedChatProvider(std::deque<std::string> responses)
      : responses_(std::move(responses)) {}

  std::string chat_complete(const providers::ChatRequest& request) override {
    std::lock_guard<std::mutex> lock(mutex_);
    requests.push_back(request);
    if (responses_.empty()) throw std::runtime_error("scripted chat: script exhausted");
    std::string next = std::move(responses_.front());
    responses_.pop_front();
    return next;
  }

  std::vector<providers::ChatRequest> requests;

 private:
  std::deque<std::string> responses_;
  std::mutex mutex_;
};

// The task marker that appears earliest in the request text; empty if none.
inline std::string first_marker(const std::string& text) {
  const char* markers[] = {
      providers::kMarkerStage1,      providers::kMarkerStage2,    providers::kMarkerStage3,
      providers::kMarkerRepair,      providers::kMarkerRefAbstract, providers::kMarkerRefExtract,
      providers::kMarkerGate1,       providers::kMarkerGate2,     providers::kMarkerSuggest,
      providers::kMarkerVisualQuality, providers::kMarkerRefTransfer};
  std::string best;
  std::size_t best_pos = std::string::npos;
  for (const char* marker : markers) {
    std::size_t pos = text.find(marker);
    if (pos != std::string::npos && pos < best_pos) {
      best_pos = pos;
      best = marker;
    }
  }
  return best;
}

// Counts chat requests per task marker while delegating to an inner provider.
class MarkerCountingChat : public providers::ChatProvider {
 public:
  explicit MarkerCountingChat(providers::ChatProvider& inner) : inner_(inner) {}

  std::string chat_complete(const providers::ChatRequest& request) override {
    {
      std::lock_guard<std::mutex> lock(mutex_);
      ++counts_[first_marker(request.joined_text())];
    }
    return inner_.chat_complete(request);
  }

  int count(const std::string& marker) const {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = counts_.find(marker);
    return it == counts_.end() ? 0 : it->second;
  }

 private:
  providers::ChatProvider& inner_;
  mutable std::mutex mutex_;
  std::map<std::string, int> counts_;
};

// Mock chat with scripted gate outcomes: each critique round consumes one
// entry per gate script. true serves the passing fixture, false the failing
// one; everything else falls through to the deterministic mock.
class GateScriptChat : public providers::ChatProvider {
 public:
  GateScriptChat(std::vector<bool> gate1, std::vector<bool> gate2)
      : inner_(fixtures_dir()), gate1_(std::move(gate1)), gate2_(std::move(gate2)) {}

  std::string chat_complete(const providers::ChatRequest& request) override {
    std::string text = request.joined_text();
    std::string marker = first_marker(text);
    if (marker == providers::kMarkerGate1) {
      if (gate1_next_ >= gate1_.size()) throw std::runtime_error("gate1 script exhausted");
      return fixture(gate1_[gate1_next_++] ? "gate1.json" : "variants/gate1_low.json");
    }
    if (marker == providers::kMarkerGate2) {
      if (gate2_next_ >= gate2_.size()) throw std::runtime_error("gate2 script exhausted");
      return fixture(gate2_[gate2_next_++] ? "gate2.json" : "variants/gate2_low.json");
    }
    return inner_.chat_complete(request);
  }

  std::size_t gate1_served() const { return gate1_next_; }
  std::size_t gate2_served() const { return gate2_next_; }

 private:
  static std::string fixture(const std::string& name) {
    return util::read_text_file(fixtures_dir() / name);
  }

  providers::MockChatProvider inner_;
  std::vector<bool> gate1_;
  std::vector<bool> gate2_;
  std::size_t gate1_next_ = 0;
  std::size_t gate2_next_ = 0;
};

}  // namespace collage::testing
