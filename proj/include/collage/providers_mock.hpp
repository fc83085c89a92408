#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "collage/providers.hpp"

namespace collage::providers {

// Task markers. Every prompt template opens with one of these lines so the
// mock chat provider can tell what is being asked of it without any state.
inline constexpr const char* kMarkerStage1 = "TASK: STAGE1_WHAT_PLANNER";
inline constexpr const char* kMarkerStage2 = "TASK: STAGE2_HOW_PLANNER";
inline constexpr const char* kMarkerStage3 = "TASK: STAGE3_PROMPT_COMPILER";
inline constexpr const char* kMarkerRepair = "TASK: REPAIR_STRUCTURED_OUTPUT";
inline constexpr const char* kMarkerRefAbstract = "TASK: REFERENCE_ABSTRACT_ANALYSIS";
inline constexpr const char* kMarkerRefExtract = "TASK: REFERENCE_TRANSFER_PLAN";
inline constexpr const char* kMarkerGate1 = "TASK: GATE1_NARRATIVE_CRITIQUE";
inline constexpr const char* kMarkerGate2 = "TASK: GATE2_PHOTOGRAPHY_CRITIQUE";
inline constexpr const char* kMarkerSuggest = "TASK: CRITIQUE_SUGGESTION";
inline constexpr const char* kMarkerVisualQuality = "TASK: VISUAL_QUALITY_RUBRIC";
inline constexpr const char* kMarkerRefTransfer = "TASK: REFERENCE_TRANSFER_RUBRIC";

// Finds the fenced payload that follows a "LABEL:" line:
//   LABEL:
//   ```json
//   ...
//   ```
// Returns the text between the fences, or nullopt if the label is absent.
std::optional<std::string> find_labeled_block(const std::string& text, const std::string& label);

// Finds "KEY: value" on its own line and returns the trimmed value.
std::optional<std::string> find_line_value(const std::string& text, const std::string& key);

// Offline chat model. Responses are pure functions of the request text and a
// directory of fixture documents, so identical runs produce identical bytes.
class MockChatProvider : public ChatProvider {
 public:
  explicit MockChatProvider(std::filesystem::path fixtures_dir,
                            std::map<std::string, std::filesystem::path> overrides = {});
  std::string chat_complete(const ChatRequest& request) override;

 private:
  std::string fixture_text(const std::string& marker, const std::string& name) const;
  model::json fixture_json(const std::string& marker, const std::string& name) const;
  std::string dispatch(const std::string& text) const;

  std::string respond_stage1(const std::string& text) const;
  std::string respond_stage2(const std::string& text) const;
  std::string respond_stage3(const std::string& text) const;
  std::string respond_repair(const std::string& text) const;
  std::string respond_ref_extract(const std::string& text) const;
  std::string respond_suggest(const std::string& text) const;
  std::string respond_ref_transfer(const std::string& text) const;

  std::filesystem::path fixtures_dir_;
  std::map<std::string, std::filesystem::path> overrides_;  // marker -> fixture path
};

// Offline image model. Paints each panel of the grid with a color derived
// from the first three bytes of the SHA-256 of that panel's prompt block, so
// any change to a prompt visibly changes the output.
class MockImageProvider : public ImageGenProvider {
 public:
  MockImageProvider() = default;
  // When set, the provider answers with this canvas size regardless of the
  // request, which exercises the conforming resize path.
  explicit MockImageProvider(std::optional<std::pair<int, int>> forced_size)
      : forced_size_(forced_size) {}

  GenResult generate_image(const ImageGenRequest& request) override;

  static void panel_color(const std::string& block, std::uint8_t out[3]);

 private:
  std::optional<std::pair<int, int>> forced_size_;
};

// Offline embeddings: a fixed pseudo-random projection of per-channel mean
// and variance. Eight dimensions, fully deterministic.
class MockEmbedProvider : public EmbedProvider {
 public:
  MockEmbedProvider();
  EmbeddingVector embed_image(const Image& image) override;
  int dimension() const override { return 8; }

 private:
  std::vector<std::vector<double>> projection_;  // 8 x 6
};

}  // namespace collage::providers
