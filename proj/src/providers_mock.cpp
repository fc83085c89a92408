#include "collage/providers_mock.hpp"

#include <random>
#include <set>
#include <sstream>

#include "collage/errors.hpp"
#include "collage/util.hpp"

namespace collage::providers {

namespace {

using model::json;

const char* kScaleCycle[4] = {"macro", "close", "medium", "wide"};
struct HeroChoice {
  const char* presence;
  int number;
};
const HeroChoice kHeroCycle[4] = {{"full", 1}, {"partial", 1}, {"none", 0}, {"full", 2}};

const char* kRoleCycle[4] = {"establishing the setting", "presenting the product itself",
                             "showing the product in use", "landing the emotional payoff"};

std::vector<std::string> positions_from(const std::string& text) {
  auto line = find_line_value(text, "POSITIONS");
  if (!line) throw PreconditionError("mock chat: request lacks a POSITIONS line");
  return util::split_trimmed(*line, ',');
}

model::GridLayout layout_from(const std::string& text) {
  auto line = find_line_value(text, "LAYOUT");
  if (!line) throw PreconditionError("mock chat: request lacks a LAYOUT line");
  auto layout = model::GridLayout::parse_spec(*line);
  if (!layout) throw PreconditionError("mock chat: bad LAYOUT line: " + *line);
  return *layout;
}

}  // namespace

std::optional<std::string> find_labeled_block(const std::string& text, const std::string& label) {
  std::string needle = label + ":";
  std::size_t pos = 0;
  while (true) {
    pos = text.find(needle, pos);
    if (pos == std::string::npos) return std::nullopt;
    bool line_start = pos == 0 || text[pos - 1] == '\n';
    if (line_start) break;
    pos += needle.size();
  }
  std::size_t fence_open = text.find("```", pos);
  if (fence_open == std::string::npos) return std::nullopt;
  std::size_t content_start = text.find('\n', fence_open);
  if (content_start == std::string::npos) return std::nullopt;
  ++content_start;
  std::size_t fence_close = text.find("\n```", content_start);
  if (fence_close == std::string::npos) return std::nullopt;
  return text.substr(content_start, fence_close - content_start);
}

std::optional<std::string> find_line_value(const std::string& text, const std::string& key) {
  std::istringstream in(text);
  std::string line;
  std::string needle = key + ":";
  while (std::getline(in, line)) {
    if (util::starts_with(line, needle)) {
      return util::trim(line.substr(needle.size()));
    }
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// MockChatProvider

MockChatProvider::MockChatProvider(std::filesystem::path fixtures_dir,
                                   std::map<std::string, std::filesystem::path> overrides)
    : fixtures_dir_(std::move(fixtures_dir)), overrides_(std::move(overrides)) {}

std::string MockChatProvider::fixture_text(const std::string& marker,
                                           const std::string& name) const {
  auto it = overrides_.find(marker);
  std::filesystem::path path = it != overrides_.end() ? it->second : fixtures_dir_ / name;
  return util::read_text_file(path);
}

json MockChatProvider::fixture_json(const std::string& marker, const std::string& name) const {
  return model::parse_json_text(fixture_text(marker, name));
}

std::string MockChatProvider::chat_complete(const ChatRequest& request) {
  check_chat_request(request);
  return dispatch(request.joined_text());
}

std::string MockChatProvider::dispatch(const std::string& text) const {
  struct Entry {
    const char* marker;
    std::size_t pos;
  };
  std::vector<Entry> found;
  for (const char* marker :
       {kMarkerStage1, kMarkerStage2, kMarkerStage3, kMarkerRepair, kMarkerRefAbstract,
        kMarkerRefExtract, kMarkerGate1, kMarkerGate2, kMarkerSuggest, kMarkerVisualQuality,
        kMarkerRefTransfer}) {
    std::size_t pos = text.find(marker);
    if (pos != std::string::npos) found.push_back({marker, pos});
  }
  if (found.empty()) {
    throw PreconditionError("mock chat: request carries no task marker");
  }
  const Entry* first = &found[0];
  for (const Entry& e : found) {
    if (e.pos < first->pos) first = &e;
  }
  std::string marker = first->marker;
  if (marker == kMarkerStage1) return respond_stage1(text);
  if (marker == kMarkerStage2) return respond_stage2(text);
  if (marker == kMarkerStage3) return respond_stage3(text);
  if (marker == kMarkerRepair) return respond_repair(text);
  if (marker == kMarkerRefAbstract) return fixture_text(kMarkerRefAbstract, "reference_analysis.txt");
  if (marker == kMarkerRefExtract) return respond_ref_extract(text);
  if (marker == kMarkerGate1) {
    return model::serialize_canonical(fixture_json(kMarkerGate1, "gate1.json"));
  }
  if (marker == kMarkerGate2) {
    return model::serialize_canonical(fixture_json(kMarkerGate2, "gate2.json"));
  }
  if (marker == kMarkerSuggest) return respond_suggest(text);
  if (marker == kMarkerVisualQuality) {
    return model::serialize_canonical(fixture_json(kMarkerVisualQuality, "visual_quality.json"));
  }
  return respond_ref_transfer(text);
}

std::string MockChatProvider::respond_stage1(const std::string& text) const {
  auto prior_block = find_labeled_block(text, "PRIOR_FRAMEWORK");
  auto suggestion_block = find_labeled_block(text, "SUGGESTION");
  if (prior_block && suggestion_block) {
    json prior = model::parse_json_text(*prior_block);
    json suggestion = model::parse_json_text(*suggestion_block);
    std::string where = suggestion.value("where", "");
    std::string how = suggestion.value("how", "");
    if (prior.contains(where) && prior[where].is_string()) {
      prior[where] = prior[where].get<std::string>() + " [revised: " + how + "]";
    }
    if (prior.contains("narrative_framework") && prior["narrative_framework"].is_string()) {
      prior["narrative_framework"] =
          prior["narrative_framework"].get<std::string>() + " [revised]";
    }
    return model::serialize_canonical(prior);
  }
  return model::serialize_canonical(fixture_json(kMarkerStage1, "stage1.json"));
}

std::string MockChatProvider::respond_stage2(const std::string& text) const {
  model::GridLayout layout = layout_from(text);
  std::vector<std::string> positions = positions_from(text);
  json fixture = fixture_json(kMarkerStage2, "stage2.json");
  bool refined = find_labeled_block(text, "REFINEMENT").has_value();
  json style = refined && fixture.contains("global_visual_style_refined")
                   ? fixture["global_visual_style_refined"]
                   : fixture["global_visual_style"];
  const json& themes = fixture["panel_themes"];
  if (!themes.is_array() || themes.empty()) {
    throw PreconditionError("mock chat: stage 2 fixture lacks panel_themes");
  }
  json panels = json::object();
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const json& theme = themes[i % themes.size()];
    json panel{{"shot_scale", kScaleCycle[i % 4]},
               {"hero_presence", kHeroCycle[i % 4].presence},
               {"hero_number", kHeroCycle[i % 4].number},
               {"subject_emphasis", theme["subject_emphasis"]},
               {"spatial_composition", theme["spatial_composition"]},
               {"interaction", theme["interaction"]}};
    panels[positions[i]] = panel;
  }
  json plan{{"layout", {{"rows", layout.rows}, {"cols", layout.cols}}},
            {"panels", panels},
            {"global_visual_style", style}};
  return model::serialize_canonical(plan);
}

std::string MockChatProvider::respond_stage3(const std::string& text) const {
  auto plan_block = find_labeled_block(text, "PLAN");
  if (!plan_block) throw PreconditionError("mock chat: stage 3 request lacks a PLAN block");
  model::PhotographicPlan plan = model::plan_from_json(model::parse_json_text(*plan_block));
  std::string digest = model::style_digest(plan.style);
  json prompts = json::object();
  for (const auto& [label, decision] : plan.panels) {
    std::string prompt = "In the " + label + " panel: " + decision.subject_emphasis + "; " +
                         decision.spatial_composition + "; " + decision.interaction +
                         "; shot scale " + model::to_string(decision.shot_scale) + ", hero " +
                         model::to_string(decision.hero_presence) + ". " + digest;
    prompts[label] = prompt;
  }
  return model::serialize_canonical(json{{"prompts", prompts}});
}

std::string MockChatProvider::respond_repair(const std::string& text) const {
  // The embedded request carries fenced blocks of its own, so it is wrapped
  // in sentinel lines rather than a fence.
  const std::string begin = "ORIGINAL_REQUEST_BEGIN\n";
  const std::string end = "\nORIGINAL_REQUEST_END";
  std::size_t start = text.find(begin);
  std::size_t stop = start == std::string::npos ? start : text.find(end, start + begin.size());
  if (start == std::string::npos || stop == std::string::npos) {
    throw PreconditionError("mock chat: repair request lacks the original request");
  }
  std::string original = text.substr(start + begin.size(), stop - start - begin.size());
  // Overrides simulate a first response gone wrong; the repaired answer comes
  // from the pristine fixtures.
  MockChatProvider pristine(fixtures_dir_);
  return pristine.dispatch(original);
}

std::string MockChatProvider::respond_ref_extract(const std::string& text) const {
  std::vector<std::string> positions = positions_from(text);
  json fixture = fixture_json(kMarkerRefExtract, "reference_transfer_plan.json");
  std::set<std::string> wanted(positions.begin(), positions.end());
  std::set<std::string> have;
  if (fixture.contains("panel_directives") && fixture["panel_directives"].is_object()) {
    for (auto it = fixture["panel_directives"].begin(); it != fixture["panel_directives"].end();
         ++it) {
      have.insert(it.key());
    }
  }
  if (wanted == have) return model::serialize_canonical(fixture);
  // A layout the fixture does not cover: synthesize roles and directives.
  json roles = json::object();
  json directives = json::object();
  for (std::size_t i = 0; i < positions.size(); ++i) {
    roles[positions[i]] = kRoleCycle[i % 4];
    directives[positions[i]] =
        json{{"shot_scale", kScaleCycle[i % 4]},
             {"hero_presence", kHeroCycle[i % 4].presence},
             {"hero_number", kHeroCycle[i % 4].number},
             {"subject_emphasis", std::string(kRoleCycle[i % 4]) + " without any borrowed props"},
             {"spatial_composition", "subject anchored per the reference grid reading"},
             {"interaction", "kept faithful to the role the reference assigns this cell"}};
  }
  json out{{"abstract_narrative", fixture["abstract_narrative"]},
           {"panel_roles", roles},
           {"panel_directives", directives},
           {"global_visual_style", fixture["global_visual_style"]}};
  return model::serialize_canonical(out);
}

std::string MockChatProvider::respond_suggest(const std::string& text) const {
  auto gate = find_line_value(text, "FAILING_GATE");
  if (!gate) throw PreconditionError("mock chat: suggestion request lacks a FAILING_GATE line");
  if (*gate == "narrative") {
    return model::serialize_canonical(fixture_json(kMarkerSuggest, "suggestion_narrative.json"));
  }
  return model::serialize_canonical(fixture_json(kMarkerSuggest, "suggestion_photography.json"));
}

std::string MockChatProvider::respond_ref_transfer(const std::string& text) const {
  std::vector<std::string> positions = positions_from(text);
  json fixture = fixture_json(kMarkerRefTransfer, "reference_transfer.json");
  std::set<std::string> wanted(positions.begin(), positions.end());
  std::set<std::string> have;
  if (fixture.contains("per_position") && fixture["per_position"].is_object()) {
    for (auto it = fixture["per_position"].begin(); it != fixture["per_position"].end(); ++it) {
      have.insert(it.key());
    }
  }
  if (wanted != have) {
    json per_position = json::object();
    for (const auto& pos : positions) per_position[pos] = "strong";
    fixture["per_position"] = per_position;
  }
  return model::serialize_canonical(fixture);
}

// ---------------------------------------------------------------------------
// MockImageProvider

void MockImageProvider::panel_color(const std::string& block, std::uint8_t out[3]) {
  std::string hex = util::sha256_hex(block);
  auto nibble = [](char c) -> int { return c <= '9' ? c - '0' : c - 'a' + 10; };
  for (int i = 0; i < 3; ++i) {
    out[i] = static_cast<std::uint8_t>((nibble(hex[i * 2]) << 4) | nibble(hex[i * 2 + 1]));
  }
}

GenResult MockImageProvider::generate_image(const ImageGenRequest& request) {
  check_image_request(request);
  int width = forced_size_ ? forced_size_->first : request.target_width;
  int height = forced_size_ ? forced_size_->second : request.target_height;
  Image canvas = Image::solid(width, height, 255, 255, 255);

  std::map<std::string, std::string> panel_blocks;
  for (const auto& block : request.prompt_blocks) {
    if (!util::starts_with(block, "PANEL ")) continue;
    std::size_t colon = block.find(':');
    if (colon == std::string::npos) continue;
    panel_blocks[util::trim(block.substr(6, colon - 6))] = block;
  }

  const model::GridLayout& layout = request.layout;
  for (int i = 0; i < layout.panel_count(); ++i) {
    const std::string& label = layout.panel_order[i];
    auto it = panel_blocks.find(label);
    if (it == panel_blocks.end()) {
      throw PreconditionError("mock image: no prompt block for panel " + label);
    }
    std::uint8_t rgb[3];
    panel_color(it->second, rgb);
    int row = i / layout.cols;
    int col = i % layout.cols;
    int x0 = col * width / layout.cols;
    int x1 = (col + 1) * width / layout.cols;
    int y0 = row * height / layout.rows;
    int y1 = (row + 1) * height / layout.rows;
    fill_rect(canvas, x0, y0, x1 - x0, y1 - y0, rgb[0], rgb[1], rgb[2]);
  }

  GenResult result;
  result.metadata.provider_width = width;
  result.metadata.provider_height = height;
  result.image = std::move(canvas);
  return result;
}

// ---------------------------------------------------------------------------
// MockEmbedProvider

MockEmbedProvider::MockEmbedProvider() {
  // Raw generator bits are mapped to [-1, 1] by hand so the matrix does not
  // depend on distribution internals that vary between standard libraries.
  std::mt19937_64 rng(0x636f6c6c61676531ULL);
  projection_.assign(8, std::vector<double>(6, 0.0));
  for (auto& row : projection_) {
    for (double& cell : row) {
      double unit = static_cast<double>(rng() >> 11) / 9007199254740992.0;  // [0, 1)
      cell = unit * 2.0 - 1.0;
    }
  }
}

EmbeddingVector MockEmbedProvider::embed_image(const Image& image) {
  if (image.empty()) throw PreconditionError("cannot embed an empty image");
  std::array<double, 6> stats = channel_stats(image);
  EmbeddingVector out;
  out.values.resize(8, 0.0);
  for (int j = 0; j < 8; ++j) {
    double sum = 0.0;
    for (int i = 0; i < 6; ++i) sum += projection_[j][i] * stats[i];
    out.values[j] = sum;
  }
  out.source_digest = image_digest(image);
  return out;
}

}  // namespace collage::providers
