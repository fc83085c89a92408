#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace collage::model {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Enums. Serialized as lowercase strings; parsing is strict.

enum class ShotScale { macro, close, medium, wide };
enum class HeroPresence { full, partial, none };
enum class GateKind { narrative, photography };
enum class GateRule { min, mean };
enum class RunMode { creation, reference };
enum class ReturnPolicy { last, best };
enum class StopReason { gates_passed, budget_exhausted, fatal_error };
enum class Verdict { pass, borderline, fail };
enum class Alignment { strong, partial, weak };

const char* to_string(ShotScale v);
const char* to_string(HeroPresence v);
const char* to_string(GateKind v);
const char* to_string(GateRule v);
const char* to_string(RunMode v);
const char* to_string(ReturnPolicy v);
const char* to_string(StopReason v);
const char* to_string(Verdict v);
const char* to_string(Alignment v);

std::optional<ShotScale> shot_scale_from_string(const std::string& s);
std::optional<HeroPresence> hero_presence_from_string(const std::string& s);
std::optional<GateKind> gate_kind_from_string(const std::string& s);
std::optional<GateRule> gate_rule_from_string(const std::string& s);
std::optional<RunMode> run_mode_from_string(const std::string& s);
std::optional<ReturnPolicy> return_policy_from_string(const std::string& s);
std::optional<StopReason> stop_reason_from_string(const std::string& s);
std::optional<Verdict> verdict_from_string(const std::string& s);
std::optional<Alignment> alignment_from_string(const std::string& s);

// ---------------------------------------------------------------------------
// Validation result: every violation found, never just the first.

struct ValidationReport {
  std::vector<std::string> violations;

  bool ok() const { return violations.empty(); }
  std::string joined() const;
  void add(const std::string& v) { violations.push_back(v); }
  void merge(const ValidationReport& other, const std::string& prefix);
};

// ---------------------------------------------------------------------------
// Grid geometry. Panel labels are canonical: the 2x2 grid uses the familiar
// corner names, every other shape uses r{row}c{col} with 1-based indices in
// row-major order. Labels are derived from (rows, cols), never stored.

struct GridLayout {
  int rows = 0;
  int cols = 0;
  std::vector<std::string> panel_order;

  int panel_count() const { return rows * cols; }

  static GridLayout standard(int rows, int cols);
  // Accepts "RxC", e.g. "2x2" or "1x3".
  static std::optional<GridLayout> parse_spec(const std::string& spec);
};

bool operator==(const GridLayout& a, const GridLayout& b);

// ---------------------------------------------------------------------------
// Stage 1 output: who the product is for and what story the grid tells.

struct ProductNarrativeFramework {
  std::string product_essence;
  std::string product_usage;
  std::string usage_context;
  std::string target_consumer_profile;
  std::string narrative_framework;
  json extras = json::object();
};

bool fields_equal(const ProductNarrativeFramework& a, const ProductNarrativeFramework& b);

// Names of the framework fields a critique suggestion may target.
const std::vector<std::string>& framework_field_names();

// ---------------------------------------------------------------------------
// Stage 2 output: per-panel photographic decisions plus one shared style.

struct PanelDecision {
  ShotScale shot_scale = ShotScale::medium;
  HeroPresence hero_presence = HeroPresence::full;
  int hero_number = 1;
  std::string subject_emphasis;
  std::string spatial_composition;
  std::string interaction;
  json extras = json::object();
};

struct GlobalVisualStyle {
  std::string color;
  std::string lighting;
  std::string style;
  std::string emotion_mood;
  json extras = json::object();
};

struct PhotographicPlan {
  GridLayout layout;
  std::map<std::string, PanelDecision> panels;  // keyed by panel label
  GlobalVisualStyle style;
  json extras = json::object();
};

// One-line fingerprint of a style block. Every compiled panel prompt must
// contain this string verbatim so the synthesis call sees one shared look.
std::string style_digest(const GlobalVisualStyle& style);

// ---------------------------------------------------------------------------
// Stage 3 output: the compiled per-panel prompts plus the two fixed blocks
// that precede them in the synthesis request.

struct PromptSet {
  std::map<std::string, std::string> prompts;  // keyed by panel label
  std::string fidelity_block;
  std::string aesthetic_block;
  json extras = json::object();
};

// ---------------------------------------------------------------------------
// Reference mode: narrative roles and photographic directives distilled from
// a reference collage, abstracted away from its concrete subject.

struct TransferDirections {
  std::string abstract_narrative;
  std::map<std::string, std::string> panel_roles;
  std::map<std::string, PanelDecision> panel_directives;
  GlobalVisualStyle style;
  json extras = json::object();
};

// ---------------------------------------------------------------------------
// Critique. Two gates, integer scores on a 0..5 scale per dimension.

struct NarrativeScores {
  int identity = 0;
  int usage = 0;
  int context = 0;
  int consumer = 0;
  std::map<std::string, std::string> reasons;
  json extras = json::object();
};

struct PhotoScores {
  int realism = 0;
  int coherence = 0;
  int aesthetic = 0;
  std::map<std::string, std::string> reasons;
  json extras = json::object();
};

int min_score(const NarrativeScores& s);
int min_score(const PhotoScores& s);
double mean_score(const NarrativeScores& s);
double mean_score(const PhotoScores& s);

struct GateConfig {
  int tau_narrative = 4;
  int tau_photography = 4;
  GateRule rule = GateRule::min;
};

bool gate_pass(const NarrativeScores& s, const GateConfig& cfg);
bool gate_pass(const PhotoScores& s, const GateConfig& cfg);

// What went wrong, where in the plan it lives, how to fix it. `where` is a
// closed vocabulary: a framework field name, a panel label, or "global".
struct Suggestion {
  GateKind gate = GateKind::narrative;
  std::string what;
  std::string where;
  std::string how;
  json extras = json::object();
};

// Self-contained record of one critique round: scores, the thresholds the
// decision used, and the suggestion when a gate failed. Gate 2 runs only
// after gate 1 passes, so photography scores may be absent.
struct CritiqueReport {
  NarrativeScores narrative;
  std::optional<PhotoScores> photography;
  bool gate1_pass = false;
  std::optional<bool> gate2_pass;
  std::optional<Suggestion> suggestion;
  GateConfig gates;
  json extras = json::object();
};

bool overall_pass(const CritiqueReport& r);

// ---------------------------------------------------------------------------
// Pipeline state, persisted at the end of a run. Paths are relative to the
// run directory so a run archive is relocatable.

struct PipelineState {
  int iteration = 0;
  RunMode mode = RunMode::creation;
  std::optional<ProductNarrativeFramework> framework;
  std::optional<PhotographicPlan> plan;
  std::optional<PromptSet> prompt_set;
  std::optional<std::string> collage_path;
  std::vector<CritiqueReport> critiques;
  std::optional<TransferDirections> transfer;
  std::optional<StopReason> stop_reason;
  std::optional<std::string> final_collage;
  json extras = json::object();
};

// ---------------------------------------------------------------------------
// Offline evaluation documents.

struct RubricEntry {
  int score = 0;
  std::string reason;
};

// Visual quality rubric: three fixed axes, each with a fixed set of
// sub-dimensions, integer scores on 1..10.
struct RubricScores {
  std::map<std::string, std::map<std::string, RubricEntry>> axes;
  json extras = json::object();
};

const std::map<std::string, std::vector<std::string>>& rubric_schema();

struct TransferReport {
  int grid_plan = 0;
  int narrative_logic = 0;
  int product_fit = 0;
  std::map<std::string, Alignment> per_position;
  std::vector<std::string> key_matches;
  std::vector<std::string> key_mismatches;
  Verdict verdict = Verdict::fail;
  json extras = json::object();
};

// ---------------------------------------------------------------------------
// JSON conversions. *_from_json throws SchemaError carrying every structural
// problem found; to_json round-trips unknown fields via `extras`.

json to_json(const GridLayout& v);
json to_json(const ProductNarrativeFramework& v);
json to_json(const PanelDecision& v);
json to_json(const GlobalVisualStyle& v);
json to_json(const PhotographicPlan& v);
json to_json(const PromptSet& v);
json to_json(const TransferDirections& v);
json to_json(const NarrativeScores& v);
json to_json(const PhotoScores& v);
json to_json(const GateConfig& v);
json to_json(const Suggestion& v);
json to_json(const CritiqueReport& v);
json to_json(const PipelineState& v);
json to_json(const RubricScores& v);
json to_json(const TransferReport& v);

GridLayout layout_from_json(const json& j);
ProductNarrativeFramework framework_from_json(const json& j);
PanelDecision panel_decision_from_json(const json& j);
GlobalVisualStyle style_from_json(const json& j);
PhotographicPlan plan_from_json(const json& j);
PromptSet prompt_set_from_json(const json& j);
TransferDirections transfer_from_json(const json& j);
NarrativeScores narrative_scores_from_json(const json& j);
PhotoScores photo_scores_from_json(const json& j);
GateConfig gate_config_from_json(const json& j);
Suggestion suggestion_from_json(const json& j);
CritiqueReport critique_from_json(const json& j);
PipelineState state_from_json(const json& j);
RubricScores rubric_from_json(const json& j);
TransferReport transfer_report_from_json(const json& j);

// ---------------------------------------------------------------------------
// Semantic validation. Pure; never throws; reports every violation.

ValidationReport validate(const GridLayout& v);
ValidationReport validate(const ProductNarrativeFramework& v);
ValidationReport validate(const PanelDecision& v);
ValidationReport validate(const GlobalVisualStyle& v);
ValidationReport validate(const PhotographicPlan& v);
ValidationReport validate(const PromptSet& v);
ValidationReport validate(const PromptSet& v, const GridLayout& layout);
ValidationReport validate(const TransferDirections& v, const GridLayout& layout);
ValidationReport validate(const NarrativeScores& v);
ValidationReport validate(const PhotoScores& v);
ValidationReport validate(const GateConfig& v);
ValidationReport validate(const Suggestion& v, const GridLayout& layout);
ValidationReport validate(const CritiqueReport& v, const GridLayout& layout);
ValidationReport validate(const PipelineState& v);
ValidationReport validate(const RubricScores& v);
ValidationReport validate(const TransferReport& v, const GridLayout& layout);

// ---------------------------------------------------------------------------
// Canonical text form: two-space indent, sorted keys, trailing newline.
// Equal documents serialize to identical bytes.

std::string serialize_canonical(const json& j);

std::string serialize(const ProductNarrativeFramework& v);
std::string serialize(const PhotographicPlan& v);
std::string serialize(const PromptSet& v);
std::string serialize(const TransferDirections& v);
std::string serialize(const CritiqueReport& v);
std::string serialize(const PipelineState& v);
std::string serialize(const RubricScores& v);
std::string serialize(const TransferReport& v);

// Full parse chain for stored documents: text -> json (ParseError) ->
// struct (SchemaError) -> validate (SchemaError).

ProductNarrativeFramework parse_framework(const std::string& text);
PhotographicPlan parse_plan(const std::string& text);
PromptSet parse_prompt_set(const std::string& text);
TransferDirections parse_transfer(const std::string& text, const GridLayout& layout);
CritiqueReport parse_critique(const std::string& text, const GridLayout& layout);
PipelineState parse_state(const std::string& text);
RubricScores parse_rubric(const std::string& text);
TransferReport parse_transfer_report(const std::string& text, const GridLayout& layout);

// json text -> json value with ParseError instead of nlohmann exceptions.
json parse_json_text(const std::string& text);

}  // namespace collage::model
