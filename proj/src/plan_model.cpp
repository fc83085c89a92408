#include "collage/plan_model.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "collage/errors.hpp"
#include "collage/util.hpp"

namespace collage::model {

namespace {

// Accumulates structural problems while pulling typed fields out of a json
// object, so a single bad document reports everything wrong with it at once.
class Reader {
 public:
  Reader(const json& j, std::string path, std::vector<std::string>& errors)
      : j_(j), path_(std::move(path)), errors_(errors) {
    if (!j_.is_object()) {
      errors_.push_back(path_ + ": expected an object");
      object_ = false;
    }
  }

  bool is_object() const { return object_; }

  std::string get_string(const char* key) {
    const json* v = fetch(key, "string");
    if (v == nullptr || !v->is_string()) {
      if (v != nullptr) type_error(key, "string");
      return {};
    }
    return v->get<std::string>();
  }

  int get_int(const char* key) {
    const json* v = fetch(key, "integer");
    if (v == nullptr) return 0;
    if (!v->is_number_integer()) {
      type_error(key, "integer");
      return 0;
    }
    return v->get<int>();
  }

  bool get_bool(const char* key) {
    const json* v = fetch(key, "boolean");
    if (v == nullptr) return false;
    if (!v->is_boolean()) {
      type_error(key, "boolean");
      return false;
    }
    return v->get<bool>();
  }

  const json* get_object(const char* key) {
    const json* v = fetch(key, "object");
    if (v == nullptr) return nullptr;
    if (!v->is_object()) {
      type_error(key, "object");
      return nullptr;
    }
    return v;
  }

  // Optional variants: absent keys are fine, wrong types are not.
  const json* opt_object(const char* key) {
    known_.insert(key);
    if (!object_ || !j_.contains(key)) return nullptr;
    if (!j_[key].is_object()) {
      type_error(key, "object");
      return nullptr;
    }
    return &j_[key];
  }

  std::optional<std::string> opt_string(const char* key) {
    known_.insert(key);
    if (!object_ || !j_.contains(key)) return std::nullopt;
    if (!j_[key].is_string()) {
      type_error(key, "string");
      return std::nullopt;
    }
    return j_[key].get<std::string>();
  }

  std::optional<bool> opt_bool(const char* key) {
    known_.insert(key);
    if (!object_ || !j_.contains(key)) return std::nullopt;
    if (!j_[key].is_boolean()) {
      type_error(key, "boolean");
      return std::nullopt;
    }
    return j_[key].get<bool>();
  }

  const json* opt_array(const char* key) {
    known_.insert(key);
    if (!object_ || !j_.contains(key)) return nullptr;
    if (!j_[key].is_array()) {
      type_error(key, "array");
      return nullptr;
    }
    return &j_[key];
  }

  std::map<std::string, std::string> opt_string_map(const char* key) {
    std::map<std::string, std::string> out;
    const json* v = opt_object(key);
    if (v == nullptr) return out;
    for (auto it = v->begin(); it != v->end(); ++it) {
      if (!it.value().is_string()) {
        errors_.push_back(path_ + "." + key + "." + it.key() + ": expected string");
        continue;
      }
      out[it.key()] = it.value().get<std::string>();
    }
    return out;
  }

  std::vector<std::string> opt_string_list(const char* key) {
    std::vector<std::string> out;
    const json* v = opt_array(key);
    if (v == nullptr) return out;
    for (std::size_t i = 0; i < v->size(); ++i) {
      if (!(*v)[i].is_string()) {
        errors_.push_back(path_ + "." + key + "[" + std::to_string(i) + "]: expected string");
        continue;
      }
      out.push_back((*v)[i].get<std::string>());
    }
    return out;
  }

  template <typename Enum>
  Enum get_enum(const char* key, std::optional<Enum> (*parse)(const std::string&),
                Enum fallback) {
    std::string raw = get_string(key);
    if (raw.empty()) return fallback;
    auto parsed = parse(raw);
    if (!parsed) {
      errors_.push_back(path_ + "." + key + ": unknown value \"" + raw + "\"");
      return fallback;
    }
    return *parsed;
  }

  // Everything not consumed by a getter, preserved verbatim.
  json extras() const {
    json out = json::object();
    if (!object_) return out;
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!known_.count(it.key())) out[it.key()] = it.value();
    }
    return out;
  }

  const std::string& path() const { return path_; }
  void error(const std::string& message) { errors_.push_back(path_ + ": " + message); }

 private:
  const json* fetch(const char* key, const char* type) {
    known_.insert(key);
    if (!object_) return nullptr;
    if (!j_.contains(key)) {
      errors_.push_back(path_ + "." + std::string(key) + ": missing (" + type + ")");
      return nullptr;
    }
    return &j_[key];
  }

  void type_error(const char* key, const char* type) {
    errors_.push_back(path_ + "." + std::string(key) + ": expected " + type);
  }

  const json& j_;
  std::string path_;
  std::vector<std::string>& errors_;
  std::set<std::string> known_;
  bool object_ = true;
};

void throw_if(const std::vector<std::string>& errors, const char* what) {
  if (!errors.empty()) {
    throw SchemaError(std::string(what) + ": " + util::join(errors, "; "), errors);
  }
}

void check_nonempty(ValidationReport& r, const std::string& field, const std::string& value) {
  if (util::trim(value).empty()) r.add(field + ": must be non-empty");
}

void check_score(ValidationReport& r, const std::string& field, int value, int lo, int hi) {
  if (value < lo || value > hi) {
    r.add(field + ": " + std::to_string(value) + " outside [" + std::to_string(lo) + ", " +
          std::to_string(hi) + "]");
  }
}

// Shared internal parsers used by several document types.

PanelDecision panel_decision_impl(const json& j, const std::string& path,
                                  std::vector<std::string>& errors) {
  Reader r(j, path, errors);
  PanelDecision d;
  d.shot_scale = r.get_enum("shot_scale", shot_scale_from_string, ShotScale::medium);
  d.hero_presence = r.get_enum("hero_presence", hero_presence_from_string, HeroPresence::full);
  d.hero_number = r.get_int("hero_number");
  d.subject_emphasis = r.get_string("subject_emphasis");
  d.spatial_composition = r.get_string("spatial_composition");
  d.interaction = r.get_string("interaction");
  d.extras = r.extras();
  return d;
}

GlobalVisualStyle style_impl(const json& j, const std::string& path,
                             std::vector<std::string>& errors) {
  Reader r(j, path, errors);
  GlobalVisualStyle s;
  s.color = r.get_string("color");
  s.lighting = r.get_string("lighting");
  s.style = r.get_string("style");
  s.emotion_mood = r.get_string("emotion_mood");
  s.extras = r.extras();
  return s;
}

std::map<std::string, PanelDecision> panel_map_impl(const json& j, const std::string& path,
                                                    std::vector<std::string>& errors) {
  std::map<std::string, PanelDecision> out;
  if (!j.is_object()) {
    errors.push_back(path + ": expected an object");
    return out;
  }
  for (auto it = j.begin(); it != j.end(); ++it) {
    out[it.key()] = panel_decision_impl(it.value(), path + "." + it.key(), errors);
  }
  return out;
}

NarrativeScores narrative_scores_impl(const json& j, const std::string& path,
                                      std::vector<std::string>& errors) {
  Reader r(j, path, errors);
  NarrativeScores s;
  s.identity = r.get_int("identity");
  s.usage = r.get_int("usage");
  s.context = r.get_int("context");
  s.consumer = r.get_int("consumer");
  s.reasons = r.opt_string_map("reasons");
  s.extras = r.extras();
  return s;
}

PhotoScores photo_scores_impl(const json& j, const std::string& path,
                              std::vector<std::string>& errors) {
  Reader r(j, path, errors);
  PhotoScores s;
  s.realism = r.get_int("realism");
  s.coherence = r.get_int("coherence");
  s.aesthetic = r.get_int("aesthetic");
  s.reasons = r.opt_string_map("reasons");
  s.extras = r.extras();
  return s;
}

GateConfig gate_config_impl(const json& j, const std::string& path,
                            std::vector<std::string>& errors) {
  Reader r(j, path, errors);
  GateConfig g;
  g.tau_narrative = r.get_int("tau_narrative");
  g.tau_photography = r.get_int("tau_photography");
  g.rule = r.get_enum("rule", gate_rule_from_string, GateRule::min);
  return g;
}

Suggestion suggestion_impl(const json& j, const std::string& path,
                           std::vector<std::string>& errors) {
  Reader r(j, path, errors);
  Suggestion s;
  s.gate = r.get_enum("gate", gate_kind_from_string, GateKind::narrative);
  s.what = r.get_string("what");
  s.where = r.get_string("where");
  s.how = r.get_string("how");
  s.extras = r.extras();
  return s;
}

GridLayout layout_impl(const json& j, const std::string& path, std::vector<std::string>& errors) {
  Reader r(j, path, errors);
  GridLayout g;
  g.rows = r.get_int("rows");
  g.cols = r.get_int("cols");
  if (g.rows >= 1 && g.cols >= 1) {
    g = GridLayout::standard(g.rows, g.cols);
  } else if (errors.empty()) {
    errors.push_back(path + ": rows and cols must be >= 1");
  }
  return g;
}

ProductNarrativeFramework framework_impl(const json& j, const std::string& path,
                                         std::vector<std::string>& errors) {
  Reader r(j, path, errors);
  ProductNarrativeFramework f;
  f.product_essence = r.get_string("product_essence");
  f.product_usage = r.get_string("product_usage");
  f.usage_context = r.get_string("usage_context");
  f.target_consumer_profile = r.get_string("target_consumer_profile");
  f.narrative_framework = r.get_string("narrative_framework");
  f.extras = r.extras();
  return f;
}

PhotographicPlan plan_impl(const json& j, const std::string& path,
                           std::vector<std::string>& errors) {
  Reader r(j, path, errors);
  PhotographicPlan p;
  if (const json* layout = r.get_object("layout")) {
    p.layout = layout_impl(*layout, path + ".layout", errors);
  }
  if (const json* panels = r.get_object("panels")) {
    p.panels = panel_map_impl(*panels, path + ".panels", errors);
  }
  if (const json* style = r.get_object("global_visual_style")) {
    p.style = style_impl(*style, path + ".global_visual_style", errors);
  }
  p.extras = r.extras();
  return p;
}

TransferDirections transfer_impl(const json& j, const std::string& path,
                                 std::vector<std::string>& errors) {
  Reader r(j, path, errors);
  TransferDirections t;
  t.abstract_narrative = r.get_string("abstract_narrative");
  t.panel_roles = r.opt_string_map("panel_roles");
  if (!j.is_object() || !j.contains("panel_roles")) {
    errors.push_back(path + ".panel_roles: missing (object)");
  }
  if (const json* directives = r.get_object("panel_directives")) {
    t.panel_directives = panel_map_impl(*directives, path + ".panel_directives", errors);
  }
  if (const json* style = r.get_object("global_visual_style")) {
    t.style = style_impl(*style, path + ".global_visual_style", errors);
  }
  t.extras = r.extras();
  return t;
}

CritiqueReport critique_impl(const json& j, const std::string& path,
                             std::vector<std::string>& errors) {
  Reader r(j, path, errors);
  CritiqueReport c;
  if (const json* narr = r.get_object("narrative")) {
    c.narrative = narrative_scores_impl(*narr, path + ".narrative", errors);
  }
  if (const json* photo = r.opt_object("photography")) {
    c.photography = photo_scores_impl(*photo, path + ".photography", errors);
  }
  c.gate1_pass = r.get_bool("gate1_pass");
  c.gate2_pass = r.opt_bool("gate2_pass");
  if (const json* sugg = r.opt_object("suggestion")) {
    c.suggestion = suggestion_impl(*sugg, path + ".suggestion", errors);
  }
  if (const json* gates = r.get_object("gates")) {
    c.gates = gate_config_impl(*gates, path + ".gates", errors);
  }
  // Means are stored for readers of the file; the struct recomputes them.
  json extras = r.extras();
  extras.erase("narrative_mean");
  extras.erase("photography_mean");
  c.extras = extras;
  return c;
}

json panel_map_to_json(const std::map<std::string, PanelDecision>& panels) {
  json out = json::object();
  for (const auto& [label, decision] : panels) out[label] = to_json(decision);
  return out;
}

json merge_extras(json extras, json known) {
  for (auto it = known.begin(); it != known.end(); ++it) {
    extras[it.key()] = it.value();
  }
  return extras;
}

}  // namespace

// ---------------------------------------------------------------------------
// Enums

const char* to_string(ShotScale v) {
  switch (v) {
    case ShotScale::macro: return "macro";
    case ShotScale::close: return "close";
    case ShotScale::medium: return "medium";
    case ShotScale::wide: return "wide";
  }
  return "medium";
}

const char* to_string(HeroPresence v) {
  switch (v) {
    case HeroPresence::full: return "full";
    case HeroPresence::partial: return "partial";
    case HeroPresence::none: return "none";
  }
  return "full";
}

const char* to_string(GateKind v) {
  return v == GateKind::narrative ? "narrative" : "photography";
}

const char* to_string(GateRule v) { return v == GateRule::min ? "min" : "mean"; }

const char* to_string(RunMode v) { return v == RunMode::creation ? "creation" : "reference"; }

const char* to_string(ReturnPolicy v) { return v == ReturnPolicy::last ? "last" : "best"; }

const char* to_string(StopReason v) {
  switch (v) {
    case StopReason::gates_passed: return "gates_passed";
    case StopReason::budget_exhausted: return "budget_exhausted";
    case StopReason::fatal_error: return "fatal_error";
  }
  return "fatal_error";
}

const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::pass: return "pass";
    case Verdict::borderline: return "borderline";
    case Verdict::fail: return "fail";
  }
  return "fail";
}

const char* to_string(Alignment v) {
  switch (v) {
    case Alignment::strong: return "strong";
    case Alignment::partial: return "partial";
    case Alignment::weak: return "weak";
  }
  return "weak";
}

namespace {
template <typename Enum>
std::optional<Enum> enum_from_string(const std::string& s, std::initializer_list<Enum> all) {
  for (Enum v : all) {
    if (s == to_string(v)) return v;
  }
  return std::nullopt;
}
}  // namespace

std::optional<ShotScale> shot_scale_from_string(const std::string& s) {
  return enum_from_string(s, {ShotScale::macro, ShotScale::close, ShotScale::medium, ShotScale::wide});
}
std::optional<HeroPresence> hero_presence_from_string(const std::string& s) {
  return enum_from_string(s, {HeroPresence::full, HeroPresence::partial, HeroPresence::none});
}
std::optional<GateKind> gate_kind_from_string(const std::string& s) {
  return enum_from_string(s, {GateKind::narrative, GateKind::photography});
}
std::optional<GateRule> gate_rule_from_string(const std::string& s) {
  return enum_from_string(s, {GateRule::min, GateRule::mean});
}
std::optional<RunMode> run_mode_from_string(const std::string& s) {
  return enum_from_string(s, {RunMode::creation, RunMode::reference});
}
std::optional<ReturnPolicy> return_policy_from_string(const std::string& s) {
  return enum_from_string(s, {ReturnPolicy::last, ReturnPolicy::best});
}
std::optional<StopReason> stop_reason_from_string(const std::string& s) {
  return enum_from_string(s, {StopReason::gates_passed, StopReason::budget_exhausted,
                              StopReason::fatal_error});
}
std::optional<Verdict> verdict_from_string(const std::string& s) {
  return enum_from_string(s, {Verdict::pass, Verdict::borderline, Verdict::fail});
}
std::optional<Alignment> alignment_from_string(const std::string& s) {
  return enum_from_string(s, {Alignment::strong, Alignment::partial, Alignment::weak});
}

// ---------------------------------------------------------------------------
// ValidationReport

std::string ValidationReport::joined() const { return util::join(violations, "; "); }

void ValidationReport::merge(const ValidationReport& other, const std::string& prefix) {
  for (const auto& v : other.violations) violations.push_back(prefix + v);
}

// ---------------------------------------------------------------------------
// GridLayout

GridLayout GridLayout::standard(int rows, int cols) {
  GridLayout g;
  g.rows = rows;
  g.cols = cols;
  if (rows == 2 && cols == 2) {
    g.panel_order = {"top_left", "top_right", "bottom_left", "bottom_right"};
    return g;
  }
  for (int r = 1; r <= rows; ++r) {
    for (int c = 1; c <= cols; ++c) {
      g.panel_order.push_back("r" + std::to_string(r) + "c" + std::to_string(c));
    }
  }
  return g;
}

std::optional<GridLayout> GridLayout::parse_spec(const std::string& spec) {
  std::size_t x = spec.find('x');
  if (x == std::string::npos || x == 0 || x + 1 >= spec.size()) return std::nullopt;
  int rows = 0;
  int cols = 0;
  try {
    std::size_t used = 0;
    rows = std::stoi(spec.substr(0, x), &used);
    if (used != x) return std::nullopt;
    cols = std::stoi(spec.substr(x + 1), &used);
    if (used != spec.size() - x - 1) return std::nullopt;
  } catch (const std::exception&) {
    return std::nullopt;
  }
  if (rows < 1 || cols < 1) return std::nullopt;
  return standard(rows, cols);
}

bool operator==(const GridLayout& a, const GridLayout& b) {
  return a.rows == b.rows && a.cols == b.cols;
}

// ---------------------------------------------------------------------------
// Small helpers

bool fields_equal(const ProductNarrativeFramework& a, const ProductNarrativeFramework& b) {
  return a.product_essence == b.product_essence && a.product_usage == b.product_usage &&
         a.usage_context == b.usage_context &&
         a.target_consumer_profile == b.target_consumer_profile &&
         a.narrative_framework == b.narrative_framework;
}

const std::vector<std::string>& framework_field_names() {
  static const std::vector<std::string> names = {
      "product_essence", "product_usage", "usage_context", "target_consumer_profile"};
  return names;
}

std::string style_digest(const GlobalVisualStyle& style) {
  return "STYLE: color=" + style.color + "; lighting=" + style.lighting +
         "; style=" + style.style + "; mood=" + style.emotion_mood;
}

int min_score(const NarrativeScores& s) {
  return std::min({s.identity, s.usage, s.context, s.consumer});
}

int min_score(const PhotoScores& s) { return std::min({s.realism, s.coherence, s.aesthetic}); }

double mean_score(const NarrativeScores& s) {
  return (s.identity + s.usage + s.context + s.consumer) / 4.0;
}

double mean_score(const PhotoScores& s) { return (s.realism + s.coherence + s.aesthetic) / 3.0; }

bool gate_pass(const NarrativeScores& s, const GateConfig& cfg) {
  if (cfg.rule == GateRule::min) return min_score(s) >= cfg.tau_narrative;
  return mean_score(s) >= static_cast<double>(cfg.tau_narrative);
}

bool gate_pass(const PhotoScores& s, const GateConfig& cfg) {
  if (cfg.rule == GateRule::min) return min_score(s) >= cfg.tau_photography;
  return mean_score(s) >= static_cast<double>(cfg.tau_photography);
}

bool overall_pass(const CritiqueReport& r) {
  return r.gate1_pass && r.gate2_pass.has_value() && *r.gate2_pass;
}

const std::map<std::string, std::vector<std::string>>& rubric_schema() {
  static const std::map<std::string, std::vector<std::string>> schema = {
      {"aesthetics",
       {"composition_hierarchy", "lighting_rendering", "color_harmony", "grid_balance"}},
      {"richness", {"function_coverage", "information_density", "product_relevance"}},
      {"coherence",
       {"product_identity_consistency", "product_centric_narrative", "style_tone_consistency",
        "world_campaign_cohesion"}},
  };
  return schema;
}

// ---------------------------------------------------------------------------
// to_json

json to_json(const GridLayout& v) { return json{{"rows", v.rows}, {"cols", v.cols}}; }

json to_json(const ProductNarrativeFramework& v) {
  return merge_extras(v.extras, json{{"product_essence", v.product_essence},
                                     {"product_usage", v.product_usage},
                                     {"usage_context", v.usage_context},
                                     {"target_consumer_profile", v.target_consumer_profile},
                                     {"narrative_framework", v.narrative_framework}});
}

json to_json(const PanelDecision& v) {
  return merge_extras(v.extras, json{{"shot_scale", to_string(v.shot_scale)},
                                     {"hero_presence", to_string(v.hero_presence)},
                                     {"hero_number", v.hero_number},
                                     {"subject_emphasis", v.subject_emphasis},
                                     {"spatial_composition", v.spatial_composition},
                                     {"interaction", v.interaction}});
}

json to_json(const GlobalVisualStyle& v) {
  return merge_extras(v.extras, json{{"color", v.color},
                                     {"lighting", v.lighting},
                                     {"style", v.style},
                                     {"emotion_mood", v.emotion_mood}});
}

json to_json(const PhotographicPlan& v) {
  return merge_extras(v.extras, json{{"layout", to_json(v.layout)},
                                     {"panels", panel_map_to_json(v.panels)},
                                     {"global_visual_style", to_json(v.style)}});
}

json to_json(const PromptSet& v) {
  json prompts = json::object();
  for (const auto& [label, text] : v.prompts) prompts[label] = text;
  return merge_extras(v.extras, json{{"prompts", prompts},
                                     {"fidelity_block", v.fidelity_block},
                                     {"aesthetic_block", v.aesthetic_block}});
}

json to_json(const TransferDirections& v) {
  json roles = json::object();
  for (const auto& [label, role] : v.panel_roles) roles[label] = role;
  return merge_extras(v.extras, json{{"abstract_narrative", v.abstract_narrative},
                                     {"panel_roles", roles},
                                     {"panel_directives", panel_map_to_json(v.panel_directives)},
                                     {"global_visual_style", to_json(v.style)}});
}

json to_json(const NarrativeScores& v) {
  json j{{"identity", v.identity},
         {"usage", v.usage},
         {"context", v.context},
         {"consumer", v.consumer}};
  if (!v.reasons.empty()) j["reasons"] = v.reasons;
  return merge_extras(v.extras, j);
}

json to_json(const PhotoScores& v) {
  json j{{"realism", v.realism}, {"coherence", v.coherence}, {"aesthetic", v.aesthetic}};
  if (!v.reasons.empty()) j["reasons"] = v.reasons;
  return merge_extras(v.extras, j);
}

json to_json(const GateConfig& v) {
  return json{{"tau_narrative", v.tau_narrative},
              {"tau_photography", v.tau_photography},
              {"rule", to_string(v.rule)}};
}

json to_json(const Suggestion& v) {
  return merge_extras(v.extras, json{{"gate", to_string(v.gate)},
                                     {"what", v.what},
                                     {"where", v.where},
                                     {"how", v.how}});
}

json to_json(const CritiqueReport& v) {
  json j{{"narrative", to_json(v.narrative)},
         {"gate1_pass", v.gate1_pass},
         {"gates", to_json(v.gates)},
         {"narrative_mean", mean_score(v.narrative)}};
  if (v.photography) {
    j["photography"] = to_json(*v.photography);
    j["photography_mean"] = mean_score(*v.photography);
  }
  if (v.gate2_pass) j["gate2_pass"] = *v.gate2_pass;
  if (v.suggestion) j["suggestion"] = to_json(*v.suggestion);
  return merge_extras(v.extras, j);
}

json to_json(const PipelineState& v) {
  json j{{"iteration", v.iteration}, {"mode", to_string(v.mode)}};
  if (v.framework) j["framework"] = to_json(*v.framework);
  if (v.plan) j["plan"] = to_json(*v.plan);
  if (v.prompt_set) j["prompt_set"] = to_json(*v.prompt_set);
  if (v.collage_path) j["collage_path"] = *v.collage_path;
  json critiques = json::array();
  for (const auto& c : v.critiques) critiques.push_back(to_json(c));
  j["critiques"] = critiques;
  if (v.transfer) j["transfer"] = to_json(*v.transfer);
  if (v.stop_reason) j["stop_reason"] = to_string(*v.stop_reason);
  if (v.final_collage) j["final_collage"] = *v.final_collage;
  return merge_extras(v.extras, j);
}

json to_json(const RubricScores& v) {
  json j = json::object();
  for (const auto& [axis, subs] : v.axes) {
    json axis_json = json::object();
    for (const auto& [name, entry] : subs) {
      axis_json[name] = json{{"score", entry.score}, {"reason", entry.reason}};
    }
    j[axis] = axis_json;
  }
  return merge_extras(v.extras, j);
}

json to_json(const TransferReport& v) {
  json per_position = json::object();
  for (const auto& [label, alignment] : v.per_position) {
    per_position[label] = to_string(alignment);
  }
  return merge_extras(v.extras, json{{"grid_plan", v.grid_plan},
                                     {"narrative_logic", v.narrative_logic},
                                     {"product_fit", v.product_fit},
                                     {"per_position", per_position},
                                     {"key_matches", v.key_matches},
                                     {"key_mismatches", v.key_mismatches},
                                     {"verdict", to_string(v.verdict)}});
}

// ---------------------------------------------------------------------------
// from_json

GridLayout layout_from_json(const json& j) {
  std::vector<std::string> errors;
  GridLayout v = layout_impl(j, "layout", errors);
  throw_if(errors, "layout");
  return v;
}

ProductNarrativeFramework framework_from_json(const json& j) {
  std::vector<std::string> errors;
  ProductNarrativeFramework v = framework_impl(j, "framework", errors);
  throw_if(errors, "framework");
  return v;
}

PanelDecision panel_decision_from_json(const json& j) {
  std::vector<std::string> errors;
  PanelDecision v = panel_decision_impl(j, "panel", errors);
  throw_if(errors, "panel");
  return v;
}

GlobalVisualStyle style_from_json(const json& j) {
  std::vector<std::string> errors;
  GlobalVisualStyle v = style_impl(j, "style", errors);
  throw_if(errors, "style");
  return v;
}

PhotographicPlan plan_from_json(const json& j) {
  std::vector<std::string> errors;
  PhotographicPlan v = plan_impl(j, "plan", errors);
  throw_if(errors, "plan");
  return v;
}

PromptSet prompt_set_from_json(const json& j) {
  std::vector<std::string> errors;
  Reader r(j, "prompt_set", errors);
  PromptSet v;
  if (const json* prompts = r.get_object("prompts")) {
    for (auto it = prompts->begin(); it != prompts->end(); ++it) {
      if (!it.value().is_string()) {
        errors.push_back("prompt_set.prompts." + it.key() + ": expected string");
        continue;
      }
      v.prompts[it.key()] = it.value().get<std::string>();
    }
  }
  v.fidelity_block = r.get_string("fidelity_block");
  v.aesthetic_block = r.get_string("aesthetic_block");
  v.extras = r.extras();
  throw_if(errors, "prompt_set");
  return v;
}

TransferDirections transfer_from_json(const json& j) {
  std::vector<std::string> errors;
  TransferDirections v = transfer_impl(j, "transfer", errors);
  throw_if(errors, "transfer");
  return v;
}

NarrativeScores narrative_scores_from_json(const json& j) {
  std::vector<std::string> errors;
  NarrativeScores v = narrative_scores_impl(j, "narrative", errors);
  throw_if(errors, "narrative scores");
  return v;
}

PhotoScores photo_scores_from_json(const json& j) {
  std::vector<std::string> errors;
  PhotoScores v = photo_scores_impl(j, "photography", errors);
  throw_if(errors, "photography scores");
  return v;
}

GateConfig gate_config_from_json(const json& j) {
  std::vector<std::string> errors;
  GateConfig v = gate_config_impl(j, "gates", errors);
  throw_if(errors, "gate config");
  return v;
}

Suggestion suggestion_from_json(const json& j) {
  std::vector<std::string> errors;
  Suggestion v = suggestion_impl(j, "suggestion", errors);
  throw_if(errors, "suggestion");
  return v;
}

CritiqueReport critique_from_json(const json& j) {
  std::vector<std::string> errors;
  CritiqueReport v = critique_impl(j, "critique", errors);
  throw_if(errors, "critique");
  return v;
}

PipelineState state_from_json(const json& j) {
  std::vector<std::string> errors;
  Reader r(j, "state", errors);
  PipelineState v;
  v.iteration = r.get_int("iteration");
  v.mode = r.get_enum("mode", run_mode_from_string, RunMode::creation);
  if (const json* fw = r.opt_object("framework")) {
    v.framework = framework_impl(*fw, "state.framework", errors);
  }
  if (const json* plan = r.opt_object("plan")) {
    v.plan = plan_impl(*plan, "state.plan", errors);
  }
  if (const json* ps = r.opt_object("prompt_set")) {
    try {
      v.prompt_set = prompt_set_from_json(*ps);
    } catch (const SchemaError& e) {
      for (const auto& violation : e.violations()) errors.push_back("state." + violation);
    }
  }
  v.collage_path = r.opt_string("collage_path");
  if (const json* critiques = r.opt_array("critiques")) {
    for (std::size_t i = 0; i < critiques->size(); ++i) {
      v.critiques.push_back(
          critique_impl((*critiques)[i], "state.critiques[" + std::to_string(i) + "]", errors));
    }
  }
  if (const json* transfer = r.opt_object("transfer")) {
    v.transfer = transfer_impl(*transfer, "state.transfer", errors);
  }
  if (auto reason = r.opt_string("stop_reason")) {
    auto parsed = stop_reason_from_string(*reason);
    if (!parsed) {
      errors.push_back("state.stop_reason: unknown value \"" + *reason + "\"");
    } else {
      v.stop_reason = *parsed;
    }
  }
  v.final_collage = r.opt_string("final_collage");
  v.extras = r.extras();
  throw_if(errors, "state");
  return v;
}

RubricScores rubric_from_json(const json& j) {
  std::vector<std::string> errors;
  RubricScores v;
  if (!j.is_object()) {
    throw SchemaError("rubric: expected an object", {"rubric: expected an object"});
  }
  for (const auto& [axis, subs] : rubric_schema()) {
    if (!j.contains(axis)) {
      errors.push_back("rubric." + axis + ": missing (object)");
      continue;
    }
    if (!j[axis].is_object()) {
      errors.push_back("rubric." + axis + ": expected object");
      continue;
    }
    for (const auto& name : subs) {
      if (!j[axis].contains(name)) {
        errors.push_back("rubric." + axis + "." + name + ": missing (object)");
        continue;
      }
      const json& entry = j[axis][name];
      RubricEntry out;
      if (entry.is_object()) {
        if (entry.contains("score") && entry["score"].is_number_integer()) {
          out.score = entry["score"].get<int>();
        } else {
          errors.push_back("rubric." + axis + "." + name + ".score: missing or not an integer");
        }
        if (entry.contains("reason") && entry["reason"].is_string()) {
          out.reason = entry["reason"].get<std::string>();
        }
      } else {
        errors.push_back("rubric." + axis + "." + name + ": expected object");
      }
      v.axes[axis][name] = out;
    }
    for (auto it = j[axis].begin(); it != j[axis].end(); ++it) {
      if (std::find(subs.begin(), subs.end(), it.key()) == subs.end()) {
        errors.push_back("rubric." + axis + "." + it.key() + ": unknown sub-dimension");
      }
    }
  }
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!rubric_schema().count(it.key())) v.extras[it.key()] = it.value();
  }
  throw_if(errors, "rubric");
  return v;
}

TransferReport transfer_report_from_json(const json& j) {
  std::vector<std::string> errors;
  Reader r(j, "transfer_report", errors);
  TransferReport v;
  v.grid_plan = r.get_int("grid_plan");
  v.narrative_logic = r.get_int("narrative_logic");
  v.product_fit = r.get_int("product_fit");
  if (const json* per_position = r.get_object("per_position")) {
    for (auto it = per_position->begin(); it != per_position->end(); ++it) {
      if (!it.value().is_string()) {
        errors.push_back("transfer_report.per_position." + it.key() + ": expected string");
        continue;
      }
      auto parsed = alignment_from_string(it.value().get<std::string>());
      if (!parsed) {
        errors.push_back("transfer_report.per_position." + it.key() + ": unknown value \"" +
                         it.value().get<std::string>() + "\"");
        continue;
      }
      v.per_position[it.key()] = *parsed;
    }
  }
  v.key_matches = r.opt_string_list("key_matches");
  v.key_mismatches = r.opt_string_list("key_mismatches");
  v.verdict = r.get_enum("verdict", verdict_from_string, Verdict::fail);
  v.extras = r.extras();
  throw_if(errors, "transfer_report");
  return v;
}

// ---------------------------------------------------------------------------
// validate

ValidationReport validate(const GridLayout& v) {
  ValidationReport r;
  if (v.rows < 1) r.add("layout.rows: must be >= 1");
  if (v.cols < 1) r.add("layout.cols: must be >= 1");
  if (v.rows >= 1 && v.cols >= 1 &&
      v.panel_order != GridLayout::standard(v.rows, v.cols).panel_order) {
    r.add("layout.panel_order: not the canonical labels for " + std::to_string(v.rows) + "x" +
          std::to_string(v.cols));
  }
  return r;
}

ValidationReport validate(const ProductNarrativeFramework& v) {
  ValidationReport r;
  check_nonempty(r, "framework.product_essence", v.product_essence);
  check_nonempty(r, "framework.product_usage", v.product_usage);
  check_nonempty(r, "framework.usage_context", v.usage_context);
  check_nonempty(r, "framework.target_consumer_profile", v.target_consumer_profile);
  check_nonempty(r, "framework.narrative_framework", v.narrative_framework);
  return r;
}

ValidationReport validate(const PanelDecision& v) {
  ValidationReport r;
  if (v.hero_number < 0) r.add("hero_number: must be >= 0");
  if (v.hero_presence == HeroPresence::none && v.hero_number != 0) {
    r.add("hero_number: must be 0 when hero_presence is none");
  }
  if (v.hero_presence != HeroPresence::none && v.hero_number < 1) {
    r.add("hero_number: must be >= 1 when the hero is visible");
  }
  check_nonempty(r, "subject_emphasis", v.subject_emphasis);
  check_nonempty(r, "spatial_composition", v.spatial_composition);
  check_nonempty(r, "interaction", v.interaction);
  return r;
}

ValidationReport validate(const GlobalVisualStyle& v) {
  ValidationReport r;
  check_nonempty(r, "global_visual_style.color", v.color);
  check_nonempty(r, "global_visual_style.lighting", v.lighting);
  check_nonempty(r, "global_visual_style.style", v.style);
  check_nonempty(r, "global_visual_style.emotion_mood", v.emotion_mood);
  return r;
}

namespace {

void check_panel_coverage(ValidationReport& r, const GridLayout& layout,
                          const std::vector<std::string>& present, const std::string& what) {
  std::set<std::string> expected(layout.panel_order.begin(), layout.panel_order.end());
  std::set<std::string> got(present.begin(), present.end());
  for (const auto& label : expected) {
    if (!got.count(label)) r.add(what + ": missing panel \"" + label + "\"");
  }
  for (const auto& label : got) {
    if (!expected.count(label)) r.add(what + ": unexpected panel \"" + label + "\"");
  }
}

template <typename Map>
std::vector<std::string> keys_of(const Map& m) {
  std::vector<std::string> out;
  for (const auto& [k, v] : m) out.push_back(k);
  return out;
}

}  // namespace

ValidationReport validate(const PhotographicPlan& v) {
  ValidationReport r;
  ValidationReport layout_report = validate(v.layout);
  r.merge(layout_report, "plan.");
  if (!layout_report.ok()) return r;
  check_panel_coverage(r, v.layout, keys_of(v.panels), "plan.panels");
  for (const auto& [label, decision] : v.panels) {
    r.merge(validate(decision), "plan.panels." + label + ".");
  }
  r.merge(validate(v.style), "plan.");
  if (v.layout.panel_count() >= 3) {
    std::set<ShotScale> scales;
    for (const auto& [label, decision] : v.panels) scales.insert(decision.shot_scale);
    if (scales.size() < 2) {
      r.add("plan.panels: a grid of 3 or more panels needs at least 2 distinct shot scales");
    }
  }
  return r;
}

ValidationReport validate(const PromptSet& v) {
  ValidationReport r;
  if (v.prompts.empty()) r.add("prompt_set.prompts: must not be empty");
  for (const auto& [label, text] : v.prompts) {
    check_nonempty(r, "prompt_set.prompts." + label, text);
  }
  check_nonempty(r, "prompt_set.fidelity_block", v.fidelity_block);
  check_nonempty(r, "prompt_set.aesthetic_block", v.aesthetic_block);
  return r;
}

ValidationReport validate(const PromptSet& v, const GridLayout& layout) {
  ValidationReport r = validate(v);
  check_panel_coverage(r, layout, keys_of(v.prompts), "prompt_set.prompts");
  return r;
}

ValidationReport validate(const TransferDirections& v, const GridLayout& layout) {
  ValidationReport r;
  check_nonempty(r, "transfer.abstract_narrative", v.abstract_narrative);
  check_panel_coverage(r, layout, keys_of(v.panel_roles), "transfer.panel_roles");
  for (const auto& [label, role] : v.panel_roles) {
    check_nonempty(r, "transfer.panel_roles." + label, role);
  }
  check_panel_coverage(r, layout, keys_of(v.panel_directives), "transfer.panel_directives");
  for (const auto& [label, decision] : v.panel_directives) {
    r.merge(validate(decision), "transfer.panel_directives." + label + ".");
  }
  r.merge(validate(v.style), "transfer.");
  return r;
}

ValidationReport validate(const NarrativeScores& v) {
  ValidationReport r;
  check_score(r, "narrative.identity", v.identity, 0, 5);
  check_score(r, "narrative.usage", v.usage, 0, 5);
  check_score(r, "narrative.context", v.context, 0, 5);
  check_score(r, "narrative.consumer", v.consumer, 0, 5);
  return r;
}

ValidationReport validate(const PhotoScores& v) {
  ValidationReport r;
  check_score(r, "photography.realism", v.realism, 0, 5);
  check_score(r, "photography.coherence", v.coherence, 0, 5);
  check_score(r, "photography.aesthetic", v.aesthetic, 0, 5);
  return r;
}

ValidationReport validate(const GateConfig& v) {
  ValidationReport r;
  check_score(r, "gates.tau_narrative", v.tau_narrative, 0, 5);
  check_score(r, "gates.tau_photography", v.tau_photography, 0, 5);
  return r;
}

ValidationReport validate(const Suggestion& v, const GridLayout& layout) {
  ValidationReport r;
  check_nonempty(r, "suggestion.what", v.what);
  check_nonempty(r, "suggestion.where", v.where);
  check_nonempty(r, "suggestion.how", v.how);
  if (!v.where.empty()) {
    const auto& fields = framework_field_names();
    bool ok = v.where == "global" ||
              std::find(fields.begin(), fields.end(), v.where) != fields.end() ||
              std::find(layout.panel_order.begin(), layout.panel_order.end(), v.where) !=
                  layout.panel_order.end();
    if (!ok) r.add("suggestion.where: \"" + v.where + "\" is not a framework field, panel, or \"global\"");
  }
  return r;
}

ValidationReport validate(const CritiqueReport& v, const GridLayout& layout) {
  ValidationReport r;
  r.merge(validate(v.narrative), "critique.");
  r.merge(validate(v.gates), "critique.");
  if (v.photography) r.merge(validate(*v.photography), "critique.");
  if (v.gate1_pass != gate_pass(v.narrative, v.gates)) {
    r.add("critique.gate1_pass: inconsistent with scores and thresholds");
  }
  if (v.gate1_pass) {
    if (!v.photography) r.add("critique.photography: required once gate 1 passes");
    if (!v.gate2_pass) {
      r.add("critique.gate2_pass: required once gate 1 passes");
    } else if (v.photography && *v.gate2_pass != gate_pass(*v.photography, v.gates)) {
      r.add("critique.gate2_pass: inconsistent with scores and thresholds");
    }
  } else {
    if (v.photography) r.add("critique.photography: must be absent when gate 1 fails");
    if (v.gate2_pass) r.add("critique.gate2_pass: must be absent when gate 1 fails");
  }
  if (overall_pass(v)) {
    if (v.suggestion) r.add("critique.suggestion: must be absent when both gates pass");
  } else {
    if (!v.suggestion) {
      r.add("critique.suggestion: required when a gate fails");
    } else {
      r.merge(validate(*v.suggestion, layout), "critique.");
      GateKind failing = v.gate1_pass ? GateKind::photography : GateKind::narrative;
      if (v.suggestion->gate != failing) {
        r.add("critique.suggestion.gate: does not name the failing gate");
      }
    }
  }
  return r;
}

ValidationReport validate(const PipelineState& v) {
  ValidationReport r;
  if (v.iteration < 0) r.add("state.iteration: must be >= 0");
  if (v.framework) r.merge(validate(*v.framework), "state.");
  if (v.plan) {
    r.merge(validate(*v.plan), "state.");
    if (!v.framework) r.add("state.plan: present without a framework");
    for (std::size_t i = 0; i < v.critiques.size(); ++i) {
      r.merge(validate(v.critiques[i], v.plan->layout),
              "state.critiques[" + std::to_string(i) + "].");
    }
  }
  if (v.prompt_set && !v.plan) r.add("state.prompt_set: present without a plan");
  if (v.mode == RunMode::creation && v.transfer) {
    r.add("state.transfer: present in creation mode");
  }
  if (static_cast<int>(v.critiques.size()) > v.iteration + 1) {
    r.add("state.critiques: more critiques than generated collages");
  }
  return r;
}

ValidationReport validate(const RubricScores& v) {
  ValidationReport r;
  for (const auto& [axis, subs] : rubric_schema()) {
    auto axis_it = v.axes.find(axis);
    if (axis_it == v.axes.end()) {
      r.add("rubric." + axis + ": missing");
      continue;
    }
    for (const auto& name : subs) {
      auto it = axis_it->second.find(name);
      if (it == axis_it->second.end()) {
        r.add("rubric." + axis + "." + name + ": missing");
        continue;
      }
      check_score(r, "rubric." + axis + "." + name + ".score", it->second.score, 1, 10);
    }
    for (const auto& [name, entry] : axis_it->second) {
      if (std::find(subs.begin(), subs.end(), name) == subs.end()) {
        r.add("rubric." + axis + "." + name + ": unknown sub-dimension");
      }
    }
  }
  for (const auto& [axis, subs] : v.axes) {
    if (!rubric_schema().count(axis)) r.add("rubric." + axis + ": unknown axis");
  }
  return r;
}

ValidationReport validate(const TransferReport& v, const GridLayout& layout) {
  ValidationReport r;
  check_score(r, "transfer_report.grid_plan", v.grid_plan, 1, 10);
  check_score(r, "transfer_report.narrative_logic", v.narrative_logic, 1, 10);
  check_score(r, "transfer_report.product_fit", v.product_fit, 1, 10);
  check_panel_coverage(r, layout, keys_of(v.per_position), "transfer_report.per_position");
  return r;
}

// ---------------------------------------------------------------------------
// Serialization and parse chains

std::string serialize_canonical(const json& j) { return j.dump(2) + "\n"; }

std::string serialize(const ProductNarrativeFramework& v) { return serialize_canonical(to_json(v)); }
std::string serialize(const PhotographicPlan& v) { return serialize_canonical(to_json(v)); }
std::string serialize(const PromptSet& v) { return serialize_canonical(to_json(v)); }
std::string serialize(const TransferDirections& v) { return serialize_canonical(to_json(v)); }
std::string serialize(const CritiqueReport& v) { return serialize_canonical(to_json(v)); }
std::string serialize(const PipelineState& v) { return serialize_canonical(to_json(v)); }
std::string serialize(const RubricScores& v) { return serialize_canonical(to_json(v)); }
std::string serialize(const TransferReport& v) { return serialize_canonical(to_json(v)); }

json parse_json_text(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ParseError("not valid JSON");
  return j;
}

namespace {
void check_or_throw(const ValidationReport& report, const char* what) {
  if (!report.ok()) {
    throw SchemaError(std::string(what) + ": " + report.joined(), report.violations);
  }
}
}  // namespace

ProductNarrativeFramework parse_framework(const std::string& text) {
  auto v = framework_from_json(parse_json_text(text));
  check_or_throw(validate(v), "framework");
  return v;
}

PhotographicPlan parse_plan(const std::string& text) {
  auto v = plan_from_json(parse_json_text(text));
  check_or_throw(validate(v), "plan");
  return v;
}

PromptSet parse_prompt_set(const std::string& text) {
  auto v = prompt_set_from_json(parse_json_text(text));
  check_or_throw(validate(v), "prompt_set");
  return v;
}

TransferDirections parse_transfer(const std::string& text, const GridLayout& layout) {
  auto v = transfer_from_json(parse_json_text(text));
  check_or_throw(validate(v, layout), "transfer");
  return v;
}

CritiqueReport parse_critique(const std::string& text, const GridLayout& layout) {
  auto v = critique_from_json(parse_json_text(text));
  check_or_throw(validate(v, layout), "critique");
  return v;
}

PipelineState parse_state(const std::string& text) {
  auto v = state_from_json(parse_json_text(text));
  check_or_throw(validate(v), "state");
  return v;
}

RubricScores parse_rubric(const std::string& text) {
  auto v = rubric_from_json(parse_json_text(text));
  check_or_throw(validate(v), "rubric");
  return v;
}

TransferReport parse_transfer_report(const std::string& text, const GridLayout& layout) {
  auto v = transfer_report_from_json(parse_json_text(text));
  check_or_throw(validate(v, layout), "transfer_report");
  return v;
}

}  // namespace collage::model
