#include "collage/pipeline.hpp"

#include <unistd.h>

#include <chrono>

#include "collage/errors.hpp"
#include "collage/util.hpp"

namespace collage::pipeline {

using model::json;

// ---------------------------------------------------------------------------
// Trace serialization

json to_json(const TraceEvent& event) {
  return json{{"seq", event.seq},
              {"timestamp_ms", event.timestamp_ms},
              {"kind", event.kind},
              {"iteration", event.iteration},
              {"detail", event.detail}};
}

json to_json(const RunTrace& trace) {
  json events = json::array();
  for (const auto& event : trace.events) events.push_back(to_json(event));
  return json{{"events", events}};
}

TraceEvent trace_event_from_json(const json& j) {
  if (!j.is_object() || !j.contains("seq") || !j.contains("kind") || !j.contains("detail")) {
    throw CorruptRun("trace event is malformed");
  }
  TraceEvent event;
  event.seq = j["seq"].get<int>();
  event.timestamp_ms = j.value("timestamp_ms", 0LL);
  event.kind = j["kind"].get<std::string>();
  event.iteration = j.value("iteration", -1);
  event.detail = j["detail"];
  return event;
}

RunTrace trace_from_json(const json& j) {
  if (!j.is_object() || !j.contains("events") || !j["events"].is_array()) {
    throw CorruptRun("trace document has no events array");
  }
  RunTrace trace;
  for (const auto& entry : j["events"]) trace.events.push_back(trace_event_from_json(entry));
  for (std::size_t i = 0; i < trace.events.size(); ++i) {
    if (trace.events[i].seq != static_cast<int>(i)) {
      throw CorruptRun("trace events are not contiguous");
    }
  }
  return trace;
}

std::string serialize(const RunTrace& trace) { return model::serialize_canonical(to_json(trace)); }

RunTrace parse_trace(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw CorruptRun("trace.json is not valid JSON");
  return trace_from_json(j);
}

// ---------------------------------------------------------------------------
// Lock

namespace {

bool pid_is_alive(long pid) {
  std::error_code ec;
  return std::filesystem::exists("/proc/" + std::to_string(pid), ec);
}

}  // namespace

RunLock::RunLock(const std::filesystem::path& run_dir) : path_(run_dir / ".run.lock") {
  std::error_code ec;
  std::filesystem::create_directories(run_dir, ec);
  if (std::filesystem::exists(path_)) {
    long holder = 0;
    try {
      holder = std::stol(util::trim(util::read_text_file(path_)));
    } catch (const std::exception&) {
      holder = 0;
    }
    if (holder > 0 && holder != static_cast<long>(::getpid()) && pid_is_alive(holder)) {
      throw IoError("run directory is locked by running process " + std::to_string(holder));
    }
    // Stale lock from a dead process; take it over.
  }
  util::atomic_write_file(path_, std::to_string(::getpid()) + "\n");
}

RunLock::~RunLock() {
  std::error_code ec;
  std::filesystem::remove(path_, ec);
}

// ---------------------------------------------------------------------------
// Persistence helpers

void persist_state(const model::PipelineState& state, const RunTrace& trace,
                   const std::filesystem::path& run_dir) {
  util::atomic_write_file(run_dir / "state.json", model::serialize(state));
  util::atomic_write_file(run_dir / "trace.json", serialize(trace));
}

model::PipelineState load_state(const std::filesystem::path& run_dir) {
  return model::parse_state(util::read_text_file(run_dir / "state.json"));
}

ProductInput load_input(const std::filesystem::path& run_dir) {
  json meta;
  try {
    meta = model::parse_json_text(util::read_text_file(run_dir / "input.json"));
  } catch (const Error& e) {
    throw CorruptRun(std::string("cannot load input.json: ") + e.what());
  }
  ProductInput input;
  input.name = meta.value("name", "");
  input.user_intent = meta.value("user_intent", "");
  try {
    input.packshot = load_image(run_dir / "packshot.png");
  } catch (const Error& e) {
    throw CorruptRun(std::string("cannot load packshot.png: ") + e.what());
  }
  if (meta.contains("reference_digest")) {
    try {
      input.reference = load_image(run_dir / "reference.png");
    } catch (const Error& e) {
      throw CorruptRun(std::string("cannot load reference.png: ") + e.what());
    }
  }
  if (meta.value("packshot_digest", "") != image_digest(input.packshot)) {
    throw CorruptRun("packshot.png does not match the recorded digest");
  }
  if (input.reference &&
      meta.value("reference_digest", "") != image_digest(*input.reference)) {
    throw CorruptRun("reference.png does not match the recorded digest");
  }
  return input;
}

std::string choose_final_collage(const model::PipelineState& state, model::ReturnPolicy policy) {
  auto name_of = [](int i) { return "collage_iter" + std::to_string(i) + ".png"; };
  if (policy == model::ReturnPolicy::last) return name_of(state.iteration);
  int best = state.iteration;
  // (passed, photography mean, recency), lexicographic.
  bool best_pass = false;
  double best_mean = -1.0;
  for (int i = 0; i <= state.iteration; ++i) {
    bool pass = false;
    double mean = -1.0;
    if (i < static_cast<int>(state.critiques.size())) {
      const model::CritiqueReport& report = state.critiques[i];
      pass = model::overall_pass(report);
      if (report.photography) mean = model::mean_score(*report.photography);
    }
    if (i == 0 || std::tie(pass, mean, i) >= std::tie(best_pass, best_mean, best)) {
      best_pass = pass;
      best_mean = mean;
      best = i;
    }
  }
  return name_of(best);
}

// ---------------------------------------------------------------------------
// Engine

namespace {

std::string layout_spec_of(const model::GridLayout& layout) {
  return std::to_string(layout.rows) + "x" + std::to_string(layout.cols);
}

std::string iter_name(const char* stem, int iteration, const char* ext) {
  return std::string(stem) + "_iter" + std::to_string(iteration) + ext;
}

}  // namespace

struct Pipeline::Engine {
  enum class Step { transfer, stage1, stage2, stage3, generate, critique, decide, stop, done };

  Pipeline& p;
  ProductInput input;
  model::RunMode mode = model::RunMode::creation;
  RunTrace trace;

  Step step = Step::stage1;
  int iteration = 0;
  std::optional<model::TransferDirections> transfer;
  std::optional<model::ProductNarrativeFramework> framework;
  std::optional<model::ProductNarrativeFramework> prior_framework;
  std::optional<model::PhotographicPlan> plan;
  std::optional<model::PromptSet> prompt_set;
  std::optional<std::filesystem::path> collage_path;
  std::vector<model::CritiqueReport> critiques;
  std::optional<model::Suggestion> pending_revision;
  std::optional<model::Suggestion> pending_refinement;
  model::StopReason reason = model::StopReason::fatal_error;

  Engine(Pipeline& pipeline, ProductInput in, model::RunMode m)
      : p(pipeline), input(std::move(in)), mode(m) {}

  const std::filesystem::path& run_dir() const { return p.config_.run_dir; }

  long long now_ms() {
    if (p.config_.deterministic_clock) return static_cast<long long>(trace.events.size());
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
  }

  void append_event(const std::string& kind, int event_iteration, json detail) {
    if (p.chat_spy_ != nullptr || p.image_spy_ != nullptr) {
      json calls = json::array();
      if (p.chat_spy_ != nullptr) {
        for (const auto& record : p.chat_spy_->drain_records()) {
          calls.push_back({{"kind", record.kind},
                           {"request", record.request_digest},
                           {"response", record.response_digest}});
        }
      }
      if (p.image_spy_ != nullptr) {
        for (const auto& record : p.image_spy_->drain_records()) {
          calls.push_back({{"kind", record.kind},
                           {"request", record.request_digest},
                           {"response", record.response_digest}});
        }
      }
      if (!calls.empty()) detail["calls"] = calls;
    }
    TraceEvent event;
    event.seq = static_cast<int>(trace.events.size());
    event.timestamp_ms = now_ms();
    event.kind = kind;
    event.iteration = event_iteration;
    event.detail = std::move(detail);
    trace.events.push_back(std::move(event));
    util::atomic_write_file(run_dir() / "trace.json", serialize(trace));
  }

  // Writes a canonical document, returns its digest.
  std::string write_doc(const std::string& name, const std::string& content) {
    util::atomic_write_file(run_dir() / name, content);
    return util::sha256_hex(content);
  }

  void persist_input() {
    save_png_atomic(input.packshot, run_dir() / "packshot.png");
    if (input.reference) save_png_atomic(*input.reference, run_dir() / "reference.png");
    util::atomic_write_file(run_dir() / "input.json",
                            model::serialize_canonical(input_meta_json(input, mode)));
  }

  json run_config_json() const {
    return json{{"mode", model::to_string(mode)},
                {"layout", layout_spec_of(p.config_.layout)},
                {"max_iterations", p.config_.max_iterations},
                {"gates", model::to_json(p.config_.gates)},
                {"return_policy", model::to_string(p.config_.return_policy)},
                {"name", input.name},
                {"packshot_digest", image_digest(input.packshot)},
                {"reference_digest",
                 input.reference ? json(image_digest(*input.reference)) : json(nullptr)}};
  }

  void do_transfer() {
    model::TransferDirections directions =
        p.reference_.extract_transfer_plan(*input.reference, p.config_.layout, input);
    std::string digest = write_doc("transfer.json", model::serialize(directions));
    transfer = std::move(directions);
    append_event("transfer", -1, json{{"artifact", "transfer.json"}, {"digest", digest}});
    step = Step::stage1;
  }

  void do_stage1() {
    bool revising = pending_revision.has_value();
    framework = p.ideation_.plan_what(input, transfer, pending_revision, prior_framework);
    std::string name = iter_name("framework", iteration, ".json");
    std::string digest = write_doc(name, model::serialize(*framework));
    append_event("stage1", iteration,
                 json{{"artifact", name}, {"digest", digest}, {"revision", revising}});
    pending_revision.reset();
    prior_framework.reset();
    step = Step::stage2;
  }

  void do_stage2() {
    bool refining = pending_refinement.has_value();
    plan = p.ideation_.plan_how(input, *framework, p.config_.layout, transfer, pending_refinement);
    std::string name = iter_name("plan", iteration, ".json");
    std::string digest = write_doc(name, model::serialize(*plan));
    append_event("stage2", iteration,
                 json{{"artifact", name}, {"digest", digest}, {"refinement", refining}});
    pending_refinement.reset();
    step = Step::stage3;
  }

  void do_stage3() {
    prompt_set = p.generation_.compile_prompts(*plan, *framework, input);
    std::string name = iter_name("prompts", iteration, ".json");
    std::string digest = write_doc(name, model::serialize(*prompt_set));
    append_event("stage3", iteration, json{{"artifact", name}, {"digest", digest}});
    step = Step::generate;
  }

  void do_generate() {
    collage_path = p.generation_.synthesize_collage(*prompt_set, input, p.config_.layout,
                                                    iteration, run_dir());
    std::string name = collage_path->filename().string();
    std::string digest = util::sha256_hex(util::read_binary_file(*collage_path));
    append_event("generate", iteration,
                 json{{"artifact", name},
                      {"digest", digest},
                      {"resized", p.generation_.last_generation_resized()}});
    step = Step::critique;
  }

  void do_critique() {
    if (iteration >= p.config_.max_iterations) {
      reason = model::StopReason::budget_exhausted;
      step = Step::stop;
      return;
    }
    Image collage = load_image(*collage_path);
    model::CritiqueReport report =
        p.critique_.critique(collage, input, *framework, *plan, p.config_.gates);
    critiques.push_back(report);
    std::string name = iter_name("critique", iteration, ".json");
    std::string digest = write_doc(name, model::serialize(report));
    append_event("gate1", iteration,
                 json{{"artifact", name},
                      {"digest", digest},
                      {"pass", report.gate1_pass},
                      {"min", model::min_score(report.narrative)},
                      {"mean", model::mean_score(report.narrative)}});
    if (report.gate2_pass) {
      append_event("gate2", iteration,
                   json{{"artifact", name},
                        {"digest", digest},
                        {"pass", *report.gate2_pass},
                        {"min", model::min_score(*report.photography)},
                        {"mean", model::mean_score(*report.photography)}});
    }
    step = Step::decide;
  }

  void do_decide() {
    const model::CritiqueReport& report = critiques.back();
    if (model::overall_pass(report)) {
      reason = model::StopReason::gates_passed;
      step = Step::stop;
      return;
    }
    if (!report.gate1_pass) {
      append_event("revision", iteration + 1,
                   json{{"where", report.suggestion->where}, {"gate", "narrative"}});
      pending_revision = report.suggestion;
      prior_framework = framework;
      framework.reset();
      plan.reset();
      prompt_set.reset();
      collage_path.reset();
      ++iteration;
      step = Step::stage1;
      return;
    }
    // Photography failed: the framework is carried over bit for bit.
    std::string prior_name = iter_name("framework", iteration, ".json");
    std::string next_name = iter_name("framework", iteration + 1, ".json");
    std::string bytes = util::read_text_file(run_dir() / prior_name);
    std::string digest = write_doc(next_name, bytes);
    append_event("refinement", iteration + 1,
                 json{{"artifact", next_name},
                      {"digest", digest},
                      {"where", report.suggestion->where},
                      {"gate", "photography"}});
    pending_refinement = report.suggestion;
    plan.reset();
    prompt_set.reset();
    collage_path.reset();
    ++iteration;
    step = Step::stage2;
  }

  RunResult do_stop() {
    model::PipelineState state;
    state.iteration = iteration;
    state.mode = mode;
    state.framework = framework;
    state.plan = plan;
    state.prompt_set = prompt_set;
    if (collage_path) state.collage_path = collage_path->filename().string();
    state.critiques = critiques;
    state.transfer = transfer;
    state.stop_reason = reason;
    state.final_collage = choose_final_collage(state, p.config_.return_policy);
    util::atomic_write_file(run_dir() / "state.json", model::serialize(state));
    json detail{{"reason", model::to_string(reason)},
                {"final_collage", *state.final_collage},
                {"return_policy", model::to_string(p.config_.return_policy)}};
    if (p.chat_spy_ != nullptr) detail["chat_calls"] = p.chat_spy_->calls();
    if (p.image_spy_ != nullptr) detail["image_calls"] = p.image_spy_->calls();
    append_event("stop", -1, std::move(detail));
    RunResult result;
    result.final_collage = run_dir() / *state.final_collage;
    result.state = std::move(state);
    result.trace = trace;
    result.stop_reason = reason;
    return result;
  }

  RunResult loop() {
    while (true) {
      switch (step) {
        case Step::transfer: do_transfer(); break;
        case Step::stage1: do_stage1(); break;
        case Step::stage2: do_stage2(); break;
        case Step::stage3: do_stage3(); break;
        case Step::generate: do_generate(); break;
        case Step::critique: do_critique(); break;
        case Step::decide: do_decide(); break;
        case Step::stop: return do_stop();
        case Step::done: throw CorruptRun("run already finished");
      }
    }
  }
};

// ---------------------------------------------------------------------------
// Pipeline

Pipeline::Pipeline(agents::IdeationAgent& ideation, agents::ReferenceAgent& reference,
                   agents::GenerationAgent& generation, agents::CritiqueAgent& critique,
                   PipelineConfig config)
    : ideation_(ideation),
      reference_(reference),
      generation_(generation),
      critique_(critique),
      config_(std::move(config)) {
  if (config_.max_iterations < 1) {
    throw PreconditionError("the pipeline needs at least one iteration");
  }
  if (!model::validate(config_.layout).ok()) {
    throw PreconditionError("the pipeline needs a valid layout");
  }
  if (!model::validate(config_.gates).ok()) {
    throw PreconditionError("the pipeline needs valid gate thresholds");
  }
  if (config_.run_dir.empty()) {
    throw PreconditionError("the pipeline needs a run directory");
  }
}

void Pipeline::set_call_spies(providers::CountingChatProvider* chat,
                              providers::CountingImageProvider* image) {
  chat_spy_ = chat;
  image_spy_ = image;
}

RunResult Pipeline::run(const ProductInput& input, model::RunMode mode) {
  check_product_input(input);
  if (mode == model::RunMode::reference && !input.reference) {
    throw PreconditionError("reference mode needs a reference image");
  }
  if (std::filesystem::exists(config_.run_dir / "trace.json")) {
    throw IoError("run directory already holds a run; resume it or pick a fresh directory");
  }
  RunLock lock(config_.run_dir);
  Engine engine(*this, input, mode);
  engine.persist_input();
  engine.append_event("run_started", -1, engine.run_config_json());
  engine.step = mode == model::RunMode::reference ? Engine::Step::transfer : Engine::Step::stage1;
  return engine.loop();
}

RunResult Pipeline::resume() {
  std::filesystem::path trace_path = config_.run_dir / "trace.json";
  if (!std::filesystem::exists(trace_path)) {
    throw CorruptRun("nothing to resume: no trace.json in " + config_.run_dir.string());
  }
  RunLock lock(config_.run_dir);
  RunTrace trace = parse_trace(util::read_text_file(trace_path));
  if (trace.events.empty() || trace.events.front().kind != "run_started") {
    throw CorruptRun("trace does not begin with run_started");
  }
  const json& started = trace.events.front().detail;

  auto mode = model::run_mode_from_string(started.value("mode", ""));
  if (!mode) throw CorruptRun("run_started has no usable mode");
  if (started.value("layout", "") != layout_spec_of(config_.layout)) {
    throw CorruptRun("layout does not match the recorded run");
  }
  if (started.value("max_iterations", -1) != config_.max_iterations) {
    throw CorruptRun("iteration budget does not match the recorded run");
  }
  try {
    model::GateConfig recorded = model::gate_config_from_json(started.at("gates"));
    if (recorded.tau_narrative != config_.gates.tau_narrative ||
        recorded.tau_photography != config_.gates.tau_photography ||
        recorded.rule != config_.gates.rule) {
      throw CorruptRun("gate thresholds do not match the recorded run");
    }
  } catch (const SchemaError&) {
    throw CorruptRun("run_started has no usable gate config");
  } catch (const json::exception&) {
    throw CorruptRun("run_started has no usable gate config");
  }

  ProductInput input = load_input(config_.run_dir);
  if (started.value("packshot_digest", "") != image_digest(input.packshot)) {
    throw CorruptRun("packshot does not match the recorded run");
  }

  // Every artifact an event references must be on disk with matching bytes.
  for (const auto& event : trace.events) {
    if (!event.detail.contains("artifact")) continue;
    std::filesystem::path artifact = config_.run_dir / event.detail["artifact"].get<std::string>();
    if (!std::filesystem::exists(artifact)) {
      throw CorruptRun("missing artifact: " + artifact.filename().string());
    }
    std::string digest = util::sha256_hex(util::read_binary_file(artifact));
    if (digest != event.detail.value("digest", "")) {
      throw CorruptRun("artifact does not match its recorded digest: " +
                       artifact.filename().string());
    }
  }

  Engine engine(*this, std::move(input), *mode);
  engine.trace = trace;

  // Replay the log to find where the run stopped.
  bool awaiting_gate2 = false;
  bool finished = false;
  for (const auto& event : trace.events) {
    if (event.kind == "run_started") {
      engine.step = *mode == model::RunMode::reference ? Engine::Step::transfer
                                                       : Engine::Step::stage1;
      engine.iteration = 0;
    } else if (event.kind == "transfer") {
      engine.transfer = model::parse_transfer(
          util::read_text_file(config_.run_dir / "transfer.json"), config_.layout);
      engine.step = Engine::Step::stage1;
    } else if (event.kind == "stage1") {
      engine.iteration = event.iteration;
      engine.framework = model::parse_framework(util::read_text_file(
          config_.run_dir / iter_name("framework", event.iteration, ".json")));
      engine.pending_revision.reset();
      engine.prior_framework.reset();
      engine.step = Engine::Step::stage2;
    } else if (event.kind == "stage2") {
      engine.plan = model::parse_plan(
          util::read_text_file(config_.run_dir / iter_name("plan", event.iteration, ".json")));
      engine.pending_refinement.reset();
      engine.step = Engine::Step::stage3;
    } else if (event.kind == "stage3") {
      engine.prompt_set = model::parse_prompt_set(
          util::read_text_file(config_.run_dir / iter_name("prompts", event.iteration, ".json")));
      engine.step = Engine::Step::generate;
    } else if (event.kind == "generate") {
      engine.collage_path =
          config_.run_dir / ("collage_iter" + std::to_string(event.iteration) + ".png");
      engine.step = Engine::Step::critique;
    } else if (event.kind == "gate1") {
      engine.critiques.push_back(model::parse_critique(
          util::read_text_file(config_.run_dir / iter_name("critique", event.iteration, ".json")),
          config_.layout));
      awaiting_gate2 = engine.critiques.back().gate1_pass;
      engine.step = Engine::Step::decide;
    } else if (event.kind == "gate2") {
      awaiting_gate2 = false;
      engine.step = Engine::Step::decide;
    } else if (event.kind == "revision") {
      const model::CritiqueReport& report = engine.critiques.back();
      engine.pending_revision = report.suggestion;
      engine.prior_framework = engine.framework;
      engine.framework.reset();
      engine.plan.reset();
      engine.prompt_set.reset();
      engine.collage_path.reset();
      engine.iteration = event.iteration;
      engine.step = Engine::Step::stage1;
    } else if (event.kind == "refinement") {
      const model::CritiqueReport& report = engine.critiques.back();
      engine.pending_refinement = report.suggestion;
      engine.framework = model::parse_framework(util::read_text_file(
          config_.run_dir / iter_name("framework", event.iteration, ".json")));
      engine.plan.reset();
      engine.prompt_set.reset();
      engine.collage_path.reset();
      engine.iteration = event.iteration;
      engine.step = Engine::Step::stage2;
    } else if (event.kind == "stop") {
      finished = true;
    } else {
      throw CorruptRun("unknown trace event kind: " + event.kind);
    }
  }

  if (finished) {
    // The run already completed; hand back what it produced.
    model::PipelineState state = load_state(config_.run_dir);
    if (!state.final_collage) throw CorruptRun("finished run has no final collage");
    RunResult result;
    result.final_collage = config_.run_dir / *state.final_collage;
    result.state = std::move(state);
    result.trace = std::move(trace);
    result.stop_reason = result.state.stop_reason.value_or(model::StopReason::fatal_error);
    return result;
  }

  if (awaiting_gate2) {
    // Crash fell between the two gate events; the critique document already
    // has the verdict, so re-log it rather than re-judging.
    const model::CritiqueReport& report = engine.critiques.back();
    if (!report.gate2_pass || !report.photography) {
      throw CorruptRun("critique document lost its photography verdict");
    }
    std::string name = iter_name("critique", engine.iteration, ".json");
    engine.append_event(
        "gate2", engine.iteration,
        json{{"artifact", name},
             {"digest", util::sha256_hex(util::read_binary_file(config_.run_dir / name))},
             {"pass", *report.gate2_pass},
             {"min", model::min_score(*report.photography)},
             {"mean", model::mean_score(*report.photography)}});
    engine.step = Engine::Step::decide;
  }

  return engine.loop();
}

}  // namespace collage::pipeline
