#pragma once

#include <filesystem>
#include <optional>

#include "collage/critique.hpp"
#include "collage/generation.hpp"
#include "collage/ideation.hpp"
#include "collage/product_input.hpp"
#include "collage/reference.hpp"

namespace collage::pipeline {

// One entry in the append-only run log. Artifact files are always written
// before the event that references them, so a crash leaves at worst an
// artifact nothing points to, never a dangling reference.
struct TraceEvent {
  int seq = 0;
  long long timestamp_ms = 0;
  std::string kind;
  int iteration = -1;  // -1 for run-level events
  model::json detail = model::json::object();
};

struct RunTrace {
  std::vector<TraceEvent> events;

  const TraceEvent* last() const { return events.empty() ? nullptr : &events.back(); }
};

model::json to_json(const TraceEvent& event);
model::json to_json(const RunTrace& trace);
TraceEvent trace_event_from_json(const model::json& j);
RunTrace trace_from_json(const model::json& j);
std::string serialize(const RunTrace& trace);
RunTrace parse_trace(const std::string& text);

struct PipelineConfig {
  int max_iterations = 3;  // how many critique rounds the run may spend
  model::GateConfig gates;
  model::GridLayout layout = model::GridLayout::standard(2, 2);
  model::ReturnPolicy return_policy = model::ReturnPolicy::best;
  std::filesystem::path run_dir;
  // Logical timestamps (0, 1, 2, ...) instead of wall time, so offline runs
  // produce byte-identical traces.
  bool deterministic_clock = false;
};

struct RunResult {
  std::filesystem::path final_collage;
  model::PipelineState state;
  RunTrace trace;
  model::StopReason stop_reason = model::StopReason::fatal_error;
};

// Guards a run directory against concurrent writers. The lock file holds the
// owning pid; a lock whose pid is dead is stale and silently replaced.
class RunLock {
 public:
  explicit RunLock(const std::filesystem::path& run_dir);
  ~RunLock();
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  std::filesystem::path path_;
};

// Writes state.json and trace.json. Paths inside the state must already be
// relative to the run directory.
void persist_state(const model::PipelineState& state, const RunTrace& trace,
                   const std::filesystem::path& run_dir);
model::PipelineState load_state(const std::filesystem::path& run_dir);

// Reconstructs the input a run was started with from its run directory.
ProductInput load_input(const std::filesystem::path& run_dir);

// Picks the collage the run should hand back. "last" takes the newest;
// "best" ranks iterations by (passed both gates, photography mean, recency),
// counting a never-critiqued collage as unscored.
std::string choose_final_collage(const model::PipelineState& state,
                                 model::ReturnPolicy policy);

// The iteration loop: ideate, generate, critique, and loop through revision
// (narrative failed: re-plan WHAT, transfer directions and suggestion in
// hand) or refinement (photography failed: re-plan HOW under the unchanged
// framework) until the gates pass or the budget runs out. Every landmark is
// persisted before it is logged, so an interrupted run resumes exactly where
// it stopped.
class Pipeline {
 public:
  Pipeline(agents::IdeationAgent& ideation, agents::ReferenceAgent& reference,
           agents::GenerationAgent& generation, agents::CritiqueAgent& critique,
           PipelineConfig config);

  // Optional call spies; when set, every trace event carries the request and
  // response digests of the model calls it covers.
  void set_call_spies(providers::CountingChatProvider* chat,
                      providers::CountingImageProvider* image);

  RunResult run(const ProductInput& input, model::RunMode mode);

  // Continues an interrupted run in config.run_dir. Throws CorruptRun if the
  // directory's artifacts and trace disagree with each other or the config.
  RunResult resume();

 private:
  struct Engine;
  agents::IdeationAgent& ideation_;
  agents::ReferenceAgent& reference_;
  agents::GenerationAgent& generation_;
  agents::CritiqueAgent& critique_;
  PipelineConfig config_;
  providers::CountingChatProvider* chat_spy_ = nullptr;
  providers::CountingImageProvider* image_spy_ = nullptr;
};

}  // namespace collage::pipeline
