#include <cctype>
#include <cstdio>
#include <iostream>
#include <memory>

#include "CLI11.hpp"
#include "collage/config.hpp"
#include "collage/errors.hpp"
#include "collage/metrics.hpp"
#include "collage/pipeline.hpp"
#include "collage/providers_mock.hpp"
#include "collage/util.hpp"

#ifndef COLLAGE_PROMPTS_DIR
#define COLLAGE_PROMPTS_DIR "prompts"
#endif
#ifndef COLLAGE_FIXTURES_DIR
#define COLLAGE_FIXTURES_DIR "fixtures"
#endif

namespace {

using namespace collage;

// Flag or config problems; anything the user must fix before a run can start.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GlobalFlags {
  std::string config_path;
  bool mock = false;
  std::string prompts_dir = COLLAGE_PROMPTS_DIR;
  std::string fixtures_dir = COLLAGE_FIXTURES_DIR;
  std::string run_dir;
  int max_iter = 0;  // 0 = not given
  int tau_narr = -1;
  int tau_photo = -1;
  std::string layout;
  std::string return_policy;
};

void add_global_flags(CLI::App* cmd, GlobalFlags& flags) {
  cmd->add_option("--config", flags.config_path, "Config file (INI)");
  cmd->add_flag("--mock", flags.mock, "Use the deterministic offline providers");
  cmd->add_option("--prompts", flags.prompts_dir, "Prompt template directory");
  cmd->add_option("--fixtures", flags.fixtures_dir, "Mock fixture directory");
  cmd->add_option("--run-dir", flags.run_dir, "Run directory");
  cmd->add_option("--max-iter", flags.max_iter, "Critique budget K")->check(CLI::Range(1, 25));
  cmd->add_option("--tau-narr", flags.tau_narr, "Narrative gate threshold")
      ->check(CLI::Range(0, 5));
  cmd->add_option("--tau-photo", flags.tau_photo, "Photography gate threshold")
      ->check(CLI::Range(0, 5));
  cmd->add_option("--layout", flags.layout, "Grid layout, e.g. 2x2");
  cmd->add_option("--return-policy", flags.return_policy, "Which collage to return")
      ->check(CLI::IsMember({"last", "best"}));
}

AppConfig resolve_config(const GlobalFlags& flags) {
  AppConfig config;
  if (!flags.config_path.empty()) {
    try {
      apply_config_file(config, flags.config_path);
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
  }
  apply_env_credentials(config);
  if (flags.max_iter > 0) config.max_iterations = flags.max_iter;
  if (flags.tau_narr >= 0) config.gates.tau_narrative = flags.tau_narr;
  if (flags.tau_photo >= 0) config.gates.tau_photography = flags.tau_photo;
  if (!flags.layout.empty()) {
    auto layout = model::GridLayout::parse_spec(flags.layout);
    if (!layout) throw UsageError("--layout must look like 2x2, got \"" + flags.layout + "\"");
    config.layout = *layout;
  }
  if (!flags.return_policy.empty()) {
    config.return_policy = *model::return_policy_from_string(flags.return_policy);
  }
  if (!flags.run_dir.empty()) config.run_dir = flags.run_dir;
  return config;
}

// Which provider endpoints a subcommand actually calls; unused ones are
// neither validated nor constructed, so `cka` needs no chat config.
struct ProviderNeeds {
  bool chat = true;
  bool image = true;
  bool embed = true;
};

// Owns whichever provider stack the flags selected and exposes the
// instrumented views the pipeline and metrics consume.
struct ProviderBundle {
  std::unique_ptr<providers::HttpTransport> transport;
  std::unique_ptr<providers::ChatProvider> chat_impl;
  std::unique_ptr<providers::ImageGenProvider> image_impl;
  std::unique_ptr<providers::EmbedProvider> embed_impl;
  std::unique_ptr<providers::ConformingImageProvider> conforming;
  std::unique_ptr<providers::CountingChatProvider> chat_spy;
  std::unique_ptr<providers::CountingImageProvider> image_spy;
  std::unique_ptr<providers::CachingEmbedProvider> caching;

  providers::ChatProvider& chat() { return *chat_spy; }
  providers::ImageGenProvider& image() { return *image_spy; }
  providers::EmbedProvider& embed() { return *caching; }
};

ProviderBundle build_providers(const AppConfig& config, const GlobalFlags& flags,
                               ProviderNeeds needs = {}) {
  ProviderBundle bundle;
  if (flags.mock) {
    if (needs.chat) bundle.chat_impl = std::make_unique<providers::MockChatProvider>(flags.fixtures_dir);
    if (needs.image) bundle.image_impl = std::make_unique<providers::MockImageProvider>();
    if (needs.embed) bundle.embed_impl = std::make_unique<providers::MockEmbedProvider>();
  } else {
    auto require = [](const providers::EndpointConfig& endpoint, const char* which,
                      const char* env_var) {
      if (endpoint.url.empty()) {
        throw UsageError(std::string("no [") + which +
                         "] url configured; pass --config or use --mock");
      }
      if (endpoint.api_key.empty()) {
        throw UsageError(std::string(env_var) + " is not set");
      }
    };
    bundle.transport = std::make_unique<providers::TlsTransport>();
    if (needs.chat) {
      require(config.chat, "chat", "COLLAGE_CHAT_API_KEY");
      bundle.chat_impl = std::make_unique<providers::HttpChatProvider>(
          config.chat, *bundle.transport, providers::RetryPolicy{});
    }
    if (needs.image) {
      require(config.image, "image", "COLLAGE_IMAGE_API_KEY");
      bundle.image_impl = std::make_unique<providers::HttpImageGenProvider>(
          config.image, *bundle.transport, providers::RetryPolicy{});
    }
    if (needs.embed) {
      require(config.embed, "embed", "COLLAGE_EMBED_API_KEY");
      bundle.embed_impl = std::make_unique<providers::HttpEmbedProvider>(
          config.embed, config.embed_dimension, *bundle.transport, providers::RetryPolicy{});
    }
  }
  if (bundle.chat_impl) {
    bundle.chat_spy = std::make_unique<providers::CountingChatProvider>(*bundle.chat_impl);
  }
  if (bundle.image_impl) {
    bundle.conforming = std::make_unique<providers::ConformingImageProvider>(*bundle.image_impl);
    bundle.image_spy = std::make_unique<providers::CountingImageProvider>(*bundle.conforming);
  }
  if (bundle.embed_impl) {
    bundle.caching = std::make_unique<providers::CachingEmbedProvider>(*bundle.embed_impl);
  }
  return bundle;
}

Image load_input_image(const std::string& path, const char* what) {
  try {
    return load_image(path);
  } catch (const DecodeError& e) {
    throw DecodeError(std::string("corrupt input (") + what + "): " + e.what());
  }
}

std::string slug_of(const std::string& name) {
  std::string out;
  for (char c : name) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    } else if (!out.empty() && out.back() != '-') {
      out += '-';
    }
  }
  while (!out.empty() && out.back() == '-') out.pop_back();
  return out.empty() ? "collage" : out;
}

void print_result(const pipeline::RunResult& result) {
  std::cout << "stop reason: " << model::to_string(result.stop_reason) << "\n";
  std::cout << "iterations: " << result.state.iteration + 1 << "\n";
  std::cout << "final collage: " << result.final_collage.string() << "\n";
}

int run_pipeline_command(const GlobalFlags& flags, const std::string& packshot_path,
                         const std::string& name, const std::string& intent,
                         const std::string& reference_path, model::RunMode mode) {
  AppConfig config = resolve_config(flags);
  if (config.run_dir.empty()) config.run_dir = "runs/" + slug_of(name);

  ProductInput input;
  input.name = name;
  input.user_intent = intent;
  input.packshot = load_input_image(packshot_path, "packshot");
  if (!reference_path.empty()) {
    input.reference = load_input_image(reference_path, "reference");
  }

  PromptStore prompts(flags.prompts_dir);
  ProviderBundle bundle = build_providers(config, flags, {true, true, false});
  agents::IdeationAgent ideation(bundle.chat(), prompts);
  agents::ReferenceAgent reference(bundle.chat(), prompts);
  agents::GenerationAgent generation(bundle.chat(), bundle.image(), prompts);
  agents::CritiqueAgent critique(bundle.chat(), prompts);

  pipeline::PipelineConfig pipe_config;
  pipe_config.max_iterations = config.max_iterations;
  pipe_config.gates = config.gates;
  pipe_config.layout = config.layout;
  pipe_config.return_policy = config.return_policy;
  pipe_config.run_dir = config.run_dir;
  pipe_config.deterministic_clock = flags.mock;

  pipeline::Pipeline pipe(ideation, reference, generation, critique, pipe_config);
  pipe.set_call_spies(bundle.chat_spy.get(), bundle.image_spy.get());
  pipeline::RunResult result = pipe.run(input, mode);
  print_result(result);
  return 0;
}

int run_resume_command(const GlobalFlags& flags) {
  if (flags.run_dir.empty()) throw UsageError("resume needs --run-dir");
  AppConfig config = resolve_config(flags);
  config.run_dir = flags.run_dir;

  // Adopt the knobs the run was started with; resume() re-checks them.
  std::filesystem::path trace_path = std::filesystem::path(config.run_dir) / "trace.json";
  if (!std::filesystem::exists(trace_path)) {
    throw UsageError("no trace.json under " + config.run_dir);
  }
  pipeline::RunTrace trace = pipeline::parse_trace(util::read_text_file(trace_path));
  if (trace.events.empty() || trace.events.front().kind != "run_started") {
    throw CorruptRun("trace does not begin with run_started");
  }
  const model::json& started = trace.events.front().detail;
  if (auto layout = model::GridLayout::parse_spec(started.value("layout", ""))) {
    config.layout = *layout;
  }
  config.max_iterations = started.value("max_iterations", config.max_iterations);
  if (started.contains("gates")) {
    config.gates = model::gate_config_from_json(started["gates"]);
  }
  if (auto policy = model::return_policy_from_string(started.value("return_policy", ""))) {
    config.return_policy = *policy;
  }

  PromptStore prompts(flags.prompts_dir);
  ProviderBundle bundle = build_providers(config, flags, {true, true, false});
  agents::IdeationAgent ideation(bundle.chat(), prompts);
  agents::ReferenceAgent reference(bundle.chat(), prompts);
  agents::GenerationAgent generation(bundle.chat(), bundle.image(), prompts);
  agents::CritiqueAgent critique(bundle.chat(), prompts);

  pipeline::PipelineConfig pipe_config;
  pipe_config.max_iterations = config.max_iterations;
  pipe_config.gates = config.gates;
  pipe_config.layout = config.layout;
  pipe_config.return_policy = config.return_policy;
  pipe_config.run_dir = config.run_dir;
  pipe_config.deterministic_clock = flags.mock;

  pipeline::Pipeline pipe(ideation, reference, generation, critique, pipe_config);
  pipe.set_call_spies(bundle.chat_spy.get(), bundle.image_spy.get());
  pipeline::RunResult result = pipe.resume();
  print_result(result);
  return 0;
}

int run_evaluate_command(const GlobalFlags& flags, const std::string& manifest_path,
                         const std::string& out_dir, int workers) {
  AppConfig config = resolve_config(flags);
  metrics::Manifest manifest;
  try {
    manifest = metrics::load_manifest(manifest_path);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  std::filesystem::path out = out_dir.empty()
                                  ? std::filesystem::path(manifest_path).parent_path()
                                  : std::filesystem::path(out_dir);

  PromptStore prompts(flags.prompts_dir);
  ProviderBundle bundle = build_providers(config, flags, {true, false, true});
  metrics::EvalOptions options;
  options.workers = workers;
  std::vector<metrics::EvalRow> rows =
      metrics::batch_evaluate(manifest, bundle.chat(), bundle.embed(), prompts, options);
  bool ok = metrics::write_results(rows, out);
  int failed = 0;
  for (const metrics::EvalRow& row : rows) {
    if (row.error) {
      ++failed;
      std::cerr << "item " << row.item << ": " << *row.error << "\n";
    }
  }
  std::cout << "evaluated " << rows.size() << " items (" << failed << " failed)\n";
  std::cout << "results: " << (out / "results.csv").string() << "\n";
  return ok ? 0 : 3;
}

int run_cka_command(const GlobalFlags& flags, const std::string& reference_path,
                    const std::string& generated_path, const std::string& ref_layout_spec,
                    const std::string& gen_layout_spec, const std::string& dump_dir) {
  AppConfig config = resolve_config(flags);
  std::string ref_spec = ref_layout_spec.empty()
                             ? (flags.layout.empty() ? "2x2" : flags.layout)
                             : ref_layout_spec;
  std::string gen_spec = gen_layout_spec.empty()
                             ? (flags.layout.empty() ? "2x2" : flags.layout)
                             : gen_layout_spec;
  auto ref_layout = model::GridLayout::parse_spec(ref_spec);
  auto gen_layout = model::GridLayout::parse_spec(gen_spec);
  if (!ref_layout || !gen_layout) throw UsageError("layouts must look like 2x2");
  if (ref_layout->panel_count() != gen_layout->panel_count()) {
    throw UsageError("grids disagree on panel count: " + ref_spec + " vs " + gen_spec);
  }

  Image reference = load_input_image(reference_path, "reference grid");
  Image generated = load_input_image(generated_path, "generated grid");
  ProviderBundle bundle = build_providers(config, flags, {false, false, true});
  metrics::RelationMatrix r_ref =
      metrics::relation_matrix(metrics::split_grid(reference, *ref_layout), bundle.embed());
  metrics::RelationMatrix r_gen =
      metrics::relation_matrix(metrics::split_grid(generated, *gen_layout), bundle.embed());
  double value = metrics::cka(r_ref, r_gen);
  if (!dump_dir.empty()) {
    std::filesystem::path dir(dump_dir);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    util::atomic_write_file(dir / "reference_relation.json",
                            model::serialize_canonical(metrics::to_json(r_ref)));
    util::atomic_write_file(dir / "generated_relation.json",
                            model::serialize_canonical(metrics::to_json(r_gen)));
  }
  std::printf("%.6f\n", value);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Narrative product grid collages: plan, generate, critique, evaluate"};
  app.require_subcommand(1);

  GlobalFlags create_flags;
  std::string create_packshot;
  std::string create_name;
  std::string create_intent;
  CLI::App* create = app.add_subcommand("create", "Plan and generate a collage from a packshot");
  add_global_flags(create, create_flags);
  create->add_option("--packshot", create_packshot, "Product packshot image")->required();
  create->add_option("--name", create_name, "Product name")->required();
  create->add_option("--intent", create_intent, "What the user wants the collage to express");

  GlobalFlags reference_flags;
  std::string ref_packshot;
  std::string ref_name;
  std::string ref_intent;
  std::string ref_reference;
  CLI::App* reference =
      app.add_subcommand("reference", "Re-instantiate a reference collage for a new product");
  add_global_flags(reference, reference_flags);
  reference->add_option("--packshot", ref_packshot, "Product packshot image")->required();
  reference->add_option("--name", ref_name, "Product name")->required();
  reference->add_option("--intent", ref_intent, "What the user wants the collage to express");
  reference->add_option("--reference", ref_reference, "Reference collage to transfer")->required();

  GlobalFlags resume_flags;
  CLI::App* resume = app.add_subcommand("resume", "Continue an interrupted run");
  add_global_flags(resume, resume_flags);

  GlobalFlags eval_flags;
  std::string eval_manifest;
  std::string eval_out;
  int eval_workers = 4;
  CLI::App* evaluate = app.add_subcommand("evaluate", "Score a manifest of finished collages");
  add_global_flags(evaluate, eval_flags);
  evaluate->add_option("--manifest", eval_manifest, "Evaluation manifest (JSON)")->required();
  evaluate->add_option("--out", eval_out, "Output directory for results tables");
  evaluate->add_option("--workers", eval_workers, "Parallel items")->check(CLI::Range(1, 64));

  GlobalFlags cka_flags;
  std::string cka_reference;
  std::string cka_generated;
  std::string cka_ref_layout;
  std::string cka_gen_layout;
  std::string cka_dump;
  CLI::App* cka_cmd = app.add_subcommand("cka", "Structural similarity between two grids");
  add_global_flags(cka_cmd, cka_flags);
  cka_cmd->add_option("--reference-grid", cka_reference, "Reference grid image")->required();
  cka_cmd->add_option("--generated-grid", cka_generated, "Generated grid image")->required();
  cka_cmd->add_option("--reference-layout", cka_ref_layout, "Reference grid layout");
  cka_cmd->add_option("--generated-layout", cka_gen_layout, "Generated grid layout");
  cka_cmd->add_option("--dump-matrices", cka_dump, "Directory for the two relation matrices");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (create->parsed()) {
      return run_pipeline_command(create_flags, create_packshot, create_name, create_intent, "",
                                  model::RunMode::creation);
    }
    if (reference->parsed()) {
      return run_pipeline_command(reference_flags, ref_packshot, ref_name, ref_intent,
                                  ref_reference, model::RunMode::reference);
    }
    if (resume->parsed()) return run_resume_command(resume_flags);
    if (evaluate->parsed()) {
      return run_evaluate_command(eval_flags, eval_manifest, eval_out, eval_workers);
    }
    if (cka_cmd->parsed()) {
      return run_cka_command(cka_flags, cka_reference, cka_generated, cka_ref_layout,
                             cka_gen_layout, cka_dump);
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
