// Operator CLI: generate worlds, run episode batches, evaluate traces,
// classify failures, and render trajectory figures.

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "unav/metrics.hpp"
#include "unav/remote_backend.hpp"
#include "unav/render_svg.hpp"
#include "unav/runner.hpp"
#include "unav/render_svg.hpp"
#include "unav/world.hpp"
#include "unav/worldgen.hpp"

namespace fs = std::filesystem;
using namespace unav;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitBackend = 3;

std::vector<fs::path> collect_files(const std::vector<std::string>& inputs,
                                    const std::string& extension) {
  std::vector<fs::path> files;
  for (const std::string& input : inputs) {
    const fs::path p(input);
    if (fs::is_directory(p)) {
      for (const auto& entry : fs::directory_iterator(p)) {
        if (entry.path().string().ends_with(extension)) {
          files.push_back(entry.path());
        }
      }
    } else if (fs::exists(p)) {
      files.push_back(p);
    } else {
      throw Error(ErrorCode::BadConfig, "no such file: " + input);
    }
  }
  std::sort(files.begin(), files.end());
  return files;
}

std::string world_stem(const fs::path& p) {
  std::string stem = p.stem().string();
  return stem;
}

AblationConfig parse_ablation(const std::string& s) {
  AblationConfig a;
  if (s == "none") return a;
  if (s == "tdm") {
    a.tdm = false;
    return a;
  }
  if (s == "scb") {
    a.scb = false;
    return a;
  }
  if (s == "both") {
    a.tdm = false;
    a.scb = false;
    return a;
  }
  throw Error(ErrorCode::BadConfig, "ablate must be none|tdm|scb|both");
}

std::unique_ptr<DecisionBackend> make_backend(const std::string& kind,
                                              double error_rate, unsigned seed,
                                              const std::string& endpoint) {
  if (kind == "oracle") return make_oracle_backend(false);
  if (kind == "forgetful") return make_oracle_backend(true);
  if (kind == "faulty") {
    return make_faulty_backend(make_oracle_backend(false), error_rate, seed);
  }
  if (kind == "http") {
    if (endpoint.empty()) {
      throw Error(ErrorCode::BadConfig, "--endpoint required for http backend");
    }
    EndpointConfig cfg;
    cfg.base_url = endpoint;
    return make_remote_backend(cfg);
  }
  throw Error(ErrorCode::BadConfig,
              "backend must be oracle|forgetful|faulty|http");
}

int cmd_worldgen(const std::string& kind, unsigned seed,
                 const std::string& out, const std::string& family) {
  GeneratorSpec spec = generator_spec_from_kind(kind);
  if (!family.empty()) spec.family = task_family_from_string(family);
  const WorldModel world = generate_world(seed, spec);
  save_world(world, out);
  std::cout << "wrote " << out << "\n";
  return kExitOk;
}

struct RunJob {
  fs::path world_file;
  unsigned seed;
};

int cmd_run(const std::vector<std::string>& world_inputs,
            const std::vector<unsigned>& seeds,
            const std::string& backend_kind, double error_rate,
            const std::string& endpoint, const std::string& ablate,
            const std::string& out_dir, int jobs, int t_max, int lang_cap) {
  const std::vector<fs::path> world_files = collect_files(world_inputs, ".json");
  if (world_files.empty()) {
    throw Error(ErrorCode::BadConfig, "no world files found");
  }
  const AblationConfig ablation = parse_ablation(ablate);
  fs::create_directories(out_dir);
  // Pre-flight: every world must load before any episode starts.
  std::map<std::string, WorldModel> worlds;
  for (const fs::path& f : world_files) {
    worlds.emplace(f.string(), load_world(f.string()));
  }

  std::vector<RunJob> queue;
  for (const fs::path& f : world_files) {
    for (unsigned s : seeds) queue.push_back(RunJob{f, s});
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> backend_failed{false};
  std::mutex io_mutex;
  const int n_workers = std::max(
      1, jobs > 0 ? jobs : static_cast<int>(std::thread::hardware_concurrency()));

  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= queue.size()) return;
      const RunJob& job = queue[i];
      const WorldModel& world = worlds.at(job.world_file.string());
      auto backend =
          make_backend(backend_kind, error_rate, job.seed, endpoint);
      EpisodeConfig cfg;
      cfg.t_max = t_max;
      cfg.lang_calls_cap = lang_cap;
      cfg.ablation = ablation;
      cfg.seed = job.seed;
      cfg.world_name = world_stem(job.world_file);
      const EpisodeTrace trace = run_episode(world, *backend, cfg);
      if (trace.final.failure_reason == "BackendError") {
        backend_failed = true;
      }
      const fs::path out =
          fs::path(out_dir) / trace_file_name(cfg.world_name, job.seed);
      save_trace(trace, out.string());
      std::lock_guard<std::mutex> lock(io_mutex);
      std::cout << out.string() << ": success=" << trace.final.success
                << " steps=" << trace.final.steps_taken << "\n";
    }
  };
  std::vector<std::thread> pool;
  for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();
  return backend_failed ? kExitBackend : kExitOk;
}

// Loads traces and pairs each with its world by header name.
std::vector<std::pair<EpisodeTrace, const WorldModel*>> pair_traces(
    const std::vector<std::string>& trace_inputs,
    const std::vector<std::string>& world_inputs,
    std::map<std::string, WorldModel>& world_store) {
  for (const fs::path& f : collect_files(world_inputs, ".json")) {
    world_store.emplace(world_stem(f), load_world(f.string()));
  }
  std::vector<std::pair<EpisodeTrace, const WorldModel*>> out;
  for (const fs::path& f : collect_files(trace_inputs, ".trace.jsonl")) {
    EpisodeTrace trace = load_trace(f.string());
    auto it = world_store.find(trace.world_name);
    if (it == world_store.end()) {
      throw Error(ErrorCode::SchemaMismatch,
                  "no world named " + trace.world_name + " for " + f.string());
    }
    out.emplace_back(std::move(trace), &it->second);
  }
  if (out.empty()) throw Error(ErrorCode::NoData, "no traces found");
  return out;
}

int cmd_eval(const std::vector<std::string>& trace_inputs,
             const std::vector<std::string>& world_inputs,
             const std::string& json_out) {
  std::map<std::string, WorldModel> world_store;
  auto pairs = pair_traces(trace_inputs, world_inputs, world_store);
  std::map<unsigned, std::vector<EpisodeMetrics>> by_seed;
  std::vector<FailureCategory> failures;
  for (const auto& [trace, world] : pairs) {
    by_seed[trace.seed].push_back(compute_metrics(trace, *world));
    failures.push_back(classify_trace(trace, *world));
  }
  std::vector<std::vector<EpisodeMetrics>> groups;
  for (auto& [seed, group] : by_seed) groups.push_back(std::move(group));
  const SummaryTable table = aggregate(groups, failures);
  std::cout << summary_to_text(table);
  if (!json_out.empty()) {
    std::ofstream out(json_out);
    out << summary_to_json(table) << "\n";
    std::cout << "wrote " << json_out << "\n";
  }
  return kExitOk;
}

int cmd_classify(const std::vector<std::string>& trace_inputs,
                 const std::vector<std::string>& world_inputs) {
  std::map<std::string, WorldModel> world_store;
  auto pairs = pair_traces(trace_inputs, world_inputs, world_store);
  std::map<std::string, int> histogram;
  for (const auto& [trace, world] : pairs) {
    const FailureCategory c = classify_trace(trace, *world);
    std::cout << trace_file_name(trace.world_name, trace.seed) << ": "
              << to_string(c) << "\n";
    ++histogram[to_string(c)];
  }
  std::cout << "---\n";
  for (const auto& [name, count] : histogram) {
    std::cout << name << ": " << count << "\n";
  }
  return kExitOk;
}

int cmd_render(const std::string& trace_file, const std::string& world_file,
               const std::string& out) {
  const EpisodeTrace trace = load_trace(trace_file);
  const WorldModel world = load_world(world_file);
  const std::string svg = render_trace_svg(trace, world);
  std::ofstream f(out, std::ios::binary);
  if (!f) throw Error(ErrorCode::BadConfig, "cannot write " + out);
  f << svg;
  std::cout << "wrote " << out << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"training-free embodied-navigation engine"};
  app.require_subcommand(1);

  // worldgen
  auto* gen = app.add_subcommand("worldgen", "generate a synthetic world");
  std::string gen_kind = "room", gen_out = "world.json", gen_family;
  unsigned gen_seed = 0;
  gen->add_option("--template", gen_kind,
                  "room|multiroom|two_floor|deadend|subgoal_chain|aerial");
  gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_option("--out", gen_out, "output world file")->required();
  gen->add_option("--family", gen_family, "VLN|ObjectNav|EQA|AerialVLN");

  // run
  auto* run = app.add_subcommand("run", "run episode batches");
  std::vector<std::string> run_worlds;
  std::string run_backend = "oracle", run_endpoint, run_ablate = "none";
  std::string run_out = "traces";
  double run_error_rate = 0.0;
  int run_seeds = 1, run_jobs = 0, run_tmax = 500, run_langcap = 50;
  run->add_option("--worlds", run_worlds, "world files or directories")
      ->required();
  run->add_option("--backend", run_backend, "oracle|forgetful|faulty|http");
  run->add_option("--error-rate", run_error_rate, "faulty backend error rate");
  run->add_option("--endpoint", run_endpoint, "http backend base URL");
  int run_single_seed = -1;
  run->add_option("--seeds", run_seeds, "number of seeds (0..n-1)");
  run->add_option("--seed", run_single_seed, "run exactly this one seed")
      ->excludes("--seeds");
  run->add_option("--ablate", run_ablate, "none|tdm|scb|both");
  run->add_option("--out", run_out, "trace output directory");
  run->add_option("--jobs", run_jobs, "worker pool size (0 = hardware)");
  run->add_option("--t-max", run_tmax, "low-level step budget");
  run->add_option("--lang-cap", run_langcap, "decision-round budget");

  // eval
  auto* eval = app.add_subcommand("eval", "aggregate metrics over traces");
  std::vector<std::string> eval_traces, eval_worlds;
  std::string eval_json;
  eval->add_option("--traces", eval_traces, "trace files or directories")
      ->required();
  eval->add_option("--worlds", eval_worlds, "world files or directories")
      ->required();
  eval->add_option("--json", eval_json, "also write machine-readable JSON");

  // classify
  auto* cls = app.add_subcommand("classify", "failure-mode classification");
  std::vector<std::string> cls_traces, cls_worlds;
  cls->add_option("--traces", cls_traces, "trace files or directories")
      ->required();
  cls->add_option("--worlds", cls_worlds, "world files or directories")
      ->required();

  // render
  auto* render = app.add_subcommand("render", "trajectory SVG figure");
  std::string render_trace, render_world, render_out = "trace.svg";
  render->add_option("--trace", render_trace, "trace file")->required();
  render->add_option("--world", render_world, "world file")->required();
  render->add_option("--out", render_out, "output SVG file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (gen->parsed()) {
      return cmd_worldgen(gen_kind, gen_seed, gen_out, gen_family);
    }
    if (run->parsed()) {
      std::vector<unsigned> seeds;
      if (run_single_seed >= 0) {
        seeds.push_back(static_cast<unsigned>(run_single_seed));
      } else {
        for (int s = 0; s < run_seeds; ++s) {
          seeds.push_back(static_cast<unsigned>(s));
        }
      }
      return cmd_run(run_worlds, seeds, run_backend, run_error_rate,
                     run_endpoint, run_ablate, run_out, run_jobs, run_tmax,
                     run_langcap);
    }
    if (eval->parsed()) return cmd_eval(eval_traces, eval_worlds, eval_json);
    if (cls->parsed()) return cmd_classify(cls_traces, cls_worlds);
    if (render->parsed()) {
      return cmd_render(render_trace, render_world, render_out);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == ErrorCode::BackendError ? kExitBackend : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
