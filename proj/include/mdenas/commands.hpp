#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <ctime>
#include <exception>
#include <filesystem>
#include <future>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "mdenas/config.hpp"
#include "mdenas/engine.hpp"
#include "mdenas/evaluator.hpp"
#include "mdenas/io.hpp"
#include "mdenas/random.hpp"
#include "mdenas/ranking.hpp"

namespace mdenas::cli {

enum ExitCode : int { kOk = 0, kUsage = 2, kRuntime = 3 };

struct SearchOptions {
  std::filesystem::path config_path;
  std::filesystem::path out_dir;
  std::vector<std::uint64_t> seeds;  // overrides config.seed; several seeds fan out into seed_<s>/ subdirs
  std::size_t jobs = 1;
  std::optional<std::filesystem::path> resume;  // continue from a checkpoint
  std::optional<std::size_t> until;             // stop after this epoch (checkpoint is written)
};

struct SimulateOptions {
  std::filesystem::path config_path;
  std::size_t cohort = 8;
  std::filesystem::path out_csv;
  std::optional<std::uint64_t> seed;
};

namespace detail {

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline int run_guarded(const char* command, auto&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    spdlog::error("{}: {}", command, e.what());
    return kUsage;
  } catch (const InputError& e) {
    spdlog::error("{}: {}", command, e.what());
    return kUsage;
  } catch (const CheckpointError& e) {
    spdlog::error("{}: {}", command, e.what());
    return kUsage;
  } catch (const EvaluatorError& e) {
    spdlog::error("{}: evaluator failure: {}", command, e.what());
    return kRuntime;
  } catch (const std::exception& e) {
    spdlog::error("{}: {}", command, e.what());
    return kRuntime;
  }
}

// One seed's search, written atomically into `out_dir`.
inline void search_one(const SearchConfig& config, const AnyEvaluator& evaluator, const SearchOptions& options,
                       const std::filesystem::path& out_dir) {
  const auto started = utc_timestamp();
  auto run = [&] {
    if (!options.resume) return SearchRun<AnyEvaluator>(config, evaluator);
    nlohmann::json snapshot;
    try {
      snapshot = nlohmann::json::parse(read_text_file(*options.resume));
    } catch (const nlohmann::json::exception& e) {
      throw InputError(fmt::format("checkpoint '{}': {}", options.resume->string(), e.what()));
    }
    return SearchRun<AnyEvaluator>::restore(snapshot, config, evaluator);
  }();
  if (options.until) run.run(*options.until);
  else run.run();

  auto result = run.result();
  const auto norm_json = genotype_to_json(result.norm).dump(2) + "\n";
  const auto reduction_json = genotype_to_json(result.reduction).dump(2) + "\n";

  std::filesystem::create_directories(out_dir);
  const auto trace_path = out_dir / "trace.csv";
  const auto norm_path = out_dir / "genotype_norm.json";
  const auto reduction_path = out_dir / "genotype_reduction.json";
  const auto checkpoint_path = out_dir / "checkpoint.json";
  const auto manifest_path = out_dir / "manifest.json";

  nlohmann::json manifest = {
      {"config", config_to_json(config)},
      {"seed", config.seed},
      {"config_hash", hex64(run.hash())},
      {"epochs_completed", run.state().epoch},
      {"converged", run.state().converged},
      {"started_at", started},
      {"finished_at", utc_timestamp()},
      {"outputs",
       {{"trace", trace_path.string()},
        {"genotype_norm", norm_path.string()},
        {"genotype_reduction", reduction_path.string()},
        {"checkpoint", checkpoint_path.string()}}},
      {"genotype_digest", hex64(fnv1a(norm_json + reduction_json))},
  };

  StagedOutputs outputs;
  outputs.add(trace_path, trace_to_csv(config, result.trace));
  outputs.add(norm_path, norm_json);
  outputs.add(reduction_path, reduction_json);
  outputs.add(checkpoint_path, run.checkpoint().dump() + "\n");
  outputs.add(manifest_path, manifest.dump(2) + "\n");
  outputs.commit();
  spdlog::info("search seed {}: {} epochs, accuracy {:.4f} at the last epoch, outputs in {}", config.seed,
               run.state().epoch, result.trace.empty() ? 0.0 : result.trace.back().accuracy, out_dir.string());
}

}  // namespace detail

/// Runs the search for every requested seed; writes trace.csv, both genotypes,
/// checkpoint.json and manifest.json per seed.
inline int cmd_search(const SearchOptions& options) {
  return detail::run_guarded("search", [&] {
    auto base = load_config(options.config_path);
    const auto evaluator = make_evaluator(base);
    std::vector<std::uint64_t> seeds = options.seeds.empty() ? std::vector<std::uint64_t>{base.seed} : options.seeds;
    if (seeds.size() > 1 && options.resume) throw ConfigError("--resume takes a single seed");

    auto job = [&](std::uint64_t seed) {
      auto config = base;
      config.seed = seed;
      const auto dir = seeds.size() == 1 ? options.out_dir : options.out_dir / fmt::format("seed_{}", seed);
      detail::search_one(config, evaluator, options, dir);
    };

    const std::size_t jobs = std::max<std::size_t>(1, options.jobs);
    for (std::size_t start = 0; start < seeds.size(); start += jobs) {
      std::vector<std::future<void>> batch;
      for (std::size_t i = start; i < std::min(seeds.size(), start + jobs); ++i) {
        batch.push_back(std::async(std::launch::async, job, seeds[i]));
      }
      for (auto& f : batch) f.get();
    }
    return kOk;
  });
}

/// Scores `cohort` random architectures at every epoch 1..T and writes the
/// "epoch,arch_id,accuracy" matrix consumed by cmd_analyze_tau.
inline std::string simulate_cohort_csv(const SearchConfig& config, const AnyEvaluator& evaluator, std::size_t cohort) {
  auto rng = substream({config.seed, 0x636f686f7274ULL});
  std::vector<ArchitectureSample> archs;
  for (std::size_t i = 0; i < cohort; ++i) {
    archs.push_back(random_architecture(evaluator.num_edges(), evaluator.operations(), rng));
  }
  std::string out = "epoch,arch_id,accuracy\n";
  for (std::size_t t = 1; t <= config.epochs; ++t) {
    for (std::size_t i = 0; i < archs.size(); ++i) {
      out += fmt::format("{},{},{}\n", t, i, evaluate(evaluator, archs[i], t));
    }
  }
  return out;
}

inline int cmd_simulate(const SimulateOptions& options) {
  return detail::run_guarded("simulate", [&] {
    auto config = load_config(options.config_path);
    if (options.seed) config.seed = *options.seed;
    if (config.evaluator.kind != EvaluatorKind::surrogate) {
      throw ConfigError("simulate needs a surrogate evaluator (evaluator.type = \"surrogate\")");
    }
    if (options.cohort == 0) throw ConfigError("--cohort must be at least 1");
    const auto evaluator = make_evaluator(config);
    write_file_atomic(options.out_csv, simulate_cohort_csv(config, evaluator, options.cohort));
    spdlog::info("simulate: {} architectures x {} epochs -> {}", options.cohort, config.epochs,
                 options.out_csv.string());
    return kOk;
  });
}

/// epoch,tau,p_tau per epoch, then "mean_tau,<mean>,<p>" (final epoch excluded).
inline std::string tau_trace_csv(const ScoreTable& table) {
  TauTrace trace;
  try {
    trace = tau_trace(table.scores);
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  }
  std::string out = "epoch,tau,p_tau\n";
  for (std::size_t i = 0; i < trace.size(); ++i) {
    out += fmt::format("{},{},{}\n", table.epochs[i], trace.tau[i], trace.p_tau[i]);
  }
  const double mean = mean_tau(trace, true);
  out += fmt::format("mean_tau,{},{}\n", mean, (mean + 1.0) / 2.0);
  return out;
}

inline int cmd_analyze_tau(const std::filesystem::path& scores_csv, const std::filesystem::path& out_csv) {
  return detail::run_guarded("analyze-tau", [&] {
    const auto table = parse_score_csv(read_text_file(scores_csv));
    if (table.arch_ids.size() < 2) throw InputError("need at least two architectures to rank");
    write_file_atomic(out_csv, tau_trace_csv(table));
    spdlog::info("analyze-tau: {} epochs x {} architectures -> {}", table.epochs.size(), table.arch_ids.size(),
                 out_csv.string());
    return kOk;
  });
}

/// Re-derives both genotypes from a checkpoint's distributions with a new k.
inline int cmd_derive(const std::filesystem::path& checkpoint_path, std::size_t k,
                      const std::filesystem::path& out_json) {
  return detail::run_guarded("derive", [&] {
    nlohmann::json snapshot;
    try {
      snapshot = nlohmann::json::parse(read_text_file(checkpoint_path));
    } catch (const nlohmann::json::exception& e) {
      throw InputError(fmt::format("checkpoint '{}': {}", checkpoint_path.string(), e.what()));
    }
    SearchConfig config;
    std::vector<EdgeDistribution> edges;
    try {
      config = config_from_json(snapshot.at("config"));
      edges = snapshot_from_json(snapshot.at("distributions").at("norm"));
      auto reduction = snapshot_from_json(snapshot.at("distributions").at("reduction"));
      edges.insert(edges.end(), reduction.begin(), reduction.end());
    } catch (const nlohmann::json::exception& e) {
      throw InputError(fmt::format("malformed checkpoint: {}", e.what()));
    } catch (const std::invalid_argument& e) {
      throw InputError(fmt::format("malformed checkpoint: {}", e.what()));
    }
    std::pair<Genotype, Genotype> genotypes;
    try {
      genotypes = derive_genotypes(config, edges, k);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    nlohmann::json out = {{"k", k},
                          {"norm", genotype_to_json(genotypes.first)},
                          {"reduction", genotype_to_json(genotypes.second)}};
    write_file_atomic(out_json, out.dump(2) + "\n");
    spdlog::info("derive: k={} -> {}", k, out_json.string());
    return kOk;
  });
}

}  // namespace mdenas::cli
