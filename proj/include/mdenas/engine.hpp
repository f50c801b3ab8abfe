#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "mdenas/config.hpp"
#include "mdenas/distribution.hpp"
#include "mdenas/evaluator.hpp"
#include "mdenas/random.hpp"
#include "mdenas/search_space.hpp"

namespace mdenas {

/// Snapshot does not belong to the config/evaluator it is restored against.
class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::string_view kCheckpointFormat = "mdenas-checkpoint-v1";

struct EpochRecord {
  std::size_t epoch = 0;
  ArchitectureSample arch;                 // sampled op per edge, norm then reduction
  double accuracy = 0.0;
  std::vector<std::vector<double>> probs;  // per edge, after this epoch's update

  double max_prob(std::size_t edge) const { return *std::max_element(probs[edge].begin(), probs[edge].end()); }

  double entropy(std::size_t edge) const {
    double h = 0.0;
    for (double p : probs[edge]) {
      if (p > 0.0) h -= p * std::log(p);
    }
    return h;
  }

  double mean_entropy() const {
    double h = 0.0;
    for (std::size_t e = 0; e < probs.size(); ++e) h += entropy(e);
    return h / static_cast<double>(probs.size());
  }

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct SearchState {
  std::vector<EdgeDistribution> edges;  // norm-cell edges, then reduction-cell edges
  std::size_t epoch = 0;                // completed epochs
  bool converged = false;
  std::vector<EpochRecord> trace;

  friend bool operator==(const SearchState&, const SearchState&) = default;
};

struct SearchResult {
  Genotype norm;
  Genotype reduction;
  std::vector<EpochRecord> trace;
  SearchState state;
};

inline std::string hex64(std::uint64_t v) { return fmt::format("{:016x}", v); }

template <class E>
std::uint64_t evaluator_fingerprint(const E& evaluator) {
  if constexpr (requires { evaluator.fingerprint(); }) {
    return evaluator.fingerprint();
  } else {
    return 0;
  }
}

/// Binds a run to its full configuration and the evaluator it samples from.
template <class E>
std::uint64_t config_hash(const SearchConfig& config, const E& evaluator) {
  return fnv1a(config_to_json(config).dump() + "|" + hex64(evaluator_fingerprint(evaluator)));
}

/// Genotypes for the norm and reduction cells from per-edge distributions.
inline std::pair<Genotype, Genotype> derive_genotypes(const SearchConfig& config,
                                                      std::span<const EdgeDistribution> edges, std::size_t k) {
  const auto ops = config.operation_set();
  CellTemplate norm(config.num_intermediate, CellKind::norm);
  CellTemplate reduction(config.num_intermediate, CellKind::reduction);
  const auto per_cell = norm.num_edges();
  if (edges.size() != 2 * per_cell) throw std::invalid_argument("snapshot edge count does not match the config");
  std::vector<std::vector<double>> probs;
  for (const auto& e : edges) probs.push_back(e.probs);
  GenotypeOptions options{k, config.exclude_none};
  std::span<const std::vector<double>> all(probs);
  return {derive_genotype(norm, all.subspan(0, per_cell), ops, options),
          derive_genotype(reduction, all.subspan(per_cell, per_cell), ops, options)};
}

/// The epoch loop: sample one operation per edge, evaluate the assembled
/// architecture once, credit that accuracy to the sampled operation on every
/// edge, and update every edge's distribution from its dominance counts.
///
/// Randomness for (epoch, edge) comes from its own substream of the seed, so
/// the trajectory depends only on the config and the evaluator.
template <Evaluator E>
class SearchRun {
 public:
  SearchRun(SearchConfig config, const E& evaluator) : config_(std::move(config)), evaluator_(&evaluator) {
    config_.validate();
    ops_ = config_.operation_set();
    edges_per_cell_ = cell_edge_count(config_.num_intermediate);
    if (evaluator.num_edges() != 2 * edges_per_cell_) {
      throw std::invalid_argument(fmt::format("evaluator covers {} edges, search needs {}", evaluator.num_edges(),
                                              2 * edges_per_cell_));
    }
    if (!(evaluator.operations() == ops_)) throw std::invalid_argument("evaluator operation set differs from config");
    state_.edges.assign(2 * edges_per_cell_, init_uniform(ops_.size()));
    hash_ = config_hash(config_, evaluator);
  }

  const SearchConfig& config() const noexcept { return config_; }
  const SearchState& state() const noexcept { return state_; }
  std::uint64_t hash() const noexcept { return hash_; }

  bool finished() const noexcept { return state_.epoch >= config_.epochs || state_.converged; }

  void step() {
    if (finished()) return;
    const std::size_t epoch = state_.epoch + 1;
    const std::size_t num_edges = state_.edges.size();

    std::vector<GateVector> gates;
    gates.reserve(num_edges);
    ArchitectureSample arch;
    arch.ops.reserve(num_edges);
    for (std::size_t e = 0; e < num_edges; ++e) {
      auto rng = substream({config_.seed, epoch, e});
      gates.push_back(sample_gate(state_.edges[e], rng));
      arch.ops.push_back(ops_[gates.back().sampled]);
    }

    const double accuracy = evaluate(*evaluator_, arch, epoch);

    EpochRecord record{epoch, std::move(arch), accuracy, {}};
    record.probs.reserve(num_edges);
    bool all_confident = true;
    for (std::size_t e = 0; e < num_edges; ++e) {
      auto& dist = state_.edges[e];
      dist = record_feedback(std::move(dist), gates[e], accuracy, config_.acc_aggregation);
      dist = update_probs(std::move(dist), differentials(dist), config_.alpha);
      all_confident = all_confident && dist.max_prob() >= config_.convergence_threshold;
      record.probs.push_back(dist.probs);
    }
    state_.trace.push_back(std::move(record));
    state_.epoch = epoch;
    if (config_.early_stop && all_confident) state_.converged = true;
  }

  /// Runs until `until_epoch` (capped at the configured epoch count) or convergence.
  void run(std::size_t until_epoch = static_cast<std::size_t>(-1)) {
    while (!finished() && state_.epoch < until_epoch) step();
  }

  std::pair<Genotype, Genotype> genotypes(std::size_t k) const { return derive_genotypes(config_, state_.edges, k); }

  SearchResult result() const {
    auto [norm, reduction] = genotypes(config_.k);
    return {std::move(norm), std::move(reduction), state_.trace, state_};
  }

  nlohmann::json checkpoint() const {
    const auto per_cell = static_cast<std::ptrdiff_t>(edges_per_cell_);
    std::vector<EdgeDistribution> norm(state_.edges.begin(), state_.edges.begin() + per_cell);
    std::vector<EdgeDistribution> reduction(state_.edges.begin() + per_cell, state_.edges.end());
    nlohmann::json trace = nlohmann::json::array();
    for (const auto& r : state_.trace) {
      std::vector<std::string> names;
      for (auto op : r.arch.ops) names.emplace_back(operation_name(op));
      trace.push_back({{"epoch", r.epoch}, {"accuracy", r.accuracy}, {"ops", names}, {"probs", r.probs}});
    }
    return {
        {"format", std::string(kCheckpointFormat)},
        {"config_hash", hex64(hash_)},
        {"config", config_to_json(config_)},
        {"rng", {{"seed", config_.seed}, {"next_epoch", state_.epoch + 1}}},
        {"epoch", state_.epoch},
        {"converged", state_.converged},
        {"distributions", {{"norm", snapshot_to_json(norm)}, {"reduction", snapshot_to_json(reduction)}}},
        {"trace", std::move(trace)},
    };
  }

  /// Rebuilds a run from checkpoint(); continuing it reproduces the
  /// uninterrupted trajectory exactly.
  static SearchRun restore(const nlohmann::json& snapshot, SearchConfig config, const E& evaluator) {
    SearchRun run(std::move(config), evaluator);
    try {
      if (snapshot.at("format").get<std::string>() != kCheckpointFormat) {
        throw CheckpointError("unsupported checkpoint format");
      }
      if (snapshot.at("config_hash").get<std::string>() != hex64(run.hash_)) {
        throw CheckpointError("checkpoint config hash " + snapshot.at("config_hash").get<std::string>() +
                              " does not match the current config (" + hex64(run.hash_) + ")");
      }
      const auto epoch = snapshot.at("epoch").get<std::size_t>();
      if (snapshot.at("rng").at("seed").get<std::uint64_t>() != run.config_.seed ||
          snapshot.at("rng").at("next_epoch").get<std::size_t>() != epoch + 1) {
        throw CheckpointError("checkpoint RNG state is inconsistent");
      }
      auto norm = snapshot_from_json(snapshot.at("distributions").at("norm"));
      auto reduction = snapshot_from_json(snapshot.at("distributions").at("reduction"));
      if (norm.size() != run.edges_per_cell_ || reduction.size() != run.edges_per_cell_) {
        throw CheckpointError("checkpoint edge count does not match the config");
      }
      SearchState state;
      state.edges = std::move(norm);
      state.edges.insert(state.edges.end(), reduction.begin(), reduction.end());
      for (const auto& d : state.edges) {
        if (d.size() != run.ops_.size()) throw CheckpointError("checkpoint distribution size does not match ops");
        if (d.total_epochs() != epoch) throw CheckpointError("checkpoint epoch counts disagree with its epoch");
      }
      state.epoch = epoch;
      state.converged = snapshot.at("converged").get<bool>();
      for (const auto& r : snapshot.at("trace")) {
        EpochRecord rec;
        rec.epoch = r.at("epoch").get<std::size_t>();
        rec.accuracy = r.at("accuracy").get<double>();
        for (const auto& name : r.at("ops")) rec.arch.ops.push_back(parse_operation(name.get<std::string>()));
        rec.probs = r.at("probs").get<std::vector<std::vector<double>>>();
        state.trace.push_back(std::move(rec));
      }
      if (state.trace.size() != epoch) throw CheckpointError("checkpoint trace length disagrees with its epoch");
      run.state_ = std::move(state);
    } catch (const nlohmann::json::exception& e) {
      throw CheckpointError(std::string("malformed checkpoint: ") + e.what());
    } catch (const std::invalid_argument& e) {
      throw CheckpointError(std::string("malformed checkpoint: ") + e.what());
    }
    return run;
  }

 private:
  SearchConfig config_;
  const E* evaluator_;
  OperationSet ops_ = OperationSet::first(1);
  std::size_t edges_per_cell_ = 0;
  std::uint64_t hash_ = 0;
  SearchState state_;
};

template <Evaluator E>
SearchResult run_search(const SearchConfig& config, const E& evaluator) {
  SearchRun<E> run(config, evaluator);
  run.run();
  return run.result();
}

/// epoch,accuracy,cell_kind,edge_index,sampled_op,prob_0..prob_{M-1}
inline std::string trace_to_csv(const SearchConfig& config, std::span<const EpochRecord> trace) {
  const auto m = config.ops.size();
  const auto per_cell = cell_edge_count(config.num_intermediate);
  std::string out = "epoch,accuracy,cell_kind,edge_index,sampled_op";
  for (std::size_t i = 0; i < m; ++i) out += fmt::format(",prob_{}", i);
  out += '\n';
  for (const auto& r : trace) {
    for (std::size_t e = 0; e < r.probs.size(); ++e) {
      const bool norm = e < per_cell;
      out += fmt::format("{},{},{},{},{}", r.epoch, r.accuracy, norm ? "norm" : "reduction",
                         norm ? e : e - per_cell, operation_name(r.arch.ops[e]));
      for (double p : r.probs[e]) out += fmt::format(",{}", p);
      out += '\n';
    }
  }
  return out;
}

}  // namespace mdenas
