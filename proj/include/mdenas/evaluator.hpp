#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "mdenas/operations.hpp"
#include "mdenas/random.hpp"
#include "mdenas/search_space.hpp"

namespace mdenas {

/// Raised by evaluators for invalid architectures or epochs.
class EvaluatorError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One sampled operation per edge of the searched network. With two cell
/// kinds the norm-cell edges come first, then the reduction-cell edges.
struct ArchitectureSample {
  std::vector<OperationKind> ops;

  friend bool operator==(const ArchitectureSample&, const ArchitectureSample&) = default;
};

inline std::uint64_t architecture_hash(const ArchitectureSample& arch) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (auto op : arch.ops) {
    h ^= operation_id(op) + 1;
    h *= 0x100000001b3ULL;
  }
  return h;
}

template <class Rng>
ArchitectureSample random_architecture(std::size_t num_edges, const OperationSet& ops, Rng& rng) {
  ArchitectureSample a;
  a.ops.reserve(num_edges);
  for (std::size_t e = 0; e < num_edges; ++e) {
    auto i = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(ops.size()));
    a.ops.push_back(ops[std::min(i, ops.size() - 1)]);
  }
  return a;
}

/// Ground-truth evaluator with a fixed quality q[edge][op] per edge. The true
/// score of an architecture is the mean quality of its edges, optionally
/// blended with pairwise terms between edges that feed the same node.
class TabularOracle {
 public:
  TabularOracle(std::size_t num_intermediate, OperationSet ops, std::vector<std::vector<double>> q,
                double interaction = 0.0, std::uint64_t interaction_seed = 0)
      : cell_(num_intermediate, CellKind::norm),
        ops_(std::move(ops)),
        q_(std::move(q)),
        interaction_(interaction),
        interaction_seed_(interaction_seed) {
    const auto per_cell = cell_.num_edges();
    if (q_.size() != per_cell && q_.size() != 2 * per_cell) {
      throw std::invalid_argument("quality table needs " + std::to_string(per_cell) + " or " +
                                  std::to_string(2 * per_cell) + " rows, got " + std::to_string(q_.size()));
    }
    for (const auto& row : q_) {
      if (row.size() != ops_.size()) throw std::invalid_argument("quality row length does not match ops");
      for (double v : row) {
        if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("quality values must lie in [0, 1]");
      }
    }
    if (!(interaction_ >= 0.0 && interaction_ <= 1.0)) {
      throw std::invalid_argument("interaction weight must lie in [0, 1]");
    }
    if (interaction_ > 0.0) build_interactions();
  }

  /// Random table whose per-edge best operation leads the runner-up by at
  /// least `margin`.
  static TabularOracle random(std::size_t num_intermediate, const OperationSet& ops, std::size_t num_cells,
                              std::uint64_t seed, double margin = 0.05, double interaction = 0.0) {
    if (num_cells != 1 && num_cells != 2) throw std::invalid_argument("num_cells must be 1 or 2");
    if (!(margin >= 0.0 && margin < 1.0)) throw std::invalid_argument("margin must lie in [0, 1)");
    auto rng = substream({seed, 0x7461626c65ULL});
    const auto rows = num_cells * cell_edge_count(num_intermediate);
    std::vector<std::vector<double>> q(rows, std::vector<double>(ops.size()));
    for (auto& row : q) {
      for (auto& v : row) v = (1.0 - margin) * uniform01(rng);
      if (row.size() > 1) {
        auto best = std::max_element(row.begin(), row.end());
        double runner_up = 0.0;
        for (auto it = row.begin(); it != row.end(); ++it) {
          if (it != best) runner_up = std::max(runner_up, *it);
        }
        *best = std::max(*best, runner_up + margin);
      }
    }
    return TabularOracle(num_intermediate, ops, std::move(q), interaction, derive_seed({seed, 1}));
  }

  std::size_t num_intermediate() const noexcept { return cell_.num_intermediate(); }
  std::size_t num_cells() const noexcept { return q_.size() / cell_.num_edges(); }
  std::size_t num_edges() const noexcept { return q_.size(); }
  const OperationSet& operations() const noexcept { return ops_; }
  const std::vector<std::vector<double>>& table() const noexcept { return q_; }
  double interaction() const noexcept { return interaction_; }
  std::uint64_t interaction_seed() const noexcept { return interaction_seed_; }

  double true_score(const ArchitectureSample& arch) const {
    check(arch);
    std::vector<std::size_t> cols(arch.ops.size());
    for (std::size_t e = 0; e < arch.ops.size(); ++e) cols[e] = column(arch.ops[e]);
    double separable = 0.0;
    for (std::size_t e = 0; e < cols.size(); ++e) separable += q_[e][cols[e]];
    separable /= static_cast<double>(cols.size());
    if (interaction_ == 0.0) return separable;
    double pairwise = 0.0;
    for (const auto& p : pairs_) pairwise += p.weight(cols[p.a], cols[p.b], ops_.size());
    pairwise /= static_cast<double>(pairs_.size());
    return (1.0 - interaction_) * separable + interaction_ * pairwise;
  }

  double evaluate(const ArchitectureSample& arch, std::size_t /*epoch*/) const { return true_score(arch); }

  /// Score of discrete cells: the same blend restricted to the kept edges.
  /// Genotypes are matched to table rows by cell kind.
  double genotype_score(std::span<const Genotype> genotypes) const {
    std::vector<std::pair<std::size_t, std::size_t>> kept;  // (row, column)
    for (const auto& g : genotypes) {
      const std::size_t offset =
          (num_cells() == 2 && g.kind == CellKind::reduction) ? cell_.num_edges() : 0;
      auto edges = genotype_edges(cell_, g);
      std::size_t i = 0;
      for (const auto& node : g.nodes) {
        for (const auto& c : node) kept.emplace_back(offset + edges[i++], column(c.op));
      }
    }
    if (kept.empty()) throw std::invalid_argument("genotype keeps no edges");
    double separable = 0.0;
    for (auto [row, col] : kept) separable += q_[row][col];
    separable /= static_cast<double>(kept.size());
    if (interaction_ == 0.0) return separable;
    double pairwise = 0.0;
    std::size_t count = 0;
    for (const auto& p : pairs_) {
      auto a = std::find_if(kept.begin(), kept.end(), [&](auto& k) { return k.first == p.a; });
      auto b = std::find_if(kept.begin(), kept.end(), [&](auto& k) { return k.first == p.b; });
      if (a == kept.end() || b == kept.end()) continue;
      pairwise += p.weight(a->second, b->second, ops_.size());
      ++count;
    }
    if (count == 0) return separable;
    return (1.0 - interaction_) * separable + interaction_ * pairwise / static_cast<double>(count);
  }

  /// Stable digest of the table, used to bind checkpoints to their oracle.
  std::uint64_t fingerprint() const { return fnv1a(to_json().dump()); }

  // {"num_intermediate": N, "ops": [names], "q": [[...] per edge]}
  nlohmann::json to_json() const {
    nlohmann::json j = {{"num_intermediate", num_intermediate()}, {"ops", ops_.names()}, {"q", q_}};
    if (interaction_ > 0.0) j["interaction"] = {{"weight", interaction_}, {"seed", interaction_seed_}};
    return j;
  }

  static TabularOracle from_json(const nlohmann::json& j) {
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (it.key() != "num_intermediate" && it.key() != "ops" && it.key() != "q" && it.key() != "interaction") {
        throw std::invalid_argument("unknown oracle key '" + it.key() + "'");
      }
    }
    std::vector<OperationKind> kinds;
    for (const auto& name : j.at("ops")) kinds.push_back(parse_operation(name.get<std::string>()));
    double weight = 0.0;
    std::uint64_t seed = 0;
    if (j.contains("interaction")) {
      weight = j["interaction"].at("weight").get<double>();
      seed = j["interaction"].at("seed").get<std::uint64_t>();
    }
    return TabularOracle(j.at("num_intermediate").get<std::size_t>(), OperationSet(std::move(kinds)),
                         j.at("q").get<std::vector<std::vector<double>>>(), weight, seed);
  }

  void check(const ArchitectureSample& arch) const {
    if (arch.ops.size() != q_.size()) {
      throw EvaluatorError("architecture has " + std::to_string(arch.ops.size()) + " edges, evaluator expects " +
                           std::to_string(q_.size()));
    }
  }

 private:
  struct EdgePair {
    std::size_t a = 0;
    std::size_t b = 0;
    std::vector<double> w;  // ops x ops
    double weight(std::size_t i, std::size_t j, std::size_t m) const { return w[i * m + j]; }
  };

  std::size_t column(OperationKind op) const {
    auto idx = ops_.index_of(op);
    if (!idx) throw EvaluatorError("operation '" + std::string(operation_name(op)) + "' not in the oracle's set");
    return *idx;
  }

  // Every pair of edges entering the same intermediate node.
  void build_interactions() {
    auto rng = substream({interaction_seed_, 0x70616972ULL});
    const auto m = ops_.size();
    for (std::size_t cell = 0; cell < num_cells(); ++cell) {
      const auto offset = cell * cell_.num_edges();
      for (std::size_t node = 0; node < cell_.num_intermediate(); ++node) {
        auto [first, last] = cell_.incoming(node);
        for (auto a = first; a < last; ++a) {
          for (auto b = a + 1; b < last; ++b) {
            EdgePair p{offset + a, offset + b, std::vector<double>(m * m)};
            for (auto& v : p.w) v = uniform01(rng);
            pairs_.push_back(std::move(p));
          }
        }
      }
    }
  }

  CellTemplate cell_;
  OperationSet ops_;
  std::vector<std::vector<double>> q_;
  double interaction_;
  std::uint64_t interaction_seed_;
  std::vector<EdgePair> pairs_;
};

/// Per edge, the best-quality operation; per node, the k edges whose best
/// quality is highest. Same tie-breaks as derive_genotype.
inline Genotype best_genotype(const TabularOracle& oracle, std::size_t k, CellKind kind = CellKind::norm,
                              bool exclude_none = false) {
  CellTemplate cell(oracle.num_intermediate(), kind);
  detail::check_k(cell, k);
  const std::size_t offset = (oracle.num_cells() == 2 && kind == CellKind::reduction) ? cell.num_edges() : 0;
  std::span<const std::vector<double>> rows(oracle.table().data() + offset, cell.num_edges());
  return detail::select_genotype(cell, rows, oracle.operations(), {k, exclude_none});
}

struct SurrogateParams {
  double tau_c = 10.0;
  /// Target probability that an epoch-t comparison of two random
  /// architectures agrees with their true-score order.
  std::optional<double> rho = 1.0;
  /// When set, consistency ramps linearly from `rho` at epoch 1 to this value
  /// at epoch horizon-1.
  std::optional<double> rho_final;
  /// Explicit noise scale (relative to the curve value); excludes `rho`.
  std::optional<double> sigma;
  /// Training is converged from this epoch on: accuracies equal the
  /// noiseless curve. 0 disables.
  std::size_t horizon = 0;
  std::uint64_t seed = 0;
};

/// Saturating learning-curve simulator over a TabularOracle:
///   acc(arch, t) = c_t * s + c_t * sigma_t * z,   c_t = 1 - exp(-t / tau_c)
/// with s the true score and z a standard normal drawn from a stream keyed by
/// (seed, arch, t). sigma_t is calibrated so that pairwise comparisons agree
/// with the true order with probability rho_t.
class SurrogateCurveEvaluator {
 public:
  static constexpr std::size_t kCalibrationPairs = 4000;

  SurrogateCurveEvaluator(TabularOracle oracle, SurrogateParams params)
      : oracle_(std::move(oracle)), params_(params) {
    if (!(params_.tau_c > 0.0)) throw std::invalid_argument("tau_c must be positive");
    if (params_.sigma && params_.rho) {
      if (*params_.rho != 1.0 || params_.rho_final) throw std::invalid_argument("set either sigma or rho, not both");
      params_.rho.reset();
    }
    if (params_.sigma) {
      if (!(*params_.sigma >= 0.0)) throw std::invalid_argument("sigma must be non-negative");
      if (params_.rho_final) throw std::invalid_argument("rho_final needs rho");
      return;
    }
    if (!params_.rho) throw std::invalid_argument("surrogate needs rho or sigma");
    check_rho(*params_.rho);
    if (params_.rho_final) {
      check_rho(*params_.rho_final);
      if (params_.horizon < 3) throw std::invalid_argument("a consistency ramp needs horizon >= 3");
    }
    calibrate();
  }

  const TabularOracle& oracle() const noexcept { return oracle_; }
  const SurrogateParams& params() const noexcept { return params_; }
  std::size_t num_edges() const noexcept { return oracle_.num_edges(); }
  const OperationSet& operations() const noexcept { return oracle_.operations(); }

  double true_score(const ArchitectureSample& arch) const { return oracle_.true_score(arch); }

  /// Configured consistency at `epoch` (1.0 once converged); nullopt when the
  /// noise scale was given directly.
  std::optional<double> consistency_at(std::size_t epoch) const {
    if (converged(epoch)) return 1.0;
    if (!params_.rho) return std::nullopt;
    return rho_at(epoch);
  }

  /// Noise scale relative to the curve value; infinite means pure noise.
  double noise_scale(std::size_t epoch) const {
    if (converged(epoch)) return 0.0;
    if (params_.sigma) return *params_.sigma;
    if (params_.rho_final) return ramp_sigma_.at(epoch - 1);
    return sigma_;
  }

  double curve(std::size_t epoch) const {
    return 1.0 - std::exp(-static_cast<double>(epoch) / params_.tau_c);
  }

  double evaluate(const ArchitectureSample& arch, std::size_t epoch) const {
    if (epoch == 0) throw EvaluatorError("epochs are counted from 1");
    const double s = oracle_.true_score(arch);
    const double c = curve(epoch);
    const double sigma = noise_scale(epoch);
    if (sigma == 0.0) return std::clamp(c * s, 0.0, 1.0);
    auto rng = substream({params_.seed, architecture_hash(arch), epoch});
    if (std::isinf(sigma)) return std::clamp(c * uniform01(rng), 0.0, 1.0);
    std::normal_distribution<double> z;
    return std::clamp(c * (s + sigma * z(rng)), 0.0, 1.0);
  }

  std::uint64_t fingerprint() const {
    nlohmann::json j = {{"oracle", oracle_.fingerprint()}, {"tau_c", params_.tau_c}, {"horizon", params_.horizon},
                        {"seed", params_.seed}};
    if (params_.rho) j["rho"] = *params_.rho;
    if (params_.rho_final) j["rho_final"] = *params_.rho_final;
    if (params_.sigma) j["sigma"] = *params_.sigma;
    return fnv1a(j.dump());
  }

 private:
  static void check_rho(double rho) {
    if (!(rho >= 0.5 && rho <= 1.0)) throw std::invalid_argument("rho must lie in [0.5, 1]");
  }

  bool converged(std::size_t epoch) const { return params_.horizon > 0 && epoch >= params_.horizon; }

  double rho_at(std::size_t epoch) const {
    if (!params_.rho_final) return *params_.rho;
    const double f = static_cast<double>(epoch - 1) / static_cast<double>(params_.horizon - 2);
    return *params_.rho + (*params_.rho_final - *params_.rho) * f;
  }

  // Expected agreement for noise scale sigma: mean over gaps d of P(d + sigma*(z1 - z2) has the sign of d).
  double agreement(double sigma) const {
    double total = 0.0;
    for (double d : gaps_) total += 0.5 * std::erfc(-d / (2.0 * sigma));
    return total / static_cast<double>(gaps_.size());
  }

  double solve_sigma(double rho) const {
    if (rho >= 1.0) return 0.0;
    if (rho <= 0.5) return std::numeric_limits<double>::infinity();
    double lo = std::log(1e-9), hi = std::log(1e3);
    for (int it = 0; it < 80; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (agreement(std::exp(mid)) > rho) lo = mid;
      else hi = mid;
    }
    return std::exp(0.5 * (lo + hi));
  }

  void calibrate() {
    auto rng = substream({params_.seed, 0x63616c6962ULL});
    for (std::size_t i = 0; i < kCalibrationPairs; ++i) {
      auto a = random_architecture(oracle_.num_edges(), oracle_.operations(), rng);
      auto b = random_architecture(oracle_.num_edges(), oracle_.operations(), rng);
      const double d = std::abs(oracle_.true_score(a) - oracle_.true_score(b));
      if (d > 0.0) gaps_.push_back(d);
    }
    if (gaps_.empty()) {
      // Every architecture scores the same; any noise level is consistent.
      sigma_ = 0.0;
      if (params_.rho_final) ramp_sigma_.assign(params_.horizon, 0.0);
      return;
    }
    if (!params_.rho_final) {
      sigma_ = solve_sigma(*params_.rho);
      return;
    }
    for (std::size_t t = 1; t < params_.horizon; ++t) ramp_sigma_.push_back(solve_sigma(rho_at(t)));
  }

  TabularOracle oracle_;
  SurrogateParams params_;
  std::vector<double> gaps_;
  double sigma_ = 0.0;
  std::vector<double> ramp_sigma_;  // index epoch - 1
};

template <class E>
concept Evaluator = requires(const E& e, const ArchitectureSample& arch, std::size_t epoch) {
  { e.evaluate(arch, epoch) } -> std::convertible_to<double>;
  { e.true_score(arch) } -> std::convertible_to<double>;
  { e.num_edges() } -> std::convertible_to<std::size_t>;
  { e.operations() } -> std::convertible_to<const OperationSet&>;
};

/// Either backend behind one value type.
class AnyEvaluator {
 public:
  AnyEvaluator(TabularOracle oracle) : impl_(std::move(oracle)) {}
  AnyEvaluator(SurrogateCurveEvaluator surrogate) : impl_(std::move(surrogate)) {}

  double evaluate(const ArchitectureSample& arch, std::size_t epoch) const {
    return std::visit([&](const auto& e) { return e.evaluate(arch, epoch); }, impl_);
  }
  double true_score(const ArchitectureSample& arch) const {
    return std::visit([&](const auto& e) { return e.true_score(arch); }, impl_);
  }
  std::size_t num_edges() const {
    return std::visit([](const auto& e) { return e.num_edges(); }, impl_);
  }
  const OperationSet& operations() const {
    return std::visit([](const auto& e) -> const OperationSet& { return e.operations(); }, impl_);
  }
  std::uint64_t fingerprint() const {
    return std::visit([](const auto& e) { return e.fingerprint(); }, impl_);
  }
  const TabularOracle& oracle() const {
    if (auto* t = std::get_if<TabularOracle>(&impl_)) return *t;
    return std::get<SurrogateCurveEvaluator>(impl_).oracle();
  }
  const SurrogateCurveEvaluator* surrogate() const { return std::get_if<SurrogateCurveEvaluator>(&impl_); }

 private:
  std::variant<TabularOracle, SurrogateCurveEvaluator> impl_;
};

/// Validated entry point for any backend.
template <Evaluator E>
double evaluate(const E& evaluator, const ArchitectureSample& arch, std::size_t epoch) {
  if (arch.ops.size() != evaluator.num_edges()) {
    throw EvaluatorError("architecture has " + std::to_string(arch.ops.size()) + " edges, evaluator expects " +
                         std::to_string(evaluator.num_edges()));
  }
  if (epoch == 0) throw EvaluatorError("epochs are counted from 1");
  const double acc = evaluator.evaluate(arch, epoch);
  if (!(acc >= 0.0 && acc <= 1.0)) throw EvaluatorError("evaluator returned an accuracy outside [0, 1]");
  return acc;
}

/// Fraction of random architecture pairs whose epoch-`epoch` comparison agrees
/// with their true-score order. Pairs with equal true scores are skipped; equal
/// measured accuracies count as disagreement.
template <Evaluator E, class Rng>
double measure_consistency(const E& evaluator, std::size_t num_pairs, std::size_t epoch, Rng& rng) {
  if (num_pairs == 0) throw std::invalid_argument("num_pairs must be at least 1");
  std::size_t agree = 0, counted = 0;
  for (std::size_t i = 0; i < num_pairs; ++i) {
    auto a = random_architecture(evaluator.num_edges(), evaluator.operations(), rng);
    auto b = random_architecture(evaluator.num_edges(), evaluator.operations(), rng);
    const double sa = evaluator.true_score(a), sb = evaluator.true_score(b);
    if (sa == sb) continue;
    const double ea = evaluate(evaluator, a, epoch), eb = evaluate(evaluator, b, epoch);
    ++counted;
    if ((sa < sb && ea < eb) || (sa > sb && ea > eb)) ++agree;
  }
  if (counted == 0) return 1.0;
  return static_cast<double>(agree) / static_cast<double>(counted);
}

}  // namespace mdenas
