#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "mdenas/operations.hpp"
#include "mdenas/random.hpp"

namespace mdenas {

/// Probability floor kept on every operation after an update.
inline constexpr double kProbabilityFloor = 1e-6;

/// How an operation's accuracy record absorbs a new observation.
enum class AccAggregation { latest, mean, max };

inline std::string_view acc_aggregation_name(AccAggregation a) noexcept {
  switch (a) {
    case AccAggregation::latest: return "latest";
    case AccAggregation::mean: return "mean";
    case AccAggregation::max: return "max";
  }
  return "latest";
}

inline AccAggregation parse_acc_aggregation(std::string_view name) {
  if (name == "latest") return AccAggregation::latest;
  if (name == "mean") return AccAggregation::mean;
  if (name == "max") return AccAggregation::max;
  throw std::invalid_argument("unknown accuracy aggregation '" + std::string(name) + "'");
}

/// Multinomial distribution over the candidate operations of one edge, plus
/// the feedback gathered for each operation: how many epochs it was sampled
/// and the accuracy observed while it was.
struct EdgeDistribution {
  std::vector<double> probs;
  std::vector<std::uint64_t> epoch_counts;
  std::vector<double> acc_records;
  std::vector<bool> seen;

  std::size_t size() const noexcept { return probs.size(); }

  std::uint64_t total_epochs() const noexcept {
    std::uint64_t t = 0;
    for (auto c : epoch_counts) t += c;
    return t;
  }

  double max_prob() const { return *std::max_element(probs.begin(), probs.end()); }

  /// Shannon entropy in nats.
  double entropy() const {
    double h = 0.0;
    for (double p : probs) {
      if (p > 0.0) h -= p * std::log(p);
    }
    return h;
  }

  friend bool operator==(const EdgeDistribution&, const EdgeDistribution&) = default;
};

struct GateVector {
  std::vector<std::uint8_t> gates;
  std::size_t sampled = 0;  // index into the operation set

  friend bool operator==(const GateVector&, const GateVector&) = default;
};

/// Pairwise differences of the feedback records: delta_epoch[i][j] = H^e_i - H^e_j,
/// likewise for accuracy. `comparable[i][j]` is false when either op is unseen.
struct DifferentialPair {
  std::size_t num_ops = 0;
  std::vector<double> delta_epoch;  // row-major num_ops x num_ops
  std::vector<double> delta_acc;
  std::vector<bool> comparable;

  double epoch(std::size_t i, std::size_t j) const { return delta_epoch[i * num_ops + j]; }
  double acc(std::size_t i, std::size_t j) const { return delta_acc[i * num_ops + j]; }
  bool active(std::size_t i, std::size_t j) const { return comparable[i * num_ops + j]; }
};

inline EdgeDistribution init_uniform(std::size_t num_ops) {
  if (num_ops == 0) throw std::invalid_argument("an edge needs at least one candidate operation");
  EdgeDistribution d;
  d.probs.assign(num_ops, 1.0 / static_cast<double>(num_ops));
  d.epoch_counts.assign(num_ops, 0);
  d.acc_records.assign(num_ops, 0.0);
  d.seen.assign(num_ops, false);
  return d;
}

inline GateVector make_gate(std::size_t num_ops, std::size_t sampled) {
  if (sampled >= num_ops) throw std::out_of_range("gate index out of range");
  GateVector g;
  g.gates.assign(num_ops, 0);
  g.gates[sampled] = 1;
  g.sampled = sampled;
  return g;
}

/// Draws one operation with probability probs[i]. Consumes exactly one 64-bit
/// value from `rng`; zero-probability operations are never returned.
template <class Rng>
GateVector sample_gate(const EdgeDistribution& dist, Rng& rng) {
  const double u = uniform01(rng);
  std::size_t last_positive = 0;
  double cumulative = 0.0;
  for (std::size_t i = 0; i < dist.probs.size(); ++i) {
    if (dist.probs[i] <= 0.0) continue;
    last_positive = i;
    cumulative += dist.probs[i];
    if (u < cumulative) return make_gate(dist.size(), i);
  }
  return make_gate(dist.size(), last_positive);
}

inline void check_gate(const EdgeDistribution& dist, const GateVector& gate) {
  if (gate.gates.size() != dist.size() || gate.sampled >= dist.size()) {
    throw std::invalid_argument("gate length does not match the distribution");
  }
  std::size_t ones = 0;
  for (std::size_t i = 0; i < gate.gates.size(); ++i) {
    if (gate.gates[i] > 1) throw std::invalid_argument("gate entries must be 0 or 1");
    ones += gate.gates[i];
  }
  if (ones != 1 || gate.gates[gate.sampled] != 1) throw std::invalid_argument("gate is not one-hot");
}

/// Credits one epoch to the sampled operation and stores the accuracy seen.
/// Probabilities are untouched.
inline EdgeDistribution record_feedback(EdgeDistribution dist, const GateVector& gate, double accuracy,
                                        AccAggregation aggregation = AccAggregation::latest) {
  check_gate(dist, gate);
  if (!(accuracy >= 0.0 && accuracy <= 1.0)) {
    throw std::invalid_argument("accuracy must lie in [0, 1]");
  }
  const auto i = gate.sampled;
  const bool first = !dist.seen[i];
  dist.epoch_counts[i] += 1;
  dist.seen[i] = true;
  switch (aggregation) {
    case AccAggregation::latest:
      dist.acc_records[i] = accuracy;
      break;
    case AccAggregation::mean:
      dist.acc_records[i] = first ? accuracy
                                  : dist.acc_records[i] +
                                        (accuracy - dist.acc_records[i]) / static_cast<double>(dist.epoch_counts[i]);
      break;
    case AccAggregation::max:
      dist.acc_records[i] = first ? accuracy : std::max(dist.acc_records[i], accuracy);
      break;
  }
  return dist;
}

inline DifferentialPair differentials(const EdgeDistribution& dist) {
  const auto m = dist.size();
  DifferentialPair d;
  d.num_ops = m;
  d.delta_epoch.resize(m * m);
  d.delta_acc.resize(m * m);
  d.comparable.resize(m * m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      d.delta_epoch[i * m + j] =
          static_cast<double>(dist.epoch_counts[i]) - static_cast<double>(dist.epoch_counts[j]);
      d.delta_acc[i * m + j] = dist.acc_records[i] - dist.acc_records[j];
      d.comparable[i * m + j] = dist.seen[i] && dist.seen[j];
    }
  }
  return d;
}

/// Net dominance count per operation: how many ops it beats (fewer epochs,
/// higher accuracy) minus how many beat it. Always sums to zero.
inline std::vector<std::int64_t> dominance_credits(const DifferentialPair& diff) {
  const auto m = diff.num_ops;
  std::vector<std::int64_t> credit(m, 0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      if (!diff.active(i, j)) continue;
      if (diff.epoch(i, j) < 0 && diff.acc(i, j) > 0) ++credit[i];
      if (diff.epoch(i, j) > 0 && diff.acc(i, j) < 0) --credit[i];
    }
  }
  return credit;
}

/// Pre-projection probability change: alpha * dominance credit.
inline std::vector<double> raw_deltas(const DifferentialPair& diff, double alpha) {
  auto credit = dominance_credits(diff);
  std::vector<double> out(credit.size());
  for (std::size_t i = 0; i < credit.size(); ++i) out[i] = alpha * static_cast<double>(credit[i]);
  return out;
}

/// Maps clamped weights onto {p : sum p = 1, p_i >= floor}: p_i = max(floor, c * w_i).
inline std::vector<double> project_to_floored_simplex(std::vector<double> w, double floor) {
  const auto m = w.size();
  if (static_cast<double>(m) * floor > 1.0) throw std::invalid_argument("probability floor too large");
  std::vector<bool> pinned(m, false);
  for (;;) {
    double free_mass = 0.0;
    std::size_t num_pinned = 0;
    for (std::size_t i = 0; i < m; ++i) {
      if (pinned[i]) ++num_pinned;
      else free_mass += w[i];
    }
    const double scale = (1.0 - static_cast<double>(num_pinned) * floor) / free_mass;
    bool changed = false;
    for (std::size_t i = 0; i < m; ++i) {
      if (!pinned[i] && scale * w[i] < floor) {
        pinned[i] = true;
        changed = true;
      }
    }
    if (changed) continue;
    for (std::size_t i = 0; i < m; ++i) w[i] = pinned[i] ? floor : scale * w[i];
    return w;
  }
}

/// Applies the dominance update p_i += alpha * credit_i, clamps to [floor, 1]
/// and projects back onto the simplex.
inline EdgeDistribution update_probs(EdgeDistribution dist, const DifferentialPair& diff, double alpha,
                                     double floor = kProbabilityFloor) {
  if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be positive");
  if (diff.num_ops != dist.size()) throw std::invalid_argument("differential size mismatch");
  const auto delta = raw_deltas(diff, alpha);
  if (std::all_of(delta.begin(), delta.end(), [](double d) { return d == 0.0; })) return dist;
  std::vector<double> w(dist.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::clamp(dist.probs[i] + delta[i], floor, 1.0);
  dist.probs = project_to_floored_simplex(std::move(w), floor);
  return dist;
}

// {"probs": [...], "epochs": [...], "acc": [...]}
inline nlohmann::json distribution_to_json(const EdgeDistribution& d) {
  return {{"probs", d.probs}, {"epochs", d.epoch_counts}, {"acc", d.acc_records}};
}

inline EdgeDistribution distribution_from_json(const nlohmann::json& j) {
  EdgeDistribution d;
  d.probs = j.at("probs").get<std::vector<double>>();
  d.epoch_counts = j.at("epochs").get<std::vector<std::uint64_t>>();
  d.acc_records = j.at("acc").get<std::vector<double>>();
  if (d.probs.empty() || d.epoch_counts.size() != d.probs.size() || d.acc_records.size() != d.probs.size()) {
    throw std::invalid_argument("distribution snapshot fields must have equal, non-zero length");
  }
  d.seen.resize(d.probs.size());
  for (std::size_t i = 0; i < d.probs.size(); ++i) d.seen[i] = d.epoch_counts[i] > 0;
  return d;
}

inline nlohmann::json snapshot_to_json(const std::vector<EdgeDistribution>& edges) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& e : edges) out.push_back(distribution_to_json(e));
  return out;
}

inline std::vector<EdgeDistribution> snapshot_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw std::invalid_argument("distribution snapshot must be an array");
  std::vector<EdgeDistribution> out;
  for (const auto& e : j) out.push_back(distribution_from_json(e));
  return out;
}

}  // namespace mdenas
