#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "mdenas/distribution.hpp"
#include "mdenas/evaluator.hpp"
#include "mdenas/io.hpp"
#include "mdenas/operations.hpp"
#include "mdenas/search_space.hpp"

namespace mdenas {

/// Invalid or unparsable configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class EvaluatorKind { tabular, surrogate };

struct EvaluatorSpec {
  EvaluatorKind kind = EvaluatorKind::tabular;
  std::uint64_t seed = 1;
  std::optional<std::string> table;  // oracle JSON; generated from `seed` when absent
  double margin = 0.05;
  double interaction = 0.0;
  // surrogate only
  double tau_c = 10.0;
  std::optional<double> rho;
  std::optional<double> rho_final;
  std::optional<double> sigma;
  std::optional<std::size_t> horizon;  // defaults to the run's epoch count

  friend bool operator==(const EvaluatorSpec&, const EvaluatorSpec&) = default;
};

struct SearchConfig {
  std::size_t num_intermediate = 4;
  std::vector<OperationKind> ops = OperationSet::all().kinds();
  std::size_t epochs = 100;
  double alpha = 0.01;
  std::size_t k = 2;
  std::uint64_t seed = 0;
  double convergence_threshold = 0.9;
  bool early_stop = false;
  AccAggregation acc_aggregation = AccAggregation::mean;
  bool exclude_none = false;
  EvaluatorSpec evaluator;
  NetworkTemplate network;
  std::size_t batch_size = 512;  // metadata of the search network

  OperationSet operation_set() const { return OperationSet(ops); }

  void validate() const {
    if (num_intermediate == 0) throw ConfigError("num_intermediate must be at least 1");
    if (ops.empty() || ops.size() > kNumOperationKinds) throw ConfigError("ops must hold 1..8 operations");
    try {
      (void)operation_set();
      network.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    if (epochs == 0) throw ConfigError("epochs must be at least 1");
    if (!(alpha > 0.0)) throw ConfigError("alpha must be positive");
    if (k == 0 || k > 2) throw ConfigError("k must be 1 or 2 (the in-degree of node B1)");
    if (!(convergence_threshold > 0.0 && convergence_threshold <= 1.0)) {
      throw ConfigError("convergence_threshold must lie in (0, 1]");
    }
    if (exclude_none && ops.size() == 1 && ops[0] == OperationKind::none) {
      throw ConfigError("exclude_none_in_genotype leaves no operation to choose");
    }
    const auto& ev = evaluator;
    if (!(ev.margin >= 0.0 && ev.margin < 1.0)) throw ConfigError("evaluator.margin must lie in [0, 1)");
    if (!(ev.interaction >= 0.0 && ev.interaction <= 1.0)) throw ConfigError("evaluator.interaction must lie in [0, 1]");
    if (ev.kind == EvaluatorKind::tabular) {
      if (ev.rho || ev.rho_final || ev.sigma || ev.horizon) {
        throw ConfigError("rho, rho_final, sigma and horizon apply to the surrogate evaluator only");
      }
    } else {
      if (!(ev.tau_c > 0.0)) throw ConfigError("evaluator.tau_c must be positive");
      if (ev.rho && ev.sigma) throw ConfigError("set either evaluator.rho or evaluator.sigma");
      if (ev.rho && !(*ev.rho >= 0.5 && *ev.rho <= 1.0)) throw ConfigError("evaluator.rho must lie in [0.5, 1]");
      if (ev.rho_final && !ev.rho) throw ConfigError("evaluator.rho_final needs evaluator.rho");
      if (ev.rho_final && !(*ev.rho_final >= 0.5 && *ev.rho_final <= 1.0)) {
        throw ConfigError("evaluator.rho_final must lie in [0.5, 1]");
      }
      if (ev.sigma && !(*ev.sigma >= 0.0)) throw ConfigError("evaluator.sigma must be non-negative");
    }
  }

  friend bool operator==(const SearchConfig&, const SearchConfig&) = default;
};

inline nlohmann::json config_to_json(const SearchConfig& c) {
  std::vector<std::string> op_names;
  for (auto op : c.ops) op_names.emplace_back(operation_name(op));
  nlohmann::json ev = {
      {"type", c.evaluator.kind == EvaluatorKind::tabular ? "tabular" : "surrogate"},
      {"seed", c.evaluator.seed},
      {"margin", c.evaluator.margin},
      {"interaction", c.evaluator.interaction},
  };
  if (c.evaluator.table) ev["table"] = *c.evaluator.table;
  if (c.evaluator.kind == EvaluatorKind::surrogate) {
    ev["tau_c"] = c.evaluator.tau_c;
    if (c.evaluator.rho) ev["rho"] = *c.evaluator.rho;
    if (c.evaluator.rho_final) ev["rho_final"] = *c.evaluator.rho_final;
    if (c.evaluator.sigma) ev["sigma"] = *c.evaluator.sigma;
    if (c.evaluator.horizon) ev["horizon"] = *c.evaluator.horizon;
  }
  return {
      {"num_intermediate", c.num_intermediate},
      {"num_ops", c.ops.size()},
      {"ops", op_names},
      {"epochs", c.epochs},
      {"alpha", c.alpha},
      {"k", c.k},
      {"seed", c.seed},
      {"convergence_threshold", c.convergence_threshold},
      {"early_stop", c.early_stop},
      {"acc_aggregation", std::string(acc_aggregation_name(c.acc_aggregation))},
      {"exclude_none_in_genotype", c.exclude_none},
      {"evaluator", ev},
      {"network",
       {{"num_cells", c.network.num_cells},
        {"reduction_positions", c.network.reduction_positions},
        {"initial_channels", c.network.initial_channels},
        {"input_size", c.network.input_size},
        {"batch_size", c.batch_size}}},
  };
}

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& obj, std::string_view where,
                                std::initializer_list<std::string_view> allowed) {
  if (!obj.is_object()) throw ConfigError(fmt::format("{} must be a JSON object", where));
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (auto a : allowed) ok = ok || it.key() == a;
    if (!ok) throw ConfigError(fmt::format("unknown key '{}' in {}", it.key(), where));
  }
}

template <class T>
void read_key(const nlohmann::json& obj, const char* key, T& out, std::string_view where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(fmt::format("{}.{} has the wrong type", where, key));
  }
}

template <class T>
void read_key(const nlohmann::json& obj, const char* key, std::optional<T>& out, std::string_view where) {
  if (!obj.contains(key)) return;
  T value{};
  read_key(obj, key, value, where);
  out = value;
}

// Non-negative integers only; nlohmann would otherwise wrap -1 into a huge size_t.
inline void read_count(const nlohmann::json& obj, const char* key, std::size_t& out, std::string_view where) {
  if (!obj.contains(key)) return;
  const auto& v = obj.at(key);
  if (!v.is_number_unsigned()) throw ConfigError(fmt::format("{}.{} must be a non-negative integer", where, key));
  out = v.get<std::size_t>();
}

inline std::string describe_position(std::string_view text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return fmt::format("line {}, column {}", line, col);
}

}  // namespace detail

inline SearchConfig config_from_json(const nlohmann::json& j) {
  using detail::read_count;
  using detail::read_key;
  detail::reject_unknown_keys(j, "config",
                              {"num_intermediate", "num_ops", "ops", "epochs", "alpha", "k", "seed",
                               "convergence_threshold", "early_stop", "acc_aggregation", "exclude_none_in_genotype", "evaluator",
                               "network"});
  SearchConfig c;
  read_count(j, "num_intermediate", c.num_intermediate, "config");
  std::optional<std::size_t> num_ops;
  if (j.contains("num_ops")) {
    std::size_t n = 0;
    read_count(j, "num_ops", n, "config");
    num_ops = n;
  }
  if (j.contains("ops")) {
    std::vector<std::string> names;
    read_key(j, "ops", names, "config");
    c.ops.clear();
    for (const auto& n : names) {
      auto op = find_operation(n);
      if (!op) throw ConfigError(fmt::format("config.ops: unknown operation '{}'", n));
      c.ops.push_back(*op);
    }
    if (num_ops && *num_ops != c.ops.size()) throw ConfigError("config.num_ops disagrees with config.ops");
  } else if (num_ops) {
    if (*num_ops == 0 || *num_ops > kNumOperationKinds) throw ConfigError("config.num_ops must lie in [1, 8]");
    auto set = OperationSet::first(*num_ops);
    c.ops.assign(set.kinds().begin(), set.kinds().end());
  }
  read_count(j, "epochs", c.epochs, "config");
  read_key(j, "alpha", c.alpha, "config");
  read_count(j, "k", c.k, "config");
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) throw ConfigError("config.seed must be a non-negative integer");
    c.seed = j["seed"].get<std::uint64_t>();
  }
  read_key(j, "convergence_threshold", c.convergence_threshold, "config");
  read_key(j, "early_stop", c.early_stop, "config");
  read_key(j, "exclude_none_in_genotype", c.exclude_none, "config");
  if (j.contains("acc_aggregation")) {
    std::string name;
    read_key(j, "acc_aggregation", name, "config");
    try {
      c.acc_aggregation = parse_acc_aggregation(name);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  if (j.contains("evaluator")) {
    const auto& ev = j["evaluator"];
    detail::reject_unknown_keys(ev, "evaluator",
                                {"type", "seed", "table", "margin", "interaction", "tau_c", "rho", "rho_final",
                                 "sigma", "horizon"});
    auto& e = c.evaluator;
    if (ev.contains("type")) {
      std::string type;
      read_key(ev, "type", type, "evaluator");
      if (type == "tabular") e.kind = EvaluatorKind::tabular;
      else if (type == "surrogate") e.kind = EvaluatorKind::surrogate;
      else throw ConfigError(fmt::format("evaluator.type: unknown evaluator '{}'", type));
    }
    if (ev.contains("seed")) {
      if (!ev["seed"].is_number_unsigned()) throw ConfigError("evaluator.seed must be a non-negative integer");
      e.seed = ev["seed"].get<std::uint64_t>();
    }
    read_key(ev, "table", e.table, "evaluator");
    read_key(ev, "margin", e.margin, "evaluator");
    read_key(ev, "interaction", e.interaction, "evaluator");
    read_key(ev, "tau_c", e.tau_c, "evaluator");
    read_key(ev, "rho", e.rho, "evaluator");
    read_key(ev, "rho_final", e.rho_final, "evaluator");
    read_key(ev, "sigma", e.sigma, "evaluator");
    if (ev.contains("horizon")) {
      std::size_t h = 0;
      read_count(ev, "horizon", h, "evaluator");
      e.horizon = h;
    }
  }
  if (j.contains("network")) {
    const auto& net = j["network"];
    detail::reject_unknown_keys(net, "network",
                                {"num_cells", "reduction_positions", "initial_channels", "input_size", "batch_size"});
    read_count(net, "num_cells", c.network.num_cells, "network");
    read_key(net, "reduction_positions", c.network.reduction_positions, "network");
    read_count(net, "initial_channels", c.network.initial_channels, "network");
    read_count(net, "input_size", c.network.input_size, "network");
    read_count(net, "batch_size", c.batch_size, "network");
  }
  c.validate();
  return c;
}

/// Parses config text; syntax errors carry their line and column.
inline SearchConfig parse_config(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(fmt::format("config parse error at {}: {}", detail::describe_position(text, e.byte == 0 ? 0 : e.byte - 1), e.what()));
  }
  return config_from_json(j);
}

inline SearchConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const InputError& e) {
    throw ConfigError(e.what());
  }
  auto config = parse_config(text);
  // Relative oracle tables resolve against the config's directory.
  if (config.evaluator.table && std::filesystem::path(*config.evaluator.table).is_relative()) {
    config.evaluator.table = (path.parent_path() / *config.evaluator.table).lexically_normal().string();
  }
  return config;
}

inline TabularOracle make_oracle(const SearchConfig& c) {
  const auto ops = c.operation_set();
  if (!c.evaluator.table) {
    return TabularOracle::random(c.num_intermediate, ops, 2, c.evaluator.seed, c.evaluator.margin,
                                 c.evaluator.interaction);
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(*c.evaluator.table));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("oracle table '{}': {}", *c.evaluator.table, e.what()));
  } catch (const InputError& e) {
    throw ConfigError(e.what());
  }
  try {
    auto oracle = TabularOracle::from_json(j);
    if (oracle.num_intermediate() != c.num_intermediate || oracle.num_cells() != 2 || !(oracle.operations() == ops)) {
      throw ConfigError("oracle table does not match num_intermediate/ops or lacks a reduction cell");
    }
    return oracle;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("oracle table '{}': {}", *c.evaluator.table, e.what()));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(fmt::format("oracle table '{}': {}", *c.evaluator.table, e.what()));
  }
}

inline AnyEvaluator make_evaluator(const SearchConfig& c) {
  auto oracle = make_oracle(c);
  if (c.evaluator.kind == EvaluatorKind::tabular) return AnyEvaluator(std::move(oracle));
  SurrogateParams p;
  p.tau_c = c.evaluator.tau_c;
  p.sigma = c.evaluator.sigma;
  p.rho = c.evaluator.sigma ? std::nullopt : std::optional<double>(c.evaluator.rho.value_or(1.0));
  p.rho_final = c.evaluator.rho_final;
  p.horizon = c.evaluator.horizon.value_or(c.epochs);
  p.seed = derive_seed({c.evaluator.seed, 0x73757272ULL});
  try {
    return AnyEvaluator(SurrogateCurveEvaluator(std::move(oracle), p));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

}  // namespace mdenas
