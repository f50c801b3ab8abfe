#pragma once

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>
#include <nlohmann/json.hpp>

#include "mdenas/operations.hpp"

namespace mdenas {

enum class CellKind { norm, reduction };

inline std::string_view cell_kind_name(CellKind kind) noexcept {
  return kind == CellKind::norm ? "norm" : "reduction";
}

inline CellKind parse_cell_kind(std::string_view name) {
  if (name == "norm") return CellKind::norm;
  if (name == "reduction") return CellKind::reduction;
  throw std::invalid_argument("unknown cell kind '" + std::string(name) + "'");
}

enum class NodeRole { input, intermediate, output };

/// A vertex of a cell DAG. `index` is 0-based within its role; the textual
/// form is 1-based ("I1", "I2", "B3").
struct NodeId {
  NodeRole role = NodeRole::input;
  std::size_t index = 0;

  static constexpr NodeId input(std::size_t i) { return {NodeRole::input, i}; }
  static constexpr NodeId intermediate(std::size_t i) { return {NodeRole::intermediate, i}; }
  static constexpr NodeId output() { return {NodeRole::output, 0}; }

  // Topological position: inputs first, then intermediates, then the output.
  constexpr std::size_t order() const noexcept {
    switch (role) {
      case NodeRole::input: return index;
      case NodeRole::intermediate: return 2 + index;
      case NodeRole::output: break;
    }
    return static_cast<std::size_t>(-1);
  }

  std::string label() const {
    switch (role) {
      case NodeRole::input: return "I" + std::to_string(index + 1);
      case NodeRole::intermediate: return "B" + std::to_string(index + 1);
      case NodeRole::output: break;
    }
    return "O";
  }

  static NodeId parse(std::string_view text) {
    if (text == "O") return output();
    if (text.size() >= 2 && (text[0] == 'I' || text[0] == 'B')) {
      std::size_t value = 0;
      for (char c : text.substr(1)) {
        if (c < '0' || c > '9') throw std::invalid_argument("bad node label '" + std::string(text) + "'");
        value = value * 10 + static_cast<std::size_t>(c - '0');
      }
      if (value >= 1 && (text[0] == 'B' || value <= 2)) {
        return text[0] == 'I' ? input(value - 1) : intermediate(value - 1);
      }
    }
    throw std::invalid_argument("bad node label '" + std::string(text) + "'");
  }

  friend constexpr bool operator==(const NodeId&, const NodeId&) = default;
  friend constexpr auto operator<=>(const NodeId& a, const NodeId& b) noexcept {
    return a.order() <=> b.order();
  }
};

struct Edge {
  NodeId src;
  NodeId dst;  // always an intermediate node

  friend constexpr bool operator==(const Edge&, const Edge&) = default;
};

/// Number of candidate edges in a cell with `num_intermediate` nodes: node
/// B_i (1-based) receives one edge from each input and each earlier B_j.
constexpr std::size_t cell_edge_count(std::size_t num_intermediate) noexcept {
  return num_intermediate * (num_intermediate + 3) / 2;
}

class CellTemplate {
 public:
  CellTemplate(std::size_t num_intermediate, CellKind kind)
      : num_intermediate_(num_intermediate), kind_(kind) {
    if (num_intermediate == 0) {
      throw std::invalid_argument("a cell needs at least one intermediate node");
    }
    // Sorted by (dst, src).
    for (std::size_t b = 0; b < num_intermediate; ++b) {
      node_first_edge_.push_back(edges_.size());
      edges_.push_back({NodeId::input(0), NodeId::intermediate(b)});
      edges_.push_back({NodeId::input(1), NodeId::intermediate(b)});
      for (std::size_t j = 0; j < b; ++j) {
        edges_.push_back({NodeId::intermediate(j), NodeId::intermediate(b)});
      }
    }
    node_first_edge_.push_back(edges_.size());
  }

  std::size_t num_intermediate() const noexcept { return num_intermediate_; }
  CellKind kind() const noexcept { return kind_; }
  std::span<const Edge> edges() const noexcept { return edges_; }
  std::size_t num_edges() const noexcept { return edges_.size(); }
  /// Inputs + intermediates + output.
  std::size_t num_nodes() const noexcept { return num_intermediate_ + 3; }

  /// Edge indices [first, last) entering intermediate node `node` (0-based).
  std::pair<std::size_t, std::size_t> incoming(std::size_t node) const {
    if (node >= num_intermediate_) throw std::out_of_range("intermediate node out of range");
    return {node_first_edge_[node], node_first_edge_[node + 1]};
  }

  std::size_t in_degree(std::size_t node) const { return node + 2; }
  std::size_t min_in_degree() const noexcept { return 2; }

  std::optional<std::size_t> find_edge(NodeId src, NodeId dst) const noexcept {
    for (std::size_t e = 0; e < edges_.size(); ++e) {
      if (edges_[e].src == src && edges_[e].dst == dst) return e;
    }
    return std::nullopt;
  }

 private:
  std::size_t num_intermediate_;
  CellKind kind_;
  std::vector<Edge> edges_;
  std::vector<std::size_t> node_first_edge_;
};

inline CellTemplate build_cell_template(std::size_t num_intermediate, CellKind kind) {
  return CellTemplate(num_intermediate, kind);
}

using BigInt = boost::multiprecision::cpp_int;

/// Two cell kinds, each with num_ops^|edges| operation assignments.
inline BigInt search_space_size(std::size_t num_intermediate, std::size_t num_ops) {
  if (num_intermediate == 0 || num_ops == 0) {
    throw std::invalid_argument("search_space_size needs positive arguments");
  }
  BigInt per_cell = boost::multiprecision::pow(BigInt(num_ops),
                                               static_cast<unsigned>(cell_edge_count(num_intermediate)));
  return 2 * per_cell;
}

struct GenotypeChoice {
  NodeId src;
  OperationKind op;

  friend bool operator==(const GenotypeChoice&, const GenotypeChoice&) = default;
};

/// Discrete cell: for every intermediate node B1..BN, its kept (src, op) inputs
/// in ascending edge order.
struct Genotype {
  CellKind kind = CellKind::norm;
  std::vector<std::vector<GenotypeChoice>> nodes;

  friend bool operator==(const Genotype&, const Genotype&) = default;
};

struct GenotypeOptions {
  std::size_t k = 2;
  bool exclude_none = false;
};

namespace detail {

struct EdgePick {
  std::size_t op_index = 0;
  double prob = 0.0;
};

// Highest-valued admissible column; ties go to the lowest operation id.
inline EdgePick best_column(std::span<const double> row, const OperationSet& ops, bool exclude_none) {
  EdgePick best{ops.size(), -1.0};
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (exclude_none && ops[i] == OperationKind::none) continue;
    const bool tie_wins = row[i] == best.prob && operation_id(ops[i]) < operation_id(ops[best.op_index]);
    if (row[i] > best.prob || tie_wins) best = {i, row[i]};
  }
  if (best.op_index == ops.size()) {
    throw std::invalid_argument("no admissible operation on edge (only 'none' available)");
  }
  return best;
}

// Shared by derive_genotype and the oracle's best_genotype: `table` holds one
// row per template edge (probabilities or qualities).
inline Genotype select_genotype(const CellTemplate& cell, std::span<const std::vector<double>> table,
                                const OperationSet& ops, const GenotypeOptions& options) {
  Genotype g{cell.kind(), {}};
  std::vector<EdgePick> picks;
  picks.reserve(table.size());
  for (const auto& row : table) picks.push_back(best_column(row, ops, options.exclude_none));

  for (std::size_t node = 0; node < cell.num_intermediate(); ++node) {
    auto [first, last] = cell.incoming(node);
    std::vector<std::size_t> order;
    for (std::size_t e = first; e < last; ++e) order.push_back(e);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return picks[a].prob > picks[b].prob;
    });
    order.resize(options.k);
    std::sort(order.begin(), order.end());
    std::vector<GenotypeChoice> choices;
    for (auto e : order) choices.push_back({cell.edges()[e].src, ops[picks[e].op_index]});
    g.nodes.push_back(std::move(choices));
  }
  return g;
}

inline void check_k(const CellTemplate& cell, std::size_t k) {
  if (k == 0) throw std::invalid_argument("k must be at least 1");
  if (k > cell.min_in_degree()) {
    throw std::invalid_argument("k = " + std::to_string(k) + " exceeds the in-degree " +
                                std::to_string(cell.min_in_degree()) + " of node B1");
  }
}

}  // namespace detail

/// Keeps, for every intermediate node, the `k` incoming edges whose largest
/// operation probability is highest, each with its most probable operation.
/// Ties resolve to the lower edge index, then the lower operation index.
inline Genotype derive_genotype(const CellTemplate& cell, std::span<const std::vector<double>> probs,
                                const OperationSet& ops, const GenotypeOptions& options = {}) {
  detail::check_k(cell, options.k);
  if (probs.size() != cell.num_edges()) {
    throw std::invalid_argument("expected " + std::to_string(cell.num_edges()) +
                                " probability vectors, got " + std::to_string(probs.size()));
  }
  for (const auto& row : probs) {
    if (row.size() != ops.size()) {
      throw std::invalid_argument("probability vector length does not match the operation set");
    }
    double sum = 0.0;
    for (double p : row) {
      if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("probability outside [0, 1]");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-6) throw std::invalid_argument("probability vector does not sum to 1");
  }
  return detail::select_genotype(cell, probs, ops, options);
}

/// Edge index of every choice in `g`, in node order.
inline std::vector<std::size_t> genotype_edges(const CellTemplate& cell, const Genotype& g) {
  std::vector<std::size_t> out;
  for (std::size_t node = 0; node < g.nodes.size(); ++node) {
    for (const auto& c : g.nodes[node]) {
      auto e = cell.find_edge(c.src, NodeId::intermediate(node));
      if (!e) throw std::invalid_argument("genotype edge " + c.src.label() + "->B" + std::to_string(node + 1) + " not in template");
      out.push_back(*e);
    }
  }
  return out;
}

/// Stacked-network description. Metadata only: nothing here is executed.
struct NetworkTemplate {
  std::size_t num_cells = 6;
  std::vector<std::size_t> reduction_positions = {1, 2};
  std::size_t initial_channels = 16;
  std::size_t input_size = 32;

  void validate() const {
    if (num_cells == 0) throw std::invalid_argument("network needs at least one cell");
    for (auto pos : reduction_positions) {
      if (pos >= num_cells) {
        throw std::invalid_argument("reduction position " + std::to_string(pos) + " outside [0, " +
                                    std::to_string(num_cells) + ")");
      }
    }
  }

  CellKind kind_at(std::size_t position) const {
    return std::find(reduction_positions.begin(), reduction_positions.end(), position) !=
                   reduction_positions.end()
               ? CellKind::reduction
               : CellKind::norm;
  }

  // Channels double at every reduction cell.
  std::vector<std::size_t> channel_plan() const {
    std::vector<std::size_t> out;
    std::size_t c = initial_channels;
    for (std::size_t i = 0; i < num_cells; ++i) {
      if (kind_at(i) == CellKind::reduction) c *= 2;
      out.push_back(c);
    }
    return out;
  }

  friend bool operator==(const NetworkTemplate&, const NetworkTemplate&) = default;
};

// JSON: {"kind": "norm", "nodes": [[["I1", "sep_conv_3x3"], ["B1", "skip_connect"]], ...]}
inline nlohmann::json genotype_to_json(const Genotype& g) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& node : g.nodes) {
    nlohmann::json choices = nlohmann::json::array();
    for (const auto& c : node) {
      choices.push_back(nlohmann::json::array({c.src.label(), std::string(operation_name(c.op))}));
    }
    nodes.push_back(std::move(choices));
  }
  return {{"kind", std::string(cell_kind_name(g.kind))}, {"nodes", std::move(nodes)}};
}

inline Genotype genotype_from_json(const nlohmann::json& j) {
  Genotype g;
  g.kind = parse_cell_kind(j.at("kind").get<std::string>());
  for (const auto& node : j.at("nodes")) {
    std::vector<GenotypeChoice> choices;
    for (const auto& pair : node) {
      if (!pair.is_array() || pair.size() != 2) throw std::invalid_argument("genotype choice must be [src, op]");
      choices.push_back({NodeId::parse(pair[0].get<std::string>()), parse_operation(pair[1].get<std::string>())});
    }
    g.nodes.push_back(std::move(choices));
  }
  return g;
}

}  // namespace mdenas
