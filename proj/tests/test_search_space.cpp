#include <algorithm>
#include <random>
#include <tuple>

#include <gtest/gtest.h>

#include "mdenas/search_space.hpp"

namespace mdenas {
namespace {

TEST(OperationSet, CanonicalNamesAreABijectionOntoIds) {
  ASSERT_EQ(kOperationNames.size(), 8u);
  for (std::size_t i = 0; i < kNumOperationKinds; ++i) {
    auto op = operation_from_id(i);
    EXPECT_EQ(operation_id(op), i);
    EXPECT_EQ(parse_operation(operation_name(op)), op);
  }
  EXPECT_EQ(operation_name(OperationKind::none), "none");
  EXPECT_EQ(operation_name(OperationKind::sep_conv_5x5), "sep_conv_5x5");
  EXPECT_THROW(parse_operation("conv_7x7"), std::invalid_argument);
  EXPECT_THROW(operation_from_id(8), std::out_of_range);
}

TEST(OperationSet, RejectsDuplicatesAndEmpty) {
  EXPECT_THROW(OperationSet({}), std::invalid_argument);
  EXPECT_THROW(OperationSet({OperationKind::none, OperationKind::none}), std::invalid_argument);
  EXPECT_THROW(OperationSet::first(0), std::invalid_argument);
  EXPECT_THROW(OperationSet::first(9), std::invalid_argument);
  EXPECT_EQ(OperationSet::first(3).size(), 3u);
}

TEST(CellTemplate, DefaultCellHasFourteenEdgesAndSevenNodes) {
  auto cell = build_cell_template(4, CellKind::norm);
  EXPECT_EQ(cell.num_edges(), 14u);
  EXPECT_EQ(cell.num_nodes(), 7u);
}

TEST(CellTemplate, SmallestCellConnectsBothInputsToB1) {
  auto cell = build_cell_template(1, CellKind::norm);
  ASSERT_EQ(cell.num_edges(), 2u);
  EXPECT_EQ(cell.edges()[0], (Edge{NodeId::input(0), NodeId::intermediate(0)}));
  EXPECT_EQ(cell.edges()[1], (Edge{NodeId::input(1), NodeId::intermediate(0)}));
}

TEST(CellTemplate, ThreeNodeReductionCell) {
  auto cell = build_cell_template(3, CellKind::reduction);
  EXPECT_EQ(cell.num_edges(), 9u);
  EXPECT_EQ(cell.kind(), CellKind::reduction);
}

TEST(CellTemplate, RejectsEmptyCell) {
  EXPECT_THROW(build_cell_template(0, CellKind::norm), std::invalid_argument);
}

// Enumerate every (src, dst) pair in topological order and keep the legal ones.
TEST(CellTemplate, EdgeCountLawMatchesEnumeration) {
  for (std::size_t n = 1; n <= 8; ++n) {
    std::size_t enumerated = 0;
    for (std::size_t dst = 0; dst < n; ++dst) {
      for (std::size_t src = 0; src < 2 + n; ++src) {
        if (src < 2 || src - 2 < dst) ++enumerated;
      }
    }
    auto cell = build_cell_template(n, CellKind::norm);
    EXPECT_EQ(cell.num_edges(), enumerated) << n;
    EXPECT_EQ(cell.num_edges(), n * (n + 3) / 2) << n;
  }
}

TEST(CellTemplate, EdgesSortedByDestinationThenSourceAndTopological) {
  auto cell = build_cell_template(5, CellKind::norm);
  auto edges = cell.edges();
  for (std::size_t i = 0; i < edges.size(); ++i) {
    EXPECT_EQ(edges[i].dst.role, NodeRole::intermediate);
    EXPECT_LT(edges[i].src.order(), edges[i].dst.order());
    if (i > 0) {
      EXPECT_TRUE(std::tie(edges[i - 1].dst, edges[i - 1].src) < std::tie(edges[i].dst, edges[i].src));
    }
  }
  for (std::size_t b = 0; b < 5; ++b) {
    auto [first, last] = cell.incoming(b);
    EXPECT_EQ(last - first, b + 2);
    EXPECT_EQ(cell.in_degree(b), b + 2);
  }
}

TEST(SearchSpace, PaperSizeIsTwoTimesEightToTheFourteenth) {
  EXPECT_EQ(search_space_size(4, 8), BigInt("8796093022208"));
  EXPECT_EQ(search_space_size(1, 1), 2);
}

TEST(SearchSpace, SizeMatchesExhaustiveEnumeration) {
  for (std::size_t n = 1; n <= 3; ++n) {
    for (std::size_t m = 1; m <= 4; ++m) {
      const auto edges = cell_edge_count(n);
      // Count assignments with an odometer over edges x ops.
      std::vector<std::size_t> digits(edges, 0);
      std::uint64_t count = 0;
      for (;;) {
        ++count;
        std::size_t i = 0;
        while (i < edges && ++digits[i] == m) digits[i++] = 0;
        if (i == edges) break;
      }
      EXPECT_EQ(search_space_size(n, m), BigInt(2 * count)) << n << "," << m;
    }
  }
  EXPECT_EQ(search_space_size(2, 3), 486);
}

TEST(SearchSpace, SizeIsExactForLargeSpaces) {
  for (std::size_t n = 1; n <= 6; ++n) {
    for (std::size_t m = 1; m <= 8; ++m) {
      BigInt expected = 2;
      for (std::size_t e = 0; e < cell_edge_count(n); ++e) expected *= m;
      EXPECT_EQ(search_space_size(n, m), expected);
    }
  }
  EXPECT_THROW(search_space_size(0, 8), std::invalid_argument);
}

std::vector<std::vector<double>> uniform_probs(std::size_t edges, std::size_t m) {
  return std::vector<std::vector<double>>(edges, std::vector<double>(m, 1.0 / static_cast<double>(m)));
}

TEST(DeriveGenotype, UniformProbabilitiesPickFirstEdgesAndFirstOp) {
  auto cell = build_cell_template(4, CellKind::norm);
  auto ops = OperationSet::all();
  auto g = derive_genotype(cell, uniform_probs(14, 8), ops, {2, false});
  ASSERT_EQ(g.nodes.size(), 4u);
  for (std::size_t b = 0; b < 4; ++b) {
    ASSERT_EQ(g.nodes[b].size(), 2u);
    EXPECT_EQ(g.nodes[b][0].src, NodeId::input(0));
    EXPECT_EQ(g.nodes[b][1].src, NodeId::input(1));
    EXPECT_EQ(g.nodes[b][0].op, OperationKind::max_pool_3x3);
  }
}

TEST(DeriveGenotype, OperationTiesGoToLowestOperationId) {
  auto cell = build_cell_template(1, CellKind::norm);
  OperationSet ops({OperationKind::sep_conv_5x5, OperationKind::skip_connect, OperationKind::avg_pool_3x3});
  auto g = derive_genotype(cell, uniform_probs(2, 3), ops, {1, false});
  EXPECT_EQ(g.nodes[0][0].op, OperationKind::avg_pool_3x3);
}

TEST(DeriveGenotype, DegenerateDistributionsAreFollowed) {
  auto cell = build_cell_template(4, CellKind::norm);
  auto ops = OperationSet::all();
  auto probs = uniform_probs(14, 8);
  // Last incoming edge of every node is certain of sep_conv_3x3.
  for (std::size_t b = 0; b < 4; ++b) {
    auto e = cell.incoming(b).second - 1;
    probs[e].assign(8, 0.0);
    probs[e][operation_id(OperationKind::sep_conv_3x3)] = 1.0;
  }
  auto g = derive_genotype(cell, probs, ops, {1, false});
  for (std::size_t b = 0; b < 4; ++b) {
    ASSERT_EQ(g.nodes[b].size(), 1u);
    EXPECT_EQ(g.nodes[b][0].op, OperationKind::sep_conv_3x3);
    EXPECT_EQ(g.nodes[b][0].src, cell.edges()[cell.incoming(b).second - 1].src);
  }
}

std::vector<std::vector<double>> random_simplex_rows(std::size_t rows, std::size_t m, std::mt19937_64& rng,
                                                     bool coarse) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> small(1, 4);
  std::vector<std::vector<double>> out(rows, std::vector<double>(m));
  for (auto& row : out) {
    double s = 0.0;
    for (auto& v : row) s += (v = coarse ? small(rng) : u(rng));
    for (auto& v : row) v /= s;
  }
  return out;
}

// Brute-force comparator: list every (edge, op) and sort with the full key.
Genotype sorting_oracle(const CellTemplate& cell, const std::vector<std::vector<double>>& probs,
                        const OperationSet& ops, std::size_t k) {
  Genotype g{cell.kind(), {}};
  for (std::size_t b = 0; b < cell.num_intermediate(); ++b) {
    auto [first, last] = cell.incoming(b);
    std::vector<std::tuple<double, std::size_t, std::size_t>> best;  // (-max, edge, op)
    for (auto e = first; e < last; ++e) {
      std::vector<std::pair<double, std::size_t>> row;
      for (std::size_t i = 0; i < probs[e].size(); ++i) row.emplace_back(-probs[e][i], i);
      std::sort(row.begin(), row.end());
      best.emplace_back(row[0].first, e, row[0].second);
    }
    std::sort(best.begin(), best.end());
    best.resize(k);
    std::sort(best.begin(), best.end(), [](auto& a, auto& b) { return std::get<1>(a) < std::get<1>(b); });
    std::vector<GenotypeChoice> choices;
    for (auto& [p, e, i] : best) choices.push_back({cell.edges()[e].src, ops[i]});
    g.nodes.push_back(choices);
  }
  return g;
}

TEST(DeriveGenotype, MatchesSortingOracleOnRandomDistributions) {
  std::mt19937_64 rng(42);
  auto ops = OperationSet::all();
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + trial % 6;
    const std::size_t k = 1 + trial % 2;
    auto cell = build_cell_template(n, CellKind::norm);
    auto probs = random_simplex_rows(cell.num_edges(), 8, rng, trial % 3 == 0);
    EXPECT_EQ(derive_genotype(cell, probs, ops, {k, false}), sorting_oracle(cell, probs, ops, k)) << trial;
  }
}

TEST(DeriveGenotype, IsDeterministicAndMembersExistInTemplate) {
  std::mt19937_64 rng(7);
  auto cell = build_cell_template(4, CellKind::reduction);
  auto ops = OperationSet::first(5);
  auto probs = random_simplex_rows(14, 5, rng, false);
  auto a = derive_genotype(cell, probs, ops);
  auto b = derive_genotype(cell, probs, ops);
  EXPECT_EQ(a, b);
  EXPECT_EQ(genotype_to_json(a).dump(), genotype_to_json(b).dump());
  auto edges = genotype_edges(cell, a);
  EXPECT_EQ(edges.size(), 8u);
  for (std::size_t b2 = 0; b2 < 4; ++b2) {
    for (const auto& c : a.nodes[b2]) EXPECT_TRUE(ops.index_of(c.op).has_value());
  }
}

TEST(DeriveGenotype, ExcludeNoneSkipsTheZeroOperation) {
  auto cell = build_cell_template(1, CellKind::norm);
  auto ops = OperationSet::first(3);  // max_pool, none, avg_pool
  std::vector<std::vector<double>> probs = {{0.2, 0.7, 0.1}, {0.3, 0.3, 0.4}};
  auto keep = derive_genotype(cell, probs, ops, {2, false});
  EXPECT_EQ(keep.nodes[0][0].op, OperationKind::none);
  auto drop = derive_genotype(cell, probs, ops, {2, true});
  EXPECT_EQ(drop.nodes[0][0].op, OperationKind::max_pool_3x3);
  EXPECT_EQ(drop.nodes[0][1].op, OperationKind::avg_pool_3x3);
}

TEST(DeriveGenotype, RejectsBadInputs) {
  auto cell = build_cell_template(2, CellKind::norm);
  auto ops = OperationSet::first(2);
  auto probs = uniform_probs(5, 2);
  EXPECT_THROW(derive_genotype(cell, probs, ops, {3, false}), std::invalid_argument);
  EXPECT_THROW(derive_genotype(cell, probs, ops, {0, false}), std::invalid_argument);
  EXPECT_THROW(derive_genotype(cell, uniform_probs(4, 2), ops), std::invalid_argument);
  EXPECT_THROW(derive_genotype(cell, uniform_probs(5, 3), ops), std::invalid_argument);
  probs[2] = {0.9, 0.3};
  EXPECT_THROW(derive_genotype(cell, probs, ops), std::invalid_argument);
  probs[2] = {1.5, -0.5};
  EXPECT_THROW(derive_genotype(cell, probs, ops), std::invalid_argument);
}

TEST(GenotypeJson, MatchesDocumentedLayoutAndRoundTrips) {
  Genotype g{CellKind::reduction,
             {{{NodeId::input(0), OperationKind::sep_conv_3x3}, {NodeId::input(1), OperationKind::skip_connect}},
              {{NodeId::input(1), OperationKind::max_pool_3x3}, {NodeId::intermediate(0), OperationKind::none}}}};
  auto j = genotype_to_json(g);
  EXPECT_EQ(j.dump(),
            R"({"kind":"reduction","nodes":[[["I1","sep_conv_3x3"],["I2","skip_connect"]],)"
            R"([["I2","max_pool_3x3"],["B1","none"]]]})");
  EXPECT_EQ(genotype_from_json(j), g);
  EXPECT_THROW(NodeId::parse("I3"), std::invalid_argument);
  EXPECT_THROW(NodeId::parse("B0"), std::invalid_argument);
}

TEST(NetworkTemplate, ValidatesReductionPositionsAndPlansChannels) {
  NetworkTemplate net;
  EXPECT_NO_THROW(net.validate());
  EXPECT_EQ(net.channel_plan(), (std::vector<std::size_t>{16, 32, 64, 64, 64, 64}));
  net.reduction_positions = {6};
  EXPECT_THROW(net.validate(), std::invalid_argument);
}

}  // namespace
}  // namespace mdenas
