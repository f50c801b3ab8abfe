#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "mdenas/evaluator.hpp"

namespace mdenas {
namespace {

TabularOracle constant_oracle(std::size_t n, std::size_t m, std::size_t cells, double value) {
  const auto rows = cells * cell_edge_count(n);
  return TabularOracle(n, OperationSet::first(m), std::vector<std::vector<double>>(rows, std::vector<double>(m, value)));
}

TEST(TabularOracle, ConstantTableScoresEveryArchitectureTheSame) {
  auto oracle = constant_oracle(4, 8, 1, 1.0);
  std::mt19937_64 rng(1);
  for (int i = 0; i < 50; ++i) {
    EXPECT_EQ(evaluate(oracle, random_architecture(14, oracle.operations(), rng), 1 + i), 1.0);
  }
}

TEST(TabularOracle, ScoreIsMeanOfTableEntries) {
  auto oracle = TabularOracle::random(4, OperationSet::all(), 1, 17);
  std::mt19937_64 rng(2);
  auto arch = random_architecture(14, oracle.operations(), rng);
  double expected = 0.0;
  for (std::size_t e = 0; e < 14; ++e) expected += oracle.table()[e][operation_id(arch.ops[e])];
  EXPECT_NEAR(oracle.true_score(arch), expected / 14.0, 1e-15);
  EXPECT_EQ(evaluate(oracle, arch, 3), evaluate(oracle, arch, 90));
}

TEST(TabularOracle, RandomTablesHonourTheArgmaxMargin) {
  auto oracle = TabularOracle::random(4, OperationSet::all(), 2, 5, 0.05);
  ASSERT_EQ(oracle.num_edges(), 28u);
  for (const auto& row : oracle.table()) {
    auto sorted = row;
    std::sort(sorted.rbegin(), sorted.rend());
    EXPECT_GE(sorted[0] - sorted[1], 0.05 - 1e-12);
    EXPECT_LE(sorted[0], 1.0);
  }
}

TEST(TabularOracle, RejectsWrongEdgeCountAndForeignOps) {
  auto oracle = TabularOracle::random(2, OperationSet::first(4), 2, 1);
  EXPECT_THROW(evaluate(oracle, ArchitectureSample{std::vector<OperationKind>(9, OperationKind::none)}, 1),
               EvaluatorError);
  EXPECT_THROW(evaluate(oracle, ArchitectureSample{std::vector<OperationKind>(10, OperationKind::sep_conv_5x5)}, 1),
               EvaluatorError);
  EXPECT_THROW(evaluate(oracle, ArchitectureSample{std::vector<OperationKind>(10, OperationKind::none)}, 0),
               EvaluatorError);
  EXPECT_THROW(TabularOracle(2, OperationSet::first(2), {{0.5, 0.5}}), std::invalid_argument);
  EXPECT_THROW(TabularOracle(1, OperationSet::first(1), {{0.5}, {1.5}}), std::invalid_argument);
}

TEST(TabularOracle, JsonFixtureRoundTrips) {
  auto j = nlohmann::json::parse(R"({"num_intermediate": 1, "ops": ["none", "skip_connect"], "q": [[0.1, 0.9], [0.7, 0.3]]})");
  auto oracle = TabularOracle::from_json(j);
  EXPECT_EQ(oracle.num_cells(), 1u);
  EXPECT_NEAR(oracle.true_score({{OperationKind::skip_connect, OperationKind::none}}), 0.8, 1e-15);
  EXPECT_EQ(TabularOracle::from_json(oracle.to_json()).table(), oracle.table());
  EXPECT_THROW(TabularOracle::from_json(nlohmann::json::parse(R"({"num_intermediate":1,"ops":["none"],"q":[[0],[0]],"x":1})")),
               std::invalid_argument);
}

TEST(TabularOracle, InteractionVariantIsNonSeparableButBounded) {
  auto sep = TabularOracle::random(2, OperationSet::first(4), 2, 9, 0.05, 0.0);
  auto mixed = TabularOracle::random(2, OperationSet::first(4), 2, 9, 0.05, 0.5);
  EXPECT_EQ(sep.table(), mixed.table());
  std::mt19937_64 rng(4);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    auto a = random_architecture(10, sep.operations(), rng);
    const double s = mixed.true_score(a);
    EXPECT_GE(s, 0.0);
    EXPECT_LE(s, 1.0);
    differs = differs || std::abs(s - sep.true_score(a)) > 1e-9;
  }
  EXPECT_TRUE(differs);
  EXPECT_EQ(TabularOracle::from_json(mixed.to_json()).fingerprint(), mixed.fingerprint());
}

TEST(BestGenotype, UniqueArgmaxesAreChosen) {
  auto oracle = TabularOracle::random(4, OperationSet::all(), 2, 3, 0.1);
  auto g = best_genotype(oracle, 1, CellKind::reduction);
  CellTemplate cell(4, CellKind::reduction);
  auto edges = genotype_edges(cell, g);
  for (std::size_t b = 0; b < 4; ++b) {
    const auto& row = oracle.table()[14 + edges[b]];
    auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    EXPECT_EQ(operation_id(g.nodes[b][0].op), best);
  }
}

TEST(BestGenotype, ConstantTableMatchesUniformTieBreak) {
  auto oracle = constant_oracle(4, 8, 1, 0.5);
  CellTemplate cell(4, CellKind::norm);
  std::vector<std::vector<double>> uniform(14, std::vector<double>(8, 0.125));
  EXPECT_EQ(best_genotype(oracle, 2), derive_genotype(cell, uniform, OperationSet::all()));
}

// Exhaustive search over every genotype of an N=2 cell: all k-subsets of each
// node's inputs and every op on each kept edge, scored by the summed quality.
TEST(BestGenotype, MatchesExhaustiveEnumerationAtN2) {
  const auto ops = OperationSet::all();
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto oracle = TabularOracle::random(2, ops, 1, 100 + seed, 0.0);
    const auto& q = oracle.table();
    for (std::size_t k = 1; k <= 2; ++k) {
      // Node B1 has edges {0,1}; node B2 has {2,3,4}.
      std::vector<std::vector<std::size_t>> b1_sets, b2_sets;
      for (std::size_t mask = 1; mask < 4; ++mask) {
        std::vector<std::size_t> s;
        for (std::size_t i = 0; i < 2; ++i) if (mask >> i & 1) s.push_back(i);
        if (s.size() == k) b1_sets.push_back(s);
      }
      for (std::size_t mask = 1; mask < 8; ++mask) {
        std::vector<std::size_t> s;
        for (std::size_t i = 0; i < 3; ++i) if (mask >> i & 1) s.push_back(2 + i);
        if (s.size() == k) b2_sets.push_back(s);
      }
      double best_score = -1.0;
      std::vector<std::pair<std::size_t, std::size_t>> best;
      for (const auto& s1 : b1_sets) {
        for (const auto& s2 : b2_sets) {
          std::vector<std::size_t> kept = s1;
          kept.insert(kept.end(), s2.begin(), s2.end());
          const std::size_t combos = static_cast<std::size_t>(std::pow(8, kept.size()));
          for (std::size_t c = 0; c < combos; ++c) {
            double score = 0.0;
            std::vector<std::pair<std::size_t, std::size_t>> choice;
            std::size_t rest = c;
            for (auto e : kept) {
              choice.emplace_back(e, rest % 8);
              score += q[e][rest % 8];
              rest /= 8;
            }
            if (score > best_score) best_score = score, best = choice;
          }
        }
      }
      CellTemplate cell(2, CellKind::norm);
      Genotype expected{CellKind::norm, {{}, {}}};
      for (auto [e, op] : best) {
        const auto node = cell.edges()[e].dst.index;
        expected.nodes[node].push_back({cell.edges()[e].src, ops[op]});
      }
      EXPECT_EQ(best_genotype(oracle, k), expected) << seed << " k=" << k;
    }
  }
}

TEST(GenotypeScore, MeanOverKeptEdges) {
  auto oracle = TabularOracle::random(2, OperationSet::first(4), 2, 8);
  auto norm = best_genotype(oracle, 2, CellKind::norm);
  auto red = best_genotype(oracle, 2, CellKind::reduction);
  CellTemplate cell(2, CellKind::norm);
  double expected = 0.0;
  auto add = [&](const Genotype& g, std::size_t offset) {
    auto edges = genotype_edges(cell, g);
    std::size_t i = 0;
    for (const auto& node : g.nodes)
      for (const auto& c : node) expected += oracle.table()[offset + edges[i++]][operation_id(c.op)];
  };
  add(norm, 0);
  add(red, 5);
  std::vector<Genotype> both{norm, red};
  EXPECT_NEAR(oracle.genotype_score(both), expected / 8.0, 1e-15);
}

TEST(Surrogate, NoiselessCurveMatchesClosedForm) {
  auto oracle = constant_oracle(1, 2, 1, 0.8);
  SurrogateCurveEvaluator s(oracle, {.tau_c = 10.0, .rho = 1.0});
  ArchitectureSample arch{{OperationKind::max_pool_3x3, OperationKind::none}};
  EXPECT_NEAR(evaluate(s, arch, 10), 0.8 * (1.0 - std::exp(-1.0)), 1e-15);
  EXPECT_NEAR(evaluate(s, arch, 10), 0.5056964470628461, 1e-12);
  for (std::size_t t = 1; t < 60; ++t) EXPECT_LT(evaluate(s, arch, t), evaluate(s, arch, t + 1));
}

TEST(Surrogate, NoiselessRankFidelity) {
  auto oracle = TabularOracle::random(4, OperationSet::all(), 2, 21);
  SurrogateCurveEvaluator s(oracle, {.tau_c = 7.0, .rho = 1.0});
  std::mt19937_64 rng(5);
  for (int i = 0; i < 500; ++i) {
    auto a = random_architecture(28, s.operations(), rng), b = random_architecture(28, s.operations(), rng);
    const std::size_t t = 1 + static_cast<std::size_t>(i % 50);
    const double ds = oracle.true_score(a) - oracle.true_score(b);
    const double da = evaluate(s, a, t) - evaluate(s, b, t);
    EXPECT_EQ(ds > 0, da > 0);
    EXPECT_EQ(ds < 0, da < 0);
  }
  EXPECT_EQ(measure_consistency(s, 500, 4, rng), 1.0);
}

TEST(Surrogate, DeterministicAndBounded) {
  auto oracle = TabularOracle::random(4, OperationSet::all(), 2, 22);
  SurrogateCurveEvaluator s(oracle, {.tau_c = 5.0, .rho = 0.6, .seed = 77});
  SurrogateCurveEvaluator twin(oracle, {.tau_c = 5.0, .rho = 0.6, .seed = 77});
  std::mt19937_64 rng(6);
  for (int i = 0; i < 300; ++i) {
    auto a = random_architecture(28, s.operations(), rng);
    const std::size_t t = 1 + static_cast<std::size_t>(i % 40);
    const double v = evaluate(s, a, t);
    EXPECT_EQ(v, evaluate(s, a, t));
    EXPECT_EQ(v, evaluate(twin, a, t));
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Surrogate, MeasuredConsistencyMatchesConfiguredRho) {
  auto oracle = TabularOracle::random(4, OperationSet::all(), 2, 31);
  for (double rho : {0.6, 0.74, 0.9}) {
    SurrogateCurveEvaluator s(oracle, {.tau_c = 10.0, .rho = rho, .seed = 3});
    std::mt19937_64 rng(1234);
    for (std::size_t t : {1u, 10u, 60u}) {
      const double measured = measure_consistency(s, 4000, t, rng);
      EXPECT_NEAR(measured, rho, 0.05) << "rho=" << rho << " t=" << t;
    }
  }
}

TEST(Surrogate, PaperLevelConsistencyWithinBinomialBand) {
  auto oracle = TabularOracle::random(4, OperationSet::all(), 2, 32);
  SurrogateCurveEvaluator s(oracle, {.tau_c = 10.0, .rho = 0.74, .seed = 4});
  std::mt19937_64 rng(99);
  const double measured = measure_consistency(s, 2000, 20, rng);
  EXPECT_GE(measured, 0.69);
  EXPECT_LE(measured, 0.79);
}

TEST(Surrogate, RampAndHorizon) {
  auto oracle = TabularOracle::random(2, OperationSet::first(4), 2, 40);
  SurrogateCurveEvaluator s(oracle, {.tau_c = 10.0, .rho = 0.6, .rho_final = 0.9, .horizon = 11, .seed = 1});
  EXPECT_NEAR(*s.consistency_at(1), 0.6, 1e-12);
  EXPECT_NEAR(*s.consistency_at(10), 0.9, 1e-12);
  EXPECT_EQ(*s.consistency_at(11), 1.0);
  EXPECT_EQ(s.noise_scale(11), 0.0);
  EXPECT_GT(s.noise_scale(1), s.noise_scale(10));
  EXPECT_THROW(SurrogateCurveEvaluator(oracle, {.rho = 0.6, .rho_final = 0.9}), std::invalid_argument);
  EXPECT_THROW(SurrogateCurveEvaluator(oracle, {.rho = 0.4}), std::invalid_argument);
  EXPECT_THROW(SurrogateCurveEvaluator(oracle, {.tau_c = 0.0}), std::invalid_argument);
}

TEST(Surrogate, HalfConsistencyIsPureNoise) {
  auto oracle = TabularOracle::random(2, OperationSet::first(4), 2, 41);
  SurrogateCurveEvaluator s(oracle, {.rho = 0.5, .seed = 2});
  std::mt19937_64 rng(8);
  EXPECT_NEAR(measure_consistency(s, 4000, 30, rng), 0.5, 0.04);
}

TEST(MeasureConsistency, TabularOracleIsAlwaysConsistent) {
  auto oracle = TabularOracle::random(4, OperationSet::all(), 2, 50);
  std::mt19937_64 rng(3);
  EXPECT_EQ(measure_consistency(oracle, 1000, 1, rng), 1.0);
  EXPECT_THROW(measure_consistency(oracle, 0, 1, rng), std::invalid_argument);
}

TEST(AnyEvaluator, ForwardsToBackend) {
  auto oracle = TabularOracle::random(2, OperationSet::first(4), 2, 60);
  AnyEvaluator tab(oracle);
  AnyEvaluator sur(SurrogateCurveEvaluator(oracle, {.rho = 1.0}));
  static_assert(Evaluator<AnyEvaluator>);
  std::mt19937_64 rng(9);
  auto a = random_architecture(10, oracle.operations(), rng);
  EXPECT_EQ(tab.evaluate(a, 5), oracle.true_score(a));
  EXPECT_EQ(sur.true_score(a), oracle.true_score(a));
  EXPECT_NE(tab.fingerprint(), sur.fingerprint());
  EXPECT_EQ(sur.surrogate() != nullptr, true);
}

}  // namespace
}  // namespace mdenas
