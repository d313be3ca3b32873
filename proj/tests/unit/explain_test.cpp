#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "emfd/explain/brute_force.hpp"
#include "emfd/explain/interpretation.hpp"
#include "emfd/explain/tree_shap.hpp"
#include "emfd/learn/gbt.hpp"
#include "random_model.hpp"

using namespace emfd;
using namespace emfd::explain;
using learn::Tree;
using learn::TreeEnsemble;
using learn::TreeNode;

namespace {

TreeEnsemble ensemble(std::size_t features, std::vector<Tree> trees, double base = 0.0) {
  TreeEnsemble m;
  for (std::size_t f = 0; f < features; ++f) m.feature_names.push_back(f == 0 ? "density" : "f" + std::to_string(f));
  m.base_score = base;
  m.trees = std::move(trees);
  return m;
}

// feature < threshold ? left : right, with leaf covers.
Tree stump(int feature, double threshold, double left, double left_cover, double right, double right_cover) {
  return Tree({{feature, threshold, 1, 2, 0.0, left_cover + right_cover},
               {-1, 0, -1, -1, left, left_cover},
               {-1, 0, -1, -1, right, right_cover}});
}

// Splits on feature 0 then feature 1; only (x0 >= 0.5 and x1 >= 0.5) gives 10.
Tree and_tree() {
  return Tree({{0, 0.5, 1, 2, 0, 100},
               {-1, 0, -1, -1, 0.0, 50},
               {1, 0.5, 3, 4, 0, 50},
               {-1, 0, -1, -1, 0.0, 25},
               {-1, 0, -1, -1, 10.0, 25}});
}

void expect_matrix_invariants(const InteractionMatrix& m, const Attribution& a, double prediction) {
  const std::size_t F = m.size();
  double total = 0.0;
  for (std::size_t i = 0; i < F; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < F; ++j) {
      EXPECT_EQ(m(i, j), m(j, i));
      row += m(i, j);
    }
    EXPECT_NEAR(row, a.phi[i], 1e-6);
    total += row;
  }
  EXPECT_NEAR(total, prediction - a.base_value, 1e-6);
}

}  // namespace

TEST(ShapValues, StumpClosedForm) {
  const auto m = ensemble(3, {stump(0, 0.5, 0.0, 50, 10.0, 50)});
  const std::vector<double> x{0.9, 0.1, 0.2};
  const auto a = shap_values(m, x);
  EXPECT_DOUBLE_EQ(a.base_value, 5.0);
  EXPECT_DOUBLE_EQ(a.phi[0], 5.0);
  EXPECT_EQ(a.phi[1], 0.0);
  EXPECT_EQ(a.phi[2], 0.0);
  const auto b = brute_force_shap(m, x);
  EXPECT_DOUBLE_EQ(b.base_value, 5.0);
  EXPECT_DOUBLE_EQ(b.phi[0], 5.0);
}

TEST(ShapValues, ConstantLeavesGiveZeroPhi) {
  const auto m = ensemble(2, {stump(1, 0.3, 7.0, 10, 7.0, 30)}, 1.0);
  const std::vector<double> x{0.2, 0.9};
  const auto a = shap_values(m, x);
  EXPECT_DOUBLE_EQ(a.base_value, 8.0);
  EXPECT_EQ(a.phi, (std::vector<double>{0.0, 0.0}));
  EXPECT_EQ(brute_force_shap(m, x).phi, (std::vector<double>{0.0, 0.0}));
  const auto im = shap_interactions(m, x);
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < 2; ++j) EXPECT_EQ(im(i, j), 0.0);
  }
}

TEST(ShapValues, Depth2ThreeFeatureTreeMatchesOracle) {
  const Tree t({{2, 0.4, 1, 2, 0, 90},
                {0, 0.7, 3, 4, 0, 30},
                {1, 0.2, 5, 6, 0, 60},
                {-1, 0, -1, -1, 3.0, 10},
                {-1, 0, -1, -1, -2.0, 20},
                {-1, 0, -1, -1, 8.0, 45},
                {-1, 0, -1, -1, 1.5, 15}});
  const auto m = ensemble(3, {t}, 2.0);
  for (const auto& x : std::vector<std::vector<double>>{{0.1, 0.1, 0.1}, {0.9, 0.9, 0.9}, {0.7, 0.2, 0.4}, {0.5, 0.5, 0.3}}) {
    const auto a = shap_values(m, x);
    const auto b = brute_force_shap(m, x);
    EXPECT_NEAR(a.base_value, b.base_value, 1e-12);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(a.phi[i], b.phi[i], 1e-9);
  }
}

TEST(ShapValues, AdditiveModelUsesCoverExpectations) {
  // g(x0): 4 (cover 30) / -2 (cover 10) -> E[g] = 2.5; h(x1): 1 (cover 5) / 6 (cover 15) -> E[h] = 4.75.
  const auto m = ensemble(2, {stump(0, 0.5, 4.0, 30, -2.0, 10), stump(1, 0.5, 1.0, 5, 6.0, 15)});
  const std::vector<double> x{0.8, 0.1};
  for (const auto& a : {shap_values(m, x), brute_force_shap(m, x)}) {
    EXPECT_DOUBLE_EQ(a.base_value, 2.5 + 4.75);
    EXPECT_DOUBLE_EQ(a.phi[0], -2.0 - 2.5);
    EXPECT_DOUBLE_EQ(a.phi[1], 1.0 - 4.75);
  }
  const auto im = shap_interactions(m, x);
  EXPECT_NEAR(im(0, 1), 0.0, 1e-9);
  EXPECT_DOUBLE_EQ(im(0, 0), -4.5);
  EXPECT_DOUBLE_EQ(im(1, 1), -3.75);
}

TEST(ShapValues, RepeatedFeatureOnPath) {
  const Tree t({{0, 0.5, 1, 2, 0, 40},
                {0, 0.2, 3, 4, 0, 20},
                {-1, 0, -1, -1, 5.0, 20},
                {-1, 0, -1, -1, 1.0, 8},
                {-1, 0, -1, -1, 2.0, 12}});
  const auto m = ensemble(2, {t});
  const std::vector<double> x{0.3, 0.0};
  const auto a = shap_values(m, x);
  EXPECT_NEAR(a.phi[0], brute_force_shap(m, x).phi[0], 1e-12);
  EXPECT_NEAR(a.base_value + a.phi[0], 2.0, 1e-12);
  EXPECT_EQ(a.phi[1], 0.0);
}

TEST(ShapValues, ZeroCoverIsMalformed) {
  const auto m = ensemble(2, {Tree({{0, 0.5, 1, 2, 0, 0}, {-1, 0, -1, -1, 1, 0}, {-1, 0, -1, -1, 2, 0}})});
  const std::vector<double> x{0.1, 0.1};
  EXPECT_THROW(shap_values(m, x), NumericError);
  EXPECT_THROW(shap_interactions(m, x), NumericError);
  EXPECT_THROW(brute_force_shap(m, x), NumericError);
}

TEST(ShapValues, RowChecks) {
  const auto m = ensemble(2, {stump(0, 0.5, 0, 1, 1, 1)});
  const std::vector<double> short_row{0.1};
  EXPECT_THROW(shap_values(m, short_row), InputError);
  const std::vector<double> nan_row{0.1, std::nan("")};
  EXPECT_THROW(shap_values(m, nan_row), InputError);
}

TEST(BruteForce, RefusesTooManyFeatures) {
  const auto m = ensemble(16, {stump(3, 0.5, 0, 1, 1, 1)});
  const std::vector<double> x(16, 0.1);
  EXPECT_THROW(brute_force_shap(m, x), UsageError);
  EXPECT_NO_THROW(shap_values(m, x));
}

TEST(BruteForce, ConstantModel) {
  const auto m = ensemble(4, {}, 3.0);
  const std::vector<double> x(4, 0.5);
  const auto a = brute_force_shap(m, x);
  EXPECT_EQ(a.base_value, 3.0);
  EXPECT_EQ(a.phi, std::vector<double>(4, 0.0));
}

TEST(ShapInteractions, AndTreeHasInteraction) {
  const auto m = ensemble(3, {and_tree()});
  const std::vector<double> x{0.9, 0.9, 0.3};
  Attribution a;
  const auto im = shap_interactions(m, x, &a);
  const auto bf = brute_force_interactions(m, x);
  EXPECT_GT(std::abs(im(0, 1)), 0.1);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(im(i, j), bf(i, j), 1e-9);
  }
  EXPECT_EQ(im(2, 0), 0.0);
  EXPECT_EQ(im(2, 2), 0.0);
  expect_matrix_invariants(im, a, learn::predict(m, x));
}

TEST(ShapInteractions, ConstantModelIsZero) {
  const auto m = ensemble(3, {}, 4.0);
  const auto im = shap_interactions(m, std::vector<double>{1, 2, 3});
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(im(i, j), 0.0);
  }
}

TEST(ShapInteractions, DummyFeatureHasZeroRowAndColumn) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    auto m = testkit::random_ensemble(rng, {4, 3, 4});
    m.feature_names.push_back("unused");
    const auto x = testkit::random_row(rng, m.num_features());
    Attribution a;
    const auto im = shap_interactions(m, x, &a);
    const std::size_t d = m.num_features() - 1;
    EXPECT_EQ(a.phi[d], 0.0);
    for (std::size_t j = 0; j <= d; ++j) {
      EXPECT_EQ(im(d, j), 0.0);
      EXPECT_EQ(im(j, d), 0.0);
    }
  }
}

TEST(ShapValues, AdditiveAcrossTrees) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    const auto m = testkit::random_ensemble(rng);
    const auto x = testkit::random_row(rng, m.num_features());
    const auto whole = shap_values(m, x);
    std::vector<double> phi(m.num_features(), 0.0);
    double base = m.base_score;
    for (const auto& t : m.trees) {
      TreeEnsemble single = m;
      single.trees.assign(1, t);
      single.base_score = 0.0;
      const auto part = shap_values(single, x);
      base += part.base_value;
      for (std::size_t i = 0; i < phi.size(); ++i) phi[i] += part.phi[i];
    }
    EXPECT_NEAR(whole.base_value, base, 1e-12);
    for (std::size_t i = 0; i < phi.size(); ++i) EXPECT_NEAR(whole.phi[i], phi[i], 1e-12);
  }
}

TEST(ShapValues, RandomEnsemblesMatchBruteForce) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const auto m = testkit::random_ensemble(rng);
    const auto x = testkit::random_row(rng, m.num_features());
    const auto a = shap_values(m, x);
    const auto b = brute_force_shap(m, x);
    ASSERT_NEAR(a.base_value, b.base_value, 1e-9) << "trial " << trial;
    for (std::size_t i = 0; i < a.phi.size(); ++i) ASSERT_NEAR(a.phi[i], b.phi[i], 1e-9) << "trial " << trial;
    double sum = a.base_value;
    for (double p : a.phi) sum += p;
    EXPECT_NEAR(sum, learn::predict(m, x), 1e-9);
  }
}

TEST(ShapInteractions, RandomEnsemblesMatchBruteForce) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    const auto m = testkit::random_ensemble(rng);
    const auto x = testkit::random_row(rng, m.num_features());
    Attribution a;
    const auto im = shap_interactions(m, x, &a);
    const auto bf = brute_force_interactions(m, x);
    for (std::size_t i = 0; i < im.size(); ++i) {
      for (std::size_t j = 0; j < im.size(); ++j) ASSERT_NEAR(im(i, j), bf(i, j), 1e-9) << "trial " << trial;
    }
    expect_matrix_invariants(im, a, learn::predict(m, x));
  }
}

TEST(ShapInteractions, AdditiveEnsemblesHaveNoOffDiagonal) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    // Each tree uses a single feature.
    TreeEnsemble m = ensemble(4, {});
    for (int k = 0; k < 6; ++k) {
      Tree t = testkit::random_tree(rng, 3, 1);
      std::vector<TreeNode> nodes = t.nodes();
      const int f = k % 4;
      for (auto& n : nodes) {
        if (!n.is_leaf()) n.feature = f;
      }
      m.trees.emplace_back(std::move(nodes));
    }
    const auto x = testkit::random_row(rng, 4);
    const auto im = shap_interactions(m, x);
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t j = 0; j < 4; ++j) {
        if (i != j) {
          EXPECT_LE(std::abs(im(i, j)), 1e-9);
        }
      }
    }
  }
}

TEST(Ranking, AllZeroIsAlphabetical) {
  const learn::FeatureSchema schema({"zeta", "density", "alpha", "mid"});
  std::vector<InteractionMatrix> ms{InteractionMatrix(4)};
  const auto r = rank_by_density_interaction(ms, schema);
  ASSERT_EQ(r.size(), 3u);
  EXPECT_EQ(r[0].name, "alpha");
  EXPECT_EQ(r[1].name, "mid");
  EXPECT_EQ(r[2].name, "zeta");
  for (const auto& f : r) EXPECT_EQ(f.score, 0.0);
}

TEST(Ranking, ScoresAreMeanAbsoluteAndDuplicationInvariant) {
  const learn::FeatureSchema schema({"density", "a", "b"});
  InteractionMatrix m1(3), m2(3);
  m1(1, 0) = m1(0, 1) = -4.0;
  m1(2, 0) = m1(0, 2) = 1.0;
  m2(1, 0) = m2(0, 1) = 2.0;
  m2(2, 0) = m2(0, 2) = -2.0;
  std::vector<InteractionMatrix> ms{m1, m2};
  const auto r = rank_by_density_interaction(ms, schema);
  EXPECT_EQ(r[0].name, "a");
  EXPECT_DOUBLE_EQ(r[0].score, 3.0);
  EXPECT_DOUBLE_EQ(r[1].score, 1.5);
  std::vector<InteractionMatrix> doubled{m1, m2, m1, m2};
  const auto r2 = rank_by_density_interaction(doubled, schema);
  ASSERT_EQ(r2.size(), r.size());
  for (std::size_t i = 0; i < r.size(); ++i) {
    EXPECT_EQ(r2[i].name, r[i].name);
    EXPECT_DOUBLE_EQ(r2[i].score, r[i].score);
  }
}

TEST(Ranking, ConstructedInteractionRanksFirst) {
  // target = density * factor_A + factor_B on a grid
  learn::Dataset ds{learn::FeatureSchema({"density", "factor_A", "factor_B"})};
  for (int k = 0; k < 8; ++k) {
    for (int a = 0; a < 4; ++a) {
      for (int b = 0; b < 4; ++b) {
        const double x[3] = {5.0 * k, 1.0 * a, 1.0 * b};
        ds.add_row(x, x[0] * x[1] + 3.0 * x[2]);
      }
    }
  }
  learn::GbtParams p;
  p.n_trees = 100;
  p.max_depth = 4;
  p.min_child_cover = 1;
  p.learning_rate = 0.3;
  const auto model = learn::train_gbt(ds, p);
  std::vector<InteractionMatrix> fast, oracle;
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    fast.push_back(shap_interactions(model, ds.row(i)));
    oracle.push_back(brute_force_interactions(model, ds.row(i)));
  }
  for (const auto& r : {rank_by_density_interaction(fast, ds.schema()), rank_by_density_interaction(oracle, ds.schema())}) {
    ASSERT_EQ(r.size(), 2u);
    EXPECT_EQ(r[0].name, "factor_A");
    EXPECT_GT(r[0].score, 10.0 * r[1].score);
  }
}

TEST(Ranking, SizeMismatchIsAnError) {
  const learn::FeatureSchema schema({"density", "a"});
  std::vector<InteractionMatrix> ms{InteractionMatrix(3)};
  EXPECT_THROW(rank_by_density_interaction(ms, schema), InputError);
  std::vector<InteractionMatrix> none;
  EXPECT_THROW(rank_by_density_interaction(none, schema), InputError);
}

TEST(Dependence, OneRowPerInstance) {
  std::mt19937_64 rng(3);
  learn::Dataset rows{learn::FeatureSchema({"density", "f1", "f2"})};
  const auto m = ensemble(3, {stump(0, 0.5, 1, 10, 2, 10), stump(1, 0.5, 0, 10, 4, 10)});
  std::vector<InteractionMatrix> ms;
  for (int i = 0; i < 100; ++i) {
    const auto x = testkit::random_row(rng, 3);
    rows.add_row(x, 0.0);
    ms.push_back(shap_interactions(m, x));
  }
  const auto dep = dependence_export(ms, rows, "f1");
  ASSERT_EQ(dep.size(), 100u);
  for (std::size_t i = 0; i < dep.size(); ++i) {
    EXPECT_EQ(dep[i].instance_id, i);
    EXPECT_EQ(dep[i].density, rows.value(i, 0));
    EXPECT_EQ(dep[i].factor_value, rows.value(i, 1));
    EXPECT_LE(std::abs(dep[i].interaction), 1e-9);
  }
  EXPECT_THROW(dependence_export(ms, rows, "nope"), UsageError);
  EXPECT_THROW(dependence_export(ms, rows, "f1", "speed"), UsageError);
}

TEST(SelectInstances, EvenlySpaced) {
  EXPECT_EQ(select_instances(10, 5), (std::vector<std::size_t>{0, 2, 4, 6, 8}));
  EXPECT_EQ(select_instances(3, 0), (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_EQ(select_instances(3, 10), (std::vector<std::size_t>{0, 1, 2}));
}

TEST(Exports, Formats) {
  const learn::FeatureSchema schema({"density", "f1"});
  InteractionMatrix m(2);
  m(0, 1) = m(1, 0) = 0.5;
  m(0, 0) = 1;
  std::vector<InteractionMatrix> ms{m};
  std::ostringstream inter;
  write_interactions(inter, schema, ms);
  EXPECT_EQ(inter.str(),
            "instance_id,feature_i,feature_j,value\n0,density,density,1\n0,density,f1,0.5\n0,f1,density,0.5\n0,f1,f1,0\n");
  std::vector<Attribution> attrs{{2.0, {1.5, 0.5}}};
  std::vector<double> preds{4.0};
  std::ostringstream at;
  write_attributions(at, schema, attrs, preds);
  EXPECT_EQ(at.str(), "density,f1,base_value,prediction\n1.5,0.5,2,4\n");
  std::ostringstream rk;
  write_ranking(rk, ImportanceRanking{{"f1", 0.25}});
  EXPECT_EQ(rk.str(), "rank,feature,score\n1,f1,0.25\n");
  std::ostringstream dp;
  std::vector<DependenceRow> rows{{0, 12.5, -0.5, 0.9}};
  write_dependence(dp, rows);
  EXPECT_EQ(dp.str(), "instance_id,density,interaction_value,factor_value\n0,12.5,-0.5,0.9\n");
}
