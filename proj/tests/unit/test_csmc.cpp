#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "ssm/csmc/csmc.hpp"
#include "ssm/errors.hpp"
#include "ssm/numerics/grad_check.hpp"
#include "test_util.hpp"

using namespace ssm;
using csmc::GmmOptions;
using csmc::GmmParams;
using num::ParamStore;
using num::Tape;
using num::Tensor;

namespace {

// Plain 1-D, two-component EM written out longhand.
struct Em1d {
  double mu[2], var[2], w[2];
};

Em1d reference_em_1d(const std::vector<double>& x, double mu0, double mu1, int iters) {
  Em1d s{{mu0, mu1}, {1.0, 1.0}, {0.5, 0.5}};
  for (int it = 0; it < iters; ++it) {
    std::vector<double> r0(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      double p[2];
      for (int c = 0; c < 2; ++c) {
        p[c] = s.w[c] * std::exp(-0.5 * (x[i] - s.mu[c]) * (x[i] - s.mu[c]) / s.var[c]) /
               std::sqrt(2.0 * std::numbers::pi * s.var[c]);
      }
      r0[i] = p[0] / (p[0] + p[1]);
    }
    for (int c = 0; c < 2; ++c) {
      double m = 0, sx = 0, sxx = 0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = c == 0 ? r0[i] : 1.0 - r0[i];
        m += r;
        sx += r * x[i];
      }
      s.mu[c] = sx / m;
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = c == 0 ? r0[i] : 1.0 - r0[i];
        sxx += r * (x[i] - s.mu[c]) * (x[i] - s.mu[c]);
      }
      s.var[c] = std::max(sxx / m, 1e-6);
      s.w[c] = m / static_cast<double>(x.size());
    }
  }
  return s;
}

Tensor column(const std::vector<double>& v) {
  Tensor t = Tensor::matrix(v.size(), 1);
  for (std::size_t i = 0; i < v.size(); ++i) t(i, 0) = v[i];
  return t;
}

// Identity projections and attention weights so states can be computed by hand.
ParamStore identity_store(std::size_t d) {
  ParamStore s;
  Tensor eye = Tensor::matrix(d, d);
  for (std::size_t i = 0; i < d; ++i) eye(i, i) = 1.0;
  s.add(csmc::kProjWeight, eye);
  s.add(csmc::kProjBias, Tensor({d}, 0.0));
  s.add("twa.wq", eye);
  s.add("twa.wk", eye);
  s.add("twa.wv", eye);
  return s;
}

csmc::MemoryWindow full_window(const Tensor& features) {
  return csmc::MemoryWindow(features, std::vector<std::uint8_t>(features.rows(), 1));
}

}  // namespace

TEST(Project, Examples) {
  csmc::ProjectionParams p{Tensor::matrix({{1.0, 1.0}}), Tensor::vector({0.0})};
  EXPECT_EQ(csmc::project({0, {2.0, 3.0}}, p), std::vector<double>{5.0});
  csmc::ProjectionParams id{Tensor::matrix({{1.0, 0.0}, {0.0, 1.0}}), Tensor::vector({0.0, 0.0})};
  EXPECT_EQ(csmc::project({0, {-4.0, 0.5}}, id), (std::vector<double>{-4.0, 0.5}));
  csmc::ProjectionParams zero{Tensor::matrix(2, 3), Tensor::vector({7.0, -1.0})};
  EXPECT_EQ(csmc::project({0, {9.0, 8.0, 1.0}}, zero), (std::vector<double>{7.0, -1.0}));
  EXPECT_THROW(csmc::project({0, {1.0}}, p), DimensionError);
}

TEST(MemoryWindow, FromFramesRequiresContiguousIndices) {
  std::vector<csmc::FeatureFrame> mem = {{-2, {1.0}}, {-1, {2.0}}};
  auto w = csmc::MemoryWindow::from_frames(mem, {0, {3.0}});
  EXPECT_EQ(w.memory_length(), 2u);
  EXPECT_EQ(w.features()(2, 0), 3.0);
  std::vector<csmc::FeatureFrame> gap = {{-3, {1.0}}, {-1, {2.0}}};
  EXPECT_THROW(csmc::MemoryWindow::from_frames(gap, {0, {3.0}}), ArgumentError);
  std::vector<csmc::FeatureFrame> wide = {{-2, {1.0}}, {-1, {2.0, 1.0}}};
  EXPECT_THROW(csmc::MemoryWindow::from_frames(wide, {0, {3.0}}), DimensionError);
}

TEST(MemoryWindow, FromSequencePadsColdStart) {
  Tensor f = Tensor::matrix({{1.0}, {2.0}, {3.0}});
  auto w = csmc::MemoryWindow::from_sequence(f, 1, 4);
  EXPECT_EQ(w.rows(), 5u);
  EXPECT_EQ(w.valid(), (std::vector<std::uint8_t>{0, 0, 0, 1, 1}));
  EXPECT_EQ(w.valid_memory(), 1u);
  EXPECT_EQ(w.features()(4, 0), 2.0);
  EXPECT_EQ(w.features()(0, 0), 0.0);
}

TEST(Gmm, SingleComponentIsClosedForm) {
  Tensor x = Tensor::matrix({{1.0, 2.0}, {3.0, 2.0}, {5.0, 2.0}});
  auto fit = csmc::fit_gmm(x, {.components = 1});
  EXPECT_NEAR(fit.params.weights[0], 1.0, 1e-15);
  EXPECT_NEAR(fit.params.means(0, 0), 3.0, 1e-12);
  EXPECT_NEAR(fit.params.means(0, 1), 2.0, 1e-12);
  EXPECT_NEAR(fit.params.variances(0, 0), 8.0 / 3.0, 1e-12);
  EXPECT_EQ(fit.params.variances(0, 1), 1e-6);  // floored
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(fit.responsibilities(i, 0), 1.0);
}

TEST(Gmm, EquidistantPointHasEvenPosterior) {
  GmmParams g{{0.5, 0.5}, Tensor::matrix({{-1.0, 0.0}, {1.0, 0.0}}), Tensor::matrix({{2.0, 2.0}, {2.0, 2.0}})};
  Tensor r;
  csmc::posteriors(g, Tensor::matrix({{0.0, 3.0}}), r);
  EXPECT_DOUBLE_EQ(r(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(r(0, 1), 0.5);
}

TEST(Gmm, LogGaussianMatchesDirectFormula) {
  const std::vector<double> x = {0.3, -1.0}, mu = {0.0, 0.5}, var = {2.0, 0.25};
  double expect = 0.0;
  for (int j = 0; j < 2; ++j)
    expect += std::log(std::exp(-0.5 * (x[j] - mu[j]) * (x[j] - mu[j]) / var[j]) / std::sqrt(2 * std::numbers::pi * var[j]));
  EXPECT_NEAR(csmc::log_gaussian(x, mu, var), expect, 1e-13);
}

TEST(Gmm, SeparableOneDimensionalInstanceMatchesReference) {
  const std::vector<double> x = {-1.1, -1.0, 1.0, 1.1};
  const auto ref = reference_em_1d(x, -1.1, 1.1, 500);
  auto fit = csmc::fit_gmm(column(x), {.components = 2, .seed = 3, .max_iters = 500, .tol = 1e-14});
  std::vector<double> means = {fit.params.means(0, 0), fit.params.means(1, 0)};
  std::sort(means.begin(), means.end());
  EXPECT_NEAR(means[0], ref.mu[0], 1e-6);
  EXPECT_NEAR(means[1], ref.mu[1], 1e-6);
  EXPECT_NEAR(means[0], -1.05, 1e-3);
  EXPECT_NEAR(means[1], 1.05, 1e-3);
  EXPECT_NEAR(fit.params.weights[0], 0.5, 1e-6);

  // Critical frames: nearest point per mean under the reference distance table.
  const std::vector<int> idx = {-4, -3, -2, -1};
  auto set = csmc::select_critical_frames(column(x), idx, fit.params);
  std::set<int> expected;
  for (double m : {ref.mu[0], ref.mu[1]}) {
    int best = 0;
    for (int i = 1; i < 4; ++i) {
      const double di = std::abs(x[i] - m), db = std::abs(x[best] - m);
      if (di < db || di == db) best = i;
    }
    expected.insert(idx[best]);
  }
  expected.insert(0);
  EXPECT_EQ(std::set<int>(set.indices.begin(), set.indices.end()), expected);
}

TEST(Gmm, RejectsBadArguments) {
  Tensor x = Tensor::matrix({{1.0}, {2.0}});
  EXPECT_THROW(csmc::fit_gmm(x, {.components = 3}), ArgumentError);
  EXPECT_THROW(csmc::fit_gmm(x, {.components = 1, .tol = 0.0}), ArgumentError);
}

TEST(Gmm, EmptyComponentIsReseeded) {
  // Three coincident points and one outlier; a component parked far away
  // receives no mass and must be restarted on the worst-explained point.
  Tensor x = Tensor::matrix({{0.0}, {0.0}, {0.0}, {5.0}});
  GmmParams warm{{0.5, 0.5}, Tensor::matrix({{0.0}, {1e6}}), Tensor::matrix({{1.0}, {1e-6}})};
  auto fit = csmc::fit_gmm(x, {.components = 2, .max_iters = 50}, &warm);
  ASSERT_FALSE(fit.reseed_iterations.empty());
  std::vector<double> means = {fit.params.means(0, 0), fit.params.means(1, 0)};
  std::sort(means.begin(), means.end());
  EXPECT_NEAR(means[0], 0.0, 1e-9);
  EXPECT_NEAR(means[1], 5.0, 1e-9);
  fit.params.validate();
}

TEST(Gmm, EmSoundnessOver100Instances) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n01;
    Tensor x = Tensor::matrix(64, 8);
    // Four loose clusters.
    std::vector<Tensor> centres;
    for (int c = 0; c < 4; ++c) centres.push_back(test::random_matrix(1, 8, rng, -3, 3));
    for (std::size_t i = 0; i < 64; ++i)
      for (std::size_t j = 0; j < 8; ++j) x(i, j) = centres[i % 4][j] + n01(rng);
    auto fit = csmc::fit_gmm(x, {.components = 4, .seed = seed, .max_iters = 100, .tol = 1e-10});
    for (std::size_t it = 0; it + 1 < fit.history.size(); ++it) {
      const bool after_reseed =
          std::find(fit.reseed_iterations.begin(), fit.reseed_iterations.end(), it) != fit.reseed_iterations.end();
      if (!after_reseed) {
        EXPECT_GE(fit.history[it + 1], fit.history[it] - 1e-9) << "seed " << seed << " iter " << it;
      }
    }
    for (std::size_t i = 0; i < 64; ++i) {
      double s = 0.0;
      for (std::size_t c = 0; c < 4; ++c) s += fit.responsibilities(i, c);
      EXPECT_NEAR(s, 1.0, 1e-9);
    }
    EXPECT_NO_THROW(fit.params.validate());
  }
}

TEST(Gmm, WarmStartFromConvergedFitStopsQuickly) {
  std::mt19937_64 rng(4);
  Tensor x = test::random_matrix(40, 3, rng);
  auto a = csmc::fit_gmm(x, {.components = 3, .max_iters = 500, .tol = 1e-12});
  auto b = csmc::fit_gmm(x, {.components = 3, .max_iters = 500, .tol = 1e-6}, &a.params);
  EXPECT_LE(b.iterations, 1u);
}

TEST(CriticalFrames, ExactMeanAndTieBreak) {
  Tensor emb = Tensor::matrix({{0.0}, {2.0}, {4.0}, {2.0}, {9.0}});
  const std::vector<int> idx = {-5, -4, -3, -2, -1};
  GmmParams g{{0.5, 0.5}, Tensor::matrix({{4.0}, {3.0}}), Tensor::matrix({{1.0}, {1.0}})};
  auto set = csmc::select_critical_frames(emb, idx, g);
  // Component 0 takes frame -3 exactly; component 1 is equidistant from
  // -4, -3 and -2, -3 is taken, so the later of -4/-2 wins.
  EXPECT_EQ(set.indices, (std::vector<int>{-3, -2, 0}));
  EXPECT_EQ(set.cluster, (std::vector<int>{0, 1, -1}));
}

TEST(CriticalFrames, AlwaysUniqueAndEndWithCurrent) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    Tensor emb = test::random_matrix(12, 2, rng);
    if (seed % 3 == 0) emb = Tensor::matrix(12, 2, 1.0);  // fully degenerate
    std::vector<int> idx(12);
    for (int i = 0; i < 12; ++i) idx[i] = i - 12;
    GmmParams g{{0.25, 0.25, 0.25, 0.25}, test::random_matrix(4, 2, rng), Tensor::matrix(4, 2, 1.0)};
    auto set = csmc::select_critical_frames(emb, idx, g);
    ASSERT_EQ(set.indices.size(), 5u);
    EXPECT_EQ(set.indices.back(), 0);
    EXPECT_TRUE(std::is_sorted(set.indices.begin(), set.indices.end()));
    EXPECT_EQ(std::set<int>(set.indices.begin(), set.indices.end()).size(), 5u);
  }
}

TEST(Twa, LogitBias) {
  EXPECT_EQ(csmc::temporal_logit_bias(-3, -3, 2.0), 0.0);
  EXPECT_DOUBLE_EQ(csmc::temporal_logit_bias(0, -2, 1.0), -2.0);
  EXPECT_NEAR(std::exp(csmc::temporal_logit_bias(0, -2, 1.0)), 0.1353352832366127, 1e-15);
  EXPECT_GT(csmc::temporal_logit_bias(0, -500, 1e9), -1e-12);
  EXPECT_THROW(csmc::temporal_logit_bias(0, 1, 0.0), ArgumentError);
  EXPECT_THROW(csmc::temporal_logit_bias(0, 1, -1.0), ArgumentError);
}

TEST(Twa, SingleFrameWindowReturnsProjectedValue) {
  std::mt19937_64 rng(2);
  ParamStore s;
  csmc::init_params(s, 3, 4, rng);
  const Tensor f = test::random_matrix(1, 3, rng);
  Tape t;
  auto w = full_window(f);
  auto emb = csmc::project(t, s, t.constant(f));
  auto out = csmc::compress_to_states(t, s, emb, w, {{0}, {-1}}, 1.0, 2);
  const Tensor& e = emb.value();
  const Tensor& wv = s.get("twa.wv");
  for (std::size_t c = 0; c < 4; ++c) {
    double v = 0.0;
    for (std::size_t j = 0; j < 4; ++j) v += wv(c, j) * e(0, j);
    EXPECT_NEAR(out.states.value()(0, c), v, 1e-12);
  }
}

TEST(Twa, IdenticalFramesGiveSharedValue) {
  std::mt19937_64 rng(8);
  ParamStore s;
  csmc::init_params(s, 2, 4, rng);
  Tensor f = Tensor::matrix(6, 2);
  for (std::size_t i = 0; i < 6; ++i) {
    f(i, 0) = 0.7;
    f(i, 1) = -1.3;
  }
  for (double delta : {0.5, 3.0, 1e9}) {
    Tape t;
    auto emb = csmc::project(t, s, t.constant(f));
    auto out = csmc::compress_to_states(t, s, emb, full_window(f), {{-5, -2, 0}, {0, 1, -1}}, delta, 2);
    for (std::size_t c = 0; c < 4; ++c) {
      EXPECT_NEAR(out.states.value()(0, c), out.states.value()(1, c), 1e-12);
      EXPECT_NEAR(out.states.value()(0, c), out.states.value()(2, c), 1e-12);
    }
  }
}

TEST(Twa, ThreeFrameHandEvaluation) {
  const Tensor f = Tensor::matrix({{1.0, 0.0}, {0.0, 1.0}, {1.0, 1.0}});
  ParamStore s = identity_store(2);
  Tape t;
  auto emb = csmc::project(t, s, t.constant(f));
  auto out = csmc::compress_to_states(t, s, emb, full_window(f), {{-1, 0}, {0, -1}}, 1.0, 1);
  // Anchor -1 is row 1 = (0, 1).
  const double l0 = 0.0 / std::sqrt(2.0) - 0.5;  // dt 1
  const double l1 = 1.0 / std::sqrt(2.0);         // dt 0
  const double l2 = 1.0 / std::sqrt(2.0) - 0.5;   // dt 1
  const double z = std::exp(l0) + std::exp(l1) + std::exp(l2);
  const double a0 = std::exp(l0) / z, a1 = std::exp(l1) / z, a2 = std::exp(l2) / z;
  EXPECT_NEAR(out.states.value()(0, 0), a0 + a2, 1e-12);
  EXPECT_NEAR(out.states.value()(0, 1), a1 + a2, 1e-12);
}

TEST(Twa, RowsNormalisedAndLargeDeltaIsPlainAttention) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    ParamStore s;
    csmc::init_params(s, 5, 8, rng);
    const Tensor f = test::random_matrix(10, 5, rng, -2, 2);
    const csmc::CriticalFrameSet crit{{-7, -3, -1, 0}, {0, 1, 2, -1}};
    Tape t;
    auto w = full_window(f);
    auto emb = csmc::project(t, s, t.constant(f));
    auto twa = csmc::compress_to_states(t, s, emb, w, crit, 1.5, 2);
    for (const auto& hw : twa.head_weights)
      for (std::size_t r = 0; r < hw.rows(); ++r) {
        double sum = 0.0;
        for (double v : hw.value().row(r)) sum += v;
        EXPECT_NEAR(sum, 1.0, 1e-9);
      }
    auto wide = csmc::compress_to_states(t, s, emb, w, crit, 1e9, 2);
    const std::vector<std::size_t> rows = {2, 6, 8, 9};
    const num::AttentionBlock block{"twa", 2};
    auto plain = block.forward(t, s, num::ops::gather_rows(emb, rows), emb);
    EXPECT_LT(test::max_abs_diff(wide.states.value(), plain.output.value()), 1e-6);
  }
}

TEST(Twa, LocalityWithEqualContentLogits) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    ParamStore s;
    csmc::init_params(s, 3, 4, rng);
    s.get("twa.wq") = Tensor::matrix(4, 4);  // every Q.K is zero
    const Tensor f = test::random_matrix(16, 3, rng, -2, 2);
    std::uniform_real_distribution<double> ud(0.3, 20.0);
    const double delta = ud(rng);
    const int anchor = -static_cast<int>(std::uniform_int_distribution<int>(0, 15)(rng));
    Tape t;
    auto w = full_window(f);
    auto emb = csmc::project(t, s, t.constant(f));
    auto out = csmc::compress_to_states(t, s, emb, w, {{anchor}, {0}}, delta, 1);
    const auto& a = out.head_weights[0].value();
    for (std::size_t i = 0; i < 16; ++i)
      for (std::size_t j = 0; j < 16; ++j) {
        const int di = std::abs(w.frame_index(i) - anchor), dj = std::abs(w.frame_index(j) - anchor);
        if (di < dj) {
          EXPECT_GE(a(0, i), a(0, j));
        }
      }
  }
}

TEST(Twa, PaddingReceivesNoWeight) {
  std::mt19937_64 rng(1);
  ParamStore s;
  csmc::init_params(s, 2, 4, rng);
  Tensor f = test::random_matrix(6, 2, rng);
  auto w = csmc::MemoryWindow::from_sequence(f, 1, 5);
  Tape t;
  auto out = csmc::compress_window(t, s, w, {.clusters = 3, .heads = 2});
  ASSERT_EQ(out.critical.indices.size(), 4u);
  // One valid memory frame (-1), padded at the front with it.
  EXPECT_EQ(out.critical.indices, (std::vector<int>{-1, -1, -1, 0}));
  for (const auto& hw : out.compressed.head_weights)
    for (std::size_t r = 0; r < hw.rows(); ++r)
      for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(hw.value()(r, j), 0.0);
}

TEST(Csmc, CompressWindowShapesAndGradient) {
  std::mt19937_64 rng(3);
  ParamStore s;
  csmc::init_params(s, 4, 8, rng);
  const Tensor f = test::random_matrix(20, 4, rng);
  auto w = csmc::MemoryWindow::from_sequence(f, 19, 15);
  csmc::CsmcConfig cfg{.clusters = 4, .delta = 3.0, .heads = 2};
  Tape t;
  auto out = csmc::compress_window(t, s, w, cfg);
  EXPECT_EQ(out.compressed.states.rows(), 5u);
  EXPECT_EQ(out.critical.indices.back(), 0);
  auto states = csmc::to_states(out.compressed, out.critical);
  ASSERT_EQ(states.size(), 5u);
  EXPECT_EQ(states[2].anchor_index, out.critical.indices[2]);

  const auto report = num::grad_check(
      [&](Tape& tape, const ParamStore& p) {
        auto o = csmc::compress_window(tape, p, w, cfg);
        return num::ops::sum(num::ops::mul(o.compressed.states, o.compressed.states));
      },
      s);
  EXPECT_LT(report.max_relative_error, 1e-4);
}

TEST(Csmc, WarmStartCarriesMixture) {
  std::mt19937_64 rng(5);
  ParamStore s;
  csmc::init_params(s, 4, 8, rng);
  const Tensor f = test::random_matrix(30, 4, rng);
  csmc::EmWarmStart warm;
  Tape t;
  csmc::compress_window(t, s, csmc::MemoryWindow::from_sequence(f, 20, 15), {}, &warm);
  ASSERT_TRUE(warm.previous.has_value());
  EXPECT_EQ(warm.previous->components(), 4u);
}
