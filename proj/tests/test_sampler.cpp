#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "irpinn/problems.hpp"
#include "irpinn/sampler.hpp"

#include <cmath>
#include <memory>
#include <random>

using namespace irpinn;

namespace {

Vec four_nodes() {
  Vec t(4);
  t << 0.125, 0.375, 0.625, 0.875;
  return t;
}

// One pool point at the center of every (node, bin) cell: an exactly balanced
// design that removes Monte-Carlo noise from closed-form fit checks.
SamplePoints balanced_pool(const Vec& nodes, int bins, double x_lo, double x_hi) {
  SamplePoints pool;
  const Eigen::Index n = nodes.size() * bins;
  pool.t.resize(n);
  pool.x.resize(n, 1);
  const double width = (x_hi - x_lo) / bins;
  Eigen::Index row = 0;
  for (Eigen::Index i = 0; i < nodes.size(); ++i)
    for (int b = 0; b < bins; ++b) {
      pool.t[row] = nodes[i];
      pool.x(row, 0) = x_lo + (b + 0.5) * width;
      ++row;
    }
  return pool;
}

}  // namespace

TEST_CASE("uniform histogram density is normalized") {
  HistogramDensity d = HistogramDensity::uniform(four_nodes(), 1, -2.0, 2.0, 8);
  CHECK(std::abs(d.node_mass().sum() - 1.0) < 1e-10);
  for (int n = 0; n < 4; ++n) CHECK(std::abs(d.bin_mass().row(n).sum() - 1.0) < 1e-10);

  // summing exp(log p) * bin width over all cells recovers total mass 1
  const double width = 4.0 / 8;
  double total = 0.0;
  for (int n = 0; n < 4; ++n)
    for (int b = 0; b < 8; ++b) {
      Vec x(1);
      x << -2.0 + (b + 0.5) * width;
      total += std::exp(d.log_density(d.node_times()[n], x)) * width;
    }
  CHECK(std::abs(total - 1.0) < 1e-10);

  CHECK(d.node_index(0.375) == 1);
  CHECK_THROWS_AS(d.node_index(0.5), std::invalid_argument);
}

TEST_CASE("constant residual fits back to the uniform model") {
  HistogramDensity uni = HistogramDensity::uniform(four_nodes(), 1, 0.0, 1.0, 8);
  SamplePoints pool = balanced_pool(four_nodes(), 8, 0.0, 1.0);
  HistogramDensity fit = fit_histogram(uni, pool, Vec::Constant(pool.count(), 2.7));
  for (int n = 0; n < 4; ++n) {
    CHECK(std::abs(fit.node_mass()[n] - 0.25) < 1e-10);
    for (int b = 0; b < 8; ++b) CHECK(std::abs(fit.bin_mass()(n, b) - 0.125) < 1e-10);
  }
}

TEST_CASE("degenerate residual concentrates nearly all mass") {
  HistogramDensity uni = HistogramDensity::uniform(four_nodes(), 1, 0.0, 1.0, 8);
  SamplePoints pool = balanced_pool(four_nodes(), 8, 0.0, 1.0);
  Vec rsq = Vec::Constant(pool.count(), 1e-9);
  // spike at node 2, bin 5
  for (Eigen::Index i = 0; i < pool.count(); ++i)
    if (std::abs(pool.t[i] - 0.625) < 1e-12 && pool.x(i, 0) > 5.0 / 8 &&
        pool.x(i, 0) < 6.0 / 8)
      rsq[i] = 1.0;
  HistogramDensity fit = fit_histogram(uni, pool, rsq);
  CHECK(fit.node_mass()[2] * fit.bin_mass()(2, 5) >= 0.99);
}

TEST_CASE("separable residual recovers both marginals") {
  // r^2(t, x) = g(t) h(x) with g(t) = 1 + t and h(x) = x^2 on [0,1].
  const int bins = 8;
  HistogramDensity uni = HistogramDensity::uniform(four_nodes(), 1, 0.0, 1.0, bins);
  SamplePoints pool = uni.sample(20000, 99);
  Vec rsq(pool.count());
  for (Eigen::Index i = 0; i < pool.count(); ++i)
    rsq[i] = (1.0 + pool.t[i]) * pool.x(i, 0) * pool.x(i, 0);
  HistogramDensity fit = fit_histogram(uni, pool, rsq);

  // temporal marginal proportional to g at the nodes
  Vec g = (four_nodes().array() + 1.0).matrix();
  Vec target_t = g / g.sum();
  for (int n = 0; n < 4; ++n) CHECK(std::abs(fit.node_mass()[n] - target_t[n]) < 0.02);

  // spatial marginal proportional to the bin integral of x^2
  Vec target_x(bins);
  for (int b = 0; b < bins; ++b) {
    const double lo = b / double(bins), hi = (b + 1) / double(bins);
    target_x[b] = (hi * hi * hi - lo * lo * lo) / 3.0;
  }
  target_x /= target_x.sum();
  for (int n = 0; n < 4; ++n)
    for (int b = 0; b < bins; ++b) CHECK(std::abs(fit.bin_mass()(n, b) - target_x[b]) < 0.04);
}

TEST_CASE("fit is invariant to uniform residual scaling") {
  HistogramDensity uni = HistogramDensity::uniform(four_nodes(), 1, 0.0, 1.0, 8);
  SamplePoints pool = uni.sample(3000, 5);
  Vec rsq(pool.count());
  for (Eigen::Index i = 0; i < pool.count(); ++i)
    rsq[i] = 0.1 + pool.t[i] + std::abs(pool.x(i, 0) - 0.5);
  HistogramDensity a = fit_histogram(uni, pool, rsq);
  HistogramDensity b = fit_histogram(uni, pool, (1e3 * rsq).eval());
  CHECK((a.node_mass() - b.node_mass()).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((a.bin_mass() - b.bin_mass()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("all-zero residuals fall back to uniform and are flagged") {
  HistogramDensity uni = HistogramDensity::uniform(four_nodes(), 1, 0.0, 1.0, 8);
  SamplePoints pool = uni.sample(100, 1);
  bool flagged = false;
  HistogramDensity fit = fit_histogram(uni, pool, Vec::Zero(pool.count()), &flagged);
  CHECK(flagged);
  for (int n = 0; n < 4; ++n) CHECK(fit.node_mass()[n] == doctest::Approx(0.25));
}

TEST_CASE("sampling respects the discrete temporal distribution") {
  // point mass on node 1
  Vec mass = Vec::Zero(4);
  mass[1] = 1.0;
  HistogramDensity point(four_nodes(), mass, 0, 0.0, 1.0, Mat(4, 0));
  SamplePoints s = point.sample(500, 77);
  for (Eigen::Index i = 0; i < s.count(); ++i) CHECK(s.t[i] == doctest::Approx(0.375));

  // uniform model: per-node frequencies within 3 sigma of 1/4
  HistogramDensity uni = HistogramDensity::uniform(four_nodes(), 1, -1.0, 3.0, 8);
  SamplePoints u = uni.sample(100000, 123);
  Vec counts = Vec::Zero(4);
  for (Eigen::Index i = 0; i < u.count(); ++i) {
    counts[uni.node_index(u.t[i])] += 1.0;
    CHECK(u.x(i, 0) >= -1.0);
    CHECK(u.x(i, 0) <= 3.0);
  }
  const double sigma = std::sqrt(0.25 * 0.75 / 100000.0);
  for (int n = 0; n < 4; ++n) CHECK(std::abs(counts[n] / 100000.0 - 0.25) <= 3 * sigma);

  // determinism per seed
  SamplePoints a = uni.sample(64, 9), b = uni.sample(64, 9), c = uni.sample(64, 10);
  CHECK(a.t == b.t);
  CHECK(a.x == b.x);
  CHECK(a.t != c.t);
}

TEST_CASE("refinement routing on the two-subinterval grid") {
  TimeGrid grid = partition(0.0, 1.0, 2);
  auto rules = subinterval_rules(grid, QuadKind::GaussLegendre, 1);  // nodes 0.25, 0.75
  Mat spatial(2, 1);
  spatial << 0.2, 0.8;
  CollocationSets sets = make_collocation(grid, rules, spatial);

  SamplePoints one;
  one.t = Vec::Constant(1, rules[1].nodes[0]);
  one.x = Mat::Constant(1, 1, 0.3);

  CollocationSets r1 = refine_datasets(sets, one, Variant::IR1, grid, rules);
  CHECK(r1.s_r[1][0].rows() == 3);  // grew, keeping the old points
  CHECK(r1.s_r[1][0](2, 0) == doctest::Approx(0.3));
  CHECK(r1.s_r[0][0].rows() == 2);            // untouched node
  CHECK(r1.s_int[1].rows() == 1);             // replaced by the routed point
  CHECK(r1.s_int[1](0, 0) == doctest::Approx(0.3));
  CHECK(r1.s_int[0] == sets.s_int[0]);        // no routed points: keeps old set

  CollocationSets r2 = refine_datasets(sets, one, Variant::IR2, grid, rules);
  CHECK(r2.s_int[0] == sets.s_int[0]);
  CHECK(r2.s_int[1].rows() == 1);

  // a point at node (0,0) under R2 feeds every anchored interval k >= 0
  SamplePoints pair;
  pair.t.resize(2);
  pair.t << rules[0].nodes[0], rules[1].nodes[0];
  pair.x.resize(2, 1);
  pair.x << 0.4, 0.6;
  CollocationSets r2b = refine_datasets(sets, pair, Variant::IR2, grid, rules);
  CHECK(r2b.s_int[0].rows() == 1);
  CHECK(r2b.s_int[0](0, 0) == doctest::Approx(0.4));
  CHECK(r2b.s_int[1].rows() == 2);  // both points: T^(1) spans both subintervals

  // plain PINN leaves the integral sets untouched
  CollocationSets rp = refine_datasets(sets, pair, Variant::Pinn, grid, rules);
  CHECK(rp.s_int[0] == sets.s_int[0]);
  CHECK(rp.s_int[1] == sets.s_int[1]);

  // errors: empty refinement, non-node temporal value
  SamplePoints none;
  none.t = Vec(0);
  none.x = Mat(0, 1);
  CHECK_THROWS_AS(refine_datasets(sets, none, Variant::IR1, grid, rules),
                  std::invalid_argument);
  SamplePoints off;
  off.t = Vec::Constant(1, 0.5);
  off.x = Mat::Constant(1, 1, 0.1);
  CHECK_THROWS_AS(refine_datasets(sets, off, Variant::IR1, grid, rules),
                  std::invalid_argument);
}

TEST_CASE("zero adaptive iterations return the initial assembler") {
  Problem ode = make_simple_ode();
  TimeGrid grid = partition(0.0, 1.0, 2);
  auto rules = subinterval_rules(grid, QuadKind::GaussLegendre, 2);
  CollocationSets sets = make_collocation(grid, rules, Mat::Zero(1, 0));
  LossAssembler initial(ode, grid, rules, sets, Variant::IR1, LossWeights{});
  auto exact = make_exact_model("simple_ode");
  AdaptiveConfig acfg;
  acfg.n_adaptive = 0;
  TrainConfig tcfg;
  AdaptiveResult res = adaptive_loop(ode, *exact, initial, acfg, tcfg);
  CHECK(res.histories.empty());
  CHECK(res.new_points.empty());
  CHECK(res.assembler->sets().s_r.size() == 2);
}

TEST_CASE("fitted density steers samples into a concentrated region") {
  // Synthetic residual supported on x in [0.4, 0.6] - 20% of the domain.
  const int bins = 20;
  HistogramDensity uni = HistogramDensity::uniform(four_nodes(), 1, 0.0, 1.0, bins);
  SamplePoints pool = uni.sample(4000, 31);
  Vec rsq(pool.count());
  for (Eigen::Index i = 0; i < pool.count(); ++i)
    rsq[i] = (pool.x(i, 0) >= 0.4 && pool.x(i, 0) <= 0.6) ? 1.0 : 0.0;
  HistogramDensity fit = fit_histogram(uni, pool, rsq);
  SamplePoints pts = fit.sample(1000, 57);
  int inside = 0;
  for (Eigen::Index i = 0; i < pts.count(); ++i)
    if (pts.x(i, 0) >= 0.4 && pts.x(i, 0) <= 0.6) ++inside;
  CHECK(inside >= 600);
}

TEST_CASE("retrain budget caps the post-refinement training") {
  Problem ode = make_simple_ode();
  TimeGrid grid = partition(0.0, 1.0, 2);
  auto rules = subinterval_rules(grid, QuadKind::GaussLegendre, 2);
  CollocationSets sets = make_collocation(grid, rules, Mat::Zero(1, 0));
  LossAssembler initial(ode, grid, rules, sets, Variant::IR1, LossWeights{});
  auto exact = make_exact_model("simple_ode");
  AdaptiveConfig acfg;
  acfg.n_adaptive = 2;
  acfg.n_new = 4;
  acfg.candidate_pool_size = 40;
  acfg.retrain_epochs = 0;  // refine only, no retraining
  TrainConfig tcfg;
  tcfg.epochs = 7;
  AdaptiveResult res = adaptive_loop(ode, *exact, initial, acfg, tcfg);
  CHECK(res.histories.size() == 2);
  CHECK(res.histories[0].epochs.empty());
  CHECK(res.new_points.size() == 2);

  acfg.retrain_epochs = -2;
  CHECK_THROWS_AS(acfg.validate(), std::invalid_argument);
}
