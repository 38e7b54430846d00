#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "irpinn/optimizer.hpp"
#include "irpinn/problems.hpp"

#include <cmath>
#include <memory>

using namespace irpinn;

namespace {

// Scalar reference Adam (textbook bias-corrected form) for the oracle.
double adam_reference(double param, double grad, double lr, int steps) {
  double m = 0, v = 0;
  for (int t = 1; t <= steps; ++t) {
    m = 0.9 * m + 0.1 * grad;
    v = 0.999 * v + 0.001 * grad * grad;
    const double mh = m / (1 - std::pow(0.9, t));
    const double vh = v / (1 - std::pow(0.999, t));
    param -= lr * mh / (std::sqrt(vh) + 1e-8);
  }
  return param;
}

LossAssembler ode_assembler(const Problem& p, int n, int m, Variant v) {
  TimeGrid grid = partition(0.0, 1.0, n);
  auto rules = subinterval_rules(grid, QuadKind::GaussLegendre, m);
  CollocationSets sets = make_collocation(grid, rules, Mat::Zero(1, 0));
  return LossAssembler(p, grid, std::move(rules), std::move(sets), v, LossWeights{});
}

}  // namespace

TEST_CASE("adam step against a scalar reference implementation") {
  AdamState st = AdamState::zeros(1);
  Vec p = Vec::Zero(1), g = Vec::Ones(1);
  adam_step(st, p, g, 1e-3);
  CHECK(st.step_count == 1);
  CHECK(std::abs(p[0] - (-1e-3)) < 1e-8);
  CHECK(std::abs(p[0] - adam_reference(0.0, 1.0, 1e-3, 1)) < 1e-15);

  adam_step(st, p, g, 1e-3);
  CHECK(std::abs(p[0] - adam_reference(0.0, 1.0, 1e-3, 2)) < 1e-15);
  CHECK(p[0] < -1e-3);  // monotone in the -grad direction

  // zero gradient leaves parameters unchanged but advances the counter
  AdamState z = AdamState::zeros(2);
  Vec q(2);
  q << 3.0, -1.0;
  adam_step(z, q, Vec::Zero(2), 0.1);
  CHECK(q[0] == 3.0);
  CHECK(q[1] == -1.0);
  CHECK(z.step_count == 1);

  Vec bad(2);
  bad << 1.0, std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS(adam_step(z, q, bad, 0.1));
}

TEST_CASE("learning-rate schedule") {
  TrainConfig cfg;
  cfg.lr0 = 1e-3;
  cfg.decay_rate = 0.9;
  cfg.step_size = 1000;
  CHECK(lr_at(1, cfg) == doctest::Approx(1e-3));
  CHECK(lr_at(999, cfg) == doctest::Approx(1e-3));
  CHECK(lr_at(2000, cfg) == doctest::Approx(8.1e-4).epsilon(1e-12));
  double prev = 1e9;
  for (long e = 1; e <= 5000; e += 97) {
    const double lr = lr_at(e, cfg);
    CHECK(lr <= prev + 1e-18);
    prev = lr;
  }
  cfg.decay_rate = 1.0;
  CHECK(lr_at(12345, cfg) == doctest::Approx(1e-3));

  TrainConfig bad;
  bad.epochs = -1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = TrainConfig{};
  bad.decay_rate = 1.5;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("relative l2 metric") {
  Vec a(3), b(3);
  a << 1, 2, 3;
  b = a;
  CHECK(relative_l2(a, b) == 0.0);
  CHECK(relative_l2(2 * a, a) == doctest::Approx(1.0));
  Vec p(1), r(1);
  p << 1.1;
  r << 1.0;
  CHECK(relative_l2(p, r) == doctest::Approx(0.1).epsilon(1e-12));
  CHECK_THROWS_AS(relative_l2(p, Vec::Zero(1)), std::invalid_argument);

  Mat pm(2, 2), rm(2, 2);
  pm << 1, 2, 1, 2;
  rm << 1, 1, 1, 1;
  Vec cols = relative_l2_columns(pm, rm);
  CHECK(cols[0] == doctest::Approx(0.0));
  CHECK(cols[1] == doctest::Approx(1.0));
}

TEST_CASE("zero-epoch training is a no-op") {
  Problem ode = make_simple_ode();
  Network net = init_glorot({1, 8, 1}, 2);
  NetworkModel model(net, InputScaling{0.0, 1.0}, {}, std::nullopt, HardIC{Vec::Ones(1), 0.0});
  Vec before = model.get_params();
  LossAssembler asmb = ode_assembler(ode, 2, 2, Variant::Pinn);
  TrainConfig cfg;
  cfg.epochs = 0;
  TrainHistory hist = train(model, asmb, cfg);
  CHECK(model.get_params() == before);
  CHECK(hist.epochs.empty());
}

TEST_CASE("convex probe converges to the analytic minimizer") {
  // Model u(t) = theta * t for u_t = 3 (via N[u] = -3 constant forcing trick):
  // the pointwise loss is a quadratic in theta minimized at theta = 3.
  Problem p;
  p.name = "probe";
  p.operator_N = [](Tape& tape, const BundleBatch& b, const Vec&, const Mat&) {
    return tape.shift(tape.scale(b.u, 0.0), -3.0);
  };
  p.ic_g = [](const Mat& x) { return Mat::Zero(x.rows(), 1); };

  Network net = init_glorot({1, 1}, 0);
  net.params.values << 0.0, 0.0;
  NetworkModel model(net, InputScaling{-1.0, 1.0}, {});  // identity t scaling

  LossAssembler asmb = ode_assembler(p, 2, 2, Variant::Pinn);
  TrainConfig cfg;
  cfg.epochs = 10000;
  cfg.lr0 = 1e-2;
  cfg.decay_rate = 1.0;
  cfg.eval_every = 100000;
  TrainHistory hist = train(model, asmb, cfg);
  // u = w * t + b with d(u)/dt = w; the residual w - 3 drives w -> 3.
  CHECK(model.get_params()[0] == doctest::Approx(3.0).epsilon(1e-6));
  CHECK(hist.losses.back().total < 1e-10);
  CHECK(hist.epochs.size() == 10000);
}

TEST_CASE("training is deterministic and decreases the loss") {
  Problem ode = make_simple_ode();
  auto run = [&] {
    Network net = init_glorot({1, 10, 1}, 7);
    NetworkModel model(net, InputScaling{0.0, 1.0}, {}, std::nullopt,
                       HardIC{Vec::Ones(1), 0.0});
    LossAssembler asmb = ode_assembler(ode, 4, 2, Variant::IR1);
    TrainConfig cfg;
    cfg.epochs = 200;
    cfg.variant = Variant::IR1;
    cfg.eval_every = 1000;
    TrainHistory h = train(model, asmb, cfg);
    return std::pair<Vec, TrainHistory>{model.get_params(), std::move(h)};
  };
  auto [p1, h1] = run();
  auto [p2, h2] = run();
  CHECK(p1 == p2);
  REQUIRE(h1.losses.size() == h2.losses.size());
  for (std::size_t i = 0; i < h1.losses.size(); ++i)
    CHECK(h1.losses[i].total == h2.losses[i].total);
  CHECK(h1.losses.back().total < h1.losses.front().total);
  for (std::size_t i = 1; i < h1.epochs.size(); ++i) CHECK(h1.epochs[i] > h1.epochs[i - 1]);
}

TEST_CASE("time marching chains initial conditions") {
  // March u' = u across two subdomains with tiny nets; the factory anchors
  // each subdomain's HardIC at the previous terminal prediction.
  Problem ode = make_simple_ode();
  const double dt = 0.5;
  std::vector<double> handoffs;
  SubdomainFactory factory = [&](int k, Model* prev) {
    const double a = k * dt;
    double u0 = 1.0;
    if (prev) u0 = evaluate_values(*prev, Vec::Constant(1, a), Mat(1, 0))(0, 0);
    handoffs.push_back(u0);
    Network net = init_glorot({1, 10, 1}, 100 + k);
    auto model = std::make_shared<NetworkModel>(
        net, InputScaling{a, a + dt}, std::vector<InputScaling>{}, std::nullopt,
        HardIC{Vec::Constant(1, u0), a});
    TimeGrid grid = partition(a, a + dt, 4);
    auto rules = subinterval_rules(grid, QuadKind::GaussLegendre, 2);
    CollocationSets sets = make_collocation(grid, rules, Mat::Zero(1, 0));
    auto asmb = std::make_shared<LossAssembler>(ode, grid, rules, sets, Variant::IR2,
                                               LossWeights{});
    return Subdomain{model, asmb};
  };
  TrainConfig cfg;
  cfg.epochs = 4000;
  cfg.variant = Variant::IR2;
  cfg.eval_every = 100000;
  MarchResult res = time_march(2, factory, cfg);
  REQUIRE(res.subdomains.size() == 2);
  REQUIRE(handoffs.size() == 2);
  CHECK(handoffs[0] == 1.0);
  // handoff near e^0.5 and terminal value near e^1
  CHECK(handoffs[1] == doctest::Approx(std::exp(0.5)).epsilon(2e-2));
  const double terminal =
      evaluate_values(*res.subdomains[1].model, Vec::Constant(1, 1.0), Mat(1, 0))(0, 0);
  CHECK(terminal == doctest::Approx(std::exp(1.0)).epsilon(2e-2));
}

TEST_CASE("schedule offset continues the decayed learning rate") {
  TrainConfig cfg;
  cfg.lr0 = 1e-3;
  cfg.decay_rate = 0.9;
  cfg.step_size = 1000;
  cfg.schedule_offset = 2500;
  cfg.epochs = 1;
  CHECK(lr_at(1 + cfg.schedule_offset, cfg) == doctest::Approx(1e-3 * 0.9 * 0.9).epsilon(1e-12));
  cfg.schedule_offset = -1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
