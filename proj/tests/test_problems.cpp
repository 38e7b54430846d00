#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "irpinn/problems.hpp"
#include "irpinn/residual.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

using namespace irpinn;

TEST_CASE("preset defaults") {
  Problem ode = make_problem("simple_ode");
  CHECK(ode.spatial_dim == 0);
  CHECK(ode.components == 1);
  CHECK(ode.T == 5.0);
  CHECK(ode.exact(Vec::Zero(1), Mat(1, 0))(0, 0) == doctest::Approx(1.0));

  Problem lorenz = make_problem("lorenz");
  CHECK(lorenz.components == 3);
  CHECK(lorenz.T == 20.0);

  Problem ks = make_problem("ks");
  CHECK(ks.spatial_dim == 1);
  CHECK(ks.t0 == doctest::Approx(0.4));
  CHECK(ks.T == doctest::Approx(0.9));
  CHECK(ks.spatial_orders == std::set<int>{1, 2, 4});
  CHECK(ks.bc == BcKind::PeriodicExact);

  Problem bbe = make_problem("bbe");
  CHECK(bbe.components == 2);
  CHECK(bbe.spatial_orders == std::set<int>{1, 3});
  CHECK(bbe.T == 4.0);
  CHECK(bbe.spatial_domain.at(0).first == -20.0);
  CHECK(bbe.spatial_domain.at(0).second == 20.0);
  CHECK(bbe.bc == BcKind::Dirichlet);

  CHECK_THROWS_AS(make_problem("heat"), std::invalid_argument);
}

TEST_CASE("closed-form solutions") {
  CHECK(exact_solution("simple_ode", Vec::Zero(1), Mat(1, 0))(0, 0) == doctest::Approx(1.0));

  // exponent -x + 3.5 t - 7 vanishes at (0, -7): u = 2 - 1/4, v = -1/8
  Mat x7 = Mat::Constant(1, 1, -7.0);
  Mat uv = exact_solution("bbe", Vec::Zero(1), x7);
  CHECK(uv(0, 0) == doctest::Approx(1.75).epsilon(1e-14));
  CHECK(uv(0, 1) == doctest::Approx(-0.125).epsilon(1e-14));

  Mat far = exact_solution("bbe", Vec::Zero(1), Mat::Constant(1, 1, 60.0));
  CHECK(far(0, 0) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(std::abs(far(0, 1)) < 1e-12);

  CHECK_THROWS_AS(exact_solution("lorenz", Vec::Zero(1), Mat(1, 0)), std::invalid_argument);
  CHECK_THROWS_AS(exact_solution("ks", Vec::Zero(1), Mat::Zero(1, 1)), std::invalid_argument);
}

TEST_CASE("exact solutions annihilate their residuals") {
  Problem bbe = make_problem("bbe");
  auto soliton = make_exact_model("bbe");
  for (double t : {0.0, 1.0, 3.0})
    for (double x : {-8.0, -3.0, 0.0, 2.0}) {
      Vec r = pointwise_residual(bbe, *soliton, t, Vec::Constant(1, x));
      CHECK(std::abs(r[0]) < 1e-9);
      CHECK(std::abs(r[1]) < 1e-9);
    }

  Problem ode = make_simple_ode();
  auto exp_model = make_exact_model("simple_ode");
  CHECK(std::abs(pointwise_residual(ode, *exp_model, 1.3, Vec())[0]) < 1e-9);
}

TEST_CASE("rk4 solver basics") {
  OdeSystem lin;
  lin.dimension = 1;
  lin.rhs = [](double, const Vec& y) { return y; };
  lin.y0 = Vec::Ones(1);
  lin.t0 = 0.0;
  lin.T = 0.1;
  FieldSnapshot one = rk4_solve(lin, 0.1);
  CHECK(one.values(1, 0) == doctest::Approx(1.1051708333).epsilon(1e-10));

  OdeSystem still;
  still.dimension = 2;
  still.rhs = [](double, const Vec& y) { return Vec::Zero(y.size()); };
  still.y0 = (Vec(2) << 4.0, -1.0).finished();
  still.T = 1.0;
  FieldSnapshot flat = rk4_solve(still, 0.25);
  for (Eigen::Index i = 0; i < flat.times.size(); ++i) {
    CHECK(flat.values(i, 0) == 4.0);
    CHECK(flat.values(i, 1) == -1.0);
  }

  // halving dt shrinks the end-point error by about 2^4
  lin.T = 1.0;
  const double exact = std::exp(1.0);
  const double e1 = std::abs(rk4_solve(lin, 0.1).values.bottomRows(1)(0, 0) - exact);
  const double e2 = std::abs(rk4_solve(lin, 0.05).values.bottomRows(1)(0, 0) - exact);
  CHECK(e1 / e2 == doctest::Approx(16.0).epsilon(0.2));

  CHECK_THROWS_AS(rk4_solve(lin, 0.0), std::invalid_argument);
}

TEST_CASE("lorenz vector field and reference self-consistency") {
  OdeSystem sys = lorenz_system();
  Vec f = sys.rhs(0.0, Vec::Ones(3));
  CHECK(f[0] == doctest::Approx(0.0));
  CHECK(f[1] == doctest::Approx(26.0));
  CHECK(f[2] == doctest::Approx(1.0 - 8.0 / 3.0).epsilon(1e-14));

  sys.T = 5.0;
  FieldSnapshot coarse = rk4_solve(sys, 1e-4);
  FieldSnapshot fine = rk4_solve(sys, 5e-5);
  // compare at the shared terminal time
  Vec a = coarse.values.bottomRows(1).transpose();
  Vec b = fine.values.bottomRows(1).transpose();
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("etdrk4 fixed point and linear dispersion") {
  const int n = 64;
  FieldSnapshot zero = etdrk4_ks(Vec::Zero(n), 1.0, 0.5, 0.1, 0.0, 1e-3, 200, 200);
  CHECK(zero.values.cwiseAbs().maxCoeff() < 1e-13);

  // alpha = 0 makes the equation linear; u0 = cos(x) evolves as
  // exp((beta - gamma) t) cos(x) since u_xx = -u and u_xxxx = u.
  const double beta = 0.1, gamma = 0.01, t_end = 0.5;
  Vec x = ks_grid(n);
  Vec u0 = x.array().cos();
  FieldSnapshot lin = etdrk4_ks(u0, 0.0, beta, gamma, 0.0, 1e-3, 500, 500);
  const double amp = std::exp((beta - gamma) * t_end);
  for (int i = 0; i < n; ++i)
    CHECK(std::abs(lin.values.bottomRows(1)(0, i) - amp * std::cos(x[i])) < 1e-6);
}

TEST_CASE("etdrk4 nonlinear step-halving self-consistency") {
  const int n = 64;
  Vec u0 = ks_initial_state(n);
  const double a = 100.0 / 16, b = 100.0 / 256, g = 100.0 / 65536;
  FieldSnapshot coarse = etdrk4_ks(u0, a, b, g, 0.0, 2e-4, 500, 500);
  FieldSnapshot fine = etdrk4_ks(u0, a, b, g, 0.0, 1e-4, 1000, 1000);
  Vec uc = coarse.values.bottomRows(1).transpose();
  Vec uf = fine.values.bottomRows(1).transpose();
  CHECK((uc - uf).norm() / uf.norm() < 1e-6);
}

TEST_CASE("ks initial profile on the periodic grid") {
  const int n = 32;
  Vec x = ks_grid(n);
  Vec u = ks_initial_state(n);
  CHECK(x[0] == doctest::Approx(0.0));
  CHECK(x[1] == doctest::Approx(2.0 * M_PI / n).epsilon(1e-14));
  for (int i = 0; i < n; ++i)
    CHECK(u[i] == doctest::Approx(std::cos(x[i]) * (1.0 + std::sin(x[i]))).epsilon(1e-14));
}

TEST_CASE("snapshot csv round trip of the header") {
  FieldSnapshot snap;
  snap.times = (Vec(2) << 0.0, 0.5).finished();
  snap.grid = (Vec(2) << 0.0, 1.0).finished();
  snap.values = (Mat(2, 2) << 1, 2, 3, 4).finished();
  const std::string path = "snapshot_test.csv";
  write_snapshot_csv(snap, path);
  std::ifstream f(path);
  REQUIRE(f.good());
  std::string line;
  std::getline(f, line);
  CHECK(line.rfind("#", 0) == 0);  // versioned header comment
  std::getline(f, line);
  CHECK(line.find("t") != std::string::npos);
  std::remove(path.c_str());
}
