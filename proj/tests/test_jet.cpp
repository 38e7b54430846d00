#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "irpinn/jet.hpp"

#include <cmath>
#include <random>

using namespace irpinn;

namespace {

// A nontrivial smooth chain used for finite-difference oracles.
Jet chain(const Jet& x) {
  Jet a = jet_tanh(jet_scale(x, 0.8));
  Jet b = jet_exp(jet_sin(x));
  Jet c = jet_cos(jet_shift(jet_scale(x, 0.5), -0.3));
  Jet d = jet_div(jet_shift(jet_mul(x, x), 2.0), jet_shift(jet_exp(jet_scale(x, -1.0)), 1.0));
  return jet_add(jet_add(a, jet_mul(b, c)), d);
}

double chain_value(double x) {
  return chain(jet_lift(x, false, 0))[0];
}

// Fourth-order central finite differences for the k-th derivative, with the
// step tuned per order against the roundoff/truncation tradeoff.
double fd_derivative(int k, double x) {
  auto f = [](double t) { return chain_value(t); };
  switch (k) {
    case 1: {
      const double h = 1e-4;
      return (-f(x + 2 * h) + 8 * f(x + h) - 8 * f(x - h) + f(x - 2 * h)) / (12 * h);
    }
    case 2: {
      const double h = 1e-3;
      return (-f(x + 2 * h) + 16 * f(x + h) - 30 * f(x) + 16 * f(x - h) - f(x - 2 * h)) /
             (12 * h * h);
    }
    case 3: {
      const double h = 5e-3;
      return (-f(x + 3 * h) + 8 * f(x + 2 * h) - 13 * f(x + h) + 13 * f(x - h) -
              8 * f(x - 2 * h) + f(x - 3 * h)) /
             (8 * h * h * h);
    }
    default: {
      const double h = 1e-2;
      return (-f(x + 3 * h) + 12 * f(x + 2 * h) - 39 * f(x + h) + 56 * f(x) -
              39 * f(x - h) + 12 * f(x - 2 * h) - f(x - 3 * h)) /
             (6 * h * h * h * h);
    }
  }
}

double factorial(int k) { return k <= 1 ? 1.0 : k * factorial(k - 1); }

}  // namespace

TEST_CASE("jet_lift seeds") {
  Jet j = jet_lift(2.0, true, 2);
  CHECK(j.c == std::vector<double>{2, 1, 0});
  Jet u = jet_lift(3.0, false, 2);
  CHECK(u.c == std::vector<double>{3, 0, 0});
  Jet z = jet_lift(0.0, true, 4);
  CHECK(z.c == std::vector<double>{0, 1, 0, 0, 0});
  CHECK_THROWS_AS(jet_lift(1.0, true, 5), std::invalid_argument);
  CHECK_THROWS_AS(jet_lift(1.0, true, -1), std::invalid_argument);
}

TEST_CASE("jet primitives on small examples") {
  Jet a{{2, 1, 0}}, b{{3, 0, 0}};
  Jet m = jet_primitive(JetPrimitive::Mul, a, &b);
  CHECK(m.c == std::vector<double>{6, 3, 0});

  Jet x{{0, 1, 0}};
  Jet t = jet_primitive(JetPrimitive::Tanh, x);
  CHECK(t[0] == doctest::Approx(0.0));
  CHECK(t[1] == doctest::Approx(1.0));
  CHECK(t[2] == doctest::Approx(0.0));

  Jet e = jet_primitive(JetPrimitive::Exp, x);
  CHECK(e[0] == doctest::Approx(1.0));
  CHECK(e[1] == doctest::Approx(1.0));
  CHECK(e[2] == doctest::Approx(0.5));
}

TEST_CASE("division by zero constant term") {
  Jet a{{1, 0, 0}}, z{{0, 1, 0}};
  CHECK_THROWS_AS(jet_primitive(JetPrimitive::Div, a, &z), std::domain_error);
}

TEST_CASE("jet coefficients match finite differences to order 4") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 12; ++trial) {
    const double x0 = -1.5 + 3.0 * static_cast<double>(rng() >> 11) * 0x1.0p-53;
    Jet j = chain(jet_lift(x0, true, 4));
    for (int k = 1; k <= 4; ++k) {
      const double got = factorial(k) * j[k];
      const double want = fd_derivative(k, x0);
      CHECK(std::abs(got - want) <=
            1e-4 * std::max({1.0, std::abs(got), std::abs(want)}));
    }
  }
}

TEST_CASE("analytic identities hold coefficient-wise") {
  // tanh = (e^g - e^-g) / (e^g + e^-g), sin^2 + cos^2 = 1
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 8; ++trial) {
    const double x0 = -2.0 + 4.0 * static_cast<double>(rng() >> 11) * 0x1.0p-53;
    Jet g = jet_scale(jet_lift(x0, true, 4), 0.7);
    Jet th = jet_tanh(g);
    Jet ep = jet_exp(g);
    Jet em = jet_exp(jet_scale(g, -1.0));
    Jet ref = jet_div(jet_sub(ep, em), jet_add(ep, em));
    for (int k = 0; k <= 4; ++k) CHECK(th[k] == doctest::Approx(ref[k]).epsilon(1e-12));

    Jet s = jet_sin(g), c = jet_cos(g);
    Jet one = jet_add(jet_mul(s, s), jet_mul(c, c));
    CHECK(one[0] == doctest::Approx(1.0).epsilon(1e-12));
    for (int k = 1; k <= 4; ++k) CHECK(std::abs(one[k]) < 1e-12);
  }
}

TEST_CASE("pow_int equals repeated multiplication semantics") {
  Jet x = jet_lift(1.3, true, 3);
  Jet p = jet_primitive(JetPrimitive::PowInt, x, nullptr, 4);
  Jet q = jet_mul(jet_mul(x, x), jet_mul(x, x));
  for (int k = 0; k <= 3; ++k) CHECK(p[k] == doctest::Approx(q[k]).epsilon(1e-14));
  Jet p0 = jet_primitive(JetPrimitive::PowInt, x, nullptr, 0);
  CHECK(p0[0] == doctest::Approx(1.0));
  CHECK(p0[1] == doctest::Approx(0.0));
}

TEST_CASE("order mismatch rejected") {
  Jet a{{1, 2}}, b{{1, 2, 3}};
  CHECK_THROWS_AS(jet_add(a, b), std::invalid_argument);
}

TEST_CASE("batched jets on a tape hold the seeded columns") {
  Tape tape;
  Vec values(3), seeds(3);
  values << 1, 2, 3;
  seeds << 1, 1, 1;
  JetVar j = jet_lift_batch(tape, values, seeds, 2);
  CHECK(j.order() == 2);
  CHECK(tape.value(j[0]).col(0).isApprox(values));
  CHECK(tape.value(j[1]).col(0).isApprox(seeds));
  CHECK(tape.value(j[2]).cwiseAbs().maxCoeff() == 0.0);

  // batched recurrences agree with scalar jets entrywise
  JetVar e = jet_exp(j);
  for (Eigen::Index i = 0; i < 3; ++i) {
    Jet s = jet_exp(jet_lift(values[i], true, 2));
    for (int k = 0; k <= 2; ++k)
      CHECK(tape.value(e[k])(i, 0) == doctest::Approx(s[k]).epsilon(1e-14));
  }
}
