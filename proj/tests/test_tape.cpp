#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "irpinn/params.hpp"

#include <cmath>
#include <random>

using namespace irpinn;

TEST_CASE("eager values of basic ops") {
  Tape tape;
  Mat a(2, 2), b(2, 2);
  a << 1, 2, 3, 4;
  b << 5, 6, 7, 8;
  Var va = tape.constant(a), vb = tape.constant(b);
  CHECK(tape.value(tape.matmul(va, vb)).isApprox(a * b));
  CHECK(tape.value(tape.add(va, vb)).isApprox(a + b));
  CHECK(tape.value(tape.sub(va, vb)).isApprox(a - b));
  CHECK(tape.value(tape.cwise_mul(va, vb)).isApprox(a.cwiseProduct(b)));
  CHECK(tape.value(tape.cwise_div(va, vb)).isApprox(a.cwiseQuotient(b)));
  CHECK(tape.value(tape.scale(va, 3.0)).isApprox(3.0 * a));
  CHECK(tape.value(tape.shift(va, 1.5)).isApprox((a.array() + 1.5).matrix()));
  CHECK(tape.value(tape.tanh(va)).isApprox(a.array().tanh().matrix()));
  CHECK(tape.value(tape.sum_all(va))(0, 0) == doctest::Approx(10.0));
  CHECK(tape.value(tape.col(va, 1)).isApprox(a.col(1)));
}

TEST_CASE("shape mismatches rejected") {
  Tape tape;
  Var a = tape.constant(Mat::Ones(2, 3));
  Var b = tape.constant(Mat::Ones(2, 2));
  CHECK_THROWS_AS(tape.add(a, b), std::invalid_argument);
  CHECK_THROWS_AS(tape.matmul(a, b), std::invalid_argument);
  CHECK_THROWS_AS(tape.cwise_mul(a, b), std::invalid_argument);
}

TEST_CASE("gradient of theta squared") {
  Tape tape;
  Var th = tape.leaf(Mat::Constant(1, 1, 3.0));
  Var loss = tape.cwise_mul(th, th);
  tape.set_output(loss);
  tape.backward();
  CHECK(tape.grad(th)(0, 0) == doctest::Approx(6.0));
}

TEST_CASE("gradient of a parameter sum is all ones") {
  Tape tape;
  Mat th0(2, 3);
  th0 << 1, -2, 0.5, 4, 1, 9;
  Var th = tape.leaf(th0);
  tape.set_output(tape.sum_all(th));
  tape.backward();
  CHECK(tape.grad(th).isApprox(Mat::Ones(2, 3)));
}

TEST_CASE("backward without output throws") {
  Tape tape;
  tape.leaf(Mat::Ones(1, 1));
  CHECK_THROWS(tape.backward());
}

namespace {

// A 2-layer tanh scalar network recorded with raw tape ops.
double net_loss(Tape* tape_out, const Vec& flat, const Mat& x, Var* w1v = nullptr,
                Var* w2v = nullptr) {
  static thread_local Tape scratch;
  Tape& tape = *(tape_out ? tape_out : &scratch);
  if (!tape_out) tape = Tape();
  const int in = static_cast<int>(x.cols()), h = 5;
  Mat w1 = Eigen::Map<const Mat>(flat.data(), in, h);
  Mat w2 = Eigen::Map<const Mat>(flat.data() + in * h, h, 1);
  Var a = tape.leaf(w1);
  Var b = tape.leaf(w2);
  if (w1v) *w1v = a;
  if (w2v) *w2v = b;
  Var hidden = tape.tanh(tape.matmul(tape.constant(x), a));
  Var out = tape.matmul(hidden, b);
  Var loss = tape.sum_all(tape.cwise_mul(out, out));
  tape.set_output(loss);
  return tape.value(loss)(0, 0);
}

}  // namespace

TEST_CASE("reverse gradient matches finite differences on a tanh net") {
  std::mt19937_64 rng(3);
  auto u01 = [&] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
  const int in = 3, h = 5;
  Mat x(4, in);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = 2.0 * u01() - 1.0;
  Vec flat(in * h + h);
  for (Eigen::Index i = 0; i < flat.size(); ++i) flat[i] = u01() - 0.5;

  Tape tape;
  Var w1, w2;
  net_loss(&tape, flat, x, &w1, &w2);
  tape.backward();
  Vec grad(flat.size());
  Eigen::Map<Mat>(grad.data(), in, h) = tape.grad(w1);
  Eigen::Map<Mat>(grad.data() + in * h, h, 1) = tape.grad(w2);

  const double step = 1e-6;
  for (Eigen::Index i = 0; i < flat.size(); ++i) {
    Vec up = flat, dn = flat;
    up[i] += step;
    dn[i] -= step;
    const double fd = (net_loss(nullptr, up, x) - net_loss(nullptr, dn, x)) / (2 * step);
    CHECK(std::abs(grad[i] - fd) <= 1e-6 * std::max(1.0, std::abs(fd)));
  }
}

TEST_CASE("reverse sweep visits each node once") {
  Tape tape;
  Var a = tape.leaf(Mat::Ones(3, 3));
  Var b = tape.tanh(a);
  Var c = tape.add(b, b);  // diamond: b feeds twice
  tape.set_output(tape.sum_all(tape.cwise_mul(c, c)));
  tape.backward();
  CHECK(tape.visit_count() <= tape.size());
}

TEST_CASE("broadcast ops and hcat adjoints") {
  Tape tape;
  Mat a0(3, 2);
  a0 << 1, 2, 3, 4, 5, 6;
  Var a = tape.leaf(a0);
  Var row = tape.leaf(Mat::Constant(1, 2, 0.5));
  Var col = tape.leaf(Mat::Constant(3, 1, 2.0));
  Var s = tape.mul_col(tape.add_row(a, row), col);
  Var h = tape.hcat({s, a});
  tape.set_output(tape.sum_all(h));
  tape.backward();
  // d/da of sum(2*(a + .5) + a) = 2 + 1 entrywise
  CHECK(tape.grad(a).isApprox(Mat::Constant(3, 2, 3.0)));
  // d/drow = sum over rows of col factor = 3 * 2
  CHECK(tape.grad(row).isApprox(Mat::Constant(1, 2, 6.0)));
  // d/dcol_i = row sum of (a + .5)
  Mat expect = (a0.array() + 0.5).rowwise().sum();
  CHECK(tape.grad(col).isApprox(expect));
}

TEST_CASE("param vector layout round trip and reverse_gradient") {
  ParamVector p;
  p.values.resize(6);
  p.values << 1, 2, 3, 4, 5, 6;
  p.layout = {{0, 2, 2}, {4, 1, 2}};
  p.validate();
  CHECK(p.block(0).rows() == 2);
  CHECK(p.block(1)(0, 1) == 6);

  Tape tape;
  BoundParams bound = bind_params(tape, p);
  // loss = sum of squares of every parameter -> grad = 2 * values
  Var total = tape.add(tape.sum_all(tape.cwise_mul(bound.blocks[0], bound.blocks[0])),
                       tape.sum_all(tape.cwise_mul(bound.blocks[1], bound.blocks[1])));
  tape.set_output(total);
  ParamVector g = reverse_gradient(tape, p, bound);
  CHECK(g.values.isApprox(2.0 * p.values));

  ParamVector bad = p;
  bad.layout[1].offset = 3;  // overlap
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}
