#pragma once

#include "irpinn/tape.hpp"

#include <array>
#include <stdexcept>
#include <string>
#include <vector>

namespace irpinn {

constexpr int kMaxJetOrder = 4;

// Truncated Taylor expansion c_0 + c_1 v + ... + c_K v^K of a quantity with
// respect to one tracked scalar input v. Coefficients store derivative/k!.
// V is either double (scalar jets) or Var (batched jets recorded on a tape,
// each coefficient a matrix over the collocation batch).
template <class V>
struct BasicJet {
  std::vector<V> c;

  int order() const { return static_cast<int>(c.size()) - 1; }
  const V& operator[](int k) const { return c[static_cast<std::size_t>(k)]; }
  V& operator[](int k) { return c[static_cast<std::size_t>(k)]; }
};

using Jet = BasicJet<double>;
using JetVar = BasicJet<Var>;

namespace detail {
template <class V>
void require_same_order(const BasicJet<V>& a, const BasicJet<V>& b) {
  if (a.order() != b.order())
    throw std::invalid_argument("jet order mismatch");
}
}  // namespace detail

template <class V>
BasicJet<V> jet_add(const BasicJet<V>& a, const BasicJet<V>& b) {
  detail::require_same_order(a, b);
  BasicJet<V> r;
  r.c.reserve(a.c.size());
  for (std::size_t k = 0; k < a.c.size(); ++k) r.c.push_back(add(a.c[k], b.c[k]));
  return r;
}

template <class V>
BasicJet<V> jet_sub(const BasicJet<V>& a, const BasicJet<V>& b) {
  detail::require_same_order(a, b);
  BasicJet<V> r;
  r.c.reserve(a.c.size());
  for (std::size_t k = 0; k < a.c.size(); ++k) r.c.push_back(sub(a.c[k], b.c[k]));
  return r;
}

template <class V>
BasicJet<V> jet_scale(const BasicJet<V>& a, double s) {
  BasicJet<V> r;
  r.c.reserve(a.c.size());
  for (const V& ck : a.c) r.c.push_back(scale(ck, s));
  return r;
}

template <class V>
BasicJet<V> jet_shift(const BasicJet<V>& a, double s) {
  BasicJet<V> r = a;
  r.c[0] = shift(r.c[0], s);
  return r;
}

// Cauchy product.
template <class V>
BasicJet<V> jet_mul(const BasicJet<V>& a, const BasicJet<V>& b) {
  detail::require_same_order(a, b);
  const int K = a.order();
  BasicJet<V> r;
  r.c.reserve(a.c.size());
  for (int k = 0; k <= K; ++k) {
    V acc = mul(a.c[0], b.c[k]);
    for (int j = 1; j <= k; ++j) acc = add(acc, mul(a.c[j], b.c[k - j]));
    r.c.push_back(acc);
  }
  return r;
}

template <class V>
BasicJet<V> jet_div(const BasicJet<V>& a, const BasicJet<V>& b) {
  detail::require_same_order(a, b);
  const int K = a.order();
  BasicJet<V> q;
  q.c.reserve(a.c.size());
  q.c.push_back(div(a.c[0], b.c[0]));
  for (int k = 1; k <= K; ++k) {
    V acc = a.c[k];
    for (int j = 1; j <= k; ++j) acc = sub(acc, mul(b.c[j], q.c[k - j]));
    q.c.push_back(div(acc, b.c[0]));
  }
  return q;
}

template <class V>
BasicJet<V> jet_pow_int(const BasicJet<V>& a, int n) {
  if (n < 0) throw std::invalid_argument("jet_pow_int: negative exponent");
  BasicJet<V> r;
  r.c.reserve(a.c.size());
  r.c.push_back(shift(zeros_like(a.c[0]), 1.0));
  for (std::size_t k = 1; k < a.c.size(); ++k) r.c.push_back(zeros_like(a.c[k]));
  for (int i = 0; i < n; ++i) r = jet_mul(r, a);
  return r;
}

// exp via u_k = (1/k) sum_{j=1..k} j g_j u_{k-j}
template <class V>
BasicJet<V> jet_exp(const BasicJet<V>& g) {
  const int K = g.order();
  BasicJet<V> u;
  u.c.reserve(g.c.size());
  u.c.push_back(exp(g.c[0]));
  for (int k = 1; k <= K; ++k) {
    V acc = scale(mul(g.c[1], u.c[k - 1]), 1.0);
    for (int j = 2; j <= k; ++j)
      acc = add(acc, scale(mul(g.c[j], u.c[k - j]), static_cast<double>(j)));
    u.c.push_back(scale(acc, 1.0 / k));
  }
  return u;
}

template <class V>
void jet_sin_cos(const BasicJet<V>& g, BasicJet<V>& s, BasicJet<V>& c) {
  const int K = g.order();
  s.c.clear();
  c.c.clear();
  s.c.push_back(sin(g.c[0]));
  c.c.push_back(cos(g.c[0]));
  for (int k = 1; k <= K; ++k) {
    V sa = scale(mul(g.c[1], c.c[k - 1]), 1.0);
    V ca = scale(mul(g.c[1], s.c[k - 1]), 1.0);
    for (int j = 2; j <= k; ++j) {
      sa = add(sa, scale(mul(g.c[j], c.c[k - j]), static_cast<double>(j)));
      ca = add(ca, scale(mul(g.c[j], s.c[k - j]), static_cast<double>(j)));
    }
    s.c.push_back(scale(sa, 1.0 / k));
    c.c.push_back(scale(ca, -1.0 / k));
  }
}

template <class V>
BasicJet<V> jet_sin(const BasicJet<V>& g) {
  BasicJet<V> s, c;
  jet_sin_cos(g, s, c);
  return s;
}

template <class V>
BasicJet<V> jet_cos(const BasicJet<V>& g) {
  BasicJet<V> s, c;
  jet_sin_cos(g, s, c);
  return c;
}

// tanh' = 1 - tanh^2, iterated: u_k = (1/k) sum_{j=1..k} j g_j w_{k-j}
// with w = 1 - u^2 built incrementally alongside u.
template <class V>
BasicJet<V> jet_tanh(const BasicJet<V>& g) {
  const int K = g.order();
  BasicJet<V> u, w;
  u.c.reserve(g.c.size());
  w.c.reserve(g.c.size());
  u.c.push_back(tanh(g.c[0]));
  w.c.push_back(shift(scale(mul(u.c[0], u.c[0]), -1.0), 1.0));
  for (int k = 1; k <= K; ++k) {
    V acc = scale(mul(g.c[1], w.c[k - 1]), 1.0);
    for (int j = 2; j <= k; ++j)
      acc = add(acc, scale(mul(g.c[j], w.c[k - j]), static_cast<double>(j)));
    u.c.push_back(scale(acc, 1.0 / k));
    // (u^2)_k with u now known through order k
    V sq = mul(u.c[0], u.c[k]);
    for (int j = 1; j <= k; ++j) sq = add(sq, mul(u.c[j], u.c[k - j]));
    w.c.push_back(scale(sq, -1.0));
  }
  return u;
}

// --- scalar jet API ----------------------------------------------------------

// Seed a jet: c_0 = value, c_1 = 1 if tracked.
Jet jet_lift(double value, bool tracked, int order);

enum class JetPrimitive { Add, Sub, Mul, Div, PowInt, Tanh, Exp, Sin, Cos };

// Dispatch on a named primitive; unary kinds ignore b. PowInt reads the
// integer exponent from n.
Jet jet_primitive(JetPrimitive kind, const Jet& a, const Jet* b = nullptr, int n = 0);

// Batched jet seeded on a tape: c_0 holds a column of values, c_1 a column of
// seed derivatives (zero when untracked), higher coefficients zero.
JetVar jet_lift_batch(Tape& tape, const Vec& values, const Vec& seeds, int order,
                      bool constant_inputs = true);

}  // namespace irpinn
