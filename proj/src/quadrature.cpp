#include "irpinn/quadrature.hpp"

#include <cmath>
#include <map>
#include <stdexcept>

namespace irpinn {

TimeGrid partition(double t0, double T, int n_sub) {
  if (!(T > t0)) throw std::invalid_argument("partition requires T > t0");
  if (n_sub < 1) throw std::invalid_argument("partition requires at least one subinterval");
  if ((T - t0) / n_sub < 1e-12) throw std::invalid_argument("degenerate subinterval length");
  TimeGrid g;
  g.t0 = t0;
  g.T = T;
  g.n_sub = n_sub;
  g.knots.resize(static_cast<std::size_t>(n_sub) + 1);
  for (int k = 0; k <= n_sub; ++k)
    g.knots[static_cast<std::size_t>(k)] = t0 + (T - t0) * k / n_sub;
  g.knots.back() = T;
  return g;
}

namespace {

// Reference nodes/weights on [-1, 1], Newton on the Legendre recurrence.
struct RefRule {
  Eigen::VectorXd x, w;
};

const RefRule& reference_gauss(int m) {
  static std::map<int, RefRule> cache;
  auto it = cache.find(m);
  if (it != cache.end()) return it->second;

  RefRule r;
  r.x.resize(m);
  r.w.resize(m);
  const int half = (m + 1) / 2;
  for (int i = 0; i < half; ++i) {
    double z = std::cos(M_PI * (i + 0.75) / (m + 0.5));
    double pp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p1 = 1.0, p2 = 0.0;
      for (int j = 1; j <= m; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = ((2.0 * j - 1.0) * z * p2 - (j - 1.0) * p3) / j;
      }
      pp = m * (z * p1 - p2) / (z * z - 1.0);
      const double dz = -p1 / pp;
      z += dz;
      if (std::abs(dz) < 1e-15) break;
    }
    r.x[i] = -z;
    r.x[m - 1 - i] = z;
    r.w[i] = r.w[m - 1 - i] = 2.0 / ((1.0 - z * z) * pp * pp);
  }
  if (m % 2 == 1) r.x[m / 2] = 0.0;
  return cache.emplace(m, std::move(r)).first->second;
}

}  // namespace

QuadratureRule gauss_legendre(int m, double a, double b) {
  if (m < 1 || m > 16) throw std::invalid_argument("Gauss-Legendre order must be in [1, 16]");
  if (!(a < b)) throw std::invalid_argument("gauss_legendre requires a < b");
  const RefRule& ref = reference_gauss(m);
  QuadratureRule q;
  q.kind = QuadKind::GaussLegendre;
  const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
  q.nodes = (ref.x.array() * half + mid).matrix();
  q.weights = ref.w * half;
  return q;
}

QuadratureRule trapezoid(const Eigen::VectorXd& nodes) {
  const int n = static_cast<int>(nodes.size());
  if (n < 2) throw std::invalid_argument("trapezoid needs at least two nodes");
  for (int i = 1; i < n; ++i)
    if (!(nodes[i] > nodes[i - 1]))
      throw std::invalid_argument("trapezoid nodes must be strictly increasing");
  QuadratureRule q;
  q.kind = QuadKind::Trapezoid;
  q.nodes = nodes;
  q.weights = Eigen::VectorXd::Zero(n);
  for (int i = 0; i + 1 < n; ++i) {
    const double h = 0.5 * (nodes[i + 1] - nodes[i]);
    q.weights[i] += h;
    q.weights[i + 1] += h;
  }
  return q;
}

double integrate(const QuadratureRule& rule, const Eigen::VectorXd& samples) {
  if (samples.size() != rule.nodes.size())
    throw std::invalid_argument("sample count does not match rule size");
  return rule.weights.dot(samples);
}

std::vector<QuadratureRule> subinterval_rules(const TimeGrid& grid, QuadKind kind, int m) {
  std::vector<QuadratureRule> rules;
  rules.reserve(static_cast<std::size_t>(grid.n_sub));
  for (int k = 0; k < grid.n_sub; ++k) {
    const double a = grid.knots[static_cast<std::size_t>(k)];
    const double b = grid.knots[static_cast<std::size_t>(k) + 1];
    if (kind == QuadKind::GaussLegendre) {
      rules.push_back(gauss_legendre(m, a, b));
    } else {
      Eigen::VectorXd nodes = Eigen::VectorXd::LinSpaced(m, a, b);
      rules.push_back(trapezoid(nodes));
    }
  }
  return rules;
}

}  // namespace irpinn
