#pragma once

#include <Eigen/Core>
#include <vector>

namespace irpinn {

// Equidistant subinterval partition of [t0, T].
struct TimeGrid {
  double t0 = 0.0;
  double T = 1.0;
  int n_sub = 1;
  std::vector<double> knots;

  double spacing() const { return (T - t0) / n_sub; }
};

TimeGrid partition(double t0, double T, int n_sub);

enum class QuadKind { GaussLegendre, Trapezoid };

struct QuadratureRule {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;
  QuadKind kind = QuadKind::GaussLegendre;

  int size() const { return static_cast<int>(nodes.size()); }
};

// M-point Gauss-Legendre rule mapped affinely to [a, b]. Reference nodes are
// computed once per M by Newton iteration on the Legendre recurrence and
// cached. 1 <= M <= 16.
QuadratureRule gauss_legendre(int m, double a, double b);

// Composite trapezoid weights over a strictly increasing node mesh.
QuadratureRule trapezoid(const Eigen::VectorXd& nodes);

double integrate(const QuadratureRule& rule, const Eigen::VectorXd& samples);

// One rule per subinterval of the grid.
std::vector<QuadratureRule> subinterval_rules(const TimeGrid& grid, QuadKind kind, int m);

}  // namespace irpinn
