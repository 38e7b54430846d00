#pragma once

#include "irpinn/network.hpp"

#include <functional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace irpinn {

enum class BcKind {
  HardIcOnly,     // IC imposed exactly by the model wrapper; no boundary term
  PeriodicExact,  // periodicity imposed exactly by the embedding
  Dirichlet,      // soft boundary penalty against b(t, x)
};

// An evolution equation u_t + N[u] = f with IC/BC data and optional exact
// solution access.
struct Problem {
  std::string name;
  int spatial_dim = 0;
  int components = 1;
  std::set<int> spatial_orders;  // derivative orders consumed by operator_N

  // N[u] assembled from the derivative bundle; returns an (n x C) variable.
  std::function<Var(Tape&, const BundleBatch&, const Vec& t, const Mat& x)> operator_N;
  std::function<Mat(const Vec& t, const Mat& x)> forcing;  // null means zero
  std::function<Mat(const Mat& x)> ic_g;                   // (n x C) at t0
  BcKind bc = BcKind::HardIcOnly;
  std::function<Mat(const Vec& t, const Mat& x)> bc_b;     // Dirichlet data
  std::function<Mat(const Vec& t, const Mat& x)> exact;    // null if unavailable

  double t0 = 0.0;
  double T = 1.0;
  std::vector<std::pair<double, double>> spatial_domain;
};

}  // namespace irpinn
