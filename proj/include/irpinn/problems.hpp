#pragma once

#include "irpinn/problem.hpp"

#include <memory>

namespace irpinn {

// Benchmark presets. Parameters default to the reference settings.
Problem make_simple_ode(double lambda = 1.0, double T = 5.0, double u0 = 1.0);
Problem make_lorenz(double sigma = 3.0, double rho = 28.0, double beta = 8.0 / 3.0,
                    double T = 20.0, const Vec& y0 = (Vec(3) << 1, 1, 1).finished());
Problem make_ks(double alpha = 100.0 / 16.0, double beta = 100.0 / 256.0,
                double gamma = 100.0 / 65536.0, double t0 = 0.4, double T = 0.9);
Problem make_bbe(double t0 = 0.0, double T = 4.0, double x_lo = -20.0, double x_hi = 20.0);

Problem make_problem(const std::string& name);

// Closed-form solutions (simple_ode, bbe); throws for the rest.
Mat exact_solution(const std::string& name, const Vec& t, const Mat& x);

// Closed forms lifted to jet arithmetic, for residual oracles.
std::shared_ptr<Model> make_exact_model(const std::string& name);

struct OdeSystem {
  int dimension = 0;
  std::function<Vec(double, const Vec&)> rhs;
  Vec y0;
  double t0 = 0.0;
  double T = 1.0;
};

OdeSystem lorenz_system(double sigma = 3.0, double rho = 28.0, double beta = 8.0 / 3.0,
                        double T = 20.0, const Vec& y0 = (Vec(3) << 1, 1, 1).finished());

// Time-major samples of a trajectory or field: values(i, :) at times[i].
// Columns are state components (ODE) or spatial grid values (PDE).
struct FieldSnapshot {
  Vec times;
  Vec grid;  // spatial points; empty for ODE trajectories
  Mat values;
};

// Classical fixed-step RK4 on a uniform mesh.
FieldSnapshot rk4_solve(const OdeSystem& sys, double dt);

// Pseudo-spectral ETDRK4 for u_t = -alpha u u_x - beta u_xx - gamma u_xxxx on
// a periodic grid over [0, 2 pi). Spectral transforms use direct DFT matrix
// products; phi-functions are evaluated by a 32-point contour integral.
// Saves every save_every-th state (plus the initial one).
FieldSnapshot etdrk4_ks(const Vec& u0, double alpha, double beta, double gamma,
                        double t_start, double dt, int steps, int save_every);

// cos(x)(1 + sin(x)) on the n-point periodic grid.
Vec ks_initial_state(int n);
Vec ks_grid(int n);

void write_snapshot_csv(const FieldSnapshot& snap, const std::string& path);

}  // namespace irpinn
