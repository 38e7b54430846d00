#include "irpinn/problems.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace irpinn {

namespace {

constexpr double kPi = 3.14159265358979323846;

// exp(-x + 3.5 t - 7) and the soliton pair built on top of it.
void bbe_exact_point(double t, double x, double& u, double& v) {
  const double E = std::exp(-x + 3.5 * t - 7.0);
  u = 2.0 - E / (2.0 * (1.0 + E));
  v = -E / (2.0 * (1.0 + E) * (1.0 + E));
}

}  // namespace

Problem make_simple_ode(double lambda, double T, double u0) {
  Problem p;
  p.name = "simple_ode";
  p.spatial_dim = 0;
  p.components = 1;
  p.t0 = 0.0;
  p.T = T;
  p.bc = BcKind::HardIcOnly;
  p.operator_N = [lambda](Tape& tape, const BundleBatch& b, const Vec&, const Mat&) {
    return tape.scale(b.u, -lambda);
  };
  p.ic_g = [u0](const Mat& x) { return Mat::Constant(x.rows(), 1, u0); };
  p.exact = [lambda, u0](const Vec& t, const Mat&) {
    Mat out(t.size(), 1);
    for (Eigen::Index i = 0; i < t.size(); ++i) out(i, 0) = u0 * std::exp(lambda * t[i]);
    return out;
  };
  return p;
}

Problem make_lorenz(double sigma, double rho, double beta, double T, const Vec& y0) {
  if (y0.size() != 3) throw std::invalid_argument("lorenz: y0 must have 3 entries");
  Problem p;
  p.name = "lorenz";
  p.spatial_dim = 0;
  p.components = 3;
  p.t0 = 0.0;
  p.T = T;
  p.bc = BcKind::HardIcOnly;
  const Vec ic = y0;
  p.operator_N = [sigma, rho, beta](Tape& tape, const BundleBatch& b, const Vec&,
                                    const Mat&) {
    Var x = tape.col(b.u, 0);
    Var y = tape.col(b.u, 1);
    Var z = tape.col(b.u, 2);
    // N[u] = -rhs: (-sigma(y-x), y - x(rho - z), beta z - x y)
    Var c0 = tape.scale(tape.sub(y, x), -sigma);
    Var c1 = tape.sub(y, tape.cwise_mul(x, tape.shift(tape.scale(z, -1.0), rho)));
    Var c2 = tape.sub(tape.scale(z, beta), tape.cwise_mul(x, y));
    return tape.hcat({c0, c1, c2});
  };
  p.ic_g = [ic](const Mat& x) {
    Mat out(x.rows(), 3);
    out.rowwise() = ic.transpose();
    return out;
  };
  return p;
}

Problem make_ks(double alpha, double beta, double gamma, double t0, double T) {
  Problem p;
  p.name = "ks";
  p.spatial_dim = 1;
  p.components = 1;
  p.spatial_orders = {1, 2, 4};
  p.t0 = t0;
  p.T = T;
  p.bc = BcKind::PeriodicExact;
  p.spatial_domain = {{0.0, 2.0 * kPi}};
  p.operator_N = [alpha, beta, gamma](Tape& tape, const BundleBatch& b, const Vec&,
                                      const Mat&) {
    Var conv = tape.scale(tape.cwise_mul(b.u, b.dx.at(1)), alpha);
    Var diff = tape.scale(b.dx.at(2), beta);
    Var hyper = tape.scale(b.dx.at(4), gamma);
    return tape.add(tape.add(conv, diff), hyper);
  };
  // The training IC is the ETDRK4 field advanced to t0 from cos(x)(1+sin x),
  // evaluated anywhere through its (band-limited) Fourier series.
  p.ic_g = [alpha, beta, gamma, t0](const Mat& x) {
    static Eigen::VectorXcd coeffs;  // DFT of the cached t0 state
    static int n_cached = 0;
    static double t0_cached = -1.0;
    const int n = 128;
    if (n_cached != n || t0_cached != t0) {
      const double dt = 2.5e-5;
      const int steps = static_cast<int>(std::lround(t0 / dt));
      FieldSnapshot snap =
          etdrk4_ks(ks_initial_state(n), alpha, beta, gamma, 0.0, dt, steps, steps);
      Vec state = snap.values.row(snap.values.rows() - 1).transpose();
      coeffs.resize(n);
      const std::complex<double> im(0.0, 1.0);
      for (int j = 0; j < n; ++j) {
        std::complex<double> acc(0.0, 0.0);
        for (int l = 0; l < n; ++l)
          acc += state[l] * std::exp(-im * (2.0 * kPi * j * l / n));
        coeffs[j] = acc / static_cast<double>(n);
      }
      n_cached = n;
      t0_cached = t0;
    }
    Mat out(x.rows(), 1);
    const std::complex<double> im(0.0, 1.0);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      std::complex<double> acc(0.0, 0.0);
      for (int j = 0; j < n_cached; ++j) {
        const int k = (j <= n_cached / 2) ? j : j - n_cached;
        acc += coeffs[j] * std::exp(im * (static_cast<double>(k) * x(i, 0)));
      }
      out(i, 0) = acc.real();
    }
    return out;
  };
  return p;
}

Problem make_bbe(double t0, double T, double x_lo, double x_hi) {
  Problem p;
  p.name = "bbe";
  p.spatial_dim = 1;
  p.components = 2;
  p.spatial_orders = {1, 3};
  p.t0 = t0;
  p.T = T;
  p.bc = BcKind::Dirichlet;
  p.spatial_domain = {{x_lo, x_hi}};
  p.operator_N = [](Tape& tape, const BundleBatch& b, const Vec&, const Mat&) {
    Var u = tape.col(b.u, 0);
    Var v = tape.col(b.u, 1);
    Var ux = tape.col(b.dx.at(1), 0);
    Var vx = tape.col(b.dx.at(1), 1);
    Var uxxx = tape.col(b.dx.at(3), 0);
    Var c0 = tape.sub(tape.scale(tape.cwise_mul(u, ux), 2.0), tape.scale(vx, 0.5));
    Var flux = tape.add(tape.cwise_mul(ux, v), tape.cwise_mul(u, vx));
    Var c1 = tape.sub(tape.scale(flux, 2.0), tape.scale(uxxx, 0.5));
    return tape.hcat({c0, c1});
  };
  p.exact = [](const Vec& t, const Mat& x) {
    Mat out(t.size(), 2);
    for (Eigen::Index i = 0; i < t.size(); ++i)
      bbe_exact_point(t[i], x(i, 0), out(i, 0), out(i, 1));
    return out;
  };
  p.ic_g = [exact = p.exact, t0](const Mat& x) {
    return exact(Vec::Constant(x.rows(), t0), x);
  };
  p.bc_b = p.exact;
  return p;
}

Problem make_problem(const std::string& name) {
  if (name == "simple_ode") return make_simple_ode();
  if (name == "lorenz") return make_lorenz();
  if (name == "ks") return make_ks();
  if (name == "bbe") return make_bbe();
  throw std::invalid_argument("unknown problem preset: " + name);
}

Mat exact_solution(const std::string& name, const Vec& t, const Mat& x) {
  Problem p = make_problem(name);
  if (!p.exact) throw std::invalid_argument("no closed-form solution for " + name);
  return p.exact(t, x);
}

std::shared_ptr<Model> make_exact_model(const std::string& name) {
  if (name == "simple_ode") {
    return std::make_shared<AnalyticModel>(
        1, 0, [](Tape&, const JetVar& t, const std::vector<JetVar>&) {
          return jet_exp(t);
        });
  }
  if (name == "bbe") {
    return std::make_shared<AnalyticModel>(
        2, 1, [](Tape& tape, const JetVar& t, const std::vector<JetVar>& x) {
          JetVar g = jet_shift(jet_add(jet_scale(x[0], -1.0), jet_scale(t, 3.5)), -7.0);
          JetVar E = jet_exp(g);
          JetVar u = jet_shift(
              jet_scale(jet_div(E, jet_shift(jet_scale(E, 2.0), 2.0)), -1.0), 2.0);
          JetVar onepE = jet_shift(E, 1.0);
          JetVar v = jet_scale(jet_div(E, jet_scale(jet_mul(onepE, onepE), 2.0)), -1.0);
          JetVar out;
          out.c.reserve(u.c.size());
          for (std::size_t k = 0; k < u.c.size(); ++k)
            out.c.push_back(tape.hcat({u.c[k], v.c[k]}));
          return out;
        });
  }
  throw std::invalid_argument("no analytic model for " + name);
}

OdeSystem lorenz_system(double sigma, double rho, double beta, double T, const Vec& y0) {
  OdeSystem sys;
  sys.dimension = 3;
  sys.rhs = [sigma, rho, beta](double, const Vec& y) {
    Vec dy(3);
    dy[0] = sigma * (y[1] - y[0]);
    dy[1] = y[0] * (rho - y[2]) - y[1];
    dy[2] = y[0] * y[1] - beta * y[2];
    return dy;
  };
  sys.y0 = y0;
  sys.t0 = 0.0;
  sys.T = T;
  return sys;
}

FieldSnapshot rk4_solve(const OdeSystem& sys, double dt) {
  if (!(dt > 0)) throw std::invalid_argument("rk4_solve: dt must be positive");
  const long steps = std::lround((sys.T - sys.t0) / dt);
  if (steps < 1) throw std::invalid_argument("rk4_solve: empty interval");
  FieldSnapshot out;
  out.times.resize(steps + 1);
  out.values.resize(steps + 1, sys.dimension);
  Vec y = sys.y0;
  out.times[0] = sys.t0;
  out.values.row(0) = y.transpose();
  for (long i = 0; i < steps; ++i) {
    const double t = sys.t0 + dt * static_cast<double>(i);
    const Vec k1 = sys.rhs(t, y);
    const Vec k2 = sys.rhs(t + 0.5 * dt, y + 0.5 * dt * k1);
    const Vec k3 = sys.rhs(t + 0.5 * dt, y + 0.5 * dt * k2);
    const Vec k4 = sys.rhs(t + dt, y + dt * k3);
    y += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    out.times[i + 1] = sys.t0 + dt * static_cast<double>(i + 1);
    out.values.row(i + 1) = y.transpose();
  }
  return out;
}

Vec ks_grid(int n) {
  Vec x(n);
  for (int j = 0; j < n; ++j) x[j] = 2.0 * kPi * j / n;
  return x;
}

Vec ks_initial_state(int n) {
  Vec x = ks_grid(n);
  Vec u(n);
  for (int j = 0; j < n; ++j) u[j] = std::cos(x[j]) * (1.0 + std::sin(x[j]));
  return u;
}

FieldSnapshot etdrk4_ks(const Vec& u0, double alpha, double beta, double gamma,
                        double t_start, double dt, int steps, int save_every) {
  using CVec = Eigen::VectorXcd;
  using CMat = Eigen::MatrixXcd;
  const int n = static_cast<int>(u0.size());
  if (n < 4 || n % 2 != 0) throw std::invalid_argument("etdrk4_ks: need even n >= 4");
  if (save_every < 1) throw std::invalid_argument("etdrk4_ks: save_every must be >= 1");
  const std::complex<double> im(0.0, 1.0);

  CMat F(n, n), Finv(n, n);
  for (int j = 0; j < n; ++j)
    for (int l = 0; l < n; ++l) {
      F(j, l) = std::exp(-im * (2.0 * kPi * j * l / n));
      Finv(j, l) = std::exp(im * (2.0 * kPi * j * l / n)) / static_cast<double>(n);
    }

  Vec k(n), k_nl(n);
  for (int j = 0; j < n; ++j) {
    const int kk = (j <= n / 2) ? j : j - n;
    k[j] = static_cast<double>(kk);
    // zero the Nyquist mode for the odd-order derivative in the nonlinearity
    k_nl[j] = (j == n / 2) ? 0.0 : static_cast<double>(kk);
  }
  Vec L = beta * k.array().square().matrix() - gamma * k.array().pow(4).matrix();
  CVec g = (-0.5 * alpha * im) * k_nl.cast<std::complex<double>>();

  CVec E(n), E2(n), Q(n), f1(n), f2(n), f3(n);
  const int M = 32;
  for (int j = 0; j < n; ++j) {
    const double hL = dt * L[j];
    E[j] = std::exp(hL);
    E2[j] = std::exp(0.5 * hL);
    std::complex<double> q(0, 0), a1(0, 0), a2(0, 0), a3(0, 0);
    for (int m = 1; m <= M; ++m) {
      const std::complex<double> r = std::exp(im * (kPi * (m - 0.5) / M));
      const std::complex<double> z = hL + r;
      const std::complex<double> ez = std::exp(z);
      q += (std::exp(0.5 * z) - 1.0) / z;
      a1 += (-4.0 - z + ez * (4.0 - 3.0 * z + z * z)) / (z * z * z);
      a2 += (2.0 + z + ez * (-2.0 + z)) / (z * z * z);
      a3 += (-4.0 - 3.0 * z - z * z + ez * (4.0 - z)) / (z * z * z);
    }
    Q[j] = dt * q / static_cast<double>(M);
    f1[j] = dt * a1 / static_cast<double>(M);
    f2[j] = dt * a2 / static_cast<double>(M);
    f3[j] = dt * a3 / static_cast<double>(M);
  }

  auto nonlinear = [&](const CVec& v) -> CVec {
    Vec u = (Finv * v).real();
    CVec w = F * u.array().square().matrix().cast<std::complex<double>>();
    return g.cwiseProduct(w);
  };

  const int saved = steps / save_every + 1;
  FieldSnapshot out;
  out.grid = ks_grid(n);
  out.times.resize(saved);
  out.values.resize(saved, n);
  CVec v = F * u0.cast<std::complex<double>>();
  out.times[0] = t_start;
  out.values.row(0) = u0.transpose();
  int row = 1;
  for (int s = 1; s <= steps; ++s) {
    const CVec Nv = nonlinear(v);
    const CVec a = E2.cwiseProduct(v) + Q.cwiseProduct(Nv);
    const CVec Na = nonlinear(a);
    const CVec b = E2.cwiseProduct(v) + Q.cwiseProduct(Na);
    const CVec Nb = nonlinear(b);
    const CVec c = E2.cwiseProduct(a) + Q.cwiseProduct(2.0 * Nb - Nv);
    const CVec Nc = nonlinear(c);
    v = E.cwiseProduct(v) + f1.cwiseProduct(Nv) + 2.0 * f2.cwiseProduct(Na + Nb) +
        f3.cwiseProduct(Nc);
    if (s % save_every == 0) {
      out.times[row] = t_start + dt * static_cast<double>(s);
      out.values.row(row) = (Finv * v).real().transpose();
      ++row;
    }
  }
  return out;
}

void write_snapshot_csv(const FieldSnapshot& snap, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  char buf[40];
  f << "# irpinn-csv-v1\n";
  f << "t";
  if (snap.grid.size() > 0) {
    for (Eigen::Index j = 0; j < snap.grid.size(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", snap.grid[j]);
      f << ",x=" << buf;
    }
  } else {
    for (Eigen::Index j = 0; j < snap.values.cols(); ++j) f << ",u" << j;
  }
  f << "\n";
  for (Eigen::Index i = 0; i < snap.times.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g", snap.times[i]);
    f << buf;
    for (Eigen::Index j = 0; j < snap.values.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", snap.values(i, j));
      f << "," << buf;
    }
    f << "\n";
  }
}

}  // namespace irpinn
