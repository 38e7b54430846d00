#include "irpinn/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <stdexcept>

namespace irpinn {

namespace {

constexpr double kNodeTol = 1e-9;

double next_u01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

Vec flatten_node_times(const std::vector<QuadratureRule>& rules) {
  Eigen::Index total = 0;
  for (const auto& r : rules) total += r.nodes.size();
  Vec t(total);
  Eigen::Index row = 0;
  for (const auto& r : rules)
    for (Eigen::Index i = 0; i < r.nodes.size(); ++i) t[row++] = r.nodes[i];
  return t;
}

int pick_index(const Vec& cumulative, double u) {
  // first index whose cumulative mass exceeds u
  const double* begin = cumulative.data();
  const double* end = begin + cumulative.size();
  const double* it = std::upper_bound(begin, end, u);
  int idx = static_cast<int>(it - begin);
  if (idx >= cumulative.size()) idx = static_cast<int>(cumulative.size()) - 1;
  return idx;
}

}  // namespace

HistogramDensity::HistogramDensity(Vec node_times, Vec node_mass, int spatial_dim,
                                   double x_lo, double x_hi, Mat bin_mass)
    : node_times_(std::move(node_times)),
      node_mass_(std::move(node_mass)),
      spatial_dim_(spatial_dim),
      x_lo_(x_lo),
      x_hi_(x_hi),
      bin_mass_(std::move(bin_mass)) {
  if (node_times_.size() == 0) throw std::invalid_argument("density needs nodes");
  if (node_mass_.size() != node_times_.size())
    throw std::invalid_argument("node mass length mismatch");
  if (spatial_dim_ < 0 || spatial_dim_ > 1)
    throw std::invalid_argument("histogram density supports spatial dimension 0 or 1");
  if (spatial_dim_ == 1) {
    if (!(x_hi_ > x_lo_)) throw std::invalid_argument("empty spatial domain");
    if (bin_mass_.rows() != node_times_.size() || bin_mass_.cols() < 1)
      throw std::invalid_argument("bin mass shape mismatch");
  }
  if (std::abs(node_mass_.sum() - 1.0) > 1e-10)
    throw std::invalid_argument("node masses must sum to 1");
  if (spatial_dim_ == 1) {
    for (Eigen::Index n = 0; n < bin_mass_.rows(); ++n)
      if (std::abs(bin_mass_.row(n).sum() - 1.0) > 1e-10)
        throw std::invalid_argument("conditional bin masses must sum to 1");
  }
}

HistogramDensity HistogramDensity::uniform(const Vec& node_times, int spatial_dim,
                                           double x_lo, double x_hi, int bins) {
  const Eigen::Index n = node_times.size();
  Vec mass = Vec::Constant(n, 1.0 / static_cast<double>(n));
  Mat bin = spatial_dim == 1
                ? Mat::Constant(n, bins, 1.0 / static_cast<double>(bins))
                : Mat(n, 0);
  return HistogramDensity(node_times, mass, spatial_dim, x_lo, x_hi, std::move(bin));
}

int HistogramDensity::node_index(double t) const {
  for (Eigen::Index n = 0; n < node_times_.size(); ++n)
    if (std::abs(node_times_[n] - t) <= kNodeTol) return static_cast<int>(n);
  throw std::invalid_argument("temporal value " + std::to_string(t) +
                              " is not a quadrature node");
}

double HistogramDensity::log_density(double t, const Vec& x) const {
  const int n = node_index(t);
  double p = node_mass_[n];
  if (spatial_dim_ == 1) {
    if (x.size() != 1) throw std::invalid_argument("expected one spatial coordinate");
    const int bins_n = bins();
    const double width = (x_hi_ - x_lo_) / bins_n;
    int b = static_cast<int>(std::floor((x[0] - x_lo_) / width));
    b = std::clamp(b, 0, bins_n - 1);
    p *= bin_mass_(n, b) / width;
  }
  return std::log(p);
}

SamplePoints HistogramDensity::sample(int count, std::uint64_t seed) const {
  if (count < 0) throw std::invalid_argument("negative sample count");
  std::mt19937_64 rng(seed);
  Vec cum_node(node_mass_.size());
  double acc = 0.0;
  for (Eigen::Index n = 0; n < node_mass_.size(); ++n) {
    acc += node_mass_[n];
    cum_node[n] = acc;
  }
  Mat cum_bin;
  if (spatial_dim_ == 1) {
    cum_bin.resize(bin_mass_.rows(), bin_mass_.cols());
    for (Eigen::Index n = 0; n < bin_mass_.rows(); ++n) {
      double s = 0.0;
      for (Eigen::Index b = 0; b < bin_mass_.cols(); ++b) {
        s += bin_mass_(n, b);
        cum_bin(n, b) = s;
      }
    }
  }
  SamplePoints out;
  out.t.resize(count);
  out.x.resize(count, spatial_dim_);
  const double width = spatial_dim_ == 1 ? (x_hi_ - x_lo_) / bins() : 0.0;
  for (int i = 0; i < count; ++i) {
    const int n = pick_index(cum_node, next_u01(rng));
    out.t[i] = node_times_[n];
    if (spatial_dim_ == 1) {
      const int b = pick_index(cum_bin.row(n).transpose(), next_u01(rng));
      out.x(i, 0) = x_lo_ + (static_cast<double>(b) + next_u01(rng)) * width;
    }
  }
  return out;
}

void AdaptiveConfig::validate() const {
  if (n_adaptive < 0) throw std::invalid_argument("n_adaptive must be >= 0");
  if (n_fit_epochs < 1) throw std::invalid_argument("n_fit_epochs must be positive");
  if (n_new < 1) throw std::invalid_argument("n_new must be positive");
  if (retrain_epochs < -1) throw std::invalid_argument("retrain_epochs must be >= -1");
  if (candidate_pool_size < 1)
    throw std::invalid_argument("candidate_pool_size must be positive");
  if (spatial_bins < 1) throw std::invalid_argument("spatial_bins must be positive");
}

HistogramDensity fit_histogram(const HistogramDensity& old, const SamplePoints& pool,
                               const Vec& residual_sq, bool* flagged_uniform) {
  if (pool.count() == 0) throw std::invalid_argument("fit_histogram: empty pool");
  if (residual_sq.size() != pool.count())
    throw std::invalid_argument("fit_histogram: residual/pool length mismatch");
  if (!residual_sq.allFinite())
    throw std::invalid_argument("fit_histogram: non-finite residuals in pool");
  if (flagged_uniform) *flagged_uniform = false;

  const Eigen::Index nodes = old.node_times().size();
  const int dim = old.spatial_dim();
  const int bins = dim == 1 ? old.bins() : 0;

  Vec w(pool.count());
  for (Eigen::Index i = 0; i < pool.count(); ++i) {
    const Vec xi = dim == 1 ? pool.x.row(i).transpose() : Vec(0);
    w[i] = residual_sq[i] / std::exp(old.log_density(pool.t[i], xi));
  }
  const double wsum = w.sum();
  if (wsum <= 0.0) {
    if (flagged_uniform) *flagged_uniform = true;
    return HistogramDensity::uniform(old.node_times(), dim, old.x_lo(), old.x_hi(),
                                     std::max(bins, 1));
  }
  w /= wsum;

  Vec node_mass = Vec::Zero(nodes);
  Mat joint = dim == 1 ? Mat::Zero(nodes, bins) : Mat(nodes, 0);
  const double width = dim == 1 ? (old.x_hi() - old.x_lo()) / bins : 0.0;
  for (Eigen::Index i = 0; i < pool.count(); ++i) {
    const int n = old.node_index(pool.t[i]);
    node_mass[n] += w[i];
    if (dim == 1) {
      int b = static_cast<int>(std::floor((pool.x(i, 0) - old.x_lo()) / width));
      b = std::clamp(b, 0, bins - 1);
      joint(n, b) += w[i];
    }
  }
  Mat bin_mass = joint;
  if (dim == 1) {
    for (Eigen::Index n = 0; n < nodes; ++n) {
      if (node_mass[n] > 0.0)
        bin_mass.row(n) /= node_mass[n];
      else
        bin_mass.row(n).setConstant(1.0 / bins);
    }
  }
  return HistogramDensity(old.node_times(), std::move(node_mass), dim, old.x_lo(),
                          old.x_hi(), std::move(bin_mass));
}

HistogramDensity fit_density(const HistogramDensity& old, const Problem& problem,
                             Model& net, const SamplePoints& pool,
                             bool* flagged_uniform) {
  Mat r = residual_at(problem, net, pool.t, pool.x);
  Vec rsq = r.rowwise().squaredNorm();
  return fit_histogram(old, pool, rsq, flagged_uniform);
}

SamplePoints sample_new_points(const DensityModel& model, int n_new, std::uint64_t seed) {
  return model.sample(n_new, seed);
}

CollocationSets refine_datasets(const CollocationSets& sets, const SamplePoints& pts,
                                Variant variant, const TimeGrid& grid,
                                const std::vector<QuadratureRule>& rules) {
  const int N = grid.n_sub;
  if (static_cast<int>(rules.size()) != N || static_cast<int>(sets.s_r.size()) != N)
    throw std::invalid_argument("refine_datasets: grid/rule/set size mismatch");

  if (pts.count() == 0)
    throw std::invalid_argument("refine_datasets: refusing an empty refinement");

  CollocationSets out = sets;
  std::vector<std::vector<Eigen::Index>> per_sub(N);  // point rows routed per subinterval
  for (Eigen::Index j = 0; j < pts.count(); ++j) {
    int hit_k = -1, hit_i = -1;
    for (int k = 0; k < N && hit_k < 0; ++k)
      for (Eigen::Index i = 0; i < rules[k].nodes.size(); ++i)
        if (std::abs(rules[k].nodes[i] - pts.t[j]) <= kNodeTol) {
          hit_k = k;
          hit_i = static_cast<int>(i);
          break;
        }
    if (hit_k < 0)
      throw std::invalid_argument("refine_datasets: temporal value " +
                                  std::to_string(pts.t[j]) +
                                  " does not match any quadrature node");
    Mat& target = out.s_r[hit_k][hit_i];
    target.conservativeResize(target.rows() + 1, Eigen::NoChange);
    target.row(target.rows() - 1) = pts.x.row(j);
    per_sub[hit_k].push_back(j);
  }

  if (variant == Variant::Pinn) return out;

  for (int k = 0; k < N; ++k) {
    std::vector<Eigen::Index> routed;
    if (variant == Variant::IR1) {
      routed = per_sub[k];
    } else {  // IR2 integrates [t0, t_{k+1}]: nodes of every subinterval p <= k
      for (int p = 0; p <= k; ++p)
        routed.insert(routed.end(), per_sub[p].begin(), per_sub[p].end());
    }
    // Subintervals receiving no new points keep their previous S_int rather
    // than being replaced by an empty (invalid) set.
    if (routed.empty()) continue;
    Mat replacement(static_cast<Eigen::Index>(routed.size()), pts.x.cols());
    for (std::size_t r = 0; r < routed.size(); ++r)
      replacement.row(static_cast<Eigen::Index>(r)) = pts.x.row(routed[r]);
    out.s_int[k] = std::move(replacement);
  }
  return out;
}

AdaptiveResult adaptive_loop(const Problem& problem, Model& model,
                             const LossAssembler& initial, const AdaptiveConfig& acfg,
                             const TrainConfig& tcfg, const EvalFn& eval) {
  acfg.validate();
  AdaptiveResult result;
  result.assembler = std::make_shared<LossAssembler>(initial);
  if (acfg.n_adaptive == 0) return result;
  if (problem.spatial_dim > 1)
    throw std::invalid_argument("adaptive sampling supports spatial dimension <= 1");

  const Vec node_times = flatten_node_times(initial.rules());
  double x_lo = 0.0, x_hi = 1.0;
  if (problem.spatial_dim == 1) {
    x_lo = problem.spatial_domain.at(0).first;
    x_hi = problem.spatial_domain.at(0).second;
  }
  HistogramDensity density = HistogramDensity::uniform(
      node_times, problem.spatial_dim, x_lo, x_hi, acfg.spatial_bins);
  CollocationSets sets = initial.sets();

  TrainConfig rcfg = tcfg;
  for (int iter = 0; iter < acfg.n_adaptive; ++iter) {
    if (acfg.retrain_epochs >= 0) {
      rcfg.epochs = acfg.retrain_epochs;
      rcfg.schedule_offset = tcfg.schedule_offset + tcfg.epochs +
                             static_cast<long>(iter) * acfg.retrain_epochs;
    }
    const std::uint64_t base =
        acfg.seed * 0x9E3779B97F4A7C15ull + static_cast<std::uint64_t>(iter) * 2u;
    SamplePoints pool = density.sample(acfg.candidate_pool_size, base + 1);
    bool uniform_fallback = false;
    density = fit_density(density, problem, model, pool, &uniform_fallback);
    SamplePoints pts = sample_new_points(density, acfg.n_new, base + 2);
    sets = refine_datasets(sets, pts, initial.variant(), initial.grid(), initial.rules());
    result.assembler = std::make_shared<LossAssembler>(
        problem, initial.grid(), initial.rules(), sets, initial.variant(),
        initial.weights(), /*use_cache=*/true);
    result.histories.push_back(train(model, *result.assembler, rcfg, eval));
    result.new_points.push_back(std::move(pts));
    result.fit_was_uniform.push_back(uniform_fallback);
  }
  return result;
}

void write_points_csv(const SamplePoints& pts, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  f << "t";
  for (Eigen::Index j = 0; j < pts.x.cols(); ++j) f << ",x" << j;
  f << "\n";
  char buf[40];
  for (Eigen::Index i = 0; i < pts.count(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g", pts.t[i]);
    f << buf;
    for (Eigen::Index j = 0; j < pts.x.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", pts.x(i, j));
      f << "," << buf;
    }
    f << "\n";
  }
}

}  // namespace irpinn
