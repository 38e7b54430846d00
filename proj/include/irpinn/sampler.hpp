#pragma once

#include "irpinn/optimizer.hpp"

#include <memory>

namespace irpinn {

// A batch of (t, x) points; x has one row per point (zero columns for ODEs).
struct SamplePoints {
  Vec t;
  Mat x;

  Eigen::Index count() const { return t.size(); }
};

// Joint density over [t0, T] x domain used to place new collocation points.
class DensityModel {
 public:
  virtual ~DensityModel() = default;
  virtual double log_density(double t, const Vec& x) const = 0;
  virtual SamplePoints sample(int count, std::uint64_t seed) const = 0;
};

// Separable default: a discrete distribution over the temporal quadrature set
// Q and, conditionally per temporal node, a piecewise-constant histogram on
// the (1-D) spatial domain. Spatial dimension zero drops the spatial factor.
class HistogramDensity : public DensityModel {
 public:
  HistogramDensity(Vec node_times, Vec node_mass, int spatial_dim, double x_lo,
                   double x_hi, Mat bin_mass);

  static HistogramDensity uniform(const Vec& node_times, int spatial_dim, double x_lo,
                                  double x_hi, int bins);

  double log_density(double t, const Vec& x) const override;
  SamplePoints sample(int count, std::uint64_t seed) const override;

  const Vec& node_times() const { return node_times_; }
  const Vec& node_mass() const { return node_mass_; }
  const Mat& bin_mass() const { return bin_mass_; }
  int spatial_dim() const { return spatial_dim_; }
  int bins() const { return static_cast<int>(bin_mass_.cols()); }
  double x_lo() const { return x_lo_; }
  double x_hi() const { return x_hi_; }

  int node_index(double t) const;  // throws if t is not a node

 private:
  Vec node_times_;
  Vec node_mass_;  // sums to 1
  int spatial_dim_;
  double x_lo_, x_hi_;
  Mat bin_mass_;  // nodes x bins, rows sum to 1
};

struct AdaptiveConfig {
  int n_adaptive = 2;
  int n_fit_epochs = 1;  // kept for interface fidelity; the closed-form
                         // histogram fit does not iterate
  int n_new = 8 * 4 * 8;
  int candidate_pool_size = 8 * 4 * 100;
  int spatial_bins = 64;
  std::uint64_t seed = 0;
  // Training budget after each refinement. -1 restarts the full schedule
  // (epochs and lr of the base run); >= 0 continues training instead, for
  // that many epochs, with the lr schedule carried on from the base run.
  int retrain_epochs = -1;

  void validate() const;
};

// Closed-form importance-weighted histogram fit from precomputed squared
// residual magnitudes at the pool points. Weights r^2 / p_old(t,x) are
// self-normalized, so the result is invariant to uniform scaling of r^2.
// All-zero residuals fall back to the uniform model and set *flagged_uniform.
HistogramDensity fit_histogram(const HistogramDensity& old, const SamplePoints& pool,
                               const Vec& residual_sq, bool* flagged_uniform = nullptr);

// Evaluates the model residual over the pool and fits the histogram family.
HistogramDensity fit_density(const HistogramDensity& old, const Problem& problem,
                             Model& net, const SamplePoints& pool,
                             bool* flagged_uniform = nullptr);

SamplePoints sample_new_points(const DensityModel& model, int n_new, std::uint64_t seed);

// Routes each new point to the quadrature node matching its temporal value:
// S_r^(k,i) grows by union; S_int^(k) is replaced by the new points whose node
// lies in T^(k) (R1: subinterval k itself; R2: any subinterval p <= k). The
// plain-PINN variant leaves S_int untouched. Throws if a temporal value is
// not a node or if the replacement would leave some S_int^(k) empty.
CollocationSets refine_datasets(const CollocationSets& sets, const SamplePoints& pts,
                                Variant variant, const TimeGrid& grid,
                                const std::vector<QuadratureRule>& rules);

struct AdaptiveResult {
  std::shared_ptr<LossAssembler> assembler;
  std::vector<TrainHistory> histories;
  std::vector<SamplePoints> new_points;
  std::vector<bool> fit_was_uniform;
};

// Algorithm: starting from a model already trained on `initial`, repeat
// n_adaptive times: fit the density on a pool drawn from the current model
// (uniform on the first pass), draw n_new points, refine the collocation
// sets, rebuild the assembler (the shared cache switches off automatically
// once the sets diverge), and retrain with fresh optimizer state.
AdaptiveResult adaptive_loop(const Problem& problem, Model& model,
                             const LossAssembler& initial, const AdaptiveConfig& acfg,
                             const TrainConfig& tcfg, const EvalFn& eval = nullptr);

void write_points_csv(const SamplePoints& pts, const std::string& path);

}  // namespace irpinn
