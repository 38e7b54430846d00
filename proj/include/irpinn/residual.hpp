#pragma once

#include "irpinn/problem.hpp"
#include "irpinn/quadrature.hpp"

#include <optional>

namespace irpinn {

enum class Variant { Pinn, IR1, IR2 };

Variant variant_from_string(const std::string& s);
std::string to_string(Variant v);

struct LossWeights {
  double alpha = 1.0;
  double lambda_ic = 0.0;
  double lambda_bc = 0.0;
};

// Residual sets binding temporal quadrature nodes to spatial points.
// s_r[k][i] holds the spatial points attached to node i of subinterval k;
// s_int[k] the spatial points of the integral residual on subinterval k.
// Spatial dimension 0 (pure ODE) uses single rows with zero columns.
struct CollocationSets {
  std::vector<std::vector<Mat>> s_r;
  std::vector<Mat> s_int;
  Mat s_ic;
  Vec s_bc_t;
  Mat s_bc_x;

  // True when every s_r node set and every s_int set is the same spatial
  // point set, which lets both residual terms share one evaluation.
  bool shared() const;
};

// Standard layout: every node and every subinterval shares one spatial set.
CollocationSets make_collocation(const TimeGrid& grid, const std::vector<QuadratureRule>& rules,
                                 const Mat& spatial, const Mat& s_ic = Mat(),
                                 const Vec& s_bc_t = Vec(), const Mat& s_bc_x = Mat());

struct LossParts {
  double loss_r = 0.0;
  double loss_int = 0.0;
  double loss_ic = 0.0;
  double loss_bc = 0.0;
  double total = 0.0;
};

// Assembles the coupled training objective
//   L_r + alpha * L_int + lambda_ic * L_ic + lambda_bc * L_bc
// on a tape. Index structures and the constant combination matrices that
// turn stored residual values into integral residuals are built once at
// construction and reused every epoch; the shared-value cache evaluates
// N[u] - f once per (node, point) and feeds both residual terms.
class LossAssembler {
 public:
  LossAssembler(const Problem& problem, const TimeGrid& grid,
                std::vector<QuadratureRule> rules, CollocationSets sets, Variant variant,
                LossWeights weights, bool use_cache = true);

  struct Terms {
    Var loss_r, loss_int, loss_ic, loss_bc, total;
  };

  // Binds the model to the tape and records the full objective. Only valid
  // when the batches fit a single tape (see chunked()).
  Terms assemble(Tape& tape, Model& model) const;

  // Loss parts and, when grad is non-null, the reverse-mode parameter
  // gradient of the weighted total. Falls back to one assemble()/backward()
  // pass when possible; otherwise accumulates term-by-term over bounded
  // chunks so peak memory stays flat as refined point sets grow.
  LossParts loss_and_gradient(Model& model, Vec* grad) const;

  LossParts evaluate(Model& model) const;  // values only, private tape

  bool chunked() const { return chunked_; }

  // Row budget (pointwise + integral source rows) above which construction
  // switches to chunked accumulation. Exposed so tests can force the
  // chunked path on small problems.
  static int single_tape_row_limit;

  const CollocationSets& sets() const { return sets_; }
  const TimeGrid& grid() const { return grid_; }
  const std::vector<QuadratureRule>& rules() const { return rules_; }
  Variant variant() const { return variant_; }
  const LossWeights& weights() const { return weights_; }
  bool cache_active() const { return cache_active_; }
  const Problem& problem() const { return problem_; }

  // Row coordinates of the pointwise-residual batch, in tape order.
  const Vec& node_times() const { return t_nodes_; }
  const Mat& node_points() const { return x_nodes_; }

 private:
  Var record_core(Tape& tape, Model& model, const Vec& t, const Mat& x,
                  const BundleBatch& bundle) const;
  LossParts loss_grad_chunked(Model& model, Vec* grad) const;

  Problem problem_;
  TimeGrid grid_;
  std::vector<QuadratureRule> rules_;
  CollocationSets sets_;
  Variant variant_;
  LossWeights weights_;
  bool cache_active_;
  bool chunked_ = false;

  // pointwise batch
  Vec t_nodes_;
  Mat x_nodes_;
  Vec w_r_;  // per-row averaging weights for L_r
  std::vector<std::vector<int>> node_offset_;  // [k][i] -> first row

  // integral-term batches (empty for the plain-PINN variant)
  Vec t_int_;
  Mat x_int_;   // separate source batch when the cache is off
  Vec t_knot_;
  Mat x_knot_;
  Mat comb_knot_;  // r_int rows x knot rows
  Mat comb_src_;   // r_int rows x source rows
  Vec w_int_;

  // chunked mode: integral points deduplicated across subintervals
  Mat union_x_;                              // one row per distinct point
  std::vector<std::vector<int>> s_int_map_;  // [k][j] -> row of union_x_

  Mat ic_values_;
  Mat bc_values_;
};

// --- single-point operations -------------------------------------------------

// r = u_t + N[u] - f at one (t, x).
Vec pointwise_residual(const Problem& problem, Model& model, double t, const Vec& x);

// r_int over [a, b]; a and b must be knots of the grid and rules must cover
// exactly the subintervals between them.
Vec integral_residual(const Problem& problem, Model& model, const TimeGrid& grid,
                      const std::vector<QuadratureRule>& rules, double a, double b,
                      const Vec& x);

// Residual values over an arbitrary batch (adaptive-sampling pools, dumps).
Mat residual_at(const Problem& problem, Model& model, const Vec& t, const Mat& x);

}  // namespace irpinn
