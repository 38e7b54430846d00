#include "irpinn/residual.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace irpinn {

Variant variant_from_string(const std::string& s) {
  if (s == "pinn") return Variant::Pinn;
  if (s == "ir1") return Variant::IR1;
  if (s == "ir2") return Variant::IR2;
  throw std::invalid_argument("unknown variant '" + s + "', allowed: {pinn, ir1, ir2}");
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::Pinn: return "pinn";
    case Variant::IR1: return "ir1";
    case Variant::IR2: return "ir2";
  }
  return "?";
}

namespace {

bool same_points(const Mat& a, const Mat& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  if (a.size() == 0) return true;
  return (a - b).cwiseAbs().maxCoeff() == 0.0;
}

Var weighted_sum_sq(Tape& tape, Var r, const Vec& w) {
  Var sq = tape.cwise_mul(r, r);
  Var row_sums = sq;
  if (tape.value(sq).cols() > 1)
    row_sums = tape.matmul(sq, tape.constant(Mat::Ones(tape.value(sq).cols(), 1)));
  return tape.matmul(tape.constant(w.transpose()), row_sums);
}

}  // namespace

int LossAssembler::single_tape_row_limit = 4096;

bool CollocationSets::shared() const {
  if (s_r.empty()) return false;
  const Mat& ref = s_int.empty() ? s_r[0][0] : s_int[0];
  for (const auto& per_node : s_r)
    for (const Mat& pts : per_node)
      if (!same_points(pts, ref)) return false;
  for (const Mat& pts : s_int)
    if (!same_points(pts, ref)) return false;
  return true;
}

CollocationSets make_collocation(const TimeGrid& grid, const std::vector<QuadratureRule>& rules,
                                 const Mat& spatial, const Mat& s_ic, const Vec& s_bc_t,
                                 const Mat& s_bc_x) {
  if (static_cast<int>(rules.size()) != grid.n_sub)
    throw std::invalid_argument("one quadrature rule per subinterval required");
  CollocationSets sets;
  sets.s_r.resize(rules.size());
  sets.s_int.resize(rules.size());
  for (std::size_t k = 0; k < rules.size(); ++k) {
    sets.s_r[k].assign(static_cast<std::size_t>(rules[k].size()), spatial);
    sets.s_int[k] = spatial;
  }
  sets.s_ic = s_ic;
  sets.s_bc_t = s_bc_t;
  sets.s_bc_x = s_bc_x;
  return sets;
}

LossAssembler::LossAssembler(const Problem& problem, const TimeGrid& grid,
                             std::vector<QuadratureRule> rules, CollocationSets sets,
                             Variant variant, LossWeights weights, bool use_cache)
    : problem_(problem),
      grid_(grid),
      rules_(std::move(rules)),
      sets_(std::move(sets)),
      variant_(variant),
      weights_(weights),
      cache_active_(false) {
  const int N = grid_.n_sub;
  if (static_cast<int>(rules_.size()) != N)
    throw std::invalid_argument("rule count does not match grid");
  if (static_cast<int>(sets_.s_r.size()) != N)
    throw std::invalid_argument("S_r subinterval count does not match grid");
  if (weights_.alpha < 0 || weights_.lambda_ic < 0 || weights_.lambda_bc < 0)
    throw std::invalid_argument("loss weights must be nonnegative");

  const int d = problem_.spatial_dim;
  cache_active_ = use_cache && sets_.shared();

  // Pointwise batch: rows ordered by (subinterval, node, point).
  int n_rows = 0;
  node_offset_.resize(static_cast<std::size_t>(N));
  for (int k = 0; k < N; ++k) {
    const auto& per_node = sets_.s_r[static_cast<std::size_t>(k)];
    if (static_cast<int>(per_node.size()) != rules_[static_cast<std::size_t>(k)].size())
      throw std::invalid_argument("S_r node count does not match quadrature rule");
    for (const Mat& pts : per_node) {
      if (pts.rows() == 0) throw std::invalid_argument("empty residual point set");
      node_offset_[static_cast<std::size_t>(k)].push_back(n_rows);
      n_rows += static_cast<int>(pts.rows());
    }
  }
  t_nodes_.resize(n_rows);
  x_nodes_.resize(n_rows, d);
  w_r_.resize(n_rows);
  for (int k = 0; k < N; ++k) {
    const auto& rule = rules_[static_cast<std::size_t>(k)];
    for (int i = 0; i < rule.size(); ++i) {
      const Mat& pts = sets_.s_r[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)];
      const int at = node_offset_[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)];
      const int np = static_cast<int>(pts.rows());
      t_nodes_.segment(at, np).setConstant(rule.nodes[i]);
      x_nodes_.middleRows(at, np) = pts;
      w_r_.segment(at, np).setConstant(1.0 / (static_cast<double>(N) * rule.size() * np));
    }
  }

  if (variant_ == Variant::Pinn) {
    chunked_ = n_rows > single_tape_row_limit;
  } else {
    if (static_cast<int>(sets_.s_int.size()) != N)
      throw std::invalid_argument("S_int subinterval count does not match grid");
    for (const Mat& pts : sets_.s_int)
      if (pts.rows() == 0) throw std::invalid_argument("empty integral point set");

    // A single tape holding the separate source batch grows quadratically
    // with refined point sets; past the row budget, switch to chunked
    // accumulation with the integral points deduplicated across subintervals.
    if (!cache_active_) {
      long n_src_est = 0;
      for (int k = 0; k < N; ++k) {
        const long np = sets_.s_int[static_cast<std::size_t>(k)].rows();
        const int p_lo = (variant_ == Variant::IR2) ? 0 : k;
        for (int p = p_lo; p <= k; ++p)
          n_src_est += static_cast<long>(rules_[static_cast<std::size_t>(p)].size()) * np;
      }
      chunked_ = n_rows + n_src_est > single_tape_row_limit;
    }
    if (chunked_) {
      s_int_map_.resize(static_cast<std::size_t>(N));
      std::map<std::vector<double>, int> index;
      std::vector<Vec> rows;
      for (int k = 0; k < N; ++k) {
        const Mat& pts = sets_.s_int[static_cast<std::size_t>(k)];
        for (Eigen::Index j = 0; j < pts.rows(); ++j) {
          std::vector<double> key(static_cast<std::size_t>(pts.cols()));
          for (Eigen::Index c = 0; c < pts.cols(); ++c)
            key[static_cast<std::size_t>(c)] = pts(j, c);
          auto [it, fresh] = index.try_emplace(std::move(key), static_cast<int>(rows.size()));
          if (fresh) rows.push_back(pts.row(j).transpose());
          s_int_map_[static_cast<std::size_t>(k)].push_back(it->second);
        }
      }
      union_x_.resize(static_cast<Eigen::Index>(rows.size()), d);
      for (std::size_t u = 0; u < rows.size(); ++u)
        union_x_.row(static_cast<Eigen::Index>(u)) = rows[u].transpose();
    }
  }

  if (variant_ != Variant::Pinn && !chunked_) {
    // r_int rows ordered by (subinterval, point).
    int n_rint = 0;
    std::vector<int> rint_offset(static_cast<std::size_t>(N));
    for (int k = 0; k < N; ++k) {
      rint_offset[static_cast<std::size_t>(k)] = n_rint;
      n_rint += static_cast<int>(sets_.s_int[static_cast<std::size_t>(k)].rows());
    }
    w_int_.resize(n_rint);

    // Knot batch: per subinterval a left and a right block over s_int[k].
    int n_knot = 0;
    std::vector<int> knot_offset(static_cast<std::size_t>(N));
    for (int k = 0; k < N; ++k) {
      knot_offset[static_cast<std::size_t>(k)] = n_knot;
      n_knot += 2 * static_cast<int>(sets_.s_int[static_cast<std::size_t>(k)].rows());
    }
    t_knot_.resize(n_knot);
    x_knot_.resize(n_knot, d);

    // Source batch for the stored N[u]-f values.
    int n_src;
    std::vector<std::vector<int>> src_offset;  // per k: offsets of each (p, i) block
    if (cache_active_) {
      n_src = n_rows;
    } else {
      n_src = 0;
      src_offset.resize(static_cast<std::size_t>(N));
      for (int k = 0; k < N; ++k) {
        const int np = static_cast<int>(sets_.s_int[static_cast<std::size_t>(k)].rows());
        const int p_lo = (variant_ == Variant::IR2) ? 0 : k;
        for (int p = p_lo; p <= k; ++p)
          for (int i = 0; i < rules_[static_cast<std::size_t>(p)].size(); ++i) {
            src_offset[static_cast<std::size_t>(k)].push_back(n_src);
            n_src += np;
          }
      }
      t_int_.resize(n_src);
      x_int_.resize(n_src, d);
    }

    comb_knot_ = Mat::Zero(n_rint, n_knot);
    comb_src_ = Mat::Zero(n_rint, n_src);

    for (int k = 0; k < N; ++k) {
      const Mat& pts = sets_.s_int[static_cast<std::size_t>(k)];
      const int np = static_cast<int>(pts.rows());
      const double t_left = (variant_ == Variant::IR2) ? grid_.knots[0]
                                                       : grid_.knots[static_cast<std::size_t>(k)];
      const double t_right = grid_.knots[static_cast<std::size_t>(k) + 1];
      const double inv_len = 1.0 / (t_right - t_left);

      const int ko = knot_offset[static_cast<std::size_t>(k)];
      t_knot_.segment(ko, np).setConstant(t_left);
      t_knot_.segment(ko + np, np).setConstant(t_right);
      x_knot_.middleRows(ko, np) = pts;
      x_knot_.middleRows(ko + np, np) = pts;

      const int ro = rint_offset[static_cast<std::size_t>(k)];
      w_int_.segment(ro, np).setConstant(1.0 / (static_cast<double>(N) * np));
      for (int j = 0; j < np; ++j) {
        comb_knot_(ro + j, ko + j) = -inv_len;
        comb_knot_(ro + j, ko + np + j) = inv_len;
      }

      const int p_lo = (variant_ == Variant::IR2) ? 0 : k;
      int block = 0;
      for (int p = p_lo; p <= k; ++p) {
        const auto& rule = rules_[static_cast<std::size_t>(p)];
        for (int i = 0; i < rule.size(); ++i, ++block) {
          const double wq = rule.weights[i] * inv_len;
          if (cache_active_) {
            const int so = node_offset_[static_cast<std::size_t>(p)][static_cast<std::size_t>(i)];
            for (int j = 0; j < np; ++j) comb_src_(ro + j, so + j) += wq;
          } else {
            const int so =
                src_offset[static_cast<std::size_t>(k)][static_cast<std::size_t>(block)];
            t_int_.segment(so, np).setConstant(rule.nodes[i]);
            x_int_.middleRows(so, np) = pts;
            for (int j = 0; j < np; ++j) comb_src_(ro + j, so + j) += wq;
          }
        }
      }
    }
  }

  if (problem_.bc != BcKind::HardIcOnly && sets_.s_ic.rows() > 0) {
    if (!problem_.ic_g) throw std::invalid_argument("problem lacks initial data");
    ic_values_ = problem_.ic_g(sets_.s_ic);
  }
  if (problem_.bc == BcKind::Dirichlet && sets_.s_bc_t.size() > 0) {
    if (!problem_.bc_b) throw std::invalid_argument("problem lacks boundary data");
    bc_values_ = problem_.bc_b(sets_.s_bc_t, sets_.s_bc_x);
  }
}

Var LossAssembler::record_core(Tape& tape, Model& model, const Vec& t, const Mat& x,
                               const BundleBatch& bundle) const {
  (void)model;
  Var nu = problem_.operator_N(tape, bundle, t, x);
  if (problem_.forcing) {
    Mat f = problem_.forcing(t, x);
    if (f.rows() == tape.value(nu).rows() && f.cwiseAbs().maxCoeff() > 0.0)
      nu = tape.sub(nu, tape.constant(f));
  }
  return nu;
}

LossAssembler::Terms LossAssembler::assemble(Tape& tape, Model& model) const {
  if (chunked_)
    throw std::logic_error(
        "batches exceed the single-tape row budget; use loss_and_gradient");
  model.bind(tape);
  Terms terms;

  BundleBatch bundle =
      evaluate_bundle(tape, model, t_nodes_, x_nodes_, true, problem_.spatial_orders);
  Var core = record_core(tape, model, t_nodes_, x_nodes_, bundle);
  Var r = tape.add(bundle.dt, core);
  if (!tape.value(r).allFinite())
    throw std::runtime_error("non-finite residual in " + problem_.name);
  terms.loss_r = weighted_sum_sq(tape, r, w_r_);
  terms.total = terms.loss_r;

  if (variant_ != Variant::Pinn) {
    Var src = core;
    if (!cache_active_) {
      BundleBatch ib = evaluate_bundle(tape, model, t_int_, x_int_, false, problem_.spatial_orders);
      src = record_core(tape, model, t_int_, x_int_, ib);
    }
    BundleBatch kb = evaluate_bundle(tape, model, t_knot_, x_knot_, false, {});
    Var r_int = tape.add(tape.matmul(tape.constant(comb_knot_), kb.u),
                         tape.matmul(tape.constant(comb_src_), src));
    terms.loss_int = weighted_sum_sq(tape, r_int, w_int_);
    terms.total = tape.add(terms.total, tape.scale(terms.loss_int, weights_.alpha));
  } else {
    terms.loss_int = tape.constant(0.0);
  }

  if (problem_.bc != BcKind::HardIcOnly && sets_.s_ic.rows() > 0) {
    const int n = static_cast<int>(sets_.s_ic.rows());
    Vec t0v = Vec::Constant(n, grid_.t0);
    BundleBatch icb = evaluate_bundle(tape, model, t0v, sets_.s_ic, false, {});
    Var diff = tape.sub(icb.u, tape.constant(ic_values_));
    terms.loss_ic = weighted_sum_sq(tape, diff, Vec::Constant(n, 1.0 / n));
    terms.total = tape.add(terms.total, tape.scale(terms.loss_ic, weights_.lambda_ic));
  } else {
    terms.loss_ic = tape.constant(0.0);
  }

  if (problem_.bc == BcKind::Dirichlet && sets_.s_bc_t.size() > 0) {
    const int n = static_cast<int>(sets_.s_bc_t.size());
    BundleBatch bcb = evaluate_bundle(tape, model, sets_.s_bc_t, sets_.s_bc_x, false, {});
    Var diff = tape.sub(bcb.u, tape.constant(bc_values_));
    terms.loss_bc = weighted_sum_sq(tape, diff, Vec::Constant(n, 1.0 / n));
    terms.total = tape.add(terms.total, tape.scale(terms.loss_bc, weights_.lambda_bc));
  } else {
    terms.loss_bc = tape.constant(0.0);
  }

  tape.set_output(terms.total);
  return terms;
}

LossParts LossAssembler::loss_and_gradient(Model& model, Vec* grad) const {
  if (chunked_) return loss_grad_chunked(model, grad);
  Tape tape;
  Terms t = assemble(tape, model);
  LossParts p;
  p.loss_r = tape.value(t.loss_r)(0, 0);
  p.loss_int = tape.value(t.loss_int)(0, 0);
  p.loss_ic = tape.value(t.loss_ic)(0, 0);
  p.loss_bc = tape.value(t.loss_bc)(0, 0);
  p.total = tape.value(t.total)(0, 0);
  if (grad) {
    tape.backward();
    *grad = model.collect_grad(tape);
  }
  return p;
}

LossParts LossAssembler::loss_grad_chunked(Model& model, Vec* grad) const {
  LossParts parts;
  Vec acc;
  if (grad) acc = Vec::Zero(model.get_params().size());
  const int N = grid_.n_sub;

  // builds one additive piece of the objective on a private tape, adds its
  // value to *slot, and folds weight * d(piece)/d(theta) into the gradient
  auto run_term = [&](double weight, double* slot, const auto& build) {
    Tape tape;
    model.bind(tape);
    Var term = build(tape);
    *slot += tape.value(term)(0, 0);
    if (grad) {
      tape.set_output(weight == 1.0 ? term : tape.scale(term, weight));
      tape.backward();
      acc += model.collect_grad(tape);
    }
  };

  constexpr int kResidualChunk = 1024;  // pointwise rows per tape
  constexpr int kPointChunk = 24;       // integral points per tape

  const int n_rows = static_cast<int>(t_nodes_.size());
  for (int lo = 0; lo < n_rows; lo += kResidualChunk) {
    const int len = std::min(kResidualChunk, n_rows - lo);
    run_term(1.0, &parts.loss_r, [&](Tape& tape) {
      const Vec tc = t_nodes_.segment(lo, len);
      const Mat xc = x_nodes_.middleRows(lo, len);
      BundleBatch b = evaluate_bundle(tape, model, tc, xc, true, problem_.spatial_orders);
      Var core = record_core(tape, model, tc, xc, b);
      Var r = tape.add(b.dt, core);
      if (!tape.value(r).allFinite())
        throw std::runtime_error("non-finite residual in " + problem_.name);
      return weighted_sum_sq(tape, r, w_r_.segment(lo, len));
    });
  }

  if (variant_ != Variant::Pinn) {
    const int n_union = static_cast<int>(union_x_.rows());
    for (int glo = 0; glo < n_union; glo += kPointChunk) {
      const int ghi = std::min(glo + kPointChunk, n_union);

      // integral-residual rows whose point falls in this slice
      std::vector<std::pair<int, int>> kj;  // (subinterval, row of s_int[k])
      for (int k = 0; k < N; ++k)
        for (std::size_t j = 0; j < s_int_map_[static_cast<std::size_t>(k)].size(); ++j) {
          const int u = s_int_map_[static_cast<std::size_t>(k)][j];
          if (u >= glo && u < ghi) kj.emplace_back(k, static_cast<int>(j));
        }
      if (kj.empty()) continue;

      // temporal nodes any of those rows integrate over
      std::vector<char> sub_used(static_cast<std::size_t>(N), 0);
      for (const auto& [k, j] : kj) {
        const int p_lo = (variant_ == Variant::IR2) ? 0 : k;
        for (int p = p_lo; p <= k; ++p) sub_used[static_cast<std::size_t>(p)] = 1;
      }
      std::vector<int> node_pos(static_cast<std::size_t>(N), -1);  // first flat node per k
      int n_nodes = 0;
      for (int p = 0; p < N; ++p)
        if (sub_used[static_cast<std::size_t>(p)]) {
          node_pos[static_cast<std::size_t>(p)] = n_nodes;
          n_nodes += rules_[static_cast<std::size_t>(p)].size();
        }

      run_term(weights_.alpha, &parts.loss_int, [&](Tape& tape) {
        const int glen = ghi - glo;
        const int n_src = n_nodes * glen;
        Vec t_src(n_src);
        Mat x_src(n_src, union_x_.cols());
        for (int p = 0; p < N; ++p) {
          if (!sub_used[static_cast<std::size_t>(p)]) continue;
          const auto& rule = rules_[static_cast<std::size_t>(p)];
          for (int i = 0; i < rule.size(); ++i) {
            const int at = (node_pos[static_cast<std::size_t>(p)] + i) * glen;
            t_src.segment(at, glen).setConstant(rule.nodes[i]);
            x_src.middleRows(at, glen) = union_x_.middleRows(glo, glen);
          }
        }

        const int n_rint = static_cast<int>(kj.size());
        Vec t_knot(2 * n_rint);
        Mat x_knot(2 * n_rint, union_x_.cols());
        Mat comb_knot = Mat::Zero(n_rint, 2 * n_rint);
        Mat comb_src = Mat::Zero(n_rint, n_src);
        Vec w(n_rint);
        for (int r = 0; r < n_rint; ++r) {
          const auto& [k, j] = kj[static_cast<std::size_t>(r)];
          const double t_left = (variant_ == Variant::IR2)
                                    ? grid_.knots[0]
                                    : grid_.knots[static_cast<std::size_t>(k)];
          const double t_right = grid_.knots[static_cast<std::size_t>(k) + 1];
          const double inv_len = 1.0 / (t_right - t_left);
          const int u = s_int_map_[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)];
          t_knot[2 * r] = t_left;
          t_knot[2 * r + 1] = t_right;
          x_knot.row(2 * r) = union_x_.row(u);
          x_knot.row(2 * r + 1) = union_x_.row(u);
          comb_knot(r, 2 * r) = -inv_len;
          comb_knot(r, 2 * r + 1) = inv_len;
          const int p_lo = (variant_ == Variant::IR2) ? 0 : k;
          for (int p = p_lo; p <= k; ++p) {
            const auto& rule = rules_[static_cast<std::size_t>(p)];
            for (int i = 0; i < rule.size(); ++i) {
              const int src = (node_pos[static_cast<std::size_t>(p)] + i) * glen + (u - glo);
              comb_src(r, src) += rule.weights[i] * inv_len;
            }
          }
          const auto np = sets_.s_int[static_cast<std::size_t>(k)].rows();
          w[r] = 1.0 / (static_cast<double>(N) * static_cast<double>(np));
        }

        BundleBatch ib = evaluate_bundle(tape, model, t_src, x_src, false, problem_.spatial_orders);
        Var src = record_core(tape, model, t_src, x_src, ib);
        BundleBatch kb = evaluate_bundle(tape, model, t_knot, x_knot, false, {});
        Var r_int = tape.add(tape.matmul(tape.constant(comb_knot), kb.u),
                             tape.matmul(tape.constant(comb_src), src));
        return weighted_sum_sq(tape, r_int, w);
      });
    }
  }

  if (problem_.bc != BcKind::HardIcOnly && sets_.s_ic.rows() > 0) {
    run_term(weights_.lambda_ic, &parts.loss_ic, [&](Tape& tape) {
      const int n = static_cast<int>(sets_.s_ic.rows());
      Vec t0v = Vec::Constant(n, grid_.t0);
      BundleBatch icb = evaluate_bundle(tape, model, t0v, sets_.s_ic, false, {});
      Var diff = tape.sub(icb.u, tape.constant(ic_values_));
      return weighted_sum_sq(tape, diff, Vec::Constant(n, 1.0 / n));
    });
  }
  if (problem_.bc == BcKind::Dirichlet && sets_.s_bc_t.size() > 0) {
    run_term(weights_.lambda_bc, &parts.loss_bc, [&](Tape& tape) {
      const int n = static_cast<int>(sets_.s_bc_t.size());
      BundleBatch bcb = evaluate_bundle(tape, model, sets_.s_bc_t, sets_.s_bc_x, false, {});
      Var diff = tape.sub(bcb.u, tape.constant(bc_values_));
      return weighted_sum_sq(tape, diff, Vec::Constant(n, 1.0 / n));
    });
  }

  parts.total = parts.loss_r + weights_.alpha * parts.loss_int +
                weights_.lambda_ic * parts.loss_ic + weights_.lambda_bc * parts.loss_bc;
  if (grad) *grad = std::move(acc);
  return parts;
}

LossParts LossAssembler::evaluate(Model& model) const {
  return loss_and_gradient(model, nullptr);
}

Vec pointwise_residual(const Problem& problem, Model& model, double t, const Vec& x) {
  Vec tv(1);
  tv[0] = t;
  Mat xm(1, x.size());
  if (x.size() > 0) xm.row(0) = x.transpose();
  Mat r = residual_at(problem, model, tv, xm);
  return r.row(0).transpose();
}

Mat residual_at(const Problem& problem, Model& model, const Vec& t, const Mat& x) {
  // evaluate in bounded chunks: jet bundles hold every intermediate layer
  // value on the tape, so a single pass over a large point pool would peak
  // at several GB
  constexpr Eigen::Index kChunk = 256;
  const Eigen::Index n = t.size();
  Mat out;
  for (Eigen::Index lo = 0; lo < n; lo += kChunk) {
    const Eigen::Index len = std::min(kChunk, n - lo);
    const Vec tc = t.segment(lo, len);
    const Mat xc = x.middleRows(lo, len);
    Tape tape;
    model.bind(tape);
    BundleBatch bundle = evaluate_bundle(tape, model, tc, xc, true, problem.spatial_orders);
    Var nu = problem.operator_N(tape, bundle, tc, xc);
    Var r = tape.add(bundle.dt, nu);
    Mat chunk = tape.value(r);
    if (problem.forcing) chunk -= problem.forcing(tc, xc);
    if (out.cols() == 0) out.resize(n, chunk.cols());
    out.middleRows(lo, len) = chunk;
  }
  if (!out.allFinite()) throw std::runtime_error("non-finite residual in " + problem.name);
  return out;
}

Vec integral_residual(const Problem& problem, Model& model, const TimeGrid& grid,
                      const std::vector<QuadratureRule>& rules, double a, double b,
                      const Vec& x) {
  const double tol = 1e-9 * std::max(1.0, std::abs(grid.T));
  int ka = -1, kb = -1;
  for (std::size_t k = 0; k < grid.knots.size(); ++k) {
    if (std::abs(grid.knots[k] - a) < tol) ka = static_cast<int>(k);
    if (std::abs(grid.knots[k] - b) < tol) kb = static_cast<int>(k);
  }
  if (ka < 0 || kb < 0 || ka >= kb)
    throw std::invalid_argument("integral interval endpoints must be grid knots with a < b");

  Mat xm(1, x.size());
  if (x.size() > 0) xm.row(0) = x.transpose();
  Vec tab(2);
  tab << a, b;
  Mat xx(2, x.size());
  if (x.size() > 0) {
    xx.row(0) = x.transpose();
    xx.row(1) = x.transpose();
  }
  Mat u_ab = evaluate_values(model, tab, xx);
  Vec acc = (u_ab.row(1) - u_ab.row(0)).transpose();

  for (int k = ka; k < kb; ++k) {
    const auto& rule = rules[static_cast<std::size_t>(k)];
    const int m = rule.size();
    Vec tn = rule.nodes;
    Mat xn(m, x.size());
    for (int i = 0; i < m; ++i)
      if (x.size() > 0) xn.row(i) = x.transpose();
    Tape tape;
    model.bind(tape);
    BundleBatch bd = evaluate_bundle(tape, model, tn, xn, false, problem.spatial_orders);
    Var nu = problem.operator_N(tape, bd, tn, xn);
    Mat core = tape.value(nu);
    if (problem.forcing) core -= problem.forcing(tn, xn);
    acc += core.transpose() * rule.weights;
  }
  return acc / (b - a);
}

}  // namespace irpinn
