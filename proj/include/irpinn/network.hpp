#pragma once

#include "irpinn/jet.hpp"
#include "irpinn/params.hpp"

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <vector>

namespace irpinn {

// Fully-connected tanh perceptron. Hidden layers tanh, output identity.
struct Network {
  std::vector<int> layer_sizes;
  ParamVector params;

  int input_dim() const { return layer_sizes.front(); }
  int output_dim() const { return layer_sizes.back(); }
};

// Glorot normal: weights ~ N(0, 2/(fan_in+fan_out)), biases zero.
// Deterministic per seed (explicit Box-Muller over mt19937_64).
Network init_glorot(const std::vector<int>& layer_sizes, std::uint64_t seed);

// Exact C-infinity periodic features {1, cos(w x), sin(w x), ..., cos(M w x),
// sin(M w x)}, w = 2*pi/L. Output dimension 2M+1.
struct PeriodicEmbedding {
  double period_L = 0.0;
  int frequency_M = 0;
  double omega() const;
  int output_dim() const { return 2 * frequency_M + 1; }
};

std::vector<JetVar> embed_periodic(Tape& tape, const JetVar& x, const PeriodicEmbedding& emb);

// Hard initial-condition wrapper: output = (t - t_origin) * u + u0.
struct HardIC {
  Vec u0;
  double t_origin = 0.0;
};

// u jet is (n x C), t jet (n x 1); jet arithmetic with column broadcast.
JetVar wrap_exact_ic(Tape& tape, const JetVar& u, const JetVar& t, const HardIC& ic);

// Raw jet forward pass through the layers. inputs: one (n x 1) jet per input
// feature (post-embedding). Returns an (n x output_dim) jet.
JetVar net_forward(Tape& tape, const Network& net, const BoundParams& bound,
                   const std::vector<JetVar>& inputs);

// A differentiable field u(t, x): networks with their wrappers, or analytic
// closed forms for oracles. eval receives physical-coordinate jets and must
// record on the given tape; bind must be called once per tape beforehand.
class Model {
 public:
  virtual ~Model() = default;
  virtual int components() const = 0;
  virtual int spatial_dim() const = 0;
  virtual void bind(Tape& tape) = 0;
  virtual JetVar eval(Tape& tape, const JetVar& t, const std::vector<JetVar>& x) const = 0;

  // Trainable surface; analytic models have none.
  virtual int param_count() const { return 0; }
  virtual Vec get_params() const { return Vec(); }
  virtual void set_params(const Vec&) {}
  virtual Vec collect_grad(Tape& tape) const { (void)tape; return Vec(); }
};

// Affine rescaling of an input coordinate to [-1, 1].
struct InputScaling {
  double lo = -1.0;
  double hi = 1.0;
};

// Network wrapped with input normalization, optional periodic embedding of
// the (single) spatial coordinate, and optional hard IC.
class NetworkModel : public Model {
 public:
  NetworkModel(Network net, InputScaling t_scale, std::vector<InputScaling> x_scale,
               std::optional<PeriodicEmbedding> embedding = std::nullopt,
               std::optional<HardIC> hard_ic = std::nullopt);

  int components() const override { return net_.output_dim(); }
  int spatial_dim() const override { return static_cast<int>(x_scale_.size()); }
  void bind(Tape& tape) override;
  JetVar eval(Tape& tape, const JetVar& t, const std::vector<JetVar>& x) const override;

  int param_count() const override { return net_.params.size(); }
  Vec get_params() const override { return net_.params.values; }
  void set_params(const Vec& v) override { net_.params.values = v; }
  Vec collect_grad(Tape& tape) const override;

  const Network& network() const { return net_; }
  Network& network() { return net_; }
  const std::optional<HardIC>& hard_ic() const { return hard_ic_; }
  void set_hard_ic(HardIC ic) { hard_ic_ = std::move(ic); }

 private:
  Network net_;
  InputScaling t_scale_;
  std::vector<InputScaling> x_scale_;
  std::optional<PeriodicEmbedding> embedding_;
  std::optional<HardIC> hard_ic_;
  BoundParams bound_;
};

// Several single-output models stacked as components of one field (the
// coupled-system case: one network per field).
class CompositeModel : public Model {
 public:
  explicit CompositeModel(std::vector<std::shared_ptr<Model>> parts);

  int components() const override;
  int spatial_dim() const override { return parts_.front()->spatial_dim(); }
  void bind(Tape& tape) override;
  JetVar eval(Tape& tape, const JetVar& t, const std::vector<JetVar>& x) const override;

  int param_count() const override;
  Vec get_params() const override;
  void set_params(const Vec& v) override;
  Vec collect_grad(Tape& tape) const override;

 private:
  std::vector<std::shared_ptr<Model>> parts_;
};

// Closed-form field built from jet primitives; no trainable parameters.
class AnalyticModel : public Model {
 public:
  using EvalFn = std::function<JetVar(Tape&, const JetVar&, const std::vector<JetVar>&)>;
  AnalyticModel(int components, int spatial_dim, EvalFn fn)
      : components_(components), spatial_dim_(spatial_dim), fn_(std::move(fn)) {}

  int components() const override { return components_; }
  int spatial_dim() const override { return spatial_dim_; }
  void bind(Tape&) override {}
  JetVar eval(Tape& tape, const JetVar& t, const std::vector<JetVar>& x) const override {
    return fn_(tape, t, x);
  }

 private:
  int components_;
  int spatial_dim_;
  EvalFn fn_;
};

// Batched value/derivative evaluation: one t-tracked pass for u and u_t, one
// x-tracked pass at max requested order for the spatial derivatives.
struct BundleBatch {
  Var u;                  // n x C
  Var dt;                 // n x C, valid iff want_dt
  std::map<int, Var> dx;  // spatial order -> n x C (raw derivatives, k! applied)
  bool has_dt = false;
};

BundleBatch evaluate_bundle(Tape& tape, const Model& model, const Vec& t, const Mat& x,
                            bool want_dt, const std::set<int>& spatial_orders);

// Value-only evaluation (order-0 jets) on a private tape.
Mat evaluate_values(Model& model, const Vec& t, const Mat& x);

// Single-point convenience form of the bundle evaluator.
struct DerivBundle {
  Vec u;
  Vec dt;
  std::map<int, Vec> dx;
};

DerivBundle derivative_bundle(Model& model, double t, const Vec& x, bool want_dt,
                              const std::set<int>& spatial_orders);

}  // namespace irpinn
