#pragma once

#include "irpinn/residual.hpp"

#include <functional>
#include <memory>

namespace irpinn {

struct TrainConfig {
  int epochs = 1;
  double lr0 = 1e-3;
  double decay_rate = 0.9;  // eta in (0, 1]
  int step_size = 1000;     // epochs between decays
  std::uint64_t seed = 0;
  LossWeights weights;
  Variant variant = Variant::Pinn;
  int eval_every = 1000;
  long schedule_offset = 0;  // epochs already spent on the lr schedule

  void validate() const;
};

struct AdamState {
  Vec m, v;
  long step_count = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState zeros(int n);
};

// Standard Adam update with bias correction, in place.
void adam_step(AdamState& state, Vec& params, const Vec& grad, double lr);

// lr0 * eta^floor(epoch / n_s); epochs count from 1.
double lr_at(long epoch, const TrainConfig& cfg);

struct EvalSnapshot {
  long epoch = 0;
  Vec rel_l2;  // per component
};

struct TrainHistory {
  std::vector<long> epochs;
  std::vector<LossParts> losses;
  std::vector<double> lrs;
  std::vector<EvalSnapshot> evals;
};

// ||pred - ref||_2 / ||ref||_2 over a flattened test set.
double relative_l2(const Vec& pred, const Vec& ref);
Vec relative_l2_columns(const Mat& pred, const Mat& ref);  // per component

// Periodic evaluation hook: epoch -> per-component relative L2.
using EvalFn = std::function<Vec(Model&)>;

// Full-batch Adam loop: refresh the shared residual values, assemble the
// losses, reverse-sweep, update. Deterministic for fixed inputs.
TrainHistory train(Model& model, const LossAssembler& assembler, const TrainConfig& cfg,
                   const EvalFn& eval = nullptr);

// Consecutive training over temporal subdomains; the factory receives the
// subdomain index and the trained model of the previous subdomain (null for
// the first) and returns the model/assembler pair for that subdomain, with
// its initial condition taken from the previous model's terminal prediction.
struct Subdomain {
  std::shared_ptr<Model> model;
  std::shared_ptr<LossAssembler> assembler;
};

using SubdomainFactory = std::function<Subdomain(int k, Model* previous)>;

struct MarchResult {
  std::vector<Subdomain> subdomains;
  std::vector<TrainHistory> histories;
};

MarchResult time_march(int subdomain_count, const SubdomainFactory& factory,
                       const TrainConfig& cfg,
                       const std::function<EvalFn(int)>& eval_for = nullptr);

}  // namespace irpinn
