#include "irpinn/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace irpinn {

void TrainConfig::validate() const {
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (!(lr0 > 0)) throw std::invalid_argument("lr0 must be positive");
  if (!(decay_rate > 0.0 && decay_rate <= 1.0))
    throw std::invalid_argument("decay rate must be in (0, 1]");
  if (step_size < 1) throw std::invalid_argument("step size must be >= 1");
  if (schedule_offset < 0) throw std::invalid_argument("schedule offset must be >= 0");
}

AdamState AdamState::zeros(int n) {
  AdamState s;
  s.m = Vec::Zero(n);
  s.v = Vec::Zero(n);
  return s;
}

void adam_step(AdamState& state, Vec& params, const Vec& grad, double lr) {
  if (params.size() != grad.size() || params.size() != state.m.size())
    throw std::invalid_argument("adam_step: layout mismatch");
  if (!grad.allFinite()) throw std::runtime_error("non-finite gradient in adam_step");
  state.step_count += 1;
  const double b1 = state.beta1, b2 = state.beta2;
  state.m = b1 * state.m + (1.0 - b1) * grad;
  state.v = b2 * state.v.array().matrix() + (1.0 - b2) * grad.cwiseProduct(grad);
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step_count));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step_count));
  params.array() -=
      lr * (state.m.array() / bc1) / ((state.v.array() / bc2).sqrt() + state.eps);
}

double lr_at(long epoch, const TrainConfig& cfg) {
  if (epoch < 1) throw std::invalid_argument("epochs count from 1");
  const long decays = epoch / cfg.step_size;
  return cfg.lr0 * std::pow(cfg.decay_rate, static_cast<double>(decays));
}

double relative_l2(const Vec& pred, const Vec& ref) {
  const double denom = ref.norm();
  if (denom == 0.0) throw std::invalid_argument("relative_l2: reference has zero norm");
  if (pred.size() != ref.size()) throw std::invalid_argument("relative_l2: length mismatch");
  return (pred - ref).norm() / denom;
}

Vec relative_l2_columns(const Mat& pred, const Mat& ref) {
  if (pred.rows() != ref.rows() || pred.cols() != ref.cols())
    throw std::invalid_argument("relative_l2_columns: shape mismatch");
  Vec out(pred.cols());
  for (int c = 0; c < pred.cols(); ++c) out[c] = relative_l2(pred.col(c), ref.col(c));
  return out;
}

TrainHistory train(Model& model, const LossAssembler& assembler, const TrainConfig& cfg,
                   const EvalFn& eval) {
  cfg.validate();
  TrainHistory hist;
  if (cfg.epochs == 0) return hist;

  Vec params = model.get_params();
  AdamState adam = AdamState::zeros(static_cast<int>(params.size()));

  for (long e = 1; e <= cfg.epochs; ++e) {
    const double lr = lr_at(e + cfg.schedule_offset, cfg);
    Vec grad;
    LossParts parts = assembler.loss_and_gradient(model, &grad);
    if (!std::isfinite(parts.total))
      throw std::runtime_error("training diverged (non-finite loss) at epoch " +
                               std::to_string(e));
    adam_step(adam, params, grad, lr);
    model.set_params(params);

    hist.epochs.push_back(e);
    hist.losses.push_back(parts);
    hist.lrs.push_back(lr);
    if (eval && cfg.eval_every > 0 && (e % cfg.eval_every == 0 || e == cfg.epochs)) {
      EvalSnapshot snap;
      snap.epoch = e;
      snap.rel_l2 = eval(model);
      hist.evals.push_back(std::move(snap));
    }
  }
  return hist;
}

MarchResult time_march(int subdomain_count, const SubdomainFactory& factory,
                       const TrainConfig& cfg, const std::function<EvalFn(int)>& eval_for) {
  if (subdomain_count < 1) throw std::invalid_argument("need at least one subdomain");
  MarchResult result;
  Model* previous = nullptr;
  for (int k = 0; k < subdomain_count; ++k) {
    Subdomain sub = factory(k, previous);
    EvalFn eval = eval_for ? eval_for(k) : EvalFn();
    try {
      result.histories.push_back(train(*sub.model, *sub.assembler, cfg, eval));
    } catch (const std::runtime_error& err) {
      throw std::runtime_error("subdomain " + std::to_string(k) + ": " + err.what());
    }
    result.subdomains.push_back(sub);
    previous = result.subdomains.back().model.get();
  }
  return result;
}

}  // namespace irpinn
