#include "irpinn/network.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace irpinn {

namespace {

// Explicit Box-Muller so the draw sequence does not depend on the standard
// library's std::normal_distribution algorithm.
class NormalSampler {
 public:
  explicit NormalSampler(std::uint64_t seed) : rng_(seed) {}

  double operator()() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

 private:
  double uniform() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }

  std::mt19937_64 rng_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace

Network init_glorot(const std::vector<int>& layer_sizes, std::uint64_t seed) {
  if (layer_sizes.size() < 2) throw std::invalid_argument("network needs at least two layers");
  for (int s : layer_sizes)
    if (s < 1) throw std::invalid_argument("layer sizes must be positive");

  Network net;
  net.layer_sizes = layer_sizes;
  int total = 0;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    const int fan_in = layer_sizes[l], fan_out = layer_sizes[l + 1];
    net.params.layout.push_back({total, fan_in, fan_out});
    total += fan_in * fan_out;
    net.params.layout.push_back({total, 1, fan_out});
    total += fan_out;
  }
  net.params.values = Vec::Zero(total);

  NormalSampler draw(seed);
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    const int fan_in = layer_sizes[l], fan_out = layer_sizes[l + 1];
    const double sd = std::sqrt(2.0 / (fan_in + fan_out));
    Mat w(fan_in, fan_out);
    for (int r = 0; r < fan_in; ++r)
      for (int c = 0; c < fan_out; ++c) w(r, c) = sd * draw();
    net.params.set_block(static_cast<int>(2 * l), w);
    // biases stay zero
  }
  return net;
}

double PeriodicEmbedding::omega() const {
  if (period_L <= 0.0) throw std::invalid_argument("periodic embedding needs positive period");
  return 2.0 * M_PI / period_L;
}

std::vector<JetVar> embed_periodic(Tape& tape, const JetVar& x, const PeriodicEmbedding& emb) {
  if (emb.frequency_M < 0) throw std::invalid_argument("embedding frequency must be >= 0");
  const double w = emb.omega();
  const Eigen::Index n = tape.value(x.c[0]).rows();
  std::vector<JetVar> feats;
  feats.reserve(static_cast<std::size_t>(emb.output_dim()));

  JetVar one;
  one.c.push_back(tape.constant(Mat::Ones(n, 1)));
  for (int k = 1; k <= x.order(); ++k) one.c.push_back(tape.constant(Mat::Zero(n, 1)));
  feats.push_back(std::move(one));

  for (int k = 1; k <= emb.frequency_M; ++k) {
    JetVar s, c;
    jet_sin_cos(jet_scale(x, k * w), s, c);
    feats.push_back(std::move(c));
    feats.push_back(std::move(s));
  }
  return feats;
}

JetVar wrap_exact_ic(Tape& tape, const JetVar& u, const JetVar& t, const HardIC& ic) {
  detail::require_same_order(u, t);
  const int K = u.order();
  JetVar shifted = jet_shift(t, -ic.t_origin);
  JetVar out;
  out.c.reserve(u.c.size());
  for (int k = 0; k <= K; ++k) {
    Var acc = tape.mul_col(u.c[k], shifted.c[0]);
    for (int j = 1; j <= k; ++j)
      acc = tape.add(acc, tape.mul_col(u.c[k - j], shifted.c[j]));
    out.c.push_back(acc);
  }
  Mat u0row = ic.u0.transpose();
  out.c[0] = tape.add_row(out.c[0], tape.constant(u0row));
  return out;
}

JetVar net_forward(Tape& tape, const Network& net, const BoundParams& bound,
                   const std::vector<JetVar>& inputs) {
  if (static_cast<int>(inputs.size()) != net.input_dim())
    throw std::invalid_argument("input feature count does not match network input dim");
  const int K = inputs.front().order();
  for (const auto& f : inputs)
    if (f.order() != K) throw std::invalid_argument("input jets must share order");

  JetVar a;
  a.c.reserve(static_cast<std::size_t>(K) + 1);
  for (int k = 0; k <= K; ++k) {
    std::vector<Var> cols;
    cols.reserve(inputs.size());
    for (const auto& f : inputs) cols.push_back(f.c[static_cast<std::size_t>(k)]);
    a.c.push_back(cols.size() == 1 ? cols[0] : tape.hcat(cols));
  }

  const std::size_t n_layers = net.layer_sizes.size() - 1;
  for (std::size_t l = 0; l < n_layers; ++l) {
    Var w = bound.blocks[2 * l];
    Var b = bound.blocks[2 * l + 1];
    JetVar z;
    z.c.reserve(a.c.size());
    for (int k = 0; k <= K; ++k) z.c.push_back(tape.matmul(a.c[static_cast<std::size_t>(k)], w));
    z.c[0] = tape.add_row(z.c[0], b);
    a = (l + 1 < n_layers) ? jet_tanh(z) : z;
  }
  return a;
}

NetworkModel::NetworkModel(Network net, InputScaling t_scale, std::vector<InputScaling> x_scale,
                           std::optional<PeriodicEmbedding> embedding,
                           std::optional<HardIC> hard_ic)
    : net_(std::move(net)),
      t_scale_(t_scale),
      x_scale_(std::move(x_scale)),
      embedding_(std::move(embedding)),
      hard_ic_(std::move(hard_ic)) {
  int expect = 1;  // time feature
  if (embedding_) {
    if (x_scale_.size() != 1)
      throw std::invalid_argument("periodic embedding expects one spatial coordinate");
    expect += embedding_->output_dim();
  } else {
    expect += static_cast<int>(x_scale_.size());
  }
  if (net_.input_dim() != expect)
    throw std::invalid_argument("network input dim does not match features");
}

void NetworkModel::bind(Tape& tape) { bound_ = bind_params(tape, net_.params); }

namespace {
JetVar normalize(const JetVar& v, const InputScaling& s) {
  const double scale = 2.0 / (s.hi - s.lo);
  const double offset = -(s.hi + s.lo) / (s.hi - s.lo);
  return jet_shift(jet_scale(v, scale), offset);
}
}  // namespace

JetVar NetworkModel::eval(Tape& tape, const JetVar& t, const std::vector<JetVar>& x) const {
  if (x.size() != x_scale_.size())
    throw std::invalid_argument("spatial coordinate count mismatch");
  std::vector<JetVar> feats;
  feats.push_back(normalize(t, t_scale_));
  if (embedding_) {
    auto emb = embed_periodic(tape, x[0], *embedding_);
    for (auto& f : emb) feats.push_back(std::move(f));
  } else {
    for (std::size_t j = 0; j < x.size(); ++j) feats.push_back(normalize(x[j], x_scale_[j]));
  }
  JetVar out = net_forward(tape, net_, bound_, feats);
  if (hard_ic_) out = wrap_exact_ic(tape, out, t, *hard_ic_);
  return out;
}

Vec NetworkModel::collect_grad(Tape& tape) const {
  Vec g = Vec::Zero(net_.params.size());
  for (std::size_t i = 0; i < bound_.blocks.size(); ++i) {
    const LayoutEntry& e = net_.params.layout[i];
    const Mat& gm = tape.grad(bound_.blocks[i]);
    if (gm.size() == 0) continue;
    for (int c = 0; c < e.cols; ++c)
      for (int r = 0; r < e.rows; ++r) g[e.offset + c * e.rows + r] = gm(r, c);
  }
  return g;
}

CompositeModel::CompositeModel(std::vector<std::shared_ptr<Model>> parts)
    : parts_(std::move(parts)) {
  if (parts_.empty()) throw std::invalid_argument("composite model needs parts");
}

int CompositeModel::components() const {
  int c = 0;
  for (const auto& p : parts_) c += p->components();
  return c;
}

void CompositeModel::bind(Tape& tape) {
  for (auto& p : parts_) p->bind(tape);
}

JetVar CompositeModel::eval(Tape& tape, const JetVar& t, const std::vector<JetVar>& x) const {
  const int K = t.order();
  std::vector<JetVar> outs;
  outs.reserve(parts_.size());
  for (const auto& p : parts_) outs.push_back(p->eval(tape, t, x));
  JetVar r;
  r.c.reserve(static_cast<std::size_t>(K) + 1);
  for (int k = 0; k <= K; ++k) {
    std::vector<Var> cols;
    for (const auto& o : outs) cols.push_back(o.c[static_cast<std::size_t>(k)]);
    r.c.push_back(tape.hcat(cols));
  }
  return r;
}

int CompositeModel::param_count() const {
  int n = 0;
  for (const auto& p : parts_) n += p->param_count();
  return n;
}

Vec CompositeModel::get_params() const {
  Vec v(param_count());
  int at = 0;
  for (const auto& p : parts_) {
    Vec pv = p->get_params();
    v.segment(at, pv.size()) = pv;
    at += static_cast<int>(pv.size());
  }
  return v;
}

void CompositeModel::set_params(const Vec& v) {
  int at = 0;
  for (auto& p : parts_) {
    const int n = p->param_count();
    p->set_params(v.segment(at, n));
    at += n;
  }
}

Vec CompositeModel::collect_grad(Tape& tape) const {
  Vec g(param_count());
  int at = 0;
  for (const auto& p : parts_) {
    Vec pg = p->collect_grad(tape);
    g.segment(at, pg.size()) = pg;
    at += static_cast<int>(pg.size());
  }
  return g;
}

namespace {

std::vector<JetVar> lift_spatial(Tape& tape, const Mat& x, int order, int tracked_dim) {
  std::vector<JetVar> xs;
  for (int j = 0; j < x.cols(); ++j) {
    const Vec vals = x.col(j);
    const Vec seeds = (j == tracked_dim) ? Vec::Ones(x.rows()) : Vec::Zero(x.rows());
    xs.push_back(jet_lift_batch(tape, vals, seeds, order));
  }
  return xs;
}

}  // namespace

BundleBatch evaluate_bundle(Tape& tape, const Model& model, const Vec& t, const Mat& x,
                            bool want_dt, const std::set<int>& spatial_orders) {
  if (x.rows() != t.size()) throw std::invalid_argument("t/x row mismatch");
  for (int k : spatial_orders)
    if (k < 1 || k > kMaxJetOrder)
      throw std::invalid_argument("unsupported spatial derivative order " + std::to_string(k));
  if (!spatial_orders.empty() && x.cols() != 1)
    throw std::invalid_argument("spatial derivatives implemented for one spatial dimension");

  BundleBatch out;
  bool have_u = false;

  if (want_dt || spatial_orders.empty()) {
    const int K = want_dt ? 1 : 0;
    JetVar tj = jet_lift_batch(tape, t, want_dt ? Vec::Ones(t.size()) : Vec::Zero(t.size()), K);
    auto xs = lift_spatial(tape, x, K, -1);
    JetVar u = model.eval(tape, tj, xs);
    out.u = u.c[0];
    have_u = true;
    if (want_dt) {
      out.dt = u.c[1];
      out.has_dt = true;
    }
  }

  if (!spatial_orders.empty()) {
    const int K = *spatial_orders.rbegin();
    JetVar tj = jet_lift_batch(tape, t, Vec::Zero(t.size()), K);
    auto xs = lift_spatial(tape, x, K, 0);
    JetVar u = model.eval(tape, tj, xs);
    if (!have_u) out.u = u.c[0];
    double fact = 1.0;
    for (int k = 1; k <= K; ++k) {
      fact *= k;
      if (spatial_orders.count(k))
        out.dx[k] = tape.scale(u.c[static_cast<std::size_t>(k)], fact);
    }
  }
  return out;
}

Mat evaluate_values(Model& model, const Vec& t, const Mat& x) {
  Tape tape;
  model.bind(tape);
  BundleBatch b = evaluate_bundle(tape, model, t, x, false, {});
  return tape.value(b.u);
}

DerivBundle derivative_bundle(Model& model, double t, const Vec& x, bool want_dt,
                              const std::set<int>& spatial_orders) {
  Tape tape;
  model.bind(tape);
  Vec tv(1);
  tv[0] = t;
  Mat xm(1, x.size());
  xm.row(0) = x.transpose();
  BundleBatch b = evaluate_bundle(tape, model, tv, xm, want_dt, spatial_orders);
  DerivBundle d;
  d.u = tape.value(b.u).row(0).transpose();
  if (b.has_dt) d.dt = tape.value(b.dt).row(0).transpose();
  for (const auto& [k, v] : b.dx) d.dx[k] = tape.value(v).row(0).transpose();
  return d;
}

}  // namespace irpinn
