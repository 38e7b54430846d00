#include "irpinn/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#ifdef __GLIBC__
#include <malloc.h>
#endif

namespace irpinn {

const char* kVersion = "irpinn 1.0.0";

namespace {

std::string fmtd(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

long parse_long(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    long r = std::stol(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return r;
  } catch (...) {
    throw std::invalid_argument("key '" + key + "': expected an integer, got '" + v + "'");
  }
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    double r = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return r;
  } catch (...) {
    throw std::invalid_argument("key '" + key + "': expected a number, got '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("key '" + key + "': expected true/false, got '" + v + "'");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> component_names(const std::string& preset) {
  if (preset == "lorenz") return {"x", "y", "z"};
  if (preset == "bbe") return {"u", "v"};
  return {"u"};
}

std::ofstream open_csv(const std::string& dir, const std::string& name) {
  std::ofstream f(dir + "/" + name);
  if (!f) throw std::runtime_error("cannot open " + dir + "/" + name);
  f << "# irpinn-csv-v1\n";
  return f;
}

}  // namespace

ExperimentConfig default_config(const std::string& preset) {
  ExperimentConfig c;
  c.preset = preset;
  if (preset == "simple_ode") {
    c.t_end = 5.0;
    c.subdomains = 1;
    c.n_sub = 40;
    c.quad_m = 2;
    c.quad_kind = "trapezoid";
    c.hidden_layers = 3;
    c.width = 64;
    c.normalize_t = false;  // raw t input, matching the reference protocol
    c.epochs = 80000;
    c.n_test = 1000;
  } else if (preset == "lorenz") {
    c.t_end = 20.0;
    c.subdomains = 40;
    c.n_sub = 64;
    c.quad_m = 4;
    c.quad_kind = "gauss";
    c.hidden_layers = 5;
    c.width = 512;
    c.epochs = 150000;
    c.n_test = 2000;
  } else if (preset == "ks") {
    c.t0 = 0.4;
    c.t_end = 0.9;
    c.subdomains = 5;
    c.n_sub = 8;
    c.quad_m = 4;
    c.quad_kind = "gauss";
    c.hidden_layers = 4;
    c.width = 64;
    c.embed_m = 5;
    c.n_spatial = 64;
    c.n_ic = 128;
    c.lambda_ic = 1e4;
    c.epochs = 50000;
    c.n_test = 51;
  } else if (preset == "bbe") {
    c.t_end = 4.0;
    c.subdomains = 1;
    c.n_sub = 8;
    c.quad_m = 4;
    c.quad_kind = "gauss";
    c.hidden_layers = 4;
    c.width = 64;
    c.n_spatial = 16;
    c.n_ic = 64;
    c.n_bc = 32;
    c.lambda_ic = 10.0;
    c.lambda_bc = 10.0;
    c.epochs = 20000;
    c.n_adaptive = 2;
    c.retrain_epochs = 2000;
    c.n_new = 8 * 4 * 8;
    c.pool_size = 8 * 4 * 100;
    c.bins = 64;
    c.n_test = 100;
  } else {
    throw std::invalid_argument("unknown preset '" + preset +
                                "', allowed: {simple_ode, lorenz, ks, bbe}");
  }
  return c;
}

void apply_override(ExperimentConfig& cfg, const std::string& key,
                    const std::string& value) {
  if (key == "preset") cfg.preset = value;
  else if (key == "variant") cfg.variant = value;
  else if (key == "adaptive") cfg.adaptive = parse_bool(key, value);
  else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(parse_long(key, value));
  else if (key == "out_dir") cfg.out_dir = value;
  else if (key == "t0") cfg.t0 = parse_double(key, value);
  else if (key == "t_end") cfg.t_end = parse_double(key, value);
  else if (key == "subdomains") cfg.subdomains = static_cast<int>(parse_long(key, value));
  else if (key == "n_sub") cfg.n_sub = static_cast<int>(parse_long(key, value));
  else if (key == "quad_m") cfg.quad_m = static_cast<int>(parse_long(key, value));
  else if (key == "quad_kind") cfg.quad_kind = value;
  else if (key == "hidden_layers") cfg.hidden_layers = static_cast<int>(parse_long(key, value));
  else if (key == "width") cfg.width = static_cast<int>(parse_long(key, value));
  else if (key == "embed_m") cfg.embed_m = static_cast<int>(parse_long(key, value));
  else if (key == "normalize_t") cfg.normalize_t = parse_bool(key, value);
  else if (key == "n_spatial") cfg.n_spatial = static_cast<int>(parse_long(key, value));
  else if (key == "n_ic") cfg.n_ic = static_cast<int>(parse_long(key, value));
  else if (key == "n_bc") cfg.n_bc = static_cast<int>(parse_long(key, value));
  else if (key == "epochs") cfg.epochs = static_cast<int>(parse_long(key, value));
  else if (key == "lr0") cfg.lr0 = parse_double(key, value);
  else if (key == "decay_rate") cfg.decay_rate = parse_double(key, value);
  else if (key == "step_size") cfg.step_size = static_cast<int>(parse_long(key, value));
  else if (key == "eval_every") cfg.eval_every = static_cast<int>(parse_long(key, value));
  else if (key == "alpha") cfg.alpha = parse_double(key, value);
  else if (key == "lambda_ic") cfg.lambda_ic = parse_double(key, value);
  else if (key == "lambda_bc") cfg.lambda_bc = parse_double(key, value);
  else if (key == "n_adaptive") cfg.n_adaptive = static_cast<int>(parse_long(key, value));
  else if (key == "n_new") cfg.n_new = static_cast<int>(parse_long(key, value));
  else if (key == "pool_size") cfg.pool_size = static_cast<int>(parse_long(key, value));
  else if (key == "bins") cfg.bins = static_cast<int>(parse_long(key, value));
  else if (key == "n_fit_epochs") cfg.n_fit_epochs = static_cast<int>(parse_long(key, value));
  else if (key == "retrain_epochs") cfg.retrain_epochs = static_cast<int>(parse_long(key, value));
  else if (key == "n_test") cfg.n_test = static_cast<int>(parse_long(key, value));
  else throw std::invalid_argument("unknown config key '" + key + "'");
}

ExperimentConfig parse_config_text(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> entries;
  std::istringstream in(text);
  std::string line;
  std::string preset;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("malformed config line (expected key = value): " + line);
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key == "preset") preset = value;
    entries.emplace_back(std::move(key), std::move(value));
  }
  if (preset.empty()) throw std::invalid_argument("config must name a preset");
  ExperimentConfig cfg = default_config(preset);
  for (const auto& [key, value] : entries)
    if (key != "preset") apply_override(cfg, key, value);
  validate_config(cfg);
  return cfg;
}

ExperimentConfig parse_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument("cannot read config file " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str());
}

std::string serialize_config(const ExperimentConfig& c) {
  std::ostringstream o;
  o << "preset = " << c.preset << "\n";
  o << "variant = " << c.variant << "\n";
  o << "adaptive = " << (c.adaptive ? "true" : "false") << "\n";
  o << "seed = " << c.seed << "\n";
  o << "out_dir = " << c.out_dir << "\n";
  o << "t0 = " << fmtd(c.t0) << "\n";
  o << "t_end = " << fmtd(c.t_end) << "\n";
  o << "subdomains = " << c.subdomains << "\n";
  o << "n_sub = " << c.n_sub << "\n";
  o << "quad_m = " << c.quad_m << "\n";
  o << "quad_kind = " << c.quad_kind << "\n";
  o << "hidden_layers = " << c.hidden_layers << "\n";
  o << "width = " << c.width << "\n";
  o << "embed_m = " << c.embed_m << "\n";
  o << "normalize_t = " << (c.normalize_t ? "true" : "false") << "\n";
  o << "n_spatial = " << c.n_spatial << "\n";
  o << "n_ic = " << c.n_ic << "\n";
  o << "n_bc = " << c.n_bc << "\n";
  o << "epochs = " << c.epochs << "\n";
  o << "lr0 = " << fmtd(c.lr0) << "\n";
  o << "decay_rate = " << fmtd(c.decay_rate) << "\n";
  o << "step_size = " << c.step_size << "\n";
  o << "eval_every = " << c.eval_every << "\n";
  o << "alpha = " << fmtd(c.alpha) << "\n";
  o << "lambda_ic = " << fmtd(c.lambda_ic) << "\n";
  o << "lambda_bc = " << fmtd(c.lambda_bc) << "\n";
  o << "n_adaptive = " << c.n_adaptive << "\n";
  o << "n_new = " << c.n_new << "\n";
  o << "pool_size = " << c.pool_size << "\n";
  o << "bins = " << c.bins << "\n";
  o << "n_fit_epochs = " << c.n_fit_epochs << "\n";
  o << "retrain_epochs = " << c.retrain_epochs << "\n";
  o << "n_test = " << c.n_test << "\n";
  return o.str();
}

void validate_config(const ExperimentConfig& c) {
  default_config(c.preset);       // rejects unknown presets
  variant_from_string(c.variant); // rejects unknown variants
  if (c.quad_kind != "gauss" && c.quad_kind != "trapezoid")
    throw std::invalid_argument("quad_kind must be gauss or trapezoid");
  if (!(c.t_end > c.t0)) throw std::invalid_argument("t_end must exceed t0");
  if (c.subdomains < 1) throw std::invalid_argument("subdomains must be >= 1");
  if (c.n_sub < 1) throw std::invalid_argument("n_sub must be >= 1");
  if (c.quad_m < 1 || (c.quad_kind == "gauss" && c.quad_m > 16))
    throw std::invalid_argument("quad_m must be in [1, 16]");
  if (c.quad_kind == "trapezoid" && c.quad_m < 2)
    throw std::invalid_argument("trapezoid rules need quad_m >= 2");
  if (c.hidden_layers < 1 || c.width < 1)
    throw std::invalid_argument("network must have at least one hidden unit");
  if (c.embed_m < 0) throw std::invalid_argument("embed_m must be >= 0");
  if (c.n_spatial < 1 || c.n_ic < 1 || c.n_bc < 0)
    throw std::invalid_argument("point counts must be positive");
  if (c.epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (!(c.lr0 > 0)) throw std::invalid_argument("lr0 must be positive");
  if (!(c.decay_rate > 0 && c.decay_rate <= 1))
    throw std::invalid_argument("decay_rate must be in (0, 1]");
  if (c.step_size < 1 || c.eval_every < 1)
    throw std::invalid_argument("step_size and eval_every must be >= 1");
  if (c.alpha < 0 || c.lambda_ic < 0 || c.lambda_bc < 0)
    throw std::invalid_argument("loss weights must be nonnegative");
  if (c.adaptive) {
    AdaptiveConfig a;
    a.n_adaptive = c.n_adaptive;
    a.n_fit_epochs = c.n_fit_epochs;
    a.n_new = c.n_new;
    a.candidate_pool_size = c.pool_size;
    a.spatial_bins = c.bins;
    a.retrain_epochs = c.retrain_epochs;
    a.validate();
  }
  if (c.n_test < 2) throw std::invalid_argument("n_test must be >= 2");
}

std::uint64_t config_hash(const ExperimentConfig& cfg) {
  const std::string s = serialize_config(cfg);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

namespace {

struct Harness {
  const ExperimentConfig& cfg;
  Problem problem;
  Variant variant;
  double duration;
  double x_lo = 0.0, x_hi = 1.0;
  std::vector<Mat> spatial_sets;  // residual point set per subdomain

  explicit Harness(const ExperimentConfig& c) : cfg(c) {
    if (c.preset == "simple_ode") problem = make_simple_ode(1.0, c.t_end);
    else if (c.preset == "lorenz") problem = make_lorenz(3.0, 28.0, 8.0 / 3.0, c.t_end);
    else if (c.preset == "ks") problem = make_ks(100.0 / 16.0, 100.0 / 256.0,
                                                 100.0 / 65536.0, c.t0, c.t_end);
    else problem = make_bbe(c.t0, c.t_end);
    variant = variant_from_string(c.variant);
    duration = (c.t_end - c.t0) / c.subdomains;
    if (problem.spatial_dim == 1) {
      x_lo = problem.spatial_domain[0].first;
      x_hi = problem.spatial_domain[0].second;
    }
    std::mt19937_64 rng(c.seed * 0x9E3779B97F4A7C15ull + 17);
    for (int k = 0; k < c.subdomains; ++k) {
      if (problem.spatial_dim == 0) {
        spatial_sets.push_back(Mat(1, 0));
      } else {
        Mat pts(c.n_spatial, 1);
        for (int i = 0; i < c.n_spatial; ++i) {
          const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
          pts(i, 0) = x_lo + u * (x_hi - x_lo);
        }
        spatial_sets.push_back(std::move(pts));
      }
    }
  }

  double sub_start(int k) const { return cfg.t0 + duration * k; }

  std::shared_ptr<Model> build_model(int k, Model* prev) const {
    const int d = problem.spatial_dim;
    const double a = sub_start(k);
    // identity scaling is the [-1,1] -> [-1,1] map
    const InputScaling t_scale = cfg.normalize_t ? InputScaling{a, a + duration}
                                                 : InputScaling{-1.0, 1.0};
    std::optional<PeriodicEmbedding> emb;
    std::vector<InputScaling> x_scale;
    if (d == 1) {
      // the embedding consumes the raw coordinate, but still registers the
      // spatial dimension through its x_scale slot
      x_scale.push_back({x_lo, x_hi});
      if (cfg.embed_m > 0) emb = PeriodicEmbedding{x_hi - x_lo, cfg.embed_m};
    }
    const int in_dim = 1 + (d == 1 ? (cfg.embed_m > 0 ? 2 * cfg.embed_m + 1 : 1) : 0);

    std::optional<HardIC> hard;
    if (problem.bc == BcKind::HardIcOnly) {
      Mat u0 = (k == 0 || prev == nullptr)
                   ? problem.ic_g(Mat(1, 0))
                   : evaluate_values(*prev, Vec::Constant(1, a), Mat(1, 0));
      hard = HardIC{u0.row(0).transpose(), a};
    }

    const std::uint64_t base = cfg.seed * 1000003ull + static_cast<std::uint64_t>(k) * 31ull;
    auto one_net = [&](int out_dim, std::uint64_t seed) {
      std::vector<int> sizes;
      sizes.push_back(in_dim);
      for (int l = 0; l < cfg.hidden_layers; ++l) sizes.push_back(cfg.width);
      sizes.push_back(out_dim);
      return std::make_shared<NetworkModel>(init_glorot(sizes, seed), t_scale, x_scale,
                                            emb, hard);
    };
    if (cfg.preset == "bbe") {
      // one network per field
      std::vector<std::shared_ptr<Model>> parts;
      for (int comp = 0; comp < problem.components; ++comp)
        parts.push_back(one_net(1, base + static_cast<std::uint64_t>(comp)));
      return std::make_shared<CompositeModel>(std::move(parts));
    }
    return one_net(problem.components, base);
  }

  Problem problem_for(int k, Model* prev) const {
    Problem p = problem;
    if (problem.spatial_dim >= 1 && k > 0 && prev != nullptr) {
      const double a = sub_start(k);
      p.ic_g = [prev, a](const Mat& x) {
        return evaluate_values(*prev, Vec::Constant(x.rows(), a), x);
      };
    }
    return p;
  }

  std::shared_ptr<LossAssembler> build_assembler(int k, const Problem& pk) const {
    const double a = sub_start(k);
    TimeGrid grid = partition(a, a + duration, cfg.n_sub);
    QuadKind kind = cfg.quad_kind == "gauss" ? QuadKind::GaussLegendre : QuadKind::Trapezoid;
    std::vector<QuadratureRule> rules = subinterval_rules(grid, kind, cfg.quad_m);

    Mat s_ic;
    Vec s_bc_t;
    Mat s_bc_x;
    if (pk.bc != BcKind::HardIcOnly) {
      s_ic.resize(cfg.n_ic, 1);
      for (int i = 0; i < cfg.n_ic; ++i)
        s_ic(i, 0) = x_lo + (x_hi - x_lo) * (cfg.n_ic == 1 ? 0.5 : static_cast<double>(i) / (cfg.n_ic - 1));
    }
    if (pk.bc == BcKind::Dirichlet && cfg.n_bc > 0) {
      s_bc_t.resize(2 * cfg.n_bc);
      s_bc_x.resize(2 * cfg.n_bc, 1);
      for (int i = 0; i < cfg.n_bc; ++i) {
        const double t = a + duration * (cfg.n_bc == 1 ? 0.5 : static_cast<double>(i) / (cfg.n_bc - 1));
        s_bc_t[2 * i] = t;
        s_bc_t[2 * i + 1] = t;
        s_bc_x(2 * i, 0) = x_lo;
        s_bc_x(2 * i + 1, 0) = x_hi;
      }
    }
    CollocationSets sets = make_collocation(grid, rules, spatial_sets[k], s_ic, s_bc_t, s_bc_x);
    LossWeights weights{cfg.alpha, cfg.lambda_ic, cfg.lambda_bc};
    return std::make_shared<LossAssembler>(pk, grid, rules, sets, variant, weights);
  }

  int subdomain_of(double t) const {
    int k = static_cast<int>(std::floor((t - cfg.t0) / duration));
    return std::clamp(k, 0, cfg.subdomains - 1);
  }

  // Evaluates the marched model over an arbitrary batch, routing each row to
  // the subdomain owning its time.
  Mat predict(const MarchResult& march, const Vec& t, const Mat& x) const {
    Mat out(t.size(), problem.components);
    for (int k = 0; k < cfg.subdomains; ++k) {
      std::vector<Eigen::Index> rows;
      for (Eigen::Index i = 0; i < t.size(); ++i)
        if (subdomain_of(t[i]) == k) rows.push_back(i);
      if (rows.empty()) continue;
      Vec tk(rows.size());
      Mat xk(rows.size(), x.cols());
      for (std::size_t r = 0; r < rows.size(); ++r) {
        tk[static_cast<Eigen::Index>(r)] = t[rows[r]];
        xk.row(static_cast<Eigen::Index>(r)) = x.row(rows[r]);
      }
      Mat pk = evaluate_values(*march.subdomains[static_cast<std::size_t>(k)].model, tk, xk);
      for (std::size_t r = 0; r < rows.size(); ++r)
        out.row(rows[r]) = pk.row(static_cast<Eigen::Index>(r));
    }
    return out;
  }
};

// Reference values on the test batch; one row per (t, x) row.
Mat reference_values(const Harness& h, const Vec& t, const Mat& x) {
  const std::string& preset = h.cfg.preset;
  if (preset == "simple_ode" || preset == "bbe") return h.problem.exact(t, x);
  if (preset == "lorenz") {
    const double dt = 1e-4;
    OdeSystem sys = lorenz_system(3.0, 28.0, 8.0 / 3.0, h.cfg.t_end);
    static FieldSnapshot traj;  // cache: the RK4 run dominates otherwise
    static double cached_T = -1.0;
    if (cached_T != h.cfg.t_end) {
      traj = rk4_solve(sys, dt);
      cached_T = h.cfg.t_end;
    }
    Mat out(t.size(), 3);
    for (Eigen::Index i = 0; i < t.size(); ++i) {
      const auto idx = static_cast<Eigen::Index>(std::lround(t[i] / dt));
      out.row(i) = traj.values.row(std::min(idx, traj.values.rows() - 1));
    }
    return out;
  }
  // ks: march an ETDRK4 state from 0 forward to each requested time (the
  // batch is assumed sorted by time; rows at equal times share a state).
  const double dt = 2.5e-5;
  const int n = 128;
  Vec state = ks_initial_state(n);
  double t_now = 0.0;
  Mat out(t.size(), 1);
  Vec grid = ks_grid(n);
  Eigen::Index i = 0;
  while (i < t.size()) {
    const double target = t[i];
    const int steps = static_cast<int>(std::lround((target - t_now) / dt));
    if (steps > 0) {
      FieldSnapshot seg = etdrk4_ks(state, 100.0 / 16.0, 100.0 / 256.0, 100.0 / 65536.0,
                                    t_now, dt, steps, steps);
      state = seg.values.row(seg.values.rows() - 1).transpose();
      t_now += dt * steps;
    }
    // interpolate the periodic state linearly to the requested x
    while (i < t.size() && std::abs(t[i] - target) < 1e-12) {
      const double xi = x(i, 0);
      const double h_grid = 2.0 * 3.14159265358979323846 / n;
      const double pos = xi / h_grid;
      const int j0 = static_cast<int>(std::floor(pos));
      const double frac = pos - j0;
      const int ja = ((j0 % n) + n) % n;
      const int jb = (ja + 1) % n;
      out(i, 0) = (1.0 - frac) * state[ja] + frac * state[jb];
      ++i;
    }
  }
  return out;
}

void build_test_batch(const Harness& h, Vec& t, Mat& x) {
  const ExperimentConfig& c = h.cfg;
  if (h.problem.spatial_dim == 0) {
    t.resize(c.n_test);
    for (int i = 0; i < c.n_test; ++i)
      t[i] = c.t0 + (c.t_end - c.t0) * static_cast<double>(i) / (c.n_test - 1);
    x.resize(c.n_test, 0);
    return;
  }
  const int nx = c.preset == "ks" ? 128 : 256;
  Vec xs(nx);
  if (c.preset == "ks") {
    xs = ks_grid(nx);
  } else {
    for (int j = 0; j < nx; ++j)
      xs[j] = h.x_lo + (h.x_hi - h.x_lo) * static_cast<double>(j) / (nx - 1);
  }
  t.resize(static_cast<Eigen::Index>(c.n_test) * nx);
  x.resize(t.size(), 1);
  Eigen::Index row = 0;
  for (int i = 0; i < c.n_test; ++i) {
    const double ti = c.t0 + (c.t_end - c.t0) * static_cast<double>(i) / (c.n_test - 1);
    for (int j = 0; j < nx; ++j, ++row) {
      t[row] = ti;
      x(row, 0) = xs[j];
    }
  }
}

void write_history(const std::string& dir, const std::vector<TrainHistory>& base,
                   const std::vector<std::vector<TrainHistory>>& adaptive) {
  std::ofstream f = open_csv(dir, "history.csv");
  f << "subdomain,phase,epoch,loss_r,loss_int,loss_ic,loss_bc,total,lr\n";
  auto dump = [&f](int k, int phase, const TrainHistory& h) {
    for (std::size_t i = 0; i < h.epochs.size(); ++i) {
      const LossParts& p = h.losses[i];
      f << k << "," << phase << "," << h.epochs[i] << "," << fmtd(p.loss_r) << ","
        << fmtd(p.loss_int) << "," << fmtd(p.loss_ic) << "," << fmtd(p.loss_bc) << ","
        << fmtd(p.total) << "," << fmtd(h.lrs[i]) << "\n";
    }
  };
  for (std::size_t k = 0; k < base.size(); ++k) {
    dump(static_cast<int>(k), 0, base[k]);
    if (k < adaptive.size())
      for (std::size_t a = 0; a < adaptive[k].size(); ++a)
        dump(static_cast<int>(k), static_cast<int>(a) + 1, adaptive[k][a]);
  }
}

void write_residuals(const std::string& dir, const Harness& h, const MarchResult& march) {
  std::ofstream f = open_csv(dir, "residuals.csv");
  const int C = h.problem.components;
  if (h.problem.spatial_dim == 0) {
    f << "t";
    for (int c = 0; c < C; ++c) f << ",r" << c;
    f << "\n";
    const int n = 1000;
    for (int k = 0; k < h.cfg.subdomains; ++k) {
      const int per = std::max(2, n / h.cfg.subdomains);
      Vec t(per);
      for (int i = 0; i < per; ++i)
        t[i] = h.sub_start(k) + h.duration * static_cast<double>(i) / (per - 1);
      Mat x(per, 0);
      Mat r = residual_at(h.problem, *march.subdomains[static_cast<std::size_t>(k)].model, t, x);
      for (int i = 0; i < per; ++i) {
        f << fmtd(t[i]);
        for (int c = 0; c < C; ++c) f << "," << fmtd(r(i, c));
        f << "\n";
      }
    }
    return;
  }
  f << "t,x";
  for (int c = 0; c < C; ++c) f << ",r" << c;
  f << "\n";
  const int nt = 5, nx = 64;
  for (int k = 0; k < h.cfg.subdomains; ++k) {
    Vec t(nt * nx);
    Mat x(nt * nx, 1);
    Eigen::Index row = 0;
    for (int i = 0; i < nt; ++i) {
      const double ti = h.sub_start(k) + h.duration * static_cast<double>(i) / (nt - 1);
      for (int j = 0; j < nx; ++j, ++row) {
        t[row] = ti;
        x(row, 0) = h.x_lo + (h.x_hi - h.x_lo) * static_cast<double>(j) / (nx - 1);
      }
    }
    Mat r = residual_at(h.problem, *march.subdomains[static_cast<std::size_t>(k)].model, t, x);
    for (Eigen::Index i = 0; i < t.size(); ++i) {
      f << fmtd(t[i]) << "," << fmtd(x(i, 0));
      for (int c = 0; c < C; ++c) f << "," << fmtd(r(i, c));
      f << "\n";
    }
  }
}

void write_solution(const std::string& dir, const Harness& h, const Vec& t, const Mat& x,
                    const Mat& pred, const Mat& ref) {
  std::ofstream f = open_csv(dir, "solution.csv");
  const auto names = component_names(h.cfg.preset);
  f << "t";
  if (x.cols() > 0) f << ",x";
  for (const auto& n : names) f << ",pred_" << n;
  for (const auto& n : names) f << ",ref_" << n;
  f << "\n";
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    f << fmtd(t[i]);
    if (x.cols() > 0) f << "," << fmtd(x(i, 0));
    for (Eigen::Index c = 0; c < pred.cols(); ++c) f << "," << fmtd(pred(i, c));
    for (Eigen::Index c = 0; c < ref.cols(); ++c) f << "," << fmtd(ref(i, c));
    f << "\n";
  }
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
#ifdef __GLIBC__
  // Chunked gradient accumulation allocates and frees tape matrices well above
  // glibc's default mmap threshold; without this the epoch loop spends ~half
  // its time in mmap/munmap page faults. Keep large blocks on the heap instead.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  validate_config(cfg);
  std::filesystem::create_directories(cfg.out_dir);
  Harness h(cfg);

  TrainConfig tcfg;
  tcfg.epochs = cfg.epochs;
  tcfg.lr0 = cfg.lr0;
  tcfg.decay_rate = cfg.decay_rate;
  tcfg.step_size = cfg.step_size;
  tcfg.seed = cfg.seed;
  tcfg.eval_every = cfg.eval_every;
  tcfg.weights = LossWeights{cfg.alpha, cfg.lambda_ic, cfg.lambda_bc};
  tcfg.variant = h.variant;

  SubdomainFactory factory = [&h](int k, Model* prev) {
    Subdomain sub;
    sub.model = h.build_model(k, prev);
    sub.assembler = h.build_assembler(k, h.problem_for(k, prev));
    return sub;
  };

  ExperimentResult result;
  result.march = time_march(cfg.subdomains, factory, tcfg);

  std::vector<std::vector<TrainHistory>> adaptive_hist(cfg.subdomains);
  if (cfg.adaptive) {
    AdaptiveConfig acfg;
    acfg.n_adaptive = cfg.n_adaptive;
    acfg.n_fit_epochs = cfg.n_fit_epochs;
    acfg.n_new = cfg.n_new;
    acfg.candidate_pool_size = cfg.pool_size;
    acfg.spatial_bins = cfg.bins;
    acfg.seed = cfg.seed;
    acfg.retrain_epochs = cfg.retrain_epochs;
    for (int k = 0; k < cfg.subdomains; ++k) {
      auto& sub = result.march.subdomains[static_cast<std::size_t>(k)];
      AdaptiveResult ar =
          adaptive_loop(sub.assembler->problem(), *sub.model, *sub.assembler, acfg, tcfg);
      sub.assembler = ar.assembler;
      adaptive_hist[static_cast<std::size_t>(k)] = std::move(ar.histories);
      for (auto& pts : ar.new_points) result.new_points.push_back(std::move(pts));
    }
  }

  // metrics on the test batch
  Vec t_test;
  Mat x_test;
  build_test_batch(h, t_test, x_test);
  Mat pred = h.predict(result.march, t_test, x_test);
  Mat ref = reference_values(h, t_test, x_test);
  result.rel_l2 = relative_l2_columns(pred, ref);

  const auto names = component_names(cfg.preset);
  {
    std::ofstream f = open_csv(cfg.out_dir, "metrics.csv");
    f << "component,rel_l2\n";
    for (Eigen::Index c = 0; c < result.rel_l2.size(); ++c)
      f << names[static_cast<std::size_t>(c)] << "," << fmtd(result.rel_l2(c, 0)) << "\n";
  }
  write_history(cfg.out_dir, result.march.histories, adaptive_hist);
  write_residuals(cfg.out_dir, h, result.march);
  write_solution(cfg.out_dir, h, t_test, x_test, pred, ref);
  if (cfg.adaptive) {
    SamplePoints all;
    Eigen::Index total = 0;
    for (const auto& p : result.new_points) total += p.count();
    all.t.resize(total);
    all.x.resize(total, h.problem.spatial_dim);
    Eigen::Index at = 0;
    for (const auto& p : result.new_points) {
      all.t.segment(at, p.count()) = p.t;
      all.x.middleRows(at, p.count()) = p.x;
      at += p.count();
    }
    write_points_csv(all, cfg.out_dir + "/new_points.csv");
  }
  {
    std::ofstream f(cfg.out_dir + "/manifest.txt");
    f << "version = " << kVersion << "\n";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(config_hash(cfg)));
    f << "config_hash = " << buf << "\n---\n" << serialize_config(cfg);
  }
  return result;
}

void write_reference(const std::string& preset, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  const std::string path = out_dir + "/reference.csv";
  if (preset == "simple_ode" || preset == "bbe") {
    ExperimentConfig cfg = default_config(preset);
    Harness h(cfg);
    Vec t;
    Mat x;
    build_test_batch(h, t, x);
    Mat ref = reference_values(h, t, x);
    FieldSnapshot snap;
    snap.times = t;
    snap.values = ref;
    if (x.cols() > 0) {
      // flatten (t, x, value) rows instead of a field table
      std::ofstream f = open_csv(out_dir, "reference.csv");
      f << "t,x";
      for (Eigen::Index c = 0; c < ref.cols(); ++c) f << ",u" << c;
      f << "\n";
      for (Eigen::Index i = 0; i < t.size(); ++i) {
        f << fmtd(t[i]) << "," << fmtd(x(i, 0));
        for (Eigen::Index c = 0; c < ref.cols(); ++c) f << "," << fmtd(ref(i, c));
        f << "\n";
      }
      return;
    }
    write_snapshot_csv(snap, path);
    return;
  }
  if (preset == "lorenz") {
    FieldSnapshot traj = rk4_solve(lorenz_system(), 1e-4);
    FieldSnapshot thin;
    const Eigen::Index stride = 100;
    const Eigen::Index rows = (traj.times.size() + stride - 1) / stride;
    thin.times.resize(rows);
    thin.values.resize(rows, traj.values.cols());
    for (Eigen::Index i = 0, r = 0; i < traj.times.size(); i += stride, ++r) {
      thin.times[r] = traj.times[i];
      thin.values.row(r) = traj.values.row(i);
    }
    write_snapshot_csv(thin, path);
    return;
  }
  if (preset == "ks") {
    FieldSnapshot snap = etdrk4_ks(ks_initial_state(128), 100.0 / 16.0, 100.0 / 256.0,
                                   100.0 / 65536.0, 0.0, 2.5e-5, 36000, 400);
    write_snapshot_csv(snap, path);
    return;
  }
  throw std::invalid_argument("unknown preset '" + preset + "'");
}

}  // namespace irpinn
