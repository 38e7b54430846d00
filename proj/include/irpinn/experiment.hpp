#pragma once

#include "irpinn/problems.hpp"
#include "irpinn/sampler.hpp"

#include <string>

namespace irpinn {

// Flat experiment description. Presets fill every field with the reference
// protocol for that benchmark; individual keys can then be overridden.
struct ExperimentConfig {
  std::string preset = "simple_ode";
  std::string variant = "pinn";  // pinn | ir1 | ir2
  bool adaptive = false;
  std::uint64_t seed = 0;
  std::string out_dir = ".";

  double t0 = 0.0;
  double t_end = 1.0;
  int subdomains = 1;  // time-marching count

  int n_sub = 1;    // temporal subintervals per subdomain (N)
  int quad_m = 4;   // nodes per subinterval (M)
  std::string quad_kind = "gauss";  // gauss | trapezoid

  int hidden_layers = 3;
  int width = 64;
  int embed_m = 0;  // periodic embedding frequencies; 0 disables
  bool normalize_t = true;  // rescale t to [-1,1] per subdomain

  int n_spatial = 1;  // spatial points per temporal node
  int n_ic = 1;
  int n_bc = 0;  // temporal boundary samples (per boundary face)

  int epochs = 1000;
  double lr0 = 1e-3;
  double decay_rate = 0.9;
  int step_size = 1000;
  int eval_every = 1000;

  double alpha = 1.0;
  double lambda_ic = 0.0;
  double lambda_bc = 0.0;

  int n_adaptive = 2;
  int n_new = 256;
  int pool_size = 3200;
  int bins = 64;
  int n_fit_epochs = 1;
  int retrain_epochs = -1;  // -1: full restart per refinement

  int n_test = 1000;

  bool operator==(const ExperimentConfig&) const = default;
};

ExperimentConfig default_config(const std::string& preset);

// Applies one `key = value` override; throws naming the key when unknown and
// describing the expected range when the value is invalid.
void apply_override(ExperimentConfig& cfg, const std::string& key,
                    const std::string& value);

// Flat key = value file; '#' starts a comment. The preset key (processed
// first) seeds the defaults, remaining keys override.
ExperimentConfig parse_config(const std::string& path);
ExperimentConfig parse_config_text(const std::string& text);

std::string serialize_config(const ExperimentConfig& cfg);
void validate_config(const ExperimentConfig& cfg);

std::uint64_t config_hash(const ExperimentConfig& cfg);

struct ExperimentResult {
  Mat rel_l2;          // components x 1
  MarchResult march;   // trained models per subdomain
  std::vector<SamplePoints> new_points;
};

// Runs the configured experiment end to end and writes history.csv,
// metrics.csv, residuals.csv, solution.csv, new_points.csv (adaptive runs),
// and manifest.txt into cfg.out_dir. Output bytes are a pure function of the
// config and seed.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

// Emits the reference solution for a preset (closed form or numerical).
void write_reference(const std::string& preset, const std::string& out_dir);

extern const char* kVersion;

}  // namespace irpinn
