#include "irpinn/experiment.hpp"

#include <CLI11.hpp>
#include <Eigen/Core>

#include <cstdlib>
#include <fstream>
#include <iostream>

namespace {

void apply_thread_env() {
  if (const char* env = std::getenv("IRPINN_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) Eigen::setNbThreads(n);
  }
}

int cmd_run(const std::string& preset, const std::string& variant, bool adaptive,
            const std::vector<std::string>& sets, const std::string& out,
            std::uint64_t seed) {
  irpinn::ExperimentConfig cfg = irpinn::default_config(preset);
  cfg.variant = variant;
  cfg.adaptive = adaptive;
  cfg.out_dir = out;
  cfg.seed = seed;
  for (const std::string& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
    irpinn::apply_override(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  irpinn::validate_config(cfg);
  try {
    irpinn::ExperimentResult res = irpinn::run_experiment(cfg);
    std::cout << "relative L2:";
    for (Eigen::Index c = 0; c < res.rel_l2.size(); ++c)
      std::cout << " " << res.rel_l2(c, 0);
    std::cout << "\n";
    return 0;
  } catch (const std::exception& err) {
    std::filesystem::create_directories(cfg.out_dir);
    std::ofstream diag(cfg.out_dir + "/error.txt");
    diag << err.what() << "\n";
    std::cerr << "run failed: " << err.what() << "\n";
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  apply_thread_env();
  CLI::App app{"IR-PINN training harness"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "train a preset and emit CSV artifacts");
  std::string preset, variant = "pinn", out = ".";
  bool adaptive = false;
  std::vector<std::string> sets;
  std::uint64_t seed = 0;
  run->add_option("--preset", preset, "simple_ode | lorenz | ks | bbe")->required();
  run->add_option("--variant", variant, "pinn | ir1 | ir2");
  run->add_flag("--adaptive", adaptive, "enable adaptive sampling");
  run->add_option("--set", sets, "override config key=value (repeatable)");
  run->add_option("--out", out, "output directory")->required();
  run->add_option("--seed", seed, "random seed");

  auto* validate = app.add_subcommand("validate", "check a config file");
  std::string config_path;
  validate->add_option("--config", config_path, "config file path")->required();

  auto* reference = app.add_subcommand("reference", "emit a reference solution");
  std::string ref_preset, ref_out = ".";
  reference->add_option("--preset", ref_preset, "preset name")->required();
  reference->add_option("--out", ref_out, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(preset, variant, adaptive, sets, out, seed);
    if (validate->parsed()) {
      irpinn::ExperimentConfig cfg = irpinn::parse_config(config_path);
      std::cout << "ok: " << irpinn::serialize_config(cfg);
      return 0;
    }
    if (reference->parsed()) {
      irpinn::write_reference(ref_preset, ref_out);
      return 0;
    }
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return 0;
}
