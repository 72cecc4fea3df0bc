#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "vrprox/commands.hpp"

namespace {

// CLI values land in optionals so that file-config keys are only overridden
// by flags that were actually given.
struct CliOverrides {
  std::optional<std::string> config, out_dir, model, data, loss, reg, outer;
  std::vector<std::string> solvers;
  std::optional<long long> n, p, r, q, num_groups, s_g, m;
  std::optional<double> b, u, gamma_w, sigma_scale, zeta, mcp_b, lambda, rho, beta, rda_gamma, tau,
      c1;
  std::optional<long long> seed;
  std::optional<int> epochs, eval_every, workers, grid_passes;
  std::optional<std::string> normalize, timing, grid, sgd_constant, poly_expand;
};

void add_common_flags(CLI::App* cmd, CliOverrides& o) {
  cmd->add_option("--config", o.config, "config file (key=value text or JSON)");
  cmd->add_option("--out", o.out_dir, "output directory");
  cmd->add_option("--seed", o.seed, "RNG seed");
  cmd->add_option("--solver", o.solvers, "solver name (repeatable): svrg cg sgd sag rda");
  cmd->add_option("--m", o.m, "SVRG inner-loop length (0 = 2n)");
  cmd->add_option("--beta", o.beta, "step size (0 with --grid on = tuned)");
  cmd->add_option("--lambda", o.lambda, "penalty weight (negative = corollary bound)");
  cmd->add_option("--rho", o.rho, "constraint radius (negative = 2x truth norm)");
  cmd->add_option("--epochs", o.epochs, "pass budget");
  cmd->add_option("--normalize", o.normalize, "column/group normalization: on|off");
  cmd->add_option("--poly-expand", o.poly_expand, "dataset mode: cubic group expansion: on|off");
  cmd->add_option("--workers", o.workers, "parallel worker cap");
  cmd->add_option("--model", o.model, "lasso|group|corrected|scad|mcp|dataset");
  cmd->add_option("--data", o.data, "libsvm file for model=dataset");
  cmd->add_option("--loss", o.loss, "dataset loss: squared|logistic");
  cmd->add_option("--reg", o.reg, "dataset regularizer: l1|group|scad|mcp");
  cmd->add_option("--n", o.n, "sample count");
  cmd->add_option("--p", o.p, "feature dimension");
  cmd->add_option("--r", o.r, "planted sparsity");
  cmd->add_option("--q", o.q, "group size");
  cmd->add_option("--num-groups", o.num_groups, "number of groups");
  cmd->add_option("--s-g", o.s_g, "number of active groups");
  cmd->add_option("--b", o.b, "off-diagonal covariance");
  cmd->add_option("--u", o.u, "noise standard deviation");
  cmd->add_option("--gamma-w", o.gamma_w, "covariate-noise scale (corrected)");
  cmd->add_option("--sigma-scale", o.sigma_scale, "design covariance diagonal");
  cmd->add_option("--zeta", o.zeta, "SCAD shape");
  cmd->add_option("--mcp-b", o.mcp_b, "MCP shape");
  cmd->add_option("--eval-every", o.eval_every, "trace granularity");
  cmd->add_option("--outer", o.outer, "SVRG outer iterate: default|average|random|last");
  cmd->add_option("--grid", o.grid, "learning-rate grid search: on|off");
  cmd->add_option("--grid-passes", o.grid_passes, "pass budget per grid probe");
  cmd->add_option("--rda-gamma", o.rda_gamma, "RDA proximal strength");
  cmd->add_option("--sgd-constant", o.sgd_constant, "constant-step SGD: on|off");
  cmd->add_option("--tau", o.tau, "RSC tolerance constant");
  cmd->add_option("--c1", o.c1, "universal constant c1");
}

vrprox::ExperimentConfig build_config(const CliOverrides& o) {
  vrprox::ExperimentConfig cfg;
  if (o.config) vrprox::load_config_file(cfg, *o.config);
  auto set = [&cfg](const std::string& key, const auto& opt) {
    if (opt) vrprox::apply_config_key(cfg, key, std::to_string(*opt));
  };
  auto set_str = [&cfg](const std::string& key, const std::optional<std::string>& opt) {
    if (opt) vrprox::apply_config_key(cfg, key, *opt);
  };
  auto set_real = [&cfg](const std::string& key, const std::optional<double>& opt) {
    if (opt) vrprox::apply_config_key(cfg, key, vrprox::format_g17(*opt));
  };
  set_str("model", o.model);
  set_str("data", o.data);
  set_str("loss", o.loss);
  set_str("reg", o.reg);
  set_str("out", o.out_dir);
  set_str("outer", o.outer);
  set_str("normalize", o.normalize);
  set_str("poly_expand", o.poly_expand);
  set_str("timing", o.timing);
  set_str("grid", o.grid);
  set_str("sgd_constant", o.sgd_constant);
  if (!o.solvers.empty()) vrprox::apply_config_key(cfg, "solver", vrprox::join_list(o.solvers));
  set("n", o.n);
  set("p", o.p);
  set("r", o.r);
  set("q", o.q);
  set("num_groups", o.num_groups);
  set("s_g", o.s_g);
  set("m", o.m);
  set("seed", o.seed);
  set("epochs", o.epochs);
  set("eval_every", o.eval_every);
  set("workers", o.workers);
  set("grid_passes", o.grid_passes);
  set_real("b", o.b);
  set_real("u", o.u);
  set_real("gamma_w", o.gamma_w);
  set_real("sigma_scale", o.sigma_scale);
  set_real("zeta", o.zeta);
  set_real("mcp_b", o.mcp_b);
  set_real("lambda", o.lambda);
  set_real("rho", o.rho);
  set_real("beta", o.beta);
  set_real("rda_gamma", o.rda_gamma);
  set_real("tau", o.tau);
  set_real("c1", o.c1);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vrprox: variance-reduced proximal solvers for high-dimensional M-estimators"};
  app.require_subcommand(1);

  CliOverrides gen_o, run_o, grid_o, diag_o, phase_o;
  std::string gen_out_path;
  std::string phase_r_list;

  CLI::App* gen = app.add_subcommand("gen", "generate a synthetic dataset + truth sidecar");
  add_common_flags(gen, gen_o);
  gen->add_option("path", gen_out_path, "output dataset path (libsvm text)")->required();

  CLI::App* run = app.add_subcommand("run", "run the configured solvers and write traces");
  add_common_flags(run, run_o);

  CLI::App* grid = app.add_subcommand("grid", "learning-rate grid sweep (svrg/cg/sag)");
  add_common_flags(grid, grid_o);

  CLI::App* diagnose = app.add_subcommand("diagnose", "theory constants and lemma-level checks");
  add_common_flags(diagnose, diag_o);

  CLI::App* phase = app.add_subcommand("phase", "sparsity sweep with fitted decay factors");
  add_common_flags(phase, phase_o);
  phase->add_option("--r-list", phase_r_list, "comma-separated sparsity levels")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return vrprox::cmd_gen(build_config(gen_o), gen_out_path);
    if (run->parsed()) return vrprox::cmd_run(build_config(run_o));
    if (grid->parsed()) return vrprox::cmd_grid(build_config(grid_o));
    if (diagnose->parsed()) return vrprox::cmd_diagnose(build_config(diag_o));
    if (phase->parsed()) {
      std::vector<vrprox::Index> rs;
      std::istringstream ss(phase_r_list);
      std::string item;
      while (std::getline(ss, item, ',')) if (!item.empty()) rs.push_back(std::stoll(item));
      return vrprox::cmd_phase(build_config(phase_o), rs);
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
