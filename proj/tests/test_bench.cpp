#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "vrprox/commands.hpp"

using namespace vrprox;

namespace {

std::string temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::create_directories(dir);
  return dir.string();
}

ExperimentConfig desk_config(const std::string& out) {
  ExperimentConfig cfg;
  cfg.model = "lasso";
  cfg.n = 200;
  cfg.p = 400;
  cfg.r = 5;
  cfg.seed = 7;
  cfg.beta = 2.0 / 4096.0;
  cfg.epochs = 40;
  cfg.solvers = {"svrg"};
  cfg.timing = false;
  cfg.out_dir = out;
  return cfg;
}

}  // namespace

TEST_CASE("learning rate grid is exactly {2/2^k}") {
  const auto grid = learning_rate_grid();
  REQUIRE(grid.size() == 13);
  for (int k = 0; k <= 12; ++k) CHECK(grid[static_cast<std::size_t>(k)] == 2.0 / std::pow(2.0, k));
}

TEST_CASE("config hash: deterministic, sensitive, file/CLI equivalent") {
  ExperimentConfig a = desk_config("/tmp");
  ExperimentConfig b = desk_config("/tmp");
  CHECK(a.hash_hex() == b.hash_hex());
  b.seed = 8;
  CHECK(a.hash_hex() != b.hash_hex());

  const std::string path = (std::filesystem::temp_directory_path() / "vrprox_cfg.txt").string();
  {
    std::ofstream out(path);
    out << "# desk instance\n";
    out << "model=lasso\n n=200\n p=400\n r=5\n seed=7\n";
    out << "beta=" << format_g17(2.0 / 4096.0) << "\n";
    out << "epochs=40\nsolver=svrg\ntiming=off\n";
  }
  ExperimentConfig c;
  load_config_file(c, path);
  c.out_dir = "/tmp";
  CHECK(c.hash_hex() == a.hash_hex());
  std::remove(path.c_str());

  ExperimentConfig d;
  CHECK_THROWS_AS(apply_config_key(d, "nonsense", "1"), std::invalid_argument);
}

TEST_CASE("json config files parse with identical keys") {
  const std::string path = (std::filesystem::temp_directory_path() / "vrprox_cfg.json").string();
  {
    std::ofstream out(path);
    out << R"({"model":"lasso","n":200,"p":400,"r":5,"seed":7,"timing":false,"solver":"svrg,sag"})";
  }
  ExperimentConfig cfg;
  load_config_file(cfg, path);
  CHECK(cfg.model == "lasso");
  CHECK(cfg.n == 200);
  CHECK_FALSE(cfg.timing);
  REQUIRE(cfg.solvers.size() == 2);
  CHECK(cfg.solvers[1] == "sag");
  std::remove(path.c_str());
}

TEST_CASE("cmd_gen writes deterministic files and validates the spec") {
  const std::string dir = temp_dir("vrprox_gen_test");
  ExperimentConfig cfg = desk_config(dir);
  cfg.n = 30;
  cfg.p = 20;
  cfg.r = 3;
  const std::string path = dir + "/data.libsvm";
  REQUIRE(cmd_gen(cfg, path) == 0);
  REQUIRE(std::filesystem::exists(path));
  REQUIRE(std::filesystem::exists(path + ".truth.json"));
  const std::string bytes1 = read_text_file(path);
  const std::string side1 = read_text_file(path + ".truth.json");
  REQUIRE(cmd_gen(cfg, path) == 0);
  CHECK(read_text_file(path) == bytes1);
  CHECK(read_text_file(path + ".truth.json") == side1);

  SUBCASE("invalid group geometry exits 2 naming the constraint") {
    ExperimentConfig bad = cfg;
    bad.model = "group";
    bad.q = 3;
    bad.num_groups = 5;  // 15 != 20
    bad.s_g = 1;
    CHECK(cmd_gen(bad, dir + "/bad.libsvm") == 2);
  }
  SUBCASE("corrected sidecar records the hidden-design checksum") {
    ExperimentConfig corr = cfg;
    corr.model = "corrected";
    corr.gamma_w = 0.1;
    const std::string cpath = dir + "/corr.libsvm";
    REQUIRE(cmd_gen(corr, cpath) == 0);
    const std::string side = read_text_file(cpath + ".truth.json");
    CHECK(side.find("hidden_x_fnv1a64") != std::string::npos);
  }
}

TEST_CASE("cmd_run produces traces, a manifest, and byte-identical reruns") {
  const std::string dir = temp_dir("vrprox_run_test");
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    std::filesystem::remove_all(entry.path());
  ExperimentConfig cfg = desk_config(dir);
  cfg.epochs = 30;

  RunArtifacts artifacts;
  REQUIRE(cmd_run(cfg, &artifacts) == 0);
  REQUIRE(artifacts.outcomes.size() == 1);
  const auto& svrg = artifacts.outcomes[0];
  REQUIRE(std::filesystem::exists(svrg.trace_path));
  REQUIRE(std::filesystem::exists(artifacts.manifest_path));

  // objective strictly decreases after the first epoch on the desk instance
  const RunTrace trace = read_trace_csv(svrg.trace_path);
  REQUIRE(trace.records.size() >= 3);
  for (std::size_t k = 2; k < trace.records.size(); ++k)
    CHECK(trace.records[k].objective < trace.records[k - 1].objective + 1e-14);

  // gap never dips below -1e-9
  for (const auto& rec : trace.records) {
    REQUIRE(rec.gap.has_value());
    CHECK(*rec.gap >= -1e-9);
  }

  const std::string trace_bytes = read_text_file(svrg.trace_path);
  const std::string manifest_bytes = read_text_file(artifacts.manifest_path);
  REQUIRE(cmd_run(cfg) == 0);
  CHECK(read_text_file(svrg.trace_path) == trace_bytes);
  CHECK(read_text_file(artifacts.manifest_path) == manifest_bytes);
}

TEST_CASE("cmd_run with the full solver lineup writes one trace per solver") {
  const std::string dir = temp_dir("vrprox_lineup_test");
  ExperimentConfig cfg = desk_config(dir);
  cfg.solvers = {"svrg", "cg", "sgd", "sag", "rda"};
  cfg.epochs = 12;
  cfg.workers = 2;
  RunArtifacts artifacts;
  REQUIRE(cmd_run(cfg, &artifacts) == 0);
  CHECK(artifacts.outcomes.size() == 5);
  for (const auto& outcome : artifacts.outcomes) {
    CHECK(std::filesystem::exists(outcome.trace_path));
    CHECK_FALSE(outcome.diverged);
    REQUIRE(outcome.final_gap.has_value());
    CHECK(*outcome.final_gap >= -1e-9);
  }
}

TEST_CASE("cmd_grid report and winner selection") {
  const std::string dir = temp_dir("vrprox_grid_test");

  SUBCASE("report has 13 rows per constant-rate solver") {
    ExperimentConfig cfg = desk_config(dir);
    cfg.beta = 0.0;
    cfg.grid = true;
    cfg.grid_passes = 10;
    cfg.epochs = 10;
    cfg.solvers = {"svrg", "cg"};
    GridArtifacts artifacts;
    REQUIRE(cmd_grid(cfg, &artifacts) == 0);
    CHECK(artifacts.results.at("svrg").points.size() == 13);
    CHECK(artifacts.results.at("cg").points.size() == 13);
    std::ifstream report(artifacts.report_path);
    std::string line;
    int rows = 0;
    while (std::getline(report, line)) ++rows;
    CHECK(rows == 1 + 13 * 2);
  }

  SUBCASE("monotone toy problem: winner is the largest productive rate") {
    // curvature 0.2 over the grid: every rate contracts, larger is faster
    RowMatrix design(1, 1);
    design << std::sqrt(0.2);
    ExperimentConfig cfg;
    cfg.out_dir = dir;
    cfg.timing = false;
    cfg.grid_passes = 40;
    CompositeProblem prob(Dataset(design, Vector::Ones(1)), LossKind::squared(),
                          RegularizerKind::l1(), 0.0, 1e6);
    const GridResult result = grid_search("cg", prob, cfg);
    REQUIRE(result.winner.has_value());
    CHECK(*result.winner == doctest::Approx(2.0));
  }
}

TEST_CASE("cmd_diagnose reports certificates consistent with sparsity") {
  // The sigma_bar = sigma - 64 tau_sigma r certificate needs n well above
  // 256 r ln(p) with the default constants, hence the tall thin instance.
  const std::string dir = temp_dir("vrprox_diag_test");
  ExperimentConfig cfg = desk_config(dir);
  cfg.n = 4000;
  cfg.p = 50;
  cfg.r = 1;
  cfg.beta = 0.0;  // default 1/(16L)
  DiagnoseReport rep;
  REQUIRE(cmd_diagnose(cfg, &rep) == 0);
  CHECK(rep.sigma_bar > 0.0);
  CHECK(rep.sigma_bar_certified);
  REQUIRE(rep.alpha.has_value());
  CHECK(*rep.alpha < 1.0);
  CHECK(rep.lambda_min > 0.0);
  CHECK(rep.cone.pass);
  CHECK(rep.rsc_check.pass_fraction >= 0.9);
  REQUIRE(rep.epochs_to_tolerance.has_value());
  CHECK(*rep.epochs_to_tolerance >= 0);

  SUBCASE("inflated sparsity removes the certificate") {
    ExperimentConfig dense_cfg = cfg;
    dense_cfg.r = 25;  // p/2
    DiagnoseReport dense_rep;
    REQUIRE(cmd_diagnose(dense_cfg, &dense_rep) == 0);
    CHECK_FALSE(dense_rep.sigma_bar_certified);
    CHECK(dense_rep.sigma_bar < 0.0);
    CHECK_FALSE(dense_rep.alpha.has_value());
    CHECK_FALSE(dense_rep.no_certificate_reason.empty());
  }
}

TEST_CASE("decay-factor fitting separates geometric from sublinear traces") {
  const auto make_trace = [](auto gap_fn) {
    RunTrace trace;
    for (int pass = 1; pass <= 60; ++pass) {
      TraceRecord rec;
      rec.epoch = pass;
      rec.passes = pass;
      rec.gap = gap_fn(pass);
      rec.objective = 1.0 + *rec.gap;
      trace.records.push_back(rec);
    }
    return trace;
  };
  const RunTrace geometric = make_trace([](int t) { return std::pow(0.9, t); });
  CHECK(fit_decay_factor(geometric, 5.0, 50.0) == doctest::Approx(0.9).epsilon(1e-6));
  const RunTrace sublinear = make_trace([](int t) { return 1.0 / (400.0 + t); });
  CHECK(fit_decay_factor(sublinear, 5.0, 50.0) > kPhaseLinearThreshold);
  const RunTrace floored = make_trace([](int) { return 1e-14; });
  CHECK(std::isnan(fit_decay_factor(floored, 5.0, 50.0)));
}

TEST_CASE("cmd_phase emits one row per sparsity level") {
  const std::string dir = temp_dir("vrprox_phase_test");
  ExperimentConfig cfg = desk_config(dir);
  cfg.beta = 0.0;  // grid-tuned per sparsity level
  cfg.grid_passes = 10;
  cfg.epochs = 60;
  cfg.workers = 2;
  PhaseTable table;
  REQUIRE(cmd_phase(cfg, {2, 5, 400}, &table) == 0);
  REQUIRE(table.rows.size() == 3);
  CHECK(table.rows[0].r == 2);
  CHECK(table.rows[2].r == 400);
  // the easy sparse instance converges linearly at desk scale
  CHECK(table.rows[0].linear);
  for (const auto& row : table.rows)
    CHECK((std::isfinite(row.decay_factor) || !row.note.empty()));
  CHECK(std::filesystem::exists(table.table_path));

  std::ifstream in(table.table_path);
  std::string line;
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 4);
}

TEST_CASE("dataset problems: logistic classification and the expansion pipeline") {
  const std::string dir = temp_dir("vrprox_dataset_test");
  const std::string path = dir + "/clf.libsvm";
  {
    // linearly separable-ish binary problem
    Rng rng(314);
    std::ofstream out(path);
    for (int i = 0; i < 60; ++i) {
      const Scalar x0 = rng.next_normal(), x1 = rng.next_normal();
      const int label = (x0 + 0.5 * x1 + 0.2 * rng.next_normal()) > 0 ? 1 : 0;
      out << label << " 1:" << format_g17(x0) << " 2:" << format_g17(x1) << "\n";
    }
  }

  SUBCASE("logistic + l1 run converges on the loaded file") {
    ExperimentConfig cfg;
    cfg.model = "dataset";
    cfg.data_path = path;
    cfg.loss = "logistic";
    cfg.reg = "l1";
    cfg.lambda = 0.01;
    cfg.rho = 50.0;
    cfg.beta = 1.0;
    cfg.epochs = 60;
    cfg.timing = false;
    cfg.out_dir = dir;
    RunArtifacts artifacts;
    REQUIRE(cmd_run(cfg, &artifacts) == 0);
    REQUIRE(artifacts.outcomes.size() == 1);
    CHECK(artifacts.outcomes[0].final_objective <
          std::log(2.0));  // better than the zero parameter
    REQUIRE(artifacts.outcomes[0].final_gap.has_value());
    CHECK(*artifacts.outcomes[0].final_gap >= -1e-9);
    CHECK(*artifacts.outcomes[0].final_gap <= 1e-4);
  }

  SUBCASE("poly_expand builds the cubic group pipeline") {
    ExperimentConfig cfg;
    cfg.model = "dataset";
    cfg.data_path = path;
    cfg.loss = "squared";
    cfg.poly_expand = true;
    cfg.lambda = 0.1;
    cfg.rho = 100.0;
    cfg.beta = 0.05;
    cfg.epochs = 10;
    cfg.timing = false;
    cfg.out_dir = dir;
    RunArtifacts artifacts;
    REQUIRE(cmd_run(cfg, &artifacts) == 0);
    CHECK(artifacts.assembled.problem.dataset.p() == 6);  // 2 features -> 3 powers each
    CHECK(artifacts.assembled.problem.reg.tag == RegTag::kGroup);
    CHECK(artifacts.assembled.problem.reg.groups.blocks.size() == 2);
  }
}
