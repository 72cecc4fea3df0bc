#include <doctest.h>

#include <Eigen/SVD>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "vrprox/datagen.hpp"
#include "vrprox/io.hpp"
#include "vrprox/preprocess.hpp"

using namespace vrprox;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("sparse linear generator: shape, support, determinism") {
  SynthSpec spec;
  spec.n = 50;
  spec.p = 30;
  spec.r = 4;
  spec.seed = 11;
  auto a = gen_sparse_linear(spec);
  CHECK(a.dataset.n() == 50);
  CHECK(a.dataset.p() == 30);
  int nonzeros = 0;
  for (Index j = 0; j < 30; ++j) {
    if (a.truth.theta_star(j) != 0.0) {
      ++nonzeros;
      CHECK(std::abs(a.truth.theta_star(j)) == 1.0);
    }
  }
  CHECK(nonzeros == 4);
  CHECK(a.truth.support.support.size() == 4);

  auto b = gen_sparse_linear(spec);
  CHECK((a.dataset.dense() - b.dataset.dense()).norm() == 0.0);
  CHECK((a.dataset.responses() - b.dataset.responses()).norm() == 0.0);

  // different seeds give different supports (checked over a few draws)
  std::set<std::vector<Index>> supports;
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    SynthSpec s = spec;
    s.seed = seed;
    supports.insert(gen_sparse_linear(s).truth.support.support);
  }
  CHECK(supports.size() >= 7);
}

TEST_CASE("empirical feature covariance concentrates") {
  SynthSpec spec;
  spec.n = 20000;
  spec.p = 5;
  spec.r = 1;
  spec.b = 0.0;
  spec.seed = 2;
  auto gen = gen_sparse_linear(spec);
  const Matrix cov = Matrix(gen.dataset.dense().transpose()) * gen.dataset.dense() /
                     static_cast<Scalar>(spec.n);
  for (Index i = 0; i < 5; ++i)
    for (Index j = 0; j < 5; ++j)
      CHECK(std::abs(cov(i, j) - (i == j ? 1.0 : 0.0)) < 0.05);
}

TEST_CASE("noiseless generation is identifiable by least squares") {
  SynthSpec spec;
  spec.n = 50;
  spec.p = 20;
  spec.r = 5;
  spec.noise_sd = 0.0;
  spec.seed = 23;
  auto gen = gen_sparse_linear(spec);
  const Matrix X = gen.dataset.dense();
  const Vector fitted = (X.transpose() * X).ldlt().solve(X.transpose() * gen.dataset.responses());
  CHECK((fitted - gen.truth.theta_star).lpNorm<Eigen::Infinity>() < 1e-6);
}

TEST_CASE("group generator plants whole blocks") {
  SynthSpec spec;
  spec.n = 30;
  spec.p = 24;
  spec.q = 4;
  spec.num_groups = 6;
  spec.s_g = 2;
  spec.seed = 9;
  auto gen = gen_group_sparse(spec);
  int nonzeros = 0;
  for (Index j = 0; j < 24; ++j)
    if (gen.truth.theta_star(j) != 0.0) ++nonzeros;
  CHECK(nonzeros == 8);  // s_g * q
  for (Index gid : gen.truth.support.support) {
    for (Index j = gid * 4; j < (gid + 1) * 4; ++j)
      CHECK(std::abs(gen.truth.theta_star(j)) == 1.0);
  }

  SynthSpec dense_spec = spec;
  dense_spec.s_g = 6;
  auto dense = gen_group_sparse(dense_spec);
  for (Index j = 0; j < 24; ++j) CHECK(std::abs(dense.truth.theta_star(j)) == 1.0);

  SynthSpec bad = spec;
  bad.num_groups = 5;
  CHECK_THROWS_AS(gen_group_sparse(bad), std::invalid_argument);
}

TEST_CASE("corrupted covariates") {
  SynthSpec spec;
  spec.n = 2000;
  spec.p = 5;
  spec.r = 2;
  spec.gamma_w = 0.3;
  spec.seed = 6;
  auto gen = gen_corrupted_covariates(spec);
  CHECK(gen.hidden_x.rows() == 2000);

  SUBCASE("gamma_w = 0 keeps Z = X") {
    SynthSpec clean = spec;
    clean.gamma_w = 0.0;
    auto g = gen_corrupted_covariates(clean);
    CHECK((g.dataset.dense() - g.hidden_x).norm() == 0.0);
  }
  SUBCASE("debiased Gram approaches identity") {
    const Matrix gram = Matrix(gen.dataset.dense().transpose()) * gen.dataset.dense() /
                        static_cast<Scalar>(spec.n);
    const Matrix debiased = gram - spec.gamma_w * Matrix::Identity(5, 5);
    for (Index i = 0; i < 5; ++i)
      for (Index j = 0; j < 5; ++j)
        CHECK(std::abs(debiased(i, j) - (i == j ? 1.0 : 0.0)) < 0.1);
  }
  SUBCASE("responses come from the clean design") {
    SynthSpec noiseless = spec;
    noiseless.noise_sd = 0.0;
    auto g = gen_corrupted_covariates(noiseless);
    const Vector clean_pred = g.hidden_x * g.truth.theta_star;
    CHECK((g.dataset.responses() - clean_pred).norm() == 0.0);
  }
}

TEST_CASE("libsvm parsing") {
  const std::string path = temp_path("vrprox_libsvm_test.txt");
  {
    std::ofstream out(path);
    out << "1 3:0.5 7:-2\n";
    out << "0 1:1\n";
    out << "-1\n";  // empty feature list: all-zero row
  }
  std::vector<std::string> warnings;
  Dataset data = read_libsvm(path, {}, &warnings);
  CHECK(data.n() == 3);
  CHECK(data.p() == 7);
  CHECK(data.response(0) == 1.0);
  CHECK(data.response(1) == -1.0);  // 0 remapped
  CHECK(data.response(2) == -1.0);
  Vector probe = Vector::Zero(7);
  probe(2) = 1.0;
  CHECK(data.row_dot(0, probe) == doctest::Approx(0.5));
  probe.setZero();
  probe(6) = 1.0;
  CHECK(data.row_dot(0, probe) == doctest::Approx(-2.0));
  CHECK(data.row_squared_norm(2) == 0.0);
  CHECK(warnings.empty());

  SUBCASE("unsorted indices are sorted with a warning") {
    {
      std::ofstream out(path);
      out << "1 5:1 2:3\n";
    }
    warnings.clear();
    Dataset sorted = read_libsvm(path, {}, &warnings);
    REQUIRE(warnings.size() == 1);
    Vector e2 = Vector::Zero(5);
    e2(1) = 1.0;
    CHECK(sorted.row_dot(0, e2) == doctest::Approx(3.0));
  }
  SUBCASE("malformed lines name the line number") {
    {
      std::ofstream out(path);
      out << "1 2:0.5\n";
      out << "1 oops\n";
    }
    try {
      read_libsvm(path);
      FAIL("expected an exception");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
  }
  SUBCASE("duplicate index rejected") {
    {
      std::ofstream out(path);
      out << "1 2:0.5 2:1\n";
    }
    CHECK_THROWS_AS(read_libsvm(path), std::runtime_error);
  }
  SUBCASE("regression labels survive when remap is off") {
    {
      std::ofstream out(path);
      out << "0.25 1:1\n";
      out << "0 1:2\n";
    }
    LibsvmOptions opts;
    opts.remap_binary_labels = false;
    Dataset reg = read_libsvm(path, opts);
    CHECK(reg.response(0) == 0.25);
    CHECK(reg.response(1) == 0.0);
  }
  std::remove(path.c_str());
}

TEST_CASE("libsvm round trip preserves the dataset") {
  SynthSpec spec;
  spec.n = 12;
  spec.p = 7;
  spec.r = 3;
  spec.seed = 44;
  auto gen = gen_sparse_linear(spec);
  const std::string path = temp_path("vrprox_roundtrip.libsvm");
  write_libsvm(gen.dataset, path);
  LibsvmOptions opts;
  opts.remap_binary_labels = false;
  opts.dimension_hint = 7;
  Dataset back = read_libsvm(path, opts);
  CHECK(back.n() == 12);
  CHECK(back.p() == 7);
  CHECK((back.responses() - gen.dataset.responses()).norm() == 0.0);
  for (Index i = 0; i < 12; ++i) {
    Vector probe = Vector::Zero(7);
    for (Index j = 0; j < 7; ++j) {
      probe(j) = 1.0;
      CHECK(back.row_dot(i, probe) == gen.dataset.row_dot(i, probe));
      probe(j) = 0.0;
    }
  }
  std::remove(path.c_str());
}

TEST_CASE("column normalization") {
  RowMatrix design(4, 2);
  design << 2.0, 0.1, 2.0, 0.1, 2.0, 0.1, 2.0, 0.1;  // col norms: 4, 0.2; sqrt(n) = 2
  Dataset data(design, Vector::Zero(4));
  const auto norm = column_normalize(data);
  CHECK(norm.scales(0) == doctest::Approx(0.5));
  CHECK(norm.scales(1) == doctest::Approx(1.0));  // under the bound: untouched
  CHECK(norm.dataset.dense()(0, 0) == doctest::Approx(1.0));

  // idempotent
  const auto again = column_normalize(norm.dataset);
  CHECK((again.scales - Vector::Ones(2)).norm() <= 1e-12);
  CHECK((again.dataset.dense() - norm.dataset.dense()).norm() == 0.0);

  // zero columns untouched
  RowMatrix with_zero(2, 2);
  with_zero << 5.0, 0.0, 5.0, 0.0;
  const auto z = column_normalize(Dataset(with_zero, Vector::Zero(2)));
  CHECK(z.scales(1) == 1.0);
}

TEST_CASE("group normalization matches a direct SVD oracle") {
  SynthSpec spec;
  spec.n = 40;
  spec.p = 10;
  spec.q = 5;
  spec.num_groups = 2;
  spec.s_g = 1;
  spec.seed = 8;
  spec.sigma_scale = 4.0;  // inflate so the bound binds
  auto gen = gen_group_sparse(spec);
  const GroupMap groups = GroupMap::contiguous(10, 5);
  const auto norm = group_normalize(gen.dataset, groups);

  const Scalar root_n = std::sqrt(40.0);
  for (int g = 0; g < 2; ++g) {
    Matrix block(40, 5);
    for (Index c = 0; c < 5; ++c) block.col(c) = gen.dataset.dense().col(5 * g + c);
    Eigen::JacobiSVD<Matrix> svd(block);
    const Scalar op_norm = svd.singularValues()(0);
    const Scalar expected = op_norm > root_n ? root_n / op_norm : 1.0;
    CHECK(norm.scales(5 * g) == doctest::Approx(expected).epsilon(1e-8));

    Matrix scaled_block(40, 5);
    for (Index c = 0; c < 5; ++c) scaled_block.col(c) = norm.dataset.dense().col(5 * g + c);
    Eigen::JacobiSVD<Matrix> svd2(scaled_block);
    CHECK(svd2.singularValues()(0) <= root_n * (1.0 + 1e-10));
  }
}

TEST_CASE("polynomial group expansion") {
  RowMatrix design(2, 2);
  design << 2.0, 1.0, 3.0, 1.0;
  Dataset data(design, Vector::Zero(2));
  const auto expanded = polynomial_group_expand(data);
  CHECK(expanded.dataset.p() == 6);
  CHECK(expanded.groups.blocks.size() == 2);
  CHECK(expanded.dataset.dense()(0, 0) == 2.0);
  CHECK(expanded.dataset.dense()(0, 1) == 4.0);
  CHECK(expanded.dataset.dense()(0, 2) == 8.0);
  // a column of ones expands to identical columns
  CHECK(expanded.dataset.dense()(0, 3) == 1.0);
  CHECK(expanded.dataset.dense()(0, 4) == 1.0);
  CHECK(expanded.dataset.dense()(0, 5) == 1.0);
  CHECK_THROWS_AS(polynomial_group_expand(data, 2), std::invalid_argument);
}

TEST_CASE("trace serialization") {
  RunTrace trace;
  const std::string csv = temp_path("vrprox_trace.csv");
  const std::string json = temp_path("vrprox_trace.json");

  SUBCASE("empty trace gives a header-only csv") {
    write_trace(trace, csv, TraceFormat::kCsv);
    std::ifstream in(csv);
    std::string line;
    CHECK(std::getline(in, line));
    CHECK(line == "epoch,passes,objective,gap,grad_evals,wallclock_ms");
    CHECK_FALSE(std::getline(in, line));
  }

  SUBCASE("round trip reproduces records to full precision") {
    TraceRecord r1;
    r1.epoch = 1;
    r1.passes = 5.0 / 3.0;
    r1.objective = 0.12345678901234567;
    r1.gap = 1.9999999999999998e-9;
    r1.grad_evals = 123456789012345;
    r1.wallclock_ms = 17.25;
    TraceRecord r2;
    r2.epoch = 2;
    r2.passes = 10.0 / 3.0;
    r2.objective = 3.0000000000000004;
    r2.grad_evals = 2;
    r2.wallclock_ms = 0.0;
    trace.records = {r1, r2};

    for (auto format : {TraceFormat::kCsv, TraceFormat::kJson}) {
      const std::string path = format == TraceFormat::kCsv ? csv : json;
      write_trace(trace, path, format);
      const RunTrace back =
          format == TraceFormat::kCsv ? read_trace_csv(path) : read_trace_json(path);
      REQUIRE(back.records.size() == 2);
      CHECK(back.records[0].passes == r1.passes);
      CHECK(back.records[0].objective == r1.objective);
      REQUIRE(back.records[0].gap.has_value());
      CHECK(*back.records[0].gap == *r1.gap);
      CHECK(back.records[0].grad_evals == r1.grad_evals);
      CHECK(back.records[0].wallclock_ms == r1.wallclock_ms);
      CHECK_FALSE(back.records[1].gap.has_value());  // blank iff no reference
      CHECK(back.records[1].objective == r2.objective);
    }
  }
  std::remove(csv.c_str());
  std::remove(json.c_str());
}
