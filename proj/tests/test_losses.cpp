#include <doctest.h>

#include "oracles.hpp"
#include "vrprox/losses.hpp"
#include "vrprox/rng.hpp"

using namespace vrprox;

namespace {

Dataset random_dataset(Index n, Index p, std::uint64_t seed, bool binary_labels = false) {
  Rng rng(seed);
  RowMatrix design(n, p);
  Vector y(n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < p; ++j) design(i, j) = rng.next_normal();
    y(i) = binary_labels ? rng.next_sign() : rng.next_normal();
  }
  return Dataset(std::move(design), std::move(y));
}

Vector vec(std::initializer_list<Scalar> values) {
  Vector out(static_cast<Index>(values.size()));
  Index j = 0;
  for (Scalar v : values) out(j++) = v;
  return out;
}

Dataset one_row(std::initializer_list<Scalar> x, Scalar y) {
  RowMatrix design(1, static_cast<Index>(x.size()));
  Index j = 0;
  for (Scalar v : x) design(0, j++) = v;
  Vector resp(1);
  resp(0) = y;
  return Dataset(std::move(design), std::move(resp));
}

}  // namespace

TEST_CASE("component gradients match hand evaluations") {
  CHECK(component_gradient(LossKind::squared(), one_row({1.0, 0.0}, 0.0), 0, vec({0.0, 0.0}))
            .isZero());

  const Vector g = component_gradient(LossKind::squared(), one_row({1.0, 2.0}, 1.0), 0,
                                      vec({1.0, 1.0}));
  CHECK(g(0) == doctest::Approx(2.0));
  CHECK(g(1) == doctest::Approx(4.0));

  const Vector gl = component_gradient(LossKind::logistic(), one_row({1.0}, 1.0), 0, vec({0.0}));
  CHECK(gl(0) == doctest::Approx(-0.5));

  CHECK_THROWS_AS(component_gradient(LossKind::squared(), one_row({1.0}, 0.0), 1, vec({0.0})),
                  std::out_of_range);
}

TEST_CASE("full gradient is the exact mean of component gradients") {
  SUBCASE("single sample") {
    Dataset data = one_row({1.0, 2.0}, 1.0);
    const Vector theta = vec({0.5, -0.5});
    const Vector full = full_gradient(LossKind::squared(), data, theta);
    const Vector comp = component_gradient(LossKind::squared(), data, 0, theta);
    for (Index j = 0; j < 2; ++j) CHECK(full(j) == comp(j));
  }
  SUBCASE("two-sample mean") {
    RowMatrix design(2, 2);
    design << 1.0, 0.0, 0.0, 1.0;
    Dataset data(design, vec({1.0, 1.0}));
    const Vector g = full_gradient(LossKind::squared(), data, vec({0.0, 0.0}));
    CHECK(g(0) == doctest::Approx(-0.5));
    CHECK(g(1) == doctest::Approx(-0.5));
  }
  SUBCASE("exact unbiasedness, same summation order") {
    for (auto loss : {LossKind::squared(), LossKind::logistic()}) {
      Dataset data = random_dataset(9, 4, 77, loss.tag == LossTag::kLogistic);
      Rng rng(5);
      Vector theta(4);
      for (Index j = 0; j < 4; ++j) theta(j) = rng.next_normal();
      Vector acc = Vector::Zero(4);
      for (Index i = 0; i < data.n(); ++i) acc += component_gradient(loss, data, i, theta);
      const Vector mean = acc / static_cast<Scalar>(data.n());
      const Vector full = full_gradient(loss, data, theta);
      for (Index j = 0; j < 4; ++j) CHECK(mean(j) == full(j));  // bitwise
    }
  }
  SUBCASE("matches (1/n) X'(X theta - y) on a random 5x3 instance") {
    Dataset data = random_dataset(5, 3, 99);
    Rng rng(6);
    Vector theta(3);
    for (Index j = 0; j < 3; ++j) theta(j) = rng.next_normal();
    const Vector algebraic = data.dense().transpose() *
                             (data.dense() * theta - data.responses()) / 5.0;
    const Vector full = full_gradient(LossKind::squared(), data, theta);
    for (Index j = 0; j < 3; ++j) CHECK(full(j) == doctest::Approx(algebraic(j)).epsilon(1e-12));
  }
}

TEST_CASE("smoothness bounds") {
  CHECK(smoothness_bound(LossKind::squared(), one_row({3.0, 4.0}, 0.0)).L ==
        doctest::Approx(25.0));
  CHECK(smoothness_bound(LossKind::logistic(), one_row({2.0, 0.0}, 1.0)).L ==
        doctest::Approx(1.0));
  RowMatrix design(2, 2);
  design << 1.0, 0.0, 0.0, 2.0;
  Dataset data(design, vec({0.0, 0.0}));
  const auto bound = smoothness_bound(LossKind::squared(), data);
  CHECK(bound.L == doctest::Approx(4.0));
  CHECK(bound.per_component(0) == doctest::Approx(1.0));
  CHECK(bound.per_component(1) == doctest::Approx(4.0));
}

TEST_CASE("finite differences confirm every loss gradient") {
  Rng rng(13);
  for (auto loss : {LossKind::squared(), LossKind::logistic(), LossKind::corrected(0.1)}) {
    const bool binary = loss.tag == LossTag::kLogistic;
    for (int trial = 0; trial < 8; ++trial) {
      const Index n = 2 + rng.next_index(8);
      const Index p = 2 + rng.next_index(5);
      Dataset data = random_dataset(n, p, 1000 + 17 * trial, binary);
      Vector theta(p), direction(p);
      for (Index j = 0; j < p; ++j) {
        theta(j) = 0.5 * rng.next_normal();
        direction(j) = rng.next_normal();
      }
      direction /= direction.norm();
      const Index i = rng.next_index(n);
      const auto f = [&](const Vector& t) {
        return loss_value(loss, data.row_dot(i, t), data.response(i));
      };
      const Scalar analytic = component_gradient(loss, data, i, theta).dot(direction);
      const Scalar numeric = oracle::directional_derivative(f, theta, direction);
      CHECK(analytic == doctest::Approx(numeric).epsilon(1e-5));
    }
  }
}

TEST_CASE("component gradients are L_i-Lipschitz") {
  Rng rng(29);
  for (auto loss : {LossKind::squared(), LossKind::logistic()}) {
    const bool binary = loss.tag == LossTag::kLogistic;
    Dataset data = random_dataset(6, 4, 555, binary);
    const auto bound = smoothness_bound(loss, data);
    for (int trial = 0; trial < 30; ++trial) {
      Vector t1(4), t2(4);
      for (Index j = 0; j < 4; ++j) {
        t1(j) = rng.next_normal();
        t2(j) = rng.next_normal();
      }
      const Index i = rng.next_index(6);
      const Scalar lhs =
          (component_gradient(loss, data, i, t1) - component_gradient(loss, data, i, t2)).norm();
      CHECK(lhs <= bound.per_component(i) * (t1 - t2).norm() + 1e-12);
    }
  }
}

TEST_CASE("corrected-quadratic gradient covers the convex part only") {
  Dataset data = one_row({2.0}, 1.0);
  const LossKind loss = LossKind::corrected(0.5);
  const Vector g = component_gradient(loss, data, 0, vec({1.0}));
  CHECK(g(0) == doctest::Approx((2.0 - 1.0) * 2.0));  // no -gamma_w * theta term here
  CHECK(smoothness_bound(loss, data).L == doctest::Approx(4.0));
}
