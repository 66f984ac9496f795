#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "mdiag/error.hpp"
#include "mdiag/nnkit.hpp"

using namespace mdiag;
using namespace mdiag::nn;

namespace {

Dataset small_data(int n = 40, std::uint64_t seed = 3) {
  return gen_synthetic(seed, n, DatasetVariant::kClean);
}

VectorXd random_vector(Eigen::Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  VectorXd v(n);
  for (auto& x : v) x = g(rng);
  return v;
}

}  // namespace

TEST_SUITE("nnkit") {

TEST_CASE("analytic gradient agrees with central differences") {
  const auto data = small_data();
  const ModelShape shape{8, 5, 4};
  const auto w = init_weights(shape, 11);
  VectorXd grad;
  loss_and_grad(shape, w.flat, data, &grad);
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < w.flat.size(); i += 3) {
    VectorXd p = w.flat, m = w.flat;
    p[i] += h;
    m[i] -= h;
    const double fd = (loss_and_grad(shape, p, data, nullptr) -
                       loss_and_grad(shape, m, data, nullptr)) / (2 * h);
    CHECK(grad[i] == doctest::Approx(fd).epsilon(1e-5).scale(1.0));
  }
}

TEST_CASE("row subsets restrict the loss") {
  const auto data = small_data(10);
  const ModelShape shape{8, 3, 4};
  const auto w = init_weights(shape, 2);
  const int rows[] = {4};
  Dataset single;
  single.inputs = data.inputs.row(4);
  single.labels = {data.labels[4]};
  single.classes = data.classes;
  CHECK(loss_and_grad(shape, w.flat, data, nullptr, rows) ==
        doctest::Approx(loss_and_grad(shape, w.flat, single, nullptr)));
}

TEST_CASE("hvp_fd on a quadratic matches A v") {
  const int n = 12;
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  MatrixXd a(n, n);
  for (auto& x : a.reshaped()) x = g(rng);
  a = (a + a.transpose()).eval();
  const VectorXd b = random_vector(n, 6);
  const GradientFn grad = [&](const VectorXd& x) -> VectorXd { return a * x + b; };
  const VectorXd theta = random_vector(n, 7), v = random_vector(n, 8);
  CHECK((hvp_fd(grad, theta, v) - a * v).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("hvp_fd on a quartic matches the analytic Hessian") {
  // f = sum x^4 / 4 + (c.x)^2  ->  H = diag(3 x^2) + 2 c c'
  const int n = 9;
  const VectorXd c = random_vector(n, 21);
  const GradientFn grad = [&](const VectorXd& x) -> VectorXd {
    return x.array().cube().matrix() + 2.0 * c.dot(x) * c;
  };
  const VectorXd theta = random_vector(n, 22), v = random_vector(n, 23);
  MatrixXd h = (3.0 * theta.array().square()).matrix().asDiagonal();
  h += 2.0 * c * c.transpose();
  CHECK((hvp_fd(grad, theta, v) - h * v).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("hvp_fd edge directions") {
  const GradientFn grad = [](const VectorXd& x) -> VectorXd { return x; };
  CHECK(hvp_fd(grad, VectorXd::Ones(3), VectorXd::Zero(3)) == VectorXd::Zero(3));
  CHECK_THROWS_AS(hvp_fd(grad, VectorXd::Ones(3), VectorXd::Ones(2)), Error);
  CHECK_THROWS_AS(hvp_fd(grad, VectorXd(), VectorXd()), Error);
}

TEST_CASE("MLP Hessian-vector products are symmetric") {
  const auto data = small_data(60);
  const ModelShape shape{8, 6, 4};
  const auto w = train(shape, data, {16, 20, 0.1, 1});
  const VectorXd u = random_vector(shape.param_count(), 31);
  const VectorXd v = random_vector(shape.param_count(), 32);
  const double uhv = u.dot(hvp(w, data, v)), vhu = v.dot(hvp(w, data, u));
  CHECK(uhv == doctest::Approx(vhu).epsilon(1e-4));
}

TEST_CASE("training is a pure function of its options") {
  const auto data = small_data(64);
  const ModelShape shape{8, 4, 4};
  const auto a = train(shape, data, {8, 5, 0.1, 9});
  const auto b = train(shape, data, {8, 5, 0.1, 9});
  const auto c = train(shape, data, {8, 5, 0.1, 10});
  CHECK(a == b);
  CHECK_FALSE(a == c);
}

TEST_CASE("training reduces the loss") {
  const auto data = small_data(128);
  const ModelShape shape{8, 16, 4};
  const auto w0 = init_weights(shape, 4);
  const auto w = train(shape, data, {16, 30, 0.1, 4});
  CHECK(evaluate(w, data).loss < evaluate(w0, data).loss);
}

TEST_CASE("bad batch sizes and divergence are reported") {
  const auto data = small_data(16);
  const ModelShape shape{8, 4, 4};
  CHECK_THROWS_AS(train(shape, data, {0, 1, 0.1, 0}), Error);
  CHECK_THROWS_AS(train(shape, data, {17, 1, 0.1, 0}), Error);
  auto poisoned = data;
  poisoned.inputs(3, 0) = std::numeric_limits<double>::quiet_NaN();
  try {
    train(shape, poisoned, {4, 1, 0.1, 0});
    FAIL("expected divergence");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kDiverged);
  }
}

TEST_CASE("label noise flips exactly a tenth of the labels") {
  for (int n : {10, 64, 1000}) {
    const auto clean = gen_synthetic(7, n, DatasetVariant::kClean);
    const auto noisy = gen_synthetic(7, n, DatasetVariant::kLabelNoise10);
    CHECK(clean.inputs == noisy.inputs);
    int flipped = 0;
    for (int i = 0; i < n; ++i) flipped += clean.labels[static_cast<std::size_t>(i)] != noisy.labels[static_cast<std::size_t>(i)];
    CHECK(flipped == n / 10);
  }
}

TEST_CASE("synthetic streams are independent and reproducible") {
  const auto a = gen_synthetic(1, 32, DatasetVariant::kClean, 0);
  const auto b = gen_synthetic(1, 32, DatasetVariant::kClean, 0);
  const auto c = gen_synthetic(1, 32, DatasetVariant::kClean, 1);
  CHECK(a.inputs == b.inputs);
  CHECK(a.inputs != c.inputs);
  CHECK(a.head(8).inputs == a.inputs.topRows(8));
}

TEST_CASE("weights JSON round trip") {
  const auto w = init_weights({8, 3, 4}, 1);
  CHECK(Json(w).get<MlpWeights>() == w);
}

}
