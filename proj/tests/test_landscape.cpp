#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <random>

#include "mdiag/error.hpp"
#include "oracles.hpp"
#include "mdiag/landscape.hpp"

using namespace mdiag;
using namespace mdiag::landscape;

using mdiag::testing::hand_cov;
using mdiag::testing::random_matrix;

TEST_SUITE("landscape") {

TEST_CASE("Hutchinson trace of diag(1..5)") {
  VectorXd d(5);
  d << 1, 2, 3, 4, 5;
  const HvpOperator op = [&](const VectorXd& v) -> VectorXd { return d.cwiseProduct(v); };
  ProbeSpec spec;
  spec.max_probes = 1000;
  spec.convergence_tol = 0.0;
  // Rademacher probes on a diagonal operator are exact per probe.
  CHECK(hutchinson_trace(op, 5, spec, 1) == doctest::Approx(15.0).epsilon(0.02));
}

TEST_CASE("Hutchinson trace of a dense SPD matrix") {
  const MatrixXd b = random_matrix(10, 10, 4);
  const MatrixXd a = b * b.transpose();
  const HvpOperator op = [&](const VectorXd& v) -> VectorXd { return a * v; };
  ProbeSpec spec;
  spec.max_probes = 4000;
  spec.convergence_tol = 0.0;
  CHECK(hutchinson_trace(op, 10, spec, 2) == doctest::Approx(a.trace()).epsilon(0.05));
}

TEST_CASE("power iteration matches a dense eigensolver") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    MatrixXd a = random_matrix(20, 20, seed);
    a = (a + a.transpose()).eval();
    // Separate the top eigenvalue so 50 iterations suffice at this tolerance.
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(a);
    const VectorXd top = es.eigenvectors().col(19);
    a += 10.0 * top * top.transpose();
    const double exact = Eigen::SelfAdjointEigenSolver<MatrixXd>(a).eigenvalues().maxCoeff();
    const HvpOperator op = [&](const VectorXd& v) -> VectorXd { return a * v; };
    ProbeSpec spec;
    spec.power_iters = 1000;
    spec.power_tol = 1e-12;
    CHECK(std::abs(top_eigenvalue(op, 20, spec, seed) - exact) <= 1e-3 * std::abs(exact));
  }
}

TEST_CASE("power iteration finds the largest algebraic eigenvalue when it is not dominant") {
  VectorXd d(4);
  d << -10, -1, 2, 3;
  const HvpOperator op = [&](const VectorXd& v) -> VectorXd { return d.cwiseProduct(v); };
  ProbeSpec spec;
  spec.power_iters = 2000;
  spec.power_tol = 1e-12;
  CHECK(top_eigenvalue(op, 4, spec, 3) == doctest::Approx(3.0).epsilon(1e-3));
}

TEST_CASE("CKA on 3x2 matrices equals the hand formula") {
  MatrixXd x(3, 2), y(3, 2);
  x << 1, 2, 3, 5, -1, 0;
  y << 0, 1, 2, -2, 4, 1;
  CHECK(std::abs(cka_cov(x, y) - hand_cov(x, y)) < 1e-10);
  const double expected = hand_cov(x, y) / std::sqrt(hand_cov(x, x) * hand_cov(y, y));
  CHECK(std::abs(cka(x, y) - expected) < 1e-10);
  CHECK(std::abs(cka(x, x) - 1.0) < 1e-12);
}

TEST_CASE("CKA invariances") {
  const MatrixXd x = random_matrix(30, 4, 9), y = random_matrix(30, 4, 10);
  const double base = cka(x, y);
  const MatrixXd q = Eigen::HouseholderQR<MatrixXd>(random_matrix(4, 4, 11)).householderQ();
  CHECK(std::abs(cka(x * q, y) - base) < 1e-8);
  CHECK(std::abs(cka(x, y * q) - base) < 1e-8);
  CHECK(std::abs(cka(3.7 * x, y) - base) < 1e-8);
  CHECK(std::abs(cka(x, 0.01 * y) - base) < 1e-8);
}

TEST_CASE("CKA of constant outputs is unavailable") {
  const MatrixXd c = MatrixXd::Ones(5, 2), y = random_matrix(5, 2, 1);
  CHECK_THROWS_AS(cka(c, y), Error);
}

TEST_CASE("Bezier endpoints and midpoint") {
  std::vector<VectorXd> bends{VectorXd::Zero(2), VectorXd::Ones(2), 2 * VectorXd::Ones(2)};
  CHECK(bezier_point(bends, 0.0) == bends[0]);
  CHECK(bezier_point(bends, 1.0) == bends[2]);
  CHECK(bezier_point(bends, 0.5).isApprox(VectorXd::Ones(2)));
}

TEST_CASE("connectivity contract") {
  const auto data = nn::gen_synthetic(5, 96, DatasetVariant::kClean);
  const nn::ModelShape shape{8, 8, 4};
  CurveSpec spec;
  spec.curve_epochs = 5;
  spec.batch_size = 16;

  SUBCASE("always inside [-100, 0]") {
    for (std::uint64_t s = 0; s < 4; ++s) {
      const auto a = nn::train(shape, data, {16, 3, 0.1, s});
      const auto b = nn::train(shape, data, {16, 3, 0.1, s + 10});
      const auto r = mode_connectivity(a, b, data, spec, s);
      CHECK(r.connectivity_pct <= 0.0);
      CHECK(r.connectivity_pct >= -100.0);
    }
  }
  SUBCASE("constant curve gives -100 * E_tr") {
    const auto a = nn::train(shape, data, {16, 2, 0.1, 1});
    spec.curve_epochs = 0;
    const auto r = mode_connectivity(a, a, data, spec, 0);
    CHECK(r.connectivity_pct == -100.0 * nn::evaluate(a, data).error);
  }
  SUBCASE("interpolating endpoints and curve give 0") {
    // Two far-apart blobs: every model on the curve separates them.
    nn::Dataset easy;
    easy.classes = 2;
    easy.inputs = MatrixXd(40, 2);
    for (int i = 0; i < 40; ++i) {
      const double side = i < 20 ? -10.0 : 10.0;
      easy.inputs.row(i) << side + 0.01 * i, side - 0.01 * i;
      easy.labels.push_back(i < 20 ? 0 : 1);
    }
    const nn::ModelShape s2{2, 4, 2};
    const auto a = nn::train(s2, easy, {8, 30, 0.1, 1});
    const auto b = nn::train(s2, easy, {8, 30, 0.1, 2});
    REQUIRE(nn::evaluate(a, easy).error == 0.0);
    REQUIRE(nn::evaluate(b, easy).error == 0.0);
    spec.curve_epochs = 20;
    spec.batch_size = 8;
    const auto r = mode_connectivity(a, b, easy, spec, 3);
    CHECK(r.connectivity_pct == 0.0);
  }
}

TEST_CASE("sampled CKA similarity is in range and symmetric") {
  const auto data = nn::gen_synthetic(5, 80, DatasetVariant::kClean);
  const nn::ModelShape shape{8, 6, 4};
  const auto a = nn::train(shape, data, {16, 5, 0.1, 1});
  const auto b = nn::train(shape, data, {16, 5, 0.1, 2});
  const double s = cka_similarity(a, b, data, 50, 3);
  CHECK(s >= -1.0);
  CHECK(s <= 1.0 + 1e-12);
  CHECK(s == doctest::Approx(cka_similarity(b, a, data, 50, 3)));
}

}
