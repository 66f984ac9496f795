#pragma once

// Loss-landscape metrics on trained weights: Hutchinson trace, top Hessian
// eigenvalue, Bezier-curve mode connectivity and CKA output similarity.

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "mdiag/nnkit.hpp"

namespace mdiag::landscape {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct CurveSpec {
  int bends_k = 2;
  int curve_epochs = 50;
  std::vector<double> eval_points{0.0, 0.25, 0.5, 0.75, 1.0};
  // Optimizer settings for the bend search; the zoo uses the configuration's
  // own batch size and learning rate.
  int batch_size = 32;
  double lr = 0.1;
};

struct ProbeSpec {
  int max_probes = 100;
  double convergence_tol = 0.01;
  int power_iters = 50;
  double power_tol = 1e-4;
};

// Matrix-free symmetric operator v -> Hv.
using HvpOperator = std::function<VectorXd(const VectorXd&)>;

// Mean of v'Hv over Rademacher probes. Stops early once the running mean has
// moved by less than convergence_tol (relative) on 10 consecutive probes.
// Throws Error(kUnavailable) on a non-finite product.
double hutchinson_trace(const HvpOperator& hv, Eigen::Index dim, const ProbeSpec& spec,
                        std::uint64_t seed);

// Largest algebraic eigenvalue by normalized power iteration. When the
// dominant-magnitude eigenvalue is negative the iteration is repeated on the
// shifted operator H - lambda I.
double top_eigenvalue(const HvpOperator& hv, Eigen::Index dim, const ProbeSpec& spec,
                      std::uint64_t seed);

double hutchinson_trace(const nn::MlpWeights& w, const nn::Dataset& data, const ProbeSpec& spec,
                        std::uint64_t seed);
double top_eigenvalue(const nn::MlpWeights& w, const nn::Dataset& data, const ProbeSpec& spec,
                      std::uint64_t seed);

// Point on the Bezier curve with control points `bends` (endpoints included).
VectorXd bezier_point(const std::vector<VectorXd>& bends, double t);

struct CurveResult {
  double connectivity_pct = 0.0;  // -100 * E_tr(gamma(t*))
  double t_star = 0.0;
  std::vector<double> curve_errors;  // E_tr at each eval point
};

// Trains the interior bends (initialised on the segment between the two
// endpoints) with t ~ U(0,1) per step, then locates the point of largest
// deviation from the endpoint mean error. Ties go to the smaller t.
CurveResult mode_connectivity(const nn::MlpWeights& a, const nn::MlpWeights& b,
                              const nn::Dataset& data, const CurveSpec& spec, std::uint64_t seed);

// Cov(X,Y) = (s-1)^-2 tr(X X' H Y Y' H), H the s x s centering matrix.
double cka_cov(const MatrixXd& x, const MatrixXd& y);

// Cov(Fa,Fb) / sqrt(Cov(Fa,Fa) Cov(Fb,Fb)); throws Error(kUnavailable) when
// either self-covariance vanishes.
double cka(const MatrixXd& fa, const MatrixXd& fb);

// CKA on pre-softmax outputs of `sample_count` rows drawn by seed.
double cka_similarity(const nn::MlpWeights& a, const nn::MlpWeights& b, const nn::Dataset& data,
                      int sample_count, std::uint64_t seed);

}  // namespace mdiag::landscape
