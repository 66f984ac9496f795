#include "mdiag/landscape.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "mdiag/error.hpp"

namespace mdiag::landscape {

double hutchinson_trace(const HvpOperator& hv, Eigen::Index dim, const ProbeSpec& spec,
                        std::uint64_t seed) {
  if (spec.max_probes < 1) fail(ErrorCode::kInvalidArgument, "max_probes must be >= 1");
  if (dim < 1) fail(ErrorCode::kInvalidArgument, "hutchinson: empty parameter vector");
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(0.5);
  VectorXd v(dim);
  double sum = 0.0;
  double mean = 0.0;
  int stable = 0;
  for (int k = 1; k <= spec.max_probes; ++k) {
    for (Eigen::Index i = 0; i < dim; ++i) v[i] = coin(rng) ? 1.0 : -1.0;
    const double q = v.dot(hv(v));
    if (!std::isfinite(q)) fail(ErrorCode::kUnavailable, "hutchinson: non-finite HVP");
    sum += q;
    const double prev = mean;
    mean = sum / k;
    if (k > 1 && std::abs(mean - prev) < spec.convergence_tol * std::abs(prev)) {
      if (++stable >= 10) break;
    } else {
      stable = 0;
    }
  }
  return mean;
}

namespace {

double dominant_eigenvalue(const HvpOperator& hv, Eigen::Index dim, const ProbeSpec& spec,
                           std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  VectorXd v(dim);
  for (int attempt = 0;; ++attempt) {
    for (Eigen::Index i = 0; i < dim; ++i) v[i] = gauss(rng);
    if (v.norm() > 0.0) break;
    if (attempt == 1) fail(ErrorCode::kUnavailable, "power iteration: zero initial vector");
  }
  v.normalize();
  double lambda = 0.0;
  for (int it = 0; it < spec.power_iters; ++it) {
    VectorXd w = hv(v);
    if (!w.allFinite()) fail(ErrorCode::kUnavailable, "power iteration: non-finite HVP");
    const double next = v.dot(w);
    const double norm = w.norm();
    if (norm == 0.0) return 0.0;
    v = w / norm;
    const bool converged = it > 0 && std::abs(next - lambda) < spec.power_tol * std::abs(next);
    lambda = next;
    if (converged) break;
  }
  return lambda;
}

}  // namespace

double top_eigenvalue(const HvpOperator& hv, Eigen::Index dim, const ProbeSpec& spec,
                      std::uint64_t seed) {
  if (dim < 1) fail(ErrorCode::kInvalidArgument, "power iteration: empty parameter vector");
  const double dominant = dominant_eigenvalue(hv, dim, spec, seed);
  if (dominant >= 0.0) return dominant;
  // Spectrum of H - dominant*I is non-negative; its top gives lambda_max.
  const HvpOperator shifted = [&](const VectorXd& v) -> VectorXd { return hv(v) - dominant * v; };
  return dominant + dominant_eigenvalue(shifted, dim, spec, seed + 1);
}

double hutchinson_trace(const nn::MlpWeights& w, const nn::Dataset& data, const ProbeSpec& spec,
                        std::uint64_t seed) {
  return hutchinson_trace([&](const VectorXd& v) { return nn::hvp(w, data, v); },
                          w.shape.param_count(), spec, seed);
}

double top_eigenvalue(const nn::MlpWeights& w, const nn::Dataset& data, const ProbeSpec& spec,
                      std::uint64_t seed) {
  return top_eigenvalue([&](const VectorXd& v) { return nn::hvp(w, data, v); },
                        w.shape.param_count(), spec, seed);
}

namespace {

double binomial(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

std::vector<double> bernstein(int k, double t) {
  std::vector<double> c(static_cast<std::size_t>(k + 1));
  for (int j = 0; j <= k; ++j)
    c[static_cast<std::size_t>(j)] = binomial(k, j) * std::pow(1.0 - t, k - j) * std::pow(t, j);
  return c;
}

}  // namespace

VectorXd bezier_point(const std::vector<VectorXd>& bends, double t) {
  if (bends.size() < 2) fail(ErrorCode::kInvalidArgument, "bezier curve needs >= 2 control points");
  const int k = static_cast<int>(bends.size()) - 1;
  const auto c = bernstein(k, t);
  VectorXd p = VectorXd::Zero(bends.front().size());
  for (int j = 0; j <= k; ++j) p += c[static_cast<std::size_t>(j)] * bends[static_cast<std::size_t>(j)];
  return p;
}

CurveResult mode_connectivity(const nn::MlpWeights& a, const nn::MlpWeights& b,
                              const nn::Dataset& data, const CurveSpec& spec, std::uint64_t seed) {
  if (!(a.shape == b.shape)) fail(ErrorCode::kInvalidArgument, "curve endpoints differ in shape");
  if (spec.bends_k < 1) fail(ErrorCode::kInvalidArgument, "bends_k must be >= 1");
  const auto& pts = spec.eval_points;
  if (std::find(pts.begin(), pts.end(), 0.0) == pts.end() ||
      std::find(pts.begin(), pts.end(), 1.0) == pts.end())
    fail(ErrorCode::kInvalidArgument, "eval_points must include 0 and 1");

  const double err_a = nn::evaluate(a, data).error;
  const double err_b = nn::evaluate(b, data).error;
  if (!std::isfinite(err_a) || !std::isfinite(err_b) || !a.flat.allFinite() || !b.flat.allFinite())
    fail(ErrorCode::kUnavailable, "connectivity: non-finite endpoint");

  const int k = spec.bends_k;
  std::vector<VectorXd> bends(static_cast<std::size_t>(k + 1));
  for (int j = 0; j <= k; ++j)
    bends[static_cast<std::size_t>(j)] =
        a.flat + (static_cast<double>(j) / k) * (b.flat - a.flat);

  const int n = static_cast<int>(data.size());
  const int batch = std::clamp(spec.batch_size, 1, n);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform_t(0.0, 1.0);
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  VectorXd grad;
  for (int epoch = 0; epoch < spec.curve_epochs && k > 1; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (int start = 0; start < n; start += batch) {
      const int len = std::min(batch, n - start);
      const double t = uniform_t(rng);
      const VectorXd point = bezier_point(bends, t);
      const double loss = nn::loss_and_grad(
          a.shape, point, data, &grad,
          std::span<const int>(order.data() + start, static_cast<std::size_t>(len)));
      if (!std::isfinite(loss)) fail(ErrorCode::kUnavailable, "connectivity: curve training diverged");
      const auto coef = bernstein(k, t);
      for (int j = 1; j < k; ++j)
        bends[static_cast<std::size_t>(j)].noalias() -= spec.lr * coef[static_cast<std::size_t>(j)] * grad;
    }
  }

  CurveResult res;
  const double endpoint_mean = 0.5 * (err_a + err_b);
  double best_dev = -1.0;
  for (double t : pts) {
    double err;
    if (t == 0.0) err = err_a;
    else if (t == 1.0) err = err_b;
    else err = nn::evaluate(a.shape, bezier_point(bends, t), data).error;
    res.curve_errors.push_back(err);
    const double dev = std::abs(endpoint_mean - err);
    if (dev > best_dev || (dev == best_dev && t < res.t_star)) {
      best_dev = dev;
      res.t_star = t;
      res.connectivity_pct = 0.0 - 100.0 * err;  // +0 rather than -0 for error-free points
    }
  }
  return res;
}

double cka_cov(const MatrixXd& x, const MatrixXd& y) {
  const Eigen::Index s = x.rows();
  const MatrixXd h = MatrixXd::Identity(s, s) - MatrixXd::Constant(s, s, 1.0 / static_cast<double>(s));
  const MatrixXd kx = x * x.transpose();
  const MatrixXd ky = y * y.transpose();
  const double scale = static_cast<double>(s - 1) * static_cast<double>(s - 1);
  return (kx * h * ky * h).trace() / scale;
}

double cka(const MatrixXd& fa, const MatrixXd& fb) {
  if (fa.rows() != fb.rows()) fail(ErrorCode::kInvalidArgument, "cka: row counts differ");
  if (fa.rows() < 2) fail(ErrorCode::kInvalidArgument, "cka: need at least 2 samples");
  // Constant features centre to zero; the Gram form would leave rounding noise.
  auto centred_norm = [](const MatrixXd& m) { return (m.rowwise() - m.colwise().mean()).norm(); };
  if (centred_norm(fa) <= 1e-12 * fa.norm() || centred_norm(fb) <= 1e-12 * fb.norm())
    fail(ErrorCode::kUnavailable, "cka: constant features");
  const double xx = cka_cov(fa, fa);
  const double yy = cka_cov(fb, fb);
  const double denom_sq = xx * yy;
  if (!(xx > 1e-300) || !(yy > 1e-300) || !std::isfinite(denom_sq))
    fail(ErrorCode::kUnavailable, "cka: degenerate self-covariance");
  return cka_cov(fa, fb) / std::sqrt(xx) / std::sqrt(yy);
}

double cka_similarity(const nn::MlpWeights& a, const nn::MlpWeights& b, const nn::Dataset& data,
                      int sample_count, std::uint64_t seed) {
  if (sample_count < 2) fail(ErrorCode::kInvalidArgument, "cka: sample_count must be >= 2");
  const auto n = static_cast<int>(data.size());
  std::vector<int> rows(static_cast<std::size_t>(n));
  std::iota(rows.begin(), rows.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(rows.begin(), rows.end(), rng);
  rows.resize(static_cast<std::size_t>(std::min(sample_count, n)));
  std::sort(rows.begin(), rows.end());
  MatrixXd x(static_cast<Eigen::Index>(rows.size()), data.inputs.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) x.row(static_cast<Eigen::Index>(i)) = data.inputs.row(rows[i]);
  return cka(nn::logits(a.shape, a.flat, x), nn::logits(b.shape, b.flat, x));
}

}  // namespace mdiag::landscape
