#include "mdiag/nnkit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "mdiag/error.hpp"

namespace mdiag::nn {

namespace {

struct Offsets {
  Eigen::Index w1, b1, w2, b2, end;
};

Offsets offsets(const ModelShape& s) {
  Offsets o{};
  o.w1 = 0;
  o.b1 = o.w1 + static_cast<Eigen::Index>(s.input_dim) * s.width;
  o.w2 = o.b1 + s.width;
  o.b2 = o.w2 + static_cast<Eigen::Index>(s.width) * s.classes;
  o.end = o.b2 + s.classes;
  return o;
}

void check_theta(const ModelShape& s, const VectorXd& theta) {
  if (theta.size() != s.param_count())
    fail(ErrorCode::kInvalidArgument, "parameter vector has " + std::to_string(theta.size()) +
                                          " entries, shape needs " +
                                          std::to_string(s.param_count()));
}

}  // namespace

Eigen::Map<const MatrixXd> MlpWeights::layer1() const {
  const auto o = offsets(shape);
  return {flat.data() + o.w1, shape.input_dim, shape.width};
}
Eigen::Map<const VectorXd> MlpWeights::bias1() const {
  return {flat.data() + offsets(shape).b1, shape.width};
}
Eigen::Map<const MatrixXd> MlpWeights::layer2() const {
  const auto o = offsets(shape);
  return {flat.data() + o.w2, shape.width, shape.classes};
}
Eigen::Map<const VectorXd> MlpWeights::bias2() const {
  return {flat.data() + offsets(shape).b2, shape.classes};
}

void to_json(Json& j, const MlpWeights& w) {
  j = Json{{"shape", {{"input_dim", w.shape.input_dim},
                      {"width", w.shape.width},
                      {"classes", w.shape.classes},
                      {"activation", "tanh"}}},
           {"params", std::vector<double>(w.flat.data(), w.flat.data() + w.flat.size())}};
}

void from_json(const Json& j, MlpWeights& w) {
  const auto& s = j.at("shape");
  s.at("input_dim").get_to(w.shape.input_dim);
  s.at("width").get_to(w.shape.width);
  s.at("classes").get_to(w.shape.classes);
  const auto params = j.at("params").get<std::vector<double>>();
  w.flat = Eigen::Map<const VectorXd>(params.data(), static_cast<Eigen::Index>(params.size()));
  check_theta(w.shape, w.flat);
}

Dataset Dataset::head(Eigen::Index count) const {
  Dataset d;
  d.inputs = inputs.topRows(count);
  d.labels.assign(labels.begin(), labels.begin() + count);
  d.classes = classes;
  d.variant = variant;
  d.generator_seed = generator_seed;
  return d;
}

Dataset gen_synthetic(std::uint64_t task_seed, int samples, DatasetVariant variant,
                      std::uint64_t stream, const SyntheticTask& task) {
  if (samples < task.classes)
    fail(ErrorCode::kInvalidArgument, "samples (" + std::to_string(samples) +
                                          ") must be at least the class count (" +
                                          std::to_string(task.classes) + ")");

  std::normal_distribution<double> gauss(0.0, 1.0);

  // Component means: random directions scaled to `separation`; row
  // c * components + k belongs to class c.
  std::mt19937_64 mean_rng(task_seed * 0x9E3779B97F4A7C15ull + 0x51ED27);
  const int comps = std::max(1, task.components);
  MatrixXd means(task.classes * comps, task.input_dim);
  for (Eigen::Index r = 0; r < means.rows(); ++r) {
    for (int d = 0; d < task.input_dim; ++d) means(r, d) = gauss(mean_rng);
    means.row(r) *= task.separation / means.row(r).norm();
  }

  std::mt19937_64 rng(task_seed * 0x9E3779B97F4A7C15ull + 0xD1B54A32D192ED03ull * (stream + 1));
  std::uniform_int_distribution<int> pick_class(0, task.classes - 1);
  std::uniform_int_distribution<int> pick_comp(0, comps - 1);

  Dataset data;
  data.classes = task.classes;
  data.variant = variant;
  data.generator_seed = task_seed;
  data.inputs.resize(samples, task.input_dim);
  data.labels.resize(static_cast<std::size_t>(samples));
  for (int i = 0; i < samples; ++i) {
    const int c = pick_class(rng);
    const int row = c * comps + pick_comp(rng);
    data.labels[static_cast<std::size_t>(i)] = c;
    for (int d = 0; d < task.input_dim; ++d)
      data.inputs(i, d) = means(row, d) + task.noise * gauss(rng);
  }

  if (variant == DatasetVariant::kLabelNoise10) {
    const auto flips = static_cast<std::size_t>(std::floor(0.10 * samples));
    std::vector<int> order(static_cast<std::size_t>(samples));
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 noise_rng(rng());
    std::shuffle(order.begin(), order.end(), noise_rng);
    std::uniform_int_distribution<int> offset(1, task.classes - 1);
    for (std::size_t k = 0; k < flips; ++k) {
      auto& label = data.labels[static_cast<std::size_t>(order[k])];
      label = (label + offset(noise_rng)) % task.classes;
    }
  } else if (variant == DatasetVariant::kOodShift) {
    data.inputs.array() += 0.5 * task.noise;
  }
  return data;
}

MlpWeights init_weights(const ModelShape& shape, std::uint64_t seed) {
  if (shape.input_dim < 1 || shape.width < 1 || shape.classes < 2)
    fail(ErrorCode::kInvalidArgument, "invalid model shape");
  MlpWeights w;
  w.shape = shape;
  w.flat.resize(shape.param_count());
  const auto o = offsets(shape);
  std::mt19937_64 rng(seed);
  auto fill = [&](Eigen::Index from, Eigen::Index to, int fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Eigen::Index i = from; i < to; ++i) w.flat[i] = u(rng);
  };
  fill(o.w1, o.w2, shape.input_dim);  // layer1 + bias1
  fill(o.w2, o.end, shape.width);     // layer2 + bias2
  return w;
}

namespace {

// Forward + optional backward on an explicit batch.
double batch_loss(const ModelShape& s, const VectorXd& theta, const MatrixXd& x,
                  std::span<const int> y, VectorXd* grad, double* error) {
  const auto o = offsets(s);
  const Eigen::Map<const MatrixXd> w1(theta.data() + o.w1, s.input_dim, s.width);
  const Eigen::Map<const VectorXd> b1(theta.data() + o.b1, s.width);
  const Eigen::Map<const MatrixXd> w2(theta.data() + o.w2, s.width, s.classes);
  const Eigen::Map<const VectorXd> b2(theta.data() + o.b2, s.classes);

  const Eigen::Index m = x.rows();
  MatrixXd hidden = ((x * w1).rowwise() + b1.transpose()).array().tanh().matrix();
  MatrixXd z = (hidden * w2).rowwise() + b2.transpose();

  // Row-wise log-softmax.
  const VectorXd zmax = z.rowwise().maxCoeff();
  MatrixXd shifted = z.colwise() - zmax;
  MatrixXd p = shifted.array().exp().matrix();
  const VectorXd norm = p.rowwise().sum();
  double loss = 0.0;
  int wrong = 0;
  for (Eigen::Index i = 0; i < m; ++i) {
    const int label = y[static_cast<std::size_t>(i)];
    loss += std::log(norm[i]) - shifted(i, label);
    Eigen::Index arg = 0;
    z.row(i).maxCoeff(&arg);
    if (arg != label) ++wrong;
  }
  loss /= static_cast<double>(m);
  if (error) *error = static_cast<double>(wrong) / static_cast<double>(m);
  if (!grad) return loss;

  p.array().colwise() /= norm.array();
  for (Eigen::Index i = 0; i < m; ++i) p(i, y[static_cast<std::size_t>(i)]) -= 1.0;
  p /= static_cast<double>(m);  // dL/dz

  grad->resize(s.param_count());
  Eigen::Map<MatrixXd> gw1(grad->data() + o.w1, s.input_dim, s.width);
  Eigen::Map<VectorXd> gb1(grad->data() + o.b1, s.width);
  Eigen::Map<MatrixXd> gw2(grad->data() + o.w2, s.width, s.classes);
  Eigen::Map<VectorXd> gb2(grad->data() + o.b2, s.classes);
  gw2.noalias() = hidden.transpose() * p;
  gb2 = p.colwise().sum().transpose();
  MatrixXd dh = (p * w2.transpose()).array() * (1.0 - hidden.array().square());
  gw1.noalias() = x.transpose() * dh;
  gb1 = dh.colwise().sum().transpose();
  return loss;
}

}  // namespace

double loss_and_grad(const ModelShape& shape, const VectorXd& theta, const Dataset& data,
                     VectorXd* grad, std::span<const int> rows) {
  check_theta(shape, theta);
  if (rows.empty()) return batch_loss(shape, theta, data.inputs, data.labels, grad, nullptr);
  MatrixXd x(static_cast<Eigen::Index>(rows.size()), data.inputs.cols());
  std::vector<int> y(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    x.row(static_cast<Eigen::Index>(i)) = data.inputs.row(rows[i]);
    y[i] = data.labels[static_cast<std::size_t>(rows[i])];
  }
  return batch_loss(shape, theta, x, y, grad, nullptr);
}

LossEval evaluate(const ModelShape& shape, const VectorXd& theta, const Dataset& data) {
  check_theta(shape, theta);
  LossEval e;
  e.loss = batch_loss(shape, theta, data.inputs, data.labels, nullptr, &e.error);
  return e;
}

MatrixXd logits(const ModelShape& s, const VectorXd& theta, const MatrixXd& inputs) {
  check_theta(s, theta);
  const auto o = offsets(s);
  const Eigen::Map<const MatrixXd> w1(theta.data() + o.w1, s.input_dim, s.width);
  const Eigen::Map<const VectorXd> b1(theta.data() + o.b1, s.width);
  const Eigen::Map<const MatrixXd> w2(theta.data() + o.w2, s.width, s.classes);
  const Eigen::Map<const VectorXd> b2(theta.data() + o.b2, s.classes);
  MatrixXd hidden = ((inputs * w1).rowwise() + b1.transpose()).array().tanh().matrix();
  return (hidden * w2).rowwise() + b2.transpose();
}

MlpWeights train(const ModelShape& shape, const Dataset& data, const TrainOptions& opt) {
  const auto n = static_cast<int>(data.size());
  if (opt.batch_size < 1 || opt.batch_size > n)
    fail(ErrorCode::kInvalidArgument, "batch size " + std::to_string(opt.batch_size) +
                                          " must lie in [1, " + std::to_string(n) + "]");
  MlpWeights w = init_weights(shape, opt.seed);
  std::mt19937_64 rng(opt.seed ^ 0xA0761D6478BD642Full);
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  VectorXd grad;
  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (int start = 0; start < n; start += opt.batch_size) {
      const int len = std::min(opt.batch_size, n - start);
      const std::span<const int> rows(order.data() + start, static_cast<std::size_t>(len));
      const double loss = loss_and_grad(shape, w.flat, data, &grad, rows);
      if (!std::isfinite(loss))
        fail(ErrorCode::kDiverged, "training diverged at epoch " + std::to_string(epoch) +
                                       " (width " + std::to_string(shape.width) + ", batch " +
                                       std::to_string(opt.batch_size) + ")");
      w.flat.noalias() -= opt.lr * grad;
    }
  }
  return w;
}

VectorXd hvp_fd(const GradientFn& grad, const VectorXd& theta, const VectorXd& v, double eps) {
  if (v.size() == 0) fail(ErrorCode::kInvalidArgument, "hvp: zero-length direction");
  if (v.size() != theta.size())
    fail(ErrorCode::kInvalidArgument, "hvp: direction length does not match parameter count");
  const double h = eps * (1.0 + theta.norm()) / std::max(v.norm(), eps);
  const VectorXd plus = grad(theta + h * v);
  const VectorXd minus = grad(theta - h * v);
  return (plus - minus) / (2.0 * h);
}

GradientFn full_batch_gradient(const ModelShape& shape, const Dataset& data) {
  return [shape, &data](const VectorXd& theta) {
    VectorXd g;
    loss_and_grad(shape, theta, data, &g);
    return g;
  };
}

VectorXd hvp(const MlpWeights& w, const Dataset& data, const VectorXd& v) {
  if (v.size() != w.shape.param_count() && v.size() != 0)
    fail(ErrorCode::kInvalidArgument, "hvp: |v| must equal the parameter count");
  return hvp_fd(full_batch_gradient(w.shape, data), w.flat, v);
}

}  // namespace mdiag::nn
