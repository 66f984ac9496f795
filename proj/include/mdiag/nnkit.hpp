#pragma once

// One-hidden-layer tanh MLP with softmax cross-entropy: exact gradients,
// finite-difference Hessian-vector products and plain mini-batch SGD.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "mdiag/domain.hpp"

namespace mdiag::nn {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct ModelShape {
  int input_dim = 8;
  int width = 16;
  int classes = 4;

  Eigen::Index param_count() const {
    return static_cast<Eigen::Index>(input_dim) * width + width +
           static_cast<Eigen::Index>(width) * classes + classes;
  }
  bool operator==(const ModelShape&) const = default;
};

// Parameters stored flat: layer1 (input_dim x width, column-major), bias1,
// layer2 (width x classes, column-major), bias2.
struct MlpWeights {
  ModelShape shape;
  VectorXd flat;

  Eigen::Map<const MatrixXd> layer1() const;
  Eigen::Map<const VectorXd> bias1() const;
  Eigen::Map<const MatrixXd> layer2() const;
  Eigen::Map<const VectorXd> bias2() const;

  bool operator==(const MlpWeights& o) const { return shape == o.shape && flat == o.flat; }
};

void to_json(Json& j, const MlpWeights& w);
void from_json(const Json& j, MlpWeights& w);

struct Dataset {
  MatrixXd inputs;  // samples x input_dim
  std::vector<int> labels;
  int classes = 4;
  DatasetVariant variant = DatasetVariant::kClean;
  std::uint64_t generator_seed = 0;

  Eigen::Index size() const { return inputs.rows(); }
  // Rows [0, count) as a new dataset; subsets at different fractions nest.
  Dataset head(Eigen::Index count) const;
};

using SyntheticTask = TaskGeometry;

// `stream` selects an independent sample draw for the same task (0 = training
// pool, 1 = validation set). label_noise_10pct flips exactly floor(0.1 *
// samples) labels to a different class; ood_shift translates inputs.
Dataset gen_synthetic(std::uint64_t task_seed, int samples, DatasetVariant variant,
                      std::uint64_t stream = 0, const SyntheticTask& task = {});

MlpWeights init_weights(const ModelShape& shape, std::uint64_t seed);

struct LossEval {
  double loss = 0.0;
  double error = 0.0;
};

// Mean cross-entropy (and its gradient when `grad` is non-null) over `rows`
// of the dataset, or over all rows when `rows` is empty.
double loss_and_grad(const ModelShape& shape, const VectorXd& theta, const Dataset& data,
                     VectorXd* grad, std::span<const int> rows = {});

LossEval evaluate(const ModelShape& shape, const VectorXd& theta, const Dataset& data);
inline LossEval evaluate(const MlpWeights& w, const Dataset& data) {
  return evaluate(w.shape, w.flat, data);
}

// Pre-softmax outputs, samples x classes.
MatrixXd logits(const ModelShape& shape, const VectorXd& theta, const MatrixXd& inputs);

struct TrainOptions {
  int batch_size = 32;
  int epochs = 100;
  double lr = 0.1;
  std::uint64_t seed = 0;
};

// Plain SGD over reshuffled mini-batches. Throws Error(kDiverged) on a
// non-finite loss.
MlpWeights train(const ModelShape& shape, const Dataset& data, const TrainOptions& opt);

using GradientFn = std::function<VectorXd(const VectorXd&)>;

// Central difference of gradients along v:
//   (g(theta + h v) - g(theta - h v)) / 2h,  h = eps (1 + |theta|) / max(|v|, eps).
VectorXd hvp_fd(const GradientFn& grad, const VectorXd& theta, const VectorXd& v,
                double eps = 1e-4);

// Hessian-vector product of the full-batch training loss.
VectorXd hvp(const MlpWeights& w, const Dataset& data, const VectorXd& v);

GradientFn full_batch_gradient(const ModelShape& shape, const Dataset& data);

}  // namespace mdiag::nn
