#pragma once

// Diagnosis classifiers: the fixed-hierarchy MD tree with per-node threshold
// search, a greedy Gini CART baseline, and the random / ground-truth
// reference diagnoses.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "mdiag/domain.hpp"
#include "mdiag/labeling.hpp"

namespace mdiag::diagnosis {

using labeling::DiagnosisSample;

enum class Feature {
  kTrainError,
  kValError,
  kTrainLoss,
  kValLoss,
  kConnectivity,    // percentage points, <= 0
  kSharpnessLog10,  // log10 of the Hessian trace
  kSimilarity,
  kWidth,
  kBatch,
  kFraction,
};

std::string_view to_string(Feature f);
Feature parse_feature(std::string_view s);

// nullopt when the underlying metric is unavailable.
std::optional<double> feature_value(const ConfigPoint& config, const MetricVector& metrics,
                                    Feature f);
inline std::optional<double> feature_value(const DiagnosisSample& s, Feature f) {
  return feature_value(s.config, s.metrics, f);
}

enum class FeaturePolicy { kLossLandscape, kValidation, kHyperparameter, kCombined };

std::string_view to_string(FeaturePolicy p);
FeaturePolicy parse_policy(std::string_view s);

// Hyperparameter features exclude every knob the question asks about.
std::vector<Feature> policy_features(FeaturePolicy p, Question q);

// Samples with every listed feature available; the rest are dropped.
std::vector<DiagnosisSample> complete_samples(std::span<const DiagnosisSample> samples,
                                              std::span<const Feature> features);

// ------------------------------------------------------------------ MD tree

enum class MdVariant { kSharpness, kSimilarity };
enum class FitMode { kBrent, kExactScan };

std::string_view to_string(MdVariant v);
std::string_view to_string(FitMode m);
FitMode parse_fit_mode(std::string_view s);

struct SearchTriple {
  double initial = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  bool operator==(const SearchTriple&) const = default;
};

// Default (initial, lower, upper) search triples. Sharpness starts at 5 for Q1 and 7 otherwise.
SearchTriple default_search(Feature f, Question q);

// A child is either another node or a leaf (regime).
struct ChildRef {
  bool is_leaf = true;
  int index = 0;
  bool operator==(const ChildRef&) const = default;
};

struct MdNode {
  Feature feature = Feature::kTrainError;
  double threshold = 0.0;
  SearchTriple search;
  ChildRef left;   // feature < threshold
  ChildRef right;  // feature >= threshold
  bool degenerate = false;
  bool operator==(const MdNode&) const = default;
};

struct Leaf {
  int regime = 0;  // 1-based, left to right
  int label = 0;
  std::array<int, 2> counts{0, 0};
  bool operator==(const Leaf&) const = default;
};

struct MdTreeModel {
  Question question = Question::kQ1;
  MdVariant variant = MdVariant::kSharpness;
  FitMode fit_mode = FitMode::kBrent;
  std::vector<MdNode> nodes;  // nodes[0] is the root
  std::vector<Leaf> leaves;
  bool degenerate = false;  // constant majority predictor
  double train_accuracy = 0.0;
  std::size_t train_samples = 0;

  std::vector<Feature> features() const;
  bool operator==(const MdTreeModel&) const = default;
};

// Unfitted hierarchy: root train_error; interpolating (left) child splits
// connectivity, whose poor-connectivity child splits the depth-2 metric;
// non-interpolating (right) child splits connectivity. Five regimes.
MdTreeModel md_hierarchy(Question q, MdVariant variant);

struct MdFitOptions {
  FitMode fit_mode = FitMode::kBrent;
  // Overrides the default search triple of a feature, e.g. to re-centre the
  // sharpness range for small networks.
  std::vector<std::pair<Feature, SearchTriple>> search_overrides;
  double brent_xtol = 1e-5;
  int brent_max_iter = 500;
};

// Fits thresholds top-down (root, then depth 1, then depth 2). Each node
// maximises whole-training-set accuracy of the partial tree, with majority
// labels at every current leaf: bounded Brent from the initial value, or an
// exhaustive scan of in-bound midpoints (exact_scan). Leaves then take their
// training majority.
MdTreeModel mdtree_fit(std::span<const DiagnosisSample> samples, Question q, MdVariant variant,
                       const MdFitOptions& options = {}, std::uint64_t seed = 0);

struct Prediction {
  int label = 0;
  int regime = 0;
  bool operator==(const Prediction&) const = default;
};

// Throws Error(kInvalidArgument) naming the first missing feature.
Prediction mdtree_predict(const MdTreeModel& model, const ConfigPoint& config,
                          const MetricVector& metrics);
inline Prediction mdtree_predict(const MdTreeModel& model, const DiagnosisSample& s) {
  return mdtree_predict(model, s.config, s.metrics);
}

double accuracy(const MdTreeModel& model, std::span<const DiagnosisSample> samples);

// Bounded Brent minimisation of f on [lower, upper], first evaluated at
// `initial`.
struct ScalarMin {
  double x = 0.0;
  double fx = 0.0;
  int evaluations = 0;
};
template <class F>
ScalarMin brent_minimize(F&& f, double lower, double upper, double initial, double xtol,
                         int max_iter);

// -------------------------------------------------------------------- CART

struct CartNode {
  int feature = -1;  // index into CartModel::features; -1 for leaves
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  int label = 0;
  std::array<int, 2> counts{0, 0};
  int leaf_id = 0;  // 1-based for leaves, 0 for internal nodes
  bool operator==(const CartNode&) const = default;
};

struct CartModel {
  Question question = Question::kQ1;
  FeaturePolicy policy = FeaturePolicy::kValidation;
  std::vector<Feature> features;
  std::vector<CartNode> nodes;  // nodes[0] is the root
  double train_accuracy = 0.0;
  std::size_t train_samples = 0;
  bool operator==(const CartModel&) const = default;
};

struct CartOptions {
  int max_depth = 4;
  int min_samples_split = 2;
};

// Greedy CART on Gini impurity with best splits. Ties in impurity go to the
// lowest feature index, then the lowest threshold.
CartModel cart_fit(std::span<const DiagnosisSample> samples, FeaturePolicy policy, Question q,
                   std::uint64_t seed = 0, const CartOptions& options = {});
CartModel cart_fit(std::span<const DiagnosisSample> samples, std::span<const Feature> features,
                   Question q, std::uint64_t seed = 0, const CartOptions& options = {});

Prediction cart_predict(const CartModel& model, const ConfigPoint& config,
                        const MetricVector& metrics);
inline Prediction cart_predict(const CartModel& model, const DiagnosisSample& s) {
  return cart_predict(model, s.config, s.metrics);
}

// ------------------------------------------------------- reference methods

// Uniform coin per sample, reproducible per seed.
class RandomDiagnosis {
 public:
  explicit RandomDiagnosis(std::uint64_t seed);
  int operator()();

 private:
  std::uint64_t state_;
};

inline int optimal_diagnosis(const DiagnosisSample& s) { return s.label; }

// Majority label with the shared tie rule: larger total count wins, then 0.
int majority_label(const std::array<int, 2>& counts, const std::array<int, 2>& totals);

// --------------------------------------------------------- serialisation

using FittedModel = std::variant<MdTreeModel, CartModel>;

Json model_to_json(const FittedModel& m);
FittedModel model_from_json(const Json& j);
Prediction predict(const FittedModel& m, const ConfigPoint& config, const MetricVector& metrics);
std::vector<Feature> model_features(const FittedModel& m);

}  // namespace mdiag::diagnosis

#include "mdiag/brent.inl"
