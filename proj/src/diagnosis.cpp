#include "mdiag/diagnosis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "mdiag/error.hpp"

namespace mdiag::diagnosis {

std::string_view to_string(Feature f) {
  switch (f) {
    case Feature::kTrainError: return "train_error";
    case Feature::kValError: return "val_error";
    case Feature::kTrainLoss: return "train_loss";
    case Feature::kValLoss: return "val_loss";
    case Feature::kConnectivity: return "connectivity_pct";
    case Feature::kSharpnessLog10: return "sharpness_log10";
    case Feature::kSimilarity: return "similarity";
    case Feature::kWidth: return "width_p";
    case Feature::kBatch: return "batch_size_t";
    case Feature::kFraction: return "data_fraction_n";
  }
  return "";
}

Feature parse_feature(std::string_view s) {
  for (auto f : {Feature::kTrainError, Feature::kValError, Feature::kTrainLoss, Feature::kValLoss,
                 Feature::kConnectivity, Feature::kSharpnessLog10, Feature::kSimilarity,
                 Feature::kWidth, Feature::kBatch, Feature::kFraction})
    if (to_string(f) == s) return f;
  fail(ErrorCode::kSchema, "unknown feature '" + std::string(s) + "'");
}

std::optional<double> feature_value(const ConfigPoint& c, const MetricVector& m, Feature f) {
  switch (f) {
    case Feature::kTrainError: return m.train_error;
    case Feature::kValError: return m.val_error;
    case Feature::kTrainLoss: return m.train_loss;
    case Feature::kValLoss: return m.val_loss;
    case Feature::kConnectivity: return m.connectivity_pct;
    case Feature::kSharpnessLog10:
      if (m.sharpness_trace && *m.sharpness_trace > 0.0) return std::log10(*m.sharpness_trace);
      return std::nullopt;
    case Feature::kSimilarity: return m.similarity;
    case Feature::kWidth: return static_cast<double>(c.width_p);
    case Feature::kBatch: return static_cast<double>(c.batch_size_t);
    case Feature::kFraction: return c.data_fraction_n;
  }
  return std::nullopt;
}

std::string_view to_string(FeaturePolicy p) {
  switch (p) {
    case FeaturePolicy::kLossLandscape: return "landscape";
    case FeaturePolicy::kValidation: return "validation";
    case FeaturePolicy::kHyperparameter: return "hyper";
    case FeaturePolicy::kCombined: return "combined";
  }
  return "";
}

FeaturePolicy parse_policy(std::string_view s) {
  if (s == "landscape" || s == "loss_landscape") return FeaturePolicy::kLossLandscape;
  if (s == "validation") return FeaturePolicy::kValidation;
  if (s == "hyper" || s == "hyperparameter") return FeaturePolicy::kHyperparameter;
  if (s == "combined") return FeaturePolicy::kCombined;
  fail(ErrorCode::kInvalidArgument, "unknown feature policy '" + std::string(s) + "'");
}

std::vector<Feature> policy_features(FeaturePolicy p, Question q) {
  std::vector<Feature> hyper;
  switch (q) {
    case Question::kQ1: hyper = {Feature::kWidth, Feature::kFraction}; break;
    case Question::kQ2: hyper = {Feature::kFraction}; break;
    case Question::kQ2N: hyper = {Feature::kWidth}; break;
  }
  const std::vector<Feature> validation{Feature::kValError, Feature::kTrainError,
                                        Feature::kValLoss, Feature::kTrainLoss};
  switch (p) {
    case FeaturePolicy::kLossLandscape:
      return {Feature::kTrainError, Feature::kConnectivity, Feature::kSharpnessLog10,
              Feature::kSimilarity};
    case FeaturePolicy::kValidation: return validation;
    case FeaturePolicy::kHyperparameter: return hyper;
    case FeaturePolicy::kCombined: {
      auto all = validation;
      all.insert(all.end(), hyper.begin(), hyper.end());
      return all;
    }
  }
  return {};
}

std::vector<DiagnosisSample> complete_samples(std::span<const DiagnosisSample> samples,
                                              std::span<const Feature> features) {
  std::vector<DiagnosisSample> out;
  for (const auto& s : samples)
    if (std::all_of(features.begin(), features.end(),
                    [&](Feature f) { return feature_value(s, f).has_value(); }))
      out.push_back(s);
  return out;
}

int majority_label(const std::array<int, 2>& counts, const std::array<int, 2>& totals) {
  if (counts[1] != counts[0]) return counts[1] > counts[0] ? 1 : 0;
  if (totals[1] != totals[0]) return totals[1] > totals[0] ? 1 : 0;
  return 0;
}

// ------------------------------------------------------------------ MD tree

std::string_view to_string(MdVariant v) {
  return v == MdVariant::kSharpness ? "sharpness" : "similarity";
}

std::string_view to_string(FitMode m) { return m == FitMode::kBrent ? "brent" : "exact_scan"; }

FitMode parse_fit_mode(std::string_view s) {
  if (s == "brent") return FitMode::kBrent;
  if (s == "exact" || s == "exact_scan") return FitMode::kExactScan;
  fail(ErrorCode::kInvalidArgument, "unknown fit mode '" + std::string(s) + "'");
}

SearchTriple default_search(Feature f, Question q) {
  switch (f) {
    case Feature::kTrainError: return {0.5, 0.0, 1.0};
    case Feature::kConnectivity: return {-10.0, -30.0, 0.0};
    case Feature::kSharpnessLog10: return {q == Question::kQ1 ? 5.0 : 7.0, 4.0, 9.0};
    case Feature::kSimilarity: return {0.5, 0.2, 0.8};
    default: fail(ErrorCode::kInvalidArgument, "no MD tree search range for feature '" +
                                                   std::string(to_string(f)) + "'");
  }
}

std::vector<Feature> MdTreeModel::features() const {
  std::vector<Feature> out;
  for (const auto& n : nodes)
    if (std::find(out.begin(), out.end(), n.feature) == out.end()) out.push_back(n.feature);
  return out;
}

MdTreeModel md_hierarchy(Question q, MdVariant variant) {
  const Feature depth2 =
      variant == MdVariant::kSimilarity ? Feature::kSimilarity : Feature::kSharpnessLog10;
  auto node = [&](Feature f, ChildRef l, ChildRef r) {
    const auto s = default_search(f, q);
    return MdNode{f, s.initial, s, l, r, false};
  };
  MdTreeModel m;
  m.question = q;
  m.variant = variant;
  // Node order is fit order; leaves are regimes 1..5 left to right.
  m.nodes = {
      node(Feature::kTrainError, {false, 1}, {false, 2}),
      node(Feature::kConnectivity, {false, 3}, {true, 2}),
      node(Feature::kConnectivity, {true, 3}, {true, 4}),
      node(depth2, {true, 0}, {true, 1}),
  };
  for (int r = 0; r < 5; ++r) m.leaves.push_back({r + 1, 0, {0, 0}});
  return m;
}

namespace {

// Walks the tree; nodes with index >= fitted_nodes act as leaves. Returns the
// terminal as a ChildRef (is_leaf = false means "stopped at unfitted node").
ChildRef route(const MdTreeModel& m, const ConfigPoint& c, const MetricVector& metrics,
               std::size_t fitted_nodes) {
  ChildRef at{false, 0};
  while (!at.is_leaf && static_cast<std::size_t>(at.index) < fitted_nodes) {
    const auto& n = m.nodes[static_cast<std::size_t>(at.index)];
    const auto v = feature_value(c, metrics, n.feature);
    if (!v)
      fail(ErrorCode::kInvalidArgument, "missing feature '" + std::string(to_string(n.feature)) + "'");
    at = *v >= n.threshold ? n.right : n.left;
  }
  return at;
}

struct NodeProblem {
  std::vector<double> values;
  std::vector<int> labels;

  // Correctly classified samples at this node when split at tau, with majority
  // labels on both sides.
  int correct(double tau) const {
    std::array<int, 2> left{0, 0}, right{0, 0};
    for (std::size_t i = 0; i < values.size(); ++i)
      ++(values[i] >= tau ? right : left)[static_cast<std::size_t>(labels[i])];
    return std::max(left[0], left[1]) + std::max(right[0], right[1]);
  }
};

// Bounds plus midpoints of consecutive distinct values inside the bounds.
std::vector<double> candidates(const NodeProblem& p, const SearchTriple& s) {
  std::vector<double> v = p.values;
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  std::vector<double> out{s.lower};
  for (std::size_t i = 0; i + 1 < v.size(); ++i) {
    const double mid = 0.5 * (v[i] + v[i + 1]);
    if (mid > s.lower && mid < s.upper) out.push_back(mid);
  }
  out.push_back(s.upper);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

// Ties go to the candidate closest to the initial value, then the smaller one.
double exact_scan(const NodeProblem& p, const SearchTriple& s) {
  double best = s.initial;
  int best_correct = -1;
  for (double c : candidates(p, s)) {
    const int k = p.correct(c);
    const bool closer = std::abs(c - s.initial) < std::abs(best - s.initial);
    if (k > best_correct || (k == best_correct && closer)) {
      best = c;
      best_correct = k;
    }
  }
  return best;
}

double brent_with_refinement(const NodeProblem& p, const SearchTriple& s,
                             const MdFitOptions& opt) {
  const double n = static_cast<double>(p.values.size());
  const auto found = brent_minimize([&](double tau) { return -p.correct(tau) / n; }, s.lower,
                                    s.upper, s.initial, opt.brent_xtol, opt.brent_max_iter);

  // Piecewise-constant objective: climb over neighbouring midpoints (crossing
  // equal-accuracy plateaus) from the point Brent settled on.
  std::vector<double> cand = candidates(p, s);
  cand.push_back(found.x);
  std::sort(cand.begin(), cand.end());
  cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
  std::vector<int> score(cand.size());
  for (std::size_t i = 0; i < cand.size(); ++i) score[i] = p.correct(cand[i]);

  auto best = static_cast<std::ptrdiff_t>(
      std::lower_bound(cand.begin(), cand.end(), found.x) - cand.begin());
  const auto size = static_cast<std::ptrdiff_t>(cand.size());
  for (bool improved = true; improved;) {
    improved = false;
    for (std::ptrdiff_t dir : {-1, 1}) {
      std::ptrdiff_t j = best + dir;
      while (j >= 0 && j < size && score[static_cast<std::size_t>(j)] == score[static_cast<std::size_t>(best)])
        j += dir;
      if (j >= 0 && j < size && score[static_cast<std::size_t>(j)] > score[static_cast<std::size_t>(best)]) {
        best = j;
        improved = true;
        break;
      }
    }
  }
  // Within the final plateau, same tie rule as exact_scan: closest to the
  // initial value, then smaller; Brent's raw point only if it stands alone.
  std::ptrdiff_t lo = best, hi = best;
  const int top = score[static_cast<std::size_t>(best)];
  while (lo > 0 && score[static_cast<std::size_t>(lo - 1)] == top) --lo;
  while (hi + 1 < size && score[static_cast<std::size_t>(hi + 1)] == top) ++hi;
  double pick = cand[static_cast<std::size_t>(best)];
  bool have = false;
  for (std::ptrdiff_t i = lo; i <= hi; ++i) {
    const double c = cand[static_cast<std::size_t>(i)];
    if (c == found.x && hi > lo) continue;
    if (!have || std::abs(c - s.initial) < std::abs(pick - s.initial)) {
      pick = c;
      have = true;
    }
  }
  return pick;
}

}  // namespace

MdTreeModel mdtree_fit(std::span<const DiagnosisSample> samples_in, Question q, MdVariant variant,
                       const MdFitOptions& options, std::uint64_t /*seed*/) {
  MdTreeModel m = md_hierarchy(q, variant);
  m.fit_mode = options.fit_mode;
  for (auto& n : m.nodes)
    for (const auto& [f, triple] : options.search_overrides)
      if (n.feature == f) {
        n.search = triple;
        n.threshold = triple.initial;
      }

  const auto features = m.features();
  const auto samples = complete_samples(samples_in, features);
  m.train_samples = samples.size();
  std::array<int, 2> totals{0, 0};
  for (const auto& s : samples) ++totals[static_cast<std::size_t>(s.label)];

  m.degenerate = samples.size() < 2 || totals[0] == 0 || totals[1] == 0;
  if (!m.degenerate) {
    for (std::size_t k = 0; k < m.nodes.size(); ++k) {
      NodeProblem p;
      for (const auto& s : samples) {
        const auto at = route(m, s.config, s.metrics, k);
        if (!at.is_leaf && static_cast<std::size_t>(at.index) == k) {
          p.values.push_back(*feature_value(s, m.nodes[k].feature));
          p.labels.push_back(s.label);
        }
      }
      auto& node = m.nodes[k];
      const bool constant =
          p.values.empty() ||
          std::all_of(p.values.begin(), p.values.end(), [&](double v) { return v == p.values[0]; });
      if (constant) {
        node.threshold = node.search.initial;
        node.degenerate = true;
        continue;
      }
      node.threshold = options.fit_mode == FitMode::kExactScan
                           ? exact_scan(p, node.search)
                           : brent_with_refinement(p, node.search, options);
    }
  }

  for (auto& leaf : m.leaves) leaf.counts = {0, 0};
  for (const auto& s : samples) {
    const auto at = route(m, s.config, s.metrics, m.nodes.size());
    ++m.leaves[static_cast<std::size_t>(at.index)].counts[static_cast<std::size_t>(s.label)];
  }
  const int overall = majority_label(totals, totals);
  for (auto& leaf : m.leaves)
    leaf.label = m.degenerate ? overall : majority_label(leaf.counts, totals);
  m.train_accuracy = samples.empty() ? 0.0 : accuracy(m, samples);
  return m;
}

Prediction mdtree_predict(const MdTreeModel& m, const ConfigPoint& config,
                          const MetricVector& metrics) {
  const auto at = route(m, config, metrics, m.nodes.size());
  const auto& leaf = m.leaves[static_cast<std::size_t>(at.index)];
  return {leaf.label, leaf.regime};
}

double accuracy(const MdTreeModel& m, std::span<const DiagnosisSample> samples) {
  if (samples.empty()) return 0.0;
  std::size_t ok = 0;
  for (const auto& s : samples) ok += mdtree_predict(m, s).label == s.label;
  return static_cast<double>(ok) / static_cast<double>(samples.size());
}

// -------------------------------------------------------------------- CART

namespace {

struct CartBuilder {
  const std::vector<std::vector<double>>& x;  // [sample][feature]
  const std::vector<int>& y;
  std::array<int, 2> totals;
  CartOptions opt;
  std::vector<CartNode> nodes;

  int build(std::vector<int> idx, int depth) {
    const int id = static_cast<int>(nodes.size());
    nodes.emplace_back();
    std::array<int, 2> counts{0, 0};
    for (int i : idx) ++counts[static_cast<std::size_t>(y[static_cast<std::size_t>(i)])];
    nodes[static_cast<std::size_t>(id)].counts = counts;
    nodes[static_cast<std::size_t>(id)].label = majority_label(counts, totals);

    const int n = static_cast<int>(idx.size());
    if (depth >= opt.max_depth || n < opt.min_samples_split || counts[0] == 0 || counts[1] == 0)
      return id;

    // Weighted Gini up to a constant factor: sum over sides of c0 * c1 / n.
    double best_imp = std::numeric_limits<double>::infinity();
    int best_f = -1;
    double best_thr = 0.0;
    const auto nf = x.empty() ? 0 : x.front().size();
    for (std::size_t f = 0; f < nf; ++f) {
      std::vector<int> order = idx;
      std::sort(order.begin(), order.end(), [&](int a, int b) {
        return x[static_cast<std::size_t>(a)][f] < x[static_cast<std::size_t>(b)][f];
      });
      std::array<int, 2> left{0, 0};
      for (int k = 0; k + 1 < n; ++k) {
        ++left[static_cast<std::size_t>(y[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])])];
        const double v = x[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])][f];
        const double w = x[static_cast<std::size_t>(order[static_cast<std::size_t>(k + 1)])][f];
        if (!(v < w)) continue;
        const std::array<int, 2> right{counts[0] - left[0], counts[1] - left[1]};
        const double nl = k + 1, nr = n - k - 1;
        const double imp = left[0] * static_cast<double>(left[1]) / nl +
                           right[0] * static_cast<double>(right[1]) / nr;
        if (imp < best_imp - 1e-12 * std::max(1.0, best_imp == std::numeric_limits<double>::infinity() ? 1.0 : best_imp)) {
          best_imp = imp;
          best_f = static_cast<int>(f);
          best_thr = 0.5 * (v + w);
        }
      }
    }
    if (best_f < 0) return id;

    std::vector<int> li, ri;
    for (int i : idx)
      (x[static_cast<std::size_t>(i)][static_cast<std::size_t>(best_f)] >= best_thr ? ri : li).push_back(i);
    const int l = build(std::move(li), depth + 1);
    const int r = build(std::move(ri), depth + 1);
    auto& node = nodes[static_cast<std::size_t>(id)];
    node.feature = best_f;
    node.threshold = best_thr;
    node.left = l;
    node.right = r;
    return id;
  }
};

}  // namespace

CartModel cart_fit(std::span<const DiagnosisSample> samples, FeaturePolicy policy, Question q,
                   std::uint64_t seed, const CartOptions& options) {
  const auto features = policy_features(policy, q);
  auto m = cart_fit(samples, features, q, seed, options);
  m.policy = policy;
  return m;
}

CartModel cart_fit(std::span<const DiagnosisSample> samples_in, std::span<const Feature> features,
                   Question q, std::uint64_t /*seed*/, const CartOptions& options) {
  CartModel m;
  m.question = q;
  m.features.assign(features.begin(), features.end());
  const auto samples = complete_samples(samples_in, features);
  m.train_samples = samples.size();

  std::vector<std::vector<double>> x;
  std::vector<int> y;
  std::array<int, 2> totals{0, 0};
  for (const auto& s : samples) {
    std::vector<double> row;
    for (auto f : features) row.push_back(*feature_value(s, f));
    x.push_back(std::move(row));
    y.push_back(s.label);
    ++totals[static_cast<std::size_t>(s.label)];
  }
  CartBuilder b{x, y, totals, options, {}};
  std::vector<int> idx(samples.size());
  std::iota(idx.begin(), idx.end(), 0);
  b.build(std::move(idx), 0);
  m.nodes = std::move(b.nodes);

  // Leaves numbered left to right.
  int next = 1;
  auto number = [&](auto&& self, int id) -> void {
    auto& n = m.nodes[static_cast<std::size_t>(id)];
    if (n.feature < 0) {
      n.leaf_id = next++;
      return;
    }
    self(self, n.left);
    self(self, n.right);
  };
  number(number, 0);

  std::size_t ok = 0;
  for (const auto& s : samples) ok += cart_predict(m, s).label == s.label;
  m.train_accuracy = samples.empty() ? 0.0 : static_cast<double>(ok) / static_cast<double>(samples.size());
  return m;
}

Prediction cart_predict(const CartModel& m, const ConfigPoint& config, const MetricVector& metrics) {
  int id = 0;
  for (;;) {
    const auto& n = m.nodes[static_cast<std::size_t>(id)];
    if (n.feature < 0) return {n.label, n.leaf_id};
    const Feature f = m.features[static_cast<std::size_t>(n.feature)];
    const auto v = feature_value(config, metrics, f);
    if (!v) fail(ErrorCode::kInvalidArgument, "missing feature '" + std::string(to_string(f)) + "'");
    id = *v >= n.threshold ? n.right : n.left;
  }
}

// ------------------------------------------------------- reference methods

RandomDiagnosis::RandomDiagnosis(std::uint64_t seed) : state_(seed) {}

int RandomDiagnosis::operator()() {
  // splitmix64 step; the top bit is the coin.
  std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  z ^= z >> 31;
  return static_cast<int>(z >> 63);
}

// --------------------------------------------------------- serialisation

namespace {

Json child_json(const ChildRef& c) {
  return c.is_leaf ? Json{{"leaf", c.index}} : Json{{"node", c.index}};
}

ChildRef child_from(const Json& j) {
  if (j.contains("leaf")) return {true, j.at("leaf").get<int>()};
  return {false, j.at("node").get<int>()};
}

MdVariant parse_variant_name(std::string_view s) {
  if (s == "sharpness") return MdVariant::kSharpness;
  if (s == "similarity") return MdVariant::kSimilarity;
  fail(ErrorCode::kSchema, "unknown MD tree variant '" + std::string(s) + "'");
}

void check_md(const MdTreeModel& m) {
  auto valid = [&](const ChildRef& c) {
    return c.is_leaf ? c.index >= 0 && static_cast<std::size_t>(c.index) < m.leaves.size()
                     : c.index > 0 && static_cast<std::size_t>(c.index) < m.nodes.size();
  };
  if (m.nodes.empty() || m.leaves.empty()) fail(ErrorCode::kSchema, "MD tree has no nodes");
  for (const auto& n : m.nodes)
    if (!valid(n.left) || !valid(n.right)) fail(ErrorCode::kSchema, "MD tree child out of range");
}

void check_cart(const CartModel& m) {
  if (m.nodes.empty()) fail(ErrorCode::kSchema, "CART model has no nodes");
  const int size = static_cast<int>(m.nodes.size());
  for (int i = 0; i < size; ++i) {
    const auto& n = m.nodes[static_cast<std::size_t>(i)];
    if (n.feature < 0) continue;
    if (static_cast<std::size_t>(n.feature) >= m.features.size() || n.left <= i || n.right <= i ||
        n.left >= size || n.right >= size)
      fail(ErrorCode::kSchema, "CART node " + std::to_string(i) + " is malformed");
  }
}

}  // namespace

Json model_to_json(const FittedModel& model) {
  if (const auto* m = std::get_if<MdTreeModel>(&model)) {
    Json nodes = Json::array();
    for (const auto& n : m->nodes)
      nodes.push_back({{"feature", to_string(n.feature)},
                       {"threshold", n.threshold},
                       {"search", {{"initial", n.search.initial},
                                   {"lower", n.search.lower},
                                   {"upper", n.search.upper}}},
                       {"left", child_json(n.left)},
                       {"right", child_json(n.right)},
                       {"degenerate", n.degenerate}});
    Json leaves = Json::array();
    for (const auto& l : m->leaves)
      leaves.push_back({{"regime", l.regime},
                        {"label", l.label},
                        {"label_name", class_name(m->question, l.label)},
                        {"counts", l.counts}});
    return {{"kind", "mdtree"},
            {"question", to_string(m->question)},
            {"variant", to_string(m->variant)},
            {"fit_mode", to_string(m->fit_mode)},
            {"degenerate", m->degenerate},
            {"train_accuracy", m->train_accuracy},
            {"train_samples", m->train_samples},
            {"nodes", nodes},
            {"leaves", leaves}};
  }
  const auto& m = std::get<CartModel>(model);
  Json features = Json::array();
  for (auto f : m.features) features.push_back(to_string(f));
  Json nodes = Json::array();
  for (const auto& n : m.nodes)
    nodes.push_back({{"feature", n.feature},
                     {"threshold", n.threshold},
                     {"left", n.left},
                     {"right", n.right},
                     {"label", n.label},
                     {"counts", n.counts},
                     {"leaf_id", n.leaf_id}});
  return {{"kind", "cart"},
          {"question", to_string(m.question)},
          {"policy", to_string(m.policy)},
          {"features", features},
          {"train_accuracy", m.train_accuracy},
          {"train_samples", m.train_samples},
          {"nodes", nodes}};
}

FittedModel model_from_json(const Json& j) {
  try {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "mdtree") {
      MdTreeModel m;
      m.question = parse_question(j.at("question").get<std::string>());
      m.variant = parse_variant_name(j.at("variant").get<std::string>());
      m.fit_mode = parse_fit_mode(j.at("fit_mode").get<std::string>());
      m.degenerate = j.at("degenerate").get<bool>();
      m.train_accuracy = j.at("train_accuracy").get<double>();
      m.train_samples = j.at("train_samples").get<std::size_t>();
      for (const auto& n : j.at("nodes")) {
        const auto& s = n.at("search");
        m.nodes.push_back({parse_feature(n.at("feature").get<std::string>()),
                           n.at("threshold").get<double>(),
                           {s.at("initial").get<double>(), s.at("lower").get<double>(),
                            s.at("upper").get<double>()},
                           child_from(n.at("left")),
                           child_from(n.at("right")),
                           n.value("degenerate", false)});
      }
      for (const auto& l : j.at("leaves"))
        m.leaves.push_back({l.at("regime").get<int>(), l.at("label").get<int>(),
                            l.at("counts").get<std::array<int, 2>>()});
      check_md(m);
      return m;
    }
    if (kind == "cart") {
      CartModel m;
      m.question = parse_question(j.at("question").get<std::string>());
      m.policy = parse_policy(j.at("policy").get<std::string>());
      for (const auto& f : j.at("features")) m.features.push_back(parse_feature(f.get<std::string>()));
      m.train_accuracy = j.at("train_accuracy").get<double>();
      m.train_samples = j.at("train_samples").get<std::size_t>();
      for (const auto& n : j.at("nodes"))
        m.nodes.push_back({n.at("feature").get<int>(), n.at("threshold").get<double>(),
                           n.at("left").get<int>(), n.at("right").get<int>(),
                           n.at("label").get<int>(), n.at("counts").get<std::array<int, 2>>(),
                           n.at("leaf_id").get<int>()});
      check_cart(m);
      return m;
    }
    fail(ErrorCode::kSchema, "unknown model kind '" + kind + "'");
  } catch (const Json::exception& e) {
    fail(ErrorCode::kSchema, std::string("model JSON: ") + e.what());
  }
}

Prediction predict(const FittedModel& m, const ConfigPoint& config, const MetricVector& metrics) {
  if (const auto* md = std::get_if<MdTreeModel>(&m)) return mdtree_predict(*md, config, metrics);
  return cart_predict(std::get<CartModel>(m), config, metrics);
}

std::vector<Feature> model_features(const FittedModel& m) {
  if (const auto* md = std::get_if<MdTreeModel>(&m)) return md->features();
  return std::get<CartModel>(m).features;
}

}  // namespace mdiag::diagnosis
