#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "mdiag/diagnosis.hpp"
#include "mdiag/error.hpp"

using namespace mdiag;
using namespace mdiag::diagnosis;

namespace {

DiagnosisSample sample(double e_tr, double c, double log_h, double s, int label, int width = 8) {
  DiagnosisSample x;
  x.config = {width, 1.0, 16, {0, 1}};
  x.metrics.train_error = e_tr;
  x.metrics.val_error = e_tr + 0.1;
  x.metrics.train_loss = e_tr;
  x.metrics.val_loss = e_tr + 0.2;
  x.metrics.connectivity_pct = c;
  x.metrics.sharpness_trace = std::pow(10.0, log_h);
  x.metrics.similarity = s;
  x.label = label;
  x.gap_G = label ? 0.01 : -0.01;
  return x;
}

// Samples drawn across the default search ranges, labeled by a planted tree with
// label noise.
std::vector<DiagnosisSample> random_instance(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<DiagnosisSample> out;
  for (int i = 0; i < n; ++i) {
    const double e = 0.6 * u(rng), c = -40.0 * u(rng), h = 3.0 + 7.0 * u(rng), s = u(rng);
    int label = e < 0.2 ? (c < -12 ? (h > 6.5 ? 1 : 0) : 0) : (c < -25 ? 1 : 0);
    if (u(rng) < 0.15) label = 1 - label;
    out.push_back(sample(e, c, h, s, label));
  }
  return out;
}

// Best single-threshold stump over every feature, by exhaustive scan.
double best_stump(const std::vector<DiagnosisSample>& xs, const std::vector<Feature>& fs) {
  std::size_t best = 0;
  for (auto f : fs) {
    std::vector<double> v;
    for (const auto& x : xs) v.push_back(*feature_value(x, f));
    std::sort(v.begin(), v.end());
    v.push_back(v.back() + 1.0);
    for (double thr : v) {
      std::array<std::array<int, 2>, 2> c{};
      for (const auto& x : xs) ++c[*feature_value(x, f) >= thr][static_cast<std::size_t>(x.label)];
      best = std::max<std::size_t>(best, static_cast<std::size_t>(std::max(c[0][0], c[0][1]) +
                                                                  std::max(c[1][0], c[1][1])));
    }
  }
  return static_cast<double>(best) / static_cast<double>(xs.size());
}

}  // namespace

TEST_SUITE("diagnosis") {

TEST_CASE("default search triples") {
  CHECK(default_search(Feature::kTrainError, Question::kQ1) == SearchTriple{0.5, 0.0, 1.0});
  CHECK(default_search(Feature::kConnectivity, Question::kQ1) == SearchTriple{-10.0, -30.0, 0.0});
  CHECK(default_search(Feature::kSharpnessLog10, Question::kQ1) == SearchTriple{5.0, 4.0, 9.0});
  CHECK(default_search(Feature::kSharpnessLog10, Question::kQ2) == SearchTriple{7.0, 4.0, 9.0});
  CHECK(default_search(Feature::kSimilarity, Question::kQ1) == SearchTriple{0.5, 0.2, 0.8});

  std::mt19937_64 rng(1);
  const auto xs = random_instance(rng, 40);
  const auto m = mdtree_fit(xs, Question::kQ1, MdVariant::kSharpness, {}, 0);
  REQUIRE(m.nodes.size() == 4);
  CHECK(m.nodes[0].search == SearchTriple{0.5, 0.0, 1.0});
  CHECK(m.nodes[1].search == SearchTriple{-10.0, -30.0, 0.0});
  CHECK(m.nodes[2].search == SearchTriple{-10.0, -30.0, 0.0});
  CHECK(m.nodes[3].search == SearchTriple{5.0, 4.0, 9.0});
  CHECK(m.nodes[3].feature == Feature::kSharpnessLog10);
  const auto sim = mdtree_fit(xs, Question::kQ1, MdVariant::kSimilarity, {}, 0);
  CHECK(sim.nodes[3].feature == Feature::kSimilarity);
  CHECK(sim.nodes[3].search == SearchTriple{0.5, 0.2, 0.8});
}

TEST_CASE("samples separable by connectivity") {
  std::vector<DiagnosisSample> xs;
  for (int i = 0; i < 5; ++i) {
    xs.push_back(sample(0.0, -20.0, 5.0, 0.5, 1));
    xs.push_back(sample(0.0, -2.0, 5.0, 0.5, 0));
  }
  for (auto mode : {FitMode::kBrent, FitMode::kExactScan}) {
    MdFitOptions o;
    o.fit_mode = mode;
    const auto m = mdtree_fit(xs, Question::kQ1, MdVariant::kSharpness, o, 0);
    CHECK(m.nodes[0].degenerate);
    CHECK(m.nodes[0].threshold == 0.5);
    CHECK(m.nodes[1].threshold > -20.0);
    CHECK(m.nodes[1].threshold < -2.0);
    CHECK(m.train_accuracy == 1.0);
  }
}

TEST_CASE("thresholds stay inside their bounds") {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> size(8, 64);
  for (int trial = 0; trial < 30; ++trial) {
    const auto xs = random_instance(rng, size(rng));
    for (auto mode : {FitMode::kBrent, FitMode::kExactScan}) {
      MdFitOptions o;
      o.fit_mode = mode;
      for (const auto& n : mdtree_fit(xs, Question::kQ1, MdVariant::kSharpness, o, 0).nodes) {
        CHECK(n.threshold >= n.search.lower);
        CHECK(n.threshold <= n.search.upper);
      }
    }
  }
}

TEST_CASE("brent matches exact_scan when every node objective is unimodal") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<DiagnosisSample> by_error, by_connectivity;
    for (int i = 0; i < 48; ++i) {
      const double e = u(rng), c = -30.0 * u(rng), h = 4.0 + 5.0 * u(rng);
      by_error.push_back(sample(e, c, h, 0.5, e >= 0.35));
      by_connectivity.push_back(sample(0.0, c, h, 0.5, c < -18.0));
    }
    MdFitOptions exact;
    exact.fit_mode = FitMode::kExactScan;
    for (const auto* xs : {&by_error, &by_connectivity}) {
      const auto b = mdtree_fit(*xs, Question::kQ1, MdVariant::kSharpness, {}, 0);
      const auto e = mdtree_fit(*xs, Question::kQ1, MdVariant::kSharpness, exact, 0);
      CHECK(e.train_accuracy == 1.0);
      CHECK(b.train_accuracy == 1.0);
    }
  }
}

TEST_CASE("exact_scan node split is optimal against an exhaustive threshold sweep") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    // Every sample reaches the root only: non-interpolating leaves are pure
    // functions of the root split when connectivity is constant.
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<DiagnosisSample> xs;
    for (int i = 0; i < 16; ++i) xs.push_back(sample(u(rng), -5.0, 5.0, 0.5, u(rng) < 0.5));
    MdFitOptions exact;
    exact.fit_mode = FitMode::kExactScan;
    const auto m = mdtree_fit(xs, Question::kQ1, MdVariant::kSharpness, exact, 0);
    CHECK(m.train_accuracy == doctest::Approx(best_stump(xs, {Feature::kTrainError})));
  }
}

TEST_CASE("sample exactly at a threshold routes right") {
  std::vector<DiagnosisSample> xs{sample(0.0, -20.0, 5.0, 0.5, 1), sample(0.0, -2.0, 5.0, 0.5, 0)};
  auto m = mdtree_fit(xs, Question::kQ1, MdVariant::kSharpness, {}, 0);
  const double tau = m.nodes[1].threshold;
  const auto at = sample(0.0, tau, 5.0, 0.5, 0);
  const auto below = sample(0.0, std::nextafter(tau, -100.0), 5.0, 0.5, 0);
  CHECK(mdtree_predict(m, at).regime == 3);
  CHECK(mdtree_predict(m, below).regime != 3);
}

TEST_CASE("degenerate training sets give a constant majority predictor") {
  std::vector<DiagnosisSample> xs{sample(0.1, -5, 5, 0.5, 1), sample(0.4, -25, 8, 0.3, 1)};
  const auto m = mdtree_fit(xs, Question::kQ1, MdVariant::kSharpness, {}, 0);
  CHECK(m.degenerate);
  std::mt19937_64 rng(2);
  for (const auto& x : random_instance(rng, 20)) CHECK(mdtree_predict(m, x).label == 1);
  const auto one = mdtree_fit(std::vector<DiagnosisSample>{xs[0]}, Question::kQ1,
                              MdVariant::kSharpness, {}, 0);
  CHECK(one.degenerate);
}

TEST_CASE("missing feature is named") {
  std::mt19937_64 rng(3);
  const auto m = mdtree_fit(random_instance(rng, 20), Question::kQ1, MdVariant::kSharpness, {}, 0);
  auto x = sample(0.0, -20.0, 5.0, 0.5, 0);
  x.metrics.connectivity_pct.reset();
  try {
    mdtree_predict(m, x);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("connectivity_pct") != std::string::npos);
  }
}

TEST_CASE("fitting is invariant to sample order") {
  std::mt19937_64 rng(5);
  auto xs = random_instance(rng, 50);
  const auto a = mdtree_fit(xs, Question::kQ1, MdVariant::kSharpness, {}, 0);
  const auto ca = cart_fit(xs, FeaturePolicy::kLossLandscape, Question::kQ1, 0);
  std::shuffle(xs.begin(), xs.end(), rng);
  CHECK(mdtree_fit(xs, Question::kQ1, MdVariant::kSharpness, {}, 0) == a);
  CHECK(cart_fit(xs, FeaturePolicy::kLossLandscape, Question::kQ1, 0) == ca);
}

TEST_CASE("majority ties") {
  CHECK(majority_label({2, 3}, {10, 1}) == 1);
  CHECK(majority_label({3, 3}, {4, 9}) == 1);
  CHECK(majority_label({3, 3}, {9, 4}) == 0);
  CHECK(majority_label({3, 3}, {5, 5}) == 0);
}

TEST_CASE("feature policies") {
  CHECK(policy_features(FeaturePolicy::kLossLandscape, Question::kQ1) ==
        std::vector<Feature>{Feature::kTrainError, Feature::kConnectivity,
                             Feature::kSharpnessLog10, Feature::kSimilarity});
  CHECK(policy_features(FeaturePolicy::kValidation, Question::kQ1) ==
        std::vector<Feature>{Feature::kValError, Feature::kTrainError, Feature::kValLoss,
                             Feature::kTrainLoss});
  CHECK(policy_features(FeaturePolicy::kHyperparameter, Question::kQ1) ==
        std::vector<Feature>{Feature::kWidth, Feature::kFraction});
  CHECK(policy_features(FeaturePolicy::kHyperparameter, Question::kQ2) ==
        std::vector<Feature>{Feature::kFraction});
  CHECK(policy_features(FeaturePolicy::kHyperparameter, Question::kQ2N) ==
        std::vector<Feature>{Feature::kWidth});
  CHECK(policy_features(FeaturePolicy::kCombined, Question::kQ2).size() == 5);
}

TEST_CASE("CART basics") {
  SUBCASE("pure labels give one leaf") {
    std::vector<DiagnosisSample> xs{sample(0.1, -1, 5, 0.5, 1), sample(0.3, -9, 6, 0.4, 1)};
    const auto m = cart_fit(xs, FeaturePolicy::kLossLandscape, Question::kQ1, 0);
    CHECK(m.nodes.size() == 1);
    CHECK(cart_predict(m, sample(0.9, -30, 9, 0.1, 0)).label == 1);
  }
  SUBCASE("step function splits at the midpoint") {
    std::vector<DiagnosisSample> xs;
    for (int i = 0; i < 10; ++i) xs.push_back(sample(0.05 * i, -5, 5, 0.5, i >= 6));
    const std::vector<Feature> f{Feature::kTrainError};
    const auto m = cart_fit(xs, f, Question::kQ1, 0);
    REQUIRE(m.nodes.size() == 3);
    CHECK(m.nodes[0].threshold == doctest::Approx(0.275));
    CHECK(m.train_accuracy == 1.0);
  }
  SUBCASE("depth limit") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0, 1);
    std::vector<DiagnosisSample> xs;
    for (int i = 0; i < 200; ++i) xs.push_back(sample(u(rng), -30 * u(rng), 4 + 5 * u(rng), u(rng), u(rng) < 0.5));
    const auto m = cart_fit(xs, FeaturePolicy::kLossLandscape, Question::kQ1, 0);
    auto depth = [&](auto&& self, int id) -> int {
      const auto& n = m.nodes[static_cast<std::size_t>(id)];
      return n.feature < 0 ? 0 : 1 + std::max(self(self, n.left), self(self, n.right));
    };
    CHECK(depth(depth, 0) <= 4);
  }
}

TEST_CASE("CART beats the best stump on 30-sample instances") {
  std::mt19937_64 rng(13);
  const auto fs = policy_features(FeaturePolicy::kLossLandscape, Question::kQ1);
  for (int trial = 0; trial < 20; ++trial) {
    const auto xs = random_instance(rng, 30);
    const auto m = cart_fit(xs, FeaturePolicy::kLossLandscape, Question::kQ1, 0);
    CHECK(m.train_accuracy >= best_stump(xs, fs) - 1e-12);
  }
}

TEST_CASE("random and optimal diagnosis") {
  std::mt19937_64 rng(17);
  std::vector<DiagnosisSample> xs;
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < 10000; ++i) xs.push_back(sample(0.1, -5, 5, 0.5, u(rng) < 0.3));
  RandomDiagnosis coin(42), again(42);
  std::size_t ok = 0;
  for (const auto& x : xs) {
    const int c = coin();
    CHECK(c == again());
    ok += c == x.label;
  }
  CHECK(std::abs(static_cast<double>(ok) / 10000.0 - 0.5) <= 0.02);
  for (const auto& x : xs) CHECK(optimal_diagnosis(x) == x.label);
}

TEST_CASE("Brent minimizer on smooth functions") {
  const auto r = brent_minimize([](double x) { return (x - 0.3) * (x - 0.3); }, 0.0, 1.0, 0.9,
                                1e-8, 500);
  CHECK(r.x == doctest::Approx(0.3).epsilon(1e-6));
  const auto edge = brent_minimize([](double x) { return x; }, 2.0, 5.0, 3.0, 1e-8, 500);
  CHECK(edge.x == doctest::Approx(2.0).epsilon(1e-5));
}

TEST_CASE("model JSON round trip") {
  std::mt19937_64 rng(19);
  const auto xs = random_instance(rng, 40);
  const FittedModel md = mdtree_fit(xs, Question::kQ2, MdVariant::kSimilarity, {}, 0);
  const FittedModel cart = cart_fit(xs, FeaturePolicy::kValidation, Question::kQ2, 0);
  for (const auto& m : {md, cart}) {
    const auto back = model_from_json(Json::parse(model_to_json(m).dump()));
    CHECK(back == m);
    for (const auto& x : xs) CHECK(predict(back, x.config, x.metrics) == predict(m, x.config, x.metrics));
  }
  Json broken = model_to_json(md);
  broken["nodes"][0]["left"] = Json{{"node", 99}};
  CHECK_THROWS_AS(model_from_json(broken), Error);
  CHECK_THROWS_AS(model_from_json(Json{{"kind", "forest"}}), Error);
}

}
