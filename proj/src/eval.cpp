#include "mdiag/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <map>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include "mdiag/error.hpp"
#include "mdiag/zoo.hpp"

namespace mdiag::eval {

using diagnosis::Feature;
using diagnosis::FeaturePolicy;

std::string_view to_string(TransferMode m) {
  switch (m) {
    case TransferMode::kDataset: return "dataset";
    case TransferMode::kDataCap: return "data-cap";
    case TransferMode::kParamCap: return "param-cap";
  }
  return "";
}

TransferMode parse_transfer_mode(std::string_view s) {
  if (s == "dataset") return TransferMode::kDataset;
  if (s == "data-cap") return TransferMode::kDataCap;
  if (s == "param-cap") return TransferMode::kParamCap;
  fail(ErrorCode::kInvalidArgument, "unknown transfer mode '" + std::string(s) + "'");
}

namespace {

constexpr std::pair<Method, std::string_view> kMethodNames[] = {
    {Method::kMdTree, "mdtree"},
    {Method::kMdTreeSimilarity, "mdtree-sim"},
    {Method::kCartLandscape, "cart-landscape"},
    {Method::kCartValidation, "cart-validation"},
    {Method::kCartHyper, "cart-hyper"},
    {Method::kCartCombined, "cart-combined"},
    {Method::kRandom, "random"},
    {Method::kOptimal, "optimal"},
};

// Features any method may ask for; samples lacking one are dropped from
// every pool so all methods see the same samples.
const std::vector<Feature>& all_features() {
  static const std::vector<Feature> f{
      Feature::kTrainError, Feature::kValError, Feature::kTrainLoss,      Feature::kValLoss,
      Feature::kConnectivity, Feature::kSharpnessLog10, Feature::kSimilarity};
  return f;
}

std::vector<DiagnosisSample> labeled(std::span<const ZooRecord> zoo, Question q) {
  auto set = labeling::label_all(zoo, q);
  return diagnosis::complete_samples(set.samples, all_features());
}

std::uint64_t mix(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

bool single_class(std::span<const DiagnosisSample> s) {
  return std::all_of(s.begin(), s.end(), [&](const auto& x) { return x.label == s[0].label; });
}

template <class Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn) {
  const auto workers = static_cast<std::size_t>(std::max(1, jobs));
  if (workers == 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::min(workers, n); ++w)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next++) < n;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mu);
          if (!error) error = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace

std::string_view to_string(Method m) {
  for (const auto& [k, name] : kMethodNames)
    if (k == m) return name;
  return "";
}

Method parse_method(std::string_view s) {
  for (const auto& [k, name] : kMethodNames)
    if (name == s) return k;
  fail(ErrorCode::kInvalidArgument, "unknown method '" + std::string(s) + "'");
}

std::vector<DiagnosisSample> few_shot(std::span<const DiagnosisSample> pool, Question q, int shots,
                                      std::uint64_t seed, int attempt) {
  if (shots <= 0) fail(ErrorCode::kInvalidArgument, "shot count must be positive");
  // Group key: the hyperparameters held fixed inside one drawn unit.
  std::map<std::pair<int, double>, std::vector<const DiagnosisSample*>> groups;
  for (const auto& s : pool) {
    std::pair<int, double> key;
    switch (q) {
      case Question::kQ1: key = {s.config.width_p, s.config.data_fraction_n}; break;
      case Question::kQ2: key = {0, s.config.data_fraction_n}; break;
      case Question::kQ2N: key = {s.config.width_p, 0.0}; break;
    }
    groups[key].push_back(&s);
  }
  std::vector<const std::vector<const DiagnosisSample*>*> order;
  for (const auto& [k, g] : groups) order.push_back(&g);
  std::mt19937_64 rng(mix(seed, static_cast<std::uint64_t>(attempt)));
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<DiagnosisSample> out;
  for (const auto* g : order) {
    if (out.size() >= static_cast<std::size_t>(shots)) break;
    for (const auto* s : *g) out.push_back(*s);
  }
  return out;
}

std::vector<DiagnosisSample> capped_pool(std::span<const ZooRecord> train_zoo, TransferMode mode,
                                         double cap, Question q) {
  std::vector<ZooRecord> sub;
  for (const auto& r : train_zoo) {
    const bool keep = mode == TransferMode::kParamCap
                          ? r.config.width_p <= cap
                          : r.config.data_fraction_n <= cap * (1.0 + 1e-12);
    if (keep) sub.push_back(r);
  }
  if (sub.empty())
    fail(ErrorCode::kNoData, std::string(to_string(mode)) + " cap " + format_number(cap) +
                                 " excludes all training samples");
  auto out = labeled(sub, q);
  if (out.empty())
    fail(ErrorCode::kNoData, std::string(to_string(mode)) + " cap " + format_number(cap) +
                                 " leaves no labelable configurations");
  return out;
}

namespace {

Split split_from_pools(const TransferSpec& spec, Question q, std::span<const DiagnosisSample> pool,
                       std::span<const ZooRecord> train_zoo,
                       std::span<const DiagnosisSample> test_pool, double x, std::uint64_t seed) {
  Split s;
  s.test.assign(test_pool.begin(), test_pool.end());
  if (spec.mode == TransferMode::kDataset) {
    const int shots = static_cast<int>(std::lround(x));
    s.train = few_shot(pool, q, shots, seed, 0);
    if (single_class(s.train)) {
      s.train = few_shot(pool, q, shots, seed, 1);
      s.degenerate = single_class(s.train);
    }
  } else {
    // Deterministic training set: resampling cannot change it.
    s.train = capped_pool(train_zoo, spec.mode, x, q);
    s.degenerate = single_class(s.train);
  }
  return s;
}

}  // namespace

Split split(const TransferSpec& spec, Question q, std::span<const ZooRecord> train_zoo,
            std::span<const ZooRecord> test_zoo, double shot_or_cap, std::uint64_t seed) {
  const auto test = labeled(test_zoo, q);
  std::vector<DiagnosisSample> pool;
  if (spec.mode == TransferMode::kDataset) pool = labeled(train_zoo, q);
  return split_from_pools(spec, q, pool, train_zoo, test, shot_or_cap, seed);
}

double fit_and_score(Method method, Question q, std::span<const DiagnosisSample> train,
                     std::span<const DiagnosisSample> test, const TransferSpec& spec,
                     std::uint64_t seed) {
  if (test.empty()) fail(ErrorCode::kNoData, "empty test set");
  std::size_t ok = 0;
  auto score_cart = [&](FeaturePolicy p) {
    const auto m = diagnosis::cart_fit(train, p, q, seed, spec.cart);
    for (const auto& s : test) ok += diagnosis::cart_predict(m, s).label == s.label;
  };
  switch (method) {
    case Method::kMdTree:
    case Method::kMdTreeSimilarity: {
      const auto variant = method == Method::kMdTree ? diagnosis::MdVariant::kSharpness
                                                     : diagnosis::MdVariant::kSimilarity;
      const auto m = diagnosis::mdtree_fit(train, q, variant, spec.md, seed);
      for (const auto& s : test) ok += diagnosis::mdtree_predict(m, s).label == s.label;
      break;
    }
    case Method::kCartLandscape: score_cart(FeaturePolicy::kLossLandscape); break;
    case Method::kCartValidation: score_cart(FeaturePolicy::kValidation); break;
    case Method::kCartHyper: score_cart(FeaturePolicy::kHyperparameter); break;
    case Method::kCartCombined: score_cart(FeaturePolicy::kCombined); break;
    case Method::kRandom: {
      diagnosis::RandomDiagnosis coin(seed);
      for (const auto& s : test) ok += coin() == s.label;
      break;
    }
    case Method::kOptimal:
      for (const auto& s : test) ok += diagnosis::optimal_diagnosis(s) == s.label;
      break;
  }
  return static_cast<double>(ok) / static_cast<double>(test.size());
}

std::vector<TransferRow> evaluate(const TransferSpec& spec, Method method, Question q,
                                  std::span<const ZooRecord> train_zoo,
                                  std::span<const ZooRecord> test_zoo, int jobs) {
  std::vector<double> xs;
  if (spec.mode == TransferMode::kDataset) {
    for (int s : spec.shots) xs.push_back(s);
  } else if (!spec.caps.empty()) {
    xs = spec.caps;
  } else {
    const auto grid = zoo::infer_grid(std::vector<ZooRecord>(train_zoo.begin(), train_zoo.end()));
    if (spec.mode == TransferMode::kParamCap)
      for (int w : grid.width_grid) xs.push_back(w);
    else
      xs = grid.fraction_grid;
  }
  if (xs.empty() || spec.seeds.empty()) fail(ErrorCode::kInvalidArgument, "nothing to evaluate");

  const auto test = labeled(test_zoo, q);
  if (test.empty()) fail(ErrorCode::kNoData, "no labelable configurations in the test zoo");
  std::vector<DiagnosisSample> pool;
  if (spec.mode == TransferMode::kDataset) {
    pool = labeled(train_zoo, q);
    if (pool.empty()) fail(ErrorCode::kNoData, "no labelable configurations in the training zoo");
  }

  std::vector<TransferRow> rows(xs.size() * spec.seeds.size());
  parallel_for(rows.size(), jobs, [&](std::size_t i) {
    const double x = xs[i / spec.seeds.size()];
    const std::uint64_t seed = spec.seeds[i % spec.seeds.size()];
    const auto s = split_from_pools(spec, q, pool, train_zoo, test, x, seed);
    rows[i] = {q, method, spec.mode, x, seed, fit_and_score(method, q, s.train, s.test, spec, seed),
               s.degenerate};
  });
  return rows;
}

std::string format_number(double v) {
  char buf[64];
  if (v == std::floor(v) && std::abs(v) < 1e15)
    std::snprintf(buf, sizeof buf, "%.0f", v);
  else
    std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

namespace {

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

std::string transfer_csv_header() { return "question,method,mode,shot_or_cap,seed,accuracy,status"; }

std::string to_csv(std::span<const TransferRow> rows) {
  std::string out = transfer_csv_header() + "\n";
  for (const auto& r : rows) {
    out += std::string(to_string(r.question)) + "," + std::string(to_string(r.method)) + "," +
           std::string(to_string(r.mode)) + "," + format_number(r.shot_or_cap) + "," +
           std::to_string(r.seed) + "," + fixed6(r.accuracy) + "," +
           (r.degenerate ? "degenerate" : "ok") + "\n";
  }
  return out;
}

// ---------------------------------------------------------------- one step

std::string_view to_string(StepPolicy p) {
  switch (p) {
    case StepPolicy::kFixedOne: return "fixed";
    case StepPolicy::kRandom: return "random";
    case StepPolicy::kOptimal: return "optimal";
  }
  return "";
}

StepPolicy parse_step_policy(std::string_view s) {
  if (s == "fixed" || s == "fixed_one") return StepPolicy::kFixedOne;
  if (s == "random") return StepPolicy::kRandom;
  if (s == "optimal") return StepPolicy::kOptimal;
  fail(ErrorCode::kInvalidArgument, "unknown step policy '" + std::string(s) + "'");
}

std::string OneStepDiagnosis::name() const {
  switch (kind) {
    case Kind::kRandom: return "random";
    case Kind::kOptimal: return "optimal";
    case Kind::kModel: break;
  }
  if (!model) return "model";
  if (const auto* md = std::get_if<diagnosis::MdTreeModel>(&*model))
    return md->variant == diagnosis::MdVariant::kSimilarity ? "mdtree-sim" : "mdtree";
  return "cart-" + std::string(diagnosis::to_string(std::get<diagnosis::CartModel>(*model).policy));
}

namespace {

enum class Axis { kWidth, kBatch, kFraction };

struct Move {
  Axis axis;
  int direction;  // +1 toward larger values
};

// Values of the acted axis, the current index on it, and the key at index i.
struct AxisView {
  std::vector<ConfigKey> keys;
  std::size_t current = 0;
};

AxisView axis_view(const ZooSpec& grid, const ConfigKey& at, Axis axis) {
  AxisView v;
  auto add = [&](const ConfigKey& k, bool is_current) {
    if (is_current) v.current = v.keys.size();
    v.keys.push_back(k);
  };
  switch (axis) {
    case Axis::kWidth:
      for (int p : grid.width_grid) add({p, at.batch_size_t, at.data_fraction_n}, p == at.width_p);
      break;
    case Axis::kBatch:
      for (int t : grid.batch_grid) add({at.width_p, t, at.data_fraction_n}, t == at.batch_size_t);
      break;
    case Axis::kFraction:
      for (double n : grid.fraction_grid)
        add({at.width_p, at.batch_size_t, n}, n == at.data_fraction_n);
      break;
  }
  return v;
}

}  // namespace

OneStepResult one_step_eval(std::span<const ZooRecord> test_zoo, Question q,
                            const OneStepDiagnosis& diag, StepPolicy policy,
                            std::span<const std::uint64_t> seeds) {
  using Kind = OneStepDiagnosis::Kind;
  if (seeds.empty()) fail(ErrorCode::kInvalidArgument, "one-step evaluation needs seeds");
  if (diag.kind == Kind::kModel) {
    if (!diag.model) fail(ErrorCode::kInvalidArgument, "model diagnosis without a model");
    if (q != Question::kQ1 && !diag.direction_model)
      fail(ErrorCode::kInvalidArgument, "Q2 one-step evaluation needs a Q1 direction model");
  }
  const labeling::ZooTable table(test_zoo);
  const auto samples = labeled(test_zoo, q);
  if (samples.empty()) fail(ErrorCode::kNoData, "no labelable configurations in the test zoo");

  OneStepResult result;
  result.question = q;
  result.method = diag.name();
  result.policy = policy;
  result.configs = samples.size();

  for (const auto seed : seeds) {
    diagnosis::RandomDiagnosis coin(seed);
    std::mt19937_64 step_rng(mix(seed, 7));
    double total = 0.0;
    for (const auto& s : samples) {
      // Q1 direction: label 1 (t too large) moves t down.
      auto t_label = [&]() -> int {
        switch (diag.kind) {
          case Kind::kRandom: return coin();
          case Kind::kOptimal: {
            if (q == Question::kQ1) return s.label;
            const auto g = labeling::gap_q1(table, s.config.key());
            return g && *g > 0.0 ? 1 : 0;
          }
          case Kind::kModel:
            return diagnosis::predict(q == Question::kQ1 ? *diag.model : *diag.direction_model,
                                      s.config, s.metrics)
                .label;
        }
        return 0;
      };
      Move move{Axis::kBatch, 0};
      if (q == Question::kQ1) {
        move.direction = t_label() == 1 ? -1 : 1;
      } else {
        int top = 0;
        switch (diag.kind) {
          case Kind::kRandom: top = coin(); break;
          case Kind::kOptimal: top = s.label; break;
          case Kind::kModel: top = diagnosis::predict(*diag.model, s.config, s.metrics).label; break;
        }
        if (top == 1)
          move = {q == Question::kQ2 ? Axis::kWidth : Axis::kFraction, 1};
        else
          move.direction = t_label() == 1 ? -1 : 1;
      }

      const auto view = axis_view(table.grid(), s.config.key(), move.axis);
      std::vector<std::size_t> reach;
      for (std::size_t i = view.current;;) {
        if (move.direction < 0 ? i == 0 : i + 1 >= view.keys.size()) break;
        i = move.direction < 0 ? i - 1 : i + 1;
        reach.push_back(i);
      }
      if (reach.empty()) continue;

      auto e_val = [&](std::size_t i) {
        const auto v = table.val_error(view.keys[i]);
        if (!v) fail(ErrorCode::kNoData, "one-step target missing from the test zoo");
        return *v;
      };
      const double before = e_val(view.current);
      double after = before;
      switch (policy) {
        case StepPolicy::kFixedOne: after = e_val(reach.front()); break;
        case StepPolicy::kRandom: after = e_val(reach[step_rng() % reach.size()]); break;
        case StepPolicy::kOptimal:
          for (auto i : reach) after = std::min(after, e_val(i));
          break;
      }
      total += 100.0 * (before - after);
    }
    result.per_seed.push_back(total / static_cast<double>(samples.size()));
  }
  result.mean = mean_of(result.per_seed);
  result.std = std_of(result.per_seed);
  return result;
}

std::string one_step_csv_header() { return "question,method,step_policy,mean_improvement,std"; }

std::string to_csv(std::span<const OneStepResult> results) {
  std::string out = one_step_csv_header() + "\n";
  for (const auto& r : results)
    out += std::string(to_string(r.question)) + "," + r.method + "," +
           std::string(to_string(r.policy)) + "," + fixed6(r.mean) + "," + fixed6(r.std) + "\n";
  return out;
}

// ----------------------------------------------------------------- report

double mean_of(std::span<const double> v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double std_of(std::span<const double> v) {
  if (v.empty()) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

std::vector<TransferRow> parse_transfer_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  auto cells = [](const std::string& l) {
    std::vector<std::string> out;
    std::stringstream ss(l);
    for (std::string c; std::getline(ss, c, ',');) out.push_back(c);
    return out;
  };
  if (!std::getline(in, line)) fail(ErrorCode::kSchema, "empty report input");
  const auto header = cells(line);
  auto column = [&](const std::string& name) -> std::ptrdiff_t {
    auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? -1 : it - header.begin();
  };
  const std::ptrdiff_t cq = column("question"), cm = column("method"), cmode = column("mode"),
                       cx = column("shot_or_cap"), cs = column("seed"), ca = column("accuracy"),
                       cst = column("status");
  if (cq < 0 || cm < 0 || cmode < 0 || cx < 0 || cs < 0 || ca < 0)
    fail(ErrorCode::kSchema, "line 1: not a transfer CSV header");

  std::vector<TransferRow> rows;
  for (int n = 2; std::getline(in, line); ++n) {
    if (line.empty()) continue;
    const auto c = cells(line);
    if (c.size() < header.size())
      fail(ErrorCode::kSchema, "line " + std::to_string(n) + ": expected " +
                                   std::to_string(header.size()) + " columns");
    try {
      TransferRow r;
      r.question = parse_question(c[static_cast<std::size_t>(cq)]);
      r.method = parse_method(c[static_cast<std::size_t>(cm)]);
      r.mode = parse_transfer_mode(c[static_cast<std::size_t>(cmode)]);
      r.shot_or_cap = std::stod(c[static_cast<std::size_t>(cx)]);
      r.seed = std::stoull(c[static_cast<std::size_t>(cs)]);
      r.accuracy = std::stod(c[static_cast<std::size_t>(ca)]);
      r.degenerate = cst >= 0 && c[static_cast<std::size_t>(cst)] == "degenerate";
      rows.push_back(r);
    } catch (const Error& e) {
      fail(ErrorCode::kSchema, "line " + std::to_string(n) + ": " + e.what());
    } catch (const std::exception&) {
      fail(ErrorCode::kSchema, "line " + std::to_string(n) + ": malformed number");
    }
  }
  return rows;
}

std::vector<SummaryRow> summarize(std::span<const TransferRow> rows) {
  std::vector<SummaryRow> out;
  std::vector<std::vector<double>> accs;
  for (const auto& r : rows) {
    const std::string q(to_string(r.question)), m(to_string(r.method)), mode(to_string(r.mode));
    auto it = std::find_if(out.begin(), out.end(), [&](const SummaryRow& s) {
      return s.question == q && s.method == m && s.mode == mode && s.shot_or_cap == r.shot_or_cap;
    });
    if (it == out.end()) {
      out.push_back({q, m, mode, r.shot_or_cap, 0, 0.0, 0.0, 0});
      accs.emplace_back();
      it = out.end() - 1;
    }
    const auto i = static_cast<std::size_t>(it - out.begin());
    accs[i].push_back(r.accuracy);
    ++it->runs;
    it->degenerate += r.degenerate;
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].mean = mean_of(accs[i]);
    out[i].std = std_of(accs[i]);
  }
  return out;
}

std::string summary_csv(std::span<const SummaryRow> rows) {
  std::string out = "question,method,mode,shot_or_cap,runs,mean_acc,std_acc,degenerate\n";
  for (const auto& r : rows)
    out += r.question + "," + r.method + "," + r.mode + "," + format_number(r.shot_or_cap) + "," +
           std::to_string(r.runs) + "," + fixed6(r.mean) + "," + fixed6(r.std) + "," +
           std::to_string(r.degenerate) + "\n";
  return out;
}

std::string plotdata(std::span<const SummaryRow> rows) {
  std::string out;
  std::string current;
  for (const auto& r : rows) {
    const std::string curve = r.question + " " + r.method + " " + r.mode;
    if (curve != current) {
      if (!current.empty()) out += "\n";
      out += "# " + curve + "\n";
      current = curve;
    }
    out += format_number(r.shot_or_cap) + " " + fixed6(r.mean) + " " + fixed6(r.std) + "\n";
  }
  return out;
}

}  // namespace mdiag::eval
