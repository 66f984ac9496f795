#include "mdiag/zoo.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <sstream>
#include <mutex>
#include <thread>

#include "mdiag/error.hpp"
#include "mdiag/landscape.hpp"

namespace mdiag::zoo {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t run_seed(std::uint64_t task_seed, const ConfigKey& key, int seed, std::uint64_t salt) {
  std::uint64_t h = splitmix(task_seed);
  h = splitmix(h ^ static_cast<std::uint64_t>(key.width_p));
  h = splitmix(h ^ static_cast<std::uint64_t>(key.batch_size_t));
  h = splitmix(h ^ static_cast<std::uint64_t>(std::llround(key.data_fraction_n * 1e6)));
  h = splitmix(h ^ static_cast<std::uint64_t>(seed));
  return splitmix(h ^ salt);
}

TaskData make_task_data(const ZooSpec& spec) {
  return {nn::gen_synthetic(spec.task_seed, spec.pool_size, spec.dataset_variant, 0, spec.task),
          nn::gen_synthetic(spec.task_seed, spec.val_size, DatasetVariant::kClean, 1, spec.task)};
}

namespace {

constexpr std::uint64_t kTrainSalt = 1;
constexpr std::uint64_t kProbeSalt = 2;
constexpr std::uint64_t kPowerSalt = 3;
constexpr std::uint64_t kCurveSalt = 4;
constexpr std::uint64_t kCkaSalt = 5;

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

ZooRecord measure_config(const ZooSpec& spec, const ConfigPoint& config, const TaskData& data) {
  ZooRecord rec;
  rec.config = config;
  rec.provenance = {spec.zoo_id, spec.dataset_variant, spec.hash()};

  const auto count = static_cast<Eigen::Index>(std::floor(config.data_fraction_n * spec.pool_size));
  const nn::Dataset train = data.pool.head(count);
  const nn::ModelShape shape{static_cast<int>(train.inputs.cols()), config.width_p, train.classes};
  const ConfigKey key = config.key();

  landscape::ProbeSpec probe;
  probe.max_probes = spec.max_probes;
  probe.convergence_tol = spec.probe_tol;
  probe.power_iters = spec.power_iters;

  std::vector<int> seeds = config.seed_group;
  std::vector<nn::MlpWeights> weights;
  std::vector<double> tr_err, va_err, tr_loss, va_loss, traces, eigs;
  bool traces_ok = true;
  bool eigs_ok = true;
  try {
    for (int seed : seeds) {
      nn::TrainOptions opt;
      opt.batch_size = config.batch_size_t;
      opt.epochs = spec.training_budget.epochs;
      opt.lr = spec.training_budget.lr;
      opt.seed = run_seed(spec.task_seed, key, seed, kTrainSalt);
      weights.push_back(nn::train(shape, train, opt));
      const auto& w = weights.back();
      const auto tr = nn::evaluate(w, train);
      const auto va = nn::evaluate(w, data.validation);
      SeedRun run{seed, tr.error, va.error, tr.loss, va.loss, std::nullopt};
      try {
        const double h = landscape::hutchinson_trace(w, train, probe,
                                                     run_seed(spec.task_seed, key, seed, kProbeSalt));
        if (std::isfinite(h) && h > 0.0) run.sharpness_trace = h;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kUnavailable) throw;
      }
      if (run.sharpness_trace) traces.push_back(*run.sharpness_trace);
      else traces_ok = false;
      try {
        eigs.push_back(landscape::top_eigenvalue(w, train, probe,
                                                 run_seed(spec.task_seed, key, seed, kPowerSalt)));
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kUnavailable) throw;
        eigs_ok = false;
      }
      tr_err.push_back(run.train_error);
      va_err.push_back(run.val_error);
      tr_loss.push_back(run.train_loss);
      va_loss.push_back(run.val_loss);
      rec.per_seed.push_back(run);
    }
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kDiverged) throw;
    rec.status = RecordStatus::kFailed;
    rec.per_seed.clear();
    return rec;
  }

  auto& m = rec.metrics;
  m.train_error = mean_of(tr_err);
  m.val_error = mean_of(va_err);
  m.train_loss = mean_of(tr_loss);
  m.val_loss = mean_of(va_loss);
  if (traces_ok) m.sharpness_trace = mean_of(traces);
  if (eigs_ok) m.sharpness_eig = mean_of(eigs);

  // One connectivity and one similarity score per configuration, from the
  // two lowest seeds.
  std::vector<std::size_t> idx(seeds.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](auto x, auto y) { return seeds[x] < seeds[y]; });
  const auto& wa = weights[idx[0]];
  const auto& wb = weights[idx[1]];
  landscape::CurveSpec curve;
  curve.curve_epochs = spec.curve_epochs;
  curve.batch_size = config.batch_size_t;
  curve.lr = spec.training_budget.lr;
  try {
    m.connectivity_pct =
        landscape::mode_connectivity(wa, wb, train, curve,
                                     run_seed(spec.task_seed, key, seeds[idx[0]], kCurveSalt))
            .connectivity_pct;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kUnavailable) throw;
  }
  try {
    m.similarity = landscape::cka_similarity(wa, wb, train, spec.cka_samples,
                                             run_seed(spec.task_seed, key, seeds[idx[0]], kCkaSalt));
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kUnavailable) throw;
  }
  return rec;
}

std::vector<ZooRecord> sweep(const ZooSpec& spec, const SweepOptions& options) {
  if (auto problems = spec.check(); !problems.empty())
    fail(ErrorCode::kInvalidArgument, "invalid zoo spec: " + problems.front());

  std::vector<ConfigPoint> grid;
  for (int w : spec.width_grid)
    for (int t : spec.batch_grid)
      for (double n : spec.fraction_grid) grid.push_back({w, n, t, spec.seeds});
  std::sort(grid.begin(), grid.end(),
            [](const ConfigPoint& a, const ConfigPoint& b) { return a.key() < b.key(); });

  const TaskData data = make_task_data(spec);
  std::vector<ZooRecord> out(grid.size());
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> done{0};
  std::exception_ptr error;
  std::mutex error_mutex;

  // Largest configurations first keeps the tail short with several workers.
  std::vector<std::size_t> order(grid.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
    auto cost = [&](const ConfigPoint& c) { return c.width_p * c.data_fraction_n / c.batch_size_t; };
    return cost(grid[a]) > cost(grid[b]);
  });

  auto worker = [&] {
    for (;;) {
      const std::size_t k = next.fetch_add(1);
      if (k >= order.size()) return;
      const std::size_t i = order[k];
      try {
        out[i] = measure_config(spec, grid[i], data);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = order.size();
        return;
      }
      const auto d = ++done;
      if (options.progress) options.progress(d, grid.size());
    }
  };

  const int jobs = std::max(1, options.jobs);
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);
  return out;
}

std::vector<ZooRecord> sweep(ZooSpec spec, std::uint64_t task_seed, const SweepOptions& options) {
  spec.task_seed = task_seed;
  return sweep(spec, options);
}

std::string to_jsonl(const std::vector<ZooRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    out += Json(r).dump();
    out += '\n';
  }
  return out;
}

void save_jsonl(const std::vector<ZooRecord>& records, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(ErrorCode::kIo, "cannot open '" + path + "' for writing");
  f << to_jsonl(records);
  if (!f) fail(ErrorCode::kIo, "write to '" + path + "' failed");
}

namespace {

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(ErrorCode::kIo, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::vector<std::pair<std::size_t, ZooRecord>> parse_lines(const std::string& text) {
  std::vector<std::pair<std::size_t, ZooRecord>> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.emplace_back(lineno, Json::parse(line).get<ZooRecord>());
    } catch (const Json::exception& e) {
      fail(ErrorCode::kSchema, "line " + std::to_string(lineno) + ": " + e.what());
    } catch (const Error& e) {
      fail(ErrorCode::kSchema, "line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::vector<ZooRecord> check_all(std::vector<std::pair<std::size_t, ZooRecord>> lines,
                                 const ZooSpec& spec, const std::string& expected_hash) {
  std::vector<ZooRecord> out;
  out.reserve(lines.size());
  for (auto& [lineno, rec] : lines) {
    if (rec.provenance.spec_hash != expected_hash)
      fail(ErrorCode::kSpecHashMismatch, "line " + std::to_string(lineno) + ": spec_hash " +
                                             rec.provenance.spec_hash + " does not match " +
                                             expected_hash);
    auto result = validate_record(rec, spec);
    std::erase(result.violations, std::string("spec_hash mismatch"));
    if (!result.ok())
      fail(ErrorCode::kSchema, "line " + std::to_string(lineno) + ": " + result.violations.front());
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace

std::vector<ZooRecord> parse_jsonl(const std::string& text, const ZooSpec& spec) {
  return check_all(parse_lines(text), spec, spec.hash());
}

std::vector<ZooRecord> load_jsonl(const std::string& path, const ZooSpec& spec) {
  return parse_jsonl(read_file(path), spec);
}

ZooSpec infer_grid(const std::vector<ZooRecord>& records) {
  ZooSpec s;
  s.width_grid.clear();
  s.batch_grid.clear();
  s.fraction_grid.clear();
  for (const auto& r : records) {
    s.width_grid.push_back(r.config.width_p);
    s.batch_grid.push_back(r.config.batch_size_t);
    s.fraction_grid.push_back(r.config.data_fraction_n);
  }
  auto uniq = [](auto& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  };
  uniq(s.width_grid);
  uniq(s.batch_grid);
  uniq(s.fraction_grid);
  if (!records.empty()) {
    s.seeds = records.front().config.seed_group;
    s.dataset_variant = records.front().provenance.dataset_variant;
    s.zoo_id = records.front().provenance.zoo_id;
  }
  return s;
}

std::vector<ZooRecord> parse_jsonl(const std::string& text) {
  auto lines = parse_lines(text);
  std::vector<ZooRecord> plain;
  for (const auto& [_, r] : lines) plain.push_back(r);
  const ZooSpec inferred = infer_grid(plain);
  const std::string hash = lines.empty() ? std::string() : lines.front().second.provenance.spec_hash;
  return check_all(std::move(lines), inferred, hash);
}

std::vector<ZooRecord> load_jsonl(const std::string& path) { return parse_jsonl(read_file(path)); }

}  // namespace mdiag::zoo
