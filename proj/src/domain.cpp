#include "mdiag/domain.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "mdiag/error.hpp"

namespace mdiag {

std::string_view to_string(DatasetVariant v) {
  switch (v) {
    case DatasetVariant::kClean: return "clean";
    case DatasetVariant::kLabelNoise10: return "label_noise_10pct";
    case DatasetVariant::kOodShift: return "ood_shift";
  }
  return "clean";
}

DatasetVariant parse_variant(std::string_view s) {
  if (s == "clean") return DatasetVariant::kClean;
  if (s == "label_noise_10pct") return DatasetVariant::kLabelNoise10;
  if (s == "ood_shift") return DatasetVariant::kOodShift;
  fail(ErrorCode::kSchema, "unknown dataset_variant '" + std::string(s) + "'");
}

std::string_view to_string(FailureSource s) {
  switch (s) {
    case FailureSource::kTSmall: return "t_small";
    case FailureSource::kTLarge: return "t_large";
    case FailureSource::kModelSize: return "model_size";
    case FailureSource::kDataAmount: return "data_amount";
  }
  return "t_small";
}

std::string_view to_string(Question q) {
  switch (q) {
    case Question::kQ1: return "q1";
    case Question::kQ2: return "q2";
    case Question::kQ2N: return "q2n";
  }
  return "q1";
}

Question parse_question(std::string_view s) {
  if (s == "q1" || s == "Q1") return Question::kQ1;
  if (s == "q2" || s == "Q2") return Question::kQ2;
  if (s == "q2n" || s == "Q2N") return Question::kQ2N;
  fail(ErrorCode::kInvalidArgument, "unknown question '" + std::string(s) + "'");
}

std::string_view class_name(Question q, int label) {
  switch (q) {
    case Question::kQ1: return label ? "t_large" : "t_small";
    case Question::kQ2: return label ? "model_size" : "optimizer";
    case Question::kQ2N: return label ? "data_amount" : "optimizer";
  }
  return "";
}

Bounds ZooSpec::bounds() const {
  Bounds b;
  if (!width_grid.empty()) b.p_max = width_grid.back();
  if (!fraction_grid.empty()) b.n_max = fraction_grid.back();
  if (!batch_grid.empty()) {
    b.t_min = batch_grid.front();
    b.t_max = batch_grid.back();
  }
  return b;
}

namespace {

template <class T>
bool strictly_increasing(const std::vector<T>& v) {
  return std::adjacent_find(v.begin(), v.end(),
                            [](const T& a, const T& b) { return !(a < b); }) ==
         v.end();
}

}  // namespace

std::vector<std::string> ZooSpec::check() const {
  std::vector<std::string> out;
  if (width_grid.empty() || batch_grid.empty() || fraction_grid.empty())
    out.emplace_back("grids must be non-empty");
  if (!strictly_increasing(width_grid)) out.emplace_back("width_grid must be strictly increasing");
  if (!strictly_increasing(batch_grid)) out.emplace_back("batch_grid must be strictly increasing");
  if (!strictly_increasing(fraction_grid))
    out.emplace_back("fraction_grid must be strictly increasing");
  if (!width_grid.empty() && width_grid.front() < 1) out.emplace_back("widths must be positive");
  if (!batch_grid.empty() && batch_grid.front() < 1) out.emplace_back("batch sizes must be positive");
  if (!fraction_grid.empty() && (fraction_grid.front() <= 0.0 || fraction_grid.back() > 1.0))
    out.emplace_back("fractions must lie in (0, 1]");
  if (seeds.size() < 2) out.emplace_back("at least 2 seeds are required");
  if (dataset_variant == DatasetVariant::kOodShift)
    out.emplace_back("zoo dataset_variant must be clean or label_noise_10pct");
  if (training_budget.epochs < 0 || !(training_budget.lr >= 0.0))
    out.emplace_back("training budget must be non-negative");
  if (pool_size < 4 || val_size < 4) out.emplace_back("pool_size and val_size must be >= 4");
  if (!fraction_grid.empty() && !batch_grid.empty() &&
      static_cast<int>(std::floor(fraction_grid.front() * pool_size)) < batch_grid.back())
    out.emplace_back("smallest training subset is smaller than the largest batch size");
  if (curve_epochs < 0 || max_probes < 1 || power_iters < 1 || cka_samples < 2)
    out.emplace_back("measurement budgets out of range");
  if (task.input_dim < 1 || task.classes < 2 || task.components < 1 || !(task.noise >= 0.0) ||
      !(task.separation >= 0.0))
    out.emplace_back("task geometry out of range");
  return out;
}

std::string ZooSpec::hash() const {
  // FNV-1a over the canonical dump (object keys sorted by nlohmann::json).
  const std::string canonical = Json(*this).dump();
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : canonical) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

ZooSpec default_zoo_spec(DatasetVariant variant) {
  ZooSpec s;
  s.dataset_variant = variant;
  s.zoo_id = std::string(to_string(variant));
  return s;
}

namespace {

bool on_grid(const std::vector<int>& grid, int v) {
  return std::find(grid.begin(), grid.end(), v) != grid.end();
}

bool on_grid(const std::vector<double>& grid, double v) {
  return std::find(grid.begin(), grid.end(), v) != grid.end();
}

}  // namespace

ValidationResult validate_record(const ZooRecord& r, const ZooSpec& spec) {
  ValidationResult res;
  auto& v = res.violations;
  const auto& c = r.config;
  if (!on_grid(spec.width_grid, c.width_p)) v.emplace_back("off-grid width_p");
  if (!on_grid(spec.batch_grid, c.batch_size_t)) v.emplace_back("off-grid batch_size_t");
  if (!on_grid(spec.fraction_grid, c.data_fraction_n)) v.emplace_back("off-grid data_fraction_n");
  if (c.seed_group.size() < 2) v.emplace_back("seed_group must have at least 2 seeds");
  if (c.seed_group != spec.seeds) v.emplace_back("missing seed");
  if (r.provenance.spec_hash != spec.hash()) v.emplace_back("spec_hash mismatch");
  if (r.provenance.dataset_variant != spec.dataset_variant)
    v.emplace_back("dataset_variant mismatch");

  if (!r.ok()) return res;

  const auto& m = r.metrics;
  auto fraction = [&](const std::optional<double>& x, const char* name) {
    if (!x) v.push_back(std::string(name) + " missing");
    else if (!(*x >= 0.0 && *x <= 1.0)) v.push_back(std::string(name) + " must lie in [0, 1]");
  };
  auto nonneg = [&](const std::optional<double>& x, const char* name) {
    if (!x) v.push_back(std::string(name) + " missing");
    else if (!(*x >= 0.0) || !std::isfinite(*x)) v.push_back(std::string(name) + " must be >= 0");
  };
  fraction(m.train_error, "train_error");
  fraction(m.val_error, "val_error");
  nonneg(m.train_loss, "train_loss");
  nonneg(m.val_loss, "val_loss");
  if (m.connectivity_pct) {
    if (!(*m.connectivity_pct <= 0.0)) v.emplace_back("connectivity must be <= 0");
    else if (!(*m.connectivity_pct >= -100.0)) v.emplace_back("connectivity must be >= -100");
  }
  if (m.similarity && !(std::abs(*m.similarity) <= 1.0 + 1e-9))
    v.emplace_back("similarity must lie in [-1, 1]");
  if (m.sharpness_trace && !(*m.sharpness_trace > 0.0 && std::isfinite(*m.sharpness_trace)))
    v.emplace_back("sharpness_trace must be positive");
  if (m.sharpness_eig && !std::isfinite(*m.sharpness_eig))
    v.emplace_back("sharpness_eig must be finite");

  if (r.per_seed.size() != c.seed_group.size()) {
    v.emplace_back("missing seed");
  } else if (m.train_error) {
    double mean = 0.0;
    for (const auto& s : r.per_seed) mean += s.train_error;
    mean /= static_cast<double>(r.per_seed.size());
    if (std::abs(mean - *m.train_error) > 1e-12)
      v.emplace_back("train_error must equal the per-seed mean");
  }
  return res;
}

// ---------------------------------------------------------------- JSON

namespace {

Json opt(const std::optional<double>& x) { return x ? Json(*x) : Json(nullptr); }

std::optional<double> opt_get(const Json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<double>();
}

}  // namespace

void to_json(Json& j, const ConfigPoint& c) {
  j = Json{{"width_p", c.width_p},
           {"batch_size_t", c.batch_size_t},
           {"data_fraction_n", c.data_fraction_n},
           {"seeds", c.seed_group}};
}

void from_json(const Json& j, ConfigPoint& c) {
  j.at("width_p").get_to(c.width_p);
  j.at("batch_size_t").get_to(c.batch_size_t);
  j.at("data_fraction_n").get_to(c.data_fraction_n);
  j.at("seeds").get_to(c.seed_group);
}

void to_json(Json& j, const ZooSpec& s) {
  j = Json{{"width_grid", s.width_grid},
           {"batch_grid", s.batch_grid},
           {"fraction_grid", s.fraction_grid},
           {"seeds", s.seeds},
           {"dataset_variant", to_string(s.dataset_variant)},
           {"training_budget", {{"epochs", s.training_budget.epochs}, {"lr", s.training_budget.lr}}},
           {"task", {{"input_dim", s.task.input_dim},
                     {"classes", s.task.classes},
                     {"components", s.task.components},
                     {"separation", s.task.separation},
                     {"noise", s.task.noise}}},
           {"task_seed", s.task_seed},
           {"zoo_id", s.zoo_id},
           {"pool_size", s.pool_size},
           {"val_size", s.val_size},
           {"curve_epochs", s.curve_epochs},
           {"max_probes", s.max_probes},
           {"probe_tol", s.probe_tol},
           {"power_iters", s.power_iters},
           {"cka_samples", s.cka_samples}};
}

void from_json(const Json& j, ZooSpec& s) {
  // Absent keys keep their defaults so hand-written spec files can be short.
  ZooSpec d;
  s = d;
  auto get = [&](const char* key, auto& field) {
    if (auto it = j.find(key); it != j.end()) it->get_to(field);
  };
  get("width_grid", s.width_grid);
  get("batch_grid", s.batch_grid);
  get("fraction_grid", s.fraction_grid);
  get("seeds", s.seeds);
  if (auto it = j.find("dataset_variant"); it != j.end())
    s.dataset_variant = parse_variant(it->get<std::string>());
  if (auto it = j.find("training_budget"); it != j.end()) {
    if (auto e = it->find("epochs"); e != it->end()) e->get_to(s.training_budget.epochs);
    if (auto l = it->find("lr"); l != it->end()) l->get_to(s.training_budget.lr);
  }
  if (auto it = j.find("task"); it != j.end()) {
    auto sub = [&](const char* key, auto& field) {
      if (auto f = it->find(key); f != it->end()) f->get_to(field);
    };
    sub("input_dim", s.task.input_dim);
    sub("classes", s.task.classes);
    sub("components", s.task.components);
    sub("separation", s.task.separation);
    sub("noise", s.task.noise);
  }
  get("task_seed", s.task_seed);
  get("zoo_id", s.zoo_id);
  if (s.zoo_id.empty()) s.zoo_id = std::string(to_string(s.dataset_variant));
  get("pool_size", s.pool_size);
  get("val_size", s.val_size);
  get("curve_epochs", s.curve_epochs);
  get("max_probes", s.max_probes);
  get("probe_tol", s.probe_tol);
  get("power_iters", s.power_iters);
  get("cka_samples", s.cka_samples);
}

void to_json(Json& j, const MetricVector& m) {
  j = Json{{"train_error", opt(m.train_error)},
           {"val_error", opt(m.val_error)},
           {"train_loss", opt(m.train_loss)},
           {"val_loss", opt(m.val_loss)},
           {"connectivity_pct", opt(m.connectivity_pct)},
           {"sharpness_trace", opt(m.sharpness_trace)},
           {"sharpness_eig", opt(m.sharpness_eig)},
           {"similarity", opt(m.similarity)}};
}

void from_json(const Json& j, MetricVector& m) {
  m.train_error = opt_get(j, "train_error");
  m.val_error = opt_get(j, "val_error");
  m.train_loss = opt_get(j, "train_loss");
  m.val_loss = opt_get(j, "val_loss");
  m.connectivity_pct = opt_get(j, "connectivity_pct");
  m.sharpness_trace = opt_get(j, "sharpness_trace");
  m.sharpness_eig = opt_get(j, "sharpness_eig");
  m.similarity = opt_get(j, "similarity");
}

void to_json(Json& j, const SeedRun& r) {
  j = Json{{"seed", r.seed},
           {"train_error", r.train_error},
           {"val_error", r.val_error},
           {"train_loss", r.train_loss},
           {"val_loss", r.val_loss},
           {"sharpness_trace", opt(r.sharpness_trace)}};
}

void from_json(const Json& j, SeedRun& r) {
  j.at("seed").get_to(r.seed);
  j.at("train_error").get_to(r.train_error);
  j.at("val_error").get_to(r.val_error);
  j.at("train_loss").get_to(r.train_loss);
  j.at("val_loss").get_to(r.val_loss);
  r.sharpness_trace = opt_get(j, "sharpness_trace");
}

void to_json(Json& j, const ZooRecord& r) {
  j = Json{{"config", r.config},
           {"metrics", r.metrics},
           {"per_seed", r.per_seed},
           {"provenance",
            {{"zoo_id", r.provenance.zoo_id},
             {"dataset_variant", to_string(r.provenance.dataset_variant)},
             {"spec_hash", r.provenance.spec_hash}}},
           {"status", r.ok() ? "ok" : "failed"}};
}

void from_json(const Json& j, ZooRecord& r) {
  j.at("config").get_to(r.config);
  j.at("metrics").get_to(r.metrics);
  j.at("per_seed").get_to(r.per_seed);
  const auto& p = j.at("provenance");
  p.at("zoo_id").get_to(r.provenance.zoo_id);
  r.provenance.dataset_variant = parse_variant(p.at("dataset_variant").get<std::string>());
  p.at("spec_hash").get_to(r.provenance.spec_hash);
  const auto status = j.at("status").get<std::string>();
  if (status == "ok") r.status = RecordStatus::kOk;
  else if (status == "failed") r.status = RecordStatus::kFailed;
  else fail(ErrorCode::kSchema, "unknown status '" + status + "'");
}

}  // namespace mdiag
