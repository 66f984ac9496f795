#pragma once

// Shared value types for the diagnosis pipeline: configuration grid, zoo
// spec, per-configuration measurements, failure sources and questions.

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace mdiag {

using Json = nlohmann::json;

enum class DatasetVariant { kClean, kLabelNoise10, kOodShift };

std::string_view to_string(DatasetVariant v);
DatasetVariant parse_variant(std::string_view s);

// The four-element failure-source set.
enum class FailureSource { kTSmall, kTLarge, kModelSize, kDataAmount };

std::string_view to_string(FailureSource s);

enum class Question { kQ1, kQ2, kQ2N };

std::string_view to_string(Question q);
Question parse_question(std::string_view s);

// Binary class names per question: index 1 is the G > 0 class.
std::string_view class_name(Question q, int label);

// Grid coordinates of one configuration. Ordering is (width, batch, fraction),
// the sweep's output order.
struct ConfigKey {
  int width_p = 0;
  int batch_size_t = 0;
  double data_fraction_n = 0.0;

  auto operator<=>(const ConfigKey&) const = default;
};

struct ConfigPoint {
  int width_p = 0;
  double data_fraction_n = 0.0;
  int batch_size_t = 0;
  std::vector<int> seed_group;

  ConfigKey key() const { return {width_p, batch_size_t, data_fraction_n}; }
  bool operator==(const ConfigPoint&) const = default;
};

struct Bounds {
  int p_max = 0;
  double n_max = 0.0;
  int t_min = 0;
  int t_max = 0;
};

struct TrainingBudget {
  int epochs = 100;
  double lr = 0.05;
  bool operator==(const TrainingBudget&) const = default;
};

// Gaussian-mixture task geometry: each class draws from `components`
// isotropic Gaussians whose means depend only on the task seed.
struct TaskGeometry {
  int input_dim = 8;
  int classes = 4;
  int components = 4;
  double separation = 3.0;
  double noise = 1.0;
  bool operator==(const TaskGeometry&) const = default;
};

// Declares the zoo grid plus the desk-scale knobs every measurement depends
// on. Bounds are always derived from the grids.
struct ZooSpec {
  std::vector<int> width_grid{2, 4, 8, 16, 32, 64};
  std::vector<int> batch_grid{4, 8, 16, 32, 64, 128};
  std::vector<double> fraction_grid{0.125, 0.25, 0.5, 0.75, 1.0};
  std::vector<int> seeds{0, 1, 2};
  DatasetVariant dataset_variant = DatasetVariant::kClean;
  TrainingBudget training_budget;
  TaskGeometry task;
  std::uint64_t task_seed = 0;
  std::string zoo_id;
  int pool_size = 1024;
  int val_size = 1024;
  int curve_epochs = 50;
  int max_probes = 100;
  double probe_tol = 0.01;
  int power_iters = 50;
  int cka_samples = 256;

  Bounds bounds() const;
  // Problems with the spec itself (non-increasing grids, too few seeds...).
  std::vector<std::string> check() const;
  std::size_t grid_size() const {
    return width_grid.size() * batch_grid.size() * fraction_grid.size();
  }
  // Stable 16-hex-digit digest of the canonical JSON form.
  std::string hash() const;

  bool operator==(const ZooSpec&) const = default;
};

// Classifier-independent measurements for one configuration. Every field is
// optional: failed records carry none, and individual landscape metrics may be
// unavailable (non-finite HVP, degenerate CKA).
struct MetricVector {
  std::optional<double> train_error;
  std::optional<double> val_error;
  std::optional<double> train_loss;
  std::optional<double> val_loss;
  std::optional<double> connectivity_pct;
  std::optional<double> sharpness_trace;
  std::optional<double> sharpness_eig;
  std::optional<double> similarity;

  bool operator==(const MetricVector&) const = default;
};

struct SeedRun {
  int seed = 0;
  double train_error = 0.0;
  double val_error = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  std::optional<double> sharpness_trace;

  bool operator==(const SeedRun&) const = default;
};

struct Provenance {
  std::string zoo_id;
  DatasetVariant dataset_variant = DatasetVariant::kClean;
  std::string spec_hash;

  bool operator==(const Provenance&) const = default;
};

enum class RecordStatus { kOk, kFailed };

struct ZooRecord {
  ConfigPoint config;
  MetricVector metrics;
  std::vector<SeedRun> per_seed;
  Provenance provenance;
  RecordStatus status = RecordStatus::kOk;

  bool ok() const { return status == RecordStatus::kOk; }
  bool operator==(const ZooRecord&) const = default;
};

struct ValidationResult {
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
};

ValidationResult validate_record(const ZooRecord& record, const ZooSpec& spec);

// JSON mappings (field names follow the zoo JSONL schema).
void to_json(Json& j, const ConfigPoint& c);
void from_json(const Json& j, ConfigPoint& c);
void to_json(Json& j, const ZooSpec& s);
void from_json(const Json& j, ZooSpec& s);
void to_json(Json& j, const MetricVector& m);
void from_json(const Json& j, MetricVector& m);
void to_json(Json& j, const SeedRun& r);
void from_json(const Json& j, SeedRun& r);
void to_json(Json& j, const ZooRecord& r);
void from_json(const Json& j, ZooRecord& r);

// The default desk zoo: six widths, six batch sizes, five fractions, three
// seeds.
ZooSpec default_zoo_spec(DatasetVariant variant = DatasetVariant::kClean);

}  // namespace mdiag
