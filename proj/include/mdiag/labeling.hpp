#pragma once

// Room-for-improvement (RFI) per failure source, RFI gaps and binary labels
// for the diagnosis questions.

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mdiag/domain.hpp"

namespace mdiag::labeling {

// Read-only view of a zoo indexed by grid key. The grid is inferred from the
// records, so failed records still mark their grid point.
class ZooTable {
 public:
  explicit ZooTable(std::span<const ZooRecord> records);

  const ZooSpec& grid() const { return grid_; }
  Bounds bounds() const { return grid_.bounds(); }
  const ZooRecord* find(const ConfigKey& key) const;
  // Seed-averaged validation error of an ok record, if present.
  std::optional<double> val_error(const ConfigKey& key) const;
  std::span<const ZooRecord> records() const { return records_; }

 private:
  std::span<const ZooRecord> records_;
  ZooSpec grid_;
  std::map<ConfigKey, const ZooRecord*> index_;
};

// E_val(config) minus the minimum E_val along the source's axis segment
// (current point included). nullopt when any point of the segment is missing
// or failed.
std::optional<double> rfi(const ZooTable& table, const ConfigKey& config, FailureSource source);

// G = RFI(t_large) - RFI(t_small).
std::optional<double> gap_q1(const ZooTable& table, const ConfigKey& config);
// G = RFI(model_size) - max(RFI(t_large), RFI(t_small)).
std::optional<double> gap_q2(const ZooTable& table, const ConfigKey& config);
// G = RFI(data_amount) - max(RFI(t_large), RFI(t_small)).
std::optional<double> gap_q2n(const ZooTable& table, const ConfigKey& config);
std::optional<double> gap(const ZooTable& table, const ConfigKey& config, Question q);

struct DiagnosisSample {
  ConfigPoint config;
  MetricVector metrics;  // features are derived from these at fit time
  Question question = Question::kQ1;
  double gap_G = 0.0;
  int label = 0;  // 1 iff gap_G > 0

  bool operator==(const DiagnosisSample&) const = default;
};

void to_json(Json& j, const DiagnosisSample& s);
void from_json(const Json& j, DiagnosisSample& s);

struct LabeledSet {
  std::vector<DiagnosisSample> samples;
  std::size_t excluded_zero_gap = 0;
  std::size_t excluded_unavailable = 0;
};

// Labels every ok configuration without throwing; G == 0 and unlabelable
// configurations are counted, not kept.
LabeledSet label_all(std::span<const ZooRecord> records, Question q);

// As label_all, but an empty result throws Error(kNoData).
LabeledSet build_dataset(std::span<const ZooRecord> records, Question q);

std::string to_jsonl(std::span<const DiagnosisSample> samples);
void save_jsonl(std::span<const DiagnosisSample> samples, const std::string& path);
std::vector<DiagnosisSample> load_jsonl(const std::string& path);

}  // namespace mdiag::labeling
