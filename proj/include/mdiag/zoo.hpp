#pragma once

// Configuration sweep (train -> measure -> aggregate) and JSONL persistence.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mdiag/domain.hpp"
#include "mdiag/nnkit.hpp"

namespace mdiag::zoo {

struct SweepOptions {
  int jobs = 1;
  // Called after each configuration completes (from worker threads).
  std::function<void(std::size_t done, std::size_t total)> progress;
};

// Training pool (spec.dataset_variant) and the clean validation set.
struct TaskData {
  nn::Dataset pool;
  nn::Dataset validation;
};

TaskData make_task_data(const ZooSpec& spec);

// Deterministic per-run seed derived from the task seed, grid key and
// training seed.
std::uint64_t run_seed(std::uint64_t task_seed, const ConfigKey& key, int seed, std::uint64_t salt);

// Trains every seed of one configuration and measures it. Training
// divergence yields a failed record instead of an exception.
ZooRecord measure_config(const ZooSpec& spec, const ConfigPoint& config, const TaskData& data);

// One record per grid point, sorted by (width, batch, fraction).
std::vector<ZooRecord> sweep(const ZooSpec& spec, const SweepOptions& options = {});
std::vector<ZooRecord> sweep(ZooSpec spec, std::uint64_t task_seed,
                             const SweepOptions& options = {});

std::string to_jsonl(const std::vector<ZooRecord>& records);
void save_jsonl(const std::vector<ZooRecord>& records, const std::string& path);

// Parses and validates every line against `spec`. Throws Error(kSchema) naming
// the line for malformed or invalid records and Error(kSpecHashMismatch) when a
// record was produced under a different spec.
std::vector<ZooRecord> load_jsonl(const std::string& path, const ZooSpec& spec);
std::vector<ZooRecord> parse_jsonl(const std::string& text, const ZooSpec& spec);

// Spec-less load: grids, seeds and hash are inferred from the records, which
// must agree with each other.
std::vector<ZooRecord> load_jsonl(const std::string& path);
std::vector<ZooRecord> parse_jsonl(const std::string& text);

// Grid and bounds reconstructed from a record table (hash left empty).
ZooSpec infer_grid(const std::vector<ZooRecord>& records);

}  // namespace mdiag::zoo
