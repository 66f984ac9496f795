#pragma once

// Hand-built zoos for tests that must not depend on training.

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "mdiag/domain.hpp"

namespace mdiag::testing {

inline ZooSpec tiny_spec(DatasetVariant v = DatasetVariant::kClean) {
  ZooSpec s = default_zoo_spec(v);
  s.width_grid = {2, 4};
  s.batch_grid = {4, 8};
  s.fraction_grid = {0.5, 1.0};
  s.seeds = {0, 1};
  s.pool_size = 32;
  s.val_size = 32;
  s.training_budget.epochs = 2;
  s.curve_epochs = 2;
  s.max_probes = 5;
  s.power_iters = 5;
  s.cka_samples = 16;
  return s;
}

// A valid ok record with the given seed-averaged validation error and
// arbitrary (seeded) other metrics.
inline ZooRecord synthetic_record(const ZooSpec& spec, const ConfigKey& key, double e_val,
                                  std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ZooRecord r;
  r.config = {key.width_p, key.data_fraction_n, key.batch_size_t, spec.seeds};
  double tr = 0.0;
  for (int s : spec.seeds) {
    SeedRun run;
    run.seed = s;
    run.train_error = 0.5 * u(rng);
    run.val_error = e_val;
    run.train_loss = u(rng);
    run.val_loss = u(rng);
    run.sharpness_trace = std::pow(10.0, 4.0 + 5.0 * u(rng));
    tr += run.train_error;
    r.per_seed.push_back(run);
  }
  auto& m = r.metrics;
  m.train_error = tr / static_cast<double>(spec.seeds.size());
  m.val_error = e_val;
  m.train_loss = r.per_seed[0].train_loss;
  m.val_loss = r.per_seed[0].val_loss;
  m.connectivity_pct = -30.0 * u(rng);
  m.sharpness_trace = r.per_seed[0].sharpness_trace;
  m.sharpness_eig = 1.0 + u(rng);
  m.similarity = 0.2 + 0.6 * u(rng);
  r.provenance = {spec.zoo_id, spec.dataset_variant, spec.hash()};
  return r;
}

inline std::vector<ZooRecord> synthetic_zoo(const ZooSpec& spec,
                                            const std::function<double(const ConfigKey&)>& e_val,
                                            std::uint64_t seed = 1) {
  std::vector<ZooRecord> out;
  for (int p : spec.width_grid)
    for (int t : spec.batch_grid)
      for (double n : spec.fraction_grid) {
        const ConfigKey k{p, t, n};
        out.push_back(synthetic_record(spec, k, e_val(k), seed++));
      }
  return out;
}

}  // namespace mdiag::testing
