#include "mdiag/labeling.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "mdiag/error.hpp"
#include "mdiag/zoo.hpp"

namespace mdiag::labeling {

ZooTable::ZooTable(std::span<const ZooRecord> records)
    : records_(records),
      grid_(zoo::infer_grid(std::vector<ZooRecord>(records.begin(), records.end()))) {
  for (const auto& r : records_) index_[r.config.key()] = &r;
}

const ZooRecord* ZooTable::find(const ConfigKey& key) const {
  auto it = index_.find(key);
  return it == index_.end() ? nullptr : it->second;
}

std::optional<double> ZooTable::val_error(const ConfigKey& key) const {
  const auto* r = find(key);
  if (!r || !r->ok()) return std::nullopt;
  return r->metrics.val_error;
}

namespace {

template <class T>
std::vector<T> segment(const std::vector<T>& axis, const T& from, const T& to) {
  std::vector<T> out;
  for (const auto& v : axis)
    if (!(v < from) && !(to < v)) out.push_back(v);
  return out;
}

}  // namespace

std::optional<double> rfi(const ZooTable& table, const ConfigKey& config, FailureSource source) {
  const auto current = table.val_error(config);
  if (!current) return std::nullopt;
  const auto& g = table.grid();
  const Bounds b = table.bounds();

  std::vector<ConfigKey> keys;
  switch (source) {
    case FailureSource::kModelSize:
      for (int p : segment(g.width_grid, config.width_p, b.p_max))
        keys.push_back({p, config.batch_size_t, config.data_fraction_n});
      break;
    case FailureSource::kDataAmount:
      for (double n : segment(g.fraction_grid, config.data_fraction_n, b.n_max))
        keys.push_back({config.width_p, config.batch_size_t, n});
      break;
    case FailureSource::kTLarge:
      for (int t : segment(g.batch_grid, b.t_min, config.batch_size_t))
        keys.push_back({config.width_p, t, config.data_fraction_n});
      break;
    case FailureSource::kTSmall:
      for (int t : segment(g.batch_grid, config.batch_size_t, b.t_max))
        keys.push_back({config.width_p, t, config.data_fraction_n});
      break;
  }
  double best = *current;
  for (const auto& k : keys) {
    const auto e = table.val_error(k);
    if (!e) return std::nullopt;
    best = std::min(best, *e);
  }
  return *current - best;
}

std::optional<double> gap_q1(const ZooTable& table, const ConfigKey& config) {
  const auto up = rfi(table, config, FailureSource::kTLarge);
  const auto down = rfi(table, config, FailureSource::kTSmall);
  if (!up || !down) return std::nullopt;
  return *up - *down;
}

namespace {

std::optional<double> gap_against_optimizer(const ZooTable& table, const ConfigKey& config,
                                            FailureSource load) {
  const auto l = rfi(table, config, load);
  const auto up = rfi(table, config, FailureSource::kTLarge);
  const auto down = rfi(table, config, FailureSource::kTSmall);
  if (!l || !up || !down) return std::nullopt;
  return *l - std::max(*up, *down);
}

}  // namespace

std::optional<double> gap_q2(const ZooTable& table, const ConfigKey& config) {
  return gap_against_optimizer(table, config, FailureSource::kModelSize);
}

std::optional<double> gap_q2n(const ZooTable& table, const ConfigKey& config) {
  return gap_against_optimizer(table, config, FailureSource::kDataAmount);
}

std::optional<double> gap(const ZooTable& table, const ConfigKey& config, Question q) {
  switch (q) {
    case Question::kQ1: return gap_q1(table, config);
    case Question::kQ2: return gap_q2(table, config);
    case Question::kQ2N: return gap_q2n(table, config);
  }
  return std::nullopt;
}

LabeledSet label_all(std::span<const ZooRecord> records, Question q) {
  const ZooTable table(records);
  LabeledSet out;
  for (const auto& r : records) {
    const auto g = r.ok() ? gap(table, r.config.key(), q) : std::nullopt;
    if (!g) {
      ++out.excluded_unavailable;
    } else if (*g == 0.0) {
      ++out.excluded_zero_gap;
    } else {
      out.samples.push_back({r.config, r.metrics, q, *g, *g > 0.0 ? 1 : 0});
    }
  }
  return out;
}

LabeledSet build_dataset(std::span<const ZooRecord> records, Question q) {
  auto out = label_all(records, q);
  if (out.samples.empty())
    fail(ErrorCode::kNoData, "no labelable configurations (" +
                                 std::to_string(out.excluded_zero_gap) + " with G = 0, " +
                                 std::to_string(out.excluded_unavailable) + " unavailable)");
  return out;
}

void to_json(Json& j, const DiagnosisSample& s) {
  j = Json{{"question", to_string(s.question)},
           {"config", s.config},
           {"gap_G", s.gap_G},
           {"label", s.label},
           {"label_name", class_name(s.question, s.label)},
           {"metrics", s.metrics}};
}

void from_json(const Json& j, DiagnosisSample& s) {
  s.question = parse_question(j.at("question").get<std::string>());
  j.at("config").get_to(s.config);
  j.at("gap_G").get_to(s.gap_G);
  j.at("label").get_to(s.label);
  if (s.label != 0 && s.label != 1) fail(ErrorCode::kSchema, "label must be 0 or 1");
  if ((s.gap_G > 0.0) != (s.label == 1) || s.gap_G == 0.0)
    fail(ErrorCode::kSchema, "label does not match the sign of gap_G");
  if (auto it = j.find("metrics"); it != j.end()) it->get_to(s.metrics);
}

std::string to_jsonl(std::span<const DiagnosisSample> samples) {
  std::string out;
  for (const auto& s : samples) {
    out += Json(s).dump();
    out += '\n';
  }
  return out;
}

void save_jsonl(std::span<const DiagnosisSample> samples, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(ErrorCode::kIo, "cannot open '" + path + "' for writing");
  f << to_jsonl(samples);
  if (!f) fail(ErrorCode::kIo, "write to '" + path + "' failed");
}

std::vector<DiagnosisSample> load_jsonl(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(ErrorCode::kIo, "cannot open '" + path + "'");
  std::vector<DiagnosisSample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(Json::parse(line).get<DiagnosisSample>());
    } catch (const Json::exception& e) {
      fail(ErrorCode::kSchema, "line " + std::to_string(lineno) + ": " + e.what());
    } catch (const Error& e) {
      fail(ErrorCode::kSchema, "line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace mdiag::labeling
