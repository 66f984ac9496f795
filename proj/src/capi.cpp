#include "mdiag/mdiag.h"

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <memory>
#include <thread>
#include <variant>

#include "mdiag/diagnosis.hpp"
#include "mdiag/error.hpp"
#include "mdiag/eval.hpp"
#include "mdiag/labeling.hpp"
#include "mdiag/zoo.hpp"

struct mdiag_zoo {
  std::vector<mdiag::ZooRecord> records;
};

struct mdiag_samples {
  std::vector<mdiag::labeling::DiagnosisSample> samples;
};

struct mdiag_model {
  mdiag::diagnosis::FittedModel model;
};

namespace {

using namespace mdiag;

thread_local std::string g_last_error;

mdiag_status to_status(ErrorCode c) {
  switch (c) {
    case ErrorCode::kInvalidArgument: return MDIAG_E_INVALID_ARGUMENT;
    case ErrorCode::kIo: return MDIAG_E_IO;
    case ErrorCode::kSchema: return MDIAG_E_SCHEMA;
    case ErrorCode::kSpecHashMismatch: return MDIAG_E_SPEC_HASH;
    case ErrorCode::kNoData: return MDIAG_E_NO_DATA;
    case ErrorCode::kDiverged: return MDIAG_E_DIVERGED;
    case ErrorCode::kUnavailable: return MDIAG_E_UNAVAILABLE;
    case ErrorCode::kInternal: return MDIAG_E_INTERNAL;
  }
  return MDIAG_E_INTERNAL;
}

template <class Fn>
mdiag_status guarded(Fn&& fn) {
  try {
    fn();
    return MDIAG_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const Json::exception& e) {
    g_last_error = e.what();
    return MDIAG_E_SCHEMA;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return MDIAG_E_INTERNAL;
  }
}

void require(const void* p, const char* what) {
  if (!p) fail(ErrorCode::kInvalidArgument, std::string(what) + " is null");
}

char* dup_string(const std::string& s) {
  auto* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

Json parse_json(const char* text, const char* what) {
  try {
    return Json::parse(text);
  } catch (const Json::exception& e) {
    fail(ErrorCode::kSchema, std::string(what) + ": " + e.what());
  }
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(ErrorCode::kIo, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(ErrorCode::kIo, "cannot open '" + path + "' for writing");
  f << text;
  if (!f) fail(ErrorCode::kIo, "write to '" + path + "' failed");
}

int resolve_jobs(int jobs) {
  if (jobs > 0) return jobs;
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

void apply_search(const Json& options, diagnosis::MdFitOptions& md) {
  auto it = options.find("search");
  if (it == options.end()) return;
  for (const auto& [name, triple] : it->items()) {
    const auto f = diagnosis::parse_feature(name);
    if (!triple.is_array() || triple.size() != 3)
      fail(ErrorCode::kSchema, "search range for '" + name + "' must be [initial, lower, upper]");
    diagnosis::SearchTriple s{triple[0].get<double>(), triple[1].get<double>(),
                              triple[2].get<double>()};
    if (!(s.lower <= s.initial && s.initial <= s.upper))
      fail(ErrorCode::kInvalidArgument,
           "search range for '" + name + "' needs lower <= initial <= upper");
    md.search_overrides.emplace_back(f, s);
  }
}

}  // namespace

extern "C" {

const char* mdiag_version(void) { return "0.1.0"; }

const char* mdiag_last_error(void) { return g_last_error.c_str(); }

const char* mdiag_status_name(mdiag_status status) {
  switch (status) {
    case MDIAG_OK: return "ok";
    case MDIAG_E_INVALID_ARGUMENT: return "invalid_argument";
    case MDIAG_E_IO: return "io";
    case MDIAG_E_SCHEMA: return "schema";
    case MDIAG_E_SPEC_HASH: return "spec_hash";
    case MDIAG_E_NO_DATA: return "no_data";
    case MDIAG_E_DIVERGED: return "diverged";
    case MDIAG_E_UNAVAILABLE: return "unavailable";
    case MDIAG_E_INTERNAL: return "internal";
  }
  return "unknown";
}

void mdiag_string_free(char* s) { std::free(s); }

mdiag_status mdiag_spec_default(const char* variant, char** json_out) {
  return guarded([&] {
    require(variant, "variant");
    require(json_out, "json_out");
    DatasetVariant v;
    try {
      v = parse_variant(variant);
    } catch (const Error& e) {
      fail(ErrorCode::kInvalidArgument, e.what());
    }
    *json_out = dup_string(Json(default_zoo_spec(v)).dump(2) + "\n");
  });
}

mdiag_status mdiag_zoo_generate(const char* spec_json, int jobs, mdiag_progress_fn progress,
                                void* user, mdiag_zoo** out) {
  return guarded([&] {
    require(spec_json, "spec_json");
    require(out, "out");
    const ZooSpec spec = parse_json(spec_json, "spec").get<ZooSpec>();
    zoo::SweepOptions opts;
    opts.jobs = resolve_jobs(jobs);
    if (progress) opts.progress = [=](std::size_t d, std::size_t t) { progress(d, t, user); };
    auto z = std::make_unique<mdiag_zoo>();
    z->records = zoo::sweep(spec, opts);
    *out = z.release();
  });
}

mdiag_status mdiag_zoo_load(const char* path, const char* spec_json, mdiag_zoo** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    auto z = std::make_unique<mdiag_zoo>();
    if (spec_json)
      z->records = zoo::load_jsonl(path, parse_json(spec_json, "spec").get<ZooSpec>());
    else
      z->records = zoo::load_jsonl(path);
    *out = z.release();
  });
}

mdiag_status mdiag_zoo_save(const mdiag_zoo* zoo, const char* path) {
  return guarded([&] {
    require(zoo, "zoo");
    require(path, "path");
    zoo::save_jsonl(zoo->records, path);
  });
}

size_t mdiag_zoo_size(const mdiag_zoo* zoo) { return zoo ? zoo->records.size() : 0; }

size_t mdiag_zoo_failed(const mdiag_zoo* zoo) {
  if (!zoo) return 0;
  std::size_t n = 0;
  for (const auto& r : zoo->records) n += !r.ok();
  return n;
}

void mdiag_zoo_free(mdiag_zoo* zoo) { delete zoo; }

mdiag_status mdiag_label(const mdiag_zoo* zoo, const char* question, mdiag_samples** out,
                         size_t* excluded_zero_gap, size_t* excluded_unavailable) {
  return guarded([&] {
    require(zoo, "zoo");
    require(question, "question");
    require(out, "out");
    auto set = labeling::build_dataset(zoo->records, parse_question(question));
    if (excluded_zero_gap) *excluded_zero_gap = set.excluded_zero_gap;
    if (excluded_unavailable) *excluded_unavailable = set.excluded_unavailable;
    auto s = std::make_unique<mdiag_samples>();
    s->samples = std::move(set.samples);
    *out = s.release();
  });
}

mdiag_status mdiag_samples_load(const char* path, mdiag_samples** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    auto s = std::make_unique<mdiag_samples>();
    s->samples = labeling::load_jsonl(path);
    *out = s.release();
  });
}

mdiag_status mdiag_samples_save(const mdiag_samples* samples, const char* path) {
  return guarded([&] {
    require(samples, "samples");
    require(path, "path");
    labeling::save_jsonl(samples->samples, path);
  });
}

size_t mdiag_samples_size(const mdiag_samples* samples) {
  return samples ? samples->samples.size() : 0;
}

void mdiag_samples_free(mdiag_samples* samples) { delete samples; }

mdiag_status mdiag_fit(const mdiag_samples* samples, const char* method, const char* features,
                       const char* fit_mode, const char* options_json, uint64_t seed,
                       mdiag_model** out) {
  return guarded([&] {
    require(samples, "samples");
    require(method, "method");
    require(out, "out");
    if (samples->samples.empty()) fail(ErrorCode::kNoData, "no training samples");
    const Question q = samples->samples.front().question;
    for (const auto& s : samples->samples)
      if (s.question != q) fail(ErrorCode::kSchema, "training samples mix questions");
    const Json options = options_json ? parse_json(options_json, "options") : Json::object();

    auto m = std::make_unique<mdiag_model>();
    const std::string how = method;
    if (how == "mdtree" || how == "mdtree-sim") {
      diagnosis::MdFitOptions o;
      o.fit_mode = diagnosis::parse_fit_mode(fit_mode ? fit_mode : "brent");
      apply_search(options, o);
      m->model = diagnosis::mdtree_fit(samples->samples, q,
                                       how == "mdtree" ? diagnosis::MdVariant::kSharpness
                                                       : diagnosis::MdVariant::kSimilarity,
                                       o, seed);
    } else if (how == "cart") {
      diagnosis::CartOptions o;
      o.max_depth = options.value("max_depth", o.max_depth);
      o.min_samples_split = options.value("min_samples_split", o.min_samples_split);
      if (o.max_depth < 0 || o.min_samples_split < 2)
        fail(ErrorCode::kInvalidArgument, "max_depth must be >= 0 and min_samples_split >= 2");
      const auto policy = diagnosis::parse_policy(features ? features : "validation");
      auto cart = diagnosis::cart_fit(samples->samples, policy, q, seed, o);
      if (cart.train_samples == 0)
        fail(ErrorCode::kNoData, "no training sample has every feature of the policy");
      m->model = std::move(cart);
    } else {
      fail(ErrorCode::kInvalidArgument, "unknown method '" + how + "'");
    }
    *out = m.release();
  });
}

mdiag_status mdiag_model_load(const char* path, mdiag_model** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    auto m = std::make_unique<mdiag_model>();
    m->model = diagnosis::model_from_json(parse_json(read_file(path).c_str(), path));
    *out = m.release();
  });
}

mdiag_status mdiag_model_save(const mdiag_model* model, const char* path) {
  return guarded([&] {
    require(model, "model");
    require(path, "path");
    write_file(path, diagnosis::model_to_json(model->model).dump(2) + "\n");
  });
}

mdiag_status mdiag_model_json(const mdiag_model* model, char** json_out) {
  return guarded([&] {
    require(model, "model");
    require(json_out, "json_out");
    *json_out = dup_string(diagnosis::model_to_json(model->model).dump(2) + "\n");
  });
}

double mdiag_model_train_accuracy(const mdiag_model* model) {
  if (!model) return 0.0;
  return std::visit([](const auto& m) { return m.train_accuracy; }, model->model);
}

size_t mdiag_model_train_samples(const mdiag_model* model) {
  if (!model) return 0;
  return std::visit([](const auto& m) { return m.train_samples; }, model->model);
}

void mdiag_model_free(mdiag_model* model) { delete model; }

mdiag_status mdiag_predict_file(const mdiag_model* model, const char* in_path,
                                const char* out_path) {
  return guarded([&] {
    require(model, "model");
    require(in_path, "in_path");
    require(out_path, "out_path");
    const Question q = std::visit([](const auto& m) { return m.question; }, model->model);
    std::istringstream in(read_file(in_path));
    std::string out, line;
    for (int n = 1; std::getline(in, line); ++n) {
      if (line.empty()) continue;
      try {
        const Json j = Json::parse(line);
        if (j.value("status", std::string("ok")) == "failed") continue;
        const auto config = j.at("config").get<ConfigPoint>();
        const auto metrics = j.at("metrics").get<MetricVector>();
        const auto p = diagnosis::predict(model->model, config, metrics);
        Json o{{"config", config},
               {"label", p.label},
               {"label_name", class_name(q, p.label)},
               {"regime", p.regime}};
        out += o.dump() + "\n";
      } catch (const Json::exception& e) {
        fail(ErrorCode::kSchema, "line " + std::to_string(n) + ": " + e.what());
      } catch (const Error& e) {
        fail(e.code(), "line " + std::to_string(n) + ": " + e.what());
      }
    }
    write_file(out_path, out);
  });
}

mdiag_status mdiag_eval_transfer(const mdiag_zoo* train, const mdiag_zoo* test,
                                 const char* request_json, char** csv_out) {
  return guarded([&] {
    require(train, "train");
    require(test, "test");
    require(request_json, "request_json");
    require(csv_out, "csv_out");
    const Json r = parse_json(request_json, "request");
    eval::TransferSpec spec;
    spec.mode = eval::parse_transfer_mode(r.value("mode", std::string("dataset")));
    if (r.contains("shots")) spec.shots = r.at("shots").get<std::vector<int>>();
    if (r.contains("caps")) spec.caps = r.at("caps").get<std::vector<double>>();
    if (r.contains("seeds")) spec.seeds = r.at("seeds").get<std::vector<std::uint64_t>>();
    apply_search(r, spec.md);
    const Question q = parse_question(r.value("question", std::string("q1")));
    const int jobs = resolve_jobs(r.value("jobs", 1));
    std::vector<std::string> methods{"mdtree"};
    if (r.contains("methods")) methods = r.at("methods").get<std::vector<std::string>>();

    std::vector<eval::TransferRow> rows;
    for (const auto& name : methods) {
      auto part = eval::evaluate(spec, eval::parse_method(name), q, train->records,
                                 test->records, jobs);
      rows.insert(rows.end(), part.begin(), part.end());
    }
    *csv_out = dup_string(eval::to_csv(rows));
  });
}

mdiag_status mdiag_eval_one_step(const mdiag_zoo* test, const char* request_json,
                                 const mdiag_model* model, const mdiag_model* direction_model,
                                 char** csv_out) {
  return guarded([&] {
    require(test, "test");
    require(request_json, "request_json");
    require(csv_out, "csv_out");
    const Json r = parse_json(request_json, "request");
    const Question q = parse_question(r.value("question", std::string("q1")));
    const std::string method = r.value("method", std::string("model"));

    eval::OneStepDiagnosis diag;
    if (method == "random") {
      diag.kind = eval::OneStepDiagnosis::Kind::kRandom;
    } else if (method == "optimal") {
      diag.kind = eval::OneStepDiagnosis::Kind::kOptimal;
    } else if (method == "model") {
      require(model, "model");
      diag.kind = eval::OneStepDiagnosis::Kind::kModel;
      diag.model = model->model;
      if (direction_model) diag.direction_model = direction_model->model;
    } else {
      fail(ErrorCode::kInvalidArgument, "unknown one-step method '" + method + "'");
    }
    if (diag.model) {
      const Question mq = std::visit([](const auto& m) { return m.question; }, *diag.model);
      if (mq != q) fail(ErrorCode::kInvalidArgument, "model was fitted for another question");
    }
    if (diag.direction_model &&
        std::visit([](const auto& m) { return m.question; }, *diag.direction_model) !=
            Question::kQ1)
      fail(ErrorCode::kInvalidArgument, "direction model must be a q1 model");

    std::vector<std::string> steps{"optimal"};
    if (r.contains("steps")) steps = r.at("steps").get<std::vector<std::string>>();
    std::vector<std::uint64_t> seeds(std::begin(eval::kDefaultSeeds), std::end(eval::kDefaultSeeds));
    if (r.contains("seeds")) seeds = r.at("seeds").get<std::vector<std::uint64_t>>();

    std::vector<eval::OneStepResult> results;
    for (const auto& s : steps)
      results.push_back(
          eval::one_step_eval(test->records, q, diag, eval::parse_step_policy(s), seeds));
    *csv_out = dup_string(eval::to_csv(results));
  });
}

mdiag_status mdiag_report(const char* transfer_csv, const char* format, char** out) {
  return guarded([&] {
    require(transfer_csv, "transfer_csv");
    require(out, "out");
    const std::string fmt = format ? format : "csv";
    const auto summary = eval::summarize(eval::parse_transfer_csv(transfer_csv));
    if (fmt == "csv")
      *out = dup_string(eval::summary_csv(summary));
    else if (fmt == "plotdata")
      *out = dup_string(eval::plotdata(summary));
    else
      fail(ErrorCode::kInvalidArgument, "unknown report format '" + fmt + "'");
  });
}

}  // extern "C"
