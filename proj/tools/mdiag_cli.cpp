// Command-line front end. Talks to the library only through mdiag.h.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "mdiag/mdiag.h"

namespace {

using Json = nlohmann::ordered_json;

// Carries a library status out of a subcommand.
struct Failure {
  mdiag_status status;
  std::string message;
};

void check(mdiag_status s) {
  if (s != MDIAG_OK) throw Failure{s, mdiag_last_error()};
}

[[noreturn]] void usage_error(const std::string& msg) {
  throw Failure{MDIAG_E_INVALID_ARGUMENT, msg};
}

std::string read_text(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Failure{MDIAG_E_IO, "cannot open '" + path + "'"};
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Failure{MDIAG_E_IO, "cannot open '" + path + "' for writing"};
  f << text;
  if (!f) throw Failure{MDIAG_E_IO, "write to '" + path + "' failed"};
}

// Owns a string returned by the library.
struct LibString {
  char* p = nullptr;
  ~LibString() { mdiag_string_free(p); }
  std::string str() const { return p ? p : ""; }
};

template <class T, void (*Free)(T*)>
struct Handle {
  T* p = nullptr;
  Handle() = default;
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  ~Handle() { Free(p); }
};

using Zoo = Handle<mdiag_zoo, mdiag_zoo_free>;
using Samples = Handle<mdiag_samples, mdiag_samples_free>;
using Model = Handle<mdiag_model, mdiag_model_free>;

// "feature=initial,lower,upper" -> search override entry.
Json parse_search(const std::vector<std::string>& specs) {
  Json search = Json::object();
  for (const auto& s : specs) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) usage_error("--search expects feature=initial,lower,upper");
    std::vector<double> v;
    std::stringstream ss(s.substr(eq + 1));
    for (std::string part; std::getline(ss, part, ',');) {
      try {
        v.push_back(std::stod(part));
      } catch (const std::exception&) {
        usage_error("--search value '" + part + "' is not a number");
      }
    }
    if (v.size() != 3) usage_error("--search expects three numbers for " + s.substr(0, eq));
    search[s.substr(0, eq)] = v;
  }
  return search;
}

void load_zoo(Zoo& z, const std::string& path, const std::string& spec_path) {
  if (spec_path.empty()) {
    check(mdiag_zoo_load(path.c_str(), nullptr, &z.p));
  } else {
    const auto spec = read_text(spec_path);
    check(mdiag_zoo_load(path.c_str(), spec.c_str(), &z.p));
  }
}

void progress(size_t done, size_t total, void*) {
  std::fprintf(stderr, "\r%zu/%zu configurations", done, total);
  if (done == total) std::fputc('\n', stderr);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Model diagnosis from loss-landscape metrics"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(mdiag_version()));

  // zoo
  auto* zoo_cmd = app.add_subcommand("zoo", "Generate or inspect configuration zoos");
  zoo_cmd->require_subcommand(1);
  std::string spec_path, zoo_out, variant = "clean";
  int jobs = 0;
  bool quiet = false;
  auto* gen = zoo_cmd->add_subcommand("gen", "Train and measure every grid configuration");
  gen->add_option("--spec", spec_path, "Zoo spec JSON")->required();
  gen->add_option("--out", zoo_out, "Output JSONL")->required();
  gen->add_option("--jobs", jobs, "Worker threads (0 = all cores)");
  gen->add_flag("--quiet", quiet, "No progress output");
  auto* spec_cmd = zoo_cmd->add_subcommand("spec", "Write the default spec for a dataset variant");
  spec_cmd->add_option("--variant", variant)
      ->check(CLI::IsMember({"clean", "label_noise_10pct", "ood_shift"}));
  spec_cmd->add_option("--out", zoo_out, "Output JSON")->required();

  // label
  auto* label = app.add_subcommand("label", "Label a zoo for one diagnosis question");
  std::string zoo_path, question = "q1", out_path;
  label->add_option("--zoo", zoo_path)->required();
  label->add_option("--spec", spec_path, "Validate against this spec (hash included)");
  label->add_option("--question", question)->check(CLI::IsMember({"q1", "q2", "q2n"}));
  label->add_option("--out", out_path)->required();

  // fit
  auto* fit = app.add_subcommand("fit", "Fit an MD tree or CART baseline");
  std::string train_path, method = "mdtree", features = "landscape", fit_mode = "brent";
  std::vector<std::string> search;
  int max_depth = 4;
  std::uint64_t seed = 0;
  fit->add_option("--train", train_path, "Labeled JSONL")->required();
  fit->add_option("--method", method)->check(CLI::IsMember({"mdtree", "mdtree-sim", "cart"}));
  fit->add_option("--features", features, "CART feature policy")
      ->check(CLI::IsMember({"landscape", "validation", "hyper", "combined"}));
  fit->add_option("--fit-mode", fit_mode)->check(CLI::IsMember({"brent", "exact"}));
  fit->add_option("--search", search, "Threshold search override feature=initial,lower,upper");
  fit->add_option("--max-depth", max_depth, "CART depth");
  fit->add_option("--seed", seed);
  fit->add_option("--out", out_path)->required();

  // predict
  auto* predict = app.add_subcommand("predict", "Diagnose configurations with a fitted model");
  std::string model_path, in_path;
  predict->add_option("--model", model_path)->required();
  predict->add_option("--in", in_path, "Zoo or labeled JSONL")->required();
  predict->add_option("--out", out_path)->required();

  // eval
  auto* eval = app.add_subcommand("eval", "Transfer and one-step evaluations");
  eval->require_subcommand(1);
  auto* transfer = eval->add_subcommand("transfer", "Few-shot dataset or scale transfer");
  std::string mode = "dataset", train_zoo, test_zoo, train_spec, test_spec;
  std::vector<std::string> methods{"mdtree"};
  std::vector<int> shots;
  std::vector<double> caps;
  std::vector<std::uint64_t> seeds;
  transfer->add_option("--mode", mode)->check(CLI::IsMember({"dataset", "data-cap", "param-cap"}));
  transfer->add_option("--train-zoo", train_zoo, "Clean zoo JSONL")->required();
  transfer->add_option("--test-zoo", test_zoo, "Label-noise zoo JSONL")->required();
  transfer->add_option("--train-spec", train_spec);
  transfer->add_option("--test-spec", test_spec);
  transfer->add_option("--question", question)->check(CLI::IsMember({"q1", "q2", "q2n"}));
  transfer->add_option("--methods", methods)->delimiter(',');
  transfer->add_option("--shots", shots)->delimiter(',');
  transfer->add_option("--caps", caps)->delimiter(',');
  transfer->add_option("--seeds", seeds)->delimiter(',');
  transfer->add_option("--search", search, "Threshold search override feature=initial,lower,upper");
  transfer->add_option("--jobs", jobs, "Worker threads (0 = all cores)");
  transfer->add_option("--out", out_path, "CSV")->required();

  auto* one_step = eval->add_subcommand("one-step", "One diagnosed configuration change");
  std::vector<std::string> steps{"optimal"};
  std::string diag = "model", direction_model_path;
  one_step->add_option("--step", steps)->delimiter(',')->check(CLI::IsMember({"fixed", "random", "optimal"}));
  one_step->add_option("--zoo", test_zoo, "Test zoo JSONL")->required();
  one_step->add_option("--spec", test_spec);
  one_step->add_option("--question", question)->check(CLI::IsMember({"q1", "q2", "q2n"}));
  one_step->add_option("--diagnosis", diag)->check(CLI::IsMember({"model", "random", "optimal"}));
  one_step->add_option("--model", model_path);
  one_step->add_option("--direction-model", direction_model_path, "Q1 model for the t direction")
      ;
  one_step->add_option("--seeds", seeds)->delimiter(',');
  one_step->add_option("--out", out_path, "CSV")->required();

  // report
  auto* report = app.add_subcommand("report", "Aggregate a transfer CSV");
  std::string format;
  report->add_option("--in", in_path)->required();
  report->add_option("--out", out_path)->required();
  report->add_option("--format", format, "csv or plotdata (default from --out extension)")
      ->check(CLI::IsMember({"csv", "plotdata"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::string msg = e.what();
    for (auto& c : msg)
      if (c == '\n' || c == '"') c = ' ';
    std::fprintf(stderr, "error code=usage msg=\"%s\"\n", msg.c_str());
    return 64;
  }

  try {
    if (*gen) {
      const auto spec = read_text(spec_path);
      Zoo z;
      check(mdiag_zoo_generate(spec.c_str(), jobs, quiet ? nullptr : progress, nullptr, &z.p));
      check(mdiag_zoo_save(z.p, zoo_out.c_str()));
      std::printf("%zu records (%zu failed) -> %s\n", mdiag_zoo_size(z.p), mdiag_zoo_failed(z.p),
                  zoo_out.c_str());
    } else if (*spec_cmd) {
      LibString s;
      check(mdiag_spec_default(variant.c_str(), &s.p));
      write_text(zoo_out, s.str());
    } else if (*label) {
      Zoo z;
      load_zoo(z, zoo_path, spec_path);
      Samples s;
      size_t zero = 0, unavailable = 0;
      check(mdiag_label(z.p, question.c_str(), &s.p, &zero, &unavailable));
      check(mdiag_samples_save(s.p, out_path.c_str()));
      std::printf("%zu samples, excluded %zu with G = 0 and %zu unavailable -> %s\n",
                  mdiag_samples_size(s.p), zero, unavailable, out_path.c_str());
    } else if (*fit) {
      Samples s;
      check(mdiag_samples_load(train_path.c_str(), &s.p));
      const Json options{{"search", parse_search(search)}, {"max_depth", max_depth}};
      Model m;
      check(mdiag_fit(s.p, method.c_str(), features.c_str(), fit_mode.c_str(),
                      options.dump().c_str(), seed, &m.p));
      check(mdiag_model_save(m.p, out_path.c_str()));
      std::printf("train_accuracy=%.6f samples=%zu -> %s\n", mdiag_model_train_accuracy(m.p),
                  mdiag_model_train_samples(m.p), out_path.c_str());
    } else if (*predict) {
      Model m;
      check(mdiag_model_load(model_path.c_str(), &m.p));
      check(mdiag_predict_file(m.p, in_path.c_str(), out_path.c_str()));
    } else if (*transfer) {
      Zoo train, test;
      load_zoo(train, train_zoo, train_spec);
      load_zoo(test, test_zoo, test_spec);
      Json request{{"mode", mode}, {"question", question}, {"methods", methods},
                   {"search", parse_search(search)}, {"jobs", jobs}};
      if (!shots.empty()) request["shots"] = shots;
      if (!caps.empty()) request["caps"] = caps;
      if (!seeds.empty()) request["seeds"] = seeds;
      LibString csv;
      check(mdiag_eval_transfer(train.p, test.p, request.dump().c_str(), &csv.p));
      write_text(out_path, csv.str());
    } else if (*one_step) {
      Zoo test;
      load_zoo(test, test_zoo, test_spec);
      Model m, dm;
      if (diag == "model") {
        if (model_path.empty()) usage_error("--diagnosis model needs --model");
        check(mdiag_model_load(model_path.c_str(), &m.p));
        if (!direction_model_path.empty())
          check(mdiag_model_load(direction_model_path.c_str(), &dm.p));
      }
      Json request{{"question", question}, {"method", diag}, {"steps", steps}};
      if (!seeds.empty()) request["seeds"] = seeds;
      LibString csv;
      check(mdiag_eval_one_step(test.p, request.dump().c_str(), m.p, dm.p, &csv.p));
      write_text(out_path, csv.str());
    } else if (*report) {
      if (format.empty()) {
        const bool csv = out_path.size() >= 4 && out_path.compare(out_path.size() - 4, 4, ".csv") == 0;
        format = csv ? "csv" : "plotdata";
      }
      const auto text = read_text(in_path);
      LibString out;
      check(mdiag_report(text.c_str(), format.c_str(), &out.p));
      write_text(out_path, out.str());
    }
  } catch (const Failure& f) {
    std::string msg = f.message;
    for (auto& c : msg)
      if (c == '\n' || c == '"') c = ' ';
    std::fprintf(stderr, "error code=%s msg=\"%s\"\n", mdiag_status_name(f.status), msg.c_str());
    return static_cast<int>(f.status);
  }
  return 0;
}
