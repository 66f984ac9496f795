#pragma once

// Few-shot / scale transfer evaluation, the one-step configuration change
// task and report aggregation.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mdiag/diagnosis.hpp"
#include "mdiag/labeling.hpp"

namespace mdiag::eval {

using labeling::DiagnosisSample;

enum class TransferMode { kDataset, kDataCap, kParamCap };

std::string_view to_string(TransferMode m);
TransferMode parse_transfer_mode(std::string_view s);

enum class Method {
  kMdTree,
  kMdTreeSimilarity,
  kCartLandscape,
  kCartValidation,
  kCartHyper,
  kCartCombined,
  kRandom,
  kOptimal,
};

std::string_view to_string(Method m);
Method parse_method(std::string_view s);

inline constexpr std::uint64_t kDefaultSeeds[] = {42, 90, 38, 18, 72};

struct TransferSpec {
  TransferMode mode = TransferMode::kDataset;
  std::vector<int> shots{12, 24, 48, 96};
  // Fraction caps (data-cap) or width caps (param-cap). Empty: every grid value.
  std::vector<double> caps;
  std::vector<std::uint64_t> seeds{std::begin(kDefaultSeeds), std::end(kDefaultSeeds)};
  diagnosis::MdFitOptions md;
  diagnosis::CartOptions cart;
};

// Structured few-shot draw from a labeled pool. Q1 takes whole t-columns of
// random (p, n) cells, Q2 whole n-slices, Q2N whole p-slices, until at least
// `shots` samples are drawn.
std::vector<DiagnosisSample> few_shot(std::span<const DiagnosisSample> pool, Question q, int shots,
                                      std::uint64_t seed, int attempt = 0);

// Records at or below the cap on the capped axis, labeled within that
// sub-zoo. Throws Error(kNoData) when nothing survives.
std::vector<DiagnosisSample> capped_pool(std::span<const ZooRecord> train_zoo, TransferMode mode,
                                         double cap, Question q);

struct Split {
  std::vector<DiagnosisSample> train;
  std::vector<DiagnosisSample> test;
  bool degenerate = false;  // single-class training set after one resample
};

Split split(const TransferSpec& spec, Question q, std::span<const ZooRecord> train_zoo,
            std::span<const ZooRecord> test_zoo, double shot_or_cap, std::uint64_t seed);

// Trains `method` on `train` and returns its accuracy on `test`.
double fit_and_score(Method method, Question q, std::span<const DiagnosisSample> train,
                     std::span<const DiagnosisSample> test, const TransferSpec& spec,
                     std::uint64_t seed);

struct TransferRow {
  Question question = Question::kQ1;
  Method method = Method::kMdTree;
  TransferMode mode = TransferMode::kDataset;
  double shot_or_cap = 0.0;
  std::uint64_t seed = 0;
  double accuracy = 0.0;
  bool degenerate = false;
};

// One row per (shot or cap, seed), ordered as spec.shots/caps then spec.seeds.
std::vector<TransferRow> evaluate(const TransferSpec& spec, Method method, Question q,
                                  std::span<const ZooRecord> train_zoo,
                                  std::span<const ZooRecord> test_zoo, int jobs = 1);

std::string transfer_csv_header();
std::string to_csv(std::span<const TransferRow> rows);

// ---------------------------------------------------------------- one step

enum class StepPolicy { kFixedOne, kRandom, kOptimal };

std::string_view to_string(StepPolicy p);
StepPolicy parse_step_policy(std::string_view s);

struct OneStepDiagnosis {
  enum class Kind { kModel, kRandom, kOptimal };
  Kind kind = Kind::kOptimal;
  // For kModel: the question's model, plus a Q1 model choosing the t
  // direction when the question is Q2/Q2N.
  std::optional<diagnosis::FittedModel> model;
  std::optional<diagnosis::FittedModel> direction_model;
  std::string name() const;
};

struct OneStepResult {
  Question question = Question::kQ1;
  std::string method;
  StepPolicy policy = StepPolicy::kOptimal;
  std::vector<double> per_seed;  // mean improvement, accuracy points
  double mean = 0.0;
  double std = 0.0;
  std::size_t configs = 0;
};

// Every labeled (G != 0) configuration of the test zoo takes one diagnosed
// step; improvement = 100 * (E_val before - E_val after).
OneStepResult one_step_eval(std::span<const ZooRecord> test_zoo, Question q,
                            const OneStepDiagnosis& diag, StepPolicy policy,
                            std::span<const std::uint64_t> seeds);

std::string one_step_csv_header();
std::string to_csv(std::span<const OneStepResult> results);

// ----------------------------------------------------------------- report

struct SummaryRow {
  std::string question, method, mode;
  double shot_or_cap = 0.0;
  std::size_t runs = 0;
  double mean = 0.0;
  double std = 0.0;  // population std over runs
  std::size_t degenerate = 0;
};

std::vector<TransferRow> parse_transfer_csv(const std::string& text);
std::vector<SummaryRow> summarize(std::span<const TransferRow> rows);
std::string summary_csv(std::span<const SummaryRow> rows);
// One block per curve: "# question method mode" then "x mean std" lines.
std::string plotdata(std::span<const SummaryRow> rows);

std::string format_number(double v);
double mean_of(std::span<const double> v);
double std_of(std::span<const double> v);

}  // namespace mdiag::eval
