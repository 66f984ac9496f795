#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <string>

#include "fixtures.hpp"
#include "mdiag/error.hpp"
#include "mdiag/zoo.hpp"

using namespace mdiag;
using mdiag::testing::synthetic_record;
using mdiag::testing::tiny_spec;

namespace {

bool has(const ValidationResult& v, const std::string& msg) {
  for (const auto& x : v.violations)
    if (x == msg) return true;
  return false;
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::kInternal;
}

}  // namespace

TEST_SUITE("zoo") {

TEST_CASE("default spec grid") {
  const auto s = default_zoo_spec();
  CHECK(s.grid_size() == 180);
  CHECK(s.check().empty());
  const auto b = s.bounds();
  CHECK(b.p_max == 64);
  CHECK(b.t_min == 4);
  CHECK(b.t_max == 128);
  CHECK(b.n_max == 1.0);
}

TEST_CASE("spec JSON round trip and hash") {
  const auto s = default_zoo_spec(DatasetVariant::kLabelNoise10);
  const auto back = Json(s).get<ZooSpec>();
  CHECK(back == s);
  CHECK(back.hash() == s.hash());
  CHECK(s.hash().size() == 16);
  auto other = s;
  other.training_budget.lr = 0.2;
  CHECK(other.hash() != s.hash());
  CHECK(Json::parse("{}").get<ZooSpec>() == default_zoo_spec());
}

TEST_CASE("spec checks") {
  auto s = default_zoo_spec();
  s.seeds = {0};
  CHECK_FALSE(s.check().empty());
  s = default_zoo_spec();
  s.pool_size = 512;
  CHECK_FALSE(s.check().empty());
}

TEST_CASE("record validation") {
  const auto spec = tiny_spec();
  const auto good = synthetic_record(spec, {2, 4, 0.5}, 0.3, 1);
  CHECK(validate_record(good, spec).ok());

  auto r = good;
  r.metrics.connectivity_pct = 3.0;
  CHECK(has(validate_record(r, spec), "connectivity must be <= 0"));
  r = good;
  r.metrics.connectivity_pct = -101.0;
  CHECK(has(validate_record(r, spec), "connectivity must be >= -100"));
  r = good;
  r.config.width_p = 3;
  CHECK(has(validate_record(r, spec), "off-grid width_p"));
  r = good;
  r.config.seed_group = {0};
  CHECK(has(validate_record(r, spec), "seed_group must have at least 2 seeds"));
  r = good;
  r.metrics.similarity = 1.5;
  CHECK(has(validate_record(r, spec), "similarity must lie in [-1, 1]"));
  r = good;
  r.metrics.sharpness_trace = -1.0;
  CHECK(has(validate_record(r, spec), "sharpness_trace must be positive"));
  r = good;
  *r.metrics.train_error += 1e-9;
  CHECK(has(validate_record(r, spec), "train_error must equal the per-seed mean"));
  r = good;
  r.provenance.spec_hash = "0000000000000000";
  CHECK(has(validate_record(r, spec), "spec_hash mismatch"));

  r = good;
  r.status = RecordStatus::kFailed;
  r.metrics = {};
  CHECK(validate_record(r, spec).ok());
}

TEST_CASE("record JSON round trip keeps the schema field names") {
  const auto spec = tiny_spec();
  const auto r = synthetic_record(spec, {4, 8, 1.0}, 0.25, 3);
  const Json j = r;
  for (const char* k : {"width_p", "batch_size_t", "data_fraction_n", "seeds"})
    CHECK(j.at("config").contains(k));
  for (const char* k : {"train_error", "val_error", "train_loss", "val_loss", "connectivity_pct",
                        "sharpness_trace", "sharpness_eig", "similarity"})
    CHECK(j.at("metrics").contains(k));
  for (const char* k : {"zoo_id", "dataset_variant", "spec_hash"})
    CHECK(j.at("provenance").contains(k));
  CHECK(j.at("status") == "ok");
  CHECK(j.get<ZooRecord>() == r);
}

TEST_CASE("tiny sweep: shape, order, determinism, round trip") {
  const auto spec = tiny_spec();
  const auto a = zoo::sweep(spec);
  REQUIRE(a.size() == 8);
  for (std::size_t i = 1; i < a.size(); ++i) CHECK(a[i - 1].config.key() < a[i].config.key());
  for (const auto& r : a) CHECK(validate_record(r, spec).ok());

  zoo::SweepOptions par;
  par.jobs = 3;
  const auto b = zoo::sweep(spec, par);
  CHECK(zoo::to_jsonl(a) == zoo::to_jsonl(b));
  CHECK(zoo::parse_jsonl(zoo::to_jsonl(a), spec) == a);
  CHECK(zoo::parse_jsonl(zoo::to_jsonl(a)) == a);

  const auto noisy = zoo::sweep(tiny_spec(DatasetVariant::kLabelNoise10));
  REQUIRE(noisy.size() == a.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(noisy[i].config == a[i].config);
}

TEST_CASE("JSONL load errors") {
  const auto spec = tiny_spec();
  std::vector<ZooRecord> recs{synthetic_record(spec, {2, 4, 0.5}, 0.3, 1),
                              synthetic_record(spec, {2, 4, 1.0}, 0.3, 2)};
  const auto text = zoo::to_jsonl(recs);

  SUBCASE("truncated final line names the line") {
    try {
      zoo::parse_jsonl(text.substr(0, text.size() - 20), spec);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kSchema);
      CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
  }
  SUBCASE("off-grid width is rejected with the invariant name") {
    auto bad = recs;
    bad[1].config.width_p = 3;
    try {
      zoo::parse_jsonl(zoo::to_jsonl(bad), spec);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("off-grid width_p") != std::string::npos);
    }
  }
  SUBCASE("spec hash mismatch refuses the load") {
    auto other = spec;
    other.training_budget.epochs = 3;
    CHECK(code_of([&] { zoo::parse_jsonl(text, other); }) == ErrorCode::kSpecHashMismatch);
  }
  SUBCASE("missing file") {
    CHECK(code_of([&] { zoo::load_jsonl("/nonexistent/zoo.jsonl", spec); }) == ErrorCode::kIo);
  }
}

TEST_CASE("save and load through a file") {
  const auto spec = tiny_spec();
  std::vector<ZooRecord> recs{synthetic_record(spec, {4, 8, 0.5}, 0.2, 5)};
  const std::string path = "zoo_roundtrip_test.jsonl";
  zoo::save_jsonl(recs, path);
  CHECK(zoo::load_jsonl(path, spec) == recs);
  std::remove(path.c_str());
}

}
