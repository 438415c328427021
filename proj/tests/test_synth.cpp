#include <doctest.h>

#include <fstream>
#include <sstream>

#include "abss/json_file.hpp"
#include "abss/reference.hpp"
#include "abss/rng.hpp"
#include "abss/selection.hpp"
#include "abss/synth.hpp"
#include "test_util.hpp"

using namespace abss;
using abss::test::kind_of;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ScoreTable score(const SyntheticPool& pool, const ScoringConfig& cfg = {}) {
  AnnotationSet anns{{pool.annotation.prompt_id, pool.annotation}};
  return score_pool(pool.records, anns, TokenCategory::Core, cfg);
}

}  // namespace

TEST_CASE("xoshiro256** seeded by SplitMix64 matches independently computed outputs") {
  CHECK(SplitMix64(0).next() == 0xe220a8397b1dcdafULL);
  Rng rng(12345);
  CHECK(rng.next() == 0xbe6a36374160d49bULL);
  CHECK(rng.next() == 0x214aaa0637a688c6ULL);
  CHECK(rng.next() == 0xf69d16de9954d388ULL);
  Rng u(1);
  for (int i = 0; i < 1000; ++i) {
    const double v = u.uniform01();
    CHECK(v >= 0.0);
    CHECK(v < 1.0);
    CHECK(u.uniform_below(7) < 7);
  }
}

TEST_CASE("generation is a pure function of the SynthSpec") {
  SynthSpec spec;
  spec.rng_seed = 77;
  const auto a = generate_pool(spec);
  const auto b = generate_pool(spec);
  REQUIRE(a.records.size() == 10);
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    CHECK(encode_tensor(*a.records[i].tensor) == encode_tensor(*b.records[i].tensor));
  }
  spec.rng_seed = 78;
  CHECK(encode_tensor(*generate_pool(spec).records[0].tensor) != encode_tensor(*a.records[0].tensor));
}

TEST_CASE("no gap and no noise gives identical seeds and a tie-break ranking") {
  SynthSpec spec;
  spec.planted_gap = 0.0;
  spec.noise_scale = 0.0;
  spec.first_seed = 40;
  const auto pool = generate_pool(spec);
  for (const auto& r : pool.records) CHECK(*r.tensor == *pool.records[0].tensor);
  const auto ranking = rank(score(pool), 3);
  CHECK(ranking.selected == std::vector<std::uint64_t>{40, 41, 42});
  CHECK(ranking.tie_groups.size() == 1);
  CHECK(pool.ground_truth_order.front() == 40);
}

TEST_CASE("tensors are valid attention") {
  SynthSpec spec;
  spec.noise_scale = 0.3;
  for (const auto& r : generate_pool(spec).records) {
    CHECK_NOTHROW(check_record_tensor(r, *r.tensor));
    CHECK(r.tensor->shape == std::vector<std::size_t>{2, 256, 8});
    for (std::size_t row = 0; row < 2 * 256; ++row) {
      double sum = 0.0;
      for (std::size_t i = 0; i < 8; ++i) sum += r.tensor->data[row * 8 + i];
      CHECK(std::abs(sum - 1.0) < 1e-6);
    }
  }
  spec.model_family = ModelFamily::Dit;
  for (const auto& r : generate_pool(spec).records) {
    CHECK(r.tensor_kind == TensorKind::DitJoint);
    CHECK(r.tensor->shape == std::vector<std::size_t>{24, 24});
    for (std::size_t row = 0; row < 24; ++row) {
      double sum = 0.0;
      for (std::size_t c = 0; c < 24; ++c) sum += r.tensor->data[row * 24 + c];
      CHECK(std::abs(sum - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("planted signal is recovered exactly") {
  for (auto family : {ModelFamily::Unet, ModelFamily::Dit}) {
    for (std::uint64_t rng_seed = 0; rng_seed < 10; ++rng_seed) {
      SynthSpec spec;
      spec.model_family = family;
      spec.rng_seed = rng_seed;
      spec.first_seed = 1000;
      const auto pool = generate_pool(spec);
      const auto ranking = rank(score(pool), 3);
      CHECK(ranking.order() == pool.ground_truth_order);
      CHECK(ranking.selected == std::vector<std::uint64_t>{1009, 1008, 1007});
    }
  }
}

TEST_CASE("without noise the score is strictly increasing in the planted bonus") {
  for (auto family : {ModelFamily::Unet, ModelFamily::Dit}) {
    SynthSpec spec;
    spec.model_family = family;
    spec.noise_scale = 0.0;
    spec.planted_gap = 0.02;
    spec.pool_size = 12;
    const auto table = score(generate_pool(spec));
    for (std::uint64_t s = 1; s < 12; ++s) CHECK(table.scores.at(s) > table.scores.at(s - 1));
  }
}

TEST_CASE("single-seed pool and SynthSpec validation") {
  SynthSpec spec;
  spec.pool_size = 1;
  const auto pool = generate_pool(spec);
  CHECK(pool.ground_truth_order == std::vector<std::uint64_t>{0});
  spec = SynthSpec{};
  spec.core = {8};
  CHECK(kind_of([&] { spec.validate(); }) == ErrorKind::Index);
  spec = SynthSpec{};
  spec.planted_gap = -1.0;
  CHECK(kind_of([&] { spec.validate(); }) == ErrorKind::Usage);
  spec = SynthSpec{};
  spec.pool_size = 0;
  CHECK(kind_of([&] { generate_pool(spec); }) == ErrorKind::Usage);
}

TEST_CASE("written pools load back and score identically") {
  const auto dir = test::scratch_dir("synth_pool");
  SynthSpec spec;
  spec.rng_seed = 5;
  const auto pool = generate_pool(spec);
  const auto manifest = write_pool(pool, dir);
  const auto records = load_manifest(manifest);
  const auto anns = load_annotations(dir / "annotations.json");
  const auto quality = load_quality(dir / "quality.json");
  CHECK(anns.at(spec.prompt_id) == pool.annotation);
  CHECK(quality.at(spec.prompt_id).scores == pool.planted_quality.scores);
  CHECK(score_pool(records, anns, TokenCategory::Core, ScoringConfig{}).scores == score(pool).scores);
  const auto truth = read_json_file(dir / "ground_truth.json");
  CHECK(truth.at("pools").at(0).at("order").get<std::vector<std::uint64_t>>() == pool.ground_truth_order);
}

TEST_CASE("fixture suite") {
  const auto specs = fixture_suite_specs();
  CHECK(specs.size() >= 5);
  for (const char* name : {"trivial", "planted-strong", "noise-only", "dit-variant", "degenerate-shapes"}) {
    CHECK(std::any_of(specs.begin(), specs.end(), [&](const auto& f) { return f.name == name; }));
  }

  const auto a = test::scratch_dir("suite_a");
  const auto b = test::scratch_dir("suite_b");
  const auto ma = generate_fixture_suite(a);
  const auto mb = generate_fixture_suite(b);
  REQUIRE(ma.size() == specs.size());
  std::size_t files = 0;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(entry.path(), a);
    CHECK(slurp(entry.path()) == slurp(b / rel));
    ++files;
  }
  CHECK(files > 20);

  // planted-strong: oracle scores pick the planted top 3
  const auto expected = read_json_file(a / "planted-strong" / "expected_scores.json");
  const auto truth = read_json_file(a / "planted-strong" / "ground_truth.json");
  const auto order = truth.at("pools").at(0).at("order").get<std::vector<std::uint64_t>>();
  CHECK(expected.at("pools").at(0).at("selected_top3").get<std::vector<std::uint64_t>>() ==
        std::vector<std::uint64_t>(order.begin(), order.begin() + 3));

  // every fixture validates and the library matches the oracle's expected scores
  for (const auto& m : ma) {
    CHECK(validate_manifest(m).ok());
    const auto dir = m.parent_path();
    const auto exp = read_json_file(dir / "expected_scores.json");
    const auto records = load_manifest(m);
    const auto anns = load_annotations(dir / "annotations.json");
    for (const auto& [key, pool] : group_pools(records)) {
      const auto table = score_pool(pool, anns, TokenCategory::Core, ScoringConfig{});
      bool found = false;
      for (const auto& p : exp.at("pools")) {
        if (p.at("prompt_id") != key.first || p.at("timestep_index") != key.second) continue;
        found = true;
        for (const auto& e : p.at("scores")) {
          const double want = e.at("score").get<double>();
          CHECK(table.scores.at(e.at("seed").get<std::uint64_t>()) ==
                doctest::Approx(want).epsilon(1e-9));
        }
      }
      CHECK(found);
    }
  }
}

TEST_CASE("checked-in fixtures regenerate byte-for-byte") {
  const std::filesystem::path frozen = ABSS_FIXTURE_DIR;
  REQUIRE(std::filesystem::exists(frozen / "planted-strong" / "manifest.json"));
  const auto fresh = test::scratch_dir("suite_frozen");
  generate_fixture_suite(fresh);
  std::size_t files = 0;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(frozen)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(entry.path(), frozen);
    CHECK_MESSAGE(slurp(entry.path()) == slurp(fresh / rel), rel.string());
    ++files;
  }
  for (const auto& entry : std::filesystem::recursive_directory_iterator(fresh)) {
    if (entry.is_regular_file()) CHECK(std::filesystem::exists(frozen / std::filesystem::relative(entry.path(), fresh)));
  }
  CHECK(files > 20);
}
