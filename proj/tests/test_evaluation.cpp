#include <doctest.h>

#include <cmath>

#include "abss/evaluation.hpp"
#include "abss/json_file.hpp"
#include "abss/synth.hpp"
#include "test_util.hpp"

using namespace abss;
using abss::test::kind_of;

namespace {

QualityTable quality_of(std::map<std::uint64_t, double> scores) {
  return QualityTable{"p", std::move(scores)};
}

using Seeds = std::vector<std::uint64_t>;

}  // namespace

TEST_CASE("overlap rate") {
  CHECK(overlap_rate(Seeds{1, 2, 3}, Seeds{3, 1, 2}) == 1.0);
  CHECK(overlap_rate(Seeds{1, 2, 3}, Seeds{4, 5, 6}) == 0.0);
  CHECK(overlap_rate(Seeds{1, 2, 3}, Seeds{2, 5, 6}) == doctest::Approx(1.0 / 3.0));
  CHECK(overlap_rate(Seeds{2, 5, 6}, Seeds{1, 2, 3}) == overlap_rate(Seeds{1, 2, 3}, Seeds{2, 5, 6}));
  CHECK(kind_of([] { overlap_rate(Seeds{1, 2}, Seeds{1, 2, 3}); }) == ErrorKind::Usage);
  CHECK(kind_of([] { overlap_rate(Seeds{1, 1}, Seeds{1, 2}); }) == ErrorKind::Usage);
  CHECK(kind_of([] { overlap_rate(Seeds{}, Seeds{}); }) == ErrorKind::Usage);
}

TEST_CASE("NDCG hand example") {
  // seeds a=1, b=2, c=3 with relevance 3, 2, 1; predicted [b, a, c]
  const auto q = quality_of({{1, 3.0}, {2, 2.0}, {3, 1.0}});
  const auto r = ndcg(Seeds{2, 1, 3}, q);
  // DCG = 2 + 3/log2(3) + 1/2, IDCG = 3 + 2/log2(3) + 1/2
  CHECK(r.value == doctest::Approx(4.392789260714 / 4.761859507143).epsilon(1e-12));
  CHECK(r.value == doctest::Approx(0.922494511677).epsilon(1e-10));
  CHECK(r.relevance_shift == 0.0);
  CHECK(ndcg(Seeds{1, 2, 3}, q).value == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("NDCG properties") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> d(-2.0, 5.0);
  for (int trial = 0; trial < 30; ++trial) {
    std::map<std::uint64_t, double> rel;
    for (std::uint64_t s = 0; s < 9; ++s) rel[s] = d(rng);
    const auto q = quality_of(rel);
    Seeds order{0, 1, 2, 3, 4, 5, 6, 7, 8};
    std::shuffle(order.begin(), order.end(), rng);
    const auto r = ndcg(order, q);
    CHECK(r.value >= 0.0);
    CHECK(r.value <= 1.0 + 1e-12);
    const auto ideal = order_by_value(rel);
    CHECK(ndcg(ideal, q).value == doctest::Approx(1.0).epsilon(1e-12));

    // relabeling the seeds does not matter
    std::map<std::uint64_t, double> relabeled;
    Seeds relabeled_order;
    for (auto s : order) relabeled_order.push_back(1000 - s);
    for (auto [s, v] : rel) relabeled[1000 - s] = v;
    CHECK(ndcg(relabeled_order, quality_of(relabeled)).value == doctest::Approx(r.value).epsilon(1e-14));
  }
  // tied relevance: any order among ties is ideal
  const auto tied = quality_of({{1, 2.0}, {2, 2.0}, {3, 1.0}});
  CHECK(ndcg(Seeds{2, 1, 3}, tied).value == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(ndcg(Seeds{3, 1, 2}, tied).value < 1.0);
}

TEST_CASE("NDCG edge cases") {
  CHECK(ndcg(Seeds{2, 1}, quality_of({{1, 0.0}, {2, 0.0}})).value == 1.0);
  const auto neg = ndcg(Seeds{1, 2, 3}, quality_of({{1, -1.0}, {2, -3.0}, {3, -2.0}}));
  CHECK(neg.relevance_shift == 3.0);
  // shifted relevance 2, 0, 1
  CHECK(neg.value == doctest::Approx((2.0 + 0.5) / (2.0 + 1.0 / std::log2(3.0))).epsilon(1e-12));
  const auto q = quality_of({{1, 3.0}, {2, 2.0}, {3, 1.0}});
  CHECK(kind_of([&] { ndcg(Seeds{1, 2}, q); }) == ErrorKind::Usage);
  CHECK(kind_of([&] { ndcg(Seeds{1, 2, 2}, q); }) == ErrorKind::Usage);
  CHECK(kind_of([&] { ndcg(Seeds{1, 2, 9}, q); }) == ErrorKind::Usage);
  const double exp_gain = ndcg(Seeds{2, 1, 3}, q, NdcgGain::Exponential).value;
  CHECK(exp_gain == doctest::Approx((3.0 + 7.0 / std::log2(3.0) + 0.5) / (7.0 + 3.0 / std::log2(3.0) + 0.5)));
}

TEST_CASE("quality JSON accepts the documented shapes") {
  const auto dir = test::scratch_dir("quality");
  const nlohmann::json one{{"prompt_id", "p"}, {"scores", {{"3", 0.5}, {"7", -1.25}}}};
  CHECK(quality_from_json(one).scores == std::map<std::uint64_t, double>{{3, 0.5}, {7, -1.25}});
  CHECK(quality_to_json(quality_from_json(one)) == one);
  write_json_file(dir / "a.json", one);
  write_json_file(dir / "b.json", nlohmann::json::array({one}));
  write_json_file(dir / "c.json", nlohmann::json{{"tables", {one}}});
  for (const char* f : {"a.json", "b.json", "c.json"}) CHECK(load_quality(dir / f).at("p").scores.size() == 2);
  CHECK(kind_of([] { quality_from_json(nlohmann::json{{"prompt_id", "p"}, {"scores", {{"x", 1.0}}}}); }) ==
        ErrorKind::Schema);
}

TEST_CASE("compare_to_quality on a planted pool") {
  const SyntheticPool pool = generate_pool(SynthSpec{});
  AnnotationSet anns{{pool.annotation.prompt_id, pool.annotation}};
  const auto table = score_pool(pool.records, anns, TokenCategory::Core, ScoringConfig{});
  const auto ranking = rank(table, 3);
  const auto m = compare_to_quality(ranking, pool.planted_quality, 3);
  CHECK(m.ndcg == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(m.overlap == 1.0);
  CHECK(m.mean_selected_quality == doctest::Approx((0.5 + 0.5 * 8 / 9 + 0.5 * 7 / 9) / 3.0));
}

TEST_CASE("timestep sweep") {
  std::vector<SeedRecord> records;
  QualitySet quality;
  AnnotationSet anns;
  const auto specs = fixture_suite_specs();
  const auto it = std::find_if(specs.begin(), specs.end(), [](const auto& f) { return f.name == "timestep-sweep"; });
  REQUIRE(it != specs.end());
  for (const auto& spec : it->pools) {
    const auto pool = generate_pool(spec);
    records.insert(records.end(), pool.records.begin(), pool.records.end());
    quality[spec.prompt_id] = pool.planted_quality;
    anns[spec.prompt_id] = pool.annotation;
  }
  const auto rows = timestep_sweep(records, anns, ScoringConfig{}, quality, 3);
  REQUIRE(rows.size() == 4);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].errors.empty());
    REQUIRE(rows[i].ndcg.has_value());
    if (i > 0) CHECK(rows[i].timestep_index > rows[i - 1].timestep_index);
  }
  // Adjacent noisy steps need not be ordered; the extremes are.
  CHECK(*rows.back().ndcg > *rows.front().ndcg);
  CHECK(*rows.back().ndcg == doctest::Approx(1.0).epsilon(1e-12));

  // one timestep only
  std::vector<SeedRecord> first(records.begin(), records.begin() + 10);
  CHECK(kind_of([&] { timestep_sweep(first, anns, ScoringConfig{}, quality, 3); }) == ErrorKind::Usage);

  // a missing tensor turns into a row error; the other rows survive
  records[3].tensor.reset();
  const auto partial = timestep_sweep(records, anns, ScoringConfig{}, quality, 3);
  REQUIRE(partial.size() == 4);
  CHECK(partial[0].errors.size() == 1);
  CHECK_FALSE(partial[0].ndcg.has_value());
  CHECK(partial[3].ndcg.has_value());
}

TEST_CASE("a later step with larger separation scores at least as well") {
  for (std::uint64_t rng_seed = 0; rng_seed < 20; ++rng_seed) {
    std::vector<SeedRecord> records;
    SynthSpec early, late;
    early.timestep_index = 5;
    early.planted_gap = 0.01;
    early.noise_scale = 0.05;
    early.rng_seed = rng_seed;
    late.timestep_index = 20;
    late.rng_seed = rng_seed + 100;
    const auto pe = generate_pool(early), pl = generate_pool(late);
    records = pe.records;
    records.insert(records.end(), pl.records.begin(), pl.records.end());
    const auto rows = timestep_sweep(records, {{"synth", pl.annotation}}, ScoringConfig{},
                                     {{"synth", pl.planted_quality}}, 3);
    REQUIRE(rows.size() == 2);
    CHECK(*rows[1].ndcg >= *rows[0].ndcg);
  }
}

TEST_CASE("token ablation: core dominates when the signal is planted on core") {
  SynthSpec spec;
  spec.adjectives = {1};
  spec.verbs = {4};
  spec.prepositions = {5};
  spec.rng_seed = 1;
  const auto pool = generate_pool(spec);
  AnnotationSet anns{{spec.prompt_id, pool.annotation}};
  QualitySet quality{{spec.prompt_id, pool.planted_quality}};
  const auto report = token_ablation(pool.records, anns, ScoringConfig{}, quality, 3);
  REQUIRE(report.rows.size() == 4);
  CHECK(report.rows[0].category == TokenCategory::Core);
  const double core = report.rows[0].mean->ndcg;
  CHECK(core == doctest::Approx(1.0).epsilon(1e-12));
  for (std::size_t i = 1; i < 4; ++i) {
    REQUIRE(report.rows[i].mean.has_value());
    CHECK(report.rows[i].mean->ndcg < core);
    CHECK(report.rows[i].mean->overlap < 1.0);
  }

  // absent category is a cell, not a failure
  anns[spec.prompt_id].verbs.clear();
  const auto sparse = token_ablation(pool.records, anns, ScoringConfig{}, quality, 3);
  CHECK(sparse.rows[2].prompts_absent == 1);
  CHECK_FALSE(sparse.rows[2].mean.has_value());

  // identical token sets give identical rows
  anns[spec.prompt_id].adjectives = {};
  auto same = pool.annotation;
  same.adjectives = same.core;
  same.core = {1};
  AnnotationSet swapped{{spec.prompt_id, same}};
  const auto a = token_ablation(pool.records, swapped, ScoringConfig{}, quality, 3);
  const auto b = token_ablation(pool.records, anns, ScoringConfig{}, quality, 3);
  CHECK(a.rows[1].mean->ndcg == b.rows[0].mean->ndcg);
}

namespace {

AnnotationSet four_prompts() {
  AnnotationSet set;
  for (int i = 0; i < 4; ++i) {
    TokenAnnotation a;
    a.prompt_id = "p" + std::to_string(i);
    a.token_count = 10;
    a.core = {2, 3};
    a.adjectives = {4, 5};
    a.verbs = {6};
    a.prepositions = {7};
    set[a.prompt_id] = a;
  }
  return set;
}

}  // namespace

TEST_CASE("annotation corruption") {
  const auto set = four_prompts();
  const auto none = corrupt_annotations(set, 0.0, 1);
  CHECK(none.annotations == set);
  CHECK(none.corrupted.empty());

  const auto all = corrupt_annotations(set, 1.0, 1);
  CHECK(all.corrupted.size() == 4);
  for (const auto& [id, a] : all.annotations) {
    CHECK(a.core.size() == 2);
    for (auto idx : a.core) {
      CHECK(idx >= 1);
      CHECK(idx <= 8);
      CHECK(idx != 2);
      CHECK(idx != 3);
    }
    CHECK_NOTHROW(a.validate());
  }

  const auto half = corrupt_annotations(set, 0.5, 7);
  CHECK(half.corrupted.size() == 2);
  const auto again = corrupt_annotations(set, 0.5, 7);
  CHECK(again.annotations == half.annotations);
  CHECK(again.corrupted == half.corrupted);
  CHECK(corrupt_annotations(set, 0.3, 7).corrupted.size() == 2);  // ceil(1.2)

  auto tiny = set;
  tiny["p0"].token_count = 3;
  tiny["p0"].core = {1};
  tiny["p0"].adjectives.clear();
  tiny["p0"].verbs.clear();
  tiny["p0"].prepositions.clear();
  const auto skipped = corrupt_annotations(tiny, 1.0, 3);
  CHECK(skipped.corrupted.size() == 3);
  CHECK(skipped.warnings.size() == 1);
  CHECK(skipped.annotations.at("p0") == tiny.at("p0"));
  CHECK(kind_of([&] { corrupt_annotations(set, 1.5, 0); }) == ErrorKind::Usage);
}

TEST_CASE("corruption draws are uniform over the candidates") {
  AnnotationSet set;
  TokenAnnotation a;
  a.prompt_id = "p";
  a.token_count = 8;
  a.core = {3};
  set["p"] = a;
  std::map<std::size_t, int> counts;
  for (std::uint64_t seed = 0; seed < 6000; ++seed) counts[corrupt_annotations(set, 1.0, seed).annotations.at("p").core[0]]++;
  CHECK(counts.size() == 5);  // {1, 2, 4, 5, 6}
  for (auto [idx, c] : counts) CHECK(std::abs(c - 1200) < 150);
}
