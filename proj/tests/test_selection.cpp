#include <doctest.h>

#include <cmath>

#include "abss/selection.hpp"
#include "test_util.hpp"

using namespace abss;
using abss::test::kind_of;

namespace {

ScoreTable table_of(std::map<std::uint64_t, double> scores) {
  ScoreTable t;
  t.prompt_id = "p";
  t.timestep_index = 10;
  t.scores = std::move(scores);
  return t;
}

}  // namespace

TEST_CASE("rank orders by descending score") {
  const auto r = rank(table_of({{1, 0.3}, {2, 0.5}, {3, 0.4}}), 2);
  CHECK(r.order() == std::vector<std::uint64_t>{2, 3, 1});
  CHECK(r.selected == std::vector<std::uint64_t>{2, 3});
  CHECK(r.k == 2);
  CHECK(r.tie_groups.empty());
  CHECK(r.warnings.empty());
}

TEST_CASE("ties go to the smaller seed and are reported") {
  const auto r = rank(table_of({{7, 0.4}, {2, 0.4}}), 1);
  CHECK(r.selected == std::vector<std::uint64_t>{2});
  REQUIRE(r.tie_groups.size() == 1);
  CHECK(r.tie_groups[0] == std::vector<std::uint64_t>{2, 7});

  const auto all = rank(table_of({{5, 0.1}, {4, 0.1}, {9, 0.2}, {1, 0.1}, {3, 0.2}}), 5);
  CHECK(all.order() == std::vector<std::uint64_t>{3, 9, 1, 4, 5});
  CHECK(all.tie_groups.size() == 2);
}

TEST_CASE("K above the pool size keeps everything with a warning") {
  const auto r = rank(table_of({{1, 0.3}, {2, 0.5}}), 5);
  CHECK(r.selected.size() == 2);
  CHECK(r.warnings.size() == 1);
  CHECK(kind_of([] { rank(table_of({{1, 0.3}}), 0); }) == ErrorKind::Usage);
  CHECK(kind_of([] { rank(table_of({}), 3); }) == ErrorKind::Usage);
}

TEST_CASE("rank is a permutation and invariant under increasing transforms") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> d(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::map<std::uint64_t, double> scores, transformed;
    for (std::uint64_t s = 0; s < 20; ++s) {
      // quantize so ties happen
      const double v = std::round(d(rng) * 8.0) / 8.0;
      scores[s * 7 + 3] = v;
      transformed[s * 7 + 3] = std::exp(3.0 * v) - 2.0;
    }
    const auto a = rank(table_of(scores), 4);
    const auto b = rank(table_of(transformed), 4);
    CHECK(a.order() == b.order());
    CHECK(a.selected == b.selected);
    auto sorted = a.order();
    std::sort(sorted.begin(), sorted.end());
    std::vector<std::uint64_t> seeds;
    for (const auto& [s, v] : scores) seeds.push_back(s);
    CHECK(sorted == seeds);
    for (std::size_t i = 1; i < a.ordering.size(); ++i) {
      CHECK(a.ordering[i - 1].score >= a.ordering[i].score);
      if (a.ordering[i - 1].score == a.ordering[i].score) CHECK(a.ordering[i - 1].seed < a.ordering[i].seed);
    }
    CHECK(std::equal(a.selected.begin(), a.selected.end(), a.order().begin()));
  }
}

TEST_CASE("ranking JSON round trip") {
  const auto r = rank(table_of({{1, 0.3}, {2, 0.5}, {3, 0.4}}), 2);
  const auto nfe = make_nfe_report(10, 3, 10, 50, ModelFamily::Unet);
  const auto j = ranking_to_json(r, ScoringConfig{}, nfe);
  CHECK(j.at("nfe").at("nfe_per_image").get<double>() == doctest::Approx(220.0 / 3.0));
  CHECK(j.at("selected") == nlohmann::json::array({2, 3}));
  const auto back = ranking_from_json(j);
  CHECK(back.ordering == r.ordering);
  CHECK(back.selected == r.selected);
  CHECK(back.k == 2);
  CHECK(ranking_to_json(r, ScoringConfig{}, std::nullopt).at("nfe").empty());
}

TEST_CASE("U-Net NFE") {
  CHECK(nfe_unet(10, 3, 10, 50) == doctest::Approx(73.3333333333).epsilon(1e-10));
  CHECK(nfe_unet(10, 1, 10, 50) == doctest::Approx(140.0).epsilon(1e-12));
  for (std::size_t n : {1u, 3u, 10u}) CHECK(nfe_unet(n, n, 10, 50) == 50.0);
  CHECK(kind_of([] { nfe_unet(10, 3, 0, 50); }) == ErrorKind::Usage);
  CHECK(kind_of([] { nfe_unet(10, 3, 51, 50); }) == ErrorKind::Usage);
  CHECK(kind_of([] { nfe_unet(10, 0, 10, 50); }) == ErrorKind::Usage);
  CHECK(kind_of([] { nfe_unet(3, 4, 10, 50); }) == ErrorKind::Usage);
}

TEST_CASE("NFE monotonicity properties") {
  for (std::size_t k = 1; k <= 5; ++k)
    for (std::size_t n = k; n <= 12; ++n)
      for (int t = 1; t <= 50; ++t) {
        const double v = nfe_unet(n, k, t, 50);
        if (n == k) {
          CHECK(v == 50.0);
        } else {
          CHECK(v > 50.0);
          if (t < 50) CHECK(nfe_unet(n, k, t + 1, 50) > v);
        }
        CHECK(nfe_unet(n + 1, k, t, 50) > v);
        for (int l = 1; l < 30; l += 7) CHECK(nfe_dit(n, k, t, 50, l, 30) < v);
        CHECK(nfe_dit(n, k, t, 50, 30, 30) == doctest::Approx(v).epsilon(1e-12));
      }
}

TEST_CASE("DiT truncated-forward NFE") {
  CHECK(nfe_dit(10, 3, 10, 50, 12, 30) == doctest::Approx(71.3333333333).epsilon(1e-10));
  // oracle: (10 * (9 + 18/38) + 120) / 3
  CHECK(nfe_dit(10, 3, 10, 50, 18, 38) == doctest::Approx(71.578947368421).epsilon(1e-10));
  CHECK(kind_of([] { nfe_dit(10, 3, 10, 50, 0, 30); }) == ErrorKind::Usage);
  CHECK(kind_of([] { nfe_dit(10, 3, 10, 50, 31, 30); }) == ErrorKind::Usage);
  CHECK(kind_of([] { make_nfe_report(10, 3, 10, 50, ModelFamily::Dit); }) == ErrorKind::Usage);
  const auto rep = make_nfe_report(10, 3, 10, 50, ModelFamily::Dit, 12, 30);
  CHECK(nfe_report_to_json(rep).at("l_star") == 12);
}

TEST_CASE("baseline NFE with the comparison settings") {
  auto nfe = [](BaselineMethod m) { return nfe_baseline(m, default_baseline_params(m)); };
  const auto golden = nfe(BaselineMethod::Golden);
  CHECK(golden.nfe == doctest::Approx(216.6666666667).epsilon(1e-10));
  CHECK(golden.flags == "†");
  CHECK(nfe(BaselineMethod::Ns).nfe == doctest::Approx(333.3333333333).epsilon(1e-10));
  CHECK(nfe(BaselineMethod::Random).nfe == 50.0);
  CHECK(nfe(BaselineMethod::Random).flags.empty());
  CHECK(nfe(BaselineMethod::InitNo).nfe == 100.0);
  CHECK(nfe(BaselineMethod::Ae).nfe == 75.0);
  CHECK(nfe(BaselineMethod::Nd).nfe == 550.0);
  CHECK(nfe(BaselineMethod::NpNet).nfe == 50.0);
  CHECK(nfe(BaselineMethod::NpNet).flags == "†*");
  CHECK(nfe(BaselineMethod::Core2).flags == "†*");
  CHECK_FALSE(nfe(BaselineMethod::InitNo).notes.empty());
}

TEST_CASE("baseline parameters") {
  NfeParams golden = default_baseline_params(BaselineMethod::Golden);
  golden.erase("test_prompts");
  const auto g = nfe_baseline(BaselineMethod::Golden, golden);
  CHECK(g.nfe == doctest::Approx(216.6666666667).epsilon(1e-10));
  CHECK(g.notes.size() == 2);

  NfeParams ns = default_baseline_params(BaselineMethod::Ns);
  ns.erase("candidates");
  CHECK(kind_of([&] { nfe_baseline(BaselineMethod::Ns, ns); }) == ErrorKind::Usage);
  CHECK(kind_of([] { nfe_baseline(BaselineMethod::Random, {}); }) == ErrorKind::Usage);
  CHECK(kind_of([] { parse_baseline_method("dpo"); }) == ErrorKind::Usage);
  for (auto m : {BaselineMethod::Random, BaselineMethod::Golden, BaselineMethod::Ns, BaselineMethod::InitNo,
                 BaselineMethod::Ae, BaselineMethod::Nd, BaselineMethod::NpNet, BaselineMethod::Core2}) {
    CHECK(parse_baseline_method(to_string(m)) == m);
    const auto defaults = default_baseline_params(m);
    for (const auto& name : baseline_param_names(m)) CHECK(defaults.contains(name));
  }
}
