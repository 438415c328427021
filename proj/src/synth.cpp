#include "abss/synth.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "abss/error.hpp"
#include "abss/json_file.hpp"
#include "abss/reference.hpp"
#include "abss/rng.hpp"
#include "abss/scoring.hpp"
#include "abss/selection.hpp"

namespace abss {
namespace {

using nlohmann::json;

// Softmax of a logit row into f32 attention weights.
void softmax_row(const std::vector<double>& logits, float* out) {
  const double peak = *std::max_element(logits.begin(), logits.end());
  double denom = 0.0;
  for (double l : logits) denom += std::exp(l - peak);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = static_cast<float>(std::exp(logits[i] - peak) / denom);
  }
}

std::string tensor_file_name(const SynthSpec& spec, std::uint64_t seed) {
  return spec.prompt_id + "_t" + std::to_string(spec.timestep_index) + "_s" +
         std::to_string(seed) + ".attn";
}

}  // namespace

void SynthSpec::validate() const {
  if (pool_size < 1) fail(ErrorKind::Usage, "pool_size must be >= 1");
  if (!(planted_gap >= 0.0) || !(noise_scale >= 0.0)) {
    fail(ErrorKind::Usage, "planted_gap and noise_scale must be >= 0");
  }
  if (token_count < 1) fail(ErrorKind::Usage, "token_count must be >= 1");
  if (model_family == ModelFamily::Unet) {
    if (spatial.h < 1 || spatial.w < 1 || stacked_count < 1) {
      fail(ErrorKind::Usage, "unet synth needs spatial >= 1x1 and stacked_count >= 1");
    }
  } else if (image_tokens < 1) {
    fail(ErrorKind::Usage, "dit synth needs image_tokens >= 1");
  }
  if (timestep_index < 1 || timestep_index > total_steps) {
    fail(ErrorKind::Usage, "timestep_index must lie in [1, total_steps]");
  }
  TokenAnnotation a{prompt_id, token_count, core, adjectives, verbs, prepositions};
  for (TokenCategory c : kAllCategories) std::sort(a.tokens(c).begin(), a.tokens(c).end());
  a.validate();
  if (signal_tokens) {
    for (std::size_t idx : *signal_tokens) {
      if (idx >= token_count) fail(ErrorKind::Index, "signal token " + std::to_string(idx) + " out of range");
    }
  }
}

SyntheticPool generate_pool(const SynthSpec& spec) {
  spec.validate();
  SyntheticPool pool;
  pool.annotation = TokenAnnotation{spec.prompt_id, spec.token_count, spec.core,
                                    spec.adjectives, spec.verbs, spec.prepositions};
  for (TokenCategory c : kAllCategories) {
    auto& v = pool.annotation.tokens(c);
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }
  pool.planted_quality.prompt_id = spec.prompt_id;

  const auto& signal = spec.signal_tokens ? *spec.signal_tokens : spec.core;
  std::vector<bool> boosted(spec.token_count, false);
  for (std::size_t idx : signal) boosted[idx] = true;

  Rng rng(spec.rng_seed);
  const std::size_t n = spec.token_count;
  for (std::size_t i = 0; i < spec.pool_size; ++i) {
    const double bonus = spec.pool_size > 1
                             ? spec.planted_gap * static_cast<double>(i) /
                                   static_cast<double>(spec.pool_size - 1)
                             : 0.0;
    const std::uint64_t seed = spec.first_seed + i;

    SeedRecord r;
    r.prompt_id = spec.prompt_id;
    r.prompt_text = "synthetic prompt " + spec.prompt_id;
    r.seed = seed;
    r.timestep_index = spec.timestep_index;
    r.total_steps = spec.total_steps;
    r.model_family = spec.model_family;
    r.token_count = n;
    r.tensor_path = tensor_file_name(spec, seed);

    AttnTensor t;
    if (spec.model_family == ModelFamily::Unet) {
      r.tensor_kind = TensorKind::StackedQn;
      r.spatial = spec.spatial;
      const std::size_t rows = spec.stacked_count * spec.spatial.area();
      t = AttnTensor::zeros({spec.stacked_count, spec.spatial.area(), n});
      std::vector<double> logits(n);
      for (std::size_t row = 0; row < rows; ++row) {
        for (std::size_t k = 0; k < n; ++k) {
          logits[k] = spec.noise_scale * rng.uniform01() + (boosted[k] ? bonus : 0.0);
        }
        softmax_row(logits, t.data.data() + row * n);
      }
    } else {
      r.tensor_kind = TensorKind::DitJoint;
      r.image_token_count = spec.image_tokens;
      r.hooked_layer = spec.hooked_layer;
      const std::size_t side = spec.image_tokens + n;
      t = AttnTensor::zeros({side, side});
      std::vector<double> logits(side);
      for (std::size_t row = 0; row < side; ++row) {
        for (std::size_t col = 0; col < side; ++col) {
          const bool planted = row < spec.image_tokens && col >= spec.image_tokens &&
                               boosted[col - spec.image_tokens];
          logits[col] = spec.noise_scale * rng.uniform01() + (planted ? bonus : 0.0);
        }
        softmax_row(logits, t.data.data() + row * side);
      }
    }
    r.tensor = std::make_shared<const AttnTensor>(std::move(t));
    pool.records.push_back(std::move(r));
    pool.planted_quality.scores[seed] = bonus;
  }
  pool.ground_truth_order = order_by_value(pool.planted_quality.scores);
  return pool;
}

std::filesystem::path write_pools(const std::vector<SyntheticPool>& pools,
                                  const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<SeedRecord> records;
  AnnotationSet annotations;
  QualitySet quality;
  json truth = json::array();
  for (const auto& pool : pools) {
    for (const auto& r : pool.records) {
      write_tensor(*r.tensor, dir / r.tensor_path);
      records.push_back(r);
    }
    annotations[pool.annotation.prompt_id] = pool.annotation;
    // Later pools overwrite earlier ones: the last timestep carries the final quality.
    quality[pool.planted_quality.prompt_id] = pool.planted_quality;
    truth.push_back(json{{"prompt_id", pool.annotation.prompt_id},
                         {"timestep_index", pool.records.empty() ? 0 : pool.records.front().timestep_index},
                         {"order", pool.ground_truth_order}});
  }
  const auto manifest = dir / "manifest.json";
  write_manifest(records, manifest);
  write_annotations(annotations, dir / "annotations.json");
  json qtables = json::array();
  for (const auto& [id, q] : quality) qtables.push_back(quality_to_json(q));
  write_json_file(dir / "quality.json", json{{"tables", qtables}});
  write_json_file(dir / "ground_truth.json", json{{"pools", truth}});
  return manifest;
}

std::filesystem::path write_pool(const SyntheticPool& pool, const std::filesystem::path& dir) {
  return write_pools({pool}, dir);
}

std::vector<FixtureSpec> fixture_suite_specs() {
  std::vector<FixtureSpec> out;

  SynthSpec trivial;
  trivial.prompt_id = "trivial";
  trivial.pool_size = 4;
  trivial.spatial = {4, 4};
  trivial.token_count = 6;
  trivial.core = {2};
  trivial.planted_gap = 0.0;
  trivial.noise_scale = 0.0;
  out.push_back({"trivial", {trivial}});

  SynthSpec strong;
  strong.prompt_id = "planted_strong";
  strong.pool_size = 10;
  strong.spatial = {16, 16};
  strong.token_count = 8;
  strong.core = {2, 3};
  strong.adjectives = {1};
  strong.verbs = {4};
  strong.prepositions = {5};
  strong.planted_gap = 0.5;
  strong.noise_scale = 0.01;
  strong.rng_seed = 1;
  out.push_back({"planted-strong", {strong}});

  SynthSpec noise = strong;
  noise.prompt_id = "noise_only";
  noise.spatial = {8, 8};
  noise.planted_gap = 0.0;
  noise.noise_scale = 1.0;
  noise.rng_seed = 2;
  out.push_back({"noise-only", {noise}});

  SynthSpec dit;
  dit.prompt_id = "dit_variant";
  dit.model_family = ModelFamily::Dit;
  dit.pool_size = 6;
  dit.image_tokens = 16;
  dit.token_count = 8;
  dit.core = {3};
  dit.adjectives = {2};
  dit.planted_gap = 0.5;
  dit.noise_scale = 0.01;
  dit.rng_seed = 3;
  dit.hooked_layer = 12;
  out.push_back({"dit-variant", {dit}});

  SynthSpec degenerate;
  degenerate.prompt_id = "degenerate_shapes";
  degenerate.pool_size = 3;
  degenerate.spatial = {1, 5};
  degenerate.token_count = 3;
  degenerate.core = {1};
  degenerate.stacked_count = 1;
  degenerate.planted_gap = 0.5;
  degenerate.noise_scale = 0.01;
  degenerate.rng_seed = 4;
  out.push_back({"degenerate-shapes", {degenerate}});

  // Stand-ins for diffusion times 800/600/400/200: the planted separation
  // grows as denoising progresses.
  FixtureSpec sweep{"timestep-sweep", {}};
  const int steps[] = {4, 8, 12, 16};
  const double gaps[] = {0.05, 0.15, 0.3, 0.5};
  for (int i = 0; i < 4; ++i) {
    SynthSpec s = strong;
    s.prompt_id = "sweep";
    s.spatial = {8, 8};
    s.timestep_index = steps[i];
    s.planted_gap = gaps[i];
    s.noise_scale = 0.5;
    s.rng_seed = 10 + static_cast<std::uint64_t>(i);
    sweep.pools.push_back(s);
  }
  out.push_back(sweep);
  return out;
}

std::vector<std::filesystem::path> generate_fixture_suite(const std::filesystem::path& dir) {
  const ScoringConfig config;
  std::vector<std::filesystem::path> manifests;
  for (const FixtureSpec& fixture : fixture_suite_specs()) {
    std::vector<SyntheticPool> pools;
    json expected = json::array();
    for (const SynthSpec& spec : fixture.pools) {
      SyntheticPool pool = generate_pool(spec);
      std::map<std::uint64_t, double> scores;
      for (const auto& r : pool.records) {
        scores[r.seed] =
            r.model_family == ModelFamily::Unet
                ? reference::unet_score(*r.tensor, r.spatial->h, r.spatial->w, pool.annotation.core,
                                        config.beta, config.kernel_radius, config.sigma)
                : reference::dit_score(*r.tensor, *r.image_token_count, pool.annotation.core,
                                       config.kernel_radius, config.sigma);
      }
      json entries = json::array();
      for (const auto& [seed, s] : scores) entries.push_back(json{{"seed", seed}, {"score", s}});
      auto order = order_by_value(scores);
      order.resize(std::min<std::size_t>(3, order.size()));
      expected.push_back(json{{"prompt_id", spec.prompt_id},
                              {"timestep_index", spec.timestep_index},
                              {"scores", entries},
                              {"selected_top3", order}});
      pools.push_back(std::move(pool));
    }
    const auto sub = dir / fixture.name;
    manifests.push_back(write_pools(pools, sub));
    write_json_file(sub / "expected_scores.json",
                    json{{"config", config_to_json(config)}, {"token_category", "core"}, {"pools", expected}});
  }
  return manifests;
}

}  // namespace abss
