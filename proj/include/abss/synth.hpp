#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "abss/annotation.hpp"
#include "abss/evaluation.hpp"
#include "abss/manifest.hpp"

namespace abss {

/// Planted-signal pool description. Seed i (0-based, seed value first_seed+i)
/// gets a logit bonus planted_gap * i / (N-1) on the signal tokens (the core
/// tokens unless `signal_tokens` is set) plus uniform [0, noise_scale) noise on
/// every logit; logits are softmaxed per location (per row for DiT).
struct SynthSpec {
  std::string prompt_id = "synth";
  std::size_t pool_size = 10;
  Spatial spatial{16, 16};
  std::size_t token_count = 8;
  std::vector<std::size_t> core{2, 3};
  std::vector<std::size_t> adjectives;
  std::vector<std::size_t> verbs;
  std::vector<std::size_t> prepositions;
  std::optional<std::vector<std::size_t>> signal_tokens;
  double planted_gap = 0.5;
  double noise_scale = 0.01;
  std::uint64_t rng_seed = 0;
  std::uint64_t first_seed = 0;
  ModelFamily model_family = ModelFamily::Unet;
  std::size_t stacked_count = 2;   // unet
  std::size_t image_tokens = 16;   // dit
  int hooked_layer = 12;           // dit, recorded in the manifest only
  int timestep_index = 10;
  int total_steps = 50;

  void validate() const;
};

struct SyntheticPool {
  std::vector<SeedRecord> records;            // tensors populated in memory
  std::vector<std::uint64_t> ground_truth_order;  // descending planted bonus, ties by seed
  TokenAnnotation annotation;
  QualityTable planted_quality;               // seed -> planted bonus
};

/// Pure function of the spec: identical specs give bit-identical tensors.
SyntheticPool generate_pool(const SynthSpec& spec);

/// Writes tensors, manifest.json, annotations.json, quality.json and
/// ground_truth.json into `dir`. Returns the manifest path.
std::filesystem::path write_pool(const SyntheticPool& pool, const std::filesystem::path& dir);

/// Several pools (e.g. one per timestep) into one directory and manifest.
std::filesystem::path write_pools(const std::vector<SyntheticPool>& pools,
                                  const std::filesystem::path& dir);

/// Named specs of the frozen fixture suite.
struct FixtureSpec {
  std::string name;
  std::vector<SynthSpec> pools;  // several entries = one pool per timestep
};
std::vector<FixtureSpec> fixture_suite_specs();

/// Writes every fixture under `dir/<name>/` along with expected_scores.json
/// computed by the brute-force reference scorer. Returns manifest paths.
std::vector<std::filesystem::path> generate_fixture_suite(const std::filesystem::path& dir);

}  // namespace abss
