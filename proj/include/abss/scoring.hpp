#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "abss/annotation.hpp"
#include "abss/manifest.hpp"
#include "abss/tensor.hpp"

namespace abss {

struct ScoringConfig {
  double beta = 100.0;          // token-axis softmax temperature
  std::size_t kernel_radius = 1;  // Gaussian support is (2k+1) taps per axis
  double sigma = 1.0;
  bool include_special_tokens = false;  // allow BOS (0) / EOS (n-1) in the token set

  void validate() const;
  friend bool operator==(const ScoringConfig&, const ScoringConfig&) = default;
};

nlohmann::json config_to_json(const ScoringConfig& config);
ScoringConfig config_from_json(const nlohmann::json& j);

/// Aggregated (or sharpened) attention, row-major (h, w, n), in double.
struct HwnMap {
  std::size_t h = 0, w = 0, n = 0;
  std::vector<double> values;

  double at(std::size_t y, std::size_t x, std::size_t i) const {
    return values[(y * w + x) * n + i];
  }
};

/// Single-channel (h, w) field, row-major.
struct Field2d {
  std::size_t h = 0, w = 0;
  std::vector<double> values;

  double at(std::size_t y, std::size_t x) const { return values[y * w + x]; }
};

struct Kernel1d {
  std::size_t radius = 0;
  std::vector<double> weights;  // 2*radius+1 taps, centre at index radius
};

struct Kernel2d {
  std::size_t radius = 0;
  std::vector<double> weights;  // (2r+1) x (2r+1), row-major

  std::size_t side() const noexcept { return 2 * radius + 1; }
  double at(std::size_t dy, std::size_t dx) const { return weights[dy * side() + dx]; }
};

/// Mean over the stacked axis of an (m, h*w, n) tensor, reshaped to (h, w, n).
HwnMap aggregate_unet(const AttnTensor& stacked, Spatial spatial);

/// Views an already aggregated (h, w, n) tensor as an HwnMap.
HwnMap to_hwn(const AttnTensor& aggregated);

/// Softmax of beta * logits along the token axis at every location.
HwnMap sharpen(const HwnMap& aggregated, double beta);

Kernel1d gaussian_kernel_1d(std::size_t radius, double sigma);
Kernel2d gaussian_kernel_2d(std::size_t radius, double sigma);

/// Mirror-without-border-repeat: -1 -> 1, len -> len-2. A length-1 axis
/// replicates its only element.
std::size_t reflect_index(std::ptrdiff_t index, std::size_t length);

Field2d smooth_2d(const Field2d& field, const Kernel2d& kernel);
/// Same result as smooth_2d with the outer-product kernel, in two 1D passes.
Field2d smooth_2d_separable(const Field2d& field, const Kernel1d& kernel);
std::vector<double> smooth_1d(std::span<const double> values, const Kernel1d& kernel);

/// Throws Usage for an empty set or a disallowed BOS/EOS index and Index for
/// an index outside [0, token_count).
void check_token_set(std::span<const std::size_t> token_set, std::size_t token_count,
                     bool include_special_tokens);

/// Core-token concentration for a U-Net capture.
double score_unet(const AttnTensor& stacked, Spatial spatial, const TokenAnnotation& annotation,
                  std::span<const std::size_t> token_set, const ScoringConfig& config);

/// As score_unet, starting from an already aggregated map.
double score_unet_aggregated(const HwnMap& aggregated, const TokenAnnotation& annotation,
                             std::span<const std::size_t> token_set,
                             const ScoringConfig& config);

/// Core-token concentration for a DiT joint-attention matrix whose first
/// `image_tokens` rows/columns are image patches.
double score_dit(const AttnTensor& joint, std::size_t image_tokens,
                 const TokenAnnotation& annotation, std::span<const std::size_t> token_set,
                 const ScoringConfig& config);

/// Per-seed scores for one prompt at one step.
struct ScoreTable {
  std::string prompt_id;
  int timestep_index = 0;
  TokenCategory category = TokenCategory::Core;
  ScoringConfig config;
  std::map<std::uint64_t, double> scores;
};

nlohmann::json score_table_to_json(const ScoreTable& table);
ScoreTable score_table_from_json(const nlohmann::json& j);

/// Dispatches each record to the U-Net or DiT scorer. Records must share
/// prompt_id and timestep_index. `threads` = 0 picks hardware concurrency;
/// the result does not depend on it.
ScoreTable score_pool(std::span<const SeedRecord> records, const AnnotationSet& annotations,
                      TokenCategory category, const ScoringConfig& config,
                      unsigned threads = 0);

/// Scores one record with the token set of `category`.
double score_record(const SeedRecord& record, const TokenAnnotation& annotation,
                    TokenCategory category, const ScoringConfig& config);

}  // namespace abss
