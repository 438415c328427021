#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "abss/annotation.hpp"
#include "abss/manifest.hpp"
#include "abss/scoring.hpp"
#include "abss/selection.hpp"

namespace abss {

/// Externally supplied per-seed quality (higher is better), e.g. HPS values.
struct QualityTable {
  std::string prompt_id;
  std::map<std::uint64_t, double> scores;
};

using QualitySet = std::map<std::string, QualityTable>;

QualityTable quality_from_json(const nlohmann::json& j);
nlohmann::json quality_to_json(const QualityTable& q);
/// Accepts one table, an array of tables, or {"tables": [...]}.
QualitySet load_quality(const std::filesystem::path& path);

/// |predicted ∩ truth| / K for two duplicate-free top-K lists of equal length.
double overlap_rate(std::span<const std::uint64_t> predicted_topk,
                    std::span<const std::uint64_t> truth_topk);

enum class NdcgGain { Linear, Exponential };

struct NdcgResult {
  double value = 1.0;
  double relevance_shift = 0.0;  // amount added to every relevance (min-shift)
};

/// Full-list NDCG. `predicted_order` must be a permutation of the table's
/// seeds. Negative relevances are shifted by the pool minimum first.
NdcgResult ndcg(std::span<const std::uint64_t> predicted_order, const QualityTable& relevance,
                NdcgGain gain = NdcgGain::Linear);

struct RankingMetrics {
  double ndcg = 0.0;
  double overlap = 0.0;
  double mean_selected_quality = 0.0;
  double relevance_shift = 0.0;
};

/// Compares a ranking against the quality ordering: full-list NDCG,
/// overlap@K (K capped at pool size) and the mean quality of the top K.
RankingMetrics compare_to_quality(const RankingResult& ranking, const QualityTable& quality,
                                  std::size_t k, NdcgGain gain = NdcgGain::Linear);

struct SweepRow {
  int timestep_index = 0;
  std::size_t prompts_scored = 0;
  std::optional<double> ndcg;
  std::optional<double> overlap;
  std::vector<std::string> errors;
};

/// Scores, ranks and compares every (timestep, prompt) pool; metrics are
/// averaged over prompts per timestep. Failing pools become row errors.
std::vector<SweepRow> timestep_sweep(std::span<const SeedRecord> records,
                                     const AnnotationSet& annotations,
                                     const ScoringConfig& config, const QualitySet& quality,
                                     std::size_t k, TokenCategory category = TokenCategory::Core,
                                     unsigned threads = 0);

struct AblationCell {
  std::string prompt_id;
  TokenCategory category = TokenCategory::Core;
  bool present = false;  // false when the prompt has no tokens of this category
  RankingMetrics metrics;
};

struct AblationRow {
  TokenCategory category = TokenCategory::Core;
  std::size_t prompts_scored = 0;
  std::size_t prompts_absent = 0;
  std::optional<RankingMetrics> mean;
};

struct AblationReport {
  std::vector<AblationRow> rows;
  std::vector<AblationCell> cells;
};

AblationReport token_ablation(std::span<const SeedRecord> records,
                              const AnnotationSet& annotations, const ScoringConfig& config,
                              const QualitySet& quality, std::size_t k,
                              std::span<const TokenCategory> categories = kAllCategories,
                              unsigned threads = 0);

struct CorruptionResult {
  AnnotationSet annotations;
  std::vector<std::string> corrupted;
  std::vector<std::string> warnings;
};

/// Replaces the core tokens of ceil(fraction * prompts) uniformly chosen
/// prompts with random non-core, non-special indices. Drawn indices leave any
/// other category so the sets stay disjoint.
CorruptionResult corrupt_annotations(const AnnotationSet& annotations, double fraction,
                                     std::uint64_t rng_seed);

/// Groups records by (prompt_id, timestep_index), preserving input order inside a group.
std::map<std::pair<std::string, int>, std::vector<SeedRecord>> group_pools(
    std::span<const SeedRecord> records);

}  // namespace abss
