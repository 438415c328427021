#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "abss/manifest.hpp"
#include "abss/scoring.hpp"

namespace abss {

struct RankedSeed {
  std::uint64_t seed = 0;
  double score = 0.0;
  friend bool operator==(const RankedSeed&, const RankedSeed&) = default;
};

struct RankingResult {
  std::string prompt_id;
  std::vector<RankedSeed> ordering;  // descending score, ties by ascending seed
  std::vector<std::uint64_t> selected;
  std::size_t k = 0;
  std::vector<std::vector<std::uint64_t>> tie_groups;  // groups of >= 2 seeds sharing a score
  std::vector<std::string> warnings;

  std::vector<std::uint64_t> order() const;
};

/// Orders the table and keeps the first min(K, pool) seeds. K larger than the
/// pool is a warning, not an error.
RankingResult rank(const ScoreTable& table, std::size_t k);

/// Orders seeds by `values` descending with ascending-seed tie-breaks. Shared
/// by rank() and the evaluation ground-truth orderings.
std::vector<std::uint64_t> order_by_value(const std::map<std::uint64_t, double>& values);

/// Coarse NFE per reported image when N seeds are screened for t steps with a
/// full forward pass and K survivors finish the remaining T - t steps.
double nfe_unet(std::size_t pool_size, std::size_t keep, int screen_step, int total_steps);

/// As nfe_unet but the final screening step stops after block l* of L.
double nfe_dit(std::size_t pool_size, std::size_t keep, int screen_step, int total_steps,
               int hooked_layer, int total_layers);

struct NfeReport {
  std::size_t pool_size = 0;
  std::size_t keep = 0;
  int screen_step = 0;
  int total_steps = 0;
  ModelFamily model_family = ModelFamily::Unet;
  std::optional<int> hooked_layer;
  std::optional<int> total_layers;
  double nfe_per_image = 0.0;
};

NfeReport make_nfe_report(std::size_t pool_size, std::size_t keep, int screen_step,
                          int total_steps, ModelFamily family,
                          std::optional<int> hooked_layer = std::nullopt,
                          std::optional<int> total_layers = std::nullopt);
nlohmann::json nfe_report_to_json(const NfeReport& report);

enum class BaselineMethod { Random, Golden, Ns, InitNo, Ae, Nd, NpNet, Core2 };

std::string_view to_string(BaselineMethod method);
BaselineMethod parse_baseline_method(std::string_view text);

struct BaselineNfe {
  BaselineMethod method = BaselineMethod::Random;
  double nfe = 0.0;
  std::string flags;  // "", "†", "†*"
  std::vector<std::string> notes;
};

using NfeParams = std::map<std::string, double, std::less<>>;

/// Parameter names each baseline formula reads.
std::vector<std::string> baseline_param_names(BaselineMethod method);

/// The settings the comparison runs used (50 steps, 10-seed pools, keep 3...).
NfeParams default_baseline_params(BaselineMethod method);

/// Coarse NFE of a comparison method. Missing parameters are a usage error.
BaselineNfe nfe_baseline(BaselineMethod method, const NfeParams& params);

nlohmann::json ranking_to_json(const RankingResult& ranking, const ScoringConfig& config,
                               const std::optional<NfeReport>& nfe);
RankingResult ranking_from_json(const nlohmann::json& j);

}  // namespace abss
