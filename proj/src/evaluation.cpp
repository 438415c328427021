#include "abss/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "abss/error.hpp"
#include "abss/json_file.hpp"
#include "abss/rng.hpp"

namespace abss {
namespace {

using nlohmann::json;

double gain_of(double rel, NdcgGain gain) {
  return gain == NdcgGain::Linear ? rel : std::exp2(rel) - 1.0;
}

}  // namespace

QualityTable quality_from_json(const json& j) {
  if (!j.is_object() || !j.contains("prompt_id") || !j.contains("scores")) {
    fail(ErrorKind::Schema, "quality table needs 'prompt_id' and 'scores'");
  }
  QualityTable q;
  q.prompt_id = j.at("prompt_id").get<std::string>();
  const json& scores = j.at("scores");
  if (!scores.is_object()) fail(ErrorKind::Schema, "quality 'scores' must map \"<seed>\" to a value");
  for (const auto& [key, value] : scores.items()) {
    std::uint64_t seed = 0;
    try {
      std::size_t used = 0;
      seed = std::stoull(key, &used);
      if (used != key.size()) throw std::invalid_argument(key);
    } catch (const std::exception&) {
      fail(ErrorKind::Schema, "quality key '" + key + "' is not a seed");
    }
    if (!value.is_number() || !std::isfinite(value.get<double>())) {
      fail(ErrorKind::Schema, "quality for seed " + key + " must be a finite number");
    }
    q.scores[seed] = value.get<double>();
  }
  if (q.scores.empty()) fail(ErrorKind::Schema, "quality table for '" + q.prompt_id + "' is empty");
  return q;
}

json quality_to_json(const QualityTable& q) {
  json scores = json::object();
  for (const auto& [seed, v] : q.scores) scores[std::to_string(seed)] = v;
  return json{{"prompt_id", q.prompt_id}, {"scores", scores}};
}

QualitySet load_quality(const std::filesystem::path& path) {
  const json doc = read_json_file(path);
  std::vector<json> items;
  if (doc.is_object() && doc.contains("tables")) {
    items = doc.at("tables").get<std::vector<json>>();
  } else if (doc.is_array()) {
    items = doc.get<std::vector<json>>();
  } else {
    items.push_back(doc);
  }
  QualitySet out;
  for (const json& item : items) {
    QualityTable q = quality_from_json(item);
    const std::string id = q.prompt_id;
    if (!out.emplace(id, std::move(q)).second) {
      fail(ErrorKind::Schema, "duplicate quality table for prompt '" + id + "'");
    }
  }
  return out;
}

double overlap_rate(std::span<const std::uint64_t> predicted, std::span<const std::uint64_t> truth) {
  if (predicted.size() != truth.size()) {
    fail(ErrorKind::Usage, "top-K lists differ in length (" + std::to_string(predicted.size()) +
                               " vs " + std::to_string(truth.size()) + ")");
  }
  if (predicted.empty()) fail(ErrorKind::Usage, "top-K lists must be non-empty");
  const std::set<std::uint64_t> p(predicted.begin(), predicted.end());
  const std::set<std::uint64_t> t(truth.begin(), truth.end());
  if (p.size() != predicted.size() || t.size() != truth.size()) {
    fail(ErrorKind::Usage, "top-K lists must not contain duplicate seeds");
  }
  std::size_t common = 0;
  for (std::uint64_t s : p) common += t.count(s);
  return static_cast<double>(common) / static_cast<double>(predicted.size());
}

NdcgResult ndcg(std::span<const std::uint64_t> order, const QualityTable& relevance, NdcgGain gain) {
  if (order.size() != relevance.scores.size()) {
    fail(ErrorKind::Usage, "predicted order has " + std::to_string(order.size()) +
                               " seeds but the relevance table has " +
                               std::to_string(relevance.scores.size()));
  }
  std::set<std::uint64_t> seen;
  for (std::uint64_t s : order) {
    if (!relevance.scores.contains(s)) {
      fail(ErrorKind::Usage, "seed " + std::to_string(s) + " has no relevance value");
    }
    if (!seen.insert(s).second) fail(ErrorKind::Usage, "seed " + std::to_string(s) + " repeats");
  }

  NdcgResult result;
  double lowest = 0.0;
  for (const auto& [seed, v] : relevance.scores) lowest = std::min(lowest, v);
  result.relevance_shift = -lowest;
  auto rel = [&](std::uint64_t seed) { return relevance.scores.at(seed) + result.relevance_shift; };

  double dcg = 0.0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    dcg += gain_of(rel(order[i]), gain) / std::log2(static_cast<double>(i) + 2.0);
  }
  std::vector<double> ideal;
  for (const auto& [seed, v] : relevance.scores) ideal.push_back(rel(seed));
  std::sort(ideal.begin(), ideal.end(), std::greater<>());
  double idcg = 0.0;
  for (std::size_t i = 0; i < ideal.size(); ++i) {
    idcg += gain_of(ideal[i], gain) / std::log2(static_cast<double>(i) + 2.0);
  }
  result.value = idcg == 0.0 ? 1.0 : std::clamp(dcg / idcg, 0.0, 1.0);
  return result;
}

RankingMetrics compare_to_quality(const RankingResult& ranking, const QualityTable& quality,
                                  std::size_t k, NdcgGain gain) {
  if (k < 1) fail(ErrorKind::Usage, "K must be >= 1");
  const std::vector<std::uint64_t> predicted = ranking.order();
  const NdcgResult n = ndcg(predicted, quality, gain);
  const std::size_t top = std::min(k, predicted.size());
  const std::vector<std::uint64_t> truth = order_by_value(quality.scores);

  RankingMetrics m;
  m.ndcg = n.value;
  m.relevance_shift = n.relevance_shift;
  m.overlap = overlap_rate(std::span(predicted).first(top), std::span(truth).first(top));
  double sum = 0.0;
  for (std::size_t i = 0; i < top; ++i) sum += quality.scores.at(predicted[i]);
  m.mean_selected_quality = sum / static_cast<double>(top);
  return m;
}

std::map<std::pair<std::string, int>, std::vector<SeedRecord>> group_pools(
    std::span<const SeedRecord> records) {
  std::map<std::pair<std::string, int>, std::vector<SeedRecord>> pools;
  for (const auto& r : records) pools[{r.prompt_id, r.timestep_index}].push_back(r);
  return pools;
}

std::vector<SweepRow> timestep_sweep(std::span<const SeedRecord> records,
                                     const AnnotationSet& annotations, const ScoringConfig& config,
                                     const QualitySet& quality, std::size_t k,
                                     TokenCategory category, unsigned threads) {
  std::map<int, std::vector<std::pair<std::string, std::vector<SeedRecord>>>> by_step;
  for (auto& [key, pool] : group_pools(records)) by_step[key.second].emplace_back(key.first, pool);
  if (by_step.size() < 2) {
    fail(ErrorKind::Usage, "a timestep sweep needs at least 2 distinct timesteps, got " +
                               std::to_string(by_step.size()));
  }

  std::vector<SweepRow> rows;
  for (const auto& [step, pools] : by_step) {
    SweepRow row;
    row.timestep_index = step;
    double ndcg_sum = 0.0, overlap_sum = 0.0;
    for (const auto& [prompt, pool] : pools) {
      try {
        auto q = quality.find(prompt);
        if (q == quality.end()) fail(ErrorKind::Usage, "no quality table for prompt '" + prompt + "'");
        const ScoreTable table = score_pool(pool, annotations, category, config, threads);
        const RankingMetrics m = compare_to_quality(rank(table, k), q->second, k);
        ndcg_sum += m.ndcg;
        overlap_sum += m.overlap;
        ++row.prompts_scored;
      } catch (const Error& e) {
        row.errors.push_back("prompt '" + prompt + "': " + e.what());
      }
    }
    if (row.prompts_scored > 0) {
      row.ndcg = ndcg_sum / static_cast<double>(row.prompts_scored);
      row.overlap = overlap_sum / static_cast<double>(row.prompts_scored);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

AblationReport token_ablation(std::span<const SeedRecord> records, const AnnotationSet& annotations,
                              const ScoringConfig& config, const QualitySet& quality,
                              std::size_t k, std::span<const TokenCategory> categories,
                              unsigned threads) {
  const auto pools = group_pools(records);
  if (pools.empty()) fail(ErrorKind::Usage, "token ablation needs at least one seed pool");

  AblationReport report;
  for (TokenCategory category : categories) {
    AblationRow row;
    row.category = category;
    RankingMetrics sum;
    for (const auto& [key, pool] : pools) {
      const std::string& prompt = key.first;
      auto a = annotations.find(prompt);
      if (a == annotations.end()) fail(ErrorKind::Usage, "no annotation for prompt '" + prompt + "'");
      auto q = quality.find(prompt);
      if (q == quality.end()) fail(ErrorKind::Usage, "no quality table for prompt '" + prompt + "'");

      AblationCell cell;
      cell.prompt_id = prompt;
      cell.category = category;
      if (a->second.tokens(category).empty()) {
        ++row.prompts_absent;
        report.cells.push_back(cell);
        continue;
      }
      const ScoreTable table = score_pool(pool, annotations, category, config, threads);
      cell.present = true;
      cell.metrics = compare_to_quality(rank(table, k), q->second, k);
      sum.ndcg += cell.metrics.ndcg;
      sum.overlap += cell.metrics.overlap;
      sum.mean_selected_quality += cell.metrics.mean_selected_quality;
      ++row.prompts_scored;
      report.cells.push_back(cell);
    }
    if (row.prompts_scored > 0) {
      const double n = static_cast<double>(row.prompts_scored);
      row.mean = RankingMetrics{sum.ndcg / n, sum.overlap / n, sum.mean_selected_quality / n, 0.0};
    }
    report.rows.push_back(row);
  }
  return report;
}

CorruptionResult corrupt_annotations(const AnnotationSet& annotations, double fraction,
                                     std::uint64_t rng_seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) fail(ErrorKind::Usage, "fraction must lie in [0, 1]");
  CorruptionResult result;
  result.annotations = annotations;

  std::vector<std::string> prompts;
  for (const auto& [id, a] : annotations) prompts.push_back(id);
  const auto target = static_cast<std::size_t>(
      std::ceil(fraction * static_cast<double>(prompts.size()) - 1e-9));

  Rng rng(rng_seed);
  // Partial Fisher-Yates: the first `target` entries are a uniform subset.
  for (std::size_t i = 0; i < target; ++i) {
    const std::size_t j = i + rng.uniform_below(prompts.size() - i);
    std::swap(prompts[i], prompts[j]);
  }
  std::vector<std::string> chosen(prompts.begin(), prompts.begin() + static_cast<std::ptrdiff_t>(target));
  std::sort(chosen.begin(), chosen.end());

  for (const std::string& id : chosen) {
    TokenAnnotation& a = result.annotations.at(id);
    if (a.token_count <= 3) {
      result.warnings.push_back("prompt '" + id + "' has " + std::to_string(a.token_count) +
                                " tokens; no replacement candidates, skipped");
      continue;
    }
    std::vector<std::size_t> candidates;
    for (std::size_t idx = 1; idx + 1 < a.token_count; ++idx) {
      if (!std::binary_search(a.core.begin(), a.core.end(), idx)) candidates.push_back(idx);
    }
    if (candidates.empty()) {
      result.warnings.push_back("prompt '" + id + "' has no non-core content tokens, skipped");
      continue;
    }
    std::vector<std::size_t> drawn;
    for (std::size_t c = 0; c < a.core.size() && !candidates.empty(); ++c) {
      const std::size_t pick = rng.uniform_below(candidates.size());
      drawn.push_back(candidates[pick]);
      candidates.erase(candidates.begin() + static_cast<std::ptrdiff_t>(pick));
    }
    if (drawn.size() < a.core.size()) {
      result.warnings.push_back("prompt '" + id + "': only " + std::to_string(drawn.size()) +
                                " replacement candidates for " + std::to_string(a.core.size()) +
                                " core tokens");
    }
    std::sort(drawn.begin(), drawn.end());
    for (TokenCategory other : {TokenCategory::Adjectives, TokenCategory::Verbs, TokenCategory::Prepositions}) {
      auto& set = a.tokens(other);
      std::erase_if(set, [&](std::size_t idx) { return std::binary_search(drawn.begin(), drawn.end(), idx); });
    }
    a.core = std::move(drawn);
    result.corrupted.push_back(id);
  }
  return result;
}

}  // namespace abss
