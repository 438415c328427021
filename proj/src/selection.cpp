#include "abss/selection.hpp"

#include <algorithm>
#include <cmath>

#include "abss/error.hpp"

namespace abss {
namespace {

using nlohmann::json;

void check_screen_bounds(std::size_t pool_size, std::size_t keep, int t, int total) {
  if (total < 1 || t < 1 || t > total) {
    fail(ErrorKind::Usage, "screening step t=" + std::to_string(t) + " must lie in [1, T=" +
                               std::to_string(total) + "]");
  }
  if (keep < 1 || keep > pool_size) {
    fail(ErrorKind::Usage, "keep K=" + std::to_string(keep) + " must lie in [1, N=" +
                               std::to_string(pool_size) + "]");
  }
}

double param(const NfeParams& params, std::string_view method, const char* name) {
  auto it = params.find(name);
  if (it == params.end()) {
    fail(ErrorKind::Usage, std::string(method) + " needs parameter '" + name + "'");
  }
  if (!std::isfinite(it->second) || it->second < 0.0) {
    fail(ErrorKind::Usage, std::string(method) + " parameter '" + name + "' must be >= 0");
  }
  return it->second;
}

double positive_param(const NfeParams& params, std::string_view method, const char* name) {
  const double v = param(params, method, name);
  if (v <= 0.0) fail(ErrorKind::Usage, std::string(method) + " parameter '" + name + "' must be > 0");
  return v;
}

}  // namespace

std::vector<std::uint64_t> RankingResult::order() const {
  std::vector<std::uint64_t> out;
  out.reserve(ordering.size());
  for (const auto& r : ordering) out.push_back(r.seed);
  return out;
}

std::vector<std::uint64_t> order_by_value(const std::map<std::uint64_t, double>& values) {
  std::vector<std::pair<std::uint64_t, double>> items(values.begin(), values.end());
  // The map iterates seeds ascending, so a stable sort keeps ties seed-ascending.
  std::stable_sort(items.begin(), items.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::uint64_t> out;
  out.reserve(items.size());
  for (const auto& [seed, v] : items) out.push_back(seed);
  return out;
}

RankingResult rank(const ScoreTable& table, std::size_t k) {
  if (k < 1) fail(ErrorKind::Usage, "K must be >= 1");
  if (table.scores.empty()) fail(ErrorKind::Usage, "score table for '" + table.prompt_id + "' is empty");

  RankingResult result;
  result.prompt_id = table.prompt_id;
  result.k = k;
  for (std::uint64_t seed : order_by_value(table.scores)) {
    result.ordering.push_back({seed, table.scores.at(seed)});
  }
  for (std::size_t i = 0; i < result.ordering.size();) {
    std::size_t j = i + 1;
    while (j < result.ordering.size() && result.ordering[j].score == result.ordering[i].score) ++j;
    if (j - i > 1) {
      std::vector<std::uint64_t> group;
      for (std::size_t g = i; g < j; ++g) group.push_back(result.ordering[g].seed);
      result.tie_groups.push_back(std::move(group));
    }
    i = j;
  }
  if (k > result.ordering.size()) {
    result.warnings.push_back("K=" + std::to_string(k) + " exceeds pool size " +
                              std::to_string(result.ordering.size()) + "; keeping the whole pool");
  }
  const std::size_t keep = std::min(k, result.ordering.size());
  for (std::size_t i = 0; i < keep; ++i) result.selected.push_back(result.ordering[i].seed);
  return result;
}

double nfe_unet(std::size_t pool_size, std::size_t keep, int screen_step, int total_steps) {
  check_screen_bounds(pool_size, keep, screen_step, total_steps);
  const double n = static_cast<double>(pool_size), k = static_cast<double>(keep);
  return (n * screen_step + k * (total_steps - screen_step)) / k;
}

double nfe_dit(std::size_t pool_size, std::size_t keep, int screen_step, int total_steps,
               int hooked_layer, int total_layers) {
  check_screen_bounds(pool_size, keep, screen_step, total_steps);
  if (total_layers < 1 || hooked_layer < 1 || hooked_layer > total_layers) {
    fail(ErrorKind::Usage, "hooked layer l*=" + std::to_string(hooked_layer) +
                               " must lie in [1, L=" + std::to_string(total_layers) + "]");
  }
  const double n = static_cast<double>(pool_size), k = static_cast<double>(keep);
  const double screening =
      (screen_step - 1) + static_cast<double>(hooked_layer) / static_cast<double>(total_layers);
  return (n * screening + k * (total_steps - screen_step)) / k;
}

NfeReport make_nfe_report(std::size_t pool_size, std::size_t keep, int screen_step,
                          int total_steps, ModelFamily family, std::optional<int> hooked_layer,
                          std::optional<int> total_layers) {
  NfeReport r{pool_size, keep, screen_step, total_steps, family, hooked_layer, total_layers, 0.0};
  if (family == ModelFamily::Dit) {
    if (!hooked_layer || !total_layers) {
      fail(ErrorKind::Usage, "dit NFE needs the hooked layer l* and total layers L");
    }
    r.nfe_per_image = nfe_dit(pool_size, keep, screen_step, total_steps, *hooked_layer, *total_layers);
  } else {
    r.nfe_per_image = nfe_unet(pool_size, keep, screen_step, total_steps);
  }
  return r;
}

json nfe_report_to_json(const NfeReport& r) {
  json j{{"N", r.pool_size},
         {"K", r.keep},
         {"t", r.screen_step},
         {"T", r.total_steps},
         {"family", to_string(r.model_family)},
         {"nfe_per_image", r.nfe_per_image}};
  if (r.hooked_layer) j["l_star"] = *r.hooked_layer;
  if (r.total_layers) j["L"] = *r.total_layers;
  return j;
}

std::string_view to_string(BaselineMethod method) {
  switch (method) {
    case BaselineMethod::Random: return "random";
    case BaselineMethod::Golden: return "golden";
    case BaselineMethod::Ns: return "ns";
    case BaselineMethod::InitNo: return "initno";
    case BaselineMethod::Ae: return "ae";
    case BaselineMethod::Nd: return "nd";
    case BaselineMethod::NpNet: return "npnet";
    case BaselineMethod::Core2: return "core2";
  }
  return "?";
}

BaselineMethod parse_baseline_method(std::string_view text) {
  for (auto m : {BaselineMethod::Random, BaselineMethod::Golden, BaselineMethod::Ns,
                 BaselineMethod::InitNo, BaselineMethod::Ae, BaselineMethod::Nd,
                 BaselineMethod::NpNet, BaselineMethod::Core2}) {
    if (to_string(m) == text) return m;
  }
  fail(ErrorKind::Usage, "unknown baseline method '" + std::string(text) + "'");
}

std::vector<std::string> baseline_param_names(BaselineMethod method) {
  switch (method) {
    case BaselineMethod::Random:
    case BaselineMethod::NpNet:
    case BaselineMethod::Core2: return {"T"};
    case BaselineMethod::Golden: return {"T", "validation_prompts", "seeds", "test_prompts", "images"};
    case BaselineMethod::Ns: return {"T", "candidates", "inversion_steps", "keep"};
    case BaselineMethod::InitNo: return {"T", "rounds", "steps_per_round"};
    case BaselineMethod::Ae: return {"T", "guided_steps"};
    case BaselineMethod::Nd: return {"T", "epochs"};
  }
  return {};
}

NfeParams default_baseline_params(BaselineMethod method) {
  switch (method) {
    case BaselineMethod::Random:
    case BaselineMethod::NpNet:
    case BaselineMethod::Core2: return {{"T", 50}};
    case BaselineMethod::Golden:
      return {{"T", 50}, {"validation_prompts", 100}, {"seeds", 10}, {"test_prompts", 100}, {"images", 3}};
    case BaselineMethod::Ns: return {{"T", 50}, {"candidates", 10}, {"inversion_steps", 50}, {"keep", 3}};
    case BaselineMethod::InitNo: return {{"T", 50}, {"rounds", 5}, {"steps_per_round", 10}};
    case BaselineMethod::Ae: return {{"T", 50}, {"guided_steps", 25}};
    case BaselineMethod::Nd: return {{"T", 50}, {"epochs", 10}};
  }
  return {};
}

BaselineNfe nfe_baseline(BaselineMethod method, const NfeParams& params) {
  const std::string_view name = to_string(method);
  BaselineNfe out{method, 0.0, "", {}};
  const double steps = positive_param(params, name, "T");
  switch (method) {
    case BaselineMethod::Random:
      out.nfe = steps;
      break;
    case BaselineMethod::Golden: {
      const double v = positive_param(params, name, "validation_prompts");
      const double seeds = positive_param(params, name, "seeds");
      const double images = positive_param(params, name, "images");
      double test = v;
      if (params.contains("test_prompts")) {
        test = positive_param(params, name, "test_prompts");
      } else {
        out.notes.push_back("test_prompts not given; amortizing over validation_prompts");
      }
      out.nfe = steps + (v * seeds * steps) / (test * images);
      out.flags = "†";
      out.notes.push_back("excludes HPS-v2 evaluation during validation-set seed ranking");
      break;
    }
    case BaselineMethod::Ns: {
      const double candidates = positive_param(params, name, "candidates");
      const double inversion = param(params, name, "inversion_steps");
      const double keep = positive_param(params, name, "keep");
      out.nfe = candidates * (steps + inversion) / keep;
      break;
    }
    case BaselineMethod::InitNo:
      out.nfe = param(params, name, "rounds") * param(params, name, "steps_per_round") + steps;
      out.flags = "†";
      out.notes.push_back("upper bound: threshold-based early stopping may use fewer optimization steps");
      break;
    case BaselineMethod::Ae:
      out.nfe = steps + param(params, name, "guided_steps");
      out.flags = "†";
      out.notes.push_back("excludes threshold-triggered iterative refinement steps");
      break;
    case BaselineMethod::Nd:
      out.nfe = param(params, name, "epochs") * steps + steps;
      out.flags = "†";
      out.notes.push_back("excludes gradient-cache updates and VQAScore evaluation");
      break;
    case BaselineMethod::NpNet:
      out.nfe = steps;
      out.flags = "†*";
      out.notes.push_back("auxiliary noise model runs once per prompt; its training is not counted");
      break;
    case BaselineMethod::Core2:
      out.nfe = steps;
      out.flags = "†*";
      out.notes.push_back("per-step refinement branch is not a full forward pass; its training is not counted");
      break;
  }
  return out;
}

json ranking_to_json(const RankingResult& r, const ScoringConfig& config,
                     const std::optional<NfeReport>& nfe) {
  json ranking = json::array();
  for (const auto& e : r.ordering) ranking.push_back(json{{"seed", e.seed}, {"score", e.score}});
  json j{{"prompt_id", r.prompt_id},
         {"config", config_to_json(config)},
         {"K", r.k},
         {"ranking", ranking},
         {"selected", r.selected},
         {"tie_groups", r.tie_groups}};
  if (!r.warnings.empty()) j["warnings"] = r.warnings;
  j["nfe"] = nfe ? nfe_report_to_json(*nfe) : json::object();
  return j;
}

RankingResult ranking_from_json(const json& j) {
  if (!j.is_object() || !j.contains("ranking") || !j.at("ranking").is_array()) {
    fail(ErrorKind::Schema, "ranking document needs a 'ranking' array");
  }
  RankingResult r;
  r.prompt_id = j.value("prompt_id", std::string());
  for (const json& e : j.at("ranking")) {
    if (!e.contains("seed")) fail(ErrorKind::Schema, "ranking entries need 'seed'");
    r.ordering.push_back({e.at("seed").get<std::uint64_t>(), e.value("score", 0.0)});
  }
  if (j.contains("selected")) r.selected = j.at("selected").get<std::vector<std::uint64_t>>();
  r.k = j.value("K", r.selected.size());
  return r;
}

}  // namespace abss
