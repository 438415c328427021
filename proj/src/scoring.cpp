#include "abss/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include "abss/error.hpp"
#include "abss/parallel.hpp"

namespace abss {
namespace {

using nlohmann::json;

double mean_of(std::span<const double> v) {
  double sum = 0.0;
  for (double x : v) sum += x;
  return sum / static_cast<double>(v.size());
}

// Weighted window sum clamped to the window's range. The exact convex
// combination lies in that range; the clamp removes rounding excursions so
// constant windows come back unchanged.
struct WindowSum {
  double sum = 0.0;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();

  void add(double weight, double v) {
    sum += weight * v;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  double value() const { return std::clamp(sum, lo, hi); }
};

void check_score(double score, const char* path) {
  if (!std::isfinite(score) || score < 0.0 || score > 1.0 + 1e-12) {
    fail(ErrorKind::Internal, std::string(path) + " produced out-of-range score " +
                                  std::to_string(score));
  }
}

}  // namespace

void ScoringConfig::validate() const {
  if (!(beta > 0.0) || !std::isfinite(beta)) fail(ErrorKind::Usage, "beta must be > 0");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) fail(ErrorKind::Usage, "sigma must be > 0");
}

json config_to_json(const ScoringConfig& c) {
  return json{{"beta", c.beta},
              {"k", c.kernel_radius},
              {"sigma", c.sigma},
              {"include_special_tokens", c.include_special_tokens}};
}

ScoringConfig config_from_json(const json& j) {
  ScoringConfig c;
  if (!j.is_object()) fail(ErrorKind::Schema, "config must be an object");
  c.beta = j.value("beta", c.beta);
  c.kernel_radius = j.value("k", c.kernel_radius);
  c.sigma = j.value("sigma", c.sigma);
  c.include_special_tokens = j.value("include_special_tokens", c.include_special_tokens);
  c.validate();
  return c;
}

HwnMap aggregate_unet(const AttnTensor& stacked, Spatial spatial) {
  if (stacked.ndim() != 3) fail(ErrorKind::Shape, "stacked tensor must be 3D (m, h*w, n)");
  const std::size_t m = stacked.dim(0), q = stacked.dim(1), n = stacked.dim(2);
  if (spatial.h < 1 || spatial.w < 1 || spatial.area() != q) {
    fail(ErrorKind::Shape, "spatial " + std::to_string(spatial.h) + "x" + std::to_string(spatial.w) +
                               " does not match query dimension " + std::to_string(q));
  }
  HwnMap out{spatial.h, spatial.w, n, std::vector<double>(q * n, 0.0)};
  const std::size_t plane = q * n;
  for (std::size_t j = 0; j < m; ++j) {
    const float* src = stacked.data.data() + j * plane;
    for (std::size_t e = 0; e < plane; ++e) out.values[e] += src[e];
  }
  const double inv = 1.0 / static_cast<double>(m);
  for (double& v : out.values) v *= inv;
  return out;
}

HwnMap to_hwn(const AttnTensor& aggregated) {
  if (aggregated.ndim() != 3) fail(ErrorKind::Shape, "aggregated tensor must be 3D (h, w, n)");
  return HwnMap{aggregated.dim(0), aggregated.dim(1), aggregated.dim(2),
                std::vector<double>(aggregated.data.begin(), aggregated.data.end())};
}

HwnMap sharpen(const HwnMap& a, double beta) {
  if (a.n < 1) fail(ErrorKind::Shape, "token axis is empty");
  if (!(beta > 0.0)) fail(ErrorKind::Usage, "beta must be > 0");
  HwnMap out{a.h, a.w, a.n, std::vector<double>(a.values.size())};
  const std::size_t locations = a.h * a.w;
  for (std::size_t loc = 0; loc < locations; ++loc) {
    const double* in = a.values.data() + loc * a.n;
    double* o = out.values.data() + loc * a.n;
    const double peak = *std::max_element(in, in + a.n);
    double denom = 0.0;
    for (std::size_t i = 0; i < a.n; ++i) {
      o[i] = std::exp(beta * (in[i] - peak));
      denom += o[i];
    }
    for (std::size_t i = 0; i < a.n; ++i) o[i] /= denom;
  }
  return out;
}

Kernel1d gaussian_kernel_1d(std::size_t radius, double sigma) {
  if (!(sigma > 0.0)) fail(ErrorKind::Usage, "sigma must be > 0");
  Kernel1d k{radius, std::vector<double>(2 * radius + 1)};
  const double r = static_cast<double>(radius);
  double sum = 0.0;
  for (std::size_t i = 0; i < k.weights.size(); ++i) {
    const double d = static_cast<double>(i) - r;
    k.weights[i] = std::exp(-(d * d) / (2.0 * sigma * sigma));
    sum += k.weights[i];
  }
  for (double& w : k.weights) w /= sum;
  return k;
}

Kernel2d gaussian_kernel_2d(std::size_t radius, double sigma) {
  if (!(sigma > 0.0)) fail(ErrorKind::Usage, "sigma must be > 0");
  Kernel2d k{radius, {}};
  const std::size_t side = k.side();
  k.weights.resize(side * side);
  const double r = static_cast<double>(radius);
  double sum = 0.0;
  for (std::size_t y = 0; y < side; ++y) {
    for (std::size_t x = 0; x < side; ++x) {
      const double dy = static_cast<double>(y) - r, dx = static_cast<double>(x) - r;
      const double v = std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
      k.weights[y * side + x] = v;
      sum += v;
    }
  }
  for (double& w : k.weights) w /= sum;
  return k;
}

std::size_t reflect_index(std::ptrdiff_t index, std::size_t length) {
  if (length == 1) return 0;
  const auto last = static_cast<std::ptrdiff_t>(length) - 1;
  // Reflection is periodic with period 2*last; fold once, then mirror.
  const std::ptrdiff_t period = 2 * last;
  std::ptrdiff_t i = index % period;
  if (i < 0) i += period;
  return static_cast<std::size_t>(i <= last ? i : period - i);
}

Field2d smooth_2d(const Field2d& field, const Kernel2d& kernel) {
  if (field.h < 1 || field.w < 1) fail(ErrorKind::Shape, "field must be at least 1x1");
  Field2d out{field.h, field.w, std::vector<double>(field.values.size())};
  const auto r = static_cast<std::ptrdiff_t>(kernel.radius);
  for (std::size_t y = 0; y < field.h; ++y) {
    for (std::size_t x = 0; x < field.w; ++x) {
      WindowSum acc;
      for (std::ptrdiff_t dy = -r; dy <= r; ++dy) {
        const std::size_t sy = reflect_index(static_cast<std::ptrdiff_t>(y) + dy, field.h);
        for (std::ptrdiff_t dx = -r; dx <= r; ++dx) {
          const std::size_t sx = reflect_index(static_cast<std::ptrdiff_t>(x) + dx, field.w);
          acc.add(kernel.at(static_cast<std::size_t>(dy + r), static_cast<std::size_t>(dx + r)),
                  field.at(sy, sx));
        }
      }
      out.values[y * field.w + x] = acc.value();
    }
  }
  return out;
}

Field2d smooth_2d_separable(const Field2d& field, const Kernel1d& kernel) {
  if (field.h < 1 || field.w < 1) fail(ErrorKind::Shape, "field must be at least 1x1");
  const auto r = static_cast<std::ptrdiff_t>(kernel.radius);
  Field2d rows{field.h, field.w, std::vector<double>(field.values.size())};
  for (std::size_t y = 0; y < field.h; ++y) {
    for (std::size_t x = 0; x < field.w; ++x) {
      WindowSum acc;
      for (std::ptrdiff_t d = -r; d <= r; ++d) {
        acc.add(kernel.weights[static_cast<std::size_t>(d + r)],
                field.at(y, reflect_index(static_cast<std::ptrdiff_t>(x) + d, field.w)));
      }
      rows.values[y * field.w + x] = acc.value();
    }
  }
  Field2d out{field.h, field.w, std::vector<double>(field.values.size())};
  for (std::size_t y = 0; y < field.h; ++y) {
    for (std::size_t x = 0; x < field.w; ++x) {
      WindowSum acc;
      for (std::ptrdiff_t d = -r; d <= r; ++d) {
        acc.add(kernel.weights[static_cast<std::size_t>(d + r)],
                rows.at(reflect_index(static_cast<std::ptrdiff_t>(y) + d, field.h), x));
      }
      out.values[y * field.w + x] = acc.value();
    }
  }
  return out;
}

std::vector<double> smooth_1d(std::span<const double> values, const Kernel1d& kernel) {
  if (values.empty()) fail(ErrorKind::Shape, "cannot smooth an empty vector");
  const auto r = static_cast<std::ptrdiff_t>(kernel.radius);
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    WindowSum acc;
    for (std::ptrdiff_t d = -r; d <= r; ++d) {
      acc.add(kernel.weights[static_cast<std::size_t>(d + r)],
              values[reflect_index(static_cast<std::ptrdiff_t>(i) + d, values.size())]);
    }
    out[i] = acc.value();
  }
  return out;
}

void check_token_set(std::span<const std::size_t> token_set, std::size_t token_count,
                     bool include_special_tokens) {
  if (token_set.empty()) fail(ErrorKind::Usage, "token set is empty");
  for (std::size_t idx : token_set) {
    if (idx >= token_count) {
      fail(ErrorKind::Index, "token index " + std::to_string(idx) + " outside [0, " +
                                 std::to_string(token_count - 1) + "]");
    }
    if (!include_special_tokens && (idx == 0 || idx + 1 == token_count)) {
      fail(ErrorKind::Usage, "token index " + std::to_string(idx) +
                                 " is BOS/EOS; enable include_special_tokens to score it");
    }
  }
}

double score_unet_aggregated(const HwnMap& aggregated, const TokenAnnotation& annotation,
                             std::span<const std::size_t> token_set,
                             const ScoringConfig& config) {
  config.validate();
  if (annotation.token_count != aggregated.n) {
    fail(ErrorKind::Shape, "prompt '" + annotation.prompt_id + "' has " +
                               std::to_string(annotation.token_count) +
                               " tokens but the attention map has " + std::to_string(aggregated.n));
  }
  check_token_set(token_set, aggregated.n, config.include_special_tokens);

  const HwnMap sharp = sharpen(aggregated, config.beta);
  const Kernel1d kernel = gaussian_kernel_1d(config.kernel_radius, config.sigma);
  const std::size_t area = sharp.h * sharp.w;
  double total = 0.0;
  Field2d slice{sharp.h, sharp.w, std::vector<double>(area)};
  for (std::size_t token : token_set) {
    for (std::size_t loc = 0; loc < area; ++loc) slice.values[loc] = sharp.values[loc * sharp.n + token];
    const Field2d smoothed =
        config.kernel_radius == 0 ? slice : smooth_2d_separable(slice, kernel);
    total += mean_of(smoothed.values);
  }
  const double score = total / static_cast<double>(token_set.size());
  check_score(score, "score_unet");
  return score;
}

double score_unet(const AttnTensor& stacked, Spatial spatial, const TokenAnnotation& annotation,
                  std::span<const std::size_t> token_set, const ScoringConfig& config) {
  return score_unet_aggregated(aggregate_unet(stacked, spatial), annotation, token_set, config);
}

double score_dit(const AttnTensor& joint, std::size_t image_tokens,
                 const TokenAnnotation& annotation, std::span<const std::size_t> token_set,
                 const ScoringConfig& config) {
  config.validate();
  if (joint.ndim() != 2 || joint.dim(0) != joint.dim(1)) {
    fail(ErrorKind::Shape, "joint attention must be a square 2D matrix");
  }
  const std::size_t side = joint.dim(0);
  if (image_tokens < 1 || image_tokens >= side) {
    fail(ErrorKind::Shape, "image token count " + std::to_string(image_tokens) +
                               " leaves no text tokens in a " + std::to_string(side) + "-wide matrix");
  }
  const std::size_t text_tokens = side - image_tokens;
  if (annotation.token_count != text_tokens) {
    fail(ErrorKind::Shape, "prompt '" + annotation.prompt_id + "' has " +
                               std::to_string(annotation.token_count) +
                               " tokens but the joint matrix has " + std::to_string(text_tokens));
  }
  check_token_set(token_set, text_tokens, config.include_special_tokens);

  std::vector<double> per_token(text_tokens, 0.0);
  for (std::size_t row = 0; row < image_tokens; ++row) {
    const float* src = joint.data.data() + row * side + image_tokens;
    for (std::size_t i = 0; i < text_tokens; ++i) per_token[i] += src[i];
  }
  for (double& v : per_token) v /= static_cast<double>(image_tokens);

  const std::vector<double> smoothed =
      smooth_1d(per_token, gaussian_kernel_1d(config.kernel_radius, config.sigma));
  double total = 0.0;
  for (std::size_t token : token_set) total += smoothed[token];
  const double score = total / static_cast<double>(token_set.size());
  check_score(score, "score_dit");
  return score;
}

double score_record(const SeedRecord& record, const TokenAnnotation& annotation,
                    TokenCategory category, const ScoringConfig& config) {
  if (!record.tensor) fail(ErrorKind::Io, record.label() + ": tensor not loaded");
  const auto& tokens = annotation.tokens(category);
  if (tokens.empty()) {
    fail(ErrorKind::Usage, "prompt '" + annotation.prompt_id + "' has no " +
                               std::string(to_string(category)) + " tokens");
  }
  switch (record.tensor_kind) {
    case TensorKind::StackedQn:
      return score_unet(*record.tensor, record.spatial.value(), annotation, tokens, config);
    case TensorKind::AggregatedHwn:
      return score_unet_aggregated(to_hwn(*record.tensor), annotation, tokens, config);
    case TensorKind::DitJoint:
      return score_dit(*record.tensor, record.image_token_count.value(), annotation, tokens, config);
  }
  fail(ErrorKind::Internal, "unknown tensor kind");
}

ScoreTable score_pool(std::span<const SeedRecord> records, const AnnotationSet& annotations,
                      TokenCategory category, const ScoringConfig& config, unsigned threads) {
  config.validate();
  if (records.empty()) fail(ErrorKind::Usage, "cannot score an empty seed pool");
  const SeedRecord& first = records.front();
  for (const auto& r : records) {
    if (r.prompt_id != first.prompt_id) {
      fail(ErrorKind::Usage, "pool mixes prompts '" + first.prompt_id + "' and '" + r.prompt_id + "'");
    }
    if (r.timestep_index != first.timestep_index) {
      fail(ErrorKind::Usage, "pool for prompt '" + first.prompt_id + "' mixes timesteps " +
                                 std::to_string(first.timestep_index) + " and " +
                                 std::to_string(r.timestep_index));
    }
  }
  auto it = annotations.find(first.prompt_id);
  if (it == annotations.end()) {
    fail(ErrorKind::Usage, "no annotation for prompt '" + first.prompt_id + "'");
  }
  const TokenAnnotation& annotation = it->second;
  if (annotation.tokens(category).empty()) {
    fail(ErrorKind::Usage, "prompt '" + first.prompt_id + "' has an empty " +
                               std::string(to_string(category)) + " token set");
  }

  std::vector<double> scores(records.size());
  parallel_for(records.size(), threads, [&](std::size_t i) {
    try {
      scores[i] = score_record(records[i], annotation, category, config);
    } catch (const Error& e) {
      throw Error(e.kind(), records[i].label() + ": " + e.what());
    }
  });

  ScoreTable table{first.prompt_id, first.timestep_index, category, config, {}};
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!table.scores.emplace(records[i].seed, scores[i]).second) {
      fail(ErrorKind::Usage, "seed " + std::to_string(records[i].seed) +
                                 " appears twice in the pool for prompt '" + first.prompt_id + "'");
    }
  }
  return table;
}

json score_table_to_json(const ScoreTable& t) {
  json scores = json::array();
  for (const auto& [seed, score] : t.scores) scores.push_back(json{{"seed", seed}, {"score", score}});
  return json{{"prompt_id", t.prompt_id},
              {"timestep_index", t.timestep_index},
              {"token_category", to_string(t.category)},
              {"config", config_to_json(t.config)},
              {"scores", scores}};
}

ScoreTable score_table_from_json(const json& j) {
  if (!j.is_object()) fail(ErrorKind::Schema, "score table must be an object");
  for (const char* field : {"prompt_id", "scores"}) {
    if (!j.contains(field)) fail(ErrorKind::Schema, std::string("missing field '") + field + "'");
  }
  ScoreTable t;
  t.prompt_id = j.at("prompt_id").get<std::string>();
  t.timestep_index = j.value("timestep_index", 0);
  t.category = parse_token_category(j.value("token_category", std::string("core")));
  if (j.contains("config")) t.config = config_from_json(j.at("config"));
  const json& scores = j.at("scores");
  if (!scores.is_array()) fail(ErrorKind::Schema, "field 'scores' must be an array");
  for (const json& e : scores) {
    if (!e.contains("seed") || !e.contains("score")) {
      fail(ErrorKind::Schema, "score entries need 'seed' and 'score'");
    }
    const double s = e.at("score").get<double>();
    if (!std::isfinite(s)) fail(ErrorKind::Schema, "non-finite score");
    if (!t.scores.emplace(e.at("seed").get<std::uint64_t>(), s).second) {
      fail(ErrorKind::Schema, "duplicate seed in score table");
    }
  }
  return t;
}

}  // namespace abss
