// abss: score, rank and evaluate diffusion seeds from early attention captures.

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "abss/annotation.hpp"
#include "abss/error.hpp"
#include "abss/evaluation.hpp"
#include "abss/json_file.hpp"
#include "abss/manifest.hpp"
#include "abss/scoring.hpp"
#include "abss/selection.hpp"
#include "abss/stats.hpp"
#include "abss/synth.hpp"

namespace {

using nlohmann::json;
using namespace abss;

constexpr int kExitOk = 0;
constexpr int kExitFailed = 1;  // validate: diagnostics found
constexpr int kExitUsage = 2;
constexpr int kExitInternal = 3;

enum class Format { Json, Text, Csv };

struct Common {
  std::string out;
  std::string format = "json";
  int threads = -1;

  Format fmt() const {
    if (format == "text") return Format::Text;
    if (format == "csv") return Format::Csv;
    return Format::Json;
  }
  unsigned thread_count() const {
    if (threads >= 0) return static_cast<unsigned>(threads);
    if (const char* env = std::getenv("ABSS_THREADS")) {
      try {
        return static_cast<unsigned>(std::stoul(env));
      } catch (const std::exception&) {
        fail(ErrorKind::Usage, std::string("ABSS_THREADS is not a number: ") + env);
      }
    }
    return 0;
  }
};

void emit(const Common& c, const std::string& text) {
  if (c.out.empty()) {
    std::cout << text;
  } else {
    write_file_atomic(c.out, text);
  }
}

void emit_json(const Common& c, const json& doc) { emit(c, doc.dump(2) + "\n"); }

std::string fixed(double v, int precision = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(precision) << v;
  return s.str();
}

std::map<std::string, std::string> parse_kv_list(const std::string& text) {
  std::map<std::string, std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) fail(ErrorKind::Usage, "expected key=value, got '" + item + "'");
    out[item.substr(0, eq)] = item.substr(eq + 1);
  }
  return out;
}

double to_number(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    fail(ErrorKind::Usage, "value for '" + key + "' is not a number: '" + value + "'");
  }
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(static_cast<std::uint64_t>(to_number("seed", item)));
  }
  return out;
}

std::vector<double> load_samples(const std::string& path) {
  const json doc = read_json_file(path);
  const json& arr = doc.is_object() && doc.contains("values") ? doc.at("values") : doc;
  if (!arr.is_array()) fail(ErrorKind::Schema, path + ": expected an array of numbers or {\"values\": [...]}");
  std::vector<double> out;
  for (const json& v : arr) {
    if (!v.is_number()) fail(ErrorKind::Schema, path + ": non-numeric sample");
    out.push_back(v.get<double>());
  }
  return out;
}

std::vector<RankingResult> load_rankings(const std::string& path) {
  const json doc = read_json_file(path);
  std::vector<RankingResult> out;
  if (doc.is_object() && doc.contains("rankings")) {
    for (const json& r : doc.at("rankings")) out.push_back(ranking_from_json(r));
  } else {
    out.push_back(ranking_from_json(doc));
  }
  return out;
}

// ---------------------------------------------------------------- score

struct ScoreArgs {
  std::string manifest, annotations, category = "core";
  ScoringConfig config;
};

int cmd_score(const ScoreArgs& a, const Common& c) {
  a.config.validate();
  const TokenCategory category = parse_token_category(a.category);
  const auto records = load_manifest(a.manifest);
  const AnnotationSet annotations = load_annotations(a.annotations);
  json tables = json::array();
  for (const auto& [key, pool] : group_pools(records)) {
    if (!annotations.contains(key.first)) {
      fail(ErrorKind::Usage, "no annotation for prompt '" + key.first + "'");
    }
    tables.push_back(score_table_to_json(score_pool(pool, annotations, category, a.config, c.thread_count())));
  }
  emit_json(c, json{{"config", config_to_json(a.config)},
                    {"token_category", to_string(category)},
                    {"tables", tables}});
  return kExitOk;
}

// ---------------------------------------------------------------- rank

struct RankArgs {
  std::string scores, nfe;
  int k = 3;
};

std::optional<NfeReport> parse_nfe_request(const std::string& text, std::size_t pool, std::size_t keep) {
  if (text.empty()) return std::nullopt;
  const auto kv = parse_kv_list(text);
  auto get = [&](const char* key) -> std::optional<double> {
    auto it = kv.find(key);
    return it == kv.end() ? std::nullopt : std::optional(to_number(key, it->second));
  };
  for (const auto& [key, v] : kv) {
    static const std::set<std::string> known{"N", "K", "t", "T", "family", "l", "l_star", "L"};
    if (!known.contains(key)) fail(ErrorKind::Usage, "unknown --nfe key '" + key + "'");
  }
  const auto t = get("t");
  const auto total = get("T");
  if (!t || !total) fail(ErrorKind::Usage, "--nfe needs t and T");
  const ModelFamily family = kv.contains("family") ? parse_model_family(kv.at("family")) : ModelFamily::Unet;
  const std::size_t n = static_cast<std::size_t>(get("N").value_or(static_cast<double>(pool)));
  const std::size_t k = static_cast<std::size_t>(get("K").value_or(static_cast<double>(keep)));
  std::optional<int> l_star, layers;
  if (auto l = get("l_star") ? get("l_star") : get("l")) l_star = static_cast<int>(*l);
  if (auto l = get("L")) layers = static_cast<int>(*l);
  return make_nfe_report(n, k, static_cast<int>(*t), static_cast<int>(*total), family, l_star, layers);
}

int cmd_rank(const RankArgs& a, const Common& c) {
  if (a.k < 1) fail(ErrorKind::Usage, "--k must be >= 1");
  const json doc = read_json_file(a.scores);
  std::vector<ScoreTable> tables;
  if (doc.is_object() && doc.contains("tables")) {
    for (const json& t : doc.at("tables")) tables.push_back(score_table_from_json(t));
  } else if (doc.is_object() && doc.contains("scores")) {
    tables.push_back(score_table_from_json(doc));
  } else {
    fail(ErrorKind::Schema, a.scores + ": not a scores file");
  }
  if (tables.empty()) fail(ErrorKind::Usage, a.scores + " contains no score tables");

  json rankings = json::array();
  std::string text;
  for (const ScoreTable& table : tables) {
    const RankingResult r = rank(table, static_cast<std::size_t>(a.k));
    for (const auto& w : r.warnings) std::cerr << "warning: " << table.prompt_id << ": " << w << "\n";
    const auto nfe = parse_nfe_request(a.nfe, table.scores.size(), std::min<std::size_t>(a.k, table.scores.size()));
    rankings.push_back(ranking_to_json(r, table.config, nfe));

    std::ostringstream s;
    s << "prompt " << table.prompt_id << " (step " << table.timestep_index << ", K=" << r.k << ")\n";
    s << "rank  seed                  score       selected\n";
    for (std::size_t i = 0; i < r.ordering.size(); ++i) {
      s << std::left << std::setw(6) << i + 1 << std::setw(22) << r.ordering[i].seed
        << std::setw(12) << fixed(r.ordering[i].score, 6) << (i < r.selected.size() ? "*" : "") << "\n";
    }
    if (nfe) s << "NFE per image: " << fixed(nfe->nfe_per_image, 2) << "\n";
    text += s.str();
  }
  if (c.fmt() == Format::Text) {
    emit(c, text);
  } else {
    emit_json(c, rankings.size() == 1 ? rankings.front() : json{{"rankings", rankings}});
  }
  return kExitOk;
}

// ---------------------------------------------------------------- nfe

struct NfeArgs {
  std::string family = "unet", baseline, params;
  int pool = 10, keep = 3, t = 10, total = 50, l_star = 0, layers = 0;
};

int cmd_nfe(const NfeArgs& a, const Common& c) {
  json doc;
  std::string label, flags;
  double value = 0.0;
  if (!a.baseline.empty()) {
    const BaselineMethod m = parse_baseline_method(a.baseline);
    NfeParams params = default_baseline_params(m);
    for (const auto& [k, v] : parse_kv_list(a.params)) params[k] = to_number(k, v);
    const BaselineNfe b = nfe_baseline(m, params);
    doc = json{{"method", to_string(m)}, {"nfe", b.nfe}, {"flags", b.flags}, {"notes", b.notes},
               {"params", json(params)}};
    label = std::string(to_string(m));
    flags = b.flags;
    value = b.nfe;
  } else {
    if (a.pool < 1 || a.keep < 1) fail(ErrorKind::Usage, "--N and --K must be >= 1");
    const ModelFamily family = parse_model_family(a.family);
    std::optional<int> l_star, layers;
    if (family == ModelFamily::Dit) {
      l_star = a.l_star;
      layers = a.layers;
    }
    const NfeReport r = make_nfe_report(static_cast<std::size_t>(a.pool), static_cast<std::size_t>(a.keep),
                                        a.t, a.total, family, l_star, layers);
    doc = nfe_report_to_json(r);
    label = "abss-" + std::string(to_string(family));
    value = r.nfe_per_image;
  }
  switch (c.fmt()) {
    case Format::Json: emit_json(c, doc); break;
    case Format::Text: emit(c, "Method  NFE\n" + label + "  " + fixed(value, 1) + flags + "\n"); break;
    case Format::Csv: emit(c, "method,nfe,flags\n" + label + "," + fixed(value, 4) + "," + flags + "\n"); break;
  }
  return kExitOk;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string ranking, quality, predicted, truth, a, b, manifest, annotations, gain = "linear",
      category = "core";
  int k = 3;
  double fraction = 0.5;
  std::uint64_t rng = 0;
  ScoringConfig config;
};

const QualityTable& quality_for(const QualitySet& q, const std::string& prompt) {
  if (q.size() == 1 && (prompt.empty() || q.begin()->first == prompt)) return q.begin()->second;
  auto it = q.find(prompt);
  if (it == q.end()) fail(ErrorKind::Usage, "no quality table for prompt '" + prompt + "'");
  return it->second;
}

int cmd_eval_overlap(const EvalArgs& a, const Common& c) {
  json rows = json::array();
  std::string csv = "prompt_id,k,overlap\n", text = "Prompt  K  Overlap\n";
  auto add = [&](const std::string& prompt, std::size_t k, double v) {
    rows.push_back(json{{"prompt_id", prompt}, {"k", k}, {"overlap", v}});
    csv += prompt + "," + std::to_string(k) + "," + fixed(v) + "\n";
    text += prompt + "  " + std::to_string(k) + "  " + fixed(v) + "\n";
  };
  if (!a.predicted.empty() || !a.truth.empty()) {
    const auto p = parse_seed_list(a.predicted), t = parse_seed_list(a.truth);
    add("", p.size(), overlap_rate(p, t));
  } else {
    if (a.ranking.empty() || a.quality.empty()) fail(ErrorKind::Usage, "overlap needs --ranking and --quality");
    if (a.k < 1) fail(ErrorKind::Usage, "--k must be >= 1");
    const QualitySet q = load_quality(a.quality);
    for (const RankingResult& r : load_rankings(a.ranking)) {
      const auto m = compare_to_quality(r, quality_for(q, r.prompt_id), static_cast<std::size_t>(a.k));
      add(r.prompt_id, std::min<std::size_t>(a.k, r.ordering.size()), m.overlap);
    }
  }
  c.fmt() == Format::Json ? emit_json(c, json{{"overlap", rows}}) : emit(c, c.fmt() == Format::Csv ? csv : text);
  return kExitOk;
}

int cmd_eval_ndcg(const EvalArgs& a, const Common& c) {
  if (a.ranking.empty() || a.quality.empty()) fail(ErrorKind::Usage, "ndcg needs --ranking and --quality");
  const NdcgGain gain = a.gain == "exp" || a.gain == "exponential" ? NdcgGain::Exponential : NdcgGain::Linear;
  if (gain == NdcgGain::Linear && a.gain != "linear") fail(ErrorKind::Usage, "--gain must be linear or exp");
  const QualitySet q = load_quality(a.quality);
  json rows = json::array();
  std::string csv = "prompt_id,ndcg,relevance_shift\n", text = "Prompt  NDCG\n";
  for (const RankingResult& r : load_rankings(a.ranking)) {
    const NdcgResult n = ndcg(r.order(), quality_for(q, r.prompt_id), gain);
    rows.push_back(json{{"prompt_id", r.prompt_id}, {"ndcg", n.value}, {"relevance_shift", n.relevance_shift},
                        {"gain", gain == NdcgGain::Linear ? "linear" : "exponential"}});
    csv += r.prompt_id + "," + fixed(n.value) + "," + fixed(n.relevance_shift) + "\n";
    text += r.prompt_id + "  " + fixed(n.value) + "\n";
  }
  c.fmt() == Format::Json ? emit_json(c, json{{"ndcg", rows}}) : emit(c, c.fmt() == Format::Csv ? csv : text);
  return kExitOk;
}

int cmd_eval_ttest(const EvalArgs& a, const Common& c) {
  if (a.a.empty() || a.b.empty()) fail(ErrorKind::Usage, "ttest needs --a and --b");
  const auto xs = load_samples(a.a), ys = load_samples(a.b);
  const TTestResult r = paired_t_test(xs, ys);
  const auto shown = format_p_value(r.p_two_sided);
  json doc{{"t", r.t_statistic}, {"df", r.df}, {"p", r.p_two_sided}, {"n", xs.size()},
           {"p_report", shown ? json(*shown) : json(nullptr)}};
  switch (c.fmt()) {
    case Format::Json: emit_json(c, doc); break;
    case Format::Text:
      emit(c, "t        df  p\n" + fixed(r.t_statistic) + "  " + std::to_string(r.df) + "   " +
                  shown.value_or("") + "\n");
      break;
    case Format::Csv:
      emit(c, "t,df,p,p_report\n" + fixed(r.t_statistic, 6) + "," + std::to_string(r.df) + "," +
                  fixed(r.p_two_sided, 6) + "," + shown.value_or("") + "\n");
      break;
  }
  return kExitOk;
}

int cmd_eval_sweep(const EvalArgs& a, const Common& c) {
  std::vector<std::string> problems;
  const auto records = load_manifest_lenient(a.manifest, &problems);
  for (const auto& p : problems) std::cerr << "warning: " << p << "\n";
  const auto rows = timestep_sweep(records, load_annotations(a.annotations), a.config, load_quality(a.quality),
                                   static_cast<std::size_t>(std::max(a.k, 1)),
                                   parse_token_category(a.category), c.thread_count());
  json out = json::array();
  std::string csv = "timestep,ndcg,overlap,prompts,errors\n", text = "Step  NDCG    Overlap\n";
  for (const auto& r : rows) {
    out.push_back(json{{"timestep", r.timestep_index},
                       {"ndcg", r.ndcg ? json(*r.ndcg) : json(nullptr)},
                       {"overlap", r.overlap ? json(*r.overlap) : json(nullptr)},
                       {"prompts_scored", r.prompts_scored},
                       {"errors", r.errors}});
    csv += std::to_string(r.timestep_index) + "," + (r.ndcg ? fixed(*r.ndcg) : "") + "," +
           (r.overlap ? fixed(*r.overlap) : "") + "," + std::to_string(r.prompts_scored) + "," +
           std::to_string(r.errors.size()) + "\n";
    text += std::to_string(r.timestep_index) + "  " + (r.ndcg ? fixed(*r.ndcg) : "  -   ") + "  " +
            (r.overlap ? fixed(*r.overlap) : "  -") + (r.errors.empty() ? "" : "  (errors)") + "\n";
  }
  c.fmt() == Format::Json ? emit_json(c, json{{"sweep", out}}) : emit(c, c.fmt() == Format::Csv ? csv : text);
  return kExitOk;
}

int cmd_eval_ablation(const EvalArgs& a, const Common& c) {
  const auto records = load_manifest(a.manifest);
  const auto report = token_ablation(records, load_annotations(a.annotations), a.config, load_quality(a.quality),
                                     static_cast<std::size_t>(std::max(a.k, 1)), kAllCategories, c.thread_count());
  json rows = json::array(), cells = json::array();
  std::string csv = "category,ndcg,overlap,mean_selected_quality,prompts,absent\n";
  std::string text = "Method          NDCG    Overlap  MeanQ\n";
  for (const auto& r : report.rows) {
    json row{{"category", to_string(r.category)}, {"prompts_scored", r.prompts_scored},
             {"prompts_absent", r.prompts_absent}};
    if (r.mean) {
      row["ndcg"] = r.mean->ndcg;
      row["overlap"] = r.mean->overlap;
      row["mean_selected_quality"] = r.mean->mean_selected_quality;
    }
    rows.push_back(row);
    const std::string name = "ABSS_" + std::string(to_string(r.category));
    csv += std::string(to_string(r.category)) + "," + (r.mean ? fixed(r.mean->ndcg) : "") + "," +
           (r.mean ? fixed(r.mean->overlap) : "") + "," + (r.mean ? fixed(r.mean->mean_selected_quality) : "") +
           "," + std::to_string(r.prompts_scored) + "," + std::to_string(r.prompts_absent) + "\n";
    text += name + std::string(name.size() < 16 ? 16 - name.size() : 1, ' ') +
            (r.mean ? fixed(r.mean->ndcg) + "  " + fixed(r.mean->overlap) + "   " + fixed(r.mean->mean_selected_quality)
                    : "absent") +
            "\n";
  }
  for (const auto& cell : report.cells) {
    json j{{"prompt_id", cell.prompt_id}, {"category", to_string(cell.category)}, {"present", cell.present}};
    if (cell.present) {
      j["ndcg"] = cell.metrics.ndcg;
      j["overlap"] = cell.metrics.overlap;
      j["mean_selected_quality"] = cell.metrics.mean_selected_quality;
    }
    cells.push_back(j);
  }
  c.fmt() == Format::Json ? emit_json(c, json{{"rows", rows}, {"cells", cells}})
                          : emit(c, c.fmt() == Format::Csv ? csv : text);
  return kExitOk;
}

int cmd_eval_corrupt(const EvalArgs& a, const Common& c) {
  if (a.annotations.empty()) fail(ErrorKind::Usage, "corrupt needs --annotations");
  const auto result = corrupt_annotations(load_annotations(a.annotations), a.fraction, a.rng);
  for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
  json arr = json::array();
  for (const auto& [id, ann] : result.annotations) arr.push_back(annotation_to_json(ann));
  emit_json(c, json{{"annotations", arr},
                    {"corruption", {{"fraction", a.fraction}, {"rng", a.rng}, {"corrupted", result.corrupted}}}});
  return kExitOk;
}

// ---------------------------------------------------------------- synth / validate

struct SynthArgs {
  SynthSpec spec;
  std::string family = "unet", core = "2,3", dir;
};

int cmd_synth_pool(SynthArgs a) {
  a.spec.model_family = parse_model_family(a.family);
  a.spec.core.clear();
  for (auto s : parse_seed_list(a.core)) a.spec.core.push_back(static_cast<std::size_t>(s));
  const auto manifest = write_pool(generate_pool(a.spec), a.dir);
  std::cout << manifest.string() << "\n";
  return kExitOk;
}

int cmd_synth_suite(const std::string& dir) {
  for (const auto& m : generate_fixture_suite(dir)) std::cout << m.string() << "\n";
  return kExitOk;
}

int cmd_validate(const std::string& manifest) {
  const ManifestDiagnostics d = validate_manifest(manifest);
  for (const auto& p : d.problems) std::cout << p << "\n";
  if (d.ok()) {
    std::cout << "ok: " << d.records_checked << " records\n";
    return kExitOk;
  }
  std::cout << d.problems.size() << " problem(s) in " << d.records_checked << " records\n";
  return kExitFailed;
}

void add_scoring_flags(CLI::App* cmd, ScoringConfig& cfg) {
  cmd->add_option("--beta", cfg.beta, "softmax temperature")->capture_default_str();
  cmd->add_option("--k", cfg.kernel_radius, "Gaussian kernel radius")->capture_default_str();
  cmd->add_option("--sigma", cfg.sigma, "Gaussian sigma")->capture_default_str();
  cmd->add_flag("--include-special-tokens", cfg.include_special_tokens, "allow BOS/EOS indices");
}

void add_common(CLI::App* cmd, Common& c, bool with_format) {
  cmd->add_option("--out", c.out, "output file (default: stdout)");
  cmd->add_option("--threads", c.threads, "worker threads (0 = auto; default $ABSS_THREADS)");
  if (with_format) {
    cmd->add_option("--format", c.format, "json | text | csv")
        ->check(CLI::IsMember({"json", "text", "csv"}))
        ->capture_default_str();
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Attention-based seed screening for diffusion models"};
  app.require_subcommand(1);
  Common common;

  ScoreArgs score;
  auto* score_cmd = app.add_subcommand("score", "score a seed pool from a manifest");
  score_cmd->add_option("--manifest", score.manifest)->required()->check(CLI::ExistingFile);
  score_cmd->add_option("--annotations", score.annotations)->required()->check(CLI::ExistingFile);
  score_cmd->add_option("--token-category", score.category, "core | adjectives | verbs | prepositions")
      ->capture_default_str();
  add_scoring_flags(score_cmd, score.config);
  add_common(score_cmd, common, false);

  RankArgs rank_args;
  auto* rank_cmd = app.add_subcommand("rank", "rank scored seeds and keep the top K");
  rank_cmd->add_option("--scores", rank_args.scores)->required()->check(CLI::ExistingFile);
  rank_cmd->add_option("--k", rank_args.k, "seeds to keep")->capture_default_str();
  rank_cmd->add_option("--nfe", rank_args.nfe, "pool parameters, e.g. N=10,t=10,T=50,family=unet[,l=12,L=30]");
  add_common(rank_cmd, common, true);

  NfeArgs nfe;
  auto* nfe_cmd = app.add_subcommand("nfe", "coarse NFE per reported image");
  nfe_cmd->add_option("--family", nfe.family, "unet | dit")->capture_default_str();
  nfe_cmd->add_option("--N", nfe.pool, "seed pool size")->capture_default_str();
  nfe_cmd->add_option("--K", nfe.keep, "seeds kept")->capture_default_str();
  nfe_cmd->add_option("--t", nfe.t, "screening step")->capture_default_str();
  nfe_cmd->add_option("--T", nfe.total, "total steps")->capture_default_str();
  nfe_cmd->add_option("--l-star", nfe.l_star, "hooked block (dit)");
  nfe_cmd->add_option("--L", nfe.layers, "total blocks (dit)");
  nfe_cmd->add_option("--baseline", nfe.baseline, "random | golden | ns | initno | ae | nd | npnet | core2");
  nfe_cmd->add_option("--param", nfe.params, "baseline overrides, e.g. validation_prompts=100,seeds=10");
  add_common(nfe_cmd, common, true);

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "evaluation reports");
  eval_cmd->require_subcommand(1);
  auto* overlap_cmd = eval_cmd->add_subcommand("overlap", "top-K overlap rate");
  overlap_cmd->add_option("--ranking", ev.ranking);
  overlap_cmd->add_option("--quality", ev.quality);
  overlap_cmd->add_option("--predicted", ev.predicted, "comma-separated seeds");
  overlap_cmd->add_option("--truth", ev.truth, "comma-separated seeds");
  overlap_cmd->add_option("--k", ev.k)->capture_default_str();
  auto* ndcg_cmd = eval_cmd->add_subcommand("ndcg", "full-list NDCG against quality");
  ndcg_cmd->add_option("--ranking", ev.ranking)->required();
  ndcg_cmd->add_option("--quality", ev.quality)->required();
  ndcg_cmd->add_option("--gain", ev.gain, "linear | exp")->capture_default_str();
  auto* ttest_cmd = eval_cmd->add_subcommand("ttest", "paired t-test");
  ttest_cmd->add_option("--a", ev.a)->required();
  ttest_cmd->add_option("--b", ev.b)->required();
  auto* sweep_cmd = eval_cmd->add_subcommand("sweep", "metrics per screening step");
  auto* ablation_cmd = eval_cmd->add_subcommand("ablation", "metrics per token category");
  for (auto* cmd : {sweep_cmd, ablation_cmd}) {
    cmd->add_option("--manifest", ev.manifest)->required();
    cmd->add_option("--annotations", ev.annotations)->required();
    cmd->add_option("--quality", ev.quality)->required();
    cmd->add_option("--top-k", ev.k, "top-K for overlap")->capture_default_str();
    add_scoring_flags(cmd, ev.config);
  }
  sweep_cmd->add_option("--token-category", ev.category)->capture_default_str();
  auto* corrupt_cmd = eval_cmd->add_subcommand("corrupt", "corrupt core-token annotations");
  corrupt_cmd->add_option("--annotations", ev.annotations)->required();
  corrupt_cmd->add_option("--fraction", ev.fraction)->capture_default_str();
  corrupt_cmd->add_option("--rng", ev.rng)->capture_default_str();
  for (auto* cmd : {overlap_cmd, ndcg_cmd, ttest_cmd, sweep_cmd, ablation_cmd, corrupt_cmd}) {
    add_common(cmd, common, cmd != corrupt_cmd);
  }

  SynthArgs synth;
  std::string suite_dir;
  auto* synth_cmd = app.add_subcommand("synth", "synthetic planted-signal fixtures");
  synth_cmd->require_subcommand(1);
  auto* pool_cmd = synth_cmd->add_subcommand("pool", "one planted pool");
  pool_cmd->add_option("--out", synth.dir)->required();
  pool_cmd->add_option("--prompt-id", synth.spec.prompt_id)->capture_default_str();
  pool_cmd->add_option("--N", synth.spec.pool_size)->capture_default_str();
  pool_cmd->add_option("--height", synth.spec.spatial.h)->capture_default_str();
  pool_cmd->add_option("--width", synth.spec.spatial.w)->capture_default_str();
  pool_cmd->add_option("--n", synth.spec.token_count, "token count")->capture_default_str();
  pool_cmd->add_option("--core", synth.core, "comma-separated core indices")->capture_default_str();
  pool_cmd->add_option("--gap", synth.spec.planted_gap)->capture_default_str();
  pool_cmd->add_option("--noise", synth.spec.noise_scale)->capture_default_str();
  pool_cmd->add_option("--rng", synth.spec.rng_seed)->capture_default_str();
  pool_cmd->add_option("--family", synth.family)->capture_default_str();
  pool_cmd->add_option("--m", synth.spec.stacked_count, "stacked maps (unet)")->capture_default_str();
  pool_cmd->add_option("--M", synth.spec.image_tokens, "image tokens (dit)")->capture_default_str();
  pool_cmd->add_option("--t", synth.spec.timestep_index)->capture_default_str();
  pool_cmd->add_option("--T", synth.spec.total_steps)->capture_default_str();
  auto* suite_cmd = synth_cmd->add_subcommand("suite", "the frozen fixture suite");
  suite_cmd->add_option("--out", suite_dir)->required();

  std::string validate_manifest_path;
  auto* validate_cmd = app.add_subcommand("validate", "check a manifest against its tensors");
  validate_cmd->add_option("--manifest", validate_manifest_path)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*score_cmd) return cmd_score(score, common);
    if (*rank_cmd) return cmd_rank(rank_args, common);
    if (*nfe_cmd) return cmd_nfe(nfe, common);
    if (*overlap_cmd) return cmd_eval_overlap(ev, common);
    if (*ndcg_cmd) return cmd_eval_ndcg(ev, common);
    if (*ttest_cmd) return cmd_eval_ttest(ev, common);
    if (*sweep_cmd) return cmd_eval_sweep(ev, common);
    if (*ablation_cmd) return cmd_eval_ablation(ev, common);
    if (*corrupt_cmd) return cmd_eval_corrupt(ev, common);
    if (*pool_cmd) return cmd_synth_pool(synth);
    if (*suite_cmd) return cmd_synth_suite(suite_dir);
    if (*validate_cmd) return cmd_validate(validate_manifest_path);
  } catch (const abss::Error& e) {
    std::cerr << "abss: " << e.what() << "\n";
    return e.kind() == ErrorKind::Internal ? kExitInternal : kExitUsage;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "abss: malformed input: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "abss: internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitUsage;
}
