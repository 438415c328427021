#include "abss/manifest.hpp"

#include <cmath>
#include <sstream>

#include "abss/error.hpp"
#include "abss/json_file.hpp"

namespace abss {
namespace {

using nlohmann::json;

const json& require(const json& obj, const char* field) {
  auto it = obj.find(field);
  if (it == obj.end()) fail(ErrorKind::Schema, std::string("missing field '") + field + "'");
  return *it;
}

template <typename T>
T require_number(const json& obj, const char* field) {
  const json& v = require(obj, field);
  if (!v.is_number_integer()) {
    fail(ErrorKind::Schema, std::string("field '") + field + "' must be an integer");
  }
  if constexpr (std::is_unsigned_v<T>) {
    if (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0) {
      fail(ErrorKind::Schema, std::string("field '") + field + "' must be non-negative");
    }
  }
  return v.get<T>();
}

std::string require_string(const json& obj, const char* field) {
  const json& v = require(obj, field);
  if (!v.is_string()) fail(ErrorKind::Schema, std::string("field '") + field + "' must be a string");
  return v.get<std::string>();
}

template <typename T>
std::optional<T> optional_number(const json& obj, const char* field) {
  auto it = obj.find(field);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_number_integer()) {
    fail(ErrorKind::Schema, std::string("field '") + field + "' must be an integer or null");
  }
  if (!it->is_number_unsigned() && it->get<std::int64_t>() < 0) {
    fail(ErrorKind::Schema, std::string("field '") + field + "' must be non-negative");
  }
  return it->get<T>();
}

std::filesystem::path resolve(const std::filesystem::path& manifest,
                              const std::string& tensor_path) {
  std::filesystem::path p(tensor_path);
  return p.is_absolute() ? p : manifest.parent_path() / p;
}

const json& records_array(const json& doc) {
  if (!doc.is_object()) fail(ErrorKind::Schema, "manifest must be a JSON object");
  const json& records = require(doc, "records");
  if (!records.is_array()) fail(ErrorKind::Schema, "field 'records' must be an array");
  return records;
}

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::ostringstream s;
  s << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) s << (i ? ", " : "") << shape[i];
  s << ')';
  return s.str();
}

}  // namespace

std::string_view to_string(ModelFamily family) {
  return family == ModelFamily::Unet ? "unet" : "dit";
}

std::string_view to_string(TensorKind kind) {
  switch (kind) {
    case TensorKind::StackedQn: return "stacked_qn";
    case TensorKind::AggregatedHwn: return "aggregated_hwn";
    case TensorKind::DitJoint: return "dit_joint";
  }
  return "?";
}

ModelFamily parse_model_family(std::string_view text) {
  if (text == "unet") return ModelFamily::Unet;
  if (text == "dit") return ModelFamily::Dit;
  fail(ErrorKind::Schema, "unknown model_family '" + std::string(text) + "'");
}

TensorKind parse_tensor_kind(std::string_view text) {
  if (text == "stacked_qn") return TensorKind::StackedQn;
  if (text == "aggregated_hwn") return TensorKind::AggregatedHwn;
  if (text == "dit_joint") return TensorKind::DitJoint;
  fail(ErrorKind::Schema, "unknown tensor_kind '" + std::string(text) + "'");
}

std::string SeedRecord::label() const {
  return "prompt '" + prompt_id + "' seed " + std::to_string(seed) + " (" + tensor_path + ")";
}

void check_record_metadata(const SeedRecord& r) {
  auto bad = [&](const std::string& why) { fail(ErrorKind::Consistency, r.label() + ": " + why); };
  if (r.total_steps < 1) bad("total_steps must be >= 1");
  if (r.timestep_index < 1 || r.timestep_index > r.total_steps) {
    bad("timestep_index " + std::to_string(r.timestep_index) + " outside [1, " +
        std::to_string(r.total_steps) + "]");
  }
  if (r.token_count < 1) bad("token_count must be >= 1");
  const bool dit_kind = r.tensor_kind == TensorKind::DitJoint;
  if ((r.model_family == ModelFamily::Dit) != dit_kind) {
    bad("tensor_kind " + std::string(to_string(r.tensor_kind)) +
        " is incompatible with model_family " + std::string(to_string(r.model_family)));
  }
  if (dit_kind) {
    if (!r.image_token_count || *r.image_token_count < 1) bad("dit records need image_token_count >= 1");
  } else {
    if (!r.spatial || r.spatial->h < 1 || r.spatial->w < 1) bad("unet records need spatial [h, w] with h, w >= 1");
  }
}

void check_record_tensor(const SeedRecord& r, const AttnTensor& t) {
  auto bad = [&](const std::string& why) {
    fail(ErrorKind::Consistency, r.label() + ": " + why + "; tensor shape is " + shape_string(t.shape));
  };
  const std::size_t n = r.token_count;
  switch (r.tensor_kind) {
    case TensorKind::StackedQn:
      if (t.ndim() != 3 || t.dim(1) != r.spatial->area() || t.dim(2) != n) {
        bad("declared stacked (m, " + std::to_string(r.spatial->area()) + ", " + std::to_string(n) + ")");
      }
      break;
    case TensorKind::AggregatedHwn:
      if (t.ndim() != 3 || t.dim(0) != r.spatial->h || t.dim(1) != r.spatial->w || t.dim(2) != n) {
        bad("declared aggregated " + shape_string({r.spatial->h, r.spatial->w, n}));
      }
      break;
    case TensorKind::DitJoint: {
      const std::size_t side = *r.image_token_count + n;
      if (t.ndim() != 2 || t.dim(0) != side || t.dim(1) != side) {
        bad("declared joint " + shape_string({side, side}));
      }
      for (std::size_t row = 0; row < side; ++row) {
        double sum = 0.0;
        for (std::size_t c = 0; c < side; ++c) sum += t.data[row * side + c];
        if (std::abs(sum - 1.0) > kJointRowSumTolerance) {
          std::ostringstream msg;
          msg.precision(6);
          msg << "row " << row << " sums to " << sum << " (expected 1 within "
              << kJointRowSumTolerance << ")";
          fail(ErrorKind::Consistency, r.label() + ": " + msg.str());
        }
      }
      break;
    }
  }
}

SeedRecord record_from_json(const json& j) {
  if (!j.is_object()) fail(ErrorKind::Schema, "record must be a JSON object");
  SeedRecord r;
  r.prompt_id = require_string(j, "prompt_id");
  r.prompt_text = require_string(j, "prompt_text");
  r.seed = require_number<std::uint64_t>(j, "seed");
  r.timestep_index = require_number<int>(j, "timestep_index");
  r.total_steps = require_number<int>(j, "total_steps");
  r.model_family = parse_model_family(require_string(j, "model_family"));
  r.tensor_kind = parse_tensor_kind(require_string(j, "tensor_kind"));
  if (auto it = j.find("spatial"); it != j.end() && !it->is_null()) {
    if (!it->is_array() || it->size() != 2 || !(*it)[0].is_number_unsigned() ||
        !(*it)[1].is_number_unsigned()) {
      fail(ErrorKind::Schema, "field 'spatial' must be [h, w] or null");
    }
    r.spatial = Spatial{(*it)[0].get<std::size_t>(), (*it)[1].get<std::size_t>()};
  }
  r.token_count = require_number<std::size_t>(j, "token_count");
  r.image_token_count = optional_number<std::size_t>(j, "image_token_count");
  r.hooked_layer = optional_number<int>(j, "hooked_layer");
  r.tensor_path = require_string(j, "tensor_path");
  return r;
}

json record_to_json(const SeedRecord& r) {
  json j;
  j["prompt_id"] = r.prompt_id;
  j["prompt_text"] = r.prompt_text;
  j["seed"] = r.seed;
  j["timestep_index"] = r.timestep_index;
  j["total_steps"] = r.total_steps;
  j["model_family"] = to_string(r.model_family);
  j["tensor_kind"] = to_string(r.tensor_kind);
  j["spatial"] = r.spatial ? json::array({r.spatial->h, r.spatial->w}) : json(nullptr);
  j["token_count"] = r.token_count;
  j["image_token_count"] = r.image_token_count ? json(*r.image_token_count) : json(nullptr);
  j["hooked_layer"] = r.hooked_layer ? json(*r.hooked_layer) : json(nullptr);
  j["tensor_path"] = r.tensor_path;
  return j;
}

std::vector<SeedRecord> load_manifest(const std::filesystem::path& path) {
  const json doc = read_json_file(path);
  std::vector<SeedRecord> out;
  std::size_t index = 0;
  for (const json& item : records_array(doc)) {
    SeedRecord r;
    try {
      r = record_from_json(item);
    } catch (const Error& e) {
      throw Error(e.kind(), std::string(e.what()) + " (record " + std::to_string(index) + ")");
    }
    check_record_metadata(r);
    auto tensor = std::make_shared<AttnTensor>(read_tensor(resolve(path, r.tensor_path)));
    check_record_tensor(r, *tensor);
    r.tensor = std::move(tensor);
    out.push_back(std::move(r));
    ++index;
  }
  return out;
}

std::vector<SeedRecord> load_manifest_lenient(const std::filesystem::path& path,
                                              std::vector<std::string>* problems) {
  const json doc = read_json_file(path);
  std::vector<SeedRecord> out;
  for (const json& item : records_array(doc)) {
    SeedRecord r = record_from_json(item);
    check_record_metadata(r);
    try {
      auto tensor = std::make_shared<AttnTensor>(read_tensor(resolve(path, r.tensor_path)));
      check_record_tensor(r, *tensor);
      r.tensor = std::move(tensor);
    } catch (const Error& e) {
      if (problems) problems->push_back(r.label() + ": " + e.what());
    }
    out.push_back(std::move(r));
  }
  return out;
}

void write_manifest(const std::vector<SeedRecord>& records,
                    const std::filesystem::path& path) {
  json arr = json::array();
  for (const auto& r : records) arr.push_back(record_to_json(r));
  write_json_file(path, json{{"records", arr}});
}

ManifestDiagnostics validate_manifest(const std::filesystem::path& path) {
  ManifestDiagnostics diag;
  json doc;
  try {
    doc = read_json_file(path);
    records_array(doc);
  } catch (const std::exception& e) {
    diag.problems.push_back(path.string() + ": " + e.what());
    return diag;
  }
  std::size_t index = 0;
  for (const json& item : doc["records"]) {
    ++diag.records_checked;
    const std::string where = "record " + std::to_string(index++);
    SeedRecord r;
    try {
      r = record_from_json(item);
      check_record_metadata(r);
    } catch (const std::exception& e) {
      diag.problems.push_back(where + ": " + e.what());
      continue;
    }
    try {
      const AttnTensor t = read_tensor(resolve(path, r.tensor_path));
      check_record_tensor(r, t);
    } catch (const std::exception& e) {
      diag.problems.push_back(where + " " + r.label() + ": " + e.what());
    }
  }
  return diag;
}

}  // namespace abss
