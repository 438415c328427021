#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "abss/tensor.hpp"

namespace abss {

enum class ModelFamily { Unet, Dit };
enum class TensorKind { StackedQn, AggregatedHwn, DitJoint };

std::string_view to_string(ModelFamily family);
std::string_view to_string(TensorKind kind);
ModelFamily parse_model_family(std::string_view text);
TensorKind parse_tensor_kind(std::string_view text);

struct Spatial {
  std::size_t h = 0;
  std::size_t w = 0;

  std::size_t area() const noexcept { return h * w; }
  friend bool operator==(const Spatial&, const Spatial&) = default;
};

/// Max |row sum - 1| accepted for a dit_joint matrix.
inline constexpr double kJointRowSumTolerance = 1e-4;

/// One seed's capture: manifest metadata plus the (shared, immutable) tensor.
struct SeedRecord {
  std::string prompt_id;
  std::string prompt_text;
  std::uint64_t seed = 0;
  int timestep_index = 1;
  int total_steps = 1;
  ModelFamily model_family = ModelFamily::Unet;
  TensorKind tensor_kind = TensorKind::StackedQn;
  std::optional<Spatial> spatial;
  std::size_t token_count = 0;
  std::optional<std::size_t> image_token_count;
  std::optional<int> hooked_layer;
  std::string tensor_path;

  std::shared_ptr<const AttnTensor> tensor;

  /// "prompt '<id>' seed <s> (<tensor_path>)", used in diagnostics.
  std::string label() const;
};

/// Checks the metadata-only invariants (step range, family/kind coherence,
/// required optional fields). Throws Error(Consistency).
void check_record_metadata(const SeedRecord& record);

/// Checks that `tensor` matches the shapes the record declares, including
/// dit_joint row sums. Throws Error(Consistency) naming the record.
void check_record_tensor(const SeedRecord& record, const AttnTensor& tensor);

SeedRecord record_from_json(const nlohmann::json& j);
nlohmann::json record_to_json(const SeedRecord& record);

/// Parses `path` and loads each record's tensor (resolved relative to the
/// manifest's directory). An empty `records` array yields an empty list.
std::vector<SeedRecord> load_manifest(const std::filesystem::path& path);

/// Like load_manifest but leaves `tensor` null for records whose tensor
/// cannot be read, instead of throwing. Used by sweeps that must keep going.
std::vector<SeedRecord> load_manifest_lenient(const std::filesystem::path& path,
                                              std::vector<std::string>* problems);

void write_manifest(const std::vector<SeedRecord>& records,
                    const std::filesystem::path& path);

struct ManifestDiagnostics {
  std::size_t records_checked = 0;
  std::vector<std::string> problems;

  bool ok() const noexcept { return problems.empty(); }
};

/// Checks every record against its tensor file. Never throws: every failure
/// (including an unparseable manifest) becomes one diagnostic line.
ManifestDiagnostics validate_manifest(const std::filesystem::path& path);

}  // namespace abss
