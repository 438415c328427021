#pragma once

#include <filesystem>
#include <string_view>

#include <json.hpp>

namespace abss {

/// Parses a JSON document; Io on open failure, Schema on parse failure.
nlohmann::json read_json_file(const std::filesystem::path& path);

/// Writes via a sibling temp file and rename so readers never see a partial file.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

void write_json_file(const std::filesystem::path& path, const nlohmann::json& doc);

}  // namespace abss
