#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace abss {

enum class TokenCategory { Core, Adjectives, Verbs, Prepositions };

inline constexpr TokenCategory kAllCategories[] = {
    TokenCategory::Core, TokenCategory::Adjectives, TokenCategory::Verbs,
    TokenCategory::Prepositions};

std::string_view to_string(TokenCategory category);
TokenCategory parse_token_category(std::string_view text);

/// Per-prompt token index sets. Index 0 is BOS and token_count-1 is EOS.
/// Sets are kept sorted and duplicate-free.
struct TokenAnnotation {
  std::string prompt_id;
  std::size_t token_count = 0;
  std::vector<std::size_t> core;
  std::vector<std::size_t> adjectives;
  std::vector<std::size_t> verbs;
  std::vector<std::size_t> prepositions;

  const std::vector<std::size_t>& tokens(TokenCategory category) const;
  std::vector<std::size_t>& tokens(TokenCategory category);

  /// Range and pairwise-disjointness checks; throws Error(Index)/Error(Schema).
  void validate() const;

  friend bool operator==(const TokenAnnotation&, const TokenAnnotation&) = default;
};

using AnnotationSet = std::map<std::string, TokenAnnotation>;

TokenAnnotation annotation_from_json(const nlohmann::json& j);
nlohmann::json annotation_to_json(const TokenAnnotation& a);

/// Accepts a single annotation object, an array of them, or
/// {"annotations": [...]}.
AnnotationSet load_annotations(const std::filesystem::path& path);
void write_annotations(const AnnotationSet& annotations,
                       const std::filesystem::path& path);

}  // namespace abss
