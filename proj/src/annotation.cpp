#include "abss/annotation.hpp"

#include <algorithm>

#include "abss/error.hpp"
#include "abss/json_file.hpp"

namespace abss {
namespace {

using nlohmann::json;

std::vector<std::size_t> index_list(const json& j, const char* field) {
  auto it = j.find(field);
  if (it == j.end()) fail(ErrorKind::Schema, std::string("missing field '") + field + "'");
  if (!it->is_array()) fail(ErrorKind::Schema, std::string("field '") + field + "' must be an array");
  std::vector<std::size_t> out;
  for (const json& v : *it) {
    if (!v.is_number_unsigned()) {
      fail(ErrorKind::Schema, std::string("field '") + field + "' must hold non-negative integers");
    }
    out.push_back(v.get<std::size_t>());
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace

std::string_view to_string(TokenCategory category) {
  switch (category) {
    case TokenCategory::Core: return "core";
    case TokenCategory::Adjectives: return "adjectives";
    case TokenCategory::Verbs: return "verbs";
    case TokenCategory::Prepositions: return "prepositions";
  }
  return "?";
}

TokenCategory parse_token_category(std::string_view text) {
  for (TokenCategory c : kAllCategories) {
    if (to_string(c) == text) return c;
  }
  fail(ErrorKind::Usage, "unknown token category '" + std::string(text) + "'");
}

const std::vector<std::size_t>& TokenAnnotation::tokens(TokenCategory category) const {
  switch (category) {
    case TokenCategory::Core: return core;
    case TokenCategory::Adjectives: return adjectives;
    case TokenCategory::Verbs: return verbs;
    case TokenCategory::Prepositions: return prepositions;
  }
  return core;
}

std::vector<std::size_t>& TokenAnnotation::tokens(TokenCategory category) {
  return const_cast<std::vector<std::size_t>&>(std::as_const(*this).tokens(category));
}

void TokenAnnotation::validate() const {
  if (token_count < 1) fail(ErrorKind::Schema, "prompt '" + prompt_id + "': token_count must be >= 1");
  std::vector<int> owner(token_count, -1);
  for (TokenCategory c : kAllCategories) {
    for (std::size_t idx : tokens(c)) {
      if (idx >= token_count) {
        fail(ErrorKind::Index, "prompt '" + prompt_id + "': " + std::string(to_string(c)) +
                                   " index " + std::to_string(idx) + " outside [0, " +
                                   std::to_string(token_count - 1) + "]");
      }
      if (owner[idx] >= 0) {
        fail(ErrorKind::Schema, "prompt '" + prompt_id + "': index " + std::to_string(idx) +
                                    " appears in both " +
                                    std::string(to_string(kAllCategories[owner[idx]])) +
                                    " and " + std::string(to_string(c)));
      }
      owner[idx] = static_cast<int>(c);
    }
  }
}

TokenAnnotation annotation_from_json(const json& j) {
  if (!j.is_object()) fail(ErrorKind::Schema, "annotation must be a JSON object");
  TokenAnnotation a;
  auto pid = j.find("prompt_id");
  if (pid == j.end() || !pid->is_string()) fail(ErrorKind::Schema, "missing field 'prompt_id'");
  a.prompt_id = pid->get<std::string>();
  auto tc = j.find("token_count");
  if (tc == j.end() || !tc->is_number_unsigned()) {
    fail(ErrorKind::Schema, "prompt '" + a.prompt_id + "': missing field 'token_count'");
  }
  a.token_count = tc->get<std::size_t>();
  a.core = index_list(j, "core_tokens");
  // The category lists other than core are optional in hand-written files.
  for (auto [field, cat] : {std::pair{"adjectives", TokenCategory::Adjectives},
                            std::pair{"verbs", TokenCategory::Verbs},
                            std::pair{"prepositions", TokenCategory::Prepositions}}) {
    if (j.contains(field)) a.tokens(cat) = index_list(j, field);
  }
  a.validate();
  return a;
}

json annotation_to_json(const TokenAnnotation& a) {
  return json{{"prompt_id", a.prompt_id},
              {"token_count", a.token_count},
              {"core_tokens", a.core},
              {"adjectives", a.adjectives},
              {"verbs", a.verbs},
              {"prepositions", a.prepositions}};
}

AnnotationSet load_annotations(const std::filesystem::path& path) {
  const json doc = read_json_file(path);
  const json* items = &doc;
  json wrapped;
  if (doc.is_object() && doc.contains("annotations")) {
    items = &doc["annotations"];
  } else if (doc.is_object()) {
    wrapped = json::array({doc});
    items = &wrapped;
  }
  if (!items->is_array()) fail(ErrorKind::Schema, path.string() + ": expected annotation object(s)");
  AnnotationSet out;
  for (const json& item : *items) {
    TokenAnnotation a = annotation_from_json(item);
    const std::string id = a.prompt_id;
    if (!out.emplace(id, std::move(a)).second) {
      fail(ErrorKind::Schema, path.string() + ": duplicate annotation for prompt '" + id + "'");
    }
  }
  return out;
}

void write_annotations(const AnnotationSet& annotations, const std::filesystem::path& path) {
  json arr = json::array();
  for (const auto& [id, a] : annotations) arr.push_back(annotation_to_json(a));
  write_json_file(path, json{{"annotations", arr}});
}

}  // namespace abss
