#include "adelta/prompt_set_io.hpp"

#include <fstream>
#include <sstream>

namespace adelta {
namespace detail {
const std::vector<std::pair<std::string_view, std::string_view>>& builtin_prompt_set_sources();
}

ContrastivePromptSet prompt_set_from_json(const nlohmann::json& doc) {
  try {
    ContrastivePromptSet set;
    set.attribute_name = doc.at("attribute_name").get<std::string>();
    set.subject_nouns = doc.value("subject_nouns", std::vector<std::string>{});
    set.prefixes = doc.at("prefixes").get<std::vector<std::string>>();
    for (const auto& t : doc.at("tuples")) {
      set.tuples.push_back({MarkedPhrase::parse(t.at("neg").get<std::string>()),
                            MarkedPhrase::parse(t.at("neutral").get<std::string>()),
                            MarkedPhrase::parse(t.at("pos").get<std::string>())});
    }
    set.validate();
    return set;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("malformed prompt set: ") + e.what());
  }
}

nlohmann::json prompt_set_to_json(const ContrastivePromptSet& set) {
  nlohmann::json tuples = nlohmann::json::array();
  for (const auto& t : set.tuples)
    tuples.push_back({{"neg", t.negative.authored()},
                      {"neutral", t.neutral.authored()},
                      {"pos", t.positive.authored()}});
  return {{"attribute_name", set.attribute_name},
          {"subject_nouns", set.subject_nouns},
          {"prefixes", set.prefixes},
          {"tuples", tuples}};
}

ContrastivePromptSet load_prompt_set(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open prompt set " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, path.string() + ": " + e.what());
  }
  return prompt_set_from_json(doc);
}

void save_prompt_set(const ContrastivePromptSet& set, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << prompt_set_to_json(set).dump(2) << "\n";
}

std::vector<std::string> builtin_prompt_set_names() {
  std::vector<std::string> names;
  for (const auto& [name, _] : detail::builtin_prompt_set_sources()) names.emplace_back(name);
  return names;
}

ContrastivePromptSet builtin_prompt_set(std::string_view name) {
  for (const auto& [n, src] : detail::builtin_prompt_set_sources())
    if (n == name) return prompt_set_from_json(nlohmann::json::parse(src));
  throw Error(ErrorCode::NotFound, "no built-in prompt set named '" + std::string(name) + "'");
}

ContrastivePromptSet resolve_prompt_set(std::string_view path_or_name) {
  const std::filesystem::path p(path_or_name);
  if (std::filesystem::is_regular_file(p)) return load_prompt_set(p);
  return builtin_prompt_set(path_or_name);
}

}  // namespace adelta
