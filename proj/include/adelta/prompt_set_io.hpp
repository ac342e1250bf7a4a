#pragma once

// Prompt-set documents: JSON with attribute_name, subject_nouns, prefixes and
// tuples of {neg, neutral, pos} phrases whose subject is marked "[noun]".

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "adelta/prompt.hpp"
#include "json.hpp"

namespace adelta {

ContrastivePromptSet prompt_set_from_json(const nlohmann::json& doc);
nlohmann::json prompt_set_to_json(const ContrastivePromptSet& set);

ContrastivePromptSet load_prompt_set(const std::filesystem::path& path);
void save_prompt_set(const ContrastivePromptSet& set, const std::filesystem::path& path);

// Names of the compiled-in canonical sets (age, width, smile, ...).
std::vector<std::string> builtin_prompt_set_names();
ContrastivePromptSet builtin_prompt_set(std::string_view name);

// A readable file path, or else the name of a built-in set.
ContrastivePromptSet resolve_prompt_set(std::string_view path_or_name);

}  // namespace adelta
