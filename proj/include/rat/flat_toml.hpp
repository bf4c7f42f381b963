#pragma once

#include <filesystem>
#include <string_view>

#include <json.hpp>

namespace rat {

// Reader for the flat TOML subset used by config files: `key = value` lines,
// `#` comments, basic and literal strings, integers, floats, booleans and
// (possibly multi-line) arrays of those. Tables are not supported.
nlohmann::json parse_flat_toml(std::string_view text);

/// Loads a config file as JSON: ".json" is parsed directly, anything else as flat TOML.
nlohmann::json load_config_file(const std::filesystem::path& path);

}  // namespace rat
