#pragma once

#include <filesystem>
#include <map>
#include <string>

namespace mscib {

/// Ordered `key = value` pairs. `#` starts a comment; blank lines are ignored.
using KeyValues = std::map<std::string, std::string>;

KeyValues parse_key_values(const std::string& text, const std::string& source = "<string>");
KeyValues read_key_values(const std::filesystem::path& path);
std::string format_key_values(const KeyValues& kv);

}  // namespace mscib
