#pragma once

// Flat `key = value` text files: one entry per line, `#` starts a comment,
// surrounding whitespace is ignored. Lists are comma-separated values.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace hbaf::kv {

struct Entry {
  std::string key;
  std::string value;
  int line = 0;
};

/// Throws ConfigError on a line without '=' or with an empty key, and on duplicate keys.
std::vector<Entry> parse(std::string_view text, std::string_view source);
std::vector<Entry> read_file(const std::filesystem::path& path);

std::vector<std::string> split_list(std::string_view value);
std::string join_list(const std::vector<std::string>& items);
std::string trim(std::string_view s);

long long to_int(const Entry& e);
double to_double(const Entry& e);
bool to_bool(const Entry& e);

}  // namespace hbaf::kv
