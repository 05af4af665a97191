#include "hbaf/kv_file.hpp"

#include "hbaf/errors.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

namespace hbaf::kv {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<Entry> parse(std::string_view text, std::string_view source) {
  std::vector<Entry> out;
  std::set<std::string> seen;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto end = text.find('\n', pos);
    std::string_view line = text.substr(pos, end == std::string_view::npos ? end : end - pos);
    ++line_no;
    pos = end == std::string_view::npos ? text.size() + 1 : end + 1;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    const auto eq = stripped.find('=');
    const std::string where = std::string(source) + ":" + std::to_string(line_no);
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
    Entry e{trim(std::string_view(stripped).substr(0, eq)),
            trim(std::string_view(stripped).substr(eq + 1)), line_no};
    if (e.key.empty()) throw ConfigError(where + ": empty key");
    if (!seen.insert(e.key).second) throw ConfigError(where + ": duplicate key '" + e.key + "'");
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<Entry> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

std::vector<std::string> split_list(std::string_view value) {
  std::vector<std::string> out;
  if (trim(value).empty()) return out;
  std::size_t pos = 0;
  while (true) {
    const auto comma = value.find(',', pos);
    out.push_back(trim(value.substr(pos, comma == std::string_view::npos ? comma : comma - pos)));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

std::string join_list(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i > 0) out += ",";
    out += items[i];
  }
  return out;
}

namespace {

[[noreturn]] void bad_value(const Entry& e, const char* kind) {
  throw ConfigError("line " + std::to_string(e.line) + ": '" + e.key + "' expects " + kind +
                    ", got '" + e.value + "'");
}

}  // namespace

long long to_int(const Entry& e) {
  long long v = 0;
  const char* first = e.value.data();
  const char* last = first + e.value.size();
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) bad_value(e, "an integer");
  return v;
}

double to_double(const Entry& e) {
  try {
    std::size_t used = 0;
    const double v = std::stod(e.value, &used);
    if (used != e.value.size()) bad_value(e, "a number");
    return v;
  } catch (const std::logic_error&) {
    bad_value(e, "a number");
  }
}

bool to_bool(const Entry& e) {
  if (e.value == "true" || e.value == "1" || e.value == "yes") return true;
  if (e.value == "false" || e.value == "0" || e.value == "no") return false;
  bad_value(e, "a boolean");
}

}  // namespace hbaf::kv
