#include "config.hpp"

#include <charconv>
#include <sstream>

#include "error.hpp"
#include "util.hpp"

namespace discosyn {

Config Config::load(const std::filesystem::path& file) {
  Config config;
  std::set<std::filesystem::path> stack;
  const auto absolute = std::filesystem::weakly_canonical(std::filesystem::absolute(file));
  if (!std::filesystem::exists(absolute)) fail(ErrorCode::kConfig, "config file not found: " + file.string());
  stack.insert(absolute);
  config.parse_into(read_file(absolute), absolute.parent_path(), stack);
  return config;
}

Config Config::parse(std::string_view text, const std::filesystem::path& base_dir) {
  Config config;
  std::set<std::filesystem::path> stack;
  config.parse_into(text, std::filesystem::absolute(base_dir), stack);
  return config;
}

void Config::parse_into(std::string_view text, const std::filesystem::path& base_dir,
                        std::set<std::filesystem::path>& stack) {
  int line_no = 0;
  for (const auto& raw : split(text, '\n')) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    auto where = [&] { return "config line " + std::to_string(line_no) + ": "; };
    if (line.starts_with("include ") || line.starts_with("include\t")) {
      std::filesystem::path target = trim(line.substr(8));
      if (target.is_relative()) target = base_dir / target;
      target = std::filesystem::weakly_canonical(target);
      if (stack.contains(target)) fail(ErrorCode::kConfig, where() + "include cycle through " + target.string());
      if (!std::filesystem::exists(target)) fail(ErrorCode::kConfig, where() + "missing include " + target.string());
      stack.insert(target);
      parse_into(read_file(target), target.parent_path(), stack);
      stack.erase(target);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(ErrorCode::kConfig, where() + "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) fail(ErrorCode::kConfig, where() + "empty key");
    for (char c : key) {
      if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '_' || c == '-')) {
        fail(ErrorCode::kConfig, where() + "invalid key '" + key + "'");
      }
    }
    values_[key] = Entry{trim(line.substr(eq + 1)), base_dir};
  }
}

void Config::set(const std::string& key, const std::string& value) {
  values_[key] = Entry{value, std::filesystem::current_path()};
}

const Config::Entry* Config::lookup(const std::string& key) const {
  consumed_.insert(key);
  const auto it = values_.find(key);
  return it == values_.end() ? nullptr : &it->second;
}

void Config::record(const std::string& key, const std::string& value,
                    const std::optional<std::string>& resolved) const {
  snapshot_[key] = value;
  resolved_[key] = resolved.value_or(value);
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  const Entry* entry = lookup(key);
  const std::string value = entry ? entry->value : fallback;
  record(key, value);
  return value;
}

std::optional<std::string> Config::get_optional(const std::string& key) const {
  const Entry* entry = lookup(key);
  if (!entry) return std::nullopt;
  record(key, entry->value);
  return entry->value;
}

long long Config::get_int(const std::string& key, long long fallback) const {
  const Entry* entry = lookup(key);
  if (!entry) {
    record(key, std::to_string(fallback));
    return fallback;
  }
  long long value = 0;
  const auto& text = entry->value;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    fail(ErrorCode::kConfig, "config key " + key + ": expected an integer, got '" + text + "'");
  }
  record(key, text);
  return value;
}

double Config::get_double(const std::string& key, double fallback) const {
  const Entry* entry = lookup(key);
  if (!entry) {
    std::ostringstream out;
    out << fallback;
    record(key, out.str());
    return fallback;
  }
  try {
    std::size_t used = 0;
    const double value = std::stod(entry->value, &used);
    if (used != entry->value.size()) throw std::invalid_argument("trailing characters");
    record(key, entry->value);
    return value;
  } catch (const std::exception&) {
    fail(ErrorCode::kConfig, "config key " + key + ": expected a number, got '" + entry->value + "'");
  }
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  const Entry* entry = lookup(key);
  if (!entry) {
    record(key, fallback ? "true" : "false");
    return fallback;
  }
  const std::string v = to_lower_ascii(entry->value);
  bool value = false;
  if (v == "true" || v == "yes" || v == "1" || v == "on") {
    value = true;
  } else if (v == "false" || v == "no" || v == "0" || v == "off") {
    value = false;
  } else {
    fail(ErrorCode::kConfig, "config key " + key + ": expected a boolean, got '" + entry->value + "'");
  }
  record(key, value ? "true" : "false");
  return value;
}

std::vector<std::string> Config::get_list(const std::string& key, const std::vector<std::string>& fallback) const {
  const Entry* entry = lookup(key);
  std::vector<std::string> items;
  if (!entry) {
    items = fallback;
  } else {
    for (const auto& part : split(entry->value, ',')) {
      std::string item = trim(part);
      if (!item.empty()) items.push_back(std::move(item));
    }
  }
  std::string joined;
  for (const auto& item : items) joined += (joined.empty() ? "" : ", ") + item;
  record(key, joined);
  return items;
}

std::optional<std::filesystem::path> Config::get_path(const std::string& key,
                                                      const std::optional<std::filesystem::path>& fallback) const {
  const Entry* entry = lookup(key);
  std::optional<std::filesystem::path> path;
  if (entry && !entry->value.empty()) {
    path = std::filesystem::path(entry->value);
    if (path->is_relative()) path = entry->base_dir / *path;
  } else if (fallback) {
    path = *fallback;
  }
  if (path) path = path->lexically_normal();
  // as written, so snapshots do not depend on where the run lives
  record(key, entry ? entry->value : (path ? path->string() : ""), path ? path->string() : "");
  return path;
}

std::string Config::snapshot_text() const {
  std::string out;
  for (const auto& [key, value] : snapshot_) out += key + " = " + value + "\n";
  return out;
}

std::string Config::resolved_snapshot_text() const {
  std::string out;
  for (const auto& [key, value] : resolved_) out += key + " = " + value + "\n";
  return out;
}

std::vector<std::string> Config::unused_keys() const {
  std::vector<std::string> unused;
  for (const auto& [key, entry] : values_) {
    if (!consumed_.contains(key)) unused.push_back(key);
  }
  return unused;
}

}  // namespace discosyn
