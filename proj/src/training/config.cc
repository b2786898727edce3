#include "aflab/training/config.h"

#include <charconv>
#include <fstream>
#include <sstream>

#include "aflab/errors.h"

namespace aflab::training {

namespace {

std::string Trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T ParseNumber(const std::string& key, const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) throw InputError("config key '" + key + "': cannot parse '" + text + "'");
  return value;
}

}  // namespace

KeyValueConfig KeyValueConfig::Parse(const std::string& text, const std::string& source) {
  KeyValueConfig cfg;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = Trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw InputError(source + ":" + std::to_string(line_no) + ": expected key = value, got '" + line + "'");
    const std::string key = Trim(line.substr(0, eq));
    if (key.empty()) throw InputError(source + ":" + std::to_string(line_no) + ": empty key");
    cfg.values_[key] = Trim(line.substr(eq + 1));
    cfg.origin_[key] = source + ":" + std::to_string(line_no);
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::Load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return Parse(buf.str(), path.string());
}

void KeyValueConfig::Set(const std::string& key, const std::string& value) {
  values_[key] = value;
  origin_[key] = "<override>";
}

std::string KeyValueConfig::GetString(const std::string& key, const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

int KeyValueConfig::GetInt(const std::string& key, int fallback) const {
  return Has(key) ? ParseNumber<int>(key, values_.at(key)) : fallback;
}

std::uint64_t KeyValueConfig::GetU64(const std::string& key, std::uint64_t fallback) const {
  return Has(key) ? ParseNumber<std::uint64_t>(key, values_.at(key)) : fallback;
}

double KeyValueConfig::GetDouble(const std::string& key, double fallback) const {
  if (!Has(key)) return fallback;
  const std::string& text = values_.at(key);
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != text.size() || text.empty()) throw InputError("config key '" + key + "': cannot parse '" + text + "'");
  return v;
}

bool KeyValueConfig::GetBool(const std::string& key, bool fallback) const {
  if (!Has(key)) return fallback;
  const std::string& v = values_.at(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw InputError("config key '" + key + "': expected true or false, got '" + v + "'");
}

void KeyValueConfig::RejectUnknown(const std::set<std::string>& known) const {
  for (const auto& [key, value] : values_)
    if (!known.count(key)) throw InputError("unknown config key '" + key + "' (" + origin_.at(key) + ")");
}

std::string KeyValueConfig::Dump() const {
  std::string out;
  for (const auto& [key, value] : values_) out += key + "=" + value + "\n";
  return out;
}

}  // namespace aflab::training
