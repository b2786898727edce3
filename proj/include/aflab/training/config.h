#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>

namespace aflab::training {

// Flat `key = value` text; `#` starts a comment. Later assignments win.
class KeyValueConfig {
 public:
  static KeyValueConfig Parse(const std::string& text, const std::string& source = "<config>");
  static KeyValueConfig Load(const std::filesystem::path& path);

  void Set(const std::string& key, const std::string& value);
  bool Has(const std::string& key) const { return values_.count(key) > 0; }

  std::string GetString(const std::string& key, const std::string& fallback) const;
  int GetInt(const std::string& key, int fallback) const;
  std::uint64_t GetU64(const std::string& key, std::uint64_t fallback) const;
  double GetDouble(const std::string& key, double fallback) const;
  bool GetBool(const std::string& key, bool fallback) const;

  // Throws InputError naming the first key not in `known`.
  void RejectUnknown(const std::set<std::string>& known) const;
  // Sorted `key=value` lines.
  std::string Dump() const;
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
  std::map<std::string, std::string> origin_;
};

}  // namespace aflab::training
