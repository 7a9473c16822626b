#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

namespace coladiff {

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes);

/// 16 hex digits of fnv1a(bytes).
std::string hex_digest(std::string_view bytes);

/// Flat key/value configuration stored as a single JSON object, e.g.
/// {"T": 1000, "coop_filter.enabled": true, "lr": 9.6e-5}.
class Config {
 public:
  Config() : values_(nlohmann::json::object()) {}

  static Config load(const std::filesystem::path& file);
  static Config parse(std::string_view text);

  bool contains(const std::string& key) const { return values_.contains(key); }

  template <typename T>
  T get(const std::string& key, T fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end() || it->is_null()) return fallback;
    return it->template get<T>();
  }

  template <typename T>
  Config& set(const std::string& key, T value) {
    values_[key] = std::move(value);
    return *this;
  }

  /// Keys present in `other` override keys here.
  Config merged(const Config& other) const;

  const nlohmann::json& json() const { return values_; }
  std::string dump() const { return values_.dump(2); }
  void save(const std::filesystem::path& file) const;

  /// Digest of the canonical (sorted-key, compact) serialization.
  std::string hash() const { return hex_digest(values_.dump()); }

 private:
  nlohmann::json values_;
};

}  // namespace coladiff
