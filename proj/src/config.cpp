#include "coladiff/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace coladiff {

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex_digest(std::string_view bytes) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a(bytes)));
  return buf;
}

Config Config::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot open config file " + file.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str());
}

Config Config::parse(std::string_view text) {
  Config cfg;
  try {
    cfg.values_ = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error(std::string("config parse error: ") + e.what());
  }
  if (!cfg.values_.is_object()) throw std::runtime_error("config must be a flat JSON object");
  for (const auto& [key, value] : cfg.values_.items()) {
    if (value.is_object()) {
      throw std::runtime_error("config key '" + key + "' is nested; use flat dotted keys");
    }
  }
  return cfg;
}

Config Config::merged(const Config& other) const {
  Config out = *this;
  for (const auto& [key, value] : other.values_.items()) out.values_[key] = value;
  return out;
}

void Config::save(const std::filesystem::path& file) const {
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write config file " + file.string());
  out << dump() << '\n';
}

}  // namespace coladiff
