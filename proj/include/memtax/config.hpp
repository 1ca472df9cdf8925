#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "memtax/common.hpp"

namespace memtax {

// Embedded JSON schema with every default.
const nlohmann::json& config_schema();

// Defaults extracted from the schema.
nlohmann::json default_config();

// Overlays `user` on the defaults and checks types, ranges, enums and
// unknown keys; the first violation raises ConfigError naming its JSON path.
nlohmann::json merge_config(const nlohmann::json& user);

// FNV-1a over the canonical dump, with the output directory left out so the
// same run written to two places hashes alike.
std::string config_hash(const nlohmann::json& merged);

struct RunConfig {
  nlohmann::json values;            // merged and validated
  std::filesystem::path base_dir;   // relative paths resolve against this
  std::filesystem::path output_dir;
  std::uint64_t seed = 0;
  std::string hash;

  // JSON-pointer lookup, e.g. at("/stats/bootstrap").
  const nlohmann::json& at(const std::string& pointer) const;
  template <class T>
  T get(const std::string& pointer) const {
    return at(pointer).get<T>();
  }
  // Resolved path for a nullable paths.* entry; `fallback` names a file in the
  // output directory used when the entry is null.
  std::filesystem::path path(const std::string& key, const std::string& fallback = "") const;

  // Provenance block embedded in every artifact.
  nlohmann::ordered_json provenance(const std::string& command) const;
};

RunConfig load_config(const std::filesystem::path& path, std::optional<std::uint64_t> seed_override,
                      std::optional<std::filesystem::path> output_override);
RunConfig make_config(const nlohmann::json& user, const std::filesystem::path& base_dir,
                      std::optional<std::uint64_t> seed_override,
                      std::optional<std::filesystem::path> output_override);

}  // namespace memtax
