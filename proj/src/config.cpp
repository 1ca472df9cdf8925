#include "memtax/config.hpp"

#include <cstdio>

#include "memtax/io_util.hpp"
#include "memtax/schema_json.hpp"

namespace memtax {

using nlohmann::json;

const json& config_schema() {
  static const json schema = json::parse(generated::kConfigSchemaJson);
  return schema;
}

namespace {

json build_default(const json& schema) {
  if (schema.contains("default")) return schema.at("default");
  json out = json::object();
  if (schema.contains("properties"))
    for (const auto& [key, sub] : schema.at("properties").items()) {
      json d = build_default(sub);
      if (!d.is_null() || sub.contains("default")) out[key] = std::move(d);
    }
  return out;
}

bool has_type(const json& v, const std::string& type) {
  if (type == "null") return v.is_null();
  if (type == "integer") return v.is_number_integer();
  if (type == "number") return v.is_number();
  if (type == "boolean") return v.is_boolean();
  if (type == "string") return v.is_string();
  if (type == "array") return v.is_array();
  if (type == "object") return v.is_object();
  return false;
}

std::string where(const std::string& path) { return path.empty() ? "/" : path; }

void validate(const json& schema, const json& v, const std::string& path) {
  if (schema.contains("type")) {
    const auto& t = schema.at("type");
    bool ok = false;
    std::string names;
    for (const auto& type : t.is_array() ? t : json::array({t})) {
      ok = ok || has_type(v, type.get<std::string>());
      names += (names.empty() ? "" : " or ") + type.get<std::string>();
    }
    if (!ok) throw ConfigError(where(path) + ": expected " + names + ", got " + v.dump());
  }
  if (v.is_number()) {
    const double x = v.get<double>();
    if (schema.contains("minimum") && x < schema.at("minimum").get<double>())
      throw ConfigError(where(path) + ": " + v.dump() + " is below the minimum " + schema.at("minimum").dump());
    if (schema.contains("exclusiveMinimum") && x <= schema.at("exclusiveMinimum").get<double>())
      throw ConfigError(where(path) + ": " + v.dump() + " must exceed " + schema.at("exclusiveMinimum").dump());
    if (schema.contains("maximum") && x > schema.at("maximum").get<double>())
      throw ConfigError(where(path) + ": " + v.dump() + " is above the maximum " + schema.at("maximum").dump());
  }
  if (schema.contains("enum")) {
    bool found = false;
    for (const auto& e : schema.at("enum")) found = found || e == v;
    if (!found) throw ConfigError(where(path) + ": " + v.dump() + " is not one of " + schema.at("enum").dump());
  }
  if (v.is_object() && schema.contains("properties")) {
    const auto& props = schema.at("properties");
    const bool open = schema.value("additionalProperties", false);
    for (const auto& [key, sub] : v.items()) {
      if (props.contains(key)) validate(props.at(key), sub, path + "/" + key);
      else if (!open) throw ConfigError(where(path) + ": unknown key '" + key + "'");
    }
    if (schema.contains("required"))
      for (const auto& r : schema.at("required"))
        if (!v.contains(r.get<std::string>()))
          throw ConfigError(where(path) + ": missing required key '" + r.get<std::string>() + "'");
  }
  if (v.is_array() && schema.contains("items"))
    for (std::size_t i = 0; i < v.size(); ++i) validate(schema.at("items"), v[i], path + "/" + std::to_string(i));
}

void overlay(json& base, const json& user, const json& schema, const std::string& path) {
  if (!user.is_object()) throw ConfigError(where(path) + ": expected object, got " + user.dump());
  const json* props = schema.contains("properties") ? &schema.at("properties") : nullptr;
  for (const auto& [key, value] : user.items()) {
    const json* sub = props && props->contains(key) ? &props->at(key) : nullptr;
    if (!sub && !schema.value("additionalProperties", false))
      throw ConfigError(where(path) + ": unknown key '" + key + "'");
    if (sub && sub->contains("properties") && !sub->contains("default") && value.is_object() &&
        base.contains(key))
      overlay(base[key], value, *sub, path + "/" + key);
    else
      base[key] = value;
  }
}

}  // namespace

json default_config() { return build_default(config_schema()); }

json merge_config(const json& user) {
  json merged = default_config();
  overlay(merged, user, config_schema(), "");
  validate(config_schema(), merged, "");
  return merged;
}

std::string config_hash(const json& merged) {
  json canonical = merged;
  if (canonical.contains("paths")) canonical["paths"].erase("output");
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canonical.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

const json& RunConfig::at(const std::string& pointer) const {
  try {
    return values.at(json::json_pointer(pointer));
  } catch (const json::exception&) {
    throw ConfigError("missing configuration entry " + pointer);
  }
}

std::filesystem::path RunConfig::path(const std::string& key, const std::string& fallback) const {
  const auto& v = at("/paths/" + key);
  if (v.is_null()) return fallback.empty() ? std::filesystem::path() : output_dir / fallback;
  std::filesystem::path p = v.get<std::string>();
  return p.is_absolute() ? p : base_dir / p;
}

nlohmann::ordered_json RunConfig::provenance(const std::string& command) const {
  return {{"tool", "memtax"}, {"format_version", 1}, {"command", command},
          {"config_hash", hash}, {"seed", seed}};
}

RunConfig make_config(const json& user, const std::filesystem::path& base_dir,
                      std::optional<std::uint64_t> seed_override,
                      std::optional<std::filesystem::path> output_override) {
  json u = user;
  if (!u.is_object()) throw ConfigError("configuration must be a JSON object");
  if (seed_override) u["seed"] = *seed_override;
  RunConfig cfg;
  cfg.values = merge_config(u);
  cfg.base_dir = base_dir;
  cfg.seed = cfg.values.at("seed").get<std::uint64_t>();
  cfg.hash = config_hash(cfg.values);
  if (output_override) {
    cfg.output_dir = *output_override;
  } else {
    std::filesystem::path out = cfg.values.at("paths").at("output").get<std::string>();
    cfg.output_dir = out.is_absolute() ? out : base_dir / out;
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path, std::optional<std::uint64_t> seed_override,
                      std::optional<std::filesystem::path> output_override) {
  if (!std::filesystem::is_regular_file(path)) throw ConfigError("config file not found: " + path.string());
  json user;
  try {
    user = json::parse(io::read_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  const auto base = std::filesystem::absolute(path).parent_path();
  return make_config(user, base, seed_override, output_override);
}

}  // namespace memtax
