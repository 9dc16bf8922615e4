#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace acceptance {

// Validates `value` against the JSON-schema subset the service publishes:
// type, enum, properties, required, additionalProperties, items, minItems,
// maxItems. Returns one message per violation.
inline void validate_schema(const nlohmann::json& schema, const nlohmann::json& value, const std::string& path,
                            std::vector<std::string>& errors) {
  const auto type_ok = [&](const std::string& t) {
    if (t == "object") return value.is_object();
    if (t == "array") return value.is_array();
    if (t == "string") return value.is_string();
    if (t == "integer") return value.is_number_integer();
    if (t == "number") return value.is_number();
    if (t == "boolean") return value.is_boolean();
    if (t == "null") return value.is_null();
    return false;
  };
  if (schema.contains("type")) {
    bool ok = false;
    if (schema["type"].is_array()) {
      for (const auto& t : schema["type"]) ok = ok || type_ok(t.get<std::string>());
    } else {
      ok = type_ok(schema["type"].get<std::string>());
    }
    if (!ok) {
      errors.push_back(path + ": expected " + schema["type"].dump() + ", got " + value.type_name());
      return;
    }
  }
  if (schema.contains("enum")) {
    bool found = false;
    for (const auto& e : schema["enum"]) found = found || e == value;
    if (!found) errors.push_back(path + ": " + value.dump() + " not in " + schema["enum"].dump());
  }
  if (value.is_object()) {
    const auto properties = schema.value("properties", nlohmann::json::object());
    for (const auto& key : schema.value("required", nlohmann::json::array())) {
      if (!value.contains(key.get<std::string>())) errors.push_back(path + ": missing " + key.get<std::string>());
    }
    for (const auto& [key, v] : value.items()) {
      if (properties.contains(key)) {
        validate_schema(properties[key], v, path + "." + key, errors);
      } else if (schema.contains("additionalProperties") && schema["additionalProperties"].is_object()) {
        validate_schema(schema["additionalProperties"], v, path + "." + key, errors);
      }
    }
  }
  if (value.is_array()) {
    if (schema.contains("minItems") && value.size() < schema["minItems"].get<std::size_t>()) {
      errors.push_back(path + ": fewer than " + schema["minItems"].dump() + " items");
    }
    if (schema.contains("maxItems") && value.size() > schema["maxItems"].get<std::size_t>()) {
      errors.push_back(path + ": more than " + schema["maxItems"].dump() + " items");
    }
    if (schema.contains("items")) {
      for (std::size_t i = 0; i < value.size(); ++i) {
        validate_schema(schema["items"], value[i], path + "[" + std::to_string(i) + "]", errors);
      }
    }
  }
}

}  // namespace acceptance
