#pragma once

#include <initializer_list>
#include <set>
#include <string>

#include <json.hpp>

#include "sigarch/errors.hpp"

namespace sigarch::detail {

/// Throws ConfigError for keys of `doc` outside `allowed`.
inline void reject_unknown(const nlohmann::json& doc, std::initializer_list<const char*> allowed,
                           const std::string& where) {
  if (!doc.is_object()) throw ConfigError(where + " must be an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : doc.items()) {
    if (!ok.contains(key)) throw ConfigError("unknown key '" + where + "." + key + "'");
  }
}

template <typename T>
void read_opt(const nlohmann::json& doc, const char* key, T& out, const std::string& where) {
  if (!doc.contains(key)) return;
  try {
    out = doc.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("invalid type for '" + where + "." + key + "'");
  }
}

}  // namespace sigarch::detail
