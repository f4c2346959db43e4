#pragma once

#include <json.hpp>

#include <string>
#include <vector>

#include "labelmia/common.hpp"

namespace lmia {

using ordered_json = nlohmann::ordered_json;

/// Rejects keys outside `allowed`, to catch config typos early.
inline void reject_unknown_keys(const ordered_json& obj, const std::vector<std::string>& allowed,
                                const std::string& context) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const auto& k : allowed) {
      if (it.key() == k) {
        known = true;
        break;
      }
    }
    if (!known) throw ArgumentError(context + ": unknown key '" + it.key() + "'");
  }
}

template <class T>
T require_field(const ordered_json& obj, const std::string& key, const std::string& context) {
  if (!obj.contains(key)) throw ArgumentError(context + ": missing key '" + key + "'");
  try {
    return obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ArgumentError(context + ": key '" + key + "' has the wrong type");
  }
}

template <class T>
T field_or(const ordered_json& obj, const std::string& key, T fallback,
           const std::string& context) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ArgumentError(context + ": key '" + key + "' has the wrong type");
  }
}

}  // namespace lmia
