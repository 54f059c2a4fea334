#pragma once

#include <json.hpp>

#include "gocc/common.hpp"

namespace gocc {

// Config files are strict: every key must be known.
inline void reject_unknown_keys(const nlohmann::json& j, const std::vector<std::string>& allowed,
                                const std::string& context) {
  require(j.is_object(), context + ": expected a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      fail(context + ": unknown key \"" + key + "\"");
    }
  }
}

template <typename T>
T json_get_or(const nlohmann::json& j, const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  return j.at(key).get<T>();
}

}  // namespace gocc
