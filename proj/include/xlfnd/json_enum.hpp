#pragma once

#include <algorithm>
#include <iterator>
#include <string>
#include <utility>

#include <nlohmann/json.hpp>

#include "xlfnd/common.hpp"

// Like NLOHMANN_JSON_SERIALIZE_ENUM, but an unknown name throws ContractError
// instead of decoding to the first enumerator.
#define XLFND_JSON_ENUM(ENUM_TYPE, ...)                                                                   \
  inline const std::pair<ENUM_TYPE, const char*>* xlfnd_enum_names(ENUM_TYPE, std::size_t& n) {          \
    static const std::pair<ENUM_TYPE, const char*> names[] = __VA_ARGS__;                                \
    n = std::size(names);                                                                                 \
    return names;                                                                                         \
  }                                                                                                       \
  inline void to_json(nlohmann::json& j, const ENUM_TYPE& e) {                                            \
    std::size_t n = 0;                                                                                    \
    const auto* names = xlfnd_enum_names(e, n);                                                           \
    const auto* it = std::find_if(names, names + n, [&](const auto& p) { return p.first == e; });        \
    if (it == names + n) throw ::xlfnd::ContractError(#ENUM_TYPE ": value has no name");                 \
    j = it->second;                                                                                       \
  }                                                                                                       \
  inline void from_json(const nlohmann::json& j, ENUM_TYPE& e) {                                          \
    std::size_t n = 0;                                                                                    \
    const auto* names = xlfnd_enum_names(e, n);                                                           \
    const std::string s = j.get<std::string>();                                                           \
    const auto* it = std::find_if(names, names + n, [&](const auto& p) { return s == p.second; });       \
    if (it == names + n) throw ::xlfnd::ContractError(#ENUM_TYPE ": unknown name '" + s + "'");          \
    e = it->first;                                                                                        \
  }
