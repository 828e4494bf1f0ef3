// Copyright 2026 The fairdiff Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Strict readers for flat JSON config objects: wrong types and unknown keys
// are errors.

#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>

#include <json.hpp>

#include "fairdiff/error.hpp"

namespace fairdiff::detail {

inline nlohmann::json parse_json_object(std::string_view text, std::string_view source) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    fail(Errc::invalid_argument, std::string(source) + ": " + e.what());
  }
  require(j.is_object(), Errc::invalid_argument, std::string(source) + ": expected a JSON object");
  return j;
}

class FieldReader {
 public:
  FieldReader(const nlohmann::json& object, std::string_view source)
      : j_(object), source_(source) {}

  void count(const char* key, std::size_t& out) {
    if (const auto* v = take(key)) {
      require(v->is_number_unsigned(), Errc::invalid_argument,
              where(key) + " must be a non-negative integer");
      out = v->get<std::size_t>();
    }
  }

  void seed(const char* key, std::uint64_t& out) {
    if (const auto* v = take(key)) {
      require(v->is_number_unsigned(), Errc::invalid_argument,
              where(key) + " must be a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }

  void real(const char* key, double& out) {
    if (const auto* v = take(key)) {
      require(v->is_number() && std::isfinite(v->get<double>()), Errc::invalid_argument,
              where(key) + " must be a finite number");
      out = v->get<double>();
    }
  }

  void boolean(const char* key, bool& out) {
    if (const auto* v = take(key)) {
      require(v->is_boolean(), Errc::invalid_argument, where(key) + " must be true or false");
      out = v->get<bool>();
    }
  }

  std::optional<std::string> string(const char* key) {
    if (const auto* v = take(key)) {
      require(v->is_string(), Errc::invalid_argument, where(key) + " must be a string");
      return v->get<std::string>();
    }
    return std::nullopt;
  }

  const nlohmann::json* object(const char* key) {
    const auto* v = take(key);
    if (v != nullptr)
      require(v->is_object(), Errc::invalid_argument, where(key) + " must be an object");
    return v;
  }

  /// Throws on any key that no reader asked for.
  void finish() const {
    for (const auto& [key, value] : j_.items())
      require(seen_.contains(key), Errc::invalid_argument,
              std::string(source_) + ": unknown key '" + key + "'");
  }

 private:
  const nlohmann::json* take(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string where(const char* key) const { return std::string(source_) + ": " + key; }

  const nlohmann::json& j_;
  std::string source_;
  std::set<std::string, std::less<>> seen_;
};

}  // namespace fairdiff::detail
