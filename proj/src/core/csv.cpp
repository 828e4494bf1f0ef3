// Copyright 2026 The fairdiff Authors
// SPDX-License-Identifier: Apache-2.0

#include "csv.hpp"

#include <charconv>

#include "fairdiff/error.hpp"

namespace fairdiff::detail {

std::vector<CsvRow> parse_csv(std::string_view text, std::string_view source) {
  std::vector<CsvRow> rows;
  CsvRow row;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t line = 1;

  auto end_row = [&] {
    if (field_started || !row.empty()) {
      row.push_back(std::move(field));
      rows.push_back(std::move(row));
    }
    row.clear();
    field.clear();
    field_started = false;
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char ch = text[i];
    if (in_quotes) {
      if (ch == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (ch == '\n') ++line;
        field += ch;
      }
      continue;
    }
    switch (ch) {
      case '"':
        if (!field.empty()) {
          fail(Errc::malformed_csv,
               std::string(source) + ":" + std::to_string(line) + ": stray quote");
        }
        in_quotes = true;
        field_started = true;
        break;
      case ',':
        row.push_back(std::move(field));
        field.clear();
        field_started = true;
        break;
      case '\r':
        break;
      case '\n':
        end_row();
        ++line;
        break;
      default:
        field += ch;
        field_started = true;
    }
  }
  if (in_quotes) fail(Errc::malformed_csv, std::string(source) + ": unterminated quoted field");
  end_row();
  return rows;
}

std::vector<CsvRow> parse_csv_with_header(std::string_view text, const CsvRow& header,
                                          std::string_view source) {
  auto rows = parse_csv(text, source);
  if (rows.empty() || rows.front() != header) {
    std::string expected;
    for (const auto& h : header) expected += (expected.empty() ? "" : ",") + h;
    fail(Errc::malformed_csv, std::string(source) + ": expected header '" + expected + "'");
  }
  rows.erase(rows.begin());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != header.size()) {
      fail(Errc::malformed_csv, std::string(source) + ": data row " + std::to_string(i + 1) +
                                    " has " + std::to_string(rows[i].size()) + " fields, expected " +
                                    std::to_string(header.size()));
    }
  }
  return rows;
}

std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string csv_line(const CsvRow& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out += ',';
    out += csv_escape(fields[i]);
  }
  out += '\n';
  return out;
}

long long parse_count(const std::string& field, std::string_view source, std::size_t line) {
  long long value = 0;
  const auto* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (ec != std::errc() || ptr != end || value < 0) {
    fail(Errc::malformed_csv, std::string(source) + ": data row " + std::to_string(line) +
                                  ": '" + field + "' is not a non-negative integer");
  }
  return value;
}

}  // namespace fairdiff::detail
