// Copyright 2026 The fairdiff Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Minimal RFC 4180 reader/writer: comma separated, double-quoted fields may
// contain commas, quotes ("") and newlines.

#include <string>
#include <string_view>
#include <vector>

namespace fairdiff::detail {

using CsvRow = std::vector<std::string>;

/// Parses the whole document; blank lines are skipped. Throws malformed_csv.
std::vector<CsvRow> parse_csv(std::string_view text, std::string_view source);

/// Checks the first row equals `header` and returns the remaining rows, each
/// with exactly header.size() fields.
std::vector<CsvRow> parse_csv_with_header(std::string_view text, const CsvRow& header,
                                          std::string_view source);

std::string csv_escape(std::string_view field);
std::string csv_line(const CsvRow& fields);

long long parse_count(const std::string& field, std::string_view source, std::size_t line);

}  // namespace fairdiff::detail
