// Copyright 2026 The fairdiff Authors
// SPDX-License-Identifier: Apache-2.0

#include "fairdiff/fairness.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <utility>

#include <json.hpp>

#include "csv.hpp"
#include "fairdiff/kernels.hpp"
#include "fairdiff/parallel.hpp"

namespace fairdiff {
namespace {

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) {
    if (!out.empty()) out += ", ";
    out += s;
  }
  return out;
}

}  // namespace

LabelTable::LabelTable(std::vector<LabelRow> rows, const AttributeSet& attributes)
    : rows_(std::move(rows)), attributes_(attributes) {
  std::set<std::pair<std::string_view, std::string_view>> seen;
  for (const auto& r : rows_) {
    require(!r.occupation.empty(), Errc::invalid_argument, "label row with empty occupation");
    require(r.label == kUnknownLabel || attributes_.index_of(r.label).has_value(),
            Errc::unknown_label,
            "label '" + r.label + "' for " + r.occupation + "/" + r.image_id +
                " is not an attribute or 'unknown'");
    require(seen.emplace(r.occupation, r.image_id).second, Errc::duplicate_label,
            "duplicate image '" + r.image_id + "' for occupation '" + r.occupation + "'");
  }
}

LabelTable parse_label_csv(std::string_view text, const AttributeSet& attributes,
                           std::string_view source) {
  const auto rows =
      detail::parse_csv_with_header(text, {"occupation", "image_id", "label"}, source);
  std::vector<LabelRow> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back({r[0], r[1], r[2]});
  return LabelTable(std::move(out), attributes);
}

LabelTable load_label_csv(const std::filesystem::path& path, const AttributeSet& attributes) {
  return parse_label_csv(read_file_bytes(path), attributes, path.string());
}

std::string format_label_csv(const LabelTable& table) {
  std::string out = "occupation,image_id,label\n";
  for (const auto& r : table.rows()) out += detail::csv_line({r.occupation, r.image_id, r.label});
  return out;
}

MissingLabelsError::MissingLabelsError(std::vector<std::string> occupations)
    : Error(Errc::invalid_argument,
            "no non-unknown labels for occupation(s): " + join(occupations)),
      occupations_(std::move(occupations)) {}

FairnessReport fairness_score(const LabelTable& table, std::string_view report_attribute,
                              std::size_t threads) {
  const AttributeSet& attrs = table.attributes();
  const auto reported = attrs.index_of(report_attribute);
  require(reported.has_value(), Errc::unknown_label,
          "report attribute '" + std::string(report_attribute) + "' is not in the attribute set");

  std::map<std::string, std::vector<const LabelRow*>> groups;
  for (const auto& r : table.rows()) groups[r.occupation].push_back(&r);
  require(!groups.empty(), Errc::invalid_argument, "label table has no rows");

  FairnessReport report;
  report.attribute = std::string(report_attribute);
  report.per_occupation.resize(groups.size());
  std::vector<const std::pair<const std::string, std::vector<const LabelRow*>>*> order;
  for (const auto& g : groups) order.push_back(&g);

  const auto n_attr = static_cast<long long>(attrs.size());
  parallel_for(order.size(), threads, [&](std::size_t i) {
    auto& occ = report.per_occupation[i];
    occ.occupation = order[i]->first;
    occ.counts.assign(attrs.size(), 0);
    for (const LabelRow* r : order[i]->second) {
      if (r->label == kUnknownLabel) {
        ++occ.unknown;
      } else {
        ++occ.counts[*attrs.index_of(r->label)];
      }
    }
    long long known = 0;
    for (auto c : occ.counts) known += static_cast<long long>(c);
    if (known == 0) return;
    // |m/n - 1/|A|| = ||A| m - n| / (|A| n), exact in the numerator.
    occ.attribute_deviation.resize(attrs.size());
    double sum = 0.0;
    for (std::size_t a = 0; a < attrs.size(); ++a) {
      const long long num = std::llabs(n_attr * static_cast<long long>(occ.counts[a]) - known);
      occ.attribute_deviation[a] =
          static_cast<double>(num) / static_cast<double>(n_attr * known);
      sum += occ.attribute_deviation[a];
    }
    occ.deviation = attrs.size() == 2 ? occ.attribute_deviation[*reported]
                                      : sum / static_cast<double>(attrs.size());
  });

  std::vector<std::string> missing;
  for (const auto& occ : report.per_occupation)
    if (occ.attribute_deviation.empty()) missing.push_back(occ.occupation);
  if (!missing.empty()) throw MissingLabelsError(std::move(missing));

  const double n = static_cast<double>(report.per_occupation.size());
  double total = 0.0;
  for (const auto& occ : report.per_occupation) total += occ.deviation;
  report.score = total / n;
  double var = 0.0;
  for (const auto& occ : report.per_occupation) {
    const double d = occ.deviation - report.score;
    var += d * d;
  }
  report.std = std::sqrt(var / n);
  return report;
}

std::string format_fairness_json(const FairnessReport& report, const AttributeSet& attributes) {
  nlohmann::ordered_json j;
  j["attribute"] = report.attribute;
  j["score"] = report.score;
  j["std"] = report.std;
  auto& occs = j["per_occupation"] = nlohmann::ordered_json::array();
  for (const auto& occ : report.per_occupation) {
    nlohmann::ordered_json o;
    o["occupation"] = occ.occupation;
    o["deviation"] = occ.deviation;
    nlohmann::ordered_json counts;
    for (std::size_t a = 0; a < attributes.size(); ++a) counts[attributes[a]] = occ.counts[a];
    o["counts"] = counts;
    o["unknown"] = occ.unknown;
    if (attributes.size() > 2) {
      nlohmann::ordered_json per;
      for (std::size_t a = 0; a < attributes.size(); ++a)
        per[attributes[a]] = occ.attribute_deviation[a];
      o["attribute_deviation"] = per;
    }
    occs.push_back(std::move(o));
  }
  return j.dump(2) + "\n";
}

std::string format_fairness_table(const FairnessReport& report, const AttributeSet& attributes) {
  std::size_t width = 10;
  for (const auto& occ : report.per_occupation) width = std::max(width, occ.occupation.size());
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-*s %9s", static_cast<int>(width), "occupation", "deviation");
  out += buf;
  for (const auto& name : attributes.names()) {
    std::snprintf(buf, sizeof buf, " %8s", name.c_str());
    out += buf;
  }
  out += "  unknown\n";
  for (const auto& occ : report.per_occupation) {
    std::snprintf(buf, sizeof buf, "%-*s %9.4f", static_cast<int>(width), occ.occupation.c_str(),
                  occ.deviation);
    out += buf;
    for (auto c : occ.counts) {
      std::snprintf(buf, sizeof buf, " %8zu", c);
      out += buf;
    }
    std::snprintf(buf, sizeof buf, "  %7zu\n", occ.unknown);
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "score %.4f  std %.4f  (attribute: %s, %zu occupations)\n",
                report.score, report.std, report.attribute.c_str(), report.per_occupation.size());
  out += buf;
  return out;
}

double linear_score(std::span<const double> weights, double bias,
                    std::span<const double> feature) {
  require(weights.size() == feature.size(), Errc::dimension_mismatch,
          "linear_score: " + std::to_string(weights.size()) + " weights for a feature of length " +
              std::to_string(feature.size()));
  return kernels::dot(weights, feature) + bias;
}

}  // namespace fairdiff
