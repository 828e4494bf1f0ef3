// Copyright 2026 The fairdiff Authors
// SPDX-License-Identifier: Apache-2.0

#include "fairdiff/embedding.hpp"

#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <unordered_set>

#include "binary_io.hpp"
#include "fairdiff/error.hpp"
#include "fairdiff/matrix.hpp"

namespace fairdiff {

EmbeddingVector::EmbeddingVector(std::vector<double> values) : values_(std::move(values)) {
  require(values_.size() >= 2, Errc::invalid_argument,
          "embedding vectors need at least 2 entries, got " + std::to_string(values_.size()));
  require(all_finite(values_), Errc::non_finite, "embedding vector has a non-finite entry");
}

EmbeddingSet::EmbeddingSet(std::size_t dim) : dim_(dim) {
  require(dim >= 2, Errc::invalid_argument,
          "embedding dimension must be >= 2, got " + std::to_string(dim));
}

void EmbeddingSet::add(std::string label, EmbeddingVector vector) {
  require(vector.dim() == dim_, Errc::dimension_mismatch,
          "vector for '" + label + "' has length " + std::to_string(vector.dim()) +
              ", set dimension is " + std::to_string(dim_));
  require(!label.empty(), Errc::invalid_argument, "labels must be non-empty");
  require(label.find('\n') == std::string::npos, Errc::invalid_argument,
          "labels must not contain newlines");
  require(!index_.contains(label), Errc::duplicate_label, "duplicate label '" + label + "'");
  index_.emplace(label, labels_.size());
  labels_.push_back(std::move(label));
  vectors_.push_back(std::move(vector));
}

std::optional<std::size_t> EmbeddingSet::find(std::string_view label) const {
  auto it = index_.find(std::string(label));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

AttributeSet::AttributeSet(std::vector<std::string> names) : names_(std::move(names)) {
  require(names_.size() >= 2, Errc::invalid_argument, "an attribute set needs at least 2 names");
  std::unordered_set<std::string> seen;
  for (const auto& n : names_) {
    require(!n.empty(), Errc::invalid_argument, "attribute names must be non-empty");
    require(n != "unknown", Errc::invalid_argument, "'unknown' is reserved for unlabeled rows");
    require(seen.insert(n).second, Errc::duplicate_label, "duplicate attribute '" + n + "'");
  }
}

std::optional<std::size_t> AttributeSet::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return i;
  return std::nullopt;
}

std::string encode_embedding_set(const EmbeddingSet& set) {
  std::string names;
  for (const auto& label : set.labels()) {
    names += label;
    names += '\n';
  }
  detail::ByteWriter w;
  w.magic("EMBD");
  w.u32(kEmbdVersion);
  w.u32(static_cast<std::uint32_t>(set.size()));
  w.u32(static_cast<std::uint32_t>(set.dim()));
  w.u32(static_cast<std::uint32_t>(names.size()));
  w.bytes(names);
  for (std::size_t i = 0; i < set.size(); ++i) {
    for (double v : set.vector(i).values()) {
      const auto f = static_cast<float>(v);
      require(std::isfinite(f), Errc::non_finite,
              "value of '" + set.label(i) + "' overflows f32 storage");
      w.f32(f);
    }
  }
  return w.take();
}

EmbeddingSet decode_embedding_set(std::string_view bytes) {
  detail::ByteReader r(bytes, "EMBD");
  r.expect_magic("EMBD");
  const std::uint32_t version = r.u32();
  require(version == kEmbdVersion, Errc::version_mismatch,
          "EMBD version " + std::to_string(version) + " (expected 1)");
  const std::uint32_t count = r.u32();
  const std::uint32_t dim = r.u32();
  const std::uint32_t name_len = r.u32();
  const std::string_view names = r.bytes(name_len);

  std::vector<std::string> labels;
  std::size_t start = 0;
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == '\n') {
      labels.emplace_back(names.substr(start, i - start));
      start = i + 1;
    }
  }
  require(start == names.size() && labels.size() == count, Errc::label_count_mismatch,
          "EMBD name block holds " + std::to_string(labels.size()) +
              " newline-terminated labels" + (start != names.size() ? " plus a partial one" : "") +
              ", header says " + std::to_string(count));

  EmbeddingSet set(dim);
  r.need(static_cast<std::size_t>(count) * dim * sizeof(float));
  for (std::uint32_t i = 0; i < count; ++i) {
    std::vector<double> values(dim);
    for (auto& v : values) {
      const float f = r.f32();
      require(std::isfinite(f), Errc::non_finite,
              "EMBD value for '" + labels[i] + "' is not finite");
      v = static_cast<double>(f);
    }
    set.add(std::move(labels[i]), EmbeddingVector(std::move(values)));
  }
  r.expect_end();
  return set;
}

std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), Errc::io, "cannot open '" + path.string() + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  require(!in.bad(), Errc::io, "read failed for '" + path.string() + "'");
  return bytes;
}

void write_file_bytes(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), Errc::io, "cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  require(static_cast<bool>(out), Errc::io, "write failed for '" + path.string() + "'");
}

EmbeddingSet load_embedding_set(const std::filesystem::path& path) {
  return decode_embedding_set(read_file_bytes(path));
}

void save_embedding_set(const EmbeddingSet& set, const std::filesystem::path& path) {
  write_file_bytes(path, encode_embedding_set(set));
}

}  // namespace fairdiff
