// Copyright 2026 The fairdiff Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Embedding data model and the EMBD interchange format.
//
// EMBD layout (all integers u32 little-endian):
//   bytes 0-3   "EMBD"
//   version     = 1
//   count n
//   dim d
//   name-block length L
//   L bytes of UTF-8: exactly n labels, each terminated by '\n'
//   n*d f32 little-endian values, row-major (one vector after another)
//
// Values are stored as f32 and widened to double on load; all downstream
// arithmetic is double precision.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace fairdiff {

/// A single pooled prompt embedding. Length >= 2, all entries finite.
class EmbeddingVector {
 public:
  explicit EmbeddingVector(std::vector<double> values);

  [[nodiscard]] std::size_t dim() const noexcept { return values_.size(); }
  [[nodiscard]] std::span<const double> values() const noexcept { return values_; }
  [[nodiscard]] double operator[](std::size_t i) const noexcept { return values_[i]; }

  friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;

 private:
  std::vector<double> values_;
};

/// Ordered, uniquely-labelled collection of equal-length embeddings.
class EmbeddingSet {
 public:
  explicit EmbeddingSet(std::size_t dim);

  void add(std::string label, EmbeddingVector vector);

  [[nodiscard]] std::size_t dim() const noexcept { return dim_; }
  [[nodiscard]] std::size_t size() const noexcept { return labels_.size(); }
  [[nodiscard]] bool empty() const noexcept { return labels_.empty(); }

  [[nodiscard]] const std::string& label(std::size_t i) const { return labels_.at(i); }
  [[nodiscard]] const EmbeddingVector& vector(std::size_t i) const { return vectors_.at(i); }
  [[nodiscard]] const std::vector<std::string>& labels() const noexcept { return labels_; }
  [[nodiscard]] std::optional<std::size_t> find(std::string_view label) const;

  /// Encoder provenance (for example the exporter's encoder id). Not part of
  /// the EMBD payload; carried by the exporter's sidecar file.
  [[nodiscard]] const std::optional<std::string>& encoder() const noexcept { return encoder_; }
  void set_encoder(std::string encoder) { encoder_ = std::move(encoder); }

  /// Compares dimension, labels and values; encoder metadata is ignored.
  friend bool operator==(const EmbeddingSet& a, const EmbeddingSet& b) {
    return a.dim_ == b.dim_ && a.labels_ == b.labels_ && a.vectors_ == b.vectors_;
  }

 private:
  std::size_t dim_;
  std::vector<std::string> labels_;
  std::vector<EmbeddingVector> vectors_;
  std::unordered_map<std::string, std::size_t> index_;
  std::optional<std::string> encoder_;
};

/// Ordered attribute names, e.g. {"male", "female"} or {"light", "dark"}.
/// The first name is the one reported by default and wins exact ties in the
/// toy oracle classifier.
class AttributeSet {
 public:
  explicit AttributeSet(std::vector<std::string> names);

  static AttributeSet gender() { return AttributeSet({"male", "female"}); }
  static AttributeSet skin_tone() { return AttributeSet({"light", "dark"}); }

  [[nodiscard]] std::size_t size() const noexcept { return names_.size(); }
  [[nodiscard]] const std::string& operator[](std::size_t i) const { return names_.at(i); }
  [[nodiscard]] const std::vector<std::string>& names() const noexcept { return names_; }
  [[nodiscard]] std::optional<std::size_t> index_of(std::string_view name) const;

  friend bool operator==(const AttributeSet&, const AttributeSet&) = default;

 private:
  std::vector<std::string> names_;
};

inline constexpr std::uint32_t kEmbdVersion = 1;
inline constexpr std::size_t kEmbdHeaderBytes = 20;

[[nodiscard]] std::string encode_embedding_set(const EmbeddingSet& set);
[[nodiscard]] EmbeddingSet decode_embedding_set(std::string_view bytes);

[[nodiscard]] EmbeddingSet load_embedding_set(const std::filesystem::path& path);
void save_embedding_set(const EmbeddingSet& set, const std::filesystem::path& path);

/// Whole-file helpers shared by every binary format in the library.
[[nodiscard]] std::string read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::string_view bytes);

}  // namespace fairdiff
