// Copyright 2026 The fairdiff Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Single-head cross-attention with low-rank bias adapters.
//
// Hidden tokens X (n_x x d_x) attend over conditioning tokens C (n_c x d_c):
//
//   Q = X Wq'^T   K = C Wk'^T   V = C Wv'^T
//   A = softmax_rows(Q K^T / sqrt(d_h))
//   out = (A V) Wo'^T
//
// where each adapted projection is W' x = W x + scale * up (down x). An
// expert-weight map mixes complete attention outputs:
//
//   forward(X, C) = sum_e weight_e * out_e(X, C)
//
// The expert "original" uses the frozen base weights with no adapter; every
// other id must name an adapter in the block. Adapters start with up = 0, so
// a fresh adapter reproduces the base output exactly.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fairdiff/matrix.hpp"

namespace fairdiff {

inline constexpr std::string_view kOriginalExpert = "original";

using ExpertWeights = std::map<std::string, double, std::less<>>;

struct AttentionDims {
  std::size_t hidden = 0;     // d_x
  std::size_t context = 0;    // d_c
  std::size_t attention = 0;  // d_h

  friend bool operator==(const AttentionDims&, const AttentionDims&) = default;
};

enum class Projection { q, k, v, o };
inline constexpr Projection kProjections[] = {Projection::q, Projection::k, Projection::v,
                                              Projection::o};
[[nodiscard]] std::string_view projection_name(Projection p) noexcept;

/// (out, in) shape of a projection's base matrix.
[[nodiscard]] std::pair<std::size_t, std::size_t> projection_shape(const AttentionDims& dims,
                                                                   Projection p) noexcept;

struct CrossAttentionWeights {
  Matrix w_q;  // d_h x d_x
  Matrix w_k;  // d_h x d_c
  Matrix w_v;  // d_h x d_c
  Matrix w_o;  // d_x x d_h

  /// Gaussian entries with std 1/sqrt(fan_in).
  static CrossAttentionWeights random(const AttentionDims& dims, std::uint64_t seed);
  static CrossAttentionWeights zeros(const AttentionDims& dims);

  [[nodiscard]] AttentionDims dims() const noexcept {
    return {w_q.cols(), w_k.cols(), w_q.rows()};
  }
  [[nodiscard]] Matrix& get(Projection p) noexcept;
  [[nodiscard]] const Matrix& get(Projection p) const noexcept;
  [[nodiscard]] std::size_t parameter_count() const noexcept;
  /// Throws on inconsistent shapes or non-finite entries.
  void validate() const;

  friend bool operator==(const CrossAttentionWeights&, const CrossAttentionWeights&) = default;
};

struct LowRankPair {
  Matrix down;  // r x in
  Matrix up;    // out x r

  friend bool operator==(const LowRankPair&, const LowRankPair&) = default;
};

class BiasAdapter {
 public:
  BiasAdapter(std::size_t rank, double scale, LowRankPair q, LowRankPair k, LowRankPair v,
              LowRankPair o);

  /// down ~ N(0, stddev^2) from `seed`, up = 0. Unless given, stddev is
  /// 1/sqrt(fan_in) of each projection and scale is 1/rank.
  /// Requires 1 <= rank < min(d_x, d_c, d_h).
  static BiasAdapter initialize(const AttentionDims& dims, std::size_t rank, std::uint64_t seed,
                                std::optional<double> stddev = {},
                                std::optional<double> scale = {});

  [[nodiscard]] std::size_t rank() const noexcept { return rank_; }
  [[nodiscard]] double scale() const noexcept { return scale_; }
  [[nodiscard]] LowRankPair& pair(Projection p) noexcept;
  [[nodiscard]] const LowRankPair& pair(Projection p) const noexcept;
  [[nodiscard]] std::size_t parameter_count() const noexcept;

  void check_dims(const AttentionDims& dims) const;

  friend bool operator==(const BiasAdapter&, const BiasAdapter&) = default;

 private:
  std::size_t rank_;
  double scale_;
  LowRankPair q_, k_, v_, o_;
};

class AdaptedAttentionBlock {
 public:
  explicit AdaptedAttentionBlock(CrossAttentionWeights base);

  [[nodiscard]] const CrossAttentionWeights& base() const noexcept { return base_; }
  [[nodiscard]] AttentionDims dims() const noexcept { return base_.dims(); }

  /// Mutable base access is for base-model pre-training only; expert
  /// fine-tuning never calls it.
  [[nodiscard]] CrossAttentionWeights& mutable_base() noexcept { return base_; }

  void set_adapter(std::string expert_id, BiasAdapter adapter);
  [[nodiscard]] const BiasAdapter* adapter(std::string_view expert_id) const;
  [[nodiscard]] BiasAdapter* mutable_adapter(std::string_view expert_id);
  [[nodiscard]] const std::map<std::string, BiasAdapter, std::less<>>& adapters() const noexcept {
    return adapters_;
  }

 private:
  CrossAttentionWeights base_;
  std::map<std::string, BiasAdapter, std::less<>> adapters_;
};

/// W x + scale * up (down x). With `adapter` null this is W x.
[[nodiscard]] std::vector<double> adapted_projection(const Matrix& w, const LowRankPair* adapter,
                                                     double scale, std::span<const double> x);

/// Throws invalid_argument for a negative/non-finite weight, unknown_label for
/// an id without adapter, and invalid_argument when "original" is absent or
/// zero while the remaining weights do not sum to 1.
void validate_expert_weights(const AdaptedAttentionBlock& block, const ExpertWeights& weights);

[[nodiscard]] Matrix attention_forward(const AdaptedAttentionBlock& block,
                                       const ExpertWeights& weights, const Matrix& hidden,
                                       const Matrix& context);

struct AdapterGradients {
  LowRankPair q, k, v, o;

  [[nodiscard]] LowRankPair& pair(Projection p) noexcept;
  [[nodiscard]] const LowRankPair& pair(Projection p) const noexcept;
  static AdapterGradients zeros_like(const BiasAdapter& adapter);
};

struct AttentionGradients {
  /// One entry per non-original expert listed in the weight map.
  std::map<std::string, AdapterGradients, std::less<>> adapters;
  Matrix d_hidden;   // n_x x d_x
  Matrix d_context;  // n_c x d_c
  /// Only filled by attention_backward_with_base().
  std::optional<CrossAttentionWeights> base;
};

/// Gradients of <upstream, forward(X, C)> with respect to every adapter
/// parameter and to the inputs. Base weights are frozen: no base gradient is
/// produced.
[[nodiscard]] AttentionGradients attention_backward(const AdaptedAttentionBlock& block,
                                                    const ExpertWeights& weights,
                                                    const Matrix& hidden, const Matrix& context,
                                                    const Matrix& upstream);

/// As attention_backward, additionally returning base-weight gradients. Used
/// only to pre-train the base model.
[[nodiscard]] AttentionGradients attention_backward_with_base(const AdaptedAttentionBlock& block,
                                                              const ExpertWeights& weights,
                                                              const Matrix& hidden,
                                                              const Matrix& context,
                                                              const Matrix& upstream);

/// adapter parameters / (adapter + base parameters), over every adapter.
[[nodiscard]] double trainable_ratio(const AdaptedAttentionBlock& block);

// BIAS checkpoint: "BIAS", u32 version = 1, u32-length-prefixed UTF-8 expert
// id, u32 d_x, d_c, d_h, rank, f64 scale, then f64 blocks q_down, q_up,
// k_down, k_up, v_down, v_up, o_down, o_up (row-major), little-endian.
inline constexpr std::uint32_t kBiasVersion = 1;

struct AdapterCheckpoint {
  std::string expert_id;
  AttentionDims dims;
  BiasAdapter adapter;
};

[[nodiscard]] std::string encode_adapter(std::string_view expert_id, const AttentionDims& dims,
                                         const BiasAdapter& adapter);
[[nodiscard]] AdapterCheckpoint decode_adapter(std::string_view bytes);
void save_adapter(const std::filesystem::path& path, std::string_view expert_id,
                  const AttentionDims& dims, const BiasAdapter& adapter);
[[nodiscard]] AdapterCheckpoint load_adapter(const std::filesystem::path& path);

}  // namespace fairdiff
