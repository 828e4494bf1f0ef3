// Copyright 2026 The fairdiff Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Desk-scale conditional denoising diffusion.
//
// ToyDenoiser predicts the noise added to a k-dimensional sample:
//
//   u   = [z_t ; time_features(t / T)]
//   H0  = tanh(W_in u + b_in)            reshaped to `tokens` x d_x
//   H1  = tanh(H0 + attention(H0, ctx))  cross-attention with bias adapters
//   eps = W_out vec(H1) + b_out
//
// The conditioning context is the concept embedding, optionally followed by
// a fixed special-token embedding. Base pre-training updates every parameter;
// expert fine-tuning updates one adapter and leaves the rest untouched.
//
// TDEN checkpoint: "TDEN", u32 version = 1, u32 k, time_width, d_c, d_x, d_h,
// tokens, then f64 blocks w_in, b_in, w_q, w_k, w_v, w_o, w_out, b_out
// (row-major, little-endian). Adapters are stored separately as BIAS files.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fairdiff/adapter_attention.hpp"
#include "fairdiff/embedding.hpp"
#include "fairdiff/matrix.hpp"
#include "fairdiff/rng.hpp"
#include "fairdiff/synthetic.hpp"

namespace fairdiff {

class NoiseSchedule {
 public:
  /// Linear betas from beta_min (t = 1) to beta_max (t = T).
  NoiseSchedule(std::size_t steps, double beta_min, double beta_max);
  explicit NoiseSchedule(std::vector<double> betas);

  [[nodiscard]] std::size_t steps() const noexcept { return betas_.size(); }
  /// 1-based timestep.
  [[nodiscard]] double beta(std::size_t t) const;
  [[nodiscard]] double alpha_bar(std::size_t t) const;

 private:
  std::vector<double> betas_;
  std::vector<double> alpha_bars_;
};

/// z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps.
[[nodiscard]] std::vector<double> forward_noise(const NoiseSchedule& schedule,
                                                std::span<const double> z0, std::size_t t,
                                                std::span<const double> eps);

/// sin/cos pairs of (t/T) * pi * 2^j, j = 0 .. width/2 - 1.
[[nodiscard]] std::vector<double> time_features(std::size_t t, std::size_t steps,
                                                std::size_t width);

/// Fixed seeded stand-in for the special token, N(0, 1/d_c) entries.
[[nodiscard]] std::vector<double> special_token_embedding(std::size_t width, std::uint64_t seed);

class ConditioningContext {
 public:
  ConditioningContext(std::span<const double> concept_embedding,
                      std::optional<std::span<const double>> special_token = std::nullopt);

  [[nodiscard]] const Matrix& tokens() const noexcept { return tokens_; }
  [[nodiscard]] bool has_special_token() const noexcept { return tokens_.rows() == 2; }

 private:
  Matrix tokens_;
};

struct DenoiserDims {
  std::size_t k = 2;
  std::size_t time_width = 8;
  std::size_t context = 16;   // d_c
  std::size_t hidden = 16;    // d_x
  std::size_t attention = 8;  // d_h
  std::size_t tokens = 2;

  [[nodiscard]] AttentionDims attention_dims() const noexcept {
    return {hidden, context, attention};
  }
  void validate() const;
  friend bool operator==(const DenoiserDims&, const DenoiserDims&) = default;
};

struct DenoiserGradients {
  Matrix w_in;
  std::vector<double> b_in;
  CrossAttentionWeights attention;
  Matrix w_out;
  std::vector<double> b_out;
  std::map<std::string, AdapterGradients, std::less<>> adapters;
};

/// Which parameters a backward pass differentiates.
enum class GradientScope { base, adapters };

class ToyDenoiser {
 public:
  ToyDenoiser(DenoiserDims dims, Matrix w_in, std::vector<double> b_in,
              CrossAttentionWeights attention, Matrix w_out, std::vector<double> b_out);

  static ToyDenoiser initialize(const DenoiserDims& dims, std::uint64_t seed);

  [[nodiscard]] const DenoiserDims& dims() const noexcept { return dims_; }
  [[nodiscard]] const AdaptedAttentionBlock& attention() const noexcept { return attention_; }
  [[nodiscard]] AdaptedAttentionBlock& attention() noexcept { return attention_; }
  [[nodiscard]] const Matrix& w_in() const noexcept { return w_in_; }
  [[nodiscard]] const std::vector<double>& b_in() const noexcept { return b_in_; }
  [[nodiscard]] const Matrix& w_out() const noexcept { return w_out_; }
  [[nodiscard]] const std::vector<double>& b_out() const noexcept { return b_out_; }

  /// Expert weights default to the base model alone.
  [[nodiscard]] std::vector<double> predict(std::span<const double> z_t, std::size_t t,
                                            std::size_t steps, const ConditioningContext& context,
                                            const ExpertWeights& experts = base_only()) const;

  /// Adds d(loss_scale * ||eps - predict||^2) to `grads` for the chosen scope
  /// and returns ||eps - predict||^2.
  double accumulate_gradients(std::span<const double> z_t, std::size_t t, std::size_t steps,
                              const ConditioningContext& context, const ExpertWeights& experts,
                              std::span<const double> eps, double loss_scale, GradientScope scope,
                              DenoiserGradients& grads) const;

  [[nodiscard]] DenoiserGradients zero_gradients(GradientScope scope,
                                                 const ExpertWeights& experts) const;

  /// params -= lr * grads over the scope. Base scope never touches adapters;
  /// adapter scope never touches base weights.
  void apply_gradients(const DenoiserGradients& grads, double lr, GradientScope scope);

  static const ExpertWeights& base_only();

 private:
  DenoiserDims dims_;
  Matrix w_in_;
  std::vector<double> b_in_;
  AdaptedAttentionBlock attention_;
  Matrix w_out_;
  std::vector<double> b_out_;
};

inline constexpr std::uint32_t kTdenVersion = 1;

[[nodiscard]] std::string encode_denoiser(const ToyDenoiser& model);
[[nodiscard]] ToyDenoiser decode_denoiser(std::string_view bytes);
void save_denoiser(const ToyDenoiser& model, const std::filesystem::path& path);
[[nodiscard]] ToyDenoiser load_denoiser(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Synthetic data world.

struct WorldConcept {
  std::string name;
  std::vector<double> embedding;                // d_c; conditioning input
  std::vector<double> male_variant;             // d_c; gate input
  std::vector<double> female_variant;           // d_c; gate input
  std::vector<std::vector<double>> means;       // one k-vector per attribute
  double p_first = 0.5;                         // probability of attribute 0
};

struct SyntheticWorld {
  AttributeSet attributes = AttributeSet::gender();
  std::vector<WorldConcept> concepts;
  double sigma = 0.1;
  std::size_t k = 4;
  EmbeddingSet pair_rows{2};  // calibration pairs in conditioning space

  /// Checks separability: every pair of attribute means is further apart
  /// than 4 * sigma.
  void validate() const;
};

/// Sample of a concept's attribute cluster: mean + sigma * N(0, I).
[[nodiscard]] std::vector<double> draw_cluster_sample(const SyntheticWorld& world,
                                                      std::size_t concept_index,
                                                      std::size_t attribute, Rng& rng);

/// Nearest attribute mean (Euclidean); exact ties go to the earliest attribute.
[[nodiscard]] std::size_t oracle_classify(const SyntheticWorld& world, std::size_t concept_index,
                                          std::span<const double> sample);

struct ToyWorldConfig {
  std::size_t k = 2;
  std::size_t d_c = 16;
  std::size_t concepts = 20;
  /// Male fraction of the male-skewed concepts. With alternate_skew the odd
  /// concepts use 1 - p_male instead.
  double p_male = 0.8;
  bool alternate_skew = true;
  double sigma_world = 0.1;
  /// Attribute means sit at m_c +/- separation * u for a shared unit u.
  double separation = 1.0;
  /// The part of m_c orthogonal to u is center_scale * M z_c for a fixed
  /// Gaussian M (k x d_c). Along u, m_c offsets the concept's mixing fraction
  /// so that every concept's data mean is orthogonal to u.
  double center_scale = 0.1;
  std::uint64_t seed = 11;
  /// Geometry of the concept embeddings and their gendered variants.
  PlantedGateConfig gate{.skew_min = 0.3, .skew_max = 0.6, .prompt_noise = 0.1};
};

/// Concepts are "concept_00", "concept_01", ...; their embeddings, variants
/// and calibration pairs come from a planted gate world whose ground-truth
/// skew agrees with each concept's majority attribute.
[[nodiscard]] SyntheticWorld make_toy_world(const ToyWorldConfig& config);

// ---------------------------------------------------------------------------
// Loss, training and sampling.

struct TrainingExample {
  std::vector<double> z0;
  ConditioningContext context;
};

struct NoiseDraw {
  std::size_t t = 1;
  std::vector<double> eps;
};

/// One (t, eps) per example: t uniform in [1, T], eps ~ N(0, I_k).
[[nodiscard]] std::vector<NoiseDraw> draw_noise(std::size_t count, std::size_t k,
                                                std::size_t steps, Rng& rng);

using NoisePredictor = std::function<std::vector<double>(
    std::span<const double> z_t, std::size_t t, const ConditioningContext& context)>;

/// mean over the batch of ||eps - predictor(z_t, t, ctx)||^2. Throws
/// divergence on a non-finite value.
[[nodiscard]] double bias_loss(const NoisePredictor& predictor, const NoiseSchedule& schedule,
                               const std::vector<TrainingExample>& batch,
                               const std::vector<NoiseDraw>& draws);

struct TrainingConfig {
  std::size_t steps = 2000;
  std::size_t batch = 32;
  double lr = 1e-3;
  std::uint64_t seed = 7;
};

struct TrainingReport {
  double initial_loss = 0.0;  // on a fixed held-out batch, before training
  double final_loss = 0.0;    // same batch, after training
  std::size_t steps = 0;
};

/// Pre-trains every base parameter on the full world. Each example keeps the
/// special token with probability `token_probability` when a token is given.
[[nodiscard]] TrainingReport pretrain_base(ToyDenoiser& model, const SyntheticWorld& world,
                                           const NoiseSchedule& schedule,
                                           const TrainingConfig& config,
                                           std::optional<std::span<const double>> special_token,
                                           double token_probability);

/// Fine-tunes the adapter registered under `expert_id` on one attribute's
/// clusters across all concepts. An absent adapter is created first with
/// BiasAdapter::initialize(rank, scale) seeded from (config.seed, expert_id).
/// Base weights are never written.
[[nodiscard]] TrainingReport train_expert(ToyDenoiser& model, const std::string& expert_id,
                                          std::size_t rank, std::optional<double> scale,
                                          const SyntheticWorld& world,
                                          std::size_t attribute, const NoiseSchedule& schedule,
                                          const TrainingConfig& config,
                                          std::optional<std::span<const double>> special_token);

/// Held-out evaluation batch of one attribute's clusters (or the full world
/// mixture when attribute is empty).
[[nodiscard]] std::vector<TrainingExample> make_batch(
    const SyntheticWorld& world, std::optional<std::size_t> attribute, std::size_t count,
    std::optional<std::span<const double>> special_token, double token_probability, Rng& rng);

/// Ancestral sampling. Sample i uses the stream derive_seed(seed, i): k
/// normals for z_T, then k normals per step for t = T .. 2; the final step
/// adds no noise.
[[nodiscard]] std::vector<std::vector<double>> sample(const NoisePredictor& predictor,
                                                      const NoiseSchedule& schedule,
                                                      const ConditioningContext& context,
                                                      std::size_t k, std::size_t n,
                                                      std::uint64_t seed, std::size_t threads = 1);

/// Predictor bound to a model and an expert mix.
[[nodiscard]] NoisePredictor make_predictor(const ToyDenoiser& model,
                                            const NoiseSchedule& schedule,
                                            ExpertWeights experts);

}  // namespace fairdiff
