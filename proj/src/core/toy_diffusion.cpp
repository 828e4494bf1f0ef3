// Copyright 2026 The fairdiff Authors
// SPDX-License-Identifier: Apache-2.0

#include "fairdiff/toy_diffusion.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

#include "binary_io.hpp"
#include "fairdiff/error.hpp"
#include "fairdiff/kernels.hpp"
#include "fairdiff/parallel.hpp"

namespace fairdiff {
namespace {

void check_finite(std::span<const double> v, const char* what) {
  if (!all_finite(v)) fail(Errc::divergence, std::string("non-finite ") + what);
}

Matrix gaussian_matrix(std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
  Matrix m(rows, cols);
  for (auto& v : m.values()) v = rng.normal(0.0, stddev);
  return m;
}

void subtract_scaled(std::span<double> params, std::span<const double> grad, double lr) {
  kernels::axpy(-lr, grad, params);
}

void accumulate(LowRankPair& into, const LowRankPair& from) {
  kernels::axpy(1.0, from.down.values(), into.down.values());
  kernels::axpy(1.0, from.up.values(), into.up.values());
}

}  // namespace

// ---------------------------------------------------------------------------

NoiseSchedule::NoiseSchedule(std::size_t steps, double beta_min, double beta_max) {
  require(steps >= 2, Errc::invalid_argument, "noise schedule needs at least 2 steps");
  require(beta_min > 0.0 && beta_max < 1.0 && beta_min <= beta_max, Errc::invalid_argument,
          "noise schedule needs 0 < beta_min <= beta_max < 1");
  std::vector<double> betas(steps);
  for (std::size_t i = 0; i < steps; ++i) {
    const double frac = static_cast<double>(i) / static_cast<double>(steps - 1);
    betas[i] = beta_min + frac * (beta_max - beta_min);
  }
  *this = NoiseSchedule(std::move(betas));
}

NoiseSchedule::NoiseSchedule(std::vector<double> betas) : betas_(std::move(betas)) {
  require(betas_.size() >= 2, Errc::invalid_argument, "noise schedule needs at least 2 steps");
  double running = 1.0;
  for (double b : betas_) {
    require(std::isfinite(b) && b > 0.0 && b < 1.0, Errc::invalid_argument,
            "every beta must lie in (0, 1)");
    running *= 1.0 - b;
    alpha_bars_.push_back(running);
  }
}

double NoiseSchedule::beta(std::size_t t) const {
  require(t >= 1 && t <= steps(), Errc::invalid_argument,
          "timestep " + std::to_string(t) + " outside [1, " + std::to_string(steps()) + "]");
  return betas_[t - 1];
}

double NoiseSchedule::alpha_bar(std::size_t t) const {
  require(t >= 1 && t <= steps(), Errc::invalid_argument,
          "timestep " + std::to_string(t) + " outside [1, " + std::to_string(steps()) + "]");
  return alpha_bars_[t - 1];
}

std::vector<double> forward_noise(const NoiseSchedule& schedule, std::span<const double> z0,
                                  std::size_t t, std::span<const double> eps) {
  require(z0.size() == eps.size(), Errc::dimension_mismatch,
          "forward_noise: z0 and eps lengths differ");
  const double abar = schedule.alpha_bar(t);
  const double a = std::sqrt(abar);
  const double b = std::sqrt(1.0 - abar);
  std::vector<double> out(z0.size());
  for (std::size_t i = 0; i < z0.size(); ++i) out[i] = a * z0[i] + b * eps[i];
  return out;
}

std::vector<double> time_features(std::size_t t, std::size_t steps, std::size_t width) {
  require(width >= 2 && width % 2 == 0, Errc::invalid_argument,
          "time feature width must be even and >= 2");
  require(steps >= 1 && t <= steps, Errc::invalid_argument, "time feature: t outside [0, T]");
  const double x = static_cast<double>(t) / static_cast<double>(steps);
  std::vector<double> out(width);
  double freq = std::numbers::pi;
  for (std::size_t j = 0; j < width / 2; ++j, freq *= 2.0) {
    out[2 * j] = std::sin(freq * x);
    out[2 * j + 1] = std::cos(freq * x);
  }
  return out;
}

std::vector<double> special_token_embedding(std::size_t width, std::uint64_t seed) {
  require(width >= 1, Errc::invalid_argument, "special token width must be positive");
  Rng rng(seed);
  std::vector<double> v(width);
  const double stddev = 1.0 / std::sqrt(static_cast<double>(width));
  for (auto& x : v) x = rng.normal(0.0, stddev);
  return v;
}

ConditioningContext::ConditioningContext(std::span<const double> concept_embedding,
                                         std::optional<std::span<const double>> special_token)
    : tokens_(special_token ? 2 : 1, concept_embedding.size()) {
  require(!concept_embedding.empty(), Errc::invalid_argument, "concept embedding is empty");
  require(all_finite(concept_embedding), Errc::non_finite, "concept embedding has a non-finite entry");
  std::copy(concept_embedding.begin(), concept_embedding.end(), tokens_.row(0).begin());
  if (special_token) {
    require(special_token->size() == concept_embedding.size(), Errc::dimension_mismatch,
            "special token width differs from the concept embedding");
    std::copy(special_token->begin(), special_token->end(), tokens_.row(1).begin());
  }
}

// ---------------------------------------------------------------------------

void DenoiserDims::validate() const {
  require(k >= 1, Errc::invalid_argument, "denoiser width k must be positive");
  require(time_width >= 2 && time_width % 2 == 0, Errc::invalid_argument,
          "time embedding width must be even and >= 2");
  require(context >= 1 && hidden >= 1 && attention >= 1 && tokens >= 1, Errc::invalid_argument,
          "denoiser dims must be positive");
}

namespace {

// Activations of one forward pass, kept for the backward pass.
struct DenoiserPass {
  std::vector<double> input;
  Matrix h0;
  Matrix h1;
  std::vector<double> out;
};

}  // namespace

ToyDenoiser::ToyDenoiser(DenoiserDims dims, Matrix w_in, std::vector<double> b_in,
                         CrossAttentionWeights attention, Matrix w_out, std::vector<double> b_out)
    : dims_(dims),
      w_in_(std::move(w_in)),
      b_in_(std::move(b_in)),
      attention_(std::move(attention)),
      w_out_(std::move(w_out)),
      b_out_(std::move(b_out)) {
  dims_.validate();
  const std::size_t flat = dims_.tokens * dims_.hidden;
  require(w_in_.rows() == flat && w_in_.cols() == dims_.k + dims_.time_width &&
              b_in_.size() == flat && w_out_.rows() == dims_.k && w_out_.cols() == flat &&
              b_out_.size() == dims_.k,
          Errc::dimension_mismatch, "denoiser affine layers do not match the declared dims");
  require(attention_.dims() == dims_.attention_dims(), Errc::dimension_mismatch,
          "denoiser attention block does not match the declared dims");
  attention_.base().validate();
  require(all_finite(w_in_.values()) && all_finite(b_in_) && all_finite(w_out_.values()) &&
              all_finite(b_out_),
          Errc::non_finite, "denoiser parameters contain a non-finite value");
}

ToyDenoiser ToyDenoiser::initialize(const DenoiserDims& dims, std::uint64_t seed) {
  dims.validate();
  Rng rng(seed);
  const std::size_t flat = dims.tokens * dims.hidden;
  const std::size_t in = dims.k + dims.time_width;
  Matrix w_in = gaussian_matrix(flat, in, 1.0 / std::sqrt(static_cast<double>(in)), rng);
  Matrix w_out = gaussian_matrix(dims.k, flat, 1.0 / std::sqrt(static_cast<double>(flat)), rng);
  return ToyDenoiser(dims, std::move(w_in), std::vector<double>(flat),
                     CrossAttentionWeights::random(dims.attention_dims(), derive_seed(seed, 1)),
                     std::move(w_out), std::vector<double>(dims.k));
}

const ExpertWeights& ToyDenoiser::base_only() {
  static const ExpertWeights weights{{std::string(kOriginalExpert), 1.0}};
  return weights;
}

namespace {

DenoiserPass run_forward(const ToyDenoiser& model, std::span<const double> z_t, std::size_t t,
                         std::size_t steps, const ConditioningContext& context,
                         const ExpertWeights& experts) {
  const auto& d = model.dims();
  require(z_t.size() == d.k, Errc::dimension_mismatch,
          "denoiser input has length " + std::to_string(z_t.size()) + ", expected " +
              std::to_string(d.k));
  require(t >= 1 && t <= steps, Errc::invalid_argument, "denoiser timestep outside [1, T]");

  DenoiserPass pass;
  pass.input.assign(z_t.begin(), z_t.end());
  const auto tf = time_features(t, steps, d.time_width);
  pass.input.insert(pass.input.end(), tf.begin(), tf.end());

  pass.h0 = Matrix(d.tokens, d.hidden);
  kernels::gemv(model.w_in().values(), model.w_in().rows(), model.w_in().cols(), pass.input,
                pass.h0.values());
  auto h0 = pass.h0.values();
  for (std::size_t i = 0; i < h0.size(); ++i) h0[i] = std::tanh(h0[i] + model.b_in()[i]);

  pass.h1 = attention_forward(model.attention(), experts, pass.h0, context.tokens());
  auto h1 = pass.h1.values();
  for (std::size_t i = 0; i < h1.size(); ++i) h1[i] = std::tanh(h1[i] + h0[i]);

  pass.out = model.b_out();
  std::vector<double> lin(d.k);
  kernels::gemv(model.w_out().values(), model.w_out().rows(), model.w_out().cols(), h1, lin);
  kernels::axpy(1.0, lin, pass.out);
  check_finite(pass.out, "denoiser output");
  return pass;
}

}  // namespace

std::vector<double> ToyDenoiser::predict(std::span<const double> z_t, std::size_t t,
                                         std::size_t steps, const ConditioningContext& context,
                                         const ExpertWeights& experts) const {
  return run_forward(*this, z_t, t, steps, context, experts).out;
}

DenoiserGradients ToyDenoiser::zero_gradients(GradientScope scope,
                                              const ExpertWeights& experts) const {
  DenoiserGradients g;
  if (scope == GradientScope::base) {
    g.w_in = Matrix(w_in_.rows(), w_in_.cols());
    g.b_in.assign(b_in_.size(), 0.0);
    g.attention = CrossAttentionWeights::zeros(dims_.attention_dims());
    g.w_out = Matrix(w_out_.rows(), w_out_.cols());
    g.b_out.assign(b_out_.size(), 0.0);
  } else {
    for (const auto& [id, w] : experts) {
      if (id == kOriginalExpert) continue;
      const BiasAdapter* a = attention_.adapter(id);
      require(a != nullptr, Errc::unknown_label, "no adapter registered for expert '" + id + "'");
      g.adapters.emplace(id, AdapterGradients::zeros_like(*a));
    }
  }
  return g;
}

double ToyDenoiser::accumulate_gradients(std::span<const double> z_t, std::size_t t,
                                         std::size_t steps, const ConditioningContext& context,
                                         const ExpertWeights& experts,
                                         std::span<const double> eps, double loss_scale,
                                         GradientScope scope, DenoiserGradients& grads) const {
  require(eps.size() == dims_.k, Errc::dimension_mismatch, "target noise has the wrong length");
  const DenoiserPass pass = run_forward(*this, z_t, t, steps, context, experts);

  std::vector<double> g_out(dims_.k);
  double loss = 0.0;
  for (std::size_t i = 0; i < dims_.k; ++i) {
    const double r = pass.out[i] - eps[i];
    loss += r * r;
    g_out[i] = 2.0 * loss_scale * r;
  }
  if (!std::isfinite(loss)) fail(Errc::divergence, "non-finite training loss");

  const std::size_t flat = dims_.tokens * dims_.hidden;
  const auto h1 = pass.h1.values();
  if (scope == GradientScope::base) {
    kernels::rank1_update(1.0, g_out, h1, grads.w_out.values());
    kernels::axpy(1.0, g_out, grads.b_out);
  }

  // Through H1 = tanh(H0 + A).
  Matrix d_sum(dims_.tokens, dims_.hidden);
  kernels::gemv_transposed_acc(w_out_.values(), w_out_.rows(), w_out_.cols(), g_out,
                               d_sum.values());
  auto ds = d_sum.values();
  for (std::size_t i = 0; i < flat; ++i) ds[i] *= 1.0 - h1[i] * h1[i];

  const AttentionGradients ag =
      scope == GradientScope::base
          ? attention_backward_with_base(attention_, experts, pass.h0, context.tokens(), d_sum)
          : attention_backward(attention_, experts, pass.h0, context.tokens(), d_sum);

  if (scope == GradientScope::adapters) {
    for (const auto& [id, g] : ag.adapters) {
      auto it = grads.adapters.find(id);
      require(it != grads.adapters.end(), Errc::invalid_argument,
              "gradient buffer has no slot for expert '" + id + "'");
      for (auto p : kProjections) accumulate(it->second.pair(p), g.pair(p));
    }
    return loss;
  }

  for (auto p : kProjections)
    kernels::axpy(1.0, ag.base->get(p).values(), grads.attention.get(p).values());

  // Through H0 = tanh(W_in u + b_in), which feeds both the residual and attention.
  std::vector<double> d_pre(flat);
  const auto h0 = pass.h0.values();
  const auto dh = ag.d_hidden.values();
  for (std::size_t i = 0; i < flat; ++i) d_pre[i] = (ds[i] + dh[i]) * (1.0 - h0[i] * h0[i]);
  kernels::rank1_update(1.0, d_pre, pass.input, grads.w_in.values());
  kernels::axpy(1.0, d_pre, grads.b_in);
  return loss;
}

void ToyDenoiser::apply_gradients(const DenoiserGradients& grads, double lr, GradientScope scope) {
  if (scope == GradientScope::base) {
    subtract_scaled(w_in_.values(), grads.w_in.values(), lr);
    subtract_scaled(b_in_, grads.b_in, lr);
    for (auto p : kProjections)
      subtract_scaled(attention_.mutable_base().get(p).values(), grads.attention.get(p).values(),
                      lr);
    subtract_scaled(w_out_.values(), grads.w_out.values(), lr);
    subtract_scaled(b_out_, grads.b_out, lr);
    return;
  }
  for (const auto& [id, g] : grads.adapters) {
    BiasAdapter* a = attention_.mutable_adapter(id);
    require(a != nullptr, Errc::unknown_label, "no adapter registered for expert '" + id + "'");
    for (auto p : kProjections) {
      subtract_scaled(a->pair(p).down.values(), g.pair(p).down.values(), lr);
      subtract_scaled(a->pair(p).up.values(), g.pair(p).up.values(), lr);
    }
  }
}

// ---------------------------------------------------------------------------
// TDEN checkpoint.

std::string encode_denoiser(const ToyDenoiser& model) {
  const auto& d = model.dims();
  detail::ByteWriter w;
  w.magic("TDEN");
  w.u32(kTdenVersion);
  for (std::size_t v : {d.k, d.time_width, d.context, d.hidden, d.attention, d.tokens})
    w.u32(static_cast<std::uint32_t>(v));
  auto block = [&](std::span<const double> values) {
    for (double v : values) w.f64(v);
  };
  const auto& base = model.attention().base();
  block(model.w_in().values());
  block(model.b_in());
  block(base.w_q.values());
  block(base.w_k.values());
  block(base.w_v.values());
  block(base.w_o.values());
  block(model.w_out().values());
  block(model.b_out());
  return w.take();
}

ToyDenoiser decode_denoiser(std::string_view bytes) {
  detail::ByteReader r(bytes, "TDEN");
  r.expect_magic("TDEN");
  const auto version = r.u32();
  require(version == kTdenVersion, Errc::version_mismatch,
          "TDEN version " + std::to_string(version) + " is not supported");
  DenoiserDims d;
  d.k = r.u32();
  d.time_width = r.u32();
  d.context = r.u32();
  d.hidden = r.u32();
  d.attention = r.u32();
  d.tokens = r.u32();
  d.validate();

  auto matrix = [&](std::size_t rows, std::size_t cols) {
    r.need(rows * cols * 8);
    Matrix m(rows, cols);
    for (auto& v : m.values()) v = r.f64();
    return m;
  };
  auto vector = [&](std::size_t n) {
    r.need(n * 8);
    std::vector<double> v(n);
    for (auto& x : v) x = r.f64();
    return v;
  };
  const std::size_t flat = d.tokens * d.hidden;
  Matrix w_in = matrix(flat, d.k + d.time_width);
  auto b_in = vector(flat);
  CrossAttentionWeights att;
  att.w_q = matrix(d.attention, d.hidden);
  att.w_k = matrix(d.attention, d.context);
  att.w_v = matrix(d.attention, d.context);
  att.w_o = matrix(d.hidden, d.attention);
  Matrix w_out = matrix(d.k, flat);
  auto b_out = vector(d.k);
  r.expect_end();
  return ToyDenoiser(d, std::move(w_in), std::move(b_in), std::move(att), std::move(w_out),
                     std::move(b_out));
}

void save_denoiser(const ToyDenoiser& model, const std::filesystem::path& path) {
  write_file_bytes(path, encode_denoiser(model));
}

ToyDenoiser load_denoiser(const std::filesystem::path& path) {
  return decode_denoiser(read_file_bytes(path));
}

// ---------------------------------------------------------------------------
// Synthetic world.

void SyntheticWorld::validate() const {
  require(!concepts.empty(), Errc::invalid_argument, "synthetic world has no concepts");
  require(std::isfinite(sigma) && sigma > 0.0, Errc::invalid_argument,
          "world noise sigma must be positive");
  const std::size_t d_c = concepts.front().embedding.size();
  for (const auto& c : concepts) {
    require(c.embedding.size() == d_c && c.male_variant.size() == d_c &&
                c.female_variant.size() == d_c,
            Errc::dimension_mismatch, "concept '" + c.name + "' has inconsistent embedding widths");
    require(c.means.size() == attributes.size(), Errc::invalid_argument,
            "concept '" + c.name + "' needs one mean per attribute");
    require(c.p_first >= 0.0 && c.p_first <= 1.0, Errc::invalid_argument,
            "concept '" + c.name + "' has a mixing fraction outside [0, 1]");
    for (const auto& m : c.means)
      require(m.size() == k, Errc::dimension_mismatch,
              "concept '" + c.name + "' has a mean of the wrong width");
    for (std::size_t a = 0; a < c.means.size(); ++a)
      for (std::size_t b = a + 1; b < c.means.size(); ++b)
        require(std::sqrt(kernels::squared_distance(c.means[a], c.means[b])) > 4.0 * sigma,
                Errc::invalid_argument,
                "concept '" + c.name + "' has attribute clusters closer than 4 sigma");
  }
}

std::vector<double> draw_cluster_sample(const SyntheticWorld& world, std::size_t concept_index,
                                        std::size_t attribute, Rng& rng) {
  const auto& mean = world.concepts.at(concept_index).means.at(attribute);
  std::vector<double> out(mean.size());
  for (std::size_t i = 0; i < mean.size(); ++i) out[i] = mean[i] + world.sigma * rng.normal();
  return out;
}

std::size_t oracle_classify(const SyntheticWorld& world, std::size_t concept_index,
                            std::span<const double> sample) {
  const auto& means = world.concepts.at(concept_index).means;
  std::size_t best = 0;
  double best_d = kernels::squared_distance(means[0], sample);
  for (std::size_t a = 1; a < means.size(); ++a) {
    const double d = kernels::squared_distance(means[a], sample);
    if (d < best_d) {
      best = a;
      best_d = d;
    }
  }
  return best;
}

SyntheticWorld make_toy_world(const ToyWorldConfig& config) {
  require(config.concepts >= 1, Errc::invalid_argument, "toy world needs at least one concept");
  require(config.p_male >= 0.0 && config.p_male <= 1.0, Errc::invalid_argument,
          "p_male must lie in [0, 1]");
  require(config.k >= 1 && config.d_c >= 2, Errc::invalid_argument,
          "toy world needs k >= 1 and d_c >= 2");
  Rng rng(config.seed);

  std::vector<std::string> names;
  std::vector<double> p_first;
  std::vector<double> skews;
  for (std::size_t i = 0; i < config.concepts; ++i) {
    char label[32];
    std::snprintf(label, sizeof label, "concept_%02zu", i);
    names.emplace_back(label);
    const double p = config.alternate_skew && i % 2 == 1 ? 1.0 - config.p_male : config.p_male;
    p_first.push_back(p);
    const double magnitude = rng.uniform(config.gate.skew_min, config.gate.skew_max);
    skews.push_back(p >= 0.5 ? magnitude : -magnitude);
  }

  PlantedGateConfig gate = config.gate;
  gate.dim = config.d_c;
  gate.seed = derive_seed(config.seed, 1);
  PlantedGateWorld planted = make_planted_gate_world(gate, names, skews);

  std::vector<double> u(config.k);
  for (auto& x : u) x = rng.normal();
  const double norm = std::sqrt(kernels::dot(u, u));
  for (auto& x : u) x /= norm;
  const Matrix mix = gaussian_matrix(config.k, config.d_c, 1.0, rng);

  SyntheticWorld world;
  world.sigma = config.sigma_world;
  world.k = config.k;
  world.pair_rows = planted.pair_rows;
  for (std::size_t i = 0; i < config.concepts; ++i) {
    WorldConcept c;
    c.name = names[i];
    const auto& z = planted.prompts.vector(i).values();
    c.embedding.assign(z.begin(), z.end());
    const auto& zm = planted.male.vector(i).values();
    const auto& zf = planted.female.vector(i).values();
    c.male_variant.assign(zm.begin(), zm.end());
    c.female_variant.assign(zf.begin(), zf.end());
    // The concept's mixture mean has no component along u.
    std::vector<double> center(config.k);
    kernels::gemv(mix.values(), mix.rows(), mix.cols(), c.embedding, center);
    for (auto& x : center) x *= config.center_scale;
    kernels::axpy(-kernels::dot(center, u), u, center);
    kernels::axpy(-(2.0 * p_first[i] - 1.0) * config.separation, u, center);
    auto male = center;
    auto female = center;
    kernels::axpy(config.separation, u, male);
    kernels::axpy(-config.separation, u, female);
    c.means = {std::move(male), std::move(female)};
    c.p_first = p_first[i];
    world.concepts.push_back(std::move(c));
  }
  world.validate();
  return world;
}

// ---------------------------------------------------------------------------
// Loss, training and sampling.

std::vector<NoiseDraw> draw_noise(std::size_t count, std::size_t k, std::size_t steps, Rng& rng) {
  std::vector<NoiseDraw> draws(count);
  for (auto& d : draws) {
    d.t = 1 + rng.index(steps);
    d.eps.resize(k);
    for (auto& x : d.eps) x = rng.normal();
  }
  return draws;
}

double bias_loss(const NoisePredictor& predictor, const NoiseSchedule& schedule,
                 const std::vector<TrainingExample>& batch, const std::vector<NoiseDraw>& draws) {
  require(!batch.empty(), Errc::invalid_argument, "bias_loss needs a non-empty batch");
  require(batch.size() == draws.size(), Errc::invalid_argument,
          "bias_loss needs one noise draw per example");
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto z_t = forward_noise(schedule, batch[i].z0, draws[i].t, draws[i].eps);
    const auto pred = predictor(z_t, draws[i].t, batch[i].context);
    require(pred.size() == draws[i].eps.size(), Errc::dimension_mismatch,
            "predictor output has the wrong length");
    check_finite(pred, "noise prediction");
    total += kernels::squared_distance(pred, draws[i].eps);
  }
  const double loss = total / static_cast<double>(batch.size());
  if (!std::isfinite(loss)) fail(Errc::divergence, "non-finite loss");
  return loss;
}

std::vector<TrainingExample> make_batch(const SyntheticWorld& world,
                                        std::optional<std::size_t> attribute, std::size_t count,
                                        std::optional<std::span<const double>> special_token,
                                        double token_probability, Rng& rng) {
  std::vector<TrainingExample> batch;
  batch.reserve(count);
  const std::size_t n_attr = world.attributes.size();
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t c = rng.index(world.concepts.size());
    const auto& entry = world.concepts[c];
    std::size_t a = 0;
    const double coin = rng.uniform();
    if (attribute) {
      a = *attribute;
    } else if (coin >= entry.p_first) {
      a = n_attr == 2 ? 1 : 1 + rng.index(n_attr - 1);
    }
    auto z0 = draw_cluster_sample(world, c, a, rng);
    const bool with_token = special_token.has_value() && rng.uniform() < token_probability;
    batch.push_back({std::move(z0), ConditioningContext(entry.embedding,
                                                        with_token ? special_token : std::nullopt)});
  }
  return batch;
}

NoisePredictor make_predictor(const ToyDenoiser& model, const NoiseSchedule& schedule,
                              ExpertWeights experts) {
  validate_expert_weights(model.attention(), experts);
  const std::size_t steps = schedule.steps();
  return [&model, steps, experts = std::move(experts)](
             std::span<const double> z_t, std::size_t t, const ConditioningContext& ctx) {
    return model.predict(z_t, t, steps, ctx, experts);
  };
}

namespace {

constexpr std::size_t kHeldOutExamples = 512;

using BatchSource = std::function<std::vector<TrainingExample>(std::size_t, Rng&)>;

TrainingReport run_training(ToyDenoiser& model, const ExpertWeights& experts, GradientScope scope,
                            const NoiseSchedule& schedule, const TrainingConfig& config,
                            const BatchSource& source) {
  require(config.batch >= 1, Errc::invalid_argument, "training batch size must be positive");
  require(std::isfinite(config.lr) && config.lr > 0.0, Errc::invalid_argument,
          "learning rate must be positive");
  const std::size_t k = model.dims().k;
  const std::size_t steps = schedule.steps();

  Rng held_rng(derive_seed(config.seed, 0xe7a1));
  const auto held = source(kHeldOutExamples, held_rng);
  const auto held_draws = draw_noise(held.size(), k, steps, held_rng);
  auto held_loss = [&] {
    return bias_loss(make_predictor(model, schedule, experts), schedule, held, held_draws);
  };

  TrainingReport report;
  report.initial_loss = held_loss();
  Rng rng(derive_seed(config.seed, 0x7a1));
  const double scale = 1.0 / static_cast<double>(config.batch);
  for (std::size_t step = 0; step < config.steps; ++step) {
    const auto batch = source(config.batch, rng);
    const auto draws = draw_noise(batch.size(), k, steps, rng);
    auto grads = model.zero_gradients(scope, experts);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const auto z_t = forward_noise(schedule, batch[i].z0, draws[i].t, draws[i].eps);
      (void)model.accumulate_gradients(z_t, draws[i].t, steps, batch[i].context, experts,
                                       draws[i].eps, scale, scope, grads);
    }
    model.apply_gradients(grads, config.lr, scope);
  }
  report.steps = config.steps;
  report.final_loss = held_loss();
  return report;
}

}  // namespace

TrainingReport pretrain_base(ToyDenoiser& model, const SyntheticWorld& world,
                             const NoiseSchedule& schedule, const TrainingConfig& config,
                             std::optional<std::span<const double>> special_token,
                             double token_probability) {
  world.validate();
  require(world.k == model.dims().k, Errc::dimension_mismatch,
          "world sample width differs from the denoiser width");
  return run_training(model, ToyDenoiser::base_only(), GradientScope::base, schedule, config,
                      [&](std::size_t n, Rng& rng) {
                        return make_batch(world, std::nullopt, n, special_token,
                                          token_probability, rng);
                      });
}

TrainingReport train_expert(ToyDenoiser& model, const std::string& expert_id, std::size_t rank,
                            std::optional<double> scale, const SyntheticWorld& world, std::size_t attribute,
                            const NoiseSchedule& schedule, const TrainingConfig& config,
                            std::optional<std::span<const double>> special_token) {
  world.validate();
  require(world.k == model.dims().k, Errc::dimension_mismatch,
          "world sample width differs from the denoiser width");
  require(attribute < world.attributes.size(), Errc::invalid_argument,
          "attribute index out of range");
  require(expert_id != kOriginalExpert, Errc::invalid_argument,
          "the original expert has no adapter to train");
  if (model.attention().adapter(expert_id) == nullptr) {
    model.attention().set_adapter(
        expert_id, BiasAdapter::initialize(model.dims().attention_dims(), rank,
                                           derive_seed(config.seed, fnv1a64(expert_id)), {},
                                           scale));
  }
  const ExpertWeights experts{{expert_id, 1.0}};
  return run_training(model, experts, GradientScope::adapters, schedule, config,
                      [&](std::size_t n, Rng& rng) {
                        return make_batch(world, attribute, n, special_token, 1.0, rng);
                      });
}

std::vector<std::vector<double>> sample(const NoisePredictor& predictor,
                                        const NoiseSchedule& schedule,
                                        const ConditioningContext& context, std::size_t k,
                                        std::size_t n, std::uint64_t seed, std::size_t threads) {
  std::vector<std::vector<double>> out(n);
  const std::size_t steps = schedule.steps();
  parallel_for(n, threads, [&](std::size_t i) {
    Rng rng(derive_seed(seed, i));
    std::vector<double> z(k);
    for (auto& x : z) x = rng.normal();
    for (std::size_t t = steps; t >= 1; --t) {
      const double beta = schedule.beta(t);
      const double coef = beta / std::sqrt(1.0 - schedule.alpha_bar(t));
      const double inv = 1.0 / std::sqrt(1.0 - beta);
      const auto eps = predictor(z, t, context);
      require(eps.size() == k, Errc::dimension_mismatch, "predictor output has the wrong length");
      for (std::size_t j = 0; j < k; ++j) z[j] = inv * (z[j] - coef * eps[j]);
      if (t > 1) {
        const double sd = std::sqrt(beta);
        for (auto& x : z) x += sd * rng.normal();
      }
      check_finite(z, "sample");
    }
    out[i] = std::move(z);
  });
  return out;
}

}  // namespace fairdiff
