// Copyright 2026 The fairdiff Authors
// SPDX-License-Identifier: Apache-2.0

#include "fairdiff/adapter_attention.hpp"

#include <algorithm>
#include <cmath>

#include "binary_io.hpp"
#include "fairdiff/embedding.hpp"
#include "fairdiff/error.hpp"
#include "fairdiff/kernels.hpp"
#include "fairdiff/rng.hpp"

namespace fairdiff {

std::string_view projection_name(Projection p) noexcept {
  switch (p) {
    case Projection::q:
      return "q";
    case Projection::k:
      return "k";
    case Projection::v:
      return "v";
    case Projection::o:
      return "o";
  }
  return "?";
}

std::pair<std::size_t, std::size_t> projection_shape(const AttentionDims& dims,
                                                     Projection p) noexcept {
  switch (p) {
    case Projection::q:
      return {dims.attention, dims.hidden};
    case Projection::k:
    case Projection::v:
      return {dims.attention, dims.context};
    case Projection::o:
      return {dims.hidden, dims.attention};
  }
  return {0, 0};
}

CrossAttentionWeights CrossAttentionWeights::zeros(const AttentionDims& dims) {
  CrossAttentionWeights w;
  for (auto p : kProjections) {
    const auto [out, in] = projection_shape(dims, p);
    w.get(p) = Matrix(out, in);
  }
  return w;
}

CrossAttentionWeights CrossAttentionWeights::random(const AttentionDims& dims, std::uint64_t seed) {
  auto w = zeros(dims);
  Rng rng(seed);
  for (auto p : kProjections) {
    Matrix& m = w.get(p);
    const double stddev = 1.0 / std::sqrt(static_cast<double>(m.cols()));
    for (auto& v : m.values()) v = rng.normal(0.0, stddev);
  }
  return w;
}

Matrix& CrossAttentionWeights::get(Projection p) noexcept {
  switch (p) {
    case Projection::q:
      return w_q;
    case Projection::k:
      return w_k;
    case Projection::v:
      return w_v;
    case Projection::o:
      break;
  }
  return w_o;
}

const Matrix& CrossAttentionWeights::get(Projection p) const noexcept {
  return const_cast<CrossAttentionWeights*>(this)->get(p);
}

std::size_t CrossAttentionWeights::parameter_count() const noexcept {
  return w_q.size() + w_k.size() + w_v.size() + w_o.size();
}

void CrossAttentionWeights::validate() const {
  const auto d = dims();
  require(d.hidden > 0 && d.context > 0 && d.attention > 0, Errc::dimension_mismatch,
          "attention dimensions must be positive");
  for (auto p : kProjections) {
    const auto [out, in] = projection_shape(d, p);
    const Matrix& m = get(p);
    require(m.rows() == out && m.cols() == in, Errc::dimension_mismatch,
            "w_" + std::string(projection_name(p)) + " has shape " + std::to_string(m.rows()) +
                "x" + std::to_string(m.cols()) + ", expected " + std::to_string(out) + "x" +
                std::to_string(in));
    require(all_finite(m.values()), Errc::non_finite,
            "w_" + std::string(projection_name(p)) + " has non-finite entries");
  }
}

BiasAdapter::BiasAdapter(std::size_t rank, double scale, LowRankPair q, LowRankPair k,
                         LowRankPair v, LowRankPair o)
    : rank_(rank), scale_(scale), q_(std::move(q)), k_(std::move(k)), v_(std::move(v)),
      o_(std::move(o)) {
  require(rank_ >= 1, Errc::invalid_argument, "adapter rank must be >= 1");
  require(std::isfinite(scale_), Errc::invalid_argument, "adapter scale must be finite");
  for (auto p : kProjections) {
    const auto& pr = pair(p);
    require(pr.down.rows() == rank_ && pr.up.cols() == rank_, Errc::dimension_mismatch,
            "adapter " + std::string(projection_name(p)) + " pair does not have rank " +
                std::to_string(rank_));
    require(all_finite(pr.down.values()) && all_finite(pr.up.values()), Errc::non_finite,
            "adapter " + std::string(projection_name(p)) + " has non-finite entries");
  }
}

BiasAdapter BiasAdapter::initialize(const AttentionDims& dims, std::size_t rank,
                                    std::uint64_t seed, std::optional<double> stddev,
                                    std::optional<double> scale) {
  require(rank >= 1, Errc::invalid_argument, "adapter rank must be >= 1");
  const std::size_t limit = std::min({dims.hidden, dims.context, dims.attention});
  require(rank < limit, Errc::invalid_argument,
          "adapter rank " + std::to_string(rank) + " must be below min(d_x, d_c, d_h) = " +
              std::to_string(limit));
  Rng rng(seed);
  LowRankPair pairs[4];
  for (auto p : kProjections) {
    const auto [out, in] = projection_shape(dims, p);
    LowRankPair& pr = pairs[static_cast<int>(p)];
    pr.down = Matrix(rank, in);
    const double sd = stddev.value_or(1.0 / std::sqrt(static_cast<double>(in)));
    for (auto& v : pr.down.values()) v = rng.normal(0.0, sd);
    pr.up = Matrix(out, rank);
  }
  return BiasAdapter(rank, scale.value_or(1.0 / static_cast<double>(rank)), std::move(pairs[0]),
                     std::move(pairs[1]), std::move(pairs[2]), std::move(pairs[3]));
}

LowRankPair& BiasAdapter::pair(Projection p) noexcept {
  switch (p) {
    case Projection::q:
      return q_;
    case Projection::k:
      return k_;
    case Projection::v:
      return v_;
    case Projection::o:
      break;
  }
  return o_;
}

const LowRankPair& BiasAdapter::pair(Projection p) const noexcept {
  return const_cast<BiasAdapter*>(this)->pair(p);
}

std::size_t BiasAdapter::parameter_count() const noexcept {
  std::size_t n = 0;
  for (auto p : kProjections) n += pair(p).down.size() + pair(p).up.size();
  return n;
}

void BiasAdapter::check_dims(const AttentionDims& dims) const {
  for (auto p : kProjections) {
    const auto [out, in] = projection_shape(dims, p);
    const auto& pr = pair(p);
    require(pr.down.cols() == in && pr.up.rows() == out, Errc::dimension_mismatch,
            "adapter " + std::string(projection_name(p)) + " pair does not match block dims");
  }
}

AdaptedAttentionBlock::AdaptedAttentionBlock(CrossAttentionWeights base) : base_(std::move(base)) {
  base_.validate();
}

void AdaptedAttentionBlock::set_adapter(std::string expert_id, BiasAdapter adapter) {
  require(expert_id != kOriginalExpert, Errc::invalid_argument,
          "'original' is reserved for the adapter-free path");
  require(!expert_id.empty(), Errc::invalid_argument, "expert id must be non-empty");
  adapter.check_dims(dims());
  adapters_.insert_or_assign(std::move(expert_id), std::move(adapter));
}

const BiasAdapter* AdaptedAttentionBlock::adapter(std::string_view expert_id) const {
  auto it = adapters_.find(expert_id);
  return it == adapters_.end() ? nullptr : &it->second;
}

BiasAdapter* AdaptedAttentionBlock::mutable_adapter(std::string_view expert_id) {
  auto it = adapters_.find(expert_id);
  return it == adapters_.end() ? nullptr : &it->second;
}

LowRankPair& AdapterGradients::pair(Projection p) noexcept {
  switch (p) {
    case Projection::q:
      return q;
    case Projection::k:
      return k;
    case Projection::v:
      return v;
    case Projection::o:
      break;
  }
  return o;
}

const LowRankPair& AdapterGradients::pair(Projection p) const noexcept {
  return const_cast<AdapterGradients*>(this)->pair(p);
}

AdapterGradients AdapterGradients::zeros_like(const BiasAdapter& adapter) {
  AdapterGradients g;
  for (auto p : kProjections) {
    const auto& pr = adapter.pair(p);
    g.pair(p) = {Matrix(pr.down.rows(), pr.down.cols()), Matrix(pr.up.rows(), pr.up.cols())};
  }
  return g;
}

std::vector<double> adapted_projection(const Matrix& w, const LowRankPair* adapter, double scale,
                                       std::span<const double> x) {
  require(x.size() == w.cols(), Errc::dimension_mismatch,
          "adapted_projection: input length " + std::to_string(x.size()) + ", expected " +
              std::to_string(w.cols()));
  std::vector<double> y(w.rows());
  kernels::gemv(w.values(), w.rows(), w.cols(), x, y);
  if (adapter != nullptr) {
    require(adapter->down.cols() == w.cols() && adapter->up.rows() == w.rows(),
            Errc::dimension_mismatch, "adapted_projection: adapter shape mismatch");
    std::vector<double> low(adapter->down.rows());
    kernels::gemv(adapter->down.values(), adapter->down.rows(), adapter->down.cols(), x, low);
    for (auto& v : low) v *= scale;
    for (std::size_t o = 0; o < y.size(); ++o) y[o] += kernels::dot(adapter->up.row(o), low);
  }
  return y;
}

namespace {

// Rows of X mapped through W' = W + s * U D:  Y = X W^T + s (X D^T) U^T.
// `low` receives X D^T for the backward pass.
Matrix project_rows(const Matrix& x, const Matrix& w, const LowRankPair* pr, double scale,
                    Matrix* low) {
  Matrix y(x.rows(), w.rows());
  for (std::size_t n = 0; n < x.rows(); ++n) {
    kernels::gemv(w.values(), w.rows(), w.cols(), x.row(n), y.row(n));
  }
  if (pr != nullptr) {
    Matrix t(x.rows(), pr->down.rows());
    std::vector<double> scaled(pr->down.rows());
    for (std::size_t n = 0; n < x.rows(); ++n) {
      kernels::gemv(pr->down.values(), pr->down.rows(), pr->down.cols(), x.row(n), t.row(n));
      for (std::size_t j = 0; j < scaled.size(); ++j) scaled[j] = scale * t(n, j);
      // y_n += U (s t_n)
      for (std::size_t o = 0; o < pr->up.rows(); ++o) y(n, o) += kernels::dot(pr->up.row(o), scaled);
    }
    if (low != nullptr) *low = std::move(t);
  }
  return y;
}

// Backward of project_rows for upstream dY. Accumulates into `grad` (adapter
// pair gradient) and `d_w` (base gradient) when non-null; returns dX.
Matrix project_rows_backward(const Matrix& x, const Matrix& w, const LowRankPair* pr, double scale,
                             const Matrix& low, const Matrix& dy, LowRankPair* grad, Matrix* d_w) {
  Matrix dx(x.rows(), x.cols());
  for (std::size_t n = 0; n < x.rows(); ++n) {
    kernels::gemv_transposed_acc(w.values(), w.rows(), w.cols(), dy.row(n), dx.row(n));
    if (d_w != nullptr) kernels::rank1_update(1.0, dy.row(n), x.row(n), d_w->values());
  }
  if (pr != nullptr) {
    const std::size_t rank = pr->down.rows();
    std::vector<double> d_low(rank);
    for (std::size_t n = 0; n < x.rows(); ++n) {
      std::fill(d_low.begin(), d_low.end(), 0.0);
      kernels::gemv_transposed_acc(pr->up.values(), pr->up.rows(), pr->up.cols(), dy.row(n), d_low);
      for (auto& v : d_low) v *= scale;
      if (grad != nullptr) {
        kernels::rank1_update(scale, dy.row(n), low.row(n), grad->up.values());
        kernels::rank1_update(1.0, d_low, x.row(n), grad->down.values());
      }
      kernels::gemv_transposed_acc(pr->down.values(), pr->down.rows(), pr->down.cols(), d_low,
                                   dx.row(n));
    }
  }
  return dx;
}

struct ExpertPass {
  const BiasAdapter* adapter = nullptr;
  double weight = 0.0;
  Matrix q, k, v;
  Matrix low_q, low_k, low_v, low_o;
  Matrix attn;   // n_x x n_c
  Matrix heads;  // n_x x d_h
  Matrix out;    // n_x x d_x
};

const LowRankPair* pair_of(const BiasAdapter* a, Projection p) {
  return a == nullptr ? nullptr : &a->pair(p);
}

double scale_of(const BiasAdapter* a) { return a == nullptr ? 0.0 : a->scale(); }

void run_expert(const CrossAttentionWeights& base, ExpertPass& pass, const Matrix& x,
                const Matrix& c) {
  const BiasAdapter* a = pass.adapter;
  const double s = scale_of(a);
  pass.q = project_rows(x, base.w_q, pair_of(a, Projection::q), s, &pass.low_q);
  pass.k = project_rows(c, base.w_k, pair_of(a, Projection::k), s, &pass.low_k);
  pass.v = project_rows(c, base.w_v, pair_of(a, Projection::v), s, &pass.low_v);

  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(base.w_q.rows()));
  pass.attn = Matrix(x.rows(), c.rows());
  pass.heads = Matrix(x.rows(), base.w_q.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto row = pass.attn.row(i);
    double max_logit = -INFINITY;
    for (std::size_t j = 0; j < c.rows(); ++j) {
      row[j] = kernels::dot(pass.q.row(i), pass.k.row(j)) * inv_sqrt;
      max_logit = std::max(max_logit, row[j]);
    }
    double total = 0.0;
    for (auto& v : row) {
      v = std::exp(v - max_logit);
      total += v;
    }
    for (auto& v : row) v /= total;
    for (std::size_t j = 0; j < c.rows(); ++j) kernels::axpy(row[j], pass.v.row(j), pass.heads.row(i));
  }
  pass.out = project_rows(pass.heads, base.w_o, pair_of(a, Projection::o), s, &pass.low_o);
}

void check_inputs(const AdaptedAttentionBlock& block, const Matrix& x, const Matrix& c) {
  const auto d = block.dims();
  require(x.cols() == d.hidden, Errc::dimension_mismatch,
          "hidden tokens have width " + std::to_string(x.cols()) + ", block expects " +
              std::to_string(d.hidden));
  require(c.cols() == d.context, Errc::dimension_mismatch,
          "conditioning tokens have width " + std::to_string(c.cols()) + ", block expects " +
              std::to_string(d.context));
  require(x.rows() >= 1 && c.rows() >= 1, Errc::invalid_argument,
          "attention needs at least one hidden and one conditioning token");
}

std::vector<ExpertPass> forward_passes(const AdaptedAttentionBlock& block,
                                       const ExpertWeights& weights, const Matrix& x,
                                       const Matrix& c) {
  validate_expert_weights(block, weights);
  check_inputs(block, x, c);
  std::vector<ExpertPass> passes;
  for (const auto& [id, w] : weights) {
    ExpertPass pass;
    pass.adapter = id == kOriginalExpert ? nullptr : block.adapter(id);
    pass.weight = w;
    run_expert(block.base(), pass, x, c);
    passes.push_back(std::move(pass));
  }
  return passes;
}

AttentionGradients backward_impl(const AdaptedAttentionBlock& block, const ExpertWeights& weights,
                                 const Matrix& x, const Matrix& c, const Matrix& upstream,
                                 bool with_base) {
  const auto passes = forward_passes(block, weights, x, c);
  require(upstream.rows() == x.rows() && upstream.cols() == x.cols(), Errc::dimension_mismatch,
          "upstream gradient shape does not match the attention output");
  const auto& base = block.base();
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(base.w_q.rows()));

  AttentionGradients grads;
  grads.d_hidden = Matrix(x.rows(), x.cols());
  grads.d_context = Matrix(c.rows(), c.cols());
  if (with_base) grads.base = CrossAttentionWeights::zeros(block.dims());

  auto it = weights.begin();
  for (const auto& pass : passes) {
    const std::string& id = (it++)->first;
    AdapterGradients* ag = nullptr;
    if (pass.adapter != nullptr) {
      ag = &grads.adapters.emplace(id, AdapterGradients::zeros_like(*pass.adapter)).first->second;
    }
    if (pass.weight == 0.0 && !with_base) continue;

    auto adapter_grad = [&](Projection p) { return ag == nullptr ? nullptr : &ag->pair(p); };
    auto base_grad = [&](Projection p) { return with_base ? &grads.base->get(p) : nullptr; };
    const double s = scale_of(pass.adapter);

    Matrix d_out = upstream;
    for (auto& v : d_out.values()) v *= pass.weight;

    const Matrix d_heads =
        project_rows_backward(pass.heads, base.w_o, pair_of(pass.adapter, Projection::o), s,
                              pass.low_o, d_out, adapter_grad(Projection::o),
                              base_grad(Projection::o));

    Matrix d_q(x.rows(), base.w_q.rows());
    Matrix d_k(c.rows(), base.w_k.rows());
    Matrix d_v(c.rows(), base.w_v.rows());
    std::vector<double> d_attn(c.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) {
      const auto a_row = pass.attn.row(i);
      double weighted = 0.0;
      for (std::size_t j = 0; j < c.rows(); ++j) {
        d_attn[j] = kernels::dot(d_heads.row(i), pass.v.row(j));
        weighted += a_row[j] * d_attn[j];
        kernels::axpy(a_row[j], d_heads.row(i), d_v.row(j));
      }
      for (std::size_t j = 0; j < c.rows(); ++j) {
        const double d_logit = a_row[j] * (d_attn[j] - weighted) * inv_sqrt;
        kernels::axpy(d_logit, pass.k.row(j), d_q.row(i));
        kernels::axpy(d_logit, pass.q.row(i), d_k.row(j));
      }
    }

    const Matrix dx = project_rows_backward(x, base.w_q, pair_of(pass.adapter, Projection::q), s,
                                            pass.low_q, d_q, adapter_grad(Projection::q),
                                            base_grad(Projection::q));
    const Matrix dc_k = project_rows_backward(c, base.w_k, pair_of(pass.adapter, Projection::k), s,
                                              pass.low_k, d_k, adapter_grad(Projection::k),
                                              base_grad(Projection::k));
    const Matrix dc_v = project_rows_backward(c, base.w_v, pair_of(pass.adapter, Projection::v), s,
                                              pass.low_v, d_v, adapter_grad(Projection::v),
                                              base_grad(Projection::v));
    kernels::axpy(1.0, dx.values(), grads.d_hidden.values());
    kernels::axpy(1.0, dc_k.values(), grads.d_context.values());
    kernels::axpy(1.0, dc_v.values(), grads.d_context.values());
  }
  return grads;
}

}  // namespace

void validate_expert_weights(const AdaptedAttentionBlock& block, const ExpertWeights& weights) {
  require(!weights.empty(), Errc::invalid_argument, "expert weight map is empty");
  double others = 0.0;
  double original = 0.0;
  for (const auto& [id, w] : weights) {
    require(std::isfinite(w) && w >= 0.0, Errc::invalid_argument,
            "expert '" + id + "' has invalid weight " + std::to_string(w));
    if (id == kOriginalExpert) {
      original = w;
    } else {
      require(block.adapter(id) != nullptr, Errc::unknown_label,
              "no adapter registered for expert '" + id + "'");
      others += w;
    }
  }
  require(original > 0.0 || std::abs(others - 1.0) <= 1e-12, Errc::invalid_argument,
          "without a positive 'original' weight the expert weights must sum to 1");
}

Matrix attention_forward(const AdaptedAttentionBlock& block, const ExpertWeights& weights,
                         const Matrix& hidden, const Matrix& context) {
  const auto passes = forward_passes(block, weights, hidden, context);
  Matrix out(hidden.rows(), hidden.cols());
  for (const auto& pass : passes) kernels::axpy(pass.weight, pass.out.values(), out.values());
  return out;
}

AttentionGradients attention_backward(const AdaptedAttentionBlock& block,
                                      const ExpertWeights& weights, const Matrix& hidden,
                                      const Matrix& context, const Matrix& upstream) {
  return backward_impl(block, weights, hidden, context, upstream, false);
}

AttentionGradients attention_backward_with_base(const AdaptedAttentionBlock& block,
                                                const ExpertWeights& weights, const Matrix& hidden,
                                                const Matrix& context, const Matrix& upstream) {
  return backward_impl(block, weights, hidden, context, upstream, true);
}

double trainable_ratio(const AdaptedAttentionBlock& block) {
  require(!block.adapters().empty(), Errc::invalid_argument,
          "trainable_ratio needs at least one adapter");
  std::size_t adapter_params = 0;
  for (const auto& [id, a] : block.adapters()) adapter_params += a.parameter_count();
  const std::size_t base_params = block.base().parameter_count();
  return static_cast<double>(adapter_params) / static_cast<double>(adapter_params + base_params);
}

std::string encode_adapter(std::string_view expert_id, const AttentionDims& dims,
                           const BiasAdapter& adapter) {
  adapter.check_dims(dims);
  detail::ByteWriter w;
  w.magic("BIAS");
  w.u32(kBiasVersion);
  w.string(expert_id);
  w.u32(static_cast<std::uint32_t>(dims.hidden));
  w.u32(static_cast<std::uint32_t>(dims.context));
  w.u32(static_cast<std::uint32_t>(dims.attention));
  w.u32(static_cast<std::uint32_t>(adapter.rank()));
  w.f64(adapter.scale());
  for (auto p : kProjections) {
    for (double v : adapter.pair(p).down.values()) w.f64(v);
    for (double v : adapter.pair(p).up.values()) w.f64(v);
  }
  return w.take();
}

AdapterCheckpoint decode_adapter(std::string_view bytes) {
  detail::ByteReader r(bytes, "BIAS");
  r.expect_magic("BIAS");
  const std::uint32_t version = r.u32();
  require(version == kBiasVersion, Errc::version_mismatch,
          "BIAS version " + std::to_string(version) + " (expected 1)");
  std::string id = r.string();
  AttentionDims dims;
  dims.hidden = r.u32();
  dims.context = r.u32();
  dims.attention = r.u32();
  const std::size_t rank = r.u32();
  const double scale = r.f64();
  require(rank >= 1, Errc::invalid_argument, "BIAS rank must be >= 1");
  LowRankPair pairs[4];
  for (auto p : kProjections) {
    const auto [out, in] = projection_shape(dims, p);
    LowRankPair& pr = pairs[static_cast<int>(p)];
    r.need((rank * in + out * rank) * sizeof(double));
    pr.down = Matrix(rank, in);
    for (auto& v : pr.down.values()) v = r.f64();
    pr.up = Matrix(out, rank);
    for (auto& v : pr.up.values()) v = r.f64();
  }
  r.expect_end();
  BiasAdapter adapter(rank, scale, std::move(pairs[0]), std::move(pairs[1]), std::move(pairs[2]),
                      std::move(pairs[3]));
  return {std::move(id), dims, std::move(adapter)};
}

void save_adapter(const std::filesystem::path& path, std::string_view expert_id,
                  const AttentionDims& dims, const BiasAdapter& adapter) {
  write_file_bytes(path, encode_adapter(expert_id, dims, adapter));
}

AdapterCheckpoint load_adapter(const std::filesystem::path& path) {
  return decode_adapter(read_file_bytes(path));
}

}  // namespace fairdiff
