// Copyright 2026 The fairdiff Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fairdiff/adapter_attention.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace fairdiff {
namespace {

using testing::error_code;

constexpr AttentionDims kDims{6, 5, 4};

void randomise(std::mt19937_64& rng, BiasAdapter& a, double sd = 0.5) {
  for (Projection p : kProjections) {
    for (auto& x : a.pair(p).down.values()) x = testing::random_vector(rng, 1, sd)[0];
    for (auto& x : a.pair(p).up.values()) x = testing::random_vector(rng, 1, sd)[0];
  }
}

double inner(const Matrix& a, const Matrix& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.values()[i] * b.values()[i];
  return s;
}

TEST(Projection, ZeroUpIsBaseAndRankOneIsDense) {
  std::mt19937_64 rng(1);
  const Matrix w = testing::random_matrix(rng, 4, 6);
  const auto x = testing::random_vector(rng, 6);
  const auto adapter = BiasAdapter::initialize(kDims, 2, 5);
  const auto base = adapted_projection(w, nullptr, 1.0, x);
  EXPECT_EQ(adapted_projection(w, &adapter.pair(Projection::q), 0.5, x), base);
  const auto zero = adapted_projection(w, &adapter.pair(Projection::q), 0.5,
                                       std::vector<double>(6, 0.0));
  for (double v : zero) EXPECT_EQ(v, 0.0);

  LowRankPair r1{testing::random_matrix(rng, 1, 6), testing::random_matrix(rng, 4, 1)};
  Matrix dense = w;
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 6; ++j) dense(i, j) += r1.up(i, 0) * r1.down(0, j);
  const auto got = adapted_projection(w, &r1, 1.0, x);
  for (std::size_t i = 0; i < 4; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < 6; ++j) s += dense(i, j) * x[j];
    EXPECT_NEAR(got[i], s, 1e-13);
  }
}

TEST(Adapter, InitialisationContract) {
  const auto a = BiasAdapter::initialize(kDims, 2, 42);
  EXPECT_EQ(a.rank(), 2u);
  EXPECT_DOUBLE_EQ(a.scale(), 0.5);
  for (Projection p : kProjections) {
    const auto [out, in] = projection_shape(kDims, p);
    EXPECT_EQ(a.pair(p).down.rows(), 2u);
    EXPECT_EQ(a.pair(p).down.cols(), in);
    EXPECT_EQ(a.pair(p).up.rows(), out);
    for (double v : a.pair(p).up.values()) EXPECT_EQ(v, 0.0);
    double sq = 0.0;
    for (double v : a.pair(p).down.values()) sq += v * v;
    EXPECT_GT(sq, 0.0);
  }
  EXPECT_EQ(a, BiasAdapter::initialize(kDims, 2, 42));
  EXPECT_NE(a, BiasAdapter::initialize(kDims, 2, 43));
  const auto custom = BiasAdapter::initialize(kDims, 1, 42, 0.02, 3.0);
  EXPECT_DOUBLE_EQ(custom.scale(), 3.0);
  EXPECT_ANY_THROW((void)BiasAdapter::initialize(kDims, 0, 1));
  EXPECT_ANY_THROW((void)BiasAdapter::initialize(kDims, 4, 1));  // rank < min(6, 5, 4)
}

TEST(Adapter, DefaultStddevIsInverseSqrtFanIn) {
  const AttentionDims big{64, 64, 64};
  const auto a = BiasAdapter::initialize(big, 8, 3);
  double sq = 0.0;
  const auto& d = a.pair(Projection::q).down;
  for (double v : d.values()) sq += v * v;
  EXPECT_NEAR(std::sqrt(sq / static_cast<double>(d.size())), 1.0 / 8.0, 0.01);
}

TEST(Attention, FreshExpertsReproduceBase) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    AdaptedAttentionBlock block(CrossAttentionWeights::random(kDims, 100 + trial));
    block.set_adapter("male", BiasAdapter::initialize(kDims, 2, 1));
    block.set_adapter("female", BiasAdapter::initialize(kDims, 3, 2));
    const Matrix x = testing::random_matrix(rng, 3, 6);
    const Matrix c = testing::random_matrix(rng, 2, 5);
    const Matrix base = attention_forward(block, {{"original", 1.0}}, x, c);
    const Matrix mixed =
        attention_forward(block, {{"original", 0.4}, {"male", 0.1}, {"female", 0.5}}, x, c);
    for (std::size_t i = 0; i < base.size(); ++i)
      EXPECT_NEAR(mixed.values()[i], base.values()[i], 1e-12);
  }
}

TEST(Attention, PlainForwardMatchesDirectSoftmax) {
  std::mt19937_64 rng(3);
  AdaptedAttentionBlock block(CrossAttentionWeights::random(kDims, 9));
  const Matrix x = testing::random_matrix(rng, 3, 6);
  const Matrix c = testing::random_matrix(rng, 2, 5);
  const auto& w = block.base();
  const Matrix q = matmul(x, transpose(w.w_q));
  const Matrix k = matmul(c, transpose(w.w_k));
  const Matrix v = matmul(c, transpose(w.w_v));
  Matrix s = matmul(q, transpose(k));
  for (std::size_t i = 0; i < s.rows(); ++i) {
    double mx = -1e300, z = 0.0;
    for (std::size_t j = 0; j < s.cols(); ++j) mx = std::max(mx, s(i, j) / 2.0);
    for (std::size_t j = 0; j < s.cols(); ++j) z += std::exp(s(i, j) / 2.0 - mx);
    for (std::size_t j = 0; j < s.cols(); ++j) s(i, j) = std::exp(s(i, j) / 2.0 - mx) / z;
  }
  const Matrix expected = matmul(matmul(s, v), transpose(w.w_o));
  const Matrix got = attention_forward(block, {{"original", 1.0}}, x, c);
  for (std::size_t i = 0; i < got.size(); ++i)
    EXPECT_NEAR(got.values()[i], expected.values()[i], 1e-13);
}

TEST(Attention, MixIsConvexCombinationOfExperts) {
  std::mt19937_64 rng(4);
  AdaptedAttentionBlock block(CrossAttentionWeights::random(kDims, 5));
  auto male = BiasAdapter::initialize(kDims, 2, 1);
  auto female = BiasAdapter::initialize(kDims, 2, 2);
  randomise(rng, male);
  randomise(rng, female);
  block.set_adapter("male", male);
  block.set_adapter("female", female);
  const Matrix x = testing::random_matrix(rng, 3, 6);
  const Matrix c = testing::random_matrix(rng, 2, 5);
  const Matrix o = attention_forward(block, {{"original", 1.0}}, x, c);
  const Matrix m = attention_forward(block, {{"male", 1.0}}, x, c);
  const Matrix f = attention_forward(block, {{"female", 1.0}}, x, c);
  const Matrix mix =
      attention_forward(block, {{"original", 0.4}, {"male", 0.1}, {"female", 0.5}}, x, c);
  for (std::size_t i = 0; i < mix.size(); ++i) {
    const double expected = 0.4 * o.values()[i] + 0.1 * m.values()[i] + 0.5 * f.values()[i];
    EXPECT_NEAR(mix.values()[i], expected, 1e-12);
  }
  EXPECT_NE(m, o);
}

TEST(Attention, WeightValidation) {
  AdaptedAttentionBlock block(CrossAttentionWeights::random(kDims, 5));
  block.set_adapter("male", BiasAdapter::initialize(kDims, 2, 1));
  const Matrix x(1, 6, 0.1), c(1, 5, 0.2);
  EXPECT_EQ(error_code([&] { (void)attention_forward(block, {{"ghost", 1.0}}, x, c); }),
            Errc::unknown_label);
  EXPECT_EQ(error_code([&] {
              (void)attention_forward(block, {{"original", 1.2}, {"male", -0.2}}, x, c);
            }),
            Errc::invalid_argument);
  EXPECT_EQ(error_code([&] { (void)attention_forward(block, {{"male", 0.5}}, x, c); }),
            Errc::invalid_argument);
  EXPECT_NO_THROW((void)attention_forward(block, {{"male", 1.0}}, x, c));
  EXPECT_EQ(error_code([&] { (void)attention_forward(block, {{"original", 1.0}}, Matrix(1, 4), c); }),
            Errc::dimension_mismatch);
}

TEST(AttentionBackward, ZeroUpstreamAndFreshAdapters) {
  std::mt19937_64 rng(6);
  AdaptedAttentionBlock block(CrossAttentionWeights::random(kDims, 7));
  block.set_adapter("male", BiasAdapter::initialize(kDims, 2, 1));
  const ExpertWeights w{{"original", 0.5}, {"male", 0.5}};
  const Matrix x = testing::random_matrix(rng, 3, 6);
  const Matrix c = testing::random_matrix(rng, 2, 5);

  const auto zero = attention_backward(block, w, x, c, Matrix(3, 6));
  for (Projection p : kProjections) {
    for (double v : zero.adapters.at("male").pair(p).down.values()) EXPECT_EQ(v, 0.0);
    for (double v : zero.adapters.at("male").pair(p).up.values()) EXPECT_EQ(v, 0.0);
  }
  EXPECT_FALSE(zero.base.has_value());

  const auto g = attention_backward(block, w, x, c, testing::random_matrix(rng, 3, 6));
  double up_mass = 0.0;
  for (Projection p : kProjections) {
    for (double v : g.adapters.at("male").pair(p).down.values()) EXPECT_EQ(v, 0.0);
    for (double v : g.adapters.at("male").pair(p).up.values()) up_mass += std::abs(v);
  }
  EXPECT_GT(up_mass, 0.0);
}

// Central differences of <G, forward(X, C)> for every adapter entry, plus
// inputs and (in the base variant) base weights.
TEST(AttentionBackward, FiniteDifferences) {
  std::mt19937_64 rng(7);
  const double h = 1e-5;
  for (int trial = 0; trial < 10; ++trial) {
    AdaptedAttentionBlock block(CrossAttentionWeights::random(kDims, 50 + trial));
    auto male = BiasAdapter::initialize(kDims, 2, 1);
    auto female = BiasAdapter::initialize(kDims, 2, 2);
    randomise(rng, male);
    randomise(rng, female);
    block.set_adapter("male", male);
    block.set_adapter("female", female);
    const ExpertWeights w{{"original", 0.4}, {"male", 0.1}, {"female", 0.5}};
    const Matrix x = testing::random_matrix(rng, 3, 6);
    const Matrix c = testing::random_matrix(rng, 2, 5);
    const Matrix up = testing::random_matrix(rng, 3, 6);
    const auto grads = attention_backward_with_base(block, w, x, c, up);
    auto loss = [&](const AdaptedAttentionBlock& b, const Matrix& xx, const Matrix& cc) {
      return inner(up, attention_forward(b, w, xx, cc));
    };

    for (const char* id : {"male", "female"}) {
      for (Projection p : kProjections) {
        for (bool is_up : {false, true}) {
          const std::size_t n = is_up ? block.adapter(id)->pair(p).up.size()
                                      : block.adapter(id)->pair(p).down.size();
          for (std::size_t e = 0; e < n; ++e) {
            auto perturbed = [&](double delta) {
              AdaptedAttentionBlock b = block;
              auto& pair = b.mutable_adapter(id)->pair(p);
              (is_up ? pair.up : pair.down).values()[e] += delta;
              return loss(b, x, c);
            };
            const double fd = (perturbed(h) - perturbed(-h)) / (2 * h);
            const auto& gp = grads.adapters.at(id).pair(p);
            const double an = (is_up ? gp.up : gp.down).values()[e];
            EXPECT_LE(oracle::relative_error(an, fd), 1e-4) << id << " " << projection_name(p);
          }
        }
      }
    }
    for (std::size_t e = 0; e < x.size(); ++e) {
      Matrix xp = x, xm = x;
      xp.values()[e] += h;
      xm.values()[e] -= h;
      const double fd = (loss(block, xp, c) - loss(block, xm, c)) / (2 * h);
      EXPECT_LE(oracle::relative_error(grads.d_hidden.values()[e], fd), 1e-4);
    }
    for (std::size_t e = 0; e < c.size(); ++e) {
      Matrix cp = c, cm = c;
      cp.values()[e] += h;
      cm.values()[e] -= h;
      const double fd = (loss(block, x, cp) - loss(block, x, cm)) / (2 * h);
      EXPECT_LE(oracle::relative_error(grads.d_context.values()[e], fd), 1e-4);
    }
    ASSERT_TRUE(grads.base.has_value());
    for (Projection p : kProjections) {
      for (std::size_t e = 0; e < block.base().get(p).size(); ++e) {
        auto perturbed = [&](double delta) {
          AdaptedAttentionBlock b = block;
          b.mutable_base().get(p).values()[e] += delta;
          return loss(b, x, c);
        };
        const double fd = (perturbed(h) - perturbed(-h)) / (2 * h);
        EXPECT_LE(oracle::relative_error(grads.base->get(p).values()[e], fd), 1e-4);
      }
    }
  }
}

TEST(Attention, TrainableRatio) {
  const std::size_t d = 64, r = 2;
  AdaptedAttentionBlock block(CrossAttentionWeights::zeros({d, d, d}));
  EXPECT_ANY_THROW((void)trainable_ratio(block));
  block.set_adapter("male", BiasAdapter::initialize({d, d, d}, r, 1));
  EXPECT_DOUBLE_EQ(trainable_ratio(block), 2.0 * r / (2.0 * r + d));
  EXPECT_NEAR(trainable_ratio(block), 0.0588, 1e-4);
}

TEST(Bias, CheckpointRoundTrip) {
  std::mt19937_64 rng(8);
  auto a = BiasAdapter::initialize(kDims, 2, 11, std::nullopt, 4.0);
  randomise(rng, a);
  const auto bytes = encode_adapter("female", kDims, a);
  EXPECT_EQ(bytes.substr(0, 4), "BIAS");
  const auto back = decode_adapter(bytes);
  EXPECT_EQ(back.expert_id, "female");
  EXPECT_EQ(back.dims, kDims);
  EXPECT_EQ(back.adapter, a);
  EXPECT_EQ(encode_adapter("female", kDims, back.adapter), bytes);
  EXPECT_EQ(error_code([&] { (void)decode_adapter(bytes.substr(0, bytes.size() - 8)); }),
            Errc::truncated);
  EXPECT_EQ(error_code([&] { (void)decode_adapter("XXXX" + bytes.substr(4)); }), Errc::bad_magic);
}

}  // namespace
}  // namespace fairdiff
