// Copyright 2026 The fairdiff Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Little-endian encode/decode helpers shared by the EMBD, CMAT, BIAS and TDEN
// formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>

#include "fairdiff/error.hpp"

namespace fairdiff::detail {

template <typename U>
U to_little(U v) {
  if constexpr (std::endian::native == std::endian::big) {
    U out = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      out = static_cast<U>((out << 8) | (v & 0xff));
      v = static_cast<U>(v >> 8);
    }
    return out;
  } else {
    return v;
  }
}

class ByteWriter {
 public:
  void magic(std::string_view tag) { out_.append(tag); }
  void u32(std::uint32_t v) { raw(to_little(v)); }
  void f32(float v) { raw(to_little(std::bit_cast<std::uint32_t>(v))); }
  void f64(double v) { raw(to_little(std::bit_cast<std::uint64_t>(v))); }
  void bytes(std::string_view b) { out_.append(b); }
  /// u32 length prefix followed by the raw bytes.
  void string(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s);
  }

  [[nodiscard]] std::string take() { return std::move(out_); }

 private:
  template <typename U>
  void raw(U v) {
    char buf[sizeof(U)];
    std::memcpy(buf, &v, sizeof(U));
    out_.append(buf, sizeof(U));
  }

  std::string out_;
};

class ByteReader {
 public:
  ByteReader(std::string_view bytes, std::string_view format) : in_(bytes), format_(format) {}

  void expect_magic(std::string_view tag) {
    if (in_.size() < tag.size() || in_.substr(0, tag.size()) != tag) {
      fail(Errc::bad_magic, std::string(format_) + ": expected magic '" + std::string(tag) + "'");
    }
    pos_ = tag.size();
  }

  std::uint32_t u32() { return to_little(raw<std::uint32_t>()); }
  float f32() { return std::bit_cast<float>(to_little(raw<std::uint32_t>())); }
  double f64() { return std::bit_cast<double>(to_little(raw<std::uint64_t>())); }

  std::string_view bytes(std::size_t n) {
    need(n);
    auto view = in_.substr(pos_, n);
    pos_ += n;
    return view;
  }

  std::string string() { return std::string(bytes(u32())); }

  [[nodiscard]] std::size_t remaining() const noexcept { return in_.size() - pos_; }

  void need(std::size_t n) const {
    if (remaining() < n) {
      fail(Errc::truncated, std::string(format_) + ": payload ends " +
                                std::to_string(n - remaining()) + " bytes early");
    }
  }

  void expect_end() const {
    if (remaining() != 0) {
      fail(Errc::trailing_bytes,
           std::string(format_) + ": " + std::to_string(remaining()) + " unexpected trailing bytes");
    }
  }

 private:
  template <typename U>
  U raw() {
    need(sizeof(U));
    U v;
    std::memcpy(&v, in_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }

  std::string_view in_;
  std::string_view format_;
  std::size_t pos_ = 0;
};

}  // namespace fairdiff::detail
