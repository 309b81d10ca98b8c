/*
 * Copyright 2026 The scuesim Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <array>
#include <cstdint>
#include <cstring>

namespace scuesim {

// 128-bit controller secret. Lives on-chip; never serialized into NVM images.
struct SecretKey {
  std::array<std::uint8_t, 16> bytes{};

  static SecretKey from_u64(std::uint64_t lo, std::uint64_t hi) {
    SecretKey k;
    for (int i = 0; i < 8; ++i) {
      k.bytes[i] = static_cast<std::uint8_t>(lo >> (8 * i));
      k.bytes[8 + i] = static_cast<std::uint8_t>(hi >> (8 * i));
    }
    return k;
  }
};

// 64-bit authentication tag. Wide enough that accidental collisions are
// negligible at simulation scale; the construction below is well mixed but
// deliberately not cryptographic.
struct MacTag {
  std::uint64_t value = 0;

  friend bool operator==(MacTag a, MacTag b) { return a.value == b.value; }
  friend bool operator!=(MacTag a, MacTag b) { return a.value != b.value; }
};

// One-time pad covering a 64-byte line.
struct Pad {
  std::array<std::uint8_t, 64> bytes{};
};

namespace detail {

inline std::uint64_t rotl64(std::uint64_t x, int r) {
  return (x << r) | (x >> (64 - r));
}

// murmur3 finalizer: full avalanche on 64 bits.
inline std::uint64_t fmix64(std::uint64_t k) {
  k ^= k >> 33;
  k *= 0xff51afd7ed558ccdULL;
  k ^= k >> 33;
  k *= 0xc4ceb9fe1a85ec53ULL;
  k ^= k >> 33;
  return k;
}

}  // namespace detail

// Streaming keyed mixer. Two accumulator lanes absorb 64-bit words; the
// finalizer cross-mixes both lanes and the absorbed length, so permuting,
// splitting, or extending the input changes the tag.
class MacBuilder {
 public:
  explicit MacBuilder(const SecretKey& key) {
    std::uint64_t k0 = 0, k1 = 0;
    std::memcpy(&k0, key.bytes.data(), 8);
    std::memcpy(&k1, key.bytes.data() + 8, 8);
    h1_ = k0 ^ 0x9e3779b97f4a7c15ULL;
    h2_ = k1 ^ 0xc2b2ae3d27d4eb4fULL;
  }

  MacBuilder& u64(std::uint64_t v) {
    flush_tail();  // a partial byte tail closes before a structured word
    absorb(v);
    return *this;
  }

  // Streaming: splitting one byte run across calls yields the same tag as
  // absorbing it whole; the total length is bound at finalization.
  MacBuilder& bytes(const std::uint8_t* p, std::size_t n) {
    total_bytes_ += n;
    if (pend_n_ > 0) {
      while (n > 0 && pend_n_ < 8) {
        pend_[pend_n_++] = *p++;
        --n;
      }
      if (pend_n_ == 8) {
        std::uint64_t v = 0;
        std::memcpy(&v, pend_, 8);
        absorb(v);
        pend_n_ = 0;
      }
    }
    while (n >= 8) {
      std::uint64_t v = 0;
      std::memcpy(&v, p, 8);
      absorb(v);
      p += 8;
      n -= 8;
    }
    while (n > 0 && pend_n_ < 8) {
      pend_[pend_n_++] = *p++;
      --n;
    }
    return *this;
  }

  MacTag tag() const {
    MacBuilder t = *this;  // finalize a copy; tag() stays repeatable
    t.flush_tail();
    t.absorb(t.total_bytes_ ^ 0xa5a5a5a5a5a5a5a5ULL);
    std::uint64_t a = detail::fmix64(t.h1_ + t.words_);
    std::uint64_t b = detail::fmix64(t.h2_ ^ detail::rotl64(a, 23));
    return MacTag{a ^ detail::rotl64(b, 17)};
  }

 private:
  void absorb(std::uint64_t v) {
    h1_ = detail::rotl64(h1_ ^ (v * 0x87c37b91114253d5ULL), 27) *
              0x4cf5ad432745937fULL +
          0x52dce729U;
    h2_ = detail::rotl64(h2_ ^ (detail::rotl64(v, 31) * 0x4cf5ad432745937fULL),
                         33) *
              0x87c37b91114253d5ULL +
          0x38495ab5U;
    ++words_;
  }

  void flush_tail() {
    if (pend_n_ == 0) return;
    std::uint64_t v = 0;
    std::memcpy(&v, pend_, pend_n_);
    absorb(v | (static_cast<std::uint64_t>(pend_n_) << 56));
    pend_n_ = 0;
  }

  std::uint64_t h1_;
  std::uint64_t h2_;
  std::uint64_t words_ = 0;
  std::uint64_t total_bytes_ = 0;
  std::uint8_t pend_[8] = {};
  std::size_t pend_n_ = 0;
};

// Keyed pad for counter-mode encryption of one line. Inputs (addr, major,
// minor) must never repeat under one key; the controller asserts that at run
// time. Domain-separated from MacBuilder tags by the leading constant.
inline Pad gen_otp(const SecretKey& key, std::uint64_t line_addr,
                   std::uint64_t major, std::uint64_t minor) {
  Pad pad;
  for (std::uint64_t i = 0; i < 8; ++i) {
    MacTag t = MacBuilder(key)
                   .u64(0x4f545021ULL)  // pad domain
                   .u64(line_addr)
                   .u64(major)
                   .u64(minor)
                   .u64(i)
                   .tag();
    std::memcpy(pad.bytes.data() + 8 * i, &t.value, 8);
  }
  return pad;
}

inline std::array<std::uint8_t, 64> xor_cipher(
    const std::array<std::uint8_t, 64>& in, const Pad& pad) {
  std::array<std::uint8_t, 64> out;
  for (int i = 0; i < 64; ++i) out[i] = in[i] ^ pad.bytes[i];
  return out;
}

}  // namespace scuesim
