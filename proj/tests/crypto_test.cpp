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

#include "scuesim/crypto.hpp"

#include <gtest/gtest.h>

#include <random>
#include <set>
#include <vector>

namespace scuesim {
namespace {

TEST(Crypto, TagsAreDeterministic) {
  const SecretKey k = SecretKey::from_u64(1, 2);
  const MacTag a = MacBuilder(k).u64(7).u64(9).tag();
  const MacTag b = MacBuilder(k).u64(7).u64(9).tag();
  EXPECT_EQ(a.value, b.value);
}

TEST(Crypto, TagsDependOnKey) {
  const MacTag a = MacBuilder(SecretKey::from_u64(1, 2)).u64(7).tag();
  const MacTag b = MacBuilder(SecretKey::from_u64(1, 3)).u64(7).tag();
  const MacTag c = MacBuilder(SecretKey::from_u64(2, 2)).u64(7).tag();
  EXPECT_NE(a.value, b.value);
  EXPECT_NE(a.value, c.value);
}

TEST(Crypto, TagsDependOnEveryInputByte) {
  const SecretKey k = SecretKey::from_u64(11, 22);
  std::vector<std::uint8_t> msg(64, 0xab);
  const MacTag base = MacBuilder(k).bytes(msg.data(), msg.size()).tag();
  for (std::size_t i = 0; i < msg.size(); ++i) {
    std::vector<std::uint8_t> m = msg;
    m[i] ^= 1;
    const MacTag t = MacBuilder(k).bytes(m.data(), m.size()).tag();
    EXPECT_NE(base.value, t.value) << "byte " << i;
  }
}

TEST(Crypto, TagsBindMessageLength) {
  const SecretKey k = SecretKey::from_u64(3, 4);
  const std::uint8_t data[4] = {1, 2, 3, 4};
  const MacTag whole = MacBuilder(k).bytes(data, 4).tag();
  const MacTag split = MacBuilder(k).bytes(data, 2).bytes(data + 2, 2).tag();
  const MacTag shorter = MacBuilder(k).bytes(data, 3).tag();
  // Streaming the same bytes in pieces is the same message...
  EXPECT_EQ(whole.value, split.value);
  // ...but a prefix is not.
  EXPECT_NE(whole.value, shorter.value);
}

TEST(Crypto, TagDistributionHasNoObviousCollisions) {
  const SecretKey k = SecretKey::from_u64(5, 6);
  std::set<std::uint64_t> seen;
  for (std::uint64_t i = 0; i < 20000; ++i)
    seen.insert(MacBuilder(k).u64(i).tag().value);
  EXPECT_EQ(seen.size(), 20000u);
}

TEST(Crypto, PadsDifferPerAddressAndCounter) {
  const SecretKey k = SecretKey::from_u64(9, 9);
  const Pad base = gen_otp(k, 0, 0, 0);
  EXPECT_NE(base.bytes, gen_otp(k, 64, 0, 0).bytes);
  EXPECT_NE(base.bytes, gen_otp(k, 0, 1, 0).bytes);
  EXPECT_NE(base.bytes, gen_otp(k, 0, 0, 1).bytes);
  EXPECT_EQ(base.bytes, gen_otp(k, 0, 0, 0).bytes);
}

TEST(Crypto, PadStreamLooksBalanced) {
  // Rough sanity: across many pads, each byte position is not stuck.
  const SecretKey k = SecretKey::from_u64(13, 37);
  std::array<int, 64> ones{};
  const int trials = 1000;
  for (int t = 0; t < trials; ++t) {
    const Pad p = gen_otp(k, static_cast<std::uint64_t>(t) * 64, 1, 2);
    for (int i = 0; i < 64; ++i)
      ones[static_cast<std::size_t>(i)] += p.bytes[static_cast<std::size_t>(i)] & 1;
  }
  for (int i = 0; i < 64; ++i) {
    EXPECT_GT(ones[static_cast<std::size_t>(i)], trials / 4) << "byte " << i;
    EXPECT_LT(ones[static_cast<std::size_t>(i)], 3 * trials / 4) << "byte " << i;
  }
}

TEST(Crypto, XorCipherRoundTrips) {
  const SecretKey k = SecretKey::from_u64(21, 42);
  std::mt19937_64 rng(7);
  std::array<std::uint8_t, 64> pt;
  for (auto& b : pt) b = static_cast<std::uint8_t>(rng());
  const Pad pad = gen_otp(k, 4096, 3, 5);
  const auto ct = xor_cipher(pt, pad);
  EXPECT_NE(ct, pt);
  EXPECT_EQ(xor_cipher(ct, pad), pt);
}

TEST(Crypto, PadAndTagDomainsAreSeparate) {
  // A pad block must not equal a tag over the same inputs.
  const SecretKey k = SecretKey::from_u64(77, 88);
  const Pad p = gen_otp(k, 128, 2, 3);
  std::uint64_t first_lane = 0;
  for (int i = 0; i < 8; ++i)
    first_lane |= static_cast<std::uint64_t>(p.bytes[static_cast<std::size_t>(i)]) << (8 * i);
  const MacTag t = MacBuilder(k).u64(128).u64(2).u64(3).tag();
  EXPECT_NE(first_lane, t.value);
}

}  // namespace
}  // namespace scuesim
