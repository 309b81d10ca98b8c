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
#include <stdexcept>
#include <vector>

#include "scuesim/crypto.hpp"

namespace scuesim {

inline constexpr std::uint64_t kLineBytes = 64;
inline constexpr std::uint64_t kLinesPerLeaf = 64;     // data lines per counter block
inline constexpr std::uint64_t kLeafCoverBytes = 4096; // 64 lines * 64 B
inline constexpr int kFanout = 8;
inline constexpr int kSitCounterBits = 56;
inline constexpr std::uint64_t kSitCounterMask = (1ULL << kSitCounterBits) - 1;

// Physical line address. Always 64-byte aligned for data operations.
struct Address {
  std::uint64_t value = 0;
};

struct DataBlock {
  std::array<std::uint8_t, 64> bytes{};

  friend bool operator==(const DataBlock& a, const DataBlock& b) {
    return a.bytes == b.bytes;
  }
};

namespace detail {

inline void put_u64le(std::uint8_t* p, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) p[i] = static_cast<std::uint8_t>(v >> (8 * i));
}

inline std::uint64_t get_u64le(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

// Little-endian bit packing: value i occupies bits [i*width, (i+1)*width) of
// the stream, low bit first within each byte.
inline void pack_bits(std::uint8_t* out, std::uint64_t bit_off,
                      std::uint64_t value, int width) {
  for (int b = 0; b < width; ++b) {
    std::uint64_t pos = bit_off + b;
    if ((value >> b) & 1)
      out[pos / 8] |= static_cast<std::uint8_t>(1u << (pos % 8));
  }
}

inline std::uint64_t unpack_bits(const std::uint8_t* in, std::uint64_t bit_off,
                                 int width) {
  std::uint64_t v = 0;
  for (int b = 0; b < width; ++b) {
    std::uint64_t pos = bit_off + b;
    if ((in[pos / 8] >> (pos % 8)) & 1) v |= 1ULL << b;
  }
  return v;
}

}  // namespace detail

// Split counter for one 4 KiB region: a shared major and 64 per-line minors.
// Encryption of line i uses the pair (major, minors[i]).
struct CounterBlock {
  std::uint64_t major = 0;
  std::array<std::uint32_t, 64> minors{};

  // major + sum of minors. Equals the parent counter kept by every
  // sum-tracking update scheme; each write moves it by exactly +1 except at
  // overflow.
  std::uint64_t leaf_sum() const {
    std::uint64_t s = major;
    for (std::uint32_t m : minors) s += m;
    return s;
  }

  // Advances minors[idx]; on saturation the whole block rolls to a fresh
  // major with zeroed minors and the caller must re-encrypt the covered
  // lines (the triggering increment is absorbed by the major bump).
  bool increment_minor(int idx, int minor_bits) {
    const std::uint32_t max = (1u << minor_bits) - 1;
    if (minors[static_cast<std::size_t>(idx)] == max) {
      major += 1;
      minors.fill(0);
      return true;
    }
    minors[static_cast<std::size_t>(idx)] += 1;
    return false;
  }

  static std::size_t serialized_size(int minor_bits) {
    return 8 + (64 * static_cast<std::size_t>(minor_bits) + 7) / 8;
  }

  // major (8B LE) ‖ 64 minors packed minor_bits each. Exactly 64 bytes at
  // the default minor_bits=7.
  std::vector<std::uint8_t> serialize(int minor_bits) const {
    std::vector<std::uint8_t> out(serialized_size(minor_bits), 0);
    detail::put_u64le(out.data(), major);
    for (int i = 0; i < 64; ++i)
      detail::pack_bits(out.data() + 8, static_cast<std::uint64_t>(i) * minor_bits,
                        minors[static_cast<std::size_t>(i)], minor_bits);
    return out;
  }

  static CounterBlock deserialize(const std::uint8_t* p, std::size_t n,
                                  int minor_bits) {
    if (n != serialized_size(minor_bits))
      throw std::invalid_argument("counter block size mismatch");
    CounterBlock cb;
    cb.major = detail::get_u64le(p);
    for (int i = 0; i < 64; ++i)
      cb.minors[static_cast<std::size_t>(i)] =
          static_cast<std::uint32_t>(detail::unpack_bits(
              p + 8, static_cast<std::uint64_t>(i) * minor_bits, minor_bits));
    return cb;
  }

  friend bool operator==(const CounterBlock& a, const CounterBlock& b) {
    return a.major == b.major && a.minors == b.minors;
  }
};

// Integrity-tree node: eight 56-bit child counters plus a 64-bit tag, one
// 64-byte line on the wire.
struct SitNode {
  std::array<std::uint64_t, 8> counters{};
  MacTag hmac{};

  std::uint64_t dummy_counter() const {
    std::uint64_t s = 0;
    for (std::uint64_t c : counters) s += c;
    return s;
  }

  std::array<std::uint8_t, 64> serialize() const {
    std::array<std::uint8_t, 64> out{};
    for (int i = 0; i < 8; ++i) {
      if (counters[static_cast<std::size_t>(i)] > kSitCounterMask)
        throw std::overflow_error("sit counter exceeds 56 bits");
      detail::pack_bits(out.data(), static_cast<std::uint64_t>(i) * 56,
                        counters[static_cast<std::size_t>(i)], 56);
    }
    detail::put_u64le(out.data() + 56, hmac.value);
    return out;
  }

  static SitNode deserialize(const std::array<std::uint8_t, 64>& in) {
    SitNode n;
    for (int i = 0; i < 8; ++i)
      n.counters[static_cast<std::size_t>(i)] =
          detail::unpack_bits(in.data(), static_cast<std::uint64_t>(i) * 56, 56);
    n.hmac.value = detail::get_u64le(in.data() + 56);
    return n;
  }

  friend bool operator==(const SitNode& a, const SitNode& b) {
    return a.counters == b.counters && a.hmac == b.hmac;
  }
};

// Hash-tree node used by the BMT baseline: eight child digests.
struct BmtNode {
  std::array<MacTag, 8> digests{};

  std::array<std::uint8_t, 64> serialize() const {
    std::array<std::uint8_t, 64> out{};
    for (int i = 0; i < 8; ++i)
      detail::put_u64le(out.data() + 8 * i, digests[static_cast<std::size_t>(i)].value);
    return out;
  }

  static BmtNode deserialize(const std::array<std::uint8_t, 64>& in) {
    BmtNode n;
    for (int i = 0; i < 8; ++i)
      n.digests[static_cast<std::size_t>(i)].value = detail::get_u64le(in.data() + 8 * i);
    return n;
  }

  friend bool operator==(const BmtNode& a, const BmtNode& b) {
    return a.digests == b.digests;
  }
};

// On-chip tree root: eight 64-bit counters, counter i covering memory
// octant i. Non-volatile; the drained write-queue tags keep it current.
struct RootRegister {
  std::array<std::uint64_t, 8> counters{};

  std::array<std::uint8_t, 64> serialize() const {
    std::array<std::uint8_t, 64> out{};
    for (int i = 0; i < 8; ++i)
      detail::put_u64le(out.data() + 8 * i, counters[static_cast<std::size_t>(i)]);
    return out;
  }

  static RootRegister deserialize(const std::array<std::uint8_t, 64>& in) {
    RootRegister r;
    for (int i = 0; i < 8; ++i)
      r.counters[static_cast<std::size_t>(i)] = detail::get_u64le(in.data() + 8 * i);
    return r;
  }

  friend bool operator==(const RootRegister& a, const RootRegister& b) {
    return a.counters == b.counters;
  }
};

struct LeafSum {
  std::uint64_t value = 0;
};

// Shape of the 8-ary tree over the counter blocks.
//
// Levels are numbered 0 (leaves = counter blocks) through levels-1 (the root
// register). Each root counter owns a full depth-(levels-2) subtree; the
// leaf_count/8 real leaves of an octant occupy the low positions of that
// subtree, so the eight octants always partition the leaf space into equal
// contiguous ranges even when leaf_count is not a power of 8.
struct TreeGeometry {
  std::uint64_t mem_bytes = 0;
  std::uint64_t leaf_count = 0;
  int levels = 0;
  std::uint64_t octant_leaves = 0;    // leaf_count / 8
  std::uint64_t octant_capacity = 0;  // 8^(levels-2)

  static TreeGeometry from_mem_bytes(std::uint64_t mem_bytes) {
    if (mem_bytes < 8 * kLeafCoverBytes || (mem_bytes & (mem_bytes - 1)) != 0)
      throw std::invalid_argument(
          "mem_size must be a power of two and at least 32 KiB");
    TreeGeometry g;
    g.mem_bytes = mem_bytes;
    g.leaf_count = mem_bytes / kLeafCoverBytes;
    g.levels = 2;
    std::uint64_t cap = 1;  // octant capacity at levels=2
    while (cap * 8 < g.leaf_count) {
      cap *= 8;
      g.levels += 1;
    }
    g.octant_capacity = cap;
    g.octant_leaves = g.leaf_count / 8;
    return g;
  }

  std::uint64_t leaf_of_addr(std::uint64_t addr) const {
    return addr / kLeafCoverBytes;
  }

  int slot_of_addr(std::uint64_t addr) const {
    return static_cast<int>((addr % kLeafCoverBytes) / kLineBytes);
  }

  int octant_of_leaf(std::uint64_t leaf) const {
    return static_cast<int>(leaf / octant_leaves);
  }

  // Position of a leaf in the padded tree coordinate space.
  std::uint64_t leaf_position(std::uint64_t leaf) const {
    const std::uint64_t oct = leaf / octant_leaves;
    return oct * octant_capacity + (leaf % octant_leaves);
  }

  // Internal levels run 1 .. levels-2 (empty when levels == 2).
  int internal_levels() const { return levels - 2; }

  std::uint64_t node_position(std::uint64_t leaf, int level) const {
    return leaf_position(leaf) >> (3 * level);
  }

  // Child slot of the level-`level` ancestor inside its own parent
  // (for level == levels-2 the parent is the root and the slot is the octant).
  int child_slot(std::uint64_t leaf, int level) const {
    return static_cast<int>(node_position(leaf, level) % 8);
  }

  std::uint64_t level_capacity(int level) const {
    return 8ULL * octant_capacity >> (3 * level);
  }

  // --- NVM address map (identifiers; storage itself is sparse) ---

  std::uint64_t counter_base() const { return mem_bytes; }

  std::uint64_t counter_addr(std::uint64_t leaf) const {
    return counter_base() + leaf * kLineBytes;
  }

  std::uint64_t tree_level_base(int level) const {
    std::uint64_t base = counter_base() + leaf_count * kLineBytes;
    for (int l = 1; l < level; ++l) base += level_capacity(l) * kLineBytes;
    return base;
  }

  std::uint64_t node_addr(int level, std::uint64_t position) const {
    return tree_level_base(level) + position * kLineBytes;
  }

  std::uint64_t bmt_level_base(int level) const {
    std::uint64_t base = tree_level_base(internal_levels() + 1);
    for (int l = 1; l < level; ++l) base += level_capacity(l) * kLineBytes;
    return base;
  }

  std::uint64_t bmt_node_addr(int level, std::uint64_t position) const {
    return bmt_level_base(level) + position * kLineBytes;
  }
};

// Everything address-dependent an update scheme needs for one access: leaf
// index, octant, and the ancestor node positions bottom-up (root excluded —
// it is a register, not an addressed node).
struct BranchLayout {
  std::uint64_t leaf = 0;
  int slot = 0;  // line slot within the counter block
  int octant = 0;
  std::vector<std::uint64_t> node_positions;  // index l-1 holds level l position
};

inline BranchLayout layout(std::uint64_t addr, const TreeGeometry& g) {
  if (addr % kLineBytes != 0)
    throw std::invalid_argument("address not 64-byte aligned");
  if (addr >= g.mem_bytes) throw std::invalid_argument("address out of range");
  BranchLayout b;
  b.leaf = g.leaf_of_addr(addr);
  b.slot = g.slot_of_addr(addr);
  b.octant = g.octant_of_leaf(b.leaf);
  b.node_positions.reserve(static_cast<std::size_t>(g.internal_levels()));
  for (int l = 1; l <= g.internal_levels(); ++l)
    b.node_positions.push_back(g.node_position(b.leaf, l));
  return b;
}

}  // namespace scuesim
