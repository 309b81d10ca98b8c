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

#include <cstdint>
#include <map>
#include <stdexcept>
#include <utility>
#include <vector>

#include "scuesim/config.hpp"
#include "scuesim/crypto.hpp"
#include "scuesim/metadata.hpp"

namespace scuesim {

// MAC constructions shared by the controller, the pristine-state synthesizer,
// and post-crash recovery. Domain constants keep the four uses disjoint.
namespace macs {

inline constexpr std::uint64_t kDomData = 0x444d4143;   // data line
inline constexpr std::uint64_t kDomLeaf = 0x4c4d4143;   // counter block
inline constexpr std::uint64_t kDomNode = 0x4e4d4143;   // tree node
inline constexpr std::uint64_t kDomBmt = 0x424d4143;    // digest tree

inline MacTag data_mac(const SecretKey& key, std::uint64_t line_addr,
                       std::uint64_t major, std::uint32_t minor,
                       const DataBlock& ciphertext) {
  return MacBuilder(key)
      .u64(kDomData)
      .u64(line_addr)
      .u64(major)
      .u64(minor)
      .bytes(ciphertext.bytes.data(), ciphertext.bytes.size())
      .tag();
}

// Binds the block to its own running sum; the sum is separately checked for
// freshness against the parent, so a stale block and a stale MAC cannot pair
// with a fresh parent.
inline MacTag leaf_mac(const SecretKey& key, std::uint64_t counter_addr,
                       const CounterBlock& cb, int minor_bits) {
  const std::vector<std::uint8_t> bytes = cb.serialize(minor_bits);
  return MacBuilder(key)
      .u64(kDomLeaf)
      .u64(counter_addr)
      .u64(cb.leaf_sum())
      .bytes(bytes.data(), bytes.size())
      .tag();
}

// `bound` is the freshness value folded into the tag: the node's own child
// sum for self-identifying schemes, the live parent counter for the scheme
// that never advances ancestors on the write path.
inline MacTag node_mac(const SecretKey& key, std::uint64_t node_addr,
                       const std::array<std::uint64_t, 8>& counters,
                       std::uint64_t bound) {
  MacBuilder b(key);
  b.u64(kDomNode).u64(node_addr).u64(bound);
  for (std::uint64_t c : counters) b.u64(c);
  return b.tag();
}

inline MacTag bmt_digest(const SecretKey& key, std::uint64_t addr,
                         const std::uint8_t* p, std::size_t n) {
  return MacBuilder(key).u64(kDomBmt).u64(addr).bytes(p, n).tag();
}

inline MacTag bmt_digest(const SecretKey& key, std::uint64_t addr,
                         const std::array<std::uint8_t, 64>& bytes) {
  return bmt_digest(key, addr, bytes.data(), bytes.size());
}

}  // namespace macs

inline std::uint64_t config_fingerprint(const Config& c) {
  return MacBuilder(SecretKey::from_u64(0x666e6770, 0))
      .u64(c.mem_size)
      .u64(c.minor_bits)
      .u64(static_cast<std::uint64_t>(c.scheme))
      .u64(c.seed)
      .tag()
      .value;
}

// Persistent memory contents, stored sparsely. Any line never written still
// reads back as its deterministic pristine state: zero plaintext under
// counter pair (0, 0), zero counters, and matching tags — so a fresh image
// verifies clean end to end without materializing 16 GiB.
class NvmImage {
 public:
  NvmImage(const SecretKey& key, const TreeGeometry& geometry, int minor_bits)
      : key_(key), geo_(geometry), minor_bits_(minor_bits) {}

  const TreeGeometry& geometry() const { return geo_; }
  int minor_bits() const { return minor_bits_; }
  const SecretKey& key() const { return key_; }

  // --- pristine synthesis ---

  DataBlock pristine_data(std::uint64_t line_addr) const {
    DataBlock zero{};
    return DataBlock{xor_cipher(zero.bytes, gen_otp(key_, line_addr, 0, 0))};
  }

  MacTag pristine_data_mac(std::uint64_t line_addr) const {
    return macs::data_mac(key_, line_addr, 0, 0, pristine_data(line_addr));
  }

  SitNode pristine_sit(int level, std::uint64_t position) const {
    SitNode n;
    n.hmac = macs::node_mac(key_, geo_.node_addr(level, position), n.counters, 0);
    return n;
  }

  MacTag pristine_leaf_mac(std::uint64_t leaf) const {
    return macs::leaf_mac(key_, geo_.counter_addr(leaf), CounterBlock{},
                          minor_bits_);
  }

  // --- typed accessors (synthesize when absent) ---

  DataBlock read_data(std::uint64_t line_addr) const {
    auto it = data_.find(line_addr);
    return it == data_.end() ? pristine_data(line_addr) : it->second;
  }
  bool data_present(std::uint64_t line_addr) const {
    return data_.count(line_addr) != 0;
  }
  void write_data(std::uint64_t line_addr, const DataBlock& b) {
    data_[line_addr] = b;
  }

  CounterBlock read_counter(std::uint64_t leaf) const {
    auto it = counters_.find(leaf);
    return it == counters_.end() ? CounterBlock{} : it->second;
  }
  void write_counter(std::uint64_t leaf, const CounterBlock& cb) {
    counters_[leaf] = cb;
  }

  SitNode read_sit(int level, std::uint64_t position) const {
    auto it = sit_.find({level, position});
    return it == sit_.end() ? pristine_sit(level, position) : it->second;
  }
  void write_sit(int level, std::uint64_t position, const SitNode& n) {
    sit_[{level, position}] = n;
  }
  // Drop every stored tree node (recovery rebuilds the tree from scratch and
  // must not leave stale nodes behind the rebuilt ones).
  void clear_sit() { sit_.clear(); }

  // Digest-tree nodes have no O(1) pristine form; absence is reported so the
  // caller can treat first-touch nodes as trusted-initial instead.
  std::pair<BmtNode, bool> read_bmt(int level, std::uint64_t position) const {
    auto it = bmt_.find({level, position});
    if (it == bmt_.end()) return {BmtNode{}, false};
    return {it->second, true};
  }
  void write_bmt(int level, std::uint64_t position, const BmtNode& n) {
    bmt_[{level, position}] = n;
  }

  MacTag read_data_mac(std::uint64_t line_addr) const {
    auto it = data_macs_.find(line_addr);
    return it == data_macs_.end() ? pristine_data_mac(line_addr) : it->second;
  }
  void write_data_mac(std::uint64_t line_addr, MacTag t) {
    data_macs_[line_addr] = t;
  }

  MacTag read_leaf_mac(std::uint64_t leaf) const {
    auto it = leaf_macs_.find(leaf);
    return it == leaf_macs_.end() ? pristine_leaf_mac(leaf) : it->second;
  }
  void write_leaf_mac(std::uint64_t leaf, MacTag t) { leaf_macs_[leaf] = t; }

  RootRegister& root() { return root_; }
  const RootRegister& root() const { return root_; }
  std::array<MacTag, 8>& bmt_root() { return bmt_root_; }
  const std::array<MacTag, 8>& bmt_root() const { return bmt_root_; }

  const std::map<std::uint64_t, CounterBlock>& counters() const {
    return counters_;
  }
  const std::map<std::uint64_t, DataBlock>& data() const { return data_; }
  const std::map<std::pair<int, std::uint64_t>, SitNode>& sit() const {
    return sit_;
  }

  // --- image file format ---
  //
  // magic ‖ version ‖ header(mem_bytes, minor_bits, config fingerprint) ‖
  // data lines ‖ counter blocks ‖ tree nodes ‖ digest nodes ‖ MAC tables ‖
  // root registers. Every sparse region is a count followed by (index,
  // payload) entries in ascending index order, so equal state always
  // produces identical bytes.

  static constexpr std::uint32_t kMagic = 0x4d49'4353;  // "SCIM"
  static constexpr std::uint8_t kVersion = 1;

  std::vector<std::uint8_t> to_bytes(std::uint64_t fingerprint) const {
    std::vector<std::uint8_t> out;
    auto u8 = [&](std::uint8_t v) { out.push_back(v); };
    auto u32 = [&](std::uint32_t v) {
      for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    };
    auto u64 = [&](std::uint64_t v) {
      for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    };
    auto raw = [&](const std::uint8_t* p, std::size_t n) {
      out.insert(out.end(), p, p + n);
    };

    u32(kMagic);
    u8(kVersion);
    u64(geo_.mem_bytes);
    u32(static_cast<std::uint32_t>(minor_bits_));
    u64(fingerprint);

    u64(data_.size());
    for (const auto& [addr, block] : data_) {
      u64(addr);
      raw(block.bytes.data(), block.bytes.size());
    }
    u64(counters_.size());
    for (const auto& [leaf, cb] : counters_) {
      u64(leaf);
      const auto bytes = cb.serialize(minor_bits_);
      raw(bytes.data(), bytes.size());
    }
    u64(sit_.size());
    for (const auto& [key, node] : sit_) {
      u8(static_cast<std::uint8_t>(key.first));
      u64(key.second);
      const auto bytes = node.serialize();
      raw(bytes.data(), bytes.size());
    }
    u64(bmt_.size());
    for (const auto& [key, node] : bmt_) {
      u8(static_cast<std::uint8_t>(key.first));
      u64(key.second);
      const auto bytes = node.serialize();
      raw(bytes.data(), bytes.size());
    }
    u64(data_macs_.size());
    for (const auto& [addr, tag] : data_macs_) {
      u64(addr);
      u64(tag.value);
    }
    u64(leaf_macs_.size());
    for (const auto& [leaf, tag] : leaf_macs_) {
      u64(leaf);
      u64(tag.value);
    }
    {
      const auto bytes = root_.serialize();
      raw(bytes.data(), bytes.size());
    }
    for (const MacTag& t : bmt_root_) u64(t.value);
    return out;
  }

  struct ImageHeader {
    std::uint64_t mem_bytes = 0;
    std::uint32_t minor_bits = 0;
    std::uint64_t fingerprint = 0;
  };

  static NvmImage from_bytes(const std::vector<std::uint8_t>& in,
                             const SecretKey& key, ImageHeader* header_out) {
    std::size_t off = 0;
    auto need = [&](std::size_t n) {
      if (off + n > in.size())
        throw std::runtime_error("truncated image file");
    };
    auto u8 = [&]() {
      need(1);
      return in[off++];
    };
    auto u32 = [&]() {
      need(4);
      std::uint32_t v = 0;
      for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[off++]) << (8 * i);
      return v;
    };
    auto u64 = [&]() {
      need(8);
      std::uint64_t v = 0;
      for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in[off++]) << (8 * i);
      return v;
    };
    auto raw64 = [&]() {
      need(64);
      std::array<std::uint8_t, 64> b{};
      std::memcpy(b.data(), in.data() + off, 64);
      off += 64;
      return b;
    };

    if (u32() != kMagic) throw std::runtime_error("not an image file");
    if (u8() != kVersion) throw std::runtime_error("unsupported image version");
    ImageHeader h;
    h.mem_bytes = u64();
    h.minor_bits = u32();
    h.fingerprint = u64();
    if (header_out) *header_out = h;

    NvmImage img(key, TreeGeometry::from_mem_bytes(h.mem_bytes),
                 static_cast<int>(h.minor_bits));
    const std::size_t cb_size =
        CounterBlock::serialized_size(static_cast<int>(h.minor_bits));

    for (std::uint64_t n = u64(); n; --n) {
      const std::uint64_t addr = u64();
      img.data_[addr] = DataBlock{raw64()};
    }
    for (std::uint64_t n = u64(); n; --n) {
      const std::uint64_t leaf = u64();
      need(cb_size);
      img.counters_[leaf] = CounterBlock::deserialize(
          in.data() + off, cb_size, static_cast<int>(h.minor_bits));
      off += cb_size;
    }
    for (std::uint64_t n = u64(); n; --n) {
      const int level = u8();
      const std::uint64_t pos = u64();
      img.sit_[{level, pos}] = SitNode::deserialize(raw64());
    }
    for (std::uint64_t n = u64(); n; --n) {
      const int level = u8();
      const std::uint64_t pos = u64();
      img.bmt_[{level, pos}] = BmtNode::deserialize(raw64());
    }
    for (std::uint64_t n = u64(); n; --n) {
      const std::uint64_t addr = u64();
      img.data_macs_[addr] = MacTag{u64()};
    }
    for (std::uint64_t n = u64(); n; --n) {
      const std::uint64_t leaf = u64();
      img.leaf_macs_[leaf] = MacTag{u64()};
    }
    img.root_ = RootRegister::deserialize(raw64());
    for (MacTag& t : img.bmt_root_) t.value = u64();
    if (off != in.size()) throw std::runtime_error("trailing bytes in image file");
    return img;
  }

 private:
  SecretKey key_;
  TreeGeometry geo_;
  int minor_bits_;
  std::map<std::uint64_t, DataBlock> data_;
  std::map<std::uint64_t, CounterBlock> counters_;
  std::map<std::pair<int, std::uint64_t>, SitNode> sit_;
  std::map<std::pair<int, std::uint64_t>, BmtNode> bmt_;
  std::map<std::uint64_t, MacTag> data_macs_;
  std::map<std::uint64_t, MacTag> leaf_macs_;
  RootRegister root_;
  std::array<MacTag, 8> bmt_root_{};
};

}  // namespace scuesim
