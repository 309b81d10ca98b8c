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

#include <cctype>
#include <cstdint>
#include <istream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "scuesim/crypto.hpp"
#include "scuesim/metadata.hpp"

namespace scuesim {

struct TraceOp {
  bool is_write = true;
  std::uint64_t addr = 0;
  bool has_payload = false;
  DataBlock payload{};
};

struct Trace {
  std::vector<TraceOp> ops;
};

enum class WorkloadKind { Array, Btree, Hash, Queue, Rbtree, Seqwrite, Randwrite };

inline const char* to_string(WorkloadKind k) {
  switch (k) {
    case WorkloadKind::Array: return "array";
    case WorkloadKind::Btree: return "btree";
    case WorkloadKind::Hash: return "hash";
    case WorkloadKind::Queue: return "queue";
    case WorkloadKind::Rbtree: return "rbtree";
    case WorkloadKind::Seqwrite: return "seqwrite";
    case WorkloadKind::Randwrite: return "randwrite";
  }
  return "?";
}

inline WorkloadKind workload_from_string(const std::string& s) {
  if (s == "array") return WorkloadKind::Array;
  if (s == "btree") return WorkloadKind::Btree;
  if (s == "hash") return WorkloadKind::Hash;
  if (s == "queue") return WorkloadKind::Queue;
  if (s == "rbtree") return WorkloadKind::Rbtree;
  if (s == "seqwrite") return WorkloadKind::Seqwrite;
  if (s == "randwrite") return WorkloadKind::Randwrite;
  throw std::invalid_argument("unknown workload kind: " + s);
}

// Fixed payload for ops that carry none: any two runs over the same trace
// and seed write identical bytes, so images and reports compare bit-exact.
inline DataBlock default_payload(std::uint64_t seed, std::uint64_t op_index,
                                 std::uint64_t addr) {
  const Pad pad =
      gen_otp(SecretKey::from_u64(seed, 0x776b6c64), addr, op_index, 0);
  DataBlock b;
  b.bytes = pad.bytes;
  return b;
}

namespace detail {

inline std::uint64_t align_line(std::uint64_t v) { return v & ~std::uint64_t{63}; }

}  // namespace detail

// Synthetic access streams. Every address is line-aligned and below
// mem_bytes; the same (kind, n, seed, mem_bytes) always yields the same ops.
//
//   array     strided sweep over a small block, 3:1 write:read (warm)
//   btree     node inserts: fresh-page writes plus pointer-chase reads
//   hash      uniform probes over a wide region, 2:1 write:read (cold)
//   queue     producer at the tail, consumer at the head of a ring
//   rbtree    inserts with rebalancing writes to older nodes
//   seqwrite  pure ascending writes, one line after the next
//   randwrite uniform random writes over a mid-size region
inline Trace gen_trace(WorkloadKind kind, std::size_t n, std::uint64_t seed,
                       std::uint64_t mem_bytes) {
  if (mem_bytes < (std::uint64_t{1} << 15))
    throw std::invalid_argument("workload region smaller than 32 KiB");
  std::mt19937_64 rng(seed ^ (0x9e3779b97f4a7c15ull *
                              (static_cast<std::uint64_t>(kind) + 1)));
  Trace t;
  t.ops.reserve(n);
  const auto clamp_region = [&](std::uint64_t want) {
    return want < mem_bytes ? want : mem_bytes;
  };
  switch (kind) {
    case WorkloadKind::Array: {
      const std::uint64_t region = clamp_region(std::uint64_t{256} << 10);
      std::uint64_t pos = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const bool write = (i % 4) != 3;
        t.ops.push_back({write, pos, false, {}});
        pos = (pos + 64) % region;
      }
      break;
    }
    case WorkloadKind::Btree:
    case WorkloadKind::Rbtree: {
      const bool rb = kind == WorkloadKind::Rbtree;
      const std::uint64_t region = clamp_region(std::uint64_t{64} << 20);
      const std::uint64_t pages = region / kLeafCoverBytes;
      std::vector<std::uint64_t> nodes;
      std::uint64_t next_page = 0;
      const std::size_t lines_per_insert = rb ? 6 : 4;
      while (t.ops.size() < n) {
        if (nodes.empty() || rng() % 100 < 85) {
          // Insert: claim a fresh page and fill part of it.
          const std::uint64_t base = (next_page++ % pages) * kLeafCoverBytes;
          nodes.push_back(base);
          for (std::size_t j = 0; j < lines_per_insert && t.ops.size() < n; ++j)
            t.ops.push_back({true, base + j * 64, false, {}});
          if (rb) {
            // Rebalance: touch ancestors already in place.
            for (int j = 0; j < 2 && t.ops.size() < n; ++j) {
              const std::uint64_t anc = nodes[rng() % nodes.size()];
              t.ops.push_back({true, anc + (rng() % 8) * 64, false, {}});
            }
          }
        } else {
          // Lookup: chase a short chain of existing nodes.
          for (int j = 0; j < 3 && t.ops.size() < n; ++j) {
            const std::uint64_t node = nodes[rng() % nodes.size()];
            t.ops.push_back({false, node + (rng() % 4) * 64, false, {}});
          }
        }
      }
      break;
    }
    case WorkloadKind::Hash: {
      const std::uint64_t region = clamp_region(std::uint64_t{256} << 20);
      for (std::size_t i = 0; i < n; ++i) {
        const std::uint64_t addr = detail::align_line(rng() % region);
        t.ops.push_back({(i % 3) != 2, addr, false, {}});
      }
      break;
    }
    case WorkloadKind::Queue: {
      const std::uint64_t region = clamp_region(std::uint64_t{8} << 20);
      std::uint64_t head = 0, tail = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (i % 2 == 0 || head == tail) {
          t.ops.push_back({true, tail % region, false, {}});
          tail += 64;
        } else {
          t.ops.push_back({false, head % region, false, {}});
          head += 64;
        }
      }
      break;
    }
    case WorkloadKind::Seqwrite: {
      for (std::size_t i = 0; i < n; ++i)
        t.ops.push_back({true, (std::uint64_t{i} * 64) % mem_bytes, false, {}});
      break;
    }
    case WorkloadKind::Randwrite: {
      const std::uint64_t region = clamp_region(std::uint64_t{16} << 20);
      for (std::size_t i = 0; i < n; ++i)
        t.ops.push_back({true, detail::align_line(rng() % region), false, {}});
      break;
    }
  }
  return t;
}

// Text form, one op per line:
//   W <hex-addr>                write with the deterministic default payload
//   W <hex-addr> <128 hex>      write with explicit 64-byte payload
//   R <hex-addr>                read
// Blank lines and lines starting with '#' are skipped.
inline Trace parse_trace(std::istream& in) {
  Trace t;
  std::string line;
  std::size_t lineno = 0;
  const auto fail = [&](const std::string& why) {
    throw std::runtime_error("trace line " + std::to_string(lineno) + ": " + why);
  };
  while (std::getline(in, line)) {
    ++lineno;
    std::size_t start = line.find_first_not_of(" \t\r");
    if (start == std::string::npos || line[start] == '#') continue;
    std::istringstream ls(line.substr(start));
    std::string op, addr_s, payload_s;
    ls >> op >> addr_s;
    if (op != "W" && op != "R") fail("expected op 'W' or 'R', got '" + op + "'");
    if (addr_s.empty()) fail("missing address");
    std::uint64_t addr = 0;
    try {
      std::size_t used = 0;
      addr = std::stoull(addr_s, &used, 16);
      if (used != addr_s.size()) fail("bad hex address '" + addr_s + "'");
    } catch (const std::invalid_argument&) {
      fail("bad hex address '" + addr_s + "'");
    } catch (const std::out_of_range&) {
      fail("address out of range '" + addr_s + "'");
    }
    if (addr % 64 != 0) fail("address not 64-byte aligned");
    TraceOp o;
    o.is_write = op == "W";
    o.addr = addr;
    if (ls >> payload_s) {
      if (op == "R") fail("read ops take no payload");
      if (payload_s.size() != 128) fail("payload must be 128 hex digits");
      for (int i = 0; i < 64; ++i) {
        const auto nib = [&](char c) -> int {
          if (c >= '0' && c <= '9') return c - '0';
          if (c >= 'a' && c <= 'f') return c - 'a' + 10;
          if (c >= 'A' && c <= 'F') return c - 'A' + 10;
          fail("payload has non-hex digit");
          return 0;
        };
        o.payload.bytes[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(
            (nib(payload_s[static_cast<std::size_t>(2 * i)]) << 4) |
            nib(payload_s[static_cast<std::size_t>(2 * i + 1)]));
      }
      o.has_payload = true;
      std::string extra;
      if (ls >> extra) fail("trailing tokens after payload");
    }
    t.ops.push_back(o);
  }
  return t;
}

inline std::string format_trace(const Trace& t) {
  std::ostringstream out;
  out << std::hex;
  static const char* kHex = "0123456789abcdef";
  for (const TraceOp& o : t.ops) {
    out << (o.is_write ? 'W' : 'R') << ' ' << o.addr;
    if (o.has_payload) {
      out << ' ';
      for (std::uint8_t b : o.payload.bytes)
        out << kHex[b >> 4] << kHex[b & 0xf];
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace scuesim
