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
#include <stdexcept>
#include <string>

namespace scuesim {

// Root-update schemes. All but Bmt keep counter trees; Bmt keeps a digest
// tree and exists as a latency baseline.
enum class Scheme {
  Eager,         // whole branch incremented and re-MACed on the write path
  Lazy,          // only the leaf parent advances per write
  LazyComputing, // branch counters advance on-path, MACs deferred to eviction
  Scue,          // root advances on-path, branch updated in background
  BmtEager,      // digest tree recomputed up to the root per write
};

inline const char* to_string(Scheme s) {
  switch (s) {
    case Scheme::Eager: return "eager";
    case Scheme::Lazy: return "lazy";
    case Scheme::LazyComputing: return "lc";
    case Scheme::Scue: return "scue";
    case Scheme::BmtEager: return "bmt-eager";
  }
  throw std::logic_error("unknown scheme");
}

inline Scheme scheme_from_string(const std::string& s) {
  if (s == "eager") return Scheme::Eager;
  if (s == "lazy") return Scheme::Lazy;
  if (s == "lc" || s == "lazy-computing") return Scheme::LazyComputing;
  if (s == "scue") return Scheme::Scue;
  if (s == "bmt-eager" || s == "bmt") return Scheme::BmtEager;
  throw std::invalid_argument("unknown scheme: " + s);
}

// When background branch-update jobs run: after every operation (the
// default), or only when a fetch forces the octant to drain first.
enum class BgDrain { PerOp, OnDemand };

inline const char* to_string(BgDrain b) {
  return b == BgDrain::PerOp ? "per_op" : "on_demand";
}

inline BgDrain bg_drain_from_string(const std::string& s) {
  if (s == "per_op") return BgDrain::PerOp;
  if (s == "on_demand") return BgDrain::OnDemand;
  throw std::invalid_argument("unknown bg_drain: " + s);
}

struct Config {
  std::uint64_t mem_size = 16ULL << 30;  // protected region bytes
  std::uint32_t cache_kib = 256;         // metadata cache capacity
  std::uint32_t cache_ways = 8;
  std::uint32_t wq_user = 64;            // user-data write queue entries
  std::uint32_t wq_meta = 10;            // metadata write queue entries
  std::uint32_t hash_cycles = 80;        // one MAC computation
  std::uint32_t nvm_read_cycles = 96;    // one line fetch
  std::uint32_t nvm_write_cycles = 400;  // user-queue drain spacing
  std::uint32_t meta_write_cycles = 50;  // metadata-queue drain spacing
  std::uint32_t otp_cycles = 80;         // pad generation (fixed-function)
  Scheme scheme = Scheme::Scue;
  std::uint32_t minor_bits = 7;
  std::uint32_t osiris_limit = 4;        // minor-counter recovery radius
  std::uint32_t cb_persist_period = 4;   // counter-block persist every N updates; 0 = never
  std::uint32_t tag_refill_cycles = 8;   // stall when the tag FIFO re-seeds
  std::uint32_t eager_parallel_hashes = 1;
  std::uint64_t seed = 1;
  BgDrain bg_drain = BgDrain::PerOp;

  void validate() const {
    if (mem_size < (32ULL << 10) || (mem_size & (mem_size - 1)) != 0)
      throw std::invalid_argument(
          "mem_size must be a power of two and at least 32 KiB");
    if (minor_bits < 1 || minor_bits > 31)
      throw std::invalid_argument("minor_bits must be in [1, 31]");
    if (cache_ways == 0 || cache_kib == 0)
      throw std::invalid_argument("cache geometry must be nonzero");
    const std::uint64_t lines = (std::uint64_t{cache_kib} << 10) / 64;
    if (lines % cache_ways != 0)
      throw std::invalid_argument("cache lines must divide evenly into ways");
    if (wq_user == 0 || wq_meta == 0)
      throw std::invalid_argument("write queues must be nonzero");
    if (hash_cycles == 0 || nvm_read_cycles == 0 || nvm_write_cycles == 0 ||
        meta_write_cycles == 0)
      throw std::invalid_argument("latency parameters must be nonzero");
    if (eager_parallel_hashes == 0)
      throw std::invalid_argument("eager_parallel_hashes must be nonzero");
  }
};

}  // namespace scuesim
