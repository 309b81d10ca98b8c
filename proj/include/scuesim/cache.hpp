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

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <variant>
#include <vector>

#include "scuesim/metadata.hpp"

namespace scuesim {

enum class MetaKind : std::uint8_t { Counter, Sit, Bmt };

struct MetaId {
  MetaKind kind = MetaKind::Counter;
  int level = 0;           // 0 for counter blocks
  std::uint64_t index = 0; // leaf for counters, position for nodes
};

using MetaPayload = std::variant<CounterBlock, SitNode, BmtNode>;

// One cached metadata line plus its sidecar state. The cached copy is the
// authoritative one; the stored tag may lag it while hmac_valid is false
// (deferred-MAC schemes recompute at eviction).
struct CacheEntry {
  MetaId id;
  MetaPayload payload;
  bool dirty = false;
  bool hmac_valid = true;
  MacTag leaf_mac{};                      // counters only
  std::uint32_t updates_since_persist = 0;  // counters only
};

// Set-associative LRU over 64-byte metadata lines, keyed by NVM address.
class MetaCache {
 public:
  MetaCache(std::uint32_t kib, std::uint32_t ways) : ways_(ways) {
    const std::uint64_t lines = (std::uint64_t{kib} << 10) / kLineBytes;
    if (ways == 0 || lines == 0 || lines % ways != 0)
      throw std::invalid_argument("bad cache geometry");
    sets_.resize(lines / ways);
  }

  std::uint64_t num_sets() const { return sets_.size(); }
  std::uint32_t ways() const { return ways_; }

  CacheEntry* lookup(std::uint64_t addr) {
    Set& s = set_of(addr);
    for (Way& w : s.ways) {
      if (w.valid && w.addr == addr) {
        w.stamp = ++clock_;
        return &w.entry;
      }
    }
    return nullptr;
  }

  bool contains(std::uint64_t addr) const {
    const Set& s = sets_[set_index(addr)];
    return std::any_of(s.ways.begin(), s.ways.end(), [&](const Way& w) {
      return w.valid && w.addr == addr;
    });
  }

  // Installs a line that must not already be present. If the set is full the
  // LRU way is displaced into `victim` and true is returned; the caller owns
  // its writeback.
  bool insert(std::uint64_t addr, CacheEntry entry, std::uint64_t& victim_addr,
              CacheEntry& victim) {
    Set& s = set_of(addr);
    Way* free_way = nullptr;
    Way* lru = nullptr;
    for (Way& w : s.ways) {
      if (w.valid && w.addr == addr)
        throw std::logic_error("cache line inserted twice");
      if (!w.valid && !free_way) free_way = &w;
      if (w.valid && (!lru || w.stamp < lru->stamp)) lru = &w;
    }
    bool evicted = false;
    Way* target = free_way;
    if (!target) {
      victim_addr = lru->addr;
      victim = std::move(lru->entry);
      evicted = true;
      target = lru;
    }
    target->valid = true;
    target->addr = addr;
    target->entry = std::move(entry);
    target->stamp = ++clock_;
    return evicted;
  }

  // Takes a line out without writeback (used by flush loops and resync).
  CacheEntry remove(std::uint64_t addr) {
    Set& s = set_of(addr);
    for (Way& w : s.ways) {
      if (w.valid && w.addr == addr) {
        w.valid = false;
        return std::move(w.entry);
      }
    }
    throw std::logic_error("cache line not present");
  }

  std::vector<std::uint64_t> dirty_addrs() const {
    std::vector<std::uint64_t> out;
    for (const Set& s : sets_)
      for (const Way& w : s.ways)
        if (w.valid && w.entry.dirty) out.push_back(w.addr);
    std::sort(out.begin(), out.end());
    return out;
  }

  void clear() {
    for (Set& s : sets_)
      for (Way& w : s.ways) w.valid = false;
  }

 private:
  struct Way {
    bool valid = false;
    std::uint64_t addr = 0;
    std::uint64_t stamp = 0;
    CacheEntry entry;
  };
  struct Set {
    std::vector<Way> ways;
  };

  std::size_t set_index(std::uint64_t addr) const {
    return static_cast<std::size_t>((addr / kLineBytes) % sets_.size());
  }
  Set& set_of(std::uint64_t addr) {
    Set& s = sets_[set_index(addr)];
    if (s.ways.empty()) s.ways.resize(ways_);
    return s;
  }

  std::uint32_t ways_;
  std::uint64_t clock_ = 0;
  std::vector<Set> sets_;
};

}  // namespace scuesim
