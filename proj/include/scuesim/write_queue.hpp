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
#include <deque>
#include <limits>
#include <optional>
#include <variant>
#include <vector>

#include "scuesim/metadata.hpp"

namespace scuesim {

// A user-data line heading to memory. Completion is at enqueue; the battery
// (ADR) guarantees queued entries land even across power loss. A root tag
// riding the entry is applied to the root register when the line drains.
struct UserEntry {
  std::uint64_t line_addr = 0;
  DataBlock ciphertext;
  MacTag mac{};
  bool has_tag = false;
  int octant = 0;
  std::uint64_t tag_value = 0;
  std::uint64_t drain_at = 0;
};

struct CounterPersist {
  std::uint64_t leaf = 0;
  CounterBlock cb;
  MacTag leaf_mac{};
};
struct SitPersist {
  int level = 0;
  std::uint64_t position = 0;
  SitNode node;
};
struct BmtPersist {
  int level = 0;
  std::uint64_t position = 0;
  BmtNode node;
};

struct MetaEntry {
  std::variant<CounterPersist, SitPersist, BmtPersist> record;
  std::uint64_t drain_at = 0;
};

// Bounded FIFO draining through a dedicated memory port at one entry per
// `write_cycles`. Entries stay visible for forwarding until they drain.
template <class E>
class DrainQueue {
 public:
  DrainQueue(std::uint32_t capacity, std::uint32_t write_cycles)
      : capacity_(capacity), write_cycles_(write_cycles) {}

  bool full_at(std::uint64_t now) const {
    return occupancy(now) >= capacity_;
  }

  std::uint64_t occupancy(std::uint64_t now) const {
    std::uint64_t n = 0;
    for (const E& e : entries_)
      if (e.drain_at > now) ++n;
    return n;
  }

  // Time at which a slot next frees up (the oldest undrained entry's drain).
  std::uint64_t earliest_drain(std::uint64_t now) const {
    std::uint64_t best = std::numeric_limits<std::uint64_t>::max();
    for (const E& e : entries_)
      if (e.drain_at > now && e.drain_at < best) best = e.drain_at;
    return best;
  }

  // Caller must have resolved any full-queue stall first.
  void enqueue(E entry, std::uint64_t now) {
    entry.drain_at = std::max(port_free_, now) + write_cycles_;
    port_free_ = entry.drain_at;
    entries_.push_back(std::move(entry));
  }

  // Entries whose drain completed by `now`, FIFO, removed from the queue.
  std::vector<E> take_ready(std::uint64_t now) {
    std::vector<E> out;
    while (!entries_.empty() && entries_.front().drain_at <= now) {
      out.push_back(std::move(entries_.front()));
      entries_.pop_front();
    }
    return out;
  }

  // Everything still queued, FIFO — the ADR flush path at power loss.
  std::vector<E> take_all() {
    std::vector<E> out(entries_.begin(), entries_.end());
    entries_.clear();
    return out;
  }

  // Newest in-flight copy for a given predicate (read forwarding).
  template <class Pred>
  const E* find_newest(Pred pred) const {
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it)
      if (pred(*it)) return &*it;
    return nullptr;
  }

  bool empty() const { return entries_.empty(); }
  std::size_t queued() const { return entries_.size(); }
  std::uint64_t port_free() const { return port_free_; }

 private:
  std::uint32_t capacity_;
  std::uint32_t write_cycles_;
  std::uint64_t port_free_ = 0;
  std::deque<E> entries_;
};

}  // namespace scuesim
