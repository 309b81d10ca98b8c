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
#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "scuesim/nvm_image.hpp"

namespace scuesim {

// A metadata check failed against live state: tampering, or an internal
// consistency bug. Carries where the chain broke.
class IntegrityViolation : public std::runtime_error {
 public:
  enum class Kind { DataMac, LeafMac, NodeHmac, Freshness, Root };

  IntegrityViolation(Kind kind, int level, std::uint64_t index,
                     const std::string& what)
      : std::runtime_error(what), kind(kind), level(level), index(index) {}

  Kind kind;
  int level;            // 0 = leaf/data, levels-1 = root
  std::uint64_t index;  // leaf index, node position, or line address
};

// Deferred branch-counter propagation for one completed write.
struct BranchUpdateJob {
  std::uint64_t leaf_index = 0;
  std::uint64_t enqueue_cycle = 0;
};

enum class ReconVerdict { Clean, RollForwardDetected, RollBackDetected };

inline const char* to_string(ReconVerdict v) {
  switch (v) {
    case ReconVerdict::Clean: return "Clean";
    case ReconVerdict::RollForwardDetected: return "RollForwardDetected";
    case ReconVerdict::RollBackDetected: return "RollBackDetected";
  }
  return "?";
}

struct ReconstructionReport {
  bool root_match = false;
  std::vector<std::uint64_t> hmac_failures;  // leaf indices
  ReconVerdict verdict = ReconVerdict::Clean;
  std::array<std::uint64_t, 8> rebuilt_root{};
  // Rebuilt internal nodes (counters summed bottom-up, tags recomputed).
  std::map<std::pair<int, std::uint64_t>, SitNode> rebuilt;
};

// Bottom-up counter-summing rebuild. Leaf sums become level-1 counters; each
// level sums into the next; the eight rebuilt top sums are compared against
// the trusted root register. Leaf tags are recomputed from stored contents
// and compared; intermediate tags are recomputed fresh, never compared —
// NVM-resident intermediates are legitimately stale under deferred schemes.
inline ReconstructionReport reconstruct(const NvmImage& img,
                                        const RootRegister& root,
                                        bool compare_root = true) {
  const TreeGeometry& g = img.geometry();
  ReconstructionReport rep;

  std::map<std::pair<int, std::uint64_t>, SitNode> levels;
  for (const auto& [leaf, cb] : img.counters()) {
    const MacTag expect =
        macs::leaf_mac(img.key(), g.counter_addr(leaf), cb, img.minor_bits());
    if (!(expect == img.read_leaf_mac(leaf))) rep.hmac_failures.push_back(leaf);
    if (g.internal_levels() == 0) {
      rep.rebuilt_root[static_cast<std::size_t>(g.octant_of_leaf(leaf))] +=
          cb.leaf_sum();
      continue;
    }
    const std::uint64_t pos = g.leaf_position(leaf) >> 3;
    levels[{1, pos}].counters[g.leaf_position(leaf) % 8] = cb.leaf_sum();
  }

  for (int l = 1; l <= g.internal_levels(); ++l) {
    for (auto& [key, node] : levels) {
      if (key.first != l) continue;
      node.hmac = macs::node_mac(img.key(), g.node_addr(l, key.second),
                                 node.counters, node.dummy_counter());
      const std::uint64_t sum = node.dummy_counter();
      if (l == g.internal_levels()) {
        rep.rebuilt_root[key.second % 8] += sum;
      } else {
        levels[{l + 1, key.second >> 3}].counters[key.second % 8] += sum;
      }
    }
  }

  rep.root_match = !compare_root || rep.rebuilt_root == root.counters;
  rep.rebuilt = std::move(levels);
  rep.verdict = !rep.hmac_failures.empty() ? ReconVerdict::RollForwardDetected
                : !rep.root_match          ? ReconVerdict::RollBackDetected
                                           : ReconVerdict::Clean;
  return rep;
}

// --- concurrent tag-assignment models -------------------------------------
//
// Exhaustive interleaving check of root-counter tag assignment under
// simulated writer threads. The naive model splits each enqueue into a read
// of the shared counter and a later write of value+1 (taking value+1 as the
// tag) — two threads reading the same value produce duplicate tags. The
// pre-update model consumes an atomically pre-incremented value per enqueue.

struct InterleavingStats {
  std::uint64_t interleavings = 0;
  std::uint64_t with_duplicate_tags = 0;
  // Interleavings whose sorted tag multiset is not exactly 1..N for N
  // enqueues (duplicates, gaps, or lost updates).
  std::uint64_t with_incorrect_tags = 0;
};

namespace detail {

inline void enumerate_thread_orders(std::vector<int>& remaining,
                                    std::vector<int>& order,
                                    const std::function<void(const std::vector<int>&)>& fn) {
  bool any = false;
  for (std::size_t t = 0; t < remaining.size(); ++t) {
    if (remaining[t] == 0) continue;
    any = true;
    remaining[t] -= 1;
    order.push_back(static_cast<int>(t));
    enumerate_thread_orders(remaining, order, fn);
    order.pop_back();
    remaining[t] += 1;
  }
  if (!any) fn(order);
}

}  // namespace detail

inline InterleavingStats enumerate_tag_interleavings(
    const std::vector<int>& enqueues_per_thread, bool pre_update) {
  const int steps_per_enqueue = pre_update ? 1 : 2;
  std::vector<int> steps;
  for (int e : enqueues_per_thread) steps.push_back(e * steps_per_enqueue);

  InterleavingStats stats;
  std::vector<int> order;
  std::vector<int> remaining = steps;
  detail::enumerate_thread_orders(
      remaining, order, [&](const std::vector<int>& seq) {
        stats.interleavings += 1;
        std::uint64_t root = 0;
        std::vector<std::uint64_t> tags;
        std::vector<std::uint64_t> pending(enqueues_per_thread.size(), 0);
        std::vector<int> phase(enqueues_per_thread.size(), 0);
        for (int t : seq) {
          if (pre_update) {
            tags.push_back(++root);  // atomic fetch-increment
          } else if (phase[static_cast<std::size_t>(t)] == 0) {
            pending[static_cast<std::size_t>(t)] = root;  // read
            phase[static_cast<std::size_t>(t)] = 1;
          } else {
            root = pending[static_cast<std::size_t>(t)] + 1;  // write back
            tags.push_back(root);
            phase[static_cast<std::size_t>(t)] = 0;
          }
        }
        std::sort(tags.begin(), tags.end());
        if (std::adjacent_find(tags.begin(), tags.end()) != tags.end())
          stats.with_duplicate_tags += 1;
        bool exact = true;
        for (std::size_t i = 0; i < tags.size(); ++i)
          exact = exact && tags[i] == i + 1;
        if (!exact) stats.with_incorrect_tags += 1;
      });
  return stats;
}

}  // namespace scuesim
