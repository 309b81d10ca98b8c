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
#include <vector>

namespace scuesim {

enum class OpKind : std::uint8_t { Read, Write };

// Latency charge classes. An operation's clock only advances through
// Ledger::charge, so per-op latency always equals the sum of its classes.
enum class Charge : std::uint8_t {
  NvmRead,  // serial line fetches on the critical path
  Hash,     // MAC computations on the critical path
  Otp,      // pad generation not hidden behind a fetch
  Stall,    // queue-full waits and tag FIFO refills
};

// Why a MAC was evaluated. Together these partition hash_count exactly.
enum class HashWhy : std::uint8_t {
  DataMac,   // MAC over a written line's ciphertext
  Update,    // on-path tree/leaf tag recompute (eager, lazy leaf)
  Verify,    // check of fetched or read data, off the charged path
  Eviction,  // deferred tag recompute at writeback
  Persist,   // periodic counter-block persist
  Resync,    // overflow re-encryption burst
};

struct OpCost {
  OpKind kind = OpKind::Read;
  std::uint64_t start = 0;
  std::uint64_t latency = 0;
  std::uint32_t read_cycles = 0;
  std::uint32_t hash_cycles = 0;
  std::uint32_t otp_cycles = 0;
  std::uint32_t stall_cycles = 0;
  std::uint32_t hash_count = 0;       // MACs for this op's own datapath
  std::uint32_t verify_hashes = 0;    // the uncharged subset of hash_count
  std::uint32_t tree_node_reads = 0;  // metadata lines fetched on-path
  bool overflow_resync = false;
  bool octant_switch = false;
};

struct Totals {
  std::uint64_t ops_read = 0;
  std::uint64_t ops_write = 0;
  std::uint64_t read_latency_sum = 0;
  std::uint64_t write_latency_sum = 0;
  std::uint64_t read_charge = 0;
  std::uint64_t hash_charge = 0;
  std::uint64_t otp_charge = 0;
  std::uint64_t stall_charge = 0;
  std::uint64_t hash_count = 0;  // every MAC evaluated anywhere
  std::uint64_t hash_data_mac = 0;
  std::uint64_t hash_update = 0;
  std::uint64_t hash_verify = 0;
  std::uint64_t hash_eviction = 0;
  std::uint64_t hash_persist = 0;
  std::uint64_t hash_resync = 0;
  std::uint64_t tree_node_reads = 0;  // on-path metadata fetches
  std::uint64_t bg_node_reads = 0;    // background/writeback metadata fetches
  std::uint64_t nvm_user_writes = 0;  // user-port line drains
  std::uint64_t nvm_meta_writes = 0;  // metadata-port line drains
  std::uint64_t cache_hits = 0;
  std::uint64_t cache_misses = 0;
  std::uint64_t cache_evictions = 0;
  std::uint64_t bg_jobs = 0;
  std::uint64_t forced_drains = 0;
  std::uint64_t overflow_resyncs = 0;
  std::uint64_t tag_refills = 0;
  std::uint64_t queue_full_stalls = 0;
  std::uint64_t cb_persists = 0;

  std::uint64_t ops() const { return ops_read + ops_write; }

  double mean_read_latency() const {
    return ops_read ? static_cast<double>(read_latency_sum) /
                          static_cast<double>(ops_read)
                    : 0.0;
  }
  double mean_write_latency() const {
    return ops_write ? static_cast<double>(write_latency_sum) /
                           static_cast<double>(ops_write)
                     : 0.0;
  }
  double cache_hit_ratio() const {
    const std::uint64_t n = cache_hits + cache_misses;
    return n ? static_cast<double>(cache_hits) / static_cast<double>(n) : 0.0;
  }
  double meta_write_fraction() const {
    const std::uint64_t n = nvm_user_writes + nvm_meta_writes;
    return n ? static_cast<double>(nvm_meta_writes) / static_cast<double>(n)
             : 0.0;
  }
};

// Cost accounting for one simulation run. The controller opens an OpCost per
// operation, routes every cycle it spends through charge(), and closes the
// record at completion. Hash and fetch events may also occur with no op open
// (background jobs, shutdown flushes); those land in the totals only.
class Ledger {
 public:
  void begin_op(OpKind kind, std::uint64_t now) {
    cur_ = OpCost{};
    cur_.kind = kind;
    cur_.start = now;
    open_ = true;
  }

  // Advance the open operation by `cycles` under the given class.
  void charge(Charge c, std::uint64_t cycles) {
    if (!open_) throw std::logic_error("charge with no open operation");
    cur_.latency += cycles;
    switch (c) {
      case Charge::NvmRead: cur_.read_cycles += static_cast<std::uint32_t>(cycles); break;
      case Charge::Hash: cur_.hash_cycles += static_cast<std::uint32_t>(cycles); break;
      case Charge::Otp: cur_.otp_cycles += static_cast<std::uint32_t>(cycles); break;
      case Charge::Stall: cur_.stall_cycles += static_cast<std::uint32_t>(cycles); break;
    }
  }

  // Record one MAC evaluation. `charged` means its cycles were (or will be)
  // routed through charge(Hash, …) by the caller.
  void note_hash(HashWhy why, bool charged) {
    totals_.hash_count += 1;
    switch (why) {
      case HashWhy::DataMac: totals_.hash_data_mac += 1; break;
      case HashWhy::Update: totals_.hash_update += 1; break;
      case HashWhy::Verify: totals_.hash_verify += 1; break;
      case HashWhy::Eviction: totals_.hash_eviction += 1; break;
      case HashWhy::Persist: totals_.hash_persist += 1; break;
      case HashWhy::Resync: totals_.hash_resync += 1; break;
    }
    if (open_ && (why == HashWhy::DataMac || why == HashWhy::Update ||
                  why == HashWhy::Verify)) {
      cur_.hash_count += 1;
      if (!charged) cur_.verify_hashes += 1;
    }
  }

  void count_node_read(bool on_path) {
    if (on_path) {
      totals_.tree_node_reads += 1;
      if (open_) cur_.tree_node_reads += 1;
    } else {
      totals_.bg_node_reads += 1;
    }
  }

  void mark_overflow_resync() { cur_.overflow_resync = true; }
  void mark_octant_switch() { cur_.octant_switch = true; }

  std::uint64_t end_op() {
    if (!open_) throw std::logic_error("end_op with no open operation");
    totals_.read_charge += cur_.read_cycles;
    totals_.hash_charge += cur_.hash_cycles;
    totals_.otp_charge += cur_.otp_cycles;
    totals_.stall_charge += cur_.stall_cycles;
    if (cur_.kind == OpKind::Read) {
      totals_.ops_read += 1;
      totals_.read_latency_sum += cur_.latency;
    } else {
      totals_.ops_write += 1;
      totals_.write_latency_sum += cur_.latency;
    }
    if (cur_.overflow_resync) totals_.overflow_resyncs += 1;
    if (record_ops) ops_.push_back(cur_);
    open_ = false;
    return cur_.latency;
  }

  bool op_open() const { return open_; }
  const OpCost& current() const { return cur_; }
  const std::vector<OpCost>& ops() const { return ops_; }
  const Totals& totals() const { return totals_; }
  Totals& totals() { return totals_; }

  bool record_ops = true;

 private:
  OpCost cur_{};
  bool open_ = false;
  std::vector<OpCost> ops_;
  Totals totals_;
};

}  // namespace scuesim
