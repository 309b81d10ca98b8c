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
#include <deque>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <variant>
#include <vector>

#include "scuesim/cache.hpp"
#include "scuesim/config.hpp"
#include "scuesim/crypto.hpp"
#include "scuesim/ledger.hpp"
#include "scuesim/metadata.hpp"
#include "scuesim/nvm_image.hpp"
#include "scuesim/tree.hpp"
#include "scuesim/write_queue.hpp"

namespace scuesim {

struct ReadResult {
  DataBlock plaintext;
  std::uint64_t latency = 0;
};

// Cycle-level model of a secure memory controller in front of NVM.
//
// One operation runs at a time; its clock advances only through
// Ledger::charge, so total run time always equals the sum of per-op
// latencies. A write completes at enqueue into the battery-backed (ADR)
// user queue; each queue drains through its own port at a fixed spacing.
// Counter freshness is checked by sum against the parent, up to the
// on-chip root register; MAC checks of fetched state happen off the
// charged path (verify-on-fill).
class Controller {
 public:
  explicit Controller(const Config& cfg)
      : Controller(cfg,
                   NvmImage(SecretKey::from_u64(cfg.seed, 0x73637565),
                            TreeGeometry::from_mem_bytes(cfg.mem_size),
                            static_cast<int>(cfg.minor_bits))) {}

  // Resume on an existing image (e.g. one healed by recovery). The image's
  // root register is taken as the live root.
  Controller(const Config& cfg, NvmImage image)
      : cfg_(cfg),
        key_(image.key()),
        geo_(image.geometry()),
        image_(std::move(image)),
        cache_(cfg.cache_kib, cfg.cache_ways),
        user_q_(cfg.wq_user, cfg.nvm_write_cycles),
        meta_q_(cfg.wq_meta, cfg.meta_write_cycles) {
    cfg_.validate();
    if (cfg_.mem_size != geo_.mem_bytes)
      throw std::invalid_argument("config and image memory size differ");
    live_root_ = image_.root().counters;
    // Prime the tag FIFO so a first same-octant write needs no refill.
    if (uses_tags()) prefill_tags(0);
  }

  // --- operations ---

  ReadResult read(std::uint64_t addr) {
    require_live();
    ledger_.begin_op(OpKind::Read, now_);
    advance_queues(now_);
    const BranchLayout b = layout(addr, geo_);

    CacheEntry* cb_e = resolve_counter(b.leaf, /*on_path=*/true);
    const CounterBlock& cb = std::get<CounterBlock>(cb_e->payload);
    const std::uint64_t major = cb.major;
    const std::uint32_t minor = cb.minors[static_cast<std::size_t>(b.slot)];

    // Newest queued copy wins over the stored one; queue entries are
    // on-chip, so forwarding costs no fetch and needs no verification.
    const UserEntry* fwd = user_q_.find_newest(
        [&](const UserEntry& e) { return e.line_addr == addr; });
    DataBlock ct;
    MacTag mac{};
    if (fwd) {
      ct = fwd->ciphertext;
      mac = fwd->mac;
    } else {
      ct = image_.read_data(addr);
      mac = image_.read_data_mac(addr);
    }

    const bool chain_fetched = ledger_.current().read_cycles > 0;
    if (!fwd && !chain_fetched) {
      // Warm path: pad generation overlaps the data fetch; the longer of
      // the two bounds the latency.
      ledger_.charge(Charge::NvmRead, cfg_.nvm_read_cycles);
      if (cfg_.otp_cycles > cfg_.nvm_read_cycles)
        ledger_.charge(Charge::Otp, cfg_.otp_cycles - cfg_.nvm_read_cycles);
    } else {
      // The metadata chain (or the queue hit) hides the data fetch; only
      // pad generation remains exposed.
      ledger_.charge(Charge::Otp, cfg_.otp_cycles);
    }

    if (!fwd) {
      ledger_.note_hash(HashWhy::Verify, false);
      if (macs::data_mac(key_, addr, major, minor, ct).value != mac.value)
        throw IntegrityViolation(IntegrityViolation::Kind::DataMac, 0, addr,
                                 "data line tag mismatch");
    }

    ReadResult r;
    r.plaintext =
        DataBlock{xor_cipher(ct.bytes, gen_otp(key_, addr, major, minor))};
    r.latency = ledger_.end_op();
    now_ += r.latency;
    if (cfg_.bg_drain == BgDrain::PerOp) run_jobs(-1);
    return r;
  }

  std::uint64_t write(std::uint64_t addr, const DataBlock& plaintext) {
    require_live();
    ledger_.begin_op(OpKind::Write, now_);
    advance_queues(now_);
    const BranchLayout b = layout(addr, geo_);

    CacheEntry* cb_e = resolve_counter(b.leaf, /*on_path=*/true);
    const CounterBlock old_cb = std::get<CounterBlock>(cb_e->payload);

    std::optional<std::uint64_t> direct_tag;
    const bool overflow = std::get<CounterBlock>(cb_e->payload)
                              .increment_minor(b.slot, static_cast<int>(cfg_.minor_bits));
    cb_e->dirty = true;
    if (overflow) {
      cb_e->hmac_valid = false;  // stored tag is stale until resync rebinds it
      direct_tag = overflow_resync(b, old_cb);
    } else {
      scheme_update(b, cb_e);
    }

    // Chain work may have evicted and re-admitted the block; re-acquire.
    cb_e = lookup_counter(b.leaf);

    // Encrypt and MAC the line under the new pair. Pad generation is fully
    // hidden behind the (already charged) metadata work, so only the MAC
    // shows up in the latency.
    const CounterBlock& cb_now = std::get<CounterBlock>(cb_e->payload);
    const std::uint64_t major = cb_now.major;
    const std::uint32_t minor = cb_now.minors[static_cast<std::size_t>(b.slot)];
    note_pair(addr, major, minor);
    UserEntry entry;
    entry.line_addr = addr;
    entry.ciphertext =
        DataBlock{xor_cipher(plaintext.bytes, gen_otp(key_, addr, major, minor))};
    entry.mac = macs::data_mac(key_, addr, major, minor, entry.ciphertext);
    ledger_.note_hash(HashWhy::DataMac, true);
    ledger_.charge(Charge::Hash, cfg_.hash_cycles);

    if (uses_tags()) {
      entry.has_tag = true;
      entry.octant = b.octant;
      entry.tag_value = direct_tag ? *direct_tag : consume_tag(b.octant);
    }

    if (user_q_.full_at(op_time())) {
      ledger_.totals().queue_full_stalls += 1;
      stall_until(user_q_.earliest_drain(op_time()));
    }
    user_q_.enqueue(std::move(entry), op_time());

    maybe_periodic_persist(b.leaf, cb_e);

    const std::uint64_t lat = ledger_.end_op();
    now_ += lat;
    if (cfg_.bg_drain == BgDrain::PerOp) run_jobs(-1);
    return lat;
  }

  // --- warm-up / inspection / shutdown ---

  // Installs a counter block into the cache without fetching or verifying
  // its branch and without touching the ledger. Test harness warm-up only.
  void preload_counter(std::uint64_t addr) {
    require_live();
    const BranchLayout b = layout(addr, geo_);
    const std::uint64_t caddr = geo_.counter_addr(b.leaf);
    if (cache_.lookup(caddr)) return;
    CacheEntry e;
    e.id = MetaId{MetaKind::Counter, 0, b.leaf};
    e.payload = image_.read_counter(b.leaf);
    e.leaf_mac = image_.read_leaf_mac(b.leaf);
    install(caddr, std::move(e));
  }

  // The live value of a leaf's counter block: cache, then queued persist,
  // then stored copy.
  CounterBlock live_counter(std::uint64_t leaf) {
    require_live();
    const std::uint64_t caddr = geo_.counter_addr(leaf);
    if (CacheEntry* e = cache_.lookup(caddr))
      return std::get<CounterBlock>(e->payload);
    const MetaEntry* m = meta_q_.find_newest([&](const MetaEntry& e) {
      const auto* cp = std::get_if<CounterPersist>(&e.record);
      return cp && cp->leaf == leaf;
    });
    if (m) return std::get<CounterPersist>(m->record).cb;
    return image_.read_counter(leaf);
  }

  // Runs pending branch updates, evicts every dirty line bottom-up, and
  // lets both queues drain. Leaves the stored image fully consistent.
  void flush_all() {
    require_live();
    run_jobs(-1);
    // Ascending address order is ascending level order, so parents are
    // still available when a child's writeback needs them.
    for (;;) {
      const std::vector<std::uint64_t> dirty = cache_.dirty_addrs();
      if (dirty.empty()) break;
      CacheEntry victim = cache_.remove(dirty.front());
      ledger_.totals().cache_evictions += 1;
      writeback(dirty.front(), std::move(victim));
    }
    const std::uint64_t done =
        std::max(user_q_.port_free(), meta_q_.port_free());
    if (done > now_) now_ = done;
    advance_queues(now_);
  }

  // Power-loss image: everything already queued lands (ADR), in FIFO order;
  // cached state and pending background work are lost. The controller is
  // consumed by this call.
  NvmImage take_crash_image() {
    require_live();
    for (UserEntry& e : user_q_.take_all()) apply_user(e);
    for (MetaEntry& e : meta_q_.take_all()) apply_meta(e);
    cache_.clear();
    jobs_.clear();
    dead_ = true;
    return std::move(image_);
  }

  const Config& config() const { return cfg_; }
  const TreeGeometry& geometry() const { return geo_; }
  const SecretKey& key() const { return key_; }
  std::uint64_t now() const { return now_; }
  Ledger& ledger() { return ledger_; }
  const Ledger& ledger() const { return ledger_; }
  NvmImage& image() { return image_; }
  const NvmImage& image() const { return image_; }
  const std::array<std::uint64_t, 8>& live_root() const { return live_root_; }
  std::uint64_t pending_jobs() const { return jobs_.size(); }
  std::uint64_t queued_user_writes() const { return user_q_.queued(); }
  std::uint64_t queued_meta_writes() const { return meta_q_.queued(); }
  const std::deque<std::uint64_t>& prepared_tags() const {
    return prepared_tags_;
  }

 private:
  // --- time ---

  std::uint64_t op_time() const {
    return ledger_.op_open() ? now_ + ledger_.current().latency : now_;
  }

  void stall_until(std::uint64_t t) {
    const std::uint64_t at = op_time();
    if (t > at) ledger_.charge(Charge::Stall, t - at);
  }

  void require_live() const {
    if (dead_)
      throw std::logic_error("controller used after take_crash_image");
  }

  bool uses_tags() const {
    return cfg_.scheme == Scheme::Eager ||
           cfg_.scheme == Scheme::LazyComputing || cfg_.scheme == Scheme::Scue;
  }

  // --- queue drains ---

  void apply_user(const UserEntry& e) {
    image_.write_data(e.line_addr, e.ciphertext);
    image_.write_data_mac(e.line_addr, e.mac);
    if (e.has_tag)
      image_.root().counters[static_cast<std::size_t>(e.octant)] = e.tag_value;
    ledger_.totals().nvm_user_writes += 1;
  }

  void apply_meta(const MetaEntry& e) {
    if (const auto* cp = std::get_if<CounterPersist>(&e.record)) {
      image_.write_counter(cp->leaf, cp->cb);
      image_.write_leaf_mac(cp->leaf, cp->leaf_mac);
    } else if (const auto* sp = std::get_if<SitPersist>(&e.record)) {
      image_.write_sit(sp->level, sp->position, sp->node);
    } else {
      const auto& bp = std::get<BmtPersist>(e.record);
      image_.write_bmt(bp.level, bp.position, bp.node);
    }
    ledger_.totals().nvm_meta_writes += 1;
  }

  void advance_queues(std::uint64_t t) {
    for (UserEntry& e : user_q_.take_ready(t)) apply_user(e);
    for (MetaEntry& e : meta_q_.take_ready(t)) apply_meta(e);
  }

  // --- background branch updates ---

  int octant_of_position(int level, std::uint64_t pos) const {
    return static_cast<int>(pos >> (3 * (geo_.internal_levels() - level)));
  }

  std::uint32_t pending_in_octant(int octant) const {
    std::uint32_t n = 0;
    for (const BranchUpdateJob& j : jobs_)
      if (geo_.octant_of_leaf(j.leaf_index) == octant) ++n;
    return n;
  }

  // Pending (and currently executing) branch updates whose level-`level`
  // ancestor is `pos`. Level 0 addresses leaves by position.
  std::uint64_t subtree_lag(int level, std::uint64_t pos) const {
    if (cfg_.scheme != Scheme::Scue || jobs_.empty()) return 0;
    std::uint64_t n = 0;
    for (const BranchUpdateJob& j : jobs_)
      if (geo_.node_position(j.leaf_index, level) == pos) ++n;
    return n;
  }

  void maybe_force_drain(int octant) {
    if (cfg_.scheme != Scheme::Scue || running_jobs_ || jobs_.empty()) return;
    if (pending_in_octant(octant) == 0) return;
    ledger_.totals().forced_drains += 1;
    run_jobs(octant);
  }

  void run_jobs(int only_octant) {
    if (jobs_.empty()) return;
    running_jobs_ = true;
    std::size_t i = 0;
    while (i < jobs_.size()) {
      const BranchUpdateJob job = jobs_[i];
      if (only_octant >= 0 &&
          geo_.octant_of_leaf(job.leaf_index) != only_octant) {
        ++i;
        continue;
      }
      // The job stays queued while it runs so freshness checks along its
      // own branch still see it as in flight.
      execute_job(job);
      jobs_.erase(jobs_.begin() + static_cast<std::ptrdiff_t>(i));
      ledger_.totals().bg_jobs += 1;
    }
    running_jobs_ = false;
  }

  void execute_job(const BranchUpdateJob& job) {
    const bool on_path = ledger_.op_open();
    for (int l = 1; l <= geo_.internal_levels(); ++l) {
      CacheEntry* e =
          resolve_sit(l, geo_.node_position(job.leaf_index, l), on_path);
      SitNode& n = std::get<SitNode>(e->payload);
      n.counters[static_cast<std::size_t>(
          geo_.child_slot(job.leaf_index, l - 1))] += 1;
      e->dirty = true;
      e->hmac_valid = false;
    }
  }

  // --- metadata resolution & verification ---

  // Insert, handling the victim's writeback. In rare same-set cascades the
  // writeback's own fetches can evict the line just inserted; callers then
  // retry, which finds the evicted copy for free in the metadata queue.
  CacheEntry* install(std::uint64_t addr, CacheEntry e) {
    // Nested writeback work during a fetch can have admitted this line
    // already (buffer pull or queue refetch); that copy carries any bumps
    // applied in the meantime, so the just-fetched copy is the stale one.
    if (CacheEntry* existing = cache_.lookup(addr)) {
      retry_streak_ = 0;
      return existing;
    }
    std::uint64_t victim_addr = 0;
    CacheEntry victim;
    if (cache_.insert(addr, std::move(e), victim_addr, victim)) {
      ledger_.totals().cache_evictions += 1;
      writeback(victim_addr, std::move(victim));
    }
    CacheEntry* out = cache_.lookup(addr);
    if (out) {
      retry_streak_ = 0;
      return out;
    }
    if (++retry_streak_ > 32)
      throw std::logic_error("cache thrash: line cannot stay resident");
    return nullptr;
  }

  CacheEntry* lookup_counter(std::uint64_t leaf) {
    if (CacheEntry* e = cache_.lookup(geo_.counter_addr(leaf))) return e;
    return resolve_counter(leaf, /*on_path=*/true);
  }

  CacheEntry* resolve_counter(std::uint64_t leaf, bool on_path) {
    const std::uint64_t caddr = geo_.counter_addr(leaf);
    if (CacheEntry* e = cache_.lookup(caddr)) {
      ledger_.totals().cache_hits += 1;
      return e;
    }
    ledger_.totals().cache_misses += 1;
    maybe_force_drain(geo_.octant_of_leaf(leaf));
    if (CacheEntry* e = pull_buffered(caddr)) return e;

    CacheEntry e;
    e.id = MetaId{MetaKind::Counter, 0, leaf};
    const MetaEntry* m = meta_q_.find_newest([&](const MetaEntry& me) {
      const auto* cp = std::get_if<CounterPersist>(&me.record);
      return cp && cp->leaf == leaf;
    });
    if (m) {
      // Own queued writeback: on-chip, trusted, free.
      const auto& cp = std::get<CounterPersist>(m->record);
      e.payload = cp.cb;
      e.leaf_mac = cp.leaf_mac;
    } else {
      const CounterBlock cb = image_.read_counter(leaf);
      const MacTag stored_mac = image_.read_leaf_mac(leaf);
      if (on_path) ledger_.charge(Charge::NvmRead, cfg_.nvm_read_cycles);
      ledger_.count_node_read(on_path);
      verify_counter(leaf, cb, stored_mac, on_path);
      e.payload = cb;
      e.leaf_mac = stored_mac;
    }
    if (CacheEntry* out = install(caddr, std::move(e))) return out;
    return resolve_counter(leaf, on_path);
  }

  void verify_counter(std::uint64_t leaf, const CounterBlock& cb,
                      MacTag stored_mac, bool on_path) {
    if (cfg_.scheme == Scheme::BmtEager) {
      // First touch of a never-stored block is trusted-initial.
      if (!image_.counters().count(leaf)) return;
      const MacTag want = counter_digest(leaf, cb);
      const MacTag have =
          bmt_parent_digest_slot(0, geo_.leaf_position(leaf), on_path);
      ledger_.note_hash(HashWhy::Verify, false);
      if (want.value != have.value)
        throw IntegrityViolation(IntegrityViolation::Kind::LeafMac, 0, leaf,
                                 "counter block digest mismatch");
      return;
    }
    ledger_.note_hash(HashWhy::Verify, false);
    if (macs::leaf_mac(key_, geo_.counter_addr(leaf), cb,
                       static_cast<int>(cfg_.minor_bits))
            .value != stored_mac.value)
      throw IntegrityViolation(IntegrityViolation::Kind::LeafMac, 0, leaf,
                               "counter block tag mismatch");
    // The block advances at write time, its parent only when the queued
    // branch update lands, so the block may run ahead by the pending jobs.
    const std::uint64_t parent =
        parent_slot_value(0, geo_.leaf_position(leaf), on_path);
    const std::uint64_t lag = subtree_lag(0, geo_.leaf_position(leaf));
    if (cb.leaf_sum() != parent + lag)
      throw IntegrityViolation(IntegrityViolation::Kind::Freshness, 0, leaf,
                               "counter block stale against parent");
  }

  // The freshness bound for the node/block at (level, pos): its parent's
  // child counter, or the root register slot at the top.
  std::uint64_t parent_slot_value(int level, std::uint64_t pos, bool on_path) {
    if (level == geo_.internal_levels())
      return live_root_[static_cast<std::size_t>(pos)];
    CacheEntry* p = resolve_sit(level + 1, pos >> 3, on_path);
    return std::get<SitNode>(p->payload)
        .counters[static_cast<std::size_t>(pos % 8)];
  }

  CacheEntry* resolve_sit(int level, std::uint64_t pos, bool on_path) {
    const std::uint64_t addr = geo_.node_addr(level, pos);
    if (CacheEntry* e = cache_.lookup(addr)) {
      ledger_.totals().cache_hits += 1;
      return e;
    }
    ledger_.totals().cache_misses += 1;
    maybe_force_drain(octant_of_position(level, pos));
    if (CacheEntry* e = cache_.lookup(addr)) return e;  // drain pulled it in
    if (CacheEntry* e = pull_buffered(addr)) return e;

    CacheEntry e;
    e.id = MetaId{MetaKind::Sit, level, pos};
    const MetaEntry* m = meta_q_.find_newest([&](const MetaEntry& me) {
      const auto* sp = std::get_if<SitPersist>(&me.record);
      return sp && sp->level == level && sp->position == pos;
    });
    if (m) {
      e.payload = std::get<SitPersist>(m->record).node;
    } else {
      SitNode n = image_.read_sit(level, pos);
      if (on_path) ledger_.charge(Charge::NvmRead, cfg_.nvm_read_cycles);
      ledger_.count_node_read(on_path);
      verify_sit(level, pos, n, on_path);
      e.payload = n;
    }
    if (CacheEntry* out = install(addr, std::move(e))) return out;
    return resolve_sit(level, pos, on_path);
  }

  void verify_sit(int level, std::uint64_t pos, const SitNode& n,
                  bool on_path) {
    const std::uint64_t addr = geo_.node_addr(level, pos);
    const std::uint64_t parent = parent_slot_value(level, pos, on_path);
    ledger_.note_hash(HashWhy::Verify, false);
    if (cfg_.scheme == Scheme::Lazy) {
      // The tag binds the live parent counter, which doubles as the
      // freshness check.
      if (macs::node_mac(key_, addr, n.counters, parent).value != n.hmac.value)
        throw IntegrityViolation(IntegrityViolation::Kind::NodeHmac, level, pos,
                                 "tree node tag mismatch");
      return;
    }
    if (macs::node_mac(key_, addr, n.counters, n.dummy_counter()).value !=
        n.hmac.value)
      throw IntegrityViolation(IntegrityViolation::Kind::NodeHmac, level, pos,
                               "tree node tag mismatch");
    // A branch update lands on a node and on its parent slot together, so
    // internal pairs always agree exactly. Only the root register runs
    // ahead: it advances per write, the top nodes per landed update.
    const std::uint64_t lag =
        level == geo_.internal_levels() ? subtree_lag(level, pos) : 0;
    if (n.dummy_counter() + lag != parent)
      throw IntegrityViolation(IntegrityViolation::Kind::Freshness, level, pos,
                               "tree node stale against parent");
  }

  // --- digest tree (bmt-eager) ---

  MacTag counter_digest(std::uint64_t leaf, const CounterBlock& cb) const {
    const std::vector<std::uint8_t> bytes =
        cb.serialize(static_cast<int>(cfg_.minor_bits));
    return macs::bmt_digest(key_, geo_.counter_addr(leaf), bytes.data(),
                            bytes.size());
  }

  MacTag node_digest(int level, std::uint64_t pos, const BmtNode& n) const {
    const auto bytes = n.serialize();
    return macs::bmt_digest(key_, geo_.bmt_node_addr(level, pos), bytes.data(),
                            bytes.size());
  }

  // The digest recorded for child position `child_pos` of level
  // `child_level`, held by its parent (or the digest root register).
  MacTag bmt_parent_digest_slot(int child_level, std::uint64_t child_pos,
                                bool on_path) {
    if (child_level == geo_.internal_levels())
      return image_.bmt_root()[static_cast<std::size_t>(child_pos)];
    CacheEntry* p = resolve_bmt(child_level + 1, child_pos >> 3, on_path);
    return std::get<BmtNode>(p->payload)
        .digests[static_cast<std::size_t>(child_pos % 8)];
  }

  CacheEntry* resolve_bmt(int level, std::uint64_t pos, bool on_path) {
    const std::uint64_t addr = geo_.bmt_node_addr(level, pos);
    if (CacheEntry* e = cache_.lookup(addr)) {
      ledger_.totals().cache_hits += 1;
      return e;
    }
    ledger_.totals().cache_misses += 1;
    if (CacheEntry* e = pull_buffered(addr)) return e;

    CacheEntry e;
    e.id = MetaId{MetaKind::Bmt, level, pos};
    const MetaEntry* m = meta_q_.find_newest([&](const MetaEntry& me) {
      const auto* bp = std::get_if<BmtPersist>(&me.record);
      return bp && bp->level == level && bp->position == pos;
    });
    if (m) {
      e.payload = std::get<BmtPersist>(m->record).node;
    } else {
      auto [n, present] = image_.read_bmt(level, pos);
      if (on_path) ledger_.charge(Charge::NvmRead, cfg_.nvm_read_cycles);
      ledger_.count_node_read(on_path);
      if (present) {
        const MacTag want = node_digest(level, pos, n);
        const MacTag have = bmt_parent_digest_slot(level, pos, on_path);
        ledger_.note_hash(HashWhy::Verify, false);
        if (want.value != have.value)
          throw IntegrityViolation(IntegrityViolation::Kind::NodeHmac, level,
                                   pos, "digest node mismatch");
      }
      e.payload = n;
    }
    if (CacheEntry* out = install(addr, std::move(e))) return out;
    return resolve_bmt(level, pos, on_path);
  }

  // --- eviction writebacks (write-behind; never charged to an op) ---

  // Dirty victims wait in a small on-chip buffer and are written back one at
  // a time. Processing a victim can evict further lines (its parent fetch
  // needs a way); those land in the buffer instead of recursing, so a line's
  // pending counters can never be shadowed by a stale refetch mid-flight.
  void writeback(std::uint64_t addr, CacheEntry victim) {
    if (!victim.dirty) return;
    wb_buffer_.emplace_back(addr, std::move(victim));
    if (wb_active_) return;
    wb_active_ = true;
    while (!wb_buffer_.empty()) {
      auto [a, v] = std::move(wb_buffer_.front());
      wb_buffer_.pop_front();
      write_back_now(a, std::move(v));
    }
    wb_active_ = false;
  }

  // A miss that hits the writeback buffer re-admits the buffered line: it is
  // our own dirty state, trusted and free, and must win over any stored copy.
  CacheEntry* pull_buffered(std::uint64_t addr) {
    for (;;) {
      const auto it =
          std::find_if(wb_buffer_.begin(), wb_buffer_.end(),
                       [&](const auto& p) { return p.first == addr; });
      if (it == wb_buffer_.end()) return nullptr;
      CacheEntry e = std::move(it->second);
      wb_buffer_.erase(it);
      if (CacheEntry* out = install(addr, std::move(e))) return out;
      // Displaced again while installing: either back in the buffer (retry)
      // or already written back, in which case the caller finds it queued.
    }
  }

  void write_back_now(std::uint64_t addr, CacheEntry victim) {
    switch (victim.id.kind) {
      case MetaKind::Counter: {
        if (!victim.hmac_valid) {
          victim.leaf_mac =
              macs::leaf_mac(key_, addr, std::get<CounterBlock>(victim.payload),
                             static_cast<int>(cfg_.minor_bits));
          ledger_.note_hash(HashWhy::Eviction, false);
        }
        enqueue_meta(MetaEntry{
            CounterPersist{victim.id.index,
                           std::get<CounterBlock>(victim.payload),
                           victim.leaf_mac},
            0});
        return;
      }
      case MetaKind::Sit: {
        SitNode& n = std::get<SitNode>(victim.payload);
        if (cfg_.scheme == Scheme::Lazy) {
          // Ancestors advance only here: bump the parent's child counter
          // and bind the new value into the evicted node's tag.
          const int level = victim.id.level;
          const std::uint64_t pos = victim.id.index;
          std::uint64_t bound;
          if (level == geo_.internal_levels()) {
            live_root_[static_cast<std::size_t>(pos)] += 1;
            image_.root().counters[static_cast<std::size_t>(pos)] =
                live_root_[static_cast<std::size_t>(pos)];
            bound = live_root_[static_cast<std::size_t>(pos)];
          } else {
            CacheEntry* p = resolve_sit(level + 1, pos >> 3, /*on_path=*/false);
            SitNode& pn = std::get<SitNode>(p->payload);
            pn.counters[static_cast<std::size_t>(pos % 8)] += 1;
            p->dirty = true;
            p->hmac_valid = false;
            bound = pn.counters[static_cast<std::size_t>(pos % 8)];
          }
          n.hmac = macs::node_mac(key_, addr, n.counters, bound);
          ledger_.note_hash(HashWhy::Eviction, false);
        } else if (!victim.hmac_valid) {
          // Deferred tag: recompute from the node's own child sum; the
          // parent is never fetched for this.
          n.hmac = macs::node_mac(key_, addr, n.counters, n.dummy_counter());
          ledger_.note_hash(HashWhy::Eviction, false);
        }
        enqueue_meta(
            MetaEntry{SitPersist{victim.id.level, victim.id.index, n}, 0});
        return;
      }
      case MetaKind::Bmt: {
        // Parents were updated when the node changed; persist as-is.
        enqueue_meta(MetaEntry{BmtPersist{victim.id.level, victim.id.index,
                                          std::get<BmtNode>(victim.payload)},
                               0});
        return;
      }
    }
  }

  void enqueue_meta(MetaEntry e) {
    if (ledger_.op_open() && meta_q_.full_at(op_time())) {
      ledger_.totals().queue_full_stalls += 1;
      stall_until(meta_q_.earliest_drain(op_time()));
    }
    meta_q_.enqueue(std::move(e), op_time());
  }

  // --- per-scheme write-path work ---

  void scheme_update(const BranchLayout& b, CacheEntry* cb_e) {
    switch (cfg_.scheme) {
      case Scheme::Eager: {
        // Leaf tag first (while the block pointer is fresh), then the
        // branch; every touched node gets its tag recomputed in place.
        cb_e->leaf_mac =
            macs::leaf_mac(key_, geo_.counter_addr(b.leaf),
                           std::get<CounterBlock>(cb_e->payload),
                           static_cast<int>(cfg_.minor_bits));
        ledger_.note_hash(HashWhy::Update, true);
        std::uint32_t recomputes = 1;
        for (int l = 1; l <= geo_.internal_levels(); ++l) {
          const std::uint64_t pos =
              b.node_positions[static_cast<std::size_t>(l - 1)];
          CacheEntry* e = resolve_sit(l, pos, /*on_path=*/true);
          SitNode& n = std::get<SitNode>(e->payload);
          n.counters[static_cast<std::size_t>(
              geo_.child_slot(b.leaf, l - 1))] += 1;
          n.hmac = macs::node_mac(key_, geo_.node_addr(l, pos), n.counters,
                                  n.dummy_counter());
          e->dirty = true;
          ledger_.note_hash(HashWhy::Update, true);
          ++recomputes;
        }
        const std::uint32_t par =
            std::max<std::uint32_t>(1, cfg_.eager_parallel_hashes);
        const std::uint32_t batches = (recomputes + par - 1) / par;
        ledger_.charge(Charge::Hash, std::uint64_t{batches} * cfg_.hash_cycles);
        return;
      }
      case Scheme::Lazy: {
        cb_e->leaf_mac =
            macs::leaf_mac(key_, geo_.counter_addr(b.leaf),
                           std::get<CounterBlock>(cb_e->payload),
                           static_cast<int>(cfg_.minor_bits));
        ledger_.note_hash(HashWhy::Update, true);
        ledger_.charge(Charge::Hash, cfg_.hash_cycles);
        if (geo_.internal_levels() > 0) {
          CacheEntry* e = resolve_sit(1, b.node_positions[0], /*on_path=*/true);
          SitNode& n = std::get<SitNode>(e->payload);
          n.counters[static_cast<std::size_t>(geo_.child_slot(b.leaf, 0))] += 1;
          e->dirty = true;
          e->hmac_valid = false;
        } else {
          // Two-level tree: the register itself is the parent.
          live_root_[static_cast<std::size_t>(b.octant)] += 1;
          image_.root().counters[static_cast<std::size_t>(b.octant)] =
              live_root_[static_cast<std::size_t>(b.octant)];
        }
        return;
      }
      case Scheme::LazyComputing: {
        cb_e->hmac_valid = false;
        for (int l = 1; l <= geo_.internal_levels(); ++l) {
          CacheEntry* e =
              resolve_sit(l, b.node_positions[static_cast<std::size_t>(l - 1)],
                          /*on_path=*/true);
          SitNode& n = std::get<SitNode>(e->payload);
          n.counters[static_cast<std::size_t>(
              geo_.child_slot(b.leaf, l - 1))] += 1;
          e->dirty = true;
          e->hmac_valid = false;
        }
        return;
      }
      case Scheme::Scue: {
        // No tree touches here: a background job carries the branch
        // increments, and the root advances through the prepared tag.
        // A two-level tree has no internal nodes, so no job either.
        cb_e->hmac_valid = false;
        if (geo_.internal_levels() > 0)
          jobs_.push_back(BranchUpdateJob{b.leaf, now_});
        return;
      }
      case Scheme::BmtEager: {
        const CounterBlock cb = std::get<CounterBlock>(cb_e->payload);
        bmt_chain_update(b, cb, /*charged=*/true);
        return;
      }
    }
  }

  // Recompute the digest chain from the (already updated) counter block to
  // the digest root. Serial: each level's digest feeds the next.
  void bmt_chain_update(const BranchLayout& b, const CounterBlock& cb,
                        bool charged) {
    MacTag d = counter_digest(b.leaf, cb);
    ledger_.note_hash(HashWhy::Update, charged);
    if (charged) ledger_.charge(Charge::Hash, cfg_.hash_cycles);
    std::uint64_t child_pos = geo_.leaf_position(b.leaf);
    for (int l = 1; l <= geo_.internal_levels(); ++l) {
      CacheEntry* e = resolve_bmt(l, child_pos >> 3, /*on_path=*/charged);
      BmtNode& n = std::get<BmtNode>(e->payload);
      n.digests[static_cast<std::size_t>(child_pos % 8)] = d;
      e->dirty = true;
      d = node_digest(l, child_pos >> 3, n);
      ledger_.note_hash(HashWhy::Update, charged);
      if (charged) ledger_.charge(Charge::Hash, cfg_.hash_cycles);
      child_pos >>= 3;
    }
    // child_pos is now the top-level position; its digest lives in the
    // on-chip digest root register.
    image_.bmt_root()[static_cast<std::size_t>(child_pos)] = d;
  }

  // --- root tags ---

  void prefill_tags(int octant) {
    predicted_octant_ = octant;
    prepared_tags_.clear();
    const std::uint64_t occupied = user_q_.occupancy(op_time());
    const std::uint64_t free_slots =
        cfg_.wq_user > occupied ? cfg_.wq_user - occupied : 0;
    const std::uint64_t n = std::max<std::uint64_t>(1, free_slots);
    const std::uint64_t base = live_root_[static_cast<std::size_t>(octant)];
    for (std::uint64_t k = 1; k <= n; ++k) prepared_tags_.push_back(base + k);
    ledger_.totals().tag_refills += 1;
  }

  std::uint64_t consume_tag(int octant) {
    if (predicted_octant_ != octant) {
      // Mispredicted octant: discard and refill, stalling the write.
      ledger_.mark_octant_switch();
      ledger_.charge(Charge::Stall, cfg_.tag_refill_cycles);
      prefill_tags(octant);
    } else if (prepared_tags_.empty()) {
      prefill_tags(octant);
    }
    const std::uint64_t tag = prepared_tags_.front();
    prepared_tags_.pop_front();
    live_root_[static_cast<std::size_t>(octant)] += 1;
    if (tag != live_root_[static_cast<std::size_t>(octant)])
      throw std::logic_error("prepared tag out of step with root counter");
    return tag;
  }

  // --- periodic counter persistence ---

  void maybe_periodic_persist(std::uint64_t leaf, CacheEntry* cb_e) {
    if (cfg_.cb_persist_period == 0) return;
    cb_e->updates_since_persist += 1;
    if (cb_e->updates_since_persist < cfg_.cb_persist_period) return;
    if (!cb_e->hmac_valid) {
      cb_e->leaf_mac = macs::leaf_mac(key_, geo_.counter_addr(leaf),
                                      std::get<CounterBlock>(cb_e->payload),
                                      static_cast<int>(cfg_.minor_bits));
      cb_e->hmac_valid = true;
      ledger_.note_hash(HashWhy::Persist, false);
    }
    enqueue_meta(MetaEntry{
        CounterPersist{leaf, std::get<CounterBlock>(cb_e->payload),
                       cb_e->leaf_mac},
        0});
    ledger_.totals().cb_persists += 1;
    cb_e->updates_since_persist = 0;
    cb_e->dirty = false;
  }

  // --- minor overflow ---

  // Atomic wrap handling, charged to the triggering write: finish this
  // octant's pending branch updates, let both queues drain, fold the sum
  // delta into every ancestor, re-encrypt the whole leaf cover under
  // (major+1, 0), persist the counter block directly, and rebuild the tag
  // FIFO. Returns the root tag the triggering write carries.
  std::optional<std::uint64_t> overflow_resync(const BranchLayout& b,
                                               const CounterBlock& old_cb) {
    ledger_.mark_overflow_resync();
    // The wrapped block's sum is major+1; ancestors absorb the (wrapping)
    // difference so every sum relation holds again after the burst.
    const std::uint64_t delta = old_cb.major + 1 - old_cb.leaf_sum();

    run_jobs(b.octant);
    stall_until(std::max(user_q_.port_free(), meta_q_.port_free()));
    advance_queues(op_time());

    switch (cfg_.scheme) {
      case Scheme::Eager:
      case Scheme::LazyComputing:
      case Scheme::Scue: {
        for (int l = 1; l <= geo_.internal_levels(); ++l) {
          const std::uint64_t pos =
              b.node_positions[static_cast<std::size_t>(l - 1)];
          CacheEntry* e = resolve_sit(l, pos, /*on_path=*/true);
          SitNode& n = std::get<SitNode>(e->payload);
          n.counters[static_cast<std::size_t>(
              geo_.child_slot(b.leaf, l - 1))] += delta;
          e->dirty = true;
          if (cfg_.scheme == Scheme::Eager) {
            n.hmac = macs::node_mac(key_, geo_.node_addr(l, pos), n.counters,
                                    n.dummy_counter());
            ledger_.note_hash(HashWhy::Update, true);
            ledger_.charge(Charge::Hash, cfg_.hash_cycles);
          } else {
            e->hmac_valid = false;
          }
        }
        live_root_[static_cast<std::size_t>(b.octant)] += delta;
        break;
      }
      case Scheme::Lazy: {
        if (geo_.internal_levels() > 0) {
          CacheEntry* e = resolve_sit(1, b.node_positions[0], /*on_path=*/true);
          SitNode& n = std::get<SitNode>(e->payload);
          n.counters[static_cast<std::size_t>(geo_.child_slot(b.leaf, 0))] +=
              delta;
          e->dirty = true;
          e->hmac_valid = false;
        } else {
          live_root_[static_cast<std::size_t>(b.octant)] += delta;
          image_.root().counters[static_cast<std::size_t>(b.octant)] =
              live_root_[static_cast<std::size_t>(b.octant)];
        }
        break;
      }
      case Scheme::BmtEager:
        break;  // digest chain rebuilt below, after re-encryption
    }

    // Chain work may have displaced the block; re-acquire before using it.
    CacheEntry* cb_e = lookup_counter(b.leaf);
    const CounterBlock cb = std::get<CounterBlock>(cb_e->payload);

    // Re-encrypt the other 63 lines under the new major; the triggering
    // line is encrypted by the normal write path right after this returns.
    const std::uint64_t cover = b.leaf * kLeafCoverBytes;
    for (std::uint64_t i = 0; i < kLinesPerLeaf; ++i) {
      if (static_cast<int>(i) == b.slot) continue;
      const std::uint64_t line = cover + i * kLineBytes;
      const DataBlock old_ct = image_.read_data(line);
      const Pad old_pad = gen_otp(key_, line, old_cb.major,
                                  old_cb.minors[static_cast<std::size_t>(i)]);
      const DataBlock pt{xor_cipher(old_ct.bytes, old_pad)};
      note_pair(line, cb.major, 0);
      const DataBlock new_ct{
          xor_cipher(pt.bytes, gen_otp(key_, line, cb.major, 0))};
      image_.write_data(line, new_ct);
      image_.write_data_mac(line, macs::data_mac(key_, line, cb.major, 0, new_ct));
      ledger_.note_hash(HashWhy::Resync, false);
    }

    // Persist the wrapped block directly (no queue): the stored state is
    // consistent the moment the burst ends. The block lands before the
    // digest chain so a mid-chain refetch verifies against fresh state.
    image_.write_counter(b.leaf, cb);
    if (cfg_.scheme == Scheme::BmtEager) {
      bmt_chain_update(b, cb, /*charged=*/true);
      cb_e = lookup_counter(b.leaf);
    } else {
      cb_e->leaf_mac = macs::leaf_mac(key_, geo_.counter_addr(b.leaf), cb,
                                      static_cast<int>(cfg_.minor_bits));
      ledger_.note_hash(HashWhy::Resync, false);
      image_.write_leaf_mac(b.leaf, cb_e->leaf_mac);
    }
    cb_e->hmac_valid = true;
    cb_e->dirty = false;
    cb_e->updates_since_persist = 0;

    if (!uses_tags()) return std::nullopt;
    ledger_.charge(Charge::Stall, cfg_.tag_refill_cycles);
    prefill_tags(b.octant);
    // The triggering write consumes no fresh increment: its tag is the
    // post-delta root value itself.
    return live_root_[static_cast<std::size_t>(b.octant)];
  }

  // Every (line, major, minor) encryption triple must be fresh; reuse would
  // reuse a one-time pad.
  void note_pair(std::uint64_t line, std::uint64_t major, std::uint32_t minor) {
    const std::uint64_t h =
        MacBuilder(pair_key_).u64(line).u64(major).u64(minor).tag().value;
    if (!pairs_seen_.insert(h).second)
      throw std::logic_error("encryption pad pair reused");
  }

  Config cfg_;
  SecretKey key_;
  TreeGeometry geo_;
  NvmImage image_;
  MetaCache cache_;
  DrainQueue<UserEntry> user_q_;
  DrainQueue<MetaEntry> meta_q_;
  Ledger ledger_;
  std::uint64_t now_ = 0;
  bool dead_ = false;

  std::array<std::uint64_t, 8> live_root_{};
  std::deque<BranchUpdateJob> jobs_;
  bool running_jobs_ = false;
  int retry_streak_ = 0;
  std::deque<std::pair<std::uint64_t, CacheEntry>> wb_buffer_;
  bool wb_active_ = false;

  int predicted_octant_ = 0;
  std::deque<std::uint64_t> prepared_tags_;

  SecretKey pair_key_ = SecretKey::from_u64(0x70616972, 0x70616972);
  std::unordered_set<std::uint64_t> pairs_seen_;
};

}  // namespace scuesim
