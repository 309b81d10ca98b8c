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

#include "scuesim/controller.hpp"

#include <gtest/gtest.h>

#include <map>
#include <vector>

#include "scuesim/tree.hpp"
#include "scuesim/workloads.hpp"

namespace scuesim {
namespace {

DataBlock block(std::uint8_t fill) {
  DataBlock b;
  b.bytes.fill(fill);
  return b;
}

Config base_config(Scheme s) {
  Config c;
  c.scheme = s;
  return c;
}

TEST(Controller, ShortcutWriteTouchesNoTreeNode) {
  // Counter block resident, tag FIFO primed: the write pays for its data
  // MAC and nothing else; the branch walk happens in the background.
  Controller ctl(base_config(Scheme::Scue));
  ctl.preload_counter(0);
  const std::uint64_t lat = ctl.write(0, block(1));
  EXPECT_EQ(lat, 80u);
  const Totals& t = ctl.ledger().totals();
  EXPECT_EQ(t.hash_charge, 80u);
  EXPECT_EQ(t.read_charge, 0u);
  EXPECT_EQ(t.tree_node_reads, 0u);
  EXPECT_EQ(t.bg_node_reads, 7u);  // 9 levels: 7 addressed ancestors
  EXPECT_EQ(t.bg_jobs, 1u);
}

TEST(Controller, EagerColdWritePaysForWholeBranch) {
  Controller ctl(base_config(Scheme::Eager));
  const std::uint64_t lat = ctl.write(0, block(1));
  EXPECT_EQ(lat, 1488u);  // 8 fetches + 8 serial MACs + data MAC
  const Totals& t = ctl.ledger().totals();
  EXPECT_EQ(t.read_charge, 768u);
  EXPECT_EQ(t.hash_charge, 720u);
  EXPECT_EQ(t.tree_node_reads, 8u);
  EXPECT_EQ(t.bg_node_reads, 0u);
}

TEST(Controller, EagerParallelHashingBatchesRecomputes) {
  Config c = base_config(Scheme::Eager);
  c.eager_parallel_hashes = 8;
  Controller ctl(c);
  // 8 branch recomputes collapse into one batch: 768 + 80 + 80.
  EXPECT_EQ(ctl.write(0, block(1)), 928u);
}

TEST(Controller, WarmShortcutWritesStayFlat) {
  Controller ctl(base_config(Scheme::Scue));
  ctl.preload_counter(0);
  for (int i = 0; i < 3; ++i)
    EXPECT_EQ(ctl.write(static_cast<std::uint64_t>(i) * 64, block(2)), 80u);
  EXPECT_EQ(ctl.live_root()[0], 3u);
}

TEST(Controller, ReadForwardsFromWriteQueue) {
  Controller ctl(base_config(Scheme::Scue));
  ctl.preload_counter(0);
  ctl.write(0, block(7));
  const Totals before = ctl.ledger().totals();
  const ReadResult r = ctl.read(0);
  EXPECT_EQ(r.latency, 80u);  // pad generation only
  EXPECT_EQ(r.plaintext.bytes, block(7).bytes);
  const Totals& after = ctl.ledger().totals();
  EXPECT_EQ(after.read_charge, before.read_charge);
  EXPECT_EQ(after.hash_verify, before.hash_verify);  // forwarding skips it
}

TEST(Controller, WarmReadPaysOneDataFetch) {
  Controller ctl(base_config(Scheme::Scue));
  ctl.preload_counter(0);
  ctl.write(0, block(9));
  // Enough same-leaf traffic for the queued line to drain (drain at ~480).
  for (int i = 1; i <= 6; ++i)
    ctl.write(static_cast<std::uint64_t>(i) * 64, block(3));
  ASSERT_GT(ctl.now(), 480u);
  const Totals before = ctl.ledger().totals();
  const ReadResult r = ctl.read(0);
  EXPECT_EQ(r.latency, 96u);  // fetch hides pad generation at these timings
  EXPECT_EQ(r.plaintext.bytes, block(9).bytes);
  EXPECT_EQ(ctl.ledger().totals().read_charge, before.read_charge + 96);
  EXPECT_EQ(ctl.ledger().totals().hash_verify, before.hash_verify + 1);
}

TEST(Controller, ColdReadWalksTheChain) {
  Controller ctl(base_config(Scheme::Scue));
  const ReadResult r = ctl.read(0);
  EXPECT_EQ(r.latency, 848u);  // 8 chain fetches hide the data line; pad tail
  EXPECT_EQ(r.plaintext.bytes, DataBlock{}.bytes);  // never written: zeros
  const Totals& t = ctl.ledger().totals();
  EXPECT_EQ(t.read_charge, 768u);
  EXPECT_EQ(t.tree_node_reads, 8u);
}

TEST(Controller, TagFifoPrimedAtConstruction) {
  Controller ctl(base_config(Scheme::Scue));
  ASSERT_EQ(ctl.prepared_tags().size(), 64u);  // queue capacity worth of tags
  EXPECT_EQ(ctl.prepared_tags().front(), 1u);
  EXPECT_EQ(ctl.prepared_tags().back(), 64u);
  EXPECT_EQ(ctl.ledger().totals().tag_refills, 1u);
}

TEST(Controller, TagsConsumeInOrderWithoutStalls) {
  Controller ctl(base_config(Scheme::Scue));
  ctl.preload_counter(0);
  for (int i = 0; i < 10; ++i) ctl.write(static_cast<std::uint64_t>(i) * 64, block(1));
  EXPECT_EQ(ctl.live_root()[0], 10u);
  EXPECT_EQ(ctl.prepared_tags().front(), 11u);
  EXPECT_EQ(ctl.ledger().totals().stall_charge, 0u);
  EXPECT_EQ(ctl.ledger().totals().tag_refills, 1u);
}

TEST(Controller, EmptyFifoRefillsWithoutStalling) {
  Config c = base_config(Scheme::Scue);
  c.wq_user = 1;  // FIFO holds one tag at a time
  Controller ctl(c);
  ctl.preload_counter(0);
  for (int i = 0; i < 5; ++i) ctl.write(0 + static_cast<std::uint64_t>(i) * 64, block(1));
  EXPECT_EQ(ctl.live_root()[0], 5u);
  // One priming refill plus one opportunistic refill per later write; the
  // same-octant refills never stall.
  EXPECT_EQ(ctl.ledger().totals().tag_refills, 5u);
  std::uint64_t tag_stalls = 0;
  for (const OpCost& op : ctl.ledger().ops()) tag_stalls += op.octant_switch;
  EXPECT_EQ(tag_stalls, 0u);
}

TEST(Controller, OctantSwitchRefillsAndStalls) {
  Config c = base_config(Scheme::Scue);
  Controller ctl(c);
  const TreeGeometry g = TreeGeometry::from_mem_bytes(c.mem_size);
  const std::uint64_t octant1_addr = g.octant_leaves * kLeafCoverBytes;
  ctl.preload_counter(0);
  ctl.preload_counter(octant1_addr);
  ctl.write(0, block(1));
  const std::uint64_t lat = ctl.write(octant1_addr, block(2));
  EXPECT_EQ(lat, 88u);  // refill stall + data MAC
  EXPECT_EQ(ctl.live_root()[0], 1u);
  EXPECT_EQ(ctl.live_root()[1], 1u);
  EXPECT_EQ(ctl.ledger().totals().tag_refills, 2u);
  EXPECT_EQ(ctl.ledger().totals().stall_charge, 8u);
}

TEST(Controller, CrashImageCarriesQueuedTags) {
  Config c = base_config(Scheme::Scue);
  Controller ctl(c);
  ctl.preload_counter(0);
  for (int i = 0; i < 3; ++i) ctl.write(static_cast<std::uint64_t>(i) * 64, block(1));
  EXPECT_EQ(ctl.live_root()[0], 3u);
  EXPECT_EQ(ctl.queued_user_writes(), 3u);  // nothing drained yet
  const NvmImage img = ctl.take_crash_image();
  EXPECT_EQ(img.root().counters[0], 3u);  // battery flush applied the tags
  EXPECT_TRUE(img.data_present(64));
  EXPECT_THROW(ctl.write(0, block(1)), std::logic_error);
}

TEST(Controller, OnDemandDrainRunsJobsUnderPressure) {
  Config c = base_config(Scheme::Scue);
  c.bg_drain = BgDrain::OnDemand;
  Controller ctl(c);
  ctl.preload_counter(0);
  ctl.write(0, block(1));
  EXPECT_EQ(ctl.pending_jobs(), 1u);
  // A metadata miss in the same octant forces the backlog through first.
  ctl.write(50 * kLeafCoverBytes, block(2));
  EXPECT_EQ(ctl.pending_jobs(), 1u);  // old job drained; new one queued
  EXPECT_GE(ctl.ledger().totals().forced_drains, 1u);
}

TEST(Controller, PeriodicPersistBoundsCounterStaleness) {
  Config c = base_config(Scheme::Scue);
  Controller ctl(c);
  ctl.preload_counter(0);
  for (int i = 0; i < 11; ++i) ctl.write(0, block(static_cast<std::uint8_t>(i)));
  EXPECT_EQ(ctl.ledger().totals().cb_persists, 2u);  // after 4th and 8th
  const CounterBlock live = ctl.live_counter(0);
  EXPECT_EQ(live.minors[0], 11u);
  const NvmImage img = ctl.take_crash_image();
  // The newest queued persist (8 updates) lands via the battery flush.
  EXPECT_EQ(img.read_counter(0).minors[0], 8u);
}

TEST(Controller, MetaQueueBackpressureStalls) {
  Config c = base_config(Scheme::Scue);
  c.wq_meta = 1;
  c.meta_write_cycles = 5000;
  c.cb_persist_period = 1;  // persist every update
  Controller ctl(c);
  ctl.preload_counter(0);
  for (int i = 0; i < 4; ++i) ctl.write(static_cast<std::uint64_t>(i) * 64, block(1));
  EXPECT_GT(ctl.ledger().totals().queue_full_stalls, 0u);
  EXPECT_GT(ctl.ledger().totals().stall_charge, 0u);
}

TEST(Controller, OverflowResyncRewritesTheLeaf) {
  Config c = base_config(Scheme::Scue);
  c.minor_bits = 2;  // minors saturate at 3
  c.mem_size = 1ULL << 20;
  Controller ctl(c);
  ctl.preload_counter(0);
  for (int i = 0; i < 3; ++i) ctl.write(0, block(static_cast<std::uint8_t>(i)));
  EXPECT_EQ(ctl.live_counter(0).minors[0], 3u);
  ctl.write(0, block(0xaa));  // saturated: whole block rolls over
  EXPECT_EQ(ctl.ledger().totals().overflow_resyncs, 1u);
  CounterBlock cb = ctl.live_counter(0);
  EXPECT_EQ(cb.major, 1u);
  EXPECT_EQ(cb.minors[0], 0u);  // the rolling write is absorbed by the major
  EXPECT_EQ(ctl.live_root()[0], cb.leaf_sum());
  ctl.write(0, block(0xbb));
  EXPECT_EQ(ctl.live_counter(0).minors[0], 1u);
  // Re-encryption kept every line readable.
  EXPECT_EQ(ctl.read(0).plaintext.bytes, block(0xbb).bytes);
  EXPECT_EQ(ctl.read(64).plaintext.bytes, DataBlock{}.bytes);
}

TEST(Controller, FlushedImageReconstructsClean) {
  for (const Scheme s :
       {Scheme::Scue, Scheme::Eager, Scheme::Lazy, Scheme::LazyComputing}) {
    Config c = base_config(s);
    c.mem_size = 4ULL << 20;
    c.cache_kib = 2;  // heavy eviction pressure
    c.cache_ways = 2;
    Controller ctl(c);
    const Trace t = gen_trace(WorkloadKind::Hash, 400, 9, c.mem_size);
    for (std::size_t i = 0; i < t.ops.size(); ++i) {
      const TraceOp& op = t.ops[i];
      if (op.is_write)
        ctl.write(op.addr, default_payload(c.seed, i, op.addr));
      else
        ctl.read(op.addr);
    }
    EXPECT_GT(ctl.ledger().totals().cache_evictions, 0u) << to_string(s);
    ctl.flush_all();
    const NvmImage img = ctl.take_crash_image();
    const ReconstructionReport rep =
        reconstruct(img, img.root(), /*compare_root=*/s != Scheme::Lazy);
    EXPECT_TRUE(rep.hmac_failures.empty()) << to_string(s);
    EXPECT_TRUE(rep.root_match) << to_string(s);
  }
}

TEST(Controller, SchemesAgreeOnStoredState) {
  Config base;
  base.mem_size = 1ULL << 20;
  const Trace t = gen_trace(WorkloadKind::Btree, 500, 4, base.mem_size);
  std::map<Scheme, NvmImage> images;
  for (const Scheme s : {Scheme::Scue, Scheme::Eager, Scheme::Lazy,
                         Scheme::LazyComputing, Scheme::BmtEager}) {
    Config c = base;
    c.scheme = s;
    Controller ctl(c);
    std::map<std::uint64_t, DataBlock> shadow;
    for (std::size_t i = 0; i < t.ops.size(); ++i) {
      const TraceOp& op = t.ops[i];
      if (op.is_write) {
        const DataBlock payload = default_payload(c.seed, i, op.addr);
        ctl.write(op.addr, payload);
        shadow[op.addr] = payload;
      } else {
        const ReadResult r = ctl.read(op.addr);
        const auto it = shadow.find(op.addr);
        ASSERT_EQ(r.plaintext.bytes,
                  (it == shadow.end() ? DataBlock{} : it->second).bytes)
            << to_string(s);
      }
    }
    ctl.flush_all();
    images.emplace(s, ctl.take_crash_image());
  }
  const NvmImage& ref = images.at(Scheme::Scue);
  for (const auto& [s, img] : images) {
    ASSERT_EQ(img.counters().size(), ref.counters().size()) << to_string(s);
    for (const auto& [leaf, cb] : ref.counters())
      EXPECT_TRUE(img.read_counter(leaf) == cb) << to_string(s);
    ASSERT_EQ(img.data().size(), ref.data().size()) << to_string(s);
    for (const auto& [addr, b] : ref.data()) {
      EXPECT_EQ(img.read_data(addr).bytes, b.bytes) << to_string(s);
      EXPECT_EQ(img.read_data_mac(addr).value, ref.read_data_mac(addr).value)
          << to_string(s);
    }
  }
}

TEST(Controller, HashCountSplitsByPurpose) {
  Config c = base_config(Scheme::Scue);
  c.mem_size = 4ULL << 20;
  Controller ctl(c);
  const Trace t = gen_trace(WorkloadKind::Randwrite, 300, 2, c.mem_size);
  for (std::size_t i = 0; i < t.ops.size(); ++i)
    ctl.write(t.ops[i].addr, default_payload(c.seed, i, t.ops[i].addr));
  ctl.flush_all();
  const Totals& x = ctl.ledger().totals();
  EXPECT_EQ(x.hash_count, x.hash_data_mac + x.hash_update + x.hash_verify +
                              x.hash_eviction + x.hash_persist + x.hash_resync);
  EXPECT_EQ(x.hash_data_mac, 300u);
}

}  // namespace
}  // namespace scuesim
