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

#include "scuesim/failure.hpp"

#include <gtest/gtest.h>

#include "scuesim/controller.hpp"
#include "scuesim/driver.hpp"
#include "scuesim/workloads.hpp"

namespace scuesim {
namespace {

DataBlock block(std::uint8_t fill) {
  DataBlock b;
  b.bytes.fill(fill);
  return b;
}

Config small_config(Scheme s = Scheme::Scue) {
  Config c;
  c.scheme = s;
  c.mem_size = 1ULL << 20;
  return c;
}

TEST(Recovery, CleanCrashRecoversStaleCounters) {
  // Persist period 4 leaves the stored block up to three writes behind;
  // the per-line scan must close exactly that gap.
  const Config cfg = small_config();
  Controller ctl(cfg);
  for (int i = 0; i < 6; ++i) ctl.write(0, block(static_cast<std::uint8_t>(i)));
  const CounterBlock live = ctl.live_counter(0);
  ASSERT_EQ(live.minors[0], 6u);
  const NvmImage img = ctl.take_crash_image();
  ASSERT_EQ(img.read_counter(0).minors[0], 4u);  // persisted at the 4th

  const RecoveryReport rep = recover(img, cfg);
  EXPECT_EQ(rep.status, RecoveryStatus::Clean);
  EXPECT_EQ(rep.detection, ReconVerdict::Clean);
  EXPECT_TRUE(rep.root_match);
  EXPECT_TRUE(rep.hmac_failures.empty());
  EXPECT_TRUE(rep.unrecoverable_lines.empty());
  EXPECT_EQ(rep.osiris_recovered_lines, 1u);
  EXPECT_EQ(rep.osiris_increments, 2u);  // stored 4, truth 6
  ASSERT_TRUE(rep.recovered.count(0));
  EXPECT_TRUE(rep.recovered.at(0) == live);
  ASSERT_TRUE(rep.healed.has_value());
}

TEST(Recovery, NeverPersistedLeafRecoversFromScratch) {
  Config cfg = small_config();
  Controller ctl(cfg);
  ctl.write(4096, block(1));
  ctl.write(4160, block(2));
  const NvmImage img = ctl.take_crash_image();
  ASSERT_FALSE(img.counters().count(1));  // crash before the first persist

  const RecoveryReport rep = recover(img, cfg);
  EXPECT_EQ(rep.status, RecoveryStatus::Clean);
  EXPECT_EQ(rep.recovered.at(1).minors[0], 1u);
  EXPECT_EQ(rep.recovered.at(1).minors[1], 1u);
  EXPECT_EQ(rep.osiris_recovered_lines, 2u);
}

TEST(Recovery, StalenessPastRadiusIsUnrecoverable) {
  Config cfg = small_config();
  cfg.cb_persist_period = 0;  // never persist: staleness grows unbounded
  Controller ctl(cfg);
  for (int i = 0; i < 6; ++i) ctl.write(0, block(static_cast<std::uint8_t>(i)));
  const NvmImage img = ctl.take_crash_image();

  const RecoveryReport rep = recover(img, cfg);  // radius 4 < staleness 6
  EXPECT_EQ(rep.status, RecoveryStatus::UnrecoverableCounter);
  ASSERT_EQ(rep.unrecoverable_lines.size(), 1u);
  EXPECT_EQ(rep.unrecoverable_lines[0], 0u);
  EXPECT_FALSE(rep.healed.has_value());
}

TEST(Recovery, StalenessAtRadiusEdgeStillRecovers) {
  Config cfg = small_config();
  cfg.cb_persist_period = 0;
  Controller ctl(cfg);
  for (int i = 0; i < 4; ++i) ctl.write(0, block(static_cast<std::uint8_t>(i)));
  const NvmImage img = ctl.take_crash_image();
  const RecoveryReport rep = recover(img, cfg);  // radius 4 == staleness 4
  EXPECT_EQ(rep.status, RecoveryStatus::Clean);
  EXPECT_EQ(rep.osiris_increments, 4u);
}

TEST(Recovery, HealedImageResumesCleanly) {
  for (const Scheme s :
       {Scheme::Scue, Scheme::Eager, Scheme::Lazy, Scheme::LazyComputing}) {
    Config cfg = small_config(s);
    const Trace t = gen_trace(WorkloadKind::Btree, 120, 21, cfg.mem_size);
    Controller ctl = run_prefix(cfg, t, 80);
    const NvmImage img = ctl.take_crash_image();
    const RecoveryReport rep = recover(img, cfg);
    ASSERT_EQ(rep.status, RecoveryStatus::Clean) << to_string(s);
    ASSERT_TRUE(rep.healed.has_value()) << to_string(s);

    // Restarting on the healed image must verify everything it touches.
    Controller resumed(cfg, *rep.healed);
    for (std::size_t i = 80; i < t.ops.size(); ++i) {
      const TraceOp& op = t.ops[i];
      if (op.is_write)
        resumed.write(op.addr, default_payload(cfg.seed, i, op.addr));
      else
        resumed.read(op.addr);
    }
  }
}

TEST(Recovery, DigestTreeImagesAreNotRecoverable) {
  const Config cfg = small_config(Scheme::BmtEager);
  Controller ctl(cfg);
  ctl.write(0, block(1));
  const NvmImage img = ctl.take_crash_image();
  EXPECT_THROW(recover(img, cfg), std::invalid_argument);
}

TEST(Tamper, RollForwardHitsTheTagSweep) {
  const Config cfg = small_config();
  Controller ctl(cfg);
  for (int i = 0; i < 6; ++i) ctl.write(0, block(static_cast<std::uint8_t>(i)));
  NvmImage img = ctl.take_crash_image();
  TamperSpec spec;
  spec.mode = TamperMode::RollForward;
  spec.leaf = 0;
  spec.seed = 3;
  tamper(img, spec, nullptr);
  const RecoveryReport rep = recover(img, cfg);
  EXPECT_EQ(rep.status, RecoveryStatus::AttackDetected);
  EXPECT_EQ(rep.detection, ReconVerdict::RollForwardDetected);
  EXPECT_FALSE(rep.hmac_failures.empty());
  EXPECT_TRUE(detection_matches(TamperMode::RollForward, rep));
}

TEST(Tamper, FullConeReplayHitsTheRootCompare) {
  const Config cfg = small_config();
  const Trace t = gen_trace(WorkloadKind::Seqwrite, 40, 1, cfg.mem_size);
  // Snapshot early, crash later; leaf 0 keeps moving in between.
  Controller snap_ctl = run_prefix(cfg, t, 10);
  const NvmImage snapshot = snap_ctl.take_crash_image();
  Controller crash_ctl = run_prefix(cfg, t, 40);
  NvmImage img = crash_ctl.take_crash_image();

  TamperSpec spec;
  spec.mode = TamperMode::Replay;
  spec.leaf = 0;
  spec.seed = 4;
  tamper(img, spec, &snapshot);
  const RecoveryReport rep = recover(img, cfg);
  EXPECT_EQ(rep.status, RecoveryStatus::AttackDetected);
  EXPECT_EQ(rep.detection, ReconVerdict::RollBackDetected);
  // The replayed cone is self-consistent: the tag sweep and the per-line
  // scan pass; only the root register gives it away.
  EXPECT_TRUE(rep.hmac_failures.empty());
  EXPECT_TRUE(rep.unrecoverable_lines.empty());
  EXPECT_FALSE(rep.root_match);
  EXPECT_TRUE(detection_matches(TamperMode::Replay, rep));
}

TEST(Tamper, ReplayNeedsASnapshot) {
  NvmImage img(SecretKey::from_u64(1, 1),
               TreeGeometry::from_mem_bytes(1ULL << 20), 7);
  TamperSpec spec;
  spec.mode = TamperMode::RollBack;
  EXPECT_THROW(tamper(img, spec, nullptr), std::invalid_argument);
}

TEST(Tamper, ScrambledBytesNeverPassAsClean) {
  const Config cfg = small_config();
  const Trace t = gen_trace(WorkloadKind::Randwrite, 60, 5, cfg.mem_size);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Controller ctl = run_prefix(cfg, t, 60);
    NvmImage img = ctl.take_crash_image();
    TamperSpec spec;
    spec.mode = TamperMode::RandomBytes;
    spec.leaf = img.geometry().leaf_of_addr(t.ops[0].addr);
    spec.seed = seed;
    tamper(img, spec, nullptr);
    const RecoveryReport rep = recover(img, cfg);
    EXPECT_NE(rep.status, RecoveryStatus::Clean) << "seed " << seed;
    EXPECT_TRUE(detection_matches(TamperMode::RandomBytes, rep)) << seed;
  }
}

TEST(Tamper, MixedAttackReportsTheAdvanceFirst) {
  const Config cfg = small_config();
  const Trace t = gen_trace(WorkloadKind::Seqwrite, 200, 1, cfg.mem_size);
  Controller snap_ctl = run_prefix(cfg, t, 100);
  const NvmImage snapshot = snap_ctl.take_crash_image();
  Controller crash_ctl = run_prefix(cfg, t, 200);
  NvmImage img = crash_ctl.take_crash_image();

  TamperSpec spec;
  spec.mode = TamperMode::Mixed;
  spec.leaf = 0;         // counters advanced without a tag
  spec.second_leaf = 1;  // cone genuinely rolled back to the snapshot
  spec.seed = 6;
  tamper(img, spec, &snapshot);
  const RecoveryReport rep = recover(img, cfg);
  EXPECT_EQ(rep.status, RecoveryStatus::AttackDetected);
  EXPECT_EQ(rep.detection, ReconVerdict::RollForwardDetected);
  EXPECT_TRUE(detection_matches(TamperMode::Mixed, rep));
}

TEST(Image, SerializationRoundTripsBitExact) {
  const Config cfg = small_config();
  const Trace t = gen_trace(WorkloadKind::Btree, 150, 8, cfg.mem_size);
  Controller ctl = run_prefix(cfg, t, 150);
  const NvmImage img = ctl.take_crash_image();

  const std::uint64_t fp = config_fingerprint(cfg);
  const std::vector<std::uint8_t> bytes = img.to_bytes(fp);
  NvmImage::ImageHeader hdr;
  const NvmImage back = NvmImage::from_bytes(bytes, img.key(), &hdr);
  EXPECT_EQ(hdr.fingerprint, fp);
  EXPECT_EQ(hdr.mem_bytes, cfg.mem_size);
  EXPECT_EQ(back.to_bytes(fp), bytes);
  EXPECT_EQ(back.root().counters, img.root().counters);
  EXPECT_EQ(back.counters().size(), img.counters().size());
  EXPECT_EQ(back.data().size(), img.data().size());

  // A recovered run over the deserialized copy behaves identically.
  const RecoveryReport a = recover(img, cfg);
  const RecoveryReport b = recover(back, cfg);
  EXPECT_EQ(a.status, b.status);
  EXPECT_EQ(a.osiris_increments, b.osiris_increments);
}

}  // namespace
}  // namespace scuesim
