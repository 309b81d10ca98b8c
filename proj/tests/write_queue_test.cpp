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

#include "scuesim/write_queue.hpp"

#include <gtest/gtest.h>

namespace scuesim {
namespace {

UserEntry user(std::uint64_t addr) {
  UserEntry e;
  e.line_addr = addr;
  return e;
}

TEST(DrainQueue, SerializesThroughOnePort) {
  DrainQueue<UserEntry> q(8, 100);
  q.enqueue(user(0), 10);
  q.enqueue(user(64), 10);
  q.enqueue(user(128), 500);
  // Port is busy until 110, then 210; the third arrives after both.
  const std::vector<UserEntry> all = q.take_all();
  ASSERT_EQ(all.size(), 3u);
  EXPECT_EQ(all[0].drain_at, 110u);
  EXPECT_EQ(all[1].drain_at, 210u);
  EXPECT_EQ(all[2].drain_at, 600u);
}

TEST(DrainQueue, OccupancyCountsUndrainedOnly) {
  DrainQueue<UserEntry> q(2, 100);
  q.enqueue(user(0), 0);    // drains at 100
  q.enqueue(user(64), 0);   // drains at 200
  EXPECT_TRUE(q.full_at(0));
  EXPECT_EQ(q.occupancy(0), 2u);
  EXPECT_EQ(q.occupancy(150), 1u);
  EXPECT_FALSE(q.full_at(150));
  EXPECT_EQ(q.occupancy(250), 0u);
  EXPECT_EQ(q.earliest_drain(0), 100u);
  EXPECT_EQ(q.earliest_drain(150), 200u);
}

TEST(DrainQueue, TakeReadyIsFifoPrefix) {
  DrainQueue<UserEntry> q(8, 100);
  for (std::uint64_t i = 0; i < 4; ++i) q.enqueue(user(i * 64), 0);
  const std::vector<UserEntry> ready = q.take_ready(250);
  ASSERT_EQ(ready.size(), 2u);
  EXPECT_EQ(ready[0].line_addr, 0u);
  EXPECT_EQ(ready[1].line_addr, 64u);
  EXPECT_EQ(q.queued(), 2u);
  EXPECT_EQ(q.take_ready(10000).size(), 2u);
  EXPECT_TRUE(q.empty());
}

TEST(DrainQueue, FindNewestScansBackward) {
  DrainQueue<UserEntry> q(8, 100);
  UserEntry a = user(64);
  a.tag_value = 1;
  UserEntry b = user(64);
  b.tag_value = 2;
  q.enqueue(a, 0);
  q.enqueue(user(128), 0);
  q.enqueue(b, 0);
  const UserEntry* hit =
      q.find_newest([](const UserEntry& e) { return e.line_addr == 64; });
  ASSERT_NE(hit, nullptr);
  EXPECT_EQ(hit->tag_value, 2u);
  EXPECT_EQ(q.find_newest([](const UserEntry& e) { return e.line_addr == 999; }),
            nullptr);
}

TEST(DrainQueue, TakeAllDrainsEverythingInOrder) {
  DrainQueue<MetaEntry> q(4, 50);
  for (std::uint64_t leaf = 0; leaf < 3; ++leaf) {
    MetaEntry e;
    CounterPersist cp;
    cp.leaf = leaf;
    e.record = cp;
    q.enqueue(std::move(e), 0);
  }
  const std::vector<MetaEntry> all = q.take_all();
  ASSERT_EQ(all.size(), 3u);
  for (std::uint64_t i = 0; i < 3; ++i)
    EXPECT_EQ(std::get<CounterPersist>(all[i].record).leaf, i);
  EXPECT_TRUE(q.empty());
  // The port does not rewind after a flush.
  EXPECT_EQ(q.port_free(), 150u);
}

}  // namespace
}  // namespace scuesim
