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

#include "scuesim/workloads.hpp"

#include <gtest/gtest.h>

#include <sstream>
#include <string>
#include <vector>

namespace scuesim {
namespace {

const WorkloadKind kAllKinds[] = {
    WorkloadKind::Array,    WorkloadKind::Btree,    WorkloadKind::Rbtree,
    WorkloadKind::Hash,     WorkloadKind::Queue,    WorkloadKind::Seqwrite,
    WorkloadKind::Randwrite};

TEST(Workloads, SameArgumentsSameTrace) {
  for (const WorkloadKind k : kAllKinds) {
    const Trace a = gen_trace(k, 500, 7, 1ULL << 26);
    const Trace b = gen_trace(k, 500, 7, 1ULL << 26);
    ASSERT_EQ(a.ops.size(), b.ops.size()) << to_string(k);
    for (std::size_t i = 0; i < a.ops.size(); ++i) {
      EXPECT_EQ(a.ops[i].is_write, b.ops[i].is_write);
      EXPECT_EQ(a.ops[i].addr, b.ops[i].addr);
    }
  }
}

TEST(Workloads, SeedChangesTheRandomKinds) {
  for (const WorkloadKind k :
       {WorkloadKind::Btree, WorkloadKind::Hash, WorkloadKind::Randwrite}) {
    const Trace a = gen_trace(k, 500, 1, 1ULL << 26);
    const Trace b = gen_trace(k, 500, 2, 1ULL << 26);
    bool differs = false;
    for (std::size_t i = 0; i < 500 && !differs; ++i)
      differs = a.ops[i].addr != b.ops[i].addr ||
                a.ops[i].is_write != b.ops[i].is_write;
    EXPECT_TRUE(differs) << to_string(k);
  }
}

TEST(Workloads, EveryOpIsLineAlignedAndInBounds) {
  const std::uint64_t mem = 1ULL << 20;  // smaller than most native regions
  for (const WorkloadKind k : kAllKinds) {
    const Trace t = gen_trace(k, 2000, 3, mem);
    EXPECT_EQ(t.ops.size(), 2000u) << to_string(k);
    for (const TraceOp& op : t.ops) {
      EXPECT_EQ(op.addr % 64, 0u) << to_string(k);
      EXPECT_LT(op.addr, mem) << to_string(k);
      EXPECT_FALSE(op.has_payload);
    }
  }
}

TEST(Workloads, RejectsTinyMemories) {
  EXPECT_THROW(gen_trace(WorkloadKind::Array, 10, 1, (1ULL << 15) - 64),
               std::invalid_argument);
  EXPECT_NO_THROW(gen_trace(WorkloadKind::Array, 10, 1, 1ULL << 15));
}

TEST(Workloads, SeqwriteWalksAscendingLines) {
  const Trace t = gen_trace(WorkloadKind::Seqwrite, 100, 9, 1ULL << 20);
  for (std::size_t i = 0; i < 100; ++i) {
    EXPECT_TRUE(t.ops[i].is_write);
    EXPECT_EQ(t.ops[i].addr, i * 64);
  }
}

TEST(Workloads, SeqwriteWrapsAtMemoryEnd) {
  const std::uint64_t mem = 1ULL << 15;  // 512 lines
  const Trace t = gen_trace(WorkloadKind::Seqwrite, 600, 9, mem);
  EXPECT_EQ(t.ops[511].addr, mem - 64);
  EXPECT_EQ(t.ops[512].addr, 0u);
}

TEST(Workloads, MixFractionsLandWhereExpected) {
  const auto write_fraction = [](const Trace& t) {
    std::size_t w = 0;
    for (const TraceOp& op : t.ops) w += op.is_write ? 1 : 0;
    return static_cast<double>(w) / static_cast<double>(t.ops.size());
  };
  const std::uint64_t mem = 1ULL << 28;
  EXPECT_DOUBLE_EQ(write_fraction(gen_trace(WorkloadKind::Array, 4000, 1, mem)),
                   0.75);
  const double hash = write_fraction(gen_trace(WorkloadKind::Hash, 4001, 1, mem));
  EXPECT_NEAR(hash, 2.0 / 3.0, 1e-3);
  EXPECT_GT(write_fraction(gen_trace(WorkloadKind::Btree, 4000, 1, mem)), 0.7);
  EXPECT_EQ(write_fraction(gen_trace(WorkloadKind::Randwrite, 400, 1, mem)), 1.0);
  const double q = write_fraction(gen_trace(WorkloadKind::Queue, 4000, 1, mem));
  EXPECT_NEAR(q, 0.5, 0.01);
}

TEST(Workloads, DefaultPayloadIsDeterministicAndDistinct) {
  const DataBlock a = default_payload(1, 0, 0);
  EXPECT_TRUE(a == default_payload(1, 0, 0));
  EXPECT_FALSE(a == default_payload(2, 0, 0));
  EXPECT_FALSE(a == default_payload(1, 1, 0));
  EXPECT_FALSE(a == default_payload(1, 0, 64));
}

TEST(TraceText, RoundTripsThroughFormatAndParse) {
  Trace t;
  t.ops.push_back({true, 0, false, {}});
  t.ops.push_back({false, 0x1fc0, false, {}});
  TraceOp w;
  w.is_write = true;
  w.addr = 0x40;
  w.has_payload = true;
  for (std::size_t i = 0; i < 64; ++i)
    w.payload.bytes[i] = static_cast<std::uint8_t>(3 * i + 1);
  t.ops.push_back(w);

  const std::string text = format_trace(t);
  std::istringstream in(text);
  const Trace back = parse_trace(in);
  ASSERT_EQ(back.ops.size(), t.ops.size());
  for (std::size_t i = 0; i < t.ops.size(); ++i) {
    EXPECT_EQ(back.ops[i].is_write, t.ops[i].is_write);
    EXPECT_EQ(back.ops[i].addr, t.ops[i].addr);
    EXPECT_EQ(back.ops[i].has_payload, t.ops[i].has_payload);
    if (t.ops[i].has_payload) {
      EXPECT_TRUE(back.ops[i].payload == t.ops[i].payload);
    }
  }
  EXPECT_EQ(format_trace(back), text);
}

TEST(TraceText, SkipsBlankAndCommentLines) {
  std::istringstream in("# header\n\n  \t\nW 0\n  # indented comment\nR 40\n");
  const Trace t = parse_trace(in);
  ASSERT_EQ(t.ops.size(), 2u);
  EXPECT_TRUE(t.ops[0].is_write);
  EXPECT_EQ(t.ops[1].addr, 0x40u);
}

TEST(TraceText, AcceptsHexWithAndWithoutPrefix) {
  std::istringstream in("W 0x80\nW 80\n");
  const Trace t = parse_trace(in);
  EXPECT_EQ(t.ops[0].addr, 0x80u);
  EXPECT_EQ(t.ops[1].addr, 0x80u);
}

void expect_parse_error(const std::string& text, const std::string& needle) {
  std::istringstream in(text);
  try {
    parse_trace(in);
    FAIL() << "expected a parse error mentioning '" << needle << "'";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find(needle), std::string::npos)
        << "got: " << e.what();
  }
}

TEST(TraceText, ErrorsCarryLineNumbersAndCauses) {
  expect_parse_error("W 0\nX 40\n", "trace line 2");
  expect_parse_error("X 0\n", "expected op 'W' or 'R'");
  expect_parse_error("W zz\n", "bad hex address");
  expect_parse_error("W 40g\n", "bad hex address");
  expect_parse_error("W 41\n", "not 64-byte aligned");
  expect_parse_error("W\n", "missing address");
  expect_parse_error("R 40 " + std::string(128, 'a') + "\n",
                     "read ops take no payload");
  expect_parse_error("W 40 abcd\n", "payload must be 128 hex digits");
  expect_parse_error("W 40 " + std::string(127, 'a') + "g\n",
                     "payload has non-hex digit");
  expect_parse_error("W 40 " + std::string(128, 'a') + " extra\n",
                     "trailing tokens");
  expect_parse_error("# fine\nW 0\nW 0 " + std::string(128, 'a') + " x\n",
                     "trace line 3");
}

TEST(TraceText, KindNamesRoundTrip) {
  for (const WorkloadKind k : kAllKinds)
    EXPECT_EQ(workload_from_string(to_string(k)), k);
  EXPECT_THROW(workload_from_string("bogus"), std::invalid_argument);
}

}  // namespace
}  // namespace scuesim
