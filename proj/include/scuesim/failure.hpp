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
#include <map>
#include <optional>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "scuesim/config.hpp"
#include "scuesim/metadata.hpp"
#include "scuesim/nvm_image.hpp"
#include "scuesim/tree.hpp"

namespace scuesim {

// --- attacker actions on a powered-off image -------------------------------
//
// The attacker owns the NVM bus and the stored bytes but not the chip: no
// key, no root register. RollBack and Replay are the same physical action —
// writing back a previously recorded, internally consistent leaf cone (data
// lines, their tags, the counter block and its tag). RollForward and
// RandomBytes edit stored bytes without being able to re-tag them.

enum class TamperMode { RollForward, RollBack, Replay, RandomBytes, Mixed };

inline const char* to_string(TamperMode m) {
  switch (m) {
    case TamperMode::RollForward: return "roll-forward";
    case TamperMode::RollBack: return "roll-back";
    case TamperMode::Replay: return "replay";
    case TamperMode::RandomBytes: return "random-bytes";
    case TamperMode::Mixed: return "mixed";
  }
  return "?";
}

inline TamperMode tamper_mode_from_string(const std::string& s) {
  if (s == "roll-forward") return TamperMode::RollForward;
  if (s == "roll-back") return TamperMode::RollBack;
  if (s == "replay") return TamperMode::Replay;
  if (s == "random-bytes") return TamperMode::RandomBytes;
  if (s == "mixed") return TamperMode::Mixed;
  throw std::invalid_argument("unknown tamper mode: " + s);
}

struct TamperSpec {
  TamperMode mode = TamperMode::RollForward;
  std::uint64_t leaf = 0;         // primary target
  std::uint64_t second_leaf = 0;  // Mixed only: the replayed leaf
  std::uint64_t seed = 0;
};

namespace detail {

// Advance one stored counter without the key: the leaf tag is left behind.
inline void bump_counter(NvmImage& img, std::uint64_t leaf,
                         std::mt19937_64& rng, int minor_bits) {
  CounterBlock cb = img.read_counter(leaf);
  const std::size_t slot = static_cast<std::size_t>(rng() % 64);
  const std::uint32_t max = (1u << minor_bits) - 1;
  if (cb.minors[slot] < max)
    cb.minors[slot] += 1;
  else
    cb.major += 1;
  img.write_counter(leaf, cb);
}

// Write back the full recorded cone of one leaf: every data line and tag,
// the counter block, and its tag, exactly as the snapshot holds them.
inline void replay_cone(NvmImage& img, const NvmImage& snapshot,
                        std::uint64_t leaf) {
  const std::uint64_t cover = leaf * kLeafCoverBytes;
  for (std::uint64_t i = 0; i < kLinesPerLeaf; ++i) {
    const std::uint64_t line = cover + i * kLineBytes;
    img.write_data(line, snapshot.read_data(line));
    img.write_data_mac(line, snapshot.read_data_mac(line));
  }
  img.write_counter(leaf, snapshot.read_counter(leaf));
  img.write_leaf_mac(leaf, snapshot.read_leaf_mac(leaf));
}

// Corrupt stored bytes in the leaf's cone: a data line byte when one is
// stored, otherwise a counter field.
inline void scramble(NvmImage& img, std::uint64_t leaf, std::mt19937_64& rng) {
  const std::uint64_t cover = leaf * kLeafCoverBytes;
  std::vector<std::uint64_t> present;
  for (std::uint64_t i = 0; i < kLinesPerLeaf; ++i)
    if (img.data_present(cover + i * kLineBytes))
      present.push_back(cover + i * kLineBytes);
  if (!present.empty() && rng() % 2 == 0) {
    const std::uint64_t line = present[rng() % present.size()];
    DataBlock b = img.read_data(line);
    std::uint8_t flip = static_cast<std::uint8_t>(1u << (rng() % 8));
    b.bytes[rng() % 64] ^= flip;
    img.write_data(line, b);
  } else {
    CounterBlock cb = img.read_counter(leaf);
    cb.minors[static_cast<std::size_t>(rng() % 64)] ^=
        static_cast<std::uint32_t>(1 + rng() % 63);
    img.write_counter(leaf, cb);
  }
}

}  // namespace detail

// Applies one attack to a crash image. Replay modes need the earlier
// recorded image.
inline void tamper(NvmImage& img, const TamperSpec& spec,
                   const NvmImage* snapshot) {
  std::mt19937_64 rng(spec.seed);
  switch (spec.mode) {
    case TamperMode::RollForward:
      detail::bump_counter(img, spec.leaf, rng, img.minor_bits());
      return;
    case TamperMode::RollBack:
    case TamperMode::Replay:
      if (!snapshot)
        throw std::invalid_argument("replay tamper needs a recorded snapshot");
      detail::replay_cone(img, *snapshot, spec.leaf);
      return;
    case TamperMode::RandomBytes:
      detail::scramble(img, spec.leaf, rng);
      return;
    case TamperMode::Mixed:
      if (!snapshot)
        throw std::invalid_argument("replay tamper needs a recorded snapshot");
      detail::bump_counter(img, spec.leaf, rng, img.minor_bits());
      detail::replay_cone(img, *snapshot, spec.second_leaf);
      return;
  }
  throw std::logic_error("unknown tamper mode");
}

// --- post-crash recovery ---------------------------------------------------

enum class RecoveryStatus { Clean, AttackDetected, UnrecoverableCounter };

inline const char* to_string(RecoveryStatus s) {
  switch (s) {
    case RecoveryStatus::Clean: return "Clean";
    case RecoveryStatus::AttackDetected: return "AttackDetected";
    case RecoveryStatus::UnrecoverableCounter: return "UnrecoverableCounter";
  }
  return "?";
}

struct RecoveryReport {
  RecoveryStatus status = RecoveryStatus::Clean;
  ReconVerdict detection = ReconVerdict::Clean;
  std::vector<std::uint64_t> hmac_failures;        // leaves, stored-tag sweep
  std::vector<std::uint64_t> unrecoverable_lines;  // line addresses
  std::vector<std::uint64_t> data_mac_failures;    // line addresses
  bool root_match = false;
  std::uint64_t osiris_increments = 0;       // minors advanced in total
  std::uint64_t osiris_recovered_lines = 0;  // lines needing any advance
  ReconstructionReport recon;
  std::map<std::uint64_t, CounterBlock> recovered;  // per swept leaf
  std::optional<NvmImage> healed;  // consistent restart image when Clean
};

namespace detail {

// Candidate pair sequence for a stored (major, minor): each step is one more
// write, with the saturation step rolling into the next major at minor 0.
inline std::pair<std::uint64_t, std::uint32_t> counter_candidate(
    std::uint64_t major, std::uint32_t minor, std::uint32_t step,
    std::uint32_t max) {
  const std::uint64_t v = std::uint64_t{minor} + step;
  if (v <= max) return {major, static_cast<std::uint32_t>(v)};
  return {major + 1, static_cast<std::uint32_t>(v - max - 1)};
}

}  // namespace detail

// Brings a crash image back to a verified state:
//
//  1. Stored counter blocks are checked against their stored tags. The tag
//     binds the block as last persisted, so any unauthorized advance or edit
//     fails here even when the counters happen to look plausible.
//  2. Stale counters are re-derived from the data itself: each stored line's
//     tag is tried against the stored minor and the next few increments; the
//     first match is the line's true pair. Lines matching nothing within the
//     radius are unrecoverable; one block resolving to different majors
//     cannot happen by crash timing and poisons the whole block.
//  3. The tree is rebuilt bottom-up from the recovered sums and compared
//     against the root register (skipped for the scheme whose register
//     lags by design).
//  4. Every stored line is re-checked under its recovered pair.
//
// A tag-sweep failure reads as unauthorized advance, a root mismatch as
// unauthorized rewind; both outrank unrecoverable counters, which outrank
// everything but a clean pass.
inline RecoveryReport recover(const NvmImage& stored, const Config& cfg) {
  if (cfg.scheme == Scheme::BmtEager)
    throw std::invalid_argument(
        "digest-tree images cannot be recovered: counters carry no sums");
  const TreeGeometry& g = stored.geometry();
  const SecretKey& key = stored.key();
  const int minor_bits = stored.minor_bits();
  const std::uint32_t max_minor = (1u << minor_bits) - 1;

  RecoveryReport rep;

  // Stage 1: stored tag sweep, before any counter is touched.
  for (const auto& [leaf, cb] : stored.counters()) {
    const MacTag expect = macs::leaf_mac(key, g.counter_addr(leaf), cb, minor_bits);
    if (!(expect == stored.read_leaf_mac(leaf))) rep.hmac_failures.push_back(leaf);
  }

  // Stage 2: per-line counter recovery over every leaf that left a trace.
  NvmImage working = stored;
  std::set<std::uint64_t> leaves;
  for (const auto& [leaf, cb] : stored.counters()) leaves.insert(leaf);
  for (const auto& [addr, block] : stored.data())
    leaves.insert(g.leaf_of_addr(addr));

  for (const std::uint64_t leaf : leaves) {
    const CounterBlock base = stored.read_counter(leaf);
    CounterBlock rec = base;
    std::set<std::uint64_t> majors;
    std::vector<std::uint64_t> present;
    std::size_t matched = 0;
    bool poisoned = false;

    const std::uint64_t cover = leaf * kLeafCoverBytes;
    for (std::uint64_t i = 0; i < kLinesPerLeaf; ++i) {
      const std::uint64_t line = cover + i * kLineBytes;
      if (!stored.data_present(line)) continue;
      present.push_back(line);
      const DataBlock ct = stored.read_data(line);
      const MacTag mac = stored.read_data_mac(line);
      bool found = false;
      for (std::uint32_t j = 0; j <= cfg.osiris_limit; ++j) {
        const auto [maj, min] = detail::counter_candidate(
            base.major, base.minors[static_cast<std::size_t>(i)], j, max_minor);
        if (macs::data_mac(key, line, maj, min, ct) == mac) {
          rec.minors[static_cast<std::size_t>(i)] = min;
          majors.insert(maj);
          rep.osiris_increments += j;
          if (j > 0) rep.osiris_recovered_lines += 1;
          found = true;
          matched += 1;
          break;
        }
      }
      if (!found) rep.unrecoverable_lines.push_back(line);
    }

    if (majors.size() > 1) poisoned = true;
    if (!poisoned && majors.size() == 1 && *majors.begin() != base.major) {
      // Every matched line sits one major ahead; a crash cannot leave the
      // block behind a wrap, so accept only a full coherent cone.
      if (matched == present.size()) {
        rec.major = *majors.begin();
        for (std::size_t s = 0; s < 64; ++s) {
          const std::uint64_t l2 = cover + s * kLineBytes;
          if (!stored.data_present(l2)) rec.minors[s] = 0;
        }
      } else {
        poisoned = true;
      }
    }
    if (poisoned) {
      for (std::uint64_t line : present) rep.unrecoverable_lines.push_back(line);
    }

    rep.recovered[leaf] = rec;
    working.write_counter(leaf, rec);
    working.write_leaf_mac(
        leaf, macs::leaf_mac(key, g.counter_addr(leaf), rec, minor_bits));
  }

  std::sort(rep.unrecoverable_lines.begin(), rep.unrecoverable_lines.end());
  rep.unrecoverable_lines.erase(
      std::unique(rep.unrecoverable_lines.begin(), rep.unrecoverable_lines.end()),
      rep.unrecoverable_lines.end());

  // Stage 3: sum rebuild against the root register.
  rep.recon = reconstruct(working, stored.root(),
                          /*compare_root=*/cfg.scheme != Scheme::Lazy);
  rep.root_match = rep.recon.root_match;

  // Stage 4: every stored line must verify under its recovered pair.
  for (const auto& [addr, block] : stored.data()) {
    const CounterBlock& rc = rep.recovered[g.leaf_of_addr(addr)];
    const int slot = g.slot_of_addr(addr);
    if (!(macs::data_mac(key, addr, rc.major,
                         rc.minors[static_cast<std::size_t>(slot)],
                         block) == stored.read_data_mac(addr)))
      rep.data_mac_failures.push_back(addr);
  }

  // Verdict: unauthorized advance > unrecoverable > rewind > line damage.
  if (!rep.hmac_failures.empty()) {
    rep.status = RecoveryStatus::AttackDetected;
    rep.detection = ReconVerdict::RollForwardDetected;
  } else if (!rep.unrecoverable_lines.empty()) {
    rep.status = RecoveryStatus::UnrecoverableCounter;
    rep.detection = ReconVerdict::Clean;
  } else if (!rep.root_match) {
    rep.status = RecoveryStatus::AttackDetected;
    rep.detection = ReconVerdict::RollBackDetected;
  } else if (!rep.data_mac_failures.empty()) {
    rep.status = RecoveryStatus::AttackDetected;
    rep.detection = ReconVerdict::RollForwardDetected;
  } else {
    rep.status = RecoveryStatus::Clean;
    rep.detection = ReconVerdict::Clean;
  }

  // A clean pass yields a restart image: recovered blocks, fresh tags, the
  // rebuilt tree in place of whatever staleness the crash left behind.
  if (rep.status == RecoveryStatus::Clean) {
    working.clear_sit();
    for (const auto& [key2, node] : rep.recon.rebuilt)
      working.write_sit(key2.first, key2.second, node);
    working.root().counters = rep.recon.rebuilt_root;
    rep.healed = std::move(working);
  }
  return rep;
}

// The detection class each attack must land in. Replay modes must read as
// rewind; counter edits as unauthorized advance (which also wins in the
// mixed case); byte scrambling anywhere but Clean.
inline bool detection_matches(TamperMode m, const RecoveryReport& r) {
  switch (m) {
    case TamperMode::RollForward:
      return r.status == RecoveryStatus::AttackDetected &&
             r.detection == ReconVerdict::RollForwardDetected;
    case TamperMode::RollBack:
    case TamperMode::Replay:
      return r.status == RecoveryStatus::AttackDetected &&
             r.detection == ReconVerdict::RollBackDetected;
    case TamperMode::RandomBytes:
      return r.status != RecoveryStatus::Clean;
    case TamperMode::Mixed:
      return r.status == RecoveryStatus::AttackDetected &&
             r.detection == ReconVerdict::RollForwardDetected;
  }
  return false;
}

}  // namespace scuesim
