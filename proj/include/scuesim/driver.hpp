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
#include <map>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "scuesim/config.hpp"
#include "scuesim/controller.hpp"
#include "scuesim/failure.hpp"
#include "scuesim/report.hpp"
#include "scuesim/workloads.hpp"

namespace scuesim {

// Runs the first `k` trace ops on a fresh controller. Writes without an
// explicit payload get the deterministic default; reads are checked against
// a shadow copy of everything written so a decryption slip cannot pass
// silently.
inline Controller run_prefix(const Config& cfg, const Trace& trace,
                             std::size_t k, bool verify_reads = true) {
  if (k > trace.ops.size())
    throw std::out_of_range("trace prefix longer than the trace");
  Controller ctl(cfg);
  std::map<std::uint64_t, DataBlock> shadow;
  for (std::size_t i = 0; i < k; ++i) {
    const TraceOp& op = trace.ops[i];
    if (op.is_write) {
      const DataBlock payload =
          op.has_payload ? op.payload : default_payload(cfg.seed, i, op.addr);
      ctl.write(op.addr, payload);
      if (verify_reads) shadow[op.addr] = payload;
    } else {
      const ReadResult r = ctl.read(op.addr);
      if (verify_reads) {
        const auto it = shadow.find(op.addr);
        const DataBlock expect = it == shadow.end() ? DataBlock{} : it->second;
        if (!(r.plaintext.bytes == expect.bytes))
          throw std::logic_error("decrypted read diverged from written data");
      }
    }
  }
  return ctl;
}

inline Controller run_trace(const Config& cfg, const Trace& trace,
                            bool verify_reads = true) {
  return run_prefix(cfg, trace, trace.ops.size(), verify_reads);
}

inline RunReport simulate(const Config& cfg, const Trace& trace) {
  const Controller ctl = run_trace(cfg, trace);
  return make_report(cfg, ctl);
}

// --- crash OF the whole machine at an op boundary --------------------------

struct CrashPoint {
  std::size_t k = 0;  // ops completed before power loss
  RecoveryStatus status = RecoveryStatus::Clean;
  ReconVerdict detection = ReconVerdict::Clean;
  std::uint64_t osiris_recovered_lines = 0;
};

struct SweepResult {
  std::vector<CrashPoint> points;
  bool all_clean = true;
};

inline constexpr std::size_t kMaxSweepPoints = 10000;

// Crashes the run after k ops for up to max_points evenly spaced k in
// [0, n], recovering each image from scratch. An honest crash must always
// come back Clean.
inline SweepResult crash_sweep(const Config& cfg, const Trace& trace,
                               std::size_t max_points = 201) {
  if (max_points < 2) throw std::invalid_argument("sweep needs >= 2 points");
  if (max_points > kMaxSweepPoints)
    throw std::invalid_argument("sweep capped at 10000 crash events");
  const std::size_t n = trace.ops.size();
  std::vector<std::size_t> ks;
  if (n + 1 <= max_points) {
    for (std::size_t k = 0; k <= n; ++k) ks.push_back(k);
  } else {
    for (std::size_t i = 0; i < max_points; ++i)
      ks.push_back(i * n / (max_points - 1));
  }
  SweepResult res;
  for (const std::size_t k : ks) {
    Controller ctl = run_prefix(cfg, trace, k);
    const NvmImage img = ctl.take_crash_image();
    const RecoveryReport rep = recover(img, cfg);
    res.points.push_back(
        {k, rep.status, rep.detection, rep.osiris_recovered_lines});
    if (rep.status != RecoveryStatus::Clean) res.all_clean = false;
  }
  return res;
}

// --- crash WITH an attacker in the window ----------------------------------

struct AttackCase {
  std::size_t index = 0;
  TamperMode mode = TamperMode::RollForward;
  std::size_t snapshot_k = 0;
  std::size_t crash_k = 0;
  std::uint64_t leaf = 0;
  RecoveryStatus status = RecoveryStatus::Clean;
  ReconVerdict detection = ReconVerdict::Clean;
  bool detected = false;
};

struct FuzzResult {
  std::vector<AttackCase> cases;
  std::size_t detected_count = 0;
};

namespace detail {

// A replayed cone only proves anything if the leaf moved inside the window,
// so every case is anchored on a write op w with snapshot_k <= w < crash_k.
struct FuzzWindow {
  std::size_t snapshot_k, crash_k;
  std::uint64_t leaf;
};

inline FuzzWindow pick_window(const Trace& trace, const TreeGeometry& g,
                              const std::vector<std::size_t>& write_idx,
                              std::mt19937_64& rng) {
  const std::size_t n = trace.ops.size();
  std::size_t crash_k = 1 + rng() % n;
  // Writes no later than the crash; nudge forward when the prefix has none.
  if (write_idx.front() >= crash_k) crash_k = write_idx.front() + 1;
  std::size_t hi = 0;
  while (hi + 1 < write_idx.size() && write_idx[hi + 1] < crash_k) ++hi;
  const std::size_t w = write_idx[rng() % (hi + 1)];
  const std::size_t snapshot_k = rng() % (w + 1);
  return {snapshot_k, crash_k, g.leaf_of_addr(trace.ops[w].addr)};
}

// Some other leaf the crash image stores, for the mixed case's counter bump.
inline std::optional<std::uint64_t> other_stored_leaf(const NvmImage& img,
                                                      std::uint64_t avoid) {
  for (const auto& [leaf, cb] : img.counters())
    if (leaf != avoid) return leaf;
  for (const auto& [addr, b] : img.data()) {
    const std::uint64_t leaf = img.geometry().leaf_of_addr(addr);
    if (leaf != avoid) return leaf;
  }
  return std::nullopt;
}

}  // namespace detail

// Replays crash windows with one attack injected per case, cycling through
// the tamper modes, and checks each lands in its required detection class.
inline FuzzResult attack_fuzz(const Config& cfg, const Trace& trace,
                              std::size_t cases, std::uint64_t seed) {
  std::vector<std::size_t> write_idx;
  for (std::size_t i = 0; i < trace.ops.size(); ++i)
    if (trace.ops[i].is_write) write_idx.push_back(i);
  if (write_idx.empty())
    throw std::invalid_argument("attack fuzz needs a trace with writes");
  const TreeGeometry g = TreeGeometry::from_mem_bytes(cfg.mem_size);

  FuzzResult res;
  for (std::size_t ci = 0; ci < cases; ++ci) {
    std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ull + ci);
    AttackCase ac;
    ac.index = ci;
    ac.mode = static_cast<TamperMode>(ci % 5);
    const detail::FuzzWindow win =
        detail::pick_window(trace, g, write_idx, rng);
    ac.snapshot_k = win.snapshot_k;
    ac.crash_k = win.crash_k;
    ac.leaf = win.leaf;

    Controller snap_ctl = run_prefix(cfg, trace, win.snapshot_k);
    const NvmImage snapshot = snap_ctl.take_crash_image();
    Controller crash_ctl = run_prefix(cfg, trace, win.crash_k);
    NvmImage img = crash_ctl.take_crash_image();

    TamperSpec spec;
    spec.mode = ac.mode;
    spec.leaf = win.leaf;
    spec.seed = rng();
    if (spec.mode == TamperMode::Mixed) {
      // Bump one leaf, replay another; with a single-leaf image the replay
      // would overwrite the bump, so fall back to the bump alone.
      const auto other = detail::other_stored_leaf(img, win.leaf);
      if (other) {
        spec.second_leaf = win.leaf;
        spec.leaf = *other;
      } else {
        spec.mode = TamperMode::RollForward;
        ac.mode = spec.mode;
      }
    }
    tamper(img, spec, &snapshot);

    const RecoveryReport rep = recover(img, cfg);
    ac.status = rep.status;
    ac.detection = rep.detection;
    ac.detected = detection_matches(ac.mode, rep);
    if (ac.detected) res.detected_count += 1;
    res.cases.push_back(ac);
  }
  return res;
}

// --- single crash/tamper run for the command line --------------------------

struct CrashRunResult {
  RunReport report;
  RecoveryReport recovery;
  std::size_t snapshot_k = 0;  // meaningful for replay-class tampers
  std::uint64_t leaf = 0;      // tampered leaf, when tampered
};

inline CrashRunResult crash_and_recover(const Config& cfg, const Trace& trace,
                                        std::size_t crash_k,
                                        std::optional<TamperMode> mode) {
  if (crash_k > trace.ops.size())
    throw std::out_of_range("crash point past the end of the trace");
  CrashRunResult out;
  Controller ctl = run_prefix(cfg, trace, crash_k);
  out.report = make_report(cfg, ctl);
  NvmImage img = ctl.take_crash_image();

  if (mode) {
    // Anchor on the last write before the crash; the snapshot is taken just
    // before it so replay-class tampers are guaranteed a moved leaf.
    std::size_t w = crash_k;
    while (w > 0 && !trace.ops[w - 1].is_write) --w;
    if (w == 0)
      throw std::invalid_argument("tamper needs a write before the crash");
    --w;  // index of the last write op
    const TreeGeometry g = TreeGeometry::from_mem_bytes(cfg.mem_size);
    TamperSpec spec;
    spec.mode = *mode;
    spec.leaf = g.leaf_of_addr(trace.ops[w].addr);
    spec.seed = cfg.seed * 0x9e3779b97f4a7c15ull + crash_k;
    out.snapshot_k = w;
    std::optional<NvmImage> snapshot;
    if (*mode == TamperMode::RollBack || *mode == TamperMode::Replay ||
        *mode == TamperMode::Mixed) {
      Controller snap_ctl = run_prefix(cfg, trace, w);
      snapshot = snap_ctl.take_crash_image();
    }
    if (*mode == TamperMode::Mixed) {
      const auto other = detail::other_stored_leaf(img, spec.leaf);
      if (!other)
        throw std::invalid_argument("mixed tamper needs two stored leaves");
      spec.second_leaf = spec.leaf;
      spec.leaf = *other;
    }
    out.leaf = spec.leaf;
    tamper(img, spec, snapshot ? &*snapshot : nullptr);
  }

  out.recovery = recover(img, cfg);
  return out;
}

// Same trace, every scheme, one table.
inline std::vector<RunReport> compare_schemes(const Config& base,
                                              const Trace& trace) {
  std::vector<RunReport> out;
  for (const Scheme s : {Scheme::Scue, Scheme::Eager, Scheme::Lazy,
                         Scheme::LazyComputing, Scheme::BmtEager}) {
    Config cfg = base;
    cfg.scheme = s;
    out.push_back(simulate(cfg, trace));
  }
  return out;
}

}  // namespace scuesim
