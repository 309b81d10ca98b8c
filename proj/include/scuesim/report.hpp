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
#include <cstdio>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "scuesim/config.hpp"
#include "scuesim/controller.hpp"

namespace scuesim {

// One finished run, flattened for machine-readable output. Field names in
// the CSV and JSON forms match the member names exactly, in declaration
// order; kSchemaVersion bumps whenever a column changes meaning or moves.
struct RunReport {
  std::string scheme;
  std::uint64_t ops = 0;
  std::uint64_t reads = 0;
  std::uint64_t writes = 0;
  std::uint64_t total_cycles = 0;
  double avg_write_latency_cycles = 0.0;
  double avg_read_latency_cycles = 0.0;
  double metadata_cache_hit_ratio = 0.0;
  double metadata_write_fraction = 0.0;
  std::uint64_t hash_count = 0;
  std::uint64_t verify_hashes = 0;
  std::uint64_t tree_node_reads = 0;
  std::uint64_t bg_node_reads = 0;
  std::uint64_t stall_cycles = 0;
  std::uint64_t queue_full_stalls = 0;
  std::uint64_t overflow_resyncs = 0;
  std::uint64_t tag_refills = 0;
  std::uint64_t cb_persists = 0;
  std::uint64_t forced_drains = 0;
  std::uint64_t nvm_user_writes = 0;
  std::uint64_t nvm_meta_writes = 0;
  std::uint64_t cache_evictions = 0;
  std::uint64_t bg_jobs = 0;
};

inline constexpr int kSchemaVersion = 1;

inline RunReport make_report(const Config& cfg, const Controller& ctl) {
  const Totals& t = ctl.ledger().totals();
  RunReport r;
  r.scheme = to_string(cfg.scheme);
  r.ops = t.ops();
  r.reads = t.ops_read;
  r.writes = t.ops_write;
  r.total_cycles = ctl.now();
  r.avg_write_latency_cycles = t.mean_write_latency();
  r.avg_read_latency_cycles = t.mean_read_latency();
  r.metadata_cache_hit_ratio = t.cache_hit_ratio();
  r.metadata_write_fraction = t.meta_write_fraction();
  r.hash_count = t.hash_count;
  r.verify_hashes = t.hash_verify;
  r.tree_node_reads = t.tree_node_reads;
  r.bg_node_reads = t.bg_node_reads;
  r.stall_cycles = t.stall_charge;
  r.queue_full_stalls = t.queue_full_stalls;
  r.overflow_resyncs = t.overflow_resyncs;
  r.tag_refills = t.tag_refills;
  r.cb_persists = t.cb_persists;
  r.forced_drains = t.forced_drains;
  r.nvm_user_writes = t.nvm_user_writes;
  r.nvm_meta_writes = t.nvm_meta_writes;
  r.cache_evictions = t.cache_evictions;
  r.bg_jobs = t.bg_jobs;
  return r;
}

namespace detail {

// Fixed-point text for doubles keeps output byte-identical across runs.
inline std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

inline const char* csv_columns() {
  return "schema_version,scheme,ops,reads,writes,total_cycles,"
         "avg_write_latency_cycles,avg_read_latency_cycles,"
         "metadata_cache_hit_ratio,metadata_write_fraction,hash_count,"
         "verify_hashes,tree_node_reads,bg_node_reads,stall_cycles,"
         "queue_full_stalls,overflow_resyncs,tag_refills,cb_persists,"
         "forced_drains,nvm_user_writes,nvm_meta_writes,cache_evictions,"
         "bg_jobs";
}

inline void csv_row(std::ostringstream& out, const RunReport& r) {
  out << kSchemaVersion << ',' << r.scheme << ',' << r.ops << ',' << r.reads
      << ',' << r.writes << ',' << r.total_cycles << ','
      << fmt6(r.avg_write_latency_cycles) << ','
      << fmt6(r.avg_read_latency_cycles) << ','
      << fmt6(r.metadata_cache_hit_ratio) << ','
      << fmt6(r.metadata_write_fraction) << ',' << r.hash_count << ','
      << r.verify_hashes << ',' << r.tree_node_reads << ',' << r.bg_node_reads
      << ',' << r.stall_cycles << ',' << r.queue_full_stalls << ','
      << r.overflow_resyncs << ',' << r.tag_refills << ',' << r.cb_persists
      << ',' << r.forced_drains << ',' << r.nvm_user_writes << ','
      << r.nvm_meta_writes << ',' << r.cache_evictions << ',' << r.bg_jobs
      << '\n';
}

}  // namespace detail

inline std::string to_csv(const std::vector<RunReport>& reports) {
  std::ostringstream out;
  out << detail::csv_columns() << '\n';
  for (const RunReport& r : reports) detail::csv_row(out, r);
  return out.str();
}

inline std::string to_csv(const RunReport& r) {
  return to_csv(std::vector<RunReport>{r});
}

// JSON mirror of the CSV columns plus an echo of the configuration that
// produced the run. Keys are emitted in a fixed order.
inline std::string to_json(const std::vector<RunReport>& reports,
                           const Config& cfg) {
  std::ostringstream out;
  const auto q = [](const std::string& s) { return '"' + s + '"'; };
  out << "{\n  \"schema_version\": " << kSchemaVersion << ",\n";
  out << "  \"config\": {\n";
  out << "    \"mem_bytes\": " << cfg.mem_size << ",\n";
  out << "    \"cache_kib\": " << cfg.cache_kib << ",\n";
  out << "    \"cache_ways\": " << cfg.cache_ways << ",\n";
  out << "    \"wq_user\": " << cfg.wq_user << ",\n";
  out << "    \"wq_meta\": " << cfg.wq_meta << ",\n";
  out << "    \"hash_cycles\": " << cfg.hash_cycles << ",\n";
  out << "    \"nvm_read_cycles\": " << cfg.nvm_read_cycles << ",\n";
  out << "    \"nvm_write_cycles\": " << cfg.nvm_write_cycles << ",\n";
  out << "    \"meta_write_cycles\": " << cfg.meta_write_cycles << ",\n";
  out << "    \"otp_cycles\": " << cfg.otp_cycles << ",\n";
  out << "    \"scheme\": " << q(to_string(cfg.scheme)) << ",\n";
  out << "    \"minor_bits\": " << cfg.minor_bits << ",\n";
  out << "    \"osiris_limit\": " << cfg.osiris_limit << ",\n";
  out << "    \"cb_persist_period\": " << cfg.cb_persist_period << ",\n";
  out << "    \"tag_refill_cycles\": " << cfg.tag_refill_cycles << ",\n";
  out << "    \"eager_parallel_hashes\": " << cfg.eager_parallel_hashes << ",\n";
  out << "    \"bg_drain\": " << q(to_string(cfg.bg_drain)) << ",\n";
  out << "    \"seed\": " << cfg.seed << "\n";
  out << "  },\n";
  out << "  \"reports\": [\n";
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const RunReport& r = reports[i];
    out << "    {\n";
    out << "      \"scheme\": " << q(r.scheme) << ",\n";
    out << "      \"ops\": " << r.ops << ",\n";
    out << "      \"reads\": " << r.reads << ",\n";
    out << "      \"writes\": " << r.writes << ",\n";
    out << "      \"total_cycles\": " << r.total_cycles << ",\n";
    out << "      \"avg_write_latency_cycles\": "
        << detail::fmt6(r.avg_write_latency_cycles) << ",\n";
    out << "      \"avg_read_latency_cycles\": "
        << detail::fmt6(r.avg_read_latency_cycles) << ",\n";
    out << "      \"metadata_cache_hit_ratio\": "
        << detail::fmt6(r.metadata_cache_hit_ratio) << ",\n";
    out << "      \"metadata_write_fraction\": "
        << detail::fmt6(r.metadata_write_fraction) << ",\n";
    out << "      \"hash_count\": " << r.hash_count << ",\n";
    out << "      \"verify_hashes\": " << r.verify_hashes << ",\n";
    out << "      \"tree_node_reads\": " << r.tree_node_reads << ",\n";
    out << "      \"bg_node_reads\": " << r.bg_node_reads << ",\n";
    out << "      \"stall_cycles\": " << r.stall_cycles << ",\n";
    out << "      \"queue_full_stalls\": " << r.queue_full_stalls << ",\n";
    out << "      \"overflow_resyncs\": " << r.overflow_resyncs << ",\n";
    out << "      \"tag_refills\": " << r.tag_refills << ",\n";
    out << "      \"cb_persists\": " << r.cb_persists << ",\n";
    out << "      \"forced_drains\": " << r.forced_drains << ",\n";
    out << "      \"nvm_user_writes\": " << r.nvm_user_writes << ",\n";
    out << "      \"nvm_meta_writes\": " << r.nvm_meta_writes << ",\n";
    out << "      \"cache_evictions\": " << r.cache_evictions << ",\n";
    out << "      \"bg_jobs\": " << r.bg_jobs << "\n";
    out << "    }" << (i + 1 < reports.size() ? "," : "") << "\n";
  }
  out << "  ]\n}\n";
  return out.str();
}

// Side-by-side scheme table, every rate column normalized to the shortcut
// scheme's row, which is therefore exactly 1.000000.
inline std::string compare_csv(const std::vector<RunReport>& reports) {
  const RunReport* base = nullptr;
  for (const RunReport& r : reports)
    if (r.scheme == to_string(Scheme::Scue)) base = &r;
  if (base == nullptr)
    throw std::invalid_argument("compare table needs a scue run to normalize to");
  std::ostringstream out;
  out << "schema_version,scheme,total_cycles,total_cycles_vs_scue,"
         "avg_write_latency_cycles,avg_write_latency_vs_scue,hash_count,"
         "hash_count_vs_scue,tree_node_reads,metadata_write_fraction\n";
  const auto ratio = [](double num, double den) {
    if (num == den) return 1.0;  // the base row divides to exactly 1
    return den == 0.0 ? 0.0 : num / den;
  };
  for (const RunReport& r : reports) {
    out << kSchemaVersion << ',' << r.scheme << ',' << r.total_cycles << ','
        << detail::fmt6(ratio(static_cast<double>(r.total_cycles),
                              static_cast<double>(base->total_cycles)))
        << ',' << detail::fmt6(r.avg_write_latency_cycles) << ','
        << detail::fmt6(ratio(r.avg_write_latency_cycles,
                              base->avg_write_latency_cycles))
        << ',' << r.hash_count << ','
        << detail::fmt6(ratio(static_cast<double>(r.hash_count),
                              static_cast<double>(base->hash_count)))
        << ',' << r.tree_node_reads << ','
        << detail::fmt6(r.metadata_write_fraction) << '\n';
  }
  return out.str();
}

}  // namespace scuesim
