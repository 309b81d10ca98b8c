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

// Command-line front end: run traces, sweep crash points, fuzz attacks, and
// compare schemes. Exit status: 0 = success / clean verdict, 1 = an
// integrity verdict other than clean (attack detected, unrecoverable, or a
// missed detection in fuzzing), 2 = usage or configuration error.

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "scuesim/driver.hpp"

namespace {

using nlohmann::json;
using namespace scuesim;

Config load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  json j = json::parse(in);
  if (!j.is_object()) throw std::runtime_error("config file must hold an object");
  Config c;
  for (const auto& [key, val] : j.items()) {
    if (key == "mem_bytes") c.mem_size = val.get<std::uint64_t>();
    else if (key == "cache_kib") c.cache_kib = val.get<std::uint32_t>();
    else if (key == "cache_ways") c.cache_ways = val.get<std::uint32_t>();
    else if (key == "wq_user") c.wq_user = val.get<std::uint32_t>();
    else if (key == "wq_meta") c.wq_meta = val.get<std::uint32_t>();
    else if (key == "hash_cycles") c.hash_cycles = val.get<std::uint32_t>();
    else if (key == "nvm_read_cycles") c.nvm_read_cycles = val.get<std::uint32_t>();
    else if (key == "nvm_write_cycles") c.nvm_write_cycles = val.get<std::uint32_t>();
    else if (key == "meta_write_cycles") c.meta_write_cycles = val.get<std::uint32_t>();
    else if (key == "otp_cycles") c.otp_cycles = val.get<std::uint32_t>();
    else if (key == "scheme") c.scheme = scheme_from_string(val.get<std::string>());
    else if (key == "minor_bits") c.minor_bits = val.get<std::uint32_t>();
    else if (key == "osiris_limit") c.osiris_limit = val.get<std::uint32_t>();
    else if (key == "cb_persist_period") c.cb_persist_period = val.get<std::uint32_t>();
    else if (key == "tag_refill_cycles") c.tag_refill_cycles = val.get<std::uint32_t>();
    else if (key == "eager_parallel_hashes") c.eager_parallel_hashes = val.get<std::uint32_t>();
    else if (key == "bg_drain") c.bg_drain = bg_drain_from_string(val.get<std::string>());
    else if (key == "seed") c.seed = val.get<std::uint64_t>();
    else throw std::runtime_error("unknown config key: " + key);
  }
  return c;
}

struct CommonOpts {
  std::string config_path;
  std::string scheme;
  std::string trace_path;
  std::string gen_spec;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint32_t> hash_cycles;
  std::string out_spec;
};

void add_common(CLI::App* cmd, CommonOpts* o, bool with_trace = true) {
  cmd->add_option("--config", o->config_path, "JSON config file");
  cmd->add_option("--scheme", o->scheme,
                  "eager | lazy | lc | scue | bmt-eager");
  if (with_trace) {
    cmd->add_option("--trace", o->trace_path, "trace file (W/R lines)");
    cmd->add_option("--gen", o->gen_spec,
                    "generate a workload, <kind>:<ops>; kinds: array btree "
                    "hash queue rbtree seqwrite randwrite");
  }
  cmd->add_option("--seed", o->seed, "RNG seed (default 1)");
  cmd->add_option("--hash-cycles", o->hash_cycles, "MAC latency override");
  cmd->add_option("--out", o->out_spec, "write results to csv:<path> or json:<path>");
}

Config build_config(const CommonOpts& o) {
  Config c = o.config_path.empty() ? Config{} : load_config_file(o.config_path);
  if (!o.scheme.empty()) c.scheme = scheme_from_string(o.scheme);
  if (o.seed) c.seed = *o.seed;
  if (o.hash_cycles) c.hash_cycles = *o.hash_cycles;
  c.validate();
  return c;
}

Trace build_trace(const CommonOpts& o, const Config& cfg) {
  if (o.trace_path.empty() == o.gen_spec.empty())
    throw std::runtime_error("give exactly one of --trace or --gen");
  if (!o.trace_path.empty()) {
    std::ifstream in(o.trace_path);
    if (!in) throw std::runtime_error("cannot open trace: " + o.trace_path);
    return parse_trace(in);
  }
  const auto colon = o.gen_spec.find(':');
  if (colon == std::string::npos)
    throw std::runtime_error("--gen wants <kind>:<ops>");
  const WorkloadKind kind = workload_from_string(o.gen_spec.substr(0, colon));
  const std::size_t n = std::stoull(o.gen_spec.substr(colon + 1));
  if (n == 0) throw std::runtime_error("--gen wants a positive op count");
  return gen_trace(kind, n, cfg.seed, cfg.mem_size);
}

// Routes output to the --out target or stdout. form is "csv" or "json";
// an empty spec prints the csv text.
void emit(const std::string& out_spec, const std::string& csv_text,
          const std::string& json_text) {
  if (out_spec.empty()) {
    std::cout << csv_text;
    return;
  }
  const auto colon = out_spec.find(':');
  if (colon == std::string::npos)
    throw std::runtime_error("--out wants csv:<path> or json:<path>");
  const std::string form = out_spec.substr(0, colon);
  const std::string path = out_spec.substr(colon + 1);
  const std::string* text = nullptr;
  if (form == "csv") text = &csv_text;
  else if (form == "json") text = &json_text;
  else throw std::runtime_error("--out form must be csv or json");
  if (text->empty())
    throw std::runtime_error("this subcommand has no " + form + " output");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write: " + path);
  out << *text;
}

std::string recovery_lines(const RecoveryReport& r) {
  std::ostringstream s;
  s << "recovery-status: " << to_string(r.status) << '\n'
    << "detection: " << to_string(r.detection) << '\n'
    << "root-match: " << (r.root_match ? "yes" : "no") << '\n'
    << "stale-counters-recovered: " << r.osiris_recovered_lines << '\n'
    << "unrecoverable-lines: " << r.unrecoverable_lines.size() << '\n'
    << "tag-sweep-failures: " << r.hmac_failures.size() << '\n';
  return s.str();
}

int cmd_run(const CommonOpts& o, std::optional<std::size_t> crash_at,
            const std::string& tamper_mode) {
  const Config cfg = build_config(o);
  const Trace trace = build_trace(o, cfg);
  if (!crash_at && !tamper_mode.empty())
    throw std::runtime_error("--tamper needs --crash-at");
  if (!crash_at) {
    const RunReport rep = simulate(cfg, trace);
    emit(o.out_spec, to_csv(rep), to_json({rep}, cfg));
    return 0;
  }
  std::optional<TamperMode> mode;
  if (!tamper_mode.empty()) mode = tamper_mode_from_string(tamper_mode);
  const CrashRunResult res = crash_and_recover(cfg, trace, *crash_at, mode);
  emit(o.out_spec, to_csv(res.report), to_json({res.report}, cfg));
  std::cerr << recovery_lines(res.recovery);
  return res.recovery.status == RecoveryStatus::Clean ? 0 : 2;
}

int cmd_crash_sweep(const CommonOpts& o, std::size_t points) {
  const Config cfg = build_config(o);
  const Trace trace = build_trace(o, cfg);
  const SweepResult res = crash_sweep(cfg, trace, points);
  std::ostringstream csv;
  csv << "schema_version,k,status,detection,stale_counters_recovered\n";
  for (const CrashPoint& p : res.points)
    csv << kSchemaVersion << ',' << p.k << ',' << to_string(p.status) << ','
        << to_string(p.detection) << ',' << p.osiris_recovered_lines << '\n';
  emit(o.out_spec, csv.str(), "");
  std::cerr << "crash-points: " << res.points.size() << '\n'
            << "all-clean: " << (res.all_clean ? "yes" : "no") << '\n';
  return res.all_clean ? 0 : 2;
}

int cmd_attack_fuzz(const CommonOpts& o, std::size_t cases) {
  const Config cfg = build_config(o);
  const Trace trace = build_trace(o, cfg);
  const FuzzResult res = attack_fuzz(cfg, trace, cases, cfg.seed);
  std::ostringstream csv;
  csv << "schema_version,case,mode,snapshot_k,crash_k,leaf,status,detection,"
         "detected\n";
  for (const AttackCase& c : res.cases)
    csv << kSchemaVersion << ',' << c.index << ',' << to_string(c.mode) << ','
        << c.snapshot_k << ',' << c.crash_k << ',' << c.leaf << ','
        << to_string(c.status) << ',' << to_string(c.detection) << ','
        << (c.detected ? "yes" : "no") << '\n';
  emit(o.out_spec, csv.str(), "");
  std::cerr << "cases: " << res.cases.size() << '\n'
            << "detected: " << res.detected_count << '\n';
  return res.detected_count == res.cases.size() ? 0 : 2;
}

int cmd_compare(const CommonOpts& o) {
  const Config cfg = build_config(o);
  const Trace trace = build_trace(o, cfg);
  const std::vector<RunReport> reports = compare_schemes(cfg, trace);
  emit(o.out_spec, compare_csv(reports), to_json(reports, cfg));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"secure NVM controller simulator"};
  app.require_subcommand(1);

  CommonOpts run_o, sweep_o, fuzz_o, cmp_o;
  std::optional<std::size_t> crash_at;
  std::string tamper_mode;
  std::size_t sweep_points = 201;
  std::size_t fuzz_cases = 100;

  CLI::App* run = app.add_subcommand("run", "simulate one trace");
  add_common(run, &run_o);
  run->add_option("--crash-at", crash_at,
                  "power-fail after this many ops and recover");
  run->add_option("--tamper", tamper_mode,
                  "with --crash-at: roll-forward | roll-back | replay | "
                  "random-bytes | mixed");

  CLI::App* sweep = app.add_subcommand("crash-sweep",
                                       "recover from every crash point");
  add_common(sweep, &sweep_o);
  sweep->add_option("--points", sweep_points, "max crash points (default 201)");

  CLI::App* fuzz = app.add_subcommand("attack-fuzz",
                                      "inject tampers into crash windows");
  add_common(fuzz, &fuzz_o);
  fuzz->add_option("--cases", fuzz_cases, "attack cases (default 100)");

  CLI::App* cmp = app.add_subcommand("compare", "run every scheme on one trace");
  add_common(cmp, &cmp_o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  // Exit codes: 1 = usage/config error, 2 = integrity or consistency failure.
  try {
    if (run->parsed()) return cmd_run(run_o, crash_at, tamper_mode);
    if (sweep->parsed()) return cmd_crash_sweep(sweep_o, sweep_points);
    if (fuzz->parsed()) return cmd_attack_fuzz(fuzz_o, fuzz_cases);
    if (cmp->parsed()) return cmd_compare(cmp_o);
  } catch (const IntegrityViolation& e) {
    std::cerr << "integrity violation: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
