#pragma once

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "fedcarbon/carbon.hpp"
#include "fedcarbon/config.hpp"
#include "fedcarbon/csv.hpp"
#include "fedcarbon/population.hpp"
#include "fedcarbon/power_profile.hpp"
#include "fedcarbon/predictor.hpp"
#include "fedcarbon/sim.hpp"
#include "fedcarbon/task.hpp"

namespace fedcarbon {

inline const char* mode_name(Mode m) { return m == Mode::sync ? "sync" : "async"; }

inline const char* stop_name(StopDecision d) {
  switch (d) {
    case StopDecision::target_reached: return "target_reached";
    case StopDecision::time_limit: return "time_limit";
    default: return "continue";
  }
}

inline const char* outcome_name(SessionOutcome o) {
  switch (o) {
    case SessionOutcome::completed: return "completed";
    case SessionOutcome::dropped: return "dropped";
    case SessionOutcome::discarded_late: return "discarded_late";
    default: return "discarded_stale_round";
  }
}

inline const char* provenance_name(Provenance p) {
  return p == Provenance::measured ? "measured" : "imputed";
}

/// Everything execute_run needs besides the run parameters themselves.
/// Loaded once and shared read-only across a whole sweep.
struct EnergyEnvironment {
  std::map<std::string, DevicePowerModel> device_models;
  NetworkEnergyParams network;
  ServerEnergyParams server;
  CarbonIntensityTable intensity;
  DatacenterFleet fleet;
  NetworkAttribution attribution = NetworkAttribution::client_country;
  bool count_dropped_sessions = true;
};

/// Similarity file: rows of device_key,similar_to. Keys do not need profiles
/// of their own; chains resolve during imputation.
inline std::map<std::string, std::string> load_similarity_csv(const std::string& path) {
  const csv::Table t = csv::read_file(path);
  csv::require_header(t, {"device_key", "similar_to"}, path);
  std::map<std::string, std::string> similar;
  for (const auto& row : t.rows) {
    if (row[0].empty() || row[1].empty())
      throw MalformedDocument(path + ": empty device key in similarity row");
    if (!similar.emplace(row[0], row[1]).second)
      throw MalformedDocument(path + ": duplicate similarity entry for " + row[0]);
  }
  return similar;
}

/// Parses every .xml under dir, keyed by file stem. Sorted traversal keeps
/// error order stable across platforms.
inline std::map<std::string, PowerProfileDoc> load_profile_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw ConfigError(dir, "not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".xml")
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  std::map<std::string, PowerProfileDoc> docs;
  for (const auto& f : files) {
    std::ifstream in(f);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    docs.emplace(f.stem().string(), parse_power_profile(text));
  }
  return docs;
}

inline EnergyEnvironment load_environment(const SimulationConfig& c) {
  EnergyEnvironment env;
  env.network = c.network;
  env.server = c.server;
  env.attribution = c.attribution;
  env.count_dropped_sessions = c.count_dropped_sessions;
  env.intensity = load_carbon_intensity_csv(c.intensity_csv);
  env.fleet = load_datacenter_fleet_csv(c.fleet_csv);

  BuildOptions opts;
  opts.fallback_wifi_voltage_mv = c.fallback_wifi_voltage_mv;
  std::map<std::string, DevicePowerModel> measured;
  for (const auto& [key, doc] : load_profile_dir(c.profiles_dir))
    measured.emplace(key, build_device_model(doc, opts, key));
  std::map<std::string, std::string> similar;
  if (!c.similarity_csv.empty()) similar = load_similarity_csv(c.similarity_csv);

  env.device_models = measured;
  for (const auto& [key, weight] : c.population.device_model_mix) {
    (void)weight;
    if (!env.device_models.count(key))
      env.device_models.emplace(key, resolve_device_model(key, measured, similar));
  }
  return env;
}

struct RunOutput {
  std::string run_id;
  RunResult result;
  EnergyBreakdown energy;  // run totals, server term included
  EmissionsReport report;
};

/// Stable fingerprint over every input that shapes the run. Same config and
/// seed always hash alike, so rewriting a results file is byte-idempotent.
inline std::string run_id_for(const SimulationConfig& c) {
  char buf[640];
  std::snprintf(
      buf, sizeof buf,
      "%s|%d|%.17g|%.17g|%.17g|%d|%d|%.17g|%.17g|%.17g|%" PRIu64 "|%.17g|%d|%.17g|%d|%d|%" PRIu64
      "|%d|%.17g|%.17g|%.17g|%" PRIu64,
      mode_name(c.run.mode), c.run.concurrency, c.run.aggregation_goal_pct, c.run.server_lr,
      c.run.client_lr, c.run.local_epochs, c.run.batch_size, c.run.beta1, c.run.beta2,
      c.run.adam_epsilon, static_cast<std::uint64_t>(c.run.model_size_bytes),
      c.run.round_timeout_s, c.run.eval_every_steps, c.run.eval_every_seconds,
      static_cast<int>(c.run.staleness_scheme), static_cast<int>(c.run.weighting), c.run.seed,
      c.population.num_devices, c.population.dropout_min, c.population.dropout_max,
      c.run.stopping.target_perplexity, c.population.seed);
  std::uint64_t h = 0x5eedf00dcafe1234ULL;
  for (const char* p = buf; *p; ++p) h = mix64(h ^ static_cast<unsigned char>(*p));
  h = mix64(h ^ (c.task.kind == TaskConfig::Kind::reference ? 0x7ef  : 0x5f1));
  char id[17];
  std::snprintf(id, sizeof id, "%016" PRIx64, h);
  return std::string(id);
}

inline RunOutput execute_run(const SimulationConfig& c, const EnergyEnvironment& env) {
  const std::vector<ClientDevice> population = generate_population(c.population);

  RunOutput out;
  out.run_id = run_id_for(c);
  if (c.task.kind == TaskConfig::Kind::reference) {
    ClientTrainConfig train{c.run.client_lr, c.run.local_epochs, c.run.batch_size};
    ReferenceTask task(c.task.vocab_size, train, c.task.heldout_clients,
                       c.task.heldout_samples_per_client, c.task.heldout_seed);
    out.result = c.run.mode == Mode::sync ? run_sync(c.run, population, task)
                                          : run_async(c.run, population, task);
  } else {
    SyntheticTask task(c.task.synthetic, aggregation_goal_count(c.run), c.run.seed);
    out.result = c.run.mode == Mode::sync ? run_sync(c.run, population, task)
                                          : run_async(c.run, population, task);
  }

  EnergyAttachOptions opts;
  opts.count_dropped = env.count_dropped_sessions;
  out.energy = attach_energy(out.result.sessions, env.device_models, env.network, env.server,
                             out.result.wall_seconds, opts);

  std::vector<SessionEmissionInput> inputs;
  inputs.reserve(out.result.sessions.size());
  for (const SessionRecord& s : out.result.sessions) {
    SessionEmissionInput in;
    in.country_code = s.country_code;
    in.e_compute_j = s.energy.e_client_compute_j;
    in.e_radio_rx_j = s.e_radio_rx_j;
    in.e_radio_tx_j = s.e_radio_tx_j;
    in.e_net_up_j = s.energy.e_network_infra_up_j;
    in.e_net_down_j = s.energy.e_network_infra_down_j;
    inputs.push_back(in);
  }
  out.report =
      build_report(inputs, out.energy.e_server_j, env.intensity, env.fleet, env.attribution);
  return out;
}

inline const std::vector<std::string>& results_header() {
  static const std::vector<std::string> h = {
      "run_id",         "mode",
      "concurrency",    "aggregation_goal_pct",
      "server_lr",      "client_lr",
      "local_epochs",   "batch_size",
      "beta1",          "beta2",
      "seed",           "rounds",
      "hours",          "final_perplexity",
      "stop_reason",    "co2e_client_compute_kg",
      "co2e_upload_kg", "co2e_download_kg",
      "co2e_server_kg", "co2e_total_kg"};
  return h;
}

inline std::vector<std::string> results_row(const SimulationConfig& c, const RunOutput& o) {
  const auto num = [](double v) { return csv::format_double(v); };
  return {o.run_id,
          mode_name(c.run.mode),
          std::to_string(c.run.concurrency),
          num(c.run.aggregation_goal_pct),
          num(c.run.server_lr),
          num(c.run.client_lr),
          std::to_string(c.run.local_epochs),
          std::to_string(c.run.batch_size),
          num(c.run.beta1),
          num(c.run.beta2),
          std::to_string(c.run.seed),
          std::to_string(o.result.rounds),
          num(o.result.wall_hours()),
          num(o.result.final_smoothed_perplexity),
          stop_name(o.result.stop_reason),
          num(o.report.co2e_client_compute_kg),
          num(o.report.co2e_upload_kg),
          num(o.report.co2e_download_kg),
          num(o.report.co2e_server_kg),
          num(o.report.total_kg())};
}

/// Reads a results file back into predictor inputs.
inline std::vector<RunSummary> load_run_summaries(const std::string& path) {
  const csv::Table t = csv::read_file(path);
  csv::require_header(t, results_header(), path);
  std::vector<RunSummary> out;
  out.reserve(t.rows.size());
  for (const auto& row : t.rows) {
    RunSummary s;
    if (row[1] == "sync")
      s.mode = Mode::sync;
    else if (row[1] == "async")
      s.mode = Mode::async;
    else
      throw MalformedDocument(path + ": unknown mode " + row[1]);
    s.concurrency = static_cast<int>(csv::to_int(row[2], path));
    s.rounds = csv::to_double(row[11], path);
    s.hours = csv::to_double(row[12], path);
    s.co2e_client_compute_kg = csv::to_double(row[15], path);
    s.co2e_upload_kg = csv::to_double(row[16], path);
    s.co2e_download_kg = csv::to_double(row[17], path);
    s.co2e_server_kg = csv::to_double(row[18], path);
    s.co2e_total_kg = csv::to_double(row[19], path);
    out.push_back(s);
  }
  return out;
}

inline const std::vector<std::string>& sessions_header() {
  static const std::vector<std::string> h = {"run_id",
                                             "client_id",
                                             "device_model_key",
                                             "country_code",
                                             "assigned_version",
                                             "outcome",
                                             "t_start_s",
                                             "t_end_s",
                                             "t_download_s",
                                             "t_train_s",
                                             "t_upload_s",
                                             "bytes_down",
                                             "bytes_up",
                                             "e_client_compute_j",
                                             "e_client_radio_j",
                                             "e_network_infra_up_j",
                                             "e_network_infra_down_j"};
  return h;
}

inline void write_sessions_csv(const std::string& path, const std::string& run_id,
                               const std::vector<SessionRecord>& sessions) {
  std::ofstream out(path, std::ios::trunc);
  if (!out.good()) throw ConfigError(path, "cannot open for writing");
  out << csv::join_row(sessions_header()) << "\n";
  const auto num = [](double v) { return csv::format_double(v); };
  for (const SessionRecord& s : sessions) {
    out << csv::join_row({run_id, std::to_string(s.client_id), s.device_model_key,
                          s.country_code, std::to_string(s.assigned_version), outcome_name(s.outcome),
                          num(s.t_start), num(s.t_end), num(s.timing.t_download_s),
                          num(s.timing.t_train_s), num(s.timing.t_upload_s),
                          std::to_string(s.timing.bytes_down), std::to_string(s.timing.bytes_up),
                          num(s.energy.e_client_compute_j), num(s.energy.e_client_radio_j),
                          num(s.energy.e_network_infra_up_j),
                          num(s.energy.e_network_infra_down_j)})
        << "\n";
  }
}

}  // namespace fedcarbon
