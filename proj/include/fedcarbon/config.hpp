#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include <json.hpp>

#include "fedcarbon/carbon.hpp"
#include "fedcarbon/energy.hpp"
#include "fedcarbon/errors.hpp"
#include "fedcarbon/population.hpp"
#include "fedcarbon/sim.hpp"
#include "fedcarbon/task.hpp"

namespace fedcarbon {

using Json = nlohmann::ordered_json;

namespace cfg {

inline Json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in.good()) throw ConfigError(path, "cannot open file");
  Json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ConfigError(path, std::string("invalid JSON: ") + e.what());
  }
  return j;
}

inline std::string join_path(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

inline const Json* find(const Json& j, const std::string& key) {
  const auto it = j.find(key);
  return it == j.end() ? nullptr : &*it;
}

inline const Json& require(const Json& j, const std::string& key, const std::string& prefix) {
  const Json* v = find(j, key);
  if (!v) throw ConfigError(join_path(prefix, key), "missing required key");
  return *v;
}

inline double require_num(const Json& j, const std::string& key, const std::string& prefix) {
  const Json& v = require(j, key, prefix);
  if (!v.is_number()) throw ConfigError(join_path(prefix, key), "expected a number");
  return v.get<double>();
}

inline double opt_num(const Json& j, const std::string& key, double fallback,
                      const std::string& prefix) {
  const Json* v = find(j, key);
  if (!v) return fallback;
  if (!v->is_number()) throw ConfigError(join_path(prefix, key), "expected a number");
  return v->get<double>();
}

inline long long require_int(const Json& j, const std::string& key, const std::string& prefix) {
  const Json& v = require(j, key, prefix);
  if (!v.is_number_integer()) throw ConfigError(join_path(prefix, key), "expected an integer");
  return v.get<long long>();
}

inline long long opt_int(const Json& j, const std::string& key, long long fallback,
                         const std::string& prefix) {
  const Json* v = find(j, key);
  if (!v) return fallback;
  if (!v->is_number_integer()) throw ConfigError(join_path(prefix, key), "expected an integer");
  return v->get<long long>();
}

inline std::string require_str(const Json& j, const std::string& key,
                               const std::string& prefix) {
  const Json& v = require(j, key, prefix);
  if (!v.is_string()) throw ConfigError(join_path(prefix, key), "expected a string");
  return v.get<std::string>();
}

inline std::string opt_str(const Json& j, const std::string& key, const std::string& fallback,
                           const std::string& prefix) {
  const Json* v = find(j, key);
  if (!v) return fallback;
  if (!v->is_string()) throw ConfigError(join_path(prefix, key), "expected a string");
  return v->get<std::string>();
}

inline bool opt_bool(const Json& j, const std::string& key, bool fallback,
                     const std::string& prefix) {
  const Json* v = find(j, key);
  if (!v) return fallback;
  if (!v->is_boolean()) throw ConfigError(join_path(prefix, key), "expected a boolean");
  return v->get<bool>();
}

/// Loads the exact documented network key set from an object.
inline NetworkEnergyParams parse_network_params(const Json& j, const std::string& prefix) {
  NetworkEnergyParams p;
  p.e_access = require_num(j, "e_access_j_per_bit", prefix);
  p.e_edge_switch = require_num(j, "e_edge_switch_j_per_bit", prefix);
  p.e_bng = require_num(j, "e_bng_j_per_bit", prefix);
  p.e_edge_router = require_num(j, "e_edge_router_j_per_bit", prefix);
  p.e_core_router = require_num(j, "e_core_router_j_per_bit", prefix);
  p.e_dc_switch = require_num(j, "e_dc_switch_j_per_bit", prefix);
  p.n_edge = static_cast<int>(require_int(j, "n_edge", prefix));
  p.n_core = static_cast<int>(require_int(j, "n_core", prefix));
  if (p.n_edge < 0 || p.n_core < 0)
    throw ConfigError(join_path(prefix, "n_edge"), "hop counts must be >= 0");
  return p;
}

inline std::vector<std::pair<std::string, double>> parse_mix(const Json& j,
                                                             const std::string& prefix) {
  if (!j.is_object() || j.empty()) throw ConfigError(prefix, "expected a nonempty object");
  std::vector<std::pair<std::string, double>> mix;
  for (const auto& [key, value] : j.items()) {
    if (!value.is_number()) throw ConfigError(join_path(prefix, key), "expected a number");
    mix.emplace_back(key, value.get<double>());
  }
  return mix;
}

}  // namespace cfg

struct TaskConfig {
  enum class Kind { reference, synthetic };
  Kind kind = Kind::reference;
  // reference task
  int vocab_size = 64;
  int heldout_clients = 20;
  int heldout_samples_per_client = 34;
  std::uint64_t heldout_seed = 1;
  // synthetic task
  SyntheticTaskParams synthetic;
};

/// A whole simulation described by one file: run parameters, task, population
/// and the energy/carbon environment. All nested paths are resolved relative
/// to the config file's directory.
struct SimulationConfig {
  RunConfig run;
  TaskConfig task;
  PopulationSpec population;
  NetworkEnergyParams network;
  ServerEnergyParams server;
  bool count_dropped_sessions = true;
  NetworkAttribution attribution = NetworkAttribution::client_country;
  std::string intensity_csv;
  std::string fleet_csv;
  std::string profiles_dir;
  std::string similarity_csv;  // optional, empty when absent
  std::optional<double> fallback_wifi_voltage_mv;
};

namespace cfg {

inline RunConfig parse_run_config(const Json& root, const std::string& prefix) {
  RunConfig run;
  const std::string mode = require_str(root, "mode", prefix);
  if (mode == "sync")
    run.mode = Mode::sync;
  else if (mode == "async")
    run.mode = Mode::async;
  else
    throw ConfigError(join_path(prefix, "mode"), "expected \"sync\" or \"async\"");

  const Json& j = require(root, "run", prefix);
  const std::string p = join_path(prefix, "run");
  run.concurrency = static_cast<int>(require_int(j, "concurrency", p));
  if (run.concurrency < 1) throw ConfigError(join_path(p, "concurrency"), "must be >= 1");
  run.aggregation_goal_pct = require_num(j, "aggregation_goal_pct", p);
  if (run.aggregation_goal_pct <= 0 || run.aggregation_goal_pct > 100)
    throw ConfigError(join_path(p, "aggregation_goal_pct"), "must lie in (0, 100]");
  run.server_lr = require_num(j, "server_lr", p);
  run.client_lr = require_num(j, "client_lr", p);
  run.local_epochs = static_cast<int>(require_int(j, "local_epochs", p));
  run.batch_size = static_cast<int>(require_int(j, "batch_size", p));
  run.beta1 = require_num(j, "beta1", p);
  run.beta2 = require_num(j, "beta2", p);
  run.adam_epsilon = opt_num(j, "adam_epsilon", 1e-8, p);
  run.model_size_bytes = static_cast<std::uint64_t>(require_int(j, "model_size_bytes", p));
  run.round_timeout_s = opt_num(j, "round_timeout_s", 600.0, p);
  run.eval_every_steps = static_cast<int>(opt_int(j, "eval_every_steps", 20, p));
  run.eval_every_seconds = opt_num(j, "eval_every_seconds", 0.0, p);
  const std::string scheme = opt_str(j, "staleness_scheme", "polynomial", p);
  if (scheme == "polynomial")
    run.staleness_scheme = StalenessScheme::polynomial;
  else if (scheme == "none")
    run.staleness_scheme = StalenessScheme::none;
  else
    throw ConfigError(join_path(p, "staleness_scheme"), "expected \"polynomial\" or \"none\"");
  const std::string weighting = opt_str(j, "aggregation_weighting", "uniform", p);
  if (weighting == "uniform")
    run.weighting = AggregationWeighting::uniform;
  else if (weighting == "by_samples")
    run.weighting = AggregationWeighting::by_samples;
  else
    throw ConfigError(join_path(p, "aggregation_weighting"),
                      "expected \"uniform\" or \"by_samples\"");
  run.seed = static_cast<std::uint64_t>(opt_int(j, "seed", 0, p));

  if (const Json* s = find(root, "stopping")) {
    const std::string sp = join_path(prefix, "stopping");
    run.stopping.target_perplexity = opt_num(*s, "target_perplexity", 175.0, sp);
    run.stopping.patience = static_cast<int>(opt_int(*s, "patience", 5, sp));
    run.stopping.ewma_alpha = opt_num(*s, "ewma_alpha", 0.3, sp);
    run.stopping.max_wall_seconds = opt_num(*s, "max_wall_seconds", 172800.0, sp);
    if (run.stopping.ewma_alpha <= 0 || run.stopping.ewma_alpha > 1)
      throw ConfigError(join_path(sp, "ewma_alpha"), "must lie in (0, 1]");
    if (run.stopping.patience < 1)
      throw ConfigError(join_path(sp, "patience"), "must be >= 1");
  }
  return run;
}

inline TaskConfig parse_task_config(const Json& root, const std::string& prefix) {
  TaskConfig task;
  const Json& j = require(root, "task", prefix);
  const std::string p = join_path(prefix, "task");
  const std::string kind = require_str(j, "kind", p);
  if (kind == "reference") {
    task.kind = TaskConfig::Kind::reference;
    task.vocab_size = static_cast<int>(opt_int(j, "vocab_size", 64, p));
    task.heldout_clients = static_cast<int>(opt_int(j, "heldout_clients", 20, p));
    task.heldout_samples_per_client =
        static_cast<int>(opt_int(j, "heldout_samples_per_client", 34, p));
    task.heldout_seed = static_cast<std::uint64_t>(opt_int(j, "heldout_seed", 1, p));
    if (task.vocab_size < 2) throw ConfigError(join_path(p, "vocab_size"), "must be >= 2");
    if (task.heldout_clients < 1)
      throw ConfigError(join_path(p, "heldout_clients"), "must be >= 1");
  } else if (kind == "synthetic") {
    task.kind = TaskConfig::Kind::synthetic;
    task.synthetic.ppl0 = opt_num(j, "ppl0", 350.0, p);
    task.synthetic.ppl_min = opt_num(j, "ppl_min", 100.0, p);
    task.synthetic.tau_floor = opt_num(j, "tau_floor", 30.0, p);
    task.synthetic.knee_goal = opt_num(j, "knee_goal", 640.0, p);
    task.synthetic.staleness_coef = opt_num(j, "staleness_coef", 0.02, p);
    task.synthetic.noise_sd = opt_num(j, "noise_sd", 1.0, p);
    if (task.synthetic.ppl_min >= task.synthetic.ppl0)
      throw ConfigError(join_path(p, "ppl_min"), "must be below ppl0");
  } else {
    throw ConfigError(join_path(p, "kind"), "expected \"reference\" or \"synthetic\"");
  }
  return task;
}

inline PopulationSpec parse_population(const Json& root, const std::string& prefix) {
  PopulationSpec spec;
  const Json& j = require(root, "population", prefix);
  const std::string p = join_path(prefix, "population");
  spec.num_devices = static_cast<int>(require_int(j, "num_devices", p));
  spec.country_mix = parse_mix(require(j, "country_mix", p), join_path(p, "country_mix"));
  spec.device_model_mix =
      parse_mix(require(j, "device_model_mix", p), join_path(p, "device_model_mix"));
  const auto lognormal = [&](const char* key, LogNormalSpec fallback) {
    const Json* v = find(j, key);
    if (!v) return fallback;
    const std::string lp = join_path(p, key);
    LogNormalSpec out;
    out.mu = require_num(*v, "mu", lp);
    out.sigma = require_num(*v, "sigma", lp);
    if (out.sigma < 0) throw ConfigError(join_path(lp, "sigma"), "must be >= 0");
    return out;
  };
  spec.bandwidth_down = lognormal("bandwidth_down", spec.bandwidth_down);
  spec.bandwidth_up = lognormal("bandwidth_up", spec.bandwidth_up);
  spec.throughput = lognormal("throughput", spec.throughput);
  if (const Json* s = find(j, "samples")) {
    const std::string sp = join_path(p, "samples");
    spec.samples_zipf_exponent = opt_num(*s, "zipf_exponent", 1.6, sp);
    spec.samples_zipf_max = static_cast<std::uint32_t>(opt_int(*s, "zipf_max", 1000, sp));
    spec.mean_samples_per_user = opt_num(*s, "mean", 34.0, sp);
  }
  if (const Json* d = find(j, "dropout")) {
    const std::string dp = join_path(p, "dropout");
    spec.dropout_min = opt_num(*d, "min", 0.0, dp);
    spec.dropout_max = opt_num(*d, "max", spec.dropout_min, dp);
  }
  spec.seed = static_cast<std::uint64_t>(opt_int(j, "seed", 0, p));
  return spec;
}

}  // namespace cfg

/// Parses a simulation config document. base_dir anchors every relative path
/// mentioned inside; pass the config file's parent directory.
inline SimulationConfig parse_simulation_config(const Json& root,
                                                const std::filesystem::path& base_dir) {
  SimulationConfig c;
  c.run = cfg::parse_run_config(root, "");
  c.task = cfg::parse_task_config(root, "");
  c.population = cfg::parse_population(root, "");

  const auto resolve = [&](const std::string& rel) {
    const std::filesystem::path p(rel);
    return p.is_absolute() ? p.string() : (base_dir / p).lexically_normal().string();
  };

  const Json& energy = cfg::require(root, "energy", "");
  if (const Json* net = cfg::find(energy, "network")) {
    c.network = cfg::parse_network_params(*net, "energy.network");
  } else if (const Json* file = cfg::find(energy, "network_file")) {
    if (!file->is_string()) throw ConfigError("energy.network_file", "expected a string");
    const std::string path = resolve(file->get<std::string>());
    c.network = cfg::parse_network_params(cfg::load_json_file(path), path);
  } else {
    throw ConfigError("energy", "needs either \"network\" or \"network_file\"");
  }
  if (const Json* server = cfg::find(energy, "server")) {
    const std::string sp = "energy.server";
    c.server.p_aggregator_w = cfg::opt_num(*server, "p_aggregator_w", 45.0, sp);
    c.server.p_selector_w = cfg::opt_num(*server, "p_selector_w", 45.0, sp);
    c.server.pue = cfg::opt_num(*server, "pue", 1.09, sp);
    c.server.utilization_fraction = cfg::opt_num(*server, "utilization_fraction", 0.01, sp);
    if (c.server.pue < 1.0) throw ConfigError(sp + ".pue", "must be >= 1");
  }
  c.count_dropped_sessions = cfg::opt_bool(energy, "count_dropped_sessions", true, "energy");

  const Json& carbon = cfg::require(root, "carbon", "");
  c.intensity_csv = resolve(cfg::require_str(carbon, "intensity_csv", "carbon"));
  c.fleet_csv = resolve(cfg::require_str(carbon, "fleet_csv", "carbon"));
  const std::string attribution =
      cfg::opt_str(carbon, "network_attribution", "client_country", "carbon");
  if (attribution == "client_country")
    c.attribution = NetworkAttribution::client_country;
  else if (attribution == "half_client_half_fleet")
    c.attribution = NetworkAttribution::half_client_half_fleet;
  else
    throw ConfigError("carbon.network_attribution",
                      "expected \"client_country\" or \"half_client_half_fleet\"");

  const Json& devices = cfg::require(root, "devices", "");
  c.profiles_dir = resolve(cfg::require_str(devices, "profiles_dir", "devices"));
  const std::string similarity = cfg::opt_str(devices, "similarity_csv", "", "devices");
  if (!similarity.empty()) c.similarity_csv = resolve(similarity);
  if (const Json* v = cfg::find(devices, "fallback_wifi_voltage_mv")) {
    if (!v->is_number())
      throw ConfigError("devices.fallback_wifi_voltage_mv", "expected a number");
    c.fallback_wifi_voltage_mv = v->get<double>();
  }
  return c;
}

inline SimulationConfig load_simulation_config(const std::string& path) {
  const Json root = cfg::load_json_file(path);
  return parse_simulation_config(root, std::filesystem::path(path).parent_path());
}

}  // namespace fedcarbon
