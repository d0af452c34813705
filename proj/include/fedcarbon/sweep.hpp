#pragma once

#include <atomic>
#include <mutex>
#include <thread>
#include <tuple>

#include "fedcarbon/pipeline.hpp"

namespace fedcarbon {

/// A sweep document names a base simulation config plus a grid of axis lists
/// and a seed list; every grid point runs once per seed.
struct SweepSpec {
  SimulationConfig base;
  std::vector<SimulationConfig> variants;  // canonical order
};

namespace cfg {

inline std::vector<double> axis_nums(const Json& grid, const char* key,
                                     const std::string& prefix, double fallback) {
  const Json* v = find(grid, key);
  if (!v) return {fallback};
  const std::string p = join_path(prefix, key);
  if (!v->is_array() || v->empty()) throw ConfigError(p, "expected a nonempty array");
  std::vector<double> out;
  for (const auto& e : *v) {
    if (!e.is_number()) throw ConfigError(p, "expected numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

inline std::vector<long long> axis_ints(const Json& grid, const char* key,
                                        const std::string& prefix, long long fallback) {
  const Json* v = find(grid, key);
  if (!v) return {fallback};
  const std::string p = join_path(prefix, key);
  if (!v->is_array() || v->empty()) throw ConfigError(p, "expected a nonempty array");
  std::vector<long long> out;
  for (const auto& e : *v) {
    if (!e.is_number_integer()) throw ConfigError(p, "expected integers");
    out.push_back(e.get<long long>());
  }
  return out;
}

}  // namespace cfg

inline SweepSpec load_sweep_spec(const std::string& path) {
  const Json root = cfg::load_json_file(path);
  const std::filesystem::path base_dir = std::filesystem::path(path).parent_path();

  SweepSpec spec;
  if (const Json* inline_base = cfg::find(root, "base")) {
    spec.base = parse_simulation_config(*inline_base, base_dir);
  } else {
    const std::string rel = cfg::require_str(root, "base_config", "");
    const std::filesystem::path p(rel);
    spec.base = load_simulation_config(
        p.is_absolute() ? p.string() : (base_dir / p).lexically_normal().string());
  }

  const Json empty_grid = Json::object();
  const Json& grid = cfg::find(root, "grid") ? *cfg::find(root, "grid") : empty_grid;
  const RunConfig& b = spec.base.run;
  std::vector<Mode> modes{b.mode};
  if (const Json* mv = cfg::find(grid, "mode")) {
    if (!mv->is_array() || mv->empty()) throw ConfigError("grid.mode", "expected a nonempty array");
    modes.clear();
    for (const auto& e : *mv) {
      const std::string s = e.is_string() ? e.get<std::string>() : "";
      if (s == "sync")
        modes.push_back(Mode::sync);
      else if (s == "async")
        modes.push_back(Mode::async);
      else
        throw ConfigError("grid.mode", "expected \"sync\" or \"async\" entries");
    }
  }
  const auto concurrency = cfg::axis_ints(grid, "concurrency", "grid", b.concurrency);
  const auto goal = cfg::axis_nums(grid, "aggregation_goal_pct", "grid", b.aggregation_goal_pct);
  const auto server_lr = cfg::axis_nums(grid, "server_lr", "grid", b.server_lr);
  const auto client_lr = cfg::axis_nums(grid, "client_lr", "grid", b.client_lr);
  const auto epochs = cfg::axis_ints(grid, "local_epochs", "grid", b.local_epochs);
  const auto batch = cfg::axis_ints(grid, "batch_size", "grid", b.batch_size);
  const auto beta1 = cfg::axis_nums(grid, "beta1", "grid", b.beta1);
  const auto beta2 = cfg::axis_nums(grid, "beta2", "grid", b.beta2);

  std::vector<std::uint64_t> seeds;
  if (const Json* sv = cfg::find(root, "seeds")) {
    if (sv->is_array()) {
      for (const auto& e : *sv) {
        if (!e.is_number_integer()) throw ConfigError("seeds", "expected integers");
        seeds.push_back(e.get<std::uint64_t>());
      }
    } else if (sv->is_object()) {
      const std::uint64_t base_seed =
          static_cast<std::uint64_t>(cfg::require_int(*sv, "base", "seeds"));
      const long long count = cfg::require_int(*sv, "count", "seeds");
      if (count < 1) throw ConfigError("seeds.count", "must be >= 1");
      for (long long i = 0; i < count; ++i) seeds.push_back(base_seed + i);
    } else {
      throw ConfigError("seeds", "expected an array or {base, count}");
    }
  }
  if (seeds.empty()) seeds.push_back(b.seed);

  for (Mode m : modes)
    for (long long c : concurrency)
      for (double g : goal)
        for (double slr : server_lr)
          for (double clr : client_lr)
            for (long long ep : epochs)
              for (long long bs : batch)
                for (double b1 : beta1)
                  for (double b2 : beta2)
                    for (std::uint64_t seed : seeds) {
                      SimulationConfig v = spec.base;
                      v.run.mode = m;
                      v.run.concurrency = static_cast<int>(c);
                      v.run.aggregation_goal_pct = g;
                      v.run.server_lr = slr;
                      v.run.client_lr = clr;
                      v.run.local_epochs = static_cast<int>(ep);
                      v.run.batch_size = static_cast<int>(bs);
                      v.run.beta1 = b1;
                      v.run.beta2 = b2;
                      v.run.seed = seed;
                      spec.variants.push_back(v);
                    }
  return spec;
}

inline auto sweep_order_key(const SimulationConfig& c) {
  return std::make_tuple(static_cast<int>(c.run.mode), c.run.concurrency,
                         c.run.aggregation_goal_pct, c.run.server_lr, c.run.client_lr,
                         c.run.local_epochs, c.run.batch_size, c.run.beta1, c.run.beta2,
                         c.run.seed);
}

struct SweepFailure {
  std::string run_id;
  std::string message;
};

struct SweepResult {
  std::vector<std::vector<std::string>> rows;  // canonical order, failures omitted
  std::vector<SweepFailure> failures;
};

/// Runs every variant on a pool of worker threads. Output row order and bytes
/// depend only on the variants, never on the pool size or finish order.
inline SweepResult run_sweep(const SweepSpec& spec, const EnergyEnvironment& env,
                             int parallelism) {
  std::vector<SimulationConfig> variants = spec.variants;
  std::stable_sort(variants.begin(), variants.end(),
                   [](const SimulationConfig& a, const SimulationConfig& b) {
                     return sweep_order_key(a) < sweep_order_key(b);
                   });

  const int workers =
      std::max(1, std::min<int>(parallelism, static_cast<int>(variants.size())));
  std::vector<std::optional<std::vector<std::string>>> slots(variants.size());
  std::vector<std::pair<std::size_t, SweepFailure>> failures;
  std::mutex failures_mu;
  std::atomic<std::size_t> next{0};

  const auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= variants.size()) return;
      try {
        const RunOutput out = execute_run(variants[i], env);
        slots[i] = results_row(variants[i], out);
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(failures_mu);
        failures.emplace_back(i, SweepFailure{run_id_for(variants[i]), e.what()});
      }
    }
  };
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (std::thread& t : pool) t.join();

  std::sort(failures.begin(), failures.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  SweepResult result;
  for (auto& slot : slots)
    if (slot) result.rows.push_back(std::move(*slot));
  for (auto& [i, f] : failures) result.failures.push_back(std::move(f));
  return result;
}

inline void write_results_csv(const std::string& path,
                              const std::vector<std::vector<std::string>>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out.good()) throw ConfigError(path, "cannot open for writing");
  out << csv::join_row(results_header()) << "\n";
  for (const auto& row : rows) out << csv::join_row(row) << "\n";
}

/// Appends one row, creating the file with a header first when needed. The
/// header of an existing file must match exactly.
inline void append_results_row(const std::string& path, const std::vector<std::string>& row) {
  bool need_header = true;
  {
    std::ifstream in(path);
    std::string first;
    if (in.good() && std::getline(in, first)) {
      if (first != csv::join_row(results_header()))
        throw MalformedDocument(path + ": existing header does not match results schema");
      need_header = false;
    }
  }
  std::ofstream out(path, std::ios::app);
  if (!out.good()) throw ConfigError(path, "cannot open for writing");
  if (need_header) out << csv::join_row(results_header()) << "\n";
  out << csv::join_row(row) << "\n";
}

}  // namespace fedcarbon
