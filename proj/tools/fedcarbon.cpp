// Command line front end: simulate one run, sweep a grid, fit the linear
// carbon predictor, pretty-print results, or tabulate device power models.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "fedcarbon/pipeline.hpp"
#include "fedcarbon/svg_plot.hpp"
#include "fedcarbon/sweep.hpp"

namespace {

using namespace fedcarbon;

struct SimulateArgs {
  std::string config;
  std::string out;
  std::string sessions_csv;
  std::optional<std::uint64_t> seed;
};

struct SweepArgs {
  std::string config;
  std::string out;
  int parallelism = static_cast<int>(std::thread::hardware_concurrency());
};

struct FitArgs {
  std::string results_csv;
  std::string mode = "sync";
  std::string component = "all";
  std::string out;
  std::string svg;
  bool through_origin = false;
};

struct ReportArgs {
  std::string results_csv;
  std::string run_id;
};

struct ProfileArgs {
  std::string profiles_dir;
  std::string similarity_csv;
  std::string out;
  std::optional<double> fallback_wifi_voltage_mv;
};

void print_run_summary(const SimulationConfig& c, const RunOutput& o) {
  const RunResult& r = o.result;
  std::printf("run %s (%s, concurrency %d, goal %.0f%%, seed %llu)\n", o.run_id.c_str(),
              mode_name(c.run.mode), c.run.concurrency, c.run.aggregation_goal_pct,
              static_cast<unsigned long long>(c.run.seed));
  std::printf("  %s after %ld server steps (%ld rounds), %.3f h wall\n",
              stop_name(r.stop_reason), r.server_steps, r.rounds, r.wall_hours());
  std::printf("  final perplexity %.3f (smoothed)\n", r.final_smoothed_perplexity);
  std::printf("  sessions: %zu total\n", r.sessions.size());
  std::printf("  energy: client compute %.1f Wh, client radio %.1f Wh, network %.1f Wh, "
              "server %.1f Wh\n",
              o.energy.e_client_compute_j / 3600.0, o.energy.e_client_radio_j / 3600.0,
              (o.energy.e_network_infra_up_j + o.energy.e_network_infra_down_j) / 3600.0,
              o.energy.e_server_j / 3600.0);
  std::printf("  co2e: total %.6f kg\n", o.report.total_kg());
  std::printf("    client compute %.6f kg (%.1f%%)\n", o.report.co2e_client_compute_kg,
              100.0 * o.report.share_client_compute);
  std::printf("    upload         %.6f kg (%.1f%%)\n", o.report.co2e_upload_kg,
              100.0 * o.report.share_upload);
  std::printf("    download       %.6f kg (%.1f%%)\n", o.report.co2e_download_kg,
              100.0 * o.report.share_download);
  std::printf("    server         %.6f kg (%.1f%%)\n", o.report.co2e_server_kg,
              100.0 * o.report.share_server);
}

int cmd_simulate(const SimulateArgs& args) {
  SimulationConfig c = load_simulation_config(args.config);
  if (args.seed) c.run.seed = *args.seed;
  const EnergyEnvironment env = load_environment(c);
  const RunOutput out = execute_run(c, env);
  print_run_summary(c, out);
  if (!args.out.empty()) append_results_row(args.out, results_row(c, out));
  if (!args.sessions_csv.empty())
    write_sessions_csv(args.sessions_csv, out.run_id, out.result.sessions);
  return 0;
}

int cmd_sweep(const SweepArgs& args) {
  const SweepSpec spec = load_sweep_spec(args.config);
  const EnergyEnvironment env = load_environment(spec.base);
  std::fprintf(stderr, "sweep: %zu runs on %d workers\n", spec.variants.size(),
               std::max(1, args.parallelism));
  const SweepResult result = run_sweep(spec, env, args.parallelism);
  write_results_csv(args.out, result.rows);
  std::fprintf(stderr, "sweep: wrote %zu rows to %s\n", result.rows.size(), args.out.c_str());
  if (!result.failures.empty()) {
    std::fprintf(stderr, "sweep: %zu runs failed\n", result.failures.size());
    for (const SweepFailure& f : result.failures)
      std::fprintf(stderr, "  run %s: %s\n", f.run_id.c_str(), f.message.c_str());
    return 2;
  }
  return 0;
}

std::vector<FitComponent> components_for(const std::string& name) {
  if (name == "all")
    return {FitComponent::client_compute, FitComponent::upload, FitComponent::download,
            FitComponent::total};
  if (name == "client_compute") return {FitComponent::client_compute};
  if (name == "upload") return {FitComponent::upload};
  if (name == "download") return {FitComponent::download};
  if (name == "total") return {FitComponent::total};
  throw ConfigError("--component",
                    "expected client_compute, upload, download, total, or all");
}

int cmd_fit(const FitArgs& args) {
  const Mode mode = args.mode == "async" ? Mode::async : Mode::sync;
  const std::vector<RunSummary> all = load_run_summaries(args.results_csv);
  std::vector<RunSummary> runs;
  for (const RunSummary& s : all)
    if (s.mode == mode) runs.push_back(s);

  const std::vector<FitComponent> components = components_for(args.component);
  const char* x_label = mode == Mode::sync ? "concurrency x rounds" : "concurrency x hours";
  std::printf("fit over %zu %s runs, x = %s\n", runs.size(), mode_name(mode), x_label);

  std::vector<std::vector<std::string>> rows;
  std::vector<FitPanel> panels;
  for (FitComponent comp : components) {
    const RegressionFit fit = fit_carbon_model(runs, comp, args.through_origin);
    std::printf("  %-14s slope %.6e  intercept %.6e  r2 %.4f  (n=%ld)\n",
                component_name(comp), fit.slope, fit.intercept, fit.r_squared, fit.n_points);
    rows.push_back({component_name(comp), csv::format_double(fit.slope),
                    csv::format_double(fit.intercept), csv::format_double(fit.r_squared),
                    std::to_string(fit.n_points)});
    FitPanel panel;
    panel.title = component_name(comp);
    panel.x_label = x_label;
    panel.fit = fit;
    for (const RunSummary& s : runs)
      panel.points.emplace_back(predictor_x(s), component_value(s, comp));
    panels.push_back(std::move(panel));
  }
  if (!args.out.empty()) {
    std::ofstream out(args.out, std::ios::trunc);
    if (!out.good()) throw ConfigError(args.out, "cannot open for writing");
    out << "component, slope, intercept, r_squared, n_points\n";
    for (const auto& row : rows) {
      out << row[0];
      for (std::size_t i = 1; i < row.size(); ++i) out << ", " << row[i];
      out << "\n";
    }
  }
  if (!args.svg.empty()) {
    write_fit_svg(args.svg, panels);
    std::printf("  wrote %s\n", args.svg.c_str());
  }
  return 0;
}

int cmd_report(const ReportArgs& args) {
  const csv::Table t = csv::read_file(args.results_csv);
  csv::require_header(t, results_header(), args.results_csv);
  bool found = false;
  double grand_total = 0.0;
  for (const auto& row : t.rows) {
    if (!args.run_id.empty() && row[0] != args.run_id) continue;
    found = true;
    const double compute = csv::to_double(row[15], args.results_csv);
    const double upload = csv::to_double(row[16], args.results_csv);
    const double download = csv::to_double(row[17], args.results_csv);
    const double server = csv::to_double(row[18], args.results_csv);
    const double total = csv::to_double(row[19], args.results_csv);
    grand_total += total;
    std::printf("run %s  %s c=%s goal=%s seed=%s\n", row[0].c_str(), row[1].c_str(),
                row[2].c_str(), row[3].c_str(), row[10].c_str());
    std::printf("  rounds %s  hours %s  final ppl %s  (%s)\n", row[11].c_str(),
                row[12].c_str(), row[13].c_str(), row[14].c_str());
    const auto line = [&](const char* label, double kg) {
      std::printf("  %-16s %12.6f kg  %5.1f%%\n", label, kg,
                  total > 0 ? 100.0 * kg / total : 0.0);
    };
    line("client compute", compute);
    line("upload", upload);
    line("download", download);
    line("server", server);
    std::printf("  %-16s %12.6f kg\n", "total", total);
  }
  if (!found) {
    if (!args.run_id.empty()) {
      std::fprintf(stderr, "no run with id %s in %s\n", args.run_id.c_str(),
                   args.results_csv.c_str());
      return 2;
    }
    std::printf("no runs in %s\n", args.results_csv.c_str());
    return 0;
  }
  if (args.run_id.empty() && t.rows.size() > 1)
    std::printf("total across %zu runs: %.6f kg\n", t.rows.size(), grand_total);
  return 0;
}

int cmd_profile(const ProfileArgs& args) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(args.profiles_dir)) {
    std::fprintf(stderr, "%s is not a directory\n", args.profiles_dir.c_str());
    return 1;
  }
  BuildOptions opts;
  opts.fallback_wifi_voltage_mv = args.fallback_wifi_voltage_mv;
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(args.profiles_dir))
    if (entry.is_regular_file() && entry.path().extension() == ".xml")
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());

  std::map<std::string, DevicePowerModel> models;
  int errors = 0;
  for (const auto& f : files) {
    std::ifstream in(f);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
      DevicePowerModel m = build_device_model(parse_power_profile(text), opts, f.stem().string());
      if (m.used_default_wifi_voltage)
        std::fprintf(stderr, "warning: %s lacks wifi.controller.voltage, used fallback\n",
                     f.filename().string().c_str());
      models.emplace(m.device_key, std::move(m));
    } catch (const std::exception& e) {
      std::fprintf(stderr, "warning: skipping %s: %s\n", f.filename().string().c_str(),
                   e.what());
      ++errors;
    }
  }
  if (!args.similarity_csv.empty()) {
    const auto similar = load_similarity_csv(args.similarity_csv);
    for (const auto& [target, source] : similar) {
      (void)source;
      if (models.count(target)) continue;
      try {
        models.emplace(target, impute_device_model(target, models, similar));
      } catch (const std::exception& e) {
        std::fprintf(stderr, "warning: cannot impute %s: %s\n", target.c_str(), e.what());
        ++errors;
      }
    }
  }

  std::string table = "device_key, p_cpu_w, p_rx_w, p_tx_w, provenance\n";
  for (const auto& [key, m] : models) {
    table += key + ", " + csv::format_double(m.p_cpu_w) + ", " + csv::format_double(m.p_rx_w) +
             ", " + csv::format_double(m.p_tx_w) + ", " + provenance_name(m.provenance);
    if (m.provenance == Provenance::imputed) table += " (from " + m.imputed_from + ")";
    table += "\n";
  }
  if (args.out.empty()) {
    std::fputs(table.c_str(), stdout);
  } else {
    std::ofstream out(args.out, std::ios::trunc);
    if (!out.good()) throw ConfigError(args.out, "cannot open for writing");
    out << table;
  }
  if (errors > 0)
    std::fprintf(stderr, "%d profile(s) skipped; table covers %zu device(s)\n", errors,
                 models.size());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"deterministic federated learning energy and carbon simulator"};
  app.require_subcommand(1);

  SimulateArgs sim_args;
  CLI::App* sim = app.add_subcommand("simulate", "run one configured simulation");
  sim->add_option("--config", sim_args.config, "simulation config JSON")
      ->required()
      ->check(CLI::ExistingFile);
  sim->add_option("--out", sim_args.out, "results CSV to append the run row to");
  sim->add_option("--sessions-csv", sim_args.sessions_csv, "write per-session records here");
  std::uint64_t seed_override = 0;
  CLI::Option* seed_opt =
      sim->add_option("--seed", seed_override, "override the engine seed from the config");

  SweepArgs sweep_args;
  CLI::App* sweep = app.add_subcommand("sweep", "run a hyperparameter grid");
  sweep->add_option("--config", sweep_args.config, "sweep spec JSON")
      ->required()
      ->check(CLI::ExistingFile);
  sweep->add_option("--out", sweep_args.out, "results CSV to write")->required();
  sweep->add_option("--parallelism", sweep_args.parallelism, "worker thread count")
      ->check(CLI::PositiveNumber);

  FitArgs fit_args;
  CLI::App* fit = app.add_subcommand("fit", "fit the linear carbon predictor to results");
  fit->add_option("results", fit_args.results_csv, "results CSV from simulate/sweep")
      ->required()
      ->check(CLI::ExistingFile);
  fit->add_option("--mode", fit_args.mode, "which runs to fit: sync or async")
      ->check(CLI::IsMember({"sync", "async"}));
  fit->add_option("--component", fit_args.component,
                  "client_compute, upload, download, total, or all");
  fit->add_option("--out", fit_args.out, "fit report CSV to write");
  fit->add_option("--svg", fit_args.svg, "scatter plot SVG to write");
  fit->add_flag("--through-origin", fit_args.through_origin, "force a zero intercept");

  ReportArgs report_args;
  CLI::App* report = app.add_subcommand("report", "print emissions breakdowns from results");
  report->add_option("results", report_args.results_csv, "results CSV")
      ->required()
      ->check(CLI::ExistingFile);
  report->add_option("--run-id", report_args.run_id, "limit to one run");

  ProfileArgs profile_args;
  CLI::App* profile = app.add_subcommand("profile", "tabulate device power models");
  profile->add_option("profiles", profile_args.profiles_dir, "directory of power profile XML")
      ->required();
  profile->add_option("--similarity", profile_args.similarity_csv,
                      "device_key,similar_to CSV for imputation")
      ->check(CLI::ExistingFile);
  profile->add_option("--out", profile_args.out, "device table CSV to write");
  double fallback_mv = 0.0;
  CLI::Option* fallback_opt = profile->add_option(
      "--fallback-wifi-voltage-mv", fallback_mv, "assume this voltage when a profile lacks one");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*sim) {
      if (*seed_opt) sim_args.seed = seed_override;
      return cmd_simulate(sim_args);
    }
    if (*sweep) return cmd_sweep(sweep_args);
    if (*fit) return cmd_fit(fit_args);
    if (*report) return cmd_report(report_args);
    if (*profile) {
      if (*fallback_opt) profile_args.fallback_wifi_voltage_mv = fallback_mv;
      return cmd_profile(profile_args);
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 1;
}
