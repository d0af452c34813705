// End-to-end walkthrough: load a config, run the simulation, attach energy,
// and print where the grams of CO2e went. Mirrors what the CLI's simulate
// subcommand does, but through the library API.

#include <cstdio>

#include "fedcarbon/pipeline.hpp"

int main() {
  using namespace fedcarbon;

  const std::string config_path = std::string(FEDCARBON_DATA_DIR) + "/configs/sync_reference.json";
  const SimulationConfig config = load_simulation_config(config_path);
  const EnergyEnvironment env = load_environment(config);

  std::printf("devices in environment:\n");
  for (const auto& [key, model] : env.device_models)
    std::printf("  %-16s cpu %.3f W  rx %.3f W  tx %.3f W  (%s)\n", key.c_str(), model.p_cpu_w,
                model.p_rx_w, model.p_tx_w, provenance_name(model.provenance));

  const RunOutput out = execute_run(config, env);
  const RunResult& r = out.result;
  std::printf("\nrun %s: %s after %ld rounds, %.2f simulated hours\n", out.run_id.c_str(),
              stop_name(r.stop_reason), r.rounds, r.wall_hours());
  std::printf("perplexity trajectory (first and last 3 evaluations):\n");
  const std::size_t n = r.trajectory.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (i >= 3 && i + 3 < n) continue;
    const TrajectoryPoint& p = r.trajectory[i];
    std::printf("  t=%8.1fs  raw %7.3f  smoothed %7.3f\n", p.t_s, p.raw_ppl, p.smoothed_ppl);
  }

  std::printf("\nemissions: %.6f kg CO2e total\n", out.report.total_kg());
  std::printf("  client compute %6.2f%%\n", 100.0 * out.report.share_client_compute);
  std::printf("  upload         %6.2f%%\n", 100.0 * out.report.share_upload);
  std::printf("  download       %6.2f%%\n", 100.0 * out.report.share_download);
  std::printf("  server         %6.2f%%\n", 100.0 * out.report.share_server);
  return 0;
}
