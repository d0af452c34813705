#pragma once

#include <cstdint>

#include "fedcarbon/power_profile.hpp"

namespace fedcarbon {

/// Timings and traffic of one client session. An incomplete session may have
/// spent download and training time but uploaded nothing.
struct SessionTiming {
  double t_download_s = 0.0;
  double t_train_s = 0.0;
  double t_upload_s = 0.0;
  std::uint64_t bytes_down = 0;
  std::uint64_t bytes_up = 0;
  bool completed = true;
};

/// Per-bit energies of the network path between a handset and a datacenter,
/// plus hop counts for the edge and core router segments.
struct NetworkEnergyParams {
  double e_access = 0.0;       // J/bit, access network
  double e_edge_switch = 0.0;  // J/bit
  double e_bng = 0.0;          // J/bit, broadband network gateway
  double e_edge_router = 0.0;  // J/bit, per hop
  double e_core_router = 0.0;  // J/bit, per hop
  double e_dc_switch = 0.0;    // J/bit
  int n_edge = 0;
  int n_core = 0;
};

/// Datacenter-side draw. Selector and aggregator stay allocated for the whole
/// run, so their energy scales with wall-clock time. utilization_fraction is
/// carried for reporting only.
struct ServerEnergyParams {
  double p_aggregator_w = 45.0;
  double p_selector_w = 45.0;
  double pue = 1.09;
  double utilization_fraction = 0.01;
};

/// Joules of one session by component. Radio covers both directions; the
/// network-infrastructure share is kept per direction.
struct EnergyBreakdown {
  double e_client_compute_j = 0.0;
  double e_client_radio_j = 0.0;
  double e_network_infra_up_j = 0.0;
  double e_network_infra_down_j = 0.0;
  double e_server_j = 0.0;

  double total() const {
    return e_client_compute_j + e_client_radio_j + e_network_infra_up_j +
           e_network_infra_down_j + e_server_j;
  }
};

/// Device-side energy: CPU power over the training phase, radio power over
/// the transfer phases.
inline std::pair<double, double> client_session_energy(const DevicePowerModel& model,
                                                       const SessionTiming& t) {
  const double compute_j = model.p_cpu_w * t.t_train_s;
  const double radio_j = model.p_rx_w * t.t_download_s + model.p_tx_w * t.t_upload_s;
  return {compute_j, radio_j};
}

/// Radio energy split by direction; the sum matches client_session_energy.
struct RadioSplit {
  double rx_j = 0.0;
  double tx_j = 0.0;
};

inline RadioSplit client_radio_energy_split(const DevicePowerModel& model,
                                            const SessionTiming& t) {
  return {model.p_rx_w * t.t_download_s, model.p_tx_w * t.t_upload_s};
}

/// Energy of moving `bytes` through the network path: per-bit energies summed
/// across the path, times the bit count.
inline double network_transfer_energy(const NetworkEnergyParams& p, std::uint64_t bytes) {
  const double per_bit = p.e_access + p.e_edge_switch + p.e_bng +
                         p.n_edge * p.e_edge_router + p.n_core * p.e_core_router +
                         p.e_dc_switch;
  return per_bit * static_cast<double>(bytes) * 8.0;
}

/// Aggregator plus selector draw, grossed up by datacenter PUE, over the
/// run's wall-clock duration.
inline double server_energy(const ServerEnergyParams& p, double wall_seconds) {
  return (p.p_aggregator_w + p.p_selector_w) * p.pue * wall_seconds;
}

}  // namespace fedcarbon
