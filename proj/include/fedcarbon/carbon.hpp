#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "fedcarbon/csv.hpp"
#include "fedcarbon/errors.hpp"

namespace fedcarbon {

/// Country-level grid carbon intensities in kg CO2e per kWh.
struct CarbonIntensityTable {
  std::map<std::string, double> kg_per_kwh;
  int source_year = 0;

  double at(const std::string& country_code) const {
    const auto it = kg_per_kwh.find(country_code);
    if (it == kg_per_kwh.end()) throw UnknownCountry(country_code);
    return it->second;
  }
};

struct DatacenterFleet {
  std::vector<std::pair<std::string, int>> sites;  // country code, datacenter count
};

/// kg CO2e by run component, with each component's share of the total.
struct EmissionsReport {
  double co2e_client_compute_kg = 0.0;
  double co2e_upload_kg = 0.0;
  double co2e_download_kg = 0.0;
  double co2e_server_kg = 0.0;
  double share_client_compute = 0.0;
  double share_upload = 0.0;
  double share_download = 0.0;
  double share_server = 0.0;

  double total_kg() const {
    return co2e_client_compute_kg + co2e_upload_kg + co2e_download_kg + co2e_server_kg;
  }
};

/// Which grid intensity the network-infrastructure energy is charged at. The
/// access network sits in the client's country, so that is the default; the
/// alternative splits it evenly with the datacenter mix.
enum class NetworkAttribution { client_country, half_client_half_fleet };

/// 1 kWh = 3.6e6 J; intensity is per kWh.
inline double emissions_from_energy(double joules, double intensity_kg_per_kwh) {
  return joules / 3.6e6 * intensity_kg_per_kwh;
}

/// Fleet-weighted intensity: each country weighted by its datacenter count.
inline double datacenter_weighted_intensity(const DatacenterFleet& fleet,
                                            const CarbonIntensityTable& table) {
  double weighted = 0.0;
  double total_count = 0.0;
  for (const auto& [code, count] : fleet.sites) {
    weighted += count * table.at(code);
    total_count += count;
  }
  return weighted / total_count;
}

/// Per-session inputs to report building: where the client sat and how many
/// joules each component of its session burned.
struct SessionEmissionInput {
  std::string country_code;
  double e_compute_j = 0.0;
  double e_radio_rx_j = 0.0;
  double e_radio_tx_j = 0.0;
  double e_net_up_j = 0.0;
  double e_net_down_j = 0.0;
};

/// Folds sessions and server energy into the four-component report. Device
/// energy is charged at the session country's intensity, server energy at the
/// fleet-weighted intensity, network energy per the attribution policy.
/// Upload = radio tx + upstream infrastructure; download likewise.
inline EmissionsReport build_report(
    const std::vector<SessionEmissionInput>& sessions, double server_j,
    const CarbonIntensityTable& table, const DatacenterFleet& fleet,
    NetworkAttribution policy = NetworkAttribution::client_country) {
  const double fleet_intensity = datacenter_weighted_intensity(fleet, table);
  EmissionsReport r;
  for (const auto& s : sessions) {
    const double client_intensity = table.at(s.country_code);
    const double net_intensity = policy == NetworkAttribution::client_country
                                     ? client_intensity
                                     : 0.5 * (client_intensity + fleet_intensity);
    r.co2e_client_compute_kg += emissions_from_energy(s.e_compute_j, client_intensity);
    r.co2e_upload_kg += emissions_from_energy(s.e_radio_tx_j, client_intensity) +
                        emissions_from_energy(s.e_net_up_j, net_intensity);
    r.co2e_download_kg += emissions_from_energy(s.e_radio_rx_j, client_intensity) +
                          emissions_from_energy(s.e_net_down_j, net_intensity);
  }
  r.co2e_server_kg = emissions_from_energy(server_j, fleet_intensity);
  const double total = r.total_kg();
  if (total > 0) {
    r.share_client_compute = r.co2e_client_compute_kg / total;
    r.share_upload = r.co2e_upload_kg / total;
    r.share_download = r.co2e_download_kg / total;
    r.share_server = r.co2e_server_kg / total;
  }
  return r;
}

/// Loads `country_code,kg_co2e_per_kwh,year`. source_year is the latest year
/// present. Intensities must be positive, codes unique.
inline CarbonIntensityTable load_carbon_intensity_csv(const std::string& path) {
  const csv::Table t = csv::read_file(path);
  csv::require_header(t, {"country_code", "kg_co2e_per_kwh", "year"}, path);
  CarbonIntensityTable table;
  for (const auto& row : t.rows) {
    const double intensity = csv::to_double(row.at(1), path);
    if (intensity <= 0)
      throw MalformedDocument(path + ": intensity for " + row.at(0) + " must be positive");
    if (!table.kg_per_kwh.emplace(row.at(0), intensity).second)
      throw MalformedDocument(path + ": duplicate country " + row.at(0));
    table.source_year = std::max(table.source_year, static_cast<int>(csv::to_int(row.at(2), path)));
  }
  if (table.kg_per_kwh.empty()) throw MalformedDocument(path + ": no rows");
  return table;
}

/// Loads `country_code,datacenter_count`; the fleet must be nonempty with
/// counts of at least one.
inline DatacenterFleet load_datacenter_fleet_csv(const std::string& path) {
  const csv::Table t = csv::read_file(path);
  csv::require_header(t, {"country_code", "datacenter_count"}, path);
  DatacenterFleet fleet;
  for (const auto& row : t.rows) {
    const int count = static_cast<int>(csv::to_int(row.at(1), path));
    if (count < 1)
      throw MalformedDocument(path + ": datacenter_count for " + row.at(0) + " must be >= 1");
    fleet.sites.emplace_back(row.at(0), count);
  }
  if (fleet.sites.empty()) throw MalformedDocument(path + ": no rows");
  return fleet;
}

}  // namespace fedcarbon
