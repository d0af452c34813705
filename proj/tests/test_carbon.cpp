#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "fedcarbon/carbon.hpp"
#include "fedcarbon/rng.hpp"

using namespace fedcarbon;
using Catch::Matchers::WithinRel;

namespace {

CarbonIntensityTable table_of(std::initializer_list<std::pair<std::string, double>> entries) {
  CarbonIntensityTable t;
  for (const auto& [code, v] : entries) t.kg_per_kwh[code] = v;
  return t;
}

// Spreadsheet-style reference: one row per session, columns computed with the
// bare J/3.6e6*intensity formula, folded top to bottom.
EmissionsReport oracle_report(const std::vector<SessionEmissionInput>& sessions,
                              double server_j, const CarbonIntensityTable& table,
                              const DatacenterFleet& fleet, NetworkAttribution policy) {
  double weighted = 0.0, count = 0.0;
  for (const auto& [code, n] : fleet.sites) {
    weighted += n * table.kg_per_kwh.at(code);
    count += n;
  }
  const double fleet_i = weighted / count;
  EmissionsReport r;
  for (const auto& s : sessions) {
    const double ci = table.kg_per_kwh.at(s.country_code);
    const double ni =
        policy == NetworkAttribution::client_country ? ci : 0.5 * (ci + fleet_i);
    r.co2e_client_compute_kg += s.e_compute_j / 3.6e6 * ci;
    r.co2e_upload_kg += s.e_radio_tx_j / 3.6e6 * ci + s.e_net_up_j / 3.6e6 * ni;
    r.co2e_download_kg += s.e_radio_rx_j / 3.6e6 * ci + s.e_net_down_j / 3.6e6 * ni;
  }
  r.co2e_server_kg = server_j / 3.6e6 * fleet_i;
  return r;
}

std::string write_temp(const std::string& name, const std::string& content) {
  const auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream out(path);
  out << content;
  return path.string();
}

}  // namespace

TEST_CASE("emissions follow the kWh conversion") {
  CHECK(emissions_from_energy(0, 0.7) == 0.0);
  CHECK(emissions_from_energy(3.6e6, 0.5) == 0.5);
  CHECK_THAT(emissions_from_energy(353160.0, 0.4), WithinRel(0.039240, 1e-9));
}

TEST_CASE("fleet-weighted intensity weights by datacenter count") {
  const auto table = table_of({{"AA", 0.2}, {"BB", 0.6}});
  SECTION("single country") {
    const DatacenterFleet fleet{{{"BB", 7}}};
    CHECK(datacenter_weighted_intensity(fleet, table) == 0.6);
  }
  SECTION("one site at 0.2 and three at 0.6 average to 0.5") {
    const DatacenterFleet fleet{{{"AA", 1}, {"BB", 3}}};
    CHECK_THAT(datacenter_weighted_intensity(fleet, table), WithinRel(0.5, 1e-12));
  }
  SECTION("unknown fleet country") {
    const DatacenterFleet fleet{{{"ZZ", 1}}};
    CHECK_THROWS_AS(datacenter_weighted_intensity(fleet, table), UnknownCountry);
  }
  SECTION("result stays inside the fleet's intensity range") {
    Rng rng = make_rng(31, 4);
    std::uniform_real_distribution<double> val(0.05, 1.2);
    std::uniform_int_distribution<int> cnt(1, 9);
    for (int trial = 0; trial < 30; ++trial) {
      CarbonIntensityTable t;
      DatacenterFleet fleet;
      double lo = 1e9, hi = -1e9;
      const int n = 2 + trial % 4;
      for (int i = 0; i < n; ++i) {
        const std::string code = "C" + std::to_string(i);
        const double intensity = val(rng);
        t.kg_per_kwh[code] = intensity;
        fleet.sites.emplace_back(code, cnt(rng));
        lo = std::min(lo, intensity);
        hi = std::max(hi, intensity);
      }
      const double w = datacenter_weighted_intensity(fleet, t);
      CHECK(w >= lo - 1e-15);
      CHECK(w <= hi + 1e-15);
    }
  }
}

TEST_CASE("empty report is all zero") {
  const auto table = table_of({{"AA", 0.3}});
  const DatacenterFleet fleet{{{"AA", 1}}};
  const EmissionsReport r = build_report({}, 0.0, table, fleet);
  CHECK(r.total_kg() == 0.0);
  CHECK(r.share_client_compute == 0.0);
  CHECK(r.share_server == 0.0);
}

TEST_CASE("single compute-only session at unit intensity converts to kWh") {
  const auto table = table_of({{"AA", 1.0}});
  const DatacenterFleet fleet{{{"AA", 2}}};
  SessionEmissionInput s;
  s.country_code = "AA";
  s.e_compute_j = 7.2e6;  // 2 kWh
  const EmissionsReport r = build_report({s}, 0.0, table, fleet);
  CHECK_THAT(r.co2e_client_compute_kg, WithinRel(2.0, 1e-12));
  CHECK(r.co2e_upload_kg == 0.0);
  CHECK(r.share_client_compute == 1.0);
}

TEST_CASE("report matches the independent per-session oracle exactly") {
  const auto table = table_of({{"AA", 0.25}, {"BB", 0.65}, {"CC", 0.4}});
  const DatacenterFleet fleet{{{"AA", 2}, {"CC", 5}}};
  std::vector<SessionEmissionInput> sessions{
      {"AA", 1.2e5, 3.1e3, 4.4e3, 900.0, 2100.0},
      {"BB", 9.9e4, 1.0e3, 2.0e3, 450.0, 1800.0},
      {"AA", 2.4e5, 2.2e3, 6.6e3, 1300.0, 3300.0},
  };
  const double server_j = 5.5e5;
  for (const auto policy :
       {NetworkAttribution::client_country, NetworkAttribution::half_client_half_fleet}) {
    const EmissionsReport got = build_report(sessions, server_j, table, fleet, policy);
    const EmissionsReport want = oracle_report(sessions, server_j, table, fleet, policy);
    CHECK(got.co2e_client_compute_kg == want.co2e_client_compute_kg);
    CHECK(got.co2e_upload_kg == want.co2e_upload_kg);
    CHECK(got.co2e_download_kg == want.co2e_download_kg);
    CHECK(got.co2e_server_kg == want.co2e_server_kg);
  }
}

TEST_CASE("report totals ignore session order") {
  const auto table = table_of({{"AA", 0.3}, {"BB", 0.8}});
  const DatacenterFleet fleet{{{"BB", 3}}};
  Rng rng = make_rng(5, 11);
  std::uniform_real_distribution<double> e(0.0, 1e5);
  std::vector<SessionEmissionInput> sessions;
  for (int i = 0; i < 12; ++i)
    sessions.push_back({i % 2 ? "AA" : "BB", e(rng), e(rng), e(rng), e(rng), e(rng)});
  const EmissionsReport base = build_report(sessions, 1e4, table, fleet);
  for (int trial = 0; trial < 5; ++trial) {
    std::shuffle(sessions.begin(), sessions.end(), rng);
    const EmissionsReport r = build_report(sessions, 1e4, table, fleet);
    CHECK_THAT(r.co2e_client_compute_kg, WithinRel(base.co2e_client_compute_kg, 1e-12));
    CHECK_THAT(r.co2e_upload_kg, WithinRel(base.co2e_upload_kg, 1e-12));
    CHECK_THAT(r.co2e_download_kg, WithinRel(base.co2e_download_kg, 1e-12));
    CHECK(r.co2e_server_kg == base.co2e_server_kg);
  }
}

TEST_CASE("scaling session energies scales the report linearly") {
  const auto table = table_of({{"AA", 0.3}, {"BB", 0.8}});
  const DatacenterFleet fleet{{{"AA", 1}, {"BB", 1}}};
  std::vector<SessionEmissionInput> sessions{
      {"AA", 5e4, 1e3, 2e3, 500.0, 700.0},
      {"BB", 8e4, 3e3, 1e3, 250.0, 900.0},
  };
  const EmissionsReport base = build_report(sessions, 2e4, table, fleet);
  const double k = 3.5;
  std::vector<SessionEmissionInput> scaled = sessions;
  for (auto& s : scaled) {
    s.e_compute_j *= k;
    s.e_radio_rx_j *= k;
    s.e_radio_tx_j *= k;
    s.e_net_up_j *= k;
    s.e_net_down_j *= k;
  }
  const EmissionsReport r = build_report(scaled, k * 2e4, table, fleet);
  CHECK_THAT(r.co2e_client_compute_kg, WithinRel(k * base.co2e_client_compute_kg, 1e-12));
  CHECK_THAT(r.co2e_upload_kg, WithinRel(k * base.co2e_upload_kg, 1e-12));
  CHECK_THAT(r.co2e_download_kg, WithinRel(k * base.co2e_download_kg, 1e-12));
  CHECK_THAT(r.co2e_server_kg, WithinRel(k * base.co2e_server_kg, 1e-12));
  // shares are scale-free
  CHECK_THAT(r.share_upload, WithinRel(base.share_upload, 1e-12));
}

TEST_CASE("shares sum to one when anything was emitted") {
  const auto table = table_of({{"AA", 0.5}});
  const DatacenterFleet fleet{{{"AA", 1}}};
  Rng rng = make_rng(77, 2);
  std::uniform_real_distribution<double> e(0.0, 9e5);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<SessionEmissionInput> sessions;
    for (int i = 0; i < 1 + trial % 5; ++i)
      sessions.push_back({"AA", e(rng), e(rng), e(rng), e(rng), e(rng)});
    const EmissionsReport r = build_report(sessions, e(rng), table, fleet);
    const double share_sum =
        r.share_client_compute + r.share_upload + r.share_download + r.share_server;
    CHECK_THAT(share_sum, Catch::Matchers::WithinAbs(1.0, 1e-9));
  }
}

TEST_CASE("sessions from unlisted countries are rejected") {
  const auto table = table_of({{"AA", 0.5}});
  const DatacenterFleet fleet{{{"AA", 1}}};
  SessionEmissionInput s;
  s.country_code = "XX";
  s.e_compute_j = 1.0;
  CHECK_THROWS_AS(build_report({s}, 0.0, table, fleet), UnknownCountry);
}

TEST_CASE("intensity CSV loads and validates") {
  const std::string good = write_temp("fc_intensity_ok.csv",
                                      "country_code,kg_co2e_per_kwh,year\n"
                                      "AA,0.25,2021\n"
                                      "BB,0.65,2022\n");
  const CarbonIntensityTable t = load_carbon_intensity_csv(good);
  CHECK(t.kg_per_kwh.at("AA") == 0.25);
  CHECK(t.kg_per_kwh.at("BB") == 0.65);
  CHECK(t.source_year == 2022);
  CHECK_THROWS_AS(t.at("CC"), UnknownCountry);

  CHECK_THROWS_AS(load_carbon_intensity_csv(write_temp(
                      "fc_intensity_hdr.csv", "code,intensity,year\nAA,0.25,2021\n")),
                  Error);
  CHECK_THROWS_AS(load_carbon_intensity_csv(
                      write_temp("fc_intensity_neg.csv",
                                 "country_code,kg_co2e_per_kwh,year\nAA,-0.2,2021\n")),
                  MalformedDocument);
  CHECK_THROWS_AS(load_carbon_intensity_csv(
                      write_temp("fc_intensity_dup.csv",
                                 "country_code,kg_co2e_per_kwh,year\nAA,0.2,2021\nAA,0.3,2021\n")),
                  MalformedDocument);
}

TEST_CASE("fleet CSV loads and validates") {
  const std::string good =
      write_temp("fc_fleet_ok.csv", "country_code,datacenter_count\nAA,3\nBB,1\n");
  const DatacenterFleet f = load_datacenter_fleet_csv(good);
  REQUIRE(f.sites.size() == 2);
  CHECK(f.sites[0] == std::pair<std::string, int>("AA", 3));

  CHECK_THROWS_AS(load_datacenter_fleet_csv(
                      write_temp("fc_fleet_zero.csv", "country_code,datacenter_count\nAA,0\n")),
                  MalformedDocument);
  CHECK_THROWS_AS(load_datacenter_fleet_csv(
                      write_temp("fc_fleet_empty.csv", "country_code,datacenter_count\n")),
                  MalformedDocument);
}
