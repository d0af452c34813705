#include <catch2/catch_amalgamated.hpp>

#include "fedcarbon/energy.hpp"
#include "fedcarbon/rng.hpp"

using namespace fedcarbon;
using Catch::Matchers::WithinRel;

namespace {

DevicePowerModel model(double cpu, double rx, double tx) {
  DevicePowerModel m;
  m.p_cpu_w = cpu;
  m.p_rx_w = rx;
  m.p_tx_w = tx;
  return m;
}

}  // namespace

TEST_CASE("client session energy matches hand arithmetic") {
  SessionTiming t;
  SECTION("all durations zero") {
    const auto [compute, radio] = client_session_energy(model(1.14, 1.11, 1.554), t);
    CHECK(compute == 0.0);
    CHECK(radio == 0.0);
  }
  SECTION("training only: 1.14 W for 600 s is 684 J") {
    t.t_train_s = 600;
    const auto [compute, radio] = client_session_energy(model(1.14, 1.11, 1.554), t);
    CHECK_THAT(compute, WithinRel(684.0, 1e-12));
    CHECK(radio == 0.0);
  }
  SECTION("radio: 1.11 W for 20 s down plus 1.554 W for 30 s up is 68.82 J") {
    t.t_download_s = 20;
    t.t_upload_s = 30;
    const auto [compute, radio] = client_session_energy(model(1.14, 1.11, 1.554), t);
    CHECK(compute == 0.0);
    CHECK_THAT(radio, WithinRel(68.82, 1e-12));
  }
}

TEST_CASE("radio split sums to the combined radio figure") {
  SessionTiming t;
  t.t_download_s = 17.5;
  t.t_upload_s = 41.25;
  const DevicePowerModel m = model(2.0, 1.11, 1.554);
  const auto [compute, radio] = client_session_energy(m, t);
  const RadioSplit split = client_radio_energy_split(m, t);
  CHECK(split.rx_j + split.tx_j == radio);
  CHECK_THAT(split.rx_j, WithinRel(1.11 * 17.5, 1e-12));
  (void)compute;
}

TEST_CASE("network transfer energy follows the per-bit path sum") {
  NetworkEnergyParams p;
  SECTION("zero traffic") { CHECK(network_transfer_energy(p, 0) == 0.0); }
  SECTION("unit energies, two edge and three core hops, one byte") {
    p.e_access = p.e_edge_switch = p.e_bng = p.e_edge_router = p.e_core_router =
        p.e_dc_switch = 1.0;
    p.n_edge = 2;
    p.n_core = 3;
    // (1+1+1+2+3+1) J/bit * 8 bits
    CHECK_THAT(network_transfer_energy(p, 1), WithinRel(72.0, 1e-12));
  }
  SECTION("doubling bytes doubles energy") {
    p.e_access = 2.1e-8;
    p.e_bng = 3.4e-9;
    p.n_core = 4;
    p.e_core_router = 1.2e-8;
    const double one = network_transfer_energy(p, 12345);
    CHECK_THAT(network_transfer_energy(p, 24690), WithinRel(2 * one, 1e-12));
  }
}

TEST_CASE("server energy uses combined draw grossed up by PUE") {
  ServerEnergyParams p;  // defaults: 45 + 45 W, PUE 1.09
  CHECK(server_energy(p, 0) == 0.0);
  CHECK_THAT(server_energy(p, 3600), WithinRel(353160.0, 1e-12));
  p.pue = 1.0;
  CHECK_THAT(server_energy(p, 3600), WithinRel(324000.0, 1e-12));
}

TEST_CASE("energy operations are linear in duration and bytes") {
  Rng rng = make_rng(99, 7);
  std::uniform_real_distribution<double> scale_dist(0.1, 10.0);
  const DevicePowerModel m = model(2.66, 1.11, 1.554);
  NetworkEnergyParams np;
  np.e_access = 5e-8;
  np.e_edge_router = 1e-8;
  np.n_edge = 3;
  ServerEnergyParams sp;
  SessionTiming base;
  base.t_download_s = 12;
  base.t_train_s = 340;
  base.t_upload_s = 19;

  for (int i = 0; i < 3; ++i) {
    const double k = scale_dist(rng);
    SessionTiming scaled = base;
    scaled.t_download_s *= k;
    scaled.t_train_s *= k;
    scaled.t_upload_s *= k;
    const auto [c0, r0] = client_session_energy(m, base);
    const auto [c1, r1] = client_session_energy(m, scaled);
    CHECK_THAT(c1, WithinRel(k * c0, 1e-12));
    CHECK_THAT(r1, WithinRel(k * r0, 1e-12));
    CHECK_THAT(server_energy(sp, 100.0 * k), WithinRel(k * server_energy(sp, 100.0), 1e-12));
    const std::uint64_t b = 1000;
    const auto kb = static_cast<std::uint64_t>(b * k);
    CHECK_THAT(network_transfer_energy(np, kb),
               WithinRel(static_cast<double>(kb) / b * network_transfer_energy(np, b), 1e-12));
  }
}

TEST_CASE("incomplete sessions spend nothing on upload") {
  SessionTiming t;
  t.t_download_s = 25;
  t.t_train_s = 200;
  t.t_upload_s = 0;
  t.bytes_up = 0;
  t.completed = false;
  const auto [compute, radio] = client_session_energy(model(1.0, 0.5, 2.0), t);
  CHECK(compute == 200.0);
  CHECK(radio == 12.5);  // download phase only
  const RadioSplit split = client_radio_energy_split(model(1.0, 0.5, 2.0), t);
  CHECK(split.tx_j == 0.0);
  CHECK(split.rx_j > 0.0);
}

TEST_CASE("breakdown total is the exact component sum") {
  EnergyBreakdown b;
  b.e_client_compute_j = 684.25;
  b.e_client_radio_j = 68.82;
  b.e_network_infra_up_j = 31.5;
  b.e_network_infra_down_j = 12.75;
  b.e_server_j = 353160.0;
  CHECK(b.total() ==
        684.25 + 68.82 + 31.5 + 12.75 + 353160.0);
}
