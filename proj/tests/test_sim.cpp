#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "fedcarbon/sim.hpp"
#include "fedcarbon/task.hpp"

using namespace fedcarbon;
using Catch::Matchers::WithinRel;

namespace {

ClientDevice device(int id, double bw_down, double bw_up, double throughput,
                    int samples, double dropout = 0.0) {
  ClientDevice d;
  d.id = id;
  d.device_model_key = "test-phone";
  d.country_code = "AA";
  d.bandwidth_down_bps = bw_down;
  d.bandwidth_up_bps = bw_up;
  d.train_throughput_samples_per_s = throughput;
  d.dropout_prob = dropout;
  d.num_samples = samples;
  d.data_seed = 42;
  return d;
}

// Task that never converges and logs every aggregation's staleness list.
struct InstrumentedTask {
  std::vector<std::vector<long>> aggregations;

  ModelParams initial_params() const {
    ModelParams m;
    m.values = {0.0};
    return m;
  }
  ClientUpdate client_update(const ClientDevice& d, const ModelParams& model) const {
    ClientUpdate u;
    u.delta = {-1.0};
    u.num_samples = d.num_samples;
    u.assigned_version = model.version;
    return u;
  }
  void note_aggregation(const std::vector<long>& s) { aggregations.push_back(s); }
  double evaluate(const ModelParams&, long) const { return 1000.0; }
};

RunConfig fast_stop_config() {
  RunConfig cfg;
  cfg.stopping.target_perplexity = 1e12;  // any evaluation qualifies
  cfg.stopping.patience = 1;
  return cfg;
}

}  // namespace

TEST_CASE("session timing follows bandwidth and throughput") {
  Rng rng = make_rng(1, 1);
  const ClientDevice d = device(0, 1e7, 5e6, 10, 30);
  const SessionTiming t = simulate_session(d, 1250000, 2, rng);
  CHECK_THAT(t.t_download_s, WithinRel(1.0, 1e-12));  // 1.25e6 B * 8 / 1e7 bps
  CHECK_THAT(t.t_upload_s, WithinRel(2.0, 1e-12));
  CHECK_THAT(t.t_train_s, WithinRel(6.0, 1e-12));  // 2 epochs * 30 / 10
  CHECK(t.bytes_down == 1250000);
  CHECK(t.completed);
}

TEST_CASE("dropout at zero always completes, at one never does") {
  Rng rng = make_rng(2, 2);
  const ClientDevice safe = device(0, 1e6, 1e6, 5, 10, 0.0);
  for (int i = 0; i < 20; ++i) CHECK(simulate_session(safe, 1000, 1, rng).completed);
  const ClientDevice doomed = device(1, 1e6, 1e6, 5, 10, 1.0);
  const SessionTiming full = simulate_session(safe, 1000, 1, rng);
  for (int i = 0; i < 20; ++i) {
    const SessionTiming t = simulate_session(doomed, 1000, 1, rng);
    CHECK_FALSE(t.completed);
    CHECK(session_total_s(t) < session_total_s(full));
  }
}

TEST_CASE("truncation clips phases in order and scales bytes") {
  SessionTiming full;
  full.t_download_s = 10;
  full.t_train_s = 100;
  full.t_upload_s = 20;
  full.bytes_down = 1000;
  full.bytes_up = 1000;
  SECTION("cut inside download") {
    const SessionTiming t = truncate_timing(full, 4.0);
    CHECK(t.t_download_s == 4.0);
    CHECK(t.t_train_s == 0.0);
    CHECK(t.bytes_down == 400);
    CHECK(t.bytes_up == 0);
    CHECK_FALSE(t.completed);
  }
  SECTION("cut inside training") {
    const SessionTiming t = truncate_timing(full, 60.0);
    CHECK(t.t_download_s == 10.0);
    CHECK(t.t_train_s == 50.0);
    CHECK(t.t_upload_s == 0.0);
    CHECK(t.bytes_down == 1000);
    CHECK(t.bytes_up == 0);
  }
  SECTION("cut inside upload") {
    const SessionTiming t = truncate_timing(full, 125.0);
    CHECK(t.t_upload_s == 15.0);
    CHECK(t.bytes_up == 750);
  }
  SECTION("elapsed beyond the session is a no-op") {
    const SessionTiming t = truncate_timing(full, 500.0);
    CHECK(t.completed);
    CHECK(t.t_upload_s == 20.0);
  }
}

TEST_CASE("sync round at full goal closes on the slowest straggler") {
  std::vector<ClientDevice> pop;
  for (int i = 0; i < 6; ++i) pop.push_back(device(i, 1e6, 1e6, 2.0 + i, 10));
  RunConfig cfg = fast_stop_config();
  cfg.concurrency = 6;
  cfg.aggregation_goal_pct = 100;
  cfg.round_timeout_s = 1e6;
  cfg.model_size_bytes = 125000;  // 1 s per transfer at 1e6 bps
  InstrumentedTask task;
  const RunResult res = run_sync(cfg, pop, task);
  double slowest = 0;
  for (const ClientDevice& d : pop)
    slowest = std::max(slowest, 2.0 + 10.0 / d.train_throughput_samples_per_s);
  REQUIRE(res.trajectory.size() == 1);
  CHECK_THAT(res.trajectory[0].t_s, WithinRel(slowest, 1e-12));
  CHECK(res.server_steps == 1);
  for (const SessionRecord& r : res.sessions) CHECK(r.outcome == SessionOutcome::completed);
}

TEST_CASE("sync partial goal closes at the k-th fastest completion") {
  std::vector<ClientDevice> pop;
  for (int i = 0; i < 8; ++i) pop.push_back(device(i, 2e6, 1e6, 1.5 + 0.7 * i, 12));
  RunConfig cfg = fast_stop_config();
  cfg.concurrency = 8;
  cfg.aggregation_goal_pct = 50;
  cfg.round_timeout_s = 1e6;
  cfg.model_size_bytes = 250000;
  InstrumentedTask task;
  const RunResult res = run_sync(cfg, pop, task);

  // oracle: sorted total durations, k-th value
  std::vector<double> durations;
  for (const ClientDevice& d : pop)
    durations.push_back(250000 * 8.0 / 2e6 + 12.0 / d.train_throughput_samples_per_s +
                        250000 * 8.0 / 1e6);
  std::sort(durations.begin(), durations.end());
  REQUIRE(res.trajectory.size() == 1);
  CHECK_THAT(res.trajectory[0].t_s, WithinRel(durations[3], 1e-12));

  int completed = 0, late = 0;
  for (const SessionRecord& r : res.sessions) {
    completed += r.outcome == SessionOutcome::completed;
    late += r.outcome == SessionOutcome::discarded_late;
  }
  CHECK(completed == 4);
  CHECK(late == 4);
}

TEST_CASE("sync with total dropout aborts every round until the time limit") {
  std::vector<ClientDevice> pop;
  for (int i = 0; i < 4; ++i) pop.push_back(device(i, 1e6, 1e6, 2, 10, 1.0));
  RunConfig cfg;
  cfg.concurrency = 4;
  cfg.round_timeout_s = 1000;
  cfg.stopping.max_wall_seconds = 5000;
  InstrumentedTask task;
  const RunResult res = run_sync(cfg, pop, task);
  CHECK(res.stop_reason == StopDecision::time_limit);
  CHECK(res.server_steps == 0);
  CHECK(res.rounds == 5);
  CHECK(task.aggregations.empty());
  for (const SessionRecord& r : res.sessions) CHECK(r.outcome == SessionOutcome::dropped);
}

TEST_CASE("sync timeout discards a round that met no goal in time") {
  // one fast device cannot meet a goal of 2 before the timeout forces an abort
  std::vector<ClientDevice> pop{device(0, 1e8, 1e8, 100, 10),
                                device(1, 1e8, 1e8, 0.01, 10)};
  RunConfig cfg;
  cfg.concurrency = 2;
  cfg.aggregation_goal_pct = 100;
  cfg.round_timeout_s = 50;
  cfg.stopping.max_wall_seconds = 100;
  cfg.model_size_bytes = 1000;
  InstrumentedTask task;
  const RunResult res = run_sync(cfg, pop, task);
  CHECK(res.server_steps == 0);
  bool saw_stale = false;
  for (const SessionRecord& r : res.sessions)
    saw_stale |= r.outcome == SessionOutcome::discarded_stale_round;
  CHECK(saw_stale);
}

TEST_CASE("sync sessions in one round share the dispatch version") {
  std::vector<ClientDevice> pop;
  for (int i = 0; i < 5; ++i) pop.push_back(device(i, 1e6 + 1e5 * i, 1e6, 2 + i, 8));
  RunConfig cfg;
  cfg.concurrency = 3;
  cfg.aggregation_goal_pct = 100;
  cfg.round_timeout_s = 1e5;
  cfg.stopping.max_wall_seconds = 500;
  InstrumentedTask task;
  const RunResult res = run_sync(cfg, pop, task);
  std::map<double, long> version_at_start;
  for (const SessionRecord& r : res.sessions) {
    const auto it = version_at_start.find(r.t_start);
    if (it == version_at_start.end())
      version_at_start[r.t_start] = r.assigned_version;
    else
      CHECK(it->second == r.assigned_version);
  }
  for (const auto& s : task.aggregations)
    for (long st : s) CHECK(st == 0);
}

TEST_CASE("async hand trace: two speed classes, goal two") {
  // fast pair trains in 1 s, slow pair in 10 s; no transfer time
  std::vector<ClientDevice> pop{device(0, 1e6, 1e6, 10, 10), device(1, 1e6, 1e6, 10, 10),
                                device(2, 1e6, 1e6, 1, 10), device(3, 1e6, 1e6, 1, 10)};
  RunConfig cfg;
  cfg.mode = Mode::async;
  cfg.concurrency = 4;
  cfg.aggregation_goal_pct = 50;  // goal = 2
  cfg.model_size_bytes = 0;
  cfg.eval_every_steps = 0;
  cfg.stopping.max_wall_seconds = 15;
  InstrumentedTask task;
  const RunResult res = run_async(cfg, pop, task);

  CHECK(res.stop_reason == StopDecision::time_limit);
  CHECK(res.wall_seconds == 15.0);
  // flushes at t=1..9 from the fast pair, both slow updates at t=10 with
  // staleness 9, the fast pair dispatched at 9 lands right after with
  // staleness 1, then fresh pairs at t=11..14
  REQUIRE(res.server_steps == 15);
  REQUIRE(task.aggregations.size() == 15);
  for (int i = 0; i < 9; ++i) CHECK(task.aggregations[i] == std::vector<long>{0, 0});
  CHECK(task.aggregations[9] == std::vector<long>{9, 9});
  CHECK(task.aggregations[10] == std::vector<long>{1, 1});
  for (int i = 11; i < 15; ++i) CHECK(task.aggregations[i] == std::vector<long>{0, 0});
  for (const auto& agg : task.aggregations)
    for (long s : agg) {
      CHECK(s >= 0);
      CHECK(s < res.server_steps);
    }
}

TEST_CASE("async keeps exactly concurrency sessions in flight") {
  std::vector<ClientDevice> pop;
  for (int i = 0; i < 12; ++i) pop.push_back(device(i, 1e6, 2e6, 1.0 + 0.3 * i, 6 + i));
  RunConfig cfg;
  cfg.mode = Mode::async;
  cfg.concurrency = 5;
  cfg.aggregation_goal_pct = 60;  // goal = 3
  cfg.model_size_bytes = 50000;
  cfg.eval_every_steps = 0;
  cfg.stopping.max_wall_seconds = 400;
  InstrumentedTask task;
  const RunResult res = run_async(cfg, pop, task);

  Rng rng = make_rng(4, 4);
  std::uniform_real_distribution<double> td(0.5, res.wall_seconds - 0.5);
  for (int probe = 0; probe < 200; ++probe) {
    const double t = td(rng);
    int in_flight = 0;
    for (const SessionRecord& r : res.sessions)
      in_flight += r.t_start <= t && t < r.t_end;
    CHECK(in_flight == 5);
  }
}

TEST_CASE("async matches sync on the degenerate homogeneous configuration") {
  // identical devices and identical datasets; goal 100%; evaluate every step
  std::vector<ClientDevice> pop;
  for (int i = 0; i < 4; ++i) pop.push_back(device(i, 1e6, 1e6, 2, 6));
  RunConfig cfg;
  cfg.concurrency = 4;
  cfg.aggregation_goal_pct = 100;
  cfg.model_size_bytes = 100000;
  cfg.server_lr = 0.3;
  cfg.client_lr = 0.4;
  cfg.local_epochs = 1;
  cfg.batch_size = 2;
  cfg.round_timeout_s = 1e6;
  cfg.eval_every_steps = 1;
  cfg.stopping.max_wall_seconds = 200;
  cfg.stopping.target_perplexity = 1.0;  // unreachable, run to the wall

  ReferenceTask t_sync(8, {cfg.client_lr, cfg.local_epochs, cfg.batch_size}, 4, 5, 99);
  ReferenceTask t_async(8, {cfg.client_lr, cfg.local_epochs, cfg.batch_size}, 4, 5, 99);
  RunConfig sync_cfg = cfg;
  sync_cfg.mode = Mode::sync;
  RunConfig async_cfg = cfg;
  async_cfg.mode = Mode::async;
  const RunResult rs = run_sync(sync_cfg, pop, t_sync);
  const RunResult ra = run_async(async_cfg, pop, t_async);

  const std::size_t n = std::min(rs.trajectory.size(), ra.trajectory.size());
  REQUIRE(n >= 5);
  for (std::size_t i = 0; i < n; ++i) {
    CHECK(rs.trajectory[i].t_s == ra.trajectory[i].t_s);
    CHECK(rs.trajectory[i].raw_ppl == ra.trajectory[i].raw_ppl);
    CHECK(rs.trajectory[i].smoothed_ppl == ra.trajectory[i].smoothed_ppl);
  }
}

TEST_CASE("runs are bitwise deterministic") {
  std::vector<ClientDevice> pop;
  for (int i = 0; i < 10; ++i)
    pop.push_back(device(i, 8e5 + 1e5 * i, 1e6, 1.0 + 0.4 * i, 5 + i, 0.2));
  RunConfig cfg;
  cfg.concurrency = 4;
  cfg.aggregation_goal_pct = 75;
  cfg.model_size_bytes = 20000;
  cfg.round_timeout_s = 60;
  cfg.eval_every_steps = 2;
  cfg.stopping.max_wall_seconds = 300;
  cfg.seed = 31;

  for (const Mode mode : {Mode::sync, Mode::async}) {
    cfg.mode = mode;
    InstrumentedTask ta, tb;
    const RunResult a = mode == Mode::sync ? run_sync(cfg, pop, ta) : run_async(cfg, pop, ta);
    const RunResult b = mode == Mode::sync ? run_sync(cfg, pop, tb) : run_async(cfg, pop, tb);
    CHECK(a.wall_seconds == b.wall_seconds);
    CHECK(a.server_steps == b.server_steps);
    REQUIRE(a.sessions.size() == b.sessions.size());
    for (std::size_t i = 0; i < a.sessions.size(); ++i) {
      CHECK(a.sessions[i].client_id == b.sessions[i].client_id);
      CHECK(a.sessions[i].t_start == b.sessions[i].t_start);
      CHECK(a.sessions[i].t_end == b.sessions[i].t_end);
      CHECK(a.sessions[i].outcome == b.sessions[i].outcome);
    }
  }
}

TEST_CASE("undersized populations are rejected") {
  std::vector<ClientDevice> pop{device(0, 1e6, 1e6, 2, 5)};
  RunConfig cfg;
  cfg.concurrency = 2;
  InstrumentedTask task;
  CHECK_THROWS_AS(run_sync(cfg, pop, task), InsufficientPopulation);
  CHECK_THROWS_AS(run_async(cfg, pop, task), InsufficientPopulation);
}

TEST_CASE("energy attaches to each session and totals conserve") {
  std::vector<ClientDevice> pop;
  for (int i = 0; i < 6; ++i)
    pop.push_back(device(i, 5e5 + 2e5 * i, 7e5, 1.5 + 0.5 * i, 4 + i, 0.3));
  RunConfig cfg;
  cfg.mode = Mode::async;
  cfg.concurrency = 3;
  cfg.aggregation_goal_pct = 100;
  cfg.model_size_bytes = 40000;
  cfg.eval_every_steps = 0;
  cfg.stopping.max_wall_seconds = 250;
  InstrumentedTask task;
  RunResult res = run_async(cfg, pop, task);

  DevicePowerModel m;
  m.device_key = "test-phone";
  m.p_cpu_w = 2.0;
  m.p_rx_w = 1.0;
  m.p_tx_w = 0.5;
  NetworkEnergyParams net;
  net.e_access = 2e-8;
  net.e_core_router = 1e-8;
  net.n_core = 3;
  ServerEnergyParams server;
  const EnergyBreakdown total = attach_energy(res.sessions, {{"test-phone", m}}, net,
                                              server, res.wall_seconds);

  // independent oracle: recompute each component from raw fields
  double compute = 0, radio = 0, up = 0, down = 0;
  for (const SessionRecord& r : res.sessions) {
    compute += 2.0 * r.timing.t_train_s;
    radio += 1.0 * r.timing.t_download_s + 0.5 * r.timing.t_upload_s;
    up += (2e-8 + 3 * 1e-8) * static_cast<double>(r.timing.bytes_up) * 8.0;
    down += (2e-8 + 3 * 1e-8) * static_cast<double>(r.timing.bytes_down) * 8.0;
  }
  CHECK(total.e_client_compute_j == compute);
  CHECK(total.e_client_radio_j == radio);
  CHECK(total.e_network_infra_up_j == up);
  CHECK(total.e_network_infra_down_j == down);
  CHECK(total.e_server_j == 90.0 * 1.09 * res.wall_seconds);
  for (const SessionRecord& r : res.sessions)
    CHECK(r.energy.total() == r.energy.e_client_compute_j + r.energy.e_client_radio_j +
                                  r.energy.e_network_infra_up_j +
                                  r.energy.e_network_infra_down_j);
}

TEST_CASE("single completed session energy matches hand arithmetic") {
  SessionRecord r;
  r.device_model_key = "p";
  r.timing.t_download_s = 10;
  r.timing.t_train_s = 100;
  r.timing.t_upload_s = 20;
  r.timing.bytes_down = 1000000;
  r.timing.bytes_up = 1000000;
  std::vector<SessionRecord> sessions{r};
  DevicePowerModel m;
  m.p_cpu_w = 2.0;
  m.p_rx_w = 1.0;
  m.p_tx_w = 0.5;
  NetworkEnergyParams net;
  net.e_access = 1e-8;
  ServerEnergyParams server;
  const EnergyBreakdown total =
      attach_energy(sessions, {{"p", m}}, net, server, 1000.0);
  CHECK_THAT(total.e_client_compute_j, WithinRel(200.0, 1e-12));
  CHECK_THAT(total.e_client_radio_j, WithinRel(20.0, 1e-12));  // 10*1 + 20*0.5
  CHECK_THAT(total.e_network_infra_up_j, WithinRel(0.08, 1e-12));
  CHECK_THAT(total.e_network_infra_down_j, WithinRel(0.08, 1e-12));
  CHECK_THAT(total.e_server_j, WithinRel(98100.0, 1e-12));  // 90 W * 1.09 * 1000 s
  CHECK(sessions[0].e_radio_rx_j == 10.0);
  CHECK(sessions[0].e_radio_tx_j == 10.0);
}

TEST_CASE("attach with no sessions yields server-only energy") {
  std::vector<SessionRecord> none;
  const EnergyBreakdown total =
      attach_energy(none, {}, NetworkEnergyParams{}, ServerEnergyParams{}, 3600.0);
  CHECK(total.e_client_compute_j == 0.0);
  CHECK_THAT(total.e_server_j, WithinRel(353160.0, 1e-12));
}

TEST_CASE("dropped-session energy can be excluded") {
  SessionRecord completed;
  completed.device_model_key = "p";
  completed.timing.t_train_s = 50;
  SessionRecord dropped = completed;
  dropped.outcome = SessionOutcome::dropped;
  std::vector<SessionRecord> sessions{completed, dropped};
  DevicePowerModel m;
  m.p_cpu_w = 1.0;
  EnergyAttachOptions opts;
  opts.count_dropped = false;
  const EnergyBreakdown total = attach_energy(sessions, {{"p", m}}, NetworkEnergyParams{},
                                              ServerEnergyParams{}, 0.0, opts);
  CHECK(total.e_client_compute_j == 50.0);
  CHECK(sessions[1].energy.total() == 0.0);
}

TEST_CASE("unresolvable device keys surface as errors") {
  SessionRecord r;
  r.device_model_key = "mystery";
  std::vector<SessionRecord> sessions{r};
  CHECK_THROWS_AS(attach_energy(sessions, {}, NetworkEnergyParams{}, ServerEnergyParams{}, 0.0),
                  NoSimilarDevice);
}
