#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <queue>
#include <string>
#include <unordered_map>
#include <vector>

#include "fedcarbon/energy.hpp"
#include "fedcarbon/errors.hpp"
#include "fedcarbon/fl_core.hpp"
#include "fedcarbon/population.hpp"
#include "fedcarbon/power_profile.hpp"
#include "fedcarbon/rng.hpp"

namespace fedcarbon {

enum class Mode { sync, async };

/// Everything one run needs besides the population and the task. The
/// aggregation goal is a percentage of concurrency. Async evaluation fires on
/// either cadence that is nonzero.
struct RunConfig {
  Mode mode = Mode::sync;
  int concurrency = 10;
  double aggregation_goal_pct = 100.0;
  double server_lr = 0.01;
  double client_lr = 0.1;
  int local_epochs = 1;
  int batch_size = 16;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::uint64_t model_size_bytes = 1000000;
  double round_timeout_s = 600.0;     // sync only
  int eval_every_steps = 20;          // async; 0 disables
  double eval_every_seconds = 0.0;    // async; 0 disables
  StalenessScheme staleness_scheme = StalenessScheme::polynomial;
  AggregationWeighting weighting = AggregationWeighting::uniform;
  StoppingCriterion stopping;
  std::uint64_t seed = 0;
};

/// Minimum completed responses that trigger a server step.
inline int aggregation_goal_count(const RunConfig& cfg) {
  return std::max(
      1, static_cast<int>(std::ceil(cfg.concurrency * cfg.aggregation_goal_pct / 100.0)));
}

enum class SessionOutcome { completed, dropped, discarded_late, discarded_stale_round };

/// One dispatched client session. Energy fields are filled by attach_energy
/// after the run; the radio split carries the per-direction device energy the
/// emissions report needs.
struct SessionRecord {
  int client_id = 0;
  std::string device_model_key;
  std::string country_code;
  long assigned_version = 0;
  double t_start = 0.0;
  double t_end = 0.0;
  SessionTiming timing;
  SessionOutcome outcome = SessionOutcome::completed;
  EnergyBreakdown energy;
  double e_radio_rx_j = 0.0;
  double e_radio_tx_j = 0.0;
};

struct TrajectoryPoint {
  double t_s = 0.0;
  double raw_ppl = 0.0;
  double smoothed_ppl = 0.0;
};

struct RunResult {
  Mode mode = Mode::sync;
  long rounds = 0;        // sync: rounds attempted; async: mirrors server_steps
  long server_steps = 0;  // model version at the end
  double wall_seconds = 0.0;
  std::vector<TrajectoryPoint> trajectory;
  double final_smoothed_perplexity = 0.0;
  StopDecision stop_reason = StopDecision::time_limit;
  std::vector<SessionRecord> sessions;

  double wall_hours() const { return wall_seconds / 3600.0; }
};

inline double session_total_s(const SessionTiming& t) {
  return t.t_download_s + t.t_train_s + t.t_upload_s;
}

/// Clips a session to `elapsed` seconds of progress, consuming phases in
/// download -> train -> upload order; transferred bytes shrink with their
/// phase. No-op if the session already fit.
inline SessionTiming truncate_timing(const SessionTiming& full, double elapsed) {
  if (elapsed >= session_total_s(full)) return full;
  SessionTiming t;
  t.completed = false;
  t.t_download_s = std::min(elapsed, full.t_download_s);
  elapsed -= t.t_download_s;
  t.t_train_s = std::min(elapsed, full.t_train_s);
  elapsed -= t.t_train_s;
  t.t_upload_s = std::min(elapsed, full.t_upload_s);
  if (full.t_download_s > 0)
    t.bytes_down = static_cast<std::uint64_t>(
        std::llround(full.bytes_down * (t.t_download_s / full.t_download_s)));
  if (full.t_upload_s > 0)
    t.bytes_up = static_cast<std::uint64_t>(
        std::llround(full.bytes_up * (t.t_upload_s / full.t_upload_s)));
  return t;
}

/// Phase durations follow directly from device capabilities; a dropout draw
/// may cut the session at a uniformly random point within it.
inline SessionTiming simulate_session(const ClientDevice& d, std::uint64_t model_size_bytes,
                                      int local_epochs, Rng& rng) {
  SessionTiming t;
  t.t_download_s = static_cast<double>(model_size_bytes) * 8.0 / d.bandwidth_down_bps;
  t.t_train_s = static_cast<double>(local_epochs) * d.num_samples /
                d.train_throughput_samples_per_s;
  t.t_upload_s = static_cast<double>(model_size_bytes) * 8.0 / d.bandwidth_up_bps;
  t.bytes_down = model_size_bytes;
  t.bytes_up = model_size_bytes;
  t.completed = true;
  if (d.dropout_prob > 0.0 &&
      std::bernoulli_distribution(d.dropout_prob)(rng)) {
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    t = truncate_timing(t, u * session_total_s(t));
  }
  return t;
}

namespace detail {

// Uniform selection of k distinct entries from `pool` (consumed in place).
inline std::vector<int> draw_without_replacement(std::vector<int>& pool, int k, Rng& rng) {
  std::vector<int> picked;
  picked.reserve(k);
  for (int i = 0; i < k && !pool.empty(); ++i) {
    const std::size_t j =
        std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng);
    picked.push_back(pool[j]);
    pool[j] = pool.back();
    pool.pop_back();
  }
  return picked;
}

inline void finalize_in_flight(std::vector<SessionRecord>& sessions, double now) {
  for (SessionRecord& r : sessions) {
    if (r.t_end > now) {
      r.timing = truncate_timing(r.timing, now - r.t_start);
      r.timing.completed = false;
      r.t_end = now;
      if (r.outcome == SessionOutcome::completed) r.outcome = SessionOutcome::discarded_late;
    }
  }
}

}  // namespace detail

/// Round-based engine. Each round over-selects up to `concurrency` free
/// devices on the current model; the round closes at the goal-th completion
/// and later arrivals are discarded (energy still spent). A round that cannot
/// meet the goal by the timeout aborts without a model update. Evaluation and
/// the stopping rule run after every round, aborted ones included.
template <class Task>
RunResult run_sync(const RunConfig& cfg, const std::vector<ClientDevice>& population,
                   Task& task) {
  if (static_cast<int>(population.size()) < cfg.concurrency)
    throw InsufficientPopulation(static_cast<int>(population.size()), cfg.concurrency);
  if (cfg.round_timeout_s <= 0) throw InvalidSpec("round_timeout_s must be positive");

  Rng rng = make_rng(cfg.seed, 0x57a6e);
  ModelParams model = task.initial_params();
  ServerOptimizerState opt = make_server_optimizer(model.values.size(), cfg.beta1, cfg.beta2,
                                                   cfg.server_lr, cfg.adam_epsilon);
  StoppingCriterion stop = cfg.stopping;
  const int goal = aggregation_goal_count(cfg);

  RunResult res;
  res.mode = Mode::sync;
  std::vector<double> busy_until(population.size(), 0.0);
  double now = 0.0;
  long eval_index = 0;

  for (;;) {
    std::vector<int> free_devices;
    for (std::size_t i = 0; i < population.size(); ++i)
      if (busy_until[i] <= now) free_devices.push_back(static_cast<int>(i));
    if (free_devices.empty()) {
      // stragglers own every device; jump to the first release
      now = *std::min_element(busy_until.begin(), busy_until.end());
      continue;
    }
    const std::vector<int> selected =
        detail::draw_without_replacement(free_devices, cfg.concurrency, rng);

    struct Launched {
      std::size_t record_idx;
      double finish;
      bool completed;
      ClientUpdate update;
    };
    std::vector<Launched> launched;
    const double t0 = now;
    for (int dev_idx : selected) {
      const ClientDevice& dev = population[dev_idx];
      SessionRecord rec;
      rec.client_id = dev.id;
      rec.device_model_key = dev.device_model_key;
      rec.country_code = dev.country_code;
      rec.assigned_version = model.version;
      rec.t_start = t0;
      rec.timing = simulate_session(dev, cfg.model_size_bytes, cfg.local_epochs, rng);
      rec.t_end = t0 + session_total_s(rec.timing);
      rec.outcome = rec.timing.completed ? SessionOutcome::completed : SessionOutcome::dropped;
      busy_until[dev_idx] = rec.t_end;
      Launched l;
      l.record_idx = res.sessions.size();
      l.finish = rec.t_end;
      l.completed = rec.timing.completed;
      if (l.completed) l.update = task.client_update(dev, model);
      res.sessions.push_back(std::move(rec));
      launched.push_back(std::move(l));
    }

    // responders in arrival order; dispatch order breaks finish-time ties
    std::vector<const Launched*> responders;
    for (const Launched& l : launched)
      if (l.completed) responders.push_back(&l);
    std::stable_sort(responders.begin(), responders.end(),
                     [](const Launched* a, const Launched* b) { return a->finish < b->finish; });

    const double deadline = t0 + cfg.round_timeout_s;
    const bool met = static_cast<int>(responders.size()) >= goal &&
                     responders[goal - 1]->finish <= deadline;
    if (met) {
      now = responders[goal - 1]->finish;
      std::vector<ClientUpdate> buffer;
      for (int i = 0; i < goal; ++i) buffer.push_back(responders[i]->update);
      for (std::size_t i = goal; i < responders.size(); ++i)
        res.sessions[responders[i]->record_idx].outcome = SessionOutcome::discarded_late;
      const std::vector<double> g =
          aggregate_updates(buffer, model.version, cfg.staleness_scheme, cfg.weighting);
      model = server_adam_step(opt, g, model);
      task.note_aggregation(std::vector<long>(goal, 0L));
    } else {
      now = deadline;
      for (const Launched* l : responders)
        res.sessions[l->record_idx].outcome = SessionOutcome::discarded_stale_round;
    }
    res.rounds += 1;

    const double raw = task.evaluate(model, eval_index++);
    const StopDecision decision = stopping_update(stop, raw, now);
    res.trajectory.push_back({now, raw, stop.smoothed});
    if (decision != StopDecision::continue_run) {
      res.stop_reason = decision;
      break;
    }
  }

  detail::finalize_in_flight(res.sessions, now);
  res.wall_seconds = now;
  res.server_steps = model.version;
  res.final_smoothed_perplexity = stop.smoothed;
  return res;
}

/// Buffered asynchronous engine. Exactly `concurrency` sessions stay in
/// flight: every completion or dropout immediately frees the slot and a new
/// device is dispatched on the current model at the same instant. Completed
/// updates buffer until the aggregation goal, then one staleness-weighted
/// server step runs and the buffer clears.
template <class Task>
RunResult run_async(const RunConfig& cfg, const std::vector<ClientDevice>& population,
                    Task& task) {
  if (static_cast<int>(population.size()) < cfg.concurrency)
    throw InsufficientPopulation(static_cast<int>(population.size()), cfg.concurrency);

  Rng rng = make_rng(cfg.seed, 0x57a6e);
  ModelParams model = task.initial_params();
  ServerOptimizerState opt = make_server_optimizer(model.values.size(), cfg.beta1, cfg.beta2,
                                                   cfg.server_lr, cfg.adam_epsilon);
  StoppingCriterion stop = cfg.stopping;
  const int goal = aggregation_goal_count(cfg);

  RunResult res;
  res.mode = Mode::async;

  enum EventKind { completion = 0, dispatch_slot = 1, timed_eval = 2 };
  struct Event {
    double time;
    std::uint64_t seq;
    EventKind kind;
    long payload;  // session index for completions
    bool operator>(const Event& o) const {
      if (time != o.time) return time > o.time;
      return seq > o.seq;
    }
  };
  std::priority_queue<Event, std::vector<Event>, std::greater<Event>> events;
  std::uint64_t next_seq = 0;

  std::vector<char> busy(population.size(), 0);
  std::unordered_map<long, ClientUpdate> pending;
  std::vector<ClientUpdate> buffer;
  double now = 0.0;
  long eval_index = 0;
  bool stopped = false;

  const auto dispatch_device = [&](int dev_idx) {
    const ClientDevice& dev = population[dev_idx];
    busy[dev_idx] = 1;
    SessionRecord rec;
    rec.client_id = dev.id;
    rec.device_model_key = dev.device_model_key;
    rec.country_code = dev.country_code;
    rec.assigned_version = model.version;
    rec.t_start = now;
    rec.timing = simulate_session(dev, cfg.model_size_bytes, cfg.local_epochs, rng);
    rec.t_end = now + session_total_s(rec.timing);
    rec.outcome = rec.timing.completed ? SessionOutcome::completed : SessionOutcome::dropped;
    const long idx = static_cast<long>(res.sessions.size());
    if (rec.timing.completed) pending.emplace(idx, task.client_update(dev, model));
    events.push({rec.t_end, next_seq++, completion, idx});
    res.sessions.push_back(std::move(rec));
  };

  const auto dispatch_free = [&] {
    std::vector<int> free_devices;
    for (std::size_t i = 0; i < population.size(); ++i)
      if (!busy[i]) free_devices.push_back(static_cast<int>(i));
    const auto picked = detail::draw_without_replacement(free_devices, 1, rng);
    if (!picked.empty()) dispatch_device(picked.front());
  };

  const auto evaluate_now = [&] {
    const double raw = task.evaluate(model, eval_index++);
    const StopDecision decision = stopping_update(stop, raw, now);
    res.trajectory.push_back({now, raw, stop.smoothed});
    if (decision != StopDecision::continue_run) {
      res.stop_reason = decision;
      stopped = true;
    }
  };

  {
    // initial cohort, selected uniformly without replacement
    std::vector<int> all(population.size());
    for (std::size_t i = 0; i < population.size(); ++i) all[i] = static_cast<int>(i);
    for (int dev_idx : detail::draw_without_replacement(all, cfg.concurrency, rng))
      dispatch_device(dev_idx);
  }
  if (cfg.eval_every_seconds > 0)
    events.push({cfg.eval_every_seconds, next_seq++, timed_eval, 0});

  while (!stopped) {
    if (events.empty()) {
      res.stop_reason = StopDecision::time_limit;
      break;
    }
    const Event ev = events.top();
    events.pop();
    if (ev.time >= stop.max_wall_seconds) {
      now = stop.max_wall_seconds;
      res.stop_reason = StopDecision::time_limit;
      break;
    }
    now = ev.time;
    switch (ev.kind) {
      case completion: {
        SessionRecord& rec = res.sessions[ev.payload];
        for (std::size_t i = 0; i < population.size(); ++i)
          if (population[i].id == rec.client_id) busy[i] = 0;
        if (rec.timing.completed) {
          auto it = pending.find(ev.payload);
          buffer.push_back(std::move(it->second));
          pending.erase(it);
          if (static_cast<int>(buffer.size()) >= goal) {
            std::vector<long> stalenesses;
            stalenesses.reserve(buffer.size());
            for (const ClientUpdate& u : buffer)
              stalenesses.push_back(model.version - u.assigned_version);
            const std::vector<double> g = aggregate_updates(
                buffer, model.version, cfg.staleness_scheme, cfg.weighting);
            model = server_adam_step(opt, g, model);
            task.note_aggregation(stalenesses);
            buffer.clear();
            if (cfg.eval_every_steps > 0 && model.version % cfg.eval_every_steps == 0)
              evaluate_now();
          }
        } else {
          pending.erase(ev.payload);
        }
        if (!stopped) events.push({now, next_seq++, dispatch_slot, 0});
        break;
      }
      case dispatch_slot:
        dispatch_free();
        break;
      case timed_eval:
        evaluate_now();
        if (!stopped) events.push({now + cfg.eval_every_seconds, next_seq++, timed_eval, 0});
        break;
    }
  }

  detail::finalize_in_flight(res.sessions, now);
  res.wall_seconds = now;
  res.server_steps = model.version;
  res.rounds = model.version;
  res.final_smoothed_perplexity = stop.smoothed;
  return res;
}

struct EnergyAttachOptions {
  bool count_dropped = true;  // dropped sessions still burned electricity
};

/// Joins session records to device power models and network parameters,
/// filling each record's breakdown and returning the run total including the
/// server term over the run's wall-clock time. Models must already be
/// resolved (measured or imputed) for every key that appears.
inline EnergyBreakdown attach_energy(std::vector<SessionRecord>& sessions,
                                     const std::map<std::string, DevicePowerModel>& models,
                                     const NetworkEnergyParams& net,
                                     const ServerEnergyParams& server, double wall_seconds,
                                     const EnergyAttachOptions& opts = {}) {
  EnergyBreakdown total;
  for (SessionRecord& r : sessions) {
    const auto it = models.find(r.device_model_key);
    if (it == models.end()) throw NoSimilarDevice(r.device_model_key);
    if (!opts.count_dropped && r.outcome == SessionOutcome::dropped) {
      r.energy = EnergyBreakdown{};
      r.e_radio_rx_j = 0.0;
      r.e_radio_tx_j = 0.0;
      continue;
    }
    const auto [compute_j, radio_j] = client_session_energy(it->second, r.timing);
    const RadioSplit split = client_radio_energy_split(it->second, r.timing);
    r.energy.e_client_compute_j = compute_j;
    r.energy.e_client_radio_j = radio_j;
    r.energy.e_network_infra_up_j = network_transfer_energy(net, r.timing.bytes_up);
    r.energy.e_network_infra_down_j = network_transfer_energy(net, r.timing.bytes_down);
    r.energy.e_server_j = 0.0;
    r.e_radio_rx_j = split.rx_j;
    r.e_radio_tx_j = split.tx_j;
    total.e_client_compute_j += r.energy.e_client_compute_j;
    total.e_client_radio_j += r.energy.e_client_radio_j;
    total.e_network_infra_up_j += r.energy.e_network_infra_up_j;
    total.e_network_infra_down_j += r.energy.e_network_infra_down_j;
  }
  total.e_server_j = server_energy(server, wall_seconds);
  return total;
}

}  // namespace fedcarbon
