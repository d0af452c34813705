#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "fedcarbon/errors.hpp"

namespace fedcarbon {

/// Dense parameter vector. version counts server optimizer steps; nothing
/// else may touch it.
struct ModelParams {
  std::vector<double> values;
  long version = 0;
};

/// A client's contribution: parameter delta after local training, how many
/// samples it trained on, and which model version it started from.
struct ClientUpdate {
  std::vector<double> delta;
  long num_samples = 0;
  long assigned_version = 0;
};

/// Server-side Adam state. Clients run plain SGD; the server applies the
/// aggregated pseudo-gradient with Adam.
struct ServerOptimizerState {
  std::vector<double> m;
  std::vector<double> v;
  long t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double server_lr = 0.01;
  double epsilon = 1e-8;
};

inline ServerOptimizerState make_server_optimizer(std::size_t dim, double beta1,
                                                  double beta2, double server_lr,
                                                  double epsilon = 1e-8) {
  ServerOptimizerState s;
  s.m.assign(dim, 0.0);
  s.v.assign(dim, 0.0);
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.server_lr = server_lr;
  s.epsilon = epsilon;
  return s;
}

struct ClientTrainConfig {
  double client_lr = 0.1;
  int local_epochs = 1;
  int batch_size = 16;
};

enum class StalenessScheme { none, polynomial };

/// Down-weighting of stale updates: 1/sqrt(1+s), or 1 for the identity
/// scheme. s is how many server steps behind the update's base model is.
inline double staleness_weight(long s, StalenessScheme scheme) {
  if (scheme == StalenessScheme::none) return 1.0;
  return 1.0 / std::sqrt(1.0 + static_cast<double>(s));
}

enum class AggregationWeighting { uniform, by_samples };

/// Weighted average of client deltas, negated so the server optimizer can
/// treat it as a gradient to descend.
inline std::vector<double> aggregate_updates(
    const std::vector<ClientUpdate>& updates, long current_version,
    StalenessScheme scheme,
    AggregationWeighting weighting = AggregationWeighting::uniform) {
  if (updates.empty()) throw EmptyBuffer();
  const std::size_t dim = updates.front().delta.size();
  std::vector<double> sum(dim, 0.0);
  double weight_sum = 0.0;
  for (const auto& u : updates) {
    double w = staleness_weight(current_version - u.assigned_version, scheme);
    if (weighting == AggregationWeighting::by_samples) w *= static_cast<double>(u.num_samples);
    for (std::size_t i = 0; i < dim; ++i) sum[i] += w * u.delta[i];
    weight_sum += w;
  }
  for (double& x : sum) x = -x / weight_sum;
  return sum;
}

/// One bias-corrected Adam step on the model; bumps the version.
inline ModelParams server_adam_step(ServerOptimizerState& state,
                                    const std::vector<double>& g, ModelParams model) {
  state.t += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < g.size(); ++i) {
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g[i];
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g[i] * g[i];
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    model.values[i] -= state.server_lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
  }
  model.version += 1;
  return model;
}

/// exp(-(1/i) * sum log p), the log-space form of (prod p)^(-1/i).
inline double perplexity(const std::vector<double>& token_probs) {
  if (token_probs.empty()) throw EmptyHeldout();
  double log_sum = 0.0;
  for (double p : token_probs) {
    if (p <= 0.0) throw ZeroProbability();
    log_sum += std::log(p);
  }
  return std::exp(-log_sum / static_cast<double>(token_probs.size()));
}

enum class StopDecision { continue_run, target_reached, time_limit };

/// EWMA-smoothed early stopping. The smoothed series must sit at or below
/// target for `patience` consecutive evaluations; the wall-clock cap is
/// checked before anything else.
struct StoppingCriterion {
  double target_perplexity = 175.0;
  int patience = 5;
  double ewma_alpha = 0.3;
  double max_wall_seconds = 172800.0;  // 2 days

  // state
  bool has_smoothed = false;
  double smoothed = 0.0;
  int consecutive_hits = 0;
};

inline StopDecision stopping_update(StoppingCriterion& c, double raw_ppl,
                                    double wall_seconds) {
  if (wall_seconds >= c.max_wall_seconds) return StopDecision::time_limit;
  if (c.has_smoothed) {
    c.smoothed = c.ewma_alpha * raw_ppl + (1.0 - c.ewma_alpha) * c.smoothed;
  } else {
    c.smoothed = raw_ppl;
    c.has_smoothed = true;
  }
  if (c.smoothed <= c.target_perplexity) {
    c.consecutive_hits += 1;
  } else {
    c.consecutive_hits = 0;
  }
  if (c.consecutive_hits >= c.patience) return StopDecision::target_reached;
  return StopDecision::continue_run;
}

}  // namespace fedcarbon
