#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "fedcarbon/fl_core.hpp"
#include "fedcarbon/population.hpp"
#include "fedcarbon/rng.hpp"
#include "fedcarbon/softmax_lm.hpp"

namespace fedcarbon {

/// Trains the bigram softmax model on real per-client datasets and evaluates
/// on a fixed held-out pool. Datasets derive from each device's data_seed, so
/// everything here is a pure function of its inputs.
class ReferenceTask {
public:
  ReferenceTask(int vocab_size, ClientTrainConfig cfg, int heldout_clients,
                int heldout_samples_per_client, std::uint64_t heldout_seed)
      : lm_(vocab_size), cfg_(cfg) {
    for (int c = 0; c < heldout_clients; ++c) {
      const std::uint64_t seed = derive_seed(heldout_seed, 0x4e1d, static_cast<std::uint64_t>(c));
      heldout_.push_back(make_client_dataset(seed, heldout_samples_per_client, vocab_size));
    }
  }

  ModelParams initial_params() const { return lm_.initial_params(); }

  ClientUpdate client_update(const ClientDevice& device, const ModelParams& model) {
    return client_local_train(lm_, model, dataset_for(device), cfg_);
  }

  void note_aggregation(const std::vector<long>&) {}

  double evaluate(const ModelParams& model, long) const {
    return evaluate_heldout(lm_, model, heldout_);
  }

  const ReferenceSoftmaxLM& lm() const { return lm_; }

private:
  const ClientDataset& dataset_for(const ClientDevice& device) {
    const auto key = std::make_pair(device.data_seed, device.num_samples);
    auto it = cache_.find(key);
    if (it == cache_.end()) {
      it = cache_
               .emplace(key, make_client_dataset(device.data_seed, device.num_samples,
                                                 lm_.vocab_size()))
               .first;
    }
    return it->second;
  }

  ReferenceSoftmaxLM lm_;
  ClientTrainConfig cfg_;
  std::vector<ClientDataset> heldout_;
  std::map<std::pair<std::uint64_t, int>, ClientDataset> cache_;
};

/// Closed-form perplexity curve for systems-scale experiments where running a
/// real model would dominate the runtime. Perplexity decays exponentially in
/// server steps with a time constant that shrinks as the aggregation goal
/// grows, flattening out around knee_goal updates per step; aggregated
/// staleness inflates the curve. Never a substitute for optimizer tests.
struct SyntheticTaskParams {
  double ppl0 = 350.0;
  double ppl_min = 100.0;
  double tau_floor = 30.0;
  double knee_goal = 640.0;
  double staleness_coef = 0.02;
  double noise_sd = 1.0;
};

class SyntheticTask {
public:
  SyntheticTask(const SyntheticTaskParams& p, int goal_count, std::uint64_t seed)
      : p_(p), seed_(seed) {
    tau_ = p.tau_floor * (1.0 + p.knee_goal / static_cast<double>(goal_count));
  }

  ModelParams initial_params() const {
    ModelParams m;
    m.values = {0.0};
    return m;
  }

  ClientUpdate client_update(const ClientDevice& device, const ModelParams& model) const {
    ClientUpdate u;
    u.delta = {-1.0};
    u.num_samples = device.num_samples;
    u.assigned_version = model.version;
    return u;
  }

  void note_aggregation(const std::vector<long>& stalenesses) {
    for (long s : stalenesses) staleness_sum_ += static_cast<double>(s);
    aggregated_count_ += static_cast<long>(stalenesses.size());
  }

  double evaluate(const ModelParams& model, long eval_index) const {
    const double n = static_cast<double>(model.version);
    const double avg_staleness =
        aggregated_count_ ? staleness_sum_ / static_cast<double>(aggregated_count_) : 0.0;
    const double penalty = 1.0 + p_.staleness_coef * avg_staleness;
    const std::uint64_t h = derive_seed(seed_, 0xe7a1ULL, static_cast<std::uint64_t>(eval_index));
    const double u = static_cast<double>(h >> 11) * 0x1p-53;  // [0,1)
    const double noise = p_.noise_sd * (2.0 * u - 1.0);
    const double ppl = p_.ppl_min + (p_.ppl0 - p_.ppl_min) * std::exp(-n / tau_) * penalty + noise;
    return std::max(1.0, ppl);
  }

  double tau() const { return tau_; }

private:
  SyntheticTaskParams p_;
  std::uint64_t seed_;
  double tau_;
  double staleness_sum_ = 0.0;
  long aggregated_count_ = 0;
};

}  // namespace fedcarbon
