#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fedcarbon/errors.hpp"
#include "fedcarbon/rng.hpp"

namespace fedcarbon {

/// One simulated handset: hardware identity, where it sits, how fast it
/// moves data and trains, and how flaky it is. data_seed pins its dataset.
struct ClientDevice {
  int id = 0;
  std::string device_model_key;
  std::string country_code;
  double bandwidth_down_bps = 0.0;
  double bandwidth_up_bps = 0.0;
  double train_throughput_samples_per_s = 0.0;
  double dropout_prob = 0.0;
  int num_samples = 0;
  std::uint64_t data_seed = 0;
};

struct LogNormalSpec {
  double mu = 0.0;     // log-space mean
  double sigma = 0.0;  // log-space stddev
};

/// Recipe for a synthetic device population. Mixes are ordered lists so that
/// generation order, and therefore the population, is reproducible.
struct PopulationSpec {
  int num_devices = 0;
  std::vector<std::pair<std::string, double>> country_mix;       // code -> probability
  std::vector<std::pair<std::string, double>> device_model_mix;  // key -> probability
  LogNormalSpec bandwidth_down{std::log(5e6), 0.8};
  LogNormalSpec bandwidth_up{std::log(2e6), 0.8};
  LogNormalSpec throughput{std::log(20.0), 0.6};
  double samples_zipf_exponent = 1.6;
  std::uint32_t samples_zipf_max = 1000;
  double mean_samples_per_user = 34.0;
  double dropout_min = 0.0;
  double dropout_max = 0.0;
  std::uint64_t seed = 0;
};

namespace detail {

inline void check_mix(const std::vector<std::pair<std::string, double>>& mix,
                      const char* what) {
  if (mix.empty()) throw InvalidSpec(std::string(what) + " mix is empty");
  double sum = 0.0;
  for (const auto& [key, p] : mix) {
    if (p < 0) throw InvalidSpec(std::string(what) + " mix has negative probability");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw InvalidSpec(std::string(what) + " mix probabilities sum to " + std::to_string(sum));
}

inline const std::string& pick_mix(const std::vector<std::pair<std::string, double>>& mix,
                                   Rng& rng) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double acc = 0.0;
  for (const auto& [key, p] : mix) {
    acc += p;
    if (u <= acc) return key;
  }
  return mix.back().first;
}

}  // namespace detail

/// Deterministically expands a spec into devices. Samples-per-user follow a
/// bounded Zipf scaled so the expected count matches the configured mean;
/// country and model assignments follow the mixes.
inline std::vector<ClientDevice> generate_population(const PopulationSpec& spec) {
  if (spec.num_devices < 1) throw InvalidSpec("num_devices must be >= 1");
  detail::check_mix(spec.country_mix, "country");
  detail::check_mix(spec.device_model_mix, "device model");
  if (spec.dropout_min < 0 || spec.dropout_max > 1 || spec.dropout_min > spec.dropout_max)
    throw InvalidSpec("dropout range must satisfy 0 <= min <= max <= 1");
  if (spec.mean_samples_per_user < 1) throw InvalidSpec("mean samples per user must be >= 1");

  const BoundedZipf zipf(spec.samples_zipf_exponent, spec.samples_zipf_max);
  const double scale = spec.mean_samples_per_user / zipf.mean();
  Rng rng = make_rng(spec.seed, 0x9090);
  std::lognormal_distribution<double> bw_down(spec.bandwidth_down.mu, spec.bandwidth_down.sigma);
  std::lognormal_distribution<double> bw_up(spec.bandwidth_up.mu, spec.bandwidth_up.sigma);
  std::lognormal_distribution<double> tput(spec.throughput.mu, spec.throughput.sigma);
  std::uniform_real_distribution<double> dropout(spec.dropout_min, spec.dropout_max);

  std::vector<ClientDevice> devices;
  devices.reserve(spec.num_devices);
  for (int i = 0; i < spec.num_devices; ++i) {
    ClientDevice d;
    d.id = i;
    d.country_code = detail::pick_mix(spec.country_mix, rng);
    d.device_model_key = detail::pick_mix(spec.device_model_mix, rng);
    d.bandwidth_down_bps = bw_down(rng);
    d.bandwidth_up_bps = bw_up(rng);
    d.train_throughput_samples_per_s = tput(rng);
    d.dropout_prob = spec.dropout_min == spec.dropout_max ? spec.dropout_min : dropout(rng);
    const double z = static_cast<double>(zipf.sample(rng));
    d.num_samples = static_cast<int>(std::max(1.0, std::round(scale * z)));
    d.data_seed = derive_seed(spec.seed, 0xc11e47, static_cast<std::uint64_t>(i));
    devices.push_back(std::move(d));
  }
  return devices;
}

}  // namespace fedcarbon
