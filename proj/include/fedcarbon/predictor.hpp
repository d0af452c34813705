#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "fedcarbon/errors.hpp"
#include "fedcarbon/sim.hpp"

namespace fedcarbon {

/// One sweep row reduced to what the linear carbon model consumes.
struct RunSummary {
  Mode mode = Mode::sync;
  int concurrency = 0;
  double rounds = 0.0;
  double hours = 0.0;
  double co2e_client_compute_kg = 0.0;
  double co2e_upload_kg = 0.0;
  double co2e_download_kg = 0.0;
  double co2e_server_kg = 0.0;
  double co2e_total_kg = 0.0;
};

enum class FitComponent { client_compute, upload, download, total };

inline const char* component_name(FitComponent c) {
  switch (c) {
    case FitComponent::client_compute: return "client_compute";
    case FitComponent::upload: return "upload";
    case FitComponent::download: return "download";
    case FitComponent::total: return "total";
  }
  return "total";
}

inline double component_value(const RunSummary& s, FitComponent c) {
  switch (c) {
    case FitComponent::client_compute: return s.co2e_client_compute_kg;
    case FitComponent::upload: return s.co2e_upload_kg;
    case FitComponent::download: return s.co2e_download_kg;
    case FitComponent::total: return s.co2e_total_kg;
  }
  return s.co2e_total_kg;
}

/// The regressor: concurrency times rounds for sync runs, concurrency times
/// wall hours for async runs.
inline double predictor_x(const RunSummary& s) {
  return s.concurrency * (s.mode == Mode::sync ? s.rounds : s.hours);
}

struct RegressionFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  long n_points = 0;
};

/// Ordinary least squares of component CO2e on the mode's concurrency
/// product. through_origin forces a zero intercept for sensitivity checks.
inline RegressionFit fit_carbon_model(const std::vector<RunSummary>& summaries,
                                      FitComponent component,
                                      bool through_origin = false) {
  if (summaries.size() < 2) throw DegenerateX("need at least 2 points");
  const Mode mode = summaries.front().mode;
  for (const RunSummary& s : summaries)
    if (s.mode != mode) throw MixedModes();

  std::vector<double> xs, ys;
  xs.reserve(summaries.size());
  ys.reserve(summaries.size());
  for (const RunSummary& s : summaries) {
    xs.push_back(predictor_x(s));
    ys.push_back(component_value(s, component));
  }
  const double n = static_cast<double>(xs.size());
  const double x_mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double y_mean = std::accumulate(ys.begin(), ys.end(), 0.0) / n;

  RegressionFit fit;
  fit.n_points = static_cast<long>(xs.size());
  if (through_origin) {
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      sxx += xs[i] * xs[i];
      sxy += xs[i] * ys[i];
    }
    if (sxx == 0.0) throw DegenerateX("all x values are zero");
    fit.slope = sxy / sxx;
    fit.intercept = 0.0;
  } else {
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      sxx += (xs[i] - x_mean) * (xs[i] - x_mean);
      sxy += (xs[i] - x_mean) * (ys[i] - y_mean);
    }
    if (sxx == 0.0) throw DegenerateX("all x values are equal");
    fit.slope = sxy / sxx;
    fit.intercept = y_mean - fit.slope * x_mean;
  }

  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double pred = fit.slope * xs[i] + fit.intercept;
    ss_res += (ys[i] - pred) * (ys[i] - pred);
    ss_tot += (ys[i] - y_mean) * (ys[i] - y_mean);
  }
  fit.r_squared = ss_tot == 0.0 ? 1.0 : std::max(0.0, 1.0 - ss_res / ss_tot);
  return fit;
}

/// Forecast for a planned run; emissions cannot be negative, so the line is
/// clamped at zero.
inline double predict_emissions(const RegressionFit& fit, double concurrency,
                                double rounds_or_hours) {
  return std::max(0.0, fit.slope * (concurrency * rounds_or_hours) + fit.intercept);
}

}  // namespace fedcarbon
