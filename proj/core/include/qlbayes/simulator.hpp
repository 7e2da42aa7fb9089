#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qlbayes/models.hpp"

namespace qlbayes::simulator {

using models::DiffusionModel;
using models::TrueParameter;
using models::Vec;
using models::VecRef;

// Validated at construction: n >= 1, h > 0, substeps >= 1.
struct PathConfig {
  long n = 1;
  double h = 0.1;
  int substeps = 10;
  std::uint64_t seed = 1;
  bool zero_noise = false;  // debug: deterministic Euler recursion

  PathConfig(long n_, double h_, int substeps_ = 10, std::uint64_t seed_ = 1,
             bool zero_noise_ = false);
};

// n+1 recorded states of dimension m, flat row-major storage.
struct ObservationSet {
  int m = 1;
  long n = 0;
  double h = 0;
  std::vector<double> data;  // (n+1) * m

  Eigen::Map<const Vec> state(long i) const {
    return Eigen::Map<const Vec>(data.data() + i * m, m);
  }
  double scalar_state(long i) const { return data[i]; }
  long rows() const { return n + 1; }
};

// Euler-Maruyama on the fine grid delta = h/substeps; every substeps-th point
// is recorded.  Gaussian increments come from a counter-based stream keyed by
// cfg.seed, so the result is a pure function of (model, truth, cfg).
ObservationSet simulate_observations(const DiffusionModel& model,
                                     const TrueParameter& truth,
                                     const PathConfig& cfg);

// Single long trajectory at the given step after discarding a burn-in prefix
// (default first 10% of steps); input for ergodic time-averaging.
ObservationSet simulate_long_path(const DiffusionModel& model,
                                  const TrueParameter& truth,
                                  double total_time, double step,
                                  std::uint64_t seed,
                                  double burn_in_fraction = 0.1);

// CSV round trip: header "t,x_1..x_m", shortest round-trip decimals, values
// reload bit-exactly.
void save_csv(const ObservationSet& obs, const std::string& path);
ObservationSet load_csv(const std::string& path);

}  // namespace qlbayes::simulator
