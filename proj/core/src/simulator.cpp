#include "qlbayes/simulator.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "qlbayes/rng.hpp"

namespace qlbayes::simulator {

namespace {

constexpr double kExplosionBound = 1e8;

void check_truth(const DiffusionModel& model, const TrueParameter& truth) {
  if (truth.theta1.size() != model.d1() || truth.theta2.size() != model.d2())
    throw model_error("true parameter dimensions do not match the model");
  if (truth.x0.size() != model.m)
    throw model_error("initial state dimension does not match the model");
  if (!model.theta1_box.contains(truth.theta1) ||
      !model.theta2_box.contains(truth.theta2))
    throw model_error("true parameter lies outside the parameter box");
}

std::string chars(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

PathConfig::PathConfig(long n_, double h_, int substeps_, std::uint64_t seed_,
                       bool zero_noise_)
    : n(n_), h(h_), substeps(substeps_), seed(seed_), zero_noise(zero_noise_) {
  if (n < 1) throw model_error("path config: n must be >= 1");
  if (!(h > 0) || !std::isfinite(h)) throw model_error("path config: h must be > 0");
  if (substeps < 1) throw model_error("path config: substeps must be >= 1");
}

ObservationSet simulate_observations(const DiffusionModel& model,
                                     const TrueParameter& truth,
                                     const PathConfig& cfg) {
  check_truth(model, truth);
  const double delta = cfg.h / cfg.substeps;
  const double sq_delta = std::sqrt(delta);
  rng::Counter noise(cfg.seed);

  ObservationSet obs;
  obs.m = model.m;
  obs.n = cfg.n;
  obs.h = cfg.h;
  obs.data.reserve((cfg.n + 1) * model.m);

  if (model.scalar && model.m == 1 && model.r == 1) {
    const auto& sc = *model.scalar;
    const double th1 = truth.theta1[0], th2 = truth.theta2[0];
    double x = truth.x0[0];
    obs.data.push_back(x);
    std::uint64_t fine = 0;
    for (long i = 0; i < cfg.n; ++i) {
      for (int s = 0; s < cfg.substeps; ++s, ++fine) {
        const double a = sc.drift(x, th2);
        const double b = cfg.zero_noise ? 0.0 : sc.diff(x, th1);
        const double dw = cfg.zero_noise ? 0.0 : sq_delta * noise.gauss(fine);
        x += delta * a + b * dw;
        if (!std::isfinite(x) || std::abs(x) > kExplosionBound)
          throw explosion_error("simulated path exploded", i * cfg.substeps + s);
      }
      obs.data.push_back(x);
    }
    return obs;
  }

  Vec x = truth.x0;
  Vec a(model.m);
  models::Mat b(model.m, model.r);
  Vec xi(model.r);
  for (int c = 0; c < model.m; ++c) obs.data.push_back(x[c]);
  std::uint64_t fine = 0;
  for (long i = 0; i < cfg.n; ++i) {
    for (int s = 0; s < cfg.substeps; ++s, ++fine) {
      model.drift(x, truth.theta2, a);
      if (cfg.zero_noise) {
        x += delta * a;
      } else {
        model.diffusion(x, truth.theta1, b);
        for (int c = 0; c < model.r; ++c)
          xi[c] = noise.gauss(fine * model.r + c);
        x += delta * a + sq_delta * (b * xi);
      }
      if (!x.allFinite() || x.cwiseAbs().maxCoeff() > kExplosionBound)
        throw explosion_error("simulated path exploded", i * cfg.substeps + s);
    }
    for (int c = 0; c < model.m; ++c) obs.data.push_back(x[c]);
  }
  return obs;
}

ObservationSet simulate_long_path(const DiffusionModel& model,
                                  const TrueParameter& truth, double total_time,
                                  double step, std::uint64_t seed,
                                  double burn_in_fraction) {
  if (!(total_time > 0) || !(step > 0) || step > total_time)
    throw model_error("long path: need 0 < step <= total_time");
  if (burn_in_fraction < 0 || burn_in_fraction >= 1)
    throw model_error("long path: burn-in fraction must be in [0, 1)");
  const long total_steps = static_cast<long>(std::llround(total_time / step));
  const long burn = static_cast<long>(total_steps * burn_in_fraction);
  const long keep = total_steps - burn;
  if (keep < 2) throw model_error("long path: too few steps after burn-in");

  // One pass over the whole trajectory, recording only the tail.
  PathConfig cfg(total_steps, step, 1, seed, false);
  ObservationSet full = simulate_observations(model, truth, cfg);
  ObservationSet obs;
  obs.m = model.m;
  obs.n = keep;
  obs.h = step;
  obs.data.assign(full.data.begin() + burn * model.m, full.data.end());
  return obs;
}

void save_csv(const ObservationSet& obs, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw model_error("cannot open output file '" + path + "'");
  out << "t";
  for (int c = 1; c <= obs.m; ++c) out << ",x_" << c;
  out << "\n";
  for (long i = 0; i <= obs.n; ++i) {
    out << chars(static_cast<double>(i) * obs.h);
    for (int c = 0; c < obs.m; ++c) out << "," << chars(obs.data[i * obs.m + c]);
    out << "\n";
  }
  if (!out) throw model_error("failed writing data file '" + path + "'");
}

ObservationSet load_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw model_error("cannot open data file '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw model_error("data file '" + path + "' is empty");
  if (line.rfind("t,", 0) != 0)
    throw model_error("data file '" + path + "': header must start with \"t,\"");
  int m = 0;
  for (char ch : line)
    if (ch == ',') ++m;

  std::vector<double> ts;
  std::vector<double> data;
  long lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const char* p = line.data();
    const char* end = p + line.size();
    double t;
    auto res = std::from_chars(p, end, t);
    if (res.ec != std::errc{})
      throw model_error("data file '" + path + "': bad number at line " +
                        std::to_string(lineno));
    p = res.ptr;
    ts.push_back(t);
    for (int c = 0; c < m; ++c) {
      if (p == end || *p != ',')
        throw model_error("data file '" + path + "': expected " +
                          std::to_string(m + 1) + " columns at line " +
                          std::to_string(lineno));
      ++p;
      double v;
      res = std::from_chars(p, end, v);
      if (res.ec != std::errc{})
        throw model_error("data file '" + path + "': bad number at line " +
                          std::to_string(lineno));
      p = res.ptr;
      data.push_back(v);
    }
    if (p != end)
      throw model_error("data file '" + path + "': trailing characters at line " +
                        std::to_string(lineno));
  }
  if (ts.size() < 2)
    throw model_error("data file '" + path + "': needs at least 2 rows");

  ObservationSet obs;
  obs.m = m;
  obs.n = static_cast<long>(ts.size()) - 1;
  obs.h = ts[1] - ts[0];
  if (!(obs.h > 0))
    throw model_error("data file '" + path + "': time column must increase");
  obs.data = std::move(data);
  return obs;
}

}  // namespace qlbayes::simulator
