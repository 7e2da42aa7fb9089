#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <vector>

#include "qlbayes/models.hpp"
#include "qlbayes/rng.hpp"
#include "qlbayes/simulator.hpp"
#include "qlbayes/stats.hpp"

using namespace qlbayes;
using models::Vec;
using simulator::ObservationSet;
using simulator::PathConfig;

namespace {

Vec v1(double x) {
  Vec v(1);
  v[0] = x;
  return v;
}

models::TrueParameter truth(double th1, double th2, double x0) {
  models::TrueParameter t;
  t.theta1 = v1(th1);
  t.theta2 = v1(th2);
  t.x0 = v1(x0);
  return t;
}

}  // namespace

TEST_CASE("path config invariants") {
  CHECK_NOTHROW(PathConfig(1, 0.1, 1, 7));
  CHECK_THROWS_AS(PathConfig(0, 0.1, 1, 7), model_error);
  CHECK_THROWS_AS(PathConfig(10, 0.0, 1, 7), model_error);
  CHECK_THROWS_AS(PathConfig(10, 0.1, 0, 7), model_error);
}

TEST_CASE("zero-noise Euler step is exact") {
  const auto ou = models::builtin_model("OU");
  // x0 = 1, th2 = 1, h = 0.1, substeps = 1, n = 1: X_h = 1 - 0.1 = 0.9
  const auto obs = simulator::simulate_observations(
      ou, truth(1.0, 1.0, 1.0), PathConfig(1, 0.1, 1, 7, true));
  CHECK(obs.n == 1);
  CHECK(obs.scalar_state(0) == 1.0);
  CHECK(obs.scalar_state(1) == 0.9);
}

TEST_CASE("zero-noise recursion is bitwise stable") {
  const auto ou = models::builtin_model("OU");
  const auto a = simulator::simulate_observations(ou, truth(1.0, 0.8, 1.0),
                                                  PathConfig(50, 0.05, 4, 3, true));
  const auto b = simulator::simulate_observations(ou, truth(1.0, 0.8, 1.0),
                                                  PathConfig(50, 0.05, 4, 3, true));
  REQUIRE(a.data.size() == b.data.size());
  for (std::size_t i = 0; i < a.data.size(); ++i) CHECK(a.data[i] == b.data[i]);
  // explicit recursion oracle: x <- x (1 - th2 * delta) each fine step
  double x = 1.0;
  const double delta = 0.05 / 4;
  for (int k = 0; k < 4; ++k) x += delta * (-0.8 * x);
  CHECK(a.scalar_state(1) == doctest::Approx(x).epsilon(1e-15));
}

TEST_CASE("seed determinism and seed sensitivity") {
  const auto ou = models::builtin_model("OU");
  const auto t = ou.default_truth;
  const auto a = simulator::simulate_observations(ou, t, PathConfig(200, 0.05, 5, 11));
  const auto b = simulator::simulate_observations(ou, t, PathConfig(200, 0.05, 5, 11));
  REQUIRE(a.data.size() == b.data.size());
  for (std::size_t i = 0; i < a.data.size(); ++i) CHECK(a.data[i] == b.data[i]);

  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto p = simulator::simulate_observations(ou, t, PathConfig(200, 0.05, 5, s));
    const auto q =
        simulator::simulate_observations(ou, t, PathConfig(200, 0.05, 5, s + 1000));
    long first_diff = -1;
    for (long i = 1; i <= p.n && first_diff < 0; ++i)
      if (p.scalar_state(i) != q.scalar_state(i)) first_diff = i;
    CHECK(first_diff >= 1);
    CHECK(first_diff <= 100);
  }
}

TEST_CASE("explosion reports the step index") {
  // unstable cubic drift pushed from a large start explodes quickly
  auto m = models::builtin_model("OU");
  m.scalar.reset();
  m.drift = [](const models::VecRef& x, const models::VecRef& th2,
               Eigen::Ref<Vec> out) { out[0] = th2[0] * x[0] * x[0] * x[0]; };
  try {
    simulator::simulate_observations(m, truth(1.0, 1.0, 10.0),
                                     PathConfig(5, 1.0, 1, 1, true));
    FAIL("expected explosion_error");
  } catch (const explosion_error& e) {
    CHECK(e.step_index >= 1);
    CHECK(std::string(e.what()).find("step") != std::string::npos) ;
  }
}

TEST_CASE("OU stationary variance reached at scale") {
  const auto ou = models::builtin_model("OU");
  const auto obs = simulator::simulate_observations(ou, ou.default_truth,
                                                    PathConfig(100000, 0.05, 10, 21));
  std::vector<double> xs(obs.data.begin(), obs.data.end());
  const double var = stats::variance(xs);
  CHECK(var == doctest::Approx(0.5).epsilon(0.05));
}

TEST_CASE("long path time-averages") {
  const auto ou = models::builtin_model("OU");
  const auto path = simulator::simulate_long_path(ou, ou.default_truth, 5000.0, 0.01, 5);
  std::vector<double> xs(path.data.begin(), path.data.end());
  CHECK(std::abs(stats::mean(xs)) < 0.05);

  CHECK_THROWS_AS(simulator::simulate_long_path(ou, ou.default_truth, 0.0, 0.01, 5),
                  model_error);

  const auto bou = models::builtin_model("BOU");
  auto x2mean = [&](std::uint64_t seed) {
    const auto p = simulator::simulate_long_path(bou, bou.default_truth, 5000.0, 0.01, seed);
    double acc = 0;
    for (double x : p.data) acc += x * x;
    return acc / static_cast<double>(p.data.size());
  };
  const double m1 = x2mean(1), m2 = x2mean(2);
  CHECK(std::isfinite(m1));
  CHECK(std::abs(m1 - m2) / m1 < 0.10);
}

TEST_CASE("csv round trip is bit exact") {
  const auto ou = models::builtin_model("OU");
  const auto obs = simulator::simulate_observations(ou, ou.default_truth,
                                                    PathConfig(137, 0.05, 3, 9));
  const std::string path =
      (std::filesystem::temp_directory_path() / "qlbayes_roundtrip.csv").string();
  simulator::save_csv(obs, path);
  const auto back = simulator::load_csv(path);
  CHECK(back.n == obs.n);
  CHECK(back.m == obs.m);
  CHECK(back.h == obs.h);  // exact: h reloads as t1 - t0
  REQUIRE(back.data.size() == obs.data.size());
  for (std::size_t i = 0; i < obs.data.size(); ++i) CHECK(back.data[i] == obs.data[i]);
  std::remove(path.c_str());
}

TEST_CASE("csv loader rejects malformed input") {
  namespace fs = std::filesystem;
  const std::string dir = fs::temp_directory_path().string();
  auto write = [&](const std::string& name, const std::string& text) {
    const std::string p = dir + "/" + name;
    std::FILE* f = std::fopen(p.c_str(), "w");
    REQUIRE(f != nullptr);
    std::fputs(text.c_str(), f);
    std::fclose(f);
    return p;
  };
  CHECK_THROWS_AS(simulator::load_csv(dir + "/definitely_missing.csv"), model_error);

  const auto bad_header = write("qlb_bad_header.csv", "a,b\n0,1\n");
  CHECK_THROWS_AS(simulator::load_csv(bad_header), model_error);

  const auto bad_cols = write("qlb_bad_cols.csv", "t,x_1\n0,1\n0.1,2,3\n");
  CHECK_THROWS_AS(simulator::load_csv(bad_cols), model_error);

  const auto bad_num = write("qlb_bad_num.csv", "t,x_1\n0,1\n0.1,zzz\n");
  try {
    simulator::load_csv(bad_num);
    FAIL("expected model_error");
  } catch (const model_error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("qlb_bad_num.csv") != std::string::npos);
    CHECK(msg.find("3") != std::string::npos);  // line number
  }
  std::remove(bad_header.c_str());
  std::remove(bad_cols.c_str());
  std::remove(bad_num.c_str());
}

TEST_CASE("strong Euler error decays like sqrt(delta)") {
  // Reference and coarse recursions share one Brownian path: the coarse
  // increment over a cell is the sum of the fine increments inside it.
  const auto bou = models::builtin_model("BOU");
  const double h = 0.25;
  const long n_obs = 8;
  const int ref_sub = 256;
  const std::vector<int> subs = {1, 2, 4, 8, 16};
  const int paths = 100;

  std::vector<double> rms(subs.size(), 0.0);
  for (int p = 0; p < paths; ++p) {
    const rng::Counter noise(rng::derive_seed({99, static_cast<std::uint64_t>(p)}));
    const long fine_total = n_obs * ref_sub;
    const double delta_ref = h / ref_sub;
    std::vector<double> dw(fine_total);
    for (long k = 0; k < fine_total; ++k)
      dw[k] = std::sqrt(delta_ref) * noise.gauss(static_cast<std::uint64_t>(k));

    auto euler = [&](int sub) {
      const double delta = h / sub;
      const int group = ref_sub / sub;
      double x = 0.0;
      const double th1 = 1.0, th2 = 1.0;
      long k = 0;
      for (long i = 0; i < n_obs; ++i) {
        for (int s = 0; s < sub; ++s) {
          double inc = 0.0;
          for (int g = 0; g < group; ++g) inc += dw[k++];
          const double a = -th2 * x;
          const double b = th1 * (2.0 + std::cos(x)) / 2.0;
          x += delta * a + b * inc;
        }
      }
      return x;
    };

    const double ref = euler(ref_sub);
    for (std::size_t j = 0; j < subs.size(); ++j) {
      const double d = euler(subs[j]) - ref;
      rms[j] += d * d;
    }
  }
  // least-squares slope of log RMS vs log delta
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t j = 0; j < subs.size(); ++j) {
    const double x = std::log(h / subs[j]);
    const double y = 0.5 * std::log(rms[j] / paths);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double m = static_cast<double>(subs.size());
  const double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  CHECK(slope > 0.3);
  CHECK(slope < 0.7);
}
