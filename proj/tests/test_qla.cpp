#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <vector>

#include "qlbayes/models.hpp"
#include "qlbayes/qla.hpp"
#include "qlbayes/rng.hpp"
#include "qlbayes/simulator.hpp"

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

ObservationSet scalar_obs(std::vector<double> xs, double h) {
  ObservationSet obs;
  obs.m = 1;
  obs.n = static_cast<long>(xs.size()) - 1;
  obs.h = h;
  obs.data = std::move(xs);
  return obs;
}

ObservationSet ou_path(long n, double h, std::uint64_t seed) {
  const auto ou = models::builtin_model("OU");
  return simulator::simulate_observations(ou, ou.default_truth,
                                          PathConfig(n, h, 10, seed));
}

}  // namespace

TEST_CASE("trivial contrast: zero drift, unit diffusion") {
  // a = 0, b = th1 with th1 = 1: H = -(1/2h) sum (dX)^2
  const auto m = models::make_table_model({0.0}, {1.0});
  const auto obs = scalar_obs({0.0, 0.3, -0.1, 0.2}, 0.5);
  double ss = 0;
  ss += (0.3 - 0.0) * (0.3 - 0.0);
  ss += (-0.1 - 0.3) * (-0.1 - 0.3);
  ss += (0.2 + 0.1) * (0.2 + 0.1);
  const double h = qla::contrast(m, obs, v1(1.0), v1(1.0));
  CHECK(h == doctest::Approx(-ss / (2 * 0.5)).epsilon(1e-14));
}

TEST_CASE("single observation closed form") {
  // OU, n = 1, h = 1, X = {0, 0}: e = 0, H = -log th1
  const auto ou = models::builtin_model("OU");
  const auto obs = scalar_obs({0.0, 0.0}, 1.0);
  CHECK(qla::contrast(ou, obs, v1(2.0), v1(1.0)) ==
        doctest::Approx(-std::log(2.0)).epsilon(1e-14));
  CHECK(qla::contrast(ou, obs, v1(1.0), v1(3.0)) == doctest::Approx(0.0));
}

TEST_CASE("five-point dataset matches a brute-force recomputation") {
  const auto ou = models::builtin_model("OU");
  const std::vector<double> xs = {0.0, 0.1, -0.05, 0.02, 0.03};
  const double h = 0.1, th1 = 1.0, th2 = 1.0;
  const auto obs = scalar_obs(std::vector<double>(xs), h);

  double brute = 0;
  for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
    const double a = -th2 * xs[i];
    const double B = th1 * th1;
    const double e = xs[i + 1] - xs[i] - h * a;
    brute += e * e / (h * B) + std::log(B);
  }
  brute *= -0.5;
  const double got = qla::contrast(ou, obs, v1(th1), v1(th2));
  CHECK(got == doctest::Approx(brute).epsilon(1e-12));

  // the generic (non-scalar) path agrees with the scalar fast path
  auto generic = ou;
  generic.scalar.reset();
  CHECK(qla::contrast(generic, obs, v1(th1), v1(th2)) ==
        doctest::Approx(brute).epsilon(1e-12));
}

TEST_CASE("contrast additivity over a split") {
  const auto ou = models::builtin_model("OU");
  const auto obs = ou_path(400, 0.05, 17);
  const long k = 160;
  std::vector<double> first(obs.data.begin(), obs.data.begin() + (k + 1));
  std::vector<double> second(obs.data.begin() + k, obs.data.end());
  const auto oa = scalar_obs(std::move(first), obs.h);
  const auto ob = scalar_obs(std::move(second), obs.h);
  const double whole = qla::contrast(ou, obs, v1(1.1), v1(0.9));
  const double parts = qla::contrast(ou, oa, v1(1.1), v1(0.9)) +
                       qla::contrast(ou, ob, v1(1.1), v1(0.9));
  CHECK(whole == doctest::Approx(parts).epsilon(1e-12));
}

TEST_CASE("OU drift gradient closed form") {
  const auto ou = models::builtin_model("OU");
  const auto obs = ou_path(300, 0.05, 5);
  const double th1 = 1.2, th2 = 0.7;
  const auto d = qla::contrast_with_derivatives(ou, obs, v1(th1), v1(th2));

  double g2 = 0;
  for (long i = 0; i < obs.n; ++i) {
    const double x = obs.scalar_state(i);
    const double dx = obs.scalar_state(i + 1) - x;
    g2 += -x * (dx + obs.h * th2 * x);
  }
  g2 /= th1 * th1;
  CHECK(d.grad2[0] == doctest::Approx(g2).epsilon(1e-10));
  CHECK(d.value == doctest::Approx(qla::contrast(ou, obs, v1(th1), v1(th2)))
                       .epsilon(1e-12));
}

TEST_CASE("gradient vanishes at the closed-form argmax") {
  const auto ou = models::builtin_model("OU");
  const auto obs = ou_path(2000, 0.02, 23);
  double sxd = 0, sxx = 0;
  for (long i = 0; i < obs.n; ++i) {
    const double x = obs.scalar_state(i);
    sxd += x * (obs.scalar_state(i + 1) - x);
    sxx += x * x;
  }
  const double th2_hat = -sxd / (obs.h * sxx);
  double ss = 0;
  for (long i = 0; i < obs.n; ++i) {
    const double x = obs.scalar_state(i);
    const double e = obs.scalar_state(i + 1) - x + obs.h * th2_hat * x;
    ss += e * e;
  }
  const double th1_hat = std::sqrt(ss / (obs.n * obs.h));
  const auto d =
      qla::contrast_with_derivatives(ou, obs, v1(th1_hat), v1(th2_hat));
  CHECK(std::abs(d.grad1[0]) < 1e-8 * (1.0 + std::abs(d.value)));
  CHECK(std::abs(d.grad2[0]) < 1e-8 * (1.0 + std::abs(d.value)));
  // observed information negative definite at the argmax
  CHECK(d.hess11(0, 0) < 0);
  CHECK(d.hess22(0, 0) < 0);
}

TEST_CASE("analytic and finite-difference derivatives agree") {
  int checked = 0;
  for (const char* name : {"OU", "BOU"}) {
    const auto model = models::builtin_model(name);
    for (int rep = 0; rep < 10; ++rep) {
      const rng::Counter c(rng::derive_seed({91, static_cast<std::uint64_t>(rep),
                                             name[0] == 'B' ? 1ULL : 0ULL}));
      const double th1 = 0.5 + 1.5 * c.uniform(0);
      const double th2 = 0.5 + 1.5 * c.uniform(1);
      const auto obs = simulator::simulate_observations(
          model, model.default_truth,
          PathConfig(200, 0.05, 5, rng::derive_seed({7, static_cast<std::uint64_t>(rep)})));
      const auto an = qla::contrast_with_derivatives(
          model, obs, v1(th1), v1(th2), qla::DerivativeMode::analytic);
      const auto fd = qla::contrast_with_derivatives(
          model, obs, v1(th1), v1(th2), qla::DerivativeMode::finite_difference);
      CHECK(an.value == doctest::Approx(fd.value).epsilon(1e-13));
      CHECK(an.grad1[0] ==
            doctest::Approx(fd.grad1[0]).epsilon(1e-6));
      CHECK(an.grad2[0] ==
            doctest::Approx(fd.grad2[0]).epsilon(1e-6));
      // second differences carry a ~1e-3 absolute roundoff floor at this
      // step size, so the hessian comparison is looser than the gradients
      CHECK(an.hess11(0, 0) ==
            doctest::Approx(fd.hess11(0, 0)).epsilon(1e-2));
      CHECK(an.hess22(0, 0) ==
            doctest::Approx(fd.hess22(0, 0)).epsilon(1e-2));
      CHECK(an.hess12(0, 0) ==
            doctest::Approx(fd.hess12(0, 0)).epsilon(1e-2));
      ++checked;
    }
  }
  CHECK(checked == 20);
}

TEST_CASE("log ratio field basics") {
  const auto ou = models::builtin_model("OU");
  const auto obs = ou_path(500, 0.05, 3);
  const auto sc = qla::Scaling::from(obs.n, obs.h);

  // u = 0 returns exactly zero
  CHECK(qla::log_ratio_field(ou, obs, 1, v1(1.0), v1(1.0), v1(0.0), sc) == 0.0);
  CHECK(qla::log_ratio_field(ou, obs, 2, v1(1.0), v1(1.0), v1(0.0), sc) == 0.0);

  // antisymmetry: shifting the anchor and negating u gives the exact negative
  const double u = 0.8;
  const double th1 = 1.0, shifted = th1 + u / sc.rate1;
  const double fwd = qla::log_ratio_field(ou, obs, 1, v1(th1), v1(1.0), v1(u), sc);
  const double bwd =
      qla::log_ratio_field(ou, obs, 1, v1(shifted), v1(1.0), v1(-u), sc);
  CHECK(fwd == doctest::Approx(-bwd).epsilon(1e-12));

  // pushing the parameter outside the box is a domain error
  CHECK_THROWS_AS(qla::log_ratio_field(ou, obs, 1, v1(4.99), v1(1.0),
                                       v1(10.0 * sc.rate1), sc),
                  box_error);
}

TEST_CASE("log ratio field is locally quadratic at scale") {
  const auto ou = models::builtin_model("OU");
  const auto obs = ou_path(10000, std::pow(10000.0, -0.6), 29);
  const auto sc = qla::Scaling::from(obs.n, obs.h);
  std::vector<double> us, vals;
  for (double u = -1.0; u <= 1.0001; u += 0.25) {
    us.push_back(u);
    vals.push_back(
        qla::log_ratio_field(ou, obs, 1, v1(1.0), v1(1.0), v1(u), sc));
  }
  // least squares fit c1 u + c2 u^2 (no constant term: field(0) = 0)
  double s2 = 0, s3 = 0, s4 = 0, b1 = 0, b2 = 0;
  for (std::size_t i = 0; i < us.size(); ++i) {
    const double u = us[i];
    s2 += u * u;
    s3 += u * u * u;
    s4 += u * u * u * u;
    b1 += u * vals[i];
    b2 += u * u * vals[i];
  }
  const double det = s2 * s4 - s3 * s3;
  const double c1 = (s4 * b1 - s3 * b2) / det;
  const double c2 = (s2 * b2 - s3 * b1) / det;
  double max_resid = 0, max_val = 0;
  for (std::size_t i = 0; i < us.size(); ++i) {
    const double fit = c1 * us[i] + c2 * us[i] * us[i];
    max_resid = std::max(max_resid, std::abs(fit - vals[i]));
    max_val = std::max(max_val, std::abs(vals[i]));
  }
  CHECK(max_resid < 0.10 * max_val);
  CHECK(c2 < 0);  // concave around the truth
}

TEST_CASE("observed information near the analytic values") {
  const auto ou = models::builtin_model("OU");
  const long n = 20000;
  const double h = std::pow(static_cast<double>(n), -0.6);
  const auto obs = simulator::simulate_observations(ou, ou.default_truth,
                                                    PathConfig(n, h, 10, 31));
  const auto sc = qla::Scaling::from(n, h);
  const auto oi = qla::observed_information(ou, obs, v1(1.0), v1(1.0),
                                            qla::DerivativeMode::automatic);
  CHECK(oi.gamma1_n(0, 0) == doctest::Approx(2.0).epsilon(0.10));
  CHECK(oi.gamma2_n(0, 0) == doctest::Approx(0.5).epsilon(0.15));
  (void)sc;
}

TEST_CASE("observed information on a zero-noise constant path") {
  // all states 0: e = 0, so only the -log det curvature survives and
  // hess11 = +n / th1^2, giving gamma1_n = -1/th1^2
  const auto ou = models::builtin_model("OU");
  const auto obs = simulator::simulate_observations(
      ou, ou.default_truth, PathConfig(50, 0.1, 1, 1, true));
  for (long i = 0; i <= obs.n; ++i) CHECK(obs.scalar_state(i) == 0.0);
  const auto oi = qla::observed_information(ou, obs, v1(1.0), v1(1.0));
  CHECK(oi.gamma1_n(0, 0) == doctest::Approx(-1.0).epsilon(1e-10));
}

TEST_CASE("cross-block coupling decays with n") {
  const auto ou = models::builtin_model("OU");
  std::vector<double> ratios;
  for (int rep = 0; rep < 20; ++rep) {
    auto max_c12 = [&](long n) {
      const double h = std::pow(static_cast<double>(n), -0.6);
      const auto obs = simulator::simulate_observations(
          ou, ou.default_truth,
          PathConfig(n, h, 5, rng::derive_seed({55, static_cast<std::uint64_t>(rep)})));
      double worst = 0;
      for (double t1 : {0.8, 1.0, 1.25})
        for (double t2 : {0.8, 1.0, 1.25}) {
          const auto d = qla::contrast_with_derivatives(ou, obs, v1(t1), v1(t2));
          worst = std::max(worst,
                           std::abs(d.hess12(0, 0)) / std::sqrt(static_cast<double>(n)));
        }
      return worst;
    };
    ratios.push_back(max_c12(10000) / max_c12(1000));
  }
  std::nth_element(ratios.begin(), ratios.begin() + ratios.size() / 2, ratios.end());
  CHECK(ratios[ratios.size() / 2] < 1.0);
}

TEST_CASE("scaling rates") {
  const auto sc = qla::Scaling::from(10000, 0.01);
  CHECK(sc.rate1 == doctest::Approx(100.0));
  CHECK(sc.rate2 == doctest::Approx(10.0));
}
