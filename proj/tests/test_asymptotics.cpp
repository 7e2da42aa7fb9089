#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>
#include <vector>

#include "qlbayes/asymptotics.hpp"
#include "qlbayes/models.hpp"
#include "qlbayes/simulator.hpp"

using namespace qlbayes;
using asymptotics::InvariantMeasure;
using models::Vec;

namespace {

Vec v1(double x) {
  Vec v(1);
  v[0] = x;
  return v;
}

}  // namespace

TEST_CASE("analytic measure on a hand density") {
  // unnormalized exp(-x^2) integrates to sqrt(pi)
  const auto m = InvariantMeasure::analytic(
      [](double x) { return std::exp(-x * x); }, -6.0, 6.0, false);
  const double norm = 1.0 / std::sqrt(std::numbers::pi);
  for (double x : {-1.3, -0.2, 0.0, 0.3, 2.4})
    CHECK(m.density(x) == doctest::Approx(norm * std::exp(-x * x)).epsilon(1e-8));
  CHECK(m.expect([](double) { return 1.0; }) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(m.expect([](double x) { return x * x; }) ==
        doctest::Approx(0.5).epsilon(1e-8));  // variance of N(0, 1/2)
  CHECK(m.density(100.0) == 0.0);             // outside support
}

TEST_CASE("analytic measure rejects bad densities") {
  CHECK_THROWS_AS(InvariantMeasure::analytic([](double x) { return -x; }, -1.0,
                                             1.0, false),
                  not_ergodic_error);
  // constant positive density never stops gaining mass under growth
  CHECK_THROWS_AS(InvariantMeasure::analytic([](double) { return 1.0; }, -1.0,
                                             1.0, true),
                  not_ergodic_error);
}

TEST_CASE("empirical measure basics") {
  std::vector<double> states(1000);
  for (std::size_t i = 0; i < states.size(); ++i)
    states[i] = static_cast<double>(i) / 999.0;
  const auto m = InvariantMeasure::empirical(states);
  CHECK(m.kind() == InvariantMeasure::Kind::empirical);
  CHECK(m.expect([](double x) { return x; }) == doctest::Approx(0.5).epsilon(1e-3));
  CHECK_THROWS_AS(InvariantMeasure::empirical({1.0, 2.0}), not_ergodic_error);
}

TEST_CASE("OU stationary density is the closed-form normal") {
  const auto ou = models::builtin_model("OU");
  const auto m = asymptotics::invariant_density_1d(ou, ou.default_truth);
  // N(0, 1/2): p(x) = exp(-x^2) / sqrt(pi)
  const double norm = 1.0 / std::sqrt(std::numbers::pi);
  for (double x = -4.0; x <= 4.0; x += 0.5)
    CHECK(m.density(x) == doctest::Approx(norm * std::exp(-x * x)).epsilon(1e-8));
  CHECK(m.expect([](double x) { return x * x; }) ==
        doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("speed-measure construction agrees with the closed form") {
  auto ou = models::builtin_model("OU");
  ou.stationary_density = nullptr;  // force the generic path
  ou.stationary_support = nullptr;
  const auto m = asymptotics::invariant_density_1d(ou, ou.default_truth);
  const double norm = 1.0 / std::sqrt(std::numbers::pi);
  for (double x = -3.0; x <= 3.0; x += 0.5)
    CHECK(m.density(x) == doctest::Approx(norm * std::exp(-x * x)).epsilon(1e-6));
  CHECK(m.expect([](double x) { return x * x; }) ==
        doctest::Approx(0.5).epsilon(1e-5));
}

TEST_CASE("BOU stationary density is symmetric and normalized") {
  const auto bou = models::builtin_model("BOU");
  const auto m = asymptotics::invariant_density_1d(bou, bou.default_truth);
  CHECK(m.expect([](double) { return 1.0; }) == doctest::Approx(1.0).epsilon(1e-6));
  for (double x : {0.3, 0.9, 1.7, 2.5})
    CHECK(m.density(x) == doctest::Approx(m.density(-x)).epsilon(1e-6));
  CHECK(m.expect([](double x) { return x; }) == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("non-ergodic drift is rejected") {
  // a = +th2 x pushes mass outward; the speed measure diverges
  const auto bad = models::make_table_model({0.0, -1.0}, {1.0, 0.0});
  models::TrueParameter t;
  t.theta1 = v1(1.0);
  t.theta2 = v1(1.0);
  t.x0 = v1(0.0);
  CHECK_THROWS_AS(asymptotics::invariant_density_1d(bad, t), not_ergodic_error);
}

TEST_CASE("empirical and analytic measures agree at scale") {
  const auto ou = models::builtin_model("OU");
  const auto path = simulator::simulate_long_path(ou, ou.default_truth, 5000.0, 0.01, 13);
  const auto emp = asymptotics::empirical_measure(path);
  const auto ana = asymptotics::invariant_density_1d(ou, ou.default_truth);
  auto x2 = [](double x) { return x * x; };
  CHECK(emp.expect(x2) == doctest::Approx(ana.expect(x2)).epsilon(0.05));
}

TEST_CASE("information matrices at the OU truth") {
  const auto ou = models::builtin_model("OU");
  const auto m = asymptotics::invariant_density_1d(ou, ou.default_truth);
  const auto info = asymptotics::gamma_matrices(ou, ou.default_truth, m);
  CHECK(info.gamma1(0, 0) == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(info.gamma2(0, 0) == doctest::Approx(0.5).epsilon(1e-6));

  const auto cov = asymptotics::limit_covariance(info);
  CHECK(cov.rows() == 2);
  CHECK(cov(0, 0) == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(cov(1, 1) == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(cov(0, 1) == 0.0);
}

TEST_CASE("BOU gamma1 is state free") {
  // b = th1 (2 + cos x)/2: dB/dth1 * B^-1 = 2/th1 for every x, so
  // gamma1 = 2/th1^2 exactly, independent of the invariant law
  const auto bou = models::builtin_model("BOU");
  const auto m = asymptotics::invariant_density_1d(bou, bou.default_truth);
  const auto info = asymptotics::gamma_matrices(bou, bou.default_truth, m);
  CHECK(info.gamma1(0, 0) == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(info.gamma2(0, 0) > 0);
}

TEST_CASE("gamma matrices from an empirical measure") {
  const auto ou = models::builtin_model("OU");
  const auto path = simulator::simulate_long_path(ou, ou.default_truth, 5000.0, 0.01, 37);
  const auto emp = asymptotics::empirical_measure(path);
  const auto info = asymptotics::gamma_matrices(ou, ou.default_truth, emp);
  CHECK(info.gamma1(0, 0) == doctest::Approx(2.0).epsilon(0.05));
  CHECK(info.gamma2(0, 0) == doctest::Approx(0.5).epsilon(0.05));
}

TEST_CASE("limit covariance requires positive-definite information") {
  asymptotics::InformationMatrices info;
  info.gamma1 = models::Mat::Zero(1, 1);
  info.gamma2 = models::Mat::Identity(1, 1);
  CHECK_THROWS_AS(asymptotics::limit_covariance(info), identifiability_error);
}

TEST_CASE("identifiability scan on OU") {
  const auto ou = models::builtin_model("OU");
  const auto m = asymptotics::invariant_density_1d(ou, ou.default_truth);
  const auto rep = asymptotics::identifiability_scan(ou, ou.default_truth, m);
  CHECK(rep.identifiable);
  CHECK(rep.max_y1_off < 0);
  CHECK(rep.max_y2_off < 0);
  CHECK(rep.chi2 == doctest::Approx(0.25).epsilon(0.05));
  // chi1 for OU attains its minimum at the far box edge th1 = 5:
  // 0.5 (1/25 - 1 + log 25) / 16
  const double chi1_ref = 0.5 * (1.0 / 25.0 - 1.0 + std::log(25.0)) / 16.0;
  CHECK(rep.chi1 == doctest::Approx(chi1_ref).epsilon(0.02));

  // closed forms hold at every scan point
  REQUIRE(rep.grid1.size() == rep.y1.size());
  for (std::size_t i = 0; i < rep.grid1.size(); ++i) {
    const double t = rep.grid1[i][0];
    const double expected = -0.5 * (1.0 / (t * t) - 1.0 + std::log(t * t));
    CHECK(rep.y1[i] == doctest::Approx(expected).epsilon(1e-6));
  }
  for (std::size_t i = 0; i < rep.grid2.size(); ++i) {
    const double t = rep.grid2[i][0];
    const double expected = -0.25 * (t - 1.0) * (t - 1.0);
    CHECK(rep.y2[i] == doctest::Approx(expected).epsilon(1e-6));
  }
}

TEST_CASE("theta2-free drift breaks stage-2 identifiability") {
  // a = -x for every th2: Y2 vanishes identically but the law stays ergodic
  auto flat = models::builtin_model("OU");
  flat.drift = [](const models::VecRef& x, const models::VecRef&,
                  Eigen::Ref<Vec> out) { out[0] = -x[0]; };
  flat.drift_jac = [](const models::VecRef&, const models::VecRef&,
                      Eigen::Ref<models::Mat> out) { out(0, 0) = 0.0; };
  flat.drift_hess = [](const models::VecRef&, const models::VecRef&, int, int,
                       Eigen::Ref<Vec> out) { out[0] = 0.0; };
  flat.scalar->drift = [](double x, double) { return -x; };
  flat.scalar->drift_dth = [](double, double) { return 0.0; };
  flat.scalar->drift_dth2 = [](double, double) { return 0.0; };
  const auto m = asymptotics::invariant_density_1d(flat, flat.default_truth);
  const auto rep = asymptotics::identifiability_scan(flat, flat.default_truth, m);
  CHECK(!rep.identifiable);
  CHECK(rep.max_y2_off == doctest::Approx(0.0));
}
