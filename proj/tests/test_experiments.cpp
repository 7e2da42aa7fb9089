#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <string>
#include <vector>

#include "qlbayes/experiments.hpp"
#include "qlbayes/rng.hpp"

using namespace qlbayes;
using experiments::Cell;
using experiments::LossPair;
using experiments::McConfig;
using experiments::McReport;
using experiments::NRun;
using experiments::PolyMoment;
using models::Mat;

namespace {

LossPair pair_of(const std::string& spec1, const std::string& spec2) {
  LossPair p;
  p.w1 = loss::parse_loss(spec1, 1);
  p.w2 = loss::parse_loss(spec2, 1);
  p.id = p.w1.id + "+" + p.w2.id;
  return p;
}

McConfig small_config() {
  McConfig cfg;
  cfg.model = "OU";
  cfg.n_list = {200, 400};
  cfg.replicates = 50;
  cfg.losses = {pair_of("power:2", "power:2"), pair_of("power:1", "power:1")};
  cfg.base_seed = 9;
  cfg.substeps = 3;
  return cfg;
}

// synthetic gaussian scaled errors with the OU limit variances
Cell gaussian_cell(long R, std::uint64_t seed, double jitter) {
  rng::Counter g(seed, 0);
  Cell cell;
  for (long r = 0; r < R; ++r) {
    const auto c = static_cast<std::uint64_t>(4 * r);
    const double u1 = std::sqrt(0.5) * g.gauss(c) + jitter * g.gauss(c + 1);
    const double u2 = std::sqrt(2.0) * g.gauss(c + 2) + jitter * g.gauss(c + 3);
    cell.u.push_back({u1, u2});
    cell.kept.push_back(r);
  }
  return cell;
}

Mat ou_limit_cov() {
  Mat m = Mat::Zero(2, 2);
  m(0, 0) = 0.5;
  m(1, 1) = 2.0;
  return m;
}

}  // namespace

TEST_CASE("config validation messages") {
  McConfig cfg = small_config();
  CHECK_NOTHROW(cfg.validate());

  cfg.gamma = 0.4;
  CHECK_THROWS_WITH_AS(cfg.validate(), "gamma must be in (0.5, 1)", model_error);
  cfg.gamma = 1.0;
  CHECK_THROWS_AS(cfg.validate(), model_error);
  cfg.gamma = 0.6;

  cfg.replicates = 10;
  CHECK_THROWS_WITH_AS(cfg.validate(), "replicates must be >= 50", model_error);
  cfg.replicates = 50;

  cfg.n_list = {400, 400};
  CHECK_THROWS_WITH_AS(cfg.validate(), "n_list must be strictly increasing",
                       model_error);
  cfg.n_list = {};
  CHECK_THROWS_WITH_AS(cfg.validate(), "n_list must not be empty", model_error);
  cfg.n_list = {5, 400};
  CHECK_THROWS_WITH_AS(cfg.validate(), "every n must be >= 10", model_error);
  cfg.n_list = {200, 400};

  cfg.substeps = 0;
  CHECK_THROWS_AS(cfg.validate(), model_error);
  cfg.substeps = 3;
  cfg.grid_nodes = -1;
  CHECK_THROWS_AS(cfg.validate(), model_error);
  cfg.grid_nodes = 0;
  cfg.threads = -1;
  CHECK_THROWS_AS(cfg.validate(), model_error);
  cfg.threads = 0;

  PolyMoment bad;
  bad.id = "deg5";
  bad.terms.push_back({1.0, {5, 0}});
  cfg.moments = {bad};
  CHECK_THROWS_AS(cfg.validate(), model_error);
  bad.id = "neg";
  bad.terms = {{1.0, {-1, 0}}};
  cfg.moments = {bad};
  CHECK_THROWS_AS(cfg.validate(), model_error);
  bad.id = "empty";
  bad.terms.clear();
  cfg.moments = {bad};
  CHECK_THROWS_AS(cfg.validate(), model_error);
}

TEST_CASE("small monte carlo run has the advertised shape") {
  const McConfig cfg = small_config();
  const McReport rep = experiments::run_monte_carlo(cfg);

  REQUIRE(rep.runs.size() == 2);
  CHECK(rep.runs[0].n == 200);
  CHECK(rep.runs[1].n == 400);
  CHECK(rep.runs[0].h == doctest::Approx(std::pow(200.0, -0.6)).epsilon(1e-12));
  CHECK(rep.limit_cov(0, 0) == doctest::Approx(0.5).epsilon(1e-4));
  CHECK(rep.limit_cov(1, 1) == doctest::Approx(2.0).epsilon(1e-4));
  CHECK(rep.limit_cov(0, 1) == 0.0);

  for (const auto& run : rep.runs) {
    REQUIRE(run.bayes.size() == 2);
    CHECK(static_cast<long>(run.qmle.kept.size()) + run.qmle.failures == 50);
    CHECK(run.qmle.failures == 0);
    CHECK(run.qmle.u.size() == run.qmle.kept.size());
    CHECK(run.qmle.stats.mean.size() == 2);
    CHECK(run.qmle.stats.disc_vs_qmle.empty());
    for (const auto& cell : run.bayes) {
      CHECK(cell.u.size() == cell.kept.size());
      CHECK(cell.stats.disc_vs_qmle.size() == 2);
      CHECK(cell.stats.disc_vs_qmle[0] > 0.0);
      CHECK(!cell.invalid);
      for (const auto& u : cell.u) CHECK(u.size() == 2);
    }
  }

  // the Bayes/QMLE discrepancy shrinks from n=200 to n=400 for power:2
  CHECK(rep.runs[1].bayes[0].stats.disc_vs_qmle[0] <
        rep.runs[0].bayes[0].stats.disc_vs_qmle[0] * 1.5);

  SUBCASE("loss-independence rows and ks entries") {
    const auto t1 = experiments::loss_independence_check(rep);
    CHECK(t1.rows.size() == 6);  // pairs (a,b), (a,qmle), (b,qmle) x 2 coords
    CHECK(t1.two_sample_ks.size() == 2);
    for (const auto& row : t1.rows) {
      CHECK(row.mean_disc.size() == 2);
      CHECK(row.median_disc.size() == 2);
      CHECK(row.final_disc >= 0.0);
      CHECK(std::isfinite(row.final_disc));
    }
  }

  SUBCASE("moment targets use the gaussian closed forms") {
    const auto mc = experiments::moment_check(rep);
    REQUIRE(!mc.rows.empty());
    bool saw_u1_2 = false, saw_u2_4 = false;
    for (const auto& row : mc.rows) {
      if (row.moment_id == "u1^2") {
        CHECK(row.target == doctest::Approx(0.5).epsilon(1e-4));
        saw_u1_2 = true;
      }
      if (row.moment_id == "u2^4") {
        CHECK(row.target == doctest::Approx(12.0).epsilon(1e-4));
        saw_u2_4 = true;
      }
    }
    CHECK(saw_u1_2);
    CHECK(saw_u2_4);
    CHECK(mc.abs4_ratio >= 1.0);
  }

  SUBCASE("normality check refuses small samples") {
    CHECK_THROWS_AS(experiments::normality_check(rep), model_error);
  }
}

TEST_CASE("monte carlo runs are deterministic across thread counts") {
  McConfig cfg = small_config();
  cfg.n_list = {200};
  cfg.losses = {pair_of("power:2", "power:2")};

  cfg.threads = 1;
  const std::string a = experiments::report_to_json(experiments::run_monte_carlo(cfg));
  cfg.threads = 4;
  const std::string b = experiments::report_to_json(experiments::run_monte_carlo(cfg));
  cfg.threads = 0;
  const std::string c = experiments::report_to_json(experiments::run_monte_carlo(cfg));
  CHECK(a == b);
  CHECK(a == c);
}

TEST_CASE("loss-independence preconditions") {
  McConfig cfg = small_config();
  cfg.n_list = {200};
  McReport rep = experiments::run_monte_carlo(cfg);
  CHECK_THROWS_WITH_AS(experiments::loss_independence_check(rep),
                       "loss_independence_check needs at least two values of n",
                       model_error);

  cfg = small_config();
  cfg.losses = {pair_of("power:2", "power:2")};
  rep = experiments::run_monte_carlo(cfg);
  CHECK_THROWS_WITH_AS(experiments::loss_independence_check(rep),
                       "loss_independence_check needs at least two losses", model_error);
}

TEST_CASE("finalize_cell computes gaussian diagnostics") {
  const long R = 400;
  const Mat cov = ou_limit_cov();

  Cell qmle = gaussian_cell(R, 31, 0.0);
  experiments::finalize_cell(qmle, R, cov, nullptr);
  CHECK(!qmle.invalid);
  CHECK(std::abs(qmle.stats.mean[0]) < 0.15);
  CHECK(std::abs(qmle.stats.mean[1]) < 0.30);
  CHECK(qmle.stats.var[0] == doctest::Approx(0.5).epsilon(0.20));
  CHECK(qmle.stats.var[1] == doctest::Approx(2.0).epsilon(0.20));
  CHECK(qmle.stats.ks[0] < 1.63 / std::sqrt(static_cast<double>(R)));
  CHECK(qmle.stats.ks[1] < 1.63 / std::sqrt(static_cast<double>(R)));
  CHECK(std::abs(qmle.stats.corr12) < 0.10);
  CHECK(qmle.stats.disc_vs_qmle.empty());

  Cell bayes = qmle;
  for (auto& u : bayes.u) {
    u[0] += 0.01;
    u[1] -= 0.01;
  }
  bayes.stats = {};
  experiments::finalize_cell(bayes, R, cov, &qmle);
  REQUIRE(bayes.stats.disc_vs_qmle.size() == 2);
  CHECK(bayes.stats.disc_vs_qmle[0] == doctest::Approx(0.01).epsilon(1e-9));
  CHECK(bayes.stats.disc_vs_qmle[1] == doctest::Approx(0.01).epsilon(1e-9));
}

TEST_CASE("finalize_cell flags excessive failures") {
  const Mat cov = ou_limit_cov();
  Cell ok = gaussian_cell(390, 7, 0.0);
  ok.failures = 10;  // 2.5% of 400
  experiments::finalize_cell(ok, 400, cov, nullptr);
  CHECK(!ok.invalid);

  Cell bad = gaussian_cell(370, 7, 0.0);
  bad.failures = 30;  // 7.5% of 400
  experiments::finalize_cell(bad, 400, cov, nullptr);
  CHECK(bad.invalid);
}

TEST_CASE("constant moment evaluates to exactly one") {
  McReport rep;
  rep.cfg.replicates = 400;
  rep.cfg.losses = {pair_of("power:2", "power:2")};
  PolyMoment one;
  one.id = "const";
  one.terms.push_back({1.0, {0, 0}});
  rep.cfg.moments = {one};
  rep.limit_cov = ou_limit_cov();

  NRun run;
  run.n = 400;
  run.h = 0.1;
  run.qmle = gaussian_cell(400, 3, 0.0);
  experiments::finalize_cell(run.qmle, 400, rep.limit_cov, nullptr);
  run.bayes.push_back(gaussian_cell(400, 4, 0.0));
  experiments::finalize_cell(run.bayes[0], 400, rep.limit_cov, &run.qmle);
  rep.runs.push_back(std::move(run));

  const auto mc = experiments::moment_check(rep);
  REQUIRE(mc.rows.size() == 1);
  CHECK(mc.rows[0].empirical == 1.0);
  CHECK(mc.rows[0].target == 1.0);
  CHECK(mc.abs4_ratio == 1.0);
  CHECK(mc.ratio_ok);
}

TEST_CASE("normality check passes on synthetic gaussian cells") {
  McReport rep;
  rep.cfg.replicates = 400;
  rep.cfg.losses = {pair_of("power:2", "power:2")};
  rep.limit_cov = ou_limit_cov();
  NRun run;
  run.n = 400;
  run.qmle = gaussian_cell(400, 81, 0.0);
  experiments::finalize_cell(run.qmle, 400, rep.limit_cov, nullptr);
  run.bayes.push_back(gaussian_cell(400, 82, 0.0));
  experiments::finalize_cell(run.bayes[0], 400, rep.limit_cov, &run.qmle);
  rep.runs.push_back(std::move(run));

  const auto nc = experiments::normality_check(rep);
  CHECK(nc.rows.size() == 4);  // 2 estimators x 2 coordinates
  CHECK(nc.pass);

  // stretching one coordinate far outside the band must fail
  McReport stretched = rep;
  for (auto& u : stretched.runs[0].qmle.u) u[0] *= 3.0;
  stretched.runs[0].qmle.stats = {};
  experiments::finalize_cell(stretched.runs[0].qmle, 400, rep.limit_cov,
                             nullptr);
  CHECK(!experiments::normality_check(stretched).pass);
}

TEST_CASE("csv summary has the documented header and rows") {
  McConfig cfg = small_config();
  cfg.n_list = {200};
  cfg.losses = {pair_of("power:2", "power:2")};
  const McReport rep = experiments::run_monte_carlo(cfg);
  const std::string csv = experiments::summary_to_csv(rep);

  std::vector<std::string> lines;
  std::size_t pos = 0;
  while (pos < csv.size()) {
    const auto nl = csv.find('\n', pos);
    lines.push_back(csv.substr(pos, nl - pos));
    if (nl == std::string::npos) break;
    pos = nl + 1;
  }
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  REQUIRE(!lines.empty());
  CHECK(lines[0] == "n,loss_id,coord,mean,var,ks,discrepancy_vs_qmle");
  // 1 run x (qmle + 1 loss) x 2 coords
  CHECK(lines.size() == 5);
  CHECK(lines[1].substr(0, 4) == "200,");
  CHECK(lines[1].find("qmle") != std::string::npos);

  // byte-stable across repeated serialization
  CHECK(csv == experiments::summary_to_csv(rep));
  const std::string json = experiments::report_to_json(rep);
  CHECK(json == experiments::report_to_json(rep));
  CHECK(json.find("\"runs\"") != std::string::npos);
}
