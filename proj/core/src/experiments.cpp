#include "qlbayes/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "qlbayes/rng.hpp"
#include "qlbayes/stats.hpp"

namespace qlbayes::experiments {

namespace {

using json = nlohmann::ordered_json;

std::string chars(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

McConfig with_defaults(McConfig cfg) {
  if (cfg.losses.empty()) {
    LossPair p;
    p.w1 = loss::power_loss(2.0);
    p.w2 = loss::power_loss(2.0);
    p.id = p.w1.id + "+" + p.w2.id;
    cfg.losses.push_back(std::move(p));
  }
  for (auto& p : cfg.losses)
    if (p.id.empty()) p.id = p.w1.id + "+" + p.w2.id;
  return cfg;
}

std::vector<PolyMoment> default_moments(int dim) {
  auto single = [dim](const std::string& id, int coord, int power) {
    PolyMoment m;
    m.id = id;
    PolyMoment::Term t;
    t.coeff = 1.0;
    t.powers.assign(dim, 0);
    t.powers[coord] = power;
    m.terms.push_back(std::move(t));
    return m;
  };
  std::vector<PolyMoment> ms;
  ms.push_back(single("u1^2", 0, 2));
  if (dim > 1) ms.push_back(single("u2^2", 1, 2));
  ms.push_back(single("u1^4", 0, 4));
  if (dim > 1) ms.push_back(single("u2^4", 1, 4));
  return ms;
}

int worker_count(int requested) {
  int t = requested > 0 ? requested
                        : static_cast<int>(std::thread::hardware_concurrency());
  if (t < 1) t = 1;
  if (const char* env = std::getenv("QLA_THREADS")) {
    const int cap = std::atoi(env);
    if (cap >= 1) t = std::min(t, cap);
  }
  return t;
}

struct RepOutcome {
  std::optional<std::vector<double>> qmle_u;
  std::string qmle_note;
  std::vector<std::optional<std::vector<double>>> bayes_u;
  std::vector<std::string> bayes_note;
  std::vector<bool> warned;
};

}  // namespace

void finalize_cell(Cell& cell, long replicates, const Mat& limit_cov,
                   const Cell* qmle) {
  cell.invalid = cell.failures * 20 > replicates;  // > 5%
  const std::size_t kept = cell.u.size();
  if (kept < 2) return;
  const int dim = static_cast<int>(cell.u.front().size());
  auto coord = [&](const Cell& c, int a) {
    std::vector<double> xs;
    xs.reserve(c.u.size());
    for (const auto& u : c.u) xs.push_back(u[a]);
    return xs;
  };
  for (int a = 0; a < dim; ++a) {
    auto xs = coord(cell, a);
    cell.stats.mean.push_back(stats::mean(xs));
    cell.stats.var.push_back(stats::variance(xs));
    const double sd = std::sqrt(limit_cov(a, a));
    cell.stats.ks.push_back(stats::ks_distance(
        xs, [sd](double x) { return stats::normal_cdf(x / sd); }));
  }
  if (dim >= 2) {
    auto c0 = coord(cell, 0);
    auto c1 = coord(cell, 1);
    cell.stats.corr12 = stats::correlation(c0, c1);
  }
  if (qmle != nullptr) {
    // mean |u_tilde - u_hat| over replicates present in both cells
    std::vector<double> disc(dim, 0.0);
    long common = 0;
    std::size_t qi = 0;
    for (std::size_t bi = 0; bi < cell.kept.size(); ++bi) {
      while (qi < qmle->kept.size() && qmle->kept[qi] < cell.kept[bi]) ++qi;
      if (qi == qmle->kept.size()) break;
      if (qmle->kept[qi] != cell.kept[bi]) continue;
      ++common;
      for (int a = 0; a < dim; ++a)
        disc[a] += std::abs(cell.u[bi][a] - qmle->u[qi][a]);
    }
    if (common > 0)
      for (int a = 0; a < dim; ++a)
        cell.stats.disc_vs_qmle.push_back(disc[a] / static_cast<double>(common));
  }
}

void McConfig::validate() const {
  if (!(gamma > 0.5 && gamma < 1.0))
    throw model_error("gamma must be in (0.5, 1)");
  if (replicates < 50) throw model_error("replicates must be >= 50");
  if (n_list.empty()) throw model_error("n_list must not be empty");
  for (std::size_t i = 0; i < n_list.size(); ++i) {
    if (n_list[i] < 10) throw model_error("every n must be >= 10");
    if (i > 0 && n_list[i] <= n_list[i - 1])
      throw model_error("n_list must be strictly increasing");
  }
  if (substeps < 1) throw model_error("substeps must be >= 1");
  if (grid_nodes < 0) throw model_error("grid_nodes must be >= 0");
  if (threads < 0) throw model_error("threads must be >= 0");
  for (const auto& m : moments) {
    if (m.terms.empty()) throw model_error("moment '" + m.id + "' has no terms");
    for (const auto& t : m.terms) {
      int degree = 0;
      for (int p : t.powers) {
        if (p < 0) throw model_error("moment '" + m.id + "' has a negative power");
        degree += p;
      }
      if (degree > 4)
        throw model_error("moment '" + m.id + "' exceeds total degree 4");
    }
  }
}

McReport run_monte_carlo(const McConfig& cfg_in) {
  McConfig cfg = with_defaults(cfg_in);
  cfg.validate();
  const models::DiffusionModel model =
      cfg.custom_model ? *cfg.custom_model : models::builtin_model(cfg.model);
  const TrueParameter truth = cfg.truth.value_or(model.default_truth);
  const int d1 = model.d1(), d2 = model.d2(), dim = d1 + d2;
  if (cfg.moments.empty()) cfg.moments = default_moments(dim);
  for (const auto& m : cfg.moments)
    for (const auto& t : m.terms)
      if (static_cast<int>(t.powers.size()) != dim)
        throw model_error("moment '" + m.id + "' has wrong coordinate count");
  for (const auto& p : cfg.losses)
    if (p.w1.dim != d1 || p.w2.dim != d2)
      throw model_error("loss pair '" + p.id + "' has wrong stage dimensions");

  McReport rep;
  rep.cfg = cfg;
  const auto measure = asymptotics::invariant_density_1d(model, truth);
  rep.info = asymptotics::gamma_matrices(model, truth, measure);
  rep.limit_cov = asymptotics::limit_covariance(rep.info);

  // replicate seeds must be pairwise distinct across the whole run
  {
    std::vector<std::uint64_t> seeds;
    for (long n : cfg.n_list)
      for (long r = 0; r < cfg.replicates; ++r)
        seeds.push_back(rng::derive_seed(
            {cfg.base_seed, static_cast<std::uint64_t>(n),
             static_cast<std::uint64_t>(r)}));
    std::sort(seeds.begin(), seeds.end());
    if (std::adjacent_find(seeds.begin(), seeds.end()) != seeds.end())
      throw model_error("derived replicate seeds collide; change base_seed");
  }

  const Vec pilot = [&] {
    switch (cfg.pilot_mode) {
      case PilotMode::center:
        return model.theta2_box.center();
      case PilotMode::oracle:
        return truth.theta2;
      case PilotMode::fixed:
        return Vec::Constant(d2, cfg.pilot_value).eval();
    }
    throw model_error("unknown pilot mode");
  }();
  if (!model.theta2_box.contains(pilot, 1e-9))
    throw box_error("pilot theta2 lies outside the parameter box");

  const int threads = worker_count(cfg.threads);
  const long R = cfg.replicates;
  const std::size_t L = cfg.losses.size();

  for (long n : cfg.n_list) {
    const double h = std::pow(static_cast<double>(n), -cfg.gamma);
    const qla::Scaling scaling = qla::Scaling::from(n, h);
    std::vector<RepOutcome> outcomes(R);

    std::atomic<long> next{0};
    auto worker = [&] {
      for (;;) {
        const long r = next.fetch_add(1);
        if (r >= R) return;
        RepOutcome& out = outcomes[r];
        out.bayes_u.resize(L);
        out.bayes_note.resize(L);
        out.warned.assign(L, false);

        const std::uint64_t seed = rng::derive_seed(
            {cfg.base_seed, static_cast<std::uint64_t>(n),
             static_cast<std::uint64_t>(r)});
        simulator::ObservationSet obs;
        try {
          obs = simulator::simulate_observations(
              model, truth, simulator::PathConfig(n, h, cfg.substeps, seed));
        } catch (const std::exception& e) {
          out.qmle_note = std::string("simulation: ") + e.what();
          for (std::size_t l = 0; l < L; ++l) out.bayes_note[l] = out.qmle_note;
          continue;
        }

        auto scaled = [&](const Vec& t1, const Vec& t2) {
          std::vector<double> u(dim);
          for (int a = 0; a < d1; ++a)
            u[a] = scaling.rate1 * (t1[a] - truth.theta1[a]);
          for (int a = 0; a < d2; ++a)
            u[d1 + a] = scaling.rate2 * (t2[a] - truth.theta2[a]);
          return u;
        };

        try {
          const auto q = estimators::qmle(model, obs, scaling);
          out.qmle_u = scaled(q.theta1, q.theta2);
        } catch (const std::exception& e) {
          out.qmle_note = std::string("qmle: ") + e.what();
        }

        try {
          const auto g1 = estimators::adapted_grid(model, obs, 1, pilot,
                                                   cfg.prior1, scaling,
                                                   cfg.grid_nodes);
          const auto t1 = estimators::build_stage_table(model, obs, 1, pilot,
                                                        cfg.prior1, g1, scaling);
          for (std::size_t l = 0; l < L; ++l) {
            try {
              const auto s1 = estimators::stage_argmin(
                  t1, cfg.losses[l].w1, model.theta1_box.center());
              const auto g2 = estimators::adapted_grid(
                  model, obs, 2, s1.z, cfg.prior2, scaling, cfg.grid_nodes);
              const auto t2 = estimators::build_stage_table(
                  model, obs, 2, s1.z, cfg.prior2, g2, scaling);
              const auto s2 = estimators::stage_argmin(
                  t2, cfg.losses[l].w2, model.theta2_box.center());
              out.bayes_u[l] = scaled(s1.z, s2.z);
              out.warned[l] = s1.diag.grid_coarse || s2.diag.grid_coarse;
            } catch (const std::exception& e) {
              out.bayes_note[l] = std::string("bayes: ") + e.what();
            }
          }
        } catch (const std::exception& e) {
          for (std::size_t l = 0; l < L; ++l)
            out.bayes_note[l] = std::string("stage 1: ") + e.what();
        }
      }
    };
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    // ordered reduction by replicate index
    NRun run;
    run.n = n;
    run.h = h;
    run.bayes.resize(L);
    for (long r = 0; r < R; ++r) {
      const RepOutcome& out = outcomes[r];
      if (out.qmle_u) {
        run.qmle.u.push_back(*out.qmle_u);
        run.qmle.kept.push_back(r);
      } else {
        ++run.qmle.failures;
        run.qmle.failure_notes.push_back("r" + std::to_string(r) + " " +
                                         out.qmle_note);
      }
      for (std::size_t l = 0; l < L; ++l) {
        Cell& cell = run.bayes[l];
        if (out.bayes_u[l]) {
          cell.u.push_back(*out.bayes_u[l]);
          cell.kept.push_back(r);
          if (out.warned[l]) ++cell.grid_warnings;
        } else {
          ++cell.failures;
          cell.failure_notes.push_back("r" + std::to_string(r) + " " +
                                       out.bayes_note[l]);
        }
      }
    }
    finalize_cell(run.qmle, R, rep.limit_cov, nullptr);
    for (auto& cell : run.bayes) finalize_cell(cell, R, rep.limit_cov, &run.qmle);
    rep.runs.push_back(std::move(run));
  }
  return rep;
}

LossIndependenceResult loss_independence_check(const McReport& report, double slack,
                              double threshold) {
  if (report.runs.size() < 2)
    throw model_error("loss_independence_check needs at least two values of n");
  if (report.cfg.losses.size() < 2)
    throw model_error("loss_independence_check needs at least two losses");
  const std::size_t L = report.cfg.losses.size();
  const int dim = static_cast<int>(report.limit_cov.rows());

  LossIndependenceResult res;
  res.slack = slack;
  res.threshold = threshold;
  res.ks_threshold =
      1.63 * std::sqrt(2.0 / static_cast<double>(report.cfg.replicates));

  auto cell_of = [&](const NRun& run, std::size_t a) -> const Cell& {
    return a == L ? run.qmle : run.bayes[a];
  };
  auto id_of = [&](std::size_t a) {
    return a == L ? std::string("qmle") : report.cfg.losses[a].id;
  };

  bool pass = true;
  for (std::size_t a = 0; a < L; ++a) {
    for (std::size_t b = a + 1; b <= L; ++b) {
      for (int c = 0; c < dim; ++c) {
        LossIndependenceRow row;
        row.loss_a = id_of(a);
        row.loss_b = id_of(b);
        row.coord = c;
        for (const auto& run : report.runs) {
          const Cell& ca = cell_of(run, a);
          const Cell& cb = cell_of(run, b);
          std::vector<double> diffs;
          std::size_t bi = 0;
          for (std::size_t ai = 0; ai < ca.kept.size(); ++ai) {
            while (bi < cb.kept.size() && cb.kept[bi] < ca.kept[ai]) ++bi;
            if (bi == cb.kept.size()) break;
            if (cb.kept[bi] != ca.kept[ai]) continue;
            diffs.push_back(std::abs(ca.u[ai][c] - cb.u[bi][c]));
          }
          if (diffs.empty()) {
            row.mean_disc.push_back(std::numeric_limits<double>::quiet_NaN());
            row.median_disc.push_back(std::numeric_limits<double>::quiet_NaN());
            continue;
          }
          row.mean_disc.push_back(stats::mean(diffs));
          std::nth_element(diffs.begin(), diffs.begin() + diffs.size() / 2,
                           diffs.end());
          row.median_disc.push_back(diffs[diffs.size() / 2]);
        }
        for (std::size_t i = 1; i < row.median_disc.size(); ++i)
          if (!(row.median_disc[i] <= slack * row.median_disc[i - 1]))
            row.monotone = false;
        row.final_disc = row.median_disc.back();
        if (!row.monotone || !(row.final_disc < threshold)) pass = false;
        res.rows.push_back(std::move(row));
      }
    }
  }

  // two-sample KS between loss variants at the largest n
  const NRun& last = report.runs.back();
  for (std::size_t a = 0; a < L; ++a)
    for (std::size_t b = a + 1; b < L; ++b)
      for (int c = 0; c < dim; ++c) {
        std::vector<double> xa, xb;
        for (const auto& u : last.bayes[a].u) xa.push_back(u[c]);
        for (const auto& u : last.bayes[b].u) xb.push_back(u[c]);
        if (xa.empty() || xb.empty()) continue;
        const double ks = stats::ks_two_sample(xa, xb);
        res.two_sample_ks.push_back(ks);
        if (!(ks < res.ks_threshold)) pass = false;
      }
  res.pass = pass;
  return res;
}

NormalityResult normality_check(const McReport& report, double var_lo_factor,
                                double var_hi_factor) {
  if (report.runs.empty()) throw model_error("normality_check needs a run");
  const NRun& last = report.runs.back();
  if (static_cast<long>(last.qmle.u.size()) < 200)
    throw model_error("normality_check needs R >= 200 at the largest n");
  const int dim = static_cast<int>(report.limit_cov.rows());

  NormalityResult res;
  res.corr_crit = 2.0 / std::sqrt(static_cast<double>(report.cfg.replicates));
  const double ks_crit =
      1.63 / std::sqrt(static_cast<double>(report.cfg.replicates));
  bool pass = true;

  auto add_rows = [&](const std::string& name, const Cell& cell) {
    if (cell.stats.var.empty()) {
      pass = false;
      return;
    }
    for (int c = 0; c < dim; ++c) {
      NormalityRow row;
      row.estimator = name;
      row.coord = c;
      row.var = cell.stats.var[c];
      row.var_lo = var_lo_factor * report.limit_cov(c, c);
      row.var_hi = var_hi_factor * report.limit_cov(c, c);
      row.ks = cell.stats.ks[c];
      row.ks_crit = ks_crit;
      row.pass = row.var > row.var_lo && row.var < row.var_hi && row.ks < ks_crit;
      if (!row.pass) pass = false;
      res.rows.push_back(row);
    }
    if (dim >= 2 && std::abs(cell.stats.corr12) >= res.corr_crit) pass = false;
    res.corr = std::max(res.corr, std::abs(cell.stats.corr12));
  };
  add_rows("qmle", last.qmle);
  for (std::size_t l = 0; l < last.bayes.size(); ++l)
    add_rows(report.cfg.losses[l].id, last.bayes[l]);
  res.pass = pass;
  return res;
}

MomentResult moment_check(const McReport& report) {
  const int dim = static_cast<int>(report.limit_cov.rows());
  MomentResult res;

  auto eval_poly = [&](const PolyMoment& m, const std::vector<double>& u) {
    double acc = 0.0;
    for (const auto& t : m.terms) {
      double term = t.coeff;
      for (int c = 0; c < dim; ++c)
        for (int p = 0; p < t.powers[c]; ++p) term *= u[c];
      acc += term;
    }
    return acc;
  };
  auto target_poly = [&](const PolyMoment& m) {
    double acc = 0.0;
    for (const auto& t : m.terms) {
      double term = t.coeff;
      for (int c = 0; c < dim; ++c)
        term *= stats::gaussian_moment(t.powers[c],
                                       std::sqrt(report.limit_cov(c, c)));
      acc += term;
    }
    return acc;
  };

  double ratio_worst = 1.0;
  for (std::size_t l = 0; l < report.cfg.losses.size(); ++l) {
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (const auto& run : report.runs) {
      const Cell& cell = run.bayes[l];
      if (cell.u.empty()) continue;
      for (const auto& m : report.cfg.moments) {
        double acc = 0.0;
        for (const auto& u : cell.u) acc += eval_poly(m, u);
        MomentRow row;
        row.estimator = report.cfg.losses[l].id;
        row.moment_id = m.id;
        row.n = run.n;
        row.empirical = acc / static_cast<double>(cell.u.size());
        row.target = target_poly(m);
        res.rows.push_back(row);
      }
      double abs4 = 0.0;
      for (const auto& u : cell.u) {
        double sq = 0.0;
        for (double x : u) sq += x * x;
        abs4 += sq * sq;
      }
      abs4 /= static_cast<double>(cell.u.size());
      lo = std::min(lo, abs4);
      hi = std::max(hi, abs4);
    }
    if (std::isfinite(lo) && lo > 0) ratio_worst = std::max(ratio_worst, hi / lo);
  }
  res.abs4_ratio = ratio_worst;
  res.ratio_ok = ratio_worst < 3.0;
  return res;
}

namespace {

json vec_json(const Vec& v) {
  json a = json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

json mat_json(const Mat& m) {
  json rows = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

json cell_json(const std::string& name, const Cell& cell) {
  json j;
  j["estimator"] = name;
  j["kept"] = cell.kept;
  j["u"] = cell.u;
  j["failures"] = cell.failures;
  j["failure_notes"] = cell.failure_notes;
  j["grid_warnings"] = cell.grid_warnings;
  j["invalid"] = cell.invalid;
  json s;
  s["mean"] = cell.stats.mean;
  s["var"] = cell.stats.var;
  s["ks"] = cell.stats.ks;
  s["corr12"] = cell.stats.corr12;
  s["disc_vs_qmle"] = cell.stats.disc_vs_qmle;
  j["stats"] = s;
  return j;
}

}  // namespace

std::string report_to_json(const McReport& report) {
  const auto& cfg = report.cfg;
  json j;
  json c;
  c["model"] = cfg.model;
  if (cfg.truth) {
    c["truth"] = {{"theta1", vec_json(cfg.truth->theta1)},
                  {"theta2", vec_json(cfg.truth->theta2)},
                  {"x0", vec_json(cfg.truth->x0)}};
  }
  c["gamma"] = cfg.gamma;
  c["n_list"] = cfg.n_list;
  c["replicates"] = cfg.replicates;
  json losses = json::array();
  for (const auto& p : cfg.losses)
    losses.push_back({{"id", p.id}, {"w1", p.w1.id}, {"w2", p.w2.id}});
  c["losses"] = losses;
  c["pilot_mode"] = cfg.pilot_mode == PilotMode::center
                        ? "center"
                        : (cfg.pilot_mode == PilotMode::oracle ? "oracle" : "fixed");
  if (cfg.pilot_mode == PilotMode::fixed) c["pilot_value"] = cfg.pilot_value;
  c["base_seed"] = cfg.base_seed;
  c["substeps"] = cfg.substeps;
  c["grid_nodes"] = cfg.grid_nodes;
  json moments = json::array();
  for (const auto& m : cfg.moments) moments.push_back(m.id);
  c["moments"] = moments;
  j["config"] = c;

  j["info"] = {{"gamma1", mat_json(report.info.gamma1)},
               {"gamma2", mat_json(report.info.gamma2)},
               {"limit_cov", mat_json(report.limit_cov)}};

  json runs = json::array();
  for (const auto& run : report.runs) {
    json r;
    r["n"] = run.n;
    r["h"] = run.h;
    json cells = json::array();
    cells.push_back(cell_json("qmle", run.qmle));
    for (std::size_t l = 0; l < run.bayes.size(); ++l)
      cells.push_back(cell_json(report.cfg.losses[l].id, run.bayes[l]));
    r["cells"] = cells;
    runs.push_back(r);
  }
  j["runs"] = runs;
  return j.dump(2) + "\n";
}

std::string summary_to_csv(const McReport& report) {
  std::ostringstream os;
  os << "n,loss_id,coord,mean,var,ks,discrepancy_vs_qmle\n";
  auto emit = [&](long n, const std::string& id, const Cell& cell, bool is_qmle) {
    for (std::size_t c = 0; c < cell.stats.mean.size(); ++c) {
      os << n << "," << id << "," << (c + 1) << "," << chars(cell.stats.mean[c])
         << "," << chars(cell.stats.var[c]) << "," << chars(cell.stats.ks[c])
         << ",";
      if (!is_qmle && c < cell.stats.disc_vs_qmle.size())
        os << chars(cell.stats.disc_vs_qmle[c]);
      else
        os << "0";
      os << "\n";
    }
  };
  for (const auto& run : report.runs) {
    emit(run.n, "qmle", run.qmle, true);
    for (std::size_t l = 0; l < run.bayes.size(); ++l)
      emit(run.n, report.cfg.losses[l].id, run.bayes[l], false);
  }
  return os.str();
}

}  // namespace qlbayes::experiments
