#include "qlbayes/cli.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "qlbayes/asymptotics.hpp"
#include "qlbayes/config.hpp"
#include "qlbayes/errors.hpp"
#include "qlbayes/estimators.hpp"
#include "qlbayes/experiments.hpp"
#include "qlbayes/loss.hpp"
#include "qlbayes/models.hpp"
#include "qlbayes/qla.hpp"
#include "qlbayes/simulator.hpp"
#include "qlbayes/version.hpp"

namespace qlbayes::cli {

namespace {

using json = nlohmann::ordered_json;
using models::DiffusionModel;
using models::Vec;

json vec_json(const Vec& v) {
  json a = json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

json mat_json(const models::Mat& m) {
  json rows = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

Vec parse_vec(const std::string& s) {
  std::vector<double> vals;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    auto comma = s.find(',', pos);
    const std::string tok =
        s.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    try {
      std::size_t used = 0;
      vals.push_back(std::stod(tok, &used));
      while (used < tok.size() && (tok[used] == ' ' || tok[used] == '\t')) ++used;
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw usage_error("bad number \"" + tok + "\" in \"" + s + "\"");
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  Vec v(vals.size());
  for (std::size_t i = 0; i < vals.size(); ++i) v[i] = vals[i];
  return v;
}

std::vector<double> strip_brackets_list(std::string s) {
  auto l = s.find('[');
  auto r = s.rfind(']');
  if (l != std::string::npos && r != std::string::npos && l < r)
    s = s.substr(l + 1, r - l - 1);
  const Vec v = parse_vec(s);
  return std::vector<double>(v.data(), v.data() + v.size());
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw model_error("cannot open output file '" + path + "'");
  out << content;
  if (!out) throw model_error("failed writing output file '" + path + "'");
}

std::string iso_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_metadata(const std::string& path, const std::string& command,
                    const json& config_echo) {
  json j;
  j["tool"] = "qlbayes";
  j["version"] = qlbayes::version;
  j["created"] = iso_now();
  j["command"] = command;
  j["config"] = config_echo;
  write_file(path, j.dump(2) + "\n");
}

// reject config keys outside the allowlist, naming the offender
void check_keys(const config::Config& cfg, const std::string& section,
                std::initializer_list<const char*> allowed) {
  for (const auto& key : cfg.keys(section)) {
    bool ok = false;
    for (const char* a : allowed)
      if (key == a) ok = true;
    if (!ok)
      throw config_error("unknown key \"" + key + "\" in section [" + section + "]",
                         cfg.line_of(section, key));
  }
}

DiffusionModel model_from(const std::string& name,
                          const config::Config* file_cfg) {
  if (name == "table") {
    if (!file_cfg || file_cfg->keys("model").empty())
      throw usage_error("model \"table\" needs a [model] section with drift/diff tables");
    const auto& cfg = *file_cfg;
    check_keys(cfg, "model", {"drift", "diff", "box1", "box2"});
    const auto drift = strip_brackets_list(cfg.get_string("model", "drift"));
    const auto diff = strip_brackets_list(cfg.get_string("model", "diff"));
    models::ParameterBox box1(0.2, 5.0), box2(0.2, 5.0);
    if (cfg.has("model", "box1")) {
      const auto b = strip_brackets_list(cfg.get_string("model", "box1"));
      if (b.size() != 2) throw config_error("box1 needs two numbers",
                                            cfg.line_of("model", "box1"));
      box1 = models::ParameterBox(b[0], b[1]);
    }
    if (cfg.has("model", "box2")) {
      const auto b = strip_brackets_list(cfg.get_string("model", "box2"));
      if (b.size() != 2) throw config_error("box2 needs two numbers",
                                            cfg.line_of("model", "box2"));
      box2 = models::ParameterBox(b[0], b[1]);
    }
    return models::make_table_model(drift, diff, box1, box2);
  }
  return models::builtin_model(name);
}

models::TrueParameter truth_from(const DiffusionModel& model,
                                 const std::string& th1, const std::string& th2,
                                 const std::string& x0) {
  models::TrueParameter t = model.default_truth;
  if (!th1.empty()) t.theta1 = parse_vec(th1);
  if (!th2.empty()) t.theta2 = parse_vec(th2);
  if (!x0.empty()) t.x0 = parse_vec(x0);
  return t;
}

experiments::PolyMoment parse_moment(const std::string& spec, int dim) {
  experiments::PolyMoment m;
  m.id = spec;
  experiments::PolyMoment::Term t;
  t.coeff = 1.0;
  t.powers.assign(dim, 0);
  if (spec == "1") {
    m.terms.push_back(std::move(t));
    return m;
  }
  // monomial grammar: u<coord>^<power>, e.g. u1^2, u2^4
  const auto caret = spec.find('^');
  if (spec.size() < 2 || spec[0] != 'u' || caret == std::string::npos)
    throw usage_error("moment \"" + spec + "\" must look like u1^2 (or 1)");
  try {
    const int coord = std::stoi(spec.substr(1, caret - 1));
    const int power = std::stoi(spec.substr(caret + 1));
    if (coord < 1 || coord > dim) throw std::out_of_range("coord");
    if (power < 0 || power > 4) throw std::out_of_range("power");
    t.powers[coord - 1] = power;
  } catch (const std::exception&) {
    throw usage_error("moment \"" + spec + "\" must look like u1^2 with power <= 4");
  }
  m.terms.push_back(std::move(t));
  return m;
}

estimators::PriorDensity parse_prior(const std::string& spec, int dim) {
  if (spec.empty() || spec == "uniform") return estimators::PriorDensity::uniform();
  if (spec.rfind("gaussian:", 0) == 0) {
    const Vec nums = parse_vec(spec.substr(9));
    if (nums.size() != 2)
      throw usage_error("gaussian prior needs \"gaussian:center,sd\"");
    return estimators::PriorDensity::gaussian(Vec::Constant(dim, nums[0]),
                                              Vec::Constant(dim, nums[1]));
  }
  throw usage_error("unknown prior \"" + spec + "\" (uniform | gaussian:center,sd)");
}

experiments::LossPair parse_loss_pair(const std::string& spec, int d1, int d2) {
  experiments::LossPair p;
  const auto plus = spec.find('+');
  if (plus == std::string::npos) {
    p.w1 = loss::parse_loss(spec, d1);
    p.w2 = loss::parse_loss(spec, d2);
  } else {
    p.w1 = loss::parse_loss(spec.substr(0, plus), d1);
    p.w2 = loss::parse_loss(spec.substr(plus + 1), d2);
  }
  p.id = p.w1.id + "+" + p.w2.id;
  return p;
}

std::string trimmed(const std::string& s) {
  auto b = s.find_first_not_of(" \t");
  auto e = s.find_last_not_of(" \t");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

// ---- subcommand options ----

struct SimulateOpts {
  std::string config_path, model = "OU", theta1, theta2, x0, out = "observations.csv";
  long n = 1000;
  double gamma = 0.6, h = 0;
  int substeps = 10;
  std::uint64_t seed = 1;
  bool zero_noise = false;
};

struct EstimateOpts {
  std::string config_path, model = "OU", data, loss1 = "power:2", loss2 = "power:2";
  std::string prior, pilot;
  bool oracle_pilot = false;
  int grid_nodes = 0;
  std::string theta1, theta2;  // optional truth for scaled errors
};

struct McOpts {
  std::string config_path, model, n_list, losses, pilot, out_dir = ".";
  std::string theta1, theta2, x0, moments;
  double gamma = -1;
  long replicates = -1;
  long seed = -1;
  int substeps = -1, grid_nodes = -1, threads = -1;
};

struct InfoOpts {
  std::string config_path, model = "OU", theta1, theta2;
  int scan_points = 41;
};

struct LossOpts {
  std::string loss = "power:2";
  double eta = 0.5, r0 = 4.0, p = -1, dominance_m = 3.0;
};

int do_simulate(const SimulateOpts& o, std::ostream& out) {
  std::optional<config::Config> file;
  SimulateOpts eff = o;
  if (!o.config_path.empty()) {
    file = config::Config::load(o.config_path);
    check_keys(*file, "simulate",
               {"model", "n", "gamma", "h", "substeps", "seed", "zero_noise",
                "theta1", "theta2", "x0", "out"});
    // config supplies defaults; explicit flags already sit in `o` and win
    const auto& c = *file;
    if (o.model == "OU") eff.model = c.get_string_or("simulate", "model", "OU");
    if (o.n == 1000) eff.n = c.get_integer_or("simulate", "n", 1000);
    if (o.gamma == 0.6) eff.gamma = c.get_number_or("simulate", "gamma", 0.6);
    if (o.h == 0) eff.h = c.get_number_or("simulate", "h", 0.0);
    if (o.substeps == 10)
      eff.substeps = static_cast<int>(c.get_integer_or("simulate", "substeps", 10));
    if (o.seed == 1)
      eff.seed = static_cast<std::uint64_t>(c.get_integer_or("simulate", "seed", 1));
    if (!o.zero_noise) eff.zero_noise = c.get_bool_or("simulate", "zero_noise", false);
    if (o.theta1.empty()) eff.theta1 = c.get_string_or("simulate", "theta1", "");
    if (o.theta2.empty()) eff.theta2 = c.get_string_or("simulate", "theta2", "");
    if (o.x0.empty()) eff.x0 = c.get_string_or("simulate", "x0", "");
    if (o.out == "observations.csv")
      eff.out = c.get_string_or("simulate", "out", "observations.csv");
  }
  const DiffusionModel model = model_from(eff.model, file ? &*file : nullptr);
  const auto truth = truth_from(model, eff.theta1, eff.theta2, eff.x0);
  const double h = eff.h > 0 ? eff.h : std::pow(static_cast<double>(eff.n), -eff.gamma);
  const simulator::PathConfig pc(eff.n, h, eff.substeps, eff.seed, eff.zero_noise);
  const auto obs = simulator::simulate_observations(model, truth, pc);
  simulator::save_csv(obs, eff.out);

  json echo;
  echo["model"] = eff.model;
  echo["n"] = eff.n;
  echo["h"] = h;
  echo["substeps"] = eff.substeps;
  echo["seed"] = eff.seed;
  echo["zero_noise"] = eff.zero_noise;
  echo["theta1"] = vec_json(truth.theta1);
  echo["theta2"] = vec_json(truth.theta2);
  echo["x0"] = vec_json(truth.x0);
  echo["out"] = eff.out;
  write_metadata(eff.out + ".metadata.json", "simulate", echo);
  out << "wrote " << eff.out << " (" << obs.rows() << " rows)\n";
  return 0;
}

int do_estimate(const EstimateOpts& o, std::ostream& out) {
  std::optional<config::Config> file;
  EstimateOpts eff = o;
  if (!o.config_path.empty()) {
    file = config::Config::load(o.config_path);
    check_keys(*file, "estimate",
               {"model", "data", "loss1", "loss2", "prior", "pilot",
                "oracle_pilot", "grid_nodes", "theta1", "theta2"});
    const auto& c = *file;
    if (o.model == "OU") eff.model = c.get_string_or("estimate", "model", "OU");
    if (o.data.empty()) eff.data = c.get_string_or("estimate", "data", "");
    if (o.loss1 == "power:2") eff.loss1 = c.get_string_or("estimate", "loss1", "power:2");
    if (o.loss2 == "power:2") eff.loss2 = c.get_string_or("estimate", "loss2", "power:2");
    if (o.prior.empty()) eff.prior = c.get_string_or("estimate", "prior", "");
    if (o.pilot.empty()) eff.pilot = c.get_string_or("estimate", "pilot", "");
    if (!o.oracle_pilot) eff.oracle_pilot = c.get_bool_or("estimate", "oracle_pilot", false);
    if (o.grid_nodes == 0)
      eff.grid_nodes = static_cast<int>(c.get_integer_or("estimate", "grid_nodes", 0));
    if (o.theta1.empty()) eff.theta1 = c.get_string_or("estimate", "theta1", "");
    if (o.theta2.empty()) eff.theta2 = c.get_string_or("estimate", "theta2", "");
  }
  if (eff.data.empty()) throw usage_error("estimate needs --data <csv>");
  const DiffusionModel model = model_from(eff.model, file ? &*file : nullptr);
  const auto obs = simulator::load_csv(eff.data);
  const auto scaling = qla::Scaling::from(obs.n, obs.h);

  const auto w1 = loss::parse_loss(eff.loss1, model.d1());
  const auto w2 = loss::parse_loss(eff.loss2, model.d2());
  const auto prior1 = parse_prior(eff.prior, model.d1());
  const auto prior2 = parse_prior(eff.prior, model.d2());

  Vec pilot;
  if (eff.oracle_pilot)
    pilot = model.default_truth.theta2;
  else if (!eff.pilot.empty())
    pilot = parse_vec(eff.pilot);
  else
    pilot = model.theta2_box.center();

  const auto q = estimators::qmle(model, obs, scaling);
  estimators::GridSpec gs = estimators::GridSpec::automatic(eff.grid_nodes);
  const auto b = estimators::bayes_adaptive(model, obs, w1, w2, prior1, prior2,
                                            pilot, scaling, gs, gs);

  json j;
  j["n"] = obs.n;
  j["h"] = obs.h;
  json jq;
  jq["theta1"] = vec_json(q.theta1);
  jq["theta2"] = vec_json(q.theta2);
  jq["contrast"] = q.contrast_at_max;
  jq["converged"] = q.converged;
  jq["scaled_grad_norm"] = q.scaled_grad_norm;
  j["theta_hat"] = jq;
  json jb;
  jb["theta1"] = vec_json(b.theta1);
  jb["theta2"] = vec_json(b.theta2);
  jb["loss1"] = b.loss1_id;
  jb["loss2"] = b.loss2_id;
  jb["pilot"] = vec_json(pilot);
  json d1, d2;
  d1["objective"] = b.stage1.objective;
  d1["grid_coarse"] = b.stage1.grid_coarse;
  d1["tie_broken"] = b.stage1.tie_broken;
  d2["objective"] = b.stage2.objective;
  d2["grid_coarse"] = b.stage2.grid_coarse;
  d2["tie_broken"] = b.stage2.tie_broken;
  jb["stage1"] = d1;
  jb["stage2"] = d2;
  j["theta_tilde"] = jb;

  if (!eff.theta1.empty() && !eff.theta2.empty()) {
    const Vec t1 = parse_vec(eff.theta1), t2 = parse_vec(eff.theta2);
    auto scaled = [&](const Vec& a1, const Vec& a2) {
      Vec u(model.d1() + model.d2());
      for (int i = 0; i < model.d1(); ++i) u[i] = scaling.rate1 * (a1[i] - t1[i]);
      for (int i = 0; i < model.d2(); ++i)
        u[model.d1() + i] = scaling.rate2 * (a2[i] - t2[i]);
      return u;
    };
    j["scaled_error_hat"] = vec_json(scaled(q.theta1, q.theta2));
    j["scaled_error_tilde"] = vec_json(scaled(b.theta1, b.theta2));
  }
  out << j.dump(2) << "\n";
  return 0;
}

int do_mc(const McOpts& o, std::ostream& out) {
  std::optional<config::Config> file;
  experiments::McConfig mc;
  std::string model_name = "OU";
  if (!o.config_path.empty()) {
    file = config::Config::load(o.config_path);
    check_keys(*file, "mc",
               {"model", "gamma", "n_list", "replicates", "losses", "prior1",
                "prior2", "pilot", "seed", "substeps", "grid_nodes", "threads",
                "theta1", "theta2", "x0", "moments"});
    model_name = file->get_string_or("mc", "model", "OU");
    mc.gamma = file->get_number_or("mc", "gamma", mc.gamma);
    if (file->has("mc", "n_list")) {
      mc.n_list.clear();
      for (double v : file->get_number_list("mc", "n_list"))
        mc.n_list.push_back(static_cast<long>(v));
    }
    mc.replicates = file->get_integer_or("mc", "replicates", mc.replicates);
    mc.base_seed =
        static_cast<std::uint64_t>(file->get_integer_or("mc", "seed", 1));
    mc.substeps = static_cast<int>(file->get_integer_or("mc", "substeps", 10));
    mc.grid_nodes = static_cast<int>(file->get_integer_or("mc", "grid_nodes", 0));
    mc.threads = static_cast<int>(file->get_integer_or("mc", "threads", 0));
  }
  if (!o.model.empty()) model_name = o.model;
  if (o.gamma >= 0) mc.gamma = o.gamma;
  if (o.replicates >= 0) mc.replicates = o.replicates;
  if (o.seed >= 0) mc.base_seed = static_cast<std::uint64_t>(o.seed);
  if (o.substeps >= 0) mc.substeps = o.substeps;
  if (o.grid_nodes >= 0) mc.grid_nodes = o.grid_nodes;
  if (o.threads >= 0) mc.threads = o.threads;
  if (!o.n_list.empty()) {
    mc.n_list.clear();
    const Vec ns = parse_vec(o.n_list);
    for (int i = 0; i < ns.size(); ++i) mc.n_list.push_back(static_cast<long>(ns[i]));
  }

  mc.model = model_name;
  DiffusionModel model = model_from(model_name, file ? &*file : nullptr);
  if (model_name == "table") mc.custom_model = model;

  // truth overrides
  std::string th1 = o.theta1, th2 = o.theta2, x0 = o.x0;
  if (file) {
    if (th1.empty()) th1 = file->get_string_or("mc", "theta1", "");
    if (th2.empty()) th2 = file->get_string_or("mc", "theta2", "");
    if (x0.empty()) x0 = file->get_string_or("mc", "x0", "");
  }
  if (!th1.empty() || !th2.empty() || !x0.empty())
    mc.truth = truth_from(model, th1, th2, x0);

  // losses
  std::string losses = o.losses;
  if (losses.empty() && file) losses = file->get_string_or("mc", "losses", "");
  if (!losses.empty()) {
    std::size_t pos = 0;
    while (pos <= losses.size()) {
      auto comma = losses.find(',', pos);
      // indicator radii contain commas only in d >= 2; the pair list is
      // comma-separated, so scalar radii parse fine here
      const std::string tok = trimmed(losses.substr(
          pos, comma == std::string::npos ? std::string::npos : comma - pos));
      if (!tok.empty())
        mc.losses.push_back(parse_loss_pair(tok, model.d1(), model.d2()));
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
  }

  // priors and pilot
  std::string prior1, prior2, pilot = o.pilot;
  if (file) {
    prior1 = file->get_string_or("mc", "prior1", "");
    prior2 = file->get_string_or("mc", "prior2", "");
    if (pilot.empty()) pilot = file->get_string_or("mc", "pilot", "");
  }
  mc.prior1 = parse_prior(prior1, model.d1());
  mc.prior2 = parse_prior(prior2, model.d2());
  if (pilot.empty() || pilot == "oracle") {
    mc.pilot_mode = experiments::PilotMode::oracle;
  } else if (pilot == "center") {
    mc.pilot_mode = experiments::PilotMode::center;
  } else {
    mc.pilot_mode = experiments::PilotMode::fixed;
    try {
      std::size_t used = 0;
      mc.pilot_value = std::stod(pilot, &used);
      if (used != pilot.size()) throw std::invalid_argument(pilot);
    } catch (const std::exception&) {
      throw usage_error("pilot must be center, oracle or a number, got \"" +
                        pilot + "\"");
    }
  }

  // moments
  std::string moments = o.moments;
  if (moments.empty() && file) moments = file->get_string_or("mc", "moments", "");
  if (!moments.empty()) {
    const int dim = model.d1() + model.d2();
    std::size_t pos = 0;
    while (pos <= moments.size()) {
      auto comma = moments.find(',', pos);
      const std::string tok = trimmed(moments.substr(
          pos, comma == std::string::npos ? std::string::npos : comma - pos));
      if (!tok.empty()) mc.moments.push_back(parse_moment(tok, dim));
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
  }

  try {
    mc.validate();
  } catch (const qlbayes::error& e) {
    throw usage_error(e.what());
  }

  const auto report = experiments::run_monte_carlo(mc);
  const std::string dir = o.out_dir.empty() ? "." : o.out_dir;
  write_file(dir + "/report.json", experiments::report_to_json(report));
  write_file(dir + "/summary.csv", experiments::summary_to_csv(report));

  json echo;
  echo["model"] = model_name;
  echo["gamma"] = report.cfg.gamma;
  echo["n_list"] = report.cfg.n_list;
  echo["replicates"] = report.cfg.replicates;
  json jl = json::array();
  for (const auto& p : report.cfg.losses) jl.push_back(p.id);
  echo["losses"] = jl;
  echo["seed"] = report.cfg.base_seed;
  write_metadata(dir + "/metadata.json", "mc", echo);

  for (const auto& run : report.runs) {
    out << "n=" << run.n << " qmle kept=" << run.qmle.u.size()
        << " failures=" << run.qmle.failures;
    for (std::size_t l = 0; l < run.bayes.size(); ++l)
      out << " | " << report.cfg.losses[l].id
          << " kept=" << run.bayes[l].u.size()
          << " failures=" << run.bayes[l].failures;
    out << "\n";
  }
  if (report.runs.size() >= 2 && report.cfg.losses.size() >= 2) {
    const auto t1 = experiments::loss_independence_check(report);
    out << "loss-independence: " << (t1.pass ? "PASS" : "FAIL") << "\n";
  }
  if (static_cast<long>(report.runs.back().qmle.u.size()) >= 200) {
    const auto nc = experiments::normality_check(report);
    out << "normality: " << (nc.pass ? "PASS" : "FAIL") << "\n";
  }
  const auto mo = experiments::moment_check(report);
  out << "moment |u|^4 max/min ratio: " << mo.abs4_ratio
      << (mo.ratio_ok ? " (ok)" : " (over 3)") << "\n";
  out << "wrote " << dir << "/report.json, " << dir << "/summary.csv\n";
  return 0;
}

int do_info(const InfoOpts& o, std::ostream& out) {
  std::optional<config::Config> file;
  if (!o.config_path.empty()) file = config::Config::load(o.config_path);
  const DiffusionModel model = model_from(o.model, file ? &*file : nullptr);
  const auto truth = truth_from(model, o.theta1, o.theta2, "");
  const auto measure = asymptotics::invariant_density_1d(model, truth);
  const auto info = asymptotics::gamma_matrices(model, truth, measure);
  const auto cov = asymptotics::limit_covariance(info);
  const auto scan = asymptotics::identifiability_scan(model, truth, measure,
                                                      o.scan_points);

  json j;
  j["model"] = model.name;
  j["theta1"] = vec_json(truth.theta1);
  j["theta2"] = vec_json(truth.theta2);
  j["gamma1"] = mat_json(info.gamma1);
  j["gamma2"] = mat_json(info.gamma2);
  j["limit_cov"] = mat_json(cov);
  json y;
  y["max_y1_off_truth"] = scan.max_y1_off;
  y["max_y2_off_truth"] = scan.max_y2_off;
  y["chi1"] = scan.chi1;
  y["chi2"] = scan.chi2;
  y["identifiable"] = scan.identifiable;
  j["identifiability"] = y;
  out << j.dump(2) << "\n";
  return 0;
}

int do_validate_loss(const LossOpts& o, std::ostream& out) {
  const auto w = loss::parse_loss(o.loss, 1);
  const double p = o.p > 0 ? o.p : (w.p > 0 ? w.p : 2.0);
  const auto rep = loss::validate_loss_class(w, p);

  json j;
  j["loss"] = w.id;
  auto prop = [](const loss::PropertyCheck& c) {
    json pj;
    pj["passed"] = c.passed;
    pj["statistic"] = c.statistic;
    if (!c.detail.empty()) pj["detail"] = c.detail;
    return pj;
  };
  json props;
  props["zero_at_origin"] = prop(rep.zero_at_origin);
  props["symmetry"] = prop(rep.symmetry);
  props["sublevel_convex"] = prop(rep.sublevel_convex);
  props["sublevel_bounded"] = prop(rep.sublevel_bounded);
  props["growth"] = prop(rep.growth);
  props["all_passed"] = rep.all_passed();
  j["properties"] = props;

  const auto c1 = loss::check_separation(w, o.eta, o.r0);
  json jsep;
  jsep["eta"] = o.eta;
  jsep["r0"] = o.r0;
  jsep["satisfied"] = c1.satisfied;
  jsep["margin"] = c1.margin;
  if (!c1.satisfied) {
    jsep["witness_u"] = vec_json(c1.witness_u);
    jsep["witness_z"] = vec_json(c1.witness_z);
    jsep["witness_r"] = c1.witness_r;
  }
  j["separation"] = jsep;

  json jdom;
  jdom["m"] = o.dominance_m;
  try {
    const auto dom = loss::check_dominance(w, o.dominance_m);
    jdom["satisfied"] = true;
    jdom["m_prime"] = dom.m_prime;
    jdom["sup_inner"] = dom.sup_inner;
    jdom["inf_outer"] = dom.inf_outer;
  } catch (const loss_error& e) {
    jdom["satisfied"] = false;
    jdom["error"] = e.what();
  }
  j["dominance"] = jdom;

  out << j.dump(2) << "\n";
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err) {
  CLI::App app{"Two-stage Bayes-type and quasi-likelihood estimation for "
               "discretely observed ergodic diffusions"};
  app.name("qlbayes");
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(qlbayes::version));

  SimulateOpts so;
  auto* sim = app.add_subcommand("simulate", "Simulate discrete observations");
  sim->add_option("--config", so.config_path, "INI config file ([simulate] section)");
  sim->add_option("--model", so.model, "model name (OU, BOU, table)");
  sim->add_option("--n", so.n, "number of observed increments");
  sim->add_option("--gamma", so.gamma, "step exponent, h = n^-gamma");
  sim->add_option("--step", so.h, "explicit step size (overrides --gamma)");
  sim->add_option("--substeps", so.substeps, "Euler substeps per observation step");
  sim->add_option("--seed", so.seed, "simulation seed");
  sim->add_flag("--zero-noise", so.zero_noise, "deterministic Euler (debug)");
  sim->add_option("--theta1", so.theta1, "true theta1 (comma list)");
  sim->add_option("--theta2", so.theta2, "true theta2 (comma list)");
  sim->add_option("--x0", so.x0, "initial state (comma list)");
  sim->add_option("--out", so.out, "output CSV path");

  EstimateOpts eo;
  auto* est = app.add_subcommand("estimate", "QMLE + adaptive Bayes on a dataset");
  est->add_option("--config", eo.config_path, "INI config file ([estimate] section)");
  est->add_option("--model", eo.model, "model name");
  est->add_option("--data", eo.data, "observation CSV");
  est->add_option("--loss1", eo.loss1, "stage-1 loss spec");
  est->add_option("--loss2", eo.loss2, "stage-2 loss spec");
  est->add_option("--prior", eo.prior, "uniform | gaussian:center,sd");
  est->add_option("--pilot", eo.pilot, "fixed pilot theta2 (comma list)");
  est->add_flag("--oracle-pilot", eo.oracle_pilot,
                "pilot = model default true theta2");
  est->add_option("--grid-nodes", eo.grid_nodes, "quadrature nodes per axis");
  est->add_option("--theta1", eo.theta1, "true theta1 for scaled errors");
  est->add_option("--theta2", eo.theta2, "true theta2 for scaled errors");

  McOpts mo;
  auto* mc = app.add_subcommand("mc", "Monte Carlo asymptotics harness");
  mc->add_option("--config", mo.config_path, "INI config file ([mc] section)");
  mc->add_option("--model", mo.model, "model name");
  mc->add_option("--gamma", mo.gamma, "step exponent in (0.5, 1)");
  mc->add_option("--n-list", mo.n_list, "comma list of n values");
  mc->add_option("--replicates", mo.replicates, "replicates per n (>= 50)");
  mc->add_option("--losses", mo.losses, "comma list of loss pairs w1+w2");
  mc->add_option("--pilot", mo.pilot, "center | oracle | <number>");
  mc->add_option("--seed", mo.seed, "base seed");
  mc->add_option("--substeps", mo.substeps, "Euler substeps");
  mc->add_option("--grid-nodes", mo.grid_nodes, "quadrature nodes per axis");
  mc->add_option("--threads", mo.threads, "worker threads (0 = hardware)");
  mc->add_option("--theta1", mo.theta1, "true theta1");
  mc->add_option("--theta2", mo.theta2, "true theta2");
  mc->add_option("--x0", mo.x0, "initial state");
  mc->add_option("--moments", mo.moments, "comma list of monomials, e.g. u1^2,u2^4");
  mc->add_option("--out-dir", mo.out_dir, "output directory");

  InfoOpts io;
  auto* info = app.add_subcommand("info", "Analytic information and Y-scan");
  info->add_option("--config", io.config_path, "INI config file");
  info->add_option("--model", io.model, "model name");
  info->add_option("--theta1", io.theta1, "theta1 (defaults to model truth)");
  info->add_option("--theta2", io.theta2, "theta2 (defaults to model truth)");
  info->add_option("--scan-points", io.scan_points, "Y-scan points per axis");

  LossOpts lo;
  auto* vl = app.add_subcommand("validate-loss", "Loss-class property checks");
  vl->add_option("--loss", lo.loss, "loss spec (power:p, indicator:r, custom:<name>)");
  vl->add_option("--eta", lo.eta, "separation window exponent in (0, 1)");
  vl->add_option("--r0", lo.r0, "separation base radius (> 1)");
  vl->add_option("--p", lo.p, "growth order for the class check");
  vl->add_option("--dominance-m", lo.dominance_m, "inner radius M for the dominance check");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << qlbayes::version << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (sim->parsed()) return do_simulate(so, out);
    if (est->parsed()) return do_estimate(eo, out);
    if (mc->parsed()) return do_mc(mo, out);
    if (info->parsed()) return do_info(io, out);
    if (vl->parsed()) return do_validate_loss(lo, out);
    err << "error: no subcommand selected\n";
    return 2;
  } catch (const usage_error& e) {
    // config_error derives from usage_error, so parse errors land here too
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const qlbayes::error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace qlbayes::cli
