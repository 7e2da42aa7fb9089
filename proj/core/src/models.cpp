#include "qlbayes/models.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace qlbayes::models {

namespace {

std::string fmt_vec(const VecRef& v) {
  std::ostringstream os;
  os << "(";
  for (int i = 0; i < v.size(); ++i) os << (i ? ", " : "") << v[i];
  os << ")";
  return os.str();
}

}  // namespace

ParameterBox::ParameterBox(Vec lo, Vec hi) : lower(std::move(lo)), upper(std::move(hi)) {
  if (lower.size() != upper.size())
    throw box_error("box bounds have mismatched dimensions");
  if (lower.size() == 0) throw box_error("box must have dimension >= 1");
  for (int i = 0; i < lower.size(); ++i)
    if (!(lower[i] < upper[i]))
      throw box_error("box bounds must satisfy lower < upper in every axis");
}

ParameterBox::ParameterBox(double lo, double hi)
    : ParameterBox(Vec::Constant(1, lo), Vec::Constant(1, hi)) {}

double ParameterBox::volume() const { return widths().prod(); }

bool ParameterBox::contains(const VecRef& v, double slack) const {
  if (v.size() != lower.size()) return false;
  for (int i = 0; i < v.size(); ++i)
    if (v[i] < lower[i] - slack || v[i] > upper[i] + slack) return false;
  return true;
}

Vec ParameterBox::clamp(const VecRef& v) const {
  if (v.size() != lower.size()) throw box_error("clamp: dimension mismatch");
  return v.cwiseMax(lower).cwiseMin(upper);
}

Mat eval_B(const DiffusionModel& model, const VecRef& x, const VecRef& th1) {
  Mat b(model.m, model.r);
  model.diffusion(x, th1, b);
  Mat B = b * b.transpose();
  Eigen::SelfAdjointEigenSolver<Mat> es(B, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  if (!std::isfinite(lo) || lo <= 0.0) {
    std::ostringstream os;
    os << "diffusion matrix b b^T is not positive definite at x = " << fmt_vec(x)
       << ", theta1 = " << fmt_vec(th1) << " (min eigenvalue " << lo << ")";
    throw ellipticity_error(os.str());
  }
  return B;
}

namespace {

DiffusionModel make_ou() {
  DiffusionModel m;
  m.name = "OU";
  m.m = m.r = 1;
  m.theta1_box = ParameterBox(0.2, 5.0);
  m.theta2_box = ParameterBox(0.2, 5.0);
  m.drift = [](const VecRef& x, const VecRef& th2, Eigen::Ref<Vec> out) {
    out[0] = -th2[0] * x[0];
  };
  m.diffusion = [](const VecRef&, const VecRef& th1, Eigen::Ref<Mat> out) {
    out(0, 0) = th1[0];
  };
  m.drift_jac = [](const VecRef& x, const VecRef&, Eigen::Ref<Mat> out) {
    out(0, 0) = -x[0];
  };
  m.drift_hess = [](const VecRef&, const VecRef&, int, int, Eigen::Ref<Vec> out) {
    out[0] = 0.0;
  };
  m.diffusion_jac = [](const VecRef&, const VecRef&, int, Eigen::Ref<Mat> out) {
    out(0, 0) = 1.0;
  };
  m.diffusion_hess = [](const VecRef&, const VecRef&, int, int, Eigen::Ref<Mat> out) {
    out(0, 0) = 0.0;
  };
  Scalar1D s;
  s.drift = [](double x, double th2) { return -th2 * x; };
  s.diff = [](double, double th1) { return th1; };
  s.drift_dth = [](double x, double) { return -x; };
  s.drift_dth2 = [](double, double) { return 0.0; };
  s.diff_dth = [](double, double) { return 1.0; };
  s.diff_dth2 = [](double, double) { return 0.0; };
  m.scalar = s;
  m.stationary_density = [](double x, const VecRef& th1, const VecRef& th2) {
    const double var = th1[0] * th1[0] / (2.0 * th2[0]);
    return std::exp(-x * x / (2.0 * var)) / std::sqrt(2.0 * std::numbers::pi * var);
  };
  m.stationary_support = [](const VecRef& th1, const VecRef& th2) {
    const double sd = th1[0] / std::sqrt(2.0 * th2[0]);
    return std::pair<double, double>(-10.0 * sd, 10.0 * sd);
  };
  m.default_truth = TrueParameter{Vec::Constant(1, 1.0), Vec::Constant(1, 1.0),
                                  Vec::Constant(1, 0.0)};
  return m;
}

DiffusionModel make_bou() {
  DiffusionModel m;
  m.name = "BOU";
  m.m = m.r = 1;
  m.theta1_box = ParameterBox(0.2, 5.0);
  m.theta2_box = ParameterBox(0.2, 5.0);
  m.drift = [](const VecRef& x, const VecRef& th2, Eigen::Ref<Vec> out) {
    out[0] = -th2[0] * x[0];
  };
  m.diffusion = [](const VecRef& x, const VecRef& th1, Eigen::Ref<Mat> out) {
    out(0, 0) = th1[0] * (2.0 + std::cos(x[0])) / 2.0;
  };
  m.drift_jac = [](const VecRef& x, const VecRef&, Eigen::Ref<Mat> out) {
    out(0, 0) = -x[0];
  };
  m.drift_hess = [](const VecRef&, const VecRef&, int, int, Eigen::Ref<Vec> out) {
    out[0] = 0.0;
  };
  m.diffusion_jac = [](const VecRef& x, const VecRef&, int, Eigen::Ref<Mat> out) {
    out(0, 0) = (2.0 + std::cos(x[0])) / 2.0;
  };
  m.diffusion_hess = [](const VecRef&, const VecRef&, int, int, Eigen::Ref<Mat> out) {
    out(0, 0) = 0.0;
  };
  Scalar1D s;
  s.drift = [](double x, double th2) { return -th2 * x; };
  s.diff = [](double x, double th1) { return th1 * (2.0 + std::cos(x)) / 2.0; };
  s.drift_dth = [](double x, double) { return -x; };
  s.drift_dth2 = [](double, double) { return 0.0; };
  s.diff_dth = [](double x, double) { return (2.0 + std::cos(x)) / 2.0; };
  s.diff_dth2 = [](double, double) { return 0.0; };
  m.scalar = s;
  m.default_truth = TrueParameter{Vec::Constant(1, 1.0), Vec::Constant(1, 1.0),
                                  Vec::Constant(1, 0.0)};
  return m;
}

}  // namespace

std::vector<std::string> builtin_model_names() { return {"OU", "BOU"}; }

DiffusionModel builtin_model(const std::string& name) {
  if (name == "OU") return make_ou();
  if (name == "BOU") return make_bou();
  std::ostringstream os;
  os << "unknown model \"" << name << "\"; available:";
  for (const auto& n : builtin_model_names()) os << " " << n;
  throw usage_error(os.str());
}

DiffusionModel make_table_model(const std::vector<double>& drift_coeffs,
                                const std::vector<double>& diff_coeffs,
                                const ParameterBox& box1, const ParameterBox& box2) {
  if (drift_coeffs.empty()) throw model_error("table model: drift needs >= 1 coefficient");
  if (diff_coeffs.empty() || diff_coeffs.size() > 2)
    throw model_error("table model: diff takes 1 or 2 coefficients [d0, d1]");
  if (box1.dim() != 1 || box2.dim() != 1)
    throw model_error("table model: parameter boxes must be 1-D");
  const double d0 = diff_coeffs[0];
  const double d1 = diff_coeffs.size() > 1 ? diff_coeffs[1] : 0.0;
  auto poly = [c = drift_coeffs](double x) {
    double acc = 0.0;
    for (std::size_t k = c.size(); k-- > 0;) acc = acc * x + c[k];
    return acc;
  };
  auto shape = [d0, d1](double x) { return d0 + d1 * std::cos(x); };

  DiffusionModel m;
  m.name = "table";
  m.m = m.r = 1;
  m.theta1_box = box1;
  m.theta2_box = box2;
  m.drift = [poly](const VecRef& x, const VecRef& th2, Eigen::Ref<Vec> out) {
    out[0] = -th2[0] * poly(x[0]);
  };
  m.diffusion = [shape](const VecRef& x, const VecRef& th1, Eigen::Ref<Mat> out) {
    out(0, 0) = th1[0] * shape(x[0]);
  };
  m.drift_jac = [poly](const VecRef& x, const VecRef&, Eigen::Ref<Mat> out) {
    out(0, 0) = -poly(x[0]);
  };
  m.drift_hess = [](const VecRef&, const VecRef&, int, int, Eigen::Ref<Vec> out) {
    out[0] = 0.0;
  };
  m.diffusion_jac = [shape](const VecRef& x, const VecRef&, int, Eigen::Ref<Mat> out) {
    out(0, 0) = shape(x[0]);
  };
  m.diffusion_hess = [](const VecRef&, const VecRef&, int, int, Eigen::Ref<Mat> out) {
    out(0, 0) = 0.0;
  };
  Scalar1D s;
  s.drift = [poly](double x, double th2) { return -th2 * poly(x); };
  s.diff = [shape](double x, double th1) { return th1 * shape(x); };
  s.drift_dth = [poly](double x, double) { return -poly(x); };
  s.drift_dth2 = [](double, double) { return 0.0; };
  s.diff_dth = [shape](double x, double) { return shape(x); };
  s.diff_dth2 = [](double, double) { return 0.0; };
  m.scalar = s;
  m.default_truth = TrueParameter{0.5 * (box1.lower + box1.upper),
                                  0.5 * (box2.lower + box2.upper),
                                  Vec::Constant(1, 0.0)};
  return m;
}

RegularityReport check_regularity(const DiffusionModel& model,
                                  const std::vector<ProbePoint>& grid) {
  RegularityReport rep;
  rep.min_eig_B = std::numeric_limits<double>::infinity();
  Vec a(model.m), a2(model.m);
  Mat b(model.m, model.r), b2(model.m, model.r);

  for (const auto& p : grid) {
    model.drift(p.x, p.th2, a);
    model.diffusion(p.x, p.th1, b);
    if (!a.allFinite() || !b.allFinite()) {
      rep.finite_ok = false;
      rep.flags.push_back("non-finite coefficient at x = " + fmt_vec(p.x));
      continue;
    }
    Mat B = b * b.transpose();
    Eigen::SelfAdjointEigenSolver<Mat> es(B, Eigen::EigenvaluesOnly);
    const double lo = es.eigenvalues().minCoeff();
    rep.min_eig_B = std::min(rep.min_eig_B, lo);
    if (lo <= 0.0) {
      rep.ellipticity_ok = false;
      rep.flags.push_back("non-elliptic at x = " + fmt_vec(p.x) +
                          ", theta1 = " + fmt_vec(p.th1));
    }
    // drift growth |da/dx| / (1+|x|)^3 via central differences.
    const double dx = 1e-5 * (1.0 + p.x.norm());
    for (int c = 0; c < model.m; ++c) {
      Vec xp = p.x, xm = p.x;
      xp[c] += dx;
      xm[c] -= dx;
      model.drift(xp, p.th2, a);
      model.drift(xm, p.th2, a2);
      const double da = (a - a2).norm() / (2.0 * dx);
      const double denom = std::pow(1.0 + p.x.norm(), 3);
      rep.max_growth_ratio = std::max(rep.max_growth_ratio, da / denom);
    }
  }

  // Lipschitz ratios over pairs sharing the same parameter point.
  for (std::size_t i = 0; i < grid.size(); ++i) {
    for (std::size_t j = i + 1; j < grid.size(); ++j) {
      const auto& p = grid[i];
      const auto& q = grid[j];
      if ((p.th1 - q.th1).cwiseAbs().maxCoeff() > 0 ||
          (p.th2 - q.th2).cwiseAbs().maxCoeff() > 0)
        continue;
      const double dist = (p.x - q.x).norm();
      if (dist < 1e-12) continue;
      model.drift(p.x, p.th2, a);
      model.drift(q.x, q.th2, a2);
      rep.max_lipschitz_a = std::max(rep.max_lipschitz_a, (a - a2).norm() / dist);
      model.diffusion(p.x, p.th1, b);
      model.diffusion(q.x, q.th1, b2);
      rep.max_lipschitz_b = std::max(rep.max_lipschitz_b, (b - b2).norm() / dist);
    }
  }
  return rep;
}

std::vector<ProbePoint> default_probe_grid(const DiffusionModel& model,
                                           int x_points, int th_points) {
  if (x_points < 2 || th_points < 2)
    throw model_error("probe grid needs >= 2 points per axis");
  std::vector<ProbePoint> grid;
  // x sweeps per coordinate axis (others held at 0); endpoint-inclusive
  // parameter sweeps so box-boundary ellipticity shows up.
  std::vector<Vec> xs;
  for (int c = 0; c < model.m; ++c) {
    for (int i = 0; i < x_points; ++i) {
      Vec x = Vec::Zero(model.m);
      x[c] = -5.0 + 10.0 * i / (x_points - 1);
      xs.push_back(x);
      if (model.m > 1 && x[c] == 0.0) break;  // dedupe the shared origin
    }
  }
  auto sweep = [&](const ParameterBox& box) {
    std::vector<Vec> out;
    const Vec c = box.center();
    for (int axis = 0; axis < box.dim(); ++axis) {
      for (int i = 0; i < th_points; ++i) {
        Vec v = c;
        v[axis] = box.lower[axis] +
                  (box.upper[axis] - box.lower[axis]) * i / (th_points - 1);
        out.push_back(v);
      }
    }
    return out;
  };
  for (const auto& x : xs)
    for (const auto& t1 : sweep(model.theta1_box))
      for (const auto& t2 : sweep(model.theta2_box))
        grid.push_back(ProbePoint{x, t1, t2});
  return grid;
}

}  // namespace qlbayes::models
