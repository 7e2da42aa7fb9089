#include "qlbayes/asymptotics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace qlbayes::asymptotics {

namespace {

constexpr int kMeshPoints = 32769;  // 2^15 + 1: composite Simpson needs odd

// Composite Simpson over uniformly spaced samples (odd count).
double simpson(const std::vector<double>& f, double step) {
  double acc = f.front() + f.back();
  for (std::size_t i = 1; i + 1 < f.size(); ++i) acc += (i % 2 ? 4.0 : 2.0) * f[i];
  return acc * step / 3.0;
}

struct Tabulation {
  std::vector<double> xs, fs;  // unnormalized values on the mesh
  double mass = 0;
};

Tabulation tabulate(const std::function<double(double)>& fn, double lo, double hi) {
  Tabulation t;
  t.xs.resize(kMeshPoints);
  t.fs.resize(kMeshPoints);
  const double step = (hi - lo) / (kMeshPoints - 1);
  for (int i = 0; i < kMeshPoints; ++i) {
    const double x = lo + step * i;
    const double v = fn(x);
    if (!std::isfinite(v) || v < 0)
      throw not_ergodic_error("stationary density takes a negative or non-finite value");
    t.xs[i] = x;
    t.fs[i] = v;
  }
  t.mass = simpson(t.fs, step);
  return t;
}

}  // namespace

InvariantMeasure InvariantMeasure::analytic(std::function<double(double)> unnormalized,
                                            double lo, double hi, bool grow_support,
                                            bool exact_form) {
  if (!(lo < hi)) throw not_ergodic_error("invariant measure: need lo < hi");
  Tabulation tab = tabulate(unnormalized, lo, hi);
  if (grow_support) {
    double prev_added = std::numeric_limits<double>::infinity();
    int stalls = 0;
    while (true) {
      const double mid = 0.5 * (lo + hi);
      const double half = 0.75 * (hi - lo);  // grow width by 1.5x
      Tabulation wider = tabulate(unnormalized, mid - half, mid + half);
      const double added = wider.mass - tab.mass;
      if (!(wider.mass > 0) || !std::isfinite(wider.mass))
        throw not_ergodic_error("stationary density does not normalize");
      if (added <= 1e-8 * wider.mass) break;
      if (added >= prev_added) {
        if (++stalls >= 2)
          throw not_ergodic_error(
              "stationary tail mass keeps growing; the model looks non-ergodic");
      } else {
        stalls = 0;
      }
      prev_added = added;
      lo = mid - half;
      hi = mid + half;
      tab = std::move(wider);
      if (hi - lo > 1e6)
        throw not_ergodic_error(
            "stationary support exceeded width 1e6 without normalizing");
    }
  }
  if (!(tab.mass > 0))
    throw not_ergodic_error("stationary density has zero mass on the support");

  InvariantMeasure m;
  m.kind_ = Kind::analytic;
  m.lo_ = tab.xs.front();
  m.hi_ = tab.xs.back();
  m.xs_ = std::move(tab.xs);
  m.ps_ = std::move(tab.fs);
  for (double& p : m.ps_) p /= tab.mass;
  if (exact_form) {
    if (std::abs(tab.mass - 1.0) > 1e-6)
      throw not_ergodic_error("closed-form stationary density does not integrate to 1");
    m.form_ = std::move(unnormalized);
  }
  // construction check: normalized tabulation integrates to 1
  const double step = (m.hi_ - m.lo_) / (kMeshPoints - 1);
  if (std::abs(simpson(m.ps_, step) - 1.0) > 1e-6)
    throw not_ergodic_error("normalized stationary density fails the mass check");
  return m;
}

InvariantMeasure InvariantMeasure::empirical(std::vector<double> states) {
  if (states.size() < 100)
    throw not_ergodic_error("empirical measure needs >= 100 states");
  InvariantMeasure m;
  m.kind_ = Kind::empirical;
  auto [lo, hi] = std::minmax_element(states.begin(), states.end());
  m.lo_ = *lo;
  m.hi_ = *hi;
  m.states_ = std::move(states);
  return m;
}

double InvariantMeasure::density(double x) const {
  if (kind_ != Kind::analytic)
    throw not_ergodic_error("density() is only defined for the analytic kind");
  if (form_) return form_(x);
  if (x <= lo_ || x >= hi_) {
    if (x == lo_) return ps_.front();
    if (x == hi_) return ps_.back();
    return 0.0;
  }
  // Catmull-Rom cubic on the uniform mesh: O(step^4) interpolation error.
  const long count = static_cast<long>(xs_.size());
  const double step = (hi_ - lo_) / (count - 1);
  const double s = (x - lo_) / step;
  long i = static_cast<long>(s);
  i = std::clamp<long>(i, 1, count - 3);
  const double t = s - i;
  const double p0 = ps_[i - 1], p1 = ps_[i], p2 = ps_[i + 1], p3 = ps_[i + 2];
  const double v = p1 + 0.5 * t * (p2 - p0 +
                                   t * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3 +
                                        t * (3.0 * (p1 - p2) + p3 - p0)));
  return std::max(v, 0.0);
}

double InvariantMeasure::expect(const std::function<double(double)>& g) const {
  if (kind_ == Kind::empirical) {
    double acc = 0.0;
    for (double x : states_) acc += g(x);
    return acc / static_cast<double>(states_.size());
  }
  std::vector<double> f(xs_.size());
  for (std::size_t i = 0; i < xs_.size(); ++i) f[i] = g(xs_[i]) * ps_[i];
  const double step = (hi_ - lo_) / (static_cast<double>(xs_.size()) - 1);
  return simpson(f, step);
}

InvariantMeasure invariant_density_1d(const DiffusionModel& model,
                                      const TrueParameter& truth) {
  if (model.m != 1)
    throw not_ergodic_error("invariant_density_1d needs a 1-D state space");

  if (model.stationary_density) {
    auto support = model.stationary_support
                       ? model.stationary_support(truth.theta1, truth.theta2)
                       : std::pair<double, double>(-10.0, 10.0);
    auto fn = [model, truth](double x) {
      return model.stationary_density(x, truth.theta1, truth.theta2);
    };
    return InvariantMeasure::analytic(fn, support.first, support.second,
                                      /*grow_support=*/false, /*exact_form=*/true);
  }

  // speed-measure construction on a growing support
  Vec x1(1), a(1);
  models::Mat b(1, 1);
  auto drift_at = [&](double x) {
    Vec xv = Vec::Constant(1, x), out(1);
    model.drift(xv, truth.theta2, out);
    return out[0];
  };
  auto B_at = [&](double x) {
    Vec xv = Vec::Constant(1, x);
    models::Mat bb(1, 1);
    model.diffusion(xv, truth.theta1, bb);
    const double B = bb(0, 0) * bb(0, 0);
    if (!(B > 0) || !std::isfinite(B))
      throw ellipticity_error("diffusion vanishes inside the stationary support");
    return B;
  };

  // initial support scale from the linearization at 0
  const double d = 1e-4;
  const double slope = (drift_at(d) - drift_at(-d)) / (2.0 * d);
  const double rate = std::max(std::abs(std::min(slope, 0.0)), 0.1);
  const double sigma = std::sqrt(B_at(0.0) / (2.0 * rate));

  // Unnormalized density exp(int_0^x 2a/B ds)/B(x), with the integral done by
  // per-interval Simpson from 0 outward each call.  Calls arrive on a uniform
  // mesh, so cache cumulative values keyed by x (monotone fill would need
  // call-order guarantees; recomputing from 0 keeps it a pure function).
  auto integrand = [&](double s) { return 2.0 * drift_at(s) / B_at(s); };
  auto speed = [&](double x) {
    const int steps = std::max(32, static_cast<int>(std::abs(x) * 64));
    const double hstep = x / steps;
    double acc = 0.0;
    for (int i = 0; i < steps; ++i) {
      const double a0 = hstep * i, a1 = hstep * (i + 1);
      acc += (integrand(a0) + 4.0 * integrand(0.5 * (a0 + a1)) + integrand(a1)) *
             (a1 - a0) / 6.0;
    }
    return std::exp(acc) / B_at(x);
  };
  return InvariantMeasure::analytic(speed, -4.0 * sigma, 4.0 * sigma,
                                    /*grow_support=*/true);
}

InvariantMeasure empirical_measure(const simulator::ObservationSet& path) {
  if (path.m != 1)
    throw not_ergodic_error("empirical measure needs a 1-D state space");
  return InvariantMeasure::empirical(path.data);
}

namespace {

// dB_j and da_j as functions of x at the true parameter, analytic or FD.
struct CoefficientDerivatives {
  const DiffusionModel& model;
  const TrueParameter& truth;
  bool analytic;

  models::Mat dB(double x, int j) const {
    Vec xv = Vec::Constant(1, x);
    models::Mat b(model.m, model.r), db(model.m, model.r);
    model.diffusion(xv, truth.theta1, b);
    if (analytic) {
      model.diffusion_jac(xv, truth.theta1, j, db);
    } else {
      const double d = 1e-5 * (1.0 + std::abs(truth.theta1[j]));
      Vec tp = truth.theta1, tm = truth.theta1;
      tp[j] += d;
      tm[j] -= d;
      models::Mat bp(model.m, model.r), bm(model.m, model.r);
      model.diffusion(xv, tp, bp);
      model.diffusion(xv, tm, bm);
      db = (bp - bm) / (2.0 * d);
    }
    models::Mat out = db * b.transpose();
    out += out.transpose().eval();
    return out;
  }

  Vec da(double x, int j) const {
    Vec xv = Vec::Constant(1, x);
    if (analytic) {
      models::Mat ja(model.m, model.d2());
      model.drift_jac(xv, truth.theta2, ja);
      return ja.col(j);
    }
    const double d = 1e-5 * (1.0 + std::abs(truth.theta2[j]));
    Vec tp = truth.theta2, tm = truth.theta2;
    tp[j] += d;
    tm[j] -= d;
    Vec ap(model.m), am(model.m);
    model.drift(xv, tp, ap);
    model.drift(xv, tm, am);
    return (ap - am) / (2.0 * d);
  }

  models::Mat B(double x) const {
    Vec xv = Vec::Constant(1, x);
    models::Mat b(model.m, model.r);
    model.diffusion(xv, truth.theta1, b);
    return b * b.transpose();
  }

  Vec a(double x, const VecRef& th2) const {
    Vec xv = Vec::Constant(1, x), out(model.m);
    model.drift(xv, th2, out);
    return out;
  }
};

}  // namespace

InformationMatrices gamma_matrices(const DiffusionModel& model,
                                   const TrueParameter& truth,
                                   const InvariantMeasure& measure,
                                   qla::DerivativeMode mode) {
  if (model.m != 1)
    throw not_ergodic_error("information matrices need a 1-D state space");
  bool analytic = model.has_analytic_derivatives();
  if (mode == qla::DerivativeMode::finite_difference) analytic = false;
  if (mode == qla::DerivativeMode::analytic && !analytic)
    throw model_error("model does not provide analytic parameter derivatives");
  CoefficientDerivatives cd{model, truth, analytic};

  const int d1 = model.d1(), d2 = model.d2();
  InformationMatrices info;
  info.gamma1 = Mat::Zero(d1, d1);
  info.gamma2 = Mat::Zero(d2, d2);
  for (int j = 0; j < d1; ++j)
    for (int k = j; k < d1; ++k) {
      const double v = measure.expect([&](double x) {
        const models::Mat B = cd.B(x);
        const models::Mat Binv = B.inverse();
        return 0.5 * (Binv * cd.dB(x, j) * Binv * cd.dB(x, k)).trace();
      });
      info.gamma1(j, k) = info.gamma1(k, j) = v;
    }
  for (int j = 0; j < d2; ++j)
    for (int k = j; k < d2; ++k) {
      const double v = measure.expect([&](double x) {
        const models::Mat Binv = cd.B(x).inverse();
        return (cd.da(x, j).transpose() * Binv * cd.da(x, k)).value();
      });
      info.gamma2(j, k) = info.gamma2(k, j) = v;
    }
  return info;
}

Mat limit_covariance(const InformationMatrices& info) {
  const int d1 = static_cast<int>(info.gamma1.rows());
  const int d2 = static_cast<int>(info.gamma2.rows());
  Eigen::SelfAdjointEigenSolver<Mat> e1(info.gamma1), e2(info.gamma2);
  if (e1.eigenvalues().minCoeff() <= 0 || e2.eigenvalues().minCoeff() <= 0)
    throw identifiability_error("information matrix is not positive definite");
  Mat cov = Mat::Zero(d1 + d2, d1 + d2);
  cov.topLeftCorner(d1, d1) = info.gamma1.inverse();
  cov.bottomRightCorner(d2, d2) = info.gamma2.inverse();
  return cov;
}

IdentifiabilityReport identifiability_scan(const DiffusionModel& model,
                                           const TrueParameter& truth,
                                           const InvariantMeasure& measure,
                                           int points_per_axis) {
  if (model.m != 1)
    throw not_ergodic_error("identifiability scan needs a 1-D state space");
  if (model.d1() != 1 || model.d2() != 1)
    throw model_error("identifiability scan supports scalar parameter stages");
  if (points_per_axis < 3) throw model_error("identifiability scan needs >= 3 points");

  CoefficientDerivatives cd{model, truth, model.has_analytic_derivatives()};
  IdentifiabilityReport rep;

  auto axis_grid = [&](const models::ParameterBox& box, const Vec& star) {
    std::vector<Vec> pts;
    for (int i = 0; i < points_per_axis; ++i)
      pts.push_back(Vec::Constant(
          1, box.lower[0] + (box.upper[0] - box.lower[0]) * i / (points_per_axis - 1)));
    pts.push_back(star);
    return pts;
  };
  rep.grid1 = axis_grid(model.theta1_box, truth.theta1);
  rep.grid2 = axis_grid(model.theta2_box, truth.theta2);

  auto check = [](double y, int stage) {
    if (y > 1e-8) {
      std::ostringstream os;
      os << "Y" << stage << " is positive (" << y
         << "): identifiability integrand broke its sign bound";
      throw identifiability_error(os.str());
    }
  };

  const double cell1 =
      (model.theta1_box.upper[0] - model.theta1_box.lower[0]) / (points_per_axis - 1);
  const double cell2 =
      (model.theta2_box.upper[0] - model.theta2_box.lower[0]) / (points_per_axis - 1);

  rep.max_y1_off = -std::numeric_limits<double>::infinity();
  rep.max_y2_off = -std::numeric_limits<double>::infinity();
  rep.chi1 = std::numeric_limits<double>::infinity();
  rep.chi2 = std::numeric_limits<double>::infinity();

  for (const auto& t1 : rep.grid1) {
    const double y = measure.expect([&](double x) {
      Vec xv = Vec::Constant(1, x);
      models::Mat b(1, 1), bs(1, 1);
      model.diffusion(xv, t1, b);
      model.diffusion(xv, truth.theta1, bs);
      const double B = b(0, 0) * b(0, 0), Bs = bs(0, 0) * bs(0, 0);
      return -0.5 * (Bs / B - 1.0 + std::log(B / Bs));
    });
    check(y, 1);
    rep.y1.push_back(y);
    const double dist = std::abs(t1[0] - truth.theta1[0]);
    if (dist > cell1) {
      rep.max_y1_off = std::max(rep.max_y1_off, y);
      rep.chi1 = std::min(rep.chi1, -y / (dist * dist));
    }
  }
  for (const auto& t2 : rep.grid2) {
    const double y = measure.expect([&](double x) {
      const Vec diff = cd.a(x, t2) - cd.a(x, truth.theta2);
      const models::Mat Binv = cd.B(x).inverse();
      return -0.5 * (diff.transpose() * Binv * diff).value();
    });
    check(y, 2);
    rep.y2.push_back(y);
    const double dist = std::abs(t2[0] - truth.theta2[0]);
    if (dist > cell2) {
      rep.max_y2_off = std::max(rep.max_y2_off, y);
      rep.chi2 = std::min(rep.chi2, -y / (dist * dist));
    }
  }
  rep.identifiable = rep.max_y1_off < 0 && rep.max_y2_off < 0;
  return rep;
}

}  // namespace qlbayes::asymptotics
