#include "qlbayes/qla.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <sstream>

namespace qlbayes::qla {

namespace {

void check_inputs(const DiffusionModel& model, const ObservationSet& obs,
                  const VecRef& th1, const VecRef& th2) {
  if (obs.m != model.m) throw model_error("observation dimension does not match model");
  if (obs.n < 1) throw model_error("contrast needs at least one increment");
  if (!(obs.h > 0)) throw model_error("contrast needs h > 0");
  if (th1.size() != model.d1() || th2.size() != model.d2())
    throw model_error("parameter dimension does not match model");
}

[[noreturn]] void throw_singular(long i) {
  std::ostringstream os;
  os << "B = b b^T is singular at observation " << i;
  throw ellipticity_error(os.str());
}

double scalar_contrast(const models::Scalar1D& sc, const ObservationSet& obs,
                       double th1, double th2) {
  const double h = obs.h;
  const double* x = obs.data.data();
  double acc = 0.0;
  for (long i = 0; i < obs.n; ++i) {
    const double xi = x[i];
    const double e = x[i + 1] - xi - h * sc.drift(xi, th2);
    const double b = sc.diff(xi, th1);
    const double B = b * b;
    if (!(B > 0) || !std::isfinite(B)) throw_singular(i + 1);
    acc += e * e / (h * B) + std::log(B);
  }
  return -0.5 * acc;
}

struct Workspace {
  Vec a, e, v, dx;
  Mat b, B;
  Eigen::LLT<Mat> llt;
  explicit Workspace(const DiffusionModel& m)
      : a(m.m), e(m.m), v(m.m), dx(m.m), b(m.m, m.r), B(m.m, m.m) {}
};

double generic_contrast(const DiffusionModel& model, const ObservationSet& obs,
                        const VecRef& th1, const VecRef& th2) {
  const double h = obs.h;
  Workspace w(model);
  double acc = 0.0;
  for (long i = 0; i < obs.n; ++i) {
    const auto x = obs.state(i);
    model.drift(x, th2, w.a);
    model.diffusion(x, th1, w.b);
    w.B.noalias() = w.b * w.b.transpose();
    w.llt.compute(w.B);
    if (w.llt.info() != Eigen::Success) throw_singular(i + 1);
    double logdet = 0.0;
    for (int c = 0; c < model.m; ++c) {
      const double l = w.llt.matrixL()(c, c);
      if (!(l > 0) || !std::isfinite(l)) throw_singular(i + 1);
      logdet += 2.0 * std::log(l);
    }
    w.e = obs.state(i + 1) - x - h * w.a;
    w.v = w.llt.solve(w.e);
    acc += w.e.dot(w.v) / h + logdet;
  }
  return -0.5 * acc;
}

// Analytic derivatives, scalar fast path (m = r = d1 = d2 = 1).
ContrastEvaluation scalar_derivatives(const models::Scalar1D& sc,
                                      const ObservationSet& obs, double th1,
                                      double th2) {
  const double h = obs.h;
  const double* x = obs.data.data();
  double value = 0.0, g1 = 0.0, g2 = 0.0, h11 = 0.0, h22 = 0.0, h12 = 0.0;
  for (long i = 0; i < obs.n; ++i) {
    const double xi = x[i];
    const double a = sc.drift(xi, th2);
    const double da = sc.drift_dth(xi, th2);
    const double dda = sc.drift_dth2(xi, th2);
    const double b = sc.diff(xi, th1);
    const double db = sc.diff_dth(xi, th1);
    const double ddb = sc.diff_dth2(xi, th1);
    const double B = b * b;
    if (!(B > 0) || !std::isfinite(B)) throw_singular(i + 1);
    const double dB = 2.0 * b * db;
    const double ddB = 2.0 * (db * db + b * ddb);
    const double e = x[i + 1] - xi - h * a;
    const double e2 = e * e;
    value += e2 / (h * B) + std::log(B);
    g2 += da * e / B;
    h22 += dda * e / B - h * da * da / B;
    g1 += 0.5 * (e2 * dB / (h * B * B) - dB / B);
    h11 += 0.5 * (e2 * (ddB * B - 2.0 * dB * dB) / (h * B * B * B) +
                  dB * dB / (B * B) - ddB / B);
    h12 += -da * dB * e / (B * B);
  }
  ContrastEvaluation ev;
  ev.value = -0.5 * value;
  ev.grad1 = Vec::Constant(1, g1);
  ev.grad2 = Vec::Constant(1, g2);
  ev.hess11 = Mat::Constant(1, 1, h11);
  ev.hess22 = Mat::Constant(1, 1, h22);
  ev.hess12 = Mat::Constant(1, 1, h12);
  return ev;
}

ContrastEvaluation generic_analytic(const DiffusionModel& model,
                                    const ObservationSet& obs, const VecRef& th1,
                                    const VecRef& th2) {
  const int m = model.m, r = model.r, d1 = model.d1(), d2 = model.d2();
  const double h = obs.h;
  ContrastEvaluation ev;
  ev.grad1 = Vec::Zero(d1);
  ev.grad2 = Vec::Zero(d2);
  ev.hess11 = Mat::Zero(d1, d1);
  ev.hess22 = Mat::Zero(d2, d2);
  ev.hess12 = Mat::Zero(d1, d2);

  Workspace w(model);
  Mat Ja(m, d2);
  std::vector<Mat> db(d1, Mat(m, r)), dB(d1, Mat(m, m)), W(d1, Mat(m, m));
  Mat ddb(m, r), ddB(m, m), tmp(m, m);
  Vec hv(m), q(m);
  double acc = 0.0;

  for (long i = 0; i < obs.n; ++i) {
    const auto x = obs.state(i);
    model.drift(x, th2, w.a);
    model.drift_jac(x, th2, Ja);
    model.diffusion(x, th1, w.b);
    w.B.noalias() = w.b * w.b.transpose();
    w.llt.compute(w.B);
    if (w.llt.info() != Eigen::Success) throw_singular(i + 1);
    double logdet = 0.0;
    for (int c = 0; c < m; ++c) {
      const double l = w.llt.matrixL()(c, c);
      if (!(l > 0) || !std::isfinite(l)) throw_singular(i + 1);
      logdet += 2.0 * std::log(l);
    }
    w.e = obs.state(i + 1) - x - h * w.a;
    w.v = w.llt.solve(w.e);
    acc += w.e.dot(w.v) / h + logdet;

    for (int j = 0; j < d1; ++j) {
      model.diffusion_jac(x, th1, j, db[j]);
      dB[j].noalias() = db[j] * w.b.transpose();
      dB[j] += dB[j].transpose().eval();
      W[j] = w.llt.solve(dB[j]);
      ev.grad1[j] += 0.5 * (w.v.dot(dB[j] * w.v) / h - W[j].trace());
    }
    ev.grad2.noalias() += Ja.transpose() * w.v;

    for (int j = 0; j < d2; ++j) {
      for (int k = j; k < d2; ++k) {
        model.drift_hess(x, th2, j, k, hv);
        const double val = hv.dot(w.v) - h * Ja.col(j).dot(w.llt.solve(Ja.col(k)));
        ev.hess22(j, k) += val;
        if (k != j) ev.hess22(k, j) += val;
      }
    }
    for (int j = 0; j < d1; ++j) {
      for (int k = j; k < d1; ++k) {
        model.diffusion_hess(x, th1, j, k, ddb);
        ddB.noalias() = ddb * w.b.transpose();
        ddB += ddB.transpose().eval();
        tmp.noalias() = db[j] * db[k].transpose();
        ddB += tmp + tmp.transpose();
        const double quad = w.v.dot(ddB * w.v) - 2.0 * w.v.dot(dB[k] * (w.llt.solve(dB[j] * w.v)));
        const double val = 0.5 * quad / h + 0.5 * (W[k] * W[j]).trace() -
                           0.5 * w.llt.solve(ddB).trace();
        ev.hess11(j, k) += val;
        if (k != j) ev.hess11(k, j) += val;
      }
      q = w.llt.solve(dB[j] * w.v);
      for (int k = 0; k < d2; ++k) ev.hess12(j, k) += -Ja.col(k).dot(q);
    }
  }
  ev.value = -0.5 * acc;
  return ev;
}

ContrastEvaluation finite_difference(const DiffusionModel& model,
                                     const ObservationSet& obs, const VecRef& th1,
                                     const VecRef& th2) {
  const int d1 = model.d1(), d2 = model.d2();
  Vec t1 = th1, t2 = th2;
  auto H = [&](const Vec& a, const Vec& b) { return contrast(model, obs, a, b); };
  auto step = [](double t) { return 1e-5 * (1.0 + std::abs(t)); };

  ContrastEvaluation ev;
  ev.value = H(t1, t2);
  ev.grad1 = Vec::Zero(d1);
  ev.grad2 = Vec::Zero(d2);
  ev.hess11 = Mat::Zero(d1, d1);
  ev.hess22 = Mat::Zero(d2, d2);
  ev.hess12 = Mat::Zero(d1, d2);

  auto sweep = [&](Vec& t, int dim, Vec& grad, Mat& hess, bool first) {
    for (int j = 0; j < dim; ++j) {
      const double dj = step(t[j]);
      const double base = t[j];
      t[j] = base + dj;
      const double hp = H(t1, t2);
      t[j] = base - dj;
      const double hm = H(t1, t2);
      t[j] = base;
      grad[j] = (hp - hm) / (2.0 * dj);
      hess(j, j) = (hp - 2.0 * ev.value + hm) / (dj * dj);
      for (int k = j + 1; k < dim; ++k) {
        const double dk = step(t[k]);
        const double bk = t[k];
        double s = 0.0;
        for (int sj : {1, -1})
          for (int sk : {1, -1}) {
            t[j] = base + sj * dj;
            t[k] = bk + sk * dk;
            s += sj * sk * H(t1, t2);
          }
        t[j] = base;
        t[k] = bk;
        hess(j, k) = hess(k, j) = s / (4.0 * dj * dk);
      }
    }
    (void)first;
  };
  sweep(t1, d1, ev.grad1, ev.hess11, true);
  sweep(t2, d2, ev.grad2, ev.hess22, false);

  for (int j = 0; j < d1; ++j) {
    const double dj = step(t1[j]);
    const double bj = t1[j];
    for (int k = 0; k < d2; ++k) {
      const double dk = step(t2[k]);
      const double bk = t2[k];
      double s = 0.0;
      for (int sj : {1, -1})
        for (int sk : {1, -1}) {
          t1[j] = bj + sj * dj;
          t2[k] = bk + sk * dk;
          s += sj * sk * H(t1, t2);
        }
      t1[j] = bj;
      t2[k] = bk;
      ev.hess12(j, k) = s / (4.0 * dj * dk);
    }
  }
  return ev;
}

}  // namespace

Scaling Scaling::from(long n, double h) {
  if (n < 1 || !(h > 0)) throw model_error("scaling needs n >= 1, h > 0");
  Scaling s;
  s.rate1 = std::sqrt(static_cast<double>(n));
  s.rate2 = std::sqrt(static_cast<double>(n) * h);
  return s;
}

double contrast(const DiffusionModel& model, const ObservationSet& obs,
                const VecRef& th1, const VecRef& th2) {
  check_inputs(model, obs, th1, th2);
  double value;
  if (model.scalar && model.m == 1 && model.r == 1)
    value = scalar_contrast(*model.scalar, obs, th1[0], th2[0]);
  else
    value = generic_contrast(model, obs, th1, th2);
  if (!std::isfinite(value))
    throw model_error("contrast evaluation produced a non-finite value");
  return value;
}

ContrastEvaluation contrast_with_derivatives(const DiffusionModel& model,
                                             const ObservationSet& obs,
                                             const VecRef& th1, const VecRef& th2,
                                             DerivativeMode mode) {
  check_inputs(model, obs, th1, th2);
  if (mode == DerivativeMode::automatic)
    mode = model.has_analytic_derivatives() ? DerivativeMode::analytic
                                            : DerivativeMode::finite_difference;
  if (mode == DerivativeMode::analytic && !model.has_analytic_derivatives())
    throw model_error("model does not provide analytic parameter derivatives");

  ContrastEvaluation ev;
  if (mode == DerivativeMode::finite_difference) {
    ev = finite_difference(model, obs, th1, th2);
  } else if (model.scalar && model.m == 1 && model.r == 1 && model.d1() == 1 &&
             model.d2() == 1 && model.scalar->drift_dth && model.scalar->diff_dth) {
    ev = scalar_derivatives(*model.scalar, obs, th1[0], th2[0]);
  } else {
    ev = generic_analytic(model, obs, th1, th2);
  }
  if (!std::isfinite(ev.value) || !ev.grad1.allFinite() || !ev.grad2.allFinite() ||
      !ev.hess11.allFinite() || !ev.hess22.allFinite() || !ev.hess12.allFinite())
    throw model_error("contrast derivative evaluation produced a non-finite value");
  return ev;
}

double log_ratio_field(const DiffusionModel& model, const ObservationSet& obs,
                       int stage, const VecRef& th1, const VecRef& th2,
                       const VecRef& u, const Scaling& scaling) {
  if (stage != 1 && stage != 2) throw model_error("log_ratio_field: stage must be 1 or 2");
  const int dim = stage == 1 ? model.d1() : model.d2();
  if (u.size() != dim) throw model_error("log_ratio_field: u has wrong dimension");
  if (u.isZero(0.0)) return 0.0;
  const double rate = stage == 1 ? scaling.rate1 : scaling.rate2;
  Vec shifted = (stage == 1 ? th1 : th2) + u / rate;
  const auto& box = stage == 1 ? model.theta1_box : model.theta2_box;
  if (!box.contains(shifted, 1e-12)) {
    std::ostringstream os;
    os << "log_ratio_field: shifted stage-" << stage << " parameter leaves the box";
    throw box_error(os.str());
  }
  const double base = contrast(model, obs, th1, th2);
  const double moved = stage == 1 ? contrast(model, obs, shifted, th2)
                                  : contrast(model, obs, th1, shifted);
  return moved - base;
}

ObservedInformation observed_information(const DiffusionModel& model,
                                         const ObservationSet& obs,
                                         const VecRef& th1, const VecRef& th2,
                                         DerivativeMode mode) {
  const auto ev = contrast_with_derivatives(model, obs, th1, th2, mode);
  ObservedInformation info;
  const double n = static_cast<double>(obs.n);
  info.gamma1_n = -ev.hess11 / n;
  info.gamma2_n = -ev.hess22 / (n * obs.h);
  return info;
}

}  // namespace qlbayes::qla
