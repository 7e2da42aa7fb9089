#include "qlbayes/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace qlbayes::estimators {

namespace {

void decode(const QuadratureGrid& grid, long flat, Vec& out) {
  for (int a = 0; a < grid.box.dim(); ++a) {
    const int na = grid.nodes_per_axis[a];
    const long idx = flat % na;
    flat /= na;
    out[a] = grid.box.lower[a] + (idx + 0.5) * (grid.box.upper[a] - grid.box.lower[a]) / na;
  }
}

double golden_min(const std::function<double(double)>& f, double lo, double hi,
                  double tol) {
  constexpr double inv_phi = 0.6180339887498949;
  double a = lo, b = hi;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
  }
  return fc < fd ? c : d;
}

}  // namespace

PriorDensity PriorDensity::uniform() { return PriorDensity{}; }

PriorDensity PriorDensity::gaussian(Vec center, Vec sd) {
  if (center.size() != sd.size() || center.size() == 0)
    throw model_error("gaussian prior needs matching center/sd dimensions");
  for (int i = 0; i < sd.size(); ++i)
    if (!(sd[i] > 0)) throw model_error("gaussian prior needs sd > 0");
  PriorDensity p;
  p.kind = Kind::gaussian;
  p.center = std::move(center);
  p.sd = std::move(sd);
  return p;
}

double PriorDensity::operator()(const VecRef& th) const {
  if (kind == Kind::uniform) return 1.0;
  if (th.size() != center.size()) throw model_error("prior argument dimension mismatch");
  double q = 0.0;
  for (int i = 0; i < th.size(); ++i) {
    const double z = (th[i] - center[i]) / sd[i];
    q += z * z;
  }
  return std::exp(-0.5 * q);
}

QuadratureGrid QuadratureGrid::tensor(const ParameterBox& box, int per_axis) {
  if (per_axis < 1) throw model_error("quadrature grid needs >= 1 node per axis");
  QuadratureGrid g;
  g.box = box;
  g.nodes_per_axis.assign(box.dim(), per_axis);
  g.cell_weight = box.volume() / static_cast<double>(g.total());
  return g;
}

long QuadratureGrid::total() const {
  long t = 1;
  for (int n : nodes_per_axis) t *= n;
  return t;
}

Vec QuadratureGrid::node(long flat) const {
  Vec out(box.dim());
  decode(*this, flat, out);
  return out;
}

double QuadratureGrid::axis_step(int axis) const {
  return (box.upper[axis] - box.lower[axis]) / nodes_per_axis[axis];
}

int default_nodes_per_axis(int dim) {
  if (dim == 1) return 401;
  if (dim == 2) return 101;
  throw model_error("quadrature defaults cover stage dimensions 1 and 2 only");
}

StageTable build_stage_table(const DiffusionModel& model, const ObservationSet& obs,
                             int stage, const VecRef& fixed_other,
                             const PriorDensity& prior, const QuadratureGrid& grid,
                             const Scaling& scaling) {
  if (stage != 1 && stage != 2) throw model_error("stage must be 1 or 2");
  const int dim = stage == 1 ? model.d1() : model.d2();
  const int other_dim = stage == 1 ? model.d2() : model.d1();
  if (grid.box.dim() != dim) throw model_error("stage grid has wrong dimension");
  if (fixed_other.size() != other_dim)
    throw model_error("fixed other-stage parameter has wrong dimension");
  const auto& stage_box = stage == 1 ? model.theta1_box : model.theta2_box;
  if (!stage_box.contains(grid.box.lower, 1e-9) ||
      !stage_box.contains(grid.box.upper, 1e-9))
    throw box_error("stage grid leaves the parameter box");
  const auto& other_box = stage == 1 ? model.theta2_box : model.theta1_box;
  if (!other_box.contains(fixed_other, 1e-9))
    throw box_error("fixed other-stage parameter leaves the box");

  StageTable t;
  t.stage = stage;
  t.grid = grid;
  t.fixed_other = fixed_other;
  t.rate = stage == 1 ? scaling.rate1 : scaling.rate2;
  const long total = grid.total();
  t.H.resize(total);

  const bool fast = model.scalar && model.m == 1 && model.r == 1 &&
                    model.d1() == 1 && model.d2() == 1;
  if (fast) {
    const auto& sc = *model.scalar;
    const double h = obs.h;
    const double* x = obs.data.data();
    const long n = obs.n;
    if (stage == 1) {
      // residuals don't depend on theta1: precompute them once
      std::vector<double> e2(n);
      const double th2 = fixed_other[0];
      for (long i = 0; i < n; ++i) {
        const double e = x[i + 1] - x[i] - h * sc.drift(x[i], th2);
        e2[i] = e * e;
      }
      for (long k = 0; k < total; ++k) {
        const double th1 = grid.box.lower[0] + (k + 0.5) * grid.axis_step(0);
        double acc = 0.0;
        for (long i = 0; i < n; ++i) {
          const double b = sc.diff(x[i], th1);
          const double B = b * b;
          if (!(B > 0)) throw ellipticity_error("diffusion vanished on a grid node");
          acc += e2[i] / (h * B) + std::log(B);
        }
        t.H[k] = -0.5 * acc;
      }
    } else {
      // B doesn't depend on theta2: precompute 1/B and sum log B once
      std::vector<double> invB(n);
      double sumlog = 0.0;
      const double th1 = fixed_other[0];
      for (long i = 0; i < n; ++i) {
        const double b = sc.diff(x[i], th1);
        const double B = b * b;
        if (!(B > 0)) throw ellipticity_error("diffusion vanished on the data path");
        invB[i] = 1.0 / B;
        sumlog += std::log(B);
      }
      for (long k = 0; k < total; ++k) {
        const double th2 = grid.box.lower[0] + (k + 0.5) * grid.axis_step(0);
        double acc = 0.0;
        for (long i = 0; i < n; ++i) {
          const double e = x[i + 1] - x[i] - h * sc.drift(x[i], th2);
          acc += e * e * invB[i];
        }
        t.H[k] = -0.5 * (acc / h + sumlog);
      }
    }
  } else {
    Vec node(dim);
    for (long k = 0; k < total; ++k) {
      decode(grid, k, node);
      t.H[k] = stage == 1 ? qla::contrast(model, obs, node, fixed_other)
                          : qla::contrast(model, obs, fixed_other, node);
    }
  }

  t.h_max = *std::max_element(t.H.begin(), t.H.end());
  t.mass.resize(total);
  Vec node(dim);
  Vec mean = Vec::Zero(dim), second = Vec::Zero(dim);
  double total_mass = 0.0;
  for (long k = 0; k < total; ++k) {
    decode(grid, k, node);
    t.mass[k] = std::exp(t.H[k] - t.h_max) * prior(node) * grid.cell_weight;
    total_mass += t.mass[k];
    mean += t.mass[k] * node;
  }
  if (!(total_mass > 0) || !std::isfinite(total_mass))
    throw model_error("posterior mass vanished on the stage grid");
  mean /= total_mass;
  for (long k = 0; k < total; ++k) {
    decode(grid, k, node);
    second += t.mass[k] * (node - mean).cwiseAbs2();
  }
  t.post_mean = mean;
  t.post_sd = (second / total_mass).cwiseSqrt();

  long close = 0;
  for (long k = 0; k < total; ++k) {
    decode(grid, k, node);
    bool in = true;
    for (int a = 0; a < dim; ++a)
      if (std::abs(node[a] - mean[a]) > 3.0 * t.post_sd[a]) in = false;
    if (in) ++close;
  }
  t.grid_coarse = close < 5;
  return t;
}

double bayes_objective(const StageTable& table, const LossFunction& w,
                       const VecRef& z) {
  const int dim = table.grid.box.dim();
  if (w.dim != dim) throw loss_error("loss dimension does not match the stage grid");
  if (z.size() != dim) throw model_error("z has wrong dimension");
  Vec node(dim), u(dim);
  double acc = 0.0;
  const long total = table.grid.total();
  for (long k = 0; k < total; ++k) {
    decode(table.grid, k, node);
    u = table.rate * (z - node);
    acc += loss::eval_loss(w, u) * table.mass[k];
  }
  return acc;
}

Vec posterior_mean(const StageTable& table) { return table.post_mean; }

StageArgmin stage_argmin(const StageTable& table, const LossFunction& w,
                         const VecRef& center) {
  const int dim = table.grid.box.dim();
  const long total = table.grid.total();
  StageArgmin out;
  out.diag.grid_coarse = table.grid_coarse;

  // scan the node z-values
  double best = std::numeric_limits<double>::infinity();
  std::vector<long> ties;
  for (long k = 0; k < total; ++k) {
    const Vec z = table.grid.node(k);
    const double v = bayes_objective(table, w, z);
    if (v < best) {
      best = v;
      ties.assign(1, k);
    } else if (v == best) {
      ties.push_back(k);
    }
  }
  long pick = ties.front();
  if (ties.size() > 1) {
    out.diag.tie_broken = true;
    double closest = std::numeric_limits<double>::infinity();
    for (long k : ties) {
      const double d = (table.grid.node(k) - center).norm();
      if (d < closest) {
        closest = d;
        pick = k;
      }
    }
  }
  Vec z = table.grid.node(pick);
  double value = best;

  // per-axis golden refinement within one grid cell, kept only if strictly better
  const double tol = 1e-3 / table.rate;
  for (int a = 0; a < dim; ++a) {
    const double step = table.grid.axis_step(a);
    const double lo = std::max(table.grid.box.lower[a], z[a] - step);
    const double hi = std::min(table.grid.box.upper[a], z[a] + step);
    Vec probe = z;
    const double refined = golden_min(
        [&](double za) {
          probe[a] = za;
          return bayes_objective(table, w, probe);
        },
        lo, hi, tol);
    probe[a] = refined;
    const double v = bayes_objective(table, w, probe);
    if (v < value) {
      value = v;
      z = probe;
    }
  }
  out.z = z;
  out.diag.objective = value;
  return out;
}

QuadratureGrid adapted_grid(const DiffusionModel& model, const ObservationSet& obs,
                            int stage, const VecRef& fixed_other,
                            const PriorDensity& prior, const Scaling& scaling,
                            int nodes) {
  const auto& stage_box = stage == 1 ? model.theta1_box : model.theta2_box;
  const int dim = stage_box.dim();
  const int per_axis = nodes > 0 ? nodes : default_nodes_per_axis(dim);

  const QuadratureGrid coarse = QuadratureGrid::tensor(stage_box, per_axis);
  const StageTable table =
      build_stage_table(model, obs, stage, fixed_other, prior, coarse, scaling);
  const long mode_flat = static_cast<long>(
      std::max_element(table.H.begin(), table.H.end()) - table.H.begin());
  const Vec mode = coarse.node(mode_flat);

  // local curvature of H at the mode gives the posterior scale
  qla::ContrastEvaluation ev;
  bool have_curv = true;
  try {
    ev = stage == 1 ? qla::contrast_with_derivatives(model, obs, mode, fixed_other)
                    : qla::contrast_with_derivatives(model, obs, fixed_other, mode);
  } catch (const qlbayes::error&) {
    have_curv = false;
  }

  Vec lo(dim), hi(dim);
  for (int a = 0; a < dim; ++a) {
    const double cell = coarse.axis_step(a);
    double sd = 0.0;
    if (have_curv) {
      const double curv = stage == 1 ? -ev.hess11(a, a) : -ev.hess22(a, a);
      if (curv > 0) sd = 1.0 / std::sqrt(curv);
    }
    if (sd == 0.0) sd = std::max(table.post_sd[a], cell);
    double half = std::max(12.0 * sd, 1.5 * cell);
    half = std::min(half, 0.5 * (stage_box.upper[a] - stage_box.lower[a]));
    lo[a] = mode[a] - half;
    hi[a] = mode[a] + half;
    if (lo[a] < stage_box.lower[a]) {
      hi[a] += stage_box.lower[a] - lo[a];
      lo[a] = stage_box.lower[a];
    }
    if (hi[a] > stage_box.upper[a]) {
      lo[a] -= hi[a] - stage_box.upper[a];
      hi[a] = stage_box.upper[a];
    }
    lo[a] = std::max(lo[a], stage_box.lower[a]);
    hi[a] = std::min(hi[a], stage_box.upper[a]);
  }
  return QuadratureGrid::tensor(ParameterBox(lo, hi), per_axis);
}

QmleResult qmle(const DiffusionModel& model, const ObservationSet& obs,
                const Scaling& scaling, qla::DerivativeMode mode, int starts) {
  const int d1 = model.d1(), d2 = model.d2(), dim = d1 + d2;
  if (obs.n < dim) throw model_error("qmle needs n >= d1 + d2 increments");
  if (starts < 1) throw model_error("qmle needs >= 1 start");

  Vec lower(dim), upper(dim);
  lower << model.theta1_box.lower, model.theta2_box.lower;
  upper << model.theta1_box.upper, model.theta2_box.upper;
  const Vec width = upper - lower;

  auto eval = [&](const Vec& th) {
    return qla::contrast_with_derivatives(model, obs, th.head(d1), th.tail(d2), mode);
  };
  auto scaled_proj_grad = [&](const Vec& th, const Vec& g) {
    double acc = 0.0;
    for (int i = 0; i < dim; ++i) {
      double gi = g[i];
      if (th[i] <= lower[i] && gi < 0) gi = 0;  // ascent blocked at lower face
      if (th[i] >= upper[i] && gi > 0) gi = 0;  // ascent blocked at upper face
      const double rate = i < d1 ? scaling.rate1 : scaling.rate2;
      acc += (gi / rate) * (gi / rate);
    }
    return std::sqrt(acc);
  };

  QmleResult best;
  bool any_converged = false;
  double best_value = -std::numeric_limits<double>::infinity();

  for (int s = 0; s < starts; ++s) {
    Vec th(dim);
    if (s == 0) {
      th = 0.5 * (lower + upper);
    } else {
      // Kronecker low-discrepancy sequence over the open box
      constexpr double alpha[4] = {0.6180339887498949, 0.7548776662466927,
                                   0.8191725133961645, 0.8566748838545029};
      for (int i = 0; i < dim; ++i) {
        const double f = std::fmod(0.5 + s * alpha[i % 4], 1.0);
        th[i] = lower[i] + width[i] * (0.1 + 0.8 * f);
      }
    }

    auto ev = eval(th);
    bool converged = false;
    for (int it = 0; it < 100; ++it) {
      Vec g(dim);
      g << ev.grad1, ev.grad2;
      if (scaled_proj_grad(th, g) < 1e-6) {
        converged = true;
        break;
      }
      Mat H(dim, dim);
      H.topLeftCorner(d1, d1) = ev.hess11;
      H.bottomRightCorner(d2, d2) = ev.hess22;
      H.topRightCorner(d1, d2) = ev.hess12;
      H.bottomLeftCorner(d2, d1) = ev.hess12.transpose();

      // Newton direction for a maximum; fall back to rate-scaled ascent
      Vec dir = -H.ldlt().solve(g);
      if (!dir.allFinite() || g.dot(dir) <= 0) {
        dir = g;
        for (int i = 0; i < dim; ++i) {
          const double rate = i < d1 ? scaling.rate1 : scaling.rate2;
          dir[i] /= rate * rate;
        }
      }
      // backtracking with box projection (Armijo on the projected step)
      double tstep = 1.0;
      bool moved = false;
      for (int half = 0; half < 40; ++half, tstep *= 0.5) {
        Vec cand = (th + tstep * dir).cwiseMax(lower).cwiseMin(upper);
        const Vec diff = cand - th;
        if (diff.cwiseAbs().maxCoeff() == 0.0) continue;
        double value;
        try {
          value = qla::contrast(model, obs, cand.head(d1), cand.tail(d2));
        } catch (const qlbayes::error&) {
          continue;
        }
        if (value >= ev.value + 1e-4 * g.dot(diff) ||
            (value > ev.value && half > 20)) {
          th = cand;
          ev = eval(th);
          moved = true;
          break;
        }
      }
      if (!moved) {
        Vec g2(dim);
        g2 << ev.grad1, ev.grad2;
        converged = scaled_proj_grad(th, g2) < 1e-3;
        break;
      }
    }
    Vec gf(dim);
    gf << ev.grad1, ev.grad2;
    const double pg = scaled_proj_grad(th, gf);
    if (pg < 1e-6) converged = true;
    if (ev.value > best_value) {
      best_value = ev.value;
      best.theta1 = th.head(d1);
      best.theta2 = th.tail(d2);
      best.contrast_at_max = ev.value;
      best.converged = converged;
      best.scaled_grad_norm = pg;
    }
    any_converged = any_converged || converged;
  }

  if (!any_converged) {
    std::ostringstream os;
    os << "qmle: no start converged; best iterate theta1 = ("
       << best.theta1.transpose() << "), theta2 = (" << best.theta2.transpose()
       << "), scaled gradient norm " << best.scaled_grad_norm;
    throw optimization_error(os.str());
  }
  return best;
}

BayesResult bayes_adaptive(const DiffusionModel& model, const ObservationSet& obs,
                           const LossFunction& w1, const LossFunction& w2,
                           const PriorDensity& prior1, const PriorDensity& prior2,
                           const VecRef& pilot_th2, const Scaling& scaling,
                           const GridSpec& grid1, const GridSpec& grid2) {
  if (pilot_th2.size() != model.d2())
    throw model_error("pilot theta2 has wrong dimension");
  if (!model.theta2_box.contains(pilot_th2, 1e-9))
    throw box_error("pilot theta2 lies outside the parameter box");

  const QuadratureGrid g1 =
      grid1.explicit_grid
          ? *grid1.explicit_grid
          : adapted_grid(model, obs, 1, pilot_th2, prior1, scaling, grid1.nodes);
  const StageTable t1 =
      build_stage_table(model, obs, 1, pilot_th2, prior1, g1, scaling);
  const StageArgmin s1 = stage_argmin(t1, w1, model.theta1_box.center());

  const QuadratureGrid g2 =
      grid2.explicit_grid
          ? *grid2.explicit_grid
          : adapted_grid(model, obs, 2, s1.z, prior2, scaling, grid2.nodes);
  const StageTable t2 = build_stage_table(model, obs, 2, s1.z, prior2, g2, scaling);
  const StageArgmin s2 = stage_argmin(t2, w2, model.theta2_box.center());

  BayesResult r;
  r.theta1 = s1.z;
  r.theta2 = s2.z;
  r.loss1_id = w1.id;
  r.loss2_id = w2.id;
  r.stage1 = s1.diag;
  r.stage2 = s2.diag;
  return r;
}

}  // namespace qlbayes::estimators
