#include "qlbayes/loss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "qlbayes/rng.hpp"

namespace qlbayes::loss {

namespace {

double norm_pow(const VecRef& u, double p) {
  // Exact for the invariant checks: squaredNorm / norm avoid pow() rounding.
  if (p == 2.0) return u.squaredNorm();
  if (p == 1.0) return u.norm();
  return std::pow(u.norm(), p);
}

struct NamedLoss {
  const char* name;
  int dim;
  double p;
  double (*fn)(const VecRef&);
};

double fn_zero(const VecRef&) { return 0.0; }
double fn_asym_min(const VecRef& u) {
  return std::min(std::abs(u[0]), std::abs(u[0] - 3.0));
}
double fn_windowed_square(const VecRef& u) {
  const double r = u.norm();
  return r <= 5.0 ? r * r : 0.0;
}
double fn_bounded_exp(const VecRef& u) { return 1.0 - std::exp(-u.squaredNorm()); }

constexpr NamedLoss kNamed[] = {
    {"zero", 1, 2.0, fn_zero},
    {"asym_min", 1, 1.0, fn_asym_min},
    {"windowed_square", 1, 2.0, fn_windowed_square},
    {"bounded_exp", 1, 2.0, fn_bounded_exp},
};

// Deterministic probe directions: unit vectors from a counter-based stream,
// plus the coordinate axes.
std::vector<Vec> probe_directions(int dim, int count, const rng::Counter& rc,
                                  std::uint64_t stream_base) {
  std::vector<Vec> dirs;
  if (dim == 1) {
    dirs.push_back(Vec::Constant(1, 1.0));
    dirs.push_back(Vec::Constant(1, -1.0));
    return dirs;
  }
  for (int a = 0; a < dim; ++a) {
    Vec e = Vec::Zero(dim);
    e[a] = 1.0;
    dirs.push_back(e);
    dirs.push_back(-e);
  }
  for (int i = 0; i < count; ++i) {
    Vec v(dim);
    for (int c = 0; c < dim; ++c)
      v[c] = rc.gauss(stream_base + static_cast<std::uint64_t>(i) * dim + c);
    const double nr = v.norm();
    if (nr > 1e-12) dirs.push_back(v / nr);
  }
  return dirs;
}

}  // namespace

LossFunction power_loss(double p, int dim) {
  if (!(p >= 1.0)) throw loss_error("power loss needs exponent p >= 1");
  if (dim < 1) throw loss_error("loss dimension must be >= 1");
  LossFunction w;
  w.kind = Kind::power;
  w.dim = dim;
  w.p = p;
  std::ostringstream os;
  os << "power:" << p;
  w.id = os.str();
  return w;
}

LossFunction indicator_loss(const Vec& radius) {
  if (radius.size() < 1) throw loss_error("indicator loss needs >= 1 radius");
  for (int i = 0; i < radius.size(); ++i)
    if (!(radius[i] > 0)) throw loss_error("indicator radii must be > 0");
  LossFunction w;
  w.kind = Kind::indicator;
  w.dim = static_cast<int>(radius.size());
  w.p = 0.0;
  w.radius = radius;
  std::ostringstream os;
  os << "indicator:";
  for (int i = 0; i < radius.size(); ++i) os << (i ? "," : "") << radius[i];
  w.id = os.str();
  return w;
}

LossFunction indicator_loss(double radius, int dim) {
  return indicator_loss(Vec::Constant(dim, radius));
}

LossFunction custom_loss(const std::string& name,
                         std::function<double(const VecRef&)> fn, int dim,
                         double growth_p) {
  if (!fn) throw loss_error("custom loss needs a callback");
  if (dim < 1) throw loss_error("loss dimension must be >= 1");
  LossFunction w;
  w.kind = Kind::custom;
  w.dim = dim;
  w.p = growth_p;
  w.fn = std::move(fn);
  w.id = "custom:" + name;
  return w;
}

std::vector<std::string> custom_loss_names() {
  std::vector<std::string> out;
  for (const auto& nl : kNamed) out.push_back(nl.name);
  return out;
}

LossFunction parse_loss(const std::string& spec, int dim) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos)
    throw usage_error("loss spec \"" + spec +
                      "\" must look like power:2, indicator:1.0 or custom:<name>");
  const std::string kind = spec.substr(0, colon);
  const std::string rest = spec.substr(colon + 1);
  if (kind == "power") {
    try {
      std::size_t used = 0;
      const double p = std::stod(rest, &used);
      if (used != rest.size()) throw std::invalid_argument(rest);
      return power_loss(p, dim);
    } catch (const loss_error&) {
      throw;
    } catch (const std::exception&) {
      throw usage_error("bad power loss exponent \"" + rest + "\"");
    }
  }
  if (kind == "indicator") {
    std::vector<double> radii;
    std::size_t pos = 0;
    while (pos <= rest.size()) {
      const auto comma = rest.find(',', pos);
      const std::string tok =
          rest.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
      try {
        std::size_t used = 0;
        radii.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw usage_error("bad indicator radius \"" + tok + "\"");
      }
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (static_cast<int>(radii.size()) == 1 && dim > 1)
      return indicator_loss(radii[0], dim);
    if (static_cast<int>(radii.size()) != dim)
      throw usage_error("indicator loss needs 1 or dim radii");
    Vec r(radii.size());
    for (std::size_t i = 0; i < radii.size(); ++i) r[i] = radii[i];
    return indicator_loss(r);
  }
  if (kind == "custom") {
    for (const auto& nl : kNamed) {
      if (rest == nl.name) {
        if (nl.dim != dim)
          throw usage_error("custom loss \"" + rest + "\" is 1-D only");
        return custom_loss(nl.name, nl.fn, nl.dim, nl.p);
      }
    }
    std::ostringstream os;
    os << "unknown custom loss \"" << rest << "\"; available:";
    for (const auto& nl : kNamed) os << " " << nl.name;
    throw usage_error(os.str());
  }
  throw usage_error("unknown loss kind \"" + kind + "\"");
}

double eval_loss(const LossFunction& w, const VecRef& u) {
  if (u.size() != w.dim) throw loss_error("loss argument has wrong dimension");
  switch (w.kind) {
    case Kind::power:
      return norm_pow(u, w.p);
    case Kind::indicator: {
      for (int i = 0; i < w.dim; ++i)
        if (std::abs(u[i]) > w.radius[i]) return 1.0;
      return 0.0;
    }
    case Kind::custom: {
      const double v = w.fn(u);
      if (!std::isfinite(v) || v < 0.0)
        throw loss_error("custom loss returned a negative or non-finite value");
      return v;
    }
  }
  throw loss_error("unreachable loss kind");
}

bool ValidationReport::all_passed() const {
  return zero_at_origin.passed && symmetry.passed && sublevel_convex.passed &&
         sublevel_bounded.passed && growth.passed;
}

ValidationReport validate_loss_class(const LossFunction& w, double p,
                                     int probe_count, std::uint64_t seed) {
  if (probe_count < 1000) throw loss_error("validation needs >= 1000 probes");
  const double L = 10.0;  // probe box half-width
  rng::Counter rc(seed, 0xf007);
  std::vector<Vec> probes;
  probes.reserve(probe_count);
  for (int i = 0; i < probe_count; ++i) {
    Vec u(w.dim);
    for (int c = 0; c < w.dim; ++c)
      u[c] = L * (2.0 * rc.uniform(static_cast<std::uint64_t>(i) * w.dim + c) - 1.0);
    probes.push_back(std::move(u));
  }
  std::vector<double> values(probes.size());
  for (std::size_t i = 0; i < probes.size(); ++i) values[i] = eval_loss(w, probes[i]);

  ValidationReport rep;
  std::ostringstream os;

  // Property 1: zero at the origin, continuous there, not identically zero.
  {
    const double at0 = eval_loss(w, Vec::Zero(w.dim));
    const double near0 = eval_loss(w, Vec::Constant(w.dim, 1e-9));
    const bool nonzero =
        std::any_of(values.begin(), values.end(), [](double v) { return v > 0; });
    rep.zero_at_origin.statistic = at0;
    if (at0 != 0.0) {
      rep.zero_at_origin.passed = false;
      rep.zero_at_origin.detail = "w(0) != 0";
    } else if (!(near0 < 1e-6) && w.kind != Kind::indicator) {
      rep.zero_at_origin.passed = false;
      rep.zero_at_origin.detail = "w not continuous at 0";
    } else if (!nonzero) {
      rep.zero_at_origin.passed = false;
      rep.zero_at_origin.detail = "not identically 0 violated: w = 0 on all probes";
    }
  }

  // Property 2: symmetry, exact.
  for (std::size_t i = 0; i < probes.size(); ++i) {
    const double asym = std::abs(values[i] - eval_loss(w, -probes[i]));
    if (asym > rep.symmetry.statistic) {
      rep.symmetry.statistic = asym;
      if (asym > 0.0) {
        rep.symmetry.passed = false;
        os.str("");
        os << "w(u) != w(-u) at u = (" << probes[i].transpose() << ")";
        rep.symmetry.detail = os.str();
      }
    }
  }

  // Property 3a: convex sublevel sets via midpoint probes.
  {
    std::vector<double> pos;
    for (double v : values)
      if (v > 0) pos.push_back(v);
    std::sort(pos.begin(), pos.end());
    std::vector<double> cs;
    if (!pos.empty()) {
      cs = {pos[pos.size() / 4], pos[pos.size() / 2], pos[3 * pos.size() / 4]};
    }
    for (double c : cs) {
      // gather sublevel members, probe random pairs
      std::vector<std::size_t> members;
      for (std::size_t i = 0; i < probes.size(); ++i)
        if (values[i] < c) members.push_back(i);
      if (members.size() < 2) continue;
      const std::size_t pairs = std::min<std::size_t>(members.size() * 4, 4096);
      for (std::size_t k = 0; k < pairs; ++k) {
        const auto a = members[static_cast<std::size_t>(
            rc.uniform(1'000'000 + 2 * k) * members.size())];
        const auto b = members[static_cast<std::size_t>(
            rc.uniform(1'000'000 + 2 * k + 1) * members.size())];
        const Vec mid = 0.5 * (probes[a] + probes[b]);
        const double vm = eval_loss(w, mid);
        if (vm >= c + 1e-12) {
          rep.sublevel_convex.passed = false;
          rep.sublevel_convex.statistic = std::max(rep.sublevel_convex.statistic, vm - c);
          os.str("");
          os << "midpoint of two points in {w < " << c << "} has w = " << vm;
          rep.sublevel_convex.detail = os.str();
        }
      }
    }
  }

  // Property 3b: bounded sublevel set at c = half the smallest nonzero value.
  {
    double smallest = std::numeric_limits<double>::infinity();
    for (double v : values)
      if (v > 0) smallest = std::min(smallest, v);
    if (!std::isfinite(smallest)) {
      rep.sublevel_bounded.passed = false;
      rep.sublevel_bounded.detail = "no nonzero loss values to size a sublevel set";
    } else {
      const double c = 0.5 * smallest;
      double max_norm = 0.0;
      for (std::size_t i = 0; i < probes.size(); ++i)
        if (values[i] < c) max_norm = std::max(max_norm, probes[i].norm());
      rep.sublevel_bounded.statistic = max_norm;
      if (max_norm > 0.9 * L) {
        rep.sublevel_bounded.passed = false;
        os.str("");
        os << "{w < " << c << "} reaches |u| = " << max_norm << " near the probe box edge";
        rep.sublevel_bounded.detail = os.str();
      }
    }
  }

  // Property 4: polynomial growth, report the max ratio.
  for (std::size_t i = 0; i < probes.size(); ++i) {
    const double ratio = values[i] / (1.0 + norm_pow(probes[i], p));
    rep.growth.statistic = std::max(rep.growth.statistic, ratio);
  }
  if (!std::isfinite(rep.growth.statistic) || rep.growth.statistic > 1e8) {
    rep.growth.passed = false;
    rep.growth.detail = "growth ratio w(u)/(1+|u|^p) unbounded on probes";
  }
  return rep;
}

SeparationReport check_separation(const LossFunction& w, double eta, double r0, int r_points,
                  double r_max_factor, int directions, std::uint64_t seed) {
  if (!(eta > 0 && eta < 1)) throw loss_error("check_separation: eta must be in (0, 1)");
  if (!(r0 > 1)) throw loss_error("check_separation: r0 must be > 1");
  rng::Counter rc(seed, 0xc1);
  const auto dirs = probe_directions(w.dim, directions, rc, 1 << 20);

  SeparationReport rep;
  rep.satisfied = true;
  rep.margin = std::numeric_limits<double>::infinity();
  const double log_step = std::log(r_max_factor) / std::max(1, r_points - 1);
  for (int ri = 0; ri < r_points; ++ri) {
    const double r = r0 * std::exp(log_step * ri);
    const double ru = std::pow(r, eta);
    for (double uscale : {0.0, 0.25, 0.5, 0.75, 1.0}) {
      for (const auto& du : dirs) {
        const Vec u = uscale * ru * du;
        const double wu = eval_loss(w, u);
        for (double zscale : {1.0, 2.0}) {
          for (const auto& dz : dirs) {
            const Vec z = zscale * r * dz;
            const double diff = eval_loss(w, u - z) - wu;
            if (diff < rep.margin) {
              rep.margin = diff;
              rep.witness_u = u;
              rep.witness_z = z;
              rep.witness_r = r;
            }
          }
        }
      }
    }
  }
  rep.satisfied = rep.margin >= 0.0;
  return rep;
}

DominanceReport check_dominance(const LossFunction& w, double M, double cap_factor,
                  std::uint64_t seed) {
  if (!(M > 0)) throw loss_error("check_dominance: M must be > 0");
  rng::Counter rc(seed, 0xa5);
  const auto dirs = probe_directions(w.dim, 32, rc, 1 << 21);

  // sup over the closed ball |u| <= M
  double sup_inner = 0.0;
  const int radial = 64;
  for (int i = 0; i <= radial; ++i) {
    const double rad = M * i / radial;
    for (const auto& d : dirs) sup_inner = std::max(sup_inner, eval_loss(w, rad * d));
  }

  // candidate M' grid: M * 2^{k/4}, k = -8 .. (until cap)
  const double cap = cap_factor * M;
  for (int k = -8;; ++k) {
    const double mp = M * std::pow(2.0, k / 4.0);
    if (mp > cap) break;
    double inf_outer = std::numeric_limits<double>::infinity();
    // outer radii: geometric from mp to cap, plus mp itself
    const int outer = 96;
    for (int i = 0; i <= outer; ++i) {
      const double rad = mp * std::pow(cap / mp, static_cast<double>(i) / outer);
      for (const auto& d : dirs) inf_outer = std::min(inf_outer, eval_loss(w, rad * d));
      if (inf_outer < sup_inner && i > 8) break;  // early out, already failed
    }
    if (sup_inner - inf_outer <= 0.0) {
      DominanceReport rep;
      rep.m_prime = mp;
      rep.sup_inner = sup_inner;
      rep.inf_outer = inf_outer;
      return rep;
    }
  }
  std::ostringstream os;
  os << "dominance condition not satisfied: no M' below " << cap << " separates sup_{|u| <= " << M
     << "} w = " << sup_inner << " from the outer infimum";
  throw loss_error(os.str());
}

}  // namespace qlbayes::loss
