#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "qlbayes/errors.hpp"

namespace qlbayes::loss {

using Vec = Eigen::VectorXd;
using VecRef = Eigen::Ref<const Eigen::VectorXd>;

enum class Kind { power, indicator, custom };

// Element of the admissible loss class: symmetric, zero at the origin, convex
// sublevel sets, polynomial growth of order p.
struct LossFunction {
  Kind kind = Kind::power;
  int dim = 1;
  double p = 2.0;                        // power exponent / declared growth order
  Vec radius;                            // indicator: box {|u_i| <= radius_i}
  std::function<double(const VecRef&)> fn;  // custom callback
  std::string id;                        // e.g. "power:2"
};

LossFunction power_loss(double p, int dim = 1);
LossFunction indicator_loss(const Vec& radius);
LossFunction indicator_loss(double radius, int dim = 1);
LossFunction custom_loss(const std::string& name,
                         std::function<double(const VecRef&)> fn, int dim,
                         double growth_p);

// Parse "power:2" | "indicator:1.0,1.0" | "custom:<name>"; named customs come
// from the registry below.  Throws usage_error on bad grammar.
LossFunction parse_loss(const std::string& spec, int dim = 1);
std::vector<std::string> custom_loss_names();

// Evaluate w(u); negative or non-finite callback values raise loss_error.
double eval_loss(const LossFunction& w, const VecRef& u);

struct PropertyCheck {
  bool passed = true;
  std::string detail;       // counterexample description when failed
  double statistic = 0.0;   // property-specific number (max asymmetry, ...)
};

struct ValidationReport {
  PropertyCheck zero_at_origin;   // w(0) = 0, continuous at 0, not identically 0
  PropertyCheck symmetry;         // w(u) = w(-u)
  PropertyCheck sublevel_convex;  // midpoint probes on sublevel sets
  PropertyCheck sublevel_bounded; // bounded sublevel set at small c
  PropertyCheck growth;           // w(u) <= C (1 + |u|^p); statistic = max ratio
  bool all_passed() const;
};

// Monte Carlo validation of the class properties on random probes.
ValidationReport validate_loss_class(const LossFunction& w, double p,
                                     int probe_count = 4096,
                                     std::uint64_t seed = 1);

struct SeparationReport {
  bool satisfied = false;
  double margin = 0.0;  // min over probes of w(u-z) - w(u)
  Vec witness_u, witness_z;
  double witness_r = 0.0;
};

// Separation condition: w(u - z) - w(u) >= 0 for |u| <= r^eta, |z| >= r,
// all r >= r0.  z is probed on the spheres |z| in {r, 2r} (heuristic: for the
// supported shapes the infimum over |z| >= r is approached at |z| = r).
SeparationReport check_separation(const LossFunction& w, double eta, double r0,
                  int r_points = 33, double r_max_factor = 256.0,
                  int directions = 16, std::uint64_t seed = 1);

struct DominanceReport {
  double m_prime = 0.0;
  double sup_inner = 0.0;  // sup of w over |u| <= M (probed)
  double inf_outer = 0.0;  // inf of w over |u| >= M' (probed)
};

// Smallest probed M' on a geometric grid with
// sup_{|u|<=M} w - inf_{|u|>=M'} w <= 0; throws loss_error if none exists
// below cap_factor * M.
DominanceReport check_dominance(const LossFunction& w, double M, double cap_factor = 1e4,
                  std::uint64_t seed = 1);

}  // namespace qlbayes::loss
