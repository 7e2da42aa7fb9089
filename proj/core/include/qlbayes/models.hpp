#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "qlbayes/errors.hpp"

namespace qlbayes::models {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using VecRef = Eigen::Ref<const Eigen::VectorXd>;

// Axis-aligned box; all parameter spaces are boxes so projection and
// tensor-product quadrature stay trivial.
struct ParameterBox {
  Vec lower, upper;

  ParameterBox() = default;
  ParameterBox(Vec lo, Vec hi);
  ParameterBox(double lo, double hi);  // 1-D convenience

  int dim() const { return static_cast<int>(lower.size()); }
  Vec center() const { return 0.5 * (lower + upper); }
  Vec widths() const { return upper - lower; }
  double volume() const;
  bool contains(const VecRef& v, double slack = 0.0) const;
  Vec clamp(const VecRef& v) const;
};

struct TrueParameter {
  Vec theta1, theta2;
  Vec x0;
};

// Optional scalar shortcuts for the common 1-D case (m = r = d1 = d2 = 1);
// the hot loops use these to avoid per-call vector plumbing.
struct Scalar1D {
  std::function<double(double x, double th2)> drift;
  std::function<double(double x, double th1)> diff;
  std::function<double(double x, double th2)> drift_dth;    // da/dth2
  std::function<double(double x, double th2)> drift_dth2;   // d2a/dth2^2
  std::function<double(double x, double th1)> diff_dth;     // db/dth1
  std::function<double(double x, double th1)> diff_dth2;    // d2b/dth1^2
};

// Ergodic diffusion dX = a(X, th2) dt + b(X, th1) dW with state dim m and
// driving noise dim r.  Immutable after construction; all callbacks pure.
struct DiffusionModel {
  std::string name;
  int m = 1, r = 1;
  ParameterBox theta1_box, theta2_box;

  // Required: drift a (out: m) and diffusion coefficient b (out: m x r).
  std::function<void(const VecRef& x, const VecRef& th2, Eigen::Ref<Vec>)> drift;
  std::function<void(const VecRef& x, const VecRef& th1, Eigen::Ref<Mat>)> diffusion;

  // Optional analytic parameter derivatives; finite differences are used
  // downstream when absent.
  std::function<void(const VecRef& x, const VecRef& th2, Eigen::Ref<Mat>)> drift_jac;  // m x d2
  std::function<void(const VecRef& x, const VecRef& th2, int j, int k, Eigen::Ref<Vec>)> drift_hess;
  std::function<void(const VecRef& x, const VecRef& th1, int j, Eigen::Ref<Mat>)> diffusion_jac;  // m x r
  std::function<void(const VecRef& x, const VecRef& th1, int j, int k, Eigen::Ref<Mat>)> diffusion_hess;

  std::optional<Scalar1D> scalar;  // fast path when m == r == d1 == d2 == 1

  // Closed-form stationary density at given parameters (1-D models only,
  // normalized) together with a support hint; absent for models where only
  // the speed-measure construction applies.
  std::function<double(double x, const VecRef& th1, const VecRef& th2)> stationary_density;
  std::function<std::pair<double, double>(const VecRef& th1, const VecRef& th2)> stationary_support;

  TrueParameter default_truth;

  int d1() const { return theta1_box.dim(); }
  int d2() const { return theta2_box.dim(); }
  bool has_analytic_derivatives() const {
    return static_cast<bool>(drift_jac) && static_cast<bool>(diffusion_jac);
  }
};

// Evaluate B = b b^T with an ellipticity check (all eigenvalues > 0).
Mat eval_B(const DiffusionModel& model, const VecRef& x, const VecRef& th1);

// Built-in registry.
std::vector<std::string> builtin_model_names();
DiffusionModel builtin_model(const std::string& name);  // throws usage_error

// Custom 1-D family from coefficient tables:
//   a(x, th2) = -th2 * sum_k c[k] x^k,   b(x, th1) = th1 * (d0 + d1 cos x).
DiffusionModel make_table_model(const std::vector<double>& drift_coeffs,
                                const std::vector<double>& diff_coeffs,
                                const ParameterBox& box1 = ParameterBox(0.2, 5.0),
                                const ParameterBox& box2 = ParameterBox(0.2, 5.0));

struct RegularityReport {
  double min_eig_B = 0;
  double max_lipschitz_a = 0;   // sup |a(x)-a(y)| / |x-y| over grid pairs
  double max_lipschitz_b = 0;
  double max_growth_ratio = 0;  // sup |da/dx| / (1+|x|)^3
  bool ellipticity_ok = true;
  bool finite_ok = true;
  std::vector<std::string> flags;
};

struct ProbePoint {
  Vec x, th1, th2;
};

RegularityReport check_regularity(const DiffusionModel& model,
                                  const std::vector<ProbePoint>& grid);
std::vector<ProbePoint> default_probe_grid(const DiffusionModel& model,
                                           int x_points = 21, int th_points = 7);

}  // namespace qlbayes::models
