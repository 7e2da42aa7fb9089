#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "qlbayes/models.hpp"
#include "qlbayes/qla.hpp"
#include "qlbayes/simulator.hpp"

namespace qlbayes::asymptotics {

using models::DiffusionModel;
using models::Mat;
using models::TrueParameter;
using models::Vec;
using models::VecRef;

// Stationary law of the diffusion, either as a normalized density tabulated
// on a dense mesh over a finite support (integrates to 1 within 1e-6,
// checked at construction) or as the states of one long simulated path.
class InvariantMeasure {
 public:
  enum class Kind { analytic, empirical };

  // exact_form: the callback is already a normalized density; density()
  // then returns it verbatim instead of interpolating the tabulation.
  static InvariantMeasure analytic(std::function<double(double)> unnormalized,
                                   double lo, double hi, bool grow_support,
                                   bool exact_form = false);
  static InvariantMeasure empirical(std::vector<double> states);

  Kind kind() const { return kind_; }
  double lo() const { return lo_; }
  double hi() const { return hi_; }
  double density(double x) const;  // analytic kind only

  // Analytic: composite-Simpson quadrature of g against the density on the
  // tabulated mesh; empirical: arithmetic mean of g over the states.
  double expect(const std::function<double(double)>& g) const;
  const std::vector<double>& states() const { return states_; }

 private:
  InvariantMeasure() = default;
  Kind kind_ = Kind::analytic;
  double lo_ = 0, hi_ = 0;
  std::vector<double> xs_, ps_;  // mesh and normalized density values
  std::vector<double> states_;
  std::function<double(double)> form_;  // exact closed form when available
};

// Stationary density via the 1-D speed-measure formula
//   p(x)  proportional to  exp(int_0^x 2 a(s, th2*) / B(s, th1*) ds) / B(x, th1*),
// support grown geometrically from [-4 sigma, 4 sigma] until the added tail
// mass falls below 1e-8.  Models that carry a closed-form density use it
// directly.  Throws not_ergodic_error when normalization diverges.
InvariantMeasure invariant_density_1d(const DiffusionModel& model,
                                      const TrueParameter& truth);

InvariantMeasure empirical_measure(const simulator::ObservationSet& path);

struct InformationMatrices {
  Mat gamma1;  // (1/2) E tr{B^-1 dB_j B^-1 dB_k}
  Mat gamma2;  // E (da_j)' B^-1 (da_k)
};

InformationMatrices gamma_matrices(
    const DiffusionModel& model, const TrueParameter& truth,
    const InvariantMeasure& measure,
    qla::DerivativeMode mode = qla::DerivativeMode::automatic);

// Block-diagonal limit covariance diag(gamma1^-1, gamma2^-1).
Mat limit_covariance(const InformationMatrices& info);

struct IdentifiabilityReport {
  std::vector<Vec> grid1, grid2;   // scan points per stage
  std::vector<double> y1, y2;      // Y^k values (always <= 0 up to quadrature)
  double max_y1_off = 0, max_y2_off = 0;  // max over points off the truth cell
  double chi1 = 0, chi2 = 0;       // fitted min of -Y^k / |theta_k - theta_k*|^2
  bool identifiable = false;       // Y < 0 off a one-cell neighborhood of truth
};

// Scans the identifiability functionals
//   Y1(th1) = -(1/2) E[ tr(B(th1)^-1 B(th1*) - I) + log det B(th1)/det B(th1*) ]
//   Y2(th2) = -(1/2) E[ (a(th2) - a(th2*))' B(th1*)^-1 (a(th2) - a(th2*)) ]
// over tensor grids on the boxes (truth appended to the grid).  Values above
// +1e-8 raise identifiability_error: both integrands are nonpositive by
// construction, so a positive value means broken quadrature.
IdentifiabilityReport identifiability_scan(const DiffusionModel& model,
                                           const TrueParameter& truth,
                                           const InvariantMeasure& measure,
                                           int points_per_axis = 41);

}  // namespace qlbayes::asymptotics
