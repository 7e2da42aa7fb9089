#pragma once

#include <Eigen/Dense>

#include "qlbayes/models.hpp"
#include "qlbayes/simulator.hpp"

namespace qlbayes::qla {

using models::DiffusionModel;
using models::Mat;
using models::Vec;
using models::VecRef;
using simulator::ObservationSet;

// Two-rate scaling: the diffusion coefficient concentrates at rate sqrt(n),
// the drift at sqrt(n h).  Stored as the rates (inverse step sizes of the
// scaled error u = rate * (theta - theta*)).
struct Scaling {
  double rate1 = 1.0;  // sqrt(n)
  double rate2 = 1.0;  // sqrt(n h)
  static Scaling from(long n, double h);
};

struct ContrastEvaluation {
  double value = 0.0;
  Vec grad1, grad2;
  Mat hess11, hess22, hess12;  // hess12 is d1 x d2
};

enum class DerivativeMode { automatic, analytic, finite_difference };

// Gaussian quasi-likelihood of the Euler transition:
//   H = -(1/2) sum_i { h^-1 (dX_i - h a_i)' B_i^-1 (dX_i - h a_i) + log det B_i }
// with a_i = a(X_{(i-1)h}, th2), B_i = B(X_{(i-1)h}, th1).
double contrast(const DiffusionModel& model, const ObservationSet& obs,
                const VecRef& th1, const VecRef& th2);

// Contrast plus gradients/Hessians; analytic when the model provides
// parameter derivatives, otherwise central finite differences with step
// 1e-5 * (1 + |theta_component|).
ContrastEvaluation contrast_with_derivatives(
    const DiffusionModel& model, const ObservationSet& obs, const VecRef& th1,
    const VecRef& th2, DerivativeMode mode = DerivativeMode::automatic);

// H(theta with stage-k component shifted by u / rate_k) - H(theta).
// Returns 0 exactly for u = 0; throws box_error if the shift leaves the box.
double log_ratio_field(const DiffusionModel& model, const ObservationSet& obs,
                       int stage, const VecRef& th1, const VecRef& th2,
                       const VecRef& u, const Scaling& scaling);

struct ObservedInformation {
  Mat gamma1_n;  // -hess11 / n
  Mat gamma2_n;  // -hess22 / (n h)
};

ObservedInformation observed_information(
    const DiffusionModel& model, const ObservationSet& obs, const VecRef& th1,
    const VecRef& th2, DerivativeMode mode = DerivativeMode::automatic);

}  // namespace qlbayes::qla
