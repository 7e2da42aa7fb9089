#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "qlbayes/loss.hpp"
#include "qlbayes/models.hpp"
#include "qlbayes/qla.hpp"
#include "qlbayes/simulator.hpp"

namespace qlbayes::estimators {

using loss::LossFunction;
using models::DiffusionModel;
using models::Mat;
using models::ParameterBox;
using models::Vec;
using models::VecRef;
using qla::Scaling;
using simulator::ObservationSet;

// Strictly positive, bounded prior on the box; unnormalized (a constant
// factor cancels in every estimator).
struct PriorDensity {
  enum class Kind { uniform, gaussian } kind = Kind::uniform;
  Vec center, sd;  // gaussian parameters

  static PriorDensity uniform();
  static PriorDensity gaussian(Vec center, Vec sd);
  double operator()(const VecRef& th) const;
};

// Tensor-product midpoint rule on a box; all cells share one weight whose
// total is the box volume.
struct QuadratureGrid {
  ParameterBox box;
  std::vector<int> nodes_per_axis;
  double cell_weight = 0;

  static QuadratureGrid tensor(const ParameterBox& box, int per_axis);
  long total() const;
  Vec node(long flat) const;
  double axis_step(int axis) const;
};

// Default node counts: 401 per axis for d = 1, 101 for d = 2.
int default_nodes_per_axis(int dim);

// Posterior table for one stage: contrast evaluated once per node with the
// other stage fixed, stabilized via log-sum-exp, shareable read-only across
// loss functions and z-scans.
struct StageTable {
  int stage = 1;  // 1: theta1 varies, 2: theta2 varies
  QuadratureGrid grid;
  Vec fixed_other;
  double rate = 1;              // scaled-error rate of this stage
  std::vector<double> H;        // contrast per node
  double h_max = 0;
  std::vector<double> mass;     // exp(H - h_max) * prior * cell_weight
  Vec post_mean;                // mass-weighted node mean
  Vec post_sd;                  // mass-weighted node sd per axis
  bool grid_coarse = false;     // fewer than 5 nodes within 3 posterior sd
};

StageTable build_stage_table(const DiffusionModel& model,
                             const ObservationSet& obs, int stage,
                             const VecRef& fixed_other,
                             const PriorDensity& prior,
                             const QuadratureGrid& grid,
                             const Scaling& scaling);

// Integrated-loss objective psi(z) = sum_nodes w(rate * (z - node)) * mass;
// the common factor exp(h_max) is dropped (it cancels in the argmin).
double bayes_objective(const StageTable& table, const LossFunction& w,
                       const VecRef& z);

Vec posterior_mean(const StageTable& table);

// Grid request: either an explicit grid, or an adaptive one ("zoom"): a
// coarse pass over the full box locates the posterior mode and its local
// curvature, then the node budget is re-spent on mode +- 12 sd (clipped to
// the box).  The posterior mass outside that window is below exp(-70), so
// the restriction does not move the argmin; without it a box-wide grid
// cannot resolve the O(1/rate) posterior width once rate is large.
struct GridSpec {
  std::optional<QuadratureGrid> explicit_grid;
  int nodes = 0;  // 0: default per dimension

  static GridSpec automatic(int nodes = 0) { return GridSpec{std::nullopt, nodes}; }
  static GridSpec fixed(QuadratureGrid g) { return GridSpec{std::move(g), 0}; }
};

QuadratureGrid adapted_grid(const DiffusionModel& model,
                            const ObservationSet& obs, int stage,
                            const VecRef& fixed_other,
                            const PriorDensity& prior, const Scaling& scaling,
                            int nodes);

struct QmleResult {
  Vec theta1, theta2;
  double contrast_at_max = 0;
  bool converged = false;
  double scaled_grad_norm = 0;
  std::optional<Vec> scaled_error;  // (rate1*(th1-th1*), rate2*(th2-th2*))
};

// Box-constrained maximization of the contrast: multi-start (box center plus
// 7 low-discrepancy interior points) projected quasi-Newton; converged when
// the rate-scaled projected gradient norm drops below 1e-6.
QmleResult qmle(const DiffusionModel& model, const ObservationSet& obs,
                const Scaling& scaling,
                qla::DerivativeMode mode = qla::DerivativeMode::automatic,
                int starts = 8);

struct StageDiagnostics {
  double objective = 0;
  bool grid_coarse = false;
  bool tie_broken = false;
};

struct StageArgmin {
  Vec z;
  StageDiagnostics diag;
};

// Scan the integrated loss over the table's node values, break exact ties
// toward the smallest |z - center|, then refine per axis by golden section
// (tolerance 1e-3 / rate; a refined point is kept only when strictly
// better, so plateau losses keep the tie-broken node).  The table is read
// only, so one table serves many losses.
StageArgmin stage_argmin(const StageTable& table, const LossFunction& w,
                         const VecRef& center);

struct BayesResult {
  Vec theta1, theta2;
  std::string loss1_id, loss2_id;
  StageDiagnostics stage1, stage2;
  std::optional<Vec> scaled_error;
};

// Two-stage adaptive Bayes estimator: stage 1 minimizes the integrated loss
// over z1 with theta2 pinned at the pilot, stage 2 repeats for z2 with
// theta1 pinned at the stage-1 estimate.  Scan over the node z-values, then
// golden-section refinement per axis to tolerance 1e-3 / rate; ties broken
// toward the smallest |z - box center| and recorded.
BayesResult bayes_adaptive(const DiffusionModel& model,
                           const ObservationSet& obs, const LossFunction& w1,
                           const LossFunction& w2, const PriorDensity& prior1,
                           const PriorDensity& prior2, const VecRef& pilot_th2,
                           const Scaling& scaling,
                           const GridSpec& grid1 = GridSpec::automatic(),
                           const GridSpec& grid2 = GridSpec::automatic());

}  // namespace qlbayes::estimators
