#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "qlbayes/asymptotics.hpp"
#include "qlbayes/estimators.hpp"
#include "qlbayes/loss.hpp"
#include "qlbayes/models.hpp"

namespace qlbayes::experiments {

using asymptotics::InformationMatrices;
using estimators::PriorDensity;
using loss::LossFunction;
using models::Mat;
using models::TrueParameter;
using models::Vec;

struct LossPair {
  std::string id;
  LossFunction w1, w2;
};

// Polynomial test function: sum of coeff * u1^p1 * u2^p2 * ... terms,
// total degree capped at 4.
struct PolyMoment {
  std::string id;
  struct Term {
    double coeff = 1.0;
    std::vector<int> powers;  // one exponent per coordinate
  };
  std::vector<Term> terms;
};

enum class PilotMode { center, oracle, fixed };

struct McConfig {
  std::string model = "OU";
  std::optional<models::DiffusionModel> custom_model;  // overrides the registry
  std::optional<TrueParameter> truth;  // defaults from the model registry
  double gamma = 0.6;                  // h = n^-gamma
  std::vector<long> n_list = {2000, 8000, 32000};
  long replicates = 200;
  std::vector<LossPair> losses;        // default: power:2 on both stages
  PriorDensity prior1, prior2;
  PilotMode pilot_mode = PilotMode::oracle;
  double pilot_value = 0;              // used when pilot_mode == fixed
  std::uint64_t base_seed = 1;
  int substeps = 10;
  int grid_nodes = 0;                  // 0: per-dimension default
  int threads = 0;                     // 0: hardware (capped by QLA_THREADS)
  std::vector<PolyMoment> moments;     // default: u1^2, u2^2, u1^4, u2^4

  // Throws on invariant violations ("gamma must be in (0.5, 1)", R >= 50,
  // n_list strictly increasing).
  void validate() const;
};

struct CellStats {
  std::vector<double> mean, var;       // per coordinate
  std::vector<double> ks;              // per coordinate, vs limit normal
  double corr12 = 0;                   // first pair of coordinates
  std::vector<double> disc_vs_qmle;    // mean |u_tilde - u_hat| per coordinate
};

struct Cell {
  std::vector<std::vector<double>> u;  // scaled errors [replicate][coordinate]
  std::vector<long> kept;              // replicate indices that succeeded
  long failures = 0;
  long grid_warnings = 0;
  std::vector<std::string> failure_notes;
  bool invalid = false;                // > 5% failures
  CellStats stats;
};

struct NRun {
  long n = 0;
  double h = 0;
  Cell qmle;
  std::vector<Cell> bayes;  // parallel to cfg.losses
};

struct McReport {
  McConfig cfg;
  InformationMatrices info;
  Mat limit_cov;
  std::vector<NRun> runs;
};

// Simulate + estimate over all (n, replicate, loss) cells.  Deterministic
// given cfg: replicate seeds derive from (base_seed, n, r) and results are
// reduced in replicate order regardless of the worker count.
McReport run_monte_carlo(const McConfig& cfg);

// Fill cell.stats and the invalid flag (>5% failures) from the raw scaled
// errors; pass the QMLE cell to get the per-coordinate discrepancy column.
// Exposed so synthetic reports can be assembled in tests and tools.
void finalize_cell(Cell& cell, long replicates, const Mat& limit_cov,
                   const Cell* qmle_cell);

struct LossIndependenceRow {
  std::string loss_a, loss_b;  // loss_b may be "qmle"
  int coord = 0;
  std::vector<double> mean_disc, median_disc;  // one entry per n
  bool monotone = true;    // median non-increasing across n up to slack
  double final_disc = 0;   // median at largest n
};

struct LossIndependenceResult {
  std::vector<LossIndependenceRow> rows;
  std::vector<double> two_sample_ks;  // per loss pair x coord, largest n
  double slack = 1.10, threshold = 0.15, ks_threshold = 0;
  bool pass = false;
};

// Loss-independence proxy: discrepancies shrink with n and the Bayes/QMLE
// gap closes; distribution-level agreement via two-sample KS at largest n.
LossIndependenceResult loss_independence_check(const McReport& report, double slack = 1.10,
                              double threshold = 0.15);

struct NormalityRow {
  std::string estimator;  // loss id or "qmle"
  int coord = 0;
  double var = 0, var_lo = 0, var_hi = 0;
  double ks = 0, ks_crit = 0;
  bool pass = false;
};

struct NormalityResult {
  std::vector<NormalityRow> rows;
  double corr = 0, corr_crit = 0;  // cross-block correlation at largest n
  bool pass = false;
};

// Limit-normal agreement at the largest n: variance bands, one-sample KS at
// the 1% critical value 1.63/sqrt(R), cross-covariance below 2/sqrt(R).
NormalityResult normality_check(const McReport& report,
                                double var_lo_factor = 0.75,
                                double var_hi_factor = 4.0 / 3.0);

struct MomentRow {
  std::string estimator, moment_id;
  long n = 0;
  double empirical = 0, target = 0;
};

struct MomentResult {
  std::vector<MomentRow> rows;
  double abs4_ratio = 0;  // max/min of E|u|^4 across n (worst loss)
  bool ratio_ok = false;  // < 3
};

// Polynomial moments of the scaled errors vs closed-form Gaussian targets
// (Isserlis); E|u|^4 stability across n as the moment-boundedness proxy.
MomentResult moment_check(const McReport& report);

// Serialization (timestamps live in metadata.json only, so these are
// byte-stable for a fixed config).
std::string report_to_json(const McReport& report);
std::string summary_to_csv(const McReport& report);

}  // namespace qlbayes::experiments
