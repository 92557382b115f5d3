#pragma once

#include <limits>
#include <memory>

#include <Eigen/Core>

#include "chaosbench/models.hpp"

namespace chaosbench::models::detail {

using Eigen::Index;
using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

/// Per-kind estimator and rollout engine. fit() sees the raw history matrix
/// (rows = time) plus the sampling metadata; rollout() writes up to
/// out.rows() forecast rows and returns how many were produced before the
/// divergence bound tripped (the wrapper NaN-fills the rest).
struct ModelImpl {
  virtual ~ModelImpl() = default;

  virtual Index min_history() const = 0;
  virtual Index min_warmup() const = 0;
  virtual void fit(const Mat& y, double dt, int granularity) = 0;
  virtual Index rollout(const Mat& warmup, Mat& out) const = 0;
  virtual Index parameter_count() const = 0;

  /// 1e6 x fitted history amplitude, set by the wrapper after fit().
  double bound = std::numeric_limits<double>::infinity();

  /// One forecast row is usable iff finite and within the bound.
  bool row_ok(const Eigen::RowVectorXd& r) const {
    return r.allFinite() && r.cwiseAbs().maxCoeff() <= bound;
  }
};

/// Factories, one per source file group.
std::unique_ptr<ModelImpl> make_naive_mean(int dim, const Hyper& h);
std::unique_ptr<ModelImpl> make_naive_drift(int dim, const Hyper& h);
std::unique_ptr<ModelImpl> make_naive_seasonal(int dim, const Hyper& h);
std::unique_ptr<ModelImpl> make_exp_smoothing(int dim, const Hyper& h);
std::unique_ptr<ModelImpl> make_theta(int dim, const Hyper& h, bool four);
std::unique_ptr<ModelImpl> make_fourier(int dim, const Hyper& h);
std::unique_ptr<ModelImpl> make_kalman(int dim, const Hyper& h);
std::unique_ptr<ModelImpl> make_linear_ridge(int dim, const Hyper& h);
std::unique_ptr<ModelImpl> make_dlinear(int dim, const Hyper& h);
std::unique_ptr<ModelImpl> make_nlinear(int dim, const Hyper& h);
std::unique_ptr<ModelImpl> make_esn(int dim, const Hyper& h, std::uint64_t seed,
                                    bool* stability_warning);
std::unique_ptr<ModelImpl> make_nvar(int dim, const Hyper& h,
                                     bool* stability_warning);

/// Multi-output ridge: W (p x q) minimizing |XW - Y|^2 + alpha |W|^2 via
/// LDLT on X^T X + alpha I. alpha > 0 keeps the system positive definite;
/// a failed factorization therefore signals corrupt inputs and throws.
Mat ridge_solve(const Mat& X, const Mat& Y, double alpha);

/// Column standardization. Constant columns get unit scale so they center
/// to zero instead of dividing by zero.
struct ColumnScaler {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd scale;

  void fit_to(const Mat& X);
  Mat apply(const Mat& X) const;
};

/// Simple exponential smoothing level: l_t = a y_t + (1-a) l_{t-1} with
/// l_0 = y_0. Returns the final level.
double ses_level(const Vec& y, double alpha);

/// Picks alpha from {0.05, 0.10, ..., 0.95} by one-step squared error
/// accumulated over the trailing `tail` points of the recursion.
double select_ses_alpha(const Vec& y, Index tail);

/// Phase-aligned mean motif. Row j holds phase j, aligned so row
/// period - 1 is the phase of the last fitted sample.
struct SeasonalMotif {
  Mat motif;       // period x D
  int period = 0;
  int windows = 0; // how many trailing windows the mean used
};

/// Estimates the period (granularity when >= 2, else the pooled power
/// spectrum peak) and averages up to max_windows trailing non-overlapping
/// windows. Throws std::invalid_argument when fewer than two windows fit.
SeasonalMotif fit_motif(const Mat& y, double dt, int granularity,
                        int max_windows);

/// Motif phase of forecast step h (h = 1 is the first row after the fitted
/// history's last sample, which sits at phase period - 1).
inline Index motif_phase(const SeasonalMotif& m, Index h) {
  return (static_cast<Index>(m.period) - 1 + h) % m.period;
}

/// Shared loop for one-step window models: keeps an L-row sliding window
/// seeded from the warmup tail, asks `step` for each next row, bound-checks
/// it, and feeds it back. Returns rows produced.
template <class StepFn>
Index roll_window(const ModelImpl& impl, const Mat& warmup, Index lookback,
                  Mat& out, StepFn&& step) {
  Mat window = warmup.bottomRows(lookback);
  Eigen::RowVectorXd next(warmup.cols());
  for (Index h = 0; h < out.rows(); ++h) {
    step(window, next);
    if (!impl.row_ok(next)) return h;
    out.row(h) = next;
    if (lookback > 1) {
      window.topRows(lookback - 1) = window.bottomRows(lookback - 1).eval();
    }
    window.row(lookback - 1) = next;
  }
  return out.rows();
}

}  // namespace chaosbench::models::detail
