#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "chaosbench/dynamics.hpp"

namespace chaosbench::models {

using dynamics::Trajectory;

namespace detail {
struct ModelImpl;
}

/// The thirteen forecasting models behind the uniform fit/rollout interface.
enum class ModelKind {
  kNaiveMean,
  kNaiveDrift,
  kNaiveSeasonal,
  kKalmanUnforced,
  kLinearRidge,
  kFourierRegression,
  kExpSmoothing,
  kTheta,
  kFourTheta,
  kDLinear,
  kNLinear,
  kESN,
  kNVAR,
};

/// All kinds in a fixed order (CSV and CLI enumeration order).
const std::vector<ModelKind>& all_model_kinds();

/// Stable identifier used in CSV, JSON, and the CLI (e.g. "naive_mean").
const char* model_name(ModelKind kind);

/// Lookup by stable name. Throws std::invalid_argument for unknown names.
ModelKind model_from_name(const std::string& name);

/// The single tunable per kind. The reservoir pair (ESN, NVAR) tunes the
/// leaky coefficient; every other kind tunes one integer window whose
/// per-kind meaning is:
///   NaiveMean / NaiveDrift   trailing samples the statistic is read from
///   NaiveSeasonal            trailing period-length windows in the motif
///   KalmanUnforced           stacked state order (samples per state)
///   LinearRidge              stacked input window (samples)
///   FourierRegression        number of retained dominant frequencies
///   ExpSmoothing / Theta /
///   FourTheta                recency emphasis: the smoothing coefficient is
///                            scored on the trailing 10 x lookback samples
///   DLinear / NLinear        input window length (samples)
struct Hyper {
  int lookback = 0;
  double leakage = 0.0;
  /// Smoothing family only (ExpSmoothing, Theta, FourTheta): remove the
  /// phase-aligned seasonal motif before fitting and restore it in the
  /// rollout. Season-adjusted and plain fits are distinct competing models
  /// during validation, not a tuned axis.
  bool deseasonalize = false;
};

/// Tuning menu for one kind. Exactly one grid is populated.
struct HyperGrid {
  std::vector<int> lookback;    // ascending integer windows
  std::vector<double> leakage;  // ascending leaky coefficients

  bool tunes_leakage() const { return !leakage.empty(); }
};

const HyperGrid& hyper_grid(ModelKind kind);

/// True when `hyper` lies within the kind's grid bounds and uses only fields
/// the kind understands. make_model enforces this.
bool hyper_in_grid(ModelKind kind, const Hyper& hyper);

/// Autoregressive rollout output. `values` always has exactly `horizon`
/// rows. When an output sample exceeds 1e6 x the fitted history amplitude
/// the rollout is truncated: rows from `valid_rows` on are NaN and
/// `diverged` is set.
struct Forecast {
  Trajectory values;
  bool diverged = false;
  Eigen::Index valid_rows = 0;
};

/// One forecasting model. Unfitted after construction; fit() estimates the
/// per-kind parameters, after which the model is immutable and predict() may
/// be called repeatedly (also concurrently from multiple threads).
class ForecastModel {
 public:
  ForecastModel(ForecastModel&&) noexcept;
  ForecastModel& operator=(ForecastModel&&) noexcept;
  ~ForecastModel();

  ModelKind kind() const { return kind_; }
  const Hyper& hyper() const { return hyper_; }
  int dim() const { return dim_; }
  std::uint64_t seed() const { return seed_; }
  bool fitted() const { return fitted_; }

  /// Set at construction for configurations that are admitted by the grid
  /// but sit outside the contraction regime (reservoir over-relaxation with
  /// effective spectral radius above 1.05). Such runs are recorded, never
  /// silent.
  bool stability_warning() const { return stability_warning_; }

  /// Minimum history length fit() accepts.
  Eigen::Index min_history() const;

  /// Minimum warmup length predict() accepts (the lookback in samples).
  Eigen::Index min_warmup() const;

  /// Estimates the per-kind parameters from a finite multivariate history.
  /// Throws std::invalid_argument on dimension mismatch, non-finite values,
  /// or a history shorter than min_history().
  void fit(const Trajectory& history);

  /// Fully autoregressive rollout of `horizon` steps past the end of
  /// `warmup`: model outputs are fed back as inputs, and nothing after the
  /// forecast origin is ever read. Throws std::logic_error before fit() and
  /// std::invalid_argument on a bad warmup or horizon < 1.
  Forecast predict(const Trajectory& warmup, Eigen::Index horizon) const;

  /// Count of fitted real parameters, 0 before fit().
  Eigen::Index parameter_count() const;

  /// JSON summary: kind, active hyper, dim, seed, fitted, parameter count,
  /// stability warning.
  std::string summary_json() const;

  /// ESN only: spectral radius of the scaled reservoir matrix, recomputed
  /// from the stored weights. Throws std::logic_error for other kinds.
  double esn_spectral_radius() const;

  /// NVAR only: dimension of the lifted feature vector (constant + linear +
  /// unique quadratic monomials). Throws std::logic_error for other kinds.
  Eigen::Index nvar_feature_count() const;

 private:
  friend ForecastModel make_model(ModelKind, const Hyper&, int, std::uint64_t);
  ForecastModel() = default;

  ModelKind kind_ = ModelKind::kNaiveMean;
  Hyper hyper_;
  int dim_ = 0;
  std::uint64_t seed_ = 0;
  bool fitted_ = false;
  bool stability_warning_ = false;
  std::unique_ptr<detail::ModelImpl> impl_;
};

/// Seeded deterministic construction. The ESN reservoir is sampled here and
/// rescaled so its spectral radius is exactly 0.99 (to within 1e-6). Throws
/// std::invalid_argument for a hyper outside the kind's grid or dim < 1.
ForecastModel make_model(ModelKind kind, const Hyper& hyper, int dim,
                         std::uint64_t seed);

}  // namespace chaosbench::models
