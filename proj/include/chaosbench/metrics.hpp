#pragma once

#include <cstddef>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "chaosbench/dynamics.hpp"

namespace chaosbench::metrics {

using dynamics::Trajectory;

/// Point-wise forecast accuracy metrics. Multivariate inputs reduce by
/// averaging the per-dimension metric value; NRMSE keeps its pooled form
/// inside a single square root.
enum class MetricKind {
  kSMAPE,
  kSpearman,
  kNRMSE,
  kMASE,
  kR2,
  kWAPE,
  kMSE,
  kMAE,
  kPearson,
  kKendallTau,
  kMAPE,
  kMARRE,
  kRMSLE,
  kCV,
};

struct MetricInfo {
  MetricKind kind;
  const char* name;        // stable identifier used in CSV and the CLI
  double lo;               // attainable range, lo <= value <= hi
  double hi;
  bool higher_is_better;   // orientation for rankings
};

/// All fourteen metrics in a fixed order.
const std::vector<MetricInfo>& metric_catalog();
const MetricInfo& metric_info(MetricKind kind);

/// Lookup by the stable name (e.g. "smape"). Throws std::invalid_argument
/// for unknown names.
MetricKind metric_from_name(const std::string& name);

/// Per-system constants some metrics need beyond the two windows.
struct MetricContext {
  // Scale of typical fluctuations, estimated once over the full training
  // series. Required by NRMSE so that uneven forecast windows share one
  // normalization.
  std::optional<double> sigma;
};

/// Scalar metric over an evaluation window. Truth and forecast must have
/// equal shape with >= 2 points (>= 3 for MASE). Returns nullopt when the
/// metric is undefined on this input (zero denominator, zero variance, or
/// non-finite values in either window) instead of emitting infinities.
/// NRMSE without ctx.sigma throws std::invalid_argument.
std::optional<double> evaluate(MetricKind kind, const Trajectory& truth,
                               const Trajectory& forecast,
                               const MetricContext& ctx = {});

/// Cumulative error as a function of forecast horizon: values[i] is the
/// metric evaluated over the window from the forecast origin up to and
/// including point i. Horizons count time since the origin; multiply by
/// lyapunov_scale for the horizon in Lyapunov times.
struct ErrorCurve {
  std::vector<double> horizons;              // strictly increasing
  std::vector<double> values;                // NaN once undefined
  double lyapunov_scale = 0.0;               // lambda_max of the system
  std::optional<std::size_t> divergent_from; // first undefined index

  double lyapunov_horizon(std::size_t i) const {
    return horizons[i] * lyapunov_scale;
  }
};

ErrorCurve error_curve(MetricKind kind, const Trajectory& truth,
                       const Trajectory& forecast, double lyapunov_max,
                       const MetricContext& ctx = {});

/// Largest horizon h (in Lyapunov times) such that the curve stays strictly
/// below the threshold at every horizon up to h. A curve that starts at or
/// above the threshold gives 0; a curve that never reaches it gives the full
/// window. Cumulative curves can re-enter the threshold later, so the first
/// crossing is the one that counts.
double valid_prediction_time(const ErrorCurve& curve, double threshold);

struct DoublingTime {
  double lyapunov_time = 0.0;  // horizon of the first doubling, or the window
  bool doubled = false;        // false: sentinel, accumulated error never doubled
};

/// First horizon at which the accumulated pointwise absolute error reaches
/// twice its value at the reference horizon (the 10th forecast point, one
/// tenth of a dominant period at the standard delivery rate). Needs >= 10
/// points. A zero reference or no doubling inside the window returns the
/// window length with doubled = false.
DoublingTime error_doubling_time(const Trajectory& truth,
                                 const Trajectory& forecast,
                                 double lyapunov_max);

/// Long-form CSV: system, model, metric, horizon, lyapunov_horizon, value,
/// divergent_flag. Undefined values serialize as "nan" with the flag set.
void write_curve_csv_header(std::ostream& out);
void append_curve_csv(std::ostream& out, const std::string& system,
                      const std::string& model, MetricKind kind,
                      const ErrorCurve& curve);

}  // namespace chaosbench::metrics
