#include "chaosbench/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "chaosbench/util.hpp"

namespace chaosbench::metrics {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

const std::vector<MetricInfo> kCatalog = {
    {MetricKind::kSMAPE, "smape", 0.0, 200.0, false},
    {MetricKind::kSpearman, "spearman", -1.0, 1.0, true},
    {MetricKind::kNRMSE, "nrmse", 0.0, kInf, false},
    {MetricKind::kMASE, "mase", 0.0, kInf, false},
    {MetricKind::kR2, "r2", -kInf, 1.0, true},
    {MetricKind::kWAPE, "wape", 0.0, kInf, false},
    {MetricKind::kMSE, "mse", 0.0, kInf, false},
    {MetricKind::kMAE, "mae", 0.0, kInf, false},
    {MetricKind::kPearson, "pearson", -1.0, 1.0, true},
    {MetricKind::kKendallTau, "kendall_tau", -1.0, 1.0, true},
    {MetricKind::kMAPE, "mape", 0.0, kInf, false},
    {MetricKind::kMARRE, "marre", 0.0, kInf, false},
    {MetricKind::kRMSLE, "rmsle", 0.0, kInf, false},
    {MetricKind::kCV, "cv", 0.0, kInf, false},
};

std::size_t min_points(MetricKind kind) {
  return kind == MetricKind::kMASE ? 3 : 2;
}

void check_pair(MetricKind kind, const Trajectory& truth,
                const Trajectory& forecast) {
  if (truth.values.rows() != forecast.values.rows() ||
      truth.values.cols() != forecast.values.cols()) {
    throw std::invalid_argument("evaluate: truth and forecast shapes differ");
  }
  if (truth.values.rows() < static_cast<Eigen::Index>(min_points(kind))) {
    throw std::invalid_argument("evaluate: window too short for this metric");
  }
}

bool all_finite(const Trajectory& traj) {
  return traj.values.allFinite();
}

// Average rank per element, ties share the mean of their positions.
std::vector<double> rank_values(const Eigen::VectorXd& v) {
  const auto n = static_cast<std::size_t>(v.size());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&v](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    const double shared = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = shared;
    i = j + 1;
  }
  return ranks;
}

std::optional<double> pearson_raw(const std::vector<double>& a,
                                  const std::vector<double>& b) {
  const auto n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double saa = 0.0, sbb = 0.0, sab = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
    sab += (a[i] - ma) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return std::nullopt;
  return sab / std::sqrt(saa * sbb);
}

// Tie-adjusted tau. Quadratic in the window length.
std::optional<double> kendall_raw(const Eigen::VectorXd& y,
                                  const Eigen::VectorXd& f) {
  const Eigen::Index n = y.size();
  double concordant = 0.0, discordant = 0.0, ties_y = 0.0, ties_f = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double dy = y[j] - y[i];
      const double df = f[j] - f[i];
      if (dy == 0.0 && df == 0.0) continue;
      if (dy == 0.0) {
        ties_y += 1.0;
      } else if (df == 0.0) {
        ties_f += 1.0;
      } else if ((dy > 0.0) == (df > 0.0)) {
        concordant += 1.0;
      } else {
        discordant += 1.0;
      }
    }
  }
  const double den = std::sqrt((concordant + discordant + ties_y) *
                               (concordant + discordant + ties_f));
  if (den == 0.0) return std::nullopt;
  return (concordant - discordant) / den;
}

// Average of a per-dimension metric; any undefined dimension makes the
// whole value undefined.
template <typename Fn>
std::optional<double> per_dimension(const Trajectory& truth,
                                    const Trajectory& forecast, Fn&& fn) {
  const Eigen::Index d = truth.values.cols();
  double acc = 0.0;
  for (Eigen::Index m = 0; m < d; ++m) {
    const std::optional<double> v =
        fn(truth.values.col(m), forecast.values.col(m));
    if (!v.has_value()) return std::nullopt;
    acc += *v;
  }
  return acc / static_cast<double>(d);
}

}  // namespace

const std::vector<MetricInfo>& metric_catalog() { return kCatalog; }

const MetricInfo& metric_info(MetricKind kind) {
  for (const auto& info : kCatalog) {
    if (info.kind == kind) return info;
  }
  throw std::invalid_argument("metric_info: unknown metric kind");
}

MetricKind metric_from_name(const std::string& name) {
  for (const auto& info : kCatalog) {
    if (name == info.name) return info.kind;
  }
  throw std::invalid_argument("metric_from_name: unknown metric '" + name +
                              "'");
}

std::optional<double> evaluate(MetricKind kind, const Trajectory& truth,
                               const Trajectory& forecast,
                               const MetricContext& ctx) {
  check_pair(kind, truth, forecast);
  if (kind == MetricKind::kNRMSE) {
    if (!ctx.sigma.has_value() || !(*ctx.sigma > 0.0)) {
      throw std::invalid_argument(
          "evaluate: NRMSE needs a positive training-set sigma");
    }
  }
  if (!all_finite(truth) || !all_finite(forecast)) return std::nullopt;

  const auto t = static_cast<double>(truth.values.rows());
  const auto d = static_cast<double>(truth.values.cols());

  switch (kind) {
    case MetricKind::kSMAPE:
      return per_dimension(truth, forecast, [t](const auto& y, const auto& f) {
        double acc = 0.0;
        for (Eigen::Index i = 0; i < y.size(); ++i) {
          const double den = std::abs(y[i]) + std::abs(f[i]);
          if (den > 0.0) acc += std::abs(y[i] - f[i]) / den;
        }
        return std::optional<double>(200.0 / t * acc);
      });

    case MetricKind::kSpearman:
      return per_dimension(truth, forecast, [](const auto& y, const auto& f) {
        return pearson_raw(rank_values(y), rank_values(f));
      });

    case MetricKind::kNRMSE: {
      const double sigma = *ctx.sigma;
      const double ss = (truth.values - forecast.values).squaredNorm();
      return std::sqrt(ss / (t * d * sigma * sigma));
    }

    case MetricKind::kMASE:
      return per_dimension(truth, forecast, [t](const auto& y, const auto& f) {
        const double num = (y - f).cwiseAbs().mean();
        double den = 0.0;
        for (Eigen::Index i = 1; i < y.size(); ++i) {
          den += std::abs(y[i] - y[i - 1]);
        }
        den /= (t - 1.0);
        if (den == 0.0) return std::optional<double>();
        return std::optional<double>(num / den);
      });

    case MetricKind::kR2: {
      double ss_res = 0.0, ss_tot = 0.0;
      for (Eigen::Index m = 0; m < truth.values.cols(); ++m) {
        const double mean = truth.values.col(m).mean();
        ss_res += (truth.values.col(m) - forecast.values.col(m)).squaredNorm();
        ss_tot += (truth.values.col(m).array() - mean).square().sum();
      }
      if (ss_tot == 0.0) return std::nullopt;
      return 1.0 - ss_res / ss_tot;
    }

    case MetricKind::kWAPE:
      return per_dimension(truth, forecast, [](const auto& y, const auto& f) {
        const double den = y.cwiseAbs().sum();
        if (den == 0.0) return std::optional<double>();
        return std::optional<double>((y - f).cwiseAbs().sum() / den);
      });

    case MetricKind::kMSE:
      return (truth.values - forecast.values).squaredNorm() / (t * d);

    case MetricKind::kMAE:
      return (truth.values - forecast.values).cwiseAbs().sum() / (t * d);

    case MetricKind::kPearson:
      return per_dimension(truth, forecast, [](const auto& y, const auto& f) {
        std::vector<double> a(y.data(), y.data() + y.size());
        std::vector<double> b(f.data(), f.data() + f.size());
        return pearson_raw(a, b);
      });

    case MetricKind::kKendallTau:
      return per_dimension(truth, forecast, [](const auto& y, const auto& f) {
        return kendall_raw(y, f);
      });

    case MetricKind::kMAPE:
      return per_dimension(truth, forecast, [t](const auto& y, const auto& f) {
        double acc = 0.0;
        for (Eigen::Index i = 0; i < y.size(); ++i) {
          if (y[i] == 0.0) return std::optional<double>();
          acc += std::abs((y[i] - f[i]) / y[i]);
        }
        return std::optional<double>(100.0 / t * acc);
      });

    case MetricKind::kMARRE:
      return per_dimension(truth, forecast, [](const auto& y, const auto& f) {
        const double range = y.maxCoeff() - y.minCoeff();
        if (range == 0.0) return std::optional<double>();
        return std::optional<double>(100.0 * (y - f).cwiseAbs().mean() /
                                     range);
      });

    case MetricKind::kRMSLE:
      return per_dimension(truth, forecast, [](const auto& y, const auto& f) {
        // Shared per-dimension shift keeps the logs real on negative
        // attractor coordinates.
        const double mn = std::min(y.minCoeff(), f.minCoeff());
        double acc = 0.0;
        for (Eigen::Index i = 0; i < y.size(); ++i) {
          const double diff = std::log1p(y[i] - mn) - std::log1p(f[i] - mn);
          acc += diff * diff;
        }
        return std::optional<double>(
            std::sqrt(acc / static_cast<double>(y.size())));
      });

    case MetricKind::kCV:
      return per_dimension(truth, forecast, [](const auto& y, const auto& f) {
        const double mean = y.mean();
        if (mean == 0.0) return std::optional<double>();
        const double rmse =
            std::sqrt((y - f).squaredNorm() / static_cast<double>(y.size()));
        return std::optional<double>(100.0 * rmse / std::abs(mean));
      });
  }
  throw std::invalid_argument("evaluate: unknown metric kind");
}

ErrorCurve error_curve(MetricKind kind, const Trajectory& truth,
                       const Trajectory& forecast, double lyapunov_max,
                       const MetricContext& ctx) {
  check_pair(kind, truth, forecast);
  const Eigen::Index n = truth.values.rows();
  const auto first = static_cast<Eigen::Index>(min_points(kind)) - 1;

  ErrorCurve curve;
  curve.lyapunov_scale = lyapunov_max;
  curve.horizons.reserve(static_cast<std::size_t>(n - first));
  curve.values.reserve(static_cast<std::size_t>(n - first));

  Trajectory wt, wf;
  wt.dt = truth.dt;
  wf.dt = forecast.dt;
  for (Eigen::Index i = first; i < n; ++i) {
    wt.values = truth.values.topRows(i + 1);
    wf.values = forecast.values.topRows(i + 1);
    const auto v = evaluate(kind, wt, wf, ctx);
    curve.horizons.push_back(static_cast<double>(i + 1) * truth.dt);
    curve.values.push_back(v.has_value() ? *v : kNaN);
  }

  // Flag only a trailing undefined run; isolated undefined points recover.
  std::size_t last_finite = curve.values.size();
  for (std::size_t i = 0; i < curve.values.size(); ++i) {
    if (std::isfinite(curve.values[i])) last_finite = i;
  }
  if (last_finite + 1 < curve.values.size() ||
      (last_finite == curve.values.size() && !curve.values.empty())) {
    curve.divergent_from =
        last_finite == curve.values.size() ? 0 : last_finite + 1;
  }
  return curve;
}

double valid_prediction_time(const ErrorCurve& curve, double threshold) {
  if (curve.horizons.empty()) {
    throw std::invalid_argument("valid_prediction_time: empty curve");
  }
  if (!(threshold > 0.0)) {
    throw std::invalid_argument("valid_prediction_time: threshold must be > 0");
  }
  double last_ok = 0.0;
  for (std::size_t i = 0; i < curve.values.size(); ++i) {
    if (!std::isfinite(curve.values[i]) || curve.values[i] >= threshold) {
      break;
    }
    last_ok = curve.lyapunov_horizon(i);
  }
  return last_ok;
}

DoublingTime error_doubling_time(const Trajectory& truth,
                                 const Trajectory& forecast,
                                 double lyapunov_max) {
  if (truth.values.rows() != forecast.values.rows() ||
      truth.values.cols() != forecast.values.cols()) {
    throw std::invalid_argument(
        "error_doubling_time: truth and forecast shapes differ");
  }
  const Eigen::Index n = truth.values.rows();
  if (n < 10) {
    throw std::invalid_argument("error_doubling_time: need >= 10 points");
  }

  std::vector<double> accumulated(static_cast<std::size_t>(n));
  double running = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double step = (truth.values.row(i) - forecast.values.row(i))
                            .cwiseAbs()
                            .sum();
    // A diverged forecast accumulates unbounded error from here on.
    running += std::isfinite(step) ? step : kInf;
    accumulated[static_cast<std::size_t>(i)] = running;
  }

  DoublingTime out;
  const double window = static_cast<double>(n) * truth.dt * lyapunov_max;
  const double reference = accumulated[9];  // 10th forecast point
  if (!(reference > 0.0)) {
    out.lyapunov_time = window;
    return out;
  }
  for (std::size_t i = 10; i < accumulated.size(); ++i) {
    if (accumulated[i] >= 2.0 * reference) {
      out.lyapunov_time =
          static_cast<double>(i + 1) * truth.dt * lyapunov_max;
      out.doubled = true;
      return out;
    }
  }
  out.lyapunov_time = window;
  return out;
}

void write_curve_csv_header(std::ostream& out) {
  out << "system,model,metric,horizon,lyapunov_horizon,value,divergent_flag\n";
}

void append_curve_csv(std::ostream& out, const std::string& system,
                      const std::string& model, MetricKind kind,
                      const ErrorCurve& curve) {
  const auto& name = metric_info(kind).name;
  for (std::size_t i = 0; i < curve.horizons.size(); ++i) {
    const double v = curve.values[i];
    out << system << ',' << model << ',' << name << ','
        << util::fmt_double(curve.horizons[i]) << ','
        << util::fmt_double(curve.lyapunov_horizon(i)) << ','
        << util::fmt_double(v) << ',' << (std::isfinite(v) ? 0 : 1) << '\n';
  }
}

}  // namespace chaosbench::metrics
