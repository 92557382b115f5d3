#include "chaosbench/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>

#include <Eigen/Cholesky>
#include <nlohmann/json.hpp>

#include "chaosbench/alignment.hpp"
#include "models_internal.hpp"

namespace chaosbench::models {

namespace detail {

Mat ridge_solve(const Mat& X, const Mat& Y, double alpha) {
  Mat gram = X.transpose() * X;
  gram.diagonal().array() += alpha;
  Eigen::LDLT<Mat> ldlt(gram);
  if (ldlt.info() != Eigen::Success) {
    throw std::runtime_error("ridge normal equations failed to factorize");
  }
  return ldlt.solve(X.transpose() * Y);
}

void ColumnScaler::fit_to(const Mat& X) {
  mean = X.colwise().mean();
  Mat centered = X.rowwise() - mean;
  scale = (centered.array().square().colwise().sum() /
           static_cast<double>(X.rows()))
              .sqrt();
  for (Index j = 0; j < scale.size(); ++j) {
    if (scale(j) < 1e-150) scale(j) = 1.0;
  }
}

Mat ColumnScaler::apply(const Mat& X) const {
  return (X.rowwise() - mean).array().rowwise() / scale.array();
}

double ses_level(const Vec& y, double alpha) {
  double level = y(0);
  for (Index t = 1; t < y.size(); ++t) {
    level = alpha * y(t) + (1.0 - alpha) * level;
  }
  return level;
}

double select_ses_alpha(const Vec& y, Index tail) {
  const Index n = y.size();
  tail = std::clamp<Index>(tail, 1, n - 1);
  double best_alpha = 0.05;
  double best_sse = std::numeric_limits<double>::infinity();
  for (int k = 1; k <= 19; ++k) {
    const double alpha = 0.05 * k;
    double level = y(0);
    double sse = 0.0;
    for (Index t = 1; t < n; ++t) {
      const double err = y(t) - level;
      if (t >= n - tail) sse += err * err;
      level = alpha * y(t) + (1.0 - alpha) * level;
    }
    if (sse < best_sse) {
      best_sse = sse;
      best_alpha = alpha;
    }
  }
  return best_alpha;
}

SeasonalMotif fit_motif(const Mat& y, double dt, int granularity,
                        int max_windows) {
  const Index n = y.rows();
  Index period = 0;
  if (granularity >= 2) {
    period = granularity;
  } else {
    // Pooled periodogram across dimensions; the bins share one frequency
    // grid because every dimension has the same length.
    std::vector<double> series(static_cast<std::size_t>(n));
    std::vector<double> pooled;
    std::vector<double> freqs;
    for (Index d = 0; d < y.cols(); ++d) {
      for (Index t = 0; t < n; ++t) series[static_cast<std::size_t>(t)] = y(t, d);
      const auto spec = alignment::power_spectrum(series, dt);
      if (pooled.empty()) {
        pooled.assign(spec.size(), 0.0);
        freqs.resize(spec.size());
        for (std::size_t i = 0; i < spec.size(); ++i) freqs[i] = spec[i].first;
      }
      for (std::size_t i = 0; i < spec.size() && i < pooled.size(); ++i) {
        pooled[i] += spec[i].second;
      }
    }
    const auto peak =
        std::max_element(pooled.begin(), pooled.end()) - pooled.begin();
    const double f_peak = freqs[static_cast<std::size_t>(peak)];
    period = static_cast<Index>(std::lround(1.0 / (f_peak * dt)));
    period = std::clamp<Index>(period, 2, n / 2);
  }

  const int windows =
      std::min<Index>(max_windows, period > 0 ? n / period : 0);
  if (windows < 2) {
    throw std::invalid_argument(
        "history too short: need at least two dominant-period windows");
  }
  SeasonalMotif m;
  m.period = static_cast<int>(period);
  m.windows = windows;
  m.motif = Mat::Zero(period, y.cols());
  for (int w = 1; w <= windows; ++w) {
    m.motif += y.middleRows(n - static_cast<Index>(w) * period, period);
  }
  m.motif /= static_cast<double>(windows);
  return m;
}

}  // namespace detail

namespace {

constexpr double kLookbackLo = 2;
constexpr double kLookbackHi = 50;
constexpr double kLeakageLo = 0.01;
constexpr double kLeakageHi = 1.2;

bool is_reservoir(ModelKind kind) {
  return kind == ModelKind::kESN || kind == ModelKind::kNVAR;
}

bool is_smoothing_family(ModelKind kind) {
  return kind == ModelKind::kExpSmoothing || kind == ModelKind::kTheta ||
         kind == ModelKind::kFourTheta;
}

}  // namespace

const std::vector<ModelKind>& all_model_kinds() {
  static const std::vector<ModelKind> kinds = {
      ModelKind::kNaiveMean,     ModelKind::kNaiveDrift,
      ModelKind::kNaiveSeasonal, ModelKind::kKalmanUnforced,
      ModelKind::kLinearRidge,   ModelKind::kFourierRegression,
      ModelKind::kExpSmoothing,  ModelKind::kTheta,
      ModelKind::kFourTheta,     ModelKind::kDLinear,
      ModelKind::kNLinear,       ModelKind::kESN,
      ModelKind::kNVAR,
  };
  return kinds;
}

const char* model_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::kNaiveMean: return "naive_mean";
    case ModelKind::kNaiveDrift: return "naive_drift";
    case ModelKind::kNaiveSeasonal: return "naive_seasonal";
    case ModelKind::kKalmanUnforced: return "kalman_unforced";
    case ModelKind::kLinearRidge: return "linear_ridge";
    case ModelKind::kFourierRegression: return "fourier_regression";
    case ModelKind::kExpSmoothing: return "exp_smoothing";
    case ModelKind::kTheta: return "theta";
    case ModelKind::kFourTheta: return "four_theta";
    case ModelKind::kDLinear: return "dlinear";
    case ModelKind::kNLinear: return "nlinear";
    case ModelKind::kESN: return "esn";
    case ModelKind::kNVAR: return "nvar";
  }
  throw std::invalid_argument("unknown model kind");
}

ModelKind model_from_name(const std::string& name) {
  for (ModelKind kind : all_model_kinds()) {
    if (name == model_name(kind)) return kind;
  }
  throw std::invalid_argument("unknown model name: " + name);
}

const HyperGrid& hyper_grid(ModelKind kind) {
  static const HyperGrid lookback_grid = [] {
    HyperGrid g;
    for (int l = 2; l <= 50; ++l) g.lookback.push_back(l);
    return g;
  }();
  static const HyperGrid leakage_grid = [] {
    HyperGrid g;
    g.leakage = {0.01, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5,
                 0.6,  0.7,  0.8, 0.9, 1.0, 1.1, 1.2};
    return g;
  }();
  return is_reservoir(kind) ? leakage_grid : lookback_grid;
}

bool hyper_in_grid(ModelKind kind, const Hyper& hyper) {
  if (is_reservoir(kind)) {
    return hyper.lookback == 0 && !hyper.deseasonalize &&
           hyper.leakage >= kLeakageLo && hyper.leakage <= kLeakageHi;
  }
  if (hyper.leakage != 0.0) return false;
  if (hyper.deseasonalize && !is_smoothing_family(kind)) return false;
  return hyper.lookback >= kLookbackLo && hyper.lookback <= kLookbackHi;
}

ForecastModel::ForecastModel(ForecastModel&&) noexcept = default;
ForecastModel& ForecastModel::operator=(ForecastModel&&) noexcept = default;
ForecastModel::~ForecastModel() = default;

Eigen::Index ForecastModel::min_history() const { return impl_->min_history(); }

Eigen::Index ForecastModel::min_warmup() const { return impl_->min_warmup(); }

void ForecastModel::fit(const Trajectory& history) {
  if (history.dim() != dim_) {
    throw std::invalid_argument("history dimension does not match the model");
  }
  if (!history.values.allFinite()) {
    throw std::invalid_argument("history contains non-finite values");
  }
  if (history.length() < impl_->min_history()) {
    throw std::invalid_argument("history too short for this model");
  }
  impl_->fit(history.values, history.dt, history.granularity);
  const double amp = history.values.cwiseAbs().maxCoeff();
  impl_->bound = 1e6 * std::max(amp, 1e-300);
  fitted_ = true;
}

Forecast ForecastModel::predict(const Trajectory& warmup,
                                Eigen::Index horizon) const {
  if (!fitted_) throw std::logic_error("predict called before fit");
  if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
  if (warmup.dim() != dim_) {
    throw std::invalid_argument("warmup dimension does not match the model");
  }
  if (warmup.length() < impl_->min_warmup()) {
    throw std::invalid_argument("warmup shorter than the model lookback");
  }
  if (!warmup.values.allFinite()) {
    throw std::invalid_argument("warmup contains non-finite values");
  }

  Forecast fc;
  fc.values.values = detail::Mat::Constant(
      horizon, dim_, std::numeric_limits<double>::quiet_NaN());
  fc.valid_rows = impl_->rollout(warmup.values, fc.values.values);
  fc.diverged = fc.valid_rows < horizon;
  fc.values.dt = warmup.dt;
  fc.values.t0 = warmup.t0 + warmup.dt * static_cast<double>(warmup.length());
  fc.values.system_name = warmup.system_name;
  fc.values.granularity = warmup.granularity;
  return fc;
}

Eigen::Index ForecastModel::parameter_count() const {
  return fitted_ ? impl_->parameter_count() : 0;
}

std::string ForecastModel::summary_json() const {
  nlohmann::json j;
  j["kind"] = model_name(kind_);
  j["dim"] = dim_;
  j["seed"] = seed_;
  j["fitted"] = fitted_;
  j["parameters"] = parameter_count();
  j["stability_warning"] = stability_warning_;
  if (is_reservoir(kind_)) {
    j["hyper"]["leakage"] = hyper_.leakage;
  } else {
    j["hyper"]["lookback"] = hyper_.lookback;
    if (is_smoothing_family(kind_)) {
      j["hyper"]["deseasonalize"] = hyper_.deseasonalize;
    }
  }
  return j.dump();
}

double ForecastModel::esn_spectral_radius() const {
  if (kind_ != ModelKind::kESN) {
    throw std::logic_error("spectral radius is defined for the ESN only");
  }
  return impl_->spectral_radius();
}

Eigen::Index ForecastModel::nvar_feature_count() const {
  if (kind_ != ModelKind::kNVAR) {
    throw std::logic_error("feature count is defined for the NVAR only");
  }
  return impl_->feature_count();
}

ForecastModel make_model(ModelKind kind, const Hyper& hyper, int dim,
                         std::uint64_t seed) {
  if (dim < 1) throw std::invalid_argument("model dimension must be >= 1");
  if (!hyper_in_grid(kind, hyper)) {
    throw std::invalid_argument(
        std::string("hyperparameter outside the grid for ") +
        model_name(kind));
  }

  ForecastModel m;
  m.kind_ = kind;
  m.hyper_ = hyper;
  m.dim_ = dim;
  m.seed_ = seed;
  switch (kind) {
    case ModelKind::kNaiveMean:
      m.impl_ = detail::make_naive_mean(dim, hyper);
      break;
    case ModelKind::kNaiveDrift:
      m.impl_ = detail::make_naive_drift(dim, hyper);
      break;
    case ModelKind::kNaiveSeasonal:
      m.impl_ = detail::make_naive_seasonal(dim, hyper);
      break;
    case ModelKind::kKalmanUnforced:
      m.impl_ = detail::make_kalman(dim, hyper);
      break;
    case ModelKind::kLinearRidge:
      m.impl_ = detail::make_linear_ridge(dim, hyper);
      break;
    case ModelKind::kFourierRegression:
      m.impl_ = detail::make_fourier(dim, hyper);
      break;
    case ModelKind::kExpSmoothing:
      m.impl_ = detail::make_exp_smoothing(dim, hyper);
      break;
    case ModelKind::kTheta:
      m.impl_ = detail::make_theta(dim, hyper, false);
      break;
    case ModelKind::kFourTheta:
      m.impl_ = detail::make_theta(dim, hyper, true);
      break;
    case ModelKind::kDLinear:
      m.impl_ = detail::make_dlinear(dim, hyper);
      break;
    case ModelKind::kNLinear:
      m.impl_ = detail::make_nlinear(dim, hyper);
      break;
    case ModelKind::kESN:
      m.impl_ = detail::make_esn(dim, hyper, seed, &m.stability_warning_);
      break;
    case ModelKind::kNVAR:
      m.impl_ = detail::make_nvar(dim, hyper, &m.stability_warning_);
      break;
  }
  return m;
}

}  // namespace chaosbench::models
