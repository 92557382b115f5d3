#include "chaosbench/alignment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <mutex>
#include <sstream>

#include <fftw3.h>

#include "json.hpp"

#include "chaosbench/util.hpp"

namespace chaosbench::alignment {
namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;
constexpr int kPilotPoints = 8192;  // 2^13 resampled pilot points

// FFTW plan creation/destruction is not thread-safe; execution is.
std::mutex& fftw_mutex() {
  static std::mutex m;
  return m;
}

std::vector<std::complex<double>> rfft(const std::vector<double>& x) {
  const auto n = x.size();
  std::vector<std::complex<double>> out(n / 2 + 1);
  std::vector<double> in(x.begin(), x.end());
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(fftw_mutex());
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in.data(),
                                reinterpret_cast<fftw_complex*>(out.data()),
                                FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  {
    std::lock_guard<std::mutex> lock(fftw_mutex());
    fftw_destroy_plan(plan);
  }
  return out;
}

std::vector<double> irfft(std::vector<std::complex<double>> spectrum,
                          std::size_t n) {
  std::vector<double> out(n);
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(fftw_mutex());
    plan = fftw_plan_dft_c2r_1d(static_cast<int>(n),
                                reinterpret_cast<fftw_complex*>(spectrum.data()),
                                out.data(), FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  {
    std::lock_guard<std::mutex> lock(fftw_mutex());
    fftw_destroy_plan(plan);
  }
  const double scale = 1.0 / static_cast<double>(n);
  for (auto& v : out) v *= scale;
  return out;
}

std::vector<double> powers_only(
    const std::vector<std::pair<double, double>>& spec) {
  std::vector<double> p(spec.size());
  for (std::size_t i = 0; i < spec.size(); ++i) p[i] = spec[i].second;
  return p;
}

// Linear interpolation of uniformly spaced samples at fractional index p.
double lerp_at(const Eigen::VectorXd& col, double p) {
  const auto i = static_cast<Eigen::Index>(p);
  if (i + 1 >= col.size()) return col[col.size() - 1];
  const double frac = p - static_cast<double>(i);
  return col[i] * (1.0 - frac) + col[i + 1] * frac;
}

std::uint64_t param_hash(const dynamics::SystemSpec& spec) {
  std::string blob = spec.name;
  for (const auto& [k, v] : spec.params) {
    blob += "|" + k + "=" + util::fmt_double(v);
  }
  if (spec.delay) blob += "|delay=" + util::fmt_double(*spec.delay);
  return std::hash<std::string>{}(blob);
}

}  // namespace

std::vector<std::pair<double, double>> power_spectrum(
    const std::vector<double>& series, double dt) {
  const std::size_t n = series.size();
  if (n < 16) {
    throw std::invalid_argument("power_spectrum: need at least 16 samples");
  }
  if (dt <= 0.0) throw std::invalid_argument("power_spectrum: dt > 0 required");

  double mean = 0.0;
  for (const double v : series) mean += v;
  mean /= static_cast<double>(n);

  std::vector<double> windowed(n);
  double any = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w =
        0.5 * (1.0 - std::cos(kTwoPi * static_cast<double>(i) /
                              static_cast<double>(n - 1)));
    windowed[i] = (series[i] - mean) * w;
    any = std::max(any, std::abs(series[i] - mean));
  }
  if (any == 0.0) {
    throw EmptySpectrumError("power_spectrum: constant series has no spectrum");
  }

  const auto spec = rfft(windowed);
  std::vector<std::pair<double, double>> out;
  out.reserve(spec.size() - 1);
  const double df = 1.0 / (static_cast<double>(n) * dt);
  const double norm = 2.0 / (static_cast<double>(n) * static_cast<double>(n));
  for (std::size_t k = 1; k < spec.size(); ++k) {
    const bool nyquist = (n % 2 == 0) && (k == spec.size() - 1);
    const double p = std::norm(spec[k]) * (nyquist ? norm / 2.0 : norm);
    out.emplace_back(static_cast<double>(k) * df, p);
  }
  return out;
}

std::vector<double> phase_surrogate(const std::vector<double>& series,
                                    std::uint64_t seed) {
  const std::size_t n = series.size();
  auto spec = rfft(series);
  auto rng = util::make_rng(seed);
  // Keep DC (mean) and, for even n, the Nyquist bin real; randomize the rest.
  const std::size_t last = spec.size() - 1;
  for (std::size_t k = 1; k < spec.size(); ++k) {
    if (n % 2 == 0 && k == last) continue;
    const double phi = util::uniform(rng, 0.0, kTwoPi);
    spec[k] = std::abs(spec[k]) * std::complex<double>(std::cos(phi),
                                                       std::sin(phi));
  }
  return irfft(std::move(spec), n);
}

std::vector<double> surrogate_significant_frequencies(
    const std::vector<double>& series, double dt, int n_surrogates,
    double quantile, std::uint64_t seed) {
  if (n_surrogates < 20) {
    throw std::invalid_argument("surrogate test: n_surrogates >= 20 required");
  }
  if (quantile <= 0.5 || quantile >= 1.0) {
    throw std::invalid_argument("surrogate test: quantile in (0.5, 1)");
  }
  const auto original = power_spectrum(series, dt);
  const std::size_t bins = original.size();

  // Phase surrogates preserve per-frequency amplitudes, so a per-bin null
  // would equal the observation at any tone bin and nothing could ever be
  // significant. The null is therefore the pooled distribution of
  // per-frequency powers across all surrogates: a peak is significant when it
  // exceeds the `quantile` of the power levels the spectrum itself offers.
  std::vector<double> pooled;
  pooled.reserve(bins * static_cast<std::size_t>(n_surrogates));
  auto rng = util::make_rng(seed);
  for (int s = 0; s < n_surrogates; ++s) {
    const auto sur = phase_surrogate(series, rng());
    const auto sp = power_spectrum(sur, dt);
    for (std::size_t b = 0; b < bins; ++b) pooled.push_back(sp[b].second);
  }
  const auto rank = static_cast<std::size_t>(
      std::ceil(quantile * static_cast<double>(pooled.size())) - 1);
  std::nth_element(pooled.begin(),
                   pooled.begin() + static_cast<std::ptrdiff_t>(rank),
                   pooled.end());
  const double threshold = pooled[rank];

  std::vector<double> significant;
  for (std::size_t b = 0; b < bins; ++b) {
    if (original[b].second > threshold) {
      significant.push_back(original[b].first);
    }
  }
  return significant;
}

AlignmentResult align_system(const dynamics::SystemSpec& spec,
                             std::uint64_t seed) {
  const dynamics::Vec x0 = dynamics::sample_attractor(spec, seed, 20.0);

  // Pilot run: kPilotPoints samples spaced period_hint/100 apart, integrated
  // at the finer of that spacing and the system's pilot step.
  const double pilot_spacing = spec.period_hint / 100.0;
  const double dt_raw = std::min(spec.pilot_dt, pilot_spacing);
  const double span = static_cast<double>(kPilotPoints - 1) * pilot_spacing;
  const auto n_steps = static_cast<std::size_t>(std::ceil(span / dt_raw));
  const dynamics::Trajectory pilot =
      dynamics::integrate(spec, x0, dt_raw, n_steps);

  const int coord =
      (spec.align_coord >= 0 && spec.align_coord < spec.dim)
          ? spec.align_coord
          : 0;
  std::vector<double> first(kPilotPoints);
  const double step_ratio = pilot_spacing / dt_raw;
  for (int i = 0; i < kPilotPoints; ++i) {
    first[static_cast<std::size_t>(i)] =
        lerp_at(pilot.values.col(coord), static_cast<double>(i) * step_ratio);
  }

  const auto significant = surrogate_significant_frequencies(
      first, pilot_spacing, 100, 0.95, seed * 0x9e3779b9ull + 1);
  if (significant.empty()) {
    throw AlignmentError("alignment failed for " + spec.name +
                         ": no significant frequencies");
  }

  const auto original = power_spectrum(first, pilot_spacing);

  // 5-bin Daniell smoothing for the peak pick only: the argmax of a raw
  // periodogram has O(1) variance per bin, which makes t_peak twitch between
  // comparable peaks across seeds.
  std::vector<double> smoothed(original.size());
  const auto nb = static_cast<std::ptrdiff_t>(original.size());
  for (std::ptrdiff_t b = 0; b < nb; ++b) {
    double acc = 0.0;
    int cnt = 0;
    for (std::ptrdiff_t k = b - 2; k <= b + 2; ++k) {
      if (k < 0 || k >= nb) continue;
      acc += original[static_cast<std::size_t>(k)].second;
      ++cnt;
    }
    smoothed[static_cast<std::size_t>(b)] = acc / cnt;
  }

  AlignmentResult result;
  double best_power = -1.0;
  double f_peak = significant.front();
  double f_min = significant.front();
  for (const double f : significant) {
    f_min = std::min(f_min, f);
    for (std::size_t b = 0; b < original.size(); ++b) {
      if (original[b].first == f) {
        result.significant_frequencies.emplace_back(f, original[b].second);
        if (smoothed[b] > best_power) {
          best_power = smoothed[b];
          f_peak = f;
        }
      }
    }
  }
  result.t_peak = 1.0 / f_peak;
  result.t_max = 1.0 / f_min;

  // Raw step: t_max/10 subdivided until it is at least as fine as the
  // delivered spacing t_peak/100 and no coarser than the system's validated
  // step ceiling. The delivered grid keeps its spectral spacing either way;
  // only the integration substep refines.
  const double coarse = result.t_max / 10.0;
  const auto spectral_factor =
      static_cast<int>(std::ceil(coarse / result.delivered_dt() - 1e-9));
  const auto accuracy_factor =
      std::isfinite(spec.dt_max)
          ? static_cast<int>(std::ceil(coarse / spec.dt_max - 1e-9))
          : 1;
  result.resampling_factor = std::max(spectral_factor, accuracy_factor);
  result.dt_integration = coarse / result.resampling_factor;
  return result;
}

dynamics::Trajectory resample(const dynamics::Trajectory& traj,
                              const AlignmentResult& alignment) {
  const double target = alignment.delivered_dt();
  if (traj.dt > target * (1.0 + 1e-9)) {
    throw std::invalid_argument(
        "resample: refusing to upsample (source dt " +
        util::fmt_double(traj.dt) + " coarser than target " +
        util::fmt_double(target) + ")");
  }
  const double span = static_cast<double>(traj.length() - 1) * traj.dt;
  const auto count = static_cast<Eigen::Index>(span / target) + 1;

  dynamics::Trajectory out;
  out.system_name = traj.system_name;
  out.dt = target;
  out.t0 = traj.t0;
  out.granularity = 100;
  out.values.resize(count, traj.dim());
  const double ratio = target / traj.dt;
  for (Eigen::Index i = 0; i < count; ++i) {
    const double p = static_cast<double>(i) * ratio;
    for (Eigen::Index c = 0; c < traj.dim(); ++c) {
      out.values(i, c) = lerp_at(traj.values.col(c), p);
    }
  }
  return out;
}

std::string to_json(const AlignmentResult& result) {
  nlohmann::json j;
  j["t_peak"] = result.t_peak;
  j["t_max"] = result.t_max;
  j["dt_integration"] = result.dt_integration;
  j["resampling_factor"] = result.resampling_factor;
  auto freqs = nlohmann::json::array();
  for (const auto& [f, p] : result.significant_frequencies) {
    freqs.push_back({f, p});
  }
  j["significant_frequencies"] = std::move(freqs);
  return j.dump();
}

AlignmentResult alignment_from_json(const std::string& json_text) {
  const auto j = nlohmann::json::parse(json_text);
  AlignmentResult r;
  r.t_peak = j.at("t_peak").get<double>();
  r.t_max = j.at("t_max").get<double>();
  r.dt_integration = j.at("dt_integration").get<double>();
  r.resampling_factor = j.at("resampling_factor").get<int>();
  for (const auto& fp : j.at("significant_frequencies")) {
    r.significant_frequencies.emplace_back(fp[0].get<double>(),
                                           fp[1].get<double>());
  }
  return r;
}

AlignmentResult align_cached(const dynamics::SystemSpec& spec,
                             std::uint64_t seed,
                             const std::string& cache_path) {
  const std::string key = spec.name + "#" +
                          std::to_string(param_hash(spec)) + "#" +
                          std::to_string(seed);
  nlohmann::json cache = nlohmann::json::object();
  {
    std::ifstream in(cache_path);
    if (in) {
      try {
        in >> cache;
      } catch (const nlohmann::json::exception&) {
        cache = nlohmann::json::object();  // corrupt cache: recompute
      }
    }
  }
  if (cache.contains(key)) {
    return alignment_from_json(cache[key].dump());
  }
  const AlignmentResult result = align_system(spec, seed);
  cache[key] = nlohmann::json::parse(to_json(result));
  std::ofstream out(cache_path);
  out << cache.dump(2) << "\n";
  return result;
}

}  // namespace chaosbench::alignment
