#pragma once

#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "chaosbench/dynamics.hpp"

namespace chaosbench::alignment {

/// Timescale calibration for one system: dominant and longest significant
/// periods, the raw integration step, and how much finer it runs than the
/// delivered sample spacing of t_peak/100.
struct AlignmentResult {
  double t_peak = 0.0;           // dominant significant period
  double t_max = 0.0;            // longest significant period
  double dt_integration = 0.0;   // raw integrator step, divides t_max/10
  int resampling_factor = 0;     // (t_max/10) / dt_integration
  std::vector<std::pair<double, double>> significant_frequencies;  // (f, power)

  /// Delivered sample spacing: 100 points per dominant period.
  double delivered_dt() const { return t_peak / 100.0; }
};

/// Raised when a series has no oscillatory content to analyze.
class EmptySpectrumError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when surrogate testing finds no significant frequencies.
class AlignmentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One-sided periodogram of the mean-removed, Hann-windowed series.
/// Frequencies in cycles per time unit; DC excluded. Throws
/// EmptySpectrumError on a constant series.
std::vector<std::pair<double, double>> power_spectrum(
    const std::vector<double>& series, double dt);

/// Frequencies whose periodogram power exceeds the per-frequency `quantile`
/// over n_surrogates phase-randomized surrogates (Fourier amplitudes kept,
/// phases i.i.d. uniform).
std::vector<double> surrogate_significant_frequencies(
    const std::vector<double>& series, double dt, int n_surrogates = 100,
    double quantile = 0.95, std::uint64_t seed = 0);

/// One phase-randomized surrogate of `series` (exposed for testing).
std::vector<double> phase_surrogate(const std::vector<double>& series,
                                    std::uint64_t seed);

/// Pilot-integrates the system, runs the surrogate significance test on the
/// first coordinate, and derives t_peak, t_max and the integration step.
/// Deterministic per seed.
AlignmentResult align_system(const dynamics::SystemSpec& spec,
                             std::uint64_t seed = 0);

/// Linear-interpolation resampling to exactly 100 points per t_peak.
/// Refuses to upsample (source spacing coarser than the target).
dynamics::Trajectory resample(const dynamics::Trajectory& traj,
                              const AlignmentResult& alignment);

std::string to_json(const AlignmentResult& result);
AlignmentResult alignment_from_json(const std::string& json_text);

/// align_system with a JSON file cache keyed by system name and a hash of its
/// parameters; recomputes (and rewrites the cache) on any mismatch.
AlignmentResult align_cached(const dynamics::SystemSpec& spec,
                             std::uint64_t seed, const std::string& cache_path);

}  // namespace chaosbench::alignment
