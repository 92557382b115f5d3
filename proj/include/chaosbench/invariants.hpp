#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "chaosbench/alignment.hpp"
#include "chaosbench/dynamics.hpp"

namespace chaosbench::invariants {

using dynamics::SystemSpec;
using dynamics::Trajectory;
using dynamics::Vec;

/// Dynamical invariants for one system. Exponents are per unit natural time.
struct InvariantSet {
  std::vector<double> lyapunov_spectrum;  // sorted descending
  double lyapunov_max = 0.0;
  double corr_dim = 0.0;
  double ky_dim = 0.0;
  double mse = 0.0;
};

/// Two-trajectory divergence experiment parameters.
struct PerturbationConfig {
  double xi_norm = 1e-14;   // relative initial perturbation, ||xi||_2
  double stop_norm = 1e-8;  // absolute separation that stops a segment

  bool valid() const { return xi_norm > 0.0 && xi_norm < stop_norm; }
};

/// Full Lyapunov spectrum via the QR method: a variational RK4 tangent frame,
/// re-orthonormalized by QR every step, accumulating log |R_jj|. The first
/// `warmup_steps` steps align the frame and are excluded from the average.
/// Delay systems evolve a tangent history buffer and report only the leading
/// exponent.
std::vector<double> lyapunov_spectrum_qr(const SystemSpec& spec, const Vec& x0,
                                         double dt, std::size_t n_steps,
                                         std::size_t warmup_steps = 200);

/// Largest exponent from naive trajectory divergence: the perturbed twin
/// starts at x0 .* (1 + xi), and a segment ends when the separation exceeds
/// config.stop_norm; the estimate is log(sep_final/sep_initial)/elapsed,
/// averaged over `ensemble` re-seeded runs started along the base trajectory.
/// Returns nullopt when separation never reaches the threshold within
/// `max_time` (non-chaotic signal).
std::optional<double> lyapunov_max_naive(const SystemSpec& spec, const Vec& x0,
                                         const PerturbationConfig& config,
                                         double dt, int ensemble = 8,
                                         double max_time = 2000.0,
                                         std::uint64_t seed = 0);

/// Ensemble-averaged leading exponent. Desk-scale modes measure an equal
/// total budget split differently: kLong averages 20 windows of 50000 steps,
/// kShort averages 500 windows of 2000 steps, tiled along one continued
/// trajectory with seeded decorrelation gaps.
/// dt = 0 derives the step from the system's alignment (seeded at 0).
enum class EnsembleMode { kLong, kShort };
double ensemble_lyapunov(const SystemSpec& spec, EnsembleMode mode,
                         double dt = 0.0, std::uint64_t seed = 0);

/// Long/short ensemble agreement check used for registry admission.
struct ConsistencyReport {
  double long_value = 0.0;
  double short_value = 0.0;
  bool consistent = false;  // agreement to two significant figures
};
ConsistencyReport lyapunov_consistency(const SystemSpec& spec, double dt = 0.0,
                                       std::uint64_t seed = 0);

/// Two-significant-figure agreement, interpreted as relative gap <= 5%.
bool agree_two_sig_figs(double a, double b);

/// Grassberger-Procaccia correlation dimension with a Theiler window. Radii
/// span the 5th to 50th percentile of sampled pair distances, scaled by
/// radius_scale (a shifted grid is a convergence cross-check).
struct CorrDim {
  double value = 0.0;
  bool scaling_warning = false;  // local slope varies > 20% across the region
};
CorrDim correlation_dimension(const Trajectory& traj, int theiler = 100,
                              std::uint64_t seed = 0,
                              double radius_scale = 1.0);

/// Kaplan-Yorke dimension from a descending spectrum: j + partial/|next|,
/// 0 when the leading exponent is negative, D when all partial sums stay
/// nonnegative. Throws on unsorted input.
double kaplan_yorke(const std::vector<double>& spectrum);

/// Mean multivariate multiscale sample entropy over scales 1..max_scale
/// (embedding m = 2, tolerance 0.15 x total standard deviation, coarse
/// graining by non-overlapping means). Returns +inf when no template pair
/// matches at the extended stage; 0 for a constant series.
double multiscale_entropy(const Trajectory& traj, int max_scale = 5);

/// All invariants for one system at its aligned timestep.
InvariantSet compute_invariants(const SystemSpec& spec,
                                const alignment::AlignmentResult& align,
                                std::uint64_t seed = 0);

std::string to_json(const InvariantSet& inv);
InvariantSet invariants_from_json(const std::string& json_text);

}  // namespace chaosbench::invariants
