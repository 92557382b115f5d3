#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "chaosbench/alignment.hpp"
#include "chaosbench/dynamics.hpp"
#include "chaosbench/invariants.hpp"
#include "chaosbench/util.hpp"

using namespace chaosbench;
using dynamics::Mat;
using dynamics::SystemSpec;
using dynamics::Trajectory;
using dynamics::Vec;

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// Constant-Jacobian flow with exponents exactly (-1, -2, -3).
SystemSpec diagonal_decay() {
  SystemSpec s;
  s.name = "DiagonalDecay";
  s.dim = 3;
  s.rhs = [](const Vec& x) {
    Vec d(3);
    d << -x[0], -2.0 * x[1], -3.0 * x[2];
    return d;
  };
  s.jacobian = [](const Vec&) {
    Mat j = Mat::Zero(3, 3);
    j(0, 0) = -1.0;
    j(1, 1) = -2.0;
    j(2, 2) = -3.0;
    return j;
  };
  Vec x0(3);
  x0 << 1.0, 1.0, 1.0;
  s.default_state = x0;
  return s;
}

// Planar normal form with an attracting unit limit cycle: the leading
// exponent is exactly zero, the radial one is -2.
SystemSpec hopf_cycle() {
  SystemSpec s;
  s.name = "HopfCycle";
  s.dim = 2;
  s.rhs = [](const Vec& x) {
    const double r2 = x[0] * x[0] + x[1] * x[1];
    Vec d(2);
    d << (1.0 - r2) * x[0] - kTwoPi * x[1],
        kTwoPi * x[0] + (1.0 - r2) * x[1];
    return d;
  };
  s.jacobian = [](const Vec& x) {
    Mat j(2, 2);
    j(0, 0) = 1.0 - 3.0 * x[0] * x[0] - x[1] * x[1];
    j(0, 1) = -2.0 * x[0] * x[1] - kTwoPi;
    j(1, 0) = kTwoPi - 2.0 * x[0] * x[1];
    j(1, 1) = 1.0 - x[0] * x[0] - 3.0 * x[1] * x[1];
    return j;
  };
  Vec x0(2);
  x0 << 1.0, 0.0;
  s.default_state = x0;
  return s;
}

// One-dimensional linear flow x' = rate * x.
SystemSpec scalar_linear(double rate) {
  SystemSpec s;
  s.name = rate >= 0.0 ? "ScalarGrowth" : "ScalarDecay";
  s.dim = 1;
  s.rhs = [rate](const Vec& x) {
    Vec d(1);
    d << rate * x[0];
    return d;
  };
  s.jacobian = [rate](const Vec&) {
    Mat j(1, 1);
    j(0, 0) = rate;
    return j;
  };
  Vec x0(1);
  x0 << 5.0;
  s.default_state = x0;
  return s;
}

// x' = x - x^3: transient expansion near the origin, then decay onto the
// stable fixed point at x = 1.
SystemSpec cubic_well() {
  SystemSpec s;
  s.name = "CubicWell";
  s.dim = 1;
  s.rhs = [](const Vec& x) {
    Vec d(1);
    d << x[0] - x[0] * x[0] * x[0];
    return d;
  };
  s.jacobian = [](const Vec& x) {
    Mat j(1, 1);
    j(0, 0) = 1.0 - 3.0 * x[0] * x[0];
    return j;
  };
  Vec x0(1);
  x0 << 0.5;
  s.default_state = x0;
  return s;
}

Trajectory circle_points(int n) {
  Trajectory traj;
  traj.system_name = "circle";
  traj.dt = 1.0;
  traj.values.resize(n, 2);
  for (int i = 0; i < n; ++i) {
    const double a = kTwoPi * static_cast<double>(i) / static_cast<double>(n);
    traj.values(i, 0) = std::cos(a);
    traj.values(i, 1) = std::sin(a);
  }
  return traj;
}

Trajectory uniform_square(int n, std::uint64_t seed) {
  Trajectory traj;
  traj.system_name = "square";
  traj.dt = 1.0;
  traj.values.resize(n, 2);
  auto rng = util::make_rng(seed);
  for (int i = 0; i < n; ++i) {
    traj.values(i, 0) = util::uniform01(rng);
    traj.values(i, 1) = util::uniform01(rng);
  }
  return traj;
}

Trajectory constant_points(int n, int dim, double value) {
  Trajectory traj;
  traj.system_name = "constant";
  traj.dt = 1.0;
  traj.values = Mat::Constant(n, dim, value);
  return traj;
}

Trajectory scalar_series(const std::vector<double>& series) {
  Trajectory traj;
  traj.system_name = "series";
  traj.dt = 1.0;
  traj.values.resize(static_cast<Eigen::Index>(series.size()), 1);
  for (std::size_t i = 0; i < series.size(); ++i) {
    traj.values(static_cast<Eigen::Index>(i), 0) = series[i];
  }
  return traj;
}

// Exhaustive pair-count slope: exact distance percentiles, 16 log-spaced
// radii between p0.5 and p5, least squares on log C against log r.
double brute_force_slope(const Mat& pts) {
  const Eigen::Index n = pts.rows();
  std::vector<double> dist;
  dist.reserve(static_cast<std::size_t>(n) * static_cast<std::size_t>(n - 1) /
               2);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double d = (pts.row(i) - pts.row(j)).norm();
      if (d > 0.0) dist.push_back(d);
    }
  }
  std::sort(dist.begin(), dist.end());
  const double r_lo = dist[static_cast<std::size_t>(
      0.005 * static_cast<double>(dist.size() - 1))];
  const double r_hi = dist[static_cast<std::size_t>(
      0.05 * static_cast<double>(dist.size() - 1))];

  std::vector<double> log_r, log_c;
  for (int k = 0; k < 16; ++k) {
    const double r = std::exp(std::log(r_lo) +
                              (std::log(r_hi) - std::log(r_lo)) * k / 15.0);
    const auto count = static_cast<double>(
        std::upper_bound(dist.begin(), dist.end(), r) - dist.begin());
    if (count <= 0.0) continue;
    log_r.push_back(std::log(r));
    log_c.push_back(std::log(count / static_cast<double>(dist.size())));
  }
  const auto m = static_cast<double>(log_r.size());
  const double mx = std::accumulate(log_r.begin(), log_r.end(), 0.0) / m;
  const double my = std::accumulate(log_c.begin(), log_c.end(), 0.0) / m;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t k = 0; k < log_r.size(); ++k) {
    sxx += (log_r[k] - mx) * (log_r[k] - mx);
    sxy += (log_r[k] - mx) * (log_c[k] - my);
  }
  return sxy / sxx;
}

Mat rotation_about_diagonal(double angle) {
  Vec u(3);
  u << 1.0, 1.0, 1.0;
  u /= std::sqrt(3.0);
  Mat k = Mat::Zero(3, 3);
  k(0, 1) = -u[2];
  k(0, 2) = u[1];
  k(1, 0) = u[2];
  k(1, 2) = -u[0];
  k(2, 0) = -u[1];
  k(2, 1) = u[0];
  return std::cos(angle) * Mat::Identity(3, 3) + std::sin(angle) * k +
         (1.0 - std::cos(angle)) * (u * u.transpose());
}

double spectrum_sum(const std::vector<double>& spectrum) {
  return std::accumulate(spectrum.begin(), spectrum.end(), 0.0);
}

// Per-scale entropy recovered from the running scale average.
double scale_entropy(const Trajectory& traj, int scale) {
  const double mean_k = invariants::multiscale_entropy(traj, scale);
  if (scale == 1) return mean_k;
  const double mean_prev = invariants::multiscale_entropy(traj, scale - 1);
  return scale * mean_k - (scale - 1) * mean_prev;
}

}  // namespace

TEST_SUITE("invariants") {

TEST_CASE("tangent spectrum of a constant-Jacobian flow is exact") {
  const auto spec = diagonal_decay();
  const auto spectrum = invariants::lyapunov_spectrum_qr(
      spec, spec.default_state, 0.01, 2000);
  REQUIRE(spectrum.size() == 3);
  CHECK(std::abs(spectrum[0] + 1.0) < 1e-3);
  CHECK(std::abs(spectrum[1] + 2.0) < 1e-3);
  CHECK(std::abs(spectrum[2] + 3.0) < 1e-3);
}

TEST_CASE("limit cycle has a vanishing leading exponent") {
  const auto spec = hopf_cycle();
  const auto spectrum = invariants::lyapunov_spectrum_qr(
      spec, spec.default_state, 0.01, 80000);
  REQUIRE(spectrum.size() == 2);
  CHECK(std::abs(spectrum[0]) < 0.02);
  CHECK(spectrum[1] < -1.0);
}

TEST_CASE("Lorenz tangent spectrum: sum, magnitude, divergence cross-check") {
  const auto& spec = dynamics::find_system("Lorenz");
  const Vec x0 = dynamics::sample_attractor(spec, 3);
  const double dt = 0.008;
  const auto spectrum =
      invariants::lyapunov_spectrum_qr(spec, x0, dt, 250000);
  REQUIRE(spectrum.size() == 3);

  // Volume contraction rate is the constant -(sigma + 1 + 8/3).
  const double sum = spectrum_sum(spectrum);
  CHECK(std::abs(sum - (-13.6667)) < 0.01 * 13.6667);
  CHECK(std::abs(spectrum[0] - 0.906) < 0.03);

  invariants::PerturbationConfig config;
  const auto naive =
      invariants::lyapunov_max_naive(spec, x0, config, dt, 8, 1500.0, 7);
  REQUIRE(naive.has_value());
  CHECK(invariants::agree_two_sig_figs(spectrum[0], *naive));
}

TEST_CASE("divergence estimator recovers a pure exponential rate") {
  const auto spec = scalar_linear(1.0);
  invariants::PerturbationConfig config;
  config.xi_norm = 1e-3;
  config.stop_norm = 1e-2;
  const auto rate = invariants::lyapunov_max_naive(
      spec, spec.default_state, config, 0.005, 3, 6.0, 0);
  REQUIRE(rate.has_value());
  CHECK(*rate == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("divergence estimator yields no value on contracting flows") {
  invariants::PerturbationConfig config;
  config.xi_norm = 1e-3;
  config.stop_norm = 1e-2;

  const auto decay = scalar_linear(-1.0);
  CHECK_FALSE(invariants::lyapunov_max_naive(decay, decay.default_state,
                                             config, 0.005, 3, 50.0, 0)
                  .has_value());

  // Transient expansion near the origin dies on the stable fixed point.
  const auto well = cubic_well();
  CHECK_FALSE(invariants::lyapunov_max_naive(well, well.default_state, config,
                                             0.005, 3, 50.0, 0)
                  .has_value());
}

TEST_CASE("divergence estimator rejects bad perturbation settings") {
  const auto spec = scalar_linear(1.0);
  invariants::PerturbationConfig bad;
  bad.xi_norm = -1.0;
  bad.stop_norm = 1e-2;
  CHECK_THROWS_AS(invariants::lyapunov_max_naive(spec, spec.default_state,
                                                 bad, 0.005, 3, 6.0, 0),
                  std::invalid_argument);

  // Valid ratios can still place the initial separation past the stop norm
  // for a large initial state.
  invariants::PerturbationConfig tight;
  tight.xi_norm = 9e-3;
  tight.stop_norm = 1e-2;
  CHECK_THROWS_AS(invariants::lyapunov_max_naive(spec, spec.default_state,
                                                 tight, 0.005, 3, 6.0, 0),
                  std::invalid_argument);
}

TEST_CASE("two-significant-figure agreement rule") {
  CHECK(invariants::agree_two_sig_figs(0.90, 0.94));
  CHECK_FALSE(invariants::agree_two_sig_figs(0.90, 1.00));
  CHECK_FALSE(invariants::agree_two_sig_figs(1.0, -1.0));
  CHECK(invariants::agree_two_sig_figs(0.0, 0.0));
  CHECK_FALSE(invariants::agree_two_sig_figs(
      0.9, std::numeric_limits<double>::quiet_NaN()));
}

TEST_CASE("ensemble average sits near the tangent value on Lorenz") {
  const auto& lorenz = dynamics::find_system("Lorenz");
  const double dt = 0.008;
  const double v_long =
      invariants::ensemble_lyapunov(lorenz, invariants::EnsembleMode::kLong,
                                    dt, 1);
  CHECK(std::abs(v_long - 0.9) < 0.05 * 0.9);

  const auto rep = invariants::lyapunov_consistency(lorenz, dt, 1);
  CHECK(rep.consistent);
  // Same seed, same draw: the report's long leg reproduces bit for bit.
  CHECK(rep.long_value == v_long);

  const auto& rossler = dynamics::find_system("Rossler");
  const double v_rossler = invariants::ensemble_lyapunov(
      rossler, invariants::EnsembleMode::kLong, 0.058, 1);
  CHECK(v_rossler > 0.0);
  CHECK(v_rossler < v_long);
}

TEST_CASE("correlation dimension of a circle is one") {
  const auto traj = circle_points(3000);
  const auto result = invariants::correlation_dimension(traj, 0);
  CHECK(std::abs(result.value - 1.0) < 0.1);
}

TEST_CASE("correlation dimension of an iid square matches exhaustive counts") {
  const auto traj = uniform_square(2000, 42);
  const auto result = invariants::correlation_dimension(traj, 0);
  CHECK(std::abs(result.value - 2.0) < 0.15);
  const double oracle = brute_force_slope(traj.values);
  CHECK(std::abs(result.value - oracle) < 0.05);
}

TEST_CASE("correlation dimension of Lorenz is stable under rescaling and "
          "rotation") {
  const auto& spec = dynamics::find_system("Lorenz");
  const auto al = alignment::align_system(spec, 0);
  const Vec x0 = dynamics::sample_attractor(spec, 2);
  const auto traj = dynamics::integrate(spec, x0, al.delivered_dt(), 4000);

  const auto base = invariants::correlation_dimension(traj, 100);
  CHECK(std::abs(base.value - 2.05) < 0.15);

  const auto halved = invariants::correlation_dimension(traj, 100, 0, 0.5);
  CHECK(std::abs(halved.value - base.value) < 0.05);

  Trajectory rotated = traj;
  rotated.values = traj.values * rotation_about_diagonal(0.6).transpose();
  const auto turned = invariants::correlation_dimension(rotated, 100);
  CHECK(std::abs(turned.value - base.value) < 0.05);
}

TEST_CASE("correlation dimension rejects unusable inputs") {
  CHECK_THROWS_AS(invariants::correlation_dimension(uniform_square(1500, 1), 0),
                  std::invalid_argument);
  CHECK_THROWS_AS(invariants::correlation_dimension(constant_points(2100, 3, 4.0), 0),
                  std::runtime_error);
  CHECK_THROWS_AS(invariants::correlation_dimension(uniform_square(2000, 1), -1),
                  std::invalid_argument);
  CHECK_THROWS_AS(
      invariants::correlation_dimension(uniform_square(2000, 1), 0, 0, 0.0),
      std::invalid_argument);

  // Two separated clusters leave a single distinct distance, so no radius
  // range exists.
  Trajectory clusters = constant_points(2100, 2, 0.0);
  for (Eigen::Index i = 1; i < clusters.values.rows(); i += 2) {
    clusters.values(i, 0) = 100.0;
  }
  CHECK_THROWS_AS(invariants::correlation_dimension(clusters, 0),
                  std::runtime_error);
}

TEST_CASE("spanning dimension from exponent partial sums") {
  CHECK(invariants::kaplan_yorke({0.9, 0.0, -14.57}) ==
        doctest::Approx(2.0618).epsilon(1e-3));
  CHECK(invariants::kaplan_yorke({-0.5, -1.0}) == 0.0);
  CHECK(invariants::kaplan_yorke({1.0, 1.0, -1.0}) == 3.0);
  CHECK_THROWS_AS(invariants::kaplan_yorke({0.1, 0.5, -1.0}),
                  std::invalid_argument);
  CHECK_THROWS_AS(invariants::kaplan_yorke({}), std::invalid_argument);
}

TEST_CASE("spanning dimension is invariant under spectrum rescaling") {
  auto rng = util::make_rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    const int dim = 3 + static_cast<int>(util::uniform01(rng) * 4.0);
    std::vector<double> spectrum(static_cast<std::size_t>(dim));
    for (auto& v : spectrum) v = 4.0 * util::uniform01(rng) - 2.0;
    std::sort(spectrum.rbegin(), spectrum.rend());
    const double base = invariants::kaplan_yorke(spectrum);
    for (const double c : {0.37, 12.0}) {
      auto scaled = spectrum;
      for (auto& v : scaled) v *= c;
      CHECK(invariants::kaplan_yorke(scaled) ==
            doctest::Approx(base).epsilon(1e-12));
    }
  }
}

TEST_CASE("complexity of a constant series is zero") {
  CHECK(invariants::multiscale_entropy(constant_points(1200, 2, 3.5)) == 0.0);
  CHECK_THROWS_AS(invariants::multiscale_entropy(constant_points(900, 1, 0.0)),
                  std::invalid_argument);
}

TEST_CASE("noise carries more complexity than a tone at every scale") {
  auto rng = util::make_rng(5);
  std::vector<double> noise(2000), tone(2000);
  for (std::size_t i = 0; i < noise.size(); ++i) {
    noise[i] = util::normal(rng);
    tone[i] = std::sin(kTwoPi * 0.05 * static_cast<double>(i));
  }
  const auto noisy = scalar_series(noise);
  const auto pure = scalar_series(tone);
  for (int scale = 1; scale <= 5; ++scale) {
    CAPTURE(scale);
    CHECK(scale_entropy(noisy, scale) > scale_entropy(pure, scale));
  }
}

TEST_CASE("complexity is stable when the series doubles") {
  const auto& spec = dynamics::find_system("Lorenz");
  const auto al = alignment::align_system(spec, 0);
  const Vec x0 = dynamics::sample_attractor(spec, 6);
  const auto short_traj =
      dynamics::integrate(spec, x0, al.delivered_dt(), 2000);
  const auto long_traj =
      dynamics::integrate(spec, x0, al.delivered_dt(), 4000);
  const double a = invariants::multiscale_entropy(short_traj);
  const double b = invariants::multiscale_entropy(long_traj);
  CHECK(std::abs(a - b) < 0.10 * std::max(std::abs(a), std::abs(b)));
}

TEST_CASE("registry spectra: contraction identity and exponent ordering") {
  for (const auto& spec : dynamics::registry()) {
    if (spec.is_delay()) continue;
    CAPTURE(spec.name);
    const auto al = alignment::align_system(spec, 0);
    const double dt = al.dt_integration;
    const auto n = static_cast<std::size_t>(std::ceil(5000.0 / dt));
    const Vec x0 = dynamics::sample_attractor(spec, 1);
    const auto spectrum = invariants::lyapunov_spectrum_qr(spec, x0, dt, n);
    REQUIRE(spectrum.size() == static_cast<std::size_t>(spec.dim));

    // Exponent sum equals the flow's average divergence over the same window.
    const auto traj = dynamics::integrate(spec, x0, dt, n);
    double trace_sum = 0.0;
    std::size_t count = 0;
    for (Eigen::Index row = 200; row < traj.values.rows(); ++row) {
      trace_sum += spec.jacobian(traj.values.row(row).transpose()).trace();
      ++count;
    }
    const double trace_avg = trace_sum / static_cast<double>(count);
    CHECK(std::abs(spectrum_sum(spectrum) - trace_avg) <=
          0.01 * std::abs(trace_avg));

    CHECK(spectrum[0] > 0.0);
    CHECK(std::is_sorted(spectrum.rbegin(), spectrum.rend()));
    if (spec.dim == 3) {
      CHECK(std::abs(spectrum[1]) < 0.05 * spectrum[0]);
      CHECK(spectrum[2] < 0.0);
    }
  }
}

TEST_CASE("delay system has a positive leading exponent") {
  const auto& spec = dynamics::find_system("MackeyGlass");
  const auto al = alignment::align_system(spec, 0);
  const double dt = al.dt_integration;
  const auto n = static_cast<std::size_t>(std::ceil(30000.0 / dt));
  const Vec x0 = dynamics::sample_attractor(spec, 1);
  const auto spectrum = invariants::lyapunov_spectrum_qr(spec, x0, dt, n);
  REQUIRE(spectrum.size() == 1);
  CHECK(spectrum[0] > 0.0);
}

TEST_CASE("bundled invariants on Lorenz round-trip through JSON") {
  const auto& spec = dynamics::find_system("Lorenz");
  const auto al = alignment::align_system(spec, 0);
  const auto set = invariants::compute_invariants(spec, al, 0);

  REQUIRE(set.lyapunov_spectrum.size() == 3);
  CHECK(set.lyapunov_max == set.lyapunov_spectrum[0]);
  CHECK(std::is_sorted(set.lyapunov_spectrum.rbegin(),
                       set.lyapunov_spectrum.rend()));
  CHECK(std::abs(set.ky_dim - 2.06) < 0.10);
  CHECK(std::abs(set.corr_dim - 2.05) < 0.15);
  CHECK(set.mse > 0.0);

  const auto back = invariants::invariants_from_json(invariants::to_json(set));
  REQUIRE(back.lyapunov_spectrum.size() == set.lyapunov_spectrum.size());
  for (std::size_t i = 0; i < back.lyapunov_spectrum.size(); ++i) {
    CHECK(back.lyapunov_spectrum[i] == set.lyapunov_spectrum[i]);
  }
  CHECK(back.lyapunov_max == set.lyapunov_max);
  CHECK(back.corr_dim == set.corr_dim);
  CHECK(back.ky_dim == set.ky_dim);
  CHECK(back.mse == set.mse);
}

}
