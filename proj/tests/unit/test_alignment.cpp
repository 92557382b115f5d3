#include "doctest.h"

#include <cmath>
#include <complex>
#include <cstdio>
#include <vector>

#include "chaosbench/alignment.hpp"
#include "chaosbench/dynamics.hpp"
#include "chaosbench/util.hpp"

using namespace chaosbench;
using dynamics::SystemSpec;
using dynamics::Trajectory;
using dynamics::Vec;

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

std::vector<double> sine_series(double freq, double dt, int n,
                                double amplitude = 1.0) {
  std::vector<double> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    out[static_cast<std::size_t>(i)] =
        amplitude * std::sin(kTwoPi * freq * static_cast<double>(i) * dt);
  }
  return out;
}

SystemSpec harmonic_oscillator() {
  SystemSpec s;
  s.name = "Oscillator";
  s.dim = 2;
  const double w = kTwoPi;  // period exactly 1
  s.rhs = [=](const Vec& x) {
    Vec d(2);
    d << x[1], -w * w * x[0];
    return d;
  };
  Vec x0(2);
  x0 << 1.0, 0.0;
  s.default_state = x0;
  s.pilot_dt = 0.005;
  s.period_hint = 1.0;
  return s;
}

}  // namespace

TEST_SUITE("alignment") {

TEST_CASE("periodogram peaks at the sine frequency") {
  const auto series = sine_series(0.2, 0.05, 2000);
  const auto spec = alignment::power_spectrum(series, 0.05);
  double best_f = 0.0, best_p = -1.0;
  for (const auto& [f, p] : spec) {
    if (p > best_p) {
      best_p = p;
      best_f = f;
    }
  }
  const double bin = 1.0 / (2000 * 0.05);
  CHECK(std::abs(best_f - 0.2) <= bin + 1e-12);
}

TEST_CASE("constant series has no spectrum") {
  const std::vector<double> flat(256, 3.5);
  CHECK_THROWS_AS(alignment::power_spectrum(flat, 0.1),
                  alignment::EmptySpectrumError);
}

TEST_CASE("two equal sines occupy the top two bins") {
  auto series = sine_series(0.2, 0.05, 2000);
  const auto second = sine_series(0.05, 0.05, 2000);
  for (std::size_t i = 0; i < series.size(); ++i) series[i] += second[i];
  auto spec = alignment::power_spectrum(series, 0.05);
  std::sort(spec.begin(), spec.end(),
            [](const auto& a, const auto& b) { return a.second > b.second; });
  const double f1 = std::min(spec[0].first, spec[1].first);
  const double f2 = std::max(spec[0].first, spec[1].first);
  CHECK(f1 == doctest::Approx(0.05).epsilon(0.01));
  CHECK(f2 == doctest::Approx(0.2).epsilon(0.01));
}

TEST_CASE("phase surrogates keep amplitudes and the mean") {
  auto rng = util::make_rng(5);
  std::vector<double> series(512);
  for (auto& v : series) v = util::normal(rng) + 0.7;
  const auto sur = alignment::phase_surrogate(series, 11);
  REQUIRE(sur.size() == series.size());

  double m0 = 0.0, m1 = 0.0;
  for (std::size_t i = 0; i < series.size(); ++i) {
    m0 += series[i];
    m1 += sur[i];
  }
  CHECK(std::abs(m0 - m1) / static_cast<double>(series.size()) < 1e-10);

  bool differs = false;
  for (std::size_t i = 0; i < series.size(); ++i) {
    if (series[i] != sur[i]) differs = true;
  }
  CHECK(differs);  // genuinely randomized
}

TEST_CASE("surrogate amplitudes match the original rfft exactly") {
  // direct check through the periodogram of the raw (unwindowed) series:
  // compute one-sided amplitudes by correlation with sin/cos at each bin
  auto rng = util::make_rng(6);
  const std::size_t n = 256;
  std::vector<double> series(n);
  for (auto& v : series) v = util::normal(rng);
  const auto sur = alignment::phase_surrogate(series, 21);

  for (std::size_t k = 1; k <= 4; ++k) {
    std::complex<double> a0(0.0, 0.0), a1(0.0, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double ang =
          -kTwoPi * static_cast<double>(k) * static_cast<double>(i) /
          static_cast<double>(n);
      const std::complex<double> w(std::cos(ang), std::sin(ang));
      a0 += series[i] * w;
      a1 += sur[i] * w;
    }
    CHECK(std::abs(a0) == doctest::Approx(std::abs(a1)).epsilon(1e-9));
  }
}

TEST_CASE("surrogate test finds a sine buried in noise") {
  auto rng = util::make_rng(7);
  auto series = sine_series(0.2, 0.05, 1000);
  for (auto& v : series) v += 0.3 * util::normal(rng);
  const auto sig =
      alignment::surrogate_significant_frequencies(series, 0.05, 100, 0.95, 3);
  REQUIRE(!sig.empty());
  bool found = false;
  for (const double f : sig) {
    if (std::abs(f - 0.2) < 0.011) found = true;
  }
  CHECK(found);
}

TEST_CASE("white-noise false positive rate stays near the quantile") {
  auto rng = util::make_rng(8);
  double flagged = 0.0, total = 0.0;
  for (int run = 0; run < 50; ++run) {
    std::vector<double> noise(512);
    for (auto& v : noise) v = util::normal(rng);
    const auto sig = alignment::surrogate_significant_frequencies(
        noise, 1.0, 100, 0.95, 1000 + static_cast<std::uint64_t>(run));
    flagged += static_cast<double>(sig.size());
    total += 256.0;
  }
  CHECK(flagged / total <= 0.08);
}

TEST_CASE("synthetic oscillator aligns to its period") {
  const SystemSpec osc = harmonic_oscillator();
  const auto result = alignment::align_system(osc, 1);
  CHECK(result.t_peak == doctest::Approx(1.0).epsilon(0.02));
  CHECK(result.t_peak <= result.t_max + 1e-12);
  CHECK(result.dt_integration > 0.0);
  CHECK(result.dt_integration <= result.delivered_dt() * (1.0 + 1e-12));
  CHECK(result.resampling_factor * result.dt_integration ==
        doctest::Approx(result.t_max / 10.0).epsilon(1e-12));
}

TEST_CASE("Lorenz alignment is stable across seeds") {
  const auto& lorenz = dynamics::find_system("Lorenz");
  const auto a = alignment::align_system(lorenz, 1);
  const auto b = alignment::align_system(lorenz, 2);
  CHECK(std::abs(a.t_peak - b.t_peak) / a.t_peak < 0.20);
  CHECK(a.t_peak <= a.t_max + 1e-12);
}

TEST_CASE("alignment is deterministic per seed") {
  const SystemSpec osc = harmonic_oscillator();
  const auto a = alignment::align_system(osc, 9);
  const auto b = alignment::align_system(osc, 9);
  CHECK(a.t_peak == b.t_peak);
  CHECK(a.t_max == b.t_max);
  CHECK(a.dt_integration == b.dt_integration);
  CHECK(a.significant_frequencies == b.significant_frequencies);
}

TEST_CASE("resampling: identity, affine exactness, sine accuracy, refusal") {
  alignment::AlignmentResult unit;
  unit.t_peak = 1.0;
  unit.t_max = 1.0;
  unit.dt_integration = 0.01;
  unit.resampling_factor = 1;

  Trajectory ramp;
  ramp.dt = 0.005;
  ramp.values.resize(801, 2);
  for (Eigen::Index i = 0; i < 801; ++i) {
    ramp.values(i, 0) = 0.25 + 3.0 * static_cast<double>(i);
    ramp.values(i, 1) = -1.0 + 0.5 * static_cast<double>(i);
  }
  const Trajectory r2 = alignment::resample(ramp, unit);
  CHECK(r2.granularity == 100);
  CHECK(r2.dt == doctest::Approx(0.01));
  for (Eigen::Index i = 0; i < r2.length(); ++i) {
    CHECK(r2.values(i, 0) ==
          doctest::Approx(0.25 + 6.0 * static_cast<double>(i)).epsilon(1e-12));
  }

  Trajectory ident;
  ident.dt = 0.01;
  ident.values.resize(101, 1);
  for (Eigen::Index i = 0; i < 101; ++i) {
    ident.values(i, 0) = std::sin(0.37 * static_cast<double>(i));
  }
  const Trajectory r3 = alignment::resample(ident, unit);
  REQUIRE(r3.length() == 101);
  CHECK((r3.values - ident.values).cwiseAbs().maxCoeff() < 1e-12);

  Trajectory fine;  // sine at 400 points per period
  fine.dt = 1.0 / 400.0;
  fine.values.resize(2001, 1);
  for (Eigen::Index i = 0; i < 2001; ++i) {
    fine.values(i, 0) = std::sin(kTwoPi * static_cast<double>(i) / 400.0);
  }
  const Trajectory r4 = alignment::resample(fine, unit);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < r4.length(); ++i) {
    const double t = static_cast<double>(i) * r4.dt;
    worst = std::max(worst, std::abs(r4.values(i, 0) - std::sin(kTwoPi * t)));
  }
  CHECK(worst < 1e-3);

  Trajectory coarse;
  coarse.dt = 0.02;
  coarse.values.resize(51, 1);
  coarse.values.setZero();
  CHECK_THROWS_AS(alignment::resample(coarse, unit), std::invalid_argument);
}

TEST_CASE("alignment JSON round-trip and cache hit") {
  const SystemSpec osc = harmonic_oscillator();
  const auto a = alignment::align_system(osc, 4);
  const auto back = alignment::alignment_from_json(alignment::to_json(a));
  CHECK(back.t_peak == a.t_peak);
  CHECK(back.t_max == a.t_max);
  CHECK(back.dt_integration == a.dt_integration);
  CHECK(back.resampling_factor == a.resampling_factor);
  CHECK(back.significant_frequencies == a.significant_frequencies);

  const std::string path = "alignment_cache_test.json";
  std::remove(path.c_str());
  const auto c1 = alignment::align_cached(osc, 4, path);
  const auto c2 = alignment::align_cached(osc, 4, path);
  CHECK(c1.t_peak == a.t_peak);
  CHECK(c2.t_peak == c1.t_peak);
  CHECK(c2.dt_integration == c1.dt_integration);
  std::remove(path.c_str());
}

}  // TEST_SUITE
