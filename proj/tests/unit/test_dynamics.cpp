#include "doctest.h"

#include <cmath>

#include "chaosbench/dynamics.hpp"
#include "chaosbench/util.hpp"

using namespace chaosbench;
using dynamics::SystemSpec;
using dynamics::Trajectory;
using dynamics::Vec;

namespace {

SystemSpec exp_decay() {
  SystemSpec s;
  s.name = "ExpDecay";
  s.dim = 1;
  s.rhs = [](const Vec& x) {
    Vec d(1);
    d[0] = -x[0];
    return d;
  };
  Vec x0(1);
  x0[0] = 1.0;
  s.default_state = x0;
  return s;
}

double global_error_exp(double dt) {
  SystemSpec s = exp_decay();
  const auto n = static_cast<std::size_t>(std::lround(1.0 / dt));
  Vec x0(1);
  x0[0] = 1.0;
  const Trajectory t = dynamics::integrate(s, x0, dt, n);
  return std::abs(t.values(t.length() - 1, 0) - std::exp(-1.0));
}

}  // namespace

TEST_SUITE("dynamics") {

TEST_CASE("exponential decay matches closed form") {
  SystemSpec s = exp_decay();
  Vec x0(1);
  x0[0] = 1.0;
  const Trajectory t = dynamics::integrate(s, x0, 0.1, 10);
  REQUIRE(t.length() == 11);
  CHECK(std::abs(t.values(10, 0) - std::exp(-1.0)) < 1e-5);
}

TEST_CASE("RK4 global error order is 4 on the closed-form system") {
  const double e1 = global_error_exp(0.1);
  const double e2 = global_error_exp(0.05);
  const double order = std::log2(e1 / e2);
  CHECK(order == doctest::Approx(4.0).epsilon(0.3 / 4.0));
}

TEST_CASE("Lorenz fixed point at the origin stays exactly zero") {
  const auto& lorenz = dynamics::find_system("Lorenz");
  Vec x0 = Vec::Zero(3);
  const Trajectory t = dynamics::integrate(lorenz, x0, 0.01, 100);
  CHECK(t.values.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("halving dt improves Lorenz accuracy about sixteenfold") {
  const auto& lorenz = dynamics::find_system("Lorenz");
  const Vec x0 = lorenz.default_state;
  auto final_state = [&](double dt) {
    const auto n = static_cast<std::size_t>(std::lround(1.0 / dt));
    const Trajectory t = dynamics::integrate(lorenz, x0, dt, n);
    return Vec(t.values.row(t.length() - 1).transpose());
  };
  const Vec ref = final_state(0.01 / 64.0);
  const double e1 = (final_state(0.01) - ref).norm();
  const double e2 = (final_state(0.005) - ref).norm();
  const double ratio = e1 / e2;
  CHECK(ratio > 11.0);
  CHECK(ratio < 23.0);
}

TEST_CASE("registry holds the required canon") {
  const auto& reg = dynamics::registry();
  CHECK(reg.size() >= 17);

  const auto& lorenz = dynamics::find_system("Lorenz");
  CHECK(lorenz.params.at("sigma") == 10.0);
  CHECK(lorenz.params.at("rho") == 28.0);
  CHECK(lorenz.params.at("beta") == doctest::Approx(8.0 / 3.0));

  const auto& mg = dynamics::find_system("MackeyGlass");
  REQUIRE(mg.is_delay());
  CHECK(mg.delay.value() > 0.0);

  int sprott = 0;
  int delay_count = 0;
  for (const auto& s : reg) {
    if (s.name.rfind("Sprott", 0) == 0) ++sprott;
    if (s.is_delay()) ++delay_count;
    CHECK((s.is_delay() ? s.dim >= 1 : s.dim >= 3));
    CHECK(s.rhs(s.default_state).allFinite());
  }
  CHECK(sprott >= 4);
  CHECK(delay_count == 1);
}

TEST_CASE("analytic jacobians agree with finite differences on attractors") {
  for (const auto& s : dynamics::registry()) {
    CAPTURE(s.name);
    const Vec start = dynamics::sample_attractor(s, 7, 12.0);
    const double span = 2.0 * s.period_hint;
    const auto n = static_cast<std::size_t>(std::ceil(span / s.pilot_dt));
    const Trajectory t = dynamics::integrate(s, start, s.pilot_dt, n);
    auto rng = util::make_rng(99);
    for (int k = 0; k < 10; ++k) {
      const auto r = static_cast<Eigen::Index>(
          util::uniform(rng, 0.0, static_cast<double>(t.length() - 1)));
      const Vec x = t.values.row(r).transpose();
      const dynamics::Mat ja = s.jacobian(x);
      const dynamics::Mat jf = dynamics::finite_difference_jacobian(s.rhs, x);
      const double scale = std::max(1.0, ja.cwiseAbs().maxCoeff());
      const double rel = (ja - jf).cwiseAbs().maxCoeff() / scale;
      CAPTURE(k);
      CHECK(rel < 1e-5);
    }
  }
}

TEST_CASE("integration is deterministic") {
  const auto& s = dynamics::find_system("Halvorsen");
  const Trajectory a = dynamics::integrate(s, s.default_state, 0.01, 500);
  const Trajectory b = dynamics::integrate(s, s.default_state, 0.01, 500);
  CHECK((a.values - b.values).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("divergence raises an error naming the step") {
  SystemSpec s;
  s.name = "Blowup";
  s.dim = 1;
  s.rhs = [](const Vec& x) {
    Vec d(1);
    d[0] = x[0] * x[0];
    return d;
  };
  Vec x0(1);
  x0[0] = 1.0;
  bool thrown = false;
  try {
    dynamics::integrate(s, x0, 1.0, 50);
  } catch (const dynamics::DivergenceError& e) {
    thrown = true;
    CHECK(e.step() >= 1);
    CHECK(std::string(e.what()).find("step") != std::string::npos);
  }
  CHECK(thrown);
}

TEST_CASE("sample_attractor is deterministic per seed and spreads seeds") {
  const auto& s = dynamics::find_system("Lorenz");
  const Vec a = dynamics::sample_attractor(s, 42);
  const Vec b = dynamics::sample_attractor(s, 42);
  CHECK((a - b).norm() == 0.0);

  const Vec c = dynamics::sample_attractor(s, 43);
  CHECK((a - c).norm() > 1e-3);
  CHECK(s.rhs(a).norm() > 1e-3);  // not parked at an equilibrium
  CHECK_THROWS_AS(dynamics::sample_attractor(s, 1, 5.0), std::invalid_argument);
}

TEST_CASE("delay integrator holds the Mackey-Glass fixed point exactly") {
  const auto& mg = dynamics::find_system("MackeyGlass");
  Vec x0(1);
  x0[0] = 1.0;  // beta/gamma = 2 gives 1 + x^n = 2 at x = 1
  const Trajectory t = dynamics::integrate(mg, x0, 0.1, 200);
  CHECK((t.values.array() - 1.0).abs().maxCoeff() < 1e-12);
}

TEST_CASE("Mackey-Glass oscillates within its known band") {
  const auto& mg = dynamics::find_system("MackeyGlass");
  Vec x0(1);
  x0[0] = 1.2;
  const Trajectory t = dynamics::integrate(mg, x0, 0.1, 20000);
  const auto tail = t.values.col(0).tail(10000);
  CHECK(tail.minCoeff() > 0.1);
  CHECK(tail.maxCoeff() < 1.8);
  const double mean = tail.mean();
  const double sd = std::sqrt((tail.array() - mean).square().mean());
  CHECK(sd > 0.05);  // genuinely oscillating, not settled
}

TEST_CASE("trajectory CSV and JSON round-trip") {
  const auto& s = dynamics::find_system("Rossler");
  Trajectory t = dynamics::integrate(s, s.default_state, 0.05, 20);
  t.granularity = 100;

  const std::string csv = dynamics::trajectory_to_csv(t);
  CHECK(csv.rfind("t,x0,x1,x2\n", 0) == 0);
  const Trajectory back = dynamics::trajectory_from_csv(csv);
  REQUIRE(back.length() == t.length());
  CHECK((back.values - t.values).cwiseAbs().maxCoeff() == 0.0);
  CHECK(back.dt == doctest::Approx(t.dt).epsilon(1e-12));

  const std::string js = dynamics::trajectory_to_json(t, 17);
  const Trajectory jback = dynamics::trajectory_from_json(js);
  CHECK(jback.system_name == "Rossler");
  CHECK(jback.granularity == 100);
  CHECK(jback.dt == t.dt);
  CHECK((jback.values - t.values).cwiseAbs().maxCoeff() == 0.0);
}

}  // TEST_SUITE
