#include "chaosbench/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "json.hpp"

#include "chaosbench/util.hpp"

namespace chaosbench::dynamics {
namespace {

Vec vec3(double a, double b, double c) {
  Vec v(3);
  v << a, b, c;
  return v;
}

Vec vec4(double a, double b, double c, double d) {
  Vec v(4);
  v << a, b, c, d;
  return v;
}

bool state_ok(const Vec& x) {
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || std::abs(x[i]) > kDivergenceBound) return false;
  }
  return true;
}

SystemSpec lorenz() {
  SystemSpec s;
  s.name = "Lorenz";
  s.dim = 3;
  const double sigma = 10.0, rho = 28.0, beta = 8.0 / 3.0;
  s.params = {{"sigma", sigma}, {"rho", rho}, {"beta", beta}};
  s.rhs = [=](const Vec& x) {
    return vec3(sigma * (x[1] - x[0]), x[0] * (rho - x[2]) - x[1],
                x[0] * x[1] - beta * x[2]);
  };
  s.jacobian = [=](const Vec& x) {
    Mat j(3, 3);
    j << -sigma, sigma, 0.0, rho - x[2], -1.0, -x[0], x[1], x[0], -beta;
    return j;
  };
  s.default_state = vec3(-1.693818, -3.104353, 10.0878);
  s.pilot_dt = 0.004;
  s.period_hint = 0.76;
  s.align_coord = 2;
  return s;
}

SystemSpec rossler() {
  SystemSpec s;
  s.name = "Rossler";
  s.dim = 3;
  const double a = 0.2, b = 0.2, c = 5.7;
  s.params = {{"a", a}, {"b", b}, {"c", c}};
  s.rhs = [=](const Vec& x) {
    return vec3(-x[1] - x[2], x[0] + a * x[1], b + x[2] * (x[0] - c));
  };
  s.jacobian = [=](const Vec& x) {
    Mat j(3, 3);
    j << 0.0, -1.0, -1.0, 1.0, a, 0.0, x[2], 0.0, x[0] - c;
    return j;
  };
  s.default_state = vec3(-7.073775, 1.728331, 0.0158877);
  s.pilot_dt = 0.03;
  s.period_hint = 5.9;
  return s;
}

SystemSpec chua() {
  SystemSpec s;
  s.name = "Chua";
  s.dim = 3;
  const double alpha = 15.6, beta = 28.0, m0 = -8.0 / 7.0, m1 = -5.0 / 7.0;
  s.params = {{"alpha", alpha}, {"beta", beta}, {"m0", m0}, {"m1", m1}};
  auto h = [=](double x) {
    return m1 * x + 0.5 * (m0 - m1) * (std::abs(x + 1.0) - std::abs(x - 1.0));
  };
  s.rhs = [=](const Vec& x) {
    return vec3(alpha * (x[1] - x[0] - h(x[0])), x[0] - x[1] + x[2],
                -beta * x[1]);
  };
  s.jacobian = [=](const Vec& x) {
    const double hp = std::abs(x[0]) < 1.0 ? m0 : m1;
    Mat j(3, 3);
    j << -alpha * (1.0 + hp), alpha, 0.0, 1.0, -1.0, 1.0, 0.0, -beta, 0.0;
    return j;
  };
  s.default_state = vec3(0.5388698, 0.07951253, -1.414611);
  s.pilot_dt = 0.01;
  s.period_hint = 1.8;
  s.align_coord = 1;
  return s;
}

SystemSpec thomas() {
  SystemSpec s;
  s.name = "Thomas";
  s.dim = 3;
  const double b = 0.18;
  s.params = {{"b", b}};
  s.rhs = [=](const Vec& x) {
    return vec3(std::sin(x[1]) - b * x[0], std::sin(x[2]) - b * x[1],
                std::sin(x[0]) - b * x[2]);
  };
  s.jacobian = [=](const Vec& x) {
    Mat j(3, 3);
    j << -b, std::cos(x[1]), 0.0, 0.0, -b, std::cos(x[2]), std::cos(x[0]), 0.0,
        -b;
    return j;
  };
  s.default_state = vec3(0.7936257, 1.537217, -2.967315);
  s.pilot_dt = 0.05;
  s.period_hint = 16.0;
  s.dt_max = 0.125;
  return s;
}

SystemSpec halvorsen() {
  SystemSpec s;
  s.name = "Halvorsen";
  s.dim = 3;
  const double a = 1.4;
  s.params = {{"a", a}};
  s.rhs = [=](const Vec& x) {
    return vec3(-a * x[0] - 4.0 * x[1] - 4.0 * x[2] - x[1] * x[1],
                -a * x[1] - 4.0 * x[2] - 4.0 * x[0] - x[2] * x[2],
                -a * x[2] - 4.0 * x[0] - 4.0 * x[1] - x[0] * x[0]);
  };
  s.jacobian = [=](const Vec& x) {
    Mat j(3, 3);
    j << -a, -4.0 - 2.0 * x[1], -4.0, -4.0, -a, -4.0 - 2.0 * x[2],
        -4.0 - 2.0 * x[0], -4.0, -a;
    return j;
  };
  s.default_state = vec3(-3.242561, -2.841975, 1.97152);
  s.pilot_dt = 0.01;
  s.period_hint = 1.3;
  return s;
}

SystemSpec dadras() {
  SystemSpec s;
  s.name = "Dadras";
  s.dim = 3;
  const double p = 3.0, o = 2.7, r = 1.7, c = 2.0, e = 9.0;
  s.params = {{"p", p}, {"o", o}, {"r", r}, {"c", c}, {"e", e}};
  s.rhs = [=](const Vec& x) {
    return vec3(x[1] - p * x[0] + o * x[1] * x[2],
                r * x[1] - x[0] * x[2] + x[2],
                c * x[0] * x[1] - e * x[2]);
  };
  s.jacobian = [=](const Vec& x) {
    Mat j(3, 3);
    j << -p, 1.0 + o * x[2], o * x[1], -x[2], r, 1.0 - x[0], c * x[1],
        c * x[0], -e;
    return j;
  };
  s.default_state = vec3(7.40164, 3.117914, 4.416164);
  s.pilot_dt = 0.01;
  s.period_hint = 2.5;
  s.align_coord = 1;
  s.dt_max = 0.018;
  return s;
}

SystemSpec chen() {
  SystemSpec s;
  s.name = "Chen";
  s.dim = 3;
  const double a = 35.0, b = 3.0, c = 28.0;
  s.params = {{"a", a}, {"b", b}, {"c", c}};
  s.rhs = [=](const Vec& x) {
    return vec3(a * (x[1] - x[0]), (c - a) * x[0] - x[0] * x[2] + c * x[1],
                x[0] * x[1] - b * x[2]);
  };
  s.jacobian = [=](const Vec& x) {
    Mat j(3, 3);
    j << -a, a, 0.0, c - a - x[2], c, -x[0], x[1], x[0], -b;
    return j;
  };
  s.default_state = vec3(7.692525, 10.12671, 15.91703);
  s.pilot_dt = 0.002;
  s.period_hint = 0.35;
  s.align_coord = 2;
  return s;
}

SystemSpec sprott_b() {
  SystemSpec s;
  s.name = "SprottB";
  s.dim = 3;
  s.rhs = [](const Vec& x) {
    return vec3(x[1] * x[2], x[0] - x[1], 1.0 - x[0] * x[1]);
  };
  s.jacobian = [](const Vec& x) {
    Mat j(3, 3);
    j << 0.0, x[2], x[1], 1.0, -1.0, 0.0, -x[1], -x[0], 0.0;
    return j;
  };
  s.default_state = vec3(1.803892, 1.570547, -0.656484);
  s.pilot_dt = 0.02;
  s.period_hint = 4.0;
  s.align_coord = 2;
  return s;
}

SystemSpec sprott_c() {
  SystemSpec s;
  s.name = "SprottC";
  s.dim = 3;
  s.rhs = [](const Vec& x) {
    return vec3(x[1] * x[2], x[0] - x[1], 1.0 - x[0] * x[0]);
  };
  s.jacobian = [](const Vec& x) {
    Mat j(3, 3);
    j << 0.0, x[2], x[1], 1.0, -1.0, 0.0, -2.0 * x[0], 0.0, 0.0;
    return j;
  };
  s.default_state = vec3(-1.900353, -1.214085, 0.2009441);
  s.pilot_dt = 0.02;
  s.period_hint = 4.0;
  s.align_coord = 2;
  return s;
}

SystemSpec sprott_d() {
  SystemSpec s;
  s.name = "SprottD";
  s.dim = 3;
  s.rhs = [](const Vec& x) {
    return vec3(-x[1], x[0] + x[2], x[0] * x[2] + 3.0 * x[1] * x[1]);
  };
  s.jacobian = [](const Vec& x) {
    Mat j(3, 3);
    j << 0.0, -1.0, 0.0, 1.0, 0.0, 1.0, x[2], 6.0 * x[1], x[0];
    return j;
  };
  s.default_state = vec3(-1.602311, 0.2090897, 0.6284181);
  s.pilot_dt = 0.02;
  s.period_hint = 5.0;
  return s;
}

SystemSpec sprott_j() {
  SystemSpec s;
  s.name = "SprottJ";
  s.dim = 3;
  s.rhs = [](const Vec& x) {
    return vec3(2.0 * x[2], -2.0 * x[1] + x[2], -x[0] + x[1] + x[1] * x[1]);
  };
  s.jacobian = [](const Vec& x) {
    Mat j(3, 3);
    j << 0.0, 0.0, 2.0, 0.0, -2.0, 1.0, -1.0, 1.0 + 2.0 * x[1], 0.0;
    return j;
  };
  s.default_state = vec3(-5.052306, -1.071276, -0.3749661);
  s.pilot_dt = 0.02;
  s.period_hint = 5.0;
  return s;
}

SystemSpec sprott_e() {
  SystemSpec s;
  s.name = "SprottE";
  s.dim = 3;
  s.rhs = [](const Vec& x) {
    return vec3(x[1] * x[2], x[0] * x[0] - x[1], 1.0 - 4.0 * x[0]);
  };
  s.jacobian = [](const Vec& x) {
    Mat j(3, 3);
    j << 0.0, x[2], x[1], 2.0 * x[0], -1.0, 0.0, -4.0, 0.0, 0.0;
    return j;
  };
  s.default_state = vec3(0.2893997, 0.06511927, 3.24428);
  s.pilot_dt = 0.02;
  s.period_hint = 3.0;
  s.align_coord = 2;
  s.dt_max = 0.11;
  return s;
}

SystemSpec sprott_f() {
  SystemSpec s;
  s.name = "SprottF";
  s.dim = 3;
  const double a = 0.5;
  s.params = {{"a", a}};
  s.rhs = [=](const Vec& x) {
    return vec3(x[1] + x[2], -x[0] + a * x[1], x[0] * x[0] - x[2]);
  };
  s.jacobian = [=](const Vec& x) {
    Mat j(3, 3);
    j << 0.0, 1.0, 1.0, -1.0, a, 0.0, 2.0 * x[0], 0.0, -1.0;
    return j;
  };
  s.default_state = vec3(0.5197017, 0.07207419, 0.3275738);
  s.pilot_dt = 0.02;
  s.period_hint = 5.5;
  return s;
}

SystemSpec sprott_k() {
  SystemSpec s;
  s.name = "SprottK";
  s.dim = 3;
  const double a = 0.3;
  s.params = {{"a", a}};
  s.rhs = [=](const Vec& x) {
    return vec3(x[0] * x[1] - x[2], x[0] - x[1], x[0] + a * x[2]);
  };
  s.jacobian = [=](const Vec& x) {
    Mat j(3, 3);
    j << x[1], x[0], -1.0, 1.0, -1.0, 0.0, 1.0, 0.0, a;
    return j;
  };
  s.default_state = vec3(-0.5947013, -1.082242, -0.2337178);
  s.pilot_dt = 0.02;
  s.period_hint = 5.0;
  return s;
}

SystemSpec duffing() {
  SystemSpec s;
  s.name = "Duffing";
  s.dim = 4;
  // Ueda form: cubic stiffness only. The double-well variant carries
  // coexisting attractors whose basins interleave near the attractor, so
  // seeded sampling lands on different invariant sets; this parameter set
  // has a single strange attractor.
  const double delta = 0.05, gamma = 7.5, omega = 1.0;
  s.params = {{"delta", delta}, {"gamma", gamma}, {"omega", omega}};
  // Forced oscillator lifted to an autonomous flow with the bounded forcing
  // pair (u, w) = (cos omega t, sin omega t).
  s.rhs = [=](const Vec& x) {
    return vec4(x[1], -x[0] * x[0] * x[0] - delta * x[1] + gamma * x[2],
                -omega * x[3], omega * x[2]);
  };
  s.jacobian = [=](const Vec& x) {
    Mat j(4, 4);
    j << 0.0, 1.0, 0.0, 0.0, -3.0 * x[0] * x[0], -delta, gamma, 0.0, 0.0,
        0.0, 0.0, -omega, 0.0, 0.0, omega, 0.0;
    return j;
  };
  s.default_state = vec4(-0.919574, 0.196383, -0.367457, 0.930040);
  s.pilot_dt = 0.01;
  s.period_hint = 6.283;
  s.align_coord = 1;  // forcing period 2*pi/omega
  return s;
}

SystemSpec mackey_glass() {
  SystemSpec s;
  s.name = "MackeyGlass";
  s.dim = 1;
  const double beta = 0.2, gamma = 0.1, n = 10.0, tau = 17.0;
  s.params = {{"beta", beta}, {"gamma", gamma}, {"n", n}, {"tau", tau}};
  s.delay = tau;
  s.delay_rhs = [=](double x, double xd) {
    return beta * xd / (1.0 + std::pow(xd, n)) - gamma * x;
  };
  // Zero-lag reduction used only for interface consistency checks.
  s.rhs = [=](const Vec& x) {
    Vec d(1);
    d[0] = beta * x[0] / (1.0 + std::pow(x[0], n)) - gamma * x[0];
    return d;
  };
  s.jacobian = [=](const Vec& x) {
    const double xn = std::pow(x[0], n);
    const double denom = (1.0 + xn) * (1.0 + xn);
    Mat j(1, 1);
    j(0, 0) = beta * (1.0 + (1.0 - n) * xn) / denom - gamma;
    return j;
  };
  Vec x0(1);
  x0[0] = 1.2;
  s.default_state = x0;
  s.pilot_dt = 0.1;
  s.period_hint = 50.0;
  return s;
}

SystemSpec rucklidge() {
  SystemSpec s;
  s.name = "Rucklidge";
  s.dim = 3;
  const double kappa = 2.0, lam = 6.7;
  s.params = {{"kappa", kappa}, {"lambda", lam}};
  s.rhs = [=](const Vec& x) {
    return vec3(-kappa * x[0] + lam * x[1] - x[1] * x[2], x[0],
                -x[2] + x[1] * x[1]);
  };
  s.jacobian = [=](const Vec& x) {
    Mat j(3, 3);
    j << -kappa, lam - x[2], -x[1], 1.0, 0.0, 0.0, 0.0, 2.0 * x[1], -1.0;
    return j;
  };
  s.default_state = vec3(0.9504684, 1.830834, 4.470229);
  s.pilot_dt = 0.02;
  s.period_hint = 4.0;
  s.align_coord = 2;
  s.dt_max = 0.018;
  return s;
}

SystemSpec lorenz84() {
  SystemSpec s;
  s.name = "Lorenz84";
  s.dim = 3;
  const double a = 0.25, b = 4.0, F = 8.0, G = 1.0;
  s.params = {{"a", a}, {"b", b}, {"F", F}, {"G", G}};
  s.rhs = [=](const Vec& x) {
    return vec3(-x[1] * x[1] - x[2] * x[2] - a * x[0] + a * F,
                x[0] * x[1] - b * x[0] * x[2] - x[1] + G,
                b * x[0] * x[1] + x[0] * x[2] - x[2]);
  };
  s.jacobian = [=](const Vec& x) {
    Mat j(3, 3);
    j << -a, -2.0 * x[1], -2.0 * x[2], x[1] - b * x[2], x[0] - 1.0, -b * x[0],
        b * x[1] + x[2], b * x[0], x[0] - 1.0;
    return j;
  };
  s.default_state = vec3(1.480703, 0.4448304, -0.6228814);
  s.pilot_dt = 0.01;
  s.period_hint = 1.6;
  s.dt_max = 0.021;
  return s;
}

SystemSpec genesio_tesi() {
  SystemSpec s;
  s.name = "GenesioTesi";
  s.dim = 3;
  const double a = 0.44, b = 1.1, c = 1.0;
  s.params = {{"a", a}, {"b", b}, {"c", c}};
  s.rhs = [=](const Vec& x) {
    return vec3(x[1], x[2], -c * x[0] - b * x[1] - a * x[2] + x[0] * x[0]);
  };
  s.jacobian = [=](const Vec& x) {
    Mat j(3, 3);
    j << 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, -c + 2.0 * x[0], -b, -a;
    return j;
  };
  s.default_state = vec3(-0.04635174, -0.2598449, 0.01444192);
  s.pilot_dt = 0.02;
  s.period_hint = 5.2;
  s.dt_max = 0.13;
  return s;
}

SystemSpec arneodo() {
  SystemSpec s;
  s.name = "Arneodo";
  s.dim = 3;
  const double a = 5.5, b = 3.5, c = 1.0;
  s.params = {{"a", a}, {"b", b}, {"c", c}};
  s.rhs = [=](const Vec& x) {
    return vec3(x[1], x[2],
                a * x[0] - b * x[1] - c * x[2] - x[0] * x[0] * x[0]);
  };
  s.jacobian = [=](const Vec& x) {
    Mat j(3, 3);
    j << 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, a - 3.0 * x[0] * x[0], -b, -c;
    return j;
  };
  s.default_state = vec3(-1.335725, 3.972546, -0.2464232);
  s.pilot_dt = 0.01;
  s.period_hint = 3.9;
  s.align_coord = 1;
  return s;
}

}  // namespace

const std::vector<SystemSpec>& registry() {
  static const std::vector<SystemSpec> systems = [] {
    std::vector<SystemSpec> v;
    v.push_back(lorenz());
    v.push_back(rossler());
    v.push_back(chua());
    v.push_back(thomas());
    v.push_back(halvorsen());
    v.push_back(dadras());
    v.push_back(chen());
    v.push_back(sprott_b());
    v.push_back(sprott_c());
    v.push_back(sprott_d());
    v.push_back(sprott_e());
    v.push_back(sprott_f());
    v.push_back(sprott_j());
    v.push_back(sprott_k());
    v.push_back(duffing());
    v.push_back(mackey_glass());
    v.push_back(rucklidge());
    v.push_back(lorenz84());
    v.push_back(genesio_tesi());
    v.push_back(arneodo());
    return v;
  }();
  return systems;
}

const SystemSpec& find_system(const std::string& name) {
  for (const auto& s : registry()) {
    if (s.name == name) return s;
  }
  std::string known;
  for (const auto& s : registry()) {
    if (!known.empty()) known += ", ";
    known += s.name;
  }
  throw std::out_of_range("unknown system '" + name + "'; known: " + known);
}

void rk4_step(const std::function<Vec(const Vec&)>& rhs, Vec& x, double dt) {
  const Vec k1 = rhs(x);
  const Vec k2 = rhs(x + (0.5 * dt) * k1);
  const Vec k3 = rhs(x + (0.5 * dt) * k2);
  const Vec k4 = rhs(x + dt * k3);
  x += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

DelayStepper::DelayStepper(const SystemSpec& spec, double dt, double x0)
    : DelayStepper(spec, dt, std::vector<double>{x0}) {}

DelayStepper::DelayStepper(const SystemSpec& spec, double dt,
                           const std::vector<double>& history)
    : f_(spec.delay_rhs), tau_(spec.delay.value_or(0.0)), dt_(dt) {
  if (!spec.is_delay() || !f_) {
    throw std::invalid_argument("DelayStepper requires a delay system");
  }
  if (dt <= 0.0 || dt > tau_) {
    throw std::invalid_argument("delay stepper needs 0 < dt <= delay");
  }
  if (history.empty()) {
    throw std::invalid_argument("delay history must be nonempty");
  }
  const auto n_lag = static_cast<std::size_t>(std::ceil(tau_ / dt - 1e-12));
  buf_.resize(n_lag + 2);
  // Backfill with the oldest supplied value when the history is shorter than
  // the buffer (constant-history start is the single-value case).
  const std::size_t n = buf_.size();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t back = n - 1 - i;  // buf_[i] is `back` steps in the past
    buf_[i] = back < history.size() ? history[history.size() - 1 - back]
                                    : history.front();
  }
  head_ = n - 1;
}

double DelayStepper::delayed(double lag) const {
  const double p = lag / dt_;  // grid steps back from the current value
  const auto i = static_cast<std::size_t>(p);
  const double frac = p - static_cast<double>(i);
  const std::size_t n = buf_.size();
  const std::size_t a = (head_ + n - (i % n)) % n;
  const std::size_t b = (a + n - 1) % n;
  return buf_[a] * (1.0 - frac) + buf_[b] * frac;
}

void DelayStepper::step() {
  const double x = buf_[head_];
  const double xd0 = delayed(tau_);
  const double xdh = delayed(tau_ - 0.5 * dt_);
  const double xd1 = delayed(tau_ - dt_);
  const double k1 = f_(x, xd0);
  const double k2 = f_(x + 0.5 * dt_ * k1, xdh);
  const double k3 = f_(x + 0.5 * dt_ * k2, xdh);
  const double k4 = f_(x + dt_ * k3, xd1);
  const double next = x + dt_ / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  head_ = (head_ + 1) % buf_.size();
  buf_[head_] = next;
  ++steps_done_;
}

std::vector<double> DelayStepper::history() const {
  std::vector<double> out(buf_.size());
  const std::size_t n = buf_.size();
  for (std::size_t i = 0; i < n; ++i) {
    out[n - 1 - i] = buf_[(head_ + n - i % n) % n];
  }
  return out;
}

Trajectory integrate(const SystemSpec& spec, const Vec& x0, double dt,
                     std::size_t n_steps) {
  if (dt <= 0.0) throw std::invalid_argument("integrate: dt must be positive");
  if (n_steps < 1) throw std::invalid_argument("integrate: n_steps >= 1");
  if (x0.size() != spec.dim) {
    throw std::invalid_argument("integrate: x0 has wrong dimension for " +
                                spec.name);
  }
  if (!state_ok(x0)) {
    throw std::invalid_argument("integrate: x0 must be finite");
  }

  Trajectory traj;
  traj.system_name = spec.name;
  traj.dt = dt;
  traj.values.resize(static_cast<Eigen::Index>(n_steps) + 1, spec.dim);

  if (spec.is_delay()) {
    DelayStepper stepper(spec, dt, x0[0]);
    traj.values(0, 0) = x0[0];
    for (std::size_t k = 1; k <= n_steps; ++k) {
      stepper.step();
      const double v = stepper.value();
      if (!std::isfinite(v) || std::abs(v) > kDivergenceBound) {
        throw DivergenceError(
            spec.name + " diverged at step " + std::to_string(k), k);
      }
      traj.values(static_cast<Eigen::Index>(k), 0) = v;
    }
    return traj;
  }

  Vec x = x0;
  traj.values.row(0) = x.transpose();
  for (std::size_t k = 1; k <= n_steps; ++k) {
    rk4_step(spec.rhs, x, dt);
    if (!state_ok(x)) {
      throw DivergenceError(
          spec.name + " diverged at step " + std::to_string(k), k);
    }
    traj.values.row(static_cast<Eigen::Index>(k)) = x.transpose();
  }
  return traj;
}

Vec sample_attractor(const SystemSpec& spec, std::uint64_t seed,
                     double transient_periods) {
  if (transient_periods < 10.0) {
    throw std::invalid_argument(
        "sample_attractor: transient_periods must be >= 10");
  }
  auto rng = util::make_rng(seed);
  Vec x0 = spec.default_state;
  for (Eigen::Index i = 0; i < x0.size(); ++i) {
    x0[i] *= 1.0 + 1e-2 * util::uniform(rng, -1.0, 1.0);
  }
  const double horizon = transient_periods * spec.period_hint;
  const auto n_steps =
      static_cast<std::size_t>(std::ceil(horizon / spec.pilot_dt));
  try {
    if (spec.is_delay()) {
      DelayStepper stepper(spec, spec.pilot_dt, x0[0]);
      for (std::size_t k = 0; k < n_steps; ++k) {
        stepper.step();
        if (!std::isfinite(stepper.value()) ||
            std::abs(stepper.value()) > kDivergenceBound) {
          throw DivergenceError(spec.name + " diverged in transient", k);
        }
      }
      Vec out(1);
      out[0] = stepper.value();
      return out;
    }
    Vec x = x0;
    for (std::size_t k = 0; k < n_steps; ++k) {
      rk4_step(spec.rhs, x, spec.pilot_dt);
      if (!state_ok(x)) {
        throw DivergenceError(spec.name + " diverged in transient", k);
      }
    }
    return x;
  } catch (const DivergenceError& e) {
    throw std::runtime_error(
        std::string(e.what()) +
        "; try a smaller initial perturbation or different seed");
  }
}

Mat finite_difference_jacobian(const std::function<Vec(const Vec&)>& rhs,
                               const Vec& x, double eps) {
  const auto d = x.size();
  Mat j(d, d);
  Vec xp = x, xm = x;
  for (Eigen::Index c = 0; c < d; ++c) {
    const double h = eps * std::max(1.0, std::abs(x[c]));
    xp[c] = x[c] + h;
    xm[c] = x[c] - h;
    j.col(c) = (rhs(xp) - rhs(xm)) / (2.0 * h);
    xp[c] = x[c];
    xm[c] = x[c];
  }
  return j;
}

std::string trajectory_to_csv(const Trajectory& traj) {
  std::string out = "t";
  for (Eigen::Index c = 0; c < traj.dim(); ++c) {
    out += ",x" + std::to_string(c);
  }
  out += "\n";
  for (Eigen::Index r = 0; r < traj.length(); ++r) {
    out += util::fmt_double(traj.t0 + static_cast<double>(r) * traj.dt);
    for (Eigen::Index c = 0; c < traj.dim(); ++c) {
      out += ",";
      out += util::fmt_double(traj.values(r, c));
    }
    out += "\n";
  }
  return out;
}

Trajectory trajectory_from_csv(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line)) {
    throw std::invalid_argument("trajectory_from_csv: empty input");
  }
  Eigen::Index dim = 0;  // header: t,x0,... so dim = comma count
  for (const char ch : line) dim += ch == ',';
  if (dim < 1) throw std::invalid_argument("trajectory_from_csv: bad header");

  std::vector<double> flat;
  std::vector<double> times;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    for (Eigen::Index c = 0; c < dim + 1; ++c) {
      if (!std::getline(row, cell, ',')) {
        throw std::invalid_argument("trajectory_from_csv: short row");
      }
      const double v = std::strtod(cell.c_str(), nullptr);
      if (c == 0) {
        times.push_back(v);
      } else {
        flat.push_back(v);
      }
    }
  }
  if (times.size() < 2) {
    throw std::invalid_argument("trajectory_from_csv: need >= 2 rows");
  }
  Trajectory traj;
  traj.t0 = times[0];
  traj.dt = times[1] - times[0];
  traj.values.resize(static_cast<Eigen::Index>(times.size()), dim);
  for (Eigen::Index r = 0; r < traj.values.rows(); ++r) {
    for (Eigen::Index c = 0; c < dim; ++c) {
      traj.values(r, c) = flat[static_cast<std::size_t>(r * dim + c)];
    }
  }
  return traj;
}

std::string trajectory_to_json(const Trajectory& traj,
                               std::optional<std::uint64_t> seed) {
  nlohmann::json j;
  j["system_name"] = traj.system_name;
  j["dt"] = traj.dt;
  j["t0"] = traj.t0;
  j["granularity"] = traj.granularity;
  if (seed) j["seed"] = *seed;
  auto rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < traj.length(); ++r) {
    auto row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < traj.dim(); ++c) {
      row.push_back(traj.values(r, c));
    }
    rows.push_back(std::move(row));
  }
  j["values"] = std::move(rows);
  return j.dump();
}

Trajectory trajectory_from_json(const std::string& json_text) {
  const auto j = nlohmann::json::parse(json_text);
  Trajectory traj;
  traj.system_name = j.value("system_name", std::string());
  traj.dt = j.at("dt").get<double>();
  traj.t0 = j.value("t0", 0.0);
  traj.granularity = j.value("granularity", 0);
  const auto& rows = j.at("values");
  if (rows.empty() || rows[0].empty()) {
    throw std::invalid_argument("trajectory_from_json: empty values");
  }
  traj.values.resize(static_cast<Eigen::Index>(rows.size()),
                     static_cast<Eigen::Index>(rows[0].size()));
  for (Eigen::Index r = 0; r < traj.values.rows(); ++r) {
    const auto& row = rows[static_cast<std::size_t>(r)];
    for (Eigen::Index c = 0; c < traj.values.cols(); ++c) {
      traj.values(r, c) = row[static_cast<std::size_t>(c)].get<double>();
    }
  }
  return traj;
}

}  // namespace chaosbench::dynamics
