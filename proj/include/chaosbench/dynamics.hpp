#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace chaosbench::dynamics {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// A named continuous-time dynamical system. Non-autonomous forcing is lifted
/// into extra state variables, so every rhs is autonomous. For delay systems
/// (delay set, dim == 1) `rhs` is the zero-lag reduction f(x, x) used only for
/// consistency checks; integration goes through `delay_rhs`.
struct SystemSpec {
  std::string name;
  int dim = 0;
  std::map<std::string, double> params;
  std::function<Vec(const Vec&)> rhs;
  std::function<Mat(const Vec&)> jacobian;
  Vec default_state;                 // a point on (or very near) the attractor
  std::optional<double> delay;       // delay-differential systems only

  // Alignment metadata: pilot integration step, a rough dominant period used
  // to size transients and pilot runs before alignment fixes the real dt, and
  // which coordinate the spectral analysis reads. Sign-symmetric coordinates
  // (e.g. Lorenz x) bury the oscillation line under switching broadband, so
  // some systems point the analysis at a symmetry-respecting coordinate.
  double pilot_dt = 0.01;
  double period_hint = 1.0;
  int align_coord = 0;

  // Integration step ceiling. The spectral rule (a fraction of the dominant
  // period) under-resolves systems whose excursions are much faster than
  // their spectral peak, which distorts long-run expansion statistics.
  // Ceilings are validated per system by halving the step until the leading
  // exponent stops moving.
  double dt_max = std::numeric_limits<double>::infinity();

  // f(x(t), x(t - delay)) for scalar delay systems.
  std::function<double(double, double)> delay_rhs;

  bool is_delay() const { return delay.has_value(); }
};

/// Uniformly sampled multivariate series.
struct Trajectory {
  Mat values;                // T x D, row = one time point
  double dt = 0.0;
  double t0 = 0.0;
  std::string system_name;
  int granularity = 0;       // points per dominant period; 0 = not aligned

  Eigen::Index length() const { return values.rows(); }
  Eigen::Index dim() const { return values.cols(); }
};

/// Thrown when a state component leaves [-1e12, 1e12] or becomes non-finite.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, std::size_t step)
      : std::runtime_error(what), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

/// Magnitude beyond which a trajectory is declared divergent. All attractors
/// in the registry are bounded far below this.
inline constexpr double kDivergenceBound = 1e12;

/// Method-of-steps integrator for scalar delay systems. Keeps a ring buffer of
/// past values at dt spacing; the lagged argument is linearly interpolated.
/// Exposed so invariant estimators can treat the whole buffer as the state.
class DelayStepper {
 public:
  /// Constant history equal to x0 over [-delay, 0].
  DelayStepper(const SystemSpec& spec, double dt, double x0);
  /// Explicit history, oldest first, spaced dt apart, covering at least
  /// [-delay, 0]; the last entry is the current value.
  DelayStepper(const SystemSpec& spec, double dt, const std::vector<double>& history);

  void step();
  double value() const { return buf_[head_]; }
  double dt() const { return dt_; }
  /// Snapshot of the buffer, oldest to newest (current value last).
  std::vector<double> history() const;
  std::size_t buffer_size() const { return buf_.size(); }

 private:
  double delayed(double lag) const;  // x(t_now - lag), lag in (0, delay]

  std::function<double(double, double)> f_;
  double tau_;
  double dt_;
  std::vector<double> buf_;  // ring, buf_[head_] = current value
  std::size_t head_ = 0;
  std::size_t steps_done_ = 0;
};

/// All benchmark systems, with literature-standard chaotic parameterizations.
const std::vector<SystemSpec>& registry();

/// Lookup by exact name; throws std::out_of_range listing known names.
const SystemSpec& find_system(const std::string& name);

/// Fixed-step RK4 (method of steps for delay systems, started from constant
/// history x0). Returns n_steps+1 points including x0. Throws DivergenceError
/// naming the step index if the state leaves the finite bound.
Trajectory integrate(const SystemSpec& spec, const Vec& x0, double dt,
                     std::size_t n_steps);

/// One in-place RK4 step for a non-delay system.
void rk4_step(const std::function<Vec(const Vec&)>& rhs, Vec& x, double dt);

/// Seeded on-attractor state: default_state with multiplicative noise of
/// relative scale 1e-2, integrated for transient_periods dominant periods.
Vec sample_attractor(const SystemSpec& spec, std::uint64_t seed,
                     double transient_periods = 20.0);

/// Central finite-difference Jacobian of an autonomous rhs.
Mat finite_difference_jacobian(const std::function<Vec(const Vec&)>& rhs,
                               const Vec& x, double eps = 1e-6);

/// CSV with header "t,x0,...,x{D-1}"; values round-trip exactly.
std::string trajectory_to_csv(const Trajectory& traj);
Trajectory trajectory_from_csv(const std::string& csv);

/// JSON envelope: system_name, dt, t0, granularity, seed (if given), values.
std::string trajectory_to_json(const Trajectory& traj,
                               std::optional<std::uint64_t> seed = std::nullopt);
Trajectory trajectory_from_json(const std::string& json_text);

}  // namespace chaosbench::dynamics
