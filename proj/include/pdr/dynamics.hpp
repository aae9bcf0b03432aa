#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "pdr/array.hpp"
#include "pdr/autodiff.hpp"
#include "pdr/errors.hpp"
#include "pdr/rng.hpp"

namespace pdr::dyn {

struct TimeGrid {
  double t0 = 0.0;
  double dt = 0.0;
  int n_steps = 0;  // number of steps; the grid has n_steps + 1 points

  double time(int i) const { return t0 + static_cast<double>(i) * dt; }
  int n_points() const { return n_steps + 1; }
  void validate() const {
    if (dt <= 0.0) throw ConfigError("grid: dt must be > 0");
    if (n_steps < 1) throw ConfigError("grid: need at least one step");
  }
  bool operator==(const TimeGrid&) const = default;
};

// Plain trajectory ensemble: n trajectories of d-dimensional states on a
// shared grid, with the generating parameters optionally kept for bookkeeping.
struct TrajectoryBatch {
  TimeGrid grid;
  int n = 0;
  int d = 0;
  int param_dim = 0;
  std::vector<double> states;          // n x (n_steps+1) x d, row-major
  std::vector<double> initial_states;  // n x d
  std::vector<double> params;          // n x param_dim, empty when unused

  double state(int traj, int t, int k) const {
    return states[(static_cast<std::size_t>(traj) * grid.n_points() + t) * d + k];
  }
  double& state(int traj, int t, int k) {
    return states[(static_cast<std::size_t>(traj) * grid.n_points() + t) * d + k];
  }
  // {d, n} matrix of all trajectories at time index t.
  Array states_at(int t) const;
};

// Batched drift/diffusion callbacks: x is {d, n}, theta {param_dim, n},
// return {d, n}. The diffusion callback is only ever called with n = 1 and
// returns the {d, noise_dim} coefficient matrix of one trajectory.
using FieldFn =
    std::function<ad::Var(ad::Tape&, const ad::Var& x, double t, const ad::Var& theta)>;

struct JumpSpec {
  double intensity = 0.0;  // gamma(U), constant over marks
  // Draws one jump mark; null when the magnitude ignores marks.
  std::function<std::vector<double>(RngStream&)> sample_mark;
  // beta(x, mark, t, theta) -> {d, 1}
  std::function<ad::Var(ad::Tape&, const ad::Var& x, const std::vector<double>& mark, double t,
                        const ad::Var& theta)>
      magnitude;
  // Analytic E_mark[beta](x, t, theta) -> {d, 1}; when null the compensator
  // falls back to a Monte Carlo average over mc_compensator_draws marks.
  FieldFn mean_magnitude;
  int mc_compensator_draws = 64;
};

struct ModelSpec {
  enum class Kind { Ode, JumpDiffusion };
  Kind kind = Kind::Ode;
  std::string name;
  int state_dim = 0;
  int param_dim = 0;
  int noise_dim = 0;  // Brownian dimension, JumpDiffusion only
  FieldFn drift;
  FieldFn diffusion;  // JumpDiffusion only
  JumpSpec jump;      // JumpDiffusion only
};

// Prediction-side ensemble living on a tape: states[i] is the {d, n} matrix
// of all trajectories at time index i.
struct TapedBatch {
  TimeGrid grid;
  int n = 0;
  int d = 0;
  std::vector<ad::Var> states;
};

// Classical RK4 over the whole batch at once; x0_cols is the {d, n} constant
// of initial states, theta the {param_dim, n} parameter columns.
TapedBatch rk4_integrate_batch(ad::Tape& tape, const ModelSpec& model, const Array& x0_cols,
                               const ad::Var& theta, const TimeGrid& grid);

// Single-trajectory RK4; path[i] is the {d, 1} state at time index i.
std::vector<ad::Var> rk4_integrate(ad::Tape& tape, const ModelSpec& model, const Array& x0,
                                   const ad::Var& theta, const TimeGrid& grid);

// Euler-Maruyama with compensated Poisson jumps for one trajectory; theta is
// {param_dim, 1}, x0 a d-vector. All coefficients use the pre-step state
// (left-point rule); per step the stream is consumed in the order Brownian
// increments, jump count, jump marks, Monte Carlo compensator marks.
std::vector<ad::Var> em_jump_integrate(ad::Tape& tape, const ModelSpec& model, const Array& x0,
                                       const ad::Var& theta, const TimeGrid& grid,
                                       RngStream& rng);

// Dispatches on model.kind; noise streams split as rng.child(i) per
// trajectory so trajectory draws never interact.
TapedBatch simulate_batch_taped(ad::Tape& tape, const ModelSpec& model, const Array& x0_cols,
                                const ad::Var& theta, const TimeGrid& grid, RngStream& rng);

// Forward-only twin used for data generation: runs the taped integrators on a
// scratch tape and copies the values out. initial_states and params are
// row-major n x d and n x param_dim.
TrajectoryBatch simulate_batch_plain(const ModelSpec& model,
                                     const std::vector<double>& initial_states,
                                     const std::vector<double>& params, int n,
                                     const TimeGrid& grid, RngStream& rng);

ModelSpec lotka_volterra();
ModelSpec ocular8d();
ModelSpec merton_jd();
// Wraps a user-supplied batched right-hand side as an ODE model.
ModelSpec user_ode(std::string name, int state_dim, int param_dim, FieldFn drift);

// Example 1: Lotka-Volterra with c ~ U(2,4) and initial states ~ U(1,2)^2.
TrajectoryBatch example1_data(std::uint64_t seed, int n, const TimeGrid& grid);
// Draws m ground-truth parameter samples (row-major m x 1).
std::vector<double> example1_param_samples(RngStream& rng, int m);

// Example 3: kinetic parameters k = k0 + c_scale * k0 .* (A ktilde) with a
// dataset-level random A; initial conditions ~ N(1, 0.05^2)^8.
struct Example3Setup {
  Array A;  // 7 x 7
  std::vector<double> k0;
  double c_scale = 0.0;
};
Example3Setup example3_setup(std::uint64_t seed, double c_scale);
std::vector<double> example3_sample_params(const Example3Setup& setup, RngStream& rng, int m);
TrajectoryBatch example3_data(std::uint64_t seed, int n, const TimeGrid& grid, double c_scale);

// Example 4: jump-diffusion with s ~ sigma0*N(1,1), xi ~ N(beta0, sigma1^2),
// X0 ~ N(2, sigma2^2); the recorded parameter vector is (|s|, xi).
struct Example4Params {
  double sigma0 = 0.3;
  double beta0 = 0.3;
  double sigma1 = 0.1;
  double sigma2 = 0.1;
  double intensity = 1.0;
};
std::vector<double> example4_param_samples(const Example4Params& p, RngStream& rng, int m);
TrajectoryBatch example4_data(std::uint64_t seed, int n, const TimeGrid& grid,
                              const Example4Params& p);

// CSV: header `traj_id,t,x_0,...,x_{d-1}`, one row per (trajectory, time),
// 17 significant digits.
void write_trajectories_csv(const TrajectoryBatch& batch, std::ostream& out);
TrajectoryBatch read_trajectories_csv(std::istream& in);

}  // namespace pdr::dyn
