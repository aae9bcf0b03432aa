#include "pdr/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

namespace pdr::dyn {

namespace {

void check_state(const ad::Var& x, int step) {
  const Array& v = x.value();
  for (std::size_t i = 0; i < v.size(); ++i)
    if (!std::isfinite(v[i]))
      throw IntegrationDiverged("integration diverged at step " + std::to_string(step),
                                static_cast<int>(i % v.cols()), step);
}

}  // namespace

Array TrajectoryBatch::states_at(int t) const {
  Array m = Array::mat(d, n);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < d; ++k) m.at(k, i) = state(i, t, k);
  return m;
}

TapedBatch rk4_integrate_batch(ad::Tape& tape, const ModelSpec& model, const Array& x0_cols,
                               const ad::Var& theta, const TimeGrid& grid) {
  if (model.kind != ModelSpec::Kind::Ode) throw ConfigError("rk4: model is not an ODE");
  grid.validate();
  if (x0_cols.rank() != 2 || static_cast<int>(x0_cols.rows()) != model.state_dim)
    throw ShapeError("rk4: x0 must be {d, n}");
  const Array& tv = theta.value();
  if (tv.rank() != 2 || static_cast<int>(tv.rows()) != model.param_dim ||
      tv.cols() != x0_cols.cols())
    throw ShapeError("rk4: theta must be {param_dim, n}");

  TapedBatch out;
  out.grid = grid;
  out.d = model.state_dim;
  out.n = static_cast<int>(x0_cols.cols());
  out.states.reserve(static_cast<std::size_t>(grid.n_points()));

  const double dt = grid.dt;
  ad::Var x = tape.constant(x0_cols);
  out.states.push_back(x);
  for (int step = 0; step < grid.n_steps; ++step) {
    const double t = grid.time(step);
    const ad::Var k1 = model.drift(tape, x, t, theta);
    const ad::Var k2 = model.drift(tape, ad::add(x, ad::scale(k1, dt / 2)), t + dt / 2, theta);
    const ad::Var k3 = model.drift(tape, ad::add(x, ad::scale(k2, dt / 2)), t + dt / 2, theta);
    const ad::Var k4 = model.drift(tape, ad::add(x, ad::scale(k3, dt)), t + dt, theta);
    const ad::Var slope = ad::add(ad::add(k1, ad::scale(k2, 2.0)), ad::add(ad::scale(k3, 2.0), k4));
    x = ad::add(x, ad::scale(slope, dt / 6));
    check_state(x, step + 1);
    out.states.push_back(x);
  }
  return out;
}

std::vector<ad::Var> rk4_integrate(ad::Tape& tape, const ModelSpec& model, const Array& x0,
                                   const ad::Var& theta, const TimeGrid& grid) {
  Array cols = Array::mat(x0.size(), 1);
  for (std::size_t k = 0; k < x0.size(); ++k) cols.at(k, 0) = x0[k];
  return rk4_integrate_batch(tape, model, cols, theta, grid).states;
}

std::vector<ad::Var> em_jump_integrate(ad::Tape& tape, const ModelSpec& model, const Array& x0,
                                       const ad::Var& theta, const TimeGrid& grid,
                                       RngStream& rng) {
  if (model.kind != ModelSpec::Kind::JumpDiffusion)
    throw ConfigError("em_jump: model is not a jump-diffusion");
  grid.validate();
  if (model.jump.intensity < 0.0) throw ConfigError("em_jump: negative jump intensity");
  if (static_cast<int>(x0.size()) != model.state_dim)
    throw ShapeError("em_jump: x0 must have length state_dim");

  Array x0_col = Array::mat(model.state_dim, 1);
  for (std::size_t k = 0; k < x0.size(); ++k) x0_col.at(k, 0) = x0[k];

  const double dt = grid.dt;
  const double gamma = model.jump.intensity;
  const double sqrt_dt = std::sqrt(dt);

  std::vector<ad::Var> path;
  path.reserve(static_cast<std::size_t>(grid.n_points()));
  ad::Var x = tape.constant(x0_col);
  path.push_back(x);
  for (int step = 0; step < grid.n_steps; ++step) {
    const double t = grid.time(step);
    ad::Var next = ad::add(x, ad::scale(model.drift(tape, x, t, theta), dt));
    if (model.noise_dim > 0 && model.diffusion) {
      Array db = Array::mat(model.noise_dim, 1);
      for (int k = 0; k < model.noise_dim; ++k) db.at(k, 0) = sqrt_dt * rng.normal();
      next = ad::add(next, ad::matmul(model.diffusion(tape, x, t, theta), tape.constant(db)));
    }
    if (gamma > 0.0 && model.jump.magnitude) {
      const long count = rng.poisson(gamma * dt);
      for (long j = 0; j < count; ++j) {
        const std::vector<double> mark =
            model.jump.sample_mark ? model.jump.sample_mark(rng) : std::vector<double>{};
        next = ad::add(next, model.jump.magnitude(tape, x, mark, t, theta));
      }
      ad::Var comp;
      if (model.jump.mean_magnitude) {
        comp = model.jump.mean_magnitude(tape, x, t, theta);
      } else {
        const int draws = model.jump.mc_compensator_draws;
        for (int j = 0; j < draws; ++j) {
          const std::vector<double> mark =
              model.jump.sample_mark ? model.jump.sample_mark(rng) : std::vector<double>{};
          const ad::Var beta = model.jump.magnitude(tape, x, mark, t, theta);
          comp = comp.valid() ? ad::add(comp, beta) : beta;
        }
        comp = ad::scale(comp, 1.0 / draws);
      }
      next = ad::sub(next, ad::scale(comp, gamma * dt));
    }
    x = next;
    check_state(x, step + 1);
    path.push_back(x);
  }
  return path;
}

TapedBatch simulate_batch_taped(ad::Tape& tape, const ModelSpec& model, const Array& x0_cols,
                                const ad::Var& theta, const TimeGrid& grid, RngStream& rng) {
  if (model.kind == ModelSpec::Kind::Ode)
    return rk4_integrate_batch(tape, model, x0_cols, theta, grid);

  const int n = static_cast<int>(x0_cols.cols());
  if (static_cast<int>(x0_cols.rows()) != model.state_dim)
    throw ShapeError("simulate: x0 must be {d, n}");
  std::vector<std::vector<ad::Var>> paths;
  paths.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Array x0 = Array::vec(model.state_dim);
    for (int k = 0; k < model.state_dim; ++k) x0[k] = x0_cols.at(k, i);
    const ad::Var theta_i = ad::gather_cols(theta, {i});
    RngStream traj_rng = rng.child(static_cast<std::uint64_t>(i));
    try {
      paths.push_back(em_jump_integrate(tape, model, x0, theta_i, grid, traj_rng));
    } catch (const IntegrationDiverged& e) {
      throw IntegrationDiverged(std::string(e.what()) + " (trajectory " + std::to_string(i) + ")",
                                i, e.step);
    }
  }

  TapedBatch out;
  out.grid = grid;
  out.d = model.state_dim;
  out.n = n;
  out.states.reserve(static_cast<std::size_t>(grid.n_points()));
  std::vector<ad::Var> cols(static_cast<std::size_t>(n));
  for (int t = 0; t < grid.n_points(); ++t) {
    for (int i = 0; i < n; ++i) cols[static_cast<std::size_t>(i)] = paths[static_cast<std::size_t>(i)][static_cast<std::size_t>(t)];
    out.states.push_back(ad::stack_cols(cols));
  }
  return out;
}

TrajectoryBatch simulate_batch_plain(const ModelSpec& model,
                                     const std::vector<double>& initial_states,
                                     const std::vector<double>& params, int n,
                                     const TimeGrid& grid, RngStream& rng) {
  if (initial_states.size() != static_cast<std::size_t>(n) * model.state_dim)
    throw ShapeError("simulate: initial_states must be n x d");
  if (params.size() != static_cast<std::size_t>(n) * model.param_dim)
    throw ShapeError("simulate: params must be n x param_dim");

  TrajectoryBatch batch;
  batch.grid = grid;
  batch.n = n;
  batch.d = model.state_dim;
  batch.param_dim = model.param_dim;
  batch.initial_states = initial_states;
  batch.params = params;
  batch.states.resize(static_cast<std::size_t>(n) * grid.n_points() * model.state_dim);

  // One trajectory at a time on a reused scratch tape to bound memory.
  ad::Tape tape;
  for (int i = 0; i < n; ++i) {
    tape.reset();
    Array x0 = Array::mat(model.state_dim, 1);
    for (int k = 0; k < model.state_dim; ++k)
      x0.at(k, 0) = initial_states[static_cast<std::size_t>(i) * model.state_dim + k];
    Array th = Array::mat(model.param_dim, 1);
    for (int k = 0; k < model.param_dim; ++k)
      th.at(k, 0) = params[static_cast<std::size_t>(i) * model.param_dim + k];
    const ad::Var theta = tape.constant(th);

    std::vector<ad::Var> path;
    if (model.kind == ModelSpec::Kind::Ode) {
      try {
        path = rk4_integrate_batch(tape, model, x0, theta, grid).states;
      } catch (const IntegrationDiverged& e) {
        throw IntegrationDiverged(std::string(e.what()) + " (trajectory " + std::to_string(i) + ")",
                                  i, e.step);
      }
    } else {
      Array x0_vec = Array::vec(model.state_dim);
      for (int k = 0; k < model.state_dim; ++k) x0_vec[k] = x0.at(k, 0);
      RngStream traj_rng = rng.child(static_cast<std::uint64_t>(i));
      try {
        path = em_jump_integrate(tape, model, x0_vec, theta, grid, traj_rng);
      } catch (const IntegrationDiverged& e) {
        throw IntegrationDiverged(std::string(e.what()) + " (trajectory " + std::to_string(i) + ")",
                                  i, e.step);
      }
    }
    for (int t = 0; t < grid.n_points(); ++t)
      for (int k = 0; k < model.state_dim; ++k)
        batch.state(i, t, k) = path[static_cast<std::size_t>(t)].value().at(k, 0);
  }
  return batch;
}

ModelSpec lotka_volterra() {
  ModelSpec m;
  m.kind = ModelSpec::Kind::Ode;
  m.name = "lotka_volterra";
  m.state_dim = 2;
  m.param_dim = 1;
  m.drift = [](ad::Tape&, const ad::Var& x, double, const ad::Var& theta) {
    const ad::Var prey = ad::gather(x, {0});
    const ad::Var pred = ad::gather(x, {1});
    const ad::Var prod = ad::mul(prey, pred);
    const ad::Var d_prey = ad::sub(ad::scale(prey, 2.0), ad::mul(theta, prod));
    const ad::Var d_pred = ad::sub(ad::scale(ad::mul(theta, prod), 0.25), ad::scale(pred, 2.0));
    const ad::Var rows[] = {d_prey, d_pred};
    return ad::stack_rows(rows);
  };
  return m;
}

ModelSpec ocular8d() {
  constexpr double v_vit_vol = 2.05;   // mL
  constexpr double v_aq_vol = 0.105;   // mL
  constexpr double v_in = 5.408;       // pmol / day
  constexpr double vol_ratio = v_vit_vol / v_aq_vol;

  ModelSpec m;
  m.kind = ModelSpec::Kind::Ode;
  m.name = "ocular8d";
  m.state_dim = 8;
  m.param_dim = 7;
  m.drift = [](ad::Tape& tape, const ad::Var& x, double, const ad::Var& theta) {
    // state rows: v_vit, r_vit, c_vit, h_vit, v_aq, r_aq, c_aq, h_aq
    // theta rows: k_off, k_on, k_v_el, k_r_el, k_c_el, k_h_el, CL
    const ad::Var vv = ad::gather(x, {0}), rv = ad::gather(x, {1});
    const ad::Var cv = ad::gather(x, {2}), hv = ad::gather(x, {3});
    const ad::Var va = ad::gather(x, {4}), ra = ad::gather(x, {5});
    const ad::Var ca = ad::gather(x, {6}), ha = ad::gather(x, {7});
    const ad::Var koff = ad::gather(theta, {0}), kon = ad::gather(theta, {1});
    const ad::Var kv = ad::gather(theta, {2}), kr = ad::gather(theta, {3});
    const ad::Var kc = ad::gather(theta, {4}), kh = ad::gather(theta, {5});
    const ad::Var cl = ad::gather(theta, {6});

    // binding/unbinding fluxes in each compartment
    const ad::Var r1v = ad::sub(ad::mul(koff, cv), ad::scale(ad::mul(kon, ad::mul(vv, rv)), 2.0));
    const ad::Var r2v = ad::sub(ad::scale(ad::mul(koff, hv), 2.0), ad::mul(kon, ad::mul(rv, cv)));
    const ad::Var r1a = ad::sub(ad::mul(koff, ca), ad::scale(ad::mul(kon, ad::mul(va, ra)), 2.0));
    const ad::Var r2a = ad::sub(ad::scale(ad::mul(koff, ha), 2.0), ad::mul(kon, ad::mul(ra, ca)));

    const ad::Var influx = tape.constant(Array::mat(1, x.value().cols(), v_in / v_vit_vol));

    const ad::Var d_vv = ad::add(ad::sub(r1v, ad::mul(kv, vv)), influx);
    const ad::Var d_rv = ad::sub(ad::add(r1v, r2v), ad::mul(kr, rv));
    const ad::Var d_cv = ad::sub(ad::sub(r2v, r1v), ad::mul(kc, cv));
    const ad::Var d_hv = ad::scale(ad::add(r2v, ad::mul(kh, hv)), -1.0);

    const auto clearance = [&](const ad::Var& conc) {
      return ad::scale(ad::mul(cl, conc), 1.0 / v_aq_vol);
    };
    const ad::Var d_va =
        ad::sub(ad::add(r1a, ad::scale(ad::mul(kv, vv), vol_ratio)), clearance(va));
    const ad::Var d_ra = ad::sub(
        ad::add(ad::add(r1a, r2a), ad::scale(ad::mul(kr, rv), vol_ratio)), clearance(ra));
    const ad::Var d_ca = ad::sub(
        ad::add(ad::sub(r2a, r1a), ad::scale(ad::mul(kc, cv), vol_ratio)), clearance(ca));
    const ad::Var d_ha =
        ad::sub(ad::sub(ad::scale(ad::mul(kh, hv), vol_ratio), r2a), clearance(ha));

    const ad::Var rows[] = {d_vv, d_rv, d_cv, d_hv, d_va, d_ra, d_ca, d_ha};
    return ad::stack_rows(rows);
  };
  return m;
}

ModelSpec merton_jd() {
  ModelSpec m;
  m.kind = ModelSpec::Kind::JumpDiffusion;
  m.name = "merton_jd";
  m.state_dim = 1;
  m.param_dim = 2;  // (s, xi)
  m.noise_dim = 1;
  m.drift = [](ad::Tape& tape, const ad::Var& x, double, const ad::Var&) {
    return tape.constant(Array::mat(1, x.value().cols(), 0.05));
  };
  m.diffusion = [](ad::Tape&, const ad::Var& x, double, const ad::Var& theta) {
    return ad::mul(ad::gather(theta, {0}), ad::sqrt(ad::abs(x)));
  };
  m.jump.intensity = 1.0;
  m.jump.magnitude = [](ad::Tape&, const ad::Var& x, const std::vector<double>&, double,
                        const ad::Var& theta) { return ad::mul(ad::gather(theta, {1}), x); };
  m.jump.mean_magnitude = [](ad::Tape&, const ad::Var& x, double, const ad::Var& theta) {
    return ad::mul(ad::gather(theta, {1}), x);
  };
  return m;
}

ModelSpec user_ode(std::string name, int state_dim, int param_dim, FieldFn drift) {
  ModelSpec m;
  m.kind = ModelSpec::Kind::Ode;
  m.name = std::move(name);
  m.state_dim = state_dim;
  m.param_dim = param_dim;
  m.drift = std::move(drift);
  return m;
}

TrajectoryBatch example1_data(std::uint64_t seed, int n, const TimeGrid& grid) {
  RngStream root(seed);
  std::vector<double> x0s(static_cast<std::size_t>(n) * 2);
  std::vector<double> params(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    RngStream traj = root.child(static_cast<std::uint64_t>(i));
    params[static_cast<std::size_t>(i)] = traj.uniform(2.0, 4.0);
    x0s[static_cast<std::size_t>(i) * 2] = traj.uniform(1.0, 2.0);
    x0s[static_cast<std::size_t>(i) * 2 + 1] = traj.uniform(1.0, 2.0);
  }
  RngStream noise = root.child(1u << 20);  // unused for an ODE, kept for a uniform call shape
  return simulate_batch_plain(lotka_volterra(), x0s, params, n, grid, noise);
}

std::vector<double> example1_param_samples(RngStream& rng, int m) {
  std::vector<double> out(static_cast<std::size_t>(m));
  for (double& v : out) v = rng.uniform(2.0, 4.0);
  return out;
}

Example3Setup example3_setup(std::uint64_t seed, double c_scale) {
  Example3Setup setup;
  setup.c_scale = c_scale;
  setup.k0 = {1.669, 0.00114, 0.575, 0.293, 0.259, 0.176, 2.505};
  setup.A = Array::mat(7, 7);
  RngStream a_rng = RngStream(seed).child(1);
  for (std::size_t i = 0; i < setup.A.size(); ++i) setup.A[i] = a_rng.uniform(-0.5, 0.5);
  return setup;
}

std::vector<double> example3_sample_params(const Example3Setup& setup, RngStream& rng, int m) {
  std::vector<double> out(static_cast<std::size_t>(m) * 7);
  std::vector<double> kt(7);
  for (int s = 0; s < m; ++s) {
    kt[0] = rng.uniform(0.0, 1.0);
    kt[1] = rng.uniform(0.0, 1.0);
    kt[2] = rng.normal(0.0, 0.5);
    kt[3] = rng.normal(0.0, 0.5);
    kt[4] = rng.exponential(2.0);
    kt[5] = rng.beta(2.0, 5.0);
    kt[6] = rng.gamma(2.0, 2.0);
    for (int j = 0; j < 7; ++j) {
      double av = 0.0;
      for (int c = 0; c < 7; ++c) av += setup.A.at(j, c) * kt[static_cast<std::size_t>(c)];
      out[static_cast<std::size_t>(s) * 7 + j] =
          setup.k0[static_cast<std::size_t>(j)] * (1.0 + setup.c_scale * av);
    }
  }
  return out;
}

TrajectoryBatch example3_data(std::uint64_t seed, int n, const TimeGrid& grid, double c_scale) {
  const Example3Setup setup = example3_setup(seed, c_scale);
  RngStream root(seed);
  std::vector<double> x0s(static_cast<std::size_t>(n) * 8);
  std::vector<double> params(static_cast<std::size_t>(n) * 7);
  for (int i = 0; i < n; ++i) {
    RngStream traj = root.child(2).child(static_cast<std::uint64_t>(i));
    const std::vector<double> k = example3_sample_params(setup, traj, 1);
    std::copy(k.begin(), k.end(), params.begin() + static_cast<std::size_t>(i) * 7);
    for (int c = 0; c < 8; ++c)
      x0s[static_cast<std::size_t>(i) * 8 + c] = traj.normal(1.0, 0.05);
  }
  RngStream noise = root.child(3);
  return simulate_batch_plain(ocular8d(), x0s, params, n, grid, noise);
}

std::vector<double> example4_param_samples(const Example4Params& p, RngStream& rng, int m) {
  std::vector<double> out(static_cast<std::size_t>(m) * 2);
  for (int s = 0; s < m; ++s) {
    out[static_cast<std::size_t>(s) * 2] = std::abs(p.sigma0 * rng.normal(1.0, 1.0));
    out[static_cast<std::size_t>(s) * 2 + 1] = rng.normal(p.beta0, p.sigma1);
  }
  return out;
}

TrajectoryBatch example4_data(std::uint64_t seed, int n, const TimeGrid& grid,
                              const Example4Params& p) {
  RngStream root(seed);
  std::vector<double> x0s(static_cast<std::size_t>(n));
  std::vector<double> params(static_cast<std::size_t>(n) * 2);
  for (int i = 0; i < n; ++i) {
    RngStream traj = root.child(1).child(static_cast<std::uint64_t>(i));
    const std::vector<double> sv = example4_param_samples(p, traj, 1);
    params[static_cast<std::size_t>(i) * 2] = sv[0];
    params[static_cast<std::size_t>(i) * 2 + 1] = sv[1];
    x0s[static_cast<std::size_t>(i)] = traj.normal(2.0, p.sigma2);
  }
  ModelSpec model = merton_jd();
  model.jump.intensity = p.intensity;
  RngStream noise = root.child(2);
  return simulate_batch_plain(model, x0s, params, n, grid, noise);
}

void write_trajectories_csv(const TrajectoryBatch& batch, std::ostream& out) {
  out << "traj_id,t";
  for (int k = 0; k < batch.d; ++k) out << ",x_" << k;
  out << "\n";
  char buf[40];
  for (int i = 0; i < batch.n; ++i) {
    for (int t = 0; t < batch.grid.n_points(); ++t) {
      out << i;
      std::snprintf(buf, sizeof buf, "%.17g", batch.grid.time(t));
      out << ',' << buf;
      for (int k = 0; k < batch.d; ++k) {
        std::snprintf(buf, sizeof buf, "%.17g", batch.state(i, t, k));
        out << ',' << buf;
      }
      out << "\n";
    }
  }
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

}  // namespace

TrajectoryBatch read_trajectories_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("trajectory csv: empty file");
  const std::vector<std::string> header = split_csv_line(line);
  if (header.size() < 3 || header[0] != "traj_id" || header[1] != "t")
    throw ConfigError("trajectory csv: bad header");
  const int d = static_cast<int>(header.size()) - 2;

  std::vector<double> flat;  // traj-major states
  std::vector<double> times;
  int n = 0;
  int rows_in_traj = 0;
  int expected_rows = -1;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> cells = split_csv_line(line);
    if (static_cast<int>(cells.size()) != d + 2)
      throw ConfigError("trajectory csv: wrong column count");
    const int id = std::stoi(cells[0]);
    if (id == n) {  // next trajectory begins
      if (n > 0) {
        if (expected_rows == -1) expected_rows = rows_in_traj;
        if (rows_in_traj != expected_rows)
          throw ConfigError("trajectory csv: ragged trajectories");
      }
      ++n;
      rows_in_traj = 0;
    } else if (id != n - 1) {
      throw ConfigError("trajectory csv: trajectory ids must be grouped and ascending");
    }
    const double t = std::stod(cells[1]);
    if (n == 1) times.push_back(t);
    ++rows_in_traj;
    for (int k = 0; k < d; ++k) flat.push_back(std::stod(cells[static_cast<std::size_t>(k) + 2]));
  }
  if (n == 0) throw ConfigError("trajectory csv: no data rows");
  if (expected_rows == -1) expected_rows = rows_in_traj;
  if (rows_in_traj != expected_rows) throw ConfigError("trajectory csv: ragged trajectories");
  if (expected_rows < 2) throw ConfigError("trajectory csv: need at least two timestamps");

  TrajectoryBatch batch;
  batch.grid.t0 = times[0];
  batch.grid.dt = times[1] - times[0];
  batch.grid.n_steps = expected_rows - 1;
  batch.grid.validate();
  for (std::size_t i = 0; i < times.size(); ++i) {
    const double want = batch.grid.time(static_cast<int>(i));
    if (std::abs(times[i] - want) > 1e-9 * std::max(1.0, std::abs(want)))
      throw ConfigError("trajectory csv: timestamps are not uniformly spaced");
  }
  batch.n = n;
  batch.d = d;
  batch.states = std::move(flat);
  batch.initial_states.resize(static_cast<std::size_t>(n) * d);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < d; ++k) batch.initial_states[static_cast<std::size_t>(i) * d + k] = batch.state(i, 0, k);
  return batch;
}

}  // namespace pdr::dyn
