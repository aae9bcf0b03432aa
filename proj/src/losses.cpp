#include "pdr/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include <json.hpp>

namespace pdr::losses {

namespace {

void check_batches(ad::Tape& tape, const dyn::TrajectoryBatch& obs, const dyn::TapedBatch& pred) {
  if (!(obs.grid == pred.grid)) throw ShapeError("losses: batches must share the time grid");
  if (obs.n != pred.n || obs.n < 1) throw ShapeError("losses: batches must share the sample count");
  if (obs.d != pred.d) throw ShapeError("losses: batches must share the state dimension");
  if (obs.grid.n_steps < 1) throw ShapeError("losses: need at least one time step");
  if (pred.states.size() != static_cast<std::size_t>(pred.grid.n_points()))
    throw ShapeError("losses: pred batch is missing states");
  if (pred.states[0].tape() != &tape)
    throw ShapeError("losses: pred batch must live on the given tape");
}

// Chain-adds the terms left to right so the sum has a fixed association,
// then divides by the count.
ad::Var ordered_mean(const std::vector<ad::Var>& terms) {
  ad::Var acc = terms[0];
  for (std::size_t k = 1; k < terms.size(); ++k) acc = ad::add(acc, terms[k]);
  return ad::scale(acc, 1.0 / static_cast<double>(terms.size()));
}

}  // namespace

LossKind loss_from_name(const std::string& name) {
  if (name == "local-w2") return LossKind::LocalW2;
  if (name == "w2") return LossKind::W2;
  if (name == "mmd") return LossKind::Mmd;
  if (name == "mse") return LossKind::Mse;
  if (name == "mean-var") return LossKind::MeanVar;
  throw ConfigError("unknown loss: " + name);
}

std::string loss_name(LossKind kind) {
  switch (kind) {
    case LossKind::LocalW2: return "local-w2";
    case LossKind::W2: return "w2";
    case LossKind::Mmd: return "mmd";
    case LossKind::Mse: return "mse";
    case LossKind::MeanVar: return "mean-var";
  }
  throw ConfigError("unknown loss kind");
}

NeighborhoodIndex build_neighborhoods(const std::vector<double>& initial_states, int n, int d,
                                      double delta) {
  if (n < 1 || d < 1) throw ShapeError("build_neighborhoods: need at least one point");
  if (initial_states.size() != static_cast<std::size_t>(n) * d)
    throw ShapeError("build_neighborhoods: initial_states must be n x d");
  if (std::isnan(delta) || delta < 0.0)
    throw ConfigError("build_neighborhoods: delta must be >= 0");

  NeighborhoodIndex idx;
  idx.delta = delta;
  idx.groups.resize(n);
  const double d2 = delta * delta;
  for (int j = 0; j < n; ++j) {
    const double* pj = initial_states.data() + static_cast<std::size_t>(j) * d;
    for (int i = 0; i < n; ++i) {
      const double* pi = initial_states.data() + static_cast<std::size_t>(i) * d;
      double s = 0.0;
      for (int k = 0; k < d; ++k) {
        const double diff = pi[k] - pj[k];
        s += diff * diff;
      }
      if (s <= d2) idx.groups[j].push_back(i);
    }
  }

  idx.rep.resize(n);
  std::map<std::vector<int>, int> seen;
  for (int j = 0; j < n; ++j) {
    const auto [it, fresh] = seen.try_emplace(idx.groups[j], j);
    idx.rep[j] = fresh ? j : it->second;
  }
  return idx;
}

double median_pairwise_distance(const dyn::TrajectoryBatch& obs) {
  if (obs.grid.n_steps < 1) throw ShapeError("median_pairwise_distance: need a time step");
  std::vector<double> dists;
  dists.reserve(static_cast<std::size_t>(obs.n) * (obs.n - 1) / 2);
  for (int a = 0; a < obs.n; ++a) {
    for (int b = a + 1; b < obs.n; ++b) {
      double s = 0.0;
      for (int k = 0; k < obs.d; ++k) {
        const double diff = obs.state(a, 1, k) - obs.state(b, 1, k);
        s += diff * diff;
      }
      dists.push_back(std::sqrt(s));
    }
  }
  if (dists.empty()) return 1.0;
  const std::size_t mid = (dists.size() - 1) / 2;
  std::nth_element(dists.begin(), dists.begin() + mid, dists.end());
  const double med = dists[mid];
  return med > 0.0 ? med : 1.0;
}

LossReport local_w2_loss(ad::Tape& tape, const dyn::TrajectoryBatch& obs,
                         const dyn::TapedBatch& pred, const NeighborhoodIndex& nbhd,
                         LocalW2Workspace* warm) {
  check_batches(tape, obs, pred);
  const int N = obs.n, d = obs.d, n_steps = obs.grid.n_steps;
  if (nbhd.groups.size() != static_cast<std::size_t>(N) ||
      nbhd.rep.size() != static_cast<std::size_t>(N))
    throw ShapeError("local_w2_loss: neighborhood index does not match the batch");

  const bool use_warm = warm != nullptr && d > 1;  // the 1-D rank match needs no cache
  if (use_warm) {
    if (warm->states.empty()) {
      warm->n_steps = n_steps;
      warm->n = N;
      warm->states.resize(static_cast<std::size_t>(n_steps) * N);
    } else if (warm->n_steps != n_steps || warm->n != N) {
      throw ShapeError("local_w2_loss: workspace shaped for a different batch");
    }
  }

  LossReport report;
  report.per_time.reserve(n_steps);
  report.per_anchor.assign(N, 0.0);
  std::vector<ad::Var> time_terms;
  time_terms.reserve(n_steps);

  ot::GroupSolver solver;
  std::vector<ot::TransportPlan> plans(N);
  std::vector<double> a1d, b1d;
  std::vector<int> cols;
  for (int t = 1; t <= n_steps; ++t) {
    const Array obs_t = obs.states_at(t);
    const ad::Var& pred_t = pred.states[t];
    // Copied: recording nodes below may grow the tape and move stored values.
    const Array pred_v = pred_t.value();
    if (d > 1) solver.set_time(obs_t, pred_v, !use_warm);

    ad::Var acc;
    for (int j = 0; j < N; ++j) {
      const std::vector<int>& g = nbhd.groups[j];
      if (nbhd.rep[j] == j) {
        if (d == 1) {
          const int m = static_cast<int>(g.size());
          a1d.resize(m);
          b1d.resize(m);
          for (int s = 0; s < m; ++s) {
            a1d[s] = obs_t.at(0, g[s]);
            b1d[s] = pred_v.at(0, g[s]);
          }
          plans[j] = ot::w2sq_1d(a1d, b1d);
        } else if (use_warm) {
          ot::WarmState& st = warm->states[static_cast<std::size_t>(t - 1) * N + j];
          plans[j] = solver.solve_warm(g, st);
        } else {
          plans[j] = solver.solve(g);
        }
      }
      const ot::TransportPlan& plan = plans[nbhd.rep[j]];
      const int m = static_cast<int>(g.size());
      Array ref = Array::mat(d, m);
      for (int s = 0; s < m; ++s)
        for (int k = 0; k < d; ++k) ref.at(k, s) = obs_t.at(k, g[s]);
      cols.resize(m);
      for (int s = 0; s < m; ++s) cols[s] = g[plan.perm[s]];
      const ad::Var w2 = ad::matched_sq_cost(pred_t, cols, ref);
      report.per_anchor[j] += w2.value()[0];
      acc = j == 0 ? w2 : ad::add(acc, w2);
    }
    const ad::Var term = ad::scale(acc, 1.0 / static_cast<double>(N));
    report.per_time.push_back(term.value()[0]);
    time_terms.push_back(term);
  }
  for (double& a : report.per_anchor) a /= static_cast<double>(n_steps);
  report.total = ordered_mean(time_terms);
  return report;
}

LossReport time_decoupled_w2_loss(ad::Tape& tape, const dyn::TrajectoryBatch& obs,
                                  const dyn::TapedBatch& pred) {
  check_batches(tape, obs, pred);
  const int N = obs.n, d = obs.d, n_steps = obs.grid.n_steps;

  LossReport report;
  report.per_time.reserve(n_steps);
  std::vector<ad::Var> time_terms;
  time_terms.reserve(n_steps);

  std::vector<double> pts_obs(static_cast<std::size_t>(N) * d);
  std::vector<double> pts_pred(static_cast<std::size_t>(N) * d);
  for (int t = 1; t <= n_steps; ++t) {
    const ad::Var& pred_t = pred.states[t];
    const Array pred_v = pred_t.value();
    Array ref = Array::mat(d, N);
    for (int i = 0; i < N; ++i) {
      for (int k = 0; k < d; ++k) {
        const double ov = obs.state(i, t, k);
        pts_obs[static_cast<std::size_t>(i) * d + k] = ov;
        pts_pred[static_cast<std::size_t>(i) * d + k] = pred_v.at(k, i);
        ref.at(k, i) = ov;
      }
    }
    const ot::TransportPlan plan =
        d == 1 ? ot::w2sq_1d(pts_obs, pts_pred)
               : ot::w2sq(ot::make_cloud(pts_obs, N, d), ot::make_cloud(pts_pred, N, d));
    const ad::Var term = ad::matched_sq_cost(pred_t, plan.perm, ref);
    report.per_time.push_back(term.value()[0]);
    time_terms.push_back(term);
  }
  report.total = ordered_mean(time_terms);
  return report;
}

LossReport mmd_loss(ad::Tape& tape, const dyn::TrajectoryBatch& obs, const dyn::TapedBatch& pred,
                    const KernelConfig& kernel) {
  check_batches(tape, obs, pred);
  if (!(kernel.h0 > 0.0) || !std::isfinite(kernel.h0))
    throw ConfigError("mmd: base bandwidth must be positive");
  if (kernel.count < 1) throw ConfigError("mmd: need at least one kernel");
  if (!(kernel.multiplier > 0.0)) throw ConfigError("mmd: multiplier must be positive");
  const int n_steps = obs.grid.n_steps;

  std::vector<double> bands(kernel.count);
  double h = kernel.h0;
  for (int k = 0; k < kernel.count; ++k) {
    bands[k] = h;
    h *= kernel.multiplier;
  }

  LossReport report;
  report.per_time.reserve(n_steps);
  std::vector<ad::Var> time_terms;
  time_terms.reserve(n_steps);
  for (int t = 1; t <= n_steps; ++t) {
    const ad::Var obs_c = tape.constant(obs.states_at(t));
    const ad::Var& pred_t = pred.states[t];
    const ad::Var mxx = ad::mean(ad::rbf_ksum(ad::pair_sqdist(obs_c, obs_c), bands));
    const ad::Var mxy = ad::mean(ad::rbf_ksum(ad::pair_sqdist(obs_c, pred_t), bands));
    const ad::Var myy = ad::mean(ad::rbf_ksum(ad::pair_sqdist(pred_t, pred_t), bands));
    const ad::Var term = ad::add(ad::sub(mxx, ad::scale(mxy, 2.0)), myy);
    report.per_time.push_back(term.value()[0]);
    time_terms.push_back(term);
  }
  report.total = ordered_mean(time_terms);
  return report;
}

LossReport mse_loss(ad::Tape& tape, const dyn::TrajectoryBatch& obs, const dyn::TapedBatch& pred) {
  check_batches(tape, obs, pred);
  const int N = obs.n, n_steps = obs.grid.n_steps;

  LossReport report;
  report.per_time.reserve(n_steps);
  std::vector<ad::Var> time_terms;
  time_terms.reserve(n_steps);
  for (int t = 1; t <= n_steps; ++t) {
    const ad::Var diff = ad::sub(pred.states[t], tape.constant(obs.states_at(t)));
    const ad::Var term = ad::scale(ad::sum(ad::square(diff)), 1.0 / static_cast<double>(N));
    report.per_time.push_back(term.value()[0]);
    time_terms.push_back(term);
  }
  report.total = ordered_mean(time_terms);
  return report;
}

LossReport mean_var_loss(ad::Tape& tape, const dyn::TrajectoryBatch& obs,
                         const dyn::TapedBatch& pred) {
  check_batches(tape, obs, pred);
  const int N = obs.n, d = obs.d, n_steps = obs.grid.n_steps;

  const ad::Var ones_col = tape.constant(Array::mat(N, 1, 1.0));
  const ad::Var ones_row = tape.constant(Array::mat(1, N, 1.0));

  LossReport report;
  report.per_time.reserve(n_steps);
  std::vector<ad::Var> time_terms;
  time_terms.reserve(n_steps);
  for (int t = 1; t <= n_steps; ++t) {
    const Array obs_t = obs.states_at(t);
    const ad::Var& pred_t = pred.states[t];
    const ad::Var mse_term =
        ad::scale(ad::sum(ad::square(ad::sub(pred_t, tape.constant(obs_t)))),
                  1.0 / static_cast<double>(N));

    const ad::Var mu = ad::scale(ad::matmul(pred_t, ones_col), 1.0 / static_cast<double>(N));
    const ad::Var centered = ad::sub(pred_t, ad::matmul(mu, ones_row));
    const ad::Var var_pred = ad::matmul(ad::square(centered), ones_col);

    // The observed variance mirrors the taped association exactly, so
    // identical clouds produce a bitwise-zero gap.
    Array var_obs = Array::mat(d, 1);
    for (int k = 0; k < d; ++k) {
      double msum = 0.0;
      for (int i = 0; i < N; ++i) msum += obs_t.at(k, i);
      const double m = msum * (1.0 / static_cast<double>(N));
      double acc = 0.0;
      for (int i = 0; i < N; ++i) {
        const double dev = obs_t.at(k, i) - m;
        acc += dev * dev;
      }
      var_obs.at(k, 0) = acc;
    }
    const ad::Var gap = ad::sum(ad::abs(ad::sub(var_pred, tape.constant(var_obs))));
    const ad::Var term = ad::add(mse_term, gap);
    report.per_time.push_back(term.value()[0]);
    time_terms.push_back(term);
  }
  report.total = ordered_mean(time_terms);
  return report;
}

LossReport compute_loss(ad::Tape& tape, LossKind kind, const dyn::TrajectoryBatch& obs,
                        const dyn::TapedBatch& pred, const LossContext& ctx) {
  switch (kind) {
    case LossKind::LocalW2:
      if (ctx.nbhd == nullptr) throw ConfigError("local-w2 requires a neighborhood index");
      return local_w2_loss(tape, obs, pred, *ctx.nbhd, ctx.warm);
    case LossKind::W2: return time_decoupled_w2_loss(tape, obs, pred);
    case LossKind::Mmd: return mmd_loss(tape, obs, pred, ctx.kernel);
    case LossKind::Mse: return mse_loss(tape, obs, pred);
    case LossKind::MeanVar: return mean_var_loss(tape, obs, pred);
  }
  throw ConfigError("unknown loss kind");
}

std::string report_to_json(const LossReport& report) {
  nlohmann::json j;
  j["loss"] = report.total.valid() ? report.total.value()[0] : 0.0;
  j["per_time"] = report.per_time;
  j["per_anchor"] = report.per_anchor;
  return j.dump();
}

}  // namespace pdr::losses
