#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include <json.hpp>

#include "pdr/losses.hpp"
#include "pdr/rng.hpp"

using namespace pdr;
using namespace pdr::losses;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

dyn::TrajectoryBatch random_obs(RngStream& rng, const dyn::TimeGrid& grid, int n, int d) {
  dyn::TrajectoryBatch b;
  b.grid = grid;
  b.n = n;
  b.d = d;
  b.param_dim = 1;
  b.states.resize(static_cast<std::size_t>(n) * grid.n_points() * d);
  for (double& v : b.states) v = rng.normal();
  b.initial_states.resize(static_cast<std::size_t>(n) * d);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < d; ++k) b.initial_states[static_cast<std::size_t>(i) * d + k] = b.state(i, 0, k);
  b.params.assign(static_cast<std::size_t>(n), 0.0);
  return b;
}

dyn::TrajectoryBatch jittered(RngStream& rng, const dyn::TrajectoryBatch& src, double sd) {
  dyn::TrajectoryBatch b = src;
  for (int i = 0; i < b.n; ++i)
    for (int t = 1; t <= b.grid.n_steps; ++t)
      for (int k = 0; k < b.d; ++k) b.state(i, t, k) += rng.normal(0.0, sd);
  return b;
}

dyn::TrajectoryBatch permuted(const dyn::TrajectoryBatch& src, const std::vector<int>& perm) {
  dyn::TrajectoryBatch b = src;
  for (int i = 0; i < b.n; ++i) {
    const int s = perm[i];
    for (int t = 0; t <= b.grid.n_steps; ++t)
      for (int k = 0; k < b.d; ++k) b.state(i, t, k) = src.state(s, t, k);
    for (int k = 0; k < b.d; ++k)
      b.initial_states[static_cast<std::size_t>(i) * b.d + k] =
          src.initial_states[static_cast<std::size_t>(s) * b.d + k];
  }
  return b;
}

dyn::TapedBatch taped(ad::Tape& tape, const dyn::TrajectoryBatch& src) {
  dyn::TapedBatch tb;
  tb.grid = src.grid;
  tb.n = src.n;
  tb.d = src.d;
  for (int t = 0; t < src.grid.n_points(); ++t) tb.states.push_back(tape.leaf(src.states_at(t)));
  return tb;
}

NeighborhoodIndex full_index(const dyn::TrajectoryBatch& obs) {
  return build_neighborhoods(obs.initial_states, obs.n, obs.d, kInf);
}

double eval_total(LossKind kind, const dyn::TrajectoryBatch& obs, const dyn::TrajectoryBatch& pred,
                  const LossContext& ctx) {
  ad::Tape tape;
  const dyn::TapedBatch tp = taped(tape, pred);
  return compute_loss(tape, kind, obs, tp, ctx).total.value()[0];
}

}  // namespace

TEST_CASE("loss names round-trip and reject unknowns") {
  for (LossKind k : {LossKind::LocalW2, LossKind::W2, LossKind::Mmd, LossKind::Mse,
                     LossKind::MeanVar})
    CHECK(loss_from_name(loss_name(k)) == k);
  CHECK(loss_name(LossKind::LocalW2) == "local-w2");
  CHECK_THROWS_AS(loss_from_name("wasserstein"), ConfigError);
  CHECK_THROWS_AS(loss_from_name(""), ConfigError);
}

TEST_CASE("neighborhoods: hand case, membership, monotonicity, dedup") {
  const std::vector<double> line = {0.0, 0.3, 1.0};
  const NeighborhoodIndex idx = build_neighborhoods(line, 3, 1, 0.4);
  REQUIRE(idx.groups.size() == 3);
  CHECK(idx.groups[0] == std::vector<int>{0, 1});
  CHECK(idx.groups[1] == std::vector<int>{0, 1});
  CHECK(idx.groups[2] == std::vector<int>{2});
  CHECK(idx.rep == std::vector<int>{0, 0, 2});

  const NeighborhoodIndex tight = build_neighborhoods(line, 3, 1, 0.0);
  for (int j = 0; j < 3; ++j) {
    CHECK(tight.groups[j] == std::vector<int>{j});
    CHECK(tight.rep[j] == j);
  }

  const NeighborhoodIndex wide = build_neighborhoods(line, 3, 1, kInf);
  for (int j = 0; j < 3; ++j) {
    CHECK(wide.groups[j] == std::vector<int>{0, 1, 2});
    CHECK(wide.rep[j] == 0);
  }

  // Boundary points are members: distance exactly delta.
  const NeighborhoodIndex edge = build_neighborhoods({0.0, 0.4}, 2, 1, 0.4);
  CHECK(edge.groups[0] == std::vector<int>{0, 1});

  RngStream rng(41);
  std::vector<double> pts(2 * 12);
  for (double& v : pts) v = rng.uniform(-1.0, 1.0);
  const NeighborhoodIndex small = build_neighborhoods(pts, 12, 2, 0.3);
  const NeighborhoodIndex big = build_neighborhoods(pts, 12, 2, 0.9);
  for (int j = 0; j < 12; ++j) {
    CHECK(std::find(small.groups[j].begin(), small.groups[j].end(), j) != small.groups[j].end());
    CHECK(std::includes(big.groups[j].begin(), big.groups[j].end(), small.groups[j].begin(),
                        small.groups[j].end()));
  }

  CHECK_THROWS_AS(build_neighborhoods(line, 3, 1, -0.1), ConfigError);
  CHECK_THROWS_AS(build_neighborhoods(line, 3, 1, std::nan("")), ConfigError);
  CHECK_THROWS_AS(build_neighborhoods({}, 0, 1, 0.5), ShapeError);
  CHECK_THROWS_AS(build_neighborhoods(line, 3, 2, 0.5), ShapeError);
}

TEST_CASE("median pairwise distance takes the lower median at the first step") {
  auto batch_at_t1 = [](std::vector<double> xs) {
    dyn::TrajectoryBatch b;
    b.grid = dyn::TimeGrid{0.0, 1.0, 1};
    b.n = static_cast<int>(xs.size());
    b.d = 1;
    b.param_dim = 1;
    b.states.resize(static_cast<std::size_t>(b.n) * 2);
    for (int i = 0; i < b.n; ++i) {
      b.state(i, 0, 0) = 0.0;
      b.state(i, 1, 0) = xs[i];
    }
    b.initial_states.assign(static_cast<std::size_t>(b.n), 0.0);
    b.params.assign(static_cast<std::size_t>(b.n), 0.0);
    return b;
  };
  CHECK(median_pairwise_distance(batch_at_t1({0.0, 1.0, 3.0})) == 2.0);
  // Six distances {1,1,2,2,3,4}; the lower median is the third smallest.
  CHECK(median_pairwise_distance(batch_at_t1({0.0, 1.0, 2.0, 4.0})) == 2.0);
  CHECK(median_pairwise_distance(batch_at_t1({5.0, 5.0})) == 1.0);  // degenerate fallback
  CHECK(median_pairwise_distance(batch_at_t1({7.0})) == 1.0);       // no pairs
}

TEST_CASE("every loss is exactly zero at identity") {
  RngStream rng(7);
  const dyn::TrajectoryBatch obs = random_obs(rng, dyn::TimeGrid{0.0, 0.5, 4}, 6, 2);
  const NeighborhoodIndex nbhd = build_neighborhoods(obs.initial_states, obs.n, obs.d, 1.0);
  LossContext ctx;
  ctx.nbhd = &nbhd;
  ctx.kernel.h0 = median_pairwise_distance(obs);
  for (LossKind k : {LossKind::LocalW2, LossKind::W2, LossKind::Mmd, LossKind::Mse,
                     LossKind::MeanVar})
    CHECK(eval_total(k, obs, obs, ctx) == 0.0);
}

TEST_CASE("W2 losses ignore pred ordering; MSE does not") {
  RngStream rng(11);
  const dyn::TrajectoryBatch obs = random_obs(rng, dyn::TimeGrid{0.0, 0.25, 3}, 7, 2);
  std::vector<int> perm(7);
  std::iota(perm.begin(), perm.end(), 0);
  std::rotate(perm.begin(), perm.begin() + 3, perm.end());
  const dyn::TrajectoryBatch shuf = permuted(obs, perm);

  const NeighborhoodIndex wide = full_index(obs);
  LossContext ctx;
  ctx.nbhd = &wide;
  ctx.kernel.h0 = median_pairwise_distance(obs);

  // pred = obs reordered: optimal transport recovers the identity coupling.
  CHECK(std::abs(eval_total(LossKind::W2, obs, shuf, ctx)) < 1e-10);
  CHECK(std::abs(eval_total(LossKind::LocalW2, obs, shuf, ctx)) < 1e-10);
  CHECK(std::abs(eval_total(LossKind::Mmd, obs, shuf, ctx)) < 1e-10);
  CHECK(eval_total(LossKind::Mse, obs, shuf, ctx) > 1e-3);

  // Invariance on genuinely different clouds, not just at zero.
  const dyn::TrajectoryBatch pred = jittered(rng, obs, 0.4);
  const dyn::TrajectoryBatch pred_shuf = permuted(pred, perm);
  CHECK(eval_total(LossKind::W2, obs, pred, ctx) ==
        doctest::Approx(eval_total(LossKind::W2, obs, pred_shuf, ctx)).epsilon(1e-10));
  CHECK(eval_total(LossKind::LocalW2, obs, pred, ctx) ==
        doctest::Approx(eval_total(LossKind::LocalW2, obs, pred_shuf, ctx)).epsilon(1e-10));
  CHECK(eval_total(LossKind::Mmd, obs, pred, ctx) ==
        doctest::Approx(eval_total(LossKind::Mmd, obs, pred_shuf, ctx)).epsilon(1e-10));
}

TEST_CASE("collapse chain: delta=inf matches the global loss, singletons match MSE") {
  RngStream rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + static_cast<int>(rng.uniform(0.0, 6.0));
    const int d = 1 + static_cast<int>(rng.uniform(0.0, 3.0));
    const int steps = 1 + static_cast<int>(rng.uniform(0.0, 4.0));
    const dyn::TrajectoryBatch obs = random_obs(rng, dyn::TimeGrid{0.0, 0.2, steps}, n, d);
    const dyn::TrajectoryBatch pred = jittered(rng, obs, 0.8);

    ad::Tape tape;
    const dyn::TapedBatch tp = taped(tape, pred);
    const NeighborhoodIndex wide = full_index(obs);
    const LossReport loc = local_w2_loss(tape, obs, tp, wide);
    const LossReport td = time_decoupled_w2_loss(tape, obs, tp);
    CHECK(loc.total.value()[0] == doctest::Approx(td.total.value()[0]).epsilon(1e-10));
    REQUIRE(loc.per_time.size() == td.per_time.size());
    for (std::size_t i = 0; i < loc.per_time.size(); ++i)
      CHECK(loc.per_time[i] == doctest::Approx(td.per_time[i]).epsilon(1e-10));

    const NeighborhoodIndex tight = build_neighborhoods(obs.initial_states, n, d, 0.0);
    const LossReport sing = local_w2_loss(tape, obs, tp, tight);
    const LossReport mse = mse_loss(tape, obs, tp);
    CHECK(sing.total.value()[0] == doctest::Approx(mse.total.value()[0]).epsilon(1e-10));
    for (std::size_t i = 0; i < sing.per_time.size(); ++i)
      CHECK(sing.per_time[i] == doctest::Approx(mse.per_time[i]).epsilon(1e-10));
  }
}

TEST_CASE("one scalar trajectory degenerates to the mean per-step squared gap") {
  dyn::TrajectoryBatch obs;
  obs.grid = dyn::TimeGrid{0.0, 1.0, 3};
  obs.n = 1;
  obs.d = 1;
  obs.param_dim = 1;
  obs.states = {1.0, 2.0, 3.0, 4.0};
  obs.initial_states = {1.0};
  obs.params = {0.0};
  dyn::TrajectoryBatch pred = obs;
  pred.states = {1.0, 2.5, 3.0, 6.0};  // gaps 0.5, 0, 2 after the initial point

  const double expect = (0.25 + 0.0 + 4.0) / 3.0;
  const NeighborhoodIndex idx = build_neighborhoods(obs.initial_states, 1, 1, 0.0);
  LossContext ctx;
  ctx.nbhd = &idx;
  CHECK(eval_total(LossKind::LocalW2, obs, pred, ctx) == doctest::Approx(expect).epsilon(1e-14));
  CHECK(eval_total(LossKind::W2, obs, pred, ctx) == doctest::Approx(expect).epsilon(1e-14));
  CHECK(eval_total(LossKind::Mse, obs, pred, ctx) == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("mse hand value and coupling bound") {
  dyn::TrajectoryBatch obs;
  obs.grid = dyn::TimeGrid{0.0, 1.0, 1};
  obs.n = 1;
  obs.d = 2;
  obs.param_dim = 1;
  obs.states = {0.0, 0.0, 0.0, 0.0};
  obs.initial_states = {0.0, 0.0};
  obs.params = {0.0};
  dyn::TrajectoryBatch pred = obs;
  pred.state(0, 1, 0) = 3.0;
  pred.state(0, 1, 1) = 4.0;
  CHECK(eval_total(LossKind::Mse, obs, pred, {}) == 25.0);

  RngStream rng(29);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + static_cast<int>(rng.uniform(0.0, 5.0));
    const dyn::TrajectoryBatch o = random_obs(rng, dyn::TimeGrid{0.0, 0.2, 3}, n, 2);
    const dyn::TrajectoryBatch p = jittered(rng, o, 1.0);
    CHECK(eval_total(LossKind::Mse, o, p, {}) >= eval_total(LossKind::W2, o, p, {}) - 1e-12);
  }
}

TEST_CASE("mean-var hand case and permutation behaviour") {
  dyn::TrajectoryBatch obs;
  obs.grid = dyn::TimeGrid{0.0, 1.0, 1};
  obs.n = 2;
  obs.d = 1;
  obs.param_dim = 1;
  obs.states = {0.5, 0.0, 0.5, 2.0};  // trajectories (0.5 -> 0) and (0.5 -> 2)
  obs.initial_states = {0.5, 0.5};
  obs.params = {0.0, 0.0};
  dyn::TrajectoryBatch pred = obs;
  pred.state(0, 1, 0) = 1.0;
  pred.state(1, 1, 0) = 1.0;
  // MSE term 1, variance gap |0 - 2| = 2.
  CHECK(eval_total(LossKind::MeanVar, obs, pred, {}) == 3.0);

  // Same cloud permuted: the variance term vanishes, the MSE term does not.
  dyn::TrajectoryBatch swapped = obs;
  swapped.state(0, 1, 0) = 2.0;
  swapped.state(1, 1, 0) = 0.0;
  CHECK(eval_total(LossKind::MeanVar, obs, swapped, {}) == 4.0);
}

TEST_CASE("mmd hand value, nonnegativity, and config validation") {
  dyn::TrajectoryBatch obs;
  obs.grid = dyn::TimeGrid{0.0, 1.0, 1};
  obs.n = 1;
  obs.d = 1;
  obs.param_dim = 1;
  obs.states = {0.0, 0.0};
  obs.initial_states = {0.0};
  obs.params = {0.0};
  dyn::TrajectoryBatch pred = obs;
  pred.state(0, 1, 0) = 1.5;

  LossContext ctx;
  ctx.kernel = KernelConfig{0.7, 2.0, 1};
  const double r = 1.5, h = 0.7;
  const double expect = 2.0 * (1.0 - std::exp(-r * r / (2.0 * h * h)));
  CHECK(eval_total(LossKind::Mmd, obs, pred, ctx) == doctest::Approx(expect).epsilon(1e-12));

  RngStream rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + static_cast<int>(rng.uniform(0.0, 6.0));
    const dyn::TrajectoryBatch o = random_obs(rng, dyn::TimeGrid{0.0, 0.2, 3}, n, 2);
    const dyn::TrajectoryBatch p = jittered(rng, o, 0.7);
    LossContext c;
    c.kernel.h0 = median_pairwise_distance(o);
    CHECK(eval_total(LossKind::Mmd, o, p, c) >= -1e-10);
  }

  ad::Tape tape;
  const dyn::TapedBatch tp = taped(tape, pred);
  CHECK_THROWS_AS(mmd_loss(tape, obs, tp, KernelConfig{0.0, 2.0, 5}), ConfigError);
  CHECK_THROWS_AS(mmd_loss(tape, obs, tp, KernelConfig{-1.0, 2.0, 5}), ConfigError);
  CHECK_THROWS_AS(mmd_loss(tape, obs, tp, KernelConfig{1.0, 2.0, 0}), ConfigError);
  CHECK_THROWS_AS(mmd_loss(tape, obs, tp, KernelConfig{1.0, 0.0, 5}), ConfigError);
}

TEST_CASE("per-time decomposition and per-anchor bookkeeping") {
  RngStream rng(37);
  const dyn::TrajectoryBatch obs = random_obs(rng, dyn::TimeGrid{0.0, 0.25, 5}, 8, 2);
  const dyn::TrajectoryBatch pred = jittered(rng, obs, 0.6);
  const NeighborhoodIndex nbhd = build_neighborhoods(obs.initial_states, obs.n, obs.d, 1.5);
  LossContext ctx;
  ctx.nbhd = &nbhd;
  ctx.kernel.h0 = median_pairwise_distance(obs);

  ad::Tape tape;
  const dyn::TapedBatch tp = taped(tape, pred);
  for (LossKind k : {LossKind::LocalW2, LossKind::W2, LossKind::Mmd, LossKind::Mse,
                     LossKind::MeanVar}) {
    const LossReport rep = compute_loss(tape, k, obs, tp, ctx);
    REQUIRE(rep.per_time.size() == 5);
    const double mean =
        std::accumulate(rep.per_time.begin(), rep.per_time.end(), 0.0) / rep.per_time.size();
    CHECK(rep.total.value()[0] == doctest::Approx(mean).epsilon(1e-12));
    if (k == LossKind::LocalW2) {
      REQUIRE(rep.per_anchor.size() == 8);
      const double amean =
          std::accumulate(rep.per_anchor.begin(), rep.per_anchor.end(), 0.0) / 8.0;
      CHECK(rep.total.value()[0] == doctest::Approx(amean).epsilon(1e-10));
    } else {
      CHECK(rep.per_anchor.empty());
    }
  }
}

TEST_CASE("anchors with identical neighborhoods reuse one plan bit-for-bit") {
  RngStream rng(43);
  dyn::TrajectoryBatch obs = random_obs(rng, dyn::TimeGrid{0.0, 0.5, 4}, 6, 2);
  // Make anchors 2 and 5 coincide at t=0 so their groups are identical.
  for (int k = 0; k < 2; ++k) {
    obs.state(5, 0, k) = obs.state(2, 0, k);
    obs.initial_states[static_cast<std::size_t>(5) * 2 + k] = obs.initial_states[2 * 2 + k];
  }
  const dyn::TrajectoryBatch pred = jittered(rng, obs, 0.5);
  const NeighborhoodIndex nbhd = build_neighborhoods(obs.initial_states, 6, 2, 0.8);
  REQUIRE(nbhd.groups[2] == nbhd.groups[5]);
  CHECK(nbhd.rep[5] == 2);

  ad::Tape tape;
  const dyn::TapedBatch tp = taped(tape, pred);
  const LossReport rep = local_w2_loss(tape, obs, tp, nbhd);
  CHECK(rep.per_anchor[2] == rep.per_anchor[5]);
}

TEST_CASE("warm plan cache reproduces cold evaluations across drifting epochs") {
  RngStream rng(47);
  const dyn::TrajectoryBatch obs = random_obs(rng, dyn::TimeGrid{0.0, 0.25, 4}, 10, 2);
  const NeighborhoodIndex nbhd = build_neighborhoods(obs.initial_states, obs.n, obs.d, 1.0);

  dyn::TrajectoryBatch pred = jittered(rng, obs, 0.5);
  LocalW2Workspace warm;
  for (int epoch = 0; epoch < 6; ++epoch) {
    ad::Tape tape;
    const dyn::TapedBatch tp = taped(tape, pred);
    const LossReport hot = local_w2_loss(tape, obs, tp, nbhd, &warm);
    const LossReport cold = local_w2_loss(tape, obs, tp, nbhd);
    CHECK(hot.total.value()[0] == doctest::Approx(cold.total.value()[0]).epsilon(1e-12));
    for (std::size_t i = 0; i < hot.per_time.size(); ++i)
      CHECK(hot.per_time[i] == doctest::Approx(cold.per_time[i]).epsilon(1e-12));
    pred = jittered(rng, pred, 1e-3);  // optimizer-step-sized drift
  }

  // A workspace sized for one batch cannot silently serve another.
  const dyn::TrajectoryBatch other = random_obs(rng, dyn::TimeGrid{0.0, 0.25, 7}, 10, 2);
  const NeighborhoodIndex nb2 = build_neighborhoods(other.initial_states, other.n, other.d, 1.0);
  ad::Tape tape;
  const dyn::TapedBatch tp = taped(tape, other);
  CHECK_THROWS_AS(local_w2_loss(tape, other, tp, nb2, &warm), ShapeError);
}

TEST_CASE("gradients match central differences at plan-stable points") {
  RngStream rng(53);
  const int n = 5, d = 2, steps = 3;
  const dyn::TrajectoryBatch obs = random_obs(rng, dyn::TimeGrid{0.0, 0.25, steps}, n, d);
  dyn::TrajectoryBatch pred = jittered(rng, obs, 0.5);
  const NeighborhoodIndex nbhd = build_neighborhoods(obs.initial_states, n, d, 1.2);
  LossContext ctx;
  ctx.nbhd = &nbhd;
  ctx.kernel.h0 = median_pairwise_distance(obs);

  for (LossKind kind : {LossKind::LocalW2, LossKind::W2, LossKind::Mmd, LossKind::Mse,
                        LossKind::MeanVar}) {
    ad::Tape tape;
    const dyn::TapedBatch tp = taped(tape, pred);
    const LossReport rep = compute_loss(tape, kind, obs, tp, ctx);
    tape.backward(rep.total);

    const double h = 1e-6;
    for (int t = 1; t <= steps; ++t) {
      const Array g = tape.grad(tp.states[t]);
      for (int i = 0; i < n; ++i) {
        for (int k = 0; k < d; ++k) {
          dyn::TrajectoryBatch bumped = pred;
          bumped.state(i, t, k) += h;
          const double up = eval_total(kind, obs, bumped, ctx);
          bumped.state(i, t, k) -= 2.0 * h;
          const double dn = eval_total(kind, obs, bumped, ctx);
          const double fd = (up - dn) / (2.0 * h);
          const double got = g.at(k, i);
          const double denom = std::max({std::abs(fd), std::abs(got), 1e-8});
          CHECK(std::abs(fd - got) / denom < 1e-4);
        }
      }
    }
  }
}

TEST_CASE("shape and grid mismatches are rejected") {
  RngStream rng(59);
  const dyn::TrajectoryBatch obs = random_obs(rng, dyn::TimeGrid{0.0, 0.5, 3}, 4, 2);
  const NeighborhoodIndex nbhd = full_index(obs);
  LossContext ctx;
  ctx.nbhd = &nbhd;
  ctx.kernel.h0 = 1.0;

  const dyn::TrajectoryBatch other_grid = random_obs(rng, dyn::TimeGrid{0.0, 0.5, 4}, 4, 2);
  const dyn::TrajectoryBatch other_n = random_obs(rng, dyn::TimeGrid{0.0, 0.5, 3}, 5, 2);
  const dyn::TrajectoryBatch other_d = random_obs(rng, dyn::TimeGrid{0.0, 0.5, 3}, 4, 3);
  for (LossKind k : {LossKind::LocalW2, LossKind::W2, LossKind::Mmd, LossKind::Mse,
                     LossKind::MeanVar}) {
    CHECK_THROWS_AS(eval_total(k, obs, other_grid, ctx), ShapeError);
    CHECK_THROWS_AS(eval_total(k, obs, other_n, ctx), ShapeError);
    CHECK_THROWS_AS(eval_total(k, obs, other_d, ctx), ShapeError);
  }

  // Neighborhood built for a different batch size.
  const NeighborhoodIndex wrong = build_neighborhoods({0.0, 1.0}, 2, 1, 0.5);
  ad::Tape tape;
  const dyn::TapedBatch tp = taped(tape, obs);
  CHECK_THROWS_AS(local_w2_loss(tape, obs, tp, wrong), ShapeError);

  LossContext bare;
  CHECK_THROWS_AS(compute_loss(tape, LossKind::LocalW2, obs, tp, bare), ConfigError);
  CHECK_THROWS_AS(compute_loss(tape, LossKind::Mmd, obs, tp, bare), ConfigError);
}

TEST_CASE("loss report serializes to json") {
  RngStream rng(61);
  const dyn::TrajectoryBatch obs = random_obs(rng, dyn::TimeGrid{0.0, 0.5, 2}, 3, 1);
  const dyn::TrajectoryBatch pred = jittered(rng, obs, 0.3);
  const NeighborhoodIndex nbhd = full_index(obs);

  ad::Tape tape;
  const dyn::TapedBatch tp = taped(tape, pred);
  const LossReport rep = local_w2_loss(tape, obs, tp, nbhd);
  const nlohmann::json j = nlohmann::json::parse(report_to_json(rep));
  CHECK(j["loss"].get<double>() == rep.total.value()[0]);
  CHECK(j["per_time"].size() == 2);
  CHECK(j["per_anchor"].size() == 3);
}
