#pragma once

#include <string>
#include <vector>

#include "pdr/autodiff.hpp"
#include "pdr/dynamics.hpp"
#include "pdr/transport.hpp"

namespace pdr::losses {

enum class LossKind { LocalW2, W2, Mmd, Mse, MeanVar };

// CLI / config spellings: local-w2, w2, mmd, mse, mean-var.
LossKind loss_from_name(const std::string& name);
std::string loss_name(LossKind kind);

// delta-ball grouping of trajectories by initial state. groups[j] holds the
// sorted indices i with ||X_i(0) - X_j(0)|| <= delta; rep[j] is the smallest
// anchor whose group has identical membership, so duplicate groups can be
// solved once and reused.
struct NeighborhoodIndex {
  double delta = 0.0;
  std::vector<std::vector<int>> groups;
  std::vector<int> rep;
};

// initial_states is row-major n x d, delta >= 0 (infinity allowed).
NeighborhoodIndex build_neighborhoods(const std::vector<double>& initial_states, int n, int d,
                                      double delta);

// Multi-bandwidth RBF kernel sum_k exp(-||x-y||^2 / (2 h_k^2)) with
// h_k = h0 * multiplier^k for k = 0..count-1.
struct KernelConfig {
  double h0 = 0.0;
  double multiplier = 2.0;
  int count = 5;
};

// Default base bandwidth: the (lower) median pairwise distance between
// observed states at the first non-initial time index.
double median_pairwise_distance(const dyn::TrajectoryBatch& obs);

// total carries the gradient; per_time holds the detached per-time terms for
// grid indices 1..n_steps (index 0 is skipped, its clouds share the initial
// states), and total equals their mean. per_anchor is filled by the local
// loss only: anchor j's W2^2 terms averaged over time.
struct LossReport {
  ad::Var total;
  std::vector<double> per_time;
  std::vector<double> per_anchor;
};

// Transport plans carried between repeated evaluations of the local loss on
// the same batch shape (one slot per time index and distinct group). Between
// adjacent training epochs the clouds barely move, so most stored plans pass
// an exact optimality check and skip the solve; a failed check falls through
// to a dual-seeded solve, so results stay exact either way.
struct LocalW2Workspace {
  int n_steps = 0;
  int n = 0;
  std::vector<ot::WarmState> states;
};

// The paper's training objective: (1/(n_T N)) sum_{i,j} of the squared W2
// distance between the observed and predicted clouds of group G_j at time
// t_i, with the plans held fixed for the gradient. warm may be null.
LossReport local_w2_loss(ad::Tape& tape, const dyn::TrajectoryBatch& obs,
                         const dyn::TapedBatch& pred, const NeighborhoodIndex& nbhd,
                         LocalW2Workspace* warm = nullptr);

// (1/n_T) sum_i W2^2 between the full N-point clouds at time t_i.
LossReport time_decoupled_w2_loss(ad::Tape& tape, const dyn::TrajectoryBatch& obs,
                                  const dyn::TapedBatch& pred);

// Plain V-statistic MMD^2 per time index with the summed multi-bandwidth
// kernel, averaged over time. kernel.h0 must be positive.
LossReport mmd_loss(ad::Tape& tape, const dyn::TrajectoryBatch& obs, const dyn::TapedBatch& pred,
                    const KernelConfig& kernel);

// (1/(n_T N)) sum_{i,s} ||X_s(t_i) - Xhat_s(t_i)||^2 with index-aligned
// pairing.
LossReport mse_loss(ad::Tape& tape, const dyn::TrajectoryBatch& obs, const dyn::TapedBatch& pred);

// Per time index: the MSE term plus sum_k |Var_k(X) - Var_k(Xhat)|, with
// Var_k the sum of squared deviations of coordinate k from the cloud mean.
LossReport mean_var_loss(ad::Tape& tape, const dyn::TrajectoryBatch& obs,
                         const dyn::TapedBatch& pred);

// Extras the dispatcher needs beyond the two batches: neighborhoods for
// LocalW2, kernel (with a resolved positive h0) for Mmd, and optionally a
// plan cache carried across epochs.
struct LossContext {
  const NeighborhoodIndex* nbhd = nullptr;
  KernelConfig kernel;
  LocalW2Workspace* warm = nullptr;
};

LossReport compute_loss(ad::Tape& tape, LossKind kind, const dyn::TrajectoryBatch& obs,
                        const dyn::TapedBatch& pred, const LossContext& ctx);

// {"loss": ..., "per_time": [...], "per_anchor": [...]}
std::string report_to_json(const LossReport& report);

}  // namespace pdr::losses
