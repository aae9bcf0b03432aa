#pragma once

#include <span>
#include <vector>

#include "pdr/autodiff.hpp"

namespace pdr::ot {

// Non-owning view of n points in R^d, row-major (point i at data + i*d).
struct EmpiricalCloud {
  const double* data = nullptr;
  int n = 0;
  int d = 0;
  const double* point(int i) const { return data + static_cast<std::size_t>(i) * d; }
};

inline EmpiricalCloud make_cloud(const std::vector<double>& pts, int n, int d) {
  return EmpiricalCloud{pts.data(), n, d};
}

// perm[i] is the index in b matched to a_i; cost is the squared W2 distance
// between the uniform empirical measures, (1/n) sum_i ||a_i - b_perm[i]||^2.
struct TransportPlan {
  std::vector<int> perm;
  double cost = 0.0;
};

// Exact optimal matching via a dense Jonker-Volgenant solver on the squared
// Euclidean cost matrix. Among equal-cost optima, returns the
// lexicographically smallest permutation.
TransportPlan w2sq(const EmpiricalCloud& a, const EmpiricalCloud& b);

// Column duals and permutation carried between solves of nearby instances
// (same clouds at a neighboring time step or training epoch). When the old
// plan still satisfies exact complementary slackness it is reused after one
// verification pass; otherwise the duals seed the solver so most rows
// re-claim their columns without a path search. The result is always an
// exact optimum; tie canonicalization only applies to fresh solves. An empty
// state falls back to a cold solve.
struct WarmState {
  std::vector<double> v;
  std::vector<int> perm;
};
TransportPlan w2sq_warm(const EmpiricalCloud& a, const EmpiricalCloud& b, WarmState& state);

// As w2sq/w2sq_warm but on a caller-built dense matrix of squared distances
// (cmax its maximum); state may be null for a one-shot canonical solve.
TransportPlan w2sq_from_cost(const double* cost, int n, double cmax, WarmState* state);

// 1-D fast path: sort both samples and match by rank.
TransportPlan w2sq_1d(std::span<const double> a, std::span<const double> b);

// Dense linear assignment (internal, exposed for tests): minimizes
// sum_i C[i][row_to_col[i]] and returns optimal duals.
struct LapResult {
  std::vector<int> row_to_col;
  std::vector<double> u, v;
  double cost = 0.0;
};

// Scratch buffers reused across solves; they only grow. The overloads taking
// one avoid per-call allocation on hot paths.
struct LapScratch {
  std::vector<double> dist, vwork, sdist;
  std::vector<int> pred, scol, row4col, free_rows, next_free, matches;
};

LapResult lap_solve(const double* cost, int n);
void lap_solve(const double* cost, int n, LapResult& res, LapScratch& ws);
// As lap_solve but starts from caller-provided column duals; row duals are
// recomputed to restore feasibility, so any v_init of the right size works.
LapResult lap_solve_warm(const double* cost, int n, const std::vector<double>& v_init);
void lap_solve_warm(const double* cost, int n, const std::vector<double>& v_init, LapResult& res,
                    LapScratch& ws);

// Exact matchings between index-aligned subsets of two clouds at one time,
// built for the local-loss inner loop where every anchor solves a principal
// submatrix of the same N x N squared-distance matrix. set_time solves the
// full N-point problem once; its column duals restricted to a group remain
// dual-feasible for the subproblem, so each per-anchor solve starts warm and
// most rows reclaim a column without a path search. Plans are exact optima;
// ties resolve by solver scan order rather than canonically.
class GroupSolver {
 public:
  // obs_cols and pred_cols are {d, N} with points as columns. Callers that
  // only need cost_at (seeding solves from their own stored duals instead)
  // pass solve_full = false to skip the N-point solve.
  void set_time(const Array& obs_cols, const Array& pred_cols, bool solve_full = true);
  // group holds trajectory indices into the current clouds (need not be
  // sorted); rows of the subproblem are obs entries, columns pred entries.
  TransportPlan solve(const std::vector<int>& group);
  // As solve, but carries duals and the plan in st across calls on slowly
  // moving clouds (usable after set_time with solve_full = false). A stored
  // plan that passes the exact optimality check is returned without a solve;
  // otherwise the stored duals seed a fresh one. Ties resolve by solver scan
  // order, so which optimum is returned may depend on the call history;
  // costs never do.
  TransportPlan solve_warm(const std::vector<int>& group, WarmState& st);
  // Dense squared distance between obs i and pred j at the current time.
  double cost_at(int i, int j) const { return dist_[static_cast<std::size_t>(i) * n_ + j]; }

 private:
  int n_ = 0;
  std::vector<double> dist_;  // N x N squared distances, row-major
  LapResult full_, lap_;
  LapScratch ws_;
  std::vector<double> csub_, vsub_;
};

// Taped matched cost for a fixed plan; b_cols is {d, n} with points as
// columns. Gradient w.r.t. b_j is (2/n)(b_j - a_{perm^-1(j)}).
ad::Var matched_cost(ad::Tape& tape, const EmpiricalCloud& a, const ad::Var& b_cols,
                     const TransportPlan& plan);

// Computes the plan on the detached values of b_cols, then returns the taped
// loss with the plan held fixed (envelope gradient).
ad::Var w2sq_grad(ad::Tape& tape, const EmpiricalCloud& a, const ad::Var& b_cols);

}  // namespace pdr::ot
