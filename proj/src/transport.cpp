#include "pdr/transport.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace pdr::ot {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void ensure_scratch(LapScratch& ws, int n) {
  if (static_cast<int>(ws.dist.size()) >= n) return;
  ws.dist.resize(n);
  ws.vwork.resize(n);
  ws.sdist.resize(n);
  ws.pred.resize(n);
  ws.scol.resize(n);
  ws.row4col.resize(n);
  ws.matches.resize(n);
}

// Shortest augmenting path phase (dense Jonker-Volgenant style): grows the
// matching one row at a time while keeping the duals feasible and all matched
// edges tight, so the final assignment is optimal. The relax pass is written
// branchless over every column, masking settled ones through an infinite
// working dual, and the minimum runs as a separate four-way pass; these two
// contiguous loops dominate the solve and vectorize well.
void augment_row(const double* C, int n, int cur_row, std::vector<double>& u,
                 std::vector<double>& v, std::vector<int>& col4row, std::vector<int>& row4col,
                 LapScratch& ws) {
  double* dist = ws.dist.data();
  double* vw = ws.vwork.data();
  int* pred = ws.pred.data();
  std::fill_n(dist, n, kInf);
  std::copy_n(v.data(), n, vw);

  int ns = 0;  // settled columns in ws.scol/ws.sdist, sink last
  double min_val = 0.0;
  int i = cur_row;
  int sink = -1;
  while (sink == -1) {
    const double* ci = C + static_cast<std::size_t>(i) * n;
    const double base = min_val - u[i];
    for (int j = 0; j < n; ++j) {
      const double d = base + ci[j] - vw[j];
      const bool better = d < dist[j];
      dist[j] = better ? d : dist[j];
      pred[j] = better ? i : pred[j];
    }
    double m0 = kInf, m1 = kInf, m2 = kInf, m3 = kInf;
    const int tail = n & ~3;
    for (int j = 0; j < tail; j += 4) {
      m0 = std::min(m0, dist[j]);
      m1 = std::min(m1, dist[j + 1]);
      m2 = std::min(m2, dist[j + 2]);
      m3 = std::min(m3, dist[j + 3]);
    }
    for (int j = tail; j < n; ++j) m0 = std::min(m0, dist[j]);
    const double lowest = std::min(std::min(m0, m1), std::min(m2, m3));
    int bj = 0;
    while (dist[bj] != lowest) ++bj;

    min_val = lowest;
    ws.scol[ns] = bj;
    ws.sdist[ns] = lowest;
    ++ns;
    dist[bj] = kInf;
    vw[bj] = -kInf;
    if (row4col[bj] == -1) sink = bj;
    else i = row4col[bj];
  }

  u[cur_row] += min_val;
  for (int k = 0; k + 1 < ns; ++k) {
    const int j = ws.scol[k];
    v[j] -= min_val - ws.sdist[k];
    u[row4col[j]] += min_val - ws.sdist[k];
  }

  int j = sink;
  while (true) {
    const int r = pred[j];
    row4col[j] = r;
    std::swap(col4row[r], j);
    if (r == cur_row) break;
  }
}

}  // namespace

void lap_solve(const double* C, int n, LapResult& res, LapScratch& ws) {
  ensure_scratch(ws, n);
  res.u.assign(n, 0.0);
  res.v.assign(n, 0.0);
  res.row_to_col.assign(n, -1);
  ws.row4col.assign(n, -1);

  // Column reduction: v[j] = column minimum with its earliest row, scanned
  // row-major so the pass stays contiguous; matching right to left keeps the
  // original Jonker-Volgenant tie ordering.
  double* v = res.v.data();
  int* vrow = ws.pred.data();  // free until the path phase
  std::fill_n(v, n, kInf);
  for (int i = 0; i < n; ++i) {
    const double* ci = C + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const bool better = ci[j] < v[j];
      v[j] = better ? ci[j] : v[j];
      vrow[j] = better ? i : vrow[j];
    }
  }
  ws.matches.assign(n, 0);
  for (int j = n - 1; j >= 0; --j) {
    const int bi = vrow[j];
    if (++ws.matches[bi] == 1) {
      res.row_to_col[bi] = j;
      ws.row4col[j] = bi;
    }
  }

  // Reduction transfer: rows matched exactly once push their slack onto the
  // matched column so it can attract other rows.
  std::vector<int>& free_rows = ws.free_rows;
  free_rows.clear();
  for (int i = 0; i < n; ++i) {
    if (ws.matches[i] == 0) {
      free_rows.push_back(i);
    } else if (ws.matches[i] == 1 && n > 1) {
      const int j1 = res.row_to_col[i];
      const double* ci = C + static_cast<std::size_t>(i) * n;
      double mu = kInf;
      for (int j = 0; j < n; ++j)
        if (j != j1) mu = std::min(mu, ci[j] - res.v[j]);
      res.u[i] = mu;
      res.v[j1] -= mu;
    }
  }

  // Augmenting row reduction (two sweeps): a free row grabs its best column,
  // lowering that column's dual by the runner-up gap; the evicted row retries
  // immediately with the fresh duals, which lets eviction chains ripple to a
  // free column cheaply. The classic integer-cost argument does not bound the
  // chains for doubles (the decrement can round to nothing), so a retry is
  // only taken when v actually moved and each sweep has a work budget; rows
  // left over go to the path phase. Any prefix leaves feasible duals and
  // tight matched edges.
  for (int sweep = 0; sweep < 2 && !free_rows.empty(); ++sweep) {
    std::vector<int>& next_free = ws.next_free;
    next_free.clear();
    std::size_t budget = 4 * static_cast<std::size_t>(n) + 16;
    std::size_t k = 0;
    while (k < free_rows.size()) {
      if (budget-- == 0) break;
      const int i = free_rows[k++];
      const double* ci = C + static_cast<std::size_t>(i) * n;
      double u1 = kInf, u2 = kInf;
      int j1 = -1, j2 = -1;
      for (int j = 0; j < n; ++j) {
        const double r = ci[j] - res.v[j];
        if (r < u2) {
          if (r < u1) {
            u2 = u1;
            j2 = j1;
            u1 = r;
            j1 = j;
          } else {
            u2 = r;
            j2 = j;
          }
        }
      }
      int jt = j1;
      int evicted = ws.row4col[jt];
      bool moved = false;
      if (u1 < u2) {
        const double nv = res.v[jt] - (u2 - u1);
        moved = nv < res.v[jt];
        res.v[jt] = nv;
      } else if (evicted >= 0 && j2 >= 0) {
        jt = j2;
        evicted = ws.row4col[jt];
      }
      res.row_to_col[i] = jt;
      ws.row4col[jt] = i;
      if (evicted >= 0) {
        res.row_to_col[evicted] = -1;
        if (moved)
          free_rows[--k] = evicted;
        else
          next_free.push_back(evicted);
      }
    }
    for (; k < free_rows.size(); ++k) next_free.push_back(free_rows[k]);
    std::swap(free_rows, next_free);
  }

  // Matched edges must be tight for the shortest-path phase; free rows keep
  // a loose but feasible dual.
  for (int i = 0; i < n; ++i) {
    if (res.row_to_col[i] >= 0)
      res.u[i] = C[static_cast<std::size_t>(i) * n + res.row_to_col[i]] - res.v[res.row_to_col[i]];
    else
      res.u[i] = 0.0;
  }

  for (int i : free_rows) augment_row(C, n, i, res.u, res.v, res.row_to_col, ws.row4col, ws);

  res.cost = 0.0;
  for (int i = 0; i < n; ++i) res.cost += C[static_cast<std::size_t>(i) * n + res.row_to_col[i]];
}

LapResult lap_solve(const double* C, int n) {
  LapResult res;
  LapScratch ws;
  lap_solve(C, n, res, ws);
  return res;
}

void lap_solve_warm(const double* C, int n, const std::vector<double>& v_init, LapResult& res,
                    LapScratch& ws) {
  if (v_init.size() != static_cast<std::size_t>(n))
    throw ShapeError("lap_solve_warm: dual size mismatch");
  ensure_scratch(ws, n);
  res.v.assign(v_init.begin(), v_init.end());
  res.u.assign(n, 0.0);
  res.row_to_col.assign(n, -1);
  ws.row4col.assign(n, -1);
  std::vector<int>& free_rows = ws.free_rows;
  free_rows.clear();

  // Row reduction against the inherited column duals: u[i] becomes the row
  // minimum (restoring feasibility for any v), and rows whose minimizing
  // column is unclaimed take it as a tight edge. When the instance barely
  // moved since the duals were saved, this re-forms the old assignment.
  for (int i = 0; i < n; ++i) {
    const double* ci = C + static_cast<std::size_t>(i) * n;
    double best = kInf;
    int bj = -1;
    for (int j = 0; j < n; ++j) {
      const double r = ci[j] - res.v[j];
      const bool better = r < best;
      best = better ? r : best;
      bj = better ? j : bj;
    }
    res.u[i] = best;
    if (ws.row4col[bj] == -1) {
      ws.row4col[bj] = i;
      res.row_to_col[i] = bj;
    } else {
      free_rows.push_back(i);
    }
  }

  for (int i : free_rows) augment_row(C, n, i, res.u, res.v, res.row_to_col, ws.row4col, ws);

  res.cost = 0.0;
  for (int i = 0; i < n; ++i) res.cost += C[static_cast<std::size_t>(i) * n + res.row_to_col[i]];
}

LapResult lap_solve_warm(const double* C, int n, const std::vector<double>& v_init) {
  LapResult res;
  LapScratch ws;
  lap_solve_warm(C, n, v_init, res, ws);
  return res;
}

namespace {

// Lexicographically smallest optimal assignment. Complementary slackness
// confines every optimal matching to the zero-reduced-cost subgraph, so we
// greedily fix each row to its smallest feasible zero column, rerouting the
// displaced row through an alternating path when needed.
struct LexRefiner {
  int n = 0;
  std::vector<std::vector<int>> zero_cols;  // ascending per row
  std::vector<int> match_row, match_col;    // current perfect matching
  std::vector<char> col_locked, row_seen;

  // Kuhn augmentation restricted to unlocked zero columns; only mutates the
  // matching when an augmenting path is found.
  bool reroute(int row) {
    if (row_seen[row]) return false;
    row_seen[row] = 1;
    for (int j : zero_cols[row]) {
      if (col_locked[j]) continue;
      const int holder = match_col[j];
      if (holder == -1 || reroute(holder)) {
        match_row[row] = j;
        match_col[j] = row;
        return true;
      }
    }
    return false;
  }

  std::vector<int> run(const std::vector<int>& initial) {
    match_row = initial;
    match_col.assign(n, -1);
    for (int i = 0; i < n; ++i) match_col[match_row[i]] = i;
    col_locked.assign(n, 0);

    for (int i = 0; i < n; ++i) {
      const int cur = match_row[i];
      for (int j : zero_cols[i]) {
        if (j >= cur) break;  // the current column remains feasible
        if (col_locked[j]) continue;
        // Move row i to column j; the displaced row must reach the freed cur.
        const int displaced = match_col[j];
        match_col[cur] = -1;
        match_row[i] = j;
        match_col[j] = i;
        row_seen.assign(n, 0);
        row_seen[i] = 1;
        if (reroute(displaced)) break;
        match_row[i] = cur;
        match_col[cur] = i;
        match_col[j] = displaced;
      }
      col_locked[match_row[i]] = 1;
    }
    return match_row;
  }
};

}  // namespace

namespace {

void build_cost_matrix(const EmpiricalCloud& a, const EmpiricalCloud& b, std::vector<double>& C,
                       double& cmax) {
  if (a.n != b.n) throw ShapeError("w2sq: clouds must have equal sample counts");
  if (a.d != b.d) throw ShapeError("w2sq: clouds must share the dimension");
  if (a.n <= 0) throw ShapeError("w2sq: empty cloud");
  const int n = a.n, d = a.d;
  C.resize(static_cast<std::size_t>(n) * n);
  cmax = 0.0;
  for (int i = 0; i < n; ++i) {
    const double* pa = a.point(i);
    double* row = C.data() + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* pb = b.point(j);
      double acc = 0.0;
      for (int k = 0; k < d; ++k) {
        const double diff = pa[k] - pb[k];
        acc += diff * diff;
      }
      row[j] = acc;
      cmax = std::max(cmax, acc);
    }
  }
}

// Tie handling: restrict to (approximately) zero reduced costs and take the
// lexicographically smallest perfect matching there. When the optimum is
// unique every row has a single zero column and the refinement is a no-op,
// detected without building the graph.
TransportPlan finalize_plan(const double* C, int n, double cmax, const LapResult& lap) {
  const double tol = 1e-10 * (1.0 + cmax);
  bool unique = true;
  for (int i = 0; i < n && unique; ++i) {
    const double* row = C + static_cast<std::size_t>(i) * n;
    int zeros = 0;
    for (int j = 0; j < n; ++j)
      if (row[j] - lap.u[i] - lap.v[j] <= tol && ++zeros > 1) break;
    unique = zeros == 1;
  }

  TransportPlan plan;
  if (unique) {
    plan.perm = lap.row_to_col;
  } else {
    LexRefiner ref;
    ref.n = n;
    ref.zero_cols.resize(n);
    for (int i = 0; i < n; ++i) {
      const double* row = C + static_cast<std::size_t>(i) * n;
      for (int j = 0; j < n; ++j)
        if (row[j] - lap.u[i] - lap.v[j] <= tol) ref.zero_cols[i].push_back(j);
    }
    plan.perm = ref.run(lap.row_to_col);
  }
  plan.cost = 0.0;
  for (int i = 0; i < n; ++i) plan.cost += C[static_cast<std::size_t>(i) * n + plan.perm[i]];
  plan.cost /= static_cast<double>(n);
  return plan;
}

// Complementary slackness check for a stored plan: rebuild row duals so the
// matched edges are tight, then require every reduced cost to stay
// nonnegative up to accumulated-roundoff scale. Passing bounds the stored
// plan's optimality gap by a few ulps of the dual objective, the same
// guarantee a fresh solve in doubles provides; anything worse falls through
// to a real solve.
bool still_optimal(const double* C, int n, const WarmState& s, TransportPlan& out) {
  constexpr double kSlackTol = 8.0 * std::numeric_limits<double>::epsilon();
  std::vector<double> u(n);
  std::vector<char> used(n, 0);
  for (int i = 0; i < n; ++i) {
    const int pi = s.perm[i];
    if (pi < 0 || pi >= n || used[pi]) return false;
    used[pi] = 1;
    u[i] = C[static_cast<std::size_t>(i) * n + pi] - s.v[pi];
  }
  for (int i = 0; i < n; ++i) {
    const double* row = C + static_cast<std::size_t>(i) * n;
    const int pi = s.perm[i];
    const double ui = u[i];
    for (int j = 0; j < n; ++j) {
      const double slack = row[j] - ui - s.v[j];
      if (j != pi && slack < -kSlackTol * (std::fabs(ui) + std::fabs(s.v[j]) + std::fabs(row[j])))
        return false;
    }
  }
  out.perm = s.perm;
  out.cost = 0.0;
  for (int i = 0; i < n; ++i) out.cost += C[static_cast<std::size_t>(i) * n + s.perm[i]];
  out.cost /= static_cast<double>(n);
  return true;
}

}  // namespace

TransportPlan w2sq_from_cost(const double* cost, int n, double cmax, WarmState* state) {
  if (n <= 0 || cost == nullptr) throw ShapeError("w2sq_from_cost: empty cost matrix");
  const bool sized = state != nullptr && state->v.size() == static_cast<std::size_t>(n);
  if (sized && state->perm.size() == static_cast<std::size_t>(n)) {
    TransportPlan reused;
    if (still_optimal(cost, n, *state, reused)) return reused;
  }
  const LapResult lap = sized ? lap_solve_warm(cost, n, state->v) : lap_solve(cost, n);
  TransportPlan plan = finalize_plan(cost, n, cmax, lap);
  if (state != nullptr) {
    state->v = lap.v;
    state->perm = plan.perm;
  }
  return plan;
}

TransportPlan w2sq(const EmpiricalCloud& a, const EmpiricalCloud& b) {
  std::vector<double> C;
  double cmax = 0.0;
  build_cost_matrix(a, b, C, cmax);
  return w2sq_from_cost(C.data(), a.n, cmax, nullptr);
}

TransportPlan w2sq_warm(const EmpiricalCloud& a, const EmpiricalCloud& b, WarmState& state) {
  std::vector<double> C;
  double cmax = 0.0;
  build_cost_matrix(a, b, C, cmax);
  return w2sq_from_cost(C.data(), a.n, cmax, &state);
}

TransportPlan w2sq_1d(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("w2sq_1d: size mismatch");
  if (a.empty()) throw ShapeError("w2sq_1d: empty cloud");
  const int n = static_cast<int>(a.size());

  auto order = [](std::span<const double> x) {
    std::vector<int> idx(x.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int i, int j) {
      return x[i] < x[j] || (x[i] == x[j] && i < j);
    });
    return idx;
  };
  const std::vector<int> ia = order(a);
  const std::vector<int> ib = order(b);

  TransportPlan plan;
  plan.perm.assign(n, -1);
  for (int k = 0; k < n; ++k) plan.perm[ia[k]] = ib[k];
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const double diff = a[i] - b[plan.perm[i]];
    acc += diff * diff;
  }
  plan.cost = acc / static_cast<double>(n);
  return plan;
}

void GroupSolver::set_time(const Array& obs_cols, const Array& pred_cols, bool solve_full) {
  if (obs_cols.rank() != 2 || pred_cols.rank() != 2 || obs_cols.rows() != pred_cols.rows() ||
      obs_cols.cols() != pred_cols.cols())
    throw ShapeError("GroupSolver: clouds must both be {d, N}");
  const int d = static_cast<int>(obs_cols.rows());
  n_ = static_cast<int>(obs_cols.cols());
  dist_.resize(static_cast<std::size_t>(n_) * n_);
  for (int i = 0; i < n_; ++i) {
    double* row = dist_.data() + static_cast<std::size_t>(i) * n_;
    for (int j = 0; j < n_; ++j) {
      double acc = 0.0;
      for (int k = 0; k < d; ++k) {
        const double diff = obs_cols.at(k, i) - pred_cols.at(k, j);
        acc += diff * diff;
      }
      row[j] = acc;
    }
  }
  if (solve_full) {
    lap_solve(dist_.data(), n_, full_, ws_);
  } else {
    full_.v.clear();
  }
}

TransportPlan GroupSolver::solve(const std::vector<int>& group) {
  if (n_ == 0 || full_.v.size() != static_cast<std::size_t>(n_))
    throw ShapeError("GroupSolver: set_time not called");
  const int n = static_cast<int>(group.size());
  if (n == 0) throw ShapeError("GroupSolver: empty group");
  for (const int g : group)
    if (g < 0 || g >= n_) throw ShapeError("GroupSolver: group index out of range");

  csub_.resize(static_cast<std::size_t>(n) * n);
  vsub_.resize(n);
  for (int r = 0; r < n; ++r) {
    const double* src = dist_.data() + static_cast<std::size_t>(group[r]) * n_;
    double* dst = csub_.data() + static_cast<std::size_t>(r) * n;
    for (int c = 0; c < n; ++c) dst[c] = src[group[c]];
    vsub_[r] = full_.v[group[r]];
  }
  lap_solve_warm(csub_.data(), n, vsub_, lap_, ws_);

  TransportPlan plan;
  plan.perm = lap_.row_to_col;
  plan.cost = 0.0;
  for (int r = 0; r < n; ++r)
    plan.cost += csub_[static_cast<std::size_t>(r) * n + plan.perm[r]];
  plan.cost /= static_cast<double>(n);
  return plan;
}

TransportPlan GroupSolver::solve_warm(const std::vector<int>& group, WarmState& st) {
  if (n_ == 0) throw ShapeError("GroupSolver: set_time not called");
  const int n = static_cast<int>(group.size());
  if (n == 0) throw ShapeError("GroupSolver: empty group");
  for (const int g : group)
    if (g < 0 || g >= n_) throw ShapeError("GroupSolver: group index out of range");

  constexpr double kSlackTol = 8.0 * std::numeric_limits<double>::epsilon();
  if (st.perm.size() == static_cast<std::size_t>(n) &&
      st.v.size() == static_cast<std::size_t>(n)) {
    // Complementary slackness check straight off the dense matrix, no
    // gather: row duals are rebuilt so matched edges are exactly tight, so
    // the whole submatrix only has to stay nonnegative in reduced cost.
    double worst = 0.0;
    for (int r = 0; r < n && worst >= 0.0; ++r) {
      const double* row = dist_.data() + static_cast<std::size_t>(group[r]) * n_;
      const double ur = row[group[st.perm[r]]] - st.v[st.perm[r]];
      const double aur = std::fabs(ur);
      for (int c = 0; c < n; ++c) {
        const double cv = row[group[c]];
        const double slack = cv - ur - st.v[c];
        const double viol = slack + kSlackTol * (aur + std::fabs(st.v[c]) + std::fabs(cv));
        worst = std::min(worst, viol);
      }
    }
    if (worst >= 0.0) {
      TransportPlan plan;
      plan.perm = st.perm;
      plan.cost = 0.0;
      for (int r = 0; r < n; ++r)
        plan.cost += dist_[static_cast<std::size_t>(group[r]) * n_ + group[st.perm[r]]];
      plan.cost /= static_cast<double>(n);
      return plan;
    }
  }

  csub_.resize(static_cast<std::size_t>(n) * n);
  for (int r = 0; r < n; ++r) {
    const double* src = dist_.data() + static_cast<std::size_t>(group[r]) * n_;
    double* dst = csub_.data() + static_cast<std::size_t>(r) * n;
    for (int c = 0; c < n; ++c) dst[c] = src[group[c]];
  }
  if (st.v.size() == static_cast<std::size_t>(n)) {
    lap_solve_warm(csub_.data(), n, st.v, lap_, ws_);
  } else {
    lap_solve(csub_.data(), n, lap_, ws_);
  }
  st.v = lap_.v;
  st.perm = lap_.row_to_col;

  TransportPlan plan;
  plan.perm = lap_.row_to_col;
  plan.cost = 0.0;
  for (int r = 0; r < n; ++r)
    plan.cost += csub_[static_cast<std::size_t>(r) * n + plan.perm[r]];
  plan.cost /= static_cast<double>(n);
  return plan;
}

ad::Var matched_cost(ad::Tape& tape, const EmpiricalCloud& a, const ad::Var& b_cols,
                     const TransportPlan& plan) {
  (void)tape;
  const Array& bv = b_cols.value();
  if (bv.rank() != 2 || static_cast<int>(bv.rows()) != a.d || static_cast<int>(bv.cols()) != a.n)
    throw ShapeError("matched_cost: b_cols must be {d, n}");
  Array ref = Array::mat(a.d, a.n);
  for (int i = 0; i < a.n; ++i) {
    const double* p = a.point(i);
    for (int k = 0; k < a.d; ++k) ref.at(k, i) = p[k];
  }
  return ad::matched_sq_cost(b_cols, plan.perm, ref);
}

ad::Var w2sq_grad(ad::Tape& tape, const EmpiricalCloud& a, const ad::Var& b_cols) {
  const Array& bv = b_cols.value();
  if (bv.rank() != 2) throw ShapeError("w2sq_grad: b_cols must be {d, n}");
  const int d = static_cast<int>(bv.rows());
  const int n = static_cast<int>(bv.cols());
  std::vector<double> pts(static_cast<std::size_t>(n) * d);
  for (int j = 0; j < n; ++j)
    for (int k = 0; k < d; ++k) pts[static_cast<std::size_t>(j) * d + k] = bv.at(k, j);
  const TransportPlan plan = d == 1 ? w2sq_1d(std::span(a.data, static_cast<std::size_t>(a.n)),
                                              std::span(pts.data(), pts.size()))
                                    : w2sq(a, make_cloud(pts, n, d));
  return matched_cost(tape, a, b_cols, plan);
}

}  // namespace pdr::ot
