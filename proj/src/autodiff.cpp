#include "pdr/autodiff.hpp"

#include <cmath>
#include <string>

namespace pdr::ad {

namespace {

void require_same_shape(const char* op, const Array& a, const Array& b) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()));
  }
}

void require_same_tape(const char* op, const Var& a, const Var& b) {
  if (a.tape() != b.tape()) throw ShapeError(std::string(op) + ": vars from different tapes");
}

bool any_grad(const Var& a) { return a.tape()->needs_grad_of(a.index()); }
bool any_grad(const Var& a, const Var& b) {
  return a.tape()->needs_grad_of(a.index()) || b.tape()->needs_grad_of(b.index());
}

}  // namespace

const Array& Var::value() const { return tape_->value(*this); }
const Array& Var::grad() const { return tape_->grad(*this); }

Var Tape::push(Op op, Array value, std::int32_t a, std::int32_t b, bool needs_grad,
               double scalar, std::vector<std::int32_t> aux, std::vector<double> payload) {
  Node n;
  n.op = op;
  n.a = a;
  n.b = b;
  n.scalar = scalar;
  n.needs_grad = needs_grad;
  n.value = std::move(value);
  n.aux = std::move(aux);
  n.payload = std::move(payload);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<std::int32_t>(nodes_.size() - 1));
}

Var Tape::leaf(Array v) { return push(Op::Leaf, std::move(v), -1, -1, true); }

Var Tape::constant(Array v) { return push(Op::Const, std::move(v), -1, -1, false); }

void Tape::reset() {
  nodes_.clear();
  zero_cache_.clear();
}

const Array& Tape::grad(const Var& v) const {
  const Node& n = nodes_[v.index()];
  if (n.grad_live) return n.grad;
  // Unreached nodes have zero gradient; hand back a zero array of the right shape.
  zero_cache_.push_back(n.value.zeros_like());
  return zero_cache_.back();
}

Array& Tape::ensure_grad(std::int32_t i) {
  Node& n = nodes_[i];
  if (!n.grad_live) {
    n.grad = n.value.zeros_like();
    n.grad_live = true;
  }
  return n.grad;
}

void Tape::backward(const Var& root) {
  if (root.tape() != this) throw ShapeError("backward: root from another tape");
  if (nodes_[root.index()].value.rank() != 0)
    throw ShapeError("backward: root must be a scalar");

  for (Node& n : nodes_) {
    n.grad_live = false;
    n.grad = Array();
  }
  zero_cache_.clear();

  ensure_grad(root.index())[0] = 1.0;

  for (std::int32_t i = root.index(); i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.grad_live || !n.needs_grad) continue;
    const Array& g = n.grad;
    switch (n.op) {
      case Op::Leaf:
      case Op::Const:
        break;
      case Op::Add: {
        if (nodes_[n.a].needs_grad) {
          Array& ga = ensure_grad(n.a);
          for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k];
        }
        if (nodes_[n.b].needs_grad) {
          Array& gb = ensure_grad(n.b);
          for (std::size_t k = 0; k < g.size(); ++k) gb[k] += g[k];
        }
        break;
      }
      case Op::Sub: {
        if (nodes_[n.a].needs_grad) {
          Array& ga = ensure_grad(n.a);
          for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k];
        }
        if (nodes_[n.b].needs_grad) {
          Array& gb = ensure_grad(n.b);
          for (std::size_t k = 0; k < g.size(); ++k) gb[k] -= g[k];
        }
        break;
      }
      case Op::Mul: {
        const Array& av = nodes_[n.a].value;
        const Array& bv = nodes_[n.b].value;
        if (nodes_[n.a].needs_grad) {
          Array& ga = ensure_grad(n.a);
          for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k] * bv[k];
        }
        if (nodes_[n.b].needs_grad) {
          Array& gb = ensure_grad(n.b);
          for (std::size_t k = 0; k < g.size(); ++k) gb[k] += g[k] * av[k];
        }
        break;
      }
      case Op::MatVec: {
        const Array& w = nodes_[n.a].value;
        const Array& x = nodes_[n.b].value;
        const std::size_t rr = w.rows(), cc = w.cols();
        if (nodes_[n.a].needs_grad) {
          Array& gw = ensure_grad(n.a);
          for (std::size_t r = 0; r < rr; ++r)
            for (std::size_t c = 0; c < cc; ++c) gw.at(r, c) += g[r] * x[c];
        }
        if (nodes_[n.b].needs_grad) {
          Array& gx = ensure_grad(n.b);
          for (std::size_t r = 0; r < rr; ++r) {
            const double gr = g[r];
            for (std::size_t c = 0; c < cc; ++c) gx[c] += w.at(r, c) * gr;
          }
        }
        break;
      }
      case Op::MatMul: {
        const Array& a = nodes_[n.a].value;
        const Array& b = nodes_[n.b].value;
        const std::size_t rr = a.rows(), kk = a.cols(), cc = b.cols();
        if (nodes_[n.a].needs_grad) {
          Array& ga = ensure_grad(n.a);
          for (std::size_t r = 0; r < rr; ++r)
            for (std::size_t c = 0; c < cc; ++c) {
              const double grc = g.at(r, c);
              for (std::size_t k = 0; k < kk; ++k) ga.at(r, k) += grc * b.at(k, c);
            }
        }
        if (nodes_[n.b].needs_grad) {
          Array& gb = ensure_grad(n.b);
          for (std::size_t r = 0; r < rr; ++r)
            for (std::size_t k = 0; k < kk; ++k) {
              const double ark = a.at(r, k);
              for (std::size_t c = 0; c < cc; ++c) gb.at(k, c) += ark * g.at(r, c);
            }
        }
        break;
      }
      case Op::Transpose: {
        Array& ga = ensure_grad(n.a);
        const std::size_t rr = n.value.rows(), cc = n.value.cols();
        for (std::size_t r = 0; r < rr; ++r)
          for (std::size_t c = 0; c < cc; ++c) ga.at(c, r) += g.at(r, c);
        break;
      }
      case Op::Relu: {
        const Array& av = nodes_[n.a].value;
        Array& ga = ensure_grad(n.a);
        for (std::size_t k = 0; k < g.size(); ++k)
          if (av[k] > 0.0) ga[k] += g[k];
        break;
      }
      case Op::Abs: {
        const Array& av = nodes_[n.a].value;
        Array& ga = ensure_grad(n.a);
        for (std::size_t k = 0; k < g.size(); ++k) {
          if (av[k] > 0.0) ga[k] += g[k];
          else if (av[k] < 0.0) ga[k] -= g[k];
          // subgradient at 0 taken as 0
        }
        break;
      }
      case Op::Sqrt: {
        Array& ga = ensure_grad(n.a);
        for (std::size_t k = 0; k < g.size(); ++k) {
          const double s = n.value[k];
          if (s > 0.0) ga[k] += g[k] * 0.5 / s;
          // derivative at 0 clamped to 0
        }
        break;
      }
      case Op::Exp: {
        Array& ga = ensure_grad(n.a);
        for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k] * n.value[k];
        break;
      }
      case Op::Log: {
        const Array& av = nodes_[n.a].value;
        Array& ga = ensure_grad(n.a);
        for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k] / av[k];
        break;
      }
      case Op::Sum: {
        Array& ga = ensure_grad(n.a);
        const double gs = g[0];
        for (std::size_t k = 0; k < ga.size(); ++k) ga[k] += gs;
        break;
      }
      case Op::Mean: {
        Array& ga = ensure_grad(n.a);
        const double gs = g[0] / static_cast<double>(ga.size());
        for (std::size_t k = 0; k < ga.size(); ++k) ga[k] += gs;
        break;
      }
      case Op::Square: {
        const Array& av = nodes_[n.a].value;
        Array& ga = ensure_grad(n.a);
        for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k] * 2.0 * av[k];
        break;
      }
      case Op::Scale: {
        Array& ga = ensure_grad(n.a);
        for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k] * n.scalar;
        break;
      }
      case Op::Gather: {
        const Array& av = nodes_[n.a].value;
        Array& ga = ensure_grad(n.a);
        if (av.rank() <= 1) {
          for (std::size_t k = 0; k < n.aux.size(); ++k) ga[n.aux[k]] += g[k];
        } else {
          const std::size_t cc = av.cols();
          for (std::size_t k = 0; k < n.aux.size(); ++k)
            for (std::size_t c = 0; c < cc; ++c) ga.at(n.aux[k], c) += g.at(k, c);
        }
        break;
      }
      case Op::GatherCols: {
        Array& ga = ensure_grad(n.a);
        const std::size_t rr = n.value.rows();
        for (std::size_t k = 0; k < n.aux.size(); ++k)
          for (std::size_t r = 0; r < rr; ++r) ga.at(r, n.aux[k]) += g.at(r, k);
        break;
      }
      case Op::Concat: {
        const std::size_t na = nodes_[n.a].value.size();
        if (nodes_[n.a].needs_grad) {
          Array& ga = ensure_grad(n.a);
          for (std::size_t k = 0; k < na; ++k) ga[k] += g[k];
        }
        if (nodes_[n.b].needs_grad) {
          Array& gb = ensure_grad(n.b);
          for (std::size_t k = 0; k < gb.size(); ++k) gb[k] += g[na + k];
        }
        break;
      }
      case Op::StackRows: {
        std::size_t row0 = 0;
        const std::size_t cc = n.value.cols();
        for (std::int32_t pi : n.aux) {
          const std::size_t pr = nodes_[pi].value.rows();
          if (nodes_[pi].needs_grad) {
            Array& gp = ensure_grad(pi);
            for (std::size_t r = 0; r < pr; ++r)
              for (std::size_t c = 0; c < cc; ++c) gp.at(r, c) += g.at(row0 + r, c);
          }
          row0 += pr;
        }
        break;
      }
      case Op::StackCols: {
        const std::size_t d = n.value.rows();
        for (std::size_t k = 0; k < n.aux.size(); ++k) {
          const std::int32_t pi = n.aux[k];
          if (!nodes_[pi].needs_grad) continue;
          Array& gp = ensure_grad(pi);
          for (std::size_t r = 0; r < d; ++r) gp[r] += g.at(r, k);
        }
        break;
      }
      case Op::PairSqDist: {
        const Array& av = nodes_[n.a].value;
        const Array& bv = nodes_[n.b].value;
        Array* ga = nodes_[n.a].needs_grad ? &ensure_grad(n.a) : nullptr;
        Array* gb = nodes_[n.b].needs_grad ? &ensure_grad(n.b) : nullptr;
        const std::size_t d = av.rows();
        for (std::size_t i = 0; i < av.cols(); ++i)
          for (std::size_t j = 0; j < bv.cols(); ++j) {
            const double w = 2.0 * g.at(i, j);
            for (std::size_t r = 0; r < d; ++r) {
              const double diff = w * (av.at(r, i) - bv.at(r, j));
              if (ga) ga->at(r, i) += diff;
              if (gb) gb->at(r, j) -= diff;
            }
          }
        break;
      }
      case Op::RbfKsum: {
        const Array& av = nodes_[n.a].value;
        Array& ga = ensure_grad(n.a);
        for (std::size_t k = 0; k < g.size(); ++k) {
          double acc = 0.0;
          for (double h : n.payload) {
            const double inv = 1.0 / (2.0 * h * h);
            acc -= inv * std::exp(-av[k] * inv);
          }
          ga[k] += g[k] * acc;
        }
        break;
      }
      case Op::MatchedSqCost: {
        const Array& p = nodes_[n.a].value;
        Array& gp = ensure_grad(n.a);
        const std::size_t d = p.rows();
        const std::size_t m = n.aux.size();
        const double w = g[0] * 2.0 / static_cast<double>(m);
        for (std::size_t s = 0; s < m; ++s) {
          const auto col = static_cast<std::size_t>(n.aux[s]);
          for (std::size_t r = 0; r < d; ++r)
            gp.at(r, col) += w * (p.at(r, col) - n.payload[s * d + r]);
        }
        break;
      }
    }
  }
}

Var add(const Var& a, const Var& b) {
  require_same_tape("add", a, b);
  require_same_shape("add", a.value(), b.value());
  Array out = a.value();
  const Array& bv = b.value();
  for (std::size_t k = 0; k < out.size(); ++k) out[k] += bv[k];
  return a.tape()->push(Op::Add, std::move(out), a.index(), b.index(), any_grad(a, b));
}

Var sub(const Var& a, const Var& b) {
  require_same_tape("sub", a, b);
  require_same_shape("sub", a.value(), b.value());
  Array out = a.value();
  const Array& bv = b.value();
  for (std::size_t k = 0; k < out.size(); ++k) out[k] -= bv[k];
  return a.tape()->push(Op::Sub, std::move(out), a.index(), b.index(), any_grad(a, b));
}

Var mul(const Var& a, const Var& b) {
  require_same_tape("mul", a, b);
  require_same_shape("mul", a.value(), b.value());
  Array out = a.value();
  const Array& bv = b.value();
  for (std::size_t k = 0; k < out.size(); ++k) out[k] *= bv[k];
  return a.tape()->push(Op::Mul, std::move(out), a.index(), b.index(), any_grad(a, b));
}

Var matvec(const Var& w, const Var& x) {
  require_same_tape("matvec", w, x);
  const Array& wv = w.value();
  const Array& xv = x.value();
  if (wv.rank() != 2 || xv.rank() != 1 || wv.cols() != xv.rows())
    throw ShapeError("matvec: need {r,c} x {c}");
  Array out = Array::vec(wv.rows());
  for (std::size_t r = 0; r < wv.rows(); ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < wv.cols(); ++c) acc += wv.at(r, c) * xv[c];
    out[r] = acc;
  }
  return w.tape()->push(Op::MatVec, std::move(out), w.index(), x.index(), any_grad(w, x));
}

Var matmul(const Var& a, const Var& b) {
  require_same_tape("matmul", a, b);
  const Array& av = a.value();
  const Array& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.cols() != bv.rows())
    throw ShapeError("matmul: need {r,k} x {k,c}");
  Array out = Array::mat(av.rows(), bv.cols());
  for (std::size_t r = 0; r < av.rows(); ++r)
    for (std::size_t k = 0; k < av.cols(); ++k) {
      const double ark = av.at(r, k);
      if (ark == 0.0) continue;
      for (std::size_t c = 0; c < bv.cols(); ++c) out.at(r, c) += ark * bv.at(k, c);
    }
  return a.tape()->push(Op::MatMul, std::move(out), a.index(), b.index(), any_grad(a, b));
}

Var transpose(const Var& a) {
  const Array& av = a.value();
  if (av.rank() != 2) throw ShapeError("transpose: need a matrix");
  Array out = Array::mat(av.cols(), av.rows());
  for (std::size_t r = 0; r < av.rows(); ++r)
    for (std::size_t c = 0; c < av.cols(); ++c) out.at(c, r) = av.at(r, c);
  return a.tape()->push(Op::Transpose, std::move(out), a.index(), -1, any_grad(a));
}

namespace {

template <typename F>
Var unary_elementwise(Op op, const Var& a, F f) {
  Array out = a.value();
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = f(out[k]);
  return a.tape()->push(op, std::move(out), a.index(), -1, any_grad(a));
}

}  // namespace

Var relu(const Var& a) {
  return unary_elementwise(Op::Relu, a, [](double x) { return x > 0.0 ? x : 0.0; });
}

Var abs(const Var& a) {
  return unary_elementwise(Op::Abs, a, [](double x) { return std::fabs(x); });
}

Var sqrt(const Var& a) {
  const Array& av = a.value();
  for (std::size_t k = 0; k < av.size(); ++k)
    if (av[k] < 0.0) throw DomainError("sqrt: negative operand");
  return unary_elementwise(Op::Sqrt, a, [](double x) { return std::sqrt(x); });
}

Var exp(const Var& a) {
  return unary_elementwise(Op::Exp, a, [](double x) { return std::exp(x); });
}

Var log(const Var& a) {
  const Array& av = a.value();
  for (std::size_t k = 0; k < av.size(); ++k)
    if (av[k] <= 0.0) throw DomainError("log: nonpositive operand");
  return unary_elementwise(Op::Log, a, [](double x) { return std::log(x); });
}

Var sum(const Var& a) {
  const Array& av = a.value();
  double acc = 0.0;
  for (std::size_t k = 0; k < av.size(); ++k) acc += av[k];
  return a.tape()->push(Op::Sum, Array::scalar(acc), a.index(), -1, any_grad(a));
}

Var mean(const Var& a) {
  const Array& av = a.value();
  double acc = 0.0;
  for (std::size_t k = 0; k < av.size(); ++k) acc += av[k];
  acc /= static_cast<double>(av.size());
  return a.tape()->push(Op::Mean, Array::scalar(acc), a.index(), -1, any_grad(a));
}

Var square(const Var& a) {
  return unary_elementwise(Op::Square, a, [](double x) { return x * x; });
}

Var scale(const Var& a, double c) {
  Array out = a.value();
  for (std::size_t k = 0; k < out.size(); ++k) out[k] *= c;
  return a.tape()->push(Op::Scale, std::move(out), a.index(), -1, any_grad(a), c);
}

Var gather(const Var& a, const std::vector<int>& idx) {
  const Array& av = a.value();
  std::vector<std::int32_t> aux(idx.begin(), idx.end());
  Array out;
  if (av.rank() == 1) {
    out = Array::vec(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) {
      if (idx[k] < 0 || static_cast<std::size_t>(idx[k]) >= av.rows())
        throw ShapeError("gather: index out of range");
      out[k] = av[idx[k]];
    }
  } else if (av.rank() == 2) {
    out = Array::mat(idx.size(), av.cols());
    for (std::size_t k = 0; k < idx.size(); ++k) {
      if (idx[k] < 0 || static_cast<std::size_t>(idx[k]) >= av.rows())
        throw ShapeError("gather: row index out of range");
      for (std::size_t c = 0; c < av.cols(); ++c) out.at(k, c) = av.at(idx[k], c);
    }
  } else {
    throw ShapeError("gather: need vector or matrix");
  }
  return a.tape()->push(Op::Gather, std::move(out), a.index(), -1, any_grad(a), 0.0,
                        std::move(aux));
}

Var gather_cols(const Var& a, const std::vector<int>& idx) {
  const Array& av = a.value();
  if (av.rank() != 2) throw ShapeError("gather_cols: need a matrix");
  std::vector<std::int32_t> aux(idx.begin(), idx.end());
  Array out = Array::mat(av.rows(), idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (idx[k] < 0 || static_cast<std::size_t>(idx[k]) >= av.cols())
      throw ShapeError("gather_cols: column index out of range");
    for (std::size_t r = 0; r < av.rows(); ++r) out.at(r, k) = av.at(r, idx[k]);
  }
  return a.tape()->push(Op::GatherCols, std::move(out), a.index(), -1, any_grad(a), 0.0,
                        std::move(aux));
}

Var concat(const Var& a, const Var& b) {
  require_same_tape("concat", a, b);
  const Array& av = a.value();
  const Array& bv = b.value();
  if (av.rank() != 1 || bv.rank() != 1) throw ShapeError("concat: need vectors");
  Array out = Array::vec(av.rows() + bv.rows());
  for (std::size_t k = 0; k < av.rows(); ++k) out[k] = av[k];
  for (std::size_t k = 0; k < bv.rows(); ++k) out[av.rows() + k] = bv[k];
  return a.tape()->push(Op::Concat, std::move(out), a.index(), b.index(), any_grad(a, b));
}

Var stack_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("stack_rows: empty");
  Tape* t = parts[0].tape();
  const std::size_t cc = parts[0].value().cols();
  std::size_t total = 0;
  bool ng = false;
  std::vector<std::int32_t> aux;
  aux.reserve(parts.size());
  for (const Var& p : parts) {
    if (p.tape() != t) throw ShapeError("stack_rows: vars from different tapes");
    const Array& pv = p.value();
    if (pv.rank() != 2 || pv.cols() != cc) throw ShapeError("stack_rows: column mismatch");
    total += pv.rows();
    ng = ng || t->needs_grad_of(p.index());
    aux.push_back(p.index());
  }
  Array out = Array::mat(total, cc);
  std::size_t row0 = 0;
  for (const Var& p : parts) {
    const Array& pv = p.value();
    for (std::size_t r = 0; r < pv.rows(); ++r)
      for (std::size_t c = 0; c < cc; ++c) out.at(row0 + r, c) = pv.at(r, c);
    row0 += pv.rows();
  }
  return t->push(Op::StackRows, std::move(out), -1, -1, ng, 0.0, std::move(aux));
}

Var stack_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("stack_cols: empty");
  Tape* t = parts[0].tape();
  const std::size_t d = parts[0].value().rows();
  bool ng = false;
  std::vector<std::int32_t> aux;
  aux.reserve(parts.size());
  for (const Var& p : parts) {
    if (p.tape() != t) throw ShapeError("stack_cols: vars from different tapes");
    const Array& pv = p.value();
    if (pv.rows() != d || pv.cols() != 1) throw ShapeError("stack_cols: need {d} columns");
    ng = ng || t->needs_grad_of(p.index());
    aux.push_back(p.index());
  }
  Array out = Array::mat(d, parts.size());
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Array& pv = parts[k].value();
    for (std::size_t r = 0; r < d; ++r) out.at(r, k) = pv[r];
  }
  return t->push(Op::StackCols, std::move(out), -1, -1, ng, 0.0, std::move(aux));
}

Var pair_sqdist(const Var& a, const Var& b) {
  require_same_tape("pair_sqdist", a, b);
  const Array& av = a.value();
  const Array& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.rows() != bv.rows())
    throw ShapeError("pair_sqdist: need {d,n} and {d,m}");
  const std::size_t d = av.rows();
  Array out = Array::mat(av.cols(), bv.cols());
  for (std::size_t i = 0; i < av.cols(); ++i)
    for (std::size_t j = 0; j < bv.cols(); ++j) {
      double acc = 0.0;
      for (std::size_t r = 0; r < d; ++r) {
        const double diff = av.at(r, i) - bv.at(r, j);
        acc += diff * diff;
      }
      out.at(i, j) = acc;
    }
  return a.tape()->push(Op::PairSqDist, std::move(out), a.index(), b.index(), any_grad(a, b));
}

Var rbf_ksum(const Var& sqdist, const std::vector<double>& bands) {
  if (bands.empty()) throw ShapeError("rbf_ksum: no bandwidths");
  Array out = sqdist.value();
  for (std::size_t k = 0; k < out.size(); ++k) {
    double acc = 0.0;
    for (double h : bands) acc += std::exp(-out[k] / (2.0 * h * h));
    out[k] = acc;
  }
  return sqdist.tape()->push(Op::RbfKsum, std::move(out), sqdist.index(), -1, any_grad(sqdist),
                             0.0, {}, bands);
}

Var matched_sq_cost(const Var& pred, const std::vector<int>& cols, const Array& ref) {
  const Array& pv = pred.value();
  if (pv.rank() != 2 || ref.rank() != 2 || pv.rows() != ref.rows())
    throw ShapeError("matched_sq_cost: dimension mismatch");
  if (cols.size() != ref.cols()) throw ShapeError("matched_sq_cost: cols/ref mismatch");
  const std::size_t d = pv.rows();
  const std::size_t m = cols.size();
  double acc = 0.0;
  std::vector<std::int32_t> aux(cols.begin(), cols.end());
  std::vector<double> payload(d * m);
  for (std::size_t s = 0; s < m; ++s) {
    if (cols[s] < 0 || static_cast<std::size_t>(cols[s]) >= pv.cols())
      throw ShapeError("matched_sq_cost: column index out of range");
    for (std::size_t r = 0; r < d; ++r) {
      const double rv = ref.at(r, s);
      payload[s * d + r] = rv;
      const double diff = pv.at(r, cols[s]) - rv;
      acc += diff * diff;
    }
  }
  acc /= static_cast<double>(m);
  return pred.tape()->push(Op::MatchedSqCost, Array::scalar(acc), pred.index(), -1,
                           any_grad(pred), 0.0, std::move(aux), std::move(payload));
}

}  // namespace pdr::ad
