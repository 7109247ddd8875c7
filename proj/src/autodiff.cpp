#include "t2g/autodiff.hpp"

#include <fmt/format.h>

#include <cmath>

#include "t2g/error.hpp"

namespace t2g::ad {

const Matrix& Var::value() const { return tape->value(*this); }

Var Tape::constant(Matrix value) {
  nodes_.push_back({std::move(value), {}, false, false, {}});
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::leaf(Matrix value) {
  nodes_.push_back({std::move(value), {}, true, false, {}});
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Matrix Tape::grad(Var v) const {
  const Node& n = nodes_[v.id];
  if (!n.has_grad) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

Var Tape::record(Matrix value, std::initializer_list<Var> parents, Backward fn) {
  bool needs = false;
  for (const Var& p : parents) needs |= nodes_[p.id].needs_grad;
  nodes_.push_back({std::move(value), {}, needs, false, needs ? std::move(fn) : Backward{}});
  return {this, static_cast<int>(nodes_.size()) - 1};
}

void Tape::accumulate(Var v, const Matrix& g) {
  Node& n = nodes_[v.id];
  if (!n.needs_grad) return;
  if (!n.has_grad) {
    n.grad = g;
    n.has_grad = true;
  } else {
    n.grad += g;
  }
}

void Tape::backward(Var loss) {
  if (value(loss).size() != 1) throw Error(ErrorKind::kInvalidInput, "backward needs a scalar loss");
  for (auto& n : nodes_) n.has_grad = false;
  accumulate(loss, Matrix::Ones(1, 1));
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.has_grad || !n.backward) continue;
    // Copy: accumulate() may reallocate nothing, but the callback reads grad
    // while writing parents' grads.
    const Matrix g = n.grad;
    n.backward(*this, g);
  }
}

namespace {

void require(bool ok, const char* what, const Matrix& a, const Matrix& b) {
  if (!ok) {
    throw Error(ErrorKind::kInvalidInput,
                fmt::format("{}: shape mismatch {}x{} vs {}x{}", what, a.rows(), a.cols(), b.rows(), b.cols()));
  }
}

}  // namespace

Var matmul(Var a, Var b) {
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  require(av.cols() == bv.rows(), "matmul", av, bv);
  return a.tape->record(av * bv, {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (t.needs_grad(a)) t.accumulate(a, g * t.value(b).transpose());
    if (t.needs_grad(b)) t.accumulate(b, t.value(a).transpose() * g);
  });
}

Var add(Var a, Var b) {
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.rows() == bv.rows() && av.cols() == bv.cols()) {
    return a.tape->record(av + bv, {a, b}, [a, b](Tape& t, const Matrix& g) {
      t.accumulate(a, g);
      t.accumulate(b, g);
    });
  }
  require(bv.rows() == 1 && bv.cols() == av.cols(), "add", av, bv);
  Matrix out = av.rowwise() + bv.row(0);
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    if (t.needs_grad(b)) t.accumulate(b, g.colwise().sum());
  });
}

Var sub(Var a, Var b) {
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  require(av.rows() == bv.rows() && av.cols() == bv.cols(), "sub", av, bv);
  return a.tape->record(av - bv, {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    if (t.needs_grad(b)) t.accumulate(b, -g);
  });
}

Var mul(Var a, Var b) {
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  require(av.rows() == bv.rows() && av.cols() == bv.cols(), "mul", av, bv);
  return a.tape->record(av.cwiseProduct(bv), {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (t.needs_grad(a)) t.accumulate(a, g.cwiseProduct(t.value(b)));
    if (t.needs_grad(b)) t.accumulate(b, g.cwiseProduct(t.value(a)));
  });
}

Var scale(Var a, double s) {
  return a.tape->record(a.value() * s, {a}, [a, s](Tape& t, const Matrix& g) { t.accumulate(a, g * s); });
}

Var relu(Var a) {
  Matrix out = a.value().cwiseMax(0.0);
  return a.tape->record(std::move(out), {a}, [a](Tape& t, const Matrix& g) {
    t.accumulate(a, (t.value(a).array() > 0.0).cast<double>().matrix().cwiseProduct(g));
  });
}

Var silu(Var a) {
  const Matrix& x = a.value();
  const Matrix sig = (1.0 + (-x.array()).exp()).inverse().matrix();
  Matrix out = x.cwiseProduct(sig);
  return a.tape->record(std::move(out), {a}, [a, sig](Tape& t, const Matrix& g) {
    const auto& x = t.value(a).array();
    const Matrix d = (sig.array() * (1.0 + x * (1.0 - sig.array()))).matrix();
    t.accumulate(a, d.cwiseProduct(g));
  });
}

Var concat_cols(Var a, Var b) {
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  require(av.rows() == bv.rows(), "concat_cols", av, bv);
  Matrix out(av.rows(), av.cols() + bv.cols());
  out << av, bv;
  const auto ac = av.cols();
  const auto bc = bv.cols();
  return a.tape->record(std::move(out), {a, b}, [a, b, ac, bc](Tape& t, const Matrix& g) {
    if (t.needs_grad(a)) t.accumulate(a, g.leftCols(ac));
    if (t.needs_grad(b)) t.accumulate(b, g.rightCols(bc));
  });
}

Var slice_cols(Var a, int begin, int count) {
  const Matrix& av = a.value();
  if (begin < 0 || count < 0 || begin + count > av.cols()) {
    throw Error(ErrorKind::kInvalidInput, "slice_cols out of range");
  }
  Matrix out = av.middleCols(begin, count);
  return a.tape->record(std::move(out), {a}, [a, begin, count](Tape& t, const Matrix& g) {
    Matrix full = Matrix::Zero(t.value(a).rows(), t.value(a).cols());
    full.middleCols(begin, count) = g;
    t.accumulate(a, full);
  });
}

Var block_max(Var a, int blocks) {
  const Matrix& av = a.value();
  if (blocks <= 0 || av.rows() % blocks != 0) throw Error(ErrorKind::kInvalidInput, "block_max: uneven blocks");
  const Eigen::Index n = av.rows() / blocks;
  Matrix out(blocks, av.cols());
  std::vector<Eigen::Index> arg(static_cast<std::size_t>(blocks * av.cols()));
  for (int b = 0; b < blocks; ++b) {
    for (Eigen::Index c = 0; c < av.cols(); ++c) {
      Eigen::Index best = b * n;
      for (Eigen::Index r = b * n + 1; r < (b + 1) * n; ++r) {
        if (av(r, c) > av(best, c)) best = r;
      }
      out(b, c) = av(best, c);
      arg[static_cast<std::size_t>(b * av.cols() + c)] = best;
    }
  }
  return a.tape->record(std::move(out), {a}, [a, arg, blocks](Tape& t, const Matrix& g) {
    Matrix full = Matrix::Zero(t.value(a).rows(), t.value(a).cols());
    const auto cols = full.cols();
    for (int b = 0; b < blocks; ++b) {
      for (Eigen::Index c = 0; c < cols; ++c) full(arg[static_cast<std::size_t>(b * cols + c)], c) += g(b, c);
    }
    t.accumulate(a, full);
  });
}

Var repeat_rows(Var a, int n) {
  const Matrix& av = a.value();
  if (n <= 0) throw Error(ErrorKind::kInvalidInput, "repeat_rows: count must be positive");
  Matrix out(av.rows() * n, av.cols());
  for (Eigen::Index r = 0; r < av.rows(); ++r) out.middleRows(r * n, n).rowwise() = av.row(r);
  return a.tape->record(std::move(out), {a}, [a, n](Tape& t, const Matrix& g) {
    const Eigen::Index rows = t.value(a).rows();
    Matrix s(rows, g.cols());
    for (Eigen::Index r = 0; r < rows; ++r) s.row(r) = g.middleRows(r * n, n).colwise().sum();
    t.accumulate(a, s);
  });
}

Var segment_mean(Var a, const std::vector<int>& offsets) {
  const Matrix& av = a.value();
  if (offsets.size() < 2 || offsets.front() != 0 || offsets.back() != av.rows()) {
    throw Error(ErrorKind::kInvalidInput, "segment_mean: offsets must span all rows");
  }
  const auto segs = static_cast<Eigen::Index>(offsets.size() - 1);
  Matrix out(segs, av.cols());
  for (Eigen::Index s = 0; s < segs; ++s) {
    const int len = offsets[s + 1] - offsets[s];
    if (len <= 0) throw Error(ErrorKind::kInvalidInput, "segment_mean: empty segment");
    out.row(s) = av.middleRows(offsets[s], len).colwise().mean();
  }
  return a.tape->record(std::move(out), {a}, [a, offsets](Tape& t, const Matrix& g) {
    Matrix full(t.value(a).rows(), t.value(a).cols());
    for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
      const int len = offsets[s + 1] - offsets[s];
      for (int r = offsets[s]; r < offsets[s + 1]; ++r) full.row(r) = g.row(static_cast<Eigen::Index>(s)) / len;
    }
    t.accumulate(a, full);
  });
}

Var gather_rows(Var table, const std::vector<int>& index) {
  const Matrix& tv = table.value();
  Matrix out(static_cast<Eigen::Index>(index.size()), tv.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || index[i] >= tv.rows()) throw Error(ErrorKind::kInvalidInput, "gather_rows: bad index");
    out.row(static_cast<Eigen::Index>(i)) = tv.row(index[i]);
  }
  return table.tape->record(std::move(out), {table}, [table, index](Tape& t, const Matrix& g) {
    Matrix full = Matrix::Zero(t.value(table).rows(), t.value(table).cols());
    for (std::size_t i = 0; i < index.size(); ++i) full.row(index[i]) += g.row(static_cast<Eigen::Index>(i));
    t.accumulate(table, full);
  });
}

Var attention(Var q, Var k, Var v, int heads, int tokens) {
  const Matrix& qv = q.value();
  const Matrix& kv = k.value();
  const Matrix& vv = v.value();
  const Eigen::Index batch = qv.rows();
  const Eigen::Index d = qv.cols();
  if (heads <= 0 || d % heads != 0 || tokens <= 0 || kv.rows() != batch * tokens || vv.rows() != kv.rows() ||
      kv.cols() != d || vv.cols() != d) {
    throw Error(ErrorKind::kInvalidInput, "attention: inconsistent shapes");
  }
  const Eigen::Index dh = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  // weights(b, h * tokens + j)
  Matrix weights(batch, heads * tokens);
  Matrix out = Matrix::Zero(batch, d);
  for (Eigen::Index b = 0; b < batch; ++b) {
    for (int h = 0; h < heads; ++h) {
      Eigen::VectorXd s(tokens);
      for (int j = 0; j < tokens; ++j) {
        s[j] = qv.row(b).segment(h * dh, dh).dot(kv.row(b * tokens + j).segment(h * dh, dh)) * inv_sqrt;
      }
      const double m = s.maxCoeff();
      Eigen::VectorXd e = (s.array() - m).exp();
      e /= e.sum();
      for (int j = 0; j < tokens; ++j) {
        weights(b, h * tokens + j) = e[j];
        out.row(b).segment(h * dh, dh) += e[j] * vv.row(b * tokens + j).segment(h * dh, dh);
      }
    }
  }
  return q.tape->record(std::move(out), {q, k, v}, [q, k, v, heads, tokens, weights, dh, inv_sqrt](
                                                        Tape& t, const Matrix& g) {
    const Matrix& qv = t.value(q);
    const Matrix& kv = t.value(k);
    const Matrix& vv = t.value(v);
    Matrix gq = Matrix::Zero(qv.rows(), qv.cols());
    Matrix gk = Matrix::Zero(kv.rows(), kv.cols());
    Matrix gv = Matrix::Zero(vv.rows(), vv.cols());
    for (Eigen::Index b = 0; b < qv.rows(); ++b) {
      for (int h = 0; h < heads; ++h) {
        const auto go = g.row(b).segment(h * dh, dh);
        Eigen::VectorXd gw(tokens);
        for (int j = 0; j < tokens; ++j) {
          const double w = weights(b, h * tokens + j);
          gv.row(b * tokens + j).segment(h * dh, dh) += w * go;
          gw[j] = go.dot(vv.row(b * tokens + j).segment(h * dh, dh));
        }
        // Softmax backward.
        double dot = 0.0;
        for (int j = 0; j < tokens; ++j) dot += weights(b, h * tokens + j) * gw[j];
        for (int j = 0; j < tokens; ++j) {
          const double gs = weights(b, h * tokens + j) * (gw[j] - dot) * inv_sqrt;
          gq.row(b).segment(h * dh, dh) += gs * kv.row(b * tokens + j).segment(h * dh, dh);
          gk.row(b * tokens + j).segment(h * dh, dh) += gs * qv.row(b).segment(h * dh, dh);
        }
      }
    }
    t.accumulate(q, gq);
    t.accumulate(k, gk);
    t.accumulate(v, gv);
  });
}

Var squared_error(Var a, Var target) {
  const Matrix& av = a.value();
  const Matrix& tv = target.value();
  require(av.rows() == tv.rows() && av.cols() == tv.cols(), "squared_error", av, tv);
  const Matrix diff = av - tv;
  const double n = static_cast<double>(av.rows());
  Matrix out(1, 1);
  out(0, 0) = diff.squaredNorm() / n;
  return a.tape->record(std::move(out), {a, target}, [a, target, diff, n](Tape& t, const Matrix& g) {
    const Matrix d = diff * (2.0 * g(0, 0) / n);
    t.accumulate(a, d);
    if (t.needs_grad(target)) t.accumulate(target, -d);
  });
}

Var bce_with_logits(Var logits, const Matrix& targets) {
  const Matrix& z = logits.value();
  require(z.rows() == targets.rows() && z.cols() == targets.cols(), "bce_with_logits", z, targets);
  const double n = static_cast<double>(z.size());
  // log(1 + exp(-|z|)) + max(z, 0) - z*y
  const Matrix per = (z.array().abs() * -1.0).exp().log1p() + z.array().max(0.0) - z.array() * targets.array();
  Matrix out(1, 1);
  out(0, 0) = per.sum() / n;
  return logits.tape->record(std::move(out), {logits}, [logits, targets, n](Tape& t, const Matrix& g) {
    const Matrix sig = (1.0 + (-t.value(logits).array()).exp()).inverse().matrix();
    t.accumulate(logits, (sig - targets) * (g(0, 0) / n));
  });
}

Var sum(Var a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return a.tape->record(std::move(out), {a}, [a](Tape& t, const Matrix& g) {
    t.accumulate(a, Matrix::Constant(t.value(a).rows(), t.value(a).cols(), g(0, 0)));
  });
}

}  // namespace t2g::ad
