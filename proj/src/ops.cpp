// Copyright 2026 The smoe Authors
// SPDX-License-Identifier: Apache-2.0

#include "smoe/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "smoe/kernels.hpp"

namespace smoe {
namespace {

template <class F>
Var unary(Var a, Matrix value, F local_grad) {
  const std::size_t ia = a.id();
  return a.tape().record(std::move(value), {a}, [ia, local_grad](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    const Matrix& x = t.value(ia);
    const Matrix& y = t.value(self);
    Matrix& dst = t.grad_slot(ia);
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i] * local_grad(x[i], y[i]);
  });
}

void require_same_tape(Var a, Var b, const char* what) {
  if (&a.tape() != &b.tape()) throw std::invalid_argument(std::string(what) + ": mixed tapes");
}

}  // namespace

Var matmul(Var a, Var b) {
  require_same_tape(a, b, "matmul");
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(kernel::matmul(a.value(), b.value()), {a, b},
                         [ia, ib](Tape& t, std::size_t self) {
                           const Matrix& g = t.grad(self);
                           if (t.requires_grad(ia)) t.accumulate(ia, kernel::matmul_nt(g, t.value(ib)));
                           if (t.requires_grad(ib)) t.accumulate(ib, kernel::matmul_tn(t.value(ia), g));
                         });
}

Var add(Var a, Var b) {
  require_same_tape(a, b, "add");
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(kernel::add(a.value(), b.value()), {a, b},
                         [ia, ib](Tape& t, std::size_t self) {
                           const Matrix& g = t.grad(self);
                           t.accumulate(ia, g);
                           t.accumulate(ib, g);
                         });
}

Var sub(Var a, Var b) {
  require_same_tape(a, b, "sub");
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(kernel::sub(a.value(), b.value()), {a, b},
                         [ia, ib](Tape& t, std::size_t self) {
                           const Matrix& g = t.grad(self);
                           t.accumulate(ia, g);
                           t.accumulate(ib, kernel::scale(g, -1.0));
                         });
}

Var mul(Var a, Var b) {
  require_same_tape(a, b, "mul");
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(kernel::hadamard(a.value(), b.value()), {a, b},
                         [ia, ib](Tape& t, std::size_t self) {
                           const Matrix& g = t.grad(self);
                           if (t.requires_grad(ia)) t.accumulate(ia, kernel::hadamard(g, t.value(ib)));
                           if (t.requires_grad(ib)) t.accumulate(ib, kernel::hadamard(g, t.value(ia)));
                         });
}

Var scale(Var a, double s) {
  return unary(a, kernel::scale(a.value(), s), [s](double, double) { return s; });
}

Var add_row_broadcast(Var m, Var bias) {
  require_same_tape(m, bias, "add_row_broadcast");
  if (bias.rows() != 1 || bias.cols() != m.cols()) {
    throw ShapeError("add_row_broadcast: " + m.value().shape_str() + " vs bias " +
                     bias.value().shape_str());
  }
  Matrix out = m.value();
  const Matrix& b = bias.value();
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += b[c];
  }
  const std::size_t im = m.id(), ib = bias.id();
  return m.tape().record(std::move(out), {m, bias}, [im, ib](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    t.accumulate(im, g);
    t.accumulate(ib, kernel::col_sums(g));
  });
}

Var mul_col_broadcast(Var m, Var col) {
  require_same_tape(m, col, "mul_col_broadcast");
  if (col.cols() != 1 || col.rows() != m.rows()) {
    throw ShapeError("mul_col_broadcast: " + m.value().shape_str() + " vs column " +
                     col.value().shape_str());
  }
  Matrix out = m.value();
  const Matrix& w = col.value();
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (double& v : out.row(r)) v *= w[r];
  const std::size_t im = m.id(), ic = col.id();
  return m.tape().record(std::move(out), {m, col}, [im, ic](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    const Matrix& x = t.value(im);
    const Matrix& w = t.value(ic);
    if (t.requires_grad(im)) {
      Matrix& dx = t.grad_slot(im);
      for (std::size_t r = 0; r < g.rows(); ++r) {
        const auto gr = g.row(r);
        auto dr = dx.row(r);
        for (std::size_t c = 0; c < gr.size(); ++c) dr[c] += gr[c] * w[r];
      }
    }
    if (t.requires_grad(ic)) {
      Matrix& dw = t.grad_slot(ic);
      for (std::size_t r = 0; r < g.rows(); ++r) {
        const auto gr = g.row(r);
        const auto xr = x.row(r);
        double acc = 0.0;
        for (std::size_t c = 0; c < gr.size(); ++c) acc += gr[c] * xr[c];
        dw[r] += acc;
      }
    }
  });
}

Var mul_row_broadcast(Var m, Var row) {
  require_same_tape(m, row, "mul_row_broadcast");
  if (row.rows() != 1 || row.cols() != m.cols()) {
    throw ShapeError("mul_row_broadcast: " + m.value().shape_str() + " vs row " +
                     row.value().shape_str());
  }
  Matrix out = m.value();
  const Matrix& w = row.value();
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto dst = out.row(r);
    for (std::size_t c = 0; c < dst.size(); ++c) dst[c] *= w[c];
  }
  const std::size_t im = m.id(), iw = row.id();
  return m.tape().record(std::move(out), {m, row}, [im, iw](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    const Matrix& x = t.value(im);
    const Matrix& w = t.value(iw);
    if (t.requires_grad(im)) {
      Matrix& dx = t.grad_slot(im);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) dx(r, c) += g(r, c) * w[c];
    }
    if (t.requires_grad(iw)) {
      Matrix& dw = t.grad_slot(iw);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) dw[c] += g(r, c) * x(r, c);
    }
  });
}

Var transpose(Var a) {
  const std::size_t ia = a.id();
  return a.tape().record(a.value().transposed(), {a}, [ia](Tape& t, std::size_t self) {
    t.accumulate(ia, t.grad(self).transposed());
  });
}

Var relu(Var a) {
  return unary(a, kernel::relu(a.value()), [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var tanh(Var a) {
  return unary(a, kernel::tanh(a.value()), [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var a) {
  return unary(a, kernel::sigmoid(a.value()), [](double, double y) { return y * (1.0 - y); });
}

Var softplus(Var a) {
  return unary(a, kernel::softplus(a.value()),
               [](double x, double) { return kernel::sigmoid(x); });
}

Var normal_cdf(Var a) {
  Matrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = kernel::std_normal_cdf(a.value()[i]);
  return unary(a, std::move(out), [](double x, double) { return kernel::std_normal_pdf(x); });
}

Var softmax_rows(Var a) {
  const std::size_t ia = a.id();
  return a.tape().record(kernel::softmax_rows(a.value()), {a}, [ia](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    const Matrix& y = t.value(self);
    Matrix& dx = t.grad_slot(ia);
    for (std::size_t r = 0; r < y.rows(); ++r) {
      const auto yr = y.row(r);
      const auto gr = g.row(r);
      double dot = 0.0;
      for (std::size_t c = 0; c < yr.size(); ++c) dot += yr[c] * gr[c];
      auto dr = dx.row(r);
      for (std::size_t c = 0; c < yr.size(); ++c) dr[c] += yr[c] * (gr[c] - dot);
    }
  });
}

Var sum(Var a) {
  double total = 0.0;
  for (double v : a.value().data()) total += v;
  return a.tape().record(Matrix::scalar(total), {a}, [ia = a.id()](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    for (double& d : t.grad_slot(ia).data()) d += g;
  });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  return scale(sum(a), n == 0.0 ? 0.0 : 1.0 / n);
}

Var col_sum(Var a) {
  const std::size_t ia = a.id();
  return a.tape().record(kernel::col_sums(a.value()), {a}, [ia](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    Matrix& dx = t.grad_slot(ia);
    for (std::size_t r = 0; r < dx.rows(); ++r) {
      auto dr = dx.row(r);
      for (std::size_t c = 0; c < dr.size(); ++c) dr[c] += g[c];
    }
  });
}

Var cv_squared(Var a) {
  const double value = kernel::cv_squared(a.value().data());
  const std::size_t ia = a.id();
  return a.tape().record(Matrix::scalar(value), {a}, [ia](Tape& t, std::size_t self) {
    const Matrix& v = t.value(ia);
    const std::size_t n = v.size();
    if (n <= 1) return;
    double m = 0.0;
    for (double x : v.data()) m += x;
    m /= static_cast<double>(n);
    if (m == 0.0) return;
    double s2 = 0.0;
    for (double x : v.data()) s2 += (x - m) * (x - m);
    s2 /= static_cast<double>(n);
    const double g = t.grad(self)[0];
    const double inv_n = 1.0 / static_cast<double>(n);
    Matrix& dx = t.grad_slot(ia);
    for (std::size_t i = 0; i < n; ++i) {
      dx[i] += g * (2.0 * (v[i] - m) * inv_n / (m * m) - 2.0 * s2 * inv_n / (m * m * m));
    }
  });
}

Var gather_rows(Var a, std::span<const std::size_t> rows) {
  const Matrix& src = a.value();
  Matrix out(rows.size(), src.cols());
  for (std::size_t t = 0; t < rows.size(); ++t) {
    if (rows[t] >= src.rows()) throw std::out_of_range("gather_rows: row index out of range");
    std::copy(src.row(rows[t]).begin(), src.row(rows[t]).end(), out.row(t).begin());
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia, idx = std::move(idx)](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    Matrix& dx = t.grad_slot(ia);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      const auto gr = g.row(r);
      auto dr = dx.row(idx[r]);
      for (std::size_t c = 0; c < gr.size(); ++c) dr[c] += gr[c];
    }
  });
}

Var gather_column(Var a, std::span<const std::size_t> rows, std::size_t col) {
  const Matrix& src = a.value();
  if (col >= src.cols()) throw std::out_of_range("gather_column: column index out of range");
  Matrix out(rows.size(), 1);
  for (std::size_t t = 0; t < rows.size(); ++t) {
    if (rows[t] >= src.rows()) throw std::out_of_range("gather_column: row index out of range");
    out[t] = src(rows[t], col);
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a},
                         [ia, col, idx = std::move(idx)](Tape& t, std::size_t self) {
                           const Matrix& g = t.grad(self);
                           Matrix& dx = t.grad_slot(ia);
                           for (std::size_t r = 0; r < idx.size(); ++r) dx(idx[r], col) += g[r];
                         });
}

Var scatter_add_rows(std::span<const Var> parts, std::span<const std::vector<std::size_t>> rows,
                     std::size_t total_rows, std::size_t cols) {
  if (parts.size() != rows.size()) throw std::invalid_argument("scatter_add_rows: parts/rows count");
  if (parts.empty()) throw std::invalid_argument("scatter_add_rows: no parts");
  Matrix out(total_rows, cols);
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Matrix& v = parts[p].value();
    if (v.cols() != cols || v.rows() != rows[p].size()) {
      throw ShapeError("scatter_add_rows: part " + std::to_string(p) + " has shape " +
                       v.shape_str() + " for " + std::to_string(rows[p].size()) + " rows of width " +
                       std::to_string(cols));
    }
    for (std::size_t r = 0; r < rows[p].size(); ++r) {
      if (rows[p][r] >= total_rows) throw std::out_of_range("scatter_add_rows: row out of range");
      auto dst = out.row(rows[p][r]);
      const auto src = v.row(r);
      for (std::size_t c = 0; c < cols; ++c) dst[c] += src[c];
    }
  }
  std::vector<std::size_t> ids;
  ids.reserve(parts.size());
  for (const Var& p : parts) ids.push_back(p.id());
  std::vector<std::vector<std::size_t>> idx(rows.begin(), rows.end());
  return parts.front().tape().record(
      std::move(out), parts,
      [ids = std::move(ids), idx = std::move(idx)](Tape& t, std::size_t self) {
        const Matrix& g = t.grad(self);
        for (std::size_t p = 0; p < ids.size(); ++p) {
          if (!t.requires_grad(ids[p])) continue;
          Matrix& dx = t.grad_slot(ids[p]);
          for (std::size_t r = 0; r < idx[p].size(); ++r) {
            const auto gr = g.row(idx[p][r]);
            auto dr = dx.row(r);
            for (std::size_t c = 0; c < gr.size(); ++c) dr[c] += gr[c];
          }
        }
      });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw ShapeError("concat_cols: row count mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<std::size_t> ids, offsets;
  std::size_t off = 0;
  for (const Var& p : parts) {
    for (std::size_t r = 0; r < rows; ++r) {
      const auto src = p.value().row(r);
      std::copy(src.begin(), src.end(), out.row(r).begin() + static_cast<std::ptrdiff_t>(off));
    }
    ids.push_back(p.id());
    offsets.push_back(off);
    off += p.cols();
  }
  return parts.front().tape().record(
      std::move(out), parts,
      [ids = std::move(ids), offsets = std::move(offsets)](Tape& t, std::size_t self) {
        const Matrix& g = t.grad(self);
        for (std::size_t p = 0; p < ids.size(); ++p) {
          if (!t.requires_grad(ids[p])) continue;
          Matrix& dx = t.grad_slot(ids[p]);
          for (std::size_t r = 0; r < dx.rows(); ++r) {
            auto dr = dx.row(r);
            const auto gr = g.row(r);
            for (std::size_t c = 0; c < dr.size(); ++c) dr[c] += gr[offsets[p] + c];
          }
        }
      });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no parts");
  const std::size_t cols = parts.front().cols();
  std::vector<double> data;
  std::vector<std::size_t> ids, offsets;
  std::size_t rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) throw ShapeError("concat_rows: column count mismatch");
    data.insert(data.end(), p.value().data().begin(), p.value().data().end());
    ids.push_back(p.id());
    offsets.push_back(rows * cols);
    rows += p.rows();
  }
  return parts.front().tape().record(
      Matrix(rows, cols, std::move(data)), parts,
      [ids = std::move(ids), offsets = std::move(offsets)](Tape& t, std::size_t self) {
        const Matrix& g = t.grad(self);
        for (std::size_t p = 0; p < ids.size(); ++p) {
          if (!t.requires_grad(ids[p])) continue;
          Matrix& dx = t.grad_slot(ids[p]);
          for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g[offsets[p] + i];
        }
      });
}

Var softmax_cross_entropy(Var logits, std::span<const std::size_t> targets) {
  const Matrix& z = logits.value();
  if (targets.size() != z.rows()) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(targets.size()) +
                     " targets for logits " + z.shape_str());
  }
  Matrix probs = kernel::softmax_rows(z);
  double total = 0.0;
  for (std::size_t r = 0; r < z.rows(); ++r) {
    if (targets[r] >= z.cols()) throw std::out_of_range("softmax_cross_entropy: target id");
    const auto row = z.row(r);
    const double hi = *std::max_element(row.begin(), row.end());
    double acc = 0.0;
    for (double v : row) acc += std::exp(v - hi);
    total += hi + std::log(acc) - row[targets[r]];
  }
  const double n = static_cast<double>(z.rows());
  std::vector<std::size_t> tgt(targets.begin(), targets.end());
  const std::size_t il = logits.id();
  return logits.tape().record(
      Matrix::scalar(n == 0.0 ? 0.0 : total / n), {logits},
      [il, n, probs = std::move(probs), tgt = std::move(tgt)](Tape& t, std::size_t self) {
        const double g = t.grad(self)[0] / n;
        Matrix& dx = t.grad_slot(il);
        for (std::size_t r = 0; r < probs.rows(); ++r) {
          const auto pr = probs.row(r);
          auto dr = dx.row(r);
          for (std::size_t c = 0; c < pr.size(); ++c) dr[c] += g * pr[c];
          dr[tgt[r]] -= g;
        }
      });
}

Var dropout(Var a, double p, Rng& rng) {
  if (p <= 0.0) return a;
  if (p >= 1.0) throw std::invalid_argument("dropout: probability must be < 1");
  Matrix mask(a.rows(), a.cols());
  const double keep_scale = 1.0 / (1.0 - p);
  for (double& m : mask.data()) m = rng.uniform() < p ? 0.0 : keep_scale;
  return mul(a, a.tape().constant(std::move(mask)));
}

}  // namespace smoe
