#include "more/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace more {

namespace {

constexpr double kCosEps = 1e-12;

void same_tape(Var a, Var b) {
  if (a.tape == nullptr || a.tape != b.tape)
    throw ValueError("operands recorded on different tapes");
}

// rows/cols view treating 1-D tensors as a single row
std::pair<std::size_t, std::size_t> as_rows(const Tensor& t) {
  if (t.ndim() <= 1) return {1, t.size()};
  if (t.ndim() == 2) return {t.shape()[0], t.shape()[1]};
  throw ShapeError("expected 1-D or 2-D tensor, got " + shape_str(t.shape()));
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

const Tensor& Var::value() const { return tape->value(id); }

Var Tape::leaf(Tensor value, std::string name) {
  return wrap(push(std::move(value), std::move(name), {}, nullptr));
}

int Tape::push(Tensor value, std::string op, std::vector<int> parents, BackwardFn backward) {
  nodes_.push_back(Node{std::move(value), std::move(op), std::move(parents), std::move(backward)});
  return static_cast<int>(nodes_.size()) - 1;
}

void Tape::backward(Var loss) {
  if (backward_done_) throw ValueError("backward already run on this tape");
  if (loss.tape != this) throw ValueError("loss recorded on a different tape");
  const Tensor& lv = nodes_[loss.id].value;
  if (lv.size() != 1) throw ValueError("backward: loss must be a scalar");
  backward_done_ = true;
  grads_.assign(nodes_.size(), Tensor());
  grads_[loss.id] = Tensor(lv.shape(), 1.0);
  for (int i = loss.id; i >= 0; --i) {
    if (grads_[i].size() == 0 || !nodes_[i].backward) continue;
    nodes_[i].backward(*this, grads_[i]);
  }
}

Tensor Tape::grad(int id) const {
  if (!backward_done_) throw ValueError("grad: backward has not run");
  if (grads_[id].size() == 0) return Tensor(nodes_[id].value.shape());
  return grads_[id];
}

void Tape::accumulate(int id, const Tensor& g) {
  Tensor& slot = grads_[id];
  if (slot.size() == 0) {
    slot = g;
    return;
  }
  for (std::size_t i = 0; i < slot.size(); ++i) slot[i] += g[i];
}

std::string Tape::first_nonfinite() const {
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    if (!nodes_[i].value.all_finite())
      return nodes_[i].op + "#" + std::to_string(i);
  return {};
}

// ---- elementwise ----------------------------------------------------------

Var add(Var a, Var b) {
  same_tape(a, b);
  Tensor out = tv::add(a.value(), b.value());
  const int ai = a.id, bi = b.id;
  return a.tape->wrap(a.tape->push(std::move(out), "add", {ai, bi},
      [ai, bi](Tape& t, const Tensor& g) {
        t.accumulate(ai, g);
        t.accumulate(bi, g);
      }));
}

Var sub(Var a, Var b) {
  same_tape(a, b);
  Tensor out = tv::sub(a.value(), b.value());
  const int ai = a.id, bi = b.id;
  return a.tape->wrap(a.tape->push(std::move(out), "sub", {ai, bi},
      [ai, bi](Tape& t, const Tensor& g) {
        t.accumulate(ai, g);
        t.accumulate(bi, tv::scale(g, -1.0));
      }));
}

Var mul(Var a, Var b) {
  same_tape(a, b);
  Tensor av = a.value(), bv = b.value();
  Tensor out = tv::mul(av, bv);
  const int ai = a.id, bi = b.id;
  return a.tape->wrap(a.tape->push(std::move(out), "mul", {ai, bi},
      [ai, bi, av, bv](Tape& t, const Tensor& g) {
        t.accumulate(ai, tv::mul(g, bv));
        t.accumulate(bi, tv::mul(g, av));
      }));
}

Var add_rowvec(Var a, Var v) {
  same_tape(a, v);
  const Tensor& av = a.value();
  const Tensor& vv = v.value();
  auto [m, n] = as_rows(av);
  if (vv.size() != n)
    throw ShapeError("add_rowvec: vector size " + std::to_string(vv.size()) +
                     " vs row width " + std::to_string(n));
  Tensor out = av;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += vv[j];
  const int ai = a.id, vi = v.id;
  Shape vshape = vv.shape();
  return a.tape->wrap(a.tape->push(std::move(out), "add_rowvec", {ai, vi},
      [ai, vi, m, n, vshape](Tape& t, const Tensor& g) {
        t.accumulate(ai, g);
        Tensor dv(vshape);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) dv[j] += g[i * n + j];
        t.accumulate(vi, dv);
      }));
}

Var scale(Var a, double c) { return affine(a, c, 0.0); }

Var affine(Var a, double alpha, double beta) {
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = alpha * out[i] + beta;
  const int ai = a.id;
  return a.tape->wrap(a.tape->push(std::move(out), "affine", {ai},
      [ai, alpha](Tape& t, const Tensor& g) { t.accumulate(ai, tv::scale(g, alpha)); }));
}

Var cmul(Var a, const Tensor& mask) {
  Tensor out = tv::mul(a.value(), mask);
  const int ai = a.id;
  Tensor m = mask;
  return a.tape->wrap(a.tape->push(std::move(out), "cmul", {ai},
      [ai, m](Tape& t, const Tensor& g) { t.accumulate(ai, tv::mul(g, m)); }));
}

// ---- linear algebra -------------------------------------------------------

Var matmul(Var a, Var b) {
  same_tape(a, b);
  Tensor av = a.value(), bv = b.value();
  Tensor out = tv::matmul(av, bv);
  const int ai = a.id, bi = b.id;
  return a.tape->wrap(a.tape->push(std::move(out), "matmul", {ai, bi},
      [ai, bi, av, bv](Tape& t, const Tensor& g) {
        t.accumulate(ai, tv::matmul(g, tv::transpose(bv)));
        t.accumulate(bi, tv::matmul(tv::transpose(av), g));
      }));
}

Var transpose(Var a) {
  Tensor out = tv::transpose(a.value());
  const int ai = a.id;
  return a.tape->wrap(a.tape->push(std::move(out), "transpose", {ai},
      [ai](Tape& t, const Tensor& g) { t.accumulate(ai, tv::transpose(g)); }));
}

Var reshape(Var a, Shape shape) {
  const Tensor& av = a.value();
  if (shape_size(shape) != av.size())
    throw ShapeError("reshape: size mismatch " + shape_str(av.shape()) + " -> " + shape_str(shape));
  Tensor out = Tensor::from(shape, std::vector<double>(av.data(), av.data() + av.size()));
  const int ai = a.id;
  Shape orig = av.shape();
  return a.tape->wrap(a.tape->push(std::move(out), "reshape", {ai},
      [ai, orig](Tape& t, const Tensor& g) {
        t.accumulate(ai, Tensor::from(orig, std::vector<double>(g.data(), g.data() + g.size())));
      }));
}

// ---- nonlinearities -------------------------------------------------------

Var softmax_rows(Var a) {
  const Tensor& av = a.value();
  auto [m, n] = as_rows(av);
  Tensor out = av;
  for (std::size_t i = 0; i < m; ++i) {
    double mx = out[i * n];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, out[i * n + j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      out[i * n + j] = std::exp(out[i * n + j] - mx);
      sum += out[i * n + j];
    }
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= sum;
  }
  const int ai = a.id;
  Tensor y = out;
  return a.tape->wrap(a.tape->push(std::move(out), "softmax", {ai},
      [ai, y, m, n](Tape& t, const Tensor& g) {
        Tensor dx(y.shape());
        for (std::size_t i = 0; i < m; ++i) {
          double gy = 0.0;
          for (std::size_t j = 0; j < n; ++j) gy += g[i * n + j] * y[i * n + j];
          for (std::size_t j = 0; j < n; ++j)
            dx[i * n + j] = y[i * n + j] * (g[i * n + j] - gy);
        }
        t.accumulate(ai, dx);
      }));
}

namespace {
Var unary(Var a, const char* name, double (*fwd)(double), double (*dfwd)(double)) {
  Tensor x = a.value();
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(x[i]);
  const int ai = a.id;
  return a.tape->wrap(a.tape->push(std::move(out), name, {ai},
      [ai, x, dfwd](Tape& t, const Tensor& g) {
        Tensor dx = x;
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = g[i] * dfwd(x[i]);
        t.accumulate(ai, dx);
      }));
}
}  // namespace

Var tanh_op(Var a) {
  return unary(a, "tanh", [](double v) { return std::tanh(v); },
               [](double v) {
                 const double y = std::tanh(v);
                 return 1.0 - y * y;
               });
}

Var gelu(Var a) {
  return unary(a, "gelu",
               [](double v) { return 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0))); },
               [](double v) {
                 const double cdf = 0.5 * (1.0 + std::erf(v / std::sqrt(2.0)));
                 const double pdf = std::exp(-0.5 * v * v) / std::sqrt(2.0 * M_PI);
                 return cdf + v * pdf;
               });
}

Var leaky_relu(Var a, double slope) {
  Tensor x = a.value();
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i)
    if (out[i] < 0.0) out[i] *= slope;
  const int ai = a.id;
  return a.tape->wrap(a.tape->push(std::move(out), "leaky_relu", {ai},
      [ai, x, slope](Tape& t, const Tensor& g) {
        Tensor dx = x;
        for (std::size_t i = 0; i < dx.size(); ++i)
          dx[i] = g[i] * (x[i] >= 0.0 ? 1.0 : slope);
        t.accumulate(ai, dx);
      }));
}

Var exp_op(Var a) {
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(out[i]);
  const int ai = a.id;
  Tensor y = out;
  return a.tape->wrap(a.tape->push(std::move(out), "exp", {ai},
      [ai, y](Tape& t, const Tensor& g) { t.accumulate(ai, tv::mul(g, y)); }));
}

Var log_op(Var a) {
  Tensor x = a.value();
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (x[i] <= 0.0) throw NumericError("log of non-positive value");
    out[i] = std::log(x[i]);
  }
  const int ai = a.id;
  return a.tape->wrap(a.tape->push(std::move(out), "log", {ai},
      [ai, x](Tape& t, const Tensor& g) {
        Tensor dx = x;
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = g[i] / x[i];
        t.accumulate(ai, dx);
      }));
}

Var softplus(Var a) {
  Tensor x = a.value();
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = std::max(x[i], 0.0) + std::log1p(std::exp(-std::abs(x[i])));
  const int ai = a.id;
  return a.tape->wrap(a.tape->push(std::move(out), "softplus", {ai},
      [ai, x](Tape& t, const Tensor& g) {
        Tensor dx = x;
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = g[i] * sigmoid(x[i]);
        t.accumulate(ai, dx);
      }));
}

// ---- reductions -----------------------------------------------------------

Var sum_all(Var a) {
  const Tensor& av = a.value();
  double s = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) s += av[i];
  const int ai = a.id;
  Shape shape = av.shape();
  return a.tape->wrap(a.tape->push(Tensor::scalar(s), "sum", {ai},
      [ai, shape](Tape& t, const Tensor& g) {
        t.accumulate(ai, Tensor(shape, g[0]));
      }));
}

Var mean_all(Var a) {
  return scale(sum_all(a), 1.0 / static_cast<double>(a.value().size()));
}

Var mean_rows(Var a) {
  const Tensor& av = a.value();
  auto [m, n] = as_rows(av);
  Tensor out(Shape{n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j] += av[i * n + j];
  for (std::size_t j = 0; j < n; ++j) out[j] /= static_cast<double>(m);
  const int ai = a.id;
  Shape orig = av.shape();
  return a.tape->wrap(a.tape->push(std::move(out), "mean_rows", {ai},
      [ai, m, n, orig](Tape& t, const Tensor& g) {
        Tensor dx(orig);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) dx[i * n + j] = g[j] / static_cast<double>(m);
        t.accumulate(ai, dx);
      }));
}

Var row_sums(Var a) {
  const Tensor& av = a.value();
  auto [m, n] = as_rows(av);
  Tensor out(Shape{m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i] += av[i * n + j];
  const int ai = a.id;
  Shape orig = av.shape();
  return a.tape->wrap(a.tape->push(std::move(out), "row_sums", {ai},
      [ai, m, n, orig](Tape& t, const Tensor& g) {
        Tensor dx(orig);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) dx[i * n + j] = g[i];
        t.accumulate(ai, dx);
      }));
}

// ---- indexing -------------------------------------------------------------

Var slice_rows(Var a, std::size_t r0, std::size_t n) {
  const Tensor& av = a.value();
  const std::size_t cols = av.cols();
  if (r0 + n > av.rows()) throw ShapeError("slice_rows out of range");
  Tensor out(Shape{n, cols});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < cols; ++j) out.at(i, j) = av.at(r0 + i, j);
  const int ai = a.id;
  Shape orig = av.shape();
  return a.tape->wrap(a.tape->push(std::move(out), "slice_rows", {ai},
      [ai, r0, n, cols, orig](Tape& t, const Tensor& g) {
        Tensor dx(orig);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < cols; ++j) dx[(r0 + i) * cols + j] = g[i * cols + j];
        t.accumulate(ai, dx);
      }));
}

Var slice_cols(Var a, std::size_t c0, std::size_t n) {
  const Tensor& av = a.value();
  const std::size_t rows = av.rows(), cols = av.cols();
  if (c0 + n > cols) throw ShapeError("slice_cols out of range");
  Tensor out(Shape{rows, n});
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < n; ++j) out.at(i, j) = av.at(i, c0 + j);
  const int ai = a.id;
  Shape orig = av.shape();
  return a.tape->wrap(a.tape->push(std::move(out), "slice_cols", {ai},
      [ai, c0, n, rows, cols, orig](Tape& t, const Tensor& g) {
        Tensor dx(orig);
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < n; ++j) dx[i * cols + c0 + j] = g[i * n + j];
        t.accumulate(ai, dx);
      }));
}

Var gather_rows(Var a, const std::vector<std::size_t>& idx) {
  const Tensor& av = a.value();
  const std::size_t cols = av.cols();
  for (std::size_t r : idx)
    if (r >= av.rows()) throw ValueError("gather_rows: index out of range");
  Tensor out(Shape{idx.size(), cols});
  for (std::size_t i = 0; i < idx.size(); ++i)
    for (std::size_t j = 0; j < cols; ++j) out.at(i, j) = av.at(idx[i], j);
  const int ai = a.id;
  Shape orig = av.shape();
  auto index = idx;
  return a.tape->wrap(a.tape->push(std::move(out), "gather_rows", {ai},
      [ai, index, cols, orig](Tape& t, const Tensor& g) {
        Tensor dx(orig);
        for (std::size_t i = 0; i < index.size(); ++i)
          for (std::size_t j = 0; j < cols; ++j) dx[index[i] * cols + j] += g[i * cols + j];
        t.accumulate(ai, dx);
      }));
}

Var gather_elems(Var a, const std::vector<std::size_t>& idx) {
  const Tensor& av = a.value();
  for (std::size_t k : idx)
    if (k >= av.size()) throw ValueError("gather_elems: index out of range");
  Tensor out(Shape{idx.size()});
  for (std::size_t i = 0; i < idx.size(); ++i) out[i] = av[idx[i]];
  const int ai = a.id;
  Shape orig = av.shape();
  auto index = idx;
  return a.tape->wrap(a.tape->push(std::move(out), "gather_elems", {ai},
      [ai, index, orig](Tape& t, const Tensor& g) {
        Tensor dx(orig);
        for (std::size_t i = 0; i < index.size(); ++i) dx[index[i]] += g[i];
        t.accumulate(ai, dx);
      }));
}

Var permute_gather(Var a, const std::vector<std::size_t>& index_map, Shape out_shape) {
  const Tensor& av = a.value();
  if (shape_size(out_shape) != index_map.size())
    throw ShapeError("permute_gather: out shape does not match index map size");
  Tensor out(out_shape);
  for (std::size_t i = 0; i < index_map.size(); ++i) {
    if (index_map[i] >= av.size()) throw ValueError("permute_gather: index out of range");
    out[i] = av[index_map[i]];
  }
  const int ai = a.id;
  Shape orig = av.shape();
  auto index = index_map;
  return a.tape->wrap(a.tape->push(std::move(out), "permute_gather", {ai},
      [ai, index, orig](Tape& t, const Tensor& g) {
        Tensor dx(orig);
        for (std::size_t i = 0; i < index.size(); ++i) dx[index[i]] += g[i];
        t.accumulate(ai, dx);
      }));
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ValueError("concat_rows: no parts");
  const std::size_t cols = parts[0].value().cols();
  std::size_t rows = 0;
  for (const Var& p : parts) {
    same_tape(parts[0], p);
    if (p.value().cols() != cols) throw ShapeError("concat_rows: column widths differ");
    rows += p.value().rows();
  }
  Tensor out(Shape{rows, cols});
  std::vector<int> ids;
  std::vector<std::size_t> row_counts;
  std::size_t r = 0;
  for (const Var& p : parts) {
    const Tensor& pv = p.value();
    for (std::size_t i = 0; i < pv.rows(); ++i)
      for (std::size_t j = 0; j < cols; ++j) out.at(r + i, j) = pv.at(i, j);
    r += pv.rows();
    ids.push_back(p.id);
    row_counts.push_back(pv.rows());
  }
  Tape* tape = parts[0].tape;
  std::vector<int> parent_ids = ids;
  return tape->wrap(tape->push(std::move(out), "concat_rows", parent_ids,
      [ids, row_counts, cols](Tape& t, const Tensor& g) {
        std::size_t r0 = 0;
        for (std::size_t p = 0; p < ids.size(); ++p) {
          Tensor dx(Shape{row_counts[p], cols});
          for (std::size_t i = 0; i < row_counts[p]; ++i)
            for (std::size_t j = 0; j < cols; ++j) dx.at(i, j) = g[(r0 + i) * cols + j];
          t.accumulate(ids[p], dx);
          r0 += row_counts[p];
        }
      }));
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ValueError("concat_cols: no parts");
  const std::size_t rows = parts[0].value().rows();
  std::size_t cols = 0;
  for (const Var& p : parts) {
    same_tape(parts[0], p);
    if (p.value().rows() != rows) throw ShapeError("concat_cols: row counts differ");
    cols += p.value().cols();
  }
  Tensor out(Shape{rows, cols});
  std::vector<int> ids;
  std::vector<std::size_t> widths;
  std::size_t c = 0;
  for (const Var& p : parts) {
    const Tensor& pv = p.value();
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < pv.cols(); ++j) out.at(i, c + j) = pv.at(i, j);
    c += pv.cols();
    ids.push_back(p.id);
    widths.push_back(pv.cols());
  }
  Tape* tape = parts[0].tape;
  std::vector<int> parent_ids = ids;
  return tape->wrap(tape->push(std::move(out), "concat_cols", parent_ids,
      [ids, widths, rows, cols](Tape& t, const Tensor& g) {
        std::size_t c0 = 0;
        for (std::size_t p = 0; p < ids.size(); ++p) {
          Tensor dx(Shape{rows, widths[p]});
          for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < widths[p]; ++j) dx.at(i, j) = g[i * cols + c0 + j];
          t.accumulate(ids[p], dx);
          c0 += widths[p];
        }
      }));
}

Var repeat_rows(Var row, std::size_t m) {
  const Tensor& rv = row.value();
  auto [r, n] = as_rows(rv);
  if (r != 1) throw ShapeError("repeat_rows: input must be a single row");
  Tensor out(Shape{m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.at(i, j) = rv[j];
  const int ri = row.id;
  Shape orig = rv.shape();
  return row.tape->wrap(row.tape->push(std::move(out), "repeat_rows", {ri},
      [ri, m, n, orig](Tape& t, const Tensor& g) {
        Tensor dx(orig);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) dx[j] += g[i * n + j];
        t.accumulate(ri, dx);
      }));
}

// ---- normalization --------------------------------------------------------

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  same_tape(x, gamma);
  same_tape(x, beta);
  Tensor xv = x.value();
  const Tensor& gv = gamma.value();
  const Tensor& bv = beta.value();
  auto [m, n] = as_rows(xv);
  if (gv.size() != n || bv.size() != n) throw ShapeError("layer_norm: parameter width mismatch");
  Tensor out(xv.shape());
  Tensor xhat(xv.shape());
  std::vector<double> inv_std(m);
  for (std::size_t i = 0; i < m; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += xv[i * n + j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = xv[i * n + j] - mu;
      var += d * d;
    }
    var /= static_cast<double>(n);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat[i * n + j] = (xv[i * n + j] - mu) * inv_std[i];
      out[i * n + j] = gv[j] * xhat[i * n + j] + bv[j];
    }
  }
  const int xi = x.id, gi = gamma.id, bi = beta.id;
  Shape gshape = gv.shape(), bshape = bv.shape();
  Tensor gsave = gv;
  return x.tape->wrap(x.tape->push(std::move(out), "layer_norm", {xi, gi, bi},
      [xi, gi, bi, m, n, xhat, inv_std, gsave, gshape, bshape](Tape& t, const Tensor& g) {
        Tensor dx(xhat.shape());
        Tensor dgamma(gshape);
        Tensor dbeta(bshape);
        for (std::size_t i = 0; i < m; ++i) {
          double sum_dh = 0.0, sum_dh_xhat = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            const double dh = g[i * n + j] * gsave[j];
            sum_dh += dh;
            sum_dh_xhat += dh * xhat[i * n + j];
            dgamma[j] += g[i * n + j] * xhat[i * n + j];
            dbeta[j] += g[i * n + j];
          }
          for (std::size_t j = 0; j < n; ++j) {
            const double dh = g[i * n + j] * gsave[j];
            dx[i * n + j] = inv_std[i] * (dh - sum_dh / static_cast<double>(n) -
                                          xhat[i * n + j] * sum_dh_xhat / static_cast<double>(n));
          }
        }
        t.accumulate(xi, dx);
        t.accumulate(gi, dgamma);
        t.accumulate(bi, dbeta);
      }));
}

Var l2_normalize_rows(Var x, double eps) {
  Tensor xv = x.value();
  auto [m, n] = as_rows(xv);
  Tensor out(xv.shape());
  std::vector<double> norms(m);
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += xv[i * n + j] * xv[i * n + j];
    norms[i] = std::sqrt(s);
    const double d = norms[i] + eps;
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = xv[i * n + j] / d;
  }
  const int xi = x.id;
  return x.tape->wrap(x.tape->push(std::move(out), "l2_normalize", {xi},
      [xi, xv, norms, m, n, eps](Tape& t, const Tensor& g) {
        Tensor dx(xv.shape());
        for (std::size_t i = 0; i < m; ++i) {
          const double d = norms[i] + eps;
          const double nsafe = std::max(norms[i], eps);
          double xg = 0.0;
          for (std::size_t j = 0; j < n; ++j) xg += xv[i * n + j] * g[i * n + j];
          for (std::size_t j = 0; j < n; ++j)
            dx[i * n + j] = g[i * n + j] / d - xv[i * n + j] * xg / (nsafe * d * d);
        }
        t.accumulate(xi, dx);
      }));
}

Var rows_scale(Var a, Var s) {
  same_tape(a, s);
  Tensor av = a.value();
  Tensor sv = s.value();
  auto [m, n] = as_rows(av);
  if (sv.size() != m) throw ShapeError("rows_scale: scale vector length mismatch");
  Tensor out(av.shape());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = av[i * n + j] * sv[i];
  const int ai = a.id, si = s.id;
  Shape sshape = sv.shape();
  return a.tape->wrap(a.tape->push(std::move(out), "rows_scale", {ai, si},
      [ai, si, av, sv, m, n, sshape](Tape& t, const Tensor& g) {
        Tensor da(av.shape());
        Tensor ds(sshape);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) {
            da[i * n + j] = g[i * n + j] * sv[i];
            ds[i] += g[i * n + j] * av[i * n + j];
          }
        t.accumulate(ai, da);
        t.accumulate(si, ds);
      }));
}

// ---- similarity and reductions over pairs ---------------------------------

Var dot(Var a, Var b) {
  same_tape(a, b);
  Tensor av = a.value(), bv = b.value();
  if (av.size() != bv.size()) throw ShapeError("dot: sizes differ");
  double s = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) s += av[i] * bv[i];
  const int ai = a.id, bi = b.id;
  return a.tape->wrap(a.tape->push(Tensor::scalar(s), "dot", {ai, bi},
      [ai, bi, av, bv](Tape& t, const Tensor& g) {
        Tensor da(av.shape()), db(bv.shape());
        for (std::size_t i = 0; i < av.size(); ++i) {
          da[i] = g[0] * bv[i];
          db[i] = g[0] * av[i];
        }
        t.accumulate(ai, da);
        t.accumulate(bi, db);
      }));
}

Var cosine(Var a, Var b) {
  same_tape(a, b);
  Tensor av = a.value(), bv = b.value();
  if (av.size() != bv.size()) throw ShapeError("cosine: sizes differ");
  double d = 0.0, na2 = 0.0, nb2 = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    d += av[i] * bv[i];
    na2 += av[i] * av[i];
    nb2 += bv[i] * bv[i];
  }
  const double na = std::sqrt(na2), nb = std::sqrt(nb2);
  if (na == 0.0 || nb == 0.0) {
    // degenerate token: value 0, no gradient
    return a.tape->wrap(a.tape->push(Tensor::scalar(0.0), "cosine0", {a.id, b.id}, nullptr));
  }
  const double den = na * nb + kCosEps;
  const double s = d / den;
  const int ai = a.id, bi = b.id;
  return a.tape->wrap(a.tape->push(Tensor::scalar(s), "cosine", {ai, bi},
      [ai, bi, av, bv, s, na, nb, den](Tape& t, const Tensor& g) {
        Tensor da(av.shape()), db(bv.shape());
        for (std::size_t i = 0; i < av.size(); ++i) {
          da[i] = g[0] * (bv[i] / den - s * nb * av[i] / (na * den));
          db[i] = g[0] * (av[i] / den - s * na * bv[i] / (nb * den));
        }
        t.accumulate(ai, da);
        t.accumulate(bi, db);
      }));
}

Var logsumexp(Var a) {
  Tensor av = a.value();
  double mx = av[0];
  for (std::size_t i = 1; i < av.size(); ++i) mx = std::max(mx, av[i]);
  double sum = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) sum += std::exp(av[i] - mx);
  const double lse = mx + std::log(sum);
  const int ai = a.id;
  return a.tape->wrap(a.tape->push(Tensor::scalar(lse), "logsumexp", {ai},
      [ai, av, lse](Tape& t, const Tensor& g) {
        Tensor dx(av.shape());
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = g[0] * std::exp(av[i] - lse);
        t.accumulate(ai, dx);
      }));
}

// ---- top-k ----------------------------------------------------------------

std::vector<std::size_t> topk_indices(const Tensor& x, std::size_t k) {
  const std::size_t n = x.size();
  if (k < 1 || k > n)
    throw ValueError("topk: k=" + std::to_string(k) + " out of range [1, " + std::to_string(n) + "]");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&x](std::size_t a, std::size_t b) { return x[a] > x[b]; });
  order.resize(k);
  return order;
}

TopK topk(Var x, std::size_t k) {
  auto idx = topk_indices(x.value(), k);
  return TopK{gather_elems(x, idx), idx};
}

// ---- losses ---------------------------------------------------------------

Var softmax_cross_entropy(Var logits, const std::vector<std::size_t>& labels) {
  Tensor zv = logits.value();
  auto [m, n] = as_rows(zv);
  if (labels.size() != m) throw ShapeError("softmax_cross_entropy: label count mismatch");
  for (std::size_t y : labels)
    if (y >= n) throw ValueError("softmax_cross_entropy: label out of range");
  Tensor probs(zv.shape());
  double loss = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    double mx = zv[i * n];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, zv[i * n + j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      probs[i * n + j] = std::exp(zv[i * n + j] - mx);
      sum += probs[i * n + j];
    }
    for (std::size_t j = 0; j < n; ++j) probs[i * n + j] /= sum;
    loss += mx + std::log(sum) - zv[i * n + labels[i]];
  }
  loss /= static_cast<double>(m);
  const int zi = logits.id;
  auto ys = labels;
  return logits.tape->wrap(logits.tape->push(Tensor::scalar(loss), "softmax_xent", {zi},
      [zi, probs, ys, m, n](Tape& t, const Tensor& g) {
        Tensor dz = probs;
        for (std::size_t i = 0; i < m; ++i) dz[i * n + ys[i]] -= 1.0;
        for (std::size_t i = 0; i < dz.size(); ++i) dz[i] *= g[0] / static_cast<double>(m);
        t.accumulate(zi, dz);
      }));
}

Var multilabel_soft_margin(Var logits, const std::vector<double>& targets) {
  Tensor zv = logits.value();
  if (targets.size() != zv.size()) throw ShapeError("multilabel_soft_margin: target count mismatch");
  const std::size_t c = zv.size();
  double loss = 0.0;
  for (std::size_t i = 0; i < c; ++i) {
    const double z = zv[i], y = targets[i];
    const double sp_neg = std::max(-z, 0.0) + std::log1p(std::exp(-std::abs(z)));
    const double sp_pos = std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
    loss += y * sp_neg + (1.0 - y) * sp_pos;
  }
  loss /= static_cast<double>(c);
  const int zi = logits.id;
  auto ys = targets;
  return logits.tape->wrap(logits.tape->push(Tensor::scalar(loss), "soft_margin", {zi},
      [zi, zv, ys, c](Tape& t, const Tensor& g) {
        Tensor dz(zv.shape());
        for (std::size_t i = 0; i < c; ++i)
          dz[i] = g[0] * (sigmoid(zv[i]) - ys[i]) / static_cast<double>(c);
        t.accumulate(zi, dz);
      }));
}

// ---- gradient checking ----------------------------------------------------

double finite_diff_check(
    const std::function<std::pair<double, Tensor>(const Tensor&)>& f,
    const Tensor& x, double step) {
  const auto [base, grad] = f(x);
  (void)base;
  if (!grad.same_shape(x)) throw ShapeError("finite_diff_check: gradient shape mismatch");
  double max_err = 0.0;
  Tensor xp = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    xp[i] = x[i] + step;
    const double fp = f(xp).first;
    xp[i] = x[i] - step;
    const double fm = f(xp).first;
    xp[i] = x[i];
    const double central = (fp - fm) / (2.0 * step);
    const double err = std::abs(grad[i] - central) /
                       (std::abs(grad[i]) + std::abs(central) + 1e-8);
    max_err = std::max(max_err, err);
  }
  return max_err;
}

}  // namespace more
