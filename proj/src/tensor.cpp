#include "ive/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

namespace ive::num {

long numel(const Shape& shape) {
  long n = 1;
  for (int d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

namespace {

[[noreturn]] void shape_fail(const char* op, const Shape& a, const Shape& b) {
  throw std::invalid_argument(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

// Treats a tensor as a [rows, cols] matrix where cols is the last dimension.
void as_matrix(const Shape& shape, long& rows, long& cols) {
  if (shape.empty()) {
    rows = 1;
    cols = 1;
    return;
  }
  cols = shape.back();
  rows = 1;
  for (std::size_t i = 0; i + 1 < shape.size(); ++i) rows *= shape[i];
}

// C += A(m,k) * B(k,n), row-major.
void gemm_nn(const double* a, const double* b, double* c, long m, long k, long n) {
  for (long i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (long p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (long j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C += A(m,k) * B(n,k)^T  -> C is (m,n); rows of A dotted with rows of B.
void gemm_nt(const double* a, const double* b, double* c, long m, long k, long n) {
  for (long i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (long j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double acc = 0.0;
      for (long p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] += acc;
    }
  }
}

// C += A(m,k)^T * B(m,n) -> C is (k,n).
void gemm_tn(const double* a, const double* b, double* c, long m, long k, long n) {
  for (long i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    const double* brow = b + i * n;
    for (long p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      double* crow = c + p * n;
      for (long j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace

double Tensor::scalar() const {
  if (numel(node_->shape) != 1) throw std::invalid_argument("scalar(): tensor has shape " + shape_str(node_->shape));
  return node_->value[0];
}

detail::Node* Tape::make(Shape shape, bool requires_grad) {
  nodes_.emplace_back();
  detail::Node& n = nodes_.back();
  n.shape = std::move(shape);
  n.value.assign(numel(n.shape), 0.0);
  n.requires_grad = requires_grad;
  if (requires_grad) n.grad.assign(n.value.size(), 0.0);
  return &n;
}

Tensor Tape::leaf(Parameter& p) { return leaf(p, sink_resolver_ ? sink_resolver_(p) : &p.grad); }

Tensor Tape::leaf(Parameter& p, std::vector<double>* sink) {
  detail::Node* n = make(p.shape, true);
  n->value = p.value;
  n->backprop = [n, sink]() {
    for (std::size_t i = 0; i < n->grad.size(); ++i) (*sink)[i] += n->grad[i];
  };
  return Tensor(n);
}

Tensor Tape::constant(Shape shape, std::vector<double> data) {
  if (numel(shape) != static_cast<long>(data.size()))
    throw std::invalid_argument("constant: shape " + shape_str(shape) + " does not match data length " +
                                std::to_string(data.size()));
  detail::Node* n = make(std::move(shape), false);
  n->value = std::move(data);
  return Tensor(n);
}

Tensor Tape::constant_like(const Tensor& t, double fill) {
  detail::Node* n = make(t.shape(), false);
  std::fill(n->value.begin(), n->value.end(), fill);
  return Tensor(n);
}

Tensor Tape::scalar_const(double v) { return constant({1}, {v}); }

Tensor Tape::add(Tensor a, Tensor b) {
  if (a.shape() != b.shape()) shape_fail("add", a.shape(), b.shape());
  detail::Node *pa = a.node_, *pb = b.node_;
  detail::Node* n = make(a.shape(), pa->requires_grad || pb->requires_grad);
  for (std::size_t i = 0; i < n->value.size(); ++i) n->value[i] = pa->value[i] + pb->value[i];
  if (n->requires_grad) {
    n->backprop = [n, pa, pb]() {
      if (pa->requires_grad)
        for (std::size_t i = 0; i < n->grad.size(); ++i) pa->grad[i] += n->grad[i];
      if (pb->requires_grad)
        for (std::size_t i = 0; i < n->grad.size(); ++i) pb->grad[i] += n->grad[i];
    };
  }
  return Tensor(n);
}

Tensor Tape::sub(Tensor a, Tensor b) {
  if (a.shape() != b.shape()) shape_fail("sub", a.shape(), b.shape());
  detail::Node *pa = a.node_, *pb = b.node_;
  detail::Node* n = make(a.shape(), pa->requires_grad || pb->requires_grad);
  for (std::size_t i = 0; i < n->value.size(); ++i) n->value[i] = pa->value[i] - pb->value[i];
  if (n->requires_grad) {
    n->backprop = [n, pa, pb]() {
      if (pa->requires_grad)
        for (std::size_t i = 0; i < n->grad.size(); ++i) pa->grad[i] += n->grad[i];
      if (pb->requires_grad)
        for (std::size_t i = 0; i < n->grad.size(); ++i) pb->grad[i] -= n->grad[i];
    };
  }
  return Tensor(n);
}

Tensor Tape::mul(Tensor a, Tensor b) {
  if (a.shape() != b.shape()) shape_fail("mul", a.shape(), b.shape());
  detail::Node *pa = a.node_, *pb = b.node_;
  detail::Node* n = make(a.shape(), pa->requires_grad || pb->requires_grad);
  for (std::size_t i = 0; i < n->value.size(); ++i) n->value[i] = pa->value[i] * pb->value[i];
  if (n->requires_grad) {
    n->backprop = [n, pa, pb]() {
      if (pa->requires_grad)
        for (std::size_t i = 0; i < n->grad.size(); ++i) pa->grad[i] += n->grad[i] * pb->value[i];
      if (pb->requires_grad)
        for (std::size_t i = 0; i < n->grad.size(); ++i) pb->grad[i] += n->grad[i] * pa->value[i];
    };
  }
  return Tensor(n);
}

Tensor Tape::div(Tensor a, Tensor b) {
  if (a.shape() != b.shape()) shape_fail("div", a.shape(), b.shape());
  detail::Node *pa = a.node_, *pb = b.node_;
  detail::Node* n = make(a.shape(), pa->requires_grad || pb->requires_grad);
  for (std::size_t i = 0; i < n->value.size(); ++i) n->value[i] = pa->value[i] / pb->value[i];
  if (n->requires_grad) {
    n->backprop = [n, pa, pb]() {
      if (pa->requires_grad)
        for (std::size_t i = 0; i < n->grad.size(); ++i) pa->grad[i] += n->grad[i] / pb->value[i];
      if (pb->requires_grad)
        for (std::size_t i = 0; i < n->grad.size(); ++i)
          pb->grad[i] -= n->grad[i] * pa->value[i] / (pb->value[i] * pb->value[i]);
    };
  }
  return Tensor(n);
}

Tensor Tape::add_rowvec(Tensor a, Tensor v) {
  long rows, cols, vrows, vcols;
  as_matrix(a.shape(), rows, cols);
  as_matrix(v.shape(), vrows, vcols);
  if (vrows != 1 || vcols != cols) shape_fail("add_rowvec", a.shape(), v.shape());
  detail::Node *pa = a.node_, *pv = v.node_;
  detail::Node* n = make(a.shape(), pa->requires_grad || pv->requires_grad);
  for (long i = 0; i < rows; ++i)
    for (long j = 0; j < cols; ++j) n->value[i * cols + j] = pa->value[i * cols + j] + pv->value[j];
  if (n->requires_grad) {
    n->backprop = [n, pa, pv, rows, cols]() {
      if (pa->requires_grad)
        for (std::size_t i = 0; i < n->grad.size(); ++i) pa->grad[i] += n->grad[i];
      if (pv->requires_grad)
        for (long i = 0; i < rows; ++i)
          for (long j = 0; j < cols; ++j) pv->grad[j] += n->grad[i * cols + j];
    };
  }
  return Tensor(n);
}

Tensor Tape::scale(Tensor a, double c) {
  detail::Node* pa = a.node_;
  detail::Node* n = make(a.shape(), pa->requires_grad);
  for (std::size_t i = 0; i < n->value.size(); ++i) n->value[i] = pa->value[i] * c;
  if (n->requires_grad) {
    n->backprop = [n, pa, c]() {
      for (std::size_t i = 0; i < n->grad.size(); ++i) pa->grad[i] += n->grad[i] * c;
    };
  }
  return Tensor(n);
}

Tensor Tape::add_const(Tensor a, double c) {
  detail::Node* pa = a.node_;
  detail::Node* n = make(a.shape(), pa->requires_grad);
  for (std::size_t i = 0; i < n->value.size(); ++i) n->value[i] = pa->value[i] + c;
  if (n->requires_grad) {
    n->backprop = [n, pa]() {
      for (std::size_t i = 0; i < n->grad.size(); ++i) pa->grad[i] += n->grad[i];
    };
  }
  return Tensor(n);
}

Tensor Tape::matmul(Tensor a, Tensor b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.shape()[1] != b.shape()[0])
    shape_fail("matmul", a.shape(), b.shape());
  const long m = a.shape()[0], k = a.shape()[1], n2 = b.shape()[1];
  detail::Node *pa = a.node_, *pb = b.node_;
  detail::Node* n = make({static_cast<int>(m), static_cast<int>(n2)}, pa->requires_grad || pb->requires_grad);
  gemm_nn(pa->value.data(), pb->value.data(), n->value.data(), m, k, n2);
  if (n->requires_grad) {
    n->backprop = [n, pa, pb, m, k, n2]() {
      if (pa->requires_grad) gemm_nt(n->grad.data(), pb->value.data(), pa->grad.data(), m, n2, k);
      if (pb->requires_grad) gemm_tn(pa->value.data(), n->grad.data(), pb->grad.data(), m, k, n2);
    };
  }
  return Tensor(n);
}

Tensor Tape::transpose(Tensor a) {
  if (a.shape().size() != 2) throw std::invalid_argument("transpose: need a 2-D tensor, got " + shape_str(a.shape()));
  const long m = a.shape()[0], k = a.shape()[1];
  detail::Node* pa = a.node_;
  detail::Node* n = make({static_cast<int>(k), static_cast<int>(m)}, pa->requires_grad);
  for (long i = 0; i < m; ++i)
    for (long j = 0; j < k; ++j) n->value[j * m + i] = pa->value[i * k + j];
  if (n->requires_grad) {
    n->backprop = [n, pa, m, k]() {
      for (long i = 0; i < m; ++i)
        for (long j = 0; j < k; ++j) pa->grad[i * k + j] += n->grad[j * m + i];
    };
  }
  return Tensor(n);
}

Tensor Tape::unary_op(Tensor a, const char*, const std::function<double(double)>& f,
                      const std::function<double(double, double)>& df) {
  detail::Node* pa = a.node_;
  detail::Node* n = make(a.shape(), pa->requires_grad);
  for (std::size_t i = 0; i < n->value.size(); ++i) n->value[i] = f(pa->value[i]);
  if (n->requires_grad) {
    n->backprop = [n, pa, df]() {
      for (std::size_t i = 0; i < n->grad.size(); ++i) pa->grad[i] += n->grad[i] * df(pa->value[i], n->value[i]);
    };
  }
  return Tensor(n);
}

Tensor Tape::exp(Tensor a) {
  return unary_op(a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor Tape::log(Tensor a) {
  return unary_op(a, "log", [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor Tape::tanh(Tensor a) {
  return unary_op(a, "tanh", [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor Tape::relu(Tensor a) {
  return unary_op(a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
                  [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor Tape::sigmoid(Tensor a) {
  return unary_op(a, "sigmoid", [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
                  [](double, double y) { return y * (1.0 - y); });
}

Tensor Tape::softplus(Tensor a) {
  return unary_op(a, "softplus",
                  [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); },
                  [](double x, double) { return 1.0 / (1.0 + std::exp(-x)); });
}

Tensor Tape::square(Tensor a) {
  return unary_op(a, "square", [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor Tape::lgamma(Tensor a) {
  return unary_op(a, "lgamma", [](double x) { return std::lgamma(x); },
                  [](double x, double) { return digamma(x); });
}

Tensor Tape::softmax_lastdim(Tensor a) {
  long rows, cols;
  as_matrix(a.shape(), rows, cols);
  detail::Node* pa = a.node_;
  detail::Node* n = make(a.shape(), pa->requires_grad);
  for (long r = 0; r < rows; ++r) {
    const double* x = pa->value.data() + r * cols;
    double* y = n->value.data() + r * cols;
    double mx = x[0];
    for (long j = 1; j < cols; ++j) mx = std::max(mx, x[j]);
    double total = 0.0;
    for (long j = 0; j < cols; ++j) {
      y[j] = std::exp(x[j] - mx);
      total += y[j];
    }
    for (long j = 0; j < cols; ++j) y[j] /= total;
  }
  if (n->requires_grad) {
    n->backprop = [n, pa, rows, cols]() {
      for (long r = 0; r < rows; ++r) {
        const double* y = n->value.data() + r * cols;
        const double* g = n->grad.data() + r * cols;
        double dot = 0.0;
        for (long j = 0; j < cols; ++j) dot += y[j] * g[j];
        double* dx = pa->grad.data() + r * cols;
        for (long j = 0; j < cols; ++j) dx[j] += (g[j] - dot) * y[j];
      }
    };
  }
  return Tensor(n);
}

Tensor Tape::layer_norm_lastdim(Tensor a, Tensor gain, Tensor bias, double eps) {
  long rows, cols;
  as_matrix(a.shape(), rows, cols);
  if (numel(gain.shape()) != cols) shape_fail("layer_norm gain", a.shape(), gain.shape());
  if (numel(bias.shape()) != cols) shape_fail("layer_norm bias", a.shape(), bias.shape());
  detail::Node *pa = a.node_, *pg = gain.node_, *pb = bias.node_;
  detail::Node* n = make(a.shape(), pa->requires_grad || pg->requires_grad || pb->requires_grad);

  // Cache normalized values and inverse stds for the backward rule.
  auto xhat = std::make_shared<std::vector<double>>(rows * cols);
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  for (long r = 0; r < rows; ++r) {
    const double* x = pa->value.data() + r * cols;
    double mean = 0.0;
    for (long j = 0; j < cols; ++j) mean += x[j];
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (long j = 0; j < cols; ++j) var += (x[j] - mean) * (x[j] - mean);
    var /= static_cast<double>(cols);
    const double s = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = s;
    double* xh = xhat->data() + r * cols;
    double* y = n->value.data() + r * cols;
    for (long j = 0; j < cols; ++j) {
      xh[j] = (x[j] - mean) * s;
      y[j] = pg->value[j] * xh[j] + pb->value[j];
    }
  }
  if (n->requires_grad) {
    n->backprop = [n, pa, pg, pb, rows, cols, xhat, inv_std]() {
      for (long r = 0; r < rows; ++r) {
        const double* g = n->grad.data() + r * cols;
        const double* xh = xhat->data() + r * cols;
        if (pg->requires_grad)
          for (long j = 0; j < cols; ++j) pg->grad[j] += g[j] * xh[j];
        if (pb->requires_grad)
          for (long j = 0; j < cols; ++j) pb->grad[j] += g[j];
        if (pa->requires_grad) {
          double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
          for (long j = 0; j < cols; ++j) {
            const double dxh = g[j] * pg->value[j];
            mean_dxhat += dxh;
            mean_dxhat_xhat += dxh * xh[j];
          }
          mean_dxhat /= static_cast<double>(cols);
          mean_dxhat_xhat /= static_cast<double>(cols);
          double* dx = pa->grad.data() + r * cols;
          const double s = (*inv_std)[r];
          for (long j = 0; j < cols; ++j) {
            const double dxh = g[j] * pg->value[j];
            dx[j] += s * (dxh - mean_dxhat - xh[j] * mean_dxhat_xhat);
          }
        }
      }
    };
  }
  return Tensor(n);
}

Tensor Tape::embedding_lookup(Tensor table, int row) {
  if (table.shape().size() != 2)
    throw std::invalid_argument("embedding_lookup: table must be 2-D, got " + shape_str(table.shape()));
  const long v = table.shape()[0], d = table.shape()[1];
  if (row < 0 || row >= v)
    throw std::invalid_argument("embedding_lookup: row " + std::to_string(row) + " out of [0, " + std::to_string(v) +
                                ")");
  detail::Node* pt = table.node_;
  detail::Node* n = make({static_cast<int>(d)}, pt->requires_grad);
  std::copy(pt->value.begin() + row * d, pt->value.begin() + (row + 1) * d, n->value.begin());
  if (n->requires_grad) {
    n->backprop = [n, pt, row, d]() {
      for (long j = 0; j < d; ++j) pt->grad[row * d + j] += n->grad[j];
    };
  }
  return Tensor(n);
}

Tensor Tape::concat_cols(Tensor a, Tensor b) {
  long ar, ac, br, bc;
  as_matrix(a.shape(), ar, ac);
  as_matrix(b.shape(), br, bc);
  if (ar != br) shape_fail("concat_cols", a.shape(), b.shape());
  Shape out_shape;
  if (a.shape().size() <= 1 && b.shape().size() <= 1) {
    out_shape = {static_cast<int>(ac + bc)};
  } else {
    out_shape = {static_cast<int>(ar), static_cast<int>(ac + bc)};
  }
  detail::Node *pa = a.node_, *pb = b.node_;
  detail::Node* n = make(std::move(out_shape), pa->requires_grad || pb->requires_grad);
  const long oc = ac + bc;
  for (long r = 0; r < ar; ++r) {
    for (long j = 0; j < ac; ++j) n->value[r * oc + j] = pa->value[r * ac + j];
    for (long j = 0; j < bc; ++j) n->value[r * oc + ac + j] = pb->value[r * bc + j];
  }
  if (n->requires_grad) {
    n->backprop = [n, pa, pb, ar, ac, bc, oc]() {
      for (long r = 0; r < ar; ++r) {
        if (pa->requires_grad)
          for (long j = 0; j < ac; ++j) pa->grad[r * ac + j] += n->grad[r * oc + j];
        if (pb->requires_grad)
          for (long j = 0; j < bc; ++j) pb->grad[r * bc + j] += n->grad[r * oc + ac + j];
      }
    };
  }
  return Tensor(n);
}

Tensor Tape::slice_cols(Tensor a, int start, int len) {
  long rows, cols;
  as_matrix(a.shape(), rows, cols);
  if (start < 0 || len <= 0 || start + len > cols)
    throw std::invalid_argument("slice_cols: range [" + std::to_string(start) + ", " + std::to_string(start + len) +
                                ") out of " + shape_str(a.shape()));
  Shape out_shape = a.shape().size() <= 1 ? Shape{len} : Shape{static_cast<int>(rows), len};
  detail::Node* pa = a.node_;
  detail::Node* n = make(std::move(out_shape), pa->requires_grad);
  for (long r = 0; r < rows; ++r)
    for (long j = 0; j < len; ++j) n->value[r * len + j] = pa->value[r * cols + start + j];
  if (n->requires_grad) {
    n->backprop = [n, pa, rows, cols, start, len]() {
      for (long r = 0; r < rows; ++r)
        for (long j = 0; j < len; ++j) pa->grad[r * cols + start + j] += n->grad[r * len + j];
    };
  }
  return Tensor(n);
}

Tensor Tape::slice_rows(Tensor a, int start, int len) {
  if (a.shape().size() != 2) throw std::invalid_argument("slice_rows: need a 2-D tensor, got " + shape_str(a.shape()));
  const long rows = a.shape()[0], cols = a.shape()[1];
  if (start < 0 || len <= 0 || start + len > rows)
    throw std::invalid_argument("slice_rows: range [" + std::to_string(start) + ", " + std::to_string(start + len) +
                                ") out of " + shape_str(a.shape()));
  detail::Node* pa = a.node_;
  detail::Node* n = make({len, static_cast<int>(cols)}, pa->requires_grad);
  std::copy(pa->value.begin() + start * cols, pa->value.begin() + (start + len) * cols, n->value.begin());
  if (n->requires_grad) {
    n->backprop = [n, pa, cols, start, len]() {
      for (long i = 0; i < len * cols; ++i) pa->grad[start * cols + i] += n->grad[i];
    };
  }
  return Tensor(n);
}

Tensor Tape::reshape(Tensor a, Shape shape) {
  if (numel(shape) != numel(a.shape())) shape_fail("reshape", a.shape(), shape);
  detail::Node* pa = a.node_;
  detail::Node* n = make(std::move(shape), pa->requires_grad);
  n->value = pa->value;
  if (n->requires_grad) {
    n->backprop = [n, pa]() {
      for (std::size_t i = 0; i < n->grad.size(); ++i) pa->grad[i] += n->grad[i];
    };
  }
  return Tensor(n);
}

Tensor Tape::sum(Tensor a) {
  detail::Node* pa = a.node_;
  detail::Node* n = make({1}, pa->requires_grad);
  double acc = 0.0;
  for (double v : pa->value) acc += v;
  n->value[0] = acc;
  if (n->requires_grad) {
    n->backprop = [n, pa]() {
      for (std::size_t i = 0; i < pa->grad.size(); ++i) pa->grad[i] += n->grad[0];
    };
  }
  return Tensor(n);
}

Tensor Tape::mean(Tensor a) {
  detail::Node* pa = a.node_;
  detail::Node* n = make({1}, pa->requires_grad);
  double acc = 0.0;
  for (double v : pa->value) acc += v;
  const double inv = 1.0 / static_cast<double>(pa->value.size());
  n->value[0] = acc * inv;
  if (n->requires_grad) {
    n->backprop = [n, pa, inv]() {
      for (std::size_t i = 0; i < pa->grad.size(); ++i) pa->grad[i] += n->grad[0] * inv;
    };
  }
  return Tensor(n);
}

void Tape::backward(Tensor loss) {
  if (!loss.valid()) throw std::invalid_argument("backward: invalid tensor");
  if (numel(loss.shape()) != 1)
    throw std::invalid_argument("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
  if (backward_done_) throw std::logic_error("backward: called twice without a new forward pass");
  if (!loss.requires_grad()) {
    backward_done_ = true;
    return;  // nothing tracked
  }
  backward_done_ = true;
  loss.node_->grad[0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (it->requires_grad && it->backprop) it->backprop();
  }
}

void Tape::reset() {
  nodes_.clear();
  backward_done_ = false;
}

// Recurrence down to x >= 6, then the asymptotic series.
double digamma(double x) {
  double result = 0.0;
  while (x < 6.0) {
    result -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  result += std::log(x) - 0.5 * inv;
  // Bernoulli-number series: 1/12 x^-2 - 1/120 x^-4 + 1/252 x^-6 - 1/240 x^-8 + 1/132 x^-10
  result -= inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 / 132.0))));
  return result;
}

double grad_check(const std::function<Tensor(Tape&)>& build, std::span<Parameter* const> params, double h) {
  std::vector<std::vector<double>> analytic;
  {
    for (Parameter* p : params) p->zero_grad();
    Tape tape;
    Tensor loss = build(tape);
    tape.backward(loss);
    for (Parameter* p : params) analytic.push_back(p->grad);
  }

  auto eval = [&]() {
    Tape tape;
    return build(tape).scalar();
  };

  double max_err = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter* p = params[pi];
    for (long i = 0; i < p->size(); ++i) {
      const double saved = p->value[i];
      p->value[i] = saved + h;
      const double up = eval();
      p->value[i] = saved - h;
      const double dn = eval();
      p->value[i] = saved;
      const double fd = (up - dn) / (2.0 * h);
      const double a = analytic[pi][i];
      const double err = std::abs(a - fd) / std::max(1e-8, std::abs(a) + std::abs(fd));
      max_err = std::max(max_err, err);
    }
  }
  for (Parameter* p : params) p->zero_grad();
  return max_err;
}

}  // namespace ive::num
