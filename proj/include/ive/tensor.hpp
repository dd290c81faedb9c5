#pragma once

#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace ive::num {

using Shape = std::vector<int>;

long numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Trainable value living outside any tape. Gradients accumulate here across
// a forward/backward pass; the optimizer consumes and zeroes them.
struct Parameter {
  std::string name;
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;

  Parameter(std::string name_, Shape shape_)
      : name(std::move(name_)), shape(std::move(shape_)), value(numel(shape), 0.0), grad(numel(shape), 0.0) {}

  long size() const { return static_cast<long>(value.size()); }
  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

namespace detail {
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated only when requires_grad
  bool requires_grad = false;
  std::function<void()> backprop;
};
}  // namespace detail

// Lightweight handle into a Tape; valid until the tape is reset or destroyed.
class Tensor {
 public:
  Tensor() = default;
  bool valid() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  const std::vector<double>& value() const { return node_->value; }
  const std::vector<double>& grad() const { return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }
  double scalar() const;

 private:
  friend class Tape;
  explicit Tensor(detail::Node* node) : node_(node) {}
  detail::Node* node_ = nullptr;
};

// Records one forward pass; replaying it in reverse propagates gradients to
// every tracked leaf exactly once. Single-threaded by contract; independent
// tapes may run concurrently.
class Tape {
 public:
  // Redirects every leaf's gradient to the buffer the resolver returns;
  // lets worker threads accumulate privately and merge in a fixed order.
  using SinkResolver = std::function<std::vector<double>*(const Parameter&)>;

  Tensor leaf(Parameter& p);                              // grads flow to p.grad
  Tensor leaf(Parameter& p, std::vector<double>* sink);   // grads flow to *sink
  void set_sink_resolver(SinkResolver resolver) { sink_resolver_ = std::move(resolver); }
  Tensor constant(Shape shape, std::vector<double> data);
  Tensor constant_like(const Tensor& t, double fill);
  Tensor scalar_const(double v);

  Tensor add(Tensor a, Tensor b);
  Tensor sub(Tensor a, Tensor b);
  Tensor mul(Tensor a, Tensor b);
  Tensor div(Tensor a, Tensor b);
  Tensor add_rowvec(Tensor a, Tensor v);  // broadcast [n] over the rows of [m,n]
  Tensor scale(Tensor a, double c);
  Tensor add_const(Tensor a, double c);
  Tensor neg(Tensor a) { return scale(a, -1.0); }

  Tensor matmul(Tensor a, Tensor b);
  Tensor transpose(Tensor a);

  Tensor exp(Tensor a);
  Tensor log(Tensor a);
  Tensor tanh(Tensor a);
  Tensor relu(Tensor a);
  Tensor sigmoid(Tensor a);
  Tensor softplus(Tensor a);
  Tensor square(Tensor a);
  Tensor lgamma(Tensor a);

  Tensor softmax_lastdim(Tensor a);
  Tensor layer_norm_lastdim(Tensor a, Tensor gain, Tensor bias, double eps = 1e-5);

  Tensor embedding_lookup(Tensor table, int row);
  Tensor concat_cols(Tensor a, Tensor b);
  Tensor slice_cols(Tensor a, int start, int len);
  Tensor slice_rows(Tensor a, int start, int len);
  Tensor reshape(Tensor a, Shape shape);

  Tensor sum(Tensor a);
  Tensor mean(Tensor a);

  // Seeds d(loss)/d(loss) = 1 and runs every recorded backward rule in
  // reverse order. loss must be scalar; calling twice without a fresh
  // forward is an error.
  void backward(Tensor loss);

  void reset();
  std::size_t num_nodes() const { return nodes_.size(); }

 private:
  detail::Node* make(Shape shape, bool requires_grad);
  Tensor unary_op(Tensor a, const char* name, const std::function<double(double)>& f,
                  const std::function<double(double, double)>& df);  // df(x, y)

  std::deque<detail::Node> nodes_;
  SinkResolver sink_resolver_;
  bool backward_done_ = false;
};

double digamma(double x);

// Max relative finite-difference error over every entry of every parameter:
// |analytic - central_fd| / max(1e-8, |analytic| + |fd|). `build` must run a
// fresh forward pass against the current parameter values.
double grad_check(const std::function<Tensor(Tape&)>& build, std::span<Parameter* const> params, double h = 1e-4);

}  // namespace ive::num
