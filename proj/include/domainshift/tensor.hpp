// SPDX-License-Identifier: Apache-2.0
//
// Dense fp64 tensors with reverse-mode autodiff. Operations record backward
// closures on a thread-local tape while a TapeScope is alive; backward()
// replays them in reverse and consumes the tape. Gradients accumulate by
// summation, so a tensor used twice gets both contributions.

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace domainshift {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& s);
std::string shape_str(const Shape& s);

struct TensorData {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // allocated on first differentiable use
  bool requires_grad = false;
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);
  static Tensor scalar(double v);

  bool defined() const { return static_cast<bool>(d_); }
  const Shape& shape() const { return d_->shape; }
  std::size_t size() const { return d_->values.size(); }
  std::size_t rank() const { return d_->shape.size(); }
  std::vector<double>& values() { return d_->values; }
  const std::vector<double>& values() const { return d_->values; }
  bool requires_grad() const { return d_->requires_grad; }
  Tensor& set_requires_grad(bool on);

  // Allocates (zero-filled) on first access when requires_grad is set.
  std::vector<double>& grad();
  const std::vector<double>& grad() const;
  bool has_grad() const { return !d_->grad.empty(); }
  void zero_grad();

  double item() const;  // size-1 tensors only

  std::shared_ptr<TensorData> node() const { return d_; }

 private:
  std::shared_ptr<TensorData> d_;
};

class Tape {
 public:
  static Tape* active();
  void record(std::function<void()> step);
  bool consumed() const { return consumed_; }
  std::size_t node_count() const { return nodes_.size(); }

 private:
  friend class TapeScope;
  friend void backward(const Tensor&);
  std::vector<std::function<void()>> nodes_;
  bool consumed_ = false;
};

// Makes a fresh tape active for the current thread; restores the previous
// one on destruction. Nesting is allowed, sharing across threads is not.
class TapeScope {
 public:
  TapeScope();
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;
  Tape& tape() { return tape_; }

 private:
  Tape tape_;
  Tape* prev_;
};

// Seeds d(root)/d(root) = 1 and replays the active tape in reverse,
// populating grad on every requires_grad leaf. Consumes the tape.
void backward(const Tensor& root);

Tensor add(const Tensor& a, const Tensor& b);
Tensor subtract(const Tensor& a, const Tensor& b);
Tensor multiply(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double s);
Tensor multiply_scalar(const Tensor& a, double s);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return subtract(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return multiply(a, b); }
inline Tensor operator+(const Tensor& a, double s) { return add_scalar(a, s); }
inline Tensor operator+(double s, const Tensor& a) { return add_scalar(a, s); }
inline Tensor operator-(const Tensor& a, double s) { return add_scalar(a, -s); }
inline Tensor operator*(const Tensor& a, double s) { return multiply_scalar(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return multiply_scalar(a, s); }
inline Tensor operator-(const Tensor& a) { return multiply_scalar(a, -1.0); }

Tensor matmul(const Tensor& a, const Tensor& b);  // rank-2 only
Tensor transpose(const Tensor& a);                // rank-2 only
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& t, std::size_t axis, std::size_t start, std::size_t len);
Tensor index_select(const Tensor& t, const std::vector<std::size_t>& rows);
Tensor reshape(const Tensor& t, Shape target);

Tensor sum(const Tensor& t, std::size_t axis);
Tensor mean(const Tensor& t, std::size_t axis);
Tensor max(const Tensor& t, std::size_t axis);  // ties route grad to first hit
Tensor sum_all(const Tensor& t);
Tensor mean_all(const Tensor& t);

Tensor exp(const Tensor& t);
Tensor log(const Tensor& t);
Tensor sqrt(const Tensor& t);
Tensor pow(const Tensor& t, double exponent);
Tensor clamp(const Tensor& t, double lo, double hi);

Tensor relu(const Tensor& t);
Tensor gelu(const Tensor& t);  // tanh form: 0.5x(1+tanh(sqrt(2/pi)(x+0.044715x^3)))
Tensor sigmoid(const Tensor& t);
Tensor softmax(const Tensor& t);     // last axis
Tensor layer_norm(const Tensor& t, double epsilon);  // last axis, no affine

// out = t where mask==1, t + fill where mask==0. mask is not differentiated.
Tensor add_mask(const Tensor& t, const Tensor& mask, double fill = -1e9);

// Rows of t grouped by segment id; every segment in [0, n_segments) must be
// hit at least once.
Tensor segment_mean(const Tensor& t, const std::vector<std::size_t>& segment_of_row,
                    std::size_t n_segments);

// Max over components of |analytic - central| / (|analytic| + |central| + 1e-12),
// with the analytic gradient taken at `point` and central differences at step h.
double finite_difference_check(const std::function<Tensor(const Tensor&)>& f,
                               const Tensor& point, double h);

}  // namespace domainshift
