// SPDX-License-Identifier: Apache-2.0

#include "domainshift/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace domainshift {

namespace {

thread_local Tape* g_active_tape = nullptr;

[[noreturn]] void fail(const std::string& op, const std::string& msg) {
  throw std::invalid_argument(op + ": " + msg);
}

void ensure_grad(const std::shared_ptr<TensorData>& d) {
  if (d->grad.empty()) d->grad.assign(d->values.size(), 0.0);
}

// Marks the output differentiable and allocates grads when a tape is live
// and some input participates. Returns the tape to record on, or null.
Tape* start_trace(std::initializer_list<const Tensor*> ins, Tensor& out) {
  Tape* tape = Tape::active();
  if (!tape) return nullptr;
  bool any = false;
  for (const Tensor* t : ins) any = any || t->requires_grad();
  if (!any) return nullptr;
  for (const Tensor* t : ins)
    if (t->requires_grad()) ensure_grad(t->node());
  out.set_requires_grad(true);
  ensure_grad(out.node());
  return tape;
}

void check_finite(const Tensor& t, const std::string& op) {
  for (double v : t.values())
    if (!std::isfinite(v)) fail(op, "non-finite output");
}

}  // namespace

std::size_t shape_size(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : d_(std::make_shared<TensorData>()) {
  d_->shape = std::move(shape);
  d_->values.assign(shape_size(d_->shape), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : d_(std::make_shared<TensorData>()) {
  if (shape_size(shape) != values.size())
    fail("Tensor", "shape " + shape_str(shape) + " does not hold " +
                       std::to_string(values.size()) + " values");
  d_->shape = std::move(shape);
  d_->values = std::move(values);
}

Tensor Tensor::scalar(double v) { return Tensor(Shape{1}, std::vector<double>{v}); }

Tensor& Tensor::set_requires_grad(bool on) {
  d_->requires_grad = on;
  return *this;
}

std::vector<double>& Tensor::grad() {
  ensure_grad(d_);
  return d_->grad;
}

const std::vector<double>& Tensor::grad() const {
  if (d_->grad.empty()) fail("grad", "no gradient recorded for this tensor");
  return d_->grad;
}

void Tensor::zero_grad() {
  std::fill(d_->grad.begin(), d_->grad.end(), 0.0);
}

double Tensor::item() const {
  if (size() != 1) fail("item", "tensor has shape " + shape_str(shape()));
  return d_->values[0];
}

Tape* Tape::active() { return g_active_tape; }

void Tape::record(std::function<void()> step) {
  if (consumed_) fail("Tape", "recording on a consumed tape");
  nodes_.push_back(std::move(step));
}

TapeScope::TapeScope() : prev_(g_active_tape) { g_active_tape = &tape_; }

TapeScope::~TapeScope() { g_active_tape = prev_; }

void backward(const Tensor& root) {
  Tape* tape = Tape::active();
  if (!tape) fail("backward", "no active tape");
  if (tape->consumed_) fail("backward", "tape already consumed; run a new forward pass");
  if (root.size() != 1)
    fail("backward", "root must be a scalar, got shape " + shape_str(root.shape()));
  if (!root.requires_grad())
    fail("backward", "root does not participate in gradients");
  root.node()->grad.assign(1, 1.0);
  for (auto it = tape->nodes_.rbegin(); it != tape->nodes_.rend(); ++it) (*it)();
  tape->nodes_.clear();
  tape->consumed_ = true;
}

namespace {

// Element-wise pairing: equal shapes, scalar on either side, or a rank-1
// vector against the trailing axis of the other operand.
struct EwPlan {
  Shape out_shape;
  std::size_t n;
  std::size_t mod_a, mod_b;  // index i maps to i % mod
};

EwPlan ew_plan(const std::string& op, const Tensor& a, const Tensor& b) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  auto mismatch = [&] {
    fail(op, "shapes " + shape_str(sa) + " and " + shape_str(sb) + " do not conform");
  };
  EwPlan p;
  if (sa == sb) {
    p.out_shape = sa;
  } else if (b.size() == 1) {
    p.out_shape = sa;
  } else if (a.size() == 1) {
    p.out_shape = sb;
  } else if (sb.size() == 1 && !sa.empty() && sb[0] == sa.back()) {
    p.out_shape = sa;
  } else if (sa.size() == 1 && !sb.empty() && sa[0] == sb.back()) {
    p.out_shape = sb;
  } else {
    mismatch();
  }
  p.n = shape_size(p.out_shape);
  p.mod_a = a.size();
  p.mod_b = b.size();
  return p;
}

template <class F, class Da, class Db>
Tensor binary_ew(const std::string& op, const Tensor& a, const Tensor& b, F f,
                 Da dfa, Db dfb) {
  EwPlan p = ew_plan(op, a, b);
  Tensor out(p.out_shape);
  const auto& av = a.values();
  const auto& bv = b.values();
  auto& ov = out.values();
  for (std::size_t i = 0; i < p.n; ++i)
    ov[i] = f(av[i % p.mod_a], bv[i % p.mod_b]);
  if (Tape* tape = start_trace({&a, &b}, out)) {
    auto da = a.node(), db = b.node(), dout = out.node();
    tape->record([da, db, dout, p, dfa, dfb] {
      for (std::size_t i = 0; i < p.n; ++i) {
        const double g = dout->grad[i];
        const std::size_t ia = i % p.mod_a, ib = i % p.mod_b;
        if (da->requires_grad) da->grad[ia] += dfa(da->values[ia], db->values[ib]) * g;
        if (db->requires_grad) db->grad[ib] += dfb(da->values[ia], db->values[ib]) * g;
      }
    });
  }
  return out;
}

template <class F, class Df>
Tensor unary_ew(const std::string& op, const Tensor& a, F f, Df df,
                bool guard_finite = false) {
  Tensor out(a.shape());
  const auto& av = a.values();
  auto& ov = out.values();
  for (std::size_t i = 0; i < av.size(); ++i) ov[i] = f(av[i]);
  if (guard_finite) check_finite(out, op);
  if (Tape* tape = start_trace({&a}, out)) {
    auto da = a.node(), dout = out.node();
    tape->record([da, dout, df] {
      for (std::size_t i = 0; i < da->values.size(); ++i)
        da->grad[i] += df(da->values[i], dout->values[i]) * dout->grad[i];
    });
  }
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_ew(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor subtract(const Tensor& a, const Tensor& b) {
  return binary_ew(
      "subtract", a, b, [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor multiply(const Tensor& a, const Tensor& b) {
  return binary_ew(
      "multiply", a, b, [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary_ew(
      "add_scalar", a, [s](double x) { return x + s; },
      [](double, double) { return 1.0; });
}

Tensor multiply_scalar(const Tensor& a, double s) {
  return unary_ew(
      "multiply_scalar", a, [s](double x) { return x * s; },
      [s](double, double) { return s; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0])
    fail("matmul", "shapes " + shape_str(a.shape()) + " and " +
                       shape_str(b.shape()) + " do not conform");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  Tensor out(Shape{m, n});
  const double* av = a.values().data();
  const double* bv = b.values().data();
  double* ov = out.values().data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t l = 0; l < k; ++l) {
      const double ail = av[i * k + l];
      const double* brow = bv + l * n;
      double* orow = ov + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += ail * brow[j];
    }
  if (Tape* tape = start_trace({&a, &b}, out)) {
    auto da = a.node(), db = b.node(), dout = out.node();
    tape->record([da, db, dout, m, k, n] {
      const double* g = dout->grad.data();
      if (da->requires_grad) {
        double* ga = da->grad.data();
        const double* bv2 = db->values.data();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) {
            const double gij = g[i * n + j];
            for (std::size_t l = 0; l < k; ++l) ga[i * k + l] += gij * bv2[l * n + j];
          }
      }
      if (db->requires_grad) {
        double* gb = db->grad.data();
        const double* av2 = da->values.data();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t l = 0; l < k; ++l) {
            const double ail = av2[i * k + l];
            for (std::size_t j = 0; j < n; ++j) gb[l * n + j] += ail * g[i * n + j];
          }
      }
    });
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2)
    fail("transpose", "expected rank 2, got shape " + shape_str(a.shape()));
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  Tensor out(Shape{n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.values()[j * m + i] = a.values()[i * n + j];
  if (Tape* tape = start_trace({&a}, out)) {
    auto da = a.node(), dout = out.node();
    tape->record([da, dout, m, n] {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
          da->grad[i * n + j] += dout->grad[j * m + i];
    });
  }
  return out;
}

namespace {

struct AxisPlan {
  std::size_t outer = 1, len = 0, inner = 1;
};

AxisPlan axis_plan(const std::string& op, const Tensor& t, std::size_t axis) {
  if (axis >= t.rank())
    fail(op, "axis " + std::to_string(axis) + " out of range for shape " +
                 shape_str(t.shape()));
  AxisPlan p;
  for (std::size_t i = 0; i < axis; ++i) p.outer *= t.shape()[i];
  p.len = t.shape()[axis];
  for (std::size_t i = axis + 1; i < t.rank(); ++i) p.inner *= t.shape()[i];
  return p;
}

Shape drop_axis(const Shape& s, std::size_t axis) {
  Shape r = s;
  r.erase(r.begin() + static_cast<std::ptrdiff_t>(axis));
  if (r.empty()) r = {1};
  return r;
}

}  // namespace

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) fail("concat", "no tensors given");
  const Shape& s0 = parts[0].shape();
  if (axis >= s0.size())
    fail("concat", "axis " + std::to_string(axis) + " out of range for shape " +
                       shape_str(s0));
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != s0.size())
      fail("concat", "shapes " + shape_str(s0) + " and " + shape_str(p.shape()) +
                         " do not conform");
    for (std::size_t i = 0; i < s0.size(); ++i)
      if (i != axis && p.shape()[i] != s0[i])
        fail("concat", "shapes " + shape_str(s0) + " and " + shape_str(p.shape()) +
                           " do not conform");
    total += p.shape()[axis];
  }
  Shape os = s0;
  os[axis] = total;
  Tensor out(os);
  const AxisPlan po = axis_plan("concat", out, axis);
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    const std::size_t len = p.shape()[axis];
    for (std::size_t o = 0; o < po.outer; ++o)
      for (std::size_t l = 0; l < len; ++l)
        for (std::size_t in = 0; in < po.inner; ++in)
          out.values()[(o * po.len + offset + l) * po.inner + in] =
              p.values()[(o * len + l) * po.inner + in];
    offset += len;
  }
  std::vector<const Tensor*> ins;
  for (const Tensor& p : parts) ins.push_back(&p);
  Tape* tape = Tape::active();
  bool any = false;
  for (const Tensor& p : parts) any = any || p.requires_grad();
  if (tape && any) {
    for (const Tensor& p : parts)
      if (p.requires_grad()) ensure_grad(p.node());
    out.set_requires_grad(true);
    ensure_grad(out.node());
    std::vector<std::shared_ptr<TensorData>> dps;
    for (const Tensor& p : parts) dps.push_back(p.node());
    auto dout = out.node();
    tape->record([dps, dout, po] {
      std::size_t off = 0;
      for (const auto& dp : dps) {
        const std::size_t len = dp->values.size() / (po.outer * po.inner);
        if (dp->requires_grad)
          for (std::size_t o = 0; o < po.outer; ++o)
            for (std::size_t l = 0; l < len; ++l)
              for (std::size_t in = 0; in < po.inner; ++in)
                dp->grad[(o * len + l) * po.inner + in] +=
                    dout->grad[(o * po.len + off + l) * po.inner + in];
        off += len;
      }
    });
  }
  return out;
}

Tensor slice(const Tensor& t, std::size_t axis, std::size_t start, std::size_t len) {
  const AxisPlan p = axis_plan("slice", t, axis);
  if (start + len > p.len)
    fail("slice", "range [" + std::to_string(start) + "," +
                      std::to_string(start + len) + ") exceeds axis extent " +
                      std::to_string(p.len));
  Shape os = t.shape();
  os[axis] = len;
  Tensor out(os);
  for (std::size_t o = 0; o < p.outer; ++o)
    for (std::size_t l = 0; l < len; ++l)
      for (std::size_t in = 0; in < p.inner; ++in)
        out.values()[(o * len + l) * p.inner + in] =
            t.values()[(o * p.len + start + l) * p.inner + in];
  if (Tape* tape = start_trace({&t}, out)) {
    auto dt = t.node(), dout = out.node();
    tape->record([dt, dout, p, start, len] {
      for (std::size_t o = 0; o < p.outer; ++o)
        for (std::size_t l = 0; l < len; ++l)
          for (std::size_t in = 0; in < p.inner; ++in)
            dt->grad[(o * p.len + start + l) * p.inner + in] +=
                dout->grad[(o * len + l) * p.inner + in];
    });
  }
  return out;
}

Tensor index_select(const Tensor& t, const std::vector<std::size_t>& rows) {
  if (t.rank() < 1) fail("index_select", "needs rank >= 1");
  const std::size_t n = t.shape()[0];
  const std::size_t inner = t.size() / std::max<std::size_t>(n, 1);
  for (std::size_t r : rows)
    if (r >= n)
      fail("index_select", "row " + std::to_string(r) + " out of range for shape " +
                               shape_str(t.shape()));
  Shape os = t.shape();
  os[0] = rows.size();
  Tensor out(os);
  for (std::size_t r = 0; r < rows.size(); ++r)
    std::copy_n(t.values().begin() + static_cast<std::ptrdiff_t>(rows[r] * inner),
                inner, out.values().begin() + static_cast<std::ptrdiff_t>(r * inner));
  if (Tape* tape = start_trace({&t}, out)) {
    auto dt = t.node(), dout = out.node();
    tape->record([dt, dout, rows, inner] {
      for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t j = 0; j < inner; ++j)
          dt->grad[rows[r] * inner + j] += dout->grad[r * inner + j];
    });
  }
  return out;
}

Tensor reshape(const Tensor& t, Shape target) {
  if (shape_size(target) != t.size())
    fail("reshape", "shapes " + shape_str(t.shape()) + " and " + shape_str(target) +
                        " hold different element counts");
  Tensor out(std::move(target), t.values());
  if (Tape* tape = start_trace({&t}, out)) {
    auto dt = t.node(), dout = out.node();
    tape->record([dt, dout] {
      for (std::size_t i = 0; i < dt->grad.size(); ++i) dt->grad[i] += dout->grad[i];
    });
  }
  return out;
}

namespace {

enum class Reduce { Sum, Mean, Max };

Tensor reduce_axis(const std::string& op, const Tensor& t, std::size_t axis,
                   Reduce kind) {
  const AxisPlan p = axis_plan(op, t, axis);
  if (p.len == 0) fail(op, "axis extent is zero in shape " + shape_str(t.shape()));
  Tensor out(drop_axis(t.shape(), axis));
  std::vector<std::size_t> arg;  // Max only
  if (kind == Reduce::Max) arg.assign(p.outer * p.inner, 0);
  for (std::size_t o = 0; o < p.outer; ++o)
    for (std::size_t in = 0; in < p.inner; ++in) {
      const std::size_t slot = o * p.inner + in;
      double acc = (kind == Reduce::Max) ? t.values()[(o * p.len) * p.inner + in] : 0.0;
      for (std::size_t l = (kind == Reduce::Max) ? 1 : 0; l < p.len; ++l) {
        const double v = t.values()[(o * p.len + l) * p.inner + in];
        if (kind == Reduce::Max) {
          if (v > acc) {
            acc = v;
            arg[slot] = l;
          }
        } else {
          acc += v;
        }
      }
      out.values()[slot] = (kind == Reduce::Mean) ? acc / static_cast<double>(p.len) : acc;
    }
  if (Tape* tape = start_trace({&t}, out)) {
    auto dt = t.node(), dout = out.node();
    tape->record([dt, dout, p, kind, arg] {
      const double scale = (kind == Reduce::Mean) ? 1.0 / static_cast<double>(p.len) : 1.0;
      for (std::size_t o = 0; o < p.outer; ++o)
        for (std::size_t in = 0; in < p.inner; ++in) {
          const std::size_t slot = o * p.inner + in;
          if (kind == Reduce::Max) {
            dt->grad[(o * p.len + arg[slot]) * p.inner + in] += dout->grad[slot];
          } else {
            for (std::size_t l = 0; l < p.len; ++l)
              dt->grad[(o * p.len + l) * p.inner + in] += scale * dout->grad[slot];
          }
        }
    });
  }
  return out;
}

}  // namespace

Tensor sum(const Tensor& t, std::size_t axis) { return reduce_axis("sum", t, axis, Reduce::Sum); }
Tensor mean(const Tensor& t, std::size_t axis) { return reduce_axis("mean", t, axis, Reduce::Mean); }
Tensor max(const Tensor& t, std::size_t axis) { return reduce_axis("max", t, axis, Reduce::Max); }

Tensor sum_all(const Tensor& t) {
  double acc = 0.0;
  for (double v : t.values()) acc += v;
  Tensor out = Tensor::scalar(acc);
  if (Tape* tape = start_trace({&t}, out)) {
    auto dt = t.node(), dout = out.node();
    tape->record([dt, dout] {
      for (double& g : dt->grad) g += dout->grad[0];
    });
  }
  return out;
}

Tensor mean_all(const Tensor& t) {
  if (t.size() == 0) fail("mean_all", "empty tensor");
  return multiply_scalar(sum_all(t), 1.0 / static_cast<double>(t.size()));
}

Tensor exp(const Tensor& t) {
  return unary_ew(
      "exp", t, [](double x) { return std::exp(x); },
      [](double, double y) { return y; }, /*guard_finite=*/true);
}

Tensor log(const Tensor& t) {
  for (double v : t.values())
    if (v <= 0.0) fail("log", "argument " + std::to_string(v) + " is not positive");
  return unary_ew(
      "log", t, [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

Tensor sqrt(const Tensor& t) {
  for (double v : t.values())
    if (v < 0.0) fail("sqrt", "argument " + std::to_string(v) + " is negative");
  return unary_ew(
      "sqrt", t, [](double x) { return std::sqrt(x); },
      [](double, double y) { return 0.5 / y; });
}

Tensor pow(const Tensor& t, double exponent) {
  return unary_ew(
      "pow", t, [exponent](double x) { return std::pow(x, exponent); },
      [exponent](double x, double) { return exponent * std::pow(x, exponent - 1.0); },
      /*guard_finite=*/true);
}

Tensor clamp(const Tensor& t, double lo, double hi) {
  if (!(lo < hi)) fail("clamp", "lower bound must be below upper bound");
  return unary_ew(
      "clamp", t,
      [lo, hi](double x) { return std::min(std::max(x, lo), hi); },
      [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

Tensor relu(const Tensor& t) {
  return unary_ew(
      "relu", t, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& t) {
  // 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))
  constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double a = 0.044715;
  return unary_ew(
      "gelu", t,
      [](double x) {
        const double u = c * (x + a * x * x * x);
        return 0.5 * x * (1.0 + std::tanh(u));
      },
      [](double x, double) {
        const double u = c * (x + a * x * x * x);
        const double th = std::tanh(u);
        const double du = c * (1.0 + 3.0 * a * x * x);
        return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du;
      });
}

Tensor sigmoid(const Tensor& t) {
  return unary_ew(
      "sigmoid", t,
      [](double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                                     : std::exp(x) / (1.0 + std::exp(x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor softmax(const Tensor& t) {
  if (t.rank() < 1) fail("softmax", "needs rank >= 1");
  const std::size_t len = t.shape().back();
  if (len == 0) fail("softmax", "last axis extent is zero");
  const std::size_t rows = t.size() / len;
  Tensor out(t.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = t.values().data() + r * len;
    double* y = out.values().data() + r * len;
    double m = x[0];
    for (std::size_t i = 1; i < len; ++i) m = std::max(m, x[i]);
    double s = 0.0;
    for (std::size_t i = 0; i < len; ++i) s += (y[i] = std::exp(x[i] - m));
    for (std::size_t i = 0; i < len; ++i) y[i] /= s;
  }
  if (Tape* tape = start_trace({&t}, out)) {
    auto dt = t.node(), dout = out.node();
    tape->record([dt, dout, rows, len] {
      for (std::size_t r = 0; r < rows; ++r) {
        const double* y = dout->values.data() + r * len;
        const double* gy = dout->grad.data() + r * len;
        double* gx = dt->grad.data() + r * len;
        double dot = 0.0;
        for (std::size_t i = 0; i < len; ++i) dot += gy[i] * y[i];
        for (std::size_t i = 0; i < len; ++i) gx[i] += y[i] * (gy[i] - dot);
      }
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& t, double epsilon) {
  if (t.rank() < 1) fail("layer_norm", "needs rank >= 1");
  if (!(epsilon > 0.0)) fail("layer_norm", "epsilon must be positive");
  const std::size_t len = t.shape().back();
  const std::size_t rows = t.size() / len;
  Tensor out(t.shape());
  std::vector<double> inv(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = t.values().data() + r * len;
    double* y = out.values().data() + r * len;
    double mu = 0.0;
    for (std::size_t i = 0; i < len; ++i) mu += x[i];
    mu /= static_cast<double>(len);
    double var = 0.0;
    for (std::size_t i = 0; i < len; ++i) var += (x[i] - mu) * (x[i] - mu);
    var /= static_cast<double>(len);
    inv[r] = 1.0 / std::sqrt(var + epsilon);
    for (std::size_t i = 0; i < len; ++i) y[i] = (x[i] - mu) * inv[r];
  }
  if (Tape* tape = start_trace({&t}, out)) {
    auto dt = t.node(), dout = out.node();
    tape->record([dt, dout, rows, len, inv] {
      for (std::size_t r = 0; r < rows; ++r) {
        const double* xhat = dout->values.data() + r * len;
        const double* gy = dout->grad.data() + r * len;
        double* gx = dt->grad.data() + r * len;
        double mg = 0.0, mgx = 0.0;
        for (std::size_t i = 0; i < len; ++i) {
          mg += gy[i];
          mgx += gy[i] * xhat[i];
        }
        mg /= static_cast<double>(len);
        mgx /= static_cast<double>(len);
        for (std::size_t i = 0; i < len; ++i)
          gx[i] += inv[r] * (gy[i] - mg - xhat[i] * mgx);
      }
    });
  }
  return out;
}

Tensor add_mask(const Tensor& t, const Tensor& mask, double fill) {
  EwPlan p = ew_plan("add_mask", t, mask);
  if (p.out_shape != t.shape())
    fail("add_mask", "mask " + shape_str(mask.shape()) + " does not broadcast onto " +
                         shape_str(t.shape()));
  for (double m : mask.values())
    if (m != 0.0 && m != 1.0) fail("add_mask", "mask entries must be 0 or 1");
  Tensor out(t.shape());
  for (std::size_t i = 0; i < p.n; ++i)
    out.values()[i] = t.values()[i] + (1.0 - mask.values()[i % p.mod_b]) * fill;
  if (Tape* tape = start_trace({&t}, out)) {
    auto dt = t.node(), dout = out.node();
    tape->record([dt, dout] {
      for (std::size_t i = 0; i < dt->grad.size(); ++i) dt->grad[i] += dout->grad[i];
    });
  }
  return out;
}

Tensor segment_mean(const Tensor& t, const std::vector<std::size_t>& segment_of_row,
                    std::size_t n_segments) {
  if (t.rank() < 1) fail("segment_mean", "needs rank >= 1");
  const std::size_t n = t.shape()[0];
  if (segment_of_row.size() != n)
    fail("segment_mean", "got " + std::to_string(segment_of_row.size()) +
                             " segment ids for " + std::to_string(n) + " rows");
  const std::size_t inner = (n == 0) ? 0 : t.size() / n;
  std::vector<double> count(n_segments, 0.0);
  for (std::size_t s : segment_of_row) {
    if (s >= n_segments)
      fail("segment_mean", "segment id " + std::to_string(s) + " out of range");
    count[s] += 1.0;
  }
  for (std::size_t s = 0; s < n_segments; ++s)
    if (count[s] == 0.0)
      fail("segment_mean", "segment " + std::to_string(s) + " has no rows");
  Shape os = t.shape();
  os[0] = n_segments;
  Tensor out(os);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < inner; ++j)
      out.values()[segment_of_row[r] * inner + j] += t.values()[r * inner + j];
  for (std::size_t s = 0; s < n_segments; ++s)
    for (std::size_t j = 0; j < inner; ++j) out.values()[s * inner + j] /= count[s];
  if (Tape* tape = start_trace({&t}, out)) {
    auto dt = t.node(), dout = out.node();
    tape->record([dt, dout, segment_of_row, count, inner] {
      for (std::size_t r = 0; r < segment_of_row.size(); ++r) {
        const std::size_t s = segment_of_row[r];
        for (std::size_t j = 0; j < inner; ++j)
          dt->grad[r * inner + j] += dout->grad[s * inner + j] / count[s];
      }
    });
  }
  return out;
}

double finite_difference_check(const std::function<Tensor(const Tensor&)>& f,
                               const Tensor& point, double h) {
  if (!(h > 0.0)) fail("finite_difference_check", "h must be positive");
  Tensor x(point.shape(), point.values());
  x.set_requires_grad(true);
  std::vector<double> analytic;
  {
    TapeScope scope;
    Tensor out = f(x);
    if (out.size() != 1)
      fail("finite_difference_check", "f must return a scalar, got shape " +
                                          shape_str(out.shape()));
    if (!std::isfinite(out.item()))
      fail("finite_difference_check", "non-finite f at the base point");
    backward(out);
    analytic = x.grad();
  }
  auto eval_at = [&](const std::vector<double>& v) {
    const double y = f(Tensor(point.shape(), v)).item();
    if (!std::isfinite(y)) fail("finite_difference_check", "non-finite f evaluation");
    return y;
  };
  double worst = 0.0;
  std::vector<double> probe = point.values();
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double keep = probe[i];
    probe[i] = keep + h;
    const double fp = eval_at(probe);
    probe[i] = keep - h;
    const double fm = eval_at(probe);
    probe[i] = keep;
    const double central = (fp - fm) / (2.0 * h);
    const double rel = std::abs(analytic[i] - central) /
                       (std::abs(analytic[i]) + std::abs(central) + 1e-12);
    worst = std::max(worst, rel);
  }
  return worst;
}

}  // namespace domainshift
