#include "pptp/autodiff.hpp"

#include "pptp/errors.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace pptp::ad {

namespace {

thread_local Tape* g_active_tape = nullptr;

using NodePtr = std::shared_ptr<Node>;

// Values start uninitialised unless `zero` is set.
NodePtr make_node(Shape shape, bool zero = false) {
  auto n = std::make_shared<Node>();
  if (zero) n->value.assign(shape_size(shape), 0.0);
  else n->value.resize(shape_size(shape));
  n->shape = std::move(shape);
  return n;
}

bool tracking(std::initializer_list<const Tensor*> inputs) {
  if (g_active_tape == nullptr) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor* t) { return t->requires_grad(); });
}

// Marks `out` as an interior node and appends its backward closure.
void record(const NodePtr& out, Tape::BackwardFn fn) {
  out->requires_grad = true;
  out->is_leaf = false;
  g_active_tape->record(out, std::move(fn));
}

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected rank-2 input, got " + shape_str(t.shape()));
  }
}

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Map = Eigen::Map<RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;

enum class Broadcast { kSame, kRow, kScalar };

Broadcast classify_broadcast(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return Broadcast::kSame;
  if (b.size() == 1) return Broadcast::kScalar;
  const std::size_t last = a.shape().empty() ? 0 : a.shape().back();
  const bool b_is_row = (b.rank() == 1) || (b.rank() == 2 && b.dim(0) == 1);
  if (b_is_row && b.size() == last && last > 0) {
    return a.size() == b.size() ? Broadcast::kSame : Broadcast::kRow;
  }
  throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(b.shape()) + " onto " +
                   shape_str(a.shape()));
}

// Calls f(i, j) for every flat index i of a and matching index j of b.
template <class F>
inline void broadcast_loop(Broadcast mode, std::size_t n, std::size_t row_len, F&& f) {
  switch (mode) {
    case Broadcast::kSame:
      for (std::size_t i = 0; i < n; ++i) f(i, i);
      break;
    case Broadcast::kRow:
      for (std::size_t r = 0; r < n; r += row_len)
        for (std::size_t c = 0; c < row_len; ++c) f(r + c, c);
      break;
    case Broadcast::kScalar:
      for (std::size_t i = 0; i < n; ++i) f(i, 0);
      break;
  }
}

// Splits shape around `axis` into (outer, n, inner).
void axis_split(const Shape& shape, std::size_t axis, std::size_t& outer, std::size_t& n,
                std::size_t& inner) {
  if (axis >= shape.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_str(shape));
  }
  outer = 1;
  inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
  n = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
}


}  // namespace

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

// ---- Tensor ----------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
  auto n = make_node(std::move(shape));
  std::fill(n->value.begin(), n->value.end(), v);
  n->requires_grad = requires_grad;
  return Tensor(n);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_size(shape) != values.size()) {
    throw ShapeError("Tensor::from: " + std::to_string(values.size()) +
                     " values do not fill shape " + shape_str(shape));
  }
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value.assign(values.begin(), values.end());
  n->requires_grad = requires_grad;
  return Tensor(n);
}

Tensor Tensor::scalar(double v, bool requires_grad) { return full({1}, v, requires_grad); }

namespace {

Tensor clone_values(const Tensor& src, bool requires_grad) {
  auto n = make_node(src.shape());
  std::copy(src.data().begin(), src.data().end(), n->value.begin());
  n->requires_grad = requires_grad;
  return Tensor(n);
}

}  // namespace

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

Tensor Tensor::detach() const { return clone_values(*this, false); }

Tensor Tensor::clone() const {
  Tensor t = clone_values(*this, node_->requires_grad);
  return t;
}

// ---- Tape ------------------------------------------------------------------

void Tape::record(std::shared_ptr<Node> out, BackwardFn fn) {
  entries_.push_back({std::move(out), std::move(fn)});
}

void Tape::backward(const Tensor& loss) {
  if (loss.size() != 1) {
    throw ShapeError("backward: loss must be a scalar, got " + shape_str(loss.shape()));
  }
  for (auto& e : entries_) e.out->grad.assign(e.out->value.size(), 0.0);
  auto& root = loss.node();
  root->ensure_grad();
  root->grad[0] += 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) it->fn();
}

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

NoGradScope::NoGradScope() : previous_(g_active_tape) { g_active_tape = nullptr; }
NoGradScope::~NoGradScope() { g_active_tape = previous_; }

Tape* active_tape() { return g_active_tape; }

// ---- elementwise -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  const Broadcast mode = classify_broadcast(a, b, "add");
  const std::size_t row = a.shape().empty() ? 1 : a.shape().back();
  auto out = make_node(a.shape());
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out->value.data();
  const std::size_t n = a.size();
  broadcast_loop(mode, n, row, [&](std::size_t i, std::size_t j) { po[i] = pa[i] + pb[j]; });

  if (tracking({&a, &b})) {
    record(out, [an = a.node(), bn = b.node(), o = out.get(), mode, row]() {
      const std::size_t n = o->value.size();
      if (an->requires_grad) {
        an->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) an->grad[i] += o->grad[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        double* gb = bn->grad.data();
        const double* g = o->grad.data();
        broadcast_loop(mode, n, row, [&](std::size_t i, std::size_t j) { gb[j] += g[i]; });
      }
    });
  }
  return Tensor(out);
}

Tensor sub(const Tensor& a, const Tensor& b) { return add(a, scale(b, -1.0)); }

Tensor mul(const Tensor& a, const Tensor& b) {
  const Broadcast mode = classify_broadcast(a, b, "mul");
  const std::size_t row = a.shape().empty() ? 1 : a.shape().back();
  auto out = make_node(a.shape());
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out->value.data();
  const std::size_t n = a.size();
  broadcast_loop(mode, n, row, [&](std::size_t i, std::size_t j) { po[i] = pa[i] * pb[j]; });

  if (tracking({&a, &b})) {
    record(out, [an = a.node(), bn = b.node(), o = out.get(), mode, row]() {
      const std::size_t n = o->value.size();
      if (an->requires_grad) {
        an->ensure_grad();
        double* ga = an->grad.data();
        const double* g = o->grad.data();
        const double* vb = bn->value.data();
        broadcast_loop(mode, n, row, [&](std::size_t i, std::size_t j) { ga[i] += g[i] * vb[j]; });
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        double* gb = bn->grad.data();
        const double* g = o->grad.data();
        const double* va = an->value.data();
        broadcast_loop(mode, n, row, [&](std::size_t i, std::size_t j) { gb[j] += g[i] * va[i]; });
      }
    });
  }
  return Tensor(out);
}

Tensor scale(const Tensor& a, double c) {
  auto out = make_node(a.shape());
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) out->value[i] = a[i] * c;
  if (tracking({&a})) {
    record(out, [an = a.node(), o = out.get(), c]() {
      an->ensure_grad();
      const std::size_t n = o->value.size();
      for (std::size_t i = 0; i < n; ++i) an->grad[i] += o->grad[i] * c;
    });
  }
  return Tensor(out);
}

// ---- linear algebra --------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  auto out = make_node({m, n});
  const auto em = static_cast<Eigen::Index>(m), ek = static_cast<Eigen::Index>(k),
             en = static_cast<Eigen::Index>(n);
  Map(out->value.data(), em, en).noalias() = ConstMap(a.data().data(), em, ek) * ConstMap(b.data().data(), ek, en);

  if (tracking({&a, &b})) {
    record(out, [an = a.node(), bn = b.node(), o = out.get(), em, ek, en]() {
      const ConstMap g(o->grad.data(), em, en);
      if (an->requires_grad) {
        an->ensure_grad();
        Map(an->grad.data(), em, ek).noalias() += g * ConstMap(bn->value.data(), ek, en).transpose();
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        Map(bn->grad.data(), ek, en).noalias() += ConstMap(an->value.data(), em, ek).transpose() * g;
      }
    });
  }
  return Tensor(out);
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  auto out = make_node({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out->value[j * m + i] = a[i * n + j];
  if (tracking({&a})) {
    record(out, [an = a.node(), o = out.get(), m, n]() {
      an->ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) an->grad[i * n + j] += o->grad[j * m + i];
    });
  }
  return Tensor(out);
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_size(shape) != a.size()) {
    throw ShapeError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
  }
  auto out = std::make_shared<Node>();
  out->shape = std::move(shape);
  out->value = a.node()->value;
  if (tracking({&a})) {
    record(out, [an = a.node(), o = out.get()]() {
      an->ensure_grad();
      const std::size_t n = o->value.size();
      for (std::size_t i = 0; i < n; ++i) an->grad[i] += o->grad[i];
    });
  }
  return Tensor(out);
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  if (axis > 1) throw ShapeError("concat: axis must be 0 or 1");
  for (const auto& p : parts) require_rank2(p, "concat");
  const std::size_t other = axis == 0 ? parts[0].dim(1) : parts[0].dim(0);
  std::size_t total = 0;
  for (const auto& p : parts) {
    const std::size_t o = axis == 0 ? p.dim(1) : p.dim(0);
    if (o != other) throw ShapeError("concat: mismatched " + shape_str(p.shape()));
    total += p.dim(axis);
  }
  const Shape shape = axis == 0 ? Shape{total, other} : Shape{other, total};
  auto out = make_node(shape);
  const std::size_t out_cols = shape[1];

  std::size_t offset = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    const std::size_t rows = p.dim(0), cols = p.dim(1);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) {
        const std::size_t dst = axis == 0 ? (offset + r) * out_cols + c : r * out_cols + offset + c;
        out->value[dst] = p[r * cols + c];
      }
    offset += p.dim(axis);
  }

  bool any = false;
  for (const auto& p : parts) any = any || p.requires_grad();
  if (g_active_tape != nullptr && any) {
    std::vector<NodePtr> nodes;
    for (const auto& p : parts) nodes.push_back(p.node());
    record(out, [nodes = std::move(nodes), offsets = std::move(offsets), o = out.get(), axis,
                 out_cols]() {
      for (std::size_t k = 0; k < nodes.size(); ++k) {
        auto& pn = nodes[k];
        if (!pn->requires_grad) continue;
        pn->ensure_grad();
        const std::size_t rows = pn->shape[0], cols = pn->shape[1];
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < cols; ++c) {
            const std::size_t src =
                axis == 0 ? (offsets[k] + r) * out_cols + c : r * out_cols + offsets[k] + c;
            pn->grad[r * cols + c] += o->grad[src];
          }
      }
    });
  }
  return Tensor(out);
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length) {
  require_rank2(a, "slice");
  if (axis > 1) throw ShapeError("slice: axis must be 0 or 1");
  if (start + length > a.dim(axis) || length == 0) {
    throw ShapeError("slice: range [" + std::to_string(start) + "," +
                     std::to_string(start + length) + ") outside " + shape_str(a.shape()));
  }
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  const std::size_t out_rows = axis == 0 ? length : rows;
  const std::size_t out_cols = axis == 0 ? cols : length;
  const std::size_t r0 = axis == 0 ? start : 0;
  const std::size_t c0 = axis == 0 ? 0 : start;
  auto out = make_node({out_rows, out_cols});
  for (std::size_t r = 0; r < out_rows; ++r)
    for (std::size_t c = 0; c < out_cols; ++c)
      out->value[r * out_cols + c] = a[(r0 + r) * cols + c0 + c];
  if (tracking({&a})) {
    record(out, [an = a.node(), o = out.get(), out_rows, out_cols, r0, c0, cols]() {
      an->ensure_grad();
      for (std::size_t r = 0; r < out_rows; ++r)
        for (std::size_t c = 0; c < out_cols; ++c)
          an->grad[(r0 + r) * cols + c0 + c] += o->grad[r * out_cols + c];
    });
  }
  return Tensor(out);
}

// ---- nonlinearities ----------------------------------------------------------

// tanh form, written as x * sigmoid(2u) so the negative tail never cancels.
Tensor gelu(const Tensor& a) {
  constexpr double c = 0.79788456080286535588;  // sqrt(2/pi)
  constexpr double k = 0.044715;
  const auto n = static_cast<Eigen::Index>(a.size());
  auto out = make_node(a.shape());
  const Eigen::Map<const Eigen::ArrayXd> x(a.data().data(), n);
  const Eigen::ArrayXd s = 1.0 / (1.0 + (-2.0 * c * (x + k * x.cube())).exp());
  Eigen::Map<Eigen::ArrayXd>(out->value.data(), n) = x * s;
  if (tracking({&a})) {
    record(out, [an = a.node(), o = out.get(), s, n]() {
      an->ensure_grad();
      const Eigen::Map<const Eigen::ArrayXd> x(an->value.data(), n);
      const Eigen::Map<const Eigen::ArrayXd> g(o->grad.data(), n);
      Eigen::Map<Eigen::ArrayXd>(an->grad.data(), n) +=
          g * (s + x * s * (1.0 - s) * (2.0 * c) * (1.0 + 3.0 * k * x.square()));
    });
  }
  return Tensor(out);
}

Tensor log(const Tensor& a) {
  auto out = make_node(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!(a[i] > 0.0)) throw ValidationError("log: argument must be positive");
    out->value[i] = std::log(a[i]);
  }
  if (tracking({&a})) {
    record(out, [an = a.node(), o = out.get()]() {
      an->ensure_grad();
      for (std::size_t i = 0; i < o->grad.size(); ++i) an->grad[i] += o->grad[i] / an->value[i];
    });
  }
  return Tensor(out);
}

Tensor softmax(const Tensor& a, std::size_t axis) {
  std::size_t outer = 0, n = 0, inner = 0;
  axis_split(a.shape(), axis, outer, n, inner);
  auto out = make_node(a.shape());
  if (inner == 1) {
    const auto en = static_cast<Eigen::Index>(n);
    for (std::size_t o = 0; o < outer; ++o) {
      const Eigen::Map<const Eigen::ArrayXd> row(a.data().data() + o * n, en);
      Eigen::Map<Eigen::ArrayXd> dst(out->value.data() + o * n, en);
      dst = (row - row.maxCoeff()).exp();
      dst /= dst.sum();
    }
  }
  for (std::size_t o = 0; o < outer && inner > 1; ++o)
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      double mx = a[base];
      for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, a[base + j * inner]);
      double z = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double e = std::exp(a[base + j * inner] - mx);
        out->value[base + j * inner] = e;
        z += e;
      }
      const double inv = 1.0 / z;
      for (std::size_t j = 0; j < n; ++j) out->value[base + j * inner] *= inv;
    }
  if (tracking({&a})) {
    record(out, [an = a.node(), o = out.get(), outer, n, inner]() {
      an->ensure_grad();
      for (std::size_t oo = 0; oo < outer; ++oo)
        for (std::size_t in = 0; in < inner; ++in) {
          const std::size_t base = oo * n * inner + in;
          double dot = 0.0;
          for (std::size_t j = 0; j < n; ++j)
            dot += o->grad[base + j * inner] * o->value[base + j * inner];
          for (std::size_t j = 0; j < n; ++j) {
            const std::size_t idx = base + j * inner;
            an->grad[idx] += o->value[idx] * (o->grad[idx] - dot);
          }
        }
    });
  }
  return Tensor(out);
}

Tensor layernorm_nobias(const Tensor& x, const Tensor& gain) {
  if (x.rank() == 0 || x.size() == 0) throw ShapeError("layernorm_nobias: empty input");
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.size() / n;
  if (gain.size() != n) {
    throw ShapeError("layernorm_nobias: gain " + shape_str(gain.shape()) + " vs row length " +
                     std::to_string(n));
  }
  auto out = make_node(x.shape());
  std::vector<double> xhat(x.size());
  std::vector<double> rstd(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* px = x.data().data() + r * n;
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += px[j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (px[j] - mean) * (px[j] - mean);
    var /= static_cast<double>(n);
    const double rs = 1.0 / std::sqrt(var + kLayerNormEps);
    rstd[r] = rs;
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (px[j] - mean) * rs;
      xhat[r * n + j] = h;
      out->value[r * n + j] = h * gain[j];
    }
  }
  if (tracking({&x, &gain})) {
    record(out, [xn = x.node(), gn = gain.node(), o = out.get(), xhat = std::move(xhat),
                 rstd = std::move(rstd), rows, n]() {
      if (gn->requires_grad) {
        gn->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < n; ++j) gn->grad[j] += o->grad[r * n + j] * xhat[r * n + j];
      }
      if (xn->requires_grad) {
        xn->ensure_grad();
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t r = 0; r < rows; ++r) {
          double mean_d = 0.0, mean_dh = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            const double d = o->grad[r * n + j] * gn->value[j];
            mean_d += d;
            mean_dh += d * xhat[r * n + j];
          }
          mean_d *= inv_n;
          mean_dh *= inv_n;
          for (std::size_t j = 0; j < n; ++j) {
            const double d = o->grad[r * n + j] * gn->value[j];
            xn->grad[r * n + j] += rstd[r] * (d - mean_d - xhat[r * n + j] * mean_dh);
          }
        }
      }
    });
  }
  return Tensor(out);
}

Tensor embedding_lookup(const Tensor& table, std::span<const std::size_t> indices) {
  require_rank2(table, "embedding_lookup");
  const std::size_t vocab = table.dim(0), d = table.dim(1);
  for (std::size_t idx : indices) {
    if (idx >= vocab) {
      throw ValidationError("embedding_lookup: index " + std::to_string(idx) +
                            " outside table of " + std::to_string(vocab) + " rows");
    }
  }
  auto out = make_node({indices.size(), d});
  for (std::size_t r = 0; r < indices.size(); ++r)
    std::copy_n(table.data().data() + indices[r] * d, d, out->value.data() + r * d);
  if (tracking({&table})) {
    record(out, [tn = table.node(), o = out.get(),
                 idx = std::vector<std::size_t>(indices.begin(), indices.end()), d]() {
      tn->ensure_grad();
      for (std::size_t r = 0; r < idx.size(); ++r)
        for (std::size_t c = 0; c < d; ++c) tn->grad[idx[r] * d + c] += o->grad[r * d + c];
    });
  }
  return Tensor(out);
}

Tensor mean_pool(const Tensor& a, std::size_t axis) {
  require_rank2(a, "mean_pool");
  if (axis > 1) throw ShapeError("mean_pool: axis must be 0 or 1");
  const std::size_t m = a.dim(0), n = a.dim(1);
  auto out = make_node(axis == 0 ? Shape{1, n} : Shape{m, 1}, true);
  const double inv = 1.0 / static_cast<double>(axis == 0 ? m : n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out->value[axis == 0 ? j : i] += a[i * n + j] * inv;
  if (tracking({&a})) {
    record(out, [an = a.node(), o = out.get(), m, n, axis, inv]() {
      an->ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) an->grad[i * n + j] += o->grad[axis == 0 ? j : i] * inv;
    });
  }
  return Tensor(out);
}

Tensor sum(const Tensor& a) {
  auto out = make_node({1});
  double s = 0.0;
  for (double v : a.data()) s += v;
  out->value[0] = s;
  if (tracking({&a})) {
    record(out, [an = a.node(), o = out.get()]() {
      an->ensure_grad();
      for (double& g : an->grad) g += o->grad[0];
    });
  }
  return Tensor(out);
}

std::vector<double> softmax_values(std::span<const double> logits) {
  std::vector<double> p(logits.begin(), logits.end());
  if (p.empty()) return p;
  const double mx = *std::max_element(p.begin(), p.end());
  double z = 0.0;
  for (double& v : p) {
    v = std::exp(v - mx);
    z += v;
  }
  for (double& v : p) v /= z;
  return p;
}

Tensor cross_entropy(const Tensor& logits, std::size_t cls) {
  const std::size_t n = logits.size();
  const bool row = logits.rank() == 1 || (logits.rank() == 2 && logits.dim(0) == 1);
  if (!row || n == 0) throw ShapeError("cross_entropy: expected one row of logits");
  if (cls >= n) {
    throw ValidationError("cross_entropy: class " + std::to_string(cls) + " outside " +
                          std::to_string(n) + " logits");
  }
  const auto probs = softmax_values(logits.data());
  auto out = make_node({1});
  out->value[0] = -std::log(std::max(probs[cls], 1e-300));
  if (tracking({&logits})) {
    record(out, [ln = logits.node(), o = out.get(), probs, cls]() {
      ln->ensure_grad();
      for (std::size_t i = 0; i < probs.size(); ++i)
        ln->grad[i] += o->grad[0] * (probs[i] - (i == cls ? 1.0 : 0.0));
    });
  }
  return Tensor(out);
}

Tensor dropout(const Tensor& a, double p, std::mt19937_64& rng) {
  if (p <= 0.0) return a;
  if (p >= 1.0) throw ValidationError("dropout: p must be < 1");
  std::bernoulli_distribution keep(1.0 - p);
  std::vector<double> mask(a.size());
  for (double& m : mask) m = keep(rng) ? 1.0 / (1.0 - p) : 0.0;
  return mul(a, Tensor::from(a.shape(), std::move(mask)));
}

}  // namespace pptp::ad
