#include "stpp/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <unordered_set>

namespace stpp {

namespace {

thread_local bool g_grad_enabled = true;

std::size_t shape_numel(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw std::invalid_argument("tensor: negative dimension");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_str(const std::vector<int>& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + ")";
}

void require_rank2(const Tensor& t, const char* op) {
  if (t.shape().size() != 2)
    throw std::invalid_argument(std::string(op) + ": expected rank-2 tensor, got " +
                                shape_str(t.shape()));
}

void check_finite(const Tensor& t, const char* op) {
  const auto& d = t.data();
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!std::isfinite(d[i]))
      throw std::runtime_error(std::string(op) + ": non-finite value at flat index " +
                               std::to_string(i));
  }
}

bool track(const Tensor& a) { return g_grad_enabled && a.requires_grad(); }
bool track(const Tensor& a, const Tensor& b) { return track(a) || track(b); }

void attach(Tensor& out, std::vector<Tensor> inputs, std::function<void(Node&)> fn) {
  auto node = std::make_shared<Node>();
  node->inputs = std::move(inputs);
  node->out = out.impl();
  node->backprop = std::move(fn);
  out.impl()->node = std::move(node);
}

std::vector<double>& grad_of(Tensor& t) { return t.impl()->grad; }

Tensor make_output(std::vector<int> shape, bool requires_grad) {
  return Tensor::zeros(std::move(shape), requires_grad);
}

}  // namespace

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  Tensor t;
  t.impl_ = std::make_shared<TensorImpl>();
  t.impl_->shape = std::move(shape);
  t.impl_->data.assign(shape_numel(t.impl_->shape), 0.0);
  t.impl_->requires_grad = requires_grad;
  if (requires_grad) t.impl_->grad.assign(t.impl_->data.size(), 0.0);
  return t;
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  std::fill(t.data().begin(), t.data().end(), value);
  return t;
}

Tensor Tensor::from(std::vector<int> shape, std::vector<double> data, bool requires_grad) {
  if (shape_numel(shape) != data.size())
    throw std::invalid_argument("tensor: shape " + shape_str(shape) + " does not match " +
                                std::to_string(data.size()) + " data values");
  Tensor t = zeros(std::move(shape), requires_grad);
  t.data() = std::move(data);
  return t;
}

Tensor Tensor::scalar(double v) { return from({1, 1}, {v}); }

Tensor Tensor::row_vector(std::vector<double> v, bool requires_grad) {
  const int n = static_cast<int>(v.size());
  return from({1, n}, std::move(v), requires_grad);
}

double Tensor::value() const {
  if (numel() != 1) throw std::invalid_argument("value(): tensor is not scalar");
  return impl_->data[0];
}

void Tensor::zero_grad() {
  if (impl_->requires_grad) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Tensor::detached_copy() const {
  Tensor t = zeros(impl_->shape, impl_->requires_grad);
  t.data() = impl_->data;
  return t;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradScope::NoGradScope() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradScope::~NoGradScope() { g_grad_enabled = prev_; }

// --- primitives -------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const int n = a.rows(), m = a.cols(), m2 = b.rows(), p = b.cols();
  if (m != m2)
    throw std::invalid_argument("matmul: inner dimensions differ, " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  Tensor out = make_output({n, p}, track(a, b));
  const auto& ad = a.data();
  const auto& bd = b.data();
  auto& od = out.data();
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < m; ++k) {
      const double av = ad[static_cast<std::size_t>(i) * m + k];
      if (av == 0.0) continue;
      const std::size_t brow = static_cast<std::size_t>(k) * p;
      const std::size_t orow = static_cast<std::size_t>(i) * p;
      for (int j = 0; j < p; ++j) od[orow + j] += av * bd[brow + j];
    }
  }
  check_finite(out, "matmul");
  if (out.requires_grad()) {
    attach(out, {a, b}, [n, m, p](Node& nd) {
      const auto& g = nd.out->grad;
      Tensor& pa = nd.inputs[0];
      Tensor& pb = nd.inputs[1];
      if (pa.requires_grad()) {
        auto& ga = grad_of(pa);
        const auto& bd2 = pb.data();
        // dA = G * B^T
        for (int i = 0; i < n; ++i)
          for (int k = 0; k < m; ++k) {
            double acc = 0.0;
            const std::size_t grow = static_cast<std::size_t>(i) * p;
            const std::size_t brow = static_cast<std::size_t>(k) * p;
            for (int j = 0; j < p; ++j) acc += g[grow + j] * bd2[brow + j];
            ga[static_cast<std::size_t>(i) * m + k] += acc;
          }
      }
      if (pb.requires_grad()) {
        auto& gb = grad_of(pb);
        const auto& ad2 = pa.data();
        // dB = A^T * G
        for (int i = 0; i < n; ++i) {
          const std::size_t arow = static_cast<std::size_t>(i) * m;
          const std::size_t grow = static_cast<std::size_t>(i) * p;
          for (int k = 0; k < m; ++k) {
            const double av = ad2[arow + k];
            if (av == 0.0) continue;
            const std::size_t brow = static_cast<std::size_t>(k) * p;
            for (int j = 0; j < p; ++j) gb[brow + j] += av * g[grow + j];
          }
        }
      }
    });
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  const int n = a.rows(), m = a.cols();
  Tensor out = make_output({m, n}, track(a));
  const auto& ad = a.data();
  auto& od = out.data();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) od[static_cast<std::size_t>(j) * n + i] = ad[static_cast<std::size_t>(i) * m + j];
  if (out.requires_grad()) {
    attach(out, {a}, [n, m](Node& nd) {
      Tensor& pa = nd.inputs[0];
      if (!pa.requires_grad()) return;
      auto& ga = grad_of(pa);
      const auto& g = nd.out->grad;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j)
          ga[static_cast<std::size_t>(i) * m + j] += g[static_cast<std::size_t>(j) * n + i];
    });
  }
  return out;
}

namespace {

enum class EwKind { Add, Sub, Mul };

Tensor elementwise(const Tensor& a, const Tensor& b, EwKind kind, const char* name) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(name) + ": shape mismatch, " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  Tensor out = make_output(a.shape(), track(a, b));
  const auto& ad = a.data();
  const auto& bd = b.data();
  auto& od = out.data();
  const std::size_t n = od.size();
  for (std::size_t i = 0; i < n; ++i) {
    switch (kind) {
      case EwKind::Add: od[i] = ad[i] + bd[i]; break;
      case EwKind::Sub: od[i] = ad[i] - bd[i]; break;
      case EwKind::Mul: od[i] = ad[i] * bd[i]; break;
    }
  }
  check_finite(out, name);
  if (out.requires_grad()) {
    attach(out, {a, b}, [kind](Node& nd) {
      const auto& g = nd.out->grad;
      Tensor& pa = nd.inputs[0];
      Tensor& pb = nd.inputs[1];
      const std::size_t n2 = g.size();
      if (pa.requires_grad()) {
        auto& ga = grad_of(pa);
        if (kind == EwKind::Mul) {
          const auto& bd2 = pb.data();
          for (std::size_t i = 0; i < n2; ++i) ga[i] += g[i] * bd2[i];
        } else {
          for (std::size_t i = 0; i < n2; ++i) ga[i] += g[i];
        }
      }
      if (pb.requires_grad()) {
        auto& gb = grad_of(pb);
        switch (kind) {
          case EwKind::Add:
            for (std::size_t i = 0; i < n2; ++i) gb[i] += g[i];
            break;
          case EwKind::Sub:
            for (std::size_t i = 0; i < n2; ++i) gb[i] -= g[i];
            break;
          case EwKind::Mul: {
            const auto& ad2 = pa.data();
            for (std::size_t i = 0; i < n2; ++i) gb[i] += g[i] * ad2[i];
            break;
          }
        }
      }
    });
  }
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return elementwise(a, b, EwKind::Add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(a, b, EwKind::Sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(a, b, EwKind::Mul, "mul"); }

Tensor add_rowvec(const Tensor& m, const Tensor& rowv) {
  require_rank2(m, "add_rowvec");
  require_rank2(rowv, "add_rowvec");
  if (rowv.rows() != 1 || rowv.cols() != m.cols())
    throw std::invalid_argument("add_rowvec: row vector " + shape_str(rowv.shape()) +
                                " does not match matrix " + shape_str(m.shape()));
  const int n = m.rows(), c = m.cols();
  Tensor out = make_output({n, c}, track(m, rowv));
  const auto& md = m.data();
  const auto& rd = rowv.data();
  auto& od = out.data();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j)
      od[static_cast<std::size_t>(i) * c + j] = md[static_cast<std::size_t>(i) * c + j] + rd[j];
  check_finite(out, "add_rowvec");
  if (out.requires_grad()) {
    attach(out, {m, rowv}, [n, c](Node& nd) {
      const auto& g = nd.out->grad;
      Tensor& pm = nd.inputs[0];
      Tensor& pr = nd.inputs[1];
      if (pm.requires_grad()) {
        auto& gm = grad_of(pm);
        for (std::size_t i = 0; i < g.size(); ++i) gm[i] += g[i];
      }
      if (pr.requires_grad()) {
        auto& gr = grad_of(pr);
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < c; ++j) gr[j] += g[static_cast<std::size_t>(i) * c + j];
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& a, double cst) {
  if (!std::isfinite(cst)) throw std::invalid_argument("scale: non-finite constant");
  Tensor out = make_output(a.shape(), track(a));
  const auto& ad = a.data();
  auto& od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = ad[i] * cst;
  check_finite(out, "scale");
  if (out.requires_grad()) {
    attach(out, {a}, [cst](Node& nd) {
      Tensor& pa = nd.inputs[0];
      if (!pa.requires_grad()) return;
      auto& ga = grad_of(pa);
      const auto& g = nd.out->grad;
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * cst;
    });
  }
  return out;
}

Tensor relu(const Tensor& a) {
  Tensor out = make_output(a.shape(), track(a));
  const auto& ad = a.data();
  auto& od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = ad[i] > 0.0 ? ad[i] : 0.0;
  if (out.requires_grad()) {
    attach(out, {a}, [](Node& nd) {
      Tensor& pa = nd.inputs[0];
      if (!pa.requires_grad()) return;
      auto& ga = grad_of(pa);
      const auto& g = nd.out->grad;
      const auto& ad2 = pa.data();
      for (std::size_t i = 0; i < g.size(); ++i)
        if (ad2[i] > 0.0) ga[i] += g[i];
    });
  }
  return out;
}

namespace {

// softmax over a contiguous strided slice, with max subtraction
void softmax_slice(const double* in, double* out, int len, std::size_t stride) {
  double mx = in[0];
  for (int i = 1; i < len; ++i) mx = std::max(mx, in[static_cast<std::size_t>(i) * stride]);
  double denom = 0.0;
  for (int i = 0; i < len; ++i) {
    const double e = std::exp(in[static_cast<std::size_t>(i) * stride] - mx);
    out[static_cast<std::size_t>(i) * stride] = e;
    denom += e;
  }
  for (int i = 0; i < len; ++i) out[static_cast<std::size_t>(i) * stride] /= denom;
}

void softmax_slice_backward(const double* y, const double* g, double* gx, int len,
                            std::size_t stride) {
  double dot = 0.0;
  for (int i = 0; i < len; ++i)
    dot += y[static_cast<std::size_t>(i) * stride] * g[static_cast<std::size_t>(i) * stride];
  for (int i = 0; i < len; ++i) {
    const std::size_t ix = static_cast<std::size_t>(i) * stride;
    gx[ix] += y[ix] * (g[ix] - dot);
  }
}

}  // namespace

Tensor softmax(const Tensor& a, int axis) {
  require_rank2(a, "softmax");
  if (axis != 0 && axis != 1) throw std::invalid_argument("softmax: axis must be 0 or 1");
  const int n = a.rows(), c = a.cols();
  const int len = axis == 1 ? c : n;
  if (len == 0) throw std::invalid_argument("softmax: empty axis");
  Tensor out = make_output({n, c}, track(a));
  const auto& ad = a.data();
  auto& od = out.data();
  if (axis == 1) {
    for (int i = 0; i < n; ++i)
      softmax_slice(&ad[static_cast<std::size_t>(i) * c], &od[static_cast<std::size_t>(i) * c], c, 1);
  } else {
    for (int j = 0; j < c; ++j) softmax_slice(&ad[j], &od[j], n, c);
  }
  check_finite(out, "softmax");
  if (out.requires_grad()) {
    attach(out, {a}, [n, c, axis](Node& nd) {
      Tensor& pa = nd.inputs[0];
      if (!pa.requires_grad()) return;
      auto& gx = grad_of(pa);
      const auto& g = nd.out->grad;
      const auto& y = nd.out->data;
      if (axis == 1) {
        for (int i = 0; i < n; ++i) {
          const std::size_t off = static_cast<std::size_t>(i) * c;
          softmax_slice_backward(&y[off], &g[off], &gx[off], c, 1);
        }
      } else {
        for (int j = 0; j < c; ++j) softmax_slice_backward(&y[j], &g[j], &gx[j], n, c);
      }
    });
  }
  return out;
}

Tensor causal_row_softmax(const Tensor& a) {
  require_rank2(a, "causal_row_softmax");
  if (a.rows() != a.cols())
    throw std::invalid_argument("causal_row_softmax: matrix must be square, got " +
                                shape_str(a.shape()));
  const int n = a.rows();
  if (n == 0) throw std::invalid_argument("causal_row_softmax: empty axis");
  Tensor out = make_output({n, n}, track(a));
  const auto& ad = a.data();
  auto& od = out.data();
  for (int i = 0; i < n; ++i) {
    const std::size_t off = static_cast<std::size_t>(i) * n;
    softmax_slice(&ad[off], &od[off], i + 1, 1);
    // entries above the diagonal remain zero
  }
  check_finite(out, "causal_row_softmax");
  if (out.requires_grad()) {
    attach(out, {a}, [n](Node& nd) {
      Tensor& pa = nd.inputs[0];
      if (!pa.requires_grad()) return;
      auto& gx = grad_of(pa);
      const auto& g = nd.out->grad;
      const auto& y = nd.out->data;
      for (int i = 0; i < n; ++i) {
        const std::size_t off = static_cast<std::size_t>(i) * n;
        softmax_slice_backward(&y[off], &g[off], &gx[off], i + 1, 1);
      }
    });
  }
  return out;
}

Tensor concat(const Tensor& a, const Tensor& b, int axis) {
  require_rank2(a, "concat");
  require_rank2(b, "concat");
  if (axis != 0 && axis != 1) throw std::invalid_argument("concat: axis must be 0 or 1");
  const int off_axis = 1 - axis;
  if (a.shape()[off_axis] != b.shape()[off_axis])
    throw std::invalid_argument("concat: off-axis dimensions differ, " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  std::vector<int> shp = a.shape();
  shp[axis] += b.shape()[axis];
  Tensor out = make_output(shp, track(a, b));
  const int n = shp[0], c = shp[1];
  const int ac = a.cols(), ar = a.rows();
  const auto& ad = a.data();
  const auto& bd = b.data();
  auto& od = out.data();
  if (axis == 0) {
    std::copy(ad.begin(), ad.end(), od.begin());
    std::copy(bd.begin(), bd.end(), od.begin() + static_cast<std::ptrdiff_t>(ad.size()));
  } else {
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < ac; ++j)
        od[static_cast<std::size_t>(i) * c + j] = ad[static_cast<std::size_t>(i) * ac + j];
      for (int j = 0; j < b.cols(); ++j)
        od[static_cast<std::size_t>(i) * c + ac + j] = bd[static_cast<std::size_t>(i) * b.cols() + j];
    }
  }
  if (out.requires_grad()) {
    attach(out, {a, b}, [axis, ar, ac, c](Node& nd) {
      const auto& g = nd.out->grad;
      Tensor& pa = nd.inputs[0];
      Tensor& pb = nd.inputs[1];
      if (axis == 0) {
        const std::size_t na = pa.numel();
        if (pa.requires_grad()) {
          auto& ga = grad_of(pa);
          for (std::size_t i = 0; i < na; ++i) ga[i] += g[i];
        }
        if (pb.requires_grad()) {
          auto& gb = grad_of(pb);
          for (std::size_t i = 0; i < pb.numel(); ++i) gb[i] += g[na + i];
        }
      } else {
        if (pa.requires_grad()) {
          auto& ga = grad_of(pa);
          for (int i = 0; i < ar; ++i)
            for (int j = 0; j < ac; ++j)
              ga[static_cast<std::size_t>(i) * ac + j] += g[static_cast<std::size_t>(i) * c + j];
        }
        if (pb.requires_grad()) {
          auto& gb = grad_of(pb);
          const int bc = c - ac;
          for (int i = 0; i < ar; ++i)
            for (int j = 0; j < bc; ++j)
              gb[static_cast<std::size_t>(i) * bc + j] += g[static_cast<std::size_t>(i) * c + ac + j];
        }
      }
    });
  }
  return out;
}

Tensor gather_rows(const Tensor& table, const std::vector<int>& ids) {
  require_rank2(table, "gather_rows");
  const int n = static_cast<int>(ids.size()), c = table.cols();
  for (int id : ids)
    if (id < 0 || id >= table.rows())
      throw std::invalid_argument("gather_rows: row id " + std::to_string(id) +
                                  " out of range [0," + std::to_string(table.rows()) + ")");
  Tensor out = make_output({n, c}, track(table));
  const auto& td = table.data();
  auto& od = out.data();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j)
      od[static_cast<std::size_t>(i) * c + j] = td[static_cast<std::size_t>(ids[i]) * c + j];
  if (out.requires_grad()) {
    attach(out, {table}, [ids, c](Node& nd) {
      Tensor& pt = nd.inputs[0];
      if (!pt.requires_grad()) return;
      auto& gt = grad_of(pt);
      const auto& g = nd.out->grad;
      for (std::size_t i = 0; i < ids.size(); ++i)
        for (int j = 0; j < c; ++j)
          gt[static_cast<std::size_t>(ids[i]) * c + j] += g[i * c + j];
    });
  }
  return out;
}

Tensor row(const Tensor& a, int index) {
  require_rank2(a, "row");
  if (index < 0 || index >= a.rows())
    throw std::invalid_argument("row: index " + std::to_string(index) + " out of range [0," +
                                std::to_string(a.rows()) + ")");
  const int c = a.cols();
  Tensor out = make_output({1, c}, track(a));
  const auto& ad = a.data();
  auto& od = out.data();
  for (int j = 0; j < c; ++j) od[j] = ad[static_cast<std::size_t>(index) * c + j];
  if (out.requires_grad()) {
    attach(out, {a}, [index, c](Node& nd) {
      Tensor& pa = nd.inputs[0];
      if (!pa.requires_grad()) return;
      auto& ga = grad_of(pa);
      const auto& g = nd.out->grad;
      for (int j = 0; j < c; ++j) ga[static_cast<std::size_t>(index) * c + j] += g[j];
    });
  }
  return out;
}

Tensor blend2(const Tensor& w, const Tensor& x0, const Tensor& x1) {
  if (w.shape() != std::vector<int>{1, 2})
    throw std::invalid_argument("blend2: weights must be 1x2, got " + shape_str(w.shape()));
  if (x0.shape() != x1.shape())
    throw std::invalid_argument("blend2: operand shapes differ, " + shape_str(x0.shape()) +
                                " vs " + shape_str(x1.shape()));
  Tensor out = make_output(x0.shape(), g_grad_enabled && (w.requires_grad() || x0.requires_grad() ||
                                                          x1.requires_grad()));
  const double w0 = w.data()[0], w1 = w.data()[1];
  const auto& d0 = x0.data();
  const auto& d1 = x1.data();
  auto& od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = w0 * d0[i] + w1 * d1[i];
  check_finite(out, "blend2");
  if (out.requires_grad()) {
    attach(out, {w, x0, x1}, [](Node& nd) {
      const auto& g = nd.out->grad;
      Tensor& pw = nd.inputs[0];
      Tensor& p0 = nd.inputs[1];
      Tensor& p1 = nd.inputs[2];
      const double w0b = pw.data()[0], w1b = pw.data()[1];
      if (p0.requires_grad()) {
        auto& g0 = grad_of(p0);
        for (std::size_t i = 0; i < g.size(); ++i) g0[i] += w0b * g[i];
      }
      if (p1.requires_grad()) {
        auto& g1 = grad_of(p1);
        for (std::size_t i = 0; i < g.size(); ++i) g1[i] += w1b * g[i];
      }
      if (pw.requires_grad()) {
        auto& gw = grad_of(pw);
        const auto& d0b = p0.data();
        const auto& d1b = p1.data();
        double a0 = 0.0, a1 = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) {
          a0 += g[i] * d0b[i];
          a1 += g[i] * d1b[i];
        }
        gw[0] += a0;
        gw[1] += a1;
      }
    });
  }
  return out;
}

namespace {

Tensor reduce(const Tensor& a, bool take_mean, const char* name) {
  const std::size_t n = a.numel();
  if (n == 0) throw std::invalid_argument(std::string(name) + ": empty tensor");
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  const double denom = take_mean ? static_cast<double>(n) : 1.0;
  Tensor out = Tensor::zeros({1, 1}, track(a));
  out.data()[0] = acc / denom;
  check_finite(out, name);
  if (out.requires_grad()) {
    attach(out, {a}, [denom](Node& nd) {
      Tensor& pa = nd.inputs[0];
      if (!pa.requires_grad()) return;
      auto& ga = grad_of(pa);
      const double g = nd.out->grad[0] / denom;
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
    });
  }
  return out;
}

}  // namespace

Tensor sum(const Tensor& a) { return reduce(a, false, "sum"); }
Tensor mean(const Tensor& a) { return reduce(a, true, "mean"); }

Tensor mse(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw std::invalid_argument("mse: shape mismatch, " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  const std::size_t n = a.numel();
  if (n == 0) throw std::invalid_argument("mse: empty tensor");
  double acc = 0.0;
  const auto& ad = a.data();
  const auto& bd = b.data();
  for (std::size_t i = 0; i < n; ++i) {
    const double d = ad[i] - bd[i];
    acc += d * d;
  }
  Tensor out = Tensor::zeros({1, 1}, track(a, b));
  out.data()[0] = acc / static_cast<double>(n);
  check_finite(out, "mse");
  if (out.requires_grad()) {
    attach(out, {a, b}, [n](Node& nd) {
      const double g = nd.out->grad[0] * 2.0 / static_cast<double>(n);
      Tensor& pa = nd.inputs[0];
      Tensor& pb = nd.inputs[1];
      const auto& ad2 = pa.data();
      const auto& bd2 = pb.data();
      if (pa.requires_grad()) {
        auto& ga = grad_of(pa);
        for (std::size_t i = 0; i < n; ++i) ga[i] += g * (ad2[i] - bd2[i]);
      }
      if (pb.requires_grad()) {
        auto& gb = grad_of(pb);
        for (std::size_t i = 0; i < n; ++i) gb[i] -= g * (ad2[i] - bd2[i]);
      }
    });
  }
  return out;
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1)
    throw std::invalid_argument("backward: loss must be a scalar tensor");
  Node* root = loss.impl()->node.get();
  if (root == nullptr) throw std::invalid_argument("backward: graph is empty");
  if (!loss.requires_grad())
    throw std::invalid_argument("backward: loss does not require grad");

  // Post-order DFS; reversed, it is a topological order with every consumer
  // processed before its producers. Each node is visited exactly once.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen{root};
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  while (!stack.empty()) {
    auto& [nd, idx] = stack.back();
    if (idx < nd->inputs.size()) {
      Node* child = nd->inputs[idx].impl()->node.get();
      ++idx;
      if (child != nullptr && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(nd);
      stack.pop_back();
    }
  }

  // Node outputs hold pass-local gradients; only leaf grads persist, so a
  // second backward on the same graph accumulates exactly additively.
  for (Node* nd : order) std::fill(nd->out->grad.begin(), nd->out->grad.end(), 0.0);
  loss.impl()->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node& nd = **it;
    if (nd.backprop) nd.backprop(nd);
  }
}

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& point,
                  double step) {
  if (step <= 0.0) throw std::invalid_argument("grad_check: step must be positive");
  Tensor x = point.detached_copy();
  x.impl()->requires_grad = true;
  x.impl()->grad.assign(x.numel(), 0.0);

  Tensor loss = f(x);
  if (loss.numel() != 1) throw std::invalid_argument("grad_check: function must return a scalar");
  backward(loss);
  std::vector<double> analytic = x.grad();

  NoGradScope ng;
  double max_rel = 0.0;
  auto& xd = x.data();
  for (std::size_t i = 0; i < xd.size(); ++i) {
    const double orig = xd[i];
    double fp, fm;
    try {
      xd[i] = orig + step;
      fp = f(x).value();
      xd[i] = orig - step;
      fm = f(x).value();
    } catch (const std::exception& e) {
      xd[i] = orig;
      throw std::runtime_error("grad_check: non-finite evaluation at coordinate " +
                               std::to_string(i) + ": " + e.what());
    }
    xd[i] = orig;
    const double central = (fp - fm) / (2.0 * step);
    if (!std::isfinite(central))
      throw std::runtime_error("grad_check: non-finite difference at coordinate " +
                               std::to_string(i));
    const double denom = std::max({std::fabs(analytic[i]), std::fabs(central), 1e-8});
    max_rel = std::max(max_rel, std::fabs(analytic[i] - central) / denom);
  }
  return max_rel;
}

}  // namespace stpp
