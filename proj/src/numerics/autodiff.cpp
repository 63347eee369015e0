#include "ssm/numerics/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ssm/errors.hpp"

namespace ssm::num {

const Tensor& Var::value() const { return tape_->value(id_); }

Var Tape::constant(Tensor value) {
  if (!value.all_finite()) throw NumericError("constant has non-finite entries");
  nodes_.push_back(Node{std::move(value), {}, {}, {}, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(const ParamStore& store, std::string_view name) {
  nodes_.push_back(Node{store.get(name), {}, {}, std::string(name), true});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(std::string_view op, Tensor value, std::span<const Var> inputs, BackwardFn backward) {
  if (!value.all_finite()) throw NumericError(std::string(op) + " produced a non-finite value");
  bool needs = false;
  for (const auto& in : inputs) {
    if (in.tape_ != this) throw ArgumentError(std::string(op) + ": input from another tape");
    needs = needs || nodes_[in.id_].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, needs ? std::move(backward) : BackwardFn{}, {}, needs});
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad(std::size_t id) {
  auto& node = nodes_[id];
  if (node.grad.empty()) node.grad = Tensor(node.value.shape(), 0.0);
  return node.grad;
}

void Tape::backward(Var loss) {
  if (loss.tape_ != this) throw ArgumentError("backward: loss from another tape");
  if (value(loss.id_).size() != 1) throw DimensionError("backward: loss must be a scalar");
  for (auto& node : nodes_) node.grad = Tensor();
  grad(loss.id_)[0] = 1.0;
  for (std::size_t i = loss.id_ + 1; i-- > 0;) {
    auto& node = nodes_[i];
    if (node.backward && !node.grad.empty()) node.backward(*this, i);
  }
}

ParamStore Tape::gradients(const ParamStore& like) const {
  ParamStore out = like.zeros_like();
  for (const auto& node : nodes_) {
    if (node.param_name.empty() || node.grad.empty()) continue;
    auto& dst = out.get(node.param_name);
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += node.grad[i];
  }
  return out;
}

namespace ops {

namespace {

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " + b.shape_string());
  }
}

Tensor as_matrix(const Tensor& t) { return Tensor({t.rows(), t.cols()}, t.data()); }

template <class F>
Var unary(const char* name, Var a, F forward, std::function<double(double x, double y)> derivative) {
  const Tensor& av = a.value();
  Tensor out = as_matrix(av);
  for (auto& v : out.data()) v = forward(v);
  const std::size_t ia = a.id();
  return a.tape().record(name, std::move(out), std::span<const Var>(&a, 1),
                         [ia, derivative](Tape& t, std::size_t self) {
                           if (!t.requires_grad(ia)) return;
                           const auto& x = t.value(ia);
                           const auto& y = t.value(self);
                           const auto& g = t.grad(self);
                           auto& ga = t.grad(ia);
                           for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * derivative(x[i], y[i]);
                         });
}

}  // namespace

Var add(Var a, Var b) {
  require_same_shape("add", a.value(), b.value());
  Tensor out = as_matrix(a.value());
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const Var in[] = {a, b};
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record("add", std::move(out), in, [ia, ib](Tape& t, std::size_t self) {
    const auto& g = t.grad(self);
    for (auto id : {ia, ib}) {
      if (!t.requires_grad(id)) continue;
      auto& gi = t.grad(id);
      for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += g[i];
    }
  });
}

Var sub(Var a, Var b) {
  require_same_shape("sub", a.value(), b.value());
  Tensor out = as_matrix(a.value());
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  const Var in[] = {a, b};
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record("sub", std::move(out), in, [ia, ib](Tape& t, std::size_t self) {
    const auto& g = t.grad(self);
    if (t.requires_grad(ia)) {
      auto& ga = t.grad(ia);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
    }
    if (t.requires_grad(ib)) {
      auto& gb = t.grad(ib);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same_shape("mul", a.value(), b.value());
  Tensor out = as_matrix(a.value());
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const Var in[] = {a, b};
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record("mul", std::move(out), in, [ia, ib](Tape& t, std::size_t self) {
    const auto& g = t.grad(self);
    const auto& av = t.value(ia);
    const auto& bv = t.value(ib);
    if (t.requires_grad(ia)) {
      auto& ga = t.grad(ia);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.requires_grad(ib)) {
      auto& gb = t.grad(ib);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Var div(Var a, Var b) {
  require_same_shape("div", a.value(), b.value());
  Tensor out = as_matrix(a.value());
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] /= bv[i];
  const Var in[] = {a, b};
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record("div", std::move(out), in, [ia, ib](Tape& t, std::size_t self) {
    const auto& g = t.grad(self);
    const auto& bv = t.value(ib);
    const auto& y = t.value(self);
    if (t.requires_grad(ia)) {
      auto& ga = t.grad(ia);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] / bv[i];
    }
    if (t.requires_grad(ib)) {
      auto& gb = t.grad(ib);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= g[i] * y[i] / bv[i];
    }
  });
}

Var scale(Var a, double s) {
  return unary("scale", a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}

Var add_scalar(Var a, double s) {
  return unary("add_scalar", a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var add_row(Var a, Var row) {
  const auto& av = a.value();
  const auto& rv = row.value();
  if (rv.rows() != 1 || rv.cols() != av.cols()) {
    throw DimensionError("add_row: row " + rv.shape_string() + " does not fit " + av.shape_string());
  }
  Tensor out = as_matrix(av);
  const std::size_t n = out.rows(), m = out.cols();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < m; ++c) out(r, c) += rv[c];
  const Var in[] = {a, row};
  const std::size_t ia = a.id(), ib = row.id();
  return a.tape().record("add_row", std::move(out), in, [ia, ib, n, m](Tape& t, std::size_t self) {
    const auto& g = t.grad(self);
    if (t.requires_grad(ia)) {
      auto& ga = t.grad(ia);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
    }
    if (t.requires_grad(ib)) {
      auto& gb = t.grad(ib);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < m; ++c) gb[c] += g[r * m + c];
    }
  });
}

Var matmul(Var a, Var b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  const std::size_t n = av.rows(), k = av.cols(), m = bv.cols();
  if (bv.rows() != k) throw DimensionError("matmul: " + av.shape_string() + " x " + bv.shape_string());
  Tensor out = Tensor::matrix(n, m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double x = av(i, p);
      for (std::size_t j = 0; j < m; ++j) out(i, j) += x * bv(p, j);
    }
  const Var in[] = {a, b};
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record("matmul", std::move(out), in, [ia, ib, n, k, m](Tape& t, std::size_t self) {
    const auto& g = t.grad(self);
    const auto& av = t.value(ia);
    const auto& bv = t.value(ib);
    if (t.requires_grad(ia)) {
      auto& ga = t.grad(ia);  // g * b^T
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < m; ++j) s += g[i * m + j] * bv[p * m + j];
          ga[i * k + p] += s;
        }
    }
    if (t.requires_grad(ib)) {
      auto& gb = t.grad(ib);  // a^T * g
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double x = av[i * k + p];
          for (std::size_t j = 0; j < m; ++j) gb[p * m + j] += x * g[i * m + j];
        }
    }
  });
}

Var matmul_nt(Var a, Var b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  const std::size_t n = av.rows(), k = av.cols(), m = bv.rows();
  if (bv.cols() != k) throw DimensionError("matmul_nt: " + av.shape_string() + " x " + bv.shape_string() + "^T");
  Tensor out = Tensor::matrix(n, m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += av(i, p) * bv(j, p);
      out(i, j) = s;
    }
  const Var in[] = {a, b};
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record("matmul_nt", std::move(out), in, [ia, ib, n, k, m](Tape& t, std::size_t self) {
    const auto& g = t.grad(self);
    const auto& av = t.value(ia);
    const auto& bv = t.value(ib);
    if (t.requires_grad(ia)) {
      auto& ga = t.grad(ia);  // g * b
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
          const double gij = g[i * m + j];
          if (gij == 0.0) continue;
          for (std::size_t p = 0; p < k; ++p) ga[i * k + p] += gij * bv[j * k + p];
        }
    }
    if (t.requires_grad(ib)) {
      auto& gb = t.grad(ib);  // g^T * a
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
          const double gij = g[i * m + j];
          if (gij == 0.0) continue;
          for (std::size_t p = 0; p < k; ++p) gb[j * k + p] += gij * av[i * k + p];
        }
    }
  });
}

Var linear(Var x, Var weight, Var bias) { return add_row(matmul_nt(x, weight), bias); }

Var linear(Var x, Var weight) { return matmul_nt(x, weight); }

Var sigmoid(Var a) {
  return unary(
      "sigmoid", a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Var relu(Var a) {
  return unary(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var tanh(Var a) {
  return unary(
      "tanh", a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var log_floor(Var a, double floor) {
  return unary(
      "log_floor", a, [floor](double x) { return std::log(std::max(x, floor)); },
      [floor](double x, double) { return x > floor ? 1.0 / x : 0.0; });
}

Var softmax_rows(Var a, std::span<const std::uint8_t> column_mask) {
  const auto& av = a.value();
  const std::size_t n = av.rows(), m = av.cols();
  if (!column_mask.empty() && column_mask.size() != m) {
    throw DimensionError("softmax_rows: mask length does not match column count");
  }
  auto live = [&column_mask](std::size_t c) { return column_mask.empty() || column_mask[c] != 0; };
  Tensor out = Tensor::matrix(n, m);
  for (std::size_t r = 0; r < n; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < m; ++c)
      if (live(c)) mx = std::max(mx, av(r, c));
    if (!std::isfinite(mx)) throw DimensionError("softmax_rows: row has no unmasked entries");
    double z = 0.0;
    for (std::size_t c = 0; c < m; ++c) {
      const double e = live(c) ? std::exp(av(r, c) - mx) : 0.0;
      out(r, c) = e;
      z += e;
    }
    for (std::size_t c = 0; c < m; ++c) out(r, c) /= z;
  }
  const std::size_t ia = a.id();
  return a.tape().record("softmax_rows", std::move(out), std::span<const Var>(&a, 1),
                         [ia, n, m](Tape& t, std::size_t self) {
                           if (!t.requires_grad(ia)) return;
                           const auto& y = t.value(self);
                           const auto& g = t.grad(self);
                           auto& ga = t.grad(ia);
                           for (std::size_t r = 0; r < n; ++r) {
                             double dot = 0.0;
                             for (std::size_t c = 0; c < m; ++c) dot += g[r * m + c] * y[r * m + c];
                             for (std::size_t c = 0; c < m; ++c)
                               ga[r * m + c] += y[r * m + c] * (g[r * m + c] - dot);
                           }
                         });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  const std::size_t ia = a.id();
  return a.tape().record("sum", Tensor::scalar(s), std::span<const Var>(&a, 1), [ia](Tape& t, std::size_t self) {
    if (!t.requires_grad(ia)) return;
    const double g = t.grad(self)[0];
    for (auto& v : t.grad(ia).data()) v += g;
  });
}

Var row_sums(Var a) {
  const auto& av = a.value();
  const std::size_t n = av.rows(), m = av.cols();
  Tensor out = Tensor::matrix(n, 1);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < m; ++c) out[r] += av(r, c);
  const std::size_t ia = a.id();
  return a.tape().record("row_sums", std::move(out), std::span<const Var>(&a, 1),
                         [ia, n, m](Tape& t, std::size_t self) {
                           if (!t.requires_grad(ia)) return;
                           const auto& g = t.grad(self);
                           auto& ga = t.grad(ia);
                           for (std::size_t r = 0; r < n; ++r)
                             for (std::size_t c = 0; c < m; ++c) ga[r * m + c] += g[r];
                         });
}

Var scale_rows(Var a, Var s) {
  const auto& av = a.value();
  const auto& sv = s.value();
  const std::size_t n = av.rows(), m = av.cols();
  if (sv.rows() != n || sv.cols() != 1) throw DimensionError("scale_rows: scale must be an n x 1 column");
  Tensor out = as_matrix(av);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < m; ++c) out(r, c) *= sv[r];
  const Var in[] = {a, s};
  const std::size_t ia = a.id(), is = s.id();
  return a.tape().record("scale_rows", std::move(out), in, [ia, is, n, m](Tape& t, std::size_t self) {
    const auto& g = t.grad(self);
    const auto& av = t.value(ia);
    const auto& sv = t.value(is);
    if (t.requires_grad(ia)) {
      auto& ga = t.grad(ia);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < m; ++c) ga[r * m + c] += g[r * m + c] * sv[r];
    }
    if (t.requires_grad(is)) {
      auto& gs = t.grad(is);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < m; ++c) gs[r] += g[r * m + c] * av[r * m + c];
    }
  });
}

Var mean_rows(Var a) {
  const auto& av = a.value();
  const std::size_t n = av.rows(), m = av.cols();
  Tensor out = Tensor::matrix(1, m);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < m; ++c) out[c] += av(r, c);
  for (auto& v : out.data()) v /= static_cast<double>(n);
  const std::size_t ia = a.id();
  return a.tape().record("mean_rows", std::move(out), std::span<const Var>(&a, 1),
                         [ia, n, m](Tape& t, std::size_t self) {
                           if (!t.requires_grad(ia)) return;
                           const auto& g = t.grad(self);
                           auto& ga = t.grad(ia);
                           const double inv = 1.0 / static_cast<double>(n);
                           for (std::size_t r = 0; r < n; ++r)
                             for (std::size_t c = 0; c < m; ++c) ga[r * m + c] += g[c] * inv;
                         });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t m = parts[0].cols();
  std::size_t n = 0;
  for (const auto& p : parts) {
    if (p.cols() != m) throw DimensionError("concat_rows: column mismatch");
    n += p.rows();
  }
  Tensor out = Tensor::matrix(n, m);
  std::size_t offset = 0;
  std::vector<std::size_t> ids;
  for (const auto& p : parts) {
    const auto& d = p.value().data();
    std::copy(d.begin(), d.end(), out.data().begin() + static_cast<std::ptrdiff_t>(offset));
    offset += d.size();
    ids.push_back(p.id());
  }
  return parts[0].tape().record("concat_rows", std::move(out), parts, [ids](Tape& t, std::size_t self) {
    const auto& g = t.grad(self);
    std::size_t offset = 0;
    for (auto id : ids) {
      const std::size_t len = t.value(id).size();
      if (t.requires_grad(id)) {
        auto& gi = t.grad(id);
        for (std::size_t i = 0; i < len; ++i) gi[i] += g[offset + i];
      }
      offset += len;
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t n = parts[0].rows();
  std::size_t m = 0;
  for (const auto& p : parts) {
    if (p.rows() != n) throw DimensionError("concat_cols: row mismatch");
    m += p.cols();
  }
  Tensor out = Tensor::matrix(n, m);
  std::vector<std::size_t> ids;
  std::size_t c0 = 0;
  for (const auto& p : parts) {
    const auto& v = p.value();
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < v.cols(); ++c) out(r, c0 + c) = v(r, c);
    c0 += v.cols();
    ids.push_back(p.id());
  }
  return parts[0].tape().record("concat_cols", std::move(out), parts, [ids, n, m](Tape& t, std::size_t self) {
    const auto& g = t.grad(self);
    std::size_t c0 = 0;
    for (auto id : ids) {
      const std::size_t w = t.value(id).cols();
      if (t.requires_grad(id)) {
        auto& gi = t.grad(id);
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t c = 0; c < w; ++c) gi[r * w + c] += g[r * m + c0 + c];
      }
      c0 += w;
    }
  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t count) {
  const auto& av = a.value();
  if (count == 0 || begin + count > av.rows()) throw DimensionError("slice_rows: range out of bounds");
  const std::size_t m = av.cols();
  std::vector<double> d(av.data().begin() + static_cast<std::ptrdiff_t>(begin * m),
                        av.data().begin() + static_cast<std::ptrdiff_t>((begin + count) * m));
  const std::size_t ia = a.id();
  return a.tape().record("slice_rows", Tensor({count, m}, std::move(d)), std::span<const Var>(&a, 1),
                         [ia, begin, m](Tape& t, std::size_t self) {
                           if (!t.requires_grad(ia)) return;
                           const auto& g = t.grad(self);
                           auto& ga = t.grad(ia);
                           for (std::size_t i = 0; i < g.size(); ++i) ga[begin * m + i] += g[i];
                         });
}

Var slice_cols(Var a, std::size_t begin, std::size_t count) {
  const auto& av = a.value();
  const std::size_t n = av.rows(), m = av.cols();
  if (count == 0 || begin + count > m) throw DimensionError("slice_cols: range out of bounds");
  Tensor out = Tensor::matrix(n, count);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < count; ++c) out(r, c) = av(r, begin + c);
  const std::size_t ia = a.id();
  return a.tape().record("slice_cols", std::move(out), std::span<const Var>(&a, 1),
                         [ia, begin, count, n, m](Tape& t, std::size_t self) {
                           if (!t.requires_grad(ia)) return;
                           const auto& g = t.grad(self);
                           auto& ga = t.grad(ia);
                           for (std::size_t r = 0; r < n; ++r)
                             for (std::size_t c = 0; c < count; ++c) ga[r * m + begin + c] += g[r * count + c];
                         });
}

Var row(Var a, std::size_t r) { return slice_rows(a, r, 1); }

Var gather_rows(Var a, std::span<const std::size_t> indices) {
  const auto& av = a.value();
  const std::size_t m = av.cols();
  if (indices.empty()) throw DimensionError("gather_rows: no indices");
  Tensor out = Tensor::matrix(indices.size(), m);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= av.rows()) throw DimensionError("gather_rows: index out of range");
    for (std::size_t c = 0; c < m; ++c) out(i, c) = av(indices[i], c);
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  const std::size_t ia = a.id();
  return a.tape().record("gather_rows", std::move(out), std::span<const Var>(&a, 1),
                         [ia, idx, m](Tape& t, std::size_t self) {
                           if (!t.requires_grad(ia)) return;
                           const auto& g = t.grad(self);
                           auto& ga = t.grad(ia);
                           for (std::size_t i = 0; i < idx.size(); ++i)
                             for (std::size_t c = 0; c < m; ++c) ga[idx[i] * m + c] += g[i * m + c];
                         });
}

Var element(Var a, std::size_t r, std::size_t c) {
  const auto& av = a.value();
  if (r >= av.rows() || c >= av.cols()) throw DimensionError("element: index out of range");
  const std::size_t ia = a.id(), flat = r * av.cols() + c;
  return a.tape().record("element", Tensor::scalar(av(r, c)), std::span<const Var>(&a, 1),
                         [ia, flat](Tape& t, std::size_t self) {
                           if (!t.requires_grad(ia)) return;
                           t.grad(ia)[flat] += t.grad(self)[0];
                         });
}

Var layer_norm_rows(Var x, Var gain, Var bias, double eps) {
  const auto& xv = x.value();
  const auto& gv = gain.value();
  const auto& bv = bias.value();
  const std::size_t n = xv.rows(), m = xv.cols();
  if (gv.size() != m || bv.size() != m) throw DimensionError("layer_norm_rows: gain/bias width mismatch");
  Tensor out = Tensor::matrix(n, m);
  Tensor normed = Tensor::matrix(n, m);
  std::vector<double> inv_std(n);
  for (std::size_t r = 0; r < n; ++r) {
    double mu = 0.0;
    for (std::size_t c = 0; c < m; ++c) mu += xv(r, c);
    mu /= static_cast<double>(m);
    double var = 0.0;
    for (std::size_t c = 0; c < m; ++c) var += (xv(r, c) - mu) * (xv(r, c) - mu);
    var /= static_cast<double>(m);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < m; ++c) {
      normed(r, c) = (xv(r, c) - mu) * inv_std[r];
      out(r, c) = gv[c] * normed(r, c) + bv[c];
    }
  }
  const Var in[] = {x, gain, bias};
  const std::size_t ix = x.id(), ig = gain.id(), ib = bias.id();
  return x.tape().record(
      "layer_norm_rows", std::move(out), in,
      [ix, ig, ib, n, m, normed = std::move(normed), inv_std = std::move(inv_std)](Tape& t, std::size_t self) {
        const auto& g = t.grad(self);
        const auto& gv = t.value(ig);
        if (t.requires_grad(ig)) {
          auto& gg = t.grad(ig);
          for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < m; ++c) gg[c] += g[r * m + c] * normed(r, c);
        }
        if (t.requires_grad(ib)) {
          auto& gb = t.grad(ib);
          for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < m; ++c) gb[c] += g[r * m + c];
        }
        if (t.requires_grad(ix)) {
          auto& gx = t.grad(ix);
          const double inv_m = 1.0 / static_cast<double>(m);
          for (std::size_t r = 0; r < n; ++r) {
            double mean_d = 0.0, mean_dn = 0.0;
            for (std::size_t c = 0; c < m; ++c) {
              const double d = g[r * m + c] * gv[c];
              mean_d += d;
              mean_dn += d * normed(r, c);
            }
            mean_d *= inv_m;
            mean_dn *= inv_m;
            for (std::size_t c = 0; c < m; ++c) {
              const double d = g[r * m + c] * gv[c];
              gx[r * m + c] += inv_std[r] * (d - mean_d - normed(r, c) * mean_dn);
            }
          }
        }
      });
}

Var stop_gradient(Var a) { return a.tape().constant(a.value()); }

}  // namespace ops

}  // namespace ssm::num
