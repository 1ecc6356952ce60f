// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "mimt/numerics/tensor.hpp"

namespace mimt::numerics {

namespace detail {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using MatrixMap = Eigen::Map<RowMatrix>;

inline void require_finite(const char* op, const Tensor& t) {
  for (double v : t.values())
    if (!std::isfinite(v))
      throw NumericError(std::string(op) + ": non-finite input" +
                         (t.name().empty() ? std::string() : " '" + t.name() + "'"));
}

// Builds the output node; records it on the active tape when any input
// requires grad.
inline Tensor make_result(const char* op, Shape shape, std::vector<double> value,
                          std::initializer_list<Tensor> inputs,
                          std::function<void(Node&)> backward) {
  for (const auto& in : inputs)
    if (in.is_leaf()) require_finite(op, in);
  for (double v : value)
    if (!std::isfinite(v)) throw NumericError(std::string(op) + ": produced a non-finite value");

  Tape* tape = Tape::active();
  bool needs_grad = false;
  if (tape)
    for (const auto& in : inputs) needs_grad = needs_grad || in.requires_grad();

  auto node = std::make_shared<Node>(std::move(shape), std::move(value), needs_grad);
  node->op = op;
  if (needs_grad) {
    for (const auto& in : inputs) node->inputs.push_back(in.shared_node());
    node->backward = std::move(backward);
    tape->record(node);
  }
  return Tensor(std::move(node));
}

inline Node& input(Node& self, std::size_t i) { return *self.inputs[i]; }

// b broadcasts against a when it equals a's shape or a trailing suffix of it.
inline bool broadcasts(const Shape& a, const Shape& b) {
  if (b.size() > a.size()) return false;
  return std::equal(b.rbegin(), b.rend(), a.rbegin());
}

inline std::size_t last_dim(const Tensor& t) { return t.shape().back(); }

}  // namespace detail

inline Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_b = false) {
  if (a.rank() != 2 || b.rank() != 2) throw ShapeError("matmul", a.shape(), b.shape());
  const std::size_t m = a.dim(0), k = a.dim(1);
  const std::size_t n = transpose_b ? b.dim(0) : b.dim(1);
  if ((transpose_b ? b.dim(1) : b.dim(0)) != k) throw ShapeError("matmul", a.shape(), b.shape());

  std::vector<double> out(m * n);
  detail::ConstMatrixMap A(a.values().data(), m, k);
  detail::ConstMatrixMap B(b.values().data(), b.dim(0), b.dim(1));
  detail::MatrixMap C(out.data(), m, n);
  if (transpose_b)
    C.noalias() = A * B.transpose();
  else
    C.noalias() = A * B;

  return detail::make_result("matmul", {m, n}, std::move(out), {a, b}, [=](detail::Node& self) {
    auto& na = detail::input(self, 0);
    auto& nb = detail::input(self, 1);
    detail::ConstMatrixMap G(self.grad.data(), m, n);
    detail::ConstMatrixMap Av(na.value.data(), m, k);
    detail::ConstMatrixMap Bv(nb.value.data(), nb.shape[0], nb.shape[1]);
    if (na.requires_grad) {
      detail::MatrixMap dA(na.grad.data(), m, k);
      if (transpose_b)
        dA.noalias() += G * Bv;
      else
        dA.noalias() += G * Bv.transpose();
    }
    if (nb.requires_grad) {
      detail::MatrixMap dB(nb.grad.data(), nb.shape[0], nb.shape[1]);
      if (transpose_b)
        dB.noalias() += G.transpose() * Av;
      else
        dB.noalias() += Av.transpose() * G;
    }
  });
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  if (!detail::broadcasts(a.shape(), b.shape())) throw ShapeError("add", a.shape(), b.shape());
  const std::size_t inner = b.size(), outer = a.size() / inner;
  std::vector<double> out(a.values().begin(), a.values().end());
  const double* bv = b.values().data();
  for (std::size_t o = 0; o < outer; ++o) {
    double* row = out.data() + o * inner;
    for (std::size_t i = 0; i < inner; ++i) row[i] += bv[i];
  }
  return detail::make_result("add", a.shape(), std::move(out), {a, b}, [inner, outer](detail::Node& self) {
    auto& na = detail::input(self, 0);
    auto& nb = detail::input(self, 1);
    if (na.requires_grad)
      for (std::size_t i = 0; i < self.grad.size(); ++i) na.grad[i] += self.grad[i];
    if (nb.requires_grad)
      for (std::size_t o = 0; o < outer; ++o) {
        const double* g = self.grad.data() + o * inner;
        for (std::size_t i = 0; i < inner; ++i) nb.grad[i] += g[i];
      }
  });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  if (!detail::broadcasts(a.shape(), b.shape())) throw ShapeError("mul", a.shape(), b.shape());
  const std::size_t inner = b.size(), outer = a.size() / inner;
  std::vector<double> out(a.values().begin(), a.values().end());
  const double* bv = b.values().data();
  for (std::size_t o = 0; o < outer; ++o) {
    double* row = out.data() + o * inner;
    for (std::size_t i = 0; i < inner; ++i) row[i] *= bv[i];
  }
  return detail::make_result("mul", a.shape(), std::move(out), {a, b}, [inner, outer](detail::Node& self) {
    auto& na = detail::input(self, 0);
    auto& nb = detail::input(self, 1);
    for (std::size_t o = 0; o < outer; ++o) {
      const double* g = self.grad.data() + o * inner;
      if (na.requires_grad) {
        double* da = na.grad.data() + o * inner;
        for (std::size_t i = 0; i < inner; ++i) da[i] += g[i] * nb.value[i];
      }
      if (nb.requires_grad) {
        const double* av = na.value.data() + o * inner;
        for (std::size_t i = 0; i < inner; ++i) nb.grad[i] += g[i] * av[i];
      }
    }
  });
}

// a * factor + offset, elementwise.
inline Tensor affine(const Tensor& a, double factor, double offset = 0.0) {
  std::vector<double> out(a.values().begin(), a.values().end());
  for (auto& v : out) v = v * factor + offset;
  return detail::make_result("affine", a.shape(), std::move(out), {a}, [factor](detail::Node& self) {
    auto& na = detail::input(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) na.grad[i] += factor * self.grad[i];
  });
}

inline Tensor scale(const Tensor& a, double factor) { return affine(a, factor, 0.0); }

inline Tensor relu(const Tensor& a) {
  std::vector<double> out(a.values().begin(), a.values().end());
  for (auto& v : out) v = v > 0.0 ? v : 0.0;
  return detail::make_result("relu", a.shape(), std::move(out), {a}, [](detail::Node& self) {
    auto& na = detail::input(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      if (na.value[i] > 0.0) na.grad[i] += self.grad[i];
  });
}

inline Tensor exp(const Tensor& a) {
  std::vector<double> out(a.values().begin(), a.values().end());
  for (auto& v : out) v = std::exp(v);
  return detail::make_result("exp", a.shape(), std::move(out), {a}, [](detail::Node& self) {
    auto& na = detail::input(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) na.grad[i] += self.grad[i] * self.value[i];
  });
}

inline Tensor log(const Tensor& a) {
  std::vector<double> out(a.values().begin(), a.values().end());
  for (auto& v : out) {
    if (!(v > 0.0)) throw NumericError("log: non-positive input");
    v = std::log(v);
  }
  return detail::make_result("log", a.shape(), std::move(out), {a}, [](detail::Node& self) {
    auto& na = detail::input(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) na.grad[i] += self.grad[i] / na.value[i];
  });
}

// Softmax over the last axis with max subtraction.
inline Tensor softmax(const Tensor& a) {
  const std::size_t n = detail::last_dim(a);
  const std::size_t rows = a.size() / n;
  std::vector<double> out(a.size());
  auto av = a.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = av.data() + r * n;
    double* y = out.data() + r * n;
    const double mx = *std::max_element(x, x + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += (y[j] = std::exp(x[j] - mx));
    for (std::size_t j = 0; j < n; ++j) y[j] /= z;
  }
  return detail::make_result("softmax", a.shape(), std::move(out), {a}, [n, rows](detail::Node& self) {
    auto& na = detail::input(self, 0);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.value.data() + r * n;
      const double* g = self.grad.data() + r * n;
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += g[j] * y[j];
      for (std::size_t j = 0; j < n; ++j) na.grad[r * n + j] += y[j] * (g[j] - dot);
    }
  });
}

// log(softmax(a)) over the last axis via log-sum-exp.
inline Tensor log_softmax(const Tensor& a) {
  const std::size_t n = detail::last_dim(a);
  const std::size_t rows = a.size() / n;
  std::vector<double> out(a.size());
  auto av = a.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = av.data() + r * n;
    double* y = out.data() + r * n;
    const double mx = *std::max_element(x, x + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(x[j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < n; ++j) y[j] = x[j] - lse;
  }
  return detail::make_result("log_softmax", a.shape(), std::move(out), {a}, [n, rows](detail::Node& self) {
    auto& na = detail::input(self, 0);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.value.data() + r * n;
      const double* g = self.grad.data() + r * n;
      double gsum = 0.0;
      for (std::size_t j = 0; j < n; ++j) gsum += g[j];
      for (std::size_t j = 0; j < n; ++j) na.grad[r * n + j] += g[j] - std::exp(y[j]) * gsum;
    }
  });
}

inline constexpr double kLayerNormEpsilon = 1e-5;

// Normalizes over the last axis, then applies gamma/beta.
inline Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                         double eps = kLayerNormEpsilon) {
  const std::size_t n = detail::last_dim(x);
  if (gamma.shape() != Shape{n}) throw ShapeError("layer_norm", x.shape(), gamma.shape());
  if (beta.shape() != Shape{n}) throw ShapeError("layer_norm", x.shape(), beta.shape());
  const std::size_t rows = x.size() / n;
  auto xv = x.values();
  auto gv = gamma.values();
  auto bv = beta.values();
  auto xhat = std::make_shared<std::vector<double>>(x.size());
  auto rstd = std::make_shared<std::vector<double>>(rows);
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xv.data() + r * n;
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += xr[j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= static_cast<double>(n);
    const double rs = 1.0 / std::sqrt(var + eps);
    (*rstd)[r] = rs;
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (xr[j] - mean) * rs;
      (*xhat)[r * n + j] = h;
      out[r * n + j] = h * gv[j] + bv[j];
    }
  }
  return detail::make_result(
      "layer_norm", x.shape(), std::move(out), {x, gamma, beta},
      [n, rows, xhat, rstd](detail::Node& self) {
        auto& nx = detail::input(self, 0);
        auto& ng = detail::input(self, 1);
        auto& nb = detail::input(self, 2);
        std::vector<double> dxhat(n);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* g = self.grad.data() + r * n;
          const double* h = xhat->data() + r * n;
          if (ng.requires_grad)
            for (std::size_t j = 0; j < n; ++j) ng.grad[j] += g[j] * h[j];
          if (nb.requires_grad)
            for (std::size_t j = 0; j < n; ++j) nb.grad[j] += g[j];
          if (!nx.requires_grad) continue;
          double mean_d = 0.0, mean_dh = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            dxhat[j] = g[j] * ng.value[j];
            mean_d += dxhat[j];
            mean_dh += dxhat[j] * h[j];
          }
          mean_d /= static_cast<double>(n);
          mean_dh /= static_cast<double>(n);
          for (std::size_t j = 0; j < n; ++j)
            nx.grad[r * n + j] += (*rstd)[r] * (dxhat[j] - mean_d - h[j] * mean_dh);
        }
      });
}

// Gathers rows of a [V, d] table.
inline Tensor embedding(const Tensor& table, const std::vector<int>& ids) {
  if (table.rank() != 2) throw ShapeError("embedding", table.shape(), {ids.size()});
  if (ids.empty()) throw ShapeError("embedding", table.shape(), {0});
  const std::size_t vocab = table.dim(0), d = table.dim(1);
  std::vector<double> out(ids.size() * d);
  auto tv = table.values();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab)
      throw NumericError("embedding: id " + std::to_string(ids[i]) + " outside table of " +
                         std::to_string(vocab) + " rows");
    std::copy_n(tv.data() + static_cast<std::size_t>(ids[i]) * d, d, out.data() + i * d);
  }
  return detail::make_result("embedding", {ids.size(), d}, std::move(out), {table},
                             [ids, d](detail::Node& self) {
                               auto& nt = detail::input(self, 0);
                               for (std::size_t i = 0; i < ids.size(); ++i) {
                                 double* dst = nt.grad.data() + static_cast<std::size_t>(ids[i]) * d;
                                 const double* src = self.grad.data() + i * d;
                                 for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
                               }
                             });
}

// out[i] = a[i, index[i]] for a 2-D tensor.
inline Tensor pick(const Tensor& a, const std::vector<int>& index) {
  if (a.rank() != 2 || a.dim(0) != index.size()) throw ShapeError("pick", a.shape(), {index.size()});
  const std::size_t n = a.dim(1);
  std::vector<double> out(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || static_cast<std::size_t>(index[i]) >= n)
      throw NumericError("pick: index " + std::to_string(index[i]) + " out of range");
    out[i] = a[i * n + static_cast<std::size_t>(index[i])];
  }
  return detail::make_result("pick", {index.size()}, std::move(out), {a}, [index, n](detail::Node& self) {
    auto& na = detail::input(self, 0);
    for (std::size_t i = 0; i < index.size(); ++i)
      na.grad[i * n + static_cast<std::size_t>(index[i])] += self.grad[i];
  });
}

inline Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  return detail::make_result("sum", {1}, {s}, {a}, [](detail::Node& self) {
    auto& na = detail::input(self, 0);
    for (auto& g : na.grad) g += self.grad[0];
  });
}

inline Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

// Sums over the last axis; the result drops that axis.
inline Tensor sum_last(const Tensor& a) {
  const std::size_t n = detail::last_dim(a);
  const std::size_t rows = a.size() / n;
  Shape shape(a.shape().begin(), a.shape().end() - 1);
  if (shape.empty()) shape = {1};
  std::vector<double> out(rows, 0.0);
  auto av = a.values();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < n; ++j) out[r] += av[r * n + j];
  return detail::make_result("sum_last", std::move(shape), std::move(out), {a}, [n, rows](detail::Node& self) {
    auto& na = detail::input(self, 0);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < n; ++j) na.grad[r * n + j] += self.grad[r];
  });
}

inline Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_size(shape) != a.size()) throw ShapeError("reshape", a.shape(), shape);
  std::vector<double> out(a.values().begin(), a.values().end());
  return detail::make_result("reshape", std::move(shape), std::move(out), {a}, [](detail::Node& self) {
    auto& na = detail::input(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) na.grad[i] += self.grad[i];
  });
}

// Concatenates along `axis`; all other dimensions must agree.
inline Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat", {}, {});
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) throw ShapeError("concat", first, {axis});
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    if (p.rank() != first.size()) throw ShapeError("concat", first, p.shape());
    for (std::size_t d = 0; d < first.size(); ++d)
      if (d != axis && p.dim(d) != first[d]) throw ShapeError("concat", first, p.shape());
    out_shape[axis] += p.dim(axis);
  }
  std::size_t outer = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
  std::vector<std::size_t> chunk;
  for (const auto& p : parts) chunk.push_back(p.size() / outer);
  const std::size_t out_chunk = shape_size(out_shape) / outer;

  std::vector<double> out(shape_size(out_shape));
  for (std::size_t o = 0; o < outer; ++o) {
    std::size_t offset = o * out_chunk;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      auto pv = parts[k].values();
      std::copy_n(pv.data() + o * chunk[k], chunk[k], out.data() + offset);
      offset += chunk[k];
    }
  }

  // make_result takes an initializer list; record the variadic inputs by hand.
  for (const auto& p : parts)
    if (p.is_leaf()) detail::require_finite("concat", p);
  Tape* tape = Tape::active();
  bool needs_grad = false;
  if (tape)
    for (const auto& p : parts) needs_grad = needs_grad || p.requires_grad();
  auto node = std::make_shared<detail::Node>(std::move(out_shape), std::move(out), needs_grad);
  node->op = "concat";
  if (needs_grad) {
    for (const auto& p : parts) node->inputs.push_back(p.shared_node());
    node->backward = [outer, chunk, out_chunk](detail::Node& self) {
      for (std::size_t o = 0; o < outer; ++o) {
        std::size_t offset = o * out_chunk;
        for (std::size_t k = 0; k < chunk.size(); ++k) {
          auto& nk = *self.inputs[k];
          if (nk.requires_grad)
            for (std::size_t j = 0; j < chunk[k]; ++j) nk.grad[o * chunk[k] + j] += self.grad[offset + j];
          offset += chunk[k];
        }
      }
    };
    tape->record(node);
  }
  return Tensor(std::move(node));
}

// Multi-head scaled dot-product attention over a packed batch.
// query: [batch*tq, d]; key, value: [batch*tk, d]. key_valid has batch*tk
// entries (nonzero = attendable). With causal, query i sees keys j <= i.
struct AttentionShape {
  std::size_t batch = 1;
  std::size_t query_len = 1;
  std::size_t key_len = 1;
  std::size_t heads = 1;
  bool causal = false;
};

inline Tensor attention(const Tensor& query, const Tensor& key, const Tensor& value,
                        const std::vector<std::uint8_t>& key_valid, const AttentionShape& s) {
  const std::size_t d = query.dim(1);
  if (query.rank() != 2 || query.dim(0) != s.batch * s.query_len)
    throw ShapeError("attention", query.shape(), {s.batch, s.query_len});
  if (key.shape() != Shape{s.batch * s.key_len, d}) throw ShapeError("attention", query.shape(), key.shape());
  if (value.shape() != key.shape()) throw ShapeError("attention", key.shape(), value.shape());
  if (s.heads == 0 || d % s.heads != 0) throw ShapeError("attention", query.shape(), {s.heads});
  if (key_valid.size() != s.batch * s.key_len)
    throw ShapeError("attention", key.shape(), {key_valid.size()});

  const std::size_t dh = d / s.heads;
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const std::size_t tq = s.query_len, tk = s.key_len;
  auto probs = std::make_shared<std::vector<double>>(s.batch * s.heads * tq * tk, 0.0);
  auto qv = query.values();
  auto kv = key.values();
  auto vv = value.values();
  std::vector<double> out(s.batch * tq * d, 0.0);
  std::vector<double> scores(tk);

  for (std::size_t b = 0; b < s.batch; ++b)
    for (std::size_t h = 0; h < s.heads; ++h)
      for (std::size_t i = 0; i < tq; ++i) {
        const double* q = qv.data() + (b * tq + i) * d + h * dh;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < tk; ++j) {
          const bool visible = key_valid[b * tk + j] && (!s.causal || j <= i);
          if (!visible) {
            scores[j] = -std::numeric_limits<double>::infinity();
            continue;
          }
          const double* k = kv.data() + (b * tk + j) * d + h * dh;
          double dot = 0.0;
          for (std::size_t c = 0; c < dh; ++c) dot += q[c] * k[c];
          scores[j] = dot * inv_scale;
          mx = std::max(mx, scores[j]);
        }
        if (!std::isfinite(mx)) continue;  // nothing visible: zero output
        double* p = probs->data() + ((b * s.heads + h) * tq + i) * tk;
        double z = 0.0;
        for (std::size_t j = 0; j < tk; ++j) {
          p[j] = std::isfinite(scores[j]) ? std::exp(scores[j] - mx) : 0.0;
          z += p[j];
        }
        double* o = out.data() + (b * tq + i) * d + h * dh;
        for (std::size_t j = 0; j < tk; ++j) {
          p[j] /= z;
          if (p[j] == 0.0) continue;
          const double* v = vv.data() + (b * tk + j) * d + h * dh;
          for (std::size_t c = 0; c < dh; ++c) o[c] += p[j] * v[c];
        }
      }

  return detail::make_result(
      "attention", query.shape(), std::move(out), {query, key, value},
      [s, d, dh, inv_scale, probs](detail::Node& self) {
        auto& nq = detail::input(self, 0);
        auto& nk = detail::input(self, 1);
        auto& nv = detail::input(self, 2);
        const std::size_t tq = s.query_len, tk = s.key_len;
        std::vector<double> dp(tk);
        for (std::size_t b = 0; b < s.batch; ++b)
          for (std::size_t h = 0; h < s.heads; ++h)
            for (std::size_t i = 0; i < tq; ++i) {
              const double* p = probs->data() + ((b * s.heads + h) * tq + i) * tk;
              const double* g = self.grad.data() + (b * tq + i) * d + h * dh;
              double dot = 0.0;
              for (std::size_t j = 0; j < tk; ++j) {
                dp[j] = 0.0;
                if (p[j] == 0.0) continue;
                const double* v = nv.value.data() + (b * tk + j) * d + h * dh;
                for (std::size_t c = 0; c < dh; ++c) dp[j] += g[c] * v[c];
                dot += dp[j] * p[j];
                if (nv.requires_grad) {
                  double* dv = nv.grad.data() + (b * tk + j) * d + h * dh;
                  for (std::size_t c = 0; c < dh; ++c) dv[c] += p[j] * g[c];
                }
              }
              const double* q = nq.value.data() + (b * tq + i) * d + h * dh;
              double* dq = nq.requires_grad ? nq.grad.data() + (b * tq + i) * d + h * dh : nullptr;
              for (std::size_t j = 0; j < tk; ++j) {
                if (p[j] == 0.0) continue;
                const double ds = p[j] * (dp[j] - dot) * inv_scale;
                const double* k = nk.value.data() + (b * tk + j) * d + h * dh;
                if (dq)
                  for (std::size_t c = 0; c < dh; ++c) dq[c] += ds * k[c];
                if (nk.requires_grad) {
                  double* dk = nk.grad.data() + (b * tk + j) * d + h * dh;
                  for (std::size_t c = 0; c < dh; ++c) dk[c] += ds * q[c];
                }
              }
            }
      });
}

}  // namespace mimt::numerics
