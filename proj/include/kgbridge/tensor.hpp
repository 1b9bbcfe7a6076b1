#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "kgbridge/errors.hpp"
#include "kgbridge/rng.hpp"

namespace kgbridge {

// Dense row-major tensor. Rank 1 ({n}) and rank 2 ({m,n}) cover everything
// this project needs; f32 is the storage type in trained models, f64 is
// used by the gradient-check suites.
template <typename T>
struct TensorData {
  std::vector<int> shape;
  std::vector<T> data;

  TensorData() = default;
  TensorData(std::vector<int> s, std::vector<T> d)
      : shape(std::move(s)), data(std::move(d)) {}

  static TensorData zeros(std::vector<int> s) {
    std::size_t n = 1;
    for (int d : s) n *= static_cast<std::size_t>(d);
    return TensorData(std::move(s), std::vector<T>(n, T(0)));
  }

  std::size_t size() const { return data.size(); }
  int rows() const { return shape.size() == 2 ? shape[0] : 1; }
  int cols() const { return shape.size() == 2 ? shape[1] : shape.at(0); }

  bool same_shape(const TensorData& o) const { return shape == o.shape; }

  template <typename U>
  TensorData<U> cast() const {
    TensorData<U> out;
    out.shape = shape;
    out.data.reserve(data.size());
    for (T v : data) out.data.push_back(static_cast<U>(v));
    return out;
  }
};

template <typename T>
struct NamedTensor {
  std::string name;
  TensorData<T> value;
};

// Reverse-mode tape. Ops append nodes in topological order; backward walks
// the record once in reverse. Every op output is checked for NaN/Inf and
// aborts with the op name on failure. Single-threaded by design.
template <typename T>
class Tape {
 public:
  using Id = std::int32_t;

  Id input(TensorData<T> value, bool requires_grad = false) {
    return push(std::move(value), requires_grad, "input", nullptr);
  }

  const TensorData<T>& value(Id id) const { return nodes_[id].value; }
  const TensorData<T>& grad(Id id) const { return nodes_[id].grad; }
  std::size_t size() const { return nodes_.size(); }

  // ---- primitive ops ----

  Id matmul(Id a, Id b) {
    const auto& A = val(a);
    const auto& B = val(b);
    if (A.shape.size() != 2 || B.shape.size() != 2 || A.shape[1] != B.shape[0])
      throw DataError("matmul shape mismatch");
    const int m = A.shape[0], k = A.shape[1], n = B.shape[1];
    TensorData<T> C = TensorData<T>::zeros({m, n});
    for (int i = 0; i < m; ++i)
      for (int l = 0; l < k; ++l) {
        const T av = A.data[i * k + l];
        for (int j = 0; j < n; ++j) C.data[i * n + j] += av * B.data[l * n + j];
      }
    return push(std::move(C), needs(a, b), "matmul", [this, a, b, m, k, n](Id out) {
      const auto& dC = nodes_[out].grad;
      const auto& A2 = nodes_[a].value;
      const auto& B2 = nodes_[b].value;
      if (nodes_[a].requires_grad_path) {
        auto& dA = nodes_[a].grad;
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j) {
            const T g = dC.data[i * n + j];
            for (int l = 0; l < k; ++l) dA.data[i * k + l] += g * B2.data[l * n + j];
          }
      }
      if (nodes_[b].requires_grad_path) {
        auto& dB = nodes_[b].grad;
        for (int i = 0; i < m; ++i)
          for (int l = 0; l < k; ++l) {
            const T av = A2.data[i * k + l];
            for (int j = 0; j < n; ++j) dB.data[l * n + j] += av * dC.data[i * n + j];
          }
      }
    });
  }

  // Elementwise sum; b may also be a length-n vector (or 1 x n row)
  // broadcast over the rows of an m x n a.
  Id add(Id a, Id b) { return add_sub(a, b, T(1)); }
  Id sub(Id a, Id b) { return add_sub(a, b, T(-1)); }

  Id mul(Id a, Id b) {
    const auto& A = val(a);
    const auto& B = val(b);
    if (!A.same_shape(B)) throw DataError("mul shape mismatch");
    TensorData<T> C = A;
    for (std::size_t i = 0; i < C.data.size(); ++i) C.data[i] *= B.data[i];
    return push(std::move(C), needs(a, b), "mul", [this, a, b](Id out) {
      const auto& g = nodes_[out].grad;
      if (nodes_[a].requires_grad_path) {
        auto& dA = nodes_[a].grad;
        const auto& B2 = nodes_[b].value;
        for (std::size_t i = 0; i < g.data.size(); ++i) dA.data[i] += g.data[i] * B2.data[i];
      }
      if (nodes_[b].requires_grad_path) {
        auto& dB = nodes_[b].grad;
        const auto& A2 = nodes_[a].value;
        for (std::size_t i = 0; i < g.data.size(); ++i) dB.data[i] += g.data[i] * A2.data[i];
      }
    });
  }

  Id scale(Id a, T s) {
    TensorData<T> C = val(a);
    for (auto& v : C.data) v *= s;
    return push(std::move(C), needs(a), "scale", [this, a, s](Id out) {
      if (!nodes_[a].requires_grad_path) return;
      const auto& g = nodes_[out].grad;
      auto& dA = nodes_[a].grad;
      for (std::size_t i = 0; i < g.data.size(); ++i) dA.data[i] += s * g.data[i];
    });
  }

  Id add_scalar(Id a, T s) {
    TensorData<T> C = val(a);
    for (auto& v : C.data) v += s;
    return push(std::move(C), needs(a), "add_scalar", [this, a](Id out) {
      if (!nodes_[a].requires_grad_path) return;
      const auto& g = nodes_[out].grad;
      auto& dA = nodes_[a].grad;
      for (std::size_t i = 0; i < g.data.size(); ++i) dA.data[i] += g.data[i];
    });
  }

  // Vector (or row) scaled by a scalar node.
  Id scale_by(Id a, Id scalar) {
    const auto& A = val(a);
    const auto& S = val(scalar);
    if (S.size() != 1) throw DataError("scale_by expects a scalar node");
    TensorData<T> C = A;
    for (auto& v : C.data) v *= S.data[0];
    return push(std::move(C), needs(a, scalar), "scale_by", [this, a, scalar](Id out) {
      const auto& g = nodes_[out].grad;
      if (nodes_[a].requires_grad_path) {
        auto& dA = nodes_[a].grad;
        const T s = nodes_[scalar].value.data[0];
        for (std::size_t i = 0; i < g.data.size(); ++i) dA.data[i] += s * g.data[i];
      }
      if (nodes_[scalar].requires_grad_path) {
        const auto& A2 = nodes_[a].value;
        T acc = 0;
        for (std::size_t i = 0; i < g.data.size(); ++i) acc += g.data[i] * A2.data[i];
        nodes_[scalar].grad.data[0] += acc;
      }
    });
  }

  Id transpose(Id a) {
    const auto& A = val(a);
    if (A.shape.size() != 2) throw DataError("transpose expects rank 2");
    const int m = A.shape[0], n = A.shape[1];
    TensorData<T> C = TensorData<T>::zeros({n, m});
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) C.data[j * m + i] = A.data[i * n + j];
    return push(std::move(C), needs(a), "transpose", [this, a, m, n](Id out) {
      if (!nodes_[a].requires_grad_path) return;
      const auto& g = nodes_[out].grad;
      auto& dA = nodes_[a].grad;
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) dA.data[i * n + j] += g.data[j * m + i];
    });
  }

  Id reshape(Id a, std::vector<int> shape) {
    TensorData<T> C(shape, val(a).data);
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    if (n != C.data.size()) throw DataError("reshape size mismatch");
    return push(std::move(C), needs(a), "reshape", [this, a](Id out) {
      if (!nodes_[a].requires_grad_path) return;
      const auto& g = nodes_[out].grad;
      auto& dA = nodes_[a].grad;
      for (std::size_t i = 0; i < g.data.size(); ++i) dA.data[i] += g.data[i];
    });
  }

  Id row(Id a, int r) {
    const auto& A = val(a);
    if (A.shape.size() != 2 || r < 0 || r >= A.shape[0])
      throw DataError("row index out of range");
    const int n = A.shape[1];
    TensorData<T> C({1, n}, std::vector<T>(A.data.begin() + static_cast<std::ptrdiff_t>(r) * n,
                                           A.data.begin() + static_cast<std::ptrdiff_t>(r + 1) * n));
    return push(std::move(C), needs(a), "row", [this, a, r, n](Id out) {
      if (!nodes_[a].requires_grad_path) return;
      const auto& g = nodes_[out].grad;
      auto& dA = nodes_[a].grad;
      for (int j = 0; j < n; ++j) dA.data[static_cast<std::size_t>(r) * n + j] += g.data[j];
    });
  }

  Id concat_rows(const std::vector<Id>& parts) {
    if (parts.empty()) throw DataError("concat_rows of nothing");
    const int n = val(parts[0]).cols();
    int m = 0;
    bool rg = false;
    for (Id p : parts) {
      const auto& P = val(p);
      if (P.cols() != n) throw DataError("concat_rows width mismatch");
      m += P.rows();
      rg = rg || nodes_[p].requires_grad_path;
    }
    TensorData<T> C = TensorData<T>::zeros({m, n});
    std::size_t off = 0;
    for (Id p : parts) {
      const auto& P = val(p);
      std::copy(P.data.begin(), P.data.end(), C.data.begin() + static_cast<std::ptrdiff_t>(off));
      off += P.data.size();
    }
    return push(std::move(C), rg, "concat_rows", [this, parts](Id out) {
      const auto& g = nodes_[out].grad;
      std::size_t off = 0;
      for (Id p : parts) {
        auto& node = nodes_[p];
        if (node.requires_grad_path) {
          for (std::size_t i = 0; i < node.value.data.size(); ++i)
            node.grad.data[i] += g.data[off + i];
        }
        off += node.value.data.size();
      }
    });
  }

  Id slice_cols(Id a, int c0, int c1) {
    const auto& A = val(a);
    if (A.shape.size() != 2 || c0 < 0 || c1 > A.shape[1] || c0 >= c1)
      throw DataError("slice_cols out of range");
    const int m = A.shape[0], n = A.shape[1], w = c1 - c0;
    TensorData<T> C = TensorData<T>::zeros({m, w});
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < w; ++j) C.data[i * w + j] = A.data[i * n + c0 + j];
    return push(std::move(C), needs(a), "slice_cols", [this, a, c0, m, n, w](Id out) {
      if (!nodes_[a].requires_grad_path) return;
      const auto& g = nodes_[out].grad;
      auto& dA = nodes_[a].grad;
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < w; ++j) dA.data[i * n + c0 + j] += g.data[i * w + j];
    });
  }

  Id concat_cols(const std::vector<Id>& parts) {
    if (parts.empty()) throw DataError("concat_cols of nothing");
    const int m = val(parts[0]).rows();
    int n = 0;
    bool rg = false;
    for (Id p : parts) {
      if (val(p).rows() != m) throw DataError("concat_cols height mismatch");
      n += val(p).cols();
      rg = rg || nodes_[p].requires_grad_path;
    }
    TensorData<T> C = TensorData<T>::zeros({m, n});
    int off = 0;
    for (Id p : parts) {
      const auto& P = val(p);
      const int w = P.cols();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < w; ++j) C.data[i * n + off + j] = P.data[i * w + j];
      off += w;
    }
    return push(std::move(C), rg, "concat_cols", [this, parts, m, n](Id out) {
      const auto& g = nodes_[out].grad;
      int off = 0;
      for (Id p : parts) {
        auto& node = nodes_[p];
        const int w = node.value.cols();
        if (node.requires_grad_path) {
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < w; ++j) node.grad.data[i * w + j] += g.data[i * n + off + j];
        }
        off += w;
      }
    });
  }

  // Copies the first min(n, len) entries, zero-padding up to n.
  Id resize_vec(Id a, int n) {
    const auto& A = val(a);
    if (A.shape.size() != 1) throw DataError("resize_vec expects rank 1");
    const int len = static_cast<int>(A.data.size());
    TensorData<T> C = TensorData<T>::zeros({n});
    for (int i = 0; i < std::min(n, len); ++i) C.data[i] = A.data[i];
    return push(std::move(C), needs(a), "resize_vec", [this, a, n, len](Id out) {
      if (!nodes_[a].requires_grad_path) return;
      const auto& g = nodes_[out].grad;
      auto& dA = nodes_[a].grad;
      for (int i = 0; i < std::min(n, len); ++i) dA.data[i] += g.data[i];
    });
  }

  Id softmax_rows(Id a) {
    const auto& A = val(a);
    const int m = A.rows(), n = A.cols();
    TensorData<T> C = A;
    for (int i = 0; i < m; ++i) {
      T mx = C.data[i * n];
      for (int j = 1; j < n; ++j) mx = std::max(mx, C.data[i * n + j]);
      T sum = 0;
      for (int j = 0; j < n; ++j) {
        C.data[i * n + j] = std::exp(C.data[i * n + j] - mx);
        sum += C.data[i * n + j];
      }
      for (int j = 0; j < n; ++j) C.data[i * n + j] /= sum;
    }
    return push(std::move(C), needs(a), "softmax_rows", [this, a, m, n](Id out) {
      if (!nodes_[a].requires_grad_path) return;
      const auto& y = nodes_[out].value;
      const auto& g = nodes_[out].grad;
      auto& dA = nodes_[a].grad;
      for (int i = 0; i < m; ++i) {
        T dot = 0;
        for (int j = 0; j < n; ++j) dot += g.data[i * n + j] * y.data[i * n + j];
        for (int j = 0; j < n; ++j)
          dA.data[i * n + j] += y.data[i * n + j] * (g.data[i * n + j] - dot);
      }
    });
  }

  // Per-row standardization followed by the affine (gain, bias); both are
  // length-n vectors. eps sits inside the variance square root.
  Id layer_norm(Id x, Id gain, Id bias, T eps = T(1e-5)) {
    const auto& X = val(x);
    const int m = X.rows(), n = X.cols();
    if (static_cast<int>(val(gain).size()) != n || static_cast<int>(val(bias).size()) != n)
      throw DataError("layer_norm gain/bias size mismatch");
    TensorData<T> C = TensorData<T>::zeros(X.shape);
    std::vector<T> inv_sigma(static_cast<std::size_t>(m));
    std::vector<T> xhat(X.data.size());
    const auto& G = val(gain);
    const auto& Bs = val(bias);
    for (int i = 0; i < m; ++i) {
      T mean = 0;
      for (int j = 0; j < n; ++j) mean += X.data[i * n + j];
      mean /= static_cast<T>(n);
      T var = 0;
      for (int j = 0; j < n; ++j) {
        const T d = X.data[i * n + j] - mean;
        var += d * d;
      }
      var /= static_cast<T>(n);
      const T is = T(1) / std::sqrt(var + eps);
      inv_sigma[i] = is;
      for (int j = 0; j < n; ++j) {
        const T h = (X.data[i * n + j] - mean) * is;
        xhat[i * n + j] = h;
        C.data[i * n + j] = h * G.data[j] + Bs.data[j];
      }
    }
    return push(std::move(C), needs(x, gain, bias), "layer_norm",
                [this, x, gain, bias, m, n, inv_sigma = std::move(inv_sigma),
                 xhat = std::move(xhat)](Id out) {
      const auto& g = nodes_[out].grad;
      const auto& G = nodes_[gain].value;
      for (int i = 0; i < m; ++i) {
        if (nodes_[gain].requires_grad_path) {
          auto& dG = nodes_[gain].grad;
          for (int j = 0; j < n; ++j) dG.data[j] += g.data[i * n + j] * xhat[i * n + j];
        }
        if (nodes_[bias].requires_grad_path) {
          auto& dB = nodes_[bias].grad;
          for (int j = 0; j < n; ++j) dB.data[j] += g.data[i * n + j];
        }
        if (nodes_[x].requires_grad_path) {
          auto& dX = nodes_[x].grad;
          T mean_dh = 0, mean_dh_h = 0;
          std::vector<T> dh(static_cast<std::size_t>(n));
          for (int j = 0; j < n; ++j) {
            dh[j] = g.data[i * n + j] * G.data[j];
            mean_dh += dh[j];
            mean_dh_h += dh[j] * xhat[i * n + j];
          }
          mean_dh /= static_cast<T>(n);
          mean_dh_h /= static_cast<T>(n);
          for (int j = 0; j < n; ++j)
            dX.data[i * n + j] +=
                inv_sigma[i] * (dh[j] - mean_dh - xhat[i * n + j] * mean_dh_h);
        }
      }
    });
  }

  Id gelu(Id a) {
    const auto& A = val(a);
    TensorData<T> C = A;
    for (auto& v : C.data) v = v * T(0.5) * (T(1) + std::erf(v * T(M_SQRT1_2)));
    return push(std::move(C), needs(a), "gelu", [this, a](Id out) {
      if (!nodes_[a].requires_grad_path) return;
      const auto& g = nodes_[out].grad;
      const auto& A2 = nodes_[a].value;
      auto& dA = nodes_[a].grad;
      constexpr T inv_sqrt_2pi = T(0.3989422804014326779);
      for (std::size_t i = 0; i < g.data.size(); ++i) {
        const T x = A2.data[i];
        const T cdf = T(0.5) * (T(1) + std::erf(x * T(M_SQRT1_2)));
        const T pdf = inv_sqrt_2pi * std::exp(T(-0.5) * x * x);
        dA.data[i] += g.data[i] * (cdf + x * pdf);
      }
    });
  }

  Id relu(Id a) {
    TensorData<T> C = val(a);
    for (auto& v : C.data) v = std::max(v, T(0));
    return push(std::move(C), needs(a), "relu", [this, a](Id out) {
      if (!nodes_[a].requires_grad_path) return;
      const auto& g = nodes_[out].grad;
      const auto& A2 = nodes_[a].value;
      auto& dA = nodes_[a].grad;
      for (std::size_t i = 0; i < g.data.size(); ++i)
        if (A2.data[i] > T(0)) dA.data[i] += g.data[i];
    });
  }

  Id softplus(Id a) {
    TensorData<T> C = val(a);
    for (auto& v : C.data)
      v = v > T(0) ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
    return push(std::move(C), needs(a), "softplus", [this, a](Id out) {
      if (!nodes_[a].requires_grad_path) return;
      const auto& g = nodes_[out].grad;
      const auto& A2 = nodes_[a].value;
      auto& dA = nodes_[a].grad;
      for (std::size_t i = 0; i < g.data.size(); ++i) {
        const T x = A2.data[i];
        const T sig = x > T(0) ? T(1) / (T(1) + std::exp(-x))
                               : std::exp(x) / (T(1) + std::exp(x));
        dA.data[i] += g.data[i] * sig;
      }
    });
  }

  Id sin(Id a) {
    TensorData<T> C = val(a);
    for (auto& v : C.data) v = std::sin(v);
    return push(std::move(C), needs(a), "sin", [this, a](Id out) {
      if (!nodes_[a].requires_grad_path) return;
      const auto& g = nodes_[out].grad;
      const auto& A2 = nodes_[a].value;
      auto& dA = nodes_[a].grad;
      for (std::size_t i = 0; i < g.data.size(); ++i)
        dA.data[i] += g.data[i] * std::cos(A2.data[i]);
    });
  }

  Id cos(Id a) {
    TensorData<T> C = val(a);
    for (auto& v : C.data) v = std::cos(v);
    return push(std::move(C), needs(a), "cos", [this, a](Id out) {
      if (!nodes_[a].requires_grad_path) return;
      const auto& g = nodes_[out].grad;
      const auto& A2 = nodes_[a].value;
      auto& dA = nodes_[a].grad;
      for (std::size_t i = 0; i < g.data.size(); ++i)
        dA.data[i] -= g.data[i] * std::sin(A2.data[i]);
    });
  }

  Id exp(Id a) {
    TensorData<T> C = val(a);
    for (auto& v : C.data) v = std::exp(v);
    return push(std::move(C), needs(a), "exp", [this, a](Id out) {
      if (!nodes_[a].requires_grad_path) return;
      const auto& g = nodes_[out].grad;
      const auto& y = nodes_[out].value;
      auto& dA = nodes_[a].grad;
      for (std::size_t i = 0; i < g.data.size(); ++i)
        dA.data[i] += g.data[i] * y.data[i];
    });
  }

  Id sum(Id a) {
    const auto& A = val(a);
    T acc = 0;
    for (T v : A.data) acc += v;
    TensorData<T> C({1}, {acc});
    return push(std::move(C), needs(a), "sum", [this, a](Id out) {
      if (!nodes_[a].requires_grad_path) return;
      const T g = nodes_[out].grad.data[0];
      for (auto& v : nodes_[a].grad.data) v += g;
    });
  }

  Id mean(Id a) {
    const auto n = static_cast<T>(val(a).size());
    return scale(sum(a), T(1) / n);
  }

  Id dot(Id a, Id b) {
    const auto& A = val(a);
    const auto& B = val(b);
    if (A.size() != B.size()) throw DataError("dot size mismatch");
    T acc = 0;
    for (std::size_t i = 0; i < A.data.size(); ++i) acc += A.data[i] * B.data[i];
    TensorData<T> C({1}, {acc});
    return push(std::move(C), needs(a, b), "dot", [this, a, b](Id out) {
      const T g = nodes_[out].grad.data[0];
      if (nodes_[a].requires_grad_path) {
        const auto& B2 = nodes_[b].value;
        auto& dA = nodes_[a].grad;
        for (std::size_t i = 0; i < dA.data.size(); ++i) dA.data[i] += g * B2.data[i];
      }
      if (nodes_[b].requires_grad_path) {
        const auto& A2 = nodes_[a].value;
        auto& dB = nodes_[b].grad;
        for (std::size_t i = 0; i < dB.data.size(); ++i) dB.data[i] += g * A2.data[i];
      }
    });
  }

  Id l2_norm(Id a) {
    const auto& A = val(a);
    T acc = 0;
    for (T v : A.data) acc += v * v;
    const T norm = std::sqrt(acc);
    TensorData<T> C({1}, {norm});
    return push(std::move(C), needs(a), "l2_norm", [this, a, norm](Id out) {
      if (!nodes_[a].requires_grad_path) return;
      const T g = nodes_[out].grad.data[0];
      const T inv = T(1) / std::max(norm, T(1e-12));
      const auto& A2 = nodes_[a].value;
      auto& dA = nodes_[a].grad;
      for (std::size_t i = 0; i < dA.data.size(); ++i) dA.data[i] += g * A2.data[i] * inv;
    });
  }

  // Direction-preserving unit scaling; rejects near-zero vectors rather
  // than dividing silently.
  Id l2_normalize(Id a) {
    const auto& A = val(a);
    T acc = 0;
    for (T v : A.data) acc += v * v;
    const T norm = std::sqrt(acc);
    if (norm < T(1e-12))
      throw NumericError("l2_normalize: degenerate near-zero vector");
    TensorData<T> C = A;
    for (auto& v : C.data) v /= norm;
    return push(std::move(C), needs(a), "l2_normalize", [this, a, norm](Id out) {
      if (!nodes_[a].requires_grad_path) return;
      const auto& y = nodes_[out].value;
      const auto& g = nodes_[out].grad;
      auto& dA = nodes_[a].grad;
      T ydotg = 0;
      for (std::size_t i = 0; i < g.data.size(); ++i) ydotg += y.data[i] * g.data[i];
      for (std::size_t i = 0; i < g.data.size(); ++i)
        dA.data[i] += (g.data[i] - y.data[i] * ydotg) / norm;
    });
  }

  // Stable log(sum(exp(x))) over a vector or single row.
  Id log_sum_exp(Id a) {
    const auto& A = val(a);
    T mx = A.data[0];
    for (T v : A.data) mx = std::max(mx, v);
    T s = 0;
    for (T v : A.data) s += std::exp(v - mx);
    TensorData<T> C({1}, {mx + std::log(s)});
    return push(std::move(C), needs(a), "log_sum_exp", [this, a, mx, s](Id out) {
      if (!nodes_[a].requires_grad_path) return;
      const T g = nodes_[out].grad.data[0];
      const auto& A2 = nodes_[a].value;
      auto& dA = nodes_[a].grad;
      for (std::size_t i = 0; i < dA.data.size(); ++i)
        dA.data[i] += g * std::exp(A2.data[i] - mx) / s;
    });
  }

  Id gather_rows(Id table, std::vector<int> rows) {
    const auto& A = val(table);
    if (A.shape.size() != 2) throw DataError("gather_rows expects rank 2");
    const int n = A.shape[1];
    TensorData<T> C = TensorData<T>::zeros({static_cast<int>(rows.size()), n});
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i] < 0 || rows[i] >= A.shape[0])
        throw DataError("gather_rows index out of range");
      std::copy(A.data.begin() + static_cast<std::ptrdiff_t>(rows[i]) * n,
                A.data.begin() + static_cast<std::ptrdiff_t>(rows[i] + 1) * n,
                C.data.begin() + static_cast<std::ptrdiff_t>(i) * n);
    }
    return push(std::move(C), needs(table), "gather_rows",
                [this, table, rows = std::move(rows), n](Id out) {
      if (!nodes_[table].requires_grad_path) return;
      const auto& g = nodes_[out].grad;
      auto& dT = nodes_[table].grad;
      for (std::size_t i = 0; i < rows.size(); ++i)
        for (int j = 0; j < n; ++j)
          dT.data[static_cast<std::size_t>(rows[i]) * n + j] += g.data[i * n + j];
    });
  }

  // Seeds d(loss)=1 and walks the record once in reverse. loss must be a
  // scalar node.
  void backward(Id loss) {
    if (val(loss).size() != 1) throw DataError("backward: loss is not scalar");
    for (auto& n : nodes_) {
      if (n.grad.data.empty() && n.requires_grad_path)
        n.grad = TensorData<T>::zeros(n.value.shape);
    }
    nodes_[loss].grad = TensorData<T>({1}, {T(1)});
    for (Id i = static_cast<Id>(nodes_.size()) - 1; i >= 0; --i) {
      if (nodes_[i].backfn && nodes_[i].requires_grad_path && !nodes_[i].grad.data.empty())
        nodes_[i].backfn(i);
    }
  }

 private:
  struct NodeRec {
    TensorData<T> value;
    TensorData<T> grad;
    bool requires_grad_path = false;  // leaf with grad, or descended from one
    std::function<void(Id)> backfn;
  };

  const TensorData<T>& val(Id id) const { return nodes_[id].value; }
  bool needs(Id a) const { return nodes_[a].requires_grad_path; }
  bool needs(Id a, Id b) const {
    return nodes_[a].requires_grad_path || nodes_[b].requires_grad_path;
  }
  bool needs(Id a, Id b, Id c) const { return needs(a, b) || needs(c); }

  Id push(TensorData<T> value, bool grad_path, const char* op,
          std::function<void(Id)> backfn) {
    for (T v : value.data) {
      if (!std::isfinite(v))
        throw NumericError(std::string("non-finite value produced by op '") + op + "'");
    }
    NodeRec rec;
    rec.value = std::move(value);
    rec.requires_grad_path = grad_path;
    rec.backfn = std::move(backfn);
    if (rec.requires_grad_path)
      rec.grad = TensorData<T>::zeros(rec.value.shape);
    nodes_.push_back(std::move(rec));
    return static_cast<Id>(nodes_.size()) - 1;
  }

  Id add_sub(Id a, Id b, T sign) {
    const auto& A = val(a);
    const auto& B = val(b);
    TensorData<T> C = A;
    const bool broadcast = !A.same_shape(B);
    if (broadcast) {
      if (A.shape.size() != 2 || static_cast<int>(B.size()) != A.shape[1])
        throw DataError("add/sub shape mismatch");
      const int m = A.shape[0], n = A.shape[1];
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) C.data[i * n + j] += sign * B.data[j];
    } else {
      for (std::size_t i = 0; i < C.data.size(); ++i) C.data[i] += sign * B.data[i];
    }
    return push(std::move(C), needs(a, b), sign > 0 ? "add" : "sub",
                [this, a, b, sign, broadcast](Id out) {
      const auto& g = nodes_[out].grad;
      if (nodes_[a].requires_grad_path) {
        auto& dA = nodes_[a].grad;
        for (std::size_t i = 0; i < g.data.size(); ++i) dA.data[i] += g.data[i];
      }
      if (nodes_[b].requires_grad_path) {
        auto& dB = nodes_[b].grad;
        if (broadcast) {
          const int n = static_cast<int>(dB.data.size());
          const int m = static_cast<int>(g.data.size()) / n;
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) dB.data[j] += sign * g.data[i * n + j];
        } else {
          for (std::size_t i = 0; i < g.data.size(); ++i) dB.data[i] += sign * g.data[i];
        }
      }
    });
  }

  std::vector<NodeRec> nodes_;
};

// Standard bias-corrected Adam, one moment pair per named parameter.
template <typename T>
class Adam {
 public:
  Adam(T lr, T beta1 = T(0.9), T beta2 = T(0.999), T eps = T(1e-8))
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(std::vector<NamedTensor<T>>& params,
            const std::vector<TensorData<T>>& grads) {
    if (params.size() != grads.size()) throw DataError("adam: size mismatch");
    if (m_.empty()) {
      for (const auto& p : params) {
        m_.push_back(TensorData<T>::zeros(p.value.shape));
        v_.push_back(TensorData<T>::zeros(p.value.shape));
      }
    }
    ++t_;
    const T bc1 = T(1) - std::pow(beta1_, static_cast<T>(t_));
    const T bc2 = T(1) - std::pow(beta2_, static_cast<T>(t_));
    for (std::size_t p = 0; p < params.size(); ++p) {
      auto& w = params[p].value;
      const auto& g = grads[p];
      if (!w.same_shape(g)) throw DataError("adam: grad shape mismatch for " + params[p].name);
      for (std::size_t i = 0; i < w.data.size(); ++i) {
        m_[p].data[i] = beta1_ * m_[p].data[i] + (T(1) - beta1_) * g.data[i];
        v_[p].data[i] = beta2_ * v_[p].data[i] + (T(1) - beta2_) * g.data[i] * g.data[i];
        const T mhat = m_[p].data[i] / bc1;
        const T vhat = v_[p].data[i] / bc2;
        w.data[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
      }
    }
  }

  std::int64_t steps() const { return t_; }
  T lr() const { return lr_; }

 private:
  T lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::vector<TensorData<T>> m_, v_;
};

// Central-difference comparison against analytic gradients over a sampled
// coordinate subset. Relative error uses max(|analytic|, |numeric|, 1e-8)
// as the denominator. loss_fn must be a deterministic function of params.
struct FdCheckReport {
  double max_rel_err = 0;
  int coords_checked = 0;
};

template <typename T>
FdCheckReport finite_difference_check(
    const std::function<double()>& loss_fn,
    std::vector<NamedTensor<T>*> params,
    const std::vector<const TensorData<T>*>& analytic_grads, double eps,
    int min_coords, std::uint64_t seed) {
  if (eps <= 0) throw DataError("finite_difference_check: eps must be > 0");
  std::size_t total = 0;
  for (const auto* p : params) total += p->value.size();
  const auto want = static_cast<std::size_t>(min_coords);

  // Coordinate subset: everything when small, else a seeded sample.
  std::vector<std::pair<std::size_t, std::size_t>> coords;
  if (total <= want) {
    for (std::size_t p = 0; p < params.size(); ++p)
      for (std::size_t i = 0; i < params[p]->value.size(); ++i) coords.emplace_back(p, i);
  } else {
    Rng rng(seed);
    for (std::size_t k = 0; k < want; ++k) {
      std::size_t flat = rng.uniform_int(total);
      std::size_t p = 0;
      while (flat >= params[p]->value.size()) {
        flat -= params[p]->value.size();
        ++p;
      }
      coords.emplace_back(p, flat);
    }
  }

  FdCheckReport report;
  report.coords_checked = static_cast<int>(coords.size());
  for (const auto& [p, i] : coords) {
    T& slot = params[p]->value.data[i];
    const T saved = slot;
    slot = saved + static_cast<T>(eps);
    const double up = loss_fn();
    slot = saved - static_cast<T>(eps);
    const double down = loss_fn();
    slot = saved;
    const double numeric = (up - down) / (2 * eps);
    const double analytic = static_cast<double>(analytic_grads[p]->data[i]);
    const double denom =
        std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    report.max_rel_err = std::max(report.max_rel_err,
                                  std::abs(analytic - numeric) / denom);
  }
  return report;
}

}  // namespace kgbridge
