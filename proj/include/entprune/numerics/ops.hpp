#pragma once

// Differentiable primitives. Attention and MLP blocks are composed from these.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "entprune/numerics/autodiff.hpp"

namespace entprune::ops {

namespace detail {

inline void same_tape(const Var& a, const Var& b, const char* op) {
    if (&a.tape() != &b.tape()) throw PreconditionError(std::string(op) + ": operands live on different tapes");
}

inline void same_shape(const Var& a, const Var& b, const char* op) {
    same_tape(a, b, op);
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

inline std::size_t last_dim(const Shape& s, const char* op) {
    if (s.empty()) throw ShapeError(std::string(op) + ": needs rank >= 1");
    return s.back();
}

} // namespace detail

inline Var matmul(Var a, Var b) {
    detail::same_tape(a, b, "matmul");
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    Tensor C = matmul_values(A, B);
    const std::size_t m = A.dim(0), k = A.dim(1), n = B.dim(1);
    a.tape().add_macs(static_cast<std::uint64_t>(m) * k * n);
    const std::size_t ia = a.id(), ib = b.id();
    return a.tape().record("matmul", std::move(C), {a, b}, [ia, ib, m, k, n](Tape& t, const Tensor& g) {
        if (t.needs_grad(ia)) {
            std::vector<double> scratch;
            kernels::gemm_nt_acc(t.grad(ia).data().data(), g.data().data(), t.value(ib).data().data(), m, k, n, scratch);
        }
        if (t.needs_grad(ib))
            kernels::gemm_tn_acc(t.grad(ib).data().data(), t.value(ia).data().data(), g.data().data(), m, k, n);
    });
}

// Batched product: [g x m x k] . [g x k x n] -> [g x m x n].
inline Var bmm(Var a, Var b) {
    detail::same_tape(a, b, "bmm");
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    if (A.rank() != 3 || B.rank() != 3 || A.dim(0) != B.dim(0) || A.dim(2) != B.dim(1))
        throw ShapeError("bmm shape mismatch: " + shape_str(A.shape()) + " . " + shape_str(B.shape()));
    const std::size_t g = A.dim(0), m = A.dim(1), k = A.dim(2), n = B.dim(2);
    Tensor C({g, m, n});
    for (std::size_t q = 0; q < g; ++q)
        kernels::gemm_acc(C.data().data() + q * m * n, A.data().data() + q * m * k, B.data().data() + q * k * n, m, k, n);
    a.tape().add_macs(static_cast<std::uint64_t>(g) * m * k * n);
    const std::size_t ia = a.id(), ib = b.id();
    return a.tape().record("bmm", std::move(C), {a, b}, [ia, ib, g, m, k, n](Tape& t, const Tensor& gr) {
        const double* G = gr.data().data();
        if (t.needs_grad(ia)) {
            std::vector<double> scratch;
            double* dA = t.grad(ia).data().data();
            const double* Bv = t.value(ib).data().data();
            for (std::size_t q = 0; q < g; ++q)
                kernels::gemm_nt_acc(dA + q * m * k, G + q * m * n, Bv + q * k * n, m, k, n, scratch);
        }
        if (t.needs_grad(ib)) {
            double* dB = t.grad(ib).data().data();
            const double* Av = t.value(ia).data().data();
            for (std::size_t q = 0; q < g; ++q)
                kernels::gemm_tn_acc(dB + q * k * n, Av + q * m * k, G + q * m * n, m, k, n);
        }
    });
}

inline Var add(Var a, Var b) {
    detail::same_shape(a, b, "add");
    Tensor c = a.value();
    const auto bv = b.value().data();
    for (std::size_t i = 0; i < c.size(); ++i) c[i] += bv[i];
    const std::size_t ia = a.id(), ib = b.id();
    return a.tape().record("add", std::move(c), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
        for (std::size_t id : {ia, ib}) {
            if (!t.needs_grad(id)) continue;
            auto d = t.grad(id).data();
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
        }
    });
}

inline Var sub(Var a, Var b) {
    detail::same_shape(a, b, "sub");
    Tensor c = a.value();
    const auto bv = b.value().data();
    for (std::size_t i = 0; i < c.size(); ++i) c[i] -= bv[i];
    const std::size_t ia = a.id(), ib = b.id();
    return a.tape().record("sub", std::move(c), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
        if (t.needs_grad(ia)) {
            auto d = t.grad(ia).data();
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
        }
        if (t.needs_grad(ib)) {
            auto d = t.grad(ib).data();
            for (std::size_t i = 0; i < d.size(); ++i) d[i] -= g[i];
        }
    });
}

// Elementwise product of equal shapes.
inline Var mul(Var a, Var b) {
    detail::same_shape(a, b, "mul");
    Tensor c = a.value();
    const auto bv = b.value().data();
    for (std::size_t i = 0; i < c.size(); ++i) c[i] *= bv[i];
    const std::size_t ia = a.id(), ib = b.id();
    return a.tape().record("mul", std::move(c), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
        if (t.needs_grad(ia)) {
            const auto bv = t.value(ib).data();
            auto d = t.grad(ia).data();
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * bv[i];
        }
        if (t.needs_grad(ib)) {
            const auto av = t.value(ia).data();
            auto d = t.grad(ib).data();
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * av[i];
        }
    });
}

inline Var scale(Var a, double c) {
    Tensor out = a.value();
    for (auto& v : out.data()) v *= c;
    const std::size_t ia = a.id();
    return a.tape().record("scale", std::move(out), {a}, [ia, c](Tape& t, const Tensor& g) {
        auto d = t.grad(ia).data();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += c * g[i];
    });
}

// x + v broadcast along the last dimension (bias add).
inline Var add_rowwise(Var x, Var v) {
    detail::same_tape(x, v, "add_rowwise");
    const std::size_t n = detail::last_dim(x.shape(), "add_rowwise");
    if (v.value().size() != n) throw ShapeError("add_rowwise: vector length does not match last dimension");
    Tensor out = x.value();
    const auto vv = v.value().data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += vv[i % n];
    const std::size_t ix = x.id(), iv = v.id();
    return x.tape().record("add_rowwise", std::move(out), {x, v}, [ix, iv, n](Tape& t, const Tensor& g) {
        if (t.needs_grad(ix)) {
            auto d = t.grad(ix).data();
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
        }
        if (t.needs_grad(iv)) {
            auto d = t.grad(iv).data();
            for (std::size_t i = 0; i < g.size(); ++i) d[i % n] += g[i];
        }
    });
}

// x * v broadcast along the last dimension (norm gain).
inline Var mul_rowwise(Var x, Var v) {
    detail::same_tape(x, v, "mul_rowwise");
    const std::size_t n = detail::last_dim(x.shape(), "mul_rowwise");
    if (v.value().size() != n) throw ShapeError("mul_rowwise: vector length does not match last dimension");
    Tensor out = x.value();
    const auto vv = v.value().data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= vv[i % n];
    const std::size_t ix = x.id(), iv = v.id();
    return x.tape().record("mul_rowwise", std::move(out), {x, v}, [ix, iv, n](Tape& t, const Tensor& g) {
        if (t.needs_grad(ix)) {
            const auto vv = t.value(iv).data();
            auto d = t.grad(ix).data();
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * vv[i % n];
        }
        if (t.needs_grad(iv)) {
            const auto xv = t.value(ix).data();
            auto d = t.grad(iv).data();
            for (std::size_t i = 0; i < g.size(); ++i) d[i % n] += g[i] * xv[i];
        }
    });
}

// Normalizes each slice along the last dimension to zero mean, unit variance.
inline Var layer_norm(Var x, double eps = 1e-5) {
    const std::size_t n = detail::last_dim(x.shape(), "layer_norm");
    const std::size_t rows = x.value().size() / n;
    Tensor out(x.shape());
    std::vector<double> inv_std(rows);
    const auto xv = x.value().data();
    for (std::size_t r = 0; r < rows; ++r) {
        double mean = 0.0;
        for (std::size_t j = 0; j < n; ++j) mean += xv[r * n + j];
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double d = xv[r * n + j] - mean;
            var += d * d;
        }
        var /= static_cast<double>(n);
        inv_std[r] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < n; ++j) out[r * n + j] = (xv[r * n + j] - mean) * inv_std[r];
    }
    Tensor normed = out;
    const std::size_t ix = x.id();
    return x.tape().record("layer_norm", std::move(out), {x},
                           [ix, n, rows, inv_std = std::move(inv_std), normed = std::move(normed)](Tape& t, const Tensor& g) {
                               auto d = t.grad(ix).data();
                               const double inv_n = 1.0 / static_cast<double>(n);
                               for (std::size_t r = 0; r < rows; ++r) {
                                   double gsum = 0.0, gy = 0.0;
                                   for (std::size_t j = 0; j < n; ++j) {
                                       gsum += g[r * n + j];
                                       gy += g[r * n + j] * normed[r * n + j];
                                   }
                                   for (std::size_t j = 0; j < n; ++j) {
                                       const double y = normed[r * n + j];
                                       d[r * n + j] += inv_std[r] * (g[r * n + j] - inv_n * gsum - y * inv_n * gy);
                                   }
                               }
                           });
}

// GELU, tanh approximation.
inline Var gelu(Var x) {
    constexpr double c = 0.7978845608028654; // sqrt(2/pi)
    constexpr double a = 0.044715;
    Tensor out(x.shape());
    std::vector<double> th(out.size());
    const auto xv = x.value().data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double v = xv[i];
        th[i] = std::tanh(c * (v + a * v * v * v));
        out[i] = 0.5 * v * (1.0 + th[i]);
    }
    const std::size_t ix = x.id();
    return x.tape().record("gelu", std::move(out), {x}, [ix, th = std::move(th)](Tape& t, const Tensor& g) {
        const auto xv = t.value(ix).data();
        auto d = t.grad(ix).data();
        for (std::size_t i = 0; i < d.size(); ++i) {
            const double v = xv[i];
            const double du = c * (1.0 + 3.0 * a * v * v);
            d[i] += g[i] * (0.5 * (1.0 + th[i]) + 0.5 * v * (1.0 - th[i] * th[i]) * du);
        }
    });
}

// Softmax along the last dimension.
inline Var softmax(Var x) {
    const std::size_t n = detail::last_dim(x.shape(), "softmax");
    const std::size_t rows = x.value().size() / n;
    Tensor out(x.shape());
    const auto xv = x.value().data();
    for (std::size_t r = 0; r < rows; ++r) {
        double mx = xv[r * n];
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, xv[r * n + j]);
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            out[r * n + j] = std::exp(xv[r * n + j] - mx);
            s += out[r * n + j];
        }
        for (std::size_t j = 0; j < n; ++j) out[r * n + j] /= s;
    }
    Tensor y = out;
    const std::size_t ix = x.id();
    return x.tape().record("softmax", std::move(out), {x}, [ix, n, rows, y = std::move(y)](Tape& t, const Tensor& g) {
        auto d = t.grad(ix).data();
        for (std::size_t r = 0; r < rows; ++r) {
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += g[r * n + j] * y[r * n + j];
            for (std::size_t j = 0; j < n; ++j) d[r * n + j] += y[r * n + j] * (g[r * n + j] - dot);
        }
    });
}

inline Var reshape(Var x, Shape s) {
    Tensor out = x.value().reshaped(std::move(s));
    const std::size_t ix = x.id();
    return x.tape().record("reshape", std::move(out), {x}, [ix](Tape& t, const Tensor& g) {
        auto d = t.grad(ix).data();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
    });
}

// General axis permutation: out.shape[i] = in.shape[perm[i]].
inline Var permute(Var x, std::vector<std::size_t> perm) {
    const Shape& in = x.shape();
    const std::size_t r = in.size();
    if (perm.size() != r) throw ShapeError("permute: permutation rank mismatch");
    {
        std::vector<bool> seen(r, false);
        for (std::size_t p : perm) {
            if (p >= r || seen[p]) throw ShapeError("permute: not a permutation");
            seen[p] = true;
        }
    }
    Shape out_shape(r);
    for (std::size_t i = 0; i < r; ++i) out_shape[i] = in[perm[i]];
    std::vector<std::size_t> in_stride(r, 1);
    for (std::size_t i = r; i-- > 1;) in_stride[i - 1] = in_stride[i] * in[i];
    // Source offset of every destination element.
    const std::size_t total = x.value().size();
    std::vector<std::size_t> src(total);
    std::vector<std::size_t> idx(r, 0);
    for (std::size_t o = 0; o < total; ++o) {
        std::size_t off = 0;
        for (std::size_t i = 0; i < r; ++i) off += idx[i] * in_stride[perm[i]];
        src[o] = off;
        for (std::size_t i = r; i-- > 0;) {
            if (++idx[i] < out_shape[i]) break;
            idx[i] = 0;
        }
    }
    Tensor out(out_shape);
    const auto xv = x.value().data();
    for (std::size_t o = 0; o < total; ++o) out[o] = xv[src[o]];
    const std::size_t ix = x.id();
    return x.tape().record("permute", std::move(out), {x}, [ix, src = std::move(src)](Tape& t, const Tensor& g) {
        auto d = t.grad(ix).data();
        for (std::size_t o = 0; o < src.size(); ++o) d[src[o]] += g[o];
    });
}

inline Var transpose(Var x) {
    if (x.shape().size() != 2) throw ShapeError("transpose needs a matrix");
    return permute(x, {1, 0});
}

// Swaps the two trailing axes of a rank-3 tensor.
inline Var transpose_last2(Var x) {
    if (x.shape().size() != 3) throw ShapeError("transpose_last2 needs rank 3");
    return permute(x, {0, 2, 1});
}

inline Var sum(Var x) {
    double s = 0.0;
    for (double v : x.value().data()) s += v;
    const std::size_t ix = x.id();
    return x.tape().record("sum", Tensor::scalar(s), {x}, [ix](Tape& t, const Tensor& g) {
        auto d = t.grad(ix).data();
        for (auto& v : d) v += g[0];
    });
}

inline Var mean(Var x) {
    const double n = static_cast<double>(x.value().size());
    return scale(sum(x), 1.0 / n);
}

inline Var square(Var x) { return mul(x, x); }

// rows of `table` selected by `index`: [V x H], n indices -> [n x H].
inline Var gather_rows(Var table, const std::vector<std::size_t>& index) {
    const Tensor& T = table.value();
    if (T.rank() != 2) throw ShapeError("gather_rows needs a matrix table");
    const std::size_t h = T.dim(1);
    Tensor out({index.size(), h});
    for (std::size_t r = 0; r < index.size(); ++r) {
        if (index[r] >= T.dim(0)) throw PreconditionError("gather_rows: index out of range");
        for (std::size_t j = 0; j < h; ++j) out(r, j) = T(index[r], j);
    }
    const std::size_t it = table.id();
    return table.tape().record("gather_rows", std::move(out), {table}, [it, h, index](Tape& t, const Tensor& g) {
        auto d = t.grad(it).data();
        for (std::size_t r = 0; r < index.size(); ++r)
            for (std::size_t j = 0; j < h; ++j) d[index[r] * h + j] += g[r * h + j];
    });
}

// [b x h] -> [b*times x h]; each row repeated `times` times consecutively.
inline Var repeat_rows(Var x, std::size_t times) {
    const Tensor& X = x.value();
    if (X.rank() != 2) throw ShapeError("repeat_rows needs a matrix");
    const std::size_t b = X.dim(0), h = X.dim(1);
    Tensor out({b * times, h});
    for (std::size_t r = 0; r < b; ++r)
        for (std::size_t k = 0; k < times; ++k)
            for (std::size_t j = 0; j < h; ++j) out((r * times + k), j) = X(r, j);
    const std::size_t ix = x.id();
    return x.tape().record("repeat_rows", std::move(out), {x}, [ix, b, h, times](Tape& t, const Tensor& g) {
        auto d = t.grad(ix).data();
        for (std::size_t r = 0; r < b; ++r)
            for (std::size_t k = 0; k < times; ++k)
                for (std::size_t j = 0; j < h; ++j) d[r * h + j] += g[(r * times + k) * h + j];
    });
}

// [n x h] -> [n*times x h]; the whole block stacked `times` times.
inline Var tile_rows(Var x, std::size_t times) {
    const Tensor& X = x.value();
    if (X.rank() != 2) throw ShapeError("tile_rows needs a matrix");
    const std::size_t sz = X.size();
    Tensor out({X.dim(0) * times, X.dim(1)});
    for (std::size_t k = 0; k < times; ++k)
        for (std::size_t i = 0; i < sz; ++i) out[k * sz + i] = X[i];
    const std::size_t ix = x.id();
    return x.tape().record("tile_rows", std::move(out), {x}, [ix, sz, times](Tape& t, const Tensor& g) {
        auto d = t.grad(ix).data();
        for (std::size_t k = 0; k < times; ++k)
            for (std::size_t i = 0; i < sz; ++i) d[i] += g[k * sz + i];
    });
}

} // namespace entprune::ops
