#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "entprune/numerics/errors.hpp"

namespace entprune {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << ']';
    return os.str();
}

// Dense row-major tensor of doubles. A value type: copies are deep.
class Tensor {
  public:
    Tensor() = default;

    explicit Tensor(Shape shape, double fill = 0.0)
        : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

    Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
        if (shape_size(shape_) != data_.size())
            throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                             shape_str(shape_));
    }

    static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }

    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows) {
        std::size_t r = rows.size();
        std::size_t c = r ? rows.begin()->size() : 0;
        std::vector<double> d;
        d.reserve(r * c);
        for (const auto& row : rows) {
            if (row.size() != c) throw ShapeError("ragged matrix literal");
            d.insert(d.end(), row.begin(), row.end());
        }
        return Tensor({r, c}, std::move(d));
    }

    static Tensor vector(std::initializer_list<double> v) { return Tensor({v.size()}, std::vector<double>(v)); }

    static Tensor identity(std::size_t n) {
        Tensor t({n, n});
        for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
        return t;
    }

    template <class Rng>
    static Tensor randn(Shape shape, Rng& rng, double scale = 1.0) {
        Tensor t(std::move(shape));
        std::normal_distribution<double> nd(0.0, 1.0);
        for (auto& v : t.data_) v = scale * nd(rng);
        return t;
    }

    template <class Rng>
    static Tensor uniform(Shape shape, Rng& rng, double lo, double hi) {
        Tensor t(std::move(shape));
        std::uniform_real_distribution<double> ud(lo, hi);
        for (auto& v : t.data_) v = ud(rng);
        return t;
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    bool is_scalar() const noexcept { return data_.size() == 1 && shape_.size() <= 1; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    const std::vector<double>& values() const noexcept { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

    double item() const {
        if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape_));
        return data_[0];
    }

    std::size_t rows() const { return rank() == 2 ? shape_[0] : throw ShapeError("rows() on non-matrix"); }
    std::size_t cols() const { return rank() == 2 ? shape_[1] : throw ShapeError("cols() on non-matrix"); }

    Tensor reshaped(Shape s) const {
        if (shape_size(s) != data_.size())
            throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(s));
        return Tensor(std::move(s), data_);
    }

    Tensor transposed() const {
        if (rank() != 2) throw ShapeError("transposed() needs a matrix, got " + shape_str(shape_));
        Tensor t({shape_[1], shape_[0]});
        for (std::size_t i = 0; i < shape_[0]; ++i)
            for (std::size_t j = 0; j < shape_[1]; ++j) t(j, i) = (*this)(i, j);
        return t;
    }

    bool all_finite() const noexcept {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    friend bool operator==(const Tensor& a, const Tensor& b) { return a.shape_ == b.shape_ && a.data_ == b.data_; }

  private:
    Shape shape_;
    std::vector<double> data_;
};

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) throw ShapeError("max_abs_diff shape mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

inline double frobenius_norm(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v * v;
    return std::sqrt(s);
}

namespace kernels {

// c[m x n] += a[m x k] . b[k x n], all row-major and non-overlapping.
inline void gemm_acc(double* __restrict c, const double* __restrict a, const double* __restrict b, std::size_t m,
                     std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        double* __restrict crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = a[i * k + p];
            const double* __restrict brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
        }
    }
}

// c[k x n] += a^T . b with a[m x k], b[m x n].
inline void gemm_tn_acc(double* __restrict c, const double* __restrict a, const double* __restrict b, std::size_t m,
                        std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = a[i * k + p];
            double* __restrict crow = c + p * n;
            const double* __restrict brow = b + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
        }
}

// c[m x k] += a . b^T with a[m x n], b[k x n]; `scratch` receives b^T.
inline void gemm_nt_acc(double* __restrict c, const double* __restrict a, const double* __restrict b, std::size_t m,
                        std::size_t k, std::size_t n, std::vector<double>& scratch) {
    scratch.resize(k * n);
    for (std::size_t p = 0; p < k; ++p)
        for (std::size_t j = 0; j < n; ++j) scratch[j * k + p] = b[p * n + j];
    gemm_acc(c, a, scratch.data(), m, n, k);
}

} // namespace kernels

// Plain (non-differentiable) matrix product, used by linear algebra and oracles.
inline Tensor matmul_values(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
        throw ShapeError("matmul shape mismatch: " + shape_str(a.shape()) + " . " + shape_str(b.shape()));
    Tensor c({a.dim(0), b.dim(1)});
    kernels::gemm_acc(c.data().data(), a.data().data(), b.data().data(), a.dim(0), a.dim(1), b.dim(1));
    return c;
}

} // namespace entprune
