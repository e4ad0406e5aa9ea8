#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "entprune/numerics/tensor.hpp"

namespace entprune {

struct SymEig {
    std::vector<double> eigenvalues; // descending
    Tensor eigenvectors;             // column i pairs with eigenvalues[i]
};

// Cyclic Jacobi eigen-decomposition of a symmetric matrix. The input is
// symmetrized as (m + m^T)/2; asymmetry above `sym_tol` is rejected.
inline SymEig sym_eig(const Tensor& m, double sym_tol = 1e-10, int max_sweeps = 100) {
    if (m.rank() != 2 || m.dim(0) != m.dim(1)) throw ShapeError("sym_eig needs a square matrix, got " + shape_str(m.shape()));
    const std::size_t n = m.dim(0);
    Tensor a({n, n});
    double scale = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) scale = std::max(scale, std::abs(m(i, j)));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            if (std::abs(m(i, j) - m(j, i)) > sym_tol * std::max(1.0, scale))
                throw PreconditionError("sym_eig: matrix is not symmetric");
            a(i, j) = 0.5 * (m(i, j) + m(j, i));
        }
    if (!a.all_finite()) throw NumericError("sym_eig: non-finite input");
    Tensor v = Tensor::identity(n);

    auto off_norm = [&] {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) s += a(i, j) * a(i, j);
        return std::sqrt(s);
    };
    const double tol = 1e-15 * std::max(frobenius_norm(a), std::numeric_limits<double>::min());

    bool converged = n < 2;
    for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
        if (off_norm() <= tol) {
            converged = true;
            break;
        }
        for (std::size_t p = 0; p + 1 < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
    }
    if (!converged && off_norm() > tol * 1e3) throw NumericError("sym_eig: Jacobi iteration did not converge");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });
    SymEig out{std::vector<double>(n), Tensor({n, n})};
    for (std::size_t c = 0; c < n; ++c) {
        out.eigenvalues[c] = a(order[c], order[c]);
        for (std::size_t r = 0; r < n; ++r) out.eigenvectors(r, c) = v(r, order[c]);
    }
    return out;
}

} // namespace entprune
