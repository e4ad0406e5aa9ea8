#pragma once

// Output entropy under a Gaussian assumption: for X ~ N(mu, sigma^2),
//   H(X) = ln(sigma) + ln(2 pi)/2 + 1/2   (nats).

#include <cmath>
#include <numbers>
#include <vector>

#include "entprune/numerics/tensor.hpp"

namespace entprune {

struct EntropyEstimate {
    double h = 0.0;
    double sigma = 0.0;
    std::size_t n_samples = 0;
};

inline double gaussian_entropy(double sigma) { return std::log(sigma) + 0.5 * std::log(2.0 * std::numbers::pi) + 0.5; }

namespace detail {

inline double population_std(std::span<const double> v, std::size_t offset, std::size_t stride) {
    double mean = 0.0;
    std::size_t n = 0;
    for (std::size_t i = offset; i < v.size(); i += stride, ++n) mean += v[i];
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = offset; i < v.size(); i += stride) ss += (v[i] - mean) * (v[i] - mean);
    return std::sqrt(ss / static_cast<double>(n));
}

} // namespace detail

// Single scalar sigma fitted to every entry of `outputs` (flattened), population convention.
inline EntropyEstimate estimate_entropy(const Tensor& outputs) {
    if (outputs.rank() < 1 || outputs.dim(0) < 2) throw PreconditionError("estimate_entropy needs n >= 2 samples");
    if (!outputs.all_finite()) throw NumericError("estimate_entropy: non-finite outputs");
    const double sigma = detail::population_std(outputs.data(), 0, 1);
    if (!(sigma > 0.0)) throw DegenerateDistributionError("degenerate distribution: outputs have zero variance");
    return {gaussian_entropy(sigma), sigma, outputs.dim(0)};
}

// Sum of per-dimension Gaussian entropies of an [n x d] sample. `sigma` reports
// the geometric mean of the per-dimension deviations, so h = d * gaussian_entropy(sigma).
inline EntropyEstimate estimate_entropy_per_dimension(const Tensor& outputs) {
    if (outputs.rank() != 2 || outputs.dim(0) < 2) throw PreconditionError("estimate_entropy needs an [n x d] sample, n >= 2");
    if (!outputs.all_finite()) throw NumericError("estimate_entropy: non-finite outputs");
    const std::size_t d = outputs.cols();
    double h = 0.0, log_sigma = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        const double s = detail::population_std(outputs.data(), j, d);
        if (!(s > 0.0))
            throw DegenerateDistributionError("degenerate distribution: output dimension " + std::to_string(j) +
                                              " has zero variance");
        h += gaussian_entropy(s);
        log_sigma += std::log(s);
    }
    return {h, std::exp(log_sigma / static_cast<double>(d)), outputs.dim(0)};
}

enum class EntropyMode { scalar, per_dimension };

inline EntropyEstimate estimate_entropy(const Tensor& outputs, EntropyMode mode) {
    return mode == EntropyMode::scalar ? estimate_entropy(outputs) : estimate_entropy_per_dimension(outputs);
}

} // namespace entprune
