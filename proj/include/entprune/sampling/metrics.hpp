#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <vector>

#include "entprune/entropy/entropy.hpp"
#include "entprune/flow/datasets.hpp"

namespace entprune {

struct EvalReport {
    double energy_distance = 0.0;
    double per_class_mean_error = 0.0;
    EntropyEstimate sample_entropy;
    std::size_t n_generated = 0;
};

namespace detail {

inline double mean_pairwise_distance(const Tensor& a, const Tensor& b) {
    const std::size_t d = a.cols();
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.rows(); ++j) {
            double sq = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                const double diff = a(i, k) - b(j, k);
                sq += diff * diff;
            }
            s += std::sqrt(sq);
        }
    return s / (static_cast<double>(a.rows()) * static_cast<double>(b.rows()));
}

} // namespace detail

// Two-sample energy statistic (V-statistic form):
//   2 E|X - Y| - E|X - X'| - E|Y - Y'|
// which is exactly zero for identical sample sets. The cross term is averaged
// over both loop orders so that swapping the arguments gives the same bits.
inline double energy_distance(const Tensor& x, const Tensor& y) {
    detail::require(x.rank() == 2 && y.rank() == 2 && x.rows() > 0 && y.rows() > 0, "energy_distance: empty sample");
    detail::require(x.cols() == y.cols(), "energy_distance: dimension mismatch");
    const double cross = detail::mean_pairwise_distance(x, y) + detail::mean_pairwise_distance(y, x);
    const double self = detail::mean_pairwise_distance(x, x) + detail::mean_pairwise_distance(y, y);
    return std::max(0.0, cross - self);
}

inline std::vector<double> column_mean(const Tensor& x) {
    std::vector<double> m(x.cols(), 0.0);
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < x.cols(); ++j) m[j] += x(i, j);
    for (auto& v : m) v /= static_cast<double>(x.rows());
    return m;
}

// Mean over generated classes of || mean(gen | c) - mean(ref | c) ||.
inline double per_class_mean_error(const Tensor& gen, const std::vector<std::size_t>& gen_labels, const Tensor& ref,
                                   const std::vector<std::size_t>& ref_labels) {
    std::set<std::size_t> classes(gen_labels.begin(), gen_labels.end());
    double total = 0.0;
    for (std::size_t c : classes) {
        const Tensor g = class_subset(gen, gen_labels, c);
        const Tensor r = class_subset(ref, ref_labels, c);
        if (r.rows() == 0) throw PreconditionError("evaluate: class " + std::to_string(c) + " absent from reference");
        const auto mg = column_mean(g), mr = column_mean(r);
        double sq = 0.0;
        for (std::size_t j = 0; j < mg.size(); ++j) sq += (mg[j] - mr[j]) * (mg[j] - mr[j]);
        total += std::sqrt(sq);
    }
    return total / static_cast<double>(classes.size());
}

inline EvalReport evaluate(const Tensor& generated, const std::vector<std::size_t>& gen_labels, const Tensor& reference,
                           const std::vector<std::size_t>& ref_labels) {
    detail::require(generated.rows() > 0 && reference.rows() > 0, "evaluate: both sample sets must be nonempty");
    detail::require(generated.cols() == reference.cols(), "evaluate: data_dim mismatch");
    detail::require(gen_labels.size() == generated.rows() && ref_labels.size() == reference.rows(),
                    "evaluate: one label per sample required");
    EvalReport r;
    r.per_class_mean_error = per_class_mean_error(generated, gen_labels, reference, ref_labels);
    r.energy_distance = energy_distance(generated, reference);
    r.sample_entropy = estimate_entropy(generated);
    r.n_generated = generated.rows();
    return r;
}

} // namespace entprune
