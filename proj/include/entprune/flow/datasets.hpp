#pragma once

// Conditional toy distributions with known ground truth.

#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "entprune/numerics/tensor.hpp"

namespace entprune {

struct Dataset {
    Tensor x;                         // [n x data_dim]
    std::vector<std::size_t> labels;  // n entries in [0, n_classes)
    std::size_t n_classes = 1;

    std::size_t size() const { return labels.size(); }
    std::size_t dim() const { return x.cols(); }
};

enum class DatasetKind { gaussian_mixture, two_moons, checkerboard };

inline DatasetKind parse_dataset_kind(const std::string& s) {
    if (s == "gaussian_mixture") return DatasetKind::gaussian_mixture;
    if (s == "two_moons") return DatasetKind::two_moons;
    if (s == "checkerboard") return DatasetKind::checkerboard;
    throw PreconditionError("unknown dataset kind '" + s + "'");
}

inline const char* to_string(DatasetKind k) {
    switch (k) {
    case DatasetKind::gaussian_mixture: return "gaussian_mixture";
    case DatasetKind::two_moons: return "two_moons";
    case DatasetKind::checkerboard: return "checkerboard";
    }
    return "?";
}

enum class Domain { source, target };

// The target domain is the source distribution rotated and translated, so a
// model pretrained on source data has to adapt when fine-tuned on target data.
struct DataSpec {
    DatasetKind kind = DatasetKind::gaussian_mixture;
    std::size_t n_classes = 4;
    double radius = 2.0;
    double component_std = 0.3;
    double target_rotation = 0.6; // radians
    double target_shift_x = 0.5;
    double target_shift_y = -0.3;
};

namespace detail {

template <class Rng>
void sample_point(const DataSpec& spec, std::size_t label, Rng& rng, double& px, double& py) {
    std::normal_distribution<double> nd(0.0, 1.0);
    std::uniform_real_distribution<double> ud(0.0, 1.0);
    switch (spec.kind) {
    case DatasetKind::gaussian_mixture: {
        const double ang = 2.0 * std::numbers::pi * static_cast<double>(label) / static_cast<double>(spec.n_classes);
        px = spec.radius * std::cos(ang) + spec.component_std * nd(rng);
        py = spec.radius * std::sin(ang) + spec.component_std * nd(rng);
        return;
    }
    case DatasetKind::two_moons: {
        const double a = std::numbers::pi * ud(rng);
        if (label % 2 == 0) {
            px = std::cos(a) - 0.5;
            py = std::sin(a) - 0.25;
        } else {
            px = 0.5 - std::cos(a);
            py = 0.25 - std::sin(a);
        }
        px = spec.radius * 0.75 * px + 0.1 * nd(rng);
        py = spec.radius * 0.75 * py + 0.1 * nd(rng);
        return;
    }
    case DatasetKind::checkerboard: {
        // 4x4 board on [-2, 2]^2; class 0 = even cells, class 1 = odd cells.
        for (;;) {
            const int cx = static_cast<int>(ud(rng) * 4.0);
            const int cy = static_cast<int>(ud(rng) * 4.0);
            if (static_cast<std::size_t>((cx + cy) % 2) != label % 2) continue;
            px = (-2.0 + cx + ud(rng)) * spec.radius * 0.5;
            py = (-2.0 + cy + ud(rng)) * spec.radius * 0.5;
            return;
        }
    }
    }
}

} // namespace detail

// Class counts: the mixture uses spec.n_classes components; moons and
// checkerboard have two classes and ignore larger class ids modulo 2.
template <class Rng>
Dataset make_dataset(const DataSpec& spec, std::size_t n, Domain domain, Rng& rng) {
    detail::require(n > 0, "dataset size must be positive");
    detail::require(spec.n_classes >= 1, "n_classes must be positive");
    Dataset ds{Tensor({n, 2}), std::vector<std::size_t>(n), spec.n_classes};
    std::uniform_int_distribution<std::size_t> cls(0, spec.n_classes - 1);
    const double c = std::cos(spec.target_rotation), s = std::sin(spec.target_rotation);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t label = cls(rng);
        double px = 0, py = 0;
        detail::sample_point(spec, label, rng, px, py);
        if (domain == Domain::target) {
            const double rx = c * px - s * py + spec.target_shift_x;
            const double ry = s * px + c * py + spec.target_shift_y;
            px = rx;
            py = ry;
        }
        ds.x(i, 0) = px;
        ds.x(i, 1) = py;
        ds.labels[i] = label;
    }
    return ds;
}

// Points of `ds` restricted to one class.
inline Tensor class_subset(const Tensor& x, const std::vector<std::size_t>& labels, std::size_t label) {
    std::vector<double> d;
    std::size_t n = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != label) continue;
        for (std::size_t j = 0; j < x.cols(); ++j) d.push_back(x(i, j));
        ++n;
    }
    return Tensor({n, x.cols()}, std::move(d));
}

} // namespace entprune
