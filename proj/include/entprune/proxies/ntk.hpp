#pragma once

// Empirical NTK condition number of a candidate subnetwork.
//
// Each probe sample's velocity output is reduced to one scalar (mean over
// output dimensions, times `output_scale`); J holds the gradient of that
// scalar w.r.t. every active parameter, one row per sample, and the kernel
// is the b x b Gram matrix J J^T. kappa = lambda_max / lambda_min, with
// lambda_min floored at 1e-12 * lambda_max.

#include <cmath>
#include <string>
#include <vector>

#include "entprune/flow/flow_matching.hpp"
#include "entprune/numerics/linalg.hpp"
#include "entprune/numerics/parallel.hpp"

namespace entprune {

inline constexpr double kNtkEigFloor = 1e-12;
inline constexpr double kNtkKappaCap = 1e12;
inline constexpr std::size_t kNtkMaxJacobianRows = 4096;

struct NtkSpectrum {
    Tensor gram;
    std::vector<double> eigenvalues; // descending
    double kappa = 1.0;
    bool degenerate = false;
    std::string scalarization = "mean_over_output_dims";
};

inline NtkSpectrum ntk_spectrum_from_gram(Tensor gram) {
    NtkSpectrum s;
    SymEig eig = sym_eig(gram, 1e-8);
    s.gram = std::move(gram);
    s.eigenvalues = std::move(eig.eigenvalues);
    const double lmax = s.eigenvalues.front();
    const double lmin = s.eigenvalues.back();
    if (!(lmax > 0.0) || lmin < kNtkEigFloor * lmax) {
        s.degenerate = true;
        s.kappa = kNtkKappaCap;
    } else {
        s.kappa = lmax / lmin;
    }
    return s;
}

// Gram J J^T of a [b x P] Jacobian.
inline Tensor gram_matrix(const Tensor& jacobian) {
    const std::size_t b = jacobian.rows(), p = jacobian.cols();
    Tensor g({b, b});
    for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = i; j < b; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < p; ++k) s += jacobian(i, k) * jacobian(j, k);
            g(i, j) = s;
            g(j, i) = s;
        }
    return g;
}

// Reverse-mode Jacobian of b scalar functions. per_sample(tape, i) records the
// i-th scalar on a fresh tape; all registered tape parameters form the columns,
// in registration order (which must match across samples).
template <class PerSample>
Tensor scalar_jacobian(std::size_t b, PerSample&& per_sample) {
    auto rows = parallel_map(b, [&](std::size_t i) {
        Tape tape;
        Var out = per_sample(tape, i);
        if (out.value().size() != 1) throw PreconditionError("ntk: per-sample output must be scalar");
        std::vector<std::string> order;
        for (const auto& [name, id] : tape.parameters()) order.push_back(name);
        GradientMap g = tape.backward(out);
        std::vector<double> row;
        for (const auto& name : order) {
            const auto& t = g.at(name);
            row.insert(row.end(), t.data().begin(), t.data().end());
        }
        return row;
    });
    const std::size_t p = rows.front().size();
    Tensor j({b, p});
    for (std::size_t i = 0; i < b; ++i) {
        if (rows[i].size() != p) throw PreconditionError("ntk: per-sample parameter sets differ");
        std::copy(rows[i].begin(), rows[i].end(), j.data().begin() + static_cast<std::ptrdiff_t>(i * p));
    }
    return j;
}

// Noised inputs at which the kernel is evaluated.
struct NtkProbe {
    Tensor x_t;
    std::vector<double> t;
    std::vector<std::size_t> labels;

    std::size_t size() const { return labels.size(); }
};

template <class Rng>
NtkProbe make_ntk_probe(const Dataset& ds, std::size_t b, const TimeSchedule& sched, Rng& rng) {
    FmBatch fb = sample_fm_batch(ds, b, rng);
    NoisedBatch nb = forward_process(fb.x, fb.t, fb.noise, sched);
    return {std::move(nb.x_t), std::move(fb.t), std::move(fb.labels)};
}

inline Tensor row_of(const Tensor& x, std::size_t i) {
    Tensor r({1, x.cols()});
    for (std::size_t j = 0; j < x.cols(); ++j) r(0, j) = x(i, j);
    return r;
}

inline Tensor model_ntk_jacobian(const VelocityModel& model, const SubnetMask& mask, const NtkProbe& probe,
                                 double output_scale = 1.0) {
    const std::size_t b = probe.size();
    detail::require(b >= 2, "ntk_condition: probe batch must have b >= 2");
    detail::require(b * model.config().data_dim <= kNtkMaxJacobianRows,
                    "ntk_condition: b * d_out exceeds " + std::to_string(kNtkMaxJacobianRows));
    return scalar_jacobian(b, [&](Tape& tape, std::size_t i) {
        const double ti = probe.t[i];
        Var v = model.forward(tape, mask, row_of(probe.x_t, i), std::span<const double>(&ti, 1), {probe.labels[i]});
        Var s = ops::mean(v);
        return output_scale == 1.0 ? s : ops::scale(s, output_scale);
    });
}

inline NtkSpectrum ntk_condition(const VelocityModel& model, const SubnetMask& mask, const NtkProbe& probe,
                                 double output_scale = 1.0) {
    return ntk_spectrum_from_gram(gram_matrix(model_ntk_jacobian(model, mask, probe, output_scale)));
}

} // namespace entprune
