#pragma once

// Conditional Entropy Deviation: how far the output entropy moves when one
// block is bypassed. signed_ced = H(drop i) - H(full); ranking uses |signed_ced|.
//   signed_ced > 0: outputs drift toward noise
//   signed_ced < 0: outputs contract (mode-collapse tendency)

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <random>
#include <vector>

#include "entprune/entropy/entropy.hpp"
#include "entprune/flow/flow_matching.hpp"
#include "entprune/numerics/parallel.hpp"

namespace entprune {

struct ProbeSpec {
    std::size_t n_points = 256;  // clean samples per probe
    std::size_t t_grid = 8;      // equispaced times crossed with every point
    Domain data_source = Domain::target;
    std::uint64_t seed = 0;
    EntropyMode mode = EntropyMode::scalar;

    std::size_t n_samples() const { return n_points * t_grid; }
};

// Stratified t grid: (j + 1/2) / t_grid.
inline std::vector<double> stratified_times(std::size_t t_grid) {
    std::vector<double> t(t_grid);
    for (std::size_t j = 0; j < t_grid; ++j) t[j] = (static_cast<double>(j) + 0.5) / static_cast<double>(t_grid);
    return t;
}

// Every probe point is paired with every grid time; noise is drawn once per
// (point, time) row from spec.seed, so all masks see identical inputs.
inline FmBatch make_ced_probe(const Dataset& ds, const ProbeSpec& spec) {
    detail::require(spec.n_points > 0 && spec.t_grid > 0, "probe must be nonempty");
    std::mt19937_64 rng(spec.seed);
    std::uniform_int_distribution<std::size_t> pick(0, ds.size() - 1);
    const auto times = stratified_times(spec.t_grid);
    const std::size_t n = spec.n_samples(), d = ds.dim();
    FmBatch b{Tensor({n, d}), std::vector<std::size_t>(n), std::vector<double>(n), Tensor({n, d})};
    for (std::size_t p = 0; p < spec.n_points; ++p) {
        const std::size_t k = pick(rng);
        for (std::size_t j = 0; j < spec.t_grid; ++j) {
            const std::size_t r = p * spec.t_grid + j;
            for (std::size_t c = 0; c < d; ++c) b.x(r, c) = ds.x(k, c);
            b.labels[r] = ds.labels[k];
            b.t[r] = times[j];
        }
    }
    std::normal_distribution<double> nd(0.0, 1.0);
    for (auto& v : b.noise.data()) v = nd(rng);
    return b;
}

struct BlockCed {
    double signed_ced = 0.0;
    double abs_ced = 0.0;
};

struct CedReport {
    std::vector<BlockCed> blocks;
    std::vector<std::size_t> ranking; // ascending abs_ced, ties by lower index
    EntropyEstimate base_entropy;
    ProbeSpec probe;
};

inline std::vector<std::size_t> rank_by_abs_ced(const std::vector<BlockCed>& blocks) {
    std::vector<std::size_t> r(blocks.size());
    std::iota(r.begin(), r.end(), 0);
    std::stable_sort(r.begin(), r.end(), [&](std::size_t a, std::size_t b) { return blocks[a].abs_ced < blocks[b].abs_ced; });
    return r;
}

// Assembles a report from per-block signed deviations.
inline CedReport make_ced_report(std::vector<double> signed_ced, EntropyEstimate base, ProbeSpec probe = {}) {
    CedReport rep;
    rep.base_entropy = base;
    rep.probe = probe;
    for (double s : signed_ced) rep.blocks.push_back({s, std::abs(s)});
    rep.ranking = rank_by_abs_ced(rep.blocks);
    return rep;
}

inline Tensor probe_outputs(const VelocityModel& model, const SubnetMask& mask, const FmBatch& probe,
                            const TimeSchedule& sched) {
    NoisedBatch nb = forward_process(probe.x, probe.t, probe.noise, sched);
    return model.predict(mask, nb.x_t, probe.t, probe.labels);
}

// One full-mask evaluation plus one evaluation per single-block drop, all on the same probe.
inline CedReport compute_ced(const VelocityModel& model, const FmBatch& probe, const ProbeSpec& spec,
                             const TimeSchedule& sched) {
    detail::require(probe.x.rows() > 0, "compute_ced: empty probe");
    const SubnetMask full = model.full_mask();
    const EntropyEstimate base = estimate_entropy(probe_outputs(model, full, probe, sched), spec.mode);
    auto signed_ced = parallel_map(model.n_blocks(), [&](std::size_t i) {
        try {
            return estimate_entropy(probe_outputs(model, full.without(i), probe, sched), spec.mode).h - base.h;
        } catch (const DegenerateDistributionError& e) {
            throw DegenerateDistributionError(std::string(e.what()) + " (block " + std::to_string(i) + " dropped)");
        }
    });
    return make_ced_report(std::move(signed_ced), base, spec);
}

inline CedReport compute_ced(const VelocityModel& model, const Dataset& ds, const ProbeSpec& spec,
                             const TimeSchedule& sched) {
    return compute_ced(model, make_ced_probe(ds, spec), spec, sched);
}

// Disables the n_drop blocks with the smallest |CED|.
inline SubnetMask select_prunable(const CedReport& report, std::size_t n_drop) {
    const std::size_t n = report.blocks.size();
    if (n_drop >= n) throw PreconditionError("select_prunable: n_drop must be < n_blocks (cannot drop every block)");
    std::vector<bool> active(n, true);
    for (std::size_t k = 0; k < n_drop; ++k) active[report.ranking[k]] = false;
    return SubnetMask(std::move(active));
}

// Validation-loss increase caused by bypassing each block, on a fixed batch.
inline std::vector<double> block_drop_loss_deltas(const VelocityModel& model, const FmBatch& batch,
                                                  const TimeSchedule& sched) {
    const SubnetMask full = model.full_mask();
    const double base = fm_loss_value(model, full, batch, sched);
    return parallel_map(model.n_blocks(),
                        [&](std::size_t i) { return fm_loss_value(model, full.without(i), batch, sched) - base; });
}

// CSV columns: block_index, signed_ced, abs_ced, rank (1 = pruned first).
inline void write_ced_csv(std::ostream& os, const CedReport& rep) {
    std::vector<std::size_t> rank_of(rep.blocks.size());
    for (std::size_t k = 0; k < rep.ranking.size(); ++k) rank_of[rep.ranking[k]] = k + 1;
    os << "block_index,signed_ced,abs_ced,rank\n";
    os.precision(17);
    for (std::size_t i = 0; i < rep.blocks.size(); ++i)
        os << i << ',' << rep.blocks[i].signed_ced << ',' << rep.blocks[i].abs_ced << ',' << rank_of[i] << '\n';
}

} // namespace entprune
