#pragma once

// Zero-shot adaptive progressive pruning.
//
// Blocks are pruned in a fixed priority order (lowest |CED| first). Stage l of
// k aims at full_params * (1 - r l / k). Each stage proposes CED-ordered
// prefix candidates, scores them on the inherited weights with the NTK
// condition number and ZiCo, picks the best rank-vote total, and trains the
// winner for S / k steps. Weights carry over between stages unchanged.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "entprune/entropy/ced.hpp"
#include "entprune/proxies/ntk.hpp"
#include "entprune/proxies/ranking.hpp"
#include "entprune/proxies/zico.hpp"

namespace entprune {

enum class PruneOrder { lowest_ced_first, highest_ced_first };

struct PruneConfig {
    double target_ratio = 0.5;
    std::size_t stages = 4;
    std::size_t total_steps = 800;
    double gamma = kDefaultGamma;
    std::size_t candidate_width = 3;
    PruneOrder order = PruneOrder::lowest_ced_first;

    TrainOptions train; // `steps` is overridden per stage
    std::size_t ntk_probe = 16;
    std::size_t zico_batches = 2;
    std::size_t zico_batch = 64;
    ProbeSpec ced_probe;

    std::size_t steps_per_stage() const { return total_steps / stages; }

    void validate() const {
        detail::require(target_ratio >= 0.0 && target_ratio < 1.0, "target_ratio must lie in [0, 1)");
        detail::require(stages >= 1, "stages must be >= 1");
        detail::require(total_steps >= stages, "total_steps must be >= stages");
        detail::require(total_steps % stages == 0, "total_steps must be divisible by stages");
        detail::require(gamma >= 0.0, "gamma must be >= 0");
        detail::require(ntk_probe >= 2, "ntk probe needs at least 2 samples");
        detail::require(zico_batches >= 2, "zico needs at least 2 batches");
    }
};

inline double stage_target_params(std::size_t full_params, double ratio, std::size_t stage, std::size_t stages) {
    return static_cast<double>(full_params) * (1.0 - ratio * static_cast<double>(stage) / static_cast<double>(stages));
}

// Blocks in pruning order.
inline std::vector<std::size_t> pruning_priority(const CedReport& ced, PruneOrder order) {
    std::vector<std::size_t> p = ced.ranking;
    if (order == PruneOrder::highest_ced_first) std::reverse(p.begin(), p.end());
    return p;
}

// `prev` with its first `count` still-active blocks (in priority order) disabled.
inline SubnetMask drop_prefix(const SubnetMask& prev, const std::vector<std::size_t>& priority, std::size_t count) {
    std::vector<bool> a = prev.flags();
    std::size_t dropped = 0;
    for (std::size_t b : priority) {
        if (dropped == count) break;
        if (a.at(b)) {
            a[b] = false;
            ++dropped;
        }
    }
    detail::require(dropped == count, "drop_prefix: not enough active blocks");
    return SubnetMask(std::move(a));
}

// Number of further blocks to drop from `prev` whose parameter count lands
// nearest to `target` (ties toward more pruning). Blocks are indivisible, so
// the result is within half a block of the target.
inline std::size_t nearest_drop_count(const BackboneConfig& cfg, const SubnetMask& prev, double target) {
    const std::size_t active = prev.n_active();
    const double shared = static_cast<double>(shared_param_count(cfg));
    const double block = static_cast<double>(block_param_count(cfg));
    std::size_t best = 0;
    double best_gap = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c <= active; ++c) {
        const double p = shared + static_cast<double>(active - c) * block;
        const double gap = std::abs(p - target);
        if (gap <= best_gap) {
            best_gap = gap;
            best = c;
        }
    }
    if (best == active)
        throw PreconditionError("target ratio too aggressive for block granularity: target " +
                                std::to_string(static_cast<long long>(target)) + " params needs every block removed");
    return best;
}

struct CandidateOptions {
    bool final_stage = false;
    // Cap on the number of additional drops (keeps later budgets reachable).
    std::size_t max_drop = std::numeric_limits<std::size_t>::max();
};

// Candidate set for one stage: drop the next 0..width blocks in priority order,
// plus the count that meets the stage target. At the final stage only the
// target-meeting count is offered.
inline std::vector<SubnetMask> generate_candidates(const BackboneConfig& cfg, const std::vector<std::size_t>& priority,
                                                   const SubnetMask& prev, double stage_target_params, std::size_t width,
                                                   const CandidateOptions& opt = {}) {
    detail::require(prev.size() == cfg.n_blocks, "generate_candidates: mask length mismatch");
    const std::size_t active = prev.n_active();
    const std::size_t required = nearest_drop_count(cfg, prev, stage_target_params);
    const std::size_t limit = std::min(opt.max_drop, active - 1);
    std::set<std::size_t> counts;
    if (opt.final_stage) {
        counts.insert(std::min(required, limit));
    } else {
        for (std::size_t c = 0; c <= std::min(width, limit); ++c) counts.insert(c);
        counts.insert(std::min(required, limit));
    }
    std::vector<SubnetMask> out;
    const std::size_t prev_params = param_count(cfg, prev);
    for (std::size_t c : counts) {
        SubnetMask m = drop_prefix(prev, priority, c);
        if (param_count(cfg, m) <= prev_params) out.push_back(std::move(m));
    }
    return out;
}

inline std::vector<SubnetMask> generate_candidates(const BackboneConfig& cfg, const CedReport& ced,
                                                   const SubnetMask& prev, double stage_target_params, std::size_t width,
                                                   const CandidateOptions& opt = {}) {
    return generate_candidates(cfg, ced.ranking, prev, stage_target_params, width, opt);
}

struct StageRecord {
    std::size_t stage = 0;
    double target_params = 0.0;
    SubnetMask mask;
    ProxyScores proxy_scores;
    TrainTrace trace;
    std::size_t params_after = 0;
    std::vector<std::string> notes; // e.g. degenerate proxy flags
};

struct PruningSchedule {
    CedReport ced;
    std::vector<std::size_t> priority;
    std::size_t full_params = 0;
    std::vector<StageRecord> stages;

    const SubnetMask& final_mask() const { return stages.back().mask; }
    std::size_t final_params() const { return stages.back().params_after; }
};

// Observation points around each stage's training; the model is read-only there.
struct ScheduleHooks {
    std::function<void(std::size_t stage, const VelocityModel&, const SubnetMask&)> before_training;
    std::function<void(std::size_t stage, const VelocityModel&, const SubnetMask&)> after_training;
};

// Proxy evaluation of each candidate on the current (inherited) weights.
template <class Rng>
ProxyScores score_candidates(const VelocityModel& model, const std::vector<SubnetMask>& candidates,
                             const PruneConfig& cfg, const Dataset& ds, const TimeSchedule& sched, Rng& rng,
                             std::vector<std::string>* notes = nullptr) {
    // One kappa probe and one set of ZiCo batches, drawn independently, shared by all candidates.
    const NtkProbe probe = make_ntk_probe(ds, cfg.ntk_probe, sched, rng);
    const auto batches = make_zico_batches(ds, cfg.zico_batches, cfg.zico_batch, rng);
    auto raw = parallel_map(candidates.size(), [&](std::size_t i) {
        const NtkSpectrum ntk = ntk_condition(model, candidates[i], probe);
        const ZicoScore z = zico(model, candidates[i], batches, sched);
        return RawCandidate{candidates[i], ntk.kappa, z.value, model.parameter_count(candidates[i]), ntk.degenerate,
                            z.fully_degenerate()};
    });
    if (notes)
        for (const auto& r : raw) {
            if (r.kappa_degenerate) notes->push_back("candidate " + r.mask.bits() + ": degenerate NTK spectrum");
            if (r.zico_degenerate) notes->push_back("candidate " + r.mask.bits() + ": degenerate ZiCo score");
        }
    return rank_candidates(raw, cfg.gamma);
}

template <class Rng>
StageRecord run_stage(VelocityModel& model, const SubnetMask& prev, const std::vector<std::size_t>& priority,
                      const PruneConfig& cfg, std::size_t stage_index, std::size_t full_params, std::size_t max_total_drop,
                      const Dataset& ds, const TimeSchedule& sched, Rng& rng, const ScheduleHooks& hooks = {}) {
    detail::require(stage_index >= 1 && stage_index <= cfg.stages, "run_stage: stage_index outside [1, k]");
    StageRecord rec;
    rec.stage = stage_index;
    rec.target_params = stage_target_params(full_params, cfg.target_ratio, stage_index, cfg.stages);
    const std::size_t already = prev.size() - prev.n_active();
    CandidateOptions opt;
    opt.final_stage = stage_index == cfg.stages;
    opt.max_drop = max_total_drop - std::min(max_total_drop, already);
    const auto candidates = generate_candidates(model.config(), priority, prev, rec.target_params, cfg.candidate_width, opt);
    rec.proxy_scores = score_candidates(model, candidates, cfg, ds, sched, rng, &rec.notes);
    rec.mask = rec.proxy_scores.winner().raw.mask;

    if (hooks.before_training) hooks.before_training(stage_index, model, rec.mask);
    TrainOptions t = cfg.train;
    t.steps = cfg.steps_per_stage();
    rec.trace = train(model, rec.mask, ds, t, sched, rng);
    if (hooks.after_training) hooks.after_training(stage_index, model, rec.mask);
    rec.params_after = model.parameter_count(rec.mask);
    return rec;
}

// Total number of blocks the final budget removes when pruning from the full model.
inline std::size_t final_drop_total(const BackboneConfig& cfg, std::size_t full_params, double ratio) {
    return nearest_drop_count(cfg, SubnetMask::full(cfg.n_blocks), stage_target_params(full_params, ratio, 1, 1));
}

template <class Rng>
PruningSchedule run_progressive(VelocityModel& model, const CedReport& ced, const PruneConfig& cfg, const Dataset& ds,
                                const TimeSchedule& sched, Rng& rng, const ScheduleHooks& hooks = {}) {
    cfg.validate();
    PruningSchedule s;
    s.ced = ced;
    s.priority = pruning_priority(ced, cfg.order);
    const SubnetMask full = model.full_mask();
    s.full_params = model.parameter_count(full);
    const std::size_t max_drop = final_drop_total(model.config(), s.full_params, cfg.target_ratio);
    SubnetMask prev = full;
    for (std::size_t l = 1; l <= cfg.stages; ++l) {
        s.stages.push_back(run_stage(model, prev, s.priority, cfg, l, s.full_params, max_drop, ds, sched, rng, hooks));
        prev = s.stages.back().mask;
    }
    return s;
}

// CED computed once on the initial model, then the progressive loop.
template <class Rng>
PruningSchedule run_progressive(VelocityModel& model, const PruneConfig& cfg, const Dataset& ds, const Dataset& ced_data,
                                const TimeSchedule& sched, Rng& rng, const ScheduleHooks& hooks = {}) {
    const CedReport ced = compute_ced(model, ced_data, cfg.ced_probe, sched);
    return run_progressive(model, ced, cfg, ds, sched, rng, hooks);
}

// Baseline: every target block removed at step 0, then S training steps.
template <class Rng>
PruningSchedule run_oneshot(VelocityModel& model, const CedReport& ced, const PruneConfig& cfg, const Dataset& ds,
                            const TimeSchedule& sched, Rng& rng, const ScheduleHooks& hooks = {}) {
    cfg.validate();
    PruningSchedule s;
    s.ced = ced;
    s.priority = pruning_priority(ced, cfg.order);
    const SubnetMask full = model.full_mask();
    s.full_params = model.parameter_count(full);
    const std::size_t drop = final_drop_total(model.config(), s.full_params, cfg.target_ratio);
    StageRecord rec;
    rec.stage = 1;
    rec.target_params = stage_target_params(s.full_params, cfg.target_ratio, 1, 1);
    rec.mask = drop_prefix(full, s.priority, drop);
    rec.proxy_scores = rank_candidates({RawCandidate{rec.mask, 0.0, 0.0, model.parameter_count(rec.mask)}}, cfg.gamma);
    if (hooks.before_training) hooks.before_training(1, model, rec.mask);
    TrainOptions t = cfg.train;
    t.steps = cfg.total_steps;
    rec.trace = train(model, rec.mask, ds, t, sched, rng);
    if (hooks.after_training) hooks.after_training(1, model, rec.mask);
    rec.params_after = model.parameter_count(rec.mask);
    s.stages.push_back(std::move(rec));
    return s;
}

} // namespace entprune
