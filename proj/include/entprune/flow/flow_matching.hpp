#pragma once

#include <cmath>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "entprune/flow/backbone.hpp"
#include "entprune/flow/datasets.hpp"
#include "entprune/flow/time_schedule.hpp"

namespace entprune {

struct NoisedBatch {
    Tensor x_t;
    Tensor v_true;
};

// x_t = alpha(t) x + sigma(t) noise;  v = alpha'(t) x + sigma'(t) noise, row-wise.
inline NoisedBatch forward_process(const Tensor& x, std::span<const double> t, const Tensor& noise,
                                   const TimeSchedule& sched) {
    if (x.shape() != noise.shape()) throw ShapeError("forward_process: x and noise shapes differ");
    detail::require(x.rank() == 2 && t.size() == x.rows(), "forward_process: one t per row required");
    NoisedBatch out{Tensor(x.shape()), Tensor(x.shape())};
    const std::size_t d = x.cols();
    for (std::size_t r = 0; r < x.rows(); ++r) {
        const double tr = t[r];
        if (!(tr >= 0.0 && tr <= 1.0)) throw PreconditionError("forward_process: t outside [0,1]");
        const double a = sched.alpha(tr), s = sched.sigma(tr), ad = sched.alpha_dot(tr), sd = sched.sigma_dot(tr);
        for (std::size_t j = 0; j < d; ++j) {
            out.x_t(r, j) = a * x(r, j) + s * noise(r, j);
            out.v_true(r, j) = ad * x(r, j) + sd * noise(r, j);
        }
    }
    return out;
}

// Clean samples together with the (t, noise) draws that define one loss evaluation.
struct FmBatch {
    Tensor x;
    std::vector<std::size_t> labels;
    std::vector<double> t;
    Tensor noise;
};

// Draws t ~ U(0,1) and noise ~ N(0, I) for the given clean batch.
template <class Rng>
FmBatch make_fm_batch(Tensor x, std::vector<std::size_t> labels, Rng& rng) {
    detail::require(x.rank() == 2 && x.rows() > 0, "fm batch must be nonempty");
    FmBatch b{std::move(x), std::move(labels), {}, {}};
    std::uniform_real_distribution<double> ud(0.0, 1.0);
    b.t.resize(b.x.rows());
    for (auto& v : b.t) v = ud(rng);
    b.noise = Tensor::randn(b.x.shape(), rng);
    return b;
}

// Uniformly resamples `batch` rows of `ds` with replacement and draws (t, noise).
template <class Rng>
FmBatch sample_fm_batch(const Dataset& ds, std::size_t batch, Rng& rng) {
    detail::require(batch > 0 && ds.size() > 0, "fm batch must be nonempty");
    std::uniform_int_distribution<std::size_t> pick(0, ds.size() - 1);
    Tensor x({batch, ds.dim()});
    std::vector<std::size_t> labels(batch);
    for (std::size_t i = 0; i < batch; ++i) {
        const std::size_t k = pick(rng);
        for (std::size_t j = 0; j < ds.dim(); ++j) x(i, j) = ds.x(k, j);
        labels[i] = ds.labels[k];
    }
    return make_fm_batch(std::move(x), std::move(labels), rng);
}

inline Var mse(Var pred, const Tensor& target) {
    Var tgt = pred.tape().constant(target, "target");
    return ops::mean(ops::square(ops::sub(pred, tgt)));
}

// Flow-matching regression loss on a prepared batch, recorded on `tape`.
inline Var fm_loss(Tape& tape, const VelocityModel& model, const SubnetMask& mask, const FmBatch& batch,
                   const TimeSchedule& sched, const std::string& param_prefix = "") {
    NoisedBatch nb = forward_process(batch.x, batch.t, batch.noise, sched);
    Var pred = model.forward(tape, mask, nb.x_t, batch.t, batch.labels, param_prefix);
    return mse(pred, nb.v_true);
}

inline double fm_loss_value(const VelocityModel& model, const SubnetMask& mask, const FmBatch& batch,
                            const TimeSchedule& sched) {
    Tape tape;
    return fm_loss(tape, model, mask, batch, sched).value().item();
}

template <class Rng>
double fm_loss_value(const VelocityModel& model, const SubnetMask& mask, const Dataset& ds, std::size_t batch,
                     const TimeSchedule& sched, Rng& rng) {
    return fm_loss_value(model, mask, sample_fm_batch(ds, batch, rng), sched);
}

struct TrainOptions {
    std::size_t steps = 100;
    double lr = 0.05;
    double momentum = 0.9;
    std::size_t batch = 64;
    double clip_norm = 1.0; // global gradient-norm clip; <= 0 disables
};

struct TrainTrace {
    std::vector<double> loss;
};

// SGD with momentum. Only shared parameters and those of active blocks are
// read, differentiated, or written; inactive blocks stay bit-identical.
template <class Rng>
TrainTrace train(VelocityModel& model, const SubnetMask& mask, const Dataset& ds, const TrainOptions& opt,
                 const TimeSchedule& sched, Rng& rng) {
    detail::require(opt.steps >= 1, "train: steps must be >= 1");
    detail::require(opt.lr > 0.0, "train: lr must be positive");
    model.check_mask(mask);
    const auto names = model.active_parameter_names(mask);
    std::unordered_map<std::string, Tensor> velocity;
    for (const auto& n : names) velocity.emplace(n, Tensor(model.params().at(n).shape()));

    TrainTrace trace;
    trace.loss.reserve(opt.steps);
    for (std::size_t step = 0; step < opt.steps; ++step) {
        FmBatch batch = sample_fm_batch(ds, opt.batch, rng);
        Tape tape;
        double lv = 0.0;
        GradientMap grads;
        try {
            Var loss = fm_loss(tape, model, mask, batch, sched);
            lv = loss.value().item();
            if (!std::isfinite(lv)) throw NumericError("non-finite loss");
            grads = tape.backward(loss);
        } catch (const NumericError& e) {
            throw NumericError("train: step " + std::to_string(step) + ": " + e.what());
        }
        double scale = 1.0;
        if (opt.clip_norm > 0.0) {
            double sq = 0.0;
            for (const auto& [n, g] : grads)
                for (double v : g.data()) sq += v * v;
            const double norm = std::sqrt(sq);
            if (norm > opt.clip_norm) scale = opt.clip_norm / norm;
        }
        for (const auto& [n, g] : grads) {
            auto vel = velocity.at(n).data();
            auto p = model.params().at(n).data();
            const auto gv = g.data();
            for (std::size_t i = 0; i < p.size(); ++i) {
                vel[i] = opt.momentum * vel[i] + scale * gv[i];
                p[i] -= opt.lr * vel[i];
            }
        }
        trace.loss.push_back(lv);
    }
    return trace;
}

// Fixed validation batch: the same clean points, times, and noise for every mask.
template <class Rng>
FmBatch make_validation_batch(const Dataset& ds, std::size_t n, Rng& rng) {
    return sample_fm_batch(ds, n, rng);
}

} // namespace entprune
