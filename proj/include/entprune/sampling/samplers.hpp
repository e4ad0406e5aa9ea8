#pragma once

// Reverse-time samplers for the linear interpolant x_t = (1 - t) x + t eps.
//
// ODE (probability flow): dx/dt = v(x, t), integrated from t = 1 to t = 0 with
// uniform Euler steps: x <- x - h v(x, t).
//
// SDE: the marginal-preserving family dx = [v + w/2 s] dt + sqrt(w) dW run in
// reverse time gives the Euler-Maruyama step
//   x <- x - h (v - w/2 s) + sqrt(w h) z.
// For this interpolant E[eps | x_t] = x_t + (1 - t) v, so the score is
// s = -(x_t + (1 - t) v) / t. The diffusion is w(t) = noise_scale * t, which
// makes w/2 s = -noise_scale/2 (x_t + (1 - t) v) and removes the 1/t
// singularity. The last step is noise-free. With noise_scale = 0 the update is
// the ODE update exactly.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "entprune/flow/backbone.hpp"
#include "entprune/flow/time_schedule.hpp"

namespace entprune {

enum class SamplerKind { ode, sde };

struct SamplerConfig {
    SamplerKind kind = SamplerKind::ode;
    std::size_t steps = 50;
    double sde_noise_scale = 1.0;
    std::uint64_t seed = 0;

    void validate() const {
        detail::require(steps >= 1, "sampler steps must be >= 1");
        detail::require(sde_noise_scale >= 0.0, "sde_noise_scale must be >= 0");
    }
};

// Velocity field interface: v(x [n x d], t) -> [n x d].
template <class F>
concept VelocityField = requires(const F& f, const Tensor& x, double t) {
    { f(x, t) } -> std::convertible_to<Tensor>;
};

// Learned field: a model evaluated under a mask with fixed per-row labels.
struct ModelField {
    const VelocityModel* model;
    SubnetMask mask;
    std::vector<std::size_t> labels;

    Tensor operator()(const Tensor& x, double t) const {
        std::vector<double> tv(x.rows(), t);
        return model->predict(mask, x, tv, labels);
    }
};

namespace detail {

inline void check_state(const Tensor& x, std::size_t step) {
    if (!x.all_finite()) throw NumericError("sampler: non-finite state at step " + std::to_string(step));
}

} // namespace detail

// Integrates from a given x_1; one chain per row.
template <VelocityField F>
Tensor integrate_ode(const F& field, Tensor x, std::size_t steps) {
    detail::require(steps >= 1, "sampler steps must be >= 1");
    const double h = 1.0 / static_cast<double>(steps);
    for (std::size_t k = 0; k < steps; ++k) {
        const double t = 1.0 - static_cast<double>(k) * h;
        const Tensor v = field(x, t);
        for (std::size_t i = 0; i < x.size(); ++i) x[i] = x[i] - h * v[i];
        detail::check_state(x, k);
    }
    return x;
}

// Forward-time Euler from t = 0 to t = 1 (used for reversibility checks).
template <VelocityField F>
Tensor integrate_ode_forward(const F& field, Tensor x, std::size_t steps) {
    detail::require(steps >= 1, "sampler steps must be >= 1");
    const double h = 1.0 / static_cast<double>(steps);
    for (std::size_t k = 0; k < steps; ++k) {
        const double t = static_cast<double>(k) * h;
        const Tensor v = field(x, t);
        for (std::size_t i = 0; i < x.size(); ++i) x[i] = x[i] + h * v[i];
        detail::check_state(x, k);
    }
    return x;
}

// Per-chain noise streams seeded from (seed, chain index).
class ChainNoise {
  public:
    ChainNoise(std::uint64_t seed, std::size_t chains) {
        for (std::size_t c = 0; c < chains; ++c) {
            std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                              static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(c >> 32)};
            rngs_.emplace_back(seq);
        }
    }
    double draw(std::size_t chain) { return nd_(rngs_[chain]); }

  private:
    std::vector<std::mt19937_64> rngs_;
    std::normal_distribution<double> nd_{0.0, 1.0};
};

template <VelocityField F>
Tensor integrate_sde(const F& field, Tensor x, std::size_t steps, double noise_scale, std::uint64_t seed) {
    detail::require(steps >= 1, "sampler steps must be >= 1");
    if (noise_scale == 0.0) return integrate_ode(field, std::move(x), steps);
    const std::size_t n = x.rows(), d = x.cols();
    ChainNoise noise(seed ^ 0x5DEECE66DULL, n);
    const double h = 1.0 / static_cast<double>(steps);
    for (std::size_t k = 0; k < steps; ++k) {
        const double t = 1.0 - static_cast<double>(k) * h;
        const Tensor v = field(x, t);
        const bool last = k + 1 == steps;
        const double noise_std = last ? 0.0 : std::sqrt(noise_scale * t * h);
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t j = 0; j < d; ++j) {
                const std::size_t i = r * d + j;
                const double half_w_score = -0.5 * noise_scale * (x[i] + (1.0 - t) * v[i]);
                x[i] = x[i] - h * (v[i] - half_w_score);
                if (!last) x[i] += noise_std * noise.draw(r);
            }
        detail::check_state(x, k);
    }
    return x;
}

// Standard-normal starting points, one independent stream per chain.
inline Tensor initial_noise(std::size_t n, std::size_t d, std::uint64_t seed) {
    ChainNoise noise(seed, n);
    Tensor x({n, d});
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t j = 0; j < d; ++j) x(r, j) = noise.draw(r);
    return x;
}

inline Tensor sample_ode(const VelocityModel& model, const SubnetMask& mask, const std::vector<std::size_t>& labels,
                         const TimeSchedule&, const SamplerConfig& cfg) {
    cfg.validate();
    detail::require(cfg.kind == SamplerKind::ode, "sample_ode needs kind = ode");
    model.check_labels(labels);
    ModelField f{&model, mask, labels};
    return integrate_ode(f, initial_noise(labels.size(), model.config().data_dim, cfg.seed), cfg.steps);
}

inline Tensor sample_sde(const VelocityModel& model, const SubnetMask& mask, const std::vector<std::size_t>& labels,
                         const TimeSchedule&, const SamplerConfig& cfg) {
    cfg.validate();
    detail::require(cfg.kind == SamplerKind::sde, "sample_sde needs kind = sde");
    model.check_labels(labels);
    ModelField f{&model, mask, labels};
    return integrate_sde(f, initial_noise(labels.size(), model.config().data_dim, cfg.seed), cfg.steps,
                         cfg.sde_noise_scale, cfg.seed);
}

inline Tensor sample(const VelocityModel& model, const SubnetMask& mask, const std::vector<std::size_t>& labels,
                     const TimeSchedule& sched, const SamplerConfig& cfg) {
    return cfg.kind == SamplerKind::ode ? sample_ode(model, mask, labels, sched, cfg)
                                        : sample_sde(model, mask, labels, sched, cfg);
}

// Exact conditional velocity of the linear interpolant when every coordinate
// of the data is N(mu, s^2): with m_t = (1 - t) mu, var_t = (1 - t)^2 s^2 + t^2,
//   v(x, t) = -mu + (t - (1 - t) s^2) / var_t * (x - m_t).
// Its flow map sends x_1 to mu + s x_1.
struct GaussianOracleField {
    double mu = 0.0;
    double s = 1.0;

    Tensor operator()(const Tensor& x, double t) const {
        const double m = (1.0 - t) * mu;
        const double var = (1.0 - t) * (1.0 - t) * s * s + t * t;
        const double gain = (t - (1.0 - t) * s * s) / var;
        Tensor v(x.shape());
        for (std::size_t i = 0; i < x.size(); ++i) v[i] = -mu + gain * (x[i] - m);
        return v;
    }
};

} // namespace entprune
