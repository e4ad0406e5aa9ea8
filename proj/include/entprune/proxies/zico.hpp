#pragma once

// ZiCo gradient statistic, negated so that lower is better:
//   value = - sum_l ln( sum_{w in layer l} mean_D|dL/dw| / std_D|dL/dw| )
// One layer is one named parameter tensor. Mean and (population) standard
// deviation run over the D mini-batch gradients of each scalar parameter.
// Parameters with zero spread are skipped; a layer where every parameter has
// zero spread is flagged degenerate and left out of the sum.

#include <cmath>
#include <string>
#include <vector>

#include "entprune/flow/flow_matching.hpp"

namespace entprune {

struct ZicoLayer {
    std::string layer_name;
    double sum_ratio = 0.0;
    bool degenerate = false;
};

struct ZicoScore {
    double value = 0.0;
    std::vector<ZicoLayer> per_layer;
    std::size_t d_batches = 0;
    std::size_t degenerate_layers = 0;
    std::string std_convention = "population";

    bool fully_degenerate() const { return degenerate_layers == per_layer.size(); }
};

// `grads[d]` is the gradient map of batch d; `layers` fixes the summation order.
inline ZicoScore zico_from_gradients(const std::vector<GradientMap>& grads, const std::vector<std::string>& layers) {
    detail::require(grads.size() >= 2, "zico needs D >= 2 gradient snapshots");
    const double D = static_cast<double>(grads.size());
    ZicoScore s;
    s.d_batches = grads.size();
    for (const auto& name : layers) {
        const std::size_t n = grads.front().at(name).size();
        double sum_ratio = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            double mean = 0.0;
            for (const auto& g : grads) mean += std::abs(g.at(name)[k]);
            mean /= D;
            double var = 0.0;
            for (const auto& g : grads) {
                const double dev = std::abs(g.at(name)[k]) - mean;
                var += dev * dev;
            }
            const double sd = std::sqrt(var / D);
            if (sd > 0.0) sum_ratio += mean / sd;
        }
        ZicoLayer layer{name, sum_ratio, !(sum_ratio > 0.0)};
        if (layer.degenerate)
            ++s.degenerate_layers;
        else
            s.value -= std::log(sum_ratio);
        s.per_layer.push_back(std::move(layer));
    }
    return s;
}

// Flow-matching gradients of the active parameters on each batch; weights are not touched.
inline ZicoScore zico(const VelocityModel& model, const SubnetMask& mask, const std::vector<FmBatch>& batches,
                      const TimeSchedule& sched) {
    detail::require(batches.size() >= 2, "zico needs D >= 2 batches");
    std::vector<GradientMap> grads;
    for (const auto& b : batches) {
        Tape tape;
        grads.push_back(tape.backward(fm_loss(tape, model, mask, b, sched)));
    }
    return zico_from_gradients(grads, model.active_parameter_names(mask));
}

template <class Rng>
std::vector<FmBatch> make_zico_batches(const Dataset& ds, std::size_t d, std::size_t batch, Rng& rng) {
    std::vector<FmBatch> out;
    for (std::size_t i = 0; i < d; ++i) out.push_back(sample_fm_batch(ds, batch, rng));
    return out;
}

} // namespace entprune
