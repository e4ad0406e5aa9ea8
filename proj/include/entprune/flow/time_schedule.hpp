#pragma once

#include "entprune/numerics/errors.hpp"

namespace entprune {

enum class ScheduleKind { linear_interpolant };

// Interpolant coefficients x_t = alpha(t) x + sigma(t) eps on t in [0, 1],
// with alpha(0) = sigma(1) = 1 and alpha(1) = sigma(0) = 0.
struct TimeSchedule {
    ScheduleKind kind = ScheduleKind::linear_interpolant;

    double alpha(double t) const { return 1.0 - t; }
    double sigma(double t) const { return t; }
    double alpha_dot(double) const { return -1.0; }
    double sigma_dot(double) const { return 1.0; }
};

} // namespace entprune
