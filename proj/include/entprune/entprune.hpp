#pragma once

#include "entprune/numerics/errors.hpp"
#include "entprune/numerics/tensor.hpp"
#include "entprune/numerics/autodiff.hpp"
#include "entprune/numerics/ops.hpp"
#include "entprune/numerics/linalg.hpp"
#include "entprune/numerics/parallel.hpp"
#include "entprune/numerics/stats.hpp"
#include "entprune/flow/time_schedule.hpp"
#include "entprune/flow/backbone.hpp"
#include "entprune/flow/datasets.hpp"
#include "entprune/flow/flow_matching.hpp"
#include "entprune/flow/checkpoint.hpp"
#include "entprune/entropy/entropy.hpp"
#include "entprune/entropy/ced.hpp"
#include "entprune/proxies/ntk.hpp"
#include "entprune/proxies/zico.hpp"
#include "entprune/proxies/ranking.hpp"
#include "entprune/scheduler/schedule.hpp"
#include "entprune/sampling/samplers.hpp"
#include "entprune/sampling/metrics.hpp"
#include "entprune/io/csv.hpp"
