#pragma once

#include <cstdint>
#include <vector>

#include "gtprune/model.hpp"
#include "gtprune/prune_state.hpp"

namespace gtprune {

// Cubic gradual-pruning schedule parameters; t, t0, dt are epochs.
struct PruneSchedule {
    double p_i = 0.0;
    double p_f = 0.5;
    std::size_t t0 = 0;
    std::size_t m = 1;
    std::size_t dt = 1;
    double regrow_fraction = 0.1;

    void validate() const {
        check(p_i >= 0.0 && p_i <= p_f && p_f < 1.0, "schedule: need 0 <= p_i <= p_f < 1");
        check(m >= 1 && dt >= 1, "schedule: need m >= 1 and dt >= 1");
        check(regrow_fraction >= 0.0 && regrow_fraction <= 1.0, "schedule: regrow fraction in [0,1]");
    }
};

// p(t) = p_f + (p_i - p_f)(1 - (t - t0)/(m*dt))^3, clamped to p_i before t0
// and p_f after t0 + m*dt (the clamp keeps the endpoints exact).
double schedule_sparsity(std::size_t t, const PruneSchedule& sched);

// True every dt-th epoch from t0 on; past the ramp the scheduled value stays
// p_f, so later steps only swap masked/active entries (regrowth cadence).
bool is_prune_epoch(std::size_t t, const PruneSchedule& sched);

// Recomputes the mask: all ones, then zero the ceil(p*|W|) smallest-|w|
// entries (ties -> lower flat index).
void magnitude_prune(const std::vector<double>& w, std::vector<double>& mask, double p);

// Reactivate the ceil(fraction * #masked) masked entries with the largest
// |grad| (ties -> lower flat index). Returns the reactivated count.
std::size_t regrow_weights(const std::vector<double>& w, const std::vector<double>& grads,
                           std::vector<double>& mask, double fraction);

// Elementwise product behind the straight-through op, so the dense gradient
// stays measurable for regrowth.
ModelParams apply_weight_masks(const ModelParams& params, const WeightMaskSet& masks);

double mask_sparsity(const std::vector<double>& mask);

}  // namespace gtprune
