#include "gtprune/weight_pruner.hpp"

#include <algorithm>
#include <cmath>

namespace gtprune {

double schedule_sparsity(std::size_t t, const PruneSchedule& sched) {
    sched.validate();
    const std::size_t span = sched.m * sched.dt;
    if (t <= sched.t0) return sched.p_i;
    if (t >= sched.t0 + span) return sched.p_f;
    const double frac = static_cast<double>(t - sched.t0) / static_cast<double>(span);
    const double c = 1.0 - frac;
    return sched.p_f + (sched.p_i - sched.p_f) * c * c * c;
}

bool is_prune_epoch(std::size_t t, const PruneSchedule& sched) {
    if (t < sched.t0) return false;
    return (t - sched.t0) % sched.dt == 0;
}

void magnitude_prune(const std::vector<double>& w, std::vector<double>& mask, double p) {
    check(p >= 0.0 && p < 1.0, "magnitude_prune: p must be in [0,1)");
    check(mask.size() == w.size(), "magnitude_prune: mask size mismatch");
    std::fill(mask.begin(), mask.end(), 1.0);
    const std::size_t count = ceil_frac(p, w.size());
    if (count == 0) return;

    std::vector<std::size_t> idx(w.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(count - 1), idx.end(),
                     [&](std::size_t a, std::size_t b) {
                         const double ma = std::abs(w[a]), mb = std::abs(w[b]);
                         if (ma != mb) return ma < mb;
                         return a < b;
                     });
    for (std::size_t i = 0; i < count; ++i) mask[idx[i]] = 0.0;
}

std::size_t regrow_weights(const std::vector<double>& w, const std::vector<double>& grads,
                           std::vector<double>& mask, double fraction) {
    check(mask.size() == w.size() && grads.size() == w.size(), "regrow_weights: size mismatch");
    check(fraction >= 0.0 && fraction <= 1.0, "regrow_weights: fraction must be in [0,1]");
    std::vector<std::size_t> masked;
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i] == 0.0) masked.push_back(i);
    const std::size_t count = ceil_frac(fraction, masked.size());
    if (count == 0) return 0;

    std::stable_sort(masked.begin(), masked.end(), [&](std::size_t a, std::size_t b) {
        const double ga = std::abs(grads[a]), gb = std::abs(grads[b]);
        if (ga != gb) return ga > gb;
        return a < b;
    });
    for (std::size_t i = 0; i < count; ++i) mask[masked[i]] = 1.0;
    return count;
}

ModelParams apply_weight_masks(const ModelParams& params, const WeightMaskSet& masks) {
    return effective_params(params, masks);
}

double mask_sparsity(const std::vector<double>& mask) {
    double zeros = 0.0;
    for (double v : mask) zeros += v == 0.0 ? 1.0 : 0.0;
    return zeros / static_cast<double>(mask.size());
}

}  // namespace gtprune
