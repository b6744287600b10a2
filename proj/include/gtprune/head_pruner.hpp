#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gtprune/graph_data.hpp"
#include "gtprune/model.hpp"
#include "gtprune/prune_state.hpp"

namespace gtprune {

// Per-(layer, head) importance S_H = mean over examples of |sum(Z * dL/dZ)|
// and the l1 regrow criterion g = mean |dL/dZ|_1. Accumulated per example in
// dataset order, so scores are exactly invariant to batch order.
struct HeadScoreBoard {
    std::vector<std::vector<double>> s;
    std::vector<std::vector<double>> g;
    std::size_t examples = 0;
};

// One pass over the given graphs. Scoring is per-example (each graph gets its
// own unpadded forward/backward), which keeps the accumulated scores exactly
// independent of batch composition. lift_masks runs the forward with every
// head active, for regrow measurement.
HeadScoreBoard head_importance(const ModelConfig& cfg, const ModelParams& params,
                               const PruneState& state, const std::vector<Graph>& graphs,
                               const std::vector<std::size_t>& indices, bool lift_masks = false);

// Globally deactivate the lowest-S_H active heads until ceil(s * L * N_h)
// heads are inactive; every layer keeps at least one active head. Ties break
// by (layer, head).
HeadMask prune_heads(const HeadScoreBoard& scores, double target_sparsity, const HeadMask& current);

// Reactivate the r inactive heads with the largest regrow criterion and
// deactivate an equal number of lowest-S_H pre-existing actives, so the
// sparsity is unchanged.
HeadMask regrow_heads(const HeadScoreBoard& scores, std::size_t r, const HeadMask& current);

void dump_head_scoreboard_csv(const std::string& path, const HeadScoreBoard& board,
                              const HeadMask& mask, std::size_t step, bool append);

}  // namespace gtprune
