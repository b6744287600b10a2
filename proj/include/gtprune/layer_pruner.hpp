#pragma once

#include <functional>
#include <string>
#include <vector>

#include "gtprune/graph_data.hpp"
#include "gtprune/model.hpp"
#include "gtprune/prune_state.hpp"
#include "gtprune/rng.hpp"

namespace gtprune {

// Sublayer identifiers in stack depth order ("gnn0", "mha0", "ffn0", ...).
std::vector<std::string> sublayer_names(const ModelConfig& cfg);

int layer_mask_bit(const LayerMask& m, const std::string& name);
void set_layer_mask_bit(LayerMask& m, const std::string& name, int bit);

// I.i.d. Bernoulli(q) bit per prunable sublayer, drawn per training step;
// gnn0 (the input projection) is always 1.
LayerMask sample_layer_mask(const ModelConfig& cfg, double keep_prob, Rng& rng);

// bit=1 applies the sublayer, bit=0 is an exact identity.
Tensor apply_layer_mask(const Tensor& h, int bit, const std::function<Tensor(const Tensor&)>& sublayer);

enum class LayerFinalize { greedy, random };

// Fixed mask for the exported model: drop ceil(s * #prunable) sublayers.
// greedy = repeated one-sublayer ablation minimizing validation loss (ties
// drop the deeper sublayer); random = freeze one uniformly sampled set.
LayerMask finalize_layer_prune(const ModelConfig& cfg, const ModelParams& params,
                               const PruneState& state, const std::vector<Graph>& graphs,
                               const std::vector<std::size_t>& val_indices, double target_sparsity,
                               LayerFinalize mode, std::size_t batch_size, Rng& rng);

// Mean cross-entropy over the given split with a fixed mask (eval mode).
double validation_loss(const ModelConfig& cfg, const ModelParams& params, const PruneState& state,
                       const std::vector<Graph>& graphs, const std::vector<std::size_t>& indices,
                       std::size_t batch_size);

}  // namespace gtprune
