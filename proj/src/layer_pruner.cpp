#include "gtprune/layer_pruner.hpp"

#include <algorithm>
#include <limits>

namespace gtprune {

std::vector<std::string> sublayer_names(const ModelConfig& cfg) {
    std::vector<std::string> names;
    if (cfg.stack_style == StackStyle::prelude) {
        for (std::size_t i = 0; i < cfg.num_gnn_layers; ++i) names.push_back("gnn" + std::to_string(i));
        for (std::size_t l = 0; l < cfg.num_transformer_layers; ++l) {
            names.push_back("mha" + std::to_string(l));
            names.push_back("ffn" + std::to_string(l));
        }
    } else {
        for (std::size_t l = 0; l < cfg.num_transformer_layers; ++l) {
            names.push_back("gnn" + std::to_string(l));
            names.push_back("mha" + std::to_string(l));
            names.push_back("ffn" + std::to_string(l));
        }
    }
    return names;
}

namespace {

std::pair<char, std::size_t> parse_sublayer(const std::string& name) {
    if (name.rfind("gnn", 0) == 0) return {'g', std::stoul(name.substr(3))};
    if (name.rfind("mha", 0) == 0) return {'m', std::stoul(name.substr(3))};
    if (name.rfind("ffn", 0) == 0) return {'f', std::stoul(name.substr(3))};
    fail("unknown sublayer name '" + name + "'");
}

}  // namespace

int layer_mask_bit(const LayerMask& m, const std::string& name) {
    auto [kind, idx] = parse_sublayer(name);
    switch (kind) {
        case 'g': return m.gnn[idx];
        case 'm': return m.mha[idx];
        default: return m.ffn[idx];
    }
}

void set_layer_mask_bit(LayerMask& m, const std::string& name, int bit) {
    auto [kind, idx] = parse_sublayer(name);
    switch (kind) {
        case 'g': m.gnn[idx] = bit; break;
        case 'm': m.mha[idx] = bit; break;
        default: m.ffn[idx] = bit; break;
    }
}

LayerMask sample_layer_mask(const ModelConfig& cfg, double keep_prob, Rng& rng) {
    check(keep_prob > 0.0 && keep_prob <= 1.0, "sample_layer_mask: q must be in (0,1]");
    LayerMask m = LayerMask::identity(cfg.num_gnn_layers, cfg.num_transformer_layers);
    for (const std::string& name : sublayer_names(cfg)) {
        if (name == "gnn0") continue;  // input projection stays
        set_layer_mask_bit(m, name, rng.bernoulli(keep_prob) ? 1 : 0);
    }
    return m;
}

Tensor apply_layer_mask(const Tensor& h, int bit, const std::function<Tensor(const Tensor&)>& sublayer) {
    return bit ? sublayer(h) : h;
}

double validation_loss(const ModelConfig& cfg, const ModelParams& params, const PruneState& state,
                       const std::vector<Graph>& graphs, const std::vector<std::size_t>& indices,
                       std::size_t batch_size) {
    check(!indices.empty(), "validation_loss: empty split");
    NoGradGuard guard;
    ModelParams eff = effective_params(params, state.weight);
    double total = 0.0;
    for (const Batch& batch : make_batches(graphs, indices, batch_size, std::nullopt)) {
        ForwardOptions opts;
        opts.training = false;
        Tensor logits = forward_batch(cfg, eff, state, batch, opts);
        total += cross_entropy_with_logits(logits, batch.labels, Reduction::sum).item();
    }
    return total / static_cast<double>(indices.size());
}

LayerMask finalize_layer_prune(const ModelConfig& cfg, const ModelParams& params,
                               const PruneState& state, const std::vector<Graph>& graphs,
                               const std::vector<std::size_t>& val_indices, double target_sparsity,
                               LayerFinalize mode, std::size_t batch_size, Rng& rng) {
    check(target_sparsity >= 0.0 && target_sparsity < 1.0,
          "finalize_layer_prune: sparsity must be in [0,1)");
    LayerMask mask = LayerMask::identity(cfg.num_gnn_layers, cfg.num_transformer_layers);
    const std::size_t prunable = mask.prunable_count();
    const std::size_t to_drop = ceil_frac(target_sparsity, prunable);
    check(to_drop <= prunable, "finalize_layer_prune: drop count exceeds prunable sublayers");
    if (to_drop == 0) return mask;

    std::vector<std::string> candidates;
    for (const std::string& name : sublayer_names(cfg))
        if (name != "gnn0") candidates.push_back(name);

    if (mode == LayerFinalize::random) {
        rng.shuffle(candidates);
        for (std::size_t i = 0; i < to_drop; ++i) set_layer_mask_bit(mask, candidates[i], 0);
        return mask;
    }

    // greedy one-sublayer ablation; candidates are in depth order, so on a
    // tie the later (deeper) candidate wins via >=
    for (std::size_t step = 0; step < to_drop; ++step) {
        double best_loss = std::numeric_limits<double>::infinity();
        std::string best;
        for (const std::string& name : candidates) {
            if (layer_mask_bit(mask, name) == 0) continue;
            PruneState trial = state;
            trial.layer = mask;
            set_layer_mask_bit(trial.layer, name, 0);
            const double loss = validation_loss(cfg, params, trial, graphs, val_indices, batch_size);
            if (loss <= best_loss) {
                best_loss = loss;
                best = name;
            }
        }
        check(!best.empty(), "finalize_layer_prune: no candidate available");
        set_layer_mask_bit(mask, best, 0);
    }
    return mask;
}

}  // namespace gtprune
