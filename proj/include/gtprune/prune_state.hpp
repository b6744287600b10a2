#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "gtprune/tensor.hpp"

namespace gtprune {

// Learnable token-selection state (scores come from a one-layer GCN over a
// stop-gradient copy of the embeddings; c=2 keep/drop channels).
struct TokenPruneConfig {
    bool active = false;
    double keep_ratio = 1.0;
    double score_drop_rate = 0.0;  // p_s
    double tau = 1.0;              // Gumbel-Softmax temperature
    std::size_t stage = 0;         // prune after transformer block `stage`
    bool epoch_frozen = false;
    Tensor scorer_w;               // hidden_dim x 2
};

// Per-layer head activity bits, 1 = active.
struct HeadMask {
    std::vector<std::vector<int>> bits;

    static HeadMask identity(std::size_t layers, std::size_t heads) {
        HeadMask m;
        m.bits.assign(layers, std::vector<int>(heads, 1));
        return m;
    }
    std::size_t inactive_count() const {
        std::size_t c = 0;
        for (const auto& l : bits)
            for (int b : l) c += b == 0 ? 1 : 0;
        return c;
    }
    std::size_t total() const {
        std::size_t c = 0;
        for (const auto& l : bits) c += l.size();
        return c;
    }
};

// Sublayer activity bits. The first GNN layer is the input projection and is
// not prunable; its bit stays 1.
struct LayerMask {
    std::vector<int> gnn;  // per GNN layer
    std::vector<int> mha;  // per transformer layer
    std::vector<int> ffn;  // per transformer layer

    static LayerMask identity(std::size_t gnn_layers, std::size_t tf_layers) {
        LayerMask m;
        m.gnn.assign(gnn_layers, 1);
        m.mha.assign(tf_layers, 1);
        m.ffn.assign(tf_layers, 1);
        return m;
    }
    // Prunable sublayers: every sublayer except gnn[0].
    std::size_t prunable_count() const {
        return (gnn.empty() ? 0 : gnn.size() - 1) + mha.size() + ffn.size();
    }
    std::size_t dropped_count() const {
        std::size_t c = 0;
        for (int b : gnn) c += b == 0 ? 1 : 0;
        for (int b : mha) c += b == 0 ? 1 : 0;
        for (int b : ffn) c += b == 0 ? 1 : 0;
        return c;
    }
};

// Non-differentiable binary masks per prunable weight tensor, keyed by the
// parameter name. Values are 0.0/1.0 aligned with the flat weight layout.
struct WeightMaskSet {
    bool active = false;
    std::map<std::string, std::vector<double>> masks;

    double density(const std::string& name) const {
        auto it = masks.find(name);
        if (it == masks.end()) return 1.0;
        double ones = 0.0;
        for (double v : it->second) ones += v;
        return ones / static_cast<double>(it->second.size());
    }
};

// The four mask families. Exactly one pruner drives a run, but the model
// forward consumes all of them uniformly (the inactive ones are identities).
struct PruneState {
    TokenPruneConfig token;
    HeadMask head;
    LayerMask layer;
    WeightMaskSet weight;

    static PruneState identity(std::size_t gnn_layers, std::size_t tf_layers, std::size_t heads) {
        PruneState s;
        s.head = HeadMask::identity(tf_layers, heads);
        s.layer = LayerMask::identity(gnn_layers, tf_layers);
        return s;
    }
};

}  // namespace gtprune
