#include "gtprune/head_pruner.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace gtprune {

HeadScoreBoard head_importance(const ModelConfig& cfg, const ModelParams& params,
                               const PruneState& state, const std::vector<Graph>& graphs,
                               const std::vector<std::size_t>& indices, bool lift_masks) {
    const std::size_t layers = cfg.num_transformer_layers;
    const std::size_t heads = cfg.num_heads;

    PruneState scoring_state = state;
    if (lift_masks) scoring_state.head = HeadMask::identity(layers, heads);

    // per-example values keyed by dataset index; the final mean runs in
    // sorted order so batching and visit order cannot change the result
    std::vector<std::vector<std::map<std::size_t, double>>> per_example_s(
        layers, std::vector<std::map<std::size_t, double>>(heads));
    auto per_example_g = per_example_s;

    ModelParams eff = effective_params(params, scoring_state.weight);
    for (std::size_t idx : indices) {
        const Graph& g = graphs[idx];
        BatchSlot slot;
        slot.n = g.n;
        slot.dataset_index = idx;
        slot.label = g.label;
        slot.features = g.features;
        slot.adj = g.adj;
        slot.validity.assign(g.n, 1.0);

        ForwardTrace trace;
        ForwardOptions opts;
        opts.training = false;
        Tensor logits = forward_slot(cfg, eff, scoring_state, slot, opts, &trace);
        backward(cross_entropy_with_logits(logits, {g.label}, Reduction::sum));

        for (std::size_t l = 0; l < layers; ++l) {
            if (trace.head_z[l].empty()) continue;  // layer-masked MHA sublayer
            for (std::size_t h = 0; h < heads; ++h) {
                const Tensor& z = trace.head_z[l][h];
                const auto& zv = z.value();
                const auto& zg = z.grad();
                double dot = 0.0, l1 = 0.0;
                for (std::size_t i = 0; i < zv.size(); ++i) {
                    dot += zv[i] * zg[i];
                    l1 += std::abs(zg[i]);
                }
                per_example_s[l][h][idx] = std::abs(dot);
                per_example_g[l][h][idx] = l1;
            }
        }
    }
    // scoring must not leak gradients into the training step
    zero_grad(params.all());

    HeadScoreBoard board;
    board.examples = indices.size();
    board.s.assign(layers, std::vector<double>(heads, 0.0));
    board.g.assign(layers, std::vector<double>(heads, 0.0));
    const double inv = indices.empty() ? 0.0 : 1.0 / static_cast<double>(indices.size());
    for (std::size_t l = 0; l < layers; ++l)
        for (std::size_t h = 0; h < heads; ++h) {
            double s_sum = 0.0, g_sum = 0.0;
            for (const auto& [idx, v] : per_example_s[l][h]) s_sum += v;
            for (const auto& [idx, v] : per_example_g[l][h]) g_sum += v;
            board.s[l][h] = s_sum * inv;
            board.g[l][h] = g_sum * inv;
        }
    return board;
}

namespace {

struct HeadRef {
    double score;
    std::size_t layer, head;
};

std::vector<std::size_t> active_per_layer(const HeadMask& m) {
    std::vector<std::size_t> counts(m.bits.size(), 0);
    for (std::size_t l = 0; l < m.bits.size(); ++l)
        for (int b : m.bits[l]) counts[l] += b ? 1 : 0;
    return counts;
}

}  // namespace

HeadMask prune_heads(const HeadScoreBoard& scores, double target_sparsity, const HeadMask& current) {
    check(target_sparsity >= 0.0 && target_sparsity < 1.0, "prune_heads: sparsity must be in [0,1)");
    const std::size_t total = current.total();
    const std::size_t layers = current.bits.size();
    const std::size_t quota = ceil_frac(target_sparsity, total);
    check(quota + layers <= total,
          "prune_heads: target sparsity " + std::to_string(target_sparsity) +
              " cannot keep one active head per layer");

    HeadMask out = current;
    std::size_t inactive = out.inactive_count();
    if (inactive >= quota) return out;

    std::vector<HeadRef> actives;
    for (std::size_t l = 0; l < layers; ++l)
        for (std::size_t h = 0; h < out.bits[l].size(); ++h)
            if (out.bits[l][h]) actives.push_back({scores.s[l][h], l, h});
    std::stable_sort(actives.begin(), actives.end(), [](const HeadRef& a, const HeadRef& b) {
        if (a.score != b.score) return a.score < b.score;
        if (a.layer != b.layer) return a.layer < b.layer;
        return a.head < b.head;
    });

    auto active_counts = active_per_layer(out);
    for (const HeadRef& ref : actives) {
        if (inactive >= quota) break;
        if (active_counts[ref.layer] <= 1) continue;  // floor: one head per layer
        out.bits[ref.layer][ref.head] = 0;
        --active_counts[ref.layer];
        ++inactive;
    }
    check(inactive == quota, "prune_heads: could not reach the target without emptying a layer");
    return out;
}

HeadMask regrow_heads(const HeadScoreBoard& scores, std::size_t r, const HeadMask& current) {
    const std::size_t inactive = current.inactive_count();
    check(r <= inactive, "regrow_heads: r exceeds the inactive head count");
    if (r == 0) return current;

    HeadMask out = current;
    std::vector<HeadRef> dormant;
    for (std::size_t l = 0; l < out.bits.size(); ++l)
        for (std::size_t h = 0; h < out.bits[l].size(); ++h)
            if (!out.bits[l][h]) dormant.push_back({scores.g[l][h], l, h});
    std::stable_sort(dormant.begin(), dormant.end(), [](const HeadRef& a, const HeadRef& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.layer != b.layer) return a.layer < b.layer;
        return a.head < b.head;
    });
    std::vector<std::pair<std::size_t, std::size_t>> regrown;
    for (std::size_t i = 0; i < r; ++i) {
        out.bits[dormant[i].layer][dormant[i].head] = 1;
        regrown.emplace_back(dormant[i].layer, dormant[i].head);
    }

    // deactivate the same number of lowest-S_H pre-existing actives
    std::vector<HeadRef> actives;
    for (std::size_t l = 0; l < out.bits.size(); ++l)
        for (std::size_t h = 0; h < out.bits[l].size(); ++h) {
            if (!out.bits[l][h]) continue;
            if (std::find(regrown.begin(), regrown.end(), std::make_pair(l, h)) != regrown.end()) continue;
            actives.push_back({scores.s[l][h], l, h});
        }
    std::stable_sort(actives.begin(), actives.end(), [](const HeadRef& a, const HeadRef& b) {
        if (a.score != b.score) return a.score < b.score;
        if (a.layer != b.layer) return a.layer < b.layer;
        return a.head < b.head;
    });
    auto active_counts = active_per_layer(out);
    std::size_t dropped = 0;
    for (const HeadRef& ref : actives) {
        if (dropped >= r) break;
        if (active_counts[ref.layer] <= 1) continue;
        out.bits[ref.layer][ref.head] = 0;
        --active_counts[ref.layer];
        ++dropped;
    }
    check(dropped == r, "regrow_heads: swap could not preserve sparsity without emptying a layer");
    return out;
}

void dump_head_scoreboard_csv(const std::string& path, const HeadScoreBoard& board,
                              const HeadMask& mask, std::size_t step, bool append) {
    std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
    check(out.good(), "dump_head_scoreboard_csv: cannot open " + path);
    if (!append) out << "step,layer,head,s_h,g,active\n";
    for (std::size_t l = 0; l < board.s.size(); ++l)
        for (std::size_t h = 0; h < board.s[l].size(); ++h)
            out << step << "," << l << "," << h << "," << board.s[l][h] << "," << board.g[l][h] << ","
                << mask.bits[l][h] << "\n";
}

}  // namespace gtprune
