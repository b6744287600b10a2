#include "gtprune/model.hpp"

#include <algorithm>
#include <cmath>

#include "gtprune/token_pruner.hpp"

namespace gtprune {

StackStyle stack_style_from_string(const std::string& s) {
    if (s == "prelude") return StackStyle::prelude;
    if (s == "interleaved") return StackStyle::interleaved;
    fail("unknown stack style '" + s + "' (expected prelude|interleaved)");
}

std::string to_string(StackStyle s) {
    return s == StackStyle::prelude ? "prelude" : "interleaved";
}

void ModelConfig::validate() const {
    check(input_dim >= 1 && hidden_dim >= 1 && head_dim >= 1 && num_heads >= 1 && ffn_dim >= 1 &&
              num_classes >= 1,
          "model config: all dimensions must be >= 1");
    check(num_gnn_layers >= 1, "model config: at least one GNN layer (the input projection) is required");
    check(num_heads * head_dim == hidden_dim,
          "model config: num_heads*head_dim (" + std::to_string(num_heads * head_dim) +
              ") must equal hidden_dim (" + std::to_string(hidden_dim) + ")");
    if (stack_style == StackStyle::interleaved)
        check(num_gnn_layers == num_transformer_layers,
              "model config: interleaved stack needs equal GNN and transformer layer counts");
    check(ln_eps > 0.0, "model config: ln_eps must be positive");
}

Tensor glorot_tensor(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::vector<double> vals(shape_numel(shape));
    for (double& v : vals) v = (rng.uniform() * 2.0 - 1.0) * a;
    return Tensor::from(std::move(shape), std::move(vals), true);
}

namespace {

Tensor glorot(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    return glorot_tensor(std::move(shape), fan_in, fan_out, rng);
}

}  // namespace

ModelParams ModelParams::init(const ModelConfig& cfg, Rng& rng) {
    cfg.validate();
    ModelParams p;
    for (std::size_t i = 0; i < cfg.num_gnn_layers; ++i) {
        const std::size_t din = i == 0 ? cfg.input_dim : cfg.hidden_dim;
        p.gcn_w.push_back(glorot({din, cfg.hidden_dim}, din, cfg.hidden_dim, rng));
    }
    for (std::size_t l = 0; l < cfg.num_transformer_layers; ++l) {
        TransformerLayerParams lp;
        for (std::size_t h = 0; h < cfg.num_heads; ++h) {
            lp.wq.push_back(glorot({cfg.hidden_dim, cfg.head_dim}, cfg.hidden_dim, cfg.head_dim, rng));
            lp.wk.push_back(glorot({cfg.hidden_dim, cfg.head_dim}, cfg.hidden_dim, cfg.head_dim, rng));
            lp.wv.push_back(glorot({cfg.hidden_dim, cfg.head_dim}, cfg.hidden_dim, cfg.head_dim, rng));
        }
        lp.wo = glorot({cfg.num_heads * cfg.head_dim, cfg.hidden_dim}, cfg.num_heads * cfg.head_dim,
                       cfg.hidden_dim, rng);
        lp.ln1_g = Tensor::full({cfg.hidden_dim}, 1.0, true);
        lp.ln1_b = Tensor::zeros({cfg.hidden_dim}, true);
        lp.ffn_w1 = glorot({cfg.hidden_dim, cfg.ffn_dim}, cfg.hidden_dim, cfg.ffn_dim, rng);
        lp.ffn_b1 = Tensor::zeros({cfg.ffn_dim}, true);
        lp.ffn_w2 = glorot({cfg.ffn_dim, cfg.hidden_dim}, cfg.ffn_dim, cfg.hidden_dim, rng);
        lp.ffn_b2 = Tensor::zeros({cfg.hidden_dim}, true);
        lp.ln2_g = Tensor::full({cfg.hidden_dim}, 1.0, true);
        lp.ln2_b = Tensor::zeros({cfg.hidden_dim}, true);
        p.layers.push_back(std::move(lp));
    }
    p.cls_w = glorot({cfg.hidden_dim, cfg.num_classes}, cfg.hidden_dim, cfg.num_classes, rng);
    p.cls_b = Tensor::zeros({cfg.num_classes}, true);
    return p;
}

ModelParams ModelParams::zeros(const ModelConfig& cfg) {
    cfg.validate();
    ModelParams p;
    for (std::size_t i = 0; i < cfg.num_gnn_layers; ++i) {
        const std::size_t din = i == 0 ? cfg.input_dim : cfg.hidden_dim;
        p.gcn_w.push_back(Tensor::zeros({din, cfg.hidden_dim}, true));
    }
    for (std::size_t l = 0; l < cfg.num_transformer_layers; ++l) {
        TransformerLayerParams lp;
        for (std::size_t h = 0; h < cfg.num_heads; ++h) {
            lp.wq.push_back(Tensor::zeros({cfg.hidden_dim, cfg.head_dim}, true));
            lp.wk.push_back(Tensor::zeros({cfg.hidden_dim, cfg.head_dim}, true));
            lp.wv.push_back(Tensor::zeros({cfg.hidden_dim, cfg.head_dim}, true));
        }
        lp.wo = Tensor::zeros({cfg.num_heads * cfg.head_dim, cfg.hidden_dim}, true);
        lp.ln1_g = Tensor::full({cfg.hidden_dim}, 1.0, true);
        lp.ln1_b = Tensor::zeros({cfg.hidden_dim}, true);
        lp.ffn_w1 = Tensor::zeros({cfg.hidden_dim, cfg.ffn_dim}, true);
        lp.ffn_b1 = Tensor::zeros({cfg.ffn_dim}, true);
        lp.ffn_w2 = Tensor::zeros({cfg.ffn_dim, cfg.hidden_dim}, true);
        lp.ffn_b2 = Tensor::zeros({cfg.hidden_dim}, true);
        lp.ln2_g = Tensor::full({cfg.hidden_dim}, 1.0, true);
        lp.ln2_b = Tensor::zeros({cfg.hidden_dim}, true);
        p.layers.push_back(std::move(lp));
    }
    p.cls_w = Tensor::zeros({cfg.hidden_dim, cfg.num_classes}, true);
    p.cls_b = Tensor::zeros({cfg.num_classes}, true);
    return p;
}

std::vector<std::pair<std::string, Tensor>> ModelParams::named() const {
    std::vector<std::pair<std::string, Tensor>> out;
    for (std::size_t i = 0; i < gcn_w.size(); ++i) out.emplace_back("gcn." + std::to_string(i) + ".w", gcn_w[i]);
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const std::string p = "tf." + std::to_string(l) + ".";
        const auto& lp = layers[l];
        for (std::size_t h = 0; h < lp.wq.size(); ++h) {
            const std::string hp = p + "h" + std::to_string(h) + ".";
            out.emplace_back(hp + "wq", lp.wq[h]);
            out.emplace_back(hp + "wk", lp.wk[h]);
            out.emplace_back(hp + "wv", lp.wv[h]);
        }
        out.emplace_back(p + "wo", lp.wo);
        out.emplace_back(p + "ln1.g", lp.ln1_g);
        out.emplace_back(p + "ln1.b", lp.ln1_b);
        out.emplace_back(p + "ffn.w1", lp.ffn_w1);
        out.emplace_back(p + "ffn.b1", lp.ffn_b1);
        out.emplace_back(p + "ffn.w2", lp.ffn_w2);
        out.emplace_back(p + "ffn.b2", lp.ffn_b2);
        out.emplace_back(p + "ln2.g", lp.ln2_g);
        out.emplace_back(p + "ln2.b", lp.ln2_b);
    }
    out.emplace_back("cls.w", cls_w);
    out.emplace_back("cls.b", cls_b);
    return out;
}

std::vector<Tensor> ModelParams::all() const {
    std::vector<Tensor> out;
    for (const auto& [name, t] : named()) out.push_back(t);
    return out;
}

std::size_t ModelParams::count() const {
    std::size_t c = 0;
    for (const auto& [name, t] : named()) c += t.numel();
    return c;
}

std::vector<std::string> weight_prunable_names(const ModelConfig& cfg) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < cfg.num_gnn_layers; ++i) out.push_back("gcn." + std::to_string(i) + ".w");
    for (std::size_t l = 0; l < cfg.num_transformer_layers; ++l) {
        const std::string p = "tf." + std::to_string(l) + ".";
        for (std::size_t h = 0; h < cfg.num_heads; ++h) {
            const std::string hp = p + "h" + std::to_string(h) + ".";
            out.push_back(hp + "wq");
            out.push_back(hp + "wk");
            out.push_back(hp + "wv");
        }
        out.push_back(p + "wo");
        out.push_back(p + "ffn.w1");
        out.push_back(p + "ffn.w2");
    }
    return out;
}

Tensor padded_norm_adj(const std::vector<std::uint8_t>& adj, std::size_t n_pad, std::size_t n_valid) {
    std::vector<double> inv_sqrt(n_valid);
    for (std::size_t i = 0; i < n_valid; ++i) {
        double deg = 1.0;  // self-loop
        for (std::size_t j = 0; j < n_valid; ++j) deg += adj[i * n_pad + j];
        inv_sqrt[i] = 1.0 / std::sqrt(deg);
    }
    std::vector<double> out(n_pad * n_pad, 0.0);
    for (std::size_t i = 0; i < n_valid; ++i)
        for (std::size_t j = 0; j < n_valid; ++j) {
            const bool connected = i == j || adj[i * n_pad + j] != 0;
            if (connected) out[i * n_pad + j] = inv_sqrt[i] * inv_sqrt[j];
        }
    return Tensor::from({n_pad, n_pad}, std::move(out));
}

Tensor induced_norm_adj(const std::vector<std::uint8_t>& adj, std::size_t n_pad,
                        const std::vector<std::size_t>& nodes) {
    const std::size_t k = nodes.size();
    std::vector<double> inv_sqrt(k);
    for (std::size_t i = 0; i < k; ++i) {
        double deg = 1.0;
        for (std::size_t j = 0; j < k; ++j)
            if (i != j) deg += adj[nodes[i] * n_pad + nodes[j]];
        inv_sqrt[i] = 1.0 / std::sqrt(deg);
    }
    std::vector<double> out(k * k, 0.0);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) {
            const bool connected = i == j || adj[nodes[i] * n_pad + nodes[j]] != 0;
            if (connected) out[i * k + j] = inv_sqrt[i] * inv_sqrt[j];
        }
    return Tensor::from({k, k}, std::move(out));
}

Tensor gcn_propagate(const Tensor& norm_adj, const Tensor& h, const Tensor& w) {
    return matmul(norm_adj, matmul(h, w));
}

Tensor gcn_layer(const Tensor& norm_adj, const Tensor& h, const Tensor& w) {
    return gelu(gcn_propagate(norm_adj, h, w));
}

MhaResult mha(const Tensor& h, const TransformerLayerParams& lp, const std::vector<int>& head_mask,
              const Tensor& attn_additive_mask, std::size_t head_dim) {
    check(head_mask.size() == lp.wq.size(), "mha: head mask size mismatch");
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
    MhaResult res;
    std::vector<Tensor> outs;
    for (std::size_t hi = 0; hi < lp.wq.size(); ++hi) {
        Tensor q = matmul(h, lp.wq[hi]);
        Tensor k = matmul(h, lp.wk[hi]);
        Tensor v = matmul(h, lp.wv[hi]);
        Tensor scores = scale(matmul(q, transpose(k)), inv_sqrt);
        Tensor probs = softmax_rows(scores, attn_additive_mask);
        Tensor z = matmul(probs, v);
        res.head_z.push_back(z);
        res.attn.push_back(probs);
        outs.push_back(scale(z, head_mask[hi] ? 1.0 : 0.0));
    }
    res.out = matmul(concat_cols(outs), lp.wo);
    return res;
}

BlockResult transformer_block(const Tensor& h, const TransformerLayerParams& lp,
                              const std::vector<int>& head_mask, int mha_bit, int ffn_bit,
                              const Tensor& attn_additive_mask, std::size_t head_dim, double ln_eps) {
    BlockResult r;
    if (mha_bit) {
        r.attn = mha(h, lp, head_mask, attn_additive_mask, head_dim);
        r.after_mha = add(layer_norm(r.attn.out, lp.ln1_g, lp.ln1_b, ln_eps), h);
    } else {
        r.after_mha = h;  // exact bypass
    }
    if (ffn_bit) {
        Tensor f = gelu(add_rowvec(matmul(r.after_mha, lp.ffn_w1), lp.ffn_b1));
        f = add_rowvec(matmul(f, lp.ffn_w2), lp.ffn_b2);
        r.out = add(layer_norm(f, lp.ln2_g, lp.ln2_b, ln_eps), r.after_mha);
    } else {
        r.out = r.after_mha;
    }
    return r;
}

ModelParams effective_params(const ModelParams& params, const WeightMaskSet& weights) {
    if (!weights.active) return params;
    ModelParams eff = params;
    auto wrap = [&](const std::string& name, Tensor& t) {
        auto it = weights.masks.find(name);
        if (it != weights.masks.end()) t = apply_mask_st(t, it->second);
    };
    for (std::size_t i = 0; i < eff.gcn_w.size(); ++i) wrap("gcn." + std::to_string(i) + ".w", eff.gcn_w[i]);
    for (std::size_t l = 0; l < eff.layers.size(); ++l) {
        const std::string p = "tf." + std::to_string(l) + ".";
        auto& lp = eff.layers[l];
        for (std::size_t h = 0; h < lp.wq.size(); ++h) {
            const std::string hp = p + "h" + std::to_string(h) + ".";
            wrap(hp + "wq", lp.wq[h]);
            wrap(hp + "wk", lp.wk[h]);
            wrap(hp + "wv", lp.wv[h]);
        }
        wrap(p + "wo", lp.wo);
        wrap(p + "ffn.w1", lp.ffn_w1);
        wrap(p + "ffn.w2", lp.ffn_w2);
    }
    return eff;
}

namespace {

struct StackItem {
    enum class Kind { gnn, block } kind;
    std::size_t index;
};

std::vector<StackItem> stack_order(const ModelConfig& cfg) {
    std::vector<StackItem> order;
    if (cfg.stack_style == StackStyle::prelude) {
        for (std::size_t i = 0; i < cfg.num_gnn_layers; ++i) order.push_back({StackItem::Kind::gnn, i});
        for (std::size_t l = 0; l < cfg.num_transformer_layers; ++l) order.push_back({StackItem::Kind::block, l});
    } else {
        for (std::size_t l = 0; l < cfg.num_transformer_layers; ++l) {
            order.push_back({StackItem::Kind::gnn, l});
            order.push_back({StackItem::Kind::block, l});
        }
    }
    return order;
}

Tensor attention_pad_mask(std::size_t rows, std::size_t n_valid) {
    std::vector<double> m(rows * rows, 0.0);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = n_valid; j < rows; ++j) m[i * rows + j] = kNegMask;
    return Tensor::from({rows, rows}, std::move(m));
}

}  // namespace

Tensor forward_slot(const ModelConfig& cfg, const ModelParams& eff, const PruneState& state,
                    const BatchSlot& slot, const ForwardOptions& opts, ForwardTrace* trace) {
    const std::size_t n_pad = slot.validity.size();
    const std::size_t n_valid = slot.n;
    check(n_valid >= 1, "forward: slot has no valid nodes");

    Tensor h = Tensor::from({n_pad, cfg.input_dim}, slot.features);
    Tensor adjn = padded_norm_adj(slot.adj, n_pad, n_valid);
    Tensor amask = n_valid < n_pad ? attention_pad_mask(n_pad, n_valid) : Tensor();
    std::vector<double> read_weights = slot.validity;
    std::size_t read_count = n_valid;
    std::vector<std::size_t> kept(n_valid);
    for (std::size_t i = 0; i < n_valid; ++i) kept[i] = i;
    if (trace) {
        trace->head_z.assign(cfg.num_transformer_layers, {});
        trace->attn.assign(cfg.num_transformer_layers, {});
        trace->attn_tokens.assign(cfg.num_transformer_layers, 0);
        trace->sublayers.clear();
        trace->token_kept = kept;
        trace->token_soft.clear();
    }

    for (const StackItem& item : stack_order(cfg)) {
        if (item.kind == StackItem::Kind::gnn) {
            if (state.layer.gnn[item.index]) h = gcn_layer(adjn, h, eff.gcn_w[item.index]);
            if (trace) trace->sublayers.emplace_back("gnn" + std::to_string(item.index), h);
        } else {
            const std::size_t b = item.index;
            BlockResult br = transformer_block(h, eff.layers[b], state.head.bits[b], state.layer.mha[b],
                                               state.layer.ffn[b], amask, cfg.head_dim, cfg.ln_eps);
            if (trace) {
                trace->sublayers.emplace_back("mha" + std::to_string(b), br.after_mha);
                trace->sublayers.emplace_back("ffn" + std::to_string(b), br.out);
                trace->head_z[b] = br.attn.head_z;
                trace->attn[b] = br.attn.attn;
                trace->attn_tokens[b] = h.rows();
            }
            h = br.out;

            if (state.token.active && b == state.token.stage) {
                const std::vector<double> validity_now = read_weights;
                TokenMask tm;
                const bool training = opts.training;
                const std::map<std::size_t, std::vector<std::size_t>>* frozen = opts.frozen_token_map;
                const bool use_frozen = frozen && frozen->count(slot.dataset_index) > 0;
                if (use_frozen) {
                    tm = token_mask_from_kept(frozen->at(slot.dataset_index), validity_now);
                } else {
                    Tensor scores = score_tokens(adjn, h, state.token.scorer_w);
                    std::vector<double> keep_ind(h.rows(), 1.0);
                    if (training) {
                        check(opts.token_rng != nullptr, "forward: token pruner needs an rng in training");
                        keep_ind = perturb_rows(validity_now, state.token.score_drop_rate, *opts.token_rng);
                    }
                    tm = select_topk(scores, keep_ind, state.token.keep_ratio, state.token.tau,
                                     training ? TokenMode::train : TokenMode::eval, validity_now,
                                     opts.token_rng);
                }
                TokenApply ap = apply_token_mask(h, tm);
                h = ap.h;
                if (ap.gathered) {
                    kept = ap.kept;
                    adjn = induced_norm_adj(slot.adj, n_pad, kept);
                    amask = Tensor();
                    read_weights.assign(kept.size(), 1.0);
                    read_count = kept.size();
                } else {
                    kept = ap.kept;  // all valid nodes
                }
                if (trace) {
                    trace->token_kept = kept;
                    trace->token_soft = tm.soft;
                }
            }
        }
    }

    Tensor read_w = Tensor::from({read_weights.size()}, read_weights);
    Tensor pooled = scale(colsum(scale_rows(h, read_w)), 1.0 / static_cast<double>(read_count));
    Tensor logits = add_rowvec(matmul(pooled, eff.cls_w), eff.cls_b);
    if (trace) trace->logits = logits;
    return logits;
}

Tensor forward_batch(const ModelConfig& cfg, const ModelParams& eff, const PruneState& state,
                     const Batch& batch, const ForwardOptions& opts,
                     std::vector<ForwardTrace>* traces) {
    check(!batch.slots.empty(), "forward_batch: empty batch");
    if (traces) traces->assign(batch.slots.size(), ForwardTrace{});
    std::vector<Tensor> rows;
    rows.reserve(batch.slots.size());
    for (std::size_t i = 0; i < batch.slots.size(); ++i)
        rows.push_back(forward_slot(cfg, eff, state, batch.slots[i], opts,
                                    traces ? &(*traces)[i] : nullptr));
    return concat_rows(rows);
}

StageSizes make_stage_sizes(const ModelConfig& cfg, const PruneState& state, std::size_t n,
                            std::size_t nnz_with_loops,
                            std::optional<std::pair<std::size_t, std::size_t>> after_token_stage) {
    StageSizes s;
    const bool token = state.token.active;
    check(!token || after_token_stage.has_value(),
          "make_stage_sizes: token pruning requires kept-token sizes");
    const std::size_t stage = state.token.stage;
    const std::size_t k = token ? after_token_stage->first : n;
    const std::size_t k_nnz = token ? after_token_stage->second : nnz_with_loops;

    for (std::size_t i = 0; i < cfg.num_gnn_layers; ++i) {
        bool after = false;
        if (cfg.stack_style == StackStyle::interleaved) after = token && i > stage;
        // prelude: all GNN layers run before the transformer blocks
        s.gnn_tokens.push_back(after ? k : n);
        s.gnn_nnz.push_back(after ? k_nnz : nnz_with_loops);
    }
    for (std::size_t l = 0; l < cfg.num_transformer_layers; ++l) {
        const bool after = token && l > stage;
        s.tf_tokens.push_back(after ? k : n);
    }
    if (token) {
        s.scorer = true;
        s.scorer_tokens = n;
        s.scorer_nnz = nnz_with_loops;
    }
    return s;
}

FlopsReport count_flops(const ModelConfig& cfg, const StageSizes& sizes, const PruneState& state) {
    check(sizes.gnn_tokens.size() == cfg.num_gnn_layers && sizes.gnn_nnz.size() == cfg.num_gnn_layers,
          "count_flops: GNN stage sizes mismatch");
    check(sizes.tf_tokens.size() == cfg.num_transformer_layers, "count_flops: transformer stage sizes mismatch");

    FlopsReport r;
    const double d = static_cast<double>(cfg.hidden_dim);
    const double dh = static_cast<double>(cfg.head_dim);
    const double f = static_cast<double>(cfg.ffn_dim);

    for (std::size_t i = 0; i < cfg.num_gnn_layers; ++i) {
        if (!state.layer.gnn[i]) continue;
        const double n = static_cast<double>(sizes.gnn_tokens[i]);
        const double nnz = static_cast<double>(sizes.gnn_nnz[i]);
        const double din = static_cast<double>(i == 0 ? cfg.input_dim : cfg.hidden_dim);
        const double rho = state.weight.density("gcn." + std::to_string(i) + ".w");
        r.gnn_flops += 2.0 * (nnz * d + n * din * d * rho);
    }
    for (std::size_t l = 0; l < cfg.num_transformer_layers; ++l) {
        const double n = static_cast<double>(sizes.tf_tokens[l]);
        const std::string p = "tf." + std::to_string(l) + ".";
        if (state.layer.mha[l]) {
            const double rho_o = state.weight.density(p + "wo");
            for (std::size_t h = 0; h < cfg.num_heads; ++h) {
                if (!state.head.bits[l][h]) continue;
                const std::string hp = p + "h" + std::to_string(h) + ".";
                const double rho_q = state.weight.density(hp + "wq");
                const double rho_k = state.weight.density(hp + "wk");
                const double rho_v = state.weight.density(hp + "wv");
                r.mha_flops += 2.0 * n * d * dh * (rho_q + rho_k + rho_v);  // Q,K,V projections
                const double quad = 2.0 * n * n * dh + 5.0 * n * n + 2.0 * n * n * dh;
                r.mha_flops += quad;                     // scores, softmax, attn*V
                r.attn_quadratic_flops += quad;
                r.mha_flops += 2.0 * n * dh * d * rho_o;  // this head's slice of W_O
            }
        }
        if (state.layer.ffn[l]) {
            const double rho1 = state.weight.density(p + "ffn.w1");
            const double rho2 = state.weight.density(p + "ffn.w2");
            r.ffn_flops += 2.0 * n * d * f * rho1 + 2.0 * n * f * d * rho2;
        }
    }
    if (sizes.scorer) {
        const double n = static_cast<double>(sizes.scorer_tokens);
        const double nnz = static_cast<double>(sizes.scorer_nnz);
        r.scorer_flops = 2.0 * (nnz * 2.0 + n * d * 2.0);
    }
    r.total_flops = r.gnn_flops + r.mha_flops + r.ffn_flops + r.scorer_flops;

    double params = 0;
    params += static_cast<double>(cfg.input_dim) * d;
    params += static_cast<double>(cfg.num_gnn_layers - 1) * d * d;
    const double per_layer = static_cast<double>(cfg.num_heads) * 3.0 * d * dh  // QKV
                             + static_cast<double>(cfg.num_heads) * dh * d      // W_O
                             + 2.0 * d                                          // LN1
                             + d * f + f + f * d + d                            // FFN
                             + 2.0 * d;                                         // LN2
    params += static_cast<double>(cfg.num_transformer_layers) * per_layer;
    params += d * static_cast<double>(cfg.num_classes) + static_cast<double>(cfg.num_classes);
    r.params = params;
    return r;
}

}  // namespace gtprune
