#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gtprune/graph_data.hpp"
#include "gtprune/prune_state.hpp"
#include "gtprune/rng.hpp"
#include "gtprune/tensor.hpp"

namespace gtprune {

enum class StackStyle { prelude, interleaved };

StackStyle stack_style_from_string(const std::string& s);
std::string to_string(StackStyle s);

struct ModelConfig {
    std::size_t input_dim = 1;
    std::size_t num_gnn_layers = 2;
    std::size_t num_transformer_layers = 4;
    std::size_t hidden_dim = 64;
    std::size_t head_dim = 16;
    std::size_t num_heads = 4;
    std::size_t ffn_dim = 128;
    std::size_t num_classes = 2;
    StackStyle stack_style = StackStyle::prelude;
    double ln_eps = 1e-5;

    void validate() const;
};

struct TransformerLayerParams {
    std::vector<Tensor> wq, wk, wv;  // per head, hidden_dim x head_dim
    Tensor wo;                       // (num_heads*head_dim) x hidden_dim
    Tensor ln1_g, ln1_b;
    Tensor ffn_w1, ffn_b1;           // hidden_dim x ffn_dim, ffn_dim
    Tensor ffn_w2, ffn_b2;           // ffn_dim x hidden_dim, hidden_dim
    Tensor ln2_g, ln2_b;
};

struct ModelParams {
    std::vector<Tensor> gcn_w;  // [0]: input_dim x hidden, rest hidden x hidden
    std::vector<TransformerLayerParams> layers;
    Tensor cls_w, cls_b;

    static ModelParams init(const ModelConfig& cfg, Rng& rng);
    static ModelParams zeros(const ModelConfig& cfg);
    std::vector<std::pair<std::string, Tensor>> named() const;
    std::vector<Tensor> all() const;
    std::size_t count() const;  // total scalar parameters
};

// Parameter names whose tensors are subject to weight pruning (2-d weight
// matrices; LayerNorm, biases, classifier head, and the token scorer are
// exempt).
std::vector<std::string> weight_prunable_names(const ModelConfig& cfg);

Tensor glorot_tensor(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng);

// Symmetric-normalized propagation matrix D^-1/2 (A+I) D^-1/2 over the listed
// nodes (original indices into the padded adjacency); rows/cols outside the
// list are zero. `out_dim` is the produced square size.
Tensor padded_norm_adj(const std::vector<std::uint8_t>& adj, std::size_t n_pad, std::size_t n_valid);
Tensor induced_norm_adj(const std::vector<std::uint8_t>& adj, std::size_t n_pad,
                        const std::vector<std::size_t>& nodes);

Tensor gcn_propagate(const Tensor& norm_adj, const Tensor& h, const Tensor& w);
Tensor gcn_layer(const Tensor& norm_adj, const Tensor& h, const Tensor& w);

struct MhaResult {
    Tensor out;                  // n x hidden_dim
    std::vector<Tensor> head_z;  // per head, n x head_dim (before the mask bit)
    std::vector<Tensor> attn;    // per head, n x n row-stochastic
};

MhaResult mha(const Tensor& h, const TransformerLayerParams& lp, const std::vector<int>& head_mask,
              const Tensor& attn_additive_mask, std::size_t head_dim);

struct BlockResult {
    Tensor out;
    Tensor after_mha;  // representation after the MHA sublayer (+residual)
    MhaResult attn;
};

BlockResult transformer_block(const Tensor& h, const TransformerLayerParams& lp,
                              const std::vector<int>& head_mask, int mha_bit, int ffn_bit,
                              const Tensor& attn_additive_mask, std::size_t head_dim, double ln_eps);

// Weight masks applied once (apply_mask_st), reusable across the slots of a
// batch trace.
ModelParams effective_params(const ModelParams& params, const WeightMaskSet& weights);

struct ForwardOptions {
    bool training = false;
    Rng* token_rng = nullptr;  // consumed only when the token pruner is active in training
    // epoch-frozen token variant: dataset_index -> kept set chosen earlier in the epoch
    const std::map<std::size_t, std::vector<std::size_t>>* frozen_token_map = nullptr;
};

struct ForwardTrace {
    // per transformer layer: per head Z handles and attention matrices
    std::vector<std::vector<Tensor>> head_z;
    std::vector<std::vector<Tensor>> attn;
    std::vector<std::size_t> attn_tokens;               // token count at each transformer layer
    std::vector<std::pair<std::string, Tensor>> sublayers;  // (name, output) in stack order
    std::vector<std::size_t> token_kept;                // original node ids surviving the token stage
    std::vector<double> token_soft;                     // soft keep-probabilities (training)
    Tensor logits;
};

// Forward for one padded slot; returns [1, num_classes] logits.
Tensor forward_slot(const ModelConfig& cfg, const ModelParams& eff, const PruneState& state,
                    const BatchSlot& slot, const ForwardOptions& opts, ForwardTrace* trace = nullptr);

// Batch logits [B, num_classes]; traces (if given) resized to batch size.
Tensor forward_batch(const ModelConfig& cfg, const ModelParams& eff, const PruneState& state,
                     const Batch& batch, const ForwardOptions& opts,
                     std::vector<ForwardTrace>* traces = nullptr);

struct FlopsReport {
    double gnn_flops = 0;
    double mha_flops = 0;
    double ffn_flops = 0;
    double scorer_flops = 0;
    double total_flops = 0;
    double attn_quadratic_flops = 0;  // the n^2 part of mha_flops, informational
    double params = 0;                // dense scalar parameter count
};

// Per-layer shape input for the FLOPs accountant: token counts after any
// token pruning, and nnz(A+I) for the GNN layers.
struct StageSizes {
    std::vector<std::size_t> gnn_tokens;
    std::vector<std::size_t> gnn_nnz;  // nonzeros of A plus self-loops
    std::vector<std::size_t> tf_tokens;
    bool scorer = false;
    std::size_t scorer_tokens = 0;
    std::size_t scorer_nnz = 0;
};

// Builds StageSizes for a graph of n nodes / nnz_with_loops = 2*edges+n,
// applying the token stage reduction (kept tokens, induced nnz) when given.
StageSizes make_stage_sizes(const ModelConfig& cfg, const PruneState& state, std::size_t n,
                            std::size_t nnz_with_loops,
                            std::optional<std::pair<std::size_t, std::size_t>> after_token_stage = std::nullopt);

// Exact multiply-accumulate accounting (1 MAC = 2 FLOPs; softmax 5n^2 per
// active head; GELU/LN/bias/readout/classifier uncounted; masked heads and
// dropped sublayers contribute zero; weight-masked matmuls scale by density).
FlopsReport count_flops(const ModelConfig& cfg, const StageSizes& sizes, const PruneState& state);

}  // namespace gtprune
