#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "gtprune/prune_state.hpp"
#include "gtprune/rng.hpp"
#include "gtprune/tensor.hpp"

namespace gtprune {

// Binary token decision for one graph at one stage. Exactly keep_count bits
// are set; padded rows are always 0.
struct TokenMask {
    std::size_t layer = 0;
    std::vector<std::uint8_t> mask;      // over current rows
    std::size_t keep_count = 0;
    std::vector<double> soft;            // per-row keep probability (training mode)
    std::vector<std::size_t> kept;       // kept row indices, ascending
    Tensor soft_tensor;                  // [rows,1] soft path for straight-through
    std::size_t valid_count = 0;
};

// S_T = GCN(A, H) with c=2 channels (keep, drop); linear output, and the
// embeddings enter through a stop-gradient so the scorer cannot perturb the
// main model's gradients.
Tensor score_tokens(const Tensor& norm_adj, const Tensor& h, const Tensor& scorer_w);

// Survival indicator for the score rows: exactly ceil(p_s * n_valid) valid
// rows get 0 (the dropped diagonal ones of the perturbation identity).
std::vector<double> perturb_rows(const std::vector<double>& validity, double p_s, Rng& rng);

enum class TokenMode { train, eval };

// scores: [rows,2] keep/drop logits. train mode adds per-node Gumbel noise at
// temperature tau and keeps the soft sigmoid path for straight-through; eval
// mode is the deterministic top-k of keep logits with no noise and no
// perturbation. Ties break toward the lower row index.
// k = max(1, round-half-up(keep_ratio * n_valid)).
TokenMask select_topk(const Tensor& scores, const std::vector<double>& perturb_keep,
                      double keep_ratio, double tau, TokenMode mode,
                      const std::vector<double>& validity, Rng* rng);

struct TokenApply {
    Tensor h;
    std::vector<std::size_t> kept;
    bool gathered = false;  // true when rows were physically removed
};

// Physically removes dropped rows (shrinking n for all subsequent blocks)
// and, in training mode, scales surviving rows by the straight-through
// factor. When keep_count == n_valid nothing is removed and the tensor keeps
// its padded shape so a keep-everything pruner is bitwise inert.
TokenApply apply_token_mask(const Tensor& h, const TokenMask& mask);

// Builds a mask from a frozen kept set (epoch-frozen variant).
TokenMask token_mask_from_kept(const std::vector<std::size_t>& kept,
                               const std::vector<double>& validity);

}  // namespace gtprune
