#include "gtprune/token_pruner.hpp"

#include <algorithm>
#include <cmath>

#include "gtprune/model.hpp"

namespace gtprune {

Tensor score_tokens(const Tensor& norm_adj, const Tensor& h, const Tensor& scorer_w) {
    check(scorer_w.defined() && scorer_w.shape()[0] == h.cols(),
          "score_tokens: scorer expects " + std::to_string(h.cols()) + " input channels");
    return gcn_propagate(norm_adj, detach(h), scorer_w);
}

std::vector<double> perturb_rows(const std::vector<double>& validity, double p_s, Rng& rng) {
    check(p_s >= 0.0 && p_s < 1.0, "perturb_rows: p_s must be in [0,1)");
    std::vector<double> keep(validity.size(), 1.0);
    if (p_s == 0.0) return keep;
    std::vector<std::size_t> valid_idx;
    for (std::size_t i = 0; i < validity.size(); ++i)
        if (validity[i] > 0.0) valid_idx.push_back(i);
    const std::size_t drop = ceil_frac(p_s, valid_idx.size());
    // partial Fisher-Yates: the first `drop` entries are the zeroed rows
    for (std::size_t i = 0; i < drop && i < valid_idx.size(); ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.uniform_int(0, valid_idx.size() - 1 - i));
        std::swap(valid_idx[i], valid_idx[j]);
        keep[valid_idx[i]] = 0.0;
    }
    return keep;
}

namespace {

std::size_t keep_count_for(double keep_ratio, std::size_t n_valid) {
    const std::size_t k = round_half_up(keep_ratio * static_cast<double>(n_valid));
    return std::max<std::size_t>(1, std::min(k, n_valid));
}

// descending by score, ties toward the lower index
std::vector<std::size_t> rank_desc(const std::vector<std::pair<double, std::size_t>>& scored) {
    std::vector<std::size_t> order(scored.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scored[a].first != scored[b].first) return scored[a].first > scored[b].first;
        return scored[a].second < scored[b].second;
    });
    return order;
}

}  // namespace

TokenMask select_topk(const Tensor& scores, const std::vector<double>& perturb_keep,
                      double keep_ratio, double tau, TokenMode mode,
                      const std::vector<double>& validity, Rng* rng) {
    check(scores.shape().size() == 2 && scores.cols() == 2,
          "select_topk: scores must be [n,2] keep/drop logits");
    check(keep_ratio > 0.0 && keep_ratio <= 1.0, "select_topk: keep_ratio must be in (0,1]");
    check(tau > 0.0, "select_topk: tau must be positive");
    const std::size_t rows = scores.rows();
    check(validity.size() == rows && perturb_keep.size() == rows, "select_topk: mask size mismatch");

    std::vector<std::size_t> valid_idx;
    for (std::size_t i = 0; i < rows; ++i)
        if (validity[i] > 0.0) valid_idx.push_back(i);
    check(!valid_idx.empty(), "select_topk: no valid nodes");

    TokenMask tm;
    tm.valid_count = valid_idx.size();
    tm.keep_count = keep_count_for(keep_ratio, valid_idx.size());
    tm.mask.assign(rows, 0);

    if (mode == TokenMode::eval) {
        // deterministic: top-k of the keep logits, no noise, no perturbation
        std::vector<std::pair<double, std::size_t>> scored;
        scored.reserve(valid_idx.size());
        for (std::size_t i : valid_idx) scored.emplace_back(scores.at(i, 0), i);
        auto order = rank_desc(scored);
        for (std::size_t r = 0; r < tm.keep_count; ++r) tm.mask[scored[order[r]].second] = 1;
        for (std::size_t i = 0; i < rows; ++i)
            if (tm.mask[i]) tm.kept.push_back(i);
        return tm;
    }

    check(rng != nullptr, "select_topk: train mode needs an rng");
    // Gumbel noise per valid node (keep then drop), in row order.
    std::vector<double> noise(rows, 0.0);
    for (std::size_t i : valid_idx) {
        const double gk = rng->gumbel();
        const double gd = rng->gumbel();
        noise[i] = gk - gd;
    }

    // Soft path: sigma((keep - drop + noise)/tau) over perturbed scores.
    Tensor perturbed = scale_rows(scores, Tensor::from({rows}, perturb_keep));
    Tensor keep_col = matmul(perturbed, Tensor::from({2, 1}, {1.0, 0.0}));
    Tensor drop_col = matmul(perturbed, Tensor::from({2, 1}, {0.0, 1.0}));
    Tensor logit_gap = add(sub(keep_col, drop_col), Tensor::from({rows, 1}, noise));
    tm.soft_tensor = sigmoid(scale(logit_gap, 1.0 / tau));
    tm.soft = tm.soft_tensor.value();

    // rank by the pre-sigmoid gap: the same ordering as the probabilities,
    // but immune to sigmoid saturation at small tau
    std::vector<std::pair<double, std::size_t>> scored;
    scored.reserve(valid_idx.size());
    for (std::size_t i : valid_idx) scored.emplace_back(logit_gap.value()[i], i);
    auto order = rank_desc(scored);
    for (std::size_t r = 0; r < tm.keep_count; ++r) tm.mask[scored[order[r]].second] = 1;
    for (std::size_t i = 0; i < rows; ++i)
        if (tm.mask[i]) tm.kept.push_back(i);
    return tm;
}

TokenApply apply_token_mask(const Tensor& h, const TokenMask& mask) {
    const std::size_t rows = h.rows();
    check(mask.mask.size() == rows, "apply_token_mask: mask length mismatch");
    TokenApply out;
    out.kept = mask.kept;
    const bool prunes = mask.keep_count < mask.valid_count;

    if (!prunes) {
        // keep-everything: no physical removal, padded shape preserved
        out.gathered = false;
        if (mask.soft_tensor.defined()) {
            Tensor st = straight_through(mask.soft_tensor, std::vector<double>(rows, 1.0));
            out.h = scale_rows(h, st);
        } else {
            out.h = h;
        }
        return out;
    }

    out.gathered = true;
    Tensor g = gather_rows(h, mask.kept);
    if (mask.soft_tensor.defined()) {
        Tensor soft_kept = gather_rows(mask.soft_tensor, mask.kept);
        Tensor st = straight_through(soft_kept, std::vector<double>(mask.kept.size(), 1.0));
        out.h = scale_rows(g, st);
    } else {
        out.h = g;
    }
    return out;
}

TokenMask token_mask_from_kept(const std::vector<std::size_t>& kept,
                               const std::vector<double>& validity) {
    TokenMask tm;
    tm.mask.assign(validity.size(), 0);
    for (std::size_t i : kept) {
        check(i < validity.size() && validity[i] > 0.0, "token_mask_from_kept: invalid kept index");
        tm.mask[i] = 1;
    }
    tm.kept = kept;
    std::sort(tm.kept.begin(), tm.kept.end());
    tm.keep_count = tm.kept.size();
    for (double v : validity) tm.valid_count += v > 0.0 ? 1 : 0;
    return tm;
}

}  // namespace gtprune
