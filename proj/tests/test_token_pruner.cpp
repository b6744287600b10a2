#include <doctest.h>

#include <cmath>
#include <set>

#include "gtprune/model.hpp"
#include "gtprune/token_pruner.hpp"

using namespace gtprune;

namespace {

Tensor scores_from(const std::vector<double>& keep_logits) {
    std::vector<double> data;
    for (double k : keep_logits) {
        data.push_back(k);
        data.push_back(0.0);  // drop logit
    }
    return Tensor::from({keep_logits.size(), 2}, data);
}

std::vector<double> ones(std::size_t n) { return std::vector<double>(n, 1.0); }

}  // namespace

TEST_SUITE("token_pruner") {

TEST_CASE("zero scorer weights give equal scores everywhere") {
    std::vector<std::uint8_t> adj = {0, 1, 0, 1, 0, 1, 0, 1, 0};
    Tensor norm = padded_norm_adj(adj, 3, 3);
    Tensor h = Tensor::from({3, 2}, {1, 2, 3, 4, 5, 6});
    Tensor w = Tensor::zeros({2, 2});
    Tensor s = score_tokens(norm, h, w);
    for (double v : s.value()) CHECK(v == 0.0);
}

TEST_CASE("an isolated node is scored from its own features only") {
    // two components: node 0 isolated, nodes 1-2 connected
    std::vector<std::uint8_t> adj = {0, 0, 0, 0, 0, 1, 0, 1, 0};
    Tensor norm = padded_norm_adj(adj, 3, 3);
    Tensor h = Tensor::from({3, 1}, {5.0, 7.0, 9.0});
    Tensor w = Tensor::from({1, 2}, {1.0, -1.0});
    Tensor s = score_tokens(norm, h, w);
    CHECK(s.at(0, 0) == doctest::Approx(5.0));   // self-loop of degree-1 node passes x through
    CHECK(s.at(0, 1) == doctest::Approx(-5.0));

    Tensor h2 = Tensor::from({3, 1}, {5.0, 7.0, 100.0});  // changing node 2 leaves node 0 alone
    Tensor s2 = score_tokens(norm, h2, w);
    CHECK(s2.at(0, 0) == s.at(0, 0));
}

TEST_CASE("scores match the normalized-propagation formula on a 4-node graph") {
    std::vector<std::uint8_t> adj(16, 0);
    auto set = [&](std::size_t i, std::size_t j) {
        adj[i * 4 + j] = 1;
        adj[j * 4 + i] = 1;
    };
    set(0, 1);
    set(1, 2);
    set(2, 3);
    set(0, 3);
    Tensor norm = padded_norm_adj(adj, 4, 4);
    Tensor h = Tensor::from({4, 2}, {1, 0, 0, 1, 1, 1, 2, -1});
    Tensor w = Tensor::from({2, 2}, {0.5, -0.25, 1.5, 0.75});
    Tensor s = score_tokens(norm, h, w);

    // direct evaluation: S = A_hat (H W), all degrees are 3 with self-loops
    const double a = 1.0 / 3.0;
    std::vector<double> hw(8, 0.0);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 2; ++j)
            for (std::size_t k = 0; k < 2; ++k) hw[i * 2 + j] += h.value()[i * 2 + k] * w.value()[k * 2 + j];
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 2; ++j) {
            double expect = a * hw[i * 2 + j];
            for (std::size_t nb = 0; nb < 4; ++nb)
                if (adj[i * 4 + nb]) expect += a * hw[nb * 2 + j];
            CHECK(s.at(i, j) == doctest::Approx(expect).epsilon(1e-12));
        }
}

TEST_CASE("the scorer does not leak gradients into the embeddings") {
    std::vector<std::uint8_t> adj = {0, 1, 1, 0};
    Tensor norm = padded_norm_adj(adj, 2, 2);
    Tensor h = Tensor::from({2, 2}, {1, 2, 3, 4}, true);
    Tensor w = Tensor::from({2, 2}, {1, 0, 0, 1}, true);
    Tensor s = score_tokens(norm, h, w);
    backward(sum_all(s));
    for (double g : h.grad()) CHECK(g == 0.0);
    double wg = 0;
    for (double g : w.grad()) wg += std::abs(g);
    CHECK(wg > 0.0);
}

TEST_CASE("perturb_rows zeroes exactly ceil(p_s * n) valid rows") {
    Rng rng(1);
    SUBCASE("p_s = 0 is identity") {
        auto keep = perturb_rows(ones(6), 0.0, rng);
        for (double v : keep) CHECK(v == 1.0);
    }
    SUBCASE("n=10, p_s=0.25 zeroes ceil(2.5)=3 rows") {
        auto keep = perturb_rows(ones(10), 0.25, rng);
        std::size_t zeros = 0;
        for (double v : keep) zeros += v == 0.0 ? 1 : 0;
        CHECK(zeros == 3);
    }
    SUBCASE("p_s forcing n-1 drops leaves one row") {
        auto keep = perturb_rows(ones(5), 0.8, rng);  // ceil(4)=4 dropped
        std::size_t survivors = 0;
        for (double v : keep) survivors += v == 1.0 ? 1 : 0;
        CHECK(survivors == 1);
    }
    SUBCASE("padded rows are never selected") {
        std::vector<double> validity = {1, 1, 1, 0, 0};
        for (int trial = 0; trial < 50; ++trial) {
            auto keep = perturb_rows(validity, 0.5, rng);
            CHECK(keep[3] == 1.0);
            CHECK(keep[4] == 1.0);
        }
    }
}

TEST_CASE("select_topk keep_ratio 1 keeps every valid node") {
    auto s = scores_from({1.0, -2.0, 0.5, 3.0});
    TokenMask tm = select_topk(s, ones(4), 1.0, 1.0, TokenMode::eval, ones(4), nullptr);
    CHECK(tm.keep_count == 4);
    CHECK(tm.mask == std::vector<std::uint8_t>{1, 1, 1, 1});
}

TEST_CASE("eval mode selects the top-k keep logits with index tie-break") {
    auto s = scores_from({5.0, 1.0, 0.0, 3.0});
    TokenMask tm = select_topk(s, ones(4), 0.5, 1.0, TokenMode::eval, ones(4), nullptr);
    CHECK(tm.keep_count == 2);
    CHECK(tm.mask == std::vector<std::uint8_t>{1, 0, 0, 1});
    CHECK(tm.kept == std::vector<std::size_t>{0, 3});

    auto tied = scores_from({2.0, 2.0, 2.0, 2.0});
    TokenMask tt = select_topk(tied, ones(4), 0.5, 1.0, TokenMode::eval, ones(4), nullptr);
    CHECK(tt.kept == std::vector<std::size_t>{0, 1});
}

TEST_CASE("keep count rounds half-up with a floor of one") {
    auto s = scores_from({1, 2, 3, 4, 5});
    CHECK(select_topk(s, ones(5), 0.5, 1.0, TokenMode::eval, ones(5), nullptr).keep_count == 3);
    CHECK(select_topk(s, ones(5), 0.1, 1.0, TokenMode::eval, ones(5), nullptr).keep_count == 1);
    CHECK(select_topk(s, ones(5), 0.3, 1.0, TokenMode::eval, ones(5), nullptr).keep_count == 2);
}

TEST_CASE("select_topk errors with no valid nodes") {
    auto s = scores_from({1, 2});
    CHECK_THROWS_AS(select_topk(s, ones(2), 0.5, 1.0, TokenMode::eval, {0.0, 0.0}, nullptr),
                    std::runtime_error);
}

TEST_CASE("train-mode mask equals the eval-mode mask of noised logits as tau -> 0") {
    // the hard selection is tau-independent; pin the noise by reusing the seed
    auto s = scores_from({0.5, 1.5, -0.5, 0.2, 0.9});
    Rng rng_a(99);
    TokenMask train = select_topk(s, ones(5), 0.4, 1e-6, TokenMode::train, ones(5), &rng_a);

    Rng rng_b(99);
    std::vector<double> noised;
    for (std::size_t i = 0; i < 5; ++i) {
        const double gk = rng_b.gumbel();
        const double gd = rng_b.gumbel();
        noised.push_back(s.at(i, 0) + gk - (s.at(i, 1) + gd));
    }
    TokenMask eval = select_topk(scores_from(noised), ones(5), 0.4, 1.0, TokenMode::eval, ones(5), nullptr);
    CHECK(train.mask == eval.mask);
}

TEST_CASE("exactly k tokens survive for every seed") {
    auto s = scores_from({0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7});
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng(seed);
        auto keep = perturb_rows(ones(7), 0.3, rng);
        TokenMask tm = select_topk(s, keep, 0.5, 0.7, TokenMode::train, ones(7), &rng);
        std::size_t count = 0;
        for (auto b : tm.mask) count += b;
        CHECK(count == 4);  // round(0.5*7)=4 (half-up)
        CHECK(count == tm.keep_count);
    }
}

TEST_CASE("apply_token_mask gathers rows and records the index map") {
    Tensor h = Tensor::from({3, 2}, {1, 2, 3, 4, 5, 6});
    TokenMask tm;
    tm.mask = {1, 0, 1};
    tm.kept = {0, 2};
    tm.keep_count = 2;
    tm.valid_count = 3;
    TokenApply ap = apply_token_mask(h, tm);
    CHECK(ap.gathered);
    CHECK(ap.h.rows() == 2);
    CHECK(ap.h.value() == std::vector<double>{1, 2, 5, 6});
    CHECK(ap.kept == std::vector<std::size_t>{0, 2});
}

TEST_CASE("apply_token_mask with an all-ones mask returns the tensor unchanged") {
    Tensor h = Tensor::from({3, 2}, {1, 2, 3, 4, 5, 6});
    TokenMask tm;
    tm.mask = {1, 1, 1};
    tm.kept = {0, 1, 2};
    tm.keep_count = 3;
    tm.valid_count = 3;
    TokenApply ap = apply_token_mask(h, tm);
    CHECK_FALSE(ap.gathered);
    CHECK(ap.h.node() == h.node());
}

TEST_CASE("straight-through scorer gradients are nonzero when dropping changes the loss") {
    std::vector<std::uint8_t> adj = {0, 1, 0, 1, 0, 1, 0, 1, 0};
    Tensor norm = padded_norm_adj(adj, 3, 3);
    Tensor h = Tensor::from({3, 2}, {1, 2, 3, 4, 5, 6}, true);
    Tensor scorer = Tensor::from({2, 2}, {0.3, -0.2, 0.1, 0.4}, true);

    Rng rng(7);
    Tensor scores = score_tokens(norm, h, scorer);
    TokenMask tm = select_topk(scores, ones(3), 0.67, 0.8, TokenMode::train, ones(3), &rng);
    TokenApply ap = apply_token_mask(h, tm);
    backward(sum_all(mul(ap.h, ap.h)));

    double norm1 = 0;
    for (double g : scorer.grad()) norm1 += std::abs(g);
    CHECK(norm1 > 0.0);
}

TEST_CASE("token pruning in an interleaved stack rewires later GCN layers") {
    ModelConfig cfg;
    cfg.input_dim = 3;
    cfg.hidden_dim = 8;
    cfg.head_dim = 4;
    cfg.num_heads = 2;
    cfg.ffn_dim = 16;
    cfg.num_gnn_layers = 3;
    cfg.num_transformer_layers = 3;
    cfg.stack_style = StackStyle::interleaved;
    Rng rng(21);
    ModelParams p = ModelParams::init(cfg, rng);
    PruneState st = PruneState::identity(3, 3, 2);
    st.token.active = true;
    st.token.keep_ratio = 0.5;
    st.token.stage = 0;  // prune after the first block; gnn1, gnn2 see the subgraph
    st.token.scorer_w = glorot_tensor({8, 2}, 8, 2, rng);

    BatchSlot slot;
    slot.n = 9;
    slot.dataset_index = 0;
    slot.label = 0;
    slot.adj.assign(81, 0);
    for (std::size_t i = 0; i + 1 < 9; ++i) {
        slot.adj[i * 9 + i + 1] = 1;
        slot.adj[(i + 1) * 9 + i] = 1;
    }
    slot.features.resize(27);
    for (double& v : slot.features) v = rng.normal();
    slot.validity.assign(9, 1.0);

    ForwardTrace trace;
    ForwardOptions opts;
    opts.training = false;
    Tensor logits = forward_slot(cfg, p, st, slot, opts, &trace);
    for (double v : logits.value()) CHECK(std::isfinite(v));
    CHECK(trace.token_kept.size() == 5);  // round(0.5*9) = 5, half-up
    CHECK(trace.attn_tokens[0] == 9);
    CHECK(trace.attn_tokens[1] == 5);
    CHECK(trace.attn_tokens[2] == 5);
}

TEST_CASE("token flops shrink quadratically after the stage") {
    ModelConfig cfg;
    cfg.input_dim = 4;
    cfg.hidden_dim = 32;
    cfg.head_dim = 8;
    cfg.num_heads = 4;
    cfg.ffn_dim = 64;
    cfg.num_gnn_layers = 1;
    cfg.num_transformer_layers = 3;
    PruneState st = PruneState::identity(1, 3, 4);
    st.token.active = true;
    st.token.stage = 0;
    st.token.keep_ratio = 0.5;
    StageSizes full = make_stage_sizes(cfg, st, 20, 60, {{20, 60}});
    StageSizes pruned = make_stage_sizes(cfg, st, 20, 60, {{10, 30}});
    FlopsReport rf = count_flops(cfg, full, st);
    FlopsReport rp = count_flops(cfg, pruned, st);
    // stage after block 0: blocks 1,2 run on half the tokens, so their
    // quadratic share drops 4x: full = 3q, pruned = q + 2*(q/4) = 1.5q
    CHECK(rf.attn_quadratic_flops == 2.0 * rp.attn_quadratic_flops);
}

}  // TEST_SUITE
