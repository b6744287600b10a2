#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "gtprune/optim.hpp"
#include "gtprune/rng.hpp"
#include "gtprune/weight_pruner.hpp"

using namespace gtprune;

TEST_SUITE("weight_pruner") {

TEST_CASE("schedule endpoints are exact") {
    PruneSchedule s;
    s.p_i = 0.13;
    s.p_f = 0.87;
    s.t0 = 5;
    s.m = 10;
    s.dt = 3;
    CHECK(schedule_sparsity(5, s) == 0.13);
    CHECK(schedule_sparsity(5 + 30, s) == 0.87);
    CHECK(schedule_sparsity(0, s) == 0.13);    // clamped before t0
    CHECK(schedule_sparsity(1000, s) == 0.87);  // clamped after the ramp
}

TEST_CASE("schedule midpoint evaluates the cubic") {
    PruneSchedule s;
    s.p_i = 0.0;
    s.p_f = 0.8;
    s.t0 = 0;
    s.m = 10;
    s.dt = 1;
    CHECK(schedule_sparsity(5, s) == doctest::Approx(0.7).epsilon(1e-12));
}

TEST_CASE("schedule is monotone across a 1000-point grid") {
    PruneSchedule s;
    s.p_i = 0.05;
    s.p_f = 0.9;
    s.t0 = 3;
    s.m = 250;
    s.dt = 4;
    double prev = -1.0;
    for (std::size_t t = 0; t < 1000; ++t) {
        const double p = schedule_sparsity(t, s);
        CHECK(p >= prev);
        prev = p;
    }
}

TEST_CASE("magnitude_prune basics") {
    SUBCASE("p = 0 keeps the mask all-ones") {
        std::vector<double> w = {0.1, 0.5, 0.3};
        std::vector<double> mask(3, 0.0);
        magnitude_prune(w, mask, 0.0);
        CHECK(mask == std::vector<double>{1, 1, 1});
    }
    SUBCASE("the smallest magnitude goes first") {
        std::vector<double> w = {0.1, 0.5, 0.3};
        std::vector<double> mask(3, 1.0);
        magnitude_prune(w, mask, 0.3);  // ceil(0.9) = 1
        CHECK(mask == std::vector<double>{0, 1, 1});
    }
    SUBCASE("ties break toward the lower flat index") {
        std::vector<double> w = {0.2, -0.2, 0.2, 0.7};
        std::vector<double> mask(4, 1.0);
        magnitude_prune(w, mask, 0.5);  // ceil(2) = 2
        CHECK(mask == std::vector<double>{0, 0, 1, 1});
    }
}

TEST_CASE("magnitude_prune matches a brute-force sorting oracle") {
    Rng rng(1);
    std::vector<double> w(64);
    for (double& v : w) v = rng.normal();
    std::vector<double> mask(64, 1.0);
    magnitude_prune(w, mask, 0.5);

    std::vector<std::size_t> idx(64);
    for (std::size_t i = 0; i < 64; ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if (std::abs(w[a]) != std::abs(w[b])) return std::abs(w[a]) < std::abs(w[b]);
        return a < b;
    });
    std::vector<double> expect(64, 1.0);
    for (std::size_t i = 0; i < 32; ++i) expect[idx[i]] = 0.0;
    CHECK(mask == expect);
}

TEST_CASE("mask sparsity tracks the requested p within 1/|W|") {
    Rng rng(2);
    std::vector<double> w(97);
    for (double& v : w) v = rng.normal();
    std::vector<double> mask(97, 1.0);
    for (double p : {0.1, 0.33, 0.5, 0.77, 0.9}) {
        magnitude_prune(w, mask, p);
        CHECK(std::abs(mask_sparsity(mask) - p) <= 1.0 / 97.0);
    }
}

TEST_CASE("regrow_weights basics") {
    std::vector<double> w = {0.1, 0.2, 0.3, 0.4};
    SUBCASE("fraction 0 is a no-op") {
        std::vector<double> mask = {0, 0, 1, 1};
        std::vector<double> g = {9, 8, 0, 0};
        CHECK(regrow_weights(w, g, mask, 0.0) == 0);
        CHECK(mask == std::vector<double>{0, 0, 1, 1});
    }
    SUBCASE("largest gradient magnitude wins") {
        std::vector<double> mask = {0, 0, 0, 1};
        std::vector<double> g = {1, 7, 3, 0};
        CHECK(regrow_weights(w, g, mask, 0.34) == 2);  // ceil(0.34*3) = 2
        CHECK(mask == std::vector<double>{0, 1, 1, 1});
    }
    SUBCASE("zero gradients reactivate by index order") {
        std::vector<double> mask = {0, 0, 0, 0};
        std::vector<double> g = {0, 0, 0, 0};
        regrow_weights(w, g, mask, 0.5);
        CHECK(mask == std::vector<double>{1, 1, 0, 0});
    }
}

TEST_CASE("prune plus regrow keeps the scheduled sparsity across a simulated run") {
    Rng rng(3);
    PruneSchedule s;
    s.p_i = 0.0;
    s.p_f = 0.75;
    s.t0 = 2;
    s.m = 20;
    s.dt = 1;
    std::vector<double> w(200);
    for (double& v : w) v = rng.normal();
    std::vector<double> mask(200, 1.0);

    for (std::size_t t = 0; t < 30; ++t) {
        if (!is_prune_epoch(t, s)) continue;
        const double p = schedule_sparsity(t, s);
        magnitude_prune(w, mask, p);
        // simulated training drift on active weights + random gradients
        std::vector<double> grads(200);
        for (double& g : grads) g = rng.normal();
        for (std::size_t i = 0; i < w.size(); ++i)
            if (mask[i] == 1.0) w[i] += 0.01 * rng.normal();
        regrow_weights(w, grads, mask, 0.1);
        magnitude_prune(w, mask, p);
        CHECK(std::abs(mask_sparsity(mask) - p) <= 1.0 / 200.0);
    }
    CHECK(mask_sparsity(mask) == doctest::Approx(ceil_frac(0.75, 200) / 200.0));
}

TEST_CASE("masked weights stay bit-frozen between updates") {
    // the optimizer contract: masked entries receive no update
    Rng rng(4);
    Tensor w = Tensor::from({8}, {0.5, -0.1, 0.9, 0.02, -0.7, 0.3, -0.05, 1.2}, true);
    std::vector<double> mask(8, 1.0);
    magnitude_prune(w.value(), mask, 0.5);
    const std::vector<double> frozen_before = w.value();

    Adam opt(0.1);
    opt.attach({w});
    for (int step = 0; step < 5; ++step) {
        opt.zero_grad();
        backward(sum_all(mul(apply_mask_st(w, mask), Tensor::from({8}, {1, 2, 3, 4, 5, 6, 7, 8}))));
        opt.step({&mask});
    }
    for (std::size_t i = 0; i < 8; ++i) {
        if (mask[i] == 0.0) {
            CHECK(w.value()[i] == frozen_before[i]);
        } else {
            CHECK(w.value()[i] != frozen_before[i]);
        }
    }
}

TEST_CASE("apply_weight_masks identity and flops density scaling") {
    ModelConfig cfg;
    cfg.input_dim = 4;
    cfg.hidden_dim = 8;
    cfg.head_dim = 4;
    cfg.num_heads = 2;
    cfg.ffn_dim = 16;
    cfg.num_gnn_layers = 1;
    cfg.num_transformer_layers = 1;
    Rng rng(5);
    ModelParams p = ModelParams::init(cfg, rng);

    WeightMaskSet inert;
    ModelParams same = apply_weight_masks(p, inert);
    CHECK(same.gcn_w[0].node() == p.gcn_w[0].node());

    WeightMaskSet half;
    half.active = true;
    half.masks["tf.0.ffn.w1"] = std::vector<double>(8 * 16, 1.0);
    for (std::size_t i = 0; i < 64; ++i) half.masks["tf.0.ffn.w1"][i] = 0.0;
    CHECK(half.density("tf.0.ffn.w1") == 0.5);
    ModelParams eff = apply_weight_masks(p, half);
    for (std::size_t i = 0; i < 64; ++i) CHECK(eff.layers[0].ffn_w1.value()[i] == 0.0);

    PruneState dense_state = PruneState::identity(1, 1, 2);
    PruneState masked_state = dense_state;
    masked_state.weight = half;
    FlopsReport base = count_flops(cfg, make_stage_sizes(cfg, dense_state, 10, 30), dense_state);
    FlopsReport scaled = count_flops(cfg, make_stage_sizes(cfg, masked_state, 10, 30), masked_state);
    const double n = 10, d = 8, f = 16;
    CHECK(base.ffn_flops - scaled.ffn_flops == doctest::Approx(0.5 * 2.0 * n * d * f));
}

TEST_CASE("an all-zero first FFN matrix leaves only the bias path") {
    ModelConfig cfg;
    cfg.input_dim = 4;
    cfg.hidden_dim = 8;
    cfg.head_dim = 4;
    cfg.num_heads = 2;
    cfg.ffn_dim = 16;
    cfg.num_gnn_layers = 1;
    cfg.num_transformer_layers = 1;
    Rng rng(6);
    ModelParams p = ModelParams::init(cfg, rng);
    for (double& v : p.layers[0].ffn_b1.value()) v = rng.normal();

    WeightMaskSet masks;
    masks.active = true;
    masks.masks["tf.0.ffn.w1"] = std::vector<double>(8 * 16, 0.0);
    ModelParams eff = apply_weight_masks(p, masks);

    std::vector<double> hv(3 * 8);
    for (double& v : hv) v = rng.normal();
    Tensor h = Tensor::from({3, 8}, hv);
    // FFN first matmul is zero, so the hidden activations equal gelu(b1) rows
    Tensor hidden = gelu(add_rowvec(matmul(h, eff.layers[0].ffn_w1), eff.layers[0].ffn_b1));
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 16; ++j) CHECK(hidden.at(i, j) == hidden.at(0, j));
}

}  // TEST_SUITE
