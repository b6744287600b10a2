#include <doctest.h>

#include <cmath>

#include "gtprune/model.hpp"
#include "fd_check.hpp"

using namespace gtprune;

namespace {

Graph make_graph(std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>>& edges,
                 std::size_t d, Rng& rng) {
    Graph g;
    g.n = n;
    g.adj.assign(n * n, 0);
    for (auto [i, j] : edges) g.set_edge(i, j);
    g.feature_dim = d;
    g.features.resize(n * d);
    for (double& v : g.features) v = rng.normal();
    g.label = 0;
    return g;
}

BatchSlot make_slot(const Graph& g) {
    BatchSlot s;
    s.n = g.n;
    s.dataset_index = 0;
    s.label = g.label;
    s.features = g.features;
    s.adj = g.adj;
    s.validity.assign(g.n, 1.0);
    return s;
}

BatchSlot make_padded_slot(const Graph& g, std::size_t n_pad) {
    BatchSlot s;
    s.n = g.n;
    s.dataset_index = 0;
    s.label = g.label;
    s.features.assign(n_pad * g.feature_dim, 0.0);
    s.adj.assign(n_pad * n_pad, 0);
    s.validity.assign(n_pad, 0.0);
    for (std::size_t i = 0; i < g.n; ++i) {
        s.validity[i] = 1.0;
        for (std::size_t j = 0; j < g.feature_dim; ++j)
            s.features[i * g.feature_dim + j] = g.features[i * g.feature_dim + j];
        for (std::size_t j = 0; j < g.n; ++j) s.adj[i * n_pad + j] = g.adj[i * g.n + j];
    }
    return s;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("gcn_layer on an isolated node reduces to gelu(x W)") {
    Rng rng(1);
    const std::size_t d = 3;
    std::vector<std::uint8_t> adj(1, 0);
    Tensor norm = padded_norm_adj(adj, 1, 1);
    CHECK(norm.value()[0] == 1.0);  // self-loop only, degree 1
    Tensor h = Tensor::from({1, d}, {0.5, -1.0, 2.0});
    Tensor w = glorot_tensor({d, d}, d, d, rng);
    Tensor out = gcn_layer(norm, h, w);
    Tensor expect = gelu(matmul(h, w));
    CHECK(max_abs_diff(out.value(), expect.value()) == 0.0);
}

TEST_CASE("two connected identical-feature nodes produce identical rows") {
    Rng rng(2);
    std::vector<std::uint8_t> adj = {0, 1, 1, 0};
    Tensor norm = padded_norm_adj(adj, 2, 2);
    Tensor h = Tensor::from({2, 3}, {1.0, 2.0, 3.0, 1.0, 2.0, 3.0});
    Tensor w = glorot_tensor({3, 3}, 3, 3, rng);
    Tensor out = gcn_layer(norm, h, w);
    for (std::size_t j = 0; j < 3; ++j) CHECK(out.value()[j] == doctest::Approx(out.value()[3 + j]));
}

TEST_CASE("gcn propagation matches a hand-computed 3-node path") {
    // path 0-1-2: degrees with self-loops are 2,3,2
    std::vector<std::uint8_t> adj = {0, 1, 0, 1, 0, 1, 0, 1, 0};
    Tensor norm = padded_norm_adj(adj, 3, 3);
    const double s2 = 1.0 / std::sqrt(2.0), s3 = 1.0 / std::sqrt(3.0);
    const double expected[9] = {s2 * s2, s2 * s3, 0.0, s3 * s2, s3 * s3, s3 * s2, 0.0, s2 * s3, s2 * s2};
    for (std::size_t i = 0; i < 9; ++i) CHECK(norm.value()[i] == doctest::Approx(expected[i]).epsilon(1e-12));

    Tensor h = Tensor::from({3, 1}, {1.0, 10.0, 100.0});
    Tensor w = Tensor::from({1, 1}, {1.0});
    Tensor prop = gcn_propagate(norm, h, w);
    CHECK(prop.value()[0] == doctest::Approx(s2 * s2 * 1.0 + s2 * s3 * 10.0).epsilon(1e-12));
    CHECK(prop.value()[1] == doctest::Approx(s3 * s2 * 1.0 + s3 * s3 * 10.0 + s3 * s2 * 100.0).epsilon(1e-12));
    CHECK(prop.value()[2] == doctest::Approx(s2 * s3 * 10.0 + s2 * s2 * 100.0).epsilon(1e-12));
}

TEST_CASE("single-token attention is the identity distribution") {
    Rng rng(3);
    ModelConfig cfg;
    cfg.input_dim = 4;
    cfg.hidden_dim = 4;
    cfg.head_dim = 2;
    cfg.num_heads = 2;
    cfg.ffn_dim = 8;
    cfg.num_gnn_layers = 1;
    cfg.num_transformer_layers = 1;
    ModelParams p = ModelParams::init(cfg, rng);
    Tensor h = Tensor::from({1, 4}, {0.1, 0.2, 0.3, 0.4});
    MhaResult res = mha(h, p.layers[0], {1, 1}, Tensor(), cfg.head_dim);
    for (const Tensor& a : res.attn) {
        REQUIRE(a.numel() == 1);
        CHECK(a.value()[0] == 1.0);
    }
    // output equals the projection of the concatenated v rows
    std::vector<Tensor> vs;
    for (std::size_t hi = 0; hi < 2; ++hi) vs.push_back(matmul(h, p.layers[0].wv[hi]));
    Tensor expect = matmul(concat_cols(vs), p.layers[0].wo);
    CHECK(max_abs_diff(res.out.value(), expect.value()) < 1e-15);
}

TEST_CASE("an all-zero head mask yields the projection of zeros") {
    Rng rng(4);
    ModelConfig cfg;
    cfg.input_dim = 4;
    cfg.hidden_dim = 4;
    cfg.head_dim = 2;
    cfg.num_heads = 2;
    cfg.num_gnn_layers = 1;
    cfg.num_transformer_layers = 1;
    ModelParams p = ModelParams::init(cfg, rng);
    Tensor h = Tensor::from({3, 4}, std::vector<double>(12, 0.7));
    MhaResult res = mha(h, p.layers[0], {0, 0}, Tensor(), cfg.head_dim);
    for (double v : res.out.value()) CHECK(v == 0.0);
}

TEST_CASE("attention rows match a closed-form softmax of QK^T/sqrt(dh)") {
    // hand-set 3 tokens, one head, d=2, dh=2
    ModelConfig cfg;
    cfg.input_dim = 2;
    cfg.hidden_dim = 2;
    cfg.head_dim = 2;
    cfg.num_heads = 1;
    cfg.num_gnn_layers = 1;
    cfg.num_transformer_layers = 1;
    Rng rng(5);
    ModelParams p = ModelParams::init(cfg, rng);
    p.layers[0].wq[0].value() = {1, 0, 0, 1};  // identity
    p.layers[0].wk[0].value() = {1, 0, 0, 1};
    p.layers[0].wv[0].value() = {1, 0, 0, 1};

    Tensor h = Tensor::from({3, 2}, {1.0, 0.0, 0.0, 1.0, 1.0, 1.0});
    MhaResult res = mha(h, p.layers[0], {1}, Tensor(), cfg.head_dim);
    const double inv = 1.0 / std::sqrt(2.0);
    for (std::size_t i = 0; i < 3; ++i) {
        double logits[3], mx = -1e300;
        for (std::size_t j = 0; j < 3; ++j) {
            double dot = 0;
            for (std::size_t k = 0; k < 2; ++k) dot += h.value()[i * 2 + k] * h.value()[j * 2 + k];
            logits[j] = dot * inv;
            mx = std::max(mx, logits[j]);
        }
        double denom = 0;
        for (double l : logits) denom += std::exp(l - mx);
        for (std::size_t j = 0; j < 3; ++j)
            CHECK(res.attn[0].value()[i * 3 + j] == doctest::Approx(std::exp(logits[j] - mx) / denom).epsilon(1e-12));
    }
}

TEST_CASE("transformer_block bypass bits are exact identities") {
    Rng rng(6);
    ModelConfig cfg;
    cfg.input_dim = 4;
    cfg.hidden_dim = 4;
    cfg.head_dim = 2;
    cfg.num_heads = 2;
    cfg.ffn_dim = 8;
    cfg.num_gnn_layers = 1;
    cfg.num_transformer_layers = 1;
    ModelParams p = ModelParams::init(cfg, rng);
    std::vector<double> vals(4 * 4);
    for (double& v : vals) v = rng.normal();
    Tensor h = Tensor::from({4, 4}, vals);

    BlockResult off = transformer_block(h, p.layers[0], {1, 1}, 0, 0, Tensor(), cfg.head_dim, 1e-5);
    CHECK(off.out.node() == h.node());  // the same tensor, not just equal values

    BlockResult mha_only = transformer_block(h, p.layers[0], {1, 1}, 1, 0, Tensor(), cfg.head_dim, 1e-5);
    CHECK(mha_only.out.node() == mha_only.after_mha.node());
}

TEST_CASE("zero-weight FFN stays finite via the eps path") {
    Rng rng(7);
    ModelConfig cfg;
    cfg.input_dim = 4;
    cfg.hidden_dim = 4;
    cfg.head_dim = 2;
    cfg.num_heads = 2;
    cfg.ffn_dim = 8;
    cfg.num_gnn_layers = 1;
    cfg.num_transformer_layers = 1;
    ModelParams p = ModelParams::init(cfg, rng);
    for (Tensor t : {p.layers[0].ffn_w1, p.layers[0].ffn_b1, p.layers[0].ffn_w2, p.layers[0].ffn_b2})
        std::fill(t.value().begin(), t.value().end(), 0.0);
    std::vector<double> vals(3 * 4);
    for (double& v : vals) v = rng.normal();
    Tensor h = Tensor::from({3, 4}, vals);
    BlockResult r = transformer_block(h, p.layers[0], {1, 1}, 0, 1, Tensor(), cfg.head_dim, 1e-5);
    for (double v : r.out.value()) CHECK(std::isfinite(v));
    // LN(0) collapses to the LN bias (zero), so the sublayer adds nothing
    CHECK(max_abs_diff(r.out.value(), h.value()) == 0.0);
}

TEST_CASE("full block passes a finite-difference gradient check") {
    Rng rng(8);
    ModelConfig cfg;
    cfg.input_dim = 4;
    cfg.hidden_dim = 4;
    cfg.head_dim = 2;
    cfg.num_heads = 2;
    cfg.ffn_dim = 6;
    cfg.num_gnn_layers = 1;
    cfg.num_transformer_layers = 1;
    ModelParams p = ModelParams::init(cfg, rng);
    std::vector<double> vals(4 * 4);
    for (double& v : vals) v = rng.normal();
    Tensor h = Tensor::from({4, 4}, vals);

    auto build = [&] {
        BlockResult r = transformer_block(h, p.layers[0], {1, 1}, 1, 1, Tensor(), cfg.head_dim, 1e-5);
        return mean_all(mul(r.out, r.out));
    };
    auto loss = build();
    backward(loss);
    std::vector<Tensor> params = p.all();
    std::vector<std::vector<double>> grads;
    for (const Tensor& t : params) grads.push_back(t.grad());
    auto fd = gtprune_tests::fd_compare(params, [&] { return build().item(); }, grads);
    INFO("worst rel err ", fd.rel_err);
    CHECK(fd.ok);
}

TEST_CASE("identical graphs in a batch give identical logits") {
    Rng rng(9);
    ModelConfig cfg;
    cfg.input_dim = 3;
    cfg.hidden_dim = 8;
    cfg.head_dim = 4;
    cfg.num_heads = 2;
    cfg.ffn_dim = 16;
    cfg.num_gnn_layers = 2;
    cfg.num_transformer_layers = 2;
    ModelParams p = ModelParams::init(cfg, rng);
    PruneState st = PruneState::identity(2, 2, 2);
    Graph g = make_graph(5, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {0, 4}}, 3, rng);

    ForwardOptions opts;
    Tensor l1 = forward_slot(cfg, p, st, make_slot(g), opts);
    Tensor l2 = forward_slot(cfg, p, st, make_slot(g), opts);
    CHECK(l1.value() == l2.value());
}

TEST_CASE("logits are invariant to node permutation within 1e-9") {
    Rng rng(10);
    ModelConfig cfg;
    cfg.input_dim = 3;
    cfg.hidden_dim = 8;
    cfg.head_dim = 4;
    cfg.num_heads = 2;
    cfg.ffn_dim = 16;
    cfg.num_gnn_layers = 2;
    cfg.num_transformer_layers = 2;
    ModelParams p = ModelParams::init(cfg, rng);
    PruneState st = PruneState::identity(2, 2, 2);
    Graph g = make_graph(6, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}, {0, 5}, {1, 4}}, 3, rng);

    // permute nodes by a fixed permutation
    std::vector<std::size_t> perm = {3, 0, 5, 1, 4, 2};
    Graph pg;
    pg.n = 6;
    pg.adj.assign(36, 0);
    pg.feature_dim = 3;
    pg.features.resize(18);
    for (std::size_t i = 0; i < 6; ++i) {
        for (std::size_t j = 0; j < 6; ++j) pg.adj[perm[i] * 6 + perm[j]] = g.adj[i * 6 + j];
        for (std::size_t k = 0; k < 3; ++k) pg.features[perm[i] * 3 + k] = g.features[i * 3 + k];
    }

    ForwardOptions opts;
    Tensor a = forward_slot(cfg, p, st, make_slot(g), opts);
    Tensor b = forward_slot(cfg, p, st, make_slot(pg), opts);
    CHECK(max_abs_diff(a.value(), b.value()) < 1e-9);
}

TEST_CASE("padding never changes the logits") {
    Rng rng(11);
    ModelConfig cfg;
    cfg.input_dim = 3;
    cfg.hidden_dim = 8;
    cfg.head_dim = 4;
    cfg.num_heads = 2;
    cfg.ffn_dim = 16;
    cfg.num_gnn_layers = 2;
    cfg.num_transformer_layers = 2;
    ModelParams p = ModelParams::init(cfg, rng);
    PruneState st = PruneState::identity(2, 2, 2);
    Graph g = make_graph(4, {{0, 1}, {1, 2}, {2, 3}}, 3, rng);

    ForwardOptions opts;
    Tensor alone = forward_slot(cfg, p, st, make_slot(g), opts);
    Tensor padded = forward_slot(cfg, p, st, make_padded_slot(g, 9), opts);
    CHECK(max_abs_diff(alone.value(), padded.value()) < 1e-9);
}

TEST_CASE("full model gradients match central finite differences on a 5-node graph") {
    Rng rng(12);
    ModelConfig cfg;
    cfg.input_dim = 3;
    cfg.hidden_dim = 4;
    cfg.head_dim = 2;
    cfg.num_heads = 2;
    cfg.ffn_dim = 6;
    cfg.num_gnn_layers = 2;
    cfg.num_transformer_layers = 1;
    ModelParams p = ModelParams::init(cfg, rng);
    PruneState st = PruneState::identity(2, 1, 2);
    Graph g = make_graph(5, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {0, 2}}, 3, rng);
    g.label = 1;

    auto build = [&] {
        ForwardOptions opts;
        Tensor logits = forward_slot(cfg, p, st, make_slot(g), opts);
        return cross_entropy_with_logits(logits, {g.label});
    };
    auto loss = build();
    backward(loss);
    std::vector<Tensor> params = p.all();
    std::vector<std::vector<double>> grads;
    for (const Tensor& t : params) grads.push_back(t.grad());
    auto fd = gtprune_tests::fd_compare(params, [&] { return build().item(); }, grads);
    INFO("worst rel err ", fd.rel_err, " at param ", fd.param_index);
    CHECK(fd.ok);
}

TEST_CASE("count_flops basics") {
    ModelConfig cfg;
    cfg.input_dim = 8;
    cfg.hidden_dim = 64;
    cfg.head_dim = 16;
    cfg.num_heads = 4;
    cfg.ffn_dim = 128;
    cfg.num_gnn_layers = 2;
    cfg.num_transformer_layers = 0;
    PruneState st = PruneState::identity(2, 0, 4);
    StageSizes sizes = make_stage_sizes(cfg, st, 30, 90);
    FlopsReport r = count_flops(cfg, sizes, st);
    CHECK(r.mha_flops == 0.0);
    CHECK(r.total_flops == r.gnn_flops);

    // params arithmetic equals the instantiated tensor sum
    cfg.num_transformer_layers = 3;
    Rng rng(13);
    ModelParams p = ModelParams::init(cfg, rng);
    PruneState st3 = PruneState::identity(2, 3, 4);
    StageSizes sizes3 = make_stage_sizes(cfg, st3, 30, 90);
    FlopsReport r3 = count_flops(cfg, sizes3, st3);
    CHECK(r3.params == static_cast<double>(p.count()));
}

TEST_CASE("the quadratic attention term scales exactly 4x when n halves") {
    ModelConfig cfg;
    cfg.input_dim = 8;
    cfg.hidden_dim = 64;
    cfg.head_dim = 16;
    cfg.num_heads = 4;
    cfg.ffn_dim = 128;
    cfg.num_gnn_layers = 2;
    cfg.num_transformer_layers = 4;
    PruneState st = PruneState::identity(2, 4, 4);
    FlopsReport full = count_flops(cfg, make_stage_sizes(cfg, st, 30, 90), st);
    FlopsReport half = count_flops(cfg, make_stage_sizes(cfg, st, 15, 45), st);
    CHECK(full.attn_quadratic_flops == 4.0 * half.attn_quadratic_flops);
}

TEST_CASE("count_flops matches an independently computed closed form") {
    ModelConfig cfg;
    cfg.input_dim = 8;
    cfg.hidden_dim = 64;
    cfg.head_dim = 16;
    cfg.num_heads = 4;
    cfg.ffn_dim = 128;
    cfg.num_gnn_layers = 2;
    cfg.num_transformer_layers = 4;
    PruneState st = PruneState::identity(2, 4, 4);
    const double n = 30, nnz = 90, d = 64, dh = 16, f = 128, din = 8;

    // oracle written out from the documented convention
    const double gnn = 2.0 * (nnz * d + n * din * d) + 2.0 * (nnz * d + n * d * d);
    const double per_head = 2.0 * (3.0 * n * d * dh) + 2.0 * n * n * dh + 5.0 * n * n +
                            2.0 * n * n * dh + 2.0 * n * dh * d;
    const double mha = 4.0 * 4.0 * per_head;  // layers * heads
    const double ffn = 4.0 * (2.0 * n * d * f + 2.0 * n * f * d);
    FlopsReport r = count_flops(cfg, make_stage_sizes(cfg, st, 30, 90), st);
    CHECK(r.gnn_flops == gnn);
    CHECK(r.mha_flops == mha);
    CHECK(r.ffn_flops == ffn);
    CHECK(r.total_flops == gnn + mha + ffn);
}

TEST_CASE("count_flops is monotone under sparsity") {
    ModelConfig cfg;
    cfg.input_dim = 8;
    cfg.hidden_dim = 32;
    cfg.head_dim = 8;
    cfg.num_heads = 4;
    cfg.ffn_dim = 64;
    cfg.num_gnn_layers = 2;
    cfg.num_transformer_layers = 2;
    PruneState dense = PruneState::identity(2, 2, 4);
    FlopsReport base = count_flops(cfg, make_stage_sizes(cfg, dense, 20, 60), dense);

    PruneState heads = dense;
    heads.head.bits[0][1] = 0;
    FlopsReport fewer_heads = count_flops(cfg, make_stage_sizes(cfg, heads, 20, 60), heads);
    CHECK(fewer_heads.mha_flops < base.mha_flops);
    CHECK(fewer_heads.gnn_flops == base.gnn_flops);

    PruneState layers = dense;
    layers.layer.ffn[1] = 0;
    FlopsReport fewer_layers = count_flops(cfg, make_stage_sizes(cfg, layers, 20, 60), layers);
    CHECK(fewer_layers.ffn_flops == base.ffn_flops / 2.0);

    PruneState weights = dense;
    weights.weight.active = true;
    weights.weight.masks["tf.0.ffn.w1"] = std::vector<double>(32 * 64, 1.0);
    for (std::size_t i = 0; i < 32 * 64 / 2; ++i) weights.weight.masks["tf.0.ffn.w1"][i] = 0.0;
    FlopsReport half_ffn = count_flops(cfg, make_stage_sizes(cfg, weights, 20, 60), weights);
    CHECK(half_ffn.ffn_flops < base.ffn_flops);
}

TEST_CASE("identity prune state forward equals the dense forward bitwise") {
    Rng rng(14);
    ModelConfig cfg;
    cfg.input_dim = 3;
    cfg.hidden_dim = 8;
    cfg.head_dim = 4;
    cfg.num_heads = 2;
    cfg.ffn_dim = 16;
    cfg.num_gnn_layers = 2;
    cfg.num_transformer_layers = 2;
    ModelParams p = ModelParams::init(cfg, rng);
    Graph g = make_graph(5, {{0, 1}, {1, 2}, {2, 3}, {3, 4}}, 3, rng);
    PruneState st = PruneState::identity(2, 2, 2);

    ForwardOptions opts;
    Tensor dense_logits = forward_slot(cfg, p, st, make_slot(g), opts);
    ModelParams eff = effective_params(p, st.weight);  // inactive masks: same tensors
    Tensor eff_logits = forward_slot(cfg, eff, st, make_slot(g), opts);
    CHECK(dense_logits.value() == eff_logits.value());
}

}  // TEST_SUITE
