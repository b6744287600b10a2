#include "gtprune/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "gtprune/head_pruner.hpp"
#include "gtprune/optim.hpp"
#include "gtprune/tensor_store.hpp"
#include "gtprune/token_pruner.hpp"

namespace gtprune {

using nlohmann::json;
namespace fs = std::filesystem;

PrunerKind pruner_from_string(const std::string& s) {
    if (s == "none") return PrunerKind::none;
    if (s == "token") return PrunerKind::token;
    if (s == "head") return PrunerKind::head;
    if (s == "layer") return PrunerKind::layer;
    if (s == "weight") return PrunerKind::weight;
    fail("unknown pruner '" + s + "' (expected none|token|head|layer|weight)");
}

std::string to_string(PrunerKind k) {
    switch (k) {
        case PrunerKind::none: return "none";
        case PrunerKind::token: return "token";
        case PrunerKind::head: return "head";
        case PrunerKind::layer: return "layer";
        default: return "weight";
    }
}

MetricKind metric_from_string(const std::string& s) {
    if (s == "accuracy") return MetricKind::accuracy;
    if (s == "auc") return MetricKind::auc;
    fail("unknown metric '" + s + "' (expected accuracy|auc)");
}

std::string to_string(MetricKind k) { return k == MetricKind::accuracy ? "accuracy" : "auc"; }

std::string format_double(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// RunConfig
// ---------------------------------------------------------------------------

namespace {

struct KvReader {
    std::map<std::string, std::string> kv;
    std::set<std::string> used;

    std::string str(const std::string& key, const std::string& dflt) {
        auto it = kv.find(key);
        if (it == kv.end()) return dflt;
        used.insert(key);
        return it->second;
    }
    double num(const std::string& key, double dflt) {
        auto it = kv.find(key);
        if (it == kv.end()) return dflt;
        used.insert(key);
        return std::stod(it->second);
    }
    std::size_t size(const std::string& key, std::size_t dflt) {
        auto it = kv.find(key);
        if (it == kv.end()) return dflt;
        used.insert(key);
        return std::stoull(it->second);
    }
    std::uint64_t u64(const std::string& key, std::uint64_t dflt) {
        auto it = kv.find(key);
        if (it == kv.end()) return dflt;
        used.insert(key);
        return std::stoull(it->second);
    }
    bool flag(const std::string& key, bool dflt) {
        auto it = kv.find(key);
        if (it == kv.end()) return dflt;
        used.insert(key);
        check(it->second == "true" || it->second == "false", "config: " + key + " must be true|false");
        return it->second == "true";
    }
    void finish() const {
        for (const auto& [k, v] : kv)
            check(used.count(k) > 0, "config: unknown key '" + k + "'");
    }
};

KvReader parse_kv(const std::string& text) {
    KvReader r;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        // trim
        const auto b = line.find_first_not_of(" \t\r");
        if (b == std::string::npos) continue;
        const auto e = line.find_last_not_of(" \t\r");
        line = line.substr(b, e - b + 1);
        const auto eq = line.find('=');
        check(eq != std::string::npos, "config line " + std::to_string(lineno) + ": expected key=value");
        std::string key = line.substr(0, eq);
        std::string val = line.substr(eq + 1);
        auto trim = [](std::string s) {
            const auto b2 = s.find_first_not_of(" \t");
            const auto e2 = s.find_last_not_of(" \t");
            return b2 == std::string::npos ? std::string() : s.substr(b2, e2 - b2 + 1);
        };
        key = trim(key);
        val = trim(val);
        check(!key.empty() && !val.empty(), "config line " + std::to_string(lineno) + ": empty key or value");
        check(r.kv.count(key) == 0, "config: duplicate key '" + key + "'");
        r.kv[key] = val;
    }
    return r;
}

}  // namespace

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    check(in.good(), "config: cannot open " + path);
    std::ostringstream text;
    text << in.rdbuf();
    return from_string(text.str());
}

RunConfig RunConfig::from_string(const std::string& text) {
    KvReader r = parse_kv(text);
    RunConfig c;

    c.data_path = r.str("data.path", "");
    c.use_synth = c.data_path.empty();
    c.synth.count = r.size("synth.count", c.synth.count);
    c.synth.n_min = r.size("synth.n_min", c.synth.n_min);
    c.synth.n_max = r.size("synth.n_max", c.synth.n_max);
    c.synth.feature_dim = r.size("synth.d", c.synth.feature_dim);
    c.synth.motif = motif_from_string(r.str("synth.motif", "triangle"));
    c.synth.positive_fraction = r.num("synth.pos_fraction", c.synth.positive_fraction);
    c.synth.seed = r.u64("synth.seed", c.synth.seed);
    c.synth.feature_mode = feature_mode_from_string(r.str("synth.features", "structural"));
    c.train_frac = r.num("split.train", c.train_frac);
    c.val_frac = r.num("split.val", c.val_frac);
    c.split_seed = r.u64("split.seed", 0);

    c.model.num_gnn_layers = r.size("model.gnn_layers", c.model.num_gnn_layers);
    c.model.num_transformer_layers = r.size("model.tf_layers", c.model.num_transformer_layers);
    c.model.hidden_dim = r.size("model.hidden", c.model.hidden_dim);
    c.model.num_heads = r.size("model.heads", c.model.num_heads);
    c.model.head_dim = r.size("model.head_dim", c.model.hidden_dim / std::max<std::size_t>(1, c.model.num_heads));
    c.model.ffn_dim = r.size("model.ffn", c.model.ffn_dim);
    c.model.stack_style = stack_style_from_string(r.str("model.stack", "prelude"));
    c.model.ln_eps = r.num("model.ln_eps", c.model.ln_eps);

    c.optim.lr = r.num("train.lr", c.optim.lr);
    c.optim.beta1 = r.num("train.beta1", c.optim.beta1);
    c.optim.beta2 = r.num("train.beta2", c.optim.beta2);
    c.optim.eps = r.num("train.eps", c.optim.eps);
    c.epochs = r.size("train.epochs", c.epochs);
    c.batch_size = r.size("train.batch", c.batch_size);
    c.seed = r.u64("train.seed", c.seed);
    c.metric = metric_from_string(r.str("train.metric", "accuracy"));

    c.pruner = pruner_from_string(r.str("pruner", "none"));
    c.token.keep_ratio = r.num("token.keep_ratio", c.token.keep_ratio);
    c.token.p_s = r.num("token.p_s", c.token.p_s);
    c.token.tau_start = r.num("token.tau_start", c.token.tau_start);
    c.token.tau_end = r.num("token.tau_end", c.token.tau_end);
    c.token.stage = r.size("token.stage", c.token.stage);
    c.token.epoch_frozen = r.flag("token.epoch_frozen", c.token.epoch_frozen);
    c.head.sparsity = r.num("head.sparsity", c.head.sparsity);
    c.head.prune_epoch = r.size("head.prune_epoch", 0);
    c.head.regrow_every = r.size("head.regrow_every", c.head.regrow_every);
    c.head.regrow_fraction = r.num("head.regrow_fraction", c.head.regrow_fraction);
    c.layer.sparsity = r.num("layer.sparsity", c.layer.sparsity);
    c.layer.finalize = r.str("layer.finalize", "greedy") == "random" ? LayerFinalize::random
                                                                     : LayerFinalize::greedy;
    c.weight.sparsity = r.num("weight.sparsity", c.weight.sparsity);
    c.weight.p_i = r.num("weight.p_i", c.weight.p_i);
    c.weight.t0 = r.size("weight.t0", 0);
    c.weight.m = r.size("weight.m", 0);
    c.weight.dt = r.size("weight.dt", c.weight.dt);
    c.weight.regrow_fraction = r.num("weight.regrow_fraction", c.weight.regrow_fraction);

    c.out_root = r.str("out.dir", c.out_root);
    c.record_activations = r.flag("record.activations", false);
    r.finish();
    c.validate();
    return c;
}

namespace {

// resolve the auto-defaults that depend on the epoch budget
RunConfig resolved_config(const RunConfig& in) {
    RunConfig c = in;
    if (c.split_seed == 0) c.split_seed = c.seed;
    if (c.head.prune_epoch == 0) c.head.prune_epoch = std::max<std::size_t>(1, c.epochs / 3);
    if (c.weight.t0 == 0)
        c.weight.t0 = std::max<std::size_t>(1, static_cast<std::size_t>(0.1 * static_cast<double>(c.epochs)));
    if (c.weight.m == 0) {
        const auto span = std::max<std::size_t>(
            c.weight.dt, static_cast<std::size_t>(0.6 * static_cast<double>(c.epochs)));
        c.weight.m = std::max<std::size_t>(1, span / c.weight.dt);
    }
    return c;
}

}  // namespace

void RunConfig::validate() const {
    check(epochs >= 1 && batch_size >= 1, "config: epochs and batch size must be >= 1");
    check(train_frac > 0.0 && val_frac >= 0.0 && train_frac + val_frac < 1.0,
          "config: split fractions must leave a test set");
    if (!use_synth) check(!data_path.empty(), "config: data.path required when not synthetic");
    check(token.keep_ratio > 0.0 && token.keep_ratio <= 1.0, "config: token.keep_ratio in (0,1]");
    check(token.p_s >= 0.0 && token.p_s < 1.0, "config: token.p_s in [0,1)");
    check(token.tau_start > 0.0 && token.tau_end > 0.0, "config: token temperatures must be positive");
    check(head.sparsity >= 0.0 && head.sparsity < 1.0, "config: head.sparsity in [0,1)");
    check(layer.sparsity >= 0.0 && layer.sparsity < 1.0, "config: layer.sparsity in [0,1)");
    check(weight.p_i >= 0.0 && weight.p_i <= weight.sparsity && weight.sparsity < 1.0,
          "config: need 0 <= weight.p_i <= weight.sparsity < 1");
    check(weight.dt >= 1, "config: weight.dt >= 1");
    if (pruner == PrunerKind::token) {
        check(model.num_transformer_layers >= 1, "config: token pruning needs a transformer block");
        check(token.stage < model.num_transformer_layers, "config: token.stage out of range");
    }
}

std::string RunConfig::canonical() const {
    const RunConfig c = resolved_config(*this);
    std::ostringstream os;
    os << "data.path=" << (c.use_synth ? "<synth>" : c.data_path) << "\n";
    if (c.use_synth) {
        os << "synth.count=" << c.synth.count << "\nsynth.n_min=" << c.synth.n_min
           << "\nsynth.n_max=" << c.synth.n_max << "\nsynth.d=" << c.synth.feature_dim
           << "\nsynth.motif=" << (c.synth.motif == Motif::triangle ? "triangle" : "clique4")
           << "\nsynth.pos_fraction=" << format_double(c.synth.positive_fraction)
           << "\nsynth.seed=" << c.synth.seed << "\nsynth.features="
           << (c.synth.feature_mode == FeatureMode::structural ? "structural" : "random") << "\n";
    }
    os << "split.train=" << format_double(c.train_frac) << "\nsplit.val=" << format_double(c.val_frac)
       << "\nsplit.seed=" << c.split_seed << "\n";
    os << "model.gnn_layers=" << c.model.num_gnn_layers
       << "\nmodel.tf_layers=" << c.model.num_transformer_layers << "\nmodel.hidden=" << c.model.hidden_dim
       << "\nmodel.head_dim=" << c.model.head_dim << "\nmodel.heads=" << c.model.num_heads
       << "\nmodel.ffn=" << c.model.ffn_dim << "\nmodel.stack=" << to_string(c.model.stack_style)
       << "\nmodel.ln_eps=" << format_double(c.model.ln_eps) << "\n";
    os << "train.lr=" << format_double(c.optim.lr) << "\ntrain.beta1=" << format_double(c.optim.beta1)
       << "\ntrain.beta2=" << format_double(c.optim.beta2) << "\ntrain.eps=" << format_double(c.optim.eps)
       << "\ntrain.epochs=" << c.epochs << "\ntrain.batch=" << c.batch_size << "\ntrain.seed=" << c.seed
       << "\ntrain.metric=" << to_string(c.metric) << "\n";
    os << "pruner=" << to_string(c.pruner) << "\n";
    switch (c.pruner) {
        case PrunerKind::token:
            os << "token.keep_ratio=" << format_double(c.token.keep_ratio)
               << "\ntoken.p_s=" << format_double(c.token.p_s)
               << "\ntoken.tau_start=" << format_double(c.token.tau_start)
               << "\ntoken.tau_end=" << format_double(c.token.tau_end) << "\ntoken.stage=" << c.token.stage
               << "\ntoken.epoch_frozen=" << (c.token.epoch_frozen ? "true" : "false") << "\n";
            break;
        case PrunerKind::head:
            os << "head.sparsity=" << format_double(c.head.sparsity)
               << "\nhead.prune_epoch=" << c.head.prune_epoch << "\nhead.regrow_every=" << c.head.regrow_every
               << "\nhead.regrow_fraction=" << format_double(c.head.regrow_fraction) << "\n";
            break;
        case PrunerKind::layer:
            os << "layer.sparsity=" << format_double(c.layer.sparsity) << "\nlayer.finalize="
               << (c.layer.finalize == LayerFinalize::greedy ? "greedy" : "random") << "\n";
            break;
        case PrunerKind::weight:
            os << "weight.sparsity=" << format_double(c.weight.sparsity)
               << "\nweight.p_i=" << format_double(c.weight.p_i) << "\nweight.t0=" << c.weight.t0
               << "\nweight.m=" << c.weight.m << "\nweight.dt=" << c.weight.dt
               << "\nweight.regrow_fraction=" << format_double(c.weight.regrow_fraction) << "\n";
            break;
        case PrunerKind::none: break;
    }
    return os.str();
}

std::uint64_t RunConfig::config_hash() const { return fnv1a64(canonical()); }

DatasetBundle load_dataset(const RunConfig& cfg) {
    DatasetBundle b;
    b.graphs = cfg.use_synth ? synth_motif_dataset(cfg.synth) : load_jsonl(cfg.data_path);
    check(!b.graphs.empty(), "dataset is empty");
    b.hash = dataset_hash(b.graphs);
    b.split = random_split(b.graphs.size(), cfg.train_frac, cfg.val_frac,
                           resolved_config(cfg).split_seed);
    return b;
}

// ---------------------------------------------------------------------------
// metrics
// ---------------------------------------------------------------------------

double accuracy(const std::vector<int>& preds, const std::vector<int>& labels) {
    check(preds.size() == labels.size() && !preds.empty(), "accuracy: size mismatch");
    double hit = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) hit += preds[i] == labels[i] ? 1.0 : 0.0;
    return hit / static_cast<double>(preds.size());
}

double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    check(scores.size() == labels.size() && !scores.empty(), "roc_auc: size mismatch");
    std::vector<std::size_t> order(scores.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    // average ranks over ties
    std::vector<double> rank(scores.size(), 0.0);
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
        i = j + 1;
    }
    double pos = 0, neg = 0, rank_sum = 0;
    for (std::size_t k = 0; k < labels.size(); ++k) {
        if (labels[k] == 1) {
            pos += 1;
            rank_sum += rank[k];
        } else {
            neg += 1;
        }
    }
    check(pos > 0 && neg > 0, "roc_auc: need both classes present");
    return (rank_sum - pos * (pos + 1) / 2.0) / (pos * neg);
}

// ---------------------------------------------------------------------------
// evaluation
// ---------------------------------------------------------------------------

namespace {

BatchSlot slot_from_graph(const Graph& g, std::size_t idx) {
    BatchSlot s;
    s.n = g.n;
    s.dataset_index = idx;
    s.label = g.label;
    s.features = g.features;
    s.adj = g.adj;
    s.validity.assign(g.n, 1.0);
    return s;
}

std::size_t nnz_with_loops(const Graph& g) { return 2 * g.edge_count() + g.n; }

std::size_t induced_nnz_with_loops(const Graph& g, const std::vector<std::size_t>& nodes) {
    std::size_t nnz = nodes.size();
    for (std::size_t a : nodes)
        for (std::size_t b : nodes)
            if (a != b && g.edge(a, b)) ++nnz;
    return nnz;
}

}  // namespace

EvalOut evaluate_split(const ModelConfig& cfg, const ModelParams& params, const PruneState& state,
                       const std::vector<Graph>& graphs, const std::vector<std::size_t>& indices,
                       MetricKind metric) {
    check(!indices.empty(), "evaluate_split: empty split");
    NoGradGuard guard;
    ModelParams eff = effective_params(params, state.weight);
    EvalOut out;
    std::vector<int> labels;
    double loss = 0;
    for (std::size_t idx : indices) {
        ForwardTrace trace;
        ForwardOptions opts;
        opts.training = false;
        Tensor logits = forward_slot(cfg, eff, state, slot_from_graph(graphs[idx], idx), opts,
                                     state.token.active ? &trace : nullptr);
        int best = 0;
        for (std::size_t c = 1; c < cfg.num_classes; ++c)
            if (logits.value()[c] > logits.value()[static_cast<std::size_t>(best)]) best = static_cast<int>(c);
        out.preds.push_back(best);
        if (cfg.num_classes == 2) out.pos_scores.push_back(logits.value()[1] - logits.value()[0]);
        labels.push_back(graphs[idx].label);
        loss += cross_entropy_with_logits(logits, {graphs[idx].label}, Reduction::sum).item();
        if (state.token.active) out.kept.push_back(trace.token_kept);
    }
    out.mean_loss = loss / static_cast<double>(indices.size());
    if (metric == MetricKind::auc) {
        check(cfg.num_classes == 2, "auc metric needs a binary task");
        out.metric = roc_auc(out.pos_scores, labels);
    } else {
        out.metric = accuracy(out.preds, labels);
    }
    return out;
}

// ---------------------------------------------------------------------------
// parameter accounting and checkpoints
// ---------------------------------------------------------------------------

std::size_t active_param_count(const ModelConfig& cfg, const PruneState& state) {
    const std::size_t d = cfg.hidden_dim, dh = cfg.head_dim, f = cfg.ffn_dim;
    auto masked_count = [&](const std::string& name, std::size_t dense) -> std::size_t {
        auto it = state.weight.masks.find(name);
        if (!state.weight.active || it == state.weight.masks.end()) return dense;
        std::size_t nnz = 0;
        for (double v : it->second) nnz += v != 0.0 ? 1 : 0;
        return nnz;
    };
    std::size_t count = 0;
    for (std::size_t i = 0; i < cfg.num_gnn_layers; ++i) {
        if (!state.layer.gnn[i]) continue;
        const std::size_t din = i == 0 ? cfg.input_dim : d;
        count += masked_count("gcn." + std::to_string(i) + ".w", din * d);
    }
    for (std::size_t l = 0; l < cfg.num_transformer_layers; ++l) {
        const std::string p = "tf." + std::to_string(l) + ".";
        if (state.layer.mha[l]) {
            std::size_t active_heads = 0;
            for (std::size_t h = 0; h < cfg.num_heads; ++h) {
                if (!state.head.bits[l][h]) continue;
                ++active_heads;
                const std::string hp = p + "h" + std::to_string(h) + ".";
                count += masked_count(hp + "wq", d * dh);
                count += masked_count(hp + "wk", d * dh);
                count += masked_count(hp + "wv", d * dh);
            }
            // W_O keeps only the active heads' row slices
            auto it = state.weight.masks.find(p + "wo");
            if (state.weight.active && it != state.weight.masks.end()) {
                for (std::size_t h = 0; h < cfg.num_heads; ++h) {
                    if (!state.head.bits[l][h]) continue;
                    for (std::size_t r = h * dh; r < (h + 1) * dh; ++r)
                        for (std::size_t c = 0; c < d; ++c)
                            count += it->second[r * d + c] != 0.0 ? 1 : 0;
                }
            } else {
                count += active_heads * dh * d;
            }
            count += 2 * d;  // LN1
        }
        if (state.layer.ffn[l]) {
            count += masked_count(p + "ffn.w1", d * f) + f;
            count += masked_count(p + "ffn.w2", f * d) + d;
            count += 2 * d;  // LN2
        }
    }
    count += d * cfg.num_classes + cfg.num_classes;
    if (state.token.active) count += d * 2;  // scorer
    return count;
}

namespace {

json model_to_json(const ModelConfig& m) {
    return json{{"input_dim", m.input_dim},
                {"gnn_layers", m.num_gnn_layers},
                {"tf_layers", m.num_transformer_layers},
                {"hidden", m.hidden_dim},
                {"head_dim", m.head_dim},
                {"heads", m.num_heads},
                {"ffn", m.ffn_dim},
                {"classes", m.num_classes},
                {"stack", to_string(m.stack_style)},
                {"ln_eps", m.ln_eps}};
}

ModelConfig model_from_json(const json& j) {
    ModelConfig m;
    m.input_dim = j.at("input_dim").get<std::size_t>();
    m.num_gnn_layers = j.at("gnn_layers").get<std::size_t>();
    m.num_transformer_layers = j.at("tf_layers").get<std::size_t>();
    m.hidden_dim = j.at("hidden").get<std::size_t>();
    m.head_dim = j.at("head_dim").get<std::size_t>();
    m.num_heads = j.at("heads").get<std::size_t>();
    m.ffn_dim = j.at("ffn").get<std::size_t>();
    m.num_classes = j.at("classes").get<std::size_t>();
    m.stack_style = stack_style_from_string(j.at("stack").get<std::string>());
    m.ln_eps = j.at("ln_eps").get<double>();
    return m;
}

bool tensor_dropped(const std::string& name, const ModelConfig& cfg, const PruneState& state) {
    // returns true when the named tensor is physically absent from the export
    if (name.rfind("gcn.", 0) == 0) {
        const std::size_t i = std::stoul(name.substr(4));
        return state.layer.gnn[i] == 0;
    }
    if (name.rfind("tf.", 0) != 0) return false;
    const auto rest = name.substr(3);
    const std::size_t l = std::stoul(rest);
    const auto dot = rest.find('.');
    const std::string field = rest.substr(dot + 1);
    if (field.rfind("h", 0) == 0 && field.find(".w") != std::string::npos) {
        if (state.layer.mha[l] == 0) return true;
        const std::size_t h = std::stoul(field.substr(1));
        return state.head.bits[l][h] == 0;
    }
    if (field == "wo" || field.rfind("ln1", 0) == 0) return state.layer.mha[l] == 0;
    if (field.rfind("ffn", 0) == 0 || field.rfind("ln2", 0) == 0) return state.layer.ffn[l] == 0;
    (void)cfg;
    return false;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    TensorStore store;
    json meta;
    meta["format"] = 1;
    meta["model"] = model_to_json(ck.model);
    meta["pruner"] = to_string(ck.pruner);
    meta["sparsity"] = ck.sparsity_setting;
    meta["data_hash"] = hex64(ck.data_hash);
    meta["seed"] = ck.seed;
    meta["split_seed"] = ck.split_seed;
    meta["train_frac"] = ck.train_frac;
    meta["val_frac"] = ck.val_frac;
    meta["metric"] = {{"name", ck.metric_name}, {"final_test", ck.final_test_metric}};
    meta["flops"] = {{"actual", ck.flops_actual}, {"dense", ck.flops_dense}};
    meta["active_params"] = ck.active_params;
    meta["masks"] = {{"head", ck.state.head.bits},
                     {"layer", {{"gnn", ck.state.layer.gnn}, {"mha", ck.state.layer.mha}, {"ffn", ck.state.layer.ffn}}}};
    {
        json bits = json::array();
        for (const std::string& name : sublayer_names(ck.model))
            bits.push_back({{"name", name}, {"bit", layer_mask_bit(ck.state.layer, name)}});
        meta["masks"]["sublayers"] = std::move(bits);
    }
    meta["masks"]["token"] = {{"active", ck.state.token.active},
                              {"keep_ratio", ck.state.token.keep_ratio},
                              {"p_s", ck.state.token.score_drop_rate},
                              {"tau", ck.state.token.tau},
                              {"stage", ck.state.token.stage},
                              {"epoch_frozen", ck.state.token.epoch_frozen}};
    std::vector<std::string> weight_masked;
    for (const auto& [name, mask] : ck.state.weight.masks) {
        weight_masked.push_back(name);
        store.put("mask/" + name, {mask.size()}, mask);
    }
    meta["masks"]["weight_masked"] = weight_masked;

    for (const auto& [name, tensor] : ck.params.named()) {
        if (tensor_dropped(name, ck.model, ck.state)) continue;
        std::vector<double> data = tensor.value();
        auto mit = ck.state.weight.masks.find(name);
        if (ck.state.weight.active && mit != ck.state.weight.masks.end())
            for (std::size_t i = 0; i < data.size(); ++i) data[i] *= mit->second[i];
        if (name.size() > 3 && name.substr(name.size() - 3) == ".wo") {
            // store only the active heads' row slices
            const std::size_t l = std::stoul(name.substr(3));
            if (ck.state.layer.mha[l]) {
                const std::size_t d = ck.model.hidden_dim, dh = ck.model.head_dim;
                std::vector<double> sliced;
                std::size_t active = 0;
                for (std::size_t h = 0; h < ck.model.num_heads; ++h) {
                    if (!ck.state.head.bits[l][h]) continue;
                    ++active;
                    sliced.insert(sliced.end(), data.begin() + static_cast<std::ptrdiff_t>(h * dh * d),
                                  data.begin() + static_cast<std::ptrdiff_t>((h + 1) * dh * d));
                }
                store.put("param/" + name, {active * dh, d}, std::move(sliced));
                continue;
            }
        }
        store.put("param/" + name, tensor.shape(), std::move(data));
    }
    if (ck.state.token.active) {
        check(ck.state.token.scorer_w.defined(), "save_checkpoint: missing token scorer");
        store.put("param/token.scorer_w", ck.state.token.scorer_w.shape(),
                  ck.state.token.scorer_w.value());
    }
    store.meta() = meta.dump(2);
    store.save(path);
}

Checkpoint load_checkpoint(const std::string& path) {
    TensorStore store = TensorStore::load(path);
    json meta = json::parse(store.meta());
    Checkpoint ck;
    ck.model = model_from_json(meta.at("model"));
    ck.pruner = pruner_from_string(meta.at("pruner").get<std::string>());
    ck.sparsity_setting = meta.at("sparsity").get<double>();
    ck.data_hash = std::stoull(meta.at("data_hash").get<std::string>(), nullptr, 16);
    ck.seed = meta.at("seed").get<std::uint64_t>();
    ck.split_seed = meta.at("split_seed").get<std::uint64_t>();
    ck.train_frac = meta.at("train_frac").get<double>();
    ck.val_frac = meta.at("val_frac").get<double>();
    ck.metric_name = meta.at("metric").at("name").get<std::string>();
    ck.final_test_metric = meta.at("metric").at("final_test").get<double>();
    ck.flops_actual = meta.at("flops").at("actual").get<double>();
    ck.flops_dense = meta.at("flops").at("dense").get<double>();
    ck.active_params = meta.at("active_params").get<std::size_t>();

    ck.state = PruneState::identity(ck.model.num_gnn_layers, ck.model.num_transformer_layers,
                                    ck.model.num_heads);
    ck.state.head.bits = meta.at("masks").at("head").get<std::vector<std::vector<int>>>();
    ck.state.layer.gnn = meta.at("masks").at("layer").at("gnn").get<std::vector<int>>();
    ck.state.layer.mha = meta.at("masks").at("layer").at("mha").get<std::vector<int>>();
    ck.state.layer.ffn = meta.at("masks").at("layer").at("ffn").get<std::vector<int>>();
    const auto& tokenj = meta.at("masks").at("token");
    ck.state.token.active = tokenj.at("active").get<bool>();
    ck.state.token.keep_ratio = tokenj.at("keep_ratio").get<double>();
    ck.state.token.score_drop_rate = tokenj.at("p_s").get<double>();
    ck.state.token.tau = tokenj.at("tau").get<double>();
    ck.state.token.stage = tokenj.at("stage").get<std::size_t>();
    ck.state.token.epoch_frozen = tokenj.at("epoch_frozen").get<bool>();
    for (const auto& name : meta.at("masks").at("weight_masked").get<std::vector<std::string>>()) {
        ck.state.weight.masks[name] = store.get("mask/" + name).data;
        ck.state.weight.active = true;
    }

    ck.params = ModelParams::zeros(ck.model);
    const std::size_t d = ck.model.hidden_dim, dh = ck.model.head_dim;
    auto named = ck.params.named();
    for (auto& [name, tensor] : named) {
        const std::string key = "param/" + name;
        if (!store.has(key)) continue;  // physically dropped
        const auto& entry = store.get(key);
        if (name.size() > 3 && name.substr(name.size() - 3) == ".wo") {
            const std::size_t l = std::stoul(name.substr(3));
            std::size_t src_row = 0;
            auto& dst = tensor.value();
            for (std::size_t h = 0; h < ck.model.num_heads; ++h) {
                if (!ck.state.head.bits[l][h]) continue;
                for (std::size_t r = 0; r < dh; ++r) {
                    for (std::size_t c = 0; c < d; ++c)
                        dst[(h * dh + r) * d + c] = entry.data[(src_row + r) * d + c];
                }
                src_row += dh;
            }
            continue;
        }
        check(entry.data.size() == tensor.numel(), "checkpoint: shape mismatch for " + name);
        tensor.value() = entry.data;
    }
    if (ck.state.token.active) {
        const auto& sc = store.get("param/token.scorer_w");
        ck.scorer_w = Tensor::from(sc.shape, sc.data, true);
        ck.state.token.scorer_w = ck.scorer_w;
    }
    return ck;
}

// ---------------------------------------------------------------------------
// training
// ---------------------------------------------------------------------------

namespace {

// shared by cmd_train (record.activations) and cmd_analyze: attention
// matrices, per-sublayer representations, and kept-token lists over an
// evaluation subset, one unpadded forward per graph
TensorStore record_eval_activations(const ModelConfig& cfg, const ModelParams& params,
                                    const PruneState& state, const std::vector<Graph>& graphs,
                                    const std::vector<std::size_t>& indices, std::size_t limit) {
    TensorStore rec;
    NoGradGuard guard;
    ModelParams eff = effective_params(params, state.weight);
    json meta;
    meta["graphs"] = std::vector<std::size_t>(indices.begin(),
                                              indices.begin() + static_cast<std::ptrdiff_t>(limit));
    meta["layers"] = cfg.num_transformer_layers;
    meta["heads"] = cfg.num_heads;
    meta["count"] = limit;
    for (std::size_t gi = 0; gi < limit; ++gi) {
        const std::size_t idx = indices[gi];
        ForwardTrace trace;
        ForwardOptions opts;
        opts.training = false;
        forward_slot(cfg, eff, state, slot_from_graph(graphs[idx], idx), opts, &trace);
        const std::string gtag = "/g" + std::to_string(gi);
        for (std::size_t l = 0; l < trace.attn.size(); ++l)
            for (std::size_t h = 0; h < trace.attn[l].size(); ++h) {
                const Tensor& a = trace.attn[l][h];
                rec.put("attn/l" + std::to_string(l) + "/h" + std::to_string(h) + gtag, a.shape(),
                        a.value());
            }
        for (const auto& [name, tensor] : trace.sublayers)
            rec.put("repr/" + name + gtag, tensor.shape(), tensor.value());
        std::vector<double> kept(trace.token_kept.size());
        for (std::size_t i = 0; i < kept.size(); ++i) kept[i] = static_cast<double>(trace.token_kept[i]);
        rec.put("kept" + gtag, {kept.size()}, kept);
    }
    rec.meta() = meta.dump(2);
    return rec;
}

struct FlopsSummary {
    double actual = 0, dense = 0;
};

FlopsSummary mean_flops(const ModelConfig& cfg, const ModelParams& params, const PruneState& state,
                        const std::vector<Graph>& graphs, const std::vector<std::size_t>& indices) {
    FlopsSummary sum;
    const PruneState dense_state =
        PruneState::identity(cfg.num_gnn_layers, cfg.num_transformer_layers, cfg.num_heads);
    NoGradGuard guard;
    ModelParams eff = effective_params(params, state.weight);
    for (std::size_t idx : indices) {
        const Graph& g = graphs[idx];
        std::optional<std::pair<std::size_t, std::size_t>> after;
        if (state.token.active) {
            ForwardTrace trace;
            ForwardOptions opts;
            opts.training = false;
            forward_slot(cfg, eff, state, slot_from_graph(g, idx), opts, &trace);
            after = {trace.token_kept.size(), induced_nnz_with_loops(g, trace.token_kept)};
        }
        const StageSizes actual_sizes = make_stage_sizes(cfg, state, g.n, nnz_with_loops(g), after);
        const StageSizes dense_sizes = make_stage_sizes(cfg, dense_state, g.n, nnz_with_loops(g));
        sum.actual += count_flops(cfg, actual_sizes, state).total_flops;
        sum.dense += count_flops(cfg, dense_sizes, dense_state).total_flops;
    }
    sum.actual /= static_cast<double>(indices.size());
    sum.dense /= static_cast<double>(indices.size());
    return sum;
}

std::string metrics_csv_text(const RunConfig& cfg, const std::vector<EpochRow>& rows) {
    std::ostringstream os;
    os << "# gtprune run " << hex64(cfg.config_hash()) << "\n";
    os << "# optimizer=adam lr=" << format_double(cfg.optim.lr) << " beta1=" << format_double(cfg.optim.beta1)
       << " beta2=" << format_double(cfg.optim.beta2) << " eps=" << format_double(cfg.optim.eps) << "\n";
    os << "# pruner=" << to_string(cfg.pruner) << " metric=" << to_string(cfg.metric) << "\n";
    os << "epoch,train_loss,train_metric,test_metric\n";
    for (const EpochRow& r : rows)
        os << r.epoch << "," << format_double(r.train_loss) << "," << format_double(r.train_metric) << ","
           << format_double(r.test_metric) << "\n";
    return os.str();
}

}  // namespace

RunResult run_training(const RunConfig& raw_cfg) {
    const auto wall_start = std::chrono::steady_clock::now();
    RunConfig cfg = resolved_config(raw_cfg);
    cfg.validate();

    DatasetBundle data = load_dataset(cfg);
    ModelConfig model = cfg.model;
    model.input_dim = data.graphs[0].feature_dim;
    std::size_t max_label = 1;
    for (const Graph& g : data.graphs) max_label = std::max<std::size_t>(max_label, static_cast<std::size_t>(g.label));
    model.num_classes = std::max<std::size_t>(model.num_classes, max_label + 1);
    model.validate();

    Rng rng_init = rng_stream(cfg.seed, "init");
    Rng rng_token = rng_stream(cfg.seed, "token");
    Rng rng_layer = rng_stream(cfg.seed, "layer");

    ModelParams params = ModelParams::init(model, rng_init);
    PruneState state = PruneState::identity(model.num_gnn_layers, model.num_transformer_layers,
                                            model.num_heads);

    std::vector<Tensor> trainable = params.all();
    if (cfg.pruner == PrunerKind::token) {
        state.token.active = true;
        state.token.keep_ratio = cfg.token.keep_ratio;
        state.token.score_drop_rate = cfg.token.p_s;
        state.token.tau = cfg.token.tau_start;
        state.token.stage = cfg.token.stage;
        state.token.epoch_frozen = cfg.token.epoch_frozen;
        state.token.scorer_w = glorot_tensor({model.hidden_dim, 2}, model.hidden_dim, 2, rng_init);
        trainable.push_back(state.token.scorer_w);
    }

    // weight pruner state
    PruneSchedule sched;
    std::vector<std::string> prunable;
    std::map<std::string, std::vector<double>> regrow_buf;
    if (cfg.pruner == PrunerKind::weight) {
        sched.p_i = cfg.weight.p_i;
        sched.p_f = cfg.weight.sparsity;
        sched.t0 = cfg.weight.t0;
        sched.m = cfg.weight.m;
        sched.dt = cfg.weight.dt;
        sched.regrow_fraction = cfg.weight.regrow_fraction;
        sched.validate();
        prunable = weight_prunable_names(model);
        state.weight.active = true;
        for (const auto& [name, tensor] : params.named())
            if (std::find(prunable.begin(), prunable.end(), name) != prunable.end()) {
                state.weight.masks[name] = std::vector<double>(tensor.numel(), 1.0);
                regrow_buf[name] = std::vector<double>(tensor.numel(), 0.0);
            }
    }

    Adam opt(cfg.optim.lr, cfg.optim.beta1, cfg.optim.beta2, cfg.optim.eps);
    opt.attach(trainable);
    std::vector<const std::vector<double>*> update_masks;
    if (cfg.pruner == PrunerKind::weight) {
        for (const auto& [name, tensor] : params.named()) {
            auto it = state.weight.masks.find(name);
            update_masks.push_back(it == state.weight.masks.end() ? nullptr : &it->second);
        }
    }

    // run directory
    std::string run_dir;
    std::ofstream sparsity_csv;
    std::string heads_csv_path;
    bool heads_csv_started = false;
    if (cfg.write_outputs) {
        run_dir = (fs::path(cfg.out_root) / hex64(cfg.config_hash())).string();
        fs::create_directories(run_dir);
        std::ofstream cfg_out(run_dir + "/config.txt");
        cfg_out << cfg.canonical();
        if (cfg.pruner == PrunerKind::weight) {
            sparsity_csv.open(run_dir + "/sparsity.csv");
            sparsity_csv << "epoch,scheduled_p,realized_global";
            for (const auto& name : prunable) sparsity_csv << ",realized_" << name;
            sparsity_csv << "\n";
        }
        heads_csv_path = run_dir + "/heads.csv";
    }

    const double q_keep = 1.0 - cfg.layer.sparsity;
    const std::size_t head_regrow_end = (2 * cfg.epochs) / 3;
    const std::size_t weight_regrow_end = (8 * cfg.epochs) / 10;
    const LayerMask identity_layer = LayerMask::identity(model.num_gnn_layers, model.num_transformer_layers);

    auto named_params = params.named();
    std::vector<EpochRow> rows;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        // ---- epoch-boundary mask updates ----
        // mask updates run on the dt cadence until the ramp completes, and
        // keep running (prune/regrow swaps at p_f) until the settle window;
        // the final 20% of training leaves the mask untouched
        const bool weight_update_window =
            epoch <= sched.t0 + sched.m * sched.dt || epoch < weight_regrow_end;
        if (cfg.pruner == PrunerKind::weight && is_prune_epoch(epoch, sched) && weight_update_window) {
            const double p = schedule_sparsity(epoch, sched);
            for (const auto& [name, tensor] : named_params) {
                auto it = state.weight.masks.find(name);
                if (it == state.weight.masks.end()) continue;
                magnitude_prune(tensor.value(), it->second, p);
            }
            const bool regrow_on = sched.regrow_fraction > 0.0 && epoch > sched.t0 &&
                                   epoch < weight_regrow_end;
            if (regrow_on) {
                for (const auto& [name, tensor] : named_params) {
                    auto it = state.weight.masks.find(name);
                    if (it == state.weight.masks.end()) continue;
                    regrow_weights(tensor.value(), regrow_buf[name], it->second, sched.regrow_fraction);
                    magnitude_prune(tensor.value(), it->second, p);
                }
            }
            for (auto& [name, buf] : regrow_buf) std::fill(buf.begin(), buf.end(), 0.0);
            if (sparsity_csv.is_open()) {
                double zeros = 0, total = 0;
                std::ostringstream per_tensor;
                for (const auto& name : prunable) {
                    const auto& mask = state.weight.masks[name];
                    const double sp = mask_sparsity(mask);
                    zeros += sp * static_cast<double>(mask.size());
                    total += static_cast<double>(mask.size());
                    per_tensor << "," << format_double(sp);
                }
                sparsity_csv << epoch << "," << format_double(p) << ","
                             << format_double(zeros / total) << per_tensor.str() << "\n";
            }
        }
        if (cfg.pruner == PrunerKind::head && cfg.head.sparsity > 0.0) {
            if (epoch == cfg.head.prune_epoch) {
                HeadScoreBoard board = head_importance(model, params, state, data.graphs,
                                                       data.split.train, false);
                state.head = prune_heads(board, cfg.head.sparsity, state.head);
                if (cfg.write_outputs) {
                    dump_head_scoreboard_csv(heads_csv_path, board, state.head, epoch, heads_csv_started);
                    heads_csv_started = true;
                }
            } else if (epoch > cfg.head.prune_epoch && cfg.head.regrow_every > 0 &&
                       (epoch - cfg.head.prune_epoch) % cfg.head.regrow_every == 0 &&
                       epoch < head_regrow_end && cfg.head.regrow_fraction > 0.0) {
                HeadScoreBoard board = head_importance(model, params, state, data.graphs,
                                                       data.split.train, true);
                const std::size_t r = ceil_frac(cfg.head.regrow_fraction, state.head.inactive_count());
                if (r > 0) state.head = regrow_heads(board, r, state.head);
                if (cfg.write_outputs) {
                    dump_head_scoreboard_csv(heads_csv_path, board, state.head, epoch, heads_csv_started);
                    heads_csv_started = true;
                }
            }
        }
        if (cfg.pruner == PrunerKind::token) {
            const double t_frac = cfg.epochs > 1
                                      ? static_cast<double>(epoch) / static_cast<double>(cfg.epochs - 1)
                                      : 1.0;
            state.token.tau = cfg.token.tau_start + (cfg.token.tau_end - cfg.token.tau_start) * t_frac;
        }
        std::map<std::size_t, std::vector<std::size_t>> frozen_token;

        // ---- training over shuffled batches ----
        const std::uint64_t shuffle_salt = fnv1a64("shuffle") ^ (cfg.seed + 0x9e3779b97f4a7c15ull * (epoch + 1));
        auto batches = make_batches(data.graphs, data.split.train, cfg.batch_size, shuffle_salt);
        double loss_sum = 0;
        std::vector<int> train_preds, train_labels;
        std::vector<double> train_scores;
        for (std::size_t bi = 0; bi < batches.size(); ++bi) {
            const Batch& batch = batches[bi];
            if (cfg.pruner == PrunerKind::layer)
                state.layer = sample_layer_mask(model, q_keep, rng_layer);

            ModelParams eff = effective_params(params, state.weight);
            ForwardOptions opts;
            opts.training = true;
            opts.token_rng = &rng_token;
            if (cfg.pruner == PrunerKind::token && cfg.token.epoch_frozen)
                opts.frozen_token_map = &frozen_token;
            std::vector<ForwardTrace> traces;
            const bool want_traces = cfg.pruner == PrunerKind::token && cfg.token.epoch_frozen;
            Tensor logits = forward_batch(model, eff, state, batch, opts, want_traces ? &traces : nullptr);
            Tensor loss = cross_entropy_with_logits(logits, batch.labels, Reduction::mean);
            if (!std::isfinite(loss.item())) {
                std::ostringstream os;
                os << "train: non-finite loss at epoch " << epoch << " batch " << bi << " (graphs:";
                for (const auto& slot : batch.slots) os << " " << slot.dataset_index;
                os << ")";
                fail(os.str());
            }
            opt.zero_grad();
            backward(loss);
            if (cfg.pruner == PrunerKind::weight) {
                for (const auto& [name, tensor] : named_params) {
                    auto it = regrow_buf.find(name);
                    if (it == regrow_buf.end()) continue;
                    const auto& g = tensor.grad();
                    for (std::size_t i = 0; i < g.size(); ++i) it->second[i] += std::abs(g[i]);
                }
            }
            opt.step(update_masks);
            if (want_traces)
                for (std::size_t si = 0; si < batch.slots.size(); ++si)
                    frozen_token.emplace(batch.slots[si].dataset_index, traces[si].token_kept);

            loss_sum += loss.item() * static_cast<double>(batch.slots.size());
            for (std::size_t si = 0; si < batch.slots.size(); ++si) {
                int best = 0;
                for (std::size_t c = 1; c < model.num_classes; ++c)
                    if (logits.value()[si * model.num_classes + c] >
                        logits.value()[si * model.num_classes + static_cast<std::size_t>(best)])
                        best = static_cast<int>(c);
                train_preds.push_back(best);
                train_labels.push_back(batch.labels[si]);
                if (model.num_classes == 2)
                    train_scores.push_back(logits.value()[si * 2 + 1] - logits.value()[si * 2]);
            }
        }

        // ---- evaluation (stochastic layer drops apply to training steps only) ----
        PruneState eval_state = state;
        if (cfg.pruner == PrunerKind::layer) eval_state.layer = identity_layer;
        EvalOut test = evaluate_split(model, params, eval_state, data.graphs, data.split.test, cfg.metric);

        EpochRow row;
        row.epoch = epoch;
        row.train_loss = loss_sum / static_cast<double>(data.split.train.size());
        row.train_metric = cfg.metric == MetricKind::auc ? roc_auc(train_scores, train_labels)
                                                         : accuracy(train_preds, train_labels);
        row.test_metric = test.metric;
        rows.push_back(row);
    }

    // ---- finalize ----
    if (cfg.pruner == PrunerKind::layer) {
        state.layer = finalize_layer_prune(model, params, state, data.graphs, data.split.val,
                                           cfg.layer.sparsity, cfg.layer.finalize, cfg.batch_size,
                                           rng_layer);
    } else {
        state.layer = identity_layer;  // drop the last sampled training mask
    }

    RunResult result;
    result.model = model;
    result.params = params;
    result.rows = rows;
    result.data_hash = data.hash;

    EvalOut final_eval = evaluate_split(model, params, state, data.graphs, data.split.test, cfg.metric);
    result.final_test_metric = final_eval.metric;

    const FlopsSummary flops = mean_flops(model, params, state, data.graphs, data.split.test);
    result.flops_actual = flops.actual;
    result.flops_dense = flops.dense;
    result.flops_saving = 1.0 - flops.actual / flops.dense;
    result.active_params = active_param_count(model, state);
    result.state = state;
    result.metrics_csv = metrics_csv_text(cfg, rows);
    result.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();

    if (cfg.write_outputs) {
        result.run_dir = run_dir;
        {
            std::ofstream mout(run_dir + "/metrics.csv", std::ios::binary);
            mout << result.metrics_csv;
        }
        Checkpoint ck;
        ck.model = model;
        ck.params = params;
        ck.state = state;
        ck.pruner = cfg.pruner;
        switch (cfg.pruner) {
            case PrunerKind::token: ck.sparsity_setting = 1.0 - cfg.token.keep_ratio; break;
            case PrunerKind::head: ck.sparsity_setting = cfg.head.sparsity; break;
            case PrunerKind::layer: ck.sparsity_setting = cfg.layer.sparsity; break;
            case PrunerKind::weight: ck.sparsity_setting = cfg.weight.sparsity; break;
            case PrunerKind::none: ck.sparsity_setting = 0.0; break;
        }
        ck.data_hash = data.hash;
        ck.seed = cfg.seed;
        ck.split_seed = cfg.split_seed;
        ck.train_frac = cfg.train_frac;
        ck.val_frac = cfg.val_frac;
        ck.final_test_metric = result.final_test_metric;
        ck.metric_name = to_string(cfg.metric);
        ck.flops_actual = result.flops_actual;
        ck.flops_dense = result.flops_dense;
        ck.active_params = result.active_params;
        save_checkpoint(run_dir + "/checkpoint.ckpt", ck);

        if (cfg.pruner == PrunerKind::token) {
            std::ofstream tout(run_dir + "/tokens_kept.jsonl");
            for (std::size_t i = 0; i < data.split.test.size(); ++i) {
                json rec;
                rec["graph"] = data.split.test[i];
                rec["n"] = data.graphs[data.split.test[i]].n;
                rec["kept"] = final_eval.kept[i];
                tout << rec.dump() << "\n";
            }
        }
        if (cfg.record_activations) {
            TensorStore rec = record_eval_activations(model, params, state, data.graphs,
                                                      data.split.test, data.split.test.size());
            rec.save(run_dir + "/record.bin");
        }
        std::ofstream rout(run_dir + "/report.txt");
        rout << "run " << hex64(cfg.config_hash()) << "\n"
             << "pruner " << to_string(cfg.pruner) << "\n"
             << "final_test_" << to_string(cfg.metric) << " " << format_double(result.final_test_metric)
             << "\n"
             << "active_params " << result.active_params << "\n"
             << "flops_actual " << format_double(result.flops_actual) << "\n"
             << "flops_dense " << format_double(result.flops_dense) << "\n"
             << "flops_saving " << format_double(result.flops_saving) << "\n"
             << "wall_seconds " << format_double(result.wall_seconds) << "\n";
    }
    return result;
}

// ---------------------------------------------------------------------------
// reports
// ---------------------------------------------------------------------------

std::vector<ReportRow> comparison_rows(const Checkpoint& dense, const Checkpoint& pruned) {
    check(dense.data_hash == pruned.data_hash,
          "report: dataset hash mismatch (" + hex64(dense.data_hash) + " vs " + hex64(pruned.data_hash) + ")");
    check(dense.metric_name == pruned.metric_name, "report: metric mismatch");
    std::vector<ReportRow> rows;
    rows.push_back({"dense", 0.0, dense.active_params, 1.0 - dense.flops_actual / dense.flops_dense,
                    dense.final_test_metric});
    rows.push_back({to_string(pruned.pruner), pruned.sparsity_setting, pruned.active_params,
                    1.0 - pruned.flops_actual / dense.flops_actual, pruned.final_test_metric});
    return rows;
}

std::string report_csv(const std::vector<ReportRow>& rows) {
    std::ostringstream os;
    os << "model,sparsity,params,flops_saving,metric\n";
    for (const auto& r : rows)
        os << r.label << "," << format_double(r.sparsity) << "," << r.params << ","
           << format_double(r.flops_saving) << "," << format_double(r.metric) << "\n";
    return os.str();
}

std::string report_text(const std::vector<ReportRow>& rows, const std::string& metric_name) {
    std::ostringstream os;
    char line[160];
    std::snprintf(line, sizeof(line), "%-10s %8s %12s %10s %12s\n", "model", "spar.", "#para.", "FS",
                  metric_name.c_str());
    os << line;
    for (const auto& r : rows) {
        std::snprintf(line, sizeof(line), "%-10s %7.1f%% %12zu %9.1f%% %12.4f\n", r.label.c_str(),
                      r.sparsity * 100.0, r.params, r.flops_saving * 100.0, r.metric);
        os << line;
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------------

AnalyzeKind analyze_kind_from_string(const std::string& s) {
    if (s == "attention") return AnalyzeKind::attention;
    if (s == "heads") return AnalyzeKind::heads;
    if (s == "layers") return AnalyzeKind::layers;
    if (s == "tokens") return AnalyzeKind::tokens;
    fail("unknown analysis '" + s + "' (expected attention|heads|layers|tokens)");
}

void write_matrix_csv(const std::string& path, const SymMatrix& m, const std::string& header_note) {
    std::ofstream out(path);
    check(out.good(), "write_matrix_csv: cannot open " + path);
    if (!header_note.empty()) out << "# " << header_note << "\n";
    out << "label";
    for (const auto& l : m.labels) out << "," << l;
    out << "\n";
    for (std::size_t i = 0; i < m.dim; ++i) {
        out << m.labels[i];
        for (std::size_t j = 0; j < m.dim; ++j) out << "," << format_double(m.at(i, j));
        out << "\n";
    }
}

void write_heatmap_svg(const std::string& path, const SymMatrix& m, const std::string& title) {
    const int cell = 34, margin = 60;
    const int size = margin + cell * static_cast<int>(m.dim) + 10;
    std::ofstream out(path);
    check(out.good(), "write_heatmap_svg: cannot open " + path);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size + 20
        << "\" font-family=\"monospace\" font-size=\"9\">\n";
    out << "<text x=\"4\" y=\"14\">" << title << "</text>\n";
    for (std::size_t i = 0; i < m.dim; ++i) {
        out << "<text x=\"2\" y=\"" << margin + cell * static_cast<int>(i) + cell / 2 + 3 << "\">"
            << m.labels[i] << "</text>\n";
        out << "<text x=\"" << margin + cell * static_cast<int>(i) + 2 << "\" y=\"" << margin - 6 << "\">"
            << m.labels[i] << "</text>\n";
    }
    for (std::size_t i = 0; i < m.dim; ++i)
        for (std::size_t j = 0; j < m.dim; ++j) {
            const double v = std::clamp(m.at(i, j), 0.0, 1.0);
            // linear ramp white -> steel blue
            const int r = static_cast<int>(255.0 - v * (255.0 - 33.0));
            const int g = static_cast<int>(255.0 - v * (255.0 - 102.0));
            const int b = static_cast<int>(255.0 - v * (255.0 - 172.0));
            const int x = margin + cell * static_cast<int>(j);
            const int y = margin + cell * static_cast<int>(i);
            out << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << cell << "\" height=\"" << cell
                << "\" fill=\"rgb(" << r << "," << g << "," << b << ")\" stroke=\"#999\"/>\n";
            char val[16];
            std::snprintf(val, sizeof(val), "%.2f", m.at(i, j));
            out << "<text x=\"" << x + 4 << "\" y=\"" << y + cell / 2 + 3 << "\">" << val << "</text>\n";
        }
    out << "</svg>\n";
}

std::vector<std::string> run_analyze(const Checkpoint& ck, const std::vector<Graph>& graphs,
                                     AnalyzeKind kind, const std::string& out_dir) {
    check(dataset_hash(graphs) == ck.data_hash, "analyze: dataset hash mismatch with checkpoint");
    fs::create_directories(out_dir);
    const DatasetSplit split = random_split(graphs.size(), ck.train_frac, ck.val_frac, ck.split_seed);
    check(!split.test.empty(), "analyze: empty evaluation split");

    PruneState state = ck.state;
    if (kind != AnalyzeKind::tokens) state.token.active = false;  // keep shapes aligned across layers

    const std::size_t limit =
        kind == AnalyzeKind::layers ? std::min<std::size_t>(128, split.test.size()) : split.test.size();

    // record activations into the named-tensor container
    TensorStore rec = record_eval_activations(ck.model, ck.params, state, graphs, split.test, limit);
    const std::string rec_path = out_dir + "/record.bin";
    rec.save(rec_path);
    std::vector<std::string> written{rec_path};

    // derived artifacts are computed from the reloaded container
    TensorStore store = TensorStore::load(rec_path);
    const json meta = json::parse(store.meta());
    const std::size_t count = meta.at("count").get<std::size_t>();
    const std::size_t layers = meta.at("layers").get<std::size_t>();
    const std::size_t heads = meta.at("heads").get<std::size_t>();

    auto collect_records = [&]() {
        std::vector<AttentionRecord> records;
        for (std::size_t l = 0; l < layers; ++l)
            for (std::size_t h = 0; h < heads; ++h)
                for (std::size_t g = 0; g < count; ++g) {
                    const std::string key =
                        "attn/l" + std::to_string(l) + "/h" + std::to_string(h) + "/g" + std::to_string(g);
                    if (!store.has(key)) continue;
                    const auto& e = store.get(key);
                    AttentionRecord r;
                    r.layer = l;
                    r.head = h;
                    r.graph = g;
                    r.n = e.shape[0];
                    r.probs = e.data;
                    records.push_back(std::move(r));
                }
        return records;
    };

    switch (kind) {
        case AnalyzeKind::attention: {
            const std::string path = out_dir + "/attention_profile.csv";
            std::ofstream out(path);
            out << "graph,layer,head,token,received_attention\n";
            for (const AttentionRecord& r : collect_records()) {
                const auto profile = attention_profile(r);
                for (std::size_t t = 0; t < profile.size(); ++t)
                    out << r.graph << "," << r.layer << "," << r.head << "," << t << ","
                        << format_double(profile[t]) << "\n";
            }
            written.push_back(path);
            break;
        }
        case AnalyzeKind::heads: {
            auto records = collect_records();
            // only heads that actually executed (a layer-masked MHA records nothing)
            std::set<std::pair<std::size_t, std::size_t>> present;
            for (const auto& r : records) present.insert({r.layer, r.head});
            // relabel into a dense grid over the present pairs
            std::map<std::pair<std::size_t, std::size_t>, std::size_t> order;
            for (const auto& p : present) order.emplace(p, order.size());
            std::vector<AttentionRecord> relabeled = std::move(records);
            for (auto& r : relabeled) {
                const std::size_t flat = order[{r.layer, r.head}];
                r.layer = flat;
                r.head = 0;
            }
            SymMatrix js = head_redundancy_matrix(relabeled, present.size(), 1, "js");
            SymMatrix dc = head_redundancy_matrix(relabeled, present.size(), 1, "dcor");
            std::vector<std::string> labels;
            for (const auto& p : present)
                labels.push_back("l" + std::to_string(p.first) + "h" + std::to_string(p.second));
            js.labels = labels;
            dc.labels = labels;
            const std::string note = "graphs=" + std::to_string(count);
            write_matrix_csv(out_dir + "/heads_js.csv", js, note + " metric=js");
            write_matrix_csv(out_dir + "/heads_dcor.csv", dc, note + " metric=1-dcor");
            write_heatmap_svg(out_dir + "/heads_js.svg", js, "head redundancy (JS distance)");
            write_heatmap_svg(out_dir + "/heads_dcor.svg", dc, "head redundancy (1-dCor)");
            written.insert(written.end(), {out_dir + "/heads_js.csv", out_dir + "/heads_dcor.csv",
                                           out_dir + "/heads_js.svg", out_dir + "/heads_dcor.svg"});
            break;
        }
        case AnalyzeKind::layers: {
            // concatenate per-sublayer node representations over the subset
            std::vector<std::string> names;
            for (const std::string& n : sublayer_names(ck.model))
                if (store.has("repr/" + n + "/g0")) names.push_back(n);
            std::vector<std::vector<double>> reps(names.size());
            std::size_t rows = 0;
            for (std::size_t g = 0; g < count; ++g) {
                for (std::size_t ni = 0; ni < names.size(); ++ni) {
                    const auto& e = store.get("repr/" + names[ni] + "/g" + std::to_string(g));
                    reps[ni].insert(reps[ni].end(), e.data.begin(), e.data.end());
                    if (ni == 0) rows += e.shape[0];
                }
            }
            SymMatrix cka = layer_similarity_matrix(reps, names, rows, ck.model.hidden_dim);
            const std::string note = "graphs=" + std::to_string(count) + " samples=" + std::to_string(rows);
            write_matrix_csv(out_dir + "/layers_cka.csv", cka, note + " metric=cka");
            write_heatmap_svg(out_dir + "/layers_cka.svg", cka, "layer similarity (linear CKA)");
            written.insert(written.end(), {out_dir + "/layers_cka.csv", out_dir + "/layers_cka.svg"});
            break;
        }
        case AnalyzeKind::tokens: {
            const std::string path = out_dir + "/tokens_kept.jsonl";
            std::ofstream out(path);
            const auto graph_ids = meta.at("graphs").get<std::vector<std::size_t>>();
            for (std::size_t g = 0; g < count; ++g) {
                const auto& e = store.get("kept/g" + std::to_string(g));
                json rec_line;
                rec_line["graph"] = graph_ids[g];
                rec_line["n"] = graphs[graph_ids[g]].n;
                std::vector<std::size_t> kept(e.data.size());
                for (std::size_t i = 0; i < kept.size(); ++i) kept[i] = static_cast<std::size_t>(e.data[i]);
                rec_line["kept"] = kept;
                out << rec_line.dump() << "\n";
            }
            written.push_back(path);
            break;
        }
    }
    return written;
}

}  // namespace gtprune
