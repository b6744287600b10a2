#include "gtprune/graph_data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "gtprune/rng.hpp"

namespace gtprune {

using nlohmann::json;

std::size_t Graph::edge_count() const {
    std::size_t c = 0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) c += adj[i * n + j];
    return c;
}

void validate_graph(const Graph& g, const std::string& where) {
    check(g.adj.size() == g.n * g.n, where + ": adjacency size mismatch");
    check(g.features.size() == g.n * g.feature_dim, where + ": feature row count != n");
    check(g.label >= 0, where + ": negative label");
    for (std::size_t i = 0; i < g.n; ++i) {
        check(g.adj[i * g.n + i] == 0, where + ": self-loop at node " + std::to_string(i));
        for (std::size_t j = 0; j < g.n; ++j) {
            const auto v = g.adj[i * g.n + j];
            check(v == 0 || v == 1, where + ": non-binary adjacency entry");
            if (v != g.adj[j * g.n + i])
                fail(where + ": asymmetric at (" + std::to_string(std::min(i, j)) + "," +
                     std::to_string(std::max(i, j)) + ")");
        }
    }
}

std::vector<Graph> load_jsonl(const std::string& path) {
    std::ifstream in(path);
    check(in.good(), "load_jsonl: cannot open " + path);
    std::vector<Graph> graphs;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const std::string where = path + ":" + std::to_string(lineno);
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::exception& e) {
            fail(where + ": invalid JSON: " + e.what());
        }
        Graph g;
        try {
            g.n = rec.at("n").get<std::size_t>();
            check(g.n >= 1, "n must be >= 1");
            const auto& xs = rec.at("x");
            check(xs.is_array() && xs.size() == g.n, "feature row count != n");
            g.feature_dim = xs.empty() ? 0 : xs[0].size();
            check(g.feature_dim >= 1, "feature dim must be >= 1");
            g.features.reserve(g.n * g.feature_dim);
            for (const auto& row : xs) {
                check(row.is_array() && row.size() == g.feature_dim, "ragged feature rows");
                for (const auto& v : row) g.features.push_back(v.get<double>());
            }
            g.adj.assign(g.n * g.n, 0);
            for (const auto& e : rec.at("edges")) {
                check(e.is_array() && e.size() == 2, "edge is not a pair");
                const std::size_t i = e[0].get<std::size_t>();
                const std::size_t j = e[1].get<std::size_t>();
                check(i < j, "edge [" + std::to_string(i) + "," + std::to_string(j) + "] violates i<j");
                check(j < g.n, "edge endpoint " + std::to_string(j) + " out of range");
                check(!g.edge(i, j), "duplicate edge [" + std::to_string(i) + "," + std::to_string(j) + "]");
                g.set_edge(i, j);
            }
            const int y = rec.at("y").get<int>();
            check(y >= 0, "out-of-range label " + std::to_string(y));
            g.label = y;
        } catch (const json::exception& e) {
            fail(where + ": " + e.what());
        } catch (const std::runtime_error& e) {
            fail(where + ": " + e.what());
        }
        validate_graph(g, where);
        graphs.push_back(std::move(g));
    }
    return graphs;
}

void save_jsonl(const std::vector<Graph>& graphs, const std::string& path) {
    std::ofstream out(path);
    check(out.good(), "save_jsonl: cannot open " + path);
    for (const Graph& g : graphs) {
        json rec;
        rec["n"] = g.n;
        json edges = json::array();
        for (std::size_t i = 0; i < g.n; ++i)
            for (std::size_t j = i + 1; j < g.n; ++j)
                if (g.edge(i, j)) edges.push_back({i, j});
        rec["edges"] = std::move(edges);
        json xs = json::array();
        for (std::size_t i = 0; i < g.n; ++i) {
            json row = json::array();
            for (std::size_t j = 0; j < g.feature_dim; ++j) row.push_back(g.features[i * g.feature_dim + j]);
            xs.push_back(std::move(row));
        }
        rec["x"] = std::move(xs);
        rec["y"] = g.label;
        out << rec.dump() << "\n";
    }
}

Motif motif_from_string(const std::string& s) {
    if (s == "triangle") return Motif::triangle;
    if (s == "clique4") return Motif::clique4;
    fail("unknown motif '" + s + "' (expected triangle|clique4)");
}

FeatureMode feature_mode_from_string(const std::string& s) {
    if (s == "structural") return FeatureMode::structural;
    if (s == "random") return FeatureMode::random;
    fail("unknown feature mode '" + s + "' (expected structural|random)");
}

bool contains_motif(const Graph& g, Motif motif) {
    if (motif == Motif::triangle) {
        for (std::size_t i = 0; i < g.n; ++i)
            for (std::size_t j = i + 1; j < g.n; ++j) {
                if (!g.edge(i, j)) continue;
                for (std::size_t k = j + 1; k < g.n; ++k)
                    if (g.edge(i, k) && g.edge(j, k)) return true;
            }
        return false;
    }
    for (std::size_t a = 0; a < g.n; ++a)
        for (std::size_t b = a + 1; b < g.n; ++b) {
            if (!g.edge(a, b)) continue;
            for (std::size_t c = b + 1; c < g.n; ++c) {
                if (!g.edge(a, c) || !g.edge(b, c)) continue;
                for (std::size_t d = c + 1; d < g.n; ++d)
                    if (g.edge(a, d) && g.edge(b, d) && g.edge(c, d)) return true;
            }
        }
    return false;
}

namespace {

std::size_t motif_size(Motif m) { return m == Motif::triangle ? 3 : 4; }

Graph sample_er(std::size_t n, double p, Rng& rng) {
    Graph g;
    g.n = n;
    g.adj.assign(n * n, 0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (rng.bernoulli(p)) g.set_edge(i, j);
    return g;
}

double clustering_coefficient(const Graph& g, std::size_t i) {
    std::vector<std::size_t> nbrs;
    for (std::size_t j = 0; j < g.n; ++j)
        if (g.edge(i, j)) nbrs.push_back(j);
    if (nbrs.size() < 2) return 0.0;
    std::size_t closed = 0;
    for (std::size_t a = 0; a < nbrs.size(); ++a)
        for (std::size_t b = a + 1; b < nbrs.size(); ++b)
            if (g.edge(nbrs[a], nbrs[b])) ++closed;
    const double possible = static_cast<double>(nbrs.size() * (nbrs.size() - 1)) / 2.0;
    return static_cast<double>(closed) / possible;
}

void fill_features(Graph& g, std::size_t d, FeatureMode mode, Rng& rng) {
    g.feature_dim = d;
    g.features.assign(g.n * d, 0.0);
    for (std::size_t i = 0; i < g.n; ++i) {
        std::size_t j = 0;
        if (mode == FeatureMode::structural) {
            g.features[i * d + j++] = clustering_coefficient(g, i);
            if (j < d) g.features[i * d + j++] = g.n > 1 ? static_cast<double>(g.degree(i)) / static_cast<double>(g.n - 1) : 0.0;
        }
        for (; j < d; ++j) g.features[i * d + j] = rng.normal();
    }
}

}  // namespace

std::vector<Graph> synth_motif_dataset(const SynthConfig& cfg) {
    check(cfg.n_min >= motif_size(cfg.motif),
          "synth: n_min " + std::to_string(cfg.n_min) + " smaller than motif size " +
              std::to_string(motif_size(cfg.motif)));
    check(cfg.n_min <= cfg.n_max, "synth: empty n range");
    check(cfg.positive_fraction > 0.0 && cfg.positive_fraction < 1.0,
          "synth: positive_fraction must be in (0,1)");
    check(cfg.feature_dim >= 1, "synth: feature_dim must be >= 1");

    Rng rng = rng_stream(cfg.seed, "synth-motif");
    const auto positives = static_cast<std::size_t>(
        std::llround(cfg.positive_fraction * static_cast<double>(cfg.count)));

    std::vector<Graph> out;
    out.reserve(cfg.count);
    constexpr int kMaxRetries = 500;
    for (std::size_t g_idx = 0; g_idx < cfg.count; ++g_idx) {
        const bool positive = g_idx < positives;
        const std::size_t n = cfg.n_min + static_cast<std::size_t>(rng.uniform_int(0, cfg.n_max - cfg.n_min));
        const double p_edge = std::min(1.5 / static_cast<double>(n - 1), 0.35);

        Graph g;
        bool done = false;
        for (int attempt = 0; attempt < kMaxRetries && !done; ++attempt) {
            g = sample_er(n, p_edge, rng);
            if (!contains_motif(g, cfg.motif)) done = true;
        }
        check(done, "synth: could not sample a motif-free base graph after " +
                        std::to_string(kMaxRetries) + " retries (n=" + std::to_string(n) + ")");

        if (positive) {
            // plant the motif on a random node subset
            std::vector<std::size_t> nodes(n);
            for (std::size_t i = 0; i < n; ++i) nodes[i] = i;
            rng.shuffle(nodes);
            const std::size_t m = motif_size(cfg.motif);
            for (std::size_t a = 0; a < m; ++a)
                for (std::size_t b = a + 1; b < m; ++b) g.set_edge(nodes[a], nodes[b]);
        }
        g.label = positive ? 1 : 0;
        fill_features(g, cfg.feature_dim, cfg.feature_mode, rng);
        validate_graph(g, "synth graph " + std::to_string(g_idx));
        out.push_back(std::move(g));
    }
    rng.shuffle(out);
    return out;
}

DatasetSplit random_split(std::size_t count, double train_frac, double val_frac, std::uint64_t seed) {
    check(train_frac > 0.0 && val_frac >= 0.0 && train_frac + val_frac < 1.0,
          "random_split: fractions must leave room for a test set");
    std::vector<std::size_t> idx(count);
    for (std::size_t i = 0; i < count; ++i) idx[i] = i;
    Rng rng = rng_stream(seed, "split");
    rng.shuffle(idx);
    DatasetSplit s;
    s.seed = seed;
    const auto n_train = static_cast<std::size_t>(train_frac * static_cast<double>(count));
    const auto n_val = static_cast<std::size_t>(val_frac * static_cast<double>(count));
    s.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.val.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train),
                 idx.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    s.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), idx.end());
    return s;
}

std::vector<Batch> make_batches(const std::vector<Graph>& graphs,
                                const std::vector<std::size_t>& indices,
                                std::size_t batch_size,
                                std::optional<std::uint64_t> shuffle_seed) {
    check(batch_size >= 1, "make_batches: batch_size must be >= 1");
    std::vector<std::size_t> order = indices;
    if (shuffle_seed) {
        Rng rng(*shuffle_seed);
        rng.shuffle(order);
    }
    std::vector<Batch> batches;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        const std::size_t stop = std::min(start + batch_size, order.size());
        Batch b;
        b.feature_dim = graphs.empty() ? 0 : graphs[order[start]].feature_dim;
        for (std::size_t i = start; i < stop; ++i) b.n_max = std::max(b.n_max, graphs[order[i]].n);
        for (std::size_t i = start; i < stop; ++i) {
            const Graph& g = graphs[order[i]];
            check(g.feature_dim == b.feature_dim, "make_batches: mixed feature dims");
            BatchSlot slot;
            slot.n = g.n;
            slot.dataset_index = order[i];
            slot.label = g.label;
            slot.features.assign(b.n_max * b.feature_dim, 0.0);
            slot.adj.assign(b.n_max * b.n_max, 0);
            slot.validity.assign(b.n_max, 0.0);
            for (std::size_t r = 0; r < g.n; ++r) {
                slot.validity[r] = 1.0;
                for (std::size_t c = 0; c < b.feature_dim; ++c)
                    slot.features[r * b.feature_dim + c] = g.features[r * g.feature_dim + c];
                for (std::size_t c = 0; c < g.n; ++c) slot.adj[r * b.n_max + c] = g.adj[r * g.n + c];
            }
            b.labels.push_back(g.label);
            b.slots.push_back(std::move(slot));
        }
        batches.push_back(std::move(b));
    }
    return batches;
}

std::uint64_t dataset_hash(const std::vector<Graph>& graphs) {
    std::uint64_t h = 1469598103934665603ull;
    for (const Graph& g : graphs) {
        h = fnv1a64(&g.n, sizeof(g.n), h);
        h = fnv1a64(g.adj.data(), g.adj.size(), h);
        h = fnv1a64(g.features.data(), g.features.size() * sizeof(double), h);
        h = fnv1a64(&g.label, sizeof(g.label), h);
    }
    return h;
}

namespace {

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path);
    check(in.good(), "convert_tu: cannot open " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    while (!lines.empty() && lines.back().empty()) lines.pop_back();
    return lines;
}

std::vector<double> parse_csv_row(const std::string& line) {
    std::vector<double> out;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(std::stod(tok));
    return out;
}

}  // namespace

std::vector<Graph> convert_tu(const std::string& dir, const std::string& name) {
    namespace fs = std::filesystem;
    const std::string base = (fs::path(dir) / name).string() + "_";

    const auto indicator = read_lines(base + "graph_indicator.txt");
    const auto graph_labels = read_lines(base + "graph_labels.txt");
    const auto edges = read_lines(base + "A.txt");

    const std::size_t num_nodes = indicator.size();
    const std::size_t num_graphs = graph_labels.size();
    check(num_graphs >= 1, "convert_tu: no graphs");

    // node -> graph (1-indexed in the files)
    std::vector<std::size_t> node_graph(num_nodes);
    std::vector<std::size_t> graph_size(num_graphs, 0);
    for (std::size_t i = 0; i < num_nodes; ++i) {
        const auto gidx = static_cast<std::size_t>(std::stoull(indicator[i]));
        check(gidx >= 1 && gidx <= num_graphs, "convert_tu: bad graph indicator on node line " + std::to_string(i + 1));
        node_graph[i] = gidx - 1;
        ++graph_size[gidx - 1];
    }
    std::vector<std::size_t> node_local(num_nodes);
    {
        std::vector<std::size_t> next(num_graphs, 0);
        for (std::size_t i = 0; i < num_nodes; ++i) node_local[i] = next[node_graph[i]]++;
    }

    // labels remapped to a contiguous 0-based range, ordered by raw value
    std::vector<long> raw_labels(num_graphs);
    std::vector<long> distinct;
    for (std::size_t i = 0; i < num_graphs; ++i) {
        raw_labels[i] = std::stol(graph_labels[i]);
        distinct.push_back(raw_labels[i]);
    }
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());

    // features: attributes if present, else one-hot node labels, else constant 1
    std::vector<std::vector<double>> node_feats(num_nodes);
    std::size_t feat_dim = 1;
    if (fs::exists(base + "node_attributes.txt")) {
        const auto attrs = read_lines(base + "node_attributes.txt");
        check(attrs.size() == num_nodes, "convert_tu: node attribute count mismatch");
        for (std::size_t i = 0; i < num_nodes; ++i) node_feats[i] = parse_csv_row(attrs[i]);
        feat_dim = node_feats[0].size();
    } else if (fs::exists(base + "node_labels.txt")) {
        const auto nl = read_lines(base + "node_labels.txt");
        check(nl.size() == num_nodes, "convert_tu: node label count mismatch");
        std::vector<long> raw(num_nodes);
        std::vector<long> kinds;
        for (std::size_t i = 0; i < num_nodes; ++i) {
            raw[i] = std::stol(nl[i]);
            kinds.push_back(raw[i]);
        }
        std::sort(kinds.begin(), kinds.end());
        kinds.erase(std::unique(kinds.begin(), kinds.end()), kinds.end());
        feat_dim = kinds.size();
        for (std::size_t i = 0; i < num_nodes; ++i) {
            node_feats[i].assign(feat_dim, 0.0);
            const auto pos = static_cast<std::size_t>(
                std::lower_bound(kinds.begin(), kinds.end(), raw[i]) - kinds.begin());
            node_feats[i][pos] = 1.0;
        }
    } else {
        for (std::size_t i = 0; i < num_nodes; ++i) node_feats[i] = {1.0};
    }

    std::vector<Graph> graphs(num_graphs);
    for (std::size_t gi = 0; gi < num_graphs; ++gi) {
        graphs[gi].n = graph_size[gi];
        graphs[gi].adj.assign(graph_size[gi] * graph_size[gi], 0);
        graphs[gi].feature_dim = feat_dim;
        graphs[gi].features.assign(graph_size[gi] * feat_dim, 0.0);
        const auto pos = static_cast<std::size_t>(
            std::lower_bound(distinct.begin(), distinct.end(), raw_labels[gi]) - distinct.begin());
        graphs[gi].label = static_cast<int>(pos);
    }
    for (std::size_t i = 0; i < num_nodes; ++i) {
        Graph& g = graphs[node_graph[i]];
        check(node_feats[i].size() == feat_dim, "convert_tu: ragged node attributes");
        for (std::size_t j = 0; j < feat_dim; ++j) g.features[node_local[i] * feat_dim + j] = node_feats[i][j];
    }
    for (std::size_t li = 0; li < edges.size(); ++li) {
        if (edges[li].empty()) continue;
        const auto pair = parse_csv_row(edges[li]);
        check(pair.size() == 2, "convert_tu: bad edge line " + std::to_string(li + 1));
        const auto u = static_cast<std::size_t>(pair[0]) - 1;
        const auto v = static_cast<std::size_t>(pair[1]) - 1;
        check(u < num_nodes && v < num_nodes, "convert_tu: edge endpoint out of range on line " + std::to_string(li + 1));
        check(node_graph[u] == node_graph[v], "convert_tu: cross-graph edge on line " + std::to_string(li + 1));
        if (u == v) continue;  // drop self-loops
        Graph& g = graphs[node_graph[u]];
        g.adj[node_local[u] * g.n + node_local[v]] = 1;
        g.adj[node_local[v] * g.n + node_local[u]] = 1;
    }
    for (std::size_t gi = 0; gi < num_graphs; ++gi) validate_graph(graphs[gi], "convert_tu graph " + std::to_string(gi));
    return graphs;
}

}  // namespace gtprune
