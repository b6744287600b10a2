#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gtprune/common.hpp"

namespace gtprune {

// One classification instance: undirected simple graph, dense features, label.
struct Graph {
    std::size_t n = 0;
    std::vector<std::uint8_t> adj;  // n*n row-major, {0,1}, symmetric, zero diagonal
    std::vector<double> features;   // n*feature_dim row-major
    std::size_t feature_dim = 0;
    int label = 0;

    bool edge(std::size_t i, std::size_t j) const { return adj[i * n + j] != 0; }
    void set_edge(std::size_t i, std::size_t j) {
        adj[i * n + j] = 1;
        adj[j * n + i] = 1;
    }
    std::size_t degree(std::size_t i) const {
        std::size_t d = 0;
        for (std::size_t j = 0; j < n; ++j) d += adj[i * n + j];
        return d;
    }
    std::size_t edge_count() const;  // undirected edges
};

// Throws on invariant violations; error text names the offending entry.
void validate_graph(const Graph& g, const std::string& where = "graph");

std::vector<Graph> load_jsonl(const std::string& path);
void save_jsonl(const std::vector<Graph>& graphs, const std::string& path);

enum class Motif { triangle, clique4 };
enum class FeatureMode { structural, random };

Motif motif_from_string(const std::string& s);
FeatureMode feature_mode_from_string(const std::string& s);

struct SynthConfig {
    std::size_t count = 500;
    std::size_t n_min = 8;
    std::size_t n_max = 20;
    std::size_t feature_dim = 8;
    Motif motif = Motif::triangle;
    double positive_fraction = 0.5;
    std::uint64_t seed = 7;
    FeatureMode feature_mode = FeatureMode::structural;
};

// Labels are motif-presence by construction: positives get the motif planted,
// negatives are rejection-sampled and verified motif-free by exhaustive search.
std::vector<Graph> synth_motif_dataset(const SynthConfig& cfg);

bool contains_motif(const Graph& g, Motif motif);

struct DatasetSplit {
    std::vector<std::size_t> train, val, test;
    std::uint64_t seed = 0;
};

DatasetSplit random_split(std::size_t count, double train_frac, double val_frac, std::uint64_t seed);

// One padded slot of a batch. Padded rows carry validity 0, zero features,
// and no adjacency; the model keeps them inert.
struct BatchSlot {
    std::size_t n = 0;              // valid node count
    std::size_t dataset_index = 0;
    int label = 0;
    std::vector<double> features;   // n_max * feature_dim, zero padded
    std::vector<std::uint8_t> adj;  // n_max * n_max, zero padded
    std::vector<double> validity;   // n_max, 1.0 for real nodes
};

struct Batch {
    std::size_t n_max = 0;
    std::size_t feature_dim = 0;
    std::vector<BatchSlot> slots;
    std::vector<int> labels;
};

std::vector<Batch> make_batches(const std::vector<Graph>& graphs,
                                const std::vector<std::size_t>& indices,
                                std::size_t batch_size,
                                std::optional<std::uint64_t> shuffle_seed);

// Content hash over the canonical serialization; embedded in checkpoints so
// reports never mix datasets.
std::uint64_t dataset_hash(const std::vector<Graph>& graphs);

// TU-style edge-list directory (DS_A.txt, DS_graph_indicator.txt,
// DS_graph_labels.txt, optional node labels/attributes) -> Graph list.
std::vector<Graph> convert_tu(const std::string& dir, const std::string& name);

}  // namespace gtprune
