#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gtprune/graph_data.hpp"
#include "gtprune/layer_pruner.hpp"
#include "gtprune/model.hpp"
#include "gtprune/prune_state.hpp"
#include "gtprune/redundancy.hpp"
#include "gtprune/weight_pruner.hpp"

namespace gtprune {

struct OptimConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct TokenPrunerCfg {
    double keep_ratio = 0.5;
    double p_s = 0.1;
    double tau_start = 1.0;
    double tau_end = 0.1;
    std::size_t stage = 0;
    bool epoch_frozen = false;
};

struct HeadPrunerCfg {
    double sparsity = 0.25;
    std::size_t prune_epoch = 0;  // 0 = auto (epochs/3)
    std::size_t regrow_every = 5;
    double regrow_fraction = 0.1;
};

struct LayerPrunerCfg {
    double sparsity = 0.25;
    LayerFinalize finalize = LayerFinalize::greedy;
};

struct WeightPrunerCfg {
    double sparsity = 0.5;  // p_f
    double p_i = 0.0;
    std::size_t t0 = 0;  // 0 = auto (10% of epochs)
    std::size_t m = 0;   // 0 = auto (60% of epochs / dt)
    std::size_t dt = 1;
    double regrow_fraction = 0.1;
};

enum class PrunerKind { none, token, head, layer, weight };
enum class MetricKind { accuracy, auc };

PrunerKind pruner_from_string(const std::string& s);
std::string to_string(PrunerKind k);
MetricKind metric_from_string(const std::string& s);
std::string to_string(MetricKind k);

// One run = one dataset, one model, exactly one active pruner, all seeds
// explicit. Parsed from a flat key=value config file.
struct RunConfig {
    bool use_synth = true;
    std::string data_path;
    SynthConfig synth;
    double train_frac = 0.6;
    double val_frac = 0.2;
    std::uint64_t split_seed = 0;  // 0 = train seed

    ModelConfig model;

    OptimConfig optim;
    std::size_t epochs = 40;
    std::size_t batch_size = 32;
    std::uint64_t seed = 1;
    MetricKind metric = MetricKind::accuracy;

    PrunerKind pruner = PrunerKind::none;
    TokenPrunerCfg token;
    HeadPrunerCfg head;
    LayerPrunerCfg layer;
    WeightPrunerCfg weight;

    std::string out_root = "runs";
    bool write_outputs = true;
    bool record_activations = false;

    static RunConfig from_file(const std::string& path);
    static RunConfig from_string(const std::string& text);
    std::string canonical() const;
    std::uint64_t config_hash() const;
    std::uint64_t effective_split_seed() const { return split_seed ? split_seed : seed; }
    void validate() const;
};

struct DatasetBundle {
    std::vector<Graph> graphs;
    DatasetSplit split;
    std::uint64_t hash = 0;
};

DatasetBundle load_dataset(const RunConfig& cfg);

struct EpochRow {
    std::size_t epoch = 0;
    double train_loss = 0;
    double train_metric = 0;
    double test_metric = 0;
};

struct RunResult {
    std::vector<EpochRow> rows;
    double final_test_metric = 0;
    std::size_t active_params = 0;
    double flops_actual = 0;  // mean per test graph
    double flops_dense = 0;
    double flops_saving = 0;  // 1 - actual/dense
    std::string run_dir;
    std::string metrics_csv;  // the determinism target, byte for byte
    ModelConfig model;
    ModelParams params;
    PruneState state;
    std::uint64_t data_hash = 0;
    double wall_seconds = 0;
};

RunResult run_training(const RunConfig& cfg);

double accuracy(const std::vector<int>& preds, const std::vector<int>& labels);
// Mann-Whitney rank statistic with tie-averaged ranks; labels in {0,1}.
double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels);

struct EvalOut {
    double metric = 0;
    double mean_loss = 0;
    std::vector<int> preds;
    std::vector<double> pos_scores;
    std::vector<std::vector<std::size_t>> kept;  // per graph, token-kept original ids
};

EvalOut evaluate_split(const ModelConfig& cfg, const ModelParams& params, const PruneState& state,
                       const std::vector<Graph>& graphs, const std::vector<std::size_t>& indices,
                       MetricKind metric);

struct Checkpoint {
    ModelConfig model;
    ModelParams params;
    PruneState state;
    Tensor scorer_w;  // duplicate of state.token.scorer_w when token pruning
    PrunerKind pruner = PrunerKind::none;
    double sparsity_setting = 0;
    std::uint64_t data_hash = 0;
    std::uint64_t seed = 0;
    std::uint64_t split_seed = 0;
    double train_frac = 0.6, val_frac = 0.2;
    double final_test_metric = 0;
    std::string metric_name = "accuracy";
    double flops_actual = 0, flops_dense = 0;
    std::size_t active_params = 0;
};

// Physically drops masked heads and dropped sublayers from the stored tensor
// set; weight-masked tensors are stored zeroed with their masks alongside.
void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

// Active (stored) parameter count after physical drops and weight masking.
std::size_t active_param_count(const ModelConfig& cfg, const PruneState& state);

struct ReportRow {
    std::string label;
    double sparsity = 0;
    std::size_t params = 0;
    double flops_saving = 0;
    double metric = 0;
};

// (Spar., #Para., FS, Acc.) pair for a dense/pruned run on the same dataset.
std::vector<ReportRow> comparison_rows(const Checkpoint& dense, const Checkpoint& pruned);
std::string report_text(const std::vector<ReportRow>& rows, const std::string& metric_name);
std::string report_csv(const std::vector<ReportRow>& rows);

enum class AnalyzeKind { attention, heads, layers, tokens };
AnalyzeKind analyze_kind_from_string(const std::string& s);

// Records activations over the checkpoint's test split into a named-tensor
// container under out_dir, then derives the requested artifacts (CSV/SVG or
// kept-token JSONL). Returns the written file paths.
std::vector<std::string> run_analyze(const Checkpoint& ck, const std::vector<Graph>& graphs,
                                     AnalyzeKind kind, const std::string& out_dir);

void write_matrix_csv(const std::string& path, const SymMatrix& m, const std::string& header_note);
void write_heatmap_svg(const std::string& path, const SymMatrix& m, const std::string& title);

std::string format_double(double v);  // shortest round-trip formatting used in CSVs

}  // namespace gtprune
