#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "gtprune/graph_data.hpp"
#include "gtprune/harness.hpp"

using namespace gtprune;

int main(int argc, char** argv) {
    CLI::App app{"graph-transformer sparsification engine"};
    app.require_subcommand(1);

    // train
    auto* train = app.add_subcommand("train", "train a model with one configured pruner");
    std::string config_path, out_override;
    train->add_option("--config", config_path, "flat key=value config file")->required();
    train->add_option("--out", out_override, "override the run output root");

    // synth
    auto* synth = app.add_subcommand("synth", "generate a labeled motif dataset (JSONL)");
    std::string synth_out, motif_str = "triangle", features_str = "structural";
    SynthConfig synth_cfg;
    synth->add_option("--out", synth_out, "output JSONL path")->required();
    synth->add_option("--count", synth_cfg.count, "graph count");
    synth->add_option("--n-min", synth_cfg.n_min, "minimum node count");
    synth->add_option("--n-max", synth_cfg.n_max, "maximum node count");
    synth->add_option("--d", synth_cfg.feature_dim, "feature dimension");
    synth->add_option("--motif", motif_str, "triangle|clique4");
    synth->add_option("--pos-frac", synth_cfg.positive_fraction, "positive fraction");
    synth->add_option("--seed", synth_cfg.seed, "generation seed");
    synth->add_option("--features", features_str, "structural|random");

    // report
    auto* report = app.add_subcommand("report", "compare a dense and a pruned checkpoint");
    std::string dense_path, pruned_path, report_out;
    report->add_option("--dense", dense_path, "dense checkpoint")->required();
    report->add_option("--pruned", pruned_path, "pruned checkpoint")->required();
    report->add_option("--out", report_out, "also write the CSV here");

    // analyze
    auto* analyze = app.add_subcommand("analyze", "record activations and run redundancy analyses");
    std::string ckpt_path, data_path, which = "attention", analyze_out = "analysis";
    analyze->add_option("--ckpt", ckpt_path, "checkpoint path")->required();
    analyze->add_option("--data", data_path, "dataset JSONL (must match the checkpoint)")->required();
    analyze->add_option("--which", which, "attention|heads|layers|tokens")->required();
    analyze->add_option("--out", analyze_out, "output directory");

    // convert-tu
    auto* convert = app.add_subcommand("convert-tu", "convert a TU-style edge-list dataset to JSONL");
    std::string tu_dir, tu_name, tu_out;
    convert->add_option("--in", tu_dir, "dataset directory")->required();
    convert->add_option("--name", tu_name, "dataset prefix (e.g. NCI1)")->required();
    convert->add_option("--out", tu_out, "output JSONL path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) {
            RunConfig cfg = RunConfig::from_file(config_path);
            if (!out_override.empty()) cfg.out_root = out_override;
            RunResult res = run_training(cfg);
            std::cout << "run dir: " << res.run_dir << "\n"
                      << "final test metric: " << format_double(res.final_test_metric) << "\n"
                      << "active params: " << res.active_params << "\n"
                      << "flops saving: " << format_double(res.flops_saving) << "\n";
        } else if (*synth) {
            synth_cfg.motif = motif_from_string(motif_str);
            synth_cfg.feature_mode = feature_mode_from_string(features_str);
            const auto graphs = synth_motif_dataset(synth_cfg);
            save_jsonl(graphs, synth_out);
            std::cout << "wrote " << graphs.size() << " graphs to " << synth_out << "\n";
        } else if (*report) {
            const Checkpoint dense = load_checkpoint(dense_path);
            const Checkpoint pruned = load_checkpoint(pruned_path);
            const auto rows = comparison_rows(dense, pruned);
            std::cout << report_text(rows, dense.metric_name);
            if (!report_out.empty()) {
                std::ofstream out(report_out);
                out << report_csv(rows);
            }
        } else if (*analyze) {
            const Checkpoint ck = load_checkpoint(ckpt_path);
            const auto graphs = load_jsonl(data_path);
            const auto files = run_analyze(ck, graphs, analyze_kind_from_string(which), analyze_out);
            for (const auto& f : files) std::cout << f << "\n";
        } else if (*convert) {
            const auto graphs = convert_tu(tu_dir, tu_name);
            save_jsonl(graphs, tu_out);
            std::cout << "wrote " << graphs.size() << " graphs to " << tu_out << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
