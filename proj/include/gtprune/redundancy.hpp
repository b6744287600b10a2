#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace gtprune {

// One recorded row-stochastic attention matrix (valid nodes only).
struct AttentionRecord {
    std::size_t layer = 0;
    std::size_t head = 0;
    std::size_t graph = 0;
    std::size_t n = 0;
    std::vector<double> probs;  // n*n row-major, each row sums to 1 within 1e-6
};

void validate_attention_record(const AttentionRecord& rec, double tol = 1e-6);

// Column means over rows of one matrix: how much all other tokens attend to
// each token.
std::vector<double> attention_profile(const AttentionRecord& rec);

// Jensen-Shannon distance (log base 2, so the maximum is exactly 1) between
// two heads over the same graphs: per query row sqrt(JS divergence), averaged
// over rows and graphs.
double js_distance(const std::vector<AttentionRecord>& a, const std::vector<AttentionRecord>& b);

// Distance correlation of two paired observation sets (rows = observations).
// A zero distance variance yields 0 with a warning on stderr.
double distance_correlation(const std::vector<std::vector<double>>& x,
                            const std::vector<std::vector<double>>& y);

// Per graph, the paired observations are the entries of the two flattened
// attention matrices; the per-graph dCor values are averaged.
double dcor_records(const std::vector<AttentionRecord>& a, const std::vector<AttentionRecord>& b);

// Linear CKA between two column-centered sample matrices (n x d1, n x d2):
// |Y^T X|_F^2 / (|X^T X|_F |Y^T Y|_F); zero denominator yields 0 + warning.
double linear_cka(const std::vector<double>& x, const std::vector<double>& y, std::size_t n,
                  std::size_t dx, std::size_t dy);

// Symmetric matrix with labels, written as CSV / SVG by the harness.
struct SymMatrix {
    std::size_t dim = 0;
    std::vector<double> values;
    std::vector<std::string> labels;
    std::string metric;

    double at(std::size_t i, std::size_t j) const { return values[i * dim + j]; }
    void set(std::size_t i, std::size_t j, double v) {
        values[i * dim + j] = v;
        values[j * dim + i] = v;
    }
};

// Pairwise head-redundancy distances over (layer, head) pairs; metric is
// "js" (JS distance) or "dcor" (1 - dCor).
SymMatrix head_redundancy_matrix(const std::vector<AttentionRecord>& records, std::size_t layers,
                                 std::size_t heads, const std::string& metric);

// Pairwise linear-CKA similarity between recorded sublayer representations;
// reps[i] is an (n x dim) sample matrix, all with the same n.
SymMatrix layer_similarity_matrix(const std::vector<std::vector<double>>& reps,
                                  const std::vector<std::string>& labels, std::size_t n,
                                  std::size_t dim);

}  // namespace gtprune
