#include "gtprune/redundancy.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "gtprune/common.hpp"

namespace gtprune {

void validate_attention_record(const AttentionRecord& rec, double tol) {
    check(rec.probs.size() == rec.n * rec.n, "attention record: size mismatch");
    for (std::size_t i = 0; i < rec.n; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < rec.n; ++j) {
            const double v = rec.probs[i * rec.n + j];
            check(v >= -tol, "attention record: negative probability");
            sum += v;
        }
        if (std::abs(sum - 1.0) > tol)
            fail("attention record: row " + std::to_string(i) + " sums to " + std::to_string(sum));
    }
}

std::vector<double> attention_profile(const AttentionRecord& rec) {
    validate_attention_record(rec);
    std::vector<double> profile(rec.n, 0.0);
    for (std::size_t i = 0; i < rec.n; ++i)
        for (std::size_t j = 0; j < rec.n; ++j) profile[j] += rec.probs[i * rec.n + j];
    for (double& v : profile) v /= static_cast<double>(rec.n);
    return profile;
}

namespace {

constexpr double kLog2 = 0.69314718055994530942;

double js_divergence_rows(const double* p, const double* q, std::size_t n) {
    // base-2 JS divergence between two discrete distributions
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        const double m = 0.5 * (p[j] + q[j]);
        if (p[j] > 0.0) acc += 0.5 * p[j] * std::log(p[j] / m);
        if (q[j] > 0.0) acc += 0.5 * q[j] * std::log(q[j] / m);
    }
    return acc / kLog2;
}

}  // namespace

double js_distance(const std::vector<AttentionRecord>& a, const std::vector<AttentionRecord>& b) {
    check(a.size() == b.size() && !a.empty(), "js_distance: record sets must align");
    double total = 0.0;
    std::size_t rows = 0;
    for (std::size_t g = 0; g < a.size(); ++g) {
        check(a[g].n == b[g].n, "js_distance: graph size mismatch");
        validate_attention_record(a[g]);
        validate_attention_record(b[g]);
        const std::size_t n = a[g].n;
        for (std::size_t i = 0; i < n; ++i) {
            const double div = js_divergence_rows(&a[g].probs[i * n], &b[g].probs[i * n], n);
            total += std::sqrt(std::max(0.0, div));
            ++rows;
        }
    }
    return total / static_cast<double>(rows);
}

namespace {

double distance_correlation_impl(const std::vector<std::vector<double>>& x,
                                 const std::vector<std::vector<double>>& y, bool* degenerate) {
    const std::size_t m = x.size();
    check(m >= 2 && y.size() == m, "distance_correlation: need >= 2 paired observations");

    auto dist_matrix = [m](const std::vector<std::vector<double>>& s) {
        std::vector<double> d(m * m, 0.0);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = i + 1; j < m; ++j) {
                double acc = 0.0;
                for (std::size_t k = 0; k < s[i].size(); ++k) {
                    const double diff = s[i][k] - s[j][k];
                    acc += diff * diff;
                }
                d[i * m + j] = d[j * m + i] = std::sqrt(acc);
            }
        return d;
    };
    auto double_center = [m](std::vector<double>& d) {
        std::vector<double> row_mean(m, 0.0), col_mean(m, 0.0);
        double grand = 0.0;
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < m; ++j) {
                row_mean[i] += d[i * m + j];
                col_mean[j] += d[i * m + j];
                grand += d[i * m + j];
            }
        for (auto& v : row_mean) v /= static_cast<double>(m);
        for (auto& v : col_mean) v /= static_cast<double>(m);
        grand /= static_cast<double>(m * m);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < m; ++j) d[i * m + j] += grand - row_mean[i] - col_mean[j];
    };

    std::vector<double> a = dist_matrix(x), b = dist_matrix(y);
    double_center(a);
    double_center(b);
    double dcov2 = 0.0, dvarx = 0.0, dvary = 0.0;
    for (std::size_t i = 0; i < m * m; ++i) {
        dcov2 += a[i] * b[i];
        dvarx += a[i] * a[i];
        dvary += b[i] * b[i];
    }
    const double mm = static_cast<double>(m * m);
    dcov2 /= mm;
    dvarx /= mm;
    dvary /= mm;
    if (dvarx <= 0.0 || dvary <= 0.0) {
        if (degenerate) *degenerate = true;
        return 0.0;
    }
    const double v = dcov2 / std::sqrt(dvarx * dvary);
    return v <= 0.0 ? 0.0 : std::sqrt(v);
}

}  // namespace

double distance_correlation(const std::vector<std::vector<double>>& x,
                            const std::vector<std::vector<double>>& y) {
    bool degenerate = false;
    const double v = distance_correlation_impl(x, y, &degenerate);
    if (degenerate) std::cerr << "dcor: constant sample (zero distance variance), returning 0\n";
    return v;
}

double dcor_records(const std::vector<AttentionRecord>& a, const std::vector<AttentionRecord>& b) {
    check(a.size() == b.size() && !a.empty(), "dcor_records: record sets must align");
    double total = 0.0;
    std::size_t degenerate_count = 0;
    for (std::size_t g = 0; g < a.size(); ++g) {
        check(a[g].n == b[g].n, "dcor_records: graph size mismatch");
        const std::size_t entries = a[g].n * a[g].n;
        std::vector<std::vector<double>> x(entries), y(entries);
        for (std::size_t i = 0; i < entries; ++i) {
            x[i] = {a[g].probs[i]};
            y[i] = {b[g].probs[i]};
        }
        bool degenerate = false;
        total += distance_correlation_impl(x, y, &degenerate);
        degenerate_count += degenerate ? 1 : 0;
    }
    if (degenerate_count > 0)
        std::cerr << "dcor: " << degenerate_count << "/" << a.size()
                  << " graphs had constant attention (zero distance variance), counted as 0\n";
    return total / static_cast<double>(a.size());
}

double linear_cka(const std::vector<double>& x, const std::vector<double>& y, std::size_t n,
                  std::size_t dx, std::size_t dy) {
    check(x.size() == n * dx && y.size() == n * dy, "linear_cka: shape mismatch");
    check(n >= 1, "linear_cka: need samples");

    auto center = [n](std::vector<double> m, std::size_t d) {
        for (std::size_t j = 0; j < d; ++j) {
            double mu = 0.0;
            for (std::size_t i = 0; i < n; ++i) mu += m[i * d + j];
            mu /= static_cast<double>(n);
            for (std::size_t i = 0; i < n; ++i) m[i * d + j] -= mu;
        }
        return m;
    };
    const std::vector<double> xc = center(x, dx), yc = center(y, dy);

    auto gram_frob2 = [n](const std::vector<double>& a, std::size_t da, const std::vector<double>& b,
                          std::size_t db) {
        // |B^T A|_F^2 computed entrywise
        double acc = 0.0;
        for (std::size_t i = 0; i < db; ++i)
            for (std::size_t j = 0; j < da; ++j) {
                double e = 0.0;
                for (std::size_t k = 0; k < n; ++k) e += b[k * db + i] * a[k * da + j];
                acc += e * e;
            }
        return acc;
    };
    const double num = gram_frob2(xc, dx, yc, dy);
    const double den = std::sqrt(gram_frob2(xc, dx, xc, dx)) * std::sqrt(gram_frob2(yc, dy, yc, dy));
    if (den <= 0.0) {
        std::cerr << "linear_cka: zero-norm representation, returning 0\n";
        return 0.0;
    }
    return num / den;
}

SymMatrix head_redundancy_matrix(const std::vector<AttentionRecord>& records, std::size_t layers,
                                 std::size_t heads, const std::string& metric) {
    check(metric == "js" || metric == "dcor", "head_redundancy_matrix: metric must be js|dcor");
    const std::size_t dim = layers * heads;
    SymMatrix m;
    m.dim = dim;
    m.metric = metric;
    m.values.assign(dim * dim, 0.0);
    for (std::size_t l = 0; l < layers; ++l)
        for (std::size_t h = 0; h < heads; ++h)
            m.labels.push_back("l" + std::to_string(l) + "h" + std::to_string(h));

    // group records per (layer, head), ordered by graph id
    std::vector<std::vector<AttentionRecord>> groups(dim);
    for (const AttentionRecord& r : records) groups[r.layer * heads + r.head].push_back(r);
    for (auto& g : groups)
        std::sort(g.begin(), g.end(),
                  [](const AttentionRecord& a, const AttentionRecord& b) { return a.graph < b.graph; });

    for (std::size_t i = 0; i < dim; ++i)
        for (std::size_t j = i; j < dim; ++j) {
            double v;
            if (i == j) {
                v = 0.0;
            } else if (metric == "js") {
                v = js_distance(groups[i], groups[j]);
            } else {
                v = 1.0 - dcor_records(groups[i], groups[j]);
            }
            m.set(i, j, v);
        }
    return m;
}

SymMatrix layer_similarity_matrix(const std::vector<std::vector<double>>& reps,
                                  const std::vector<std::string>& labels, std::size_t n,
                                  std::size_t dim) {
    check(reps.size() == labels.size(), "layer_similarity_matrix: label mismatch");
    SymMatrix m;
    m.dim = reps.size();
    m.metric = "cka";
    m.labels = labels;
    m.values.assign(m.dim * m.dim, 0.0);
    for (std::size_t i = 0; i < m.dim; ++i)
        for (std::size_t j = i; j < m.dim; ++j)
            m.set(i, j, linear_cka(reps[i], reps[j], n, dim, dim));
    return m;
}

}  // namespace gtprune
