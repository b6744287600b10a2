#include <doctest.h>

#include <cmath>

#include "gtprune/redundancy.hpp"
#include "gtprune/rng.hpp"

using namespace gtprune;

namespace {

AttentionRecord record(std::size_t n, std::vector<double> probs, std::size_t layer = 0,
                       std::size_t head = 0, std::size_t graph = 0) {
    AttentionRecord r;
    r.layer = layer;
    r.head = head;
    r.graph = graph;
    r.n = n;
    r.probs = std::move(probs);
    return r;
}

AttentionRecord random_stochastic(std::size_t n, Rng& rng, std::size_t layer = 0, std::size_t head = 0,
                                  std::size_t graph = 0) {
    std::vector<double> probs(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        double sum = 0;
        for (std::size_t j = 0; j < n; ++j) {
            probs[i * n + j] = rng.uniform() + 1e-3;
            sum += probs[i * n + j];
        }
        for (std::size_t j = 0; j < n; ++j) probs[i * n + j] /= sum;
    }
    return record(n, std::move(probs), layer, head, graph);
}

}  // namespace

TEST_SUITE("redundancy") {

TEST_CASE("attention_profile of uniform attention is 1/n") {
    const std::size_t n = 5;
    auto rec = record(n, std::vector<double>(n * n, 1.0 / n));
    for (double v : attention_profile(rec)) CHECK(v == doctest::Approx(1.0 / n).epsilon(1e-12));
}

TEST_CASE("attention_profile of a sink column is one-hot") {
    // every row puts all mass on column 2
    std::vector<double> probs(16, 0.0);
    for (std::size_t i = 0; i < 4; ++i) probs[i * 4 + 2] = 1.0;
    auto profile = attention_profile(record(4, probs));
    CHECK(profile == std::vector<double>{0, 0, 1, 0});
}

TEST_CASE("attention_profile matches hand arithmetic on a 3x3 matrix") {
    auto rec = record(3, {0.5, 0.3, 0.2, 0.1, 0.6, 0.3, 0.25, 0.25, 0.5});
    auto profile = attention_profile(rec);
    CHECK(profile[0] == doctest::Approx((0.5 + 0.1 + 0.25) / 3.0).epsilon(1e-12));
    CHECK(profile[1] == doctest::Approx((0.3 + 0.6 + 0.25) / 3.0).epsilon(1e-12));
    CHECK(profile[2] == doctest::Approx((0.2 + 0.3 + 0.5) / 3.0).epsilon(1e-12));
}

TEST_CASE("attention records reject unnormalized rows") {
    auto rec = record(2, {0.9, 0.2, 0.5, 0.5});
    CHECK_THROWS_AS(validate_attention_record(rec), std::runtime_error);
    std::vector<AttentionRecord> a{rec}, b{rec};
    CHECK_THROWS_AS(js_distance(a, b), std::runtime_error);
}

TEST_CASE("js_distance of identical heads is zero") {
    Rng rng(1);
    auto a = random_stochastic(6, rng);
    CHECK(js_distance({a}, {a}) == 0.0);
}

TEST_CASE("js_distance of disjoint-support rows is one") {
    auto a = record(2, {1.0, 0.0, 1.0, 0.0});
    auto b = record(2, {0.0, 1.0, 0.0, 1.0});
    CHECK(js_distance({a}, {b}) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("js hand case P=[1,0] Q=[.5,.5]") {
    auto a = record(2, {1.0, 0.0, 1.0, 0.0});
    auto b = record(2, {0.5, 0.5, 0.5, 0.5});
    const double d = js_distance({a}, {b});
    // closed-form KL arithmetic: JS = 1 - 0.5*log2(3) + ... = 0.311278...
    const double kl_pm = std::log2(1.0 / 0.75);
    const double kl_qm = 0.5 * std::log2(0.5 / 0.75) + 0.5 * std::log2(0.5 / 0.25);
    const double js = 0.5 * (kl_pm + kl_qm);
    CHECK(js == doctest::Approx(0.311278).epsilon(1e-4));
    CHECK(d == doctest::Approx(std::sqrt(js)).epsilon(1e-9));
    CHECK(d == doctest::Approx(0.5579).epsilon(1e-3));
}

TEST_CASE("js_distance is symmetric and satisfies the triangle inequality on samples") {
    Rng rng(2);
    for (int trial = 0; trial < 10; ++trial) {
        auto a = random_stochastic(5, rng);
        auto b = random_stochastic(5, rng);
        auto c = random_stochastic(5, rng);
        const double ab = js_distance({a}, {b});
        const double ba = js_distance({b}, {a});
        CHECK(ab == doctest::Approx(ba).epsilon(1e-12));
        const double ac = js_distance({a}, {c});
        const double cb = js_distance({c}, {b});
        CHECK(ab <= ac + cb + 1e-12);
    }
}

TEST_CASE("distance correlation of identical samples is one") {
    Rng rng(3);
    std::vector<std::vector<double>> x;
    for (int i = 0; i < 8; ++i) x.push_back({rng.normal(), rng.normal()});
    CHECK(distance_correlation(x, x) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("distance correlation is one under affine maps") {
    Rng rng(4);
    std::vector<std::vector<double>> x, y;
    for (int i = 0; i < 10; ++i) {
        const double v = rng.normal(), w = rng.normal();
        x.push_back({v, w});
        y.push_back({-2.5 * v + 1.0, -2.5 * w + 1.0});  // y = aX + b with a scalar
    }
    CHECK(distance_correlation(x, y) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("distance correlation matches a brute-force double-centering oracle") {
    // 4 observations, 2 dims, computed independently below
    std::vector<std::vector<double>> x = {{0.0, 1.0}, {1.0, 0.5}, {-1.0, 2.0}, {0.5, -0.5}};
    std::vector<std::vector<double>> y = {{2.0, -1.0}, {0.0, 0.0}, {1.5, 1.0}, {-0.5, 0.5}};

    const std::size_t m = 4;
    auto dist = [&](const std::vector<std::vector<double>>& s, std::size_t i, std::size_t j) {
        double acc = 0;
        for (std::size_t k = 0; k < s[i].size(); ++k) acc += (s[i][k] - s[j][k]) * (s[i][k] - s[j][k]);
        return std::sqrt(acc);
    };
    double a[4][4], b[4][4];
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            a[i][j] = dist(x, i, j);
            b[i][j] = dist(y, i, j);
        }
    auto center = [&](double d[4][4]) {
        double row[4] = {0}, col[4] = {0}, grand = 0;
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < m; ++j) {
                row[i] += d[i][j] / m;
                col[j] += d[i][j] / m;
                grand += d[i][j] / (m * m);
            }
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < m; ++j) d[i][j] = d[i][j] - row[i] - col[j] + grand;
    };
    center(a);
    center(b);
    double cov = 0, vx = 0, vy = 0;
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            cov += a[i][j] * b[i][j];
            vx += a[i][j] * a[i][j];
            vy += b[i][j] * b[i][j];
        }
    const double expect = std::sqrt((cov / 16.0) / std::sqrt((vx / 16.0) * (vy / 16.0)));
    CHECK(distance_correlation(x, y) == doctest::Approx(expect).epsilon(1e-10));
}

TEST_CASE("constant samples yield dCor 0 with a warning") {
    std::vector<std::vector<double>> x = {{1.0}, {1.0}, {1.0}};
    std::vector<std::vector<double>> y = {{0.1}, {0.9}, {0.4}};
    CHECK(distance_correlation(x, y) == 0.0);
}

TEST_CASE("dcor_records averages per-graph entry correlations") {
    Rng rng(5);
    auto a1 = random_stochastic(4, rng, 0, 0, 0);
    auto a2 = random_stochastic(6, rng, 0, 0, 1);  // differing n handled per graph
    CHECK(dcor_records({a1, a2}, {a1, a2}) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("linear_cka identities") {
    Rng rng(6);
    const std::size_t n = 12, d = 4;
    std::vector<double> x(n * d);
    for (double& v : x) v = rng.normal();

    SUBCASE("self similarity is one") {
        CHECK(linear_cka(x, x, n, d, d) == doctest::Approx(1.0).epsilon(1e-9));
    }
    SUBCASE("orthogonal rotation preserves similarity") {
        // Givens rotation in the (0,1) plane by 0.7 rad, identity elsewhere
        const double c = std::cos(0.7), s = std::sin(0.7);
        std::vector<double> y(n * d);
        for (std::size_t i = 0; i < n; ++i) {
            y[i * d + 0] = c * x[i * d + 0] - s * x[i * d + 1];
            y[i * d + 1] = s * x[i * d + 0] + c * x[i * d + 1];
            for (std::size_t j = 2; j < d; ++j) y[i * d + j] = x[i * d + j];
        }
        CHECK(linear_cka(x, y, n, d, d) == doctest::Approx(1.0).epsilon(1e-9));
    }
    SUBCASE("isotropic scaling preserves similarity") {
        std::vector<double> y = x;
        for (double& v : y) v *= 37.5;
        CHECK(linear_cka(x, y, n, d, d) == doctest::Approx(1.0).epsilon(1e-9));
    }
    SUBCASE("orthogonal column spaces give zero") {
        // exactly orthogonal, zero-mean sample vectors in R^4
        std::vector<double> x2 = {1, 0, 1, 0, -1, 0, -1, 0};   // col0 = [1,1,-1,-1]
        std::vector<double> y2 = {1, 0, -1, 0, 1, 0, -1, 0};   // col0 = [1,-1,1,-1]
        CHECK(linear_cka(x2, y2, 4, 2, 2) == doctest::Approx(0.0).epsilon(1e-12));
    }
    SUBCASE("zero-norm input gives zero with a warning") {
        std::vector<double> z(n * d, 3.14);  // constant columns center to zero
        CHECK(linear_cka(x, z, n, d, d) == 0.0);
    }
}

TEST_CASE("head redundancy matrices are symmetric with zero diagonals") {
    Rng rng(7);
    std::vector<AttentionRecord> records;
    for (std::size_t l = 0; l < 2; ++l)
        for (std::size_t h = 0; h < 2; ++h)
            for (std::size_t g = 0; g < 3; ++g) records.push_back(random_stochastic(5, rng, l, h, g));
    for (const std::string metric : {"js", "dcor"}) {
        SymMatrix m = head_redundancy_matrix(records, 2, 2, metric);
        CHECK(m.dim == 4);
        for (std::size_t i = 0; i < m.dim; ++i) {
            CHECK(m.at(i, i) == 0.0);
            for (std::size_t j = 0; j < m.dim; ++j) {
                CHECK(m.at(i, j) == m.at(j, i));
                CHECK(m.at(i, j) >= -1e-12);
                CHECK(m.at(i, j) <= 1.0 + 1e-12);
            }
        }
    }
}

TEST_CASE("layer similarity matrix has a unit diagonal") {
    Rng rng(8);
    const std::size_t n = 20, d = 6;
    std::vector<std::vector<double>> reps(3, std::vector<double>(n * d));
    for (auto& r : reps)
        for (double& v : r) v = rng.normal();
    SymMatrix m = layer_similarity_matrix(reps, {"a", "b", "c"}, n, d);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(m.at(i, i) == doctest::Approx(1.0).epsilon(1e-9));
        for (std::size_t j = 0; j < 3; ++j) {
            CHECK(m.at(i, j) >= 0.0);
            CHECK(m.at(i, j) <= 1.0 + 1e-9);
        }
    }
}

TEST_CASE("redundancy outputs are bitwise reproducible") {
    Rng rng1(9), rng2(9);
    std::vector<AttentionRecord> r1, r2;
    for (std::size_t g = 0; g < 3; ++g) {
        r1.push_back(random_stochastic(5, rng1, 0, 0, g));
        r2.push_back(random_stochastic(5, rng2, 0, 0, g));
    }
    std::vector<AttentionRecord> s1, s2;
    for (std::size_t g = 0; g < 3; ++g) {
        s1.push_back(random_stochastic(5, rng1, 0, 1, g));
        s2.push_back(random_stochastic(5, rng2, 0, 1, g));
    }
    CHECK(js_distance(r1, s1) == js_distance(r2, s2));
    CHECK(dcor_records(r1, s1) == dcor_records(r2, s2));
}

}  // TEST_SUITE
