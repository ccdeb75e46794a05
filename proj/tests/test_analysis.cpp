#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <vector>

#include "motionmap/analysis.hpp"
#include "motionmap/common.hpp"

using namespace motionmap;

namespace {

Dataset dataset_from(const Matrix& x, const std::vector<std::array<double, 4>>& y) {
    Dataset d;
    d.inputs = x;
    d.targets = Matrix(x.rows, 4);
    for (std::size_t r = 0; r < x.rows; ++r)
        for (std::size_t c = 0; c < 4; ++c) d.targets.at(r, c) = y[r][c];
    return d;
}

Matrix random_inputs(Rng& rng, std::size_t n, std::size_t f = 15) {
    Matrix x(n, f);
    for (double& v : x.data) v = rng.uniform(-1.0, 1.0);
    return x;
}

// ---- brute-force CART oracle -------------------------------------------
// Recursive reference implementation that enumerates every (feature,
// midpoint) split with plain two-pass statistics. Same stopping rules and
// tie-break direction as the library, entirely separate code.

struct OracleNode {
    bool leaf = true;
    int feature = -1;
    double threshold = 0.0;
    double value = 0.0;
    std::unique_ptr<OracleNode> left, right;
};

double subset_mean(const std::vector<double>& y, const std::vector<std::size_t>& idx) {
    std::vector<double> vals;
    for (auto i : idx) vals.push_back(y[i]);
    std::sort(vals.begin(), vals.end());
    double s = 0.0;
    for (double v : vals) s += v;
    return s / static_cast<double>(vals.size());
}

double subset_sse(const std::vector<double>& y, const std::vector<std::size_t>& idx) {
    const double mean = subset_mean(y, idx);
    double s = 0.0;
    for (auto i : idx) s += (y[i] - mean) * (y[i] - mean);
    return s;
}

std::unique_ptr<OracleNode> oracle_build(const Matrix& x, const std::vector<double>& y,
                                         std::vector<std::size_t> idx, int depth,
                                         const TreeParams& params) {
    auto node = std::make_unique<OracleNode>();
    node->value = subset_mean(y, idx);
    const std::size_t n = idx.size();
    if (depth >= params.max_depth ||
        n < 2 * static_cast<std::size_t>(params.min_samples_leaf))
        return node;
    double y_lo = y[idx[0]], y_hi = y[idx[0]];
    for (auto i : idx) {
        y_lo = std::min(y_lo, y[i]);
        y_hi = std::max(y_hi, y[i]);
    }
    if (y_lo == y_hi) return node;

    const double parent = subset_sse(y, idx);
    double best_gain = 0.0;
    int best_f = -1;
    double best_thr = 0.0;

    for (std::size_t f = 0; f < x.cols; ++f) {
        std::vector<double> vals;
        for (auto i : idx) vals.push_back(x.at(i, f));
        std::sort(vals.begin(), vals.end());
        vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
        for (std::size_t v = 0; v + 1 < vals.size(); ++v) {
            const double thr = vals[v] + 0.5 * (vals[v + 1] - vals[v]);
            std::vector<std::size_t> li, ri;
            for (auto i : idx) (x.at(i, f) <= thr ? li : ri).push_back(i);
            if (li.size() < static_cast<std::size_t>(params.min_samples_leaf) ||
                ri.size() < static_cast<std::size_t>(params.min_samples_leaf))
                continue;
            const double gain = parent - subset_sse(y, li) - subset_sse(y, ri);
            if (gain > best_gain) {
                best_gain = gain;
                best_f = static_cast<int>(f);
                best_thr = thr;
            }
        }
    }
    if (best_f < 0 || !(best_gain > 0.0)) return node;

    std::vector<std::size_t> li, ri;
    for (auto i : idx)
        (x.at(i, static_cast<std::size_t>(best_f)) <= best_thr ? li : ri).push_back(i);
    node->leaf = false;
    node->feature = best_f;
    node->threshold = best_thr;
    node->left = oracle_build(x, y, std::move(li), depth + 1, params);
    node->right = oracle_build(x, y, std::move(ri), depth + 1, params);
    return node;
}

double oracle_predict(const OracleNode* node, const double* row) {
    while (!node->leaf)
        node = row[node->feature] <= node->threshold ? node->left.get() : node->right.get();
    return node->value;
}

}  // namespace

TEST_CASE("constant target collapses to a single leaf with zero importances") {
    Rng rng(61);
    const Matrix x = random_inputs(rng, 40);
    std::vector<std::array<double, 4>> y(40, {3.5, 3.5, 3.5, 3.5});
    const Dataset d = dataset_from(x, y);
    const RegressionTree tree = fit_tree(d, 0);
    CHECK(tree.nodes.size() == 1);
    CHECK(tree.leaf_count() == 1);
    const auto imp = mdi_importance(tree);
    for (double v : imp) CHECK(v == 0.0);
}

TEST_CASE("a perfectly predictive feature is split first") {
    Rng rng(62);
    Matrix x = random_inputs(rng, 60);
    std::vector<std::array<double, 4>> y(60);
    for (std::size_t r = 0; r < 60; ++r) {
        const double step = x.at(r, 7) > 0.1 ? 5.0 : -5.0;
        y[r] = {step, step, step, step};
    }
    const RegressionTree tree = fit_tree(dataset_from(x, y), 2);
    REQUIRE_FALSE(tree.nodes[0].leaf);
    CHECK(tree.nodes[0].feature == 7);
    const auto imp = mdi_importance(tree);
    CHECK(imp[7] == doctest::Approx(1.0));
}

TEST_CASE("tree predictions reproduce the brute-force CART oracle") {
    Rng rng(63);
    TreeParams params;
    params.max_depth = 6;
    params.min_samples_leaf = 2;
    for (int trial = 0; trial < 5; ++trial) {
        const Matrix x = random_inputs(rng, 50, 6);
        std::vector<std::array<double, 4>> y(50);
        for (std::size_t r = 0; r < 50; ++r) {
            const double v = std::sin(3.0 * x.at(r, 1)) + 0.5 * x.at(r, 4) +
                             0.2 * rng.normal();
            y[r] = {v, v, v, v};
        }
        const Dataset d = dataset_from(x, y);
        const RegressionTree tree = fit_tree(d, 0, params);

        std::vector<double> yy(50);
        for (std::size_t r = 0; r < 50; ++r) yy[r] = y[r][0];
        std::vector<std::size_t> idx(50);
        std::iota(idx.begin(), idx.end(), 0);
        const auto oracle = oracle_build(x, yy, idx, 0, params);

        for (std::size_t r = 0; r < 50; ++r)
            CHECK(tree.predict(x.row(r)) ==
                  doctest::Approx(oracle_predict(oracle.get(), x.row(r))).epsilon(1e-12));
    }
}

TEST_CASE("importances sum to one on any multi-node tree") {
    Rng rng(64);
    const Matrix x = random_inputs(rng, 200);
    std::vector<std::array<double, 4>> y(200);
    for (std::size_t r = 0; r < 200; ++r) {
        const double v = x.at(r, 3) + x.at(r, 8) * x.at(r, 8);
        y[r] = {v, v, v, v};
    }
    const RegressionTree tree = fit_tree(dataset_from(x, y), 1);
    REQUIRE(tree.leaf_count() > 1);
    const auto imp = mdi_importance(tree);
    double sum = 0.0;
    for (double v : imp) {
        CHECK(v >= 0.0);
        sum += v;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("planted features take the top-3 ranks for the jaw output") {
    Rng rng(65);
    const std::size_t n = 2000;
    const Matrix x = random_inputs(rng, n);
    std::vector<std::array<double, 4>> y(n);
    for (std::size_t r = 0; r < n; ++r) {
        // jaw driven by features 9, 11, 2 plus small noise
        const double jaw = std::tanh(1.1 * x.at(r, 9) + 0.8 * x.at(r, 11) +
                                     0.7 * x.at(r, 2)) +
                           0.02 * rng.normal();
        y[r] = {x.at(r, 0), x.at(r, 14), x.at(r, 9), jaw};
    }
    const Dataset d = dataset_from(x, y);
    const RegressionTree tree = fit_tree(d, 3);
    auto imp = mdi_importance(tree);
    std::vector<std::size_t> order(15);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return imp[a] > imp[b]; });
    std::vector<std::size_t> top3(order.begin(), order.begin() + 3);
    std::sort(top3.begin(), top3.end());
    CHECK(top3 == std::vector<std::size_t>{2, 9, 11});
}

TEST_CASE("tree fitting is invariant to row permutation") {
    Rng rng(66);
    const std::size_t n = 300;
    const Matrix x = random_inputs(rng, n, 8);
    std::vector<std::array<double, 4>> y(n);
    for (std::size_t r = 0; r < n; ++r) {
        const double v = x.at(r, 2) - 2.0 * x.at(r, 5) + 0.1 * rng.normal();
        y[r] = {v, v, v, v};
    }
    const Dataset d = dataset_from(x, y);

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    Dataset shuffled;
    shuffled.inputs = Matrix(n, 8);
    shuffled.targets = Matrix(n, 4);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < 8; ++c)
            shuffled.inputs.at(r, c) = d.inputs.at(perm[r], c);
        for (std::size_t c = 0; c < 4; ++c)
            shuffled.targets.at(r, c) = d.targets.at(perm[r], c);
    }

    const RegressionTree a = fit_tree(d, 0);
    const RegressionTree b = fit_tree(shuffled, 0);
    REQUIRE(a.nodes.size() == b.nodes.size());
    for (std::size_t i = 0; i < a.nodes.size(); ++i) {
        CHECK(a.nodes[i].leaf == b.nodes[i].leaf);
        CHECK(a.nodes[i].feature == b.nodes[i].feature);
        CHECK(a.nodes[i].threshold == b.nodes[i].threshold);
        CHECK(a.nodes[i].value == b.nodes[i].value);
        CHECK(a.nodes[i].samples == b.nodes[i].samples);
    }
}

TEST_CASE("positive rescaling of one feature preserves structure and leaf values") {
    Rng rng(67);
    const std::size_t n = 250;
    const Matrix x = random_inputs(rng, n, 6);
    std::vector<std::array<double, 4>> y(n);
    for (std::size_t r = 0; r < n; ++r) {
        const double v = std::sin(2.0 * x.at(r, 1)) + x.at(r, 4);
        y[r] = {v, v, v, v};
    }
    const Dataset d = dataset_from(x, y);

    Dataset scaled = d;
    for (std::size_t r = 0; r < n; ++r) scaled.inputs.at(r, 1) *= 37.0;

    const RegressionTree a = fit_tree(d, 0);
    const RegressionTree b = fit_tree(scaled, 0);
    REQUIRE(a.nodes.size() == b.nodes.size());
    for (std::size_t i = 0; i < a.nodes.size(); ++i) {
        CHECK(a.nodes[i].leaf == b.nodes[i].leaf);
        CHECK(a.nodes[i].feature == b.nodes[i].feature);
        CHECK(a.nodes[i].value == doctest::Approx(b.nodes[i].value).epsilon(1e-12));
    }
}

TEST_CASE("bagged forest importances stay normalized and keep the planted order") {
    Rng rng(76);
    const std::size_t n = 600;
    const Matrix x = random_inputs(rng, n);
    std::vector<std::array<double, 4>> y(n);
    for (std::size_t r = 0; r < n; ++r) {
        const double v = 2.0 * x.at(r, 9) + x.at(r, 2) + 0.05 * rng.normal();
        y[r] = {v, v, v, v};
    }
    const Dataset d = dataset_from(x, y);
    const ImportanceReport report = compute_importance(d, {}, 5, 17);
    for (const auto& imp : report.importance) {
        double sum = 0.0;
        for (double v : imp) {
            CHECK(v >= 0.0);
            sum += v;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(imp[9] > imp[2]);
        for (std::size_t f = 0; f < 15; ++f)
            if (f != 9 && f != 2) CHECK(imp[9] > imp[f]);
    }
    // deterministic per seed
    const ImportanceReport again = compute_importance(d, {}, 5, 17);
    CHECK(again.importance == report.importance);
}

TEST_CASE("top_k_features ranks by mean importance with index tie-break") {
    ImportanceReport report;
    for (int i = 0; i < 15; ++i) report.feature_names.push_back("f" + std::to_string(i));
    report.output_names = {"phi", "theta", "psi", "jaw"};
    std::vector<double> imp(15, 0.0);
    imp[3] = 0.5;
    imp[7] = 0.3;
    imp[12] = 0.2;
    report.importance = {imp, imp, imp, imp};

    const auto top = top_k_features(report, 3);
    CHECK(top == std::vector<std::size_t>{3, 7, 12});

    const auto all = top_k_features(report, 15);
    CHECK(all.size() == 15);
    CHECK(all[0] == 3);
    // zero-importance features tie; lower index first
    CHECK(all[3] == 0);
    CHECK(all[4] == 1);

    CHECK_THROWS_AS(top_k_features(report, 0), data_error);
    CHECK_THROWS_AS(top_k_features(report, 16), data_error);
}

TEST_CASE("pca: single-axis variance concentrates on one component") {
    Rng rng(68);
    Matrix x(100, 15);
    for (std::size_t r = 0; r < 100; ++r) x.at(r, 2) = rng.uniform(-3.0, 3.0);
    const PcaModel m = pca_fit(x, 3);
    CHECK(m.explained_variance_ratio[0] == doctest::Approx(1.0));
    CHECK(std::abs(m.components.at(0, 2)) == doctest::Approx(1.0));
    CHECK(m.components.at(0, 2) > 0.0);  // sign convention
}

TEST_CASE("pca: isotropic data spreads the ratios evenly") {
    Rng rng(69);
    Matrix x(20000, 15);
    for (double& v : x.data) v = rng.normal();
    const PcaModel m = pca_fit(x, 15);
    for (double r : m.explained_variance_ratio)
        CHECK(r == doctest::Approx(1.0 / 15.0).epsilon(0.12));
    // weakly decreasing
    for (std::size_t i = 1; i < 15; ++i)
        CHECK(m.explained_variance_ratio[i] <= m.explained_variance_ratio[i - 1] + 1e-15);
}

TEST_CASE("pca: components are orthonormal") {
    Rng rng(70);
    Matrix x(500, 15);
    for (double& v : x.data) v = rng.normal();
    const PcaModel m = pca_fit(x, 7);
    for (std::size_t a = 0; a < 7; ++a)
        for (std::size_t b = 0; b < 7; ++b) {
            double dot = 0.0;
            for (std::size_t c = 0; c < 15; ++c)
                dot += m.components.at(a, c) * m.components.at(b, c);
            CHECK(dot == doctest::Approx(a == b ? 1.0 : 0.0).epsilon(1e-9));
        }
}

TEST_CASE("pca: full-rank reconstruction is the identity") {
    Rng rng(71);
    Matrix x(120, 15);
    for (double& v : x.data) v = rng.uniform(-2.0, 2.0);
    const PcaModel m = pca_fit(x, 15);
    const Matrix scores = pca_transform(m, x);
    const Matrix back = pca_inverse_transform(m, scores);
    for (std::size_t i = 0; i < x.data.size(); ++i)
        CHECK(std::abs(back.data[i] - x.data[i]) < 1e-9);
}

TEST_CASE("pca: transforming the mean row gives zero scores") {
    Rng rng(72);
    Matrix x(50, 15);
    for (double& v : x.data) v = rng.uniform(0.0, 5.0);
    const PcaModel m = pca_fit(x, 4);
    Matrix mean_row(1, 15);
    for (std::size_t c = 0; c < 15; ++c) mean_row.at(0, c) = m.mean[c];
    const Matrix s = pca_transform(m, mean_row);
    for (std::size_t c = 0; c < 4; ++c) CHECK(std::abs(s.at(0, c)) < 1e-12);
}

TEST_CASE("pca: score variances equal the eigenvalues") {
    Rng rng(73);
    Matrix x(3000, 15);
    for (std::size_t r = 0; r < 3000; ++r) {
        const double a = rng.normal() * 3.0, b = rng.normal();
        for (std::size_t c = 0; c < 15; ++c)
            x.at(r, c) = a * std::sin(0.3 * static_cast<double>(c)) +
                         b * std::cos(0.9 * static_cast<double>(c)) + 0.05 * rng.normal();
    }
    const PcaModel m = pca_fit(x, 5);
    const Matrix s = pca_transform(m, x);

    double total = 0.0;
    {
        std::vector<double> mean(15, 0.0);
        for (std::size_t r = 0; r < x.rows; ++r)
            for (std::size_t c = 0; c < 15; ++c) mean[c] += x.at(r, c);
        for (auto& v : mean) v /= static_cast<double>(x.rows);
        for (std::size_t r = 0; r < x.rows; ++r)
            for (std::size_t c = 0; c < 15; ++c) {
                const double d = x.at(r, c) - mean[c];
                total += d * d;
            }
        total /= static_cast<double>(x.rows - 1);
    }
    for (std::size_t c = 0; c < 5; ++c) {
        double mean = 0.0;
        for (std::size_t r = 0; r < s.rows; ++r) mean += s.at(r, c);
        mean /= static_cast<double>(s.rows);
        double var = 0.0;
        for (std::size_t r = 0; r < s.rows; ++r)
            var += (s.at(r, c) - mean) * (s.at(r, c) - mean);
        var /= static_cast<double>(s.rows - 1);
        const double eig = m.explained_variance_ratio[c] * total;
        CHECK(var == doctest::Approx(eig).epsilon(1e-6));
    }
}

TEST_CASE("pca: components past the intrinsic dimension vanish") {
    Rng rng(74);
    const std::size_t d_true = 4;
    Matrix basis(d_true, 15);
    for (double& v : basis.data) v = rng.normal();
    Matrix x(400, 15);
    for (std::size_t r = 0; r < 400; ++r)
        for (std::size_t k = 0; k < d_true; ++k) {
            const double a = rng.normal();
            for (std::size_t c = 0; c < 15; ++c) x.at(r, c) += a * basis.at(k, c);
        }
    const PcaModel m = pca_fit(x, 15);
    for (std::size_t c = d_true; c < 15; ++c)
        CHECK(m.explained_variance_ratio[c] < 1e-9);
}

TEST_CASE("pca rejects bad shapes") {
    Matrix x(10, 15);
    CHECK_THROWS_AS(pca_fit(x, 16), data_error);
    CHECK_THROWS_AS(pca_fit(x, 0), data_error);
    Matrix one(1, 15);
    CHECK_THROWS_AS(pca_fit(one, 1), data_error);
    Rng rng(75);
    for (double& v : x.data) v = rng.normal();
    const PcaModel m = pca_fit(x, 2);
    Matrix wrong(5, 14);
    CHECK_THROWS_AS(pca_transform(m, wrong), data_error);
}
