#include "motionmap/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "motionmap/common.hpp"

namespace motionmap {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

struct TreeBuilder {
    const Matrix& x;
    const std::vector<double>& y;
    TreeParams params;
    std::vector<TreeNode> nodes;

    // sorted (value, target) pairs per candidate feature of one node;
    // sorting by value then target fixes the summation order regardless
    // of row order
    std::vector<std::pair<double, double>> scratch;

    int build(std::vector<std::size_t>& idx, int depth) {
        const std::size_t n = idx.size();
        TreeNode node;
        node.samples = n;

        // leaf value: mean over targets summed in sorted order
        {
            std::vector<double> ys;
            ys.reserve(n);
            for (std::size_t i : idx) ys.push_back(y[i]);
            std::sort(ys.begin(), ys.end());
            double sum = 0.0;
            for (double v : ys) sum += v;
            node.value = sum / static_cast<double>(n);
        }

        const int me = static_cast<int>(nodes.size());
        nodes.push_back(node);

        if (depth >= params.max_depth ||
            n < 2 * static_cast<std::size_t>(params.min_samples_leaf))
            return me;

        double y_lo = y[idx[0]], y_hi = y[idx[0]];
        for (std::size_t i : idx) {
            y_lo = std::min(y_lo, y[i]);
            y_hi = std::max(y_hi, y[i]);
        }
        if (y_lo == y_hi) return me;  // pure node

        // parent SSE from values centered on the node mean
        double parent_sse = 0.0;
        {
            const double mean = nodes[static_cast<std::size_t>(me)].value;
            std::vector<double> devs;
            devs.reserve(n);
            for (std::size_t i : idx) devs.push_back(y[i] - mean);
            std::sort(devs.begin(), devs.end());
            for (double d : devs) parent_sse += d * d;
        }

        int best_feature = -1;
        double best_threshold = 0.0;
        double best_gain = 0.0;

        for (std::size_t f = 0; f < x.cols; ++f) {
            scratch.clear();
            for (std::size_t i : idx) scratch.emplace_back(x.at(i, f), y[i]);
            std::sort(scratch.begin(), scratch.end());

            // prefix sums in sorted order
            double sum_left = 0.0, sum_sq_left = 0.0;
            double sum_total = 0.0, sum_sq_total = 0.0;
            for (const auto& [xv, yv] : scratch) {
                sum_total += yv;
                sum_sq_total += yv * yv;
            }

            for (std::size_t i = 0; i + 1 < n; ++i) {
                sum_left += scratch[i].second;
                sum_sq_left += scratch[i].second * scratch[i].second;
                if (scratch[i].first == scratch[i + 1].first) continue;
                const std::size_t n_left = i + 1;
                const std::size_t n_right = n - n_left;
                if (n_left < static_cast<std::size_t>(params.min_samples_leaf) ||
                    n_right < static_cast<std::size_t>(params.min_samples_leaf))
                    continue;
                const double sum_right = sum_total - sum_left;
                const double sum_sq_right = sum_sq_total - sum_sq_left;
                const double sse_left =
                    sum_sq_left - sum_left * sum_left / static_cast<double>(n_left);
                const double sse_right =
                    sum_sq_right - sum_right * sum_right / static_cast<double>(n_right);
                const double gain = parent_sse - sse_left - sse_right;
                if (gain > best_gain) {
                    best_gain = gain;
                    best_feature = static_cast<int>(f);
                    best_threshold =
                        scratch[i].first + 0.5 * (scratch[i + 1].first - scratch[i].first);
                }
            }
        }

        if (best_feature < 0 || !(best_gain > 0.0)) return me;

        std::vector<std::size_t> left_idx, right_idx;
        left_idx.reserve(n);
        right_idx.reserve(n);
        for (std::size_t i : idx)
            (x.at(i, static_cast<std::size_t>(best_feature)) <= best_threshold ? left_idx
                                                                               : right_idx)
                .push_back(i);
        idx.clear();
        idx.shrink_to_fit();

        nodes[static_cast<std::size_t>(me)].leaf = false;
        nodes[static_cast<std::size_t>(me)].feature = best_feature;
        nodes[static_cast<std::size_t>(me)].threshold = best_threshold;
        nodes[static_cast<std::size_t>(me)].impurity_decrease = best_gain;

        const int left = build(left_idx, depth + 1);
        nodes[static_cast<std::size_t>(me)].left = left;
        const int right = build(right_idx, depth + 1);
        nodes[static_cast<std::size_t>(me)].right = right;
        return me;
    }
};

}  // namespace

double RegressionTree::predict(const double* row) const {
    std::size_t at = 0;
    while (!nodes[at].leaf) {
        const TreeNode& node = nodes[at];
        at = static_cast<std::size_t>(row[node.feature] <= node.threshold ? node.left
                                                                          : node.right);
    }
    return nodes[at].value;
}

std::size_t RegressionTree::leaf_count() const {
    std::size_t n = 0;
    for (const auto& node : nodes) n += node.leaf ? 1 : 0;
    return n;
}

RegressionTree fit_tree(const Dataset& train, std::size_t output_index,
                        const TreeParams& params) {
    if (train.size() == 0) throw data_error("fit_tree: empty training set");
    if (output_index >= train.targets.cols)
        throw data_error("fit_tree: output index " + std::to_string(output_index) +
                         " out of range");
    if (params.max_depth < 0 || params.min_samples_leaf < 1)
        throw data_error("fit_tree: invalid tree parameters");

    std::vector<double> y(train.size());
    for (std::size_t r = 0; r < train.size(); ++r) y[r] = train.targets.at(r, output_index);

    TreeBuilder builder{train.inputs, y, params, {}, {}};
    std::vector<std::size_t> idx(train.size());
    std::iota(idx.begin(), idx.end(), 0);
    builder.build(idx, 0);

    RegressionTree tree;
    tree.nodes = std::move(builder.nodes);
    tree.n_features = train.inputs.cols;
    tree.n_samples = train.size();
    return tree;
}

std::vector<double> mdi_importance(const RegressionTree& tree) {
    std::vector<double> imp(tree.n_features, 0.0);
    double total = 0.0;
    for (const auto& node : tree.nodes) {
        if (node.leaf) continue;
        imp[static_cast<std::size_t>(node.feature)] += node.impurity_decrease;
        total += node.impurity_decrease;
    }
    if (total > 0.0)
        for (double& v : imp) v /= total;
    return imp;
}

ImportanceReport compute_importance(const Dataset& train, const TreeParams& params,
                                    int n_trees, std::uint64_t seed) {
    if (n_trees < 1) throw data_error("compute_importance: n_trees must be >= 1");
    ImportanceReport report;
    const std::size_t f = train.inputs.cols;
    if (f == 15)
        report.feature_names.assign(JointAngleVector::names().begin(),
                                    JointAngleVector::names().end());
    else
        for (std::size_t c = 0; c < f; ++c)
            report.feature_names.push_back("x" + std::to_string(c));
    report.output_names = {"phi", "theta", "psi", "jaw"};

    for (std::size_t out = 0; out < train.targets.cols; ++out) {
        std::vector<double> acc(f, 0.0);
        if (n_trees == 1) {
            acc = mdi_importance(fit_tree(train, out, params));
        } else {
            // bagging: bootstrap rows, average the normalized importances
            for (int t = 0; t < n_trees; ++t) {
                Rng rng(mix_seed(seed, 7000 + out * 1000 + static_cast<std::uint64_t>(t)));
                Dataset boot;
                boot.inputs = Matrix(train.size(), f);
                boot.targets = Matrix(train.size(), train.targets.cols);
                for (std::size_t r = 0; r < train.size(); ++r) {
                    const std::size_t src = static_cast<std::size_t>(rng.below(train.size()));
                    for (std::size_t c = 0; c < f; ++c)
                        boot.inputs.at(r, c) = train.inputs.at(src, c);
                    for (std::size_t c = 0; c < train.targets.cols; ++c)
                        boot.targets.at(r, c) = train.targets.at(src, c);
                }
                boot.normalized = train.normalized;
                boot.norm = train.norm;
                const auto imp = mdi_importance(fit_tree(boot, out, params));
                for (std::size_t c = 0; c < f; ++c) acc[c] += imp[c] / n_trees;
            }
        }
        report.importance.push_back(std::move(acc));
    }
    return report;
}

std::vector<std::size_t> top_k_features(const ImportanceReport& report, std::size_t k) {
    const std::size_t f = report.feature_names.size();
    if (k == 0) throw data_error("top_k_features: k must be >= 1");
    if (k > f) throw data_error("top_k_features: k exceeds feature count");

    std::vector<double> mean(f, 0.0);
    for (const auto& per_output : report.importance)
        for (std::size_t c = 0; c < f; ++c) mean[c] += per_output[c];
    for (double& v : mean) v /= static_cast<double>(report.importance.size());

    std::vector<std::size_t> order(f);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (mean[a] != mean[b]) return mean[a] > mean[b];
        return a < b;
    });
    order.resize(k);
    return order;
}

namespace {

// cyclic Jacobi on a symmetric matrix; returns eigenvalues in `eig` and
// eigenvectors as columns of `v`
void jacobi_eigen(Matrix a, std::vector<double>& eig, Matrix& v) {
    const std::size_t n = a.rows;
    v = Matrix(n, n);
    for (std::size_t i = 0; i < n; ++i) v.at(i, i) = 1.0;

    double frob = 0.0;
    for (double q : a.data) frob += q * q;
    const double stop = 1e-28 * std::max(frob, 1e-300);

    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += a.at(p, q) * a.at(p, q);
        if (off <= stop) break;

        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a.at(p, q);
                if (apq == 0.0) continue;
                const double theta = (a.at(q, q) - a.at(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t i = 0; i < n; ++i) {
                    const double aip = a.at(i, p);
                    const double aiq = a.at(i, q);
                    a.at(i, p) = c * aip - s * aiq;
                    a.at(i, q) = s * aip + c * aiq;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double api = a.at(p, i);
                    const double aqi = a.at(q, i);
                    a.at(p, i) = c * api - s * aqi;
                    a.at(q, i) = s * api + c * aqi;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double vip = v.at(i, p);
                    const double viq = v.at(i, q);
                    v.at(i, p) = c * vip - s * viq;
                    v.at(i, q) = s * vip + c * viq;
                }
            }
        }
    }

    eig.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) eig[i] = a.at(i, i);
}

}  // namespace

PcaModel pca_fit(const Matrix& x, std::size_t k) {
    const std::size_t n = x.rows;
    const std::size_t f = x.cols;
    if (n <= 1) throw data_error("pca_fit: need at least 2 samples");
    if (k < 1 || k > f)
        throw data_error("pca_fit: component count " + std::to_string(k) +
                         " out of range for " + std::to_string(f) + " features");
    if (n <= k) throw data_error("pca_fit: need more samples than components");

    PcaModel model;
    model.mean.assign(f, 0.0);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < f; ++c) model.mean[c] += x.at(r, c);
    for (double& m : model.mean) m /= static_cast<double>(n);

    Matrix cov(f, f);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t i = 0; i < f; ++i) {
            const double di = x.at(r, i) - model.mean[i];
            for (std::size_t j = i; j < f; ++j)
                cov.at(i, j) += di * (x.at(r, j) - model.mean[j]);
        }
    }
    for (std::size_t i = 0; i < f; ++i)
        for (std::size_t j = i; j < f; ++j) {
            cov.at(i, j) /= static_cast<double>(n - 1);
            cov.at(j, i) = cov.at(i, j);
        }

    std::vector<double> eig;
    Matrix vecs;
    jacobi_eigen(cov, eig, vecs);

    std::vector<std::size_t> order(f);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return eig[a] > eig[b]; });

    double total = 0.0;
    for (double e : eig) total += std::max(e, 0.0);
    if (!(total > 0.0)) throw data_error("pca_fit: zero total variance");

    model.components = Matrix(k, f);
    model.explained_variance_ratio.assign(k, 0.0);
    for (std::size_t comp = 0; comp < k; ++comp) {
        const std::size_t src = order[comp];
        // sign convention: largest-magnitude entry positive
        std::size_t arg = 0;
        for (std::size_t i = 1; i < f; ++i)
            if (std::abs(vecs.at(i, src)) > std::abs(vecs.at(arg, src))) arg = i;
        const double sign = vecs.at(arg, src) < 0.0 ? -1.0 : 1.0;
        for (std::size_t i = 0; i < f; ++i)
            model.components.at(comp, i) = sign * vecs.at(i, src);
        model.explained_variance_ratio[comp] = std::max(eig[src], 0.0) / total;
    }
    return model;
}

Matrix pca_transform(const PcaModel& model, const Matrix& x) {
    const std::size_t f = model.mean.size();
    if (x.cols != f)
        throw data_error("pca_transform: feature count mismatch");
    const std::size_t k = model.components.rows;
    Matrix out(x.rows, k);
    for (std::size_t r = 0; r < x.rows; ++r)
        for (std::size_t comp = 0; comp < k; ++comp) {
            double s = 0.0;
            for (std::size_t c = 0; c < f; ++c)
                s += (x.at(r, c) - model.mean[c]) * model.components.at(comp, c);
            out.at(r, comp) = s;
        }
    return out;
}

Matrix pca_inverse_transform(const PcaModel& model, const Matrix& scores) {
    const std::size_t k = model.components.rows;
    if (scores.cols != k)
        throw data_error("pca_inverse_transform: component count mismatch");
    const std::size_t f = model.mean.size();
    Matrix out(scores.rows, f);
    for (std::size_t r = 0; r < scores.rows; ++r)
        for (std::size_t c = 0; c < f; ++c) {
            double s = model.mean[c];
            for (std::size_t comp = 0; comp < k; ++comp)
                s += scores.at(r, comp) * model.components.at(comp, c);
            out.at(r, c) = s;
        }
    return out;
}

void save_importance_report(const ImportanceReport& report, const std::string& path) {
    ordered_json o;
    o["features"] = report.feature_names;
    o["outputs"] = report.output_names;
    o["importance"] = report.importance;
    std::ofstream out(path);
    if (!out) throw io_error("cannot write importance report: " + path);
    out << o.dump() << "\n";
}

void save_importance_csv(const ImportanceReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot write importance CSV: " + path);
    out << "feature,output,importance\n";
    for (std::size_t o = 0; o < report.output_names.size(); ++o)
        for (std::size_t f = 0; f < report.feature_names.size(); ++f)
            out << report.feature_names[f] << "," << report.output_names[o] << ","
                << report.importance[o][f] << "\n";
}

void save_pca_model(const PcaModel& model, const std::string& path) {
    ordered_json o;
    o["mean"] = model.mean;
    ordered_json comps = ordered_json::array();
    for (std::size_t r = 0; r < model.components.rows; ++r) {
        ordered_json row = ordered_json::array();
        for (std::size_t c = 0; c < model.components.cols; ++c)
            row.push_back(model.components.at(r, c));
        comps.push_back(std::move(row));
    }
    o["components"] = std::move(comps);
    o["explained_variance_ratio"] = model.explained_variance_ratio;
    std::ofstream out(path);
    if (!out) throw io_error("cannot write PCA model: " + path);
    out << o.dump() << "\n";
}

PcaModel load_pca_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open PCA model: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw data_error("malformed PCA model " + path + ": " + e.what());
    }
    PcaModel model;
    model.mean = j.at("mean").get<std::vector<double>>();
    const auto& comps = j.at("components");
    model.components = Matrix(comps.size(), model.mean.size());
    for (std::size_t r = 0; r < comps.size(); ++r) {
        const auto row = comps[r].get<std::vector<double>>();
        if (row.size() != model.mean.size())
            throw data_error(path + ": component width mismatch");
        for (std::size_t c = 0; c < row.size(); ++c) model.components.at(r, c) = row[c];
    }
    model.explained_variance_ratio =
        j.at("explained_variance_ratio").get<std::vector<double>>();
    return model;
}

}  // namespace motionmap
