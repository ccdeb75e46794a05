#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "motionmap/dataset.hpp"
#include "motionmap/matrix.hpp"

namespace motionmap {

struct TreeParams {
    int max_depth = 12;
    int min_samples_leaf = 5;
};

struct TreeNode {
    bool leaf = true;
    int feature = -1;
    double threshold = 0.0;
    double impurity_decrease = 0.0;  // SSE reduction of this split
    std::size_t samples = 0;
    double value = 0.0;  // leaf mean
    int left = -1;
    int right = -1;
};

// CART regression tree, variance impurity, greedy best split over all
// features with midpoint thresholds. Ties break toward the lowest
// feature index, then the lowest threshold, which together with
// value-sorted summation makes training invariant to row permutation.
struct RegressionTree {
    std::vector<TreeNode> nodes;  // preorder, root at 0
    std::size_t n_features = 0;
    std::size_t n_samples = 0;

    double predict(const double* row) const;
    std::size_t leaf_count() const;
};

RegressionTree fit_tree(const Dataset& train, std::size_t output_index,
                        const TreeParams& params = {});

// Per-feature sum of impurity decrease over the tree's splits,
// normalized to sum 1; all zeros for a single-leaf tree.
std::vector<double> mdi_importance(const RegressionTree& tree);

struct ImportanceReport {
    std::vector<std::string> feature_names;
    std::vector<std::string> output_names;            // phi, theta, psi, jaw
    std::vector<std::vector<double>> importance;      // [output][feature]
};

// One tree per output by default; n_trees > 1 switches to bagged trees
// with averaged importances (stability option, not the default).
ImportanceReport compute_importance(const Dataset& train, const TreeParams& params = {},
                                    int n_trees = 1, std::uint64_t seed = 0);

// Features ranked by mean importance across the four outputs, ties
// toward the lower index.
std::vector<std::size_t> top_k_features(const ImportanceReport& report, std::size_t k);

struct PcaModel {
    std::vector<double> mean;              // per feature
    Matrix components;                     // k x F, orthonormal rows
    std::vector<double> explained_variance_ratio;  // descending
};

// Eigendecomposition of the sample covariance (divisor N-1); each
// component's largest-magnitude entry is made positive.
PcaModel pca_fit(const Matrix& x, std::size_t k);

Matrix pca_transform(const PcaModel& model, const Matrix& x);
Matrix pca_inverse_transform(const PcaModel& model, const Matrix& scores);

void save_importance_report(const ImportanceReport& report, const std::string& path);
void save_importance_csv(const ImportanceReport& report, const std::string& path);
void save_pca_model(const PcaModel& model, const std::string& path);
PcaModel load_pca_model(const std::string& path);

}  // namespace motionmap
