#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "motionmap/matrix.hpp"
#include "motionmap/sensor_io.hpp"

namespace motionmap {

// Per-column min/max of inputs and targets; the affine map to [0,1] and
// back. Column counts follow the dataset (inputs may be sliced or
// projected by the experiment code).
struct NormParams {
    std::vector<double> x_min, x_max;
    std::vector<double> y_min, y_max;

    bool operator==(const NormParams&) const = default;
};

// Supervised table: inputs N x F (F = 15 for the raw pipeline), targets
// N x 4 in the order phi, theta, psi, jaw. Rows are in time order.
struct Dataset {
    Matrix inputs;
    Matrix targets;
    std::vector<double> timestamps;
    bool normalized = false;
    std::optional<NormParams> norm;

    std::size_t size() const { return inputs.rows; }
};

// Sliding windows for sequence models: window w covers rows
// [w, w + length), stride 1, target = final row's Y.
struct SequenceSet {
    Matrix windows;  // M x (length * F), row w is the flattened window
    Matrix targets;  // M x 4
    std::size_t length = 0;
    std::size_t feature_dim = 0;

    std::size_t size() const { return windows.rows; }
    const double* window(std::size_t w) const { return windows.row(w); }
};

// Input column order is the fixed 15-joint order; targets are
// (phi, theta, psi, jaw).
Dataset build_dataset(const std::vector<AlignedRecord>& records);

// Per-column min-max scaling to [0,1]. Throws data_error naming the
// degenerate column when max == min.
std::pair<Dataset, NormParams> normalize(const Dataset& d);

// Applies existing parameters (e.g. the ones a model was trained with).
Dataset normalize_with(const Dataset& d, const NormParams& p);

Dataset denormalize(const Dataset& d, const NormParams& p);

// Contiguous-in-time split: first ceil(N * fraction) rows train.
std::pair<Dataset, Dataset> split(const Dataset& d, double train_fraction);

SequenceSet window(const Dataset& d, std::size_t length);

// Keeps only the named input columns (normalization params sliced too).
Dataset slice_inputs(const Dataset& d, const std::vector<std::size_t>& indices);

// Aligned-record line format; a <path>.norm.json sidecar carries the
// normalization parameters of normalized datasets.
void save_dataset(const Dataset& d, const std::string& path);
Dataset load_dataset(const std::string& path);

NormParams load_norm_params(const std::string& path);
void save_norm_params(const NormParams& p, const std::string& path);

}  // namespace motionmap
