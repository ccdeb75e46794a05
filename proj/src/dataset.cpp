#include "motionmap/dataset.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "motionmap/common.hpp"

namespace motionmap {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

const char* target_name(std::size_t c) {
    static const char* names[4] = {"phi", "theta", "psi", "jaw"};
    return names[c];
}

std::string input_name(std::size_t c, std::size_t total) {
    if (total == 15) return JointAngleVector::names()[c];
    return "x" + std::to_string(c);
}

std::string norm_sidecar_path(const std::string& path) { return path + ".norm.json"; }

void minmax_columns(const Matrix& m, std::vector<double>& mins, std::vector<double>& maxs) {
    mins.assign(m.cols, 0.0);
    maxs.assign(m.cols, 0.0);
    for (std::size_t c = 0; c < m.cols; ++c) {
        double lo = m.at(0, c), hi = m.at(0, c);
        for (std::size_t r = 1; r < m.rows; ++r) {
            lo = std::min(lo, m.at(r, c));
            hi = std::max(hi, m.at(r, c));
        }
        mins[c] = lo;
        maxs[c] = hi;
    }
}

Matrix apply_affine(const Matrix& m, const std::vector<double>& lo,
                    const std::vector<double>& hi, bool forward) {
    if (m.cols != lo.size())
        throw data_error("normalization parameter shape does not match dataset");
    Matrix out(m.rows, m.cols);
    for (std::size_t c = 0; c < m.cols; ++c) {
        const double span = hi[c] - lo[c];
        for (std::size_t r = 0; r < m.rows; ++r) {
            out.at(r, c) = forward ? (m.at(r, c) - lo[c]) / span
                                   : m.at(r, c) * span + lo[c];
        }
    }
    return out;
}

}  // namespace

Dataset build_dataset(const std::vector<AlignedRecord>& records) {
    if (records.empty()) throw data_error("cannot build dataset from zero records");
    Dataset d;
    d.inputs = Matrix(records.size(), 15);
    d.targets = Matrix(records.size(), 4);
    d.timestamps.reserve(records.size());
    for (std::size_t r = 0; r < records.size(); ++r) {
        const AlignedRecord& rec = records[r];
        if (!rec.complete)
            throw data_error("dataset input contains incomplete record at index " +
                             std::to_string(r));
        for (std::size_t c = 0; c < 15; ++c) d.inputs.at(r, c) = rec.joint_angles[c];
        d.targets.at(r, 0) = rec.tool_state.phi;
        d.targets.at(r, 1) = rec.tool_state.theta;
        d.targets.at(r, 2) = rec.tool_state.psi;
        d.targets.at(r, 3) = rec.tool_state.jaw;
        d.timestamps.push_back(rec.timestamp);
    }
    return d;
}

std::pair<Dataset, NormParams> normalize(const Dataset& d) {
    if (d.normalized) throw data_error("dataset is already normalized");
    if (d.size() == 0) throw data_error("cannot normalize empty dataset");
    NormParams p;
    minmax_columns(d.inputs, p.x_min, p.x_max);
    minmax_columns(d.targets, p.y_min, p.y_max);
    for (std::size_t c = 0; c < p.x_min.size(); ++c)
        if (!(p.x_max[c] > p.x_min[c]))
            throw data_error("constant input column '" + input_name(c, p.x_min.size()) +
                             "': min-max scaling is degenerate");
    for (std::size_t c = 0; c < 4; ++c)
        if (!(p.y_max[c] > p.y_min[c]))
            throw data_error("constant target column '" + std::string(target_name(c)) +
                             "': min-max scaling is degenerate");
    Dataset out = normalize_with(d, p);
    return {std::move(out), std::move(p)};
}

Dataset normalize_with(const Dataset& d, const NormParams& p) {
    if (d.normalized) throw data_error("dataset is already normalized");
    Dataset out;
    out.inputs = apply_affine(d.inputs, p.x_min, p.x_max, true);
    out.targets = apply_affine(d.targets, p.y_min, p.y_max, true);
    out.timestamps = d.timestamps;
    out.normalized = true;
    out.norm = p;
    return out;
}

Dataset denormalize(const Dataset& d, const NormParams& p) {
    if (!d.normalized) throw data_error("dataset is not normalized");
    Dataset out;
    out.inputs = apply_affine(d.inputs, p.x_min, p.x_max, false);
    out.targets = apply_affine(d.targets, p.y_min, p.y_max, false);
    out.timestamps = d.timestamps;
    out.normalized = false;
    return out;
}

std::pair<Dataset, Dataset> split(const Dataset& d, double train_fraction) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw data_error("train fraction must be in (0, 1)");
    const std::size_t n = d.size();
    const std::size_t n_train = static_cast<std::size_t>(
        std::ceil(static_cast<double>(n) * train_fraction - 1e-9));
    if (n_train == 0 || n_train >= n)
        throw data_error("split would produce an empty partition");

    auto take = [&](std::size_t begin, std::size_t end) {
        Dataset out;
        out.inputs = Matrix(end - begin, d.inputs.cols);
        out.targets = Matrix(end - begin, d.targets.cols);
        for (std::size_t r = begin; r < end; ++r) {
            for (std::size_t c = 0; c < d.inputs.cols; ++c)
                out.inputs.at(r - begin, c) = d.inputs.at(r, c);
            for (std::size_t c = 0; c < d.targets.cols; ++c)
                out.targets.at(r - begin, c) = d.targets.at(r, c);
        }
        if (!d.timestamps.empty())
            out.timestamps.assign(d.timestamps.begin() + static_cast<long>(begin),
                                  d.timestamps.begin() + static_cast<long>(end));
        out.normalized = d.normalized;
        out.norm = d.norm;
        return out;
    };
    return {take(0, n_train), take(n_train, n)};
}

SequenceSet window(const Dataset& d, std::size_t length) {
    const std::size_t n = d.size();
    if (length < 1) throw data_error("window length must be at least 1");
    if (length > n)
        throw data_error("window length " + std::to_string(length) +
                         " exceeds dataset size " + std::to_string(n));
    const std::size_t f = d.inputs.cols;
    const std::size_t m = n - length + 1;
    SequenceSet s;
    s.length = length;
    s.feature_dim = f;
    s.windows = Matrix(m, length * f);
    s.targets = Matrix(m, d.targets.cols);
    for (std::size_t w = 0; w < m; ++w) {
        for (std::size_t t = 0; t < length; ++t)
            for (std::size_t c = 0; c < f; ++c)
                s.windows.at(w, t * f + c) = d.inputs.at(w + t, c);
        for (std::size_t c = 0; c < d.targets.cols; ++c)
            s.targets.at(w, c) = d.targets.at(w + length - 1, c);
    }
    return s;
}

Dataset slice_inputs(const Dataset& d, const std::vector<std::size_t>& indices) {
    if (indices.empty()) throw data_error("cannot slice dataset to zero input columns");
    for (std::size_t idx : indices)
        if (idx >= d.inputs.cols)
            throw data_error("input column index " + std::to_string(idx) + " out of range");
    Dataset out;
    out.inputs = Matrix(d.size(), indices.size());
    for (std::size_t r = 0; r < d.size(); ++r)
        for (std::size_t c = 0; c < indices.size(); ++c)
            out.inputs.at(r, c) = d.inputs.at(r, indices[c]);
    out.targets = d.targets;
    out.timestamps = d.timestamps;
    out.normalized = d.normalized;
    if (d.norm) {
        NormParams p;
        for (std::size_t idx : indices) {
            p.x_min.push_back(d.norm->x_min[idx]);
            p.x_max.push_back(d.norm->x_max[idx]);
        }
        p.y_min = d.norm->y_min;
        p.y_max = d.norm->y_max;
        out.norm = std::move(p);
    }
    return out;
}

void save_dataset(const Dataset& d, const std::string& path) {
    if (d.inputs.cols != 15)
        throw data_error("aligned-record format requires 15 input columns, got " +
                         std::to_string(d.inputs.cols));
    std::vector<AlignedRecord> records(d.size());
    for (std::size_t r = 0; r < d.size(); ++r) {
        AlignedRecord& rec = records[r];
        rec.timestamp = d.timestamps.empty() ? static_cast<double>(r) : d.timestamps[r];
        for (std::size_t c = 0; c < 15; ++c) rec.joint_angles[c] = d.inputs.at(r, c);
        rec.tool_state.phi = d.targets.at(r, 0);
        rec.tool_state.theta = d.targets.at(r, 1);
        rec.tool_state.psi = d.targets.at(r, 2);
        rec.tool_state.jaw = d.targets.at(r, 3);
        rec.complete = true;
    }
    write_aligned(records, path);
    if (d.normalized && d.norm) save_norm_params(*d.norm, norm_sidecar_path(path));
}

Dataset load_dataset(const std::string& path) {
    Dataset d = build_dataset(read_aligned(path));
    const std::string sidecar = norm_sidecar_path(path);
    if (std::filesystem::exists(sidecar)) {
        d.norm = load_norm_params(sidecar);
        d.normalized = true;
    }
    return d;
}

NormParams load_norm_params(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open norm-params file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw data_error("malformed norm-params file " + path + ": " + e.what());
    }
    NormParams p;
    for (const char* key : {"x_min", "x_max", "y_min", "y_max"})
        if (!j.contains(key))
            throw data_error("norm-params file missing field '" + std::string(key) + "'");
    p.x_min = j.at("x_min").get<std::vector<double>>();
    p.x_max = j.at("x_max").get<std::vector<double>>();
    p.y_min = j.at("y_min").get<std::vector<double>>();
    p.y_max = j.at("y_max").get<std::vector<double>>();
    if (p.x_min.size() != p.x_max.size() || p.y_min.size() != p.y_max.size())
        throw data_error("norm-params min/max lengths disagree");
    return p;
}

void save_norm_params(const NormParams& p, const std::string& path) {
    ordered_json o;
    o["x_min"] = p.x_min;
    o["x_max"] = p.x_max;
    o["y_min"] = p.y_min;
    o["y_max"] = p.y_max;
    std::ofstream out(path);
    if (!out) throw io_error("cannot write norm-params file: " + path);
    out << o.dump() << "\n";
}

}  // namespace motionmap
