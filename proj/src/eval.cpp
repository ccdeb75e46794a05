#include "motionmap/eval.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "motionmap/common.hpp"

namespace motionmap {

using nlohmann::ordered_json;

SetMetrics metrics(const TrainedModel& model, const Dataset& d) {
    if (!model.trained()) throw data_error("metrics: model is untrained");
    if (!d.normalized || !d.norm) throw data_error("metrics: dataset must be normalized");
    if (!(d.norm->y_min == model.norm->y_min && d.norm->y_max == model.norm->y_max &&
          d.norm->x_min == model.norm->x_min && d.norm->x_max == model.norm->x_max))
        throw data_error("metrics: dataset normalization differs from the model's");

    const auto t0 = std::chrono::steady_clock::now();
    const Matrix pred = predict_batch(model, d);
    const auto t1 = std::chrono::steady_clock::now();

    const std::size_t n = d.size();
    const std::size_t c_out = d.targets.cols;
    SetMetrics m;
    m.predict_seconds = std::chrono::duration<double>(t1 - t0).count();
    m.predict_seconds_per_sample = m.predict_seconds / static_cast<double>(n);

    double sse_all = 0.0;
    double r2_sum = 0.0;
    for (std::size_t c = 0; c < c_out; ++c) {
        double mean = 0.0;
        for (std::size_t r = 0; r < n; ++r) mean += d.targets.at(r, c);
        mean /= static_cast<double>(n);
        double sse = 0.0, sst = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
            const double e = pred.at(r, c) - d.targets.at(r, c);
            const double dmean = d.targets.at(r, c) - mean;
            sse += e * e;
            sst += dmean * dmean;
        }
        sse_all += sse;
        r2_sum += sst > 0.0 ? 1.0 - sse / sst : (sse == 0.0 ? 1.0 : 0.0);
        const double span = d.norm->y_max[c] - d.norm->y_min[c];
        m.rmse_deg[c] = std::sqrt(sse / static_cast<double>(n)) * span;
    }
    m.mse = sse_all / static_cast<double>(n * c_out);
    m.r2 = r2_sum / static_cast<double>(c_out);
    return m;
}

MetricsReport evaluate_model(const TrainedModel& model, const Dataset& train_set,
                             const Dataset& test_set) {
    return {metrics(model, train_set), metrics(model, test_set)};
}

SweepReport sweep(const std::vector<int>& neuron_grid, const std::vector<int>& layer_grid,
                  const std::vector<Arch>& arch_grid, const Dataset& train_set,
                  const Dataset& test_set, const NetworkConfig& base_cfg, int jobs) {
    if (neuron_grid.empty() || layer_grid.empty() || arch_grid.empty())
        throw data_error("sweep: empty grid");
    if (jobs < 1) jobs = 1;

    struct Cell {
        Arch arch;
        int n, l;
    };
    std::vector<Cell> cells;
    for (Arch a : arch_grid)
        for (int n : neuron_grid)
            for (int l : layer_grid) cells.push_back({a, n, l});

    SweepReport report;
    report.cells.resize(cells.size());

    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= cells.size()) break;
            const Cell& cell = cells[i];
            SweepCell out;
            out.architecture = cell.arch;
            out.neurons = cell.n;
            out.hidden_layers = cell.l;
            try {
                NetworkConfig cfg = base_cfg;
                cfg.architecture = cell.arch;
                cfg.neurons = cell.n;
                cfg.hidden_layers = cell.l;
                const auto t0 = std::chrono::steady_clock::now();
                TrainedModel model = train(init_network(cfg), train_set, test_set);
                out.train_seconds =
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                        .count();
                out.test_mse = metrics(model, test_set).mse;
            } catch (const std::exception& e) {
                out.failed = true;
                out.error = e.what();
            }
            report.cells[i] = std::move(out);
            log_info("sweep cell " + arch_name(cell.arch) + " n=" + std::to_string(cell.n) +
                     " l=" + std::to_string(cell.l) + " done");
        }
    };

    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    return report;
}

ExperimentReport reduced_input_experiment(const Dataset& train_set, const Dataset& test_set,
                                          const std::vector<std::size_t>& top_features,
                                          const NetworkConfig& base_cfg) {
    if (top_features.empty())
        throw data_error("reduced_input_experiment: empty feature list");
    // keep the canonical column order; with all features selected the
    // slice is then a no-op and the run matches the full experiment
    std::vector<std::size_t> columns = top_features;
    std::sort(columns.begin(), columns.end());
    const Dataset tr = slice_inputs(train_set, columns);
    const Dataset te = slice_inputs(test_set, columns);

    ExperimentReport report;
    for (Arch arch : {Arch::DFNN, Arch::LSTM}) {
        NetworkConfig cfg = base_cfg;
        cfg.architecture = arch;
        cfg.input_dim = static_cast<int>(top_features.size());
        TrainedModel model = train(init_network(cfg), tr, te);
        (arch == Arch::DFNN ? report.dfnn : report.lstm) = evaluate_model(model, tr, te);
    }
    return report;
}

PcaExperimentReport pca_experiment(const Dataset& train_set, const Dataset& test_set,
                                   std::size_t k, const NetworkConfig& base_cfg) {
    if (!train_set.normalized || !test_set.normalized || !train_set.norm)
        throw data_error("pca_experiment: datasets must be normalized");

    PcaExperimentReport out;
    out.pca = pca_fit(train_set.inputs, k);

    const Matrix tr_scores = pca_transform(out.pca, train_set.inputs);
    const Matrix te_scores = pca_transform(out.pca, test_set.inputs);

    // rescale the projected columns to [0,1] with train-set parameters
    std::vector<double> lo(k), hi(k);
    for (std::size_t c = 0; c < k; ++c) {
        lo[c] = hi[c] = tr_scores.at(0, c);
        for (std::size_t r = 1; r < tr_scores.rows; ++r) {
            lo[c] = std::min(lo[c], tr_scores.at(r, c));
            hi[c] = std::max(hi[c], tr_scores.at(r, c));
        }
        if (!(hi[c] > lo[c]))
            throw data_error("pca_experiment: degenerate principal component " +
                             std::to_string(c));
    }
    auto scale = [&](const Matrix& scores) {
        Matrix x(scores.rows, scores.cols);
        for (std::size_t r = 0; r < scores.rows; ++r)
            for (std::size_t c = 0; c < scores.cols; ++c)
                x.at(r, c) = (scores.at(r, c) - lo[c]) / (hi[c] - lo[c]);
        return x;
    };

    auto derived = [&](const Dataset& base, const Matrix& scores) {
        Dataset d;
        d.inputs = scale(scores);
        d.targets = base.targets;
        d.timestamps = base.timestamps;
        d.normalized = true;
        NormParams p;
        p.x_min = lo;
        p.x_max = hi;
        p.y_min = base.norm->y_min;
        p.y_max = base.norm->y_max;
        d.norm = std::move(p);
        return d;
    };
    const Dataset tr = derived(train_set, tr_scores);
    const Dataset te = derived(test_set, te_scores);

    for (Arch arch : {Arch::DFNN, Arch::LSTM}) {
        NetworkConfig cfg = base_cfg;
        cfg.architecture = arch;
        cfg.input_dim = static_cast<int>(k);
        TrainedModel model = train(init_network(cfg), tr, te);
        (arch == Arch::DFNN ? out.metrics.dfnn : out.metrics.lstm) =
            evaluate_model(model, tr, te);
    }
    return out;
}

namespace {

ordered_json set_metrics_to_json(const SetMetrics& m) {
    ordered_json o;
    o["mse"] = m.mse;
    o["rmse_deg"] = m.rmse_deg;
    o["r2"] = m.r2;
    ordered_json timing;
    timing["predict_seconds"] = m.predict_seconds;
    timing["predict_seconds_per_sample"] = m.predict_seconds_per_sample;
    o["timing"] = std::move(timing);
    return o;
}

ordered_json metrics_report_to_json(const MetricsReport& r) {
    ordered_json o;
    o["train"] = set_metrics_to_json(r.train);
    o["test"] = set_metrics_to_json(r.test);
    return o;
}

}  // namespace

void save_metrics_report(const MetricsReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot write metrics report: " + path);
    out << metrics_report_to_json(report).dump() << "\n";
}

void save_metrics_csv(const MetricsReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot write metrics CSV: " + path);
    out << "set,mse,r2,rmse_phi_deg,rmse_theta_deg,rmse_psi_deg,rmse_jaw_deg\n";
    auto line = [&](const char* name, const SetMetrics& m) {
        out << name << "," << m.mse << "," << m.r2;
        for (double r : m.rmse_deg) out << "," << r;
        out << "\n";
    };
    line("train", report.train);
    line("test", report.test);
}

void save_experiment_report(const ExperimentReport& report, const std::string& path,
                            const std::vector<std::string>& selected_features) {
    ordered_json o;
    if (!selected_features.empty()) o["selected_features"] = selected_features;
    o["dfnn"] = metrics_report_to_json(report.dfnn);
    o["lstm"] = metrics_report_to_json(report.lstm);
    std::ofstream out(path);
    if (!out) throw io_error("cannot write experiment report: " + path);
    out << o.dump() << "\n";
}

void save_sweep_report(const SweepReport& report, const std::string& path) {
    ordered_json cells = ordered_json::array();
    for (const auto& c : report.cells) {
        ordered_json o;
        o["arch"] = arch_name(c.architecture);
        o["neurons"] = c.neurons;
        o["hidden_layers"] = c.hidden_layers;
        if (c.failed) {
            o["status"] = "failed";
            o["error"] = c.error;
        } else {
            o["status"] = "ok";
            o["test_mse"] = c.test_mse;
            ordered_json timing;
            timing["train_seconds"] = c.train_seconds;
            o["timing"] = std::move(timing);
        }
        cells.push_back(std::move(o));
    }
    ordered_json o;
    o["cells"] = std::move(cells);
    std::ofstream out(path);
    if (!out) throw io_error("cannot write sweep report: " + path);
    out << o.dump() << "\n";
}

void save_sweep_csv(const SweepReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot write sweep CSV: " + path);
    out << "arch,neurons,hidden_layers,status,test_mse,train_seconds\n";
    for (const auto& c : report.cells) {
        out << arch_name(c.architecture) << "," << c.neurons << "," << c.hidden_layers << ","
            << (c.failed ? "failed" : "ok") << ",";
        if (c.failed)
            out << ",";
        else
            out << c.test_mse << "," << c.train_seconds;
        out << "\n";
    }
}

std::string format_metrics_table(const MetricsReport& report) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    auto line = [&](const char* name, const SetMetrics& m) {
        os.precision(6);
        os << name << "  mse " << m.mse;
        os.precision(4);
        os << "  r2 " << m.r2 << "  rmse_deg [";
        for (std::size_t c = 0; c < 4; ++c) os << (c ? " " : "") << m.rmse_deg[c];
        os << "]\n";
    };
    line("train", report.train);
    line("test ", report.test);
    return os.str();
}

}  // namespace motionmap
