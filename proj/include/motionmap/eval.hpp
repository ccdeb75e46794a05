#pragma once

#include <array>
#include <string>
#include <vector>

#include "motionmap/analysis.hpp"
#include "motionmap/dataset.hpp"
#include "motionmap/neural.hpp"

namespace motionmap {

// Metrics of one model on one dataset: MSE on the normalized scale,
// per-channel RMSE after denormalizing to degrees, r2 averaged uniformly
// over the four outputs, and prediction wall time.
struct SetMetrics {
    double mse = 0.0;
    std::array<double, 4> rmse_deg{};
    double r2 = 0.0;
    double predict_seconds = 0.0;
    double predict_seconds_per_sample = 0.0;
};

struct MetricsReport {
    SetMetrics train;
    SetMetrics test;
};

SetMetrics metrics(const TrainedModel& model, const Dataset& d);
MetricsReport evaluate_model(const TrainedModel& model, const Dataset& train_set,
                             const Dataset& test_set);

struct SweepCell {
    Arch architecture = Arch::DFNN;
    int neurons = 0;
    int hidden_layers = 0;
    double test_mse = 0.0;
    double train_seconds = 0.0;
    bool failed = false;
    std::string error;
};

struct SweepReport {
    std::vector<SweepCell> cells;
};

// Trains one model per (arch, n, l) cell with identical data and seed;
// failed cells are marked and the sweep continues. jobs > 1 runs cells
// on that many worker threads.
SweepReport sweep(const std::vector<int>& neuron_grid, const std::vector<int>& layer_grid,
                  const std::vector<Arch>& arch_grid, const Dataset& train_set,
                  const Dataset& test_set, const NetworkConfig& base_cfg, int jobs = 1);

struct ExperimentReport {
    MetricsReport dfnn;
    MetricsReport lstm;
};

// Retrains both architectures on the named input columns.
ExperimentReport reduced_input_experiment(const Dataset& train_set, const Dataset& test_set,
                                          const std::vector<std::size_t>& top_features,
                                          const NetworkConfig& base_cfg);

struct PcaExperimentReport {
    ExperimentReport metrics;
    PcaModel pca;  // fitted on the training inputs only
};

// Projects both sets onto k training-set principal components (the
// projected columns are min-max rescaled with train-set parameters) and
// retrains both architectures.
PcaExperimentReport pca_experiment(const Dataset& train_set, const Dataset& test_set,
                                   std::size_t k, const NetworkConfig& base_cfg);

void save_metrics_report(const MetricsReport& report, const std::string& path);
void save_metrics_csv(const MetricsReport& report, const std::string& path);
void save_experiment_report(const ExperimentReport& report, const std::string& path,
                            const std::vector<std::string>& selected_features = {});
void save_sweep_report(const SweepReport& report, const std::string& path);
void save_sweep_csv(const SweepReport& report, const std::string& path);
std::string format_metrics_table(const MetricsReport& report);

}  // namespace motionmap
