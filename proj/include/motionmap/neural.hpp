#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "motionmap/dataset.hpp"
#include "motionmap/matrix.hpp"

namespace motionmap {

enum class Arch { DFNN, LSTM };

std::string arch_name(Arch a);
Arch arch_from_name(const std::string& name);

struct NetworkConfig {
    Arch architecture = Arch::DFNN;
    int hidden_layers = 2;  // l
    int neurons = 20;       // n
    int input_dim = 15;
    int output_dim = 4;
    int epochs = 200;
    double learning_rate = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double decay = 0.0;
    double epsilon = 1e-8;
    int batch_size = 32;
    std::uint64_t seed = 0;
    int window_length = 16;  // LSTM only
    double train_fraction = 0.8;

    void validate() const;
};

struct DenseLayer {
    Matrix w;               // out x in
    std::vector<double> b;  // out
};

// Standard cell with forget gate; gate rows packed [input; forget;
// candidate; output], each `units` rows.
struct LstmLayer {
    Matrix wx;              // 4*units x input
    Matrix wh;              // 4*units x units
    std::vector<double> b;  // 4*units
    int units = 0;
    int input = 0;
};

struct ModelParams {
    std::vector<LstmLayer> lstm;    // LSTM architecture only
    std::vector<DenseLayer> dense;  // DFNN: l hidden + head; LSTM: head only
};

struct TrainingHistory {
    std::vector<double> train_mse;
    std::vector<double> test_mse;
};

struct TrainedModel {
    NetworkConfig config;
    ModelParams params;
    std::optional<NormParams> norm;
    TrainingHistory history;
    double train_wall_seconds = 0.0;

    bool trained() const { return norm.has_value(); }
    std::size_t parameter_count() const;
};

// Deterministic He-uniform (ReLU hidden layers) / Glorot-uniform (output
// head and LSTM kernels) initialization; same seed gives bit-identical
// weights.
TrainedModel init_network(const NetworkConfig& cfg);

// Single input (DFNN: x holds input_dim values; LSTM: x is the
// window-flattened input, window_length * input_dim values with the
// oldest frame first). Pure function of (weights, input).
std::vector<double> forward(const TrainedModel& model, const std::vector<double>& x);

// Mini-batch Adam on MSE for exactly cfg.epochs epochs. Both datasets
// must be normalized; their parameters are snapshotted into the model.
// Throws data_error naming the epoch if the loss goes non-finite.
TrainedModel train(TrainedModel model, const Dataset& train_set, const Dataset& test_set);

// Max relative error between backprop and central finite differences
// (step 1e-5) over every parameter, for one (input, target) pair.
double gradient_check(const TrainedModel& model, const std::vector<double>& x,
                      const std::vector<double>& y);

// Batch predictions on a dataset in model space (normalized in/out).
// For the LSTM the rows are treated as a stream: the window is
// pre-filled with the first row, matching StreamPredictor exactly.
Matrix predict_batch(const TrainedModel& model, const Dataset& d);

// Frame-in, tool-state-out streaming predictor. Holds the LSTM rolling
// window; single consumer per instance.
class StreamPredictor {
public:
    explicit StreamPredictor(const TrainedModel& model);
    ToolState push(const JointAngleVector& frame);

private:
    const TrainedModel& model_;
    std::size_t window_len_;
    std::vector<double> window_;  // flattened, oldest first
    bool primed_ = false;
};

// Versioned JSON model file; bit-exact round trip.
void save_model(const TrainedModel& model, const std::string& path);
TrainedModel load_model(const std::string& path);

}  // namespace motionmap
