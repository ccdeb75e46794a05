#include "motionmap/neural.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "motionmap/common.hpp"
#include "motionmap/kernels.hpp"

namespace motionmap {

using nlohmann::json;
using nlohmann::ordered_json;

std::string arch_name(Arch a) { return a == Arch::DFNN ? "dfnn" : "lstm"; }

Arch arch_from_name(const std::string& name) {
    if (name == "dfnn") return Arch::DFNN;
    if (name == "lstm") return Arch::LSTM;
    throw data_error("unknown architecture '" + name + "' (expected dfnn or lstm)");
}

void NetworkConfig::validate() const {
    if (hidden_layers < 1) throw data_error("config: hidden_layers must be >= 1");
    if (neurons < 1) throw data_error("config: neurons must be >= 1");
    if (input_dim < 1 || output_dim < 1) throw data_error("config: invalid dimensions");
    if (epochs < 0) throw data_error("config: epochs must be >= 0");
    if (!(learning_rate >= 0.0 && learning_rate < 1.0))
        throw data_error("config: learning_rate must be in [0, 1)");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
        throw data_error("config: beta1/beta2 must be in [0, 1)");
    if (!(epsilon > 0.0)) throw data_error("config: epsilon must be > 0");
    if (decay < 0.0) throw data_error("config: decay must be >= 0");
    if (batch_size < 1) throw data_error("config: batch_size must be >= 1");
    if (architecture == Arch::LSTM && window_length < 1)
        throw data_error("config: window_length must be >= 1");
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw data_error("config: train_fraction must be in (0, 1)");
}

std::size_t TrainedModel::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : params.lstm) n += l.wx.data.size() + l.wh.data.size() + l.b.size();
    for (const auto& d : params.dense) n += d.w.data.size() + d.b.size();
    return n;
}

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void fill_uniform(Rng& rng, std::vector<double>& buf, double limit) {
    for (double& v : buf) v = rng.uniform(-limit, limit);
}

}  // namespace

TrainedModel init_network(const NetworkConfig& cfg) {
    cfg.validate();
    TrainedModel model;
    model.config = cfg;
    Rng rng(cfg.seed);

    const std::size_t n = static_cast<std::size_t>(cfg.neurons);
    const std::size_t out = static_cast<std::size_t>(cfg.output_dim);

    if (cfg.architecture == Arch::DFNN) {
        std::size_t in = static_cast<std::size_t>(cfg.input_dim);
        for (int k = 0; k < cfg.hidden_layers; ++k) {
            DenseLayer layer;
            layer.w = Matrix(n, in);
            layer.b.assign(n, 0.0);
            fill_uniform(rng, layer.w.data, std::sqrt(6.0 / static_cast<double>(in)));
            model.params.dense.push_back(std::move(layer));
            in = n;
        }
        DenseLayer head;
        head.w = Matrix(out, in);
        head.b.assign(out, 0.0);
        fill_uniform(rng, head.w.data,
                     std::sqrt(6.0 / static_cast<double>(in + out)));
        model.params.dense.push_back(std::move(head));
    } else {
        std::size_t in = static_cast<std::size_t>(cfg.input_dim);
        for (int k = 0; k < cfg.hidden_layers; ++k) {
            LstmLayer layer;
            layer.units = cfg.neurons;
            layer.input = static_cast<int>(in);
            layer.wx = Matrix(4 * n, in);
            layer.wh = Matrix(4 * n, n);
            layer.b.assign(4 * n, 0.0);
            fill_uniform(rng, layer.wx.data,
                         std::sqrt(6.0 / static_cast<double>(in + 4 * n)));
            fill_uniform(rng, layer.wh.data,
                         std::sqrt(6.0 / static_cast<double>(n + 4 * n)));
            // unit forget-gate bias
            std::fill(layer.b.begin() + static_cast<long>(n),
                      layer.b.begin() + static_cast<long>(2 * n), 1.0);
            model.params.lstm.push_back(std::move(layer));
            in = n;
        }
        DenseLayer head;
        head.w = Matrix(out, n);
        head.b.assign(out, 0.0);
        fill_uniform(rng, head.w.data, std::sqrt(6.0 / static_cast<double>(n + out)));
        model.params.dense.push_back(std::move(head));
    }
    return model;
}

namespace {

// ---- forward/backward workspaces (allocated once, reused per sample) ----

struct DfnnWork {
    std::vector<std::vector<double>> z;  // preactivations per hidden layer
    std::vector<std::vector<double>> a;  // activations per hidden layer
    std::vector<double> y;
    std::vector<double> delta, delta_prev;
};

DfnnWork make_dfnn_work(const NetworkConfig& cfg) {
    DfnnWork w;
    w.z.assign(cfg.hidden_layers, std::vector<double>(cfg.neurons, 0.0));
    w.a.assign(cfg.hidden_layers, std::vector<double>(cfg.neurons, 0.0));
    w.y.assign(cfg.output_dim, 0.0);
    w.delta.assign(std::max(cfg.neurons, cfg.output_dim), 0.0);
    w.delta_prev.assign(std::max(cfg.neurons, cfg.output_dim), 0.0);
    return w;
}

void dfnn_forward(const ModelParams& p, const NetworkConfig& cfg, const double* x,
                  DfnnWork& w) {
    const auto& K = kernels::active();
    const double* in = x;
    std::size_t in_dim = static_cast<std::size_t>(cfg.input_dim);
    for (int k = 0; k < cfg.hidden_layers; ++k) {
        const DenseLayer& layer = p.dense[static_cast<std::size_t>(k)];
        auto& z = w.z[static_cast<std::size_t>(k)];
        auto& a = w.a[static_cast<std::size_t>(k)];
        K.matvec(layer.w.data.data(), layer.w.rows, in_dim, in, z.data());
        K.axpy(1.0, layer.b.data(), z.data(), z.size());
        for (std::size_t i = 0; i < z.size(); ++i) a[i] = z[i] > 0.0 ? z[i] : 0.0;
        in = a.data();
        in_dim = a.size();
    }
    const DenseLayer& head = p.dense.back();
    K.matvec(head.w.data.data(), head.w.rows, in_dim, in, w.y.data());
    K.axpy(1.0, head.b.data(), w.y.data(), w.y.size());
}

// dldy holds dLoss/dy; gradients accumulate into g
void dfnn_backward(const ModelParams& p, const NetworkConfig& cfg, const double* x,
                   DfnnWork& w, const double* dldy, ModelParams& g) {
    const auto& K = kernels::active();
    const int l = cfg.hidden_layers;
    const std::size_t out = static_cast<std::size_t>(cfg.output_dim);

    std::vector<double>& delta = w.delta;
    std::vector<double>& delta_prev = w.delta_prev;

    // head
    {
        const DenseLayer& head = p.dense.back();
        DenseLayer& gh = g.dense.back();
        const double* a_prev = l > 0 ? w.a[static_cast<std::size_t>(l - 1)].data() : x;
        const std::size_t prev_dim = l > 0 ? w.a[static_cast<std::size_t>(l - 1)].size()
                                           : static_cast<std::size_t>(cfg.input_dim);
        K.ger(gh.w.data.data(), out, prev_dim, dldy, a_prev);
        K.axpy(1.0, dldy, gh.b.data(), out);
        std::fill(delta_prev.begin(), delta_prev.end(), 0.0);
        K.matvec_t_add(head.w.data.data(), out, prev_dim, dldy, delta_prev.data());
    }

    for (int k = l - 1; k >= 0; --k) {
        const std::size_t ku = static_cast<std::size_t>(k);
        const auto& z = w.z[ku];
        // ReLU subgradient at 0 is 0
        for (std::size_t i = 0; i < z.size(); ++i)
            delta[i] = z[i] > 0.0 ? delta_prev[i] : 0.0;

        const DenseLayer& layer = p.dense[ku];
        DenseLayer& gl = g.dense[ku];
        const double* a_prev = k > 0 ? w.a[ku - 1].data() : x;
        const std::size_t prev_dim =
            k > 0 ? w.a[ku - 1].size() : static_cast<std::size_t>(cfg.input_dim);
        K.ger(gl.w.data.data(), z.size(), prev_dim, delta.data(), a_prev);
        K.axpy(1.0, delta.data(), gl.b.data(), z.size());
        if (k > 0) {
            std::fill(delta_prev.begin(), delta_prev.end(), 0.0);
            K.matvec_t_add(layer.w.data.data(), z.size(), prev_dim, delta.data(),
                           delta_prev.data());
        }
    }
}

struct LstmLayerWork {
    Matrix gates;  // L x 4n, post-activation [i f g o]
    Matrix c;      // L x n
    Matrix tc;     // L x n, tanh(c)
    Matrix h;      // L x n
    Matrix dx;     // L x input, backward only
};

struct LstmWork {
    std::vector<LstmLayerWork> layers;
    std::vector<double> y;
    std::vector<double> z4, dh, dc, dz, dh_in;
};

LstmWork make_lstm_work(const NetworkConfig& cfg) {
    LstmWork w;
    const std::size_t L = static_cast<std::size_t>(cfg.window_length);
    const std::size_t n = static_cast<std::size_t>(cfg.neurons);
    std::size_t in = static_cast<std::size_t>(cfg.input_dim);
    for (int k = 0; k < cfg.hidden_layers; ++k) {
        LstmLayerWork lw;
        lw.gates = Matrix(L, 4 * n);
        lw.c = Matrix(L, n);
        lw.tc = Matrix(L, n);
        lw.h = Matrix(L, n);
        lw.dx = Matrix(L, in);
        w.layers.push_back(std::move(lw));
        in = n;
    }
    w.y.assign(static_cast<std::size_t>(cfg.output_dim), 0.0);
    w.z4.assign(4 * n, 0.0);
    w.dh.assign(n, 0.0);
    w.dc.assign(n, 0.0);
    w.dz.assign(4 * n, 0.0);
    w.dh_in.assign(n, 0.0);
    return w;
}

// xwin: window_length rows of input_dim values, oldest first
void lstm_forward(const ModelParams& p, const NetworkConfig& cfg, const double* xwin,
                  LstmWork& w) {
    const auto& K = kernels::active();
    const std::size_t L = static_cast<std::size_t>(cfg.window_length);
    const std::size_t n = static_cast<std::size_t>(cfg.neurons);

    for (std::size_t k = 0; k < p.lstm.size(); ++k) {
        const LstmLayer& layer = p.lstm[k];
        LstmLayerWork& lw = w.layers[k];
        const std::size_t in_dim = static_cast<std::size_t>(layer.input);
        for (std::size_t t = 0; t < L; ++t) {
            const double* x_t = k == 0 ? xwin + t * static_cast<std::size_t>(cfg.input_dim)
                                       : w.layers[k - 1].h.row(t);
            const double* h_prev = t > 0 ? lw.h.row(t - 1) : nullptr;
            double* z = w.z4.data();
            K.matvec(layer.wx.data.data(), 4 * n, in_dim, x_t, z);
            if (h_prev != nullptr)
                K.matvec_add(layer.wh.data.data(), 4 * n, n, h_prev, z);
            K.axpy(1.0, layer.b.data(), z, 4 * n);

            double* gates = lw.gates.row(t);
            for (std::size_t i = 0; i < n; ++i) gates[i] = sigmoid(z[i]);
            for (std::size_t i = n; i < 2 * n; ++i) gates[i] = sigmoid(z[i]);
            for (std::size_t i = 2 * n; i < 3 * n; ++i) gates[i] = std::tanh(z[i]);
            for (std::size_t i = 3 * n; i < 4 * n; ++i) gates[i] = sigmoid(z[i]);

            double* c = lw.c.row(t);
            double* tc = lw.tc.row(t);
            double* h = lw.h.row(t);
            const double* c_prev = t > 0 ? lw.c.row(t - 1) : nullptr;
            for (std::size_t i = 0; i < n; ++i) {
                const double ci = gates[n + i] * (c_prev != nullptr ? c_prev[i] : 0.0) +
                                  gates[i] * gates[2 * n + i];
                c[i] = ci;
                tc[i] = std::tanh(ci);
                h[i] = gates[3 * n + i] * tc[i];
            }
        }
    }

    const DenseLayer& head = p.dense.back();
    const double* h_last = w.layers.back().h.row(L - 1);
    K.matvec(head.w.data.data(), head.w.rows, n, h_last, w.y.data());
    K.axpy(1.0, head.b.data(), w.y.data(), w.y.size());
}

void lstm_backward(const ModelParams& p, const NetworkConfig& cfg, const double* xwin,
                   LstmWork& w, const double* dldy, ModelParams& g) {
    const auto& K = kernels::active();
    const std::size_t L = static_cast<std::size_t>(cfg.window_length);
    const std::size_t n = static_cast<std::size_t>(cfg.neurons);
    const std::size_t out = static_cast<std::size_t>(cfg.output_dim);
    const std::size_t top = p.lstm.size() - 1;

    // head gradient and the gradient flowing into the top layer's last h
    {
        const DenseLayer& head = p.dense.back();
        DenseLayer& gh = g.dense.back();
        const double* h_last = w.layers[top].h.row(L - 1);
        K.ger(gh.w.data.data(), out, n, dldy, h_last);
        K.axpy(1.0, dldy, gh.b.data(), out);
        for (auto& lw : w.layers) std::fill(lw.dx.data.begin(), lw.dx.data.end(), 0.0);
        std::fill(w.dh_in.begin(), w.dh_in.end(), 0.0);
        K.matvec_t_add(head.w.data.data(), out, n, dldy, w.dh_in.data());
    }

    for (std::size_t k = top + 1; k-- > 0;) {
        const LstmLayer& layer = p.lstm[k];
        LstmLayerWork& lw = w.layers[k];
        LstmLayer& gl = g.lstm[k];
        const std::size_t in_dim = static_cast<std::size_t>(layer.input);

        std::vector<double>& dh = w.dh;
        std::vector<double>& dc = w.dc;
        std::vector<double>& dz = w.dz;
        std::fill(dh.begin(), dh.end(), 0.0);
        std::fill(dc.begin(), dc.end(), 0.0);

        for (std::size_t t = L; t-- > 0;) {
            // gradient arriving at h_t: from the consumer above at this
            // step plus the recurrent carry from step t+1 (already in dh)
            if (k == top) {
                if (t == L - 1) K.axpy(1.0, w.dh_in.data(), dh.data(), n);
            } else {
                K.axpy(1.0, w.layers[k + 1].dx.row(t), dh.data(), n);
            }

            const double* gates = lw.gates.row(t);
            const double* tc = lw.tc.row(t);
            const double* c_prev = t > 0 ? lw.c.row(t - 1) : nullptr;

            for (std::size_t i = 0; i < n; ++i) {
                const double ig = gates[i];
                const double fg = gates[n + i];
                const double gg = gates[2 * n + i];
                const double og = gates[3 * n + i];
                const double dh_i = dh[i];
                const double dc_i = dc[i] + dh_i * og * (1.0 - tc[i] * tc[i]);
                const double cp = c_prev != nullptr ? c_prev[i] : 0.0;
                dz[i] = dc_i * gg * ig * (1.0 - ig);               // input gate
                dz[n + i] = dc_i * cp * fg * (1.0 - fg);           // forget gate
                dz[2 * n + i] = dc_i * ig * (1.0 - gg * gg);       // candidate
                dz[3 * n + i] = dh_i * tc[i] * og * (1.0 - og);    // output gate
                dc[i] = dc_i * fg;                                 // carry to t-1
            }

            const double* x_t = k == 0 ? xwin + t * static_cast<std::size_t>(cfg.input_dim)
                                       : w.layers[k - 1].h.row(t);
            K.ger(gl.wx.data.data(), 4 * n, in_dim, dz.data(), x_t);
            if (t > 0) K.ger(gl.wh.data.data(), 4 * n, n, dz.data(), lw.h.row(t - 1));
            K.axpy(1.0, dz.data(), gl.b.data(), 4 * n);

            K.matvec_t_add(layer.wx.data.data(), 4 * n, in_dim, dz.data(), lw.dx.row(t));
            std::fill(dh.begin(), dh.end(), 0.0);
            if (t > 0)
                K.matvec_t_add(layer.wh.data.data(), 4 * n, n, dz.data(), dh.data());
        }
    }
}

ModelParams zero_like(const ModelParams& p) {
    ModelParams g;
    for (const auto& l : p.lstm) {
        LstmLayer z;
        z.units = l.units;
        z.input = l.input;
        z.wx = Matrix(l.wx.rows, l.wx.cols);
        z.wh = Matrix(l.wh.rows, l.wh.cols);
        z.b.assign(l.b.size(), 0.0);
        g.lstm.push_back(std::move(z));
    }
    for (const auto& d : p.dense) {
        DenseLayer z;
        z.w = Matrix(d.w.rows, d.w.cols);
        z.b.assign(d.b.size(), 0.0);
        g.dense.push_back(std::move(z));
    }
    return g;
}

template <typename Fn>
void for_each_tensor(ModelParams& p, Fn&& fn) {
    for (auto& l : p.lstm) {
        fn(l.wx.data);
        fn(l.wh.data);
        fn(l.b);
    }
    for (auto& d : p.dense) {
        fn(d.w.data);
        fn(d.b);
    }
}

void zero_params(ModelParams& p) {
    for_each_tensor(p, [](std::vector<double>& t) { std::fill(t.begin(), t.end(), 0.0); });
}

}  // namespace

std::vector<double> forward(const TrainedModel& model, const std::vector<double>& x) {
    const NetworkConfig& cfg = model.config;
    if (cfg.architecture == Arch::DFNN) {
        if (x.size() != static_cast<std::size_t>(cfg.input_dim))
            throw data_error("forward: input has " + std::to_string(x.size()) +
                             " values, expected " + std::to_string(cfg.input_dim));
        DfnnWork w = make_dfnn_work(cfg);
        dfnn_forward(model.params, cfg, x.data(), w);
        return w.y;
    }
    const std::size_t want =
        static_cast<std::size_t>(cfg.window_length) * static_cast<std::size_t>(cfg.input_dim);
    if (x.size() != want)
        throw data_error("forward: window has " + std::to_string(x.size()) +
                         " values, expected " + std::to_string(want));
    LstmWork w = make_lstm_work(cfg);
    lstm_forward(model.params, cfg, x.data(), w);
    return w.y;
}

namespace {

double sample_loss(const double* pred, const double* target, std::size_t d) {
    return kernels::active().sum_sq_diff(pred, target, d) / static_cast<double>(d);
}

}  // namespace

TrainedModel train(TrainedModel model, const Dataset& train_set, const Dataset& test_set) {
    const NetworkConfig& cfg = model.config;
    cfg.validate();
    if (!train_set.normalized || !train_set.norm || !test_set.normalized || !test_set.norm)
        throw data_error("train: datasets must be normalized");
    if (!(*train_set.norm == *test_set.norm))
        throw data_error("train: train/test normalization parameters differ");
    if (train_set.inputs.cols != static_cast<std::size_t>(cfg.input_dim))
        throw data_error("train: dataset has " + std::to_string(train_set.inputs.cols) +
                         " input columns, config expects " + std::to_string(cfg.input_dim));
    if (train_set.targets.cols != static_cast<std::size_t>(cfg.output_dim))
        throw data_error("train: target width mismatch");

    const auto t_start = std::chrono::steady_clock::now();
    const auto& K = kernels::active();
    const std::size_t d_out = static_cast<std::size_t>(cfg.output_dim);

    // LSTM trains on sliding windows; DFNN on rows
    SequenceSet seq;
    const Matrix* tx = &train_set.inputs;
    const Matrix* ty = &train_set.targets;
    if (cfg.architecture == Arch::LSTM) {
        seq = window(train_set, static_cast<std::size_t>(cfg.window_length));
        tx = &seq.windows;
        ty = &seq.targets;
    }
    const std::size_t n_samples = tx->rows;
    if (n_samples == 0) throw data_error("train: empty training set");

    DfnnWork dwork;
    LstmWork lwork;
    if (cfg.architecture == Arch::DFNN)
        dwork = make_dfnn_work(cfg);
    else
        lwork = make_lstm_work(cfg);

    ModelParams grads = zero_like(model.params);
    ModelParams adam_m = zero_like(model.params);
    ModelParams adam_v = zero_like(model.params);
    long adam_t = 0;

    std::vector<std::size_t> order(n_samples);
    std::vector<double> dldy(d_out, 0.0);
    model.history.train_mse.clear();
    model.history.test_mse.clear();
    model.history.train_mse.reserve(static_cast<std::size_t>(cfg.epochs));
    model.history.test_mse.reserve(static_cast<std::size_t>(cfg.epochs));

    // test evaluation needs the norm snapshot in place
    model.norm = *train_set.norm;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = 0; i < n_samples; ++i) order[i] = i;
        Rng shuffle_rng(mix_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(epoch)));
        for (std::size_t i = n_samples; i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(shuffle_rng.below(i));
            std::swap(order[i - 1], order[j]);
        }

        double epoch_loss = 0.0;
        for (std::size_t batch_start = 0; batch_start < n_samples;
             batch_start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t batch_end =
                std::min(batch_start + static_cast<std::size_t>(cfg.batch_size), n_samples);
            const double b = static_cast<double>(batch_end - batch_start);
            zero_params(grads);
            double batch_loss = 0.0;

            for (std::size_t s = batch_start; s < batch_end; ++s) {
                const std::size_t row = order[s];
                const double* x = tx->row(row);
                const double* target = ty->row(row);
                const double* pred;
                if (cfg.architecture == Arch::DFNN) {
                    dfnn_forward(model.params, cfg, x, dwork);
                    pred = dwork.y.data();
                } else {
                    lstm_forward(model.params, cfg, x, lwork);
                    pred = lwork.y.data();
                }
                batch_loss += sample_loss(pred, target, d_out);
                // scale by batch size here so the accumulated gradient is
                // already the batch mean
                for (std::size_t c = 0; c < d_out; ++c)
                    dldy[c] = 2.0 * (pred[c] - target[c]) / (static_cast<double>(d_out) * b);
                if (cfg.architecture == Arch::DFNN)
                    dfnn_backward(model.params, cfg, x, dwork, dldy.data(), grads);
                else
                    lstm_backward(model.params, cfg, x, lwork, dldy.data(), grads);
            }

            if (!std::isfinite(batch_loss))
                throw data_error("training diverged: non-finite loss at epoch " +
                                 std::to_string(epoch + 1));

            ++adam_t;
            const double lr_t =
                cfg.learning_rate / (1.0 + cfg.decay * static_cast<double>(adam_t));
            auto gm = grads.lstm.begin();
            auto mm = adam_m.lstm.begin();
            auto vm = adam_v.lstm.begin();
            for (auto& l : model.params.lstm) {
                K.adam_step(l.wx.data.data(), gm->wx.data.data(), mm->wx.data.data(),
                            vm->wx.data.data(), l.wx.data.size(), lr_t, cfg.beta1,
                            cfg.beta2, cfg.epsilon, adam_t);
                K.adam_step(l.wh.data.data(), gm->wh.data.data(), mm->wh.data.data(),
                            vm->wh.data.data(), l.wh.data.size(), lr_t, cfg.beta1,
                            cfg.beta2, cfg.epsilon, adam_t);
                K.adam_step(l.b.data(), gm->b.data(), mm->b.data(), vm->b.data(),
                            l.b.size(), lr_t, cfg.beta1, cfg.beta2, cfg.epsilon, adam_t);
                ++gm, ++mm, ++vm;
            }
            auto gd = grads.dense.begin();
            auto md = adam_m.dense.begin();
            auto vd = adam_v.dense.begin();
            for (auto& dl : model.params.dense) {
                K.adam_step(dl.w.data.data(), gd->w.data.data(), md->w.data.data(),
                            vd->w.data.data(), dl.w.data.size(), lr_t, cfg.beta1,
                            cfg.beta2, cfg.epsilon, adam_t);
                K.adam_step(dl.b.data(), gd->b.data(), md->b.data(), vd->b.data(),
                            dl.b.size(), lr_t, cfg.beta1, cfg.beta2, cfg.epsilon, adam_t);
                ++gd, ++md, ++vd;
            }
            epoch_loss += batch_loss;
        }

        model.history.train_mse.push_back(epoch_loss / static_cast<double>(n_samples));

        const Matrix test_pred = predict_batch(model, test_set);
        const double test_mse =
            K.sum_sq_diff(test_pred.data.data(), test_set.targets.data.data(),
                          test_pred.data.size()) /
            static_cast<double>(test_pred.data.size());
        if (!std::isfinite(test_mse))
            throw data_error("training diverged: non-finite test loss at epoch " +
                             std::to_string(epoch + 1));
        model.history.test_mse.push_back(test_mse);
        if (log_level() >= LogLevel::Debug)
            log_debug("epoch " + std::to_string(epoch + 1) + " train_mse " +
                      std::to_string(model.history.train_mse.back()) + " test_mse " +
                      std::to_string(test_mse));
    }

    model.train_wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return model;
}

double gradient_check(const TrainedModel& model, const std::vector<double>& x,
                      const std::vector<double>& y) {
    const NetworkConfig& cfg = model.config;
    if (y.size() != static_cast<std::size_t>(cfg.output_dim))
        throw data_error("gradient_check: target size mismatch");

    TrainedModel m = model;  // mutable copy for the nudges
    const std::size_t d_out = y.size();

    auto loss = [&]() {
        const std::vector<double> pred = forward(m, x);
        return sample_loss(pred.data(), y.data(), d_out);
    };

    // analytic gradient
    ModelParams grads = zero_like(m.params);
    {
        std::vector<double> dldy(d_out);
        if (cfg.architecture == Arch::DFNN) {
            DfnnWork w = make_dfnn_work(cfg);
            dfnn_forward(m.params, cfg, x.data(), w);
            for (std::size_t c = 0; c < d_out; ++c)
                dldy[c] = 2.0 * (w.y[c] - y[c]) / static_cast<double>(d_out);
            dfnn_backward(m.params, cfg, x.data(), w, dldy.data(), grads);
        } else {
            LstmWork w = make_lstm_work(cfg);
            lstm_forward(m.params, cfg, x.data(), w);
            for (std::size_t c = 0; c < d_out; ++c)
                dldy[c] = 2.0 * (w.y[c] - y[c]) / static_cast<double>(d_out);
            lstm_backward(m.params, cfg, x.data(), w, dldy.data(), grads);
        }
    }

    const double h = 1e-5;
    double max_rel = 0.0;
    std::vector<std::vector<double>*> param_tensors, grad_tensors;
    for_each_tensor(m.params, [&](std::vector<double>& t) { param_tensors.push_back(&t); });
    for_each_tensor(grads, [&](std::vector<double>& t) { grad_tensors.push_back(&t); });

    for (std::size_t ti = 0; ti < param_tensors.size(); ++ti) {
        std::vector<double>& w = *param_tensors[ti];
        const std::vector<double>& g = *grad_tensors[ti];
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double saved = w[i];
            w[i] = saved + h;
            const double lp = loss();
            w[i] = saved - h;
            const double lm = loss();
            w[i] = saved;
            const double numeric = (lp - lm) / (2.0 * h);
            const double rel =
                std::abs(g[i] - numeric) / std::max(1e-8, std::abs(g[i]) + std::abs(numeric));
            max_rel = std::max(max_rel, rel);
        }
    }
    return max_rel;
}

Matrix predict_batch(const TrainedModel& model, const Dataset& d) {
    const NetworkConfig& cfg = model.config;
    if (d.inputs.cols != static_cast<std::size_t>(cfg.input_dim))
        throw data_error("predict: dataset has " + std::to_string(d.inputs.cols) +
                         " input columns, model expects " + std::to_string(cfg.input_dim));
    const std::size_t n = d.size();
    const std::size_t d_out = static_cast<std::size_t>(cfg.output_dim);
    Matrix out(n, d_out);

    if (cfg.architecture == Arch::DFNN) {
        DfnnWork w = make_dfnn_work(cfg);
        for (std::size_t r = 0; r < n; ++r) {
            dfnn_forward(model.params, cfg, d.inputs.row(r), w);
            std::copy(w.y.begin(), w.y.end(), out.row(r));
        }
        return out;
    }

    const std::size_t L = static_cast<std::size_t>(cfg.window_length);
    const std::size_t f = static_cast<std::size_t>(cfg.input_dim);
    LstmWork w = make_lstm_work(cfg);
    std::vector<double> win(L * f, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
        if (r == 0) {
            for (std::size_t t = 0; t < L; ++t)
                std::copy(d.inputs.row(0), d.inputs.row(0) + f, win.data() + t * f);
        } else {
            std::memmove(win.data(), win.data() + f, (L - 1) * f * sizeof(double));
            std::copy(d.inputs.row(r), d.inputs.row(r) + f, win.data() + (L - 1) * f);
        }
        lstm_forward(model.params, cfg, win.data(), w);
        std::copy(w.y.begin(), w.y.end(), out.row(r));
    }
    return out;
}

StreamPredictor::StreamPredictor(const TrainedModel& model)
    : model_(model),
      window_len_(model.config.architecture == Arch::LSTM
                      ? static_cast<std::size_t>(model.config.window_length)
                      : 1) {
    if (!model_.trained())
        throw data_error("model untrained: missing normalization parameters");
    if (model_.config.input_dim != 15)
        throw data_error("streaming predictor requires a model with the 15 joint inputs");
    window_.assign(window_len_ * 15, 0.0);
}

ToolState StreamPredictor::push(const JointAngleVector& frame) {
    const NormParams& p = *model_.norm;
    std::array<double, 15> xn;
    for (std::size_t c = 0; c < 15; ++c)
        xn[c] = (frame[c] - p.x_min[c]) / (p.x_max[c] - p.x_min[c]);

    if (!primed_) {
        for (std::size_t t = 0; t < window_len_; ++t)
            std::copy(xn.begin(), xn.end(), window_.data() + t * 15);
        primed_ = true;
    } else {
        std::memmove(window_.data(), window_.data() + 15,
                     (window_len_ - 1) * 15 * sizeof(double));
        std::copy(xn.begin(), xn.end(), window_.data() + (window_len_ - 1) * 15);
    }

    std::vector<double> yn;
    if (model_.config.architecture == Arch::DFNN) {
        yn = forward(model_, std::vector<double>(window_.end() - 15, window_.end()));
    } else {
        yn = forward(model_, window_);
    }

    ToolState out;
    out.phi = yn[0] * (p.y_max[0] - p.y_min[0]) + p.y_min[0];
    out.theta = yn[1] * (p.y_max[1] - p.y_min[1]) + p.y_min[1];
    out.psi = yn[2] * (p.y_max[2] - p.y_min[2]) + p.y_min[2];
    out.jaw = std::clamp(yn[3] * (p.y_max[3] - p.y_min[3]) + p.y_min[3], 0.0, 30.0);
    return out;
}

namespace {

ordered_json config_to_json(const NetworkConfig& c) {
    ordered_json o;
    o["arch"] = arch_name(c.architecture);
    o["hidden_layers"] = c.hidden_layers;
    o["neurons"] = c.neurons;
    o["input_dim"] = c.input_dim;
    o["output_dim"] = c.output_dim;
    o["loss"] = "mse";
    o["hidden_activation"] = c.architecture == Arch::DFNN ? "relu" : "lstm";
    o["epochs"] = c.epochs;
    o["learning_rate"] = c.learning_rate;
    o["beta1"] = c.beta1;
    o["beta2"] = c.beta2;
    o["decay"] = c.decay;
    o["epsilon"] = c.epsilon;
    o["batch_size"] = c.batch_size;
    o["seed"] = c.seed;
    o["window_length"] = c.window_length;
    o["train_fraction"] = c.train_fraction;
    return o;
}

NetworkConfig config_from_json(const json& o) {
    NetworkConfig c;
    c.architecture = arch_from_name(o.at("arch").get<std::string>());
    c.hidden_layers = o.at("hidden_layers").get<int>();
    c.neurons = o.at("neurons").get<int>();
    c.input_dim = o.at("input_dim").get<int>();
    c.output_dim = o.at("output_dim").get<int>();
    c.epochs = o.at("epochs").get<int>();
    c.learning_rate = o.at("learning_rate").get<double>();
    c.beta1 = o.at("beta1").get<double>();
    c.beta2 = o.at("beta2").get<double>();
    c.decay = o.at("decay").get<double>();
    c.epsilon = o.at("epsilon").get<double>();
    c.batch_size = o.at("batch_size").get<int>();
    c.seed = o.at("seed").get<std::uint64_t>();
    c.window_length = o.at("window_length").get<int>();
    c.train_fraction = o.at("train_fraction").get<double>();
    return c;
}

ordered_json norm_to_json(const NormParams& p) {
    ordered_json o;
    o["x_min"] = p.x_min;
    o["x_max"] = p.x_max;
    o["y_min"] = p.y_min;
    o["y_max"] = p.y_max;
    return o;
}

NormParams norm_from_json(const json& o) {
    NormParams p;
    p.x_min = o.at("x_min").get<std::vector<double>>();
    p.x_max = o.at("x_max").get<std::vector<double>>();
    p.y_min = o.at("y_min").get<std::vector<double>>();
    p.y_max = o.at("y_max").get<std::vector<double>>();
    return p;
}

}  // namespace

void save_model(const TrainedModel& model, const std::string& path) {
    ordered_json o;
    o["format"] = "motionmap-model";
    o["version"] = 1;
    o["config"] = config_to_json(model.config);
    o["norm"] = model.norm ? ordered_json(norm_to_json(*model.norm)) : ordered_json(nullptr);
    ordered_json lstm_layers = ordered_json::array();
    for (const auto& l : model.params.lstm) {
        ordered_json lj;
        lj["units"] = l.units;
        lj["input"] = l.input;
        lj["wx"] = l.wx.data;  // row-major
        lj["wh"] = l.wh.data;
        lj["b"] = l.b;
        lstm_layers.push_back(std::move(lj));
    }
    o["lstm_layers"] = std::move(lstm_layers);
    ordered_json dense_layers = ordered_json::array();
    for (const auto& d : model.params.dense) {
        ordered_json dj;
        dj["rows"] = d.w.rows;
        dj["cols"] = d.w.cols;
        dj["w"] = d.w.data;  // row-major
        dj["b"] = d.b;
        dense_layers.push_back(std::move(dj));
    }
    o["dense_layers"] = std::move(dense_layers);
    ordered_json h;
    h["train_mse"] = model.history.train_mse;
    h["test_mse"] = model.history.test_mse;
    o["history"] = std::move(h);

    std::ofstream out(path);
    if (!out) throw io_error("cannot write model file: " + path);
    out << o.dump() << "\n";
}

TrainedModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open model file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw data_error("malformed model file " + path + ": " + e.what());
    }
    if (!j.contains("format") || j.at("format") != "motionmap-model")
        throw data_error(path + " is not a motionmap model file");
    if (!j.contains("version") || j.at("version").get<int>() != 1)
        throw data_error(path + ": unsupported model file version");

    TrainedModel m;
    m.config = config_from_json(j.at("config"));
    if (!j.at("norm").is_null()) m.norm = norm_from_json(j.at("norm"));
    for (const auto& lj : j.at("lstm_layers")) {
        LstmLayer l;
        l.units = lj.at("units").get<int>();
        l.input = lj.at("input").get<int>();
        l.wx = Matrix(4 * static_cast<std::size_t>(l.units), static_cast<std::size_t>(l.input));
        l.wh = Matrix(4 * static_cast<std::size_t>(l.units), static_cast<std::size_t>(l.units));
        l.wx.data = lj.at("wx").get<std::vector<double>>();
        l.wh.data = lj.at("wh").get<std::vector<double>>();
        l.b = lj.at("b").get<std::vector<double>>();
        if (l.wx.data.size() != l.wx.rows * l.wx.cols ||
            l.wh.data.size() != l.wh.rows * l.wh.cols || l.b.size() != l.wx.rows)
            throw data_error(path + ": lstm layer shape mismatch");
        m.params.lstm.push_back(std::move(l));
    }
    for (const auto& dj : j.at("dense_layers")) {
        DenseLayer d;
        d.w = Matrix(dj.at("rows").get<std::size_t>(), dj.at("cols").get<std::size_t>());
        d.w.data = dj.at("w").get<std::vector<double>>();
        d.b = dj.at("b").get<std::vector<double>>();
        if (d.w.data.size() != d.w.rows * d.w.cols || d.b.size() != d.w.rows)
            throw data_error(path + ": dense layer shape mismatch");
        m.params.dense.push_back(std::move(d));
    }
    m.history.train_mse = j.at("history").at("train_mse").get<std::vector<double>>();
    m.history.test_mse = j.at("history").at("test_mse").get<std::vector<double>>();
    return m;
}

}  // namespace motionmap
