// motionmap: hand-motion to surgical-tool mapping pipeline.
// Subcommands: generate, preprocess, train, eval, importance, pca,
// sweep, reduced, predict. Exit codes: 0 ok, 2 usage, 3 I/O,
// 4 data/schema.

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "motionmap/analysis.hpp"
#include "motionmap/common.hpp"
#include "motionmap/dataset.hpp"
#include "motionmap/eval.hpp"
#include "motionmap/neural.hpp"
#include "motionmap/sensor_io.hpp"
#include "motionmap/synth.hpp"

namespace mm = motionmap;
using nlohmann::ordered_json;

namespace {

struct ManifestInfo {
    std::string command;
    std::vector<std::string> argv;
    ordered_json config = ordered_json::object();
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    std::uint64_t seed = 0;
    double wall_seconds = 0.0;
    int exit_status = 0;
    ordered_json timing = ordered_json::object();
};

void write_manifest(const ManifestInfo& info) {
    if (info.outputs.empty()) return;
    ordered_json o;
    o["command"] = info.command;
    o["argv"] = info.argv;
    o["config"] = info.config;
    o["inputs"] = info.inputs;
    o["outputs"] = info.outputs;
    o["seed"] = info.seed;
    o["version"] = std::string("motionmap ") + mm::kVersion;
    o["wall_seconds"] = info.wall_seconds;
    o["exit_status"] = info.exit_status;
    if (!info.timing.empty()) o["timing"] = info.timing;
    const std::string path = info.outputs.front() + ".manifest.json";
    std::ofstream out(path);
    if (out) out << o.dump(2) << "\n";
}

std::string truth_path_for(const std::string& frames_path) {
    std::filesystem::path stem(frames_path);
    stem.replace_extension("");
    return stem.string() + ".truth.jsonl";
}

std::string cal_path_for(const std::string& frames_path) {
    std::filesystem::path stem(frames_path);
    stem.replace_extension("");
    return stem.string() + ".cal.json";
}

// shared options

struct TrainOptions {
    std::string arch = "dfnn";
    int neurons = 20;
    int hidden_layers = 2;
    int epochs = 200;
    int batch_size = 32;
    double learning_rate = 0.001;
    int window_length = 16;
    double train_fraction = 0.8;
};

void add_train_options(CLI::App* cmd, TrainOptions& opt) {
    cmd->add_option("--arch", opt.arch, "architecture: dfnn or lstm")
        ->check(CLI::IsMember({"dfnn", "lstm"}));
    cmd->add_option("-n,--neurons", opt.neurons, "neurons per hidden layer");
    cmd->add_option("-l,--layers", opt.hidden_layers, "hidden layer count");
    cmd->add_option("--epochs", opt.epochs, "training epochs");
    cmd->add_option("--batch", opt.batch_size, "mini-batch size");
    cmd->add_option("--lr", opt.learning_rate, "Adam learning rate");
    cmd->add_option("--window", opt.window_length, "LSTM window length (samples)");
    cmd->add_option("--split", opt.train_fraction, "train fraction of the dataset");
}

mm::NetworkConfig make_config(const TrainOptions& opt, std::uint64_t seed) {
    mm::NetworkConfig cfg;
    cfg.architecture = mm::arch_from_name(opt.arch);
    cfg.neurons = opt.neurons;
    cfg.hidden_layers = opt.hidden_layers;
    cfg.epochs = opt.epochs;
    cfg.batch_size = opt.batch_size;
    cfg.learning_rate = opt.learning_rate;
    cfg.window_length = opt.window_length;
    cfg.train_fraction = opt.train_fraction;
    cfg.seed = seed;
    return cfg;
}

ordered_json config_json_from(const TrainOptions& opt) {
    ordered_json o;
    o["arch"] = opt.arch;
    o["neurons"] = opt.neurons;
    o["hidden_layers"] = opt.hidden_layers;
    o["epochs"] = opt.epochs;
    o["batch"] = opt.batch_size;
    o["lr"] = opt.learning_rate;
    o["window"] = opt.window_length;
    o["split"] = opt.train_fraction;
    return o;
}

// build/normalize/split used by every training-side command
struct SplitData {
    mm::Dataset train;
    mm::Dataset test;
};

SplitData load_split(const std::string& path, double fraction) {
    mm::Dataset d = mm::build_dataset(mm::read_aligned(path));
    auto [norm, params] = mm::normalize(d);
    auto [tr, te] = mm::split(norm, fraction);
    return {std::move(tr), std::move(te)};
}

std::vector<int> parse_int_list(const std::string& text, const char* what) {
    std::vector<int> out;
    std::string item;
    std::istringstream is(text);
    while (std::getline(is, item, ',')) {
        if (item.empty()) continue;
        try {
            out.push_back(std::stoi(item));
        } catch (const std::exception&) {
            throw mm::usage_error(std::string("cannot parse ") + what + " entry '" + item +
                                  "'");
        }
    }
    if (out.empty()) throw mm::usage_error(std::string(what) + " list is empty");
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hand/wrist motion to surgical tool state mapping toolkit"};
    app.require_subcommand(1);

    std::uint64_t seed = 0;
    int jobs = 1;
    app.add_option("--seed", seed, "seed for every random draw")->capture_default_str();
    app.add_option("--jobs", jobs, "parallel workers where supported")
        ->capture_default_str();
    // --seed/--jobs may follow the subcommand
    app.fallthrough();

    // generate
    auto* c_gen = app.add_subcommand("generate", "synthesize a raw sensor session");
    mm::SynthConfig syn;
    std::string gen_out;
    bool clean = false;
    c_gen->add_option("--duration", syn.duration_s, "session length, seconds")
        ->capture_default_str();
    c_gen->add_option("--rate", syn.rate_hz, "acquisition rate, Hz")->capture_default_str();
    c_gen->add_option("--imu-noise", syn.imu_noise_rad, "IMU jitter, radians")
        ->capture_default_str();
    c_gen->add_option("--strain-noise", syn.strain_noise_counts, "strain noise, counts")
        ->capture_default_str();
    c_gen->add_option("--tracker-pos-noise", syn.tracker_pos_noise_mm,
                      "tracker position noise, mm")
        ->capture_default_str();
    c_gen->add_option("--tracker-rot-noise", syn.tracker_rot_noise_deg,
                      "tracker orientation noise, degrees")
        ->capture_default_str();
    c_gen->add_option("--occlusion-rate", syn.occlusion_rate_hz,
                      "occlusion bursts per second")
        ->capture_default_str();
    c_gen->add_option("--occlusion-duration", syn.occlusion_duration_s,
                      "occlusion burst length, seconds")
        ->capture_default_str();
    c_gen->add_flag("--clean", clean, "zero every noise and occlusion setting");
    c_gen->add_option("-o,--output", gen_out, "output frame file (.jsonl)")->required();

    // preprocess
    auto* c_pre = app.add_subcommand("preprocess",
                                     "align, filter and resample a raw session");
    std::string pre_in, pre_out, pre_cal;
    double pre_rate = 30.0;
    double pre_window = 0.010;
    bool no_resample = false;
    c_pre->add_option("input", pre_in, "raw frame file")->required();
    c_pre->add_option("-o,--output", pre_out, "aligned-record output file")->required();
    c_pre->add_option("--cal", pre_cal, "jaw calibration file (default <input>.cal.json)");
    c_pre->add_option("--rate", pre_rate, "output sample rate, Hz")->capture_default_str();
    c_pre->add_option("--align-window", pre_window, "tracker pairing window, seconds")
        ->capture_default_str();
    c_pre->add_flag("--no-resample", no_resample, "keep the acquisition rate");

    // train
    auto* c_train = app.add_subcommand("train", "train a regressor on a dataset");
    std::string train_in, train_out;
    TrainOptions train_opt;
    c_train->add_option("input", train_in, "aligned-record dataset")->required();
    c_train->add_option("-o,--output", train_out, "model output file")->required();
    add_train_options(c_train, train_opt);

    // eval
    auto* c_eval = app.add_subcommand("eval", "evaluate a trained model");
    std::string eval_model, eval_in, eval_out, eval_csv;
    c_eval->add_option("model", eval_model, "model file")->required();
    c_eval->add_option("input", eval_in, "aligned-record dataset")->required();
    c_eval->add_option("-o,--output", eval_out, "metrics report JSON");
    c_eval->add_option("--csv", eval_csv, "also write the metrics as CSV");

    // importance
    auto* c_imp = app.add_subcommand("importance",
                                     "regression-tree feature importance (MDI)");
    std::string imp_in, imp_out, imp_csv;
    mm::TreeParams imp_params;
    int imp_trees = 1;
    double imp_split = 0.8;
    c_imp->add_option("input", imp_in, "aligned-record dataset")->required();
    c_imp->add_option("-o,--output", imp_out, "importance report JSON")->required();
    c_imp->add_option("--csv", imp_csv, "also write bar-chart CSV");
    c_imp->add_option("--depth", imp_params.max_depth, "tree depth limit")
        ->capture_default_str();
    c_imp->add_option("--min-leaf", imp_params.min_samples_leaf, "min samples per leaf")
        ->capture_default_str();
    c_imp->add_option("--trees", imp_trees, "bagged tree count (1 = single tree)")
        ->capture_default_str();
    c_imp->add_option("--split", imp_split, "train fraction used for fitting")
        ->capture_default_str();

    // pca
    auto* c_pca = app.add_subcommand("pca", "fit principal components of the inputs");
    std::string pca_in, pca_out;
    std::size_t pca_k = 5;
    double pca_split = 0.8;
    c_pca->add_option("input", pca_in, "aligned-record dataset")->required();
    c_pca->add_option("-o,--output", pca_out, "PCA model JSON")->required();
    c_pca->add_option("-k,--components", pca_k, "component count")->capture_default_str();
    c_pca->add_option("--split", pca_split, "train fraction used for fitting")
        ->capture_default_str();

    // sweep
    auto* c_sweep = app.add_subcommand("sweep", "architecture grid sweep");
    std::string sweep_in, sweep_out, sweep_csv;
    std::string n_list = "5,10,20,40,80", l_list = "1,2,3,4", arch_list = "dfnn";
    TrainOptions sweep_opt;
    c_sweep->add_option("input", sweep_in, "aligned-record dataset")->required();
    c_sweep->add_option("-o,--output", sweep_out, "sweep report JSON")->required();
    c_sweep->add_option("--csv", sweep_csv, "also write CSV");
    c_sweep->add_option("--n-list", n_list, "comma list of neuron counts")
        ->capture_default_str();
    c_sweep->add_option("--l-list", l_list, "comma list of layer counts")
        ->capture_default_str();
    c_sweep->add_option("--arch-list", arch_list, "comma list of architectures")
        ->capture_default_str();
    add_train_options(c_sweep, sweep_opt);

    // reduced
    auto* c_red = app.add_subcommand("reduced",
                                     "retrain both architectures on the top-k joints");
    std::string red_in, red_out;
    std::size_t red_k = 5;
    TrainOptions red_opt;
    mm::TreeParams red_params;
    c_red->add_option("input", red_in, "aligned-record dataset")->required();
    c_red->add_option("-o,--output", red_out, "experiment report JSON")->required();
    c_red->add_option("-k,--features", red_k, "joint count to keep")->capture_default_str();
    add_train_options(c_red, red_opt);

    // pca experiment is part of `pca`? no: dedicated flag on reduced? keep
    // a separate subcommand for the PCA retraining experiment
    auto* c_pcaexp = app.add_subcommand("pca-experiment",
                                        "retrain both architectures on k components");
    std::string pcaexp_in, pcaexp_out;
    std::size_t pcaexp_k = 5;
    TrainOptions pcaexp_opt;
    c_pcaexp->add_option("input", pcaexp_in, "aligned-record dataset")->required();
    c_pcaexp->add_option("-o,--output", pcaexp_out, "experiment report JSON")->required();
    c_pcaexp->add_option("-k,--components", pcaexp_k, "component count")
        ->capture_default_str();
    add_train_options(c_pcaexp, pcaexp_opt);

    // predict
    auto* c_pred = app.add_subcommand("predict", "stream tool states from raw frames");
    std::string pred_model, pred_in, pred_out;
    c_pred->add_option("model", pred_model, "model file")->required();
    c_pred->add_option("--input", pred_in, "raw frame file")->required();
    c_pred->add_option("-o,--output", pred_out, "tool-state output (.jsonl)")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    ManifestInfo manifest;
    manifest.seed = seed;
    for (int i = 0; i < argc; ++i) manifest.argv.emplace_back(argv[i]);
    const auto t_start = std::chrono::steady_clock::now();

    try {
        if (c_gen->parsed()) {
            manifest.command = "generate";
            if (clean) {
                syn.imu_noise_rad = 0.0;
                syn.strain_noise_counts = 0.0;
                syn.tracker_pos_noise_mm = 0.0;
                syn.tracker_rot_noise_deg = 0.0;
                syn.occlusion_rate_hz = 0.0;
            }
            syn.seed = seed;
            manifest.outputs = {gen_out, truth_path_for(gen_out), cal_path_for(gen_out)};
            manifest.config["duration"] = syn.duration_s;
            manifest.config["rate"] = syn.rate_hz;
            manifest.config["imu_noise"] = syn.imu_noise_rad;
            manifest.config["strain_noise"] = syn.strain_noise_counts;
            manifest.config["tracker_pos_noise"] = syn.tracker_pos_noise_mm;
            manifest.config["tracker_rot_noise"] = syn.tracker_rot_noise_deg;
            manifest.config["occlusion_rate"] = syn.occlusion_rate_hz;
            manifest.config["occlusion_duration"] = syn.occlusion_duration_s;
            const mm::SynthSession session = mm::generate_session(syn);
            mm::write_session(session, gen_out);
            mm::log_info("generated " + std::to_string(session.frames.size()) + " frames");
        } else if (c_pre->parsed()) {
            manifest.command = "preprocess";
            manifest.inputs = {pre_in};
            manifest.outputs = {pre_out};
            mm::JawCalibration cal;
            std::string cal_path = pre_cal;
            if (cal_path.empty()) {
                const std::string candidate = cal_path_for(pre_in);
                if (std::filesystem::exists(candidate)) cal_path = candidate;
            }
            if (!cal_path.empty()) {
                cal = mm::load_calibration(cal_path);
                manifest.inputs.push_back(cal_path);
            }
            manifest.config["rate"] = no_resample ? 0.0 : pre_rate;
            manifest.config["align_window"] = pre_window;
            const mm::FrameReadResult raw = mm::read_frames(pre_in);
            if (raw.frames.empty()) throw mm::data_error("no valid frames in " + pre_in);
            const auto tracker = mm::extract_tracker_stream(raw.frames);
            const auto aligned = mm::align_streams(raw.frames, tracker, cal, pre_window);
            const mm::FilterResult filtered = mm::filter_incomplete(aligned);
            if (filtered.records.empty())
                throw mm::data_error("every record incomplete after alignment");
            std::vector<mm::AlignedRecord> final_records =
                no_resample ? filtered.records : mm::resample(filtered.records, pre_rate);
            mm::write_aligned(final_records, pre_out);
            manifest.timing["frames_read"] = raw.frames.size();
            manifest.timing["lines_rejected"] = raw.rejected_lines;
            manifest.timing["records_dropped"] = filtered.dropped;
            manifest.timing["records_out"] = final_records.size();
            mm::log_info("preprocess: " + std::to_string(final_records.size()) +
                         " records (" + std::to_string(filtered.dropped) + " dropped)");
        } else if (c_train->parsed()) {
            manifest.command = "train";
            manifest.inputs = {train_in};
            manifest.outputs = {train_out};
            manifest.config = config_json_from(train_opt);
            const mm::NetworkConfig cfg = make_config(train_opt, seed);
            SplitData data = load_split(train_in, cfg.train_fraction);
            mm::TrainedModel model = mm::train(mm::init_network(cfg), data.train, data.test);
            mm::save_model(model, train_out);
            manifest.timing["train_seconds"] = model.train_wall_seconds;
            if (!model.history.test_mse.empty())
                mm::log_info("final test mse " +
                             std::to_string(model.history.test_mse.back()));
        } else if (c_eval->parsed()) {
            manifest.command = "eval";
            manifest.inputs = {eval_model, eval_in};
            const mm::TrainedModel model = mm::load_model(eval_model);
            if (!model.trained()) throw mm::data_error("model has no normalization data");
            mm::Dataset d = mm::build_dataset(mm::read_aligned(eval_in));
            mm::Dataset normed = mm::normalize_with(d, *model.norm);
            auto [tr, te] = mm::split(normed, model.config.train_fraction);
            const mm::MetricsReport report = mm::evaluate_model(model, tr, te);
            std::cout << mm::format_metrics_table(report);
            if (!eval_out.empty()) {
                manifest.outputs = {eval_out};
                mm::save_metrics_report(report, eval_out);
            }
            if (!eval_csv.empty()) {
                manifest.outputs.push_back(eval_csv);
                mm::save_metrics_csv(report, eval_csv);
            }
        } else if (c_imp->parsed()) {
            manifest.command = "importance";
            manifest.inputs = {imp_in};
            manifest.outputs = {imp_out};
            manifest.config["depth"] = imp_params.max_depth;
            manifest.config["min_leaf"] = imp_params.min_samples_leaf;
            manifest.config["trees"] = imp_trees;
            SplitData data = load_split(imp_in, imp_split);
            const mm::ImportanceReport report =
                mm::compute_importance(data.train, imp_params, imp_trees, seed);
            mm::save_importance_report(report, imp_out);
            if (!imp_csv.empty()) {
                mm::save_importance_csv(report, imp_csv);
                manifest.outputs.push_back(imp_csv);
            }
        } else if (c_pca->parsed()) {
            manifest.command = "pca";
            manifest.inputs = {pca_in};
            manifest.outputs = {pca_out};
            manifest.config["k"] = pca_k;
            SplitData data = load_split(pca_in, pca_split);
            const mm::PcaModel model = mm::pca_fit(data.train.inputs, pca_k);
            mm::save_pca_model(model, pca_out);
        } else if (c_sweep->parsed()) {
            manifest.command = "sweep";
            manifest.inputs = {sweep_in};
            manifest.outputs = {sweep_out};
            manifest.config = config_json_from(sweep_opt);
            manifest.config["n_list"] = n_list;
            manifest.config["l_list"] = l_list;
            manifest.config["arch_list"] = arch_list;
            const std::vector<int> ns = parse_int_list(n_list, "--n-list");
            const std::vector<int> ls = parse_int_list(l_list, "--l-list");
            std::vector<mm::Arch> archs;
            {
                std::istringstream is(arch_list);
                std::string item;
                while (std::getline(is, item, ','))
                    if (!item.empty()) archs.push_back(mm::arch_from_name(item));
                if (archs.empty()) throw mm::usage_error("--arch-list is empty");
            }
            const mm::NetworkConfig cfg = make_config(sweep_opt, seed);
            SplitData data = load_split(sweep_in, cfg.train_fraction);
            const mm::SweepReport report =
                mm::sweep(ns, ls, archs, data.train, data.test, cfg, jobs);
            mm::save_sweep_report(report, sweep_out);
            if (!sweep_csv.empty()) {
                mm::save_sweep_csv(report, sweep_csv);
                manifest.outputs.push_back(sweep_csv);
            }
        } else if (c_red->parsed()) {
            manifest.command = "reduced";
            manifest.inputs = {red_in};
            manifest.outputs = {red_out};
            manifest.config = config_json_from(red_opt);
            manifest.config["k"] = red_k;
            const mm::NetworkConfig cfg = make_config(red_opt, seed);
            SplitData data = load_split(red_in, cfg.train_fraction);
            const mm::ImportanceReport imp = mm::compute_importance(data.train, red_params);
            const std::vector<std::size_t> top = mm::top_k_features(imp, red_k);
            const mm::ExperimentReport report =
                mm::reduced_input_experiment(data.train, data.test, top, cfg);
            std::vector<std::string> names;
            for (std::size_t idx : top) names.push_back(imp.feature_names[idx]);
            mm::save_experiment_report(report, red_out, names);
        } else if (c_pcaexp->parsed()) {
            manifest.command = "pca-experiment";
            manifest.inputs = {pcaexp_in};
            manifest.outputs = {pcaexp_out};
            manifest.config = config_json_from(pcaexp_opt);
            manifest.config["k"] = pcaexp_k;
            const mm::NetworkConfig cfg = make_config(pcaexp_opt, seed);
            SplitData data = load_split(pcaexp_in, cfg.train_fraction);
            const mm::PcaExperimentReport report =
                mm::pca_experiment(data.train, data.test, pcaexp_k, cfg);
            mm::save_experiment_report(report.metrics, pcaexp_out);
        } else if (c_pred->parsed()) {
            manifest.command = "predict";
            manifest.inputs = {pred_model, pred_in};
            manifest.outputs = {pred_out};
            const mm::TrainedModel model = mm::load_model(pred_model);
            const mm::FrameReadResult raw = mm::read_frames(pred_in);
            if (raw.frames.empty()) throw mm::data_error("no valid frames in " + pred_in);
            mm::StreamPredictor predictor(model);
            std::ofstream out(pred_out);
            if (!out) throw mm::io_error("cannot write predictions: " + pred_out);
            std::vector<double> frame_ms;
            frame_ms.reserve(raw.frames.size());
            for (const auto& frame : raw.frames) {
                const auto f0 = std::chrono::steady_clock::now();
                const mm::JointAngleVector joints =
                    mm::joint_angles_from_chain(frame.imu_quats);
                const mm::ToolState state = predictor.push(joints);
                const auto f1 = std::chrono::steady_clock::now();
                frame_ms.push_back(
                    std::chrono::duration<double, std::milli>(f1 - f0).count());
                ordered_json o;
                o["t"] = frame.timestamp;
                o["phi"] = state.phi;
                o["theta"] = state.theta;
                o["psi"] = state.psi;
                o["jaw"] = state.jaw;
                out << o.dump() << "\n";
            }
            std::vector<double> sorted = frame_ms;
            std::sort(sorted.begin(), sorted.end());
            auto pct = [&](double p) {
                const std::size_t i = static_cast<std::size_t>(
                    p * static_cast<double>(sorted.size() - 1) + 0.5);
                return sorted[std::min(i, sorted.size() - 1)];
            };
            manifest.timing["frames"] = sorted.size();
            manifest.timing["per_frame_p50_ms"] = pct(0.50);
            manifest.timing["per_frame_p99_ms"] = pct(0.99);
            manifest.timing["per_frame_max_ms"] = sorted.back();
        }

        manifest.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
                .count();
        manifest.exit_status = 0;
        write_manifest(manifest);
        return 0;
    } catch (const mm::usage_error& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        manifest.exit_status = 2;
    } catch (const mm::io_error& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        manifest.exit_status = 3;
    } catch (const mm::data_error& e) {
        std::cerr << "data error: " << e.what() << "\n";
        manifest.exit_status = 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        manifest.exit_status = 4;
    }
    manifest.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    write_manifest(manifest);
    return manifest.exit_status;
}
