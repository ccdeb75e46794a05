#include "motionmap/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "motionmap/common.hpp"

namespace motionmap {

namespace {

constexpr double kTwoPi = 6.28318530717958647692;

// random Fourier series with unit RMS; band-limited and evaluable at
// any t, so the same trajectory serves the 50 Hz frames and the truth
struct FourierSignal {
    std::vector<double> freq, amp, phase;
    double scale = 1.0;

    static FourierSignal make(Rng& rng, int terms, double f_lo, double f_hi) {
        FourierSignal s;
        s.freq.reserve(static_cast<std::size_t>(terms));
        double power = 0.0;
        for (int i = 0; i < terms; ++i) {
            s.freq.push_back(rng.uniform(f_lo, f_hi));
            s.amp.push_back(rng.uniform(0.5, 1.0));
            s.phase.push_back(rng.uniform(0.0, kTwoPi));
            power += s.amp.back() * s.amp.back();
        }
        s.scale = 1.0 / std::sqrt(0.5 * power);
        return s;
    }

    double eval(double t) const {
        double v = 0.0;
        for (std::size_t i = 0; i < freq.size(); ++i)
            v += amp[i] * std::cos(kTwoPi * freq[i] * t + phase[i]);
        return scale * v;
    }
};

// shared synergy loadings: five band-limited latents drive the joints,
// plus one independent component per joint. mf_j2 is deliberately
// synergy-free so the oracle's zero coefficient leaves it uncorrelated
// with every target.
struct JointMix {
    double synergy[5];
    double indep;
};

// No irrelevant joint loads on two latents that drive the same output;
// a proxy spanning an output's argument pair would otherwise align with
// the output better than any single argument and distort the greedy
// importance ranking.
constexpr JointMix kJointMix[15] = {
    {{0.00, 0.00, 0.15, 0.00, 0.79}, 0.06},  // ff_j1
    {{0.00, 0.00, 0.73, 0.00, 0.00}, 0.27},  // ff_j2
    {{0.00, 0.00, 0.93, 0.00, 0.00}, 0.07},  // ff_j3
    {{0.00, 0.00, 0.75, 0.00, 0.00}, 0.25},  // ff_j4
    {{0.00, 0.20, 0.00, 0.00, 0.55}, 0.25},  // mf_j1
    {{0.00, 0.00, 0.00, 0.00, 0.00}, 1.00},  // mf_j2
    {{0.00, 0.00, 0.70, 0.00, 0.00}, 0.30},  // mf_j3
    {{0.00, 0.65, 0.00, 0.00, 0.00}, 0.35},  // mf_j4
    {{0.70, 0.00, 0.00, 0.00, 0.00}, 0.30},  // th_j1
    {{0.93, 0.00, 0.00, 0.00, 0.00}, 0.07},  // th_j2
    {{0.00, 0.72, 0.00, 0.00, 0.00}, 0.28},  // th_j3
    {{0.00, 0.93, 0.00, 0.00, 0.00}, 0.07},  // th_j4
    {{0.00, 0.63, 0.00, 0.00, 0.00}, 0.37},  // th_j5
    {{0.00, 0.00, 0.20, 0.60, 0.00}, 0.20},  // wr_j1
    {{0.00, 0.00, 0.12, 0.82, 0.00}, 0.06},  // wr_j2
};

Quaternion small_rotation(Rng& rng, double sigma_rad) {
    double ax = rng.normal(), ay = rng.normal(), az = rng.normal();
    const double n = std::sqrt(ax * ax + ay * ay + az * az);
    if (n < 1e-12) {
        ax = 1.0;
        ay = az = 0.0;
    } else {
        ax /= n;
        ay /= n;
        az /= n;
    }
    const double half = 0.5 * rng.normal() * sigma_rad;
    const double s = std::sin(half);
    return {ax * s, ay * s, az * s, std::cos(half)};
}

Pose compose(const Pose& a, const Pose& b) {
    Pose out;
    const Vec3 rp = rotate(a.orientation, b.position);
    out.position = {a.position.x + rp.x, a.position.y + rp.y, a.position.z + rp.z};
    out.orientation = quat_multiply(a.orientation, b.orientation);
    return out;
}

}  // namespace

OracleMap OracleMap::default_map() {
    OracleMap m;
    const double centers[15] = {45, 0, 55, 40, 45, 0, 55, 40, 20, 0, 0, 30, 40, 0, 0};
    const double halves[15] = {45, 20, 55, 40, 45, 20, 55, 40, 30, 30, 30, 30, 40, 60, 30};
    for (std::size_t i = 0; i < 15; ++i) {
        m.center_deg[i] = centers[i];
        m.halfrange_deg[i] = halves[i];
    }
    // jaw driven by th_j2 (9), th_j4 (11), ff_j3 (2); orientation by
    // th_j2, wr_j2 (14), ff_j1 (0). Every other joint carries a small
    // secondary coefficient (whole-hand micro-involvement) except mf_j2,
    // whose coefficient is exactly zero in every output.
    m.jaw = {15.0,
             15.0,
             {{9, -1, 1.05},
              {11, -1, 0.85},
              {2, -1, 0.95},
              {9, 11, 0.2},
              {0, -1, 0.10},
              {1, -1, 0.12},
              {3, -1, 0.15},
              {4, -1, 0.10},
              {6, -1, 0.12},
              {7, -1, 0.10},
              {8, -1, 0.12},
              {10, -1, 0.12},
              {12, -1, 0.10},
              {13, -1, 0.10},
              {14, -1, 0.10}}};
    m.phi = {0.0,
             35.0,
             {{9, -1, 0.9},
              {14, -1, 0.85},
              {9, 14, 0.15},
              {8, -1, 0.12},
              {13, -1, 0.15},
              {0, -1, 0.10},
              {4, -1, 0.08},
              {10, -1, 0.08},
              {1, -1, 0.06}}};
    m.theta = {0.0,
               28.0,
               {{14, -1, 0.9},
                {0, -1, 0.75},
                {0, 14, -0.12},
                {13, -1, 0.15},
                {4, -1, 0.10},
                {1, -1, 0.10},
                {3, -1, 0.08},
                {12, -1, 0.08},
                {7, -1, 0.06}}};
    m.psi = {0.0,
             45.0,
             {{0, -1, 0.85},
              {9, -1, 0.8},
              {0, 9, 0.15},
              {8, -1, 0.12},
              {1, -1, 0.10},
              {4, -1, 0.08},
              {10, -1, 0.10},
              {6, -1, 0.06},
              {12, -1, 0.06}}};
    return m;
}

double OracleMap::lipschitz_bound() const {
    double worst = 0.0;
    for (const OracleOutput* out : {&phi, &theta, &psi, &jaw}) {
        for (std::size_t joint = 0; joint < 15; ++joint) {
            double coeff_sum = 0.0;
            for (const auto& term : out->terms)
                if (term.a == static_cast<int>(joint) || term.b == static_cast<int>(joint))
                    coeff_sum += std::abs(term.coeff);
            worst = std::max(worst,
                             std::abs(out->scale) * coeff_sum / halfrange_deg[joint]);
        }
    }
    return worst;
}

ToolState oracle_eval(const JointAngleVector& joints, const OracleMap& oracle) {
    std::array<double, 15> s;
    for (std::size_t i = 0; i < 15; ++i)
        s[i] = (joints[i] - oracle.center_deg[i]) / oracle.halfrange_deg[i];

    auto eval_output = [&](const OracleOutput& out) {
        double acc = 0.0;
        for (const auto& term : out.terms) {
            double v = term.coeff * s[static_cast<std::size_t>(term.a)];
            if (term.b >= 0) v *= s[static_cast<std::size_t>(term.b)];
            acc += v;
        }
        return out.offset + out.scale * std::tanh(acc);
    };

    ToolState t;
    t.phi = eval_output(oracle.phi);
    t.theta = eval_output(oracle.theta);
    t.psi = eval_output(oracle.psi);
    t.jaw = std::clamp(eval_output(oracle.jaw), 0.0, 30.0);
    return t;
}

void SynthConfig::validate() const {
    if (!(duration_s > 0.0)) throw data_error("synth: duration must be positive");
    if (!(rate_hz > 0.0)) throw data_error("synth: rate must be positive");
    if (fourier_terms < 1) throw data_error("synth: fourier_terms must be >= 1");
    if (!(latent_cutoff_hz > 0.0)) throw data_error("synth: cutoff must be positive");
    if (imu_noise_rad < 0.0 || strain_noise_counts < 0.0 || tracker_pos_noise_mm < 0.0 ||
        tracker_rot_noise_deg < 0.0 || occlusion_rate_hz < 0.0 || occlusion_duration_s < 0.0)
        throw data_error("synth: noise levels must be non-negative");
    if (cal.raw_open == cal.raw_closed)
        throw data_error("synth: calibration raw_open equals raw_closed");
    for (std::size_t i = 0; i < 15; ++i)
        if (!(oracle.halfrange_deg[i] > 0.0))
            throw data_error("synth: oracle halfrange must be positive");
}

SynthSession generate_session(const SynthConfig& cfg) {
    cfg.validate();

    // independent sub-streams so toggling one noise source never shifts
    // another's draws
    std::array<FourierSignal, 5> synergies;
    for (std::size_t k = 0; k < 5; ++k) {
        Rng rng(mix_seed(cfg.seed, 1 + k));
        synergies[k] = FourierSignal::make(rng, cfg.fourier_terms, 0.05, cfg.latent_cutoff_hz);
    }
    std::array<FourierSignal, 15> indep;
    for (std::size_t i = 0; i < 15; ++i) {
        Rng rng(mix_seed(cfg.seed, 100 + i));
        // mf_j2 is the task-uncoupled joint: its incidental motion sits in
        // a higher band, where it keeps revisiting its range instead of
        // drifting with the slow task synergies
        const double lo = i == 5 ? cfg.latent_cutoff_hz : 0.05;
        const double hi = i == 5 ? 2.5 * cfg.latent_cutoff_hz : cfg.latent_cutoff_hz;
        indep[i] = FourierSignal::make(rng, cfg.fourier_terms, lo, hi);
    }

    const double slow_hi = std::min(0.5, cfg.latent_cutoff_hz);
    auto slow_signal = [&](std::uint64_t salt) {
        Rng rng(mix_seed(cfg.seed, salt));
        return FourierSignal::make(rng, cfg.fourier_terms, 0.02, slow_hi);
    };
    std::array<FourierSignal, 3> wrist_pos = {slow_signal(200), slow_signal(201),
                                              slow_signal(202)};
    std::array<FourierSignal, 3> wrist_ori = {slow_signal(210), slow_signal(211),
                                              slow_signal(212)};
    std::array<FourierSignal, 3> base_ori = {slow_signal(220), slow_signal(221),
                                             slow_signal(222)};
    std::array<FourierSignal, 3> tool_pos = {slow_signal(230), slow_signal(231),
                                             slow_signal(232)};

    Rng imu_rng(mix_seed(cfg.seed, 300));
    Rng strain_rng(mix_seed(cfg.seed, 301));
    Rng tracker_rng(mix_seed(cfg.seed, 302));

    // occlusion bursts: exponential gaps between bursts of fixed duration
    std::vector<std::pair<double, double>> bursts;
    if (cfg.occlusion_rate_hz > 0.0 && cfg.occlusion_duration_s > 0.0) {
        Rng occ_rng(mix_seed(cfg.seed, 303));
        double t = 0.0;
        while (true) {
            double u = occ_rng.uniform();
            while (u == 0.0) u = occ_rng.uniform();
            t += -std::log(u) / cfg.occlusion_rate_hz;
            if (t > cfg.duration_s) break;
            bursts.emplace_back(t, t + cfg.occlusion_duration_s);
            t += cfg.occlusion_duration_s;
        }
    }

    const std::size_t n_frames =
        static_cast<std::size_t>(std::floor(cfg.duration_s * cfg.rate_hz + 1e-9)) + 1;
    const double dt = 1.0 / cfg.rate_hz;

    SynthSession session;
    session.cal = cfg.cal;
    session.frames.reserve(n_frames);
    session.truth.reserve(n_frames);

    std::size_t burst_cursor = 0;
    const double jaw_span = JawCalibration::angle_open - JawCalibration::angle_closed;

    for (std::size_t k = 0; k < n_frames; ++k) {
        const double t = static_cast<double>(k) * dt;

        JointAngleVector joints;
        for (std::size_t i = 0; i < 15; ++i) {
            double u = kJointMix[i].indep * std::tanh(indep[i].eval(t));
            for (std::size_t z = 0; z < 5; ++z)
                if (kJointMix[i].synergy[z] != 0.0)
                    u += kJointMix[i].synergy[z] * std::tanh(synergies[z].eval(t));
            joints[i] = cfg.oracle.center_deg[i] + cfg.oracle.halfrange_deg[i] * u;
        }
        const ToolState truth_state = oracle_eval(joints, cfg.oracle);
        session.truth.push_back({t, joints, truth_state, true});

        // sensor chain built forward from the joint angles; extraction
        // inverts it pairwise
        std::array<Quaternion, 12> s;
        s[0] = euler_to_quat({12.0 * std::tanh(base_ori[0].eval(t)),
                              10.0 * std::tanh(base_ori[1].eval(t)),
                              18.0 * std::tanh(base_ori[2].eval(t)), false});
        auto attach = [&](int child, int parent, double roll, double pitch, double yaw) {
            s[child] = quat_multiply(euler_to_quat({roll, pitch, yaw, false}), s[parent]);
        };
        attach(1, 0, 0.0, joints[14], joints[13]);   // wrist
        attach(2, 1, 0.0, joints[1], joints[0]);     // ff MCP
        attach(3, 2, 0.0, 0.0, joints[2]);           // ff PIP
        attach(4, 3, 0.0, 0.0, joints[3]);           // ff DIP
        attach(5, 1, 0.0, joints[5], joints[4]);     // mf MCP
        attach(6, 5, 0.0, 0.0, joints[6]);           // mf PIP
        attach(7, 6, 0.0, 0.0, joints[7]);           // mf DIP
        attach(11, 1, 0.0, 0.0, joints[10]);         // thumb base
        attach(8, 11, 0.0, joints[9], joints[8]);    // th CMC
        attach(9, 8, 0.0, 0.0, joints[11]);          // th MCP
        attach(10, 9, 0.0, 0.0, joints[12]);         // th IP

        SensorFrame frame;
        frame.timestamp = t;
        if (cfg.imu_noise_rad > 0.0) {
            for (std::size_t i = 0; i < 12; ++i)
                frame.imu_quats[i] =
                    quat_multiply(s[i], small_rotation(imu_rng, cfg.imu_noise_rad))
                        .normalized();
        } else {
            frame.imu_quats = s;
        }

        double raw_real = static_cast<double>(cfg.cal.raw_closed) +
                          (truth_state.jaw / jaw_span) *
                              static_cast<double>(cfg.cal.raw_open - cfg.cal.raw_closed);
        if (cfg.strain_noise_counts > 0.0)
            raw_real += strain_rng.normal() * cfg.strain_noise_counts;
        frame.strain_raw = std::llround(raw_real);

        while (burst_cursor < bursts.size() && bursts[burst_cursor].second < t)
            ++burst_cursor;
        const bool occluded = burst_cursor < bursts.size() &&
                              t >= bursts[burst_cursor].first &&
                              t < bursts[burst_cursor].second;
        if (!occluded) {
            Pose wrist;
            wrist.position = {35.0 * std::tanh(wrist_pos[0].eval(t)),
                              35.0 * std::tanh(wrist_pos[1].eval(t)),
                              -400.0 + 30.0 * std::tanh(wrist_pos[2].eval(t))};
            wrist.orientation = euler_to_quat({12.0 * std::tanh(wrist_ori[0].eval(t)),
                                               10.0 * std::tanh(wrist_ori[1].eval(t)),
                                               15.0 * std::tanh(wrist_ori[2].eval(t)), false});
            Pose tool_rel;
            tool_rel.position = {120.0 + 4.0 * std::tanh(tool_pos[0].eval(t)),
                                 4.0 * std::tanh(tool_pos[1].eval(t)),
                                 4.0 * std::tanh(tool_pos[2].eval(t))};
            tool_rel.orientation = euler_to_quat(
                {truth_state.phi, truth_state.theta, truth_state.psi, false});
            Pose tool = compose(wrist, tool_rel);

            if (cfg.tracker_pos_noise_mm > 0.0 || cfg.tracker_rot_noise_deg > 0.0) {
                const double rot_sigma = cfg.tracker_rot_noise_deg * 3.14159265358979324 / 180.0;
                for (Pose* pose : {&wrist, &tool}) {
                    pose->position.x += tracker_rng.normal() * cfg.tracker_pos_noise_mm;
                    pose->position.y += tracker_rng.normal() * cfg.tracker_pos_noise_mm;
                    pose->position.z += tracker_rng.normal() * cfg.tracker_pos_noise_mm;
                    pose->orientation =
                        quat_multiply(pose->orientation, small_rotation(tracker_rng, rot_sigma))
                            .normalized();
                }
            }
            frame.wrist_pose_camera = wrist;
            frame.tool_pose_camera = tool;
        }
        session.frames.push_back(std::move(frame));
    }
    return session;
}

void write_session(const SynthSession& session, const std::string& frames_path) {
    write_frames(session.frames, frames_path);
    std::filesystem::path stem(frames_path);
    stem.replace_extension("");
    write_aligned(session.truth, stem.string() + ".truth.jsonl");
    save_calibration(session.cal, stem.string() + ".cal.json");
}

}  // namespace motionmap
