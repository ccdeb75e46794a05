#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "motionmap/sensor_io.hpp"

namespace motionmap {

// Ground-truth mapping from the 15 joint angles to the tool state. Each
// output is offset + scale * tanh(sum of terms), a term being
// coeff * s_a or coeff * s_a * s_b, where s_i is the joint angle scaled
// by its center/halfrange to roughly [-1, 1]. Smooth and Lipschitz:
// |d out / d joint_i| <= |scale| * sum |coeff over terms touching i| /
// halfrange_i, see lipschitz_bound().
struct OracleTerm {
    int a = -1;
    int b = -1;  // -1: linear term
    double coeff = 0.0;
};

struct OracleOutput {
    double offset = 0.0;
    double scale = 1.0;
    std::vector<OracleTerm> terms;
};

struct OracleMap {
    std::array<double, 15> center_deg{};
    std::array<double, 15> halfrange_deg{};
    OracleOutput phi, theta, psi, jaw;

    static OracleMap default_map();
    double lipschitz_bound() const;  // max over joints, degrees out per degree in
};

ToolState oracle_eval(const JointAngleVector& joints, const OracleMap& oracle);

struct SynthConfig {
    double duration_s = 334.0;
    double rate_hz = 50.0;
    std::uint64_t seed = 0;

    // band-limited motion model: five shared synergy signals plus one
    // independent component per joint, each a random Fourier series
    double latent_cutoff_hz = 2.0;
    int fourier_terms = 24;

    // noise and dropout
    double imu_noise_rad = 0.05;         // per-sensor orientation jitter
    double strain_noise_counts = 100000.0;
    double tracker_pos_noise_mm = 0.5;
    double tracker_rot_noise_deg = 0.5;
    double occlusion_rate_hz = 0.0;      // burst arrivals per second
    double occlusion_duration_s = 0.2;

    JawCalibration cal;
    OracleMap oracle = OracleMap::default_map();

    void validate() const;
};

struct SynthSession {
    std::vector<SensorFrame> frames;
    std::vector<AlignedRecord> truth;  // clean joints + oracle targets per frame
    JawCalibration cal;
};

// Deterministic per seed. Frames carry the sensor-chain quaternions that
// invert joint_angles_from_chain, strain counts that invert
// jaw_from_strain, and tool/wrist camera poses whose wrist-relative
// orientation is the oracle output (tracker fields omitted during
// occlusion bursts).
SynthSession generate_session(const SynthConfig& cfg);

// Writes <out> frames, <stem>.truth.jsonl, <stem>.cal.json.
void write_session(const SynthSession& session, const std::string& frames_path);

}  // namespace motionmap
