#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "motionmap/quat.hpp"

namespace motionmap {

// Surgical tool state relative to the wrist: orientation in degrees
// (intrinsic yaw-pitch-roll) plus jaw opening in [0, 30] degrees.
struct ToolState {
    double phi = 0.0;    // roll
    double theta = 0.0;  // pitch
    double psi = 0.0;    // yaw
    double jaw = 0.0;
};

// One raw acquisition frame: 12 IMU orientations, a strain-gauge count,
// and (when the optical tracker saw the markers) tool/wrist poses.
struct SensorFrame {
    double timestamp = 0.0;  // seconds, monotonic within a stream
    std::array<Quaternion, 12> imu_quats{};
    std::int64_t strain_raw = 0;
    std::optional<Pose> tool_pose_camera;
    std::optional<Pose> wrist_pose_camera;
};

// Two-point strain calibration: fully open maps to 30 degrees, fully
// closed to 0.
struct JawCalibration {
    std::int64_t raw_open = 8000000;
    std::int64_t raw_closed = -8000000;
    static constexpr double angle_open = 30.0;
    static constexpr double angle_closed = 0.0;
};

struct AlignedRecord {
    double timestamp = 0.0;
    JointAngleVector joint_angles;
    ToolState tool_state;
    bool complete = false;
};

// Tracker sample pulled out of the frame stream (both poses observed).
struct TrackerRecord {
    double timestamp = 0.0;
    Pose tool;
    Pose wrist;
};

// One newline-delimited JSON frame. Throws data_error naming the field
// on schema violations; IMU/pose quaternions with |norm - 1| <= 1e-3 are
// renormalized, anything farther off is rejected.
SensorFrame parse_frame(const std::string& line);
std::string serialize_frame(const SensorFrame& frame);

JawCalibration load_calibration(const std::string& path);
void save_calibration(const JawCalibration& cal, const std::string& path);

// Linear two-point map, clamped to [0, 30] degrees.
double jaw_from_strain(std::int64_t raw, const JawCalibration& cal);

struct FrameReadResult {
    std::vector<SensorFrame> frames;
    std::size_t rejected_lines = 0;
};

// Reads a frame-per-line file; malformed lines are counted, not fatal.
FrameReadResult read_frames(const std::string& path);
void write_frames(const std::vector<SensorFrame>& frames, const std::string& path);

std::vector<TrackerRecord> extract_tracker_stream(const std::vector<SensorFrame>& frames);

// Pairs every IMU frame with the nearest tracker record within
// +/- window_s (default half a 50 Hz frame period); frames without a
// partner come back incomplete. Joint angles come from the IMU chain,
// jaw from the strain count, orientation from the wrist-relative pose.
std::vector<AlignedRecord> align_streams(const std::vector<SensorFrame>& frames,
                                         const std::vector<TrackerRecord>& tracker,
                                         const JawCalibration& cal,
                                         double window_s = 0.010);

struct FilterResult {
    std::vector<AlignedRecord> records;
    std::size_t dropped = 0;
};

FilterResult filter_incomplete(const std::vector<AlignedRecord>& records);

// Uniform grid at rate_hz from the first timestamp, linear interpolation
// on the unwrapped angle axis, no extrapolation past the last record.
std::vector<AlignedRecord> resample(const std::vector<AlignedRecord>& records,
                                    double rate_hz);

std::vector<AlignedRecord> read_aligned(const std::string& path);
void write_aligned(const std::vector<AlignedRecord>& records, const std::string& path);

}  // namespace motionmap
