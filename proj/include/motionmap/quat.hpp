#pragma once

#include <array>
#include <cstddef>
#include <string>

namespace motionmap {

// Component order (x, y, z, w) throughout; w is the scalar part.
struct Quaternion {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;
    double w = 1.0;

    double norm() const;
    Quaternion normalized() const;
    bool is_finite() const;
};

inline Quaternion quat_identity() { return {0.0, 0.0, 0.0, 1.0}; }

// Intrinsic yaw-pitch-roll (Z-Y'-X''), degrees. pitch in [-90, 90],
// roll/yaw in (-180, 180]. gimbal_lock marks |pitch| > 89.99 deg, where
// roll is forced to 0 and its freedom folded into yaw.
struct EulerAngles {
    double roll = 0.0;
    double pitch = 0.0;
    double yaw = 0.0;
    bool gimbal_lock = false;
};

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;
};

// position in millimeters, orientation unit-norm
struct Pose {
    Vec3 position;
    Quaternion orientation;
};

// The 15 hand/wrist joint angles, degrees, in the fixed input order:
// ff_j1..ff_j4, mf_j1..mf_j4, th_j1..th_j5, wr_j1, wr_j2.
struct JointAngleVector {
    std::array<double, 15> angles{};

    double& operator[](std::size_t i) { return angles[i]; }
    double operator[](std::size_t i) const { return angles[i]; }

    static constexpr std::size_t size() { return 15; }
    static const std::array<std::string, 15>& names();
    static std::size_t index_of(const std::string& name);
};

// Hamilton product a (x) b. Inputs must be finite; unit-norm is a
// documented precondition, not a runtime check.
Quaternion quat_multiply(const Quaternion& a, const Quaternion& b);

// Relative-rotation inverse written as w-negation. For unit quaternions
// this is the standard conjugate up to overall sign, i.e. the same
// rotation; it is not an inverse for non-unit inputs.
Quaternion quat_conjugate(const Quaternion& q);

// q1 (x) conjugate(q0): rotation of q1 expressed relative to q0.
Quaternion relative_quat(const Quaternion& q0, const Quaternion& q1);

EulerAngles quat_to_euler(const Quaternion& q);
Quaternion euler_to_quat(const EulerAngles& e);

// v rotated by unit quaternion q
Vec3 rotate(const Quaternion& q, const Vec3& v);

// 12 sensor orientations -> 15 joint angles. Sensor order: forearm,
// hand back, ff proximal/middle/distal, mf proximal/middle/distal,
// th proximal/middle/distal, thumb base. Each adjacent pair yields a
// relative quaternion; flexion reads the yaw component, abduction or
// deviation the pitch component.
JointAngleVector joint_angles_from_chain(const std::array<Quaternion, 12>& sensors);

// inverse(wrist_in_camera) composed with tool_in_camera
Pose relative_pose(const Pose& tool_in_camera, const Pose& wrist_in_camera);

// wrap into (-180, 180]
double wrap_degrees(double angle);

}  // namespace motionmap
