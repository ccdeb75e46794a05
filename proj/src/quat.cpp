#include "motionmap/quat.hpp"

#include <cmath>

#include "motionmap/common.hpp"

namespace motionmap {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kDegPerRad = 180.0 / kPi;
constexpr double kRadPerDeg = kPi / 180.0;

// sin(89.99 deg); beyond this |R20| the Z-Y'-X'' decomposition degenerates
const double kGimbalSin = std::sin(89.99 * kRadPerDeg);

void check_finite(const Quaternion& q, const char* who) {
    if (!q.is_finite())
        throw data_error(std::string(who) + ": non-finite quaternion component");
}

// standard conjugate (vector part negated); used internally for vector
// rotation and pose inversion, where the sign of the quaternion matters
Quaternion std_conjugate(const Quaternion& q) { return {-q.x, -q.y, -q.z, q.w}; }

}  // namespace

double Quaternion::norm() const { return std::sqrt(x * x + y * y + z * z + w * w); }

Quaternion Quaternion::normalized() const {
    const double n = norm();
    if (!(n > 0.0) || !std::isfinite(n))
        throw data_error("cannot normalize zero or non-finite quaternion");
    return {x / n, y / n, z / n, w / n};
}

bool Quaternion::is_finite() const {
    return std::isfinite(x) && std::isfinite(y) && std::isfinite(z) && std::isfinite(w);
}

const std::array<std::string, 15>& JointAngleVector::names() {
    static const std::array<std::string, 15> n = {
        "ff_j1", "ff_j2", "ff_j3", "ff_j4", "mf_j1", "mf_j2", "mf_j3", "mf_j4",
        "th_j1", "th_j2", "th_j3", "th_j4", "th_j5", "wr_j1", "wr_j2"};
    return n;
}

std::size_t JointAngleVector::index_of(const std::string& name) {
    const auto& all = names();
    for (std::size_t i = 0; i < all.size(); ++i)
        if (all[i] == name) return i;
    throw data_error("unknown joint name: " + name);
}

Quaternion quat_multiply(const Quaternion& a, const Quaternion& b) {
    check_finite(a, "quat_multiply");
    check_finite(b, "quat_multiply");
    return {
        a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
        a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
        a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
    };
}

Quaternion quat_conjugate(const Quaternion& q) {
    check_finite(q, "quat_conjugate");
    return {q.x, q.y, q.z, -q.w};
}

Quaternion relative_quat(const Quaternion& q0, const Quaternion& q1) {
    return quat_multiply(q1, quat_conjugate(q0));
}

double wrap_degrees(double angle) {
    double w = std::fmod(angle + 180.0, 360.0);
    if (w <= 0.0) w += 360.0;
    return w - 180.0;
}

EulerAngles quat_to_euler(const Quaternion& q) {
    check_finite(q, "quat_to_euler");
    const Quaternion u = q.normalized();

    // row entries of the rotation matrix needed for Z-Y'-X'' extraction
    const double r00 = 1.0 - 2.0 * (u.y * u.y + u.z * u.z);
    const double r01 = 2.0 * (u.x * u.y - u.w * u.z);
    const double r10 = 2.0 * (u.x * u.y + u.w * u.z);
    const double r11 = 1.0 - 2.0 * (u.x * u.x + u.z * u.z);
    const double r20 = 2.0 * (u.x * u.z - u.w * u.y);
    const double r21 = 2.0 * (u.y * u.z + u.w * u.x);
    const double r22 = 1.0 - 2.0 * (u.x * u.x + u.y * u.y);

    EulerAngles e;
    if (std::abs(r20) >= kGimbalSin) {
        e.gimbal_lock = true;
        e.roll = 0.0;
        e.pitch = (r20 <= 0.0 ? 90.0 : -90.0);
        e.yaw = wrap_degrees(std::atan2(-r01, r11) * kDegPerRad);
        return e;
    }
    e.roll = wrap_degrees(std::atan2(r21, r22) * kDegPerRad);
    e.pitch = std::asin(std::clamp(-r20, -1.0, 1.0)) * kDegPerRad;
    e.yaw = wrap_degrees(std::atan2(r10, r00) * kDegPerRad);
    return e;
}

Quaternion euler_to_quat(const EulerAngles& e) {
    if (!std::isfinite(e.roll) || !std::isfinite(e.pitch) || !std::isfinite(e.yaw))
        throw data_error("euler_to_quat: non-finite angle");
    const double hr = 0.5 * e.roll * kRadPerDeg;
    const double hp = 0.5 * e.pitch * kRadPerDeg;
    const double hy = 0.5 * e.yaw * kRadPerDeg;
    const Quaternion qz{0.0, 0.0, std::sin(hy), std::cos(hy)};
    const Quaternion qy{0.0, std::sin(hp), 0.0, std::cos(hp)};
    const Quaternion qx{std::sin(hr), 0.0, 0.0, std::cos(hr)};
    return quat_multiply(quat_multiply(qz, qy), qx);
}

Vec3 rotate(const Quaternion& q, const Vec3& v) {
    check_finite(q, "rotate");
    const Quaternion p{v.x, v.y, v.z, 0.0};
    const Quaternion r = quat_multiply(quat_multiply(q, p), std_conjugate(q));
    return {r.x, r.y, r.z};
}

namespace {

// euler of the child sensor's rotation relative to its parent
EulerAngles pair_euler(const std::array<Quaternion, 12>& s, int parent, int child) {
    return quat_to_euler(relative_quat(s[parent], s[child]));
}

}  // namespace

JointAngleVector joint_angles_from_chain(const std::array<Quaternion, 12>& sensors) {
    for (const auto& q : sensors) {
        check_finite(q, "joint_angles_from_chain");
        if (std::abs(q.norm() - 1.0) > 1e-6)
            throw data_error("joint_angles_from_chain: sensor quaternion not unit-norm");
    }

    // sensor indices
    constexpr int kForearm = 0, kHandBack = 1;
    constexpr int kFf1 = 2, kFf2 = 3, kFf3 = 4;
    constexpr int kMf1 = 5, kMf2 = 6, kMf3 = 7;
    constexpr int kTh1 = 8, kTh2 = 9, kTh3 = 10;
    constexpr int kThBase = 11;

    JointAngleVector j;

    const EulerAngles wr = pair_euler(sensors, kForearm, kHandBack);
    j[13] = wr.yaw;    // wr_j1 flexion
    j[14] = wr.pitch;  // wr_j2 deviation

    const EulerAngles ff_mcp = pair_euler(sensors, kHandBack, kFf1);
    j[0] = ff_mcp.yaw;
    j[1] = ff_mcp.pitch;
    j[2] = pair_euler(sensors, kFf1, kFf2).yaw;
    j[3] = pair_euler(sensors, kFf2, kFf3).yaw;

    const EulerAngles mf_mcp = pair_euler(sensors, kHandBack, kMf1);
    j[4] = mf_mcp.yaw;
    j[5] = mf_mcp.pitch;
    j[6] = pair_euler(sensors, kMf1, kMf2).yaw;
    j[7] = pair_euler(sensors, kMf2, kMf3).yaw;

    const EulerAngles th_cmc = pair_euler(sensors, kThBase, kTh1);
    j[8] = th_cmc.yaw;
    j[9] = th_cmc.pitch;
    j[10] = pair_euler(sensors, kHandBack, kThBase).yaw;  // th_j3, thumb-base pair
    j[11] = pair_euler(sensors, kTh1, kTh2).yaw;
    j[12] = pair_euler(sensors, kTh2, kTh3).yaw;

    return j;
}

Pose relative_pose(const Pose& tool_in_camera, const Pose& wrist_in_camera) {
    check_finite(tool_in_camera.orientation, "relative_pose");
    check_finite(wrist_in_camera.orientation, "relative_pose");
    const Quaternion wrist_inv = std_conjugate(wrist_in_camera.orientation.normalized());
    const Vec3 dp{tool_in_camera.position.x - wrist_in_camera.position.x,
                  tool_in_camera.position.y - wrist_in_camera.position.y,
                  tool_in_camera.position.z - wrist_in_camera.position.z};
    Pose out;
    out.position = rotate(wrist_inv, dp);
    out.orientation = quat_multiply(wrist_inv, tool_in_camera.orientation);
    return out;
}

}  // namespace motionmap
