#include "motionmap/sensor_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "motionmap/common.hpp"

namespace motionmap {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

double require_finite_number(const json& j, const char* field) {
    if (!j.is_number())
        throw data_error(std::string("frame field '") + field + "' is not a number");
    const double v = j.get<double>();
    if (!std::isfinite(v))
        throw data_error(std::string("frame field '") + field + "' is not finite");
    return v;
}

Quaternion parse_quat(const json& arr, const std::string& what) {
    if (!arr.is_array() || arr.size() != 4)
        throw data_error("frame field '" + what + "' is not a 4-element array");
    Quaternion q;
    q.x = require_finite_number(arr[0], what.c_str());
    q.y = require_finite_number(arr[1], what.c_str());
    q.z = require_finite_number(arr[2], what.c_str());
    q.w = require_finite_number(arr[3], what.c_str());
    const double n = q.norm();
    if (std::abs(n - 1.0) > 1e-3)
        throw data_error("frame field '" + what + "' quaternion norm " +
                         std::to_string(n) + " off unit by more than 1e-3");
    // renormalizing an already-unit quaternion would dirty the last ulp
    // and break the parse/serialize round-trip identity
    if (std::abs(n - 1.0) <= 1e-9) return q;
    return q.normalized();
}

Pose parse_pose(const json& obj, const std::string& what) {
    if (!obj.is_object() || !obj.contains("p") || !obj.contains("q"))
        throw data_error("frame field '" + what + "' must be an object with keys p, q");
    const json& p = obj.at("p");
    if (!p.is_array() || p.size() != 3)
        throw data_error("frame field '" + what + ".p' is not a 3-element array");
    Pose pose;
    pose.position.x = require_finite_number(p[0], (what + ".p").c_str());
    pose.position.y = require_finite_number(p[1], (what + ".p").c_str());
    pose.position.z = require_finite_number(p[2], (what + ".p").c_str());
    pose.orientation = parse_quat(obj.at("q"), what + ".q");
    return pose;
}

ordered_json quat_to_json(const Quaternion& q) {
    return ordered_json::array({q.x, q.y, q.z, q.w});
}

ordered_json pose_to_json(const Pose& pose) {
    ordered_json o;
    o["p"] = ordered_json::array({pose.position.x, pose.position.y, pose.position.z});
    o["q"] = quat_to_json(pose.orientation);
    return o;
}

}  // namespace

SensorFrame parse_frame(const std::string& line) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::exception& e) {
        throw data_error(std::string("malformed JSON frame: ") + e.what());
    }
    if (!j.is_object()) throw data_error("frame line is not a JSON object");
    for (const char* key : {"t", "q", "s"})
        if (!j.contains(key))
            throw data_error(std::string("frame missing required field '") + key + "'");

    SensorFrame f;
    f.timestamp = require_finite_number(j.at("t"), "t");
    const json& q = j.at("q");
    if (!q.is_array() || q.size() != 12)
        throw data_error("frame field 'q' must hold exactly 12 quaternions");
    for (std::size_t i = 0; i < 12; ++i)
        f.imu_quats[i] = parse_quat(q[i], "q[" + std::to_string(i) + "]");
    if (!j.at("s").is_number_integer())
        throw data_error("frame field 's' is not an integer");
    f.strain_raw = j.at("s").get<std::int64_t>();
    if (j.contains("tool")) f.tool_pose_camera = parse_pose(j.at("tool"), "tool");
    if (j.contains("wrist")) f.wrist_pose_camera = parse_pose(j.at("wrist"), "wrist");
    return f;
}

std::string serialize_frame(const SensorFrame& frame) {
    ordered_json o;
    o["t"] = frame.timestamp;
    ordered_json quats = ordered_json::array();
    for (const auto& q : frame.imu_quats) quats.push_back(quat_to_json(q));
    o["q"] = std::move(quats);
    o["s"] = frame.strain_raw;
    if (frame.tool_pose_camera) o["tool"] = pose_to_json(*frame.tool_pose_camera);
    if (frame.wrist_pose_camera) o["wrist"] = pose_to_json(*frame.wrist_pose_camera);
    return o.dump();
}

JawCalibration load_calibration(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open calibration file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw data_error("malformed calibration file " + path + ": " + e.what());
    }
    if (!j.contains("raw_open") || !j.contains("raw_closed"))
        throw data_error("calibration file must contain raw_open and raw_closed");
    JawCalibration cal;
    cal.raw_open = j.at("raw_open").get<std::int64_t>();
    cal.raw_closed = j.at("raw_closed").get<std::int64_t>();
    if (cal.raw_open == cal.raw_closed)
        throw data_error("calibration raw_open equals raw_closed");
    return cal;
}

void save_calibration(const JawCalibration& cal, const std::string& path) {
    ordered_json o;
    o["raw_open"] = cal.raw_open;
    o["raw_closed"] = cal.raw_closed;
    std::ofstream out(path);
    if (!out) throw io_error("cannot write calibration file: " + path);
    out << o.dump() << "\n";
}

double jaw_from_strain(std::int64_t raw, const JawCalibration& cal) {
    if (cal.raw_open == cal.raw_closed)
        throw data_error("invalid jaw calibration: raw_open equals raw_closed");
    const double frac = static_cast<double>(raw - cal.raw_closed) /
                        static_cast<double>(cal.raw_open - cal.raw_closed);
    const double jaw = JawCalibration::angle_closed +
                       frac * (JawCalibration::angle_open - JawCalibration::angle_closed);
    return std::clamp(jaw, 0.0, 30.0);
}

FrameReadResult read_frames(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open frame file: " + path);
    FrameReadResult out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            out.frames.push_back(parse_frame(line));
        } catch (const data_error& e) {
            ++out.rejected_lines;
            log_debug(path + ":" + std::to_string(lineno) + " rejected: " + e.what());
        }
    }
    return out;
}

void write_frames(const std::vector<SensorFrame>& frames, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot write frame file: " + path);
    for (const auto& f : frames) out << serialize_frame(f) << "\n";
}

std::vector<TrackerRecord> extract_tracker_stream(const std::vector<SensorFrame>& frames) {
    std::vector<TrackerRecord> out;
    for (const auto& f : frames)
        if (f.tool_pose_camera && f.wrist_pose_camera)
            out.push_back({f.timestamp, *f.tool_pose_camera, *f.wrist_pose_camera});
    return out;
}

namespace {

void check_monotonic(const std::vector<double>& ts, const char* what) {
    for (std::size_t i = 1; i < ts.size(); ++i)
        if (!(ts[i] > ts[i - 1]))
            throw data_error(std::string(what) + ": timestamps not strictly increasing at index " +
                             std::to_string(i));
}

}  // namespace

std::vector<AlignedRecord> align_streams(const std::vector<SensorFrame>& frames,
                                         const std::vector<TrackerRecord>& tracker,
                                         const JawCalibration& cal, double window_s) {
    {
        std::vector<double> ts;
        ts.reserve(frames.size());
        for (const auto& f : frames) ts.push_back(f.timestamp);
        check_monotonic(ts, "imu stream");
        ts.clear();
        for (const auto& r : tracker) ts.push_back(r.timestamp);
        check_monotonic(ts, "tracker stream");
    }

    std::vector<AlignedRecord> out;
    out.reserve(frames.size());
    std::size_t cursor = 0;
    for (const auto& f : frames) {
        AlignedRecord rec;
        rec.timestamp = f.timestamp;
        rec.joint_angles = joint_angles_from_chain(f.imu_quats);
        rec.tool_state.jaw = jaw_from_strain(f.strain_raw, cal);

        // advance to the tracker record nearest this frame
        while (cursor + 1 < tracker.size() &&
               std::abs(tracker[cursor + 1].timestamp - f.timestamp) <=
                   std::abs(tracker[cursor].timestamp - f.timestamp))
            ++cursor;

        if (!tracker.empty() &&
            std::abs(tracker[cursor].timestamp - f.timestamp) <= window_s) {
            const TrackerRecord& tr = tracker[cursor];
            const Pose rel = relative_pose(tr.tool, tr.wrist);
            const EulerAngles e = quat_to_euler(rel.orientation);
            rec.tool_state.phi = e.roll;
            rec.tool_state.theta = e.pitch;
            rec.tool_state.psi = e.yaw;
            rec.complete = true;
        } else {
            rec.complete = false;
        }
        out.push_back(rec);
    }
    return out;
}

FilterResult filter_incomplete(const std::vector<AlignedRecord>& records) {
    FilterResult out;
    for (const auto& r : records) {
        if (r.complete)
            out.records.push_back(r);
        else
            ++out.dropped;
    }
    return out;
}

namespace {

constexpr std::size_t kChannels = 19;  // 15 joints + phi, theta, psi, jaw

std::array<double, kChannels> record_channels(const AlignedRecord& r) {
    std::array<double, kChannels> ch;
    for (std::size_t i = 0; i < 15; ++i) ch[i] = r.joint_angles[i];
    ch[15] = r.tool_state.phi;
    ch[16] = r.tool_state.theta;
    ch[17] = r.tool_state.psi;
    ch[18] = r.tool_state.jaw;
    return ch;
}

AlignedRecord record_from_channels(double t, const std::array<double, kChannels>& ch) {
    AlignedRecord r;
    r.timestamp = t;
    for (std::size_t i = 0; i < 15; ++i) r.joint_angles[i] = wrap_degrees(ch[i]);
    r.tool_state.phi = wrap_degrees(ch[15]);
    r.tool_state.theta = wrap_degrees(ch[16]);
    r.tool_state.psi = wrap_degrees(ch[17]);
    r.tool_state.jaw = ch[18];  // jaw never wraps
    r.complete = true;
    return r;
}

}  // namespace

std::vector<AlignedRecord> resample(const std::vector<AlignedRecord>& records,
                                    double rate_hz) {
    if (records.size() < 2)
        throw data_error("resample needs at least 2 records");
    if (!(rate_hz > 0.0)) throw data_error("resample rate must be positive");
    {
        std::vector<double> ts;
        ts.reserve(records.size());
        for (const auto& r : records) ts.push_back(r.timestamp);
        check_monotonic(ts, "resample input");
    }

    // unwrap every channel so interpolation crosses the +/-180 seam the
    // short way
    const std::size_t n = records.size();
    std::vector<std::array<double, kChannels>> unwrapped(n);
    unwrapped[0] = record_channels(records[0]);
    auto prev_raw = unwrapped[0];
    for (std::size_t i = 1; i < n; ++i) {
        const auto raw = record_channels(records[i]);
        for (std::size_t c = 0; c < kChannels; ++c) {
            const double d = std::remainder(raw[c] - prev_raw[c], 360.0);
            unwrapped[i][c] = unwrapped[i - 1][c] + d;
        }
        prev_raw = raw;
    }

    const double t0 = records.front().timestamp;
    const double t_end = records.back().timestamp;
    const double period = 1.0 / rate_hz;

    std::vector<AlignedRecord> out;
    std::size_t seg = 0;
    for (std::size_t k = 0;; ++k) {
        const double t = t0 + static_cast<double>(k) * period;
        if (t > t_end + 1e-9) break;
        const double tq = std::min(t, t_end);
        while (seg + 2 < n && records[seg + 1].timestamp < tq) ++seg;
        const double ta = records[seg].timestamp;
        const double tb = records[seg + 1].timestamp;
        const double alpha = (tq - ta) / (tb - ta);
        std::array<double, kChannels> ch;
        for (std::size_t c = 0; c < kChannels; ++c)
            ch[c] = unwrapped[seg][c] + alpha * (unwrapped[seg + 1][c] - unwrapped[seg][c]);
        out.push_back(record_from_channels(t, ch));
    }
    return out;
}

std::vector<AlignedRecord> read_aligned(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open aligned-record file: " + path);
    std::vector<AlignedRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw data_error(path + ":" + std::to_string(lineno) +
                             ": malformed JSON: " + e.what());
        }
        if (!j.contains("t") || !j.contains("x") || !j.contains("y"))
            throw data_error(path + ":" + std::to_string(lineno) +
                             ": record must contain t, x, y");
        AlignedRecord r;
        r.timestamp = require_finite_number(j.at("t"), "t");
        const json& x = j.at("x");
        const json& y = j.at("y");
        if (!x.is_array() || x.size() != 15)
            throw data_error(path + ":" + std::to_string(lineno) + ": x must hold 15 values");
        if (!y.is_array() || y.size() != 4)
            throw data_error(path + ":" + std::to_string(lineno) + ": y must hold 4 values");
        for (std::size_t i = 0; i < 15; ++i)
            r.joint_angles[i] = require_finite_number(x[i], "x");
        r.tool_state.phi = require_finite_number(y[0], "y");
        r.tool_state.theta = require_finite_number(y[1], "y");
        r.tool_state.psi = require_finite_number(y[2], "y");
        r.tool_state.jaw = require_finite_number(y[3], "y");
        r.complete = true;
        out.push_back(r);
    }
    return out;
}

void write_aligned(const std::vector<AlignedRecord>& records, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot write aligned-record file: " + path);
    for (const auto& r : records) {
        ordered_json o;
        o["t"] = r.timestamp;
        ordered_json x = ordered_json::array();
        for (std::size_t i = 0; i < 15; ++i) x.push_back(r.joint_angles[i]);
        o["x"] = std::move(x);
        o["y"] = ordered_json::array(
            {r.tool_state.phi, r.tool_state.theta, r.tool_state.psi, r.tool_state.jaw});
        out << o.dump() << "\n";
    }
}

}  // namespace motionmap
