#pragma once

// File formats.
//
//   detections.csv  frame,class,score,x_min,y_min,x_max,y_max,distance
//   tracks.csv      frame,track_id,class,x_min,y_min,x_max,y_max,x,y,z,vx,vy,vz,existence
//   calib.txt       f_u=..  f_v=..  c_u=..  c_v=..  frame_rate=..  [image_width=..  image_height=..]
//   poses.csv       frame,tx,ty,tz,qx,qy,qz,qw   (camera-to-world)
//
// KITTI tracking label files (space separated, 17 or 18 columns, optionally a
// 19th distance column) are accepted for detections and ground truth.

#include "pmbm/errors.hpp"
#include "pmbm/models.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <iterator>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace pmbm::io {

inline constexpr std::string_view kDetectionHeader = "frame,class,score,x_min,y_min,x_max,y_max,distance";
inline constexpr std::string_view kTrackHeader =
    "frame,track_id,class,x_min,y_min,x_max,y_max,x,y,z,vx,vy,vz,existence";
inline constexpr std::string_view kPoseHeader = "frame,tx,ty,tz,qx,qy,qz,qw";

struct DetectionFileRecord {
    std::size_t frame = 0;
    Detection detection;
};

struct TrackFileRecord {
    std::size_t frame = 0;
    std::uint64_t track_id = 0;
    ObjectClass class_label = ObjectClass::Car;
    double x_min = 0, y_min = 0, x_max = 0, y_max = 0;
    double x = 0, y = 0, z = 0;
    double vx = 0, vy = 0, vz = 0;
    double existence = 1.0;

    friend bool operator==(const TrackFileRecord&, const TrackFileRecord&) = default;
};

template <class T>
using PerFrame = std::vector<std::vector<T>>;

// ---------------------------------------------------------------------------
// Text helpers

namespace detail {

inline std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline std::vector<std::string_view> split_ws(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r')) ++i;
        const std::size_t start = i;
        while (i < s.size() && s[i] != ' ' && s[i] != '\t' && s[i] != '\r') ++i;
        if (i > start) out.push_back(s.substr(start, i - start));
    }
    return out;
}

/// Reads lines and reports malformed content with location.
class LineReader {
public:
    LineReader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

    bool next(std::string& line) {
        if (!std::getline(in_, line)) return false;
        ++line_no_;
        return true;
    }

    [[noreturn]] void fail(const std::string& what) const { throw ParseError(source_, line_no_, what); }

    double real(std::string_view field, const char* name) const {
        double v = 0.0;
        const auto* end = field.data() + field.size();
        auto [ptr, ec] = std::from_chars(field.data(), end, v);
        if (field.empty() || ec != std::errc{} || ptr != end || !std::isfinite(v))
            fail(std::string("invalid number for ") + name + ": '" + std::string(field) + "'");
        return v;
    }

    std::uint64_t integer(std::string_view field, const char* name) const {
        std::uint64_t v = 0;
        const auto* end = field.data() + field.size();
        auto [ptr, ec] = std::from_chars(field.data(), end, v);
        if (field.empty() || ec != std::errc{} || ptr != end)
            fail(std::string("invalid non-negative integer for ") + name + ": '" + std::string(field) + "'");
        return v;
    }

    std::int64_t signed_integer(std::string_view field, const char* name) const {
        std::int64_t v = 0;
        const auto* end = field.data() + field.size();
        auto [ptr, ec] = std::from_chars(field.data(), end, v);
        if (field.empty() || ec != std::errc{} || ptr != end)
            fail(std::string("invalid integer for ") + name + ": '" + std::string(field) + "'");
        return v;
    }

    ObjectClass label(std::string_view field) const {
        ObjectClass c{};
        if (!parse_object_class(field, c)) fail("unknown class label '" + std::string(field) + "'");
        return c;
    }

    [[nodiscard]] std::size_t line() const { return line_no_; }

private:
    std::istream& in_;
    std::string source_;
    std::size_t line_no_ = 0;
};

inline bool skippable(std::string_view line) {
    const auto t = trim(line);
    return t.empty() || t.front() == '#';
}

inline bool is_header(std::string_view line) { return trim(line).starts_with("frame"); }

/// Largest frame index guard: a stray huge frame number must not allocate the world.
inline constexpr std::uint64_t kMaxFrame = 10'000'000;

template <class T>
void place(PerFrame<T>& frames, std::size_t frame, T value) {
    if (frames.size() <= frame) frames.resize(frame + 1);
    frames[frame].push_back(std::move(value));
}

inline std::ifstream open_in(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    return in;
}

inline std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    return out;
}

}  // namespace detail

/// Shortest decimal text that parses back to exactly `v`.
inline std::string format_real(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc{}) throw IoError("format_real: conversion failed");
    return {buf, ptr};
}

// ---------------------------------------------------------------------------
// Detections

/// Parses detections grouped by frame. Frames without records are empty; the
/// result has at least `min_frames` entries.
inline PerFrame<Detection> parse_detections(std::istream& in, const std::string& source = "<stream>",
                                            bool kitti_format = false, std::size_t min_frames = 0) {
    PerFrame<Detection> frames;
    detail::LineReader reader(in, source);
    std::string line;
    while (reader.next(line)) {
        if (detail::skippable(line)) continue;
        if (!kitti_format && detail::is_header(line)) continue;
        std::uint64_t frame = 0;
        Detection det;
        if (kitti_format) {
            const auto f = detail::split_ws(line);
            if (f.size() < 17 || f.size() > 19) reader.fail("expected 17-19 KITTI columns, got " + std::to_string(f.size()));
            if (f[2] == "DontCare") continue;
            frame = reader.integer(f[0], "frame");
            det.class_label = reader.label(f[2]);
            det.x_min = reader.real(f[6], "bbox_left");
            det.y_min = reader.real(f[7], "bbox_top");
            det.x_max = reader.real(f[8], "bbox_right");
            det.y_max = reader.real(f[9], "bbox_bottom");
            const Eigen::Vector3d loc(reader.real(f[13], "x"), reader.real(f[14], "y"), reader.real(f[15], "z"));
            det.score = f.size() >= 18 ? reader.real(f[17], "score") : 1.0;
            det.d = f.size() == 19 ? reader.real(f[18], "distance") : loc.norm();
        } else {
            const auto f = detail::split(line, ',');
            if (f.size() != 8) reader.fail("expected 8 comma-separated fields, got " + std::to_string(f.size()));
            frame = reader.integer(f[0], "frame");
            det.class_label = reader.label(f[1]);
            det.score = reader.real(f[2], "score");
            det.x_min = reader.real(f[3], "x_min");
            det.y_min = reader.real(f[4], "y_min");
            det.x_max = reader.real(f[5], "x_max");
            det.y_max = reader.real(f[6], "y_max");
            det.d = reader.real(f[7], "distance");
        }
        if (frame > detail::kMaxFrame) reader.fail("frame index too large");
        if (!(det.d > 0.0)) reader.fail("distance must be positive");
        if (!(det.score >= 0.0 && det.score <= 1.0)) reader.fail("score must lie in [0,1]");
        if (!(det.x_min < det.x_max) || !(det.y_min < det.y_max)) reader.fail("degenerate bounding box");
        detail::place(frames, static_cast<std::size_t>(frame), det);
    }
    if (frames.size() < min_frames) frames.resize(min_frames);
    return frames;
}

inline PerFrame<Detection> parse_detections(const std::string& path, bool kitti_format = false,
                                            std::size_t min_frames = 0) {
    auto in = detail::open_in(path);
    return parse_detections(in, path, kitti_format, min_frames);
}

inline void write_detections(std::ostream& out, const PerFrame<Detection>& frames) {
    out << kDetectionHeader << '\n';
    for (std::size_t f = 0; f < frames.size(); ++f) {
        for (const auto& d : frames[f]) {
            out << f << ',' << to_string(d.class_label) << ',' << format_real(d.score) << ',' << format_real(d.x_min)
                << ',' << format_real(d.y_min) << ',' << format_real(d.x_max) << ',' << format_real(d.y_max) << ','
                << format_real(d.d) << '\n';
        }
    }
}

inline void write_detections(const std::string& path, const PerFrame<Detection>& frames) {
    auto out = detail::open_out(path);
    write_detections(out, frames);
    if (!out) throw IoError("failed writing '" + path + "'");
}

// ---------------------------------------------------------------------------
// Tracks

/// Records sorted by (frame, track_id).
inline void write_tracks(std::ostream& out, PerFrame<TrackFileRecord> frames) {
    out << kTrackHeader << '\n';
    for (std::size_t f = 0; f < frames.size(); ++f) {
        auto& recs = frames[f];
        std::stable_sort(recs.begin(), recs.end(),
                         [](const TrackFileRecord& a, const TrackFileRecord& b) { return a.track_id < b.track_id; });
        for (const auto& r : recs) {
            out << f << ',' << r.track_id << ',' << to_string(r.class_label) << ',' << format_real(r.x_min) << ','
                << format_real(r.y_min) << ',' << format_real(r.x_max) << ',' << format_real(r.y_max) << ','
                << format_real(r.x) << ',' << format_real(r.y) << ',' << format_real(r.z) << ',' << format_real(r.vx)
                << ',' << format_real(r.vy) << ',' << format_real(r.vz) << ',' << format_real(r.existence) << '\n';
        }
    }
}

inline void write_tracks(const std::string& path, PerFrame<TrackFileRecord> frames) {
    auto out = detail::open_out(path);
    write_tracks(out, std::move(frames));
    if (!out) throw IoError("failed writing '" + path + "'");
}

inline PerFrame<TrackFileRecord> parse_tracks(std::istream& in, const std::string& source = "<stream>",
                                              std::size_t min_frames = 0) {
    PerFrame<TrackFileRecord> frames;
    detail::LineReader reader(in, source);
    std::string line;
    while (reader.next(line)) {
        if (detail::skippable(line) || detail::is_header(line)) continue;
        const auto f = detail::split(line, ',');
        if (f.size() != 14) reader.fail("expected 14 comma-separated fields, got " + std::to_string(f.size()));
        TrackFileRecord r;
        const auto frame = reader.integer(f[0], "frame");
        if (frame > detail::kMaxFrame) reader.fail("frame index too large");
        r.frame = static_cast<std::size_t>(frame);
        r.track_id = reader.integer(f[1], "track_id");
        r.class_label = reader.label(f[2]);
        r.x_min = reader.real(f[3], "x_min");
        r.y_min = reader.real(f[4], "y_min");
        r.x_max = reader.real(f[5], "x_max");
        r.y_max = reader.real(f[6], "y_max");
        r.x = reader.real(f[7], "x");
        r.y = reader.real(f[8], "y");
        r.z = reader.real(f[9], "z");
        r.vx = reader.real(f[10], "vx");
        r.vy = reader.real(f[11], "vy");
        r.vz = reader.real(f[12], "vz");
        r.existence = reader.real(f[13], "existence");
        if (!(r.existence >= 0.0 && r.existence <= 1.0)) reader.fail("existence must lie in [0,1]");
        detail::place(frames, r.frame, r);
    }
    if (frames.size() < min_frames) frames.resize(min_frames);
    return frames;
}

inline PerFrame<TrackFileRecord> parse_tracks(const std::string& path, std::size_t min_frames = 0) {
    auto in = detail::open_in(path);
    return parse_tracks(in, path, min_frames);
}

/// KITTI tracking labels as ground-truth tracks (DontCare and id -1 rows skipped).
inline PerFrame<TrackFileRecord> parse_kitti_tracks(std::istream& in, const std::string& source = "<stream>",
                                                    std::size_t min_frames = 0) {
    PerFrame<TrackFileRecord> frames;
    detail::LineReader reader(in, source);
    std::string line;
    while (reader.next(line)) {
        if (detail::skippable(line)) continue;
        const auto f = detail::split_ws(line);
        if (f.size() < 17 || f.size() > 19) reader.fail("expected 17-19 KITTI columns, got " + std::to_string(f.size()));
        if (f[2] == "DontCare") continue;
        const auto id = reader.signed_integer(f[1], "track_id");
        if (id < 0) continue;
        TrackFileRecord r;
        const auto frame = reader.integer(f[0], "frame");
        if (frame > detail::kMaxFrame) reader.fail("frame index too large");
        r.frame = static_cast<std::size_t>(frame);
        r.track_id = static_cast<std::uint64_t>(id);
        r.class_label = reader.label(f[2]);
        r.x_min = reader.real(f[6], "bbox_left");
        r.y_min = reader.real(f[7], "bbox_top");
        r.x_max = reader.real(f[8], "bbox_right");
        r.y_max = reader.real(f[9], "bbox_bottom");
        r.x = reader.real(f[13], "x");
        r.y = reader.real(f[14], "y");
        r.z = reader.real(f[15], "z");
        detail::place(frames, r.frame, r);
    }
    if (frames.size() < min_frames) frames.resize(min_frames);
    return frames;
}

inline PerFrame<TrackFileRecord> parse_kitti_tracks(const std::string& path, std::size_t min_frames = 0) {
    auto in = detail::open_in(path);
    return parse_kitti_tracks(in, path, min_frames);
}

// ---------------------------------------------------------------------------
// Key-value files (calibration, configuration)

/// key=value lines; '#' starts a comment. Repeated keys accumulate in order.
using KeyValues = std::multimap<std::string, std::pair<std::string, std::size_t>>;

inline KeyValues parse_key_values(std::istream& in, const std::string& source = "<stream>") {
    KeyValues kv;
    detail::LineReader reader(in, source);
    std::string line;
    while (reader.next(line)) {
        std::string_view view = line;
        if (const auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
        view = detail::trim(view);
        if (view.empty()) continue;
        const auto eq = view.find('=');
        if (eq == std::string_view::npos) reader.fail("expected key=value");
        const auto key = detail::trim(view.substr(0, eq));
        const auto value = detail::trim(view.substr(eq + 1));
        if (key.empty()) reader.fail("empty key");
        kv.emplace(std::string(key), std::make_pair(std::string(value), reader.line()));
    }
    return kv;
}

inline KeyValues parse_key_values(const std::string& path) {
    auto in = detail::open_in(path);
    return parse_key_values(in, path);
}

inline CameraModel parse_calibration(std::istream& in, const std::string& source = "<stream>") {
    const auto kv = parse_key_values(in, source);
    CameraModel cam;
    auto get = [&](const char* key, double& dst, bool required) {
        const auto range = kv.equal_range(key);
        if (range.first == range.second) {
            if (required) throw ParseError(source, 0, std::string("missing key '") + key + "'");
            return;
        }
        const auto& [text, line] = std::prev(range.second)->second;
        double v = 0.0;
        auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
        if (ec != std::errc{} || ptr != text.data() + text.size() || !std::isfinite(v))
            throw ParseError(source, line, std::string("invalid number for ") + key);
        dst = v;
    };
    get("f_u", cam.f_u, true);
    get("f_v", cam.f_v, true);
    get("c_u", cam.c_u, true);
    get("c_v", cam.c_v, true);
    get("frame_rate", cam.frame_rate, true);
    get("image_width", cam.image_width, false);
    get("image_height", cam.image_height, false);
    for (const auto& [key, value] : kv) {
        static constexpr std::string_view known[] = {"f_u", "f_v", "c_u", "c_v", "frame_rate", "image_width", "image_height"};
        if (std::find(std::begin(known), std::end(known), key) == std::end(known))
            throw ParseError(source, value.second, "unknown calibration key '" + key + "'");
    }
    try {
        cam.validate();
    } catch (const InvalidArgument& e) {
        throw ParseError(source, 0, e.what());
    }
    return cam;
}

inline CameraModel parse_calibration(const std::string& path) {
    auto in = detail::open_in(path);
    return parse_calibration(in, path);
}

inline void write_calibration(std::ostream& out, const CameraModel& cam) {
    out << "f_u=" << format_real(cam.f_u) << "\nf_v=" << format_real(cam.f_v) << "\nc_u=" << format_real(cam.c_u)
        << "\nc_v=" << format_real(cam.c_v) << "\nframe_rate=" << format_real(cam.frame_rate)
        << "\nimage_width=" << format_real(cam.image_width) << "\nimage_height=" << format_real(cam.image_height)
        << '\n';
}

// ---------------------------------------------------------------------------
// Ego poses

/// Camera-to-world transform per frame.
using PoseTrack = std::map<std::size_t, Eigen::Isometry3d>;

inline PoseTrack parse_poses(std::istream& in, const std::string& source = "<stream>") {
    PoseTrack poses;
    detail::LineReader reader(in, source);
    std::string line;
    while (reader.next(line)) {
        if (detail::skippable(line) || detail::is_header(line)) continue;
        const auto f = detail::split(line, ',');
        if (f.size() != 8) reader.fail("expected 8 comma-separated fields, got " + std::to_string(f.size()));
        const auto frame = reader.integer(f[0], "frame");
        const Eigen::Vector3d t(reader.real(f[1], "tx"), reader.real(f[2], "ty"), reader.real(f[3], "tz"));
        Eigen::Quaterniond q(reader.real(f[7], "qw"), reader.real(f[4], "qx"), reader.real(f[5], "qy"),
                             reader.real(f[6], "qz"));
        if (!(q.norm() > 1e-12)) reader.fail("zero quaternion");
        q.normalize();
        Eigen::Isometry3d pose = Eigen::Isometry3d::Identity();
        pose.linear() = q.toRotationMatrix();
        pose.translation() = t;
        if (!poses.emplace(static_cast<std::size_t>(frame), pose).second) reader.fail("duplicate frame");
    }
    return poses;
}

inline PoseTrack parse_poses(const std::string& path) {
    auto in = detail::open_in(path);
    return parse_poses(in, path);
}

}  // namespace pmbm::io
