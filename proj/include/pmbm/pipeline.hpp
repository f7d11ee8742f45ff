#pragma once

// Glue between the filter, the simulator, the evaluator and the file formats.

#include "pmbm/config.hpp"
#include "pmbm/eval.hpp"
#include "pmbm/filter.hpp"
#include "pmbm/io.hpp"
#include "pmbm/models.hpp"
#include "pmbm/sim.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <chrono>
#include <map>
#include <random>
#include <vector>

namespace pmbm {

/// Track record for one estimate; the box is the state reprojected into the
/// image. With a pose, position and velocity are mapped to the world frame.
inline io::TrackFileRecord make_track_record(std::size_t frame, TrackId id, const Eigen::VectorXd& mean,
                                             double existence, ObjectClass label, const CameraModel& cam,
                                             const Eigen::Isometry3d* pose = nullptr) {
    Eigen::VectorXd x = mean;
    x(idx::z) = std::max(x(idx::z), kMinFilterDepth);
    x(idx::w) = std::max(x(idx::w), 1e-3);
    x(idx::h) = std::max(x(idx::h), 1e-3);
    const auto m = MeasurementVector::from_vector(project(x, cam));
    const Detection box = measurement_to_detection(m);

    Eigen::Vector3d pos = mean.segment<3>(idx::x);
    Eigen::Vector3d vel = mean.segment<3>(idx::vx);
    if (pose != nullptr) {
        pos = *pose * pos;
        vel = pose->linear() * vel;
    }
    io::TrackFileRecord r;
    r.frame = frame;
    r.track_id = id;
    r.class_label = label;
    r.x_min = box.x_min;
    r.y_min = box.y_min;
    r.x_max = box.x_max;
    r.y_max = box.y_max;
    r.x = pos.x();
    r.y = pos.y();
    r.z = pos.z();
    r.vx = vel.x();
    r.vy = vel.y();
    r.vz = vel.z();
    r.existence = std::clamp(existence, 0.0, 1.0);
    return r;
}

struct TrackingRun {
    io::PerFrame<io::TrackFileRecord> tracks;
    std::vector<double> frame_ms;  ///< filter time per frame (predict..extract)

    [[nodiscard]] double mean_ms() const {
        if (frame_ms.empty()) return 0.0;
        double s = 0.0;
        for (double t : frame_ms) s += t;
        return s / static_cast<double>(frame_ms.size());
    }
    [[nodiscard]] double max_ms() const {
        return frame_ms.empty() ? 0.0 : *std::max_element(frame_ms.begin(), frame_ms.end());
    }
};

/// Runs the filter over a detection stream. A track takes the class of the
/// detection that last updated it.
inline TrackingRun run_tracking(const io::PerFrame<Detection>& detections, const FilterModel& model,
                                const FilterConfig& config, const CameraModel& cam,
                                const io::PoseTrack* poses = nullptr) {
    Tracker tracker(model, config);
    TrackingRun run;
    run.tracks.resize(detections.size());
    run.frame_ms.reserve(detections.size());
    std::map<TrackId, ObjectClass> labels;
    std::vector<Eigen::VectorXd> z;

    for (std::size_t k = 0; k < detections.size(); ++k) {
        z.clear();
        for (const auto& d : detections[k]) z.push_back(detection_to_measurement(d).to_vector());

        const auto t0 = std::chrono::steady_clock::now();
        const auto estimates = tracker.step(z);
        const auto t1 = std::chrono::steady_clock::now();
        run.frame_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());

        const Eigen::Isometry3d* pose = nullptr;
        if (poses != nullptr) {
            auto it = poses->find(k);
            if (it == poses->end()) throw InvalidArgument("run_tracking: no pose for frame " + std::to_string(k));
            pose = &it->second;
        }
        for (const auto& e : estimates) {
            if (e.measurement) labels[e.track_id] = detections[k][*e.measurement].class_label;
            const auto it = labels.find(e.track_id);
            const ObjectClass label = it != labels.end() ? it->second : ObjectClass::Car;
            run.tracks[k].push_back(make_track_record(k, e.track_id, e.mean, e.existence, label, cam, pose));
        }
    }
    return run;
}

// ---------------------------------------------------------------------------
// Conversions for evaluation

inline io::PerFrame<io::TrackFileRecord> truth_records(const GroundTruth& truth, const CameraModel& cam) {
    io::PerFrame<io::TrackFileRecord> out(truth.frames.size());
    for (std::size_t k = 0; k < truth.frames.size(); ++k)
        for (const auto& [id, s] : truth.frames[k])
            out[k].push_back(make_track_record(k, id, s.to_vector(), 1.0, ObjectClass::Car, cam));
    return out;
}

inline std::vector<eval::Frame> eval_frames(const io::PerFrame<io::TrackFileRecord>& records, std::size_t n_frames) {
    std::vector<eval::Frame> out(std::max(n_frames, records.size()));
    for (std::size_t k = 0; k < records.size(); ++k)
        for (const auto& r : records[k])
            out[k].push_back({r.track_id, {r.x_min, r.y_min, r.x_max, r.y_max}, {r.x, r.y, r.z}});
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic workloads

/// Scenario with `n_objects` initial objects spread over the near frustum,
/// drawn from the scenario's own seed.
inline ScenarioConfig seeded_scenario(const Settings& s, std::size_t n_objects, std::size_t n_frames,
                                      std::uint64_t seed) {
    ScenarioConfig cfg = s.scenario();
    cfg.n_frames = n_frames;
    cfg.rng_seed = seed;
    std::mt19937_64 rng(detail::splitmix64(seed ^ 0x5EEDULL));
    std::uniform_real_distribution<double> depth(10.0, 50.0);
    std::uniform_real_distribution<double> lateral(-0.35, 0.35);
    std::uniform_real_distribution<double> height(0.5, 1.5);
    std::normal_distribution<double> v_lat(0.0, 0.5);
    std::normal_distribution<double> v_long(0.0, 2.0);
    const auto& cam = s.camera;
    for (std::size_t i = 0; i < n_objects; ++i) {
        ObjectState o;
        o.z = depth(rng);
        o.x = lateral(rng) * cam.image_width * o.z / cam.f_u;
        o.y = height(rng);
        o.vx = v_lat(rng);
        o.vy = 0.0;
        o.vz = v_long(rng);
        o.w = cam.f_u * 1.8 / o.z;
        o.h = cam.f_v * 1.5 / o.z;
        cfg.initial_objects.push_back(o);
    }
    return cfg;
}

struct BenchRow {
    double p_detect = 0.0;
    double clutter_rate = 0.0;
    std::uint64_t seed = 0;
    eval::MotMetrics metrics_2d;
    eval::MotMetrics metrics_3d;
    double mean_ms = 0.0;
    double max_ms = 0.0;
};

/// Simulate, track and evaluate one synthetic sequence.
inline BenchRow run_bench(const Settings& s, std::size_t n_objects, std::size_t n_frames, std::uint64_t seed) {
    const auto scenario = seeded_scenario(s, n_objects, n_frames, seed);
    const auto sim = simulate(scenario);
    const auto run = run_tracking(sim.detections, s.filter_model(), s.filter, s.camera);
    const auto gt = eval_frames(truth_records(sim.truth, s.camera), n_frames);
    const auto est = eval_frames(run.tracks, n_frames);
    BenchRow row;
    row.p_detect = s.params.p_detect;
    row.clutter_rate = s.params.clutter_rate;
    row.seed = seed;
    row.metrics_2d = eval::clear_mot(gt, est, eval::MatchCriterion::iou2d());
    row.metrics_3d = eval::clear_mot(gt, est, eval::MatchCriterion::euclidean3d());
    row.mean_ms = run.mean_ms();
    row.max_ms = run.max_ms();
    return row;
}

}  // namespace pmbm
