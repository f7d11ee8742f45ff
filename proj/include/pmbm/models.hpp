#pragma once

// State, detection and measurement spaces; the constant-velocity motion
// model; the pinhole measurement model; and the scalar model parameters.
//
// Frames: camera/ego frame with x right, y down, z forward (meters).
// State vector:       [x, y, z, vx, vy, vz, w, h]  (w, h in pixels)
// Measurement vector: [u_c, v_c, d, w, h]           (pixels, meters, pixels)

#include "pmbm/errors.hpp"
#include "pmbm/gaussian.hpp"

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <algorithm>
#include <functional>
#include <initializer_list>
#include <limits>
#include <string>
#include <string_view>

namespace pmbm {

inline constexpr Eigen::Index kStateDim = 8;
inline constexpr Eigen::Index kMeasDim = 5;

namespace idx {
inline constexpr Eigen::Index x = 0, y = 1, z = 2, vx = 3, vy = 4, vz = 5, w = 6, h = 7;
inline constexpr Eigen::Index u = 0, v = 1, d = 2, mw = 3, mh = 4;
}  // namespace idx

struct ObjectState {
    double x = 0, y = 0, z = 0;
    double vx = 0, vy = 0, vz = 0;
    double w = 1, h = 1;

    [[nodiscard]] Eigen::VectorXd to_vector() const {
        Eigen::VectorXd v(kStateDim);
        v << x, y, z, vx, vy, vz, w, h;
        return v;
    }

    static ObjectState from_vector(const Eigen::VectorXd& v) {
        if (v.size() != kStateDim) throw InvalidArgument("ObjectState: expected an 8-vector");
        return {v(0), v(1), v(2), v(3), v(4), v(5), v(6), v(7)};
    }

    [[nodiscard]] Eigen::Vector3d position() const { return {x, y, z}; }
    [[nodiscard]] bool finite() const { return to_vector().allFinite(); }

    friend bool operator==(const ObjectState&, const ObjectState&) = default;
};

enum class ObjectClass { Car, Van, Truck, Pedestrian, PersonSitting, Cyclist, Tram, Misc };

inline std::string_view to_string(ObjectClass c) {
    switch (c) {
        case ObjectClass::Car: return "Car";
        case ObjectClass::Van: return "Van";
        case ObjectClass::Truck: return "Truck";
        case ObjectClass::Pedestrian: return "Pedestrian";
        case ObjectClass::PersonSitting: return "Person_sitting";
        case ObjectClass::Cyclist: return "Cyclist";
        case ObjectClass::Tram: return "Tram";
        case ObjectClass::Misc: return "Misc";
    }
    return "Misc";
}

/// Parses a KITTI class label. Returns false for unknown labels (including DontCare).
inline bool parse_object_class(std::string_view text, ObjectClass& out) {
    static constexpr std::array all = {ObjectClass::Car,     ObjectClass::Van,           ObjectClass::Truck,
                                       ObjectClass::Pedestrian, ObjectClass::PersonSitting, ObjectClass::Cyclist,
                                       ObjectClass::Tram,    ObjectClass::Misc};
    for (auto c : all) {
        if (to_string(c) == text) {
            out = c;
            return true;
        }
    }
    return false;
}

/// A detector output: box corners in pixels plus camera-to-object distance.
struct Detection {
    double x_min = 0, y_min = 0, x_max = 0, y_max = 0;
    double d = 0;
    double score = 1.0;
    ObjectClass class_label = ObjectClass::Car;

    [[nodiscard]] bool valid() const {
        return std::isfinite(x_min) && std::isfinite(y_min) && std::isfinite(x_max) && std::isfinite(y_max) &&
               std::isfinite(d) && x_min < x_max && y_min < y_max && d > 0.0;
    }
};

struct MeasurementVector {
    double u_c = 0, v_c = 0, d = 0, w = 0, h = 0;

    [[nodiscard]] Eigen::VectorXd to_vector() const {
        Eigen::VectorXd v(kMeasDim);
        v << u_c, v_c, d, w, h;
        return v;
    }
    static MeasurementVector from_vector(const Eigen::VectorXd& v) {
        if (v.size() != kMeasDim) throw InvalidArgument("MeasurementVector: expected a 5-vector");
        return {v(0), v(1), v(2), v(3), v(4)};
    }
};

struct CameraModel {
    double f_u = 721.5377;
    double f_v = 721.5377;
    double c_u = 609.5593;
    double c_v = 172.854;
    double frame_rate = 10.0;
    // Image extent; only used for clutter volume, simulation and field-of-view checks.
    double image_width = 1242.0;
    double image_height = 375.0;

    void validate() const {
        if (!(f_u > 0.0) || !(f_v > 0.0)) throw InvalidArgument("CameraModel: focal lengths must be positive");
        if (!std::isfinite(c_u) || !std::isfinite(c_v)) throw InvalidArgument("CameraModel: non-finite principal point");
        if (!(frame_rate > 0.0)) throw InvalidArgument("CameraModel: frame_rate must be positive");
        if (!(image_width > 0.0) || !(image_height > 0.0)) throw InvalidArgument("CameraModel: image size must be positive");
    }

    [[nodiscard]] bool in_image(double u, double v) const {
        return u >= 0.0 && u <= image_width && v >= 0.0 && v <= image_height;
    }
};

// ---------------------------------------------------------------------------
// Motion

/// Constant-velocity mean function on the raw state vector. Positions advance
/// by velocity * dt; velocities and box extent are unchanged.
inline Eigen::VectorXd cv_transition(const Eigen::VectorXd& x, double dt) {
    Eigen::VectorXd out = x;
    out.segment<3>(idx::x) += dt * x.segment<3>(idx::vx);
    return out;
}

inline ObjectState cv_transition(const ObjectState& s, double dt) {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw InvalidArgument("cv_transition: dt must be positive and finite");
    if (!s.finite()) throw InvalidArgument("cv_transition: non-finite state");
    return ObjectState::from_vector(cv_transition(s.to_vector(), dt));
}

// ---------------------------------------------------------------------------
// Measurement

inline Eigen::VectorXd project(const Eigen::VectorXd& x, const CameraModel& cam) {
    const double depth = x(idx::z);
    if (!(depth > 0.0)) throw BehindCamera("project_to_measurement: depth must be positive");
    Eigen::VectorXd z(kMeasDim);
    z << cam.c_u + cam.f_u * x(idx::x) / depth, cam.c_v + cam.f_v * x(idx::y) / depth,
        x.segment<3>(idx::x).norm(), x(idx::w), x(idx::h);
    return z;
}

inline MeasurementVector project_to_measurement(const ObjectState& s, const CameraModel& cam) {
    if (!s.finite()) throw InvalidArgument("project_to_measurement: non-finite state");
    return MeasurementVector::from_vector(project(s.to_vector(), cam));
}

/// Ray-casting inverse of the pinhole projection: the 3D point at range d
/// along the ray through pixel (u_c, v_c).
inline Eigen::Vector3d back_project(const MeasurementVector& m, const CameraModel& cam) {
    const Eigen::Vector3d ray((m.u_c - cam.c_u) / cam.f_u, (m.v_c - cam.c_v) / cam.f_v, 1.0);
    return m.d * ray.normalized();
}

inline MeasurementVector detection_to_measurement(const Detection& det) {
    if (!det.valid()) throw InvalidArgument("detection_to_measurement: degenerate box or non-positive distance");
    return {0.5 * (det.x_min + det.x_max), 0.5 * (det.y_min + det.y_max), det.d, det.x_max - det.x_min,
            det.y_max - det.y_min};
}

inline Detection measurement_to_detection(const MeasurementVector& m, double score = 1.0,
                                          ObjectClass label = ObjectClass::Car) {
    return {m.u_c - 0.5 * m.w, m.v_c - 0.5 * m.h, m.u_c + 0.5 * m.w, m.v_c + 0.5 * m.h, m.d, score, label};
}

// ---------------------------------------------------------------------------
// Parameters

struct ModelParams {
    double p_detect = 0.9;
    double p_survive = 0.99;
    double clutter_rate = 5.0;     ///< expected clutter detections per frame
    double clutter_volume = 1.0;   ///< measurement-space volume; c(z) = 1 / volume
    Eigen::MatrixXd process_noise;      ///< Q
    Eigen::MatrixXd measurement_noise;  ///< R
    GaussianMixture birth;              ///< birth intensity
    double dt = 0.1;

    /// kappa(z) = lambda * c(z)
    [[nodiscard]] double clutter_intensity() const { return clutter_rate / clutter_volume; }

    void validate() const {
        auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
        if (!prob(p_detect) || !prob(p_survive)) throw InvalidArgument("ModelParams: probabilities must lie in [0,1]");
        if (!(clutter_rate >= 0.0) || !std::isfinite(clutter_rate)) throw InvalidArgument("ModelParams: clutter rate must be >= 0");
        if (!(clutter_volume > 0.0)) throw InvalidArgument("ModelParams: clutter volume must be positive");
        if (!(dt > 0.0)) throw InvalidArgument("ModelParams: dt must be positive");
        if (!is_valid_covariance(process_noise)) throw InvalidArgument("ModelParams: Q must be symmetric PSD");
        if (!is_valid_covariance(measurement_noise)) throw InvalidArgument("ModelParams: R must be symmetric PSD");
        for (const auto& c : birth.components) {
            if (std::isnan(c.log_weight) || c.log_weight == std::numeric_limits<double>::infinity())
                throw InvalidArgument("ModelParams: birth weights must be finite");
            if (!is_valid(c.density) || c.density.dim() != process_noise.rows())
                throw InvalidArgument("ModelParams: invalid birth component");
        }
    }
};

using MotionFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&, double)>;
using MeasurementFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

/// Everything the filter needs to know about the world: parameters plus the
/// motion mean function b(x, dt) and the measurement mean function a(x).
struct FilterModel {
    ModelParams params;
    MotionFn motion;
    MeasurementFn measure;
    SigmaParams sigma;
};

/// Piecewise white-noise acceleration Q for the CV block plus an independent
/// random walk on the box extent.
inline Eigen::MatrixXd cv_process_noise(double sigma_accel, double sigma_extent, double dt) {
    Eigen::MatrixXd q = Eigen::MatrixXd::Zero(kStateDim, kStateDim);
    const double a2 = sigma_accel * sigma_accel;
    for (Eigen::Index axis = 0; axis < 3; ++axis) {
        q(idx::x + axis, idx::x + axis) = a2 * std::pow(dt, 4) / 4.0;
        q(idx::x + axis, idx::vx + axis) = a2 * std::pow(dt, 3) / 2.0;
        q(idx::vx + axis, idx::x + axis) = a2 * std::pow(dt, 3) / 2.0;
        q(idx::vx + axis, idx::vx + axis) = a2 * dt * dt;
    }
    q(idx::w, idx::w) = sigma_extent * sigma_extent;
    q(idx::h, idx::h) = sigma_extent * sigma_extent;
    return q;
}

inline Eigen::MatrixXd diagonal_noise(std::initializer_list<double> sigmas) {
    Eigen::VectorXd d(static_cast<Eigen::Index>(sigmas.size()));
    Eigen::Index i = 0;
    for (double s : sigmas) d(i++) = s * s;
    return d.asDiagonal();
}

inline constexpr double kMaxRange = 80.0;

/// Birth intensity covering the camera frustum between kMinBirthDepth and
/// `max_depth`: geometric depth bins times bins of equal viewing angle, with box
/// size set from a car-sized object at the bin depth. Components are kept
/// narrow (bin width = 2.5 sd) so the unscented update of a single component
/// stays accurate under the perspective division.
inline constexpr double kMinBirthDepth = 5.0;

inline GaussianMixture frustum_birth(const CameraModel& cam, double total_mass, double max_depth = kMaxRange,
                                     int depth_bins = 12, int lateral_bins = 7) {
    if (depth_bins < 1 || lateral_bins < 1 || !(max_depth > kMinBirthDepth) || !(total_mass > 0.0))
        throw InvalidArgument("frustum_birth: invalid layout");
    GaussianMixture birth;
    const double ratio = std::pow(max_depth / kMinBirthDepth, 1.0 / depth_bins);
    const double log_w = std::log(total_mass / (depth_bins * lateral_bins));
    const double half_tan = 0.5 * cam.image_width / cam.f_u;
    const double tan_step = 2.0 * half_tan / lateral_bins;
    for (int k = 0; k < depth_bins; ++k) {
        const double lo = kMinBirthDepth * std::pow(ratio, k);
        const double hi = lo * ratio;
        const double z = 0.5 * (lo + hi);
        const double w = cam.f_u * 1.8 / z;
        const double h = cam.f_v * 1.5 / z;
        for (int l = 0; l < lateral_bins; ++l) {
            const double tan_center = -cam.c_u / cam.f_u + (l + 0.5) * tan_step;
            Eigen::VectorXd mean(kStateDim);
            mean << tan_center * z, 0.8, z, 0.0, 0.0, 0.0, w, h;
            Eigen::VectorXd sd(kStateDim);
            sd << tan_step * z / 2.5, 1.0, (hi - lo) / 2.5, 3.0, 0.3, 5.0, 0.4 * w, 0.4 * h;
            birth.components.push_back({log_w, {mean, sd.array().square().matrix().asDiagonal()}});
        }
    }
    return birth;
}

/// Default parameters for a camera: KITTI-like noise levels, uniform clutter
/// over image x [0, 80 m] range x box sizes up to the image extent.
inline ModelParams default_model_params(const CameraModel& cam) {
    ModelParams p;
    p.dt = 1.0 / cam.frame_rate;
    p.p_detect = 0.9;
    p.p_survive = 0.99;
    p.clutter_rate = 5.0;
    p.clutter_volume = cam.image_width * cam.image_height * kMaxRange * cam.image_width * cam.image_height;
    p.process_noise = cv_process_noise(2.0, 2.0, p.dt);
    p.measurement_noise = diagonal_noise({4.0, 4.0, 1.5, 6.0, 6.0});
    p.birth = frustum_birth(cam, 0.1);
    return p;
}

/// Depth floor applied inside the filter's measurement function so sigma
/// points that stray behind the camera still map to finite pixels.
inline constexpr double kMinFilterDepth = 0.1;

inline FilterModel camera_filter_model(ModelParams params, const CameraModel& cam, SigmaParams sigma = {}) {
    FilterModel m;
    m.params = std::move(params);
    m.motion = [](const Eigen::VectorXd& x, double dt) { return cv_transition(x, dt); };
    m.measure = [cam](const Eigen::VectorXd& x) {
        Eigen::VectorXd clamped = x;
        clamped(idx::z) = std::max(x(idx::z), kMinFilterDepth);
        return project(clamped, cam);
    };
    m.sigma = sigma;
    return m;
}

}  // namespace pmbm
