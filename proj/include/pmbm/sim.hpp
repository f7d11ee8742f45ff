#pragma once

// Synthetic scenarios drawn from exactly the filter's models: PPP births, i.i.d.
// survival, CV motion with Gaussian process noise, Bernoulli detection with
// Gaussian measurement noise, and Poisson clutter uniform over measurement space.

#include "pmbm/errors.hpp"
#include "pmbm/filter.hpp"
#include "pmbm/gaussian.hpp"
#include "pmbm/models.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <random>
#include <utility>
#include <vector>

namespace pmbm {

struct ScenarioConfig {
    ModelParams params;
    std::size_t n_frames = 100;
    std::uint64_t rng_seed = 0;
    CameraModel camera;
    std::vector<ObjectState> initial_objects;
    /// Objects whose box center leaves the image, or whose depth leaves
    /// [min_depth, max_range], die at that frame.
    bool cull_outside_fov = true;
    double min_depth = 1.0;
    double max_range = kMaxRange;

    void validate() const {
        if (n_frames < 1) throw InvalidArgument("ScenarioConfig: n_frames must be >= 1");
        camera.validate();
        params.validate();
        if (params.process_noise.rows() != kStateDim || params.measurement_noise.rows() != kMeasDim)
            throw InvalidArgument("ScenarioConfig: Q must be 8x8 and R 5x5");
        for (const auto& s : initial_objects)
            if (!s.finite() || !(s.w > 0.0) || !(s.h > 0.0)) throw InvalidArgument("ScenarioConfig: invalid initial object");
    }
};

struct Lifetime {
    std::size_t birth_frame = 0;
    std::size_t last_frame = 0;  ///< last frame the object was alive
};

struct GroundTruth {
    std::vector<std::vector<std::pair<TrackId, ObjectState>>> frames;
    std::map<TrackId, Lifetime> lifetimes;
};

struct SimulationResult {
    GroundTruth truth;
    std::vector<std::vector<Detection>> detections;
    std::vector<std::size_t> births_per_frame;   ///< births sampled before field-of-view culling
    std::vector<std::size_t> clutter_per_frame;
};

enum class RngPurpose : std::uint64_t { Birth = 1, Survival = 2, Motion = 3, Detection = 4, Clutter = 5 };

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Independent stream per (seed, frame, purpose).
inline std::mt19937_64 stream(std::uint64_t seed, std::size_t frame, RngPurpose purpose) {
    const std::uint64_t s = splitmix64(splitmix64(splitmix64(seed) ^ static_cast<std::uint64_t>(frame)) ^
                                       static_cast<std::uint64_t>(purpose));
    return std::mt19937_64(s);
}

inline Eigen::VectorXd sample_gaussian(std::mt19937_64& rng, const Eigen::VectorXd& mean, const Eigen::MatrixXd& sqrt_cov) {
    std::normal_distribution<double> n01(0.0, 1.0);
    Eigen::VectorXd e(mean.size());
    for (Eigen::Index i = 0; i < e.size(); ++i) e(i) = n01(rng);
    return mean + sqrt_cov * e;
}

inline std::size_t sample_poisson(std::mt19937_64& rng, double mean) {
    if (!(mean > 0.0)) return 0;
    std::poisson_distribution<std::size_t> dist(mean);
    return dist(rng);
}

}  // namespace detail

inline SimulationResult simulate(const ScenarioConfig& cfg) {
    cfg.validate();
    const auto& params = cfg.params;
    const auto& cam = cfg.camera;
    const Eigen::MatrixXd q_sqrt = covariance_sqrt(params.process_noise);
    const Eigen::MatrixXd r_sqrt = covariance_sqrt(params.measurement_noise);

    std::vector<Eigen::MatrixXd> birth_sqrt;
    std::vector<double> birth_weights;
    for (const auto& c : params.birth.components) {
        birth_sqrt.push_back(covariance_sqrt(c.density.cov));
        birth_weights.push_back(std::exp(c.log_weight));
    }
    const double birth_mass = params.birth.empty() ? 0.0 : params.birth.mass();

    auto in_view = [&](const ObjectState& s) {
        if (!cfg.cull_outside_fov) return true;
        if (s.z < cfg.min_depth || s.position().norm() > cfg.max_range) return false;
        const auto m = project_to_measurement(s, cam);
        return cam.in_image(m.u_c, m.v_c);
    };

    SimulationResult out;
    out.truth.frames.resize(cfg.n_frames);
    out.detections.resize(cfg.n_frames);
    out.births_per_frame.assign(cfg.n_frames, 0);
    out.clutter_per_frame.assign(cfg.n_frames, 0);

    std::vector<std::pair<TrackId, ObjectState>> alive;
    TrackId next_id = 1;
    for (const auto& s : cfg.initial_objects) {
        if (in_view(s)) alive.emplace_back(next_id, s);
        ++next_id;
    }

    for (std::size_t k = 0; k < cfg.n_frames; ++k) {
        if (k > 0) {
            auto surv_rng = detail::stream(cfg.rng_seed, k, RngPurpose::Survival);
            auto motion_rng = detail::stream(cfg.rng_seed, k, RngPurpose::Motion);
            std::bernoulli_distribution survive(params.p_survive);
            std::vector<std::pair<TrackId, ObjectState>> next;
            for (auto& [id, s] : alive) {
                // Draw motion noise for every object so survival outcomes do not shift later draws.
                Eigen::VectorXd x = detail::sample_gaussian(motion_rng, cv_transition(s.to_vector(), params.dt), q_sqrt);
                x(idx::w) = std::max(x(idx::w), 1.0);
                x(idx::h) = std::max(x(idx::h), 1.0);
                if (!survive(surv_rng)) continue;
                const auto moved = ObjectState::from_vector(x);
                if (in_view(moved)) next.emplace_back(id, moved);
            }
            alive = std::move(next);
        }

        {
            auto birth_rng = detail::stream(cfg.rng_seed, k, RngPurpose::Birth);
            const std::size_t n_birth = detail::sample_poisson(birth_rng, birth_mass);
            out.births_per_frame[k] = n_birth;
            if (n_birth > 0) {
                std::discrete_distribution<std::size_t> pick(birth_weights.begin(), birth_weights.end());
                for (std::size_t b = 0; b < n_birth; ++b) {
                    const std::size_t c = pick(birth_rng);
                    Eigen::VectorXd x =
                        detail::sample_gaussian(birth_rng, params.birth.components[c].density.mean, birth_sqrt[c]);
                    x(idx::w) = std::max(x(idx::w), 1.0);
                    x(idx::h) = std::max(x(idx::h), 1.0);
                    const auto s = ObjectState::from_vector(x);
                    const TrackId id = next_id++;
                    if (in_view(s)) alive.emplace_back(id, s);
                }
            }
        }

        for (const auto& [id, s] : alive) {
            auto it = out.truth.lifetimes.find(id);
            if (it == out.truth.lifetimes.end())
                out.truth.lifetimes.emplace(id, Lifetime{k, k});
            else
                it->second.last_frame = k;
        }
        out.truth.frames[k] = alive;

        {
            auto det_rng = detail::stream(cfg.rng_seed, k, RngPurpose::Detection);
            std::bernoulli_distribution detect(params.p_detect);
            for (const auto& [id, s] : alive) {
                const bool hit = detect(det_rng);
                const Eigen::VectorXd noise =
                    detail::sample_gaussian(det_rng, Eigen::VectorXd::Zero(kMeasDim), r_sqrt);
                if (!hit || s.z <= 0.0) continue;
                Eigen::VectorXd z = project(s.to_vector(), cam) + noise;
                z(idx::d) = std::max(z(idx::d), 0.1);
                z(idx::mw) = std::max(z(idx::mw), 1.0);
                z(idx::mh) = std::max(z(idx::mh), 1.0);
                out.detections[k].push_back(measurement_to_detection(MeasurementVector::from_vector(z)));
            }
        }

        {
            auto clutter_rng = detail::stream(cfg.rng_seed, k, RngPurpose::Clutter);
            const std::size_t n_clutter = detail::sample_poisson(clutter_rng, params.clutter_rate);
            out.clutter_per_frame[k] = n_clutter;
            std::uniform_real_distribution<double> unit(0.0, 1.0);
            for (std::size_t c = 0; c < n_clutter; ++c) {
                MeasurementVector m;
                m.u_c = unit(clutter_rng) * cam.image_width;
                m.v_c = unit(clutter_rng) * cam.image_height;
                m.d = std::max(unit(clutter_rng) * cfg.max_range, 1e-3);
                m.w = std::max(unit(clutter_rng) * cam.image_width, 1e-3);
                m.h = std::max(unit(clutter_rng) * cam.image_height, 1e-3);
                out.detections[k].push_back(measurement_to_detection(m));
            }
        }
    }
    return out;
}

}  // namespace pmbm
