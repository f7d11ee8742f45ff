#pragma once

// Run settings from key=value files. Unknown keys are rejected so typos
// surface instead of silently falling back to defaults.
//
//   p_detect, p_survive, clutter_rate, clutter_volume, dt
//   sigma_accel, sigma_extent          Q from white-noise acceleration
//   process_noise_diag = 8 numbers     diagonal Q (overrides the two above)
//   measurement_noise_std = 5 numbers  diagonal R as standard deviations
//   birth_mass                         total mass of the default frustum birth
//   birth_component = w m1..m8 s1..s8  explicit diagonal birth components (repeatable)
//   gate_prob, k_max, extract_threshold, hypothesis_min_weight, max_hypotheses,
//   bernoulli_min_existence, ppp_prune_weight, ppp_merge_threshold, ppp_max_components
//   sigma_alpha, sigma_beta, sigma_kappa
//   n_frames, seed, cull_outside_fov, initial_object = x y z vx vy vz w h (repeatable)

#include "pmbm/errors.hpp"
#include "pmbm/filter.hpp"
#include "pmbm/io.hpp"
#include "pmbm/models.hpp"
#include "pmbm/sim.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace pmbm {

struct Settings {
    CameraModel camera;
    ModelParams params;
    FilterConfig filter;
    SigmaParams sigma;

    // Knobs kept so the echo can reproduce the run.
    double sigma_accel = 2.0;
    double sigma_extent = 2.0;
    std::optional<std::vector<double>> process_noise_diag;
    double birth_mass = 0.1;
    bool explicit_birth = false;

    std::size_t n_frames = 100;
    std::uint64_t seed = 0;
    bool cull_outside_fov = true;
    std::vector<ObjectState> initial_objects;

    [[nodiscard]] FilterModel filter_model() const { return camera_filter_model(params, camera, sigma); }

    [[nodiscard]] ScenarioConfig scenario() const {
        ScenarioConfig s;
        s.params = params;
        s.n_frames = n_frames;
        s.rng_seed = seed;
        s.camera = camera;
        s.initial_objects = initial_objects;
        s.cull_outside_fov = cull_outside_fov;
        return s;
    }
};

inline Settings default_settings(const CameraModel& cam) {
    Settings s;
    s.camera = cam;
    s.params = default_model_params(cam);
    return s;
}

namespace detail {

class SettingsReader {
public:
    explicit SettingsReader(std::string source) : source_(std::move(source)) {}

    [[noreturn]] void fail(std::size_t line, const std::string& what) const { throw ParseError(source_, line, what); }

    std::vector<double> numbers(const std::string& text, std::size_t line, const char* key) const {
        std::vector<double> out;
        for (auto field : io::detail::split_ws(text)) {
            double v = 0.0;
            auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
            if (ec != std::errc{} || ptr != field.data() + field.size() || !std::isfinite(v))
                fail(line, std::string("invalid number in ") + key + ": '" + std::string(field) + "'");
            out.push_back(v);
        }
        return out;
    }

    double real(const std::string& text, std::size_t line, const char* key) const {
        const auto v = numbers(text, line, key);
        if (v.size() != 1) fail(line, std::string(key) + " expects one number");
        return v.front();
    }

    std::uint64_t count(const std::string& text, std::size_t line, const char* key) const {
        std::uint64_t v = 0;
        auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
        if (text.empty() || ec != std::errc{} || ptr != text.data() + text.size())
            fail(line, std::string(key) + " expects a non-negative integer");
        return v;
    }

    bool flag(const std::string& text, std::size_t line, const char* key) const {
        if (text == "true" || text == "1") return true;
        if (text == "false" || text == "0") return false;
        fail(line, std::string(key) + " expects true or false");
    }

private:
    std::string source_;
};

}  // namespace detail

/// Applies `kv` on top of `base`. Throws ParseError on unknown keys or bad values.
inline Settings apply_settings(Settings s, const io::KeyValues& kv, const std::string& source = "<config>") {
    const detail::SettingsReader rd(source);
    bool rebuild_q = false;
    bool rebuild_birth = false;
    std::vector<WeightedGaussian> explicit_components;

    for (const auto& [key, entry] : kv) {
        const auto& [text, line] = entry;
        const char* k = key.c_str();
        if (key == "p_detect") s.params.p_detect = rd.real(text, line, k);
        else if (key == "p_survive") s.params.p_survive = rd.real(text, line, k);
        else if (key == "clutter_rate") s.params.clutter_rate = rd.real(text, line, k);
        else if (key == "clutter_volume") s.params.clutter_volume = rd.real(text, line, k);
        else if (key == "dt") {
            s.params.dt = rd.real(text, line, k);
            rebuild_q = true;
        } else if (key == "sigma_accel") {
            s.sigma_accel = rd.real(text, line, k);
            rebuild_q = true;
        } else if (key == "sigma_extent") {
            s.sigma_extent = rd.real(text, line, k);
            rebuild_q = true;
        } else if (key == "process_noise_diag") {
            auto v = rd.numbers(text, line, k);
            if (v.size() != static_cast<std::size_t>(kStateDim)) rd.fail(line, "process_noise_diag expects 8 numbers");
            s.process_noise_diag = std::move(v);
            rebuild_q = true;
        } else if (key == "measurement_noise_std") {
            const auto v = rd.numbers(text, line, k);
            if (v.size() != static_cast<std::size_t>(kMeasDim)) rd.fail(line, "measurement_noise_std expects 5 numbers");
            s.params.measurement_noise = diagonal_noise({v[0], v[1], v[2], v[3], v[4]});
        } else if (key == "birth_mass") {
            s.birth_mass = rd.real(text, line, k);
            if (!(s.birth_mass > 0.0)) rd.fail(line, "birth_mass must be positive");
            rebuild_birth = true;
        } else if (key == "birth_component") {
            const auto v = rd.numbers(text, line, k);
            if (v.size() != 1 + 2 * static_cast<std::size_t>(kStateDim)) rd.fail(line, "birth_component expects 17 numbers");
            if (!(v[0] > 0.0)) rd.fail(line, "birth_component weight must be positive");
            Eigen::VectorXd mean(kStateDim), sd(kStateDim);
            for (Eigen::Index i = 0; i < kStateDim; ++i) {
                mean(i) = v[1 + static_cast<std::size_t>(i)];
                sd(i) = v[1 + static_cast<std::size_t>(kStateDim + i)];
                if (!(sd(i) >= 0.0)) rd.fail(line, "birth_component standard deviations must be >= 0");
            }
            explicit_components.push_back({std::log(v[0]), {mean, sd.array().square().matrix().asDiagonal()}});
        } else if (key == "gate_prob") s.filter.gate_prob = rd.real(text, line, k);
        else if (key == "k_max") {
            s.filter.k_max = rd.count(text, line, k);
            if (s.filter.k_max < 1) rd.fail(line, "k_max must be >= 1");
        } else if (key == "extract_threshold") s.filter.extract_threshold = rd.real(text, line, k);
        else if (key == "hypothesis_min_weight") s.filter.hypothesis_min_weight = rd.real(text, line, k);
        else if (key == "max_hypotheses") s.filter.max_hypotheses = rd.count(text, line, k);
        else if (key == "bernoulli_min_existence") s.filter.bernoulli_min_existence = rd.real(text, line, k);
        else if (key == "ppp_prune_weight") {
            const double w = rd.real(text, line, k);
            if (w < 0.0) rd.fail(line, "ppp_prune_weight must be >= 0");
            s.filter.ppp_prune_log_weight = w > 0.0 ? std::log(w) : kNegInf;
        } else if (key == "ppp_merge_threshold") s.filter.ppp_merge_threshold = rd.real(text, line, k);
        else if (key == "ppp_max_components") s.filter.ppp_max_components = rd.count(text, line, k);
        else if (key == "sigma_alpha") s.sigma.alpha = rd.real(text, line, k);
        else if (key == "sigma_beta") s.sigma.beta = rd.real(text, line, k);
        else if (key == "sigma_kappa") s.sigma.kappa = rd.real(text, line, k);
        else if (key == "n_frames") s.n_frames = rd.count(text, line, k);
        else if (key == "seed") s.seed = rd.count(text, line, k);
        else if (key == "cull_outside_fov") s.cull_outside_fov = rd.flag(text, line, k);
        else if (key == "initial_object") {
            const auto v = rd.numbers(text, line, k);
            if (v.size() != static_cast<std::size_t>(kStateDim)) rd.fail(line, "initial_object expects 8 numbers");
            s.initial_objects.push_back({v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7]});
        } else {
            rd.fail(line, "unknown key '" + key + "'");
        }
    }

    if (rebuild_q) {
        if (s.process_noise_diag) {
            Eigen::VectorXd d(kStateDim);
            for (Eigen::Index i = 0; i < kStateDim; ++i) d(i) = (*s.process_noise_diag)[static_cast<std::size_t>(i)];
            s.params.process_noise = d.asDiagonal();
        } else {
            s.params.process_noise = cv_process_noise(s.sigma_accel, s.sigma_extent, s.params.dt);
        }
    }
    if (!explicit_components.empty()) {
        s.params.birth.components = std::move(explicit_components);
        s.explicit_birth = true;
    } else if (rebuild_birth) {
        s.params.birth = frustum_birth(s.camera, s.birth_mass);
    }

    const auto check = [&](auto&& fn) {
        try {
            fn();
        } catch (const InvalidArgument& e) {
            throw ParseError(source, 0, e.what());
        }
    };
    check([&] { s.params.validate(); });
    if (!(s.filter.gate_prob > 0.0)) throw ParseError(source, 0, "gate_prob must be positive");
    if (!(s.filter.extract_threshold >= 0.0 && s.filter.extract_threshold < 1.0))
        throw ParseError(source, 0, "extract_threshold must lie in [0,1)");
    if (s.filter.max_hypotheses < 1) throw ParseError(source, 0, "max_hypotheses must be >= 1");
    return s;
}

inline Settings load_settings(const std::string& path, const CameraModel& cam) {
    return apply_settings(default_settings(cam), io::parse_key_values(path), path);
}

/// Writes every setting as key=value lines that apply_settings reads back.
inline void write_settings(std::ostream& out, const Settings& s) {
    using io::format_real;
    const auto& p = s.params;
    out << "p_detect=" << format_real(p.p_detect) << '\n'
        << "p_survive=" << format_real(p.p_survive) << '\n'
        << "clutter_rate=" << format_real(p.clutter_rate) << '\n'
        << "clutter_volume=" << format_real(p.clutter_volume) << '\n'
        << "dt=" << format_real(p.dt) << '\n';
    if (s.process_noise_diag) {
        out << "process_noise_diag=";
        for (std::size_t i = 0; i < s.process_noise_diag->size(); ++i)
            out << (i ? " " : "") << format_real((*s.process_noise_diag)[i]);
        out << '\n';
    } else {
        out << "sigma_accel=" << format_real(s.sigma_accel) << '\n'
            << "sigma_extent=" << format_real(s.sigma_extent) << '\n';
    }
    out << "measurement_noise_std=";
    for (Eigen::Index i = 0; i < p.measurement_noise.rows(); ++i)
        out << (i ? " " : "") << format_real(std::sqrt(p.measurement_noise(i, i)));
    out << '\n';
    if (s.explicit_birth) {
        for (const auto& c : p.birth.components) {
            out << "birth_component=" << format_real(std::exp(c.log_weight));
            for (Eigen::Index i = 0; i < c.density.mean.size(); ++i) out << ' ' << format_real(c.density.mean(i));
            for (Eigen::Index i = 0; i < c.density.mean.size(); ++i)
                out << ' ' << format_real(std::sqrt(c.density.cov(i, i)));
            out << '\n';
        }
    } else {
        out << "birth_mass=" << format_real(s.birth_mass) << '\n';
    }
    const auto& f = s.filter;
    out << "gate_prob=" << format_real(f.gate_prob) << '\n'
        << "k_max=" << f.k_max << '\n'
        << "extract_threshold=" << format_real(f.extract_threshold) << '\n'
        << "hypothesis_min_weight=" << format_real(f.hypothesis_min_weight) << '\n'
        << "max_hypotheses=" << f.max_hypotheses << '\n'
        << "bernoulli_min_existence=" << format_real(f.bernoulli_min_existence) << '\n'
        << "ppp_prune_weight=" << format_real(std::exp(f.ppp_prune_log_weight)) << '\n'
        << "ppp_merge_threshold=" << format_real(f.ppp_merge_threshold) << '\n'
        << "ppp_max_components=" << f.ppp_max_components << '\n'
        << "sigma_alpha=" << format_real(s.sigma.alpha) << '\n'
        << "sigma_beta=" << format_real(s.sigma.beta) << '\n'
        << "sigma_kappa=" << format_real(s.sigma.kappa) << '\n'
        << "n_frames=" << s.n_frames << '\n'
        << "seed=" << s.seed << '\n'
        << "cull_outside_fov=" << (s.cull_outside_fov ? "true" : "false") << '\n';
    for (const auto& o : s.initial_objects) {
        out << "initial_object=";
        const auto v = o.to_vector();
        for (Eigen::Index i = 0; i < v.size(); ++i) out << (i ? " " : "") << format_real(v(i));
        out << '\n';
    }
}

}  // namespace pmbm
