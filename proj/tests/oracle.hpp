#pragma once

// Independent references for the filter tests: closed-form Kalman formulas
// and brute-force enumeration of every data association. Nothing here calls
// into the filter's update code.

#include "pmbm/filter.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <map>
#include <numbers>
#include <random>
#include <vector>

namespace oracle {

inline double log_normal(const Eigen::VectorXd& z, const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov) {
    const Eigen::VectorXd d = z - mean;
    const double quad = d.dot(cov.inverse() * d);
    const double k = static_cast<double>(z.size());
    return -0.5 * (k * std::log(2.0 * std::numbers::pi) + std::log(cov.determinant()) + quad);
}

struct Kalman {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
    double log_lik = 0.0;
};

inline Kalman kalman_update(const Eigen::VectorXd& m, const Eigen::MatrixXd& p, const Eigen::MatrixXd& h,
                            const Eigen::MatrixXd& r, const Eigen::VectorXd& z) {
    const Eigen::MatrixXd s = h * p * h.transpose() + r;
    const Eigen::MatrixXd k = p * h.transpose() * s.inverse();
    Kalman out;
    out.mean = m + k * (z - h * m);
    out.cov = p - k * s * k.transpose();
    out.log_lik = log_normal(z, h * m, s);
    return out;
}

/// Linear measurement model: position and box size, z = H x.
inline Eigen::MatrixXd position_extent_h() {
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(5, 8);
    h(0, 0) = h(1, 1) = h(2, 2) = 1.0;
    h(3, 6) = h(4, 7) = 1.0;
    return h;
}

inline pmbm::FilterModel linear_model(const pmbm::ModelParams& params, const Eigen::MatrixXd& h) {
    pmbm::FilterModel m;
    m.params = params;
    m.motion = [](const Eigen::VectorXd& x, double dt) { return pmbm::cv_transition(x, dt); };
    m.measure = [h](const Eigen::VectorXd& x) -> Eigen::VectorXd { return h * x; };
    return m;
}

/// One enumerated child: its normalized weight and its Bernoullis keyed by
/// (track id, measurement index or -1).
struct Child {
    double weight = 0.0;
    std::map<std::pair<pmbm::TrackId, long>, pmbm::BernoulliComponent> bernoullis;
};

using ChildKey = std::vector<std::pair<pmbm::TrackId, long>>;

inline ChildKey key_of(const Child& c) {
    ChildKey k;
    for (const auto& [key, b] : c.bernoullis) k.push_back(key);
    return k;
}

/// Exact update by enumerating, for every prior hypothesis, every map from
/// measurements to {background} or a distinct object. New Bernoullis take ids
/// next_track_id + m. New Bernoullis with zero existence are omitted.
inline std::map<ChildKey, Child> enumerate_update(const pmbm::PmbmDensity& prior,
                                                  const std::vector<Eigen::VectorXd>& z,
                                                  const pmbm::ModelParams& params, const Eigen::MatrixXd& h) {
    const double pd = params.p_detect;
    const double kappa = params.clutter_intensity();
    const auto& r = params.measurement_noise;
    const std::size_t n_meas = z.size();

    // Background cells.
    std::vector<double> bg_lik(n_meas);
    std::vector<pmbm::BernoulliComponent> bg_bern(n_meas);
    for (std::size_t m = 0; m < n_meas; ++m) {
        double inner = 0.0;
        Eigen::VectorXd mean = Eigen::VectorXd::Zero(8);
        std::vector<std::pair<double, Kalman>> parts;
        for (const auto& c : prior.undetected.components) {
            const auto k = kalman_update(c.density.mean, c.density.cov, h, r, z[m]);
            const double w = std::exp(c.log_weight + k.log_lik);
            inner += w;
            parts.emplace_back(w, k);
        }
        bg_lik[m] = kappa + pd * inner;
        auto& b = bg_bern[m];
        b.track_id = prior.next_track_id + m;
        b.measurement = m;
        b.r = pd * inner / bg_lik[m];
        if (inner > 0.0) {
            for (const auto& [w, k] : parts) mean += (w / inner) * k.mean;
            Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(8, 8);
            for (const auto& [w, k] : parts) {
                const Eigen::VectorXd d = k.mean - mean;
                cov += (w / inner) * (k.cov + d * d.transpose());
            }
            b.density = {mean, cov};
        }
    }

    std::vector<Child> raw;
    for (const auto& hyp : prior.hypotheses) {
        const std::size_t n_obj = hyp.bernoullis.size();
        std::vector<long> assign(n_meas, -1);  // object index or -1 for background
        auto rec = [&](auto&& self, std::size_t m, std::vector<bool>& used) -> void {
            if (m == n_meas) {
                Child c;
                double w = std::exp(hyp.log_weight);
                for (std::size_t i = 0; i < n_obj; ++i) {
                    const auto& b = hyp.bernoullis[i];
                    long meas = -1;
                    for (std::size_t mm = 0; mm < n_meas; ++mm)
                        if (assign[mm] == static_cast<long>(i)) meas = static_cast<long>(mm);
                    pmbm::BernoulliComponent nb = b;
                    if (meas < 0) {
                        w *= 1.0 - b.r * pd;
                        nb.r = 1.0 - b.r * pd > 0.0 ? b.r * (1.0 - pd) / (1.0 - b.r * pd) : b.r;
                        nb.measurement.reset();
                    } else {
                        const auto k = kalman_update(b.density.mean, b.density.cov, h, r, z[static_cast<std::size_t>(meas)]);
                        w *= b.r * pd * std::exp(k.log_lik);
                        nb.r = 1.0;
                        nb.density = {k.mean, k.cov};
                        nb.measurement = static_cast<std::size_t>(meas);
                    }
                    c.bernoullis[{b.track_id, meas}] = nb;
                }
                for (std::size_t mm = 0; mm < n_meas; ++mm) {
                    if (assign[mm] >= 0) continue;
                    w *= bg_lik[mm];
                    if (bg_bern[mm].r > 0.0) c.bernoullis[{bg_bern[mm].track_id, static_cast<long>(mm)}] = bg_bern[mm];
                }
                c.weight = w;
                if (w > 0.0) raw.push_back(std::move(c));
                return;
            }
            assign[m] = -1;
            self(self, m + 1, used);
            for (std::size_t i = 0; i < n_obj; ++i) {
                if (used[i]) continue;
                used[i] = true;
                assign[m] = static_cast<long>(i);
                self(self, m + 1, used);
                used[i] = false;
                assign[m] = -1;
            }
        };
        std::vector<bool> used(n_obj, false);
        rec(rec, 0, used);
    }

    double total = 0.0;
    for (const auto& c : raw) total += c.weight;
    std::map<ChildKey, Child> out;
    for (auto& c : raw) {
        c.weight /= total;
        auto key = key_of(c);
        out.emplace(std::move(key), std::move(c));
    }
    return out;
}

inline ChildKey key_of(const pmbm::GlobalHypothesis& h) {
    ChildKey k;
    for (const auto& b : h.bernoullis)
        k.emplace_back(b.track_id, b.measurement ? static_cast<long>(*b.measurement) : -1L);
    std::sort(k.begin(), k.end());
    return k;
}

inline double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

inline double rel(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    return (a - b).norm() / std::max(b.norm(), 1e-300);
}

/// Random scenario: up to two prior hypotheses over up to two Bernoullis,
/// up to two PPP components, up to three measurements near the objects.
struct MicroScenario {
    pmbm::PmbmDensity prior;
    std::vector<Eigen::VectorXd> z;
    pmbm::ModelParams params;
};

inline Eigen::MatrixXd random_cov(std::mt19937_64& rng, Eigen::Index n, double scale) {
    std::normal_distribution<double> g(0.0, 1.0);
    Eigen::MatrixXd a(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) a(i, j) = g(rng);
    return scale * (a * a.transpose() / static_cast<double>(n) + 0.2 * Eigen::MatrixXd::Identity(n, n));
}

inline MicroScenario random_micro_scenario(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_int_distribution<int> count02(0, 2);
    const Eigen::MatrixXd h = position_extent_h();

    MicroScenario s;
    auto& p = s.params;
    p.p_detect = 0.5 + 0.49 * unit(rng);
    p.p_survive = 0.99;
    p.clutter_rate = 0.5 + 3.0 * unit(rng);
    p.clutter_volume = 10.0 + 100.0 * unit(rng);
    p.process_noise = 0.1 * Eigen::MatrixXd::Identity(8, 8);
    p.measurement_noise = random_cov(rng, 5, 0.5);

    auto random_state = [&] {
        Eigen::VectorXd x(8);
        for (Eigen::Index i = 0; i < 8; ++i) x(i) = 3.0 * g(rng);
        return x;
    };

    const int n_ppp = count02(rng);
    for (int c = 0; c < n_ppp; ++c)
        s.prior.undetected.components.push_back({std::log(0.05 + unit(rng)), {random_state(), random_cov(rng, 8, 2.0)}});

    const int n_obj = count02(rng);
    const int n_hyp = n_obj > 0 ? 1 + static_cast<int>(unit(rng) < 0.5) : 1;
    s.prior.hypotheses.clear();
    pmbm::TrackId next = 1;
    std::vector<Eigen::VectorXd> centers;
    for (int j = 0; j < n_hyp; ++j) {
        pmbm::GlobalHypothesis hyp;
        hyp.log_weight = std::log(0.2 + unit(rng));
        for (int i = 0; i < n_obj; ++i) {
            pmbm::BernoulliComponent b;
            b.r = unit(rng) < 0.2 ? 1.0 : 0.05 + 0.9 * unit(rng);
            b.density = {random_state(), random_cov(rng, 8, 1.0)};
            b.track_id = next++;  // distinct across hypotheses
            centers.push_back(h * b.density.mean);
            hyp.bernoullis.push_back(b);
        }
        s.prior.hypotheses.push_back(std::move(hyp));
    }
    {
        std::vector<double> lw;
        for (const auto& hyp : s.prior.hypotheses) lw.push_back(hyp.log_weight);
        const double total = pmbm::log_sum_exp(lw);
        for (auto& hyp : s.prior.hypotheses) hyp.log_weight -= total;
    }
    for (const auto& c : s.prior.undetected.components) centers.push_back(h * c.density.mean);
    s.prior.next_track_id = next;

    const int n_meas = std::uniform_int_distribution<int>(0, 3)(rng);
    for (int m = 0; m < n_meas; ++m) {
        Eigen::VectorXd z(5);
        if (!centers.empty() && unit(rng) < 0.8) {
            z = centers[std::uniform_int_distribution<std::size_t>(0, centers.size() - 1)(rng)];
            for (Eigen::Index i = 0; i < 5; ++i) z(i) += g(rng);
        } else {
            for (Eigen::Index i = 0; i < 5; ++i) z(i) = 3.0 * g(rng);
        }
        s.z.push_back(z);
    }
    return s;
}

/// Largest relative discrepancy between the filter's update and the
/// enumeration, or +inf when the child sets differ.
struct Comparison {
    double weight_err = 0.0;
    double r_err = 0.0;
    double mean_err = 0.0;
    double cov_err = 0.0;
    bool same_children = true;
    std::size_t n_children = 0;
};

inline Comparison compare_update(const pmbm::PmbmDensity& filtered, const std::map<ChildKey, Child>& expected) {
    Comparison c;
    c.n_children = expected.size();
    if (filtered.hypotheses.size() != expected.size()) {
        c.same_children = false;
        return c;
    }
    for (const auto& h : filtered.hypotheses) {
        const auto it = expected.find(key_of(h));
        if (it == expected.end()) {
            c.same_children = false;
            return c;
        }
        c.weight_err = std::max(c.weight_err, rel(std::exp(h.log_weight), it->second.weight));
        for (const auto& b : h.bernoullis) {
            const std::pair<pmbm::TrackId, long> k{b.track_id, b.measurement ? static_cast<long>(*b.measurement) : -1L};
            const auto& e = it->second.bernoullis.at(k);
            c.r_err = std::max(c.r_err, std::abs(b.r - e.r));
            c.mean_err = std::max(c.mean_err, (b.density.mean - e.density.mean).norm() / std::max(1.0, e.density.mean.norm()));
            c.cov_err = std::max(c.cov_err, (b.density.cov - e.density.cov).norm() / std::max(1.0, e.density.cov.norm()));
        }
    }
    return c;
}

}  // namespace oracle
