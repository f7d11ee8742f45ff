#pragma once

// Gaussian densities, non-normalized Gaussian mixtures, and the unscented
// transform used for every prediction and update in the filter.

#include "pmbm/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <span>
#include <vector>

namespace pmbm {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// log(sum(exp(values))) without overflow. Returns -inf for an empty range.
inline double log_sum_exp(std::span<const double> values) {
    double hi = kNegInf;
    for (double v : values) hi = std::max(hi, v);
    if (!std::isfinite(hi)) return hi;
    double acc = 0.0;
    for (double v : values) acc += std::exp(v - hi);
    return hi + std::log(acc);
}

inline double log_sum_exp(double a, double b) {
    const double values[] = {a, b};
    return log_sum_exp(values);
}

struct GaussianDensity {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;

    [[nodiscard]] Eigen::Index dim() const { return mean.size(); }
};

/// Symmetric within 1e-9 relative (inf-norm) and no eigenvalue below -1e-9 * trace.
inline bool is_valid_covariance(const Eigen::MatrixXd& cov) {
    if (cov.rows() != cov.cols()) return false;
    if (!cov.allFinite()) return false;
    if (cov.size() == 0) return true;
    const double scale = cov.cwiseAbs().rowwise().sum().maxCoeff();
    const double asym = (cov - cov.transpose()).cwiseAbs().rowwise().sum().maxCoeff();
    if (asym > 1e-9 * scale) return false;
    const Eigen::MatrixXd sym = 0.5 * (cov + cov.transpose());
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) return false;
    const double floor = -1e-9 * std::max(std::abs(sym.trace()), std::numeric_limits<double>::min());
    return es.eigenvalues().minCoeff() >= floor;
}

inline bool is_valid(const GaussianDensity& g) {
    return g.mean.allFinite() && g.cov.rows() == g.mean.size() && is_valid_covariance(g.cov);
}

/// log N(x; mean, cov) from a precomputed Cholesky factor of cov.
inline double log_gaussian_pdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                               const Eigen::LLT<Eigen::MatrixXd>& cov_llt) {
    const Eigen::VectorXd white = cov_llt.matrixL().solve(x - mean);
    const Eigen::MatrixXd& l = cov_llt.matrixLLT();
    const double log_det = 2.0 * l.diagonal().array().log().sum();
    const auto dim = static_cast<double>(x.size());
    return -0.5 * (dim * std::log(2.0 * std::numbers::pi) + log_det + white.squaredNorm());
}

inline double log_gaussian_pdf(const Eigen::VectorXd& x, const GaussianDensity& g) {
    const Eigen::LLT<Eigen::MatrixXd> llt(g.cov);
    if (llt.info() != Eigen::Success) throw NumericalError("log_gaussian_pdf: covariance is not positive definite");
    return log_gaussian_pdf(x, g.mean, llt);
}

/// Lower-triangular L with L * L^T = cov. Near-singular inputs get diagonal
/// jitter of 1e-12 * trace, escalated x10 for up to three retries.
inline Eigen::MatrixXd covariance_sqrt(const Eigen::MatrixXd& cov) {
    if (cov.isZero(0.0)) return Eigen::MatrixXd::Zero(cov.rows(), cov.cols());
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() == Eigen::Success) return llt.matrixL();
    double jitter = 1e-12 * std::abs(cov.trace());
    const auto eye = Eigen::MatrixXd::Identity(cov.rows(), cov.cols());
    for (int attempt = 0; attempt < 4; ++attempt, jitter *= 10.0) {
        llt.compute(cov + jitter * eye);
        if (llt.info() == Eigen::Success) return llt.matrixL();
    }
    throw NumericalError("covariance_sqrt: matrix is not positive semi-definite");
}

/// Spread parameters of the scaled sigma-point set.
struct SigmaParams {
    double alpha = 1.0;
    double beta = 2.0;
    double kappa = 0.0;
};

struct UnscentedResult {
    GaussianDensity output;
    Eigen::MatrixXd cross_cov;  ///< E[(x - mean_x)(y - mean_y)^T]
};

/// Propagates g through fn with the standard 2n+1 sigma-point rule; `noise` is
/// added to the output covariance.
template <class Fn>
UnscentedResult unscented_transform(const GaussianDensity& g, Fn&& fn, const Eigen::MatrixXd& noise,
                                    const SigmaParams& params = {}) {
    if (!(params.alpha > 0.0)) throw InvalidArgument("unscented_transform: alpha must be positive");
    const Eigen::Index n = g.dim();
    const double nd = static_cast<double>(n);
    const double lambda = params.alpha * params.alpha * (nd + params.kappa) - nd;
    const double spread = nd + lambda;
    if (!(spread > 0.0)) throw InvalidArgument("unscented_transform: n + lambda must be positive");

    const Eigen::MatrixXd offsets = std::sqrt(spread) * covariance_sqrt(g.cov);
    const double wm0 = lambda / spread;
    const double wc0 = wm0 + (1.0 - params.alpha * params.alpha + params.beta);
    const double wi = 0.5 / spread;

    std::vector<Eigen::VectorXd> points;
    points.reserve(static_cast<std::size_t>(2 * n + 1));
    points.push_back(fn(g.mean));
    for (Eigen::Index i = 0; i < n; ++i) points.push_back(fn(Eigen::VectorXd(g.mean + offsets.col(i))));
    for (Eigen::Index i = 0; i < n; ++i) points.push_back(fn(Eigen::VectorXd(g.mean - offsets.col(i))));

    const Eigen::Index m = points.front().size();
    if (noise.rows() != m || noise.cols() != m) throw InvalidArgument("unscented_transform: noise has wrong shape");

    Eigen::VectorXd mean_y = wm0 * points[0];
    for (std::size_t k = 1; k < points.size(); ++k) mean_y += wi * points[k];

    Eigen::MatrixXd cov_y = noise;
    Eigen::MatrixXd cross = Eigen::MatrixXd::Zero(n, m);
    {
        const Eigen::VectorXd dy = points[0] - mean_y;
        cov_y.noalias() += wc0 * dy * dy.transpose();
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto idx = static_cast<std::size_t>(i);
        const Eigen::VectorXd dy_plus = points[1 + idx] - mean_y;
        const Eigen::VectorXd dy_minus = points[1 + static_cast<std::size_t>(n) + idx] - mean_y;
        cov_y.noalias() += wi * (dy_plus * dy_plus.transpose() + dy_minus * dy_minus.transpose());
        cross.noalias() += wi * offsets.col(i) * (dy_plus - dy_minus).transpose();
    }
    cov_y = 0.5 * (cov_y + cov_y.transpose());
    if (!mean_y.allFinite() || !cov_y.allFinite())
        throw NumericalError("unscented_transform: non-finite output");
    return {{std::move(mean_y), std::move(cov_y)}, std::move(cross)};
}

/// Time update of a Gaussian through a motion function with additive noise Q.
template <class Motion>
GaussianDensity ukf_predict(const GaussianDensity& g, Motion&& motion, const Eigen::MatrixXd& q,
                            const SigmaParams& params = {}) {
    return unscented_transform(g, std::forward<Motion>(motion), q, params).output;
}

/// Predicted measurement of one Gaussian. Everything here is independent of
/// the actual measurement, so one prediction serves every z it is tested against.
class MeasurementPrediction {
public:
    template <class Measure>
    MeasurementPrediction(const GaussianDensity& prior, Measure&& measure, const Eigen::MatrixXd& r,
                          const SigmaParams& params = {})
        : prior_mean_(prior.mean) {
        auto ut = unscented_transform(prior, std::forward<Measure>(measure), r, params);
        z_hat_ = std::move(ut.output.mean);
        s_ = std::move(ut.output.cov);
        s_llt_.compute(s_);
        if (s_llt_.info() != Eigen::Success || !(s_llt_.matrixLLT().diagonal().minCoeff() > 0.0))
            throw NumericalError("ukf_update: innovation covariance is singular");
        // K = C S^-1
        gain_ = s_llt_.solve(ut.cross_cov.transpose()).transpose();
        posterior_cov_ = prior.cov - gain_ * s_ * gain_.transpose();
        posterior_cov_ = 0.5 * (posterior_cov_ + posterior_cov_.transpose());
        const double log_det = 2.0 * s_llt_.matrixLLT().diagonal().array().log().sum();
        log_norm_ = -0.5 * (static_cast<double>(z_hat_.size()) * std::log(2.0 * std::numbers::pi) + log_det);
    }

    [[nodiscard]] const Eigen::VectorXd& predicted_mean() const { return z_hat_; }
    [[nodiscard]] const Eigen::MatrixXd& innovation_cov() const { return s_; }
    [[nodiscard]] const Eigen::MatrixXd& gain() const { return gain_; }
    [[nodiscard]] const Eigen::MatrixXd& posterior_cov() const { return posterior_cov_; }

    /// Squared Mahalanobis distance of z from the predicted measurement.
    [[nodiscard]] double mahalanobis2(const Eigen::VectorXd& z) const {
        return s_llt_.matrixL().solve(z - z_hat_).squaredNorm();
    }

    /// log N(z; z_hat, S), i.e. log of the prior's inner product with the measurement pdf.
    [[nodiscard]] double log_likelihood(const Eigen::VectorXd& z) const {
        return log_norm_ - 0.5 * mahalanobis2(z);
    }

    [[nodiscard]] GaussianDensity posterior(const Eigen::VectorXd& z) const {
        return {prior_mean_ + gain_ * (z - z_hat_), posterior_cov_};
    }

private:
    Eigen::VectorXd prior_mean_;
    Eigen::VectorXd z_hat_;
    Eigen::MatrixXd s_;
    Eigen::LLT<Eigen::MatrixXd> s_llt_;
    Eigen::MatrixXd gain_;
    Eigen::MatrixXd posterior_cov_;
    double log_norm_ = 0.0;
};

struct UpdateResult {
    GaussianDensity posterior;
    double log_likelihood = 0.0;
};

template <class Measure>
UpdateResult ukf_update(const GaussianDensity& g, const Eigen::VectorXd& z, Measure&& measure,
                        const Eigen::MatrixXd& r, const SigmaParams& params = {}) {
    const MeasurementPrediction pred(g, std::forward<Measure>(measure), r, params);
    return {pred.posterior(z), pred.log_likelihood(z)};
}

// ---------------------------------------------------------------------------
// Mixtures

struct WeightedGaussian {
    double log_weight = 0.0;
    GaussianDensity density;
};

/// Non-normalized Gaussian mixture D(x) = sum_c exp(log_weight_c) N(x; m_c, P_c).
/// The Poisson rate is the total mass.
struct GaussianMixture {
    std::vector<WeightedGaussian> components;

    [[nodiscard]] std::size_t size() const { return components.size(); }
    [[nodiscard]] bool empty() const { return components.empty(); }

    [[nodiscard]] double log_mass() const {
        std::vector<double> lw;
        lw.reserve(components.size());
        for (const auto& c : components) lw.push_back(c.log_weight);
        return log_sum_exp(lw);
    }
    [[nodiscard]] double mass() const { return std::exp(log_mass()); }
};

/// Collapses weighted Gaussians into one with the same first two moments.
/// Returns the total log weight alongside the matched density.
inline WeightedGaussian moment_match(std::span<const WeightedGaussian> parts) {
    if (parts.empty()) throw InvalidArgument("moment_match: empty input");
    std::vector<double> lw;
    lw.reserve(parts.size());
    for (const auto& p : parts) lw.push_back(p.log_weight);
    const double total = log_sum_exp(lw);
    if (!std::isfinite(total)) throw InvalidArgument("moment_match: zero total weight");

    const Eigen::Index n = parts.front().density.dim();
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(n);
    std::vector<double> w(parts.size());
    for (std::size_t k = 0; k < parts.size(); ++k) {
        w[k] = std::exp(parts[k].log_weight - total);
        mean += w[k] * parts[k].density.mean;
    }
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(n, n);
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const Eigen::VectorXd d = parts[k].density.mean - mean;
        cov += w[k] * (parts[k].density.cov + d * d.transpose());
    }
    cov = 0.5 * (cov + cov.transpose());
    return {total, {std::move(mean), std::move(cov)}};
}

/// Prune, merge and cap a mixture.
///
/// Components with log weight below `prune_log_threshold` are dropped. The
/// remaining ones are merged greedily: the heaviest unmerged component absorbs
/// every other component whose mean lies within squared Mahalanobis distance
/// `merge_mahalanobis_threshold` under the heavy component's covariance. The
/// result is capped at `max_components` by weight. Surviving components keep
/// the relative order of the component that led each merge.
inline GaussianMixture gm_reduce(const GaussianMixture& m, double prune_log_threshold,
                                 double merge_mahalanobis_threshold, std::size_t max_components) {
    if (max_components < 1) throw InvalidArgument("gm_reduce: max_components must be >= 1");

    std::vector<std::size_t> alive;
    for (std::size_t i = 0; i < m.components.size(); ++i) {
        const double lw = m.components[i].log_weight;
        if (!std::isnan(lw) && lw >= prune_log_threshold && lw > kNegInf) alive.push_back(i);
    }

    std::vector<std::size_t> order = alive;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return m.components[a].log_weight > m.components[b].log_weight;
    });

    std::vector<bool> used(m.components.size(), false);
    std::vector<std::pair<std::size_t, WeightedGaussian>> merged;  // (leader index, result)
    for (std::size_t leader : order) {
        if (used[leader]) continue;
        const auto& lead = m.components[leader].density;
        const Eigen::LDLT<Eigen::MatrixXd> ldlt(lead.cov);
        std::vector<WeightedGaussian> group;
        for (std::size_t other : order) {
            if (used[other]) continue;
            bool close = other == leader;
            if (!close) {
                const Eigen::VectorXd d = m.components[other].density.mean - lead.mean;
                if (d.isZero(0.0)) {
                    close = true;
                } else if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
                    const double dist2 = d.dot(ldlt.solve(d));
                    close = std::isfinite(dist2) && dist2 <= merge_mahalanobis_threshold;
                }
            }
            if (close) {
                used[other] = true;
                group.push_back(m.components[other]);
            }
        }
        if (group.size() == 1) {
            merged.emplace_back(leader, std::move(group.front()));
        } else {
            merged.emplace_back(leader, moment_match(group));
        }
    }

    if (merged.size() > max_components) {
        std::stable_sort(merged.begin(), merged.end(), [](const auto& a, const auto& b) {
            return a.second.log_weight > b.second.log_weight;
        });
        merged.resize(max_components);
    }
    std::sort(merged.begin(), merged.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

    GaussianMixture out;
    out.components.reserve(merged.size());
    for (auto& [idx, comp] : merged) out.components.push_back(std::move(comp));
    return out;
}

}  // namespace pmbm
