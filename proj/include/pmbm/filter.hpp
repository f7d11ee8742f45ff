#pragma once

// Poisson multi-Bernoulli mixture filter for point objects.
//
// The density is a Poisson intensity over undetected objects plus a mixture
// of multi-Bernoulli global hypotheses over detected ones. Prediction and
// update are closed-form in that family; the association sum in the update is
// truncated to the k best associations per hypothesis via Murty's algorithm.

#include "pmbm/assignment.hpp"
#include "pmbm/errors.hpp"
#include "pmbm/gaussian.hpp"
#include "pmbm/models.hpp"

#include <boost/math/distributions/chi_squared.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace pmbm {

using TrackId = std::uint64_t;

struct BernoulliComponent {
    double r = 0.0;  ///< existence probability
    GaussianDensity density;
    TrackId track_id = 0;
    /// Index of the measurement that updated this component in the latest update, if any.
    std::optional<std::size_t> measurement;
};

struct GlobalHypothesis {
    double log_weight = 0.0;
    std::vector<BernoulliComponent> bernoullis;
};

struct PmbmDensity {
    GaussianMixture undetected;
    std::vector<GlobalHypothesis> hypotheses{GlobalHypothesis{}};
    TrackId next_track_id = 1;
};

enum class CellKind { NewOrClutter, Missed, Detected };

/// One cell of an association partition: at most one object and one measurement.
struct AssociationCell {
    CellKind kind = CellKind::NewOrClutter;
    std::optional<std::size_t> object_index;
    std::optional<std::size_t> measurement_index;
};

struct CellResult {
    double log_likelihood = 0.0;
    BernoulliComponent bernoulli;
};

struct FilterConfig {
    double gate_prob = 0.999;            ///< >= 1 disables gating
    std::size_t k_max = 100;             ///< association budget per update
    double extract_threshold = 0.5;      ///< tau
    double hypothesis_min_weight = 1e-4; ///< relative to the heaviest hypothesis
    std::size_t max_hypotheses = 100;
    double bernoulli_min_existence = 1e-3;
    double ppp_prune_log_weight = std::log(1e-5);
    double ppp_merge_threshold = 4.0;    ///< squared Mahalanobis distance
    std::size_t ppp_max_components = 100;
    double duplicate_tolerance = 1e-9;

    /// No gating, no truncation, no pruning of any kind.
    static FilterConfig exact() {
        FilterConfig c;
        c.gate_prob = 1.0;
        c.k_max = std::numeric_limits<std::size_t>::max();
        c.hypothesis_min_weight = 0.0;
        c.max_hypotheses = std::numeric_limits<std::size_t>::max();
        c.bernoulli_min_existence = 0.0;
        c.ppp_prune_log_weight = -std::numeric_limits<double>::infinity();
        c.ppp_merge_threshold = -1.0;
        c.ppp_max_components = std::numeric_limits<std::size_t>::max();
        return c;
    }
};

struct Estimate {
    TrackId track_id = 0;
    Eigen::VectorXd mean;
    double existence = 0.0;
    std::optional<std::size_t> measurement;
};

/// Chi-square gate for a measurement space of the given dimension.
inline double gate_threshold(double gate_prob, Eigen::Index dim) {
    if (gate_prob >= 1.0) return std::numeric_limits<double>::infinity();
    if (gate_prob <= 0.0) return 0.0;
    const boost::math::chi_squared dist(static_cast<double>(dim));
    return boost::math::quantile(dist, gate_prob);
}

namespace detail {

/// Exact-equality memo keyed by track id: hypotheses that share a Bernoulli
/// should not pay for its sigma-point transform twice.
template <class Value>
class DensityCache {
public:
    template <class Make>
    const Value& get(TrackId id, const GaussianDensity& g, Make&& make) {
        auto& bucket = entries_[id];
        for (auto& [key, value] : bucket)
            if (key->mean == g.mean && key->cov == g.cov) return value;
        bucket.emplace_back(&g, make());
        return bucket.back().second;
    }

private:
    std::unordered_map<TrackId, std::deque<std::pair<const GaussianDensity*, Value>>> entries_;
};

inline std::vector<double> hypothesis_log_weights(const PmbmDensity& p) {
    std::vector<double> lw;
    lw.reserve(p.hypotheses.size());
    for (const auto& h : p.hypotheses) lw.push_back(h.log_weight);
    return lw;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Prediction

inline PmbmDensity predict(const PmbmDensity& p, const FilterModel& model) {
    const auto& params = model.params;
    const double dt = params.dt;
    auto motion = [&](const Eigen::VectorXd& x) { return model.motion(x, dt); };
    const double log_ps = std::log(params.p_survive);

    PmbmDensity out;
    out.next_track_id = p.next_track_id;
    if (params.p_survive > 0.0) {
        for (const auto& c : p.undetected.components) {
            out.undetected.components.push_back(
                {c.log_weight + log_ps, ukf_predict(c.density, motion, params.process_noise, model.sigma)});
        }
    }
    for (const auto& c : params.birth.components) out.undetected.components.push_back(c);

    detail::DensityCache<GaussianDensity> cache;
    out.hypotheses.clear();
    out.hypotheses.reserve(p.hypotheses.size());
    for (const auto& h : p.hypotheses) {
        GlobalHypothesis nh;
        nh.log_weight = h.log_weight;
        nh.bernoullis.reserve(h.bernoullis.size());
        for (const auto& b : h.bernoullis) {
            const auto& pred = cache.get(b.track_id, b.density, [&] {
                return ukf_predict(b.density, motion, params.process_noise, model.sigma);
            });
            nh.bernoullis.push_back({b.r * params.p_survive, pred, b.track_id, std::nullopt});
        }
        out.hypotheses.push_back(std::move(nh));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Gating

struct GatingResult {
    Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> objects;  ///< Bernoulli x measurement
    Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> ppp;      ///< PPP component x measurement
};

namespace detail {

inline Eigen::Array<bool, Eigen::Dynamic, 1> gate_row(const MeasurementPrediction& pred,
                                                       std::span<const Eigen::VectorXd> z, double threshold) {
    Eigen::Array<bool, Eigen::Dynamic, 1> row(static_cast<Eigen::Index>(z.size()));
    for (std::size_t m = 0; m < z.size(); ++m)
        row(static_cast<Eigen::Index>(m)) = !(threshold < std::numeric_limits<double>::infinity()) ||
                                            pred.mahalanobis2(z[m]) <= threshold;
    return row;
}

}  // namespace detail

/// Pair (object, measurement) is feasible iff its squared innovation
/// Mahalanobis distance is within the chi-square quantile at `gate_prob`.
inline GatingResult gate(const GlobalHypothesis& h, const GaussianMixture& ppp, std::span<const Eigen::VectorXd> z,
                         const FilterModel& model, double gate_prob) {
    const auto& r = model.params.measurement_noise;
    const double threshold = gate_threshold(gate_prob, r.rows());
    const auto n_meas = static_cast<Eigen::Index>(z.size());
    GatingResult out;
    out.objects.resize(static_cast<Eigen::Index>(h.bernoullis.size()), n_meas);
    out.ppp.resize(static_cast<Eigen::Index>(ppp.size()), n_meas);
    for (std::size_t i = 0; i < h.bernoullis.size(); ++i) {
        const MeasurementPrediction pred(h.bernoullis[i].density, model.measure, r, model.sigma);
        out.objects.row(static_cast<Eigen::Index>(i)) = detail::gate_row(pred, z, threshold).transpose();
    }
    for (std::size_t c = 0; c < ppp.size(); ++c) {
        const MeasurementPrediction pred(ppp.components[c].density, model.measure, r, model.sigma);
        out.ppp.row(static_cast<Eigen::Index>(c)) = detail::gate_row(pred, z, threshold).transpose();
    }
    return out;
}

// ---------------------------------------------------------------------------
// Association cells

namespace detail {

struct PppPrediction {
    double log_weight;
    MeasurementPrediction pred;
};

/// New-object-or-clutter cell from precomputed PPP measurement predictions.
/// Only components with `use[c]` set contribute to <D, phi_z>.
inline CellResult new_cell(std::span<const PppPrediction> ppp, const std::vector<bool>& use, const Eigen::VectorXd& z,
                           const ModelParams& params, TrackId id) {
    const double log_kappa = std::log(params.clutter_intensity());
    const double log_pd = std::log(params.p_detect);

    std::vector<WeightedGaussian> parts;
    std::vector<double> terms;
    double best = kNegInf;
    std::size_t best_idx = ppp.size();
    for (std::size_t c = 0; c < ppp.size(); ++c) {
        const double ll = ppp[c].pred.log_likelihood(z);
        if (use[c]) {
            const double lw = ppp[c].log_weight + ll;
            if (lw > kNegInf) {
                terms.push_back(lw);
                parts.push_back({lw, ppp[c].pred.posterior(z)});
            }
        }
        if (ll > best || best_idx == ppp.size()) {
            best = ll;
            best_idx = c;
        }
    }
    const double log_inner = log_sum_exp(terms);  // log <D, phi_z>
    const double log_detect = log_pd + log_inner;
    CellResult out;
    out.log_likelihood = log_sum_exp(log_kappa, log_detect);
    out.bernoulli.track_id = id;
    if (parts.empty() || !(log_detect > kNegInf)) {
        out.bernoulli.r = 0.0;
        if (best_idx < ppp.size()) out.bernoulli.density = ppp[best_idx].pred.posterior(z);
        return out;
    }
    out.bernoulli.r = std::clamp(std::exp(log_detect - out.log_likelihood), 0.0, 1.0);
    out.bernoulli.density = moment_match(parts).density;
    return out;
}

}  // namespace detail

/// Cell {m}: measurement from clutter or from a previously undetected object.
inline CellResult update_cell_new(const GaussianMixture& ppp, const Eigen::VectorXd& z, const FilterModel& model,
                                  TrackId new_id) {
    std::vector<detail::PppPrediction> preds;
    preds.reserve(ppp.size());
    for (const auto& c : ppp.components)
        preds.push_back({c.log_weight, MeasurementPrediction(c.density, model.measure,
                                                             model.params.measurement_noise, model.sigma)});
    const std::vector<bool> use(preds.size(), true);
    return detail::new_cell(preds, use, z, model.params, new_id);
}

/// Cell {i}: object i not detected.
inline CellResult update_cell_missed(const BernoulliComponent& b, const ModelParams& params) {
    CellResult out;
    out.bernoulli = b;
    out.bernoulli.measurement.reset();
    const double miss = 1.0 - b.r * params.p_detect;
    if (!(miss > 0.0)) {
        // Certain object, certain detection: this cell has zero likelihood.
        out.log_likelihood = kNegInf;
        return out;
    }
    out.log_likelihood = std::log(miss);
    out.bernoulli.r = std::clamp(b.r * (1.0 - params.p_detect) / miss, 0.0, 1.0);
    return out;
}

namespace detail {

inline CellResult detected_cell(const BernoulliComponent& b, const MeasurementPrediction& pred,
                                const Eigen::VectorXd& z, std::size_t m, const ModelParams& params) {
    CellResult out;
    out.log_likelihood = std::log(b.r) + std::log(params.p_detect) + pred.log_likelihood(z);
    out.bernoulli = {1.0, pred.posterior(z), b.track_id, m};
    return out;
}

}  // namespace detail

/// Cell {i, m}: object i generated measurement m.
inline CellResult update_cell_detected(const BernoulliComponent& b, const Eigen::VectorXd& z,
                                       const FilterModel& model, std::size_t measurement_index = 0) {
    const MeasurementPrediction pred(b.density, model.measure, model.params.measurement_noise, model.sigma);
    return detail::detected_cell(b, pred, z, measurement_index, model.params);
}

// ---------------------------------------------------------------------------
// Update

namespace detail {

// Added to the cost of detecting an object whose missed cell has zero
// likelihood, so that Murty lists the associations that detect it first.
inline constexpr double kMustDetectBonus = 1e8;

}  // namespace detail

/// Full measurement update. Each prior hypothesis j contributes up to
/// max(1, ceil(k_max * w_j)) children, the best associations by likelihood.
inline PmbmDensity update(const PmbmDensity& p, std::span<const Eigen::VectorXd> z, const FilterModel& model,
                          const FilterConfig& config) {
    if (config.k_max < 1) throw InvalidArgument("update: k_max must be >= 1");
    const auto& params = model.params;
    const auto& rn = params.measurement_noise;
    const double threshold = gate_threshold(config.gate_prob, rn.rows());
    const std::size_t n_meas = z.size();
    const double log_pd = std::log(params.p_detect);

    // Undetected intensity and the measurement-driven new-object cells.
    std::vector<detail::PppPrediction> ppp;
    ppp.reserve(p.undetected.size());
    for (const auto& c : p.undetected.components)
        ppp.push_back({c.log_weight, MeasurementPrediction(c.density, model.measure, rn, model.sigma)});

    PmbmDensity out;
    out.next_track_id = p.next_track_id;
    std::vector<CellResult> new_cells;
    new_cells.reserve(n_meas);
    for (std::size_t m = 0; m < n_meas; ++m) {
        std::vector<bool> use(ppp.size());
        for (std::size_t c = 0; c < ppp.size(); ++c)
            use[c] = !(threshold < std::numeric_limits<double>::infinity()) || ppp[c].pred.mahalanobis2(z[m]) <= threshold;
        new_cells.push_back(detail::new_cell(ppp, use, z[m], params, out.next_track_id++));
    }

    const double log_miss_ppp = std::log1p(-params.p_detect);
    for (const auto& c : p.undetected.components) {
        const double lw = c.log_weight + log_miss_ppp;
        if (lw > kNegInf) out.undetected.components.push_back({lw, c.density});
    }

    const auto prior_lw = detail::hypothesis_log_weights(p);
    const double prior_total = log_sum_exp(prior_lw);

    struct Child {
        double log_weight;
        GlobalHypothesis hypothesis;
    };
    std::vector<Child> children;
    detail::DensityCache<MeasurementPrediction> cache;

    for (std::size_t j = 0; j < p.hypotheses.size(); ++j) {
        const auto& hyp = p.hypotheses[j];
        const std::size_t n_obj = hyp.bernoullis.size();

        std::vector<CellResult> missed;
        missed.reserve(n_obj);
        std::vector<const MeasurementPrediction*> preds(n_obj, nullptr);
        for (std::size_t i = 0; i < n_obj; ++i) {
            const auto& b = hyp.bernoullis[i];
            missed.push_back(update_cell_missed(b, params));
            if (b.r > 0.0 && params.p_detect > 0.0 && n_meas > 0) {
                preds[i] = &cache.get(b.track_id, b.density,
                                      [&] { return MeasurementPrediction(b.density, model.measure, rn, model.sigma); });
            }
        }

        // Detected-cell log-likelihoods for gated pairs; -inf elsewhere.
        Eigen::MatrixXd det_ll = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(n_meas),
                                                           static_cast<Eigen::Index>(n_obj), kNegInf);
        for (std::size_t i = 0; i < n_obj; ++i) {
            if (preds[i] == nullptr) continue;
            const double base = std::log(hyp.bernoullis[i].r) + log_pd;
            for (std::size_t m = 0; m < n_meas; ++m) {
                const double d2 = preds[i]->mahalanobis2(z[m]);
                if (d2 <= threshold || !(threshold < std::numeric_limits<double>::infinity()))
                    det_ll(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(i)) =
                        base + preds[i]->log_likelihood(z[m]);
            }
        }

        // Rows that can only go to the background are fixed; objects no
        // measurement can reach are fixed as missed.
        std::vector<std::size_t> rows;
        std::vector<std::size_t> fixed_rows;
        for (std::size_t m = 0; m < n_meas; ++m) {
            if ((det_ll.row(static_cast<Eigen::Index>(m)).array() > kNegInf).any())
                rows.push_back(m);
            else
                fixed_rows.push_back(m);
        }
        std::vector<std::size_t> cols;
        for (std::size_t i = 0; i < n_obj; ++i) {
            bool reachable = false;
            for (std::size_t m : rows)
                reachable = reachable || det_ll(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(i)) > kNegInf;
            if (reachable) cols.push_back(i);
        }

        bool feasible = true;
        for (std::size_t m : fixed_rows) feasible = feasible && new_cells[m].log_likelihood > kNegInf;
        for (std::size_t i = 0; i < n_obj; ++i) {
            const bool in_cols = std::find(cols.begin(), cols.end(), i) != cols.end();
            if (!in_cols && !(missed[i].log_likelihood > kNegInf)) feasible = false;
        }
        if (!feasible) continue;

        const auto nr = static_cast<Eigen::Index>(rows.size());
        const auto nc = static_cast<Eigen::Index>(cols.size());
        CostMatrix cost = CostMatrix::Constant(nr, nc + nr, std::numeric_limits<double>::infinity());
        for (Eigen::Index a = 0; a < nr; ++a) {
            const std::size_t m = rows[static_cast<std::size_t>(a)];
            for (Eigen::Index b = 0; b < nc; ++b) {
                const std::size_t i = cols[static_cast<std::size_t>(b)];
                const double ll = det_ll(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(i));
                if (!(ll > kNegInf)) continue;
                const double miss_ll = missed[i].log_likelihood;
                cost(a, b) = miss_ll > kNegInf ? -(ll - miss_ll) : -ll - detail::kMustDetectBonus;
            }
            const double bg = new_cells[m].log_likelihood;
            if (bg > kNegInf) cost(a, nc + a) = -bg;
        }
        bool rows_ok = true;
        for (Eigen::Index a = 0; a < nr; ++a)
            rows_ok = rows_ok && (cost.row(a).array() < std::numeric_limits<double>::infinity()).any();
        if (!rows_ok) continue;

        const double w_j = std::exp(hyp.log_weight - prior_total);
        const double budget = std::ceil(static_cast<double>(config.k_max) * w_j);
        const std::size_t k_j =
            budget >= static_cast<double>(std::numeric_limits<std::size_t>::max())
                ? std::numeric_limits<std::size_t>::max()
                : std::max<std::size_t>(1, static_cast<std::size_t>(budget));

        std::vector<Assignment> assignments;
        try {
            assignments = murty_kbest(cost, k_j);
        } catch (const InfeasibleAssignment&) {
            continue;
        }

        for (const auto& a : assignments) {
            std::vector<std::optional<std::size_t>> object_meas(n_obj);
            std::vector<bool> background(n_meas, false);
            for (std::size_t m : fixed_rows) background[m] = true;
            for (std::size_t ai = 0; ai < a.row_to_col.size(); ++ai) {
                const std::size_t m = rows[ai];
                const std::size_t col = a.row_to_col[ai];
                if (col < cols.size())
                    object_meas[cols[col]] = m;
                else
                    background[m] = true;
            }

            double lw = hyp.log_weight;
            GlobalHypothesis child;
            child.bernoullis.reserve(n_obj + n_meas);
            for (std::size_t i = 0; i < n_obj; ++i) {
                if (object_meas[i]) {
                    const std::size_t m = *object_meas[i];
                    auto cell = detail::detected_cell(hyp.bernoullis[i], *preds[i], z[m], m, params);
                    lw += cell.log_likelihood;
                    child.bernoullis.push_back(std::move(cell.bernoulli));
                } else {
                    lw += missed[i].log_likelihood;
                    child.bernoullis.push_back(missed[i].bernoulli);
                }
            }
            for (std::size_t m = 0; m < n_meas; ++m) {
                if (!background[m]) continue;
                lw += new_cells[m].log_likelihood;
                if (new_cells[m].bernoulli.r > 0.0) {
                    auto b = new_cells[m].bernoulli;
                    b.measurement = m;
                    child.bernoullis.push_back(std::move(b));
                }
            }
            if (!(lw > kNegInf)) continue;
            child.log_weight = lw;
            children.push_back({lw, std::move(child)});
        }
    }

    if (children.empty())
        throw NumericalError("update: the measurement set has zero likelihood under every hypothesis");

    std::vector<double> lws;
    lws.reserve(children.size());
    for (const auto& c : children) lws.push_back(c.log_weight);
    const double total = log_sum_exp(lws);
    out.hypotheses.clear();
    out.hypotheses.reserve(children.size());
    for (auto& c : children) {
        c.hypothesis.log_weight = c.log_weight - total;
        out.hypotheses.push_back(std::move(c.hypothesis));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Reduction

namespace detail {

inline bool close(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double tol) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
    return ((a - b).array().abs() <= tol * (1.0 + a.array().abs().max(b.array().abs()))).all();
}

inline bool same_structure(const GlobalHypothesis& a, const GlobalHypothesis& b, double tol) {
    if (a.bernoullis.size() != b.bernoullis.size()) return false;
    for (std::size_t i = 0; i < a.bernoullis.size(); ++i) {
        const auto& x = a.bernoullis[i];
        const auto& y = b.bernoullis[i];
        if (x.track_id != y.track_id) return false;
        if (std::abs(x.r - y.r) > tol) return false;
        if (!close(x.density.mean, y.density.mean, tol) || !close(x.density.cov, y.density.cov, tol)) return false;
    }
    return true;
}

}  // namespace detail

/// Prunes and caps hypotheses, drops low-existence Bernoullis, merges
/// duplicate hypotheses and reduces the undetected intensity.
inline PmbmDensity reduce(const PmbmDensity& p, const FilterConfig& config) {
    PmbmDensity out;
    out.next_track_id = p.next_track_id;
    out.undetected = gm_reduce(p.undetected, config.ppp_prune_log_weight, config.ppp_merge_threshold,
                               std::max<std::size_t>(1, config.ppp_max_components));

    std::vector<GlobalHypothesis> hyps;
    hyps.reserve(p.hypotheses.size());
    for (const auto& h : p.hypotheses) {
        GlobalHypothesis nh;
        nh.log_weight = h.log_weight;
        for (const auto& b : h.bernoullis)
            if (b.r >= config.bernoulli_min_existence && b.r > 0.0) nh.bernoullis.push_back(b);
        hyps.push_back(std::move(nh));
    }

    // Duplicates: bucket by track-id signature, then compare numerically.
    std::map<std::vector<TrackId>, std::vector<std::size_t>> buckets;
    std::vector<GlobalHypothesis> unique;
    unique.reserve(hyps.size());
    for (auto& h : hyps) {
        std::vector<TrackId> sig;
        sig.reserve(h.bernoullis.size());
        for (const auto& b : h.bernoullis) sig.push_back(b.track_id);
        auto& bucket = buckets[sig];
        bool merged = false;
        for (std::size_t u : bucket) {
            if (detail::same_structure(unique[u], h, config.duplicate_tolerance)) {
                unique[u].log_weight = log_sum_exp(unique[u].log_weight, h.log_weight);
                merged = true;
                break;
            }
        }
        if (!merged) {
            bucket.push_back(unique.size());
            unique.push_back(std::move(h));
        }
    }

    double max_lw = kNegInf;
    for (const auto& h : unique) max_lw = std::max(max_lw, h.log_weight);
    const double floor = config.hypothesis_min_weight > 0.0 ? max_lw + std::log(config.hypothesis_min_weight) : kNegInf;
    std::vector<std::size_t> keep;
    for (std::size_t j = 0; j < unique.size(); ++j)
        if (unique[j].log_weight >= floor && unique[j].log_weight > kNegInf) keep.push_back(j);
    if (keep.size() > config.max_hypotheses) {
        std::stable_sort(keep.begin(), keep.end(),
                         [&](std::size_t a, std::size_t b) { return unique[a].log_weight > unique[b].log_weight; });
        keep.resize(std::max<std::size_t>(1, config.max_hypotheses));
        std::sort(keep.begin(), keep.end());
    }

    out.hypotheses.clear();
    for (std::size_t j : keep) out.hypotheses.push_back(std::move(unique[j]));
    if (out.hypotheses.empty()) out.hypotheses.push_back(GlobalHypothesis{});
    const double total = log_sum_exp(detail::hypothesis_log_weights(out));
    for (auto& h : out.hypotheses) h.log_weight -= total;
    return out;
}

// ---------------------------------------------------------------------------
// Extraction

/// Index of the most probable hypothesis; the lowest index wins ties.
inline std::size_t best_hypothesis(const PmbmDensity& p) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < p.hypotheses.size(); ++j)
        if (p.hypotheses[j].log_weight > p.hypotheses[best].log_weight) best = j;
    return best;
}

/// Means of the Bernoullis with existence above tau in the most probable
/// hypothesis, ordered by track id.
inline std::vector<Estimate> extract(const PmbmDensity& p, double tau) {
    std::vector<Estimate> out;
    if (p.hypotheses.empty()) return out;
    for (const auto& b : p.hypotheses[best_hypothesis(p)].bernoullis)
        if (b.r > tau) out.push_back({b.track_id, b.density.mean, b.r, b.measurement});
    std::sort(out.begin(), out.end(), [](const Estimate& a, const Estimate& b) { return a.track_id < b.track_id; });
    return out;
}

// ---------------------------------------------------------------------------
// Invariants

/// Empty string when every invariant holds, otherwise a description of the first violation.
inline std::string check_invariants(const PmbmDensity& p, double weight_tol = 1e-9) {
    if (p.hypotheses.empty()) return "no hypotheses";
    const auto lw = detail::hypothesis_log_weights(p);
    for (double w : lw)
        if (!std::isfinite(w)) return "non-finite hypothesis weight";
    const double sum = std::exp(log_sum_exp(lw));
    if (std::abs(sum - 1.0) > weight_tol) return "hypothesis weights sum to " + std::to_string(sum);
    for (const auto& h : p.hypotheses) {
        for (const auto& b : h.bernoullis) {
            if (!(b.r >= 0.0 && b.r <= 1.0)) return "existence probability outside [0,1]";
            if (!is_valid(b.density)) return "Bernoulli density invalid (NaN/Inf or non-PSD)";
        }
    }
    for (const auto& c : p.undetected.components) {
        if (!std::isfinite(c.log_weight)) return "non-finite PPP weight";
        if (!is_valid(c.density)) return "PPP density invalid (NaN/Inf or non-PSD)";
    }
    return {};
}

// ---------------------------------------------------------------------------
// Driver

/// Sequential predict -> update -> reduce -> extract over a detection stream.
class Tracker {
public:
    Tracker(FilterModel model, FilterConfig config) : model_(std::move(model)), config_(config) {
        model_.params.validate();
    }

    std::vector<Estimate> step(std::span<const Eigen::VectorXd> measurements) {
        density_ = predict(density_, model_);
        density_ = update(density_, measurements, model_, config_);
        density_ = reduce(density_, config_);
        return extract(density_, config_.extract_threshold);
    }

    [[nodiscard]] const PmbmDensity& density() const { return density_; }
    [[nodiscard]] const FilterModel& model() const { return model_; }
    [[nodiscard]] const FilterConfig& config() const { return config_; }

private:
    FilterModel model_;
    FilterConfig config_;
    PmbmDensity density_;
};

}  // namespace pmbm
