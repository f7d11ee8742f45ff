#pragma once

// CLEAR-MOT evaluation with 2D IoU or 3D Euclidean correspondence.

#include "pmbm/assignment.hpp"
#include "pmbm/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

namespace pmbm::eval {

struct Box {
    double x_min = 0, y_min = 0, x_max = 0, y_max = 0;

    [[nodiscard]] bool valid() const { return x_min < x_max && y_min < y_max; }
    [[nodiscard]] double area() const { return (x_max - x_min) * (y_max - y_min); }
};

inline double iou(const Box& a, const Box& b) {
    if (!a.valid() || !b.valid()) throw InvalidArgument("iou: degenerate box");
    const double iw = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
    const double ih = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
    if (iw <= 0.0 || ih <= 0.0) return 0.0;
    const double inter = iw * ih;
    return inter / (a.area() + b.area() - inter);
}

/// One ground-truth object or one estimate in one frame.
struct Object {
    std::uint64_t id = 0;
    Box box;
    Eigen::Vector3d position = Eigen::Vector3d::Zero();
};

using Frame = std::vector<Object>;

enum class MatchMode { Iou2d, Euclidean3d };

struct MatchCriterion {
    MatchMode mode = MatchMode::Iou2d;
    double threshold = 0.5;  ///< minimum IoU, or maximum distance in meters

    static MatchCriterion iou2d(double min_iou = 0.5) { return {MatchMode::Iou2d, min_iou}; }
    static MatchCriterion euclidean3d(double max_dist = 3.0) { return {MatchMode::Euclidean3d, max_dist}; }

    /// Similarity score of a pair (IoU, or distance in meters) if the pair is a
    /// valid correspondence.
    [[nodiscard]] std::optional<double> score(const Object& gt, const Object& est) const {
        if (mode == MatchMode::Iou2d) {
            const double v = iou(gt.box, est.box);
            return v >= threshold ? std::optional(v) : std::nullopt;
        }
        const double d = (gt.position - est.position).norm();
        return d <= threshold ? std::optional(d) : std::nullopt;
    }

    /// Assignment cost of a valid pair; lower is better.
    [[nodiscard]] double cost(double score) const { return mode == MatchMode::Iou2d ? 1.0 - score : score; }
};

struct MotMetrics {
    // Pooled counts.
    std::size_t n_frames = 0;
    std::size_t n_gt = 0;
    std::size_t tp = 0, fp = 0, fn = 0;
    std::size_t ids = 0, frag = 0;
    std::size_t n_trajectories = 0, mostly_tracked = 0, mostly_lost = 0;
    double score_sum = 0.0;  ///< sum of match scores over TPs (IoU, or meters)
    MatchMode mode = MatchMode::Iou2d;

    std::vector<std::size_t> frame_tp, frame_fp, frame_fn;

    // Derived measures, refreshed by finalize().
    double mota = 0, motp = 0, mt = 0, ml = 0, precision = 0, recall = 0, f1 = 0, far = 0;

    void finalize() {
        const double gt = static_cast<double>(std::max<std::size_t>(n_gt, 1));
        mota = 1.0 - static_cast<double>(fn + fp + ids) / gt;
        // 3D precision is reported in centimeters.
        const double unit = mode == MatchMode::Euclidean3d ? 100.0 : 1.0;
        motp = tp > 0 ? unit * score_sum / static_cast<double>(tp) : 0.0;
        const double traj = static_cast<double>(std::max<std::size_t>(n_trajectories, 1));
        mt = n_trajectories > 0 ? static_cast<double>(mostly_tracked) / traj : 0.0;
        ml = n_trajectories > 0 ? static_cast<double>(mostly_lost) / traj : 0.0;
        precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
        recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
        f1 = precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
        far = n_frames > 0 ? static_cast<double>(fp) / static_cast<double>(n_frames) : 0.0;
    }
};

inline constexpr double kMostlyTracked = 0.8;
inline constexpr double kMostlyLost = 0.2;

/// CLEAR-MOT over one sequence. Per frame, correspondences from the previous
/// frame are kept while still valid; the rest are matched optimally. An
/// identity switch is counted when a ground-truth object is matched to an
/// estimate other than its last matched one.
inline MotMetrics clear_mot(std::span<const Frame> gt, std::span<const Frame> est, const MatchCriterion& crit) {
    if (gt.size() != est.size()) throw InvalidArgument("clear_mot: ground truth and estimates differ in frame count");
    if (!(crit.threshold > 0.0)) throw InvalidArgument("clear_mot: threshold must be positive");

    MotMetrics m;
    m.mode = crit.mode;
    m.n_frames = gt.size();

    std::map<std::uint64_t, std::uint64_t> previous;   // matches of the previous frame
    std::map<std::uint64_t, std::uint64_t> last_seen;  // most recent match ever
    struct Coverage {
        std::size_t alive = 0, tracked = 0, segments = 0;
        std::optional<std::uint64_t> run;  // estimate id of the current tracked run
    };
    std::map<std::uint64_t, Coverage> coverage;

    for (std::size_t f = 0; f < gt.size(); ++f) {
        const Frame& g = gt[f];
        const Frame& e = est[f];
        std::vector<std::optional<std::size_t>> gt_match(g.size());
        std::vector<bool> est_used(e.size(), false);
        std::vector<double> gt_score(g.size(), 0.0);

        for (std::size_t a = 0; a < g.size(); ++a) {
            auto it = previous.find(g[a].id);
            if (it == previous.end()) continue;
            for (std::size_t b = 0; b < e.size(); ++b) {
                if (est_used[b] || e[b].id != it->second) continue;
                if (auto s = crit.score(g[a], e[b])) {
                    gt_match[a] = b;
                    est_used[b] = true;
                    gt_score[a] = *s;
                }
                break;
            }
        }

        std::vector<std::size_t> rows, cols;
        for (std::size_t a = 0; a < g.size(); ++a)
            if (!gt_match[a]) rows.push_back(a);
        for (std::size_t b = 0; b < e.size(); ++b)
            if (!est_used[b]) cols.push_back(b);
        if (!rows.empty() && !cols.empty()) {
            // One private "unmatched" column per row, priced above any set of
            // valid matches so the number of matches is maximized first.
            const auto nr = static_cast<Eigen::Index>(rows.size());
            const auto nc = static_cast<Eigen::Index>(cols.size());
            const double unmatched = 1e6;
            CostMatrix cost = CostMatrix::Constant(nr, nc + nr, std::numeric_limits<double>::infinity());
            Eigen::MatrixXd scores = Eigen::MatrixXd::Zero(nr, nc);
            for (Eigen::Index r = 0; r < nr; ++r) {
                for (Eigen::Index c = 0; c < nc; ++c) {
                    if (auto s = crit.score(g[rows[static_cast<std::size_t>(r)]], e[cols[static_cast<std::size_t>(c)]])) {
                        cost(r, c) = crit.cost(*s);
                        scores(r, c) = *s;
                    }
                }
                cost(r, nc + r) = unmatched;
            }
            const Assignment a = solve_lap(cost);
            for (Eigen::Index r = 0; r < nr; ++r) {
                const auto c = static_cast<Eigen::Index>(a.row_to_col[static_cast<std::size_t>(r)]);
                if (c >= nc) continue;
                const std::size_t ga = rows[static_cast<std::size_t>(r)];
                const std::size_t eb = cols[static_cast<std::size_t>(c)];
                gt_match[ga] = eb;
                est_used[eb] = true;
                gt_score[ga] = scores(r, c);
            }
        }

        std::size_t tp = 0;
        std::map<std::uint64_t, std::uint64_t> current;
        for (std::size_t a = 0; a < g.size(); ++a) {
            auto& cov = coverage[g[a].id];
            ++cov.alive;
            if (!gt_match[a]) {
                cov.run.reset();
                continue;
            }
            const std::uint64_t est_id = e[*gt_match[a]].id;
            ++tp;
            ++cov.tracked;
            m.score_sum += gt_score[a];
            if (auto it = last_seen.find(g[a].id); it != last_seen.end() && it->second != est_id) ++m.ids;
            last_seen[g[a].id] = est_id;
            current[g[a].id] = est_id;
            if (!cov.run || *cov.run != est_id) ++cov.segments;
            cov.run = est_id;
        }
        // A ground-truth object absent from this frame ends its run.
        for (auto& [id, cov] : coverage) {
            const bool present = std::any_of(g.begin(), g.end(), [id = id](const Object& o) { return o.id == id; });
            if (!present) cov.run.reset();
        }
        previous = std::move(current);

        m.tp += tp;
        m.fn += g.size() - tp;
        m.fp += e.size() - tp;
        m.n_gt += g.size();
        m.frame_tp.push_back(tp);
        m.frame_fn.push_back(g.size() - tp);
        m.frame_fp.push_back(e.size() - tp);
    }

    for (const auto& [id, cov] : coverage) {
        ++m.n_trajectories;
        const double ratio = static_cast<double>(cov.tracked) / static_cast<double>(cov.alive);
        if (ratio >= kMostlyTracked) ++m.mostly_tracked;
        if (ratio <= kMostlyLost) ++m.mostly_lost;
        if (cov.segments > 1) m.frag += cov.segments - 1;
    }
    m.finalize();
    return m;
}

/// Pools counts over sequences (not an average of ratios).
inline MotMetrics aggregate(std::span<const MotMetrics> parts) {
    MotMetrics total;
    if (!parts.empty()) total.mode = parts.front().mode;
    for (const auto& p : parts) {
        total.n_frames += p.n_frames;
        total.n_gt += p.n_gt;
        total.tp += p.tp;
        total.fp += p.fp;
        total.fn += p.fn;
        total.ids += p.ids;
        total.frag += p.frag;
        total.n_trajectories += p.n_trajectories;
        total.mostly_tracked += p.mostly_tracked;
        total.mostly_lost += p.mostly_lost;
        total.score_sum += p.score_sum;
        total.frame_tp.insert(total.frame_tp.end(), p.frame_tp.begin(), p.frame_tp.end());
        total.frame_fp.insert(total.frame_fp.end(), p.frame_fp.begin(), p.frame_fp.end());
        total.frame_fn.insert(total.frame_fn.end(), p.frame_fn.begin(), p.frame_fn.end());
    }
    total.finalize();
    return total;
}

}  // namespace pmbm::eval
