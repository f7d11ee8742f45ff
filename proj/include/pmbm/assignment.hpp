#pragma once

// Optimal linear assignment and Murty's k-best enumeration.
//
// Costs are finite or +infinity (forbidden pair). A rectangular problem with
// more columns than rows is padded to square with zero-cost dummy rows, which
// lets every Murty child be solved from its parent's duals with a single
// shortest augmenting path.

#include "pmbm/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <queue>
#include <utility>
#include <vector>

namespace pmbm {

using CostMatrix = Eigen::MatrixXd;

struct Assignment {
    std::vector<std::size_t> row_to_col;
    double total_cost = 0.0;

    friend bool operator==(const Assignment&, const Assignment&) = default;
};

namespace detail {

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr int kUnassigned = -1;

/// Primal-dual state of a square assignment problem.
struct LapState {
    std::vector<int> col_for_row;
    std::vector<int> row_for_col;
    std::vector<double> u;
    std::vector<double> v;

    explicit LapState(std::size_t n = 0)
        : col_for_row(n, kUnassigned), row_for_col(n, kUnassigned), u(n, 0.0), v(n, 0.0) {}
};

/// Scratch buffers reused across augmentations.
struct LapWorkspace {
    std::vector<double> dist;
    std::vector<int> path;
    std::vector<int> remaining;
    std::vector<char> scanned_row;
    std::vector<char> scanned_col;
};

/// Augments `state` along a shortest path from the unassigned `row`. Reduced
/// costs must be non-negative on entry (dual feasibility) and zero on matched
/// pairs; both hold again on exit. Returns false if no finite path exists.
inline bool augment(const Eigen::MatrixXd& cost, LapState& state, int row, LapWorkspace& ws) {
    const auto n = static_cast<int>(cost.rows());
    ws.dist.assign(static_cast<std::size_t>(n), kInf);
    ws.path.assign(static_cast<std::size_t>(n), kUnassigned);
    ws.scanned_row.assign(static_cast<std::size_t>(n), 0);
    ws.scanned_col.assign(static_cast<std::size_t>(n), 0);
    ws.remaining.resize(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) ws.remaining[static_cast<std::size_t>(j)] = n - j - 1;
    int num_remaining = n;

    double min_val = 0.0;
    int sink = kUnassigned;
    int i = row;
    while (sink == kUnassigned) {
        ws.scanned_row[static_cast<std::size_t>(i)] = 1;
        int best = -1;
        double lowest = kInf;
        const double ui = state.u[static_cast<std::size_t>(i)];
        for (int it = 0; it < num_remaining; ++it) {
            const auto j = static_cast<std::size_t>(ws.remaining[static_cast<std::size_t>(it)]);
            const double c = cost(i, static_cast<Eigen::Index>(j));
            if (c < kInf) {
                const double r = min_val + c - ui - state.v[j];
                if (r < ws.dist[j]) {
                    ws.path[j] = i;
                    ws.dist[j] = r;
                }
            }
            // Prefer a free column on ties: it ends the search.
            if (ws.dist[j] < lowest || (ws.dist[j] == lowest && state.row_for_col[j] == kUnassigned)) {
                lowest = ws.dist[j];
                best = it;
            }
        }
        if (best < 0 || lowest == kInf) return false;
        min_val = lowest;
        const auto j = ws.remaining[static_cast<std::size_t>(best)];
        ws.scanned_col[static_cast<std::size_t>(j)] = 1;
        ws.remaining[static_cast<std::size_t>(best)] = ws.remaining[static_cast<std::size_t>(--num_remaining)];
        if (state.row_for_col[static_cast<std::size_t>(j)] == kUnassigned) {
            sink = j;
        } else {
            i = state.row_for_col[static_cast<std::size_t>(j)];
        }
    }

    state.u[static_cast<std::size_t>(row)] += min_val;
    for (int r = 0; r < n; ++r) {
        const auto rs = static_cast<std::size_t>(r);
        if (ws.scanned_row[rs] && r != row)
            state.u[rs] += min_val - ws.dist[static_cast<std::size_t>(state.col_for_row[rs])];
    }
    for (int c = 0; c < n; ++c) {
        const auto cs = static_cast<std::size_t>(c);
        if (ws.scanned_col[cs]) state.v[cs] -= min_val - ws.dist[cs];
    }

    int j = sink;
    while (true) {
        const int r = ws.path[static_cast<std::size_t>(j)];
        state.row_for_col[static_cast<std::size_t>(j)] = r;
        std::swap(state.col_for_row[static_cast<std::size_t>(r)], j);
        if (r == row) break;
    }
    return true;
}

inline void check_costs(const CostMatrix& c) {
    for (Eigen::Index i = 0; i < c.rows(); ++i)
        for (Eigen::Index j = 0; j < c.cols(); ++j) {
            const double x = c(i, j);
            if (std::isnan(x) || x == -kInf) throw InvalidArgument("cost matrix entries must be finite or +inf");
        }
}

inline void check_rows_feasible(const CostMatrix& c) {
    if (c.rows() > c.cols()) throw InfeasibleAssignment("more rows than columns");
    for (Eigen::Index i = 0; i < c.rows(); ++i) {
        if (!(c.row(i).array() < kInf).any())
            throw InfeasibleAssignment("row " + std::to_string(i) + " has no finite cost");
    }
}

/// Square matrix with zero-cost dummy rows appended.
inline Eigen::MatrixXd pad_square(const CostMatrix& c) {
    Eigen::MatrixXd sq = Eigen::MatrixXd::Zero(c.cols(), c.cols());
    sq.topRows(c.rows()) = c;
    return sq;
}

inline double assignment_cost(const CostMatrix& c, const std::vector<int>& col_for_row) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < c.rows(); ++i)
        total += c(i, col_for_row[static_cast<std::size_t>(i)]);
    return total;
}

inline Assignment to_assignment(const CostMatrix& c, const std::vector<int>& col_for_row) {
    Assignment a;
    a.row_to_col.reserve(static_cast<std::size_t>(c.rows()));
    for (Eigen::Index i = 0; i < c.rows(); ++i)
        a.row_to_col.push_back(static_cast<std::size_t>(col_for_row[static_cast<std::size_t>(i)]));
    a.total_cost = assignment_cost(c, col_for_row);
    return a;
}

/// Solves the padded square problem from scratch. Returns false if infeasible.
inline bool solve_square(const Eigen::MatrixXd& sq, LapState& state, LapWorkspace& ws) {
    state = LapState(static_cast<std::size_t>(sq.rows()));
    for (int r = 0; r < static_cast<int>(sq.rows()); ++r)
        if (!augment(sq, state, r, ws)) return false;
    return true;
}

inline bool lexicographic_less(const Assignment& a, const Assignment& b) {
    if (a.total_cost != b.total_cost) return a.total_cost < b.total_cost;
    return a.row_to_col < b.row_to_col;
}

}  // namespace detail

/// Minimum-total-cost assignment of every row to a distinct column.
/// Throws InfeasibleAssignment when no finite-cost assignment exists.
inline Assignment solve_lap(const CostMatrix& c) {
    detail::check_costs(c);
    detail::check_rows_feasible(c);
    if (c.rows() == 0) return {};
    const Eigen::MatrixXd sq = detail::pad_square(c);
    detail::LapState state;
    detail::LapWorkspace ws;
    if (!detail::solve_square(sq, state, ws)) throw InfeasibleAssignment("no finite-cost assignment exists");
    return detail::to_assignment(c, state.col_for_row);
}

/// The min(k, #feasible) cheapest assignments in nondecreasing cost, ties
/// broken by lexicographic row_to_col. When several assignments tie with the
/// k-th cost, which of them make the cut is deterministic but not necessarily
/// the lexicographically smallest.
inline std::vector<Assignment> murty_kbest(const CostMatrix& c, std::size_t k) {
    if (k < 1) throw InvalidArgument("murty_kbest: k must be >= 1");
    detail::check_costs(c);
    detail::check_rows_feasible(c);
    if (c.rows() == 0) return {Assignment{}};

    using detail::kInf;
    const Eigen::Index n_rows = c.rows();
    const Eigen::MatrixXd base = detail::pad_square(c);

    struct Node {
        Assignment assignment;
        detail::LapState state;
        std::vector<std::pair<int, int>> forbidden;
        std::vector<std::pair<int, int>> forced;
    };
    auto worse = [](const Node& a, const Node& b) { return detail::lexicographic_less(b.assignment, a.assignment); };
    std::priority_queue<Node, std::vector<Node>, decltype(worse)> queue(worse);

    detail::LapWorkspace ws;
    {
        Node root;
        if (!detail::solve_square(base, root.state, ws)) throw InfeasibleAssignment("no finite-cost assignment exists");
        root.assignment = detail::to_assignment(c, root.state.col_for_row);
        queue.push(std::move(root));
    }

    std::vector<Assignment> out;
    Eigen::MatrixXd work;
    std::vector<char> is_forced(static_cast<std::size_t>(n_rows));
    while (!queue.empty() && out.size() < k) {
        Node node = queue.top();
        queue.pop();
        out.push_back(node.assignment);
        if (out.size() == k) break;

        work = base;
        for (auto [r, col] : node.forbidden) work(r, col) = kInf;
        auto force = [&work](int r, int col) {
            const double keep = work(r, col);
            work.row(r).setConstant(kInf);
            work.col(col).setConstant(kInf);
            work(r, col) = keep;
        };
        std::fill(is_forced.begin(), is_forced.end(), 0);
        for (auto [r, col] : node.forced) {
            force(r, col);
            is_forced[static_cast<std::size_t>(r)] = 1;
        }

        std::vector<std::pair<int, int>> newly_forced;
        for (int r = 0; r < static_cast<int>(n_rows); ++r) {
            if (is_forced[static_cast<std::size_t>(r)]) continue;
            const int col = node.state.col_for_row[static_cast<std::size_t>(r)];

            const double saved = work(r, col);
            work(r, col) = kInf;
            detail::LapState child_state = node.state;
            child_state.col_for_row[static_cast<std::size_t>(r)] = detail::kUnassigned;
            child_state.row_for_col[static_cast<std::size_t>(col)] = detail::kUnassigned;
            const bool ok = detail::augment(work, child_state, r, ws);
            work(r, col) = saved;

            if (ok) {
                Node child;
                child.assignment = detail::to_assignment(c, child_state.col_for_row);
                child.state = std::move(child_state);
                child.forbidden = node.forbidden;
                child.forbidden.emplace_back(r, col);
                child.forced = node.forced;
                child.forced.insert(child.forced.end(), newly_forced.begin(), newly_forced.end());
                queue.push(std::move(child));
            }
            force(r, col);
            newly_forced.emplace_back(r, col);
        }
    }
    std::stable_sort(out.begin(), out.end(), detail::lexicographic_less);
    return out;
}

}  // namespace pmbm
