#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <vector>

#include <Eigen/Dense>

#include "topoae/errors.hpp"
#include "topoae/persistence.hpp"

namespace topoae {

namespace detail {

inline double linf_cost(const persistence_pair& a, const persistence_pair& b) {
    return std::max(std::abs(a.birth - b.birth), std::abs(a.death - b.death));
}

/// L-infinity distance from a diagram point to the diagonal.
inline double diagonal_cost(const persistence_pair& p) { return (p.death - p.birth) / 2.0; }

/// Hopcroft-Karp maximum bipartite matching.
class bipartite_matcher {
public:
    bipartite_matcher(int n_left, int n_right)
        : n_left_(n_left), n_right_(n_right), adjacency_(static_cast<std::size_t>(n_left)) {}

    void add_edge(int left, int right) { adjacency_[static_cast<std::size_t>(left)].push_back(right); }

    int max_matching() {
        match_left_.assign(static_cast<std::size_t>(n_left_), -1);
        match_right_.assign(static_cast<std::size_t>(n_right_), -1);
        int matched = 0;
        while (bfs()) {
            for (int u = 0; u < n_left_; ++u)
                if (match_left_[static_cast<std::size_t>(u)] == -1 && dfs(u)) ++matched;
        }
        return matched;
    }

private:
    static constexpr int kInf = std::numeric_limits<int>::max();

    bool bfs() {
        std::queue<int> frontier;
        level_.assign(static_cast<std::size_t>(n_left_), kInf);
        for (int u = 0; u < n_left_; ++u)
            if (match_left_[static_cast<std::size_t>(u)] == -1) {
                level_[static_cast<std::size_t>(u)] = 0;
                frontier.push(u);
            }
        bool found_free = false;
        while (!frontier.empty()) {
            const int u = frontier.front();
            frontier.pop();
            for (int v : adjacency_[static_cast<std::size_t>(u)]) {
                const int w = match_right_[static_cast<std::size_t>(v)];
                if (w == -1) {
                    found_free = true;
                } else if (level_[static_cast<std::size_t>(w)] == kInf) {
                    level_[static_cast<std::size_t>(w)] = level_[static_cast<std::size_t>(u)] + 1;
                    frontier.push(w);
                }
            }
        }
        return found_free;
    }

    bool dfs(int u) {
        for (int v : adjacency_[static_cast<std::size_t>(u)]) {
            const int w = match_right_[static_cast<std::size_t>(v)];
            if (w == -1 ||
                (level_[static_cast<std::size_t>(w)] == level_[static_cast<std::size_t>(u)] + 1 && dfs(w))) {
                match_left_[static_cast<std::size_t>(u)] = v;
                match_right_[static_cast<std::size_t>(v)] = u;
                return true;
            }
        }
        level_[static_cast<std::size_t>(u)] = kInf;
        return false;
    }

    int n_left_;
    int n_right_;
    std::vector<std::vector<int>> adjacency_;
    std::vector<int> match_left_;
    std::vector<int> match_right_;
    std::vector<int> level_;
};

/// Can every point of `req` (those with diagonal cost > t) be matched to a
/// distinct point of `other` at L-inf cost <= t?
inline bool side_saturated(const std::vector<persistence_pair>& req_side,
                           const std::vector<persistence_pair>& other, double t) {
    std::vector<int> required;
    for (int i = 0; i < static_cast<int>(req_side.size()); ++i)
        if (diagonal_cost(req_side[static_cast<std::size_t>(i)]) > t) required.push_back(i);
    if (required.empty()) return true;
    if (required.size() > other.size()) return false;

    bipartite_matcher matcher(static_cast<int>(required.size()), static_cast<int>(other.size()));
    for (int u = 0; u < static_cast<int>(required.size()); ++u) {
        const auto& p = req_side[static_cast<std::size_t>(required[static_cast<std::size_t>(u)])];
        for (int v = 0; v < static_cast<int>(other.size()); ++v)
            if (linf_cost(p, other[static_cast<std::size_t>(v)]) <= t) matcher.add_edge(u, v);
    }
    return matcher.max_matching() == static_cast<int>(required.size());
}

/// A matching of cost <= t exists iff each side's must-match points can be
/// saturated on their own; the Mendelsohn-Dulmage theorem then yields one
/// matching that covers both requirement sets simultaneously.
inline bool bottleneck_feasible(const std::vector<persistence_pair>& a,
                                const std::vector<persistence_pair>& b, double t) {
    return side_saturated(a, b, t) && side_saturated(b, a, t);
}

/// Exact min-cost perfect matching on a square cost matrix (Hungarian
/// algorithm with potentials, O(n^3)).
inline double hungarian_min_cost(const Eigen::MatrixXd& cost) {
    const int n = static_cast<int>(cost.rows());
    if (n == 0) return 0.0;
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0);
    std::vector<double> v(static_cast<std::size_t>(n) + 1, 0.0);
    std::vector<int> p(static_cast<std::size_t>(n) + 1, 0);
    std::vector<int> way(static_cast<std::size_t>(n) + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(static_cast<std::size_t>(n) + 1, inf);
        std::vector<char> used(static_cast<std::size_t>(n) + 1, 0);
        do {
            used[static_cast<std::size_t>(j0)] = 1;
            const int i0 = p[static_cast<std::size_t>(j0)];
            int j1 = -1;
            double delta = inf;
            for (int j = 1; j <= n; ++j) {
                if (used[static_cast<std::size_t>(j)]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] -
                                   v[static_cast<std::size_t>(j)];
                if (cur < minv[static_cast<std::size_t>(j)]) {
                    minv[static_cast<std::size_t>(j)] = cur;
                    way[static_cast<std::size_t>(j)] = j0;
                }
                if (minv[static_cast<std::size_t>(j)] < delta) {
                    delta = minv[static_cast<std::size_t>(j)];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[static_cast<std::size_t>(j)]) {
                    u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
                    v[static_cast<std::size_t>(j)] -= delta;
                } else {
                    minv[static_cast<std::size_t>(j)] -= delta;
                }
            }
            j0 = j1;
        } while (p[static_cast<std::size_t>(j0)] != 0);
        do {
            const int j1 = way[static_cast<std::size_t>(j0)];
            p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
            j0 = j1;
        } while (j0 != 0);
    }
    double total = 0.0;
    for (int j = 1; j <= n; ++j)
        if (p[static_cast<std::size_t>(j)] != 0) total += cost(p[static_cast<std::size_t>(j)] - 1, j - 1);
    return total;
}

}  // namespace detail

/// Exact bottleneck distance between two persistence diagrams, with matches
/// to the diagonal allowed. Binary search over the finite candidate-cost set
/// with a bipartite feasibility test per probe. Intended for desk-scale
/// diagrams (up to a few thousand points).
inline double bottleneck_distance(const std::vector<persistence_pair>& diag_a,
                                  const std::vector<persistence_pair>& diag_b) {
    for (const auto& p : diag_a)
        if (p.birth > p.death) throw validation_error("bottleneck_distance: birth > death");
    for (const auto& p : diag_b)
        if (p.birth > p.death) throw validation_error("bottleneck_distance: birth > death");

    std::vector<double> candidates{0.0};
    for (const auto& p : diag_a) candidates.push_back(detail::diagonal_cost(p));
    for (const auto& p : diag_b) candidates.push_back(detail::diagonal_cost(p));
    for (const auto& p : diag_a)
        for (const auto& q : diag_b) candidates.push_back(detail::linf_cost(p, q));
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

    // The optimum is the smallest candidate cost that admits a matching.
    std::size_t lo = 0;
    std::size_t hi = candidates.size() - 1;
    while (lo < hi) {
        const std::size_t mid = (lo + hi) / 2;
        if (detail::bottleneck_feasible(diag_a, diag_b, candidates[mid]))
            hi = mid;
        else
            lo = mid + 1;
    }
    return candidates[lo];
}

/// Exact q-Wasserstein distance (q in {1, 2}) between persistence diagrams:
/// optimal assignment over diagonal-augmented diagrams with L-inf ground
/// cost raised to q, solved by the Hungarian algorithm.
inline double wasserstein_distance(const std::vector<persistence_pair>& diag_a,
                                   const std::vector<persistence_pair>& diag_b, int q) {
    if (q != 1 && q != 2) throw validation_error("wasserstein_distance: q must be 1 or 2");
    const int a = static_cast<int>(diag_a.size());
    const int b = static_cast<int>(diag_b.size());
    const int n = a + b;
    if (n == 0) return 0.0;

    auto powq = [q](double x) { return q == 1 ? x : x * x; };

    // Rows: points of A then b diagonal slots; columns: points of B then a
    // diagonal slots. Any diagonal slot is equivalent, so every slot carries
    // the same cost for a given point.
    Eigen::MatrixXd cost(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (i < a && j < b)
                cost(i, j) = powq(detail::linf_cost(diag_a[static_cast<std::size_t>(i)],
                                                    diag_b[static_cast<std::size_t>(j)]));
            else if (i < a)
                cost(i, j) = powq(detail::diagonal_cost(diag_a[static_cast<std::size_t>(i)]));
            else if (j < b)
                cost(i, j) = powq(detail::diagonal_cost(diag_b[static_cast<std::size_t>(j)]));
            else
                cost(i, j) = 0.0;
        }
    }
    const double total = detail::hungarian_min_cost(cost);
    return q == 1 ? total : std::sqrt(total);
}

}  // namespace topoae
