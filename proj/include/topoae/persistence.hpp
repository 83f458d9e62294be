#pragma once

#include <algorithm>
#include <compare>
#include <tuple>
#include <vector>

#include "topoae/geometry.hpp"

namespace topoae {

/// One finite feature of a 0-dimensional persistence diagram. Every vertex
/// enters the filtration at scale 0, so birth is always 0 here; the field is
/// kept explicit so diagram-distance code stays dimension-agnostic.
struct persistence_pair {
    double birth = 0.0;
    double death = 0.0;
};

/// Vertex-index edge (i, j) with i < j; the destroyer simplex of a feature.
struct edge_index {
    int i = 0;
    int j = 0;

    friend bool operator==(const edge_index&, const edge_index&) = default;
};

/// Diagram plus pairing. The single connected component that survives at the
/// maximal scale never dies; it is excluded from the diagram and counted in
/// essential_count instead, since only finite deaths feed the loss.
struct persistence_result {
    std::vector<persistence_pair> diagram;   // sorted by death ascending
    std::vector<edge_index> pairing;         // pairing[k] destroys diagram[k]
    int essential_count = 0;
};

/// Total order on edges used everywhere a filtration order is needed:
/// weight first, then (i, j) lexicographic. A deterministic stand-in for the
/// symbolic perturbation that makes distances unique.
struct edge_key {
    double weight = 0.0;
    int i = 0;
    int j = 0;

    friend auto operator<=>(const edge_key& a, const edge_key& b) {
        return std::tie(a.weight, a.i, a.j) <=> std::tie(b.weight, b.i, b.j);
    }
    friend bool operator==(const edge_key& a, const edge_key& b) {
        return std::tie(a.weight, a.i, a.j) == std::tie(b.weight, b.i, b.j);
    }
};

inline edge_key canonical_tie_break(int i, int j, double weight) {
    if (i >= j) throw validation_error("canonical_tie_break requires i < j");
    return edge_key{weight, i, j};
}

/// Union-find with path halving and union by size.
class union_find {
public:
    explicit union_find(int n) : parent_(static_cast<std::size_t>(n)), size_(static_cast<std::size_t>(n), 1) {
        for (int v = 0; v < n; ++v) parent_[static_cast<std::size_t>(v)] = v;
    }

    int find(int v) {
        while (parent_[static_cast<std::size_t>(v)] != v) {
            parent_[static_cast<std::size_t>(v)] = parent_[static_cast<std::size_t>(parent_[static_cast<std::size_t>(v)])];
            v = parent_[static_cast<std::size_t>(v)];
        }
        return v;
    }

    /// Merges the components of a and b; returns false if already joined.
    bool unite(int a, int b) {
        int ra = find(a);
        int rb = find(b);
        if (ra == rb) return false;
        if (size_[static_cast<std::size_t>(ra)] < size_[static_cast<std::size_t>(rb)]) std::swap(ra, rb);
        parent_[static_cast<std::size_t>(rb)] = ra;
        size_[static_cast<std::size_t>(ra)] += size_[static_cast<std::size_t>(rb)];
        return true;
    }

    bool connected(int a, int b) { return find(a) == find(b); }

private:
    std::vector<int> parent_;
    std::vector<int> size_;
};

/// 0-dimensional Vietoris-Rips persistence of a finite metric space.
///
/// Kruskal construction: enumerate all m(m-1)/2 edges, sort by edge_key, scan
/// with union-find. Each uniting edge is a minimum-spanning-tree edge and
/// destroys one component at scale equal to its weight, giving the pair
/// (0, weight). Near-quadratic overall; the sort dominates.
inline persistence_result vr_persistence0(const distance_matrix& dist) {
    validate(dist);
    const int m = dist.size();

    persistence_result result;
    result.essential_count = 1;
    if (m == 1) return result;

    std::vector<edge_key> edges;
    edges.reserve(static_cast<std::size_t>(m) * static_cast<std::size_t>(m - 1) / 2);
    for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j) edges.push_back(canonical_tie_break(i, j, dist.values(i, j)));
    std::sort(edges.begin(), edges.end());

    union_find components(m);
    result.diagram.reserve(static_cast<std::size_t>(m - 1));
    result.pairing.reserve(static_cast<std::size_t>(m - 1));
    for (const edge_key& e : edges) {
        if (!components.unite(e.i, e.j)) continue;
        result.diagram.push_back(persistence_pair{0.0, e.weight});
        result.pairing.push_back(edge_index{e.i, e.j});
        if (static_cast<int>(result.pairing.size()) == m - 1) break;
    }
    return result;
}

/// The paired distances A[pi] as a vector, in pairing order.
inline std::vector<double> select_distances(const distance_matrix& dist,
                                            const std::vector<edge_index>& pairing) {
    const int m = dist.size();
    std::vector<double> selected;
    selected.reserve(pairing.size());
    for (const edge_index& e : pairing) {
        if (e.i < 0 || e.j < 0 || e.i >= m || e.j >= m)
            throw validation_error("select_distances: edge index out of range");
        selected.push_back(dist.values(e.i, e.j));
    }
    return selected;
}

}  // namespace topoae
