#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "topoae/errors.hpp"

namespace topoae {

/// A mini-batch of m points in d dimensions, with optional integer labels
/// (labels are carried through for plotting/export only).
struct point_cloud {
    Eigen::MatrixXd data;       // m x d, row per point
    std::vector<int> labels;    // empty, or exactly m entries

    int size() const { return static_cast<int>(data.rows()); }
    int dim() const { return static_cast<int>(data.cols()); }
    bool has_labels() const { return !labels.empty(); }
};

inline void validate(const point_cloud& cloud) {
    if (cloud.data.rows() < 1) throw validation_error("point cloud must contain at least one point");
    if (!cloud.data.allFinite()) throw validation_error("point cloud contains non-finite coordinates");
    if (cloud.has_labels() && static_cast<int>(cloud.labels.size()) != cloud.size())
        throw validation_error("label count does not match point count");
}

/// Symmetric m x m matrix of pairwise distances, tagged with the base metric.
struct distance_matrix {
    Eigen::MatrixXd values;     // m x m
    std::string metric_tag = "euclidean";

    int size() const { return static_cast<int>(values.rows()); }
};

inline void validate(const distance_matrix& dist, double tol = 0.0) {
    const auto& a = dist.values;
    if (a.rows() != a.cols()) throw validation_error("distance matrix is not square");
    if (a.rows() < 1) throw validation_error("distance matrix is empty");
    if (!a.allFinite()) throw validation_error("distance matrix contains non-finite entries");
    for (int i = 0; i < a.rows(); ++i) {
        if (std::abs(a(i, i)) > tol) throw validation_error("distance matrix diagonal is not zero");
        for (int j = i + 1; j < a.cols(); ++j) {
            if (a(i, j) < 0.0) throw validation_error("distance matrix has a negative entry");
            if (std::abs(a(i, j) - a(j, i)) > tol)
                throw validation_error("distance matrix is not symmetric");
        }
    }
}

using metric_fn = std::function<double(const Eigen::RowVectorXd&, const Eigen::RowVectorXd&)>;

/// Registry of base distances. Persistent homology only needs a pairwise
/// dissimilarity, so non-metric similarities can be registered as well.
inline std::map<std::string, metric_fn>& metric_registry() {
    static std::map<std::string, metric_fn> registry{
        {"euclidean",
         [](const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) { return (a - b).norm(); }},
    };
    return registry;
}

inline void register_metric(const std::string& name, metric_fn fn) {
    metric_registry()[name] = std::move(fn);
}

/// Full symmetric distance matrix of a point cloud under a registered metric.
inline distance_matrix pairwise_distances(const point_cloud& cloud,
                                          const std::string& metric = "euclidean") {
    validate(cloud);
    const auto& registry = metric_registry();
    const auto it = registry.find(metric);
    if (it == registry.end()) throw validation_error("unknown metric: " + metric);
    const metric_fn& d = it->second;

    const int m = cloud.size();
    distance_matrix dist;
    dist.metric_tag = metric;
    dist.values = Eigen::MatrixXd::Zero(m, m);
    for (int i = 0; i < m; ++i) {
        for (int j = i + 1; j < m; ++j) {
            const double v = d(cloud.data.row(i), cloud.data.row(j));
            dist.values(i, j) = v;
            dist.values(j, i) = v;
        }
    }
    return dist;
}

/// Principal submatrix for a subsample; the metric restricts canonically.
inline distance_matrix restrict_to(const distance_matrix& dist, const std::vector<int>& indices) {
    if (indices.empty()) throw validation_error("restrict_to: empty index set");
    const int m = static_cast<int>(indices.size());
    distance_matrix sub;
    sub.metric_tag = dist.metric_tag;
    sub.values.resize(m, m);
    for (int i = 0; i < m; ++i) {
        const int a = indices[static_cast<std::size_t>(i)];
        if (a < 0 || a >= dist.size()) throw validation_error("restrict_to: index out of range");
        for (int j = 0; j < m; ++j) {
            sub.values(i, j) = dist.values(a, indices[static_cast<std::size_t>(j)]);
        }
    }
    return sub;
}

/// Subset of rows of a point cloud (labels follow when present).
inline point_cloud subsample(const point_cloud& cloud, const std::vector<int>& indices) {
    point_cloud out;
    out.data.resize(static_cast<Eigen::Index>(indices.size()), cloud.data.cols());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const int a = indices[i];
        if (a < 0 || a >= cloud.size()) throw validation_error("subsample: index out of range");
        out.data.row(static_cast<Eigen::Index>(i)) = cloud.data.row(a);
        if (cloud.has_labels()) out.labels.push_back(cloud.labels[static_cast<std::size_t>(a)]);
    }
    return out;
}

}  // namespace topoae
