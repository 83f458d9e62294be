#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "topoae/diagram_distances.hpp"
#include "topoae/geometry.hpp"
#include "topoae/persistence.hpp"
#include "topoae/rng.hpp"

namespace topoae {

/// One subsample experiment: Hausdorff distance between the cloud and a
/// subsample, and the bottleneck distance between their 0-dim diagrams.
struct subsample_trial {
    int n = 0;
    int m = 0;
    int trial = 0;
    double hausdorff = 0.0;
    double bottleneck = 0.0;
    std::uint64_t seed = 0;
};

/// Sorted empirical sample of pairwise distances (the step-function F_D).
struct empirical_distance_distribution {
    std::vector<double> sample;  // ascending
    int n = 0;                   // source cloud size
    int m = 0;                   // subsample size the experiment targets
};

inline empirical_distance_distribution empirical_distances(const distance_matrix& dist) {
    empirical_distance_distribution emp;
    emp.n = dist.size();
    for (int i = 0; i < dist.size(); ++i)
        for (int j = i + 1; j < dist.size(); ++j) emp.sample.push_back(dist.values(i, j));
    std::sort(emp.sample.begin(), emp.sample.end());
    return emp;
}

/// Hausdorff distance between a cloud and a subsample of itself. Only the
/// cloud-to-subsample direction is evaluated: the reverse infimum is zero
/// because the subsample is contained in the cloud.
inline double hausdorff_subsample(const point_cloud& cloud, const std::vector<int>& subsample_indices) {
    validate(cloud);
    if (subsample_indices.empty()) throw validation_error("hausdorff_subsample: empty subsample");
    for (int idx : subsample_indices)
        if (idx < 0 || idx >= cloud.size())
            throw validation_error("hausdorff_subsample: index out of range");

    double worst = 0.0;
    for (int i = 0; i < cloud.size(); ++i) {
        double nearest = std::numeric_limits<double>::infinity();
        for (int idx : subsample_indices)
            nearest = std::min(nearest, (cloud.data.row(i) - cloud.data.row(idx)).norm());
        worst = std::max(worst, nearest);
    }
    return worst;
}

/// Repeated subsampling without replacement: records d_H and d_b per trial
/// and enforces the stability inequality d_b <= 2 d_H on every one.
inline std::vector<subsample_trial> check_subsample_stability(const point_cloud& cloud, int m, int trials,
                                                   std::uint64_t seed, double tolerance = 1e-9) {
    validate(cloud);
    const int n = cloud.size();
    if (m < 2 || m > n) throw validation_error("check_subsample_stability: need 2 <= m <= n");

    const distance_matrix dist = pairwise_distances(cloud);
    const persistence_result full = vr_persistence0(dist);

    std::vector<subsample_trial> results;
    results.reserve(static_cast<std::size_t>(trials));
    for (int t = 0; t < trials; ++t) {
        const std::uint64_t trial_seed = derive_seed(seed, static_cast<std::uint64_t>(t));
        rng gen(trial_seed);
        const std::vector<int> indices = gen.sample_without_replacement(n, m);

        subsample_trial trial;
        trial.n = n;
        trial.m = m;
        trial.trial = t;
        trial.seed = trial_seed;
        trial.hausdorff = hausdorff_subsample(cloud, indices);
        const persistence_result sub = vr_persistence0(restrict_to(dist, indices));
        trial.bottleneck = bottleneck_distance(full.diagram, sub.diagram);

        if (trial.bottleneck > 2.0 * trial.hausdorff + tolerance)
            throw invariant_violation("subsample stability violated: d_b = " +
                                      std::to_string(trial.bottleneck) + " > 2 * " +
                                      std::to_string(trial.hausdorff) + " (trial " +
                                      std::to_string(t) + ")");
        results.push_back(trial);
    }
    return results;
}

struct hausdorff_bounds {
    double bound_n_minus_1 = 0.0;    // exponent n-1
    double bound_m_n_minus_m = 0.0;  // exponent m(n-m); the i.i.d. upper bound
};

/// Upper bounds on the expected Hausdorff distance between an n-point cloud
/// and an m-point subsample, evaluated exactly against the empirical step
/// function: integral of (1 - F_D(z)^k) over z >= 0. The i.i.d. assumption
/// behind the m(n-m) exponent overestimates the spread of the row minima, so
/// the integral dominates the true expectation.
inline hausdorff_bounds expected_hausdorff_bound(const empirical_distance_distribution& emp, int n,
                                                 int m) {
    if (emp.sample.empty()) throw validation_error("expected_hausdorff_bound: empty sample");
    if (m < 1 || m >= n) throw validation_error("expected_hausdorff_bound: need 1 <= m < n");

    const auto& s = emp.sample;
    const double count = static_cast<double>(s.size());
    auto integral = [&](double exponent) {
        double value = s.front();  // F_D = 0 below the smallest sample
        for (std::size_t i = 1; i < s.size(); ++i) {
            const double f = static_cast<double>(i) / count;
            value += (s[i] - s[i - 1]) * (1.0 - std::pow(f, exponent));
        }
        return value;
    };

    hausdorff_bounds bounds;
    bounds.bound_n_minus_1 = integral(static_cast<double>(n - 1));
    bounds.bound_m_n_minus_m = integral(static_cast<double>(m) * static_cast<double>(n - m));
    return bounds;
}

struct topo_distance_row {
    double w1 = 0.0;
    double w2 = 0.0;
    double w_inf = 0.0;
};

struct topo_distance_table {
    std::vector<topo_distance_row> trials;
    topo_distance_row mean;
    topo_distance_row stddev;
};

/// Topological distances between matching subsamples of a data-space cloud
/// and its latent embedding: W1, W2 and the bottleneck distance between the
/// 0-dim diagrams, aggregated over repeated subsampling.
inline topo_distance_table latent_topo_distances(const point_cloud& test_cloud,
                                                 const point_cloud& latent_cloud, int subsample_size,
                                                 int trials, std::uint64_t seed) {
    validate(test_cloud);
    validate(latent_cloud);
    if (test_cloud.size() != latent_cloud.size())
        throw validation_error("latent_topo_distances: row counts differ");
    if (subsample_size < 1 || subsample_size > test_cloud.size())
        throw validation_error("latent_topo_distances: subsample size out of range");

    topo_distance_table table;
    for (int t = 0; t < trials; ++t) {
        rng gen(derive_seed(seed, static_cast<std::uint64_t>(t)));
        const auto indices = gen.sample_without_replacement(test_cloud.size(), subsample_size);

        const auto diag_x = vr_persistence0(pairwise_distances(subsample(test_cloud, indices))).diagram;
        const auto diag_z = vr_persistence0(pairwise_distances(subsample(latent_cloud, indices))).diagram;

        topo_distance_row row;
        row.w1 = wasserstein_distance(diag_x, diag_z, 1);
        row.w2 = wasserstein_distance(diag_x, diag_z, 2);
        row.w_inf = bottleneck_distance(diag_x, diag_z);
        table.trials.push_back(row);
    }

    const double count = static_cast<double>(table.trials.size());
    for (const auto& row : table.trials) {
        table.mean.w1 += row.w1 / count;
        table.mean.w2 += row.w2 / count;
        table.mean.w_inf += row.w_inf / count;
    }
    for (const auto& row : table.trials) {
        table.stddev.w1 += (row.w1 - table.mean.w1) * (row.w1 - table.mean.w1) / count;
        table.stddev.w2 += (row.w2 - table.mean.w2) * (row.w2 - table.mean.w2) / count;
        table.stddev.w_inf += (row.w_inf - table.mean.w_inf) * (row.w_inf - table.mean.w_inf) / count;
    }
    table.stddev.w1 = std::sqrt(table.stddev.w1);
    table.stddev.w2 = std::sqrt(table.stddev.w2);
    table.stddev.w_inf = std::sqrt(table.stddev.w_inf);
    return table;
}

}  // namespace topoae
