#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <vector>

#include "topoae/geometry.hpp"

namespace topoae {

/// Embedding-quality measures between a data-space distance matrix and a
/// latent-space distance matrix.
struct metrics_report {
    std::map<double, double> kl;   // sigma -> KL(f_X || f_Z)
    double trust = 0.0;
    double cont = 0.0;
    double mrre = 0.0;
    double l_rmse = 0.0;
    std::optional<double> data_mse;
    int k_neighbors = 0;
    std::vector<double> sigma_grid;
};

/// Neighbor ranks per row: ranks(i, j) is the rank of j among the neighbors
/// of i (1 = nearest, m-1 = farthest), 0 on the diagonal. Ties resolve by
/// index, the same secondary key the filtration order uses.
inline Eigen::MatrixXi rank_matrix(const distance_matrix& dist) {
    const int m = dist.size();
    Eigen::MatrixXi ranks = Eigen::MatrixXi::Zero(m, m);
    std::vector<int> order(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) {
        order.clear();
        for (int j = 0; j < m; ++j)
            if (j != i) order.push_back(j);
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            const double da = dist.values(i, a);
            const double db = dist.values(i, b);
            return da != db ? da < db : a < b;
        });
        for (int r = 0; r < m - 1; ++r) ranks(i, order[static_cast<std::size_t>(r)]) = r + 1;
    }
    return ranks;
}

/// Distance-to-a-measure density estimate at length scale sigma, returned as
/// a probability vector. Distances are first normalized by the maximum entry
/// so scales are comparable across spaces.
inline Eigen::VectorXd density_estimate(const distance_matrix& dist, double sigma) {
    if (sigma <= 0.0) throw validation_error("density_estimate: sigma must be positive");
    if (dist.size() < 2) throw validation_error("density_estimate: need at least two points");
    const double max_dist = dist.values.maxCoeff();
    if (max_dist == 0.0) throw validation_error("density_estimate: degenerate all-zero distances");

    const int m = dist.size();
    Eigen::VectorXd density(m);
    for (int i = 0; i < m; ++i) {
        double sum = 0.0;
        for (int j = 0; j < m; ++j) {
            const double d = dist.values(i, j) / max_dist;
            sum += std::exp(-(d * d) / sigma);
        }
        density(i) = sum;
    }
    return density / density.sum();
}

/// KL divergence between the density estimates of the two spaces.
inline double kl_sigma(const distance_matrix& dist_x, const distance_matrix& dist_z, double sigma) {
    if (dist_x.size() != dist_z.size()) throw validation_error("kl_sigma: size mismatch");
    const Eigen::VectorXd p = density_estimate(dist_x, sigma);
    const Eigen::VectorXd q = density_estimate(dist_z, sigma);
    double kl = 0.0;
    for (int i = 0; i < p.size(); ++i) {
        if (q(i) <= 0.0) throw validation_error("kl_sigma: zero mass in the latent density");
        if (p(i) > 0.0) kl += p(i) * std::log(p(i) / q(i));
    }
    return kl;
}

namespace detail {

inline void check_k(int k, int m) {
    if (k < 1 || k >= m) throw validation_error("neighborhood size k out of range");
}

// Venna-Kaski scaling constant; the small-k branch is the usual one.
inline double trust_normalizer(int m, int k) {
    return 2 * k < m ? static_cast<double>(m) * k * (2.0 * m - 3.0 * k - 1.0)
                     : static_cast<double>(m) * (m - k) * (m - k - 1.0);
}

}  // namespace detail

/// Trustworthiness: penalizes latent-space neighbors that are not data-space
/// neighbors, weighted by how far out they rank in the data space.
inline double trustworthiness(const distance_matrix& dist_x, const distance_matrix& dist_z, int k) {
    const int m = dist_x.size();
    if (dist_z.size() != m) throw validation_error("trustworthiness: size mismatch");
    detail::check_k(k, m);

    const Eigen::MatrixXi ranks_x = rank_matrix(dist_x);
    const Eigen::MatrixXi ranks_z = rank_matrix(dist_z);
    double penalty = 0.0;
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j)
            if (j != i && ranks_z(i, j) <= k && ranks_x(i, j) > k) penalty += ranks_x(i, j) - k;

    const double normalizer = detail::trust_normalizer(m, k);
    return normalizer == 0.0 ? 1.0 : 1.0 - 2.0 / normalizer * penalty;
}

/// Continuity is trustworthiness with the two spaces exchanged.
inline double continuity(const distance_matrix& dist_x, const distance_matrix& dist_z, int k) {
    return trustworthiness(dist_z, dist_x, k);
}

/// Mean relative rank error: average of the two directed terms, each scaled
/// by the maximal achievable error (every rank-j neighbor displaced to the
/// last rank m-1). Lower is better; identical spaces give 0.
inline double mrre(const distance_matrix& dist_x, const distance_matrix& dist_z, int k) {
    const int m = dist_x.size();
    if (dist_z.size() != m) throw validation_error("mrre: size mismatch");
    detail::check_k(k, m);

    const Eigen::MatrixXi ranks_x = rank_matrix(dist_x);
    const Eigen::MatrixXi ranks_z = rank_matrix(dist_z);

    double from_latent = 0.0;  // neighbors selected in the latent space
    double from_data = 0.0;    // neighbors selected in the data space
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < m; ++j) {
            if (j == i) continue;
            const double rx = ranks_x(i, j);
            const double rz = ranks_z(i, j);
            if (rz <= k) from_latent += std::abs(rx - rz) / rz;
            if (rx <= k) from_data += std::abs(rx - rz) / rx;
        }
    }

    double normalizer = 0.0;
    for (int j = 1; j <= k; ++j) normalizer += static_cast<double>(m - 1 - j) / j;
    normalizer *= m;
    if (normalizer == 0.0) return 0.0;
    return 0.5 * (from_latent + from_data) / normalizer;
}

/// Root mean square deviation between the two distance matrices, averaged
/// over all m^2 ordered entries (diagonal included).
inline double l_rmse(const distance_matrix& dist_x, const distance_matrix& dist_z) {
    const int m = dist_x.size();
    if (dist_z.size() != m) throw validation_error("l_rmse: size mismatch");
    const double sum_sq = (dist_x.values - dist_z.values).squaredNorm();
    return std::sqrt(sum_sq / (static_cast<double>(m) * m));
}

inline metrics_report compute_metrics(const distance_matrix& dist_x, const distance_matrix& dist_z,
                                      const std::vector<double>& sigma_grid, int k) {
    metrics_report report;
    report.k_neighbors = k;
    report.sigma_grid = sigma_grid;
    for (double sigma : sigma_grid) report.kl[sigma] = kl_sigma(dist_x, dist_z, sigma);
    report.trust = trustworthiness(dist_x, dist_z, k);
    report.cont = continuity(dist_x, dist_z, k);
    report.mrre = mrre(dist_x, dist_z, k);
    report.l_rmse = l_rmse(dist_x, dist_z);
    return report;
}

}  // namespace topoae
