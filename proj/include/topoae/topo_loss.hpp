#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <vector>

#include "topoae/geometry.hpp"
#include "topoae/persistence.hpp"

namespace topoae {

struct topo_loss_value {
    double total = 0.0;
    double data_to_latent = 0.0;   // pairing of the data space, distances of both
    double latent_to_data = 0.0;   // pairing of the latent space, distances of both
};

/// Loss value plus the exact gradient with respect to the latent coordinates.
/// degenerate_edges counts paired latent edges of length zero, whose gradient
/// contribution is dropped (the Euclidean norm is not differentiable there).
struct topo_loss_result {
    double total = 0.0;
    double data_to_latent = 0.0;
    double latent_to_data = 0.0;
    Eigen::MatrixXd grad_latent;   // m x latent_dim
    int degenerate_edges = 0;
};

/// One directed term: half the squared deviation between the distances the
/// pairing selects in its own space and the same entries of the other space.
inline double directed_loss(const std::vector<double>& source_dists,
                            const std::vector<double>& target_dists) {
    if (source_dists.size() != target_dists.size())
        throw validation_error("directed_loss: length mismatch");
    double sum = 0.0;
    for (std::size_t k = 0; k < source_dists.size(); ++k) {
        const double r = source_dists[k] - target_dists[k];
        sum += r * r;
    }
    return 0.5 * sum;
}

/// Two-directional topological loss between a data-space batch and its latent
/// codes. Raw (unnormalized); the training loop divides by the batch size so
/// the regularization strength stays batch-size independent.
inline topo_loss_value topo_loss(const distance_matrix& dist_x, const distance_matrix& dist_z,
                                 const std::vector<edge_index>& pairing_x,
                                 const std::vector<edge_index>& pairing_z) {
    if (dist_x.size() != dist_z.size())
        throw validation_error("topo_loss: distance matrices differ in size");
    topo_loss_value value;
    value.data_to_latent =
        directed_loss(select_distances(dist_x, pairing_x), select_distances(dist_z, pairing_x));
    value.latent_to_data =
        directed_loss(select_distances(dist_z, pairing_z), select_distances(dist_x, pairing_z));
    value.total = value.data_to_latent + value.latent_to_data;
    return value;
}

namespace detail {

// Both directed terms reduce to d/dz_i [ 1/2 (A^X[e] - A^Z[e])^2 ] summed over
// their own edge set, with the pairing held fixed. Edges are visited in
// pairing order so accumulation is deterministic.
inline void accumulate_edge_gradients(const std::vector<edge_index>& pairing,
                                      const distance_matrix& dist_x, const distance_matrix& dist_z,
                                      const Eigen::MatrixXd& latent, Eigen::MatrixXd& grad,
                                      int& degenerate_edges) {
    for (const edge_index& e : pairing) {
        const double az = dist_z.values(e.i, e.j);
        if (az == 0.0) {
            ++degenerate_edges;
            continue;
        }
        const double scale = (az - dist_x.values(e.i, e.j)) / az;
        const Eigen::RowVectorXd diff = latent.row(e.i) - latent.row(e.j);
        grad.row(e.i) += scale * diff;
        grad.row(e.j) -= scale * diff;
    }
}

}  // namespace detail

/// Loss and gradient w.r.t. the latent coordinates. Persistence pairings are
/// treated as constant: a diagram is robust to infinitesimal perturbations of
/// its entries, so the selected edges do not move during one update step. The
/// chain through the encoder parameters is completed by the caller's backprop;
/// derivatives of the data-space distances vanish identically.
inline topo_loss_result topo_loss_grad(const point_cloud& latent, const distance_matrix& dist_x,
                                       const distance_matrix& dist_z,
                                       const std::vector<edge_index>& pairing_x,
                                       const std::vector<edge_index>& pairing_z) {
    validate(latent);
    const int m = latent.size();
    if (dist_x.size() != m || dist_z.size() != m)
        throw validation_error("topo_loss_grad: distance matrices do not match the latent batch");
    {
        const distance_matrix recomputed = pairwise_distances(latent, dist_z.metric_tag);
        if ((recomputed.values - dist_z.values).cwiseAbs().maxCoeff() > 1e-9)
            throw validation_error("topo_loss_grad: dist_z is not the distance matrix of `latent`");
    }

    const topo_loss_value value = topo_loss(dist_x, dist_z, pairing_x, pairing_z);

    topo_loss_result result;
    result.total = value.total;
    result.data_to_latent = value.data_to_latent;
    result.latent_to_data = value.latent_to_data;
    result.grad_latent = Eigen::MatrixXd::Zero(m, latent.dim());
    detail::accumulate_edge_gradients(pairing_x, dist_x, dist_z, latent.data, result.grad_latent,
                                      result.degenerate_edges);
    detail::accumulate_edge_gradients(pairing_z, dist_x, dist_z, latent.data, result.grad_latent,
                                      result.degenerate_edges);
    return result;
}

}  // namespace topoae
