#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "topoae/geometry.hpp"
#include "topoae/persistence.hpp"
#include "topoae/rng.hpp"
#include "topoae/topo_loss.hpp"

namespace topoae {

enum class output_activation : std::uint8_t { identity = 0, tanh = 1 };

inline constexpr double kBatchnormEps = 1e-5;
inline constexpr double kBatchnormMomentum = 0.1;

/// Architecture: layer_sizes lists the widths including input, bottleneck and
/// output, e.g. {101, 32, 32, 2, 32, 32, 101}. The middle entry is the latent
/// width. Hidden layers get batch-norm (optional) plus ReLU; the layers that
/// produce the bottleneck and the output get neither, the output optionally
/// gets a tanh.
struct mlp_config {
    std::vector<int> layer_sizes;
    bool use_batchnorm = true;
    output_activation out_act = output_activation::identity;
};

inline void validate(const mlp_config& config) {
    if (config.layer_sizes.size() < 3 || config.layer_sizes.size() % 2 == 0)
        throw validation_error("mlp_config: layer_sizes needs an odd length >= 3");
    for (int w : config.layer_sizes)
        if (w < 1) throw validation_error("mlp_config: layer widths must be positive");
}

struct batchnorm_params {
    Eigen::VectorXd gamma;
    Eigen::VectorXd beta;
    Eigen::VectorXd running_mean;
    Eigen::VectorXd running_var;
};

struct mlp_model {
    mlp_config config;
    std::vector<Eigen::MatrixXd> weights;      // layer l: out x in
    std::vector<Eigen::VectorXd> biases;
    std::vector<batchnorm_params> batchnorm;   // entries empty on layers without norm

    int n_layers() const { return static_cast<int>(weights.size()); }
    int encoder_layers() const { return n_layers() / 2; }
    int input_dim() const { return config.layer_sizes.front(); }
    int latent_dim() const { return config.layer_sizes[config.layer_sizes.size() / 2]; }

    bool layer_activated(int l) const { return l != encoder_layers() - 1 && l != n_layers() - 1; }
    bool layer_has_norm(int l) const { return config.use_batchnorm && layer_activated(l); }
};

/// He-style fan-in uniform initialization, seeded.
inline mlp_model make_mlp(const mlp_config& config, std::uint64_t seed) {
    validate(config);
    mlp_model model;
    model.config = config;
    rng gen(seed);
    const int n_layers = static_cast<int>(config.layer_sizes.size()) - 1;
    for (int l = 0; l < n_layers; ++l) {
        const int fan_in = config.layer_sizes[static_cast<std::size_t>(l)];
        const int fan_out = config.layer_sizes[static_cast<std::size_t>(l) + 1];
        const double bound = std::sqrt(6.0 / fan_in);
        Eigen::MatrixXd w(fan_out, fan_in);
        for (int i = 0; i < fan_out; ++i)
            for (int j = 0; j < fan_in; ++j) w(i, j) = gen.uniform(-bound, bound);
        model.weights.push_back(std::move(w));
        model.biases.push_back(Eigen::VectorXd::Zero(fan_out));

        batchnorm_params bn;
        if (config.use_batchnorm && l != n_layers / 2 - 1 && l != n_layers - 1) {
            bn.gamma = Eigen::VectorXd::Ones(fan_out);
            bn.beta = Eigen::VectorXd::Zero(fan_out);
            bn.running_mean = Eigen::VectorXd::Zero(fan_out);
            bn.running_var = Eigen::VectorXd::Ones(fan_out);
        }
        model.batchnorm.push_back(std::move(bn));
    }
    return model;
}

enum class run_mode { train, eval };

/// Intermediates kept for backprop. Batch statistics use the biased variance;
/// train mode normalizes with them, eval mode with the running estimates.
struct forward_cache {
    std::vector<Eigen::MatrixXd> layer_input;     // input of affine layer l
    std::vector<Eigen::MatrixXd> pre_activation;  // ReLU input on activated layers
    std::vector<Eigen::MatrixXd> normalized;      // x-hat on batch-norm layers
    std::vector<Eigen::VectorXd> batch_mean;
    std::vector<Eigen::VectorXd> batch_var;
    std::vector<Eigen::VectorXd> inv_std;         // 1/sqrt(var + eps) used in the pass
    Eigen::MatrixXd latent;
    Eigen::MatrixXd reconstruction;
};

/// Pure forward pass; running statistics are not touched (see
/// update_running_stats). Rows of `batch` are samples.
inline forward_cache forward(const mlp_model& model, const Eigen::MatrixXd& batch, run_mode mode) {
    if (batch.cols() != model.input_dim())
        throw validation_error("forward: batch width " + std::to_string(batch.cols()) +
                               " does not match input width " + std::to_string(model.input_dim()));

    forward_cache cache;
    const int n_layers = model.n_layers();
    cache.layer_input.resize(static_cast<std::size_t>(n_layers));
    cache.pre_activation.resize(static_cast<std::size_t>(n_layers));
    cache.normalized.resize(static_cast<std::size_t>(n_layers));
    cache.batch_mean.resize(static_cast<std::size_t>(n_layers));
    cache.batch_var.resize(static_cast<std::size_t>(n_layers));
    cache.inv_std.resize(static_cast<std::size_t>(n_layers));

    Eigen::MatrixXd current = batch;
    for (int l = 0; l < n_layers; ++l) {
        cache.layer_input[static_cast<std::size_t>(l)] = current;
        Eigen::MatrixXd pre = (current * model.weights[static_cast<std::size_t>(l)].transpose()).rowwise() +
                              model.biases[static_cast<std::size_t>(l)].transpose();

        if (model.layer_has_norm(l)) {
            const auto& bn = model.batchnorm[static_cast<std::size_t>(l)];
            const double m_rows = static_cast<double>(pre.rows());
            Eigen::VectorXd mean;
            Eigen::VectorXd var;
            if (mode == run_mode::train) {
                mean = pre.colwise().mean();
                var = (pre.rowwise() - mean.transpose()).array().square().colwise().sum() / m_rows;
            } else {
                mean = bn.running_mean;
                var = bn.running_var;
            }
            const Eigen::VectorXd inv_std = (var.array() + kBatchnormEps).rsqrt();
            Eigen::MatrixXd normalized =
                (pre.rowwise() - mean.transpose()).array().rowwise() * inv_std.transpose().array();
            cache.batch_mean[static_cast<std::size_t>(l)] = mean;
            cache.batch_var[static_cast<std::size_t>(l)] = var;
            cache.inv_std[static_cast<std::size_t>(l)] = inv_std;
            cache.normalized[static_cast<std::size_t>(l)] = normalized;
            pre = (normalized.array().rowwise() * bn.gamma.transpose().array()).rowwise() +
                  bn.beta.transpose().array();
        }

        if (model.layer_activated(l)) {
            cache.pre_activation[static_cast<std::size_t>(l)] = pre;
            current = pre.cwiseMax(0.0);
        } else if (l == n_layers - 1 && model.config.out_act == output_activation::tanh) {
            current = pre.array().tanh();
        } else {
            current = pre;
        }
        if (l == model.encoder_layers() - 1) cache.latent = current;
    }
    cache.reconstruction = current;
    return cache;
}

/// Momentum update of the running batch-norm statistics from a train-mode
/// forward pass.
inline void update_running_stats(mlp_model& model, const forward_cache& cache) {
    for (int l = 0; l < model.n_layers(); ++l) {
        if (!model.layer_has_norm(l)) continue;
        auto& bn = model.batchnorm[static_cast<std::size_t>(l)];
        bn.running_mean = (1.0 - kBatchnormMomentum) * bn.running_mean +
                          kBatchnormMomentum * cache.batch_mean[static_cast<std::size_t>(l)];
        bn.running_var = (1.0 - kBatchnormMomentum) * bn.running_var +
                         kBatchnormMomentum * cache.batch_var[static_cast<std::size_t>(l)];
    }
}

/// Parameter gradients, shaped like the model (also reused as Adam moments).
struct mlp_grads {
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> biases;
    std::vector<Eigen::VectorXd> gamma;
    std::vector<Eigen::VectorXd> beta;
};

inline mlp_grads zeros_like(const mlp_model& model) {
    mlp_grads grads;
    for (int l = 0; l < model.n_layers(); ++l) {
        grads.weights.push_back(Eigen::MatrixXd::Zero(model.weights[static_cast<std::size_t>(l)].rows(),
                                                      model.weights[static_cast<std::size_t>(l)].cols()));
        grads.biases.push_back(Eigen::VectorXd::Zero(model.biases[static_cast<std::size_t>(l)].size()));
        const bool has_norm = model.layer_has_norm(l);
        grads.gamma.push_back(Eigen::VectorXd::Zero(has_norm ? model.biases[static_cast<std::size_t>(l)].size() : 0));
        grads.beta.push_back(Eigen::VectorXd::Zero(has_norm ? model.biases[static_cast<std::size_t>(l)].size() : 0));
    }
    return grads;
}

struct loss_breakdown {
    double total = 0.0;
    double recon = 0.0;      // mean squared error over all entries
    double topo = 0.0;       // topological loss already divided by the batch size
    int degenerate_edges = 0;
};

namespace detail {

// Backprop from d(loss)/d(post-activation of layer l) down to the inputs,
// accumulating parameter gradients. grad_latent_extra is added at the
// bottleneck on the way down (the topological term reaches the encoder only).
inline void backward(const mlp_model& model, const forward_cache& cache, Eigen::MatrixXd upstream,
                     const Eigen::MatrixXd* grad_latent_extra, mlp_grads& grads) {
    const int n_layers = model.n_layers();
    for (int l = n_layers - 1; l >= 0; --l) {
        if (l == n_layers - 1 && model.config.out_act == output_activation::tanh) {
            upstream.array() *= 1.0 - cache.reconstruction.array().square();
        } else if (model.layer_activated(l)) {
            // ReLU mask; the post-activation values are the next layer input.
            const auto& post = l + 1 < n_layers ? cache.layer_input[static_cast<std::size_t>(l) + 1]
                                                : cache.reconstruction;
            upstream.array() *= (post.array() > 0.0).cast<double>();
        }

        if (model.layer_has_norm(l)) {
            const auto& bn = model.batchnorm[static_cast<std::size_t>(l)];
            const auto& normalized = cache.normalized[static_cast<std::size_t>(l)];
            const double m_rows = static_cast<double>(upstream.rows());

            grads.gamma[static_cast<std::size_t>(l)] +=
                (upstream.array() * normalized.array()).colwise().sum().matrix().transpose();
            grads.beta[static_cast<std::size_t>(l)] += upstream.colwise().sum().transpose();

            const Eigen::RowVectorXd mean_g = upstream.colwise().sum() / m_rows;
            const Eigen::RowVectorXd mean_gx =
                (upstream.array() * normalized.array()).colwise().sum() / m_rows;
            Eigen::MatrixXd dnorm = (upstream.rowwise() - mean_g).array() -
                                    normalized.array().rowwise() * mean_gx.array();
            upstream = dnorm.array().rowwise() *
                       (bn.gamma.array() * cache.inv_std[static_cast<std::size_t>(l)].array())
                           .transpose();
        }

        const auto& input = cache.layer_input[static_cast<std::size_t>(l)];
        grads.weights[static_cast<std::size_t>(l)] += upstream.transpose() * input;
        grads.biases[static_cast<std::size_t>(l)] += upstream.colwise().sum().transpose();
        upstream = upstream * model.weights[static_cast<std::size_t>(l)];

        if (l == model.encoder_layers() && grad_latent_extra != nullptr)
            upstream += *grad_latent_extra;
    }
}

}  // namespace detail

/// Combined loss and parameter gradients for one mini-batch: reconstruction
/// MSE plus lambda times the batch-size-normalized topological term. The
/// topological gradient enters at the bottleneck and flows through the
/// encoder only; the data-space distances do not depend on the parameters.
inline std::pair<loss_breakdown, mlp_grads> loss_and_grads(const mlp_model& model,
                                                           const point_cloud& batch, double lambda,
                                                           const forward_cache& cache) {
    const int m = batch.size();
    const int width = batch.dim();
    if (lambda < 0.0) throw validation_error("loss_and_grads: lambda must be >= 0");
    if (lambda > 0.0 && m < 2)
        throw validation_error("loss_and_grads: topological term needs a batch of at least 2");

    loss_breakdown loss;
    const Eigen::MatrixXd residual = cache.reconstruction - batch.data;
    loss.recon = residual.squaredNorm() / (static_cast<double>(m) * width);

    mlp_grads grads = zeros_like(model);
    Eigen::MatrixXd upstream = 2.0 * residual / (static_cast<double>(m) * width);

    Eigen::MatrixXd topo_grad;
    if (lambda > 0.0) {
        point_cloud latent;
        latent.data = cache.latent;
        const distance_matrix dist_x = pairwise_distances(batch);
        const distance_matrix dist_z = pairwise_distances(latent);
        const auto pairing_x = vr_persistence0(dist_x).pairing;
        const auto pairing_z = vr_persistence0(dist_z).pairing;
        const auto topo = topo_loss_grad(latent, dist_x, dist_z, pairing_x, pairing_z);
        loss.topo = topo.total / m;
        loss.degenerate_edges = topo.degenerate_edges;
        topo_grad = (lambda / m) * topo.grad_latent;
    }
    loss.total = loss.recon + lambda * loss.topo;

    detail::backward(model, cache, std::move(upstream), lambda > 0.0 ? &topo_grad : nullptr, grads);
    return {loss, grads};
}

inline std::pair<loss_breakdown, mlp_grads> loss_and_grads(const mlp_model& model,
                                                           const point_cloud& batch, double lambda) {
    return loss_and_grads(model, batch, lambda, forward(model, batch.data, run_mode::train));
}

// ---------------------------------------------------------------------------
// Adam with decoupled weight decay

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

/// One Adam step on a single tensor. Weight decay is decoupled: pass 0 for
/// parameters that should not decay.
template <typename Derived>
void adam_update(Eigen::MatrixBase<Derived>& param, const Eigen::MatrixBase<Derived>& grad,
                 Eigen::MatrixBase<Derived>& moment1, Eigen::MatrixBase<Derived>& moment2,
                 long step, double lr, double weight_decay) {
    moment1 = kAdamBeta1 * moment1 + (1.0 - kAdamBeta1) * grad;
    moment2.array() = kAdamBeta2 * moment2.array() + (1.0 - kAdamBeta2) * grad.array().square();
    const double bias1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(step));
    const double bias2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(step));
    param.array() -= lr * ((moment1.array() / bias1) / ((moment2.array() / bias2).sqrt() + kAdamEps) +
                           weight_decay * param.array());
}

struct adam_state {
    long step = 0;
    mlp_grads moment1;
    mlp_grads moment2;
};

inline adam_state make_adam_state(const mlp_model& model) {
    return adam_state{0, zeros_like(model), zeros_like(model)};
}

/// Applies one optimizer step. Weight decay hits the weight matrices only,
/// not biases or batch-norm parameters.
inline void adam_step(mlp_model& model, const mlp_grads& grads, adam_state& state, double lr,
                      double weight_decay) {
    ++state.step;
    for (int l = 0; l < model.n_layers(); ++l) {
        const auto li = static_cast<std::size_t>(l);
        adam_update(model.weights[li], grads.weights[li], state.moment1.weights[li],
                    state.moment2.weights[li], state.step, lr, weight_decay);
        adam_update(model.biases[li], grads.biases[li], state.moment1.biases[li],
                    state.moment2.biases[li], state.step, lr, 0.0);
        if (model.layer_has_norm(l)) {
            adam_update(model.batchnorm[li].gamma, grads.gamma[li], state.moment1.gamma[li],
                        state.moment2.gamma[li], state.step, lr, 0.0);
            adam_update(model.batchnorm[li].beta, grads.beta[li], state.moment1.beta[li],
                        state.moment2.beta[li], state.step, lr, 0.0);
        }
    }
}

// ---------------------------------------------------------------------------
// Training loop

struct train_config {
    double learning_rate = 1e-3;
    int batch_size = 28;
    double lambda = 0.0;
    int max_epochs = 100;
    int patience = 10;
    double weight_decay = 1e-5;
    std::uint64_t seed = 0;
};

inline void validate(const train_config& config) {
    if (config.batch_size < 2) throw validation_error("train_config: batch_size must be >= 2");
    if (config.lambda < 0.0) throw validation_error("train_config: lambda must be >= 0");
    if (config.learning_rate <= 0.0) throw validation_error("train_config: learning_rate must be > 0");
    if (config.max_epochs < 0 || config.patience < 1)
        throw validation_error("train_config: bad epoch or patience setting");
}

struct epoch_stats {
    int epoch = 0;
    double train_recon = 0.0;
    double train_topo = 0.0;
    double train_total = 0.0;
    double val_recon = 0.0;
    double val_topo = 0.0;
    double val_total = 0.0;
};

struct train_result {
    mlp_model model;           // parameters of the best validation epoch
    adam_state optimizer;
    std::vector<epoch_stats> history;
    int best_epoch = -1;
    double best_val_loss = 0.0;
    int epochs_run = 0;
};

/// Validation loss: eval-mode forward over the whole split in one batch.
/// The early-stopping criterion includes the lambda-weighted topological
/// term, i.e. it tracks the full training objective.
inline loss_breakdown evaluate_loss(const mlp_model& model, const point_cloud& data, double lambda) {
    const forward_cache cache = forward(model, data.data, run_mode::eval);
    loss_breakdown loss;
    loss.recon = (cache.reconstruction - data.data).squaredNorm() /
                 (static_cast<double>(data.size()) * data.dim());
    if (lambda > 0.0) {
        point_cloud latent;
        latent.data = cache.latent;
        const distance_matrix dist_x = pairwise_distances(data);
        const distance_matrix dist_z = pairwise_distances(latent);
        const auto value = topo_loss(dist_x, dist_z, vr_persistence0(dist_x).pairing,
                                     vr_persistence0(dist_z).pairing);
        loss.topo = value.total / data.size();
    }
    loss.total = loss.recon + lambda * loss.topo;
    return loss;
}

/// Seeded mini-batch training with early stopping on the validation loss.
/// The last incomplete mini-batch of each epoch is dropped so the per-batch
/// topology approximation always sees the same m.
inline train_result train(mlp_model model, const point_cloud& train_set, const point_cloud& val_set,
                          const train_config& config) {
    validate(config);
    validate(train_set);
    validate(val_set);
    if (train_set.size() < config.batch_size)
        throw validation_error("train: training split smaller than one batch");

    train_result result;
    adam_state state = make_adam_state(model);
    result.model = model;

    double best = std::numeric_limits<double>::infinity();
    int epochs_since_improvement = 0;

    for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
        rng shuffle_gen(derive_seed(config.seed, static_cast<std::uint64_t>(epoch)));
        const auto order = shuffle_gen.permutation(train_set.size());
        const int n_batches = train_set.size() / config.batch_size;

        epoch_stats stats;
        stats.epoch = epoch;
        for (int b = 0; b < n_batches; ++b) {
            std::vector<int> indices(order.begin() + b * config.batch_size,
                                     order.begin() + (b + 1) * config.batch_size);
            const point_cloud batch = subsample(train_set, indices);

            const forward_cache cache = forward(model, batch.data, run_mode::train);
            const auto [loss, grads] = loss_and_grads(model, batch, config.lambda, cache);
            update_running_stats(model, cache);
            adam_step(model, grads, state, config.learning_rate, config.weight_decay);

            stats.train_recon += loss.recon / n_batches;
            stats.train_topo += loss.topo / n_batches;
            stats.train_total += loss.total / n_batches;
        }

        const loss_breakdown val = evaluate_loss(model, val_set, config.lambda);
        stats.val_recon = val.recon;
        stats.val_topo = val.topo;
        stats.val_total = val.total;
        result.history.push_back(stats);
        result.epochs_run = epoch + 1;

        if (val.total < best) {
            best = val.total;
            result.best_epoch = epoch;
            result.best_val_loss = best;
            result.model = model;
            epochs_since_improvement = 0;
        } else if (++epochs_since_improvement >= config.patience) {
            break;
        }
    }

    result.optimizer = std::move(state);
    if (result.best_epoch < 0) result.model = std::move(model);
    return result;
}

}  // namespace topoae
