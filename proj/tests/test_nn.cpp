#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "topoae/checkpoint.hpp"
#include "topoae/datasets.hpp"
#include "topoae/nn.hpp"

using namespace topoae;

namespace {

// All trainable parameters of a model, in a fixed order matching grads_flat.
std::vector<double*> params_flat(mlp_model& model) {
    std::vector<double*> ptrs;
    for (int l = 0; l < model.n_layers(); ++l) {
        const auto li = static_cast<std::size_t>(l);
        for (Eigen::Index k = 0; k < model.weights[li].size(); ++k)
            ptrs.push_back(model.weights[li].data() + k);
        for (Eigen::Index k = 0; k < model.biases[li].size(); ++k)
            ptrs.push_back(model.biases[li].data() + k);
        if (model.layer_has_norm(l)) {
            for (Eigen::Index k = 0; k < model.batchnorm[li].gamma.size(); ++k)
                ptrs.push_back(model.batchnorm[li].gamma.data() + k);
            for (Eigen::Index k = 0; k < model.batchnorm[li].beta.size(); ++k)
                ptrs.push_back(model.batchnorm[li].beta.data() + k);
        }
    }
    return ptrs;
}

std::vector<double> grads_flat(const mlp_model& model, const mlp_grads& grads) {
    std::vector<double> values;
    for (int l = 0; l < model.n_layers(); ++l) {
        const auto li = static_cast<std::size_t>(l);
        for (Eigen::Index k = 0; k < grads.weights[li].size(); ++k)
            values.push_back(grads.weights[li].data()[k]);
        for (Eigen::Index k = 0; k < grads.biases[li].size(); ++k)
            values.push_back(grads.biases[li].data()[k]);
        if (model.layer_has_norm(l)) {
            for (Eigen::Index k = 0; k < grads.gamma[li].size(); ++k)
                values.push_back(grads.gamma[li].data()[k]);
            for (Eigen::Index k = 0; k < grads.beta[li].size(); ++k)
                values.push_back(grads.beta[li].data()[k]);
        }
    }
    return values;
}

// Training objective with the persistence pairings frozen at the base point;
// this is the function whose derivative loss_and_grads reports.
double frozen_loss(const mlp_model& model, const point_cloud& batch, double lambda,
                   const std::vector<edge_index>& pairing_x,
                   const std::vector<edge_index>& pairing_z) {
    const forward_cache cache = forward(model, batch.data, run_mode::train);
    double loss = (cache.reconstruction - batch.data).squaredNorm() /
                  (static_cast<double>(batch.size()) * batch.dim());
    if (lambda > 0.0) {
        point_cloud latent;
        latent.data = cache.latent;
        const auto value = topo_loss(pairwise_distances(batch), pairwise_distances(latent),
                                     pairing_x, pairing_z);
        loss += lambda * value.total / batch.size();
    }
    return loss;
}

// Smallest |pre-activation| over the ReLU layers; finite differences need the
// instance to stay clear of the kink.
double min_relu_margin(const mlp_model& model, const Eigen::MatrixXd& batch) {
    const forward_cache cache = forward(model, batch, run_mode::train);
    double margin = std::numeric_limits<double>::infinity();
    for (int l = 0; l < model.n_layers(); ++l)
        if (model.layer_activated(l))
            margin = std::min(
                margin, cache.pre_activation[static_cast<std::size_t>(l)].cwiseAbs().minCoeff());
    return margin;
}

double check_against_fd(const mlp_model& base, const point_cloud& batch, double lambda,
                        double step = 1e-6) {
    const auto pairing_x = vr_persistence0(pairwise_distances(batch)).pairing;
    point_cloud latent;
    latent.data = forward(base, batch.data, run_mode::train).latent;
    const auto pairing_z = vr_persistence0(pairwise_distances(latent)).pairing;

    const auto [loss, grads] = loss_and_grads(base, batch, lambda);
    (void)loss;
    const auto analytic = grads_flat(base, grads);

    mlp_model probe = base;
    auto ptrs = params_flat(probe);
    REQUIRE(ptrs.size() == analytic.size());

    double worst = 0.0;
    for (std::size_t k = 0; k < ptrs.size(); ++k) {
        const double saved = *ptrs[k];
        *ptrs[k] = saved + step;
        const double up = frozen_loss(probe, batch, lambda, pairing_x, pairing_z);
        *ptrs[k] = saved - step;
        const double down = frozen_loss(probe, batch, lambda, pairing_x, pairing_z);
        *ptrs[k] = saved;
        const double fd = (up - down) / (2.0 * step);
        const double absolute = std::abs(analytic[k] - fd);
        if (absolute > 1e-8)
            worst = std::max(worst, absolute / std::max(std::abs(fd), 1e-12));
    }
    return worst;
}

}  // namespace

TEST_CASE("zero model maps zero input to the output activation of zero") {
    mlp_config config{{3, 4, 2, 4, 3}, false, output_activation::identity};
    mlp_model model = make_mlp(config, 1);
    for (auto& w : model.weights) w.setZero();

    const Eigen::MatrixXd zeros = Eigen::MatrixXd::Zero(5, 3);
    REQUIRE(forward(model, zeros, run_mode::eval).reconstruction.cwiseAbs().maxCoeff() == 0.0);

    model.config.out_act = output_activation::tanh;
    REQUIRE(forward(model, zeros, run_mode::eval).reconstruction.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("forward shapes and finiteness") {
    mlp_config config{{7, 5, 2, 5, 7}, true, output_activation::identity};
    const mlp_model model = make_mlp(config, 3);
    REQUIRE(model.latent_dim() == 2);
    REQUIRE(model.encoder_layers() == 2);

    rng gen(4);
    const auto batch = oracles::random_cloud(10, 7, gen);
    const auto cache = forward(model, batch.data, run_mode::train);
    REQUIRE(cache.latent.rows() == 10);
    REQUIRE(cache.latent.cols() == 2);
    REQUIRE(cache.reconstruction.rows() == 10);
    REQUIRE(cache.reconstruction.cols() == 7);
    REQUIRE(cache.latent.allFinite());
    REQUIRE(cache.reconstruction.allFinite());

    Eigen::MatrixXd wrong = Eigen::MatrixXd::Zero(3, 5);
    REQUIRE_THROWS_AS(forward(model, wrong, run_mode::eval), validation_error);
}

TEST_CASE("eval with running stats seeded from a batch reproduces train mode") {
    mlp_config config{{6, 8, 2, 8, 6}, true, output_activation::identity};
    mlp_model model = make_mlp(config, 9);

    rng gen(10);
    const auto batch = oracles::random_cloud(16, 6, gen);
    const auto train_pass = forward(model, batch.data, run_mode::train);
    for (int l = 0; l < model.n_layers(); ++l)
        if (model.layer_has_norm(l)) {
            model.batchnorm[static_cast<std::size_t>(l)].running_mean =
                train_pass.batch_mean[static_cast<std::size_t>(l)];
            model.batchnorm[static_cast<std::size_t>(l)].running_var =
                train_pass.batch_var[static_cast<std::size_t>(l)];
        }
    const auto eval_pass = forward(model, batch.data, run_mode::eval);
    REQUIRE((eval_pass.reconstruction - train_pass.reconstruction).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("lambda = 0 total equals the reconstruction loss exactly") {
    mlp_config config{{5, 6, 2, 6, 5}, true, output_activation::identity};
    const mlp_model model = make_mlp(config, 2);
    rng gen(11);
    const auto batch = oracles::random_cloud(12, 5, gen);
    const auto [loss, grads] = loss_and_grads(model, batch, 0.0);
    (void)grads;
    REQUIRE(loss.total == loss.recon);
    REQUIRE(loss.topo == 0.0);
}

TEST_CASE("identity encoder: topo term vanishes and gradients match plain AE") {
    // Encoder is the exact identity, so latent distances equal input
    // distances and the topological residuals are all zero.
    mlp_config config{{2, 2, 2}, false, output_activation::identity};
    mlp_model model = make_mlp(config, 5);
    model.weights[0] = Eigen::MatrixXd::Identity(2, 2);
    model.biases[0].setZero();

    rng gen(12);
    const auto batch = oracles::random_cloud(9, 2, gen);
    const auto [with_topo, grads_topo] = loss_and_grads(model, batch, 1.0);
    const auto [plain, grads_plain] = loss_and_grads(model, batch, 0.0);

    REQUIRE(with_topo.topo == 0.0);
    REQUIRE(with_topo.total == plain.total);
    for (int l = 0; l < model.n_layers(); ++l) {
        const auto li = static_cast<std::size_t>(l);
        REQUIRE((grads_topo.weights[li] - grads_plain.weights[li]).cwiseAbs().maxCoeff() == 0.0);
        REQUIRE((grads_topo.biases[li] - grads_plain.biases[li]).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("lambda > 0 requires a batch of at least two points") {
    mlp_config config{{3, 2, 3}, false, output_activation::identity};
    const mlp_model model = make_mlp(config, 1);
    point_cloud lonely;
    lonely.data = Eigen::MatrixXd::Zero(1, 3);
    REQUIRE_THROWS_AS(loss_and_grads(model, lonely, 0.5), validation_error);
    REQUIRE_NOTHROW(loss_and_grads(model, lonely, 0.0));
}

TEST_CASE("full parameter gradients match finite differences (no batch-norm)") {
    rng gen(2024);
    int checked = 0;
    while (checked < 8) {
        mlp_config config{{3, 4, 2, 4, 3}, false, output_activation::identity};
        const mlp_model model = make_mlp(config, gen.next_u64());
        const auto batch = oracles::random_cloud(8, 3, gen);
        if (min_relu_margin(model, batch.data) < 1e-5) continue;  // keep FD off the ReLU kink
        const double lambda = checked % 2 == 0 ? 0.0 : 1.0;
        REQUIRE(check_against_fd(model, batch, lambda) < 1e-4);
        ++checked;
    }
}

TEST_CASE("batch-norm gradients match finite differences") {
    rng gen(77);
    int checked = 0;
    while (checked < 4) {
        mlp_config config{{3, 5, 2, 5, 3}, true, output_activation::tanh};
        const mlp_model model = make_mlp(config, gen.next_u64());
        const auto batch = oracles::random_cloud(10, 3, gen);
        if (min_relu_margin(model, batch.data) < 1e-5) continue;
        REQUIRE(check_against_fd(model, batch, 0.5) < 1e-3);
        ++checked;
    }
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
    mlp_config config{{3, 2, 3}, false, output_activation::identity};
    mlp_model model = make_mlp(config, 8);
    const mlp_model before = model;
    adam_state state = make_adam_state(model);
    adam_step(model, zeros_like(model), state, 0.1, 0.0);
    for (int l = 0; l < model.n_layers(); ++l)
        REQUIRE(model.weights[static_cast<std::size_t>(l)] ==
                before.weights[static_cast<std::size_t>(l)]);
}

TEST_CASE("adam: first step with constant gradient has magnitude ~lr") {
    Eigen::MatrixXd param(1, 1), grad(1, 1), m1(1, 1), m2(1, 1);
    param << 0.0;
    grad << 1.0;
    m1.setZero();
    m2.setZero();
    adam_update(param, grad, m1, m2, 1, 0.1, 0.0);
    REQUIRE(param(0, 0) == Catch::Approx(-0.1).epsilon(1e-6));
}

TEST_CASE("adam: pure weight decay shrinks weights geometrically") {
    Eigen::MatrixXd param(1, 1), grad(1, 1), m1(1, 1), m2(1, 1);
    param << 2.0;
    grad.setZero();
    m1.setZero();
    m2.setZero();
    adam_update(param, grad, m1, m2, 1, 0.1, 0.1);
    REQUIRE(param(0, 0) == Catch::Approx(2.0 - 0.1 * 0.1 * 2.0).margin(1e-12));
}

TEST_CASE("train: max_epochs = 0 returns the initial model and no history") {
    mlp_config config{{4, 3, 2, 3, 4}, false, output_activation::identity};
    const mlp_model model = make_mlp(config, 3);
    rng gen(14);
    const auto data = oracles::random_cloud(20, 4, gen);
    train_config tc;
    tc.max_epochs = 0;
    tc.batch_size = 5;
    const auto result = train(model, data, data, tc);
    REQUIRE(result.history.empty());
    REQUIRE(result.best_epoch == -1);
    REQUIRE(result.model.weights[0] == model.weights[0]);
}

TEST_CASE("train: plain autoencoder improves reconstruction on a learnable set") {
    mlp_config config{{3, 8, 2, 8, 3}, false, output_activation::identity};
    const mlp_model model = make_mlp(config, 21);

    // Points near a 2-D plane embedded in 3-D: reconstructible through a
    // 2-wide bottleneck.
    rng gen(22);
    point_cloud data;
    data.data.resize(60, 3);
    for (int i = 0; i < 60; ++i) {
        const double u = gen.uniform(-1, 1);
        const double v = gen.uniform(-1, 1);
        data.data.row(i) << u, v, 0.5 * u - 0.25 * v;
    }
    const auto parts = split(data, {0.8, 0.2, 0.0}, 5);

    train_config tc;
    tc.batch_size = 8;
    tc.max_epochs = 60;
    tc.learning_rate = 5e-3;
    tc.seed = 99;
    const auto result = train(model, parts.train, parts.validation, tc);
    REQUIRE(!result.history.empty());
    REQUIRE(result.history.back().train_recon < result.history.front().train_recon);
    REQUIRE(result.epochs_run <= tc.max_epochs);

    // The reported model must attain the smallest recorded validation loss.
    double min_val = std::numeric_limits<double>::infinity();
    for (const auto& e : result.history) min_val = std::min(min_val, e.val_total);
    REQUIRE(result.best_val_loss == min_val);
    const auto revalidated = evaluate_loss(result.model, parts.validation, 0.0);
    REQUIRE(revalidated.total == Catch::Approx(min_val).margin(1e-12));
}

TEST_CASE("train: identical seeds give bit-identical histories") {
    mlp_config config{{4, 6, 2, 6, 4}, true, output_activation::identity};
    rng gen(31);
    const auto data = oracles::random_cloud(40, 4, gen);
    const auto parts = split(data, {0.75, 0.25, 0.0}, 7);

    train_config tc;
    tc.batch_size = 6;
    tc.max_epochs = 8;
    tc.lambda = 0.7;
    tc.seed = 1234;

    const auto a = train(make_mlp(config, 5), parts.train, parts.validation, tc);
    const auto b = train(make_mlp(config, 5), parts.train, parts.validation, tc);
    REQUIRE(a.history.size() == b.history.size());
    for (std::size_t e = 0; e < a.history.size(); ++e) {
        REQUIRE(a.history[e].train_total == b.history[e].train_total);
        REQUIRE(a.history[e].val_total == b.history[e].val_total);
        REQUIRE(a.history[e].train_topo == b.history[e].train_topo);
    }
    REQUIRE(a.model.weights[0] == b.model.weights[0]);
}

TEST_CASE("train: early stopping never exceeds max_epochs and respects patience") {
    mlp_config config{{3, 4, 2, 4, 3}, false, output_activation::identity};
    rng gen(41);
    const auto data = oracles::random_cloud(30, 3, gen);
    const auto parts = split(data, {0.7, 0.3, 0.0}, 2);

    train_config tc;
    tc.batch_size = 4;
    tc.max_epochs = 100;
    tc.patience = 3;
    tc.learning_rate = 0.05;  // aggressive on purpose, to trigger stalls
    const auto result = train(make_mlp(config, 6), parts.train, parts.validation, tc);
    REQUIRE(result.epochs_run <= 100);
    REQUIRE(result.best_epoch < result.epochs_run);
}

TEST_CASE("train rejects bad configurations") {
    mlp_config config{{3, 2, 3}, false, output_activation::identity};
    const mlp_model model = make_mlp(config, 1);
    rng gen(51);
    const auto data = oracles::random_cloud(10, 3, gen);
    point_cloud empty;
    empty.data.resize(0, 3);

    train_config tc;
    tc.batch_size = 1;
    REQUIRE_THROWS_AS(train(model, data, data, tc), validation_error);
    tc.batch_size = 4;
    REQUIRE_THROWS_AS(train(model, data, empty, tc), validation_error);
    tc.batch_size = 20;
    REQUIRE_THROWS_AS(train(model, data, data, tc), validation_error);
}

TEST_CASE("checkpoint round-trip is bit-exact and files are byte-identical") {
    mlp_config config{{4, 6, 2, 6, 4}, true, output_activation::tanh};
    rng gen(61);
    const auto data = oracles::random_cloud(24, 4, gen);
    const auto parts = split(data, {0.75, 0.25, 0.0}, 3);

    train_config tc;
    tc.batch_size = 6;
    tc.max_epochs = 3;
    tc.lambda = 0.5;
    const auto result = train(make_mlp(config, 7), parts.train, parts.validation, tc);

    const auto dir = std::filesystem::temp_directory_path() / "topoae_tests";
    std::filesystem::create_directories(dir);
    const auto path_a = dir / "model_a.ckpt";
    const auto path_b = dir / "model_b.ckpt";

    const checkpoint original{result.model, result.optimizer, tc};
    save_checkpoint(path_a, original);
    const checkpoint loaded = load_checkpoint(path_a);

    REQUIRE(loaded.model.config.layer_sizes == original.model.config.layer_sizes);
    REQUIRE(loaded.model.config.out_act == original.model.config.out_act);
    for (int l = 0; l < original.model.n_layers(); ++l) {
        const auto li = static_cast<std::size_t>(l);
        REQUIRE(loaded.model.weights[li] == original.model.weights[li]);
        REQUIRE(loaded.model.biases[li] == original.model.biases[li]);
        if (original.model.layer_has_norm(l)) {
            REQUIRE(loaded.model.batchnorm[li].running_mean ==
                    original.model.batchnorm[li].running_mean);
            REQUIRE(loaded.model.batchnorm[li].running_var ==
                    original.model.batchnorm[li].running_var);
        }
    }
    REQUIRE(loaded.optimizer.step == original.optimizer.step);
    REQUIRE(loaded.optimizer.moment1.weights[0] == original.optimizer.moment1.weights[0]);
    REQUIRE(loaded.config.seed == original.config.seed);
    REQUIRE(loaded.config.lambda == original.config.lambda);

    save_checkpoint(path_b, loaded);
    std::ifstream fa(path_a, std::ios::binary), fb(path_b, std::ios::binary);
    const std::string bytes_a((std::istreambuf_iterator<char>(fa)), {});
    const std::string bytes_b((std::istreambuf_iterator<char>(fb)), {});
    REQUIRE(bytes_a == bytes_b);
}

TEST_CASE("corrupt checkpoints fail with parse errors") {
    const auto dir = std::filesystem::temp_directory_path() / "topoae_tests";
    std::filesystem::create_directories(dir);
    const auto path = dir / "corrupt.ckpt";
    std::ofstream(path, std::ios::binary) << "NOPE";
    REQUIRE_THROWS_AS(load_checkpoint(path), parse_error);

    std::ofstream(path, std::ios::binary) << "TA";
    REQUIRE_THROWS_AS(load_checkpoint(path), parse_error);
}
