// Command-line driver: data generation, training, evaluation and the
// subsampling-stability experiments. Every command is deterministic given its
// flags; outputs land in --out together with a sha256 manifest.

#include <CLI11.hpp>

#include <array>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "topoae/checkpoint.hpp"
#include "topoae/datasets.hpp"
#include "topoae/metrics.hpp"
#include "topoae/nn.hpp"
#include "topoae/run_io.hpp"
#include "topoae/stability.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitInvariant = 4;

fs::path prepare_out_dir(const std::string& out) {
    fs::path dir(out);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw topoae::io_error("cannot create output directory " + out);
    return dir;
}

void write_runconfig(const fs::path& dir, CLI::App& app) {
    std::ofstream out(dir / "runconfig.toml");
    if (!out) throw topoae::io_error("cannot write runconfig.toml");
    out << app.config_to_str(true, true);
}

topoae::point_cloud load_data(const std::string& path, const std::string& format) {
    std::string kind = format;
    if (kind == "auto") kind = fs::path(path).extension() == ".idx" ? "idx" : "csv";
    if (kind == "idx") return topoae::load_idx(path);
    return topoae::read_csv(path);
}

std::array<double, 3> to_fractions(const std::vector<double>& values) {
    if (values.size() != 3)
        throw topoae::validation_error("--split needs exactly three fractions");
    return {values[0], values[1], values[2]};
}

struct generate_options {
    std::string out;
    std::uint64_t seed = 0;
    int n_per_inner = 50;
    int ambient_dim = 101;
    double inner_radius = 5.0;
    double shift_scale = 10.0;
    int gaussian_n = 100;
    int gaussian_dim = 2;
};

void run_generate_spheres(const generate_options& opt, CLI::App& app) {
    const fs::path dir = prepare_out_dir(opt.out);
    const auto cloud = topoae::generate_spheres(opt.n_per_inner, opt.seed, opt.ambient_dim,
                                                opt.inner_radius, opt.shift_scale);
    topoae::write_csv(dir / "spheres.csv", cloud);

    json provenance{{"dataset", "spheres"},
                    {"n_per_inner", opt.n_per_inner},
                    {"seed", opt.seed},
                    {"ambient_dim", opt.ambient_dim},
                    {"inner_radius", opt.inner_radius},
                    {"shift_scale", opt.shift_scale},
                    {"format_version", 1}};
    std::ofstream(dir / "spheres.provenance.json") << provenance.dump(2) << "\n";

    write_runconfig(dir, app);
    topoae::write_manifest(dir, {"spheres.csv", "spheres.provenance.json", "runconfig.toml"});
}

void run_generate_gaussian(const generate_options& opt, CLI::App& app) {
    const fs::path dir = prepare_out_dir(opt.out);
    topoae::rng gen(opt.seed);
    topoae::point_cloud cloud;
    cloud.data.resize(opt.gaussian_n, opt.gaussian_dim);
    for (int i = 0; i < opt.gaussian_n; ++i)
        for (int j = 0; j < opt.gaussian_dim; ++j) cloud.data(i, j) = gen.normal();
    topoae::write_csv(dir / "gaussian.csv", cloud);

    json provenance{{"dataset", "gaussian"},
                    {"n", opt.gaussian_n},
                    {"dim", opt.gaussian_dim},
                    {"seed", opt.seed},
                    {"format_version", 1}};
    std::ofstream(dir / "gaussian.provenance.json") << provenance.dump(2) << "\n";

    write_runconfig(dir, app);
    topoae::write_manifest(dir, {"gaussian.csv", "gaussian.provenance.json", "runconfig.toml"});
}

struct train_options {
    std::string data;
    std::string format = "auto";
    std::string out;
    std::vector<int> layers;
    bool no_batchnorm = false;
    std::string out_act = "identity";
    std::vector<double> split{0.765, 0.135, 0.10};
    std::uint64_t split_seed = 13;
    topoae::train_config config;
};

void run_train(const train_options& opt, CLI::App& app) {
    const fs::path dir = prepare_out_dir(opt.out);
    const auto cloud = load_data(opt.data, opt.format);
    const auto parts = topoae::split(cloud, to_fractions(opt.split), opt.split_seed);

    topoae::mlp_config arch;
    arch.layer_sizes = opt.layers;
    arch.use_batchnorm = !opt.no_batchnorm;
    if (opt.out_act == "identity")
        arch.out_act = topoae::output_activation::identity;
    else if (opt.out_act == "tanh")
        arch.out_act = topoae::output_activation::tanh;
    else
        throw topoae::validation_error("--out-act must be identity or tanh");
    topoae::validate(arch);
    if (arch.layer_sizes.front() != cloud.dim() || arch.layer_sizes.back() != cloud.dim())
        throw topoae::validation_error("--layers endpoints must equal the data width " +
                                       std::to_string(cloud.dim()));

    const auto model = topoae::make_mlp(arch, topoae::derive_seed(opt.config.seed, 1000003));
    const auto result = topoae::train(model, parts.train, parts.validation, opt.config);

    topoae::save_checkpoint(dir / "checkpoint.ckpt",
                            topoae::checkpoint{result.model, result.optimizer, opt.config});
    topoae::write_history_csv(dir / "history.csv", result.history);
    write_runconfig(dir, app);
    topoae::write_manifest(dir, {"checkpoint.ckpt", "history.csv", "runconfig.toml"});

    std::cout << "epochs_run=" << result.epochs_run << " best_epoch=" << result.best_epoch
              << " best_val_loss=" << topoae::format_double(result.best_val_loss) << "\n";
}

struct evaluate_options {
    std::string checkpoint;
    std::string data;
    std::string format = "auto";
    std::string out;
    std::vector<double> sigmas{0.001, 0.01, 0.1, 1.0, 10.0};
    int k = 15;
    std::string use_split = "none";
    std::vector<double> split{0.765, 0.135, 0.10};
    std::uint64_t split_seed = 13;
};

void run_evaluate(const evaluate_options& opt, CLI::App& app) {
    const fs::path dir = prepare_out_dir(opt.out);
    const auto ck = topoae::load_checkpoint(opt.checkpoint);
    auto cloud = load_data(opt.data, opt.format);

    if (opt.use_split != "none") {
        const auto parts = topoae::split(cloud, to_fractions(opt.split), opt.split_seed);
        if (opt.use_split == "train")
            cloud = parts.train;
        else if (opt.use_split == "validation")
            cloud = parts.validation;
        else if (opt.use_split == "test")
            cloud = parts.test;
        else
            throw topoae::validation_error("--use-split must be none|train|validation|test");
    }

    const auto cache = topoae::forward(ck.model, cloud.data, topoae::run_mode::eval);
    topoae::point_cloud latent;
    latent.data = cache.latent;
    latent.labels = cloud.labels;

    const auto dist_x = topoae::pairwise_distances(cloud);
    const auto dist_z = topoae::pairwise_distances(latent);
    auto report = topoae::compute_metrics(dist_x, dist_z, opt.sigmas, opt.k);
    report.data_mse = (cache.reconstruction - cloud.data).squaredNorm() /
                      (static_cast<double>(cloud.size()) * cloud.dim());

    topoae::write_metrics_report(dir / "metrics.json", report);
    topoae::write_embedding_csv(dir / "embedding.csv", latent);
    write_runconfig(dir, app);
    topoae::write_manifest(dir, {"metrics.json", "embedding.csv", "runconfig.toml"});
}

struct stability_options {
    std::string out;
    std::uint64_t seed = 1;
    int n = 100;
    std::vector<int> dims{2, 5, 10};
    std::vector<int> m_list{10, 20, 30, 40, 50, 60, 70, 80, 90};
    int trials = 50;
    std::string data;
    std::string latent;
    int subsample_size = 75;
};

void run_stability_subsample(const stability_options& opt, CLI::App& app) {
    const fs::path dir = prepare_out_dir(opt.out);
    for (int m : opt.m_list)
        if (m < 2 || m > opt.n)
            throw topoae::validation_error("--m-list entries must lie in [2, n]");

    std::ofstream csv(dir / "hausdorff_convergence.csv");
    if (!csv) throw topoae::io_error("cannot write hausdorff_convergence.csv");
    csv << "n,d,m,trial,hausdorff,bottleneck,bound\n";
    csv.close();

    for (int d : opt.dims) {
        topoae::rng gen(topoae::derive_seed(opt.seed, static_cast<std::uint64_t>(d)));
        topoae::point_cloud cloud;
        cloud.data.resize(opt.n, d);
        for (int i = 0; i < opt.n; ++i)
            for (int j = 0; j < d; ++j) cloud.data(i, j) = gen.normal();

        const auto emp = topoae::empirical_distances(topoae::pairwise_distances(cloud));
        for (int m : opt.m_list) {
            const auto trials = topoae::check_subsample_stability(
                cloud, m, opt.trials, topoae::derive_seed(opt.seed, 1000u * d + m));
            const auto bounds = topoae::expected_hausdorff_bound(emp, opt.n, m);
            topoae::write_subsample_trials_csv(dir / "hausdorff_convergence.csv", trials, d,
                                               bounds.bound_m_n_minus_m);
        }
    }
    write_runconfig(dir, app);
    topoae::write_manifest(dir, {"hausdorff_convergence.csv", "runconfig.toml"});
}

void run_stability_latent(const stability_options& opt, CLI::App& app) {
    const fs::path dir = prepare_out_dir(opt.out);
    const auto data = topoae::read_csv(opt.data);
    const auto latent = topoae::read_csv(opt.latent);
    const auto table =
        topoae::latent_topo_distances(data, latent, opt.subsample_size, opt.trials, opt.seed);

    std::ofstream csv(dir / "topo_distances.csv");
    if (!csv) throw topoae::io_error("cannot write topo_distances.csv");
    csv << "row,w1,w2,w_inf\n";
    for (std::size_t t = 0; t < table.trials.size(); ++t)
        csv << t << ',' << topoae::format_double(table.trials[t].w1) << ','
            << topoae::format_double(table.trials[t].w2) << ','
            << topoae::format_double(table.trials[t].w_inf) << "\n";
    csv << "mean," << topoae::format_double(table.mean.w1) << ','
        << topoae::format_double(table.mean.w2) << ',' << topoae::format_double(table.mean.w_inf)
        << "\n";
    csv << "std," << topoae::format_double(table.stddev.w1) << ','
        << topoae::format_double(table.stddev.w2) << ','
        << topoae::format_double(table.stddev.w_inf) << "\n";
    csv.close();

    write_runconfig(dir, app);
    topoae::write_manifest(dir, {"topo_distances.csv", "runconfig.toml"});
}

struct report_options {
    std::vector<std::string> inputs;
    std::vector<std::string> names;
};

void run_report(const report_options& opt) {
    if (!opt.names.empty() && opt.names.size() != opt.inputs.size())
        throw topoae::validation_error("--names must match --inputs in length");

    std::vector<topoae::metrics_report> reports;
    for (const auto& path : opt.inputs) reports.push_back(topoae::read_metrics_report(path));

    std::printf("%-16s", "model");
    for (double sigma : reports.front().sigma_grid) {
        char header[32];
        std::snprintf(header, sizeof(header), "kl_%g", sigma);
        std::printf("%12s", header);
    }
    std::printf("%12s%12s%12s%12s%12s\n", "trust", "cont", "mrre", "l_rmse", "data_mse");

    for (std::size_t i = 0; i < reports.size(); ++i) {
        const auto& r = reports[i];
        const std::string name =
            i < opt.names.size() ? opt.names[i] : fs::path(opt.inputs[i]).parent_path().filename().string();
        std::printf("%-16s", name.c_str());
        for (double sigma : reports.front().sigma_grid) {
            const auto it = r.kl.find(sigma);
            if (it == r.kl.end())
                std::printf("%12s", "-");
            else
                std::printf("%12.5g", it->second);
        }
        std::printf("%12.5g%12.5g%12.5g%12.5g", r.trust, r.cont, r.mrre, r.l_rmse);
        if (r.data_mse)
            std::printf("%12.5g\n", *r.data_mse);
        else
            std::printf("%12s\n", "-");
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Topology-preserving autoencoder toolkit"};
    app.set_config("--config", "", "Read options from a TOML file; flags override");
    app.require_subcommand(1);

    generate_options gen_opt;
    auto* generate = app.add_subcommand("generate", "Generate synthetic data sets");
    generate->require_subcommand(1);
    auto* spheres = generate->add_subcommand("spheres", "Nested high-dimensional spheres");
    spheres->add_option("--n-per-inner", gen_opt.n_per_inner, "Points per inner sphere");
    spheres->add_option("--seed", gen_opt.seed, "Master seed");
    spheres->add_option("--ambient-dim", gen_opt.ambient_dim, "Ambient dimension");
    spheres->add_option("--inner-radius", gen_opt.inner_radius, "Inner sphere radius");
    spheres->add_option("--shift-scale", gen_opt.shift_scale, "Shift scale (sd = scale/sqrt(d))");
    spheres->add_option("--out", gen_opt.out, "Output directory")->required();
    spheres->callback([&] { run_generate_spheres(gen_opt, app); });

    auto* gaussian = generate->add_subcommand("gaussian", "Standard normal cloud");
    gaussian->add_option("--n", gen_opt.gaussian_n, "Number of points");
    gaussian->add_option("--dim", gen_opt.gaussian_dim, "Dimension");
    gaussian->add_option("--seed", gen_opt.seed, "Master seed");
    gaussian->add_option("--out", gen_opt.out, "Output directory")->required();
    gaussian->callback([&] { run_generate_gaussian(gen_opt, app); });

    train_options train_opt;
    auto* train_cmd = app.add_subcommand("train", "Train an autoencoder (lambda > 0 adds the topological term)");
    train_cmd->add_option("--data", train_opt.data, "Input point cloud (csv or idx)")->required();
    train_cmd->add_option("--format", train_opt.format, "auto|csv|idx");
    train_cmd->add_option("--out", train_opt.out, "Output directory")->required();
    train_cmd->add_option("--layers", train_opt.layers, "Layer widths incl. input/bottleneck/output")
        ->required()
        ->delimiter(',');
    train_cmd->add_flag("--no-batchnorm", train_opt.no_batchnorm, "Disable batch normalization");
    train_cmd->add_option("--out-act", train_opt.out_act, "identity|tanh");
    train_cmd->add_option("--split", train_opt.split, "train,validation,test fractions")->delimiter(',');
    train_cmd->add_option("--split-seed", train_opt.split_seed, "Seed of the split permutation");
    train_cmd->add_option("--lambda", train_opt.config.lambda, "Topological regularization strength");
    train_cmd->add_option("--learning-rate", train_opt.config.learning_rate, "Adam learning rate");
    train_cmd->add_option("--batch-size", train_opt.config.batch_size, "Mini-batch size");
    train_cmd->add_option("--max-epochs", train_opt.config.max_epochs, "Epoch budget");
    train_cmd->add_option("--patience", train_opt.config.patience, "Early-stopping patience");
    train_cmd->add_option("--weight-decay", train_opt.config.weight_decay, "Decoupled weight decay");
    train_cmd->add_option("--seed", train_opt.config.seed, "Training seed (shuffling + init)");
    train_cmd->callback([&] { run_train(train_opt, app); });

    evaluate_options eval_opt;
    auto* eval_cmd = app.add_subcommand("evaluate", "Embed a data set and compute quality metrics");
    eval_cmd->add_option("--checkpoint", eval_opt.checkpoint, "Trained checkpoint")->required();
    eval_cmd->add_option("--data", eval_opt.data, "Input point cloud (csv or idx)")->required();
    eval_cmd->add_option("--format", eval_opt.format, "auto|csv|idx");
    eval_cmd->add_option("--out", eval_opt.out, "Output directory")->required();
    eval_cmd->add_option("--sigmas", eval_opt.sigmas, "Length scales for the KL measure")->delimiter(',');
    eval_cmd->add_option("--k", eval_opt.k, "Neighborhood size for rank measures");
    eval_cmd->add_option("--use-split", eval_opt.use_split, "none|train|validation|test");
    eval_cmd->add_option("--split", eval_opt.split, "Fractions used at training time")->delimiter(',');
    eval_cmd->add_option("--split-seed", eval_opt.split_seed, "Seed used at training time");
    eval_cmd->callback([&] { run_evaluate(eval_opt, app); });

    stability_options stab_opt;
    auto* stability = app.add_subcommand("stability", "Subsampling stability experiments");
    stability->require_subcommand(1);
    auto* subsample_cmd = stability->add_subcommand(
        "subsample", "Hausdorff/bottleneck subsampling sweep on Gaussian clouds");
    subsample_cmd->add_option("--n", stab_opt.n, "Cloud size");
    subsample_cmd->add_option("--dims", stab_opt.dims, "Ambient dimensions")->delimiter(',');
    subsample_cmd->add_option("--m-list", stab_opt.m_list, "Subsample sizes")->delimiter(',');
    subsample_cmd->add_option("--trials", stab_opt.trials, "Trials per (d, m)");
    subsample_cmd->add_option("--seed", stab_opt.seed, "Master seed");
    subsample_cmd->add_option("--out", stab_opt.out, "Output directory")->required();
    subsample_cmd->callback([&] { run_stability_subsample(stab_opt, app); });

    auto* latent = stability->add_subcommand(
        "latent", "Topological distances between a data set and its embedding");
    latent->add_option("--data", stab_opt.data, "Data-space point cloud csv")->required();
    latent->add_option("--latent", stab_opt.latent, "Latent point cloud csv")->required();
    latent->add_option("--subsample-size", stab_opt.subsample_size, "Points per trial");
    latent->add_option("--trials", stab_opt.trials, "Number of trials");
    latent->add_option("--seed", stab_opt.seed, "Master seed");
    latent->add_option("--out", stab_opt.out, "Output directory")->required();
    latent->callback([&] { run_stability_latent(stab_opt, app); });

    report_options report_opt;
    auto* report_cmd = app.add_subcommand("report", "Print a comparison table of metrics files");
    report_cmd->add_option("--inputs", report_opt.inputs, "metrics.json files")
        ->required()
        ->delimiter(',');
    report_cmd->add_option("--names", report_opt.names, "Row names (defaults to directory names)")
        ->delimiter(',');
    report_cmd->callback([&] { run_report(report_opt); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    } catch (const topoae::validation_error& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const topoae::parse_error& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return kExitIo;
    } catch (const topoae::io_error& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return kExitIo;
    } catch (const topoae::invariant_violation& e) {
        std::cerr << "invariant violation: " << e.what() << "\n";
        return kExitInvariant;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
