#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "topoae/datasets.hpp"
#include "topoae/run_io.hpp"

namespace fs = std::filesystem;

namespace {

const char* cli_path() { return TOPOAE_CLI_PATH; }

int run_cli(const std::string& args) {
    const std::string command = std::string(cli_path()) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(command.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path work_dir() {
    const auto dir = fs::temp_directory_path() / "topoae_cli_tests";
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Rows of history.csv (skipping the header).
std::vector<std::string> history_rows(const fs::path& path) {
    std::ifstream in(path);
    std::vector<std::string> rows;
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) rows.push_back(line);
    return rows;
}

}  // namespace

TEST_CASE("generate: identical invocations produce byte-identical outputs") {
    const auto dir = work_dir() / "gen";
    fs::remove_all(dir);
    REQUIRE(run_cli("generate spheres --n-per-inner 5 --seed 7 --out " + dir.string()) == 0);
    const std::string manifest = slurp(dir / "manifest.txt");
    const std::string csv = slurp(dir / "spheres.csv");

    REQUIRE(run_cli("generate spheres --n-per-inner 5 --seed 7 --out " + dir.string()) == 0);
    REQUIRE(slurp(dir / "manifest.txt") == manifest);
    REQUIRE(slurp(dir / "spheres.csv") == csv);

    const auto cloud = topoae::read_csv(dir / "spheres.csv");
    REQUIRE(cloud.size() == 100);
    REQUIRE(cloud.dim() == 101);
    REQUIRE(cloud.has_labels());
}

TEST_CASE("generate: invalid flag value exits with the config code") {
    const auto dir = work_dir() / "gen_bad";
    REQUIRE(run_cli("generate spheres --n-per-inner 0 --out " + dir.string()) == 2);
    REQUIRE(run_cli("generate spheres --bogus-flag 1 --out " + dir.string()) == 2);
}

TEST_CASE("train: lambda switches the topological term on, histories stay seeded") {
    const auto base = work_dir() / "train";
    fs::remove_all(base);
    REQUIRE(run_cli("generate gaussian --n 60 --dim 3 --seed 9 --out " + (base / "data").string()) == 0);
    const std::string data = (base / "data" / "gaussian.csv").string();
    const std::string common = " --data " + data +
                               " --layers 3,8,2,8,3 --batch-size 8 --max-epochs 4 --seed 5"
                               " --split 0.7,0.3,0.0 --no-batchnorm";

    REQUIRE(run_cli("train --lambda 0 --out " + (base / "ae").string() + common) == 0);
    REQUIRE(run_cli("train --lambda 0 --out " + (base / "ae2").string() + common) == 0);
    REQUIRE(run_cli("train --lambda 1 --out " + (base / "topo").string() + common) == 0);

    // Same seed, lambda = 0 twice: identical histories.
    REQUIRE(slurp(base / "ae" / "history.csv") == slurp(base / "ae2" / "history.csv"));

    // The topological run records a nonzero topo loss from the start, and its
    // history deviates from the plain run.
    const auto plain = history_rows(base / "ae" / "history.csv");
    const auto topo = history_rows(base / "topo" / "history.csv");
    REQUIRE(!topo.empty());
    REQUIRE(plain != topo);
    const auto first_row = topo.front();
    const auto second_comma = first_row.find(',', first_row.find(',') + 1);
    const double first_topo = std::stod(first_row.substr(second_comma + 1));
    REQUIRE(first_topo > 0.0);
}

TEST_CASE("train: patience exhaustion stops before max_epochs") {
    const auto base = work_dir() / "patience";
    fs::remove_all(base);
    REQUIRE(run_cli("generate gaussian --n 50 --dim 3 --seed 2 --out " + (base / "data").string()) == 0);
    REQUIRE(run_cli("train --data " + (base / "data" / "gaussian.csv").string() +
                    " --layers 3,4,2,4,3 --batch-size 8 --max-epochs 200 --patience 3"
                    " --learning-rate 0.05 --lambda 0 --seed 3 --split 0.7,0.3,0.0 --out " +
                    (base / "run").string()) == 0);
    REQUIRE(history_rows(base / "run" / "history.csv").size() < 200);
}

TEST_CASE("train: missing data path exits with the i/o code") {
    REQUIRE(run_cli("train --data /nonexistent.csv --layers 3,2,3 --out " +
                    (work_dir() / "nope").string()) == 3);
}

TEST_CASE("train accepts idx input") {
    const auto base = work_dir() / "idx";
    fs::remove_all(base);
    fs::create_directories(base);

    topoae::rng gen(4);
    topoae::point_cloud images;
    images.data.resize(40, 9);
    for (int i = 0; i < 40; ++i)
        for (int j = 0; j < 9; ++j)
            images.data(i, j) = static_cast<double>(gen.uniform_int(0, 255)) / 127.5 - 1.0;
    topoae::save_idx(base / "images.idx", images, {40, 3, 3});

    REQUIRE(run_cli("train --data " + (base / "images.idx").string() +
                    " --layers 9,6,2,6,9 --out-act tanh --batch-size 8 --max-epochs 2"
                    " --lambda 0.5 --split 0.7,0.3,0.0 --out " +
                    (base / "run").string()) == 0);
}

TEST_CASE("evaluate: sigma grid size carries into the report; corrupt checkpoint fails") {
    const auto base = work_dir() / "eval";
    fs::remove_all(base);
    REQUIRE(run_cli("generate gaussian --n 60 --dim 3 --seed 11 --out " + (base / "data").string()) == 0);
    const std::string data = (base / "data" / "gaussian.csv").string();
    REQUIRE(run_cli("train --data " + data +
                    " --layers 3,6,2,6,3 --batch-size 8 --max-epochs 3 --lambda 0"
                    " --split 0.6,0.2,0.2 --out " +
                    (base / "run").string()) == 0);

    REQUIRE(run_cli("evaluate --checkpoint " + (base / "run" / "checkpoint.ckpt").string() +
                    " --data " + data +
                    " --use-split test --split 0.6,0.2,0.2 --k 3"
                    " --sigmas 0.001,0.01,0.1,1,10 --out " +
                    (base / "metrics").string()) == 0);

    const auto report = topoae::read_metrics_report(base / "metrics" / "metrics.json");
    REQUIRE(report.kl.size() == 5);
    REQUIRE(report.k_neighbors == 3);
    REQUIRE(report.data_mse.has_value());

    const auto embedding = topoae::read_csv(base / "metrics" / "embedding.csv");
    REQUIRE(embedding.dim() == 2);

    REQUIRE(run_cli("evaluate --checkpoint " + data + " --data " + data + " --out " +
                    (base / "bad").string()) == 3);
}

TEST_CASE("evaluate on its own training data: near-perfect rank metrics on an easy set") {
    // A flat 2-D structure embedded in 3-D is learnable through the 2-wide
    // bottleneck, so neighborhood preservation should be close to perfect.
    const auto base = work_dir() / "easy";
    fs::remove_all(base);
    fs::create_directories(base / "data");

    topoae::rng gen(21);
    topoae::point_cloud plane;
    plane.data.resize(80, 3);
    for (int i = 0; i < 80; ++i) {
        const double u = gen.uniform(-1, 1);
        const double v = gen.uniform(-1, 1);
        plane.data.row(i) << u, v, 0.3 * u + 0.1 * v;
    }
    topoae::write_csv(base / "data" / "plane.csv", plane);

    REQUIRE(run_cli("train --data " + (base / "data" / "plane.csv").string() +
                    " --layers 3,16,2,16,3 --no-batchnorm --batch-size 8 --max-epochs 200"
                    " --patience 30 --learning-rate 0.005 --lambda 0 --seed 8"
                    " --split 0.8,0.2,0.0 --out " +
                    (base / "run").string()) == 0);
    REQUIRE(run_cli("evaluate --checkpoint " + (base / "run" / "checkpoint.ckpt").string() +
                    " --data " + (base / "data" / "plane.csv").string() +
                    " --use-split train --split 0.8,0.2,0.0 --k 5 --out " +
                    (base / "metrics").string()) == 0);
    const auto report = topoae::read_metrics_report(base / "metrics" / "metrics.json");
    REQUIRE(report.trust > 0.9);
    REQUIRE(report.cont > 0.9);
}

TEST_CASE("stability: subsample sweep runs clean; bad m exits with the config code") {
    const auto base = work_dir() / "stab";
    fs::remove_all(base);
    REQUIRE(run_cli("stability subsample --n 40 --dims 2,5 --m-list 10,20,30 --trials 5 --seed 3"
                    " --out " +
                    (base / "ok").string()) == 0);
    const std::string manifest = slurp(base / "ok" / "manifest.txt");
    REQUIRE(run_cli("stability subsample --n 40 --dims 2,5 --m-list 10,20,30 --trials 5 --seed 3"
                    " --out " +
                    (base / "ok").string()) == 0);
    REQUIRE(slurp(base / "ok" / "manifest.txt") == manifest);

    REQUIRE(run_cli("stability subsample --n 40 --m-list 50 --out " + (base / "bad").string()) == 2);
}

TEST_CASE("stability latent: identical clouds give zero distances") {
    const auto base = work_dir() / "latstab";
    fs::remove_all(base);
    REQUIRE(run_cli("generate gaussian --n 50 --dim 2 --seed 6 --out " + (base / "data").string()) == 0);
    const std::string csv = (base / "data" / "gaussian.csv").string();
    REQUIRE(run_cli("stability latent --data " + csv + " --latent " + csv +
                    " --subsample-size 20 --trials 3 --seed 4 --out " +
                    (base / "run").string()) == 0);
    const std::string table = slurp(base / "run" / "topo_distances.csv");
    REQUIRE(table.find("mean,0,0,0") != std::string::npos);
}

TEST_CASE("report renders a comparison table from metrics files") {
    const auto base = work_dir() / "report";
    fs::remove_all(base);
    fs::create_directories(base / "ae");
    fs::create_directories(base / "topo");

    topoae::metrics_report r;
    r.k_neighbors = 5;
    r.sigma_grid = {0.01, 0.1};
    r.kl[0.01] = 0.4;
    r.kl[0.1] = 0.7;
    r.trust = 0.6;
    r.cont = 0.61;
    r.mrre = 0.3;
    r.l_rmse = 13.0;
    r.data_mse = 0.8;
    topoae::write_metrics_report(base / "ae" / "metrics.json", r);
    r.kl[0.1] = 0.3;
    topoae::write_metrics_report(base / "topo" / "metrics.json", r);

    const std::string out = (base / "table.txt").string();
    const std::string command = std::string(cli_path()) + " report --inputs " +
                                (base / "ae" / "metrics.json").string() + "," +
                                (base / "topo" / "metrics.json").string() + " --names ae,topoae > " +
                                out + " 2>&1";
    REQUIRE(std::system(command.c_str()) == 0);
    const std::string table = slurp(out);
    REQUIRE(table.find("kl_0.1") != std::string::npos);
    REQUIRE(table.find("ae") != std::string::npos);
    REQUIRE(table.find("topoae") != std::string::npos);
    REQUIRE(table.find("0.3") != std::string::npos);

    REQUIRE(run_cli("report --inputs /nonexistent.json") == 3);
}

TEST_CASE("the emitted runconfig reproduces the run") {
    const auto base = work_dir() / "replay";
    fs::remove_all(base);
    const std::string out = (base / "out").string();
    REQUIRE(run_cli("generate gaussian --n 33 --dim 3 --seed 17 --out " + out) == 0);
    const std::string manifest = slurp(base / "out" / "manifest.txt");
    const std::string saved = (base / "saved.toml").string();
    fs::copy_file(base / "out" / "runconfig.toml", saved);
    fs::remove_all(base / "out");

    REQUIRE(run_cli("--config " + saved + " generate gaussian") == 0);
    REQUIRE(slurp(base / "out" / "manifest.txt") == manifest);
}

TEST_CASE("config file feeds flags, command line overrides") {
    const auto base = work_dir() / "config";
    fs::remove_all(base);
    fs::create_directories(base);
    {
        std::ofstream cfg(base / "run.toml");
        cfg << "[generate.gaussian]\n"
            << "n = 25\n"
            << "dim = 4\n"
            << "seed = 5\n"
            << "out = \"" << (base / "out").string() << "\"\n";
    }
    REQUIRE(run_cli("--config " + (base / "run.toml").string() + " generate gaussian") == 0);
    REQUIRE(topoae::read_csv(base / "out" / "gaussian.csv").size() == 25);

    REQUIRE(run_cli("--config " + (base / "run.toml").string() + " generate gaussian --n 30") == 0);
    REQUIRE(topoae::read_csv(base / "out" / "gaussian.csv").size() == 30);
}
