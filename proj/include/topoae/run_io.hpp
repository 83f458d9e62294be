#pragma once

#include <openssl/evp.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "topoae/datasets.hpp"
#include "topoae/errors.hpp"
#include "topoae/metrics.hpp"
#include "topoae/nn.hpp"
#include "topoae/stability.hpp"

namespace topoae {

inline std::string format_double(double v) {
    char buffer[64];
    std::snprintf(buffer, sizeof(buffer), "%.17g", v);
    return buffer;
}

inline std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open " + path.string() + " for hashing");

    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (ctx == nullptr || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
        EVP_MD_CTX_free(ctx);
        throw io_error("sha256 init failed");
    }
    char buffer[1 << 16];
    while (in) {
        in.read(buffer, sizeof(buffer));
        if (in.gcount() > 0) EVP_DigestUpdate(ctx, buffer, static_cast<std::size_t>(in.gcount()));
    }
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int digest_len = 0;
    EVP_DigestFinal_ex(ctx, digest, &digest_len);
    EVP_MD_CTX_free(ctx);

    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < digest_len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

/// Writes manifest.txt into `dir`: one "sha256  filename" line per output,
/// sorted by filename. Rerunning a command with the same configuration must
/// reproduce this file byte for byte.
inline void write_manifest(const std::filesystem::path& dir, std::vector<std::string> files) {
    std::sort(files.begin(), files.end());
    std::ofstream out(dir / "manifest.txt");
    if (!out) throw io_error("cannot write manifest in " + dir.string());
    for (const auto& name : files) out << sha256_file(dir / name) << "  " << name << "\n";
}

inline void write_metrics_report(const std::filesystem::path& path, const metrics_report& report) {
    nlohmann::json doc;
    doc["k_neighbors"] = report.k_neighbors;
    doc["trust"] = report.trust;
    doc["cont"] = report.cont;
    doc["mrre"] = report.mrre;
    doc["l_rmse"] = report.l_rmse;
    if (report.data_mse) doc["data_mse"] = *report.data_mse;
    nlohmann::json kl = nlohmann::json::array();
    for (double sigma : report.sigma_grid)
        kl.push_back({{"sigma", sigma}, {"value", report.kl.at(sigma)}});
    doc["kl"] = kl;

    std::ofstream out(path);
    if (!out) throw io_error("cannot write " + path.string());
    out << doc.dump(2) << "\n";
}

inline metrics_report read_metrics_report(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open " + path.string());
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw parse_error(std::string("bad metrics file: ") + e.what(), 0);
    }
    metrics_report report;
    report.k_neighbors = doc.at("k_neighbors").get<int>();
    report.trust = doc.at("trust").get<double>();
    report.cont = doc.at("cont").get<double>();
    report.mrre = doc.at("mrre").get<double>();
    report.l_rmse = doc.at("l_rmse").get<double>();
    if (doc.contains("data_mse")) report.data_mse = doc.at("data_mse").get<double>();
    for (const auto& entry : doc.at("kl")) {
        const double sigma = entry.at("sigma").get<double>();
        report.sigma_grid.push_back(sigma);
        report.kl[sigma] = entry.at("value").get<double>();
    }
    return report;
}

inline void write_history_csv(const std::filesystem::path& path,
                              const std::vector<epoch_stats>& history) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot write " + path.string());
    out << "epoch,train_recon,train_topo,train_total,val_recon,val_topo,val_total\n";
    for (const auto& e : history)
        out << e.epoch << ',' << format_double(e.train_recon) << ',' << format_double(e.train_topo)
            << ',' << format_double(e.train_total) << ',' << format_double(e.val_recon) << ','
            << format_double(e.val_topo) << ',' << format_double(e.val_total) << "\n";
}

/// 2-D (or wider) latent coordinates plus optional labels for plotting.
inline void write_embedding_csv(const std::filesystem::path& path, const point_cloud& latent) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot write " + path.string());
    for (int j = 0; j < latent.dim(); ++j) out << (j ? "," : "") << "z" << j;
    if (latent.has_labels()) out << ",label";
    out << "\n";
    for (int i = 0; i < latent.size(); ++i) {
        for (int j = 0; j < latent.dim(); ++j)
            out << (j ? "," : "") << format_double(latent.data(i, j));
        if (latent.has_labels()) out << "," << latent.labels[static_cast<std::size_t>(i)];
        out << "\n";
    }
}

inline void write_subsample_trials_csv(const std::filesystem::path& path,
                                       const std::vector<subsample_trial>& trials, int dim,
                                       double bound) {
    std::ofstream out(path, std::ios::app);
    if (!out) throw io_error("cannot write " + path.string());
    for (const auto& t : trials)
        out << t.n << ',' << dim << ',' << t.m << ',' << t.trial << ','
            << format_double(t.hausdorff) << ',' << format_double(t.bottleneck) << ','
            << format_double(bound) << "\n";
}

}  // namespace topoae
