#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "topoae/geometry.hpp"
#include "topoae/rng.hpp"

namespace topoae {

/// n points uniform on the (d-1)-sphere of radius r: standard normal draws
/// rescaled to norm r (rotation invariance makes this exactly uniform).
inline point_cloud sample_sphere(int n, int d, double r, std::uint64_t seed) {
    if (n < 1 || d < 2 || r <= 0.0) throw validation_error("sample_sphere: invalid parameters");
    rng gen(seed);
    point_cloud cloud;
    cloud.data.resize(n, d);
    for (int i = 0; i < n; ++i) {
        double norm_sq;
        do {
            for (int j = 0; j < d; ++j) cloud.data(i, j) = gen.normal();
            norm_sq = cloud.data.row(i).squaredNorm();
        } while (norm_sq < 1e-24);
        cloud.data.row(i) *= r / std::sqrt(norm_sq);
    }
    return cloud;
}

/// The nested-spheres benchmark: ten (d-1)-spheres of radius `inner_radius`,
/// each translated by its own Gaussian vector with per-coordinate standard
/// deviation shift_scale/sqrt(d), enclosed by one sphere of radius
/// 5 * inner_radius carrying as many points as all inner spheres together.
/// Labels: 0-9 for the inner spheres, 10 for the enclosing one.
inline point_cloud generate_spheres(int n_per_inner, std::uint64_t seed, int ambient_dim = 101,
                                    double inner_radius = 5.0, double shift_scale = 10.0) {
    if (n_per_inner < 1) throw validation_error("generate_spheres: n_per_inner must be >= 1");
    const int n_inner_spheres = 10;
    const int total = 2 * n_inner_spheres * n_per_inner;
    const double shift_sd = shift_scale / std::sqrt(static_cast<double>(ambient_dim));

    point_cloud cloud;
    cloud.data.resize(total, ambient_dim);
    cloud.labels.reserve(static_cast<std::size_t>(total));

    int row = 0;
    for (int s = 0; s < n_inner_spheres; ++s) {
        rng shift_gen(derive_seed(seed, static_cast<std::uint64_t>(2 * s)));
        Eigen::RowVectorXd shift(ambient_dim);
        for (int j = 0; j < ambient_dim; ++j) shift(j) = shift_sd * shift_gen.normal();

        const auto sphere = sample_sphere(n_per_inner, ambient_dim, inner_radius,
                                          derive_seed(seed, static_cast<std::uint64_t>(2 * s + 1)));
        for (int i = 0; i < n_per_inner; ++i) {
            cloud.data.row(row++) = sphere.data.row(i) + shift;
            cloud.labels.push_back(s);
        }
    }

    const auto outer = sample_sphere(n_inner_spheres * n_per_inner, ambient_dim,
                                     5.0 * inner_radius, derive_seed(seed, 1000));
    for (int i = 0; i < outer.data.rows(); ++i) {
        cloud.data.row(row++) = outer.data.row(i);
        cloud.labels.push_back(10);
    }
    return cloud;
}

// ---------------------------------------------------------------------------
// Seeded splits

struct split_provenance {
    std::array<double, 3> fractions{};
    std::uint64_t seed = 0;
    int source_size = 0;
};

struct dataset_split {
    point_cloud train;
    point_cloud validation;
    point_cloud test;
    split_provenance provenance;
};

namespace detail {

/// Largest-remainder apportionment of n into three parts. Remainders are
/// quantized to 1e-9 before comparison; exact ties hand the seat to the
/// later split.
inline std::array<int, 3> split_sizes(int n, const std::array<double, 3>& fractions) {
    double sum = 0.0;
    for (double f : fractions) {
        if (f < 0.0) throw validation_error("split: negative fraction");
        sum += f;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw validation_error("split: fractions must sum to 1");

    std::array<int, 3> sizes{};
    std::array<std::pair<long long, int>, 3> remainders{};
    int assigned = 0;
    for (int i = 0; i < 3; ++i) {
        const double exact = fractions[static_cast<std::size_t>(i)] * n;
        sizes[static_cast<std::size_t>(i)] = static_cast<int>(std::floor(exact + 1e-12));
        const double rem = exact - sizes[static_cast<std::size_t>(i)];
        remainders[static_cast<std::size_t>(i)] = {static_cast<long long>(std::llround(rem * 1e9)), i};
        assigned += sizes[static_cast<std::size_t>(i)];
    }
    std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first > b.first : a.second > b.second;
    });
    for (int leftover = n - assigned, k = 0; leftover > 0; --leftover, ++k)
        ++sizes[static_cast<std::size_t>(remainders[static_cast<std::size_t>(k)].second)];
    return sizes;
}

}  // namespace detail

/// Label-agnostic split: seeded permutation, then contiguous slices in the
/// order train, validation, test.
inline dataset_split split(const point_cloud& cloud, const std::array<double, 3>& fractions,
                           std::uint64_t seed) {
    validate(cloud);
    const int n = cloud.size();
    const auto sizes = detail::split_sizes(n, fractions);

    rng gen(seed);
    const auto perm = gen.permutation(n);

    dataset_split result;
    result.provenance = split_provenance{fractions, seed, n};
    auto take = [&](int offset, int count) {
        std::vector<int> idx(perm.begin() + offset, perm.begin() + offset + count);
        return subsample(cloud, idx);
    };
    result.train = take(0, sizes[0]);
    result.validation = take(sizes[0], sizes[1]);
    result.test = take(sizes[0] + sizes[1], sizes[2]);
    return result;
}

// ---------------------------------------------------------------------------
// IDX image files (big-endian header; unsigned-byte payload)

namespace detail {

inline std::uint32_t read_u32_be(const unsigned char* p) {
    return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) | (std::uint32_t(p[2]) << 8) |
           std::uint32_t(p[3]);
}

}  // namespace detail

/// Reads an IDX file of unsigned bytes, flattens trailing dimensions into
/// columns and rescales pixel values from [0, 255] to [-1, 1].
inline point_cloud load_idx(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());

    if (bytes.size() < 4) throw parse_error("truncated header", bytes.size());
    if (bytes[0] != 0 || bytes[1] != 0) throw parse_error("bad magic", 0);
    const unsigned type_code = bytes[2];
    const unsigned n_dims = bytes[3];
    if (type_code != 0x08) throw parse_error("unsupported type code", 2);
    if (n_dims == 0) throw parse_error("zero-dimensional payload", 3);

    const std::size_t header_size = 4 + 4 * static_cast<std::size_t>(n_dims);
    if (bytes.size() < header_size) throw parse_error("truncated header", bytes.size());

    std::vector<std::uint32_t> dims;
    std::size_t expected = 1;
    for (unsigned k = 0; k < n_dims; ++k) {
        dims.push_back(detail::read_u32_be(bytes.data() + 4 + 4 * k));
        expected *= dims.back();
    }
    if (bytes.size() < header_size + expected) throw parse_error("truncated payload", bytes.size());

    const std::size_t rows = dims[0];
    const std::size_t cols = expected / std::max<std::size_t>(rows, 1);
    point_cloud cloud;
    cloud.data.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) {
            const unsigned char v = bytes[header_size + i * cols + j];
            cloud.data(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                static_cast<double>(v) / 127.5 - 1.0;
        }
    return cloud;
}

/// Inverse of load_idx for round-trips: rescales [-1, 1] back to bytes and
/// writes the dimensions as given (their product must match the data size).
inline void save_idx(const std::filesystem::path& path, const point_cloud& cloud,
                     const std::vector<std::uint32_t>& dims) {
    std::size_t expected = 1;
    for (std::uint32_t d : dims) expected *= d;
    if (expected != static_cast<std::size_t>(cloud.data.size()) || dims.empty() ||
        dims[0] != static_cast<std::uint32_t>(cloud.data.rows()))
        throw validation_error("save_idx: dimensions do not match the data shape");

    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot write " + path.string());
    const unsigned char magic[4] = {0, 0, 0x08, static_cast<unsigned char>(dims.size())};
    out.write(reinterpret_cast<const char*>(magic), 4);
    for (std::uint32_t d : dims) {
        const unsigned char be[4] = {static_cast<unsigned char>(d >> 24),
                                     static_cast<unsigned char>(d >> 16),
                                     static_cast<unsigned char>(d >> 8),
                                     static_cast<unsigned char>(d)};
        out.write(reinterpret_cast<const char*>(be), 4);
    }
    for (Eigen::Index i = 0; i < cloud.data.rows(); ++i)
        for (Eigen::Index j = 0; j < cloud.data.cols(); ++j) {
            const long pixel = std::lround((cloud.data(i, j) + 1.0) * 127.5);
            const unsigned char v = static_cast<unsigned char>(std::clamp(pixel, 0L, 255L));
            out.write(reinterpret_cast<const char*>(&v), 1);
        }
    if (!out) throw io_error("failed while writing " + path.string());
}

// ---------------------------------------------------------------------------
// CSV point clouds: header row, one point per line, optional trailing label

inline void write_csv(const std::filesystem::path& path, const point_cloud& cloud) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot write " + path.string());
    for (int j = 0; j < cloud.dim(); ++j) out << (j ? "," : "") << "x" << j;
    if (cloud.has_labels()) out << ",label";
    out << "\n";

    char buffer[64];
    for (int i = 0; i < cloud.size(); ++i) {
        for (int j = 0; j < cloud.dim(); ++j) {
            std::snprintf(buffer, sizeof(buffer), "%.17g", cloud.data(i, j));
            out << (j ? "," : "") << buffer;
        }
        if (cloud.has_labels()) out << "," << cloud.labels[static_cast<std::size_t>(i)];
        out << "\n";
    }
    if (!out) throw io_error("failed while writing " + path.string());
}

inline point_cloud read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open " + path.string());

    std::string line;
    if (!std::getline(in, line)) throw parse_error("empty csv file", 0);
    bool has_label = line.size() >= 5 && line.substr(line.size() - 5) == "label";
    int n_cols = 1;
    for (char c : line)
        if (c == ',') ++n_cols;
    const int dim = has_label ? n_cols - 1 : n_cols;
    if (dim < 1) throw parse_error("csv header has no coordinate columns", 0);

    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> row;
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        if (static_cast<int>(row.size()) != n_cols)
            throw parse_error("csv row has wrong column count", rows.size() + 1);
        if (has_label) {
            labels.push_back(static_cast<int>(std::llround(row.back())));
            row.pop_back();
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw parse_error("csv contains no data rows", 0);

    point_cloud cloud;
    cloud.data.resize(static_cast<Eigen::Index>(rows.size()), dim);
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (int j = 0; j < dim; ++j)
            cloud.data(static_cast<Eigen::Index>(i), j) = rows[i][static_cast<std::size_t>(j)];
    cloud.labels = std::move(labels);
    return cloud;
}

}  // namespace topoae
