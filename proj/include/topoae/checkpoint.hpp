#pragma once

#include <cstring>
#include <filesystem>
#include <fstream>

#include "topoae/errors.hpp"
#include "topoae/nn.hpp"

namespace topoae {

/// Everything needed to resume or evaluate a run.
struct checkpoint {
    mlp_model model;
    adam_state optimizer;
    train_config config;
};

namespace detail {

// Little-endian binary format, version 1 (see README for the layout).
// Doubles are raw IEEE-754 bytes, so round-trips are bit-exact.
inline constexpr char kCheckpointMagic[4] = {'T', 'A', 'E', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

class binary_writer {
public:
    explicit binary_writer(const std::filesystem::path& path) : out_(path, std::ios::binary) {
        if (!out_) throw io_error("cannot write " + path.string());
    }

    template <typename T>
    void value(const T& v) {
        out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
    }

    void matrix(const Eigen::MatrixXd& m) {
        value(static_cast<std::uint64_t>(m.rows()));
        value(static_cast<std::uint64_t>(m.cols()));
        out_.write(reinterpret_cast<const char*>(m.data()),
                   static_cast<std::streamsize>(sizeof(double)) * m.size());
    }

    void vector(const Eigen::VectorXd& v) {
        value(static_cast<std::uint64_t>(v.size()));
        out_.write(reinterpret_cast<const char*>(v.data()),
                   static_cast<std::streamsize>(sizeof(double)) * v.size());
    }

    void finish(const std::filesystem::path& path) {
        out_.flush();
        if (!out_) throw io_error("failed while writing " + path.string());
    }

private:
    std::ofstream out_;
};

class binary_reader {
public:
    explicit binary_reader(const std::filesystem::path& path) : in_(path, std::ios::binary) {
        if (!in_) throw io_error("cannot open " + path.string());
    }

    template <typename T>
    T value() {
        T v;
        in_.read(reinterpret_cast<char*>(&v), sizeof(T));
        if (!in_) throw parse_error("truncated checkpoint", offset_);
        offset_ += sizeof(T);
        return v;
    }

    Eigen::MatrixXd matrix() {
        const auto rows = value<std::uint64_t>();
        const auto cols = value<std::uint64_t>();
        if (rows > (1u << 24) || cols > (1u << 24)) throw parse_error("implausible tensor shape", offset_);
        Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
        in_.read(reinterpret_cast<char*>(m.data()),
                 static_cast<std::streamsize>(sizeof(double)) * m.size());
        if (!in_) throw parse_error("truncated checkpoint", offset_);
        offset_ += sizeof(double) * static_cast<std::size_t>(m.size());
        return m;
    }

    Eigen::VectorXd vector() {
        const auto n = value<std::uint64_t>();
        if (n > (1u << 24)) throw parse_error("implausible vector length", offset_);
        Eigen::VectorXd v(static_cast<Eigen::Index>(n));
        in_.read(reinterpret_cast<char*>(v.data()),
                 static_cast<std::streamsize>(sizeof(double)) * v.size());
        if (!in_) throw parse_error("truncated checkpoint", offset_);
        offset_ += sizeof(double) * static_cast<std::size_t>(v.size());
        return v;
    }

    std::size_t offset() const { return offset_; }

private:
    std::ifstream in_;
    std::size_t offset_ = 0;
};

inline void write_grads(binary_writer& w, const mlp_grads& grads) {
    for (const auto& t : grads.weights) w.matrix(t);
    for (const auto& t : grads.biases) w.vector(t);
    for (const auto& t : grads.gamma) w.vector(t);
    for (const auto& t : grads.beta) w.vector(t);
}

inline mlp_grads read_grads(binary_reader& r, int n_layers) {
    mlp_grads grads;
    for (int l = 0; l < n_layers; ++l) grads.weights.push_back(r.matrix());
    for (int l = 0; l < n_layers; ++l) grads.biases.push_back(r.vector());
    for (int l = 0; l < n_layers; ++l) grads.gamma.push_back(r.vector());
    for (int l = 0; l < n_layers; ++l) grads.beta.push_back(r.vector());
    return grads;
}

}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& path, const checkpoint& ck) {
    detail::binary_writer w(path);
    w.value(detail::kCheckpointMagic);
    w.value(detail::kCheckpointVersion);

    const auto& config = ck.model.config;
    w.value(static_cast<std::uint32_t>(config.layer_sizes.size()));
    for (int s : config.layer_sizes) w.value(static_cast<std::int32_t>(s));
    w.value(static_cast<std::uint8_t>(config.use_batchnorm));
    w.value(static_cast<std::uint8_t>(config.out_act));

    for (const auto& weight : ck.model.weights) w.matrix(weight);
    for (const auto& bias : ck.model.biases) w.vector(bias);
    for (int l = 0; l < ck.model.n_layers(); ++l) {
        if (!ck.model.layer_has_norm(l)) continue;
        const auto& bn = ck.model.batchnorm[static_cast<std::size_t>(l)];
        w.vector(bn.gamma);
        w.vector(bn.beta);
        w.vector(bn.running_mean);
        w.vector(bn.running_var);
    }

    w.value(static_cast<std::int64_t>(ck.optimizer.step));
    detail::write_grads(w, ck.optimizer.moment1);
    detail::write_grads(w, ck.optimizer.moment2);

    w.value(ck.config.learning_rate);
    w.value(ck.config.lambda);
    w.value(ck.config.weight_decay);
    w.value(static_cast<std::int32_t>(ck.config.batch_size));
    w.value(static_cast<std::int32_t>(ck.config.max_epochs));
    w.value(static_cast<std::int32_t>(ck.config.patience));
    w.value(ck.config.seed);
    w.finish(path);
}

inline checkpoint load_checkpoint(const std::filesystem::path& path) {
    detail::binary_reader r(path);
    const auto magic = r.value<std::array<char, 4>>();
    if (std::memcmp(magic.data(), detail::kCheckpointMagic, 4) != 0)
        throw parse_error("not a checkpoint file (bad magic)", 0);
    const auto version = r.value<std::uint32_t>();
    if (version != detail::kCheckpointVersion)
        throw parse_error("unsupported checkpoint version " + std::to_string(version), 4);

    checkpoint ck;
    const auto n_sizes = r.value<std::uint32_t>();
    if (n_sizes < 3 || n_sizes > 64) throw parse_error("implausible layer count", r.offset());
    for (std::uint32_t i = 0; i < n_sizes; ++i)
        ck.model.config.layer_sizes.push_back(r.value<std::int32_t>());
    ck.model.config.use_batchnorm = r.value<std::uint8_t>() != 0;
    ck.model.config.out_act = static_cast<output_activation>(r.value<std::uint8_t>());
    validate(ck.model.config);

    const int n_layers = static_cast<int>(n_sizes) - 1;
    for (int l = 0; l < n_layers; ++l) ck.model.weights.push_back(r.matrix());
    for (int l = 0; l < n_layers; ++l) ck.model.biases.push_back(r.vector());
    ck.model.batchnorm.resize(static_cast<std::size_t>(n_layers));
    for (int l = 0; l < n_layers; ++l) {
        if (!ck.model.layer_has_norm(l)) continue;
        auto& bn = ck.model.batchnorm[static_cast<std::size_t>(l)];
        bn.gamma = r.vector();
        bn.beta = r.vector();
        bn.running_mean = r.vector();
        bn.running_var = r.vector();
    }

    ck.optimizer.step = r.value<std::int64_t>();
    ck.optimizer.moment1 = detail::read_grads(r, n_layers);
    ck.optimizer.moment2 = detail::read_grads(r, n_layers);

    ck.config.learning_rate = r.value<double>();
    ck.config.lambda = r.value<double>();
    ck.config.weight_decay = r.value<double>();
    ck.config.batch_size = r.value<std::int32_t>();
    ck.config.max_epochs = r.value<std::int32_t>();
    ck.config.patience = r.value<std::int32_t>();
    ck.config.seed = r.value<std::uint64_t>();

    for (int l = 0; l < n_layers; ++l) {
        const auto li = static_cast<std::size_t>(l);
        if (ck.model.weights[li].rows() != ck.model.config.layer_sizes[li + 1] ||
            ck.model.weights[li].cols() != ck.model.config.layer_sizes[li])
            throw parse_error("tensor shape does not match the architecture", r.offset());
    }
    return ck;
}

}  // namespace topoae
