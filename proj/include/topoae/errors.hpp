#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace topoae {

/// Bad caller input: shape mismatches, non-finite values, invalid parameters.
class validation_error : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Filesystem and serialization failures.
class io_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed on-disk data; carries the byte offset where parsing stopped.
class parse_error : public io_error {
public:
    parse_error(const std::string& what, std::size_t byte_offset)
        : io_error(what + " (byte offset " + std::to_string(byte_offset) + ")"),
          offset_(byte_offset) {}

    std::size_t byte_offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

/// A checked mathematical invariant failed at runtime.
class invariant_violation : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace topoae
