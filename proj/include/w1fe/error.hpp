#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace w1fe {

// Root of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class NonFiniteError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

// Problem too large for the exact transport solvers.
class SizeCapError : public Error {
public:
    using Error::Error;
};

// A supplied potential is not 1-Lipschitz on a pair of points.
class LipschitzError : public Error {
public:
    LipschitzError(std::size_t first, std::size_t second, const std::string& what)
        : Error(what), first_(first), second_(second) {}

    std::size_t first() const noexcept { return first_; }
    std::size_t second() const noexcept { return second_; }

private:
    std::size_t first_, second_;
};

// Training aborted; epoch() is the epoch that failed.
class EpochError : public Error {
public:
    EpochError(std::size_t epoch, const std::string& what)
        : Error("epoch " + std::to_string(epoch) + ": " + what), epoch_(epoch) {}

    std::size_t epoch() const noexcept { return epoch_; }

private:
    std::size_t epoch_;
};

class CheckpointError : public Error {
public:
    enum class Kind { bad_magic, version_mismatch, truncated, layout_mismatch, io };

    CheckpointError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}

    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

} // namespace w1fe
