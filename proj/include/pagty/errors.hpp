#pragma once

#include <atomic>
#include <cstddef>
#include <iostream>
#include <stdexcept>
#include <string>

namespace pagty {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration or block specification (channel mismatch, bad flags, ...).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Tensor rank or dimension mismatch.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Spatial size violates a divisibility requirement of the architecture.
class InputSizeError : public ShapeError {
public:
    using ShapeError::ShapeError;
};

/// Bad or missing data on disk, out-of-range labels, empty datasets.
class DataError : public Error {
public:
    using Error::Error;
};

/// Non-finite loss or activations during training.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Filesystem failures (unwritable output, short writes).
class IoError : public Error {
public:
    using Error::Error;
};

/// Process exit codes used by the command-line tool.
enum class ExitCode : int {
    ok = 0,
    failure = 1,
    config = 2,
    data = 3,
    numeric = 4,
};

inline ExitCode exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return ExitCode::config;
    if (dynamic_cast<const NumericError*>(&e)) return ExitCode::numeric;
    if (dynamic_cast<const DataError*>(&e) || dynamic_cast<const ShapeError*>(&e) ||
        dynamic_cast<const IoError*>(&e))
        return ExitCode::data;
    return ExitCode::failure;
}

namespace log {

inline bool& quiet() {
    static bool q = false;
    return q;
}

inline void info(const std::string& msg) {
    if (!quiet()) std::clog << "[pagty] " << msg << '\n';
}

inline std::atomic<std::size_t>& warning_count() {
    static std::atomic<std::size_t> n{0};
    return n;
}

inline void warn(const std::string& msg) {
    ++warning_count();
    if (!quiet()) std::clog << "[pagty] warning: " << msg << '\n';
}

}  // namespace log

}  // namespace pagty
