#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mfcpn {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

/// Strict and relaxed joint measures were mixed.
class KindError : public Error {
public:
    using Error::Error;
};

/// Input exceeds the exact-solver atom limit.
class SizeError : public Error {
public:
    using Error::Error;
};

class NormalizationError : public Error {
public:
    using Error::Error;
};

/// A coefficient set lacks an evaluator that an operation needs.
class ConfigurationError : public Error {
public:
    using Error::Error;
};

/// A relaxed kernel does not cover every atom of its measure.
class CoverageError : public Error {
public:
    using Error::Error;
};

class DomainError : public Error {
public:
    using Error::Error;
};

class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what, std::size_t step)
        : Error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

/// Riccati positivity constraint violated.
class IllPosedError : public Error {
public:
    IllPosedError(const std::string& what, double time)
        : Error(what + " (t = " + std::to_string(time) + ")"), time_(time) {}
    double time() const noexcept { return time_; }

private:
    double time_;
};

}  // namespace mfcpn
