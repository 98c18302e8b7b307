#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace qsa {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DependentFrequencies : public Error {
public:
    using Error::Error;
};

class NonPositiveFrequency : public Error {
public:
    using Error::Error;
};

class UnsupportedWaveform : public Error {
public:
    using Error::Error;
};

/// Raised by the integrator when a state component becomes NaN or infinite.
class NonFiniteState : public Error {
public:
    NonFiniteState(std::size_t step, double t)
        : Error("non-finite state at step " + std::to_string(step) + " (t = " + std::to_string(t) + ")"),
          step_(step),
          time_(t) {}

    [[nodiscard]] std::size_t step() const noexcept { return step_; }
    [[nodiscard]] double time() const noexcept { return time_; }

private:
    std::size_t step_;
    double time_;
};

class EmptyTrajectory : public Error {
public:
    using Error::Error;
};

class GridMismatch : public Error {
public:
    using Error::Error;
};

class NonFiniteObjective : public Error {
public:
    using Error::Error;
};

class DimensionMismatch : public Error {
public:
    using Error::Error;
};

class SingularAStar : public Error {
public:
    using Error::Error;
};

class DegenerateWindow : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& key, const std::string& what)
        : Error("line " + std::to_string(line) + (key.empty() ? "" : " [" + key + "]") + ": " + what),
          line_(line),
          key_(key) {}

    [[nodiscard]] std::size_t line() const noexcept { return line_; }
    [[nodiscard]] const std::string& key() const noexcept { return key_; }

private:
    std::size_t line_;
    std::string key_;
};

class ValidationError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace qsa
