#pragma once

#include <stdexcept>
#include <string>

namespace fibersieve {

/// Root of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid parameters or configuration (CLI exit code 2).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Malformed input file; carries the 1-based line number.
class ParseError : public ConfigError {
public:
    ParseError(const std::string& what, std::size_t line)
        : ConfigError(what + " (line " + std::to_string(line) + ")"), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Numerical failure (CLI exit code 3).
class NumericError : public Error {
public:
    using Error::Error;
};

/// No guided root of the HE11 characteristic equation was bracketed.
class ModeCutoffError : public NumericError {
public:
    using NumericError::NumericError;
};

/// Iterative solver stopped without meeting its tolerance.
class SolverError : public NumericError {
public:
    SolverError(const std::string& what, double residual)
        : NumericError(what + " (residual " + std::to_string(residual) + ")"), residual_(residual) {}
    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

/// Argument outside the validity window of a model (e.g. tabulated material data).
class RangeError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

/// Impossible particle/fiber geometry.
class GeometryError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

/// Quasi-static polarizability evaluated on the Froehlich pole.
class ResonanceError : public NumericError {
public:
    using NumericError::NumericError;
};

}  // namespace fibersieve
