#pragma once

#include <stdexcept>
#include <string>

namespace flatmtl {

// Contract violations (bad arguments, invalid configs) use std::invalid_argument.
// The types below map onto the CLI exit codes: numeric failures -> 3, I/O -> 4.

class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite loss or gradient encountered; aborts a run.
class DivergenceError : public NumericError {
public:
    explicit DivergenceError(const std::string& what) : NumericError(what) {}
};

// Iterative solver failed to reach its tolerance.
class SolverError : public NumericError {
public:
    SolverError(const std::string& what, double residual)
        : NumericError(what), residual_(residual) {}
    double residual() const { return residual_; }

private:
    double residual_ = 0.0;
};

class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace flatmtl
