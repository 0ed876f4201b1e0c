#include "flatmtl/param_vector.hpp"

#include "flatmtl/errors.hpp"

#include <stdexcept>
#include <string>

namespace flatmtl {

ParamVector axpy(double alpha, std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) {
        throw std::invalid_argument("axpy: length mismatch (" + std::to_string(x.size()) +
                                    " vs " + std::to_string(y.size()) + ")");
    }
    ParamVector out(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
        out[i] = y[i] + alpha * x[i];
    }
    require_finite(out, "axpy result");
    return out;
}

void axpy_into(double alpha, std::span<const double> x, std::span<double> y) {
    if (x.size() != y.size()) {
        throw std::invalid_argument("axpy_into: length mismatch");
    }
    for (std::size_t i = 0; i < y.size(); ++i) {
        y[i] += alpha * x[i];
    }
}

double dot(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) {
        throw std::invalid_argument("dot: length mismatch");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        acc += x[i] * y[i];
    }
    return acc;
}

double l2_norm(std::span<const double> x) {
    double acc = 0.0;
    for (double v : x) acc += v * v;
    return std::sqrt(acc);
}

ParamVector scaled(double alpha, std::span<const double> x) {
    ParamVector out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = alpha * x[i];
    return out;
}

bool all_finite(std::span<const double> x) {
    for (double v : x) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void require_finite(std::span<const double> x, const char* what) {
    if (!all_finite(x)) {
        throw DivergenceError(std::string(what) + ": non-finite value");
    }
}

} // namespace flatmtl
