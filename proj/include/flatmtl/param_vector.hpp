#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace flatmtl {

/// Model parameters live in one flat contiguous vector; structure is imposed
/// by ParamPartition index maps. Everything downstream is an O(d) loop.
using ParamVector = std::vector<double>;

/// y + alpha * x, elementwise. Throws on length mismatch or non-finite result.
ParamVector axpy(double alpha, std::span<const double> x, std::span<const double> y);

/// In-place y += alpha * x.
void axpy_into(double alpha, std::span<const double> x, std::span<double> y);

double dot(std::span<const double> x, std::span<const double> y);

double l2_norm(std::span<const double> x);

ParamVector scaled(double alpha, std::span<const double> x);

bool all_finite(std::span<const double> x);

/// Throws DivergenceError naming `what` if any entry is NaN/Inf.
void require_finite(std::span<const double> x, const char* what);

} // namespace flatmtl
