#pragma once

#include "flatmtl/rng.hpp"

#include <array>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

namespace flatmtl {

enum class AggregatorKind { Mean, Mgda, PcGrad, CaGrad, ImtlG };

struct AggregationMethod {
    AggregatorKind kind = AggregatorKind::Mean;
    double cagrad_c = 0.4;           // in [0, 1)
    std::size_t max_iterations = 500;
    double tolerance = 1e-8;

    void validate() const;

    /// Accepts mean|mgda|pcgrad|cagrad|imtl, optionally with an "f-" prefix
    /// (the prefix selects flat mode and is reported back via *flat_mode).
    static AggregationMethod parse(const std::string& name, bool* flat_mode = nullptr);
    std::string name() const;
};

/// Convex-combination weights over the tasks: w_i >= 0, sum w_i == 1.
struct SimplexWeights {
    std::vector<double> w;
    void validate() const;
};

/// Min-norm point in the convex hull of the gradients. m==2 uses the closed
/// form; larger m runs Frank-Wolfe with away steps and analytic two-point
/// line search. Throws SolverError (with the duality-gap residual) when the
/// iteration budget runs out.
std::pair<SimplexWeights, std::vector<double>>
mgda_minnorm(const std::vector<std::vector<double>>& grads, std::size_t max_iterations = 500,
             double tolerance = 1e-8);

/// Conflict-projected combination: each task's gradient is projected off the
/// normal cone of the others (visited in a seeded random order), and the m
/// projected gradients are averaged.
std::vector<double> pcgrad_combine(const std::vector<std::vector<double>>& grads,
                                   SeededRng& rng);

/// Constrained combination: maximizes the worst-task descent rate inside the
/// ball ||d - mean|| <= c * ||mean||, via projected-gradient descent on the
/// dual simplex problem.
std::vector<double> cagrad_combine(const std::vector<std::vector<double>>& grads, double c,
                                   std::size_t max_iterations = 500, double tolerance = 1e-8);

/// Combination with equal-length projections onto every task's gradient
/// direction. Zero gradients are dropped; a (near-)singular system falls back
/// to the mean. Either event is reported through *warning when provided.
std::vector<double> imtl_g_combine(const std::vector<std::vector<double>>& grads,
                                   std::string* warning = nullptr);

/// Dispatcher for the per-step aggregation. Holds the rng stream that feeds
/// PCGrad's task orderings; both per-step calls (loss components, then flat
/// components) go through the same instance and therefore the same stream.
class GradientAggregator {
public:
    GradientAggregator(AggregationMethod method, SeededRng pcgrad_stream);

    std::vector<double> aggregate(const std::vector<std::vector<double>>& grads);

    const AggregationMethod& method() const { return method_; }
    const std::string& last_warning() const { return last_warning_; }
    std::array<std::uint64_t, 4> rng_state() const { return rng_.state(); }
    void restore_rng(const std::array<std::uint64_t, 4>& s) { rng_ = SeededRng::from_state(s); }

private:
    AggregationMethod method_;
    SeededRng rng_;
    std::string last_warning_;
};

} // namespace flatmtl
