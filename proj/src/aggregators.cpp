#include "flatmtl/aggregators.hpp"

#include "flatmtl/errors.hpp"
#include "flatmtl/param_vector.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace flatmtl {

void AggregationMethod::validate() const {
    if (kind == AggregatorKind::CaGrad && (cagrad_c < 0.0 || cagrad_c >= 1.0)) {
        throw std::invalid_argument("AggregationMethod: cagrad c must be in [0, 1)");
    }
    if (!(tolerance > 0.0)) {
        throw std::invalid_argument("AggregationMethod: tolerance must be > 0");
    }
    if (max_iterations == 0) {
        throw std::invalid_argument("AggregationMethod: max_iterations must be >= 1");
    }
}

AggregationMethod AggregationMethod::parse(const std::string& name, bool* flat_mode) {
    std::string base = name;
    bool flat = false;
    if (base.rfind("f-", 0) == 0) {
        flat = true;
        base = base.substr(2);
    }
    if (flat_mode) *flat_mode = flat;
    AggregationMethod m;
    if (base == "mean") m.kind = AggregatorKind::Mean;
    else if (base == "mgda") m.kind = AggregatorKind::Mgda;
    else if (base == "pcgrad") m.kind = AggregatorKind::PcGrad;
    else if (base == "cagrad") m.kind = AggregatorKind::CaGrad;
    else if (base == "imtl") m.kind = AggregatorKind::ImtlG;
    else throw std::invalid_argument("unknown aggregation method '" + name +
                                     "' (expected mean|mgda|pcgrad|cagrad|imtl, optional f- prefix)");
    return m;
}

std::string AggregationMethod::name() const {
    switch (kind) {
        case AggregatorKind::Mean: return "mean";
        case AggregatorKind::Mgda: return "mgda";
        case AggregatorKind::PcGrad: return "pcgrad";
        case AggregatorKind::CaGrad: return "cagrad";
        case AggregatorKind::ImtlG: return "imtl";
    }
    return "?";
}

void SimplexWeights::validate() const {
    double sum = 0.0;
    for (double x : w) {
        if (x < -1e-12) throw std::invalid_argument("SimplexWeights: negative weight");
        sum += x;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
        throw std::invalid_argument("SimplexWeights: weights sum to " + std::to_string(sum));
    }
}

namespace {

void check_grads(const std::vector<std::vector<double>>& grads) {
    if (grads.empty()) throw std::invalid_argument("aggregate: need at least one gradient");
    const std::size_t d = grads[0].size();
    for (const auto& g : grads) {
        if (g.size() != d) throw std::invalid_argument("aggregate: gradient length mismatch");
    }
}

std::vector<double> combine(const std::vector<std::vector<double>>& grads,
                            const std::vector<double>& w) {
    std::vector<double> out(grads[0].size(), 0.0);
    for (std::size_t i = 0; i < grads.size(); ++i) {
        if (w[i] == 0.0) continue;
        axpy_into(w[i], grads[i], out);
    }
    return out;
}

std::vector<double> mean_of(const std::vector<std::vector<double>>& grads) {
    std::vector<double> w(grads.size(), 1.0 / static_cast<double>(grads.size()));
    return combine(grads, w);
}

// Gram matrix of the gradients, row-major m x m.
std::vector<double> gram(const std::vector<std::vector<double>>& grads) {
    const std::size_t m = grads.size();
    std::vector<double> M(m * m);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = i; j < m; ++j) {
            const double v = dot(grads[i], grads[j]);
            M[i * m + j] = v;
            M[j * m + i] = v;
        }
    }
    return M;
}

// argmin over gamma in [0,1] of ||(1-gamma) a + gamma b||^2 given the three
// inner products; the quadratic's stationary point, clipped to the interval.
double min_norm_gamma(double aa, double ab, double bb) {
    const double denom = aa - 2.0 * ab + bb;
    if (denom <= 0.0) {
        // a == b (or numerically so): any gamma works
        return aa <= bb ? 0.0 : 1.0;
    }
    return std::clamp((aa - ab) / denom, 0.0, 1.0);
}

} // namespace

std::pair<SimplexWeights, std::vector<double>>
mgda_minnorm(const std::vector<std::vector<double>>& grads, std::size_t max_iterations,
             double tolerance) {
    check_grads(grads);
    const std::size_t m = grads.size();
    if (m == 1) {
        return {SimplexWeights{{1.0}}, grads[0]};
    }

    if (m == 2) {
        // min_gamma ||gamma g1 + (1-gamma) g2||^2 in closed form
        const double aa = dot(grads[0], grads[0]);
        const double ab = dot(grads[0], grads[1]);
        const double bb = dot(grads[1], grads[1]);
        const double gamma = min_norm_gamma(bb, ab, aa); // weight on g1
        SimplexWeights w{{gamma, 1.0 - gamma}};
        return {w, combine(grads, w.w)};
    }

    const std::vector<double> M = gram(grads);
    double scale = 0.0;
    for (std::size_t i = 0; i < m; ++i) scale = std::max(scale, M[i * m + i]);
    if (scale == 0.0) {
        // all-zero gradients: the hull is {0}
        SimplexWeights w{std::vector<double>(m, 1.0 / static_cast<double>(m))};
        return {w, std::vector<double>(grads[0].size(), 0.0)};
    }

    // Frank-Wolfe with away steps: linear convergence on this QP, and every
    // line search is the analytic two-point formula above.
    std::vector<double> w(m, 1.0 / static_cast<double>(m));
    std::vector<double> Mw(m); // (M w)_i = <g_i, d>
    auto refresh = [&] {
        for (std::size_t i = 0; i < m; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < m; ++j) acc += M[i * m + j] * w[j];
            Mw[i] = acc;
        }
    };
    refresh();

    double gap = 0.0;
    bool converged = false;
    // Convergence is declared at the requested tolerance, but iteration
    // continues to the rounding floor while it still makes progress: the gap
    // only bounds ||d - d*|| to its square root, and downstream consumers
    // (scale-consistency, oracle tests) want the combined vector itself tight.
    const double gap_floor = 1e-15 * scale;
    for (std::size_t iter = 0; iter < max_iterations; ++iter) {
        const double dd = std::inner_product(w.begin(), w.end(), Mw.begin(), 0.0);
        std::size_t toward = 0;
        std::size_t away = 0;
        bool away_found = false;
        for (std::size_t i = 0; i < m; ++i) {
            if (Mw[i] < Mw[toward]) toward = i;
            if (w[i] > 1e-16 && (!away_found || Mw[i] > Mw[away])) {
                away = i;
                away_found = true;
            }
        }
        gap = dd - Mw[toward];
        if (gap <= tolerance * scale) converged = true;
        if (gap <= gap_floor) break;

        const double away_gap = away_found ? Mw[away] - dd : -1.0;
        bool moved = false;
        if (away_gap > gap && w[away] < 1.0) {
            // away step: move weight off the worst active vertex along
            // w + t (w - e_away), t in [0, w_a/(1-w_a)]. In gradient space the
            // line is d + t (d - g_a); minimizing its norm gives
            // t* = -<d, d-g_a> / ||d-g_a||^2.
            const double t_max = w[away] / (1.0 - w[away]);
            const double dir_d = dd - Mw[away]; // <d, d - g_a>
            const double dir_dir = dd - 2.0 * Mw[away] + M[away * m + away];
            const double t = dir_dir > 0.0 ? std::clamp(-dir_d / dir_dir, 0.0, t_max) : t_max;
            if (t > 0.0) {
                for (std::size_t i = 0; i < m; ++i) w[i] *= (1.0 + t);
                w[away] -= t;
                moved = true;
            }
        } else {
            // toward step: blend with the best vertex
            const double gamma = min_norm_gamma(dd, Mw[toward], M[toward * m + toward]);
            if (gamma > 0.0) {
                for (std::size_t i = 0; i < m; ++i) w[i] *= (1.0 - gamma);
                w[toward] += gamma;
                moved = true;
            }
        }
        if (!moved) break; // line searches stalled: numerical floor reached
        refresh();
    }
    if (!converged) {
        const double dd = std::inner_product(w.begin(), w.end(), Mw.begin(), 0.0);
        double worst = dd;
        for (std::size_t i = 0; i < m; ++i) worst = std::min(worst, Mw[i]);
        throw SolverError("mgda_minnorm: no convergence after " +
                              std::to_string(max_iterations) + " iterations",
                          dd - worst);
    }
    // clean tiny negatives from the away steps
    double sum = 0.0;
    for (auto& x : w) {
        x = std::max(x, 0.0);
        sum += x;
    }
    for (auto& x : w) x /= sum;
    SimplexWeights weights{w};
    weights.validate();
    return {weights, combine(grads, w)};
}

std::vector<double> pcgrad_combine(const std::vector<std::vector<double>>& grads,
                                   SeededRng& rng) {
    check_grads(grads);
    const std::size_t m = grads.size();
    if (m == 1) return grads[0];
    const std::size_t d = grads[0].size();

    std::vector<double> norm2(m);
    for (std::size_t i = 0; i < m; ++i) norm2[i] = dot(grads[i], grads[i]);

    std::vector<double> out(d, 0.0);
    std::vector<std::size_t> order;
    order.reserve(m - 1);
    for (std::size_t i = 0; i < m; ++i) {
        order.clear();
        for (std::size_t j = 0; j < m; ++j) {
            if (j != i) order.push_back(j);
        }
        shuffle(rng, order);
        std::vector<double> projected = grads[i];
        for (std::size_t j : order) {
            if (norm2[j] == 0.0) continue;
            const double inner = dot(projected, grads[j]);
            if (inner < 0.0) {
                axpy_into(-inner / norm2[j], grads[j], projected);
            }
        }
        axpy_into(1.0, projected, out);
    }
    const double inv_m = 1.0 / static_cast<double>(m);
    for (auto& x : out) x *= inv_m;
    return out;
}

std::vector<double> cagrad_combine(const std::vector<std::vector<double>>& grads, double c,
                                   std::size_t max_iterations, double tolerance) {
    check_grads(grads);
    if (c < 0.0 || c >= 1.0) {
        throw std::invalid_argument("cagrad_combine: c must be in [0, 1)");
    }
    const std::size_t m = grads.size();
    if (m == 1) return grads[0];

    std::vector<double> g0 = mean_of(grads);
    const double g0_norm = l2_norm(g0);
    const double phi = c * g0_norm;
    if (phi == 0.0) return g0; // c == 0 or zero mean gradient

    // Dual: min over simplex w of F(w) = <g_w, g0> + phi ||g_w||,
    // with g_w = sum w_i g_i. In Gram coordinates: b_i = <g_i, g0>,
    // q(w) = w' M w, F = w'b + phi sqrt(q).
    const std::vector<double> M = gram(grads);
    std::vector<double> b(m, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < m; ++j) b[i] += M[i * m + j];
        b[i] /= static_cast<double>(m);
    }
    double scale = 0.0;
    for (std::size_t i = 0; i < m; ++i) scale = std::max(scale, M[i * m + i]);

    auto project_simplex = [&](std::vector<double>& v) {
        // Euclidean projection onto the probability simplex
        std::vector<double> u = v;
        std::sort(u.begin(), u.end(), std::greater<double>());
        double cum = 0.0;
        double tau = 0.0;
        for (std::size_t k = 0; k < u.size(); ++k) {
            cum += u[k];
            const double candidate = (cum - 1.0) / static_cast<double>(k + 1);
            if (u[k] - candidate > 0.0) tau = candidate;
        }
        for (auto& x : v) x = std::max(x - tau, 0.0);
    };

    // Projected gradient with exact line search. Steps and termination use
    // only derivative signs and relative residuals, never objective-value
    // comparisons, so the iterate path is scale-invariant and polishes all
    // the way to the rounding floor instead of stalling at sqrt(eps).
    std::vector<double> w(m, 1.0 / static_cast<double>(m));
    const double step0 = 1.0 / std::max(scale, 1e-300);
    const double grad_floor = tolerance * std::max(scale, 1e-300);
    const double polish_floor = 1e-14 * std::max(scale, 1e-300);
    bool converged = false;
    double residual = 0.0;

    std::vector<double> Mw(m), grad(m), trial(m), dir(m), Mdir(m);
    auto mat_vec = [&](const std::vector<double>& v, std::vector<double>& out) {
        for (std::size_t i = 0; i < m; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < m; ++j) acc += M[i * m + j] * v[j];
            out[i] = acc;
        }
    };

    for (std::size_t iter = 0; iter < max_iterations; ++iter) {
        mat_vec(w, Mw);
        double q = 0.0, lin_unused = 0.0;
        (void)lin_unused;
        for (std::size_t i = 0; i < m; ++i) q += w[i] * Mw[i];
        const double qn = std::sqrt(std::max(q, 1e-300));
        for (std::size_t i = 0; i < m; ++i) grad[i] = b[i] + phi * Mw[i] / qn;

        for (std::size_t i = 0; i < m; ++i) trial[i] = w[i] - step0 * grad[i];
        project_simplex(trial);
        double move2 = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            dir[i] = trial[i] - w[i];
            move2 += dir[i] * dir[i];
        }
        residual = std::sqrt(move2) / step0;
        if (residual <= grad_floor) converged = true;
        if (residual <= polish_floor) break;

        // exact line search on h(t) = F(w + t dir) over the maximal feasible
        // segment: h'(t) = <dir, b> + phi (qb + t qc) / sqrt(q + 2 t qb + t^2 qc)
        mat_vec(dir, Mdir);
        double dir_b = 0.0, qb = 0.0, qc = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            dir_b += dir[i] * b[i];
            qb += dir[i] * Mw[i];
            qc += dir[i] * Mdir[i];
        }
        auto h_deriv = [&](double t) {
            const double qt = std::max(q + 2.0 * t * qb + t * t * qc, 1e-300);
            return dir_b + phi * (qb + t * qc) / std::sqrt(qt);
        };
        if (h_deriv(0.0) >= 0.0) {
            // the projected direction is not a descent direction: stationary
            converged = converged || residual <= grad_floor * 10.0;
            break;
        }
        // sum(dir) == 0, so some coordinate decreases; the segment stays in
        // the simplex up to the first coordinate hitting zero (>= 1: the
        // projected trial point itself is feasible)
        double t_max = 1e300;
        for (std::size_t i = 0; i < m; ++i) {
            if (dir[i] < 0.0) t_max = std::min(t_max, w[i] / -dir[i]);
        }
        t_max = std::clamp(t_max, 1.0, 1e300);
        double t = t_max;
        if (h_deriv(t_max) > 0.0) {
            double lo = 0.0, hi = t_max;
            for (int it = 0; it < 100; ++it) {
                const double mid = 0.5 * (lo + hi);
                (h_deriv(mid) > 0.0 ? hi : lo) = mid;
            }
            t = 0.5 * (lo + hi);
        }
        if (t <= 0.0) break;
        for (std::size_t i = 0; i < m; ++i) {
            w[i] = std::max(w[i] + t * dir[i], 0.0);
        }
        // renormalize to counter fp drift off the simplex
        double wsum = 0.0;
        for (double x : w) wsum += x;
        for (auto& x : w) x /= wsum;
    }
    if (!converged) {
        throw SolverError("cagrad_combine: no convergence after " +
                              std::to_string(max_iterations) + " iterations",
                          residual);
    }

    std::vector<double> gw = combine(grads, w);
    const double gw_norm = l2_norm(gw);
    if (gw_norm < tolerance) {
        return g0;
    }
    std::vector<double> out = g0;
    axpy_into(phi / gw_norm, gw, out);
    return out;
}

std::vector<double> imtl_g_combine(const std::vector<std::vector<double>>& grads,
                                   std::string* warning) {
    check_grads(grads);
    const std::size_t m_all = grads.size();
    if (m_all == 1) return grads[0];

    std::vector<std::size_t> active;
    std::vector<double> norms(m_all, 0.0);
    for (std::size_t i = 0; i < m_all; ++i) {
        norms[i] = l2_norm(grads[i]);
        if (norms[i] > 0.0) active.push_back(i);
    }
    if (active.size() < m_all && warning) {
        *warning = "imtl_g: dropped " + std::to_string(m_all - active.size()) +
                   " zero-gradient task(s)";
    }
    if (active.empty()) return std::vector<double>(grads[0].size(), 0.0);
    if (active.size() == 1) return grads[active[0]];

    const std::size_t m = active.size();
    // Unknowns alpha (one per active task). Equations:
    //   sum_j alpha_j <g_j, u_1 - u_i> = 0   for i = 2..m
    //   sum_j alpha_j = 1
    std::vector<double> A(m * m, 0.0);
    std::vector<double> rhs(m, 0.0);
    for (std::size_t row = 0; row + 1 < m; ++row) {
        const std::size_t i = active[row + 1];
        const std::size_t first = active[0];
        for (std::size_t col = 0; col < m; ++col) {
            const std::size_t j = active[col];
            const double proj_first = dot(grads[j], grads[first]) / norms[first];
            const double proj_i = dot(grads[j], grads[i]) / norms[i];
            A[row * m + col] = proj_first - proj_i;
        }
    }
    for (std::size_t col = 0; col < m; ++col) A[(m - 1) * m + col] = 1.0;
    rhs[m - 1] = 1.0;

    // Gaussian elimination with partial pivoting; a vanishing pivot means the
    // directions are (near-)parallel and the system does not determine alpha.
    double max_abs = 0.0;
    for (double v : A) max_abs = std::max(max_abs, std::abs(v));
    const double pivot_floor = 1e-12 * std::max(max_abs, 1.0);
    std::vector<double> alpha(m, 0.0);
    bool singular = false;
    for (std::size_t col = 0; col < m && !singular; ++col) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r < m; ++r) {
            if (std::abs(A[r * m + col]) > std::abs(A[pivot * m + col])) pivot = r;
        }
        if (std::abs(A[pivot * m + col]) < pivot_floor) {
            singular = true;
            break;
        }
        if (pivot != col) {
            for (std::size_t cc = 0; cc < m; ++cc) std::swap(A[pivot * m + cc], A[col * m + cc]);
            std::swap(rhs[pivot], rhs[col]);
        }
        for (std::size_t r = col + 1; r < m; ++r) {
            const double f = A[r * m + col] / A[col * m + col];
            if (f == 0.0) continue;
            for (std::size_t cc = col; cc < m; ++cc) A[r * m + cc] -= f * A[col * m + cc];
            rhs[r] -= f * rhs[col];
        }
    }
    if (!singular) {
        for (std::size_t row = m; row-- > 0;) {
            double acc = rhs[row];
            for (std::size_t cc = row + 1; cc < m; ++cc) acc -= A[row * m + cc] * alpha[cc];
            alpha[row] = acc / A[row * m + row];
            if (!std::isfinite(alpha[row])) {
                singular = true;
                break;
            }
        }
    }
    if (singular) {
        if (warning) {
            if (!warning->empty()) *warning += "; ";
            *warning += "imtl_g: singular projection system, falling back to mean";
        }
        return mean_of(grads);
    }
    std::vector<double> out(grads[0].size(), 0.0);
    for (std::size_t col = 0; col < m; ++col) {
        axpy_into(alpha[col], grads[active[col]], out);
    }
    return out;
}

GradientAggregator::GradientAggregator(AggregationMethod method, SeededRng pcgrad_stream)
    : method_(method), rng_(pcgrad_stream) {
    method_.validate();
}

std::vector<double> GradientAggregator::aggregate(const std::vector<std::vector<double>>& grads) {
    check_grads(grads);
    last_warning_.clear();
    if (grads.size() == 1) return grads[0]; // every variant collapses for m=1
    switch (method_.kind) {
        case AggregatorKind::Mean:
            return mean_of(grads);
        case AggregatorKind::Mgda:
            return mgda_minnorm(grads, method_.max_iterations, method_.tolerance).second;
        case AggregatorKind::PcGrad:
            return pcgrad_combine(grads, rng_);
        case AggregatorKind::CaGrad:
            return cagrad_combine(grads, method_.cagrad_c, method_.max_iterations,
                                  method_.tolerance);
        case AggregatorKind::ImtlG:
            return imtl_g_combine(grads, &last_warning_);
    }
    throw std::logic_error("unreachable aggregator kind");
}

} // namespace flatmtl
