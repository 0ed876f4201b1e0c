#include "flatmtl/analytic_problems.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace flatmtl {

namespace {

// C-infinity bump: 1 at t=0, support (-1, 1), second derivative -2 at 0.
double bump(double t) {
    const double t2 = t * t;
    if (t2 >= 1.0) return 0.0;
    return std::exp(1.0 - 1.0 / (1.0 - t2));
}

double bump_deriv(double t) {
    const double t2 = t * t;
    if (t2 >= 1.0) return 0.0;
    const double denom = 1.0 - t2;
    return bump(t) * (-2.0 * t / (denom * denom));
}

// max over t in (0,1) of |bump'(t)|, ~2.086; used by the capture-condition check.
double max_abs_bump_deriv() {
    static const double value = [] {
        double best = 0.0;
        for (int i = 1; i < 100000; ++i) {
            best = std::max(best, std::abs(bump_deriv(i / 100000.0)));
        }
        return best;
    }();
    return value;
}

std::vector<std::size_t> head_dims(std::size_t m, std::size_t dim) {
    return std::vector<std::size_t>(m, dim);
}

} // namespace

QuadraticProblem::QuadraticProblem(std::size_t shared_dim, std::vector<TaskSpec> tasks,
                                   double init_scale)
    : shared_dim_(shared_dim),
      tasks_(std::move(tasks)),
      init_scale_(init_scale),
      partition_(ParamPartition::contiguous(shared_dim, [&] {
          std::vector<std::size_t> dims;
          for (const auto& t : tasks_) dims.push_back(t.head_dim);
          return dims;
      }())) {
    for (auto& t : tasks_) {
        if (t.matrix.size() != shared_dim_ * shared_dim_) {
            throw std::invalid_argument("QuadraticProblem: matrix must be shared_dim^2");
        }
        if (t.center.empty()) t.center.assign(shared_dim_, 0.0);
        if (t.center.size() != shared_dim_) {
            throw std::invalid_argument("QuadraticProblem: center dim mismatch");
        }
        if (t.head_target.empty()) t.head_target.assign(t.head_dim, 0.0);
        if (t.head_target.size() != t.head_dim) {
            throw std::invalid_argument("QuadraticProblem: head target dim mismatch");
        }
    }
}

ParamVector QuadraticProblem::initial_params(SeededRng& rng) const {
    ParamVector theta(partition_.total_length());
    for (auto& x : theta) x = init_scale_ * rng.normal();
    return theta;
}

double QuadraticProblem::do_task_loss(std::size_t task, const ParamVector& theta,
                                      const Batch&) const {
    const auto& spec = tasks_[task];
    auto s = partition_.shared_view(theta);
    double loss = 0.0;
    // 0.5 (s-b)' A (s-b)
    for (std::size_t r = 0; r < shared_dim_; ++r) {
        double row = 0.0;
        for (std::size_t c = 0; c < shared_dim_; ++c) {
            row += spec.matrix[r * shared_dim_ + c] * (s[c] - spec.center[c]);
        }
        loss += 0.5 * (s[r] - spec.center[r]) * row;
    }
    auto n = partition_.nonshared_view(theta, task);
    for (std::size_t j = 0; j < n.size(); ++j) {
        const double d = n[j] - spec.head_target[j];
        loss += 0.5 * spec.head_curvature * d * d;
    }
    return loss;
}

ParamVector QuadraticProblem::do_task_grad(std::size_t task, const ParamVector& theta,
                                           const Batch&) const {
    const auto& spec = tasks_[task];
    ParamVector g(theta.size(), 0.0);
    auto s = partition_.shared_view(theta);
    auto gs = partition_.shared_view(g);
    for (std::size_t r = 0; r < shared_dim_; ++r) {
        double row = 0.0;
        for (std::size_t c = 0; c < shared_dim_; ++c) {
            row += spec.matrix[r * shared_dim_ + c] * (s[c] - spec.center[c]);
        }
        gs[r] = row;
    }
    auto n = partition_.nonshared_view(theta, task);
    auto gn = partition_.nonshared_view(g, task);
    for (std::size_t j = 0; j < n.size(); ++j) {
        gn[j] = spec.head_curvature * (n[j] - spec.head_target[j]);
    }
    return g;
}

TwoValleyProblem::Config TwoValleyProblem::Config::defaults() {
    Config cfg;
    cfg.wide_centers = {{2.0, 0.3}, {2.0, -0.3}};
    cfg.narrow_centers = {{-2.0, 0.0}, {-2.0, 0.0}};
    return cfg;
}

TwoValleyProblem::TwoValleyProblem(Config cfg)
    : cfg_(std::move(cfg)),
      amplitude_(0.0),
      partition_(ParamPartition::contiguous(cfg_.shared_dim,
                                            head_dims(cfg_.task_count, cfg_.head_dim))) {
    if (cfg_.narrow_curvature <= cfg_.wide_curvature) {
        throw std::invalid_argument("TwoValleyProblem: narrow_curvature must exceed wide_curvature");
    }
    if (cfg_.narrow_radius <= 0.0 || cfg_.wide_curvature <= 0.0 || cfg_.floor < 0.0) {
        throw std::invalid_argument("TwoValleyProblem: bad curvature/radius/floor");
    }
    if (cfg_.wide_centers.size() != cfg_.task_count ||
        cfg_.narrow_centers.size() != cfg_.task_count) {
        throw std::invalid_argument("TwoValleyProblem: need one wide and one narrow center per task");
    }
    // Dip depth that realizes the requested curvature at the narrow center:
    // the bump contributes 2*An/rn^2 to every shared diagonal entry.
    amplitude_ = 0.5 * (cfg_.narrow_curvature - cfg_.wide_curvature) *
                 cfg_.narrow_radius * cfg_.narrow_radius;

    for (std::size_t i = 0; i < cfg_.task_count; ++i) {
        if (cfg_.wide_centers[i].size() != cfg_.shared_dim ||
            cfg_.narrow_centers[i].size() != cfg_.shared_dim) {
            throw std::invalid_argument("TwoValleyProblem: center dim mismatch");
        }
        double dist2 = 0.0;
        for (std::size_t j = 0; j < cfg_.shared_dim; ++j) {
            const double d = cfg_.wide_centers[i][j] - cfg_.narrow_centers[i][j];
            dist2 += d * d;
        }
        const double dist = std::sqrt(dist2);
        if (dist <= cfg_.narrow_radius) {
            throw std::invalid_argument("TwoValleyProblem: valleys overlap");
        }
        // Keep the wide bottom the global minimum (loss >= floor everywhere).
        const double quad_min_on_support =
            0.5 * cfg_.wide_curvature * (dist - cfg_.narrow_radius) * (dist - cfg_.narrow_radius);
        if (amplitude_ > quad_min_on_support) {
            throw std::invalid_argument("TwoValleyProblem: dip depth " +
                                        std::to_string(amplitude_) +
                                        " would undercut the floor; move valleys apart");
        }
        // The dip must out-pull the quadratic slope across its support, else
        // the narrow valley is not a local minimum.
        const double max_pull = amplitude_ * max_abs_bump_deriv() / cfg_.narrow_radius;
        const double max_slope = cfg_.wide_curvature * (dist + cfg_.narrow_radius);
        if (max_pull <= max_slope) {
            throw std::invalid_argument("TwoValleyProblem: narrow valley too shallow to trap "
                                        "(raise narrow_curvature or shrink the center gap)");
        }
    }
    if (cfg_.init_center.empty()) {
        cfg_.init_center = cfg_.narrow_centers[0];
    }
    if (cfg_.init_center.size() != cfg_.shared_dim) {
        throw std::invalid_argument("TwoValleyProblem: init_center dim mismatch");
    }
}

ParamVector TwoValleyProblem::initial_params(SeededRng& rng) const {
    ParamVector theta(partition_.total_length(), 0.0);
    auto s = partition_.shared_view(theta);
    const double radius = cfg_.init_radius * rng.next_double();
    auto dir = sphere_direction(rng, cfg_.shared_dim, radius);
    for (std::size_t j = 0; j < cfg_.shared_dim; ++j) {
        s[j] = cfg_.init_center[j] + dir[j];
    }
    for (std::size_t i = 0; i < cfg_.task_count; ++i) {
        auto n = partition_.nonshared_view(theta, i);
        for (auto& x : n) x = rng.uniform(-0.5, 0.5);
    }
    return theta;
}

double TwoValleyProblem::do_task_loss(std::size_t task, const ParamVector& theta,
                                      const Batch&) const {
    auto s = partition_.shared_view(theta);
    const auto& wide = cfg_.wide_centers[task];
    const auto& narrow = cfg_.narrow_centers[task];
    double quad = 0.0;
    double dist2 = 0.0;
    for (std::size_t j = 0; j < cfg_.shared_dim; ++j) {
        const double dw = s[j] - wide[j];
        quad += dw * dw;
        const double dn = s[j] - narrow[j];
        dist2 += dn * dn;
    }
    double loss = cfg_.floor + 0.5 * cfg_.wide_curvature * quad -
                  amplitude_ * bump(std::sqrt(dist2) / cfg_.narrow_radius);
    auto n = partition_.nonshared_view(theta, task);
    const double target = task % 2 == 0 ? 1.0 : -1.0;
    for (double x : n) {
        loss += 0.5 * cfg_.head_curvature * (x - target) * (x - target);
    }
    return loss;
}

ParamVector TwoValleyProblem::do_task_grad(std::size_t task, const ParamVector& theta,
                                           const Batch&) const {
    ParamVector g(theta.size(), 0.0);
    auto s = partition_.shared_view(theta);
    auto gs = partition_.shared_view(g);
    const auto& wide = cfg_.wide_centers[task];
    const auto& narrow = cfg_.narrow_centers[task];
    double dist2 = 0.0;
    for (std::size_t j = 0; j < cfg_.shared_dim; ++j) {
        const double dn = s[j] - narrow[j];
        dist2 += dn * dn;
    }
    const double dist = std::sqrt(dist2);
    const double t = dist / cfg_.narrow_radius;
    double radial = 0.0;
    if (t < 1.0 && dist > 1e-300) {
        radial = -amplitude_ * bump_deriv(t) / (cfg_.narrow_radius * dist);
    }
    for (std::size_t j = 0; j < cfg_.shared_dim; ++j) {
        gs[j] = cfg_.wide_curvature * (s[j] - wide[j]) + radial * (s[j] - narrow[j]);
    }
    auto n = partition_.nonshared_view(theta, task);
    auto gn = partition_.nonshared_view(g, task);
    const double target = task % 2 == 0 ? 1.0 : -1.0;
    for (std::size_t j = 0; j < n.size(); ++j) {
        gn[j] = cfg_.head_curvature * (n[j] - target);
    }
    return g;
}

double TwoValleyProblem::wide_valley_sharpness(double rho) const {
    const double lambda_max = std::max(cfg_.wide_curvature, cfg_.head_curvature);
    return 0.5 * rho * rho * lambda_max;
}

double TwoValleyProblem::narrow_valley_sharpness(double rho) const {
    const double lambda_max = std::max(cfg_.narrow_curvature, cfg_.head_curvature);
    return 0.5 * rho * rho * lambda_max;
}

double TwoValleyProblem::hessian_trace_wide() const {
    return static_cast<double>(cfg_.shared_dim) * cfg_.wide_curvature +
           static_cast<double>(cfg_.head_dim) * cfg_.head_curvature;
}

double TwoValleyProblem::hessian_trace_narrow() const {
    return static_cast<double>(cfg_.shared_dim) * cfg_.narrow_curvature +
           static_cast<double>(cfg_.head_dim) * cfg_.head_curvature;
}

} // namespace flatmtl
