#include "flatmtl/analysis.hpp"

#include "flatmtl/errors.hpp"
#include "flatmtl/perturb.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace flatmtl {

namespace {

ParamVector displaced(const ParamVector& theta, std::span<const double> eps) {
    ParamVector out = theta;
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += eps[j];
    return out;
}

void clip_to_ball(std::vector<double>& eps, double rho) {
    const double norm = l2_norm(eps);
    if (norm > rho) {
        const double s = rho / norm;
        for (auto& e : eps) e *= s;
    }
}

} // namespace

SharpnessEntry rho_sharpness(const MultiTaskProblem& problem, std::size_t task,
                             const ParamVector& theta, double rho, const Batch& batch,
                             const SharpnessBudget& budget, SeededRng& rng) {
    if (rho < 0.0) throw std::invalid_argument("rho_sharpness: rho must be >= 0");
    SharpnessEntry entry;
    entry.rho = rho;
    entry.base_loss = problem.task_loss(task, theta, batch);
    entry.worst_loss = entry.base_loss; // eps = 0 is always a candidate
    if (rho == 0.0) {
        entry.single_step_sharpness = 0.0;
        return entry;
    }

    const std::size_t dim = theta.size();
    auto consider = [&](const std::vector<double>& eps) {
        const double loss = problem.task_loss(task, displaced(theta, eps), batch);
        ++entry.samples;
        entry.worst_loss = std::max(entry.worst_loss, loss);
        return loss;
    };

    auto ascend = [&](std::vector<double> eps) {
        consider(eps);
        for (std::size_t it = 0; it < budget.ascent_steps; ++it) {
            ParamVector g = problem.task_grad(task, displaced(theta, eps), batch);
            const double gnorm = l2_norm(g);
            if (gnorm < 1e-14) break;
            const double step = budget.step_fraction * rho / gnorm;
            for (std::size_t j = 0; j < dim; ++j) eps[j] += step * g[j];
            clip_to_ball(eps, rho);
            consider(eps);
        }
    };

    // start 1: the normalized-gradient (single SAM step) direction
    ParamVector g0 = problem.task_grad(task, theta, batch);
    const double g0_norm = l2_norm(g0);
    std::vector<double> sam_eps(dim, 0.0);
    if (g0_norm > 1e-14) {
        for (std::size_t j = 0; j < dim; ++j) sam_eps[j] = rho * g0[j] / g0_norm;
    }
    entry.single_step_sharpness =
        problem.task_loss(task, displaced(theta, sam_eps), batch) - entry.base_loss;
    ++entry.samples;
    entry.worst_loss = std::max(entry.worst_loss, entry.single_step_sharpness + entry.base_loss);
    ascend(sam_eps);

    // restarts: uniform directions on the rho-sphere
    for (std::size_t r = 0; r < budget.restarts; ++r) {
        ascend(sphere_direction(rng, dim, rho));
    }

    entry.sharpness = entry.worst_loss - entry.base_loss;
    return entry;
}

std::vector<ProbeRow> robustness_probe(const MultiTaskProblem& problem, const ParamVector& theta,
                                       const std::vector<double>& radii,
                                       std::size_t samples_per_radius, SeededRng& rng,
                                       const Batch& eval_batch, bool shared_only) {
    if (samples_per_radius == 0) {
        throw std::invalid_argument("robustness_probe: samples_per_radius must be >= 1");
    }
    const std::size_t m = problem.task_count();
    const bool has_acc = problem.has_accuracy();
    const auto& part = problem.partition();

    std::vector<ProbeRow> rows;
    rows.reserve(radii.size());
    for (double r : radii) {
        if (r < 0.0) throw std::invalid_argument("robustness_probe: radius must be >= 0");
        ProbeRow row;
        row.radius = r;
        const std::size_t samples = r == 0.0 ? 1 : samples_per_radius;
        std::vector<std::vector<double>> losses(m), accs(m);
        for (std::size_t s = 0; s < samples; ++s) {
            ParamVector point = theta;
            if (r > 0.0) {
                if (shared_only) {
                    auto dir = sphere_direction(rng, part.shared_range().size(), r);
                    auto view = part.shared_view(point);
                    for (std::size_t j = 0; j < dir.size(); ++j) view[j] += dir[j];
                } else {
                    auto dir = sphere_direction(rng, theta.size(), r);
                    for (std::size_t j = 0; j < dir.size(); ++j) point[j] += dir[j];
                }
            }
            for (std::size_t i = 0; i < m; ++i) {
                losses[i].push_back(problem.task_loss(i, point, eval_batch));
                if (has_acc) accs[i].push_back(problem.task_accuracy(i, point, eval_batch));
            }
        }
        auto mean_std = [](const std::vector<double>& xs, double& mean, double& sd) {
            mean = 0.0;
            for (double x : xs) mean += x;
            mean /= static_cast<double>(xs.size());
            sd = 0.0;
            if (xs.size() > 1) {
                for (double x : xs) sd += (x - mean) * (x - mean);
                sd = std::sqrt(sd / static_cast<double>(xs.size() - 1));
            }
        };
        row.mean_loss.resize(m);
        row.std_loss.resize(m);
        if (has_acc) {
            row.mean_accuracy.resize(m);
            row.std_accuracy.resize(m);
        }
        for (std::size_t i = 0; i < m; ++i) {
            mean_std(losses[i], row.mean_loss[i], row.std_loss[i]);
            if (has_acc) mean_std(accs[i], row.mean_accuracy[i], row.std_accuracy[i]);
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

double SurfaceGrid::axis(std::size_t idx) const {
    if (resolution < 2) return 0.0;
    // anchored on the center index so 0 is always a grid point (exact center
    // cell); symmetric for odd resolutions, off by one step for even ones
    const std::size_t center = (resolution - 1) / 2;
    const double step = 2.0 * extent / static_cast<double>(resolution - 1);
    return step * (static_cast<double>(idx) - static_cast<double>(center));
}

SurfaceGrid loss_surface_grid(const MultiTaskProblem& problem, std::size_t task,
                              const ParamVector& theta, SeededRng& rng, double extent,
                              std::size_t resolution, const Batch& batch,
                              bool normalize_blocks) {
    if (resolution < 2) throw std::invalid_argument("loss_surface_grid: resolution must be >= 2");
    if (!(extent > 0.0)) throw std::invalid_argument("loss_surface_grid: extent must be > 0");
    const std::size_t dim = theta.size();

    SurfaceGrid grid;
    grid.resolution = resolution;
    grid.extent = extent;
    grid.dir1 = gaussian_direction(rng, dim);
    grid.dir2 = gaussian_direction(rng, dim);

    if (normalize_blocks) {
        // Per-block rescaling to the parameter norm, the usual convention for
        // making surface plots comparable across layers of different scale.
        for (auto* d : {&grid.dir1, &grid.dir2}) {
            for (const IndexRange& group : problem.param_groups()) {
                double dn = 0.0, tn = 0.0;
                for (std::size_t j = group.begin; j < group.end; ++j) {
                    dn += (*d)[j] * (*d)[j];
                    tn += theta[j] * theta[j];
                }
                dn = std::sqrt(dn);
                tn = std::sqrt(tn);
                const double s = dn > 1e-300 ? (tn > 0.0 ? tn / dn : 1.0 / dn) : 0.0;
                for (std::size_t j = group.begin; j < group.end; ++j) (*d)[j] *= s;
            }
        }
    }
    // exact orthogonality (the block rescale would spoil it if done after)
    const double d1n2 = dot(grid.dir1, grid.dir1);
    if (d1n2 > 0.0) {
        const double coef = dot(grid.dir2, grid.dir1) / d1n2;
        axpy_into(-coef, grid.dir1, grid.dir2);
    }

    grid.values.assign(resolution * resolution, 0.0);
    ParamVector point(dim);
    for (std::size_t ia = 0; ia < resolution; ++ia) {
        const double a = grid.axis(ia);
        for (std::size_t ib = 0; ib < resolution; ++ib) {
            const double b = grid.axis(ib);
            if (a == 0.0 && b == 0.0) {
                grid.values[ia * resolution + ib] = problem.task_loss(task, theta, batch);
                continue;
            }
            for (std::size_t j = 0; j < dim; ++j) {
                point[j] = theta[j] + a * grid.dir1[j] + b * grid.dir2[j];
            }
            grid.values[ia * resolution + ib] = problem.task_loss(task, point, batch);
        }
    }
    return grid;
}

double delta_m(const std::vector<double>& task_metrics,
               const std::vector<double>& single_task_baselines,
               const std::vector<bool>& lower_is_better) {
    const std::size_t m = task_metrics.size();
    if (m == 0 || single_task_baselines.size() != m || lower_is_better.size() != m) {
        throw std::invalid_argument("delta_m: need equal-length metrics, baselines and flags");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        if (single_task_baselines[i] == 0.0) {
            throw std::invalid_argument("delta_m: zero baseline for task " + std::to_string(i));
        }
        const double rel = (task_metrics[i] - single_task_baselines[i]) / single_task_baselines[i];
        // negative == improvement for both metric orientations
        acc += 100.0 * (lower_is_better[i] ? rel : -rel);
    }
    return acc / static_cast<double>(m);
}

namespace {

void check_probs(const std::vector<double>& probabilities, std::size_t classes,
                 const std::vector<int>& labels) {
    if (classes == 0) throw std::invalid_argument("probabilities: classes must be >= 1");
    if (labels.empty() || probabilities.size() != labels.size() * classes) {
        throw std::invalid_argument("probabilities: size must be N*classes with N = labels");
    }
    for (std::size_t r = 0; r < labels.size(); ++r) {
        double sum = 0.0;
        for (std::size_t c = 0; c < classes; ++c) {
            const double p = probabilities[r * classes + c];
            if (p < 0.0 || p > 1.0 || !std::isfinite(p)) {
                throw std::invalid_argument("probabilities: entry outside [0,1]");
            }
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-6) {
            throw std::invalid_argument("probabilities: row " + std::to_string(r) +
                                        " sums to " + std::to_string(sum));
        }
        if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= classes) {
            throw std::invalid_argument("probabilities: label out of range");
        }
    }
}

} // namespace

double brier_score(const std::vector<double>& probabilities, std::size_t classes,
                   const std::vector<int>& labels) {
    check_probs(probabilities, classes, labels);
    const std::size_t n = labels.size();
    double acc = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < classes; ++c) {
            const double target = static_cast<int>(c) == labels[r] ? 1.0 : 0.0;
            const double d = probabilities[r * classes + c] - target;
            acc += d * d;
        }
    }
    return acc / static_cast<double>(n);
}

double expected_calibration_error(const std::vector<double>& probabilities, std::size_t classes,
                                  const std::vector<int>& labels, std::size_t bins) {
    check_probs(probabilities, classes, labels);
    if (bins == 0) throw std::invalid_argument("ece: bins must be >= 1");
    const std::size_t n = labels.size();
    std::vector<double> conf_sum(bins, 0.0), acc_sum(bins, 0.0);
    std::vector<std::size_t> count(bins, 0);
    for (std::size_t r = 0; r < n; ++r) {
        const double* p = probabilities.data() + r * classes;
        std::size_t best = 0;
        for (std::size_t c = 1; c < classes; ++c) {
            if (p[c] > p[best]) best = c;
        }
        const double conf = p[best];
        // bins over (0, 1]: bin k covers (k/M, (k+1)/M]
        std::size_t bin = 0;
        if (conf > 0.0) {
            bin = static_cast<std::size_t>(std::ceil(conf * static_cast<double>(bins))) - 1;
            bin = std::min(bin, bins - 1);
        }
        conf_sum[bin] += conf;
        acc_sum[bin] += static_cast<int>(best) == labels[r] ? 1.0 : 0.0;
        ++count[bin];
    }
    double ece = 0.0;
    for (std::size_t k = 0; k < bins; ++k) {
        if (count[k] == 0) continue;
        const double nk = static_cast<double>(count[k]);
        ece += nk / static_cast<double>(n) * std::abs(acc_sum[k] / nk - conf_sum[k] / nk);
    }
    return ece;
}

double predictive_entropy(std::span<const double> probability_row, bool class_prefactor) {
    if (probability_row.empty()) {
        throw std::invalid_argument("predictive_entropy: empty row");
    }
    double acc = 0.0;
    for (double p : probability_row) {
        if (p < 0.0 || p > 1.0 + 1e-12 || !std::isfinite(p)) {
            throw std::invalid_argument("predictive_entropy: entry outside [0,1]");
        }
        if (p > 0.0) acc -= p * std::log(p);
    }
    if (class_prefactor) acc /= static_cast<double>(probability_row.size());
    return acc;
}

} // namespace flatmtl
