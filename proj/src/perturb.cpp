#include "flatmtl/perturb.hpp"

#include "flatmtl/errors.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <stdexcept>
#include <thread>

namespace flatmtl {

void PerturbConfig::validate() const {
    if (!(rho_shared > 0.0) || !std::isfinite(rho_shared)) {
        throw std::invalid_argument("PerturbConfig: rho_shared must be finite and > 0");
    }
    if (!(rho_nonshared > 0.0) || !std::isfinite(rho_nonshared)) {
        throw std::invalid_argument("PerturbConfig: rho_nonshared must be finite and > 0");
    }
    if (!(epsilon_floor > 0.0)) {
        throw std::invalid_argument("PerturbConfig: epsilon_floor must be > 0");
    }
}

std::vector<double> worst_case_perturbation(std::span<const double> grad_block, double rho,
                                            const PerturbConfig& cfg,
                                            std::span<const double> theta_block) {
    if (!(rho > 0.0)) {
        throw std::invalid_argument("worst_case_perturbation: rho must be > 0");
    }
    std::vector<double> eps(grad_block.size());
    if (!cfg.adaptive) {
        const double norm = l2_norm(grad_block);
        const double scale = rho / std::max(norm, cfg.epsilon_floor);
        for (std::size_t j = 0; j < eps.size(); ++j) eps[j] = scale * grad_block[j];
        return eps;
    }
    if (theta_block.size() != grad_block.size()) {
        throw std::invalid_argument("worst_case_perturbation: theta block size mismatch");
    }
    double scaled_norm2 = 0.0;
    for (std::size_t j = 0; j < eps.size(); ++j) {
        const double t = std::abs(theta_block[j]) + cfg.epsilon_floor;
        eps[j] = t * t * grad_block[j];
        const double tg = t * grad_block[j];
        scaled_norm2 += tg * tg;
    }
    const double scale = rho / std::max(std::sqrt(scaled_norm2), cfg.epsilon_floor);
    for (auto& e : eps) e *= scale;
    return eps;
}

namespace {

std::vector<double> extract(std::span<const double> full, const IndexRange& r) {
    return std::vector<double>(full.begin() + r.begin, full.begin() + r.end);
}

} // namespace

std::vector<double> sam_shared_gradient(const MultiTaskProblem& problem, std::size_t task,
                                        const ParamVector& theta,
                                        std::span<const double> eps_shared,
                                        const Batch& batch) {
    const auto& part = problem.partition();
    if (eps_shared.size() != part.shared_range().size()) {
        throw std::invalid_argument("sam_shared_gradient: perturbation size does not match shared block");
    }
    ParamVector shifted = theta;
    auto s = part.shared_view(shifted);
    for (std::size_t j = 0; j < s.size(); ++j) s[j] += eps_shared[j];
    ParamVector g = problem.task_grad(task, shifted, batch);
    return extract(g, part.shared_range());
}

std::vector<double> sam_nonshared_gradient(const MultiTaskProblem& problem, std::size_t task,
                                           const ParamVector& theta,
                                           std::span<const double> eps_nonshared,
                                           const Batch& batch) {
    const auto& part = problem.partition();
    if (task >= part.task_count()) {
        throw std::invalid_argument("sam_nonshared_gradient: task out of range");
    }
    if (eps_nonshared.size() != part.nonshared_range(task).size()) {
        throw std::invalid_argument("sam_nonshared_gradient: perturbation size does not match task block");
    }
    ParamVector shifted = theta;
    auto n = part.nonshared_view(shifted, task);
    for (std::size_t j = 0; j < n.size(); ++j) n[j] += eps_nonshared[j];
    ParamVector g = problem.task_grad(task, shifted, batch);
    return extract(g, part.nonshared_range(task));
}

std::vector<double> decompose_flat(std::span<const double> sam_shared,
                                   std::span<const double> loss_shared) {
    if (sam_shared.size() != loss_shared.size()) {
        throw std::invalid_argument("decompose_flat: length mismatch");
    }
    std::vector<double> flat(sam_shared.size());
    for (std::size_t j = 0; j < flat.size(); ++j) {
        flat[j] = sam_shared[j] - loss_shared[j];
    }
    return flat;
}

TaskGradientBundle compute_bundle(const MultiTaskProblem& problem, const ParamVector& theta,
                                  const std::vector<Batch>& per_task_batches,
                                  const PerturbConfig& cfg, std::size_t threads) {
    cfg.validate();
    const std::size_t m = problem.task_count();
    if (per_task_batches.size() != m) {
        throw std::invalid_argument("compute_bundle: need one batch per task");
    }
    const auto& part = problem.partition();
    part.require_matches(theta);

    TaskGradientBundle bundle;
    bundle.tasks.resize(m);

    auto run_task = [&](std::size_t i) {
        const Batch& batch = per_task_batches[i];
        TaskGradients& tg = bundle.tasks[i];

        ParamVector full = problem.task_grad(i, theta, batch);
        tg.loss_shared = extract(full, part.shared_range());
        tg.plain_nonshared = extract(full, part.nonshared_range(i));

        tg.eps_shared = worst_case_perturbation(tg.loss_shared, cfg.rho_shared, cfg,
                                                part.shared_view(theta));
        tg.eps_nonshared = worst_case_perturbation(tg.plain_nonshared, cfg.rho_nonshared, cfg,
                                                   part.nonshared_view(theta, i));

        tg.sam_shared = sam_shared_gradient(problem, i, theta, tg.eps_shared, batch);
        tg.sam_nonshared = sam_nonshared_gradient(problem, i, theta, tg.eps_nonshared, batch);
        tg.flat_shared = decompose_flat(tg.sam_shared, tg.loss_shared);
        // Store the sam gradient as the exact recomposition loss + flat so the
        // decomposition identity is bitwise. This can differ from the raw
        // perturbed-point gradient by one ulp where the subtraction rounded.
        for (std::size_t j = 0; j < tg.sam_shared.size(); ++j) {
            tg.sam_shared[j] = tg.loss_shared[j] + tg.flat_shared[j];
        }
    };

    const std::size_t workers = std::max<std::size_t>(1, std::min(threads, m));
    if (workers == 1) {
        for (std::size_t i = 0; i < m; ++i) run_task(i);
    } else {
        // Tasks are independent pure evaluations; a static split keeps the
        // result identical to the sequential order.
        std::exception_ptr first_error;
        std::mutex error_mutex;
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                for (std::size_t i = w; i < m; i += workers) {
                    try {
                        run_task(i);
                    } catch (...) {
                        std::lock_guard<std::mutex> lock(error_mutex);
                        if (!first_error) first_error = std::current_exception();
                    }
                }
            });
        }
        for (auto& t : pool) t.join();
        if (first_error) std::rethrow_exception(first_error);
    }
    return bundle;
}

} // namespace flatmtl
