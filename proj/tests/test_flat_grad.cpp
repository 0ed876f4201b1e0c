#include <doctest.h>

#include "flatmtl/analytic_problems.hpp"
#include "flatmtl/perturb.hpp"

#include <cmath>
#include <stdexcept>

using namespace flatmtl;

namespace {

PerturbConfig cfg_with(double rho_sh, double rho_ns, bool adaptive = false) {
    PerturbConfig cfg;
    cfg.rho_shared = rho_sh;
    cfg.rho_nonshared = rho_ns;
    cfg.adaptive = adaptive;
    return cfg;
}

QuadraticProblem identity_quadratic(std::size_t shared_dim, std::size_t tasks) {
    std::vector<QuadraticProblem::TaskSpec> specs(tasks);
    for (auto& s : specs) {
        s.matrix.assign(shared_dim * shared_dim, 0.0);
        for (std::size_t j = 0; j < shared_dim; ++j) s.matrix[j * shared_dim + j] = 1.0;
        s.head_dim = 2;
    }
    return QuadraticProblem(shared_dim, std::move(specs));
}

} // namespace

TEST_CASE("worst_case_perturbation: normalization and floor guard") {
    PerturbConfig cfg = cfg_with(1.0, 1.0);
    std::vector<double> theta{0.0, 0.0};

    auto eps = worst_case_perturbation(std::vector<double>{3, 4}, 1.0, cfg, theta);
    CHECK(eps[0] == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(eps[1] == doctest::Approx(0.8).epsilon(1e-15));

    auto zero = worst_case_perturbation(std::vector<double>{0, 0}, 1.0, cfg, theta);
    CHECK(zero == std::vector<double>{0, 0});

    auto half = worst_case_perturbation(std::vector<double>{1, 1}, 0.5, cfg, theta);
    CHECK(half[0] == doctest::Approx(0.5 / std::sqrt(2.0)).epsilon(1e-12));
    CHECK(half[1] == doctest::Approx(0.5 / std::sqrt(2.0)).epsilon(1e-12));

    CHECK_THROWS_AS(worst_case_perturbation(std::vector<double>{1}, 0.0, cfg, theta),
                    std::invalid_argument);
}

TEST_CASE("worst_case_perturbation: adaptive mode constrains the transformed norm") {
    PerturbConfig cfg = cfg_with(0.7, 0.7, /*adaptive=*/true);
    std::vector<double> theta{2.0, -0.5, 0.0};
    std::vector<double> grad{1.0, 4.0, 2.0};
    auto eps = worst_case_perturbation(grad, 0.7, cfg, theta);
    // ||T^{-1} eps|| == rho with T = diag(|theta| + floor)
    double transformed = 0.0;
    for (std::size_t j = 0; j < eps.size(); ++j) {
        const double t = std::abs(theta[j]) + cfg.epsilon_floor;
        transformed += (eps[j] / t) * (eps[j] / t);
    }
    CHECK(std::sqrt(transformed) == doctest::Approx(0.7).epsilon(1e-9));
    // still an ascent direction
    double inner = 0.0;
    for (std::size_t j = 0; j < eps.size(); ++j) inner += eps[j] * grad[j];
    CHECK(inner > 0.0);
}

TEST_CASE("sam gradients on the quadratic: analytic chain") {
    // L(theta_sh) = 0.5 ||theta_sh||^2 (+ head terms); at theta_sh = [1, 0]
    // with rho = 1 the perturbation is [1, 0] and the gradient at the
    // perturbed point is [2, 0].
    auto problem = identity_quadratic(2, 1);
    Batch batch = Batch::empty(1);
    ParamVector theta{1.0, 0.0, 0.3, -0.2};

    auto full = problem.task_grad(0, theta, batch);
    std::vector<double> g_loss(full.begin(), full.begin() + 2);
    PerturbConfig cfg = cfg_with(1.0, 2.0);
    auto eps = worst_case_perturbation(g_loss, cfg.rho_shared, cfg,
                                       problem.partition().shared_view(theta));
    CHECK(eps == std::vector<double>{1.0, 0.0});
    auto g_sam = sam_shared_gradient(problem, 0, theta, eps, batch);
    CHECK(g_sam[0] == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(g_sam[1] == doctest::Approx(0.0).epsilon(1e-15));

    auto g_flat = decompose_flat(g_sam, g_loss);
    CHECK(g_flat[0] == doctest::Approx(1.0).epsilon(1e-15));
    // recomposition is bitwise
    for (std::size_t j = 0; j < g_flat.size(); ++j) {
        REQUIRE(g_loss[j] + g_flat[j] == g_sam[j]);
    }

    // non-shared side: gradient at theta_ns + eps_ns equals theta_ns + eps_ns
    // for this identity-curvature head
    std::vector<double> g_ns(full.begin() + 2, full.end());
    auto eps_ns = worst_case_perturbation(g_ns, cfg.rho_nonshared, cfg,
                                          problem.partition().nonshared_view(theta, 0));
    auto g_sam_ns = sam_nonshared_gradient(problem, 0, theta, eps_ns, batch);
    for (std::size_t j = 0; j < g_sam_ns.size(); ++j) {
        CHECK(g_sam_ns[j] == doctest::Approx(theta[2 + j] + eps_ns[j]).epsilon(1e-12));
    }
    // wrong-shape perturbation rejected
    CHECK_THROWS_AS(sam_nonshared_gradient(problem, 0, theta, std::vector<double>{1.0}, batch),
                    std::invalid_argument);
}

TEST_CASE("sam nonshared gradient: hand-computed example") {
    // head with curvature 1 toward 0: theta_ns = [0, 2], rho_ns = 2
    // -> eps = [0, 2], gradient at perturbed point = [0, 4]
    auto problem = identity_quadratic(2, 1);
    Batch batch = Batch::empty(1);
    ParamVector theta{0.5, 0.5, 0.0, 2.0};
    auto full = problem.task_grad(0, theta, batch);
    std::vector<double> g_ns(full.begin() + 2, full.end());
    PerturbConfig cfg = cfg_with(1.0, 2.0);
    auto eps_ns = worst_case_perturbation(g_ns, 2.0, cfg,
                                          problem.partition().nonshared_view(theta, 0));
    CHECK(eps_ns[0] == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(eps_ns[1] == doctest::Approx(2.0).epsilon(1e-15));
    auto g_sam_ns = sam_nonshared_gradient(problem, 0, theta, eps_ns, batch);
    CHECK(g_sam_ns[0] == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(g_sam_ns[1] == doctest::Approx(4.0).epsilon(1e-15));
}

TEST_CASE("sam gradient converges to the plain gradient as rho -> 0") {
    TwoValleyProblem problem(TwoValleyProblem::Config::defaults());
    Batch batch = Batch::empty(2);
    SeededRng rng(5);
    ParamVector theta = problem.initial_params(rng);

    auto full = problem.task_grad(0, theta, batch);
    const auto& part = problem.partition();
    std::vector<double> g_loss(full.begin() + part.shared_range().begin,
                               full.begin() + part.shared_range().end);
    PerturbConfig cfg = cfg_with(1e-8, 1e-8);
    auto eps = worst_case_perturbation(g_loss, cfg.rho_shared, cfg, part.shared_view(theta));
    auto g_sam = sam_shared_gradient(problem, 0, theta, eps, batch);
    for (std::size_t j = 0; j < g_sam.size(); ++j) {
        CHECK(std::abs(g_sam[j] - g_loss[j]) < 1e-6);
    }
    // pure function: same inputs, same outputs
    CHECK(g_sam == sam_shared_gradient(problem, 0, theta, eps, batch));
}

TEST_CASE("compute_bundle: invariants over random draws") {
    SeededRng rng(99);
    TwoValleyProblem tv(TwoValleyProblem::Config::defaults());
    auto quad = identity_quadratic(3, 2);
    Batch batch2 = Batch::empty(2);

    for (int trial = 0; trial < 200; ++trial) {
        const MultiTaskProblem& problem =
            trial % 2 == 0 ? static_cast<const MultiTaskProblem&>(tv)
                           : static_cast<const MultiTaskProblem&>(quad);
        ParamVector theta(problem.partition().total_length());
        for (auto& x : theta) x = rng.uniform(-3.0, 3.0);
        PerturbConfig cfg = cfg_with(rng.uniform(0.01, 2.0), rng.uniform(0.01, 2.0));
        auto bundle = compute_bundle(problem, theta, {batch2, batch2}, cfg);
        REQUIRE(bundle.tasks.size() == 2);
        for (const auto& task : bundle.tasks) {
            // decomposition identity, bitwise
            for (std::size_t j = 0; j < task.flat_shared.size(); ++j) {
                REQUIRE(task.loss_shared[j] + task.flat_shared[j] == task.sam_shared[j]);
            }
            // norm bound
            REQUIRE(l2_norm(task.eps_shared) <= cfg.rho_shared * (1.0 + 1e-9));
            REQUIRE(l2_norm(task.eps_nonshared) <= cfg.rho_nonshared * (1.0 + 1e-9));
        }
    }
}

TEST_CASE("compute_bundle: m=1 collapse and rho validation") {
    auto quad = identity_quadratic(2, 1);
    Batch batch = Batch::empty(1);
    ParamVector theta{1.0, 0.0, 0.1, 0.1};
    PerturbConfig cfg = cfg_with(1.0, 1.0);
    auto bundle = compute_bundle(quad, theta, {batch}, cfg);
    // single task + Mean aggregation means the downstream shared update is
    // exactly sam_shared = loss + flat
    CHECK(bundle.tasks[0].sam_shared[0] == doctest::Approx(2.0));

    PerturbConfig bad = cfg_with(0.0, 1.0);
    CHECK_THROWS_AS(compute_bundle(quad, theta, {batch}, bad), std::invalid_argument);
}

TEST_CASE("bundle is identical with 1 and 4 worker threads") {
    TwoValleyProblem tv(TwoValleyProblem::Config::defaults());
    Batch batch = Batch::empty(2);
    SeededRng rng(7);
    ParamVector theta = tv.initial_params(rng);
    PerturbConfig cfg = cfg_with(0.5, 0.5);
    auto seq = compute_bundle(tv, theta, {batch, batch}, cfg, 1);
    auto par = compute_bundle(tv, theta, {batch, batch}, cfg, 4);
    for (std::size_t i = 0; i < seq.tasks.size(); ++i) {
        REQUIRE(seq.tasks[i].sam_shared == par.tasks[i].sam_shared);
        REQUIRE(seq.tasks[i].sam_nonshared == par.tasks[i].sam_nonshared);
    }
}

TEST_CASE("first-order consistency: surrogate identity is exact on quadratics") {
    // On L = 0.5 s' A s the gradient of L + rho ||grad L|| coincides with the
    // one-step sam gradient exactly (both equal A s + rho A^2 s / ||A s||),
    // so the difference is pure rounding.
    SeededRng rng(31);
    const std::size_t d = 6;
    QuadraticProblem::TaskSpec spec;
    std::vector<double> base(d * d);
    for (auto& x : base) x = rng.normal();
    spec.matrix.assign(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            double acc = i == j ? 0.3 : 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                acc += base[k * d + i] * base[k * d + j] / static_cast<double>(d);
            }
            spec.matrix[i * d + j] = acc;
        }
    }
    QuadraticProblem problem(d, {spec});
    Batch batch = Batch::empty(1);
    ParamVector theta(problem.partition().total_length(), 0.0);
    auto sh = problem.partition().shared_view(theta);
    for (auto& x : sh) x = rng.normal();

    for (double rho : {1e-3, 1e-2}) {
        auto full = problem.task_grad(0, theta, batch);
        std::vector<double> g(full.begin(), full.begin() + d);
        PerturbConfig cfg = cfg_with(rho, rho);
        auto eps = worst_case_perturbation(g, rho, cfg, sh);
        auto g_sam = sam_shared_gradient(problem, 0, theta, eps, batch);

        // analytic gradient of the penalized objective: A s + rho A (A s)/||A s||
        const double gnorm = l2_norm(g);
        std::vector<double> expected(d, 0.0);
        for (std::size_t i = 0; i < d; ++i) {
            double Ag_i = 0.0;
            for (std::size_t j = 0; j < d; ++j) Ag_i += spec.matrix[i * d + j] * g[j];
            expected[i] = g[i] + rho * Ag_i / gnorm;
        }
        double err = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            err = std::max(err, std::abs(expected[i] - g_sam[i]));
        }
        CHECK(err < 1e-10);
    }
}

TEST_CASE("flat gradient ascends the gradient-norm surface") {
    // <g_flat, grad ||grad L||> >= 0 away from critical points; the
    // grad-norm gradient comes from central differences (independent route).
    TwoValleyProblem problem(TwoValleyProblem::Config::defaults());
    Batch batch = Batch::empty(2);
    const auto& part = problem.partition();
    const std::size_t d_sh = part.shared_range().size();
    SeededRng rng(123);
    PerturbConfig cfg = cfg_with(0.05, 0.05);

    std::size_t satisfied = 0, counted = 0;
    while (counted < 1000) {
        ParamVector theta(part.total_length());
        auto s = part.shared_view(theta);
        for (auto& x : s) x = rng.uniform(-3.0, 3.0);
        for (std::size_t i = 0; i < 2; ++i) {
            auto n = part.nonshared_view(theta, i);
            for (auto& x : n) x = rng.uniform(-2.0, 2.0);
        }
        const std::size_t task = rng.uniform_index(2);
        auto full = problem.task_grad(task, theta, batch);
        std::vector<double> g_loss(full.begin() + part.shared_range().begin,
                                   full.begin() + part.shared_range().end);
        if (l2_norm(g_loss) < 0.1) continue; // too close to a critical point
        ++counted;

        auto eps = worst_case_perturbation(g_loss, cfg.rho_shared, cfg, part.shared_view(theta));
        auto g_sam = sam_shared_gradient(problem, task, theta, eps, batch);
        auto g_flat = decompose_flat(g_sam, g_loss);

        // finite-difference gradient of s -> ||grad_sh L(s)|| over the shared block
        std::vector<double> norm_grad(d_sh, 0.0);
        const double h = 1e-6;
        for (std::size_t j = 0; j < d_sh; ++j) {
            ParamVector plus = theta, minus = theta;
            part.shared_view(plus)[j] += h;
            part.shared_view(minus)[j] -= h;
            auto gp = problem.task_grad(task, plus, batch);
            auto gm = problem.task_grad(task, minus, batch);
            const double np = l2_norm(
                std::span<const double>(gp.data() + part.shared_range().begin, d_sh));
            const double nm = l2_norm(
                std::span<const double>(gm.data() + part.shared_range().begin, d_sh));
            norm_grad[j] = (np - nm) / (2.0 * h);
        }
        double inner = 0.0;
        for (std::size_t j = 0; j < d_sh; ++j) inner += g_flat[j] * norm_grad[j];
        if (inner >= 0.0) ++satisfied;
    }
    CHECK(satisfied >= 950);
}
