#include <doctest.h>

#include "flatmtl/analytic_problems.hpp"
#include "flatmtl/mlp.hpp"
#include "flatmtl/synth_data.hpp"

#include <cmath>
#include <stdexcept>

using namespace flatmtl;

namespace {

// Central-difference gradient of one task's loss; the independent oracle for
// every hand-coded gradient in the models module.
ParamVector fd_gradient(const MultiTaskProblem& problem, std::size_t task,
                        const ParamVector& theta, const Batch& batch, double h = 1e-5) {
    ParamVector g(theta.size(), 0.0);
    ParamVector point = theta;
    for (std::size_t j = 0; j < theta.size(); ++j) {
        point[j] = theta[j] + h;
        const double up = problem.task_loss(task, point, batch);
        point[j] = theta[j] - h;
        const double down = problem.task_loss(task, point, batch);
        point[j] = theta[j];
        g[j] = (up - down) / (2.0 * h);
    }
    return g;
}

double max_rel_error(const ParamVector& analytic, const ParamVector& fd) {
    double worst = 0.0;
    for (std::size_t j = 0; j < analytic.size(); ++j) {
        const double err = std::abs(analytic[j] - fd[j]) / (std::abs(analytic[j]) + 1e-8);
        worst = std::max(worst, err);
    }
    return worst;
}

QuadraticProblem simple_quadratic() {
    // L(theta) = 0.5 ||theta||^2 with shared dim 1, one head dim 1
    QuadraticProblem::TaskSpec spec;
    spec.matrix = {1.0};
    spec.head_dim = 1;
    return QuadraticProblem(1, {spec});
}

} // namespace

TEST_CASE("quadratic problem matches hand arithmetic") {
    auto problem = simple_quadratic();
    Batch batch = Batch::empty(1);
    // L(theta)=0.5*||theta||^2 at [3,4] -> 12.5, gradient = theta
    ParamVector theta{3, 4};
    CHECK(problem.task_loss(0, theta, batch) == doctest::Approx(12.5).epsilon(1e-15));
    CHECK(problem.task_grad(0, theta, batch) == ParamVector{3, 4});
}

TEST_CASE("quadratic gradients match supplied matrices") {
    QuadraticProblem::TaskSpec t1;
    t1.matrix = {2.0, 0.5, 0.5, 1.0};
    QuadraticProblem::TaskSpec t2;
    t2.matrix = {1.0, 0.0, 0.0, 3.0};
    QuadraticProblem problem(2, {t1, t2});
    Batch batch = Batch::empty(2);
    ParamVector theta{1.0, -2.0, 0.0, 0.0};
    auto g0 = problem.task_grad(0, theta, batch);
    CHECK(g0[0] == doctest::Approx(2.0 * 1.0 + 0.5 * -2.0));
    CHECK(g0[1] == doctest::Approx(0.5 * 1.0 + 1.0 * -2.0));
    // task 0's gradient is exactly zero on task 1's block
    CHECK(g0[3] == 0.0);
    auto g1 = problem.task_grad(1, theta, batch);
    CHECK(g1[0] == doctest::Approx(1.0));
    CHECK(g1[1] == doctest::Approx(-6.0));
    CHECK(g1[2] == 0.0);
}

TEST_CASE("task index and length validation") {
    auto problem = simple_quadratic();
    Batch batch = Batch::empty(1);
    ParamVector theta{1, 2};
    CHECK_THROWS_AS(problem.task_loss(1, theta, batch), std::invalid_argument);
    CHECK_THROWS_AS(problem.task_loss(0, ParamVector{1}, batch), std::invalid_argument);
}

TEST_CASE("two-valley problem geometry") {
    TwoValleyProblem problem(TwoValleyProblem::Config::defaults());
    const auto& cfg = problem.config();
    Batch batch = Batch::empty(2);

    // at the wide valley center (with the head at its target) the loss is the
    // configured floor exactly and the gradient vanishes
    ParamVector theta(problem.partition().total_length(), 0.0);
    auto s = problem.partition().shared_view(theta);
    for (std::size_t j = 0; j < s.size(); ++j) s[j] = cfg.wide_centers[0][j];
    problem.partition().nonshared_view(theta, 0)[0] = 1.0;  // task 0 head target
    problem.partition().nonshared_view(theta, 1)[0] = -1.0; // task 1 head target
    CHECK(problem.task_loss(0, theta, batch) == doctest::Approx(cfg.floor).epsilon(1e-14));
    auto g = problem.task_grad(0, theta, batch);
    CHECK(l2_norm(g) == doctest::Approx(0.0).epsilon(1e-14));

    // narrow valley is strictly sharper
    CHECK(problem.hessian_trace_narrow() > problem.hessian_trace_wide());
    CHECK(problem.narrow_valley_sharpness(0.1) > problem.wide_valley_sharpness(0.1));

    // gradient matches finite differences at random points
    SeededRng rng(17);
    for (int trial = 0; trial < 10; ++trial) {
        ParamVector point = problem.initial_params(rng);
        for (auto& x : point) x += 0.3 * rng.normal();
        for (std::size_t task = 0; task < 2; ++task) {
            auto analytic = problem.task_grad(task, point, batch);
            auto fd = fd_gradient(problem, task, point, batch);
            CHECK(max_rel_error(analytic, fd) < 1e-4);
        }
    }
}

TEST_CASE("two-valley: perturbing the other task's head does not change the loss") {
    TwoValleyProblem problem(TwoValleyProblem::Config::defaults());
    Batch batch = Batch::empty(2);
    SeededRng rng(3);
    ParamVector theta = problem.initial_params(rng);
    const double base = problem.task_loss(0, theta, batch);
    problem.partition().nonshared_view(theta, 1)[0] += 17.0;
    CHECK(problem.task_loss(0, theta, batch) == base);
}

TEST_CASE("two-valley rejects non-trapping parameterizations") {
    auto cfg = TwoValleyProblem::Config::defaults();
    cfg.narrow_curvature = 1.5; // far too shallow to hold against the quadratic pull
    CHECK_THROWS_AS((void)TwoValleyProblem(cfg), std::invalid_argument);
}

TEST_CASE("mlp: uniform softmax at zero weights") {
    MlpProblem::Spec spec;
    spec.input_dim = 4;
    spec.hidden = {8};
    spec.classes_per_task = {10, 10};
    MlpProblem problem(spec);
    ParamVector theta(problem.partition().total_length(), 0.0);

    Batch batch;
    batch.rows = 20;
    batch.features = 4;
    batch.inputs.assign(batch.rows * batch.features, 0.5);
    batch.labels.assign(2, std::vector<int>(batch.rows));
    for (std::size_t r = 0; r < batch.rows; ++r) {
        batch.labels[0][r] = static_cast<int>(r % 10);
        batch.labels[1][r] = static_cast<int>((r * 3) % 10);
    }
    CHECK(problem.task_loss(0, theta, batch) == doctest::Approx(std::log(10.0)).epsilon(1e-12));
    CHECK(problem.task_loss(1, theta, batch) == doctest::Approx(std::log(10.0)).epsilon(1e-12));
}

TEST_CASE("mlp backprop matches central finite differences") {
    SeededRng rng(2024);
    for (int trial = 0; trial < 4; ++trial) {
        MlpProblem::Spec spec;
        spec.input_dim = 3 + rng.uniform_index(3);
        spec.hidden = {4 + rng.uniform_index(4), 3 + rng.uniform_index(3)};
        spec.classes_per_task = {2 + rng.uniform_index(2), 2 + rng.uniform_index(3)};
        MlpProblem problem(spec);
        REQUIRE(problem.partition().total_length() <= 200);

        ParamVector theta = problem.initial_params(rng);
        Batch batch;
        batch.rows = 6;
        batch.features = spec.input_dim;
        batch.inputs.resize(batch.rows * batch.features);
        for (auto& x : batch.inputs) x = rng.normal();
        batch.labels.resize(2);
        for (std::size_t t = 0; t < 2; ++t) {
            batch.labels[t].resize(batch.rows);
            for (auto& y : batch.labels[t]) {
                y = static_cast<int>(rng.uniform_index(spec.classes_per_task[t]));
            }
        }
        for (std::size_t task = 0; task < 2; ++task) {
            auto analytic = problem.task_grad(task, theta, batch);
            auto fd = fd_gradient(problem, task, theta, batch);
            CHECK(max_rel_error(analytic, fd) < 1e-4);
            // other task's head untouched
            const auto& other = problem.partition().nonshared_range(1 - task);
            for (std::size_t j = other.begin; j < other.end; ++j) {
                REQUIRE(analytic[j] == 0.0);
            }
        }
    }
}

TEST_CASE("synthetic generator: determinism and separability") {
    SynthConfig cfg;
    cfg.samples = 200;
    cfg.noise = 0.0;
    {
        SeededRng r1(11), r2(11);
        auto [a, meta_a] = synth_two_task_classification(r1, cfg);
        auto [b, meta_b] = synth_two_task_classification(r2, cfg);
        CHECK(a.train_set().inputs == b.train_set().inputs);
        CHECK(a.train_set().labels == b.train_set().labels);
    }
    // noise=0 is linearly separable: a linear probe (logistic regression via
    // gradient descent) reaches 100% train accuracy on each task
    SeededRng rng(11);
    auto [source, meta] = synth_two_task_classification(rng, cfg);
    const Batch& train = source.train_set();
    for (std::size_t task = 0; task < 2; ++task) {
        std::vector<double> w(train.features + 1, 0.0);
        for (int iter = 0; iter < 500; ++iter) {
            std::vector<double> grad(w.size(), 0.0);
            for (std::size_t r = 0; r < train.rows; ++r) {
                double z = w.back();
                for (std::size_t f = 0; f < train.features; ++f) {
                    z += w[f] * train.inputs[r * train.features + f];
                }
                const double p = 1.0 / (1.0 + std::exp(-z));
                const double err = p - train.labels[task][r];
                for (std::size_t f = 0; f < train.features; ++f) {
                    grad[f] += err * train.inputs[r * train.features + f];
                }
                grad.back() += err;
            }
            for (std::size_t j = 0; j < w.size(); ++j) {
                w[j] -= 0.5 / static_cast<double>(train.rows) * grad[j];
            }
        }
        std::size_t correct = 0;
        for (std::size_t r = 0; r < train.rows; ++r) {
            double z = w.back();
            for (std::size_t f = 0; f < train.features; ++f) {
                z += w[f] * train.inputs[r * train.features + f];
            }
            if ((z > 0.0) == (train.labels[task][r] == 1)) ++correct;
        }
        CHECK(correct == train.rows);
    }
    // n=0 rejected
    SynthConfig bad;
    bad.samples = 0;
    CHECK_THROWS_AS(synth_two_task_classification(rng, bad), std::invalid_argument);
}
