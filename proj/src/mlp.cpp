#include "flatmtl/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace flatmtl {

namespace {

std::size_t trunk_param_count(const std::vector<std::size_t>& dims) {
    std::size_t n = 0;
    for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
        n += dims[k + 1] * dims[k] + dims[k + 1];
    }
    return n;
}

} // namespace

MlpProblem::MlpProblem(Spec spec)
    : spec_(std::move(spec)),
      trunk_dims_([&] {
          std::vector<std::size_t> dims{spec_.input_dim};
          dims.insert(dims.end(), spec_.hidden.begin(), spec_.hidden.end());
          return dims;
      }()),
      trunk_out_(trunk_dims_.back()),
      partition_(ParamPartition::contiguous(trunk_param_count(trunk_dims_), [&] {
          std::vector<std::size_t> dims;
          for (std::size_t c : spec_.classes_per_task) {
              dims.push_back(c * trunk_out_ + c);
          }
          return dims;
      }())) {
    if (spec_.input_dim == 0 || spec_.hidden.empty() || spec_.classes_per_task.empty()) {
        throw std::invalid_argument("MlpProblem: need input dim, >=1 hidden layer, >=1 task");
    }
    for (std::size_t c : spec_.classes_per_task) {
        if (c < 2) throw std::invalid_argument("MlpProblem: each task needs >=2 classes");
    }
    std::size_t off = 0;
    for (std::size_t k = 0; k + 1 < trunk_dims_.size(); ++k) {
        layer_offsets_.push_back(off);
        const std::size_t len = trunk_dims_[k + 1] * trunk_dims_[k] + trunk_dims_[k + 1];
        groups_.push_back(IndexRange{off, off + len});
        off += len;
    }
    for (std::size_t i = 0; i < spec_.classes_per_task.size(); ++i) {
        groups_.push_back(partition_.nonshared_range(i));
    }
}

ParamVector MlpProblem::initial_params(SeededRng& rng) const {
    ParamVector theta(partition_.total_length(), 0.0);
    auto fill = [&](std::size_t begin, std::size_t rows, std::size_t cols) {
        const double scale = spec_.init_scale / std::sqrt(static_cast<double>(cols));
        for (std::size_t j = 0; j < rows * cols; ++j) {
            theta[begin + j] = scale * rng.normal();
        }
        // biases (the trailing `rows` entries) stay zero
    };
    std::size_t off = 0;
    for (std::size_t k = 0; k + 1 < trunk_dims_.size(); ++k) {
        fill(off, trunk_dims_[k + 1], trunk_dims_[k]);
        off += trunk_dims_[k + 1] * trunk_dims_[k] + trunk_dims_[k + 1];
    }
    for (std::size_t i = 0; i < spec_.classes_per_task.size(); ++i) {
        const auto& r = partition_.nonshared_range(i);
        fill(r.begin, spec_.classes_per_task[i], trunk_out_);
    }
    return theta;
}

MlpProblem::Forward MlpProblem::forward(std::size_t task, const ParamVector& theta,
                                        const Batch& batch) const {
    const std::size_t rows = batch.rows;
    Forward fw;
    fw.activations.resize(trunk_dims_.size());
    fw.activations[0] = batch.inputs;

    const double* shared = theta.data() + partition_.shared_range().begin;
    for (std::size_t k = 0; k + 1 < trunk_dims_.size(); ++k) {
        const std::size_t in = trunk_dims_[k];
        const std::size_t out = trunk_dims_[k + 1];
        const double* w = shared + layer_offsets_[k];
        const double* b = w + out * in;
        auto& prev = fw.activations[k];
        auto& next = fw.activations[k + 1];
        next.assign(rows * out, 0.0);
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t o = 0; o < out; ++o) {
                double z = b[o];
                const double* wrow = w + o * in;
                const double* x = prev.data() + r * in;
                for (std::size_t j = 0; j < in; ++j) z += wrow[j] * x[j];
                next[r * out + o] = std::tanh(z);
            }
        }
    }

    const std::size_t classes = spec_.classes_per_task[task];
    const auto& head_range = partition_.nonshared_range(task);
    const double* u = theta.data() + head_range.begin;
    const double* c = u + classes * trunk_out_;
    const auto& feats = fw.activations.back();

    fw.probs.assign(rows * classes, 0.0);
    double loss = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        double* p = fw.probs.data() + r * classes;
        double zmax = -1e300;
        for (std::size_t o = 0; o < classes; ++o) {
            double z = c[o];
            const double* urow = u + o * trunk_out_;
            const double* x = feats.data() + r * trunk_out_;
            for (std::size_t j = 0; j < trunk_out_; ++j) z += urow[j] * x[j];
            p[o] = z;
            zmax = std::max(zmax, z);
        }
        double denom = 0.0;
        for (std::size_t o = 0; o < classes; ++o) {
            p[o] = std::exp(p[o] - zmax);
            denom += p[o];
        }
        for (std::size_t o = 0; o < classes; ++o) p[o] /= denom;
        const int y = batch.labels[task][r];
        if (y < 0 || static_cast<std::size_t>(y) >= classes) {
            throw std::invalid_argument("MlpProblem: label out of range");
        }
        loss -= std::log(std::max(p[y], 1e-300));
    }
    fw.loss = rows > 0 ? loss / static_cast<double>(rows) : 0.0;
    return fw;
}

double MlpProblem::do_task_loss(std::size_t task, const ParamVector& theta,
                                const Batch& batch) const {
    if (batch.rows == 0) throw std::invalid_argument("MlpProblem: empty batch");
    return forward(task, theta, batch).loss;
}

ParamVector MlpProblem::do_task_grad(std::size_t task, const ParamVector& theta,
                                     const Batch& batch) const {
    if (batch.rows == 0) throw std::invalid_argument("MlpProblem: empty batch");
    const std::size_t rows = batch.rows;
    const std::size_t classes = spec_.classes_per_task[task];
    Forward fw = forward(task, theta, batch);

    ParamVector g(theta.size(), 0.0);
    const auto& head_range = partition_.nonshared_range(task);
    const double* u = theta.data() + head_range.begin;
    double* gu = g.data() + head_range.begin;
    double* gc = gu + classes * trunk_out_;
    const auto& feats = fw.activations.back();
    const double inv_rows = 1.0 / static_cast<double>(rows);

    // dL/dz for the softmax-CE head, then delta back through the trunk.
    std::vector<double> delta(rows * trunk_out_, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* p = fw.probs.data() + r * classes;
        const int y = batch.labels[task][r];
        const double* x = feats.data() + r * trunk_out_;
        for (std::size_t o = 0; o < classes; ++o) {
            const double dz = (p[o] - (static_cast<int>(o) == y ? 1.0 : 0.0)) * inv_rows;
            gc[o] += dz;
            double* gurow = gu + o * trunk_out_;
            const double* urow = u + o * trunk_out_;
            double* drow = delta.data() + r * trunk_out_;
            for (std::size_t j = 0; j < trunk_out_; ++j) {
                gurow[j] += dz * x[j];
                drow[j] += dz * urow[j];
            }
        }
    }

    double* gshared = g.data() + partition_.shared_range().begin;
    const double* shared = theta.data() + partition_.shared_range().begin;
    for (std::size_t k = trunk_dims_.size() - 1; k-- > 0;) {
        const std::size_t in = trunk_dims_[k];
        const std::size_t out = trunk_dims_[k + 1];
        const double* w = shared + layer_offsets_[k];
        double* gw = gshared + layer_offsets_[k];
        double* gb = gw + out * in;
        const auto& act = fw.activations[k + 1];
        const auto& prev = fw.activations[k];
        std::vector<double> prev_delta;
        if (k > 0) prev_delta.assign(rows * in, 0.0);
        for (std::size_t r = 0; r < rows; ++r) {
            const double* a = act.data() + r * out;
            const double* d = delta.data() + r * out;
            const double* x = prev.data() + r * in;
            for (std::size_t o = 0; o < out; ++o) {
                const double dpre = d[o] * (1.0 - a[o] * a[o]); // tanh'
                gb[o] += dpre;
                double* gwrow = gw + o * in;
                const double* wrow = w + o * in;
                if (k > 0) {
                    double* pd = prev_delta.data() + r * in;
                    for (std::size_t j = 0; j < in; ++j) {
                        gwrow[j] += dpre * x[j];
                        pd[j] += dpre * wrow[j];
                    }
                } else {
                    for (std::size_t j = 0; j < in; ++j) {
                        gwrow[j] += dpre * x[j];
                    }
                }
            }
        }
        delta = std::move(prev_delta);
    }
    return g;
}

double MlpProblem::task_accuracy(std::size_t task, const ParamVector& theta,
                                 const Batch& batch) const {
    check_args(task, theta, batch);
    if (batch.rows == 0) throw std::invalid_argument("MlpProblem: empty batch");
    Forward fw = forward(task, theta, batch);
    const std::size_t classes = spec_.classes_per_task[task];
    std::size_t correct = 0;
    for (std::size_t r = 0; r < batch.rows; ++r) {
        const double* p = fw.probs.data() + r * classes;
        std::size_t best = 0;
        for (std::size_t o = 1; o < classes; ++o) {
            if (p[o] > p[best]) best = o;
        }
        if (static_cast<int>(best) == batch.labels[task][r]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(batch.rows);
}

std::vector<double> MlpProblem::predict_probs(std::size_t task, const ParamVector& theta,
                                              const Batch& batch) const {
    check_args(task, theta, batch);
    return forward(task, theta, batch).probs;
}

} // namespace flatmtl
