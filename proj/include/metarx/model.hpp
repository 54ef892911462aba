#pragma once

#include <span>
#include <stdexcept>
#include <vector>

#include "metarx/channel.hpp"
#include "metarx/linalg.hpp"

namespace metarx {

enum class TaskKind { Demod, Equalize };

// Fully-connected feed-forward network layout. Parameters are flattened
// layer by layer as [W1 (row-major), b1, W2, b2, ...].
struct ModelShape {
    int input = 2;
    std::vector<int> hidden;
    int output = 16;
    bool bias = true;
    bool relu_hidden = true;

    static ModelShape demodulator() { return {2, {10, 30, 30}, 16, true, true}; }
    static ModelShape equalizer() { return {2, {}, 1, false, false}; }

    int param_count() const {
        int d = 0, prev = input;
        for (int h : hidden) {
            d += prev * h + (bias ? h : 0);
            prev = h;
        }
        d += prev * output + (bias ? output : 0);
        return d;
    }

    bool operator==(const ModelShape&) const = default;
};

struct ModelParams {
    Eigen::VectorXd theta;
    ModelShape shape;
};

// Forward pass producing the last linear layer's outputs (logits for the
// demodulator, the scalar estimate for the equalizer). Works on doubles and
// on tape nodes alike.
template <class S>
Vec<S> model_logits(std::span<const S> theta, const ModelShape& shape, const Eigen::Vector2d& y) {
    if (static_cast<int>(theta.size()) != shape.param_count())
        throw std::invalid_argument("model_logits: parameter count mismatch");
    Vec<S> h(2);
    h[0] = S(y[0]);
    h[1] = S(y[1]);
    std::size_t off = 0;
    std::vector<int> widths(shape.hidden);
    widths.push_back(shape.output);
    for (std::size_t l = 0; l < widths.size(); ++l) {
        const int in_dim = static_cast<int>(h.size());
        const int out_dim = widths[l];
        const bool last = (l + 1 == widths.size());
        Vec<S> next(out_dim);
        const std::size_t w_off = off;
        const std::size_t b_off = off + static_cast<std::size_t>(in_dim) * out_dim;
        for (int j = 0; j < out_dim; ++j) {
            S z = dot(theta.subspan(w_off + static_cast<std::size_t>(j) * in_dim,
                                    static_cast<std::size_t>(in_dim)),
                      as_span(h));
            if (shape.bias) z = z + theta[b_off + static_cast<std::size_t>(j)];
            next[j] = (!last && shape.relu_hidden) ? relu(z) : z;
        }
        off = b_off + (shape.bias ? static_cast<std::size_t>(out_dim) : 0);
        h = std::move(next);
    }
    return h;
}

inline Eigen::VectorXd mlp_logits(const Eigen::Vector2d& y, const ModelParams& params) {
    return model_logits<double>(as_span<double>(params.theta), params.shape, y);
}

// softmax over logits via max-shifted logsumexp
template <class S>
Vec<S> softmax_probs(const Vec<S>& logits) {
    S lse = logsumexp(logits);
    Vec<S> p(logits.size());
    using std::exp;
    using ad::exp;
    for (Eigen::Index i = 0; i < logits.size(); ++i) p[i] = exp(logits[i] - lse);
    return p;
}

inline Eigen::VectorXd demod_probs(const Eigen::Vector2d& y, const ModelParams& params) {
    return softmax_probs(mlp_logits(y, params));
}

// log N(x | pred, 1/beta)
template <class S>
S gaussian_logdensity(const S& pred, double x, double beta) {
    if (beta <= 0) throw std::invalid_argument("gaussian_logdensity: beta must be positive");
    S r = S(x) - pred;
    return S(0.5 * std::log(beta / (2.0 * M_PI))) + (r * r) * S(-0.5 * beta);
}

inline double equalizer_logdensity(double x, const Eigen::Vector2d& y, const ModelParams& params,
                                   double beta) {
    const double pred = params.theta.dot(y);
    return gaussian_logdensity(pred, x, beta);
}

template <class S>
S cross_entropy(const Vec<S>& logits, int truth) {
    return logsumexp(logits) - logits[truth];
}

// Task context: which likelihood the model realizes and how symbols map to
// regression targets.
struct TaskModel {
    TaskKind kind;
    ModelShape shape;
    Constellation constellation;
    double beta = 150.0;  // equalizer precision

    static TaskModel demod() {
        return {TaskKind::Demod, ModelShape::demodulator(), Constellation::qam16(), 0.0};
    }
    static TaskModel equalizer(double beta = 150.0) {
        return {TaskKind::Equalize, ModelShape::equalizer(), Constellation::pam4(), beta};
    }

    int dim() const { return shape.param_count(); }

    // negative log-likelihood of one sample
    template <class S>
    S sample_loss(std::span<const S> theta, const Sample& s) const {
        Vec<S> out = model_logits(theta, shape, s.y);
        if (kind == TaskKind::Demod) return cross_entropy(out, s.x_idx);
        return S(0.0) - gaussian_logdensity(out[0], constellation.amplitude(s.x_idx), beta);
    }
};

// Training log-loss: -(1/N) sum_i log p(x_i | y_i, theta).
template <class S>
S train_log_loss(const std::vector<Sample>& data, std::span<const S> theta,
                 const TaskModel& task) {
    if (data.empty()) throw std::invalid_argument("train_log_loss: empty dataset");
    std::vector<S> losses;
    losses.reserve(data.size());
    for (const Sample& s : data) losses.push_back(task.sample_loss(theta, s));
    S total = sum(std::span<const S>(losses.data(), losses.size()));
    return total * S(1.0 / static_cast<double>(data.size()));
}

inline double train_log_loss(const std::vector<Sample>& data, const ModelParams& params,
                             const TaskModel& task) {
    return train_log_loss<double>(data, as_span<double>(params.theta), task);
}

}  // namespace metarx
