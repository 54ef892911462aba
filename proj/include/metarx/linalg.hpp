#pragma once

#include <Eigen/Dense>
#include <span>

#include "metarx/autodiff.hpp"

namespace metarx {

using ad::relu;  // double and Var overloads

template <class S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

// Free-function kernels with a fast double path and a fused-node Var path.

inline double dot(std::span<const double> a, std::span<const double> b) {
    double v = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) v += a[j] * b[j];
    return v;
}

inline ad::Var dot(std::span<const ad::Var> a, std::span<const ad::Var> b) {
    for (const ad::Var& x : a)
        if (x.tape()) return x.tape()->dot(a, b);
    for (const ad::Var& x : b)
        if (x.tape()) return x.tape()->dot(a, b);
    double v = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) v += a[j].value() * b[j].value();
    return ad::Var(v);
}

inline double sum(std::span<const double> xs) {
    double v = 0.0;
    for (double x : xs) v += x;
    return v;
}

inline ad::Var sum(std::span<const ad::Var> xs) {
    for (const ad::Var& x : xs)
        if (x.tape()) return x.tape()->sum(xs);
    double v = 0.0;
    for (const ad::Var& x : xs) v += x.value();
    return ad::Var(v);
}

inline double logsumexp(std::span<const double> xs) {
    double m = xs[0];
    for (double x : xs) m = std::max(m, x);
    double s = 0.0;
    for (double x : xs) s += std::exp(x - m);
    return m + std::log(s);
}

inline ad::Var logsumexp(std::span<const ad::Var> xs) {
    for (const ad::Var& x : xs)
        if (x.tape()) return x.tape()->logsumexp(xs);
    Eigen::VectorXd vals(static_cast<Eigen::Index>(xs.size()));
    for (std::size_t j = 0; j < xs.size(); ++j)
        vals[static_cast<Eigen::Index>(j)] = xs[j].value();
    return ad::Var(logsumexp(std::span<const double>(vals.data(),
                                                     static_cast<std::size_t>(vals.size()))));
}

template <class S>
std::span<const S> as_span(const Vec<S>& v) {
    return std::span<const S>(v.data(), static_cast<std::size_t>(v.size()));
}

template <class S>
S dot(const Vec<S>& a, const Vec<S>& b) {
    return dot(as_span(a), as_span(b));
}

template <class S>
S logsumexp(const Vec<S>& v) {
    return logsumexp(as_span(v));
}

template <class S>
S sum(const Vec<S>& v) {
    return sum(as_span(v));
}

}  // namespace metarx
