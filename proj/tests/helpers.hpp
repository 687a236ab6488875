#pragma once

#include <random>

#include <Eigen/Dense>

#include "tgrad/tensor.hpp"

namespace testutil {

template <class T> tgrad::Tensor<T> random(const tgrad::Shape& shape, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    tgrad::Tensor<T> t(shape);
    for (auto& x : t.data()) {
        if constexpr (tgrad::is_complex_v<T>) {
            const double re = n(rng);
            x = T(re, n(rng));
        } else {
            x = n(rng);
        }
    }
    return t;
}

template <class T> tgrad::Matrix<T> random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
    auto t = random<T>({r * c}, seed);
    tgrad::Matrix<T> m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    for (std::size_t i = 0; i < r * c; ++i) m(static_cast<Eigen::Index>(i / c), static_cast<Eigen::Index>(i % c)) = t[i];
    return m;
}

}  // namespace testutil

namespace testutil {

// f(w) = 1/2 sum_i c_i |w_i - target_i|^2, gradient c (w - target).
template <class T> struct Quadratic {
    tgrad::Tensor<T> target;
    tgrad::RealTensor curvature;

    Quadratic(const tgrad::Shape& s, std::uint64_t seed) : target(random<T>(s, seed)), curvature(s) {
        std::mt19937_64 rng(seed ^ 0xc0ffee);
        std::uniform_real_distribution<double> u(0.2, 2.0);
        for (auto& c : curvature.data()) c = u(rng);
    }

    tgrad::Tensor<T> grad(const tgrad::Tensor<T>& w) const {
        tgrad::Tensor<T> g(w.shape());
        for (std::size_t i = 0; i < g.size(); ++i) g[i] = curvature[i] * (w[i] - target[i]);
        return g;
    }

    double value(const tgrad::Tensor<T>& w) const {
        double f = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) f += 0.5 * curvature[i] * tgrad::abs2(w[i] - target[i]);
        return f;
    }
};

}  // namespace testutil

namespace testutil {

// Central differences on real and imaginary parts separately, returned as d/dRe + i d/dIm.
template <class F> tgrad::ComplexTensor fd_gradient(tgrad::ComplexTensor r, F&& loss, double h = 1e-5) {
    tgrad::ComplexTensor g(r.shape());
    for (std::size_t i = 0; i < r.size(); ++i) {
        const tgrad::Complex orig = r[i];
        double parts[2];
        for (int part = 0; part < 2; ++part) {
            const tgrad::Complex step = part == 0 ? tgrad::Complex(h, 0) : tgrad::Complex(0, h);
            r[i] = orig + step;
            const double up = loss(r);
            r[i] = orig - step;
            const double down = loss(r);
            parts[part] = (up - down) / (2 * h);
        }
        r[i] = orig;
        g[i] = tgrad::Complex(parts[0], parts[1]);
    }
    return g;
}

inline double rel_err(const tgrad::ComplexTensor& a, const tgrad::ComplexTensor& b) {
    return tgrad::fro_norm(a - b) / tgrad::fro_norm(b);
}

}  // namespace testutil
