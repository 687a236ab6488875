#pragma once

// One-sided (Hestenes) Jacobi SVD used as a test oracle. Slow and simple on
// purpose; it shares no code with the library's SVD paths.

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Core>

#include "tgrad/tensor.hpp"

namespace testutil {

template <class T> struct JacobiSvd {
    tgrad::Matrix<T> u;  // rows x k
    Eigen::VectorXd s;   // descending
    tgrad::Matrix<T> v;  // cols x k
};

template <class T> JacobiSvd<T> jacobi_svd(const tgrad::Matrix<T>& m) {
    using Mat = tgrad::Matrix<T>;
    if (m.rows() < m.cols()) {
        auto t = jacobi_svd<T>(Mat(m.adjoint()));
        std::swap(t.u, t.v);
        return t;
    }
    Mat a = m;
    const Eigen::Index n = a.cols();
    Mat v = Mat::Identity(n, n);
    for (int sweep = 0; sweep < 60; ++sweep) {
        double off = 0.0;
        for (Eigen::Index p = 0; p < n; ++p) {
            for (Eigen::Index q = p + 1; q < n; ++q) {
                const double alpha = a.col(p).squaredNorm();
                const double beta = a.col(q).squaredNorm();
                const T gamma = a.col(p).dot(a.col(q));  // a_p^H a_q
                const double g = std::abs(gamma);
                if (g <= 1e-300 || g <= 1e-15 * std::sqrt(alpha * beta)) {
                    continue;
                }
                off = std::max(off, g / std::sqrt(alpha * beta));
                // rotate a_q by the phase of gamma so the pair becomes real
                const T phase = gamma / g;
                a.col(q) *= tgrad::conj(phase);
                v.col(q) *= tgrad::conj(phase);
                const double zeta = (beta - alpha) / (2.0 * g);
                const double t = (zeta >= 0.0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                const auto ap = a.col(p).eval();
                a.col(p) = c * ap - s * a.col(q);
                a.col(q) = s * ap + c * a.col(q);
                const auto vp = v.col(p).eval();
                v.col(p) = c * vp - s * v.col(q);
                v.col(q) = s * vp + c * v.col(q);
            }
        }
        if (off < 1e-15) {
            break;
        }
    }
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index x, Eigen::Index y) { return a.col(x).norm() > a.col(y).norm(); });
    JacobiSvd<T> out;
    out.u = Mat::Zero(a.rows(), n);
    out.v = Mat(n, n);
    out.s = Eigen::VectorXd(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::Index j = order[static_cast<std::size_t>(i)];
        const double sigma = a.col(j).norm();
        out.s(i) = sigma;
        if (sigma > 0.0) {
            out.u.col(i) = a.col(j) / sigma;
        }
        out.v.col(i) = v.col(j);
    }
    return out;
}

}  // namespace testutil
