#include "tgrad/decompose.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <Eigen/QR>
#include <Eigen/SVD>

namespace tgrad {

namespace {

template <TensorScalar T> Matrix<T> gaussian_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    Matrix<T> g(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j) {
        for (Eigen::Index i = 0; i < rows; ++i) {
            if constexpr (is_complex_v<T>) {
                g(i, j) = T(normal(rng), normal(rng));
            } else {
                g(i, j) = normal(rng);
            }
        }
    }
    return g;
}

template <TensorScalar T> Matrix<T> orth(const Matrix<T>& a) {
    Eigen::HouseholderQR<Matrix<T>> qr(a);
    return qr.householderQ() * Matrix<T>::Identity(a.rows(), a.cols());
}

// Rotate column j of u (and v, if given) so the largest-magnitude entry of u's column is real positive.
template <TensorScalar T> void fix_phase(Matrix<T>& u, Matrix<T>* v) {
    for (Eigen::Index j = 0; j < u.cols(); ++j) {
        Eigen::Index best = 0;
        double mag = -1.0;
        for (Eigen::Index i = 0; i < u.rows(); ++i) {
            const double a = std::abs(u(i, j));
            if (a > mag * (1.0 + 1e-12)) {  // first index wins near-ties
                mag = a;
                best = i;
            }
        }
        if (mag <= 0.0) {
            continue;
        }
        const T phase = conj(u(best, j)) / T(mag);
        u.col(j) *= phase;
        if (v != nullptr) {
            v->col(j) *= phase;
        }
    }
}

template <TensorScalar T> SvdResult<T> exact_svd(const Matrix<T>& m, std::size_t r, bool want_v) {
    const int opts = want_v ? (Eigen::ComputeThinU | Eigen::ComputeThinV) : Eigen::ComputeThinU;
    Eigen::BDCSVD<Matrix<T>> svd(m, opts);
    const auto rr = static_cast<Eigen::Index>(r);
    SvdResult<T> out;
    out.u = svd.matrixU().leftCols(rr);
    out.s = svd.singularValues().head(rr);
    if (want_v) {
        out.v = svd.matrixV().leftCols(rr);
    }
    return out;
}

template <TensorScalar T> SvdResult<T> subspace_svd(const Matrix<T>& m, std::size_t r, std::uint64_t seed, bool want_v) {
    constexpr int kPowerIters = 6;
    const Eigen::Index short_side = std::min(m.rows(), m.cols());
    const Eigen::Index p = std::min<Eigen::Index>(short_side, static_cast<Eigen::Index>(r) + 16);
    Matrix<T> q = orth<T>(m * gaussian_matrix<T>(m.cols(), p, seed));
    for (int it = 0; it < kPowerIters; ++it) {
        Matrix<T> z = orth<T>(m.adjoint() * q);
        q = orth<T>(m * z);
    }
    Matrix<T> b = q.adjoint() * m;  // p x cols
    auto small = exact_svd<T>(b, r, want_v);
    SvdResult<T> out;
    out.u = q * small.u;
    out.s = std::move(small.s);
    out.v = std::move(small.v);
    return out;
}

template <TensorScalar T> SvdResult<T> svd_impl(const Matrix<T>& m, std::size_t r, std::uint64_t seed, bool want_v) {
    const auto short_side = static_cast<std::size_t>(std::min(m.rows(), m.cols()));
    if (r < 1 || r > short_side) {
        throw ValidationError("truncated_svd: rank " + std::to_string(r) + " outside [1, " +
                              std::to_string(short_side) + "]");
    }
    SvdResult<T> out = short_side <= kExactSvdLimit ? exact_svd<T>(m, r, want_v) : subspace_svd<T>(m, r, seed, want_v);
    fix_phase<T>(out.u, want_v ? &out.v : nullptr);
    return out;
}

template <TensorScalar T> Matrix<T> top_left_vectors(const Matrix<T>& m, std::size_t r) {
    if (r == static_cast<std::size_t>(m.rows())) {
        return Matrix<T>::Identity(m.rows(), m.rows());
    }
    const auto short_side = static_cast<std::size_t>(std::min(m.rows(), m.cols()));
    if (r <= short_side) {
        return svd_impl<T>(m, r, 0x5eedULL, false).u;
    }
    // the unfolding has fewer columns than the requested rank (r_n > prod of the
    // other ranks): keep its full left basis and pad with an orthonormal complement
    const Matrix<T> u = svd_impl<T>(m, short_side, 0x5eedULL, false).u;
    const Matrix<T> q = Eigen::HouseholderQR<Matrix<T>>(u).householderQ();
    Matrix<T> out(m.rows(), static_cast<Eigen::Index>(r));
    out.leftCols(u.cols()) = u;
    out.rightCols(static_cast<Eigen::Index>(r) - u.cols()) = q.middleCols(u.cols(), static_cast<Eigen::Index>(r) - u.cols());
    return out;
}

}  // namespace

template <TensorScalar T> SvdResult<T> truncated_svd(const Matrix<T>& m, std::size_t r, std::uint64_t seed) {
    return svd_impl<T>(m, r, seed, true);
}

template <TensorScalar T> double subspace_distance(const Matrix<T>& a, const Matrix<T>& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ValidationError("subspace_distance: shape mismatch");
    }
    // ||(I - a a^H) b||_2 is the sine of the largest principal angle
    const Matrix<T> resid = b - a * (a.adjoint() * b);
    if (resid.cols() == 0) {
        return 0.0;
    }
    Eigen::JacobiSVD<Matrix<T>> svd(resid);
    return svd.singularValues()(0);
}

template <TensorScalar T> double orthonormality_error(const Matrix<T>& u) {
    return (u.adjoint() * u - Matrix<T>::Identity(u.cols(), u.cols())).norm();
}

template <TensorScalar T> std::vector<std::size_t> TuckerFactors<T>::ranks() const {
    std::vector<std::size_t> r;
    for (const auto& f : factors) {
        r.push_back(static_cast<std::size_t>(f.cols()));
    }
    return r;
}

template <TensorScalar T> Shape TuckerFactors<T>::row_dims() const {
    Shape s;
    for (const auto& f : factors) {
        s.push_back(static_cast<std::size_t>(f.rows()));
    }
    return s;
}

void check_ranks(const Shape& shape, const std::vector<std::size_t>& ranks) {
    if (ranks.size() != shape.size()) {
        throw ValidationError("rank list has " + std::to_string(ranks.size()) + " entries for an order-" +
                              std::to_string(shape.size()) + " tensor");
    }
    for (std::size_t n = 0; n < shape.size(); ++n) {
        if (ranks[n] < 1 || ranks[n] > shape[n]) {
            throw ValidationError("rank " + std::to_string(ranks[n]) + " out of range for mode " + std::to_string(n) +
                                  " of dimension " + std::to_string(shape[n]));
        }
    }
}

template <TensorScalar T> TuckerFactors<T> hosvd_init(const Tensor<T>& t, const std::vector<std::size_t>& ranks) {
    check_ranks(t.shape(), ranks);
    TuckerFactors<T> f;
    for (std::size_t n = 0; n < t.order(); ++n) {
        f.factors.push_back(top_left_vectors<T>(unfold(t, n), ranks[n]));
    }
    return f;
}

template <TensorScalar T> Tensor<T> tucker_compress(const Tensor<T>& g, const TuckerFactors<T>& f) {
    if (f.row_dims() != g.shape()) {
        throw ValidationError("tucker_compress: factor rows " + shape_string(f.row_dims()) + " vs tensor " +
                              shape_string(g.shape()));
    }
    Tensor<T> out = g;
    for (std::size_t n = 0; n < g.order(); ++n) {
        out = mode_product(out, Matrix<T>(f.factors[n].adjoint()), n);
    }
    return out;
}

template <TensorScalar T> Tensor<T> tucker_expand(const Tensor<T>& core, const TuckerFactors<T>& f) {
    if (f.ranks() != core.shape()) {
        throw ValidationError("tucker_expand: core shape " + shape_string(core.shape()) + " vs ranks " +
                              shape_string(f.ranks()));
    }
    Tensor<T> out = core;
    for (std::size_t n = 0; n < core.order(); ++n) {
        out = mode_product(out, f.factors[n], n);
    }
    return out;
}

template <TensorScalar T> double tucker_relative_error(const Tensor<T>& t, const TuckerFactors<T>& f) {
    const double norm = fro_norm(t);
    if (norm == 0.0) {
        return 0.0;
    }
    return fro_norm(t - tucker_expand(tucker_compress(t, f), f)) / norm;
}

template <TensorScalar T>
HooiResult<T> hooi(const Tensor<T>& t, const std::vector<std::size_t>& ranks, const HooiOptions& opts,
                   const TuckerFactors<T>* warm) {
    check_ranks(t.shape(), ranks);
    if (opts.max_sweeps < 0 || !(opts.tol >= 0.0)) {
        throw ValidationError("hooi: max_sweeps must be >= 0 and tol >= 0");
    }
    HooiResult<T> res;
    if (warm != nullptr) {
        if (warm->row_dims() != t.shape() || warm->ranks() != ranks) {
            throw ValidationError("hooi: warm factors incompatible with tensor shape or ranks");
        }
        res.factors = *warm;
    } else {
        res.factors = hosvd_init(t, ranks);
    }
    res.errors.push_back(tucker_relative_error(t, res.factors));

    const std::size_t d = t.order();
    for (int sweep = 0; sweep < opts.max_sweeps; ++sweep) {
        if (res.errors.back() == 0.0) {
            break;
        }
        for (std::size_t n = 0; n < d; ++n) {
            if (ranks[n] == t.dim(n)) {
                continue;  // identity factor stays exact
            }
            Tensor<T> y = t;
            for (std::size_t m = 0; m < d; ++m) {
                if (m != n) {
                    y = mode_product(y, Matrix<T>(res.factors.factors[m].adjoint()), m);
                }
            }
            res.factors.factors[n] = top_left_vectors<T>(unfold(y, n), ranks[n]);
        }
        ++res.sweeps;
        const double prev = res.errors.back();
        const double err = tucker_relative_error(t, res.factors);
        res.errors.push_back(err);
        if (prev - err < opts.tol * std::max(prev, 1e-300)) {
            break;
        }
    }
    return res;
}

#define TGRAD_INSTANTIATE(T)                                                                               \
    template struct TuckerFactors<T>;                                                                      \
    template SvdResult<T> truncated_svd(const Matrix<T>&, std::size_t, std::uint64_t);                     \
    template double subspace_distance(const Matrix<T>&, const Matrix<T>&);                                 \
    template double orthonormality_error(const Matrix<T>&);                                                \
    template TuckerFactors<T> hosvd_init(const Tensor<T>&, const std::vector<std::size_t>&);               \
    template HooiResult<T> hooi(const Tensor<T>&, const std::vector<std::size_t>&, const HooiOptions&,     \
                                const TuckerFactors<T>*);                                                  \
    template Tensor<T> tucker_compress(const Tensor<T>&, const TuckerFactors<T>&);                         \
    template Tensor<T> tucker_expand(const Tensor<T>&, const TuckerFactors<T>&);                           \
    template double tucker_relative_error(const Tensor<T>&, const TuckerFactors<T>&);

TGRAD_INSTANTIATE(double)
TGRAD_INSTANTIATE(Complex)

#undef TGRAD_INSTANTIATE

}  // namespace tgrad
