#pragma once

// Truncated SVD and Tucker factors via HOSVD / HOOI.

#include <optional>

#include "tgrad/tensor.hpp"

namespace tgrad {

template <TensorScalar T> struct SvdResult {
    Matrix<T> u;           // rows x r
    Eigen::VectorXd s;     // r, descending
    Matrix<T> v;           // cols x r
};

/// Short sides up to this size go through the exact dense path.
inline constexpr std::size_t kExactSvdLimit = 256;

/// Best rank-r approximation factors of m. Each left singular vector is
/// rotated so its largest-magnitude entry is real and positive; the matching
/// right vector gets the same rotation.
template <TensorScalar T> SvdResult<T> truncated_svd(const Matrix<T>& m, std::size_t r, std::uint64_t seed = 0x5eedULL);

/// Sine of the largest principal angle between the column spans of a and b
/// (both with orthonormal columns, same column count).
template <TensorScalar T> double subspace_distance(const Matrix<T>& a, const Matrix<T>& b);

/// ||u^H u - I||_F
template <TensorScalar T> double orthonormality_error(const Matrix<T>& u);

template <TensorScalar T> struct TuckerFactors {
    std::vector<Matrix<T>> factors;  // factors[n] is I_n x r_n

    std::size_t order() const { return factors.size(); }
    std::vector<std::size_t> ranks() const;
    Shape row_dims() const;
};

/// Checks 1 <= r_n <= I_n for every mode; throws ValidationError otherwise.
void check_ranks(const Shape& shape, const std::vector<std::size_t>& ranks);

/// Factor n is the top-r_n left singular vectors of unfold(t, n). A mode whose
/// rank equals its dimension gets the identity, so the projection is exact.
template <TensorScalar T> TuckerFactors<T> hosvd_init(const Tensor<T>& t, const std::vector<std::size_t>& ranks);

struct HooiOptions {
    int max_sweeps = 10;
    double tol = 1e-6;
};

template <TensorScalar T> struct HooiResult {
    TuckerFactors<T> factors;
    std::vector<double> errors;  // relative reconstruction error: initial, then after each sweep
    int sweeps = 0;
};

template <TensorScalar T>
HooiResult<T> hooi(const Tensor<T>& t, const std::vector<std::size_t>& ranks, const HooiOptions& opts = {},
                   const TuckerFactors<T>* warm = nullptr);

/// g x_1 U1^H x_2 ... x_d Ud^H, shape r_1 x ... x r_d.
template <TensorScalar T> Tensor<T> tucker_compress(const Tensor<T>& g, const TuckerFactors<T>& f);

/// core x_1 U1 x_2 ... x_d Ud.
template <TensorScalar T> Tensor<T> tucker_expand(const Tensor<T>& core, const TuckerFactors<T>& f);

/// ||t - expand(compress(t))||_F / ||t||_F (0 for the zero tensor).
template <TensorScalar T> double tucker_relative_error(const Tensor<T>& t, const TuckerFactors<T>& f);

}  // namespace tgrad
