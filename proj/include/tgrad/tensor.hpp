#pragma once

// Dense N-way tensors and the mode-wise operations the optimizer builds on.
//
// Storage is row-major (last index fastest). Mode indices in this API are
// zero-based: mode 0 is the first mode. Unfoldings follow the Kolda-Bader
// column ordering, where among the remaining modes the lowest-numbered one
// varies fastest along the columns.

#include <complex>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include <Eigen/Core>

namespace tgrad {

/// Raised on malformed input: shape mismatches, out-of-range ranks, bad config.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when a computation produced a non-finite value or diverged.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using Complex = std::complex<double>;
using Shape = std::vector<std::size_t>;

template <typename T> struct is_complex : std::false_type {};
template <typename T> struct is_complex<std::complex<T>> : std::true_type {};
template <typename T> inline constexpr bool is_complex_v = is_complex<T>::value;

template <typename T>
concept TensorScalar = std::is_same_v<T, double> || std::is_same_v<T, Complex>;

template <TensorScalar T> constexpr T conj(T x) {
    if constexpr (is_complex_v<T>) {
        return std::conj(x);
    } else {
        return x;
    }
}

template <TensorScalar T> constexpr double abs2(T x) {
    if constexpr (is_complex_v<T>) {
        return std::norm(x);
    } else {
        return x * x;
    }
}

template <TensorScalar T> constexpr double real_part(T x) {
    if constexpr (is_complex_v<T>) {
        return x.real();
    } else {
        return x;
    }
}

template <TensorScalar T> using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <TensorScalar T> using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

std::size_t element_count(const Shape& shape);
std::string shape_string(const Shape& shape);

template <TensorScalar T> class Tensor {
public:
    using value_type = T;

    Tensor() = default;

    explicit Tensor(Shape shape) : shape_(std::move(shape)) {
        check_shape();
        data_.assign(element_count(shape_), T{});
    }

    Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
        check_shape();
        if (data_.size() != element_count(shape_)) {
            throw ValidationError("tensor data length " + std::to_string(data_.size()) +
                                  " does not match shape " + shape_string(shape_));
        }
    }

    static Tensor zeros(const Shape& shape) { return Tensor(shape); }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t order() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t mode) const { return shape_.at(mode); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<T> data() noexcept { return data_; }
    std::span<const T> data() const noexcept { return data_; }
    std::vector<T>& storage() noexcept { return data_; }
    const std::vector<T>& storage() const noexcept { return data_; }

    T& operator[](std::size_t flat) { return data_[flat]; }
    const T& operator[](std::size_t flat) const { return data_[flat]; }

    std::size_t offset(std::span<const std::size_t> index) const;
    T& at(std::span<const std::size_t> index) { return data_[offset(index)]; }
    const T& at(std::span<const std::size_t> index) const { return data_[offset(index)]; }
    T& at(std::initializer_list<std::size_t> index) {
        return at(std::span<const std::size_t>(index.begin(), index.size()));
    }
    const T& at(std::initializer_list<std::size_t> index) const {
        return at(std::span<const std::size_t>(index.begin(), index.size()));
    }

    Tensor& operator+=(const Tensor& other);
    Tensor& operator-=(const Tensor& other);
    Tensor& operator*=(T scale);

    friend Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
    friend Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
    friend Tensor operator*(T s, Tensor a) { return a *= s; }
    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    void check_shape() const {
        if (shape_.empty()) {
            throw ValidationError("tensor order must be at least 1");
        }
        for (auto n : shape_) {
            if (n == 0) {
                throw ValidationError("tensor dimensions must be positive, got " + shape_string(shape_));
            }
        }
    }

    Shape shape_;
    std::vector<T> data_;
};

using RealTensor = Tensor<double>;
using ComplexTensor = Tensor<Complex>;

/// Row-major strides of a shape.
std::vector<std::size_t> strides_of(const Shape& shape);

/// Mode-k unfolding: an I_k x (prod of the other dims) matrix whose columns are mode-k fibers.
template <TensorScalar T> Matrix<T> unfold(const Tensor<T>& t, std::size_t mode);

/// Inverse of unfold.
template <TensorScalar T> Tensor<T> fold(const Matrix<T>& m, std::size_t mode, const Shape& shape);

/// t x_k u: replaces dimension I_k by rows(u). Requires cols(u) == I_k.
template <TensorScalar T> Tensor<T> mode_product(const Tensor<T>& t, const Matrix<T>& u, std::size_t mode);

/// Sum of a * conj(b).
template <TensorScalar T> T inner(const Tensor<T>& a, const Tensor<T>& b);

template <TensorScalar T> double fro_norm(const Tensor<T>& t);

/// Gram matrix t_(k) * t_(k)^H, I_k x I_k.
template <TensorScalar T> Matrix<T> mode_gram(const Tensor<T>& t, std::size_t mode);

/// Largest eigenvalue of a Hermitian PSD matrix by power iteration. The start
/// vector is seeded; iteration switches to repeated squaring of the matrix
/// when the plain iteration stalls.
template <TensorScalar T> double top_eigenvalue_psd(const Matrix<T>& gram, std::uint64_t seed = 0x5eedULL);

/// Largest singular value of unfold(t, k).
template <TensorScalar T> double mode_spectral_norm(const Tensor<T>& t, std::size_t mode);

/// ||t||_F^2 / ||t_(k)||_2^2. Throws on the zero tensor.
template <TensorScalar T> double stable_rank(const Tensor<T>& t, std::size_t mode);

template <TensorScalar T> std::vector<double> stable_ranks(const Tensor<T>& t);

/// min over modes of stable_rank.
template <TensorScalar T> double multilinear_stable_rank(const Tensor<T>& t);

/// Rank-1 tensor v1 o v2 o ... o vd.
template <TensorScalar T> Tensor<T> outer(const std::vector<std::vector<T>>& vectors);

/// max |a - b| entrywise; shapes must match.
template <TensorScalar T> double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b);

template <TensorScalar T> bool all_finite(const Tensor<T>& t);

}  // namespace tgrad
