#include "tgrad/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace tgrad {

std::size_t element_count(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        os << (i ? "x" : "") << shape[i];
    }
    os << ')';
    return os.str();
}

std::vector<std::size_t> strides_of(const Shape& shape) {
    std::vector<std::size_t> strides(shape.size(), 1);
    for (std::size_t k = shape.size(); k-- > 1;) {
        strides[k - 1] = strides[k] * shape[k];
    }
    return strides;
}

template <TensorScalar T> std::size_t Tensor<T>::offset(std::span<const std::size_t> index) const {
    if (index.size() != shape_.size()) {
        throw ValidationError("index order does not match tensor order");
    }
    std::size_t off = 0;
    for (std::size_t k = 0; k < shape_.size(); ++k) {
        if (index[k] >= shape_[k]) {
            throw ValidationError("index out of bounds in mode " + std::to_string(k));
        }
        off = off * shape_[k] + index[k];
    }
    return off;
}

template <TensorScalar T> Tensor<T>& Tensor<T>::operator+=(const Tensor& other) {
    if (other.shape_ != shape_) {
        throw ValidationError("shape mismatch in tensor addition");
    }
    for (std::size_t i = 0; i < data_.size(); ++i) {
        data_[i] += other.data_[i];
    }
    return *this;
}

template <TensorScalar T> Tensor<T>& Tensor<T>::operator-=(const Tensor& other) {
    if (other.shape_ != shape_) {
        throw ValidationError("shape mismatch in tensor subtraction");
    }
    for (std::size_t i = 0; i < data_.size(); ++i) {
        data_[i] -= other.data_[i];
    }
    return *this;
}

template <TensorScalar T> Tensor<T>& Tensor<T>::operator*=(T scale) {
    for (auto& x : data_) {
        x *= scale;
    }
    return *this;
}

namespace {

void check_mode(const Shape& shape, std::size_t mode) {
    if (mode >= shape.size()) {
        throw ValidationError("mode index " + std::to_string(mode) + " out of range for order " +
                              std::to_string(shape.size()));
    }
}

// Column stride of each mode in the mode-k unfolding (zero for mode k itself).
std::vector<std::size_t> unfolding_col_strides(const Shape& shape, std::size_t mode) {
    std::vector<std::size_t> strides(shape.size(), 0);
    std::size_t s = 1;
    for (std::size_t m = 0; m < shape.size(); ++m) {
        if (m == mode) {
            continue;
        }
        strides[m] = s;
        s *= shape[m];
    }
    return strides;
}

// Calls f(flat, row, col) for every entry, visiting entries in storage order.
template <typename F> void for_each_unfolded(const Shape& shape, std::size_t mode, F&& f) {
    const auto col_strides = unfolding_col_strides(shape, mode);
    const std::size_t d = shape.size();
    std::vector<std::size_t> idx(d, 0);
    const std::size_t total = element_count(shape);
    std::size_t col = 0;
    for (std::size_t flat = 0; flat < total; ++flat) {
        f(flat, idx[mode], col);
        // increment the multi-index, last mode fastest
        for (std::size_t m = d; m-- > 0;) {
            if (++idx[m] < shape[m]) {
                col += col_strides[m];
                break;
            }
            col -= col_strides[m] * (shape[m] - 1);
            idx[m] = 0;
        }
    }
}

// (left, dim, right) decomposition of a row-major shape around a mode.
struct ModeSplit {
    std::size_t left = 1;
    std::size_t dim = 1;
    std::size_t right = 1;
};

ModeSplit split_at(const Shape& shape, std::size_t mode) {
    ModeSplit s;
    for (std::size_t m = 0; m < mode; ++m) {
        s.left *= shape[m];
    }
    s.dim = shape[mode];
    for (std::size_t m = mode + 1; m < shape.size(); ++m) {
        s.right *= shape[m];
    }
    return s;
}

}  // namespace

template <TensorScalar T> Matrix<T> unfold(const Tensor<T>& t, std::size_t mode) {
    check_mode(t.shape(), mode);
    const std::size_t rows = t.dim(mode);
    const std::size_t cols = t.size() / rows;
    Matrix<T> m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for_each_unfolded(t.shape(), mode, [&](std::size_t flat, std::size_t r, std::size_t c) {
        m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = t[flat];
    });
    return m;
}

template <TensorScalar T> Tensor<T> fold(const Matrix<T>& m, std::size_t mode, const Shape& shape) {
    check_mode(shape, mode);
    const std::size_t total = element_count(shape);
    if (static_cast<std::size_t>(m.rows()) != shape[mode] ||
        static_cast<std::size_t>(m.rows() * m.cols()) != total) {
        throw ValidationError("fold: matrix of size " + std::to_string(m.rows()) + "x" +
                              std::to_string(m.cols()) + " incompatible with shape " + shape_string(shape));
    }
    Tensor<T> t(shape);
    for_each_unfolded(shape, mode, [&](std::size_t flat, std::size_t r, std::size_t c) {
        t[flat] = m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    });
    return t;
}

template <TensorScalar T> Tensor<T> mode_product(const Tensor<T>& t, const Matrix<T>& u, std::size_t mode) {
    check_mode(t.shape(), mode);
    if (static_cast<std::size_t>(u.cols()) != t.dim(mode)) {
        throw ValidationError("mode_product: matrix has " + std::to_string(u.cols()) + " columns, mode " +
                              std::to_string(mode) + " has dimension " + std::to_string(t.dim(mode)));
    }
    const auto s = split_at(t.shape(), mode);
    const std::size_t out_dim = static_cast<std::size_t>(u.rows());
    Shape out_shape = t.shape();
    out_shape[mode] = out_dim;
    Tensor<T> out(out_shape);
    const auto in = t.data();
    auto dst = out.data();
    for (std::size_t l = 0; l < s.left; ++l) {
        const T* src = in.data() + l * s.dim * s.right;
        T* o = dst.data() + l * out_dim * s.right;
        for (std::size_t j = 0; j < out_dim; ++j) {
            T* orow = o + j * s.right;
            for (std::size_t i = 0; i < s.dim; ++i) {
                const T uji = u(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i));
                const T* srow = src + i * s.right;
                for (std::size_t r = 0; r < s.right; ++r) {
                    orow[r] += uji * srow[r];
                }
            }
        }
    }
    return out;
}

template <TensorScalar T> T inner(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape()) {
        throw ValidationError("inner: shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
    }
    T acc{};
    for (std::size_t i = 0; i < a.size(); ++i) {
        acc += a[i] * conj(b[i]);
    }
    return acc;
}

template <TensorScalar T> double fro_norm(const Tensor<T>& t) {
    double acc = 0.0;
    for (const auto& x : t.data()) {
        acc += abs2(x);
    }
    return std::sqrt(acc);
}

template <TensorScalar T> Matrix<T> mode_gram(const Tensor<T>& t, std::size_t mode) {
    check_mode(t.shape(), mode);
    const auto s = split_at(t.shape(), mode);
    const auto n = static_cast<Eigen::Index>(s.dim);
    Matrix<T> g = Matrix<T>::Zero(n, n);
    const auto data = t.data();
    for (std::size_t l = 0; l < s.left; ++l) {
        const T* block = data.data() + l * s.dim * s.right;
        for (std::size_t i = 0; i < s.dim; ++i) {
            for (std::size_t j = 0; j <= i; ++j) {
                T acc{};
                for (std::size_t r = 0; r < s.right; ++r) {
                    acc += block[i * s.right + r] * conj(block[j * s.right + r]);
                }
                g(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) += acc;
            }
        }
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < i; ++j) {
            g(j, i) = conj(g(i, j));
        }
    }
    return g;
}

template <TensorScalar T> double top_eigenvalue_psd(const Matrix<T>& gram, std::uint64_t seed) {
    constexpr double kTol = 1e-10;
    constexpr int kMaxIter = 1000;
    const Eigen::Index n = gram.rows();
    if (n == 0) {
        return 0.0;
    }
    const double scale = gram.cwiseAbs().maxCoeff();
    if (scale == 0.0) {
        return 0.0;
    }
    const Matrix<T> a = gram / scale;

    auto attempt = [&](std::uint64_t s, double& best) -> bool {
        std::mt19937_64 rng(s);
        std::normal_distribution<double> normal;
        Vector<T> v(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            if constexpr (is_complex_v<T>) {
                v(i) = T(normal(rng), normal(rng));
            } else {
                v(i) = normal(rng);
            }
        }
        v.normalize();
        Matrix<T> step = a;  // iterate with a, a^2, a^4, ... once progress stalls
        double prev_mu = -1.0;
        for (int it = 0; it < kMaxIter; ++it) {
            Vector<T> av = a * v;
            const double mu = real_part<T>(v.dot(av));  // v^H a v
            best = std::max(best, mu);
            const double resid = (av - mu * v).norm();
            if (resid <= kTol * std::abs(mu)) {
                return true;
            }
            if (it > 0 && it % 25 == 0 && std::abs(mu - prev_mu) < 1e-3 * std::abs(mu)) {
                step = step * step;
                step /= std::max(step.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
            }
            prev_mu = mu;
            Vector<T> next = step * v;
            const double nn = next.norm();
            if (!(nn > 0.0) || !std::isfinite(nn)) {
                return false;
            }
            v = next / nn;
        }
        return false;
    };

    double best = 0.0;
    if (!attempt(seed, best)) {
        attempt(seed ^ 0x9e3779b97f4a7c15ULL, best);
    }
    return best * scale;
}

template <TensorScalar T> double mode_spectral_norm(const Tensor<T>& t, std::size_t mode) {
    return std::sqrt(std::max(0.0, top_eigenvalue_psd<T>(mode_gram(t, mode))));
}

template <TensorScalar T> double stable_rank(const Tensor<T>& t, std::size_t mode) {
    const double fro = fro_norm(t);
    if (fro == 0.0) {
        throw ValidationError("stable rank of the zero tensor is undefined");
    }
    const double spec = mode_spectral_norm(t, mode);
    return (fro * fro) / (spec * spec);
}

template <TensorScalar T> std::vector<double> stable_ranks(const Tensor<T>& t) {
    std::vector<double> out(t.order());
    for (std::size_t k = 0; k < t.order(); ++k) {
        out[k] = stable_rank(t, k);
    }
    return out;
}

template <TensorScalar T> double multilinear_stable_rank(const Tensor<T>& t) {
    const auto sr = stable_ranks(t);
    return *std::min_element(sr.begin(), sr.end());
}

template <TensorScalar T> Tensor<T> outer(const std::vector<std::vector<T>>& vectors) {
    if (vectors.empty()) {
        throw ValidationError("outer: empty vector list");
    }
    Shape shape;
    for (const auto& v : vectors) {
        shape.push_back(v.size());
    }
    Tensor<T> t(shape);
    std::vector<std::size_t> idx(shape.size(), 0);
    for (std::size_t flat = 0; flat < t.size(); ++flat) {
        T prod = T(1);
        for (std::size_t k = 0; k < shape.size(); ++k) {
            prod *= vectors[k][idx[k]];
        }
        t[flat] = prod;
        for (std::size_t m = shape.size(); m-- > 0;) {
            if (++idx[m] < shape[m]) {
                break;
            }
            idx[m] = 0;
        }
    }
    return t;
}

template <TensorScalar T> double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape()) {
        throw ValidationError("max_abs_diff: shape mismatch");
    }
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::abs(a[i] - b[i]));
    }
    return m;
}

template <TensorScalar T> bool all_finite(const Tensor<T>& t) {
    return std::all_of(t.data().begin(), t.data().end(), [](const T& x) {
        if constexpr (is_complex_v<T>) {
            return std::isfinite(x.real()) && std::isfinite(x.imag());
        } else {
            return std::isfinite(x);
        }
    });
}

#define TGRAD_INSTANTIATE(T)                                                            \
    template class Tensor<T>;                                                           \
    template Matrix<T> unfold(const Tensor<T>&, std::size_t);                           \
    template Tensor<T> fold(const Matrix<T>&, std::size_t, const Shape&);               \
    template Tensor<T> mode_product(const Tensor<T>&, const Matrix<T>&, std::size_t);   \
    template T inner(const Tensor<T>&, const Tensor<T>&);                               \
    template double fro_norm(const Tensor<T>&);                                         \
    template Matrix<T> mode_gram(const Tensor<T>&, std::size_t);                        \
    template double top_eigenvalue_psd(const Matrix<T>&, std::uint64_t);                \
    template double mode_spectral_norm(const Tensor<T>&, std::size_t);                  \
    template double stable_rank(const Tensor<T>&, std::size_t);                         \
    template std::vector<double> stable_ranks(const Tensor<T>&);                        \
    template double multilinear_stable_rank(const Tensor<T>&);                          \
    template Tensor<T> outer(const std::vector<std::vector<T>>&);                       \
    template double max_abs_diff(const Tensor<T>&, const Tensor<T>&);                   \
    template bool all_finite(const Tensor<T>&);

TGRAD_INSTANTIATE(double)
TGRAD_INSTANTIATE(Complex)

#undef TGRAD_INSTANTIATE

}  // namespace tgrad
