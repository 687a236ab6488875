#include "tgrad/half.hpp"

#include <cmath>

namespace tgrad {

double half_ulp(double x) {
    const double a = std::abs(x);
    if (a < kHalfMinNormal) {
        return kHalfMinSubnormal;
    }
    int e = 0;
    std::frexp(a, &e);  // a = f * 2^e with f in [0.5, 1)
    return std::ldexp(1.0, e - 11);
}

double half_round(double x) {
    if (std::isnan(x)) {
        return x;
    }
    const double a = std::abs(x);
    if (a >= kHalfMax) {
        return std::copysign(kHalfMax, x);
    }
    const double step = half_ulp(a);
    // a / step and the product below are exact: step is a power of two
    double r = std::nearbyint(a / step) * step;
    if (r > kHalfMax) {
        r = kHalfMax;
    }
    return std::copysign(r, x);
}

template <TensorScalar T> void half_round_inplace(Tensor<T>& t) {
    for (auto& x : t.data()) {
        if constexpr (is_complex_v<T>) {
            x = T(half_round(x.real()), half_round(x.imag()));
        } else {
            x = half_round(x);
        }
    }
}

template void half_round_inplace(Tensor<double>&);
template void half_round_inplace(Tensor<Complex>&);

}  // namespace tgrad
