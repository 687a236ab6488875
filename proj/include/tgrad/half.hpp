#pragma once

// Software emulation of IEEE binary16 storage (round to nearest even, with subnormals).

#include "tgrad/tensor.hpp"

namespace tgrad {

inline constexpr double kHalfMax = 65504.0;
inline constexpr double kHalfMinNormal = 0x1.0p-14;
inline constexpr double kHalfMinSubnormal = 0x1.0p-24;

/// Nearest binary16 value. Overflow saturates to +-kHalfMax; NaN stays NaN.
double half_round(double x);

/// Spacing of the binary16 grid at |x| (2^-24 in the subnormal range).
double half_ulp(double x);

template <TensorScalar T> void half_round_inplace(Tensor<T>& t);

}  // namespace tgrad
