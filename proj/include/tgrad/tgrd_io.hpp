#pragma once

// TGRD binary tensor files.
//
// Layout: "TGRD", u8 version (1), u8 dtype (0 real, 1 complex), u8 order d,
// d x u64 LE dims, then f64 LE payload (re, im interleaved for complex).
// Sparse files append u64 nnz, nnz u64 offsets and nnz values after the header
// instead of a dense payload.

#include <filesystem>
#include <iosfwd>
#include <variant>

#include "tgrad/tensor.hpp"

namespace tgrad {

inline constexpr std::uint8_t kTgrdVersion = 1;

template <TensorScalar T> void write_tgrd(std::ostream& os, const Tensor<T>& t);
template <TensorScalar T> void write_tgrd(const std::filesystem::path& path, const Tensor<T>& t);

/// Reads a dense file. Throws ValidationError on bad magic, version, dtype, or truncated payload.
template <TensorScalar T> Tensor<T> read_tgrd(std::istream& is);
template <TensorScalar T> Tensor<T> read_tgrd(const std::filesystem::path& path);

/// Reads either dtype; useful when the caller does not know what was stored.
std::variant<RealTensor, ComplexTensor> read_tgrd_any(const std::filesystem::path& path);

template <TensorScalar T> void write_tgrd_sparse(const std::filesystem::path& path, const Shape& shape,
                                                 const std::vector<std::uint64_t>& offsets,
                                                 const std::vector<T>& values);

template <TensorScalar T> struct SparseFile {
    Shape shape;
    std::vector<std::uint64_t> offsets;
    std::vector<T> values;
};

template <TensorScalar T> SparseFile<T> read_tgrd_sparse(const std::filesystem::path& path);

}  // namespace tgrad
