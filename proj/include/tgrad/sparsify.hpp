#pragma once

// Sparse index selection, COO extraction and scatter, and structured slice masks.

#include <string_view>

#include "tgrad/tensor.hpp"

namespace tgrad {

enum class SelectStrategy { topk, randk, probk };

SelectStrategy parse_strategy(std::string_view name);
std::string_view to_string(SelectStrategy s);

/// Number of retained entries for density rho over n elements: ceil(rho * n),
/// clamped to [1, n]. A 1e-9 slack keeps products like 0.05 * 400 at 20.
std::size_t sparse_count(double rho, std::size_t n);

/// Unstructured index set: sorted, duplicate-free flat row-major offsets.
struct IndexSet {
    Shape shape;
    std::vector<std::uint64_t> offsets;

    std::size_t size() const { return offsets.size(); }
    bool operator==(const IndexSet&) const = default;
};

/// Structured mask: the Cartesian product of per-mode sorted index lists.
struct SliceMask {
    Shape shape;
    std::vector<std::vector<std::size_t>> modes;

    Shape block_shape() const;
    bool operator==(const SliceMask&) const = default;
};

template <TensorScalar T> struct SparseTensor {
    Shape shape;
    std::vector<std::uint64_t> offsets;  // sorted, aligned with values
    std::vector<T> values;

    std::size_t nnz() const { return offsets.size(); }
};

/// k = sparse_count(rho, |g|) indices chosen by magnitude (topk), uniformly
/// (randk), or with probability proportional to |g| (probk). Sampling draws
/// sequentially without replacement from a seeded generator.
template <TensorScalar T>
IndexSet select_indices(const Tensor<T>& g, double rho, SelectStrategy strategy, std::uint64_t seed);

/// Draws k distinct positions from [0, weights.size()) one at a time, each
/// with probability proportional to its weight among those not yet drawn.
/// Falls back to uniform once the remaining weight is zero. Result is sorted.
std::vector<std::size_t> weighted_sample_without_replacement(const std::vector<double>& weights, std::size_t k,
                                                             std::uint64_t seed);

/// Indices of the k largest values, ties broken by lower index; result sorted.
std::vector<std::size_t> top_k_indices(const std::vector<double>& values, std::size_t k);

void check_index_set(const IndexSet& omega);

template <TensorScalar T> SparseTensor<T> extract(const Tensor<T>& g, const IndexSet& omega);

/// dest[idx] += scale * value, in place.
template <TensorScalar T> void scatter_add(Tensor<T>& dest, const SparseTensor<T>& s, T scale);

template <TensorScalar T> Tensor<T> densify(const SparseTensor<T>& s);

/// Per-mode selection of whole slices by slice norm (the row norms of the
/// mode-n unfolding).
template <TensorScalar T>
SliceMask structured_mask(const Tensor<T>& g, const std::vector<std::size_t>& counts, SelectStrategy strategy,
                          std::uint64_t seed);

/// Default per-mode counts for an overall density: c_n = ceil(I_n * rho^(1/d)).
std::vector<std::size_t> structured_counts(const Shape& shape, double rho);

/// Sub-block of g at the mask's Cartesian product, shape = block_shape().
template <TensorScalar T> Tensor<T> restrict_block(const Tensor<T>& g, const SliceMask& mask);

/// Zero tensor of the mask's full shape with the block written back in place.
template <TensorScalar T> Tensor<T> back_project(const Tensor<T>& block, const SliceMask& mask);

/// dest[mask] += scale * block, in place.
template <TensorScalar T> void scatter_add_block(Tensor<T>& dest, const Tensor<T>& block, const SliceMask& mask, T scale);

/// Flat offsets covered by the mask, sorted.
std::vector<std::uint64_t> mask_offsets(const SliceMask& mask);

}  // namespace tgrad
