#pragma once

// Closed-form parameter and optimizer-state counts.

#include <cstdint>
#include <string>
#include <vector>

#include "tgrad/tensor.hpp"

namespace tgrad {

enum class MemoryMethod { adam, galore_matrix, tucker, tensorgrad };

MemoryMethod parse_memory_method(std::string_view name);

struct MemoryReport {
    std::string method;
    std::uint64_t weight_params = 0;
    std::uint64_t moment_scalars = 0;  // M and V entries kept by the optimizer
    std::uint64_t factor_scalars = 0;  // projection matrices / Tucker factors
    std::uint64_t index_slots = 0;     // integer indices of the sparse branch (never doubled)
    std::uint64_t table_states = 0;    // the "optimizer states" column of the reference table
    bool complex_doubled = false;

    std::uint64_t value_state_scalars() const { return moment_scalars + factor_scalars; }
};

struct MemoryQuery {
    MemoryMethod method = MemoryMethod::adam;
    Shape dims;
    std::vector<std::size_t> ranks;  // per mode for tucker/tensorgrad; ranks[0] is the matrix rank for galore
    double density = 0.0;            // tensorgrad sparse share
    std::size_t rollout = 1;         // galore: first `rollout` modes form the rows
    bool is_complex = false;
};

/// Value scalars (weights, moments, factors) are doubled when is_complex is set.
MemoryReport memory_count(const MemoryQuery& q);

/// r^2 (N^2 + M^2): matrix SVD factors of the (N N) x (M M) matricization at rank r^2.
std::uint64_t p_matrix(std::uint64_t n, std::uint64_t m, std::uint64_t r);

/// r^4 + 2 r N + 2 r M: Tucker core plus factors with all four ranks equal to r.
std::uint64_t p_tensor(std::uint64_t n, std::uint64_t m, std::uint64_t r);

/// prod R_n + sum I_n R_n.
std::uint64_t p_tucker(const Shape& dims, const std::vector<std::size_t>& ranks);

}  // namespace tgrad
