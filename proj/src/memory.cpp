#include "tgrad/memory.hpp"

#include <limits>

#include "tgrad/sparsify.hpp"

namespace tgrad {

namespace {

std::uint64_t mul(std::uint64_t a, std::uint64_t b) {
    if (a != 0 && b > std::numeric_limits<std::uint64_t>::max() / a) {
        throw ValidationError("memory count overflows 64 bits");
    }
    return a * b;
}

std::uint64_t add(std::uint64_t a, std::uint64_t b) {
    if (b > std::numeric_limits<std::uint64_t>::max() - a) {
        throw ValidationError("memory count overflows 64 bits");
    }
    return a + b;
}

std::uint64_t product(const std::vector<std::size_t>& v) {
    std::uint64_t p = 1;
    for (auto x : v) {
        p = mul(p, x);
    }
    return p;
}

void check_dims(const Shape& dims) {
    if (dims.empty()) {
        throw ValidationError("memory_count: empty shape");
    }
    for (auto n : dims) {
        if (n == 0) {
            throw ValidationError("memory_count: zero dimension");
        }
    }
}

void check_mode_ranks(const Shape& dims, const std::vector<std::size_t>& ranks) {
    if (ranks.size() != dims.size()) {
        throw ValidationError("memory_count: need one rank per mode");
    }
    for (std::size_t n = 0; n < dims.size(); ++n) {
        if (ranks[n] < 1 || ranks[n] > dims[n]) {
            throw ValidationError("memory_count: rank " + std::to_string(ranks[n]) + " exceeds dimension " +
                                  std::to_string(dims[n]) + " in mode " + std::to_string(n));
        }
    }
}

}  // namespace

MemoryMethod parse_memory_method(std::string_view name) {
    if (name == "adam") return MemoryMethod::adam;
    if (name == "galore" || name == "galore_matrix") return MemoryMethod::galore_matrix;
    if (name == "tucker") return MemoryMethod::tucker;
    if (name == "tensorgrad") return MemoryMethod::tensorgrad;
    throw ValidationError("unknown memory method '" + std::string(name) + "' (adam|galore|tucker|tensorgrad)");
}

std::uint64_t p_matrix(std::uint64_t n, std::uint64_t m, std::uint64_t r) {
    return mul(mul(r, r), add(mul(n, n), mul(m, m)));
}

std::uint64_t p_tensor(std::uint64_t n, std::uint64_t m, std::uint64_t r) {
    return add(add(mul(mul(r, r), mul(r, r)), mul(mul(2, r), n)), mul(mul(2, r), m));
}

std::uint64_t p_tucker(const Shape& dims, const std::vector<std::size_t>& ranks) {
    check_dims(dims);
    check_mode_ranks(dims, ranks);
    std::uint64_t s = product(ranks);
    for (std::size_t n = 0; n < dims.size(); ++n) {
        s = add(s, mul(dims[n], ranks[n]));
    }
    return s;
}

MemoryReport memory_count(const MemoryQuery& q) {
    check_dims(q.dims);
    MemoryReport r;
    r.weight_params = product(q.dims);
    switch (q.method) {
        case MemoryMethod::adam:
            r.method = "adam";
            r.moment_scalars = mul(2, r.weight_params);
            r.table_states = r.moment_scalars;
            break;
        case MemoryMethod::galore_matrix: {
            if (q.rollout < 1 || q.rollout >= q.dims.size()) {
                throw ValidationError("memory_count: rollout must lie in [1, order-1]");
            }
            if (q.ranks.size() != 1) {
                throw ValidationError("memory_count: galore takes a single matrix rank");
            }
            std::uint64_t rows = 1;
            for (std::size_t k = 0; k < q.rollout; ++k) {
                rows = mul(rows, q.dims[k]);
            }
            const std::uint64_t cols = r.weight_params / rows;
            const std::uint64_t rank = q.ranks[0];
            if (rank < 1 || rank > std::min(rows, cols)) {
                throw ValidationError("memory_count: galore rank exceeds matrix dimension");
            }
            r.method = "galore-d" + std::to_string(q.rollout);
            r.moment_scalars = mul(2, mul(rank, std::max(rows, cols)));
            r.factor_scalars = mul(rank, std::min(rows, cols));
            r.table_states = mul(mul(2, rank), add(rows, cols));
            break;
        }
        case MemoryMethod::tucker:
        case MemoryMethod::tensorgrad: {
            check_mode_ranks(q.dims, q.ranks);
            r.moment_scalars = mul(2, product(q.ranks));
            std::uint64_t factors = 0;
            std::uint64_t table = 0;
            for (std::size_t n = 0; n < q.dims.size(); ++n) {
                factors = add(factors, mul(q.dims[n], q.ranks[n]));
                table = add(table, mul(2, mul(q.ranks[n], q.dims[n])));
            }
            r.factor_scalars = factors;
            r.table_states = table;
            r.method = "tucker";
            if (q.method == MemoryMethod::tensorgrad) {
                r.method = "tensorgrad";
                const std::uint64_t k = sparse_count(q.density, r.weight_params);
                r.moment_scalars = add(r.moment_scalars, mul(2, k));
                r.index_slots = k;
            }
            break;
        }
    }
    if (q.is_complex) {
        r.complex_doubled = true;
        r.weight_params = mul(2, r.weight_params);
        r.moment_scalars = mul(2, r.moment_scalars);
        r.factor_scalars = mul(2, r.factor_scalars);
        r.table_states = mul(2, r.table_states);
    }
    return r;
}

}  // namespace tgrad
