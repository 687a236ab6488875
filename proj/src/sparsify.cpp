#include "tgrad/sparsify.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace tgrad {

SelectStrategy parse_strategy(std::string_view name) {
    if (name == "topk") return SelectStrategy::topk;
    if (name == "randk") return SelectStrategy::randk;
    if (name == "probk") return SelectStrategy::probk;
    throw ValidationError("unknown selection strategy '" + std::string(name) + "' (topk|randk|probk)");
}

std::string_view to_string(SelectStrategy s) {
    switch (s) {
        case SelectStrategy::topk: return "topk";
        case SelectStrategy::randk: return "randk";
        case SelectStrategy::probk: return "probk";
    }
    return "?";
}

std::size_t sparse_count(double rho, std::size_t n) {
    if (!(rho > 0.0 && rho <= 1.0)) {
        throw ValidationError("density must lie in (0, 1], got " + std::to_string(rho));
    }
    const auto k = static_cast<std::size_t>(std::ceil(rho * static_cast<double>(n) - 1e-9));
    return std::clamp<std::size_t>(k, 1, n);
}

Shape SliceMask::block_shape() const {
    Shape s;
    for (const auto& m : modes) {
        s.push_back(m.size());
    }
    return s;
}

namespace {

// 53-bit uniform in [0, 1), fixed so draws do not depend on the standard library's distribution code.
double uniform01(std::mt19937_64& gen) { return static_cast<double>(gen() >> 11) * 0x1.0p-53; }

class Fenwick {
public:
    explicit Fenwick(const std::vector<double>& w) : n_(w.size()), tree_(w.size() + 1, 0.0) {
        for (std::size_t i = 0; i < n_; ++i) {
            tree_[i + 1] += w[i];
            const std::size_t parent = (i + 1) + ((i + 1) & (~(i + 1) + 1));
            if (parent <= n_) {
                tree_[parent] += tree_[i + 1];
            }
        }
    }

    void add(std::size_t i, double delta) {
        for (std::size_t j = i + 1; j <= n_; j += j & (~j + 1)) {
            tree_[j] += delta;
        }
    }

    double total() const {
        double s = 0.0;
        for (std::size_t j = n_; j > 0; j -= j & (~j + 1)) {
            s += tree_[j];
        }
        return s;
    }

    // Smallest i with prefix_sum(i + 1) > u.
    std::size_t find(double u) const {
        std::size_t pos = 0;
        std::size_t step = 1;
        while (step * 2 <= n_) {
            step *= 2;
        }
        for (; step > 0; step /= 2) {
            if (pos + step <= n_ && tree_[pos + step] <= u) {
                pos += step;
                u -= tree_[pos];
            }
        }
        return pos;
    }

private:
    std::size_t n_;
    std::vector<double> tree_;
};

template <TensorScalar T> std::vector<double> magnitudes(std::span<const T> data) {
    std::vector<double> m(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        m[i] = std::abs(data[i]);
    }
    return m;
}

std::vector<std::size_t> select_positions(const std::vector<double>& mags, std::size_t k, SelectStrategy strategy,
                                          std::uint64_t seed) {
    switch (strategy) {
        case SelectStrategy::topk:
            return top_k_indices(mags, k);
        case SelectStrategy::randk:
            return weighted_sample_without_replacement(std::vector<double>(mags.size(), 1.0), k, seed);
        case SelectStrategy::probk:
            return weighted_sample_without_replacement(mags, k, seed);
    }
    throw ValidationError("bad strategy");
}

// Visits every multi-index of a block, handing over the flat offset into the full tensor.
template <typename F> void for_each_block_offset(const SliceMask& mask, F&& f) {
    const auto strides = strides_of(mask.shape);
    const std::size_t d = mask.shape.size();
    std::vector<std::size_t> idx(d, 0);
    const std::size_t total = element_count(mask.block_shape());
    std::size_t off = 0;
    for (std::size_t m = 0; m < d; ++m) {
        off += mask.modes[m][0] * strides[m];
    }
    for (std::size_t b = 0; b < total; ++b) {
        f(b, off);
        for (std::size_t m = d; m-- > 0;) {
            off -= mask.modes[m][idx[m]] * strides[m];
            if (++idx[m] < mask.modes[m].size()) {
                off += mask.modes[m][idx[m]] * strides[m];
                break;
            }
            idx[m] = 0;
            off += mask.modes[m][0] * strides[m];
        }
    }
}

void check_mask(const SliceMask& mask) {
    if (mask.modes.size() != mask.shape.size()) {
        throw ValidationError("slice mask order does not match its shape");
    }
    for (std::size_t n = 0; n < mask.modes.size(); ++n) {
        const auto& m = mask.modes[n];
        if (m.empty()) {
            throw ValidationError("slice mask mode " + std::to_string(n) + " is empty");
        }
        for (std::size_t j = 0; j < m.size(); ++j) {
            if (m[j] >= mask.shape[n] || (j > 0 && m[j] <= m[j - 1])) {
                throw ValidationError("slice mask mode " + std::to_string(n) + " not sorted/unique/in range");
            }
        }
    }
}

}  // namespace

std::vector<std::size_t> top_k_indices(const std::vector<double>& values, std::size_t k) {
    if (k > values.size()) {
        throw ValidationError("top_k_indices: k exceeds element count");
    }
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto before = [&](std::size_t a, std::size_t b) {
        return values[a] > values[b] || (values[a] == values[b] && a < b);
    };
    std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), before);
    order.resize(k);
    std::sort(order.begin(), order.end());
    return order;
}

std::vector<std::size_t> weighted_sample_without_replacement(const std::vector<double>& weights, std::size_t k,
                                                             std::uint64_t seed) {
    const std::size_t n = weights.size();
    if (k > n) {
        throw ValidationError("cannot draw more samples than items");
    }
    double wmax = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0) || !std::isfinite(w)) {
            throw ValidationError("sampling weights must be finite and non-negative");
        }
        wmax = std::max(wmax, w);
    }
    std::vector<double> w(n, 1.0);
    if (wmax > 0.0) {
        for (std::size_t i = 0; i < n; ++i) {
            w[i] = weights[i] / wmax;
        }
    }
    std::vector<char> taken(n, 0);
    Fenwick tree(w);
    std::mt19937_64 gen(seed);
    std::vector<std::size_t> out;
    out.reserve(k);
    for (std::size_t draw = 0; draw < k; ++draw) {
        double total = tree.total();
        if (!(total > 0.0)) {
            // only zero-weight items remain: continue uniformly over them
            for (std::size_t i = 0; i < n; ++i) {
                w[i] = taken[i] ? 0.0 : 1.0;
            }
            tree = Fenwick(w);
            total = tree.total();
        }
        std::size_t pick = tree.find(uniform01(gen) * total);
        if (pick >= n || taken[pick] || w[pick] <= 0.0) {
            // rounding pushed us past the last positive weight
            pick = n;
            for (std::size_t i = n; i-- > 0;) {
                if (!taken[i] && w[i] > 0.0) {
                    pick = i;
                    break;
                }
            }
        }
        taken[pick] = 1;
        tree.add(pick, -w[pick]);
        w[pick] = 0.0;
        out.push_back(pick);
    }
    std::sort(out.begin(), out.end());
    return out;
}

template <TensorScalar T>
IndexSet select_indices(const Tensor<T>& g, double rho, SelectStrategy strategy, std::uint64_t seed) {
    const std::size_t k = sparse_count(rho, g.size());
    const auto pos = select_positions(magnitudes<T>(g.data()), k, strategy, seed);
    IndexSet omega{g.shape(), {}};
    omega.offsets.assign(pos.begin(), pos.end());
    return omega;
}

void check_index_set(const IndexSet& omega) {
    const auto total = element_count(omega.shape);
    for (std::size_t i = 0; i < omega.offsets.size(); ++i) {
        if (omega.offsets[i] >= total) {
            throw ValidationError("index offset " + std::to_string(omega.offsets[i]) + " out of bounds");
        }
        if (i > 0 && omega.offsets[i] <= omega.offsets[i - 1]) {
            throw ValidationError("index set must be sorted and duplicate-free");
        }
    }
}

template <TensorScalar T> SparseTensor<T> extract(const Tensor<T>& g, const IndexSet& omega) {
    if (omega.shape != g.shape()) {
        throw ValidationError("extract: index set shape " + shape_string(omega.shape) + " vs tensor " +
                              shape_string(g.shape()));
    }
    check_index_set(omega);
    SparseTensor<T> s{g.shape(), omega.offsets, {}};
    s.values.reserve(omega.size());
    for (auto o : omega.offsets) {
        s.values.push_back(g[o]);
    }
    return s;
}

template <TensorScalar T> void scatter_add(Tensor<T>& dest, const SparseTensor<T>& s, T scale) {
    if (dest.shape() != s.shape) {
        throw ValidationError("scatter_add: shape mismatch");
    }
    if (s.values.size() != s.offsets.size()) {
        throw ValidationError("scatter_add: offsets/values length mismatch");
    }
    for (std::size_t i = 0; i < s.offsets.size(); ++i) {
        dest[s.offsets[i]] += scale * s.values[i];
    }
}

template <TensorScalar T> Tensor<T> densify(const SparseTensor<T>& s) {
    Tensor<T> out(s.shape);
    scatter_add(out, s, T(1));
    return out;
}

std::vector<std::size_t> structured_counts(const Shape& shape, double rho) {
    if (!(rho > 0.0 && rho <= 1.0)) {
        throw ValidationError("density must lie in (0, 1]");
    }
    const double per_mode = std::pow(rho, 1.0 / static_cast<double>(shape.size()));
    std::vector<std::size_t> counts;
    for (auto n : shape) {
        const auto c = static_cast<std::size_t>(std::ceil(per_mode * static_cast<double>(n) - 1e-9));
        counts.push_back(std::clamp<std::size_t>(c, 1, n));
    }
    return counts;
}

template <TensorScalar T>
SliceMask structured_mask(const Tensor<T>& g, const std::vector<std::size_t>& counts, SelectStrategy strategy,
                          std::uint64_t seed) {
    if (counts.size() != g.order()) {
        throw ValidationError("structured_mask: one count per mode required");
    }
    SliceMask mask{g.shape(), {}};
    const auto strides = strides_of(g.shape());
    for (std::size_t n = 0; n < g.order(); ++n) {
        if (counts[n] < 1 || counts[n] > g.dim(n)) {
            throw ValidationError("structured_mask: count " + std::to_string(counts[n]) + " out of range for mode " +
                                  std::to_string(n));
        }
        std::vector<double> norms(g.dim(n), 0.0);
        const std::size_t inner = strides[n];
        for (std::size_t flat = 0; flat < g.size(); ++flat) {
            norms[(flat / inner) % g.dim(n)] += abs2(g[flat]);
        }
        for (auto& x : norms) {
            x = std::sqrt(x);
        }
        const std::uint64_t mode_seed = seed + 0x9e3779b97f4a7c15ULL * (n + 1);
        mask.modes.push_back(select_positions(norms, counts[n], strategy, mode_seed));
    }
    return mask;
}

std::vector<std::uint64_t> mask_offsets(const SliceMask& mask) {
    check_mask(mask);
    std::vector<std::uint64_t> out;
    out.reserve(element_count(mask.block_shape()));
    for_each_block_offset(mask, [&](std::size_t, std::size_t off) { out.push_back(off); });
    return out;  // row-major block traversal with sorted mode lists is already increasing
}

template <TensorScalar T> Tensor<T> restrict_block(const Tensor<T>& g, const SliceMask& mask) {
    if (g.shape() != mask.shape) {
        throw ValidationError("restrict_block: shape mismatch");
    }
    check_mask(mask);
    Tensor<T> block(mask.block_shape());
    for_each_block_offset(mask, [&](std::size_t b, std::size_t off) { block[b] = g[off]; });
    return block;
}

template <TensorScalar T>
void scatter_add_block(Tensor<T>& dest, const Tensor<T>& block, const SliceMask& mask, T scale) {
    if (dest.shape() != mask.shape) {
        throw ValidationError("scatter_add_block: destination shape mismatch");
    }
    check_mask(mask);
    if (block.shape() != mask.block_shape()) {
        throw ValidationError("scatter_add_block: block shape " + shape_string(block.shape()) + " vs mask " +
                              shape_string(mask.block_shape()));
    }
    for_each_block_offset(mask, [&](std::size_t b, std::size_t off) { dest[off] += scale * block[b]; });
}

template <TensorScalar T> Tensor<T> back_project(const Tensor<T>& block, const SliceMask& mask) {
    Tensor<T> out(mask.shape);
    scatter_add_block(out, block, mask, T(1));
    return out;
}

#define TGRAD_INSTANTIATE(T)                                                                              \
    template IndexSet select_indices(const Tensor<T>&, double, SelectStrategy, std::uint64_t);            \
    template SparseTensor<T> extract(const Tensor<T>&, const IndexSet&);                                  \
    template void scatter_add(Tensor<T>&, const SparseTensor<T>&, T);                                     \
    template Tensor<T> densify(const SparseTensor<T>&);                                                   \
    template SliceMask structured_mask(const Tensor<T>&, const std::vector<std::size_t>&, SelectStrategy, \
                                       std::uint64_t);                                                    \
    template Tensor<T> restrict_block(const Tensor<T>&, const SliceMask&);                                \
    template Tensor<T> back_project(const Tensor<T>&, const SliceMask&);                                  \
    template void scatter_add_block(Tensor<T>&, const Tensor<T>&, const SliceMask&, T);

TGRAD_INSTANTIATE(double)
TGRAD_INSTANTIATE(Complex)

#undef TGRAD_INSTANTIATE

}  // namespace tgrad
