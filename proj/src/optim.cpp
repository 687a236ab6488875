#include "tgrad/optim.hpp"

#include <cmath>

#include "tgrad/half.hpp"

namespace tgrad {

Composition parse_composition(std::string_view name) {
    if (name == "us-lr" || name == "us_lr") return Composition::us_lr;
    if (name == "lr-us" || name == "lr_us") return Composition::lr_us;
    if (name == "ss-lr" || name == "ss_lr") return Composition::ss_lr;
    if (name == "lr-ss" || name == "lr_ss") return Composition::lr_ss;
    if (name == "lr+us" || name == "lr_us_sum" || name == "sum") return Composition::lr_us_sum;
    if (name == "lr-only" || name == "lr_only") return Composition::lr_only;
    if (name == "sparse-only" || name == "sparse_only") return Composition::sparse_only;
    throw ValidationError("unknown composition order '" + std::string(name) +
                          "' (us-lr|lr-us|ss-lr|lr-ss|lr+us|lr-only|sparse-only)");
}

std::string_view to_string(Composition c) {
    switch (c) {
        case Composition::us_lr: return "us-lr";
        case Composition::lr_us: return "lr-us";
        case Composition::ss_lr: return "ss-lr";
        case Composition::lr_ss: return "lr-ss";
        case Composition::lr_us_sum: return "lr+us";
        case Composition::lr_only: return "lr-only";
        case Composition::sparse_only: return "sparse-only";
    }
    return "?";
}

Precision parse_precision(std::string_view name) {
    if (name == "full") return Precision::full;
    if (name == "mixed1") return Precision::mixed1;
    if (name == "mixed2") return Precision::mixed2;
    throw ValidationError("unknown precision '" + std::string(name) + "' (full|mixed1|mixed2)");
}

std::string_view to_string(Precision p) {
    switch (p) {
        case Precision::full: return "full";
        case Precision::mixed1: return "mixed1";
        case Precision::mixed2: return "mixed2";
    }
    return "?";
}

bool uses_lowrank(Composition c) { return c != Composition::sparse_only; }
bool uses_sparse(Composition c) { return c != Composition::lr_only; }
bool uses_structured(Composition c) { return c == Composition::ss_lr || c == Composition::lr_ss; }

void OptimizerConfig::validate() const {
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw ValidationError("lr must be finite and >= 0");
    if (!std::isfinite(alpha) || !std::isfinite(lambda)) throw ValidationError("alpha and lambda must be finite");
    if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
        throw ValidationError("beta1 and beta2 must lie in (0, 1)");
    }
    if (!(eps > 0.0)) throw ValidationError("eps must be > 0");
    if (gap < 1) throw ValidationError("refresh gap T must be >= 1");
    if (!(density > 0.0 && density <= 1.0)) throw ValidationError("density must lie in (0, 1]");
    if (!(rank_fraction > 0.0 && rank_fraction <= 1.0)) throw ValidationError("rank fraction must lie in (0, 1]");
    if (!(weight_decay >= 0.0)) throw ValidationError("weight decay must be >= 0");
    if (hooi.max_sweeps < 0 || !(hooi.tol >= 0.0)) throw ValidationError("bad HOOI options");
}

std::vector<std::size_t> resolve_ranks(const OptimizerConfig& cfg, const Shape& shape) {
    if (!cfg.ranks.empty()) {
        check_ranks(shape, cfg.ranks);
        return cfg.ranks;
    }
    const double per_mode = std::pow(cfg.rank_fraction, 1.0 / static_cast<double>(shape.size()));
    std::vector<std::size_t> r;
    for (auto n : shape) {
        const auto v = static_cast<std::size_t>(std::llround(per_mode * static_cast<double>(n)));
        r.push_back(std::clamp<std::size_t>(v, 1, n));
    }
    return r;
}

template <TensorScalar T>
Tensor<T> adam_update_compressed(const Tensor<T>& g, MomentPair<T>& mp, double beta1, double beta2, double eps,
                                 std::int64_t bias_step, bool half_moments) {
    if (g.shape() != mp.m.shape() || g.shape() != mp.v.shape()) {
        throw ValidationError("adam: gradient " + shape_string(g.shape()) + " vs moments " +
                              shape_string(mp.m.shape()));
    }
    if (bias_step < 1) {
        throw ValidationError("adam: bias-correction step must be >= 1");
    }
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(bias_step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(bias_step));
    Tensor<T> out(g.shape());
    for (std::size_t i = 0; i < g.size(); ++i) {
        T m = beta1 * mp.m[i] + (1.0 - beta1) * g[i];
        double v = beta2 * mp.v[i] + (1.0 - beta2) * abs2(g[i]);
        if (half_moments) {
            if constexpr (is_complex_v<T>) {
                m = T(half_round(m.real()), half_round(m.imag()));
            } else {
                m = half_round(m);
            }
            v = half_round(v);
        }
        mp.m[i] = m;
        mp.v[i] = v;
        out[i] = (m / bc1) / (std::sqrt(v / bc2) + eps);
    }
    return out;
}

namespace {

template <TensorScalar T> Tensor<T> negated(const Tensor<T>& grad, const OptimizerConfig& cfg) {
    Tensor<T> g = grad;
    for (auto& x : g.data()) {
        x = -x;
    }
    if (cfg.precision != Precision::full) {
        half_round_inplace(g);
    }
    return g;
}

template <TensorScalar T> void apply_update(Tensor<T>& w, const Tensor<T>& update, const OptimizerConfig& cfg) {
    if (cfg.weight_decay > 0.0) {
        w *= T(1.0 - cfg.lr * cfg.weight_decay);
    }
    for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] += cfg.lr * update[i];
    }
    if (cfg.precision != Precision::full) {
        half_round_inplace(w);
    }
    if (!all_finite(w)) {
        throw NumericalError("non-finite weights after optimizer step");
    }
}

template <TensorScalar T> Tensor<T> lowrank_residual(const Tensor<T>& g, const TuckerFactors<T>& f) {
    return g - tucker_expand(tucker_compress(g, f), f);
}

template <TensorScalar T> void refresh(const Tensor<T>& g, TensorGradState<T>& st, const OptimizerConfig& cfg) {
    const auto ranks = resolve_ranks(cfg, g.shape());
    const bool can_warm = st.factors.order() == g.order() && st.factors.row_dims() == g.shape() &&
                          st.factors.ranks() == ranks;
    auto fit = [&](const Tensor<T>& x) { return hooi(x, ranks, cfg.hooi, can_warm ? &st.factors : nullptr).factors; };
    const std::uint64_t seed = cfg.seed + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(st.refreshes);
    auto select = [&](const Tensor<T>& x) { return select_indices(x, cfg.density, cfg.strategy, seed); };
    auto counts = cfg.slice_counts.empty() ? structured_counts(g.shape(), cfg.density) : cfg.slice_counts;
    auto select_mask = [&](const Tensor<T>& x) { return structured_mask(x, counts, cfg.strategy, seed); };

    switch (cfg.order) {
        case Composition::us_lr:
            st.omega = select(g);
            st.factors = fit(g - densify(extract(g, st.omega)));
            break;
        case Composition::lr_us:
            st.factors = fit(g);
            st.omega = select(lowrank_residual(g, st.factors));
            break;
        case Composition::ss_lr:
            st.mask = select_mask(g);
            st.factors = fit(g - back_project(restrict_block(g, st.mask), st.mask));
            break;
        case Composition::lr_ss:
            st.factors = fit(g);
            st.mask = select_mask(lowrank_residual(g, st.factors));
            break;
        case Composition::lr_us_sum:
            st.factors = fit(g);
            st.omega = select(g);
            break;
        case Composition::lr_only:
            st.factors = fit(g);
            break;
        case Composition::sparse_only:
            st.omega = select(g);
            break;
    }

    Shape lr_shape;
    Shape sp_shape;
    if (uses_lowrank(cfg.order)) {
        lr_shape = st.factors.ranks();
    }
    if (uses_sparse(cfg.order)) {
        sp_shape = uses_structured(cfg.order) ? st.mask.block_shape() : Shape{st.omega.size()};
    }
    const bool fresh = st.refreshes == 0 || cfg.reset_moments_on_refresh || st.lowrank.m.shape() != lr_shape ||
                       st.sparse.m.shape() != sp_shape;
    if (fresh) {
        st.lowrank = lr_shape.empty() ? MomentPair<T>{} : MomentPair<T>::zeros(lr_shape);
        st.sparse = sp_shape.empty() ? MomentPair<T>{} : MomentPair<T>::zeros(sp_shape);
        st.moment_t = 0;
    }
    ++st.refreshes;
}

// Sparse values as a flat order-1 tensor so they can share the Adam routine.
template <TensorScalar T> Tensor<T> as_flat(std::vector<T> values) {
    const Shape s{values.size()};
    return Tensor<T>(s, std::move(values));
}

}  // namespace

template <TensorScalar T>
void tensorgrad_step(Tensor<T>& w, const Tensor<T>& grad, TensorGradState<T>& st, const OptimizerConfig& cfg) {
    cfg.validate();
    if (w.shape() != grad.shape()) {
        throw ValidationError("tensorgrad_step: weight " + shape_string(w.shape()) + " vs gradient " +
                              shape_string(grad.shape()));
    }
    const Tensor<T> g = negated(grad, cfg);
    if (st.t % cfg.gap == 0) {
        refresh(g, st, cfg);
    }
    if (uses_lowrank(cfg.order) && st.factors.row_dims() != g.shape()) {
        throw ValidationError("tensorgrad_step: optimizer state was built for a different shape");
    }

    const std::int64_t bias_step = st.moment_t + 1;
    const bool half_m = cfg.precision == Precision::mixed2;
    auto adam = [&](const Tensor<T>& x, MomentPair<T>& mp) {
        return adam_update_compressed(x, mp, cfg.beta1, cfg.beta2, cfg.eps, bias_step, half_m);
    };
    auto lowrank_update = [&](const Tensor<T>& x) {
        Tensor<T> out = tucker_expand(adam(tucker_compress(x, st.factors), st.lowrank), st.factors);
        out *= T(cfg.alpha);
        return out;
    };
    auto sparse_update = [&](Tensor<T>& dest, const Tensor<T>& x) {
        const auto s = extract(x, st.omega);
        const auto u = adam(as_flat(s.values), st.sparse);
        scatter_add(dest, SparseTensor<T>{s.shape, s.offsets, u.storage()}, T(cfg.lambda));
    };
    auto block_update = [&](Tensor<T>& dest, const Tensor<T>& x) {
        scatter_add_block(dest, adam(restrict_block(x, st.mask), st.sparse), st.mask, T(cfg.lambda));
    };

    Tensor<T> update(g.shape());
    switch (cfg.order) {
        case Composition::us_lr: {
            const auto s = extract(g, st.omega);
            Tensor<T> residual = g;
            scatter_add(residual, s, T(-1));
            update = lowrank_update(residual);
            sparse_update(update, g);
            break;
        }
        case Composition::lr_us: {
            const auto core = tucker_compress(g, st.factors);
            const Tensor<T> residual = g - tucker_expand(core, st.factors);
            update = tucker_expand(adam(core, st.lowrank), st.factors);
            update *= T(cfg.alpha);
            sparse_update(update, residual);
            break;
        }
        case Composition::ss_lr: {
            Tensor<T> residual = g;
            scatter_add_block(residual, restrict_block(g, st.mask), st.mask, T(-1));
            update = lowrank_update(residual);
            block_update(update, g);
            break;
        }
        case Composition::lr_ss: {
            const auto core = tucker_compress(g, st.factors);
            const Tensor<T> residual = g - tucker_expand(core, st.factors);
            update = tucker_expand(adam(core, st.lowrank), st.factors);
            update *= T(cfg.alpha);
            block_update(update, residual);
            break;
        }
        case Composition::lr_us_sum:
            update = lowrank_update(g);
            sparse_update(update, g);
            break;
        case Composition::lr_only:
            update = lowrank_update(g);
            break;
        case Composition::sparse_only:
            sparse_update(update, g);
            break;
    }
    apply_update(w, update, cfg);
    ++st.t;
    ++st.moment_t;
}

template <TensorScalar T>
void adam_step(Tensor<T>& w, const Tensor<T>& grad, DenseAdamState<T>& st, const OptimizerConfig& cfg) {
    cfg.validate();
    if (w.shape() != grad.shape()) {
        throw ValidationError("adam_step: shape mismatch");
    }
    if (st.t == 0 || st.moments.m.shape() != w.shape()) {
        st.moments = MomentPair<T>::zeros(w.shape());
    }
    const Tensor<T> g = negated(grad, cfg);
    const auto u = adam_update_compressed(g, st.moments, cfg.beta1, cfg.beta2, cfg.eps, st.t + 1,
                                          cfg.precision == Precision::mixed2);
    apply_update(w, u, cfg);
    ++st.t;
}

std::pair<std::size_t, std::size_t> galore_matrix_dims(const Shape& shape, std::size_t rollout) {
    if (rollout < 1 || rollout >= shape.size()) {
        throw ValidationError("GaLore rollout must lie in [1, order-1], got " + std::to_string(rollout) +
                              " for order " + std::to_string(shape.size()));
    }
    std::size_t rows = 1;
    for (std::size_t k = 0; k < rollout; ++k) {
        rows *= shape[k];
    }
    return {rows, element_count(shape) / rows};
}

template <TensorScalar T>
void galore_matrix_step(Tensor<T>& w, const Tensor<T>& grad, GaloreState<T>& st, const OptimizerConfig& cfg,
                        const GaloreConfig& gcfg) {
    cfg.validate();
    if (w.shape() != grad.shape()) {
        throw ValidationError("galore_matrix_step: shape mismatch");
    }
    const auto [rows, cols] = galore_matrix_dims(w.shape(), gcfg.rollout);
    const std::size_t short_side = std::min(rows, cols);
    if (gcfg.rank < 1 || gcfg.rank > short_side) {
        throw ValidationError("GaLore rank " + std::to_string(gcfg.rank) + " exceeds matrix dimension " +
                              std::to_string(short_side));
    }
    using RowMajor = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const Tensor<T> g = negated(grad, cfg);
    const auto er = static_cast<Eigen::Index>(rows);
    const auto ec = static_cast<Eigen::Index>(cols);
    const Matrix<T> gm = Eigen::Map<const RowMajor>(g.data().data(), er, ec);

    if (st.t % cfg.gap == 0) {
        st.project_left = rows <= cols;
        if (gcfg.rank == short_side) {
            st.projection = Matrix<T>::Identity(static_cast<Eigen::Index>(short_side),
                                                static_cast<Eigen::Index>(short_side));
        } else {
            auto svd = truncated_svd<T>(gm, gcfg.rank, cfg.seed);
            st.projection = st.project_left ? std::move(svd.u) : std::move(svd.v);
        }
        const Shape mshape = st.project_left ? Shape{gcfg.rank, cols} : Shape{rows, gcfg.rank};
        if (st.t == 0 || st.moments.m.shape() != mshape) {
            st.moments = MomentPair<T>::zeros(mshape);
        }
    }
    const Matrix<T> low = st.project_left ? Matrix<T>(st.projection.adjoint() * gm) : Matrix<T>(gm * st.projection);
    Tensor<T> low_t(Shape{static_cast<std::size_t>(low.rows()), static_cast<std::size_t>(low.cols())});
    Eigen::Map<RowMajor>(low_t.data().data(), low.rows(), low.cols()) = low;

    const auto u = adam_update_compressed(low_t, st.moments, cfg.beta1, cfg.beta2, cfg.eps, st.t + 1,
                                          cfg.precision == Precision::mixed2);
    const Matrix<T> um = Eigen::Map<const RowMajor>(u.data().data(), low.rows(), low.cols());
    const Matrix<T> back = st.project_left ? Matrix<T>(st.projection * um) : Matrix<T>(um * st.projection.adjoint());
    Tensor<T> update(w.shape());
    Eigen::Map<RowMajor>(update.data().data(), er, ec) = back;
    update *= T(cfg.alpha);
    apply_update(w, update, cfg);
    ++st.t;
}

OptimizerKind parse_optimizer_kind(std::string_view name) {
    if (name == "adam") return OptimizerKind::adam;
    if (name == "tensorgrad") return OptimizerKind::tensorgrad;
    if (name == "galore") return OptimizerKind::galore;
    throw ValidationError("unknown optimizer '" + std::string(name) + "' (adam|tensorgrad|galore)");
}

namespace {

template <TensorScalar T> class AdamOptimizer final : public Optimizer<T> {
public:
    explicit AdamOptimizer(OptimizerConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }
    void step(Tensor<T>& w, const Tensor<T>& grad) override { adam_step(w, grad, st_, cfg_); }
    std::string name() const override { return "adam"; }
    std::size_t moment_entries() const override { return st_.moments.entries(); }

private:
    OptimizerConfig cfg_;
    DenseAdamState<T> st_;
};

template <TensorScalar T> class TensorGradOptimizer final : public Optimizer<T> {
public:
    explicit TensorGradOptimizer(OptimizerConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }
    void step(Tensor<T>& w, const Tensor<T>& grad) override { tensorgrad_step(w, grad, st_, cfg_); }
    std::string name() const override { return "tensorgrad-" + std::string(to_string(cfg_.order)); }
    std::size_t moment_entries() const override { return st_.moment_entries(); }

private:
    OptimizerConfig cfg_;
    TensorGradState<T> st_;
};

template <TensorScalar T> class GaloreOptimizer final : public Optimizer<T> {
public:
    GaloreOptimizer(OptimizerConfig cfg, GaloreConfig gcfg) : cfg_(std::move(cfg)), gcfg_(gcfg) { cfg_.validate(); }
    void step(Tensor<T>& w, const Tensor<T>& grad) override { galore_matrix_step(w, grad, st_, cfg_, gcfg_); }
    std::string name() const override { return "galore-d" + std::to_string(gcfg_.rollout); }
    std::size_t moment_entries() const override { return st_.moments.entries(); }

private:
    OptimizerConfig cfg_;
    GaloreConfig gcfg_;
    GaloreState<T> st_;
};

}  // namespace

template <TensorScalar T>
std::unique_ptr<Optimizer<T>> make_optimizer(OptimizerKind kind, const OptimizerConfig& cfg, const GaloreConfig& gcfg) {
    switch (kind) {
        case OptimizerKind::adam: return std::make_unique<AdamOptimizer<T>>(cfg);
        case OptimizerKind::tensorgrad: return std::make_unique<TensorGradOptimizer<T>>(cfg);
        case OptimizerKind::galore: return std::make_unique<GaloreOptimizer<T>>(cfg, gcfg);
    }
    throw ValidationError("bad optimizer kind");
}

#define TGRAD_INSTANTIATE(T)                                                                                 \
    template Tensor<T> adam_update_compressed(const Tensor<T>&, MomentPair<T>&, double, double, double,      \
                                              std::int64_t, bool);                                           \
    template void tensorgrad_step(Tensor<T>&, const Tensor<T>&, TensorGradState<T>&, const OptimizerConfig&); \
    template void adam_step(Tensor<T>&, const Tensor<T>&, DenseAdamState<T>&, const OptimizerConfig&);       \
    template void galore_matrix_step(Tensor<T>&, const Tensor<T>&, GaloreState<T>&, const OptimizerConfig&,   \
                                     const GaloreConfig&);                                                   \
    template std::unique_ptr<Optimizer<T>> make_optimizer(OptimizerKind, const OptimizerConfig&,             \
                                                          const GaloreConfig&);

TGRAD_INSTANTIATE(double)
TGRAD_INSTANTIATE(Complex)

#undef TGRAD_INSTANTIATE

}  // namespace tgrad
