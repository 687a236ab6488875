#pragma once

// Adam with sparse + low-rank (Tucker) gradient compression, its degenerate
// variants, dense Adam, and matrix GaLore.

#include <memory>
#include <string>

#include "tgrad/decompose.hpp"
#include "tgrad/sparsify.hpp"

namespace tgrad {

// us = unstructured sparse, ss = structured (slice) sparse, lr = low-rank.
// "a_b" runs a on the gradient and b on the residual; lr_us_sum runs both on
// the gradient and adds the reconstructions.
enum class Composition { us_lr, lr_us, ss_lr, lr_ss, lr_us_sum, lr_only, sparse_only };

enum class Precision { full, mixed1, mixed2 };

Composition parse_composition(std::string_view name);
std::string_view to_string(Composition c);
Precision parse_precision(std::string_view name);
std::string_view to_string(Precision p);

bool uses_lowrank(Composition c);
bool uses_sparse(Composition c);
bool uses_structured(Composition c);

struct OptimizerConfig {
    double lr = 1e-3;
    double alpha = 1.0;   // scale on the low-rank reconstruction
    double lambda = 1.0;  // scale on the sparse update
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::vector<std::size_t> ranks;  // explicit per-mode ranks; empty means use rank_fraction
    double rank_fraction = 0.25;     // share of the tensor's entries kept in the core
    double density = 0.05;
    std::vector<std::size_t> slice_counts;  // structured masks; empty means derive from density
    SelectStrategy strategy = SelectStrategy::topk;
    Composition order = Composition::us_lr;
    std::int64_t gap = 500;  // steps between refreshes of the index set and factors
    Precision precision = Precision::full;
    double weight_decay = 0.0;  // decoupled, applied to W before the update
    bool reset_moments_on_refresh = false;
    HooiOptions hooi;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Per-mode ranks: cfg.ranks if set, else r_n = max(1, round(I_n * f^(1/d))).
std::vector<std::size_t> resolve_ranks(const OptimizerConfig& cfg, const Shape& shape);

template <TensorScalar T> struct MomentPair {
    Tensor<T> m;
    RealTensor v;

    static MomentPair zeros(const Shape& shape) { return {Tensor<T>(shape), RealTensor(shape)}; }
    std::size_t entries() const { return m.size() + v.size(); }
};

/// One Adam step in a compressed space. `bias_step` (>= 1) is the exponent in
/// the bias corrections. With half_moments the stored M and V are rounded to
/// binary16 before the update is formed from them.
template <TensorScalar T>
Tensor<T> adam_update_compressed(const Tensor<T>& g, MomentPair<T>& moments, double beta1, double beta2, double eps,
                                 std::int64_t bias_step, bool half_moments = false);

template <TensorScalar T> struct TensorGradState {
    std::int64_t t = 0;           // steps taken
    std::int64_t moment_t = 0;    // steps since moments were last zeroed
    IndexSet omega;
    SliceMask mask;
    TuckerFactors<T> factors;
    MomentPair<T> sparse;
    MomentPair<T> lowrank;
    std::int64_t refreshes = 0;

    std::size_t moment_entries() const { return sparse.entries() + lowrank.entries(); }
};

/// One step of the compressed optimizer. `grad` is the raw loss gradient; the
/// step negates it internally and moves W along the compressed Adam direction.
template <TensorScalar T>
void tensorgrad_step(Tensor<T>& w, const Tensor<T>& grad, TensorGradState<T>& state, const OptimizerConfig& cfg);

template <TensorScalar T> struct DenseAdamState {
    std::int64_t t = 0;
    MomentPair<T> moments;
};

template <TensorScalar T>
void adam_step(Tensor<T>& w, const Tensor<T>& grad, DenseAdamState<T>& state, const OptimizerConfig& cfg);

// Matrix GaLore: the tensor is reshaped with its first `rollout` modes as rows.
struct GaloreConfig {
    std::size_t rollout = 1;
    std::size_t rank = 1;
};

template <TensorScalar T> struct GaloreState {
    std::int64_t t = 0;
    bool project_left = true;  // true: P^H G (P spans columns of G); false: G P
    Matrix<T> projection;
    MomentPair<T> moments;
};

std::pair<std::size_t, std::size_t> galore_matrix_dims(const Shape& shape, std::size_t rollout);

template <TensorScalar T>
void galore_matrix_step(Tensor<T>& w, const Tensor<T>& grad, GaloreState<T>& state, const OptimizerConfig& cfg,
                        const GaloreConfig& gcfg);

/// Uniform interface over the optimizers above, one instance per weight tensor.
template <TensorScalar T> class Optimizer {
public:
    virtual ~Optimizer() = default;
    virtual void step(Tensor<T>& w, const Tensor<T>& grad) = 0;
    virtual std::string name() const = 0;
    /// Stored moment entries (M plus V) right now.
    virtual std::size_t moment_entries() const = 0;
};

enum class OptimizerKind { adam, tensorgrad, galore };

OptimizerKind parse_optimizer_kind(std::string_view name);

template <TensorScalar T>
std::unique_ptr<Optimizer<T>> make_optimizer(OptimizerKind kind, const OptimizerConfig& cfg,
                                             const GaloreConfig& gcfg = {});

}  // namespace tgrad
