#pragma once

// Numerical checks of the parametric-gradient theory: SGD on
//   G(W) = (1/N) sum_i (A_i - W x_0 B_i x_1 C_i),
// the stable-rank decay bound, contraction under fixed projections, and
// reconstruction-error statistics for robust (sparse + low-rank) compression.

#include <optional>
#include <random>

#include "tgrad/decompose.hpp"
#include "tgrad/optim.hpp"
#include "tgrad/sparsify.hpp"

namespace tgrad {

using Mat = Eigen::MatrixXd;

struct ParametricProblem {
    std::vector<RealTensor> a;  // constant terms, each of the weight's shape
    std::vector<Mat> b;         // act on mode 0, I_0 x I_0
    std::vector<Mat> c;         // act on mode 1, I_1 x I_1
    RealTensor w0;
    double eta = 0.1;

    std::size_t terms() const { return a.size(); }
    const Shape& shape() const { return w0.shape(); }
};

/// Symmetrizes every B_i and C_i as (X + X^T) / 2 and checks shapes and PSD-ness
/// (eigenvalues >= -1e-12). Throws ValidationError on failure.
void validate_problem(ParametricProblem& p);

/// (1/N) sum_i X x_0 B_i x_1 C_i
RealTensor apply_operator(const ParametricProblem& p, const RealTensor& x);

/// G(W) = (1/N) sum_i A_i - apply_operator(W)
RealTensor parametric_gradient(const ParametricProblem& p, const RealTensor& w);

struct SgdTrace {
    double eta = 0.0;
    std::vector<RealTensor> w;  // w[t], t = 0..steps
    std::vector<RealTensor> g;  // g[t] = G(w[t])
    double max_recursion_residual = 0.0;  // max_t ||G_t - (G_{t-1} - eta L(G_{t-1}))||_F / max(1, ||G_{t-1}||_F)
    bool propagated = false;
};

/// W_t = W_{t-1} + eta G_{t-1}. G_t is re-evaluated as mean(A) - L(W_t), or with
/// `propagate` carried by the equivalent recursion G_t = G_{t-1} - eta L(G_{t-1}),
/// which keeps its relative accuracy after G has decayed by many orders.
/// Throws NumericalError if ||G|| grows past 1e6 times its start.
SgdTrace simulate_parametric_sgd(const ParametricProblem& p, std::size_t steps, bool propagate = false);

struct ModeOperator {
    std::size_t mode = 0;
    Mat s;                    // acts on vec of the mode-k unfolding (column-major)
    Eigen::VectorXd eigenvalues;  // ascending
    Mat eigenvectors;
    double lambda1 = 0.0;
    double lambda2 = 0.0;
    Mat v1;  // basis of the lambda1 eigenspace (in mode-k vec coordinates)
};

inline constexpr double kEigenGapTol = 1e-9;

/// Dense matrix of apply_operator in the coordinates of vec(unfold(., k)).
/// Needs prod(shape) <= 4096. Throws if the two smallest eigenvalues are not
/// separated by more than kEigenGapTol.
ModeOperator build_mode_operator(const ParametricProblem& p, std::size_t mode);

/// Position of each row-major flat index inside vec(unfold(., k)).
std::vector<std::size_t> unfolding_vec_positions(const Shape& shape, std::size_t mode);

/// Component of g in the lambda1 eigenspace.
RealTensor project_minimal_eigenspace(const ModeOperator& op, const RealTensor& g);

struct BoundRow {
    std::size_t step = 0;
    std::size_t mode = 0;
    double stable_rank = 0.0;
    double bound = 0.0;
    double margin = 0.0;  // bound - stable_rank
};

struct BoundCheck {
    std::vector<BoundRow> rows;
    double min_margin = 0.0;
    double sr_parallel = 0.0;  // sr_k of the projected gradient at t0
};

/// Evaluates sr_k(G_t) <= sr_k(G_par) + ratio^(2(t - t0)) ||G_0 - G_par||_F^2 / ||G_par||_2^2
/// for t >= t0, where G_par projects G_{t0} on the lambda1 eigenspace. On a
/// re-evaluated trace it stops at the first step with ||G_t||_F < resolve_floor * ||G_0||_F.
BoundCheck check_stable_rank_bound(const SgdTrace& trace, const ModeOperator& op, std::size_t t0,
                                   double resolve_floor = 1e-9);

/// ((1 - eta lambda2) / (1 - eta lambda1))^2
double predicted_decay_factor(const ModeOperator& op, double eta);

/// Per-step factor of ||G_perp||^2 / ||G_par||^2 from a least-squares fit of
/// its logarithm over the last `window` steps before either component drops
/// below resolve_floor * ||G_t||_F (or 1e-7 ||G_0||_F on a re-evaluated trace).
/// Returns nullopt when fewer than 5 points remain.
std::optional<double> fitted_decay_factor(const SgdTrace& trace, const ModeOperator& op, std::size_t window,
                                          double resolve_floor = 1e-10);

// Random problems.
struct ProblemSpec {
    Shape shape{6, 6, 4};
    std::size_t terms = 3;
    bool shared_eigenbasis = true;  // B_i (and C_i) commute; keeps the minimal eigenspace decomposable
    double eig_lo = 0.1;
    double eig_hi = 1.0;
    double eta_scale = 0.9;  // eta = eta_scale / lambda_max of the operator
    std::uint64_t seed = 1;
};

Mat random_orthogonal(std::size_t n, std::mt19937_64& rng);
RealTensor random_tensor(const Shape& shape, std::mt19937_64& rng, double scale = 1.0);
ParametricProblem random_problem(const ProblemSpec& spec);

/// Largest eigenvalue of the operator (for step-size selection).
double operator_lambda_max(const ParametricProblem& p);

// Contraction with fixed projections.
struct ContractionReport {
    double kappa = 0.0;
    bool hypothesis_met = false;  // kappa > 0
    std::vector<double> residual_norms;  // ||R_t||_F, R_t = G_t projected on every mode
    std::vector<double> ratios;          // ||R_t|| / ||R_{t-1}||
    double max_violation = 0.0;          // max over t, k of ||(R_t)_(k)|| - (1 - eta kappa) ||(R_{t-1})_(k)||
    std::size_t step_budget = 0;
    std::optional<std::size_t> steps_to_tol;  // first t with ||R_t|| < tol
};

/// kappa = (1/N) sum_i lambda_min(P_0^T B_i P_0) lambda_min(P_1^T C_i P_1).
double contraction_kappa(const ParametricProblem& p, const std::vector<Mat>& projections);

/// Runs W_t = W_{t-1} + eta (G_{t-1} x_k P_k P_k^T for all k) until ||R|| < tol or
/// the analytic budget ceil(log(tol/||R_0||)/log(1 - eta kappa)) * 1.1 is used up
/// (max_steps when kappa = 0).
ContractionReport check_contraction(const ParametricProblem& p, const std::vector<Mat>& projections,
                                    double tol = 1e-8, std::size_t max_steps = 2000);

// Low-rank data (outer-product) problems.
struct OuterProductSpec {
    Shape shape{6, 6, 4};
    std::size_t terms = 6;
    std::size_t data_rank = 2;  // rank of {f_i}
    std::uint64_t seed = 1;
};

/// C_i = f_i f_i^T with rank{f_i} = data_rank, A_i = H_i x_1 f_i f_i^T, B_i full-rank PSD.
ParametricProblem outer_product_problem(const OuterProductSpec& spec);

// Projected dynamics for comparing Tucker and matrix-GaLore projections.
struct ProjectedRun {
    std::vector<std::vector<double>> stable_ranks;  // [t][mode] of G_t
    std::vector<double> grad_norms;
};

enum class ProjectionKind { none, tucker, galore };

struct ProjectionSpec {
    ProjectionKind kind = ProjectionKind::none;
    std::vector<std::size_t> ranks;  // tucker: per mode; galore: ranks[0]
    std::size_t rollout = 1;
    std::size_t refresh = 1;         // recompute the projection every `refresh` steps
};

ProjectedRun simulate_projected(const ParametricProblem& p, const ProjectionSpec& spec, std::size_t steps);

// Robust decomposition error statistics.
struct Scheme {
    std::string name;
    Composition order = Composition::us_lr;
    double density = 0.05;
    double rank_fraction = 0.2;
    SelectStrategy strategy = SelectStrategy::topk;
};

struct ErrorStats {
    double max = 0.0;
    double mean = 0.0;
    double p99 = 0.0;
};

ErrorStats error_stats(const RealTensor& g, const RealTensor& approx);

/// Sparse + low-rank reconstruction of g under a scheme (same refresh logic as the optimizer).
RealTensor robust_reconstruct(const RealTensor& g, const Scheme& scheme, std::uint64_t seed);

struct SchemeStats {
    std::string scheme;
    std::vector<ErrorStats> per_seed;
};

std::vector<SchemeStats> robust_error_stats(const RealTensor& g, const std::vector<Scheme>& schemes,
                                            const std::vector<std::uint64_t>& seeds);

/// Tucker tensor with the given ranks plus `spikes` entries of magnitude spike_scale * max|low-rank|.
RealTensor planted_lowrank_plus_spikes(const Shape& shape, const std::vector<std::size_t>& ranks, std::size_t spikes,
                                       double spike_scale, std::uint64_t seed);

/// Student-t entries with `dof` degrees of freedom.
RealTensor heavy_tailed_tensor(const Shape& shape, double dof, std::uint64_t seed);

}  // namespace tgrad
