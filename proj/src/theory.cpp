#include "tgrad/theory.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

namespace tgrad {

namespace {

Mat symmetrize(const Mat& x) { return 0.5 * (x + x.transpose()); }

double min_eigenvalue(const Mat& x) {
    Eigen::SelfAdjointEigenSolver<Mat> es(x, Eigen::EigenvaluesOnly);
    return es.eigenvalues()(0);
}

RealTensor mean_of(const std::vector<RealTensor>& xs) {
    RealTensor out(xs.front().shape());
    for (const auto& x : xs) {
        out += x;
    }
    out *= 1.0 / static_cast<double>(xs.size());
    return out;
}

RealTensor project_all_modes(const RealTensor& g, const std::vector<Mat>& projections) {
    RealTensor out = g;
    for (std::size_t k = 0; k < projections.size(); ++k) {
        out = mode_product(out, Mat(projections[k] * projections[k].transpose()), k);
    }
    return out;
}

RealTensor compress_all_modes(const RealTensor& g, const std::vector<Mat>& projections) {
    RealTensor out = g;
    for (std::size_t k = 0; k < projections.size(); ++k) {
        out = mode_product(out, Mat(projections[k].transpose()), k);
    }
    return out;
}

}  // namespace

void validate_problem(ParametricProblem& p) {
    if (p.a.empty() || p.a.size() != p.b.size() || p.a.size() != p.c.size()) {
        throw ValidationError("parametric problem needs equally many A_i, B_i, C_i (at least one)");
    }
    const Shape& s = p.w0.shape();
    if (s.size() < 2) {
        throw ValidationError("parametric problem needs an order >= 2 weight");
    }
    if (!(p.eta > 0.0)) {
        throw ValidationError("step size must be positive");
    }
    for (std::size_t i = 0; i < p.terms(); ++i) {
        if (p.a[i].shape() != s) {
            throw ValidationError("A_" + std::to_string(i) + " has the wrong shape");
        }
        if (p.b[i].rows() != static_cast<Eigen::Index>(s[0]) || p.b[i].cols() != p.b[i].rows() ||
            p.c[i].rows() != static_cast<Eigen::Index>(s[1]) || p.c[i].cols() != p.c[i].rows()) {
            throw ValidationError("B_i must be I_0 x I_0 and C_i must be I_1 x I_1");
        }
        p.b[i] = symmetrize(p.b[i]);
        p.c[i] = symmetrize(p.c[i]);
        if (min_eigenvalue(p.b[i]) < -1e-12 || min_eigenvalue(p.c[i]) < -1e-12) {
            throw ValidationError("B_" + std::to_string(i) + " or C_" + std::to_string(i) + " is not PSD");
        }
    }
}

RealTensor apply_operator(const ParametricProblem& p, const RealTensor& x) {
    RealTensor out(x.shape());
    for (std::size_t i = 0; i < p.terms(); ++i) {
        out += mode_product(mode_product(x, p.b[i], 0), p.c[i], 1);
    }
    out *= 1.0 / static_cast<double>(p.terms());
    return out;
}

RealTensor parametric_gradient(const ParametricProblem& p, const RealTensor& w) {
    return mean_of(p.a) - apply_operator(p, w);
}

SgdTrace simulate_parametric_sgd(const ParametricProblem& p, std::size_t steps, bool propagate) {
    SgdTrace tr;
    tr.eta = p.eta;
    tr.propagated = propagate;
    tr.w.push_back(p.w0);
    tr.g.push_back(parametric_gradient(p, p.w0));
    const double g0 = fro_norm(tr.g[0]);
    for (std::size_t t = 1; t <= steps; ++t) {
        const RealTensor& gp = tr.g.back();
        RealTensor w = tr.w.back() + p.eta * gp;
        RealTensor rec = gp - p.eta * apply_operator(p, gp);
        RealTensor g = parametric_gradient(p, w);
        tr.max_recursion_residual =
            std::max(tr.max_recursion_residual, fro_norm(g - rec) / std::max(1.0, fro_norm(gp)));
        if (propagate) {
            g = std::move(rec);
        }
        if (!all_finite(g) || fro_norm(g) > 1e6 * std::max(g0, 1e-300)) {
            throw NumericalError("parametric SGD diverged at step " + std::to_string(t) + "; reduce eta");
        }
        tr.w.push_back(std::move(w));
        tr.g.push_back(std::move(g));
    }
    return tr;
}

std::vector<std::size_t> unfolding_vec_positions(const Shape& shape, std::size_t mode) {
    if (mode >= shape.size()) {
        throw ValidationError("mode out of range");
    }
    // column stride of each other mode in the unfolding
    std::vector<std::size_t> col_stride(shape.size(), 0);
    std::size_t s = 1;
    for (std::size_t m = 0; m < shape.size(); ++m) {
        if (m != mode) {
            col_stride[m] = s;
            s *= shape[m];
        }
    }
    const auto strides = strides_of(shape);
    const std::size_t total = element_count(shape);
    std::vector<std::size_t> pos(total);
    for (std::size_t flat = 0; flat < total; ++flat) {
        std::size_t col = 0;
        std::size_t row = 0;
        for (std::size_t m = 0; m < shape.size(); ++m) {
            const std::size_t i = (flat / strides[m]) % shape[m];
            if (m == mode) {
                row = i;
            } else {
                col += i * col_stride[m];
            }
        }
        pos[flat] = row + shape[mode] * col;
    }
    return pos;
}

ModeOperator build_mode_operator(const ParametricProblem& p, std::size_t mode) {
    const Shape& s = p.shape();
    const std::size_t n = element_count(s);
    if (n > 4096) {
        throw ValidationError("mode operator limited to 4096 unknowns, got " + std::to_string(n));
    }
    if (mode >= s.size()) {
        throw ValidationError("mode out of range");
    }
    const auto pos = unfolding_vec_positions(s, mode);
    const std::size_t i0 = s[0];
    const std::size_t i1 = s[1];
    const std::size_t rest = n / (i0 * i1);
    Mat b = Mat::Zero(static_cast<Eigen::Index>(i0), static_cast<Eigen::Index>(i0));
    ModeOperator op;
    op.mode = mode;
    op.s = Mat::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    const double inv = 1.0 / static_cast<double>(p.terms());
    for (std::size_t t = 0; t < p.terms(); ++t) {
        for (std::size_t a0 = 0; a0 < i0; ++a0) {
            for (std::size_t a1 = 0; a1 < i1; ++a1) {
                for (std::size_t b0 = 0; b0 < i0; ++b0) {
                    for (std::size_t b1 = 0; b1 < i1; ++b1) {
                        const double v = inv * p.b[t](static_cast<Eigen::Index>(a0), static_cast<Eigen::Index>(b0)) *
                                         p.c[t](static_cast<Eigen::Index>(a1), static_cast<Eigen::Index>(b1));
                        if (v == 0.0) {
                            continue;
                        }
                        for (std::size_t r = 0; r < rest; ++r) {
                            const std::size_t fa = (a0 * i1 + a1) * rest + r;
                            const std::size_t fb = (b0 * i1 + b1) * rest + r;
                            op.s(static_cast<Eigen::Index>(pos[fa]), static_cast<Eigen::Index>(pos[fb])) += v;
                        }
                    }
                }
            }
        }
    }
    Eigen::SelfAdjointEigenSolver<Mat> es(op.s);
    op.eigenvalues = es.eigenvalues();
    op.eigenvectors = es.eigenvectors();
    op.lambda1 = op.eigenvalues(0);
    const double tol = kEigenGapTol * std::max(1.0, std::abs(op.eigenvalues(op.eigenvalues.size() - 1)));
    Eigen::Index first_above = -1;
    for (Eigen::Index i = 1; i < op.eigenvalues.size(); ++i) {
        if (op.eigenvalues(i) > op.lambda1 + tol) {
            first_above = i;
            break;
        }
    }
    if (first_above < 0) {
        throw ValidationError("mode operator has a single distinct eigenvalue; lambda1 < lambda2 required");
    }
    op.lambda2 = op.eigenvalues(first_above);
    op.v1 = op.eigenvectors.leftCols(first_above);
    return op;
}

RealTensor project_minimal_eigenspace(const ModeOperator& op, const RealTensor& g) {
    const auto pos = unfolding_vec_positions(g.shape(), op.mode);
    if (static_cast<Eigen::Index>(g.size()) != op.s.rows()) {
        throw ValidationError("tensor does not match mode operator size");
    }
    Eigen::VectorXd v(static_cast<Eigen::Index>(g.size()));
    for (std::size_t f = 0; f < g.size(); ++f) {
        v(static_cast<Eigen::Index>(pos[f])) = g[f];
    }
    const Eigen::VectorXd pv = op.v1 * (op.v1.transpose() * v);
    RealTensor out(g.shape());
    for (std::size_t f = 0; f < g.size(); ++f) {
        out[f] = pv(static_cast<Eigen::Index>(pos[f]));
    }
    return out;
}

double predicted_decay_factor(const ModeOperator& op, double eta) {
    const double r = (1.0 - eta * op.lambda2) / (1.0 - eta * op.lambda1);
    return r * r;
}

BoundCheck check_stable_rank_bound(const SgdTrace& trace, const ModeOperator& op, std::size_t t0,
                                   double resolve_floor) {
    if (t0 >= trace.g.size()) {
        throw ValidationError("t0 beyond the end of the trace");
    }
    const RealTensor par = project_minimal_eigenspace(op, trace.g[t0]);
    const double par_spec = mode_spectral_norm(par, op.mode);
    if (!(par_spec > 0.0)) {
        throw ValidationError("gradient has no component in the minimal eigenspace; bound undefined");
    }
    BoundCheck out;
    out.sr_parallel = stable_rank(par, op.mode);
    const double excess = std::pow(fro_norm(trace.g[0] - par), 2) / (par_spec * par_spec);
    out.min_margin = std::numeric_limits<double>::infinity();
    const double ratio2 = predicted_decay_factor(op, trace.eta);
    // a re-evaluated G_t is mean(A) - L(W_t), whose cancellation error swamps its
    // shape once it has decayed far enough; a propagated one lasts until squared entries near underflow
    const double floor = trace.propagated ? 1e-140 : resolve_floor * fro_norm(trace.g[0]);
    for (std::size_t t = t0; t < trace.g.size(); ++t) {
        if (fro_norm(trace.g[t]) < floor) {
            break;
        }
        BoundRow row;
        row.step = t;
        row.mode = op.mode;
        row.stable_rank = stable_rank(trace.g[t], op.mode);
        row.bound = out.sr_parallel + std::pow(ratio2, static_cast<double>(t - t0)) * excess;
        row.margin = row.bound - row.stable_rank;
        out.min_margin = std::min(out.min_margin, row.margin);
        out.rows.push_back(row);
    }
    return out;
}

std::optional<double> fitted_decay_factor(const SgdTrace& trace, const ModeOperator& op, std::size_t window,
                                          double resolve_floor) {
    std::vector<double> ts;
    std::vector<double> ys;
    const double g0 = fro_norm(trace.g[0]);
    for (std::size_t t = 0; t < trace.g.size(); ++t) {
        const RealTensor par = project_minimal_eigenspace(op, trace.g[t]);
        const double pn = fro_norm(par);
        const double qn = fro_norm(trace.g[t] - par);
        // below these levels one component is lost in rounding: of the projection
        // itself, or of the mean(A) - L(W) cancellation when G is re-evaluated
        const double floor = std::max(resolve_floor * fro_norm(trace.g[t]), trace.propagated ? 0.0 : 1e-7 * g0);
        if (pn <= floor || qn <= floor) {
            break;
        }
        ts.push_back(static_cast<double>(t));
        ys.push_back(std::log((qn * qn) / (pn * pn)));
    }
    if (ts.size() > window) {
        ts.erase(ts.begin(), ts.end() - static_cast<std::ptrdiff_t>(window));
        ys.erase(ys.begin(), ys.end() - static_cast<std::ptrdiff_t>(window));
    }
    if (ts.size() < 5) {
        return std::nullopt;
    }
    const double n = static_cast<double>(ts.size());
    const double mt = std::accumulate(ts.begin(), ts.end(), 0.0) / n;
    const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
    double sxy = 0.0;
    double sxx = 0.0;
    for (std::size_t i = 0; i < ts.size(); ++i) {
        sxy += (ts[i] - mt) * (ys[i] - my);
        sxx += (ts[i] - mt) * (ts[i] - mt);
    }
    return std::exp(sxy / sxx);
}

Mat random_orthogonal(std::size_t n, std::mt19937_64& rng) {
    std::normal_distribution<double> normal;
    Mat g(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (Eigen::Index j = 0; j < g.cols(); ++j) {
        for (Eigen::Index i = 0; i < g.rows(); ++i) {
            g(i, j) = normal(rng);
        }
    }
    Eigen::HouseholderQR<Mat> qr(g);
    Mat q = qr.householderQ();
    // sign fix makes the distribution Haar
    const Mat r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (Eigen::Index j = 0; j < q.cols(); ++j) {
        if (r(j, j) < 0.0) {
            q.col(j) *= -1.0;
        }
    }
    return q;
}

RealTensor random_tensor(const Shape& shape, std::mt19937_64& rng, double scale) {
    std::normal_distribution<double> normal(0.0, scale);
    RealTensor t(shape);
    for (auto& x : t.data()) {
        x = normal(rng);
    }
    return t;
}

double operator_lambda_max(const ParametricProblem& p) {
    // power iteration on the operator itself; it is symmetric PSD in the Frobenius inner product
    std::mt19937_64 rng(0x1234);
    RealTensor x = random_tensor(p.shape(), rng);
    x *= 1.0 / fro_norm(x);
    double mu = 0.0;
    for (int it = 0; it < 2000; ++it) {
        RealTensor y = apply_operator(p, x);
        const double next = inner(x, y);
        const double ny = fro_norm(y);
        if (ny == 0.0) {
            return 0.0;
        }
        y *= 1.0 / ny;
        x = std::move(y);
        if (std::abs(next - mu) <= 1e-13 * std::abs(next)) {
            mu = next;
            break;
        }
        mu = next;
    }
    return mu;
}

ParametricProblem random_problem(const ProblemSpec& spec) {
    if (spec.shape.size() < 2) {
        throw ValidationError("random_problem: order must be >= 2");
    }
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> eig(spec.eig_lo, spec.eig_hi);
    const auto n0 = spec.shape[0];
    const auto n1 = spec.shape[1];
    const Mat qb = random_orthogonal(n0, rng);
    const Mat qc = random_orthogonal(n1, rng);
    ParametricProblem p;
    for (std::size_t i = 0; i < spec.terms; ++i) {
        const Mat ub = spec.shared_eigenbasis ? qb : random_orthogonal(n0, rng);
        const Mat uc = spec.shared_eigenbasis ? qc : random_orthogonal(n1, rng);
        Eigen::VectorXd db(static_cast<Eigen::Index>(n0));
        Eigen::VectorXd dc(static_cast<Eigen::Index>(n1));
        for (auto& x : db) x = eig(rng);
        for (auto& x : dc) x = eig(rng);
        p.b.push_back(ub * db.asDiagonal() * ub.transpose());
        p.c.push_back(uc * dc.asDiagonal() * uc.transpose());
        p.a.push_back(random_tensor(spec.shape, rng));
    }
    p.w0 = random_tensor(spec.shape, rng);
    p.eta = 1.0;
    validate_problem(p);
    p.eta = spec.eta_scale / operator_lambda_max(p);
    return p;
}

double contraction_kappa(const ParametricProblem& p, const std::vector<Mat>& projections) {
    if (projections.size() != p.shape().size()) {
        throw ValidationError("need one projection per mode");
    }
    double kappa = 0.0;
    for (std::size_t i = 0; i < p.terms(); ++i) {
        const Mat bh = projections[0].transpose() * p.b[i] * projections[0];
        const Mat ch = projections[1].transpose() * p.c[i] * projections[1];
        kappa += std::max(0.0, min_eigenvalue(bh)) * std::max(0.0, min_eigenvalue(ch));
    }
    return kappa / static_cast<double>(p.terms());
}

ContractionReport check_contraction(const ParametricProblem& p, const std::vector<Mat>& projections, double tol,
                                    std::size_t max_steps) {
    const Shape& s = p.shape();
    if (projections.size() != s.size()) {
        throw ValidationError("need one projection per mode");
    }
    for (std::size_t k = 0; k < s.size(); ++k) {
        const Mat& pk = projections[k];
        if (pk.rows() != static_cast<Eigen::Index>(s[k]) || pk.cols() < 1 || pk.cols() > pk.rows()) {
            throw ValidationError("projection " + std::to_string(k) + " has the wrong shape");
        }
        if (orthonormality_error<double>(pk) > 1e-10) {
            throw ValidationError("projection " + std::to_string(k) + " is not orthonormal");
        }
    }
    ContractionReport rep;
    rep.kappa = contraction_kappa(p, projections);
    rep.hypothesis_met = rep.kappa > 0.0;
    const double factor = 1.0 - p.eta * rep.kappa;

    RealTensor w = p.w0;
    RealTensor g = parametric_gradient(p, w);
    RealTensor r = compress_all_modes(g, projections);
    rep.residual_norms.push_back(fro_norm(r));
    const double r0 = rep.residual_norms[0];
    std::size_t budget = max_steps;
    if (rep.hypothesis_met && factor > 0.0 && factor < 1.0 && r0 > tol) {
        const double raw = std::ceil(std::log(tol / r0) / std::log(factor));
        budget = static_cast<std::size_t>(std::ceil(raw * 1.1));
    } else if (r0 <= tol) {
        budget = 0;
    }
    rep.step_budget = budget;
    if (r0 < tol) {
        rep.steps_to_tol = 0;
    }
    for (std::size_t t = 1; t <= budget && !rep.steps_to_tol; ++t) {
        w += p.eta * project_all_modes(g, projections);
        g = parametric_gradient(p, w);
        RealTensor rn = compress_all_modes(g, projections);
        if (rep.hypothesis_met) {
            for (std::size_t k = 0; k < s.size(); ++k) {
                const double lhs = unfold(rn, k).norm();
                const double rhs = factor * unfold(r, k).norm();
                rep.max_violation = std::max(rep.max_violation, lhs - rhs);
            }
        }
        const double nr = fro_norm(rn);
        rep.ratios.push_back(nr / rep.residual_norms.back());
        rep.residual_norms.push_back(nr);
        r = std::move(rn);
        if (nr < tol) {
            rep.steps_to_tol = t;
        }
    }
    return rep;
}

ParametricProblem outer_product_problem(const OuterProductSpec& spec) {
    const Shape& s = spec.shape;
    if (s.size() < 2) {
        throw ValidationError("outer_product_problem: order must be >= 2");
    }
    if (spec.data_rank < 1 || spec.data_rank > s[1] || spec.data_rank > spec.terms) {
        throw ValidationError("data rank must lie in [1, min(I_1, terms)]");
    }
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> eig(0.5, 1.5);
    Mat basis(static_cast<Eigen::Index>(s[1]), static_cast<Eigen::Index>(spec.data_rank));
    for (auto& x : basis.reshaped()) x = normal(rng);
    ParametricProblem p;
    for (std::size_t i = 0; i < spec.terms; ++i) {
        Eigen::VectorXd coef(static_cast<Eigen::Index>(spec.data_rank));
        for (auto& x : coef) x = normal(rng);
        if (i < spec.data_rank) {
            coef.setZero();
            coef(static_cast<Eigen::Index>(i)) = 1.0;  // first terms pin the span to the full basis
        }
        const Eigen::VectorXd f = basis * coef / std::sqrt(static_cast<double>(s[1]));
        const Mat c = f * f.transpose();
        const Mat ub = random_orthogonal(s[0], rng);
        Eigen::VectorXd db(static_cast<Eigen::Index>(s[0]));
        for (auto& x : db) x = eig(rng);
        p.b.push_back(ub * db.asDiagonal() * ub.transpose());
        p.c.push_back(c);
        p.a.push_back(mode_product(random_tensor(s, rng), c, 1));
    }
    p.w0 = random_tensor(s, rng, 0.1);
    p.eta = 1.0;
    validate_problem(p);
    p.eta = 0.9 / operator_lambda_max(p);
    return p;
}

namespace {

std::vector<Mat> tucker_projections(const RealTensor& g, const std::vector<std::size_t>& ranks) {
    auto f = hosvd_init(g, ranks);
    return f.factors;
}

RealTensor galore_project(const RealTensor& g, std::size_t rollout, std::size_t rank, Mat& proj, bool& left,
                          bool refresh) {
    const auto [rows, cols] = galore_matrix_dims(g.shape(), rollout);
    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const Mat gm = Eigen::Map<const RowMajor>(g.data().data(), static_cast<Eigen::Index>(rows),
                                              static_cast<Eigen::Index>(cols));
    if (refresh) {
        left = rows <= cols;
        auto svd = truncated_svd<double>(gm, rank);
        proj = left ? svd.u : svd.v;
    }
    const Mat pm = left ? Mat(proj * (proj.transpose() * gm)) : Mat((gm * proj) * proj.transpose());
    RealTensor out(g.shape());
    Eigen::Map<RowMajor>(out.data().data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)) = pm;
    return out;
}

}  // namespace

ProjectedRun simulate_projected(const ParametricProblem& p, const ProjectionSpec& spec, std::size_t steps) {
    if (spec.refresh < 1) {
        throw ValidationError("refresh period must be >= 1");
    }
    ProjectedRun run;
    RealTensor w = p.w0;
    std::vector<Mat> tucker;
    Mat gal;
    bool left = true;
    for (std::size_t t = 0; t <= steps; ++t) {
        const RealTensor g = parametric_gradient(p, w);
        const double gn = fro_norm(g);
        run.grad_norms.push_back(gn);
        run.stable_ranks.push_back(gn > 0.0 ? stable_ranks(g) : std::vector<double>(g.order(), 0.0));
        if (t == steps || gn == 0.0) {
            break;
        }
        const bool refresh = t % spec.refresh == 0;
        switch (spec.kind) {
            case ProjectionKind::none:
                w += p.eta * g;
                break;
            case ProjectionKind::tucker:
                if (refresh) {
                    tucker = tucker_projections(g, spec.ranks);
                }
                w += p.eta * project_all_modes(g, tucker);
                break;
            case ProjectionKind::galore:
                w += p.eta * galore_project(g, spec.rollout, spec.ranks.at(0), gal, left, refresh);
                break;
        }
        if (!all_finite(w)) {
            throw NumericalError("projected dynamics diverged");
        }
    }
    return run;
}

ErrorStats error_stats(const RealTensor& g, const RealTensor& approx) {
    if (g.shape() != approx.shape()) {
        throw ValidationError("error_stats: shape mismatch");
    }
    std::vector<double> e(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        e[i] = std::abs(g[i] - approx[i]);
    }
    ErrorStats s;
    s.mean = std::accumulate(e.begin(), e.end(), 0.0) / static_cast<double>(e.size());
    std::sort(e.begin(), e.end());
    s.max = e.back();
    const auto rank = static_cast<std::size_t>(std::ceil(0.99 * static_cast<double>(e.size())));
    s.p99 = e[std::max<std::size_t>(rank, 1) - 1];
    return s;
}

RealTensor robust_reconstruct(const RealTensor& g, const Scheme& sc, std::uint64_t seed) {
    OptimizerConfig cfg;
    cfg.rank_fraction = sc.rank_fraction;
    const auto ranks = resolve_ranks(cfg, g.shape());
    auto lowrank = [&](const RealTensor& x) {
        const auto f = hooi(x, ranks).factors;
        return tucker_expand(tucker_compress(x, f), f);
    };
    auto sparse = [&](const RealTensor& x) {
        return densify(extract(x, select_indices(x, sc.density, sc.strategy, seed)));
    };
    auto block = [&](const RealTensor& x) {
        const auto mask = structured_mask(x, structured_counts(x.shape(), sc.density), sc.strategy, seed);
        return back_project(restrict_block(x, mask), mask);
    };
    switch (sc.order) {
        case Composition::us_lr: {
            const RealTensor s = sparse(g);
            return s + lowrank(g - s);
        }
        case Composition::lr_us: {
            const RealTensor l = lowrank(g);
            return l + sparse(g - l);
        }
        case Composition::ss_lr: {
            const RealTensor s = block(g);
            return s + lowrank(g - s);
        }
        case Composition::lr_ss: {
            const RealTensor l = lowrank(g);
            return l + block(g - l);
        }
        case Composition::lr_us_sum:
            return lowrank(g) + sparse(g);
        case Composition::lr_only:
            return lowrank(g);
        case Composition::sparse_only:
            return sparse(g);
    }
    throw ValidationError("bad composition");
}

std::vector<SchemeStats> robust_error_stats(const RealTensor& g, const std::vector<Scheme>& schemes,
                                            const std::vector<std::uint64_t>& seeds) {
    std::vector<SchemeStats> out;
    for (const auto& sc : schemes) {
        SchemeStats st{sc.name, {}};
        for (auto seed : seeds) {
            st.per_seed.push_back(error_stats(g, robust_reconstruct(g, sc, seed)));
        }
        out.push_back(std::move(st));
    }
    return out;
}

RealTensor planted_lowrank_plus_spikes(const Shape& shape, const std::vector<std::size_t>& ranks, std::size_t spikes,
                                       double spike_scale, std::uint64_t seed) {
    check_ranks(shape, ranks);
    std::mt19937_64 rng(seed);
    RealTensor core = random_tensor(ranks, rng);
    TuckerFactors<double> f;
    for (std::size_t k = 0; k < shape.size(); ++k) {
        f.factors.push_back(random_orthogonal(shape[k], rng).leftCols(static_cast<Eigen::Index>(ranks[k])));
    }
    RealTensor t = tucker_expand(core, f);
    double peak = 0.0;
    for (double x : t.data()) {
        peak = std::max(peak, std::abs(x));
    }
    if (spikes > t.size()) {
        throw ValidationError("more spikes than entries");
    }
    const auto where = weighted_sample_without_replacement(std::vector<double>(t.size(), 1.0), spikes, rng());
    std::bernoulli_distribution sign;
    for (auto i : where) {
        t[i] += (sign(rng) ? 1.0 : -1.0) * spike_scale * peak;
    }
    return t;
}

RealTensor heavy_tailed_tensor(const Shape& shape, double dof, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::student_t_distribution<double> st(dof);
    RealTensor t(shape);
    for (auto& x : t.data()) {
        x = st(rng);
    }
    return t;
}

}  // namespace tgrad
