#include "tgrad/spectral.hpp"

#include <cmath>
#include <numbers>

#include <Eigen/QR>

#include "tgrad/decompose.hpp"

namespace tgrad {

bool is_power_of_two(std::size_t n) { return n >= 1 && (n & (n - 1)) == 0; }

void fft_inplace(std::vector<Complex>& a, bool inverse) {
    const std::size_t n = a.size();
    if (!is_power_of_two(n)) {
        throw ValidationError("FFT length must be a power of two, got " + std::to_string(n));
    }
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) {
            j ^= bit;
        }
        j ^= bit;
        if (i < j) {
            std::swap(a[i], a[j]);
        }
    }
    // twiddles evaluated directly rather than by recurrence, to keep round-off at one ulp
    const double sign = inverse ? 1.0 : -1.0;
    std::vector<Complex> tw(n / 2 + 1);
    for (std::size_t j = 0; j < tw.size(); ++j) {
        const double ang = sign * 2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(n);
        tw[j] = Complex(std::cos(ang), std::sin(ang));
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const std::size_t stride = n / len;
        const std::size_t half = len / 2;
        for (std::size_t i = 0; i < n; i += len) {
            for (std::size_t j = 0; j < half; ++j) {
                const Complex u = a[i + j];
                const Complex v = a[i + j + half] * tw[j * stride];
                a[i + j] = u + v;
                a[i + j + half] = u - v;
            }
        }
    }
    if (inverse) {
        const double s = 1.0 / static_cast<double>(n);
        for (auto& x : a) {
            x *= s;
        }
    }
}

void fft2_inplace(std::vector<Complex>& a, std::size_t n, bool inverse) {
    if (a.size() != n * n) {
        throw ValidationError("fft2: buffer is not n x n");
    }
    std::vector<Complex> line(n);
    for (std::size_t r = 0; r < n; ++r) {
        std::copy_n(a.begin() + static_cast<std::ptrdiff_t>(r * n), n, line.begin());
        fft_inplace(line, inverse);
        std::copy_n(line.begin(), n, a.begin() + static_cast<std::ptrdiff_t>(r * n));
    }
    for (std::size_t c = 0; c < n; ++c) {
        for (std::size_t r = 0; r < n; ++r) {
            line[r] = a[r * n + c];
        }
        fft_inplace(line, inverse);
        for (std::size_t r = 0; r < n; ++r) {
            a[r * n + c] = line[r];
        }
    }
}

void TaskSpec::validate() const {
    if (!is_power_of_two(n) || n < 2 || n > 256) {
        throw ValidationError("grid size must be a power of two in [2, 256], got " + std::to_string(n));
    }
    if (dim != 1 && dim != 2) {
        throw ValidationError("dim must be 1 or 2");
    }
    if (modes < 1 || modes > n / 2) {
        throw ValidationError("retained modes must lie in [1, n/2]");
    }
    if (c_in < 1 || c_out < 1 || train < 1) {
        throw ValidationError("channels and train size must be positive");
    }
    if (!(noise >= 0.0) || !(grf_sigma > 0.0) || !(grf_tau >= 0.0) || !(grf_alpha >= 0.0)) {
        throw ValidationError("bad noise or random-field parameters");
    }
    if (data_rank > c_in) {
        throw ValidationError("data rank exceeds input channels");
    }
    if (!target_ranks.empty()) {
        check_ranks(weight_shape(), target_ranks);
    }
    if (target_spikes > element_count(weight_shape())) {
        throw ValidationError("more spikes than multiplier entries");
    }
}

Shape TaskSpec::weight_shape() const {
    Shape s{c_in, c_out, modes};
    if (dim == 2) {
        s.push_back(modes);
    }
    return s;
}

std::size_t TaskSpec::mode_count() const { return dim == 2 ? modes * modes : modes; }
std::size_t TaskSpec::grid_size() const { return dim == 2 ? n * n : n; }

namespace {

double folded(std::size_t k, std::size_t n) { return static_cast<double>(std::min(k, n - k)); }

double grf_spectrum(const TaskSpec& s, std::size_t flat) {
    double f2 = 0.0;
    if (s.dim == 1) {
        f2 = std::pow(folded(flat, s.n), 2);
    } else {
        f2 = std::pow(folded(flat / s.n, s.n), 2) + std::pow(folded(flat % s.n, s.n), 2);
    }
    return s.grf_sigma * s.grf_sigma * std::pow(f2 + s.grf_tau * s.grf_tau, -s.grf_alpha);
}

// flat FFT index of retained mode q
std::size_t mode_index(const TaskSpec& s, std::size_t q) {
    return s.dim == 1 ? q : (q / s.modes) * s.n + (q % s.modes);
}

void fft_any(std::vector<Complex>& a, const TaskSpec& s, bool inverse) {
    if (s.dim == 1) {
        fft_inplace(a, inverse);
    } else {
        fft2_inplace(a, s.n, inverse);
    }
}

// Truncated forward spectrum of one real signal.
void analyze(const double* x, const TaskSpec& s, Complex* out) {
    const std::size_t g = s.grid_size();
    std::vector<Complex> buf(x, x + g);
    fft_any(buf, s, false);
    for (std::size_t q = 0; q < s.mode_count(); ++q) {
        out[q] = buf[mode_index(s, q)];
    }
}

// Re(IFFT(zero-padded spectrum)).
void synth(const Complex* spec, const TaskSpec& s, double* out) {
    std::vector<Complex> buf(s.grid_size());
    for (std::size_t q = 0; q < s.mode_count(); ++q) {
        buf[mode_index(s, q)] = spec[q];
    }
    fft_any(buf, s, true);
    for (std::size_t i = 0; i < buf.size(); ++i) {
        out[i] = buf[i].real();
    }
}

// Re((1/grid) FFT(zero-padded spectrum)): adjoint of synth followed by analyze.
void adjoint_synth(const Complex* spec, const TaskSpec& s, double* out) {
    std::vector<Complex> buf(s.grid_size());
    for (std::size_t q = 0; q < s.mode_count(); ++q) {
        buf[mode_index(s, q)] = spec[q];
    }
    fft_any(buf, s, false);
    const double inv = 1.0 / static_cast<double>(s.grid_size());
    for (std::size_t i = 0; i < buf.size(); ++i) {
        out[i] = buf[i].real() * inv;
    }
}

Complex complex_normal(std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, std::sqrt(0.5));
    const double re = normal(rng);
    const double im = normal(rng);
    return {re, im};
}

std::vector<std::size_t> all_rows(std::size_t n) {
    std::vector<std::size_t> r(n);
    for (std::size_t i = 0; i < n; ++i) r[i] = i;
    return r;
}

ComplexTensor random_multiplier(const TaskSpec& s, std::mt19937_64& rng) {
    const Shape shape = s.weight_shape();
    const auto ranks = s.target_ranks.empty() ? shape : s.target_ranks;
    ComplexTensor core(ranks);
    for (auto& x : core.data()) {
        x = complex_normal(rng);
    }
    TuckerFactors<Complex> f;
    for (std::size_t k = 0; k < shape.size(); ++k) {
        Matrix<Complex> g(static_cast<Eigen::Index>(shape[k]), static_cast<Eigen::Index>(ranks[k]));
        for (auto& x : g.reshaped()) {
            x = complex_normal(rng);
        }
        Eigen::HouseholderQR<Matrix<Complex>> qr(g);
        f.factors.push_back(qr.householderQ() * Matrix<Complex>::Identity(g.rows(), g.cols()));
    }
    ComplexTensor r = tucker_expand(core, f);
    double peak = 0.0;
    for (const auto& x : r.data()) {
        peak = std::max(peak, std::abs(x));
    }
    r *= Complex(1.0 / peak);
    if (s.target_spikes > 0) {
        std::vector<std::size_t> idx = all_rows(r.size());
        std::shuffle(idx.begin(), idx.end(), rng);
        std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
        for (std::size_t i = 0; i < s.target_spikes; ++i) {
            r[idx[i]] += std::polar(s.spike_scale, phase(rng));
        }
    }
    return r;
}

RealTensor random_inputs(const TaskSpec& s, std::size_t count, std::mt19937_64& rng, const Eigen::MatrixXd& mix) {
    const std::size_t g = s.grid_size();
    RealTensor x(Shape{count, s.c_in, g});
    for (std::size_t i = 0; i < count; ++i) {
        if (s.data_rank == 0) {
            for (std::size_t c = 0; c < s.c_in; ++c) {
                auto z = sample_grf(s, rng);
                std::copy(z.begin(), z.end(), x.data().begin() + static_cast<std::ptrdiff_t>((i * s.c_in + c) * g));
            }
        } else {
            for (std::size_t j = 0; j < s.data_rank; ++j) {
                const auto z = sample_grf(s, rng);
                for (std::size_t c = 0; c < s.c_in; ++c) {
                    const double w = mix(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(j));
                    double* dst = x.data().data() + (i * s.c_in + c) * g;
                    for (std::size_t p = 0; p < g; ++p) {
                        dst[p] += w * z[p];
                    }
                }
            }
        }
    }
    return x;
}

}  // namespace

double grf_expected_power(const TaskSpec& spec, std::size_t k) {
    const double g = static_cast<double>(spec.grid_size());
    return g * g * grf_spectrum(spec, k) / 2.0;
}

std::vector<double> sample_grf(const TaskSpec& s, std::mt19937_64& rng) {
    const std::size_t g = s.grid_size();
    std::vector<Complex> z(g);
    for (std::size_t k = 0; k < g; ++k) {
        z[k] = complex_normal(rng) * std::sqrt(grf_spectrum(s, k));
    }
    fft_any(z, s, true);
    std::vector<double> x(g);
    for (std::size_t i = 0; i < g; ++i) {
        x[i] = z[i].real() * static_cast<double>(g);
    }
    return x;
}

ComplexTensor truncated_spectra(const RealTensor& x, const TaskSpec& s) {
    if (x.order() != 3 || x.dim(2) != s.grid_size()) {
        throw ValidationError("expected samples x channels x grid");
    }
    const std::size_t rows = x.dim(0) * x.dim(1);
    ComplexTensor out(Shape{x.dim(0), x.dim(1), s.mode_count()});
    for (std::size_t r = 0; r < rows; ++r) {
        analyze(x.data().data() + r * s.grid_size(), s, out.data().data() + r * s.mode_count());
    }
    return out;
}

RealTensor synthesize(const ComplexTensor& spectra, const TaskSpec& s) {
    if (spectra.order() != 3 || spectra.dim(2) != s.mode_count()) {
        throw ValidationError("expected samples x channels x modes");
    }
    const std::size_t rows = spectra.dim(0) * spectra.dim(1);
    RealTensor out(Shape{spectra.dim(0), spectra.dim(1), s.grid_size()});
    for (std::size_t r = 0; r < rows; ++r) {
        synth(spectra.data().data() + r * s.mode_count(), s, out.data().data() + r * s.grid_size());
    }
    return out;
}

ComplexTensor apply_multiplier(const ComplexTensor& r, const ComplexTensor& xs, const TaskSpec& s) {
    const std::size_t ci = r.dim(0);
    const std::size_t co = r.dim(1);
    const std::size_t m = s.mode_count();
    if (r.size() != ci * co * m || xs.order() != 3 || xs.dim(1) != ci || xs.dim(2) != m) {
        throw ValidationError("apply_multiplier: shape mismatch");
    }
    ComplexTensor y(Shape{xs.dim(0), co, m});
    const Complex* rp = r.data().data();
    for (std::size_t smp = 0; smp < xs.dim(0); ++smp) {
        const Complex* xp = xs.data().data() + smp * ci * m;
        Complex* yp = y.data().data() + smp * co * m;
        for (std::size_t c = 0; c < ci; ++c) {
            for (std::size_t o = 0; o < co; ++o) {
                const Complex* rr = rp + (c * co + o) * m;
                for (std::size_t q = 0; q < m; ++q) {
                    yp[o * m + q] += rr[q] * xp[c * m + q];
                }
            }
        }
    }
    return y;
}

double relative_l2(const RealTensor& y, const RealTensor& target) {
    if (y.shape() != target.shape()) {
        throw ValidationError("relative_l2: shape mismatch");
    }
    const std::size_t per = y.size() / y.dim(0);
    double total = 0.0;
    for (std::size_t s = 0; s < y.dim(0); ++s) {
        double en = 0.0;
        double tn = 0.0;
        for (std::size_t i = s * per; i < (s + 1) * per; ++i) {
            en += (y[i] - target[i]) * (y[i] - target[i]);
            tn += target[i] * target[i];
        }
        total += std::sqrt(en) / std::sqrt(tn);
    }
    return total / static_cast<double>(y.dim(0));
}

template <TensorScalar T> Tensor<T> take_rows(const Tensor<T>& t, const std::vector<std::size_t>& rows) {
    Shape s = t.shape();
    const std::size_t per = t.size() / s[0];
    s[0] = rows.size();
    Tensor<T> out(s);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= t.dim(0)) {
            throw ValidationError("row index out of range");
        }
        std::copy_n(t.data().begin() + static_cast<std::ptrdiff_t>(rows[i] * per), per,
                    out.data().begin() + static_cast<std::ptrdiff_t>(i * per));
    }
    return out;
}

template Tensor<double> take_rows(const Tensor<double>&, const std::vector<std::size_t>&);
template Tensor<Complex> take_rows(const Tensor<Complex>&, const std::vector<std::size_t>&);

namespace {

// Relative-L2 loss of predictions y against t; writes dLoss/dy (already divided by batch size) into e.
double loss_and_residual(const RealTensor& y, const RealTensor& t, RealTensor& e) {
    const std::size_t batch = y.dim(0);
    const std::size_t per = y.size() / batch;
    e = RealTensor(y.shape());
    double total = 0.0;
    for (std::size_t s = 0; s < batch; ++s) {
        double en = 0.0;
        double tn = 0.0;
        for (std::size_t i = s * per; i < (s + 1) * per; ++i) {
            en += (y[i] - t[i]) * (y[i] - t[i]);
            tn += t[i] * t[i];
        }
        en = std::sqrt(en);
        tn = std::sqrt(tn);
        if (tn == 0.0) {
            throw ValidationError("relative loss undefined for an all-zero target");
        }
        total += en / tn;
        if (en > 0.0) {
            const double scale = 1.0 / (en * tn * static_cast<double>(batch));
            for (std::size_t i = s * per; i < (s + 1) * per; ++i) {
                e[i] = (y[i] - t[i]) * scale;
            }
        }
    }
    return total / static_cast<double>(batch);
}

// Fourier multiplier sqrt(1 + |2 pi k|^2) on every signal of x. The weight is
// even in k, so the map is real and self-adjoint.
RealTensor sobolev_weight(const RealTensor& x, const TaskSpec& s) {
    const std::size_t g = s.grid_size();
    std::vector<double> w(g);
    for (std::size_t i = 0; i < g; ++i) {
        const double k2 = s.dim == 1 ? folded(i, s.n) * folded(i, s.n)
                                     : folded(i / s.n, s.n) * folded(i / s.n, s.n) + folded(i % s.n, s.n) * folded(i % s.n, s.n);
        w[i] = std::sqrt(1.0 + 4.0 * std::numbers::pi * std::numbers::pi * k2);
    }
    RealTensor out(x.shape());
    std::vector<Complex> buf(g);
    for (std::size_t row = 0; row < x.size() / g; ++row) {
        const double* src = x.data().data() + row * g;
        for (std::size_t i = 0; i < g; ++i) buf[i] = src[i];
        fft_any(buf, s, false);
        for (std::size_t i = 0; i < g; ++i) buf[i] *= w[i];
        fft_any(buf, s, true);
        double* dst = out.data().data() + row * g;
        for (std::size_t i = 0; i < g; ++i) dst[i] = buf[i].real();
    }
    return out;
}

// Loss in the task's norm with its residual pulled back to y.
double task_loss_and_residual(const RealTensor& y, const RealTensor& t, RealTensor& e, const TaskSpec& s) {
    if (!s.h1_loss) {
        return loss_and_residual(y, t, e);
    }
    RealTensor ew;
    const double loss = loss_and_residual(sobolev_weight(y, s), sobolev_weight(t, s), ew);
    e = sobolev_weight(ew, s);
    return loss;
}

double task_loss(const RealTensor& y, const RealTensor& t, const TaskSpec& s) {
    return s.h1_loss ? relative_l2(sobolev_weight(y, s), sobolev_weight(t, s)) : relative_l2(y, t);
}

// grad[c, o, q] = sum_s conj(X[s, c, q]) E[s, o, q] / grid
ComplexTensor multiplier_gradient(const ComplexTensor& xs, const ComplexTensor& es, const Shape& wshape,
                                  const TaskSpec& s) {
    const std::size_t ci = xs.dim(1);
    const std::size_t co = es.dim(1);
    const std::size_t m = s.mode_count();
    ComplexTensor g(wshape);
    Complex* gp = g.data().data();
    for (std::size_t smp = 0; smp < xs.dim(0); ++smp) {
        const Complex* xp = xs.data().data() + smp * ci * m;
        const Complex* ep = es.data().data() + smp * co * m;
        for (std::size_t c = 0; c < ci; ++c) {
            for (std::size_t o = 0; o < co; ++o) {
                Complex* gg = gp + (c * co + o) * m;
                for (std::size_t q = 0; q < m; ++q) {
                    gg[q] += std::conj(xp[c * m + q]) * ep[o * m + q];
                }
            }
        }
    }
    g *= Complex(1.0 / static_cast<double>(s.grid_size()));
    return g;
}

}  // namespace

LossGrad linear_loss_grad(const ComplexTensor& r, const ComplexTensor& xs, const RealTensor& target,
                          const TaskSpec& s, const std::vector<std::size_t>& rows) {
    const auto sel = rows.empty() ? all_rows(xs.dim(0)) : rows;
    const ComplexTensor xb = rows.empty() ? xs : take_rows(xs, sel);
    const RealTensor tb = rows.empty() ? target : take_rows(target, sel);
    const RealTensor y = synthesize(apply_multiplier(r, xb, s), s);
    RealTensor e;
    LossGrad out;
    out.loss = task_loss_and_residual(y, tb, e, s);
    out.grad = multiplier_gradient(xb, truncated_spectra(e, s), r.shape(), s);
    return out;
}

double linear_loss(const ComplexTensor& r, const ComplexTensor& xs, const RealTensor& target, const TaskSpec& s,
                   const std::vector<std::size_t>& rows) {
    const ComplexTensor xb = rows.empty() ? xs : take_rows(xs, rows);
    const RealTensor tb = rows.empty() ? target : take_rows(target, rows);
    return task_loss(synthesize(apply_multiplier(r, xb, s), s), tb, s);
}

TwoLayerLossGrad two_layer_loss_grad(const ComplexTensor& r1, const ComplexTensor& r2, const RealTensor& x,
                                     const RealTensor& target, const TaskSpec& s) {
    if (r1.dim(1) != r2.dim(0)) {
        throw ValidationError("two-layer model: hidden widths disagree");
    }
    const ComplexTensor xs = truncated_spectra(x, s);
    RealTensor h = synthesize(apply_multiplier(r1, xs, s), s);
    for (auto& v : h.data()) {
        v = std::tanh(v);
    }
    const ComplexTensor hs = truncated_spectra(h, s);
    const RealTensor y = synthesize(apply_multiplier(r2, hs, s), s);
    RealTensor e;
    TwoLayerLossGrad out;
    out.loss = task_loss_and_residual(y, target, e, s);
    const ComplexTensor es = truncated_spectra(e, s);
    out.grad2 = multiplier_gradient(hs, es, r2.shape(), s);

    // back through the second layer: Z[c, q] = sum_o r2[c, o, q] conj(E[o, q])
    const std::size_t batch = x.dim(0);
    const std::size_t hid = r2.dim(0);
    const std::size_t co = r2.dim(1);
    const std::size_t m = s.mode_count();
    const std::size_t g = s.grid_size();
    RealTensor da(h.shape());
    std::vector<Complex> z(m);
    for (std::size_t smp = 0; smp < batch; ++smp) {
        for (std::size_t c = 0; c < hid; ++c) {
            std::fill(z.begin(), z.end(), Complex{});
            for (std::size_t o = 0; o < co; ++o) {
                const Complex* rr = r2.data().data() + (c * co + o) * m;
                const Complex* ep = es.data().data() + (smp * co + o) * m;
                for (std::size_t q = 0; q < m; ++q) {
                    z[q] += rr[q] * std::conj(ep[q]);
                }
            }
            double* dst = da.data().data() + (smp * hid + c) * g;
            adjoint_synth(z.data(), s, dst);
            const double* hv = h.data().data() + (smp * hid + c) * g;
            for (std::size_t p = 0; p < g; ++p) {
                dst[p] *= 1.0 - hv[p] * hv[p];
            }
        }
    }
    out.grad1 = multiplier_gradient(xs, truncated_spectra(da, s), r1.shape(), s);
    return out;
}

double two_layer_loss(const ComplexTensor& r1, const ComplexTensor& r2, const RealTensor& x, const RealTensor& target,
                      const TaskSpec& s) {
    RealTensor h = synthesize(apply_multiplier(r1, truncated_spectra(x, s), s), s);
    for (auto& v : h.data()) {
        v = std::tanh(v);
    }
    return task_loss(synthesize(apply_multiplier(r2, truncated_spectra(h, s), s), s), target, s);
}

SpectralDataset generate_task(const TaskSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    SpectralDataset d;
    d.spec = spec;
    d.r_star = random_multiplier(spec, rng);
    Eigen::MatrixXd mix;
    if (spec.data_rank > 0) {
        std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(spec.data_rank)));
        mix.resize(static_cast<Eigen::Index>(spec.c_in), static_cast<Eigen::Index>(spec.data_rank));
        for (auto& v : mix.reshaped()) v = normal(rng);
    }
    d.x_train = random_inputs(spec, spec.train, rng, mix);
    d.x_test = random_inputs(spec, spec.test, rng, mix);
    d.xs_train = truncated_spectra(d.x_train, spec);
    d.xs_test = truncated_spectra(d.x_test, spec);
    d.y_train = synthesize(apply_multiplier(d.r_star, d.xs_train, spec), spec);
    d.y_test = synthesize(apply_multiplier(d.r_star, d.xs_test, spec), spec);
    if (spec.noise > 0.0) {
        double ms = 0.0;
        for (double v : d.y_train.data()) ms += v * v;
        const double rms = std::sqrt(ms / static_cast<double>(d.y_train.size()));
        std::normal_distribution<double> normal(0.0, spec.noise * rms);
        for (auto& v : d.y_train.data()) v += normal(rng);
        for (auto& v : d.y_test.data()) v += normal(rng);
    }
    return d;
}

}  // namespace tgrad
