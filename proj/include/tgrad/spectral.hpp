#pragma once

// Synthetic spectral-operator regression: radix-2 FFT, Gaussian random field
// inputs, a linear spectral layer y = Re(IFFT(R . truncate(FFT x))) with a
// hand-derived gradient, and a two-layer tanh variant.

#include <random>

#include "tgrad/tensor.hpp"

namespace tgrad {

bool is_power_of_two(std::size_t n);

/// In-place radix-2 FFT. The inverse is scaled by 1/n.
void fft_inplace(std::vector<Complex>& a, bool inverse);

/// 2D FFT of an n x n row-major field.
void fft2_inplace(std::vector<Complex>& a, std::size_t n, bool inverse);

struct TaskSpec {
    std::size_t n = 64;     // grid points per axis
    std::size_t dim = 1;    // 1 or 2 spatial axes
    std::size_t c_in = 8;
    std::size_t c_out = 8;
    std::size_t modes = 16;  // retained Fourier modes per axis (frequencies 0..modes-1)
    std::size_t train = 512;
    std::size_t test = 128;
    double noise = 0.0;      // target noise, relative to the clean target RMS
    double grf_alpha = 1.0;  // input spectrum sigma^2 (f^2 + tau^2)^-alpha
    double grf_tau = 2.0;
    double grf_sigma = 1.0;
    std::size_t data_rank = 0;  // > 0: input channel profiles span this many directions
    std::vector<std::size_t> target_ranks;  // Tucker ranks of the clean multiplier; empty = full
    std::size_t target_spikes = 0;          // large isolated entries added to the multiplier
    double spike_scale = 4.0;               // spike magnitude relative to the largest low-rank entry
    bool h1_loss = false;  // measure losses in H1 (spectral derivative) instead of L2
    std::uint64_t seed = 0;

    void validate() const;
    Shape weight_shape() const;    // c_in x c_out x modes (x modes)
    std::size_t mode_count() const;  // modes^dim
    std::size_t grid_size() const;   // n^dim
};

/// Expected E|FFT(x)[k]|^2 for one GRF channel at flat frequency index k.
double grf_expected_power(const TaskSpec& spec, std::size_t k);

/// One GRF channel of length n^dim.
std::vector<double> sample_grf(const TaskSpec& spec, std::mt19937_64& rng);

struct SpectralDataset {
    TaskSpec spec;
    ComplexTensor r_star;
    RealTensor x_train, y_train, x_test, y_test;  // samples x channels x grid
    ComplexTensor xs_train, xs_test;             // samples x c_in x retained modes

    std::size_t train_size() const { return x_train.dim(0); }
    std::size_t test_size() const { return x_test.dim(0); }
};

SpectralDataset generate_task(const TaskSpec& spec);

/// samples x channels x grid -> samples x channels x retained modes (unnormalized FFT).
ComplexTensor truncated_spectra(const RealTensor& x, const TaskSpec& spec);

/// samples x channels x retained modes -> real part of the inverse FFT of the zero-padded spectrum.
RealTensor synthesize(const ComplexTensor& spectra, const TaskSpec& spec);

/// Y[s, o, q] = sum_c R[c, o, q] X[s, c, q]
ComplexTensor apply_multiplier(const ComplexTensor& r, const ComplexTensor& xs, const TaskSpec& spec);

/// Relative L2 error ||y - t|| / ||t|| averaged over samples. The model losses
/// below use the same form, in H1 when the task sets h1_loss.
double relative_l2(const RealTensor& y, const RealTensor& target);

struct LossGrad {
    double loss = 0.0;
    ComplexTensor grad;  // d/dRe + i d/dIm
};

/// Loss and gradient of the linear layer on the listed samples (all when `rows` is empty).
LossGrad linear_loss_grad(const ComplexTensor& r, const ComplexTensor& xs, const RealTensor& target,
                          const TaskSpec& spec, const std::vector<std::size_t>& rows = {});

double linear_loss(const ComplexTensor& r, const ComplexTensor& xs, const RealTensor& target, const TaskSpec& spec,
                   const std::vector<std::size_t>& rows = {});

/// y = K_{r2}(tanh(K_{r1} x)); hidden width = r1's output channels.
struct TwoLayerLossGrad {
    double loss = 0.0;
    ComplexTensor grad1;
    ComplexTensor grad2;
};

TwoLayerLossGrad two_layer_loss_grad(const ComplexTensor& r1, const ComplexTensor& r2, const RealTensor& x,
                                     const RealTensor& target, const TaskSpec& spec);

double two_layer_loss(const ComplexTensor& r1, const ComplexTensor& r2, const RealTensor& x, const RealTensor& target,
                      const TaskSpec& spec);

/// Copies the listed leading-axis slices.
template <TensorScalar T> Tensor<T> take_rows(const Tensor<T>& t, const std::vector<std::size_t>& rows);

}  // namespace tgrad
