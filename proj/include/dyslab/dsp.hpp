#pragma once

#include <complex>
#include <cstdint>
#include <optional>
#include <vector>

#include "dyslab/audio_io.hpp"
#include "dyslab/tensor.hpp"

namespace dyslab::dsp {

enum class Window { Hann };

struct StftParams {
  int n_fft = 1024;  // power of two
  int hop = 256;     // 0 < hop <= n_fft
  Window window = Window::Hann;

  void validate() const;
};

enum class SpecScale { LinearPower, MelPower, Decibel, Normalized };

/// Real-valued time-frequency grid, shape [bins x frames].
struct Spectrogram {
  Tensor data;
  SpecScale scale = SpecScale::LinearPower;
  StftParams params;
  std::optional<int> n_mels;
  int sample_rate = kPipelineSampleRate;

  std::size_t bins() const { return data.dim(0); }
  std::size_t frames() const { return data.dim(1); }
};

/// Complex STFT, [bins x frames] row-major, bins = n_fft/2 + 1.
struct ComplexSpectrogram {
  std::size_t bins = 0;
  std::size_t frames = 0;
  std::vector<std::complex<double>> data;

  std::complex<double>& at(std::size_t bin, std::size_t frame) { return data[bin * frames + frame]; }
  const std::complex<double>& at(std::size_t bin, std::size_t frame) const {
    return data[bin * frames + frame];
  }
};

struct MfccMatrix {
  Tensor coeffs;  // [n_mfcc x frames]
  int n_mfcc = 0;
};

// ------------------------------------------------------------------ FFT

bool is_power_of_two(std::size_t n) noexcept;

/// In-place iterative radix-2 FFT. `inverse` applies the 1/n scale.
void fft(std::vector<std::complex<double>>& x, bool inverse = false);

/// Periodic Hann window of length n.
std::vector<double> hann_window(std::size_t n);

// ------------------------------------------------------------------ STFT

/// Centered STFT: the signal is reflect-padded by n_fft/2 at both ends (after
/// zero-padding to n_fft when shorter), frames are Hann-windowed.
ComplexSpectrogram stft(std::span<const float> samples, const StftParams& p);
ComplexSpectrogram stft(const AudioClip& clip, const StftParams& p);

/// Overlap-add inverse with window-square normalization. Without `length`
/// the output spans (frames - 1) * hop samples.
std::vector<float> istft(const ComplexSpectrogram& spec, const StftParams& p,
                         std::optional<std::size_t> length = std::nullopt);

/// |X|^2 of the STFT.
Spectrogram power_spectrogram(const AudioClip& clip, const StftParams& p);

// ------------------------------------------------------------------ mel

/// HTK mel scale: 2595 * log10(1 + f / 700).
double hz_to_mel(double hz) noexcept;
double mel_to_hz(double mel) noexcept;

/// Unit-peak triangular filters, [n_mels x (n_fft/2 + 1)].
Tensor mel_filterbank(int n_mels, int n_fft, int sample_rate, double fmin, double fmax);

struct MelParams {
  StftParams stft;
  int n_mels = 128;
  double fmin = 0.0;
  double fmax = 8000.0;
};

Spectrogram mel_spectrogram(const AudioClip& clip, const MelParams& p);

/// 10*log10(max(v, 1e-10)) relative to the largest cell, floored at -top_db.
Spectrogram amplitude_to_db(const Spectrogram& s, double top_db = 80.0);

/// Orthonormal DCT-II basis, [n_out x n_in].
Tensor dct_matrix(int n_out, int n_in);

MfccMatrix mfcc(const AudioClip& clip, const MelParams& p, int n_mfcc = 13);
/// MFCC from an existing dB mel spectrogram.
MfccMatrix mfcc_from_db(const Spectrogram& db_mel, int n_mfcc);

// ------------------------------------------------------------------ images

/// Corner-aligned bilinear resize of a rank-2 grid.
Tensor resize_bilinear(const Tensor& grid, std::size_t out_h, std::size_t out_w);

/// (v - min) / (max - min); a constant grid maps to zeros.
Tensor normalize_01(const Tensor& grid);

// ------------------------------------------------------------------ inversion

/// Approximate inverse of a mel filterbank. Each mel band is spread over its
/// filter as a density (divided by the filter's row sum), projected back with
/// F^T and renormalized by the column sums. Columns no filter touches map to 0.
Spectrogram mel_to_linear(const Spectrogram& mel, const Tensor& filterbank);

enum class PhaseInit { Zero, Random };

struct GriffinLimOptions {
  int n_iters = 32;
  PhaseInit init = PhaseInit::Zero;
  std::uint64_t seed = 1337;  // only read for PhaseInit::Random
};

/// `magnitude` is a linear magnitude spectrogram [n_fft/2+1 x frames].
AudioClip griffin_lim(const Tensor& magnitude, const StftParams& p, const GriffinLimOptions& opts = {},
                      int sample_rate = kPipelineSampleRate);

/// ||(|STFT(y)| - mag)||_F / ||mag||_F.
double spectral_convergence(const Tensor& magnitude, std::span<const float> signal, const StftParams& p);

}  // namespace dyslab::dsp
