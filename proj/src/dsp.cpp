#include "dyslab/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <unordered_map>

#include "dyslab/error.hpp"

namespace dyslab::dsp {

void StftParams::validate() const {
  if (n_fft <= 0 || !is_power_of_two(static_cast<std::size_t>(n_fft))) {
    throw Error(ErrorCode::InvalidArgument, "n_fft must be a power of two, got " + std::to_string(n_fft));
  }
  if (hop <= 0 || hop > n_fft) {
    throw Error(ErrorCode::InvalidArgument, "hop must satisfy 0 < hop <= n_fft");
  }
}

bool is_power_of_two(std::size_t n) noexcept { return n != 0 && (n & (n - 1)) == 0; }

namespace {

const std::vector<std::complex<double>>& twiddles(std::size_t n) {
  thread_local std::unordered_map<std::size_t, std::vector<std::complex<double>>> cache;
  auto& tw = cache[n];
  if (tw.empty()) {
    tw.resize(n / 2);
    for (std::size_t k = 0; k < n / 2; ++k) {
      const double a = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
      tw[k] = {std::cos(a), std::sin(a)};
    }
  }
  return tw;
}

}  // namespace

void fft(std::vector<std::complex<double>>& x, bool inverse) {
  const std::size_t n = x.size();
  if (n <= 1) return;
  if (!is_power_of_two(n)) throw Error(ErrorCode::InvalidArgument, "fft length must be a power of two");

  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(x[i], x[j]);
  }

  const auto& tw = twiddles(n);
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    const std::size_t step = n / len;
    for (std::size_t start = 0; start < n; start += len) {
      for (std::size_t k = 0; k < half; ++k) {
        std::complex<double> w = tw[k * step];
        if (inverse) w = std::conj(w);
        const auto u = x[start + k];
        const auto v = x[start + k + half] * w;
        x[start + k] = u + v;
        x[start + k + half] = u - v;
      }
    }
  }
  if (inverse) {
    const double scale = 1.0 / static_cast<double>(n);
    for (auto& v : x) v *= scale;
  }
}

std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  }
  return w;
}

// ------------------------------------------------------------------ STFT

ComplexSpectrogram stft(std::span<const float> samples, const StftParams& p) {
  p.validate();
  if (samples.empty()) throw Error(ErrorCode::EmptySignal, "stft of an empty signal");

  const auto n = static_cast<std::size_t>(p.n_fft);
  const auto hop = static_cast<std::size_t>(p.hop);
  const std::size_t pad = n / 2;

  std::vector<double> base(samples.begin(), samples.end());
  if (base.size() < n) base.resize(n, 0.0);
  const std::size_t len = base.size();

  // numpy-style reflect padding (edge sample not repeated)
  std::vector<double> padded(len + 2 * pad);
  for (std::size_t i = 0; i < pad; ++i) {
    padded[pad - 1 - i] = base[i + 1];
    padded[pad + len + i] = base[len - 2 - i];
  }
  std::copy(base.begin(), base.end(), padded.begin() + static_cast<std::ptrdiff_t>(pad));

  const auto window = hann_window(n);
  ComplexSpectrogram out;
  out.bins = n / 2 + 1;
  out.frames = 1 + len / hop;
  out.data.resize(out.bins * out.frames);

  std::vector<std::complex<double>> buf(n);
  for (std::size_t t = 0; t < out.frames; ++t) {
    const std::size_t start = t * hop;
    for (std::size_t i = 0; i < n; ++i) buf[i] = padded[start + i] * window[i];
    fft(buf);
    for (std::size_t k = 0; k < out.bins; ++k) out.at(k, t) = buf[k];
  }
  return out;
}

ComplexSpectrogram stft(const AudioClip& clip, const StftParams& p) { return stft(clip.samples, p); }

std::vector<float> istft(const ComplexSpectrogram& spec, const StftParams& p, std::optional<std::size_t> length) {
  p.validate();
  const auto n = static_cast<std::size_t>(p.n_fft);
  const auto hop = static_cast<std::size_t>(p.hop);
  if (spec.bins != n / 2 + 1) {
    throw Error(ErrorCode::ShapeMismatch, "spectrogram has " + std::to_string(spec.bins) +
                                              " bins, expected " + std::to_string(n / 2 + 1));
  }
  const std::size_t out_len = length.value_or(spec.frames ? (spec.frames - 1) * hop : 0);
  if (spec.frames == 0) return std::vector<float>(out_len, 0.0f);

  const auto window = hann_window(n);
  const std::size_t total = n + hop * (spec.frames - 1);
  std::vector<double> acc(total, 0.0), wsum(total, 0.0);
  std::vector<std::complex<double>> buf(n);
  for (std::size_t t = 0; t < spec.frames; ++t) {
    for (std::size_t k = 0; k < spec.bins; ++k) buf[k] = spec.at(k, t);
    for (std::size_t k = spec.bins; k < n; ++k) buf[k] = std::conj(buf[n - k]);
    fft(buf, /*inverse=*/true);
    const std::size_t start = t * hop;
    for (std::size_t i = 0; i < n; ++i) {
      acc[start + i] += buf[i].real() * window[i];
      wsum[start + i] += window[i] * window[i];
    }
  }

  std::vector<float> out(out_len, 0.0f);
  const std::size_t offset = n / 2;
  for (std::size_t i = 0; i < out_len && offset + i < total; ++i) {
    const double w = wsum[offset + i];
    out[i] = w > 1e-30 ? static_cast<float>(acc[offset + i] / w) : 0.0f;
  }
  return out;
}

Spectrogram power_spectrogram(const AudioClip& clip, const StftParams& p) {
  const auto c = stft(clip, p);
  Spectrogram s;
  s.data = Tensor({c.bins, c.frames});
  for (std::size_t i = 0; i < c.data.size(); ++i) s.data[i] = static_cast<float>(std::norm(c.data[i]));
  s.scale = SpecScale::LinearPower;
  s.params = p;
  s.sample_rate = clip.sample_rate;
  return s;
}

// ------------------------------------------------------------------ mel

double hz_to_mel(double hz) noexcept { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) noexcept { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

Tensor mel_filterbank(int n_mels, int n_fft, int sample_rate, double fmin, double fmax) {
  if (n_mels < 2) throw Error(ErrorCode::BadRange, "n_mels must be >= 2");
  if (n_fft <= 0 || !is_power_of_two(static_cast<std::size_t>(n_fft))) {
    throw Error(ErrorCode::BadRange, "n_fft must be a power of two");
  }
  if (sample_rate <= 0 || fmin < 0.0 || fmin >= fmax || fmax > sample_rate / 2.0) {
    throw Error(ErrorCode::BadRange, "need 0 <= fmin < fmax <= sample_rate/2");
  }

  const auto bins = static_cast<std::size_t>(n_fft / 2 + 1);
  const double mel_lo = hz_to_mel(fmin), mel_hi = hz_to_mel(fmax);
  std::vector<double> edges(static_cast<std::size_t>(n_mels) + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) / (n_mels + 1));
  }

  Tensor fb({static_cast<std::size_t>(n_mels), bins});
  for (std::size_t m = 0; m < static_cast<std::size_t>(n_mels); ++m) {
    const double lo = edges[m], center = edges[m + 1], hi = edges[m + 2];
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / n_fft;
      double w = 0.0;
      if (f > lo && f <= center) {
        w = (f - lo) / (center - lo);
      } else if (f > center && f < hi) {
        w = (hi - f) / (hi - center);
      }
      fb.at(m, k) = static_cast<float>(w);
    }
  }
  return fb;
}

Spectrogram mel_spectrogram(const AudioClip& clip, const MelParams& p) {
  const auto power = power_spectrogram(clip, p.stft);
  const auto fb = mel_filterbank(p.n_mels, p.stft.n_fft, clip.sample_rate, p.fmin, p.fmax);
  const std::size_t mels = fb.dim(0), bins = fb.dim(1), frames = power.frames();

  Spectrogram s;
  s.data = Tensor({mels, frames});
  std::vector<double> acc(frames);
  for (std::size_t m = 0; m < mels; ++m) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t k = 0; k < bins; ++k) {
      const double w = fb.at(m, k);
      if (w == 0.0) continue;
      const float* row = power.data.data() + k * frames;
      for (std::size_t t = 0; t < frames; ++t) acc[t] += w * row[t];
    }
    for (std::size_t t = 0; t < frames; ++t) s.data.at(m, t) = static_cast<float>(acc[t]);
  }
  s.scale = SpecScale::MelPower;
  s.params = p.stft;
  s.n_mels = p.n_mels;
  s.sample_rate = clip.sample_rate;
  return s;
}

Spectrogram amplitude_to_db(const Spectrogram& s, double top_db) {
  if (s.scale != SpecScale::LinearPower && s.scale != SpecScale::MelPower) {
    throw Error(ErrorCode::InvalidArgument, "amplitude_to_db expects a power spectrogram");
  }
  constexpr double kAmin = 1e-10;
  const double ref = 10.0 * std::log10(std::max(static_cast<double>(s.data.max()), kAmin));
  Spectrogram out = s;
  for (std::size_t i = 0; i < s.data.size(); ++i) {
    const double db = 10.0 * std::log10(std::max(static_cast<double>(s.data[i]), kAmin)) - ref;
    out.data[i] = static_cast<float>(std::max(db, -top_db));
  }
  out.scale = SpecScale::Decibel;
  return out;
}

Tensor dct_matrix(int n_out, int n_in) {
  if (n_in <= 0 || n_out <= 0 || n_out > n_in) {
    throw Error(ErrorCode::InvalidArgument, "dct_matrix needs 0 < n_out <= n_in");
  }
  Tensor d({static_cast<std::size_t>(n_out), static_cast<std::size_t>(n_in)});
  for (int k = 0; k < n_out; ++k) {
    const double scale = std::sqrt((k == 0 ? 1.0 : 2.0) / n_in);
    for (int i = 0; i < n_in; ++i) {
      d.at(static_cast<std::size_t>(k), static_cast<std::size_t>(i)) =
          static_cast<float>(scale * std::cos(std::numbers::pi * k * (2.0 * i + 1.0) / (2.0 * n_in)));
    }
  }
  return d;
}

MfccMatrix mfcc_from_db(const Spectrogram& db_mel, int n_mfcc) {
  const auto n_mels = static_cast<int>(db_mel.bins());
  if (n_mfcc <= 0 || n_mfcc > n_mels) {
    throw Error(ErrorCode::InvalidArgument, "n_mfcc must be in 1..n_mels");
  }
  const auto d = dct_matrix(n_mfcc, n_mels);
  const std::size_t frames = db_mel.frames();
  MfccMatrix out;
  out.n_mfcc = n_mfcc;
  out.coeffs = Tensor({static_cast<std::size_t>(n_mfcc), frames});
  std::vector<double> acc(frames);
  for (std::size_t k = 0; k < static_cast<std::size_t>(n_mfcc); ++k) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t m = 0; m < static_cast<std::size_t>(n_mels); ++m) {
      const double w = d.at(k, m);
      for (std::size_t t = 0; t < frames; ++t) acc[t] += w * db_mel.data.at(m, t);
    }
    for (std::size_t t = 0; t < frames; ++t) out.coeffs.at(k, t) = static_cast<float>(acc[t]);
  }
  return out;
}

MfccMatrix mfcc(const AudioClip& clip, const MelParams& p, int n_mfcc) {
  if (n_mfcc > p.n_mels) throw Error(ErrorCode::InvalidArgument, "n_mfcc must not exceed n_mels");
  return mfcc_from_db(amplitude_to_db(mel_spectrogram(clip, p)), n_mfcc);
}

// ------------------------------------------------------------------ images

Tensor resize_bilinear(const Tensor& grid, std::size_t out_h, std::size_t out_w) {
  if (grid.rank() != 2) throw Error(ErrorCode::ShapeMismatch, "resize_bilinear expects a rank-2 grid");
  if (grid.empty()) throw Error(ErrorCode::InvalidArgument, "resize_bilinear of an empty grid");
  if (out_h == 0 || out_w == 0) throw Error(ErrorCode::InvalidArgument, "target size must be positive");
  const std::size_t in_h = grid.dim(0), in_w = grid.dim(1);
  if (in_h == out_h && in_w == out_w) return grid;

  auto axis = [](std::size_t in, std::size_t out) {
    std::vector<std::pair<std::size_t, double>> pos(out);
    for (std::size_t i = 0; i < out; ++i) {
      const double src = out == 1 ? 0.0 : static_cast<double>(i) * static_cast<double>(in - 1) / (out - 1);
      auto i0 = std::min(static_cast<std::size_t>(src), in - 1);
      pos[i] = {i0, src - static_cast<double>(i0)};
    }
    return pos;
  };
  const auto ys = axis(in_h, out_h), xs = axis(in_w, out_w);

  Tensor out({out_h, out_w});
  for (std::size_t r = 0; r < out_h; ++r) {
    const auto [y0, fy] = ys[r];
    const std::size_t y1 = std::min(y0 + 1, in_h - 1);
    for (std::size_t c = 0; c < out_w; ++c) {
      const auto [x0, fx] = xs[c];
      const std::size_t x1 = std::min(x0 + 1, in_w - 1);
      const double top = (1.0 - fx) * grid.at(y0, x0) + fx * grid.at(y0, x1);
      const double bottom = (1.0 - fx) * grid.at(y1, x0) + fx * grid.at(y1, x1);
      out.at(r, c) = static_cast<float>((1.0 - fy) * top + fy * bottom);
    }
  }
  return out;
}

Tensor normalize_01(const Tensor& grid) {
  Tensor out(grid.shape(), 0.0f);
  if (grid.empty()) return out;
  const double lo = grid.min(), hi = grid.max();
  if (hi == lo) return out;
  const double range = hi - lo;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    out[i] = static_cast<float>(std::clamp((grid[i] - lo) / range, 0.0, 1.0));
  }
  return out;
}

// ------------------------------------------------------------------ inversion

Spectrogram mel_to_linear(const Spectrogram& mel, const Tensor& fb) {
  if (fb.rank() != 2 || mel.data.rank() != 2 || mel.bins() != fb.dim(0)) {
    throw Error(ErrorCode::ShapeMismatch, "mel spectrogram " + shape_to_string(mel.data.shape()) +
                                              " vs filterbank " + shape_to_string(fb.shape()));
  }
  const std::size_t mels = fb.dim(0), bins = fb.dim(1), frames = mel.frames();

  std::vector<double> row_sum(mels, 0.0), col_sum(bins, 0.0);
  for (std::size_t m = 0; m < mels; ++m)
    for (std::size_t k = 0; k < bins; ++k) {
      row_sum[m] += fb.at(m, k);
      col_sum[k] += fb.at(m, k);
    }

  Spectrogram out;
  out.data = Tensor({bins, frames});
  std::vector<double> acc(frames);
  for (std::size_t k = 0; k < bins; ++k) {
    if (col_sum[k] <= 0.0) continue;
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t m = 0; m < mels; ++m) {
      const double w = fb.at(m, k);
      if (w == 0.0 || row_sum[m] <= 0.0) continue;
      const double scale = w / row_sum[m];
      for (std::size_t t = 0; t < frames; ++t) acc[t] += scale * std::max(0.0f, mel.data.at(m, t));
    }
    for (std::size_t t = 0; t < frames; ++t) out.data.at(k, t) = static_cast<float>(acc[t] / col_sum[k]);
  }
  out.scale = SpecScale::LinearPower;
  out.params = mel.params;
  out.sample_rate = mel.sample_rate;
  return out;
}

namespace {

std::vector<double> stft_magnitudes(const ComplexSpectrogram& c) {
  std::vector<double> m(c.data.size());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = std::abs(c.data[i]);
  return m;
}

}  // namespace

AudioClip griffin_lim(const Tensor& magnitude, const StftParams& p, const GriffinLimOptions& opts,
                      int sample_rate) {
  p.validate();
  if (magnitude.rank() != 2 || magnitude.dim(0) != static_cast<std::size_t>(p.n_fft / 2 + 1)) {
    throw Error(ErrorCode::ShapeMismatch, "magnitude must be [n_fft/2+1 x frames]");
  }
  ComplexSpectrogram spec;
  spec.bins = magnitude.dim(0);
  spec.frames = magnitude.dim(1);
  spec.data.resize(magnitude.size());

  if (opts.init == PhaseInit::Random) {
    std::mt19937_64 rng(opts.seed);
    std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
    for (std::size_t i = 0; i < spec.data.size(); ++i) spec.data[i] = std::polar<double>(magnitude[i], angle(rng));
  } else {
    for (std::size_t i = 0; i < spec.data.size(); ++i) spec.data[i] = {magnitude[i], 0.0};
  }

  const std::size_t length = spec.frames ? (spec.frames - 1) * static_cast<std::size_t>(p.hop) : 0;
  for (int it = 0; it < opts.n_iters && length > 0; ++it) {
    const auto y = istft(spec, p, length);
    const auto est = stft(y, p);
    for (std::size_t i = 0; i < spec.data.size(); ++i) {
      const double a = std::abs(est.data[i]);
      spec.data[i] = a > 0.0 ? est.data[i] * (static_cast<double>(magnitude[i]) / a)
                             : std::complex<double>(magnitude[i], 0.0);
    }
  }

  AudioClip clip;
  clip.sample_rate = sample_rate;
  clip.samples = istft(spec, p, length);
  return clip;
}

double spectral_convergence(const Tensor& magnitude, std::span<const float> signal, const StftParams& p) {
  const auto est = stft(signal, p);
  if (est.bins != magnitude.dim(0) || est.frames != magnitude.dim(1)) {
    throw Error(ErrorCode::ShapeMismatch, "signal does not produce the target frame count");
  }
  const auto mags = stft_magnitudes(est);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < mags.size(); ++i) {
    const double d = mags[i] - magnitude[i];
    num += d * d;
    den += static_cast<double>(magnitude[i]) * magnitude[i];
  }
  return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

}  // namespace dyslab::dsp
