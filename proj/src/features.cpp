#include "dyslab/features.hpp"

#include <algorithm>
#include <cmath>

#include "dyslab/error.hpp"

namespace dyslab::features {

AudioClip to_pipeline_rate(const AudioClip& clip) {
  return clip.sample_rate == kPipelineSampleRate ? clip : resample(clip, kPipelineSampleRate);
}

Tensor detector_input(const AudioClip& clip, const FeatureConfig& cfg) {
  const auto m = dsp::mfcc(to_pipeline_rate(clip), cfg.mel, cfg.n_mfcc);
  return grid_to_input(m.coeffs, kDetectorSide);
}

SpectrogramImage mel_db_image(const AudioClip& clip, const FeatureConfig& cfg) {
  const auto db = dsp::amplitude_to_db(dsp::mel_spectrogram(to_pipeline_rate(clip), cfg.mel), kTopDb);
  SpectrogramImage out;
  out.frames = db.frames();
  out.db_min = db.data.min();
  out.db_max = db.data.max();
  out.image = dsp::normalize_01(dsp::resize_bilinear(db.data, kSpectrogramSide, kSpectrogramSide));
  return out;
}

Tensor spectrogram_input(const AudioClip& clip, const FeatureConfig& cfg) {
  return mel_db_image(clip, cfg).image.reshaped({1, kSpectrogramSide, kSpectrogramSide});
}

Tensor grid_to_input(const Tensor& grid, std::size_t side) {
  Tensor g = grid;
  if (g.rank() == 3 && g.dim(0) == 1) g = g.reshaped({g.dim(1), g.dim(2)});
  if (g.rank() != 2) {
    throw Error(ErrorCode::ShapeMismatch, "feature grid must be rank 2, got " + shape_to_string(grid.shape()));
  }
  return dsp::normalize_01(dsp::resize_bilinear(g, side, side)).reshaped({1, side, side});
}

bool is_silent(const Tensor& normalized) {
  return std::all_of(normalized.values().begin(), normalized.values().end(), [](float v) { return v == 0.0f; });
}

Tensor display_orientation(const Tensor& image) {
  if (image.rank() != 2 && image.rank() != 3) {
    throw Error(ErrorCode::ShapeMismatch, "display_orientation needs a rank-2 or rank-3 image");
  }
  const std::size_t planes = image.rank() == 3 ? image.dim(0) : 1;
  const std::size_t h = image.dim(image.rank() - 2), w = image.dim(image.rank() - 1);
  Tensor out(image.shape());
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t r = 0; r < h; ++r)
      std::copy_n(image.data() + (p * h + r) * w, w, out.data() + (p * h + (h - 1 - r)) * w);
  return out;
}

AudioClip image_to_audio(const Tensor& image, std::size_t frames, float db_min, float db_max,
                         const FeatureConfig& cfg, const dsp::GriffinLimOptions& gl) {
  Tensor grid = image;
  if (grid.rank() == 3 && grid.dim(0) == 1) grid = grid.reshaped({grid.dim(1), grid.dim(2)});
  if (grid.rank() != 2) throw Error(ErrorCode::ShapeMismatch, "image_to_audio expects a rank-2 image");
  if (frames == 0) throw Error(ErrorCode::InvalidArgument, "frame count must be positive");

  const auto n_mels = static_cast<std::size_t>(cfg.mel.n_mels);
  const Tensor db_grid = dsp::resize_bilinear(grid, n_mels, frames);

  dsp::Spectrogram mel;
  mel.data = Tensor({n_mels, frames});
  const double span = static_cast<double>(db_max) - db_min;
  for (std::size_t i = 0; i < db_grid.size(); ++i) {
    const double v = std::clamp(static_cast<double>(db_grid[i]), 0.0, 1.0);
    mel.data[i] = static_cast<float>(std::pow(10.0, (db_min + v * span) / 10.0));
  }
  mel.scale = dsp::SpecScale::MelPower;
  mel.params = cfg.mel.stft;
  mel.n_mels = cfg.mel.n_mels;

  const auto fb = dsp::mel_filterbank(cfg.mel.n_mels, cfg.mel.stft.n_fft, kPipelineSampleRate, cfg.mel.fmin,
                                      cfg.mel.fmax);
  auto linear = dsp::mel_to_linear(mel, fb);
  for (auto& v : linear.data.values()) v = std::sqrt(std::max(v, 0.0f));

  auto clip = dsp::griffin_lim(linear.data, cfg.mel.stft, gl, kPipelineSampleRate);
  float peak = 0.0f;
  for (float s : clip.samples) peak = std::max(peak, std::abs(s));
  if (peak > 0.0f) {
    const float g = 0.95f / peak;
    for (auto& s : clip.samples) s *= g;
  }
  return clip;
}

}  // namespace dyslab::features
