#pragma once

// Audio -> model-input pipelines shared by training, the CLI and the service.

#include <cstddef>

#include "dyslab/audio_io.hpp"
#include "dyslab/dsp.hpp"

namespace dyslab::features {

inline constexpr std::size_t kDetectorSide = 64;
inline constexpr std::size_t kSpectrogramSide = 128;
inline constexpr double kTopDb = 80.0;

struct FeatureConfig {
  dsp::MelParams mel;  // n_fft 1024, hop 256, 128 mels, 0..8000 Hz
  int n_mfcc = 13;
};

/// Resamples to the pipeline rate when needed.
AudioClip to_pipeline_rate(const AudioClip& clip);

/// MFCC matrix resized to 64x64, min-max normalized, shape [1 x 64 x 64].
Tensor detector_input(const AudioClip& clip, const FeatureConfig& cfg = {});

/// dB mel spectrogram image plus what is needed to undo the resize.
struct SpectrogramImage {
  Tensor image;  // [128 x 128] in [0,1]
  std::size_t frames = 0;
  float db_min = 0.0f;
  float db_max = 0.0f;
};

SpectrogramImage mel_db_image(const AudioClip& clip, const FeatureConfig& cfg = {});

/// mel_db_image reshaped to the [1 x 128 x 128] model input.
Tensor spectrogram_input(const AudioClip& clip, const FeatureConfig& cfg = {});

/// Arbitrary rank-2 (or [1 x H x W]) grid -> resized, normalized [1 x side x side].
Tensor grid_to_input(const Tensor& grid, std::size_t side);

/// True when a normalized feature image carries no signal (all zeros).
bool is_silent(const Tensor& normalized);

/// Rows reversed (per plane for [C x H x W]) so the lowest mel band ends up
/// at the bottom of a rendered image.
Tensor display_orientation(const Tensor& image);

/// Inverse path for a predicted [128 x 128] image: resize back to `frames`,
/// map [0,1] onto [db_min, db_max], undo dB, invert the mel filterbank and run
/// Griffin-Lim. The result is peak-normalized to 0.95 when non-silent.
AudioClip image_to_audio(const Tensor& image, std::size_t frames, float db_min, float db_max,
                         const FeatureConfig& cfg = {}, const dsp::GriffinLimOptions& gl = {});

}  // namespace dyslab::features
