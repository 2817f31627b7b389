#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "dyslab/tensor.hpp"

namespace dyslab {

/// Every pipeline downstream of decoding assumes this rate.
inline constexpr int kPipelineSampleRate = 16000;

/// Mono waveform. Samples lie in [-1, 1].
struct AudioClip {
  std::vector<float> samples;
  int sample_rate = kPipelineSampleRate;

  double duration_seconds() const noexcept {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
};

// WAV (RIFF/WAVE). PCM16 and IEEE float32, mono or stereo. Stereo frames are
// averaged to mono, PCM16 is scaled by 1/32768.
AudioClip load_wav(const std::filesystem::path& path);
AudioClip decode_wav(std::span<const std::uint8_t> bytes);

/// PCM16 mono encoding; samples are clamped to [-1, 1] and scaled by 32768
/// (saturating at 32767), the inverse of decoding.
std::vector<std::uint8_t> encode_wav_pcm16(const AudioClip& clip);
void write_wav_pcm16(const AudioClip& clip, const std::filesystem::path& path);

/// Linear-interpolation resampling. Output length is round(n * target / source).
AudioClip resample(const AudioClip& clip, int target_rate);

// DYST tensor files:
//   "DYST" | u32 version=1 | u8 rank | rank x u32 dims | float32 payload (all LE)
void save_tensor(const Tensor& t, const std::filesystem::path& path);
Tensor load_tensor(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_tensor(const Tensor& t);
Tensor decode_tensor(std::span<const std::uint8_t> bytes);

// Binary netpbm images. Values must lie in [0, 1] and map to round(v * 255).
// Gray takes a [rows x cols] tensor, RGB takes [3 x rows x cols] planes.
std::vector<std::uint8_t> encode_pgm(const Tensor& gray);
std::vector<std::uint8_t> encode_ppm(const Tensor& rgb_planes);
void save_image_gray(const Tensor& gray, const std::filesystem::path& path);
void save_image_rgb(const Tensor& rgb_planes, const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace dyslab
