#include "dyslab/audio_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <optional>
#include <string>

#include "binary.hpp"
#include "dyslab/error.hpp"

namespace dyslab {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

struct WavFormat {
  std::uint16_t tag = 0;
  std::uint16_t channels = 0;
  std::uint32_t sample_rate = 0;
  std::uint16_t block_align = 0;
  std::uint16_t bits = 0;
};

bool has_tag(std::span<const std::uint8_t> s, const char* tag) {
  return s.size() >= 4 && std::equal(s.begin(), s.begin() + 4, tag);
}

WavFormat parse_fmt(std::span<const std::uint8_t> chunk) {
  detail::ByteReader r(chunk);
  WavFormat f;
  f.tag = r.u16();
  f.channels = r.u16();
  f.sample_rate = r.u32();
  r.u32();  // byte rate
  f.block_align = r.u16();
  f.bits = r.u16();
  if (!r.ok()) throw Error(ErrorCode::TruncatedData, "fmt chunk too short");
  if (f.tag == kFormatExtensible) {
    r.u16();  // cbSize
    r.u16();  // valid bits
    r.u32();  // channel mask
    f.tag = r.u16();  // leading two bytes of the subformat GUID
    if (!r.ok()) throw Error(ErrorCode::TruncatedData, "extensible fmt chunk too short");
  }
  return f;
}

}  // namespace

AudioClip load_wav(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) throw Error(ErrorCode::MissingFile, path.string());
  return decode_wav(read_file_bytes(path));
}

AudioClip decode_wav(std::span<const std::uint8_t> bytes) {
  if (!has_tag(bytes, "RIFF")) throw Error(ErrorCode::BadMagic, "not a RIFF container");
  if (bytes.size() < 12 || !has_tag(bytes.subspan(8), "WAVE")) {
    throw Error(ErrorCode::BadMagic, "RIFF container is not WAVE");
  }

  detail::ByteReader r(bytes.subspan(12));
  std::optional<WavFormat> fmt;
  std::span<const std::uint8_t> payload;
  bool have_data = false;
  while (r.remaining() >= 8) {
    auto id = r.take(4);
    const std::uint32_t size = r.u32();
    if (has_tag(id, "data")) {
      if (r.remaining() < size) {
        throw Error(ErrorCode::TruncatedData, "data chunk declares " + std::to_string(size) +
                                                  " bytes, only " + std::to_string(r.remaining()) +
                                                  " present");
      }
      payload = r.take(size);
      have_data = true;
      break;
    }
    if (r.remaining() < size) throw Error(ErrorCode::TruncatedData, "chunk overruns file");
    auto body = r.take(size);
    if (has_tag(id, "fmt ")) fmt = parse_fmt(body);
    if (size % 2 == 1 && r.remaining() > 0) r.skip(1);
  }
  if (!fmt) throw Error(ErrorCode::UnsupportedEncoding, "missing fmt chunk");
  if (!have_data) throw Error(ErrorCode::TruncatedData, "missing data chunk");

  const bool pcm16 = fmt->tag == kFormatPcm && fmt->bits == 16;
  const bool float32 = fmt->tag == kFormatFloat && fmt->bits == 32;
  if (!pcm16 && !float32) {
    throw Error(ErrorCode::UnsupportedEncoding, "format tag " + std::to_string(fmt->tag) + " with " +
                                                    std::to_string(fmt->bits) + " bits");
  }
  if (fmt->channels != 1 && fmt->channels != 2) {
    throw Error(ErrorCode::UnsupportedEncoding, std::to_string(fmt->channels) + " channels");
  }
  if (fmt->sample_rate == 0) throw Error(ErrorCode::UnsupportedEncoding, "zero sample rate");

  const std::size_t bytes_per_sample = fmt->bits / 8;
  const std::size_t frame_bytes = bytes_per_sample * fmt->channels;
  const std::size_t frames = payload.size() / frame_bytes;

  AudioClip clip;
  clip.sample_rate = static_cast<int>(fmt->sample_rate);
  clip.samples.resize(frames);
  detail::ByteReader pr(payload);
  for (std::size_t i = 0; i < frames; ++i) {
    float acc = 0.0f;
    for (int c = 0; c < fmt->channels; ++c) {
      float s = pcm16 ? static_cast<float>(pr.i16()) / 32768.0f : pr.f32();
      if (!std::isfinite(s)) s = 0.0f;
      acc += std::clamp(s, -1.0f, 1.0f);
    }
    clip.samples[i] = acc / static_cast<float>(fmt->channels);
  }
  return clip;
}

std::vector<std::uint8_t> encode_wav_pcm16(const AudioClip& clip) {
  if (clip.sample_rate <= 0) throw Error(ErrorCode::InvalidArgument, "sample rate must be positive");
  const auto data_bytes = static_cast<std::uint32_t>(clip.samples.size() * 2);
  detail::ByteWriter w;
  w.bytes("RIFF");
  w.u32(36 + data_bytes);
  w.bytes("WAVE");
  w.bytes("fmt ");
  w.u32(16);
  w.u16(kFormatPcm);
  w.u16(1);
  w.u32(static_cast<std::uint32_t>(clip.sample_rate));
  w.u32(static_cast<std::uint32_t>(clip.sample_rate) * 2);
  w.u16(2);
  w.u16(16);
  w.bytes("data");
  w.u32(data_bytes);
  for (float s : clip.samples) {
    const float c = std::clamp(std::isfinite(s) ? s : 0.0f, -1.0f, 1.0f);
    w.i16(static_cast<std::int16_t>(std::clamp(std::lround(c * 32768.0f), -32768L, 32767L)));
  }
  return w.take();
}

void write_wav_pcm16(const AudioClip& clip, const std::filesystem::path& path) {
  write_file_bytes(path, encode_wav_pcm16(clip));
}

AudioClip resample(const AudioClip& clip, int target_rate) {
  if (target_rate <= 0) throw Error(ErrorCode::InvalidArgument, "target rate must be positive");
  if (clip.sample_rate <= 0) throw Error(ErrorCode::InvalidArgument, "source rate must be positive");
  if (target_rate == clip.sample_rate) return clip;

  const std::size_t n = clip.samples.size();
  const double ratio = static_cast<double>(clip.sample_rate) / target_rate;
  const auto out_len = static_cast<std::size_t>(
      std::llround(static_cast<double>(n) * target_rate / clip.sample_rate));

  AudioClip out;
  out.sample_rate = target_rate;
  out.samples.resize(out_len);
  for (std::size_t i = 0; i < out_len; ++i) {
    const double pos = static_cast<double>(i) * ratio;
    const auto i0 = static_cast<std::size_t>(pos);
    if (i0 + 1 >= n) {
      out.samples[i] = n ? clip.samples[n - 1] : 0.0f;
      continue;
    }
    const double frac = pos - static_cast<double>(i0);
    out.samples[i] =
        static_cast<float>((1.0 - frac) * clip.samples[i0] + frac * clip.samples[i0 + 1]);
  }
  return out;
}

// ---------------------------------------------------------------- DYST

std::vector<std::uint8_t> encode_tensor(const Tensor& t) {
  if (t.rank() == 0 || t.rank() > 255) {
    throw Error(ErrorCode::InvalidArgument, "tensor rank must be in 1..255");
  }
  detail::ByteWriter w;
  w.bytes("DYST");
  w.u32(1);
  w.u8(static_cast<std::uint8_t>(t.rank()));
  for (auto d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
  w.buffer().reserve(w.buffer().size() + t.size() * 4);
  for (float v : t.values()) w.f32(v);
  return w.take();
}

Tensor decode_tensor(std::span<const std::uint8_t> bytes) {
  if (!has_tag(bytes, "DYST")) throw Error(ErrorCode::BadMagic, "not a DYST tensor file");
  detail::ByteReader r(bytes.subspan(4));
  const std::uint32_t version = r.u32();
  const std::uint8_t rank = r.u8();
  if (!r.ok()) throw Error(ErrorCode::ShapeOverflow, "truncated DYST header");
  if (version != 1) throw Error(ErrorCode::BadMagic, "unsupported DYST version " + std::to_string(version));
  if (rank == 0) throw Error(ErrorCode::ShapeOverflow, "DYST rank 0");
  Shape shape(rank);
  for (auto& d : shape) d = r.u32();
  if (!r.ok()) throw Error(ErrorCode::ShapeOverflow, "truncated DYST dims");
  const std::size_t count = shape_size(shape);
  if (r.remaining() != count * 4) {
    throw Error(ErrorCode::ShapeOverflow, "shape " + shape_to_string(shape) + " declares " +
                                              std::to_string(count) + " floats, payload holds " +
                                              std::to_string(r.remaining()) + " bytes");
  }
  std::vector<float> data(count);
  for (auto& v : data) v = r.f32();
  return Tensor(std::move(shape), std::move(data));
}

void save_tensor(const Tensor& t, const std::filesystem::path& path) {
  write_file_bytes(path, encode_tensor(t));
}

Tensor load_tensor(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) throw Error(ErrorCode::MissingFile, path.string());
  return decode_tensor(read_file_bytes(path));
}

// ---------------------------------------------------------------- netpbm

namespace {

std::uint8_t to_byte(float v) {
  if (!(v >= 0.0f && v <= 1.0f)) {
    throw Error(ErrorCode::ValueOutOfRange, "pixel value " + std::to_string(v) + " outside [0,1]");
  }
  return static_cast<std::uint8_t>(std::lround(v * 255.0f));
}

std::vector<std::uint8_t> netpbm_header(const char* magic, std::size_t w, std::size_t h) {
  const std::string header =
      std::string(magic) + "\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  return {header.begin(), header.end()};
}

}  // namespace

std::vector<std::uint8_t> encode_pgm(const Tensor& gray) {
  if (gray.rank() != 2) throw Error(ErrorCode::ShapeMismatch, "gray image must be rank 2");
  auto out = netpbm_header("P5", gray.dim(1), gray.dim(0));
  out.reserve(out.size() + gray.size());
  for (float v : gray.values()) out.push_back(to_byte(v));
  return out;
}

std::vector<std::uint8_t> encode_ppm(const Tensor& rgb) {
  if (rgb.rank() != 3 || rgb.dim(0) != 3) {
    throw Error(ErrorCode::ShapeMismatch, "rgb image must be [3 x rows x cols]");
  }
  const std::size_t h = rgb.dim(1), w = rgb.dim(2);
  auto out = netpbm_header("P6", w, h);
  out.reserve(out.size() + rgb.size());
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c)
      for (std::size_t ch = 0; ch < 3; ++ch) out.push_back(to_byte(rgb.at(ch, r, c)));
  return out;
}

void save_image_gray(const Tensor& gray, const std::filesystem::path& path) {
  write_file_bytes(path, encode_pgm(gray));
}

void save_image_rgb(const Tensor& rgb, const std::filesystem::path& path) {
  write_file_bytes(path, encode_ppm(rgb));
}

}  // namespace dyslab
