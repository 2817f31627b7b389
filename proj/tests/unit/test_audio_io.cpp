#include <doctest.h>

#include <cstring>

#include "dyslab/audio_io.hpp"
#include "support/check.hpp"

using namespace dyslab;
using dyslab::testing::error_of;

namespace {

void put16(std::vector<std::uint8_t>& b, std::uint16_t v) {
  b.push_back(v & 0xff);
  b.push_back(v >> 8);
}
void put32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back((v >> (8 * i)) & 0xff);
}
void tag(std::vector<std::uint8_t>& b, const char* t) { b.insert(b.end(), t, t + 4); }

// Minimal reference WAV writer, independent of encode_wav_pcm16.
std::vector<std::uint8_t> wav(std::uint16_t format, std::uint16_t channels, std::uint32_t sr, std::uint16_t bits,
                              const std::vector<std::uint8_t>& payload, std::uint32_t declared = 0xffffffff) {
  std::vector<std::uint8_t> b;
  tag(b, "RIFF");
  put32(b, 36 + static_cast<std::uint32_t>(payload.size()));
  tag(b, "WAVE");
  tag(b, "fmt ");
  put32(b, 16);
  put16(b, format);
  put16(b, channels);
  put32(b, sr);
  put32(b, sr * channels * bits / 8);
  put16(b, static_cast<std::uint16_t>(channels * bits / 8));
  put16(b, bits);
  tag(b, "data");
  put32(b, declared == 0xffffffff ? static_cast<std::uint32_t>(payload.size()) : declared);
  b.insert(b.end(), payload.begin(), payload.end());
  return b;
}

std::vector<std::uint8_t> pcm16(std::initializer_list<int> samples) {
  std::vector<std::uint8_t> p;
  for (int s : samples) put16(p, static_cast<std::uint16_t>(static_cast<std::int16_t>(s)));
  return p;
}

}  // namespace

TEST_CASE("pcm16 full-scale sample scales by 1/32768") {
  const auto clip = decode_wav(wav(1, 1, 16000, 16, pcm16({32767})));
  REQUIRE(clip.samples.size() == 1);
  CHECK(clip.samples[0] == doctest::Approx(32767.0 / 32768.0).epsilon(1e-7));
  CHECK(clip.sample_rate == 16000);
}

TEST_CASE("stereo frames average to mono") {
  const auto clip = decode_wav(wav(1, 2, 8000, 16, pcm16({16384, -16384, 32767, 32767})));
  REQUIRE(clip.samples.size() == 2);
  CHECK(clip.samples[0] == 0.0f);
  CHECK(clip.samples[1] == doctest::Approx(32767.0 / 32768.0));
  CHECK(clip.sample_rate == 8000);
}

TEST_CASE("float32 wav decodes") {
  std::vector<std::uint8_t> p(8);
  const float a = 0.25f, b = -1.0f;
  std::memcpy(p.data(), &a, 4);
  std::memcpy(p.data() + 4, &b, 4);
  const auto clip = decode_wav(wav(3, 1, 22050, 32, p));
  REQUIRE(clip.samples.size() == 2);
  CHECK(clip.samples[0] == 0.25f);
  CHECK(clip.samples[1] == -1.0f);
}

TEST_CASE("wav decode errors") {
  auto bytes = wav(1, 1, 16000, 16, pcm16({1, 2}));
  SUBCASE("RIFX is not RIFF") {
    std::memcpy(bytes.data(), "RIFX", 4);
    CHECK(error_of([&] { decode_wav(bytes); }) == "BadMagic");
  }
  SUBCASE("empty input") { CHECK(error_of([] { decode_wav({}); }) == "BadMagic"); }
  SUBCASE("mu-law codec") {
    CHECK(error_of([] { decode_wav(wav(7, 1, 8000, 8, {1, 2})); }) == "UnsupportedEncoding");
  }
  SUBCASE("24-bit pcm") {
    CHECK(error_of([] { decode_wav(wav(1, 1, 8000, 24, {1, 2, 3})); }) == "UnsupportedEncoding");
  }
  SUBCASE("three channels") {
    CHECK(error_of([] { decode_wav(wav(1, 3, 8000, 16, pcm16({1, 2, 3}))); }) == "UnsupportedEncoding");
  }
  SUBCASE("data chunk shorter than declared") {
    CHECK(error_of([] { decode_wav(wav(1, 1, 8000, 16, pcm16({1, 2}), 400)); }) == "TruncatedData");
  }
  SUBCASE("missing file") { CHECK(error_of([] { load_wav("/nonexistent/clip.wav"); }) == "MissingFile"); }
}

TEST_CASE("unknown chunks before data are skipped") {
  auto bytes = wav(1, 1, 16000, 16, pcm16({100, -100}));
  std::vector<std::uint8_t> list;
  tag(list, "LIST");
  put32(list, 3);
  list.insert(list.end(), {'a', 'b', 'c', 0});  // odd size, padded
  bytes.insert(bytes.begin() + 36, list.begin(), list.end());
  const auto clip = decode_wav(bytes);
  REQUIRE(clip.samples.size() == 2);
  CHECK(clip.samples[0] == doctest::Approx(100.0 / 32768.0));
}

TEST_CASE("wav round trip within one quantization step") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  AudioClip c;
  c.sample_rate = 16000;
  for (int i = 0; i < 2000; ++i) c.samples.push_back(u(rng));
  const auto back = decode_wav(encode_wav_pcm16(c));
  REQUIRE(back.samples.size() == c.samples.size());
  for (std::size_t i = 0; i < c.samples.size(); ++i) CHECK(std::abs(back.samples[i] - c.samples[i]) <= 1.0 / 32768);
}

TEST_CASE("pcm16 buffers survive decode and re-encode bit-exactly") {
  const auto bytes = wav(1, 1, 16000, 16, pcm16({0, 1, -1, 32767, -32768, 12345, -23456}));
  const auto clip = decode_wav(bytes);
  CHECK(clip.samples[3] == 32767.0f / 32768.0f);
  CHECK(clip.samples[4] == -1.0f);
  CHECK(encode_wav_pcm16(clip) == bytes);
}

TEST_CASE("resample") {
  SUBCASE("same rate is bit-exact identity") {
    AudioClip c{{0.1f, -0.2f, 0.3f}, 16000};
    const auto r = resample(c, 16000);
    CHECK(r.samples == c.samples);
    CHECK(r.sample_rate == 16000);
  }
  SUBCASE("halving picks every other sample") {
    const auto r = resample(AudioClip{{0, 1, 0, -1}, 8000}, 4000);
    REQUIRE(r.samples.size() == 2);
    CHECK(r.samples[0] == 0.0f);
    CHECK(r.samples[1] == 0.0f);
    CHECK(r.sample_rate == 4000);
  }
  SUBCASE("one second at 16k to 8k has 8000 samples") {
    AudioClip c;
    c.samples.assign(16000, 0.25f);
    CHECK(resample(c, 8000).samples.size() == 8000);
  }
  SUBCASE("upsampling interpolates linearly") {
    const auto r = resample(AudioClip{{0.0f, 1.0f}, 1000}, 2000);
    REQUIRE(r.samples.size() == 4);
    CHECK(r.samples[1] == doctest::Approx(0.5));
  }
  SUBCASE("bad target") { CHECK(error_of([] { resample(AudioClip{{0.0f}, 8000}, 0); }) == "InvalidArgument"); }
}

TEST_CASE("dyst round trip") {
  const Tensor t = Tensor::from_rows({{1, 2}, {3, 4}});
  CHECK(decode_tensor(encode_tensor(t)) == t);

  for (std::size_t rank = 1; rank <= 4; ++rank) {
    Shape s(rank);
    for (std::size_t i = 0; i < rank; ++i) s[i] = 2 + i;
    const Tensor r = testing::random_tensor(s, rank);
    CHECK(decode_tensor(encode_tensor(r)) == r);
  }

  testing::TempDir dir("dyst");
  save_tensor(t, dir / "t.dyst");
  CHECK(load_tensor(dir / "t.dyst") == t);
}

TEST_CASE("dyst errors") {
  CHECK(error_of([] { decode_tensor({}); }) == "BadMagic");

  std::vector<std::uint8_t> b;
  tag(b, "DYST");
  put32(b, 1);
  b.push_back(3);
  for (int i = 0; i < 3; ++i) put32(b, 2);
  for (int i = 0; i < 7; ++i) put32(b, 0);
  CHECK(error_of([&] { decode_tensor(b); }) == "ShapeOverflow");

  auto bad_version = encode_tensor(Tensor({1}, 1.0f));
  bad_version[4] = 2;
  CHECK(error_of([&] { decode_tensor(bad_version); }) == "BadMagic");
}

TEST_CASE("pgm and ppm encoding") {
  auto payload = [](const std::vector<std::uint8_t>& img, std::size_t n) {
    return std::vector<std::uint8_t>(img.end() - static_cast<std::ptrdiff_t>(n), img.end());
  };
  const auto one = encode_pgm(Tensor({1, 1}, 1.0f));
  CHECK(std::string(one.begin(), one.begin() + 2) == "P5");
  CHECK(payload(one, 1) == std::vector<std::uint8_t>{255});

  const auto two = encode_pgm(Tensor::from_rows({{0.0f, 0.5f}}));
  CHECK(payload(two, 2) == std::vector<std::uint8_t>{0, 128});
  CHECK(std::string(two.begin(), two.end() - 2) == "P5\n2 1\n255\n");

  CHECK(error_of([] { encode_pgm(Tensor({1, 1}, 1.5f)); }) == "ValueOutOfRange");
  CHECK(error_of([] { encode_pgm(Tensor({1, 1}, -0.1f)); }) == "ValueOutOfRange");

  Tensor rgb({3, 1, 2});
  rgb.at(0, 0, 0) = 1.0f;  // red pixel then blue pixel
  rgb.at(2, 0, 1) = 1.0f;
  const auto ppm = encode_ppm(rgb);
  CHECK(std::string(ppm.begin(), ppm.begin() + 2) == "P6");
  CHECK(payload(ppm, 6) == std::vector<std::uint8_t>{255, 0, 0, 0, 0, 255});
}
