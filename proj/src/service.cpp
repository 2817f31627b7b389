#include "dyslab/service.hpp"

#include <httplib.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <json.hpp>

#include "dyslab/audio_io.hpp"
#include "dyslab/error.hpp"
#include "dyslab/features.hpp"
#include "dyslab/interpret.hpp"
#include "dyslab/models.hpp"

namespace dyslab::service {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct HttpError {
  int status;
  std::string message;
};

Response json_response(int status, const json& body) { return {status, "application/json", body.dump()}; }

Response error_response(const HttpError& e) { return json_response(e.status, json{{"error", e.message}}); }

std::string hash_file(const fs::path& path) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::uint8_t b : read_file_bytes(path)) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

AudioClip decode_upload(std::span<const std::uint8_t> bytes, double max_seconds) {
  if (bytes.empty()) throw HttpError{400, "empty upload"};
  AudioClip clip;
  try {
    clip = features::to_pipeline_rate(decode_wav(bytes));
  } catch (const Error& e) {
    throw HttpError{400, std::string("not a readable WAV file: ") + e.what()};
  }
  if (clip.samples.empty()) throw HttpError{400, "WAV file has no samples"};
  const double seconds = static_cast<double>(clip.samples.size()) / clip.sample_rate;
  if (seconds > max_seconds) {
    char msg[96];
    std::snprintf(msg, sizeof msg, "audio is %.2f s, limit is %.0f s", seconds, max_seconds);
    throw HttpError{413, msg};
  }
  return clip;
}

void reject_silent(const Tensor& normalized) {
  if (features::is_silent(normalized)) throw HttpError{422, "audio is silent"};
}

template <typename F>
Response guarded(F&& f) {
  try {
    return f();
  } catch (const HttpError& e) {
    return error_response(e);
  } catch (const std::exception& e) {
    return error_response({500, e.what()});
  }
}

}  // namespace

ModelSet load_model_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::MissingFile, "model directory " + dir.string() + " not found");
  return ModelSet{
      models::load_model(dir / "detector.dysw", models::kDetectorArch),
      models::load_model(dir / "severity.dysw", models::kSeverityArch),
      models::load_model(dir / "unet.dysw", models::kUNetArch),
      "detector-" + hash_file(dir / "detector.dysw"),
  };
}

DiagnosisService::DiagnosisService(ModelSet models, ServiceOptions opts)
    : models_(std::move(models)), opts_(std::move(opts)) {
  if (models_.detector.input_shape() != Shape{1, features::kDetectorSide, features::kDetectorSide} ||
      models_.severity.input_shape() != Shape{1, features::kSpectrogramSide, features::kSpectrogramSide} ||
      models_.unet.input_shape() != Shape{1, features::kSpectrogramSide, features::kSpectrogramSide}) {
    throw Error(ErrorCode::ArchMismatch, "service models do not match the feature pipeline input sizes");
  }
}

Response DiagnosisService::detect(std::span<const std::uint8_t> wav) const {
  return guarded([&] {
    const Tensor x = features::detector_input(decode_upload(wav, opts_.max_audio_seconds));
    reject_silent(x);
    const double p = models::predict_detector(models_.detector, x);
    return json_response(200, json{{"probability", p},
                                   {"label", models::to_string(models::decode_detection(p))},
                                   {"model_version", models_.detector_version}});
  });
}

Response DiagnosisService::severity(std::span<const std::uint8_t> wav) const {
  return guarded([&] {
    const Tensor x = features::spectrogram_input(decode_upload(wav, opts_.max_audio_seconds));
    reject_silent(x);
    const auto p = models::predict_severity(models_.severity, x);
    json probs = json::object();
    for (std::size_t i = 0; i < p.size(); ++i) probs[models::to_string(static_cast<models::SeverityLabel>(i))] = p[i];
    return json_response(200, json{{"probabilities", probs}, {"label", models::to_string(models::argmax_label(p))}});
  });
}

Response DiagnosisService::gradcam(std::span<const std::uint8_t> wav, std::string_view target_class) const {
  return guarded([&] {
    std::optional<models::SeverityLabel> target;
    if (!target_class.empty()) {
      target = models::parse_severity(target_class);
      if (!target) throw HttpError{422, "unknown class '" + std::string(target_class) + "'"};
    }
    const Tensor x = features::spectrogram_input(decode_upload(wav, opts_.max_audio_seconds));
    reject_silent(x);
    if (!target) target = models::argmax_label(models::predict_severity(models_.severity, x));
    const auto cam = interpret::grad_cam(models_.severity, x, static_cast<std::size_t>(*target));
    const auto ppm = encode_ppm(features::display_orientation(interpret::overlay(cam, x)));
    return json_response(200, json{{"overlay_ppm_base64", base64_encode(ppm)},
                                   {"target_class", models::to_string(*target)},
                                   {"source_layer", cam.source_layer}});
  });
}

Response DiagnosisService::translate(std::span<const std::uint8_t> wav) const {
  return guarded([&] {
    const auto img = features::mel_db_image(decode_upload(wav, opts_.max_audio_seconds));
    reject_silent(img.image);
    const Tensor x = img.image.reshaped({1, features::kSpectrogramSide, features::kSpectrogramSide});
    const Tensor y = models::translate_spectrogram(models_.unet, x);
    const Tensor pred = y.reshaped({features::kSpectrogramSide, features::kSpectrogramSide});
    const AudioClip audio = features::image_to_audio(pred, img.frames, img.db_min, img.db_max);
    return json_response(200, json{{"clean_spectrogram_pgm_base64", base64_encode(encode_pgm(features::display_orientation(pred)))},
                                   {"audio_wav_base64", base64_encode(encode_wav_pcm16(audio))}});
  });
}

// ------------------------------------------------------------------ HTTP

struct HttpServer::Impl {
  std::shared_ptr<const DiagnosisService> service;
  httplib::Server server;
};

HttpServer::HttpServer(std::shared_ptr<const DiagnosisService> service) : impl_(std::make_unique<Impl>()) {
  impl_->service = std::move(service);
  auto& svr = impl_->server;
  const auto svc = impl_->service;
  const std::string origin = svc->options().cors_origin;

  // generous bound for 30 s of 48 kHz stereo float audio plus multipart framing
  svr.set_payload_max_length(static_cast<std::size_t>(svc->options().max_audio_seconds * 48000 * 2 * 4) + (1 << 20));

  auto send = [](httplib::Response& res, const Response& r) {
    res.status = r.status;
    res.set_content(r.body, r.content_type);
  };
  auto method_not_allowed = [](const httplib::Request&, httplib::Response& res) {
    res.status = 405;
    res.set_content(R"({"error":"method not allowed"})", "application/json");
  };

  svr.Get("/healthz", [](const httplib::Request&, httplib::Response& res) { res.set_content("ok", "text/plain"); });
  svr.Post("/healthz", method_not_allowed);
  svr.Put("/healthz", method_not_allowed);
  svr.Delete("/healthz", method_not_allowed);

  auto route = [&](const std::string& path, auto handler) {
    svr.Post(path, [svc, send, handler](const httplib::Request& req, httplib::Response& res) {
      std::string content;
      if (req.is_multipart_form_data() && req.has_file("audio")) content = req.get_file_value("audio").content;
      const std::span bytes(reinterpret_cast<const std::uint8_t*>(content.data()), content.size());
      send(res, handler(*svc, req, bytes));
    });
    svr.Get(path, method_not_allowed);
  };
  route("/api/v1/detect", [](const DiagnosisService& s, const httplib::Request&, auto bytes) { return s.detect(bytes); });
  route("/api/v1/severity",
        [](const DiagnosisService& s, const httplib::Request&, auto bytes) { return s.severity(bytes); });
  route("/api/v1/gradcam", [](const DiagnosisService& s, const httplib::Request& req, auto bytes) {
    return s.gradcam(bytes, req.has_param("class") ? req.get_param_value("class") : std::string());
  });
  route("/api/v1/translate",
        [](const DiagnosisService& s, const httplib::Request&, auto bytes) { return s.translate(bytes); });

  if (!origin.empty()) {
    svr.set_default_headers({{"Access-Control-Allow-Origin", origin}});
    svr.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) {
      res.status = 204;
      res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
    });
  }
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  const int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw Error(ErrorCode::Io, "cannot bind " + host + ":" + std::to_string(port));
  return bound;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

void HttpServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

// ------------------------------------------------------------------ base64

namespace {
constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    for (int s = 18; s >= 0; s -= 6) out += kAlphabet[(v >> s) & 63];
  }
  const std::size_t rest = bytes.size() - i;
  if (rest > 0) {
    std::uint32_t v = bytes[i] << 16;
    if (rest == 2) v |= bytes[i + 1] << 8;
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += rest == 2 ? kAlphabet[(v >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  auto value = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  if (text.size() % 4 != 0) throw Error(ErrorCode::InvalidArgument, "base64 length must be a multiple of 4");
  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    std::uint32_t v = 0;
    int pad = 0;
    for (std::size_t k = 0; k < 4; ++k) {
      const char c = text[i + k];
      int d = 0;
      if (c == '=' && i + 4 == text.size() && k >= 2) {
        ++pad;
      } else if ((d = value(c)) < 0 || pad > 0) {
        throw Error(ErrorCode::InvalidArgument, "invalid base64 character");
      }
      v = (v << 6) | static_cast<std::uint32_t>(d);
    }
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    if (pad < 2) out.push_back(static_cast<std::uint8_t>(v >> 8));
    if (pad < 1) out.push_back(static_cast<std::uint8_t>(v));
  }
  return out;
}

}  // namespace dyslab::service
