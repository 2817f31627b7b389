#pragma once

// HTTP diagnosis service: GET /healthz and POST /api/v1/{detect,severity,gradcam,translate}.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dyslab/nn/graph.hpp"

namespace dyslab::service {

inline constexpr int kDefaultPort = 8080;
inline constexpr double kMaxAudioSeconds = 30.0;

/// The three models, validated against their manifests. Never mutated after load.
struct ModelSet {
  nn::ModelGraph detector;
  nn::ModelGraph severity;
  nn::ModelGraph unet;
  std::string detector_version;  // "detector-<hash of the weight file>"
};

/// Loads detector.dysw, severity.dysw and unet.dysw (with manifests) from `dir`.
/// Any missing file or mismatched manifest throws.
ModelSet load_model_dir(const std::filesystem::path& dir);

struct ServiceOptions {
  std::string cors_origin = "*";  // empty disables CORS headers
  double max_audio_seconds = kMaxAudioSeconds;
};

struct Response {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

/// Transport-independent request handling; safe to call concurrently.
class DiagnosisService {
 public:
  DiagnosisService(ModelSet models, ServiceOptions opts = {});

  Response detect(std::span<const std::uint8_t> wav) const;
  Response severity(std::span<const std::uint8_t> wav) const;
  /// `target_class` empty means the predicted class.
  Response gradcam(std::span<const std::uint8_t> wav, std::string_view target_class = {}) const;
  Response translate(std::span<const std::uint8_t> wav) const;

  const ServiceOptions& options() const noexcept { return opts_; }

 private:
  ModelSet models_;
  ServiceOptions opts_;
};

/// httplib front end. Runs handlers on the library's thread pool.
class HttpServer {
 public:
  explicit HttpServer(std::shared_ptr<const DiagnosisService> service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds `host:port`; port 0 picks a free one. Returns the bound port.
  int bind(const std::string& host, int port);
  /// Blocks until stop().
  void listen();
  void stop();
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

}  // namespace dyslab::service
