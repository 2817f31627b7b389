#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "dyslab/audio_io.hpp"
#include "dyslab/error.hpp"
#include "dyslab/features.hpp"
#include "dyslab/interpret.hpp"
#include "dyslab/metrics.hpp"
#include "dyslab/models.hpp"

namespace py = pybind11;
using namespace dyslab;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

py::array_t<float> to_numpy(const Tensor& t) {
  py::array_t<float> out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::copy(t.storage().begin(), t.storage().end(), out.mutable_data());
  return out;
}

Tensor from_numpy(const FloatArray& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(std::move(shape), std::vector<real>(a.data(), a.data() + a.size()));
}

AudioClip clip_from(const FloatArray& samples, int sample_rate) {
  if (samples.ndim() != 1) throw Error(ErrorCode::ShapeMismatch, "audio must be one-dimensional");
  return AudioClip{std::vector<float>(samples.data(), samples.data() + samples.size()), sample_rate};
}

py::tuple clip_to_tuple(const AudioClip& clip) {
  py::array_t<float> samples(static_cast<py::ssize_t>(clip.samples.size()));
  std::copy(clip.samples.begin(), clip.samples.end(), samples.mutable_data());
  return py::make_tuple(samples, clip.sample_rate);
}

}  // namespace

PYBIND11_MODULE(_dyslab, m) {
  m.doc() = "dysarthria feature extraction, models and metrics";

  PYBIND11_CONSTINIT static py::gil_safe_call_once_and_store<py::object> error_type;
  error_type.call_once_and_store_result(
      [&]() { return py::exception<Error>(m, "DyslabError", PyExc_RuntimeError); });
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      const py::object& type = error_type.get_stored();
      py::object inst = type(e.what());
      inst.attr("code") = to_string(e.code());
      PyErr_SetObject(type.ptr(), inst.ptr());
    }
  });

  m.attr("SAMPLE_RATE") = kPipelineSampleRate;
  m.attr("DEFAULT_SEED") = models::kDefaultSeed;
  m.attr("SEVERITY_LABELS") = py::make_tuple("very_low", "low", "medium", "high");

  m.def("load_wav", [](const std::filesystem::path& p) { return clip_to_tuple(load_wav(p)); }, py::arg("path"),
        "Returns (samples float32 in [-1,1], sample_rate); stereo is averaged to mono.");
  m.def("write_wav", [](const std::filesystem::path& p, const FloatArray& s, int rate) {
        write_wav_pcm16(clip_from(s, rate), p);
      },
      py::arg("path"), py::arg("samples"), py::arg("sample_rate") = kPipelineSampleRate);
  m.def("resample", [](const FloatArray& s, int from, int to) { return clip_to_tuple(resample(clip_from(s, from), to)); },
        py::arg("samples"), py::arg("sample_rate"), py::arg("target_rate"));
  m.def("save_tensor", [](const FloatArray& a, const std::filesystem::path& p) { save_tensor(from_numpy(a), p); },
        py::arg("array"), py::arg("path"));
  m.def("load_tensor", [](const std::filesystem::path& p) { return to_numpy(load_tensor(p)); }, py::arg("path"));

  m.def("mfcc", [](const FloatArray& s, int rate, int n_mfcc) {
        const auto clip = features::to_pipeline_rate(clip_from(s, rate));
        return to_numpy(dsp::mfcc(clip, features::FeatureConfig{}.mel, n_mfcc).coeffs);
      },
      py::arg("samples"), py::arg("sample_rate") = kPipelineSampleRate, py::arg("n_mfcc") = 13,
      "[n_mfcc x frames] at 16 kHz, n_fft 1024, hop 256, 128 mel bands.");
  m.def("mel_db", [](const FloatArray& s, int rate) {
        const auto clip = features::to_pipeline_rate(clip_from(s, rate));
        const features::FeatureConfig cfg;
        return to_numpy(dsp::amplitude_to_db(dsp::mel_spectrogram(clip, cfg.mel), features::kTopDb).data);
      },
      py::arg("samples"), py::arg("sample_rate") = kPipelineSampleRate);
  m.def("detector_input", [](const FloatArray& s, int rate) { return to_numpy(features::detector_input(clip_from(s, rate))); },
        py::arg("samples"), py::arg("sample_rate") = kPipelineSampleRate);
  m.def("spectrogram_input",
        [](const FloatArray& s, int rate) { return to_numpy(features::spectrogram_input(clip_from(s, rate))); },
        py::arg("samples"), py::arg("sample_rate") = kPipelineSampleRate);
  m.def("hz_to_mel", &dsp::hz_to_mel, py::arg("hz"));
  m.def("mel_to_hz", &dsp::mel_to_hz, py::arg("mel"));

  py::class_<nn::ModelGraph>(m, "Model")
      .def_property_readonly("arch", &nn::ModelGraph::arch)
      .def_property_readonly("parameter_count", &nn::ModelGraph::parameter_count)
      .def("save", [](const nn::ModelGraph& g, const std::filesystem::path& p) { models::save_model(g, p); },
           py::arg("path"))
      .def("__repr__", [](const nn::ModelGraph& g) {
        return "<dyslab.Model " + g.arch() + " params=" + std::to_string(g.parameter_count()) + ">";
      });

  m.def("build_detector", [](std::uint64_t seed) { return models::build_detector(seed); },
        py::arg("seed") = models::kDefaultSeed);
  m.def("build_severity", [](std::uint64_t seed) { return models::build_severity(seed); },
        py::arg("seed") = models::kDefaultSeed);
  m.def("build_unet", [](std::uint64_t seed, int base, int depth) { return models::build_unet(seed, {base, depth}); },
        py::arg("seed") = models::kDefaultSeed, py::arg("base_filters") = 32, py::arg("depth") = 4);
  m.def("load_model", [](const std::filesystem::path& p) { return models::load_model(p); }, py::arg("path"));

  m.def("predict_detector", [](const nn::ModelGraph& g, const FloatArray& x) {
        return models::predict_detector(g, from_numpy(x));
      },
      py::arg("model"), py::arg("mfcc_image"));
  m.def("predict_severity", [](const nn::ModelGraph& g, const FloatArray& x) {
        const auto p = models::predict_severity(g, from_numpy(x));
        return std::vector<double>(p.begin(), p.end());
      },
      py::arg("model"), py::arg("spectrogram"));
  m.def("translate_spectrogram", [](const nn::ModelGraph& g, const FloatArray& x) {
        return to_numpy(models::translate_spectrogram(g, from_numpy(x)));
      },
      py::arg("model"), py::arg("spectrogram"));
  m.def("grad_cam", [](const nn::ModelGraph& g, const FloatArray& x, std::size_t target,
                       const std::optional<std::string>& layer) {
        const auto cam = interpret::grad_cam(g, from_numpy(x), target, layer);
        return py::make_tuple(to_numpy(cam.heat), cam.source_layer);
      },
      py::arg("model"), py::arg("input"), py::arg("target_class"), py::arg("layer") = py::none(),
      "Returns (heat [H x W] in [0,1], layer name).");

  m.def("wer", [](const std::string& ref, const std::string& hyp) { return metrics::wer({ref, hyp}); },
        py::arg("reference"), py::arg("hypothesis"));
  m.def("corpus_wer", [](const std::vector<std::pair<std::string, std::string>>& pairs) {
        std::vector<metrics::TranscriptPair> tp;
        for (const auto& [r, h] : pairs) tp.push_back({r, h});
        return metrics::corpus_wer(tp).rate();
      },
      py::arg("pairs"), "Total edits over total reference words.");
  m.def("tokenize", [](const std::string& s) { return metrics::tokenize_transcript(s); }, py::arg("text"));

#ifdef DYSLAB_VERSION
  m.attr("__version__") = DYSLAB_VERSION;
#else
  m.attr("__version__") = "dev";
#endif
}
