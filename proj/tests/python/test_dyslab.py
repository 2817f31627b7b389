import math

import numpy as np
import pytest

import dyslab


def tone(f0=220.0, seconds=1.0, rate=16000):
    t = np.arange(int(rate * seconds)) / rate
    return (0.5 * np.sin(2 * np.pi * f0 * t)).astype(np.float32)


def test_version_and_constants():
    assert dyslab.__version__
    assert dyslab.SAMPLE_RATE == 16000
    assert dyslab.DEFAULT_SEED == 1337
    assert dyslab.SEVERITY_LABELS == ("very_low", "low", "medium", "high")


def test_mel_scale():
    assert dyslab.hz_to_mel(700.0) == pytest.approx(781.2, abs=0.1)
    assert dyslab.mel_to_hz(dyslab.hz_to_mel(1234.5)) == pytest.approx(1234.5, rel=1e-9)


def test_wav_round_trip(tmp_path):
    x = tone()
    path = tmp_path / "a.wav"
    dyslab.write_wav(path, x)
    y, rate = dyslab.load_wav(path)
    assert rate == 16000
    assert y.dtype == np.float32
    assert np.max(np.abs(y - x)) < 1.0 / 32768 + 1e-6


def test_feature_shapes():
    x = tone()
    frames = 1 + 16000 // 256
    assert dyslab.mfcc(x).shape == (13, frames)
    assert dyslab.mel_db(x).shape == (128, frames)
    assert dyslab.detector_input(x).shape == (1, 64, 64)
    spec = dyslab.spectrogram_input(x)
    assert spec.shape == (1, 128, 128)
    assert spec.min() >= 0.0 and spec.max() <= 1.0


def test_resample_changes_length():
    y, rate = dyslab.resample(tone(seconds=0.5, rate=8000), 8000, 16000)
    assert rate == 16000
    assert abs(y.size - 8000) <= 1


def test_mel_db_top_is_zero():
    db = dyslab.mel_db(tone())
    assert db.max() == pytest.approx(0.0, abs=1e-4)
    assert db.min() >= -80.0 - 1e-4


def test_tensor_round_trip(tmp_path):
    a = np.arange(24, dtype=np.float32).reshape(2, 3, 4)
    dyslab.save_tensor(a, tmp_path / "a.dyst")
    np.testing.assert_array_equal(dyslab.load_tensor(tmp_path / "a.dyst"), a)


def test_models_and_predictions(tmp_path):
    det = dyslab.build_detector()
    assert det.arch == "detector"
    assert det.parameter_count == 267009
    p = dyslab.predict_detector(det, dyslab.detector_input(tone()))
    assert 0.0 < p < 1.0

    sev = dyslab.build_severity(seed=3)
    assert sev.parameter_count == 4287620
    probs = dyslab.predict_severity(sev, dyslab.spectrogram_input(tone()))
    assert len(probs) == 4
    assert math.fsum(probs) == pytest.approx(1.0, abs=1e-4)
    label, table = dyslab.classify_severity(sev, tone())
    assert label in dyslab.SEVERITY_LABELS
    assert table[label] == max(table.values())

    sev.save(tmp_path / "severity.dysw")
    again = dyslab.load_model(tmp_path / "severity.dysw")
    assert again.arch == "severity"
    assert dyslab.predict_severity(again, dyslab.spectrogram_input(tone())) == probs


def test_unet_translation_shape():
    unet = dyslab.build_unet(base_filters=4, depth=2)
    out = dyslab.translate_spectrogram(unet, dyslab.spectrogram_input(tone()))
    assert out.shape == (1, 128, 128)
    assert out.min() >= 0.0 and out.max() <= 1.0


def test_grad_cam_heat():
    sev = dyslab.build_severity()
    heat, layer = dyslab.grad_cam(sev, dyslab.spectrogram_input(tone()), 2)
    assert heat.shape == (128, 128)
    assert layer == "conv3"
    assert heat.min() >= 0.0 and heat.max() <= 1.0


def test_wer():
    assert dyslab.wer("the cat sat on the mat", "the cat sat on a mat") == pytest.approx(1 / 6)
    assert dyslab.wer("hello world", "") == 1.0
    assert dyslab.corpus_wer([("a b", "a b"), ("c d", "c x")]) == pytest.approx(0.25)
    assert dyslab.tokenize("Hello, [noise] World") == ["hello", "world"]


def test_errors_carry_code(tmp_path):
    with pytest.raises(dyslab.DyslabError) as info:
        dyslab.load_wav(tmp_path / "missing.wav")
    assert info.value.code == "MissingFile"
    with pytest.raises(dyslab.DyslabError):
        dyslab.wer("", "anything")
    with pytest.raises(RuntimeError):
        dyslab.load_model(tmp_path / "missing.dysw")
