"""Dysarthria toolkit: features, models, Grad-CAM and WER from the dyslab C++ core."""

from ._dyslab import (
    DEFAULT_SEED,
    SAMPLE_RATE,
    SEVERITY_LABELS,
    DyslabError,
    Model,
    __version__,
    build_detector,
    build_severity,
    build_unet,
    corpus_wer,
    detector_input,
    grad_cam,
    hz_to_mel,
    load_model,
    load_tensor,
    load_wav,
    mel_db,
    mel_to_hz,
    mfcc,
    predict_detector,
    predict_severity,
    resample,
    save_tensor,
    spectrogram_input,
    tokenize,
    translate_spectrogram,
    wer,
    write_wav,
)


def classify_severity(model, samples, sample_rate=SAMPLE_RATE):
    """Returns (label, {label: probability}) for one clip."""
    probs = predict_severity(model, spectrogram_input(samples, sample_rate))
    best = max(range(len(probs)), key=lambda i: (probs[i], -i))
    return SEVERITY_LABELS[best], dict(zip(SEVERITY_LABELS, probs))


__all__ = [name for name in dir() if not name.startswith("_")] + ["__version__"]
