"""WAV and image file I/O for the dataset pipeline."""

from __future__ import annotations

import wave
from pathlib import Path

import numpy as np
from PIL import Image

from .preprocess import Waveform


def write_wav(path, w: Waveform) -> None:
    """Write mono 16-bit PCM little-endian WAV; samples are clipped to [-1, 1]."""
    x = np.asarray(w.samples, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("write_wav expects a mono waveform")
    pcm = np.clip(np.round(x * 32767.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(w.sample_rate_hz)
        fh.writeframes(pcm.tobytes())


def read_wav(path) -> Waveform:
    """Read a 16-bit PCM WAV file, mono or stereo, into float64 [-1, 1]."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"missing audio file: {path}")
    with wave.open(str(path), "rb") as fh:
        if fh.getsampwidth() != 2:
            raise ValueError(f"only 16-bit PCM WAV is supported: {path}")
        n_ch = fh.getnchannels()
        rate = fh.getframerate()
        raw = fh.readframes(fh.getnframes())
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    if n_ch > 1:
        samples = samples.reshape(-1, n_ch)
    return Waveform(samples, rate)


def write_png(path, pixels: np.ndarray) -> None:
    """Write an (H, W, 3) uint8 array as PNG."""
    px = np.asarray(pixels)
    if px.dtype != np.uint8 or px.ndim != 3 or px.shape[2] != 3:
        raise ValueError("write_png expects an (H, W, 3) uint8 array")
    Image.fromarray(px, mode="RGB").save(str(path), format="PNG")


def read_image(path) -> np.ndarray:
    """Read a PNG or PPM (P6) image as an (H, W, 3) uint8 array."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"missing image file: {path}")
    with Image.open(str(path)) as img:
        return np.asarray(img.convert("RGB"))
