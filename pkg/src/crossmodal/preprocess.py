"""Audio and image preprocessing into the shared encoder input format.

Raw audio is converted to a short-term magnitude spectrogram; both the
spectrogram and face images are then mapped to a fixed-size 3-channel
tensor so a single encoder can consume either modality.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

WINDOW_FNS = ("hamming", "hann", "rectangular")
COMPRESSIONS = ("raw", "log1p")
CLIP_MODES = ("random_crop", "center_crop", "pad_zero")


@dataclass
class Waveform:
    """Mono or multi-channel audio; samples nominally in [-1, 1].

    ``samples`` is 1-D ``(n,)`` for mono or 2-D ``(n, channels)``.
    """

    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be positive")

    @property
    def duration_s(self) -> float:
        return self.samples.shape[0] / self.sample_rate_hz


@dataclass
class SpectrogramMatrix:
    """Magnitude spectrogram: frequency rows x time-frame columns."""

    values: np.ndarray
    bin_hz: float
    hop_s: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)


@dataclass
class InputTensor:
    """3-channel H x W encoder input. ``values`` has shape (3, H, W)."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 3 or self.values.shape[0] != 3:
            raise ValueError("InputTensor requires shape (3, H, W)")

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]


@dataclass
class StftConfig:
    """Short-term Fourier transform parameters.

    Defaults are the conventional speech-spectrogram settings: 25 ms
    Hamming window, 10 ms hop, 512-point FFT, 3 s clips.
    """

    window_len_s: float = 0.025
    hop_s: float = 0.010
    fft_size: int = 512
    window_fn: str = "hamming"
    clip_len_s: float = 3.0

    def __post_init__(self):
        if not self.hop_s > 0:
            raise ValueError("hop_s must be positive")
        if self.window_len_s < self.hop_s:
            raise ValueError("window_len_s must be >= hop_s")
        if self.clip_len_s <= 0:
            raise ValueError("clip_len_s must be positive")
        if self.window_fn not in WINDOW_FNS:
            raise ValueError(f"unknown window_fn {self.window_fn!r}")


def _window(kind: str, n: int) -> np.ndarray:
    if kind == "hamming":
        return np.hamming(n)
    if kind == "hann":
        return np.hanning(n)
    return np.ones(n)


def to_mono_resample(w: Waveform, target_rate_hz: int) -> Waveform:
    """Average channels to mono and resample by linear interpolation.

    The output length is ``round(n * target / source)`` so the duration is
    preserved to within one sample period.
    """
    if target_rate_hz <= 0:
        raise ValueError("target_rate_hz must be positive")
    if w.samples.size == 0:
        raise ValueError("empty waveform")
    x = w.samples
    if x.ndim == 2:
        x = x.mean(axis=1)
    if w.sample_rate_hz == target_rate_hz:
        return Waveform(x.copy(), target_rate_hz)
    n_in = x.shape[0]
    n_out = max(1, int(round(n_in * target_rate_hz / w.sample_rate_hz)))
    # Positions of the output sampling instants in input-index units.
    pos = np.arange(n_out) * (w.sample_rate_hz / target_rate_hz)
    out = np.interp(pos, np.arange(n_in), x)
    return Waveform(out, target_rate_hz)


def stft_magnitude(w: Waveform, cfg: StftConfig) -> SpectrogramMatrix:
    """Magnitude spectrogram of a mono waveform.

    Frames are laid out without centering or padding, so the frame count is
    ``(n - win) // hop + 1``; each column is ``|rfft(window * frame, fft_size)|``
    giving ``fft_size // 2 + 1`` frequency rows.
    """
    x = w.samples
    if x.ndim != 1:
        raise ValueError("stft_magnitude expects a mono waveform")
    if x.size == 0:
        raise ValueError("empty waveform")
    rate = w.sample_rate_hz
    win = int(round(cfg.window_len_s * rate))
    hop = int(round(cfg.hop_s * rate))
    if hop < 1 or win < 2:
        raise ValueError("window/hop too small for this sample rate")
    if cfg.fft_size < win:
        raise ValueError("fft_size must be >= window length in samples")
    if x.shape[0] < win:
        raise ValueError("clip too short")
    n_frames = (x.shape[0] - win) // hop + 1
    idx = np.arange(win)[None, :] + hop * np.arange(n_frames)[:, None]
    frames = x[idx] * _window(cfg.window_fn, win)[None, :]
    mags = np.abs(np.fft.rfft(frames, n=cfg.fft_size, axis=1))
    return SpectrogramMatrix(mags.T, bin_hz=rate / cfg.fft_size, hop_s=hop / rate)


def clip_or_pad(w: Waveform, clip_len_s: float, mode: str,
                rng: np.random.Generator | None = None) -> Waveform:
    """Force a waveform to an exact duration at its own sample rate.

    Long inputs are cropped (randomly, centered, or head-first for
    ``pad_zero``); short inputs are zero-padded at the end in every mode.
    """
    if clip_len_s <= 0:
        raise ValueError("clip_len_s must be positive")
    if mode not in CLIP_MODES:
        raise ValueError(f"unknown clip mode {mode!r}")
    x = w.samples
    if x.ndim != 1:
        raise ValueError("clip_or_pad expects a mono waveform")
    target = int(round(clip_len_s * w.sample_rate_hz))
    n = x.shape[0]
    if n == target:
        return Waveform(x.copy(), w.sample_rate_hz)
    if n > target:
        if mode == "random_crop":
            if rng is None:
                raise ValueError("random_crop requires an explicit rng")
            start = int(rng.integers(0, n - target + 1))
        elif mode == "center_crop":
            start = (n - target) // 2
        else:
            start = 0
        return Waveform(x[start:start + target].copy(), w.sample_rate_hz)
    out = np.zeros(target, dtype=np.float64)
    out[:n] = x
    return Waveform(out, w.sample_rate_hz)


def _grid(n_in: int, n_out: int) -> np.ndarray:
    # Corner-aligned sample positions; a single output sample maps to the center.
    if n_out == 1:
        return np.array([(n_in - 1) / 2.0])
    return np.linspace(0.0, n_in - 1, n_out)


def bilinear_resize(values: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Corner-aligned bilinear resampling of a 2-D array."""
    v = np.asarray(values, dtype=np.float64)
    h, wd = v.shape
    ys = _grid(h, out_h)
    xs = _grid(wd, out_w)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, wd - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    top = v[np.ix_(y0, x0)] * (1 - fx) + v[np.ix_(y0, x1)] * fx
    bot = v[np.ix_(y1, x0)] * (1 - fx) + v[np.ix_(y1, x1)] * fx
    return top * (1 - fy) + bot * fy


def spectrogram_to_input(s: SpectrogramMatrix, size: int,
                         compression: str = "log1p") -> InputTensor:
    """Optionally log-compress, resize to ``size`` x ``size``, replicate to 3 channels."""
    if size <= 0:
        raise ValueError("size must be positive")
    if compression not in COMPRESSIONS:
        raise ValueError(f"unknown compression {compression!r}")
    v = s.values
    if v.ndim != 2 or min(v.shape) < 2:
        raise ValueError("degenerate spectrogram")
    if compression == "log1p":
        v = np.log1p(v)
    r = bilinear_resize(v, size, size)
    return InputTensor(np.stack([r, r, r]))


def image_to_input(pixels: np.ndarray, size: int) -> InputTensor:
    """Center-crop an (H, W, 3) byte image to square, resize, scale to [0, 1]."""
    if size <= 0:
        raise ValueError("size must be positive")
    px = np.asarray(pixels)
    if px.ndim != 3 or px.shape[2] != 3:
        raise ValueError("expected an (H, W, 3) image")
    h, wd = px.shape[:2]
    side = min(h, wd)
    top = (h - side) // 2
    left = (wd - side) // 2
    crop = px[top:top + side, left:left + side, :].astype(np.float64)
    chans = [bilinear_resize(crop[:, :, c], size, size) / 255.0 for c in range(3)]
    return InputTensor(np.stack(chans))


def write_spectrogram_csv(s: SpectrogramMatrix, path) -> None:
    """Debug dump: one CSV row per frequency bin, row-major."""
    with open(path, "w", newline="\n") as fh:
        for row in s.values:
            fh.write(",".join(repr(float(v)) for v in row))
            fh.write("\n")
