"""Seeded synthetic paired-identity corpus: faces and voices share one latent.

Each identity owns an 8-d latent vector. Face images are sums of Gaussian
blobs whose geometry is driven by the latent; voices are formant-like
sinusoid mixes whose frequencies are driven by the same latent. Both
renderers add bounded per-sample noise, so the only reliable cross-modal
signal is the shared identity factor.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .fileio import write_png, write_wav
from .preprocess import Waveform
from .seeding import derive_seed

GENDERS = ("A", "B")
NATIONALITIES = ("region_a", "region_b", "region_c", "region_d", "region_e")
AGE_GROUPS = ("young", "mid", "senior")
SPLITS = ("train", "test_seen_heard", "test_unseen_unheard")
MODALITIES = ("image", "audio")

# Formant layout (Hz): per-formant base, gender offset, and latent wobble.
# Latent components 1..3 move one formant each (affine, clipped at 3 sigma);
# component 0 sets gender. The face renderer places its blobs at the same
# fractional heights, so identity information is height-coded identically
# in both modalities.
FORMANT_BASES = (1200.0, 3400.0, 5600.0)
FORMANT_GENDER_OFFSET = 700.0
FORMANT_SPREAD = 280.0
FORMANT_CLIP = 3.0
NYQUIST_HZ = 8000.0
AM_RATE_HZ = 3.0

MANIFEST_CSV = "manifest.csv"
MANIFEST_JSON = "manifest.json"


@dataclass
class IdentityProfile:
    id: int
    latent: np.ndarray
    gender: str
    nationality: str
    age_group: str


@dataclass
class SampleRecord:
    identity_id: int
    modality: str
    path: str  # relative to the manifest directory
    split: str


@dataclass
class Manifest:
    records: list
    identities: list
    seed: int
    root: Path | None = None
    params: dict | None = None

    def profile(self, identity_id: int) -> IdentityProfile:
        return self.identities[identity_id]

    def resolve(self, record: SampleRecord) -> Path:
        root = self.root if self.root is not None else Path(".")
        return root / record.path

    def split_records(self, split: str) -> list:
        if split == "all":
            return list(self.records)
        if split not in SPLITS:
            raise ValueError(f"unknown split {split!r}")
        return [r for r in self.records if r.split == split]


def _attr_hash(seed: int, identity_id: int) -> int:
    text = f"{seed}:{identity_id}:attrs".encode("utf-8")
    return int.from_bytes(hashlib.blake2b(text, digest_size=8).digest(), "little")


def make_identities(count: int, seed: int) -> list:
    """Draw ``count`` identity profiles deterministically from ``seed``.

    Latents come sequentially from one generator, so the first k profiles
    are independent of ``count``. Gender is the sign of latent component 0;
    nationality and age group are round-robin over a stable hash of
    (seed, id).
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    profiles = []
    for ident in range(count):
        latent = rng.standard_normal(8)
        h = _attr_hash(seed, ident)
        profiles.append(IdentityProfile(
            id=ident,
            latent=latent,
            gender=GENDERS[0] if latent[0] >= 0 else GENDERS[1],
            nationality=NATIONALITIES[h % len(NATIONALITIES)],
            age_group=AGE_GROUPS[(h // len(NATIONALITIES)) % len(AGE_GROUPS)],
        ))
    return profiles


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


FACE_BLOB_AMPS = (1.0, 0.85, 0.7)


def render_face(p: IdentityProfile, noise_seed: int, size: int) -> np.ndarray:
    """Procedural face stand-in: Gaussian blobs plus bounded pixel noise.

    One wide anisotropic blob per formant, its vertical position at that
    formant's fractional height below Nyquist: the face presents the same
    height code as the spectrogram, drawn as soft horizontal bars. Blob
    scales and lateral drift follow the same latent components; the channel
    tint is shifted by gender. Noise amplitude is 0.05 on the [0, 1]
    intensity scale. Returns (size, size, 3) uint8.
    """
    if size < 16:
        raise ValueError("size must be >= 16")
    z = p.latent
    ax = (np.arange(size) + 0.5) / size
    xx, yy = np.meshgrid(ax, ax)
    base = np.zeros((size, size))
    heights = formant_frequencies(p) / NYQUIST_HZ
    for k in range(3):
        cx = 0.5 + 0.08 * np.tanh(z[k + 1])
        cy = heights[k]
        sigma_x = 0.22 + 0.03 * np.tanh(z[k + 1])
        sigma_y = 0.035 + 0.008 * np.tanh(z[k + 1])
        base += FACE_BLOB_AMPS[k] * np.exp(
            -(xx - cx) ** 2 / (2 * sigma_x ** 2)
            - (yy - cy) ** 2 / (2 * sigma_y ** 2))
    tint = (1.0, 0.72, 0.55) if p.gender == "A" else (0.55, 0.72, 1.0)
    img = np.stack([0.9 * base * tint[c] for c in range(3)], axis=2)
    rng = np.random.default_rng(derive_seed(noise_seed, "face", p.id))
    img += rng.uniform(-0.05, 0.05, size=img.shape)
    img = np.clip(img, 0.0, 1.0)
    return np.round(img * 255.0).astype(np.uint8)


def formant_frequencies(p: IdentityProfile) -> np.ndarray:
    """The three sinusoid frequencies (Hz) encoding this identity's voice.

    Affine in latent components 1..3 (clipped at 3 sigma to stay inside the
    band), with the whole stack shifted up for gender B.
    """
    offset = 0.0 if p.gender == "A" else FORMANT_GENDER_OFFSET
    bases = np.asarray(FORMANT_BASES)
    wobble = FORMANT_SPREAD * np.clip(p.latent[1:4], -FORMANT_CLIP, FORMANT_CLIP)
    return bases + offset + wobble


def render_voice(p: IdentityProfile, noise_seed: int, dur_s: float,
                 rate_hz: int, snr_db: float | None = 10.0) -> Waveform:
    """Three amplitude-modulated sinusoids at the identity's formants.

    The AM envelope runs at a fixed rate with a per-utterance phase and a
    per-utterance loudness level, so amplitude is texture rather than
    identity (deliberate within-class variation the training loss has to
    become invariant to). White noise is added at ``snr_db`` (None disables
    it); the modulated sum is normalized so its amplitude never exceeds 1
    by construction.
    """
    if dur_s <= 0:
        raise ValueError("dur_s must be positive")
    n = int(round(dur_s * rate_hz))
    t = np.arange(n) / rate_hz
    freqs = formant_frequencies(p)
    amps = np.array([1.0, 0.8, 0.6])
    rng = np.random.default_rng(derive_seed(noise_seed, "voice", p.id))
    phases = rng.uniform(0.0, 2 * np.pi, size=3)
    phase_m = rng.uniform(0.0, 2 * np.pi)
    loudness = rng.uniform(0.35, 1.0)
    env = loudness * (1.0 + 0.4 * np.sin(2 * np.pi * AM_RATE_HZ * t + phase_m))
    sig = np.zeros(n)
    for a, f, ph in zip(amps, freqs, phases):
        sig += a * np.sin(2 * np.pi * f * t + ph)
    sig = env * sig / (1.4 * amps.sum())
    if snr_db is not None:
        power = float(np.mean(sig ** 2))
        noise_std = np.sqrt(power / (10.0 ** (snr_db / 10.0)))
        sig = np.clip(sig + rng.normal(0.0, noise_std, size=n), -1.0, 1.0)
    return Waveform(sig, rate_hz)


def generate_dataset(n_identities: int, per_modality: int, seed: int, out_dir,
                     img_size: int = 64, dur_s: float = 3.0,
                     rate_hz: int = 16000, snr_db: float | None = 10.0) -> Manifest:
    """Render the corpus to ``out_dir`` and write manifest.csv + manifest.json.

    20% of identities (at least one) are held out entirely as the
    unseen-unheard test pool; for the remaining identities, the last 20% of
    samples per modality (at least one) become the seen-heard test split.
    """
    if n_identities < 4:
        raise ValueError("n_identities must be >= 4")
    if per_modality < 2:
        raise ValueError("per_modality must be >= 2")
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    (out_dir / "audio").mkdir(parents=True, exist_ok=True)

    profiles = make_identities(n_identities, seed)
    split_rng = np.random.default_rng(derive_seed(seed, "split"))
    n_unseen = max(1, int(round(0.2 * n_identities)))
    unseen = set(split_rng.permutation(n_identities)[:n_unseen].tolist())
    n_heldout = max(1, int(round(0.2 * per_modality)))

    records = []
    for p in profiles:
        for idx in range(per_modality):
            if p.id in unseen:
                split = "test_unseen_unheard"
            elif idx >= per_modality - n_heldout:
                split = "test_seen_heard"
            else:
                split = "train"
            img_rel = f"images/id{p.id:04d}_img{idx:03d}.png"
            write_png(out_dir / img_rel,
                      render_face(p, derive_seed(seed, "sample", p.id, "image", idx), img_size))
            records.append(SampleRecord(p.id, "image", img_rel, split))
            aud_rel = f"audio/id{p.id:04d}_aud{idx:03d}.wav"
            write_wav(out_dir / aud_rel,
                      render_voice(p, derive_seed(seed, "sample", p.id, "audio", idx),
                                   dur_s, rate_hz, snr_db))
            records.append(SampleRecord(p.id, "audio", aud_rel, split))

    params = {
        "dur_s": dur_s,
        "img_size": img_size,
        "n_identities": n_identities,
        "per_modality": per_modality,
        "rate_hz": rate_hz,
        "snr_db": snr_db,
    }
    manifest = Manifest(records=records, identities=profiles, seed=seed,
                        root=out_dir, params=params)
    save_manifest(manifest, out_dir)
    return manifest


def save_manifest(manifest: Manifest, out_dir) -> None:
    """Write manifest.csv (one row per sample) and the manifest.json sidecar."""
    out_dir = Path(out_dir)
    with open(out_dir / MANIFEST_CSV, "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["identity_id", "modality", "path", "split",
                         "gender", "nationality", "age_group"])
        for r in manifest.records:
            p = manifest.profile(r.identity_id)
            writer.writerow([r.identity_id, r.modality, r.path, r.split,
                             p.gender, p.nationality, p.age_group])
    sidecar = {"seed": manifest.seed, "params": manifest.params or {}}
    with open(out_dir / MANIFEST_JSON, "w", newline="\n") as fh:
        json.dump(sidecar, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_manifest(path) -> Manifest:
    """Load a manifest directory (or its manifest.csv path).

    Identity profiles are re-derived from the sidecar seed, so latents and
    demographics match the generating run exactly.
    """
    path = Path(path)
    root = path.parent if path.is_file() else path
    csv_path = root / MANIFEST_CSV
    json_path = root / MANIFEST_JSON
    if not csv_path.exists():
        raise FileNotFoundError(f"missing manifest file: {csv_path}")
    if not json_path.exists():
        raise FileNotFoundError(f"missing manifest sidecar: {json_path}")
    with open(json_path) as fh:
        sidecar = json.load(fh)
    records = []
    max_id = -1
    with open(csv_path, newline="") as fh:
        for row in csv.DictReader(fh):
            ident = int(row["identity_id"])
            max_id = max(max_id, ident)
            records.append(SampleRecord(ident, row["modality"], row["path"], row["split"]))
    params = sidecar.get("params", {})
    count = int(params.get("n_identities", max_id + 1))
    profiles = make_identities(count, int(sidecar["seed"]))
    return Manifest(records=records, identities=profiles, seed=int(sidecar["seed"]),
                    root=root, params=params)
