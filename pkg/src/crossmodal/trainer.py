"""Mini-batch sampling, the training loop, and embedding export.

The sampler draws class-balanced batches over both modalities: P classes
per batch, each contributing K_img image and K_aud audio samples. A uniform
mode (plain random records) is kept as the literal alternative. The encoder
and classifier head update jointly from one Adam instance.
"""

from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .checkpoint import save_checkpoint
from .encoder import EncoderConfig, EncoderParams, backward_batch, forward_batch, init_params
from .fileio import read_image, read_wav
from .loss import (ClassifierHead, LossConfig, MiniBatch, ema_center_update,
                   init_head, joint_loss)
from .optim import AdamState, adam_step
from .preprocess import (StftConfig, clip_or_pad, image_to_input,
                         spectrogram_to_input, stft_magnitude, to_mono_resample)
from .seeding import derive_seed
from .synth import Manifest, SampleRecord

SAMPLERS = ("class_balanced", "uniform")

PAPER_LR = 0.05
PAPER_WEIGHT_DECAY = 5e-5
PAPER_EPOCHS = 100
PAPER_BATCH_SIZE = 45


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 45
    lr: float = 1e-3
    weight_decay: float = 5e-5
    lam: float = 1.0
    seed: int = 0
    sampler: str = "class_balanced"
    classes_per_batch: int = 9
    images_per_class: int = 3
    audio_per_class: int = 2
    center_mode: str = "in_batch"
    ema_alpha: float = 0.5
    compression: str = "log1p"
    target_rate_hz: int = 16000

    def __post_init__(self):
        if self.sampler not in SAMPLERS:
            raise ValueError(f"unknown sampler {self.sampler!r}")
        if self.sampler == "class_balanced":
            per_class = self.images_per_class + self.audio_per_class
            if self.classes_per_batch * per_class != self.batch_size:
                raise ValueError(
                    "class_balanced sampler requires classes_per_batch * "
                    "(images_per_class + audio_per_class) == batch_size")

    def loss_config(self) -> LossConfig:
        return LossConfig(lam=self.lam, center_mode=self.center_mode,
                          ema_alpha=self.ema_alpha)


@dataclass
class TrainLogRow:
    epoch: int
    batch_index: int
    total_loss: float
    xent: float
    center_term: float
    intra_dist: float


@dataclass
class EmbeddingRow:
    identity_id: int
    modality: str
    path: str
    vector: np.ndarray


@dataclass
class EmbeddingTable:
    rows: list
    profiles: dict   # identity_id -> IdentityProfile

    def matrix(self) -> np.ndarray:
        return np.stack([r.vector for r in self.rows])


@dataclass
class TrainResult:
    params: EncoderParams
    head: ClassifierHead
    head_class_ids: list
    log: list
    checkpoint_path: Path | None = None
    log_path: Path | None = None


def prepare_image_input(path, size: int) -> np.ndarray:
    return image_to_input(read_image(path), size).values


# Fixed gain on spectrogram inputs: log1p magnitudes of full-scale speech
# peak near ln(1 + 32) ~ 3.5 while images live in [0, 1]; one constant puts
# both modalities on the same footing at the first conv layer. This is a
# units choice, not data-dependent normalization.
SPECTROGRAM_GAIN = 0.3


def prepare_audio_input(path, size: int, stft_cfg: StftConfig,
                        compression: str = "log1p",
                        target_rate_hz: int = 16000,
                        gain: float = SPECTROGRAM_GAIN) -> np.ndarray:
    w = to_mono_resample(read_wav(path), target_rate_hz)
    w = clip_or_pad(w, stft_cfg.clip_len_s, "center_crop")
    spec = stft_magnitude(w, stft_cfg)
    return gain * spectrogram_to_input(spec, size, compression).values


class InputCache:
    """Deterministic per-path cache of preprocessed encoder inputs."""

    def __init__(self, manifest: Manifest, size: int, stft_cfg: StftConfig,
                 compression: str = "log1p", target_rate_hz: int = 16000):
        self.manifest = manifest
        self.size = size
        self.stft_cfg = stft_cfg
        self.compression = compression
        self.target_rate_hz = target_rate_hz
        self._store = {}

    def get(self, record: SampleRecord) -> np.ndarray:
        hit = self._store.get(record.path)
        if hit is not None:
            return hit
        full = self.manifest.resolve(record)
        if record.modality == "image":
            x = prepare_image_input(full, self.size)
        else:
            x = prepare_audio_input(full, self.size, self.stft_cfg,
                                    self.compression, self.target_rate_hz)
        self._store[record.path] = x
        return x


def _records_by_class(records: list) -> dict:
    by_class = {}
    for r in records:
        by_class.setdefault(r.identity_id, {"image": [], "audio": []})
        by_class[r.identity_id][r.modality].append(r)
    return by_class


def _check_class_counts(by_class: dict, cfg: TrainConfig) -> None:
    for ident in sorted(by_class):
        pools = by_class[ident]
        if len(pools["image"]) < cfg.images_per_class:
            raise ValueError(
                f"class {ident} has {len(pools['image'])} image samples, "
                f"need {cfg.images_per_class}")
        if len(pools["audio"]) < cfg.audio_per_class:
            raise ValueError(
                f"class {ident} has {len(pools['audio'])} audio samples, "
                f"need {cfg.audio_per_class}")


def sample_batch(manifest: Manifest, cfg: TrainConfig,
                 rng: np.random.Generator, classes=None) -> list:
    """Draw one batch from the train split.

    class_balanced mode picks ``classes_per_batch`` classes (or uses the
    given ``classes``) and samples K_img images + K_aud audio clips from
    each, without replacement. uniform mode draws ``batch_size`` records
    uniformly from the split.
    """
    train = manifest.split_records("train")
    if not train:
        raise ValueError("train split is empty")
    if cfg.sampler == "uniform":
        replace = len(train) < cfg.batch_size
        idx = rng.choice(len(train), size=cfg.batch_size, replace=replace)
        return [train[i] for i in idx]
    by_class = _records_by_class(train)
    if classes is None:
        eligible = sorted(
            c for c, pools in by_class.items()
            if len(pools["image"]) >= cfg.images_per_class
            and len(pools["audio"]) >= cfg.audio_per_class)
        if len(eligible) < cfg.classes_per_batch:
            raise ValueError(
                f"need {cfg.classes_per_batch} classes with enough samples, "
                f"have {len(eligible)}")
        pick = rng.choice(len(eligible), size=cfg.classes_per_batch, replace=False)
        classes = [eligible[i] for i in pick]
    batch = []
    for c in classes:
        if c not in by_class:
            raise ValueError(f"class {c} has no train records")
        pools = by_class[c]
        if len(pools["image"]) < cfg.images_per_class:
            raise ValueError(f"class {c} has {len(pools['image'])} image "
                             f"samples, need {cfg.images_per_class}")
        if len(pools["audio"]) < cfg.audio_per_class:
            raise ValueError(f"class {c} has {len(pools['audio'])} audio "
                             f"samples, need {cfg.audio_per_class}")
        for pool, k in ((pools["image"], cfg.images_per_class),
                        (pools["audio"], cfg.audio_per_class)):
            idx = rng.choice(len(pool), size=k, replace=False)
            batch.extend(pool[i] for i in idx)
    return batch


def plan_epoch(manifest: Manifest, cfg: TrainConfig, epoch: int) -> list:
    """Plan all batches of one epoch, deterministic in (seed, epoch).

    class_balanced mode cycles shuffled class permutations so per-class
    selection counts over the epoch differ by at most one selection
    (= K_img + K_aud records). uniform mode shuffles the split and chunks it.
    """
    train = manifest.split_records("train")
    if not train:
        raise ValueError("train split is empty")
    rng = np.random.default_rng(derive_seed(cfg.seed, "sampler", epoch))
    n_batches = max(1, len(train) // cfg.batch_size)
    if cfg.sampler == "uniform":
        perm = rng.permutation(len(train))
        batches = []
        for b in range(n_batches):
            take = perm[b * cfg.batch_size:(b + 1) * cfg.batch_size]
            if len(take) < cfg.batch_size:
                break
            batches.append([train[i] for i in take])
        return batches or [[train[i] for i in perm[:len(train)]]]
    by_class = _records_by_class(train)
    _check_class_counts(by_class, cfg)
    classes = sorted(by_class)
    if len(classes) < cfg.classes_per_batch:
        raise ValueError(
            f"need {cfg.classes_per_batch} classes, have {len(classes)}")
    stream = deque()
    batches = []
    for b in range(n_batches):
        chosen, deferred = [], []
        while len(chosen) < cfg.classes_per_batch:
            if not stream:
                stream.extend(rng.permutation(classes).tolist())
            c = stream.popleft()
            if c in chosen:
                deferred.append(c)
            else:
                chosen.append(c)
        stream.extendleft(reversed(deferred))
        batches.append(sample_batch(manifest, cfg, rng, classes=chosen))
    return batches


def _batch_tensors(records: list, cache: InputCache, class_index: dict):
    xs = np.stack([cache.get(r) for r in records])
    labels = np.array([class_index[r.identity_id] for r in records])
    tags = [r.modality for r in records]
    return xs, labels, tags


def _intra_dist(embeddings: np.ndarray, labels: np.ndarray) -> float:
    total = 0.0
    for c in np.unique(labels):
        feats = embeddings[labels == c]
        center = feats.mean(axis=0)
        total += float(np.linalg.norm(feats - center, axis=1).sum())
    return total / len(labels)


def train(manifest: Manifest, enc_cfg: EncoderConfig, train_cfg: TrainConfig,
          stft_cfg: StftConfig | None = None, out_dir=None) -> TrainResult:
    """Run the full training loop; returns final params, head, and the log.

    Head classes are the sorted train-split identity ids. A checkpoint is
    (re)written after every epoch when ``out_dir`` is given, plus the CSV
    log; with zero epochs the initial state is what gets saved.
    """
    stft_cfg = stft_cfg or StftConfig()
    train_records = manifest.split_records("train")
    if not train_records:
        raise ValueError("train split is empty")
    class_ids = sorted({r.identity_id for r in train_records})
    class_index = {c: i for i, c in enumerate(class_ids)}
    params = init_params(enc_cfg, train_cfg.seed)
    head = init_head(enc_cfg.embed_dim, len(class_ids),
                     derive_seed(train_cfg.seed, "head"))
    loss_cfg = train_cfg.loss_config()
    cache = InputCache(manifest, enc_cfg.input_size, stft_cfg,
                       train_cfg.compression, train_cfg.target_rate_hz)
    opt_state = AdamState.zeros_like(params.arrays() + [head.W, head.b])
    ema_centers = {}
    log = []

    out_dir = Path(out_dir) if out_dir is not None else None
    ckpt_path = out_dir / "checkpoint.bin" if out_dir else None
    log_path = out_dir / "log.csv" if out_dir else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)

    for epoch in range(train_cfg.epochs):
        for bi, records in enumerate(plan_epoch(manifest, train_cfg, epoch)):
            xs, labels, tags = _batch_tensors(records, cache, class_index)
            emb, trace = forward_batch(params, xs)
            batch = MiniBatch(embeddings=emb, labels=labels, modality_tags=tags)
            result = joint_loss(head, batch, loss_cfg,
                                ema_centers if loss_cfg.center_mode == "ema" else None)
            if not np.isfinite(result.total):
                raise RuntimeError(f"diverged at epoch {epoch} batch {bi}")
            enc_grads, _ = backward_batch(params, trace, result.grad_embeddings)
            arrays = params.arrays() + [head.W, head.b]
            grads = enc_grads.arrays() + [result.grad_head_w, result.grad_head_b]
            arrays, opt_state = adam_step(arrays, grads, opt_state,
                                          lr=train_cfg.lr,
                                          weight_decay=train_cfg.weight_decay)
            params = EncoderParams.from_arrays(arrays[:-2])
            head = ClassifierHead(W=arrays[-2], b=arrays[-1])
            if loss_cfg.center_mode == "ema":
                ema_centers = ema_center_update(ema_centers, batch,
                                                loss_cfg.ema_alpha)
            log.append(TrainLogRow(epoch, bi, result.total, result.xent,
                                   result.center_term,
                                   _intra_dist(emb, labels)))
        if ckpt_path:
            save_checkpoint(ckpt_path, enc_cfg, params, head, class_ids)
    if ckpt_path:
        save_checkpoint(ckpt_path, enc_cfg, params, head, class_ids)
    if log_path:
        write_train_log(log_path, log)
    return TrainResult(params=params, head=head, head_class_ids=class_ids,
                       log=log, checkpoint_path=ckpt_path, log_path=log_path)


def write_train_log(path, log: list) -> None:
    with open(path, "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "batch", "total", "xent", "center", "intra_dist"])
        for row in log:
            writer.writerow([row.epoch, row.batch_index, repr(row.total_loss),
                             repr(row.xent), repr(row.center_term),
                             repr(row.intra_dist)])


def export_embeddings(params: EncoderParams, manifest: Manifest, split: str,
                      enc_cfg: EncoderConfig,
                      stft_cfg: StftConfig | None = None,
                      compression: str = "log1p",
                      target_rate_hz: int = 16000,
                      chunk: int = 64) -> EmbeddingTable:
    """Embed every record of a split, in manifest order, deterministically."""
    stft_cfg = stft_cfg or StftConfig()
    records = manifest.split_records(split)
    cache = InputCache(manifest, enc_cfg.input_size, stft_cfg,
                       compression, target_rate_hz)
    rows = []
    for start in range(0, len(records), chunk):
        part = records[start:start + chunk]
        xs = np.stack([cache.get(r) for r in part])
        emb, _ = forward_batch(params, xs)
        for r, v in zip(part, emb):
            rows.append(EmbeddingRow(r.identity_id, r.modality, r.path, v))
    profiles = {p.id: p for p in manifest.identities}
    return EmbeddingTable(rows=rows, profiles=profiles)


def write_embeddings_csv(path, table: EmbeddingTable) -> None:
    dim = table.rows[0].vector.shape[0] if table.rows else 0
    with open(path, "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["identity_id", "modality", "path"]
                        + [f"e{i}" for i in range(dim)])
        for r in table.rows:
            writer.writerow([r.identity_id, r.modality, r.path]
                            + [repr(float(v)) for v in r.vector])


def read_embeddings_csv(path) -> EmbeddingTable:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"missing embeddings file: {path}")
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        dim = len(header) - 3
        for cells in reader:
            vec = np.array([float(x) for x in cells[3:3 + dim]])
            rows.append(EmbeddingRow(int(cells[0]), cells[1], cells[2], vec))
    return EmbeddingTable(rows=rows, profiles={})
