"""Cross-modal evaluation: verification (AUC/EER), 1:N matching, retrieval.

All metrics consume embedding tables produced by the trainer. Scores are
cosine similarities by default; every protocol is seeded and reduces in a
fixed order so results are bit-reproducible.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .seeding import derive_seed
from .trainer import EmbeddingTable

SIMILARITIES = ("cosine", "neg_l2")
STRATA = ("random", "G", "N", "A", "GNA")


@dataclass
class VerificationPair:
    audio_embedding: np.ndarray
    image_embedding: np.ndarray
    is_match: bool
    gender_equal: bool
    nationality_equal: bool
    age_equal: bool


@dataclass
class EvalReport:
    task: str
    seed: int
    config: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    stratum: str = "random"

    def to_json(self) -> str:
        payload = {"task": self.task, "stratum": self.stratum, "seed": self.seed,
                   "config": self.config, "metrics": self.metrics}
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def similarity(a: np.ndarray, b: np.ndarray, metric: str = "cosine") -> float:
    """Cosine similarity (default) or negated Euclidean distance."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("embedding dimensions differ")
    if metric == "neg_l2":
        return -float(np.linalg.norm(a - b))
    if metric != "cosine":
        raise ValueError(f"unknown similarity {metric!r}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine similarity undefined for zero vectors")
    return float(a @ b / (na * nb))


def roc_auc(scores_pos, scores_neg) -> float:
    """Mann-Whitney AUC: P(pos > neg), ties counted 0.5."""
    pos = np.asarray(scores_pos, dtype=np.float64)
    neg = np.asarray(scores_neg, dtype=np.float64)
    if pos.size == 0 or neg.size == 0:
        raise ValueError("need at least one positive and one negative score")
    merged = np.concatenate([pos, neg])
    order = np.argsort(merged, kind="mergesort")
    ranks = np.empty(merged.size, dtype=np.float64)
    sorted_scores = merged[order]
    i = 0
    while i < merged.size:
        j = i
        while j + 1 < merged.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0   # average rank, 1-based
        i = j + 1
    r_pos = ranks[:pos.size].sum()
    return float((r_pos - pos.size * (pos.size + 1) / 2.0) / (pos.size * neg.size))


def roc_sweep(scores_pos, scores_neg) -> tuple:
    """FAR/FRR over the merged-score threshold sweep.

    Returns (far, frr, thresholds) where far[i] is the fraction of negatives
    >= thresholds[i] and frr[i] the fraction of positives < thresholds[i].
    A final +inf threshold closes the curve at (far 0, frr 1).
    """
    pos = np.sort(np.asarray(scores_pos, dtype=np.float64))
    neg = np.sort(np.asarray(scores_neg, dtype=np.float64))
    if pos.size == 0 or neg.size == 0:
        raise ValueError("need at least one positive and one negative score")
    thresholds = np.unique(np.concatenate([pos, neg]))
    thresholds = np.append(thresholds, np.inf)
    far = 1.0 - np.searchsorted(neg, thresholds, side="left") / neg.size
    frr = np.searchsorted(pos, thresholds, side="left") / pos.size
    return far, frr, thresholds


def eer(scores_pos, scores_neg) -> float:
    """Equal error rate via the threshold sweep.

    FAR decreases and FRR increases with the threshold; the rate at their
    crossing is returned, linearly interpolating between the two adjacent
    thresholds when the crossing falls between sweep points.
    """
    far, frr, _ = roc_sweep(scores_pos, scores_neg)
    diff = far - frr
    for i in range(diff.size):
        if diff[i] == 0.0:
            return float(far[i])
        if diff[i] < 0.0:
            # Crossing lies between i-1 (diff>0) and i (diff<0).
            if i == 0:
                return float(far[0])
            alpha = diff[i - 1] / (diff[i - 1] - diff[i])
            return float(far[i - 1] + alpha * (far[i] - far[i - 1]))
    return float(far[-1])


def _rows_by_modality(table: EmbeddingTable) -> tuple:
    audio, image = {}, {}
    for r in table.rows:
        store = audio if r.modality == "audio" else image
        store.setdefault(r.identity_id, []).append(r)
    return audio, image


def _stratum_ok(stratify: str, pa, pb) -> bool:
    if stratify == "random":
        return True
    checks = {"G": pa.gender == pb.gender,
              "N": pa.nationality == pb.nationality,
              "A": pa.age_group == pb.age_group}
    if stratify == "GNA":
        return all(checks.values())
    return checks[stratify]


def build_pairs(table: EmbeddingTable, n_pairs: int, stratify: str = "random",
                seed: int = 0) -> list:
    """Seeded 50/50 positive/negative cross-modal verification pairs.

    Negatives under stratum G/N/A/GNA are constrained to identities sharing
    the given attribute(s), which removes that cue from the imposter pool.
    """
    if stratify not in STRATA:
        raise ValueError(f"unknown stratum {stratify!r}")
    audio, image = _rows_by_modality(table)
    both = sorted(set(audio) & set(image))
    if len(both) < 2:
        raise ValueError("need at least 2 identities with both modalities")
    profiles = table.profiles
    neg_partners = {}
    for ia in sorted(audio):
        partners = [ib for ib in sorted(image)
                    if ib != ia and _stratum_ok(stratify, profiles[ia], profiles[ib])]
        if partners:
            neg_partners[ia] = partners
    if not neg_partners:
        raise ValueError(f"stratum {stratify!r} is infeasible on this table")
    rng = np.random.default_rng(derive_seed(seed, "pairs", stratify))
    n_pos = n_pairs // 2
    pairs = []
    for k in range(n_pairs):
        if k < n_pos:
            ia = ib = both[rng.integers(len(both))]
        else:
            anchors = sorted(neg_partners)
            ia = anchors[rng.integers(len(anchors))]
            partners = neg_partners[ia]
            ib = partners[rng.integers(len(partners))]
        ra = audio[ia][rng.integers(len(audio[ia]))]
        rb = image[ib][rng.integers(len(image[ib]))]
        pa, pb = profiles[ia], profiles[ib]
        pairs.append(VerificationPair(
            audio_embedding=ra.vector, image_embedding=rb.vector,
            is_match=ia == ib,
            gender_equal=pa.gender == pb.gender,
            nationality_equal=pa.nationality == pb.nationality,
            age_equal=pa.age_group == pb.age_group))
    return pairs


def score_pairs(pairs: list, metric: str = "cosine") -> tuple:
    """Similarity scores split into (positive, negative) lists, in pair order."""
    pos = [similarity(p.audio_embedding, p.image_embedding, metric)
           for p in pairs if p.is_match]
    neg = [similarity(p.audio_embedding, p.image_embedding, metric)
           for p in pairs if not p.is_match]
    return np.array(pos), np.array(neg)


def verify(table: EmbeddingTable, n_pairs: int, stratify: str = "random",
           seed: int = 0, metric: str = "cosine") -> tuple:
    """Full verification protocol; returns (auc, eer, pairs, (pos, neg))."""
    pairs = build_pairs(table, n_pairs, stratify, seed)
    pos, neg = score_pairs(pairs, metric)
    return roc_auc(pos, neg), eer(pos, neg), pairs, (pos, neg)


def forced_match(probe: np.ndarray, gallery: list, true_index: int,
                 metric: str = "cosine") -> bool:
    """True iff the true gallery entry is the strict similarity maximum."""
    if len(gallery) < 2:
        raise ValueError("gallery must contain at least 2 entries")
    if not 0 <= true_index < len(gallery):
        raise ValueError("true_index out of range")
    scores = np.array([similarity(probe, g, metric) for g in gallery])
    best = scores.max()
    if scores[true_index] < best:
        return False
    return int((scores == best).sum()) == 1


def matching_accuracy(table: EmbeddingTable, direction: str, n_c: int,
                      trials: int, seed: int = 0,
                      metric: str = "cosine") -> float:
    """Mean 1:N forced-matching success over seeded trials.

    Per trial the gallery holds the true identity's opposite-modality item
    plus n_c - 1 imposter identities. Trials are seeded per index, and the
    imposter identity order per trial does not depend on n_c, so galleries
    for smaller n_c are prefixes of those for larger n_c (common random
    numbers: accuracy is non-increasing in n_c by construction).
    """
    audio, image = _rows_by_modality(table)
    if direction == "voice_to_face":
        probe_pool, gallery_pool = audio, image
    elif direction == "face_to_voice":
        probe_pool, gallery_pool = image, audio
    else:
        raise ValueError(f"unknown direction {direction!r}")
    eligible = sorted(set(probe_pool) & set(gallery_pool))
    imposter_ids = sorted(gallery_pool)
    if n_c < 2:
        raise ValueError("n_c must be >= 2")
    if len(imposter_ids) < n_c:
        raise ValueError(f"need at least {n_c} identities with gallery items, "
                         f"have {len(imposter_ids)}")
    if not eligible:
        raise ValueError("no identity has both modalities")
    hits = 0
    for t in range(trials):
        rng = np.random.default_rng(derive_seed(seed, "match", t))
        ident = eligible[rng.integers(len(eligible))]
        probe_row = probe_pool[ident][rng.integers(len(probe_pool[ident]))]
        true_row = gallery_pool[ident][rng.integers(len(gallery_pool[ident]))]
        others = [i for i in imposter_ids if i != ident]
        order = rng.permutation(len(others))
        gallery = [true_row.vector]
        for k in range(n_c - 1):
            imp = others[order[k]]
            rowset = gallery_pool[imp]
            gallery.append(rowset[rng.integers(len(rowset))].vector)
        hits += forced_match(probe_row.vector, gallery, 0, metric)
    return hits / trials


def recall_at_k(table: EmbeddingTable, direction: str, k_values,
                seed: int = 0, gender_filter: bool = False,
                gallery_table: EmbeddingTable | None = None,
                metric: str = "cosine") -> dict:
    """R@K over all probe-modality rows against the opposite-modality gallery.

    R@K is the fraction of queries whose top-K ranked gallery contains at
    least one same-identity item. ``gender_filter`` restricts each query's
    gallery to identities of the query's gender. The seed only shuffles
    gallery order ahead of ranking, which fixes tie behavior.
    """
    source = gallery_table if gallery_table is not None else table
    if direction == "voice_to_face":
        probe_mod, gallery_mod = "audio", "image"
    elif direction == "face_to_voice":
        probe_mod, gallery_mod = "image", "audio"
    else:
        raise ValueError(f"unknown direction {direction!r}")
    queries = [r for r in table.rows if r.modality == probe_mod]
    gallery = [r for r in source.rows if r.modality == gallery_mod]
    if not gallery:
        raise ValueError("empty gallery")
    rng = np.random.default_rng(derive_seed(seed, "retrieval"))
    gallery = [gallery[i] for i in rng.permutation(len(gallery))]
    profiles = table.profiles or source.profiles
    gal_mat = np.stack([g.vector for g in gallery])
    gal_ids = np.array([g.identity_id for g in gallery])
    if metric == "cosine":
        gal_mat = gal_mat / np.linalg.norm(gal_mat, axis=1, keepdims=True)
    hits = {int(k): 0 for k in k_values}
    n_queries = 0
    for q in queries:
        mask = np.ones(len(gallery), dtype=bool)
        if gender_filter:
            g = profiles[q.identity_id].gender
            mask = np.array([profiles[x.identity_id].gender == g for x in gallery])
        ids = gal_ids[mask]
        if not np.any(ids == q.identity_id):
            raise ValueError(f"query identity {q.identity_id} has no "
                             f"opposite-modality item in the gallery")
        if metric == "cosine":
            qv = q.vector / np.linalg.norm(q.vector)
            sims = gal_mat[mask] @ qv
        else:
            sims = -np.linalg.norm(gal_mat[mask] - q.vector, axis=1)
        ranked = ids[np.argsort(-sims, kind="mergesort")]
        n_queries += 1
        for k in hits:
            if np.any(ranked[:k] == q.identity_id):
                hits[k] += 1
    if n_queries == 0:
        raise ValueError("no queries in the probe modality")
    return {k: hits[k] / n_queries for k in hits}


def write_report_json(path, report: EvalReport) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(report.to_json())
        fh.write("\n")


def write_scores_csv(path, pairs: list, scores_pos, scores_neg,
                     stratum: str) -> None:
    """Dump per-pair scores in pair order: pair_id,score,is_match,stratum."""
    pos_iter = iter(scores_pos)
    neg_iter = iter(scores_neg)
    with open(path, "w", newline="\n") as fh:
        fh.write("pair_id,score,is_match,stratum\n")
        for i, p in enumerate(pairs):
            s = next(pos_iter) if p.is_match else next(neg_iter)
            fh.write(f"{i},{repr(float(s))},{int(p.is_match)},{stratum}\n")


def write_roc_csv(path, scores_pos, scores_neg) -> None:
    far, frr, thr = roc_sweep(scores_pos, scores_neg)
    with open(path, "w", newline="\n") as fh:
        fh.write("far,frr,threshold\n")
        for f, r, t in zip(far, frr, thr):
            fh.write(f"{repr(float(f))},{repr(float(r))},{repr(float(t))}\n")
