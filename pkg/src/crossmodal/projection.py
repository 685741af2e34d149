"""PCA projection of embeddings to 2-D for qualitative cluster plots."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .trainer import EmbeddingTable


@dataclass
class ProjectedRow:
    identity_id: int
    modality: str
    x: float
    y: float


def project_2d(table: EmbeddingTable) -> list:
    """Top-2 principal components of the mean-centered embeddings.

    Sign convention: each component's largest-magnitude loading is made
    positive, so the projection is deterministic across runs.
    """
    if len(table.rows) < 3:
        raise ValueError("need at least 3 rows to project")
    mat = table.matrix()
    if np.unique(mat, axis=0).shape[0] < 2:
        raise ValueError("rank-deficient input: fewer than 2 distinct rows")
    centered = mat - mat.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    comps = vt[:2].copy()
    for i in range(2):
        j = int(np.argmax(np.abs(comps[i])))
        if comps[i, j] < 0:
            comps[i] = -comps[i]
    coords = centered @ comps.T
    return [ProjectedRow(r.identity_id, r.modality, float(c[0]), float(c[1]))
            for r, c in zip(table.rows, coords)]


def write_projection_csv(path, rows: list) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write("identity_id,modality,x,y\n")
        for r in rows:
            fh.write(f"{r.identity_id},{r.modality},{repr(r.x)},{repr(r.y)}\n")
