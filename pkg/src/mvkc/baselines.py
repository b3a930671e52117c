"""k-nearest-neighbour imputation baselines on concatenated raw features.

For a sample missing view m, neighbours are ranked by Euclidean distance
over the concatenation of the views available to *both* points; candidates
must themselves possess view m. The missing feature row is the plain or
inverse-distance-weighted neighbour average, and view m's kernel rows are
then recomputed from the imputed features with the view's kernel function.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import KernelMatrix
from .kernels import compute_kernel
from .solvers import CompletionResult

_WEIGHT_EPS = 1e-12


@dataclass(frozen=True)
class KnnConfig:
    k: int
    weighted: bool = False

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be at least 1")

    def penalties(self):
        return {"k": float(self.k)}


def knn_impute(ds, cfg):
    """Fill every missing view of every sample, then rebuild the affected
    kernel rows/columns. Known blocks are copied through untouched."""
    if ds.features is None:
        raise ValueError("knn imputation needs raw features")
    if ds.kinds is None:
        raise ValueError("knn imputation needs per-view kernel kinds")
    import time

    t0 = time.perf_counter()
    n, M = ds.n, ds.m
    known_sets = [set(mask.known) for mask in ds.masks]

    # pairwise squared distance restricted to mutually available views
    overlap = np.zeros((n, n))
    has_common = np.zeros((n, n), dtype=bool)
    for v in range(M):
        X = ds.features[v]
        sq = np.sum(X * X, axis=1)
        d2 = sq[:, None] + sq[None, :] - 2.0 * (X @ X.T)
        np.maximum(d2, 0.0, out=d2)
        avail = np.zeros(n, dtype=bool)
        avail[list(known_sets[v])] = True
        pair = np.outer(avail, avail)
        overlap += np.where(pair, d2, 0.0)
        has_common |= pair

    imputed = [np.array(X, dtype=float) for X in ds.features]
    for m in range(M):
        cand_all = np.asarray(sorted(known_sets[m]), dtype=int)
        for t in ds.masks[m].missing:
            cand = cand_all[cand_all != t]
            cand = cand[has_common[t, cand]]
            if cand.size < cfg.k:
                raise ValueError(
                    f"view {m}, sample {t}: only {cand.size} usable neighbours "
                    f"for k={cfg.k}"
                )
            d2 = overlap[t, cand]
            order = np.argsort(d2, kind="stable")[: cfg.k]
            chosen = cand[order]
            rows = ds.features[m][chosen]
            if cfg.weighted:
                w = 1.0 / (np.sqrt(d2[order]) + _WEIGHT_EPS)
                imputed[m][t] = (w[:, None] * rows).sum(axis=0) / w.sum()
            else:
                imputed[m][t] = rows.mean(axis=0)

    kernels = []
    for m in range(M):
        full = compute_kernel(ds.kinds[m], imputed[m]).values.copy()
        idx = ds.masks[m].known_idx()
        block = np.ix_(idx, idx)
        full[block] = ds.kernels[m].values[block]
        kernels.append(KernelMatrix(0.5 * (full + full.T)))

    wall = time.perf_counter() - t0
    return CompletionResult(
        method="wknn" if cfg.weighted else "knn",
        kernels=tuple(kernels),
        weights=None,
        combination=None,
        objective_trace=(),
        iteration_ms=(),
        wall_seconds=wall,
        iterations=0,
        converged=True,
        penalties=cfg.penalties(),
    )
