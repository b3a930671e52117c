"""Data model for masked multi-view kernel datasets.

Unknown kernel entries are never encoded with magic values: a masked kernel
stores zeros outside the known block and the ViewMask is the single source
of truth about which entries mean anything. All types freeze their arrays
after construction and are safe to share across workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SYMMETRY_ATOL = 1e-9


def _frozen(arr):
    arr = np.ascontiguousarray(arr, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class KernelMatrix:
    """Dense symmetric Gram matrix with a PSD eigenvalue tolerance."""

    values: np.ndarray
    psd_tol: float = 1e-9

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ValueError("kernel matrix must be square")
        if not np.all(np.isfinite(values)):
            raise ValueError("kernel matrix must be finite")
        asym = np.max(np.abs(values - values.T)) if values.size else 0.0
        if asym > SYMMETRY_ATOL:
            raise ValueError(f"matrix asymmetric beyond tolerance ({asym:.3e})")
        if self.psd_tol < 0:
            raise ValueError("psd_tol must be non-negative")
        object.__setattr__(self, "values", _frozen(0.5 * (values + values.T)))

    @property
    def n(self):
        return self.values.shape[0]

    def min_eigenvalue(self):
        return float(np.linalg.eigvalsh(self.values)[0])


@dataclass(frozen=True)
class ViewMask:
    """Known-sample index set of one view over the global index set."""

    n: int
    known: tuple

    def __post_init__(self):
        known = tuple(int(i) for i in self.known)
        if self.n <= 0:
            raise ValueError("n must be positive")
        if not known:
            raise ValueError("known set must be non-empty")
        if any(b <= a for a, b in zip(known, known[1:])):
            raise ValueError("known indices must be strictly increasing")
        if known[0] < 0 or known[-1] >= self.n:
            raise ValueError("mask index out of range")
        object.__setattr__(self, "known", known)

    @property
    def missing(self):
        known = set(self.known)
        return tuple(i for i in range(self.n) if i not in known)

    def known_idx(self):
        return np.asarray(self.known, dtype=int)

    def missing_idx(self):
        return np.asarray(self.missing, dtype=int)

    def is_full(self):
        return len(self.known) == self.n

    @staticmethod
    def full(n):
        return ViewMask(n, tuple(range(n)))


def apply_mask(K_full, mask):
    """Keep the known x known block of K_full, zero everything that touches
    a missing index (the mask, not the zeros, is the unknown marker)."""
    if K_full.n != mask.n:
        raise ValueError("kernel and mask shapes disagree")
    idx = mask.known_idx()
    out = np.zeros_like(K_full.values)
    block = np.ix_(idx, idx)
    out[block] = K_full.values[block]
    return KernelMatrix(out, psd_tol=K_full.psd_tol)


@dataclass(frozen=True)
class MultiViewDataset:
    """M masked kernels plus optional ground truth, raw features and the
    per-view kernel functions that produced them."""

    kernels: tuple
    masks: tuple
    truth: tuple | None = None
    features: tuple | None = None
    kinds: tuple | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        kernels = tuple(self.kernels)
        masks = tuple(self.masks)
        if not kernels:
            raise ValueError("dataset needs at least one view")
        if len(kernels) != len(masks):
            raise ValueError("one mask per kernel required")
        n = kernels[0].n
        for K, mask in zip(kernels, masks):
            if K.n != n or mask.n != n:
                raise ValueError("all views must share the sample count")
        covered = set()
        for mask in masks:
            covered.update(mask.known)
        if len(covered) != n:
            raise ValueError("every sample must be known in at least one view")
        truth = None if self.truth is None else tuple(self.truth)
        if truth is not None:
            if len(truth) != len(kernels):
                raise ValueError("one truth kernel per view required")
            for T, K, mask in zip(truth, kernels, masks):
                if T.n != n:
                    raise ValueError("truth shape mismatch")
                block = np.ix_(mask.known_idx(), mask.known_idx())
                if np.max(np.abs(T.values[block] - K.values[block])) > 1e-9:
                    raise ValueError("truth disagrees with the known block")
        features = None
        if self.features is not None:
            features = tuple(_frozen(np.asarray(X, dtype=float)) for X in self.features)
            if len(features) != len(kernels):
                raise ValueError("one feature matrix per view required")
            for X in features:
                if X.ndim != 2 or X.shape[0] != n:
                    raise ValueError("feature matrix must be n x d")
        kinds = None if self.kinds is None else tuple(self.kinds)
        if kinds is not None and len(kinds) != len(kernels):
            raise ValueError("one kernel kind per view required")
        object.__setattr__(self, "kernels", kernels)
        object.__setattr__(self, "masks", masks)
        object.__setattr__(self, "truth", truth)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "kinds", kinds)

    @property
    def n(self):
        return self.kernels[0].n

    @property
    def m(self):
        return len(self.kernels)

    def is_complete(self):
        return all(mask.is_full() for mask in self.masks)
