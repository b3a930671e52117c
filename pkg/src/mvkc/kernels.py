"""Kernel functions and kernel-matrix normalization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import KernelMatrix

KERNEL_NAMES = ("linear", "gaussian", "jaccard")


@dataclass(frozen=True)
class KernelKind:
    name: str
    width: float | None = None

    def __post_init__(self):
        if self.name not in KERNEL_NAMES:
            raise ValueError(f"unknown kernel kind {self.name!r}")
        if self.name == "gaussian":
            if self.width is None or self.width <= 0:
                raise ValueError("gaussian kernel needs a positive width")
        elif self.width is not None:
            raise ValueError(f"{self.name} kernel takes no width")

    @staticmethod
    def parse(text):
        """Parse 'linear', 'jaccard' or 'gaussian:<width>'."""
        text = text.strip()
        if text.startswith("gaussian"):
            _, _, w = text.partition(":")
            if not w:
                raise ValueError("gaussian kind needs 'gaussian:<width>'")
            return KernelKind("gaussian", float(w))
        return KernelKind(text)

    def format(self):
        if self.name == "gaussian":
            return f"gaussian:{self.width:.17g}"
        return self.name


def compute_kernel(kind, X):
    """Gram matrix of the rows of X under the given kernel function."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError("X must be a 2-d sample matrix")
    if not np.all(np.isfinite(X)):
        raise ValueError("X must be finite")

    if kind.name == "linear":
        K = X @ X.T
        K = 0.5 * (K + K.T)
    elif kind.name == "gaussian":
        sq = np.sum(X * X, axis=1)
        d2 = sq[:, None] + sq[None, :] - 2.0 * (X @ X.T)
        np.maximum(d2, 0.0, out=d2)
        d2 = 0.5 * (d2 + d2.T)
        K = np.exp(-d2 / (2.0 * kind.width**2))
        np.fill_diagonal(K, 1.0)
    elif kind.name == "jaccard":
        if not np.all((X == 0) | (X == 1)):
            raise ValueError("jaccard kernel needs binary input")
        inter = X @ X.T
        counts = np.sum(X, axis=1)
        if np.any(counts == 0):
            raise ValueError("jaccard kernel undefined for all-zero rows")
        union = counts[:, None] + counts[None, :] - inter
        K = inter / union
        K = 0.5 * (K + K.T)
        np.fill_diagonal(K, 1.0)
    else:  # pragma: no cover - KernelKind validates
        raise ValueError(f"unknown kernel kind {kind.name!r}")
    return KernelMatrix(K)


def normalize_kernel(K):
    """Cosine-normalize to unit diagonal: k'_ij = k_ij / sqrt(k_ii k_jj).

    Preserves positive semi-definiteness; idempotent.
    """
    values = K.values
    diag = np.diag(values)
    if np.any(diag <= 0):
        raise ValueError("normalization needs strictly positive diagonal entries")
    d = np.sqrt(diag)
    out = values / np.outer(d, d)
    np.fill_diagonal(out, 1.0)
    return KernelMatrix(out, psd_tol=K.psd_tol)
