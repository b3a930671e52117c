"""Synthetic multi-view datasets and missing-view induction.

Four named recipes, all with 5 views generated from 10 shared-basis points:
views 1-2 mix a 5-d basis with one mixing matrix, views 3-5 mix a 10-d basis
with another. The recipes differ only in the kernel applied per view.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import MultiViewDataset, ViewMask, apply_mask
from .kernels import KernelKind, compute_kernel

RECIPE_NAMES = ("toyl", "toyg1", "toyg0.1", "toylg1")

_BASIS_DIMS = (5, 5, 10, 10, 10)
_MIX_GROUP = (0, 0, 1, 1, 1)  # views 1-2 and 3-5 share a mixing matrix


class InfeasiblePlanError(ValueError):
    pass


@dataclass(frozen=True)
class ToyRecipe:
    name: str
    n: int = 100
    basis_count: int = 10
    seed: int = 0

    def __post_init__(self):
        name = self.name.lower()
        if name not in RECIPE_NAMES:
            raise ValueError(f"unknown recipe {self.name!r}; one of {RECIPE_NAMES}")
        if not 0 < self.basis_count < self.n:
            raise ValueError("basis_count must be positive and below n")
        object.__setattr__(self, "name", name)

    def kernel_kinds(self):
        if self.name == "toyl":
            return tuple(KernelKind("linear") for _ in range(5))
        if self.name == "toyg1":
            return tuple(KernelKind("gaussian", 1.0) for _ in range(5))
        if self.name == "toyg0.1":
            return tuple(KernelKind("gaussian", 0.1) for _ in range(5))
        return (
            KernelKind("linear"),
            KernelKind("linear"),
            KernelKind("linear"),
            KernelKind("gaussian", 1.0),
            KernelKind("gaussian", 1.0),
        )


@dataclass(frozen=True)
class MissingnessPlan:
    affected_fraction: float = 0.6
    views_removed_per_point: int = 1
    anchor_fraction: float = 0.1
    seed: int = 0
    min_known_per_view: int = 10

    def __post_init__(self):
        if not 0.0 < self.affected_fraction <= 1.0:
            raise ValueError("affected_fraction must lie in (0, 1]")
        if self.views_removed_per_point < 1:
            raise ValueError("views_removed_per_point must be positive")
        if not 0.0 <= self.anchor_fraction < 1.0:
            raise ValueError("anchor_fraction must lie in [0, 1)")
        if self.min_known_per_view < 1:
            raise ValueError("min_known_per_view must be positive")


def generate_toy(recipe):
    """Build one of the named synthetic datasets, complete (full masks),
    with truth kernels, raw features and kernel kinds attached."""
    rng = np.random.default_rng(recipe.seed)
    n, nb = recipe.n, recipe.basis_count
    # one basis draw per view group: views in a group share their samples
    # and differ only in the kernel applied to them
    bases = [rng.uniform(-1.0, 1.0, size=(nb, d)) for d in (5, 10)]
    mixing = [rng.uniform(-1.0, 1.0, size=(n - nb, nb)) for _ in range(2)]
    features = []
    for v in range(5):
        g = _MIX_GROUP[v]
        features.append(np.vstack([bases[g], mixing[g] @ bases[g]]))
    kinds = recipe.kernel_kinds()
    truth = tuple(compute_kernel(kind, X) for kind, X in zip(kinds, features))
    masks = tuple(ViewMask.full(n) for _ in range(5))
    return MultiViewDataset(
        kernels=truth,
        masks=masks,
        truth=truth,
        features=tuple(features),
        kinds=kinds,
        meta={
            "recipe": recipe.name,
            "basis_count": nb,
            "mixing": mixing,
            "mixing_group": _MIX_GROUP,
        },
    )


def induce_missing(ds, plan, candidates=None):
    """Remove whole views from randomly selected points.

    The first round(anchor_fraction * n) indices are never touched. Among
    the candidate points (default: everything else), a fraction
    affected_fraction each lose views_removed_per_point views; the removed
    rows/columns are masked and the remaining known blocks are re-copied
    from the truth kernels. Raises InfeasiblePlanError when a removal would
    leave a view with fewer than min_known_per_view known points or a point
    with no view at all.
    """
    if ds.truth is None:
        raise ValueError("induce_missing needs ground-truth kernels")
    n, M = ds.n, ds.m
    if plan.views_removed_per_point > M - 1:
        raise InfeasiblePlanError("cannot remove all views of a point")
    rng = np.random.default_rng(plan.seed)
    n_anchor = int(round(plan.anchor_fraction * n))
    anchors = set(range(n_anchor))
    if candidates is None:
        pool = [i for i in range(n) if i not in anchors]
    else:
        pool = [int(i) for i in candidates if int(i) not in anchors]
    n_affected = int(round(plan.affected_fraction * len(pool)))
    affected = rng.choice(len(pool), size=n_affected, replace=False)

    known = [set(mask.known) for mask in ds.masks]
    floor = plan.min_known_per_view
    for j in affected:
        point = pool[int(j)]
        eligible = [
            v for v in range(M) if point in known[v] and len(known[v]) - 1 >= floor
        ]
        present = sum(point in known[v] for v in range(M))
        take = plan.views_removed_per_point
        if present - take < 1 or len(eligible) < take:
            raise InfeasiblePlanError(
                f"plan would strip point {point} below feasibility "
                f"(eligible views: {len(eligible)}, needed: {take})"
            )
        drop = rng.choice(len(eligible), size=take, replace=False)
        for d in drop:
            known[eligible[int(d)]].discard(point)

    masks = tuple(ViewMask(n, tuple(sorted(k))) for k in known)
    kernels = tuple(apply_mask(T, mask) for T, mask in zip(ds.truth, masks))
    return MultiViewDataset(
        kernels=kernels,
        masks=masks,
        truth=ds.truth,
        features=ds.features,
        kinds=ds.kinds,
        meta=dict(ds.meta),
    )
