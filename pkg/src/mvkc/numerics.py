"""Stateless numerical primitives shared by all completion solvers.

Everything here is a pure function of its inputs: the group-sparsity prox,
Euclidean projections onto the probability simplex and the PSD cone, a
backtracking proximal step, and a simplex-constrained least-squares solver.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DivergenceError(RuntimeError):
    """Raised when an objective evaluates to a non-finite value."""


@dataclass(frozen=True)
class LineSearchConfig:
    initial_step: float = 1.0
    shrink: float = 0.5
    max_backtracks: int = 50
    sufficient_decrease: float = 0.0

    def __post_init__(self):
        if self.initial_step <= 0:
            raise ValueError("initial_step must be positive")
        if not 0.0 < self.shrink < 1.0:
            raise ValueError("shrink must lie in (0, 1)")
        if self.max_backtracks < 1:
            raise ValueError("max_backtracks must be positive")
        if self.sufficient_decrease < 0:
            raise ValueError("sufficient_decrease must be non-negative")


@dataclass(frozen=True)
class SimplexQPProblem:
    """Least-squares dictionary fit: approximate `reference` by a simplex
    combination of `targets` (all matrices of one common shape)."""

    targets: tuple
    reference: np.ndarray

    def __post_init__(self):
        targets = tuple(np.asarray(t, dtype=float) for t in self.targets)
        reference = np.asarray(self.reference, dtype=float)
        if not targets:
            raise ValueError("need at least one target")
        for t in targets:
            if t.shape != reference.shape:
                raise ValueError("all targets must share the reference shape")
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "reference", reference)


def prox_l21_row(delta, threshold):
    """Prox of threshold * ||.||_2 at a single row: shrink toward zero,
    exactly zero once the row norm falls below the threshold."""
    delta = np.asarray(delta, dtype=float)
    if threshold < 0:
        raise ValueError("threshold must be non-negative")
    norm = np.linalg.norm(delta)
    if norm <= threshold:
        return np.zeros_like(delta)
    return (1.0 - threshold / norm) * delta


def prox_l21_rows(block, threshold):
    """Row-wise prox_l21_row over a 2-d array (one shared threshold)."""
    block = np.asarray(block, dtype=float)
    norms = np.linalg.norm(block, axis=1)
    scale = np.zeros_like(norms)
    live = norms > threshold
    scale[live] = 1.0 - threshold / norms[live]
    return block * scale[:, None]


def project_simplex(v):
    """Euclidean projection onto {x : x >= 0, sum(x) = 1} (sort-based)."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise ValueError("expected a non-empty vector")
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    j = np.arange(1, v.size + 1)
    rho = np.nonzero(u + (1.0 - css) / j > 0)[0][-1]
    tau = (css[rho] - 1.0) / (rho + 1)
    return np.maximum(v - tau, 0.0)


def project_psd(mat):
    """Nearest positive semi-definite matrix in Frobenius norm.

    Symmetrizes first, then clips negative eigenvalues to zero.
    """
    mat = np.asarray(mat, dtype=float)
    sym = 0.5 * (mat + mat.T)
    if not np.all(np.isfinite(sym)):
        raise DivergenceError("non-finite input to PSD projection")
    w, v = np.linalg.eigh(sym)
    if w[0] >= 0.0:
        return sym
    w = np.maximum(w, 0.0)
    out = (v * w) @ v.T
    return 0.5 * (out + out.T)


def backtracking_step(f, g, x, prox, cfg, reg=None):
    """One proximal step x+ = prox(x - step * g, step) with backtracking.

    Accepts the largest step in the schedule whose composite value
    f(x+) + reg(x+) does not exceed f(x) + reg(x) (plus the optional
    sufficient-decrease margin). Returns (x, 0.0) when every step fails.
    """
    x = np.asarray(x, dtype=float)
    g = np.asarray(g, dtype=float)
    f0 = f(x)
    if not np.isfinite(f0):
        raise DivergenceError("objective is non-finite at the current point")
    r0 = 0.0 if reg is None else reg(x)
    step = cfg.initial_step
    for _ in range(cfg.max_backtracks):
        cand = prox(x - step * g, step)
        f1 = f(cand)
        r1 = 0.0 if reg is None else reg(cand)
        if np.isfinite(f1):
            margin = 0.0
            if cfg.sufficient_decrease > 0.0:
                diff = cand - x
                margin = cfg.sufficient_decrease * float(np.vdot(diff, diff)) / step
            if f1 + r1 <= f0 + r0 - margin:
                return cand, step
        step *= cfg.shrink
    return x, 0.0


def _kkt_residual(s, grad):
    return float(np.max(np.abs(s - project_simplex(s - grad))))


def _active_set_simplex(gram, b, tol):
    """Exact active-set solve of min s'Gs - 2b's on the simplex (d <= ~10).

    Iterates equality-constrained KKT solves on a working support, dropping
    negative components and admitting dual-infeasible ones. Returns None
    when it fails to terminate cleanly (degenerate cycling)."""
    d = b.size
    support = list(range(d))
    for _ in range(3 * d + 10):
        k = len(support)
        kkt = np.zeros((k + 1, k + 1))
        kkt[:k, :k] = 2.0 * gram[np.ix_(support, support)]
        kkt[:k, k] = 1.0
        kkt[k, :k] = 1.0
        rhs = np.concatenate([2.0 * b[support], [1.0]])
        try:
            sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
        except np.linalg.LinAlgError:
            return None
        if not np.all(np.isfinite(sol)):
            return None
        vals, nu = sol[:k], sol[k]
        if np.min(vals) < -1e-12:
            worst = support[int(np.argmin(vals))]
            if k == 1:
                return None
            support.remove(worst)
            continue
        s = np.zeros(d)
        s[support] = np.maximum(vals, 0.0)
        total = s.sum()
        if total <= 0:
            return None
        s /= total
        inactive = [j for j in range(d) if j not in support]
        if inactive:
            slack = 2.0 * (gram[inactive] @ s - b[inactive]) + nu
            j = int(np.argmin(slack))
            if slack[j] < -1e-9:
                support.append(inactive[j])
                support.sort()
                continue
        if _kkt_residual(s, 2.0 * (gram @ s - b)) <= tol:
            return s
        return None
    return None


def solve_simplex_ls(problem, tol=1e-6, max_iters=20_000):
    """Minimize ||reference - sum_l s_l target_l||_F^2 over the simplex.

    An exact active-set solve handles the typical (tiny, possibly
    ill-conditioned) problem; accelerated projected gradient with a
    monotone restart and an active-set polish is the fallback. Stops at
    the fixed-point residual ||s - proj(s - grad)||_inf <= tol.
    """
    targets = problem.targets
    d = len(targets)
    if d == 1:
        return np.array([1.0])

    flat = np.stack([t.ravel() for t in targets])
    gram = flat @ flat.T
    b = flat @ problem.reference.ravel()

    exact = _active_set_simplex(gram, b, tol)
    if exact is not None:
        return exact

    def grad(s):
        return 2.0 * (gram @ s - b)

    lip = 2.0 * max(float(np.linalg.eigvalsh(gram)[-1]), 1e-30)
    step = 1.0 / lip

    s = np.full(d, 1.0 / d)
    if _kkt_residual(s, grad(s)) <= tol:
        return s

    y = s.copy()
    t_acc = 1.0
    obj = float(s @ gram @ s - 2.0 * b @ s)
    done = 0
    chunk = 25
    while done < max_iters:
        chunk_start = obj
        for _ in range(chunk):
            s_new = project_simplex(y - step * grad(y))
            obj_new = float(s_new @ gram @ s_new - 2.0 * b @ s_new)
            if obj_new > obj:  # monotone restart
                y = s.copy()
                t_acc = 1.0
                s_new = project_simplex(y - step * grad(y))
                obj_new = float(s_new @ gram @ s_new - 2.0 * b @ s_new)
            t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_acc * t_acc))
            y = s_new + ((t_acc - 1.0) / t_next) * (s_new - s)
            s, t_acc, obj = s_new, t_next, obj_new
        done += chunk
        chunk = min(2 * chunk, 250)
        polished = _polish_support(s, gram, b)
        if polished is not None and _kkt_residual(polished, grad(polished)) <= tol:
            return polished
        if _kkt_residual(s, grad(s)) <= tol:
            return s
        if chunk_start - obj <= 1e-14 * max(1.0, abs(chunk_start)):
            break  # flat direction; the iterate is as good as it gets

    polished = _polish_support(s, gram, b)
    if polished is not None and _kkt_residual(polished, grad(polished)) <= _kkt_residual(s, grad(s)):
        return polished
    return s


def _polish_support(s, gram, b, active_tol=1e-10):
    """Solve the equality-constrained KKT system on the support of s;
    return it only when primal and dual feasible."""
    supp = np.nonzero(s > active_tol)[0]
    if supp.size == 0:
        return None
    d = s.size
    k = supp.size
    kkt = np.zeros((k + 1, k + 1))
    kkt[:k, :k] = 2.0 * gram[np.ix_(supp, supp)]
    kkt[:k, k] = 1.0
    kkt[k, :k] = 1.0
    rhs = np.concatenate([2.0 * b[supp], [1.0]])
    try:
        sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
    except np.linalg.LinAlgError:
        return None
    cand = np.zeros(d)
    cand[supp] = sol[:k]
    nu = sol[k]
    if np.min(cand[supp]) < -1e-12 or not np.all(np.isfinite(cand)):
        return None
    cand[supp] = np.maximum(cand[supp], 0.0)
    total = cand.sum()
    if total <= 0:
        return None
    cand /= total
    # dual feasibility on the inactive set
    inactive = np.setdiff1d(np.arange(d), supp)
    if inactive.size:
        slack = 2.0 * (gram[inactive] @ cand - b[inactive]) + nu
        if np.min(slack) < -1e-9:
            return None
    return cand
