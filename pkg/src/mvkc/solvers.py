"""The four multi-view kernel completion solvers and their loss functions.

All variants alternate block updates until the total objective stalls:

* ``embd_ht``  - per-view reconstruction weights A^(m), group-sparse rows,
  views coupled through a simplex hull over the *weights*.
* ``app``      - same weights, views coupled through a simplex hull over the
  *reconstructed kernels*.
* ``embd_hm``  - one shared weight matrix for every view (no hull to learn).
* ``sdp``      - free PSD kernel matrices coupled through a kernel hull,
  optimized by projected gradient onto the PSD cone.

A weight update is one proximal-gradient pass per view per outer iteration
(row-separable group-soft-threshold, step from a monotone backtracking line
search). The pass is momentum-extrapolated when that keeps the composite
objective non-increasing, and each view's hull-only columns (targets the
view never observes, which the within loss cannot touch) are then refreshed
against the hull exactly. Hull rows are solved as simplex-constrained least
squares. Views update sequentially in ascending order, so the total
objective never increases.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .data import KernelMatrix
from .numerics import (
    DivergenceError,
    LineSearchConfig,
    SimplexQPProblem,
    backtracking_step,
    project_psd,
    prox_l21_rows,
    solve_simplex_ls,
)

METHODS = ("sdp", "embd_ht", "app", "embd_hm")

BASIS_ROW_TOL = 1e-8


@dataclass(frozen=True)
class SolverConfig:
    method: str
    c: float = 1.0
    c1: float = 1.0
    c2: float = 1.0
    max_outer_iters: int = 500
    rel_tol: float = 1e-6
    seed: int = 0
    clamp_known_output: bool = True
    sdp_inner_iters: int = 3
    sdp_inner_tol: float = 1e-6
    line_search: LineSearchConfig = field(default_factory=LineSearchConfig)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; one of {METHODS}")
        if min(self.c, self.c1, self.c2) <= 0:
            raise ValueError("penalties must be positive")
        if self.rel_tol <= 0:
            raise ValueError("rel_tol must be positive")
        if self.max_outer_iters < 1:
            raise ValueError("max_outer_iters must be positive")

    def penalties(self):
        if self.method == "sdp":
            return {"c": self.c}
        if self.method == "embd_hm":
            return {"c2": self.c2}
        return {"c1": self.c1, "c2": self.c2}


@dataclass(frozen=True)
class CompletionResult:
    method: str
    kernels: tuple
    weights: object  # per-view tuple, one shared matrix, or None (sdp)
    combination: np.ndarray | None
    objective_trace: tuple
    iteration_ms: tuple
    wall_seconds: float
    iterations: int
    converged: bool
    penalties: dict


# ---------------------------------------------------------------- losses


def reconstruct_kernel(A_m, K_known, mask):
    """Full kernel from reconstruction weights: A_I^T K_II A_I.

    Rows of A_m outside the known set are ignored (structurally zero).
    PSD whenever the known block is PSD - no projection involved.
    """
    A_m = np.asarray(A_m, dtype=float)
    if A_m.shape != (mask.n, mask.n):
        raise ValueError("weights must be n x n")
    if K_known.n != mask.n:
        raise ValueError("kernel and mask shapes disagree")
    idx = mask.known_idx()
    B = A_m[idx]
    out = B.T @ (K_known.values[np.ix_(idx, idx)] @ B)
    return KernelMatrix(0.5 * (out + out.T), psd_tol=K_known.psd_tol)


def loss_within(K_hat, K_known, mask):
    """Squared Frobenius error on the known x known block."""
    idx = mask.known_idx()
    block = np.ix_(idx, idx)
    diff = K_hat.values[block] - K_known.values[block]
    return float(np.vdot(diff, diff))


def loss_between_kernels(K_hat_all, S):
    """Kernel-hull residuals: per-view ||K^(m) - sum_l s_ml K^(l)||_F^2."""
    mats = [K.values if isinstance(K, KernelMatrix) else np.asarray(K) for K in K_hat_all]
    S = np.asarray(S, dtype=float)
    per_view = np.empty(len(mats))
    for m, K in enumerate(mats):
        combo = np.zeros_like(K)
        for l, T in enumerate(mats):
            if l != m:
                combo += S[m, l] * T
        diff = K - combo
        per_view[m] = float(np.vdot(diff, diff))
    return per_view, float(per_view.sum())


def loss_between_weights(A_all, S, masks):
    """Weight-hull residuals with rows restricted to each view's known set."""
    S = np.asarray(S, dtype=float)
    total = 0.0
    for m, mask in enumerate(masks):
        rows = mask.known_idx()
        diff = A_all[m][rows].copy()
        for l, A_l in enumerate(A_all):
            if l != m:
                diff -= S[m, l] * A_l[rows]
        total += float(np.vdot(diff, diff))
    return total


def l21_norm(A_m, mask=None):
    """Sum of row norms over the known rows (all rows when mask is None)."""
    A_m = np.asarray(A_m, dtype=float)
    rows = A_m if mask is None else A_m[mask.known_idx()]
    return float(np.linalg.norm(rows, axis=1).sum())


def basis_set(A_m, mask=None):
    """Indices of rows with norm above the sparsity floor (the basis B)."""
    A_m = np.asarray(A_m, dtype=float)
    norms = np.linalg.norm(A_m, axis=1)
    rows = np.nonzero(norms > BASIS_ROW_TOL)[0]
    if mask is not None:
        rows = rows[np.isin(rows, mask.known_idx())]
    return rows


# ------------------------------------------------- smooth values/gradients
#
# Exposed at module level so the finite-difference test-suite can probe the
# exact quantities the solvers differentiate.


def _within_pieces(A_m, K_blk, idx):
    W = A_m[np.ix_(idx, idx)]
    P = K_blk @ W
    R = W.T @ P - K_blk
    return float(np.vdot(R, R)), P, R


def embd_smooth_value(K_blocks, known, A_list, S, c1, coupling):
    """Within losses plus the c1-weighted hull loss ('weights' or 'kernels')."""
    total = 0.0
    for m, idx in enumerate(known):
        total += _within_pieces(A_list[m], K_blocks[m], idx)[0]
    if coupling == "weights":
        for m, idx in enumerate(known):
            diff = A_list[m][idx].copy()
            for l in range(len(A_list)):
                if l != m:
                    diff -= S[m, l] * A_list[l][idx]
            total += c1 * float(np.vdot(diff, diff))
    elif coupling == "kernels":
        hats = [_reconstruct_raw(A_list[m], K_blocks[m], idx) for m, idx in enumerate(known)]
        total += c1 * loss_between_kernels(hats, S)[1]
    else:
        raise ValueError(f"unknown coupling {coupling!r}")
    return total


def embd_smooth_grad(K_blocks, known, A_list, S, c1, coupling, m):
    """Gradient of embd_smooth_value with respect to A_list[m] (full n x n;
    rows outside the view's known set are zero)."""
    n = A_list[m].shape[0]
    idx = known[m]
    grad = np.zeros((n, n))
    _, P, R = _within_pieces(A_list[m], K_blocks[m], idx)
    grad[np.ix_(idx, idx)] = 4.0 * (P @ R)
    if coupling == "weights":
        acc = np.zeros((n, n))
        for mu, rows in enumerate(known):
            diff = A_list[mu][rows].copy()
            for l in range(len(A_list)):
                if l != mu:
                    diff -= S[mu, l] * A_list[l][rows]
            if mu == m:
                acc[rows] += diff
            else:
                acc[rows] -= S[mu, m] * diff
        mask = np.zeros(n, dtype=bool)
        mask[idx] = True
        acc[~mask] = 0.0
        grad += 2.0 * c1 * acc
    elif coupling == "kernels":
        hats = [_reconstruct_raw(A_list[mu], K_blocks[mu], rows) for mu, rows in enumerate(known)]
        ebar = np.zeros((n, n))
        for mu in range(len(A_list)):
            diff = hats[mu].copy()
            for l in range(len(A_list)):
                if l != mu:
                    diff -= S[mu, l] * hats[l]
            if mu == m:
                ebar += diff
            else:
                ebar -= S[mu, m] * diff
        B = A_list[m][idx]
        grad[idx] += 4.0 * c1 * ((K_blocks[m] @ B) @ ebar)
    else:
        raise ValueError(f"unknown coupling {coupling!r}")
    return grad


def hm_smooth_value(K_blocks, known, A):
    return sum(_within_pieces(A, K_blocks[m], idx)[0] for m, idx in enumerate(known))


def hm_smooth_grad(K_blocks, known, A):
    grad = np.zeros_like(A)
    for m, idx in enumerate(known):
        _, P, R = _within_pieces(A, K_blocks[m], idx)
        grad[np.ix_(idx, idx)] += 4.0 * (P @ R)
    return grad


def sdp_smooth_value(K_blocks, known, K_hat_list, S, c):
    total = 0.0
    for m, idx in enumerate(known):
        diff = K_hat_list[m][np.ix_(idx, idx)] - K_blocks[m]
        total += float(np.vdot(diff, diff))
    total += c * loss_between_kernels(K_hat_list, S)[1]
    return total


def sdp_smooth_grad(K_blocks, known, K_hat_list, S, c, m):
    n = K_hat_list[m].shape[0]
    idx = known[m]
    grad = np.zeros((n, n))
    grad[np.ix_(idx, idx)] = 2.0 * (K_hat_list[m][np.ix_(idx, idx)] - K_blocks[m])
    M = len(K_hat_list)
    for mu in range(M):
        diff = K_hat_list[mu].copy()
        for l in range(M):
            if l != mu:
                diff -= S[mu, l] * K_hat_list[l]
        if mu == m:
            grad += 2.0 * c * diff
        else:
            grad -= 2.0 * c * S[mu, m] * diff
    return grad


def _reconstruct_raw(A_m, K_blk, idx):
    B = A_m[idx]
    out = B.T @ (K_blk @ B)
    return 0.5 * (out + out.T)


# ----------------------------------------------------------- fit plumbing


def _uniform_offdiag_rows(M):
    S = np.full((M, M), 1.0 / (M - 1))
    np.fill_diagonal(S, 0.0)
    return S


def _init_weights(n, known, missing, seed):
    """Identity on the known block, uniform(-1,1) on known-row x missing-col
    entries, structural zeros elsewhere. One RNG stream per view."""
    out = []
    for m, (idx, gap) in enumerate(zip(known, missing)):
        rng = np.random.default_rng(seed + m)
        A = np.zeros((n, n))
        A[idx, idx] = 1.0
        if gap.size:
            A[np.ix_(idx, gap)] = rng.uniform(-1.0, 1.0, size=(idx.size, gap.size))
        out.append(A)
    return out


def _assemble(ds, known, kernels_raw, cfg):
    out = []
    for m, raw in enumerate(kernels_raw):
        values = 0.5 * (raw + raw.T)
        if cfg.clamp_known_output:
            idx = known[m]
            block = np.ix_(idx, idx)
            values[block] = ds.kernels[m].values[block]
            values = 0.5 * (values + values.T)
        out.append(KernelMatrix(values))
    return tuple(out)


class _Run:
    """Book-keeping shared by all fits: trace, timing, stopping rule."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.t0 = time.perf_counter()
        self.trace = []
        self.ms = []
        self.converged = False

    def record(self, value, iteration):
        if not np.isfinite(value):
            raise DivergenceError(f"objective diverged at outer iteration {iteration + 1}")
        previous = self.trace[-1] if self.trace else None
        self.trace.append(value)
        self.ms.append(1000.0 * (time.perf_counter() - self.t0))
        if previous is not None:
            if abs(previous - value) <= self.cfg.rel_tol * max(1.0, abs(previous)):
                self.converged = True
        return self.converged

    def finish(self, method, kernels, weights, S, cfg):
        return CompletionResult(
            method=method,
            kernels=kernels,
            weights=weights,
            combination=None if S is None else S.copy(),
            objective_trace=tuple(self.trace),
            iteration_ms=tuple(self.ms),
            wall_seconds=time.perf_counter() - self.t0,
            iterations=len(self.trace),
            converged=self.converged,
            penalties=cfg.penalties(),
        )


def _row_obj(reference, targets, s):
    diff = reference.copy()
    for weight, T in zip(s, targets):
        diff -= weight * T
    return float(np.vdot(diff, diff))


def _update_hull_rows(S, references, target_lists):
    """Exact per-row simplex LS; keeps the old row if the new one is not an
    improvement (guards the monotone objective against solver tolerance)."""
    M = S.shape[0]
    for m in range(M):
        targets = target_lists[m]
        old = np.array([S[m, l] for l in range(M) if l != m])
        sol = solve_simplex_ls(SimplexQPProblem(tuple(targets), references[m]))
        if _row_obj(references[m], targets, sol) > _row_obj(references[m], targets, old):
            sol = old
        pos = 0
        for l in range(M):
            if l != m:
                S[m, l] = sol[pos]
                pos += 1
    return S


def _combo_rows(A, S, m, rows, skip=None):
    out = np.zeros((rows.size, A[0].shape[1]))
    for l in range(len(A)):
        if l != m and l != skip and S[m, l] != 0.0:
            out += S[m, l] * A[l][rows]
    return out


def _combo_full(mats, S, m, skip=None):
    out = np.zeros_like(mats[m])
    for l in range(len(mats)):
        if l != m and l != skip and S[m, l] != 0.0:
            out += S[m, l] * mats[l]
    return out


def _readonly(arr):
    out = np.ascontiguousarray(arr)
    out.setflags(write=False)
    return out


def _pivoted_cholesky_order(G, rel_tol=1e-8, max_size=None):
    """Greedy diagonal-pivoted Cholesky; returns the pivot order truncated
    at the numerical rank (residual diagonal below rel_tol * max diag)."""
    G = np.asarray(G, dtype=float)
    k = G.shape[0]
    if max_size is None:
        max_size = k
    diag = np.diag(G).astype(float).copy()
    floor = rel_tol * max(float(diag.max()), 1e-300)
    order = []
    L = np.zeros((k, min(k, max_size)))
    for step in range(min(k, max_size)):
        p = int(np.argmax(diag))
        if diag[p] <= floor:
            break
        order.append(p)
        col = G[:, p] - L[:, :step] @ L[p, :step]
        col /= np.sqrt(diag[p])
        L[:, step] = col
        diag -= col * col
        diag[p] = 0.0
        np.maximum(diag, 0.0, out=diag)
    return order


def _jump_affinity(M, data_h, rhs_full, data_sq, in_view, ridge, common_blocks):
    """Compatibility weights between views for the jump proposal.

    Combines two scale-free signals: the *excess* residual a view suffers
    when one tied weight matrix must serve both views of a pair (catches
    incompatible kernel functions), and the distance between the views'
    normalized kernels on the commonly-known block (separates views built
    on different samples even when a tied fit is underdetermined)."""
    nb = data_h[0].shape[0]

    def fit_residuals(members):
        residn = dict((v, 0.0) for v in members)
        cols = np.nonzero(np.any(in_view[list(members)], axis=0))[0]
        groups = {}
        for j in cols:
            groups.setdefault(tuple(bool(in_view[v, j]) for v in members), []).append(j)
        for pattern, js in groups.items():
            H = ridge * np.eye(nb)
            rhs = np.zeros((nb, len(js)))
            for v, present in zip(members, pattern):
                if present:
                    H += data_h[v]
                    rhs += rhs_full[v][:, js]
            W = np.linalg.solve(H, rhs)
            for v, present in zip(members, pattern):
                if present:
                    quad = float(np.sum(W * (data_h[v] @ W)))
                    lin = float(np.sum(W * rhs_full[v][:, js]))
                    residn[v] += max(data_sq[v][js].sum() - 2.0 * lin + quad, 0.0)
        for v in members:
            residn[v] /= max(float(data_sq[v].sum()), 1e-300)
        return residn

    solo = {}
    for v in range(M):
        solo[v] = fit_residuals((v,))[v]
    delta = np.zeros((M, M))
    for a in range(M):
        for b in range(a + 1, M):
            pair = fit_residuals((a, b))
            excess = 0.5 * (
                max(pair[a] - solo[a], 0.0) + max(pair[b] - solo[b], 0.0)
            )
            diff = common_blocks[a] - common_blocks[b]
            dist = float(np.vdot(diff, diff)) / max(
                float(np.vdot(common_blocks[a], common_blocks[a])),
                float(np.vdot(common_blocks[b], common_blocks[b])),
                1e-300,
            )
            delta[a, b] = delta[b, a] = excess + dist
    aff = np.zeros((M, M))
    for a in range(M):
        others = [b for b in range(M) if b != a]
        inv = 1.0 / (delta[a, others] + 1e-6 * max(delta[a, others].max(), 1e-300) + 1e-300)
        aff[a, others] = inv / inv.sum()
    return aff


def _basis_jump_candidates(n, known, K_blocks, S_hint=None):
    """Interpolation-weight proposals past the identity plateau.

    Builds one shared pivot basis from the rows known in *every* view, then
    solves per target column the joint linearized system: Nystrom-style data
    terms for the views that observe the column, plus a hull quadratic that
    ties the rank-deficient directions toward compatible views (weights from
    pairwise tied solves, or S_hint when the hull has already been learned).
    Candidates are only adopted when they lower the true composite
    objective, so this is a pure proposal heuristic.
    """
    M = len(known)
    common = known[0]
    for idx in known[1:]:
        common = np.intersect1d(common, idx)
    if common.size == 0:
        return [None] * M
    G = np.zeros((common.size, common.size))
    common_blocks = []
    for m in range(M):
        pos = np.searchsorted(known[m], common)
        block = K_blocks[m][np.ix_(pos, pos)]
        d = np.sqrt(np.clip(np.diag(block), 0.0, None))
        if np.all(d > 0.0):
            block = block / np.outer(d, d)
        common_blocks.append(block)
        G += block
    pivots = _pivoted_cholesky_order(G)
    if not pivots:
        return [None] * M
    basis = common[np.asarray(pivots, dtype=int)]
    nb = basis.size

    data_h = []
    rhs_full = []
    data_sq = []
    scale = 0.0
    for m in range(M):
        idx = known[m]
        bpos = np.searchsorted(idx, basis)
        K_ib = K_blocks[m][:, bpos]
        data_h.append(K_ib.T @ K_ib)
        rhs = np.zeros((nb, n))
        rhs[:, idx] = K_ib.T @ K_blocks[m]
        rhs_full.append(rhs)
        sq = np.zeros(n)
        sq[idx] = np.sum(K_blocks[m] * K_blocks[m], axis=0)
        data_sq.append(sq)
        scale = max(scale, float(np.trace(data_h[m])) / nb)

    ridge = 1e-10 * max(scale, 1e-300)
    in_view = np.zeros((M, n), dtype=bool)
    for m in range(M):
        in_view[m, known[m]] = True

    try:
        S_prop = (
            _jump_affinity(M, data_h, rhs_full, data_sq, in_view, ridge, common_blocks)
            if S_hint is None
            else S_hint
        )
    except np.linalg.LinAlgError:
        return [None] * M
    D = np.eye(M) - S_prop
    hull_h = np.kron(D.T @ D, np.eye(nb))
    lam_hull = 1e-3 * max(scale, 1e-300)

    patterns = {}
    for j in range(n):
        patterns.setdefault(tuple(in_view[:, j]), []).append(j)

    W_all = np.zeros((M * nb, n))
    for pattern, cols in patterns.items():
        H = lam_hull * hull_h + ridge * np.eye(M * nb)
        rhs = np.zeros((M * nb, len(cols)))
        for m in range(M):
            blk = slice(m * nb, (m + 1) * nb)
            if pattern[m]:
                H[blk, blk] += data_h[m]
                rhs[blk] = rhs_full[m][:, cols]
        try:
            W_all[:, cols] = np.linalg.solve(H, rhs)
        except np.linalg.LinAlgError:
            return [None] * M

    cands = []
    for m in range(M):
        cand = np.zeros((n, n))
        cand[basis] = W_all[m * nb : (m + 1) * nb]
        cands.append(cand)
    return cands


def _scaled_row_prox(block, fixed_norms, threshold):
    """Row-wise prox of threshold * sqrt(f_i^2 + ||x_i||^2) at `block`,
    where f_i is the (fixed) norm of the rest of row i. Solves the scalar
    stationarity condition by bisection; reduces to the plain group
    soft-threshold when f_i = 0."""
    block = np.asarray(block, dtype=float)
    d = np.linalg.norm(block, axis=1)
    gamma = np.zeros_like(d)
    plain = (fixed_norms <= 0.0) & (d > 0.0)
    gamma[plain] = np.maximum(0.0, 1.0 - threshold / d[plain])
    live = (fixed_norms > 0.0) & (d > 0.0)
    if np.any(live):
        f2 = fixed_norms[live] ** 2
        d2 = d[live] ** 2
        # psi(g) = g - 1 + threshold * g / sqrt(f^2 + d^2 g^2): increasing
        # and concave, so Newton from g=1 converges monotonically
        g = np.ones_like(d2)
        for _ in range(20):
            root = np.sqrt(f2 + d2 * g * g)
            psi = g - 1.0 + threshold * g / root
            dpsi = 1.0 + threshold * f2 / root**3
            g = np.clip(g - psi / dpsi, 0.0, 1.0)
        gamma[live] = g
    return block * gamma[:, None]


class _MonotoneFista:
    """Accelerated proximal pass with a monotone safeguard.

    The trial point is the standard extrapolation; the step size is
    backtracked on the smooth-part majorization at the trial point; the
    iterate only moves when the composite objective does not increase, so
    the recorded objective trace is non-increasing even though the
    extrapolation sequence is free to overshoot. Momentum restarts whenever
    a trial is rejected.
    """

    def __init__(self, x0, initial_step):
        self.y = x0.copy()
        self.prev = x0.copy()
        self.t = 1.0
        self.warm = initial_step

    def step(self, x, vg_fn, smooth_fn, reg_fn, prox_fn, ls_cfg, phi_x=None):
        f_y, g = vg_fn(self.y)
        lam = self.warm
        z = None
        for _ in range(ls_cfg.max_backtracks):
            cand = prox_fn(self.y - lam * g, lam)
            diff = cand - self.y
            quad = f_y + float(np.vdot(g, diff)) + float(np.vdot(diff, diff)) / (2.0 * lam)
            f_c = smooth_fn(cand)
            if np.isfinite(f_c) and f_c <= quad + 1e-12 * max(1.0, abs(quad)):
                z = cand
                break
            lam *= ls_cfg.shrink
        if z is None:
            self.y = x.copy()
            self.prev = x.copy()
            self.t = 1.0
            return x, 0.0
        self.warm = 2.0 * lam
        phi_z = f_c + reg_fn(z)
        if phi_x is None:
            phi_x = smooth_fn(x) + reg_fn(x)
        if phi_z <= phi_x:
            x_new = z
            t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * self.t * self.t))
            self.y = x_new + (self.t / t_next) * (z - x_new) + ((self.t - 1.0) / t_next) * (
                x_new - self.prev
            )
            self.prev = x_new
            self.t = t_next
            return x_new, lam
        # rejected: restart momentum from the current iterate
        self.y = x.copy()
        self.prev = x.copy()
        self.t = 1.0
        return x, 0.0


# ------------------------------------------------------- embd_ht and app


def _fit_embd(ds, cfg, coupling):
    if ds.m < 2:
        raise ValueError("between-view coupling needs at least two views")
    n, M = ds.n, ds.m
    known = [mask.known_idx() for mask in ds.masks]
    missing = [mask.missing_idx() for mask in ds.masks]
    row_in = []
    for m in range(M):
        flags = np.zeros(n, dtype=bool)
        flags[known[m]] = True
        row_in.append(flags)
    K_blocks = [ds.kernels[m].values[np.ix_(known[m], known[m])] for m in range(M)]
    A = _init_weights(n, known, missing, cfg.seed)
    S = _uniform_offdiag_rows(M)
    c1, c2 = cfg.c1, cfg.c2
    hats = None
    if coupling == "kernels":
        hats = [_reconstruct_raw(A[m], K_blocks[m], known[m]) for m in range(M)]
    warm_cols = [cfg.line_search.initial_step] * M
    passes = [_MonotoneFista(A[m], cfg.line_search.initial_step) for m in range(M)]
    jumps = _basis_jump_candidates(n, known, K_blocks)
    run = _Run(cfg)

    def view_phi(m, cand):
        idx = known[m]
        val = _within_pieces(cand, K_blocks[m], idx)[0]
        if coupling == "weights":
            diff = cand[idx] - _combo_rows(A, S, m, idx)
            coup = float(np.vdot(diff, diff))
            for mu in range(M):
                if mu == m:
                    continue
                rows = known[mu]
                base = A[mu][rows] - _combo_rows(A, S, mu, rows, skip=m)
                d = base - S[mu, m] * cand[rows]
                coup += float(np.vdot(d, d))
        else:
            hat_c = _reconstruct_raw(cand, K_blocks[m], idx)
            diff = hat_c - _combo_full(hats, S, m)
            coup = float(np.vdot(diff, diff))
            for mu in range(M):
                if mu == m:
                    continue
                base = hats[mu] - _combo_full(hats, S, mu, skip=m)
                d = base - S[mu, m] * hat_c
                coup += float(np.vdot(d, d))
        return val + c1 * coup + c2 * float(np.linalg.norm(cand[idx], axis=1).sum())

    def total_phi(A_list):
        val = embd_smooth_value(K_blocks, known, A_list, S, c1, coupling)
        return val + c2 * sum(
            float(np.linalg.norm(A_list[m][known[m]], axis=1).sum()) for m in range(M)
        )

    def adopt(m, cand):
        A[m] = cand
        passes[m] = _MonotoneFista(A[m], cfg.line_search.initial_step)
        if coupling == "kernels":
            hats[m] = _reconstruct_raw(A[m], K_blocks[m], known[m])
        jumps[m] = None

    within_val = [_within_pieces(A[m], K_blocks[m], known[m])[0] for m in range(M)]

    def coupling_total():
        if coupling == "weights":
            total = 0.0
            for m in range(M):
                diff = A[m][known[m]] - _combo_rows(A, S, m, known[m])
                total += float(np.vdot(diff, diff))
            return total
        return loss_between_kernels(hats, S)[1]

    for k in range(cfg.max_outer_iters):
        if any(j is not None for j in jumps) and k in (0, 3, 10, 30):
            # structured proposals past the identity plateau; candidates are
            # mutually consistent, so trial them as one group move first,
            # then view by view - every accept is monotone
            if k > 0:
                fresh = _basis_jump_candidates(n, known, K_blocks, S_hint=S)
                jumps = [f if j is not None else None for j, f in zip(jumps, fresh)]
            trial = [j if j is not None else A[m] for m, j in enumerate(jumps)]
            if total_phi(trial) <= total_phi(A):
                for m in range(M):
                    if jumps[m] is not None:
                        adopt(m, jumps[m])
            else:
                for m in range(M):
                    if jumps[m] is not None and view_phi(m, jumps[m]) <= view_phi(m, A[m]):
                        adopt(m, jumps[m])
            for m in range(M):
                within_val[m] = _within_pieces(A[m], K_blocks[m], known[m])[0]
        for m in range(M):
            idx = known[m]
            K_blk = K_blocks[m]

            if coupling == "weights":
                hull_rows = _combo_rows(A, S, m, idx)
                others = [
                    (S[mu, m], known[mu], A[mu][known[mu]] - _combo_rows(A, S, mu, known[mu], skip=m))
                    for mu in range(M)
                    if mu != m
                ]

                def coup_at(rows_m, row_lookup):
                    diff = rows_m - hull_rows
                    coup = float(np.vdot(diff, diff))
                    for s_mu, rows, base in others:
                        d = base - s_mu * row_lookup(rows)
                        coup += float(np.vdot(d, d))
                    return coup

                def smooth(cand):
                    val, _, _ = _within_pieces(cand, K_blk, idx)
                    return val + c1 * coup_at(cand[idx], lambda rows: cand[rows])

                def vg(at):
                    val, P, R = _within_pieces(at, K_blk, idx)
                    g = np.zeros((n, n))
                    g[np.ix_(idx, idx)] = 4.0 * (P @ R)
                    acc = np.zeros((n, n))
                    diff = at[idx] - hull_rows
                    coup = float(np.vdot(diff, diff))
                    acc[idx] += diff
                    for s_mu, rows, base in others:
                        d = base - s_mu * at[rows]
                        coup += float(np.vdot(d, d))
                        acc[rows] -= s_mu * d
                    acc[~row_in[m]] = 0.0
                    return val + c1 * coup, g + 2.0 * c1 * acc

                phi_x = within_val[m] + c1 * coup_at(A[m][idx], lambda rows: A[m][rows])
            else:  # kernels
                # fold the hull residuals into flat quadratic pieces: for a
                # candidate hat h,  coupling(h) = ||h - combo_m||^2
                #   + const - 2 <q, h> + coef ||h||^2
                flat = np.stack([h.ravel() for h in hats])
                combos = S @ flat
                hull_flat = combos[m]
                base0 = flat - combos  # residuals before adding s_mu_m * h back
                s_col = S[:, m].copy()
                s_col[m] = 0.0
                coef = float(s_col @ s_col)
                sb = s_col @ base0
                hm_flat = flat[m]
                q = sb + coef * hm_flat
                row_sq = np.einsum("ij,ij->i", base0, base0)
                const = float(
                    row_sq.sum() - row_sq[m]
                    + 2.0 * float(sb @ hm_flat)
                    + coef * float(hm_flat @ hm_flat)
                )

                def coup_of_hat(hat):
                    h = hat.ravel()
                    diff = h - hull_flat
                    return (
                        float(diff @ diff)
                        + const
                        - 2.0 * float(q @ h)
                        + coef * float(h @ h)
                    )

                def smooth(cand):
                    val, _, _ = _within_pieces(cand, K_blk, idx)
                    B = cand[idx]
                    return val + c1 * coup_of_hat(B.T @ (K_blk @ B))

                def vg(at):
                    val, P, R = _within_pieces(at, K_blk, idx)
                    g = np.zeros((n, n))
                    g[np.ix_(idx, idx)] = 4.0 * (P @ R)
                    B = at[idx]
                    Q = K_blk @ B
                    hat = B.T @ Q
                    coup = coup_of_hat(hat)
                    ebar = ((1.0 + coef) * hat.ravel() - hull_flat - q).reshape(n, n)
                    g[idx] += 4.0 * c1 * (Q @ ebar)
                    return val + c1 * coup, g

                phi_x = within_val[m] + c1 * coup_of_hat(hats[m])

            reg = lambda cand: c2 * float(np.linalg.norm(cand[idx], axis=1).sum())
            prox = lambda z, lam: prox_l21_rows(z, lam * c2)
            A[m], step = passes[m].step(
                A[m], vg, smooth, reg, prox, cfg.line_search, phi_x=phi_x + reg(A[m])
            )
            if step > 0.0:
                within_val[m] = _within_pieces(A[m], K_blk, idx)[0]
                if coupling == "kernels":
                    hats[m] = _reconstruct_raw(A[m], K_blk, idx)

        if coupling == "weights":
            references = [A[m][known[m]] for m in range(M)]
            target_lists = [
                [A[l][known[m]] for l in range(M) if l != m] for m in range(M)
            ]
        else:
            references = hats
            target_lists = [[hats[l] for l in range(M) if l != m] for m in range(M)]
        S = _update_hull_rows(S, references, target_lists)

        # the hull-only columns are refreshed against the freshly-fit hull
        # so early iterations cannot blend in stale neighbours
        for m in range(M):
            if coupling == "weights":
                _refresh_hull_columns_ht(A, S, known, missing, row_in, m, c1, c2)
            else:
                warm_cols[m], hats[m] = _hull_column_step(
                    A, S, K_blocks, known, missing, hats, m, c1, c2, warm_cols[m], cfg
                )

        total = sum(within_val) + c1 * coupling_total()
        total += c2 * sum(float(np.linalg.norm(A[m][known[m]], axis=1).sum()) for m in range(M))
        if run.record(total, k):
            break

    raw = [_reconstruct_raw(A[m], K_blocks[m], known[m]) for m in range(M)]
    kernels = _assemble(ds, known, raw, cfg)
    weights = tuple(_readonly(A_m) for A_m in A)
    return run.finish(cfg.method, kernels, weights, S, cfg)


def _refresh_hull_columns_ht(A, S, known, missing, row_in, m, c1, c2):
    """Exact block minimization over view m's hull-only columns.

    Entries (i in I_m, t not in I_m) appear only in the weight-hull
    quadratics and inside the l2,1 row norms, so for each row the optimum is
    a scalar multiple of a closed-form target; the scalar solves a monotone
    1-d equation (bisection)."""
    idx, gap = known[m], missing[m]
    if gap.size == 0:
        return
    M = len(A)
    block = np.ix_(idx, gap)
    r = _combo_rows(A, S, m, idx)[:, gap]
    w = np.ones(idx.size)
    for mu in range(M):
        if mu == m or S[mu, m] == 0.0:
            continue
        sel = row_in[mu][idx]
        if not np.any(sel):
            continue
        rows_glob = idx[sel]
        base = A[mu][np.ix_(rows_glob, gap)] - _combo_rows(A, S, mu, rows_glob, skip=m)[:, gap]
        r[sel] += S[mu, m] * base
        w[sel] += S[mu, m] ** 2
    target = r / w[:, None]
    rho = np.linalg.norm(target, axis=1)
    fixed = np.linalg.norm(A[m][idx][:, idx], axis=1)
    beta = np.zeros(idx.size)
    plain = (rho > 0.0) & (fixed <= 0.0)
    if np.any(plain):
        beta[plain] = np.clip(1.0 - c2 / (2.0 * c1 * w[plain] * rho[plain]), 0.0, 1.0)
    live = (rho > 0.0) & (fixed > 0.0)
    if np.any(live):
        cw = 2.0 * c1 * w[live]
        f2 = fixed[live] ** 2
        r2 = rho[live] ** 2
        # phi(b) = 2 c1 w (b - 1) + c2 b / sqrt(f^2 + rho^2 b^2): increasing
        # and concave, so Newton from b=1 converges monotonically
        b = np.ones_like(r2)
        for _ in range(20):
            root = np.sqrt(f2 + r2 * b * b)
            phi = cw * (b - 1.0) + c2 * b / root
            dphi = cw + c2 * f2 / root**3
            b = np.clip(b - phi / dphi, 0.0, 1.0)
        beta[live] = b
    A[m][block] = beta[:, None] * target


def _hull_column_step(A, S, K_blocks, known, missing, hats, m, c1, c2, warm, cfg):
    """Backtracked proximal step restricted to view m's hull-only columns
    (kernel-hull coupling; quartic, so no exact refresh). The prox accounts
    for the fixed part of each row norm. Returns (warm step, new hat)."""
    idx, gap = known[m], missing[m]
    if gap.size == 0:
        return warm, hats[m]
    K_blk = K_blocks[m]
    n = A[m].shape[0]
    flat = np.stack([h.ravel() for h in hats])
    combos = S @ flat
    hull_flat = combos[m]
    base0 = flat - combos
    s_col = S[:, m].copy()
    s_col[m] = 0.0
    coef = float(s_col @ s_col)
    sb = s_col @ base0
    hm_flat = flat[m]
    q = sb + coef * hm_flat
    row_sq = np.einsum("ij,ij->i", base0, base0)
    const = float(
        row_sq.sum() - row_sq[m]
        + 2.0 * float(sb @ hm_flat)
        + coef * float(hm_flat @ hm_flat)
    )
    fixed = np.linalg.norm(A[m][idx][:, idx], axis=1)
    block = np.ix_(idx, gap)

    def coupling_val(hat):
        h = hat.ravel()
        diff = h - hull_flat
        return float(diff @ diff) + const - 2.0 * float(q @ h) + coef * float(h @ h)

    def hat_of(cols):
        B = A[m][idx].copy()
        B[:, gap] = cols
        return B.T @ (K_blk @ B), B

    cols0 = A[m][block]
    hat0 = hats[m]  # caller keeps hats in sync with A
    B0 = A[m][idx]
    ebar = ((1.0 + coef) * hat0.ravel() - hull_flat - q).reshape(n, n)
    g = 4.0 * c1 * ((K_blk @ B0) @ ebar)[:, gap]
    phi0 = c1 * coupling_val(hat0) + c2 * float(
        np.sqrt(fixed**2 + np.linalg.norm(cols0, axis=1) ** 2).sum()
    )
    step = warm
    for _ in range(cfg.line_search.max_backtracks):
        cand = _scaled_row_prox(cols0 - step * g, fixed, step * c2)
        hat_c, _ = hat_of(cand)
        phi = c1 * coupling_val(hat_c) + c2 * float(
            np.sqrt(fixed**2 + np.linalg.norm(cand, axis=1) ** 2).sum()
        )
        if np.isfinite(phi) and phi <= phi0:
            A[m][block] = cand
            return 2.0 * step, 0.5 * (hat_c + hat_c.T)
        step *= cfg.line_search.shrink
    return warm, hat0


def fit_embd_ht(ds, cfg):
    """Heterogeneous embeddings: per-view weights, weight-hull coupling."""
    if cfg.method != "embd_ht":
        raise ValueError("config method must be 'embd_ht'")
    return _fit_embd(ds, cfg, "weights")


def fit_app(ds, cfg):
    """Kernel approximation: per-view weights, kernel-hull coupling."""
    if cfg.method != "app":
        raise ValueError("config method must be 'app'")
    return _fit_embd(ds, cfg, "kernels")


# ------------------------------------------------------------- embd_hm


def fit_embd_hm(ds, cfg):
    """One shared weight matrix for all views; no hull weights to learn
    (the weight-hull loss vanishes identically under tying)."""
    if cfg.method != "embd_hm":
        raise ValueError("config method must be 'embd_hm'")
    n, M = ds.n, ds.m
    known = [mask.known_idx() for mask in ds.masks]
    missing = [mask.missing_idx() for mask in ds.masks]
    K_blocks = [ds.kernels[m].values[np.ix_(known[m], known[m])] for m in range(M)]
    c2 = cfg.c2

    rng = np.random.default_rng(cfg.seed)
    A = np.eye(n)
    fill = np.zeros((n, n), dtype=bool)
    for m in range(M):
        if missing[m].size:
            fill[np.ix_(known[m], missing[m])] = True
    np.fill_diagonal(fill, False)
    A[fill] = rng.uniform(-1.0, 1.0, size=int(fill.sum()))

    acc = _MonotoneFista(A, cfg.line_search.initial_step)
    run = _Run(cfg)
    smooth = lambda cand: hm_smooth_value(K_blocks, known, cand)
    reg = lambda cand: c2 * float(np.linalg.norm(cand, axis=1).sum())
    prox = lambda z, lam: prox_l21_rows(z, lam * c2)

    def vg(at):
        g = np.zeros_like(at)
        val = 0.0
        for m, idx in enumerate(known):
            v, P, R = _within_pieces(at, K_blocks[m], idx)
            val += v
            g[np.ix_(idx, idx)] += 4.0 * (P @ R)
        return val, g

    for k in range(cfg.max_outer_iters):
        A, _ = acc.step(A, vg, smooth, reg, prox, cfg.line_search)
        total = smooth(A) + reg(A)
        if run.record(total, k):
            break

    raw = [_reconstruct_raw(A, K_blocks[m], known[m]) for m in range(M)]
    kernels = _assemble(ds, known, raw, cfg)
    return run.finish(cfg.method, kernels, _readonly(A), None, cfg)


# ----------------------------------------------------------------- sdp


def fit_sdp(ds, cfg):
    """Free PSD completion: per view, minimize the three-term coupling
    objective over the PSD cone by projected gradient, then refit the hull
    rows. Initial iterates copy the known block, randomize the rest and
    project onto the cone."""
    if cfg.method != "sdp":
        raise ValueError("config method must be 'sdp'")
    if ds.m < 2:
        raise ValueError("between-view coupling needs at least two views")
    n, M = ds.n, ds.m
    known = [mask.known_idx() for mask in ds.masks]
    K_blocks = [ds.kernels[m].values[np.ix_(known[m], known[m])] for m in range(M)]
    c = cfg.c

    hats = []
    for m in range(M):
        rng = np.random.default_rng(cfg.seed + m)
        X = rng.uniform(-1.0, 1.0, size=(n, n))
        X = 0.5 * (X + X.T)
        block = np.ix_(known[m], known[m])
        X[block] = K_blocks[m]
        hats.append(project_psd(X))

    S = _uniform_offdiag_rows(M)
    warm = [cfg.line_search.initial_step] * M
    run = _Run(cfg)

    for k in range(cfg.max_outer_iters):
        for m in range(M):
            idx = known[m]
            block = np.ix_(idx, idx)
            K_blk = K_blocks[m]
            hull_target = _combo_full(hats, S, m)
            others = [
                (S[mu, m], hats[mu] - _combo_full(hats, S, mu, skip=m))
                for mu in range(M)
                if mu != m
            ]

            def kobj(K):
                diff = K[block] - K_blk
                val = float(np.vdot(diff, diff))
                d = K - hull_target
                val += c * float(np.vdot(d, d))
                for s_mu, base in others:
                    d = base - s_mu * K
                    val += c * float(np.vdot(d, d))
                return val

            def kgrad(K):
                grad = np.zeros((n, n))
                grad[block] = 2.0 * (K[block] - K_blk)
                grad += 2.0 * c * (K - hull_target)
                for s_mu, base in others:
                    grad -= 2.0 * c * s_mu * (base - s_mu * K)
                return grad

            K = hats[m]
            # the objective is an entrywise-weighted quadratic, so project
            # its unconstrained minimizer first and keep that when it helps;
            # projected gradient then polishes the constrained solution
            coef = sum(s_mu * s_mu for s_mu, _ in others)
            weight = np.full((n, n), c * (1.0 + coef))
            weight[block] += 1.0
            numer = c * hull_target.copy()
            numer[block] += K_blk
            for s_mu, base in others:
                numer += c * s_mu * base
            cand = project_psd(numer / weight)
            if kobj(cand) <= kobj(K):
                K = cand
            for _ in range(cfg.sdp_inner_iters):
                ls = LineSearchConfig(
                    initial_step=warm[m],
                    shrink=cfg.line_search.shrink,
                    max_backtracks=cfg.line_search.max_backtracks,
                    sufficient_decrease=cfg.line_search.sufficient_decrease,
                )
                K_new, step = backtracking_step(
                    kobj, kgrad(K), K, lambda z, lam: project_psd(z), ls
                )
                if step == 0.0:
                    break
                warm[m] = 2.0 * step
                moved = float(np.linalg.norm(K_new - K)) / step
                K = K_new
                if moved <= cfg.sdp_inner_tol * max(1.0, float(np.linalg.norm(K))):
                    break
            hats[m] = K

        S = _update_hull_rows(
            S, hats, [[hats[l] for l in range(M) if l != m] for m in range(M)]
        )
        total = sdp_smooth_value(K_blocks, known, hats, S, c)
        if run.record(total, k):
            break

    kernels = _assemble(ds, known, [h.copy() for h in hats], cfg)
    return run.finish(cfg.method, kernels, None, S, cfg)


# ------------------------------------------------------------ dispatcher

_FITTERS = {
    "embd_ht": fit_embd_ht,
    "app": fit_app,
    "embd_hm": fit_embd_hm,
    "sdp": fit_sdp,
}


def fit(ds, cfg):
    """Run the configured completion method on a masked dataset."""
    return _FITTERS[cfg.method](ds, cfg)
