"""Experiment harness: error metric, tuning/test protocol, grid search,
timing and table emission.

The completion problem is transductive (a fit sees every sample index), so
the protocol fits once per hyperparameter cell on the union and separates
concerns by *rows*: hyperparameters are chosen on the tuning partition's
missing rows only, results are reported on the test partition's missing
rows only, and an event log records that no test row is evaluated before
the selection happened.
"""

from __future__ import annotations

import math
import os
import pickle
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .baselines import KnnConfig, knn_impute
from .io import load_dataset, write_matrix_csv
from .solvers import SolverConfig, fit
from .synthetic import MissingnessPlan, RECIPE_NAMES, ToyRecipe, generate_toy, induce_missing

DEFAULT_PENALTY_GRID = (1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3)
DEFAULT_K_GRID = (1, 2, 3, 5, 7, 10)
ALL_METHODS = ("embd_ht", "app", "sdp", "embd_hm", "knn", "wknn")


def canonical_method(name):
    name = name.strip().lower().replace("-", "_")
    if name not in ALL_METHODS:
        raise ValueError(f"unknown method {name!r}; one of {ALL_METHODS}")
    return name


def are(pred, truth, mask, rows=None):
    """Average relative error (percent) over missing kernel rows.

    Per missing row t: ||pred_t - truth_t||_2 / ||truth_t||_2, averaged and
    scaled by 100. Returns None when there is no missing row to score (an
    explicit marker; never a silent zero). Restricting `rows` intersects the
    missing set with the given indices.
    """
    missing = mask.missing
    if rows is not None:
        wanted = set(int(r) for r in rows)
        missing = tuple(t for t in missing if t in wanted)
    if not missing:
        return None
    total = 0.0
    for t in missing:
        denom = float(np.linalg.norm(truth.values[t]))
        if denom == 0.0:
            raise ValueError(f"truth row {t} has zero norm")
        total += float(np.linalg.norm(pred.values[t] - truth.values[t])) / denom
    return 100.0 * total / len(missing)


def eigenspectrum(K):
    """Eigenvalues of a kernel matrix, sorted descending."""
    return np.linalg.eigvalsh(K.values)[::-1].copy()


@dataclass(frozen=True)
class ExperimentPlan:
    recipes: tuple = ("toyl",)
    manifest: str | None = None
    methods: tuple = ("embd_ht",)
    missing_views: tuple = (1,)
    tuning_fraction: float = 0.4
    affected_fraction: float = 0.6
    anchor_fraction: float = 0.1
    repeats: int = 5
    seed: int = 0
    penalty_grid: tuple = DEFAULT_PENALTY_GRID
    k_grid: tuple = DEFAULT_K_GRID
    max_outer_iters: int = 500
    rel_tol: float = 1e-6
    jobs: int = 1
    dataset_seed: int | None = None

    def __post_init__(self):
        if not 0.0 < self.tuning_fraction < 1.0:
            raise ValueError("tuning_fraction must lie in (0, 1)")
        if self.repeats < 1:
            raise ValueError("repeats must be at least 1")
        object.__setattr__(self, "methods", tuple(canonical_method(m) for m in self.methods))
        object.__setattr__(self, "recipes", tuple(r.lower() for r in self.recipes))
        object.__setattr__(self, "missing_views", tuple(int(v) for v in self.missing_views))
        if self.manifest is None:
            for r in self.recipes:
                if r not in RECIPE_NAMES:
                    raise ValueError(f"unknown recipe {r!r}")


@dataclass
class AreReport:
    """Aggregate for one (dataset, missing-view count, method) cell of the
    output tables."""

    dataset: str
    missing_views: int
    method: str
    repeat_mean_are: list = field(default_factory=list)
    per_view_are: list = field(default_factory=list)
    selected: list = field(default_factory=list)
    fit_seconds: list = field(default_factory=list)
    failures: list = field(default_factory=list)

    def _clean(self):
        return [v for v in self.repeat_mean_are if v is not None]

    @property
    def mean_are(self):
        vals = self._clean()
        return float(np.mean(vals)) if vals else math.nan

    @property
    def sd_are(self):
        vals = self._clean()
        return float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0

    @property
    def mean_seconds(self):
        return float(np.mean(self.fit_seconds)) if self.fit_seconds else math.nan

    @property
    def sd_seconds(self):
        return float(np.std(self.fit_seconds, ddof=1)) if len(self.fit_seconds) > 1 else 0.0


@dataclass
class ExperimentReport:
    plan: ExperimentPlan
    cases: list
    events: list
    spectra: dict

    def case(self, dataset, missing_views, method):
        method = canonical_method(method)
        for c in self.cases:
            if (c.dataset, c.missing_views, c.method) == (dataset, missing_views, method):
                return c
        raise KeyError((dataset, missing_views, method))


def method_cells(plan, method):
    """Hyperparameter grid for one method. The shared-weights variant only
    sweeps c2 (its hull penalty is inert); sdp sweeps its single penalty."""
    if method in ("knn", "wknn"):
        return [{"k": int(k)} for k in plan.k_grid]
    if method == "sdp":
        return [{"c": float(c)} for c in plan.penalty_grid]
    if method == "embd_hm":
        return [{"c2": float(c)} for c in plan.penalty_grid]
    return [
        {"c1": float(a), "c2": float(b)}
        for a in plan.penalty_grid
        for b in plan.penalty_grid
    ]


def _fit_cell(ds, method, cell, solver_seed, max_iters, rel_tol):
    if method in ("knn", "wknn"):
        result = knn_impute(ds, KnnConfig(k=cell["k"], weighted=method == "wknn"))
    else:
        cfg = SolverConfig(
            method=method,
            max_outer_iters=max_iters,
            rel_tol=rel_tol,
            seed=solver_seed,
            **cell,
        )
        result = fit(ds, cfg)
    return result


_WORKER_DS = None


def _worker_init(payload):
    global _WORKER_DS
    _WORKER_DS = pickle.loads(payload)


def _worker_run(task):
    method, cell, solver_seed, max_iters, rel_tol = task
    try:
        result = _fit_cell(_WORKER_DS, method, cell, solver_seed, max_iters, rel_tol)
        return [K.values for K in result.kernels], result.wall_seconds, None
    except Exception as exc:  # recorded per cell, run continues
        return None, 0.0, f"{type(exc).__name__}: {exc}"


def _load_plan_dataset(plan, recipe):
    if plan.manifest is not None:
        return load_dataset(plan.manifest)
    seed = plan.seed if plan.dataset_seed is None else plan.dataset_seed
    return generate_toy(ToyRecipe(recipe, seed=seed))


def _seed_int(seq):
    return int(seq.generate_state(1, dtype=np.uint32)[0])


def run_experiment(plan, progress=None):
    """Run the full tuning/test protocol for every dataset, missing-view
    count and method in the plan. Deterministic given plan.seed."""
    datasets = {}
    spectra = {}
    names = plan.recipes if plan.manifest is None else (os.path.basename(plan.manifest) or "dataset",)
    for name in names:
        ds = _load_plan_dataset(plan, name)
        datasets[name] = ds
        source = ds.truth if ds.truth is not None else ds.kernels
        from .data import KernelMatrix  # local to avoid cycle at import time

        spectra[name] = [eigenspectrum(K if isinstance(K, KernelMatrix) else K) for K in source]

    events = []
    cases = []
    for di, name in enumerate(names):
        ds = datasets[name]
        n = ds.n
        for mi, mv in enumerate(plan.missing_views):
            reports = {m: AreReport(name, mv, m) for m in plan.methods}
            for r in range(plan.repeats):
                root = np.random.SeedSequence([plan.seed, di, mi, r])
                split_seq, tune_seq, test_seq, solver_seq = root.spawn(4)
                perm = np.random.default_rng(split_seq).permutation(n)
                n_tune = int(round(plan.tuning_fraction * n))
                tuning_idx = np.sort(perm[:n_tune])
                test_idx = np.sort(perm[n_tune:])
                masked = induce_missing(
                    ds,
                    MissingnessPlan(
                        affected_fraction=plan.affected_fraction,
                        views_removed_per_point=mv,
                        anchor_fraction=plan.anchor_fraction,
                        seed=_seed_int(tune_seq),
                    ),
                    candidates=tuning_idx,
                )
                masked = induce_missing(
                    masked,
                    MissingnessPlan(
                        affected_fraction=plan.affected_fraction,
                        views_removed_per_point=mv,
                        anchor_fraction=plan.anchor_fraction,
                        seed=_seed_int(test_seq),
                    ),
                    candidates=test_idx,
                )
                solver_seed = _seed_int(solver_seq)

                tasks = []
                owners = []
                for method in plan.methods:
                    for cell in method_cells(plan, method):
                        tasks.append((method, cell, solver_seed, plan.max_outer_iters, plan.rel_tol))
                        owners.append(method)
                outcomes = _execute(masked, tasks, plan.jobs)

                by_method = {m: [] for m in plan.methods}
                for (method, cell, *_), outcome in zip(tasks, outcomes):
                    by_method[method].append((cell, outcome))

                for method in plan.methods:
                    report = reports[method]
                    scored = []
                    for cell, (kernel_values, seconds, error) in by_method[method]:
                        if error is not None:
                            report.failures.append(f"repeat={r} cell={cell}: {error}")
                            scored.append((cell, None, None, seconds))
                            continue
                        tune_scores = _per_view_are(ds, masked, kernel_values, tuning_idx)
                        events.append(
                            f"tune-eval dataset={name} mv={mv} repeat={r} method={method} cell={cell}"
                        )
                        valid = [v for v in tune_scores if v is not None]
                        score = float(np.mean(valid)) if valid else None
                        scored.append((cell, score, kernel_values, seconds))
                    usable = [entry for entry in scored if entry[1] is not None]
                    if not usable:
                        no_missing = [entry for entry in scored if entry[2] is not None]
                        if no_missing:
                            # complete dataset: nothing to tune on, nothing to score
                            cell, _, _, seconds = no_missing[0]
                            events.append(
                                f"select dataset={name} mv={mv} repeat={r} method={method} cell={cell}"
                            )
                            report.selected.append(cell)
                            report.repeat_mean_are.append(None)
                            report.per_view_are.append([None] * ds.m)
                            report.fit_seconds.append(seconds)
                        continue
                    best = min(usable, key=lambda entry: entry[1])
                    cell, _, kernel_values, seconds = best
                    events.append(
                        f"select dataset={name} mv={mv} repeat={r} method={method} cell={cell}"
                    )
                    test_scores = _per_view_are(ds, masked, kernel_values, test_idx)
                    events.append(
                        f"test-eval dataset={name} mv={mv} repeat={r} method={method} cell={cell}"
                    )
                    valid = [v for v in test_scores if v is not None]
                    report.selected.append(cell)
                    report.repeat_mean_are.append(float(np.mean(valid)) if valid else None)
                    report.per_view_are.append(test_scores)
                    report.fit_seconds.append(seconds)
                if progress is not None:
                    progress(f"dataset={name} mv={mv} repeat={r + 1}/{plan.repeats}")
            cases.extend(reports[m] for m in plan.methods)
    return ExperimentReport(plan=plan, cases=cases, events=events, spectra=spectra)


def _per_view_are(ds, masked, kernel_values, partition_idx):
    from .data import KernelMatrix

    scores = []
    for m in range(ds.m):
        pred = KernelMatrix(kernel_values[m])
        scores.append(are(pred, ds.truth[m], masked.masks[m], rows=partition_idx))
    return scores


def _execute(masked, tasks, jobs):
    if jobs <= 1 or len(tasks) <= 1:
        out = []
        for method, cell, solver_seed, max_iters, rel_tol in tasks:
            try:
                result = _fit_cell(masked, method, cell, solver_seed, max_iters, rel_tol)
                out.append(([K.values for K in result.kernels], result.wall_seconds, None))
            except Exception as exc:
                out.append((None, 0.0, f"{type(exc).__name__}: {exc}"))
        return out
    payload = pickle.dumps(masked)
    with ProcessPoolExecutor(
        max_workers=jobs, initializer=_worker_init, initargs=(payload,)
    ) as pool:
        return list(pool.map(_worker_run, tasks, chunksize=1))


# ------------------------------------------------------------- emission


def _fmt(x):
    if isinstance(x, float) and math.isnan(x):
        return "nan"
    return f"{x:.17g}"


def emit_tables(report, out_dir):
    """Write table_are.csv, table_time.csv and per-view spectrum CSVs."""
    os.makedirs(out_dir, exist_ok=True)
    plan = report.plan
    with open(os.path.join(out_dir, "table_are.csv"), "w") as fh:
        fh.write("missing_views,method,dataset,mean_are,sd_are,display\n")
        for case in report.cases:
            fh.write(
                f"{case.missing_views},{case.method},{case.dataset},"
                f"{_fmt(case.mean_are)},{_fmt(case.sd_are)},"
                f"{case.mean_are:.2f} ({case.sd_are:.2f})\n"
            )
    with open(os.path.join(out_dir, "table_time.csv"), "w") as fh:
        fh.write("missing_views,method,dataset,mean_seconds,sd_seconds,display\n")
        for case in report.cases:
            fh.write(
                f"{case.missing_views},{case.method},{case.dataset},"
                f"{_fmt(case.mean_seconds)},{_fmt(case.sd_seconds)},"
                f"{case.mean_seconds:.2f} ({case.sd_seconds:.2f})\n"
            )
    single = len(report.spectra) == 1
    for name, spectra in report.spectra.items():
        for v, w in enumerate(spectra):
            fname = f"spectra_{v}.csv" if single else f"spectra_{name}_{v}.csv"
            write_matrix_csv(os.path.join(out_dir, fname), np.asarray(w).reshape(1, -1))


# ------------------------------------------------------------ plan files


def parse_plan(text):
    """Build an ExperimentPlan from key=value text (same dialect as dataset
    manifests)."""
    from .io import parse_kv_lines

    kv = parse_kv_lines(text)
    kwargs = {}
    if "recipes" in kv:
        kwargs["recipes"] = tuple(r.strip() for r in kv["recipes"].split(","))
    if "recipe" in kv:
        kwargs["recipes"] = (kv["recipe"].strip(),)
    if "manifest" in kv:
        kwargs["manifest"] = kv["manifest"]
    if "methods" in kv:
        kwargs["methods"] = tuple(m.strip() for m in kv["methods"].split(","))
    if "missing_views" in kv:
        kwargs["missing_views"] = tuple(int(v) for v in kv["missing_views"].split(","))
    for key, cast in (
        ("tuning_fraction", float),
        ("affected_fraction", float),
        ("anchor_fraction", float),
        ("repeats", int),
        ("seed", int),
        ("max_outer_iters", int),
        ("rel_tol", float),
        ("jobs", int),
        ("dataset_seed", int),
    ):
        if key in kv:
            kwargs[key] = cast(kv[key])
    if "penalty_grid" in kv:
        kwargs["penalty_grid"] = tuple(float(v) for v in kv["penalty_grid"].split(","))
    if "k_grid" in kv:
        kwargs["k_grid"] = tuple(int(v) for v in kv["k_grid"].split(","))
    return ExperimentPlan(**kwargs)


def load_plan(path):
    with open(path) as fh:
        return parse_plan(fh.read())
