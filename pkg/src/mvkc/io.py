"""Plain-text file formats: CSV matrices, masks, dataset manifests and
completion-result directories. Round trips are bit-close (17 significant
digits) and masks/manifests are diff-friendly key=value text."""

from __future__ import annotations

import os

import numpy as np

from .data import KernelMatrix, MultiViewDataset, ViewMask
from .kernels import KernelKind

MANIFEST_NAME = "manifest.txt"
FLOAT_FMT = "%.17g"


class MissingFileError(FileNotFoundError):
    pass


def write_matrix_csv(path, values):
    np.savetxt(path, np.asarray(values, dtype=float), delimiter=",", fmt=FLOAT_FMT)


def read_matrix_csv(path):
    if not os.path.isfile(path):
        raise MissingFileError(f"missing file: {path}")
    return np.loadtxt(path, delimiter=",", ndmin=2)


def parse_kv_lines(text):
    """key=value lines; blank lines and '#' comments ignored."""
    out = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out


def write_kv_file(path, pairs):
    with open(path, "w") as fh:
        for key, value in pairs:
            fh.write(f"{key}={value}\n")


def _write_masks(path, masks):
    with open(path, "w") as fh:
        for v, mask in enumerate(masks):
            idx = ",".join(str(i) for i in mask.known)
            fh.write(f"view={v} known={idx}\n")


def _read_masks(path, n, views):
    if not os.path.isfile(path):
        raise MissingFileError(f"missing file: {path}")
    masks = [None] * views
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if not line:
                continue
            fields = dict(part.partition("=")[::2] for part in line.split())
            v = int(fields["view"])
            known = tuple(int(i) for i in fields["known"].split(","))
            if any(i < 0 or i >= n for i in known):
                raise ValueError("mask index out of range")
            masks[v] = ViewMask(n, known)
    if any(mask is None for mask in masks):
        raise ValueError("mask file does not cover every view")
    return tuple(masks)


def save_dataset(ds, out_dir):
    """Write manifest, per-view kernel CSVs, the mask file and any truth,
    feature and kernel-kind entries. Returns the manifest path."""
    os.makedirs(out_dir, exist_ok=True)
    pairs = [("n", ds.n), ("views", ds.m)]
    for v, K in enumerate(ds.kernels):
        name = f"kernel.{v}.csv"
        write_matrix_csv(os.path.join(out_dir, name), K.values)
        pairs.append((f"kernel.{v}", name))
    _write_masks(os.path.join(out_dir, "mask.txt"), ds.masks)
    pairs.append(("mask", "mask.txt"))
    if ds.truth is not None:
        for v, T in enumerate(ds.truth):
            name = f"truth.{v}.csv"
            write_matrix_csv(os.path.join(out_dir, name), T.values)
            pairs.append((f"truth.{v}", name))
    if ds.features is not None:
        for v, X in enumerate(ds.features):
            name = f"features.{v}.csv"
            write_matrix_csv(os.path.join(out_dir, name), X)
            pairs.append((f"features.{v}", name))
    if ds.kinds is not None:
        for v, kind in enumerate(ds.kinds):
            pairs.append((f"kind.{v}", kind.format()))
    manifest = os.path.join(out_dir, MANIFEST_NAME)
    write_kv_file(manifest, pairs)
    return manifest


def load_dataset(path):
    """Load a dataset from a manifest file or a directory containing one."""
    manifest = os.path.join(path, MANIFEST_NAME) if os.path.isdir(path) else path
    if not os.path.isfile(manifest):
        raise MissingFileError(f"missing file: {manifest}")
    base = os.path.dirname(os.path.abspath(manifest))
    with open(manifest) as fh:
        kv = parse_kv_lines(fh.read())
    n = int(kv["n"])
    views = int(kv["views"])

    def resolve(name):
        return name if os.path.isabs(name) else os.path.join(base, name)

    masks = _read_masks(resolve(kv["mask"]), n, views)
    kernels = []
    for v in range(views):
        values = read_matrix_csv(resolve(kv[f"kernel.{v}"]))
        if values.shape != (n, n):
            raise ValueError(f"kernel.{v} is not {n}x{n}")
        kernels.append(KernelMatrix(values))
    truth = None
    if f"truth.0" in kv:
        truth = tuple(
            KernelMatrix(read_matrix_csv(resolve(kv[f"truth.{v}"]))) for v in range(views)
        )
    features = None
    if f"features.0" in kv:
        features = tuple(read_matrix_csv(resolve(kv[f"features.{v}"])) for v in range(views))
    kinds = None
    if f"kind.0" in kv:
        kinds = tuple(KernelKind.parse(kv[f"kind.{v}"]) for v in range(views))
    return MultiViewDataset(
        kernels=tuple(kernels), masks=masks, truth=truth, features=features, kinds=kinds
    )


def save_result(result, out_dir, dataset_dir=None):
    """Emit a CompletionResult: completed kernel CSVs, objective trace,
    combination weights and a key=value summary."""
    os.makedirs(out_dir, exist_ok=True)
    for v, K in enumerate(result.kernels):
        write_matrix_csv(os.path.join(out_dir, f"completed.{v}.csv"), K.values)
    with open(os.path.join(out_dir, "objective_trace.csv"), "w") as fh:
        fh.write("iteration,objective,wall_ms\n")
        for i, (obj, ms) in enumerate(zip(result.objective_trace, result.iteration_ms), start=1):
            fh.write(f"{i},{obj:.17g},{ms:.3f}\n")
    if result.combination is not None:
        write_matrix_csv(os.path.join(out_dir, "S.csv"), result.combination)
    pairs = [
        ("method", result.method),
        ("iters", result.iterations),
        ("converged", str(result.converged).lower()),
        ("seconds", f"{result.wall_seconds:.6f}"),
    ]
    pairs[1:1] = [(k, f"{v:.17g}") for k, v in result.penalties.items()]
    if dataset_dir is not None:
        pairs.append(("input", os.path.abspath(dataset_dir)))
    write_kv_file(os.path.join(out_dir, "summary"), pairs)


def load_result_kernels(result_dir):
    """Completed kernels and the summary of a saved result directory."""
    summary_path = os.path.join(result_dir, "summary")
    if not os.path.isfile(summary_path):
        raise MissingFileError(f"missing file: {summary_path}")
    with open(summary_path) as fh:
        summary = parse_kv_lines(fh.read())
    kernels = []
    v = 0
    while True:
        path = os.path.join(result_dir, f"completed.{v}.csv")
        if not os.path.isfile(path):
            break
        kernels.append(KernelMatrix(read_matrix_csv(path)))
        v += 1
    if not kernels:
        raise MissingFileError(f"no completed kernels in {result_dir}")
    return kernels, summary
