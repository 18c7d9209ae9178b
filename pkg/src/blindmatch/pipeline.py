"""End-to-end experiment protocols driven by JSON configs.

Conventions shared by every experiment:

* the two modality files list classes in the same order, so the ground-truth
  permutation is the identity and matching accuracy counts fixed points;
* all randomness flows through explicit integer seeds; reruns with the same
  config are bit-identical;
* reports are JSON (plus CSV for curves) under the output directory, together
  with a run manifest recording the config hash.
"""

from __future__ import annotations

import csv
import hashlib
import json
import time
from dataclasses import asdict, dataclass, field
from importlib.metadata import version as pkg_version
from pathlib import Path

import numpy as np

from ._lap_numba import lap_jv
from .clustering import kmeans_pp
from .embeddings import ClassPrototypes, EmbeddingMatrix, class_prototypes, load_embeddings, normalize_rows
from .exceptions import ConfigError, SizeMismatchError
from .kernels import (
    DEFAULT_SPEC_FOR_KIND,
    KernelKind,
    SimilarityMatrix,
    cka_kernel,
    default_shuffle_levels,
    gw_kernel,
    mutual_knn_kernel,
    shuffle_curve,
    to_qap,
)
from .heuristics import solve_2opt, solve_faq
from .qap import ENUMERATION_LIMIT, HahnGrantConfig, solve_enumeration, solve_factorized_hahn_grant
from .subset import SubsetSearchConfig, alignment_problem, top_m_subsets
from .transport import solve_entropic_gw

EXPERIMENT_KINDS = ("shuffle", "small_scale", "larger_scale", "solver_bench", "unsup_classify")

KERNEL_NAMES = {
    "gw": KernelKind.GW_DISTANCE,
    "cka": KernelKind.CKA,
    "mutual_knn": KernelKind.MUTUAL_KNN,
}


def matching_accuracy(perm, gt) -> float:
    """Fraction of positions mapped identically by the two permutations."""
    perm = np.asarray(perm, dtype=np.int64)
    gt = np.asarray(gt, dtype=np.int64)
    if perm.shape != gt.shape:
        raise SizeMismatchError(f"length mismatch: {perm.shape} vs {gt.shape}")
    return float(np.mean(perm == gt))


@dataclass
class ExperimentConfig:
    kind: str
    vision_manifest: str | None = None
    language_manifest: str | None = None
    out_dir: str | None = None
    seeds: list = field(default_factory=lambda: [0])
    kernel: str = "gw"
    knn_k: int = 5
    fraction: float = 0.5
    solver: dict = field(default_factory=dict)
    sizes: list = field(default_factory=list)
    top_m: int = 10
    subset: dict = field(default_factory=dict)
    subset_method: str = "auto"
    solvers: list = field(default_factory=lambda: ["hahn_grant", "faq", "2opt", "entropic_gw", "random"])
    faq_seeds: int = 100
    kmeans_k: int | None = None
    kmeans_n_init: int = 100
    shuffle_levels: int = 21
    shuffle_seeds: int = 100
    shuffle_kernels: list = field(default_factory=lambda: ["gw", "cka", "mutual_knn"])
    standardize_gw: bool = True

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**raw)
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        cfg = cls.from_dict(raw)
        # manifest paths are relative to the config file
        base = path.parent
        for attr in ("vision_manifest", "language_manifest"):
            value = getattr(cfg, attr)
            if value is not None and not Path(value).is_absolute():
                setattr(cfg, attr, str(base / value))
        cfg.validate_files()
        return cfg

    def validate(self):
        if self.kind not in EXPERIMENT_KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}; expected one of {EXPERIMENT_KINDS}")
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        if self.kernel not in KERNEL_NAMES:
            raise ConfigError(f"unknown kernel {self.kernel!r}")
        if not 0.0 < self.fraction <= 1.0:
            raise ConfigError("fraction must lie in (0, 1]")
        if self.kind == "larger_scale" and not self.sizes:
            raise ConfigError("larger_scale requires non-empty 'sizes'")
        if self.kind == "solver_bench" and not self.solvers:
            raise ConfigError("solver_bench requires a non-empty solver list")
        for name in self.shuffle_kernels:
            if name not in KERNEL_NAMES:
                raise ConfigError(f"unknown shuffle kernel {name!r}")

    def validate_files(self):
        if self.kind in ("small_scale", "larger_scale", "solver_bench", "unsup_classify", "shuffle"):
            for attr in ("vision_manifest", "language_manifest"):
                value = getattr(self, attr)
                if value is None:
                    raise ConfigError(f"{self.kind} requires {attr}")
                if not Path(value).is_file():
                    raise ConfigError(f"{attr} does not exist: {value}")

    def solver_config(self, **overrides) -> HahnGrantConfig:
        merged = dict(self.solver)
        merged.update(overrides)
        return HahnGrantConfig(**merged)

    def subset_config(self) -> SubsetSearchConfig:
        return SubsetSearchConfig(**self.subset)


def _kernel(prototypes: ClassPrototypes, name: str, knn_k: int) -> SimilarityMatrix:
    kind = KERNEL_NAMES[name]
    if kind is KernelKind.GW_DISTANCE:
        return gw_kernel(prototypes)
    if kind is KernelKind.CKA:
        return cka_kernel(prototypes)
    return mutual_knn_kernel(prototypes, knn_k)


def _spec_for(name: str):
    return DEFAULT_SPEC_FOR_KIND[KERNEL_NAMES[name]]


@dataclass
class MatchRow:
    seed: int
    solver: str
    permutation: list
    matching_accuracy: float
    cost: float
    dual_bound: float | None
    gap: float | None
    converged: bool | None
    wall_time: float
    size: int | None = None
    subset_index: int | None = None
    subset: list | None = None
    error: str | None = None


@dataclass
class MatchReport:
    kind: str
    rows: list
    aggregates: dict

    def to_dict(self) -> dict:
        return {"kind": self.kind, "rows": [asdict(r) for r in self.rows], "aggregates": self.aggregates}

    def write(self, out_dir, name: str) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        path = out / f"{name}.json"
        path.write_text(json.dumps(self.to_dict(), indent=2) + "\n")
        return path


def _aggregate(rows) -> dict:
    ok = [r for r in rows if r.error is None]
    agg = {"count": len(rows), "failed": len(rows) - len(ok)}
    if ok:
        accs = np.array([r.matching_accuracy for r in ok])
        costs = np.array([r.cost for r in ok])
        agg.update(
            accuracy_mean=float(accs.mean()),
            accuracy_std=float(accs.std()),
            cost_mean=float(costs.mean()),
            cost_std=float(costs.std()),
        )
    return agg


def write_run_manifest(out_dir, cfg: ExperimentConfig) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg_json = json.dumps(asdict(cfg), sort_keys=True)
    manifest = {
        "kind": cfg.kind,
        "config": json.loads(cfg_json),
        "config_sha256": hashlib.sha256(cfg_json.encode()).hexdigest(),
        "package_version": pkg_version("blindmatch"),
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    path = out / "run_manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


def _load_pair(cfg: ExperimentConfig):
    vision = load_embeddings(cfg.vision_manifest)
    language = load_embeddings(cfg.language_manifest)
    if vision.labels is None or language.labels is None:
        raise ConfigError("both modality files must carry labels")
    if vision.n_classes != language.n_classes:
        raise ConfigError(
            f"class count mismatch: vision {vision.n_classes} vs language {language.n_classes}"
        )
    return vision, language


def _instance(cfg: ExperimentConfig, vision: EmbeddingMatrix, language: EmbeddingMatrix, seed: int, class_ids=None):
    pv = class_prototypes(vision, cfg.fraction, seed)
    pl = class_prototypes(language, cfg.fraction, seed)
    if class_ids is not None:
        pv = pv.select(class_ids)
        pl = pl.select(class_ids)
    x = _kernel(pv, cfg.kernel, cfg.knn_k)
    y = _kernel(pl, cfg.kernel, cfg.knn_k)
    spec = _spec_for(cfg.kernel)
    return x, y, spec, to_qap(x, y, spec)


def run_small_scale(cfg: ExperimentConfig) -> MatchReport:
    """Per seed: subsampled prototypes, kernels, exact enumeration, accuracy."""
    vision, language = _load_pair(cfg)
    if vision.n_classes > ENUMERATION_LIMIT:
        raise ConfigError(f"small_scale requires at most {ENUMERATION_LIMIT} classes")
    gt = np.arange(vision.n_classes)
    rows = []
    for seed in cfg.seeds:
        _, _, _, qap = _instance(cfg, vision, language, seed)
        rep = solve_enumeration(qap)
        rows.append(
            MatchRow(
                seed=seed,
                solver=rep.solver,
                permutation=[int(p) for p in rep.primal_perm],
                matching_accuracy=matching_accuracy(rep.primal_perm, gt),
                cost=rep.primal_cost,
                dual_bound=rep.dual_bound,
                gap=rep.gap,
                converged=rep.converged,
                wall_time=rep.wall_time,
            )
        )
    report = MatchReport("small_scale", rows, _aggregate(rows))
    if cfg.out_dir:
        report.write(cfg.out_dir, "small_scale")
    return report


def run_larger_scale(cfg: ExperimentConfig) -> MatchReport:
    """For each size: best class subsets, then the dual-ascent solver per subset/seed."""
    vision, language = _load_pair(cfg)
    pv_full = class_prototypes(vision, 1.0, 0)
    pl_full = class_prototypes(language, 1.0, 0)
    x_full = _kernel(pv_full, cfg.kernel, cfg.knn_k)
    y_full = _kernel(pl_full, cfg.kernel, cfg.knn_k)
    spec = _spec_for(cfg.kernel)
    rows = []
    for size in cfg.sizes:
        prob = alignment_problem(x_full, y_full, spec, size)
        subsets = top_m_subsets(prob, cfg.top_m, method=cfg.subset_method, cfg=cfg.subset_config())
        gt = np.arange(size)
        for subset_index, (subset, _score) in enumerate(subsets):
            ids = np.asarray(subset, dtype=np.int64)
            for seed in cfg.seeds:
                _, _, _, qap = _instance(cfg, vision, language, seed, class_ids=ids)
                rep = solve_factorized_hahn_grant(qap, cfg.solver_config())
                rows.append(
                    MatchRow(
                        seed=seed,
                        solver=rep.solver,
                        permutation=[int(p) for p in rep.primal_perm],
                        matching_accuracy=matching_accuracy(rep.primal_perm, gt),
                        cost=rep.primal_cost,
                        dual_bound=rep.dual_bound,
                        gap=rep.gap,
                        converged=rep.converged,
                        wall_time=rep.wall_time,
                        size=size,
                        subset_index=subset_index,
                        subset=[int(c) for c in subset],
                    )
                )
    report = MatchReport("larger_scale", rows, _aggregate(rows))
    if cfg.out_dir:
        report.write(cfg.out_dir, "larger_scale")
    return report


def _bench_one(cfg: ExperimentConfig, solver: str, x, y, spec, qap, seed: int):
    t0 = time.perf_counter()
    dual_bound = None
    gap = None
    converged = None
    if solver == "enumeration":
        rep = solve_enumeration(qap)
        perm, cost = rep.primal_perm, rep.primal_cost
        dual_bound, gap, converged = rep.dual_bound, rep.gap, rep.converged
    elif solver == "hahn_grant":
        rep = solve_factorized_hahn_grant(qap, cfg.solver_config())
        perm, cost = rep.primal_perm, rep.primal_cost
        dual_bound, gap, converged = rep.dual_bound, rep.gap, rep.converged
    elif solver == "faq":
        perm = solve_faq(qap, n_seeds=cfg.faq_seeds, seed=seed)
        cost = qap.mapped_cost(perm)
    elif solver == "2opt":
        init = np.random.default_rng(seed).permutation(qap.n)
        perm = solve_2opt(qap, init)
        cost = qap.mapped_cost(perm)
    elif solver == "entropic_gw":
        res = solve_entropic_gw(x, y, spec)
        perm = res.perm
        cost = qap.mapped_cost(perm)
    elif solver == "random":
        perm = np.random.default_rng(seed).permutation(qap.n)
        cost = qap.mapped_cost(perm)
    else:
        raise ConfigError(f"unknown solver {solver!r}")
    return perm, cost, dual_bound, gap, converged, time.perf_counter() - t0


def run_solver_benchmark(cfg: ExperimentConfig) -> MatchReport:
    """All configured solvers on the same per-seed instances, plus per-solver summary.

    A solver is counted globally optimal when its cost reaches the enumeration
    optimum (sizes up to 12) or, beyond that, when the dual-ascent run closed
    its own primal-dual gap.
    """
    vision, language = _load_pair(cfg)
    n = vision.n_classes
    gt = np.arange(n)
    rows = []
    optima = {}
    for seed in cfg.seeds:
        x, y, spec, qap = _instance(cfg, vision, language, seed)
        if n <= ENUMERATION_LIMIT:
            optima[seed] = solve_enumeration(qap).primal_cost
        for solver in cfg.solvers:
            try:
                perm, cost, dual_bound, gap, converged, wall = _bench_one(cfg, solver, x, y, spec, qap, seed)
                rows.append(
                    MatchRow(
                        seed=seed, solver=solver, permutation=[int(p) for p in perm],
                        matching_accuracy=matching_accuracy(perm, gt), cost=cost,
                        dual_bound=dual_bound, gap=gap, converged=converged, wall_time=wall,
                    )
                )
            except Exception as exc:  # per-solver failures recorded, not fatal
                rows.append(
                    MatchRow(
                        seed=seed, solver=solver, permutation=[], matching_accuracy=0.0,
                        cost=float("nan"), dual_bound=None, gap=None, converged=None,
                        wall_time=0.0, error=f"{type(exc).__name__}: {exc}",
                    )
                )
    per_solver = {}
    for solver in cfg.solvers:
        ok = [r for r in rows if r.solver == solver and r.error is None]
        if not ok:
            per_solver[solver] = {"count": 0}
            continue
        accs = np.array([r.matching_accuracy for r in ok])
        costs = np.array([r.cost for r in ok])
        is_global = []
        for r in ok:
            if r.seed in optima:
                is_global.append(r.cost <= optima[r.seed] + 1e-6)
            else:
                is_global.append(bool(r.converged))
        per_solver[solver] = {
            "count": len(ok),
            "accuracy_mean": float(accs.mean()),
            "accuracy_std": float(accs.std()),
            "cost_mean": float(costs.mean()),
            "cost_std": float(costs.std()),
            "global_frequency": float(np.mean(is_global)),
        }
    report = MatchReport("solver_bench", rows, {"per_solver": per_solver, "count": len(rows)})
    if cfg.out_dir:
        report.write(cfg.out_dir, "solver_bench")
        _write_bound_curves(cfg.out_dir, rows)
    return report


def _write_bound_curves(out_dir, rows):
    """Primal/dual trajectories are already inside each dual-ascent report row;
    the bench stores the final values per solver as CSV for plotting."""
    path = Path(out_dir) / "solver_bench.csv"
    with path.open("w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["seed", "solver", "accuracy", "cost", "dual_bound", "gap", "wall_time", "error"])
        for r in rows:
            w.writerow([r.seed, r.solver, r.matching_accuracy, r.cost, r.dual_bound, r.gap, r.wall_time, r.error or ""])


def run_unsupervised_classifier(cfg: ExperimentConfig) -> dict:
    """Cluster image embeddings, blind-match centroids to language prototypes,
    propagate labels, and compare with the best achievable (oracle) matching."""
    vision, language = _load_pair(cfg)
    pl = class_prototypes(language, 1.0, 0)
    k = pl.n
    if cfg.kmeans_k is not None and cfg.kmeans_k != k:
        raise ConfigError(f"kmeans_k={cfg.kmeans_k} does not match {k} language classes")
    spec = _spec_for(cfg.kernel)
    y = _kernel(pl, cfg.kernel, cfg.knn_k)
    normalized = normalize_rows(vision)
    results = []
    for seed in cfg.seeds:
        rng = np.random.default_rng(seed)
        take = max(1, int(np.floor(cfg.fraction * vision.n)))
        idx = np.sort(rng.choice(vision.n, size=take, replace=False))
        data = normalized.data[idx].astype(np.float64)
        truth = vision.labels[idx]
        model = kmeans_pp(data, k, n_init=cfg.kmeans_n_init, seed=seed)
        centroids = ClassPrototypes(
            (model.centroids / np.linalg.norm(model.centroids, axis=1, keepdims=True)).astype(np.float32),
            np.arange(k),
        )
        x = _kernel(centroids, cfg.kernel, cfg.knn_k)
        rep = solve_factorized_hahn_grant(to_qap(x, y, spec), cfg.solver_config())
        perm = rep.primal_perm
        contingency = np.zeros((k, k), dtype=np.float64)
        np.add.at(contingency, (model.assignments, truth), 1.0)
        blind_acc = float(contingency[np.arange(k), perm].sum() / truth.size)
        oracle_perm, _, _ = lap_jv(np.ascontiguousarray(-contingency))
        oracle_acc = float(contingency[np.arange(k), oracle_perm].sum() / truth.size)
        results.append(
            {
                "seed": seed,
                "blind_accuracy": blind_acc,
                "oracle_accuracy": oracle_acc,
                "matching_agreement": matching_accuracy(perm, oracle_perm),
                "permutation": [int(p) for p in perm],
                "cost": rep.primal_cost,
                "dual_bound": rep.dual_bound,
                "inertia": model.inertia,
                "wall_time": rep.wall_time,
            }
        )
    blind = np.array([r["blind_accuracy"] for r in results])
    oracle = np.array([r["oracle_accuracy"] for r in results])
    out = {
        "kind": "unsup_classify",
        "rows": results,
        "aggregates": {
            "count": len(results),
            "blind_accuracy_mean": float(blind.mean()),
            "blind_accuracy_std": float(blind.std()),
            "oracle_accuracy_mean": float(oracle.mean()),
            "oracle_accuracy_std": float(oracle.std()),
        },
    }
    if cfg.out_dir:
        path = Path(cfg.out_dir)
        path.mkdir(parents=True, exist_ok=True)
        (path / "unsup_classify.json").write_text(json.dumps(out, indent=2) + "\n")
    return out


def run_shuffle_experiment(cfg: ExperimentConfig) -> dict:
    """Shuffle curves for every configured kernel; writes one CSV per kernel."""
    vision, language = _load_pair(cfg)
    pv = class_prototypes(vision, 1.0, 0)
    pl = class_prototypes(language, 1.0, 0)
    levels = default_shuffle_levels(cfg.shuffle_levels)
    curves = {}
    for name in cfg.shuffle_kernels:
        x = _kernel(pv, name, cfg.knn_k)
        y = _kernel(pl, name, cfg.knn_k)
        if name == "gw" and cfg.standardize_gw:
            # display-path standardization into [0, 1]; QAP construction never does this
            x = SimilarityMatrix(x.values / x.values.max(), x.kind)
            y = SimilarityMatrix(y.values / y.values.max(), y.kind)
        spec = _spec_for(name)
        curves[name] = shuffle_curve(x, y, spec, levels, cfg.shuffle_seeds, seed=cfg.seeds[0])
    if cfg.out_dir:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for name, curve in curves.items():
            with (out / f"shuffle_{name}.csv").open("w", newline="") as f:
                w = csv.writer(f)
                w.writerow(["alpha", "mean", "std"])
                for alpha, mean, std in curve:
                    w.writerow([alpha, mean, std])
    return {"kind": "shuffle", "curves": curves}


RUNNERS = {
    "shuffle": run_shuffle_experiment,
    "small_scale": run_small_scale,
    "larger_scale": run_larger_scale,
    "solver_bench": run_solver_benchmark,
    "unsup_classify": run_unsupervised_classifier,
}


def run_experiment(cfg: ExperimentConfig):
    cfg.validate()
    cfg.validate_files()
    if cfg.out_dir:
        write_run_manifest(cfg.out_dir, cfg)
    return RUNNERS[cfg.kind](cfg)
