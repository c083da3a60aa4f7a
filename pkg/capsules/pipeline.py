"""
Experiment orchestration: datasets per noise level, one evaluation per
(method, lambda) cell and scene, summaries, paired t-tests and CSV output.
"""

import csv
import itertools
import logging
import multiprocessing
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from django.conf import settings
from django.db import transaction
from scipy.stats import ttest_rel

from .datasets import read_dataset, scene_from_record, scene_to_record, write_dataset, write_outcomes
from .exceptions import CapsuleError
from .geometry import default_library
from .inference import DS, GMM, VIConfig, extract_partition, run_vi
from .metrics import CONVENTIONS, SceneScores, dataset_summary, score_scene, truth_partition
from .models import ExperimentRun, ResultRecord, SignificanceTest
from .ransac import RansacConfig, run_ransac
from .scenegen import GenConfig, generate_dataset

logger = logging.getLogger(__name__)

GCM_DS = "gcm-ds"
GCM_GMM = "gcm-gmm"
RANSAC = "ransac"
METHODS = (GCM_DS, GCM_GMM, RANSAC)
PRIOR_FOR_METHOD = {GCM_DS: DS, GCM_GMM: GMM}

RESULT_COLUMNS = (
    "method", "sigma", "lambda_init", "mask", "sa", "ari", "vi", "scene_accuracy", "scene_count",
)
TTEST_COLUMNS = (
    "sigma", "lambda_init", "mask", "metric", "method_a", "method_b", "statistic", "p_value",
)
TTEST_METRICS = ("sa", "ari", "vi")


def _defaults():
    return getattr(settings, "CAPSULES", {})


def format_number(value):
    return f"{value:g}"


@dataclass(frozen=True)
class MethodSpec:
    method: str
    lambda_init: float = None

    @property
    def is_vi(self):
        return self.method in PRIOR_FOR_METHOD

    def outcome_name(self, sigma):
        name = f"{self.method}_sigma{format_number(sigma)}"
        if self.lambda_init is not None:
            name += f"_lambda{format_number(self.lambda_init)}"
        return f"{name}.jsonl"


@dataclass(frozen=True)
class ExperimentConfig:
    methods: tuple = METHODS
    sigmas: tuple = (0.0,)
    lambdas: tuple = (500.0,)
    masks: tuple = ("full",)
    draws: int = 512
    seed: int = 7
    restarts: int = 5
    workers: int = 1
    ransac_tol: float = 0.1
    basis_policy: str = "fixed"
    ransac_refine: bool = False
    ransac_relaxed_tols: tuple = (0.2, 0.4)
    backend: str = "pool"
    out: str = "runs/latest"
    lambda_max: float = 1e4
    anneal_factor: float = 10.0
    sinkhorn_tol: float = 1e-10
    sinkhorn_max_iters: int = 1000
    dataset: str = None

    def __post_init__(self):
        for name in ("methods", "sigmas", "lambdas", "masks", "ransac_relaxed_tols"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if not self.methods:
            raise CapsuleError("At least one method is required")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise CapsuleError(f"Unknown method(s): {', '.join(unknown)}")
        if not self.sigmas and self.dataset is None:
            raise CapsuleError("At least one sigma is required")
        if any(sigma < 0 for sigma in self.sigmas):
            raise CapsuleError("Noise levels must be nonnegative")
        if any(m in PRIOR_FOR_METHOD for m in self.methods) and not self.lambdas:
            raise CapsuleError("Variational methods need at least one initial lambda")
        bad_masks = [m for m in self.masks if m not in CONVENTIONS]
        if bad_masks or not self.masks:
            raise CapsuleError(f"Masks must be chosen from {CONVENTIONS}")
        # tolerances at or below ransac_tol are dropped
        relaxed = tuple(float(t) for t in self.ransac_relaxed_tols if t > self.ransac_tol)
        object.__setattr__(self, "ransac_relaxed_tols", relaxed)

    @classmethod
    def build(cls, file_options=None, **flags):
        """Settings defaults, then config file values, then explicit flags."""
        defaults = _defaults()
        options = {
            "draws": defaults.get("DRAWS", 512),
            "seed": defaults.get("SEED", 7),
            "restarts": defaults.get("RESTARTS", 5),
            "workers": defaults.get("WORKERS", 1),
            "ransac_tol": defaults.get("RANSAC_TOL", 0.1),
            "basis_policy": defaults.get("BASIS_POLICY", "fixed"),
            "ransac_refine": defaults.get("RANSAC_REFINE", False),
            "ransac_relaxed_tols": defaults.get("RANSAC_RELAXED_TOLS", (0.2, 0.4)),
            "backend": defaults.get("BACKEND", "pool"),
            "out": str(defaults.get("OUTPUT_DIR", "runs/latest")),
            "lambda_max": defaults.get("LAMBDA_MAX", 1e4),
            "anneal_factor": defaults.get("ANNEAL_FACTOR", 10.0),
            "sinkhorn_tol": defaults.get("SINKHORN_TOL", 1e-10),
            "sinkhorn_max_iters": defaults.get("SINKHORN_MAX_ITERS", 1000),
        }
        options.update(file_options or {})
        options.update({key: value for key, value in flags.items() if value is not None})
        return cls(**options)

    def cells(self):
        specs = []
        for method in self.methods:
            if method in PRIOR_FOR_METHOD:
                specs.extend(MethodSpec(method, float(lam)) for lam in self.lambdas)
            else:
                specs.append(MethodSpec(method))
        return specs

    def as_dict(self):
        return {
            "methods": list(self.methods),
            "sigmas": list(self.sigmas),
            "lambdas": list(self.lambdas),
            "masks": list(self.masks),
            "draws": self.draws,
            "seed": self.seed,
            "restarts": self.restarts,
            "workers": self.workers,
            "ransac_tol": self.ransac_tol,
            "basis_policy": self.basis_policy,
            "ransac_refine": self.ransac_refine,
            "ransac_relaxed_tols": list(self.ransac_relaxed_tols),
            "backend": self.backend,
            "out": self.out,
            "dataset": self.dataset,
        }


@dataclass
class ResultRow:
    method: str
    sigma: float
    lambda_init: float
    mask: str
    sa: float
    ari: float
    vi: float
    scene_accuracy: float
    wall_time: float
    scene_count: int


@dataclass
class SignificanceRow:
    sigma: float
    lambda_init: float
    mask: str
    metric: str
    method_a: str
    method_b: str
    statistic: float = None
    p_value: float = None


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    rows: list = field(default_factory=list)
    ttests: list = field(default_factory=list)
    wall_time: float = 0.0
    out_dir: Path = None


# Per-scene evaluation; payloads and results are JSON-ready for the Celery backend
def scene_payload(scene, spec, cfg):
    return {
        "scene": scene_to_record(scene),
        "method": spec.method,
        "lambda_init": spec.lambda_init,
        "vi_seed": [int(cfg.seed), int(scene.index)],
        "restarts": cfg.restarts,
        "lambda_max": cfg.lambda_max,
        "anneal_factor": cfg.anneal_factor,
        "sinkhorn_tol": cfg.sinkhorn_tol,
        "sinkhorn_max_iters": cfg.sinkhorn_max_iters,
        "ransac_tol": cfg.ransac_tol,
        "basis_policy": cfg.basis_policy,
        "ransac_refine": cfg.ransac_refine,
        "ransac_relaxed_tols": list(cfg.ransac_relaxed_tols),
    }


def _explain(scene, library, payload):
    method = payload["method"]
    if method == RANSAC:
        explanation = run_ransac(
            scene.points,
            library,
            RansacConfig(
                tol=payload["ransac_tol"],
                basis_policy=payload["basis_policy"],
                refine=payload["ransac_refine"],
                relaxed_tols=payload["ransac_relaxed_tols"],
            ),
        )
        objects = [
            {"template": h.template + 1, "pose": list(h.pose.y)} for h in explanation.hypotheses
        ]
        return explanation.partition(library), objects

    cfg = VIConfig(
        prior_kind=PRIOR_FOR_METHOD[method],
        lambda_init=payload["lambda_init"],
        lambda_max=payload["lambda_max"],
        anneal_factor=payload["anneal_factor"],
        restarts=payload["restarts"],
        seed=payload["vi_seed"],
        sinkhorn_tol=payload["sinkhorn_tol"],
        sinkhorn_max_iters=payload["sinkhorn_max_iters"],
    )
    result = run_vi(scene.points, library, cfg)
    partition = extract_partition(result.R, scene.n_points, library)
    if result.degenerate and not partition.degenerate:
        partition = replace(partition, degenerate=True)
    present = sorted({int(v) for v in partition.point_labels if v > 0} | set(partition.phantoms))
    objects = [{"template": k, "pose": result.posteriors[k - 1].mu.tolist()} for k in present]
    return partition, objects


def evaluate_scene(payload):
    library = default_library()
    scene = scene_from_record(payload["scene"])
    partition, objects = _explain(scene, library, payload)
    truth = truth_partition(scene)
    groups = library.interchangeable_groups()
    scores = {
        convention: score_scene(
            scene.index, truth, partition, library.n_slots, convention, groups
        ).as_dict()
        for convention in CONVENTIONS
    }
    return {
        "scene": scene.index,
        "method": payload["method"],
        "sigma": scene.sigma,
        "lambda_init": payload["lambda_init"],
        "labels": [int(v) for v in partition.point_labels],
        "phantoms": list(partition.phantoms),
        "missing_slots": list(partition.missing_slots),
        "objects": objects,
        "degenerate": bool(partition.degenerate),
        "scores": scores,
    }


def run_cell(scenes, spec, cfg):
    """Outcome records of one cell, in scene order regardless of backend."""
    payloads = [scene_payload(scene, spec, cfg) for scene in scenes]
    if cfg.backend == "celery":
        from .tasks import evaluate_scene_task

        pending = [evaluate_scene_task.delay(payload) for payload in payloads]
        return [result.get() for result in pending]
    if cfg.workers > 1 and len(payloads) > 1:
        with multiprocessing.Pool(processes=cfg.workers) as pool:
            return pool.map(evaluate_scene, payloads)
    return [evaluate_scene(payload) for payload in payloads]


def summarize(records, convention):
    scores = [SceneScores(scene=record["scene"], **record["scores"][convention]) for record in records]
    return dataset_summary(scores)


def paired_ttest(a, b):
    """Two-sided paired t-test; undefined when the paired differences have no spread."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if len(a) < 2 or np.ptp(a - b) == 0:
        return None, None
    result = ttest_rel(a, b)
    statistic, p_value = float(result.statistic), float(result.pvalue)
    return (
        statistic if np.isfinite(statistic) else None,
        p_value if np.isfinite(p_value) else None,
    )


def significance_tests(sigma, cell_records, cfg):
    """Every pair of method cells sharing (sigma, lambda, mask); RANSAC joins every lambda group."""
    plain = [spec for spec in cell_records if not spec.is_vi]
    lambdas = sorted({spec.lambda_init for spec in cell_records if spec.is_vi}) or [None]
    rows = []
    for lam in lambdas:
        group = [spec for spec in cell_records if spec.is_vi and spec.lambda_init == lam] + plain
        for first, second in itertools.combinations(group, 2):
            records_a, records_b = cell_records[first], cell_records[second]
            if [r["scene"] for r in records_a] != [r["scene"] for r in records_b]:
                raise CapsuleError("Cells were evaluated on different scenes")
            for mask in cfg.masks:
                for metric in TTEST_METRICS:
                    statistic, p_value = paired_ttest(
                        [r["scores"][mask][metric] for r in records_a],
                        [r["scores"][mask][metric] for r in records_b],
                    )
                    rows.append(
                        SignificanceRow(
                            sigma, lam, mask, metric, first.method, second.method, statistic, p_value
                        )
                    )
    return rows


def _blank(value, fmt="{:.6f}"):
    return "" if value is None else fmt.format(value)


def write_results_csv(path, rows):
    with Path(path).open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(RESULT_COLUMNS)
        for row in rows:
            writer.writerow(
                [
                    row.method,
                    format_number(row.sigma),
                    "" if row.lambda_init is None else format_number(row.lambda_init),
                    row.mask,
                    f"{row.sa:.6f}",
                    f"{row.ari:.6f}",
                    f"{row.vi:.6f}",
                    f"{row.scene_accuracy:.6f}",
                    row.scene_count,
                ]
            )
    return path


def write_ttests_csv(path, rows):
    with Path(path).open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(TTEST_COLUMNS)
        for row in rows:
            writer.writerow(
                [
                    format_number(row.sigma),
                    "" if row.lambda_init is None else format_number(row.lambda_init),
                    row.mask,
                    row.metric,
                    row.method_a,
                    row.method_b,
                    _blank(row.statistic),
                    _blank(row.p_value, "{:.6g}"),
                ]
            )
    return path


def load_datasets(cfg, out_dir):
    """(sigma, scenes) pairs, generated into out_dir or read from cfg.dataset."""
    if cfg.dataset:
        scenes = read_dataset(cfg.dataset, library=default_library())
        sigmas = {scene.sigma for scene in scenes}
        if len(sigmas) > 1:
            raise CapsuleError(f"Dataset {cfg.dataset} mixes noise levels {sorted(sigmas)}")
        sigma = sigmas.pop() if sigmas else (cfg.sigmas[0] if cfg.sigmas else 0.0)
        return [(sigma, scenes)]
    datasets = []
    for sigma in cfg.sigmas:
        scenes = generate_dataset(GenConfig(sigma=sigma, draws=cfg.draws), cfg.seed, cfg.workers)
        write_dataset(out_dir / f"dataset_sigma{format_number(sigma)}.jsonl", scenes)
        datasets.append((sigma, scenes))
    return datasets


def run_experiment(cfg):
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = ExperimentReport(config=cfg, out_dir=out_dir)
    started = time.perf_counter()

    for sigma, scenes in load_datasets(cfg, out_dir):
        if not scenes:
            logger.warning("No non-empty scenes at sigma=%s; skipping", sigma)
            continue
        cell_records = {}
        for spec in cfg.cells():
            cell_started = time.perf_counter()
            records = run_cell(scenes, spec, cfg)
            elapsed = time.perf_counter() - cell_started
            write_outcomes(out_dir / "outcomes" / spec.outcome_name(sigma), records)
            cell_records[spec] = records
            for mask in cfg.masks:
                summary = summarize(records, mask)
                report.rows.append(
                    ResultRow(
                        method=spec.method,
                        sigma=sigma,
                        lambda_init=spec.lambda_init,
                        mask=mask,
                        sa=summary.sa_for(mask),
                        ari=summary.ari,
                        vi=summary.vi,
                        scene_accuracy=summary.scene_accuracy,
                        wall_time=elapsed,
                        scene_count=summary.count,
                    )
                )
            logger.info(
                "%s sigma=%s lambda=%s: %d scenes in %.1fs",
                spec.method, sigma, spec.lambda_init, len(records), elapsed,
            )
        report.ttests.extend(significance_tests(sigma, cell_records, cfg))

    report.wall_time = time.perf_counter() - started
    write_results_csv(out_dir / "results.csv", report.rows)
    write_ttests_csv(out_dir / "ttests.csv", report.ttests)
    return report


def record_run(report):
    """Store a finished experiment in the run ledger."""
    with transaction.atomic():
        run = ExperimentRun.objects.create(
            out_dir=str(report.out_dir),
            master_seed=report.config.seed,
            config=report.config.as_dict(),
            wall_time=report.wall_time,
        )
        for row in report.rows:
            ResultRecord.objects.create(
                run=run,
                method=row.method,
                sigma=row.sigma,
                lambda_init=row.lambda_init,
                mask=row.mask,
                sa=row.sa,
                ari=row.ari,
                vi=row.vi,
                scene_accuracy=row.scene_accuracy,
                wall_time=row.wall_time,
                scene_count=row.scene_count,
            )
        SignificanceTest.objects.bulk_create(
            [
                SignificanceTest(
                    run=run,
                    sigma=row.sigma,
                    lambda_init=row.lambda_init,
                    mask=row.mask,
                    metric=row.metric,
                    method_a=row.method_a,
                    method_b=row.method_b,
                    statistic=row.statistic,
                    p_value=row.p_value,
                )
                for row in report.ttests
            ]
        )
    return run
