"""Markdown report of a recorded run, next to the published reference values."""

import json
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

from .pipeline import format_number
from .serializers import ExperimentRunSerializer

REFERENCE_PATH = Path(__file__).resolve().parent / "data" / "published_results.json"
METRICS = ("sa", "ari", "vi", "scene_accuracy")
# (better method, its lambda, worse method, its lambda, metrics where the first must score higher)
ORDERINGS = (
    ("ransac", None, "gcm-ds", 500.0, ("sa", "scene_accuracy")),
    ("gcm-ds", 500.0, "gcm-gmm", 500.0, ("sa", "scene_accuracy", "ari")),
)
EXACT_SLACK = 1e-9


def _key(method, sigma, lambda_init, mask):
    return (method, float(sigma), None if lambda_init is None else float(lambda_init), mask)


@lru_cache(maxsize=1)
def _reference_file():
    return json.loads(REFERENCE_PATH.read_text(encoding="utf-8"))


@lru_cache(maxsize=1)
def load_reference():
    """Published values keyed by (method, sigma, lambda_init, mask)."""
    data = _reference_file()
    columns = data["columns"]
    table = {}
    for values in data["rows"]:
        row = dict(zip(columns, values))
        key = _key(row["method"], row["sigma"], row["lambda_init"], row["mask"])
        table[key] = {metric: row[metric] for metric in METRICS}
    return table


def load_acceptance():
    """Tolerance checks: a target with a tolerance, or a minimum."""
    return tuple(_reference_file().get("acceptance", ()))


def reference_for(method, sigma, lambda_init, mask):
    return load_reference().get(_key(method, sigma, lambda_init, mask))


@dataclass(frozen=True)
class AcceptanceCheck:
    cell: str
    metric: str
    measured: float
    target: str
    passed: bool

    @property
    def verdict(self):
        return "pass" if self.passed else "fail"


def _fmt(value, digits=3):
    return "" if value is None else f"{value:.{digits}f}"


def _lambda(value):
    return "" if value is None else format_number(value)


def _cell(method, sigma, lambda_init, mask):
    lam = "" if lambda_init is None else f" lambda={format_number(lambda_init)}"
    return f"{method} sigma={format_number(sigma)}{lam} [{mask}]"


def acceptance_checks(rows):
    """Checks that the rows of a run can answer; cells that were not run are skipped."""
    measured = {_key(r["method"], r["sigma"], r["lambda_init"], r["mask"]): r for r in rows}
    checks = []
    for spec in load_acceptance():
        key = _key(spec["method"], spec["sigma"], spec["lambda_init"], spec["mask"])
        row = measured.get(key)
        if row is None:
            continue
        value = row[spec["metric"]]
        if "minimum" in spec:
            target, passed = f">= {spec['minimum']:.3f}", value >= spec["minimum"]
        else:
            target = f"{spec['target']:.3f} ± {spec['tolerance']:.3f}"
            passed = abs(value - spec["target"]) <= spec["tolerance"] + EXACT_SLACK
        checks.append(AcceptanceCheck(_cell(*key), spec["metric"], value, target, passed))

    # the ground-truth mask must beat the full universe for the variational methods
    for (method, sigma, lam, mask), row in measured.items():
        masked = measured.get((method, sigma, lam, "gt"))
        if mask == "full" and lam is not None and masked is not None:
            checks.append(
                AcceptanceCheck(
                    _cell(method, sigma, lam, "gt"), "sa", masked["sa"], f"> {row['sa']:.3f} (full)",
                    masked["sa"] > row["sa"],
                )
            )

    sigmas = sorted({key[1] for key in measured})
    masks = sorted({key[3] for key in measured})
    for sigma in sigmas:
        for mask in masks:
            for better, better_lam, worse, worse_lam, metrics in ORDERINGS:
                a = measured.get((better, sigma, better_lam, mask))
                b = measured.get((worse, sigma, worse_lam, mask))
                if a is None or b is None:
                    continue
                for metric in metrics:
                    checks.append(
                        AcceptanceCheck(
                            _cell(better, sigma, better_lam, mask), metric, a[metric],
                            f"> {b[metric]:.3f} ({worse})", a[metric] > b[metric],
                        )
                    )
    return checks


def _acceptance_table(checks):
    if not checks:
        return ["No acceptance checks apply to the cells of this run."]
    lines = [
        "| cell | metric | measured | target | verdict |",
        "|---|---|---|---|---|",
    ]
    for check in checks:
        lines.append(f"| {check.cell} | {check.metric} | {_fmt(check.measured)} | {check.target} | {check.verdict} |")
    failed = sum(not check.passed for check in checks)
    lines += ["", f"{len(checks) - failed} of {len(checks)} checks pass."]
    return lines


def _results_table(rows):
    lines = [
        "| method | sigma | lambda | mask | SA | ARI | VI | scene acc. | scenes | wall time (s) "
        "| published SA | published ARI | published VI | published scene acc. |",
        "|---|---|---|---|---|---|---|---|---|---|---|---|---|---|",
    ]
    for row in rows:
        ref = reference_for(row["method"], row["sigma"], row["lambda_init"], row["mask"]) or {}
        lines.append(
            f"| {row['method']} | {format_number(row['sigma'])} | {_lambda(row['lambda_init'])} | {row['mask']} "
            f"| {_fmt(row['sa'])} | {_fmt(row['ari'])} | {_fmt(row['vi'])} | {_fmt(row['scene_accuracy'])} "
            f"| {row['scene_count']} | {row['wall_time']:.1f} "
            f"| {_fmt(ref.get('sa'))} | {_fmt(ref.get('ari'))} | {_fmt(ref.get('vi'))} "
            f"| {_fmt(ref.get('scene_accuracy'))} |"
        )
    return lines


def _ttest_table(tests):
    if not tests:
        return ["No method pairs to compare."]
    lines = [
        "| sigma | lambda | mask | metric | method A | method B | t | p |",
        "|---|---|---|---|---|---|---|---|",
    ]
    for test in tests:
        p_value = "" if test["p_value"] is None else f"{test['p_value']:.3g}"
        lines.append(
            f"| {format_number(test['sigma'])} | {_lambda(test['lambda_init'])} | {test['mask']} "
            f"| {test['metric']} | {test['method_a']} | {test['method_b']} | {_fmt(test['statistic'])} "
            f"| {p_value} |"
        )
    return lines


def _ccae_table(sigmas, masks):
    lines = [
        "| sigma | mask | SA | ARI | VI | scene acc. |",
        "|---|---|---|---|---|---|",
    ]
    for sigma in sigmas:
        for mask in masks:
            ref = reference_for("ccae", sigma, None, mask)
            if ref:
                lines.append(
                    f"| {format_number(sigma)} | {mask} | {_fmt(ref['sa'])} | {_fmt(ref['ari'])} "
                    f"| {_fmt(ref['vi'])} | {_fmt(ref['scene_accuracy'])} |"
                )
    return lines


def render_report(run):
    data = ExperimentRunSerializer(run).data
    rows, tests = data["rows"], data["tests"]
    sigmas = sorted({row["sigma"] for row in rows})
    masks = sorted({row["mask"] for row in rows})
    lines = [
        f"# Experiment run {data['id']}",
        "",
        f"- created: {data['created_at']}",
        f"- output directory: `{data['out_dir']}`",
        f"- master seed: {data['master_seed']}",
        f"- wall time: {data['wall_time']:.1f} s",
        f"- config: `{json.dumps(data['config'], sort_keys=True)}`",
        "",
        "## Results",
        "",
        *_results_table(rows),
        "",
        "## Acceptance",
        "",
        *_acceptance_table(acceptance_checks(rows)),
        "",
        "## Paired t-tests",
        "",
        *_ttest_table(tests),
        "",
        "## CCAE (published)",
        "",
        "CCAE is not run here; these values are the published ones.",
        "",
        *_ccae_table(sigmas, masks),
        "",
    ]
    return "\n".join(lines)


def write_report(run, path=None):
    path = Path(path) if path else Path(run.out_dir) / "report.md"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(render_report(run), encoding="utf-8")
    return path
