import os
import sys
import tempfile
from pathlib import Path

import django


# Stress script: datasets and cells must not depend on worker scheduling
def setup_django():
    sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
    os.environ.setdefault("DJANGO_SETTINGS_MODULE", "core.settings")
    django.setup()


def run_once(out_dir, workers):
    from capsules.pipeline import ExperimentConfig, run_experiment

    cfg = ExperimentConfig.build(
        methods=["gcm-ds", "ransac"],
        sigmas=[0.0, 0.1],
        lambdas=[500.0],
        masks=["full", "gt"],
        draws=48,
        seed=11,
        restarts=2,
        workers=workers,
        backend="pool",
        out=str(out_dir),
    )
    run_experiment(cfg)
    return {
        path.relative_to(out_dir): path.read_bytes()
        for path in sorted(out_dir.rglob("*"))
        if path.is_file()
    }


if __name__ == "__main__":
    setup_django()

    with tempfile.TemporaryDirectory() as tmp:
        inline = run_once(Path(tmp) / "inline", workers=1)
        pooled = run_once(Path(tmp) / "pooled", workers=8)

    mismatched = sorted(str(name) for name in inline.keys() | pooled.keys() if inline.get(name) != pooled.get(name))

    print(f"Files compared: {len(inline)}")
    print(f"Mismatched: {len(mismatched)}")
    for name in mismatched:
        print(f"  {name}")
    sys.exit(1 if mismatched else 0)
