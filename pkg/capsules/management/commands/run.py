import json
import logging
from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from capsules.exceptions import CapsuleError
from capsules.pipeline import ExperimentConfig, format_number, record_run, run_experiment
from capsules.reporting import write_report
from capsules.serializers import BACKEND_CHOICES, BASIS_CHOICES, ExperimentConfigSerializer

from ._options import comma_list

logger = logging.getLogger(__name__)


# Management command to run an experiment grid and record it
class Command(BaseCommand):
    help = "Run GCM-DS, GCM-GMM and RANSAC over generated datasets and write result tables"

    def add_arguments(self, parser):
        parser.add_argument("--methods", type=comma_list(), default=None)
        parser.add_argument("--sigma", dest="sigmas", type=comma_list(float), default=None)
        parser.add_argument("--lambda", dest="lambdas", type=comma_list(float), default=None)
        parser.add_argument("--mask", dest="masks", type=comma_list(), default=None)
        parser.add_argument("--draws", type=int, default=None)
        parser.add_argument("--seed", type=int, default=None)
        parser.add_argument("--restarts", type=int, default=None)
        parser.add_argument("--workers", type=int, default=None)
        parser.add_argument("--backend", choices=BACKEND_CHOICES, default=None)
        parser.add_argument("--basis-policy", dest="basis_policy", choices=BASIS_CHOICES, default=None)
        parser.add_argument("--ransac-tol", dest="ransac_tol", type=float, default=None)
        parser.add_argument("--refine", dest="ransac_refine", action="store_const", const=True, default=None)
        parser.add_argument("--relaxed-tols", dest="ransac_relaxed_tols", type=comma_list(float), default=None)
        parser.add_argument("--dataset", default=None, help="Use an existing dataset file instead of generating")
        parser.add_argument("--config", default=None, help="JSON experiment config file")
        parser.add_argument("--out", default=None, help="Output directory")

    def _load_config_file(self, path):
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise CommandError(f"Cannot read config {path}: {exc}") from exc
        serializer = ExperimentConfigSerializer(data=data)
        if not serializer.is_valid():
            raise CommandError(f"Invalid config {path}: {serializer.errors}")
        return dict(serializer.validated_data)

    def handle(self, *args, **options):
        file_options = self._load_config_file(options["config"]) if options["config"] else {}
        flags = {
            key: options[key]
            for key in (
                "methods", "sigmas", "lambdas", "masks", "draws", "seed", "restarts", "workers",
                "backend", "basis_policy", "ransac_tol", "ransac_refine", "ransac_relaxed_tols",
                "dataset", "out",
            )
        }
        try:
            cfg = ExperimentConfig.build(file_options, **flags)
            report = run_experiment(cfg)
        except (CapsuleError, OSError) as exc:
            raise CommandError(str(exc)) from exc

        run = record_run(report)
        report_path = write_report(run, report.out_dir / "report.md")
        if not report.rows:
            self.stderr.write(self.style.WARNING("No result rows were produced"))
        for row in report.rows:
            lam = "" if row.lambda_init is None else f" lambda={format_number(row.lambda_init)}"
            self.stdout.write(
                f"{row.method} sigma={format_number(row.sigma)}{lam} [{row.mask}]: "
                f"SA={row.sa:.3f} ARI={row.ari:.3f} VI={row.vi:.3f} "
                f"scene acc={row.scene_accuracy:.3f} ({row.scene_count} scenes)"
            )
        self.stdout.write(self.style.SUCCESS(f"Run {run.id} written to {report.out_dir} ({report_path.name})"))
