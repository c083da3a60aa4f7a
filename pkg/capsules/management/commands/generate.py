from pathlib import Path

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from capsules.datasets import write_dataset
from capsules.exceptions import CapsuleError
from capsules.pipeline import format_number
from capsules.scenegen import GenConfig, generate_dataset


# Management command to write a constellation dataset
class Command(BaseCommand):
    help = "Generate a line-delimited constellation dataset"

    def add_arguments(self, parser):
        parser.add_argument("--sigma", type=float, default=0.0, help="Template corruption noise")
        parser.add_argument("--draws", type=int, default=None, help="Number of scene draws")
        parser.add_argument("--seed", type=int, default=None, help="Master seed")
        parser.add_argument("--workers", type=int, default=None)
        parser.add_argument("--out", default=None, help="Output file")

    def handle(self, *args, **options):
        defaults = settings.CAPSULES
        sigma = options["sigma"]
        draws = options["draws"] if options["draws"] is not None else defaults["DRAWS"]
        seed = options["seed"] if options["seed"] is not None else defaults["SEED"]
        workers = options["workers"] or defaults["WORKERS"]
        out = options["out"] or Path(defaults["OUTPUT_DIR"]) / f"dataset_sigma{format_number(sigma)}.jsonl"

        try:
            scenes = generate_dataset(GenConfig(sigma=sigma, draws=draws), seed, workers)
            path = write_dataset(out, scenes)
        except (CapsuleError, OSError) as exc:
            raise CommandError(str(exc)) from exc

        if not scenes:
            self.stderr.write(self.style.WARNING(f"No non-empty scenes from {draws} draws; wrote an empty dataset"))
        self.stdout.write(self.style.SUCCESS(f"Wrote {len(scenes)} non-empty scenes to {path}"))
