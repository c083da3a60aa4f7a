from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from capsules.exceptions import CapsuleError
from capsules.plotting import plot_scenes

from ._options import comma_list


# Management command to draw reconstructions of selected scenes
class Command(BaseCommand):
    help = "Write SVG reconstructions for scenes of a finished run"

    def add_arguments(self, parser):
        parser.add_argument("--run-dir", dest="run_dir", default=None)
        parser.add_argument("--scenes", type=comma_list(int), default=[])
        parser.add_argument("--method", default="gcm-ds")
        parser.add_argument("--sigma", type=float, default=0.0)
        parser.add_argument("--lambda", dest="lambda_init", type=float, default=500.0)

    def handle(self, *args, **options):
        run_dir = options["run_dir"] or settings.CAPSULES["OUTPUT_DIR"]
        try:
            paths = plot_scenes(
                run_dir,
                options["scenes"],
                options["method"],
                options["sigma"],
                options["lambda_init"],
            )
        except (CapsuleError, OSError) as exc:
            raise CommandError(str(exc)) from exc
        for path in paths:
            self.stdout.write(str(path))
        self.stdout.write(self.style.SUCCESS(f"Wrote {len(paths)} plot(s)"))
