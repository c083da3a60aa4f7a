from django.core.management.base import BaseCommand, CommandError

from capsules.models import ExperimentRun
from capsules.reporting import write_report


# Management command to re-render report.md from the run ledger
class Command(BaseCommand):
    help = "Render the markdown report of a recorded run (latest by default)"

    def add_arguments(self, parser):
        parser.add_argument("--run", dest="run_id", type=int, default=None)
        parser.add_argument("--out", default=None, help="Report path (default: <run dir>/report.md)")

    def handle(self, *args, **options):
        runs = ExperimentRun.objects.order_by("-created_at", "-id")
        if options["run_id"] is not None:
            run = runs.filter(id=options["run_id"]).first()
            if run is None:
                raise CommandError(f"Run {options['run_id']} does not exist")
        else:
            run = runs.first()
            if run is None:
                raise CommandError("No runs recorded yet")
        try:
            path = write_report(run, options["out"])
        except OSError as exc:
            raise CommandError(str(exc)) from exc
        self.stdout.write(self.style.SUCCESS(f"Report for run {run.id} written to {path}"))
