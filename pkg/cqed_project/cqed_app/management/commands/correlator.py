from pathlib import Path

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from ...exceptions import (
    CollapseError,
    ConvergenceError,
    CorrelatorError,
    ParameterError,
    ScenarioError,
    StepSizeError,
    WeakFieldError,
)
from ...models import ScenarioRun
from ...runner import run
from ...scenarios import load_scenario

CONFIG_ERROR = 2
CONVERGENCE_ERROR = 3


class Command(BaseCommand):
    help = "Run a cavity QED scenario (preset name or key = value file) and write its data files."

    def add_arguments(self, parser):
        parser.add_argument("--scenario", required=True, help="Preset name (fig3, fig5, ...) or scenario file")
        parser.add_argument("--seed", type=int, help="Base seed of the trajectory streams")
        parser.add_argument("--workers", type=int, default=None, help="Worker processes for trajectories")
        parser.add_argument("--out", help="Output directory (default: CQED OUTPUT_ROOT/<scenario name>)")
        parser.add_argument("--starts", type=int, help="Number of start clicks to average over")
        parser.add_argument("--duration", type=float, help="Recorded duration of each trajectory in us")
        parser.add_argument("--nmax", help="Photon-number truncation, or 'auto'")
        parser.add_argument("--force", action="store_true", help="Overwrite a non-empty output directory")

    def handle(self, *args, **options):
        overrides = {
            "seed": options["seed"],
            "starts": options["starts"],
            "duration": options["duration"],
            "n_max": options["nmax"],
        }
        workers = options["workers"] or settings.CQED["WORKERS"]
        try:
            scenario = load_scenario(options["scenario"], overrides)
            out_dir = Path(options["out"] or Path(settings.CQED["OUTPUT_ROOT"]) / scenario.name)
            result = run(scenario, out_dir, force=options["force"], workers=workers)
        except (ParameterError, ScenarioError) as exc:
            raise CommandError(f"configuration error: {exc}", returncode=CONFIG_ERROR)
        except (ConvergenceError, StepSizeError, CollapseError, CorrelatorError, WeakFieldError) as exc:
            hint = getattr(exc, "hint", None)
            message = f"{type(exc).__name__}: {exc}"
            if hint:
                message += f" (hint: {hint})"
            raise CommandError(message, returncode=CONVERGENCE_ERROR)

        ScenarioRun.objects.create(
            name=scenario.name,
            mode=scenario.mode.value,
            seed=scenario.seed,
            output_dir=str(result.out_dir),
            manifest=result.manifest,
        )
        for name in result.files:
            self.stdout.write(f"  {result.out_dir / name}")
        self.stdout.write(self.style.SUCCESS(f"Scenario '{scenario.name}' ({scenario.mode.value}) finished."))
