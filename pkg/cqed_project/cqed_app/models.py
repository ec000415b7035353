from django.db import models
from django.utils.translation import gettext_lazy as _


class ScenarioRun(models.Model):
    name = models.CharField(max_length=100, verbose_name=_("Scenario"))
    mode = models.CharField(max_length=20, verbose_name=_("Mode"))
    seed = models.BigIntegerField(verbose_name=_("Base Seed"))
    output_dir = models.CharField(
        max_length=500,
        verbose_name=_("Output Directory"),
        help_text=_("Directory holding the CSV files and manifest.json of the run."),
    )
    # Copy of manifest.json so runs stay browsable after the files move
    manifest = models.JSONField(default=dict, verbose_name=_("Manifest"))
    created_at = models.DateTimeField(auto_now_add=True, verbose_name=_("Created"))

    class Meta:
        ordering = ["-created_at", "-id"]

    def __str__(self):
        return f"{self.name} ({self.mode}, seed {self.seed})"
