# Generated by Django 5.0.2

from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = []

    operations = [
        migrations.CreateModel(
            name="ScenarioRun",
            fields=[
                (
                    "id",
                    models.BigAutoField(
                        auto_created=True,
                        primary_key=True,
                        serialize=False,
                        verbose_name="ID",
                    ),
                ),
                ("name", models.CharField(max_length=100, verbose_name="Scenario")),
                ("mode", models.CharField(max_length=20, verbose_name="Mode")),
                ("seed", models.BigIntegerField(verbose_name="Base Seed")),
                (
                    "output_dir",
                    models.CharField(
                        help_text="Directory holding the CSV files and manifest.json of the run.",
                        max_length=500,
                        verbose_name="Output Directory",
                    ),
                ),
                ("manifest", models.JSONField(default=dict, verbose_name="Manifest")),
                ("created_at", models.DateTimeField(auto_now_add=True, verbose_name="Created")),
            ],
            options={
                "ordering": ["-created_at", "-id"],
            },
        ),
    ]
