import django.db.models.deletion
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = []

    operations = [
        migrations.CreateModel(
            name="ExperimentRun",
            fields=[
                ("id", models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name="ID")),
                ("out_dir", models.CharField(max_length=1024)),
                ("master_seed", models.BigIntegerField(default=0)),
                ("config", models.JSONField(default=dict)),
                ("wall_time", models.FloatField(default=0.0)),
                ("created_at", models.DateTimeField(auto_now_add=True)),
            ],
            options={
                "indexes": [models.Index(fields=["created_at"], name="capsules_run_created_idx")],
            },
        ),
        migrations.CreateModel(
            name="ResultRecord",
            fields=[
                ("id", models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name="ID")),
                ("method", models.CharField(max_length=32)),
                ("sigma", models.FloatField()),
                ("lambda_init", models.FloatField(blank=True, null=True)),
                (
                    "mask",
                    models.CharField(
                        choices=[("full", "Full universe"), ("gt", "Ground-truth mask")],
                        default="full",
                        max_length=8,
                    ),
                ),
                ("sa", models.FloatField()),
                ("ari", models.FloatField()),
                ("vi", models.FloatField()),
                ("scene_accuracy", models.FloatField()),
                ("wall_time", models.FloatField(default=0.0)),
                ("scene_count", models.PositiveIntegerField()),
                (
                    "run",
                    models.ForeignKey(
                        on_delete=django.db.models.deletion.CASCADE,
                        related_name="rows",
                        to="capsules.experimentrun",
                    ),
                ),
            ],
            options={
                "indexes": [models.Index(fields=["method", "sigma"], name="capsules_row_method_idx")],
            },
        ),
        migrations.CreateModel(
            name="SignificanceTest",
            fields=[
                ("id", models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name="ID")),
                ("sigma", models.FloatField()),
                ("lambda_init", models.FloatField(blank=True, null=True)),
                ("mask", models.CharField(default="full", max_length=8)),
                ("metric", models.CharField(max_length=16)),
                ("method_a", models.CharField(max_length=32)),
                ("method_b", models.CharField(max_length=32)),
                ("statistic", models.FloatField(blank=True, null=True)),
                ("p_value", models.FloatField(blank=True, null=True)),
                (
                    "run",
                    models.ForeignKey(
                        on_delete=django.db.models.deletion.CASCADE,
                        related_name="tests",
                        to="capsules.experimentrun",
                    ),
                ),
            ],
        ),
    ]
