from django.db import models


# Models for the experiment run ledger


# ExperimentRun Model
class ExperimentRun(models.Model):
    out_dir = models.CharField(max_length=1024)
    master_seed = models.BigIntegerField(default=0)
    config = models.JSONField(default=dict)
    wall_time = models.FloatField(default=0.0)
    created_at = models.DateTimeField(auto_now_add=True)

    class Meta:
        indexes = [
            models.Index(fields=["created_at"], name="capsules_run_created_idx"),
        ]

    def __str__(self):
        return f"Run {self.id} ({self.out_dir})"


# ResultRecord Model: one row of results.csv
class ResultRecord(models.Model):
    MASK_CHOICES = [
        ("full", "Full universe"),
        ("gt", "Ground-truth mask"),
    ]

    run = models.ForeignKey(ExperimentRun, related_name="rows", on_delete=models.CASCADE)
    method = models.CharField(max_length=32)
    sigma = models.FloatField()
    lambda_init = models.FloatField(null=True, blank=True)
    mask = models.CharField(max_length=8, choices=MASK_CHOICES, default="full")
    sa = models.FloatField()
    ari = models.FloatField()
    vi = models.FloatField()
    scene_accuracy = models.FloatField()
    wall_time = models.FloatField(default=0.0)
    scene_count = models.PositiveIntegerField()

    class Meta:
        indexes = [
            models.Index(fields=["method", "sigma"], name="capsules_row_method_idx"),
        ]

    def save(self, *args, **kwargs):
        if not 0.0 <= self.sa <= 1.0:
            raise ValueError("Invariant violated: segmentation accuracy must lie in [0, 1]")
        if not 0.0 <= self.scene_accuracy <= 1.0:
            raise ValueError("Invariant violated: scene accuracy must lie in [0, 1]")
        if self.ari > 1.0 + 1e-12:
            raise ValueError("Invariant violated: adjusted Rand index cannot exceed 1")
        if self.vi < -1e-12:
            raise ValueError("Invariant violated: variation of information must be nonnegative")
        super().save(*args, **kwargs)

    def __str__(self):
        return f"{self.method} sigma={self.sigma} lambda={self.lambda_init} ({self.mask})"


# SignificanceTest Model: paired t-test between two method cells
class SignificanceTest(models.Model):
    run = models.ForeignKey(ExperimentRun, related_name="tests", on_delete=models.CASCADE)
    sigma = models.FloatField()
    lambda_init = models.FloatField(null=True, blank=True)
    mask = models.CharField(max_length=8, default="full")
    metric = models.CharField(max_length=16)
    method_a = models.CharField(max_length=32)
    method_b = models.CharField(max_length=32)
    statistic = models.FloatField(null=True, blank=True)
    p_value = models.FloatField(null=True, blank=True)

    def __str__(self):
        return f"{self.method_a} vs {self.method_b} on {self.metric}"
