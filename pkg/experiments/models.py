from django.db import models


class ExperimentRun(models.Model):
    STATUS_CHOICES = [
        ("pending", "Pending"),
        ("running", "Running"),
        ("completed", "Completed"),
        ("failed", "Failed"),
    ]

    experiment = models.CharField(max_length=40)
    root_seed = models.CharField(max_length=20)  # uint64는 BigIntegerField 범위를 넘으므로 10진 문자열로 저장
    config = models.JSONField()
    status = models.CharField(max_length=20, choices=STATUS_CHOICES, default="pending")
    output_path = models.CharField(max_length=500, blank=True)
    summary = models.JSONField(null=True, blank=True)
    error = models.TextField(blank=True)
    created_at = models.DateTimeField(auto_now_add=True)
    finished_at = models.DateTimeField(null=True, blank=True)

    def __str__(self):
        return f"{self.experiment} (seed={self.root_seed}, {self.status})"
