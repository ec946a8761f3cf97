from django.db import models


class ExperimentRun(models.Model):
    """Index row for one (mode, trajectory, repetition) run; steps live on disk."""

    STATUS_CHOICES = [
        ('RUNNING', 'Running'),
        ('COMPLETED', 'Completed'),
        ('FAILED', 'Failed'),
    ]

    run_id = models.CharField(max_length=255, unique=True, help_text='batch-mode-trajectory-repN')
    batch = models.CharField(max_length=100, db_index=True)
    mode = models.CharField(max_length=50)
    task = models.CharField(max_length=50, default='restaurants')
    trajectory = models.CharField(max_length=100, help_text='Trajectory or scenario id')
    repetition = models.PositiveIntegerField(default=0)
    seed = models.IntegerField(null=True, blank=True)
    status = models.CharField(max_length=20, choices=STATUS_CHOICES, default='RUNNING')
    error = models.TextField(blank=True, default='')
    config = models.JSONField(default=dict, help_text='Snapshot of the experiment config')
    hypotheses = models.JSONField(default=list)
    final_posterior = models.JSONField(null=True, blank=True)
    steps_completed = models.PositiveIntegerField(default=0)
    calls = models.PositiveIntegerField(default=0)
    prompt_tokens = models.PositiveIntegerField(default=0)
    completion_tokens = models.PositiveIntegerField(default=0)
    wall_clock = models.FloatField(default=0.0, help_text='Seconds')
    created_at = models.DateTimeField(auto_now_add=True)
    updated_at = models.DateTimeField(auto_now=True)

    class Meta:
        db_table = 'experiment_runs'
        verbose_name = 'Experiment Run'
        verbose_name_plural = 'Experiment Runs'
        ordering = ['batch', 'mode', 'trajectory', 'repetition']

    def __str__(self):
        return f"{self.run_id} ({self.status})"
