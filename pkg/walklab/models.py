from django.db import models
import uuid

from .managers import RunManifestManager


class RunManifest(models.Model):
    """One invocation of a lab command and the files it wrote."""

    COMMAND_CHOICES = [
        ('simulate', 'Simulate'),
        ('bound', 'Bound'),
        ('verify', 'Verify'),
        ('density', 'Density'),
        ('replay', 'Replay'),
    ]

    id = models.UUIDField(primary_key=True, default=uuid.uuid4, editable=False)
    command = models.CharField(max_length=20, choices=COMMAND_CHOICES)
    parameters = models.JSONField(default=dict)
    # master seeds are unsigned 64-bit
    seed = models.DecimalField(max_digits=20, decimal_places=0, null=True, blank=True)
    version = models.CharField(max_length=20)
    duration_seconds = models.FloatField(default=0.0)
    digests = models.JSONField(default=dict)
    output_dir = models.CharField(max_length=500)
    exit_code = models.PositiveSmallIntegerField(default=0)
    created_at = models.DateTimeField(auto_now_add=True)

    objects = RunManifestManager()

    class Meta:
        ordering = ['-created_at']
        indexes = [models.Index(fields=['command', '-created_at'], name='walklab_run_command_8c1f2e_idx')]

    def __str__(self):
        return f"{self.command} ({self.created_at:%Y-%m-%d %H:%M})"

    def as_manifest(self):
        return {
            'id': str(self.id),
            'command': self.command,
            'parameters': self.parameters,
            'seed': int(self.seed) if self.seed is not None else None,
            'version': self.version,
            'duration_seconds': self.duration_seconds,
            'digests': self.digests,
            'exit_code': self.exit_code,
        }
