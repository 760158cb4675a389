from django.db import models


class RunManifestManager(models.Manager):
    """Queries over recorded command runs"""

    def for_command(self, command):
        return self.get_queryset().filter(command=command)

    def latest_for(self, command):
        return self.for_command(command).order_by('-created_at').first()
