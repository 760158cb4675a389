# Generated by Django 5.2.7 on 2026-03-02 10:14

import uuid
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = []

    operations = [
        migrations.CreateModel(
            name='RunManifest',
            fields=[
                ('id', models.UUIDField(default=uuid.uuid4, editable=False, primary_key=True, serialize=False)),
                ('command', models.CharField(choices=[('simulate', 'Simulate'), ('bound', 'Bound'), ('verify', 'Verify'), ('density', 'Density'), ('replay', 'Replay')], max_length=20)),
                ('parameters', models.JSONField(default=dict)),
                ('seed', models.DecimalField(blank=True, decimal_places=0, max_digits=20, null=True)),
                ('version', models.CharField(max_length=20)),
                ('duration_seconds', models.FloatField(default=0.0)),
                ('digests', models.JSONField(default=dict)),
                ('output_dir', models.CharField(max_length=500)),
                ('exit_code', models.PositiveSmallIntegerField(default=0)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
            ],
            options={
                'ordering': ['-created_at'],
                'indexes': [models.Index(fields=['command', '-created_at'], name='walklab_run_command_8c1f2e_idx')],
            },
        ),
    ]
