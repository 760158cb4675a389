from pathlib import Path

from django.conf import settings
from django.core.exceptions import ValidationError
from django.core.management import call_command

from walklab.exceptions import ParameterError, PropertyViolation
from walklab.management.base import LabCommand
from walklab.models import RunManifest
from walklab.utils import file_digest, prepare_output_dir, read_manifest, record_run, write_json

REPLAYABLE = ('simulate', 'bound', 'density')


class Command(LabCommand):
    help = 'Re-run a recorded command from its manifest and compare CSV digests'

    config_file = False

    def add_lab_arguments(self, parser):
        source = parser.add_mutually_exclusive_group(required=True)
        source.add_argument('--manifest', help='manifest.json or the directory holding it')
        source.add_argument('--run', help='Id of a recorded run')
        parser.add_argument('--threads', type=int, help='Override the recorded thread count')

    def load(self, options):
        """The recorded manifest and the directory its outputs were written to."""
        if options.get('run'):
            try:
                record = RunManifest.objects.get(pk=options['run'])
            except (RunManifest.DoesNotExist, ValidationError):
                raise ParameterError(f"no recorded run {options['run']!r}")
            return record.as_manifest(), Path(record.output_dir)
        manifest_path = Path(options['manifest'])
        manifest = read_manifest(manifest_path)
        return manifest, manifest_path if manifest_path.is_dir() else manifest_path.parent

    def run(self, options, config):
        manifest, source = self.load(options)
        command = manifest.get('command')
        if command not in REPLAYABLE:
            raise ParameterError(f"cannot replay a {command!r} run")

        out = prepare_output_dir(options.get('out') or f'{source}-replay', 'replay')
        parameters = dict(manifest['parameters'])
        if options.get('threads') and 'threads' in parameters:
            parameters['threads'] = options['threads']
        parameters = {key: value for key, value in parameters.items() if value is not None and value is not False}
        call_command(command, out=str(out), stdout=self.stdout, **parameters)

        compared, mismatched = {}, []
        for name, digest in manifest['digests'].items():
            if not name.endswith('.csv'):
                continue
            replayed = file_digest(out / name)
            compared[name] = {'recorded': digest, 'replayed': replayed}
            if replayed != digest:
                mismatched.append(name)

        write_json(out / 'replay.json', {'source': str(source), 'files': compared, 'mismatched': mismatched})
        if settings.KWL_RECORD_RUNS:
            record_run({
                'command': 'replay',
                'parameters': {'manifest': options.get('manifest'), 'run': options.get('run'), 'threads': options.get('threads')},
                'seed': manifest.get('seed'),
                'version': manifest.get('version', ''),
                'duration_seconds': self.elapsed,
                'digests': {name: entry['replayed'] for name, entry in compared.items()},
                'exit_code': 3 if mismatched else 0,
            }, out)
        if mismatched:
            raise PropertyViolation(f"replay differs from the recorded run in {', '.join(mismatched)}")
        self.stdout.write(self.style.SUCCESS(f'Replay of {command} matches on {len(compared)} CSV file(s)'))
