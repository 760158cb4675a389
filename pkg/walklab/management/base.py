import logging
import time

from django.core.management.base import BaseCommand, CommandError

from walklab.exceptions import KacLabError
from walklab.forms import read_config_file

logger = logging.getLogger('walklab.commands')


class LabCommand(BaseCommand):
    """Base for the lab commands.

    Subclasses implement ``run(options, config)`` and return nothing; lab
    errors are logged and re-raised as CommandError carrying the exit code
    of the error class (2 parameters, 3 property violation, 4 resource).
    """

    config_file = True

    def add_arguments(self, parser):
        parser.add_argument('--out', help='Output directory (default: KWL_OUTPUT_DIR/<command>)')
        if self.config_file:
            parser.add_argument('--config', help='key=value file of flag values; flags take precedence')
        self.add_lab_arguments(parser)

    def add_lab_arguments(self, parser):
        pass

    def handle(self, *args, **options):
        self.started = time.perf_counter()
        try:
            config = read_config_file(options['config']) if options.get('config') else {}
            self.run(options, config)
        except KacLabError as e:
            logger.error(f"{self.command_name} failed: {e}")
            raise CommandError(str(e), returncode=e.exit_code)

    @property
    def command_name(self):
        return self.__module__.rsplit('.', 1)[-1]

    @property
    def elapsed(self):
        return time.perf_counter() - self.started

    def output_option(self, options, config):
        return options.get('out') or config.get('out')

    def run(self, options, config):
        raise NotImplementedError
