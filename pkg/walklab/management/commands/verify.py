from walklab.exceptions import PropertyViolation
from walklab.forms import SUITES, VerifyForm
from walklab.management.base import LabCommand
from walklab.utils import format_table, prepare_output_dir, write_json, write_manifest
from walklab.verification import run_suites

DEFAULT_WALKERS = 100_000


class Command(LabCommand):
    help = 'Run numerical property suites and write report.json'

    def add_lab_arguments(self, parser):
        parser.add_argument('--suite', choices=SUITES)
        parser.add_argument('--draws', type=int, help='Random draws of the integral inequality sweep')
        parser.add_argument('--seed', type=int)
        parser.add_argument('--walkers', type=int, help='Walkers of the Monte Carlo suites')
        parser.add_argument('--grid-cells', type=int)
        parser.add_argument('--threads', type=int)

    def run(self, options, config):
        params = VerifyForm.from_options(options, config).validated()
        out = prepare_output_dir(self.output_option(options, config), 'verify')
        walkers = params['walkers'] or DEFAULT_WALKERS

        reports = run_suites(
            params['suite'],
            draws=params['draws'],
            seed=params['seed'],
            walkers=walkers,
            grid_cells=params['grid_cells'],
            threads=params['threads'],
        )
        violations = sum(report.violations for report in reports)
        payload = {
            'suite': params['suite'],
            'seed': params['seed'],
            'checks': sum(report.checks for report in reports),
            'violations': violations,
            'suites': [report.as_dict() for report in reports],
        }
        path = write_json(out / 'report.json', payload)
        parameters = {**params, 'walkers': walkers}
        write_manifest(out, 'verify', parameters, params['seed'], self.elapsed, [path], exit_code=3 if violations else 0)

        rows = [
            (r.name, r.checks, r.violations, f'{r.worst_margin:.3e}', f'{r.duration_seconds:.1f}s') for r in reports
        ]
        self.stdout.write(format_table(rows, ['suite', 'checks', 'violations', 'worst margin', 'time']))
        if violations:
            raise PropertyViolation(f"{violations} violation(s); see {path}")
        self.stdout.write(self.style.SUCCESS('All checks passed'))
