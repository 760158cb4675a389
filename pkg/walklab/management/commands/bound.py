from walklab.exact_bounds import mixing_bound_schedule
from walklab.forms import BoundForm
from walklab.management.base import LabCommand
from walklab.utils import format_table, prepare_output_dir, write_json, write_manifest


class Command(LabCommand):
    help = 'Choose k, epsilon and l for the total variation bound and report each summand'

    def add_lab_arguments(self, parser):
        parser.add_argument('--n', type=int)
        parser.add_argument('--delta', type=float, help='Target accuracy, in (0, 1/e)')
        parser.add_argument('--C', type=float, help='Constant of the density bound (default 1)')
        parser.add_argument('--Cprime', type=float, help='Constant of the step envelope (default 1)')
        parser.add_argument('--rate', choices=['paper-2', 'paper-1overN', 'exact-gap'])

    def run(self, options, config):
        params = BoundForm.from_options(options, config).validated()
        out = prepare_output_dir(self.output_option(options, config), 'bound')
        schedule = mixing_bound_schedule(
            params['n'], params['delta'], C=params['C'], Cprime=params['Cprime'], rate=params['rate']
        )
        path = write_json(out / 'schedule.json', schedule.as_dict())
        write_manifest(out, 'bound', dict(params), None, self.elapsed, [path])

        rows = [
            ('k', schedule.k),
            ('epsilon', f'{schedule.epsilon:.6e}'),
            ('l', schedule.l),
            ('total', schedule.total),
            ('k (first summand only)', schedule.k_sharp),
        ]
        rows += [(f'summand: {name}', f'{value:.6e}') for name, value in schedule.breakdown.summands.items()]
        rows += [
            ('bound', f'{schedule.bound_value:.6e}'),
            ("C' n^5 (ln n)^3 (ln 1/delta)^3", f'{schedule.envelope_cubed:.6e}'),
            ("C' n^5 (ln n)^2 (ln 1/delta)^2", f'{schedule.envelope_squared:.6e}'),
            ('n^5 ln n', f'{schedule.envelope_abstract:.6e}'),
        ]
        self.stdout.write(format_table(rows, ['quantity', 'value']))
