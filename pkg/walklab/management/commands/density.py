import pandas as pd

from walklab.density_lab import SphereGrid, cap_density, iterate_density, kac_grid_operator
from walklab.forms import DensityForm
from walklab.management.base import LabCommand
from walklab.utils import prepare_output_dir, write_csv, write_manifest


class Command(LabCommand):
    help = 'Evolve a cap density on the S^2 grid and trace its sup and min'

    def add_lab_arguments(self, parser):
        parser.add_argument('--cap-radius', type=float, help='Geodesic radius of the starting cap around e1')
        parser.add_argument('--steps', type=int, help='Kernel applications (at most 200)')
        parser.add_argument('--grid-cells', type=int, help='Approximate number of grid cells')
        parser.add_argument('--snapshot-every', type=int, help='Write the full density every this many steps')

    def run(self, options, config):
        params = DensityForm.from_options(options, config).validated()
        out = prepare_output_dir(self.output_option(options, config), 'density')
        grid = SphereGrid.from_cells(params['grid_cells'])
        operator = kac_grid_operator(grid)
        start = cap_density(grid, params['cap_radius'])

        trace, snapshots = [], []
        for k, g in enumerate(iterate_density(start, params['steps'], operator)):
            trace.append({'step': k, 'sup': g.sup, 'min': g.min, 'mass': g.mass, 'renormalization': g.renormalization})
            if k % params['snapshot_every'] == 0 or k == params['steps']:
                frame = g.to_frame()
                frame.insert(0, 'step', k)
                snapshots.append(frame)

        files = [
            write_csv(out / 'density_snapshots.csv', pd.concat(snapshots, ignore_index=True)),
            write_csv(out / 'sup_trace.csv', pd.DataFrame(trace, columns=['step', 'sup', 'min', 'mass', 'renormalization'])),
        ]
        write_manifest(out, 'density', dict(params), None, self.elapsed, files)
        self.stdout.write(
            f"{grid.size} cells: sup {trace[0]['sup']:.4f} -> {trace[-1]['sup']:.4f}, "
            f"min {trace[0]['min']:.4f} -> {trace[-1]['min']:.4f}"
        )
        self.stdout.write(self.style.SUCCESS(f'Wrote density traces to {out}'))
