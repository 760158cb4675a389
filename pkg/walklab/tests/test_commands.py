import json
import shutil
import tempfile
from io import StringIO
from pathlib import Path

import pandas as pd
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import TestCase

from walklab.forms import VerifyForm
from walklab.models import RunManifest
from walklab.utils import file_digest
from walklab.verification import SUITE_RUNNERS

SMALL_RUN = {'n': 3, 'steps': 6, 'walkers': 600, 'seed': 11, 'bins': 20, 'threads': 1}


class CommandTestCase(TestCase):

    def setUp(self):
        self.tmp = Path(tempfile.mkdtemp(prefix='kac-lab-'))
        self.addCleanup(shutil.rmtree, self.tmp, ignore_errors=True)

    def call(self, name, out, **options):
        stdout = StringIO()
        call_command(name, out=str(self.tmp / out), stdout=stdout, **options)
        return stdout.getvalue()

    def assertExitCode(self, code, name, out, **options):
        with self.assertRaises(CommandError) as raised:
            self.call(name, out, **options)
        self.assertEqual(raised.exception.returncode, code)


class SimulateCommandTests(CommandTestCase):

    def test_writes_curve_and_manifest(self):
        self.call('simulate', 'run', **SMALL_RUN)
        frame = pd.read_csv(self.tmp / 'run' / 'mixing_curve.csv')
        self.assertEqual(
            list(frame.columns[:6]), ['step', 'tv_marginal', 'tv_se', 'w2', 'h_eps_mass', 'eta_hat']
        )
        self.assertEqual(frame['step'].tolist(), list(range(7)))
        self.assertGreaterEqual(frame.loc[0, 'tv_marginal'], 0.95)
        self.assertEqual(frame.loc[0, 'eta_hat'], 1.0)

        manifest = json.loads((self.tmp / 'run' / 'manifest.json').read_text())
        self.assertEqual(manifest['command'], 'simulate')
        self.assertEqual(manifest['seed'], 11)
        self.assertEqual(manifest['digests']['mixing_curve.csv'], file_digest(self.tmp / 'run' / 'mixing_curve.csv'))

        record = RunManifest.objects.latest_for('simulate')
        self.assertEqual(record.exit_code, 0)
        self.assertEqual(record.parameters['walkers'], 600)

    def test_thread_count_does_not_change_output(self):
        self.call('simulate', 'one', **{**SMALL_RUN, 'walkers': 3000, 'threads': 1})
        self.call('simulate', 'four', **{**SMALL_RUN, 'walkers': 3000, 'threads': 4})
        self.assertEqual(
            (self.tmp / 'one' / 'mixing_curve.csv').read_bytes(),
            (self.tmp / 'four' / 'mixing_curve.csv').read_bytes(),
        )

    def test_config_file_with_flag_override(self):
        config = self.tmp / 'run.env'
        config.write_text('n=4\nsteps=3\nwalkers=800\nbins=20\nseed=5\n')
        self.call('simulate', 'configured', config=str(config), steps=2)
        manifest = json.loads((self.tmp / 'configured' / 'manifest.json').read_text())
        self.assertEqual(manifest['parameters']['n'], 4)
        self.assertEqual(manifest['parameters']['steps'], 2)
        self.assertEqual(manifest['parameters']['walkers'], 800)

    def test_missing_config_file(self):
        self.assertExitCode(2, 'simulate', 'missing', config=str(self.tmp / 'absent.env'), **SMALL_RUN)

    def test_invalid_parameters(self):
        self.assertExitCode(2, 'simulate', 'bad-eps', eps=1.5, **SMALL_RUN)
        self.assertExitCode(2, 'simulate', 'bad-w2', w2='exact:4096', **{**SMALL_RUN, 'walkers': 5000})
        self.assertExitCode(2, 'simulate', 'few-walkers', **{**SMALL_RUN, 'walkers': 100})

    def test_exact_transport_column_and_svg(self):
        self.call('simulate', 'w2', w2='exact:64', svg=True, **SMALL_RUN)
        frame = pd.read_csv(self.tmp / 'w2' / 'mixing_curve.csv')
        self.assertTrue(frame['w2'].notna().all())
        self.assertGreater(frame.loc[0, 'w2'], frame.loc[6, 'w2'])
        self.assertTrue((self.tmp / 'w2' / 'curve.svg').read_text().lstrip().startswith('<?xml'))

    def test_bare_sliced_transport_fits_small_ensembles(self):
        self.call('simulate', 'sliced', w2='sliced', **SMALL_RUN)
        manifest = json.loads((self.tmp / 'sliced' / 'manifest.json').read_text())
        self.assertEqual(manifest['parameters']['w2'], 'sliced:600')
        frame = pd.read_csv(self.tmp / 'sliced' / 'mixing_curve.csv')
        self.assertTrue(frame['w2'].notna().all())

    def test_manifest_records_stream_layout(self):
        with self.settings(KWL_BLOCK_SIZE=256, KWL_RENORMALIZE_EVERY=64):
            self.call('simulate', 'layout', **SMALL_RUN)
        parameters = json.loads((self.tmp / 'layout' / 'manifest.json').read_text())['parameters']
        self.assertEqual(parameters['block_size'], 256)
        self.assertEqual(parameters['renormalize_every'], 64)

    def test_decay_line(self):
        output = self.call('simulate', 'decay', **{**SMALL_RUN, 'steps': 14, 'walkers': 20_000})
        self.assertIn('decay x1sq: rate=', output)
        self.assertIn('(exact 0.500000)', output)
        self.assertIn('skip=0', output)
        short = self.call('simulate', 'short', **SMALL_RUN)
        self.assertIn('decay x1sq: observable', short)


class BoundCommandTests(CommandTestCase):

    def test_reference_schedule(self):
        output = self.call('bound', 'bound', n=10, delta=0.01)
        schedule = json.loads((self.tmp / 'bound' / 'schedule.json').read_text())
        self.assertEqual(schedule['k'], 1061)
        self.assertIn('summand: spectral', output)

    def test_delta_out_of_range(self):
        self.assertExitCode(2, 'bound', 'bad', n=10, delta=0.3)

    def test_envelope_violation(self):
        self.assertExitCode(3, 'bound', 'tight', n=10, delta=0.01, Cprime=1e-3)


class VerifyCommandTests(CommandTestCase):

    def test_fast_suites_pass(self):
        for suite in ('gamma', 'schedule'):
            self.call('verify', suite, suite=suite)
            report = json.loads((self.tmp / suite / 'report.json').read_text())
            self.assertEqual(report['violations'], 0)
            self.assertGreater(report['checks'], 0)

    def test_integral_inequality_sweep(self):
        self.call('verify', 'lemma3', suite='lemma3', draws=50, seed=3)
        report = json.loads((self.tmp / 'lemma3' / 'report.json').read_text())
        self.assertEqual(report['violations'], 0)
        self.assertEqual(report['suites'][0]['suite'], 'lemma3')

    def test_moment_suites_are_selectable(self):
        for suite in ('stationarity', 'decay'):
            self.assertEqual(VerifyForm(data={'suite': suite, 'draws': 1}).validated()['suite'], suite)
            self.assertIn(suite, SUITE_RUNNERS)


class DensityCommandTests(CommandTestCase):

    def test_whole_sphere_cap_is_flat(self):
        self.call('density', 'flat', cap_radius=3.2, steps=3, grid_cells=128)
        trace = pd.read_csv(self.tmp / 'flat' / 'sup_trace.csv')
        self.assertEqual(list(trace.columns), ['step', 'sup', 'min', 'mass', 'renormalization'])
        self.assertTrue(((trace['sup'] - 1.0).abs() < 1e-10).all())

    def test_small_cap_spreads(self):
        self.call('density', 'cap', cap_radius=0.6, steps=8, grid_cells=800, snapshot_every=4)
        trace = pd.read_csv(self.tmp / 'cap' / 'sup_trace.csv')
        self.assertTrue((trace['sup'].diff().dropna() < 0).all())
        snapshots = pd.read_csv(self.tmp / 'cap' / 'density_snapshots.csv')
        self.assertEqual(sorted(snapshots['step'].unique()), [0, 4, 8])

    def test_step_limit(self):
        self.assertExitCode(2, 'density', 'long', steps=500, grid_cells=128)


class ReplayCommandTests(CommandTestCase):

    def setUp(self):
        super().setUp()
        self.call('simulate', 'source', **SMALL_RUN)

    def test_replay_matches(self):
        output = self.call('replay', 'replayed', manifest=str(self.tmp / 'source'))
        self.assertIn('matches', output)
        replay = json.loads((self.tmp / 'replayed' / 'replay.json').read_text())
        self.assertEqual(replay['mismatched'], [])
        self.assertTrue(RunManifest.objects.for_command('replay').exists())

    def test_tampered_digest(self):
        path = self.tmp / 'source' / 'manifest.json'
        manifest = json.loads(path.read_text())
        manifest['digests']['mixing_curve.csv'] = '0' * 64
        path.write_text(json.dumps(manifest))
        self.assertExitCode(3, 'replay', 'tampered', manifest=str(path))

    def test_unreadable_manifest(self):
        self.assertExitCode(2, 'replay', 'nothing', manifest=str(self.tmp / 'absent'))

    def test_replay_by_run_id(self):
        record = RunManifest.objects.latest_for('simulate')
        self.assertEqual(record.as_manifest()['digests'], record.digests)
        output = self.call('replay', 'by-id', run=str(record.id))
        self.assertIn('matches', output)

    def test_unknown_run_id(self):
        self.assertExitCode(2, 'replay', 'unknown', run='not-a-run')
        self.assertExitCode(2, 'replay', 'missing', run='00000000-0000-0000-0000-000000000000')

    def test_replay_ignores_current_block_size(self):
        with self.settings(KWL_BLOCK_SIZE=256):
            self.call('simulate', 'blocked', **SMALL_RUN)
        with self.settings(KWL_BLOCK_SIZE=1024):
            output = self.call('replay', 'blocked-replay', manifest=str(self.tmp / 'blocked'))
        self.assertIn('matches', output)
        replay = json.loads((self.tmp / 'blocked-replay' / 'replay.json').read_text())
        self.assertEqual(replay['mismatched'], [])
