import math
from pathlib import Path

import environ
from django import forms
from django.conf import settings
from django.core.exceptions import ValidationError

from .exact_bounds import SpectralRate
from .exceptions import ParameterError
from .kac_walk import STARTS
from .mixing_metrics import EXACT_TRANSPORT_MAX, OBSERVABLES
from .sphere_core import UINT64_LIMIT

SUITES = ['lemma3', 'lemma1', 'grid', 'gamma', 'eta', 'schedule', 'claim2', 'stationarity', 'decay', 'all']


def read_config_file(path):
    """Parse a key=value file the way .env files are read.

    Keys are flag names with dashes replaced by underscores.
    """
    path = Path(path)
    if not path.is_file():
        raise ParameterError(f"config file {path} does not exist")
    # read_env writes into the class-level ENVIRON mapping; give it a private one
    config_env = type('ConfigFile', (environ.Env,), {'ENVIRON': {}})
    config_env.read_env(str(path), overwrite=True)
    return {key.lower().replace('-', '_'): value for key, value in config_env.ENVIRON.items()}


class LabForm(forms.Form):
    """Flag validation shared by the lab commands.

    Values come from the form defaults, then the ``--config`` file, then
    explicitly given flags, later sources winning.
    """

    defaults = {}

    @classmethod
    def from_options(cls, options, config=None):
        data = dict(cls.defaults)
        data.update({key: value for key, value in (config or {}).items() if key in cls.base_fields})
        data.update({
            key: value for key, value in options.items()
            if key in cls.base_fields and value is not None and value is not False
        })
        return cls(data=data)

    def validated(self):
        if not self.is_valid():
            errors = '; '.join(
                f"{field}: {' '.join(messages)}" for field, messages in self.errors.items()
            )
            raise ParameterError(errors)
        return self.cleaned_data


class SeededForm(LabForm):
    seed = forms.IntegerField(min_value=0, max_value=UINT64_LIMIT - 1, required=False)
    threads = forms.IntegerField(min_value=1, required=False)

    def clean_seed(self):
        seed = self.cleaned_data.get('seed')
        return settings.KWL_SEED if seed is None else seed

    def clean_threads(self):
        threads = self.cleaned_data.get('threads')
        return settings.KWL_THREADS if threads is None else threads


class SimulateForm(SeededForm):
    defaults = {
        'start': 'e1',
        'record_every': 1,
        'eps': 0.05,
        'w2': 'off',
        'bins': 50,
        'observables': 'x1,x1sq,x1quad',
    }

    n = forms.IntegerField(min_value=2)
    steps = forms.IntegerField(min_value=0)
    walkers = forms.IntegerField(min_value=1)
    start = forms.ChoiceField(choices=[(start, start) for start in STARTS])
    record_every = forms.IntegerField(min_value=1)
    eps = forms.FloatField()
    w2 = forms.CharField()
    bins = forms.IntegerField(min_value=2)
    observables = forms.CharField()
    svg = forms.BooleanField(required=False)
    block_size = forms.IntegerField(min_value=1, required=False)
    renormalize_every = forms.IntegerField(min_value=1, required=False)

    def clean_eps(self):
        eps = self.cleaned_data['eps']
        if not 0.0 < eps < 1.0:
            raise ValidationError('eps must lie in (0, 1).')
        return eps

    def clean_w2(self):
        """off, sliced, sliced:N or exact:N; returns (mode, cloud size).

        A bare ``sliced`` leaves the size to ``clean``, which takes
        min(walkers, 2048).
        """
        spec = self.cleaned_data['w2'].strip().lower()
        if spec == 'off':
            return ('off', 0)
        mode, _, size = spec.partition(':')
        if mode not in ('exact', 'sliced'):
            raise ValidationError('w2 must be off, exact:N or sliced[:N].')
        if mode == 'exact' and not size:
            raise ValidationError('exact transport needs a cloud size, e.g. exact:1024.')
        try:
            size = int(size) if size else None
        except ValueError:
            raise ValidationError(f'{size!r} is not a cloud size.')
        if size is None:
            return (mode, None)
        if size < 2:
            raise ValidationError('the transport cloud needs at least 2 points.')
        if mode == 'exact' and size > EXACT_TRANSPORT_MAX:
            raise ValidationError(f'exact transport is capped at {EXACT_TRANSPORT_MAX} points.')
        return (mode, size)

    def clean_observables(self):
        names = [name.strip() for name in self.cleaned_data['observables'].split(',') if name.strip()]
        unknown = sorted(set(names) - set(OBSERVABLES))
        if unknown:
            raise ValidationError(f"unknown observables: {', '.join(unknown)}.")
        return tuple(names)

    def clean_block_size(self):
        size = self.cleaned_data.get('block_size')
        return settings.KWL_BLOCK_SIZE if size is None else size

    def clean_renormalize_every(self):
        every = self.cleaned_data.get('renormalize_every')
        return settings.KWL_RENORMALIZE_EVERY if every is None else every

    def clean(self):
        cleaned_data = super().clean()
        steps, record_every = cleaned_data.get('steps'), cleaned_data.get('record_every')
        if steps and record_every and record_every > steps:
            self.add_error('record_every', 'record_every cannot exceed steps.')
        walkers, bins = cleaned_data.get('walkers'), cleaned_data.get('bins')
        if walkers and bins and walkers < 10 * bins:
            self.add_error('walkers', f'the x_1 histogram needs at least {10 * bins} walkers.')
        w2 = cleaned_data.get('w2')
        if walkers and w2 and w2[1] is None:
            w2 = cleaned_data['w2'] = (w2[0], min(walkers, EXACT_TRANSPORT_MAX))
        if walkers and w2 and w2[1] > walkers:
            self.add_error('w2', 'the transport cloud cannot be larger than the ensemble.')
        return cleaned_data


class BoundForm(LabForm):
    defaults = {'C': 1.0, 'Cprime': 1.0, 'rate': SpectralRate.PAPER_ONE_OVER_N.value}

    n = forms.IntegerField(min_value=3)
    delta = forms.FloatField()
    C = forms.FloatField()
    Cprime = forms.FloatField()
    rate = forms.ChoiceField(choices=[(rate.value, rate.value) for rate in SpectralRate])

    def clean_delta(self):
        delta = self.cleaned_data['delta']
        if not 0.0 < delta < 1.0 / math.e:
            raise ValidationError('delta must lie in (0, 1/e).')
        return delta

    def clean_C(self):
        C = self.cleaned_data['C']
        if C <= 0:
            raise ValidationError('C must be positive.')
        return C

    def clean_Cprime(self):
        Cprime = self.cleaned_data['Cprime']
        if Cprime <= 0:
            raise ValidationError('Cprime must be positive.')
        return Cprime


class VerifyForm(SeededForm):
    defaults = {'suite': 'all', 'draws': 10000}

    suite = forms.ChoiceField(choices=[(suite, suite) for suite in SUITES])
    draws = forms.IntegerField(min_value=1)
    grid_cells = forms.IntegerField(min_value=8, required=False)
    walkers = forms.IntegerField(min_value=1000, required=False)

    def clean_grid_cells(self):
        cells = self.cleaned_data.get('grid_cells')
        return settings.KWL_GRID_CELLS if cells is None else cells


class DensityForm(LabForm):
    defaults = {'cap_radius': 0.3, 'steps': 20, 'snapshot_every': 5}

    cap_radius = forms.FloatField()
    steps = forms.IntegerField(min_value=0, max_value=200)
    grid_cells = forms.IntegerField(min_value=8, required=False)
    snapshot_every = forms.IntegerField(min_value=1)

    def clean_cap_radius(self):
        radius = self.cleaned_data['cap_radius']
        if radius <= 0:
            raise ValidationError('cap radius must be positive.')
        return radius

    def clean_grid_cells(self):
        cells = self.cleaned_data.get('grid_cells')
        return settings.KWL_GRID_CELLS if cells is None else cells
