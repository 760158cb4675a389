"""Output writers and run records for the lab commands."""
import hashlib
import json
import logging
import math
from pathlib import Path

import matplotlib

matplotlib.use('Agg')
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from django.conf import settings  # noqa: E402
from django.db import DatabaseError  # noqa: E402

import kac_lab  # noqa: E402

from .exceptions import ParameterError  # noqa: E402

logger = logging.getLogger(__name__)

FLOAT_FORMAT = '%.17g'
MANIFEST_NAME = 'manifest.json'


def prepare_output_dir(out, command):
    """Resolve and create the output directory; defaults under KWL_OUTPUT_DIR."""
    path = Path(out) if out else Path(settings.KWL_OUTPUT_DIR) / command
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ParameterError(f"output directory {path} is not writable: {e}")
    probe = path / '.write-probe'
    try:
        probe.write_text('', encoding='utf-8')
        probe.unlink()
    except OSError as e:
        raise ParameterError(f"output directory {path} is not writable: {e}")
    return path


def jsonable(value):
    """Plain JSON types; non-finite floats become strings."""
    if isinstance(value, dict):
        return {str(key): jsonable(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(item) for item in value]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    if isinstance(value, Path):
        return str(value)
    return value


def write_json(path, payload):
    path = Path(path)
    path.write_text(json.dumps(jsonable(payload), indent=2, sort_keys=True) + '\n', encoding='utf-8')
    return path


def write_csv(path, frame):
    """CSV with a fixed header row and 17 significant digits."""
    path = Path(path)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')
    return path


def write_curve_svg(path, frame, columns=('tv_marginal', 'h_eps_mass', 'eta_hat', 'w2')):
    """A self-contained line plot of the curve columns that carry data."""
    path = Path(path)
    with plt.rc_context({'svg.hashsalt': 'kac-lab', 'svg.fonttype': 'none'}):
        fig, ax = plt.subplots(figsize=(7, 4))
        for column in columns:
            if column in frame and frame[column].notna().any():
                ax.plot(frame['step'], frame[column], label=column, linewidth=1.2)
        ax.set_xlabel('step')
        ax.set_ylim(bottom=0)
        ax.grid(alpha=0.3)
        ax.legend(loc='upper right')
        fig.tight_layout()
        fig.savefig(path, format='svg', metadata={'Date': None})
        plt.close(fig)
    return path


def file_digest(path):
    sha = hashlib.sha256()
    with open(path, 'rb') as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b''):
            sha.update(chunk)
    return sha.hexdigest()


def write_manifest(out_dir, command, parameters, seed, duration, files, exit_code=0):
    """Write manifest.json next to the outputs and record the run in the database."""
    out_dir = Path(out_dir)
    digests = {Path(f).name: file_digest(f) for f in files}
    manifest = {
        'command': command,
        'parameters': jsonable(parameters),
        'seed': seed,
        'version': kac_lab.__version__,
        'duration_seconds': round(duration, 6),
        'digests': digests,
        'exit_code': exit_code,
    }
    write_json(out_dir / MANIFEST_NAME, manifest)
    if settings.KWL_RECORD_RUNS:
        record_run(manifest, out_dir)
    return manifest


def record_run(manifest, out_dir):
    from .models import RunManifest

    try:
        return RunManifest.objects.create(
            command=manifest['command'],
            parameters=manifest['parameters'],
            seed=manifest['seed'],
            version=manifest['version'],
            duration_seconds=manifest['duration_seconds'],
            digests=manifest['digests'],
            output_dir=str(out_dir),
            exit_code=manifest['exit_code'],
        )
    except DatabaseError as e:
        logger.warning(f"Run record not saved ({e}); run `manage.py migrate` to enable run records")
        return None


def read_manifest(path):
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    try:
        return json.loads(path.read_text(encoding='utf-8'))
    except (OSError, json.JSONDecodeError) as e:
        raise ParameterError(f"cannot read manifest {path}: {e}")


def format_table(rows, headers):
    """Fixed-width text table for terminal output."""
    cells = [[str(header) for header in headers]] + [[str(cell) for cell in row] for row in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(headers))]
    lines = ['  '.join(cell.ljust(width) for cell, width in zip(row, widths)) for row in cells]
    lines.insert(1, '  '.join('-' * width for width in widths))
    return '\n'.join(lines)
