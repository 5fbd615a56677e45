"""Run artifact writers: probe CSV, particle snapshots, run manifest.

All writers emit deterministic plain text: floats use Python's shortest
round-trip ``repr`` so every double survives a write/read cycle exactly and
re-running an identical single-threaded configuration reproduces
byte-identical files.
"""

import os
import platform
import sys

import numpy as np

from .errors import ConfigError

PROBE_CSV_NAME = "probes.csv"
MANIFEST_NAME = "manifest.txt"
SNAPSHOT_DIR_NAME = "snapshots"


def _fmt(value):
    return repr(float(value))


def write_probe_csv(series, path):
    """CSV with ``time`` first, then every channel in recording order."""
    names = list(series.channels)
    lines = [",".join(["time"] + names)]
    times = np.asarray(series.times)
    cols = [np.asarray(series.channels[n]) for n in names]
    for i in range(len(times)):
        row = [_fmt(times[i])] + [_fmt(c[i]) for c in cols]
        lines.append(",".join(row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def write_snapshot(snapshot, path):
    """Plain columnar text: id, position, pseudo-normal, von Mises stress."""
    pos = np.asarray(snapshot.positions)
    nrm = np.asarray(snapshot.normals)
    vm = np.asarray(snapshot.von_mises)
    dim = pos.shape[1]
    axes = ("x", "z") if dim == 2 else ("x", "y", "z")
    header = (["id"] + list(axes) + [f"n{a}" for a in axes] + ["von_mises"])
    lines = ["# time = " + _fmt(snapshot.time)]
    if snapshot.label:
        lines.append(f"# label = {snapshot.label}")
    lines.append(" ".join(header))
    for i in range(len(pos)):
        fields = ([str(i)] + [_fmt(v) for v in pos[i]]
                  + [_fmt(v) for v in nrm[i]] + [_fmt(vm[i])])
        lines.append(" ".join(fields))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def _versions():
    import numpy
    from . import __version__
    rows = {
        "version.shellsph": __version__,
        "version.numpy": numpy.__version__,
        "version.python": platform.python_version(),
    }
    try:
        import numba
        rows["version.numba"] = numba.__version__
    except ImportError:
        rows["version.numba"] = "unavailable"
    return rows


def write_manifest(config, path, extra=None):
    """Flat key=value manifest of the fully resolved configuration."""
    rows = {"case": config.case}
    for key in sorted(config.values):
        rows[f"config.{key}"] = config.values[key]
    rows.update(_versions())
    for key in sorted(extra or {}):
        rows[f"run.{key}"] = (extra or {})[key]
    lines = []
    for key, value in rows.items():
        if isinstance(value, float):
            value = _fmt(value)
        lines.append(f"{key}={value}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def write_outputs(series, snapshots, directory, config=None, extra=None):
    """Write every run artifact under ``directory``; returns written paths.

    Layout: ``probes.csv``, ``manifest.txt`` (when ``config`` given) and one
    ``snapshots/snapshot_NNNNNN.txt`` per recorded tick.
    """
    try:
        os.makedirs(directory, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {directory!r}: "
                          f"{exc}") from exc
    if not os.access(directory, os.W_OK):
        raise ConfigError(f"output directory {directory!r} is not writable")
    written = [write_probe_csv(series, os.path.join(directory,
                                                    PROBE_CSV_NAME))]
    if snapshots:
        snap_dir = os.path.join(directory, SNAPSHOT_DIR_NAME)
        os.makedirs(snap_dir, exist_ok=True)
        for tick, snap in enumerate(snapshots):
            name = f"snapshot_{tick:06d}.txt"
            written.append(write_snapshot(snap, os.path.join(snap_dir, name)))
    if config is not None:
        written.append(write_manifest(config,
                                      os.path.join(directory, MANIFEST_NAME),
                                      extra=extra))
    return written
