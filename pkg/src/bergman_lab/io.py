"""CSV and JSON output formats.

Measure dumps are CSV with columns ``r, theta, mass`` preceded by a single
``# {json}`` header line; kernel dumps are CSV ``r, theta, P`` with a JSON
summary beside them; zero dumps are CSV ``sample_id, re, im, multiplicity``
with a JSON run summary.  Floats are written with ``repr`` so reruns give
identical bytes.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .geometry import Chart, GridMeasure

__all__ = [
    "OMEGA_TOTAL",
    "write_measure_csv",
    "read_measure_csv",
    "write_kernel_csv",
    "write_zeros_csv",
    "write_json",
    "sha256_file",
]

OMEGA_TOTAL = 1.0


def _fmt(x):
    return repr(float(x))


def write_json(path, obj):
    path = Path(path)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def _json_default(o):
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, complex):
        return [o.real, o.imag]
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def write_measure_csv(path, mu, meta=None):
    """Dump a grid measure; the header carries the chart, totals and ``omega`` normalization."""
    ch = mu.chart
    header = {
        "infinity_mass": float(mu.infinity_mass),
        "total": float(mu.total),
        "omega_fs_total": OMEGA_TOTAL,
        "signed": bool(mu.signed),
        "chart": {"truncation_radius": ch.truncation_radius, "grid_radial": ch.grid_radial,
                  "grid_angular": ch.grid_angular, "breakpoints": list(ch.breakpoints)},
    }
    header.update(meta or {})
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write("# " + json.dumps(header, sort_keys=True, default=_json_default) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["r", "theta", "mass"])
        for i, r in enumerate(ch.r):
            for j, th in enumerate(ch.theta):
                w.writerow([_fmt(r), _fmt(th), _fmt(mu.cell_masses[i, j])])
    return path


def read_measure_csv(path):
    """Inverse of :func:`write_measure_csv`."""
    with Path(path).open() as fh:
        first = fh.readline()
        if not first.startswith("# "):
            raise ValueError("missing JSON header line")
        header = json.loads(first[2:])
        rows = list(csv.DictReader(fh))
    c = header["chart"]
    chart = Chart(c["truncation_radius"], c["grid_radial"], c["grid_angular"], tuple(c["breakpoints"]))
    masses = np.array([float(r["mass"]) for r in rows]).reshape(chart.shape)
    return GridMeasure(chart, masses, header["infinity_mass"], signed=header.get("signed", False)), header


def write_kernel_csv(path, kernel, basis, meta=None):
    """Kernel values on the grid plus ``<path>.json`` summary."""
    ch = kernel.chart
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["r", "theta", "P"])
        for i, r in enumerate(ch.r):
            for j, th in enumerate(ch.theta):
                w.writerow([_fmt(r), _fmt(th), _fmt(kernel.values[i, j])])
        w.writerow(["inf", "0.0", _fmt(kernel.at_infinity)])
    summary = {
        "p": kernel.p,
        "d_p": kernel.d_p,
        "A_p": kernel.A_p,
        "condition_estimate": basis.condition_estimate,
        "trace": kernel.trace,
        "trace_check": kernel.trace_check(),
        "P_min": float(kernel.values.min()),
        "P_max": float(kernel.values.max()),
        "P_infinity": kernel.at_infinity,
        "pole_nodes": kernel.pole_nodes,
        "method": basis.method,
        "excluded_monomials": list(basis.excluded),
        "omega_fs_total": OMEGA_TOTAL,
    }
    summary.update(meta or {})
    js = write_json(path.with_suffix(".json"), summary)
    return path, js, summary


def write_zeros_csv(path, samples, summary=None):
    """Finite zeros with multiplicities, plus ``<path>.json`` run summary."""
    path = Path(path)
    inf = 0
    total = 0
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_id", "re", "im", "multiplicity"])
        for k, s in enumerate(samples):
            sid = s.index if s.index is not None else k
            for z, m in zip(s.zeros, s.multiplicities):
                w.writerow([sid, _fmt(z.real), _fmt(z.imag), int(m)])
            inf += s.infinity_multiplicity
            total += s.count
    out = {"M": len(samples), "infinity_mass_fraction": inf / total if total else 0.0,
           "omega_fs_total": OMEGA_TOTAL}
    out.update(summary or {})
    js = write_json(path.with_suffix(".json"), out)
    return path, js, out


def sha256_file(path):
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
