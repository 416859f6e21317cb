"""CSV export and import of controls, spectra and ensemble outcomes."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .errors import FileMismatchError
from .model import TimeGrid
from .synthesis import ControlSignal, SynthesisReport, picard_diagnostic
from .verify import EnsembleOutcome

SPECTRUM_COLUMNS = ["index", "singular_value", "coefficient", "partial_sum"]


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def _write(path, header, rows, footer=()):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
        for line in footer:
            fh.write(f"# {line}\n")


def write_control(path, control: ControlSignal) -> None:
    header = ["t"] + [f"u_{i + 1}" for i in range(control.m)]
    _write(path, header, ([t, *u] for t, u in zip(control.times, control.samples)))


def read_control(path, tgrid: TimeGrid, m: int) -> ControlSignal:
    """Load a control file and check it against the expected grid."""
    try:
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    except OSError as exc:
        raise FileMismatchError(f"cannot read {path}: {exc}") from exc
    if not rows or rows[0] != ["t"] + [f"u_{i + 1}" for i in range(m)]:
        raise FileMismatchError(f"{path}: expected columns t, u_1..u_{m}")
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float).reshape(-1, m + 1)
    except ValueError as exc:
        raise FileMismatchError(f"{path}: {exc}") from exc
    if len(data) != tgrid.N:
        raise FileMismatchError(f"{path}: {len(data)} samples, grid has N={tgrid.N}")
    if not np.allclose(data[:, 0], tgrid.nodes[1:], rtol=0, atol=1e-9 * max(tgrid.T, 1.0)):
        raise FileMismatchError(f"{path}: sample times do not match the time grid")
    return ControlSignal(samples=data[:, 1:].copy(), tgrid=tgrid)


def write_spectrum(path, report: SynthesisReport) -> None:
    rows = zip(range(1, len(report.singular_values) + 1), report.singular_values,
               report.coefficients, report.picard_partial_sums)
    _write(path, SPECTRUM_COLUMNS, rows)


def write_picard(path, report: SynthesisReport) -> None:
    _write(path, SPECTRUM_COLUMNS, picard_diagnostic(report))


def read_table(path) -> dict:
    """Read a numeric CSV written by this module into column arrays."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    header, body = rows[0], rows[1:]
    cols = list(zip(*body)) if body else [()] * len(header)
    return {h: np.array([float(v) if v != "" else np.nan for v in c]) for h, c in zip(header, cols)}


def write_outcome(path, outcome: EnsembleOutcome) -> None:
    d = outcome.points.shape[1]
    n = outcome.terminal_states.shape[1]
    header = (["index"] + [f"beta_{i + 1}" for i in range(d)] + [f"terminal_{i + 1}" for i in range(n)]
              + [f"target_{i + 1}" for i in range(n)] + ["error"])
    rows = ([j, *outcome.points[j], *outcome.terminal_states[j], *outcome.target_states[j],
             outcome.member_errors[j]] for j in range(len(outcome.points)))
    footer = [f"k_norm_error={_fmt(outcome.k_norm_error)}",
              f"mean_error={_fmt(outcome.mean_error)}",
              f"max_error={_fmt(outcome.max_error)}"]
    _write(path, header, rows, footer)


def write_trajectories(path, outcome: EnsembleOutcome) -> None:
    if outcome.trajectories is None:
        raise ValueError("outcome carries no trajectories")
    n = outcome.trajectories.shape[2]
    header = ["t", "member"] + [f"x_{i + 1}" for i in range(n)]
    rows = ([t, j, *outcome.trajectories[i, j]]
            for i, t in enumerate(outcome.trajectory_times)
            for j in range(outcome.trajectories.shape[1]))
    _write(path, header, rows)


def write_rows(path, header, rows) -> None:
    _write(path, header, rows)
