"""CSV schemas for all tabular outputs, with round-trip readers."""

from __future__ import annotations

import csv

import numpy as np

STRUCTURE_HEADER = ["ell", "S0", "S0_stderr", "Spar", "Spar_stderr", "samples"]
CORRELATIONS_HEADER = ["ell", "gamma_bar", "gamma_bar_prime", "H", "H_stderr"]
FLATNESS_HEADER = ["shell_N", "p", "F", "F_stderr"]
BUDGET_HEADER = [
    "ell", "S0_over_ell", "viscous_term", "forcing_term_43", "residual_43",
    "residual_43_stderr", "Spar_over_ell", "H_term", "S0_integral_term",
    "forcing_term_45", "residual_45", "residual_45_stderr",
]
ENERGY_HEADER = ["t", "energy", "enstrophy_times_nu"]
ISOTROPY_HEADER = ["ell", "deviation", "deviation_stderr", "normalized"]


class SchemaError(ValueError):
    pass


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])


def _read_rows(path, header):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        got = next(reader, None)
        if got != header:
            missing = set(header) - set(got or [])
            if missing:
                raise SchemaError(f"{path}: missing column(s) {sorted(missing)}")
            raise SchemaError(f"{path}: header {got} does not match {header}")
        return [row for row in reader if row]


def write_structure_csv(path, table):
    rows = zip(table.ell, table.s0, table.s0_stderr, table.spar, table.spar_stderr)
    _write_rows(path, STRUCTURE_HEADER,
                [[float(a), float(b), float(c), float(d), float(e), table.sample_count]
                 for a, b, c, d, e in rows])


def read_structure_csv(path):
    from .stats import StructureFunctionTable

    rows = _read_rows(path, STRUCTURE_HEADER)
    data = np.array([[float(v) for v in row[:5]] for row in rows])
    samples = int(rows[0][5]) if rows else 0
    return StructureFunctionTable(data[:, 0], data[:, 1], data[:, 2],
                                  data[:, 3], data[:, 4], samples)


def write_correlations_csv(path, corr):
    rows = zip(corr.ell, corr.gamma_bar, corr.gamma_bar_prime, corr.h, corr.h_stderr)
    _write_rows(path, CORRELATIONS_HEADER,
                [[float(v) for v in row] for row in rows])


def read_correlations_csv(path):
    from .stats import CorrelationSet

    rows = _read_rows(path, CORRELATIONS_HEADER)
    data = np.array([[float(v) for v in row] for row in rows])
    return CorrelationSet(data[:, 0], data[:, 1], data[:, 2], data[:, 3],
                          data[:, 4], spectrum=None)


def write_flatness_csv(path, entries):
    _write_rows(path, FLATNESS_HEADER,
                [[e.shell, e.p, float(e.value), float(e.stderr)] for e in entries])


def read_flatness_csv(path):
    rows = _read_rows(path, FLATNESS_HEADER)
    return [(int(r[0]), int(r[1]), float(r[2]), float(r[3])) for r in rows]


def write_budget_csv(path, budget):
    rows = zip(budget.ell, budget.s0_over_ell, budget.viscous_term,
               budget.forcing_term_43, budget.residual_43, budget.residual_43_stderr,
               budget.spar_over_ell, budget.h_term, budget.s0_integral_term,
               budget.forcing_term_45, budget.residual_45, budget.residual_45_stderr)
    _write_rows(path, BUDGET_HEADER, [[float(v) for v in row] for row in rows])


def read_budget_csv(path):
    rows = _read_rows(path, BUDGET_HEADER)
    return np.array([[float(v) for v in row] for row in rows])


def write_energy_csv(path, times, energy, nu_enstrophy):
    _write_rows(path, ENERGY_HEADER,
                [[float(t), float(e), float(z)]
                 for t, e, z in zip(times, energy, nu_enstrophy)])


def read_energy_csv(path):
    rows = _read_rows(path, ENERGY_HEADER)
    data = np.array([[float(v) for v in row] for row in rows])
    return data[:, 0], data[:, 1], data[:, 2]


def write_isotropy_csv(path, dev):
    rows = zip(dev.ell, dev.deviation, dev.deviation_stderr, dev.normalized)
    _write_rows(path, ISOTROPY_HEADER, [[float(v) for v in row] for row in rows])
