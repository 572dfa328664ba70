"""CSV readers for the khm-lab output schemas, with column-level errors."""

from __future__ import annotations

import csv

import numpy as np

STRUCTURE = ["ell", "S0", "S0_stderr", "Spar", "Spar_stderr", "samples"]
BUDGET = [
    "ell", "S0_over_ell", "viscous_term", "forcing_term_43", "residual_43",
    "residual_43_stderr", "Spar_over_ell", "H_term", "S0_integral_term",
    "forcing_term_45", "residual_45", "residual_45_stderr",
]
FLATNESS = ["shell_N", "p", "F", "F_stderr"]
ENERGY = ["t", "energy", "enstrophy_times_nu"]


class SchemaError(ValueError):
    pass


def read_table(path, expected_header) -> dict:
    """Columns as float arrays keyed by header name."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise SchemaError(f"{path}: empty file")
        missing = [c for c in expected_header if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing column '{missing[0]}'")
        extra = [c for c in header if c not in expected_header]
        if extra:
            raise SchemaError(f"{path}: unexpected column '{extra[0]}'")
        rows = [row for row in reader if row]
    data = np.array([[float(v) for v in row] for row in rows])
    if data.size == 0:
        raise SchemaError(f"{path}: no data rows")
    return {name: data[:, header.index(name)] for name in expected_header}
