"""Sketch tomography of matrix product states from classical shadows."""

import json

from ._core import (
    MPS,
    ShadowBatch,
    TTCoeff,
    gen_state,
    ground_state,
    mps_to_tt_coeff,
    nll,
    random_mps,
    sample_shadows,
    scaling,
    shadow,
    shadow_estimate,
    sketch_tomography,
    sketch_tomography_exact,
    statevector_to_mps,
    tomo,
    train_mle,
    tt_frobenius_distance,
)
from ._core import evaluate as _evaluate

__all__ = [
    "MPS",
    "ShadowBatch",
    "TTCoeff",
    "evaluate",
    "gen_state",
    "ground_state",
    "mps_to_tt_coeff",
    "nll",
    "random_mps",
    "sample_shadows",
    "scaling",
    "shadow",
    "shadow_estimate",
    "sketch_tomography",
    "sketch_tomography_exact",
    "statevector_to_mps",
    "tomo",
    "train_mle",
    "tt_frobenius_distance",
]


def evaluate(config, truth, batch=None, sketch=None, mle=None):
    """Evaluation table as a list of dicts (empty cells become None)."""
    if not isinstance(config, str):
        config = json.dumps(config)
    lines = _evaluate(config, truth, batch, sketch, mle).splitlines()
    header = lines[0].split(",")
    rows = []
    for line in lines[1:]:
        cells = line.split(",")
        row = {"id": cells[0]}
        for key, cell in zip(header[1:], cells[1:]):
            row[key] = float(cell) if cell else None
        rows.append(row)
    return rows
