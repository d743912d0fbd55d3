"""Log-log slope fitting for refinement studies."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class EOC:
    slope: float
    pairwise: tuple[float, ...]


def fit_eoc(errors, hs) -> EOC:
    """Least-squares slope of log(error) against log(h), plus incremental orders.

    Pairwise orders are log(e_i / e_{i+1}) / log(h_i / h_{i+1}).
    """
    e = np.asarray(errors, dtype=float)
    h = np.asarray(hs, dtype=float)
    if e.shape != h.shape or e.ndim != 1:
        raise ValueError("errors and mesh sizes must be 1D arrays of equal length")
    if len(e) < 2:
        raise ValueError("need at least two errors to fit an order")
    if np.any(~np.isfinite(e)) or np.any(e <= 0.0):
        raise ValueError("errors must be finite and strictly positive")
    if np.any(h <= 0.0) or len(np.unique(h)) != len(h):
        raise ValueError("mesh sizes must be positive and distinct")
    lh, le = np.log(h), np.log(e)
    slope = float(np.polyfit(lh, le, 1)[0])
    pairwise = tuple(float(v) for v in np.diff(le) / np.diff(lh))
    return EOC(slope, pairwise)
