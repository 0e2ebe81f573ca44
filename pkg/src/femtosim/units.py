"""Decibel and linear-scale power conversions.

Everything downstream of this module does its power arithmetic in the
linear domain (milliwatts for absolute powers, plain ratios for gains
and losses) and converts to dB only at the edges: configuration input,
logging, and report output. Keeping a single conversion point avoids
the classic mixed-domain bugs where a dB value gets multiplied into a
linear product.

``Decibel`` and ``PowerLinear`` are aliases of ``float`` used in
signatures to document which domain a value lives in.
"""

from __future__ import annotations

import numpy as np

Decibel = float
PowerLinear = float


def db_to_linear(value_db):
    """Convert a dB (or dBm) value to linear scale, 10**(x/10).

    Accepts scalars or numpy arrays. A dBm input yields milliwatts.
    """
    return 10.0 ** (np.asarray(value_db) / 10.0)


def linear_to_db(value_linear):
    """Convert a positive linear value to dB, 10*log10(x).

    Raises ValueError on non-positive input (elementwise for arrays);
    a zero or negative power has no dB representation and almost always
    means an upstream accounting bug.
    """
    arr = np.asarray(value_linear, dtype=np.float64)
    if np.any(arr <= 0.0):
        raise ValueError(f"linear_to_db requires positive input, got {value_linear!r}")
    return 10.0 * np.log10(arr)


def dbm_to_mw(value_dbm: Decibel) -> PowerLinear:
    """Absolute power in dBm to milliwatts."""
    return float(db_to_linear(value_dbm))


def mw_to_dbm(value_mw: PowerLinear) -> Decibel:
    """Absolute power in milliwatts to dBm."""
    return float(linear_to_db(value_mw))
