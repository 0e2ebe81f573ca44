"""Decibel and milliwatt conversion helpers."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from femtosim.units import db_to_linear, dbm_to_mw, linear_to_db, mw_to_dbm


def test_known_db_values():
    assert db_to_linear(0.0) == pytest.approx(1.0)
    assert db_to_linear(10.0) == pytest.approx(10.0)
    assert db_to_linear(3.0) == pytest.approx(1.9952623, rel=1e-6)
    assert linear_to_db(100.0) == pytest.approx(20.0)


def test_known_dbm_values():
    assert dbm_to_mw(0.0) == pytest.approx(1.0)
    assert dbm_to_mw(30.0) == pytest.approx(1000.0)
    assert dbm_to_mw(-109.0) == pytest.approx(1.2589254e-11, rel=1e-6)
    assert mw_to_dbm(200.0) == pytest.approx(23.0103, abs=1e-4)


def test_array_inputs():
    vals = np.array([-10.0, 0.0, 20.0])
    out = db_to_linear(vals)
    assert out.shape == vals.shape
    np.testing.assert_allclose(out, [0.1, 1.0, 100.0])


@given(st.floats(min_value=-200.0, max_value=200.0))
def test_db_round_trip(x):
    assert linear_to_db(db_to_linear(x)) == pytest.approx(x, abs=1e-9)


@given(st.floats(min_value=-150.0, max_value=60.0))
def test_dbm_round_trip(x):
    assert mw_to_dbm(dbm_to_mw(x)) == pytest.approx(x, abs=1e-9)
