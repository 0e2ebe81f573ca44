"""Uplink transmit power control, conventional and interference-capped.

All quantities here are linear: losses are power ratios, powers are
milliwatts. The conventional rule inverts the serving-link loss to hit
a received SINR target against the broadcast noise-plus-interference
level, then clips at a cap.

Femtocell users additionally bound their cap so their strongest
cross-tier victim, the macrocell station they attenuate least toward,
never receives more than an interference budget from them:

* static budget: the station's allowance alpha * thermal is split by
  the number of femto users pointing at it, giving a cap that is fixed
  for a drop;
* adaptive budget: the allowance additionally grows when the victim
  station's current noise-plus-interference sits below the level it
  had before the femtocell went active, reclaiming headroom the macro
  tier is not using.

The adaptive scheme's gain factor is calibrated so both schemes start
from the identical threshold, which makes them directly comparable.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)


def required_power(loss_linear, ni_linear, gamma0_linear):
    """Transmit power that hits SINR gamma0 through a given loss: L * NI * g0."""
    return loss_linear * ni_linear * gamma0_linear


def cap_power(p_required_mw, p_max_mw):
    """Clip the requested power at the currently allowed maximum."""
    return np.minimum(p_required_mw, p_max_mw)


@dataclass(frozen=True)
class NeighborEstimate:
    """Macro stations ranked by estimated uplink loss, strongest first.

    Loss estimates come from downlink measurements (EIRP over averaged
    received power), so they carry path loss and shadowing but no fast
    fading. bs_indices[0] is the station this user would hurt most.
    """

    bs_indices: np.ndarray
    loss_linear: np.ndarray

    @property
    def k_star(self) -> int:
        return int(self.bs_indices[0])

    @property
    def l_min(self) -> float:
        return float(self.loss_linear[0])


def estimate_neighbors(eirp_mw, received_mw, neighbor_count: int) -> NeighborEstimate:
    """Rank candidate macro stations by loss estimated as EIRP / received.

    ``received_mw`` holds one time-averaged downlink power per candidate
    station, indexed by station. Ties rank by lower station index
    (stable sort). Returns the ``neighbor_count`` best entries.
    """
    received = np.asarray(received_mw, dtype=np.float64)
    if np.any(received <= 0):
        raise ValueError("received powers must be positive")
    loss = eirp_mw / received
    order = np.argsort(loss, kind="stable")[:neighbor_count]
    return NeighborEstimate(bs_indices=order, loss_linear=loss[order])


def open_loop_threshold(alpha_inr, noise_floor_mw, j_count):
    """Per-user interference budget at the victim station: alpha * N / J.

    J is how many femto users named this station their top victim. A
    zero J should not reach a user that reported there; it is treated
    as 1 and logged rather than dividing by zero.
    """
    j = np.asarray(j_count)
    if np.any(j < 1):
        log.warning("open_loop_threshold called with J < 1, clamping to 1")
        j = np.maximum(j, 1)
    return alpha_inr * noise_floor_mw / j


def open_loop_pmax(i_threshold_mw, l_min_linear, p_bar_mw):
    """Static cap: power whose cross-tier leakage just fills the budget."""
    return np.minimum(i_threshold_mw * l_min_linear, p_bar_mw)


def calibrate_beta(alpha_inr, noise_floor_mw, j_count, ni0_mw):
    """Adaptive-scheme gain such that step 0 reproduces the static budget.

    beta * NI(0) == alpha * N / J exactly, so the two schemes differ
    only once the victim's interference starts moving.
    """
    j = np.asarray(j_count)
    if np.any(j < 1):
        log.warning("calibrate_beta called with J < 1, clamping to 1")
        j = np.maximum(j, 1)
    return alpha_inr * noise_floor_mw / (j * ni0_mw)


def closed_loop_threshold(ith0_mw, beta, ni0_mw, ni_n_mw, step_n):
    """Adaptive interference budget at power-control step n.

    Frozen at the initial budget while the victim's current level
    NI(n) sits at or above its pre-activation level NI(0); below that,
    the unused headroom beta * (NI(0) - NI(n)) is added. Continuous at
    NI(n) == NI(0) and non-increasing in NI(n).
    """
    if np.ndim(step_n) == 0 and step_n == 0:
        return np.asarray(ith0_mw) + 0.0
    raised = ith0_mw + beta * (ni0_mw - ni_n_mw)
    return np.where(ni_n_mw >= ni0_mw, ith0_mw, raised)


def closed_loop_pmax(ith_n_mw, l_min_linear, p_bar_mw):
    """Adaptive cap, same shape as the static one but per-step."""
    return np.minimum(ith_n_mw * l_min_linear, p_bar_mw)


def estimated_crosstier_interference(p_t_mw, l_min_linear):
    """Leakage this user believes it causes at its top victim: P_t / L_min."""
    return p_t_mw / l_min_linear
