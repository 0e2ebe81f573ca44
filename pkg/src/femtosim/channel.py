"""Propagation: distance-based loss, shadowing, walls, and fast fading.

Three static loss classes cover every link in the network:

* outdoor: both endpoints outside buildings,
* outdoor_to_indoor: the link crosses one or more building shells,
* indoor: both endpoints inside the same building.

Static loss a.k.a. large-scale loss is path loss + lognormal shadowing
+ wall losses, fixed for the lifetime of a drop. Fast fading rides on
top as a unit-mean power gain per link, generated by a sum-of-sinusoids
Rayleigh model with the classic Bessel-shaped autocorrelation.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .units import Decibel, db_to_linear

log = logging.getLogger(__name__)

MIN_DISTANCE_M = 1.0

# external wall penetration, dB: normal, negative tails kept
EXTERNAL_WALL_MEAN_DB = 7.0
EXTERNAL_WALL_STD_DB = 6.0
# internal walls, dB: a single 4 dB partition present with probability 1/2
INTERNAL_WALL_STEP_DB = 4.0
INTERNAL_WALL_PROB = 0.5

SPEED_OF_LIGHT_M_S = 2.99792458e8

# oscillators per quadrature branch (16 sinusoids per link in total)
JAKES_OSCILLATORS = 8


def _clamped(distance_m):
    d = np.asarray(distance_m, dtype=np.float64)
    clipped = np.maximum(d, MIN_DISTANCE_M)
    n_clamped = int(np.count_nonzero(d < MIN_DISTANCE_M))
    if n_clamped:
        log.debug("clamped %d sub-metre link distances to %.1f m", n_clamped, MIN_DISTANCE_M)
    return clipped


def path_loss_outdoor_db(distance_m, freq_mhz, shadow_db) -> Decibel:
    """Outdoor macro-grade loss in dB: 49 + 40*log10(d/km) + 30*log10(f) + S."""
    d = _clamped(distance_m)
    return 49.0 + 40.0 * np.log10(d / 1000.0) + 30.0 * np.log10(freq_mhz) + shadow_db


def path_loss_outdoor(distance_m, freq_mhz, shadow_db):
    """Linear outdoor loss (a ratio >= 1 for any realistic geometry)."""
    return db_to_linear(path_loss_outdoor_db(distance_m, freq_mhz, shadow_db))


def path_loss_outdoor_to_indoor_db(distance_m, freq_mhz, shadow_db, le_db, li_db) -> Decibel:
    """Outdoor loss plus external and internal wall penetration, in dB."""
    return path_loss_outdoor_db(distance_m, freq_mhz, shadow_db) + le_db + li_db


def path_loss_outdoor_to_indoor(distance_m, freq_mhz, shadow_db, le_db, li_db):
    return db_to_linear(path_loss_outdoor_to_indoor_db(distance_m, freq_mhz, shadow_db, le_db, li_db))


def path_loss_indoor_db(distance_m, shadow_db, li_db) -> Decibel:
    """In-building loss in dB: 30 + 37*log10(d) + S + Li, d in metres."""
    d = _clamped(distance_m)
    return 30.0 + 37.0 * np.log10(d) + shadow_db + li_db


def path_loss_indoor(distance_m, shadow_db, li_db):
    return db_to_linear(path_loss_indoor_db(distance_m, shadow_db, li_db))


@dataclass(frozen=True)
class StaticLoss:
    """One link's large-scale loss with the components that built it."""

    kind: str  # outdoor | outdoor_to_indoor | indoor
    distance_m: float
    freq_mhz: float
    shadow_db: float
    le_db: float
    li_db: float
    loss_db: float = field(init=False, default=0.0)

    def __post_init__(self):
        object.__setattr__(self, "loss_db", self._recompute_db())

    def _recompute_db(self) -> float:
        if self.kind == "outdoor":
            return float(path_loss_outdoor_db(self.distance_m, self.freq_mhz, self.shadow_db))
        if self.kind == "outdoor_to_indoor":
            return float(
                path_loss_outdoor_to_indoor_db(
                    self.distance_m, self.freq_mhz, self.shadow_db, self.le_db, self.li_db
                )
            )
        if self.kind == "indoor":
            return float(path_loss_indoor_db(self.distance_m, self.shadow_db, self.li_db))
        raise ValueError(f"unknown loss kind {self.kind!r}")

    @property
    def loss_linear(self) -> float:
        return float(db_to_linear(self.loss_db))


def sample_shadowing(rng, sigma_db, rho, n_users, n_links, common=None):
    """Correlated lognormal shadowing in dB, shape (n_users, n_links).

    Per user the links share a common component so that any two of the
    user's links have correlation rho:

        S = sigma * (sqrt(rho) * a_user + sqrt(1 - rho) * b_link)

    ``common`` lets the caller reuse one a_user draw across several
    link blocks of the same users (e.g. links to two station tiers).
    """
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"correlation must be in [0, 1], got {rho}")
    if common is None:
        common = rng.standard_normal(n_users)
    individual = rng.standard_normal((n_users, n_links))
    return sigma_db * (np.sqrt(rho) * common[:, None] + np.sqrt(1.0 - rho) * individual)


def sample_wall_losses(rng, shape, le_fixed=None, li_fixed=None):
    """Draw (Le, Li) wall losses in dB for each (user, building) pair.

    Le is normal(7, 6^2) with negative tails kept; Li is a 4 dB internal
    partition present with probability 1/2. Scenarios that pin the wall
    losses pass fixed values, which suppress sampling entirely (the rng
    is still consumed identically to keep seeding stable across modes).
    """
    le = EXTERNAL_WALL_MEAN_DB + EXTERNAL_WALL_STD_DB * rng.standard_normal(shape)
    li = INTERNAL_WALL_STEP_DB * (rng.random(shape) < INTERNAL_WALL_PROB)
    if le_fixed is not None:
        le = np.full(shape, float(le_fixed))
    if li_fixed is not None:
        li = np.full(shape, float(li_fixed))
    return le, li


def doppler_hz(speed_kmh: float, carrier_mhz: float) -> float:
    """Maximum Doppler shift v/lambda for a given speed and carrier."""
    speed_m_s = speed_kmh / 3.6
    wavelength_m = SPEED_OF_LIGHT_M_S / (carrier_mhz * 1e6)
    return speed_m_s / wavelength_m


@dataclass
class JakesParams:
    """Per-link oscillator constants for the sum-of-sinusoids fader.

    wc/ws are angular rates (Doppler times cos/sin of the arrival
    angles), phi/psi the random phases of the in-phase and quadrature
    sums. Arrays have shape link_shape + (JAKES_OSCILLATORS,) in
    float32: the fading bank is the hottest data in the simulator and
    single precision halves its footprint at no observable cost.
    """

    doppler_hz: float
    wc: np.ndarray
    ws: np.ndarray
    phi: np.ndarray
    psi: np.ndarray


def draw_jakes_params(rng, shape, doppler: float) -> JakesParams:
    """Randomize one fader per link in ``shape``.

    Arrival angles follow the standard quadrant construction
    alpha_n = (2*pi*n - pi + theta) / (4*N) with a single random theta
    per link, which gives the ensemble autocorrelation its Bessel J0
    shape for any oscillator count; phases are i.i.d. uniform.
    """
    if isinstance(shape, int):
        shape = (shape,)
    m = JAKES_OSCILLATORS
    theta = rng.uniform(-np.pi, np.pi, shape)
    phi = rng.uniform(-np.pi, np.pi, shape + (m,))
    psi = rng.uniform(-np.pi, np.pi, shape + (m,))
    n = np.arange(1, m + 1, dtype=np.float64)
    alpha = (2.0 * np.pi * n - np.pi + theta[..., None]) / (4.0 * m)
    w_d = 2.0 * np.pi * doppler
    return JakesParams(
        doppler_hz=doppler,
        wc=(w_d * np.cos(alpha)).astype(np.float32),
        ws=(w_d * np.sin(alpha)).astype(np.float32),
        phi=phi.astype(np.float32),
        psi=psi.astype(np.float32),
    )


def jakes_power_gain(params: JakesParams, t: float, out_dtype=np.float64):
    """Unit-mean power gain of every link at absolute time t seconds."""
    tf = np.float32(t)
    m = params.wc.shape[-1]
    scale = np.float32(np.sqrt(2.0 / m))
    x_c = scale * np.cos(params.wc * tf + params.phi).sum(axis=-1)
    x_s = scale * np.cos(params.ws * tf + params.psi).sum(axis=-1)
    return ((x_c * x_c + x_s * x_s) * np.float32(0.5)).astype(out_dtype)


class FadingProcess:
    """Single-link fader: advance in time, read the current power gain."""

    def __init__(self, doppler: float, rng):
        self.params = draw_jakes_params(rng, (), doppler)
        self.t = 0.0
        self.gain = float(jakes_power_gain(self.params, 0.0))

    def advance(self, dt: float) -> float:
        """Move the link clock forward by dt seconds, return the new gain."""
        if dt < 0:
            raise ValueError("fading cannot run backwards")
        self.t += dt
        self.gain = float(jakes_power_gain(self.params, self.t))
        return self.gain
