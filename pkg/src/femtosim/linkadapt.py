"""Uplink rate formats, rate selection, and proportional fair scheduling.

The rate table models a CDMA data uplink whose frame carries one fixed
payload per format. Each format has a target energy-per-bit over total
noise (Eb/Nt) for reliable decoding; the received SINR needed by a
format follows from that target minus the processing gain
10*log10(W / rate). A transmission is modelled as decodable exactly
when the realized SINR meets the requirement.

Scheduling is proportional fair: each base station serves the user
maximizing instantaneous_rate / average_throughput, with the average
tracked by an exponential moving average.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .units import Decibel, db_to_linear

# (payload bits per frame, nominal rate kbps, required Eb/Nt dB)
DEFAULT_RATE_TABLE = [
    (128, 19.2, 5.6),
    (256, 38.4, 5.7),
    (512, 76.8, 5.8),
    (1024, 153.6, 7.0),
    (2048, 307.2, 5.4),
    (4096, 614.4, 6.3),
    (8192, 1228.8, 5.5),
    (12288, 1843.2, 11.4),
]

PF_EPSILON_BPS = 1.0  # throughput average floor, avoids divide-by-zero at start


@dataclass(frozen=True)
class RateFormat:
    payload_bits: int
    rate_kbps: float
    ebnt_db: Decibel


def required_sinr_db(fmt: RateFormat, bandwidth_hz: float) -> Decibel:
    """Received SINR a format needs: Eb/Nt minus processing gain.

    The processing gain is 10*log10(W / R) with R the nominal bit rate,
    so low-rate formats decode well below 0 dB SINR.
    """
    processing_gain_db = 10.0 * np.log10(bandwidth_hz / (fmt.rate_kbps * 1e3))
    return float(fmt.ebnt_db - processing_gain_db)


class RateTable:
    """Ordered set of rate formats plus precomputed SINR thresholds."""

    def __init__(self, rows=DEFAULT_RATE_TABLE, bandwidth_hz: float = 1.25e6):
        formats = [RateFormat(int(p), float(r), float(e)) for p, r, e in rows]
        if not formats:
            raise ValueError("rate table must have at least one row")
        rates = [f.rate_kbps for f in formats]
        if any(r2 <= r1 for r1, r2 in zip(rates, rates[1:])):
            raise ValueError("rate table rows must be sorted by strictly increasing rate")
        if any(f.payload_bits <= 0 or f.rate_kbps <= 0 for f in formats):
            raise ValueError("rate table entries must be positive")
        sinr = [required_sinr_db(f, bandwidth_hz) for f in formats]
        if any(s2 <= s1 for s1, s2 in zip(sinr, sinr[1:])):
            raise ValueError("required SINR must be strictly increasing across formats")
        self.formats = formats
        self.bandwidth_hz = bandwidth_hz
        self.required_sinr_db = np.array(sinr)
        self.required_sinr_lin = np.asarray(db_to_linear(self.required_sinr_db))
        self.payload_bits = np.array([f.payload_bits for f in formats], dtype=np.int64)
        self.rate_bps = np.array([f.rate_kbps * 1e3 for f in formats])

    def __len__(self):
        return len(self.formats)

    def select_rate(self, sinr_linear) -> int:
        """Index of the fastest format whose requirement is met, else -1.

        Vectorized: accepts a scalar or array of linear SINR values and
        returns int indices with -1 marking "no format decodable".
        """
        idx = np.searchsorted(self.required_sinr_lin, sinr_linear, side="right") - 1
        return idx if isinstance(sinr_linear, np.ndarray) else int(idx)


def load_rate_table(path, bandwidth_hz: float = 1.25e6) -> RateTable:
    """Read a rate table from a text file.

    One format per line as ``payload_bits, rate_kbps, ebnt_db``; blank
    lines and ``#`` comments are skipped.
    """
    rows = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected 'payload_bits, rate_kbps, ebnt_db'")
            rows.append((int(parts[0]), float(parts[1]), float(parts[2])))
    return RateTable(rows, bandwidth_hz)


def pf_schedule(instantaneous_rate_bps, average_throughput_bps) -> int:
    """Pick the proportional fair winner among a station's users.

    Returns the index of the user maximizing rate/average; ties go to
    the lowest index (np.argmax keeps the first maximum). Callers pass
    per-user arrays restricted to one station's attached users.
    """
    rate = np.asarray(instantaneous_rate_bps, dtype=np.float64)
    avg = np.asarray(average_throughput_bps, dtype=np.float64)
    if rate.size == 0:
        raise ValueError("pf_schedule needs at least one candidate")
    return int(np.argmax(rate / avg))


def pf_update(average_bps, scheduled_index, served_bits, frame_s, time_constant_frames):
    """One EMA step of the per-user throughput averages.

    Every user decays by (1 - 1/Tc); the scheduled user additionally
    gains (1/Tc) * served_bits/frame_s. served_bits is zero when the
    frame failed to decode. The average is floored at PF_EPSILON_BPS so
    the scheduler metric stays finite.
    """
    avg = np.asarray(average_bps, dtype=np.float64)
    decay = 1.0 - 1.0 / time_constant_frames
    out = avg * decay
    if scheduled_index is not None:
        out[scheduled_index] += (served_bits / frame_s) / time_constant_frames
    return np.maximum(out, PF_EPSILON_BPS)
