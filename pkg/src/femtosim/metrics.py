"""Drop aggregation: throughput ratios, confidence bands, CSV rows.

Cell throughputs are summarized as means over drops with a normal 95%
band. The two comparative ratios are paired drop by drop against their
reference runs: the macro loss against the femto-free run, the femto
ratio against the hard-cap-only run. Per-user statistics (mean and the
5th-percentile edge user) pool users across drops and bootstrap the
band by resampling whole drops, since users within a drop share one
geometry and are anything but independent.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, fields

import numpy as np

Z95 = 1.959963984540054
EDGE_USER_QUANTILE = 0.05
BOOTSTRAP_REPS = 999

CSV_HEADER = "scheme,axis,axis_value,metric,value,ci_low,ci_high,drops,seed"


def mean_normal_ci(values, z: float = Z95):
    """Sample mean and its normal-approximation confidence band."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise ValueError("nothing to summarize")
    m = float(v.mean())
    if v.size == 1:
        return m, m, m
    half = z * float(v.std(ddof=1)) / float(np.sqrt(v.size))
    return m, m - half, m + half


def macro_throughput_loss(with_femto_bps, baseline_bps):
    """Per-drop fraction of macro throughput lost to femto interference.

    Both arrays must be aligned drop by drop; the baseline comes from
    the femto-free run of the same seeds.
    """
    t = np.asarray(with_femto_bps, dtype=np.float64)
    t0 = np.asarray(baseline_bps, dtype=np.float64)
    if t.shape != t0.shape:
        raise ValueError("paired arrays must line up drop by drop")
    if np.any(t0 <= 0.0):
        raise ValueError("femto-free macro throughput must be positive")
    return (t0 - t) / t0


def femto_throughput_ratio(capped_bps, uncapped_bps):
    """Per-drop femto throughput relative to the hard-cap-only run."""
    t = np.asarray(capped_bps, dtype=np.float64)
    t0 = np.asarray(uncapped_bps, dtype=np.float64)
    if t.shape != t0.shape:
        raise ValueError("paired arrays must line up drop by drop")
    if np.any(t0 <= 0.0):
        raise ValueError("reference femto throughput must be positive")
    return t / t0


def pooled_quantile(pools, q: float = EDGE_USER_QUANTILE) -> float:
    """Empirical quantile (linear interpolation) of users pooled over drops."""
    pool = np.concatenate([np.asarray(p, dtype=np.float64) for p in pools])
    if pool.size == 0:
        raise ValueError("no users in any drop")
    return float(np.quantile(pool, q))


def bootstrap_pooled_stat(pools, stat, n_reps: int = BOOTSTRAP_REPS, seed: int = 0):
    """A pooled statistic with a percentile band from resampling drops.

    ``stat`` maps one pooled array to a float. Resampling whole drops
    keeps each drop's internal correlation intact.
    """
    arrs = [np.asarray(p, dtype=np.float64) for p in pools]
    value = stat(np.concatenate(arrs))
    if len(arrs) == 1:
        return value, value, value
    rng = np.random.default_rng(seed)
    reps = np.empty(n_reps)
    n = len(arrs)
    for b in range(n_reps):
        take = rng.integers(0, n, size=n)
        reps[b] = stat(np.concatenate([arrs[i] for i in take]))
    lo, hi = np.quantile(reps, [0.025, 0.975])
    return float(value), float(lo), float(hi)


@dataclass
class MetricRow:
    """One line of the results table."""

    scheme: str
    axis: str
    axis_value: float | None
    metric: str
    value: float
    ci_low: float
    ci_high: float
    drops: int
    seed: int


def summarize_cell(
    scheme: str,
    axis: str,
    axis_value,
    results,
    seed: int,
    femto_free=None,
    hard_cap=None,
    n_reps: int = BOOTSTRAP_REPS,
):
    """Rows for one sweep point: one scheme at one axis value.

    ``results`` is the list of DropResults for this point, in drop
    order. ``femto_free`` and ``hard_cap`` are the reference runs with
    the same seeds, enabling the paired ratios when present.
    """
    rows = []
    n = len(results)

    def add(metric, value, lo, hi):
        rows.append(MetricRow(scheme, axis, axis_value, metric, value, lo, hi, n, seed))

    macro = [r.macro_center_bps for r in results]
    add("macro_cell_tput_bps", *mean_normal_ci(macro))

    has_femtos = any(r.femto_center_cell_bps.size for r in results)
    if has_femtos:
        add("femto_cell_tput_bps", *mean_normal_ci([r.femto_center_bps for r in results]))

    if femto_free is not None:
        loss = macro_throughput_loss(macro, [r.macro_center_bps for r in femto_free])
        add("macro_tput_loss", *mean_normal_ci(loss))
    if hard_cap is not None and has_femtos:
        ratio = femto_throughput_ratio(
            [r.femto_center_bps for r in results],
            [r.femto_center_bps for r in hard_cap],
        )
        add("femto_tput_ratio", *mean_normal_ci(ratio))

    q_edge = lambda pool: float(np.quantile(pool, EDGE_USER_QUANTILE))  # noqa: E731
    pool_mean = lambda pool: float(pool.mean())  # noqa: E731

    macro_pools = [r.macro_center_user_bps for r in results]
    add("macro_user_mean_bps", *bootstrap_pooled_stat(macro_pools, pool_mean, n_reps))
    add("macro_user_p05_bps", *bootstrap_pooled_stat(macro_pools, q_edge, n_reps))
    femto_pools = [r.femto_center_user_bps for r in results]
    if has_femtos and sum(p.size for p in femto_pools):
        add("femto_user_mean_bps", *bootstrap_pooled_stat(femto_pools, pool_mean, n_reps))
        add("femto_user_p05_bps", *bootstrap_pooled_stat(femto_pools, q_edge, n_reps))
    return rows


def write_rows(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER.split(","))
        for r in rows:
            axis_value = "" if r.axis_value is None else repr(float(r.axis_value))
            w.writerow(
                [r.scheme, r.axis, axis_value, r.metric,
                 repr(r.value), repr(r.ci_low), repr(r.ci_high), r.drops, r.seed]
            )


def read_rows(path):
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_HEADER.split(","):
            raise ValueError(f"unexpected results header in {path}")
        for rec in reader:
            out.append(
                MetricRow(
                    scheme=rec["scheme"],
                    axis=rec["axis"],
                    axis_value=float(rec["axis_value"]) if rec["axis_value"] else None,
                    metric=rec["metric"],
                    value=float(rec["value"]),
                    ci_low=float(rec["ci_low"]),
                    ci_high=float(rec["ci_high"]),
                    drops=int(rec["drops"]),
                    seed=int(rec["seed"]),
                )
            )
    return out


def rows_as_table(rows) -> str:
    """Fixed-width text rendering for the run summary."""
    cols = [f.name for f in fields(MetricRow)]
    cells = [cols]
    for r in rows:
        cells.append(
            [r.scheme, r.axis, "" if r.axis_value is None else f"{r.axis_value:g}",
             r.metric, f"{r.value:.6g}", f"{r.ci_low:.6g}", f"{r.ci_high:.6g}",
             str(r.drops), str(r.seed)]
        )
    widths = [max(len(row[i]) for row in cells) for i in range(len(cols))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in cells]
    return "\n".join(lines) + "\n"
