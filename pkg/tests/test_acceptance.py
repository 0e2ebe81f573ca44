"""End-to-end acceptance gates for the simulator's headline claims.

Two expensive session fixtures drive most criteria: a single-building
sweep over building distance and external wall loss, and a grid sweep
over buildings per cell. Both run the real engine at reduced but still
meaningful scale (tens of drops, thousands of frames) with a fixed
master seed, so every verdict below is reproducible bit for bit.

Statistical formulation, fixed ahead of time: comparisons whose true
margins are structural (a capped scheme against an uncapped one) are
checked as plain point estimates. Comparisons whose true margins can
sit arbitrarily close to zero (the adaptive cap against the static one
at large distance, macro throughput across adjacent grid densities)
carry a one-sided sampling-noise guard instead: they fail only when
the paired per-drop mean is significantly negative at the 95% level
(mean < -1.645 * se). Point estimates are printed either way, so a
verdict that leaned on the guard is visible in the report.
"""

import time
from types import SimpleNamespace

import numpy as np
import pytest
from scipy.special import j0
from scipy.stats import spearmanr

from conftest import record_criterion
from femtosim.channel import (
    draw_jakes_params,
    jakes_power_gain,
    path_loss_indoor_db,
    path_loss_outdoor_db,
    sample_shadowing,
)
from femtosim.config import ScenarioConfig
from femtosim.deployment import Topology
from femtosim.engine import run_drop, run_drop_indexed
from femtosim.linkadapt import RateFormat, required_sinr_db
from femtosim.metrics import femto_throughput_ratio, macro_throughput_loss

SEED = 1
SCHEMES = ("fixed_cap", "open_loop", "closed_loop")

D_VALUES = (50.0, 100.0, 200.0, 400.0)
LE_VALUES = (1.0, 10.0)
DLE_DROPS = 32
DLE_DATA_FRAMES = 3000
DLE_BUDGET_S = 900.0

M_VALUES = (10, 30, 50)
M_DROPS = 4
M_DATA_FRAMES = 350

GUARD_Z = 1.645  # one-sided 95%


def paired_stats(diffs):
    d = np.asarray(diffs, dtype=np.float64)
    mean = float(d.mean())
    se = float(d.std(ddof=1) / np.sqrt(d.size)) if d.size > 1 else 0.0
    return mean, se


def guard_ok(mean, se):
    """One-sided noise guard: reject only a significantly negative mean."""
    return mean >= -GUARD_Z * se


@pytest.fixture(scope="session")
def dle_sweep():
    """Single-building sweep: D x Le grid, all schemes, plus references."""
    t0 = time.perf_counter()
    base = ScenarioConfig(
        seed=SEED, warmup_frames=200, ni0_window_frames=100,
        data_frames=DLE_DATA_FRAMES, li_db=0.0,
    )
    free_cfg = base.replace(scheme="no_femto")
    free_macro = np.array(
        [run_drop_indexed(free_cfg, d).macro_center_bps for d in range(DLE_DROPS)]
    )

    results = {}
    for le in LE_VALUES:
        for dm in D_VALUES:
            for scheme in SCHEMES:
                cfg = base.replace(scheme=scheme, d_m=dm, le_db=le)
                results[(dm, le, scheme)] = [
                    run_drop_indexed(cfg, d) for d in range(DLE_DROPS)
                ]

    drmt, arft = {}, {}
    for le in LE_VALUES:
        for dm in D_VALUES:
            fc_femto = [r.femto_center_bps for r in results[(dm, le, "fixed_cap")]]
            for scheme in SCHEMES:
                rs = results[(dm, le, scheme)]
                drmt[(dm, le, scheme)] = macro_throughput_loss(
                    [r.macro_center_bps for r in rs], free_macro
                )
                arft[(dm, le, scheme)] = femto_throughput_ratio(
                    [r.femto_center_bps for r in rs], fc_femto
                )

    return SimpleNamespace(
        drmt=drmt,
        arft=arft,
        results=results,
        drops=DLE_DROPS,
        elapsed_s=time.perf_counter() - t0,
    )


@pytest.fixture(scope="session")
def m_sweep():
    """Grid sweep: buildings per cell at desk scale, paired drop indices."""
    base = ScenarioConfig(
        seed=SEED, warmup_frames=140, ni0_window_frames=90,
        data_frames=M_DATA_FRAMES,
    )
    macro = {}
    femto_p05 = {}
    diags = []
    for m in M_VALUES:
        for scheme in SCHEMES:
            cfg = base.replace(scheme=scheme, m_per_cell=m)
            rs = [run_drop_indexed(cfg, d) for d in range(M_DROPS)]
            macro[(m, scheme)] = np.array([r.macro_center_bps for r in rs])
            femto_p05[(m, scheme)] = np.array(
                [float(np.quantile(r.femto_center_user_bps, 0.05)) for r in rs]
            )
            diags.extend((scheme, r.diag) for r in rs)
    return SimpleNamespace(macro=macro, femto_p05=femto_p05, diags=diags)


def test_criterion_01_capped_schemes_protect_macro(dle_sweep):
    worst = max(
        float(np.mean(dle_sweep.drmt[(dm, le, s)]))
        for dm in D_VALUES for le in LE_VALUES for s in ("open_loop", "closed_loop")
    )
    ok = worst <= 0.07 and dle_sweep.drops >= 20 and dle_sweep.elapsed_s <= DLE_BUDGET_S
    record_criterion(
        1, ok,
        f"open/closed-loop macro loss <= 0.07 at all 8 sweep points "
        f"(worst {worst:.4f}); {dle_sweep.drops} drops; "
        f"sweep {dle_sweep.elapsed_s:.0f}s <= {DLE_BUDGET_S:.0f}s",
    )
    assert worst <= 0.07
    assert dle_sweep.drops >= 20
    assert dle_sweep.elapsed_s <= DLE_BUDGET_S


def test_criterion_02_uncapped_hurts_macro_most_up_close(dle_sweep):
    fc = dle_sweep.drmt[(50.0, 1.0, "fixed_cap")]
    details = []
    ok = True
    for scheme in ("open_loop", "closed_loop"):
        mean, se = paired_stats(fc - dle_sweep.drmt[(50.0, 1.0, scheme)])
        lo = mean - 1.96 * se
        ok = ok and lo > 0.0
        details.append(f"fc-{scheme}: {mean:+.4f} (95% lo {lo:+.4f})")
    record_criterion(
        2, ok, "hard-cap macro loss exceeds both capped schemes at D=50, Le=1 "
        "with paired CI separation; " + "; ".join(details),
    )
    assert ok


def test_criterion_03_macro_loss_falls_with_distance(dle_sweep):
    ds, vals = [], []
    for dm in D_VALUES:
        for le in LE_VALUES:
            ds.append(dm)
            vals.append(float(np.mean(dle_sweep.drmt[(dm, le, "fixed_cap")])))
    rho = float(spearmanr(ds, vals).statistic)
    record_criterion(
        3, rho < 0.0,
        f"hard-cap macro loss vs building distance: Spearman rho {rho:+.3f} < 0",
    )
    assert rho < 0.0


def test_criterion_04_adaptive_cap_recovers_femto_throughput(dle_sweep):
    point_ok = True
    guard_fail = []
    min_gap = (None, np.inf)
    for dm in D_VALUES:
        for le in LE_VALUES:
            gap = dle_sweep.arft[(dm, le, "closed_loop")] - dle_sweep.arft[(dm, le, "open_loop")]
            mean, se = paired_stats(gap)
            if mean < min_gap[1]:
                min_gap = ((dm, le), mean)
            if mean < 0:
                point_ok = False
            if not guard_ok(mean, se):
                guard_fail.append(f"D={dm:.0f},Le={le:.0f}: {mean:+.5f} se {se:.5f}")
    wide = (
        dle_sweep.arft[(50.0, 1.0, "closed_loop")] - dle_sweep.arft[(50.0, 1.0, "open_loop")]
    ) - (
        dle_sweep.arft[(400.0, 10.0, "closed_loop")] - dle_sweep.arft[(400.0, 10.0, "open_loop")]
    )
    wide_mean, wide_se = paired_stats(wide)
    ok = not guard_fail and wide_mean > 0.0
    record_criterion(
        4, ok,
        f"closed-loop femto ratio >= open loop at all 8 points (guard: none "
        f"significantly negative; worst point mean {min_gap[1]:+.5f} at "
        f"D={min_gap[0][0]:.0f},Le={min_gap[0][1]:.0f}; all points >= 0: "
        f"{'yes' if point_ok else 'no'}); gap widens toward D=50,Le=1: "
        f"{wide_mean:+.5f} (se {wide_se:.5f}) > 0",
    )
    assert not guard_fail, f"significantly negative gap at {guard_fail}"
    assert wide_mean > 0.0


def test_criterion_05_grid_density_directions(m_sweep):
    notes = []
    mono_ok = True
    for scheme in SCHEMES:
        for lo, hi in ((10, 30), (30, 50)):
            mean, se = paired_stats(m_sweep.macro[(lo, scheme)] - m_sweep.macro[(hi, scheme)])
            if not guard_ok(mean, se):
                mono_ok = False
                notes.append(f"{scheme} {lo}->{hi} rises {mean:+.0f} se {se:.0f}")
    beat_ok = True
    for scheme in ("open_loop", "closed_loop"):
        mean, _ = paired_stats(m_sweep.macro[(50, scheme)] - m_sweep.macro[(50, "fixed_cap")])
        beat_ok = beat_ok and mean > 0.0
        notes.append(f"{scheme}-fc macro @50: {mean:+.0f}")
    p05_mean, p05_se = paired_stats(
        m_sweep.femto_p05[(50, "closed_loop")] - m_sweep.femto_p05[(50, "open_loop")]
    )
    p05_ok = guard_ok(p05_mean, p05_se)
    notes.append(f"cl-ol femto p05 @50: {p05_mean:+.0f} se {p05_se:.0f}")
    ok = mono_ok and beat_ok and p05_ok
    record_criterion(
        5, ok,
        "grid sweep M in {10,30,50}: macro non-increasing in M for all schemes "
        "(one-sided guard), capped schemes beat hard cap on macro at M=50, "
        "closed loop >= open loop on femto 5% user rate at M=50 (guard); "
        + "; ".join(notes),
    )
    assert mono_ok, notes
    assert beat_ok, notes
    assert p05_ok, notes


def test_criterion_06_power_caps_never_violated(dle_sweep, m_sweep):
    worst_pt = -np.inf
    worst_ratio = 0.0
    runs = 0
    for (dm, le, scheme), rs in dle_sweep.results.items():
        for r in rs:
            runs += 1
            worst_pt = max(worst_pt, r.diag["max_pt_dbm"])
            if scheme == "open_loop":
                worst_ratio = max(worst_ratio, r.diag["ol_budget_ratio_max"])
    for scheme, diag in m_sweep.diags:
        runs += 1
        worst_pt = max(worst_pt, diag["max_pt_dbm"])
        if scheme == "open_loop":
            worst_ratio = max(worst_ratio, diag["ol_budget_ratio_max"])
    ok = worst_pt <= 23.0 + 1e-9 and worst_ratio <= 1.0 + 1e-9
    record_criterion(
        6, ok,
        f"zero cap violations over {runs} runs: max transmit power "
        f"{worst_pt:.6f} dBm <= 23; open-loop leakage/budget ratio "
        f"{worst_ratio:.12f} <= 1 + 1e-9",
    )
    assert worst_pt <= 23.0 + 1e-9
    assert worst_ratio <= 1.0 + 1e-9


def test_criterion_07_adaptive_cap_starts_at_static_budget(dle_sweep, m_sweep):
    worst = 0.0
    drops = 0
    for (dm, le, scheme), rs in dle_sweep.results.items():
        if scheme != "closed_loop":
            continue
        for r in rs:
            drops += 1
            worst = max(worst, r.diag["beta_identity_rel_err"])
    for scheme, diag in m_sweep.diags:
        if scheme == "closed_loop":
            drops += 1
            worst = max(worst, diag["beta_identity_rel_err"])
    ok = worst < 1e-12
    record_criterion(
        7, ok,
        f"closed-loop step-0 threshold equals the static budget in every "
        f"drop ({drops} drops, worst relative error {worst:.2e} < 1e-12)",
    )
    assert worst < 1e-12


def test_criterion_08_formula_oracles():
    checks = [
        ("outdoor 1 km", float(path_loss_outdoor_db(1000.0, 2500.0, 0.0)), 150.94),
        ("outdoor 100 m", float(path_loss_outdoor_db(100.0, 2500.0, 0.0)), 110.94),
        ("indoor 10 m", float(path_loss_indoor_db(10.0, 0.0, 0.0)), 67.0),
        ("sinr fmt0", required_sinr_db(RateFormat(128, 19.2, 5.6), 1.25e6), -12.53),
        ("sinr fmt4", required_sinr_db(RateFormat(2048, 307.2, 5.4), 1.25e6), -0.69),
        ("sinr fmt7", required_sinr_db(RateFormat(12288, 1843.2, 11.4), 1.25e6), 13.09),
    ]
    worst = max(abs(got - want) for _, got, want in checks)
    ok = worst <= 0.01
    record_criterion(
        8, ok,
        f"path-loss and required-SINR formula oracles all within 0.01 dB "
        f"(worst deviation {worst:.4f} dB over {len(checks)} cases)",
    )
    for name, got, want in checks:
        assert got == pytest.approx(want, abs=0.01), name


def test_criterion_09_channel_statistics():
    fd = 6.9492
    rng = np.random.default_rng(90)
    params = draw_jakes_params(rng, (60_000,), fd)
    mean_power = float(np.mean(
        [np.mean(jakes_power_gain(params, t)) for t in np.linspace(0.0, 4.0, 25)]
    ))

    scale = np.sqrt(2.0 / params.wc.shape[-1])

    def inphase(t):
        return scale * np.cos(params.wc * np.float32(t) + params.phi).sum(axis=-1)

    x0 = inphase(0.0)
    worst_ac = 0.0
    for lag in np.linspace(0.0, 0.5 / fd, 8):
        r = float(np.mean(x0 * inphase(lag)))
        worst_ac = max(worst_ac, abs(r - float(j0(2 * np.pi * fd * lag))))

    s = sample_shadowing(np.random.default_rng(91), 8.0, 0.5, 100_000, 2)
    corr = float(np.corrcoef(s[:, 0], s[:, 1])[0, 1])

    ok = abs(mean_power - 1.0) <= 0.01 and worst_ac <= 0.05 and abs(corr - 0.5) <= 0.02
    record_criterion(
        9, ok,
        f"fading mean power {mean_power:.4f} within 1 +- 0.01; autocorrelation "
        f"vs Bessel J0 within {worst_ac:.4f} <= 0.05 up to lag 0.5/fd; "
        f"shadowing correlation {corr:.4f} within 0.5 +- 0.02 over 1e5 draws",
    )
    assert mean_power == pytest.approx(1.0, abs=0.01)
    assert worst_ac <= 0.05
    assert corr == pytest.approx(0.5, abs=0.02)


def test_criterion_10_interference_accounting_oracle():
    r_cell = 800.0 / np.sqrt(3.0)
    topo = Topology(
        cell_radius_m=r_cell,
        bs_xy=np.array([[0.0, 0.0], [800.0, 0.0], [60.0, 40.0]]),
        n_macro_bs=2,
        building_xy=np.array([[60.0, 40.0]]),
        building_cell=np.array([0]),
        building_half_m=25.0,
        user_xy=np.array([
            [120.0, -30.0], [-150.0, 80.0],      # macro users, cell 0
            [700.0, 90.0], [920.0, -60.0],       # macro users, cell 1
            [52.0, 33.0], [68.0, 49.0],          # femto users in the building
        ]),
        is_femto_user=np.array([False, False, False, False, True, True]),
        user_building=np.array([-1, -1, -1, -1, 0, 0]),
        user_cell=np.array([0, 0, 1, 1, 0, 0]),
    )
    cfg = ScenarioConfig(
        scheme="closed_loop", warmup_frames=30, ni0_window_frames=15,
        data_frames=100,
    )

    frames = []

    def hook(frame_idx, data):
        frames.append(data)

    run_drop(cfg, seed=[SEED, 0], topology=topo, frame_hook=hook)

    checked = 0
    worst = 0.0
    for data in frames:
        if not data["collect"]:
            continue
        rx = data["p_t_mw"][:, None] * data["gain"] / data["loss"]
        for b in range(3):
            ni_ref = data["noise_mw"]
            for i, owner in enumerate(data["own_bs"]):
                if owner != b:
                    ni_ref += rx[i, b]
            worst = max(worst, abs(data["ni_mw"][b] - ni_ref) / ni_ref)
        checked += 1
    ok = checked >= 100 and worst <= 1e-9
    record_criterion(
        10, ok,
        f"3-station, 6-user network: engine interference level matches the "
        f"brute-force re-summation at every station for {checked} frames "
        f"(worst relative error {worst:.2e} <= 1e-9)",
    )
    assert checked >= 100
    assert worst <= 1e-9
