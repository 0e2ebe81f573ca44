"""Drop engine: builds one network realization and walks it frame by frame.

A drop runs in three phases:

1. warm-up: only macro users transmit. Their power control and
   proportional fair scheduling reach steady state, and each station's
   noise-plus-interference (NI) is time-averaged over the tail of the
   phase to give the pre-activation level NI(0).
2. activation: femto users rank the macro stations by estimated loss,
   report their top victim k*, and receive the victim's reporter count
   J and NI(0); from these each scheme derives its transmit power cap.
3. data: everyone transmits. Per frame: fading advances, every station
   schedules its proportional fair winner, winners pick the fastest
   decodable format and set power by inverting their serving link
   against the last broadcast NI, then the realized SINR at every
   station decides which frames actually deliver their payload.

Stations broadcast NI once per frame; users act on the value measured
``broadcast_delay_frames`` frames earlier, which is where the adaptive
cap's reaction lag comes from. Delay 0 is an idealization: decisions
are made against the stale value, the frame is measured, and everyone
re-decides against that fresh measurement before bits count.

All per-frame math is vectorized over users and stations. Fast fading
parameters live in float32 blocks sized (users, stations, oscillators);
power and interference bookkeeping stays float64.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import channel, deployment, linkadapt, powerctl
from .channel import JakesParams, jakes_power_gain
from .config import ScenarioConfig
from .deployment import Topology
from .units import mw_to_dbm

# rng stream purposes 0..2 belong to deployment
STREAM_SHADOW_MACRO = 3      # macro-user common + macro-to-macro individuals
STREAM_SHADOW_MACRO_FEMTO = 4
STREAM_SHADOW_FEMTO_MACRO = 5  # femto-user common + femto-to-macro individuals
STREAM_SHADOW_FEMTO_FEMTO = 6
STREAM_SHADOW_INDOOR = 7
STREAM_WALLS = 8
STREAM_FADE_MM = 9
STREAM_FADE_MF = 10
STREAM_FADE_FM = 11
STREAM_FADE_FF = 12

SINR_SUCCESS_SLACK = 1e-9  # relative guard so exact-threshold frames decode
MIN_FADING_GAIN = 1e-12


@dataclass
class _FrameDecision:
    """Everything one scheduling-and-transmission pass produced."""

    tx: np.ndarray        # user ids that actually transmitted
    own_bs: np.ndarray    # the station each of them was scheduled at
    ridx: np.ndarray      # granted format index per transmitter
    payload: np.ndarray
    gamma: np.ndarray
    p_t: np.ndarray
    gain: np.ndarray      # (tx, bs) fading power gains
    ni_meas: np.ndarray   # per-station NI after this transmission
    sinr: np.ndarray
    ok: np.ndarray
    ni_used: np.ndarray


def compute_uplink_sinr(p_t_mw, gain, loss_linear, served_index, noise_floor_mw):
    """SINR of one station's served transmitter, plus the station's NI.

    Arrays run over every transmitter active in the frame; NI is the
    noise floor plus all received power except the served user's own.
    """
    p = np.asarray(p_t_mw, dtype=np.float64)
    rx = p * np.asarray(gain, dtype=np.float64) / np.asarray(loss_linear, dtype=np.float64)
    ni = noise_floor_mw + rx.sum() - rx[served_index]
    return float(rx[served_index] / ni), float(ni)


@dataclass
class DropResult:
    """Per-drop outputs plus the bookkeeping the checks and tests rely on."""

    scheme: str
    seed: object
    data_frames: int
    frame_s: float
    # center-cell statistics (the 18 outer cells are interference only)
    macro_center_bps: float
    femto_center_cell_bps: np.ndarray
    macro_center_user_bps: np.ndarray
    femto_center_user_bps: np.ndarray
    # full per-user view for debugging and pooled metrics
    user_bps: np.ndarray
    serving_bs: np.ndarray
    is_femto_user: np.ndarray
    activation: dict = field(default_factory=dict)
    diag: dict = field(default_factory=dict)

    @property
    def femto_center_bps(self) -> float:
        """Mean per-femtocell throughput over the center cell, 0 if none."""
        if self.femto_center_cell_bps.size == 0:
            return 0.0
        return float(self.femto_center_cell_bps.mean())


class _LinkState:
    """Static losses, fading banks, association, schedule tables for a drop."""

    def __init__(self, cfg: ScenarioConfig, seed, topo: Topology):
        self.cfg = cfg
        self.topo = topo
        n_users, n_bs = topo.n_users, topo.n_bs
        n_mu, n_mbs = topo.n_macro_users, topo.n_macro_bs
        n_fu, n_fbs = n_users - n_mu, topo.n_femto_bs

        d = np.linalg.norm(topo.user_xy[:, None, :] - topo.bs_xy[None, :, :], axis=2)

        rng_sm = deployment.stream(seed, STREAM_SHADOW_MACRO)
        rng_smf = deployment.stream(seed, STREAM_SHADOW_MACRO_FEMTO)
        rng_sfm = deployment.stream(seed, STREAM_SHADOW_FEMTO_MACRO)
        rng_sff = deployment.stream(seed, STREAM_SHADOW_FEMTO_FEMTO)
        rng_si = deployment.stream(seed, STREAM_SHADOW_INDOOR)
        rng_walls = deployment.stream(seed, STREAM_WALLS)

        s_out, r_out = cfg.shadow_sigma_outdoor_db, cfg.shadow_rho_outdoor
        s_in, r_in = cfg.shadow_sigma_indoor_db, cfg.shadow_rho_indoor
        f = cfg.carrier_mhz

        loss_db = np.empty((n_users, n_bs))
        mu, fu = slice(0, n_mu), slice(n_mu, n_users)
        mb, fb = slice(0, n_mbs), slice(n_mbs, n_bs)

        common_m = rng_sm.standard_normal(n_mu)
        s_mm = channel.sample_shadowing(rng_sm, s_out, r_out, n_mu, n_mbs, common=common_m)
        loss_db[mu, mb] = channel.path_loss_outdoor_db(d[mu, mb], f, s_mm)

        n_bld = len(topo.building_xy)
        if n_bld:
            le_w, li_w = channel.sample_wall_losses(
                rng_walls, (n_users, n_bld), le_fixed=cfg.le_db, li_fixed=cfg.li_db
            )
            bld_of_fbs = np.arange(n_fbs)  # femto station j sits in building j

            s_mf = channel.sample_shadowing(rng_smf, s_out, r_out, n_mu, n_fbs, common=common_m)
            loss_db[mu, fb] = channel.path_loss_outdoor_to_indoor_db(
                d[mu, fb], f, s_mf, le_w[mu, bld_of_fbs], li_w[mu, bld_of_fbs]
            )

            own_bld = topo.user_building[fu]
            fu_idx = np.arange(n_mu, n_users)
            own_le = le_w[fu_idx, own_bld][:, None]
            own_li = li_w[fu_idx, own_bld][:, None]

            common_f = rng_sfm.standard_normal(n_fu)
            s_fm = channel.sample_shadowing(rng_sfm, s_out, r_out, n_fu, n_mbs, common=common_f)
            loss_db[fu, mb] = channel.path_loss_outdoor_to_indoor_db(
                d[fu, mb], f, s_fm, own_le, own_li
            )

            # between buildings both shells attenuate: local walls plus remote walls
            s_ff = channel.sample_shadowing(rng_sff, s_out, r_out, n_fu, n_fbs, common=common_f)
            cross_le = own_le + le_w[fu_idx[:, None], bld_of_fbs]
            cross_li = own_li + li_w[fu_idx[:, None], bld_of_fbs]
            loss_db[fu, fb] = channel.path_loss_outdoor_to_indoor_db(
                d[fu, fb], f, s_ff, cross_le, cross_li
            )

            # own-building link is plain indoor propagation
            s_ind = channel.sample_shadowing(rng_si, s_in, r_in, n_fu, 1, common=common_f)[:, 0]
            own_col = n_mbs + own_bld
            d_own = d[fu_idx, own_col]
            loss_db[fu_idx, own_col] = channel.path_loss_indoor_db(
                d_own, s_ind, li_w[fu_idx, own_bld]
            )

        self.loss_lin = np.asarray(10.0 ** (loss_db / 10.0))
        self.inv_loss = 1.0 / self.loss_lin

        serving = np.empty(n_users, dtype=np.int64)
        serving[mu] = deployment.associate_macro_users(self.loss_lin[mu, mb])
        if n_fu:
            serving[fu] = topo.femto_serving_bs()
        self.serving = serving
        self.loss_serve = self.loss_lin[np.arange(n_users), serving]

        self.users_pad, self.pad_valid = _users_by_bs(serving, n_bs)

        fd = channel.doppler_hz(cfg.speed_kmh, cfg.carrier_mhz)
        self.doppler = fd
        osc = channel.JAKES_OSCILLATORS
        self.wc = np.empty((n_users, n_bs, osc), dtype=np.float32)
        self.ws = np.empty_like(self.wc)
        self.phi = np.empty_like(self.wc)
        self.psi = np.empty_like(self.wc)
        blocks = [
            (mu, mb, (n_mu, n_mbs), STREAM_FADE_MM),
            (mu, fb, (n_mu, n_fbs), STREAM_FADE_MF),
            (fu, mb, (n_fu, n_mbs), STREAM_FADE_FM),
            (fu, fb, (n_fu, n_fbs), STREAM_FADE_FF),
        ]
        for rows, cols, shape, purpose in blocks:
            if 0 in shape:
                continue
            p = channel.draw_jakes_params(deployment.stream(seed, purpose), shape, fd)
            self.wc[rows, cols] = p.wc
            self.ws[rows, cols] = p.ws
            self.phi[rows, cols] = p.phi
            self.psi[rows, cols] = p.psi

        idx = np.arange(n_users)
        self.serve_params = JakesParams(
            fd, self.wc[idx, serving], self.ws[idx, serving],
            self.phi[idx, serving], self.psi[idx, serving],
        )

    def tx_params(self, tx_ids) -> JakesParams:
        return JakesParams(
            self.doppler, self.wc[tx_ids], self.ws[tx_ids],
            self.phi[tx_ids], self.psi[tx_ids],
        )


def _users_by_bs(serving, n_bs):
    """Per-station user table padded with -1, users ascending per row."""
    counts = np.bincount(serving, minlength=n_bs)
    width = max(1, int(counts.max()))
    pad = np.full((n_bs, width), -1, dtype=np.int64)
    order = np.argsort(serving, kind="stable")
    start = 0
    for b in range(n_bs):
        c = counts[b]
        pad[b, :c] = order[start:start + c]
        start += c
    return pad, pad >= 0


class _DropSim:
    """One drop's mutable state and the frame loop."""

    def __init__(self, cfg: ScenarioConfig, seed, topo=None, frame_hook=None):
        cfg.validate()
        self.cfg = cfg
        self.seed = seed
        self.hook = frame_hook
        self.topo = topo if topo is not None else deployment.drop_topology(cfg, seed)
        self.links = _LinkState(cfg, seed, self.topo)

        if cfg.rate_table_path:
            self.table = linkadapt.load_rate_table(cfg.rate_table_path, cfg.bandwidth_hz)
        else:
            self.table = linkadapt.RateTable(bandwidth_hz=cfg.bandwidth_hz)
        self.gamma_lin = self.table.required_sinr_lin
        self.payloads = self.table.payload_bits
        self.rate_pad = np.concatenate([[0.0], self.table.rate_bps])

        n_users, n_bs = self.topo.n_users, self.topo.n_bs
        self.noise = cfg.noise_floor_mw
        self.pbar = cfg.pmax_mw
        self.frame_s = cfg.frame_s
        self.pf_avg = np.full(n_users, linkadapt.PF_EPSILON_BPS)
        self.pcap = np.full(n_users, self.pbar)
        self.bits = np.zeros(n_users, dtype=np.int64)
        self.bs_bits = np.zeros(n_bs, dtype=np.int64)
        self.femto_users_active = False
        self.is_femto = self.topo.is_femto_user
        self.fu_slice = slice(self.topo.n_macro_users, n_users)

        # broadcast pipeline: users read the value measured delay frames ago
        self.ni_hist = deque(maxlen=max(1, cfg.broadcast_delay_frames))
        self.ni_init = np.full(n_bs, self.noise)

        self.diag = {
            "max_pt_dbm": -np.inf,
            "ol_budget_ratio_max": np.nan,
            "beta_identity_rel_err": np.nan,
            "cl_cap_violations": 0,
            "cl_cap_eq_rel_err_max": 0.0,
            "ni_min_over_noise": np.inf,
        }
        self.activation = {}
        self._ol_ratio_max = 0.0

    # -- broadcast plumbing ------------------------------------------------

    def _ni_used(self):
        if not self.ni_hist:
            return self.ni_init
        if len(self.ni_hist) < self.cfg.broadcast_delay_frames:
            return self.ni_init
        return self.ni_hist[0]

    def _push_ni(self, ni):
        self.ni_hist.append(ni)

    # -- phases --------------------------------------------------------------

    def run(self) -> DropResult:
        cfg = self.cfg
        ni0_acc = np.zeros(self.topo.n_bs)
        ni0_from = cfg.warmup_frames - cfg.ni0_window_frames
        for w in range(cfg.warmup_frames):
            ni = self._frame(frame_idx=w, collect=False, cl_step=None)
            if w >= ni0_from:
                ni0_acc += ni
        self.ni0_bs = ni0_acc / cfg.ni0_window_frames

        self._activate_femtos()

        for n in range(cfg.data_frames):
            self._frame(frame_idx=cfg.warmup_frames + n, collect=True, cl_step=n)

        return self._result()

    def _activate_femtos(self):
        cfg, topo = self.cfg, self.topo
        n_mu = topo.n_macro_users
        n_fu = topo.n_users - n_mu
        if cfg.scheme == "no_femto" or n_fu == 0:
            return
        self.femto_users_active = True

        # downlink-derived loss ranking; the estimate carries path loss and
        # shadowing only (time averaging has removed fast fading), so it
        # equals the static loss by construction
        eirp = cfg.eirp_mw
        received = eirp / self.links.loss_lin[self.fu_slice, :topo.n_macro_bs]
        kstar = np.empty(n_fu, dtype=np.int64)
        l_min = np.empty(n_fu)
        for i in range(n_fu):
            est = powerctl.estimate_neighbors(eirp, received[i], cfg.neighbor_list_size)
            kstar[i] = est.k_star
            l_min[i] = est.l_min

        j_by_bs = np.bincount(kstar, minlength=topo.n_macro_bs)
        j = j_by_bs[kstar]
        ith_ol = powerctl.open_loop_threshold(cfg.alpha_inr, self.noise, j)
        pmax_ol = powerctl.open_loop_pmax(ith_ol, l_min, self.pbar)
        ni0 = self.ni0_bs[kstar]
        beta = powerctl.calibrate_beta(cfg.alpha_inr, self.noise, j, ni0)
        ith0 = beta * ni0
        self.diag["beta_identity_rel_err"] = float(np.max(np.abs(ith0 - ith_ol) / ith_ol))

        self.kstar, self.l_min, self.j = kstar, l_min, j
        self.ith_ol, self.pmax_ol = ith_ol, pmax_ol
        self.beta, self.ith0, self.ni0_u = beta, ith0, ni0
        self.activation = {
            "kstar": kstar, "l_min": l_min, "j": j, "ni0_mw": ni0,
            "ith_ol_mw": ith_ol, "pmax_ol_mw": pmax_ol, "beta": beta, "ith0_mw": ith0,
        }

        if cfg.scheme == "fixed_cap":
            self.pcap[self.fu_slice] = self.pbar
        elif cfg.scheme == "open_loop":
            self.pcap[self.fu_slice] = pmax_ol
        elif cfg.scheme == "closed_loop":
            self.pcap[self.fu_slice] = powerctl.closed_loop_pmax(ith0, l_min, self.pbar)

    def _update_closed_loop(self, step_n, ni_used):
        ith_n = powerctl.closed_loop_threshold(
            self.ith0, self.beta, self.ni0_u, ni_used[self.kstar], step_n
        )
        pcap_f = powerctl.closed_loop_pmax(ith_n, self.l_min, self.pbar)
        self.pcap[self.fu_slice] = pcap_f
        # the adaptive cap can only meet or exceed the static one
        viol = np.count_nonzero(pcap_f < self.pmax_ol * (1.0 - 1e-12))
        if viol:
            self.diag["cl_cap_violations"] += int(viol)
        frozen = ni_used[self.kstar] >= self.ni0_u
        if np.any(frozen):
            err = np.abs(pcap_f[frozen] - self.pmax_ol[frozen]) / self.pmax_ol[frozen]
            self.diag["cl_cap_eq_rel_err_max"] = max(
                self.diag["cl_cap_eq_rel_err_max"], float(err.max())
            )

    # -- one frame -------------------------------------------------------

    def _decide(self, t: float, g_serve, ni_used, cl_step) -> _FrameDecision:
        """One full pass: caps, grants, schedule, power, network-wide NI."""
        links, topo = self.links, self.topo

        if (
            self.femto_users_active
            and self.cfg.scheme == "closed_loop"
            and cl_step is not None
            and cl_step > 0
        ):
            self._update_closed_loop(cl_step, ni_used)

        ni_srv = ni_used[links.serving]
        sinr_hat = self.pcap * g_serve / (links.loss_serve * ni_srv)
        ridx = np.searchsorted(self.gamma_lin, sinr_hat, side="right") - 1
        if not self.femto_users_active:
            ridx[self.fu_slice] = -1

        metric = self.rate_pad[ridx + 1] / self.pf_avg
        safe_pad = np.where(links.pad_valid, links.users_pad, 0)
        metric_pad = np.where(links.pad_valid, metric[safe_pad], -1.0)
        win = np.argmax(metric_pad, axis=1)
        rows = np.arange(topo.n_bs)
        sched = np.where(links.pad_valid[rows, win], links.users_pad[rows, win], -1)
        has_tx = (sched >= 0) & (ridx[np.maximum(sched, 0)] >= 0)
        tx = sched[has_tx]
        own = rows[has_tx]

        gamma_sel = self.gamma_lin[ridx[tx]]
        payload_sel = self.payloads[ridx[tx]]
        # conventional rule against the broadcast NI; the tracked loss is the
        # static loss divided by the current fading gain
        p_req = powerctl.required_power(
            links.loss_serve[tx] / g_serve[tx], ni_used[own], gamma_sel
        )
        p_t = powerctl.cap_power(p_req, self.pcap[tx])

        g_mat = jakes_power_gain(links.tx_params(tx), t)
        contrib = p_t[:, None] * g_mat * links.inv_loss[tx]
        ni_meas = self.noise + contrib.sum(axis=0)
        tx_rows = np.arange(len(tx))
        own_rx = contrib[tx_rows, own]
        ni_meas[own] -= own_rx
        np.maximum(ni_meas, self.noise, out=ni_meas)

        sinr = own_rx / ni_meas[own]
        ok = sinr >= gamma_sel * (1.0 - SINR_SUCCESS_SLACK)
        return _FrameDecision(
            tx=tx, own_bs=own, ridx=ridx[tx], payload=payload_sel,
            gamma=gamma_sel, p_t=p_t, gain=g_mat, ni_meas=ni_meas,
            sinr=sinr, ok=ok, ni_used=ni_used,
        )

    def _frame(self, frame_idx: int, collect: bool, cl_step):
        cfg = self.cfg
        t = frame_idx * self.frame_s
        g_serve = jakes_power_gain(self.links.serve_params, t)
        np.maximum(g_serve, MIN_FADING_GAIN, out=g_serve)

        if cfg.broadcast_delay_frames == 0:
            probe = self._decide(t, g_serve, self._ni_used(), cl_step)
            fr = self._decide(t, g_serve, probe.ni_meas, cl_step)
        else:
            fr = self._decide(t, g_serve, self._ni_used(), cl_step)

        served_bits = fr.payload * fr.ok
        if collect:
            np.add.at(self.bits, fr.tx, served_bits)
            np.add.at(self.bs_bits, fr.own_bs, served_bits)
            self._collect_diag(fr.tx, fr.p_t, fr.ni_meas)

        self.pf_avg *= 1.0 - 1.0 / cfg.pf_time_constant_frames
        self.pf_avg[fr.tx] += served_bits / self.frame_s / cfg.pf_time_constant_frames
        np.maximum(self.pf_avg, linkadapt.PF_EPSILON_BPS, out=self.pf_avg)

        if self.hook is not None:
            self.hook(
                frame_idx,
                {
                    "t": t, "collect": collect, "tx": fr.tx, "own_bs": fr.own_bs,
                    "p_t_mw": fr.p_t, "gain": fr.gain, "loss": self.links.loss_lin[fr.tx],
                    "ni_mw": fr.ni_meas, "sinr": fr.sinr, "ok": fr.ok,
                    "ridx": fr.ridx, "ni_used": fr.ni_used,
                    "noise_mw": self.noise, "pcap_mw": self.pcap.copy(),
                },
            )

        self._push_ni(fr.ni_meas)
        return fr.ni_meas

    def _collect_diag(self, tx, p_t, ni_meas):
        if len(p_t):
            self.diag["max_pt_dbm"] = max(
                self.diag["max_pt_dbm"], mw_to_dbm(float(p_t.max()))
            )
        self.diag["ni_min_over_noise"] = min(
            self.diag["ni_min_over_noise"], float(ni_meas.min() / self.noise)
        )
        if self.cfg.scheme == "open_loop" and self.femto_users_active:
            f_tx = self.is_femto[tx]
            if np.any(f_tx):
                fu_ids = tx[f_tx] - self.topo.n_macro_users
                leak = powerctl.estimated_crosstier_interference(
                    p_t[f_tx], self.l_min[fu_ids]
                )
                ratio = float(np.max(leak / self.ith_ol[fu_ids]))
                self._ol_ratio_max = max(self._ol_ratio_max, ratio)
                self.diag["ol_budget_ratio_max"] = self._ol_ratio_max

    # -- results ---------------------------------------------------------

    def _result(self) -> DropResult:
        cfg, topo = self.cfg, self.topo
        t_data = cfg.data_frames * self.frame_s
        user_bps = self.bits / t_data

        center_macro_users = (self.links.serving == 0) & ~self.is_femto
        center_bld = np.flatnonzero(topo.building_cell == 0)
        center_femto_bs = topo.n_macro_bs + center_bld
        center_femto_users = np.isin(topo.user_building, center_bld) & self.is_femto

        return DropResult(
            scheme=cfg.scheme,
            seed=self.seed,
            data_frames=cfg.data_frames,
            frame_s=self.frame_s,
            macro_center_bps=float(self.bs_bits[0] / t_data),
            femto_center_cell_bps=self.bs_bits[center_femto_bs] / t_data,
            macro_center_user_bps=user_bps[center_macro_users],
            femto_center_user_bps=user_bps[center_femto_users],
            user_bps=user_bps,
            serving_bs=self.links.serving,
            is_femto_user=self.is_femto,
            activation=self.activation,
            diag=self.diag,
        )


def run_drop(
    cfg: ScenarioConfig, seed, topology=None, frame_hook=None, trace_path=None
) -> DropResult:
    """Simulate one drop. ``seed`` is an int or sequence of ints.

    ``topology`` overrides the generated geometry (small handcrafted
    networks in tests); ``frame_hook(frame_idx, data)`` observes every
    frame's transmit set, powers, gains and NI for verification;
    ``trace_path`` writes a per-frame debugging log of who transmitted
    at what power, SINR and rate.
    """
    sim = _DropSim(cfg, seed, topo=topology, frame_hook=frame_hook)
    if trace_path is None:
        return sim.run()
    with open(trace_path, "w") as fh:
        fh.write("frame,user,p_t_dbm,sinr_db,rate_kbps\n")
        inner = sim.hook

        def tracer(frame_idx, data):
            if inner is not None:
                inner(frame_idx, data)
            rates = sim.table.rate_bps[data["ridx"]] / 1e3
            for u, p, s, r in zip(data["tx"], data["p_t_mw"], data["sinr"], rates):
                fh.write(
                    f"{frame_idx},{int(u)},{mw_to_dbm(float(p)):.3f},"
                    f"{10.0 * np.log10(float(s)):.3f},{r:.1f}\n"
                )

        sim.hook = tracer
        return sim.run()


def run_drop_indexed(cfg: ScenarioConfig, drop_index: int) -> DropResult:
    """Drop ``drop_index`` of a scenario: seed derives from (cfg.seed, index)."""
    return run_drop(cfg, seed=[cfg.seed, drop_index])
