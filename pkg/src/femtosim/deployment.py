"""Network geometry: hexagonal macro layout, buildings, user drops.

The macro tier is a 19-station hexagonal grid (center plus two rings)
of flat-topped cells. Buildings are square, hold one femto station at
their center, and are placed either one at a time at a controlled
distance from the center station (interference studies versus
distance) or scattered uniformly, a fixed count per cell (density
studies). Users are dropped uniformly: macro users over each cell,
femto users over their building.

Every random draw comes from a purpose-keyed stream derived from the
drop seed, so changing the femto layout never perturbs the macro-side
draws. That keeps reference runs (no femto transmissions) bit-paired
with treatment runs on the macro side.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# stream purposes for seeded randomness; channel/engine use 3 and up
STREAM_MACRO_POS = 0
STREAM_BUILDINGS = 1
STREAM_FEMTO_POS = 2

N_MACRO_BS = 19


def stream(seed, purpose: int) -> np.random.Generator:
    """Independent, reproducible generator for one purpose of one drop."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(purpose,))
    return np.random.Generator(np.random.PCG64(ss))


def build_hex_layout(cell_radius_m: float) -> np.ndarray:
    """Positions of the 19 macro stations, center first, then rings.

    Flat-topped axial lattice: site (q, r) sits at
    x = 1.5 R q, y = sqrt(3) R (r + q/2); nearest neighbours are
    sqrt(3) R apart (the inter-site distance). Ring members are ordered
    by angle so indices are stable.
    """
    sites = []
    for q in range(-2, 3):
        for r in range(-2, 3):
            ring = max(abs(q), abs(r), abs(q + r))
            if ring > 2:
                continue
            x = 1.5 * cell_radius_m * q
            y = math.sqrt(3.0) * cell_radius_m * (r + q / 2.0)
            sites.append((ring, math.atan2(y, x) % (2.0 * math.pi), x, y))
    sites.sort(key=lambda s: (s[0], s[1]))
    xy = np.array([(x, y) for _, _, x, y in sites])
    assert xy.shape == (N_MACRO_BS, 2)
    return xy


def hexagon_contains(points, center, cell_radius_m: float) -> np.ndarray:
    """Whether each point lies in the flat-topped hexagon around center.

    Inside iff |y| <= sqrt(3)/2 R and sqrt(3)|x| + |y| <= sqrt(3) R in
    cell-local coordinates; the boundary counts as inside.
    """
    p = np.atleast_2d(points) - np.asarray(center, dtype=np.float64)
    x, y = np.abs(p[:, 0]), np.abs(p[:, 1])
    s3 = math.sqrt(3.0)
    return (y <= s3 / 2.0 * cell_radius_m + 1e-9) & (s3 * x + y <= s3 * cell_radius_m + 1e-9)


def sample_in_hexagon(rng, cell_radius_m: float, n: int) -> np.ndarray:
    """n points uniform over the flat-topped hexagon at the origin.

    Rejection from the bounding box; acceptance is 3/4 so batches
    converge quickly.
    """
    out = np.empty((n, 2))
    filled = 0
    while filled < n:
        batch = max(16, int(1.5 * (n - filled)))
        x = rng.uniform(-cell_radius_m, cell_radius_m, batch)
        y = rng.uniform(-math.sqrt(3.0) / 2.0 * cell_radius_m,
                        math.sqrt(3.0) / 2.0 * cell_radius_m, batch)
        pts = np.column_stack([x, y])
        keep = pts[hexagon_contains(pts, (0.0, 0.0), cell_radius_m)]
        take = min(len(keep), n - filled)
        out[filled:filled + take] = keep[:take]
        filled += take
    return out


@dataclass
class Topology:
    """One drop's geometry. Stations: macro 0..n_macro_bs-1, then femto."""

    cell_radius_m: float
    bs_xy: np.ndarray            # (n_bs, 2)
    n_macro_bs: int
    building_xy: np.ndarray      # (n_buildings, 2) centers, == femto station positions
    building_cell: np.ndarray    # (n_buildings,) owning macro cell index
    building_half_m: float
    user_xy: np.ndarray          # (n_users, 2), macro users first
    is_femto_user: np.ndarray    # (n_users,) bool
    user_building: np.ndarray    # (n_users,) building index, -1 for macro users
    user_cell: np.ndarray        # (n_users,) cell the user was dropped in

    @property
    def n_bs(self) -> int:
        return len(self.bs_xy)

    @property
    def n_femto_bs(self) -> int:
        return self.n_bs - self.n_macro_bs

    @property
    def n_users(self) -> int:
        return len(self.user_xy)

    @property
    def n_macro_users(self) -> int:
        return int(np.count_nonzero(~self.is_femto_user))

    def femto_serving_bs(self) -> np.ndarray:
        """Serving station index for each femto user (its building's station)."""
        fu = self.user_building[self.is_femto_user]
        return self.n_macro_bs + fu


def _footprint_inside(center_xy, half, cell_center, cell_radius_m) -> bool:
    corners = center_xy + np.array(
        [(-half, -half), (-half, half), (half, -half), (half, half)]
    )
    return bool(np.all(hexagon_contains(corners, cell_center, cell_radius_m)))


def _place_single_building(cfg, rng, macro_xy) -> np.ndarray:
    d = float(cfg.d_m)
    half = cfg.building_size_m / 2.0
    if cfg.azimuth_deg is not None:
        az = math.radians(cfg.azimuth_deg)
        center = np.array([d * math.cos(az), d * math.sin(az)])
        if not _footprint_inside(center, half, macro_xy[0], cfg.cell_radius_m):
            raise RuntimeError(
                f"building at d_m={d}, azimuth_deg={cfg.azimuth_deg} does not fit in the center cell"
            )
        return center
    for _ in range(cfg.building_retry_limit):
        az = rng.uniform(0.0, 2.0 * math.pi)
        center = np.array([d * math.cos(az), d * math.sin(az)])
        if _footprint_inside(center, half, macro_xy[0], cfg.cell_radius_m):
            return center
    raise RuntimeError(f"no feasible azimuth found for a building at d_m={d}")


def _place_grid_buildings(cfg, rng, macro_xy):
    """m_per_cell buildings per cell, uniform, footprint inside, no overlap."""
    half = cfg.building_size_m / 2.0
    size = cfg.building_size_m
    centers, cells = [], []
    for cell in range(N_MACRO_BS):
        placed = []
        for _ in range(cfg.m_per_cell):
            for _ in range(cfg.building_retry_limit):
                cand = macro_xy[cell] + sample_in_hexagon(rng, cfg.cell_radius_m, 1)[0]
                if not _footprint_inside(cand, half, macro_xy[cell], cfg.cell_radius_m):
                    continue
                if any(abs(cand[0] - p[0]) < size and abs(cand[1] - p[1]) < size for p in placed):
                    continue
                placed.append(cand)
                break
            else:
                raise RuntimeError(
                    f"could not place {cfg.m_per_cell} buildings in cell {cell} "
                    f"within {cfg.building_retry_limit} tries"
                )
        centers.extend(placed)
        cells.extend([cell] * len(placed))
    return np.array(centers).reshape(-1, 2), np.array(cells, dtype=np.int64)


def drop_topology(cfg, seed) -> Topology:
    """Generate one drop's geometry from a scenario config and seed."""
    macro_xy = build_hex_layout(cfg.cell_radius_m)

    rng_macro = stream(seed, STREAM_MACRO_POS)
    per_cell = cfg.macro_users_per_cell
    macro_users = np.vstack([
        macro_xy[c] + sample_in_hexagon(rng_macro, cfg.cell_radius_m, per_cell)
        for c in range(N_MACRO_BS)
    ])
    macro_cells = np.repeat(np.arange(N_MACRO_BS), per_cell)

    rng_bld = stream(seed, STREAM_BUILDINGS)
    if cfg.single_building:
        building_xy = _place_single_building(cfg, rng_bld, macro_xy).reshape(1, 2)
        building_cell = np.zeros(1, dtype=np.int64)
    elif cfg.m_per_cell > 0:
        building_xy, building_cell = _place_grid_buildings(cfg, rng_bld, macro_xy)
    else:
        building_xy = np.empty((0, 2))
        building_cell = np.empty(0, dtype=np.int64)

    rng_femto = stream(seed, STREAM_FEMTO_POS)
    n_bld = len(building_xy)
    per_bld = cfg.femto_users_per_building
    half = cfg.building_size_m / 2.0
    if n_bld:
        femto_users = (
            building_xy[:, None, :] + rng_femto.uniform(-half, half, (n_bld, per_bld, 2))
        ).reshape(-1, 2)
    else:
        femto_users = np.empty((0, 2))

    user_xy = np.vstack([macro_users, femto_users]) if len(femto_users) else macro_users
    n_mu, n_fu = len(macro_users), len(femto_users)
    is_femto = np.zeros(n_mu + n_fu, dtype=bool)
    is_femto[n_mu:] = True
    user_building = np.full(n_mu + n_fu, -1, dtype=np.int64)
    user_building[n_mu:] = np.repeat(np.arange(n_bld), per_bld)
    user_cell = np.concatenate([
        macro_cells,
        building_cell[user_building[n_mu:]] if n_fu else np.empty(0, dtype=np.int64),
    ])

    return Topology(
        cell_radius_m=cfg.cell_radius_m,
        bs_xy=np.vstack([macro_xy, building_xy]) if n_bld else macro_xy,
        n_macro_bs=N_MACRO_BS,
        building_xy=building_xy,
        building_cell=building_cell,
        building_half_m=half,
        user_xy=user_xy,
        is_femto_user=is_femto,
        user_building=user_building,
        user_cell=user_cell,
    )


def associate_macro_users(loss_to_macro_bs: np.ndarray) -> np.ndarray:
    """Serving station per macro user: least static loss, lowest index on ties.

    Takes the (n_macro_users, n_macro_bs) linear loss block; np.argmin
    returns the first minimum, which is the tie-break we want.
    """
    return np.argmin(loss_to_macro_bs, axis=1)
