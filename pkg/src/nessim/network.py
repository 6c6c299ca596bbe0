"""Topology, MU association, serving indicators, and constraint checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .radio import (
    EULER_GAMMA,
    AntennaParams,
    ChannelParams,
    Position,
    dbm_to_watts,
    wrap_deg,
)

SECTOR_BORESIGHTS_DEG = (0.0, 120.0, -120.0)

TILT_MIN_DEG = 0.0
TILT_MAX_DEG = 14.0


@dataclass
class SectorState:
    tilt_deg: float
    power_dbm: float


@dataclass
class Gbs:
    id: int
    position: Position
    height: float = 10.0
    active: bool = True
    sectors: list[SectorState] = field(default_factory=list)

    def __post_init__(self):
        if not self.sectors:
            self.sectors = [SectorState(7.0, 22.5) for _ in range(3)]
        if len(self.sectors) != 3:
            raise ValueError("a GBS has exactly three sectors")


@dataclass
class Mu:
    id: int
    position: Position
    height: float = 1.5
    rate_threshold: float = 1.0                    # bits/s/Hz
    rsrp_threshold: float = dbm_to_watts(-100.0)   # watts

    def __post_init__(self):
        if self.rsrp_threshold <= 0:
            raise ValueError("rsrp_threshold must be > 0")


@dataclass(frozen=True)
class ConstraintConfig:
    pi_thresh: int            # minimum total served MUs
    pi_k_max: int             # per-GBS serving capacity
    p_min_dbm: float = 0.0
    p_max_dbm: float = 45.0
    d_min: float = 20.0
    d_max: float = 150.0
    rate_min: float = 1.0     # allowed band for MU rate thresholds
    rate_max: float = 3.0

    def __post_init__(self):
        if self.pi_thresh < 0:
            raise ValueError("pi_thresh must be >= 0")
        if self.pi_k_max < 1:
            raise ValueError("pi_k_max must be >= 1")
        if self.p_min_dbm >= self.p_max_dbm:
            raise ValueError("p_min_dbm must be < p_max_dbm")
        if self.d_min >= self.d_max:
            raise ValueError("d_min must be < d_max")


@dataclass
class Assignment:
    """Per-MU serving links, indicator bundle, and per-link rates."""

    serving: dict[int, tuple[int, int] | None]  # mu id -> (gbs id, sector) or None
    vartheta: dict[int, bool]                   # RSRP gate
    gamma_ind: dict[int, bool]                  # rate gate
    pi_ind: dict[int, bool]                     # served = vartheta and gamma
    rate: dict[int, float]                      # fading-averaged rate, bits/s/Hz

    def served_count(self) -> int:
        return sum(self.pi_ind.values())

    def served_per_gbs(self) -> dict[int, int]:
        counts: dict[int, int] = {}
        for mu_id, link in self.serving.items():
            if link is not None and self.pi_ind[mu_id]:
                counts[link[0]] = counts.get(link[0], 0) + 1
        return counts


@dataclass(frozen=True)
class ConstraintReport:
    served_count_ok: bool   # (c) total served >= pi_thresh
    capacity_ok: bool       # (d) per-GBS served <= pi_k_max
    rates_ok: bool          # (e) served links meet their rate thresholds
    rate_band_ok: bool      # (f) thresholds within [rate_min, rate_max]
    power_ok: bool          # (g) sector powers within [p_min, p_max]
    distance_ok: bool       # (h) nearest-GBS 3D distance within [d_min, d_max]
    tilt_ok: bool           # (i) tilts within [0, 14] degrees

    def all_ok(self) -> bool:
        return all(
            (
                self.served_count_ok,
                self.capacity_ok,
                self.rates_ok,
                self.rate_band_ok,
                self.power_ok,
                self.distance_ok,
                self.tilt_ok,
            )
        )


class RadioGeometry:
    """Precomputed per-(MU, GBS, sector) geometry for fast re-association.

    Tilt/power sweeps only change the elevation term, so everything that
    depends on positions alone is cached as arrays: distances, elevation
    angles, and azimuth offsets per sector.
    """

    def __init__(self, gbss: list[Gbs], mus: list[Mu], ch: ChannelParams, ap: AntennaParams):
        if not gbss:
            raise ValueError("at least one GBS required")
        self.gbss = gbss
        self.mus = mus
        self.ch = ch
        self.ap = ap
        self.n_gbs = len(gbss)
        self.n_mu = len(mus)

        gx = np.array([g.position.x for g in gbss])
        gy = np.array([g.position.y for g in gbss])
        gh = np.array([g.height for g in gbss])
        ux = np.array([m.position.x for m in mus])
        uy = np.array([m.position.y for m in mus])
        uh = np.array([m.height for m in mus])

        dx = ux[:, None] - gx[None, :]
        dy = uy[:, None] - gy[None, :]
        dz = gh[None, :] - uh[:, None]
        d2d = np.hypot(dx, dy)
        self.d3d = np.sqrt(d2d**2 + dz**2)                      # (U, K)
        self.theta_elev = np.degrees(np.arctan2(dz, d2d))       # (U, K)
        bearing = np.degrees(np.arctan2(dy, dx))                # (U, K)
        psi = wrap_deg(bearing[:, :, None] - np.array(SECTOR_BORESIGHTS_DEG)[None, None, :])
        az_att = np.minimum(12.0 * (psi / ap.psi_3db_deg) ** 2, ap.front_back_f_db)
        self.az_gain_db = ap.g_max_dbi - az_att                 # (U, K, 3)
        self.pathloss = self.d3d ** (-ch.alpha)                 # (U, K)
        self.active = np.array([g.active for g in gbss], dtype=bool)
        self.rate_thresholds = np.array([m.rate_threshold for m in mus])
        self.rsrp_thresholds = np.array([m.rsrp_threshold for m in mus])

    def mean_rx_power(self, tilts_deg: np.ndarray, powers_dbm: np.ndarray) -> np.ndarray:
        """Fading-free received power, shape (U, K, 3); zero for off GBSs."""
        ap, ch = self.ap, self.ch
        el_off = self.theta_elev[:, :, None] - tilts_deg[None, :, :]
        el_att = np.minimum(12.0 * (el_off / ap.theta_3db_deg) ** 2, ap.elev_floor_db)
        gain_db = self.az_gain_db + ap.elev_peak_dbi - el_att
        p_tx = 10.0 ** (powers_dbm / 10.0) * 1e-3
        rx = (
            p_tx[None, :, :]
            * self.pathloss[:, :, None]
            * 10.0 ** (gain_db / 10.0)
            * ch.rx_gain
        )
        rx[:, ~self.active, :] = 0.0
        return rx


def sector_arrays(gbss: list[Gbs]) -> tuple[np.ndarray, np.ndarray]:
    tilts = np.array([[s.tilt_deg for s in g.sectors] for g in gbss])
    powers = np.array([[s.power_dbm for s in g.sectors] for g in gbss])
    return tilts, powers


def rsrp(gbs: Gbs, sector: int, mu: Mu, ch: ChannelParams, ap: AntennaParams) -> float:
    """Fading-free received power from one sector toward one MU, watts."""
    from . import radio

    sec = gbs.sectors[sector]
    d3d = radio.distance_3d(gbs.position, gbs.height, mu.position, mu.height)
    geom = radio.compute_angles(
        gbs.position, gbs.height, mu.position, mu.height, SECTOR_BORESIGHTS_DEG[sector]
    )
    gain = radio.combined_gain_db(geom, sec.tilt_deg, ap)
    return radio.received_power(dbm_to_watts(sec.power_dbm), 1.0, d3d, gain, ch)


def associate_cached(geom: RadioGeometry, tilts_deg, powers_dbm, cfg: ConstraintConfig) -> Assignment:
    """Best-RSRP association with capacity eviction, over cached geometry."""
    mus, gbss = geom.mus, geom.gbss
    if geom.n_mu == 0 or not geom.active.any():
        empty = {m.id: None for m in mus}
        off = {m.id: False for m in mus}
        return Assignment(empty, dict(off), dict(off), dict(off), {m.id: 0.0 for m in mus})

    rx = geom.mean_rx_power(np.asarray(tilts_deg, float), np.asarray(powers_dbm, float))
    best_sector = np.argmax(rx, axis=2)                       # (U, K)
    best_rx = np.take_along_axis(rx, best_sector[:, :, None], axis=2)[:, :, 0]

    # Tentative attach: argmax over (gbs, sector), lowest index wins on ties.
    flat = rx.reshape(geom.n_mu, -1)
    cand = np.argmax(flat, axis=1)
    cand_gbs = cand // 3
    cand_sector = cand % 3
    cand_rx = flat[np.arange(geom.n_mu), cand]

    attached = np.ones(geom.n_mu, dtype=bool)
    mu_ids = np.array([m.id for m in mus])
    for k in range(geom.n_gbs):
        if not geom.active[k]:
            attached[cand_gbs == k] = False  # unreachable: off GBS rx is 0
            continue
        members = np.flatnonzero(cand_gbs == k)
        if len(members) > cfg.pi_k_max:
            order = np.lexsort((mu_ids[members], -cand_rx[members]))
            attached[members[order[cfg.pi_k_max:]]] = False

    # Interference: other active GBSs via their best sector toward the MU.
    total_best = best_rx.sum(axis=1)
    interference = total_best - best_rx[np.arange(geom.n_mu), cand_gbs]
    nu = geom.ch.phi_ric * interference + geom.ch.sigma2
    d_serv = geom.d3d[np.arange(geom.n_mu), cand_gbs]
    denom = nu if geom.ch.pathloss_mode == "single" else d_serv ** geom.ch.alpha * nu
    rates = np.log2(1.0 + math.exp(-EULER_GAMMA) * cand_rx / denom)

    vartheta = attached & (cand_rx >= geom.rsrp_thresholds)
    gamma = attached & (rates >= geom.rate_thresholds)
    pi = vartheta & gamma

    serving: dict[int, tuple[int, int] | None] = {}
    for i, m in enumerate(mus):
        if attached[i]:
            serving[m.id] = (gbss[cand_gbs[i]].id, int(cand_sector[i]))
        else:
            serving[m.id] = None
    return Assignment(
        serving,
        {m.id: bool(vartheta[i]) for i, m in enumerate(mus)},
        {m.id: bool(gamma[i]) for i, m in enumerate(mus)},
        {m.id: bool(pi[i]) for i, m in enumerate(mus)},
        {m.id: (float(rates[i]) if attached[i] else 0.0) for i, m in enumerate(mus)},
    )


def associate(
    gbss: list[Gbs],
    mus: list[Mu],
    ch: ChannelParams,
    ap: AntennaParams,
    cfg: ConstraintConfig,
) -> Assignment:
    geom = RadioGeometry(gbss, mus, ch, ap)
    tilts, powers = sector_arrays(gbss)
    return associate_cached(geom, tilts, powers, cfg)


def objective_value(a: Assignment) -> float:
    return sum(a.rate[mu_id] for mu_id, served in a.pi_ind.items() if served)


def check_constraints(
    a: Assignment, gbss: list[Gbs], mus: list[Mu], cfg: ConstraintConfig
) -> ConstraintReport:
    served = a.served_count()
    per_gbs = a.served_per_gbs()

    rates_ok = True
    thresholds = {m.id: m.rate_threshold for m in mus}
    for mu_id, is_served in a.pi_ind.items():
        if is_served and a.rate[mu_id] < thresholds[mu_id]:
            rates_ok = False

    band_ok = all(cfg.rate_min <= m.rate_threshold <= cfg.rate_max for m in mus)

    power_ok = all(
        cfg.p_min_dbm <= s.power_dbm <= cfg.p_max_dbm for g in gbss for s in g.sectors
    )
    tilt_ok = all(
        TILT_MIN_DEG <= s.tilt_deg <= TILT_MAX_DEG for g in gbss for s in g.sectors
    )

    distance_ok = True
    for m in mus:
        from .radio import distance_3d

        d_near = min(
            distance_3d(g.position, g.height, m.position, m.height) for g in gbss
        )
        if not cfg.d_min <= d_near <= cfg.d_max:
            distance_ok = False

    return ConstraintReport(
        served_count_ok=served >= cfg.pi_thresh,
        capacity_ok=all(c <= cfg.pi_k_max for c in per_gbs.values()),
        rates_ok=rates_ok,
        rate_band_ok=band_ok,
        power_ok=power_ok,
        distance_ok=distance_ok,
        tilt_ok=tilt_ok,
    )
