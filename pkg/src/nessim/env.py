"""MDP wrapper: per-sector (tilt, power) state, base-9 joint actions, and the
constraint-gated sum-rate reward."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .network import (
    TILT_MAX_DEG,
    TILT_MIN_DEG,
    Assignment,
    ConstraintConfig,
    ConstraintReport,
    Gbs,
    Mu,
    RadioGeometry,
    associate_cached,
    check_constraints,
    objective_value,
)
from .radio import AntennaParams, ChannelParams, Position

TILT_STEP_DEG = 1.0
POWER_STEP_DB = 5.0
ACTIONS_PER_SECTOR = 9
DEFAULT_SECTOR_LIMIT = 6


class InvalidScenario(ValueError):
    pass


@dataclass(frozen=True)
class Scenario:
    gbss: list[Gbs]
    mu_count: int
    d_min: float
    d_max: float
    rate_min: float
    rate_max: float
    constraints: ConstraintConfig
    channel: ChannelParams
    antenna: AntennaParams
    horizon: int = 100
    seed: int = 0
    rsrp_threshold_dbm: float = -100.0
    resample_on_reset: bool = True
    sector_limit: int = DEFAULT_SECTOR_LIMIT

    def __post_init__(self):
        if not any(g.active for g in self.gbss):
            raise InvalidScenario("no active GBS")
        if self.sector_count > self.sector_limit:
            raise InvalidScenario(
                f"{self.sector_count} controllable sectors exceed limit {self.sector_limit}"
            )

    @property
    def controllable(self) -> list[Gbs]:
        return [g for g in self.gbss if g.active]

    @property
    def sector_count(self) -> int:
        return 3 * len(self.controllable)


@dataclass
class EnvState:
    """Per-sector (tilt_deg, power_dbm) rows for the controllable sectors."""

    rows: np.ndarray  # shape (S, 2)

    def copy(self) -> "EnvState":
        return EnvState(self.rows.copy())


@dataclass(frozen=True)
class EnvAction:
    index: int


@dataclass
class StepResult:
    next_state: EnvState
    reward: float
    served_count: int
    done: bool
    objective: float
    report: ConstraintReport
    assignment: Assignment


def action_space_size(s_count: int) -> int:
    return ACTIONS_PER_SECTOR**s_count


def decode_action(a: EnvAction, s_count: int) -> list[tuple[float, float]]:
    """Base-9 digits, sector 0 least significant; digit d maps to
    (d // 3 - 1) degrees of tilt and (d % 3 - 1) * 5 dB of power."""
    idx = a.index
    if not 0 <= idx < action_space_size(s_count):
        raise IndexError(f"action {idx} out of range for {s_count} sectors")
    deltas = []
    for _ in range(s_count):
        d = idx % ACTIONS_PER_SECTOR
        idx //= ACTIONS_PER_SECTOR
        deltas.append((float(d // 3 - 1) * TILT_STEP_DEG, float(d % 3 - 1) * POWER_STEP_DB))
    return deltas


def encode_action(deltas: list[tuple[float, float]]) -> EnvAction:
    idx = 0
    for dt, dp in reversed(deltas):
        digit = (round(dt / TILT_STEP_DEG) + 1) * 3 + (round(dp / POWER_STEP_DB) + 1)
        idx = idx * ACTIONS_PER_SECTOR + digit
    return EnvAction(idx)


def encode_features(state: EnvState, scn: Scenario) -> np.ndarray:
    """Row-major flattening to [0, 1]: tilt/14 and (p - Pmin)/(Pmax - Pmin)."""
    cfg = scn.constraints
    tilt = state.rows[:, 0] / TILT_MAX_DEG
    power = (state.rows[:, 1] - cfg.p_min_dbm) / (cfg.p_max_dbm - cfg.p_min_dbm)
    return np.column_stack([tilt, power]).reshape(-1)


class NesEnv:
    """Deterministic episodic environment over one scenario.

    MU placements and rate demands are drawn at reset (around a uniformly
    chosen GBS, off ones included, so stranded users appear); sector state
    starts at tilt 7 degrees and the power midpoint.
    """

    def __init__(self, scn: Scenario, rng: np.random.Generator):
        self.scn = scn
        self.rng = rng
        self._frozen_mus: list[Mu] | None = None
        self.state: EnvState | None = None
        self.geom: RadioGeometry | None = None
        self.mus: list[Mu] = []
        self.t = 0

    def _sample_mus(self) -> list[Mu]:
        scn = self.scn
        rng = self.rng
        mus = []
        anchors = rng.integers(0, len(scn.gbss), scn.mu_count)
        radii3 = np.sqrt(
            rng.uniform(scn.d_min**2, scn.d_max**2, scn.mu_count)
        )
        angles = rng.uniform(0.0, 2.0 * math.pi, scn.mu_count)
        thresholds = rng.uniform(scn.rate_min, scn.rate_max, scn.mu_count)
        from .radio import dbm_to_watts

        p_th = dbm_to_watts(scn.rsrp_threshold_dbm)
        for u in range(scn.mu_count):
            g = scn.gbss[anchors[u]]
            dz = g.height - 1.5
            r2d = math.sqrt(max(radii3[u] ** 2 - dz * dz, 0.0))
            pos = Position(
                g.position.x + r2d * math.cos(angles[u]),
                g.position.y + r2d * math.sin(angles[u]),
            )
            mus.append(
                Mu(u, pos, 1.5, rate_threshold=float(thresholds[u]), rsrp_threshold=p_th)
            )
        return mus

    def reset(self) -> EnvState:
        scn = self.scn
        if scn.resample_on_reset or self._frozen_mus is None:
            self.mus = self._sample_mus()
            if not scn.resample_on_reset:
                self._frozen_mus = self.mus
        else:
            self.mus = self._frozen_mus
        self.geom = RadioGeometry(scn.gbss, self.mus, scn.channel, scn.antenna)
        cfg = scn.constraints
        mid_power = 0.5 * (cfg.p_min_dbm + cfg.p_max_dbm)
        rows = np.tile([7.0, mid_power], (scn.sector_count, 1))
        self.state = EnvState(rows)
        self.t = 0
        return self.state.copy()

    def _full_arrays(self, state: EnvState) -> tuple[np.ndarray, np.ndarray]:
        """Expand controllable rows into per-(gbs, sector) arrays."""
        scn = self.scn
        tilts = np.zeros((len(scn.gbss), 3))
        powers = np.full((len(scn.gbss), 3), scn.constraints.p_min_dbm)
        row = 0
        for k, g in enumerate(scn.gbss):
            if g.active:
                tilts[k] = state.rows[row : row + 3, 0]
                powers[k] = state.rows[row : row + 3, 1]
                row += 3
        return tilts, powers

    def _apply(self, state: EnvState, a: EnvAction) -> EnvState:
        scn = self.scn
        deltas = np.array(decode_action(a, scn.sector_count))
        rows = state.rows + deltas
        cfg = scn.constraints
        rows[:, 0] = np.clip(rows[:, 0], TILT_MIN_DEG, TILT_MAX_DEG)
        rows[:, 1] = np.clip(rows[:, 1], cfg.p_min_dbm, cfg.p_max_dbm)
        return EnvState(rows)

    def _evaluate(self, state: EnvState) -> tuple[float, int, float, ConstraintReport, Assignment]:
        scn = self.scn
        tilts, powers = self._full_arrays(state)
        assignment = associate_cached(self.geom, tilts, powers, scn.constraints)
        # Mirror the applied state onto the topology objects for the report.
        for k, g in enumerate(scn.gbss):
            for s in range(3):
                g.sectors[s].tilt_deg = float(tilts[k, s])
                g.sectors[s].power_dbm = float(powers[k, s])
        report = check_constraints(assignment, scn.gbss, self.mus, scn.constraints)
        objective = objective_value(assignment)
        served = assignment.served_count()
        reward = objective if served >= scn.constraints.pi_thresh else 0.0
        return reward, served, objective, report, assignment

    def step(self, a: EnvAction) -> StepResult:
        if self.state is None:
            raise RuntimeError("call reset() before step()")
        next_state = self._apply(self.state, a)
        reward, served, objective, report, assignment = self._evaluate(next_state)
        self.state = next_state
        self.t += 1
        done = self.t >= self.scn.horizon
        return StepResult(next_state.copy(), reward, served, done, objective, report, assignment)

    def evaluate_action(self, a: EnvAction) -> float:
        """One-step reward of `a` from the current state, without mutation."""
        if self.state is None:
            raise RuntimeError("call reset() before evaluate_action()")
        candidate = self._apply(self.state, a)
        reward, _, _, _, _ = self._evaluate(candidate)
        return reward
