"""Experiment orchestration: config loading, scenario generation, policy
evaluation, sweeps, and deterministic CSV/SVG output."""

from __future__ import annotations

import dataclasses
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import baselines, dqn
from .env import EnvAction, NesEnv, Scenario
from .metrics import EvalSummary, MetricsLog, MetricsRow
from .network import ConstraintConfig, Gbs, SectorState
from .radio import AntennaParams, ChannelParams, Position, db_to_linear, dbm_to_watts


class ConfigError(ValueError):
    pass


class IoError(OSError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    # Topology and scenario
    k_gbs: int = 2
    off_ids: tuple[int, ...] = (1,)
    inter_site_m: float = 500.0
    mu_count: int = 15
    d_min: float = 20.0
    d_max: float = 150.0
    rate_min: float = 1.0
    rate_max: float = 3.0
    rsrp_threshold_dbm: float = -100.0
    pi_thresh: int | None = None       # default: ceil(U / 2)
    pi_k_max: int | None = None        # default: 2 * ceil(U / active GBS count)
    p_min_dbm: float = 0.0
    p_max_dbm: float = 45.0
    horizon: int = 100
    resample_on_reset: bool = True
    sector_limit: int = 6
    # Channel
    alpha: float = 3.0
    sigma2_dbm: float = -104.0
    phi_ric: float = 0.1
    rician_k: float = 3.0
    rx_gain_dbi: float = 0.0
    pathloss_mode: str = "literal"
    # Antenna
    g_max_dbi: float = 14.0
    psi_3db_deg: float = 70.0
    front_back_db: float = 20.0
    theta_3db_deg: float = 65.0
    elev_floor_db: float = 20.0
    elev_peak_dbi: float = 0.0
    # Agent
    learning_rate: float = 0.001
    batch_size: int = 32
    zeta: float = 0.9
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_steps: int = 10000
    target_sync_period: int = 200
    hidden_sizes: tuple[int, ...] = (128, 128)
    warmup: int = 500
    buffer_capacity: int = 20000
    # Run control
    iterations: int = 20000
    eval_episodes: int = 5
    seed: int = 0
    out_dir: str = "out"
    svg: bool = False
    mu_grid: tuple[int, ...] = (200, 500, 1000, 1500, 2000)
    distance_grid: tuple[float, ...] = (50.0, 100.0, 200.0, 300.0, 400.0)

    def channel(self) -> ChannelParams:
        return ChannelParams(
            alpha=self.alpha,
            sigma2=dbm_to_watts(self.sigma2_dbm),
            phi_ric=self.phi_ric,
            rician_k=self.rician_k,
            rx_gain=float(db_to_linear(self.rx_gain_dbi)),
            pathloss_mode=self.pathloss_mode,
        )

    def antenna(self) -> AntennaParams:
        return AntennaParams(
            g_max_dbi=self.g_max_dbi,
            psi_3db_deg=self.psi_3db_deg,
            front_back_f_db=self.front_back_db,
            theta_3db_deg=self.theta_3db_deg,
            elev_floor_db=self.elev_floor_db,
            elev_peak_dbi=self.elev_peak_dbi,
        )

    def agent(self) -> dqn.AgentConfig:
        return dqn.AgentConfig(
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            zeta=self.zeta,
            eps_start=self.eps_start,
            eps_end=self.eps_end,
            eps_decay_steps=self.eps_decay_steps,
            target_sync_period=self.target_sync_period,
            hidden_sizes=tuple(self.hidden_sizes),
            warmup=self.warmup,
            buffer_capacity=self.buffer_capacity,
        )


def load_config(path: str | None, **overrides) -> ExperimentConfig:
    """Build a config from an optional JSON file plus keyword overrides."""
    values: dict = {}
    if path is not None:
        try:
            with open(path) as f:
                values = json.load(f)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(values, dict):
            raise ConfigError("config root must be a JSON object")
    values.update({k: v for k, v in overrides.items() if v is not None})
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    for key in values:
        if key not in known:
            raise ConfigError(f"unknown config field: {key}")
    for key in ("off_ids", "hidden_sizes", "mu_grid", "distance_grid"):
        if key in values:
            values[key] = tuple(values[key])
    try:
        return ExperimentConfig(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _lattice_positions(k: int, spacing: float) -> list[Position]:
    side = math.ceil(math.sqrt(k))
    offset = (side - 1) / 2.0
    positions = []
    for i in range(k):
        row, col = divmod(i, side)
        positions.append(Position((col - offset) * spacing, (row - offset) * spacing))
    return positions


def generate_scenario(cfg: ExperimentConfig, rng: np.random.Generator) -> Scenario:
    if cfg.k_gbs < 1:
        raise ConfigError("k_gbs: must be >= 1")
    off = set(cfg.off_ids)
    if not off.issubset(range(cfg.k_gbs)):
        raise ConfigError("off_ids: contains an id outside [0, k_gbs)")
    active_count = cfg.k_gbs - len(off)
    if active_count == 0:
        raise ConfigError("off_ids: no active GBS remains")
    if cfg.mu_count < 0:
        raise ConfigError("mu_count: must be >= 0")
    if cfg.d_min >= cfg.d_max:
        raise ConfigError("d_min/d_max: need d_min < d_max")
    if cfg.rate_min > cfg.rate_max:
        raise ConfigError("rate_min/rate_max: need rate_min <= rate_max")
    if cfg.p_min_dbm >= cfg.p_max_dbm:
        raise ConfigError("p_min_dbm/p_max_dbm: need p_min < p_max")

    pi_thresh = cfg.pi_thresh
    if pi_thresh is None:
        pi_thresh = math.ceil(0.5 * cfg.mu_count)
    pi_k_max = cfg.pi_k_max
    if pi_k_max is None:
        pi_k_max = 2 * math.ceil(max(cfg.mu_count, 1) / active_count)

    constraints = ConstraintConfig(
        pi_thresh=pi_thresh,
        pi_k_max=pi_k_max,
        p_min_dbm=cfg.p_min_dbm,
        p_max_dbm=cfg.p_max_dbm,
        d_min=cfg.d_min,
        d_max=cfg.d_max,
        rate_min=cfg.rate_min,
        rate_max=cfg.rate_max,
    )
    mid = 0.5 * (cfg.p_min_dbm + cfg.p_max_dbm)
    gbss = [
        Gbs(
            id=i,
            position=pos,
            height=10.0,
            active=i not in off,
            sectors=[SectorState(7.0, mid) for _ in range(3)],
        )
        for i, pos in enumerate(_lattice_positions(cfg.k_gbs, cfg.inter_site_m))
    ]
    try:
        return Scenario(
            gbss=gbss,
            mu_count=cfg.mu_count,
            d_min=cfg.d_min,
            d_max=cfg.d_max,
            rate_min=cfg.rate_min,
            rate_max=cfg.rate_max,
            constraints=constraints,
            channel=cfg.channel(),
            antenna=cfg.antenna(),
            horizon=cfg.horizon,
            seed=cfg.seed,
            rsrp_threshold_dbm=cfg.rsrp_threshold_dbm,
            resample_on_reset=cfg.resample_on_reset,
            sector_limit=cfg.sector_limit,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def make_greedy_policy(net: dqn.Mlp):
    def policy(features, s_count, rng):
        return EnvAction(int(np.argmax(dqn.forward(net, features))))

    return policy


def make_max_policy():
    def policy(features, s_count, rng):
        return baselines.max_policy(s_count)

    return policy


def make_random_policy():
    def policy(features, s_count, rng):
        return baselines.random_policy(s_count, rng)

    return policy


EVAL_WINDOW = 10  # terminal steps of each episode that enter the average


def evaluate_policy(policy, scn: Scenario, episodes: int, rng: np.random.Generator) -> EvalSummary:
    from .env import encode_features

    env = NesEnv(scn, rng)
    window = max(1, min(EVAL_WINDOW, scn.horizon))
    rewards = []
    served = []
    for _ in range(episodes):
        state = env.reset()
        tail_rewards = []
        tail_served = []
        for _ in range(scn.horizon):
            features = encode_features(env.state, scn)
            action = policy(features, scn.sector_count, rng)
            result = env.step(action)
            tail_rewards.append(result.reward)
            tail_served.append(result.served_count)
        rewards.extend(tail_rewards[-window:])
        served.extend(tail_served[-window:])
    mean_reward = float(np.mean(rewards)) if rewards else 0.0
    served_frac = float(np.mean(served)) / scn.mu_count if served and scn.mu_count else 0.0
    per_mu = mean_reward / scn.mu_count if scn.mu_count else 0.0
    return EvalSummary("", mean_reward, per_mu, served_frac)


def brute_force_best(env: NesEnv) -> tuple[int, float]:
    """Exhaustive one-step search over the whole joint action space."""
    from .env import action_space_size

    best_a, best_r = 0, -float("inf")
    for a in range(action_space_size(env.scn.sector_count)):
        r = env.evaluate_action(EnvAction(a))
        if r > best_r:
            best_a, best_r = a, r
    return best_a, best_r


@dataclass(frozen=True)
class SweepSpec:
    kind: str                      # 'mu_count' or 'distance_band'
    grid: tuple[float, ...]
    policies: tuple[str, ...] = ("dqn", "random", "max")

    def __post_init__(self):
        if self.kind not in ("mu_count", "distance_band"):
            raise ConfigError(f"unknown sweep kind: {self.kind}")
        if not self.grid:
            raise ConfigError("sweep grid must be nonempty")


def distance_band(value: float) -> tuple[float, float]:
    """Grid value v denotes the band [v - 50, v], floored at 20 m."""
    return (max(20.0, value - 50.0), value)


@dataclass
class SweepRow:
    kind: str
    value: float
    policy: str
    mean_reward: float
    reward_per_mu: float
    served_fraction: float


def run_sweep(spec: SweepSpec, cfg: ExperimentConfig, rng: np.random.Generator) -> list[SweepRow]:
    rows = []
    for i, value in enumerate(spec.grid):
        if spec.kind == "mu_count":
            point_cfg = dataclasses.replace(cfg, mu_count=int(value), pi_thresh=cfg.pi_thresh)
        else:
            lo, hi = distance_band(value)
            point_cfg = dataclasses.replace(cfg, d_min=lo, d_max=hi)
        point_seed = cfg.seed + i
        scn = generate_scenario(point_cfg, np.random.default_rng(point_seed))

        policies = {}
        if "dqn" in spec.policies:
            env = NesEnv(scn, np.random.default_rng(point_seed))
            net, _ = dqn.train(env, point_cfg.agent(), point_cfg.iterations, np.random.default_rng(point_seed))
            policies["dqn"] = make_greedy_policy(net)
        if "random" in spec.policies:
            policies["random"] = make_random_policy()
        if "max" in spec.policies:
            policies["max"] = make_max_policy()

        for name in spec.policies:
            summary = evaluate_policy(
                policies[name], scn, point_cfg.eval_episodes, np.random.default_rng(point_seed + 1)
            )
            rows.append(
                SweepRow(spec.kind, float(value), name, summary.mean_reward,
                         summary.reward_per_mu, summary.served_fraction)
            )
    return rows


def _fmt(x: float) -> str:
    if isinstance(x, float) and math.isnan(x):
        return "nan"
    return f"{x:.9g}"


TRAINING_HEADER = "iteration,reward,avg_reward,loss,epsilon,served"
SWEEP_HEADER = "sweep,value,policy,mean_reward,reward_per_mu,served_fraction"
EVAL_HEADER = "policy,mean_reward,reward_per_mu,served_fraction"


def write_training_csv(log: MetricsLog, path) -> None:
    lines = [TRAINING_HEADER]
    for r in log.rows:
        lines.append(
            f"{r.iteration},{_fmt(r.reward)},{_fmt(r.avg_reward)},"
            f"{_fmt(r.loss)},{_fmt(r.epsilon)},{r.served}"
        )
    _write_text(path, "\n".join(lines) + "\n")


def write_sweep_csv(rows: list[SweepRow], path) -> None:
    lines = [SWEEP_HEADER]
    for r in rows:
        lines.append(
            f"{r.kind},{_fmt(r.value)},{r.policy},{_fmt(r.mean_reward)},"
            f"{_fmt(r.reward_per_mu)},{_fmt(r.served_fraction)}"
        )
    _write_text(path, "\n".join(lines) + "\n")


def write_eval_csv(summaries: list[EvalSummary], path) -> None:
    lines = [EVAL_HEADER]
    for s in summaries:
        lines.append(
            f"{s.policy},{_fmt(s.mean_reward)},{_fmt(s.reward_per_mu)},{_fmt(s.served_fraction)}"
        )
    _write_text(path, "\n".join(lines) + "\n")


def _write_text(path, text: str) -> None:
    try:
        with open(path, "w", newline="\n") as f:
            f.write(text)
    except OSError as exc:
        raise IoError(str(exc)) from exc


def _svg_polyline(points: list[tuple[float, float]], color: str) -> str:
    coords = " ".join(f"{x:.2f},{y:.2f}" for x, y in points)
    return f'<polyline fill="none" stroke="{color}" stroke-width="1" points="{coords}"/>'


def write_training_svg(log: MetricsLog, path, width=800, height=400, margin=40) -> None:
    """Reward and moving-average curves; byte-deterministic output."""
    rewards = log.rewards()
    avg = [r.avg_reward for r in log.rows]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    if rewards:
        top = max(max(rewards), 1e-9)
        n = len(rewards)

        def to_xy(i, v):
            x = margin + (width - 2 * margin) * (i / max(n - 1, 1))
            y = height - margin - (height - 2 * margin) * (v / top)
            return x, y

        parts.append(_svg_polyline([to_xy(i, v) for i, v in enumerate(rewards)], "#9ecae1"))
        parts.append(_svg_polyline([to_xy(i, v) for i, v in enumerate(avg)], "#08519c"))
        parts.append(
            f'<text x="{margin}" y="{margin - 10}" font-size="12">'
            f"reward per iteration (light) and moving average (dark), max {_fmt(top)}</text>"
        )
    parts.append("</svg>")
    _write_text(path, "\n".join(parts) + "\n")


def write_sweep_svg(rows: list[SweepRow], path, width=800, height=400, margin=50) -> None:
    """Per-policy mean-reward bars grouped by grid value; deterministic."""
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    if rows:
        values = sorted({r.value for r in rows})
        policies = sorted({r.policy for r in rows})
        colors = {"dqn": "#08519c", "random": "#74c476", "max": "#de2d26"}
        top = max(max(r.mean_reward for r in rows), 1e-9)
        group_w = (width - 2 * margin) / len(values)
        bar_w = group_w / (len(policies) + 1)
        lookup = {(r.value, r.policy): r.mean_reward for r in rows}
        for gi, v in enumerate(values):
            for pi, p in enumerate(policies):
                reward = lookup.get((v, p), 0.0)
                h = (height - 2 * margin) * reward / top
                x = margin + gi * group_w + pi * bar_w
                y = height - margin - h
                color = colors.get(p, "#636363")
                parts.append(
                    f'<rect x="{x:.2f}" y="{y:.2f}" width="{bar_w:.2f}" '
                    f'height="{h:.2f}" fill="{color}"/>'
                )
            parts.append(
                f'<text x="{margin + gi * group_w:.2f}" y="{height - margin + 15}" '
                f'font-size="11">{_fmt(v)}</text>'
            )
    parts.append("</svg>")
    _write_text(path, "\n".join(parts) + "\n")
