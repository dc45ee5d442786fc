"""Seeded Monte Carlo sweeps over one scenario parameter.

Every trial of every sweep point draws from its own generator,
``substream(master_seed, point_index, trial_index)``, where
``point_index`` is the position of the value in the requested list.
Appending values therefore never changes the randomness of existing
points, and results do not depend on how trials are scheduled across
worker processes: each trial writes into its own slot and the statistics
are computed afterwards in trial order.
"""

from __future__ import annotations

import dataclasses
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .channel import USER_ANGLE_MODES, ArrayGeometry, collocated_channel, draw_system_channels, substream
from .rate import (
    CSI_MODES,
    PRECODERS,
    PowerBudget,
    collocated_sumrate,
    dbm_to_mw,
    distributed_sumrate,
    rate_bs_closed_form,
    rate_gap,
    rate_sbs_closed_form,
)

__all__ = [
    "ConfigError",
    "ScenarioConfig",
    "CurvePoint",
    "CurveSet",
    "SWEEPS",
    "SCHEMES",
    "WORKERS_ENV",
    "config_from_dict",
    "apply_sweep",
    "run_trial",
    "run_sweep",
    "rate_gap_curve",
    "trend_violations",
]

log = logging.getLogger(__name__)

SWEEPS = ("n_sbs", "p_t_dbm", "power_ratio", "n_cl", "p_user")
SCHEMES = ("distributed_hybrid", "collocated_digital", "closed_form")
CLOSED_FORM_CURVES = ("closed_form_sbs", "closed_form_bs", "closed_form_gap")
WORKERS_ENV = "DISTMMWAVE_WORKERS"


class ConfigError(ValueError):
    """Invalid scenario configuration; ``field`` names the offending entry."""

    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.field = field
        self.line = line


@dataclass(frozen=True)
class ScenarioConfig:
    """Complete description of one simulated system and run.

    Defaults are the evaluation setup: 2 users, 3 SBSs with 50 antennas,
    6-antenna users, 4 clusters at power ratio 5 and 10 dBm total power.
    ``path_loss_db`` and ``noise_var_dbm`` together set the operating SNR.
    """

    k_users: int = 2
    n_sbs: int = 3
    n_r: int = 2
    n_d: int = 3
    m_sbs: int = 50
    m_bs: int = 150
    p_user: int = 6
    spacing_ratio: float = 0.5
    n_cl: int = 4
    power_ratio: float = 5.0
    path_loss_db: float = -80.0
    user_angles: str = "per_cluster"
    p_t_dbm: float = 10.0
    noise_var_dbm: float = -74.0
    trials: int = 2000
    master_seed: int = 0
    precoder: str = "svd_per_user"
    csi: str = "genie"
    schemes: tuple = ("distributed_hybrid", "collocated_digital")
    codebook_oversampling: int = 2

    def validate(self) -> "ScenarioConfig":
        """Check every invariant; raises :class:`ConfigError`. Returns ``self``."""
        for name in ("k_users", "n_sbs", "n_r", "n_d", "m_sbs", "m_bs", "p_user", "n_cl", "trials",
                     "codebook_oversampling"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
                raise ConfigError(f"must be an integer >= 1, got {value!r}", name)
        if isinstance(self.master_seed, bool) or not isinstance(self.master_seed, (int, np.integer)) \
                or self.master_seed < 0:
            raise ConfigError(f"must be a non-negative integer, got {self.master_seed!r}", "master_seed")
        for name in ("spacing_ratio", "power_ratio", "path_loss_db", "p_t_dbm", "noise_var_dbm"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float)) or not np.isfinite(value):
                raise ConfigError(f"must be a finite number, got {value!r}", name)
        if self.spacing_ratio <= 0:
            raise ConfigError("must be positive", "spacing_ratio")
        if self.power_ratio <= 0:
            raise ConfigError("must be positive", "power_ratio")
        if self.n_cl > 1 and self.power_ratio * (self.n_cl - 1) < 1:
            raise ConfigError(
                f"strongest cluster cannot be the strongest with power_ratio < 1/(n_cl-1) = {1 / (self.n_cl - 1):.6g}",
                "power_ratio",
            )
        if self.n_sbs * self.n_r != self.k_users * self.n_d:
            raise ConfigError(
                f"RF-chain balance N*N_R = K*N_D violated: {self.n_sbs}*{self.n_r} != {self.k_users}*{self.n_d}",
                "n_d",
            )
        if self.user_angles not in USER_ANGLE_MODES:
            raise ConfigError(f"must be one of {USER_ANGLE_MODES}", "user_angles")
        if self.precoder not in PRECODERS:
            raise ConfigError(f"must be one of {PRECODERS}", "precoder")
        if self.csi not in CSI_MODES:
            raise ConfigError(f"must be one of {CSI_MODES}", "csi")
        schemes = tuple(self.schemes)
        if not schemes or any(s not in SCHEMES for s in schemes) or len(set(schemes)) != len(schemes):
            raise ConfigError(f"must be a non-empty list of distinct entries from {SCHEMES}", "schemes")
        if "distributed_hybrid" in schemes:
            if self.n_r != self.k_users:
                raise ConfigError("the distributed scheme needs one SBS RF chain per user (n_r == k_users)", "n_r")
            if self.n_d != self.n_sbs:
                raise ConfigError("the distributed scheme needs one user RF chain per SBS (n_d == n_sbs)", "n_d")
        return self

    @property
    def budget(self) -> PowerBudget:
        return PowerBudget(dbm_to_mw(self.p_t_dbm), self.k_users, self.n_sbs)

    @property
    def noise_var(self) -> float:
        return dbm_to_mw(self.noise_var_dbm)

    @property
    def path_loss(self) -> float:
        return 10.0 ** (self.path_loss_db / 10.0)

    @property
    def snr_per_user(self) -> float:
        """``loss * E_BS,k * M * P / sigma^2``, the per-user receive SNR."""
        return self.path_loss * self.budget.per_user_energy * self.m_sbs * self.p_user / self.noise_var

    def to_dict(self) -> dict:
        """Nested form used by config files and manifests."""
        flat = dataclasses.asdict(self)
        flat["schemes"] = list(self.schemes)
        return {section: {name: flat[name] for name in names} for section, names in SECTIONS.items()}


SECTIONS = {
    "system": ("k_users", "n_sbs", "n_r", "n_d", "m_sbs", "m_bs", "p_user", "spacing_ratio"),
    "channel": ("n_cl", "power_ratio", "path_loss_db", "user_angles"),
    "power": ("p_t_dbm", "noise_var_dbm"),
    "run": ("trials", "master_seed", "precoder", "csi", "schemes", "codebook_oversampling"),
}


def config_from_dict(tree, lines: dict | None = None) -> ScenarioConfig:
    """Build and validate a config from its nested form.

    Missing fields take their defaults; unknown sections or fields are
    errors. ``lines`` optionally maps ``"section.field"`` to a source line
    for diagnostics.
    """
    lines = lines or {}
    if tree is None:
        tree = {}
    if not isinstance(tree, dict):
        raise ConfigError("top level must be a mapping of sections")
    values = {}
    for section, body in tree.items():
        if section not in SECTIONS:
            raise ConfigError(f"unknown section (expected one of {list(SECTIONS)})", str(section),
                              lines.get(str(section)))
        if body is None:
            continue
        if not isinstance(body, dict):
            raise ConfigError("section must be a mapping", str(section), lines.get(str(section)))
        for name, value in body.items():
            key = f"{section}.{name}"
            if name not in SECTIONS[section]:
                raise ConfigError("unknown field", key, lines.get(key))
            if name == "schemes":
                if isinstance(value, str) or not isinstance(value, (list, tuple)):
                    raise ConfigError("must be a list", key, lines.get(key))
                value = tuple(value)
            elif isinstance(getattr(ScenarioConfig, name), float) and isinstance(value, int) \
                    and not isinstance(value, bool):
                value = float(value)
            values[name] = value
    try:
        return ScenarioConfig(**values).validate()
    except ConfigError as err:
        section = next((s for s, names in SECTIONS.items() if err.field in names), None)
        key = f"{section}.{err.field}" if section else err.field
        raise ConfigError(str(err).split(": ", 1)[-1], key, lines.get(key)) from None


def apply_sweep(config: ScenarioConfig, sweep: str, value) -> ScenarioConfig:
    """Config at one sweep point, re-validated.

    Sweeping ``n_sbs`` keeps the per-SBS array and the per-user RF-chain
    balance: ``n_d`` becomes ``value * n_r / k_users`` and the collocated
    array grows to ``value * m_sbs`` antennas.
    """
    if sweep not in SWEEPS:
        raise ConfigError(f"unknown sweep (expected one of {SWEEPS})", "sweep")
    if sweep in ("n_sbs", "n_cl", "p_user"):
        if float(value) != int(value):
            raise ConfigError(f"must be an integer, got {value!r}", sweep)
        value = int(value)
    else:
        value = float(value)
    changes = {sweep: value}
    if sweep == "n_sbs":
        n_d, rem = divmod(value * config.n_r, config.k_users)
        if rem:
            raise ConfigError(
                f"RF-chain balance N*N_R = K*N_D violated: {value}*{config.n_r} is not a multiple of "
                f"K={config.k_users}",
                "n_sbs",
            )
        changes.update(n_d=n_d, m_bs=value * config.m_sbs)
    return dataclasses.replace(config, **changes).validate()


def run_trial(config: ScenarioConfig, point: int, trial: int) -> dict[str, float]:
    """Monte Carlo sum-rates of one trial for every simulated scheme."""
    rng = substream(config.master_seed, point, trial)
    rng_dist, rng_coll = rng.spawn(2)
    sbs_geom = ArrayGeometry(config.m_sbs, config.spacing_ratio)
    user_geom = ArrayGeometry(config.p_user, config.spacing_ratio)
    out = {}
    if "distributed_hybrid" in config.schemes:
        channels = draw_system_channels(
            rng_dist, config.n_sbs, config.k_users, sbs_geom, user_geom,
            config.n_cl, config.power_ratio, config.path_loss, config.user_angles,
        )
        out["distributed_hybrid"] = distributed_sumrate(
            channels, config.budget, config.noise_var, sbs_geom, user_geom,
            precoder=config.precoder, csi=config.csi, rng=rng_dist,
            oversampling=config.codebook_oversampling,
        )
    if "collocated_digital" in config.schemes:
        bs_geom = ArrayGeometry(config.m_bs, config.spacing_ratio)
        channels = [
            collocated_channel(child, bs_geom, user_geom, config.n_cl, config.power_ratio,
                               config.path_loss, config.user_angles)
            for child in rng_coll.spawn(config.k_users)
        ]
        out["collocated_digital"] = collocated_sumrate(channels, config.budget, config.noise_var)
    return out


def _closed_form(config: ScenarioConfig) -> dict[str, float]:
    loss, nv = config.path_loss, config.noise_var
    budget = config.budget
    sbs = rate_sbs_closed_form(
        config.n_sbs, config.m_sbs, config.p_user, np.full((config.n_sbs, config.k_users), loss),
        budget.per_sbs_stream_energy, nv,
    )
    bs = rate_bs_closed_form(
        config.n_sbs, config.m_sbs, config.p_user, np.full(config.k_users, loss), budget.per_user_energy, nv
    )
    return {"closed_form_sbs": sbs, "closed_form_bs": bs, "closed_form_gap": sbs - bs}


def _run_block(args) -> list[dict[str, float]]:
    config, point, trials = args
    return [run_trial(config, point, t) for t in trials]


@dataclass
class CurvePoint:
    """Statistics of every scheme at one sweep value, keyed by scheme name."""

    sweep_value: float
    mean: dict[str, float]
    ci95: dict[str, float]
    trials: dict[str, int]


@dataclass
class CurveSet:
    """Averaged rate curves of one sweep, points sorted by ``sweep_value``.

    ``rejected`` lists ``(sweep_value, reason)`` for points whose config
    was invalid.
    """

    sweep_name: str
    points: list[CurvePoint]
    rejected: list[tuple[float, str]] = field(default_factory=list)

    def schemes(self) -> list[str]:
        seen: list[str] = []
        for p in self.points:
            seen.extend(s for s in p.mean if s not in seen)
        return seen

    def curve(self, scheme: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(sweep_values, means, ci95)`` of one scheme."""
        pts = [p for p in self.points if scheme in p.mean]
        return (
            np.array([p.sweep_value for p in pts], dtype=float),
            np.array([p.mean[scheme] for p in pts]),
            np.array([p.ci95[scheme] for p in pts]),
        )

    def rows(self) -> list[tuple]:
        """``(sweep_value, scheme, mean, ci95, trials)`` rows in output order."""
        return [
            (p.sweep_value, s, p.mean[s], p.ci95[s], p.trials[s])
            for p in self.points
            for s in p.mean
        ]

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "CurveSet":
        return cls(
            data["sweep_name"],
            [CurvePoint(**p) for p in data["points"]],
            [tuple(r) for r in data.get("rejected", [])],
        )


def _summary(samples: np.ndarray) -> tuple[float, float]:
    n = len(samples)
    mean = float(np.mean(samples))
    ci = float(1.96 * np.std(samples, ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return mean, ci


def _worker_count(workers: int | None) -> int:
    if workers is None:
        env = os.environ.get(WORKERS_ENV, "").strip()
        workers = int(env) if env else 1
    if workers < 1:
        raise ValueError("worker count must be >= 1")
    return workers


def run_sweep(config: ScenarioConfig, sweep: str, values, workers: int | None = None) -> CurveSet:
    """Average each scheme over ``config.trials`` trials at every sweep value.

    ``workers`` (default: the ``DISTMMWAVE_WORKERS`` environment variable,
    else 1) sets the number of worker processes; the result is identical
    for any value. Points whose config is invalid are logged and skipped.
    """
    if sweep not in SWEEPS:
        raise ConfigError(f"unknown sweep (expected one of {SWEEPS})", "sweep")
    values = list(values)
    if not values:
        raise ConfigError("no sweep values given", "values")
    workers = _worker_count(workers)
    points, rejected = [], []
    pool = ProcessPoolExecutor(workers) if workers > 1 else None
    try:
        for idx, value in enumerate(values):
            try:
                cfg = apply_sweep(config, sweep, value)
            except ConfigError as err:
                log.warning("sweep point %s=%s rejected: %s", sweep, value, err)
                rejected.append((float(value), str(err)))
                continue
            mean, ci, trials = {}, {}, {}
            mc = [s for s in cfg.schemes if s != "closed_form"]
            if mc:
                chunks = np.array_split(np.arange(cfg.trials), workers * 4 if pool else 1)
                jobs = [(cfg, idx, chunk.tolist()) for chunk in chunks if len(chunk)]
                blocks = list(pool.map(_run_block, jobs)) if pool else [_run_block(j) for j in jobs]
                results = [r for block in blocks for r in block]
                for s in mc:
                    mean[s], ci[s] = _summary(np.array([r[s] for r in results]))
                    trials[s] = cfg.trials
            if "closed_form" in cfg.schemes:
                for s, v in _closed_form(cfg).items():
                    mean[s], ci[s], trials[s] = v, 0.0, 1
            points.append(CurvePoint(float(value), mean, ci, trials))
    finally:
        if pool is not None:
            pool.shutdown()
    points.sort(key=lambda p: p.sweep_value)
    return CurveSet(sweep, points, rejected)


def rate_gap_curve(k_users: int, snr_db: float, n_values) -> CurveSet:
    """Exact and high-SNR rate gap at each SBS count (no randomness)."""
    snr = 10.0 ** (snr_db / 10.0)
    if not np.isfinite(snr) or snr <= 0:
        raise ValueError("SNR must be positive and finite")
    points = []
    for n in sorted(int(v) for v in n_values):
        exact, approx = rate_gap(k_users, n, snr)
        points.append(CurvePoint(float(n), {"exact": exact, "approx": approx},
                                 {"exact": 0.0, "approx": 0.0}, {"exact": 1, "approx": 1}))
    return CurveSet("n_sbs", points)


def trend_violations(means, ci95, direction: str) -> int:
    """Count adjacent pairs that break a monotone trend.

    ``non_decreasing``/``non_increasing``: the step goes the wrong way by
    more than the sum of the two confidence half-widths. ``increasing``:
    the point estimate fails to go up at all.
    """
    means, ci95 = np.asarray(means, dtype=float), np.asarray(ci95, dtype=float)
    step = np.diff(means)
    slack = ci95[:-1] + ci95[1:]
    if direction == "non_decreasing":
        return int(np.sum(step < -slack))
    if direction == "non_increasing":
        return int(np.sum(step > slack))
    if direction == "increasing":
        return int(np.sum(step <= 0))
    raise ValueError("direction must be non_decreasing, non_increasing or increasing")
