"""Clustered narrowband mmWave channels between ULAs.

A link between an ``M``-antenna transmitter and a ``P``-antenna user is

    H = sqrt(path_loss / n_cl) * sum_l gain_l * a(theta_l) b(phi_l)^H

with ULA response ``a(theta)[m] = exp(-j 2 pi m (d/lambda) cos(theta))``.
Cluster gains are rescaled on every draw so that the strongest cluster
carries exactly ``power_ratio`` times the power of the remaining clusters
and the gains sum to ``n_cl`` in power; the average channel energy is then
``path_loss * M * P`` whatever the cluster count.

Random streams are numpy ``Generator`` objects backed by PCG64 and seeded
through ``SeedSequence``; see :func:`substream`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ArrayGeometry",
    "PathSet",
    "ChannelRealization",
    "USER_ANGLE_MODES",
    "substream",
    "steering_vector",
    "steering_matrix",
    "draw_paths",
    "assemble_channel",
    "draw_system_channels",
    "collocated_channel",
]

#: ``per_cluster`` draws one user-side angle per cluster; ``shared`` draws a
#: single user-side angle per link and reuses it for every cluster.
USER_ANGLE_MODES = ("per_cluster", "shared")


def substream(master_seed: int, *key: int) -> np.random.Generator:
    """Deterministic PCG64 generator for the counter ``key`` under ``master_seed``.

    Distinct keys give statistically independent streams, and a stream
    never depends on which other keys were requested.
    """
    seq = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(seq))


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform linear array: element count and spacing in wavelengths."""

    num_antennas: int
    spacing_ratio: float = 0.5

    def __post_init__(self):
        if int(self.num_antennas) != self.num_antennas or self.num_antennas < 1:
            raise ValueError(f"num_antennas must be a positive integer, got {self.num_antennas}")
        if not np.isfinite(self.spacing_ratio) or self.spacing_ratio <= 0:
            raise ValueError(f"spacing_ratio must be finite and positive, got {self.spacing_ratio}")


def _check_angles(angles: np.ndarray) -> None:
    if np.any(angles < 0) or np.any(angles > np.pi) or not np.all(np.isfinite(angles)):
        raise ValueError("angles must lie in [0, pi]")


def steering_matrix(geometry: ArrayGeometry, angles) -> np.ndarray:
    """Stack of steering vectors, one column per angle (``num_antennas x len(angles)``)."""
    angles = np.atleast_1d(np.asarray(angles, dtype=float))
    _check_angles(angles)
    m = np.arange(geometry.num_antennas)[:, None]
    return np.exp(-2j * np.pi * geometry.spacing_ratio * m * np.cos(angles)[None, :])


def steering_vector(geometry: ArrayGeometry, angle: float) -> np.ndarray:
    """ULA response to a plane wave at ``angle`` radians, unit-modulus entries."""
    return steering_matrix(geometry, [angle])[:, 0]


@dataclass(frozen=True)
class PathSet:
    """Propagation paths of one link, strongest cluster first.

    ``aoa_sbs``, ``aoa_user`` and ``gains`` are 1-D arrays of length
    ``n_cl``. ``power_ratio`` is the strongest-to-rest power ratio; it is
    ``inf`` for a single-path (pure LOS) link.
    """

    aoa_sbs: np.ndarray
    aoa_user: np.ndarray
    gains: np.ndarray
    power_ratio: float

    @property
    def n_cl(self) -> int:
        return len(self.gains)


@dataclass(frozen=True)
class ChannelRealization:
    """``matrix`` is transmitter-antennas x user-antennas."""

    matrix: np.ndarray
    path_set: PathSet
    path_loss: float


def draw_paths(
    rng: np.random.Generator,
    n_cl: int,
    power_ratio: float,
    user_angles: str = "per_cluster",
) -> PathSet:
    """Draw cluster angles and gains for one link.

    Angles are i.i.d. uniform on ``[0, pi]``; gain phases are uniform and
    magnitudes start from Rayleigh draws that are then sorted and rescaled
    so the ``power_ratio`` constraint and the total power ``n_cl`` hold
    exactly. ``power_ratio`` is ignored when ``n_cl == 1``.
    """
    if n_cl < 1:
        raise ValueError("n_cl must be >= 1")
    if user_angles not in USER_ANGLE_MODES:
        raise ValueError(f"user_angles must be one of {USER_ANGLE_MODES}")
    aoa_sbs = rng.uniform(0.0, np.pi, n_cl)
    if user_angles == "per_cluster":
        aoa_user = rng.uniform(0.0, np.pi, n_cl)
    else:
        aoa_user = np.full(n_cl, rng.uniform(0.0, np.pi))
    phases = np.exp(2j * np.pi * rng.random(n_cl))
    raw = np.abs(rng.standard_normal(n_cl) + 1j * rng.standard_normal(n_cl))
    if n_cl == 1:
        return PathSet(aoa_sbs, aoa_user, phases, np.inf)

    if power_ratio <= 0:
        raise ValueError("power_ratio must be positive")
    # the strongest cluster is pinned; the others keep their relative sizes
    rest = np.sort(raw)[::-1][1:] ** 2
    rest_power = n_cl / (power_ratio + 1.0)
    power = np.empty(n_cl)
    power[0] = n_cl - rest_power
    power[1:] = _capped_split(rest, rest_power, power[0])
    return PathSet(aoa_sbs, aoa_user, np.sqrt(power) * phases, float(power_ratio))


def _capped_split(weights: np.ndarray, total: float, cap: float) -> np.ndarray:
    """Split ``total`` proportionally to ``weights`` with no share above ``cap``.

    Only binds when ``power_ratio < 1``; the sorted order of ``weights`` is
    preserved.
    """
    if total > len(weights) * cap * (1 + 1e-12):
        raise ValueError("power_ratio too small for this cluster count: need power_ratio >= 1/(n_cl-1)")
    share = weights * (total / weights.sum())
    capped = np.zeros(len(weights), dtype=bool)
    while np.any(share > cap) and not np.all(capped):
        capped |= share > cap
        free = total - cap * capped.sum()
        share = np.where(capped, cap, weights * (free / weights[~capped].sum()) if np.any(~capped) else 0.0)
    return np.minimum(share, cap)


def assemble_channel(
    path_set: PathSet,
    sbs_geom: ArrayGeometry,
    user_geom: ArrayGeometry,
    path_loss: float = 1.0,
) -> ChannelRealization:
    """Build the ``M x P`` channel matrix of a path set."""
    if path_loss < 0:
        raise ValueError("path_loss must be non-negative")
    a = steering_matrix(sbs_geom, path_set.aoa_sbs)
    b = steering_matrix(user_geom, path_set.aoa_user)
    scale = np.sqrt(path_loss / path_set.n_cl)
    matrix = scale * (a * path_set.gains) @ b.conj().T
    return ChannelRealization(matrix, path_set, float(path_loss))


def draw_system_channels(
    rng: np.random.Generator,
    n_sbs: int,
    n_users: int,
    sbs_geom: ArrayGeometry,
    user_geom: ArrayGeometry,
    n_cl: int,
    power_ratio: float,
    path_loss=1.0,
    user_angles: str = "per_cluster",
) -> list[list[ChannelRealization]]:
    """Independent channels for every SBS/user pair, indexed ``[sbs][user]``.

    Each link draws from its own child stream of ``rng``. ``path_loss`` is a
    scalar or an ``n_sbs x n_users`` array.
    """
    if n_sbs < 1 or n_users < 1:
        raise ValueError("n_sbs and n_users must be >= 1")
    loss = np.broadcast_to(np.asarray(path_loss, dtype=float), (n_sbs, n_users))
    children = rng.spawn(n_sbs * n_users)
    out = []
    for i in range(n_sbs):
        row = []
        for k in range(n_users):
            paths = draw_paths(children[i * n_users + k], n_cl, power_ratio, user_angles)
            row.append(assemble_channel(paths, sbs_geom, user_geom, loss[i, k]))
        out.append(row)
    return out


def collocated_channel(
    rng: np.random.Generator,
    bs_geom: ArrayGeometry,
    user_geom: ArrayGeometry,
    n_cl: int,
    power_ratio: float,
    path_loss: float = 1.0,
    user_angles: str = "per_cluster",
) -> ChannelRealization:
    """One user's channel from a single large collocated array."""
    paths = draw_paths(rng, n_cl, power_ratio, user_angles)
    return assemble_channel(paths, bs_geom, user_geom, path_loss)
