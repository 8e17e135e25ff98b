"""Random network snapshots: node placement, requirements, link statistics.

A snapshot holds base stations (positions, generation capacities) and
users (positions, minimum rate and fidelity requirements) placed uniformly
in a square area, with user positions rejection-sampled until every
base-station/user distance falls inside the configured range. Per-link
success probabilities and delivered fidelities are precomputed once here;
every solver downstream consumes them read-only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .fidelity import FidelityConfig, end_to_end_fidelity
from .fso_channel import ChannelConfig, LinkGeometry, success_probability
from .rng import substream

_PLACEMENT_BATCH = 128


class GenerationError(RuntimeError):
    """Snapshot generation failed (placement budget or resample budget)."""


def _default_channel() -> ChannelConfig:
    return ChannelConfig(
        kappa=0.43,
        aperture_radius=0.25,
        sigma_s=1.0,
        theta_d=8.0,
        cn2=5e-14,
        lambda_fso=1550e-9,
        responsivity=0.95,
        eta_th=0.05,
    )


def _default_fidelity() -> FidelityConfig:
    return FidelityConfig(xi=0.2, coherence_time=2.43e-3, processing_delay=4e-6)


@dataclass(frozen=True)
class ScenarioConfig:
    """Snapshot generation parameters (defaults reproduce the simulation setup)."""

    n_qbs: int = 3
    n_qu: int = 4
    area_side: float = 600.0
    d_range: tuple[float, float] = (150.0, 550.0)
    rmax_range: tuple[float, float] = (5e6, 1e7)
    rmin_range: tuple[float, float] = (2e3, 4e3)
    fmin_range: tuple[float, float] = (0.8, 0.95)
    seed: int = 0
    channel: ChannelConfig = field(default_factory=_default_channel)
    fidelity: FidelityConfig = field(default_factory=_default_fidelity)
    infeasible_policy: str = "resample"
    max_placement_attempts: int = 10_000
    max_resample_tries: int = 100

    def __post_init__(self):
        if self.n_qbs < 1 or self.n_qu < 1:
            raise ValueError("need at least one QBS and one QU")
        if self.area_side <= 0:
            raise ValueError("area_side must be positive")
        for name in ("d_range", "rmax_range", "rmin_range", "fmin_range"):
            lo, hi = getattr(self, name)
            if not (math.isfinite(lo) and math.isfinite(hi) and lo <= hi):
                raise ValueError(f"{name} must be a nonempty [lo, hi] interval")
        lo, hi = self.fmin_range
        if lo < 0.25 or hi >= 1.0:
            raise ValueError("fmin_range must lie within [0.25, 1)")
        if self.infeasible_policy not in ("resample", "report"):
            raise ValueError(f"unknown infeasible_policy {self.infeasible_policy!r}")


@dataclass(frozen=True)
class LinkStats:
    distance: float
    s: float
    fidelity: float
    eligible: bool


@dataclass(frozen=True)
class FeasibilityReport:
    ok: bool
    reason: str | None = None


@dataclass
class Scenario:
    """One generated snapshot with its precomputed link matrix."""

    config: ScenarioConfig
    qbs_positions: np.ndarray  # (N, 2) meters
    qu_positions: np.ndarray   # (U, 2) meters
    rmax: np.ndarray           # (N,) pairs/s
    rmin: np.ndarray           # (U,) pairs/s
    fmin: np.ndarray           # (U,)
    dist: np.ndarray           # (N, U) meters
    s: np.ndarray              # (N, U) success probabilities
    fid: np.ndarray            # (N, U) delivered fidelities
    eligible: np.ndarray       # (N, U) bool, fid >= fmin
    placement_attempts: np.ndarray  # (U,) draws used per user
    resamples: int = 0

    @property
    def n_qbs(self) -> int:
        return self.qbs_positions.shape[0]

    @property
    def n_qu(self) -> int:
        return self.qu_positions.shape[0]

    @property
    def links(self) -> tuple[tuple[LinkStats, ...], ...]:
        return tuple(
            tuple(
                LinkStats(
                    distance=float(self.dist[n, j]),
                    s=float(self.s[n, j]),
                    fidelity=float(self.fid[n, j]),
                    eligible=bool(self.eligible[n, j]),
                )
                for j in range(self.n_qu)
            )
            for n in range(self.n_qbs)
        )

    def dump_text(self) -> str:
        """Flat record-per-entity text form for fixture pinning and diffing.

        Columns: `qbs n x y rmax`, `qu j x y rmin fmin`,
        `link n j distance s fidelity eligible` (floats as %.17g).
        """
        out = [f"scenario {self.n_qbs} {self.n_qu} seed {self.config.seed}"]
        for n in range(self.n_qbs):
            out.append(
                f"qbs {n} {self.qbs_positions[n, 0]:.17g} {self.qbs_positions[n, 1]:.17g} "
                f"{self.rmax[n]:.17g}"
            )
        for j in range(self.n_qu):
            out.append(
                f"qu {j} {self.qu_positions[j, 0]:.17g} {self.qu_positions[j, 1]:.17g} "
                f"{self.rmin[j]:.17g} {self.fmin[j]:.17g}"
            )
        for n in range(self.n_qbs):
            for j in range(self.n_qu):
                out.append(
                    f"link {n} {j} {self.dist[n, j]:.17g} {self.s[n, j]:.17g} "
                    f"{self.fid[n, j]:.17g} {int(self.eligible[n, j])}"
                )
        return "\n".join(out) + "\n"


def _place_users(config: ScenarioConfig, qbs_xy: np.ndarray, rng) -> tuple[np.ndarray, np.ndarray]:
    d_lo, d_hi = config.d_range
    positions = np.empty((config.n_qu, 2))
    attempts = np.zeros(config.n_qu, dtype=np.int64)
    for j in range(config.n_qu):
        used = 0
        placed = False
        while used < config.max_placement_attempts:
            batch = min(_PLACEMENT_BATCH, config.max_placement_attempts - used)
            pts = rng.uniform(0.0, config.area_side, size=(batch, 2))
            d = np.linalg.norm(pts[:, None, :] - qbs_xy[None, :, :], axis=2)
            good = np.flatnonzero(np.all((d >= d_lo) & (d <= d_hi), axis=1))
            if good.size:
                positions[j] = pts[good[0]]
                attempts[j] = used + int(good[0]) + 1
                placed = True
                break
            used += batch
        if not placed:
            raise GenerationError(
                f"could not place QU {j}: no position within distance range "
                f"[{d_lo:g}, {d_hi:g}] m of all QBSs after "
                f"{config.max_placement_attempts} attempts"
            )
    return positions, attempts


def _generate_once(config: ScenarioConfig, try_idx: int) -> Scenario:
    qbs_xy = substream(config.seed, "qbs-pos", try_idx).uniform(
        0.0, config.area_side, size=(config.n_qbs, 2)
    )
    qu_xy, attempts = _place_users(config, qbs_xy, substream(config.seed, "qu-pos", try_idx))
    rmax = substream(config.seed, "rmax", try_idx).uniform(*config.rmax_range, size=config.n_qbs)
    rmin = substream(config.seed, "rmin", try_idx).uniform(*config.rmin_range, size=config.n_qu)
    fmin = substream(config.seed, "fmin", try_idx).uniform(*config.fmin_range, size=config.n_qu)

    dist = np.linalg.norm(qbs_xy[:, None, :] - qu_xy[None, :, :], axis=2)
    s = np.empty_like(dist)
    fid = np.empty_like(dist)
    for n in range(config.n_qbs):
        for j in range(config.n_qu):
            geom = LinkGeometry(float(dist[n, j]))
            s[n, j] = success_probability(config.channel, geom)
            fid[n, j] = end_to_end_fidelity(config.fidelity, float(dist[n, j]))
    eligible = fid >= fmin[None, :]

    return Scenario(
        config=config,
        qbs_positions=qbs_xy,
        qu_positions=qu_xy,
        rmax=rmax,
        rmin=rmin,
        fmin=fmin,
        dist=dist,
        s=s,
        fid=fid,
        eligible=eligible,
        placement_attempts=attempts,
        resamples=try_idx,
    )


def generate(config: ScenarioConfig) -> Scenario:
    """Generate a snapshot; deterministic in the config (seed included).

    Under the default `resample` policy, snapshots failing the
    potential-feasibility screen are regenerated from derived substreams
    (never colliding with sibling snapshot seeds) up to
    `max_resample_tries`; under `report` the first snapshot is returned
    as-is and callers inspect `is_potentially_feasible` themselves.
    """
    tries = config.max_resample_tries if config.infeasible_policy == "resample" else 1
    last_reason = None
    for try_idx in range(tries):
        scenario = _generate_once(config, try_idx)
        if config.infeasible_policy == "report":
            return scenario
        report = is_potentially_feasible(scenario)
        if report.ok:
            return scenario
        last_reason = report.reason
    raise GenerationError(
        f"no potentially feasible snapshot in {tries} resamples "
        f"(last reason: {last_reason})"
    )


def eligibility_mask(scenario: Scenario) -> np.ndarray:
    """Boolean N x U mask, true where the delivered fidelity meets the user's floor.

    Fidelity is deterministic per link, so the fidelity constraint reduces
    to forcing associations to zero wherever this mask is false.
    """
    return scenario.fid >= scenario.fmin[None, :]


def is_potentially_feasible(scenario: Scenario) -> FeasibilityReport:
    """Cheap necessary-condition screen; true feasibility is decided by the LP.

    Checks, per user with positive demand: a nonempty eligible set and
    enough best-two delivered capacity; plus the aggregate demand against
    the per-station deliverable capacity bound.
    """
    elig = scenario.eligible
    deliver = scenario.rmax[:, None] * scenario.s  # capacity * success per link
    for j in range(scenario.n_qu):
        if scenario.rmin[j] <= 0:
            continue
        col = np.flatnonzero(elig[:, j])
        if col.size == 0:
            return FeasibilityReport(False, f"QU {j} has no eligible QBS")
        top2 = np.sort(deliver[col, j])[-2:]
        if float(np.sum(top2)) < scenario.rmin[j]:
            return FeasibilityReport(
                False, f"QU {j}: best-two deliverable capacity below its minimum rate"
            )
    per_qbs_best_s = np.where(elig, scenario.s, 0.0).max(axis=1)
    if float(scenario.rmin.sum()) > float(np.sum(scenario.rmax * per_qbs_best_s)):
        return FeasibilityReport(False, "aggregate demand exceeds deliverable capacity bound")
    return FeasibilityReport(True)
