"""ODE sampling with per-step kinetic energy accumulation and velocity shaping.

Any callable ``field(x, t) -> velocity`` can be integrated on a uniform grid
over [0, 1 - delta_cut] with forward Euler or the explicit midpoint rule.  The
per-step instantaneous power ||v||^2 is recorded at the evaluation that moves
the state (Euler: left endpoint; midpoint: the midpoint evaluation), and the
kinetic path energy is the half-sum of power times the step width.

Kinetic trajectory shaping rescales a base field by a time-dependent gain:
a linearly decaying boost before ``tau_split`` and an exponentially growing
damping after it, continuous at the split.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

VelocityField = Callable[[np.ndarray, float], np.ndarray]

TRACE_HEADER = ("traj_id", "t", "x", "y", "power", "cum_kpe")


class IntegrationDiverged(RuntimeError):
    """Raised when an integrated state or velocity becomes non-finite."""

    def __init__(self, step: int, trajectory: int | None = None):
        where = f"step {step}" if trajectory is None else \
            f"trajectory {trajectory}, step {step}"
        super().__init__(f"non-finite state encountered at {where}")
        self.step = step
        self.trajectory = trajectory


@dataclass(frozen=True)
class SolverConfig:
    method: str = "euler"          # "euler" | "midpoint"
    steps: int = 100
    delta_cut: float = 0.0         # integrate on [0, 1 - delta_cut]
    seed: int = 0                  # initial-state draws in sample_batch

    def __post_init__(self):
        if self.method not in ("euler", "midpoint"):
            raise ValueError(f"unknown solver method {self.method!r}")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if not (0.0 <= self.delta_cut < 0.5):
            raise ValueError("delta_cut must lie in [0, 0.5)")


@dataclass(frozen=True)
class KtsSchedule:
    """Gain schedule: launch boost alpha0, landing damping beta0, rate k, split."""

    alpha0: float = 0.0
    beta0: float = 0.0
    k: float = 3.0
    tau_split: float = 0.6

    def __post_init__(self):
        if self.alpha0 < 0 or self.beta0 < 0:
            raise ValueError("alpha0 and beta0 must be >= 0")
        if self.k <= 0:
            raise ValueError("k must be > 0")
        if not (0.0 < self.tau_split < 1.0):
            raise ValueError("tau_split must lie in (0, 1)")


def kts_eta(s: KtsSchedule, t: float) -> float:
    """Time-dependent gain; equals 1 + alpha0 at t=0 and 1 at the split."""
    if t < s.tau_split:
        return 1.0 + s.alpha0 * max(0.0, 1.0 - t / s.tau_split)
    return 1.0 - s.beta0 * (np.exp(s.k * (t - s.tau_split)) - 1.0)


@dataclass(frozen=True)
class ShapedField:
    """Wrap a base field so that v~(x, t) = eta(t) * base(x, t)."""

    base: VelocityField
    schedule: KtsSchedule

    def __call__(self, x, t: float) -> np.ndarray:
        return kts_eta(self.schedule, t) * self.base(x, t)


def shaped_field(base: VelocityField, s: KtsSchedule) -> ShapedField:
    return ShapedField(base, s)


@dataclass(frozen=True)
class Trajectory:
    """One integrated path with its power trace and accumulated energy.

    ``times`` has steps+1 grid points; ``velocities`` and ``power`` have one
    entry per step at the step's defining evaluation.  ``kpe`` is
    ``kpe_early + kpe_late`` split at ``tau_split`` by the step's left grid
    time.
    """

    times: np.ndarray       # (N+1,)
    states: np.ndarray      # (N+1, d)
    velocities: np.ndarray  # (N, d)
    power: np.ndarray       # (N,)
    kpe: float
    kpe_early: float
    kpe_late: float
    tau_split: float
    meta: dict = field(default_factory=dict)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0

    @property
    def endpoint(self) -> np.ndarray:
        return self.states[-1]

    def cum_kpe(self) -> np.ndarray:
        """Accumulated energy after each grid point (starts at 0)."""
        inc = 0.5 * self.power * self.dt
        return np.concatenate([[0.0], np.cumsum(inc)])


def integrate(field_fn: VelocityField, x0, cfg: SolverConfig,
              tau_split: float = 0.6, meta: dict | None = None,
              _traj_index: int | None = None) -> Trajectory:
    """Integrate one trajectory from ``x0`` on the uniform grid of ``cfg``."""
    x = np.array(x0, dtype=np.float64)
    n = cfg.steps
    horizon = 1.0 - cfg.delta_cut
    dt = horizon / n
    times = np.linspace(0.0, horizon, n + 1)

    states = np.empty((n + 1, x.size))
    velocities = np.empty((n, x.size))
    power = np.empty(n)
    states[0] = x
    for j in range(n):
        t_j = times[j]
        if cfg.method == "euler":
            v = np.asarray(field_fn(x, t_j), dtype=np.float64)
        else:
            v_left = np.asarray(field_fn(x, t_j), dtype=np.float64)
            v = np.asarray(field_fn(x + 0.5 * dt * v_left, t_j + 0.5 * dt),
                           dtype=np.float64)
        x = x + dt * v
        if not (np.all(np.isfinite(v)) and np.all(np.isfinite(x))):
            raise IntegrationDiverged(j, _traj_index)
        velocities[j] = v
        power[j] = float(v @ v)
        states[j + 1] = x

    early = times[:-1] < tau_split
    kpe_early = float(0.5 * power[early].sum() * dt)
    kpe_late = float(0.5 * power[~early].sum() * dt)
    info = {"method": cfg.method, "steps": cfg.steps, "delta_cut": cfg.delta_cut}
    if meta:
        info.update(meta)
    return Trajectory(times, states, velocities, power,
                      kpe=kpe_early + kpe_late, kpe_early=kpe_early,
                      kpe_late=kpe_late, tau_split=tau_split, meta=info)


def sample_batch(field_fn: VelocityField, m: int, cfg: SolverConfig,
                 tau_split: float = 0.6, dim: int = 2,
                 meta: dict | None = None) -> list[Trajectory]:
    """Integrate ``m`` trajectories from i.i.d. standard-normal starts.

    Initial states come from per-trajectory child streams of ``cfg.seed``
    (stream i = SeedSequence(seed).spawn(m)[i]), so results do not depend on
    execution order.  All failures are collected before raising.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    streams = np.random.SeedSequence(cfg.seed).spawn(m)
    out: list[Trajectory] = []
    failures: list[tuple[int, IntegrationDiverged]] = []
    for i, ss in enumerate(streams):
        x0 = np.random.default_rng(ss).standard_normal(dim)
        try:
            out.append(integrate(field_fn, x0, cfg, tau_split, meta, _traj_index=i))
        except IntegrationDiverged as exc:
            failures.append((i, exc))
    if failures:
        idx, first = failures[0]
        err = IntegrationDiverged(first.step, idx)
        err.failures = failures
        raise err
    return out


def save_traces(trajectories: Sequence[Trajectory], path) -> None:
    """Write per-grid-point rows ``traj_id,t,x,y,power,cum_kpe``.

    Row j of a trajectory holds the state at grid point j; its power column is
    the power of the step that produced it (0 for the initial row), and
    cum_kpe is the energy accumulated up to that grid point.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_HEADER)
        for tid, traj in enumerate(trajectories):
            cum = traj.cum_kpe()
            stepped = np.concatenate([[0.0], traj.power])
            for j, (t, st) in enumerate(zip(traj.times, traj.states)):
                writer.writerow([tid, repr(float(t)), repr(float(st[0])),
                                 repr(float(st[1])), repr(float(stepped[j])),
                                 repr(float(cum[j]))])


def load_traces(path) -> list[dict]:
    """Read a trace file into one dict of arrays per trajectory."""
    rows: dict[int, list[tuple]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != TRACE_HEADER:
            raise ValueError(f"expected header {','.join(TRACE_HEADER)!r}, got {header}")
        for row in reader:
            rows.setdefault(int(row[0]), []).append(tuple(float(v) for v in row[1:]))
    out = []
    for tid in sorted(rows):
        arr = np.array(rows[tid])
        out.append({"traj_id": tid, "t": arr[:, 0], "x": arr[:, 1], "y": arr[:, 2],
                    "power": arr[:, 3], "cum_kpe": arr[:, 4]})
    return out


def batch_summary(trajectories: Sequence[Trajectory], extra: dict | None = None) -> dict:
    """JSON-ready summary: per-trajectory energies and endpoints plus metadata."""
    per_traj = [{
        "id": i,
        "kpe": traj.kpe,
        "kpe_early": traj.kpe_early,
        "kpe_late": traj.kpe_late,
        "endpoint": [float(c) for c in traj.endpoint],
    } for i, traj in enumerate(trajectories)]
    meta = dict(trajectories[0].meta) if trajectories else {}
    meta["tau_split"] = trajectories[0].tau_split if trajectories else None
    if extra:
        meta.update(extra)
    return {"trajectories": per_traj, "solver": meta}
