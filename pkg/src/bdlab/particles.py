"""Exact event-driven simulation of branching random walks with selection.

Each particle branches at rate one; the child sits at the parent's position
plus a kernel draw.  In ``selection`` mode the leftmost particle is removed
after every birth so the population stays at N.  In ``free`` mode nobody is
removed and the population is a Yule process.

Positions live in a ``SortedList``.  Rank ``j`` (1-based, descending) refers
to the j-th largest position, so ``eta(1)`` is the maximum.
"""

from __future__ import annotations

import heapq
import math
import re
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from sortedcontainers import SortedList

from .grid import GridFunction
from .kernels import DisplacementKernel
from .replicas import map_replicas, replica_rng

BLOCK = 4096


@dataclass(frozen=True)
class InitialCondition:
    """Law of the i.i.d. initial positions.

    ``kind`` is ``exponential`` (``param`` is the rate), ``uniform`` (on
    ``[0, param]``) or ``point`` (every particle at ``param``).
    """

    kind: str = "exponential"
    param: float = 1.0

    def __post_init__(self):
        if self.kind not in ("exponential", "uniform", "point"):
            raise ValueError(f"unknown initial condition {self.kind!r}")
        if self.kind != "point" and not self.param > 0:
            raise ValueError("initial-condition parameter must be positive")
        if self.kind == "point" and self.param < 0:
            raise ValueError("initial positions must be non-negative")

    @classmethod
    def parse(cls, text: str) -> "InitialCondition":
        m = re.fullmatch(r"\s*([a-z]+)\s*(?:\(\s*([^)]*)\s*\))?\s*", text.lower())
        if not m:
            raise ValueError(f"cannot parse initial condition {text!r}")
        name = {"exp": "exponential", "exponential": "exponential", "uniform": "uniform",
                "point": "point", "zero": "point"}.get(m.group(1))
        if name is None:
            raise ValueError(f"unknown initial condition {text!r}")
        default = 0.0 if name == "point" else 1.0
        return cls(name, float(m.group(2)) if m.group(2) else default)

    @property
    def spec(self) -> str:
        short = {"exponential": "exp"}.get(self.kind, self.kind)
        return f"{short}({self.param!r})"

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "exponential":
            return rng.standard_exponential(n) / self.param
        if self.kind == "uniform":
            return rng.random(n) * self.param
        return np.full(n, float(self.param))

    def tail(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "exponential":
            return np.exp(-self.param * np.maximum(x, 0.0))
        if self.kind == "uniform":
            return np.clip(1 - x / self.param, 0.0, 1.0)
        raise ValueError("a point mass has no density")

    def density_grid(self, dx: float, x_max: float, pad: float = 0.0) -> GridFunction:
        """Cell-averaged density on a grid whose cell edges include 0."""
        pad = dx * math.ceil(pad / dx)
        return GridFunction.from_tail(self.tail, -pad, x_max, dx)


class ParticleConfiguration:
    """Ordered multiset of positions with descending rank access."""

    __slots__ = ("_pos", "clock")

    def __init__(self, positions: Sequence[float] = (), clock: float = 0.0):
        self._pos = SortedList(float(p) for p in positions)
        self.clock = float(clock)

    def __len__(self) -> int:
        return len(self._pos)

    @property
    def size(self) -> int:
        return len(self._pos)

    def eta(self, j: int) -> float:
        """j-th largest position, 1-based."""
        n = len(self._pos)
        if not 1 <= j <= n:
            raise IndexError(j)
        return self._pos[n - j]

    @property
    def min(self) -> float:
        return self._pos[0]

    @property
    def max(self) -> float:
        return self._pos[-1]

    def insert(self, x: float) -> None:
        self._pos.add(float(x))

    def delete_min(self) -> float:
        return self._pos.pop(0)

    def positions(self) -> np.ndarray:
        """Descending copy, eta(1) first."""
        return np.array(self._pos[::-1], dtype=float)

    def ascending(self) -> np.ndarray:
        return np.array(self._pos, dtype=float)

    def gaps(self) -> "GapSample":
        return GapSample.from_positions(self.positions())

    def copy(self) -> "ParticleConfiguration":
        return ParticleConfiguration(self._pos, self.clock)

    def __repr__(self) -> str:
        return f"ParticleConfiguration(size={len(self)}, clock={self.clock:g})"


@dataclass(frozen=True)
class GapSample:
    """Distances eta(j) - eta(N) to the leftmost particle, j = 1..N."""

    gaps: np.ndarray

    @classmethod
    def from_positions(cls, desc: np.ndarray) -> "GapSample":
        g = np.asarray(desc, dtype=float) - desc[-1]
        g.setflags(write=False)
        return cls(g)


@dataclass(frozen=True)
class Snapshot:
    time: float
    positions: np.ndarray  # descending, read-only

    @property
    def min(self) -> float:
        return float(self.positions[-1])

    @property
    def max(self) -> float:
        return float(self.positions[0])


@dataclass
class SimulationResult:
    config: ParticleConfiguration
    snapshots: list[Snapshot] = field(default_factory=list)
    observer_outputs: list[list] = field(default_factory=list)
    events: int = 0


class _Engine:
    """Event loop shared by every simulation mode.

    The waiting time to the next event is kept across calls, so where a run
    is paused for observation does not change the trajectory.
    """

    def __init__(self, positions, kernel: DisplacementKernel, rng: np.random.Generator,
                 selection: bool, t0: float = 0.0):
        self.sl = SortedList(float(p) for p in positions)
        self.kernel = kernel
        self.rng = rng
        self.selection = selection
        self.events = 0
        self._refill()
        self.t = t0
        self.reset_clock(t0)

    def _refill(self):
        r = self.rng
        self._e = r.standard_exponential(BLOCK)
        self._v = r.random(BLOCK)
        self._d = self.kernel.sample(r, BLOCK)
        self._i = 0

    def reset_clock(self, t: float) -> None:
        """Draw a fresh waiting time from ``t`` (needed after the population shrinks)."""
        if self._i == BLOCK:
            self._refill()
        n = len(self.sl)
        self.t_next = t + self._e[self._i] / n if n else math.inf

    def run_until(self, t_end: float) -> None:
        sl = self.sl
        add, pop = sl.add, sl.pop
        e, v, d, i = self._e, self._v, self._d, self._i
        sel = self.selection
        t = self.t_next
        count = 0
        while t <= t_end:
            n = len(sl)
            child = sl[n - 1 - int(v[i] * n)] + d[i]
            if sel:
                # a child at or below the minimum is itself the one removed
                if child > sl[0]:
                    add(child)
                    pop(0)
            else:
                add(child)
            count += 1
            i += 1
            if i == BLOCK:
                self._refill()
                e, v, d, i = self._e, self._v, self._d, 0
            t += e[i] / len(sl)
        self._i = i
        self.t_next = t
        self.t = t_end
        self.events += count

    def snapshot(self, t: float) -> Snapshot:
        p = np.array(self.sl[::-1], dtype=float)
        p.setflags(write=False)
        return Snapshot(t, p)


def _make_rng(rng, seed):
    if rng is not None:
        return rng
    return np.random.default_rng(seed)


def simulate(N: int, kernel: DisplacementKernel, T: float, mode: str = "selection",
             init: InitialCondition | None = None, rng: np.random.Generator | None = None,
             observe_at: Sequence[float] = (), observers: Sequence[Callable] = (),
             seed: int | None = None, positions: Sequence[float] | None = None) -> SimulationResult:
    """Run the process to time T.

    Observers are called as ``obs(time, positions)`` at each time in
    ``observe_at`` with a read-only descending array; their return values are
    collected per observer.  A snapshot is stored for each observation time.
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    if T < 0:
        raise ValueError("T must be non-negative")
    if mode not in ("selection", "free"):
        raise ValueError(f"unknown mode {mode!r}")
    rng = _make_rng(rng, seed)
    init = init or InitialCondition()
    pos0 = np.asarray(positions, dtype=float) if positions is not None else init.sample(rng, N)
    eng = _Engine(pos0, kernel, rng, selection=(mode == "selection"))
    res = SimulationResult(config=None, observer_outputs=[[] for _ in observers])
    for s in sorted(float(t) for t in observe_at if 0 <= t <= T):
        eng.run_until(s)
        snap = eng.snapshot(s)
        res.snapshots.append(snap)
        for out, obs in zip(res.observer_outputs, observers):
            out.append(obs(s, snap.positions))
    eng.run_until(T)
    res.config = ParticleConfiguration(eng.sl, T)
    res.events = eng.events
    return res


def simulate_dyadic_shaved(N: int, k: int, kernel: DisplacementKernel, T: float = 1.0,
                           init: InitialCondition | None = None,
                           rng: np.random.Generator | None = None, seed: int | None = None,
                           positions: Sequence[float] | None = None) -> list[Snapshot]:
    """Free branching on each interval of length 2**-k, then keep the N rightmost.

    Returns snapshots at the dyadic times m/2**k, m = 0..ceil(T*2**k), each
    taken after shaving.
    """
    if k < 0:
        raise ValueError("k must be non-negative")
    rng = _make_rng(rng, seed)
    init = init or InitialCondition()
    pos0 = np.asarray(positions, dtype=float) if positions is not None else init.sample(rng, N)
    eng = _Engine(pos0, kernel, rng, selection=False)
    out = [eng.snapshot(0.0)]
    dt = 2.0 ** -k
    for m in range(1, int(math.ceil(T / dt - 1e-12)) + 1):
        t = m * dt
        eng.run_until(t)
        while len(eng.sl) > N:
            eng.sl.pop(0)
        eng.reset_clock(t)
        out.append(eng.snapshot(t))
    return out


def empirical_tail(config, xs) -> np.ndarray:
    """Fraction of particles at or to the right of each x."""
    if isinstance(config, ParticleConfiguration):
        asc = config.ascending()
    elif isinstance(config, Snapshot):
        asc = config.positions[::-1]
    else:
        asc = np.sort(np.asarray(config, dtype=float))
    n = asc.size
    xs = np.asarray(xs, dtype=float)
    return (n - np.searchsorted(asc, xs, side="left")) / n


def sup_distance_to_tail(positions, tail_fn: Callable) -> float:
    """sup_x |F_N(x) - F(x)| for the empirical tail of ``positions`` and a continuous tail F.

    The supremum is attained at a jump of F_N, so it is enough to compare both
    one-sided limits at every particle position.
    """
    asc = np.sort(np.asarray(positions, dtype=float))
    n = asc.size
    f = np.asarray(tail_fn(asc), dtype=float)
    at = (n - np.searchsorted(asc, asc, side="left")) / n
    after = (n - np.searchsorted(asc, asc, side="right")) / n
    return float(max(np.max(np.abs(at - f)), np.max(np.abs(after - f))))


@dataclass(frozen=True)
class SpeedEstimate:
    N: int
    mean: float
    se: float
    mean_max: float
    se_max: float
    per_replica_min: np.ndarray = field(repr=False)
    per_replica_max: np.ndarray = field(repr=False)

    def interval(self, width: float = 2.0) -> tuple[float, float]:
        return self.mean - width * self.se, self.mean + width * self.se


def _speed_replica(N, kernel, T, burn_in, init, seed, rid):
    res = simulate(N, kernel, T, init=init, rng=replica_rng(seed, rid), observe_at=(burn_in, T))
    s0, s1 = res.snapshots
    span = T - burn_in
    return (s1.min - s0.min) / span, (s1.max - s0.max) / span


def estimate_speed(N: int, kernel: DisplacementKernel, T: float, burn_in: float, replicas: int,
                   seed: int = 0, init: InitialCondition | None = None,
                   threads: int | None = None, replica_offset: int = 0) -> SpeedEstimate:
    """Average displacement rate of the leftmost and rightmost particles after burn-in."""
    if not T > burn_in:
        raise ValueError("T must exceed burn_in")
    init = init or InitialCondition()
    args = [(N, kernel, T, burn_in, init, seed, replica_offset + r) for r in range(replicas)]
    out = np.array(map_replicas(_speed_replica, args, threads))
    lo, hi = out[:, 0], out[:, 1]
    se = lambda a: float(a.std(ddof=1) / math.sqrt(a.size)) if a.size > 1 else math.inf
    return SpeedEstimate(N, float(lo.mean()), se(lo), float(hi.mean()), se(hi), lo, hi)


def stationary_gap_sample(N: int, kernel: DisplacementKernel, burn_in: float, n_samples: int,
                          thinning: float, rng: np.random.Generator | None = None,
                          init: InitialCondition | None = None, seed: int | None = None,
                          positions: Sequence[float] | None = None) -> list[GapSample]:
    """Gap vectors observed at times burn_in + j*thinning, j = 0..n_samples-1."""
    if not (burn_in > 0 and thinning > 0):
        raise ValueError("burn_in and thinning must be positive")
    rng = _make_rng(rng, seed)
    init = init or InitialCondition()
    pos0 = np.asarray(positions, dtype=float) if positions is not None else init.sample(rng, N)
    eng = _Engine(pos0, kernel, rng, selection=True)
    out = []
    for j in range(n_samples):
        eng.run_until(burn_in + j * thinning)
        out.append(GapSample.from_positions(np.array(eng.sl[::-1])))
    return out


# ---------------------------------------------------------------------------
# coupled runs

@dataclass
class CoupledOrderResult:
    events: int
    min_slack: float  # min over events and ranks of eta_high(j) - eta_low(j)

    @property
    def ordered(self) -> bool:
        return self.min_slack >= 0


def coupled_order_check(kernel: DisplacementKernel, T: float, low: Sequence[float],
                        high: Sequence[float], rng: np.random.Generator) -> CoupledOrderResult:
    """Run two selection processes on shared clocks, ranks and displacements.

    Both copies branch the particle of the same descending rank with the same
    displacement.  If ``low`` is dominated rank by rank by ``high`` the order
    must survive every event; the smallest rank-wise gap seen is returned.
    """
    a, b = SortedList(low), SortedList(high)
    if len(a) != len(b):
        raise ValueError("coupled copies need the same size")
    n = len(a)
    slack = float(np.min(np.array(b) - np.array(a)))
    t, events = 0.0, 0
    while True:
        t += rng.standard_exponential() / n
        if t > T:
            break
        j = int(rng.random() * n)
        r = float(kernel.sample(rng))
        for sl in (a, b):
            child = sl[n - 1 - j] + r
            if child > sl[0]:
                sl.add(child)
                sl.pop(0)
        events += 1
        slack = min(slack, float(np.min(np.array(b) - np.array(a))))
    return CoupledOrderResult(events, slack)


def _lineage_run(kernel, pos0, T, seed_key, shave_dt=None):
    """Selection (shave_dt None) or dyadic shaving driven by per-particle streams.

    Particle identities are lineage tuples; each particle owns a generator
    seeded by its lineage, which gives it the same branching times and
    displacements in every process that contains it.
    """
    N = len(pos0)
    alive = SortedList()
    where, gens, counts, heap = {}, {}, {}, []

    def born(uid, x, t):
        g = np.random.default_rng([*seed_key, *uid])
        gens[uid], counts[uid], where[uid] = g, 0, x
        alive.add((x, uid))
        heapq.heappush(heap, (t + g.standard_exponential(), uid))

    def kill_min():
        x, uid = alive.pop(0)
        del where[uid], gens[uid], counts[uid]

    for i, x in enumerate(pos0):
        born((i + 1,), float(x), 0.0)
    next_shave = shave_dt if shave_dt else math.inf
    while heap and heap[0][0] <= T:
        t, uid = heapq.heappop(heap)
        while t > next_shave:
            while len(alive) > N:
                kill_min()
            next_shave += shave_dt
        if uid not in where:
            continue
        g = gens[uid]
        counts[uid] += 1
        child = uid + (counts[uid],)
        born(child, where[uid] + float(kernel.ppf(g.random())), t)
        heapq.heappush(heap, (t + g.standard_exponential(), uid))
        if shave_dt is None:
            kill_min()
    if shave_dt:
        while next_shave <= T + 1e-12:
            while len(alive) > N:
                kill_min()
            next_shave += shave_dt
    return set(where)


def shaving_discrepancy(N: int, levels: Sequence[int], kernel: DisplacementKernel, T: float = 1.0,
                        init: InitialCondition | None = None, seed: int = 0,
                        replica: int = 0) -> dict[int, float]:
    """|selection survivors - shaved survivors| / N at time T for each level k.

    The selection process and the dyadic-shaved processes share initial
    positions and per-particle randomness, so the symmetric difference of the
    surviving lineages measures how far the shaved approximation drifts.
    """
    init = init or InitialCondition()
    pos0 = init.sample(replica_rng(seed, replica), N)
    key = (int(seed), int(replica))
    ref = _lineage_run(kernel, pos0, T, key)
    return {k: len(ref ^ _lineage_run(kernel, pos0, T, key, 2.0 ** -k)) / N for k in levels}
