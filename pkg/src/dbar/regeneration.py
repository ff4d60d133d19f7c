"""Perfect sampling of the coupled chain through its regeneration times.

Every time ``t`` owns one uniform ``xi_t``. It fixes the memory length
``L_t`` and, once the past is known, the symbol pair emitted at ``t``. To
sample the window ``[m, n]`` we look back from ``m`` for the latest
``T <= m`` with ``L_s <= s - T`` for every ``s`` in ``[T, n]``; from ``T`` on
the window can be generated left to right without looking further back.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .coupling import CoupledPair
from .errors import BacktrackLimitError, UsageError
from .rng import TimeKeyedRandomness

DEFAULT_MAX_BACKTRACK = 10 ** 6


def max_backtrack_default() -> int:
    env = os.environ.get("DBAR_MAX_BACKTRACK")
    if env is None:
        return DEFAULT_MAX_BACKTRACK
    try:
        val = int(env)
    except ValueError:
        raise UsageError(f"DBAR_MAX_BACKTRACK must be an integer, got {env!r}") from None
    if val < 0:
        raise UsageError("DBAR_MAX_BACKTRACK must be non-negative")
    return val


@dataclass
class CoupledPath:
    """Coupled symbols on ``[T, n]`` where ``T = backtrack_time <= m``.

    Arrays are indexed by ``t - backtrack_time``. ``regen`` flags the times
    ``t`` with ``L_s <= s - t`` for all ``s`` in ``[t, n]``, i.e. regeneration
    points verified on the realized horizon only.
    """

    m: int
    n: int
    backtrack_time: int
    x: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)
    memory: np.ndarray = field(repr=False)
    regen: np.ndarray = field(repr=False)
    seed: int = 0
    replica: int = 0
    backtrack_steps: int = 0
    work_bound: int = 0

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.backtrack_time, self.n + 1)

    @property
    def codes(self) -> np.ndarray:
        return (self.x + self.y).astype(np.int8)

    def window(self) -> slice:
        """Slice selecting ``[m, n]`` out of the stored arrays."""
        return slice(self.m - self.backtrack_time, None)

    def mismatch(self) -> np.ndarray:
        w = self.window()
        return self.x[w] != self.y[w]


def sample_memory_length(pair: CoupledPair, rng: TimeKeyedRandomness, t: int) -> int:
    """Memory length ``L_t`` selected by ``xi_t``; its law is ``(lambda_k)``."""
    return int(pair.memory_lengths(rng.uniforms(t, t))[0])


def _backtrack(pair: CoupledPair, rng: TimeKeyedRandomness, m: int, n: int,
               max_depth: int) -> tuple[int, np.ndarray, np.ndarray]:
    """``T[m, n]`` plus ``xi_t`` and ``L_t`` for ``t`` in ``[T, n]``."""
    xi = rng.uniforms(m, n)
    mem = pair.memory_lengths(xi)
    floor = int((np.arange(m, n + 1) - mem).min())  # min over s of s - L_s
    xs, ls = [xi], [mem]
    lo = m  # earliest time with a memory length drawn
    t = m
    chunk = 64
    while floor < t:
        # candidates t' = lo-1, lo-2, ...; t' works iff min(floor, min_{s in [t', lo)} s - L_s) >= t'
        if m - lo >= max_depth:
            raise BacktrackLimitError(f"no regeneration time within {max_depth} steps before m={m}")
        new_lo = lo - chunk
        xn = rng.uniforms(new_lo, lo - 1)
        ln = pair.memory_lengths(xn)
        times = np.arange(lo - 1, new_lo - 1, -1)
        run = np.minimum(floor, np.minimum.accumulate(times - ln[::-1]))
        ok = np.nonzero(run >= times)[0]
        xs.insert(0, xn)
        ls.insert(0, ln)
        if ok.size:
            t = int(times[ok[0]])
            lo = new_lo
            break
        floor = int(run[-1])
        lo = new_lo
        t = lo
        chunk = min(chunk * 2, 1 << 16)
    if m - t > max_depth:
        raise BacktrackLimitError(f"no regeneration time within {max_depth} steps before m={m}")
    xi = np.concatenate(xs)[t - lo:]
    mem = np.concatenate(ls)[t - lo:]
    return t, xi, mem


def backtrack(pair: CoupledPair, rng: TimeKeyedRandomness, m: int, n: int,
              max_depth: int | None = None) -> int:
    """``T[m, n] = sup{t <= m : L_s <= s - t for all s in [t, n]}``."""
    if m > n:
        raise UsageError(f"empty window [{m}, {n}]")
    depth = max_backtrack_default() if max_depth is None else max_depth
    return _backtrack(pair, rng, m, n, depth)[0]


def horizon_regen_flags(times: np.ndarray, memory: np.ndarray) -> np.ndarray:
    """``t`` is flagged iff ``L_s <= s - t`` for every later ``s`` in the array."""
    reach = times - memory
    return np.minimum.accumulate(reach[::-1])[::-1] >= times


def perfect_sample(pair: CoupledPair, rng: TimeKeyedRandomness, m: int, n: int,
                   max_backtrack: int | None = None) -> CoupledPath:
    """Exact sample of the stationary coupled chain on ``[m, n]``."""
    if m > n:
        raise UsageError(f"empty window [{m}, {n}]")
    pair.verify()
    depth = max_backtrack_default() if max_backtrack is None else max_backtrack
    T, xi, mem = _backtrack(pair, rng, m, n, depth)
    env = pair.envelope
    state = env.new_state()
    xl, ll = xi.tolist(), mem.tolist()
    codes = [0] * len(xl)
    next_code, push = env.next_code, env.push
    for i in range(len(xl)):
        c = next_code(xl[i], ll[i], state)
        push(state, c)
        codes[i] = c
    codes = np.asarray(codes, dtype=np.int8)
    times = np.arange(T, n + 1)
    steps = m - T
    return CoupledPath(
        m=m, n=n, backtrack_time=T,
        x=(codes == 2).astype(np.uint8), y=(codes >= 1).astype(np.uint8),
        memory=mem.astype(np.int64), regen=horizon_regen_flags(times, mem),
        seed=int(rng.seed), replica=int(rng.replica), backtrack_steps=steps,
        # checks plus assignments of the naive restart loop: sum_{k=0}^{m-T} (k + n - m + 1)
        work_bound=(steps + 1) * (n - m + 1) + steps * (steps + 1) // 2,
    )


def regen_marks(path: CoupledPath) -> np.ndarray:
    """Sorted times in ``[T, n]`` flagged as horizon-verified regeneration points."""
    return path.times[path.regen]


def truncated_regen_flags(memory: np.ndarray, depth: int = 64) -> np.ndarray:
    """Flags for positions ``i`` with ``L_{i+j} <= j`` for ``j < depth``.

    Only positions at least ``depth - 1`` steps from the end are returned.
    """
    memory = np.asarray(memory)
    n = memory.size - depth + 1
    if n <= 0:
        return np.zeros(0, dtype=bool)
    flags = np.ones(n, dtype=bool)
    for j in range(depth):
        flags &= memory[j:j + n] <= j
    return flags


def failed_trial_counts(memory: np.ndarray, depth: int = 64) -> np.ndarray:
    """Number of trials up to and including the first truncated regeneration.

    A trial started at ``i`` fails at the first ``j`` with ``L_{i+j} > j`` and
    the next one starts at ``i + j + 1``. After a success at ``i`` a fresh
    count starts at ``i + depth`` so that counts use disjoint stretches of
    ``L`` and are independent.
    """
    memory = np.asarray(memory)
    lags = np.arange(depth)
    counts = []
    i, trials = 0, 1
    while i + depth <= memory.size:
        bad = np.nonzero(memory[i:i + depth] > lags)[0]
        if bad.size:
            trials += 1
            i += int(bad[0]) + 1
        else:
            counts.append(trials)
            trials = 1
            i += depth
    return np.asarray(counts, dtype=np.int64)
