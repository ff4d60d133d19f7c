"""The ordered bivariate kernel and its lower envelopes.

A pair of stochastically ordered chains is coupled on the three symbols
``(0,0) < (0,1) < (1,1)``. For every ordered suffix ``s`` of depth ``k`` the
envelope ``r_k(ab|s)`` is the infimum of the coupled kernel over all ordered
pasts ending in ``s``; ``alpha_k`` is the smallest envelope mass at depth ``k``
and ``lambda_k = alpha_k - alpha_{k-1}``.

Two envelope engines exist, one per common representation of the pair:
``MarkovEnvelope`` enumerates ordered suffixes exactly, ``RenewalEnvelope``
works with the distances to the last 1 in each coordinate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum
from typing import Literal, Sequence

import numpy as np

from .errors import HardCapError, UsageError
from .kernel import (
    ChainSpec,
    MarkovRep,
    PastSummary,
    Renewal,
    RenewalRep,
    check_order,
    common_representation,
    continuity_rate,
    eval_p1,
    ordered_bit_indices,
)

DEFAULT_K_HARD = 4096
# envelope masses within this distance of 1 are rounded to exactly 1
_SNAP = 1e-13


class SymbolPair(IntEnum):
    """A symbol of the coupled chain; ``(1, 0)`` is not representable."""

    ZERO_ZERO = 0
    ZERO_ONE = 1
    ONE_ONE = 2

    @property
    def x(self) -> int:
        return 1 if self == SymbolPair.ONE_ONE else 0

    @property
    def y(self) -> int:
        return 0 if self == SymbolPair.ZERO_ZERO else 1

    @property
    def pair(self) -> tuple[int, int]:
        return (self.x, self.y)

    @classmethod
    def of(cls, ab) -> SymbolPair:
        if isinstance(ab, SymbolPair):
            return ab
        if isinstance(ab, (int, np.integer)) and not isinstance(ab, bool) and 0 <= ab <= 2:
            return cls(int(ab))
        a, b = ab
        if (a, b) not in ((0, 0), (0, 1), (1, 1)):
            raise UsageError(f"{(a, b)!r} is not an ordered symbol pair")
        return cls(a + b)


SYMBOLS = (SymbolPair.ZERO_ZERO, SymbolPair.ZERO_ONE, SymbolPair.ONE_ONE)


@dataclass(frozen=True)
class OrderedSuffix:
    """Chronological strings ``x`` and ``y`` (last character most recent) with ``x <= y``."""

    x: str = ""
    y: str = ""

    def __post_init__(self):
        if len(self.x) != len(self.y):
            raise UsageError("suffix strings must have equal length")
        for a, b in zip(self.x, self.y):
            if a not in "01" or b not in "01":
                raise UsageError("suffix strings must be binary")
            if a > b:
                raise UsageError(f"suffix pair ({self.x!r}, {self.y!r}) is not ordered")

    @classmethod
    def from_codes(cls, codes: Sequence[int]) -> OrderedSuffix:
        syms = [SymbolPair.of(c) for c in codes]
        return cls("".join(str(s.x) for s in syms), "".join(str(s.y) for s in syms))

    @property
    def depth(self) -> int:
        return len(self.x)

    @property
    def codes(self) -> list[int]:
        return [int(a) + int(b) for a, b in zip(self.x, self.y)]

    def tail(self, j: int) -> OrderedSuffix:
        if not 0 <= j <= self.depth:
            raise UsageError(f"cannot take {j} symbols of a depth-{self.depth} suffix")
        return OrderedSuffix(self.x[self.depth - j:], self.y[self.depth - j:])


def _snap(a):
    a = np.asarray(a, dtype=float)
    return np.where(a >= 1.0 - _SNAP, 1.0, a)


def _last_one(s: str) -> float:
    pos = s.rfind("1")
    return math.inf if pos < 0 else len(s) - pos


class MarkovEnvelope:
    """Exact envelopes for two chains sharing a Markov order ``d``.

    Depth-``d`` envelopes equal the kernel itself; shallower ones are obtained
    by minimizing over the oldest symbol pair, one level at a time.
    """

    kind = "markov"

    def __init__(self, rep: MarkovRep):
        d = self.order = rep.order
        xi, yi = ordered_bit_indices(d)
        px, py = rep.px[xi], rep.py[yi]
        full = np.stack([1.0 - py, py - px, px], axis=1)
        self.kernel = full
        r = [None] * (d + 1)
        r[d] = full
        for j in range(d, 0, -1):
            r[j - 1] = r[j].reshape(3, 3 ** (j - 1), 3).min(axis=0)
        self.clamp_count = 0
        for j in range(1, d + 1):
            parent = np.tile(r[j - 1], (3, 1))
            low = r[j] < parent
            self.clamp_count += int(low.sum())
            r[j] = np.maximum(r[j], parent)
        self.r = r
        self.mass = [_snap(rj.sum(axis=1)) for rj in r]
        for j in range(1, d + 1):
            self.mass[j] = np.maximum(self.mass[j], np.tile(self.mass[j - 1], 3))
        self.mass[d] = np.ones_like(self.mass[d])
        self._alpha = np.array([float(m.min()) for m in self.mass])
        # lookup tables (plain lists: they are read once per simulated step)
        self._start, self._b1, self._b2, self._end = [], [], [], []
        for j in range(d + 1):
            if j == 0:
                start = np.zeros(1)
                lens = r[0]
            else:
                start = np.tile(self.mass[j - 1], 3)
                lens = r[j] - np.tile(r[j - 1], (3, 1))
            b1 = start + lens[:, 0]
            b2 = b1 + lens[:, 1]
            self._start.append(start.tolist())
            self._b1.append(b1.tolist())
            self._b2.append(b2.tolist())
            self._end.append(self.mass[j].tolist())

    @staticmethod
    def _index(codes: Sequence[int]) -> int:
        idx = 0
        for c in codes:
            idx = idx * 3 + c
        return idx

    def alphas(self, n: int) -> np.ndarray:
        out = np.ones(n)
        m = min(n, self._alpha.size)
        out[:m] = self._alpha[:m]
        return out

    def chain(self, s: OrderedSuffix) -> tuple[np.ndarray, np.ndarray]:
        """Envelopes ``r_j(.|s_j)`` and masses for ``j = 0..depth(s)``."""
        codes = s.codes
        k = len(codes)
        r = np.empty((k + 1, 3))
        a = np.empty(k + 1)
        for j in range(k + 1):
            jj = min(j, self.order)
            idx = self._index(codes[k - jj:]) if jj else 0
            r[j] = self.r[jj][idx]
            a[j] = self.mass[jj][idx]
        return r, a

    def memory_lengths(self, xi: np.ndarray) -> np.ndarray:
        return np.searchsorted(self._alpha, xi, side="right")

    # step-by-step sampler state: list of codes emitted so far
    def new_state(self):
        return []

    def push(self, state, code: int) -> None:
        state.append(code)

    def next_code(self, xi: float, mem: int, state) -> int:
        n = len(state)
        idx, pw = 0, 1
        end, b1, b2 = self._end, self._b1, self._b2
        for j in range(min(mem, self.order) + 1):
            if j:
                idx += state[n - j] * pw
                pw *= 3
            if xi < end[j][idx]:
                if xi < b1[j][idx]:
                    return 0
                return 1 if xi < b2[j][idx] else 2
        raise HardCapError(f"xi={xi!r} not covered at memory length {mem}")


class RenewalEnvelope:
    """Envelopes for two renewal chains with non-increasing hazards.

    At depth ``j`` an ordered suffix falls in one of three classes: no 1 in
    either coordinate yet ("free"), a 1 in ``y`` only, or a 1 in both. The
    infimum for ``(0,1)`` in the free class, ``min_{b > j} (q^Y_b - q^X_b)``,
    uses that ordered extensions force ``l^X >= l^Y`` and that the hazards are
    monotone, so the best extension puts the first 1 of both coordinates at
    the same lag.
    """

    kind = "renewal"

    def __init__(self, rep: RenewalRep, k_hard: int = DEFAULT_K_HARD):
        self.hx, self.hy = rep.hx, rep.hy
        self.k_hard = int(k_hard)
        h = max(self.hx.settle_index, self.hy.settle_index)
        n = max(h, self.k_hard) + 2
        self.qx = self.hx.table(n)
        self.qy = self.hy.table(n)
        self.qx_inf, self.qy_inf = self.hx.q_inf, self.hy.q_inf
        self._qx_list, self._qy_list = self.qx.tolist(), self.qy.tolist()
        diff = self.qy - self.qx
        diff[0] = np.inf
        # m[j] = min over b > j (including b = inf) of q^Y_b - q^X_b
        tail_min = np.minimum.accumulate(diff[::-1])[::-1]
        m = np.minimum(np.append(tail_min[1:], np.inf), self.qy_inf - self.qx_inf)
        self.m = m
        j = np.arange(n - 1)
        self.free_mass = _snap(1.0 - ((self.qy[j + 1] - self.qx_inf) - m[j]))
        self.yfix_mass = _snap(1.0 - (self.qx[j + 1] - self.qx_inf))
        alpha = self.free_mass.copy()
        alpha[1:] = np.minimum(alpha[1:], self.yfix_mass[1:])
        self._alpha = alpha[: self.k_hard + 1]
        self._free_mass = self.free_mass.tolist()
        self._yfix_mass = self.yfix_mass.tolist()
        self._m = m.tolist()
        self.clamp_count = 0

    def q_x(self, ell: float) -> float:
        return self._qx_list[ell] if ell < len(self._qx_list) else self.qx_inf

    def q_y(self, ell: float) -> float:
        return self._qy_list[ell] if ell < len(self._qy_list) else self.qy_inf

    def alphas(self, n: int) -> np.ndarray:
        if n > self._alpha.size:
            raise HardCapError(f"alpha_k requested beyond the hard cap k={self.k_hard}")
        return self._alpha[:n].copy()

    def raw(self, j: int, lx: float, ly: float) -> tuple[float, float, float, float]:
        """Unclamped ``(r00, r01, r11, mass)`` at depth ``j`` for last-1 distances ``lx >= ly``."""
        if ly > j:
            return (1.0 - self.q_y(j + 1), self._m[j], self.qx_inf, self._free_mass[j])
        qy = self.q_y(ly)
        if lx > j:
            return (1.0 - qy, qy - self.q_x(j + 1), self.qx_inf, self._yfix_mass[j])
        qx = self.q_x(lx)
        return (1.0 - qy, qy - qx, qx, 1.0)

    def chain(self, s: OrderedSuffix) -> tuple[np.ndarray, np.ndarray]:
        lx, ly = _last_one(s.x), _last_one(s.y)
        k = s.depth
        if k > self.k_hard:
            raise HardCapError(f"suffix depth {k} beyond the hard cap {self.k_hard}")
        r = np.empty((k + 1, 3))
        a = np.empty(k + 1)
        for j in range(k + 1):
            r00, r01, r11, mass = self.raw(j, lx, ly)
            if j:
                prev = r[j - 1]
                if r00 < prev[0] or r01 < prev[1] or r11 < prev[2] or mass < a[j - 1]:
                    self.clamp_count += 1
                r00, r01, r11 = max(r00, prev[0]), max(r01, prev[1]), max(r11, prev[2])
                mass = max(mass, a[j - 1])
            r[j] = (r00, r01, r11)
            a[j] = mass
        return r, a

    def memory_lengths(self, xi: np.ndarray) -> np.ndarray:
        mem = np.searchsorted(self._alpha, xi, side="right")
        if mem.size and mem.max() >= self._alpha.size:
            bad = float(np.asarray(xi)[np.argmax(mem)])
            raise HardCapError(f"xi={bad!r} exceeds alpha at the hard cap k={self.k_hard}")
        return mem

    def new_state(self):
        return [math.inf, math.inf]

    def push(self, state, code: int) -> None:
        state[0] = 1 if code == 2 else state[0] + 1
        state[1] = 1 if code >= 1 else state[1] + 1

    def next_code(self, xi: float, mem: int, state) -> int:
        lx, ly = state
        p00 = p01 = p11 = 0.0
        pa = 0.0
        for j in range(mem + 1):
            r00, r01, r11, mass = self.raw(j, lx, ly)
            if j:
                if r00 < p00 or r01 < p01 or r11 < p11 or mass < pa:
                    self.clamp_count += 1
                    r00, r01, r11 = max(r00, p00), max(r01, p01), max(r11, p11)
                    mass = max(mass, pa)
            if xi < mass:
                b1 = pa + (r00 - p00)
                if xi < b1:
                    return 0
                return 1 if xi < b1 + (r01 - p01) else 2
            p00, p01, p11, pa = r00, r01, r11, mass
        raise HardCapError(f"xi={xi!r} not covered at memory length {mem}")


@dataclass(frozen=True)
class ConditionVerdict:
    status: Literal["satisfied", "failed", "inconclusive"]
    value: float = float("nan")
    detail: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "satisfied"


class CoupledPair:
    """Two ordered chains together with the envelope engine of their coupling."""

    def __init__(self, spec_x: ChainSpec, spec_y: ChainSpec, *, k_hard: int = DEFAULT_K_HARD):
        self.spec_x, self.spec_y = spec_x, spec_y
        self.order_verdict = check_order(spec_x, spec_y)
        if not self.order_verdict.ok:
            raise UsageError(f"chains are not ordered ({self.order_verdict.status}: "
                             f"{self.order_verdict.detail}, witness {self.order_verdict.witness})")
        rep = common_representation(spec_x, spec_y)
        if rep is None:
            raise UsageError("no common finite representation for this pair of chains")
        if isinstance(rep, MarkovRep):
            self.envelope = MarkovEnvelope(rep)
        else:
            self.envelope = RenewalEnvelope(rep, k_hard)
        self.k_hard = k_hard
        self._verified: tuple[ConditionVerdict, ConditionVerdict] | None = None

    @property
    def clamp_count(self) -> int:
        return self.envelope.clamp_count

    def verify(self, k_max: int = 256) -> None:
        """Raise :class:`UsageError` unless the continuity and mixing conditions hold."""
        if self._verified is None:
            self._verified = (check_condition2(self, k_max), check_condition3(self, k_max))
        c2, c3 = self._verified
        if not c2.ok:
            raise UsageError(f"continuity condition not established: {c2.detail}")
        if not c3.ok:
            raise UsageError(f"product of alpha_k not certified positive: {c3.detail}")

    def memory_lengths(self, xi) -> np.ndarray:
        return self.envelope.memory_lengths(np.asarray(xi, dtype=float))


def coupled_kernel(pair: CoupledPair, ab, past_x: PastSummary, past_y: PastSummary) -> float:
    """Probability of the symbol pair ``ab`` after ordered pasts summarized by ``past_x, past_y``."""
    ab = SymbolPair.of(ab)
    if past_x.ell is not None and past_y.ell is not None and past_x.ell < past_y.ell:
        raise UsageError("ordered pasts need l^X >= l^Y")
    if past_x.suffix is not None and past_y.suffix is not None:
        n = min(len(past_x.suffix), len(past_y.suffix))
        xs, ys = past_x.suffix[len(past_x.suffix) - n:], past_y.suffix[len(past_y.suffix) - n:]
        if any(a > b for a, b in zip(xs, ys)):
            raise UsageError("past suffixes are not ordered")
    px = eval_p1(pair.spec_x, past_x)
    py = eval_p1(pair.spec_y, past_y)
    if py - px < -1e-12:
        raise UsageError("pasts are inconsistent with the stochastic order")
    return (1.0 - py, max(py - px, 0.0), px)[ab]


def coupled_kernel_after(pair: CoupledPair, ab, s: OrderedSuffix) -> float:
    """Coupled kernel after the ordered past ``...000 s`` (older symbols all 0)."""
    return coupled_kernel(pair, ab, PastSummary.from_history(pair.spec_x, s.x),
                          PastSummary.from_history(pair.spec_y, s.y))


def r_lower(pair: CoupledPair, k: int, ab, s: OrderedSuffix) -> float:
    """Lower envelope ``r_k(ab | s)`` for a depth-``k`` ordered suffix."""
    if s.depth != k:
        raise UsageError(f"suffix depth {s.depth} differs from k={k}")
    r, _ = pair.envelope.chain(s)
    return float(r[k, SymbolPair.of(ab)])


def alpha_suffix(pair: CoupledPair, k: int, s: OrderedSuffix) -> float:
    if s.depth != k:
        raise UsageError(f"suffix depth {s.depth} differs from k={k}")
    _, a = pair.envelope.chain(s)
    return float(a[k])


def alpha_global(pair: CoupledPair, k: int) -> float:
    if k < 0:
        raise UsageError("k must be non-negative")
    return float(pair.envelope.alphas(k + 1)[k])


def lambda_at(pair: CoupledPair, k: int) -> float:
    if k < 0:
        raise UsageError("k must be non-negative")
    a = pair.envelope.alphas(k + 1)
    return float(a[0]) if k == 0 else max(float(a[k] - a[k - 1]), 0.0)


def lambdas(pair: CoupledPair, n: int) -> np.ndarray:
    """``lambda_0 .. lambda_{n-1}``."""
    a = pair.envelope.alphas(n)
    return np.maximum(np.diff(a, prepend=0.0), 0.0)


def check_condition2(pair: CoupledPair, k_max: int = 256) -> ConditionVerdict:
    """Continuity: both continuity rates decay to 0; reports ``max beta(k_max)``."""
    beta = max(continuity_rate(pair.spec_x, k_max), continuity_rate(pair.spec_y, k_max))
    # every supported family has beta(k) -> 0: finite memory or a hazard settling to q_inf
    return ConditionVerdict("satisfied", beta, f"max beta({k_max}) = {beta:.3g}")


def _excess_tail(spec: ChainSpec, k: int) -> float:
    if isinstance(spec, Renewal):
        return spec.hazard.excess_tail(k)
    return 0.0


def check_condition3(pair: CoupledPair, k_max: int = 256, tol: float = 0.0) -> ConditionVerdict:
    """Certify ``prod_k alpha_k > 0``.

    Returns a lower bound on the infinite product: the exact head
    ``prod_{k <= k_max} alpha_k`` times ``1 - tail``, where ``tail`` bounds
    ``sum_{k > k_max} (1 - alpha_k)`` by the summed continuity rates.
    """
    if k_max < 1:
        raise UsageError("k_max must be >= 1")
    env = pair.envelope
    if isinstance(env, MarkovEnvelope):
        alpha = env.alphas(env.order + 1)
        prod = float(np.prod(alpha))
        if prod <= tol:
            return ConditionVerdict("failed", prod, "some alpha_k vanishes")
        return ConditionVerdict("satisfied", prod, f"alpha_k = 1 for k >= {env.order}")
    k_max = min(k_max, env.k_hard)
    alpha = env.alphas(k_max + 1)
    if np.any(alpha <= 0.0):
        return ConditionVerdict("failed", 0.0, f"alpha_{int(np.argmin(alpha))} = 0")
    head = float(np.prod(alpha))
    # sum_{k > k_max} beta(k) with beta(k) = q_{k+1} - q_inf
    tail = sum(_excess_tail(s, k_max + 1) for s in (pair.spec_x, pair.spec_y))
    if tail >= 1.0:
        return ConditionVerdict("inconclusive", head, f"tail bound {tail:.3g} too large at k_max={k_max}")
    bound = head * (1.0 - tail)
    if bound <= tol:
        return ConditionVerdict("inconclusive", bound, "certified bound below tolerance")
    return ConditionVerdict("satisfied", bound, f"head {head:.6g}, tail {tail:.3g}")
