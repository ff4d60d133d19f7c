"""Mixture decomposition of the coupled kernel into finite-order kernels.

The unit interval is tiled, for a fixed chain of nested ordered suffixes, by
blocks of increasing depth. The depth-``j`` block spans
``[alpha_{j-1}(s_{j-1}), alpha_j(s_j))`` and holds one half-open interval per
symbol pair, in the order (0,0), (0,1), (1,1), whose lengths are the envelope
increments ``r_j - r_{j-1}``. A single uniform ``xi`` then decides both the
memory length (through the global cut points ``alpha_k``) and the symbol.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .coupling import (
    SYMBOLS,
    CoupledPair,
    OrderedSuffix,
    SymbolPair,
    coupled_kernel_after,
    lambdas,
)
from .errors import HardCapError, UndefinedKernelError, UsageError
from .kernel import memory_order


@dataclass(frozen=True)
class Block:
    depth: int
    start: float
    end: float
    # (lo, hi) per symbol pair, indexed by SymbolPair
    cells: tuple[tuple[float, float], tuple[float, float], tuple[float, float]]


@dataclass(frozen=True)
class IntervalLayout:
    suffix: OrderedSuffix
    blocks: tuple[Block, ...]

    @property
    def total(self) -> float:
        return self.blocks[-1].end

    def breakpoints(self) -> list[float]:
        pts = [0.0]
        for b in self.blocks:
            pts.extend(hi for _, hi in b.cells)
        return pts

    def locate(self, xi: float) -> tuple[int, SymbolPair]:
        """Depth of the block and symbol pair whose interval contains ``xi``."""
        for b in self.blocks:
            if xi < b.end:
                for ab in SYMBOLS[:2]:
                    if xi < b.cells[ab][1]:
                        return b.depth, ab
                return b.depth, SymbolPair.ONE_ONE
        raise UsageError(f"xi={xi!r} lies beyond the layout (total {self.total!r})")

    def symbol_mass(self, ab, lo: float, hi: float) -> float:
        """Length of ``[lo, hi)`` intersected with every interval of ``ab``."""
        ab = SymbolPair.of(ab)
        total = 0.0
        for b in self.blocks:
            c_lo, c_hi = b.cells[ab]
            total += max(0.0, min(hi, c_hi) - max(lo, c_lo))
        return total


def layout(pair: CoupledPair, s: OrderedSuffix) -> IntervalLayout:
    """Interval layout of the suffix chain ``s_0 < s_1 < ... < s`` through depth ``s.depth``."""
    r, a = pair.envelope.chain(s)
    blocks = []
    prev_r = np.zeros(3)
    prev_a = 0.0
    for j in range(s.depth + 1):
        lo = prev_a
        c00 = (lo, lo + (r[j, 0] - prev_r[0]))
        c01 = (c00[1], c00[1] + (r[j, 1] - prev_r[1]))
        # the (1,1) cell absorbs rounding so that the block ends exactly at alpha_j(s_j)
        c11 = (c01[1], max(c01[1], float(a[j])))
        blocks.append(Block(j, lo, float(a[j]), (c00, c01, c11)))
        prev_r, prev_a = r[j], float(a[j])
    return IntervalLayout(s, tuple(blocks))


def pk_eval(pair: CoupledPair, k: int, ab, s: OrderedSuffix) -> float:
    """Order-``k`` kernel ``P_k(ab | s)``: share of ``[alpha_{k-1}, alpha_k)`` held by ``ab``."""
    if s.depth != k:
        raise UsageError(f"suffix depth {s.depth} differs from k={k}")
    alpha = pair.envelope.alphas(k + 1)
    lo = 0.0 if k == 0 else float(alpha[k - 1])
    hi = float(alpha[k])
    lam = hi - lo
    if lam <= 0.0:
        raise UndefinedKernelError(f"lambda_{k} = 0: P_{k} is never used")
    return layout(pair, s).symbol_mass(ab, lo, hi) / lam


def memory_length_of(pair: CoupledPair, xi: float) -> int:
    """Memory length selected by ``xi``: the ``k`` with ``xi`` in ``[alpha_{k-1}, alpha_k)``."""
    if not 0.0 <= xi < 1.0:
        raise UsageError(f"xi must lie in [0,1), got {xi!r}")
    return int(pair.memory_lengths(np.array([xi]))[0])


def sample_symbol(pair: CoupledPair, xi: float,
                  suffix_provider: Callable[[int], OrderedSuffix]) -> tuple[int, SymbolPair]:
    """Draw ``(L, ab)`` from one uniform; ``suffix_provider(j)`` returns the depth-``j`` past."""
    mem = memory_length_of(pair, xi)
    s = suffix_provider(mem)
    if s.depth != mem:
        raise UsageError(f"suffix provider returned depth {s.depth}, expected {mem}")
    depth, ab = layout(pair, s).locate(xi)
    if depth > mem:
        raise HardCapError(f"xi={xi!r} fell in block {depth} beyond memory length {mem}")
    return mem, ab


def decomposition_identity_check(pair: CoupledPair, s: OrderedSuffix, tol: float | None = None) -> float:
    """Largest gap between ``sum_k lambda_k P_k(.|s_k)`` and the coupled kernel after ``s``.

    The pair must have finite memory no longer than ``s.depth`` so that the
    mixture terminates. With ``tol`` given, a larger gap raises ``AssertionError``.
    """
    d = max(memory_order(pair.spec_x) or 0, memory_order(pair.spec_y) or 0)
    if any(memory_order(sp) is None for sp in (pair.spec_x, pair.spec_y)) or d > s.depth:
        raise UsageError("identity check needs finite-memory chains of order <= suffix depth")
    alpha = pair.envelope.alphas(s.depth + 1)
    lam = lambdas(pair, s.depth + 1)
    cuts = np.concatenate([[0.0], alpha])
    worst = 0.0
    for ab in SYMBOLS:
        mix = 0.0
        for k in range(s.depth + 1):
            if lam[k] > 0.0:
                # P_k(ab | s_k) only reads blocks up to depth k, which are shared with s
                pk = layout(pair, s.tail(k)).symbol_mass(ab, cuts[k], cuts[k + 1]) / lam[k]
                mix += lam[k] * pk
        worst = max(worst, abs(mix - coupled_kernel_after(pair, ab, s)))
    if tol is not None and worst > tol:
        raise AssertionError(f"decomposition gap {worst:.3g} exceeds {tol:.3g}")
    return worst
