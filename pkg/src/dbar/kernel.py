"""Binary chains of infinite order described by their transition kernels.

Three kernel families are supported: iid, finite-order Markov and renewal
chains whose probability of emitting a 1 depends on the distance to the most
recent 1. Pasts are always written chronologically: in the string ``"10"`` the
last character is the most recent symbol, so the 1 sits at lag 2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Literal, Union

import numpy as np

from .errors import UsageError

MAX_MARKOV_ORDER = 8
# settle indices beyond this are refused: the hazard tables would not fit
_MAX_SETTLE = 1 << 22


def _is_prob(p: float) -> bool:
    return isinstance(p, (int, float)) and not isinstance(p, bool) and 0.0 <= p <= 1.0


@dataclass(frozen=True)
class HazardSequence:
    """Hazard ``q_l`` of a renewal chain, ``l = 1, 2, ...`` plus the limit ``q_inf``.

    ``l`` is the distance to the most recent 1 in the past. Two shapes are
    available: ``q_l = q_inf + amplitude * ratio**l`` and an explicit finite
    list ``values = (q_1, ..., q_m)`` followed by ``q_inf`` for ``l > m``.
    Use :meth:`geometric` or :meth:`explicit`; both validate.
    """

    kind: Literal["geometric", "explicit"]
    q_inf: float
    amplitude: float = 0.0
    ratio: float = 0.5
    values: tuple[float, ...] = ()

    @classmethod
    def geometric(cls, q_inf: float, amplitude: float, ratio: float) -> HazardSequence:
        h = cls("geometric", float(q_inf), float(amplitude), float(ratio))
        h.validate()
        return h

    @classmethod
    def explicit(cls, values, q_inf: float) -> HazardSequence:
        h = cls("explicit", float(q_inf), values=tuple(float(v) for v in values))
        h.validate()
        return h

    @classmethod
    def constant(cls, p: float) -> HazardSequence:
        # past-free kernel seen as a renewal chain; p may be 0 or 1 here
        return cls("explicit", float(p))

    def validate(self) -> None:
        if self.kind not in ("geometric", "explicit"):
            raise UsageError(f"unknown hazard kind {self.kind!r}")
        if not (_is_prob(self.q_inf) and 0.0 < self.q_inf < 1.0):
            raise UsageError(f"q_inf must lie in (0,1), got {self.q_inf!r}")
        if self.kind == "geometric":
            if not (0.0 < self.ratio < 1.0):
                raise UsageError(f"ratio must lie in (0,1), got {self.ratio!r}")
            if self.amplitude < 0.0:
                raise UsageError("negative amplitude gives an increasing hazard; "
                                 "only non-increasing hazards are supported")
            if not self.q_inf + self.amplitude * self.ratio < 1.0:
                raise UsageError("q_1 = q_inf + amplitude*ratio must be < 1")
        else:
            prev = 1.0
            for i, v in enumerate(self.values, start=1):
                if not (_is_prob(v) and 0.0 < v < 1.0):
                    raise UsageError(f"hazard value q_{i}={v!r} outside (0,1)")
                if v > prev:
                    raise UsageError(f"hazard is not non-increasing at l={i}")
                if v < self.q_inf:
                    raise UsageError(f"hazard value q_{i} lies below q_inf")
                prev = v
        self.settle_index  # noqa: B018 - raises for hazards that settle too slowly

    @cached_property
    def settle_index(self) -> int:
        """Smallest ``h`` with ``q_l == q_inf`` (in floating point) for all ``l > h``."""
        if self.kind == "explicit":
            h = len(self.values)
            while h > 0 and self.values[h - 1] == self.q_inf:
                h -= 1
            return h
        if self.amplitude == 0.0:
            return 0
        tiny = math.ulp(self.q_inf) / 4
        est = math.ceil(math.log(tiny / self.amplitude) / math.log(self.ratio)) + 4
        if est > _MAX_SETTLE:
            raise UsageError("hazard converges too slowly to q_inf to be tabulated")
        q = self._formula(np.arange(1, est + 1))
        diff = np.nonzero(q != self.q_inf)[0]
        return int(diff[-1]) + 1 if diff.size else 0

    def _formula(self, ells: np.ndarray) -> np.ndarray:
        return self.q_inf + self.amplitude * np.power(self.ratio, ells.astype(float))

    @cached_property
    def _table(self) -> np.ndarray:
        h = self.settle_index
        out = np.full(h + 2, self.q_inf)
        out[0] = np.nan
        if self.kind == "explicit":
            out[1:h + 1] = self.values[:h]
        elif h:
            out[1:h + 1] = self._formula(np.arange(1, h + 1))
        return out

    def table(self, n: int) -> np.ndarray:
        """Array ``t`` of length ``n + 1`` with ``t[l] = q_l`` and ``t[0] = nan``."""
        base = self._table
        if n + 1 <= base.size:
            return base[: n + 1].copy()
        out = np.full(n + 1, self.q_inf)
        out[: base.size] = base
        return out

    def q(self, ell: float) -> float:
        """Hazard at distance ``ell`` (an integer >= 1 or ``math.inf``)."""
        if ell == math.inf:
            return self.q_inf
        ell = int(ell)
        if ell < 1:
            raise UsageError(f"hazard index must be >= 1, got {ell}")
        base = self._table
        return float(base[ell]) if ell < base.size else self.q_inf

    def excess_tail(self, k: int) -> float:
        """Upper bound on ``sum_{l > k} (q_l - q_inf)``."""
        if self.kind == "geometric":
            if self.amplitude == 0.0:
                return 0.0
            return self.amplitude * self.ratio ** (k + 1) / (1.0 - self.ratio)
        return float(sum(v - self.q_inf for v in self.values[k:]))

    def to_dict(self) -> dict:
        if self.kind == "geometric":
            return {"kind": "geometric", "q_inf": self.q_inf,
                    "amplitude": self.amplitude, "ratio": self.ratio}
        return {"kind": "explicit", "values": list(self.values), "q_inf": self.q_inf}


@dataclass(frozen=True)
class Iid:
    p: float

    def __post_init__(self):
        if not _is_prob(self.p):
            raise UsageError(f"probability must lie in [0,1], got {self.p!r}")


@dataclass(frozen=True)
class FiniteMarkov:
    """Markov chain of order ``order``.

    ``table[i]`` is the probability of a 1 after the length-``order`` suffix
    whose binary value is ``i`` (most recent symbol = least significant bit),
    i.e. ``table[int(suffix, 2)]``.
    """

    order: int
    table: tuple[float, ...]

    def __post_init__(self):
        if not (isinstance(self.order, int) and 1 <= self.order <= MAX_MARKOV_ORDER):
            raise UsageError(f"Markov order must be in 1..{MAX_MARKOV_ORDER}, got {self.order!r}")
        if len(self.table) != 2 ** self.order:
            raise UsageError(f"order-{self.order} table needs {2 ** self.order} entries, "
                             f"got {len(self.table)}")
        for v in self.table:
            if not _is_prob(v):
                raise UsageError(f"transition probability {v!r} outside [0,1]")
        object.__setattr__(self, "table", tuple(float(v) for v in self.table))

    @classmethod
    def from_mapping(cls, order: int, mapping: dict[str, float]) -> FiniteMarkov:
        """Build from ``{"01": p, ...}`` keyed by chronological suffix strings."""
        if not isinstance(order, int) or not 1 <= order <= MAX_MARKOV_ORDER:
            raise UsageError(f"Markov order must be in 1..{MAX_MARKOV_ORDER}, got {order!r}")
        table: list[float | None] = [None] * (2 ** order)
        for key, val in mapping.items():
            if len(key) != order or set(key) - {"0", "1"}:
                raise UsageError(f"bad suffix key {key!r} for order {order}")
            table[int(key, 2)] = val
        if any(v is None for v in table) or len(mapping) != 2 ** order:
            raise UsageError(f"order-{order} table needs exactly {2 ** order} entries")
        return cls(order, tuple(table))


@dataclass(frozen=True)
class Renewal:
    hazard: HazardSequence

    def __post_init__(self):
        if not isinstance(self.hazard, HazardSequence):
            raise UsageError("Renewal needs a HazardSequence")
        self.hazard.validate()


ChainSpec = Union[Iid, FiniteMarkov, Renewal]


@dataclass(frozen=True)
class PastSummary:
    """Finite sufficient statistic of an infinite past.

    Renewal chains use ``ell`` (distance to the last 1, possibly ``inf``),
    Markov chains use the length-``order`` ``suffix``, iid chains use nothing.
    """

    ell: float | None = None
    suffix: str | None = None

    @classmethod
    def from_history(cls, spec: ChainSpec, history: str) -> PastSummary:
        """Summarize a chronological history; missing older symbols count as 0."""
        _check_bits(history)
        if isinstance(spec, Iid):
            return cls()
        if isinstance(spec, Renewal):
            return cls(ell=_distance_to_last_one(history))
        if len(history) < spec.order:
            history = "0" * (spec.order - len(history)) + history
        return cls(suffix=history[len(history) - spec.order:])


def _check_bits(s: str) -> None:
    if not isinstance(s, str) or set(s) - {"0", "1"}:
        raise UsageError(f"expected a binary string, got {s!r}")


def _distance_to_last_one(s: str) -> float:
    pos = s.rfind("1")
    return math.inf if pos < 0 else len(s) - pos


def eval_p1(spec: ChainSpec, past: PastSummary) -> float:
    """Probability of emitting a 1 after ``past``."""
    if isinstance(spec, Iid):
        if past.ell is not None or past.suffix is not None:
            raise UsageError("iid kernels take an empty past summary")
        return spec.p
    if isinstance(spec, Renewal):
        if past.ell is None or past.suffix is not None:
            raise UsageError("renewal kernels need a past summary with ell")
        if past.ell != math.inf and (past.ell < 1 or past.ell != int(past.ell)):
            raise UsageError(f"ell must be a positive integer or inf, got {past.ell!r}")
        return spec.hazard.q(past.ell)
    if isinstance(spec, FiniteMarkov):
        if past.suffix is None or past.ell is not None or len(past.suffix) != spec.order:
            raise UsageError(f"order-{spec.order} kernels need a suffix of that length")
        _check_bits(past.suffix)
        return spec.table[int(past.suffix, 2)]
    raise UsageError(f"unsupported chain spec {spec!r}")


def continuity_rate(spec: ChainSpec, k: int) -> float:
    """Exact continuity rate: largest kernel change between pasts sharing ``k`` symbols."""
    if k < 0:
        raise UsageError("k must be non-negative")
    if isinstance(spec, Iid):
        return 0.0
    if isinstance(spec, Renewal):
        # pasts sharing an all-zero length-k suffix differ only through l > k
        return spec.hazard.q(k + 1) - spec.hazard.q_inf
    if k >= spec.order:
        return 0.0
    t = np.asarray(spec.table).reshape(2 ** (spec.order - k), 2 ** k)
    return float(np.max(t.max(axis=0) - t.min(axis=0)))


def extremal_p1(spec: ChainSpec, observed_suffix: str,
                direction: Literal["min", "max"]) -> float:
    """Infimum or supremum of ``p(1 | w + observed_suffix)`` over all older pasts ``w``."""
    _check_bits(observed_suffix)
    if direction not in ("min", "max"):
        raise UsageError("direction must be 'min' or 'max'")
    if isinstance(spec, Iid):
        return spec.p
    k = len(observed_suffix)
    if isinstance(spec, Renewal):
        ell = _distance_to_last_one(observed_suffix)
        if ell != math.inf:
            return spec.hazard.q(ell)
        # non-increasing hazard: the all-zero extension minimizes, a 1 at lag k+1 maximizes
        return spec.hazard.q_inf if direction == "min" else spec.hazard.q(k + 1)
    if k >= spec.order:
        return spec.table[int(observed_suffix[k - spec.order:], 2)]
    idx = int(observed_suffix, 2) if k else 0
    col = np.asarray(spec.table).reshape(2 ** (spec.order - k), 2 ** k)[:, idx]
    return float(col.min() if direction == "min" else col.max())


# -- common representations -------------------------------------------------

def memory_order(spec: ChainSpec) -> int | None:
    """Order of the smallest Markov chain reproducing ``spec`` exactly, if any."""
    if isinstance(spec, Iid):
        return 0
    if isinstance(spec, FiniteMarkov):
        return spec.order
    h = spec.hazard.settle_index
    return h if h <= MAX_MARKOV_ORDER else None


def markov_table(spec: ChainSpec, order: int) -> np.ndarray:
    """``p(1|suffix)`` over all length-``order`` suffixes (newest symbol = LSB)."""
    idx = np.arange(2 ** order)
    if isinstance(spec, Iid):
        return np.full(idx.size, spec.p)
    if isinstance(spec, FiniteMarkov):
        if order < spec.order:
            raise UsageError("cannot lower the order of a Markov table")
        return np.asarray(spec.table)[idx % (2 ** spec.order)]
    if spec.hazard.settle_index > order:
        raise UsageError("renewal hazard has longer memory than the requested order")
    out = np.empty(idx.size)
    for i in idx:
        # lowest set bit = most recent 1
        ell = (int(i) & -int(i)).bit_length() if i else math.inf
        out[i] = spec.hazard.q(ell)
    return out


def hazard_of(spec: ChainSpec) -> HazardSequence | None:
    if isinstance(spec, Iid):
        return HazardSequence.constant(spec.p)
    if isinstance(spec, Renewal):
        return spec.hazard
    return None


@dataclass(frozen=True)
class MarkovRep:
    order: int
    px: np.ndarray = field(repr=False)
    py: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class RenewalRep:
    hx: HazardSequence
    hy: HazardSequence


def common_representation(spec_x: ChainSpec, spec_y: ChainSpec) -> MarkovRep | RenewalRep | None:
    """Express both chains in one family so that ordered pasts can be enumerated."""
    both_hazard = hazard_of(spec_x) is not None and hazard_of(spec_y) is not None
    both_iid = isinstance(spec_x, Iid) and isinstance(spec_y, Iid)
    if both_hazard and not both_iid:
        return RenewalRep(hazard_of(spec_x), hazard_of(spec_y))
    ox, oy = memory_order(spec_x), memory_order(spec_y)
    if ox is None or oy is None:
        return None
    d = max(ox, oy)
    return MarkovRep(d, markov_table(spec_x, d), markov_table(spec_y, d))


def ordered_codes(depth: int) -> np.ndarray:
    """Digits (oldest first) of every ordered suffix pair of the given depth.

    Row ``i`` lists the base-3 digits of ``i`` from the most significant one;
    digit 0 is (0,0), 1 is (0,1), 2 is (1,1).
    """
    if depth == 0:
        return np.zeros((1, 0), dtype=np.int64)
    i = np.arange(3 ** depth)
    pows = 3 ** np.arange(depth - 1, -1, -1)
    return (i[:, None] // pows[None, :]) % 3


def ordered_bit_indices(depth: int) -> tuple[np.ndarray, np.ndarray]:
    """Binary suffix indices of the x- and y-parts of every ordered pair of ``depth``."""
    codes = ordered_codes(depth)
    w = 2 ** np.arange(depth - 1, -1, -1)
    xi = ((codes == 2).astype(np.int64) * w).sum(axis=1)
    yi = ((codes >= 1).astype(np.int64) * w).sum(axis=1)
    return xi, yi


def _bits(i: int, depth: int) -> str:
    return format(int(i), f"0{depth}b") if depth else ""


# -- ordering ---------------------------------------------------------------

@dataclass(frozen=True)
class OrderVerdict:
    status: Literal["ordered", "violated", "inconclusive"]
    witness: tuple[str, str] | None = None
    detail: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "ordered"


def check_order(spec_x: ChainSpec, spec_y: ChainSpec) -> OrderVerdict:
    """Decide whether ``p^X(1|x) <= p^Y(1|y)`` for every ordered pair of pasts ``x <= y``.

    Witnesses are chronological strings; older symbols are taken to be 0.
    """
    rep = common_representation(spec_x, spec_y)
    if isinstance(rep, RenewalRep):
        h = max(rep.hx.settle_index, rep.hy.settle_index) + 1
        qx, qy = rep.hx.table(h), rep.hy.table(h)
        bad = np.nonzero(qx[1:] > qy[1:])[0]
        if bad.size:
            b = int(bad[0]) + 1
            w = "1" + "0" * (b - 1)
            return OrderVerdict("violated", (w, w), f"q^X_{b} > q^Y_{b}")
        return OrderVerdict("ordered", detail=f"q^X_l <= q^Y_l for l <= {h} and l = inf")
    if isinstance(rep, MarkovRep):
        xi, yi = ordered_bit_indices(rep.order)
        bad = np.nonzero(rep.px[xi] > rep.py[yi])[0]
        if bad.size:
            j = int(bad[0])
            return OrderVerdict("violated", (_bits(xi[j], rep.order), _bits(yi[j], rep.order)),
                                "p^X(1|x) > p^Y(1|y)")
        return OrderVerdict("ordered", detail=f"all {xi.size} ordered suffix pairs checked")
    # no common family: compare extremal envelopes
    if extremal_p1(spec_x, "", "max") <= extremal_p1(spec_y, "", "min"):
        return OrderVerdict("ordered", detail="sup p^X <= inf p^Y")
    for depth in range(0, MAX_MARKOV_ORDER + 1):
        xi, yi = ordered_bit_indices(depth)
        for a, b in zip(xi, yi):
            xs, ys = _bits(a, depth), _bits(b, depth)
            if extremal_p1(spec_x, xs, "min") > extremal_p1(spec_y, ys, "max"):
                return OrderVerdict("violated", (xs, ys), "inf p^X exceeds sup p^Y")
    return OrderVerdict("inconclusive",
                        detail=f"no violation found up to depth {MAX_MARKOV_ORDER}")


def spec_to_dict(spec: ChainSpec) -> dict:
    if isinstance(spec, Iid):
        return {"family": "iid", "p": spec.p}
    if isinstance(spec, FiniteMarkov):
        return {"family": "markov", "order": spec.order,
                "table": {_bits(i, spec.order): v for i, v in enumerate(spec.table)}}
    return {"family": "renewal", "hazard": spec.hazard.to_dict()}


def spec_from_dict(d: dict) -> ChainSpec:
    if not isinstance(d, dict):
        raise UsageError("chain spec must be an object")
    fam = d.get("family")
    if fam == "iid":
        return Iid(d["p"])
    if fam == "markov":
        return FiniteMarkov.from_mapping(d["order"], d["table"])
    if fam == "renewal":
        h = d["hazard"]
        if h.get("kind") == "geometric":
            return Renewal(HazardSequence.geometric(h["q_inf"], h["amplitude"], h["ratio"]))
        if h.get("kind") == "explicit":
            return Renewal(HazardSequence.explicit(h["values"], h["q_inf"]))
        raise UsageError(f"unknown hazard kind {h.get('kind')!r}")
    raise UsageError(f"unknown chain family {fam!r}")
