"""Uniforms addressed by absolute time, built on numpy's counter-based Philox."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1
_OFFSET = 1 << 63  # maps t in [-2**63, 2**63) onto the unsigned counter range


@dataclass(frozen=True)
class TimeKeyedRandomness:
    """One uniform ``xi_t`` in ``[0, 1)`` (53 bits) per integer time ``t``.

    ``xi_t`` depends only on ``(seed, replica, t)``: the Philox key is
    ``(seed, replica)`` and the counter is derived from ``t``, so any time
    range can be regenerated in any order.
    """

    seed: int
    replica: int = 0

    def __post_init__(self):
        for name in ("seed", "replica"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or not 0 <= int(v) <= _MASK64:
                raise ValueError(f"{name} must be an unsigned 64-bit integer, got {v!r}")

    def _raw(self, start: int, count: int) -> np.ndarray:
        u = (int(start) + _OFFSET) & _MASK64
        block, skip = divmod(u, 4)
        bg = np.random.Philox(key=[int(self.seed), int(self.replica)])
        state = bg.state
        # the generator increments the counter before producing a block of four
        c = (block - 1) % (1 << 256)
        state["state"]["counter"] = np.array(
            [(c >> (64 * i)) & _MASK64 for i in range(4)], dtype=np.uint64)
        state["buffer_pos"] = 4
        bg.state = state
        return bg.random_raw(skip + count)[skip:]

    def uniforms(self, start: int, stop: int) -> np.ndarray:
        """``xi_t`` for ``t = start, ..., stop`` (inclusive)."""
        count = int(stop) - int(start) + 1
        if count <= 0:
            return np.empty(0)
        return (self._raw(start, count) >> np.uint64(11)).astype(np.float64) * 2.0 ** -53

    def uniform(self, t: int) -> float:
        return float(self.uniforms(t, t)[0])
