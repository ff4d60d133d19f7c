"""Property-based checks of the envelope, layout and sampler invariants."""

import itertools

import numpy as np
import pytest
from hypothesis import HealthCheck, assume, given, settings
from hypothesis import strategies as st

from dbar.coupling import CoupledPair, OrderedSuffix, SymbolPair, coupled_kernel_after
from dbar.decomposition import layout
from dbar.kernel import FiniteMarkov, HazardSequence, Renewal, check_order
from dbar.regeneration import perfect_sample
from dbar.rng import TimeKeyedRandomness
from oracles import brute_envelopes, code_strings, markov_p1, renewal_p1

SETTINGS = settings(max_examples=60, deadline=None,
                    suppress_health_check=[HealthCheck.too_slow])
unit = st.floats(0.0, 1.0, allow_nan=False)


@st.composite
def ordered_markov_tables(draw, max_order=3):
    order = draw(st.integers(1, max_order))
    n = 2 ** order
    px = draw(st.lists(unit, min_size=n, max_size=n))
    u = draw(st.lists(unit, min_size=n, max_size=n))
    py = []
    for y in range(n):
        low = max(px[x] for x in range(n) if x & ~y == 0)
        py.append(min(1.0, low + u[y] * (1.0 - low)))
    return order, px, py


@st.composite
def ordered_hazards(draw, max_len=4):
    k = draw(st.integers(1, max_len))
    ys = sorted(draw(st.lists(st.floats(0.05, 0.95), min_size=k, max_size=k)), reverse=True)
    qy_inf = draw(st.floats(0.02, 1.0)) * ys[-1]
    shrink = draw(st.lists(st.floats(0.2, 1.0), min_size=k, max_size=k))
    xs = np.minimum.accumulate(np.array(ys) * np.array(shrink)).tolist()
    qx_inf = min(qy_inf, xs[-1]) * draw(st.floats(0.2, 1.0))
    return HazardSequence.explicit(xs, qx_inf), HazardSequence.explicit(ys, qy_inf)


def markov_pair(order, px, py):
    return CoupledPair(FiniteMarkov(order, tuple(px)), FiniteMarkov(order, tuple(py)))


@SETTINGS
@given(ordered_markov_tables())
def test_markov_envelopes_equal_brute_force(tables):
    order, px, py = tables
    pair = markov_pair(order, px, py)
    env = pair.envelope
    p1x, p1y = markov_p1(px, order), markov_p1(py, order)
    for k in range(order + 1):
        brute = brute_envelopes(p1x, p1y, order, k)
        for codes, cells in brute.items():
            r, _ = env.chain(OrderedSuffix.from_codes(codes))
            np.testing.assert_allclose(r[k], cells, atol=1e-15)
        alpha = min(sum(c) for c in brute.values())
        if k < order:
            assert env.alphas(k + 1)[k] == pytest.approx(alpha, abs=1e-12)
    assert pair.clamp_count == 0


@SETTINGS
@given(ordered_markov_tables(), st.data())
def test_envelopes_are_admissible_and_monotone(tables, data):
    order, px, py = tables
    pair = markov_pair(order, px, py)
    alpha = pair.envelope.alphas(order + 2)
    assert np.all(np.diff(alpha) >= -1e-15) and alpha[-1] == 1.0
    codes = data.draw(st.lists(st.integers(0, 2), min_size=order, max_size=order + 2))
    s = OrderedSuffix.from_codes(codes)
    r, mass = pair.envelope.chain(s)
    assert np.all(np.diff(r, axis=0) >= -1e-15)
    assert np.all(np.diff(mass) >= -1e-15)
    kernel = [coupled_kernel_after(pair, ab, s) for ab in SymbolPair]
    assert np.all(r <= np.asarray(kernel) + 1e-15)
    np.testing.assert_allclose(r[-1], kernel, atol=1e-15)
    assert np.all(mass >= pair.envelope.alphas(mass.size) - 1e-15)


@SETTINGS
@given(ordered_hazards())
def test_renewal_envelope_equals_lifted_enumeration(hazards):
    hx, hy = hazards
    pair = CoupledPair(Renewal(hx), Renewal(hy))
    depth = max(len(hx.values), len(hy.values)) + 1
    p1x, p1y = renewal_p1(hx.q, hx.q_inf), renewal_p1(hy.q, hy.q_inf)
    alphas = pair.envelope.alphas(depth + 1)
    for k in range(depth + 1):
        brute = brute_envelopes(p1x, p1y, depth, k)
        for codes, cells in brute.items():
            r, _ = pair.envelope.chain(OrderedSuffix.from_codes(codes))
            np.testing.assert_allclose(r[k], cells, atol=1e-14)
        assert alphas[k] == pytest.approx(min(sum(c) for c in brute.values()), abs=1e-13)


@SETTINGS
@given(ordered_hazards(max_len=3))
def test_renewal_and_markov_engines_agree(hazards):
    # the same pair written as order-D Markov chains goes through the other engine
    hx, hy = hazards
    depth = max(len(hx.values), len(hy.values))
    tables = []
    for h in (hx, hy):
        p1 = renewal_p1(h.q, h.q_inf)
        tables.append(tuple(p1(format(i, f"0{depth}b")) for i in range(2 ** depth)))
    lifted = CoupledPair(FiniteMarkov(depth, tables[0]), FiniteMarkov(depth, tables[1]))
    direct = CoupledPair(Renewal(hx), Renewal(hy))
    assert lifted.envelope.kind == "markov" and direct.envelope.kind == "renewal"
    np.testing.assert_allclose(direct.envelope.alphas(depth + 3),
                               lifted.envelope.alphas(depth + 3), atol=1e-13)


@SETTINGS
@given(ordered_markov_tables(), st.data())
def test_layout_partitions_unit_interval(tables, data):
    order, px, py = tables
    pair = markov_pair(order, px, py)
    codes = data.draw(st.lists(st.integers(0, 2), min_size=order, max_size=order))
    lay = layout(pair, OrderedSuffix.from_codes(codes))
    pts = lay.breakpoints()
    assert pts[0] == 0.0 and all(a <= b + 1e-15 for a, b in zip(pts, pts[1:]))
    assert lay.total == 1.0
    for ab in SymbolPair:
        want = coupled_kernel_after(pair, ab, OrderedSuffix.from_codes(codes))
        assert lay.symbol_mass(ab, 0.0, 1.0) == pytest.approx(want, abs=1e-14)


@SETTINGS
@given(ordered_markov_tables(max_order=2), st.integers(0, 2 ** 32), st.integers(-200, 200),
       st.integers(0, 60), st.integers(0, 60))
def test_sampler_orders_and_nests(tables, seed, m, width, shift):
    order, px, py = tables
    pair = markov_pair(order, px, py)
    assume(pair.envelope.alphas(order + 1).prod() > 0.05)
    rng = TimeKeyedRandomness(seed, 1)
    outer = perfect_sample(pair, rng, m, m + width + shift)
    inner = perfect_sample(pair, rng, m + shift // 2, m + shift // 2 + width // 2)
    assert not np.any(outer.x > outer.y)
    off = (m + shift // 2) - outer.backtrack_time
    size = inner.n - inner.m + 1
    np.testing.assert_array_equal(inner.x[inner.window()], outer.x[off:off + size])
    np.testing.assert_array_equal(inner.y[inner.window()], outer.y[off:off + size])


@SETTINGS
@given(ordered_markov_tables())
def test_ordered_pasts_give_ordered_probabilities(tables):
    order, px, py = tables
    assert check_order(FiniteMarkov(order, tuple(px)), FiniteMarkov(order, tuple(py))).ok
    for codes in itertools.product(range(3), repeat=order):
        x, y = code_strings(codes)
        assert markov_p1(px, order)(x) <= markov_p1(py, order)(y)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2 ** 64 - 1), st.integers(0, 1000), st.integers(-2 ** 40, 2 ** 40),
       st.integers(0, 40))
def test_rng_random_access(seed, replica, start, length):
    rng = TimeKeyedRandomness(seed, replica)
    block = rng.uniforms(start, start + length)
    t = start + length // 2
    assert block[length // 2] == rng.uniform(t)
    assert np.all((block >= 0) & (block < 1))
