import math

import numpy as np
import pytest

from dbar.coupling import (
    CoupledPair,
    OrderedSuffix,
    SymbolPair,
    alpha_global,
    alpha_suffix,
    check_condition2,
    check_condition3,
    coupled_kernel,
    coupled_kernel_after,
    lambda_at,
    lambdas,
    r_lower,
)
from dbar.errors import HardCapError, UsageError
from dbar.kernel import FiniteMarkov, HazardSequence, Iid, PastSummary, Renewal
from oracles import brute_alpha, brute_envelopes, geometric_hazard, markov_p1, renewal_p1


def test_symbol_pairs():
    assert [s.pair for s in SymbolPair] == [(0, 0), (0, 1), (1, 1)]
    assert SymbolPair.of((0, 1)) is SymbolPair.ZERO_ONE
    with pytest.raises(UsageError):
        SymbolPair.of((1, 0))


def test_ordered_suffix_rejects_unordered():
    with pytest.raises(UsageError):
        OrderedSuffix("1", "0")
    s = OrderedSuffix.from_codes([0, 2, 1])
    assert (s.x, s.y) == ("010", "011")
    assert s.tail(1) == OrderedSuffix("0", "1")


def test_coupled_kernel_iid():
    pair = CoupledPair(Iid(0.3), Iid(0.5))
    p = [coupled_kernel(pair, ab, PastSummary(), PastSummary()) for ab in SymbolPair]
    assert p == pytest.approx([0.5, 0.2, 0.3], abs=1e-15)


def test_coupled_kernel_renewal_running_example(renewal_pair):
    # l^X = l^Y = 1: P(1,1) = q^X_1 = 0.5, P(0,0) = 1 - q^Y_1 = 0.3
    past = PastSummary(ell=1)
    assert coupled_kernel(renewal_pair, (1, 1), past, past) == pytest.approx(0.5, abs=1e-15)
    assert coupled_kernel(renewal_pair, (0, 0), past, past) == pytest.approx(0.3, abs=1e-15)
    assert coupled_kernel(renewal_pair, (0, 1), past, past) == pytest.approx(0.2, abs=1e-15)
    with pytest.raises(UsageError):
        coupled_kernel(renewal_pair, (1, 1), PastSummary(ell=1), PastSummary(ell=2))


def test_markov_worked_example(markov_pair):
    root = OrderedSuffix()
    assert r_lower(markov_pair, 0, (0, 0), root) == pytest.approx(0.3, abs=1e-15)
    assert r_lower(markov_pair, 0, (0, 1), root) == pytest.approx(0.3, abs=1e-15)
    assert r_lower(markov_pair, 0, (1, 1), root) == pytest.approx(0.2, abs=1e-15)
    assert alpha_global(markov_pair, 0) == pytest.approx(0.8, abs=1e-12)
    assert alpha_global(markov_pair, 1) == 1.0
    assert lambda_at(markov_pair, 1) == pytest.approx(0.2, abs=1e-12)
    assert lambda_at(markov_pair, 2) == 0.0
    for codes in ([0], [1], [2]):
        s = OrderedSuffix.from_codes(codes)
        assert alpha_suffix(markov_pair, 1, s) == pytest.approx(1.0, abs=1e-15)


def test_markov_envelope_against_enumeration(markov_pair):
    p1x = markov_p1([0.2, 0.4], 1)
    p1y = markov_p1([0.5, 0.7], 1)
    for k in (0, 1):
        brute = brute_envelopes(p1x, p1y, 1, k)
        for codes, cells in brute.items():
            s = OrderedSuffix.from_codes(codes)
            got = [r_lower(markov_pair, k, ab, s) for ab in SymbolPair]
            assert got == pytest.approx(cells, abs=1e-15)
    assert alpha_global(markov_pair, 0) == pytest.approx(brute_alpha(p1x, p1y, 1, 0), abs=1e-15)


def test_renewal_alphas_running_example(renewal_pair):
    # alpha_k = 1 - 0.1 * 0.5**k: the free class is tightest and q^Y - q^X = 0.2 everywhere
    a = renewal_pair.envelope.alphas(30)
    np.testing.assert_allclose(a, 1 - 0.1 * 0.5 ** np.arange(30), atol=1e-14)
    assert lambdas(renewal_pair, 3) == pytest.approx([0.9, 0.05, 0.025], abs=1e-14)


def test_renewal_envelope_matches_lifted_enumeration():
    hx = HazardSequence.explicit([0.6, 0.5, 0.45, 0.42], 0.4)
    hy = HazardSequence.explicit([0.75, 0.7, 0.55], 0.5)
    pair = CoupledPair(Renewal(hx), Renewal(hy))
    p1x, p1y = renewal_p1(hx.q, hx.q_inf), renewal_p1(hy.q, hy.q_inf)
    depth = 5
    for k in range(depth + 1):
        brute = brute_envelopes(p1x, p1y, depth, k)
        for codes, cells in brute.items():
            r, _ = pair.envelope.chain(OrderedSuffix.from_codes(codes))
            assert r[k] == pytest.approx(cells, abs=1e-14), (k, codes)
        assert alpha_global(pair, k) == pytest.approx(min(map(sum, brute.values())), abs=1e-14)
    assert pair.clamp_count == 0


def test_iid_lifted_into_renewal():
    pair = CoupledPair(Iid(0.3), Renewal(HazardSequence.geometric(0.4, 0.2, 0.5)))
    p1x = lambda s: 0.3  # noqa: E731
    p1y = renewal_p1(geometric_hazard(0.4, 0.2, 0.5), 0.4)
    # depth-6 pasts contain every distance the depth-k infimum needs for k <= 5
    for k in range(6):
        assert alpha_global(pair, k) == pytest.approx(brute_alpha(p1x, p1y, 6, k), abs=1e-14)
    assert alpha_global(pair, 0) == pytest.approx(0.9, abs=1e-14)


def test_conditions_running_examples(markov_pair, renewal_pair):
    c3 = check_condition3(markov_pair)
    assert c3.ok and c3.value == pytest.approx(0.8, abs=1e-12)
    c3 = check_condition3(renewal_pair, k_max=64)
    expected = math.prod(1 - 0.1 * 0.5 ** k for k in range(200))
    assert c3.ok
    assert c3.value <= expected + 1e-12
    assert c3.value == pytest.approx(expected, abs=1e-12)
    assert check_condition2(renewal_pair).ok


def test_condition3_fails_when_alpha_vanishes():
    x = FiniteMarkov.from_mapping(1, {"0": 0.0, "1": 1.0})
    y = FiniteMarkov.from_mapping(1, {"0": 0.0, "1": 1.0})
    pair = CoupledPair(x, y)
    v = check_condition3(pair)
    assert v.status == "failed"
    with pytest.raises(UsageError):
        pair.verify()


def test_identical_specs_have_no_mismatch_mass_on_the_diagonal(markov_pair):
    pair = CoupledPair(markov_pair.spec_x, markov_pair.spec_x)
    for codes in ([0], [2], [2, 0]):
        assert coupled_kernel_after(pair, (0, 1), OrderedSuffix.from_codes(codes)) == 0.0
    assert r_lower(pair, 0, (0, 1), OrderedSuffix()) == 0.0


def test_unordered_pair_is_refused():
    with pytest.raises(UsageError):
        CoupledPair(Iid(0.6), Iid(0.5))


def test_hard_cap():
    pair = CoupledPair(Renewal(HazardSequence.geometric(0.4, 0.2, 0.5)),
                       Renewal(HazardSequence.geometric(0.6, 0.2, 0.5)), k_hard=16)
    with pytest.raises(HardCapError):
        pair.envelope.alphas(40)
    with pytest.raises(HardCapError):
        pair.memory_lengths([1 - 1e-12])
