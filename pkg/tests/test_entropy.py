import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import count_trajectories, largest_charpoly_root
from slidewin.channel import NSE, NSS, ChannelSpec, enumerate_states
from slidewin.entropy import (
    c0_lower_bound,
    count_all,
    count_outputs,
    degree_bound_estimate,
    output_counts,
    perron_frobenius,
)

# real root of x^3 - x^2 - 1, frozen from an independent high-precision solve
SUPERGOLDEN = 1.4655712318767680


def graph(kind, n, d, q=2):
    return enumerate_states(ChannelSpec(kind, n, d, q))


def test_lambda_3_1_nse():
    sp = perron_frobenius(graph(NSE, 3, 1))
    assert abs(sp.lambda_pf - SUPERGOLDEN) < 1e-9
    assert abs(sp.lambda_pf**3 - sp.lambda_pf**2 - 1) < 1e-9
    assert sp.residual < 1e-9
    assert (sp.d_min, sp.d_max) == (1, 2)
    assert sp.d_ave == 1.5


def test_lower_bound_3_1():
    sp = perron_frobenius(graph(NSE, 3, 1))
    lb = c0_lower_bound(ChannelSpec(NSE, 3, 1), sp)
    assert abs(lb.value - 0.1152) < 5e-4
    assert lb.appendix_variant is None


def test_lambda_nss_3_1_q3():
    sp = perron_frobenius(graph(NSS, 3, 1, 3))
    assert sp.lambda_pf == pytest.approx(1.6956207695598662, abs=1e-9)
    lb = c0_lower_bound(ChannelSpec(NSS, 3, 1, 3), sp)
    assert lb.value == pytest.approx(1 - 2 * math.log(sp.lambda_pf, 3))
    assert lb.appendix_variant == pytest.approx(lb.value - 1 / 3)


GRID = [(NSE, n, d, 2) for n in range(1, 9) for d in range(0, n + 1)] + [
    (NSS, n, d, q) for n in range(1, 6) for d in range(0, n + 1) for q in (2, 3)
]


@pytest.mark.parametrize("params", GRID, ids=str)
def test_lambda_matches_charpoly(params):
    g = graph(*params)
    sp = perron_frobenius(g)
    assert sp.residual < 1e-9
    assert (sp.vector > 0).all()
    # the Perron root sits between min and max out-degree (d_ave is not a bound here)
    assert sp.d_min - 1e-12 <= sp.lambda_pf <= sp.d_max + 1e-12
    root = largest_charpoly_root(g.adjacency, sp.d_min - 0.5, sp.d_max + 0.5)
    assert abs(root - sp.lambda_pf) < 1e-8


def test_average_degree_is_not_a_lower_bound():
    sp = perron_frobenius(graph(NSE, 3, 1))
    assert sp.d_ave > sp.lambda_pf


def test_counts_frozen():
    g = graph(NSE, 3, 1)
    clear = g.clear
    assert [count_outputs(g, clear, N) for N in range(13)] == [1, 2, 3, 4, 6, 9, 13, 19, 28, 41, 60, 88, 129]
    assert [count_outputs(g, g.index[(0, 0, 1)], N) for N in range(8)] == [1, 1, 1, 2, 3, 4, 6, 9]


@pytest.mark.parametrize("params", [(NSE, 3, 1, 2), (NSS, 3, 1, 2), (NSS, 3, 1, 3)], ids=str)
def test_counts_match_enumeration(params):
    g = graph(*params)
    for N in range(13):
        counts = count_all(g, N)
        for s, win in enumerate(g.states):
            assert counts[s] == count_trajectories(params[0], params[1], params[2], params[3], win, N)


def test_counts_exceed_64_bits():
    g = graph(NSE, 3, 1)
    big = count_outputs(g, g.clear, 130)
    assert big > 2**64
    # linear recurrence c(N) = c(N-1) + c(N-3) on the clear state
    c = [count_outputs(g, g.clear, N) for N in range(127, 131)]
    assert c[3] == c[2] + c[0]


def test_counts_negative_horizon():
    with pytest.raises(ValueError):
        count_all(graph(NSE, 3, 1), -1)


@pytest.mark.parametrize("params", [(NSE, 3, 1, 2), (NSE, 5, 2, 2), (NSS, 3, 1, 3)], ids=str)
def test_growth_ratio_bounded(params):
    g = graph(*params)
    sp = perron_frobenius(g)
    res = output_counts(g, 30, sp, horizon=range(10, 31))
    assert 0 < res.beta_lower <= res.beta_bound < math.inf
    # bounded away from zero and infinity by modest constants
    assert res.beta_bound / res.beta_lower < 10
    assert res.counts_by_state == count_all(g, 30)


def test_degree_bound():
    est = degree_bound_estimate(graph(NSE, 3, 1))
    assert est == pytest.approx(2 / 3 - 1)
    with pytest.raises(ValueError):
        degree_bound_estimate(graph(NSS, 3, 1, 3))


@given(st.sampled_from(GRID))
@settings(max_examples=25, deadline=None)
def test_entropy_bounds_property(params):
    spec = ChannelSpec(*params)
    sp = perron_frobenius(enumerate_states(spec))
    q = spec.q
    assert 0 <= sp.h_ch <= 1 + 1e-12
    if spec.d == 0:
        assert sp.lambda_pf == pytest.approx(1)
    lb = c0_lower_bound(spec, sp)
    assert lb.display() >= 0
    assert lb.value <= 1 - spec.d / spec.n + 1e-12
    assert sp.h_ch == pytest.approx(math.log(sp.lambda_pf) / math.log(q))
