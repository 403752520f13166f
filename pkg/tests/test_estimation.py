import csv
import io
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slidewin.channel import NSE, NSS, Adversary, BlockTargetedAdversary, ChannelSpec, GreedyAdversary, RandomAdversary, enumerate_states
from slidewin.entropy import perron_frobenius
from slidewin.estimation import (
    ACHIEVABLE,
    INDETERMINATE,
    INFEASIBLE,
    ExtremalNoise,
    PlantSpec,
    UniformNoise,
    ZeroNoise,
    adversarial_error_growth,
    allocate_cells,
    classify_feasibility,
    estimation_error_bound,
    make_noise,
    necessity_certificate,
    run_estimation,
)
from slidewin.oracle import Codebook, best_codebook, build_confusability, max_codebook, repetition_code, verify_zero_error

NSE31 = ChannelSpec(NSE, 3, 1)


@pytest.fixture(scope="module")
def code31():
    code = max_codebook(build_confusability(NSE31, 3))
    assert verify_zero_error(code)
    return code


@pytest.fixture(scope="module")
def spectral31():
    return perron_frobenius(enumerate_states(NSE31))


def plant(a, vmax=0.01, wmax=0.0, l=1.0):
    return PlantSpec((a,), l, vmax, wmax)


def adversaries(block):
    return [GreedyAdversary(), RandomAdversary(0), RandomAdversary(5, p=0.9), BlockTargetedAdversary(block), Adversary()]


def test_plant_parse_and_hlin():
    p = PlantSpec.parse("a=1.2,l=1,vmax=0.01")
    assert p.eigenvalues == (1.2,) and p.v_max == 0.01 and p.w_max == 0
    assert p.h_lin == pytest.approx(math.log2(1.2))
    d = PlantSpec.parse("a=2:0.5:-3,wmax=0.1", q=3)
    assert d.h_lin == pytest.approx(math.log(2, 3) + 1)
    assert PlantSpec((0.5,)).h_lin == 0 and not PlantSpec((0.5,)).unstable
    with pytest.raises(ValueError):
        PlantSpec.parse("b=2")
    with pytest.raises(ValueError):
        PlantSpec.parse("l=1")
    with pytest.raises(ValueError):
        PlantSpec((2.0,), l=0)


@pytest.mark.parametrize("a, verdict", [(1.05, ACHIEVABLE), (2.0, INFEASIBLE), (1.2, INDETERMINATE), (0.5, ACHIEVABLE)])
def test_classify_examples(a, verdict, spectral31):
    v = classify_feasibility(plant(a), NSE31, spectral31)
    assert v.verdict == verdict
    assert v.lower == pytest.approx(0.1152, abs=5e-4)
    assert v.upper == pytest.approx(2 / 3)
    assert not v.tight


def test_classify_boundaries_are_indeterminate(spectral31):
    upper = 2 ** (2 / 3)
    assert classify_feasibility(plant(upper), NSE31, spectral31).verdict == INDETERMINATE
    lower = 2 ** classify_feasibility(plant(1.0), NSE31, spectral31).lower
    v = classify_feasibility(plant(lower), NSE31, spectral31)
    assert v.verdict in (INDETERMINATE, ACHIEVABLE)  # float round trip through 2**x may land either side
    assert classify_feasibility(plant(lower * (1 + 1e-9)), NSE31, spectral31).verdict == INDETERMINATE


def test_classify_nss():
    spec = ChannelSpec(NSS, 3, 1, 3)
    sp = perron_frobenius(enumerate_states(spec))
    v = classify_feasibility(PlantSpec((1.01,), q=3), spec, sp)
    assert v.upper == pytest.approx(1 - math.log(2, 3) / 3)
    assert v.lower == pytest.approx(1 - 2 * math.log(sp.lambda_pf, 3))
    assert v.verdict == ACHIEVABLE
    assert classify_feasibility(PlantSpec((3.0,), q=3), spec, sp).verdict == INFEASIBLE
    with pytest.raises(ValueError):
        classify_feasibility(PlantSpec((1.5,), q=2), spec, sp)


@given(st.floats(0.1, 5.0), st.floats(0.1, 5.0))
@settings(max_examples=100, deadline=None)
def test_classify_monotone(a, b):
    sp = perron_frobenius(enumerate_states(NSE31))
    rank = {ACHIEVABLE: 0, INDETERMINATE: 1, INFEASIBLE: 2}
    lo, hi = sorted((a, b))
    assert rank[classify_feasibility(plant(lo), NSE31, sp).verdict] <= rank[classify_feasibility(plant(hi), NSE31, sp).verdict]


def test_allocate_cells():
    assert allocate_cells([1.2], 3, 4) == [4]
    assert allocate_cells([1.2, 0.5], 3, 4) == [4, 1]
    cells = allocate_cells([2.0, 1.5], 3, 16)
    assert math.prod(cells) <= 16 and min(cells) >= 2
    assert allocate_cells([0.5], 3, 8) == [1]


def test_rejects_unit_modes_and_unverified(code31):
    with pytest.raises(ValueError, match="eigenvalue"):
        run_estimation(plant(1.0), NSE31, code31, GreedyAdversary(), 10)
    with pytest.raises(ValueError, match="eigenvalue"):
        run_estimation(plant(-1.0), NSE31, code31, GreedyAdversary(), 10)
    raw = Codebook(NSE31, 3, list(code31.codewords))
    with pytest.raises(ValueError, match="verified"):
        run_estimation(plant(1.2), NSE31, raw, GreedyAdversary(), 10)
    with pytest.raises(ValueError, match="built for"):
        run_estimation(plant(1.2), ChannelSpec(NSE, 4, 1), code31, GreedyAdversary(), 10)
    with pytest.raises(ValueError, match="ball"):
        run_estimation(plant(1.2), NSE31, code31, GreedyAdversary(), 10, x0=[2.0])


@pytest.mark.parametrize("noise", ["extremal", "uniform", "zero"])
def test_soundness_long_run(code31, noise):
    for adv in adversaries(3):
        for x0 in (-1.0, 1.0, 0.1):
            tr = run_estimation(plant(1.2, vmax=0.01, wmax=0.005), NSE31, code31, adv, 10_000, make_noise(noise, 3), x0=[x0])
            assert tr.sound, (adv.description, x0)
            assert tr.sup_error <= estimation_error_bound(tr.plant, code31)


def test_error_is_state_minus_estimate(code31):
    tr = run_estimation(plant(1.2), NSE31, code31, GreedyAdversary(), 30, ExtremalNoise(), x0=[0.4])
    assert len(tr.records) == 31
    for r in tr.records:
        assert r.err[0] == pytest.approx(r.x[0] - r.xhat[0], abs=1e-12)
        assert r.lo[0] <= r.x[0] <= r.hi[0]


def test_contraction_law(code31):
    # rho = 1.2^3/4 = 0.432: bounded
    tr = run_estimation(plant(1.2), NSE31, code31, GreedyAdversary(), 3000, ExtremalNoise(), x0=[-1.0])
    assert tr.rho == pytest.approx(0.432)
    assert tr.sup_error <= estimation_error_bound(tr.plant, code31) < 2
    # rho = 1.2^3/2 = 0.864: repetition code, still bounded
    rep = repetition_code(NSE31)
    assert verify_zero_error(rep)
    tr = run_estimation(plant(1.2), NSE31, rep, GreedyAdversary(), 3000, ExtremalNoise(), x0=[-1.0])
    assert tr.rho == pytest.approx(0.864)
    assert tr.sound and tr.sup_error <= estimation_error_bound(tr.plant, rep) < 10
    # rho = 2^3/4 = 2: the error keeps doubling
    g = adversarial_error_growth(plant(2.0), NSE31, 150, code31)
    assert g.rho == pytest.approx(2.0)
    assert min(g.block_growth()) >= 1.9
    assert math.isinf(estimation_error_bound(plant(2.0), code31))


def test_growth_envelope_edges(code31):
    g = adversarial_error_growth(plant(1.05), NSE31, 300, code31)
    # the first block runs open loop; afterwards the envelope settles
    assert max(g.envelope) <= estimation_error_bound(plant(1.05), code31)
    assert max(g.envelope[30:]) < 0.1
    assert all(run[3] for run in g.runs)
    g0 = adversarial_error_growth(plant(2.0, l=0.7), NSE31, 0, code31)
    assert g0.envelope == [0.7]


def test_stable_plant_bounded(code31):
    tr = run_estimation(plant(0.5), NSE31, code31, GreedyAdversary(), 500, ExtremalNoise())
    assert tr.sound and tr.cells == [1]
    assert tr.sup_error <= 1.0


def test_nss_estimation():
    spec = ChannelSpec(NSS, 3, 1, 3)
    code = best_codebook(spec, t_max=4)
    p = PlantSpec((1.1,), 1.0, 0.01, q=3)
    for adv in adversaries(code.t):
        tr = run_estimation(p, spec, code, adv, 2000, ExtremalNoise(), x0=[0.9])
        assert tr.sound
        assert tr.sup_error <= estimation_error_bound(p, code)


def test_diagonal_plant():
    spec = ChannelSpec(NSE, 4, 1)
    code = best_codebook(spec, t_max=6)
    p = PlantSpec((1.05, 0.5, -1.1), 1.0, 0.001)
    tr = run_estimation(p, spec, code, GreedyAdversary(), 3000, UniformNoise(1), x0=[0.2, -0.9, 0.5])
    assert tr.sound
    bound = estimation_error_bound(p, code)
    assert math.isfinite(bound) and tr.sup_error <= bound
    assert tr.cells[1] == 1


@given(
    st.floats(1.01, 1.55),
    st.floats(0.0, 0.05),
    st.floats(0.0, 0.05),
    st.floats(-1.0, 1.0),
    st.sampled_from(["greedy", "random", "block"]),
)
@settings(max_examples=40, deadline=None)
def test_bound_property(a, vmax, wmax, x0, adv_name):
    code = max_codebook(build_confusability(NSE31, 3))
    verify_zero_error(code)
    p = plant(a, vmax, wmax)
    adv = {"greedy": GreedyAdversary(), "random": RandomAdversary(1), "block": BlockTargetedAdversary(3)}[adv_name]
    tr = run_estimation(p, NSE31, code, adv, 600, ExtremalNoise(), x0=[x0])
    assert tr.sound
    assert tr.sup_error <= estimation_error_bound(p, code)


def test_trace_csv(code31, tmp_path):
    tr = run_estimation(plant(1.2), NSE31, code31, GreedyAdversary(), 9, ZeroNoise())
    path = tmp_path / "trace.csv"
    tr.write_csv(path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["t", "x", "xhat", "err", "interval_lo", "interval_hi", "channel_event"]
    assert len(rows) == 11
    assert rows[1][6] == "erased"
    buf = io.StringIO()
    tr.write_csv(buf)
    assert buf.getvalue() == open(path).read()


def test_necessity_certificate():
    cert, b = necessity_certificate(plant(2.0), 2 / 3, t=9)
    assert cert.diverges and b == pytest.approx(2**3)
    cert = necessity_certificate(plant(1.2), 2 / 3)
    assert not cert.diverges and cert.bound(60) < 1e-6
    open_loop = necessity_certificate(plant(1.5, l=2.0), 0.0)
    assert open_loop.bound(4) == pytest.approx(2 * 1.5**4)
    with pytest.raises(ValueError):
        necessity_certificate(PlantSpec((2.0, 3.0)), 0.5)


@given(st.floats(1.001, 4.0))
@settings(max_examples=100, deadline=None)
def test_certificate_threshold(a):
    R = 2 / 3
    cert = necessity_certificate(plant(a), R)
    assert cert.diverges == (math.log2(a) > R)
    sp = perron_frobenius(enumerate_states(NSE31))
    if cert.diverges:
        assert classify_feasibility(plant(a), NSE31, sp).verdict == INFEASIBLE
