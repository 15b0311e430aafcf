import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from foerster.entanglement import (
    REDUCED_DIMS,
    DegenerateSchmidtError,
    certify_pointwise_bound,
    embed_reduced,
    eta_full,
    exchange_hamiltonian,
    g_full,
    haar_states,
    numeric_G_oracle,
    rydberg_counter,
    s_min_rate,
    saturating_state,
    schmidt,
)
from foerster.model import TWO_STATE_SCHEME, TwoEigenstate, build_interaction, rydberg_number_operator

LN2 = math.log(2)


def ket3(i, j):
    v = np.zeros(9, dtype=complex)
    v[3 * i + j] = 1
    return v


AB, XY = ket3(1, 1), ket3(2, 2)


def test_schmidt_examples():
    sd = schmidt(ket3(0, 0), REDUCED_DIMS)
    assert sd.coefficients[0] == pytest.approx(1) and sd.s_min == pytest.approx(0, abs=1e-15)
    bell = schmidt((AB + XY) / math.sqrt(2), REDUCED_DIMS)
    assert bell.coefficients[:2] == pytest.approx([2**-0.5] * 2)
    assert bell.s_min == pytest.approx(1.0)
    sd = schmidt(math.sqrt(0.8) * AB + math.sqrt(0.2) * XY, REDUCED_DIMS)
    assert sd.s_min == pytest.approx(-math.log2(0.8), abs=1e-12)
    assert sd.s_min == pytest.approx(0.32193, abs=1e-5)
    with pytest.raises(ValueError):
        schmidt(2 * AB, REDUCED_DIMS)


@given(st.integers(0, 10_000), st.sampled_from([(3, 3), (4, 4), (2, 5)]))
@settings(max_examples=50)
def test_schmidt_reconstruction_and_range(seed, dims):
    psi = haar_states(1, dims[0] * dims[1], np.random.default_rng(seed))[0]
    sd = schmidt(psi, dims)
    assert np.linalg.norm(sd.reconstruct() - psi) < 1e-10
    assert np.all(np.diff(sd.coefficients) <= 1e-15)
    assert np.sum(sd.coefficients**2) == pytest.approx(1, abs=1e-12)
    assert -1e-12 <= sd.s_min <= math.log2(min(dims)) + 1e-12


def test_rate_zero_cases():
    H = exchange_hamiltonian(1.0)
    assert s_min_rate(ket3(1, 0), H) == 0.0
    Hd = np.diag(np.arange(9.0))
    psi = math.sqrt(0.7) * ket3(0, 1) + math.sqrt(0.3) * ket3(2, 2)
    assert s_min_rate(psi, Hd) == pytest.approx(0, abs=1e-15)


def test_rate_on_saturating_state():
    x = 2**-0.5
    expected = 2 / LN2 * math.sqrt((1 - x) / x)  # = 1.857020...
    rate = s_min_rate(saturating_state(0.5), exchange_hamiltonian(1.0))
    assert abs(rate) == pytest.approx(expected, rel=1e-12)
    assert abs(rate) == pytest.approx(1.85702, abs=1e-5)


def test_rate_against_finite_difference():
    # oracle: S_min(exp(-iH dt) psi) differentiated numerically
    from scipy.linalg import expm

    rng = np.random.default_rng(11)
    H = exchange_hamiltonian(1.3)
    for psi in haar_states(5, 9, rng):
        h = 1e-5
        s = [schmidt(expm(-1j * H * t) @ psi, REDUCED_DIMS).s_min for t in (-h, h)]
        assert s_min_rate(psi, H) == pytest.approx((s[1] - s[0]) / (2 * h), abs=1e-6)


def test_degenerate_leading_coefficient_rejected():
    with pytest.raises(DegenerateSchmidtError):
        s_min_rate((AB + 1j * XY) / math.sqrt(2), exchange_hamiltonian(1.0))


def test_g_full_values():
    assert g_full(1.0, 1.0) == pytest.approx(LN2)
    assert g_full(0.5, 1.0) == pytest.approx(LN2 / math.sqrt(math.sqrt(2) - 1))
    assert g_full(0.5, 1.0) == pytest.approx(1.07700, abs=1e-5)
    with pytest.raises(ValueError):
        g_full(0.0, 1.0)


@pytest.mark.parametrize("V", [0.3, 1.0, 17.0])
def test_eta_full_is_pi_over_two(V):
    assert eta_full(V) == pytest.approx(math.pi / 2, abs=1e-6)
    # independent oracle: plain quad in s with the singular endpoint left to QUADPACK
    val, _ = quad(lambda s: g_full(s, V), 0, 1, limit=200, epsabs=1e-12)
    assert V * val == pytest.approx(math.pi / 2, abs=1e-6)


def test_saturating_state_family():
    assert np.allclose(saturating_state(1e-12), AB, atol=1e-6)
    psi = saturating_state(1.0)
    assert psi[4] == pytest.approx(2**-0.5) and psi[8] == pytest.approx(1j * 2**-0.5)
    with pytest.raises(ValueError):
        saturating_state(0.0)
    H = exchange_hamiltonian(2.0)
    for s in np.arange(1, 10) / 10:
        psi = saturating_state(s, 2.0)
        P = float(np.abs(psi) ** 2 @ rydberg_counter())
        assert P == pytest.approx(2.0, abs=1e-14)
        assert schmidt(psi, REDUCED_DIMS).s_min == pytest.approx(s, abs=1e-12)
        assert P / abs(s_min_rate(psi, H)) == pytest.approx(g_full(s, 2.0), abs=1e-10)


def test_reduced_operators_match_pair_basis():
    S = TWO_STATE_SCHEME
    H4 = build_interaction(TwoEigenstate(V=1.7))[1:, 1:]
    idx = [S.index(a, b) for a in ("g1", "a", "alpha") for b in ("g1", "b", "beta")]
    assert np.array_equal(build_interaction(TwoEigenstate(V=1.7))[np.ix_(idx, idx)], exchange_hamiltonian(1.7))
    assert np.array_equal(np.real(np.diag(rydberg_number_operator(S)))[idx], rydberg_counter())
    assert np.nonzero(embed_reduced(AB))[0].tolist() == [S.index("a", "b")]


def test_certification_small_run():
    rep = certify_pointwise_bound(1.0, 5000, seed=3, extra_states=np.array([ket3(0, 0)]))
    assert rep.passed and rep.violations == 0
    assert rep.saturating_margin < 1e-8
    assert rep.min_margin >= -1e-9
    assert rep.n_skipped_zero_rate >= 1
    assert rep.n_checked + rep.n_skipped_zero_rate + rep.n_skipped_degenerate == 5001
    assert rep.as_dict()["dims"] == "3x3"


def test_certification_full_space():
    rep = certify_pointwise_bound(2.0, 2000, seed=5, dims=(4, 4))
    assert rep.violations == 0


def test_certification_deterministic():
    a = certify_pointwise_bound(1.0, 3000, seed=9).as_dict()
    b = certify_pointwise_bound(1.0, 3000, seed=9).as_dict()
    assert a == b


@pytest.mark.parametrize("s", [0.5, 0.9])
def test_numeric_oracle_lands_on_g_full(s):
    est = numeric_G_oracle(s, 1.0, n_starts=6, seed=0)
    g = g_full(s, 1.0)
    assert est >= g * (1 - 1e-6)
    assert est <= g * 1.02


def test_numeric_oracle_domain():
    with pytest.raises(ValueError):
        numeric_G_oracle(0.99)


@given(st.integers(0, 10_000), st.floats(0.1, 10.0))
@settings(max_examples=30)
def test_pointwise_bound_property(seed, V):
    psi = haar_states(1, 9, np.random.default_rng(seed))[0]
    sd = schmidt(psi, REDUCED_DIMS)
    rate = abs(s_min_rate(psi, exchange_hamiltonian(V)))
    P = float(np.abs(psi) ** 2 @ rydberg_counter())
    x = sd.x
    assert P >= rate * (LN2 / V) * math.sqrt(x / (1 - x)) * (1 - 1e-9)
