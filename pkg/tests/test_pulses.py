import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from foerster.model import ModelError, OneEigenstate, TwoEigenstate, build_interaction, TWO_STATE_SCHEME
from foerster.pulses import (
    TO_GATE_TIME,
    Constant,
    DriveLine,
    Schedule,
    ScheduleError,
    Segment,
    arp_schedule,
    assemble_drive,
    pi_2pi_pi_schedule,
    rank_two_schedule,
    super_gaussian,
    super_gaussian_area_factor,
    to_schedule,
)


def test_super_gaussian_values():
    assert super_gaussian(2.0, 2.0, 0.5, 3.0) == pytest.approx(3.0)
    assert super_gaussian(2.5, 2.0, 0.5, 3.0) == pytest.approx(3.0 / math.e)
    with pytest.raises(ScheduleError):
        super_gaussian(0.0, 0.0, 0.0, 1.0)


def test_super_gaussian_area_by_quadrature():
    area, _ = quad(lambda t: super_gaussian(t, 0.0, 0.7, 2.0), -5, 5, epsabs=1e-13)
    assert area == pytest.approx(1.85544 * 0.7 * 2.0, rel=1e-5)
    assert super_gaussian_area_factor() == pytest.approx(area / 1.4, rel=1e-10)


def _areas(sched):
    c, w = sched.meta["centers"], sched.meta["widths"]
    omega = sched.segments[0].lines[0].rabi.amplitude
    return [quad(lambda t: super_gaussian(t, ci, wi, omega), ci - 4 * wi, ci + 4 * wi, epsabs=1e-13)[0]
            for ci, wi in zip(c, w)]


def test_pi_2pi_pi_areas_and_overlap():
    omega = 2 * math.pi * 10
    s = pi_2pi_pi_schedule(omega)
    for area, target in zip(_areas(s), (math.pi, 2 * math.pi, math.pi)):
        assert area == pytest.approx(target, rel=1e-6)
    c, w = s.meta["centers"], s.meta["widths"]
    ctl, tgt = s.segments[0].lines
    # adjacent envelopes cross at 1e-3 Omega_max; the schedule edges sit at the same level
    for t_j, (ci, wi) in ((c[0] + w[0] * math.log(1e3) ** (1 / 6), (c[1], w[1])),
                          (c[2] - w[2] * math.log(1e3) ** (1 / 6), (c[1], w[1]))):
        assert super_gaussian(t_j, c[0] if t_j < c[1] else c[2], w[0], omega) == pytest.approx(1e-3 * omega, abs=1e-9)
        assert super_gaussian(t_j, ci, wi, omega) == pytest.approx(1e-3 * omega, abs=1e-9)
    assert ctl.rabi(0.0) == pytest.approx(1e-3 * omega, abs=1e-9)
    assert ctl.rabi(s.duration) == pytest.approx(1e-3 * omega, abs=1e-9)
    assert s.rank() == 1
    assert (ctl.atom, ctl.lower, tgt.atom, tgt.lower) == ("A", "g1", "B", "g1")


def test_arp_schedule_waveforms():
    s = arp_schedule(2.0, 1.5, 10.0)
    ln = s.segments[0].lines[0]
    assert ln.rabi(0.0) == pytest.approx(0.0, abs=1e-15)
    assert ln.rabi(5.0) == pytest.approx(2.0)
    assert ln.detuning(0.0) == pytest.approx(-1.5)
    assert ln.detuning(5.0) == pytest.approx(1.5)
    assert len(s.segments) == 2 and s.duration == pytest.approx(20.0)
    assert s.rank() == 1
    assert s.meta["tau"] == pytest.approx(1.75)
    with pytest.raises(ScheduleError):
        arp_schedule(1.0, 1.0, 10.0, t0=12.0)


def test_to_schedule_defaults_and_phase():
    s = to_schedule(1.0, A=0.7, w=1.2, phi=0.3, d=0.1)
    assert s.duration == pytest.approx(TO_GATE_TIME)
    ph = s.segments[0].lines[0].phase
    T = s.duration
    assert ph(T / 2) == pytest.approx(0.7 * math.cos(-0.3) + 0.1 * T / 2)
    flat = to_schedule(2.0, A=0.0, w=1.0, phi=0.5, d=0.0).segments[0].lines[0].phase
    assert np.all(flat(np.linspace(0, 3, 11)) == 0)
    assert s.rank() == 1
    with pytest.raises(ScheduleError):
        to_schedule(0.0, 1, 1, 0, 0)


def test_rank_two_schedule_structure():
    omega, V = 3.0, 2.0
    s = rank_two_schedule(omega, V)
    assert [seg.duration for seg in s.segments] == pytest.approx([math.pi / omega, math.pi / (4 * V), math.pi / omega])
    assert s.rank() == 2
    pairs = {(ln.atom, ln.lower, ln.upper) for ln in s.segments[0].lines}
    assert pairs == {("A", "g0", "alpha"), ("A", "g1", "a"), ("B", "g0", "b"), ("B", "g1", "beta")}
    assert s.segments[1].lines == ()
    with pytest.raises(ScheduleError):
        rank_two_schedule(1.0, 1e-9)


def test_schedule_validation():
    with pytest.raises(ScheduleError):
        Segment(0.0)
    with pytest.raises(ScheduleError):
        DriveLine("A", "a", "g1", Constant(1.0))
    with pytest.raises(ScheduleError):
        Segment(1.0, (DriveLine("A", "g1", "a", Constant(-1.0)),))
    with pytest.raises(ScheduleError):
        Schedule(())


def test_schedule_dict_roundtrip():
    for s in (pi_2pi_pi_schedule(5.0), arp_schedule(1.0, 2.0, 30.0), to_schedule(1.0, 1, 1, 0, 0.1),
              rank_two_schedule(1.0, 1.0)):
        back = Schedule.from_dict(s.to_dict())
        assert back.segments == s.segments


def test_gap_segment_is_pure_interaction():
    model = TwoEigenstate(V=2.0)
    s = rank_two_schedule(1.0, 2.0)
    t_mid = s.boundaries[1] + 0.5 * s.segments[1].duration
    assert np.array_equal(assemble_drive(model, s, t_mid), build_interaction(model))


def test_single_line_lift():
    model = TwoEigenstate(V=0.0 + 1.0)
    s = Schedule((Segment(1.0, (DriveLine("A", "g1", "a", Constant(1.0)),)),))
    H = assemble_drive(model, s, 0.5) - build_interaction(model)
    S = TWO_STATE_SCHEME
    for lb in S.levels_b:
        assert H[S.index("g1", lb), S.index("a", lb)] == pytest.approx(0.5)
        assert H[S.index("a", lb), S.index("g1", lb)] == pytest.approx(0.5)
    assert np.count_nonzero(H) == 8


def test_rank_two_on_one_eigenstate_model_rejected():
    with pytest.raises(ModelError):
        assemble_drive(OneEigenstate(V=1.0), rank_two_schedule(1.0, 1.0), 0.1)


def test_hermitian_at_random_times():
    rng = np.random.default_rng(3)
    model = TwoEigenstate(V=5.0)
    for s in (to_schedule(2.0, 0.6, 1.2, -1.0, 0.2), arp_schedule(2.0, 1.0, 20.0), pi_2pi_pi_schedule(3.0)):
        for t in rng.uniform(0, s.duration, 100):
            H = assemble_drive(model, s, t)
            assert np.max(np.abs(H - H.conj().T)) < 1e-14


@given(st.floats(0.0, 5.0), st.floats(0.0, 5.0), st.floats(-math.pi, math.pi), st.floats(0.0, 3.0))
def test_drive_linear_in_rabi(o1, o2, phi, t):
    model = TwoEigenstate(V=1.0)
    H0 = build_interaction(model)

    def H(o):
        ln = DriveLine("A", "g1", "a", Constant(o), Constant(phi))
        return assemble_drive(model, Schedule((Segment(3.0, (ln,)),)), t) - H0

    assert np.allclose(H(o1 + o2), H(o1) + H(o2), atol=1e-13)
    assert np.max(np.abs(H(0.0))) < 1e-15


@given(st.floats(0.0, 2 * math.pi), st.floats(0.1, 3.0), st.floats(-math.pi, math.pi), st.floats(-2.0, 2.0))
@settings(max_examples=25)
def test_to_phase_derivative(A, w, phi, d):
    ph = to_schedule(1.5, A, w, phi, d).segments[0].lines[0].phase
    t = np.linspace(0.01, TO_GATE_TIME / 1.5 - 0.01, 1000)
    h = 1e-6
    fd = (ph(t + h) - ph(t - h)) / (2 * h)
    assert np.max(np.abs(fd - ph.derivative(t))) < 1e-6


@given(st.floats(0.5, 200.0))
@settings(max_examples=10, deadline=None)
def test_pi_2pi_pi_area_property(omega):
    s = pi_2pi_pi_schedule(omega)
    for area, target in zip(_areas(s), (math.pi, 2 * math.pi, math.pi)):
        assert area == pytest.approx(target, rel=1e-6)
