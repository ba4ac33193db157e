import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from stubssh.lattice import LatticeSpec
from stubssh.pulses import (
    TRANSFER_TABLE,
    ControlSchedule,
    PulseSegment,
    build_transfer_schedule,
    coupling_pulse,
    emission_pulse,
    phase_shift_pulse,
    rotation_pulse,
    table_row,
    transfer_pulse,
)


def area(seg):
    return quad(lambda t: float(seg.value(t)), seg.t_start, seg.t_end, limit=200,
                points=seg.breakpoints()[1:-1], epsabs=1e-13, epsrel=1e-13)[0]


def test_transfer_pulse_shape():
    p = transfer_pulse(0.5, 25, 304.0)
    assert float(p.value(0.0)) == 0.0
    assert abs(float(p.value(304.0))) < 1e-12
    assert float(p.value(25.0)) == 0.5
    assert float(p.value(150.0)) == 0.5
    assert float(p.value(304.0 - 25.0)) == 0.5
    t = np.linspace(0, 25, 11)
    np.testing.assert_allclose(p.value(t), 0.5 * np.sin(math.pi / 50 * t) ** 2, atol=1e-15)
    np.testing.assert_allclose(p.value(t), p.value(304.0 - t), atol=1e-14)
    assert float(p.value(-1.0)) == 0.0 and float(p.value(305.0)) == 0.0
    with pytest.raises(ValueError):
        transfer_pulse(0.5, 25, 40)


@settings(max_examples=50, deadline=None)
@given(peak=st.floats(0.01, 40), ramp=st.floats(0.5, 30), flat=st.floats(0, 100), start=st.floats(-50, 50))
def test_waveforms_continuous_and_vanish_at_ends(peak, ramp, flat, start):
    seg = PulseSegment("v1", start, start + 2 * ramp + flat, peak, ramp)
    assert abs(float(seg.value(seg.t_start))) < 1e-12
    assert abs(float(seg.value(seg.t_end))) < 1e-12 * peak
    assert float(seg.value(start + ramp)) == pytest.approx(peak, rel=1e-12)
    t = np.linspace(seg.t_start, seg.t_end, 4001)
    v = seg.value(t)
    assert np.max(np.abs(np.diff(v))) < peak * 4 * math.pi / 4000 * seg.duration / (2 * ramp) + 1e-12
    assert area(seg) == pytest.approx(seg.area, rel=1e-9, abs=1e-12)


def test_coupling_pulse_durations_and_areas():
    assert coupling_pulse(1, 1, 0.5).duration == pytest.approx(2 * math.pi)
    assert coupling_pulse(1, 2, 0.5).duration == pytest.approx(math.pi)
    p = coupling_pulse(2, 3, 0.5)
    assert p.duration == pytest.approx(4 * math.pi / 3)
    assert area(p) == pytest.approx(math.pi / 3, abs=1e-9)
    for n, m in [(1, 1), (1, 2), (3, 4), (2, 5)]:
        assert area(coupling_pulse(n, m, 0.5)) == pytest.approx(n * math.pi / (2 * m), abs=1e-9)
    with pytest.raises(ValueError):
        coupling_pulse(0, 1)
    with pytest.raises(ValueError):
        coupling_pulse(1, 1, 0.0)


def test_emission_pulse_reduces_to_coupling_pulses():
    assert emission_pulse(1.0).duration == pytest.approx(coupling_pulse(1, 1).duration)
    assert emission_pulse(0.5).duration == pytest.approx(coupling_pulse(1, 2).duration)
    assert area(emission_pulse(2 / 3)) == pytest.approx(math.asin(math.sqrt(2 / 3)), abs=1e-9)
    assert area(rotation_pulse(0.3)) == pytest.approx(0.3, abs=1e-9)
    with pytest.raises(ValueError):
        emission_pulse(0.0)


def test_phase_shift_pulse_area_and_sign():
    assert phase_shift_pulse(0.0).duration == 0
    long = phase_shift_pulse(-math.pi / 2 * 0.999, eps0=0.1, t_prep=5)
    assert long.peak < 0
    assert long.ramp == 5
    assert long.duration == pytest.approx(5 + math.pi / 2 * 0.999 / 0.1)
    assert area(long) == pytest.approx(-math.pi / 2 * 0.999, abs=1e-9)
    short = phase_shift_pulse(-math.pi / 2, eps0=0.5, t_prep=5)
    assert area(short) == pytest.approx(-math.pi / 2, abs=1e-9)
    assert short.peak == -0.5
    with pytest.raises(ValueError):
        phase_shift_pulse(math.pi)
    with pytest.raises(ValueError):
        phase_shift_pulse(1.0, eps0=0)


def test_schedule_rejects_overlap_and_evaluates():
    a = PulseSegment("v1", 0, 10, 1.0, 2)
    with pytest.raises(ValueError):
        ControlSchedule([a, PulseSegment("v1", 9, 20, 1.0, 2)])
    s = ControlSchedule([a, PulseSegment("v1", 10, 20, 0.5, 2), PulseSegment("g0", 3, 5, 0.5, 1)])
    assert s.channels == ("g0", "v1")
    assert s.horizon == 20
    assert float(s.value("v1", 15)) == 0.5
    assert float(s.value("u3", 15)) == 0.0
    assert s.active_channels(0, 2.9) == {"v1"}
    assert s.constant_on(12, 18) and not s.constant_on(0, 1)
    shifted = s.then(s)
    assert shifted.horizon == 40
    assert float(shifted.value("v1", 35)) == 0.5
    with pytest.raises(ValueError):
        ControlSchedule([a], horizon=5)


def test_schedule_csv():
    s = ControlSchedule([PulseSegment("v1", 0, 10, 1.0, 2)])
    fh = io.StringIO()
    s.to_csv(fh, 2.5)
    rows = fh.getvalue().strip().splitlines()
    assert rows[0] == "t,v1"
    assert len(rows) == 1 + 5
    assert rows[-1].startswith("10,")


def test_table_rows():
    assert table_row(1, 12).timings.t_tr == 304.0
    assert table_row(4, 4).timings.t_tr == 45.3
    assert table_row(1, 4).timings.t_tr == 25.2
    row = TRANSFER_TABLE["wghz"].timings
    assert (row.v_tr, row.v_bar, row.t_prep, row.t_bar) == (0.5, 30, 7, 15)
    b4 = TRANSFER_TABLE["bell4"].timings
    assert (b4.v_tr, b4.v_interior, b4.t_prep) == (0.5, 0.38, 20)
    assert b4.heights(4) == [0.5, 0.38, 0.38, 0.5]
    with pytest.raises(KeyError):
        table_row(3, 8)


def test_transfer_schedule_nesting():
    spec = LatticeSpec(N=2, ell=4)
    tm = TRANSFER_TABLE["wghz"].timings
    s = build_transfer_schedule(spec, 1, 2, [0.5], tm)
    assert set(s.channels) == {"v1", "v2", "u1", "u2"}
    bar = [seg for seg in s.segments if seg.peak == tm.v_bar]
    tr = [seg for seg in s.segments if seg.peak != tm.v_bar]
    assert [seg.channel for seg in bar] == ["v1"]
    assert all(seg.t_start >= bar[0].t_start + bar[0].ramp - 1e-12 for seg in tr)
    assert all(seg.t_end <= bar[0].t_end - bar[0].ramp + 1e-12 for seg in tr)
    for ch in s.channels:
        assert float(s.value(ch, 0.0)) == 0.0
        assert abs(float(s.value(ch, s.horizon))) < 1e-12
    t = np.linspace(0, s.horizon, 1001)
    for ch in s.channels:
        np.testing.assert_allclose(s.value(ch, t), s.value(ch, s.horizon - t), atol=1e-12)


def test_transfer_schedule_leaves_intermediate_stubs_off():
    spec = LatticeSpec(N=3, ell=4)
    s = build_transfer_schedule(spec, 0, 3, [0.5, 0.4, 0.5], TRANSFER_TABLE["wghz"].timings)
    assert "u1" not in s.channels and "u2" not in s.channels
    assert {"u0", "u3", "v1", "v2", "v3"} <= set(s.channels)
    with pytest.raises(ValueError):
        build_transfer_schedule(spec, 0, 3, [0.5, 0.4, 0.3], TRANSFER_TABLE["wghz"].timings)
    with pytest.raises(ValueError):
        build_transfer_schedule(spec, 1, 1, [], TRANSFER_TABLE["wghz"].timings)
