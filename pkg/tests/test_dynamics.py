import io
import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from stubssh.dynamics import (
    Coupling,
    DecaySpec,
    JointBasis,
    apply_gate,
    assemble_joint_hamiltonian,
    evolve,
    photonic_transfer_phase,
    zeta,
)
from stubssh.entanglement import qudit_density
from stubssh.lattice import DisorderSpec, LatticeSpec, build_static_hamiltonian, generator, sample_disorder
from stubssh.pulses import ControlSchedule, PulseSegment, coupling_pulse


def isolated_pair():
    """One cavity coupled to nothing (w = 0) hosting a qubit."""
    return LatticeSpec(N=1, ell=2, w=0.0, qudit_sites=((1, "A"),))


def reference_evolve(state, schedule, spec, basis, step, disorder=None, decay=None, transitions=None):
    """Brute force: full joint matrix at each step midpoint, exponentiated with expm."""
    transitions = transitions or {}
    lattice_ch = [c for c in schedule.channels if not c.startswith("g")]
    base = build_static_hamiltonian(spec, {c: 0.0 for c in lattice_ch})
    if disorder is not None:
        base = base + disorder
    pts = sorted({0.0, schedule.horizon, *schedule.breakpoints()})
    psi = state.copy()
    for a, b in zip(pts, pts[1:]):
        if b - a <= 1e-12:
            continue
        n = 1 if schedule.constant_on(a, b) else max(1, math.ceil((b - a) / step - 1e-9))
        dt = (b - a) / n
        for k in range(n):
            t = a + (k + 0.5) * dt
            h_lat = base + sum(float(schedule.value(c, t)) * generator(spec, c) for c in lattice_ch)
            coups = []
            for c in schedule.channels:
                if c.startswith("g"):
                    q = int(c[1:])
                    lo, up = transitions.get(q, (0, 1))
                    coups.append(Coupling(q, spec.index(spec.qudit_sites[q]), float(schedule.value(c, t)), lo, up))
            h = assemble_joint_hamiltonian(h_lat, coups, basis, decay)
            psi = scipy.linalg.expm(-1j * h * dt) @ psi
    return psi


def random_state(rng, dim):
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return v / np.linalg.norm(v)


def two_qubit_setup():
    spec = LatticeSpec(N=2, ell=4, qudit_sites=((1, "A"), (3, "B")))
    basis = JointBasis(2, 2, spec.n_cav)
    sched = ControlSchedule([
        PulseSegment("g0", 0.0, 6.0, 0.5, 3.0),
        PulseSegment("g1", 4.0, 9.0, 0.4, 2.5),
        PulseSegment("g0", 11.0, 13.0, 0.3, 1.0),
        PulseSegment("v1", 2.0, 12.0, 0.5, 3.0),
        PulseSegment("u1", 2.0, 12.0, 0.5, 3.0),
        PulseSegment("u0", 7.0, 14.0, 0.3, 2.0),
        PulseSegment("eps[3B]", 1.0, 5.0, -0.4, 1.5),
    ], horizon=15.0)
    return spec, basis, sched


@pytest.mark.parametrize("mode,gamma", [("od", 0.0), ("g", 0.0), ("g", 0.02)])
def test_fast_paths_match_brute_force(mode, gamma):
    spec, basis, sched = two_qubit_setup()
    rng = np.random.default_rng(11)
    psi0 = random_state(rng, basis.dim)
    dis = sample_disorder(spec, DisorderSpec(mode, 0.1, 4))
    decay = DecaySpec(gamma) if gamma else None
    fast = evolve(psi0, sched, spec, basis, disorder=dis, step=0.02, decay=decay).final
    ref = reference_evolve(psi0, sched, spec, basis, 0.02, dis, decay)
    np.testing.assert_allclose(fast, ref, atol=1e-10)


def test_qutrit_upper_transition_matches_brute_force():
    spec = LatticeSpec(N=1, ell=4, qudit_sites=((1, "A"), (3, "B")))
    basis = JointBasis(2, 3, spec.n_cav)
    sched = ControlSchedule([PulseSegment("g0", 0.0, 5.0, 0.5, 2.5), PulseSegment("g1", 1.0, 6.0, 0.5, 2.5),
                             PulseSegment("v1", 0.0, 6.0, 0.5, 2.0)])
    trans = {0: (1, 2), 1: (0, 1)}
    psi0 = random_state(np.random.default_rng(2), basis.dim)
    fast = evolve(psi0, sched, spec, basis, step=0.01, transitions=trans, decay=DecaySpec(0.01)).final
    ref = reference_evolve(psi0, sched, spec, basis, 0.01, decay=DecaySpec(0.01), transitions=trans)
    np.testing.assert_allclose(fast, ref, atol=1e-10)


def test_assembled_matrix_structure():
    spec = LatticeSpec(N=1, ell=4, v=(0.5,), qudit_sites=((1, "A"), (3, "B")))
    basis = JointBasis(2, 3, spec.n_cav)
    h = assemble_joint_hamiltonian(build_static_hamiltonian(spec),
                                   [Coupling(0, 0, 0.3, 1, 2), Coupling(1, 5, 0.2)], basis)
    assert h.shape == (9 * 7, 9 * 7)
    np.testing.assert_allclose(h, h.conj().T)
    # |1,0; photon at cavity 0> <-> |2,0; vac>
    assert h[basis.index((1, 0), 0), basis.index((2, 0))] == 0.3
    assert h[basis.index((0, 0), 5), basis.index((0, 1))] == 0.2
    assert np.all(np.diag(h) == 0)
    with pytest.raises(ValueError):
        assemble_joint_hamiltonian(build_static_hamiltonian(spec), [Coupling(0, 9, 0.3)], basis)
    with pytest.raises(ValueError):
        assemble_joint_hamiltonian(build_static_hamiltonian(spec), [Coupling(0, 0, 0.3, 1, 1)], basis)


def test_no_couplings_is_block_diagonal():
    spec = LatticeSpec(N=1, ell=4, v=(0.5,), qudit_sites=((1, "A"),))
    basis = JointBasis(1, 2, spec.n_cav)
    h = assemble_joint_hamiltonian(build_static_hamiltonian(spec), [], basis)
    n = basis.n_photon
    assert not np.any(h[:n, n:]) and not np.any(h[n:, :n])


def test_rabi_oscillation_with_constant_coupling():
    spec = isolated_pair()
    basis = JointBasis(1, 2, spec.n_cav)
    g = 0.37
    t_end = 12.0
    sched = ControlSchedule([PulseSegment("g0", 0.0, t_end, g, 1e-9)])
    times = np.linspace(0.5, 11.5, 12)
    traj = evolve(basis.ket((1,)), sched, spec, basis, step=0.01, checkpoints=times)
    for t in times:
        psi = traj.at(t)
        assert psi[basis.index((1,))] == pytest.approx(math.cos(g * t), abs=1e-7)
        assert psi[basis.index((0,), 0)] == pytest.approx(-1j * math.sin(g * t), abs=1e-7)


def test_pi_pulse_emits_with_minus_i():
    spec = isolated_pair()
    basis = JointBasis(1, 2, spec.n_cav)
    sched = ControlSchedule([coupling_pulse(1, 1, 0.5, "g0")])
    out = evolve(basis.ket((1,)), sched, spec, basis, step=0.01).final
    assert abs(out[basis.index((0,), 0)] - (-1j)) < 1e-6
    half = ControlSchedule([coupling_pulse(1, 2, 0.5, "g0")])
    out = evolve(basis.ket((1,)), half, spec, basis, step=0.01).final
    np.testing.assert_allclose(out[[basis.index((1,)), basis.index((0,), 0)]],
                               np.array([1, -1j]) / math.sqrt(2), atol=1e-6)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), d=st.sampled_from([2, 3]))
def test_norm_and_excitation_conservation(seed, d):
    rng = np.random.default_rng(seed)
    spec = LatticeSpec(N=2, ell=4, qudit_sites=((1, "A"), (5, "A")))
    basis = JointBasis(2, d, spec.n_cav)
    segs = []
    for q in range(2):
        t0 = rng.uniform(0, 6)
        segs.append(PulseSegment(f"g{q}", t0, t0 + rng.uniform(2, 6), rng.uniform(0.1, 0.6), 1.0))
    for ch in ("v1", "v2", "u1", "u0"):
        t0 = rng.uniform(0, 4)
        segs.append(PulseSegment(ch, t0, t0 + 6, rng.uniform(0, 1.0), 2.0))
    sched = ControlSchedule(segs)
    trans = {q: (1, 2) for q in range(2)} if d == 3 and rng.random() < 0.5 else None
    psi0 = random_state(rng, basis.dim)
    dis = sample_disorder(spec, DisorderSpec("g", 0.1, seed))
    out = evolve(psi0, sched, spec, basis, disorder=dis, step=0.02, transitions=trans).final
    assert abs(np.linalg.norm(out) - 1) < 1e-10
    levels = basis.configs().sum(axis=1)
    n_exc = (levels[:, None] + (np.arange(basis.n_photon) > 0)[None, :]).reshape(-1)
    for n in np.unique(n_exc):
        sel = n_exc == n
        assert abs(np.sum(np.abs(out[sel]) ** 2) - np.sum(np.abs(psi0[sel]) ** 2)) < 1e-10


def test_frozen_qudits_without_couplings():
    spec = LatticeSpec(N=2, ell=4, qudit_sites=((1, "A"), (3, "B")))
    basis = JointBasis(2, 2, spec.n_cav)
    rng = np.random.default_rng(5)
    psi0 = random_state(rng, basis.dim)
    sched = ControlSchedule([PulseSegment("v1", 0, 20, 0.5, 5), PulseSegment("v2", 3, 15, 0.7, 4)])
    dis = sample_disorder(spec, DisorderSpec("g", 0.1, 8))
    out = evolve(psi0, sched, spec, basis, disorder=dis, step=0.02).final
    np.testing.assert_allclose(qudit_density(out, basis), qudit_density(psi0, basis), atol=1e-12)


def test_zero_hamiltonian_is_identity():
    spec = LatticeSpec(N=1, ell=4, w=0.0)
    basis = JointBasis(1, 2, spec.n_cav)
    psi0 = random_state(np.random.default_rng(0), basis.dim)
    out = evolve(psi0, ControlSchedule([], horizon=50.0), spec, basis).final
    np.testing.assert_allclose(out, psi0, atol=1e-14)


def test_decay_of_frozen_excited_qubit():
    spec = LatticeSpec(N=1, ell=4, qudit_sites=((1, "A"),))
    basis = JointBasis(1, 2, spec.n_cav)
    gamma = 0.01
    times = np.arange(1.0, 40.0, 3.0)
    traj = evolve(basis.ket((1,)), ControlSchedule([], horizon=40.0), spec, basis,
                  decay=DecaySpec(gamma), checkpoints=times)
    norms = [np.linalg.norm(s) ** 2 for s in traj.states]
    assert np.all(np.diff(norms) < 0)
    for t, s in zip(traj.times, traj.states):
        assert np.linalg.norm(s) ** 2 == pytest.approx(math.exp(-2 * gamma * t), abs=1e-12)


def test_decay_norm_never_increases_during_emission():
    spec = LatticeSpec(N=1, ell=4, v=(0.3,), qudit_sites=((1, "A"),))
    basis = JointBasis(1, 2, spec.n_cav)
    sched = ControlSchedule([coupling_pulse(1, 1, 0.5, "g0", 1.0)], horizon=10.0)
    traj = evolve(basis.ket((1,)), sched, spec, basis, decay=DecaySpec(0.05), stride=0.25)
    norms = np.array([np.linalg.norm(s) for s in traj.states])
    assert np.all(np.diff(norms) <= 1e-15)


def test_step_validation_and_trajectory_csv():
    spec = isolated_pair()
    basis = JointBasis(1, 2, spec.n_cav)
    sched = ControlSchedule([coupling_pulse(1, 2, 0.5, "g0")])
    with pytest.raises(ValueError):
        evolve(basis.ket((1,)), sched, spec, basis, step=0.05)
    with pytest.raises(ValueError):
        evolve(np.ones(3), sched, spec, basis)
    traj = evolve(basis.ket((1,)), sched, spec, basis, stride=1.0)
    assert traj.times[0] == 0 and traj.times[-1] == pytest.approx(math.pi)
    fh = io.StringIO()
    traj.to_csv(fh, basis)
    lines = fh.getvalue().splitlines()
    assert lines[0].startswith("t,0|vac,0|0")
    assert lines[0].endswith(",norm")
    assert len(lines) == 1 + len(traj.times)


def test_gates():
    basis = JointBasis(2, 3, 2)
    psi = basis.ket((0, 2), 1)
    out = apply_gate(psi, basis, "X", 0)
    np.testing.assert_allclose(out, -1j * basis.ket((1, 2), 1))
    out = apply_gate(psi, basis, "A", 1)
    np.testing.assert_allclose(out, -1j * basis.ket((0, 1), 1))
    with pytest.raises(ValueError):
        apply_gate(JointBasis(1, 2, 2).ket((0,)), JointBasis(1, 2, 2), "A", 0)


def test_zeta_values():
    assert zeta(1, 4) == 1j
    assert zeta(1, 12) == 1j
    assert zeta(4, 4) == -1
    assert zeta(2, 4) == 1
    assert zeta(1, 2) == -1j


def test_simulated_transfer_phase_short_chain():
    amp = photonic_transfer_phase(1, 4)
    assert abs(amp) ** 2 >= 0.99
    assert abs(np.angle(amp / zeta(1, 4))) < 0.05


def test_basis_layout():
    basis = JointBasis(2, 3, 4)
    assert basis.dim == 9 * 5
    assert basis.index((0, 0)) == 0
    assert basis.index((0, 1), 2) == 1 * 5 + 3
    assert basis.index((2, 0)) == 6 * 5
    np.testing.assert_array_equal(basis.configs()[5], [1, 2])
    with pytest.raises(ValueError):
        basis.index((0, 3))
    with pytest.raises(ValueError):
        basis.index((0, 0), 4)
