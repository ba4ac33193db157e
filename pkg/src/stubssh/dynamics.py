"""Joint qudit-photon dynamics under a control schedule.

The joint basis is qudit-configuration major, photon minor: index
``c * (n_cav + 1) + s`` where ``c`` enumerates qudit configurations with qudit
0 as the most significant digit and ``s = 0`` is the photonic vacuum, ``s =
1 + i`` one photon in cavity ``i``. At most one photon is kept.

The coupling of qudit ``q`` is ``g_q (c |s_u><s_l| + h.c.)`` in the rotating
frame, so resonant exchange rotates ``|s_u, vac> -> cos|..> - i sin|s_l, photon>``.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from typing import IO, Mapping, Sequence

import numpy as np
import scipy.linalg

from .lattice import LatticeSpec, build_static_hamiltonian, generator
from .pulses import ControlSchedule, TransferTimings, build_transfer_schedule, table_row

MAX_STEP = 0.02


class NumericalError(RuntimeError):
    """Raised when a propagated state stops being finite."""


@dataclass(frozen=True)
class JointBasis:
    p: int
    d: int
    n_cav: int

    def __post_init__(self):
        if self.p < 0 or self.d < 2 or self.n_cav < 1:
            raise ValueError("invalid joint basis dimensions")

    @property
    def n_configs(self) -> int:
        return self.d ** self.p

    @property
    def n_photon(self) -> int:
        return self.n_cav + 1

    @property
    def dim(self) -> int:
        return self.n_configs * self.n_photon

    @property
    def shape(self) -> tuple[int, int]:
        return self.n_configs, self.n_photon

    def configs(self) -> np.ndarray:
        return np.array(list(itertools.product(range(self.d), repeat=self.p)), dtype=int).reshape(self.n_configs, self.p)

    def config_index(self, config: Sequence[int]) -> int:
        if len(config) != self.p or any(not 0 <= s < self.d for s in config):
            raise ValueError(f"bad qudit configuration {config}")
        idx = 0
        for s in config:
            idx = idx * self.d + int(s)
        return idx

    def index(self, config: Sequence[int], photon: int | None = None) -> int:
        slot = 0 if photon is None else photon + 1
        if not 0 <= slot <= self.n_cav:
            raise ValueError(f"photon cavity {photon} outside the lattice")
        return self.config_index(config) * self.n_photon + slot

    def ket(self, config: Sequence[int], photon: int | None = None) -> np.ndarray:
        v = np.zeros(self.dim, dtype=complex)
        v[self.index(config, photon)] = 1.0
        return v

    def excitations(self) -> np.ndarray:
        """Number of qudits above their ground level, per configuration."""
        return (self.configs() > 0).sum(axis=1)


def basis_for(spec: LatticeSpec, d: int = 2, p: int | None = None) -> JointBasis:
    return JointBasis(len(spec.qudit_sites) if p is None else p, d, spec.n_cav)


@dataclass(frozen=True)
class DecaySpec:
    """No-jump amplitude decay: every qudit above its ground level loses amplitude as ``exp(-gamma t)``."""

    gamma: float = 0.0

    def __post_init__(self):
        if not self.gamma >= 0:
            raise ValueError("gamma must be nonnegative")


@dataclass(frozen=True)
class Coupling:
    qudit: int
    cavity: int
    g: float
    lower: int = 0
    upper: int = 1


def assemble_joint_hamiltonian(
    lattice_matrix: np.ndarray,
    couplings: Sequence[Coupling],
    basis: JointBasis,
    decay: DecaySpec | None = None,
) -> np.ndarray:
    """Full joint matrix ``H_gamma + H_Q + H_Qgamma`` in the truncated basis.

    With ``decay`` the anti-Hermitian term ``-i gamma n_exc`` is included.
    """
    n = basis.n_cav
    if lattice_matrix.shape != (n, n):
        raise ValueError("lattice matrix does not match the basis")
    block = np.zeros((n + 1, n + 1), dtype=complex)
    block[1:, 1:] = lattice_matrix
    h = np.kron(np.eye(basis.n_configs), block)
    configs = basis.configs()
    for c in couplings:
        if c.lower == c.upper:
            raise ValueError("coupling needs distinct lower and upper levels")
        if not 0 <= c.cavity < n:
            raise ValueError(f"coupling cavity {c.cavity} outside the lattice")
        if not 0 <= c.qudit < basis.p or not 0 <= c.lower < basis.d or not 0 <= c.upper < basis.d:
            raise ValueError("coupling addresses a missing qudit or level")
        for ci, conf in enumerate(configs):
            if conf[c.qudit] != c.lower:
                continue
            up = conf.copy()
            up[c.qudit] = c.upper
            i = ci * (n + 1) + 1 + c.cavity
            j = basis.config_index(up) * (n + 1)
            h[i, j] += c.g
            h[j, i] += c.g
    if decay is not None and decay.gamma:
        exc = np.repeat(basis.excitations(), n + 1)
        h = h - 1j * decay.gamma * np.diag(exc)
    return h


# propagation helpers ------------------------------------------------------


def _unitaries(hs: np.ndarray, dts: np.ndarray) -> np.ndarray:
    e, v = np.linalg.eigh(hs)
    phase = np.exp(-1j * e * dts[:, None])
    return np.einsum("sij,sj,skj->sik", v, phase, v.conj())


def _propagators(hs: np.ndarray, dts: np.ndarray, hermitian: bool) -> np.ndarray:
    if hermitian:
        return _unitaries(hs, dts)
    return scipy.linalg.expm(-1j * hs * dts[:, None, None])


@dataclass
class Trajectory:
    times: list[float] = field(default_factory=list)
    states: list[np.ndarray] = field(default_factory=list)

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def at(self, t: float) -> np.ndarray:
        i = int(np.argmin(np.abs(np.asarray(self.times) - t)))
        return self.states[i]

    def to_csv(self, fh: IO[str], basis: JointBasis) -> None:
        """Rows of time, basis-state probabilities and norm."""
        writer = csv.writer(fh)
        labels = []
        for conf in basis.configs():
            tag = "".join(map(str, conf))
            labels.append(f"{tag}|vac")
            labels += [f"{tag}|{i}" for i in range(basis.n_cav)]
        writer.writerow(["t", *labels, "norm"])
        for t, s in zip(self.times, self.states):
            p = np.abs(s) ** 2
            writer.writerow([f"{t:.10g}", *(f"{x:.12g}" for x in p), f"{math.sqrt(p.sum()):.15g}"])


class _Propagator:
    """Step-by-step integrator bound to one lattice, schedule and disorder realization."""

    def __init__(self, spec, schedule, basis, disorder, decay, transitions):
        self.spec = spec
        self.schedule = schedule
        self.basis = basis
        self.gamma = decay.gamma if decay is not None else 0.0
        self.transitions = dict(transitions or {})
        chans = schedule.channels
        self.g_channels = [c for c in chans if c.startswith("g")]
        self.lattice_channels = [c for c in chans if not c.startswith("g")]
        fixed = build_static_hamiltonian(spec, {c: 0.0 for c in self.lattice_channels})
        if disorder is not None:
            fixed = fixed + disorder
        self.fixed = fixed
        self.gens = np.array([generator(spec, c) for c in self.lattice_channels]).reshape(
            len(self.lattice_channels), spec.n_cav, spec.n_cav
        )
        self.exc = basis.excitations().astype(float)
        for c in self.g_channels:
            q = int(c[1:])
            if not 0 <= q < basis.p or q >= len(spec.qudit_sites):
                raise ValueError(f"channel {c} addresses a missing qudit")

    def coupling_for(self, channel: str, g: float) -> Coupling:
        q = int(channel[1:])
        lo, up = self.transitions.get(q, (0, 1))
        return Coupling(q, self.spec.index(self.spec.qudit_sites[q]), g, lo, up)

    def lattice_stack(self, mids: np.ndarray) -> np.ndarray:
        hs = np.broadcast_to(self.fixed, (len(mids),) + self.fixed.shape).copy()
        for k, c in enumerate(self.lattice_channels):
            vals = self.schedule.value(c, mids)
            if np.any(vals):
                hs += vals[:, None, None] * self.gens[k]
        return hs

    def lattice_constant(self, a: float, b: float) -> bool:
        return all(s.constant_on(a, b) for s in self.schedule.segments if not s.channel.startswith("g"))

    def advance(self, psi: np.ndarray, a: float, b: float, step: float) -> np.ndarray:
        if self.schedule.constant_on(a, b):
            mids = np.array([(a + b) / 2])
        else:
            n = max(1, math.ceil((b - a) / step - 1e-9))
            mids = a + (np.arange(n) + 0.5) * (b - a) / n
        dts = np.full(len(mids), (b - a) / len(mids))
        active = [c for c in self.g_channels if c in self.schedule.active_channels(a, b)]
        if not active:
            return self._photonic(psi, a, b, mids, dts)
        if len(active) == 1:
            return self._exchange(psi, a, b, mids, dts, active[0])
        return self._general(psi, mids, dts, active)

    def _lattice_props(self, a, b, mids, dts):
        if self.lattice_constant(a, b) and len(mids) > 1:
            u = _unitaries(self.lattice_stack(mids[:1]), dts[:1])
            return np.broadcast_to(u, (len(mids),) + u.shape[1:])
        return _unitaries(self.lattice_stack(mids), dts)

    def _photonic(self, psi, a, b, mids, dts):
        us = self._lattice_props(a, b, mids, dts)
        ph = psi[:, 1:]
        for u in us:
            ph = ph @ u.T
        psi = np.concatenate([psi[:, :1], ph], axis=1)
        if self.gamma:
            psi = psi * np.exp(-self.gamma * self.exc * (b - a))[:, None]
        return psi

    def _exchange(self, psi, a, b, mids, dts, channel):
        basis = self.basis
        coup = self.coupling_for(channel, 1.0)
        configs = basis.configs()
        q, lo, up = coup.qudit, coup.lower, coup.upper
        rows_l = np.flatnonzero(configs[:, q] == lo)
        partner = configs[rows_l].copy()
        partner[:, q] = up
        rows_u = np.array([basis.config_index(c) for c in partner], dtype=int)
        others = np.setdiff1d(np.arange(basis.n_configs), np.concatenate([rows_l, rows_u]))
        n = basis.n_cav
        g = self.schedule.value(channel, mids)
        hl = self.lattice_stack(mids)
        hx = np.zeros((len(mids), n + 1, n + 1), dtype=complex)
        hx[:, 1:, 1:] = hl
        hx[:, 0, 1 + coup.cavity] = g
        hx[:, 1 + coup.cavity, 0] = g
        delta = float(up > 0) - float(lo > 0)
        hermitian = not (self.gamma and delta)
        if not hermitian:
            hx[:, 0, 0] = -1j * self.gamma * delta
        ux = _propagators(hx, dts, hermitian)
        ul = self._lattice_props(a, b, mids, dts)
        exc = self.exc
        for k in range(len(mids)):
            damp = np.exp(-self.gamma * exc * dts[k]) if self.gamma else None
            new = np.empty_like(psi)
            x = np.concatenate([psi[rows_u, :1], psi[rows_l, 1:]], axis=1) @ ux[k].T
            if damp is not None:
                x *= damp[rows_l][:, None]
            new[rows_u, 0] = x[:, 0]
            new[rows_l, 1:] = x[:, 1:]
            new[rows_l, 0] = psi[rows_l, 0] * (damp[rows_l] if damp is not None else 1.0)
            rest = np.concatenate([rows_u, others])
            ph = psi[rest, 1:] @ ul[k].T
            vac = psi[others, 0]
            if damp is not None:
                ph = ph * damp[rest][:, None]
                vac = vac * damp[others]
            new[rest, 1:] = ph
            new[others, 0] = vac
            psi = new
        return psi

    def _general(self, psi, mids, dts, active):
        hl = self.lattice_stack(mids)
        decay = DecaySpec(self.gamma) if self.gamma else None
        flat = psi.reshape(-1)
        for k, t in enumerate(mids):
            coups = [self.coupling_for(c, float(self.schedule.value(c, t))) for c in active]
            h = assemble_joint_hamiltonian(hl[k], coups, self.basis, decay)
            if decay is None:
                u = _unitaries(h[None], dts[k:k + 1])[0]
            else:
                u = scipy.linalg.expm(-1j * h * dts[k])
            flat = u @ flat
        return flat.reshape(psi.shape)


def evolve(
    state: np.ndarray,
    schedule: ControlSchedule,
    spec: LatticeSpec,
    basis: JointBasis,
    *,
    disorder: np.ndarray | None = None,
    step: float = 0.01,
    decay: DecaySpec | None = None,
    transitions: Mapping[int, tuple[int, int]] | None = None,
    checkpoints: Sequence[float] = (),
    stride: float | None = None,
    t_start: float = 0.0,
    t_stop: float | None = None,
) -> Trajectory:
    """Propagate ``state`` over the schedule with midpoint exponential steps.

    Each step applies ``exp(-i H(t + h/2) h)``. Stretches where every channel
    is constant are taken in one exact exponential. ``transitions`` maps a
    qudit to the ``(lower, upper)`` levels its coupling channel addresses
    (default ``(0, 1)``). ``disorder`` is a constant perturbation
    added to the lattice matrix at every step. Integration runs from ``t_start`` to ``t_stop``
    (default: the schedule horizon). The trajectory holds the initial state,
    the state at each checkpoint and stride point, and the final state.
    """
    if not 0 < step <= MAX_STEP + 1e-15:
        raise ValueError(f"step must lie in (0, {MAX_STEP}]")
    state = np.asarray(state, dtype=complex)
    if state.shape != (basis.dim,):
        raise ValueError(f"state has shape {state.shape}, basis needs ({basis.dim},)")
    if basis.n_cav != spec.n_cav:
        raise ValueError("basis and lattice disagree on the cavity count")
    horizon = schedule.horizon if t_stop is None else float(t_stop)
    if not math.isfinite(horizon):
        raise ValueError("schedule horizon must be finite")
    if horizon < t_start:
        raise ValueError("integration window ends before it starts")
    prop = _Propagator(spec, schedule, basis, disorder, decay, transitions)
    marks = set(float(t) for t in checkpoints if t_start <= t <= horizon)
    if stride:
        marks.update(np.arange(t_start, horizon, stride).tolist())
    inner = {t for t in schedule.breakpoints() if t_start < t < horizon}
    points = sorted(inner | marks | {t_start, horizon})
    traj = Trajectory([t_start], [state.copy()])
    psi = state.reshape(basis.shape)
    for a, b in zip(points, points[1:]):
        if b - a <= 1e-12:
            continue
        psi = prop.advance(psi, a, b, step)
        if not np.all(np.isfinite(psi)):
            raise NumericalError(f"non-finite amplitudes at t={b:g}")
        if b in marks and b != horizon:
            traj.times.append(b)
            traj.states.append(psi.reshape(-1).copy())
    if traj.times[-1] != horizon or len(traj.times) == 1:
        traj.times.append(horizon)
        traj.states.append(psi.reshape(-1).copy())
    return traj


# instantaneous gates ------------------------------------------------------

GATES = {"X": (0, 1), "A": (1, 2)}


def apply_gate(state: np.ndarray, basis: JointBasis, gate: str, qudit: int) -> np.ndarray:
    """Swap two levels of ``qudit`` and multiply by the global phase ``-i``.

    ``X`` swaps levels 0 and 1, ``A`` swaps 1 and 2; other levels are untouched.
    """
    a, b = GATES[gate]
    if max(a, b) >= basis.d:
        raise ValueError(f"gate {gate} needs at least {max(a, b) + 1} levels")
    configs = basis.configs()
    target = configs.copy()
    col = target[:, qudit]
    col_a, col_b = col == a, col == b
    col[col_a], col[col_b] = b, a
    perm = np.array([basis.config_index(c) for c in target])
    psi = np.asarray(state).reshape(basis.shape)
    out = np.empty_like(psi)
    out[perm] = psi
    return -1j * out.reshape(-1)


# photonic transfers -------------------------------------------------------


def zeta(n_d: int, ell: int) -> complex:
    """Phase picked up by a photon crossing ``n_d`` domains of length ``ell``."""
    base = (-1) ** (ell // 2 + 1) * 1j
    return complex(-(base ** n_d))


def transfer_amplitude(
    spec: LatticeSpec,
    schedule: ControlSchedule,
    from_boundary: int,
    to_boundary: int,
    *,
    step: float = 0.01,
    disorder: np.ndarray | None = None,
) -> complex:
    """Amplitude reaching the destination cavity for a photon launched at the source cavity."""
    basis = JointBasis(0, 2, spec.n_cav)
    psi = np.zeros(basis.dim, dtype=complex)
    psi[1 + spec.index(spec.boundary_site(from_boundary))] = 1.0
    out = evolve(psi, schedule, spec, basis, disorder=disorder, step=step).final
    return complex(out[1 + spec.index(spec.boundary_site(to_boundary))])


def transfer_lattice(n_d: int, ell: int) -> LatticeSpec:
    """Bare multidomain chain used for an end-to-end photonic transfer."""
    return LatticeSpec(N=n_d, ell=ell, stubs=False)


def photonic_transfer_phase(
    n_d: int,
    ell: int,
    *,
    timings: TransferTimings | None = None,
    heights: Sequence[float] | None = None,
    step: float = 0.01,
) -> complex:
    """Simulated end-mode amplitude after a pristine end-to-end transfer.

    Timings default to the tabulated row for ``(n_d, ell)``.
    """
    if timings is None:
        timings = table_row(n_d, ell).timings
    spec = transfer_lattice(n_d, ell)
    hs = timings.heights(n_d) if heights is None else list(heights)
    sched = build_transfer_schedule(spec, 0, n_d, hs, timings)
    amp = transfer_amplitude(spec, sched, 0, n_d, step=step)
    if abs(amp) ** 2 < 0.9:
        raise NumericalError(f"transfer probability {abs(amp) ** 2:.3f} below 0.9; recalibrate")
    return amp
