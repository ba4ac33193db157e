"""Reduced states, concurrence, W/GHZ witnesses and the loss decomposition."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .dynamics import JointBasis
from .lattice import LatticeSpec, dimerized_edge_states, trivial_defect_states

PSD_TOL = 1e-10
BLOCK_TOL = 1e-6
RANK_TOL = 1e-14

_SY = np.array([[0, -1j], [1j, 0]])
_SPIN_FLIP = np.kron(_SY, _SY)


# reductions ---------------------------------------------------------------


def partial_trace(x: np.ndarray, dims: Sequence[int], keep: Sequence[int]) -> np.ndarray:
    """Reduce a state vector or density matrix on ``prod(dims)`` to the subsystems in ``keep``.

    Kept subsystems stay in their original order.
    """
    dims = [int(d) for d in dims]
    total = int(np.prod(dims))
    keep = sorted(set(int(k) for k in keep))
    if any(not 0 <= k < len(dims) for k in keep):
        raise ValueError(f"keep {keep} outside subsystems 0..{len(dims) - 1}")
    x = np.asarray(x, dtype=complex)
    drop = [k for k in range(len(dims)) if k not in keep]
    kd = int(np.prod([dims[k] for k in keep]))
    if x.ndim == 1:
        if x.shape[0] != total:
            raise ValueError("state length does not match dims")
        psi = np.moveaxis(x.reshape(dims), keep + drop, range(len(dims))).reshape(kd, -1)
        return psi @ psi.conj().T
    if x.shape != (total, total):
        raise ValueError("density matrix shape does not match dims")
    n = len(dims)
    rho = x.reshape(dims + dims)
    perm = keep + drop
    rho = rho.transpose(perm + [n + p for p in perm])
    dd = total // kd
    rho = rho.reshape(kd, dd, kd, dd)
    return np.einsum("ajbj->ab", rho)


def qudit_density(state: np.ndarray, basis: JointBasis) -> np.ndarray:
    """Qudit density matrix with the photonic sector traced out."""
    psi = np.asarray(state).reshape(basis.shape)
    return psi @ psi.conj().T


def photon_density(state: np.ndarray, basis: JointBasis) -> np.ndarray:
    """Photonic density matrix over (vacuum, one photon in each cavity)."""
    psi = np.asarray(state).reshape(basis.shape)
    return psi.T @ psi.conj()


def purity(rho: np.ndarray) -> float:
    return float(np.real(np.trace(rho @ rho)))


def fidelity(rho: np.ndarray, target: np.ndarray) -> float:
    """``<target|rho|target>``."""
    t = np.asarray(target, dtype=complex)
    return float(np.real(t.conj() @ rho @ t))


def _check_density(rho: np.ndarray, tol: float = PSD_TOL) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError("density matrix must be square")
    if not np.allclose(rho, rho.conj().T, atol=1e-9):
        raise ValueError("density matrix is not Hermitian")
    if np.linalg.eigvalsh(rho).min() < -tol * max(1.0, abs(np.trace(rho))):
        raise ValueError("density matrix is not positive semidefinite")
    return rho


def qubit_block(rho: np.ndarray, n: int, d: int) -> np.ndarray:
    """Restriction of an ``n``-qudit density matrix to the ``{0, 1}^n`` block (not renormalized)."""
    rho = np.asarray(rho)
    if rho.shape != (d ** n, d ** n):
        raise ValueError(f"expected a {d ** n}x{d ** n} matrix")
    if d == 2:
        return rho.copy()
    idx = [sum(bits[i] * d ** (n - 1 - i) for i in range(n)) for bits in np.ndindex(*(2,) * n)]
    return rho[np.ix_(idx, idx)]


# concurrence --------------------------------------------------------------


def concurrence(rho: np.ndarray) -> float:
    """Wootters concurrence of a two-qubit density matrix.

    Writes ``rho = A A^dagger`` from its eigendecomposition; the ``lambda_i``
    are then the singular values of ``A^T (sy x sy) A``, which avoids square
    roots of round-off sized eigenvalues. The input need not have unit trace;
    the result scales linearly with it.
    """
    rho = _check_density(rho)
    if rho.shape != (4, 4):
        raise ValueError("concurrence needs a 4x4 density matrix")
    e, v = np.linalg.eigh(rho)
    keep = e > RANK_TOL * max(e.max(), 0.0)
    if not keep.any():
        return 0.0
    a = v[:, keep] * np.sqrt(e[keep])
    lam = np.zeros(4)
    sv = np.linalg.svd(a.T @ _SPIN_FLIP @ a, compute_uv=False)
    lam[: len(sv)] = sv
    return float(max(0.0, lam[0] - lam[1] - lam[2] - lam[3]))


def qudit_concurrence(rho: np.ndarray, d: int) -> float:
    """Concurrence of two qudits restricted to their ``{0, 1}`` levels.

    The block is renormalized when it holds at least ``1 - 1e-6`` of the
    trace; otherwise the weight outside it is counted as lost entanglement.
    """
    if d == 2:
        return concurrence(rho)
    block = qubit_block(rho, 2, d)
    weight = float(np.real(np.trace(block)))
    total = float(np.real(np.trace(rho)))
    if weight >= (1 - BLOCK_TOL) * total and weight > 0:
        block = block * (total / weight)
    return concurrence(block)


# witnesses ----------------------------------------------------------------


def _three_qubit(rho: np.ndarray) -> np.ndarray:
    rho = np.asarray(rho)
    if rho.shape == (8, 8):
        return rho
    if rho.shape == (27, 27):
        return qubit_block(rho, 3, 3)
    raise ValueError(f"witness needs a three-qubit or three-qutrit matrix, got {rho.shape}")


W_STATE = np.zeros(8, dtype=complex)
W_STATE[[4, 2, 1]] = np.array([1, -1j, 1]) / np.sqrt(3)
GHZ_STATE = np.zeros(8, dtype=complex)
GHZ_STATE[[0, 7]] = 1 / np.sqrt(2)


def witness_w(rho: np.ndarray) -> float:
    """``-2/3 + <W|rho|W>`` for ``|W> = (|100> - i|010> + |001>)/sqrt(3)``."""
    return -2 / 3 + fidelity(_three_qubit(rho), W_STATE)


def witness_ghz(rho: np.ndarray) -> float:
    """``-3/4 + <GHZ|rho|GHZ>`` for the zero-phase GHZ state."""
    return -3 / 4 + fidelity(_three_qubit(rho), GHZ_STATE)


# loss decomposition -------------------------------------------------------


@dataclass(frozen=True)
class MetricSet:
    f: float
    p_vac: float
    p_edge_literal: float
    p_edge_linear: float
    p_no_bulk: float
    p_trivial: float
    concurrence: float | None = None
    witness_w: float | None = None
    witness_ghz: float | None = None

    @property
    def entanglement(self) -> float | None:
        for x in (self.concurrence, self.witness_w, self.witness_ghz):
            if x is not None:
                return x
        return None

    def to_dict(self) -> dict:
        return asdict(self)


def _manifold_population(rho_ph: np.ndarray, states: np.ndarray) -> float:
    if states.size == 0:
        return 0.0
    block = rho_ph[1:, 1:]
    return float(np.real(np.einsum("ki,ij,kj->", states.conj(), block, states)))


def compute_metrics(
    state: np.ndarray,
    basis: JointBasis,
    spec: LatticeSpec,
    target: np.ndarray,
    witness: str | None = None,
) -> MetricSet:
    """Fidelity, vacuum and edge populations, and the entanglement figure of merit.

    The fidelity is the overlap with the target and an empty lattice,
    ``<target, vac| rho |target, vac>``; it equals ``<target| rho_q |target>``
    whenever no photon is left, and never exceeds ``p_vac``.
    ``witness`` selects ``"concurrence"``, ``"w"`` or ``"ghz"``; by default
    two-qudit states get the concurrence and others none.
    """
    psi = np.asarray(state).reshape(basis.shape)
    rho_q = qudit_density(state, basis)
    rho_ph = photon_density(state, basis)
    e = _manifold_population(rho_ph, dimerized_edge_states(spec))
    p_vac = float(np.real(rho_ph[0, 0]))
    kw = {}
    if witness is None and basis.p == 2:
        witness = "concurrence"
    if witness == "concurrence":
        kw["concurrence"] = qudit_concurrence(rho_q, basis.d)
    elif witness == "w":
        kw["witness_w"] = witness_w(rho_q)
    elif witness == "ghz":
        kw["witness_ghz"] = witness_ghz(rho_q)
    elif witness is not None:
        raise ValueError(f"unknown witness {witness!r}")
    return MetricSet(
        f=float(abs(np.vdot(target, psi[:, 0])) ** 2),
        p_vac=p_vac,
        p_edge_literal=e ** 2,
        p_edge_linear=e,
        p_no_bulk=p_vac + e,
        p_trivial=_manifold_population(rho_ph, trivial_defect_states(spec)),
        **kw,
    )


def loss_decomposition(result, spec: LatticeSpec | None = None) -> MetricSet:
    """Metric set of a protocol result against its analytic target."""
    spec = result.plan.lattice if spec is None else spec
    return compute_metrics(result.state, result.basis, spec, result.target, result.plan.witness)
