"""Stub-SSH cavity lattice: geometry, tight-binding matrices, edge modes and disorder.

Sites are addressed as ``(j, alpha)`` with unit cell ``j = 1..n_cells`` and
sublattice ``alpha in {"A", "B"}``. The matrix basis orders sites by cell, A
before B, skipping wall stubs when the lattice is built without them.

All hoppings enter with a negative sign. On-site energies set through an
``eps[jA]`` parameter enter the same way (``-eps``), so a positive on-site
pulse advances the phase of a parked photon.
"""

from __future__ import annotations

import enum
import functools
import re
from dataclasses import dataclass, replace
from typing import Mapping

import numpy as np

Site = tuple[int, str]

_EPS_KEY = re.compile(r"^eps\[(\d+)([AB])\]$")


def _other(alpha: str) -> str:
    return "B" if alpha == "A" else "A"


@dataclass(frozen=True)
class LatticeSpec:
    """Geometry and hopping amplitudes of a stub-SSH lattice.

    ``u`` and ``v`` hold one value per domain (``u[k-1]`` is the extremal link
    of domain ``k``). With ``stubs=False`` the cavities hanging off the domain
    walls are removed, leaving the connected multidomain chain.
    """

    N: int
    ell: int
    w: float = 1.0
    u0: float = 0.0
    u: tuple[float, ...] = ()
    v: tuple[float, ...] = ()
    qudit_sites: tuple[Site, ...] = ()
    stubs: bool = True

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be at least 1")
        if self.ell < 2 or self.ell % 2:
            raise ValueError(f"ell must be an even integer >= 2, got {self.ell}")
        u = tuple(float(x) for x in self.u) if self.u else (0.0,) * self.N
        v = tuple(float(x) for x in self.v) if self.v else (0.0,) * self.N
        if len(u) != self.N or len(v) != self.N:
            raise ValueError("u and v need exactly one entry per domain")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "u0", float(self.u0))
        object.__setattr__(self, "w", float(self.w))
        sites = tuple((int(j), str(a)) for j, a in self.qudit_sites)
        object.__setattr__(self, "qudit_sites", sites)
        for s in sites:
            if s not in self.site_index:
                raise ValueError(f"qudit site {s} is not a cavity of this lattice")

    # geometry -------------------------------------------------------------

    @property
    def n_cells(self) -> int:
        return self.N * self.ell // 2 + 1

    def wall_cell(self, k: int) -> int:
        """Unit cell of boundary ``k`` (0 is the left end, N the right end)."""
        return k * self.ell // 2 + 1

    def boundary_sublattice(self, k: int) -> str:
        if k == 0:
            return "A"
        return "B" if k % 2 else "A"

    def boundary_site(self, k: int) -> Site:
        """Extremal cavity at boundary ``k``: left end, wall stub, or right end."""
        if not 0 <= k <= self.N:
            raise ValueError(f"boundary {k} outside 0..{self.N}")
        site = (self.wall_cell(k), self.boundary_sublattice(k))
        if site not in self.site_index:
            raise ValueError(f"boundary {k} has no extremal cavity (stubs removed)")
        return site

    @functools.cached_property
    def sites(self) -> tuple[Site, ...]:
        removed = set()
        if not self.stubs:
            removed = {(self.wall_cell(k), self.boundary_sublattice(k)) for k in range(1, self.N)}
        return tuple(
            (j, a) for j in range(1, self.n_cells + 1) for a in "AB" if (j, a) not in removed
        )

    @functools.cached_property
    def site_index(self) -> dict[Site, int]:
        return {s: i for i, s in enumerate(self.sites)}

    @property
    def n_cav(self) -> int:
        return len(self.sites)

    def index(self, site: Site) -> int:
        try:
            return self.site_index[(int(site[0]), str(site[1]))]
        except KeyError:
            raise ValueError(f"no cavity at {site}") from None

    def qudit_boundary(self, q: int) -> int:
        site = self.qudit_sites[q]
        for k in range(self.N + 1):
            if (self.wall_cell(k), self.boundary_sublattice(k)) == site:
                return k
        raise ValueError(f"qudit {q} does not sit on an extremal cavity")

    @functools.cached_property
    def links(self) -> tuple[tuple[str, int, int], ...]:
        """Structural hopping links as ``(parameter, i, j)`` with ``i < j``."""
        out = []

        def add(name, s1, s2):
            if s1 in self.site_index and s2 in self.site_index:
                i, j = sorted((self.site_index[s1], self.site_index[s2]))
                out.append((name, i, j))

        add("u0", (1, "B"), (1, "A"))
        half = self.ell // 2
        for k in range(1, self.N + 1):
            j0 = (k - 1) * half + 1
            a, b = ("A", "B") if k % 2 else ("B", "A")
            for j in range(1, half + 1):
                add("w", (j0 + j, a), (j0 + j - 1, b))
            for j in range(1, half):
                add(f"v{k}", (j0 + j, b), (j0 + j, a))
            add(f"u{k}", (j0 + half, b), (j0 + half, a))
        return tuple(out)

    @property
    def parameter_names(self) -> tuple[str, ...]:
        return ("w", "u0") + tuple(f"u{k}" for k in range(1, self.N + 1)) + tuple(
            f"v{k}" for k in range(1, self.N + 1)
        )

    def parameters(self) -> dict[str, float]:
        p = {"w": self.w, "u0": self.u0}
        p.update({f"u{k + 1}": x for k, x in enumerate(self.u)})
        p.update({f"v{k + 1}": x for k, x in enumerate(self.v)})
        return p

    def is_topological(self, tol: float = 0.0) -> bool:
        """True when ``w`` exceeds every active ``u`` and ``v`` link."""
        active = [x for x in (self.u0, *self.u, *self.v) if x != 0.0]
        return all(self.w > x + tol for x in active)

    def with_params(self, **params: float) -> "LatticeSpec":
        p = self.parameters()
        for key, val in params.items():
            if key not in p:
                raise KeyError(f"unknown parameter {key!r}")
            p[key] = float(val)
        return replace(
            self,
            w=p["w"],
            u0=p["u0"],
            u=tuple(p[f"u{k}"] for k in range(1, self.N + 1)),
            v=tuple(p[f"v{k}"] for k in range(1, self.N + 1)),
        )

    # serialization ---------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "N": self.N,
            "ell": self.ell,
            "w": self.w,
            "u0": self.u0,
            "u": list(self.u),
            "v": list(self.v),
            "qudit_sites": [[j, a] for j, a in self.qudit_sites],
            "stubs": self.stubs,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "LatticeSpec":
        known = {"N", "ell", "w", "u0", "u", "v", "qudit_sites", "stubs"}
        extra = set(data) - known
        if extra:
            raise ValueError(f"unknown lattice keys: {sorted(extra)}")
        return cls(
            N=int(data["N"]),
            ell=int(data["ell"]),
            w=data.get("w", 1.0),
            u0=data.get("u0", 0.0),
            u=tuple(data.get("u", ())),
            v=tuple(data.get("v", ())),
            qudit_sites=tuple((int(j), str(a)) for j, a in data.get("qudit_sites", ())),
            stubs=bool(data.get("stubs", True)),
        )


def eps_key(site: Site) -> str:
    """Parameter name of the on-site energy at ``site``."""
    return f"eps[{site[0]}{site[1]}]"


@functools.lru_cache(maxsize=64)
def parameter_generators(spec: LatticeSpec) -> dict[str, np.ndarray]:
    """Matrices ``K_p`` such that ``H = sum_p value_p * K_p`` for hopping parameters."""
    n = spec.n_cav
    gens = {name: np.zeros((n, n)) for name in spec.parameter_names}
    for name, i, j in spec.links:
        gens[name][i, j] -= 1.0
        gens[name][j, i] -= 1.0
    for g in gens.values():
        g.setflags(write=False)
    return gens


def onsite_generator(spec: LatticeSpec, key: str) -> np.ndarray:
    m = _EPS_KEY.match(key)
    if not m:
        raise KeyError(f"unknown parameter {key!r}")
    i = spec.index((int(m.group(1)), m.group(2)))
    g = np.zeros((spec.n_cav, spec.n_cav))
    g[i, i] = -1.0
    return g


def generator(spec: LatticeSpec, key: str) -> np.ndarray:
    gens = parameter_generators(spec)
    if key in gens:
        return gens[key]
    return onsite_generator(spec, key)


def build_static_hamiltonian(spec: LatticeSpec, overrides: Mapping[str, float] | None = None) -> np.ndarray:
    """Pristine tight-binding matrix, with named parameters optionally overridden.

    ``overrides`` may replace ``w``, ``u0``, ``u<k>``, ``v<k>`` or set an
    on-site energy ``eps[jA]``. Unknown names raise ``KeyError``.
    """
    values = spec.parameters()
    onsite = {}
    for key, val in (overrides or {}).items():
        if key in values:
            values[key] = float(val)
        else:
            onsite_generator(spec, key)  # validates the key
            onsite[key] = float(val)
    gens = parameter_generators(spec)
    h = np.zeros((spec.n_cav, spec.n_cav))
    for key, val in values.items():
        if val:
            h += val * gens[key]
    for key, val in onsite.items():
        h += val * onsite_generator(spec, key)
    return h


def sublattice_parity(spec: LatticeSpec) -> np.ndarray:
    return np.diag([1.0 if a == "A" else -1.0 for _, a in spec.sites])


# disorder -----------------------------------------------------------------


class DisorderMode(str, enum.Enum):
    OFF_DIAGONAL = "od"
    GENERAL = "g"

    @classmethod
    def parse(cls, value: "str | DisorderMode") -> "DisorderMode":
        if isinstance(value, cls):
            return value
        aliases = {"od": cls.OFF_DIAGONAL, "offdiagonal": cls.OFF_DIAGONAL, "off_diagonal": cls.OFF_DIAGONAL,
                   "g": cls.GENERAL, "general": cls.GENERAL}
        try:
            return aliases[str(value).lower()]
        except KeyError:
            raise ValueError(f"unknown disorder mode {value!r}") from None


@dataclass(frozen=True)
class DisorderSpec:
    """Quasistatic Gaussian disorder of strength ``sigma`` (units of w).

    The random profile depends only on ``(base_seed, realization_index)``;
    ``sigma`` rescales it, so a realization keeps its shape across a sigma grid.
    """

    mode: DisorderMode = DisorderMode.OFF_DIAGONAL
    sigma: float = 0.0
    base_seed: int = 0
    realization_index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "mode", DisorderMode.parse(self.mode))
        if not self.sigma >= 0:
            raise ValueError(f"sigma must be nonnegative, got {self.sigma}")

    def rng(self) -> np.random.Generator:
        seq = np.random.SeedSequence(entropy=int(self.base_seed), spawn_key=(int(self.realization_index),))
        return np.random.Generator(np.random.PCG64(seq))


def link_shifts(spec: LatticeSpec, disorder: DisorderSpec) -> np.ndarray:
    """Unmasked perturbation for one realization.

    Every structural link gets an independent normal shift and, in general
    mode, so does every diagonal entry. The draws do not depend on the
    control values, so one realization is the same whatever is switched on.
    """
    n = spec.n_cav
    h = np.zeros((n, n))
    pairs = sorted({(i, j) for _, i, j in spec.links})
    rng = disorder.rng()
    z_links = rng.standard_normal(len(pairs))
    z_diag = rng.standard_normal(n)
    if disorder.sigma == 0:
        return h
    for (i, j), z in zip(pairs, z_links):
        h[i, j] = h[j, i] = disorder.sigma * z
    if disorder.mode is DisorderMode.GENERAL:
        h[np.diag_indices(n)] = disorder.sigma * z_diag
    return h


def mask_disorder(shifts: np.ndarray, pristine: np.ndarray) -> np.ndarray:
    """Keep off-diagonal shifts only where ``pristine`` has a link; diagonals pass through.

    ``pristine`` may be a stack of matrices, one per time step.
    """
    keep = pristine != 0
    n = shifts.shape[-1]
    keep[..., np.arange(n), np.arange(n)] = True
    return np.where(keep, shifts, 0.0)


def sample_disorder(spec: LatticeSpec, disorder: DisorderSpec, pristine: np.ndarray | None = None) -> np.ndarray:
    """Perturbation of the nonzero hopping entries of ``pristine`` (default: the static matrix of ``spec``).

    In general mode every diagonal entry is perturbed as well.
    """
    if pristine is None:
        pristine = build_static_hamiltonian(spec)
    return mask_disorder(link_shifts(spec, disorder), pristine)


# edge modes ---------------------------------------------------------------


def _check_localized(v: float, w: float):
    if not 0 <= v < w:
        raise ValueError(f"edge mode not localized for v={v}, w={w} (need 0 <= v < w)")


def analytic_edge_state(
    spec: LatticeSpec,
    which: str,
    k: int | None = None,
    *,
    v_left: float | None = None,
    v_right: float | None = None,
) -> np.ndarray:
    """Normalized zero-mode profile ``L``, ``R``, ``S`` (wall stub) or ``P`` (wall).

    Domain hoppings default to the lattice's own ``v`` values. An ``S`` mode
    decays into whichever neighbouring domain is given a nonzero hopping; its
    other side must be closed.
    """
    w = spec.w
    half = spec.ell // 2
    amps: dict[Site, float] = {}
    which = which.upper()
    if which == "L":
        v = spec.v[0] if v_right is None else v_right
        _check_localized(v, w)
        for j in range(1, half + 1):
            amps[(j, "A")] = (-v / w) ** (j - 1)
    elif which == "R":
        v = spec.v[-1] if v_left is None else v_left
        _check_localized(v, w)
        nc = spec.n_cells
        alpha = spec.boundary_sublattice(spec.N)
        for j in range(nc - half + 1, nc + 1):
            amps[(j, alpha)] = (-v / w) ** (nc - j)
    elif which in ("S", "P"):
        if k is None or not 1 <= k <= spec.N - 1:
            raise ValueError(f"{which} modes live on walls 1..{spec.N - 1}")
        j0 = spec.wall_cell(k)
        vl = spec.v[k - 1] if v_left is None else v_left
        vr = spec.v[k] if v_right is None else v_right
        if which == "P":
            _check_localized(vl, w)
            _check_localized(vr, w)
            alpha = "A" if k % 2 == 0 else "B"
            for j in range(j0 - half, j0):
                amps[(j, alpha)] = (-vl / w) ** (j0 - 1 - j)
            for j in range(j0 + 1, j0 + half + 1):
                amps[(j, alpha)] = -((-vr / w) ** (j - j0 - 1))
        else:
            spec.boundary_site(k)
            beta = spec.boundary_sublattice(k)
            if vl and vr:
                raise ValueError("S mode needs one adjacent domain closed (v = 0)")
            v, step = (vr, 1) if vr else (vl, -1)
            _check_localized(v, w)
            for m in range(half):
                amps[(j0 + step * m, beta)] = (-v / w) ** m
    else:
        raise ValueError(f"unknown edge mode {which!r}")
    vec = np.zeros(spec.n_cav)
    for site, a in amps.items():
        vec[spec.index(site)] = a
    return vec / np.linalg.norm(vec)


def dimerized_edge_states(spec: LatticeSpec) -> np.ndarray:
    """Fully dimerized boundary modes, one per row: ends, wall stubs and P modes."""
    rows = [analytic_edge_state(spec, "L", v_right=0.0)]
    for k in range(1, spec.N):
        if spec.stubs:
            rows.append(np.eye(spec.n_cav)[spec.index(spec.boundary_site(k))])
        rows.append(analytic_edge_state(spec, "P", k, v_left=0.0, v_right=0.0))
    rows.append(analytic_edge_state(spec, "R", v_left=0.0))
    return np.array(rows)


def trivial_defect_states(spec: LatticeSpec) -> np.ndarray:
    """Non-topological states of the three-site strong-strong wall defects."""
    rows = []
    for k in range(1, spec.N):
        j0 = spec.wall_cell(k)
        alpha = "A" if k % 2 == 0 else "B"
        centre = np.zeros(spec.n_cav)
        centre[spec.index((j0, _other(alpha)))] = 1.0
        sym = np.zeros(spec.n_cav)
        sym[spec.index((j0 - 1, alpha))] = sym[spec.index((j0 + 1, alpha))] = 1 / np.sqrt(2)
        rows += [centre, sym]
    return np.array(rows).reshape(-1, spec.n_cav)


def edge_probability(spec: LatticeSpec, vectors: np.ndarray) -> np.ndarray:
    """``p_e`` of each column of ``vectors`` against the dimerized edge set."""
    edges = dimerized_edge_states(spec)
    return np.sum(np.abs(edges @ vectors) ** 2, axis=0)


# topology -----------------------------------------------------------------


def winding_number(v: float, w: float = 1.0, domain_parity: str = "odd", k_samples: int = 256) -> int:
    """Winding of the off-diagonal Bloch term around the origin.

    Odd domains are plain SSH chains, ``h(k) = v + w e^{ik}``; even domains
    traverse the Brillouin zone backwards.
    """
    if k_samples < 64:
        raise ValueError("k_samples must be at least 64")
    if abs(v - w) < 1e-9 * max(1.0, abs(w)):
        raise ValueError("gap closes at v = w; winding undefined")
    sign = {"odd": 1, "even": -1}[domain_parity]
    k = np.linspace(0.0, 2 * np.pi, k_samples + 1)
    h = v + w * np.exp(1j * sign * k)
    dphi = np.angle(h[1:] / h[:-1])
    return int(round(dphi.sum() / (2 * np.pi)))


# ensemble spectra ---------------------------------------------------------


@dataclass(frozen=True)
class SpectrumRecord:
    rank: int
    mean_energy: float
    sigma_energy: float
    mean_pe: float

    @property
    def is_edge(self) -> bool:
        return self.mean_pe >= 0.5


def spectrum_statistics(
    spec: LatticeSpec,
    disorder: DisorderSpec,
    n_realizations: int,
    overrides: Mapping[str, float] | None = None,
) -> list[SpectrumRecord]:
    """Energy spread and edge weight of each eigenstate, grouped by energy rank."""
    if n_realizations < 2:
        raise ValueError("need at least two realizations")
    h0 = build_static_hamiltonian(spec, overrides)
    edges = dimerized_edge_states(spec)
    energies = np.empty((n_realizations, spec.n_cav))
    pe = np.empty_like(energies)
    for r in range(n_realizations):
        h = h0 + sample_disorder(spec, replace(disorder, realization_index=r), h0)
        e, vecs = np.linalg.eigh(h)
        energies[r] = e
        pe[r] = np.sum(np.abs(edges @ vecs) ** 2, axis=0)
    mean_e = energies.mean(axis=0)
    std_e = energies.std(axis=0, ddof=1)
    mean_pe = pe.mean(axis=0)
    return [
        SpectrumRecord(i, float(mean_e[i]), float(std_e[i]), float(mean_pe[i]))
        for i in range(spec.n_cav)
    ]
