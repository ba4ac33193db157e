"""Control waveforms and their composition into schedules.

Every pulse is a sin^2 ramp up, an optional flat top and a mirrored ramp down.
Channels are named after the parameter they drive: ``u0``, ``u<k>``, ``v<k>``
(lattice links), ``g<q>`` (qudit-cavity coupling of qudit ``q``) and
``eps[jA]`` (on-site energy of a cavity).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from typing import IO, Iterable, Sequence

import numpy as np

from .lattice import LatticeSpec

G0 = 0.5
_TOL = 1e-12


@dataclass(frozen=True)
class PulseSegment:
    channel: str
    t_start: float
    t_end: float
    peak: float
    ramp: float

    def __post_init__(self):
        duration = self.t_end - self.t_start
        if duration < -_TOL:
            raise ValueError("segment ends before it starts")
        if duration > _TOL:
            if self.ramp <= 0:
                raise ValueError("ramp time must be positive")
            if duration < 2 * self.ramp - 1e-9:
                raise ValueError(
                    f"duration {duration} shorter than two ramps of {self.ramp}"
                )

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start

    @property
    def area(self) -> float:
        return self.peak * (self.duration - self.ramp) if self.duration > _TOL else 0.0

    def on(self, channel: str, start: float = 0.0) -> "PulseSegment":
        """Copy of this pulse on ``channel`` starting at ``start``."""
        return replace(self, channel=channel, t_start=start, t_end=start + self.duration)

    def value(self, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        if self.duration <= _TOL or self.peak == 0:
            return out
        tau = t - self.t_start
        omega = math.pi / (2 * self.ramp)
        up = (tau >= 0) & (tau <= self.ramp)
        flat = (tau > self.ramp) & (tau <= self.duration - self.ramp)
        down = (tau > self.duration - self.ramp) & (tau <= self.duration)
        out[up] = self.peak * np.sin(omega * tau[up]) ** 2
        out[flat] = self.peak
        out[down] = self.peak * np.sin(omega * (tau[down] - self.duration)) ** 2
        return out

    def breakpoints(self) -> tuple[float, ...]:
        if self.duration <= _TOL:
            return ()
        return (self.t_start, self.t_start + self.ramp, self.t_end - self.ramp, self.t_end)

    def constant_on(self, a: float, b: float) -> bool:
        if self.duration <= _TOL or self.peak == 0:
            return True
        if b <= self.t_start + 1e-12 or a >= self.t_end - 1e-12:
            return True
        return a >= self.t_start + self.ramp - 1e-12 and b <= self.t_end - self.ramp + 1e-12


class ControlSchedule:
    """Immutable set of pulse segments; each channel is a single-valued function of time."""

    def __init__(self, segments: Iterable[PulseSegment] = (), horizon: float | None = None):
        segs = tuple(s for s in segments if s.duration > _TOL)
        by_channel: dict[str, list[PulseSegment]] = {}
        for s in segs:
            by_channel.setdefault(s.channel, []).append(s)
        for ch, items in by_channel.items():
            items.sort(key=lambda s: s.t_start)
            for a, b in zip(items, items[1:]):
                if b.t_start < a.t_end - 1e-9:
                    raise ValueError(f"overlapping segments on channel {ch!r}")
        self._segments = tuple(sorted(segs, key=lambda s: (s.t_start, s.channel)))
        end = max((s.t_end for s in segs), default=0.0)
        if horizon is None:
            horizon = end
        if horizon < end - 1e-9:
            raise ValueError("horizon shorter than the last segment")
        self._horizon = float(horizon)

    @property
    def segments(self) -> tuple[PulseSegment, ...]:
        return self._segments

    @property
    def horizon(self) -> float:
        return self._horizon

    @property
    def channels(self) -> tuple[str, ...]:
        return tuple(sorted({s.channel for s in self._segments}))

    def __repr__(self):
        return f"ControlSchedule({len(self._segments)} segments, horizon={self._horizon:g})"

    def value(self, channel: str, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for s in self._segments:
            if s.channel == channel:
                out = out + s.value(t)
        return out

    def values(self, t) -> dict[str, np.ndarray]:
        return {ch: self.value(ch, t) for ch in self.channels}

    def breakpoints(self) -> list[float]:
        pts = {0.0, self._horizon}
        for s in self._segments:
            pts.update(s.breakpoints())
        return sorted(pts)

    def constant_on(self, a: float, b: float) -> bool:
        return all(s.constant_on(a, b) for s in self._segments)

    def active_channels(self, a: float, b: float) -> set[str]:
        """Channels with a segment overlapping the open interval ``(a, b)``."""
        return {
            s.channel for s in self._segments
            if s.peak != 0 and s.t_start < b - 1e-12 and s.t_end > a + 1e-12
        }

    def shifted(self, offset: float) -> "ControlSchedule":
        return ControlSchedule(
            (replace(s, t_start=s.t_start + offset, t_end=s.t_end + offset) for s in self._segments),
            self._horizon + offset,
        )

    def then(self, other: "ControlSchedule") -> "ControlSchedule":
        """Concatenate ``other`` after this schedule's horizon."""
        moved = other.shifted(self._horizon)
        return ControlSchedule(self._segments + moved.segments, moved.horizon)

    def merged(self, other: "ControlSchedule") -> "ControlSchedule":
        return ControlSchedule(self._segments + other.segments, max(self._horizon, other.horizon))

    def to_csv(self, fh: IO[str], dt: float) -> None:
        """Write the sampled waveforms: a ``t`` column plus one column per channel."""
        n = int(math.floor(self._horizon / dt + 1e-9))
        t = np.arange(n + 1) * dt
        if t[-1] < self._horizon - 1e-12:
            t = np.append(t, self._horizon)
        cols = self.values(t)
        writer = csv.writer(fh)
        writer.writerow(["t", *cols])
        for i, ti in enumerate(t):
            writer.writerow([f"{ti:.10g}", *(f"{cols[c][i]:.12g}" for c in cols)])


# pulse factories ----------------------------------------------------------


def transfer_pulse(peak: float, t_prep: float, t_total: float, channel: str = "", start: float = 0.0) -> PulseSegment:
    """Ramp-hold-ramp pulse reaching ``peak`` exactly at ``t_prep``."""
    if t_prep <= 0:
        raise ValueError("t_prep must be positive")
    if t_total < 2 * t_prep:
        raise ValueError(f"t_total={t_total} shorter than 2*t_prep={2 * t_prep}")
    return PulseSegment(channel, start, start + t_total, float(peak), float(t_prep))


def coupling_pulse(n: int, m: int, g0: float = G0, channel: str = "", start: float = 0.0) -> PulseSegment:
    """sin^2 arch of duration ``n*pi/(m*g0)``; its area is ``n*pi/(2m)``."""
    if n < 1 or m < 1:
        raise ValueError("n and m must be positive integers")
    if g0 <= 0:
        raise ValueError("g0 must be positive")
    t = n * math.pi / (m * g0)
    return PulseSegment(channel, start, start + t, float(g0), t / 2)


def rotation_pulse(angle: float, g0: float = G0, channel: str = "", start: float = 0.0) -> PulseSegment:
    """sin^2 arch whose area equals the exchange rotation ``angle``."""
    if angle <= 0:
        raise ValueError("rotation angle must be positive")
    if g0 <= 0:
        raise ValueError("g0 must be positive")
    t = 2 * angle / g0
    return PulseSegment(channel, start, start + t, float(g0), t / 2)


def emission_pulse(fraction: float, g0: float = G0, channel: str = "", start: float = 0.0) -> PulseSegment:
    """Coupling arch moving ``fraction`` of the excitation probability across.

    For ``fraction`` 1 and 1/2 this is the pi and pi/2 pulse of
    :func:`coupling_pulse`.
    """
    if not 0 < fraction <= 1:
        raise ValueError("fraction must lie in (0, 1]")
    return rotation_pulse(math.asin(math.sqrt(fraction)), g0, channel, start)


def phase_shift_pulse(phi: float, eps0: float = 0.5, t_prep: float = 5.0, channel: str = "", start: float = 0.0) -> PulseSegment:
    """On-site pulse whose area is ``|phi|`` and whose sign is the sign of ``phi``.

    Short shifts (``|phi|/eps0 < t_prep``) shrink the ramp so the pulse is a
    pure arch of peak ``eps0``.
    """
    if eps0 <= 0:
        raise ValueError("eps0 must be positive")
    if not -math.pi <= phi < math.pi:
        raise ValueError("phi must lie in [-pi, pi)")
    if phi == 0:
        return PulseSegment(channel, start, start, 0.0, 0.0)
    flat = abs(phi) / eps0
    ramp = min(t_prep, flat)
    total = ramp + flat
    if total < 0:
        raise ValueError("negative pulse duration")
    return PulseSegment(channel, start, start + total, math.copysign(eps0, phi), ramp)


# transfer schedules -------------------------------------------------------


@dataclass(frozen=True)
class TransferTimings:
    t_prep: float
    t_tr: float
    t_bar: float = 15.0
    v_tr: float = 0.5
    v_interior: float | None = None
    v_bar: float = 30.0

    def heights(self, n_domains: int) -> list[float]:
        inner = self.v_tr if self.v_interior is None else self.v_interior
        if n_domains == 1:
            return [self.v_tr]
        return [self.v_tr] + [inner] * (n_domains - 2) + [self.v_tr]


@dataclass(frozen=True)
class TableRow:
    name: str
    n_d: int
    ell: int
    sites: int
    timings: TransferTimings


TRANSFER_TABLE = {
    "bell1": TableRow("Bell 1 dom.", 1, 12, 16, TransferTimings(t_prep=25, t_tr=304.0, t_bar=15, v_tr=0.5)),
    "bell4": TableRow("Bell 4 doms.", 4, 4, 15, TransferTimings(t_prep=20, t_tr=45.3, t_bar=15, v_tr=0.5, v_interior=0.38)),
    "wghz": TableRow("W, GHZ", 1, 4, 6, TransferTimings(t_prep=7, t_tr=25.2, t_bar=15, v_tr=0.5, v_bar=30)),
}


def table_row(n_d: int, ell: int) -> TableRow:
    for row in TRANSFER_TABLE.values():
        if (row.n_d, row.ell) == (n_d, ell):
            return row
    raise KeyError(f"no tabulated transfer for n_d={n_d}, ell={ell}")


def build_transfer_schedule(
    spec: LatticeSpec,
    from_boundary: int,
    to_boundary: int,
    heights: Sequence[float],
    timings: TransferTimings,
    start: float = 0.0,
) -> ControlSchedule:
    """Schedule moving a photon between two boundary cavities.

    Domains between the boundaries get transfer pulses, as do the extremal
    links of the two end cavities. Neighbouring domains outside the range are
    raised to ``v_bar`` before the transfer starts and lowered after it ends.
    """
    if from_boundary == to_boundary:
        raise ValueError("transfer endpoints must differ")
    lo, hi = sorted((from_boundary, to_boundary))
    spec.boundary_site(lo)
    spec.boundary_site(hi)
    n_d = hi - lo
    heights = [float(h) for h in heights]
    if len(heights) != n_d:
        raise ValueError(f"expected {n_d} heights, got {len(heights)}")
    if not np.allclose(heights, heights[::-1]):
        raise ValueError("heights must be symmetric about the transfer midpoint")
    barriers = [k for k in (lo, hi + 1) if 1 <= k <= spec.N]
    t0 = start + (timings.t_bar if barriers else 0.0)
    segs = []
    for k in barriers:
        segs.append(PulseSegment(f"v{k}", start, t0 + timings.t_tr + timings.t_bar, timings.v_bar, timings.t_bar))
    pulse = transfer_pulse(1.0, timings.t_prep, timings.t_tr)
    for i, k in enumerate(range(lo + 1, hi + 1)):
        segs.append(replace(pulse.on(f"v{k}", t0), peak=heights[i]))
    segs.append(replace(pulse.on(f"u{lo}", t0), peak=heights[0]))
    segs.append(replace(pulse.on(f"u{hi}", t0), peak=heights[-1]))
    horizon = t0 + timings.t_tr + (timings.t_bar if barriers else 0.0)
    return ControlSchedule(segs, horizon)


@dataclass(frozen=True)
class CalibrationResult:
    heights: tuple[float, ...]
    probability: float
    baseline_probability: float

    @property
    def improved(self) -> bool:
        return self.probability >= self.baseline_probability


def calibrate_interior_heights(
    spec: LatticeSpec,
    v_tr: float,
    timings: TransferTimings,
    step: float = 0.02,
    grid: int = 19,
    tol: float = 1e-4,
) -> CalibrationResult:
    """Symmetric interior heights maximizing end-to-end transfer at fixed duration.

    Each symmetric pair of interior domains is optimized in turn: a coarse
    grid over ``(0, w)`` brackets the best value and a golden-section search
    refines it. Sweeps repeat until the probability gains less than ``tol``.
    """
    from scipy.optimize import minimize_scalar

    from .dynamics import transfer_amplitude

    n_d = spec.N
    heights = [float(v_tr)] * n_d

    def prob(hs) -> float:
        sched = build_transfer_schedule(spec, 0, n_d, hs, timings)
        return abs(transfer_amplitude(spec, sched, 0, n_d, step=step)) ** 2

    baseline = prob(heights)
    if n_d <= 2:
        return CalibrationResult(tuple(heights), baseline, baseline)

    pairs = [(i, n_d - 1 - i) for i in range(1, n_d // 2 + n_d % 2) if i <= n_d - 1 - i]
    best = baseline
    xs = np.linspace(0.05, 0.95, grid) * spec.w
    while True:
        before = best
        for i, j in pairs:
            def f(x, i=i, j=j):
                hs = list(heights)
                hs[i] = hs[j] = float(x)
                return -prob(hs)

            vals = [f(x) for x in xs]
            m = int(np.argmin(vals))
            if 0 < m < len(xs) - 1:
                res = minimize_scalar(f, bracket=(xs[m - 1], xs[m], xs[m + 1]), method="golden",
                                      options={"xtol": 1e-5})
                x, val = float(res.x), float(res.fun)
                if val > vals[m]:
                    x, val = float(xs[m]), vals[m]
            else:
                x, val = float(xs[m]), vals[m]
            heights[i] = heights[j] = x
            best = -val
        if best - before < tol:
            break
    return CalibrationResult(tuple(heights), best, baseline)
