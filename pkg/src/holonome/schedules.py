"""Interpolation schedules, adiabatic metrics, and slowdown estimates.

Times are in units where the Hamiltonian norm is one. The dynamical gate
time ``T_D = pi/2`` sets the scale for slowdown ratios ``T_h / T_D``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from ._numerics import SIGMA, bloch_propagator

T_D = math.pi / 2
KINDS = ("linear", "trigonometric", "smooth_bump", "custom")
_ALIASES = {"trig": "trigonometric", "bump": "smooth_bump", "unitary": "trigonometric"}


class AccuracyError(RuntimeError):
    """Integration failed to converge to the requested tolerance."""


def adaptive_simpson(func: Callable[[float], float], a: float, b: float, tol: float = 1e-14,
                     max_depth: int = 60) -> float:
    """Adaptive Simpson quadrature with Richardson correction."""

    def simpson(fa, fm, fb, lo, hi):
        return (hi - lo) * (fa + 4 * fm + fb) / 6

    def recurse(lo, hi, fa, fm, fb, whole, eps, depth):
        mid = 0.5 * (lo + hi)
        lm, rm = 0.5 * (lo + mid), 0.5 * (mid + hi)
        flm, frm = func(lm), func(rm)
        left = simpson(fa, flm, fm, lo, mid)
        right = simpson(fm, frm, fb, mid, hi)
        if depth <= 0 or abs(left + right - whole) <= 15 * eps:
            return left + right + (left + right - whole) / 15
        return (recurse(lo, mid, fa, flm, fm, left, eps / 2, depth - 1)
                + recurse(mid, hi, fm, frm, fb, right, eps / 2, depth - 1))

    fa, fb, fm = func(a), func(b), func(0.5 * (a + b))
    return recurse(a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol, max_depth)


def bump_weight(x):
    """exp(-1/sin(pi x)) on [0, 1], with the endpoint limit 0."""
    x = np.asarray(x, dtype=float)
    s = np.sin(np.pi * np.clip(x, 0.0, 1.0))
    with np.errstate(divide="ignore", over="ignore"):
        out = np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)
    return out


def _bump_weight_scalar(x: float) -> float:
    s = math.sin(math.pi * x)
    return math.exp(-1.0 / s) if s > 0 else 0.0


@lru_cache(maxsize=1)
def bump_normalization() -> float:
    """a = integral of exp(-1/sin(pi x)) over [0, 1]."""
    return adaptive_simpson(_bump_weight_scalar, 0.0, 1.0, tol=1e-15)


_GL_X, _GL_W = np.polynomial.legendre.leggauss(12)


@lru_cache(maxsize=1)
def _bump_table(cells: int = 512):
    edges = np.linspace(0.0, 1.0, cells + 1)
    half = 0.5 / cells
    mids = 0.5 * (edges[:-1] + edges[1:])
    pts = mids[:, None] + half * _GL_X[None, :]
    cell_int = half * (bump_weight(pts) @ _GL_W)
    cumulative = np.concatenate([[0.0], np.cumsum(cell_int)])
    return edges, cumulative


def bump_progress(x) -> np.ndarray:
    """u(x) = (1/a) * integral_0^x exp(-1/sin(pi y)) dy, so that tau = T u(t/T)."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    edges, cumulative = _bump_table()
    cells = len(edges) - 1
    idx = np.minimum((x * cells).astype(int), cells - 1)
    left = edges[idx]
    half = 0.5 * (x - left)
    pts = (left + half)[..., None] + half[..., None] * _GL_X
    partial = half * (bump_weight(pts) @ _GL_W)
    return (cumulative[idx] + partial) / cumulative[-1]


@dataclass(frozen=True)
class Schedule:
    """Interpolation pair (f, g) on [0, T].

    ``custom`` holds a callable ``s -> (f, g, df/ds, dg/ds)`` on s = t/T when
    ``kind`` is "custom".
    """

    kind: str
    T: float = 1.0
    custom: Callable | None = None

    def __post_init__(self):
        kind = _ALIASES.get(self.kind, self.kind)
        if kind not in KINDS:
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.T <= 0:
            raise ValueError("T must be positive")
        if kind == "custom" and self.custom is None:
            raise ValueError("custom schedule needs a callable")
        object.__setattr__(self, "kind", kind)

    def with_T(self, T: float) -> "Schedule":
        return Schedule(self.kind, T, self.custom)

    def tau(self, t):
        """Reparametrized time; identity except for the bump schedule."""
        t = np.asarray(t, dtype=float)
        if self.kind == "smooth_bump":
            return self.T * bump_progress(t / self.T)
        return t

    def dtau(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "smooth_bump":
            return bump_weight(t / self.T) / bump_normalization()
        return np.ones_like(t)

    def fg(self, t):
        """(f, g, df/dt, dg/dt) as arrays."""
        t = np.asarray(t, dtype=float)
        s = t / self.T
        if self.kind == "linear":
            one = np.ones_like(s)
            return 1 - s, s, -one / self.T, one / self.T
        if self.kind == "custom":
            f, g, df, dg = self.custom(s)
            return f, g, np.asarray(df) / self.T, np.asarray(dg) / self.T
        phi = 0.5 * np.pi * self.tau(t) / self.T
        dphi = 0.5 * np.pi * self.dtau(t) / self.T
        return np.cos(phi), np.sin(phi), -np.sin(phi) * dphi, np.cos(phi) * dphi


def evaluate(schedule: Schedule, t):
    """(f, g) at time t, with 0 <= t <= T."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < -1e-12) or np.any(t_arr > schedule.T * (1 + 1e-12)):
        raise ValueError(f"t outside [0, {schedule.T}]")
    f, g, _, _ = schedule.fg(np.clip(t_arr, 0.0, schedule.T))
    return f, g


@dataclass(frozen=True)
class AdiabaticMetrics:
    eps_max: float
    gap_min: float
    ratio: float
    delta: float


def _theta_axis(theta: float, sign: int = 1) -> np.ndarray:
    return sign * np.array([math.cos(theta), math.sin(theta), 0.0])


def adiabatic_metrics(schedule: Schedule, theta: float, sign: int = 1, grid: int = 2001,
                      steps: int = 4096) -> AdiabaticMetrics:
    """Gap, transition element, and leakage for f Z + g H^{theta, sign}."""
    axis = _theta_axis(theta, sign)
    z = np.array([0.0, 0.0, 1.0])
    t = np.linspace(0.0, schedule.T, grid)
    f, g, df, dg = schedule.fg(t)
    field = f[:, None] * z + g[:, None] * axis
    dfield = df[:, None] * z + dg[:, None] * axis
    h = np.einsum("ta,aij->tij", field, SIGMA)
    dh = np.einsum("ta,aij->tij", dfield, SIGMA)
    w, v = np.linalg.eigh(h)
    gap = w[:, 1] - w[:, 0]
    elem = np.abs(np.einsum("ti,tij,tj->t", np.conj(v[:, :, 1]), dh, v[:, :, 0]))
    # refine around the gap minimum
    k = int(np.argmin(gap))
    lo, hi = t[max(k - 1, 0)], t[min(k + 1, grid - 1)]
    tf = np.linspace(lo, hi, 201)
    ff, gf, _, _ = schedule.fg(tf)
    fine_gap = 2 * np.linalg.norm(ff[:, None] * z + gf[:, None] * axis, axis=1)
    gap_min = float(min(gap.min(), fine_gap.min()))
    eps_max = float(elem.max())

    def fld(ts):
        a, b, _, _ = schedule.fg(ts)
        return a[:, None] * z + b[:, None] * axis

    u = bloch_propagator(fld, 0.0, schedule.T, steps, order=4)
    # the state starts in the excited (+) eigenvector of Z, |0>, and should end on the + eigenvector
    plus_end = v[-1][:, 1]
    delta = float(1 - abs(np.vdot(plus_end, u[:, 0])) ** 2)
    return AdiabaticMetrics(eps_max, gap_min, eps_max / gap_min ** 2, max(delta, 0.0))


# slowdown experiment ----------------------------------------------------------

def diabatic_error_linear_tau(ratio_eps: float) -> tuple[float, float]:
    """Closed-form leakage for H = cos(pi t/T_h) Z + sin(pi t/T_h) Y, eps = T_D/T_h.

    Returns ``(delta, delta_avg)`` where ``delta_avg = eps^2/2`` is the
    cosine-averaged estimate. The oscillating factor has argument
    ``pi sqrt(1+eps^2) / (2 eps)``, the Rabi phase accumulated in the frame
    co-rotating with the field.
    """
    e2 = ratio_eps * ratio_eps
    phase = math.pi * math.sqrt(1 + e2) / (2 * ratio_eps)
    return e2 / (1 + e2) * math.sin(phase) ** 2, e2 / 2


def diabatic_error_linear_tau_as_printed(ratio_eps: float) -> float:
    """The same closed form with the argument ``pi sqrt(1+eps^2) / (4 eps)``; kept for comparison."""
    e2 = ratio_eps * ratio_eps
    p = 1 / (1 + e2) + e2 / (1 + e2) * math.cos(math.pi * math.sqrt(1 + e2) / (4 * ratio_eps)) ** 2
    return 1 - p


def slowdown_for_average(delta: float) -> float:
    """T_h/T_D at which the averaged estimate eps^2/2 equals ``delta``."""
    return 1 / math.sqrt(2 * delta)


def rotation_path(kind: str, T_h: float) -> Callable[[np.ndarray], np.ndarray]:
    """Bloch field of the flip Z -> -Z through Y, H = V_X(tau) Z V_X(tau)^dag, over time T_h.

    Kinds:

    * "linear": tau(t) = t, constant angular speed.
    * "trigonometric": two halves Z -> Y -> -Z, each with the cos/sin
      interpolation. This is the same curve at the same speed as "linear" and
      serves as a consistency check.
    * "smooth_bump": tau from the bump reparametrization over the whole flip.
    * "linear_fg": two halves with linear (f, g); the kink at Y limits the
      leakage to an O(1/T^2) floor.
    """
    kind = _ALIASES.get(kind, kind)
    if kind == "linear_fg":
        half = T_h / 2

        def field(t):
            s = np.clip(t / half, 0.0, 2.0)
            first = s <= 1
            f = np.where(first, 1 - s, -(s - 1))
            g = np.where(first, s, 2 - s)
            return np.stack([np.zeros_like(s), g, f], axis=1)

        return field
    if kind == "trigonometric":
        half = Schedule("trigonometric", T_h / 2)

        def field(t):
            t = np.asarray(t, dtype=float)
            first = t <= T_h / 2
            f1, g1, _, _ = half.fg(np.where(first, t, 0.0))
            f2, g2, _, _ = half.fg(np.where(first, 0.0, t - T_h / 2))
            y = np.where(first, g1, f2)
            z = np.where(first, f1, -g2)
            return np.stack([np.zeros_like(y), y, z], axis=1)

        return field
    if kind not in ("linear", "smooth_bump"):
        raise ValueError(f"no rotation path for schedule {kind!r}")
    sched = Schedule("smooth_bump", T_h) if kind == "smooth_bump" else None

    def field(t):
        tau = sched.tau(t) if sched is not None else np.asarray(t, dtype=float)
        phi = np.pi * tau / T_h
        return np.stack([np.zeros_like(phi), np.sin(phi), np.cos(phi)], axis=1)

    return field


def path_metrics(kind: str, T_over_Td: float, grid: int = 4001) -> AdiabaticMetrics:
    """Gap, largest transition element, and leakage along the flip path."""
    T_h = T_over_Td * T_D
    field = rotation_path(kind, T_h)
    t = np.linspace(0.0, T_h, grid)
    n = field(t)
    h = np.einsum("ta,aij->tij", n, SIGMA)
    w, v = np.linalg.eigh(h)
    # derivative by centered differences on a fine grid
    dt = 1e-6 * T_h
    dn = (field(np.clip(t + dt, 0, T_h)) - field(np.clip(t - dt, 0, T_h))) / (
        np.clip(t + dt, 0, T_h) - np.clip(t - dt, 0, T_h))[:, None]
    dh = np.einsum("ta,aij->tij", dn, SIGMA)
    elem = np.abs(np.einsum("ti,tij,tj->t", np.conj(v[:, :, 1]), dh, v[:, :, 0]))
    gap_min = float((w[:, 1] - w[:, 0]).min())
    eps_max = float(elem.max())
    return AdiabaticMetrics(eps_max, gap_min, eps_max / gap_min ** 2, diabatic_error_numeric(kind, T_over_Td))


def diabatic_error_numeric(schedule, T_over_Td: float, rtol: float = 1e-6, atol: float = 1e-16,
                           min_steps: int = 4096, max_steps: int = 1 << 22) -> float:
    """Leakage 1 - |<1|psi(T_h)>|^2 after the flip path from |0>.

    Step count doubles (fourth-order Magnus steps) until successive results
    agree within ``max(atol, rtol * delta)``.
    """
    kind = schedule.kind if isinstance(schedule, Schedule) else schedule
    T_h = T_over_Td * T_D
    field = rotation_path(kind, T_h)
    steps = max(min_steps, 1 << int(math.ceil(math.log2(8 * T_h + 1))))
    prev = None
    while steps <= max_steps:
        u = bloch_propagator(field, 0.0, T_h, steps, order=4)
        delta = float(abs(u[0, 0]) ** 2)
        if prev is not None and abs(delta - prev) <= max(atol, rtol * delta):
            return delta
        prev = delta
        steps *= 2
    raise AccuracyError(f"no convergence for {kind} at T/T_D={T_over_Td}: last delta {prev}")


def windowed_delta(schedule, T_over_Td: float, width: float = 2.0, points: int = 41) -> float:
    """Mean leakage over ratios in [R - width/2, R + width/2].

    For the constant-speed flip the leakage oscillates in R with period 2, so
    the default window averages one full oscillation.
    """
    rs = np.linspace(T_over_Td - width / 2, T_over_Td + width / 2, points)
    vals = [diabatic_error_numeric(schedule, r) for r in rs]
    return float(np.trapezoid(vals, rs) / (rs[-1] - rs[0]))


def slowdown_for_delta(schedule, target: float, lo: float = 10.0, hi: float = 300.0, tol: float = 0.05) -> float:
    """Ratio where the window-averaged leakage crosses ``target`` (bisection on log scale)."""
    f = lambda r: math.log(windowed_delta(schedule, r, points=21)) - math.log(target)
    flo, fhi = f(lo), f(hi)
    if flo * fhi > 0:
        raise AccuracyError("target leakage not bracketed")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm * flo > 0:
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)
