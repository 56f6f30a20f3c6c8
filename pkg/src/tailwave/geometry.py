"""Schwarzschild and Kerr background geometry.

Geometric units throughout (G = c = 1). Radii are areal radii unless a name
says otherwise; ``rstar`` is the Regge-Wheeler tortoise coordinate

    r* = r + 2M log(r - 2M) - 3M - 2M log M,

which vanishes at the photon sphere r = 3M.

Close to the horizon ``r - 2M`` is far below the spacing of doubles near 2M,
so the inverse map keeps the horizon gap ``r - 2M`` alongside ``r`` (see
:class:`Radius`). Everything downstream that needs ``1 - 2M/r`` reads the gap
instead of subtracting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConvergenceError, DegenerateError, DomainError, NoHorizonError

__all__ = [
    "MetricParams",
    "CoordinateMap",
    "Radius",
    "NullFrame",
    "FrameComponents",
    "KerrTables",
    "tortoise",
    "tortoise_array",
    "areal_from_tortoise",
    "areal_from_tortoise_array",
    "normalized_radius",
    "kerr_horizons",
    "kerr_delta",
    "kerr_metric_components",
    "schwarzschild_cartesian_metric",
    "null_frame_at",
    "frame_decompose",
]

NEWTON_MAX_ITER = 100


@dataclass(frozen=True)
class MetricParams:
    M: float = 1.0
    a: float = 0.0

    def __post_init__(self):
        if not (self.M > 0):
            raise DomainError(f"mass must be positive, got M={self.M}")
        if self.a < 0:
            raise DomainError(f"spin must be non-negative, got a={self.a}")

    @property
    def is_schwarzschild(self) -> bool:
        return self.a == 0.0


@dataclass(frozen=True)
class CoordinateMap:
    """Tortoise / normalized radial coordinates for a Schwarzschild background.

    ``R1`` is where the normalized radius starts blending from ``r`` into
    ``r*``; the blend is complete at ``2 R1``. Defaults to 50 M.
    """

    params: MetricParams = field(default_factory=MetricParams)
    R1: Optional[float] = None

    def __post_init__(self):
        if self.R1 is None:
            object.__setattr__(self, "R1", 50.0 * self.params.M)
        if self.R1 <= 6.0 * self.params.M:
            raise DomainError(f"R1={self.R1} must exceed 6M")

    @property
    def M(self) -> float:
        return self.params.M


class Radius(float):
    """A float areal radius that also remembers its horizon gap ``r - 2M``.

    Returned by :func:`areal_from_tortoise`; :func:`tortoise` uses the stored
    gap so that the round trip stays accurate right down to r* ~ -60M.
    """

    gap: float

    def __new__(cls, value, gap):
        obj = super().__new__(cls, value)
        obj.gap = float(gap)
        return obj

    def __repr__(self):
        return f"Radius({float(self)!r}, gap={self.gap!r})"


def _require_schwarzschild(params: MetricParams):
    if not params.is_schwarzschild:
        raise DomainError("tortoise coordinates are only implemented for a = 0")


def _gap_of(r, M):
    gap = getattr(r, "gap", None)
    return float(r) - 2.0 * M if gap is None else gap


def tortoise(cmap: CoordinateMap, r) -> float:
    """Tortoise coordinate r*(r) for r > 2M."""
    _require_schwarzschild(cmap.params)
    M = cmap.M
    gap = _gap_of(r, M)
    if not gap > 0:
        raise DomainError(f"tortoise needs r > 2M, got r={float(r)}")
    return (2.0 * M + gap) + 2.0 * M * math.log(gap) - 3.0 * M - 2.0 * M * math.log(M)


def tortoise_array(cmap: CoordinateMap, r, gap=None) -> np.ndarray:
    """Vectorized :func:`tortoise`; pass ``gap`` to bypass ``r - 2M``."""
    _require_schwarzschild(cmap.params)
    M = cmap.M
    g = np.asarray(r, dtype=float) - 2.0 * M if gap is None else np.asarray(gap, dtype=float)
    if np.any(~(g > 0)):
        raise DomainError("tortoise needs r > 2M everywhere")
    return (2.0 * M + g) + 2.0 * M * np.log(g) - 3.0 * M - 2.0 * M * math.log(M)


# The inverse map is solved for y = log(r - 2M). In that variable
#   F(y) = 2M + e^y + 2M y - 3M - 2M log M - r*
# is increasing and convex, so Newton started from any y with F(y) >= 0
# decreases monotonically onto the root and never leaves the domain.

def _newton_start(rstar, M):
    c = -M - 2.0 * M * math.log(M)  # F(y) = e^y + 2M y + c - r*
    y_lin = (rstar - c) / (2.0 * M)  # F(y_lin) = e^{y_lin} > 0 always
    if rstar > M:
        y_log = math.log(rstar)
        if math.exp(y_log) + 2.0 * M * y_log + c - rstar >= 0:
            return min(y_log, y_lin)
    return y_lin


def _solve_gap(rstar, M):
    c = -M - 2.0 * M * math.log(M)
    y = _newton_start(rstar, M)
    for _ in range(NEWTON_MAX_ITER):
        ey = math.exp(y)
        F = ey + 2.0 * M * y + c - rstar
        step = F / (ey + 2.0 * M)
        y -= step
        if abs(step) <= 4e-16 * max(1.0, abs(y)):
            return math.exp(y)
    raise ConvergenceError(f"inverse tortoise map did not converge at r*={rstar}")


def areal_from_tortoise(cmap: CoordinateMap, rstar: float) -> Radius:
    """Areal radius r with r*(r) = rstar, carrying its horizon gap."""
    _require_schwarzschild(cmap.params)
    M = cmap.M
    gap = _solve_gap(float(rstar), M)
    return Radius(2.0 * M + gap, gap)


def areal_from_tortoise_array(cmap: CoordinateMap, rstar) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized inverse: returns ``(r, r - 2M)`` arrays."""
    _require_schwarzschild(cmap.params)
    M = cmap.M
    rs = np.atleast_1d(np.asarray(rstar, dtype=float))
    c = -M - 2.0 * M * math.log(M)
    y = (rs - c) / (2.0 * M)
    with np.errstate(divide="ignore", invalid="ignore"):
        y_log = np.log(np.where(rs > M, rs, 1.0))
        ok = (rs > M) & (np.exp(y_log) + 2.0 * M * y_log + c - rs >= 0)
    y = np.where(ok, np.minimum(y_log, y), y)
    for _ in range(NEWTON_MAX_ITER):
        ey = np.exp(y)
        step = (ey + 2.0 * M * y + c - rs) / (ey + 2.0 * M)
        y = y - step
        if np.all(np.abs(step) <= 4e-16 * np.maximum(1.0, np.abs(y))):
            gap = np.exp(y)
            return 2.0 * M + gap, gap
    raise ConvergenceError("inverse tortoise map did not converge")


def _smoothstep5(s):
    s = np.clip(s, 0.0, 1.0)
    return s * s * s * (s * (6.0 * s - 15.0) + 10.0)


def normalized_radius(cmap: CoordinateMap, r):
    """Normalized radius: r below R1, r* above 2 R1, quintic blend between."""
    scalar = np.ndim(r) == 0
    rr = np.atleast_1d(np.asarray(r, dtype=float))
    if np.any(~(rr > 2.0 * cmap.M)):
        raise DomainError("normalized_radius needs r > 2M")
    w = _smoothstep5((rr - cmap.R1) / cmap.R1)
    out = rr.copy()
    blend = w > 0
    if np.any(blend):
        rs = tortoise_array(cmap, rr[blend])
        out[blend] = (1.0 - w[blend]) * rr[blend] + w[blend] * rs
    return float(out[0]) if scalar else out


# ---------------------------------------------------------------------------
# Kerr
# ---------------------------------------------------------------------------

def kerr_delta(params: MetricParams, r):
    return r * (r - 2.0 * params.M) + params.a ** 2


def kerr_horizons(params: MetricParams) -> tuple[float, float]:
    """Cauchy and event horizon radii ``(r-, r+)`` for 0 <= a < M."""
    M, a = params.M, params.a
    if a >= M:
        raise NoHorizonError(f"a={a} >= M={M}: no subextremal horizons")
    root = math.sqrt((M - a) * (M + a))
    r_plus = M + root
    # r- from the product of roots (r+ r- = a^2) avoids cancellation
    r_minus = a * a / r_plus
    return r_minus, r_plus


@dataclass(frozen=True)
class KerrTables:
    """Boyer-Lindquist metric tables, index order (t, r, theta, phi).

    ``g_cov`` is the symmetric covariant matrix. ``line_element`` lists the
    coefficients as they appear in ds^2, where the cross term is written once
    as ``coeff * dt dphi`` and therefore equals ``2 * g_cov[0, 3]``.
    """

    g_cov: np.ndarray
    g_inv: np.ndarray
    line_element: dict

    def to_dict(self) -> dict:
        return {"g_cov": self.g_cov.tolist(), "g_inv": self.g_inv.tolist(),
                "line_element": dict(self.line_element)}


def kerr_metric_components(params: MetricParams, r: float, theta: float) -> KerrTables:
    M, a = params.M, params.a
    delta = kerr_delta(params, r)
    sin2 = math.sin(theta) ** 2
    rho2 = r * r + (a * math.cos(theta)) ** 2
    if delta == 0.0 or abs(delta) < 1e-14 * max(1.0, r * r):
        raise DegenerateError(f"Delta(r)=0 at r={r}")
    if sin2 < 1e-300:
        raise DegenerateError("coordinate axis: sin(theta) = 0")

    A = (r * r + a * a) ** 2 - a * a * delta * sin2
    g = np.zeros((4, 4))
    g[0, 0] = -(delta - a * a * sin2) / rho2
    g[0, 3] = g[3, 0] = -2.0 * M * a * r * sin2 / rho2
    g[1, 1] = rho2 / delta
    g[2, 2] = rho2
    g[3, 3] = A * sin2 / rho2

    gi = np.zeros((4, 4))
    gi[0, 0] = -A / (rho2 * delta)
    gi[0, 3] = gi[3, 0] = -2.0 * M * a * r / (rho2 * delta)
    gi[1, 1] = delta / rho2
    gi[2, 2] = 1.0 / rho2
    gi[3, 3] = (delta - a * a * sin2) / (rho2 * delta * sin2)

    line = {"tt": g[0, 0], "tphi": 2.0 * g[0, 3], "rr": g[1, 1],
            "thth": g[2, 2], "phiphi": g[3, 3]}
    return KerrTables(g_cov=g, g_inv=gi, line_element=line)


# ---------------------------------------------------------------------------
# Null frame (Schwarzschild, Cartesian-like coordinates x = r omega)
# ---------------------------------------------------------------------------

def _unit(omega):
    w = np.asarray(omega, dtype=float)
    n = np.linalg.norm(w)
    if not n > 0:
        raise DomainError("direction omega must be non-zero")
    return w / n


def schwarzschild_cartesian_metric(params: MetricParams, r: float, omega) -> np.ndarray:
    """g_B at the point r*omega in (t, x1, x2, x3) with areal |x| = r."""
    _require_schwarzschild(params)
    if not r > 2.0 * params.M:
        raise DomainError(f"need r > 2M, got r={r}")
    w = _unit(omega)
    f = 1.0 - 2.0 * params.M / r
    g = np.zeros((4, 4))
    g[0, 0] = -f
    g[1:, 1:] = np.eye(3) + (1.0 / f - 1.0) * np.outer(w, w)
    return g


@dataclass(frozen=True)
class NullFrame:
    L: np.ndarray
    Lbar: np.ndarray
    A: np.ndarray
    Astar: np.ndarray
    r: float
    omega: np.ndarray

    def basis(self) -> np.ndarray:
        """Columns ordered (Lbar, L, A, Astar)."""
        return np.column_stack([self.Lbar, self.L, self.A, self.Astar])

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("L", "Lbar", "A", "Astar")}


def null_frame_at(params: MetricParams, r: float, omega) -> NullFrame:
    _require_schwarzschild(params)
    if not r > 2.0 * params.M:
        raise DomainError(f"null frame needs r > 2M, got r={r}")
    w = _unit(omega)
    f = 1.0 - 2.0 * params.M / r
    drs = np.concatenate([[0.0], f * w])  # d/dr* = (1 - 2M/r) omega^i d_i
    dt = np.array([1.0, 0.0, 0.0, 0.0])

    # tangent pair: Gram-Schmidt on the axis least aligned with omega
    k = int(np.argmin(np.abs(w)))
    e = np.zeros(3)
    e[k] = 1.0
    a = e - np.dot(e, w) * w
    a /= np.linalg.norm(a)
    astar = np.cross(w, a)
    return NullFrame(L=dt + drs, Lbar=dt - drs,
                     A=np.concatenate([[0.0], a]), Astar=np.concatenate([[0.0], astar]),
                     r=float(r), omega=w)


TANGENTIAL = ("L", "A", "Astar")


@dataclass(frozen=True)
class FrameComponents:
    """Coefficients of a symmetric (2,0)-tensor in the null frame.

    h = hLbarLbar Lbar Lbar + sum_T hLbarT (Lbar T + T Lbar) + sum_{U,T} hUT U T
    with T, U ranging over (L, A, Astar).
    """

    LbarLbar: float
    LbarT: dict
    UT: dict
    frame: NullFrame

    def reassemble(self) -> np.ndarray:
        fr = self.frame
        lb = fr.Lbar
        h = self.LbarLbar * np.outer(lb, lb)
        for name, c in self.LbarT.items():
            T = getattr(fr, name)
            h = h + c * (np.outer(lb, T) + np.outer(T, lb))
        for (u, t), c in self.UT.items():
            h = h + c * np.outer(getattr(fr, u), getattr(fr, t))
        return h


def frame_decompose(params: MetricParams, h, r: float, omega) -> FrameComponents:
    """Expand the contravariant symmetric tensor ``h`` in the null frame at (r, omega)."""
    fr = null_frame_at(params, r, omega)
    H = np.asarray(h, dtype=float)
    if H.shape != (4, 4):
        raise DomainError("h must be a 4x4 array")
    E = fr.basis()
    Einv = np.linalg.inv(E)
    C = Einv @ (0.5 * (H + H.T)) @ Einv.T
    names = ("Lbar",) + TANGENTIAL
    LbarT = {names[j]: C[0, j] for j in range(1, 4)}
    UT = {(names[i], names[j]): C[i, j] for i in range(1, 4) for j in range(1, 4)}
    return FrameComponents(LbarLbar=C[0, 0], LbarT=LbarT, UT=UT, frame=fr)
