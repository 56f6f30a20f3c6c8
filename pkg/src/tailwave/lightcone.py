"""Quadrature over the backward light cone and the conversion-lemma exponent table.

For a radial source bounded by h(s, rho) = <rho>^-alpha <s+rho>^-beta <s-rho>^-eta,
the solution of the flat wave equation with zero data obeys

    r psi(t, r) <= (1/2) int_{D_tr} rho h(s, rho) ds drho,
    D_tr = {rho, s >= 0 : s - rho <= t - r,  t - r <= s + rho <= t + r}.

The integral is evaluated in (rho, a = s - rho), a unit-Jacobian change of
variables in which D_tr becomes a <= u, u - 2 rho <= a <= t + r - 2 rho,
a >= -rho.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import AmbiguousEtaError, DomainError, ResolutionError

__all__ = [
    "ConeWeight",
    "ConeIntegral",
    "ConeFit",
    "eta_tilde",
    "predicted_exponents",
    "predicted_exponents_dt",
    "cone_quadrature",
    "cone_batch",
    "write_cone_csv",
    "fit_cone_exponents",
    "MIN_CELLS",
    "REFINE_RTOL",
    "SUPPORT_DEFAULT",
]

MIN_CELLS = 256 * 256
MAX_CELLS = 4096 * 4096
REFINE_RTOL = 0.005
# sources vanish for s - rho < -c: compactly supported data plus finite speed
SUPPORT_DEFAULT = 1.0


@dataclass(frozen=True)
class ConeWeight:
    alpha: float
    beta: float
    eta: float

    def __post_init__(self):
        if not 2.0 < self.alpha < 3.0:
            raise DomainError(f"need 2 < alpha < 3, got {self.alpha}")
        if not self.beta >= 0.0:
            raise DomainError(f"need beta >= 0, got {self.beta}")
        if not self.eta >= -0.5:
            raise DomainError(f"need eta >= -1/2, got {self.eta}")
        if self.eta == 1.0:
            raise AmbiguousEtaError("eta = 1 lies between the two branches of eta~")

    def __call__(self, s, rho):
        s = np.asarray(s, dtype=float)
        rho = np.asarray(rho, dtype=float)
        return _jb(rho) ** -self.alpha * _jb(s + rho) ** -self.beta * _jb(s - rho) ** -self.eta


@dataclass
class ConeIntegral:
    t: float
    r: float
    value: float
    cells: int
    rel_change: float = 0.0

    def __post_init__(self):
        if self.value < 0:
            raise ValueError("cone integrals of positive weights are non-negative")


@dataclass
class ConeFit:
    weight: ConeWeight
    p_u: float
    p_r: float
    residual_u: float
    residual_r: float
    predicted: tuple
    path: dict

    def to_dict(self) -> dict:
        d = asdict(self)
        d["predicted"] = list(self.predicted)
        return d


def _jb(x):
    return np.sqrt(1.0 + np.square(x))


def eta_tilde(eta: float) -> float:
    """eta - 2 below 1, -1 above 1; undefined at 1."""
    if eta == 1:
        raise AmbiguousEtaError("eta~ is not defined at eta = 1; perturb eta first")
    return eta - 2 if eta < 1 else -1


def predicted_exponents(w: ConeWeight):
    """(p_r, p_u) = (1, alpha + beta + eta~ - 1)."""
    return 1, w.alpha + w.beta + eta_tilde(w.eta) - 1


def predicted_exponents_dt(alpha: float, eta: float):
    """(p_r, p_u) = (1, alpha + eta~) for a d_t-source supported near the cone.

    Requires alpha + eta > 3. At beta = 0 this is one power of <u> better
    than :func:`predicted_exponents`.
    """
    if not alpha + eta > 3:
        raise DomainError(f"the d_t-source table needs alpha + eta > 3, got {alpha + eta}")
    return 1, alpha + eta_tilde(eta)


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------

def _a_limits(rho, t, r, c):
    u = t - r
    lo = np.maximum.reduce([-rho, u - 2.0 * rho, np.full_like(rho, -c)])
    hi = np.minimum(np.full_like(rho, u), t + r - 2.0 * rho)
    return lo, hi


def _sinh_nodes(lo, hi, n):
    """Midpoint nodes and weights of a uniform rule in asinh(x) on [lo, hi] (vectorized over rows)."""
    zl, zh = np.arcsinh(lo), np.arcsinh(hi)
    k = (np.arange(n) + 0.5) / n
    z = zl[..., None] + (zh - zl)[..., None] * k
    x = np.sinh(z)
    wts = np.cosh(z) * ((zh - zl) / n)[..., None]
    return x, wts


def _cone_sum(w: ConeWeight, t, r, c, n):
    u = t - r
    rho_max = 0.5 * (t + r + c)
    cuts = sorted({0.0, rho_max} | {b for b in (c, u, 0.5 * (u + c), r) if 0.0 < b < rho_max})
    total = 0.0
    for p0, p1 in zip(cuts[:-1], cuts[1:]):
        rho, w_rho = _sinh_nodes(np.array(p0), np.array(p1), n)
        lo, hi = _a_limits(rho, t, r, c)
        ok = hi > lo
        if not ok.any():
            continue
        rho, w_rho, lo, hi = rho[ok], w_rho[ok], lo[ok], hi[ok]
        a, w_a = _sinh_nodes(lo, hi, n)
        R = rho[:, None]
        f = R * _jb(R) ** -w.alpha * _jb(a + 2.0 * R) ** -w.beta * _jb(a) ** -w.eta
        total += float(np.sum(w_rho * np.sum(f * w_a, axis=1)))
    return total


def cone_quadrature(w: ConeWeight, t: float, r: float, cells: int = MIN_CELLS,
                    support: float = SUPPORT_DEFAULT, max_cells: int = MAX_CELLS) -> ConeIntegral:
    """(4 pi r)^-1 times the integral of rho h over D_tr, restricted to s - rho >= -support.

    Midpoint rule in asinh-stretched (rho, s - rho) on panels split at the
    kinks of the domain boundary. ``cells`` is the per-panel budget; it is
    quadrupled until successive values agree to 0.5%.
    """
    if not (t > r >= 1.0):
        raise DomainError(f"need t > r >= 1, got t={t}, r={r}")
    if cells < MIN_CELLS:
        raise ResolutionError(f"cells must be at least {MIN_CELLS}")
    if support < 0:
        raise DomainError("support must be >= 0")
    n = int(math.isqrt(cells))
    prev = _cone_sum(w, t, r, support, n)
    while (2 * n) ** 2 <= max_cells:
        n *= 2
        cur = _cone_sum(w, t, r, support, n)
        change = abs(cur - prev) / cur if cur > 0 else 0.0
        if change < REFINE_RTOL:
            return ConeIntegral(t=float(t), r=float(r), value=cur / (4.0 * math.pi * r), cells=n * n,
                                rel_change=change)
        prev = cur
    raise ResolutionError(f"cone quadrature at (t={t}, r={r}) not refinement-stable within budget")


def cone_batch(weights, apexes, **kw):
    """Rows (alpha, beta, eta, t, r, value) over every weight and apex."""
    rows = []
    for w in weights:
        for t, r in apexes:
            q = cone_quadrature(w, t, r, **kw)
            rows.append((w.alpha, w.beta, w.eta, q.t, q.r, q.value))
    return rows


def write_cone_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["alpha", "beta", "eta", "t", "r", "value"])
        for row in rows:
            wr.writerow([repr(float(x)) for x in row])


def _slope(x, y):
    A = np.vstack([np.log(x), np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, np.log(y), rcond=None)
    resid = np.log(y) - A @ coef
    return float(coef[0]), float(np.max(np.abs(resid)))


def fit_cone_exponents(w: ConeWeight, u_range=(1e3, 1e5), r_fixed: float = 1e9,
                       r_range=(32.0, 512.0), u_fixed: float = 2.0, n: int = 9,
                       **kw) -> ConeFit:
    """Log-log slopes of <r> I against <u> at fixed r, and of I against <r> at fixed u.

    Returned as decay exponents (negated slopes). The fixed radius sits in
    the wave zone u << r, where the lemma's rate is attained. The u window
    starts at 10^3: for eta < 1 the leading <u>^{-eta~} growth carries a
    correction one half power lower, which biases slopes taken at u ~ 10^2.
    """
    us = np.geomspace(*u_range, n)
    vals_u = np.array([cone_quadrature(w, r_fixed + u, r_fixed, **kw).value for u in us])
    su, ru = _slope(_jb(us), _jb(r_fixed) * vals_u)
    rs = np.geomspace(*r_range, n)
    vals_r = np.array([cone_quadrature(w, r + u_fixed, r, **kw).value for r in rs])
    sr, rr = _slope(_jb(rs), vals_r)
    return ConeFit(weight=w, p_u=-su, p_r=-sr, residual_u=ru, residual_r=rr,
                   predicted=predicted_exponents(w),
                   path={"u_range": list(u_range), "r_fixed": r_fixed, "r_range": list(r_range),
                         "u_fixed": u_fixed, "n": n})
