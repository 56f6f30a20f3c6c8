"""Decay-rate extraction and pointwise diagnostics on evolved fields.

Grid fields live on the unhalved null lattice (u = t - r*, v = t + r*).
Quantities quoted in the halved convention u_p = (t - r)/2, v_p = (t + r)/2
are converted where they are used. In the far region, where these
diagnostics are evaluated, the radial variable is r*.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.integrate import trapezoid

from .coefficients import japanese
from .errors import CoverageError, FloorError, RegionError, WindowError
from .evolution import NullGrid, ObserverSeries
from .geometry import CoordinateMap, areal_from_tortoise, areal_from_tortoise_array

__all__ = [
    "DecayFit",
    "RegionNorm",
    "BoundReport",
    "SecondDerivativeReport",
    "HardyReport",
    "LEReport",
    "local_power_index",
    "local_index_fit",
    "fit_power_law",
    "self_convergence",
    "bound_verification",
    "second_derivative_bound_check",
    "hardy_check",
    "hardy_slice",
    "le_norms",
    "region_norm",
    "DEFAULT_FLOOR_FACTOR",
    "HALF_DECADE",
]

DEFAULT_FLOOR_FACTOR = 1e-13  # absolute floor = factor * epsilon
FLOOR_MARGIN = 10.0
HALF_DECADE = math.log(10.0) / 4.0  # half-width in ln t of a half-decade stencil
BOUND_T_MIN = 50.0
BOUND_MIN_SAMPLES = 50
BOUND_GROWTH_TOL = 1.05
HARDY_ANOMALY_RATIO = 100.0
DYADIC_BASE = 2


# ---------------------------------------------------------------------------
# decay fits
# ---------------------------------------------------------------------------

@dataclass
class DecayFit:
    exponent: float
    window: tuple
    residual: float
    method: str

    def __post_init__(self):
        if not self.window[0] < self.window[1]:
            raise WindowError(f"empty fit window {self.window}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["window"] = list(self.window)
        return d


def _log_field(series: ObserverSeries):
    return np.log(series.t), np.abs(series.phi)


def _centred_slope(lt, lphi, x, half):
    return (np.interp(x + half, lt, lphi) - np.interp(x - half, lt, lphi)) / (2.0 * half)


def local_power_index(series: ObserverSeries, t, floor: float = 0.0):
    """d ln|phi| / d ln t at ``t`` (scalar or array).

    Centred differences in ln t over a half-decade stencil (narrowed to stay
    inside the sampled range), combined with the half-width stencil by
    Richardson extrapolation. Raises FloorError if |phi| on the stencil is
    within a factor 10 of ``floor`` or vanishes.
    """
    lt, aphi = _log_field(series)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    x = np.log(t)
    if np.any(x < lt[0]) or np.any(x > lt[-1]):
        raise WindowError("requested time outside the sampled range")
    half = np.minimum.reduce([np.full_like(x, HALF_DECADE), x - lt[0], lt[-1] - x])
    if np.any(half <= 0):
        raise WindowError("stencil collapses at the end of the series")
    lo = np.searchsorted(lt, x - half, side="left")
    hi = np.searchsorted(lt, x + half, side="right")
    threshold = max(FLOOR_MARGIN * floor, np.finfo(float).tiny)
    for a, b in zip(lo, hi):
        seg = aphi[max(a - 1, 0):b + 1]
        if np.any(seg <= threshold):
            raise FloorError("field at or below the noise floor inside the stencil")
    lphi = np.log(aphi)
    wide = _centred_slope(lt, lphi, x, half)
    narrow = _centred_slope(lt, lphi, x, 0.5 * half)
    p = (4.0 * narrow - wide) / 3.0
    return p if p.size > 1 else float(p[0])


def local_index_fit(series: ObserverSeries, t_lo: float, t_hi: float, n: int = 61,
                    floor: float = 0.0) -> DecayFit:
    """Local index sampled on a log-spaced set of times in the window.

    ``exponent`` is the mean index, ``residual`` the largest departure from it.
    """
    ts = np.geomspace(t_lo, t_hi, n)
    p = np.atleast_1d(local_power_index(series, ts, floor=floor))
    mean = float(np.mean(p))
    fit = DecayFit(mean, (float(t_lo), float(t_hi)), float(np.max(np.abs(p - mean))), "local-index")
    fit.samples = p
    return fit


def fit_power_law(series: ObserverSeries, t_lo: float, t_hi: float, floor: float = 0.0) -> DecayFit:
    """Least-squares slope of ln|phi| against ln t over [t_lo, t_hi]."""
    m = (series.t >= t_lo) & (series.t <= t_hi)
    if m.sum() < 3:
        raise WindowError("fewer than 3 samples in the fit window")
    aphi = np.abs(series.phi[m])
    if np.any(aphi <= max(FLOOR_MARGIN * floor, np.finfo(float).tiny)):
        raise FloorError("field at or below the noise floor inside the fit window")
    x, y = np.log(series.t[m]), np.log(aphi)
    slope, intercept = np.polyfit(x, y, 1)
    resid = float(np.max(np.abs(y - (slope * x + intercept))))
    return DecayFit(float(slope), (float(t_lo), float(t_hi)), resid, "log-log-ls")


def self_convergence(coarse: ObserverSeries, medium: ObserverSeries, fine: ObserverSeries,
                     ratio_of_steps: int = 2):
    """Richardson ratio and order from three runs whose steps shrink by ``ratio_of_steps``.

    The finer series are subsampled onto the coarse times and trimmed to a
    common length. Returns (ratio, order) with ratio = |c - m| / |m - f| in
    the L2 norm over the common samples.
    """
    k = ratio_of_steps
    m_s, f_s = medium.phi[::k], fine.phi[::k * k]
    n = min(coarse.phi.size, m_s.size, f_s.size)
    if n < 3:
        raise WindowError("fewer than 3 common samples")
    if not np.allclose(coarse.t[:n], medium.t[::k][:n]) or not np.allclose(coarse.t[:n], fine.t[::k * k][:n]):
        raise WindowError("series are not nested: steps must shrink by an integer factor")
    a, b, c = coarse.phi[:n], m_s[:n], f_s[:n]
    num, den = np.linalg.norm(a - b), np.linalg.norm(b - c)
    if den == 0:
        raise FloorError("finest two runs agree exactly; order undefined")
    ratio = float(num / den)
    return ratio, math.log(ratio) / math.log(k)


# ---------------------------------------------------------------------------
# main-bound check
# ---------------------------------------------------------------------------

@dataclass
class BoundReport:
    kappa: float
    C_star: float
    bounded: bool
    window: tuple
    mid_sup: float
    last_quarter_sup: float
    t: np.ndarray = field(repr=False)
    running_sup: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        return {"kappa": self.kappa, "C_star": self.C_star, "bounded": self.bounded,
                "window": list(self.window), "mid_sup": self.mid_sup,
                "last_quarter_sup": self.last_quarter_sup}


def bound_verification(series: ObserverSeries, kappa: float, t_min: float = BOUND_T_MIN,
                       t_max: float | None = None) -> BoundReport:
    """sup of <t>^{1+kappa}|phi| over the window and whether it has stabilized.

    ``bounded`` holds iff the sup over the last quarter of the window is at
    most 1.05 times the running sup at the window midpoint. Since the weight
    ratio between two times only shrinks as kappa decreases, the flag is
    monotone in kappa.
    """
    t_max = series.t[-1] if t_max is None else t_max
    m = (series.t >= t_min) & (series.t <= t_max)
    if m.sum() < BOUND_MIN_SAMPLES:
        raise WindowError(f"bound window has {int(m.sum())} samples, need {BOUND_MIN_SAMPLES}")
    t = series.t[m]
    w = japanese(t) ** (1.0 + kappa) * np.abs(series.phi[m])
    run = np.maximum.accumulate(w)
    lo, hi = t[0], t[-1]
    mid = lo + 0.5 * (hi - lo)
    q3 = lo + 0.75 * (hi - lo)
    mid_sup = float(run[np.searchsorted(t, mid, side="right") - 1])
    last = float(np.max(w[t >= q3]))
    return BoundReport(kappa=float(kappa), C_star=float(run[-1]),
                       bounded=bool(last <= BOUND_GROWTH_TOL * mid_sup),
                       window=(float(lo), float(hi)), mid_sup=mid_sup, last_quarter_sup=last,
                       t=t, running_sup=run)


# ---------------------------------------------------------------------------
# lattice derivatives
# ---------------------------------------------------------------------------

@dataclass
class _Derivs:
    t: np.ndarray
    rs: np.ndarray
    phi: np.ndarray
    ft: np.ndarray
    fr: np.ndarray
    ftt: np.ndarray
    ftr: np.ndarray
    frr: np.ndarray


def _lattice_derivatives(grid: NullGrid, phi: np.ndarray | None = None) -> _Derivs:
    """(t, r*) derivatives at interior nodes from centred (u, v) differences."""
    t, rs, r, _ = grid.coords()
    if phi is None:
        phi = grid.psi / r
    H = grid.h
    c = (slice(1, -1), slice(1, -1))
    fu = (phi[2:, 1:-1] - phi[:-2, 1:-1]) / (2 * H)
    fv = (phi[1:-1, 2:] - phi[1:-1, :-2]) / (2 * H)
    fuu = (phi[2:, 1:-1] - 2 * phi[c] + phi[:-2, 1:-1]) / H**2
    fvv = (phi[1:-1, 2:] - 2 * phi[c] + phi[1:-1, :-2]) / H**2
    fuv = (phi[2:, 2:] - phi[2:, :-2] - phi[:-2, 2:] + phi[:-2, :-2]) / (4 * H**2)
    return _Derivs(t=t[c], rs=rs[c], phi=phi[c], ft=fu + fv, fr=fv - fu,
                   ftt=fuu + 2 * fuv + fvv, ftr=fvv - fuu, frr=fuu - 2 * fuv + fvv)


def _interior_valid(grid: NullGrid) -> np.ndarray:
    v = grid.valid
    ok = v[1:-1, 1:-1] & v[2:, 1:-1] & v[:-2, 1:-1] & v[1:-1, 2:] & v[1:-1, :-2] & v[:-2, :-2]
    return ok


# ---------------------------------------------------------------------------
# second-derivative bound
# ---------------------------------------------------------------------------

@dataclass
class SecondDerivativeReport:
    C2: float
    region: dict
    points: int
    coverage: float
    argmax: tuple

    def to_dict(self) -> dict:
        return asdict(self)


def second_derivative_bound_check(grid: NullGrid, t_range, rstar_range, R1: float | None = None,
                                  phi: np.ndarray | None = None) -> SecondDerivativeReport:
    """Fitted constant C2 of |d^2 phi| <= C2 (mu^-1 |d phi_{<=1}| + mu^-1 <r>^-1 |phi_{<=2}|).

    Vector fields Z are d_t, d_r and S = t d_t + r d_r with r = r*; second
    derivatives are taken in (t, r*), so phi = r* gives C2 = 0 exactly.
    mu = min(<r>, <u_p>) with u_p = (t - r*)/2. The region is clipped to the
    computed lattice and the covered fraction of its (t, r*) area reported.
    """
    cmap = CoordinateMap(grid.params, R1)
    r_lo = float(areal_from_tortoise(cmap, rstar_range[0]))
    if r_lo < 2.0 * cmap.R1:
        raise RegionError(f"region reaches r = {r_lo:.4g} < 2 R1 = {2 * cmap.R1:g}")
    if phi is None:
        grid = grid.window(t_range[0] - rstar_range[1], t_range[1] - rstar_range[0],
                           t_range[0] + rstar_range[0], t_range[1] + rstar_range[1])
    d = _lattice_derivatives(grid, phi)
    in_region = ((d.t >= t_range[0]) & (d.t <= t_range[1])
                 & (d.rs >= rstar_range[0]) & (d.rs <= rstar_range[1]) & _interior_valid(grid))
    if not in_region.any():
        raise CoverageError("no lattice nodes inside the requested region")

    t, r = d.t[in_region], d.rs[in_region]
    f, ft, fr = d.phi[in_region], d.ft[in_region], d.fr[in_region]
    ftt, ftr, frr = d.ftt[in_region], d.ftr[in_region], d.frr[in_region]

    Sf = t * ft + r * fr
    dt_S = ft + t * ftt + r * ftr
    dr_S = fr + t * ftr + r * frr
    grad = lambda a, b: np.maximum(np.abs(a), np.abs(b))  # noqa: E731
    d_le1 = grad(ft, fr) + grad(ftt, ftr) + grad(ftr, frr) + grad(dt_S, dr_S)
    words2 = [ftt, ftr, ftr, frr, dt_S, dr_S, t * ftt + r * ftr, t * ftr + r * frr,
              Sf + t * t * ftt + 2 * t * r * ftr + r * r * frr]
    le2 = np.abs(f) + np.abs(ft) + np.abs(fr) + np.abs(Sf) + sum(np.abs(w) for w in words2)
    mu = np.minimum(japanese(r), japanese(0.5 * (t - r)))
    denom = d_le1 / mu + le2 / (mu * japanese(r))
    num = np.maximum.reduce([np.abs(ftt), np.abs(ftr), np.abs(frr)])
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(denom > 0, num / denom, 0.0)
    k = int(np.argmax(ratio))

    h = grid.h
    cell = 0.5 * h * h  # (t, r*) area per lattice node
    area = (t_range[1] - t_range[0]) * (rstar_range[1] - rstar_range[0])
    coverage = min(1.0, in_region.sum() * cell / area) if area > 0 else 1.0
    return SecondDerivativeReport(
        C2=float(ratio[k]),
        region={"t": list(map(float, t_range)), "rstar": list(map(float, rstar_range)),
                "R1": cmap.R1},
        points=int(in_region.sum()), coverage=float(coverage), argmax=(float(t[k]), float(r[k])))


# ---------------------------------------------------------------------------
# Hardy-type inequality
# ---------------------------------------------------------------------------

@dataclass
class HardyReport:
    t: float
    lhs: float
    rhs: float
    ratio: float | None
    anomalous: bool
    empty: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


def _trapz_on(r, y, a, b):
    """Trapezoid integral of samples (r, y) over [a, b], endpoints interpolated."""
    inner = (r > a) & (r < b)
    rr = np.concatenate([[a], r[inner], [b]])
    yy = np.concatenate([[np.interp(a, r, y)], y[inner], [np.interp(b, r, y)]])
    return float(trapezoid(yy, rr))


def hardy_check(r, f, t: float) -> HardyReport:
    """Both sides of the Hardy-type bound on a constant-t slice, 1-D dr measure.

        LHS = int_{t/2}^{3t/2} f^2 / <t - r>^2 dr
        RHS = int_{t/4}^{7t/4} |d_r f|^2 dr + <t>^-2 (int_{t/4}^{t/2} f^2 + int_{3t/2}^{7t/4} f^2)

    The inequality is reported, never asserted. ``anomalous`` marks ratios
    above 100, the size seen for f = 1 where the printed form cannot hold.
    """
    r = np.asarray(r, dtype=float)
    f = np.asarray(f, dtype=float)
    order = np.argsort(r)
    r, f = r[order], f[order]
    if r.size < 3 or r[0] > t / 4 + 1e-12 or r[-1] < 7 * t / 4 - 1e-12:
        raise CoverageError(f"slice must cover r in [{t / 4:g}, {7 * t / 4:g}]")
    df = np.gradient(f, r, edge_order=2)
    lhs = _trapz_on(r, f**2 / (1.0 + (t - r) ** 2), t / 2, 3 * t / 2)
    rhs = (_trapz_on(r, df**2, t / 4, 7 * t / 4)
           + (_trapz_on(r, f**2, t / 4, t / 2) + _trapz_on(r, f**2, 3 * t / 2, 7 * t / 4)) / (1.0 + t * t))
    if lhs == 0.0 and rhs == 0.0:
        return HardyReport(t=float(t), lhs=0.0, rhs=0.0, ratio=None, anomalous=False, empty=True)
    ratio = math.inf if rhs == 0.0 else lhs / rhs
    return HardyReport(t=float(t), lhs=lhs, rhs=rhs, ratio=ratio,
                       anomalous=bool(ratio > HARDY_ANOMALY_RATIO))


def hardy_slice(grid: NullGrid, t: float):
    """(r*, phi) along the constant-t line of the stored lattice nearest ``t``."""
    h = grid.h
    s = int(round((2.0 * t - grid.v0) / h))  # a + b on the stored lattice
    a = np.arange(grid.psi.shape[0])
    b = s - a
    ok = (b >= 0) & (b < grid.psi.shape[1])
    a, b = a[ok], b[ok]
    ok = grid.valid[a, b]
    a, b = a[ok], b[ok]
    if a.size == 0:
        raise CoverageError(f"no stored nodes on t = {t}")
    rstar = 0.5 * (grid.v0 + b * h - a * h)
    r, _ = areal_from_tortoise_array(CoordinateMap(grid.params), rstar)
    order = np.argsort(rstar)
    return rstar[order], (grid.psi[a, b] / r)[order]


# ---------------------------------------------------------------------------
# local-energy norms on dyadic regions
# ---------------------------------------------------------------------------

@dataclass
class RegionNorm:
    region: str
    value: float
    quantity: str = "phi"

    def __post_init__(self):
        if not self.value >= 0:
            raise ValueError("norm values are non-negative")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class LEReport:
    T: float
    norms: list
    le1: float
    prop34_ratio: float | None

    def to_dict(self) -> dict:
        return {"T": self.T, "norms": [n.to_dict() for n in self.norms], "le1": self.le1,
                "prop34_ratio": self.prop34_ratio}


class _Fields:
    """Node weights and integrands on {T <= t <= 2T, 0 <= r* <= t} for one T."""

    def __init__(self, grid: NullGrid, T: float, phi=None):
        d = _lattice_derivatives(grid, phi)
        tol = 1e-9 * max(1.0, grid.h)
        wt = _edge_weight(d.t, T, DYADIC_BASE * T, tol)
        keep = (wt > 0) & (d.rs >= -tol) & (d.rs <= d.t + tol) & _interior_valid(grid)
        self.tol = tol
        self.t, self.r = d.t[keep], d.rs[keep]
        jr = japanese(self.r)
        measure = wt[keep] * 4.0 * np.pi * self.r**2 * 0.5 * grid.h**2
        phi2 = d.phi[keep] ** 2
        self.phi = d.phi[keep]
        self.weighted = {
            "phi": measure * phi2 / jr,
            "dphi": measure * (d.ft[keep] ** 2 + d.fr[keep] ** 2) / jr,
            "phi_over_r": measure * phi2 / jr**3,
        }

    def banded(self, x, edges, quantity):
        """Squared norms per band [edges[k], edges[k+1]]; edge nodes split 1/2-1/2."""
        edges = np.asarray(edges, dtype=float)
        y = self.weighted[quantity]
        k = np.searchsorted(edges, x, side="right") - 1
        on_edge = np.zeros(x.shape, dtype=bool)
        j = np.clip(np.searchsorted(edges, x), 0, edges.size - 1)
        on_edge |= np.abs(x - edges[j]) <= self.tol
        j2 = np.clip(j - 1, 0, edges.size - 1)
        on_edge |= np.abs(x - edges[j2]) <= self.tol
        e_idx = np.where(np.abs(x - edges[j]) <= self.tol, j, j2)
        nb = edges.size - 1
        out = np.zeros(nb)
        inner = ~on_edge & (k >= 0) & (k < nb)
        out += np.bincount(k[inner], weights=y[inner], minlength=nb)[:nb]
        # an edge node gives half to the band above and half to the band below
        for shift in (0, -1):
            band = e_idx[on_edge] + shift
            ok = (band >= 0) & (band < nb)
            out += np.bincount(band[ok], weights=0.5 * y[on_edge][ok], minlength=nb)[:nb]
        return out


def _edge_weight(x, a, b, tol):
    """1 inside (a, b), 1/2 on either edge, 0 outside."""
    w = ((x > a + tol) & (x < b - tol)).astype(float)
    w[np.abs(x - a) <= tol] = 0.5
    w[np.abs(x - b) <= tol] = 0.5
    return w


def region_norm(grid: NullGrid, T: float, r_lo: float, r_hi: float, quantity: str = "phi",
                mode: str = "r", phi=None) -> float:
    """L2 norm of the chosen quantity over {T <= t <= 2T} x {r_lo <= r* <= r_hi}, 0 <= r* <= t.

    Nodes on a boundary line count with weight 1/2, so adjacent pieces add
    exactly. ``mode="u"`` bands t - r* instead of r*.
    """
    if quantity not in ("phi", "dphi", "phi_over_r"):
        raise ValueError(f"unknown quantity {quantity!r}")
    if phi is None:
        grid = grid.window(0.0, DYADIC_BASE * T, T, 2 * DYADIC_BASE * T)
    F = _Fields(grid, T, phi)
    x = F.r if mode == "r" else F.t - F.r
    return math.sqrt(float(F.banded(x, [r_lo, r_hi], quantity)[0]))


def _dyadic_edges(top):
    edges = [0.0, float(DYADIC_BASE)]
    while edges[-1] < top:
        edges.append(edges[-1] * DYADIC_BASE)
    return edges


def le_norms(grid: NullGrid, T: float, phi=None) -> LEReport:
    """Norms on C_T^R and C_T^U (base 2), the LE^1 aggregate and the initial-decay ratio.

    For each dyadic piece three quantities are reported: <r>^{-1/2} phi,
    <r>^{-1/2} d phi and <r>^{-3/2} phi. LE^1 is the sup over R of the d phi
    piece plus the sup of the <r>^{-1} phi piece. The ratio is
    sup |phi| <v_p> / <u_p>^{1/2} over T <= t <= 2T, r* <= t, divided by LE^1.
    """
    if grid.u_max < DYADIC_BASE * T or grid.v_max < 2 * DYADIC_BASE * T or T < 1:
        raise CoverageError(f"grid does not cover t in [{T:g}, {DYADIC_BASE * T:g}] with r* <= t")
    top = DYADIC_BASE * T
    if phi is None:
        grid = grid.window(0.0, top, T, 2 * top)
    F = _Fields(grid, T, phi)
    edges = _dyadic_edges(top)
    labels = [1] + [int(e) for e in edges[1:-1]]
    norms = []
    sups = {}
    for tag, x in (("R", F.r), ("U", F.t - F.r)):
        for q in ("phi", "dphi", "phi_over_r"):
            vals = np.sqrt(F.banded(x, edges, q))
            norms.extend(RegionNorm(f"C_{T:g}^{tag}={R}", float(v), q) for R, v in zip(labels, vals))
            if tag == "R":
                sups[q] = float(vals.max())
    le1 = sups["dphi"] + sups["phi_over_r"]
    norms.append(RegionNorm(f"LE1[{T:g},{top:g}]", le1, "LE1"))

    ratio = None
    if le1 > 0 and F.t.size:
        up, vp = 0.5 * (F.t - F.r), 0.5 * (F.t + F.r)
        ratio = float(np.max(np.abs(F.phi) * japanese(vp) / np.sqrt(japanese(up)))) / le1
    return LEReport(T=float(T), norms=norms, le1=le1, prop34_ratio=ratio)
