"""Quasilinear coefficient profiles and a numerical symbol-class checker.

The canonical profile puts

    H^{Lbar Lbar}(t, r*) = h0 * (<t - r*> / <t + r*>)^delta,   <x> = sqrt(1 + x^2)

on the slowest-decaying frame slot. It is bounded by h0 everywhere and by
h0 (<u>/<t>)^delta inside the cone, with u = t - r*.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .errors import ClassError, DomainError, GridError
from .geometry import MetricParams, frame_decompose, null_frame_at

__all__ = [
    "KINDS",
    "CoefficientProfile",
    "SymbolClassReport",
    "japanese",
    "eval_H",
    "frame_tensor",
    "check_symbol_class",
    "operator_class_coefficients",
    "SYMBOL_DEPTH",
    "PASS_CONSTANT",
]

KINDS = ("LbarLbar-only", "full-tensor", "constant")

# vector-field depth |J| used by the checker
SYMBOL_DEPTH = 2
PASS_CONSTANT = 2.0
# relative slack for finite-difference error in the sampled ratios
FD_RTOL = 1e-8

# full-tensor kind: every non-LbarLbar slot carries this fraction of h0
_OTHER_SLOT_FRACTION = 0.5


def japanese(x):
    """<x> = (1 + x^2)^(1/2)."""
    return np.sqrt(1.0 + np.square(x))


@dataclass(frozen=True)
class CoefficientProfile:
    """Quasilinear coefficients H^{ab} and the cubic O(phi^2) coefficient.

    ``kind="constant"`` sets H^{Lbar Lbar} = h0 everywhere. It violates the
    near-cone bound on purpose and exists to exercise the checker.
    """

    delta: float
    h0: float = 1.0
    kind: str = "LbarLbar-only"
    cubic_c: float = 0.0

    def __post_init__(self):
        if not (self.delta > 0):
            raise DomainError(f"delta must be > 0, got {self.delta}")
        if self.h0 < 0:
            raise DomainError(f"h0 must be >= 0, got {self.h0}")
        if self.cubic_c < 0:
            raise DomainError(f"cubic_c must be >= 0, got {self.cubic_c}")
        if self.kind not in KINDS:
            raise DomainError(f"unknown profile kind {self.kind!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def is_linear(self) -> bool:
        return self.h0 == 0.0 and self.cubic_c == 0.0


def _H_branch(profile: CoefficientProfile, t, rstar):
    """The r* >= 0 formula, smooth across r* = 0; exceeds h0 for r* < 0."""
    t = np.asarray(t, dtype=float)
    rstar = np.asarray(rstar, dtype=float)
    if profile.kind == "constant":
        return np.full(np.broadcast(t, rstar).shape, profile.h0)
    return profile.h0 * (japanese(t - rstar) / japanese(t + rstar)) ** profile.delta


def eval_H(profile: CoefficientProfile, t, rstar):
    """H^{Lbar Lbar} at (t, r*); broadcasts over arrays.

    For r* < 0 the ratio <u>/<v> exceeds 1 and is clipped there, which keeps
    the value in [0, h0] up to the horizon.
    """
    out = _H_branch(profile, t, rstar)
    if profile.kind != "constant":
        out = np.minimum(out, profile.h0)
    return out[()] if out.ndim == 0 else out


def frame_tensor(profile: CoefficientProfile, params: MetricParams, t, r, omega) -> np.ndarray:
    """Contravariant H^{ab} at areal radius r, assembled from frame slots."""
    from .geometry import CoordinateMap, tortoise

    rstar = tortoise(CoordinateMap(params), r)
    fr = null_frame_at(params, r, omega)
    hll = float(eval_H(profile, t, rstar))
    other = _OTHER_SLOT_FRACTION * profile.h0 if profile.kind == "full-tensor" else 0.0
    lb = fr.Lbar
    H = hll * np.outer(lb, lb)
    names = ("L", "A", "Astar")
    for n in names:
        T = getattr(fr, n)
        H += other * (np.outer(lb, T) + np.outer(T, lb))
    for u, v in itertools.product(names, names):
        H += other * np.outer(getattr(fr, u), getattr(fr, v))
    return H


def _slot_bounds(profile: CoefficientProfile, params: MetricParams, t, r, omega):
    """Frame components of :func:`frame_tensor`, for round-trip checks."""
    return frame_decompose(params, frame_tensor(profile, params, t, r, omega), r, omega)


# ---------------------------------------------------------------------------
# symbol-class checker
# ---------------------------------------------------------------------------

@dataclass
class SymbolClassReport:
    """Sup-ratios of the sampled coefficient bounds.

    The three headline ratios are the undifferentiated bounds and decide
    ``passed``. ``vf_ratios`` records, per vector-field word Z^J with
    1 <= |J| <= depth, the largest of the same three ratios applied to Z^J H;
    their implicit constants grow with |J| and delta, so they are reported
    without a threshold.
    """

    max_ratio_H: float
    max_ratio_HLL: float
    max_ratio_dH: float
    samples: int
    grid: dict = field(default_factory=dict)
    depth: int = SYMBOL_DEPTH
    vf_ratios: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return max(self.max_ratio_H, self.max_ratio_HLL, self.max_ratio_dH) <= PASS_CONSTANT * (1.0 + FD_RTOL)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return d


def _d4(g, x_plus, h):
    """Fourth-order centred first derivative; ``x_plus(k)`` evaluates g at offset k*h."""
    return (-x_plus(2) + 8.0 * x_plus(1) - 8.0 * x_plus(-1) + x_plus(-2)) / (12.0 * h)


def _apply_word(F: Callable, word, t, r, h):
    """Z^word F by nested fourth-order centred differences; letters 't', 'r', 'S'."""
    if not word:
        return F(t, r)
    z, rest = word[0], word[1:]

    def g(tt, rr):
        return _apply_word(F, rest, tt, rr, h)

    def dt():
        return _d4(g, lambda k: g(t + k * h, r), h)

    def dr():
        return _d4(g, lambda k: g(t, r + k * h), h)

    if z == "t":
        return dt()
    if z == "r":
        return dr()
    if z == "S":
        return t * dt() + r * dr()
    raise ValueError(f"unknown vector field {z!r}")


def _sample_grid(t_min, t_max, n_t, n_lambda):
    ts = np.geomspace(t_min, t_max, n_t)
    lam = np.linspace(0.0, 2.0, n_lambda)
    T, Lam = np.meshgrid(ts, lam, indexing="ij")
    R = T * Lam
    # extra samples hugging the cone, where H^{LbarLbar} is largest relative to its bound
    offs = np.array([-8.0, -4.0, -2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0, 4.0, 8.0])
    Tc, Oc = np.meshgrid(ts, offs, indexing="ij")
    Rc = np.clip(Tc - Oc, 0.0, 2.0 * Tc)
    return np.concatenate([T.ravel(), Tc.ravel()]), np.concatenate([R.ravel(), Rc.ravel()])


def check_symbol_class(profile: CoefficientProfile, t_max: float = 1e4, n_t: int = 120,
                       n_lambda: int = 121, t_min: float = 1.0,
                       depth: int = SYMBOL_DEPTH) -> SymbolClassReport:
    """Sample the coefficient bounds on {t_min <= t <= t_max, 0 <= r* <= 2t}.

    Vector fields Z in {d_t, d_r, S} (rotations vanish on radial profiles)
    are applied up to ``depth`` times by nested fourth-order differences with a
    step proportional to <t - r>, the scale on which H varies.
    """
    if n_t < 1 or n_lambda < 1 or not (t_max >= t_min > 0):
        raise GridError("empty symbol-class grid")
    t, r = _sample_grid(t_min, t_max, n_t, n_lambda)
    if t.size == 0:
        raise GridError("empty symbol-class grid")
    # the profiles are smooth in r* across 0, so stencils may straddle r* = 0
    h = 2e-3 * japanese(t - r)

    # stencils at r* = 0 reach slightly below it; differentiate the smooth branch
    def F(tt, rr):
        return _H_branch(profile, tt, rr)

    h0 = profile.h0
    other = _OTHER_SLOT_FRACTION * h0 if profile.kind == "full-tensor" else 0.0
    if h0 == 0:
        return SymbolClassReport(0.0, 0.0, 0.0, int(t.size),
                                 grid={"t_min": t_min, "t_max": t_max, "n_t": n_t, "n_lambda": n_lambda})

    inside = r <= t
    near_cone = (japanese(t) / japanese(t - r)) ** profile.delta
    mu_weight = japanese(r) * japanese(t - r) / japanese(t)

    def ratios(word):
        zh = np.abs(_apply_word(F, word, t, r, h))
        dt = _apply_word(F, ("t",) + word, t, r, h)
        dr = _apply_word(F, ("r",) + word, t, r, h)
        return (float(np.max(zh)) / h0,
                float(np.max((zh * near_cone)[inside])) / h0,
                float(np.max(np.hypot(dt, dr) * mu_weight)) / h0)

    ratio_H, ratio_HLL, ratio_dH = ratios(())
    ratio_H = max(ratio_H, other / h0)
    vf = {}
    for k in range(1, depth + 1):
        for word in itertools.product("trS", repeat=k):
            vf["".join(word)] = max(ratios(word))

    return SymbolClassReport(
        max_ratio_H=ratio_H, max_ratio_HLL=ratio_HLL, max_ratio_dH=ratio_dH,
        samples=int(t.size), depth=depth, vf_ratios=vf,
        grid={"t_min": t_min, "t_max": t_max, "n_t": n_t, "n_lambda": n_lambda},
    )


# ---------------------------------------------------------------------------
# operator-class sample coefficients
# ---------------------------------------------------------------------------

_P_MIN = {"g_omega": 3.0, "s2": 2.0, "s3": 3.0}
_PPRIME_MIN = {"s2p_omega": 2.0, "s1p": 1.0, "s2p": 2.0, "s1p_alpha": 1.0}


def _radial_power(c, p):
    def f(t, r):
        return c * japanese(np.asarray(r, dtype=float)) ** (-p) + 0.0 * np.asarray(t, dtype=float)
    f.exponent = p
    return f


def operator_class_coefficients(kind: str, c: float = 1.0, eps: float = 0.1,
                                exponents: dict | None = None) -> dict:
    """Closed-form radial coefficients realizing the P or P' classes.

    For ``"P"``: ``g_omega``, ``s2`` and ``s3`` decaying like <r>^-3, <r>^-2,
    <r>^-3 (``s2`` is only non-zero off Schwarzschild, pass an exponent to
    switch it on). For ``"P-prime"``: ``s2p_omega``, ``s1p``, ``s2p``,
    ``s1p_alpha`` with exponents 2+eps, 1+eps, 2+eps, 1+eps. Every function
    takes ``(t, r)``. Exponents below the class minimum raise ClassError
    (P' classes are strict: exponent must exceed the integer part).
    """
    exponents = dict(exponents or {})
    if kind == "P":
        mins, strict = _P_MIN, False
        default = {"g_omega": 3.0, "s3": 3.0}
    elif kind in ("P-prime", "Pprime"):
        if not eps > 0:
            raise ClassError("P' classes need eps > 0")
        mins, strict = _PPRIME_MIN, True
        default = {k: v + eps for k, v in _PPRIME_MIN.items()}
    else:
        raise ClassError(f"unknown operator kind {kind!r}")

    unknown = set(exponents) - set(mins)
    if unknown:
        raise ClassError(f"unknown coefficient(s) {sorted(unknown)} for {kind}")
    default.update(exponents)
    out = {}
    for name, lo in mins.items():
        if name not in default:
            out[name] = _radial_power(0.0, lo)
            continue
        p = default[name]
        if p < lo or (strict and p <= lo) or not math.isfinite(p):
            raise ClassError(f"{name}: exponent {p} outside the class (min {lo}{'+' if strict else ''})")
        out[name] = _radial_power(c, p)
    return out
