"""Symbolic bookkeeping for the pointwise decay iteration.

A bound <r>^-p_r <v>^-p_v <u>^-p_u is stored as three exact exponents. Each
exponent is a rational plus an integer multiple of one infinitesimal eps, so
"2+" is 2 + eps and "1/2-" is 1/2 - eps; slack introduced by one rule and
removed by another cancels exactly. No floats enter the engine.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from functools import total_ordering

from .errors import AmbiguousEtaError, DomainError, NonTerminationError, RuleError

__all__ = [
    "Exponent",
    "DecayBound",
    "SourceTriple",
    "RuleStep",
    "RuleTrace",
    "IterationResult",
    "as_fraction",
    "rule_conversion",
    "rule_interior",
    "rule_derivative",
    "rule_source_assembly",
    "rule_cone",
    "slack_shift",
    "run_iteration",
    "linear_part_bound",
    "INITIAL_BOUND",
    "REGIONS",
]

REGIONS = ("exterior", "interior", "global")


def as_fraction(x) -> Fraction:
    """Exact rational from int, Fraction, decimal string or float (via its shortest repr)."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, float):
        return Fraction(repr(x))
    return Fraction(str(x))


@total_ordering
@dataclass(frozen=True)
class Exponent:
    """value + eps_count * eps for a fixed infinitesimal eps > 0."""

    value: Fraction
    eps: int = 0

    def __post_init__(self):
        object.__setattr__(self, "value", as_fraction(self.value))

    @classmethod
    def of(cls, x) -> "Exponent":
        return x if isinstance(x, Exponent) else cls(as_fraction(x))

    def __add__(self, other):
        o = Exponent.of(other)
        return Exponent(self.value + o.value, self.eps + o.eps)

    __radd__ = __add__

    def __neg__(self):
        return Exponent(-self.value, -self.eps)

    def __sub__(self, other):
        return self + (-Exponent.of(other))

    def __rsub__(self, other):
        return Exponent.of(other) - self

    def __mul__(self, k):
        if not isinstance(k, int):
            raise TypeError("exponents scale by integers only")
        return Exponent(self.value * k, self.eps * k)

    __rmul__ = __mul__

    def _key(self):
        return (self.value, self.eps)

    def __eq__(self, other):
        try:
            return self._key() == Exponent.of(other)._key()
        except (TypeError, ValueError):
            return NotImplemented

    def __lt__(self, other):
        return self._key() < Exponent.of(other)._key()

    def __hash__(self):
        return hash(self._key())

    def plus(self) -> "Exponent":
        return Exponent(self.value, self.eps + 1)

    def minus(self) -> "Exponent":
        return Exponent(self.value, self.eps - 1)

    def __str__(self):
        base = str(self.value)
        if self.eps == 0:
            return base
        if self.eps == 1:
            return base + "+"
        if self.eps == -1:
            return base + "-"
        return f"{base}{self.eps:+d}eps"

    __repr__ = __str__


E = Exponent.of


@dataclass(frozen=True)
class DecayBound:
    """<r>^-p_r <v>^-p_v <u>^-p_u on a region."""

    p_r: Exponent
    p_v: Exponent
    p_u: Exponent
    region: str = "global"

    def __post_init__(self):
        for name in ("p_r", "p_v", "p_u"):
            object.__setattr__(self, name, E(getattr(self, name)))
        if self.region not in REGIONS:
            raise DomainError(f"unknown region {self.region!r}")
        if self.region == "exterior" and self.p_v > 0:
            raise RuleError("exterior bounds carry their gain in p_r, not p_v")

    def times(self, other: "DecayBound", region="global") -> "DecayBound":
        return DecayBound(self.p_r + other.p_r, self.p_v + other.p_v, self.p_u + other.p_u, region)

    def exps(self):
        return (self.p_r, self.p_v, self.p_u)

    def to_dict(self) -> dict:
        return {"p_r": str(self.p_r), "p_v": str(self.p_v), "p_u": str(self.p_u), "region": self.region}

    def __str__(self):
        return f"({self.p_r}, {self.p_v}, {self.p_u})[{self.region}]"


@dataclass(frozen=True)
class SourceTriple:
    """Source bound <r>^-alpha <v>^-beta <u>^-eta."""

    alpha: Exponent
    beta: Exponent
    eta: Exponent

    def __post_init__(self):
        for name in ("alpha", "beta", "eta"):
            object.__setattr__(self, name, E(getattr(self, name)))

    def to_dict(self) -> dict:
        return {"alpha": str(self.alpha), "beta": str(self.beta), "eta": str(self.eta)}

    def __str__(self):
        return f"<{self.alpha}, {self.beta}, {self.eta}>"


INITIAL_BOUND = DecayBound(0, 1, Fraction(-1, 2))  # <u>^{1/2} / <v>


# ---------------------------------------------------------------------------
# trace
# ---------------------------------------------------------------------------

@dataclass
class RuleStep:
    rule: str
    inputs: list
    output: object
    note: str = ""
    pass_index: int = 0

    def to_dict(self) -> dict:
        d = {"rule": self.rule, "in": [x.to_dict() for x in self.inputs],
             "out": _out_dict(self.output), "pass": self.pass_index}
        if self.note:
            d["note"] = self.note
        return d

    def text(self) -> str:
        ins = ", ".join(str(x) for x in self.inputs)
        out = self.output if not isinstance(self.output, dict) else \
            "{" + "; ".join(f"{k}: {v}" for k, v in self.output.items()) + "}"
        tail = f"  # {self.note}" if self.note else ""
        return f"[{self.pass_index}] {self.rule}: {ins} -> {out}{tail}"


def _out_dict(o):
    if isinstance(o, dict):
        return {k: v.to_dict() for k, v in o.items()}
    return None if o is None else o.to_dict()


@dataclass
class RuleTrace:
    steps: list = field(default_factory=list)

    def add(self, rule, inputs, output, note="", pass_index=0):
        self.steps.append(RuleStep(rule, list(inputs), output, note, pass_index))
        return output

    def to_json(self) -> str:
        return json.dumps([s.to_dict() for s in self.steps], indent=1)

    def text(self) -> str:
        return "\n".join(s.text() for s in self.steps)

    def bounds(self, rule="pass_bound"):
        return [s.output for s in self.steps if s.rule == rule]


# ---------------------------------------------------------------------------
# rules
# ---------------------------------------------------------------------------

def _eta_tilde(eta: Exponent) -> Exponent:
    if eta == 1:
        raise AmbiguousEtaError("eta = 1 exactly: eta~ is undefined")
    return eta - 2 if eta < 1 else E(-1)


def slack_shift(src: SourceTriple, trace: RuleTrace | None = None, pass_index=0) -> SourceTriple:
    """Bring alpha into (2, 3).

    alpha = 2 trades eps of <v> decay for <r> decay, using <r> <~ <v> in r <= t.
    alpha >= 3 gives up the surplus <r> decay down to 3 - eps.
    """
    out = src
    if src.alpha == 2:
        if not src.beta > 0:
            raise RuleError("the r<->v exchange needs beta > 0")
        out = SourceTriple(src.alpha.plus(), src.beta.minus(), src.eta)
        note = "r<->v exchange, valid in r <= t"
    elif src.alpha >= 3:
        out = SourceTriple(E(3).minus(), src.beta, src.eta)
        note = "surplus r-decay dropped to 3-"
    elif src.alpha < 2:
        raise RuleError(f"alpha = {src.alpha} < 2 is outside the conversion lemma")
    else:
        return src
    if trace is not None:
        trace.add("slack_shift", [src], out, note, pass_index)
    return out


def rule_conversion(src: SourceTriple, trace: RuleTrace | None = None, pass_index=0) -> DecayBound:
    """Conversion lemma: (1, 0, alpha + beta + eta~ - 1) for u > 1."""
    if not (E(2) < src.alpha < E(3)):
        raise RuleError(f"conversion needs 2 < alpha < 3, got {src.alpha}; apply slack_shift")
    if src.beta < 0 or src.eta < E(Fraction(-1, 2)):
        raise RuleError("conversion needs beta >= 0 and eta >= -1/2")
    out = DecayBound(1, 0, src.alpha + src.beta + _eta_tilde(src.eta) - 1, "global")
    if trace is not None:
        trace.add("conversion", [src], out, "", pass_index)
    return out


def rule_cone(src: SourceTriple, trace: RuleTrace | None = None, pass_index=0):
    """Near-cone d_t-source lemma applied to the source written as d_t G.

    Near the cone <r> ~ <v>, so beta folds into alpha, and G = d_t^{-1}(source)
    loses one power of <u>. Output (1, 0, alpha_G + eta~_G) when
    alpha_G + eta_G > 3; returns None (deferred) otherwise.
    """
    alpha_g = src.alpha + src.beta
    if alpha_g >= 3:
        alpha_g = E(3).minus()
    eta_g = src.eta - 1
    g = SourceTriple(alpha_g, 0, eta_g)
    if not alpha_g + eta_g > 3 or eta_g == 1 or eta_g < E(Fraction(-1, 2)):
        if trace is not None:
            trace.add("cone_deferred", [src], None, f"alpha+eta = {alpha_g + eta_g} fails > 3", pass_index)
        return None
    out = DecayBound(1, 0, alpha_g + _eta_tilde(eta_g), "global")
    if trace is not None:
        trace.add("cone", [src, g], out, "d_t-source table", pass_index)
    return out


def rule_interior(b: DecayBound, trace: RuleTrace | None = None, pass_index=0) -> DecayBound:
    """Interior propagation: <r>^-1 becomes <v>^-1."""
    if b.p_r < 1:
        raise RuleError(f"interior propagation needs p_r >= 1, got {b.p_r}")
    out = DecayBound(b.p_r - 1, b.p_v + 1, b.p_u, "interior")
    if trace is not None:
        trace.add("interior", [b], out, "", pass_index)
    return out


def rule_derivative(b: DecayBound, trace: RuleTrace | None = None, pass_index=0) -> dict:
    """Derivative gain mu^-1, mu = min(<r>, <u>): one variant per region."""
    out = {
        "r<=u": DecayBound(b.p_r + 1, b.p_v, b.p_u, b.region),
        "u<=r": DecayBound(b.p_r, b.p_v, b.p_u + 1, b.region),
    }
    if trace is not None:
        trace.add("derivative", [b], out, "", pass_index)
    return out


def _mu_merge(variants: dict, trace, pass_index) -> DecayBound:
    """Worst case of the two regional variants in r <= t, where <r> + <u> ~ <v>:

    max(<r>^-1, <u>^-1) <~ <v> <r>^-1 <u>^-1.
    """
    a, b = variants["r<=u"], variants["u<=r"]
    base = DecayBound(a.p_r - 1, a.p_v, a.p_u, a.region)
    if DecayBound(base.p_r, base.p_v, base.p_u + 1, base.region) != b:
        raise RuleError("derivative variants do not share a base bound")
    out = DecayBound(base.p_r + 1, base.p_v - 1, base.p_u + 1, "global")
    if trace is not None:
        trace.add("mu_merge", [a, b], out, "<r> + <u> ~ <v> in r <= t", pass_index)
    return out


def _dominated(d_r: Exponent, d_v: Exponent, d_u: Exponent) -> bool:
    """Is <r>^-d_r <v>^-d_v <u>^-d_u <~ 1 when <r>, <u> <~ <v>?"""
    need = max(E(0), -d_r) + max(E(0), -d_u)
    return need <= d_v


def rule_source_assembly(phi_bound: DecayBound, delta, branch: str | None = None,
                         trace: RuleTrace | None = None, pass_index=0) -> SourceTriple:
    """Exponents of (H phi d^2 phi) from the current global bound on phi.

    d^2 phi gains mu^-2 over phi (two derivative steps, merged per region),
    H contributes (<u>/<v>)^kappa with kappa = min(delta, 1). In the
    delta >= 1 branch the extra t^-1 phi d phi term is checked to be dominated.
    """
    delta = as_fraction(delta)
    if delta <= 0:
        raise DomainError("delta must be positive")
    if phi_bound.region != "global":
        raise RuleError(f"source assembly needs a global bound, got {phi_bound.region}")
    expected = "delta>=1" if delta >= 1 else "delta<1"
    branch = branch or expected
    if branch != expected:
        raise RuleError(f"branch {branch} does not match delta = {delta}")
    kappa = min(delta, Fraction(1))

    d1 = _mu_merge(rule_derivative(phi_bound, trace, pass_index), trace, pass_index)
    d2 = _mu_merge(rule_derivative(d1, trace, pass_index), trace, pass_index)
    H = DecayBound(0, kappa, -kappa)
    main = phi_bound.times(d2).times(H)
    out = SourceTriple(main.p_r, main.p_v, main.p_u)
    note = f"kappa = {kappa}"
    if branch == "delta>=1":
        extra = phi_bound.times(d1).times(DecayBound(0, 1, 0))
        diff = [x - y for x, y in zip(extra.exps(), main.exps())]
        if not _dominated(*diff):
            raise RuleError("t^-1 phi d phi is not dominated by the main term")
        note += "; t^-1 phi d phi term dominated"
        if delta > 1:
            note += "; near-cone factor capped at power 1"
    if trace is not None:
        trace.add("source_assembly", [phi_bound], out, note, pass_index)
    return out


def linear_part_bound(kind: str) -> DecayBound:
    """Decay reached by the linear problem with zero data.

    P: the t^-3 rate <v>^-1 <u>^-2. P': <v>^-1 <u>^-(1+).
    """
    if kind == "P":
        return DecayBound(0, 1, 2)
    if kind in ("Pprime", "P-prime", "P'"):
        return DecayBound(0, 1, E(1).plus())
    raise DomainError(f"unknown operator kind {kind!r}")


def _combine(a: DecayBound, b: DecayBound) -> DecayBound:
    """Bound on a sum of two terms with equal (p_r, p_v): the weaker u-rate wins."""
    if (a.p_r, a.p_v) != (b.p_r, b.p_v):
        raise RuleError("can only combine bounds with matching r and v exponents")
    return DecayBound(a.p_r, a.p_v, min(a.p_u, b.p_u), "global")


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------

@dataclass
class IterationResult:
    bound: DecayBound
    trace: RuleTrace
    passes: int
    delta: Fraction
    kind: str
    cone_pass: int

    def to_dict(self) -> dict:
        return {"delta": str(self.delta), "operator": self.kind, "passes": self.passes,
                "cone_pass": self.cone_pass, "bound": self.bound.to_dict(),
                "trace": [s.to_dict() for s in self.trace.steps]}


def _one_pass(B: DecayBound, delta: Fraction, kind: str, k: int, cone_due: bool, trace: RuleTrace):
    src = rule_source_assembly(B, delta, trace=trace, pass_index=k)
    if src.eta == 1:
        perturbed = SourceTriple(src.alpha, src.beta, src.eta.minus())
        trace.add("eta_perturb", [src], perturbed, "eta = 1 weakened to 1-", k)
        src = perturbed
    shifted = slack_shift(src, trace, k)
    conv = rule_conversion(shifted, trace, k)
    cone_used = False
    if cone_due:
        cone = rule_cone(shifted, trace, k)
        if cone is not None:
            cone_used = True
            merged = DecayBound(1, 0, min(conv.p_u, cone.p_u), "global")
            conv = trace.add("combine", [conv, cone], merged, "sum of source pieces", k)
    inner = rule_interior(conv, trace, k)
    glob = trace.add("exterior_merge", [conv, inner], DecayBound(0, 1, inner.p_u, "global"),
                     "<r>^-1 ~ <v>^-1 for r >= t/2", k)
    lin = linear_part_bound(kind)
    out = trace.add("linear_part", [glob, lin], _combine(glob, lin), f"operator {kind}", k)
    trace.add("pass_bound", [B], out, "", k)
    return out, cone_used


def run_iteration(delta, kind: str = "P", max_passes: int = 3, cone_pass: int = 2,
                  start: DecayBound = INITIAL_BOUND) -> IterationResult:
    """Iterate assembly -> conversion -> interior propagation to a fixed point.

    One extra confirming pass is run after the last improving pass.
    ``passes`` is the index of the pass that first produced the final bound.
    The near-cone d_t rule is tried from ``cone_pass`` on until its hypothesis
    holds, and used once.
    """
    delta = as_fraction(delta)
    if delta <= 0:
        raise DomainError("delta must be positive")
    if max_passes < 2:
        raise DomainError("max_passes must be at least 2")
    if cone_pass not in (2, 3):
        raise DomainError("cone_pass must be 2 or 3")
    linear_part_bound(kind)
    trace = RuleTrace()
    trace.add("initial", [], start, "initial decay", 0)
    B = start
    first_final = 0
    cone_done = False
    for k in range(1, max_passes + 2):
        new, used = _one_pass(B, delta, kind, k, (not cone_done) and k >= cone_pass, trace)
        cone_done = cone_done or used
        if new == B:
            return IterationResult(B, trace, first_final, delta, kind, cone_pass)
        B, first_final = new, k
    raise NonTerminationError(f"no fixed point within {max_passes} passes (last bound {B})")
