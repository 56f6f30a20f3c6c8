import json
from fractions import Fraction as F

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tailwave.errors import AmbiguousEtaError, DomainError, NonTerminationError, RuleError
from tailwave.iteration import (INITIAL_BOUND, DecayBound, Exponent, RuleTrace, SourceTriple,
                                as_fraction, linear_part_bound, rule_cone, rule_conversion,
                                rule_derivative, rule_interior, rule_source_assembly,
                                run_iteration, slack_shift)

X = Exponent.of
HALF = F(1, 2)


# -- exponent arithmetic ------------------------------------------------------------

def test_exponent_order_and_markers():
    assert X(2).plus() > X(2) > X(2).minus()
    assert X(2).plus() < X(F(201, 100))
    assert X(2).plus() + X(HALF).minus() == X(F(5, 2))
    assert str(X(2).plus()) == "2+" and str(X(HALF).minus()) == "1/2-"
    assert 2 * X(1).plus() == Exponent(F(2), 2)
    with pytest.raises(TypeError):
        X(1) * 0.5


def test_as_fraction_exact():
    assert as_fraction(0.3) == F(3, 10)
    assert as_fraction("1/3") == F(1, 3)
    assert as_fraction(2) == F(2)


def test_exterior_bound_cannot_carry_v_gain():
    with pytest.raises(RuleError):
        DecayBound(0, 1, 0, "exterior")
    assert DecayBound(1, 0, 0, "exterior").p_r == 1
    with pytest.raises(DomainError):
        DecayBound(0, 0, 0, "nowhere")


# -- single rules ------------------------------------------------------------------

def test_conversion_first_pass_example():
    # (2+, delta-, 1-delta) with delta = 1/2: phi <~ <r>^-1
    src = SourceTriple(X(2).plus(), X(HALF).minus(), 1 - HALF)
    out = rule_conversion(src)
    assert (out.p_r, out.p_v) == (1, 0)
    assert out.p_u.value == 0 and out.p_u <= X(0)
    assert out.region == "global"


def test_conversion_second_pass_example():
    shifted = slack_shift(SourceTriple(2, HALF, 2 - HALF))
    assert shifted.alpha == X(2).plus()
    out = rule_conversion(shifted)
    assert out.p_u.value == HALF and out.p_u <= X(HALF)


def test_conversion_eta_one_ambiguous():
    with pytest.raises(AmbiguousEtaError):
        rule_conversion(SourceTriple(X(2).plus(), 0, 1))


def test_conversion_needs_shift():
    with pytest.raises(RuleError):
        rule_conversion(SourceTriple(2, 1, 2))
    with pytest.raises(RuleError):
        slack_shift(SourceTriple(F(3, 2), 1, 2))
    assert slack_shift(SourceTriple(4, 0, 2)).alpha == X(3).minus()


@pytest.mark.parametrize("given_, want", [((1, 0, 0), (0, 1, 0)), ((1, 0, HALF), (0, 1, HALF))])
def test_interior_examples(given_, want):
    out = rule_interior(DecayBound(*given_))
    assert out.exps() == tuple(X(x) for x in want)
    assert out.region == "interior"


def test_interior_requires_r_decay():
    with pytest.raises(RuleError):
        rule_interior(DecayBound(HALF, 0, 0))


@pytest.mark.parametrize("b, near, far", [
    ((1, 0, 0), (2, 0, 0), (1, 0, 1)),
    ((0, 1, HALF), (1, 1, HALF), (0, 1, F(3, 2))),
    ((0, 0, 0), (1, 0, 0), (0, 0, 1)),
])
def test_derivative_examples(b, near, far):
    out = rule_derivative(DecayBound(*b))
    assert out["r<=u"] == DecayBound(*near)
    assert out["u<=r"] == DecayBound(*far)


def test_source_assembly_first_and_second_pass():
    d = HALF
    first = rule_source_assembly(INITIAL_BOUND, d)
    assert (first.alpha, first.beta, first.eta) == (X(2), X(d), X(1 - d))
    second = rule_source_assembly(DecayBound(0, 1, 0), d)
    assert second.alpha + second.beta == X(2 + d)
    assert second.eta == X(2 - d)


def test_source_assembly_caps_near_cone_factor():
    assert rule_source_assembly(INITIAL_BOUND, 2) == rule_source_assembly(INITIAL_BOUND, 1)
    assert rule_source_assembly(DecayBound(0, 1, 1), 2) == rule_source_assembly(DecayBound(0, 1, 1), 1)


def test_source_assembly_contract():
    with pytest.raises(RuleError):
        rule_source_assembly(DecayBound(0, 1, 0, "interior"), HALF)
    with pytest.raises(RuleError):
        rule_source_assembly(INITIAL_BOUND, HALF, branch="delta>=1")
    with pytest.raises(DomainError):
        rule_source_assembly(INITIAL_BOUND, 0)


def test_cone_rule_table_differential():
    # with beta = 0 the d_t table is one <u> power better than conversion on G
    g = SourceTriple(F(5, 2), 0, F(5, 2))
    conv = rule_conversion(g)
    cone = rule_cone(SourceTriple(F(5, 2), 0, F(7, 2)))
    assert cone.p_u - conv.p_u == X(1)
    trace = RuleTrace()
    assert rule_cone(SourceTriple(X(2).plus(), X(HALF).minus(), F(3, 2)), trace) is None
    assert trace.steps[-1].rule == "cone_deferred"


# -- the driver --------------------------------------------------------------------

KAPPA_DELTAS = [F(3 * k, 20) for k in range(1, 21)]


@pytest.mark.parametrize("delta", KAPPA_DELTAS, ids=str)
def test_kappa_law(delta):
    res = run_iteration(delta)
    assert res.bound == DecayBound(0, 1, min(delta, F(1)))
    assert res.bound.p_u.eps == 0
    assert res.passes <= 3


@pytest.mark.parametrize("delta, want", [(F(3, 10), F(3, 10)), (F(3, 2), F(1)), (F(1), F(1))])
def test_run_examples(delta, want):
    assert run_iteration(delta).bound.exps() == (X(0), X(1), X(want))


def test_delta_one_uses_large_branch():
    res = run_iteration(1)
    notes = [s.note for s in res.trace.steps if s.rule == "source_assembly"]
    assert notes and all("dominated" in n for n in notes)


def test_total_decay_never_decreases():
    for delta in KAPPA_DELTAS:
        bounds = [INITIAL_BOUND] + run_iteration(delta).trace.bounds()
        totals = [b.p_v + b.p_u for b in bounds]
        assert all(a <= b for a, b in zip(totals, totals[1:]))


@pytest.mark.parametrize("delta", [F(1, 5), HALF, F(1), F(5, 2)], ids=str)
def test_fixed_point_idempotent(delta):
    res = run_iteration(delta)
    again = run_iteration(delta, start=res.bound)
    assert again.bound == res.bound
    assert again.passes == 0


def test_branch_consistency_below_one():
    lo = run_iteration(1 - F(1, 1024)).bound
    hi = run_iteration(1).bound
    assert (lo.p_r, lo.p_v) == (hi.p_r, hi.p_v)
    assert hi.p_u - lo.p_u == X(F(1, 1024))


def test_cone_ordering_irrelevant():
    for delta in KAPPA_DELTAS:
        assert run_iteration(delta, cone_pass=2).bound == run_iteration(delta, cone_pass=3).bound


def test_prime_operator_reaches_kappa():
    assert linear_part_bound("Pprime").p_u == X(1).plus()
    for delta in (F(3, 10), F(1), F(2)):
        assert run_iteration(delta, "Pprime").bound.p_u == X(min(delta, F(1)))


def test_non_termination_and_domain():
    with pytest.raises(NonTerminationError):
        run_iteration(2, max_passes=2)
    with pytest.raises(DomainError):
        run_iteration(HALF, max_passes=1)
    with pytest.raises(DomainError):
        run_iteration(0)
    with pytest.raises(DomainError):
        run_iteration(HALF, "Q")
    with pytest.raises(DomainError):
        run_iteration(HALF, cone_pass=4)


def test_trace_json_and_replay():
    a = run_iteration(F(7, 10))
    b = run_iteration(F(7, 10))
    assert a.trace.to_json() == b.trace.to_json()
    steps = json.loads(a.trace.to_json())
    assert all({"rule", "in", "out"} <= set(s) for s in steps)
    assert steps[0]["rule"] == "initial"
    shift = next(s for s in steps if s["rule"] == "slack_shift")
    assert "r <= t" in shift["note"]
    assert json.loads(json.dumps(a.to_dict()))["bound"]["p_u"] == "7/10"


@settings(max_examples=60, deadline=None)
@given(st.fractions(min_value=F(1, 100), max_value=3, max_denominator=1000))
def test_kappa_law_property(delta):
    res = run_iteration(delta)
    assert res.bound == DecayBound(0, 1, min(delta, F(1)))
    assert res.passes <= 3
