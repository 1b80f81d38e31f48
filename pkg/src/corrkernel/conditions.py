"""Exact boundedness verdicts for multilinear fractional integrals.

For a kernel  prod_{i<j} |x_i - x_j|^{-alpha_ij}  in dimension n and
reciprocal exponents r_i = 1/p_i the functional is bounded iff

  (i)   sum r_i + sum alpha_ij / n = m                       (homogeneity)
  (ii)  sum_J alpha_ij < (|J|-1) n   for every |J| >= 2       (integrability)
  (iii) for each nonempty proper I, either
        (a) sum_I r_i + sum_I alpha_ij / n < |I|, or
        (b) equality, sum_{I^c} r_i >= 1, and the weighted problem on I^c
            with beta_i = sum_{u in I} alpha_iu satisfies
            sum_J (r_i + beta_i/n) + sum_J alpha_ij / n <= |J|  for J in I^c.
"""
from dataclasses import dataclass
from fractions import Fraction

from .kernel import (
    KernelSpec, LebesgueProfile, PreconditionError, SpecError, cross_sum, decompose_blocks,
    fmt_mask, fmt_rational, full_mask, members, popcount, submasks,
    subset_alpha_sum, subset_recip_sum,
)
from . import linsys

STRICT_A = "strict_a"
EQUALITY_B = "equality_b"
VIOLATED = "violated"

BOUNDED = "bounded"
UNBOUNDED = "unbounded"
OUT_OF_SCOPE = "out_of_scope"



def _check_pair(spec, profile):
    if profile is not None and profile.m != spec.m:
        raise SpecError(f"profile has {profile.m} entries, spec has {spec.m} points", "p")


# -- (i) and (ii) ------------------------------------------------------------

@dataclass(frozen=True)
class Homogeneity:
    holds: bool
    lhs: Fraction
    rhs: Fraction

    def to_json(self):
        return {"holds": self.holds, "lhs": fmt_rational(self.lhs), "rhs": fmt_rational(self.rhs)}


def check_homogeneity(spec, profile):
    _check_pair(spec, profile)
    lhs = sum(profile.r, Fraction(0)) + spec.total() / spec.n
    rhs = Fraction(spec.m)
    return Homogeneity(lhs == rhs, lhs, rhs)


def dilation_exponent(spec, profile):
    """Exponent of lambda picked up by Lambda(f(lambda .)) / prod ||f(lambda .)||.

    Zero exactly when homogeneity holds.
    """
    return spec.n * spec.m - spec.n * sum(profile.r, Fraction(0)) - spec.total()


def integrability_slack(spec, J):
    return (popcount(J) - 1) * spec.n - subset_alpha_sum(spec, J)


def check_integrability(spec):
    """Every J with |J| >= 2 whose alpha-sum reaches (|J|-1) n."""
    return [J for J in range(1, 1 << spec.m)
            if popcount(J) >= 2 and integrability_slack(spec, J) <= 0]


# -- (iii) -------------------------------------------------------------------

@dataclass(frozen=True)
class NestedCheck:
    subset: int
    lhs: Fraction
    rhs: Fraction

    @property
    def ok(self):
        return self.lhs <= self.rhs

    def to_json(self):
        return {"J": fmt_mask(self.subset), "lhs": fmt_rational(self.lhs),
                "rhs": fmt_rational(self.rhs), "ok": self.ok}


@dataclass(frozen=True)
class IIIResult:
    """Outcome of condition (iii) for one subset I.

    ``reason`` for violations: 'inequality' (sum exceeds |I|), 'mass'
    (equality but sum_{I^c} r < 1) or 'nested' (equality, mass fine, some
    nested check fails).
    """
    kind: str
    value: Fraction
    size: int
    complement_mass: Fraction = None
    nested: tuple = ()
    reason: str = ""

    def to_json(self):
        doc = {"kind": self.kind, "lhs": fmt_rational(self.value), "rhs": fmt_rational(self.size)}
        if self.complement_mass is not None:
            doc["complement_mass"] = fmt_rational(self.complement_mass)
            doc["nested_checks"] = [c.to_json() for c in self.nested]
        if self.reason:
            doc["reason"] = self.reason
        return doc


def iii_value(spec, profile, I):
    return subset_recip_sum(profile, I) + subset_alpha_sum(spec, I) / spec.n


def nested_checks(spec, profile, I):
    """The weighted-problem inequalities over nonempty J inside the complement of I."""
    comp = full_mask(spec.m) & ~I
    out = []
    for J in submasks(comp):
        lhs = sum((profile.r[i] + cross_sum(spec, i, I) / spec.n for i in members(J)), Fraction(0))
        lhs += subset_alpha_sum(spec, J) / spec.n
        out.append(NestedCheck(J, lhs, Fraction(popcount(J))))
    return tuple(out)


def classify_iii(spec, profile, I):
    value = iii_value(spec, profile, I)
    size = popcount(I)
    if value < size:
        return IIIResult(STRICT_A, value, size)
    if value > size:
        return IIIResult(VIOLATED, value, size, reason="inequality")
    comp = full_mask(spec.m) & ~I
    mass = subset_recip_sum(profile, comp)
    checks = nested_checks(spec, profile, I)
    if mass < 1:
        return IIIResult(VIOLATED, value, size, mass, checks, "mass")
    if not all(c.ok for c in checks):
        return IIIResult(VIOLATED, value, size, mass, checks, "nested")
    return IIIResult(EQUALITY_B, value, size, mass, checks)


def proper_subsets(m):
    full = full_mask(m)
    return [I for I in range(1, full)]


def check_condition_iii(spec, profile):
    """Map from every nonempty proper subset mask to its IIIResult."""
    _check_pair(spec, profile)
    if not profile.is_interior():
        raise PreconditionError("condition (iii) needs every r_i strictly inside (0, 1)")
    return {I: classify_iii(spec, profile, I) for I in proper_subsets(spec.m)}


# -- witnesses ---------------------------------------------------------------

DILATION = "dilation"
POWER_CUTOFF = "power_cutoff"
LOG_TAIL = "log_tail"


@dataclass(frozen=True)
class WitnessRecipe:
    """Test functions realizing the failure of a condition.

    dilation:     f_i(x) = f(lambda x) with lambda -> 0 or infinity
    power_cutoff: f_i = 1_{|y|<=1} |y|^{-lambda_i} on ``subset``, 1_{B_1} elsewhere
    log_tail:     f_i = |y|^{-n r_i} 1_{|y|>2} (log|y|)^{-1/lambda_i} on ``subset``,
                  1_{B_1} elsewhere
    """
    kind: str
    subset: int = 0
    lambdas: tuple = ()
    exponent: Fraction = None
    weights: tuple = ()
    description: str = ""

    def to_json(self):
        doc = {"kind": self.kind, "description": self.description}
        if self.kind == DILATION:
            doc["exponent"] = fmt_rational(self.exponent)
        else:
            doc["subset"] = fmt_mask(self.subset)
            doc["lambda"] = [fmt_rational(x) for x in self.lambdas]
        if self.weights:
            doc["weights"] = [fmt_rational(x) for x in self.weights]
        return doc


def power_cutoff_lambdas(spec, profile, J0, extra=None):
    """lambda_i = r_i T / sum_{J0} r with T = |J0| n - sum_{J0} alpha (- extra).

    Entries landing outside (0, n r_i) are replaced by n r_i / 2.
    """
    n = spec.n
    target = popcount(J0) * n - subset_alpha_sum(spec, J0) - (extra or 0)
    mass = subset_recip_sum(profile, J0)
    out = []
    for i in members(J0):
        hi = n * profile.r[i]
        lam = profile.r[i] * target / mass if mass > 0 else Fraction(0)
        if not 0 < lam < hi:
            lam = hi / 2
        out.append(lam)
    return tuple(out)


def log_tail_lambdas(profile, Jc):
    """1/lambda_i = r_i + (1 - sum_{Jc} r)/(2|Jc|): lambda_i < p_i and sum 1/lambda_i < 1."""
    gap = (1 - subset_recip_sum(profile, Jc)) / (2 * popcount(Jc))
    return tuple(1 / (profile.r[i] + gap) for i in members(Jc))


def _witness_for_iii(spec, profile, I, res):
    if res.reason == "inequality":
        lam = power_cutoff_lambdas(spec, profile, I)
        return WitnessRecipe(POWER_CUTOFF, I, lam,
                             description="power cutoffs on the subset exceed its scaling budget")
    comp = full_mask(spec.m) & ~I
    if res.reason == "mass":
        lam = log_tail_lambdas(profile, comp)
        return WitnessRecipe(LOG_TAIL, comp, lam,
                             description="log-tempered tails on the complement of an equality subset")
    bad = next(c for c in res.nested if not c.ok)
    beta = tuple(cross_sum(spec, i, I) for i in members(bad.subset))
    lam = power_cutoff_lambdas(spec, profile, bad.subset, sum(beta, Fraction(0)))
    return WitnessRecipe(POWER_CUTOFF, bad.subset, lam, weights=beta,
                         description="power cutoffs in the weighted problem left by an equality subset")


# -- report ------------------------------------------------------------------

@dataclass(frozen=True)
class ConditionReport:
    homogeneity: Homogeneity
    integrability_violations: tuple
    iii_results: dict
    verdict: str
    witness: WitnessRecipe = None
    reason: str = ""
    first_failure: str = ""

    @property
    def bounded(self):
        return self.verdict == BOUNDED

    def to_json(self):
        doc = {
            "verdict": self.verdict,
            "homogeneity": self.homogeneity.to_json(),
            "integrability_violations": [fmt_mask(J) for J in self.integrability_violations],
            "condition_iii": [dict(I=fmt_mask(I), **res.to_json())
                              for I, res in sorted(self.iii_results.items(),
                                                   key=lambda kv: (popcount(kv[0]), fmt_mask(kv[0])))],
        }
        if self.first_failure:
            doc["first_failure"] = self.first_failure
        if self.witness is not None:
            doc["witness"] = self.witness.to_json()
        if self.reason:
            doc["reason"] = self.reason
        return doc


def _subset_order(m):
    # by size, then lexicographic 1-based lists: deterministic "first" subset
    return sorted(range(1, 1 << m), key=lambda J: (popcount(J), fmt_mask(J)))


def decide_boundedness(spec, profile):
    if not isinstance(spec, KernelSpec) or not isinstance(profile, LebesgueProfile):
        raise SpecError("expected a KernelSpec and a LebesgueProfile")
    _check_pair(spec, profile)
    hom = check_homogeneity(spec, profile)
    order = _subset_order(spec.m)
    viol = set(check_integrability(spec))
    integ = tuple(J for J in order if J in viol)
    if not profile.is_interior():
        bad = [fmt_mask(1 << i)[0] for i in range(spec.m) if not 0 < profile.r[i] < 1]
        return ConditionReport(hom, integ, {}, OUT_OF_SCOPE,
                               reason=f"endpoint exponents at indices {bad}; use the endpoint check")
    iii = check_condition_iii(spec, profile)
    if not hom.holds:
        w = WitnessRecipe(DILATION, exponent=dilation_exponent(spec, profile),
                          description="dilations f(lambda x) break the scaling balance")
        return ConditionReport(hom, integ, iii, UNBOUNDED, w, first_failure="homogeneity")
    if integ:
        J0 = integ[0]
        w = WitnessRecipe(POWER_CUTOFF, J0, power_cutoff_lambdas(spec, profile, J0),
                          description="the Selberg integral over the subset diverges")
        return ConditionReport(hom, integ, iii, UNBOUNDED, w, first_failure="integrability")
    full = full_mask(spec.m)
    for I in order:
        if I == full:
            continue
        res = iii[I]
        if res.kind == VIOLATED:
            w = _witness_for_iii(spec, profile, I, res)
            return ConditionReport(hom, integ, iii, UNBOUNDED, w,
                                   first_failure=f"iii:{res.reason}")
    return ConditionReport(hom, integ, iii, BOUNDED)


# -- endpoint exponents -------------------------------------------------------

L1_ELIGIBLE = "l1_eligible"
BMO_ELIGIBLE = "bmo_eligible"
NOT_ELIGIBLE = "not_eligible"


@dataclass(frozen=True)
class EndpointResult:
    status: str
    index: int
    reason: str = ""

    def to_json(self):
        doc = {"status": self.status, "endpoint_index": self.index + 1}
        if self.reason:
            doc["reason"] = self.reason
        return doc


def check_endpoint(spec, profile):
    """Eligibility for the L-infinity (r=0) or p=1 (r=1) endpoint estimates.

    Exactly one exponent may sit at an endpoint; it is conventionally the
    last one but any position is accepted.
    """
    _check_pair(spec, profile)
    ends = profile.endpoints()
    if len(ends) != 1:
        raise PreconditionError(f"expected exactly one endpoint exponent, found {len(ends)}")
    e = ends[0]
    at_one = profile.r[e] == 1
    hom = check_homogeneity(spec, profile)
    if not hom.holds:
        return EndpointResult(NOT_ELIGIBLE, e, f"homogeneity fails ({fmt_rational(hom.lhs)} != {spec.m})")
    integ = check_integrability(spec)
    if integ:
        return EndpointResult(NOT_ELIGIBLE, e, f"integrability fails on {fmt_mask(min(integ))}")
    for I in _subset_order(spec.m):
        if I == full_mask(spec.m) or (at_one and I == 1 << e):
            continue
        if iii_value(spec, profile, I) >= popcount(I):
            return EndpointResult(NOT_ELIGIBLE, e, f"strict (iii-a) fails on {fmt_mask(I)}")
    return EndpointResult(BMO_ELIGIBLE if at_one else L1_ELIGIBLE, e)


# -- weighted reductions ------------------------------------------------------

@dataclass(frozen=True)
class Restriction:
    """A sub-problem on ``indices`` (0-based, original numbering)."""
    n: int
    indices: tuple
    alpha: tuple
    r: tuple
    beta: tuple = ()

    def to_json(self):
        doc = {"indices": [i + 1 for i in self.indices],
               "alpha": [[fmt_rational(a) for a in row] for row in self.alpha],
               "r": [fmt_rational(x) for x in self.r]}
        if self.beta:
            doc["beta"] = [fmt_rational(b) for b in self.beta]
        return doc


@dataclass(frozen=True)
class WeightedProblems:
    inner: Restriction
    outer: Restriction
    nested_ok: bool
    checks: tuple


def _restrict(spec, profile, mask, beta=()):
    idx = tuple(members(mask))
    return Restriction(spec.n, idx, tuple(tuple(spec.alpha[i][j] for j in idx) for i in idx),
                       tuple(profile.r[i] for i in idx), beta)


def derive_weighted_problems(spec, profile, J0):
    _check_pair(spec, profile)
    full = full_mask(spec.m)
    if not 0 < J0 < full:
        raise PreconditionError("J0 must be a nonempty proper subset")
    if iii_value(spec, profile, J0) != popcount(J0):
        raise PreconditionError(f"J0={fmt_mask(J0)} does not satisfy the equality")
    comp = full & ~J0
    beta = tuple(cross_sum(spec, i, J0) for i in members(comp))
    checks = nested_checks(spec, profile, J0)
    return WeightedProblems(_restrict(spec, profile, J0), _restrict(spec, profile, comp, beta),
                            all(c.ok for c in checks), checks)


# -- admissible profiles -----------------------------------------------------

def profile_system(spec):
    """Strict system for r: sum r = m - sum alpha/n, r_i > 0, strict (iii-a) on proper J."""
    return linsys.build_system("VI2", spec)


@dataclass(frozen=True)
class ProfileSearch:
    profile: LebesgueProfile
    outcome: object
    blocks: tuple


def search_admissible_profile(spec):
    """Like find_admissible_profile but keeps the solver outcome for audit."""
    viol = check_integrability(spec)
    if viol:
        raise PreconditionError(f"integrability fails on {fmt_mask(viol[0])}")
    blocks = tuple(decompose_blocks(spec))
    if len(blocks) > 1:
        # per-block mass sum_B r = |B| - sum_B alpha/n already makes the block
        # an equality subset, so no combined profile can be strict on it
        outcomes = []
        for B in blocks:
            if popcount(B) == 1:
                outcomes.append(None)
                continue
            outcomes.append(linsys.solve(profile_system(spec.restrict(B))))
        return ProfileSearch(None, tuple(outcomes), blocks)
    outcome = linsys.solve(profile_system(spec))
    if not outcome.feasible:
        return ProfileSearch(None, outcome, blocks)
    return ProfileSearch(LebesgueProfile(outcome.x), outcome, blocks)


def find_admissible_profile(spec):
    """Interior profile with (i) and strict (iii-a) on every proper subset, or None."""
    return search_admissible_profile(spec).profile
