"""Weighted set families and the union/intersection merge process.

A state assigns nonnegative rational weights mu_J to subsets J of a ground
set.  A merge of J1, J2 moves w = min(mu_J1, mu_J2) from both onto the union
and, when it is a member of the family, onto the intersection.  Pair slacks
lambda_ij = sum_{J containing i,j} mu_J - drive never decrease, and neither
does Omega = sum of mu_J over J containing Theta.
"""
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations

from .kernel import fmt_mask, fmt_rational, members, popcount, subset_alpha_sum, subset_recip_sum

FM = "Fm"
FM_BAR = "FmBar"
ALL_NONEMPTY = "AllNonempty"
FAMILY_KINDS = (FM, FM_BAR, ALL_NONEMPTY)


class MergeError(ValueError):
    pass


def in_family(kind, ground, theta, J):
    if not J or J & ~ground:
        return False
    if kind == ALL_NONEMPTY:
        return True
    return popcount(J & theta) >= 2


@dataclass(frozen=True)
class MeasureState:
    ground: int
    theta: int
    family_kind: str
    mu: tuple          # sorted ((mask, weight), ...) with weight > 0
    drive: Fraction = Fraction(1)

    def __post_init__(self):
        if self.family_kind not in FAMILY_KINDS:
            raise MergeError(f"unknown family kind {self.family_kind!r}")
        if self.theta & ~self.ground:
            raise MergeError("Theta must lie inside the ground set")
        items = dict(self.mu) if not isinstance(self.mu, dict) else self.mu
        clean = {}
        for J, w in items.items():
            w = Fraction(w)
            if w < 0:
                raise MergeError(f"negative weight on {fmt_mask(J)}")
            if w == 0:
                continue
            if not in_family(self.family_kind, self.ground, self.theta, J):
                raise MergeError(f"{fmt_mask(J)} is outside the {self.family_kind} family")
            clean[J] = w
        object.__setattr__(self, "mu", tuple(sorted(clean.items())))
        object.__setattr__(self, "drive", Fraction(self.drive))

    @property
    def weights(self):
        return dict(self.mu)

    def support(self):
        return [J for J, _ in self.mu]

    def weight(self, J):
        return self.weights.get(J, Fraction(0))

    def with_weights(self, weights):
        return MeasureState(self.ground, self.theta, self.family_kind, weights, self.drive)

    def to_json(self):
        return {"ground": fmt_mask(self.ground), "theta": fmt_mask(self.theta),
                "family": self.family_kind, "drive": fmt_rational(self.drive),
                "mu": [{"J": fmt_mask(J), "w": fmt_rational(w)} for J, w in self.mu]}


def pair_slacks(state):
    """lambda_ij for i<j in Theta, keyed by (i, j) 0-based."""
    th = members(state.theta)
    out = {}
    for a, i in enumerate(th):
        for j in th[a + 1:]:
            both = (1 << i) | (1 << j)
            out[(i, j)] = sum((w for J, w in state.mu if J & both == both), Fraction(0)) - state.drive
    return out


def min_pair_slack(state):
    lam = pair_slacks(state)
    return min(lam.values()) if lam else None


def element_mass(state, i):
    return sum((w for J, w in state.mu if J >> i & 1), Fraction(0))


def total_mass(state):
    return sum((w for _, w in state.mu), Fraction(0))


def is_nested(J1, J2):
    return J1 & J2 == J1 or J1 & J2 == J2


def merge_step(state, J1, J2):
    weights = state.weights
    w1, w2 = weights.get(J1, 0), weights.get(J2, 0)
    if not (w1 > 0 and w2 > 0):
        raise MergeError("both subsets need positive weight")
    if J1 == J2:
        raise MergeError("merging a subset with itself")
    inter, union = J1 & J2, J1 | J2
    if state.family_kind != ALL_NONEMPTY and not inter:
        raise MergeError("Fm merges need intersecting subsets")
    if is_nested(J1, J2):
        return state
    w = min(w1, w2)
    weights[J1] = w1 - w
    weights[J2] = w2 - w
    weights[union] = weights.get(union, Fraction(0)) + w
    if inter and in_family(state.family_kind, state.ground, state.theta, inter):
        weights[inter] = weights.get(inter, Fraction(0)) + w
    return state.with_weights(weights)


def merge_type(state, J1, J2):
    """'I' when the intersection stays in the family, 'II' when it is dropped,
    'III' for the all-nonempty family, 'nested' for no-op pairs."""
    if is_nested(J1, J2):
        return "nested"
    if state.family_kind == ALL_NONEMPTY:
        return "III"
    inter = J1 & J2
    return "I" if in_family(state.family_kind, state.ground, state.theta, inter) else "II"


def is_stable(state):
    sup = state.support()
    return all(not (a & b) or is_nested(a, b) for a, b in combinations(sup, 2))


def _components(B):
    B = list(B)
    parent = list(range(len(B)))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in combinations(range(len(B)), 2):
        if B[a] & B[b]:
            parent[find(a)] = find(b)
    comps = {}
    for i, J in enumerate(B):
        comps.setdefault(find(i), []).append(J)
    return list(comps.values())


def covering_chain_exists(B, theta):
    """True iff a chain of pairwise-linked sets from B covers theta.

    Any connected piece of the intersection graph can be ordered into a
    chain, so it suffices to look at unions of connected components.
    """
    for comp in _components(B):
        union = 0
        for J in comp:
            union |= J
        if union & theta == theta:
            return True
    return False


def omega(state):
    th = state.theta
    return sum((w for J, w in state.mu if J & th == th), Fraction(0))


def b_class(state):
    th = state.theta
    return [J for J in state.support() if J & th != th]


def omega_stability_criterion(state):
    """True iff no merge sequence can raise omega (no covering chain in B)."""
    return not covering_chain_exists(b_class(state), state.theta)


@dataclass(frozen=True)
class ObjectiveSpec:
    coeffs: dict
    c0: Fraction

    def to_json(self):
        return {"c0": fmt_rational(self.c0),
                "c": [{"J": fmt_mask(J), "c": fmt_rational(c)} for J, c in sorted(self.coeffs.items())]}


def objective_value(state, obj):
    total = state.drive * obj.c0
    for J, w in state.mu:
        if J not in obj.coeffs:
            raise MergeError(f"no objective coefficient for {fmt_mask(J)}")
        total -= w * obj.coeffs[J]
    return total


def integrability_coefficient(spec, J):
    """(|J|-1) n - sum_J alpha, with the empty-set convention -n."""
    return (popcount(J) - 1) * spec.n - subset_alpha_sum(spec, J)


def scaling_coefficient(spec, profile, J):
    return popcount(J) * spec.n - subset_alpha_sum(spec, J) - spec.n * subset_recip_sum(profile, J)


def min_form_coefficient(spec, profile, J):
    return min(integrability_coefficient(spec, J), scaling_coefficient(spec, profile, J))


def size_coefficient(spec, J):
    """|J| - sum_J alpha / n; zero on the empty set, so dropping it costs nothing."""
    return popcount(J) - subset_alpha_sum(spec, J) / spec.n


def size_objective(spec, ground, c0):
    coeffs = {J: size_coefficient(spec, J) for J in range(1, ground + 1) if J & ground == J}
    return ObjectiveSpec(coeffs, Fraction(c0))


def integrability_objective(spec, ground, c0):
    coeffs = {J: integrability_coefficient(spec, J) for J in range(1, ground + 1) if J & ground == J}
    return ObjectiveSpec(coeffs, Fraction(c0))


def min_form_objective(spec, profile, ground, c0):
    coeffs = {J: min_form_coefficient(spec, profile, J)
              for J in range(1, ground + 1) if J & ground == J}
    return ObjectiveSpec(coeffs, Fraction(c0))


# -- greedy Omega maximization ------------------------------------------------

@dataclass(frozen=True)
class GreedyResult:
    final_state: MeasureState
    omega_value: Fraction
    reached_stable: bool
    steps: int
    ceiling: Fraction
    ceiling_reached: bool
    trace: tuple = field(default=(), compare=False)


def _candidate_pairs(state):
    sup = state.support()
    out = []
    for a, b in combinations(sup, 2):
        if a & b and not is_nested(a, b):
            out.append((a, b) if a < b else (b, a))
    return out


def _pair_key(p):
    a, b = p
    return (popcount(a) + popcount(b), a, b)


def choose_greedy_pair(state):
    cands = _candidate_pairs(state)
    if not cands:
        return None
    th = state.theta
    covering = []
    for comp in _components(b_class(state)):
        union = 0
        for J in comp:
            union |= J
        if union & th == th:
            covering.append(set(comp))
    preferred = [p for p in cands if any(p[0] in c and p[1] in c for c in covering)]
    pool = preferred or cands
    return min(pool, key=_pair_key)


def greedy_maximize_omega(state, max_steps=None):
    if max_steps is None:
        max_steps = 10 * 2 ** popcount(state.ground)
    if state.drive != 1:
        raise MergeError("the greedy process expects drive 1")
    lam0 = min_pair_slack(state)
    if lam0 is not None and lam0 < 0:
        raise MergeError("pair slacks must start nonnegative")
    ceiling = 1 + lam0 if lam0 is not None else None
    trace = []
    steps = 0
    while not is_stable(state) and steps < max_steps:
        pair = choose_greedy_pair(state)
        if pair is None:
            break
        state = merge_step(state, *pair)
        steps += 1
        trace.append(pair)
    om = omega(state)
    return GreedyResult(state, om, is_stable(state), steps, ceiling,
                        ceiling is not None and om >= ceiling, tuple(trace))


# -- exhaustive search (small instances) ------------------------------------------

def all_merge_pairs(state):
    sup = state.support()
    out = []
    for a, b in combinations(sup, 2):
        if is_nested(a, b):
            continue
        if state.family_kind != ALL_NONEMPTY and not a & b:
            continue
        out.append((a, b))
    return out


def omega_can_increase(state, depth):
    """Search every merge sequence of length <= depth for an Omega gain."""
    base = omega(state)
    seen = set()
    frontier = [state]
    for _ in range(depth):
        nxt = []
        for s in frontier:
            for a, b in all_merge_pairs(s):
                t = merge_step(s, a, b)
                if t.mu in seen:
                    continue
                if omega(t) > base:
                    return True
                seen.add(t.mu)
                nxt.append(t)
        frontier = nxt
        if not frontier:
            break
    return False


# -- replay -------------------------------------------------------------------

def replay(state, steps, objective=None):
    """Apply a list of (J1, J2) merges; returns trace rows."""
    rows = [_trace_row(0, None, None, state, objective)]
    for k, (a, b) in enumerate(steps, 1):
        state = merge_step(state, a, b)
        rows.append(_trace_row(k, a, b, state, objective))
    return state, rows


def _trace_row(k, a, b, state, objective):
    lam = min_pair_slack(state)
    row = {"step": k, "J1": fmt_mask(a) if a else None, "J2": fmt_mask(b) if b else None,
           "omega": fmt_rational(omega(state)),
           "lambda_min": fmt_rational(lam) if lam is not None else None}
    row["objective"] = fmt_rational(objective_value(state, objective)) if objective else None
    return row
