"""Exact feasibility for mixed strict/non-strict linear inequality systems.

A system  a_r . x  (<, <=, =)  b_r  is strictly feasible iff the program

    maximize t   s.t.  a_r . x + t <= b_r  (strict rows)
                       a_r . x     <= b_r  (non-strict rows, '=' split in two)
                       t <= 1

has optimum t* > 0.  The program is solved through its dual with a
hand-written tableau simplex over Fractions (Bland's rule).  When t* <= 0
the dual optimum is a transposition certificate: nonnegative multipliers
with  sum lam_r a_r = 0,  sum lam_r b_r <= 0  and positive mass on strict rows.
"""
from dataclasses import dataclass, field
from fractions import Fraction
import contextvars
import math
import os

from .kernel import (
    KernelSpec, LebesgueProfile, PreconditionError, fmt_mask, fmt_rational, full_mask, mask_of, members,
    popcount, subset_alpha_sum, subset_recip_sum,
)

LT, LE, EQ = "<", "<=", "="
_REL_ALIASES = {"<": LT, "<=": LE, "≤": LE, "=": EQ, "==": EQ}

BIT_BUDGET_ENV = "CORRKERNEL_RATIONAL_BITS"
DEFAULT_BIT_BUDGET = 4096


class ResourceError(RuntimeError):
    """Rational magnitudes exceeded the configured bit budget."""


class SystemError_(ValueError):
    pass


def bit_budget():
    raw = os.environ.get(BIT_BUDGET_ENV)
    if not raw:
        return DEFAULT_BIT_BUDGET
    try:
        value = int(raw)
    except ValueError:
        raise ResourceError(f"{BIT_BUDGET_ENV} must be an integer, got {raw!r}") from None
    if value < 8:
        raise ResourceError(f"{BIT_BUDGET_ENV} too small: {value}")
    return value


@dataclass(frozen=True)
class Row:
    coeffs: tuple
    rel: str
    rhs: Fraction
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(Fraction(c) for c in self.coeffs))
        object.__setattr__(self, "rhs", Fraction(self.rhs))
        rel = _REL_ALIASES.get(self.rel)
        if rel is None:
            raise SystemError_(f"unknown relation {self.rel!r}")
        object.__setattr__(self, "rel", rel)

    def lhs(self, x):
        return sum((c * v for c, v in zip(self.coeffs, x)), Fraction(0))

    def holds(self, x):
        v = self.lhs(x)
        if self.rel == LT:
            return v < self.rhs
        if self.rel == LE:
            return v <= self.rhs
        return v == self.rhs

    def slack(self, x):
        return self.rhs - self.lhs(x)


@dataclass(frozen=True)
class StrictLinearSystem:
    variables: tuple
    rows: tuple
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        object.__setattr__(self, "rows", tuple(self.rows))
        for r in self.rows:
            if len(r.coeffs) != len(self.variables):
                raise SystemError_(
                    f"row {r.label!r} has {len(r.coeffs)} coefficients, "
                    f"expected {len(self.variables)}")

    def to_json(self):
        doc = {
            "variables": list(self.variables),
            "rows": [{"label": r.label, "coeffs": [fmt_rational(c) for c in r.coeffs],
                      "rel": r.rel, "rhs": fmt_rational(r.rhs)} for r in self.rows],
        }
        if self.meta:
            doc["meta"] = self.meta
        return doc


@dataclass(frozen=True)
class Feasible:
    x: tuple
    t_star: Fraction

    feasible = True


@dataclass(frozen=True)
class Infeasible:
    """``certificate[r]`` is the multiplier of row r.

    Multipliers of '=' rows may be negative (they stand for the difference
    of the two one-sided copies).  ``nonstrict_infeasible`` marks the
    degenerate case where the non-strict rows alone are contradictory; then
    every strict multiplier is zero and sum lam*b < 0.
    """
    certificate: tuple
    nonstrict_infeasible: bool = False

    feasible = False


def outcome_to_json(system, outcome):
    if outcome.feasible:
        return {"feasible": True, "t_star": fmt_rational(outcome.t_star),
                "x": {v: fmt_rational(q) for v, q in zip(system.variables, outcome.x)}}
    return {"feasible": False, "nonstrict_infeasible": outcome.nonstrict_infeasible,
            "certificate": [{"row": r.label or str(k), "lambda": fmt_rational(c)}
                            for k, (r, c) in enumerate(zip(system.rows, outcome.certificate)) if c]}


def certificate_violations(system, cert):
    """Empty list iff ``cert`` is a valid transposition certificate."""
    out = []
    nv = len(system.variables)
    if len(cert) != len(system.rows):
        return ["certificate length mismatch"]
    combo = [Fraction(0)] * nv
    total = Fraction(0)
    strict_mass = Fraction(0)
    for lam, row in zip(cert, system.rows):
        if row.rel != EQ and lam < 0:
            out.append(f"negative multiplier on row {row.label!r}")
        if row.rel == LT:
            strict_mass += lam
        for j, c in enumerate(row.coeffs):
            combo[j] += lam * c
        total += lam * row.rhs
    if any(c != 0 for c in combo):
        out.append("sum lam*a is not zero")
    if strict_mass > 0:
        if total > 0:
            out.append("sum lam*b is positive")
    elif not total < 0:
        out.append("no strict multiplier and sum lam*b is not negative")
    return out


def outcome_violations(system, outcome):
    if outcome.feasible:
        if len(outcome.x) != len(system.variables):
            return ["solution length mismatch"]
        return [f"row {r.label!r} fails" for r in system.rows if not r.holds(outcome.x)]
    return certificate_violations(system, outcome.certificate)


# -- simplex ---------------------------------------------------------------

class _Tableau:
    def __init__(self, rows, rhs, cost, budget):
        self.a = rows          # list of lists
        self.b = rhs
        self.cost = cost
        self.budget = budget
        self.basis = []

    def _check(self, q):
        if q.numerator.bit_length() > self.budget or q.denominator.bit_length() > self.budget:
            raise ResourceError(f"rational exceeded {self.budget} bits during pivoting")

    def pivot(self, r, c):
        a, b = self.a, self.b
        prow = a[r]
        piv = prow[c]
        if piv != 1:
            inv = 1 / piv
            prow[:] = [v * inv for v in prow]
            b[r] *= inv
        self._check(b[r])
        for i, row in enumerate(a):
            if i == r:
                continue
            f = row[c]
            if f:
                row[:] = [v - f * p if p else v for v, p in zip(row, prow)]
                b[i] -= f * b[r]
                self._check(b[i])
        self.basis[r] = c

    def reduced_costs(self, cost, allowed):
        # d_j = c_j - c_B B^-1 A_j over the current tableau
        cb = [cost[j] for j in self.basis]
        out = {}
        for j in allowed:
            d = cost[j]
            for i, row in enumerate(self.a):
                if row[j] and cb[i]:
                    d -= cb[i] * row[j]
            out[j] = d
        return out

    def run(self, cost, allowed):
        """Minimize cost over the current basis.  Returns None or a ray column."""
        allowed = sorted(allowed)
        while True:
            basic = set(self.basis)
            d = self.reduced_costs(cost, [j for j in allowed if j not in basic])
            enter = next((j for j in allowed if j in d and d[j] < 0), None)
            if enter is None:
                return None
            best = None
            for i, row in enumerate(self.a):
                if row[enter] > 0:
                    ratio = self.b[i] / row[enter]
                    key = (ratio, self.basis[i])
                    if best is None or key < best[0]:
                        best = (key, i)
            if best is None:
                return enter
            self.pivot(best[1], enter)


def _independent_rows(matrix):
    """Indices of a maximal linearly independent subset of rows."""
    kept, reduced = [], []
    for idx, row in enumerate(matrix):
        v = list(row)
        for piv_col, base in reduced:
            f = v[piv_col]
            if f:
                v = [x - f * y for x, y in zip(v, base)]
        col = next((j for j, x in enumerate(v) if x), None)
        if col is None:
            continue
        inv = 1 / v[col]
        v = [x * inv for x in v]
        # keep earlier bases reduced against the new pivot
        reduced = [(pc, [x - bb[col] * y for x, y in zip(bb, v)]) for pc, bb in reduced]
        reduced.append((col, v))
        kept.append(idx)
    return kept


def _solve_square(matrix, rhs):
    """Solve matrix @ z = rhs exactly for a nonsingular square matrix."""
    n = len(matrix)
    aug = [list(row) + [rhs[i]] for i, row in enumerate(matrix)]
    for col in range(n):
        piv = next(r for r in range(col, n) if aug[r][col] != 0)
        aug[col], aug[piv] = aug[piv], aug[col]
        inv = 1 / aug[col][col]
        aug[col] = [v * inv for v in aug[col]]
        for r in range(n):
            if r != col and aug[r][col]:
                f = aug[r][col]
                aug[r] = [v - f * p for v, p in zip(aug[r], aug[col])]
    return [aug[r][n] for r in range(n)]


def solve(system):
    """Decide strict feasibility exactly; see the module docstring."""
    budget = bit_budget()
    nv = len(system.variables)
    # expanded one-sided rows: (orig index, sign, coeffs, rhs, strict)
    exp = []
    for k, row in enumerate(system.rows):
        if row.rel == EQ:
            exp.append((k, 1, row.coeffs, row.rhs, False))
            exp.append((k, -1, tuple(-c for c in row.coeffs), -row.rhs, False))
        else:
            exp.append((k, 1, row.coeffs, row.rhs, row.rel == LT))
    K = len(exp)
    ncols = K + 1                 # last dual column belongs to the t <= 1 row
    # dual equality rows: one per primal variable x_j, plus the t row
    dual_rows = [[e[2][j] for e in exp] + [Fraction(0)] for j in range(nv)]
    dual_rows.append([Fraction(1) if e[4] else Fraction(0) for e in exp] + [Fraction(1)])
    dual_rhs = [Fraction(0)] * nv + [Fraction(1)]
    keep = _independent_rows(dual_rows)
    if nv not in keep:            # t row is always independent (cap column)
        raise AssertionError("t row dropped")
    rows = [dual_rows[i] for i in keep]
    rhs = [dual_rhs[i] for i in keep]
    R = len(rows)
    # phase 1 with artificials
    art0 = ncols
    tab_rows = [row + [Fraction(1) if c == i else Fraction(0) for c in range(R)]
                for i, row in enumerate(rows)]
    cost1 = [Fraction(0)] * ncols + [Fraction(1)] * R
    tab = _Tableau(tab_rows, list(rhs), cost1, budget)
    tab.basis = [art0 + i for i in range(R)]
    ray = tab.run(cost1, range(ncols + R))
    if ray is not None or any(tab.b[i] for i, j in enumerate(tab.basis) if j >= art0):
        raise AssertionError("dual phase 1 failed; the cap row makes it feasible")
    for i, j in enumerate(tab.basis):
        if j >= art0:
            col = next((c for c in range(ncols) if tab.a[i][c] != 0 and c not in tab.basis), None)
            if col is None:
                raise AssertionError("dependent dual row survived the rank filter")
            tab.pivot(i, col)
    cost = [e[3] for e in exp] + [Fraction(1)] + [Fraction(0)] * R
    ray = tab.run(cost, range(ncols))
    if ray is not None:
        # unbounded dual: the ray certifies the non-strict rows contradictory
        d = [Fraction(0)] * ncols
        d[ray] = Fraction(1)
        for i, j in enumerate(tab.basis):
            d[j] = -tab.a[i][ray]
        return Infeasible(_collapse(system, exp, d), nonstrict_infeasible=True)
    y = [Fraction(0)] * ncols
    for i, j in enumerate(tab.basis):
        y[j] = tab.b[i]
    t_star = sum((cost[j] * y[j] for j in range(ncols)), Fraction(0))
    if t_star > 0:
        basis_cols = [[rows[i][j] for i in range(R)] for j in tab.basis]
        cb = [cost[j] for j in tab.basis]
        pi_kept = _solve_square(basis_cols, cb)
        z = [Fraction(0)] * (nv + 1)
        for idx, val in zip(keep, pi_kept):
            z[idx] = val
        x = tuple(z[:nv])
        if z[nv] != t_star or not all(r.holds(x) for r in system.rows):
            raise AssertionError("recovered primal point is not feasible")
        return Feasible(x, t_star)
    return Infeasible(_collapse(system, exp, y))


def _collapse(system, exp, y):
    cert = [Fraction(0)] * len(system.rows)
    for (k, sign, *_), val in zip(exp, y):
        cert[k] += sign * val
    # scale to the primitive integer vector; any positive multiple is valid
    lcm = 1
    for c in cert:
        lcm = lcm * c.denominator // math.gcd(lcm, c.denominator)
    ints = [int(c * lcm) for c in cert]
    g = 0
    for v in ints:
        g = math.gcd(g, v)
    return tuple(Fraction(v, g or 1) for v in ints)


# -- system construction helpers --------------------------------------------

class SystemBuilder:
    def __init__(self, variables):
        self.variables = list(variables)
        self.index = {v: i for i, v in enumerate(self.variables)}
        self.rows = []

    def add(self, terms, rel, rhs, label=""):
        coeffs = [Fraction(0)] * len(self.variables)
        for var, c in terms.items():
            coeffs[self.index[var]] += Fraction(c)
        self.rows.append(Row(coeffs, rel, rhs, label))

    def build(self, **meta):
        return StrictLinearSystem(self.variables, self.rows, meta)


def system_from_json(doc):
    variables = doc.get("variables", [])
    rows = [Row([Fraction(c) for c in r["coeffs"]], r["rel"], Fraction(r["rhs"]), r.get("label", ""))
            for r in doc.get("rows", [])]
    return StrictLinearSystem(variables, rows)


# -- named distribution systems ---------------------------------------------
#
# Index conventions: the eliminated variable is the last point (0-based
# ``last = m-1``), S is every other point, Theta the points of S coupled to
# the last one.  Pair variables d{i}_{j} (i<j in Theta, 1-based) carry extra
# kernel exponent, singleton variables d{i} carry extra reciprocal exponent.

KINDS = ("V1", "V2", "V3", "V4", "VI2", "VI3", "VI4", "VI5", "VI6")



def default_theta(spec):
    last = spec.m - 1
    return mask_of(i for i in range(last) if spec.alpha[i][last] > 0)


def pair_label(i, j):
    return f"d{i + 1}_{j + 1}"


def single_label(i):
    return f"d{i + 1}"


def _pairs(theta):
    idx = members(theta)
    return [(i, j) for a, i in enumerate(idx) for j in idx[a + 1:]]


def _pair_terms(J, theta, coef=1):
    inside = J & theta
    return {pair_label(i, j): coef for i, j in _pairs(inside)}


def _single_terms(J, theta, coef):
    return {single_label(i): coef for i in members(J & theta)}


def _mass(spec, theta):
    last = spec.m - 1
    return sum((spec.alpha[i][last] for i in members(theta)), Fraction(0))


def _need_profile(kind, profile, spec):
    if profile is None:
        raise PreconditionError(f"{kind} needs a Lebesgue profile")
    if profile.m != spec.m:
        raise PreconditionError("profile length does not match the kernel")


def build_system(kind, spec, profile=None, theta=None, fold_index=None):
    """Transcribe one of the named distribution systems.

    ``theta`` defaults to the points coupled to the last one; ``fold_index``
    (0-based) names the envelope term u for V2/V4/VI4 and the bumped point t
    for VI6.
    """
    if kind not in KINDS:
        raise PreconditionError(f"unknown system kind {kind!r}; expected one of {KINDS}")
    if kind == "VI2":
        return _vi2(spec)
    m, n = spec.m, spec.n
    last = m - 1
    full = full_mask(m)
    S = full & ~(1 << last)
    if theta is None:
        theta = default_theta(spec)
    if not theta or theta & ~S:
        raise PreconditionError("Theta must be a nonempty subset of the first m-1 points")
    alast = [spec.alpha[i][last] for i in range(m)]
    M = _mass(spec, theta)
    needs_u = kind in ("V2", "V4", "VI4", "VI6")
    u = fold_index
    if needs_u and (u is None or not theta >> u & 1):
        raise PreconditionError(f"{kind} needs a fold index inside Theta")

    if kind == "VI6":
        return _vi6(spec, profile, theta, u)

    pairs = [pair_label(i, j) for i, j in _pairs(theta)]
    singles = [single_label(i) for i in members(theta)] if kind in ("VI3", "VI4", "VI5") else []
    b = SystemBuilder(pairs + singles)
    for v in pairs + singles:
        b.add({v: -1}, LE, 0, f"{v}>=0")

    def A(J):
        return subset_alpha_sum(spec, J)

    def B(J):
        # alpha sum with the (u, last) coupling removed
        out = A(J)
        if u is not None and J >> u & 1 and J >> last & 1:
            out -= alast[u]
        return out

    if kind == "V1":
        if not M > n:
            raise PreconditionError("V1 needs sum_Theta alpha_{i,last} > n")
        b.add({v: 1 for v in pairs}, EQ, M - n, "mass")
        for J in range(1, S + 1):
            if J & S == J and popcount(J & theta) >= 2:
                b.add(_pair_terms(J, theta), LT, (popcount(J) - 1) * n - A(J), f"F{fmt_mask(J)}")
        return b.build(kind=kind, theta=fmt_mask(theta))

    if kind == "V2":
        if not M - alast[u] > n:
            raise PreconditionError("V2 needs the Theta mass without u to exceed n")
        b.add({v: 1 for v in pairs}, EQ, alast[u], "mass")
        for J in range(1, full + 1):
            if popcount(J & theta) >= 2:
                b.add(_pair_terms(J, theta), LT, (popcount(J) - 1) * n - B(J), f"F{fmt_mask(J)}")
        return b.build(kind=kind, theta=fmt_mask(theta), u=u + 1)

    _need_profile(kind, profile, spec)
    R = lambda J: subset_recip_sum(profile, J)  # noqa: E731

    if kind == "V3":
        if profile.r[last] != 0:
            raise PreconditionError("V3 needs p = infinity at the last point")
        if not M > n:
            raise PreconditionError("V3 needs sum_Theta alpha_{i,last} > n")
        b.add({v: 1 for v in pairs}, EQ, M - n, "mass")
        for J in range(1, S + 1):
            if J & S == J and popcount(J & theta) >= 2:
                bound = min((popcount(J) - 1) * n - A(J), popcount(J) * n - A(J) - n * R(J))
                b.add(_pair_terms(J, theta), LE if J == S else LT, bound,
                      f"{'iv' if J == S else 'F'}{fmt_mask(J)}")
        return b.build(kind=kind, theta=fmt_mask(theta))

    if kind == "V4":
        if profile.r[last] != 0:
            raise PreconditionError("V4 needs p = infinity at the last point")
        if not M - alast[u] > n:
            raise PreconditionError("V4 needs the Theta mass without u to exceed n")
        b.add({v: 1 for v in pairs}, EQ, alast[u], "mass")
        for J in range(1, full + 1):
            if popcount(J & theta) >= 2:
                bound = min((popcount(J) - 1) * n - B(J), popcount(J) * n - B(J) - n * R(J))
                b.add(_pair_terms(J, theta), LE if J == full else LT, bound,
                      f"{'iv' if J == full else 'F'}{fmt_mask(J)}")
        return b.build(kind=kind, theta=fmt_mask(theta), u=u + 1)

    rl = profile.r[last]
    if kind == "VI3":
        total = M + n * rl
        if not total > n:
            raise PreconditionError("VI3 needs sum_Theta alpha_{i,last} + n r_last > n")
        b.add({**{v: 1 for v in pairs}, **{v: n for v in singles}}, EQ, total - n, "mass")
        for J in range(1, S + 1):
            if J & S != J:
                continue
            if popcount(J & theta) >= 2:
                b.add(_pair_terms(J, theta), LT, (popcount(J) - 1) * n - A(J), f"F{fmt_mask(J)}")
            if popcount(J & theta) >= 1 and J != S:
                b.add({**_pair_terms(J, theta), **_single_terms(J, theta, n)}, LT,
                      popcount(J) * n - A(J) - n * R(J), f"G{fmt_mask(J)}")
        return b.build(kind=kind, theta=fmt_mask(theta))

    if kind == "VI4":
        if not M - alast[u] + n * rl > n:
            raise PreconditionError("VI4 needs the Theta mass without u (plus n r_last) to exceed n")
        b.add({**{v: 1 for v in pairs}, **{v: n for v in singles}}, EQ, alast[u], "mass")
        for J in range(1, full + 1):
            if popcount(J & theta) >= 2:
                b.add(_pair_terms(J, theta), LT, (popcount(J) - 1) * n - B(J), f"F{fmt_mask(J)}")
            if popcount(J & theta) >= 1 and J != full:
                b.add({**_pair_terms(J, theta), **_single_terms(J, theta, n)}, LT,
                      popcount(J) * n - B(J) - n * R(J), f"G{fmt_mask(J)}")
        return b.build(kind=kind, theta=fmt_mask(theta), u=u + 1)

    # VI5
    if not M > n:
        raise PreconditionError("VI5 needs sum_Theta alpha_{i,last} > n")
    b.add({**{v: 1 for v in pairs}, **{v: n for v in singles}}, EQ, n * rl, "mass")
    for J in range(1, full + 1):
        if popcount(J & theta) >= 2:
            b.add(_pair_terms(J, theta), LT, (popcount(J) - 1) * n - A(J), f"F{fmt_mask(J)}")
        if popcount(J & theta) >= 1 and J != full:
            rj = R(J) - (rl if J >> last & 1 else 0)
            b.add({**_pair_terms(J, theta), **_single_terms(J, theta, n)}, LT,
                  popcount(J) * n - A(J) - n * rj, f"G{fmt_mask(J)}")
    return b.build(kind=kind, theta=fmt_mask(theta))


def _vi2(spec):
    """Profile system: sum d = m - sum alpha/n, d_i > 0, strict (iii-a) on proper J."""
    m, n = spec.m, spec.n
    names = [single_label(i) for i in range(m)]
    b = SystemBuilder(names)
    b.add({v: 1 for v in names}, EQ, m - spec.total() / n, "mass")
    for i, v in enumerate(names):
        b.add({v: -1}, LT, 0, f"{v}>0")
    for J in range(1, full_mask(m)):
        b.add({names[i]: 1 for i in members(J)}, LT,
              popcount(J) - subset_alpha_sum(spec, J) / n, f"J{fmt_mask(J)}")
    return b.build(kind="VI2")


def _vi6(spec, profile, theta, t):
    _need_profile("VI6", profile, spec)
    m, n = spec.m, spec.n
    last = m - 1
    if profile.r[last] != 1:
        raise PreconditionError("VI6 needs p = 1 at the last point")
    S = full_mask(m) & ~(1 << last)
    names = [single_label(i) for i in range(last)]
    b = SystemBuilder(names)
    for i, v in enumerate(names):
        b.add({v: -1}, LE, -profile.r[i], f"{v}>=r")
    for i, v in enumerate(names):
        a = spec.alpha[i][last]
        if a > 0:
            b.add({v: 1}, LT, profile.r[i] + (a + (1 if i == t else 0)) / Fraction(n), f"{v}<bound")
        else:
            b.add({v: 1}, LE, profile.r[i] + a / Fraction(n), f"{v}<=bound")
    b.add({v: 1 for v in names}, EQ, last - subset_alpha_sum(spec, S) / n, "mass")
    for J in range(1, S):
        if J & S == J:
            b.add({names[i]: 1 for i in members(J)}, LT,
                  popcount(J) - subset_alpha_sum(spec, J) / n, f"J{fmt_mask(J)}")
    return b.build(kind="VI6", theta=fmt_mask(theta), t=t + 1)


# -- variable folding ----------------------------------------------------------

INTEGRABILITY = "integrability"
LINFTY = "linfty"
WEAK_POWER = "weak_power"
MODES = (INTEGRABILITY, LINFTY, WEAK_POWER)


class FoldError(RuntimeError):
    """A distribution system came out infeasible; carries the certificate."""

    def __init__(self, message, system=None, outcome=None):
        super().__init__(message)
        self.system = system
        self.outcome = outcome


@dataclass(frozen=True)
class FoldResult:
    """One reduced problem on the first m-1 points, with the steps that made it."""
    spec: KernelSpec
    profile: LebesgueProfile
    steps: tuple

    def to_json(self):
        doc = {"n": self.spec.n,
               "alpha": [[fmt_rational(a) for a in row] for row in self.spec.alpha]}
        if self.profile is not None:
            doc["p"] = self.profile.p_strings()
        doc["fold"] = list(self.steps)
        return doc


def _mutable(spec):
    return [list(row) for row in spec.alpha]


def _set(a, i, j, v):
    a[i][j] = a[j][i] = v


def _drop_last(a, n):
    k = len(a) - 1
    return KernelSpec(n, [row[:k] for row in a[:k]])


_solved = contextvars.ContextVar("solved_systems", default=None)


def _solve_or_raise(system):
    out = solve(system)
    log = _solved.get()
    if log is not None:
        log.append((system, out))
    if not out.feasible:
        raise FoldError(f"system {system.meta.get('kind')} is infeasible", system, out)
    return out


def _values(system, x):
    return dict(zip(system.variables, x))


def _strict_min_slack(system, x):
    return min((r.slack(x) for r in system.rows if r.rel == LT), default=None)


def _step(kind, system, x, **extra):
    doc = {"system": kind,
           "delta": {v: fmt_rational(q) for v, q in zip(system.variables, x) if q}}
    for key, val in extra.items():
        doc[key] = fmt_rational(val) if isinstance(val, Fraction) else val
    return doc


def _apply_pairs(a, theta, vals, sign=1):
    for i, j in _pairs(theta):
        d = vals.get(pair_label(i, j), Fraction(0))
        if d:
            _set(a, i, j, a[i][j] + sign * d)


def _epsilon(system, x, cap):
    # half the smallest strict slack at the solved point, never more than half the cap
    s = _strict_min_slack(system, x)
    return min(s, cap) / 2 if s is not None else cap / 2


def distribute_and_fold(spec, profile=None, mode=INTEGRABILITY, solved=None):
    """Eliminate the last point; returns a list of FoldResult.

    integrability: the reduced kernels keep the local integrability
                   condition (profile ignored).
    linfty:        last exponent p = infinity; each reduced (spec, profile)
                   satisfies homogeneity, integrability and strict (iii-a).
    weak_power:    interior profile with the strict hypotheses; each reduced
                   pair satisfies them again with m-1 points.

    ``solved``, when a list, collects (system, outcome) for every system
    solved along the way.
    """
    token = _solved.set(solved)
    try:
        return _fold(spec, profile, mode)
    finally:
        _solved.reset(token)


def _fold(spec, profile, mode):
    from . import conditions as cond

    if mode not in MODES:
        raise PreconditionError(f"unknown fold mode {mode!r}; expected one of {MODES}")
    if spec.m < 3:
        raise PreconditionError("folding needs at least three points")
    if mode == INTEGRABILITY:
        viol = cond.check_integrability(spec)
        if viol:
            raise PreconditionError(f"integrability fails on {fmt_mask(viol[0])}")
        return [FoldResult(s, None, tuple(st)) for s, st in _fold_integrable(spec, [])]
    if profile is None or profile.m != spec.m:
        raise PreconditionError(f"mode {mode} needs a profile with {spec.m} entries")
    if mode == LINFTY:
        _require_linfty(spec, profile, cond)
        return [FoldResult(s, p, tuple(st)) for s, p, st in _fold_linfty(spec, profile, [])]
    _require_weak(spec, profile, cond)
    return [FoldResult(s, p, tuple(st)) for s, p, st in _fold_weak(spec, profile, [])]


def _require_linfty(spec, profile, cond):
    if profile.r[-1] != 0:
        raise PreconditionError("linfty mode needs p = inf at the last point")
    res = cond.check_endpoint(spec, profile)
    if res.status != cond.L1_ELIGIBLE:
        raise PreconditionError(f"linfty hypotheses fail: {res.reason}")


def _require_weak(spec, profile, cond):
    if not profile.is_interior():
        raise PreconditionError("weak_power mode needs every exponent strictly inside (1, inf)")
    if not cond.check_homogeneity(spec, profile).holds:
        raise PreconditionError("weak_power hypotheses fail: homogeneity")
    viol = cond.check_integrability(spec)
    if viol:
        raise PreconditionError(f"weak_power hypotheses fail: integrability on {fmt_mask(viol[0])}")
    for I in range(1, full_mask(spec.m)):
        if cond.iii_value(spec, profile, I) >= popcount(I):
            raise PreconditionError(f"weak_power hypotheses fail: strict (iii) on {fmt_mask(I)}")


def _fold_integrable(spec, steps):
    n, m = spec.n, spec.m
    last = m - 1
    theta = default_theta(spec)
    M = _mass(spec, theta)
    a = _mutable(spec)
    if M < n:
        return [(_drop_last(a, n), steps + [{"case": "direct"}])]
    th = members(theta)
    if M == n:
        i0, j0 = th[0], th[1]
        pair = (1 << i0) | (1 << j0)
        S = full_mask(m) & ~(1 << last)
        slack = min((popcount(J) - 1) * n - subset_alpha_sum(spec, J)
                    for J in range(1, S + 1) if J & S == J and J & pair == pair)
        eps = slack / 2
        _set(a, i0, j0, a[i0][j0] + eps)
        return [(_drop_last(a, n), steps + [{"case": "critical", "epsilon": fmt_rational(eps),
                                              "pair": [i0 + 1, j0 + 1]}])]
    if len(th) == 2:
        i, j = th
        _set(a, i, j, a[i][j] + M - n)
        return [(_drop_last(a, n), steps + [{"case": "pair", "added": fmt_rational(M - n)}])]
    out = []
    for u in th:
        rest = M - spec.alpha[u][last]
        if rest <= n:
            system = build_system("V1", spec, theta=theta)
            x = _solve_or_raise(system).x
            vals = _values(system, x)
            b = _mutable(spec)
            _apply_pairs(b, theta, vals)
            extra = {"term": u + 1}
            if rest == n:
                eps = _perturb(system, x, vals, b, theta, u)
                extra["epsilon"] = eps
            out.append((_drop_last(b, n), steps + [_step("V1", system, x, **extra)]))
        else:
            system = build_system("V2", spec, theta=theta, fold_index=u)
            x = _solve_or_raise(system).x
            b = _mutable(spec)
            _set(b, u, last, Fraction(0))
            _apply_pairs(b, theta, _values(system, x))
            nxt = KernelSpec(n, b)
            out.extend(_fold_integrable(nxt, steps + [_step("V2", system, x, term=u + 1)]))
    return out


def _perturb(system, x, vals, a, theta, u):
    """Shift epsilon from a positive pair to a pair inside Theta - {u}."""
    i0, j0 = next((i, j) for i, j in _pairs(theta) if vals.get(pair_label(i, j), 0) > 0)
    i1, j1 = _pairs(theta & ~(1 << u))[0]
    eps = _epsilon(system, x, vals[pair_label(i0, j0)])
    _set(a, i0, j0, a[i0][j0] - eps)
    _set(a, i1, j1, a[i1][j1] + eps)
    return eps


def _fold_linfty(spec, profile, steps):
    n, m = spec.n, spec.m
    last = m - 1
    theta = default_theta(spec)
    M = _mass(spec, theta)
    th = members(theta)
    red_profile = LebesgueProfile(profile.r[:last])
    if len(th) < 2 or not M > n:
        raise FoldError("linfty fold reached a state without two coupled points")
    a = _mutable(spec)
    if len(th) == 2:
        i, j = th
        _set(a, i, j, a[i][j] + M - n)
        return [(_drop_last(a, n), red_profile, steps + [{"case": "pair", "added": fmt_rational(M - n)}])]
    out = []
    for u in th:
        rest = M - spec.alpha[u][last]
        if rest <= n:
            system = build_system("V3", spec, profile, theta=theta)
            x = _solve_or_raise(system).x
            vals = _values(system, x)
            b = _mutable(spec)
            _apply_pairs(b, theta, vals)
            extra = {"term": u + 1}
            if rest == n:
                extra["epsilon"] = _perturb(system, x, vals, b, theta, u)
            out.append((_drop_last(b, n), red_profile, steps + [_step("V3", system, x, **extra)]))
        else:
            system = build_system("V4", spec, profile, theta=theta, fold_index=u)
            x = _solve_or_raise(system).x
            b = _mutable(spec)
            _set(b, u, last, Fraction(0))
            _apply_pairs(b, theta, _values(system, x))
            out.extend(_fold_linfty(KernelSpec(n, b), profile,
                                    steps + [_step("V4", system, x, term=u + 1)]))
    return out


def _apply_singles(r, theta, vals, n):
    for i in members(theta):
        d = vals.get(single_label(i), Fraction(0))
        if d:
            r[i] += d


def _fold_weak(spec, profile, steps):
    n, m = spec.n, spec.m
    last = m - 1
    theta = default_theta(spec)
    th = members(theta)
    rl = profile.r[last]
    if not th:
        raise FoldError("weak_power fold: the last point is uncoupled")
    if len(th) == 1:
        u = th[0]
        r = list(profile.r[:last])
        r[u] += spec.alpha[u][last] / n + rl - 1
        return [(_drop_last(_mutable(spec), n), LebesgueProfile(r),
                 steps + [{"case": "single", "term": u + 1}])]
    M = _mass(spec, theta)
    out = []
    for u in th + [last]:
        rest = (M - spec.alpha[u][last] + n * rl) if u != last else M
        if rest <= n:
            system = build_system("VI3", spec, profile, theta=theta)
            x = _solve_or_raise(system).x
            vals = _values(system, x)
            b = _mutable(spec)
            r = list(profile.r)
            _apply_pairs(b, theta, vals)
            _apply_singles(r, theta, vals, n)
            extra = {"term": u + 1 if u != last else "origin"}
            if rest == n:
                extra["epsilon"] = _perturb_weak(system, x, vals, b, r, theta, u, last, n)
            out.append((_drop_last(b, n), LebesgueProfile(r[:last]),
                        steps + [_step("VI3", system, x, **extra)]))
        elif u != last:
            system = build_system("VI4", spec, profile, theta=theta, fold_index=u)
            x = _solve_or_raise(system).x
            vals = _values(system, x)
            b = _mutable(spec)
            r = list(profile.r)
            _set(b, u, last, Fraction(0))
            _apply_pairs(b, theta, vals)
            _apply_singles(r, theta, vals, n)
            out.extend(_fold_weak(KernelSpec(n, b), LebesgueProfile(r),
                                  steps + [_step("VI4", system, x, term=u + 1)]))
        else:
            system = build_system("VI5", spec, profile, theta=theta)
            x = _solve_or_raise(system).x
            vals = _values(system, x)
            b = _mutable(spec)
            r = list(profile.r)
            _apply_pairs(b, theta, vals)
            _apply_singles(r, theta, vals, n)
            r[last] = Fraction(0)
            out.extend(_fold_linfty(KernelSpec(n, b), LebesgueProfile(r),
                                    steps + [_step("VI5", system, x, term="origin")]))
    return out


def _perturb_weak(system, x, vals, a, r, theta, u, last, n):
    """Epsilon shift for the critical weak-power case (kept homogeneous)."""
    pos = [(i, j) for i, j in _pairs(theta) if vals.get(pair_label(i, j), 0) > 0]
    if u == last:
        # log factor in the Theta diameter: bump a pair inside Theta
        i1, j1 = _pairs(theta)[0]
        if pos:
            i0, j0 = pos[0]
            eps = _epsilon(system, x, vals[pair_label(i0, j0)])
            _set(a, i0, j0, a[i0][j0] - eps)
        else:
            i0 = next(i for i in members(theta) if vals.get(single_label(i), 0) > 0)
            eps = _epsilon(system, x, n * vals[single_label(i0)])
            r[i0] -= eps / n
        _set(a, i1, j1, a[i1][j1] + eps)
        return eps
    i1 = members(theta & ~(1 << u))[0]
    if pos:
        i0, j0 = pos[0]
        eps = _epsilon(system, x, vals[pair_label(i0, j0)])
        _set(a, i0, j0, a[i0][j0] - eps)
    else:
        i0 = next(i for i in members(theta) if vals.get(single_label(i), 0) > 0)
        eps = _epsilon(system, x, n * vals[single_label(i0)])
        r[i0] -= eps / n
    r[i1] += eps / n
    return eps
