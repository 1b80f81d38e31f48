"""Exact data model: kernel exponents, Lebesgue profiles and subset sums.

Subsets of the index set are bitmasks (bit i is index i, 0-based).  Reports
convert them to sorted 1-based lists.
"""
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
import json

DEFAULT_MAX_M = 16
HARD_MAX_M = 24

INF = "inf"


class SpecError(ValueError):
    """Malformed kernel spec or profile.  ``field`` points at the culprit."""

    def __init__(self, message, field=None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field


class PreconditionError(ValueError):
    """Inputs are well formed but outside an operation's hypotheses."""


def parse_rational(value, field=None):
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise SpecError(f"expected a rational, got {value!r}", field)
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError):
            pass
    raise SpecError(f"expected a rational string like '3/4', got {value!r}", field)


def fmt_rational(q):
    q = Fraction(q)
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


# -- masks -----------------------------------------------------------------

def mask_of(indices):
    mask = 0
    for i in indices:
        mask |= 1 << i
    return mask


def members(mask):
    out = []
    i = 0
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return out


def popcount(mask):
    return bin(mask).count("1")


def full_mask(m):
    return (1 << m) - 1


def fmt_mask(mask):
    """Sorted 1-based index list, the reporting convention."""
    return [i + 1 for i in members(mask)]


def mask_from_one_based(indices, m):
    mask = 0
    for i in indices:
        if not 1 <= i <= m:
            raise SpecError(f"index {i} out of range 1..{m}")
        mask |= 1 << (i - 1)
    return mask


def submasks(mask):
    """All nonempty submasks of ``mask`` in increasing numeric order."""
    return [s for s in range(1, mask + 1) if s & mask == s]


def check_size(m, max_m=DEFAULT_MAX_M):
    if m > HARD_MAX_M:
        raise SpecError(f"m={m} exceeds the hard limit {HARD_MAX_M}", "alpha")
    if m > max_m:
        raise SpecError(f"m={m} exceeds the configured limit {max_m}", "alpha")


# -- types -----------------------------------------------------------------

@dataclass(frozen=True)
class KernelSpec:
    n: int
    alpha: tuple

    def __post_init__(self):
        if isinstance(self.n, bool) or not isinstance(self.n, int) or self.n < 1:
            raise SpecError("dimension must be a positive integer", "n")
        rows = tuple(tuple(Fraction(a) for a in row) for row in self.alpha)
        object.__setattr__(self, "alpha", rows)
        m = len(rows)
        if m < 2:
            raise SpecError("need at least two points", "alpha")
        check_size(m, HARD_MAX_M)
        for i, row in enumerate(rows):
            if len(row) != m:
                raise SpecError(f"row has {len(row)} entries, expected {m}", f"alpha[{i}]")
            if row[i] != 0:
                raise SpecError("diagonal entry must be 0", f"alpha[{i}][{i}]")
            for j, a in enumerate(row):
                if a < 0:
                    raise SpecError("entry must be nonnegative", f"alpha[{i}][{j}]")
                if a != rows[j][i]:
                    raise SpecError("matrix must be symmetric", f"alpha[{i}][{j}]")

    @property
    def m(self):
        return len(self.alpha)

    @classmethod
    def from_pairs(cls, n, m, pairs):
        """Build from a dict {(i, j): value} with 1-based i<j; others zero."""
        a = [[Fraction(0)] * m for _ in range(m)]
        for (i, j), v in pairs.items():
            a[i - 1][j - 1] = a[j - 1][i - 1] = Fraction(v)
        return cls(n, a)

    @classmethod
    def uniform(cls, n, m, value):
        v = Fraction(value)
        return cls(n, [[v if i != j else Fraction(0) for j in range(m)] for i in range(m)])

    def a(self, i, j):
        return self.alpha[i][j]

    @cached_property
    def _pair_sums(self):
        # DP: sums[mask] = sums[mask - low] + row(low) restricted to the rest
        m = self.m
        sums = [Fraction(0)] * (1 << m)
        for mask in range(1, 1 << m):
            low = (mask & -mask).bit_length() - 1
            rest = mask & (mask - 1)
            row = self.alpha[low]
            sums[mask] = sums[rest] + sum((row[j] for j in members(rest)), Fraction(0))
        return sums

    def total(self):
        return self._pair_sums[full_mask(self.m)]

    def restrict(self, mask):
        """The kernel restricted to the indices of ``mask`` (in increasing order)."""
        idx = members(mask)
        return KernelSpec(self.n, [[self.alpha[i][j] for j in idx] for i in idx])

    def permute(self, perm):
        """New spec whose index i is old index perm[i]."""
        return KernelSpec(self.n, [[self.alpha[p][q] for q in perm] for p in perm])

    def to_json(self):
        return {"n": self.n, "alpha": [[fmt_rational(a) for a in row] for row in self.alpha]}


@dataclass(frozen=True)
class LebesgueProfile:
    r: tuple

    def __post_init__(self):
        r = tuple(Fraction(x) for x in self.r)
        object.__setattr__(self, "r", r)
        for i, x in enumerate(r):
            if not 0 <= x <= 1:
                raise SpecError(f"reciprocal exponent {x} outside [0, 1]", f"p[{i}]")

    @property
    def m(self):
        return len(self.r)

    @classmethod
    def from_p(cls, ps):
        r = []
        for i, p in enumerate(ps):
            if isinstance(p, str) and p.strip().lower() in ("inf", "infinity", "oo"):
                r.append(Fraction(0))
                continue
            q = parse_rational(p, f"p[{i}]")
            if q < 1:
                raise SpecError(f"exponent {p!r} must be >= 1 or 'inf'", f"p[{i}]")
            r.append(1 / q)
        return cls(r)

    def p_strings(self):
        return [INF if x == 0 else fmt_rational(1 / x) for x in self.r]

    def is_interior(self):
        return all(0 < x < 1 for x in self.r)

    def endpoints(self):
        return [i for i, x in enumerate(self.r) if x == 0 or x == 1]

    def restrict(self, mask):
        return LebesgueProfile([self.r[i] for i in members(mask)])

    def permute(self, perm):
        return LebesgueProfile([self.r[p] for p in perm])


@dataclass(frozen=True)
class PointConfig:
    points: tuple

    def __post_init__(self):
        pts = tuple(tuple(float(c) for c in p) for p in self.points)
        object.__setattr__(self, "points", pts)
        if pts and any(len(p) != len(pts[0]) for p in pts):
            raise SpecError("all points must have the same dimension", "points")

    @property
    def n(self):
        return len(self.points[0]) if self.points else 0

    def __len__(self):
        return len(self.points)


# -- subset sums ------------------------------------------------------------

def subset_alpha_sum(spec, J):
    """Sum of alpha_ij over pairs i<j inside J; zero when |J| <= 1."""
    return spec._pair_sums[J]


def subset_recip_sum(profile, J):
    return sum((profile.r[i] for i in members(J)), Fraction(0))


def cross_sum(spec, i, J):
    """Sum of alpha_iu over u in J."""
    row = spec.alpha[i]
    return sum((row[u] for u in members(J)), Fraction(0))


def decompose_blocks(spec):
    """Connected components of the graph with an edge where alpha_ij > 0."""
    m = spec.m
    seen = 0
    blocks = []
    for start in range(m):
        if seen >> start & 1:
            continue
        block = 1 << start
        stack = [start]
        while stack:
            i = stack.pop()
            for j in range(m):
                if spec.alpha[i][j] > 0 and not block >> j & 1:
                    block |= 1 << j
                    stack.append(j)
        seen |= block
        blocks.append(block)
    return blocks


def is_irreducible(spec):
    return len(decompose_blocks(spec)) == 1


# -- JSON ------------------------------------------------------------------

def load_problem(doc, max_m=DEFAULT_MAX_M):
    """Parse {"n", "alpha", "p"?}; returns (spec, profile or None)."""
    if not isinstance(doc, dict):
        raise SpecError("top level must be an object", "$")
    if "n" not in doc:
        raise SpecError("missing key", "n")
    if "alpha" not in doc:
        raise SpecError("missing key", "alpha")
    n = doc["n"]
    if isinstance(n, bool) or not isinstance(n, int):
        raise SpecError("must be an integer", "n")
    rows = doc["alpha"]
    if not isinstance(rows, list) or not all(isinstance(r, list) for r in rows):
        raise SpecError("must be a list of lists", "alpha")
    check_size(len(rows), max_m)
    alpha = [[parse_rational(v, f"alpha[{i}][{j}]") for j, v in enumerate(row)]
             for i, row in enumerate(rows)]
    spec = KernelSpec(n, alpha)
    profile = None
    if "p" in doc:
        ps = doc["p"]
        if not isinstance(ps, list) or len(ps) != spec.m:
            raise SpecError(f"must be a list of {spec.m} exponents", "p")
        profile = LebesgueProfile.from_p(ps)
    return spec, profile


def dump_problem(spec, profile=None):
    doc = spec.to_json()
    if profile is not None:
        doc["p"] = profile.p_strings()
    return doc


def loads_problem(text, max_m=DEFAULT_MAX_M):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError(f"invalid JSON ({exc.msg} at line {exc.lineno})", "$") from None
    return load_problem(doc, max_m)
