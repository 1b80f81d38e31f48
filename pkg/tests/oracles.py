"""Independent reference implementations used to cross-check the library.

Nothing here imports the modules under test except for plain data types, so a
shared bug cannot make both sides agree.
"""
from fractions import Fraction
from itertools import combinations

import numpy as np


# -- boundedness by direct subset enumeration -----------------------------------------

def _pairs_inside(alpha, idx):
    return sum((alpha[i][j] for i, j in combinations(idx, 2)), Fraction(0))


def brute_force_verdict(n, alpha, r):
    """Returns (verdict, failure) with failure in
    {None, 'homogeneity', 'integrability', 'iii:inequality', 'iii:mass', 'iii:nested'}.

    Subsets are tuples of 0-based indices; each condition is evaluated
    directly from its definition.
    """
    m = len(r)
    pts = range(m)
    if any(not (0 < x < 1) for x in r):
        return "out_of_scope", None
    total = sum(r, Fraction(0)) + _pairs_inside(alpha, pts) / n
    if total != m:
        return "unbounded", "homogeneity"
    for size in range(2, m + 1):
        for J in combinations(pts, size):
            if _pairs_inside(alpha, J) >= (size - 1) * n:
                return "unbounded", "integrability"
    failures = []
    for size in range(1, m):
        for I in combinations(pts, size):
            v = sum((r[i] for i in I), Fraction(0)) + _pairs_inside(alpha, I) / n
            if v < size:
                continue
            if v > size:
                failures.append(((size, [i + 1 for i in I]), "iii:inequality"))
                continue
            rest = [i for i in pts if i not in I]
            if sum((r[i] for i in rest), Fraction(0)) < 1:
                failures.append(((size, [i + 1 for i in I]), "iii:mass"))
                continue
            ok = True
            for k in range(1, len(rest) + 1):
                for J in combinations(rest, k):
                    lhs = sum((r[i] + sum((alpha[i][u] for u in I), Fraction(0)) / n for i in J),
                              Fraction(0))
                    lhs += _pairs_inside(alpha, J) / n
                    if lhs > k:
                        ok = False
            if not ok:
                failures.append(((size, [i + 1 for i in I]), "iii:nested"))
    if failures:
        return "unbounded", min(failures)[1]
    return "bounded", None


# -- max-slack value by primal vertex enumeration -----------------------------------

def max_slack_by_vertices(rows, nvars, box=1e6):
    """max t over {a.x + t <= b (strict rows), a.x <= b, a.x = b, t <= 1, |x_j| <= box}.

    ``rows`` holds (coeffs, rel, rhs) with rel in '<', '<=', '='.  Every
    basic solution of the active constraints is enumerated in floating point;
    returns None when no vertex is feasible.  For small integer data the box
    is loose enough that every optimal face reaches inside it.
    """
    d = nvars + 1
    A, b, eq = [], [], []
    for coeffs, rel, rhs in rows:
        a = [float(c) for c in coeffs]
        if rel == "=":
            A.append(a + [0.0]); b.append(float(rhs)); eq.append(True)
        else:
            A.append(a + [1.0 if rel == "<" else 0.0]); b.append(float(rhs)); eq.append(False)
    A.append([0.0] * nvars + [1.0]); b.append(1.0); eq.append(False)
    for j in range(nvars):
        e = [0.0] * d
        e[j] = 1.0
        A.append(e); b.append(box); eq.append(False)
        A.append([-x for x in e]); b.append(box); eq.append(False)
    A = np.array(A)
    b = np.array(b)
    eq = np.array(eq)
    # t is unbounded below; a floor keeps the region a polytope without
    # changing the optimum (t only enters with coefficient +1 or 0)
    A = np.vstack([A, np.eye(d)[-1] * -1])
    b = np.append(b, 1e9)
    eq = np.append(eq, False)
    forced = list(np.nonzero(eq)[0])
    optional = [k for k in range(len(A)) if not eq[k]]
    need = d - len(forced)
    if need < 0:
        forced_sets = [c for c in combinations(forced, d)]
        choices = [(c, ()) for c in forced_sets]
    else:
        choices = [(tuple(forced), c) for c in combinations(optional, need)]
    tol = 1e-7
    idx = np.array([list(f) + list(c) for f, c in choices], dtype=int)
    if idx.size == 0:
        return None
    M = A[idx]
    det = np.linalg.det(M)
    ok = np.abs(det) > 1e-12
    idx, M = idx[ok], M[ok]
    if not len(idx):
        return None
    V = np.linalg.solve(M, b[idx][..., None])[..., 0]
    lhs = V @ A.T
    scale = tol * (1 + np.abs(b))
    feas = np.all(lhs <= b + scale, axis=1)
    if eq.any():
        feas &= np.all(np.abs(lhs[:, eq] - b[eq]) <= scale[eq], axis=1)
    if not feas.any():
        return None
    return float(V[feas, -1].max())
