"""Exhaustive enumeration of small merge-process states, reduced by symmetry."""
from fractions import Fraction
from itertools import combinations, permutations, product

from corrkernel import setfamily as sf

WEIGHTS = tuple(sorted({Fraction(a, d) for d in range(1, 5) for a in range(1, d + 1)}))


def _image(J, perm):
    out = 0
    for i, p in enumerate(perm):
        if J >> i & 1:
            out |= 1 << p
    return out


def stabilizer(ground_size, theta):
    inside = [i for i in range(ground_size) if theta >> i & 1]
    outside = [i for i in range(ground_size) if not theta >> i & 1]
    perms = []
    for a in permutations(inside):
        for b in permutations(outside):
            perm = [0] * ground_size
            for src, dst in zip(inside, a):
                perm[src] = dst
            for src, dst in zip(outside, b):
                perm[src] = dst
            perms.append(perm)
    return perms


def support_orbits(ground_size, theta, max_support):
    """One representative support per orbit of the permutations fixing theta."""
    ground = (1 << ground_size) - 1
    family = [J for J in range(1, ground + 1) if sf.in_family(sf.FM, ground, theta, J)]
    group = stabilizer(ground_size, theta)
    seen = set()
    reps = []
    for k in range(1, max_support + 1):
        for sup in combinations(family, k):
            key = min(tuple(sorted(_image(J, g) for J in sup)) for g in group)
            if key in seen:
                continue
            seen.add(key)
            reps.append(sup)
    return reps


def chain_criterion_states(ground_size=4, max_support=4, thetas=(0b0011, 0b0111, 0b1111)):
    ground = (1 << ground_size) - 1
    for theta in thetas:
        for sup in support_orbits(ground_size, theta, max_support):
            for ws in product(WEIGHTS, repeat=len(sup)):
                yield sf.MeasureState(ground, theta, sf.FM, dict(zip(sup, ws)))
