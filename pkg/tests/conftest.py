import random
import sys
from fractions import Fraction
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from corrkernel.kernel import KernelSpec, LebesgueProfile  # noqa: E402
from corrkernel.linsys import Row, StrictLinearSystem  # noqa: E402


def random_alpha(rng, n, m, zero_rate=0.3, den=4):
    """Symmetric exponents on a coarse grid so that boundary cases come up often."""
    top = max(1, (2 * n * den) // max(1, m - 1))
    a = [[Fraction(0)] * m for _ in range(m)]
    for i in range(m):
        for j in range(i + 1, m):
            if rng.random() >= zero_rate:
                a[i][j] = a[j][i] = Fraction(rng.randint(1, top), den)
    return a


def random_instance(rng, m_max=6, balance_rate=0.8):
    """(spec, profile) with r on a 1/12 grid; usually balanced to satisfy homogeneity."""
    m = rng.randint(2, m_max)
    n = rng.choice([1, 1, 2, 3])
    alpha = random_alpha(rng, n, m, den=rng.choice([2, 3, 4]))
    spec = KernelSpec(n, alpha)
    r = [Fraction(rng.randint(1, 11), 12) for _ in range(m)]
    if rng.random() < balance_rate:
        target = m - spec.total() / n
        spread = target / m
        if 0 < spread < 1:
            r = [spread] * m
            k = rng.randrange(m)
            j = (k + 1) % m
            shift = Fraction(rng.randint(-3, 3), 24)
            if 0 < r[k] + shift < 1 and 0 < r[j] - shift < 1:
                r[k] += shift
                r[j] -= shift
    return spec, LebesgueProfile(r)


@pytest.fixture
def rng():
    return random.Random(20240611)


def admissible_linfty(rng, m_max=6, tries=200):
    """Random (spec, profile) with p = inf at the last point that passes the endpoint check.

    The first m-1 exponents are the max-slack point of the strict system
    they must satisfy, so the search itself never picks a borderline profile.
    """
    from corrkernel import conditions as cond
    from corrkernel.kernel import full_mask, members, popcount, subset_alpha_sum
    from corrkernel.linsys import EQ, LT, SystemBuilder, solve

    for _ in range(tries):
        m = rng.randint(3, m_max)
        n = rng.choice([1, 1, 2])
        spec = KernelSpec(n, random_alpha(rng, n, m, zero_rate=0.35, den=rng.choice([2, 4, 6])))
        if not any(spec.alpha[i][m - 1] for i in range(m - 1)):
            continue
        names = [f"r{i}" for i in range(m - 1)]
        b = SystemBuilder(names)
        b.add({v: 1 for v in names}, EQ, m - spec.total() / n, "mass")
        for v in names:
            b.add({v: -1}, LT, 0)
            b.add({v: 1}, LT, 1)
        for J in range(1, full_mask(m)):
            terms = {names[i]: 1 for i in members(J) if i < m - 1}
            if not terms:
                continue
            b.add(terms, LT, popcount(J) - subset_alpha_sum(spec, J) / n)
        out = solve(b.build())
        if not out.feasible:
            continue
        profile = LebesgueProfile(list(out.x) + [Fraction(0)])
        if cond.check_endpoint(spec, profile).status == cond.L1_ELIGIBLE:
            return spec, profile
    raise RuntimeError("no admissible instance found")


def random_system(rng, max_vars=6, max_rows=12, span=3):
    nv = rng.randint(1, max_vars)
    rows = []
    for _ in range(rng.randint(1, max_rows)):
        rel = rng.choices(["<", "<=", "="], weights=[5, 4, 1])[0]
        coeffs = [rng.randint(-span, span) for _ in range(nv)]
        rows.append((coeffs, rel, rng.randint(-span, span)))
    if rng.random() < 0.3 and len(rows) >= 2:
        # add a positive combination with a shifted right side to force some conflicts
        a, b = rng.sample(rows, 2)
        rows.append(([-(x + y) for x, y in zip(a[0], b[0])], "<", -(a[2] + b[2]) + rng.randint(-1, 1)))
    return StrictLinearSystem([f"x{j}" for j in range(nv)],
                              [Row(c, rel, b, f"r{k}") for k, (c, rel, b) in enumerate(rows)])


# -- acceptance summary ----------------------------------------------------------

def pytest_configure(config):
    config.acceptance_lines = []


@pytest.fixture
def acceptance(request, capsys):
    """Record one PASS/FAIL line; the lines are repeated in the terminal summary."""
    def record(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        request.config.acceptance_lines.append(line)
        with capsys.disabled():
            print("\n" + line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = getattr(config, "acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
