"""Floating-point estimates of the singular integrals behind the exact verdicts.

Every Monte Carlo routine draws batches from ``default_rng(SeedSequence([seed, b]))``
so the result is a pure function of (seed, n_samples, batch_size, inputs).
Importance samplers are sequential "chain" proposals: each point is drawn
either from its own density or as a power-law offset from an earlier point
(or a fixed anchor), and the exact mixture density is carried along, so the
weights f/q are unbiased for every singular cluster at once.
"""
import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations

import numpy as np
from scipy import integrate, special

from .kernel import (
    PreconditionError, full_mask, members, popcount,
    subset_alpha_sum, subset_recip_sum,
)

DEFAULT_SEED = 0x5E1BE6
DEFAULT_BATCH = 1 << 15
COINCIDENCE = 2.0 ** -40
MAX_RESAMPLE_RATE = 0.01

UNIFORM = "uniform"
IMPORTANCE = "importance"
QUADRATURE_1D = "quadrature1d"
METHODS = (UNIFORM, IMPORTANCE, QUADRATURE_1D)

DIVERGES = "diverges"
CONVERGES = "converges"
INCONCLUSIVE = "inconclusive"


class NumericError(RuntimeError):
    pass



# -- geometry ------------------------------------------------------------------

def ball_volume(n, radius=1.0):
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1) * radius ** n


def sphere_area(n):
    """Surface measure of the unit sphere in R^n (2 when n = 1)."""
    return 2 * math.pi ** (n / 2) / math.gamma(n / 2)


def _directions(rng, size, n):
    if n == 1:
        return rng.choice(np.array([-1.0, 1.0]), size=size)[:, None]
    v = rng.standard_normal((size, n))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _uniform_ball(rng, size, n, radius):
    r = radius * rng.random(size) ** (1.0 / n)
    return _directions(rng, size, n) * r[:, None]


# -- radial laws ------------------------------------------------------------------

class PowerLaw:
    """Radial offsets with density proportional to r^(n-1-beta) on (lo, hi)."""

    def __init__(self, n, beta, lo, hi):
        k = n - beta
        if lo == 0 and k <= 0:
            raise NumericError("power law needs beta < n when it reaches the origin")
        self.n, self.beta, self.lo, self.hi, self.k = n, float(beta), float(lo), float(hi), float(k)
        if abs(self.k) < 1e-12:
            self.norm = math.log(hi / lo)
        else:
            self.norm = (hi ** self.k - lo ** self.k) / self.k

    def sample_r(self, rng, size):
        u = rng.random(size)
        if abs(self.k) < 1e-12:
            return self.lo * (self.hi / self.lo) ** u
        return (self.lo ** self.k + u * (self.hi ** self.k - self.lo ** self.k)) ** (1.0 / self.k)

    def pdf_r(self, r):
        with np.errstate(divide="ignore", invalid="ignore"):
            out = r ** (self.k - 1) / self.norm
        return np.where((r > self.lo) & (r < self.hi), out, 0.0)


class Pareto:
    """Radial offsets with density gamma s^gamma r^(-1-gamma) on (s, inf)."""

    def __init__(self, gamma, s):
        # s * u^(-1/gamma) with u >= 2^-53 overflows a double once gamma < 53/1024
        if gamma < 53 / 1024:
            raise NumericError(f"tail exponent {float(gamma):.3g} is too heavy to sample in double precision")
        self.gamma, self.s = float(gamma), float(s)

    def sample_r(self, rng, size):
        return self.s * (1.0 - rng.random(size)) ** (-1.0 / self.gamma)

    def pdf_r(self, r):
        with np.errstate(divide="ignore", invalid="ignore"):
            out = self.gamma * self.s ** self.gamma * r ** (-1.0 - self.gamma)
        return np.where(r > self.s, out, 0.0)


class OffsetLaw:
    """Mixture of radial pieces, isotropic in R^n."""

    def __init__(self, n, pieces, weights=None):
        self.n = n
        self.pieces = list(pieces)
        w = np.ones(len(self.pieces)) if weights is None else np.asarray(weights, float)
        self.weights = w / w.sum()

    def sample(self, rng, size):
        pick = rng.choice(len(self.pieces), size=size, p=self.weights)
        r = np.empty(size)
        for k, piece in enumerate(self.pieces):
            sel = pick == k
            if sel.any():
                r[sel] = piece.sample_r(rng, int(sel.sum()))
        return _directions(rng, size, self.n) * r[:, None]

    def pdf(self, y):
        r = np.linalg.norm(y, axis=-1)
        dens = sum(w * p.pdf_r(r) for w, p in zip(self.weights, self.pieces))
        with np.errstate(divide="ignore", invalid="ignore"):
            out = dens / (sphere_area(self.n) * r ** (self.n - 1))
        return np.where(r > 0, out, 0.0)


def two_piece(n, beta, scale, gamma=None, lo=0.0):
    """Power law up to ``scale``; a Pareto tail beyond it when gamma is given."""
    near = PowerLaw(n, beta, lo, scale)
    if gamma is None:
        return OffsetLaw(n, [near])
    return OffsetLaw(n, [near, Pareto(gamma, scale)])


# -- function descriptors ------------------------------------------------------------

INDICATOR_BALL = "indicator_ball"
POWER_CUTOFF = "power_cutoff"
LOG_TAIL = "log_tail"
PURE_POWER = "pure_power"


@dataclass(frozen=True)
class FunctionDescriptor:
    """Radial test function on R^n.

    indicator_ball: 1_{|x|<radius}   (radius may be inf: the constant 1)
    power_cutoff:   |x|^-exponent 1_{|x|<radius}
    log_tail:       |x|^-exponent (log|x|)^-log_power 1_{inner<|x|<radius}
    pure_power:     |x|^-exponent
    """
    kind: str
    exponent: float = 0.0
    radius: float = 1.0
    log_power: float = 0.0
    inner: float = 2.0

    def __post_init__(self):
        if self.kind not in (INDICATOR_BALL, POWER_CUTOFF, LOG_TAIL, PURE_POWER):
            raise PreconditionError(f"unknown descriptor kind {self.kind!r}")
        if self.radius <= 0 or self.exponent < 0 or self.log_power < 0:
            raise PreconditionError("descriptor parameters must be positive")
        if self.kind == LOG_TAIL and self.inner != 2.0:
            raise PreconditionError("log tails start at radius 2")

    @classmethod
    def indicator_ball(cls, radius=1.0):
        return cls(INDICATOR_BALL, radius=float(radius))

    @classmethod
    def power_cutoff(cls, lam, radius=1.0):
        return cls(POWER_CUTOFF, exponent=float(lam), radius=float(radius))

    @classmethod
    def log_tail(cls, exponent, log_power, truncation=math.inf):
        return cls(LOG_TAIL, exponent=float(exponent), radius=float(truncation), log_power=float(log_power))

    @classmethod
    def pure_power(cls, exponent):
        return cls(PURE_POWER, exponent=float(exponent), radius=math.inf)

    def log_value(self, x):
        r = np.linalg.norm(x, axis=-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = -self.exponent * np.log(r)
            if self.kind == LOG_TAIL:
                out = out - self.log_power * np.log(np.log(r))
        lo = self.inner if self.kind == LOG_TAIL else 0.0
        inside = (r > lo) & (r < self.radius)
        if self.kind != INDICATOR_BALL:
            inside &= r > 0
        return np.where(inside, out if self.kind != INDICATOR_BALL else 0.0, -np.inf)

    def _radial_integral(self, n, q):
        """int_{R^n} f^q dx (may be inf)."""
        s = sphere_area(n)
        if self.kind == INDICATOR_BALL:
            return ball_volume(n, self.radius)
        if self.kind == PURE_POWER:
            return math.inf
        if self.kind == POWER_CUTOFF:
            k = n - self.exponent * q
            return s * self.radius ** k / k if k > 0 else math.inf
        k = n - self.exponent * q
        b = self.log_power * q
        if math.isinf(self.radius):
            if k > 0 or (k == 0 and b <= 1):
                return math.inf
            if k == 0:
                return s * math.log(2) ** (1 - b) / (b - 1)
        # substitute t = log r
        val, _ = integrate.quad(lambda t: math.exp(k * t) * t ** (-b), math.log(2), math.log(self.radius),
                                limit=200)
        return s * val

    def lp_norm(self, n, r):
        """||f||_p with r = 1/p; r = 0 is the sup norm."""
        r = float(r)
        if r == 0:
            if self.kind == INDICATOR_BALL:
                return 1.0
            if self.kind == LOG_TAIL:
                return 2.0 ** -self.exponent * math.log(2) ** -self.log_power
            return math.inf if self.exponent > 0 else 1.0
        if self.kind == INDICATOR_BALL and math.isinf(self.radius):
            return math.inf
        return self._radial_integral(n, 1.0 / r) ** r

    def sampler(self, n):
        """Own sampling density proportional to f, or None when f is not integrable."""
        if self.kind in (INDICATOR_BALL, POWER_CUTOFF):
            if math.isinf(self.radius) or self.exponent >= n:
                return None
            return _RadialSampler(n, PowerLaw(n, self.exponent, 0.0, self.radius))
        if self.kind == LOG_TAIL and not math.isinf(self.radius):
            return _GridSampler(n, self)
        return None

    def scale(self):
        return self.radius if not math.isinf(self.radius) else self.inner


class _RadialSampler:
    def __init__(self, n, law):
        self.law = OffsetLaw(n, [law])

    def sample(self, rng, size):
        return self.law.sample(rng, size)

    def pdf(self, x):
        return self.law.pdf(x)


class _GridSampler:
    """Piecewise-constant density in log r on a fine grid.

    Half the mass follows f r^n, half is uniform in log r: the kernel usually
    decays in |x|, so the integrand lives on every scale up to the truncation.
    """

    def __init__(self, n, desc, cells=4096):
        self.n = n
        t = np.linspace(math.log(desc.inner), math.log(desc.radius), cells + 1)
        mid = 0.5 * (t[1:] + t[:-1])
        logw = (n - desc.exponent) * mid - desc.log_power * np.log(mid)
        w = np.exp(logw - logw.max())
        self.t, self.dt = t, t[1] - t[0]
        self.p = 0.5 * w / w.sum() + 0.5 / cells
        self.cdf = np.concatenate([[0.0], np.cumsum(self.p)])

    def sample(self, rng, size):
        cell = rng.choice(len(self.p), size=size, p=self.p)
        tt = self.t[cell] + self.dt * rng.random(size)
        return _directions(rng, size, self.n) * np.exp(tt)[:, None]

    def pdf(self, x):
        r = np.linalg.norm(x, axis=-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            tt = np.log(r)
        idx = np.floor((tt - self.t[0]) / self.dt).astype(np.int64)
        ok = (idx >= 0) & (idx < len(self.p))
        dens_t = np.where(ok, self.p[np.clip(idx, 0, len(self.p) - 1)] / self.dt, 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = dens_t / r / (sphere_area(self.n) * r ** (self.n - 1))
        return np.where(ok, out, 0.0)


# -- estimates --------------------------------------------------------------------

@dataclass(frozen=True)
class McEstimate:
    mean: float
    stderr: float
    n_samples: int
    seed: int
    method: str
    diagnostics: dict = field(default_factory=dict, compare=False)

    @property
    def rel_err(self):
        return self.stderr / abs(self.mean) if self.mean else math.inf

    def agrees(self, other, sigmas=3.0):
        other_mean = other.mean if isinstance(other, McEstimate) else float(other)
        other_se = other.stderr if isinstance(other, McEstimate) else 0.0
        return abs(self.mean - other_mean) <= sigmas * math.hypot(self.stderr, other_se)

    def to_row(self):
        return {"method": self.method, "seed": self.seed, "samples": self.n_samples,
                "mean": repr(self.mean), "stderr": repr(self.stderr)}


class _Stream:
    """Running mean and sum of squared deviations, merged batch by batch."""

    def __init__(self):
        self.count, self.mean, self.m2 = 0, None, None

    def add(self, values):
        values = np.asarray(values, float)
        nb = values.shape[0]
        if nb == 0:
            return
        bmean = values.mean(axis=0)
        bm2 = ((values - bmean) ** 2).sum(axis=0)
        if self.count == 0:
            self.count, self.mean, self.m2 = nb, bmean, bm2
            return
        total = self.count + nb
        delta = bmean - self.mean
        self.mean = self.mean + delta * nb / total
        self.m2 = self.m2 + bm2 + delta ** 2 * self.count * nb / total
        self.count = total

    def stderr(self):
        if self.count < 2:
            return np.full_like(self.mean, math.inf)
        return np.sqrt(self.m2 / (self.count - 1) / self.count)


def batch_plan(n_samples, batch_size=DEFAULT_BATCH):
    full, rest = divmod(int(n_samples), int(batch_size))
    return [batch_size] * full + ([rest] if rest else [])


def run_batches(draw, n_samples, seed, batch_size=DEFAULT_BATCH):
    """draw(rng, size) -> (values[size, ...], resampled).  Returns (mean, stderr, resampled)."""
    stream = _Stream()
    resampled = 0
    for b, size in enumerate(batch_plan(n_samples, batch_size)):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), b]))
        vals, extra = draw(rng, size)
        resampled += extra
        stream.add(vals)
    if resampled > MAX_RESAMPLE_RATE * n_samples:
        raise NumericError(f"coincidence resampling rate {resampled / n_samples:.3%} exceeds 1%")
    return stream.mean, stream.stderr(), resampled


# -- chain proposals ------------------------------------------------------------------

class Chain:
    """Sequential proposal for points x_0..x_{m-1} in R^n.

    Point i uses its own sampler with probability p_own (when it has one),
    otherwise an offset from a uniformly chosen parent among the fixed anchors
    and the points drawn before it.
    """

    def __init__(self, n, own, attach, anchors=(), p_own=0.5, scale=1.0):
        self.n = n
        self.own = list(own)
        self.attach = list(attach)
        self.anchors = np.asarray(anchors, float).reshape(-1, n)
        self.p_own = p_own
        self.scale = scale
        for i, (o, a) in enumerate(zip(self.own, self.attach)):
            if o is None and (a is None or len(self.anchors) + i == 0):
                raise NumericError(f"point {i} has no way to be sampled")

    @property
    def m(self):
        return len(self.own)

    def _mix(self, i):
        o, a = self.own[i], self.attach[i]
        parents = len(self.anchors) + i
        if a is None or parents == 0:
            return 1.0
        if o is None:
            return 0.0
        return self.p_own

    def _draw(self, rng, size):
        X = np.empty((size, self.m, self.n))
        for i in range(self.m):
            p = self._mix(i)
            use_own = rng.random(size) < p
            xi = np.empty((size, self.n))
            k = int(use_own.sum())
            if k:
                xi[use_own] = self.own[i].sample(rng, k)
            if size - k:
                parents = len(self.anchors) + i
                pick = rng.integers(0, parents, size - k)
                base = np.empty((size - k, self.n))
                from_anchor = pick < len(self.anchors)
                if from_anchor.any():
                    base[from_anchor] = self.anchors[pick[from_anchor]]
                if (~from_anchor).any():
                    rows = np.nonzero(~use_own)[0][~from_anchor]
                    base[~from_anchor] = X[rows, pick[~from_anchor] - len(self.anchors)]
                xi[~use_own] = base + self.attach[i].sample(rng, size - k)
            X[:, i] = xi
        return X

    def log_density(self, X):
        logq = np.zeros(X.shape[0])
        for i in range(self.m):
            p = self._mix(i)
            dens = np.zeros(X.shape[0])
            if p > 0:
                dens += p * self.own[i].pdf(X[:, i])
            if p < 1:
                parents = [self.anchors[a][None, :] for a in range(len(self.anchors))]
                parents += [X[:, j] for j in range(i)]
                acc = sum(self.attach[i].pdf(X[:, i] - q) for q in parents)
                dens += (1 - p) * acc / len(parents)
            with np.errstate(divide="ignore"):
                logq += np.log(dens)
        return logq

    def sample(self, rng, size):
        """Draw, resampling rows where two points (or a point and an anchor) coincide."""
        X = self._draw(rng, size)
        bad = self._coincident(X)
        resampled = 0
        while bad.any():
            k = int(bad.sum())
            resampled += k
            X[bad] = self._draw(rng, k)
            bad = self._coincident(X)
        return X, resampled

    def _coincident(self, X):
        # relative to the larger of the two magnitudes (floored at ``scale``)
        pts = [X[:, i] for i in range(self.m)] + [np.broadcast_to(a, X[:, 0].shape) for a in self.anchors]
        size = [np.linalg.norm(p, axis=1) for p in pts]
        bad = np.zeros(X.shape[0], bool)
        for a, b in combinations(range(len(pts)), 2):
            if a >= self.m and b >= self.m:
                continue
            tol = COINCIDENCE * np.maximum(self.scale, np.maximum(size[a], size[b]))
            bad |= np.linalg.norm(pts[a] - pts[b], axis=1) < tol
        return bad


def log_kernel(X, alpha):
    """log prod_{i<j} |x_i - x_j|^{-alpha_ij} for X of shape (N, m, n)."""
    m = X.shape[1]
    out = np.zeros(X.shape[0])
    with np.errstate(divide="ignore"):
        for i, j in combinations(range(m), 2):
            a = alpha[i][j]
            if a:
                out -= a * np.log(np.linalg.norm(X[:, i] - X[:, j], axis=1))
    return out


def min_pair_distance(X, anchors=()):
    pts = [X[:, i] for i in range(X.shape[1])]
    out = np.full(X.shape[0], np.inf)
    for a, b in combinations(range(len(pts)), 2):
        out = np.minimum(out, np.linalg.norm(pts[a] - pts[b], axis=1))
    for anc in anchors:
        for p in pts:
            out = np.minimum(out, np.linalg.norm(p - anc, axis=1))
    return out


def _alpha_float(spec):
    return [[float(a) for a in row] for row in spec.alpha]


def near_exponent(n, clusters):
    """Offset exponent beta giving finite variance on every cluster (A, dof):
    halfway between the variance threshold max(2A/dof - n, 0) and n."""
    worst = max([2 * float(A) / d - n for A, d in clusters if d > 0] + [0.0])
    if worst >= n:
        raise NumericError("no finite-variance offset exponent (a cluster is not integrable)")
    return (worst + n) / 2


# -- Selberg integrals over balls ------------------------------------------------------

def _selberg_clusters(spec):
    return [(subset_alpha_sum(spec, J), popcount(J) - 1)
            for J in range(1, 1 << spec.m) if popcount(J) >= 2]


def selberg_chain(spec, method, radius=1.0, lo=0.0, beta=None):
    n, m = spec.n, spec.m
    ball = _RadialSampler(n, PowerLaw(n, 0.0, 0.0, radius))
    if method == UNIFORM:
        return Chain(n, [ball] * m, [None] * m, scale=radius)
    if beta is None:
        beta = near_exponent(n, _selberg_clusters(spec))
    law = two_piece(n, beta, 2 * radius, lo=lo)
    return Chain(n, [ball] * m, [None] + [law] * (m - 1), p_own=0.5, scale=radius)


def mc_selberg_ball(spec, n_samples=10 ** 6, seed=DEFAULT_SEED, method=IMPORTANCE,
                    radius=1.0, batch_size=DEFAULT_BATCH):
    """Estimate int_{B_R^m} prod |x_i - x_j|^{-alpha_ij} dx."""
    from .conditions import check_integrability
    viol = check_integrability(spec)
    if viol:
        raise PreconditionError("the kernel is not locally integrable; use divergence_diagnostic")
    if method not in (UNIFORM, IMPORTANCE):
        raise PreconditionError(f"method {method!r} is not a sampling method")
    chain = selberg_chain(spec, method, radius)
    alpha = _alpha_float(spec)

    def draw(rng, size):
        X, extra = chain.sample(rng, size)
        inside = (np.linalg.norm(X, axis=2) < radius).all(axis=1)
        logw = log_kernel(X, alpha) - chain.log_density(X)
        return np.where(inside, np.exp(np.where(inside, logw, 0.0)), 0.0), extra

    mean, se, resampled = run_batches(draw, n_samples, seed, batch_size)
    return McEstimate(float(mean), float(se), int(n_samples), int(seed), method,
                      {"resampled": resampled, "radius": radius})


def selberg_closed_form_1d(spec):
    """Exact value on [-1, 1]^m for n = 1 and m in {2, 3} via beta functions."""
    if spec.n != 1 or spec.m not in (2, 3):
        raise PreconditionError("closed form covers n = 1 with two or three points")
    a = _alpha_float(spec)
    if spec.m == 2:
        s = a[0][1]
        return 2 * 2 ** (2 - s) / ((1 - s) * (2 - s))
    A = a[0][1] + a[0][2] + a[1][2]
    radial = 2 ** (3 - A) / ((2 - A) * (3 - A))
    from itertools import permutations
    return float(radial * sum(special.beta(1 - a[p][q], 1 - a[q][r]) for p, q, r in permutations(range(3))))


def selberg_quadrature_1d(spec):
    """Adaptive-quadrature value on [-1, 1]^m for n = 1, m in {2, 3}.

    The common translate of the ordered points integrates out exactly (length
    2 - spread); the remaining gaps u, v are written as u = s t, v = s (1 - t)
    and integrated numerically with algebraic endpoint weights.
    """
    if spec.n != 1 or spec.m not in (2, 3):
        raise PreconditionError("quadrature oracle covers n = 1 with two or three points")
    a = _alpha_float(spec)
    if spec.m == 2:
        val, _ = integrate.quad(lambda u: 2 * (2 - u), 0, 2, weight="alg", wvar=(-a[0][1], 0))
        return val
    from itertools import permutations
    total = 0.0
    for p, q, r in permutations(range(3)):
        a1, a2, a3 = a[p][q], a[q][r], a[p][r]

        def inner(s, a1=a1, a2=a2, a3=a3):
            val, _ = integrate.quad(lambda t: 1.0, 0, 1, weight="alg", wvar=(-a1, -a2))
            return (2 - s) * val

        # s^(1 - a1 - a2 - a3) from the Jacobian s and the three factors
        val, _ = integrate.quad(inner, 0, 2, weight="alg", wvar=(1 - a1 - a2 - a3, 0))
        total += val
    return total


# -- divergence diagnostics -----------------------------------------------------------------

@dataclass(frozen=True)
class GrowthFit:
    model: str              # "log" or "power"
    rate: float             # slope in log(1/rho) or the power exponent
    r2: float


@dataclass(frozen=True)
class DivergenceReport:
    verdict: str
    predicted: str          # "log", "power" or "finite"
    predicted_rate: float
    radii: tuple
    estimates: tuple
    stderrs: tuple
    log_fit: GrowthFit
    power_fit: GrowthFit
    reason: str

    def to_json(self):
        return {"verdict": self.verdict, "predicted": self.predicted,
                "predicted_rate": self.predicted_rate, "radii": list(self.radii),
                "estimates": list(self.estimates), "stderrs": list(self.stderrs),
                "log_fit": vars(self.log_fit), "power_fit": vars(self.power_fit),
                "reason": self.reason}


def _linfit(x, y):
    x, y = np.asarray(x, float), np.asarray(y, float)
    A = np.vstack([x, np.ones_like(x)]).T
    (slope, icept), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - (slope * x + icept)
    ss = ((y - y.mean()) ** 2).sum()
    r2 = 1 - (resid ** 2).sum() / ss if ss > 0 else 1.0
    return float(slope), float(icept), float(r2)


def growth_fits(radii, values):
    """Log model: v ~ a + b log(1/rho).  Power model: successive increments
    v(rho_{k+1}) - v(rho_k) ~ rho_k^-d, fitted on a log-log scale."""
    L = -np.log(np.asarray(radii, float))
    v = np.asarray(values, float)
    b, _, r2_log = _linfit(L, v)
    inc = np.diff(v)
    if (inc > 0).all():
        d, _, r2_pow = _linfit(L[:-1], np.log(inc))
    else:
        d, r2_pow = float("nan"), 0.0
    return GrowthFit("log", b, r2_log), GrowthFit("power", d, r2_pow)


def classify_growth(radii, values, predicted, predicted_rate, r2_min=0.99, rate_tol=0.1):
    radii = list(radii)
    if len(radii) < 4 or any(b >= a for a, b in zip(radii, radii[1:])):
        raise PreconditionError("need at least four strictly decreasing radii")
    if math.log10(radii[0] / radii[-1]) < 4 - 1e-9:
        raise PreconditionError("radii must span at least four decades")
    log_fit, pow_fit = growth_fits(radii, values)
    v = np.asarray(values, float)
    increasing = bool((np.diff(v) > 0).all())
    if predicted == "finite":
        if pow_fit.r2 >= r2_min and pow_fit.rate < 0:
            return CONVERGES, log_fit, pow_fit, "increments decay geometrically"
        if v[-1] > 0 and abs(v[-1] - v[-2]) <= 0.01 * abs(v[-1]):
            return CONVERGES, log_fit, pow_fit, "estimates stabilized"
        return INCONCLUSIVE, log_fit, pow_fit, "no clear convergence"
    if not increasing:
        return INCONCLUSIVE, log_fit, pow_fit, "estimates are not monotone"
    if predicted == "log":
        if log_fit.r2 > r2_min and log_fit.rate > 0:
            return DIVERGES, log_fit, pow_fit, "logarithmic growth"
        return INCONCLUSIVE, log_fit, pow_fit, "growth is not logarithmic"
    if pow_fit.r2 > r2_min and abs(pow_fit.rate - predicted_rate) <= rate_tol * max(predicted_rate, 0.5):
        return DIVERGES, log_fit, pow_fit, "power-law growth at the predicted rate"
    return INCONCLUSIVE, log_fit, pow_fit, "growth does not match the predicted rate"


def selberg_deficit(spec):
    """max_J sum_J alpha - (|J|-1) n: >0 power growth, 0 log growth, <0 finite."""
    return max(subset_alpha_sum(spec, J) - (popcount(J) - 1) * spec.n
               for J in range(1, 1 << spec.m) if popcount(J) >= 2)


def _prediction(deficit):
    if deficit > 0:
        return "power", float(deficit)
    if deficit == 0:
        return "log", 0.0
    return "finite", float(deficit)


def divergence_diagnostic(spec, exclusion_radii, n_samples=200_000, seed=DEFAULT_SEED,
                          radius=1.0, batch_size=DEFAULT_BATCH):
    """Truncated Selberg integrals with every |x_i - x_j| >= rho, for each rho.

    One sample set serves every radius (common random numbers), so the
    estimates are monotone in rho by construction.
    """
    radii = tuple(float(r) for r in exclusion_radii)
    predicted, rate = _prediction(selberg_deficit(spec))
    n = spec.n
    rho_min = min(radii)
    beta = max(float(A) / d for A, d in _selberg_clusters(spec))
    if beta < n:
        beta = near_exponent(n, _selberg_clusters(spec))
    chain = selberg_chain(spec, IMPORTANCE, radius, lo=rho_min, beta=beta)
    alpha = _alpha_float(spec)
    rr = np.asarray(radii)

    def draw(rng, size):
        X, extra = chain.sample(rng, size)
        inside = (np.linalg.norm(X, axis=2) < radius).all(axis=1)
        logw = log_kernel(X, alpha) - chain.log_density(X)
        w = np.where(inside, np.exp(np.where(inside, logw, 0.0)), 0.0)
        dmin = min_pair_distance(X)
        return w[:, None] * (dmin[:, None] >= rr[None, :]), extra

    mean, se, _ = run_batches(draw, n_samples, seed, batch_size)
    verdict, lf, pf, reason = classify_growth(radii, mean, predicted, rate)
    return DivergenceReport(verdict, predicted, rate, radii, tuple(map(float, mean)),
                            tuple(map(float, se)), lf, pf, reason)


def truncated_selberg_1d(alpha, rho):
    """Exact int int_{[-1,1]^2, |x-y|>=rho} |x-y|^-alpha (n = 1, two points)."""
    a = float(alpha)
    if a == 1:
        return 2 * (2 * math.log(2 / rho) - (2 - rho))
    if a == 2:
        return 2 * (2 * (1 / rho - 0.5) - math.log(2 / rho))
    k = 1 - a
    return 2 * (2 * (2 ** k - rho ** k) / k - (2 ** (k + 1) - rho ** (k + 1)) / (k + 1))


# -- Riesz compositions -------------------------------------------------------------

def _fr(x):
    if isinstance(x, (Fraction, int)):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x)
    return Fraction(repr(float(x)))


def _config_points(config, n):
    pts = np.asarray(config.points if hasattr(config, "points") else config, float).reshape(-1, n)
    return pts


def riesz_quadrature_1d(alphas, points, domain_radius=None):
    """int prod |t - x_i|^{-alpha_i} dt over R (or [-R, R]) by adaptive quadrature.

    Each segment between neighbouring points carries the two endpoint
    singularities as an algebraic weight, so quad sees a smooth integrand.
    """
    a = [float(x) for x in alphas]
    xs = [float(np.ravel(p)[0]) for p in points]
    merged = {}
    for x, e in zip(xs, a):
        merged[x] = merged.get(x, 0.0) + e
    knots = sorted(merged)

    def rest(t, skip):
        val = 1.0
        for x in knots:
            if x not in skip:
                val *= abs(t - x) ** -merged[x]
        return val

    total = 0.0
    for lo, hi in zip(knots, knots[1:]):
        val, _ = integrate.quad(rest, lo, hi, args=({lo, hi},), weight="alg",
                                wvar=(-merged[lo], -merged[hi]), limit=200)
        total += val
    first, last = knots[0], knots[-1]
    if domain_radius is not None:
        R = float(domain_radius)
        if first < -R or last > R:
            raise PreconditionError("points must lie inside the integration ball")
        if first > -R:
            val, _ = integrate.quad(rest, -R, first, args=({first},), weight="alg",
                                    wvar=(0, -merged[first]), limit=200)
            total += val
        if last < R:
            val, _ = integrate.quad(rest, last, R, args=({last},), weight="alg",
                                    wvar=(-merged[last], 0), limit=200)
            total += val
        return total
    span = max(last - first, 1.0)
    for edge, sign in ((last, 1.0), (first, -1.0)):
        lo, hi = (edge, edge + span) if sign > 0 else (edge - span, edge)
        wv = (-merged[edge], 0) if sign > 0 else (0, -merged[edge])
        val, _ = integrate.quad(rest, lo, hi, args=({edge},), weight="alg", wvar=wv, limit=200)
        total += val
        far = (lambda t: rest(t, ()))
        val, _ = (integrate.quad(far, hi, np.inf, limit=200) if sign > 0
                  else integrate.quad(far, -np.inf, lo, limit=200))
        total += val
    return total


def beta_two_point_1d(a1, a2, L):
    """Closed form of int_R |t|^-a1 |t - L|^-a2 dt for n = 1."""
    a1, a2 = float(a1), float(a2)
    c = a1 + a2 - 1
    return abs(L) ** -c * (special.beta(1 - a1, c) + special.beta(1 - a2, c) + special.beta(1 - a1, 1 - a2))


def _riesz_law(n, alphas, pts, domain_radius):
    k = len(alphas)
    total = float(sum(alphas))
    gamma = total - n if domain_radius is None else None
    d = [np.linalg.norm(pts[i] - pts[j]) for i in range(k) for j in range(k) if i != j]
    spread = max(d) if d else 1.0
    spread = spread if spread > 0 else 1.0
    comps = []
    for i in range(k):
        others = [np.linalg.norm(pts[i] - pts[j]) for j in range(k) if j != i and np.linalg.norm(pts[i] - pts[j]) > 0]
        s = min(others) if others else spread
        beta = float(alphas[i])
        if domain_radius is not None:
            s = min(s, 2 * domain_radius)
        comps.append((pts[i], two_piece(n, beta, s, gamma)))
    centre = pts.mean(axis=0)
    glob_s = spread if domain_radius is None else 2 * domain_radius
    comps.append((centre, two_piece(n, 0.0, glob_s, gamma)))
    return comps


def riesz_composition(n, alphas, config, method=IMPORTANCE, n_samples=200_000, seed=DEFAULT_SEED,
                      domain_radius=None, batch_size=DEFAULT_BATCH):
    """int prod_i |t - x_i|^{-alpha_i} dt over R^n (or the ball |t| <= domain_radius)."""
    al = [_fr(a) for a in alphas]
    if any(not 0 < a < n for a in al):
        raise PreconditionError("each exponent must lie in (0, n)")
    if domain_radius is None and sum(al) <= n:
        raise PreconditionError("the exponents must sum past n for the integral to converge at infinity")
    pts = _config_points(config, n)
    if len(pts) != len(al):
        raise PreconditionError("one exponent per point")
    if method == QUADRATURE_1D:
        if n != 1:
            raise PreconditionError("the quadrature path is one-dimensional")
        val = riesz_quadrature_1d(al, pts, domain_radius)
        return McEstimate(float(val), 0.0, 0, int(seed), QUADRATURE_1D)
    af = np.array([float(a) for a in al])
    comps = _riesz_law(n, af, pts, domain_radius)
    weights = np.array([0.5 / (len(comps) - 1)] * (len(comps) - 1) + [0.5])
    centred = len(pts)
    if method == UNIFORM:
        centred = 0
        if domain_radius is None:
            raise PreconditionError("uniform sampling needs a bounded domain")
        comps = [(np.zeros(n), OffsetLaw(n, [PowerLaw(n, 0.0, 0.0, domain_radius)]))]
        weights = np.array([1.0])
    def sample_t(rng, size):
        pick = rng.choice(len(comps), size=size, p=weights)
        off = np.empty((size, n))
        ctrs = np.empty((size, n))
        for c, (ctr, law) in enumerate(comps):
            sel = pick == c
            if sel.any():
                off[sel] = law.sample(rng, int(sel.sum()))
                ctrs[sel] = ctr
        return pick, off, ctrs + off

    def draw(rng, size):
        # the distance to the centre a sample was drawn around is taken from the
        # exact offset: rounding t - x_i near x_i would bias strong singularities
        pick, off, t = sample_t(rng, size)
        dist = np.linalg.norm(t[:, None, :] - pts[None, :, :], axis=2)
        own = pick < centred
        rows = np.nonzero(own)[0]
        dist[rows, pick[own]] = np.linalg.norm(off[own], axis=1)
        bad = (dist == 0).any(axis=1)
        extra = int(bad.sum())
        if extra:
            raise NumericError("a sample landed exactly on a singular point")
        q = np.zeros(size)
        for c, (w, (ctr, law)) in enumerate(zip(weights, comps)):
            y = t - ctr
            y[pick == c] = off[pick == c]
            q += w * law.pdf(y)
        with np.errstate(divide="ignore", invalid="ignore"):
            val = np.exp(-(af[None, :] * np.log(dist)).sum(axis=1)) / q
        ok = q > 0
        if domain_radius is not None:
            ok &= np.linalg.norm(t, axis=1) <= domain_radius
        return np.where(ok, val, 0.0), extra

    mean, se, resampled = run_batches(draw, n_samples, seed, batch_size)
    return McEstimate(float(mean), float(se), int(n_samples), int(seed), method,
                      {"resampled": resampled})


def d_sum(pts, idx=None):
    """d_I = sum_{i<j in I} |x_i - x_j|."""
    idx = range(len(pts)) if idx is None else idx
    return float(sum(np.linalg.norm(pts[i] - pts[j]) for i, j in combinations(list(idx), 2)))


def envelope_L(n, alphas, config, method=IMPORTANCE, n_samples=100_000, seed=DEFAULT_SEED):
    """The envelope terms L_u, u = 1..k, bounding the composition integral."""
    al = [_fr(a) for a in alphas]
    pts = _config_points(config, n)
    k = len(al)
    total = sum(al)
    dS = d_sum(pts)
    out = []
    for u in range(k):
        rest = [i for i in range(k) if i != u]
        srest = sum(al[i] for i in rest)
        if srest < n:
            out.append(dS ** float(n - total))
        elif srest == n:
            dr = d_sum(pts, rest)
            out.append(math.inf if dr == 0 else dS ** float(n - total) * math.log(2 * dS / dr))
        else:
            sub = riesz_composition(n, [al[i] for i in rest], pts[rest], method=method,
                                    n_samples=n_samples, seed=seed)
            out.append(dS ** -float(al[u]) * sub.mean)
    return out


# -- the multilinear functional -----------------------------------------------------

@dataclass(frozen=True)
class LambdaEstimate:
    estimate: McEstimate
    norms: tuple
    ratio: float
    ratio_stderr: float


def _lambda_chain(n, descriptors, free_gamma=None, beta=None):
    own = [d.sampler(n) for d in descriptors]
    finite = [d.scale() for d in descriptors if not math.isinf(d.radius)]
    scale = 2 * max(finite) if finite else 2.0
    floor = min(finite) if finite else 1.0
    attach = []
    for i, d in enumerate(descriptors):
        if i == 0 and own[0] is not None:
            attach.append(None)
            continue
        gamma = free_gamma if own[i] is None else None
        attach.append(two_piece(n, beta, scale, gamma))
    return Chain(n, own, attach, p_own=0.5, scale=floor)


def lambda_estimate(spec, profile, descriptors, n_samples=200_000, seed=DEFAULT_SEED,
                    batch_size=DEFAULT_BATCH):
    """MC estimate of Lambda(f_1..f_m) and the ratio Lambda / prod ||f_i||_{p_i}.

    A descriptor with infinite support (indicator_ball(inf), the constant 1)
    marks a free point; it is sampled only through offsets from the others.
    """
    n, m = spec.n, spec.m
    if len(descriptors) != m:
        raise PreconditionError(f"need {m} descriptors")
    r = profile.r if profile is not None else [Fraction(0)] * m
    norms = tuple(d.lp_norm(n, ri) for d, ri in zip(descriptors, r))
    bad = [i + 1 for i, v in enumerate(norms) if math.isinf(v)]
    if bad:
        raise PreconditionError(f"descriptor norm is infinite at points {bad}")
    if descriptors[0].sampler(n) is None:
        raise PreconditionError("the first descriptor must be integrable (it roots the sampler)")
    alpha = _alpha_float(spec)
    clusters = _selberg_clusters(spec)
    beta = near_exponent(n, clusters)
    free = [i for i, d in enumerate(descriptors) if d.sampler(n) is None]
    gamma = None
    if free:
        gam = []
        for i in free:
            e = sum(alpha[i][j] for j in range(m) if j != i)
            if e <= n:
                raise PreconditionError(f"point {i + 1} is free but its kernel decays too slowly")
            gam.append(e - n)
        gamma = min(gam)
    chain = _lambda_chain(n, descriptors, gamma, beta)

    def draw(rng, size):
        X, extra = chain.sample(rng, size)
        logf = log_kernel(X, alpha)
        for i, d in enumerate(descriptors):
            if not (d.kind == INDICATOR_BALL and math.isinf(d.radius)):
                logf = logf + d.log_value(X[:, i])
        logq = chain.log_density(X)
        ok = np.isfinite(logf)
        return np.where(ok, np.exp(np.where(ok, logf - logq, 0.0)), 0.0), extra

    mean, se, resampled = run_batches(draw, n_samples, seed, batch_size)
    est = McEstimate(float(mean), float(se), int(n_samples), int(seed), IMPORTANCE, {"resampled": resampled})
    denom = float(np.prod(norms))
    return LambdaEstimate(est, norms, est.mean / denom, est.stderr / denom)


# -- weak-power homogeneity ---------------------------------------------------------

def _weak_clusters(spec, profile):
    """(A, dof) for clusters of free points 2..m at 0, at x_1, or on their own."""
    n, m = spec.n, spec.m
    free = full_mask(m) & ~1
    out = []
    for J in range(1, free + 1):
        if J & free != J:
            continue
        k = popcount(J)
        out.append((subset_alpha_sum(spec, J) + n * subset_recip_sum(profile, J), k))
        out.append((subset_alpha_sum(spec, J | 1), k))
        if k >= 2:
            out.append((subset_alpha_sum(spec, J), k - 1))
    return out


def _weak_tail(spec, profile):
    """min over groups K of free points of (decay exponent)/|K| - n."""
    n, m = spec.n, spec.m
    free = full_mask(m) & ~1
    best = math.inf
    for K in range(1, free + 1):
        if K & free != K:
            continue
        E = subset_alpha_sum(spec, K) + n * subset_recip_sum(profile, K)
        E += sum(spec.alpha[i][j] for i in members(K) for j in range(m) if not K >> j & 1)
        best = min(best, float(E) / popcount(K) - n)
    return best


def weak_deficit(spec, profile):
    """max over nonempty proper J of sum_J alpha + n sum_J r - |J| n."""
    n, m = spec.n, spec.m
    return max(subset_alpha_sum(spec, J) + n * subset_recip_sum(profile, J) - popcount(J) * n
               for J in range(1, full_mask(m)))


def _weak_chain(spec, profile, x1, lo=0.0):
    n, m = spec.n, spec.m
    s = float(np.linalg.norm(x1))
    clusters = [(A, d) for A, d in _weak_clusters(spec, profile)]
    worst = max([2 * float(A) / d - n for A, d in clusters] + [0.0])
    beta = (worst + n) / 2 if worst < n else max(float(A) / d for A, d in clusters)
    gamma = _weak_tail(spec, profile)
    gamma = gamma if gamma > 0 else 0.5
    law = two_piece(n, beta, s, gamma, lo=lo * s if lo else 0.0)
    anchors = np.vstack([np.zeros(n), x1])
    return Chain(n, [None] * (m - 1), [law] * (m - 1), anchors=anchors, p_own=0.0, scale=s)


def _weak_log_integrand(spec, profile, X, x1):
    n, m = spec.n, spec.m
    alpha = _alpha_float(spec)
    full = np.concatenate([np.broadcast_to(x1, (X.shape[0], 1, n)), X], axis=1)
    logf = log_kernel(full, alpha)
    with np.errstate(divide="ignore"):
        for i in range(1, m):
            logf -= n * float(profile.r[i]) * np.log(np.linalg.norm(X[:, i - 1], axis=1))
    return logf


def weak_power_integral(spec, profile, x1_norm, n_samples=200_000, seed=DEFAULT_SEED,
                        batch_size=DEFAULT_BATCH):
    """F(x_1) = int prod |x_i - x_j|^-alpha_ij prod_{i>=2} |x_i|^{-n r_i} dx_2..dx_m."""
    n = spec.n
    x1 = np.zeros(n)
    x1[0] = float(x1_norm)
    chain = _weak_chain(spec, profile, x1)

    def draw(rng, size):
        X, extra = chain.sample(rng, size)
        logw = _weak_log_integrand(spec, profile, X, x1) - chain.log_density(X)
        return np.exp(logw), extra

    mean, se, resampled = run_batches(draw, n_samples, seed, batch_size)
    return McEstimate(float(mean), float(se), int(n_samples), int(seed), IMPORTANCE,
                      {"resampled": resampled, "x1_norm": float(x1_norm)})


@dataclass(frozen=True)
class HomogeneityFit:
    predicted_slope: float
    slope: float
    slope_stderr: float
    norms: tuple
    estimates: tuple

    @property
    def within_error(self):
        return abs(self.slope - self.predicted_slope) <= max(3 * self.slope_stderr, 1e-9)

    def to_json(self):
        return {"predicted_slope": self.predicted_slope, "slope": self.slope,
                "slope_stderr": self.slope_stderr, "norms": list(self.norms),
                "means": [e.mean for e in self.estimates], "stderrs": [e.stderr for e in self.estimates]}


def _require_weak_hypotheses(spec, profile):
    from .conditions import check_homogeneity, check_integrability
    if not profile.is_interior():
        raise PreconditionError("the profile must be interior")
    if not check_homogeneity(spec, profile).holds:
        raise PreconditionError("homogeneity fails")
    if check_integrability(spec):
        raise PreconditionError("integrability fails")
    if weak_deficit(spec, profile) >= 0:
        raise PreconditionError("strict subcriticality fails on some proper subset")


def homogeneity_ratio_test(spec, profile, base_point_norms=(0.25, 0.5, 1.0, 2.0, 4.0),
                           n_samples=200_000, seed=DEFAULT_SEED):
    """Fit log F against log|x_1|; the slope should be -n (1 - r_1)."""
    _require_weak_hypotheses(spec, profile)
    ests = tuple(weak_power_integral(spec, profile, s, n_samples, seed) for s in base_point_norms)
    x = np.log(np.asarray(base_point_norms, float))
    y = np.log([e.mean for e in ests])
    sig = np.array([e.rel_err for e in ests])
    w = 1 / np.maximum(sig, 1e-300) ** 2
    W = w.sum()
    xm = (w * x).sum() / W
    ym = (w * y).sum() / W
    sxx = (w * (x - xm) ** 2).sum()
    slope = float((w * (x - xm) * (y - ym)).sum() / sxx)
    slope_se = float(math.sqrt(1 / sxx))
    predicted = -spec.n * (1 - float(profile.r[0]))
    return HomogeneityFit(predicted, slope, slope_se, tuple(base_point_norms), ests)


def weak_power_divergence(spec, profile, radii, n_samples=200_000, seed=DEFAULT_SEED,
                          batch_size=DEFAULT_BATCH):
    """F(x_1), |x_1| = 1, truncated to |x_i|, |x_i - x_j|, |x_i - x_1| >= rho and |x_i| <= 1/rho."""
    n = spec.n
    radii = tuple(float(r) for r in radii)
    predicted, rate = _prediction(weak_deficit(spec, profile))
    x1 = np.zeros(n)
    x1[0] = 1.0
    chain = _weak_chain(spec, profile, x1, lo=min(radii))
    rr = np.asarray(radii)
    anchors = [np.zeros(n), x1]

    def draw(rng, size):
        X, extra = chain.sample(rng, size)
        logw = _weak_log_integrand(spec, profile, X, x1) - chain.log_density(X)
        w = np.exp(logw)
        dmin = min_pair_distance(X, anchors)
        far = np.linalg.norm(X, axis=2).max(axis=1)
        keep = (dmin[:, None] >= rr[None, :]) & (far[:, None] <= 1 / rr[None, :])
        return w[:, None] * keep, extra

    mean, se, _ = run_batches(draw, n_samples, seed, batch_size)
    verdict, lf, pf, reason = classify_growth(radii, mean, predicted, rate)
    return DivergenceReport(verdict, predicted, rate, radii, tuple(map(float, mean)),
                            tuple(map(float, se)), lf, pf, reason)


# -- folding comparison ---------------------------------------------------------------

def fold_sides(spec, profile, reduced, descriptors, n_samples=100_000, seed=DEFAULT_SEED):
    """Left side: the full functional with the constant 1 at the last point.
    Right side: one functional per reduced kernel on the first m-1 points."""
    k = spec.m - 1
    if len(descriptors) != k:
        raise PreconditionError(f"need {k} descriptors for the first points")
    lhs = lambda_estimate(spec, profile, list(descriptors) + [FunctionDescriptor.indicator_ball(math.inf)],
                          n_samples, seed)
    rhs = [lambda_estimate(fr.spec, fr.profile, descriptors, n_samples, seed + 1 + t)
           for t, fr in enumerate(reduced)]
    return lhs.estimate, [r.estimate for r in rhs]
