"""Monte Carlo estimates of ``P[S_n <= x]``, plain and exponentially tilted.

Random numbers come from Philox, a counter-based generator.  Paths are
grouped in fixed blocks of ``BLOCK`` and block ``b`` draws from the stream
keyed by ``(seed, b)``, so an estimate depends only on ``(seed, samples)``
and never on how blocks are scheduled.  Block sums are formed with
:func:`math.fsum` and combined in block order.

Every sampler returns draws together with the log likelihood ratio of the
original law against the law actually sampled, so the tilted estimator is

    mean over paths of 1{S_n <= x} * exp(sum of log ratios).

For an exact exponential tilt the log ratio of one shock is
``-lam X + log R_X(lam)``.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .dist import (
    DEFAULT_TAIL_TOL,
    DensityFamily,
    DiscreteSpec,
    GammaLike,
    ShiftedDampedExponential,
    ShiftedTwoSidedExponential,
    ShockDistribution,
)
from .errors import PreconditionError, TargetOutOfRange, TiltNotSamplable
from .ldp import MgfModel, _approach, _solve_mbar_x, build_mgf

BLOCK = 1 << 16
_U64 = (1 << 64) - 1
# cells of the quantile-space proposal
_P_EDGES = np.unique(np.concatenate([
    [0.0, 1.0],
    np.geomspace(1e-300, 1.0, 1200),
    1.0 - np.geomspace(1e-16, 0.5, 400),
    np.linspace(0.0, 1.0, 401),
]))
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(4)


@dataclass(frozen=True)
class McEstimate:
    estimate: float
    stderr: float
    samples: int
    seed: int
    method: str
    lam: float = 0.0

    @property
    def rel_stderr(self) -> float:
        return self.stderr / self.estimate if self.estimate > 0 else math.inf


class TiltWarning(UserWarning):
    pass


def _rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=(block << 64) | (seed & _U64)))


# ---------------------------------------------------------------------------
# Samplers
# ---------------------------------------------------------------------------


class _Sampler:
    def draw(self, rng: np.random.Generator, size: int) -> tuple[np.ndarray, np.ndarray | None]:
        """Shocks and their log likelihood ratios (``None`` when all zero)."""
        raise NotImplementedError


class _Atoms(_Sampler):
    def __init__(self, values, probs, loglr=None):
        self.values = np.asarray(values, dtype=float)
        cum = np.cumsum(probs)
        self.cum = cum / cum[-1]
        self.loglr = loglr

    def draw(self, rng, size):
        i = np.minimum(np.searchsorted(self.cum, rng.random(size), side="right"), self.values.size - 1)
        return self.values[i], None if self.loglr is None else self.loglr[i]


def _atoms_of(spec: DiscreteSpec, tol: float):
    atoms, _ = spec.truncate(tol)
    vals = ([0.0] if spec.p0 > 0 else []) + [float(v) for v, _ in atoms]
    probs = ([float(spec.p0)] if spec.p0 > 0 else []) + [float(p) for _, p in atoms]
    return np.array(vals), np.array(probs)


class _Quantile(_Sampler):
    def __init__(self, fam: DensityFamily):
        self.fam = fam

    def draw(self, rng, size):
        return self.fam.quantile(rng.random(size)), None


class _Gamma(_Sampler):
    def __init__(self, k, theta, loglr_coef=None):
        self.k, self.theta, self.coef = k, theta, loglr_coef

    def draw(self, rng, size):
        x = rng.gamma(self.k, self.theta, size)
        if self.coef is None:
            return x, None
        slope, const = self.coef
        return x, slope * x + const


class _AsymLaplace(_Sampler):
    """``1 + Z`` with ``Z`` of density proportional to ``exp(lam z - |z|)``.

    With ``damped`` the proposal is thinned by acceptance ``1/(1+z^4)``,
    which yields the tilted ``f2`` law.
    """

    def __init__(self, lam, damped, loglr_const):
        self.lam, self.damped, self.const = lam, damped, loglr_const

    def _laplace(self, rng, size):
        lam = self.lam
        right = rng.random(size) < (1 + lam) / 2
        e = rng.standard_exponential(size)
        return np.where(right, e / (1 - lam), -e / (1 + lam))

    def draw(self, rng, size):
        if not self.damped:
            z = self._laplace(rng, size)
        else:
            out = np.empty(size)
            filled = 0
            while filled < size:
                want = size - filled
                z = self._laplace(rng, want + want // 2 + 16)
                keep = z[rng.random(z.size) * (1 + z**4) < 1][:want]
                out[filled:filled + keep.size] = keep
                filled += keep.size
            z = out
        x = 1.0 + z
        if self.const is None:
            return x, None
        return x, -self.lam * x + self.const


class _QuantileProposal(_Sampler):
    """Importance proposal in quantile space for a family with a quantile.

    ``X = Q(U)`` with ``U`` uniform; ``U`` is drawn instead from a piecewise
    constant density ``g`` roughly proportional to ``exp(lam Q(u))``.  The log
    likelihood ratio is ``-log g(U)``, which keeps the estimator exactly
    unbiased whatever the quality of ``g``.
    """

    def __init__(self, fam: DensityFamily, lam: float):
        self.fam = fam
        a, b = _P_EDGES[:-1], _P_EDGES[1:]
        width = b - a
        u = 0.5 * (a + b)[:, None] + 0.5 * width[:, None] * _GL_NODES[None, :]
        with np.errstate(over="ignore"):
            logv = lam * np.asarray(fam.quantile(u), dtype=float)
        peak = np.max(logv[np.isfinite(logv)])
        mass = width * (np.exp(np.where(np.isfinite(logv), logv - peak, -np.inf)) @ _GL_WEIGHTS) / 2
        keep = mass > 0
        self.lo, self.width, mass = a[keep], width[keep], mass[keep]
        total = math.fsum(mass)
        prob = mass / total
        self.cum = np.cumsum(prob)
        self.cum /= self.cum[-1]
        self.log_density = np.log(prob) - np.log(self.width)

    def draw(self, rng, size):
        j = np.minimum(np.searchsorted(self.cum, rng.random(size), side="right"), self.cum.size - 1)
        u = self.lo[j] + self.width[j] * rng.random(size)
        return np.asarray(self.fam.quantile(u), dtype=float), -self.log_density[j]


class _Mixture(_Sampler):
    def __init__(self, parts, probs, loglr):
        self.parts = parts
        self.cum = np.cumsum(probs)
        self.cum /= self.cum[-1]
        self.loglr = np.asarray(loglr, dtype=float)

    def draw(self, rng, size):
        comp = np.minimum(np.searchsorted(self.cum, rng.random(size), side="right"), len(self.parts) - 1)
        x = np.empty(size)
        lr = self.loglr[comp].copy()
        for c, part in enumerate(self.parts):
            sel = comp == c
            k = int(sel.sum())
            if k:
                xc, lc = part.draw(rng, k)
                x[sel] = xc
                if lc is not None:
                    lr[sel] += lc
        return x, lr


def _continuous_sampler(fam: DensityFamily, lam: float) -> _Sampler:
    if isinstance(fam, ShiftedTwoSidedExponential):
        if lam == 0:
            return _Quantile(fam)
        if not abs(lam) < 1:
            raise TiltNotSamplable(f"f1 has no tilt at {lam}")
        return _AsymLaplace(lam, False, lam - math.log1p(-lam * lam))
    if isinstance(fam, ShiftedDampedExponential):
        if lam == 0:
            return _AsymLaplace(0.0, True, None)
        if not abs(lam) < 1:
            raise TiltNotSamplable(f"no Laplace envelope for the f2 tilt at {lam}")
        log_r = build_mgf(fam).log_r_x(lam)
        return _AsymLaplace(lam, True, log_r)
    if isinstance(fam, GammaLike):
        if lam == 0:
            return _Gamma(fam.k, fam.theta)
        q = 1 - fam.theta * lam
        if not q > 0:
            raise TiltNotSamplable(f"gamma has no tilt at {lam}")
        return _Gamma(fam.k, fam.theta / q, (-lam, -fam.k * math.log(q)))
    try:
        fam.quantile(0.5)
    except NotImplementedError as exc:
        raise TiltNotSamplable(f"{type(fam).__name__} has no sampler") from exc
    return _Quantile(fam) if lam == 0 else _QuantileProposal(fam, lam)


def _sampler(d: ShockDistribution, lam: float, tol: float) -> _Sampler:
    w = d.mix_weight_cont
    parts, base, tilted = [], [], []
    if d.discrete_part is not None and w < 1:
        vals, probs = _atoms_of(d.discrete_part, tol)
        if lam == 0:
            parts.append(_Atoms(vals, probs))
            tilted.append(1.0)
        else:
            logp = np.log(probs)
            e = lam * vals + logp
            log_r = float(np.logaddexp.reduce(e))
            logq = e - log_r
            parts.append(_Atoms(vals, np.exp(logq), logp - logq))
            tilted.append(math.exp(log_r))
        base.append(1 - w)
    if d.continuous_part is not None and w > 0:
        fam = d.continuous_part.family
        parts.append(_continuous_sampler(fam, lam))
        tilted.append(1.0 if lam == 0 else build_mgf(d.continuous_part).r_x(lam))
        base.append(w)
    if len(parts) == 1:
        return parts[0]
    # component choice under the tilt, corrected by its own ratio
    prop = np.array(base) * np.array(tilted)
    prop /= prop.sum()
    return _Mixture(parts, prop, np.log(base) - np.log(prop))


# ---------------------------------------------------------------------------
# Estimators
# ---------------------------------------------------------------------------


def _as_dist(d) -> ShockDistribution:
    return d if isinstance(d, ShockDistribution) else ShockDistribution.of(d)


def _block_sums(sampler: _Sampler, x: float, n: int, seed: int, block: int, size: int):
    rng = _rng(seed, block)
    s = np.zeros(size)
    lr = np.zeros(size)
    for _ in range(n):
        xi, li = sampler.draw(rng, size)
        s += xi
        if li is not None:
            lr += li
    w = np.where(s <= x, np.exp(np.where(s <= x, lr, 0.0)), 0.0)
    return math.fsum(w), math.fsum(w * w)


def _run(sampler: _Sampler, x: float, n: int, samples: int, seed: int, jobs: int):
    if samples < 1:
        raise PreconditionError("samples must be >= 1")
    if n < 0:
        raise PreconditionError("n must be >= 0")
    nblocks = -(-samples // BLOCK)
    sizes = [min(BLOCK, samples - b * BLOCK) for b in range(nblocks)]

    def one(b):
        return _block_sums(sampler, x, n, seed, b, sizes[b])

    if jobs > 1 and nblocks > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            sums = list(pool.map(one, range(nblocks)))
    else:
        sums = [one(b) for b in range(nblocks)]
    s1 = math.fsum(a for a, _ in sums) / samples
    s2 = math.fsum(b for _, b in sums) / samples
    return s1, math.sqrt(max(s2 - s1 * s1, 0.0) / samples)


def simulate_survival(d, x: float, n: int, samples: int, seed: int, jobs: int = 1,
                      tol: float = DEFAULT_TAIL_TOL) -> McEstimate:
    """Fraction of ``samples`` paths with ``S_n <= x``."""
    d = _as_dist(d)
    est, se = _run(_sampler(d, 0.0, tol), x, n, samples, seed, jobs)
    return McEstimate(est, se, samples, seed, "naive", 0.0)


def simulate_survival_tilted(d, x: float, n: int, samples: int, seed: int, lam: float, jobs: int = 1,
                             tol: float = DEFAULT_TAIL_TOL) -> McEstimate:
    """Importance-sampled ``P[S_n <= x]`` with shocks drawn from the ``lam``-tilted law.

    ``lam = 0`` draws exactly the plain paths, so the result coincides with
    :func:`simulate_survival`.
    """
    if lam > 0:
        raise PreconditionError("lam must be <= 0")
    d = _as_dist(d)
    est, se = _run(_sampler(d, float(lam), tol), x, n, samples, seed, jobs)
    return McEstimate(est, se, samples, seed, f"tilted({float(lam)!r})", float(lam))


def choose_tilt(m: MgfModel, x: float, n: int) -> float:
    """``lam <= 0`` whose tilted mean of one shock is ``x/n``.

    When that equation has no solution the most negative point of the
    safeguard grid is returned with a :class:`TiltWarning`; if even that is
    unavailable the tilt falls back to 0.
    """
    z = x / n
    if z > m.mean:
        raise PreconditionError(f"x/n = {z} exceeds E[X1] = {m.mean}")
    if z == m.mean:
        return 0.0
    try:
        return _solve_mbar_x(m, z)
    except TargetOutOfRange:
        pass
    last = 0.0
    for lam in _approach(m, -1):
        try:
            m.log_r_x(lam)
        except Exception:
            break
        if math.isfinite(lam):
            last = lam
        if lam < -64:
            break
    warnings.warn(TiltWarning(f"x/n = {z} is not a tilted mean; using lam = {last}"), stacklevel=2)
    return last
