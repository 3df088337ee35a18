"""Exponential tilting for real-supported shock laws.

Notation follows the large-deviation setting: ``X`` is one shock with mean
``E``, ``Y = E - X`` is its centred reflection and

    R(h) = E[exp(h Y)],   mbar(h) = R'(h) / R(h).

Models store the moment generating function of ``X`` itself in log space
(``log R_X``, the tilted mean and the tilted variance), which keeps every
evaluation finite far into the tails.  The ``Y`` quantities follow from
``log R(h) = h E + log R_X(-h)`` and ``mbar(h) = E - mbar_X(-h)``.
"""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, special

from .discrete import m_x as _m_x
from .dist import (
    DEFAULT_TAIL_TOL,
    ConstantNearZero,
    DensityFamily,
    DensitySpec,
    DiscreteSpec,
    GammaLike,
    PowerLawOnInterval,
    ShiftedDampedExponential,
    ShiftedTwoSidedExponential,
    ShockDistribution,
    Tabulated,
)
from .errors import (
    ConditionFailed,
    ConstantsOutOfOrder,
    EngineError,
    MgfUndefined,
    NotClassC2,
    NTooSmall,
    PreconditionError,
    TargetOutOfRange,
)

RESIDUAL_TOL = 1e-10
_QUAD = dict(epsabs=0, epsrel=1e-12, limit=400)

# (log R_X, tilted mean, tilted variance) at one point
Moments = tuple[float, float, float]


@dataclass(frozen=True, eq=False)
class MgfModel:
    """Moment generating function of ``X`` on ``(-a1, a2)``.

    ``moments(lam)`` returns ``(log R_X(lam), mbar_X(lam), var_X(lam))``.
    ``left_closed``/``right_closed`` flag endpoints where ``R_X`` is still
    finite; ``moments`` accepts them.
    """

    moments: Callable[[float], Moments]
    a1: float
    a2: float
    mean: float
    construction: str
    p_neg: float
    p_zero: float
    has_ac_component: bool
    left_closed: bool = False
    right_closed: bool = False
    dist: ShockDistribution | None = None

    def contains(self, lam: float) -> bool:
        lo_ok = lam > -self.a1 or (self.left_closed and lam == -self.a1)
        hi_ok = lam < self.a2 or (self.right_closed and lam == self.a2)
        return lo_ok and hi_ok

    def _at(self, lam: float) -> Moments:
        lam = float(lam)
        if not self.contains(lam):
            raise MgfUndefined(f"R_X({lam}) diverges; interval is ({-self.a1}, {self.a2})")
        return self.moments(lam)

    # X-side evaluators
    def log_r_x(self, lam: float) -> float:
        return self._at(lam)[0]

    def r_x(self, lam: float) -> float:
        return math.exp(self.log_r_x(lam))

    def dr_x(self, lam: float) -> float:
        lr, m, _ = self._at(lam)
        return math.exp(lr) * m

    def d2r_x(self, lam: float) -> float:
        lr, m, v = self._at(lam)
        return math.exp(lr) * (v + m * m)

    def mbar_x(self, lam: float) -> float:
        return self._at(lam)[1]

    def var_x(self, lam: float) -> float:
        return self._at(lam)[2]

    # Y-side evaluators
    def log_r(self, h: float) -> float:
        return h * self.mean + self.log_r_x(-h)

    def mbar(self, h: float) -> float:
        return self.mean - self.mbar_x(-h)

    def sigma2(self, h: float) -> float:
        return self.var_x(-h)

    @property
    def nonnegative(self) -> bool:
        return self.p_neg == 0


# ---------------------------------------------------------------------------
# Construction
# ---------------------------------------------------------------------------


def _discrete_moments(values: np.ndarray, logp: np.ndarray):
    def moments(lam: float) -> Moments:
        e = lam * values + logp
        lr = special.logsumexp(e)
        w = np.exp(e - lr)
        m = math.fsum(w * values)
        v = math.fsum(w * (values - m) ** 2)
        return float(lr), m, v

    return moments


def _discrete_parts(spec: DiscreteSpec, tol: float):
    atoms, _ = spec.truncate(tol)
    vals = [0.0] if spec.p0 > 0 else []
    probs = [float(spec.p0)] if spec.p0 > 0 else []
    vals += [float(v) for v, _ in atoms]
    probs += [float(p) for _, p in atoms]
    return np.array(vals), np.log(np.array(probs))


def _family_interval(fam: DensityFamily) -> tuple[float, float, bool, bool]:
    """``(a1, a2, left_closed, right_closed)`` from family metadata."""
    inf = math.inf
    if isinstance(fam, ShiftedTwoSidedExponential):
        return 1.0, 1.0, False, False
    if isinstance(fam, ShiftedDampedExponential):
        return 1.0, 1.0, True, True
    if isinstance(fam, GammaLike):
        return inf, 1.0 / fam.theta, False, False
    if isinstance(fam, ConstantNearZero):
        return (inf, inf, False, False) if fam.tail_shape == "none" else (inf, fam.lam, False, False)
    if isinstance(fam, (PowerLawOnInterval, Tabulated)):
        return inf, inf, False, False
    raise MgfUndefined(f"no moment generating function metadata for {type(fam).__name__}")


def _breakpoints(fam: DensityFamily) -> list[float]:
    lo, hi = fam.support
    if isinstance(fam, Tabulated):
        lo, hi = float(fam.t[0]), float(fam.t[-1])
    pts = [lo, hi]
    if isinstance(fam, (ShiftedTwoSidedExponential, ShiftedDampedExponential)):
        pts = [lo, 1.0, hi]
    elif isinstance(fam, ConstantNearZero) and fam.tail_shape == "exponential":
        pts = [lo, fam.eps, hi]
    return pts


def _quadrature_moments(fam: DensityFamily):
    """Tilted moments of a density by adaptive quadrature.

    Moments are taken about ``c0`` (the untilted mean) to limit cancellation
    in the variance.  The weight ``exp(lam (y - y_ref))`` is shifted so that
    its maximum over a finite support is 1.
    """
    pts = _breakpoints(fam)
    alpha = fam.rv_index_alpha
    singular = pts[0] == 0 and alpha is not None and alpha < 1
    c0 = float(fam.mean)

    def piece(g, a, b):
        if a == 0 and singular:
            # algebraic weight for the t^(alpha-1) head
            split = min(b, 1.0)
            v = integrate.quad(lambda t: g(max(t, 1e-300)) * max(t, 1e-300) ** (1 - alpha), 0, split,
                               weight="alg", wvar=(alpha - 1, 0), **_QUAD)[0]
            if b > split:
                v += integrate.quad(g, split, b, **_QUAD)[0]
            return v
        return integrate.quad(g, a, b, **_QUAD)[0]

    def moments(lam: float) -> Moments:
        # quadpack flags roundoff near the requested 1e-12; accuracy is
        # checked against closed forms in the tests instead
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            return _moments(lam)

    def _moments(lam: float) -> Moments:
        lo, hi = pts[0], pts[-1]
        if lam < 0 and math.isfinite(lo):
            ref = lo
        elif lam > 0 and math.isfinite(hi):
            ref = hi
        else:
            ref = 0.0
        cuts = list(pts)
        if lam != 0 and math.isfinite(ref):
            # resolve the boundary layer of width 1/|lam| at the heavy end
            for k in (1.0, 10.0, 50.0):
                c = ref - k / lam
                if cuts[0] < c < cuts[-1]:
                    cuts.append(c)
        cuts = sorted(set(cuts))
        out = []
        for j in range(3):
            def g(y, j=j):
                lp = float(fam.logpdf(y))
                if lp == -math.inf:
                    return 0.0
                # combined in log space: exp(lam y) alone overflows on infinite ranges
                return (y - c0) ** j * math.exp(lam * (y - ref) + lp)

            out.append(math.fsum(piece(g, a, b) for a, b in zip(cuts[:-1], cuts[1:])))
        i0, i1, i2 = out
        if not i0 > 0:
            raise MgfUndefined(f"quadrature of R_X({lam}) returned {i0!r}")
        d = i1 / i0
        return math.log(i0) + lam * ref, c0 + d, max(i2 / i0 - d * d, 0.0)

    return moments


def _f1_moments(lam: float) -> Moments:
    q = 1 - lam * lam
    return lam - math.log(q), 1 + 2 * lam / q, 2 * (1 + lam * lam) / (q * q)


def _gamma_moments(k: float, theta: float):
    def moments(lam: float) -> Moments:
        q = 1 - theta * lam
        return -k * math.log(q), k * theta / q, k * theta * theta / (q * q)

    return moments


def _mixture(parts: list[tuple[float, Callable[[float], Moments]]]):
    def moments(lam: float) -> Moments:
        evals = [fn(lam) for w, fn in parts if w > 0]
        logs = np.array([math.log(w) for w, _ in parts if w > 0]) + np.array([e[0] for e in evals])
        lr = float(special.logsumexp(logs))
        ws = np.exp(logs - lr)
        m = math.fsum(float(wi) * mi for wi, (_, mi, _) in zip(ws, evals))
        v = math.fsum(float(wi) * (vi + (mi - m) ** 2) for wi, (_, mi, vi) in zip(ws, evals))
        return lr, m, v

    return moments


def _continuous_model(spec: DensitySpec, construction: str):
    fam = spec.family
    a1, a2, lc, rc = _family_interval(fam)
    if construction == "analytic" and isinstance(fam, ShiftedTwoSidedExponential):
        return _f1_moments, a1, a2, lc, rc, "analytic"
    if construction == "analytic" and isinstance(fam, GammaLike):
        return _gamma_moments(fam.k, fam.theta), a1, a2, lc, rc, "analytic"
    return _quadrature_moments(fam), a1, a2, lc, rc, "quadrature"


def build_mgf(d: ShockDistribution | DiscreteSpec | DensitySpec | DensityFamily,
              construction: str = "analytic", tol: float = DEFAULT_TAIL_TOL) -> MgfModel:
    """Moment generating model of a shock law.

    ``construction="analytic"`` uses closed forms where the family has one
    (atomic laws, ``f1``, gamma) and quadrature otherwise;
    ``"quadrature"`` forces the quadrature path for densities.
    """
    if construction not in ("analytic", "quadrature"):
        raise ValueError(f"unknown construction {construction!r}")
    if not isinstance(d, ShockDistribution):
        d = ShockDistribution.of(d)
    w = d.mix_weight_cont
    parts = []
    a1 = a2 = math.inf
    lc = rc = False
    labels = []
    p_neg = p_zero = 0.0
    if d.discrete_part is not None and w < 1:
        spec = d.discrete_part
        vals, logp = _discrete_parts(spec, tol)
        parts.append((1 - w, _discrete_moments(vals, logp)))
        labels.append("analytic")
        p_zero += (1 - w) * float(spec.p0)
    if d.continuous_part is not None and w > 0:
        cp = d.continuous_part
        fn, c1, c2, clc, crc, lab = _continuous_model(cp, construction)
        parts.append((w, fn))
        labels.append(lab)
        if c1 < a1:
            a1, lc = c1, clc
        if c2 < a2:
            a2, rc = c2, crc
        if cp.support_lower < 0:
            p_neg += w * float(cp.cdf(0.0))
    if not (a1 > 0 and a2 > 0):
        raise MgfUndefined("no neighbourhood of 0 where R_X converges")
    moments = parts[0][1] if len(parts) == 1 else _mixture(parts)
    model = MgfModel(
        moments=moments,
        a1=a1,
        a2=a2,
        mean=d.mean(),
        construction="quadrature" if "quadrature" in labels else "analytic",
        p_neg=p_neg,
        p_zero=p_zero,
        has_ac_component=d.has_absolutely_continuous_component,
        left_closed=lc,
        right_closed=rc,
        dist=d,
    )
    lr0 = model.log_r_x(0.0)
    if abs(math.expm1(lr0)) > 1e-10:
        raise MgfUndefined(f"R_X(0) = {math.exp(lr0)!r}, not 1")
    return model


# ---------------------------------------------------------------------------
# Endpoint behaviour and condition (C)
# ---------------------------------------------------------------------------


def _approach(model: MgfModel, side: int, steps: int = 60):
    """Points approaching the ``side`` endpoint (-1 left, +1 right) of the interval."""
    a = model.a1 if side < 0 else model.a2
    if math.isinf(a):
        for k in range(steps):
            yield side * 2.0 ** k
    else:
        for k in range(1, 16):
            yield side * (a - a * 10.0 ** -k)
        closed = model.left_closed if side < 0 else model.right_closed
        if closed:
            yield side * a


class Verdict(str, enum.Enum):
    YES = "yes"
    NO = "no"
    UNDETERMINED = "undetermined"


@dataclass(frozen=True)
class ConditionReport:
    """Outcome of the ``lim_{h -> -a1} mbar_X(h) < 0`` test.

    ``limit_value`` is the limit when established, otherwise an upper bound
    read off the approach grid (``mbar_X`` is increasing, so every grid value
    bounds the limit from above).  ``endpoint_derivative`` holds ``R_X'`` at a
    closed left endpoint.
    """

    satisfied: Verdict
    limit_value: float
    rationale: tuple[str, ...] = field(default_factory=tuple)
    endpoint_derivative: float | None = None

    def __bool__(self):
        return self.satisfied is Verdict.YES


def condition_c_check(model: MgfModel) -> ConditionReport:
    if model.nonnegative:
        return ConditionReport(Verdict.NO, model.mbar_x(-model.a1) if model.left_closed else 0.0,
                               ("X1 >= 0 almost surely, so mbar_X stays >= 0",))
    if math.isinf(model.a1):
        # lim mbar_X = essential infimum of X < 0
        last = math.nan
        for lam in _approach(model, -1):
            last = model.mbar_x(lam)
            if last < 0:
                break
        return ConditionReport(Verdict.YES, last,
                               ("a1 = inf and P[X1 < 0] > 0: mbar_X tends to ess inf X1 < 0",
                                f"mbar_X reached {last!r}"))
    trace = []
    last = math.nan
    for lam in _approach(model, -1):
        if model.left_closed and lam == -model.a1:
            lr, m, _ = model.moments(lam)
            deriv = math.exp(lr) * m
            trace.append(f"R_X({lam}) = {math.exp(lr)!r} finite, R_X'({lam}) = {deriv!r}")
            verdict = Verdict.YES if m < 0 else Verdict.NO
            trace.append(f"limit of mbar_X is R_X'/R_X at the closed endpoint = {m!r}")
            return ConditionReport(verdict, m, tuple(trace), deriv)
        last = model.mbar_x(lam)
        if last < 0:
            trace.append(f"mbar_X({lam}) = {last!r} < 0 bounds the limit from above")
            return ConditionReport(Verdict.YES, last, tuple(trace))
    trace.append(f"grid value {last!r} >= 0 near the open endpoint; limit not established")
    return ConditionReport(Verdict.UNDETERMINED, last, tuple(trace))


def f2_endpoint_integrals() -> tuple[float, float]:
    """``(int_{-inf}^0 (z+1)/(1+z^4) dz, int_0^inf (z+1) e^{-2z}/(1+z^4) dz)``.

    Their sum times ``c e^{-1}`` is ``R_X'(-1)`` for ``f2``.
    """
    neg = integrate.quad(lambda z: (z + 1) / (1 + z**4), -math.inf, 0, **_QUAD)[0]
    pos = integrate.quad(lambda z: (z + 1) * math.exp(-2 * z) / (1 + z**4), 0, math.inf, **_QUAD)[0]
    return neg, pos


# ---------------------------------------------------------------------------
# Tilt solving
# ---------------------------------------------------------------------------


def _solve_mbar_x(model: MgfModel, z: float) -> float:
    """``lam`` with ``mbar_X(lam) = z`` by safeguarded Newton."""
    g0 = model.mbar_x(0.0) - z
    if g0 == 0:
        return 0.0
    side = -1 if g0 > 0 else 1
    lo = hi = 0.0
    found = False
    for lam in _approach(model, side):
        g = model.mbar_x(lam) - z
        if (g < 0) if side < 0 else (g > 0):
            lo, hi = (lam, hi) if side < 0 else (lo, lam)
            found = True
            break
        if g == 0 and not (math.isinf(model.a1 if side < 0 else model.a2)):
            return lam
        if side < 0:
            hi = lam
        else:
            lo = lam
    if not found:
        raise TargetOutOfRange(f"tilted mean {z!r} is outside the range of mbar_X")
    lam = 0.5 * (lo + hi)
    for _ in range(200):
        _, m, v = model.moments(lam)
        g = m - z
        if abs(g) <= 1e-13 * max(1.0, abs(z)):
            return lam
        if g < 0:
            lo = lam
        else:
            hi = lam
        step = lam - g / v if v > 0 else math.nan
        lam = step if lo < step < hi else 0.5 * (lo + hi)
        if hi - lo <= 4 * np.finfo(float).eps * max(1.0, abs(lam)):
            break
    return lam


def tilt_solve(model: MgfModel, target_mean: float) -> float:
    """``h`` with ``mbar(h) = target_mean`` for the centred variable ``Y``.

    The residual is below ``1e-10`` (relative for targets larger than 1).
    """
    lam = _solve_mbar_x(model, model.mean - target_mean)
    h = -lam if lam != 0 else 0.0
    res = abs(model.mbar(h) - target_mean)
    if res >= RESIDUAL_TOL * max(1.0, abs(target_mean)):
        raise EngineError(f"tilt residual {res!r} above {RESIDUAL_TOL}")
    return h


@dataclass(frozen=True)
class TiltResult:
    h_inf: float
    ld_rate: float
    sigma_bar: float

    def prefactor(self, n: int, x: float) -> float:
        return math.exp(self.log_prefactor(n, x))

    def log_prefactor(self, n: int, x: float) -> float:
        h = self.h_inf
        return -self.ld_rate * n + x * h - math.log(h * self.sigma_bar * math.sqrt(2 * math.pi * n))

    @property
    def ratio_limit(self) -> float:
        return math.exp(-self.ld_rate)


def _tilt_at(model: MgfModel, c: float) -> TiltResult:
    h = tilt_solve(model, c)
    rate = h * c - model.log_r(h)
    return TiltResult(h, rate, math.sqrt(model.sigma2(h)))


def cramer_tilt(model: MgfModel) -> TiltResult:
    """Maximiser of ``h E - log R(h)`` with rate and tilted deviation."""
    return _tilt_at(model, model.mean)


def _check_cramer(model: MgfModel):
    if not model.mean > 0:
        raise PreconditionError("E[X1] <= 0: the ratio limit is trivially 1")
    if not model.p_neg > 0:
        raise PreconditionError("P[X1 < 0] = 0: use the nonnegative engines")
    if not model.has_ac_component:
        raise PreconditionError("the law has no absolutely continuous component")
    rep = condition_c_check(model)
    if rep.satisfied is not Verdict.YES:
        raise ConditionFailed(f"condition (C) is {rep.satisfied.value}: {'; '.join(rep.rationale)}")


def cramer_survival_asymptotic(model: MgfModel, x: float, n: int) -> float:
    """``exp(-alpha n + x h) / (h sigma sqrt(2 pi n))`` at the Cramér tilt."""
    _check_cramer(model)
    return cramer_tilt(model).prefactor(n, x)


def cramer_ratio_limit(model: MgfModel) -> float:
    """Limit ``exp(-alpha)`` of ``c_{n+1,x} / c_{n,x}``."""
    _check_cramer(model)
    return cramer_tilt(model).ratio_limit


def cramer_concentration(model: MgfModel, c: float, x: float, n: int) -> float:
    """Concentration equivalent with ``h_c = argmax {h c - log R(h)}``.

    The tilt maximises ``h c - log R(h)`` exactly as the functional is
    written, so ``c -> E[X1]`` recovers the Cramér tilt.
    """
    if not (0 < c < model.mean):
        raise PreconditionError(f"c = {c} must lie in (0, E[X1] = {model.mean})")
    _check_cramer(model)
    return _tilt_at(model, c).prefactor(n, x)


def concentration_tilt(model: MgfModel, c: float) -> TiltResult:
    if not (0 < c < model.mean):
        raise PreconditionError(f"c = {c} must lie in (0, E[X1] = {model.mean})")
    return _tilt_at(model, c)


# ---------------------------------------------------------------------------
# Legendre transform for nonnegative shocks
# ---------------------------------------------------------------------------


def legendre_at(model: MgfModel, z: float) -> float:
    """``sup_lam {lam z - log R_X(lam)}`` for a nonnegative shock.

    The supremum is over ``lam <= 0`` when ``z <= E[X1]`` and over
    ``lam >= 0`` otherwise.  At ``z = 0`` it equals ``-log P[X1 = 0]``.
    """
    if not model.nonnegative:
        raise PreconditionError("legendre_at needs a nonnegative shock law")
    if z < 0:
        raise PreconditionError("z must be nonnegative")
    if z == 0:
        return -math.log(model.p_zero) if model.p_zero > 0 else math.inf
    if z == model.mean:
        return 0.0
    try:
        lam = _solve_mbar_x(model, z)
    except TargetOutOfRange:
        if z < model.mean:
            return math.inf
        raise
    return lam * z - model.log_r_x(lam)


# ---------------------------------------------------------------------------
# Class-C2 sandwiches
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Band:
    lower: float
    upper: float
    optimizer: float | None = None

    def contains(self, v: float) -> bool:
        return self.lower <= v <= self.upper

    def inside(self, other: "Band") -> bool:
        """Strictly inside ``other``."""
        return other.lower < self.lower and self.upper < other.upper


def _c2_parts(spec: DiscreteSpec):
    p0 = float(spec.p0)
    if not p0 > 0 or not spec.x_min > 0:
        raise NotClassC2("needs P[X1 = 0] > 0 and a positive smallest value")
    return p0, float(spec.x_min)


def ld_bounds_c2(spec: DiscreteSpec, x: float, n: int, C: float) -> Band:
    """Band ``log p0 <= (1/n) log c_n <= log p0 + C (x/x_min) log(n)/n``.

    ``optimizer`` is the minimising exponent ``y_n`` of the Chernoff bound.
    """
    p0, xm = _c2_parts(spec)
    if not C > 1:
        raise PreconditionError("C must exceed 1")
    if not xm * p0 > x / n:
        raise NTooSmall(f"x_min p0 = {xm * p0} <= x/n = {x / n}")
    lo = math.log(p0)
    y_n = (math.log(x / n) - math.log((1 - p0) / p0 * (xm - x / n))) / xm
    return Band(lo, lo + C * (x / xm) * math.log(n) / n, y_n)


def ratio_limit_bounds_c2(spec: DiscreteSpec, x: float, n: int, c_x: float, C_x: float) -> Band:
    """Band ``log p0 + (c_x/p0) log(n)/n <= (1/n) log c_n <= log p0 + (C_x/p0) log(n)/n``."""
    p0, _ = _c2_parts(spec)
    pm = p0 * _m_x(spec, x)
    if not (0 < c_x < pm < C_x):
        raise ConstantsOutOfOrder(f"need 0 < c_x < p0 M_x = {pm} < C_x, got c_x={c_x}, C_x={C_x}")
    base, t = math.log(p0), math.log(n) / n
    return Band(base + c_x / p0 * t, base + C_x / p0 * t)
