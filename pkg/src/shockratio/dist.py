"""Shock-distribution data model, class membership and near-zero diagnostics.

A shock law is either purely atomic (:class:`DiscreteSpec`), absolutely
continuous (:class:`DensitySpec`) or a mixture of both.  Atom values and
probabilities are stored as exact :class:`fractions.Fraction` so that the
discrete engine can work in rational arithmetic; floats given by the caller
are read through their shortest decimal representation.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, special

from .errors import InvalidDistribution, NonDifferentiable, TailBoundTooLoose

MASS_TOL = 1e-12
DEFAULT_TAIL_TOL = 1e-12
_MAX_GENERATOR_INDEX = 200_000


def as_fraction(v) -> Fraction:
    """Exact rational view of a number; floats go through their repr."""
    if isinstance(v, Fraction):
        return v
    if isinstance(v, (int, np.integer)):
        return Fraction(int(v))
    if isinstance(v, (float, np.floating)):
        if not math.isfinite(v):
            raise InvalidDistribution(f"non-finite number {v!r}")
        return Fraction(repr(float(v)))
    if isinstance(v, str):
        return Fraction(v)
    raise InvalidDistribution(f"cannot interpret {v!r} as a real number")


# ---------------------------------------------------------------------------
# Discrete laws
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TailGenerator:
    """Rule producing atoms beyond the explicit list.

    ``atoms_at(k)`` returns the atoms attached to index ``k`` (``k >= start``),
    ``mass_from(k)`` is the exact total probability carried by all indices
    ``>= k``.  ``infimum`` is the infimum of every generated value and
    ``attains_infimum`` tells whether that infimum is itself generated.
    """

    atoms_at: Callable[[int], Sequence[tuple[Fraction, Fraction]]]
    mass_from: Callable[[int], Fraction]
    start: int
    infimum: Fraction
    attains_infimum: bool = False
    label: str = "generator"


@dataclass(frozen=True, eq=False)
class DiscreteSpec:
    """Purely atomic law: mass ``p0`` at zero plus positive atoms.

    ``rv_index_alpha`` may be declared for laws accumulating at zero (class
    C3); it is the exponent in ``F(t) - F(0) = O(t^alpha)``.
    """

    p0: Fraction
    atoms: tuple[tuple[Fraction, Fraction], ...]
    tail_generator: TailGenerator | None = None
    rv_index_alpha: float | None = None

    def __post_init__(self):
        p0 = as_fraction(self.p0)
        pairs = sorted((as_fraction(v), as_fraction(p)) for v, p in self.atoms)
        merged: list[tuple[Fraction, Fraction]] = []
        for v, p in pairs:
            if v <= 0:
                raise InvalidDistribution(f"atom value {v} must be > 0 (use p0 for zero)")
            if p <= 0:
                raise InvalidDistribution(f"atom probability {p} must be > 0")
            if merged and merged[-1][0] == v:
                raise InvalidDistribution(f"duplicate atom value {v}")
            merged.append((v, p))
        if p0 < 0:
            raise InvalidDistribution("p0 must be nonnegative")
        object.__setattr__(self, "p0", p0)
        object.__setattr__(self, "atoms", tuple(merged))
        total = p0 + sum(p for _, p in merged) + self.tail_mass
        if abs(float(total) - 1.0) > MASS_TOL:
            raise InvalidDistribution(f"total mass {float(total)!r} differs from 1")

    @property
    def tail_mass(self) -> Fraction:
        g = self.tail_generator
        return Fraction(0) if g is None else as_fraction(g.mass_from(g.start))

    @cached_property
    def x_min(self) -> Fraction:
        cands = []
        if self.atoms:
            cands.append(self.atoms[0][0])
        if self.tail_generator is not None:
            cands.append(self.tail_generator.infimum)
        if not cands:
            raise InvalidDistribution("no positive atoms")
        return min(cands)

    @cached_property
    def x_min_attained(self) -> bool:
        xm = self.x_min
        if self.atoms and self.atoms[0][0] == xm:
            return True
        g = self.tail_generator
        return bool(g is not None and g.infimum == xm and g.attains_infimum)

    def expand(self, k_max: int) -> tuple[tuple[tuple[Fraction, Fraction], ...], Fraction]:
        """Explicit atoms plus generated ones for indices ``< k_max``.

        Returns the merged sorted atom list and the residual (dropped) mass.
        """
        g = self.tail_generator
        if g is None or k_max <= g.start:
            return self.atoms, self.tail_mass
        acc: dict[Fraction, Fraction] = dict(self.atoms)
        for k in range(g.start, k_max):
            for v, p in g.atoms_at(k):
                v, p = as_fraction(v), as_fraction(p)
                acc[v] = acc.get(v, Fraction(0)) + p
        return tuple(sorted(acc.items())), as_fraction(g.mass_from(k_max))

    def truncate(self, tol: float = DEFAULT_TAIL_TOL):
        """Smallest expansion whose dropped mass is at most ``tol``."""
        g = self.tail_generator
        if g is None:
            return self.atoms, Fraction(0)
        k = g.start
        while float(g.mass_from(k)) > tol:
            k += 1
            if k > _MAX_GENERATOR_INDEX:
                raise TailBoundTooLoose(f"tail mass stays above {tol} up to index {k}")
        return self.expand(k)

    @property
    def values(self) -> np.ndarray:
        return np.array([float(v) for v, _ in self.atoms])

    @property
    def probs(self) -> np.ndarray:
        return np.array([float(p) for _, p in self.atoms])

    def mean(self, tol: float = DEFAULT_TAIL_TOL) -> float:
        atoms, _ = self.truncate(tol)
        return math.fsum(float(v * p) for v, p in atoms)


def exotic_spec(head: int = 40) -> DiscreteSpec:
    """Class-C2 law whose smallest positive value 1 is a limit, not an atom.

    Mass 1/2 at zero; atoms ``1 + 1/k`` and ``2 - 1/(k+1)`` each with
    probability ``2^-(k+2)`` for ``k >= 1`` (the value 3/2 occurs in both
    families and carries their combined mass).  Indices ``k <= head`` are
    listed explicitly, the rest come from the tail generator.
    """

    def atoms_at(k: int):
        p = Fraction(1, 2 ** (k + 2))
        return ((1 + Fraction(1, k), p), (2 - Fraction(1, k + 1), p))

    explicit: dict[Fraction, Fraction] = {}
    for k in range(1, head + 1):
        for v, p in atoms_at(k):
            explicit[v] = explicit.get(v, Fraction(0)) + p
    gen = TailGenerator(
        atoms_at=atoms_at,
        mass_from=lambda k: Fraction(2, 2 ** (k + 1)),
        start=head + 1,
        infimum=Fraction(1),
        attains_infimum=False,
        label="exotic",
    )
    return DiscreteSpec(Fraction(1, 2), tuple(explicit.items()), gen)


def dyadic_spec(p0=Fraction(1, 2), head: int = 8) -> DiscreteSpec:
    """Class-C3 law: atoms ``2^-j`` with probability ``(1-p0) 2^-j``, ``j >= 1``."""
    p0 = as_fraction(p0)
    q = 1 - p0

    def atoms_at(j: int):
        return ((Fraction(1, 2**j), q / 2**j),)

    explicit = tuple(atoms_at(j)[0] for j in range(1, head + 1))
    gen = TailGenerator(
        atoms_at=atoms_at,
        mass_from=lambda j: q / 2 ** (j - 1),
        start=head + 1,
        infimum=Fraction(0),
        attains_infimum=False,
        label="dyadic",
    )
    return DiscreteSpec(p0, explicit, gen, rv_index_alpha=1.0)


# ---------------------------------------------------------------------------
# Density families
# ---------------------------------------------------------------------------


class DensityFamily:
    """Interface shared by the analytic density families.

    Subclasses provide vectorised ``pdf``, ``dpdf``, ``cdf`` and ``quantile``.
    Families supported on ``[0, inf)`` also provide ``partial_mean(t)``, the
    integral of ``s f(s)`` over ``[0, t]``, which the grid engine needs.
    """

    support: tuple[float, float] = (0.0, math.inf)
    rv_index_alpha: float | None = None
    # Declared regularity: density C1 on (0, inf) with monotone derivative near 0.
    c1_monotone_near_zero: bool = False

    def pdf(self, t):
        raise NotImplementedError

    def dpdf(self, t):
        raise NotImplementedError

    def logpdf(self, t):
        with np.errstate(divide="ignore"):
            return np.log(self.pdf(t))

    def cdf(self, t):
        raise NotImplementedError

    def quantile(self, p):
        raise NotImplementedError

    def partial_mean(self, t):
        raise NotImplementedError

    @property
    def mean(self) -> float:
        raise NotImplementedError

    def sup_pdf(self, a: float, b: float) -> float:
        ts = np.linspace(a, b, 2001)
        return float(np.max(self.pdf(ts)))

    def params(self) -> dict:
        return {}


@dataclass(frozen=True)
class PowerLawOnInterval(DensityFamily):
    """``f(t) = alpha t^(alpha-1) / u^alpha`` on ``(0, u]``."""

    alpha: float
    upper: float = 1.0
    c1_monotone_near_zero = True

    def __post_init__(self):
        if not (self.alpha > 0 and self.upper > 0):
            raise InvalidDistribution("PowerLawOnInterval needs alpha > 0 and upper > 0")

    @property
    def support(self):
        return (0.0, float(self.upper))

    @property
    def rv_index_alpha(self):
        return float(self.alpha)

    def pdf(self, t):
        t = np.asarray(t, dtype=float)
        a, u = self.alpha, self.upper
        inside = (t > 0) & (t <= u)
        return np.where(inside, a * np.power(np.where(inside, t, 1.0), a - 1) / u**a, 0.0)

    def dpdf(self, t):
        t = np.asarray(t, dtype=float)
        return np.where((t > 0) & (t < self.upper), (self.alpha - 1) * self.pdf(t) / np.where(t > 0, t, 1.0), 0.0)

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        return np.clip(np.power(np.clip(t, 0, None) / self.upper, self.alpha), 0.0, 1.0)

    def partial_mean(self, t):
        t = np.clip(np.asarray(t, dtype=float), 0.0, self.upper)
        a = self.alpha
        return a / (a + 1) * t ** (a + 1) / self.upper**a

    def quantile(self, p):
        return self.upper * np.power(np.asarray(p, dtype=float), 1.0 / self.alpha)

    @property
    def mean(self):
        return self.alpha / (self.alpha + 1) * self.upper

    def sup_pdf(self, a, b):
        return float(max(self.pdf(a), self.pdf(min(b, self.upper))))

    def params(self):
        return {"family": "power_law", "alpha": self.alpha, "upper": self.upper}


@dataclass(frozen=True)
class GammaLike(DensityFamily):
    """Gamma density with shape ``k`` and scale ``theta``."""

    k: float
    theta: float = 1.0
    c1_monotone_near_zero = True

    def __post_init__(self):
        if not (self.k > 0 and self.theta > 0):
            raise InvalidDistribution("GammaLike needs k > 0 and theta > 0")

    @property
    def rv_index_alpha(self):
        return float(self.k)

    def pdf(self, t):
        t = np.asarray(t, dtype=float)
        pos = t > 0
        tt = np.where(pos, t, 1.0)
        k, th = self.k, self.theta
        logf = (k - 1) * np.log(tt) - tt / th - special.gammaln(k) - k * math.log(th)
        return np.where(pos, np.exp(logf), 0.0)

    def dpdf(self, t):
        t = np.asarray(t, dtype=float)
        tt = np.where(t > 0, t, 1.0)
        return np.where(t > 0, self.pdf(t) * ((self.k - 1) / tt - 1 / self.theta), 0.0)

    def cdf(self, t):
        return special.gammainc(self.k, np.clip(np.asarray(t, dtype=float), 0, None) / self.theta)

    def partial_mean(self, t):
        t = np.clip(np.asarray(t, dtype=float), 0, None)
        return self.k * self.theta * special.gammainc(self.k + 1, t / self.theta)

    def quantile(self, p):
        return self.theta * special.gammaincinv(self.k, np.asarray(p, dtype=float))

    @property
    def mean(self):
        return self.k * self.theta

    def params(self):
        return {"family": "gamma", "k": self.k, "theta": self.theta}


@dataclass(frozen=True)
class ConstantNearZero(DensityFamily):
    """Density ``c`` on ``[0, eps]`` followed by an optional tail.

    ``tail_shape="none"`` requires ``c * eps == 1`` (uniform law).  With
    ``"exponential"`` the remaining mass ``1 - c eps`` decays as
    ``c exp(-lam (t - eps))``, ``lam = c / (1 - c eps)``, which keeps the
    density continuous at ``eps``.  ``"auto"`` picks ``none`` when the plateau
    already carries all the mass.
    """

    c: float
    eps: float
    tail_shape: str = "auto"

    def __post_init__(self):
        if not (self.c > 0 and self.eps > 0):
            raise InvalidDistribution("ConstantNearZero needs c > 0 and eps > 0")
        mass = self.c * self.eps
        shape = self.tail_shape
        if shape == "auto":
            shape = "none" if abs(mass - 1) <= MASS_TOL else "exponential"
            object.__setattr__(self, "tail_shape", shape)
        if shape == "none" and abs(mass - 1) > MASS_TOL:
            raise InvalidDistribution("tail_shape='none' requires c*eps == 1")
        if shape == "exponential" and mass >= 1:
            raise InvalidDistribution("exponential tail requires c*eps < 1")
        if shape not in ("none", "exponential"):
            raise InvalidDistribution(f"unknown tail_shape {shape!r}")

    rv_index_alpha = 1.0

    @property
    def lam(self) -> float:
        return self.c / (1 - self.c * self.eps)

    @property
    def support(self):
        return (0.0, self.eps if self.tail_shape == "none" else math.inf)

    def pdf(self, t):
        t = np.asarray(t, dtype=float)
        plateau = np.where((t >= 0) & (t <= self.eps), self.c, 0.0)
        if self.tail_shape == "none":
            return plateau
        tail = np.where(t > self.eps, self.c * np.exp(-self.lam * np.clip(t - self.eps, 0, None)), 0.0)
        return plateau + tail

    def dpdf(self, t):
        t = np.asarray(t, dtype=float)
        if self.tail_shape == "none":
            return np.zeros_like(t)
        return np.where(t > self.eps, -self.lam * self.pdf(t), 0.0)

    def cdf(self, t):
        t = np.clip(np.asarray(t, dtype=float), 0, None)
        head = self.c * np.minimum(t, self.eps)
        if self.tail_shape == "none":
            return head
        return head + (self.c / self.lam) * -np.expm1(-self.lam * np.clip(t - self.eps, 0, None))

    def partial_mean(self, t):
        t = np.clip(np.asarray(t, dtype=float), 0, None)
        e = self.eps
        head = 0.5 * self.c * np.minimum(t, e) ** 2
        if self.tail_shape == "none":
            return head
        lam = self.lam
        d = np.clip(t - e, 0, None)
        tt = e + d
        tail = self.c * ((e / lam + 1 / lam**2) - (tt / lam + 1 / lam**2) * np.exp(-lam * d))
        return head + tail

    def quantile(self, p):
        p = np.asarray(p, dtype=float)
        m = self.c * self.eps
        head = p / self.c
        if self.tail_shape == "none":
            return head
        with np.errstate(divide="ignore"):
            tail = self.eps - np.log(np.clip((1 - p) / (1 - m), 0, None)) / self.lam
        return np.where(p <= m, head, tail)

    @property
    def mean(self):
        e = self.eps
        if self.tail_shape == "none":
            return 0.5 * self.c * e * e
        lam = self.lam
        return 0.5 * self.c * e * e + self.c * (e / lam + 1 / lam**2)

    def sup_pdf(self, a, b):
        return float(self.c) if a <= self.eps or self.tail_shape == "exponential" else 0.0

    def params(self):
        return {"family": "constant", "c": self.c, "eps": self.eps, "tail_shape": self.tail_shape}


@dataclass(frozen=True)
class ShiftedTwoSidedExponential(DensityFamily):
    """Laplace density ``exp(-|y - 1|) / 2`` on the whole line (``f1``)."""

    support = (-math.inf, math.inf)
    rv_index_alpha = None

    def pdf(self, t):
        return 0.5 * np.exp(-np.abs(np.asarray(t, dtype=float) - 1.0))

    def logpdf(self, t):
        return -math.log(2) - np.abs(np.asarray(t, dtype=float) - 1.0)

    def dpdf(self, t):
        t = np.asarray(t, dtype=float)
        return -np.sign(t - 1.0) * self.pdf(t)

    def cdf(self, t):
        z = np.asarray(t, dtype=float) - 1.0
        return np.where(z < 0, 0.5 * np.exp(np.minimum(z, 0)), 1 - 0.5 * np.exp(-np.maximum(z, 0)))

    def quantile(self, p):
        p = np.asarray(p, dtype=float)
        with np.errstate(divide="ignore"):
            return np.where(p < 0.5, 1 + np.log(2 * p), 1 - np.log(2 * (1 - p)))

    @property
    def mean(self):
        return 1.0

    def params(self):
        return {"family": "f1"}


def _f2_shape(z):
    z = np.asarray(z, dtype=float)
    return np.exp(-np.abs(z)) / (1 + z**4)


@dataclass(frozen=True)
class ShiftedDampedExponential(DensityFamily):
    """``c exp(-|y - 1|) / (1 + (y - 1)^4)`` on the whole line (``f2``).

    The normaliser ``c`` is computed by quadrature.
    """

    support = (-math.inf, math.inf)
    rv_index_alpha = None

    @cached_property
    def norm_const(self) -> float:
        half, _ = integrate.quad(lambda z: math.exp(-z) / (1 + z**4), 0, math.inf, epsabs=0, epsrel=1e-13, limit=200)
        return 1.0 / (2 * half)

    def pdf(self, t):
        return self.norm_const * _f2_shape(np.asarray(t, dtype=float) - 1.0)

    def logpdf(self, t):
        z = np.asarray(t, dtype=float) - 1.0
        return math.log(self.norm_const) - np.abs(z) - np.log1p(z**4)

    def dpdf(self, t):
        z = np.asarray(t, dtype=float) - 1.0
        return self.pdf(t) * (-np.sign(z) - 4 * z**3 / (1 + z**4))

    def cdf(self, t):
        def one(tv):
            z = tv - 1.0
            if z <= 0:
                v, _ = integrate.quad(lambda s: math.exp(s) / (1 + s**4), -math.inf, z, epsabs=0, epsrel=1e-12, limit=200)
                return self.norm_const * v
            v, _ = integrate.quad(lambda s: math.exp(-s) / (1 + s**4), z, math.inf, epsabs=0, epsrel=1e-12, limit=200)
            return 1 - self.norm_const * v

        return np.vectorize(one, otypes=[float])(np.asarray(t, dtype=float))

    def quantile(self, p):
        raise NotImplementedError("f2 is sampled by rejection, not inversion")

    @property
    def mean(self):
        return 1.0

    def params(self):
        return {"family": "f2"}


@dataclass(frozen=True, eq=False)
class Tabulated(DensityFamily):
    """Density tabulated on a strictly increasing grid of points in ``[0, inf)``.

    Between nodes the density is linear; outside the table it is zero.
    """

    t: np.ndarray
    f: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        f = np.asarray(self.f, dtype=float)
        if t.ndim != 1 or t.shape != f.shape or t.size < 2:
            raise InvalidDistribution("tabulated density needs two equal-length columns")
        if np.any(np.diff(t) <= 0):
            raise InvalidDistribution("tabulated abscissae must be strictly increasing")
        if t[0] < 0 or np.any(f < 0) or not np.all(np.isfinite(f)):
            raise InvalidDistribution("tabulated density must be finite, nonnegative, on [0, inf)")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "f", f)

    @classmethod
    def from_csv(cls, path) -> "Tabulated":
        data = np.loadtxt(path, delimiter=",", dtype=float, ndmin=2, comments="#")
        if data.shape[1] != 2:
            raise InvalidDistribution("tabulated CSV must have exactly two columns")
        return cls(data[:, 0], data[:, 1])

    @property
    def support(self):
        return (float(self.t[0]), float(self.t[-1]))

    @cached_property
    def _cum(self):
        dt = np.diff(self.t)
        mass = np.concatenate([[0.0], np.cumsum(0.5 * dt * (self.f[1:] + self.f[:-1]))])
        # exact integral of t*f(t) for piecewise linear f
        t0, t1, f0, f1 = self.t[:-1], self.t[1:], self.f[:-1], self.f[1:]
        seg = dt * (f0 * (2 * t0 + t1) + f1 * (t0 + 2 * t1)) / 6
        first = np.concatenate([[0.0], np.cumsum(seg)])
        return mass, first

    def pdf(self, t):
        return np.interp(np.asarray(t, dtype=float), self.t, self.f, left=0.0, right=0.0)

    def dpdf(self, t):
        t = np.asarray(t, dtype=float)
        i = np.searchsorted(self.t, t)
        bad = (i <= 0) | (i >= self.t.size)
        if np.any(bad):
            raise NonDifferentiable("derivative requested at or beyond a tabulated boundary cell")
        h = self.t[i] - self.t[i - 1]
        return (self.f[i] - self.f[i - 1]) / h

    def _integrate(self, t, cum, weight_first):
        t = np.clip(np.asarray(t, dtype=float), self.t[0], self.t[-1])
        i = np.clip(np.searchsorted(self.t, t, side="right") - 1, 0, self.t.size - 2)
        t0 = self.t[i]
        f0 = self.f[i]
        slope = (self.f[i + 1] - f0) / (self.t[i + 1] - t0)
        d = t - t0
        if weight_first:
            part = f0 * (t**2 - t0**2) / 2 + slope * (t**3 / 3 - t0 * t**2 / 2 + t0**3 / 6)
        else:
            part = f0 * d + 0.5 * slope * d * d
        return cum[i] + part

    def cdf(self, t):
        return self._integrate(t, self._cum[0], False)

    def partial_mean(self, t):
        return self._integrate(t, self._cum[1], True)

    def quantile(self, p):
        # exact inverse of the piecewise quadratic cdf
        p = np.clip(np.asarray(p, dtype=float), 0.0, 1.0)
        cum = self._cum[0]
        i = np.clip(np.searchsorted(cum, p, side="right") - 1, 0, self.t.size - 2)
        t0, f0 = self.t[i], self.f[i]
        slope = (self.f[i + 1] - f0) / (self.t[i + 1] - t0)
        r = np.clip(p - cum[i], 0.0, None)
        disc = np.sqrt(np.clip(f0 * f0 + 2 * slope * r, 0.0, None))
        with np.errstate(divide="ignore", invalid="ignore"):
            # stable root of slope/2 d^2 + f0 d - r = 0
            d = np.where(f0 + disc > 0, 2 * r / (f0 + disc), 0.0)
        return np.clip(t0 + d, self.t[0], self.t[-1])

    @property
    def mean(self):
        return float(self._cum[1][-1])

    @property
    def total_mass(self):
        return float(self._cum[0][-1])

    def params(self):
        return {"family": "tabulated", "points": int(self.t.size)}


@dataclass(frozen=True, eq=False)
class DensitySpec:
    """A density family plus its declared regular-variation index."""

    family: DensityFamily
    rv_index_alpha: float | None = None
    check: bool = True

    def __post_init__(self):
        if self.rv_index_alpha is None and self.family.rv_index_alpha is not None:
            object.__setattr__(self, "rv_index_alpha", float(self.family.rv_index_alpha))
        if self.check:
            mass = total_mass(self.family)
            if abs(mass - 1) > 1e-10:
                raise InvalidDistribution(f"density integrates to {mass!r}, not 1")
            if self.rv_index_alpha is not None and not isinstance(self.family, Tabulated):
                probe = rv_index_probe(self, 1e-8)
                if abs(probe - (self.rv_index_alpha - 1)) > 1e-3:
                    raise InvalidDistribution(
                        f"declared alpha {self.rv_index_alpha} disagrees with t f'/f = {probe} at t=1e-8"
                    )

    @property
    def support_lower(self) -> float:
        return self.family.support[0]

    def __getattr__(self, name):
        # delegate the evaluation interface to the family
        if name in ("pdf", "dpdf", "cdf", "quantile", "partial_mean", "mean", "support", "sup_pdf", "params"):
            return getattr(self.family, name)
        raise AttributeError(name)


def _quad_pdf(fam: DensityFamily, a: float, b: float) -> float:
    alpha = fam.rv_index_alpha
    opts = dict(epsabs=0, epsrel=1e-13, limit=200)
    if a == 0 and alpha is not None and alpha < 1:
        # integrable singularity t^(alpha-1) handled by an algebraic weight
        def g(t):
            t = max(t, 1e-300)
            return float(fam.pdf(t)) * t ** (1 - alpha)

        split = min(b, 1.0)
        v = integrate.quad(g, 0, split, weight="alg", wvar=(alpha - 1, 0), **opts)[0]
        if b > split:
            v += integrate.quad(lambda t: float(fam.pdf(t)), split, b, **opts)[0]
        return v
    return integrate.quad(lambda t: float(fam.pdf(t)), a, b, **opts)[0]


def total_mass(fam: DensityFamily) -> float:
    """Quadrature of the density over its support (independent of ``cdf``)."""
    if isinstance(fam, Tabulated):
        return fam.total_mass
    lo, hi = fam.support
    breaks = [lo, hi]
    if isinstance(fam, (ShiftedTwoSidedExponential, ShiftedDampedExponential)):
        breaks = [lo, 1.0, hi]
    elif isinstance(fam, ConstantNearZero) and fam.tail_shape == "exponential":
        breaks = [lo, fam.eps, hi]
    return math.fsum(_quad_pdf(fam, a, b) for a, b in zip(breaks[:-1], breaks[1:]))


# ---------------------------------------------------------------------------
# Shock distributions and classification
# ---------------------------------------------------------------------------


class Kind(enum.Enum):
    DISCRETE = "Discrete"
    CONTINUOUS = "Continuous"
    MIXED = "Mixed"


@dataclass(frozen=True, eq=False)
class ShockDistribution:
    """Law of a single shock ``X_1``.

    For ``Mixed`` laws ``discrete_part`` is a normalised atomic law and the
    distribution is ``w * continuous + (1 - w) * discrete``.
    """

    kind: Kind
    discrete_part: DiscreteSpec | None = None
    continuous_part: DensitySpec | None = None
    mix_weight_cont: float = 0.0

    def __post_init__(self):
        kind = Kind(self.kind)
        object.__setattr__(self, "kind", kind)
        has_d, has_c = self.discrete_part is not None, self.continuous_part is not None
        expect = {Kind.DISCRETE: (True, False), Kind.CONTINUOUS: (False, True), Kind.MIXED: (True, True)}[kind]
        if (has_d, has_c) != expect:
            raise InvalidDistribution(f"{kind.value} law requires parts discrete={expect[0]} continuous={expect[1]}")
        w = float(self.mix_weight_cont)
        if kind is Kind.MIXED and not (0.0 <= w <= 1.0):
            raise InvalidDistribution("mix_weight_cont must lie in [0, 1]")
        if kind is Kind.CONTINUOUS:
            w = 1.0
        if kind is Kind.DISCRETE:
            w = 0.0
        object.__setattr__(self, "mix_weight_cont", w)

    @classmethod
    def discrete(cls, p0, atoms, **kw) -> "ShockDistribution":
        return cls(Kind.DISCRETE, discrete_part=DiscreteSpec(p0, tuple(atoms), **kw))

    @classmethod
    def of(cls, part) -> "ShockDistribution":
        if isinstance(part, DiscreteSpec):
            return cls(Kind.DISCRETE, discrete_part=part)
        if isinstance(part, DensitySpec):
            return cls(Kind.CONTINUOUS, continuous_part=part)
        if isinstance(part, DensityFamily):
            return cls(Kind.CONTINUOUS, continuous_part=DensitySpec(part))
        raise InvalidDistribution(f"cannot build a distribution from {part!r}")

    @classmethod
    def mixed(cls, weight_cont, continuous, discrete: DiscreteSpec) -> "ShockDistribution":
        if isinstance(continuous, DensityFamily):
            continuous = DensitySpec(continuous)
        return cls(Kind.MIXED, discrete_part=discrete, continuous_part=continuous, mix_weight_cont=weight_cont)

    @property
    def nonnegative(self) -> bool:
        if self.continuous_part is not None and self.continuous_part.support_lower < 0:
            return False
        return True

    @property
    def has_absolutely_continuous_component(self) -> bool:
        return self.continuous_part is not None and self.mix_weight_cont > 0

    def mean(self) -> float:
        w = self.mix_weight_cont
        m = 0.0
        if self.continuous_part is not None:
            m += w * self.continuous_part.mean
        if self.discrete_part is not None:
            m += (1 - w) * self.discrete_part.mean()
        return m


@dataclass(frozen=True)
class ClassLabel:
    label: str
    evidence: tuple[str, ...] = field(default_factory=tuple)

    def __str__(self):
        return self.label


def _c3_order_test(spec: DiscreteSpec, alpha: float) -> tuple[bool, str]:
    """Check that ``cdf_small(t) / t^alpha`` stays bounded as ``t -> 0``."""
    ts = 2.0 ** -np.arange(1, 31)
    d = ShockDistribution.of(spec)
    ratios = np.array([cdf_small(d, t) / t**alpha for t in ts])
    # bounded: the second half of the dyadic grid does not exceed the first
    head, tail = ratios[:15], ratios[15:]
    ok = bool(np.all(np.isfinite(ratios)) and tail.max() <= 2 * head.max())
    return ok, f"sup ratio (t<=2^-16) {tail.max():.4g} vs (t>2^-16) {head.max():.4g}"


def classify(d: ShockDistribution) -> ClassLabel:
    """Place a shock law into one of the classes C1 to C5."""
    ev: list[str] = []
    if d.kind is Kind.DISCRETE:
        s = d.discrete_part
        xm = s.x_min
        ev.append(f"p0={s.p0}, x_min={xm}, x_min attained={s.x_min_attained}")
        if xm > 0 and s.p0 == 0:
            ev.append("support bounded away from zero")
            return ClassLabel("C1", tuple(ev))
        if xm > 0 and s.p0 > 0:
            ev.append("zero atom present and x_min > 0")
            return ClassLabel("C2", tuple(ev))
        ev.append("positive atoms accumulate at zero")
        ev.append("zero is an atom" if s.p0 > 0 else "zero is not an atom")
        if s.rv_index_alpha is None:
            ev.append("no declared alpha for F(t)-F(0)=O(t^alpha)")
            return ClassLabel("Unclassified", tuple(ev))
        ok, msg = _c3_order_test(s, s.rv_index_alpha)
        ev.append(f"F(t)-F(0)=O(t^{s.rv_index_alpha}): {ok} ({msg})")
        return ClassLabel("C3" if ok else "Unclassified", tuple(ev))

    c = d.continuous_part
    fam = c.family
    if c.support_lower < 0:
        ev.append("real-supported law; the classes concern nonnegative shocks")
        return ClassLabel("Unclassified", tuple(ev))
    c4 = c.rv_index_alpha is not None and fam.c1_monotone_near_zero
    ev.append(f"declared alpha={c.rv_index_alpha}, C1 with monotone derivative near 0={fam.c1_monotone_near_zero}")
    if d.kind is Kind.CONTINUOUS:
        if c4:
            ev.append("density regularly varying at 0")
            return ClassLabel("C4", tuple(ev))
        return ClassLabel("Unclassified", tuple(ev))
    s = d.discrete_part
    ev.append(f"mixture weight of continuous part={d.mix_weight_cont}")
    ev.append(f"atoms: p0={s.p0}, x_min={s.x_min}")
    if c4 and s.p0 == 0 and s.x_min > 0:
        ev.append("atoms bounded away from zero")
        return ClassLabel("C5", tuple(ev))
    return ClassLabel("Unclassified", tuple(ev))


def rv_index_probe(f: DensitySpec | DensityFamily, t: float) -> float:
    """``t f'(t) / f(t)``, the local regular-variation exponent at ``t``."""
    fam = f.family if isinstance(f, DensitySpec) else f
    if isinstance(fam, Tabulated):
        i = int(np.searchsorted(fam.t, t))
        if i <= 0 or i >= fam.t.size - 1:
            raise NonDifferentiable("central difference needs an interior grid cell")
        left, right = fam.t[i - 1], fam.t[i + 1]
        deriv = (fam.pdf(right) - fam.pdf(left)) / (right - left)
        return float(t * deriv / fam.pdf(t))
    return float(t * fam.dpdf(t) / fam.pdf(t))


@dataclass(frozen=True)
class CheckResult:
    ok: bool
    detail: str = ""

    def __bool__(self):
        return self.ok


def power_monotone_check(f: DensitySpec | DensityFamily, theta: float, eps: float, grid_points: int) -> CheckResult:
    """Check that ``t^theta f(t)`` is monotone on ``(0, eps]``.

    The direction is non-decreasing when ``theta + alpha - 1 > 0`` and
    non-increasing otherwise.  The grid is geometric so that the behaviour
    near zero is sampled.
    """
    fam = f.family if isinstance(f, DensitySpec) else f
    alpha = (f.rv_index_alpha if isinstance(f, DensitySpec) else fam.rv_index_alpha)
    if grid_points < 2:
        raise ValueError("grid_points must be >= 2")
    ts = np.geomspace(eps * 1e-8, eps, grid_points)
    g = ts**theta * fam.pdf(ts)
    increasing = theta + (alpha - 1) > 0
    d = np.diff(g)
    tol = 1e-12 * np.maximum(np.abs(g[1:]), np.abs(g[:-1]))
    bad = np.nonzero(d < -tol)[0] if increasing else np.nonzero(d > tol)[0]
    direction = "non-decreasing" if increasing else "non-increasing"
    if bad.size:
        i = int(bad[0])
        return CheckResult(False, f"not {direction}: g({ts[i]:.6g})={g[i]:.6g}, g({ts[i + 1]:.6g})={g[i + 1]:.6g}")
    return CheckResult(True, direction)


def cdf_small(d: ShockDistribution, t: float, tol: float = DEFAULT_TAIL_TOL) -> float:
    """Mass of ``(0, t]``, that is ``F(t) - F(0)``.

    For generator-backed atom sets the generator is expanded until the
    dropped mass is below ``tol``; dropped atoms are unaccounted for, so the
    result is exact to within ``tol``.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    total = 0.0
    w = d.mix_weight_cont
    if d.discrete_part is not None:
        atoms, _ = d.discrete_part.truncate(tol)
        tf = as_fraction(t)
        disc = math.fsum(float(p) for v, p in atoms if v <= tf)
        total += (1 - w) * disc
    if d.continuous_part is not None:
        fam = d.continuous_part.family
        total += w * float(fam.cdf(t) - fam.cdf(0.0))
    return total
