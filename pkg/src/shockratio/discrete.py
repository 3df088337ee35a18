"""Exact survival probabilities for atomic shock laws.

For laws with a smallest positive value bounded away from zero the survival
probability splits by the number of positive jumps,

    c_n = sum_{k <= M_x} C(n, k) p0^(n-k) q_k(x),

where ``q_k(x)`` is the probability that ``k`` positive jumps fit under ``x``.
Every quantity is a :class:`~fractions.Fraction`, so ratios and rate-law
deviations carry no cancellation error.  Laws whose atoms accumulate at zero
are handled on a dyadic lattice with a two-sided snapping bracket.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .dist import DEFAULT_TAIL_TOL, DiscreteSpec, as_fraction
from .errors import (
    CombinatorialBlowup,
    HypothesisViolated,
    NotAnAtom,
    NotClassC2,
    PreconditionError,
)

DEFAULT_NODE_BUDGET = 10**7
DEFAULT_LATTICE_BITS = 16

METHODS = ("exact-enumeration", "lattice-bracket", "grid", "monte-carlo", "mixed-conditioning", "closed-form")


def frac_log(v: Fraction) -> float:
    """Natural log of a positive rational without overflow or underflow."""
    if v <= 0:
        return -math.inf
    return math.log(v.numerator) - math.log(v.denominator)


@dataclass(frozen=True, eq=False)
class SurvivalTable:
    """``c_0 .. c_nmax`` at threshold ``x`` together with their provenance.

    ``exact`` holds rational values when the engine produced them;
    ``lower``/``upper`` hold a guaranteed bracket when one is available.
    """

    x: float
    values: np.ndarray
    log_values: np.ndarray
    method: str
    truncation_error_bound: np.ndarray
    exact: tuple[Fraction, ...] | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method tag {self.method!r}")

    @property
    def n_max(self) -> int:
        return len(self.values) - 1

    @classmethod
    def from_exact(cls, x, exact: Sequence[Fraction], method="exact-enumeration", bound=None, info=None):
        exact = tuple(exact)
        vals = np.array([float(v) for v in exact])
        logs = np.array([frac_log(v) for v in exact])
        if bound is None:
            bound = np.zeros(len(exact))
        return cls(float(x), vals, logs, method, np.asarray(bound, dtype=float), exact=exact, info=info or {})

    @classmethod
    def from_logs(cls, x, logs, method, bound=None, lower=None, upper=None, info=None):
        logs = np.asarray(logs, dtype=float)
        if bound is None:
            bound = np.zeros(logs.size)
        return cls(float(x), np.exp(logs), logs, method, np.asarray(bound, dtype=float),
                   lower=lower, upper=upper, info=info or {})


@dataclass(frozen=True)
class AtomTupleIndex:
    """Multisets of positive atoms whose sum fits under ``x``.

    ``tuples[k]`` lists ``(values, weight)`` with ``values`` a nondecreasing
    tuple and ``weight`` the probability of drawing that multiset in some
    order (multinomial count times the product of atom probabilities).
    """

    x: Fraction
    tuples: dict[int, tuple[tuple[tuple[Fraction, ...], Fraction], ...]]

    def q(self, k: int) -> Fraction:
        return sum((w for _, w in self.tuples.get(k, ())), Fraction(0))


def _m_x(spec: DiscreteSpec, x: Fraction) -> int:
    xm = spec.x_min
    ratio = x / xm
    if ratio.denominator == 1 and not spec.x_min_attained:
        return max(int(ratio) - 1, 0)
    return math.floor(ratio)


def m_x(spec: DiscreteSpec, x) -> int:
    """Maximal number of positive jumps that can fit under ``x``.

    Equals ``x/x_min - 1`` when ``x/x_min`` is an integer and ``x_min`` is not
    an atom, and ``floor(x/x_min)`` otherwise.
    """
    if spec.p0 <= 0 or spec.x_min <= 0:
        raise NotClassC2(f"needs p0 > 0 and x_min > 0 (p0={spec.p0}, x_min={spec.x_min})")
    return _m_x(spec, as_fraction(x))


def atom_tuple_index(spec: DiscreteSpec, x, max_len: int | None = None,
                     tol: float = DEFAULT_TAIL_TOL, node_budget: int = DEFAULT_NODE_BUDGET) -> AtomTupleIndex:
    """Enumerate the multisets of positive atoms with sum at most ``x``."""
    x = as_fraction(x)
    atoms, _ = spec.truncate(tol)
    atoms = [(v, p) for v, p in atoms if v <= x]
    if max_len is None:
        if spec.x_min <= 0:
            raise PreconditionError("max_len is required when atoms accumulate at zero")
        max_len = _m_x(spec, x)
    out: dict[int, list] = {k: [] for k in range(max_len + 1)}
    out[0].append(((), Fraction(1)))
    nodes = 0

    # the bare product of probabilities is carried down; the multinomial
    # count of orderings is attached at each node
    def rec_plain(start, prefix, counts, budget, prod):
        nonlocal nodes
        for i in range(start, len(atoms)):
            v, p = atoms[i]
            if v > budget:
                break
            nodes += 1
            if nodes > node_budget:
                raise CombinatorialBlowup(f"tuple enumeration exceeded {node_budget} nodes")
            tup = prefix + (v,)
            counts[i] = counts.get(i, 0) + 1
            k = len(tup)
            mult = math.factorial(k)
            for c in counts.values():
                mult //= math.factorial(c)
            out[k].append((tup, prod * p * mult))
            if k < max_len:
                rec_plain(i, tup, counts, budget - v, prod * p)
            counts[i] -= 1
            if counts[i] == 0:
                del counts[i]

    rec_plain(0, (), {}, x, Fraction(1))
    return AtomTupleIndex(x, {k: tuple(v) for k, v in out.items()})


def positive_fit_probs(atoms: Sequence[tuple[Fraction, Fraction]], x: Fraction, k_max: int,
                       node_budget: int = DEFAULT_NODE_BUDGET) -> list[Fraction]:
    """``q_k = P[S_k <= x, all k jumps positive]`` for ``k = 0..k_max``.

    Depth-first over ordered jump sequences with memoisation on
    ``(remaining jumps, residual budget)``; residuals are exact rationals.
    """
    atoms = [(v, p) for v, p in atoms if v <= x]
    memo: dict[tuple[int, Fraction], Fraction] = {}
    nodes = 0

    def q(k: int, budget: Fraction) -> Fraction:
        nonlocal nodes
        if k == 0:
            return Fraction(1)
        key = (k, budget)
        hit = memo.get(key)
        if hit is not None:
            return hit
        acc = Fraction(0)
        for v, p in atoms:
            if v > budget:
                break
            nodes += 1
            if nodes > node_budget:
                raise CombinatorialBlowup(f"enumeration exceeded {node_budget} nodes")
            acc += p * q(k - 1, budget - v)
        memo[key] = acc
        return acc

    return [q(k, x) for k in range(k_max + 1)]


def _enumeration_table(spec: DiscreteSpec, x: Fraction, n_max: int, tol: float, node_budget: int) -> SurvivalTable:
    atoms, dropped = spec.truncate(tol)
    M = _m_x(spec, x)
    qs = positive_fit_probs(atoms, x, M, node_budget)
    p0 = spec.p0
    exact = []
    bound = []
    for n in range(n_max + 1):
        if p0 == 0:
            c = qs[n] if n <= M else Fraction(0)
            b = dropped * n if n <= M else Fraction(0)
        else:
            c = Fraction(0)
            b = Fraction(0)
            for k in range(min(M, n) + 1):
                w = math.comb(n, k) * p0 ** (n - k)
                c += w * qs[k]
                b += w * k
            b *= dropped
        exact.append(c)
        bound.append(float(b))
    info = {"m_x": M, "q": qs, "dropped_mass": float(dropped)}
    return SurvivalTable.from_exact(x, exact, "exact-enumeration", bound, info)


def _lattice_shifts(atoms, p0: Fraction, dropped: Fraction, bits: int, upper: bool):
    """Snap atoms onto the lattice ``2^-bits``; down for ``upper``, up otherwise."""
    scale = 2**bits
    acc: dict[int, float] = {0: float(p0)} if p0 > 0 else {}
    for v, p in atoms:
        u = v * scale
        s = math.floor(u) if upper else math.ceil(u)
        acc[s] = acc.get(s, 0.0) + float(p)
    if upper and dropped > 0:
        # dropped atoms are placed at zero, which can only enlarge c_n
        acc[0] = acc.get(0, 0.0) + float(dropped)
    keys = sorted(acc)
    return np.array(keys, dtype=np.int64), np.array([acc[k] for k in keys])


def _lattice_table(spec: DiscreteSpec, x: Fraction, n_max: int, tol: float, bits: int) -> SurvivalTable:
    atoms, dropped = spec.truncate(tol)
    size = math.floor(x * 2**bits) + 1
    lo_s, lo_p = _lattice_shifts(atoms, spec.p0, dropped, bits, upper=False)
    hi_s, hi_p = _lattice_shifts(atoms, spec.p0, dropped, bits, upper=True)
    log_lo = kernels.lattice_renewal(lo_s, lo_p, size, n_max)
    log_hi = kernels.lattice_renewal(hi_s, hi_p, size, n_max)
    lo, hi = np.exp(log_lo), np.exp(log_hi)
    info = {"lattice_bits": bits, "dropped_mass": float(dropped), "log_upper": log_hi}
    return SurvivalTable.from_logs(x, log_lo, "lattice-bracket", bound=hi - lo, lower=lo, upper=hi, info=info)


def survival_exact(spec: DiscreteSpec, x, n_max: int, tol: float = DEFAULT_TAIL_TOL,
                   node_budget: int = DEFAULT_NODE_BUDGET, lattice_bits: int = DEFAULT_LATTICE_BITS) -> SurvivalTable:
    """Survival probabilities ``c_0..c_nmax`` of a discrete shock law.

    Laws with ``x_min > 0`` are enumerated exactly.  Generator-backed atom
    sets are truncated once the dropped mass is below ``tol``; the reported
    per-entry bound is ``dropped * sum_k k C(n,k) p0^(n-k)``, since each of the
    ``k`` positive jumps may be one of the dropped atoms.

    Laws accumulating at zero run on the lattice ``2^-lattice_bits``: atoms
    snapped up give a lower bound, snapped down an upper bound.  Values are
    the lower model and the bound is the bracket width.
    """
    if n_max < 0:
        raise PreconditionError("n_max must be >= 0")
    x = as_fraction(x)
    if x <= 0:
        raise PreconditionError("x must be positive")
    if spec.x_min > 0:
        return _enumeration_table(spec, x, n_max, tol, node_budget)
    return _lattice_table(spec, x, n_max, tol, lattice_bits)


def ratio_sequence(table: SurvivalTable) -> np.ndarray:
    """``r[n] = c_{n+1} / c_n``; NaN marks entries where ``c_n = 0``."""
    if table.n_max < 1:
        raise PreconditionError("need at least two entries")
    if table.exact is not None:
        ex = table.exact
        return np.array([float(ex[n + 1] / ex[n]) if ex[n] != 0 else math.nan for n in range(len(ex) - 1)])
    lg = table.log_values
    with np.errstate(invalid="ignore"):
        r = np.exp(lg[1:] - lg[:-1])
    r[~np.isfinite(lg[:-1])] = math.nan
    return r


def rate_law_deviation(table: SurvivalTable, p0, m_x: int) -> np.ndarray:
    """``n (r[n] - p0) / (p0 M_x)``, which tends to 1 for class C2 laws."""
    p0 = as_fraction(p0)
    if m_x < 1 or p0 <= 0:
        raise PreconditionError("rate law needs m_x >= 1 and p0 > 0")
    n = np.arange(table.n_max)
    if table.exact is not None:
        ex = table.exact
        out = []
        for k in range(len(ex) - 1):
            if ex[k] == 0:
                out.append(math.nan)
                continue
            out.append(float(k * (ex[k + 1] / ex[k] - p0) / (p0 * m_x)))
        return np.array(out)
    r = ratio_sequence(table)
    return n * (r - float(p0)) / (float(p0) * m_x)


def _next_atom(spec: DiscreteSpec, y1: Fraction, tol: float):
    atoms, _ = spec.truncate(tol)
    vals = [v for v, _ in atoms]
    if y1 not in vals:
        raise NotAnAtom(f"{y1} is not an atom")
    i = vals.index(y1)
    return atoms, (vals[i + 1] if i + 1 < len(vals) else None)


@dataclass(frozen=True)
class RecoveryResult:
    n: np.ndarray
    estimate: np.ndarray
    target: float
    empirical_constant: float


def atom_mass_recover_sequence(spec: DiscreteSpec, x, y1, ns: Iterable[int],
                               tol: float = DEFAULT_TAIL_TOL) -> RecoveryResult:
    """Estimate ``P[X = y1]`` from survival tables for each ``n`` in ``ns``.

    Uses ``(c_{n+1,x} - sum_{x_i < y1} c_{n,x-x_i} p_i) / c_{n,x-y1}``, the sum
    including the zero atom.  Needs the next atom ``y2`` to satisfy
    ``y2 - y1 > x_min``.
    """
    x, y1 = as_fraction(x), as_fraction(y1)
    ns = sorted(int(n) for n in ns)
    atoms, y2 = _next_atom(spec, y1, tol)
    if y1 > x:
        raise PreconditionError("y1 must not exceed x")
    if y2 is not None and y2 - y1 <= spec.x_min:
        raise HypothesisViolated(f"y2 - y1 = {y2 - y1} must exceed x_min = {spec.x_min}")
    below = [(Fraction(0), spec.p0)] + [(v, p) for v, p in atoms if v < y1]
    n_top = ns[-1] + 1
    tables = {}

    def c(t: Fraction):
        if t not in tables:
            tables[t] = survival_exact(spec, t, n_top, tol).exact if t > 0 else None
        return tables[t]

    est = []
    for n in ns:
        num = c(x)[n + 1]
        for v, p in below:
            if p:
                num -= p * c(x - v)[n]
        est.append(float(num / c(x - y1)[n]))
    target = float(dict(atoms)[y1])
    est = np.array(est)
    nn = np.array(ns)
    const = float(np.max(nn * np.abs(est - target))) if ns else math.nan
    return RecoveryResult(nn, est, target, const)


def atom_mass_recover(spec: DiscreteSpec, x, y1, n: int, tol: float = DEFAULT_TAIL_TOL) -> float:
    """Single-``n`` version of :func:`atom_mass_recover_sequence`."""
    return float(atom_mass_recover_sequence(spec, x, y1, [n], tol).estimate[0])


@dataclass(frozen=True)
class C3Report:
    p0: float
    n: np.ndarray
    deviation: np.ndarray
    bracket_width: np.ndarray
    monotone_decreasing: bool | None
    dropped_mass: float


def c3_ratio_limit_check(spec: DiscreteSpec, x, n_max: int, n_grid: Sequence[int] | None = None,
                         tol: float = DEFAULT_TAIL_TOL, lattice_bits: int = DEFAULT_LATTICE_BITS) -> C3Report:
    """``|r[n] - p0|`` along a logarithmic grid of ``n`` for a law with ``x_min = 0``.

    The default grid is ``n_max, n_max/2, n_max/4, ...`` (down to 1, at most
    eight points).  The trend flag is ``None`` when fewer than two points
    are available.  No rate is asserted.
    """
    if spec.x_min != 0:
        raise PreconditionError("c3_ratio_limit_check needs x_min = 0")
    if n_grid is None:
        n_grid = sorted({max(1, n_max // 2**j) for j in range(8)})
    n_grid = np.array(sorted(int(n) for n in n_grid if 1 <= n <= n_max))
    tab = survival_exact(spec, x, n_max + 1, tol, lattice_bits=lattice_bits)
    r = ratio_sequence(tab)
    r_hi = np.exp(np.diff(tab.info["log_upper"]))
    p0 = float(spec.p0)
    dev = np.abs(r[n_grid] - p0)
    width = np.abs(r_hi[n_grid] - r[n_grid])
    trend = None if n_grid.size < 2 else bool(np.all(np.diff(dev) < 0))
    return C3Report(p0, n_grid, dev, width, trend, tab.info["dropped_mass"])
