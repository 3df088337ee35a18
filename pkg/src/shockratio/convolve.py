"""Grid engine for continuous and mixed shock laws.

The engine propagates distribution functions rather than densities.  With
cell masses ``mu_j = F((j+1)h) - F(jh)`` and first moments
``nu_j = int_cell (s/h - j) dF(s)``, product integration of a piecewise
linear ``F_{n-1}`` against ``dF`` gives the causal recursion

    F_n[i] = sum_l K_l F_{n-1}[i-l] - (mu_i - nu_i) F_{n-1}[0],
    K_0 = mu_0 - nu_0,   K_l = mu_l - nu_l + nu_{l-1}.

Cell masses come from the analytic ``F`` and partial mean of the family, so
an integrable singularity ``t^(alpha-1)`` at the origin is integrated
exactly on the first cell.  ``F_1`` is exact at the nodes.  Each level is
rescaled by its value at the right end and the scale is kept in log form.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy import integrate, signal, special

from . import kernels
from .discrete import SurvivalTable, positive_fit_probs
from .dist import (
    ConstantNearZero,
    DensityFamily,
    DensitySpec,
    GammaLike,
    Kind,
    PowerLawOnInterval,
    ShockDistribution,
    Tabulated,
    as_fraction,
)
from .errors import (
    EpsNotValid,
    PreconditionError,
    ResolutionTooCoarse,
    WindowInvalid,
)

HEAD_MASS_LIMIT = 0.05
DIRECT_MAX = 4096
DEFAULT_REL_STEP = 1e-4
BOUNDARY_CELLS = 64


def _family(f) -> DensityFamily:
    if isinstance(f, DensitySpec):
        return f.family
    if isinstance(f, DensityFamily):
        return f
    raise PreconditionError(f"expected a density, got {type(f).__name__}")


# ---------------------------------------------------------------------------
# Grid functions and cell moments
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Density samples on ``0, h, 2h, ...``.

    ``singular_head = (a, e)`` declares that the density behaves like
    ``a t^e`` (``e > -1``) on the first cell; ``values[0]`` is then ignored.
    ``cdf`` optionally carries the distribution function at the same nodes
    and ``moments`` exact cell masses and first moments when the grid was
    sampled from an analytic family.
    """

    step: float
    values: np.ndarray
    singular_head: tuple[float, float] | None = None
    cdf: np.ndarray | None = None
    moments: tuple[np.ndarray, np.ndarray] | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if self.step <= 0:
            raise PreconditionError("step must be positive")
        body = v[1:] if self.singular_head is not None else v
        if np.any(body < 0) or not np.all(np.isfinite(body)):
            raise PreconditionError("grid values must be finite and nonnegative")
        if self.mass() > 1 + 1e-9:
            raise PreconditionError(f"grid mass {self.mass()!r} exceeds 1")

    @property
    def nodes(self) -> np.ndarray:
        return self.step * np.arange(self.values.size)

    def head_mass(self) -> float:
        if self.singular_head is None:
            return 0.0
        a, e = self.singular_head
        return a * self.step ** (e + 1) / (e + 1)

    def cell_moments(self) -> tuple[np.ndarray, np.ndarray]:
        """``(mu, nu)`` for the piecewise linear density (analytic head cell)."""
        if self.moments is not None:
            return self.moments[0].copy(), self.moments[1].copy()
        h, f = self.step, self.values
        mu = 0.5 * h * (f[:-1] + f[1:])
        nu = h * (f[:-1] + 2 * f[1:]) / 6
        if self.singular_head is not None:
            a, e = self.singular_head
            mu[0] = a * h ** (e + 1) / (e + 1)
            nu[0] = a * h ** (e + 1) / (e + 2)
        return mu, nu

    def mass(self) -> float:
        mu, _ = self.cell_moments()
        return float(math.fsum(mu))


def grid_from_density(f, step: float, length: float) -> GridFunction:
    """Sample a density family on ``[0, length]`` with the given step."""
    fam = _family(f)
    m = int(round(length / step))
    t = step * np.arange(m + 1)
    vals = np.asarray(fam.pdf(t), dtype=float)
    head = None
    alpha = fam.rv_index_alpha
    if alpha is not None and alpha < 1:
        head = (_head_coefficient(fam), alpha - 1)
        vals[0] = 0.0
    return GridFunction(step, vals, head, np.asarray(fam.cdf(t), dtype=float), family_cell_moments(fam, step, m))


def _head_coefficient(fam: DensityFamily) -> float:
    if isinstance(fam, PowerLawOnInterval):
        return fam.alpha / fam.upper**fam.alpha
    if isinstance(fam, GammaLike):
        return 1.0 / (math.gamma(fam.k) * fam.theta**fam.k)
    t = 1e-12
    return float(fam.pdf(t)) / t ** (fam.rv_index_alpha - 1)


def family_cell_moments(f, step: float, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Exact ``(mu, nu)`` on cells ``0..m-1`` from the family's ``F`` and partial mean."""
    fam = _family(f)
    t = step * np.arange(m + 1)
    F = np.asarray(fam.cdf(t), dtype=float)
    G = np.asarray(fam.partial_mean(t), dtype=float)
    mu = np.diff(F)
    j = np.arange(m)
    nu = np.diff(G) / step - j * mu
    # guard against cancellation in nu for cells far from the origin
    nu = np.clip(nu, 0.0, mu)
    return mu, nu


def _kernel(mu: np.ndarray, nu: np.ndarray) -> np.ndarray:
    K = mu - nu
    K[1:] += nu[:-1]
    return K


def _convolve(K: np.ndarray, F: np.ndarray, method: str) -> np.ndarray:
    if method == "auto":
        method = "direct" if F.size <= DIRECT_MAX else "fft"
    if method == "direct":
        return kernels.causal_convolve(K, F)
    if method == "fft":
        return signal.fftconvolve(K[: F.size], F)[: F.size]
    raise PreconditionError(f"unknown convolution method {method!r}")


@dataclass(frozen=True, eq=False)
class Levels:
    """Rescaled distribution functions ``F_n / scale_n`` on the grid."""

    step: float
    F: list[np.ndarray]
    log_scale: np.ndarray

    def survival_at_end(self) -> np.ndarray:
        return np.exp(self.log_scale)

    def log_survival(self, t: float, n: int) -> float:
        """``log F_n(t)`` by linear interpolation between nodes."""
        if n == 0:
            return 0.0 if t >= 0 else -math.inf
        if t < 0:
            return -math.inf
        v = float(np.interp(t / self.step, np.arange(self.F[n].size), self.F[n]))
        return math.log(v) + self.log_scale[n] if v > 0 else -math.inf


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)
_GL_U = 0.5 * (_GL_NODES + 1)
_GL_W = 0.5 * _GL_WEIGHTS


def _adapted_moments(beta: float, m: int):
    """Cell moments of the interpolation basis ``(k+u)^beta x linear``.

    On cell ``k >= 1`` of ``tau`` the previous level is modelled as
    ``F(tau) = (k+u)^beta [(1-u) g_k + u g_{k+1}]`` with ``g_k = F[k]/k^beta``;
    on cell 0, ``g`` is extrapolated linearly from ``g_1, g_2``.  Returns
    ``(M0, M1)`` each of shape ``(2, m)``: integrals over ``v = 1-u`` of the
    two basis functions against ``1`` and ``v``.
    """
    k = np.arange(1, m, dtype=float)[:, None]
    u = _GL_U[None, :]
    with np.errstate(over="raise"):
        left = (1 - u) * np.exp(beta * np.log1p(u / k))
        right = u * np.exp(beta * np.log((k + u) / (k + 1)))
    v = 1 - u
    M0 = np.empty((2, m))
    M1 = np.empty((2, m))
    M0[0, 1:] = left @ _GL_W
    M0[1, 1:] = right @ _GL_W
    M1[0, 1:] = (left * v) @ _GL_W
    M1[1, 1:] = (right * v) @ _GL_W
    b1, b2, b3 = 1 / (beta + 1), 1 / (beta + 2), 1 / (beta + 3)
    scale = 2.0**-beta
    M0[0, 0] = 2 * b1 - b2
    M1[0, 0] = 2 * b1 - 3 * b2 + b3
    M0[1, 0] = (b2 - b1) * scale
    M1[1, 0] = -(b1 - 2 * b2 + b3) * scale
    return M0, M1


class _Recursion:
    """One level of the causal recursion, plain or singularity-adapted.

    Nodes are ``0..N-1`` with ``N = mu.size``.  The plain scheme linearly
    interpolates the previous level; the adapted scheme (used when the
    regular-variation index ``alpha`` is known) interpolates
    ``F_{n-1} / tau^((n-1) alpha)`` instead, which is exact for pure power
    laws and removes the ``h^(1+alpha)`` error of the plain scheme.
    """

    def __init__(self, mu: np.ndarray, nu: np.ndarray, method: str, alpha: float | None = None):
        self.mu, self.nu, self.method, self.alpha = mu, nu, method, alpha
        self.K = _kernel(mu, nu)
        self.corr = mu - nu
        self.cum = np.concatenate([[0.0], np.cumsum(mu[:-1])])
        # linear density model dF = (A + B v) dv on each cell
        self.A = 4 * mu - 6 * nu
        self.B = 12 * nu - 6 * mu

    def advance(self, F: np.ndarray, n: int) -> np.ndarray:
        N = F.size
        if n == 1 and np.all(F == F[0]):
            new = F[0] * self.cum
        elif self.alpha is None or F[0] != 0 or N < 3:
            new = _convolve(self.K, F, self.method)
            if F[0] != 0:
                new -= self.corr * F[0]
        else:
            beta = (n - 1) * self.alpha
            M0, M1 = _adapted_moments(beta, N - 1)
            U = np.empty(N - 1)
            V = np.empty(N - 1)
            U[1:] = M0[0, 1:] * F[1:-1] + M0[1, 1:] * F[2:]
            V[1:] = M1[0, 1:] * F[1:-1] + M1[1, 1:] * F[2:]
            U[0] = M0[0, 0] * F[1] + M0[1, 0] * F[2]
            V[0] = M1[0, 0] * F[1] + M1[1, 0] * F[2]
            new = np.empty(N)
            new[0] = 0.0
            new[1:] = _convolve(self.A[: N - 1], U, self.method) + _convolve(self.B[: N - 1], V, self.method)
        np.maximum(new, 0.0, out=new)
        return new


def propagate(mu: np.ndarray, nu: np.ndarray, step: float, n_max: int, method: str = "auto",
              keep: bool = True, alpha: float | None = None) -> Levels:
    """Iterate the recursion from ``F_0 = 1`` up to level ``n_max``.

    ``mu``/``nu`` describe cells ``0..m`` and the levels live on nodes
    ``0..m`` (the plain scheme needs cell ``i`` for node ``i``).
    """
    rec = _Recursion(mu, nu, method, alpha)
    F = np.ones(mu.size)
    levels = [F]
    logs = np.zeros(n_max + 1)
    acc = 0.0
    for n in range(1, n_max + 1):
        new = rec.advance(F, n)
        top = new[-1]
        if top <= 0:
            raise ResolutionTooCoarse(f"level {n} vanished at the right end of the grid")
        F = new / top
        acc += math.log(top)
        logs[n] = acc
        levels.append(F if keep else None)
    if not keep:
        levels[-1] = F
    return Levels(step, levels, logs)


def _check_head(mu: np.ndarray):
    if mu[0] > HEAD_MASS_LIMIT:
        raise ResolutionTooCoarse(
            f"first cell carries mass {mu[0]:.4g} > {HEAD_MASS_LIMIT}; reduce the step"
        )


# ---------------------------------------------------------------------------
# Closed forms
# ---------------------------------------------------------------------------


def closed_form_log_survival(f, x: float, n: int) -> float | None:
    """``log P[S_n <= x]`` when a closed form exists, otherwise ``None``.

    Power law on ``[0, u]`` with ``x <= u``:
    ``Gamma(alpha+1)^n (x/u)^(n alpha) / Gamma(n alpha + 1)``;
    constant density ``c`` with ``x <= eps``: ``(c x)^n / n!``.
    """
    fam = _family(f)
    if n == 0:
        return 0.0
    if isinstance(fam, PowerLawOnInterval) and x <= fam.upper:
        a = fam.alpha
        return n * special.gammaln(a + 1) + n * a * math.log(x / fam.upper) - special.gammaln(n * a + 1)
    if isinstance(fam, ConstantNearZero) and x <= fam.eps:
        return n * math.log(fam.c * x) - special.gammaln(n + 1)
    return None


def closed_form_survival_table(f, x: float, n_max: int) -> SurvivalTable | None:
    logs = [closed_form_log_survival(f, x, n) for n in range(n_max + 1)]
    if any(v is None for v in logs):
        return None
    return SurvivalTable.from_logs(x, logs, "closed-form")


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def self_convolve(f: GridFunction, n: int, method: str = "auto") -> list[GridFunction]:
    """``f^{*1} .. f^{*n}`` on the grid of ``f``.

    Densities are central differences of the propagated distribution
    functions (one-sided at the ends).  Levels whose density is still
    singular at the origin carry the analytic head ``a^k Gamma(e+1)^k /
    Gamma(k(e+1)) t^(k(e+1)-1)``.
    """
    if n < 1:
        raise PreconditionError("n must be >= 1")
    mu, nu = f.cell_moments()
    _check_head(mu)
    lv = propagate(mu, nu, f.step, n, method)
    out = [f]
    h = f.step
    for k in range(2, n + 1):
        F = lv.F[k] * math.exp(lv.log_scale[k])
        dens = np.gradient(F, h)
        head = None
        if f.singular_head is not None:
            a, e = f.singular_head
            ek = k * (e + 1) - 1
            if ek < 0:
                ak = a**k * math.gamma(e + 1) ** k / math.gamma(k * (e + 1))
                head = (ak, ek)
                dens[0] = 0.0
        out.append(GridFunction(h, np.maximum(dens, 0.0), head, F))
    return out


def _grid_size(x: float, step: float | None) -> tuple[int, float]:
    if step is None:
        step = DEFAULT_REL_STEP * x
    m = max(2, int(round(x / step)))
    return m, x / m


def _grid_levels(f, x: float, n_max: int, step: float | None, method: str, keep: bool = False):
    m, h = _grid_size(x, step)
    mu, nu = family_cell_moments(f, h, m + 1)
    _check_head(mu)
    return propagate(mu, nu, h, n_max, method, keep=keep, alpha=_family(f).rv_index_alpha), h


def survival_numeric(f, x: float, n_max: int, step: float | None = None, method: str = "auto",
                     richardson: bool = False) -> SurvivalTable:
    """``c_{n,x}`` for ``n = 0..n_max`` from the grid engine.

    Runs at ``step`` and ``step/2``; the reported bound is the difference of
    the two.  With ``richardson`` the two runs are extrapolated assuming
    order ``min(2, 1 + alpha)`` and the values come from the extrapolation.
    """
    fam = _family(f)
    if fam.support[0] < 0:
        raise PreconditionError("grid engine needs a law supported on [0, inf)")
    if x <= 0:
        raise PreconditionError("x must be positive")
    m, h = _grid_size(x, step)
    if n_max * h / x > 0.1:
        raise ResolutionTooCoarse(f"n_max*h/x = {n_max * h / x:.3g}: step too coarse for level {n_max}")
    coarse, _ = _grid_levels(fam, x, n_max, h, method)
    fine, _ = _grid_levels(fam, x, n_max, h / 2, method)
    lc, lf = coarse.log_scale, fine.log_scale
    bound = np.abs(np.exp(lf) - np.exp(lc))
    logs = lc
    info = {"step": h, "log_fine": lf}
    if richardson:
        alpha = fam.rv_index_alpha or 1.0
        p = min(2.0, 1.0 + alpha)
        logs = lf + (lf - lc) / (2**p - 1)
        info["order"] = p
    return SurvivalTable.from_logs(x, logs, "grid", bound=bound, info=info)


@dataclass(frozen=True)
class MonotoneReport:
    """Result of scanning ``f^{*n}`` for monotonicity on ``[0, x]``.

    ``threshold_n`` is ``None`` when no level up to ``n_cap`` starts an
    unbroken run of monotone levels.  ``violations[n]`` is
    ``(first index, t, magnitude)`` for each non-monotone level.
    """

    x: float
    threshold_n: int | None
    violations: dict[int, tuple[int, float, float]]
    step: float
    n_cap: int

    @property
    def found(self) -> bool:
        return self.threshold_n is not None


def _densities(F: np.ndarray, scale: float, h: float) -> np.ndarray:
    return np.gradient(F, h) * scale


def _first_decrease(dens: np.ndarray, tol: np.ndarray, lo: int = 1):
    """First index where the density drops below its running maximum by > tol."""
    d = dens[lo:]
    runmax = np.maximum.accumulate(d)
    drop = runmax - d
    bad = np.nonzero(drop > tol[lo:])[0]
    if bad.size == 0:
        return None
    i = int(bad[0]) + lo
    return i, float(drop[i - lo])


def _auto_step(fam: DensityFamily, x: float) -> float:
    h = DEFAULT_REL_STEP * x
    while float(fam.cdf(h)) > HEAD_MASS_LIMIT / 2:
        h /= 2
    return h


def _scan_levels(mu_f, nu_f, mu_c, nu_c, h, n_cap, method, upto, alpha):
    """Yield ``(n, density, tolerance)`` for each level on the fine grid.

    The tolerance is ten times the local difference between the density on
    the fine grid and on the grid of twice the step, plus a roundoff floor.
    """
    rf = _Recursion(mu_f, nu_f, method, alpha)
    rc = _Recursion(mu_c, nu_c, method, alpha)
    Ff, Fc = np.ones(mu_f.size), np.ones(mu_c.size)
    log_f = log_c = 0.0
    for n in range(1, n_cap + 1):
        nf = rf.advance(Ff, n)
        nc = rc.advance(Fc, n)
        tf, tc = nf[upto], nc[upto // 2]
        Ff, Fc = nf / tf, nc / tc
        log_f += math.log(tf)
        log_c += math.log(tc)
        dens_f = np.gradient(Ff, h)
        dens_c = np.gradient(Fc, 2 * h) * math.exp(log_c - log_f)
        even = dens_f[::2]
        k = min(even.size, dens_c.size)
        err = np.abs(even[:k] - dens_c[:k])
        err_full = np.repeat(err, 2)
        if err_full.size < dens_f.size:
            err_full = np.pad(err_full, (0, dens_f.size - err_full.size), mode="edge")
        # roundoff in F is amplified by 1/h when differenced
        floor = 256 * np.finfo(float).eps * np.abs(Ff).max() / h
        tol = 10 * err_full[: dens_f.size] + floor
        yield n, dens_f, tol


def monotone_threshold(f, x: float, n_cap: int, step: float | None = None, method: str = "auto") -> MonotoneReport:
    """Smallest ``n`` from which ``f^{*n}`` is non-decreasing on ``[0, x]``.

    Each level is computed at ``step`` and ``2*step``; a decrease counts as a
    violation only when it exceeds ten times the difference between the
    two resolutions.  The first ``BOUNDARY_CELLS`` nodes are not scanned:
    there the level behaves like ``t^(n alpha - 1)`` times a slowly varying
    factor and the grid cannot resolve it, so the decision is made
    analytically (``n alpha >= 1`` together with the declared regularity of
    the family).
    """
    fam = _family(f)
    if step is None:
        step = _auto_step(fam, x)
    m, h = _grid_size(x, step)
    m += m % 2
    h = x / m
    upto = m
    # nodes run one step past x so that the density at x is a central difference
    mu_f, nu_f = family_cell_moments(fam, h, m + 2)
    mu_c, nu_c = family_cell_moments(fam, 2 * h, m // 2 + 2)
    _check_head(mu_f)
    alpha = fam.rv_index_alpha
    violations: dict[int, tuple[int, float, float]] = {}
    for n, dens, tol in _scan_levels(mu_f, nu_f, mu_c, nu_c, h, n_cap, method, upto, alpha):
        if alpha is not None and n * alpha < 1:
            violations[n] = (0, 0.0, math.inf)
            continue
        lo = BOUNDARY_CELLS if alpha is not None else 1
        hit = _first_decrease(dens[: upto + 1], tol[: upto + 1], lo=lo)
        if hit is not None:
            i, mag = hit
            violations[n] = (i, i * h, mag)
    threshold = None
    for n in range(n_cap, 0, -1):
        if n in violations:
            break
        threshold = n
    return MonotoneReport(float(x), threshold, violations, h, n_cap)


def scaling_criterion_check(f, beta: float, eps: float, c_grid: Sequence[float], t_points: int = 200) -> bool:
    """True iff ``f(ct) <= c^beta f(t)`` on the sampled ``(c, t)`` pairs, ``t in (0, eps]``."""
    if beta <= -1:
        raise PreconditionError("beta must exceed -1")
    fam = _family(f)
    ts = np.geomspace(eps * 1e-6, eps, t_points)
    ft = np.asarray(fam.pdf(ts))
    for c in c_grid:
        if not 0 < c < 1:
            raise PreconditionError("c must lie in (0, 1)")
        lhs = np.asarray(fam.pdf(c * ts))
        rhs = c**beta * ft
        if np.any(lhs > rhs * (1 + 1e-12) + 1e-300):
            return False
    return True


def propagation_check(f: GridFunction, k: int, eps: float, method: str = "auto") -> bool:
    """``f^{*4^j}`` is non-decreasing on ``[0, (3/2)^j eps]`` for all ``j <= k``.

    The grid of ``f`` must reach ``(3/2)^k eps``.
    """
    if k < 0:
        raise PreconditionError("k must be >= 0")
    h = f.step
    nodes = f.nodes
    m0 = int(math.floor(eps / h + 1e-9))
    zero_tol = 64 * np.finfo(float).eps * f.values.max()
    if np.any(np.diff(f.values[1 : m0 + 1]) < -zero_tol):
        raise PreconditionError("f is not non-decreasing on [0, eps]")
    if k == 0:
        return True
    reach = (1.5**k) * eps
    if nodes[-1] < reach - 1e-12:
        raise PreconditionError(f"grid must extend to {reach}")
    mu, nu = f.cell_moments()
    _check_head(mu)
    # compute on [0, reach] only (plus one cell for the central difference)
    m = min(int(math.ceil(reach / h)) + 2, mu.size)
    mu, nu = mu[:m], nu[:m]
    lv = propagate(mu, nu, h, 4**k, method)
    for j in range(1, k + 1):
        n = 4**j
        dens = np.gradient(lv.F[n], h)
        top = int(math.floor((1.5**j) * eps / h + 1e-9))
        d = dens[: top + 1]
        tol = 1e-9 * np.abs(d).max()
        if _first_decrease(d, np.full(d.size, tol), lo=0) is not None:
            return False
    return True


# ---------------------------------------------------------------------------
# Ratio bounds and the equivalence integral
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RatioBoundsRecord:
    n: int
    ratio: float
    p_small: float
    implied_upper_const: float
    implied_lower_const: float
    exp_bound_ok: bool
    exp_bound_detail: dict = field(default_factory=dict)


def _log_survival(f, t: float, n: int, step: float | None):
    lv = closed_form_log_survival(f, t, n)
    if lv is not None:
        return lv
    tab = survival_numeric(f, t, n, step=step)
    return float(tab.log_values[n])


def ratio_bounds_check(f, x: float, n: int, K_x: int, step: float | None = None) -> RatioBoundsRecord:
    """Implied constants ``ratio / P[X <= 1/n]`` and the exponential tail inequality.

    Closed forms are used when available, the grid engine otherwise.  The
    tail inequality ``c_{n,x-y}/c_{n,x} <= ((x-y)/x)^(n/K_x - 1)`` is checked
    at ``y in {x/4, x/2, 3x/4}``.
    """
    if n < K_x:
        raise PreconditionError(f"n={n} must be >= K_x={K_x}")
    fam = _family(f)
    l0 = _log_survival(fam, x, n, step)
    l1 = _log_survival(fam, x, n + 1, step)
    ratio = math.exp(l1 - l0)
    p_small = float(fam.cdf(1.0 / n))
    implied = ratio / p_small
    detail = {}
    ok = True
    for y in (x / 4, x / 2, 3 * x / 4):
        lhs = _log_survival(fam, x - y, n, step) - l0
        rhs = (n / K_x - 1) * math.log((x - y) / x)
        detail[y] = (lhs, rhs)
        ok &= lhs <= rhs + 1e-12
    return RatioBoundsRecord(n, ratio, p_small, implied, implied, bool(ok), detail)


@dataclass(frozen=True)
class Window:
    """Built-in window ``l`` for the equivalence integral.

    ``kind`` is ``"log"`` (``log n``), ``"c-log"`` (``c log n``) or
    ``"sqrt-log"`` (``sqrt(log n)``).
    """

    kind: str = "log"
    c: float = 1.0

    def __call__(self, n: float) -> float:
        if self.kind == "log":
            return math.log(n)
        if self.kind == "c-log":
            return self.c * math.log(n)
        if self.kind == "sqrt-log":
            return math.sqrt(math.log(n))
        raise WindowInvalid(f"unknown window {self.kind!r}")

    def validate(self, x: float):
        """``l`` must diverge and satisfy ``l(t) <= 2 x log t`` for large ``t``."""
        if self.kind == "log":
            ok = 1.0 <= 2 * x
        elif self.kind == "c-log":
            ok = 0 < self.c <= 2 * x
        elif self.kind == "sqrt-log":
            ok = True
        else:
            raise WindowInvalid(f"unknown window {self.kind!r}")
        if not ok:
            raise WindowInvalid(f"window {self.kind} (c={self.c}) grows faster than 2*x*log at x={x}")


def equivalence_integral(f, alpha: float, x: float, n: int, l: Window | str = "log") -> float:
    """``int_0^{l(n)/n} f(t) (1 - t/x)^(alpha n) dt``.

    For a power-law head ``a t^(alpha-1)`` covering the window this is
    ``a x^alpha B(l(n)/(n x); alpha, alpha n + 1)`` with the unregularised
    incomplete Beta function.  Otherwise adaptive quadrature is used.
    """
    if isinstance(l, str):
        l = Window(l)
    l.validate(x)
    fam = _family(f)
    L = min(l(n) / n, x)
    if L <= 0:
        return 0.0
    if isinstance(fam, PowerLawOnInterval) and L <= fam.upper and abs(alpha - fam.alpha) < 1e-15:
        a = fam.alpha / fam.upper**fam.alpha
        return a * incomplete_beta_closed_form(alpha, x, n, L)
    if isinstance(fam, ConstantNearZero) and L <= fam.eps:
        # int_0^L c (1 - t/x)^(alpha n) dt
        b = alpha * n + 1
        return fam.c * x / b * -math.expm1(b * math.log1p(-L / x))
    return _equivalence_quad(fam, alpha, x, n, L)


def incomplete_beta_closed_form(alpha: float, x: float, n: int, L: float) -> float:
    """``x^alpha B(L/x; alpha, alpha n + 1)`` (unregularised)."""
    a, b = alpha, alpha * n + 1
    return x**a * special.betainc(a, b, L / x) * math.exp(special.betaln(a, b))


def _equivalence_quad(fam: DensityFamily, alpha: float, x: float, n: int, L: float) -> float:
    e = alpha * n
    ra = fam.rv_index_alpha
    opts = dict(epsabs=0, epsrel=1e-12, limit=400)
    if ra is not None and ra < 1:
        def g(t):
            t = max(t, 1e-300)
            return float(fam.pdf(t)) * t ** (1 - ra) * (1 - t / x) ** e

        return integrate.quad(g, 0, L, weight="alg", wvar=(ra - 1, 0), **opts)[0]
    return integrate.quad(lambda t: float(fam.pdf(t)) * (1 - t / x) ** e, 0, L, **opts)[0]


# ---------------------------------------------------------------------------
# Mixed laws
# ---------------------------------------------------------------------------


def survival_mixed(d: ShockDistribution, x: float, n_max: int, step: float | None = None,
                   method: str = "auto", tol: float = 1e-12) -> SurvivalTable:
    """Survival of a mixed law by conditioning on which jumps are atoms.

    ``c_n = sum_k C(n,k) w^(n-k) sum_z P[z] F_c^{*(n-k)}(x - sum z)`` over
    ordered atom tuples ``z`` of length ``k`` fitting under ``x``; atom sums
    are grouped exactly and the continuous factors come from the grid
    engine (linear interpolation between nodes).
    """
    if d.kind is not Kind.MIXED:
        raise PreconditionError("survival_mixed needs a mixed law")
    spec = d.discrete_part
    if spec.p0 > 0 or spec.x_min <= 0:
        raise PreconditionError("atoms must be bounded away from zero (class C5)")
    w = d.mix_weight_cont
    fam = d.continuous_part.family
    xf = as_fraction(x)
    atoms, _ = spec.truncate(tol)
    atoms = [(v, p) for v, p in atoms if v <= xf]
    k_top = math.floor(xf / spec.x_min) if atoms else 0
    # distribution of the sum of k positive atoms, restricted to <= x
    sums: list[dict[Fraction, Fraction]] = [{Fraction(0): Fraction(1)}]
    for _ in range(k_top):
        nxt: dict[Fraction, Fraction] = {}
        for s, ps in sums[-1].items():
            for v, p in atoms:
                t = s + v
                if t > xf:
                    break
                nxt[t] = nxt.get(t, Fraction(0)) + ps * p
        if not nxt:
            break
        sums.append(nxt)
    n_cont = n_max
    lv, _ = _grid_levels(fam, float(x), n_cont, step, method, keep=True)
    wd = 1.0 - w
    logs = np.full(n_max + 1, -math.inf)
    for n in range(n_max + 1):
        terms = []
        for k in range(min(n, len(sums) - 1) + 1):
            if k < n and w == 0:
                continue
            if k > 0 and wd == 0:
                continue
            base = math.log(math.comb(n, k))
            base += (n - k) * math.log(w) if n - k else 0.0
            base += k * math.log(wd) if k else 0.0
            for s, ps in sums[k].items():
                ls = lv.log_survival(float(x) - float(s), n - k)
                if ls == -math.inf:
                    continue
                terms.append(base + math.log(float(ps)) + ls)
        if terms:
            logs[n] = float(special.logsumexp(terms))
    return SurvivalTable.from_logs(x, logs, "mixed-conditioning", info={"max_atoms": len(sums) - 1})


# ---------------------------------------------------------------------------
# Proof-level constants
# ---------------------------------------------------------------------------


def kappa_exponent(f, x: float, beta: float, eps: float, grid_points: int = 400) -> float:
    """``kappa_x = max(beta, x sup_{[eps,x]} f / F(eps) + 1)``.

    Requires ``t^-beta F(t)`` to be non-increasing on ``(0, eps]``.
    """
    fam = _family(f)
    alpha = fam.rv_index_alpha
    if alpha is not None and beta <= alpha:
        raise PreconditionError("beta must exceed alpha")
    ts = np.geomspace(eps * 1e-8, eps, grid_points)
    g = ts ** (-beta) * np.asarray(fam.cdf(ts))
    if np.any(np.diff(g) > 1e-12 * g[1:]):
        raise EpsNotValid(f"t^-{beta} F(t) is not non-increasing on (0, {eps}]")
    sup = fam.sup_pdf(eps, x)
    return max(beta, x * sup / float(fam.cdf(eps)) + 1)


def kappa_verify(f, x: float, kappa: float, samples: int = 10_000, seed: int = 0) -> bool:
    """Check ``F(ct) >= c^kappa F(t)`` on random ``(c, t)`` in ``(0,1) x (0,x]``."""
    fam = _family(f)
    rng = np.random.default_rng(seed)
    c = rng.uniform(0, 1, samples)
    t = x * (1 - rng.uniform(0, 1, samples))
    lhs = np.asarray(fam.cdf(c * t))
    rhs = c**kappa * np.asarray(fam.cdf(t))
    return bool(np.all(lhs >= rhs * (1 - 1e-12)))


def delta_integral(x: float, delta: float, n: int, K_x: int) -> float:
    """``int_{1/n}^x y^delta ((x-y)/x)^(n/K_x - 1) dy`` by adaptive quadrature."""
    if n <= 1 / x:
        raise PreconditionError("need n > 1/x")
    e = n / K_x - 1
    lo = 1.0 / n
    scale = x / (e + 1)
    breaks = sorted({min(x, lo + scale * s) for s in (1, 4, 16, 64, 256)} | {x})
    pts = [lo] + [b for b in breaks if b > lo]

    def g(y):
        return y**delta * math.exp(e * math.log1p(-y / x)) if y < x else 0.0

    opts = dict(epsabs=0, epsrel=1e-12, limit=400)
    return math.fsum(integrate.quad(g, a, b, **opts)[0] for a, b in zip(pts[:-1], pts[1:]))
