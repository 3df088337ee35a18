"""Declarative experiment runner.

An experiment file is TOML with one ``[[experiment]]`` table per run::

    [[experiment]]
    id = "binomial-rate"
    task = "rate-law"
    x = 2.5
    n_schedule = { kind = "geometric", start = 10, stop = 10000, num = 7 }
    distribution = { kind = "discrete", p0 = 0.5, atoms = [[1, 0.5]] }

Unknown keys anywhere are errors.  Each experiment writes one CSV (floats in
shortest round-trip form, LF line endings) and the run writes a JSON
manifest next to them.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import itertools
import json
import math
import os
import sys
import tempfile
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__, kernels
from .convolve import (
    Window,
    closed_form_log_survival,
    equivalence_integral,
    monotone_threshold,
    survival_mixed,
    survival_numeric,
)
from .discrete import m_x, rate_law_deviation, ratio_sequence, survival_exact
from .dist import (
    ConstantNearZero,
    DensitySpec,
    DiscreteSpec,
    GammaLike,
    Kind,
    PowerLawOnInterval,
    ShiftedDampedExponential,
    ShiftedTwoSidedExponential,
    ShockDistribution,
    Tabulated,
    classify,
    dyadic_spec,
    exotic_spec,
)
from .errors import EngineError, ParseError, ShockRatioError, UnsupportedCombination
from .ldp import (
    build_mgf,
    condition_c_check,
    cramer_survival_asymptotic,
    cramer_tilt,
    ld_bounds_c2,
    ratio_limit_bounds_c2,
)
from .mc import choose_tilt, simulate_survival, simulate_survival_tilted

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

TASKS = ("classify", "survival", "ratio", "rate-law", "monotone", "equivalence", "cramer", "bounds", "mc-check")
METHODS = ("exact", "grid", "mc", "mc-tilted", "cramer-asymptotic", "equivalence-integral")
EXIT_PARSE, EXIT_UNSUPPORTED, EXIT_ENGINE = 2, 3, 4


# ---------------------------------------------------------------------------
# Spec parsing
# ---------------------------------------------------------------------------


def _check_keys(table: dict, allowed, where: str):
    extra = sorted(set(table) - set(allowed))
    if extra:
        raise ParseError(f"{where}: unknown key(s) {', '.join(extra)}")


def _need(table: dict, key: str, where: str):
    if key not in table:
        raise ParseError(f"{where}: missing required key {key!r}")
    return table[key]


def _num(v, where: str) -> Fraction:
    try:
        if isinstance(v, bool):
            raise TypeError
        if isinstance(v, str):
            return Fraction(v)
        if isinstance(v, (int, float)):
            return Fraction(repr(v)) if isinstance(v, float) else Fraction(v)
    except (TypeError, ValueError, ZeroDivisionError):
        pass
    raise ParseError(f"{where}: {v!r} is not a number")


def _float(v, where: str) -> float:
    return float(_num(v, where))


_FAMILY_KEYS = {
    "power_law": ("alpha", "upper"),
    "gamma": ("k", "theta"),
    "constant": ("c", "eps", "tail_shape"),
    "f1": (),
    "f2": (),
    "tabulated": ("path",),
}


def _density(t: dict, where: str, base: Path) -> DensitySpec:
    fam_name = _need(t, "family", where)
    if fam_name not in _FAMILY_KEYS:
        raise ParseError(f"{where}: unknown family {fam_name!r}")
    _check_keys(t, ("family", "kind", "rv_index_alpha") + _FAMILY_KEYS[fam_name], where)
    g = lambda k, d=None: _float(t[k], f"{where}.{k}") if k in t else d  # noqa: E731
    if fam_name == "power_law":
        fam = PowerLawOnInterval(g("alpha"), g("upper", 1.0)) if "alpha" in t else None
    elif fam_name == "gamma":
        fam = GammaLike(g("k"), g("theta", 1.0)) if "k" in t else None
    elif fam_name == "constant":
        fam = ConstantNearZero(g("c"), g("eps"), t.get("tail_shape", "auto")) if "c" in t and "eps" in t else None
    elif fam_name == "f1":
        fam = ShiftedTwoSidedExponential()
    elif fam_name == "f2":
        fam = ShiftedDampedExponential()
    else:
        path = Path(_need(t, "path", where))
        fam = Tabulated.from_csv(path if path.is_absolute() else base / path)
    if fam is None:
        raise ParseError(f"{where}: family {fam_name!r} needs {', '.join(_FAMILY_KEYS[fam_name])}")
    return DensitySpec(fam, g("rv_index_alpha"))


def _discrete(t: dict, where: str) -> DiscreteSpec:
    _check_keys(t, ("kind", "preset", "p0", "atoms", "head", "rv_index_alpha"), where)
    preset = t.get("preset")
    if preset is not None:
        head = int(t.get("head", 40 if preset == "exotic" else 8))
        if preset == "binomial":
            return DiscreteSpec(Fraction(1, 2), ((Fraction(1), Fraction(1, 2)),))
        if preset == "exotic":
            return exotic_spec(head)
        if preset == "dyadic":
            return dyadic_spec(_num(t.get("p0", "1/2"), f"{where}.p0"), head)
        raise ParseError(f"{where}: unknown preset {preset!r}")
    p0 = _num(_need(t, "p0", where), f"{where}.p0")
    atoms = _need(t, "atoms", where)
    if not isinstance(atoms, list) or not all(isinstance(a, list) and len(a) == 2 for a in atoms):
        raise ParseError(f"{where}.atoms must be a list of [value, probability] pairs")
    pairs = tuple((_num(v, f"{where}.atoms"), _num(p, f"{where}.atoms")) for v, p in atoms)
    alpha = t.get("rv_index_alpha")
    return DiscreteSpec(p0, pairs, rv_index_alpha=None if alpha is None else float(alpha))


def parse_distribution(t: dict, where: str = "distribution", base: Path = Path(".")) -> ShockDistribution:
    if not isinstance(t, dict):
        raise ParseError(f"{where} must be a table")
    kind = _need(t, "kind", where)
    try:
        if kind == "discrete":
            return ShockDistribution.of(_discrete(t, where))
        if kind == "continuous":
            return ShockDistribution.of(_density(t, where, base))
        if kind == "mixed":
            _check_keys(t, ("kind", "weight", "continuous", "discrete"), where)
            cont = _density(_need(t, "continuous", where), f"{where}.continuous", base)
            disc = _discrete(_need(t, "discrete", where), f"{where}.discrete")
            return ShockDistribution.mixed(_float(_need(t, "weight", where), f"{where}.weight"), cont, disc)
    except ParseError:
        raise
    except (ShockRatioError, ValueError, OSError) as exc:
        raise ParseError(f"{where}: {exc}") from exc
    raise ParseError(f"{where}: unknown kind {kind!r}")


def parse_schedule(v, where: str = "n_schedule") -> tuple[int, ...]:
    if isinstance(v, list):
        if not all(isinstance(n, int) and not isinstance(n, bool) for n in v):
            raise ParseError(f"{where}: entries must be integers")
        ns = tuple(v)
    elif isinstance(v, dict):
        _check_keys(v, ("kind", "start", "stop", "num", "step"), where)
        kind = v.get("kind", "geometric")
        start, stop = int(_need(v, "start", where)), int(_need(v, "stop", where))
        if kind == "geometric":
            num = int(_need(v, "num", where))
            if start < 1 or num < 1:
                raise ParseError(f"{where}: geometric schedule needs start >= 1 and num >= 1")
            ns = tuple(sorted({int(round(n)) for n in np.geomspace(start, stop, num)}))
        elif kind == "linear":
            ns = tuple(range(start, stop + 1, int(v.get("step", 1))))
        else:
            raise ParseError(f"{where}: unknown schedule kind {kind!r}")
    else:
        raise ParseError(f"{where}: expected a list or a table")
    if not ns:
        raise ParseError(f"{where}: schedule is empty")
    if any(b <= a for a, b in zip(ns, ns[1:])):
        raise ParseError(f"{where}: schedule must be strictly increasing")
    if ns[0] < 0:
        raise ParseError(f"{where}: n must be nonnegative")
    return ns


@dataclass(frozen=True)
class Options:
    step: float | None = None
    tol: float = 1e-12
    seed: int = 0
    samples: int = 100_000
    window: str = "log"
    window_c: float = 1.0
    lam: float | str = "auto"
    n_cap: int = 30
    engine: str = "auto"
    C: float = 1.1
    c_x: float | None = None
    C_x: float | None = None
    c: float | None = None
    rv_index_alpha: float | None = None


def _options(t: dict, where: str) -> Options:
    names = {f.name: f for f in dataclasses.fields(Options)}
    _check_keys(t, names, where)
    kw: dict[str, Any] = {}
    for k, v in t.items():
        if k in ("window", "engine"):
            kw[k] = str(v)
        elif k in ("seed", "samples", "n_cap"):
            if not isinstance(v, int) or isinstance(v, bool):
                raise ParseError(f"{where}.{k} must be an integer")
            kw[k] = v
        elif k == "lam" and v == "auto":
            kw[k] = v
        else:
            kw[k] = _float(v, f"{where}.{k}")
    opts = Options(**kw)
    if not 0 <= opts.seed < 2**64:
        raise ParseError(f"{where}.seed must be an unsigned 64-bit integer")
    if opts.samples < 1:
        raise ParseError(f"{where}.samples must be >= 1")
    if opts.engine not in ("auto", "exact", "grid"):
        raise ParseError(f"{where}.engine must be auto, exact or grid")
    return opts


@dataclass(frozen=True, eq=False)
class ExperimentSpec:
    id: str
    task: str
    distribution: ShockDistribution
    x: float
    n_schedule: tuple[int, ...]
    options: Options = field(default_factory=Options)
    methods: tuple[str, ...] = ()
    csv: str = ""
    raw: dict = field(default_factory=dict)


_EXPERIMENT_KEYS = ("id", "task", "distribution", "x", "n_schedule", "options", "methods", "output")


def parse_experiment(t: dict, index: int, base: Path = Path(".")) -> ExperimentSpec:
    where = f"experiment[{index}]"
    if not isinstance(t, dict):
        raise ParseError(f"{where} must be a table")
    _check_keys(t, _EXPERIMENT_KEYS, where)
    eid = str(_need(t, "id", where))
    where = f"experiment {eid!r}"
    task = _need(t, "task", where)
    if task not in TASKS:
        raise ParseError(f"{where}: unknown task {task!r}")
    dist = parse_distribution(_need(t, "distribution", where), f"{where}.distribution", base)
    x = _float(_need(t, "x", where), f"{where}.x")
    if not x > 0:
        raise ParseError(f"{where}: x must be positive")
    ns = parse_schedule(_need(t, "n_schedule", where), f"{where}.n_schedule")
    opts = _options(t.get("options", {}), f"{where}.options")
    methods = tuple(t.get("methods", ()))
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise ParseError(f"{where}: unknown method(s) {', '.join(bad)}")
    out = t.get("output", {})
    _check_keys(out, ("csv",), f"{where}.output")
    return ExperimentSpec(eid, task, dist, x, ns, opts, methods, out.get("csv", f"{eid}.csv"), t)


def load_spec(path) -> tuple[list[ExperimentSpec], bytes]:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    try:
        doc = tomllib.loads(data.decode("utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ParseError(f"{path}: {exc}") from exc
    _check_keys(doc, ("experiment",), str(path))
    exps = doc.get("experiment")
    if not isinstance(exps, list) or not exps:
        raise ParseError(f"{path}: no [[experiment]] tables")
    specs = [parse_experiment(t, i, path.parent) for i, t in enumerate(exps)]
    ids = [s.id for s in specs]
    if len(set(ids)) != len(ids):
        raise ParseError(f"{path}: duplicate experiment ids")
    return specs, data


# ---------------------------------------------------------------------------
# Capabilities
# ---------------------------------------------------------------------------


def _real_supported(d: ShockDistribution) -> bool:
    return not d.nonnegative


def _is_c2(d: ShockDistribution) -> bool:
    return d.kind is Kind.DISCRETE and d.discrete_part.p0 > 0 and d.discrete_part.x_min > 0


def check_capability(spec: ExperimentSpec, compare: bool = False):
    """Raise :class:`UnsupportedCombination` if no engine covers the request."""
    d, task = spec.distribution, spec.task
    why = None
    if compare:
        if len(set(spec.methods)) < 2:
            raise UnsupportedCombination(f"{spec.id}: compare needs at least two methods")
        for m in spec.methods:
            _method_supported(spec, m)
        return
    if task in ("survival", "ratio") and _real_supported(d):
        why = "exact and grid engines need nonnegative shocks"
    elif task == "rate-law" and not _is_c2(d):
        why = "rate law needs a discrete class-C2 law"
    elif task == "bounds" and not _is_c2(d):
        why = "bound sandwiches need a discrete class-C2 law"
    elif task == "monotone" and (d.kind is not Kind.CONTINUOUS or _real_supported(d)):
        why = "monotonicity scan needs a nonnegative density"
    elif task == "equivalence" and (d.kind is not Kind.CONTINUOUS or _real_supported(d)
                                    or d.continuous_part.rv_index_alpha is None):
        why = "equivalence integral needs a nonnegative density with a declared alpha"
    elif task == "cramer" and not _real_supported(d):
        why = "the Cramér equivalent needs P[X1 < 0] > 0"
    if why:
        raise UnsupportedCombination(f"{spec.id}: task {task!r}: {why}")


def _method_supported(spec: ExperimentSpec, m: str):
    d = spec.distribution
    ok = {
        "exact": d.kind is Kind.DISCRETE or (d.kind is Kind.CONTINUOUS
                                            and closed_form_log_survival(d.continuous_part, spec.x, 1) is not None),
        "grid": not _real_supported(d) and d.kind is not Kind.DISCRETE,
        "mc": True,
        "mc-tilted": True,
        "cramer-asymptotic": _real_supported(d),
        "equivalence-integral": d.kind is Kind.CONTINUOUS and not _real_supported(d)
                                and d.continuous_part.rv_index_alpha is not None,
    }[m]
    if not ok:
        raise UnsupportedCombination(f"{spec.id}: method {m!r} does not apply to this distribution")


# ---------------------------------------------------------------------------
# Engines
# ---------------------------------------------------------------------------


def _survival_table(spec: ExperimentSpec, n_max: int, engine: str | None = None):
    d, o = spec.distribution, spec.options
    engine = engine or o.engine
    if d.kind is Kind.DISCRETE:
        return survival_exact(d.discrete_part, spec.x, n_max, o.tol)
    if d.kind is Kind.MIXED:
        return survival_mixed(d, spec.x, n_max, o.step, tol=o.tol)
    f = d.continuous_part
    if engine in ("auto", "exact"):
        logs = [closed_form_log_survival(f, spec.x, n) for n in range(n_max + 1)]
        if all(v is not None for v in logs):
            from .discrete import SurvivalTable
            return SurvivalTable.from_logs(spec.x, logs, "closed-form")
        if engine == "exact":
            raise UnsupportedCombination(f"{spec.id}: no closed form for this density")
    return survival_numeric(f, spec.x, n_max, o.step)


def _lam(spec: ExperimentSpec, n: int) -> float:
    if spec.options.lam != "auto":
        return float(spec.options.lam)
    return choose_tilt(build_mgf(spec.distribution, tol=spec.options.tol), spec.x, n)


def _mc(spec: ExperimentSpec, n: int, tilted: bool, jobs: int):
    o = spec.options
    if tilted:
        return simulate_survival_tilted(spec.distribution, spec.x, n, o.samples, o.seed, _lam(spec, n),
                                        jobs=jobs, tol=o.tol)
    return simulate_survival(spec.distribution, spec.x, n, o.samples, o.seed, jobs=jobs, tol=o.tol)


def task_classify(spec, jobs):
    d = spec.distribution
    if _real_supported(d):
        label = "C-none (real-supported law)"
        evidence = "P[X1 < 0] > 0"
    else:
        c = classify(d)
        label, evidence = c.label, "; ".join(c.evidence)
    try:
        verdict = condition_c_check(build_mgf(d, tol=spec.options.tol)).satisfied.value
    except ShockRatioError:
        verdict = "undetermined"
    return ["id", "label", "condition_c", "evidence"], [[spec.id, label, verdict, evidence]]


def task_survival(spec, jobs):
    tab = _survival_table(spec, spec.n_schedule[-1])
    rows = [[n, tab.values[n], tab.log_values[n], tab.truncation_error_bound[n], tab.method] for n in spec.n_schedule]
    return ["n", "c_n", "log_c_n", "error_bound", "method"], rows


def task_ratio(spec, jobs):
    tab = _survival_table(spec, spec.n_schedule[-1] + 1)
    r = ratio_sequence(tab)
    return ["n", "ratio"], [[n, r[n]] for n in spec.n_schedule]


def task_rate_law(spec, jobs):
    sp = spec.distribution.discrete_part
    tab = survival_exact(sp, spec.x, spec.n_schedule[-1] + 1, spec.options.tol)
    r = ratio_sequence(tab)
    dev = rate_law_deviation(tab, sp.p0, m_x(sp, spec.x))
    return ["n", "c_n", "ratio", "deviation"], [[n, tab.values[n], r[n], dev[n]] for n in spec.n_schedule]


def task_monotone(spec, jobs):
    cap = max(spec.options.n_cap, spec.n_schedule[-1])
    rep = monotone_threshold(spec.distribution.continuous_part, spec.x, cap, spec.options.step)
    rows = []
    for n in spec.n_schedule:
        v = rep.violations.get(n)
        rows.append([n, v is None, "" if v is None else v[1], "" if v is None else v[2],
                     "" if rep.threshold_n is None else rep.threshold_n])
    return ["n", "monotone", "t_violation", "drop", "threshold_n"], rows


def task_equivalence(spec, jobs):
    f = spec.distribution.continuous_part
    alpha = spec.options.rv_index_alpha or f.rv_index_alpha
    w = Window(spec.options.window, spec.options.window_c)
    tab = _survival_table(spec, spec.n_schedule[-1] + 1)
    r = ratio_sequence(tab)
    rows = []
    for n in spec.n_schedule:
        if n < 2:
            raise EngineError(f"{spec.id}: the window needs n >= 2")
        integ = equivalence_integral(f, alpha, spec.x, n, w)
        rows.append([n, r[n], integ, r[n] / integ])
    return ["n", "ratio", "integral", "quotient"], rows


def task_cramer(spec, jobs):
    m = build_mgf(spec.distribution, tol=spec.options.tol)
    t = cramer_tilt(m)
    rows = []
    for n in spec.n_schedule:
        a = cramer_survival_asymptotic(m, spec.x, n)
        rows.append([n, a, t.log_prefactor(n, spec.x), t.ratio_limit, t.h_inf, t.ld_rate, t.sigma_bar])
    return ["n", "asymptotic", "log_asymptotic", "ratio_limit", "h_inf", "ld_rate", "sigma_bar"], rows


def task_bounds(spec, jobs):
    sp = spec.distribution.discrete_part
    o = spec.options
    pm = float(sp.p0) * m_x(sp, spec.x)
    c_x = o.c_x if o.c_x is not None else 0.9 * pm
    C_x = o.C_x if o.C_x is not None else 1.1 * pm
    tab = survival_exact(sp, spec.x, spec.n_schedule[-1], o.tol)
    rows = []
    for n in spec.n_schedule:
        v = tab.log_values[n] / n
        ld = ld_bounds_c2(sp, spec.x, n, o.C)
        rl = ratio_limit_bounds_c2(sp, spec.x, n, c_x, C_x)
        rows.append([n, v, ld.lower, ld.upper, rl.lower, rl.upper, ld.contains(v), rl.contains(v), rl.inside(ld)])
    return ["n", "log_rate", "ld_lower", "ld_upper", "rl_lower", "rl_upper", "in_ld", "in_rl", "rl_inside_ld"], rows


def _reference(spec, n_max):
    d = spec.distribution
    if d.kind is Kind.DISCRETE or (d.kind is Kind.CONTINUOUS and not _real_supported(d)
                                   and closed_form_log_survival(d.continuous_part, spec.x, 1) is not None):
        return _survival_table(spec, n_max, "exact").values
    return None


def task_mc_check(spec, jobs):
    ref = _reference(spec, spec.n_schedule[-1])
    tilted = spec.options.lam == "auto" or float(spec.options.lam) != 0
    rows = []
    for n in spec.n_schedule:
        e = _mc(spec, n, tilted, jobs)
        r = "" if ref is None else ref[n]
        z = "" if ref is None or e.stderr == 0 else (e.estimate - ref[n]) / e.stderr
        rows.append([n, e.estimate, e.stderr, e.samples, e.method, e.lam, r, z])
    return ["n", "estimate", "stderr", "samples", "method", "lam", "reference", "z_score"], rows


TASK_FUNCS = {
    "classify": task_classify,
    "survival": task_survival,
    "ratio": task_ratio,
    "rate-law": task_rate_law,
    "monotone": task_monotone,
    "equivalence": task_equivalence,
    "cramer": task_cramer,
    "bounds": task_bounds,
    "mc-check": task_mc_check,
}


def _method_values(spec, method, jobs):
    """Per-n values of one method and, for Monte Carlo, standard errors."""
    ns = spec.n_schedule
    if method in ("exact", "grid"):
        tab = _survival_table(spec, ns[-1], method)
        return [tab.values[n] for n in ns], None
    if method in ("mc", "mc-tilted"):
        es = [_mc(spec, n, method == "mc-tilted", jobs) for n in ns]
        return [e.estimate for e in es], [e.stderr for e in es]
    if method == "cramer-asymptotic":
        m = build_mgf(spec.distribution, tol=spec.options.tol)
        return [cramer_survival_asymptotic(m, spec.x, n) for n in ns], None
    raise UnsupportedCombination(f"{spec.id}: {method!r} is not a survival estimate; use task=equivalence")


def compare_experiment(spec, jobs=1):
    check_capability(spec, compare=True)
    methods = list(dict.fromkeys(spec.methods))
    vals, errs = {}, {}
    for m in methods:
        vals[m], errs[m] = _method_values(spec, m, jobs)
    header = ["n"] + methods + [f"stderr_{m}" for m in methods if errs[m] is not None]
    pairs = list(itertools.combinations(methods, 2))
    header += [f"reldiff_{a}_{b}" for a, b in pairs] + [f"logdiff_{a}_{b}" for a, b in pairs]
    rows = []
    for i, n in enumerate(spec.n_schedule):
        row = [n] + [vals[m][i] for m in methods] + [errs[m][i] for m in methods if errs[m] is not None]
        for a, b in pairs:
            va, vb = vals[a][i], vals[b][i]
            row.append(abs(va - vb) / abs(vb) if vb != 0 else math.nan)
        for a, b in pairs:
            va, vb = vals[a][i], vals[b][i]
            row.append(math.log(va) - math.log(vb) if va > 0 and vb > 0 else math.nan)
        rows.append(row)
    return header, rows


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------


def fmt(v) -> str:
    """Shortest round-trip text for floats; ``true``/``false`` for booleans."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def render_csv(header, rows) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in sorted(rows, key=lambda r: r[0] if isinstance(r[0], int) else 0):
        w.writerow([fmt(v) for v in row])
    return buf.getvalue().encode("utf-8")


def write_atomic(path: Path, data: bytes):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _with_seed(spec: ExperimentSpec, seed: int | None) -> ExperimentSpec:
    if seed is None:
        return spec
    return dataclasses.replace(spec, options=dataclasses.replace(spec.options, seed=seed))


def _execute(spec: ExperimentSpec, compare: bool, jobs: int, strict: bool):
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("error" if strict else "always")
        try:
            if compare:
                header, rows = compare_experiment(spec, jobs)
            else:
                check_capability(spec)
                header, rows = TASK_FUNCS[spec.task](spec, jobs)
        except (ParseError, UnsupportedCombination):
            raise
        except Exception as exc:
            raise EngineError(f"{spec.id}: {type(exc).__name__}: {exc}") from exc
    return render_csv(header, rows), [str(w.message) for w in caught]


def _run_file(spec_file, out_dir, seed, jobs, strict, compare) -> int:
    t0 = time.perf_counter()
    try:
        specs, data = load_spec(spec_file)
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    out = Path(out_dir) if out_dir else Path(spec_file).parent
    specs = [_with_seed(s, seed) for s in specs]

    def one(s):
        return _execute(s, compare, 1, strict)

    try:
        if jobs > 1 and len(specs) > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                results = list(pool.map(one, specs))
        elif len(specs) == 1:
            results = [_execute(specs[0], compare, jobs, strict)]
        else:
            results = [one(s) for s in specs]
    except UnsupportedCombination as exc:
        print(f"unsupported: {exc}", file=sys.stderr)
        return EXIT_UNSUPPORTED
    except EngineError as exc:
        print(f"engine error: {exc}", file=sys.stderr)
        return EXIT_ENGINE
    entries = []
    for s, (blob, warns) in zip(specs, results):
        name = s.csv if not compare else f"{Path(s.csv).stem}.compare.csv"
        write_atomic(out / name, blob)
        entries.append({"id": s.id, "task": "compare" if compare else s.task, "csv": name,
                        "seed": s.options.seed, "warnings": warns})
    manifest = {
        "spec": str(spec_file),
        "inputs_sha256": hashlib.sha256(data).hexdigest(),
        "library_version": __version__,
        "kernel_backend": kernels.BACKEND,
        "wall_time_s": time.perf_counter() - t0,
        "experiments": entries,
    }
    stem = Path(spec_file).stem + (".compare" if compare else "")
    write_atomic(out / f"{stem}.manifest.json", (json.dumps(manifest, indent=2) + "\n").encode())
    return 0


def run(spec_file, out_dir=None, seed=None, jobs=1, strict=False) -> int:
    return _run_file(spec_file, out_dir, seed, jobs, strict, compare=False)


def compare(spec_file, out_dir=None, seed=None, jobs=1, strict=False) -> int:
    return _run_file(spec_file, out_dir, seed, jobs, strict, compare=True)


def validate(spec_file) -> int:
    try:
        specs, _ = load_spec(spec_file)
        for s in specs:
            check_capability(s, compare=bool(s.methods))
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except UnsupportedCombination as exc:
        print(f"unsupported: {exc}", file=sys.stderr)
        return EXIT_UNSUPPORTED
    print(f"{spec_file}: {len(specs)} experiment(s) OK")
    return 0


def _u64(s: str) -> int:
    v = int(s, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="shockratio", description="Survival ratios of cumulative shock models.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("run", "compare", "validate"):
        sp = sub.add_parser(name)
        sp.add_argument("spec")
        if name != "validate":
            sp.add_argument("--jobs", type=int, default=1)
            sp.add_argument("--out-dir")
            sp.add_argument("--seed", type=_u64)
            sp.add_argument("--strict", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "validate":
        return validate(args.spec)
    fn = run if args.command == "run" else compare
    return fn(args.spec, args.out_dir, args.seed, max(1, args.jobs), args.strict)
