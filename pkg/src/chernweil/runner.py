"""Experiment orchestration: configs, dispatch, reports and golden regression.

Configs are flat ``key = value`` text, one pair per line, ``#`` starting a
comment.  Values are integers, reals, booleans (``true``/``false``) or bare
strings.  The ``experiment`` key names a catalog id, optionally carrying
parameters as a query string (``wcs?metric=round-s3&action=hopf&k=2``);
explicit keys override query parameters.

Machine reports are JSON lines with sorted keys and no timing data, so a run
is byte-reproducible from (config, seed, engine version).  Text reports add
wall-clock time.
"""

import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from . import __version__
from .errors import ArgumentError, ValidationError
from .geometry import metric_from_id, parse_id

__all__ = [
    "ExperimentConfig", "ExperimentReport", "Check", "parse_config", "load_config",
    "make_config", "run", "sweep", "regress", "emit_plot_data", "load_golden", "compare_golden",
    "EXPERIMENTS", "worker_count",
]

WORKERS_ENV = "CHERNWEIL_WORKERS"


# ---------------------------------------------------------------------------
# parameters

def _int(name, lo=None, hi=None):
    def conv(v):
        if isinstance(v, bool) or (isinstance(v, float) and not v.is_integer()):
            raise ValidationError(f"{name} must be an integer, got {v!r}")
        try:
            x = int(v)
        except (TypeError, ValueError):
            raise ValidationError(f"{name} must be an integer, got {v!r}") from None
        if lo is not None and x < lo or hi is not None and x > hi:
            raise ValidationError(f"{name} = {x} violates {lo} <= {name} <= {hi}")
        return x
    return conv


def _real(name, check=None, rule=""):
    def conv(v):
        try:
            x = float(v)
        except (TypeError, ValueError):
            raise ValidationError(f"{name} must be a real number, got {v!r}") from None
        if not math.isfinite(x) or (check and not check(x)):
            raise ValidationError(f"{name} = {x} violates precondition {rule}")
        return x
    return conv


def _bool(name):
    def conv(v):
        if isinstance(v, bool):
            return v
        s = str(v).lower()
        if s in ("true", "1", "yes"):
            return True
        if s in ("false", "0", "no"):
            return False
        raise ValidationError(f"{name} must be a boolean, got {v!r}")
    return conv


def _choice(name, options):
    def conv(v):
        if v not in options:
            raise ValidationError(f"{name} must be one of {', '.join(options)}; got {v!r}")
        return v
    return conv


def _string(v):
    return str(v)


PARAMS = {
    "metric": _string,
    "action": _string,
    "group": _choice("group", ("SU(2)", "su2")),
    "algebra": _choice("algebra", ("u(1)", "su(2)")),
    "k": _int("k", 1, 8),
    "n": _int("n", -50, 50),
    "s": _real("s"),
    "t": _real("t", lambda x: 0 < x <= 1, "0 < t <= 1"),
    "scale": _real("scale", lambda x: x > 0, "scale > 0"),
    "shift": _real("shift", lambda x: x in (0.0, 1.0), "shift in {0, 1}"),
    "depth": _int("depth", 0, 12),
    "cutoff": _int("cutoff", 2, 256),
    "modes": _int("modes", 1, 64),
    "pairs": _int("pairs", 1, 1000),
    "nodes": _int("nodes", 2, 512),
    "theta_nodes": _int("theta_nodes", 4, 4096),
    "refine": _bool("refine"),
    "seed": _int("seed", 0, 2**63 - 1),
    "tolerance": _real("tolerance", lambda x: x > 0, "tolerance > 0"),
}

RUNNER_KEYS = {"experiment", "out", "workers", "golden", "sweep_axis", "sweep_values"}


@dataclass(frozen=True)
class Check:
    """A scalar field compared with an expected value at an absolute tolerance.

    ``mode="abs"`` compares |value| instead of value.
    """

    field: str
    expected: float
    tolerance: float
    mode: str = "value"

    def evaluate(self, values):
        v = values[self.field]
        v = abs(v) if self.mode == "abs" else v
        return abs(v - self.expected) <= self.tolerance


@dataclass(frozen=True)
class Experiment:
    name: str
    params: Dict[str, object]
    kernel: Callable = field(compare=False)
    summary: str = ""


def _tol(p, default):
    return default if p.get("tolerance") is None else p["tolerance"]


# ---------------------------------------------------------------------------
# kernels; each returns (values, convergence, truncation_loss, checks)

def _wcs(p, map_fn):
    from .forms import QuadratureSpec
    from .loops import action_from_id, wcs_integral
    mid = p["metric"]
    if mid.startswith("squashed-t11"):
        mid = f"squashed-t11?t={p['t']}"
    if p.get("scale", 1.0) != 1.0:
        mid += ("&" if "?" in mid else "?") + f"scale={p['scale']}"
    metric = metric_from_id(mid)
    action = action_from_id(metric, p["action"])
    res = wcs_integral(metric, action, p["k"], QuadratureSpec(nodes=p.get("nodes")),
                       theta_nodes=p["theta_nodes"], refine=p["refine"], map_fn=map_fn)
    values = {"value": res.value}
    if res.relative_change is not None:
        values["relative_change"] = res.relative_change
    for a, r, frac, resid in res.pi_ratios():
        values[f"over_pi{a}"] = r
        values[f"over_pi{a}_rational"] = frac
        values[f"over_pi{a}_residual"] = resid
    checks = []
    if p["action"] in ("hopf", "trivial"):
        checks.append(Check("value", 0.0, _tol(p, 1e-6)))
    else:
        values["nonvanishing"] = float(abs(res.value) > 1e-4)
        checks.append(Check("nonvanishing", 1.0, 0.0))
        if "relative_change" in values:
            checks.append(Check("relative_change", 0.0, 0.01))
    conv = {str(n): v for n, v in sorted(res.convergence.items())}
    return values, conv, 0.0, checks


def _chern(p, map_fn):
    from .charclasses import InvariantPolynomial, char_form, monopole
    from .forms import QuadratureSpec, integrate
    form = char_form(monopole(p["n"]), InvariantPolynomial.chern(1))
    conv, value = _refine(form, p, map_fn, integrate, QuadratureSpec)
    return ({"value": value.real, "imag": value.imag}, conv, 0.0,
            [Check("value", float(p["n"]), _tol(p, 1e-6))])


def _gauss_bonnet(p, map_fn):
    from .charclasses import ConnectionField, InvariantPolynomial, char_form
    from .forms import QuadratureSpec, integrate
    metric = metric_from_id(p["metric"])
    if metric.dim != 2:
        raise ValidationError("gauss-bonnet needs a surface metric")
    form = char_form(ConnectionField.levi_civita(metric),
                     InvariantPolynomial("pfaffian", 1, 1 / (2 * np.pi)))
    conv, value = _refine(form, p, map_fn, integrate, QuadratureSpec)
    return ({"value": value.real}, conv, 0.0,
            [Check("value", 2.0, _tol(p, 1e-6))])


def _refine(form, p, map_fn, integrate, QuadratureSpec):
    q = QuadratureSpec(nodes=p.get("nodes") or 64)
    levels = [q, q.refined()] if p["refine"] else [q]
    conv = {}
    for qq in levels:
        conv[str(qq.nodes)] = complex(integrate(form, qq, map_fn=map_fn).value)
    value = conv[str(levels[-1].nodes)]
    return {k: v.real for k, v in conv.items()}, value


def _mc_volume(p, map_fn):
    from .charclasses import maurer_cartan_connection
    from .forms import QuadratureSpec, integrate, wedge
    theta = maurer_cartan_connection("SU(2)").connection_form()
    tr3 = wedge(wedge(theta, theta), theta).map_values(
        lambda a: np.trace(a, axis1=-2, axis2=-1), "scalar")
    value = complex(integrate(tr3, QuadratureSpec(nodes=p.get("nodes")), map_fn=map_fn).value)
    ref = 24 * np.pi ** 2
    return ({"value": value.real, "imag": value.imag,
             "relative_error": abs(abs(value) - ref) / ref}, {}, 0.0,
            [Check("relative_error", 0.0, _tol(p, 5e-3))])


def _symbol_inverse(p, map_fn):
    from .symbols import compose, power_symbol
    s, depth, cutoff = p["s"], p["depth"], p["cutoff"]
    prod = compose(power_symbol(s, 1, cutoff, depth), power_symbol(-s, 1, cutoff, depth))
    c = prod.coeffs.copy()
    lead = np.abs(c[0, :, cutoff] - 1).max()
    c[0, :, cutoff] = 0
    return ({"leading_error": float(lead), "off_leading": float(np.abs(c).max())}, {},
            prod.truncation_loss,
            [Check("off_leading", 0.0, _tol(p, 1e-10)),
             Check("leading_error", 0.0, _tol(p, 1e-10))])


def _draw_pairs(p):
    from .loops import LoopAlgebraElement
    for i in range(p["pairs"]):
        rng = np.random.default_rng([p["seed"], i])
        yield (LoopAlgebraElement.random(p["algebra"], rng, p["modes"], p["cutoff"]),
               LoopAlgebraElement.random(p["algebra"], rng, p["modes"], p["cutoff"]))


def _hs_curvature(p, map_fn):
    from .loops import hs_curvature
    s, depth = p["s"], p["depth"]
    norms, loss, top = [], 0.0, 0.0
    for X, Y in _draw_pairs(p):
        C = hs_curvature(X, Y, s, depth, p["shift"])
        top = C.order
        norms.append(C.component_norms())
        loss = max(loss, C.truncation_loss)
    norms = np.array(norms)
    worst = norms.max(axis=0)
    min_o2 = float(norms[:, 2].min()) if depth >= 2 else None
    values = {f"order{int(top) - j}": float(w) for j, w in enumerate(worst)}
    values["max_all"] = float(worst.max())
    values["max_order0_1"] = float(worst[:2].max())
    if min_o2 is not None:
        values["min_order_minus2"] = float(min_o2)
    if p["algebra"] == "u(1)" or (s == 1.0):
        checks = [Check("max_all", 0.0, _tol(p, 1e-8))]
    else:
        checks = [Check("max_order0_1", 0.0, _tol(p, 1e-8))]
        if min_o2 is not None:
            values["order_minus2_present"] = float(min_o2 > 1e-3)
            checks.append(Check("order_minus2_present", 1.0, 0.0))
    return values, {}, loss, checks


def _alpha(p, map_fn):
    from .loops import alpha_map
    depth = p["depth"]
    worst = 0.0
    for X, Y in _draw_pairs(p):
        A, B = alpha_map(X, depth), alpha_map(Y, depth)
        resid = (A @ B) - (B @ A) - alpha_map(X.bracket(Y), depth)
        worst = max(worst, float(np.abs(resid.coeffs).max()))
    return ({"residual": worst}, {}, 0.0, [Check("residual", 0.0, _tol(p, 1e-10))])


EXPERIMENTS = {
    "wcs": Experiment("wcs", {"metric": "round-s3", "action": "hopf", "k": 2, "t": 0.5,
                              "scale": 1.0, "nodes": None, "theta_nodes": 64,
                              "refine": True, "tolerance": None}, _wcs,
                      "WCS integral over the orbit cycle of a circle action"),
    "chern": Experiment("chern", {"n": 1, "nodes": 64, "refine": True, "tolerance": None},
                        _chern, "first Chern number of the charge-n monopole on S^2"),
    "gauss-bonnet": Experiment("gauss-bonnet", {"metric": "round-s2", "nodes": 64,
                                                "refine": True, "tolerance": None},
                               _gauss_bonnet, "Pfaffian integral of a surface metric"),
    "mc-volume": Experiment("mc-volume", {"group": "SU(2)", "nodes": None,
                                          "tolerance": None}, _mc_volume,
                            "integral of tr (g^-1 dg)^3 over SU(2)"),
    "symbol-inverse": Experiment("symbol-inverse", {"s": 1.0, "depth": 6, "cutoff": 16,
                                                    "tolerance": None}, _symbol_inverse,
                                 "(I + Delta)^s composed with (I + Delta)^-s"),
    "hs-curvature": Experiment("hs-curvature", {"algebra": "su(2)", "s": 2.0, "depth": 6,
                                                "cutoff": 16, "modes": 3, "pairs": 20,
                                                "shift": 1.0, "seed": 0, "tolerance": None},
                               _hs_curvature, "order pattern of the H^s curvature symbol"),
    "alpha": Experiment("alpha", {"algebra": "su(2)", "depth": 6, "cutoff": 16, "modes": 2,
                                  "pairs": 20, "seed": 0, "tolerance": None}, _alpha,
                        "bracket residual of the alpha map"),
}


# ---------------------------------------------------------------------------
# configs and reports

@dataclass(frozen=True)
class ExperimentConfig:
    """A validated experiment request."""

    experiment: str
    params: Tuple[Tuple[str, object], ...]
    seed: int = 0

    @property
    def param_map(self):
        return dict(self.params)

    @property
    def ident(self):
        """Canonical id with every resolved parameter in sorted order."""
        q = "&".join(f"{k}={_fmt(v)}" for k, v in self.params if v is not None)
        return f"{self.experiment}?{q}" if q else self.experiment


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v) if isinstance(v, float) else str(v)


def _coerce(text):
    """Parse a config scalar: int, real, boolean or string."""
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def parse_config(text):
    """Parse flat ``key = value`` text into a dict (no validation beyond syntax)."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ValidationError(f"line {lineno}: expected 'key = value', got {raw!r}")
        if key in out:
            raise ValidationError(f"line {lineno}: duplicate key {key!r}")
        out[key] = _coerce(value)
    return out


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def make_config(raw, seed=None):
    """Validate a raw mapping into an :class:`ExperimentConfig`.

    Unknown keys, keys that the experiment does not take and out-of-range
    values raise :class:`ValidationError`.
    """
    raw = dict(raw)
    if "experiment" not in raw:
        raise ValidationError("config needs an 'experiment' key")
    name, query = parse_id(str(raw.pop("experiment")))
    if name not in EXPERIMENTS:
        raise ValidationError(f"unknown experiment {name!r}; catalog: "
                              f"{', '.join(sorted(EXPERIMENTS))}")
    exp = EXPERIMENTS[name]
    cfg_seed = raw.pop("seed", query.pop("seed", None))
    for key in list(raw):
        if key in RUNNER_KEYS:
            raw.pop(key)
    merged = {**query, **raw}
    params = dict(exp.params)
    for key, value in merged.items():
        if key not in PARAMS:
            raise ValidationError(f"unknown key {key!r}")
        if key not in params:
            raise ValidationError(f"experiment {name!r} does not take {key!r}; "
                                  f"accepted: {', '.join(sorted(params))}")
        params[key] = PARAMS[key](value)
    seed = seed if seed is not None else cfg_seed
    seed = PARAMS["seed"](seed if seed is not None else 0)
    if "seed" in params:
        params["seed"] = seed
    _cross_check(name, params)
    return ExperimentConfig(name, tuple(sorted(params.items())), seed)


def _cross_check(name, p):
    if name == "wcs":
        try:
            metric = metric_from_id(p["metric"] if not p["metric"].startswith("squashed-t11")
                                    else f"squashed-t11?t={p['t']}")
        except ArgumentError as exc:
            raise ValidationError(str(exc)) from None
        if metric.dim != 2 * p["k"] - 1:
            raise ValidationError(f"k = {p['k']} needs dim M = 2k - 1 = {2 * p['k'] - 1}, "
                                  f"but {p['metric']} has dimension {metric.dim}")
    if name in ("hs-curvature", "alpha") and p["modes"] * 2 > p["cutoff"]:
        raise ValidationError("modes must satisfy 2 * modes <= cutoff so brackets fit")
    if name == "hs-curvature" and not p["s"] > 0.5:
        raise ValidationError(f"s = {p['s']} violates precondition s > 1/2")
    if name == "hs-curvature" and abs(2 * p["s"] - round(2 * p["s"])) > 1e-12:
        raise ValidationError("s must be a half-integer so 2s is an integer order")


@dataclass
class ExperimentReport:
    """Outcome of one experiment; ``record()`` is the reproducible part."""

    experiment: str
    ident: str
    params: Dict[str, object]
    seed: int
    values: Dict[str, object]
    convergence: Dict[str, float]
    truncation_loss: float
    checks: List[Dict[str, object]]
    wall_clock: float = 0.0
    version: str = __version__

    @property
    def passed(self):
        return all(c["passed"] for c in self.checks)

    def record(self):
        return {"experiment": self.experiment, "id": self.ident, "params": self.params,
                "seed": self.seed, "values": self.values, "convergence": self.convergence,
                "truncation_loss": self.truncation_loss, "checks": self.checks,
                "passed": self.passed, "version": self.version}

    def to_json(self):
        return json.dumps(self.record(), sort_keys=True, allow_nan=True)

    def to_text(self):
        lines = [f"experiment  {self.ident}", f"version     {self.version}",
                 f"seed        {self.seed}", f"wall-clock  {self.wall_clock:.3f} s"]
        for k in sorted(self.values):
            lines.append(f"  {k:<24} {self.values[k]}")
        if self.convergence:
            lines.append("  convergence:")
            for level, v in self.convergence.items():
                lines.append(f"    {level:>6}  {v!r}")
        lines.append(f"  truncation loss  {self.truncation_loss!r}")
        for c in self.checks:
            lines.append(f"  [{'PASS' if c['passed'] else 'FAIL'}] {c['field']} "
                         f"expected {c['expected']!r} tol {c['tolerance']!r}")
        lines.append(f"result      {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines) + "\n"


def worker_count(flag=None):
    """Worker count from the flag, else $CHERNWEIL_WORKERS, else 1."""
    value = flag if flag is not None else os.environ.get(WORKERS_ENV, 1)
    return _int("workers", 1, 256)(value)


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, complex):
        return v.real
    return v


def run(config, workers=1):
    """Execute one validated config and return its report."""
    exp = EXPERIMENTS[config.experiment]
    start = time.perf_counter()
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            values, conv, loss, checks = exp.kernel(config.param_map, pool.map)
    else:
        values, conv, loss, checks = exp.kernel(config.param_map, map)
    elapsed = time.perf_counter() - start
    values = {k: _jsonable(v) for k, v in values.items()}
    check_rows = [{"field": c.field, "expected": c.expected, "tolerance": c.tolerance,
                   "mode": c.mode, "value": values[c.field], "passed": bool(c.evaluate(values))}
                  for c in checks]
    params = {k: v for k, v in config.params}
    return ExperimentReport(config.experiment, config.ident, params, config.seed, values,
                            {k: _jsonable(v) for k, v in conv.items()}, float(loss),
                            check_rows, elapsed)


def sweep(raw, axis, values, seed=None, workers=1):
    """Run one experiment for each value of ``axis``; returns the reports."""
    reports = []
    for v in values:
        cfg = make_config({**raw, axis: v}, seed)
        reports.append(run(cfg, workers))
    return reports


def emit_plot_data(reports, axis):
    """Tab-separated (axis, value, convergence levels...) table for a sweep.

    All reports must share the experiment and every parameter except ``axis``.
    """
    reports = list(reports)
    if not reports:
        raise ArgumentError("no reports to tabulate")
    first = reports[0]
    if axis not in first.params:
        raise ArgumentError(f"{axis!r} is not a parameter of {first.experiment!r}")
    base = {k: v for k, v in first.params.items() if k != axis}
    for r in reports[1:]:
        other = {k: v for k, v in r.params.items() if k != axis}
        if r.experiment != first.experiment or other != base or r.seed != first.seed:
            raise ArgumentError("reports differ in more than the sweep axis")
    levels = sorted({lvl for r in reports for lvl in r.convergence}, key=_level_key)
    header = [axis, "value"] + [f"conv_{lvl}" for lvl in levels]
    rows = ["\t".join(header)]
    for r in reports:
        cells = [_fmt(r.params[axis]), repr(r.values.get("value"))]
        cells += [repr(r.convergence[lvl]) if lvl in r.convergence else "" for lvl in levels]
        rows.append("\t".join(cells))
    return "\n".join(rows) + "\n"


def _level_key(level):
    try:
        return (0, float(level))
    except ValueError:
        return (1, level)


# ---------------------------------------------------------------------------
# golden regression

def load_golden(path):
    """Golden entries: JSON lines ``{"config": {...}, "fields": {name: [value, tol]}}``."""
    entries = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                entry = json.loads(line)
                entry["config"], entry["fields"]
            except (ValueError, KeyError, TypeError):
                raise ValidationError(f"{path}:{lineno}: malformed golden entry") from None
            entries.append(entry)
    return entries


def compare_golden(report, fields):
    """Per-field comparison rows ``(field, expected, actual, tol, passed)``."""
    rows = []
    for name, (expected, tol) in sorted(fields.items()):
        actual = report.values.get(name)
        if isinstance(expected, str) or actual is None:
            ok = actual == expected
        else:
            ok = abs(actual - expected) <= tol
        rows.append((name, expected, actual, tol, bool(ok)))
    return rows


def regress(entries, workers=1):
    """Run every golden entry; returns ``[(report, rows)]``."""
    out = []
    for entry in entries:
        report = run(make_config(entry["config"]), workers)
        out.append((report, compare_golden(report, entry["fields"])))
    return out
