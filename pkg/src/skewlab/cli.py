"""Batch command line: ``skewlab <command> [flags]``.

A run is described by an INI document with ``[system]``, ``[numerics]``
and ``[command]`` sections; command-line flags override its values. Each
run writes its CSV artifacts and a ``report.json`` into ``--out``.
"""

import argparse
import configparser
import io
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .errors import SkewLabError, ConfigInvalid
from ._io import write_csv, write_json, write_text

SCHEMA_VERSION = 1

SYSTEM_KEYS = {"driver": "rotation", "alpha": "golden", "family": "affine",
               "matrix": "2 1 1 1", "h": "zero", "matrices": "2 1 1 1; 1 1 1 2"}
NUMERICS_KEYS = {"mode": "auto", "mantissa_bits": "auto", "seed": "0"}
COMMANDS = {
    "simulate": {"x1": "0", "x2": "0", "omega": "0", "n": "100", "observable": "cos_x1",
                 "random": "false", "checkpoints": "auto"},
    "entropy": {"eps": "0.25", "nmin": "4", "nmax": "10", "grid": "auto", "omega": "0"},
    "deviation": {"alpha": "0", "delta": "0.3", "eps": "0.25", "nmin": "4", "nmax": "10",
                  "grid": "auto", "observable": "cos_x1", "omega": "0", "compare": "true"},
    "shadow": {"spec": "", "eps": "0.05", "c_lat": "4", "random": "0", "retries": "3"},
    "irregular": {"alpha0": "0", "alpha1": "1", "levels": "4", "eta": "0.2", "growth": "12",
                  "delta": "0.005", "observable": "cos_x1", "omega": "0",
                  "mantissa_cap": str(1 << 25)},
    "dense-variant": {"x": "0.2 0.7", "targets": "0.9 0.1", "target_grid": "0",
                      "states": "0", "eps": "0.05", "levels": "3", "observable": "cos_x1"},
    "lyapunov": {"word": "sturmian", "ns": "1000 10000", "symbol": "0", "omega": "0"},
}


# -- configuration -------------------------------------------------------------------

@dataclass
class RunConfig:
    """Raw string values of one run; ``validate`` checks and types them."""

    command: str
    system: dict = field(default_factory=dict)
    numerics: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigInvalid(f"unknown command {self.command!r}",
                                fields={"command.name": f"expected one of {sorted(COMMANDS)}"})
        bad = {}
        for section, given, allowed in (("system", self.system, SYSTEM_KEYS),
                                        ("numerics", self.numerics, NUMERICS_KEYS),
                                        ("command", self.params, COMMANDS[self.command])):
            for k in given:
                if k not in allowed:
                    bad[f"{section}.{k}"] = "unknown key"
        if bad:
            raise ConfigInvalid(f"unknown configuration keys: {sorted(bad)}", fields=bad)
        self.system = {k: str(v).strip() for k, v in self.system.items()}
        self.numerics = {k: str(v).strip() for k, v in self.numerics.items()}
        self.params = {k: str(v).strip() for k, v in self.params.items()}

    # values with defaults filled in
    def get(self, section, key):
        table = {"system": (self.system, SYSTEM_KEYS), "numerics": (self.numerics, NUMERICS_KEYS),
                 "command": (self.params, COMMANDS[self.command])}[section]
        return table[0].get(key, table[1][key])

    @classmethod
    def from_ini(cls, text):
        cp = configparser.ConfigParser(interpolation=None, delimiters=("=",))
        cp.optionxform = str
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigInvalid(f"cannot parse configuration: {exc}", fields={"file": str(exc)})
        unknown = [s for s in cp.sections() if s not in ("system", "numerics", "command")]
        if unknown:
            raise ConfigInvalid(f"unknown sections {unknown}",
                                fields={s: "unknown section" for s in unknown})
        cmd = dict(cp["command"]) if cp.has_section("command") else {}
        name = cmd.pop("name", None)
        if name is None:
            raise ConfigInvalid("missing command name", fields={"command.name": "required"})
        return cls(name, dict(cp["system"]) if cp.has_section("system") else {},
                   dict(cp["numerics"]) if cp.has_section("numerics") else {}, cmd)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_ini(fh.read())

    def to_ini(self):
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        cp["system"] = dict(self.system)
        cp["numerics"] = dict(self.numerics)
        cp["command"] = {"name": self.command, **self.params}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    def resolved(self):
        """Every key with its effective value."""
        return {"command": self.command,
                "system": {k: self.get("system", k) for k in SYSTEM_KEYS},
                "numerics": {k: self.get("numerics", k) for k in NUMERICS_KEYS},
                "params": {k: self.get("command", k) for k in COMMANDS[self.command]}}

    def validate(self):
        """Typed view of the configuration; raises ConfigInvalid naming every bad field."""
        errors = {}
        typed = {}

        def take(section, key, conv):
            raw = self.get(section, key)
            try:
                typed[f"{section}.{key}"] = conv(raw)
            except (ValueError, TypeError, ArithmeticError) as exc:
                errors[f"{section}.{key}"] = f"invalid value {raw!r}: {exc}"
            except ConfigInvalid as exc:
                errors[f"{section}.{key}"] = str(exc)

        take("system", "driver", lambda v: _choice(v, ("rotation", "sturmian")))
        take("system", "alpha", _alpha)
        take("system", "family", lambda v: _choice(v, ("affine", "cocycle")))
        take("system", "matrix", _matrix)
        take("system", "h", lambda v: _choice(v, ("zero", "angle")))
        take("system", "matrices", lambda v: [_matrix(p) for p in v.split(";")])
        take("numerics", "mode", lambda v: _choice(v, ("auto", "double", "bigfloat")))
        take("numerics", "mantissa_bits", lambda v: "auto" if v == "auto" else _int(v, 53))
        take("numerics", "seed", lambda v: _int(v, 0))
        for key in COMMANDS[self.command]:
            take("command", key, PARAM_TYPES.get((self.command, key), str))
        if errors:
            raise ConfigInvalid(f"invalid configuration: {sorted(errors)}", fields=errors)
        return typed


def _choice(v, options):
    if v not in options:
        raise ValueError(f"expected one of {options}")
    return v


def _int(v, lo=None, hi=None):
    x = int(v)
    if lo is not None and x < lo or hi is not None and x > hi:
        raise ValueError(f"out of range [{lo}, {hi}]")
    return x


def _float(v, lo=None, hi=None):
    x = float(v)
    if not math.isfinite(x) or lo is not None and x < lo or hi is not None and x > hi:
        raise ValueError(f"out of range [{lo}, {hi}]")
    return x


def _pos(v):
    x = float(v)
    if not x > 0 or not math.isfinite(x):
        raise ValueError("must be positive")
    return x


def _bool(v):
    t = v.lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected true or false")


def _alpha(v):
    from .driving import RotationNumber
    return RotationNumber(v)


def _matrix(v):
    v = v.strip()
    if v == "cat":
        return ((2, 1), (1, 1))
    parts = v.replace(",", " ").split()
    if len(parts) != 4:
        raise ValueError("expected four integers 'a b c d'")
    a, b, c, d = (int(p) for p in parts)
    return ((a, b), (c, d))


def _floats(v):
    return [float(p) for p in v.replace(",", " ").split()]


def _points(v):
    out = []
    for p in v.split(";"):
        xy = _floats(p)
        if len(xy) != 2:
            raise ValueError("points are 'x1 x2' separated by ';'")
        out.append(tuple(xy))
    return out


def _ints(v):
    xs = [int(p) for p in v.replace(",", " ").split()]
    if not xs or min(xs) < 1:
        raise ValueError("need positive integers")
    return xs


def _observable(v):
    from .orbit import Observable
    return Observable.parse(v)


def _grid(v):
    return "auto" if v == "auto" else _int(v, 1)


def _checkpoints(v):
    return "auto" if v == "auto" else _ints(v)


def _word(v):
    return _choice(v, ("sturmian", "constant"))


PARAM_TYPES = {
    ("simulate", "x1"): str, ("simulate", "x2"): str, ("simulate", "omega"): float,
    ("simulate", "n"): lambda v: _int(v, 1), ("simulate", "observable"): _observable,
    ("simulate", "random"): _bool, ("simulate", "checkpoints"): _checkpoints,
    ("entropy", "eps"): _pos, ("entropy", "nmin"): lambda v: _int(v, 1),
    ("entropy", "nmax"): lambda v: _int(v, 1), ("entropy", "grid"): _grid,
    ("entropy", "omega"): float,
    ("deviation", "alpha"): float, ("deviation", "delta"): _pos, ("deviation", "eps"): _pos,
    ("deviation", "nmin"): lambda v: _int(v, 1), ("deviation", "nmax"): lambda v: _int(v, 1),
    ("deviation", "grid"): _grid, ("deviation", "observable"): _observable,
    ("deviation", "omega"): float, ("deviation", "compare"): _bool,
    ("shadow", "spec"): str, ("shadow", "eps"): lambda v: _float(v, 1e-12, 0.5),
    ("shadow", "c_lat"): _pos, ("shadow", "random"): lambda v: _int(v, 0),
    ("shadow", "retries"): lambda v: _int(v, 0),
    ("irregular", "alpha0"): float, ("irregular", "alpha1"): float,
    ("irregular", "levels"): lambda v: _int(v), ("irregular", "eta"): _pos,
    ("irregular", "growth"): _pos, ("irregular", "delta"): _pos,
    ("irregular", "observable"): _observable, ("irregular", "omega"): float,
    ("irregular", "mantissa_cap"): lambda v: _int(v, 64),
    ("dense-variant", "x"): lambda v: _points(v)[0], ("dense-variant", "targets"): _points,
    ("dense-variant", "target_grid"): lambda v: _int(v, 0),
    ("dense-variant", "states"): _floats, ("dense-variant", "eps"): _pos,
    ("dense-variant", "levels"): lambda v: _int(v), ("dense-variant", "observable"): _observable,
    ("lyapunov", "word"): _word, ("lyapunov", "ns"): _ints,
    ("lyapunov", "symbol"): lambda v: _int(v, 0), ("lyapunov", "omega"): lambda v: _int(v, 0),
}


# -- report ----------------------------------------------------------------------------

@dataclass
class Report:
    command: str
    config: dict
    metrics: dict = field(default_factory=dict)
    artifacts: list = field(default_factory=list)
    duration: float = 0.0
    status: str = "ok"
    error: dict = None
    numerics: dict = field(default_factory=dict)

    @property
    def exit_status(self):
        return 0 if self.error is None else int(self.error.get("exit_status", 1))

    def to_json(self):
        out = {"schema_version": SCHEMA_VERSION, "version": __version__,
               "command": self.command, "config": self.config, "metrics": self.metrics,
               "artifacts": self.artifacts, "duration_s": self.duration,
               "status": self.status, "numerics": self.numerics}
        if self.error is not None:
            out["error"] = self.error
        return out


# -- commands --------------------------------------------------------------------------

def build_system(typed, command):
    from .driving import make_driver
    from .fiber import AffineFiberFamily, PositiveCocycleFamily
    from .orbit import SkewSystem
    family = typed["system.family"]
    driver = typed["system.driver"]
    if command == "lyapunov" and family == "affine":
        family = "cocycle"
    if family == "cocycle":
        mats = typed["system.matrices"] if typed["system.family"] == "cocycle" \
            else [typed["system.matrix"]]
        fam = PositiveCocycleFamily(mats)
        if driver != "sturmian":
            driver = "sturmian"
    else:
        fam = AffineFiberFamily(typed["system.matrix"], typed["system.h"])
    return SkewSystem(make_driver(driver, typed["system.alpha"]), fam)


def _context(typed, system, depth, needs_exact=False):
    from .numerics import NumericsContext, DOUBLE
    from .errors import PrecisionExhausted
    mode, bits = typed["numerics.mode"], typed["numerics.mantissa_bits"]
    if mode == "double" and needs_exact:
        raise PrecisionExhausted("this command needs BIGFLOAT numerics", requested=depth)
    if mode == "double" or (mode == "auto" and not needs_exact):
        return DOUBLE
    if bits == "auto":
        return NumericsContext.for_depth(depth, system.lambda_u)
    return NumericsContext.bigfloat(bits)


def _rate_rows(ns, counts):
    return [(n, c, repr(math.log(c)) if c > 0 else "-inf") for n, c in zip(ns, counts)]


def cmd_simulate(typed, system, out, artifacts, metrics):
    from .orbit import birkhoff_trace, default_checkpoints, iterate
    from .fixed import FixedPoint
    p = typed
    n = p["command.n"]
    ctx = _context(typed, system, n)
    if p["command.random"]:
        rng = np.random.default_rng(p["numerics.seed"])
        x = tuple(rng.random(2).tolist())
    elif ctx.exact:
        # decimal strings are read as exact rationals
        x = FixedPoint.from_values(p["command.x1"], p["command.x2"], ctx.mantissa_bits)
    else:
        x = (float(p["command.x1"]), float(p["command.x2"]))
    omega = _omega(system, p["command.omega"])
    cps = default_checkpoints(n) if p["command.checkpoints"] == "auto" else p["command.checkpoints"]
    tr = birkhoff_trace(system, omega, x, p["command.observable"], cps, ctx)
    if ctx.exact:
        from .orbit import iterate_fixed
        metrics["simulate.final_exact"] = list(iterate_fixed(system, omega, x, n, ctx)
                                               .decimal_strings())
    path = os.path.join(out, "trace.csv")
    tr.to_csv(path)
    artifacts.append(path)
    end = iterate(system, omega, x, n, ctx)
    metrics["simulate.final_x1"] = float(end.x1)
    metrics["simulate.final_x2"] = float(end.x2)
    metrics["simulate.average"] = float(tr.averages[-1])
    metrics["simulate.n"] = n
    return ctx


def _omega(system, value):
    return int(value) if system.driver.kind == "sturmian" else float(value)


def _grid_arg(grid):
    if grid == "auto":
        return None, "auto"
    return 1.0 / grid, "square"


def cmd_entropy(typed, system, out, artifacts, metrics):
    from .entropy import max_separated, entropy_rate
    p = typed
    ns = list(range(p["command.nmin"], p["command.nmax"] + 1))
    omega = _omega(system, p["command.omega"])
    res, layout = _grid_arg(p["command.grid"])
    counts = [len(max_separated(system, omega, n, p["command.eps"], res, layout=layout))
              for n in ns]
    fit = entropy_rate(ns, counts)
    path = os.path.join(out, "entropy.csv")
    write_csv(path, ["n", "count", "log_count"], _rate_rows(ns, counts))
    artifacts.append(path)
    metrics.update({"entropy.slope": fit.slope, "entropy.stderr": fit.stderr,
                    "entropy.counts": counts, "entropy.ns": ns,
                    "entropy.target": math.log(system.lambda_u) if system.affine else None})


def cmd_deviation(typed, system, out, artifacts, metrics):
    from .entropy import max_separated, deviation_count, entropy_rate, DeviationQuery
    p = typed
    ns = list(range(p["command.nmin"], p["command.nmax"] + 1))
    omega = _omega(system, p["command.omega"])
    res, layout = _grid_arg(p["command.grid"])
    phi = p["command.observable"]
    counts = []
    for n in ns:
        q = DeviationQuery(p["command.alpha"], p["command.delta"], n, p["command.eps"], omega)
        counts.append(len(deviation_count(system, q, phi, res, layout=layout)))
    if min(counts) == 0:
        slope, stderr = float("nan"), float("nan")
    else:
        fit = entropy_rate(ns, counts, allow_degenerate=True)
        slope, stderr = fit.slope, fit.stderr
    rows = _rate_rows(ns, counts)
    metrics.update({"deviation.slope": slope, "deviation.stderr": stderr,
                    "deviation.counts": counts, "deviation.ns": ns})
    if p["command.compare"]:
        full = [len(max_separated(system, omega, n, p["command.eps"], res, layout=layout))
                for n in ns]
        metrics["deviation.full_slope"] = entropy_rate(ns, full).slope
        metrics["deviation.full_counts"] = full
        metrics["deviation.slope_gap"] = metrics["deviation.full_slope"] - slope
    path = os.path.join(out, "deviation.csv")
    write_csv(path, ["n", "count", "log_count"], rows)
    artifacts.append(path)


def cmd_shadow(typed, system, out, artifacts, metrics):
    from .shadow import Specification, shadow_specification, random_specification
    from .numerics import NumericsContext
    from .errors import LatticeSearchFailed
    p = typed
    eps, c_lat = p["command.eps"], p["command.c_lat"]
    if p["command.random"]:
        rng = np.random.default_rng(p["numerics.seed"])
        first = healed = 0
        rows, worst = [], 0.0
        for i in range(p["command.random"]):
            spec = random_specification(rng, system, eps, c_lat)
            ctx = _context(typed, system, spec.horizon, needs_exact=True)
            ok0 = True
            try:
                res = shadow_specification(system, spec, eps, ctx, c_lat, retries=0)
            except LatticeSearchFailed:
                ok0 = False
                res = None
            if not ok0:
                try:
                    res = shadow_specification(system, spec, eps, ctx, c_lat,
                                               retries=p["command.retries"])
                except LatticeSearchFailed:
                    res = None
            first += ok0
            healed += res is not None
            dev = res.max_deviation if res is not None else float("nan")
            if res is not None:
                worst = max(worst, dev)
            rows.append((i, len(spec.intervals), spec.horizon, int(ok0), int(res is not None),
                         repr(dev)))
        n = p["command.random"]
        path = os.path.join(out, "shadow_batch.csv")
        write_csv(path, ["index", "blocks", "horizon", "first_try", "after_retries",
                         "max_deviation"], rows)
        artifacts.append(path)
        metrics.update({"shadow.success_rate": first / n, "shadow.success_rate_healed": healed / n,
                        "shadow.max_deviation": worst, "shadow.count": n})
        return
    if not p["command.spec"]:
        raise ConfigInvalid("shadow needs a specification file or random > 0",
                            fields={"command.spec": "required when random = 0"})
    try:
        with open(p["command.spec"]) as fh:
            spec = Specification.from_json(fh.read())
    except OSError as exc:
        raise ConfigInvalid(f"cannot read specification: {exc}",
                            fields={"command.spec": str(exc)})
    ctx = _context(typed, system, spec.horizon, needs_exact=True)
    res = shadow_specification(system, spec, eps, ctx, c_lat, retries=p["command.retries"])
    path = os.path.join(out, "shadow.json")
    write_json(path, {"point": list(res.point.decimal_strings()),
                      "block_deviations": res.block_deviations, "block_bounds": res.block_bounds,
                      "budgets": res.budgets, "retries": res.retries,
                      "gluings": [{"s": g.s, "r": g.r, "lattice": list(g.lattice), "gap": g.gap,
                                   "radius": g.radius} for g in res.gluings]})
    artifacts.append(path)
    metrics.update({"shadow.max_deviation": res.max_deviation, "shadow.verified": res.verified,
                    "shadow.retries": res.retries, "shadow.x1": res.point.decimal_strings()[0],
                    "shadow.x2": res.point.decimal_strings()[1]})
    return ctx


def cmd_irregular(typed, system, out, artifacts, metrics):
    from .moran import build_schedule, construct_irregular
    from .numerics import NumericsContext
    p = typed
    if not system.affine:
        raise ConfigInvalid("irregular needs an affine family", fields={"system.family": "affine"})
    sched = build_schedule(p["command.eta"], p["command.levels"], system.matrix.int_matrix,
                           p["command.growth"], delta=p["command.delta"],
                           mantissa_cap=p["command.mantissa_cap"])
    bits = typed["numerics.mantissa_bits"]
    ctx = NumericsContext.bigfloat(max(sched.mantissa_bits, bits if bits != "auto" else 0))
    if typed["numerics.mode"] == "double":
        from .errors import PrecisionExhausted
        raise PrecisionExhausted("irregular needs BIGFLOAT numerics")
    cert = construct_irregular(system, _omega(system, p["command.omega"]),
                               p["command.observable"], p["command.alpha0"],
                               p["command.alpha1"], sched, ctx)
    path = os.path.join(out, "certificate.json")
    write_json(path, cert.to_json())
    artifacts.append(path)
    path = os.path.join(out, "trace.csv")
    cert.trace.to_csv(path)
    artifacts.append(path)
    metrics.update({"irregular.max_deviation": max(cert.deviations),
                    "irregular.deviations": cert.deviations,
                    "irregular.tolerances": cert.tolerances,
                    "irregular.min_level_gap": min(cert.level_gaps),
                    "irregular.certified": cert.certified, "irregular.horizon": sched.horizon,
                    "irregular.max_nesting": max(cert.nesting) if cert.nesting else 0.0})
    return ctx


def cmd_dense(typed, system, out, artifacts, metrics):
    from .moran import construct_dense_variant
    from .fiber import TorusPoint
    p = typed
    G = p["command.target_grid"]
    if G:
        g = (np.arange(G) + 0.5) / G
        targets = [(float(a), float(b)) for a in g for b in g]
    else:
        targets = p["command.targets"]
    x = TorusPoint(*p["command.x"])
    rows, worst_d, worst_a = [], 0.0, 0.0
    for om in p["command.states"]:
        omega = _omega(system, om)
        for t in targets:
            r = construct_dense_variant(system, omega, x, TorusPoint(*t), p["command.eps"],
                                        p["command.levels"], p["command.observable"])
            worst_d, worst_a = max(worst_d, r.distance), max(worst_a, r.average_gap)
            z1, z2 = r.exact_point.decimal_strings(20)
            rows.append((repr(float(om)), repr(t[0]), repr(t[1]), z1, z2, repr(r.distance),
                         repr(r.average_gap), repr(r.bound)))
    path = os.path.join(out, "dense_variant.csv")
    write_csv(path, ["omega", "target_x1", "target_x2", "z_x1", "z_x2", "distance",
                     "average_gap", "bound"], rows)
    artifacts.append(path)
    metrics.update({"dense.max_distance": worst_d, "dense.max_average_gap": worst_a,
                    "dense.cells": len(rows)})


def cmd_lyapunov(typed, system, out, artifacts, metrics):
    from .entropy import lyapunov_exponent
    p = typed
    ns = p["command.ns"]
    fam = system.family
    if p["command.word"] == "constant":
        if p["command.symbol"] >= len(fam.matrices):
            raise ConfigInvalid("symbol out of range", fields={"command.symbol": "no such matrix"})
        word = np.full(max(ns), p["command.symbol"], dtype=int)
    else:
        word = system.symbols(p["command.omega"], max(ns))
    est = [lyapunov_exponent(fam, word, n) for n in ns]
    path = os.path.join(out, "lyapunov.csv")
    write_csv(path, ["n", "estimate"], [(n, repr(e)) for n, e in zip(ns, est)])
    artifacts.append(path)
    metrics.update({"lyapunov.estimate": est[-1], "lyapunov.estimates": est, "lyapunov.ns": ns,
                    "lyapunov.difference": abs(est[-1] - est[-2]) if len(est) > 1 else 0.0})


DISPATCH = {"simulate": cmd_simulate, "entropy": cmd_entropy, "deviation": cmd_deviation,
            "shadow": cmd_shadow, "irregular": cmd_irregular, "dense-variant": cmd_dense,
            "lyapunov": cmd_lyapunov}


def run(config, out="skewlab-out"):
    """Validate ``config``, run its command, and write artifacts plus ``report.json``.

    Errors from the library are caught and recorded in the report with
    their machine-readable code; the report is returned either way.
    """
    start = time.perf_counter()
    report = Report(config.command, config.resolved())
    os.makedirs(out, exist_ok=True)
    try:
        typed = config.validate()
        system = build_system(typed, config.command)
        ctx = DISPATCH[config.command](typed, system, out, report.artifacts, report.metrics)
        if ctx is not None:
            report.numerics = ctx.metadata()
    except SkewLabError as exc:
        report.status = "error"
        report.error = {"code": exc.code, "name": type(exc).__name__, "message": str(exc),
                        "exit_status": exc.exit_status, "details": _jsonable(exc.details)}
    report.duration = time.perf_counter() - start
    path = os.path.join(out, "report.json")
    report.artifacts.append(path)
    write_json(path, _jsonable(report.to_json()))
    return report


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (str, int, float, bool)) or obj is None:
        if isinstance(obj, float) and not math.isfinite(obj):
            return repr(obj)
        return obj
    return repr(obj)


# -- argument parsing ------------------------------------------------------------------

SYSTEM_FLAGS = ("driver", "alpha", "family", "matrix", "h", "matrices")
NUMERICS_FLAGS = ("mode", "mantissa_bits", "seed")


def _parser():
    ap = argparse.ArgumentParser(prog="skewlab", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"skewlab {__version__}")
    ap.add_argument("--config", help="INI file with [system], [numerics], [command] sections")
    ap.add_argument("--out", default="skewlab-out", help="artifact directory")
    for k in SYSTEM_FLAGS + NUMERICS_FLAGS:
        ap.add_argument(f"--{k.replace('_', '-')}", dest=k, default=None)
    sub = ap.add_subparsers(dest="command")
    for name, keys in COMMANDS.items():
        sp = sub.add_parser(name)
        for k in keys:
            sp.add_argument(f"--{k.replace('_', '-')}", dest=f"param_{k}", default=None)
    return ap


def config_from_args(args):
    if args.config:
        base = RunConfig.load(args.config)
        if args.command and args.command != base.command:
            base = RunConfig(args.command, base.system, base.numerics, {})
    else:
        if not args.command:
            raise ConfigInvalid("no command given", fields={"command.name": "required"})
        base = RunConfig(args.command)
    system, numerics, params = dict(base.system), dict(base.numerics), dict(base.params)
    for k in SYSTEM_FLAGS:
        if getattr(args, k) is not None:
            system[k] = getattr(args, k)
    for k in NUMERICS_FLAGS:
        if getattr(args, k) is not None:
            numerics[k] = getattr(args, k)
    for k in COMMANDS[base.command]:
        v = getattr(args, f"param_{k}", None)
        if v is not None:
            params[k] = v
    return RunConfig(base.command, system, numerics, params)


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        config = config_from_args(args)
    except SkewLabError as exc:
        print(json.dumps({"schema_version": SCHEMA_VERSION, "status": "error",
                          "error": {"code": exc.code, "name": type(exc).__name__,
                                    "message": str(exc), "details": _jsonable(exc.details)}},
                         indent=2), file=sys.stderr)
        return exc.exit_status
    report = run(config, args.out)
    summary = {"command": report.command, "status": report.status,
               "metrics": {k: v for k, v in report.metrics.items()
                           if not isinstance(v, (list, tuple))},
               "report": os.path.join(args.out, "report.json")}
    if report.error is not None:
        summary["error"] = {k: report.error[k] for k in ("code", "name", "message")}
    print(json.dumps(_jsonable(summary), indent=2))
    return report.exit_status


if __name__ == "__main__":
    sys.exit(main())
