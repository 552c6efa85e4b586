"""Command line front end: JSON run configs in, deterministic CSV files out.

Exit codes: 0 success, 2 configuration error, 3 numerical-quality failure,
4 internal error.
"""
from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__, direct, inverse, sgordon, snode
from .core import (
    ConditioningError,
    ConvergenceError,
    DomainError,
    GridSpec,
    PoleSet,
    PotentialField,
    QualityError,
    ValidationError,
    WeylError,
)

log = logging.getLogger("weylinverse")

MODES = ("direct", "inverse", "roundtrip", "weyl-set", "sg", "selftest")
EXIT_OK, EXIT_CONFIG, EXIT_QUALITY, EXIT_INTERNAL = 0, 2, 3, 4
DIGITS = 17

DEFAULTS = {
    "mode": "selftest",
    "poles": [{"d": 1.0, "b": 1}, {"d": -1.0, "b": 1}],
    "grid": {"l": 1.0, "n": 256},
    "spectral": {"eta": -4.0, "zeta_max": None, "zeta_count": 1024, "M": None},
    "tolerances": {"identity": 1e-3, "roundtrip": 5e-2, "ode": 1e-6},
    "potential": None,
    "sg": {"solution": "kink", "speed": 0.5, "times": [0.0], "horizon": 20.0,
           "samples": 2000, "zeta_max": None, "zeta_count": None},
    "paths": {"input": None, "output": "out"},
}


class ConfigError(ValidationError):
    """Invalid run configuration; the message names the offending field."""


class ToleranceError(QualityError):
    """A pipeline finished but a diagnostic missed its configured tolerance."""


# ------------------------------------------------------------------ config

def _merge(base: dict, over: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in over.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"{where}: unknown field")
        if isinstance(base[key], dict) and value is not None:
            if not isinstance(value, dict):
                raise ConfigError(f"{where}: expected an object")
            out[key] = _merge(base[key], value, where)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _number(value, where: str, positive: bool = False, integer: bool = False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    if not np.isfinite(value):
        raise ConfigError(f"{where}: must be finite")
    if integer and int(value) != value:
        raise ConfigError(f"{where}: expected an integer, got {value!r}")
    if positive and value <= 0:
        raise ConfigError(f"{where}: must be positive, got {value!r}")
    return int(value) if integer else float(value)


def _series(spec, where: str):
    """``{"poly": [c0, c1, ...], "trig": [[amp, freq, phase], ...]}`` as a callable."""
    if isinstance(spec, (int, float)) and not isinstance(spec, bool):
        spec = {"poly": [spec]}
    if not isinstance(spec, dict) or set(spec) - {"poly", "trig"}:
        raise ConfigError(f"{where}: expected {{'poly': [...], 'trig': [[amp, freq, phase], ...]}}")
    poly = [_number(c, f"{where}.poly[{i}]") for i, c in enumerate(spec.get("poly", []))]
    trig = []
    for i, term in enumerate(spec.get("trig", [])):
        if not isinstance(term, (list, tuple)) or len(term) != 3:
            raise ConfigError(f"{where}.trig[{i}]: expected [amp, freq, phase]")
        trig.append(tuple(_number(v, f"{where}.trig[{i}]") for v in term))

    def fn(x):
        x = np.asarray(x, dtype=float)
        out = np.polynomial.polynomial.polyval(x, poly) if poly else np.zeros_like(x)
        for amp, freq, phase in trig:
            out = out + amp * np.sin(freq * x + phase)
        return out

    return fn


@dataclass(frozen=True)
class RunConfig:
    mode: str
    poles: PoleSet
    grid: GridSpec
    eta: float
    zeta_max: float | None
    zeta_count: int
    M: float | None
    tolerances: dict
    potential: dict | None
    sg: dict
    input: Path | None
    output: Path
    raw: dict = field(compare=False, repr=False)

    @classmethod
    def from_dict(cls, doc: dict, base_dir: Path | None = None) -> "RunConfig":
        if not isinstance(doc, dict):
            raise ConfigError("config: expected a JSON object")
        raw = _merge(DEFAULTS, doc)
        mode = raw["mode"]
        if mode not in MODES:
            raise ConfigError(f"mode: must be one of {', '.join(MODES)}, got {mode!r}")
        if not isinstance(raw["poles"], list) or not raw["poles"]:
            raise ConfigError("poles: expected a non-empty list of {d, b}")
        d, b = [], []
        for i, p in enumerate(raw["poles"]):
            if not isinstance(p, dict) or set(p) != {"d", "b"}:
                raise ConfigError(f"poles[{i}]: expected an object with fields d and b")
            d.append(_number(p["d"], f"poles[{i}].d"))
            b.append(_number(p["b"], f"poles[{i}].b", integer=True))
        try:
            poles = PoleSet(tuple(d), tuple(b))
        except ValidationError as exc:
            raise ConfigError(f"poles: {exc}") from None
        g = raw["grid"]
        l = _number(g["l"], "grid.l", positive=True)
        n = _number(g["n"], "grid.n", positive=True, integer=True)
        if n < 2:
            raise ConfigError("grid.n: must be at least 2")
        sp = raw["spectral"]
        eta = _number(sp["eta"], "spectral.eta")
        if eta >= 0:
            raise ConfigError("spectral.eta: must be negative")
        zmax = None if sp["zeta_max"] is None else _number(sp["zeta_max"], "spectral.zeta_max", positive=True)
        zcount = _number(sp["zeta_count"], "spectral.zeta_count", positive=True, integer=True)
        if zcount < 16:
            raise ConfigError("spectral.zeta_count: need at least 16 samples")
        M = None if sp["M"] is None else _number(sp["M"], "spectral.M", positive=True)
        tol = {k: _number(v, f"tolerances.{k}", positive=True) for k, v in raw["tolerances"].items()}
        pot = raw["potential"]
        if pot is not None:
            _potential_functions(pot, poles.m)
        sg = raw["sg"]
        if sg["solution"] not in ("kink", "pi"):
            raise ConfigError(f"sg.solution: must be 'kink' or 'pi', got {sg['solution']!r}")
        if not isinstance(sg["times"], list) or not sg["times"]:
            raise ConfigError("sg.times: expected a non-empty list")
        for i, t in enumerate(sg["times"]):
            _number(t, f"sg.times[{i}]")
        _number(sg["speed"], "sg.speed")
        _number(sg["horizon"], "sg.horizon", positive=True)
        _number(sg["samples"], "sg.samples", positive=True, integer=True)
        if sg["zeta_max"] is not None:
            _number(sg["zeta_max"], "sg.zeta_max", positive=True)
        if sg["zeta_count"] is not None:
            _number(sg["zeta_count"], "sg.zeta_count", positive=True, integer=True)
        base = base_dir or Path.cwd()
        paths = raw["paths"]
        inp = None
        if paths["input"] is not None:
            inp = Path(paths["input"])
            inp = inp if inp.is_absolute() else base / inp
            if not inp.is_file():
                raise ConfigError(f"paths.input: no such file {inp}")
        if not isinstance(paths["output"], str) or not paths["output"]:
            raise ConfigError("paths.output: expected a directory name")
        out = Path(paths["output"])
        return cls(mode, poles, GridSpec(l, n), eta, zmax, zcount, M, tol, pot, sg, inp, out, raw)

    def digest(self) -> str:
        """Hash of the effective config; the output location does not enter it."""
        doc = copy.deepcopy(self.raw)
        doc["paths"].pop("output", None)
        text = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


def _potential_functions(spec, m: int):
    if not isinstance(spec, dict) or set(spec) != {"rows"}:
        raise ConfigError("potential: expected {'rows': [{'theta': ..., 'chi': ...}, ...]}")
    rows = spec["rows"]
    if not isinstance(rows, list) or len(rows) != m:
        raise ConfigError(f"potential.rows: expected {m} entries, one per pole")
    fns = []
    for k, r in enumerate(rows):
        if not isinstance(r, dict) or set(r) - {"theta", "chi"}:
            raise ConfigError(f"potential.rows[{k}]: expected fields theta and chi")
        fns.append((_series(r.get("theta", 0.0), f"potential.rows[{k}].theta"),
                    _series(r.get("chi", 0.0), f"potential.rows[{k}].chi")))
    return fns


def rows_from_angles(spec, m: int):
    """Row builder ``x -> [cos theta, sin theta exp(i chi)]`` for every pole."""
    fns = _potential_functions(spec, m)

    def build(x):
        out = []
        for theta, chi in fns:
            th = theta(x)
            out.append(np.stack([np.cos(th), np.sin(th) * np.exp(1j * chi(x))], axis=-1))
        return np.stack(out)

    return build


def load_config(path: str | Path | None, preset: str | None = None) -> RunConfig:
    if preset is not None:
        try:
            text = resources.files("weylinverse.presets").joinpath(f"{preset}.json").read_text()
        except FileNotFoundError:
            raise ConfigError(f"preset: unknown preset {preset!r}; try one of {', '.join(list_presets())}") from None
        base = Path.cwd()
    elif path is not None:
        p = Path(path)
        try:
            text = p.read_text()
        except OSError as exc:
            raise ConfigError(f"config: cannot read {p}: {exc.strerror}") from None
        base = p.resolve().parent
    else:
        return RunConfig.from_dict({})
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return RunConfig.from_dict(doc, base)


def list_presets() -> list[str]:
    root = resources.files("weylinverse.presets")
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


# ---------------------------------------------------------------- emission

def fmt(v) -> str:
    return f"{float(v):.{DIGITS - 1}e}"


def write_table(path: Path, names, data, meta: dict):
    """CSV with a ``#`` metadata line, a header row and 17-digit values."""
    path.parent.mkdir(parents=True, exist_ok=True)
    data = np.atleast_2d(np.asarray(data, dtype=float))
    with open(path, "w", newline="") as fh:
        fh.write("# " + " ".join(f"{k}={v}" for k, v in meta.items()) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in data:
            w.writerow([fmt(v) for v in row])


def write_keyvalue(path: Path, values: dict, meta: dict):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write("# " + " ".join(f"{k}={v}" for k, v in meta.items()) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["key", "value"])
        for key in sorted(values):
            v = values[key]
            if isinstance(v, (bool, np.bool_)):
                w.writerow([key, str(bool(v)).lower()])
            elif isinstance(v, (int, float, np.integer, np.floating)):
                w.writerow([key, fmt(v)])
            else:
                w.writerow([key, v])


def read_table(path: Path) -> tuple[dict, list[str], np.ndarray]:
    """Inverse of :func:`write_table`: metadata, column names, data."""
    with open(path, newline="") as fh:
        first = fh.readline()
        meta = {}
        if first.startswith("#"):
            for item in first[1:].split():
                if "=" in item:
                    k, v = item.split("=", 1)
                    meta[k] = v
            header = next(csv.reader([fh.readline()]))
        else:
            header = next(csv.reader([first]))
        rows = [list(map(float, r)) for r in csv.reader(fh) if r]
    return meta, header, np.array(rows, dtype=float)


def beta_names(m: int) -> list[str]:
    names = ["x"]
    for k in range(m):
        for c in range(2):
            names += [f"re_beta{k + 1}{c + 1}", f"im_beta{k + 1}{c + 1}"]
    return names


def beta_columns(pot: PotentialField) -> tuple[list[str], np.ndarray]:
    cols = [pot.x]
    for k in range(pot.m):
        for c in range(2):
            cols += [pot.rows[k, :, c].real, pot.rows[k, :, c].imag]
    return beta_names(pot.m), np.column_stack(cols)


def potential_from_table(path: Path, m: int) -> PotentialField:
    _, names, data = read_table(path)
    want = beta_names(m)
    if names != want:
        raise ConfigError(f"paths.input: expected columns {want}, got {names}")
    x = data[:, 0]
    n = x.size - 1
    grid = GridSpec(float(x[-1]), n)
    if x[0] != 0 or not np.allclose(x, grid.x, rtol=0, atol=1e-12 * max(1.0, x[-1])):
        raise ConfigError("paths.input: x column must be a uniform grid starting at 0")
    vals = data[:, 1::2] + 1j * data[:, 2::2]
    rows = vals.reshape(n + 1, m, 2).transpose(1, 0, 2)
    return PotentialField(grid, rows)


def weyl_from_table(path: Path, cfg: RunConfig) -> direct.WeylData:
    meta, names, data = read_table(path)
    m = cfg.poles.m
    if len(names) != 1 + 2 * m or names[0] != "zeta":
        raise ConfigError(f"paths.input: expected zeta plus {2 * m} phi columns")
    phi = (data[:, 1::2] + 1j * data[:, 2::2]).T
    M = cfg.M if cfg.M is not None else float(meta.get("M", "nan"))
    l = float(meta.get("l", cfg.grid.l))
    if not np.isfinite(M):
        raise ConfigError("spectral.M: needed when the Weyl table carries no M metadata")
    return direct.WeylData(data[:, 0], cfg.eta, phi, M, l, direct.truncation_bound(cfg.eta, M, l))


# --------------------------------------------------------------- pipelines

def _potential(cfg: RunConfig) -> PotentialField:
    if cfg.input is not None:
        pot = potential_from_table(cfg.input, cfg.poles.m)
        if pot.grid.n != cfg.grid.n or pot.grid.l != cfg.grid.l:
            log.info("input grid (l=%g, n=%d) overrides the config grid", pot.grid.l, pot.grid.n)
        return pot
    if cfg.potential is None:
        raise ConfigError("potential: required for this mode (or give paths.input)")
    return PotentialField.from_function(cfg.grid, rows_from_angles(cfg.potential, cfg.poles.m))


def _zeta(cfg: RunConfig, M: float) -> np.ndarray:
    return direct.default_zeta(M, cfg.zeta_count, cfg.zeta_max)


def _weyl(cfg: RunConfig, pot: PotentialField, workers: int) -> direct.WeylData:
    M = cfg.M if cfg.M is not None else direct.bound_M(pot, cfg.poles)
    return direct.sample_weyl_function(pot, cfg.poles, cfg.eta, zeta=_zeta(cfg, M), M=M,
                                       workers=workers)


def _weyl_meta(wd: direct.WeylData) -> dict:
    return {"eta": fmt(wd.eta), "M": fmt(wd.M), "l": fmt(wd.l)}


def _report_values(rep: inverse.ReconstructionReport) -> dict:
    # timings vary run to run; they go to the log, never to disk
    return {k: v for k, v in rep.to_dict().items() if not k.startswith("seconds_")}


def _check(rep: inverse.ReconstructionReport, cfg: RunConfig, values: dict):
    values["identity_ok"] = rep.identity_residual <= cfg.tolerances["identity"]
    if rep.projector_error is not None:
        values["projector_ok"] = rep.projector_error <= cfg.tolerances["roundtrip"]
    for name, t in rep.timings.items():
        log.info("stage %s: %.2f s", name, t)


def run_direct(cfg, out, meta, workers):
    pot = _potential(cfg)
    wd = _weyl(cfg, pot, workers)
    names, data = wd.columns()
    write_table(out / "weyl.csv", names, data, {**meta, **_weyl_meta(wd)})
    values = {"M": wd.M, "eta": wd.eta, "l": wd.l, "truncation_bound": wd.truncation_bound,
              "sup_norm": wd.sup_norm()}
    for k, c in enumerate(wd.c):
        values[f"c{k + 1}_re"], values[f"c{k + 1}_im"] = float(c.real), float(c.imag)
    write_keyvalue(out / "diagnostics.csv", values, meta)
    return []


def run_inverse(cfg, out, meta, workers):
    if cfg.input is None:
        raise ConfigError("paths.input: inverse mode needs a Weyl table (as written by 'direct')")
    wd = weyl_from_table(cfg.input, cfg)
    rep = inverse.recover_from_weyl_function(wd, cfg.poles, cfg.grid)
    write_table(out / "beta.csv", *beta_columns(rep.potential), meta)
    values = _report_values(rep)
    _check(rep, cfg, values)
    write_keyvalue(out / "report.csv", values, meta)
    return [] if values["identity_ok"] else [f"identity residual {rep.identity_residual:.3e}"]


def run_roundtrip(cfg, out, meta, workers):
    pot = _potential(cfg)
    wd = _weyl(cfg, pot, workers)
    rep = inverse.recover_from_weyl_function(wd, cfg.poles, pot.grid, truth=pot)
    write_table(out / "weyl.csv", *wd.columns(), {**meta, **_weyl_meta(wd)})
    write_table(out / "beta.csv", *beta_columns(rep.potential), meta)
    values = _report_values(rep)
    _check(rep, cfg, values)
    write_keyvalue(out / "report.csv", values, meta)
    return [k for k in ("identity_ok", "projector_ok") if not values[k]]


def run_weyl_set(cfg, out, meta, workers):
    pot = _potential(cfg)
    M = cfg.M if cfg.M is not None else direct.bound_M(pot, cfg.poles)
    ws = inverse.weyl_set_from_potential(pot, cfg.poles, cfg.eta, zeta=_zeta(cfg, M), M=M)
    rep = inverse.recover_from_weyl_set(ws, cfg.poles, pot.grid, truth=pot)
    names, cols = ["zeta"], [ws.zeta]
    for k in range(ws.m):
        names += [f"re_psi{k + 1}", f"im_psi{k + 1}"]
        cols += [ws.psi[k].real, ws.psi[k].imag]
    write_table(out / "weylset.csv", names, np.column_stack(cols), {**meta, "eta": fmt(ws.eta)})
    write_table(out / "beta.csv", *beta_columns(rep.potential), meta)
    values = _report_values(rep)
    values["first_entry_set"] = " ".join(str(k + 1) for k in ws.first) or "-"
    _check(rep, cfg, values)
    write_keyvalue(out / "report.csv", values, meta)
    return [k for k in ("identity_ok", "projector_ok") if not values[k]]


def _boundary(cfg):
    sg = cfg.sg
    if cfg.input is not None:
        _, names, data = read_table(cfg.input)
        if names != ["t", "omega", "omega_x"]:
            raise ConfigError(f"paths.input: expected columns t, omega, omega_x, got {names}")
        return sgordon.BoundaryData(data[:, 0], data[:, 1], data[:, 2]), None
    if sg["solution"] == "pi":
        sol = sgordon.constant_pi
    else:
        speed = float(sg["speed"])

        def sol(x, t):
            return sgordon.kink(x, t, speed)
    return sgordon.BoundaryData.from_solution(sol, float(sg["horizon"]), int(sg["samples"])), sol


def run_sg(cfg, out, meta, workers):
    bd, sol = _boundary(cfg)
    Mx, M1 = sgordon.cutoffs(bd)
    zeta = None
    if cfg.sg["zeta_count"] is not None or cfg.sg["zeta_max"] is not None:
        count = cfg.sg["zeta_count"] or sgordon.ZETA_COUNT
        zeta = direct.default_zeta(Mx, int(count), cfg.sg["zeta_max"] or sgordon.ZETA_SCALE * max(1.0, Mx))
    names, cols = ["x"], [cfg.grid.x]
    values = {"Mx": Mx, "M1": M1}
    failures = []
    for i, t in enumerate(cfg.sg["times"]):
        t = float(t)
        res = sgordon.recover_cos_omega(bd, t, cfg.grid, eta=cfg.eta, zeta=zeta,
                                        tol=cfg.tolerances["ode"])
        names.append(f"cos_omega_t{i}")
        cols.append(res.values)
        values[f"t{i}"] = t
        values[f"t{i}_horizon"] = res.horizon
        values[f"t{i}_identity_residual"] = res.report.identity_residual
        if sol is not None:
            exact = np.cos(sol(cfg.grid.x, t)[0])
            names.append(f"exact_t{i}")
            cols.append(exact)
            err = float(np.abs(res.values - exact).max())
            values[f"t{i}_error"] = err
            if err > cfg.tolerances["roundtrip"]:
                failures.append(f"t{i}_error")
        for name, sec in res.report.timings.items():
            log.info("t=%g stage %s: %.2f s", t, name, sec)
    write_table(out / "cos_omega.csv", names, np.column_stack(cols), meta)
    write_keyvalue(out / "report.csv", values, meta)
    return failures


def selftest_checks() -> dict:
    """Trivial cases with exact answers: one pole, ``Phi_2 = 0`` and constant rows."""
    poles = PoleSet((0.5,), (1,))
    grid = GridSpec(1.0, 64)
    size = grid.n + 1
    out = {}
    node = snode.assemble_S((np.zeros((1, size)), np.zeros((1, size))), poles, grid)
    out["S_is_identity"] = float(np.abs(node.Smat - np.eye(size)).max())
    out["identity_residual"] = snode.identity_residual(node)
    sweep = snode.inverse_sweep(node)
    beta = snode.recover_beta(node, sweep)
    out["recovered_rows_constant"] = float(np.abs(beta.rows - np.array([1.0, 0.0])).max())
    flat = PotentialField(grid, np.tile([1.0 + 0j, 0.0], (1, size, 1)))
    lam = 0.5 + 0.7j
    w = direct.integrate_fundamental(flat, poles, lam).samples
    exact = np.exp(1j * grid.x / (lam - 0.5))
    out["fundamental_diagonal"] = float(max(np.abs(w[:, 0, 0] - exact).max(),
                                            np.abs(w[:, 1, 1] - 1).max(),
                                            np.abs(w[:, 0, 1]).max(), np.abs(w[:, 1, 0]).max()))
    wd = direct.sample_weyl_function(flat, poles, -2.0, zeta=np.linspace(-40, 40, 64))
    out["weyl_function_zero"] = float(np.abs(wd.phi).max())
    rep = inverse.recover_from_weyl_function(wd, poles, grid)
    out["roundtrip_rows_constant"] = float(np.abs(rep.potential.rows - np.array([1.0, 0.0])).max())
    f = snode.resolvent_apply(0, lam, np.ones(size), grid, poles)
    out["resolvent_closed_form"] = float(np.abs(f - np.exp(1j * grid.x / (lam - 0.5)) / (lam - 0.5)).max())
    return out


SELFTEST_LIMIT = 1e-10
# RK4 truncation is the only non-exact step in the trivial cases
SELFTEST_LIMITS = {"fundamental_diagonal": 1e-8}


def run_selftest(cfg, out, meta, workers):
    values = selftest_checks()
    report, failures = {}, []
    for k, v in values.items():
        limit = SELFTEST_LIMITS.get(k, SELFTEST_LIMIT)
        ok = v <= limit
        report[k], report[f"{k}_limit"] = v, limit
        if not ok:
            failures.append(k)
        log.info("%-26s %.3e %s", k, v, "ok" if ok else "FAIL")
    write_keyvalue(out / "selftest.csv", report, meta)
    return failures


PIPELINES = {
    "direct": run_direct,
    "inverse": run_inverse,
    "roundtrip": run_roundtrip,
    "weyl-set": run_weyl_set,
    "sg": run_sg,
    "selftest": run_selftest,
}


def run(cfg: RunConfig, workers: int = 1) -> int:
    """Execute ``cfg.mode`` and write its files under ``cfg.output``; returns the exit code."""
    meta = {"weylinverse": __version__, "mode": cfg.mode, "config_sha256": cfg.digest()}
    start = time.perf_counter()
    failures = PIPELINES[cfg.mode](cfg, cfg.output, meta, workers)
    log.info("%s finished in %.2f s", cfg.mode, time.perf_counter() - start)
    if failures:
        raise ToleranceError("tolerance missed: " + ", ".join(failures))
    return EXIT_OK


# ---------------------------------------------------------------- argparse

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="weylinverse", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON run configuration")
    common.add_argument("--preset", metavar="NAME", help="bundled configuration instead of --config")
    common.add_argument("--out", metavar="DIR", help="output directory (overrides paths.output)")
    common.add_argument("--workers", type=int, default=1, metavar="N", help="parallel workers")
    common.add_argument("--grid-n", type=int, metavar="N", help="override grid.n")
    common.add_argument("--verbose", "-v", action="store_true", help="log stages and timings")
    sub = parser.add_subparsers(dest="command", required=True)
    for mode in MODES:
        sub.add_parser(mode, parents=[common], help=f"run the {mode} pipeline")
    sub.add_parser("presets", help="list bundled presets")
    return parser


def _configure(args) -> RunConfig:
    if args.config and args.preset:
        raise ConfigError("give either --config or --preset, not both")
    cfg = load_config(args.config, args.preset)
    doc = copy.deepcopy(cfg.raw)
    doc["mode"] = args.command
    if args.grid_n is not None:
        doc["grid"]["n"] = args.grid_n
    if args.out is not None:
        doc["paths"]["output"] = args.out
    if doc["paths"]["input"] is not None and cfg.input is not None:
        doc["paths"]["input"] = str(cfg.input)
    if args.workers < 1:
        raise ConfigError("--workers: must be at least 1")
    return RunConfig.from_dict(doc)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    if args.command == "presets":
        print("\n".join(list_presets()))
        return EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        cfg = _configure(args)
        code = run(cfg, args.workers)
        print(f"{cfg.mode}: ok, outputs in {cfg.output}")
        return code
    except (ConfigError, ValidationError, DomainError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (QualityError, ConvergenceError, ConditioningError) as exc:
        stage = getattr(exc, "stage", None)
        print(f"numerical-quality failure{f' in {stage}' if stage else ''}: {exc}", file=sys.stderr)
        return EXIT_QUALITY
    except WeylError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001 - last-resort exit code
        log.debug("internal error", exc_info=True)
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
