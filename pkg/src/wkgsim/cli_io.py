"""Command line driver: configuration, run orchestration, artifacts and sweeps.

    wkgsim run --config damped.json [--checks a,b] [--output DIR] [--seed N]
    wkgsim sweep --config base.json --grid grid.json [--output DIR] [--threads N]

Exit codes: 0 all enabled checks pass, 1 some check failed, 2 bad
configuration (including malformed JSON), 3 numeric blow-up of the main run.
"""
from __future__ import annotations

import argparse
import copy
import csv
import itertools
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import bootstrap_monitor as bm
from . import ray_ode, slice_diag, wave_decomp
from .errors import ConfigurationError, NumericError, WkgError
from .evolver import DEFAULT_CFL, evolve
from .frame_geometry import (CoefficientSet, SpacetimePoint, minkowski_coeffs,
                             transition_phi, transition_psi, underline_contract)
from .grid_fields import PROFILES, RadialGrid, make_initial_data

log = logging.getLogger("wkgsim")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

DEFAULTS = {
    "grid": {"r_max": 28.0, "n": None, "dr": 0.005},
    "time": {"t_final": 25.0, "cfl": DEFAULT_CFL, "store_dt": 0.02},
    "coeffs": {"A00": 0.0, "A0r": 0.0, "Arr": 0.0, "B": -1.0, "c": 1.0, "h00": 0.0,
               "p0": 1.0, "q": 0.0},
    "data": {"epsilon": 0.01, "profile": "polynomial"},
    "checks": ["decomposition", "rays", "bootstrap", "sharp_decay", "recursion"],
    "bootstrap": {"delta": 0.05, "n_eff": 3},
    "rays": {"t": [6.0, 10.0, 14.0, 18.0, 22.0], "y": [0.0, 0.25, 0.5, 0.75], "dlam": 0.01,
             "factor": 5.0},
    "damping": {"epsilon": 0.05, "violating": {"B": 1.0}, "factor": 2.0, "s_max": 20.0},
    "diagnostics": {"ds": 1.0, "slices": [4.0, 8.0, 12.0, 16.0, 20.0]},
    "output": "wkgsim_out",
}


# ---------------------------------------------------------------------------
# JSON with 17 significant digits

def _num(x) -> str:
    x = float(x)
    if math.isnan(x) or math.isinf(x):
        return "null"
    return format(x, ".17g")


def to_json(obj, indent: int = 2, _level: int = 0) -> str:
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {to_json(v, indent, _level + 1)}"
                 for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        if all(isinstance(v, (int, float, np.number)) and not isinstance(v, bool) for v in seq):
            return "[" + ", ".join(to_json(v) for v in seq) + "]"
        return "[\n" + ",\n".join(pad + to_json(v, indent, _level + 1) for v in seq) + "\n" + end + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _num(obj)
    if obj is None:
        return "null"
    return json.dumps(str(obj))


def write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_num(x) if isinstance(x, (float, np.floating)) else x for x in row])


# ---------------------------------------------------------------------------
# configuration

def _merge(base: dict, over: dict, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        name = f"{where}{key}"
        if key not in base:
            raise ConfigurationError(f"unknown config key {name!r}")
        if isinstance(base[key], dict) and key not in ("violating",):
            if not isinstance(val, dict):
                raise ConfigurationError(f"config section {name!r} must be an object")
            out[key] = _merge(base[key], val, name + ".")
        else:
            out[key] = val
    return out


def load_config(path) -> dict:
    """Read and validate a JSON config, filling defaults."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"malformed JSON in {path}: {exc}") from exc
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigurationError("config must be a JSON object")
    return validate_config(raw)


def validate_config(raw: dict) -> dict:
    cfg = _merge(DEFAULTS, raw)
    if "n" in raw.get("grid", {}) and "dr" not in raw.get("grid", {}):
        cfg["grid"]["dr"] = None
    g, tm, co = cfg["grid"], cfg["time"], cfg["coeffs"]
    try:
        r_max = float(g["r_max"])
        t_final = float(tm["t_final"])
        cfl = float(tm["cfl"])
        store_dt = float(tm["store_dt"])
        coeff_vals = {k: float(v) for k, v in co.items()}
        eps = float(cfg["data"]["epsilon"])
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"non-numeric config value: {exc}") from exc
    if (g["n"] is None) == (g["dr"] is None):
        raise ConfigurationError("grid needs exactly one of 'n' and 'dr'")
    if not t_final > 2.0:
        raise ConfigurationError(f"t_final={t_final} must exceed the initial time 2")
    if r_max < t_final + 3.0:
        raise ConfigurationError(f"r_max={r_max} violates the domain policy r_max >= t_final + 3 "
                                 f"(= {t_final + 3.0:g}); the outer boundary would be reached")
    if not 0.0 < cfl <= 0.8:
        raise ConfigurationError(f"cfl={cfl} outside (0, 0.8]")
    if not store_dt > 0:
        raise ConfigurationError("store_dt must be positive")
    for k, v in coeff_vals.items():
        if not np.isfinite(v):
            raise ConfigurationError(f"coefficient {k} is not finite")
    if not coeff_vals["c"] > 0:
        raise ConfigurationError(f"Klein-Gordon mass c={coeff_vals['c']} must be positive")
    if not eps >= 0:
        raise ConfigurationError("data.epsilon must be nonnegative")
    if cfg["data"]["profile"] not in PROFILES:
        raise ConfigurationError(f"unknown profile {cfg['data']['profile']!r}; "
                                 f"choose from {sorted(PROFILES)}")
    checks = cfg["checks"]
    if isinstance(checks, str):
        checks = [c for c in checks.split(",") if c]
    unknown = [c for c in checks if c not in CHECKS]
    if unknown:
        raise ConfigurationError(f"unknown checks {unknown}; available: {sorted(CHECKS)}")
    cfg["checks"] = list(checks)
    for k in cfg["damping"]["violating"]:
        if k not in DEFAULTS["coeffs"]:
            raise ConfigurationError(f"unknown coefficient {k!r} in damping.violating")
    try:
        bm.BootstrapConfig(n_eff=int(cfg["bootstrap"]["n_eff"]),
                           delta=float(cfg["bootstrap"]["delta"]), eps=eps)
        grid_of(cfg)
        coeffs_of(cfg)
    except WkgError as exc:
        raise ConfigurationError(str(exc)) from exc
    dt = cfl * grid_of(cfg).dr
    if dt > store_dt * (1 + 1e-12):
        raise ConfigurationError(f"store_dt={store_dt} below the time step {dt:.4g}")
    return cfg


def grid_of(cfg) -> RadialGrid:
    g = cfg["grid"]
    if g["n"] is not None:
        return RadialGrid(r_max=float(g["r_max"]), n=int(g["n"]))
    return RadialGrid.from_spacing(float(g["dr"]), float(g["r_max"]))


def coeffs_of(cfg, overrides=None) -> CoefficientSet:
    co = dict(cfg["coeffs"])
    co.update(overrides or {})
    co["Q"] = co.pop("q")
    return CoefficientSet(**{k: float(v) for k, v in co.items()})


def bootstrap_cfg(cfg) -> bm.BootstrapConfig:
    return bm.BootstrapConfig(n_eff=int(cfg["bootstrap"]["n_eff"]),
                              delta=float(cfg["bootstrap"]["delta"]),
                              eps=float(cfg["data"]["epsilon"]))


# ---------------------------------------------------------------------------
# run context

class RunContext:
    """Holds the main run and lazily built companions shared by checks."""

    def __init__(self, cfg: dict, outdir: Path, seed: int = 0):
        self.cfg, self.outdir, self.seed = cfg, outdir, seed
        self.grid = grid_of(cfg)
        self.coeffs = coeffs_of(cfg)
        self.c = self.coeffs.c
        self.t_final = float(cfg["time"]["t_final"])
        self._coarse = None
        self._dec = {}
        self.run = self.evolve(self.grid)

    def evolve(self, grid):
        tm = self.cfg["time"]
        data = make_initial_data(grid, float(self.cfg["data"]["epsilon"]),
                                 self.cfg["data"]["profile"])
        return evolve(data, grid, self.coeffs, self.t_final, cfl=float(tm["cfl"]),
                      store_dt=float(tm["store_dt"]))

    @property
    def coarse(self):
        """Same run at twice the spacing (self-convergence reference)."""
        if self._coarse is None:
            g = RadialGrid.from_spacing(2.0 * self.grid.dr, self.grid.r_max)
            self._coarse = self.evolve(g)
        return self._coarse

    def decomposition(self, which="fine"):
        if which not in self._dec:
            run = self.run if which == "fine" else self.coarse
            tm = self.cfg["time"]
            self._dec[which] = wave_decomp.decompose(run, self.coeffs, cfl=float(tm["cfl"]))
        return self._dec[which]

    def s_values(self, lo, hi, ds):
        hi = min(hi, self.run.t_last)
        return np.arange(lo, hi + 1e-9, ds)


# ---------------------------------------------------------------------------
# checks: each returns a dict with "holds", "reference" and scalar "metrics"

def check_frame(ctx: RunContext) -> dict:
    rng = np.random.default_rng(ctx.seed)
    err_inv = err_mink = 0.0
    mink = minkowski_coeffs()
    for _ in range(1000):
        t = rng.uniform(2.0, 50.0)
        r = rng.uniform(0.0, 0.999) * (t - 1.0)
        d = rng.normal(size=3)
        p = SpacetimePoint(t, r)
        err_inv = max(err_inv, np.max(np.abs(transition_phi(p, d) @ transition_psi(p, d) - np.eye(4))))
        err_mink = max(err_mink, abs(underline_contract(mink, p) - (p.s / t) ** 2))
    return {"holds": bool(err_inv <= 1e-13 and err_mink <= 1e-13),
            "reference": "frame change and its inverse; Minkowski form in the hyperboloidal frame",
            "metrics": {"inverse_error": err_inv, "minkowski_error": err_mink}}


def check_box(ctx: RunContext) -> dict:
    p = SpacetimePoint(5.0, 2.0)
    orders = {}
    for name, f in ray_ode.closed_form_fields().items():
        e1 = ray_ode.box_identity_residual(f, p, 0.02)
        e2 = ray_ode.box_identity_residual(f, p, 0.01)
        orders[name] = float(np.log2(e1 / e2)) if e2 > 0 else np.inf
    ok = all(abs(o - 2.0) <= 0.2 for o in orders.values())
    return {"holds": bool(ok), "reference": "wave operator in hyperbolic form along rays",
            "metrics": {f"order_{k}": v for k, v in orders.items()}}


def check_ode(ctx: RunContext) -> dict:
    rng = np.random.default_rng(ctx.seed)
    worst, holds = 0.0, True
    for _ in range(100):
        res = ray_ode.barrier_bound_check(ray_ode.random_admissible_problem(rng), dt=1e-3)
        worst = max(worst, res["K_measured"] / res["bound"])
        holds &= res["holds"]
    return {"holds": bool(holds), "reference": "barrier bound for the damped ray ODE",
            "metrics": {"worst_K_over_bound": worst}}


def check_conservation(ctx: RunContext) -> dict:
    """Energy balance (slice + flux through t = T) for the fields that are free."""
    s_vals = ctx.s_values(3.0, 20.0, 0.25)
    fields = []
    if ctx.coeffs.p0 == 0 and ctx.coeffs.h00 == 0 and ctx.coeffs.Q == 0:
        fields.append(("v", ctx.c))
    if ctx.coeffs.B == 0 and ctx.coeffs.A00 == 0 and ctx.coeffs.A0r == 0 and ctx.coeffs.Arr == 0:
        fields.append(("u", 0.0))
    if not fields:
        return {"holds": False, "reference": "free-field energy conservation",
                "error": "no free field in this coefficient set", "metrics": {}}

    def drift(run, name, c):
        tot = np.array([slice_diag.energy_balance(run, s, s_vals[0], c, name)["ratio"]
                        for s in s_vals])
        return float(np.max(np.abs(tot - 1.0)))

    metrics, ok = {}, True
    for name, c in fields:
        d_fine = drift(ctx.run, name, c)
        d_coarse = drift(ctx.coarse, name, c)
        order = float(np.log2(d_coarse / d_fine)) if d_fine > 0 else np.inf
        metrics.update({f"drift_{name}": d_fine, f"drift_{name}_coarse": d_coarse,
                        f"order_{name}": order})
        ok &= d_fine < 1e-3 and abs(order - 2.0) <= 0.4
    return {"holds": bool(ok), "reference": "free-field energy conservation", "metrics": metrics}


def check_ks(ctx: RunContext) -> dict:
    s_vals = ctx.s_values(4.0, 20.0, 1.0)
    metrics = {}
    ok = True
    for name in ("v", "u"):
        rat = np.array([slice_diag.ks_ratio(ctx.run, s, name)["ratio"] for s in s_vals])
        var = float((rat.max() - rat.min()) / rat.max()) if rat.max() > 0 else np.nan
        metrics[f"ratio_max_{name}"] = float(rat.max())
        metrics[f"variation_{name}"] = var
        # u is reported only: free waves vanish inside the cone after passage
        if name == "v":
            ok = bool(np.isfinite(var) and var < 0.25)
    return {"holds": bool(ok), "reference": "Klainerman-Sobolev ratio across slices",
            "metrics": metrics}


def check_axis_decay(ctx: RunContext) -> dict:
    fit = bm.axis_decay_fit(ctx.run, ctx.c)
    return {"holds": bool(abs(fit["exponent"] + 1.5) <= 0.1),
            "reference": "linear Klein-Gordon decay at the axis",
            "metrics": {"exponent": fit["exponent"], "exponent_peaks": fit["exponent_peaks"]}}


def check_rays(ctx: RunContext) -> dict:
    rc = ctx.cfg["rays"]
    bases = ray_ode.sample_rays(rc["t"], rc["y"])
    free_h = ctx.coeffs.p0 == 0
    rays_dir = ctx.outdir / "rays"
    rays_dir.mkdir(parents=True, exist_ok=True)
    worst, rows = 0.0, []
    for i, b in enumerate(bases):
        tf = ray_ode.ray_consistency(ctx.run, b, ctx.c, h=None if free_h else ctx.run,
                                     dlam=float(rc["dlam"]))
        tc = ray_ode.ray_consistency(ctx.coarse, b, ctx.c, h=None if free_h else ctx.coarse,
                                     dlam=float(rc["dlam"]))
        tf.write_csv(rays_dir / f"ray_{i:02d}.csv")
        res = float(np.nanmax(tf.residual))
        diff = float(np.nanmax(np.abs(tc.residual - tf.residual)))
        ratio = res / diff if diff > 0 else (0.0 if res == 0 else np.inf)
        worst = max(worst, ratio)
        rows.append([i, b[0], b[1], res, diff, ratio])
    write_rows(rays_dir / "summary.csv", ["ray", "t", "r", "residual", "self_convergence", "ratio"],
               rows)
    return {"holds": bool(worst <= float(rc["factor"])),
            "reference": "ray ODE identity against solver self-convergence",
            "metrics": {"worst_ratio": worst, "n_rays": len(bases)}}


def check_decomposition(ctx: RunContext) -> dict:
    fine = ctx.decomposition("fine")
    coarse = ctx.decomposition("coarse")
    rf, rc_ = fine.residual_sup(), coarse.residual_sup()
    order = float(np.log2(rc_ / rf)) if rf > 0 else np.inf
    cert = wave_decomp.sign_certificate(fine)
    s_vals = ctx.s_values(2.0, ctx.t_final, 1.0)
    fine.write_csv(ctx.outdir / "decomposition.csv", s_vals)
    return {"holds": bool(order >= 1.8 and cert["holds"]),
            "reference": "linear, good and bad parts of the wave component; sign of the bad part",
            "metrics": {"residual": rf, "residual_coarse": rc_, "order": order,
                        "sign_max": cert["max"], "sign_tol": cert["tol"]}}


def check_bootstrap(ctx: RunContext) -> dict:
    cfg = bootstrap_cfg(ctx.cfg)
    cfg.s_max = 20.0
    s_vals = ctx.s_values(2.0, ctx.t_final, 0.5)
    tab = bm.energy_table(ctx.run, s_vals, ctx.c, cfg.n_eff)
    res = bm.bootstrap_check(tab, cfg)
    write_rows(ctx.outdir / "bootstrap.csv", ["s", "E_con_u", "E_c_v", "refined"],
               [[s, a, b, int(h)] for s, a, b, h in
                zip(tab["s"], tab["E_con_u"], tab["E_c_v"], res["refined"])])
    return {"holds": res["holds"], "reference": "bootstrap energy bounds and refined halves",
            "metrics": {"C0": res["C0"], "C1": res["C1"], "C1_min": res["C1_min"],
                        "delta_min": res["delta_min"], "refined_hold": res["refined_hold"]}}


def check_sharp_decay(ctx: RunContext) -> dict:
    res = bm.sharp_decay_check(ctx.run, bootstrap_cfg(ctx.cfg), ctx.c)
    return {"holds": res["holds"], "reference": "sharp pointwise decay of both components",
            "metrics": {"slope_t_u": res["slope_t_u"], "v_exponent": res["v_exponent"],
                        "v_exponent_peaks": res["v_exponent_peaks"]}}


def check_recursion(ctx: RunContext) -> dict:
    cfg = bootstrap_cfg(ctx.cfg)
    s_vals = ctx.s_values(2.0, ctx.t_final, 0.5)
    sup = bm.compute_sup_quantities(ctx.run, cfg, s_vals)
    head, rows = sup.as_rows()
    write_rows(ctx.outdir / "sup_quantities.csv", head, rows)
    res = bm.recursion_certify(sup)
    rep = res["replay"]
    return {"holds": res["holds"], "reference": "integral recursion for the sup quantities",
            "metrics": {"C": res["C"], "C_full": res["C_full"],
                        "inequalities_hold": res["inequalities_hold"],
                        "k0_structural": res["k0_structural"],
                        "replay_perturbative": rep["perturbative"],
                        "replay_exponent": rep["exponent"]}}


def check_damping(ctx: RunContext) -> dict:
    dc = ctx.cfg["damping"]
    data = make_initial_data(ctx.grid, float(dc["epsilon"]), ctx.cfg["data"]["profile"])
    violating = coeffs_of(ctx.cfg, dc["violating"])
    tm = ctx.cfg["time"]
    res = bm.damping_comparison(ctx.coeffs, violating, data, ctx.grid, ctx.t_final,
                                s_max=float(dc["s_max"]), factor=float(dc["factor"]),
                                store_dt=float(tm["store_dt"]), cfl=float(tm["cfl"]))
    write_rows(ctx.outdir / "damping.csv", ["s", "E_c_v_damped", "E_c_v_violating", "ratio"],
               list(zip(res["s"], res["damped"], res["violating"], res["ratio"])))
    return {"holds": res["holds"], "reference": "damped versus condition-violating coefficients",
            "metrics": {"max_ratio": res["max_ratio"],
                        "diverge_s": np.nan if res["diverge_s"] is None else res["diverge_s"],
                        "violating_blowup_t": np.nan if res["violating_blowup_t"] is None
                        else res["violating_blowup_t"]}}


CHECKS = {
    "frame": check_frame, "box": check_box, "ode": check_ode,
    "conservation": check_conservation, "ks": check_ks, "axis_decay": check_axis_decay,
    "rays": check_rays, "decomposition": check_decomposition, "bootstrap": check_bootstrap,
    "sharp_decay": check_sharp_decay, "recursion": check_recursion, "damping": check_damping,
}


# ---------------------------------------------------------------------------
# artifacts

def write_diagnostics(ctx: RunContext):
    dg = ctx.cfg["diagnostics"]
    s_vals = ctx.s_values(2.0, ctx.t_final, float(dg["ds"]))
    reports = [slice_diag.energy_report(ctx.run, s, ctx.c) for s in s_vals]
    slice_diag.write_energy_csv(ctx.outdir / "energies.csv", reports)
    sdir = ctx.outdir / "slices"
    sdir.mkdir(parents=True, exist_ok=True)
    for s in dg["slices"]:
        if s > ctx.run.t_last:
            continue
        sl = slice_diag.extract_slice(ctx.run, float(s), ["u", "v"], truncate=True)
        rows = zip(sl.r, sl.t, sl.values["u"]["f"], sl.values["v"]["f"])
        write_rows(sdir / f"slice_s{float(s):08.3f}.csv", ["r", "t", "u", "v"], rows)


def run_pipeline(cfg: dict, outdir=None, checks=None, seed: int = 0) -> tuple[int, dict]:
    """Evolve, run the checks and write artifacts. Returns (exit code, report)."""
    outdir = Path(outdir if outdir is not None else cfg["output"])
    outdir.mkdir(parents=True, exist_ok=True)
    checks = cfg["checks"] if checks is None else checks
    report = {"config": cfg, "seed": seed, "checks": {}}
    t0 = time.perf_counter()
    try:
        ctx = RunContext(cfg, outdir, seed)
    except NumericError as exc:
        report["error"] = f"numeric failure in the main run: {exc}"
        report["all_pass"] = False
        (outdir / "certification.json").write_text(to_json(report) + "\n")
        return EXIT_NUMERIC, report
    log.info("evolved to t=%g in %.1fs", ctx.run.t_last, time.perf_counter() - t0)
    write_diagnostics(ctx)
    all_pass = True
    for name in checks:
        t1 = time.perf_counter()
        try:
            res = CHECKS[name](ctx)
        except WkgError as exc:
            res = {"holds": False, "reference": name, "error": f"{type(exc).__name__}: {exc}",
                   "metrics": {}}
        res["seconds"] = time.perf_counter() - t1
        report["checks"][name] = res
        all_pass &= bool(res["holds"])
        log.info("%-14s %s (%.1fs)", name, "PASS" if res["holds"] else "FAIL", res["seconds"])
    report["all_pass"] = all_pass
    (outdir / "certification.json").write_text(to_json(report) + "\n")
    return (EXIT_OK if all_pass else EXIT_FAIL), report


def summary_lines(report: dict):
    lines = []
    for name, res in report["checks"].items():
        m = ", ".join(f"{k}={_fmt(v)}" for k, v in res.get("metrics", {}).items())
        err = f" [{res['error']}]" if "error" in res else ""
        lines.append(f"{'PASS' if res['holds'] else 'FAIL'} {name}: {m}{err}")
    return lines


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.4g}"
    return str(v)


# ---------------------------------------------------------------------------
# sweeps

def expand_grid(grid: dict):
    """Cartesian product of dotted-key value lists; empty grid -> no runs."""
    if not grid:
        return []
    keys = list(grid)
    for k in keys:
        if not isinstance(grid[k], list) or not grid[k]:
            raise ConfigurationError(f"sweep values for {k!r} must be a nonempty list")
    return [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]


def apply_overrides(raw: dict, params: dict) -> dict:
    out = copy.deepcopy(raw)
    for dotted, val in params.items():
        parts = dotted.split(".")
        node = out
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = val
        if parts == ["grid", "dr"]:
            node.pop("n", None)
        elif parts == ["grid", "n"]:
            node.pop("dr", None)
    return out


def _sweep_one(args):
    idx, raw, params, outdir, checks, seed = args
    row = {"run": idx, **params}
    try:
        cfg = validate_config(apply_overrides(raw, params))
        code, report = run_pipeline(cfg, Path(outdir) / f"run_{idx:03d}", checks, seed)
        row["exit_code"] = code
        for name, res in report["checks"].items():
            row[f"{name}.holds"] = bool(res["holds"])
            for k, v in res.get("metrics", {}).items():
                row[f"{name}.{k}"] = v
        if "error" in report:
            row["error"] = report["error"]
    except ConfigurationError as exc:
        row.update(exit_code=EXIT_CONFIG, error=str(exc))
    except Exception as exc:  # recorded, sweep continues
        row.update(exit_code=-1, error=f"{type(exc).__name__}: {exc}")
    return row


def run_sweep(raw: dict, grid: dict, outdir, threads: int = 1, checks=None, seed: int = 0):
    """Independent runs over the grid; rows of fitted values and verdicts, also in sweep.csv."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    combos = expand_grid(grid)
    jobs = [(i, raw, p, str(outdir), checks, seed) for i, p in enumerate(combos)]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(_sweep_one, jobs))
    else:
        rows = [_sweep_one(j) for j in jobs]
    cols = []
    for row in rows:
        cols.extend(k for k in row if k not in cols)
    with open(outdir / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for row in rows:
            w.writerow([_cell(row.get(k, "")) for k in cols])
    return rows


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return _num(v)
    return v


# ---------------------------------------------------------------------------
# entry point

def _parser():
    ap = argparse.ArgumentParser(prog="wkgsim", description=__doc__.split("\n")[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("run", "sweep"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--checks", default=None, help="comma-separated check names")
        p.add_argument("--output", default=None)
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--seed", type=int, default=0)
        if name == "sweep":
            p.add_argument("--grid", required=True, help="JSON object of dotted key -> values")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    checks = None
    if args.checks is not None:
        checks = [c.strip() for c in args.checks.split(",") if c.strip()]
        bad = [c for c in checks if c not in CHECKS]
        if bad:
            print(f"config error: unknown checks {bad}; available: {sorted(CHECKS)}",
                  file=sys.stderr)
            return EXIT_CONFIG
    if args.threads < 1:
        print("config error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config)
        if args.command == "sweep":
            with open(args.config) as fh:
                raw = json.load(fh)
            try:
                with open(args.grid) as fh:
                    grid = json.load(fh)
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigurationError(f"bad sweep grid {args.grid}: {exc}") from exc
            if not isinstance(grid, dict):
                raise ConfigurationError("sweep grid must be a JSON object")
            expand_grid(grid)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    outdir = args.output or cfg["output"]
    if args.command == "sweep":
        rows = run_sweep(raw, grid, outdir, args.threads, checks, args.seed)
        print(f"{len(rows)} runs written to {os.path.join(outdir, 'sweep.csv')}")
        return EXIT_OK
    code, report = run_pipeline(cfg, outdir, checks, args.seed)
    if "error" in report:
        print(report["error"], file=sys.stderr)
    for line in summary_lines(report):
        print(line)
    return code


if __name__ == "__main__":
    sys.exit(main())
