"""Experiment orchestration: one function per config kind, deterministic artifacts.

Every CSV gets a header row and a ``<file>.json`` sidecar holding the config,
its hash and the library versions. Floats are written with ``repr`` so two
runs of the same config give byte-identical files.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import platform
from functools import lru_cache

import numpy as np
import scipy

from . import __version__, ansatz, energy, field, fieldio, grid, reduction
from .config import config_hash, validate
from .errors import BadGeometry, ConfigError, MissingParam, UnknownPreset
from .groundstate import eval_profile, ode_residual, solve_ground_state

__all__ = ["run_config", "provenance"]

log = logging.getLogger(__name__)


def provenance(cfg: dict) -> dict:
    return {
        "config": cfg,
        "config_hash": config_hash(cfg),
        "versions": {
            "magnls": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
    }


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return repr(x)
    return x


def _write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header, rows, cfg, extra=None) -> list:
    """CSV with header plus its provenance sidecar; returns the written paths."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])
    side = provenance(cfg)
    side["columns"] = list(header)
    if extra:
        side.update(extra)
    _write_json(str(path) + ".json", side)
    return [str(path), str(path) + ".json"]


def _stem(path):
    root, ext = os.path.splitext(path)
    return root


# ----------------------------------------------------------------------------
# building blocks from config


@lru_cache(maxsize=8)
def _profile(p, dim, r_max=30.0, tol=1e-10):
    return solve_ground_state(p, dim, r_max=r_max, tol=tol)


def _potential(cfg):
    spec = cfg["potential"]
    try:
        return field.make_potential(spec["preset"], spec.get("params", {}))
    except UnknownPreset as exc:
        raise ConfigError(f"potential.preset: {exc}") from exc
    except MissingParam as exc:
        raise ConfigError(f"potential.params: {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"potential.params: {exc}") from exc


def _recenter(cfg, K):
    flag = cfg["bump"]["recenter_gauge"]
    return K == 1 if flag is None else bool(flag)


def _bump(cfg, eps, potential=None, recenter=None):
    pot = _potential(cfg) if potential is None else potential
    b = cfg["bump"]
    centers = np.asarray(b["centers"], dtype=float)
    if centers.shape[1] != pot.dim:
        raise ConfigError(f"bump.centers: dimension {centers.shape[1]} does not match the potential ({pot.dim})")
    recenter = _recenter(cfg, centers.shape[0]) if recenter is None else recenter
    if recenter:
        pot = ansatz.recenter_gauge(pot, centers[0])
    prof = _profile(float(cfg["p"]), pot.dim, float(cfg["r_max"]), cfg["tolerances"]["groundstate"])
    try:
        return ansatz.make_config(
            pot, prof, eps, centers, phases=b["phases"], half_width=b["half_width"],
            spacing=b["spacing"], profile_mode=b["profile_mode"], cutoff_radius=b["cutoff_radius"],
        )
    except BadGeometry as exc:
        raise ConfigError(f"bump: {exc}") from exc


def _box(cfg):
    lo, hi = (np.asarray(c, dtype=float) for c in cfg["box"])
    if np.any(hi <= lo):
        raise ConfigError("box: upper corner must exceed the lower corner componentwise")
    return lo, hi


def _axes_names(dim):
    return [f"x{k + 1}" for k in range(dim)]


# ----------------------------------------------------------------------------
# experiment kinds


def run_groundstate(cfg):
    prof = _profile(float(cfg["p"]), cfg["dim"], float(cfg["r_max"]), cfg["tolerances"]["groundstate"])
    r = np.linspace(0.0, prof.r_max, int(round(prof.r_max / 0.01)) + 1)
    w, dw = eval_profile(prof, r)
    extra = {
        "w0": prof.w0,
        "tail_amp": prof.tail_amp,
        "tail_rate": prof.tail_rate,
        "max_ode_residual": float(np.max(np.abs(ode_residual(prof)))),
    }
    return write_csv(cfg["output"], ["r", "w", "dw"], zip(r, w, dw), cfg, extra)


def run_field_scan(cfg):
    pot = _potential(cfg)
    lo, hi = _box(cfg)
    if lo.size != pot.dim:
        raise ConfigError(f"box: dimension {lo.size} does not match the potential ({pot.dim})")
    n = cfg["n"]
    axes = [np.linspace(lo[k], hi[k], n) for k in range(pot.dim)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, pot.dim)
    fm = field.field_at(pot, pts)
    fro = field.frobenius_sq(fm)
    header = _axes_names(pot.dim) + (["scalar_b"] if pot.dim == 2 else []) + ["frobenius_sq"]
    rows = []
    for k, x in enumerate(pts):
        row = list(x) + ([fm.scalar_b[k]] if pot.dim == 2 else []) + [fro[k]]
        rows.append(row)

    # derivative cross-check at random probe points, the only use of rng_seed
    rng = np.random.default_rng(cfg["rng_seed"])
    probes = lo + (hi - lo) * rng.random((cfg["probe_points"], pot.dim))
    fd = field.fd_check(pot, probes) if len(probes) else {}
    written = write_csv(cfg["output"], header, rows, cfg, {"fd_check": fd, "probe_points": probes})

    crit = field.find_field_critical_points(pot, box=np.stack([lo, hi], axis=1))
    crow = []
    for x, kind, eig in zip(crit.points, crit.kinds, crit.hessian_eigs):
        crow.append(list(x) + [kind] + list(eig) + [float(field.curl_invariant(pot, x))])
    cheader = _axes_names(pot.dim) + ["kind"] + [f"hess_eig{k + 1}" for k in range(pot.dim)] + ["frobenius_sq"]
    written += write_csv(
        _stem(cfg["output"]) + "_critical.csv", cheader, crow, cfg,
        {"constant_field": crit.constant_field, "dropped_seeds": crit.dropped_seeds},
    )
    return written


def _bump_meta(bc):
    return {
        "eps": bc.eps,
        "p": bc.p,
        "dim": bc.dim,
        "centers": bc.centers,
        "phases": bc.phases,
        "half_width": bc.half_width,
        "spacing": bc.spacing,
        "profile_mode": bc.profile_mode,
        "potential": {"preset": bc.potential.preset_tag, "params": bc.potential.params},
    }


def run_ansatz(cfg):
    bc = _bump(cfg, float(cfg["eps"]))
    u = ansatz.build_ansatz(bc)
    out = cfg["output"]
    os.makedirs(os.path.dirname(os.path.abspath(out)), exist_ok=True)
    side = provenance(cfg)
    side["bump"] = _bump_meta(bc)
    fieldio.write_field(out, u, _jsonable(side))
    return [out, out + ".json"]


def run_residual_scaling(cfg):
    eps_list = [float(e) for e in cfg["eps"]]
    rows = []
    for e in eps_list:
        bc = _bump(cfg, e)
        R = energy.residual(ansatz.build_ansatz(bc), bc)
        rows.append((e, grid.l2_norm(R)))
        log.info("eps %g: |R| = %.3e", e, rows[-1][1])
    vals = [r[1] for r in rows]
    slope, rms = energy.loglog_slope(eps_list, vals) if min(vals) > 0 else (math.nan, math.nan)
    return write_csv(cfg["output"], ["eps", "l2_residual"], rows, cfg, {"slope": slope, "slope_rms": rms})


def _extrapolated_breakdown(bc, extrapolate):
    e1 = energy.energy(ansatz.build_ansatz(bc), bc)
    if not extrapolate:
        return e1
    fine = bc.with_(spacing=bc.spacing / 2)
    e2 = energy.energy(ansatz.build_ansatz(fine), fine)
    parts = [energy.richardson([getattr(e1, k), getattr(e2, k)], orders=(4,)) for k in ("kinetic", "mass", "potential")]
    return energy.EnergyBreakdown(parts[0] + parts[1] - parts[2], *parts)


def run_energy_expansion(cfg):
    eps_list = [float(e) for e in cfg["eps"]]
    fit = cfg["fit"]
    rows = []
    bc = None
    for e in eps_list:
        bc = _bump(cfg, e)
        eb = _extrapolated_breakdown(bc, fit["extrapolate"])
        rows.append((e, eb.total, eb.kinetic, eb.mass, eb.potential))
        log.info("eps %g: E = %.12g", e, eb.total)
    E = [r[1] for r in rows]
    c0, c2, rep = energy.fit_expansion(eps_list, E, quartic=fit["quartic"])
    consts = energy.expansion_constants(bc.profile)
    pot = _potential(cfg)
    curl_sum = float(sum(field.curl_invariant(pot, z) for z in bc.centers))
    K = bc.K
    summary = {
        "c0": c0,
        "c2": c2,
        "slope": rep.fitted_slope,
        "fit_residual": rep.fit_residual,
        "cond": rep.extra["cond"],
        "K": K,
        "a0": consts.a0,
        "b0": consts.b0,
        "c0_rel_error": (c0 - K * consts.a0) / (K * consts.a0),
        "curl_sum": curl_sum,
        "c2_over_b0_curl": c2 / (consts.b0 * curl_sum) if curl_sum > 0 else None,
    }
    header = ["eps", "E", "kinetic", "mass", "potential"]
    written = write_csv(cfg["output"], header, rows, cfg, {"summary": summary})
    spath = _stem(cfg["output"]) + "_summary.json"
    side = provenance(cfg)
    side.update(summary)
    _write_json(spath, side)
    return written + [spath]


def run_landscape(cfg):
    pot = _potential(cfg)
    lo, hi = _box(cfg)
    if lo.size != pot.dim:
        raise ConfigError(f"box: dimension {lo.size} does not match the potential ({pot.dim})")
    prof = _profile(float(cfg["p"]), pot.dim, float(cfg["r_max"]), cfg["tolerances"]["groundstate"])
    b = cfg["bump"]
    recenter = True if b["recenter_gauge"] is None else bool(b["recenter_gauge"])
    try:
        rows = energy.landscape_scan(
            pot, prof, float(cfg["eps"]), (lo, hi), cfg["n"],
            half_width=b["half_width"], spacing=b["spacing"], recenter=recenter,
        )
    except BadGeometry as exc:
        raise ConfigError(f"bump: {exc}") from exc
    header = _axes_names(pot.dim) + ["energy", "frobenius_sq"]
    out = [list(r["zeta"]) + [r["energy"], r["curl"]] for r in rows]
    k = int(np.argmax(rows["energy"]))
    return write_csv(cfg["output"], header, out, cfg, {"argmax": rows["zeta"][k]})


def run_solve(cfg):
    bc = _bump(cfg, float(cfg["eps"]), recenter=False)
    tol = cfg["tolerances"]
    recenter = _recenter(cfg, bc.K)
    cfg_f, state, u = reduction.reduce_outer(bc, tol=tol["outer"], inner_tol=tol["inner"], recenter=recenter)
    R = energy.residual(u, cfg_f)
    peaks = reduction.peak_location(u)
    outdir = cfg["output"]
    os.makedirs(outdir, exist_ok=True)

    report = provenance(cfg)
    report.update(
        {
            "zeta": cfg_f.centers,
            "sigma": cfg_f.phases,
            "peaks": cfg_f.eps * peaks.points,
            "max_c": float(np.max(np.abs(state.c))),
            "c": state.c,
            "residual_l2": grid.l2_norm(R),
            "residual_sup": R.max_abs(),
            "projected_residual_l2": state.residual_norm,
            "phi_l2": grid.l2_norm(state.phi),
            "outer_iterations": state.outer_iters,
            "inner_iterations": state.inner_iters,
            "krylov_iterations": state.krylov_iters,
            "contraction_ratios": state.ratios,
            "energy": energy.energy(u, cfg_f).total,
            "gauge": {"preset": cfg_f.potential.preset_tag, "recentered": recenter},
            # multipliers at the solved parameters when only the cutoff radius changes
            "cutoff_sensitivity": {
                "radius": cfg_f.cutoff_radius,
                "max_c": reduction.cutoff_sensitivity(
                    cfg_f, (cfg_f.cutoff_radius - 2, cfg_f.cutoff_radius + 2), phi0=state.phi,
                    tol=tol["inner"] or 1e-3 * tol["outer"],
                ),
            },
        }
    )
    written = []
    fpath = os.path.join(outdir, "solution.fld")
    side = provenance(cfg)
    side["bump"] = _bump_meta(cfg_f)
    fieldio.write_field(fpath, u, _jsonable(side))
    written += [fpath, fpath + ".json"]
    rpath = os.path.join(outdir, "report.json")
    _write_json(rpath, report)
    written.append(rpath)
    nx = len(state.outer_log[0]["x"]) if state.outer_log else 0
    header = ["outer", "max_c", "inner"] + [f"u{k + 1}" for k in range(nx)]
    rows = [[r["outer"], r["max_c"], r["inner"]] + list(r["x"]) for r in state.outer_log]
    written += write_csv(os.path.join(outdir, "iterations.csv"), header, rows, cfg,
                         {"unknowns": "relative phases (K > 1) followed by zeta / eps per bump"})
    return written


def run_gauge_check(cfg):
    bc = _bump(cfg, float(cfg["eps"]))
    g = cfg["gauge"]
    spacings = [float(h) for h in g["spacings"]]
    try:
        diffs, d_ext, e_ext = energy.gauge_energy_difference(bc, g["f"], g["params"], spacings)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"gauge.params: {exc}") from exc
    rows = list(zip(spacings, diffs))
    extra = {"extrapolated_difference": d_ext, "extrapolated_energy": e_ext, "relative": abs(d_ext) / abs(e_ext)}
    return write_csv(cfg["output"], ["spacing", "energy_difference"], rows, cfg, extra)


RUNNERS = {
    "groundstate": run_groundstate,
    "field-scan": run_field_scan,
    "ansatz": run_ansatz,
    "residual-scaling": run_residual_scaling,
    "energy-expansion": run_energy_expansion,
    "landscape": run_landscape,
    "solve": run_solve,
    "gauge-check": run_gauge_check,
}


def run_config(raw: dict) -> list:
    """Validate ``raw`` and run it; returns the written file paths."""
    cfg = validate(raw)
    return RUNNERS[cfg["kind"]](cfg)
