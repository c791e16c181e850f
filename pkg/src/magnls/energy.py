"""Residual of the approximate solution, the energy functional and its expansion in eps."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import ansatz, grid
from .errors import IllConditionedFit
from .field import curl_invariant, gauge_shift
from .groundstate import RadialProfile, eval_profile, radial_integral

__all__ = [
    "ExpansionConstants",
    "ScalingReport",
    "EnergyBreakdown",
    "power_term",
    "residual",
    "residual_leading_order",
    "energy",
    "expansion_constants",
    "loglog_slope",
    "fit_expansion",
    "landscape_scan",
    "richardson",
    "ansatz_energy",
    "gauge_transform",
    "gauge_energy_difference",
]


@dataclass(frozen=True)
class ExpansionConstants:
    a0: float
    b0: float
    p: float
    dim: int


@dataclass
class ScalingReport:
    eps_list: np.ndarray
    values: np.ndarray
    fitted_slope: float
    fit_residual: float
    extra: dict = field(default_factory=dict)


@dataclass(frozen=True)
class EnergyBreakdown:
    total: float
    kinetic: float
    mass: float
    potential: float


def power_term(u, p):
    """|u|^(p-1) u, nodewise."""
    return np.abs(u) ** (p - 1) * u


def residual(u: grid.PatchedField, cfg, form: str = "symmetric") -> grid.PatchedField:
    """(i grad + A(eps y))^2 u + u - |u|^(p-1) u."""
    H = grid.magnetic_laplacian(u, cfg.potential, cfg.eps, form=form)
    return H.zip(u, lambda a, b: a + b - power_term(b, cfg.p))


def residual_leading_order(cfg, m: int = 0):
    """eps^2 parts of R_{m,1} and R_{m,2} on patch m.

    R e^{-i theta_m} = R_{m,1} + i R_{m,2}; the eps^3 and higher terms are left out.
    Returned as real fields (zero on the other patches).
    """
    J = np.asarray(cfg.potential.jac(cfg.centers[m]), dtype=float).reshape(cfg.dim, cfg.dim)
    H = np.asarray(cfg.potential.hess(cfg.centers[m]), dtype=float).reshape((cfg.dim,) * 3)
    s = ansatz._offsets(cfg)
    r = np.linalg.norm(s, axis=-1)
    w, wr = eval_profile(cfg.profile, r)
    with np.errstate(invalid="ignore", divide="ignore"):
        # w'(r)/r, finite at the origin with limit w''(0)
        q = np.where(r > 0, wr / np.where(r > 0, r, 1.0), cfg.profile.second_derivative(0.0))
    Js = s @ J.T
    JTs = s @ J
    quad = np.einsum("...i,...i->...", s, Js)
    eps2 = cfg.eps**2

    r1 = (
        np.sum(Js * Js, axis=-1) * w
        - (np.sum(Js * Js, axis=-1) + np.sum(Js * JTs, axis=-1)) * w
        - quad**2 * q
        - 0.5 * np.trace(J) * quad * w
        - (cfg.p - 1) / 8.0 * quad**2 * w**cfg.p
    )
    grad_div = np.einsum("iij->j", H)
    r2 = np.einsum("ijk,...j,...k,...i->...", H, s, s, s) * q + (s @ grad_div) * w
    f1 = ansatz._on_patch(cfg, m, eps2 * r1).map(np.real)
    f2 = ansatz._on_patch(cfg, m, eps2 * r2).map(np.real)
    return f1, f2


def energy(u: grid.PatchedField, cfg) -> EnergyBreakdown:
    """E(u) = 1/2 int |i grad u + A u|^2 + 1/2 int |u|^2 - 1/(p+1) int |u|^(p+1)."""
    g = grid.magnetic_gradient(u, cfg.potential, cfg.eps)
    kin = 0.5 * float(grid.integrate(g.map(lambda v: np.sum(np.abs(v) ** 2, axis=0))).real)
    mass = 0.5 * float(grid.integrate(u.map(lambda v: np.abs(v) ** 2)).real)
    pot = float(grid.integrate(u.map(lambda v: np.abs(v) ** (cfg.p + 1))).real) / (cfg.p + 1)
    return EnergyBreakdown(kin + mass - pot, kin, mass, pot)


def richardson(values, ratio=2.0, orders=(4, 6)):
    """Repeated Richardson extrapolation of values computed at h, h/ratio, h/ratio^2, ..."""
    table = [float(v) for v in values]
    for q in orders:
        if len(table) < 2:
            break
        f = ratio**q
        table = [(f * b - a) / (f - 1) for a, b in zip(table[:-1], table[1:])]
    return table[-1]


def ansatz_energy(cfg, extrapolate: bool = True) -> float:
    """E(W) for ``cfg``; with ``extrapolate`` the O(h^4) error is removed using h and h/2."""
    e = energy(ansatz.build_ansatz(cfg), cfg).total
    if not extrapolate:
        return e
    fine = cfg.with_(spacing=cfg.spacing / 2)
    e2 = energy(ansatz.build_ansatz(fine), fine).total
    return richardson([e, e2], orders=(4,))


def gauge_transform(u: grid.PatchedField, cfg, f_preset: str, params: dict):
    """Return (u exp(i f(eps y)/eps), cfg with A + grad f)."""
    pot = gauge_shift(cfg.potential, f_preset, params)
    cfg2 = cfg.with_(potential=pot)
    vals = []
    for m, (pt, v) in enumerate(zip(u.patches, u.values)):
        x = cfg.anchors[m] + cfg.eps * pt.offsets()
        vals.append(v * np.exp(1j * pot.gauge_function(x) / cfg.eps))
    return grid.PatchedField(u.patches, vals, cfg2), cfg2


def gauge_energy_difference(cfg, f_preset: str, params: dict, spacings=(0.25, 0.125, 0.0625)):
    """E(gauge-transformed W) - E(W) on a sequence of spacings, and its extrapolation.

    The discrete energy is gauge invariant up to O(h^4); two Richardson levels
    (orders 4 and 6) remove the leading terms.
    """
    diffs, base = [], []
    for h in spacings:
        c = cfg.with_(spacing=h)
        u = ansatz.build_ansatz(c)
        u2, c2 = gauge_transform(u, c, f_preset, params)
        e1, e2 = energy(u, c).total, energy(u2, c2).total
        diffs.append(e2 - e1)
        base.append(e1)
    return np.array(diffs), richardson(diffs), richardson(base)


def expansion_constants(profile: RadialProfile, p: float | None = None, dim: int | None = None):
    """A0 = (p-1)/(2(p+1)) int w^(p+1) and B0 = 1/4 int y_1^2 w^2 over R^N."""
    p = profile.p if p is None else p
    dim = profile.dim if dim is None else dim
    if p != profile.p or dim != profile.dim:
        raise ValueError("profile does not match (p, dim)")
    a0 = (p - 1) / (2 * (p + 1)) * radial_integral(profile, lambda r, w, dw: w ** (p + 1))
    # int y_1^2 f(|y|) = (1/N) int |y|^2 f(|y|)
    b0 = radial_integral(profile, lambda r, w, dw: r**2 * w**2) / (4 * dim)
    return ExpansionConstants(a0, b0, p, dim)


def loglog_slope(eps_list, values):
    """Least-squares slope of log(values) against log(eps) and the rms misfit."""
    x, y = np.log(np.asarray(eps_list, dtype=float)), np.log(np.asarray(values, dtype=float))
    coef, res, *_ = np.polyfit(x, y, 1, full=True)
    rms = math.sqrt(float(res[0]) / x.size) if res.size else 0.0
    return float(coef[0]), rms


def fit_expansion(eps_list, energies, quartic: bool = False, max_cond: float = 1e10):
    """Least squares of E against 1, eps^2 (and eps^4).

    Returns
    -------
    c0, c2 : float
    report : ScalingReport
        ``fitted_slope`` is the log-log slope of E - c0 against eps.
    """
    eps = np.asarray(eps_list, dtype=float)
    E = np.asarray(energies, dtype=float)
    ncoef = 3 if quartic else 2
    need = max(4, ncoef + 1)
    if eps.size < need:
        raise IllConditionedFit(f"need at least {need} eps values, got {eps.size}")
    if np.any(np.diff(eps) >= 0):
        raise IllConditionedFit("eps list must be strictly decreasing")
    cols = [np.ones_like(eps), eps**2] + ([eps**4] if quartic else [])
    M = np.stack(cols, axis=1)
    cond = np.linalg.cond(M)
    if not cond < max_cond:
        raise IllConditionedFit(f"design matrix condition number {cond:.3g}")
    coef, *_ = np.linalg.lstsq(M, E, rcond=None)
    misfit = E - M @ coef
    dev = np.abs(E - coef[0])
    slope = loglog_slope(eps, dev)[0] if np.all(dev > 0) else math.nan
    rep = ScalingReport(
        eps, E, slope, float(np.sqrt(np.mean(misfit**2))),
        {"cond": float(cond), "coef": coef.tolist()},
    )
    return float(coef[0]), float(coef[1]), rep


def landscape_scan(potential, profile, eps, box, n, half_width=16.0, spacing=0.25, recenter=True):
    """E(W(zeta)) for a single bump on an n x n grid of centres in ``box``.

    Returns a structured array with fields zeta (N,), energy and curl.
    """
    lo, hi = np.asarray(box[0], dtype=float), np.asarray(box[1], dtype=float)
    axes = [np.linspace(lo[k], hi[k], n) for k in range(potential.dim)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, potential.dim)
    rows = np.zeros(
        pts.shape[0], dtype=[("zeta", float, (potential.dim,)), ("energy", float), ("curl", float)]
    )
    for k, z in enumerate(pts):
        pot = ansatz.recenter_gauge(potential, z) if recenter else potential
        cfg = ansatz.make_config(pot, profile, eps, [z], half_width=half_width, spacing=spacing)
        rows[k] = (z, energy(ansatz.build_ansatz(cfg), cfg).total, float(curl_invariant(potential, z)))
    return rows
