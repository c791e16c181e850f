"""Discrete Lyapunov-Schmidt reduction around the approximate solution W.

The correction phi solves

    L phi = -R + N(phi) + sum_{m,i} c_{m,i} chi_m Z_{m,i},
    <chi_m Z_{m,i}, phi> = 0,

where L is the linearisation at W. The linear problem is solved by MINRES on
P L P with P the orthogonal projector off span{chi_m Z_{m,i}}, and the
multipliers are recovered from the range component of L phi - rhs. The outer
loop moves the centres (and relative phases) until all c_{m,i} vanish.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, minres

from . import ansatz, grid
from .energy import power_term, residual
from .errors import BadGeometry, ContractionFailure, KrylovStall, OuterDivergence, SeedRejected

__all__ = [
    "ReductionState",
    "LinearizedProblem",
    "nonlinear_remainder",
    "apply_linearized",
    "solve_projected",
    "solve_inner",
    "reduce_outer",
    "cutoff_sensitivity",
    "PeakLocation",
    "peak_location",
]

log = logging.getLogger(__name__)

ZERO_GUARD = 1e-30


@dataclass
class ReductionState:
    cfg: ansatz.BumpConfig
    phi: grid.PatchedField
    c: np.ndarray
    inner_iters: int = 0
    outer_iters: int = 0
    residual_norm: float = math.nan
    ratios: list = field(default_factory=list)
    krylov_iters: list = field(default_factory=list)
    multiplier_bound: float = math.nan
    history: list = field(default_factory=list)
    outer_log: list = field(default_factory=list)


class LinearizedProblem:
    """Linearisation at W with its constraint basis; real-vector interface for Krylov solvers."""

    def __init__(self, cfg: ansatz.BumpConfig, W: grid.PatchedField | None = None, form: str = "symmetric"):
        self.cfg = cfg
        self.form = form
        self.W = ansatz.build_ansatz(cfg) if W is None else W
        self.patches = self.W.patches
        self.h = cfg.spacing
        self.pot = [
            grid.potential_on_patch(pt, cfg.potential, cfg.eps, cfg.anchors[m])
            for m, pt in enumerate(self.patches)
        ]
        p = cfg.p
        self.g1, self.g2 = [], []
        for v in self.W.values:
            mod = np.abs(v)
            small = mod < ZERO_GUARD
            safe = np.where(small, 1.0, mod)
            self.g1.append(np.where(small, 0.0, safe ** (p - 1)))
            self.g2.append(np.where(small, 0.0, (p - 1) * safe ** (p - 3)))

        chi = ansatz.cutoff_values(cfg)
        cols = []
        for m in range(cfg.K):
            for z in ansatz.build_kernel_basis(cfg, m):
                cols.append(z.map(lambda v: chi * v).to_real_vector())
        self.B = np.stack(cols, axis=1)
        self.G = self.B.T @ self.B
        self.size = self.B.shape[0]
        self.n_mult = self.B.shape[1]

    # complex-field level
    def apply(self, values):
        out = []
        for (a, div), v, W, g1, g2 in zip(self.pot, values, self.W.values, self.g1, self.g2):
            Hv = grid.apply_magnetic_laplacian(v, a, div, self.cfg.eps, self.h, self.form)
            out.append(Hv + v - g1 * v - g2 * np.real(np.conj(W) * v) * W)
        return out

    def field(self, values):
        return grid.PatchedField(self.patches, values, self.cfg)

    # real-vector level
    def to_vec(self, f: grid.PatchedField):
        return f.to_real_vector()

    def to_values(self, x):
        return grid.PatchedField.from_real_vector(self.W, x).values

    def matvec(self, x):
        return self.field(self.apply(self.to_values(x))).to_real_vector()

    def project(self, x):
        return x - self.B @ np.linalg.solve(self.G, self.B.T @ x)

    def constraint_values(self, phi: grid.PatchedField):
        """inner(chi Z_{m,i}, phi) with the grid quadrature."""
        return self.B.T @ phi.to_real_vector() * self.h**self.cfg.dim

    def solve(self, rhs: grid.PatchedField, x0=None, rtol=1e-11, maxiter=5000):
        """Return (phi, c, info) for L phi = rhs + B c, B^T phi = 0."""
        r = rhs.to_real_vector()
        b = self.project(r)
        bnorm = float(np.linalg.norm(b))
        # a right-hand side inside the constraint span leaves only round-off
        if bnorm <= 1e-13 * float(np.linalg.norm(r)) or bnorm == 0.0:
            x = np.zeros(self.size)
            iters = 0
        else:
            op = LinearOperator(
                (self.size, self.size), matvec=lambda v: self.project(self.matvec(self.project(v))), dtype=float
            )
            count = [0]

            def cb(_):
                count[0] += 1

            x = None if x0 is None else self.project(x0.to_real_vector())
            target = max(1e3 * rtol, 1e-8)
            # minres stops on a backward-error test scaled by |A||x|; restart until
            # the residual relative to the right-hand side is small as well
            for _ in range(4):
                x, _ = minres(op, b, x0=x, rtol=rtol, maxiter=maxiter, callback=cb)
                x = self.project(x)
                rel = float(np.linalg.norm(self.project(self.matvec(x)) - b)) / bnorm
                if rel < 1e-2 * target or count[0] >= maxiter:
                    break
            iters = count[0]
            if not rel < target:
                raise KrylovStall(
                    f"MINRES reached relative residual {rel:.2e} after {iters} iterations"
                )
        Lx = self.matvec(x)
        c = np.linalg.solve(self.G, self.B.T @ (Lx - rhs.to_real_vector()))
        phi = grid.PatchedField.from_real_vector(self.W, x)
        return phi, c, {"iterations": iters, "rhs_norm": bnorm}


def nonlinear_remainder(W: grid.PatchedField, phi: grid.PatchedField, p: float) -> grid.PatchedField:
    """N(phi) = |W+phi|^(p-1)(W+phi) - |W|^(p-1)W - (p-1)|W|^(p-3)Re(conj W phi)W - |W|^(p-1)phi."""
    out = []
    for v, f in zip(W.values, phi.values):
        mod = np.abs(v)
        small = mod < ZERO_GUARD
        safe = np.where(small, 1.0, mod)
        lin = np.where(small, 0.0, (p - 1) * safe ** (p - 3) * np.real(np.conj(v) * f) * v + safe ** (p - 1) * f)
        out.append(power_term(v + f, p) - power_term(v, p) - lin)
    return grid.PatchedField(W.patches, out, W.meta)


def apply_linearized(phi: grid.PatchedField, cfg, W=None) -> grid.PatchedField:
    prob = LinearizedProblem(cfg, W)
    return prob.field(prob.apply(phi.values))


def solve_projected(rhs: grid.PatchedField, cfg, problem: LinearizedProblem | None = None, **kw):
    """Solve L phi = rhs + sum c chi Z with phi orthogonal to every chi Z.

    Returns
    -------
    phi : PatchedField
    c : ndarray, shape (K, N+1)
    """
    prob = LinearizedProblem(cfg) if problem is None else problem
    phi, c, _ = prob.solve(rhs, **kw)
    return phi, c.reshape(cfg.K, cfg.dim + 1)


def solve_inner(cfg, tol: float = 1e-11, max_iter: int = 40, phi0=None, problem=None, rtol=1e-12) -> ReductionState:
    """Fixed-point iteration phi <- T(-R + N(phi)) until successive iterates differ by < tol (L2)."""
    prob = LinearizedProblem(cfg) if problem is None else problem
    W = prob.W
    R = residual(W, cfg)
    phi = grid.PatchedField.zeros_like(W) if phi0 is None else grid.PatchedField(W.patches, [v.copy() for v in phi0.values], cfg)
    state = ReductionState(cfg, phi, np.zeros((cfg.K, cfg.dim + 1)))
    prev_step = None
    rhs_norm = grid.l2_norm(R)
    for k in range(1, max_iter + 1):
        rhs = nonlinear_remainder(W, phi, cfg.p) - R
        new, c, info = prob.solve(rhs, x0=phi, rtol=rtol)
        step = grid.l2_norm(new - phi)
        state.krylov_iters.append(info["iterations"])
        if prev_step is not None and prev_step > 0:
            state.ratios.append(step / prev_step)
        state.history.append({"iter": k, "step": step, "phi_norm": grid.l2_norm(new), "krylov": info["iterations"]})
        log.debug("inner %d: step %.3e krylov %d", k, step, info["iterations"])
        phi = new
        state.c = c.reshape(cfg.K, cfg.dim + 1)
        if not np.isfinite(step):
            raise ContractionFailure("fixed-point iterate is not finite", ratio=math.nan)
        # below this the step is dominated by the Krylov tolerance
        floor = 50.0 * rtol * grid.l2_norm(new)
        if step < max(tol, floor):
            break
        # diverging or stagnating (guard against a ratio estimate from tiny steps)
        if prev_step is not None and step > 0.9 * prev_step and k > 3:
            raise ContractionFailure(
                f"fixed-point iteration stagnates: ratio {step / prev_step:.3f} at step {k}",
                ratio=step / prev_step,
            )
        prev_step = step
    else:
        raise ContractionFailure(
            f"no convergence in {max_iter} iterations (last step {step:.2e})",
            ratio=state.ratios[-1] if state.ratios else None,
        )
    state.phi = phi
    state.inner_iters = k
    # residual of the projected nonlinear equation at the final iterate
    Lphi = prob.field(prob.apply(phi.values))
    eq = Lphi + R - nonlinear_remainder(W, phi, cfg.p) - prob.field(
        prob.to_values(prob.B @ state.c.ravel())
    )
    state.residual_norm = grid.l2_norm(eq)
    state.multiplier_bound = float(np.max(np.abs(state.c))) / rhs_norm if rhs_norm > 0 else 0.0
    return state


# ----------------------------------------------------------------------------
# outer reduction


def _unpack(cfg0, x, base=None):
    """Parameter vector -> config. K=1: zeta'. K>1: relative phases then all zeta'.

    With ``base`` given, the potential is ``base`` regauged to vanish at the first centre.
    """
    K, n = cfg0.K, cfg0.dim
    if K == 1:
        centers = cfg0.eps * x.reshape(1, n)
        phases = cfg0.phases
    else:
        phases = np.concatenate([[cfg0.phases[0]], cfg0.phases[0] + x[: K - 1]])
        centers = cfg0.eps * x[K - 1 :].reshape(K, n)
    pot = cfg0.potential if base is None else ansatz.recenter_gauge(base, centers[0])
    return cfg0.with_(centers=centers, phases=phases, potential=pot)


def _pack(cfg):
    if cfg.K == 1:
        return cfg.centers_y.ravel().copy()
    rel = np.angle(np.exp(1j * (cfg.phases[1:] - cfg.phases[0])))
    return np.concatenate([rel, cfg.centers_y.ravel()])


def _c_vector(cfg, c):
    # K=1: the phase multiplier follows from the others once they vanish
    return c[0, 1:].copy() if cfg.K == 1 else c.ravel().copy()


def reduce_outer(
    cfg0,
    tol: float = 1e-9,
    max_iter: int = 25,
    fd_step: float = 1e-3,
    max_step: float = 0.1,
    inner_tol: float | None = None,
    recenter: bool | None = None,
):
    """Damped Newton on (sigma, zeta') -> c with a finite-difference Jacobian.

    Parameters
    ----------
    cfg0 : BumpConfig
        Seed configuration.
    tol : float
        Target for max |c_{m,i}|.
    fd_step : float
        Jacobian step in zeta'-units (and radians for phases).
    max_step : float
        Cap on the centre displacement per Newton step, in x-units.
    recenter : bool, optional
        Regauge so that A vanishes at the current centre on every evaluation
        (default for K = 1). The discrete problem then keeps the symmetries of
        the potential exactly, and the returned solution is for that gauge.

    Returns
    -------
    cfg, state, u : BumpConfig, ReductionState, PatchedField
    """
    inner_tol = 1e-3 * tol if inner_tol is None else inner_tol
    box = cfg0.potential.box
    if np.any(cfg0.centers < box[0]) or np.any(cfg0.centers > box[1]):
        raise SeedRejected(f"seed centres {cfg0.centers.tolist()} outside the working box {box}")

    recenter = cfg0.K == 1 if recenter is None else recenter
    base = cfg0.potential if recenter else None
    cache = {"phi": None}

    def evaluate(x):
        cfg = _unpack(cfg0, x, base)
        st = solve_inner(cfg, tol=inner_tol, phi0=cache["phi"])
        return cfg, st, _c_vector(cfg, st.c)

    x = _pack(cfg0)
    cfg, state, c = evaluate(x)
    cache["phi"] = state.phi
    log_rows = []
    for it in range(max_iter + 1):
        cmax = float(np.max(np.abs(state.c)))
        log_rows.append({"outer": it, "max_c": cmax, "x": x.tolist(), "inner": state.inner_iters})
        log.info("outer %d: max|c| = %.3e", it, cmax)
        if cmax < tol:
            break
        if it == max_iter:
            raise OuterDivergence(f"max|c| = {cmax:.2e} after {max_iter} outer iterations")
        J = np.empty((c.size, x.size))
        for j in range(x.size):
            xp = x.copy()
            xp[j] += fd_step
            J[:, j] = (evaluate(xp)[2] - c) / fd_step
        dx, *_ = np.linalg.lstsq(J, -c, rcond=1e-10)
        ncenter = cfg0.K * cfg0.dim
        if it == 0:
            sv = np.linalg.svd(J, compute_uv=False)
            # the centre block alone must be well posed at the seed
            svc = np.linalg.svd(J[:, -ncenter:], compute_uv=False)
            if not svc[-1] > 1e-6 * svc[0]:
                raise SeedRejected(
                    f"Jacobian of c at the seed is singular (singular values {sv.tolist()})"
                )
        move = cfg0.eps * float(np.max(np.abs(dx[-ncenter:])))
        if move > max_step:
            dx *= max_step / move
        t = 1.0
        cnorm = float(np.linalg.norm(c))
        while True:
            xt = x + t * dx
            cfg_t, st_t, c_t = evaluate(xt)
            if np.linalg.norm(c_t) < (1 - 1e-4 * t) * cnorm or np.max(np.abs(st_t.c)) < tol:
                break
            t *= 0.5
            if t < 1.0 / 64:
                raise OuterDivergence(
                    f"line search failed at outer iteration {it}: |c| = {cnorm:.3e}"
                )
        x, cfg, state, c = xt, cfg_t, st_t, c_t
        cache["phi"] = state.phi
    state.outer_iters = it
    state.outer_log = log_rows
    W = ansatz.build_ansatz(cfg)
    u = W + state.phi
    return cfg, state, u


def cutoff_sensitivity(cfg, radii, phi0=None, **kw) -> dict:
    """max|c| of the inner solve at ``cfg`` for each cutoff radius in ``radii``.

    Radii that do not fit the patch are skipped. Keyword arguments go to ``solve_inner``.
    """
    out = {}
    for R in radii:
        if not R > 0:
            continue
        try:
            c = cfg.with_(cutoff_radius=float(R))
        except BadGeometry:
            continue
        out[float(R)] = float(np.max(np.abs(solve_inner(c, phi0=phi0, **kw).c)))
    return out


# ----------------------------------------------------------------------------
# peaks


@dataclass
class PeakLocation:
    points: np.ndarray
    zero_field: bool = False

    def __iter__(self):
        return iter(self.points)

    def __len__(self):
        return len(self.points)

    def __getitem__(self, k):
        return self.points[k]


def _refine(mod, idx, h):
    """Stationary point of the least-squares quadratic through the 3^N neighbourhood."""
    n = mod.ndim
    if any(i == 0 or i == s - 1 for i, s in zip(idx, mod.shape)):
        return np.zeros(n)
    offs = np.stack(np.meshgrid(*([np.array([-1, 0, 1])] * n), indexing="ij"), axis=-1).reshape(-1, n)
    vals = np.array([mod[tuple(np.asarray(idx) + o)] for o in offs])
    cols = [np.ones(len(offs))] + [offs[:, i] for i in range(n)]
    pairs = [(i, j) for i in range(n) for j in range(i, n)]
    cols += [offs[:, i] * offs[:, j] for i, j in pairs]
    coef, *_ = np.linalg.lstsq(np.stack(cols, axis=1), vals, rcond=None)
    g = coef[1 : n + 1]
    Hm = np.zeros((n, n))
    for (i, j), v in zip(pairs, coef[n + 1 :]):
        if i == j:
            Hm[i, i] = 2 * v
        else:
            Hm[i, j] = Hm[j, i] = v
    if np.any(np.linalg.eigvalsh(Hm) >= 0):
        return np.zeros(n)
    d = -np.linalg.solve(Hm, g)
    if np.max(np.abs(d)) > 1.0:
        return np.zeros(n)
    return d * h


def peak_location(u: grid.PatchedField) -> PeakLocation:
    """Per patch, argmax |u| refined by a quadratic fit; y-units."""
    pts = []
    zero = False
    for pt, v in zip(u.patches, u.values):
        mod = np.abs(v)
        if not np.any(mod > 0):
            zero = True
            pts.append(pt.center.copy())
            continue
        idx = np.unravel_index(int(np.argmax(mod)), mod.shape)
        node = pt.center + (np.asarray(idx) - pt.half_nodes) * pt.spacing
        pts.append(node + _refine(mod, idx, pt.spacing))
    return PeakLocation(np.array(pts), zero)
