"""Approximate solutions built from phase-dressed ground states.

For bump m with centre zeta_m (x-units), zeta'_m = zeta_m / eps and
s = y - zeta'_m, the pieces are

    U_m   = w(|s|) exp(i theta_m),   theta_m = sigma_m + A(zeta_m).y
    Psi_m = i psi_m exp(i theta_m),  psi_m = sum_ij d_j A_i(zeta_m) s_i s_j w / 2
    W     = sum_m U_m + eps Psi_m

and the kernel directions Z_{m,0} = i U_m, Z_{m,k} = -d_k w(|s|) exp(i theta_m).

``profile_mode="grid"`` replaces the sampled radial profile by the ground
state of the discrete operator on the patch, so the discretisation error of
the profile does not enter the residual at order one, and d_k w by the
lattice translation modes (see ``grid_kernel_modes``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh, spsolve

from . import grid
from .errors import BadGeometry, ContractionFailure
from .field import PotentialModel, gauge_shift
from .groundstate import RadialProfile, eval_profile

__all__ = [
    "BumpConfig",
    "make_config",
    "recenter_gauge",
    "grid_profile",
    "build_bump",
    "build_correction",
    "verify_correction_ode",
    "build_ansatz",
    "build_kernel_basis",
    "grid_kernel_modes",
    "cutoff",
]

PHASE_GUARD = 0.3


@dataclass(frozen=True)
class BumpConfig:
    """Parameters of a K-bump approximate solution.

    ``centers`` are in x-units with shape (K, N); ``phases`` has length K.
    """

    eps: float
    p: float
    dim: int
    centers: np.ndarray
    phases: np.ndarray
    half_width: float
    spacing: float
    profile: RadialProfile = field(repr=False)
    potential: PotentialModel = field(repr=False)
    profile_mode: str = "grid"
    cutoff_radius: float = 8.0

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.centers, dtype=float))
        ph = np.mod(np.atleast_1d(np.asarray(self.phases, dtype=float)), 2 * math.pi)
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "phases", ph)
        if not self.eps > 0:
            raise BadGeometry(f"eps must be positive, got {self.eps}")
        if c.shape[1] != self.dim or self.potential.dim != self.dim:
            raise BadGeometry("centre and potential dimensions must match dim")
        if ph.size != c.shape[0]:
            raise BadGeometry(f"{c.shape[0]} centres but {ph.size} phases")
        if self.profile.dim != self.dim or self.profile.p != self.p:
            raise BadGeometry("profile was computed for a different (p, dim)")
        if self.profile_mode not in ("grid", "radial"):
            raise BadGeometry(f"unknown profile_mode {self.profile_mode!r}")
        gap = 2 * self.half_width + 1
        for a in range(self.K):
            for b in range(a + 1, self.K):
                d = float(np.linalg.norm(c[a] - c[b])) / self.eps
                if d < gap:
                    raise BadGeometry(
                        f"bumps {a} and {b} are {d:g} apart in y, need at least {gap:g}"
                    )
        amax = np.max(np.linalg.norm(np.atleast_2d(self.potential(c)), axis=-1))
        if self.spacing * amax >= PHASE_GUARD:
            raise BadGeometry(
                f"spacing * |A(zeta)| = {self.spacing * amax:.3g} does not resolve the phase; "
                "refine the grid or recenter the gauge"
            )
        grid.make_patch(np.zeros(self.dim), self.half_width, self.spacing)
        if self.cutoff_radius + 1 >= self.half_width:
            raise BadGeometry("cutoff radius + 1 must stay inside the patch")

    @property
    def K(self) -> int:
        return self.centers.shape[0]

    @property
    def centers_y(self) -> np.ndarray:
        return self.centers / self.eps

    @property
    def anchors(self) -> np.ndarray:
        """Physical points of the patch centres."""
        return self.centers

    def patches(self) -> list:
        return [grid.Patch(cy, float(self.half_width), float(self.spacing)) for cy in self.centers_y]

    def with_(self, **kw) -> "BumpConfig":
        return replace(self, **kw)


def make_config(potential, profile, eps, centers, phases=None, half_width=16.0, spacing=0.25, **kw):
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    if phases is None:
        phases = np.zeros(centers.shape[0])
    return BumpConfig(
        eps=float(eps), p=profile.p, dim=profile.dim, centers=centers, phases=phases,
        half_width=half_width, spacing=spacing, profile=profile, potential=potential, **kw,
    )


def recenter_gauge(potential: PotentialModel, point) -> PotentialModel:
    """Gauge-equivalent potential vanishing at ``point`` (a constant shift of A)."""
    a = np.asarray(potential(np.asarray(point, dtype=float)), dtype=float).reshape(-1)
    return gauge_shift(potential, "linear", {"c": -a})


# ----------------------------------------------------------------------------
# profile samples on a patch

_GRID_CACHE: dict = {}


def _d2_matrix(n, h):
    c = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / (12.0 * h * h)
    return sp.diags([np.full(n - abs(k), c[k + 2]) for k in range(-2, 3)], range(-2, 3), format="csr")


def _grid_laplacian_matrix(n, dim, h):
    d2 = _d2_matrix(n, h)
    eye = sp.identity(n, format="csr")
    out = None
    for k in range(dim):
        mats = [d2 if j == k else eye for j in range(dim)]
        term = mats[0]
        for m in mats[1:]:
            term = sp.kron(term, m, format="csr")
        out = term if out is None else out + term
    return out


def _symmetrize(v):
    """Average over coordinate reflections and permutations of the patch."""
    import itertools

    out = np.zeros_like(v)
    count = 0
    for perm in itertools.permutations(range(v.ndim)):
        t = np.transpose(v, perm)
        for flips in itertools.product((False, True), repeat=v.ndim):
            axes = tuple(k for k, f in enumerate(flips) if f)
            out += np.flip(t, axes) if axes else t
            count += 1
    return out / count


def _discrete_ground_state(profile, patch, tol=1e-13, max_iter=20):
    """Newton for -lap_h w + w - w^p = 0 on the patch, started from the radial profile."""
    n, dim, h, p = patch.nodes_per_axis, patch.dim, patch.spacing, profile.p
    r = np.linalg.norm(patch.offsets(), axis=-1)
    w = np.asarray(eval_profile(profile, r)[0], dtype=float)
    lap = _grid_laplacian_matrix(n, dim, h)
    eye = sp.identity(n**dim, format="csr")
    for _ in range(max_iter):
        f = -grid.laplacian(w, h) + w - np.abs(w) ** (p - 1) * w
        if np.max(np.abs(f)) < tol * max(1.0, profile.w0**p):
            break
        jac = -lap + eye - sp.diags(p * np.abs(w.ravel()) ** (p - 1))
        dw = spsolve(jac.tocsc(), -f.ravel()).reshape(w.shape)
        w = _symmetrize(w + dw)
    else:
        raise ContractionFailure("Newton iteration for the grid ground state did not converge")
    return w


def grid_profile(cfg: BumpConfig):
    """(w, grad w) sampled at the nodes of one patch, relative to its centre.

    ``grad w`` has the component axis first. In ``grid`` mode both come from
    the discrete ground state (gradient by the central difference stencil).
    """
    patch = grid.Patch(np.zeros(cfg.dim), float(cfg.half_width), float(cfg.spacing))
    prof = cfg.profile
    key = (cfg.profile_mode, prof.p, prof.dim, prof.w0, patch.nodes_per_axis, patch.spacing)
    if key not in _GRID_CACHE:
        s = patch.offsets()
        r = np.linalg.norm(s, axis=-1)
        if cfg.profile_mode == "grid":
            w = _discrete_ground_state(prof, patch)
            dw = np.stack([grid.d1(w, k, patch.spacing) for k in range(cfg.dim)])
        else:
            w, wr = eval_profile(prof, r)
            with np.errstate(invalid="ignore", divide="ignore"):
                unit = np.where(r[..., None] > 0, s / np.where(r > 0, r, 1.0)[..., None], 0.0)
            dw = np.moveaxis(wr[..., None] * unit, -1, 0)
        for arr in (w, dw):
            arr.setflags(write=False)
        _GRID_CACHE[key] = (w, dw)
    return _GRID_CACHE[key]


def grid_kernel_modes(cfg: BumpConfig):
    """Translation modes of the discrete linearisation, component axis first.

    The lattice breaks translation invariance, so the stencil derivative of the
    discrete ground state is only an O(h^4) kernel vector. The N eigenvectors
    of -lap_h + 1 - p w_h^(p-1) closest to zero form the lattice counterpart;
    they are rotated within their span to best match the stencil derivative.
    Outside ``grid`` mode this returns the profile gradient.
    """
    w, dw = grid_profile(cfg)
    if cfg.profile_mode != "grid":
        return dw
    n, h, p = w.shape[0], cfg.spacing, cfg.p
    key = ("modes", cfg.profile.p, cfg.profile.dim, cfg.profile.w0, n, h)
    if key not in _GRID_CACHE:
        D = np.stack([d.ravel() for d in dw], axis=1)
        lap = _grid_laplacian_matrix(n, cfg.dim, h)
        L = (-lap + sp.identity(n**cfg.dim) - sp.diags(p * np.abs(w.ravel()) ** (p - 1))).tocsc()
        vals, vecs = eigsh(L, k=cfg.dim + 1, sigma=0.0, which="LM", v0=D.sum(axis=1) + w.ravel())
        order = np.argsort(np.abs(vals))
        small, gap = np.abs(vals[order[cfg.dim - 1]]), np.abs(vals[order[cfg.dim]])
        if not small < 1e-3 * gap:
            # no clean near-kernel: keep the stencil derivative
            modes = dw
        else:
            V = vecs[:, order[: cfg.dim]]
            C, *_ = np.linalg.lstsq(V, D, rcond=None)
            modes = np.moveaxis((V @ C).reshape(w.shape + (cfg.dim,)), -1, 0)
        modes = np.ascontiguousarray(modes)
        modes.setflags(write=False)
        _GRID_CACHE[key] = modes
    return _GRID_CACHE[key]


# ----------------------------------------------------------------------------
# bump pieces


def _phase(cfg: BumpConfig, m: int, s):
    a = np.asarray(cfg.potential(cfg.centers[m]), dtype=float).reshape(-1)
    base = cfg.phases[m] + math.fmod(float(a @ cfg.centers_y[m]), 2 * math.pi)
    return np.exp(1j * (base + s @ a))


def _on_patch(cfg: BumpConfig, m: int, values):
    """PatchedField that carries ``values`` on patch m and zero elsewhere."""
    patches = cfg.patches()
    vals = [np.zeros(pt.shape, dtype=complex) for pt in patches]
    vals[m] = np.asarray(values, dtype=complex)
    return grid.PatchedField(patches, vals, cfg)


def _offsets(cfg):
    return grid.Patch(np.zeros(cfg.dim), float(cfg.half_width), float(cfg.spacing)).offsets()


def _check_index(cfg, m):
    if not 0 <= m < cfg.K:
        raise IndexError(f"bump index {m} out of range for K={cfg.K}")


def build_bump(cfg: BumpConfig, m: int) -> grid.PatchedField:
    _check_index(cfg, m)
    w, _ = grid_profile(cfg)
    return _on_patch(cfg, m, w * _phase(cfg, m, _offsets(cfg)))


def correction_profile(cfg: BumpConfig, m: int):
    """Real psi_m = sum_ij d_j A_i(zeta_m) s_i s_j w / 2 on patch m."""
    _check_index(cfg, m)
    w, _ = grid_profile(cfg)
    s = _offsets(cfg)
    jac = np.asarray(cfg.potential.jac(cfg.centers[m]), dtype=float).reshape(cfg.dim, cfg.dim)
    return 0.5 * np.einsum("...i,ij,...j->...", s, jac, s) * w


def build_correction(cfg: BumpConfig, m: int) -> grid.PatchedField:
    psi = correction_profile(cfg, m)
    return _on_patch(cfg, m, 1j * psi * _phase(cfg, m, _offsets(cfg)))


def build_ansatz(cfg: BumpConfig) -> grid.PatchedField:
    """W + eps Psi; each patch carries only its own bump, tails of the others are dropped."""
    w, _ = grid_profile(cfg)
    s = _offsets(cfg)
    vals = []
    for m in range(cfg.K):
        psi = correction_profile(cfg, m)
        vals.append((w + 1j * cfg.eps * psi) * _phase(cfg, m, s))
    return grid.PatchedField(cfg.patches(), vals, cfg)


def build_kernel_basis(cfg: BumpConfig, m: int) -> list:
    """[Z_{m,0}, Z_{m,1}, ..., Z_{m,N}] on patch m."""
    _check_index(cfg, m)
    w, _ = grid_profile(cfg)
    dw = grid_kernel_modes(cfg)
    ph = _phase(cfg, m, _offsets(cfg))
    out = [_on_patch(cfg, m, 1j * w * ph)]
    # chain rule: d/d zeta'_k of w(|y - zeta'|) is -d_k w
    out += [_on_patch(cfg, m, -dw[k] * ph) for k in range(cfg.dim)]
    return out


def cutoff_values(cfg: BumpConfig, R: float | None = None):
    R = cfg.cutoff_radius if R is None else R
    if R + 1 >= cfg.half_width:
        raise BadGeometry(f"cutoff radius {R} + 1 does not fit in half_width {cfg.half_width}")
    r = np.linalg.norm(_offsets(cfg), axis=-1)
    t = np.clip(r - R, 0.0, 1.0)
    return 1.0 - t * t * (3.0 - 2.0 * t)


def cutoff(cfg: BumpConfig, m: int, R: float | None = None) -> grid.PatchedField:
    """Radial C^1 cutoff: 1 for |s| <= R, 0 for |s| >= R + 1, cubic smoothstep between."""
    _check_index(cfg, m)
    return _on_patch(cfg, m, cutoff_values(cfg, R).astype(complex)).map(np.real)


# ----------------------------------------------------------------------------
# checks


def verify_correction_ode(cfg: BumpConfig, m: int = 0, include_w_term: bool = True) -> float:
    """Largest discrete residual of the equations solved by s_i s_j w / 2.

    For i != j:  L psi_ij = -2 s_j d_i w ;  for i == j:  L psi_ii = -2 s_i d_i w - w,
    with L = -lap + 1 - w^(p-1), over nodes with |s| <= half_width - 2. The
    radial profile is used so the check measures the closed form itself.
    """
    _check_index(cfg, m)
    h = cfg.spacing
    s = _offsets(cfg)
    r = np.linalg.norm(s, axis=-1)
    w, wr = eval_profile(cfg.profile, r)
    with np.errstate(invalid="ignore", divide="ignore"):
        unit = np.where(r[..., None] > 0, s / np.where(r > 0, r, 1.0)[..., None], 0.0)
    grad = wr[..., None] * unit
    inside = r <= cfg.half_width - 2
    worst = 0.0
    for i in range(cfg.dim):
        for j in range(i, cfg.dim):
            q = 0.5 * s[..., i] * s[..., j] * w
            lhs = -grid.laplacian(q, h) + q - np.abs(w) ** (cfg.p - 1) * q
            rhs = -2.0 * s[..., j] * grad[..., i]
            if i == j and include_w_term:
                rhs = rhs - w
            worst = max(worst, float(np.max(np.abs(lhs - rhs)[inside])))
    return worst
