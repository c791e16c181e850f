"""Vector potentials with analytic derivatives, field matrix and its invariants.

Index conventions (all arrays vectorised over leading axes of ``x``)::

    jac[..., i, j]         = d_j A_i
    hess[..., i, j, k]     = d_j d_k A_i
    third[..., i, j, k, l] = d_j d_k d_l A_i
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import MissingParam, UnknownPreset

__all__ = [
    "PotentialModel",
    "FieldMatrix",
    "CriticalPoints",
    "PRESETS",
    "make_potential",
    "field_at",
    "frobenius_sq",
    "curl_invariant",
    "curl_invariant_grad",
    "curl_invariant_hessian",
    "find_field_critical_points",
    "gauge_shift",
    "fd_check",
]


@dataclass(frozen=True)
class PotentialModel:
    dim: int
    eval: Callable
    jac: Callable
    hess: Callable
    third: Callable
    preset_tag: str
    params: dict = field(default_factory=dict)
    box: tuple = (-3.0, 3.0)

    def __call__(self, x):
        return self.eval(x)

    def divergence(self, x):
        return np.trace(self.jac(x), axis1=-2, axis2=-1)

    def grad_divergence(self, x):
        """d_j (div A) = sum_i d_i d_j A_i."""
        return np.einsum("...iij->...j", self.hess(x))

    def hess_divergence(self, x):
        return np.einsum("...iijk->...jk", self.third(x))


@dataclass(frozen=True)
class FieldMatrix:
    entries: np.ndarray
    scalar_b: np.ndarray | float | None = None


# ----------------------------------------------------------------------------
# presets


def _as_points(x, dim):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != dim:
        raise ValueError(f"points must have trailing dimension {dim}, got {x.shape}")
    return x


def _constant(params):
    a = np.asarray(params["a"], dtype=float)
    n = a.size

    def ev(x):
        x = _as_points(x, n)
        return np.broadcast_to(a, x.shape).copy()

    def zeros(order):
        def f(x):
            x = _as_points(x, n)
            return np.zeros(x.shape[:-1] + (n,) * (order + 1))

        return f

    return n, ev, zeros(1), zeros(2), zeros(3)


def _landau(params):
    b = float(params["b"])
    n = int(params.get("dim", 2))
    if n < 2:
        raise ValueError("landau preset needs dim >= 2")
    J = np.zeros((n, n))
    J[0, 1] = -0.5 * b
    J[1, 0] = 0.5 * b

    def ev(x):
        x = _as_points(x, n)
        return x @ J.T

    def jac(x):
        x = _as_points(x, n)
        return np.broadcast_to(J, x.shape[:-1] + (n, n)).copy()

    def hess(x):
        x = _as_points(x, n)
        return np.zeros(x.shape[:-1] + (n,) * 3)

    def third(x):
        x = _as_points(x, n)
        return np.zeros(x.shape[:-1] + (n,) * 4)

    return n, ev, jac, hess, third


_ROT = np.array([[0.0, -1.0], [1.0, 0.0]])


def _gauss_terms(x, center, amp, width, order=3):
    """A_i = amp * g(s) (R s)_i with s = (x - c)/width and g = exp(-|s|^2).

    Returns the value and the x-derivatives up to ``order``.
    """
    s = (x - center) / width
    g = np.exp(-np.sum(s * s, axis=-1))
    M = amp * _ROT
    q = s @ M.T
    if order == 0:
        return (g[..., None] * q,)
    eye = np.eye(2)
    # derivatives of g with respect to s
    g1 = -2.0 * s * g[..., None]
    jac = g1[..., None, :] * q[..., :, None] + g[..., None, None] * M
    if order == 1:
        return g[..., None] * q, jac / width
    g2 = (4.0 * s[..., :, None] * s[..., None, :] - 2.0 * eye) * g[..., None, None]
    sss = s[..., :, None, None] * s[..., None, :, None] * s[..., None, None, :]
    ds = (
        eye[:, :, None] * s[..., None, None, :]
        + eye[:, None, :] * s[..., None, :, None]
        + eye[None, :, :] * s[..., :, None, None]
    )
    g3 = (-8.0 * sss + 4.0 * ds) * g[..., None, None, None]

    val = g[..., None] * q
    hess = (
        g2[..., None, :, :] * q[..., :, None, None]
        + g1[..., None, :, None] * M[:, None, :]
        + g1[..., None, None, :] * M[:, :, None]
    )
    third = (
        g3[..., None, :, :, :] * q[..., :, None, None, None]
        + g2[..., None, :, :, None] * M[:, None, None, :]
        + g2[..., None, :, None, :] * M[:, None, :, None]
        + g2[..., None, None, :, :] * M[:, :, None, None]
    )
    # chain rule for the width scaling: each x-derivative brings 1/width
    return val, jac / width, hess / width**2, third / width**3


def _gaussian_bump(params, centers=None):
    amp = float(params.get("amp", 1.0))
    width = float(params.get("width", 1.0))
    if centers is None:
        centers = [np.asarray(params.get("center", (0.0, 0.0)), dtype=float)]

    def total(x, k):
        x = _as_points(x, 2)
        return sum(_gauss_terms(x, c, amp, width, order=k)[k] for c in centers) * width

    return (
        2,
        lambda x: total(x, 0),
        lambda x: total(x, 1),
        lambda x: total(x, 2),
        lambda x: total(x, 3),
    )


def _double_bump(params):
    sep = float(params.get("separation", 6.0))
    centers = [np.array([-sep / 2, 0.0]), np.array([sep / 2, 0.0])]
    return _gaussian_bump(params, centers)


def _poly_saddle(params):
    """A = (0, b0 x1 + x1^3/3 - x1 x2^2), so B = b0 + x1^2 - x2^2."""
    b0 = float(params.get("b0", 2.0))

    def ev(x):
        x = _as_points(x, 2)
        x1, x2 = x[..., 0], x[..., 1]
        out = np.zeros_like(x)
        out[..., 1] = b0 * x1 + x1**3 / 3.0 - x1 * x2**2
        return out

    def jac(x):
        x = _as_points(x, 2)
        x1, x2 = x[..., 0], x[..., 1]
        out = np.zeros(x.shape[:-1] + (2, 2))
        out[..., 1, 0] = b0 + x1**2 - x2**2
        out[..., 1, 1] = -2.0 * x1 * x2
        return out

    def hess(x):
        x = _as_points(x, 2)
        x1, x2 = x[..., 0], x[..., 1]
        out = np.zeros(x.shape[:-1] + (2, 2, 2))
        out[..., 1, 0, 0] = 2.0 * x1
        out[..., 1, 0, 1] = out[..., 1, 1, 0] = -2.0 * x2
        out[..., 1, 1, 1] = -2.0 * x1
        return out

    def third(x):
        x = _as_points(x, 2)
        out = np.zeros(x.shape[:-1] + (2, 2, 2, 2))
        out[..., 1, 0, 0, 0] = 2.0
        out[..., 1, 0, 1, 1] = out[..., 1, 1, 0, 1] = out[..., 1, 1, 1, 0] = -2.0
        return out

    return 2, ev, jac, hess, third


PRESETS = {
    "constant": (_constant, ("a",)),
    "landau": (_landau, ("b",)),
    "gaussian_bump": (_gaussian_bump, ()),
    "double_bump": (_double_bump, ()),
    "poly_saddle": (_poly_saddle, ()),
}

_DEFAULT_BOX = {"double_bump": (-5.0, 5.0)}


def make_potential(preset: str, params: dict | None = None) -> PotentialModel:
    """Build a preset potential with hand-coded derivatives up to third order."""
    params = dict(params or {})
    if preset not in PRESETS:
        raise UnknownPreset(f"unknown potential preset {preset!r}; choose from {sorted(PRESETS)}")
    builder, required = PRESETS[preset]
    for key in required:
        if key not in params:
            raise MissingParam(f"preset {preset!r} requires parameter {key!r}")
    dim, ev, jac, hess, third = builder(params)
    box = tuple(params.get("box", _DEFAULT_BOX.get(preset, (-3.0, 3.0))))
    return PotentialModel(dim, ev, jac, hess, third, preset, params, box)


# ----------------------------------------------------------------------------
# field matrix and invariants


def field_at(model: PotentialModel, x) -> FieldMatrix:
    """entries[j, k] = d_j A_k - d_k A_j."""
    J = model.jac(x)
    Jt = np.swapaxes(J, -1, -2)
    entries = Jt - J
    scalar_b = entries[..., 0, 1] if model.dim == 2 else None
    return FieldMatrix(entries, scalar_b)


def frobenius_sq(fm: FieldMatrix):
    return np.sum(fm.entries**2, axis=(-2, -1))


def curl_invariant(model: PotentialModel, x):
    """sum_{i,j} (d_i A_j - d_j A_i)^2."""
    J = model.jac(x)
    return np.sum((np.swapaxes(J, -1, -2) - J) ** 2, axis=(-2, -1))


def _field_derivs(model, x):
    J = model.jac(x)
    H = model.hess(x)
    T = model.third(x)
    F = np.swapaxes(J, -1, -2) - J  # F[i, j] = d_i A_j - d_j A_i
    dF = np.swapaxes(H, -2, -3) - H  # dF[i, j, k] = d_k F[i, j]
    ddF = np.swapaxes(T, -3, -4) - T
    return F, dF, ddF


def curl_invariant_grad(model: PotentialModel, x):
    F, dF, _ = _field_derivs(model, x)
    return 2.0 * np.einsum("...ij,...ijk->...k", F, dF)


def curl_invariant_hessian(model: PotentialModel, x):
    F, dF, ddF = _field_derivs(model, x)
    return 2.0 * (
        np.einsum("...ijk,...ijl->...kl", dF, dF) + np.einsum("...ij,...ijkl->...kl", F, ddF)
    )


@dataclass
class CriticalPoints:
    points: list
    kinds: list
    constant_field: bool = False
    dropped_seeds: int = 0
    hessian_eigs: list = field(default_factory=list)

    def __iter__(self):
        return iter(zip(self.points, self.kinds))

    def __len__(self):
        return len(self.points)


def _classify(eigs, degenerate_tol):
    if np.any(np.abs(eigs) < degenerate_tol):
        return "degenerate"
    if np.all(eigs < 0):
        return "max"
    if np.all(eigs > 0):
        return "min"
    return "saddle"


def find_field_critical_points(
    model: PotentialModel,
    box=None,
    seeds: int = 17,
    grad_tol: float = 1e-10,
    degenerate_tol: float = 1e-8,
    max_iter: int = 60,
    dedup: float = 1e-6,
) -> CriticalPoints:
    """Newton iteration on the gradient of ``curl_invariant`` from a grid of seeds.

    ``box`` is either ``(lo, hi)`` applied to every axis or a sequence of
    per-axis ``(lo, hi)`` pairs.
    """
    n = model.dim
    box = model.box if box is None else box
    box = np.asarray(box, dtype=float)
    if box.ndim == 1:
        box = np.tile(box, (n, 1))
    lo, hi = box[:, 0], box[:, 1]
    axes = [np.linspace(lo[k], hi[k], seeds) for k in range(n)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)

    g_all = curl_invariant_grad(model, grid)
    h_all = curl_invariant_hessian(model, grid)
    if np.max(np.abs(g_all)) < 1e-14 and np.max(np.abs(h_all)) < 1e-12:
        center = 0.5 * (lo + hi)
        eigs = np.linalg.eigvalsh(curl_invariant_hessian(model, center))
        return CriticalPoints([center], ["degenerate"], True, 0, [eigs])

    points, kinds, eig_list = [], [], []
    dropped = 0
    for x in grid:
        x = x.copy()
        ok = False
        for _ in range(max_iter):
            g = curl_invariant_grad(model, x)
            H = curl_invariant_hessian(model, x)
            step = np.linalg.lstsq(H, -g, rcond=1e-12)[0]
            # a tiny gradient alone is not enough: far-field plateaus are flat
            if np.linalg.norm(g) < grad_tol and np.linalg.norm(step) < 1e-8 * (1 + np.linalg.norm(x)):
                ok = True
                break
            x = x + step
            if np.any(x < lo - 1e-9) or np.any(x > hi + 1e-9) or not np.all(np.isfinite(x)):
                break
        if not ok:
            dropped += 1
            continue
        if any(np.linalg.norm(x - q) < dedup for q in points):
            continue
        eigs = np.linalg.eigvalsh(curl_invariant_hessian(model, x))
        points.append(x)
        kinds.append(_classify(eigs, degenerate_tol))
        eig_list.append(eigs)
    return CriticalPoints(points, kinds, False, dropped, eig_list)


# ----------------------------------------------------------------------------
# gauge transformations


def gauge_shift(model: PotentialModel, f_preset: str, params: dict) -> PotentialModel:
    """Return the potential A + grad f.

    ``linear``: f = c.x.  ``quadratic``: f = x^T M x / 2, whose gradient is
    the symmetric part of M applied to x.
    """
    n = model.dim
    if f_preset == "linear":
        c = np.asarray(params["c"], dtype=float)

        def ev(x):
            return model.eval(x) + c

        jac = model.jac
        phase = lambda x: np.asarray(x, dtype=float) @ c  # noqa: E731
    elif f_preset == "quadratic":
        M = np.asarray(params["M"], dtype=float).reshape(n, n)
        S = 0.5 * (M + M.T)

        def ev(x):
            return model.eval(x) + np.asarray(x, dtype=float) @ S.T

        def jac(x):
            return model.jac(x) + S

        phase = lambda x: 0.5 * np.einsum("...i,ij,...j->...", x, S, x)  # noqa: E731
    else:
        raise UnknownPreset(f"unknown gauge function {f_preset!r}; use 'linear' or 'quadratic'")
    out = PotentialModel(
        n,
        ev,
        jac,
        model.hess,
        model.third,
        f"{model.preset_tag}+grad({f_preset})",
        {**model.params, "gauge": {f_preset: params}},
        model.box,
    )
    object.__setattr__(out, "gauge_function", phase)
    return out


def fd_check(model: PotentialModel, points, h: float = 1e-4):
    """Largest central-difference mismatch of jac/hess/third at ``points``."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = model.dim
    worst = {}
    for name, lower, upper in (
        ("jac", model.eval, model.jac),
        ("hess", model.jac, model.hess),
        ("third", model.hess, model.third),
    ):
        err = 0.0
        for k in range(n):
            e = np.zeros(n)
            e[k] = h
            fd = (lower(pts + e) - lower(pts - e)) / (2 * h)
            exact = upper(pts)[..., k]
            err = max(err, float(np.max(np.abs(fd - exact))))
        worst[name] = err
    return worst
