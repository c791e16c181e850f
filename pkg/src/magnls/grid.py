"""Tensor-grid patches in the blown-up variable y = x / eps.

Each concentration point owns one axis-aligned patch centred on a node.
Fields are complex arrays, one per patch; operators act patch by patch and
treat values outside a patch as zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.integrate import trapezoid

from .errors import BadGeometry

__all__ = [
    "Patch",
    "PatchedField",
    "make_patch",
    "check_disjoint",
    "d1",
    "d2",
    "d1_onesided",
    "laplacian",
    "potential_on_patch",
    "magnetic_gradient",
    "magnetic_laplacian",
    "integrate",
    "l2_norm",
    "inner",
]

MIN_HALF_WIDTH = 10.0


@dataclass(frozen=True)
class Patch:
    center: np.ndarray
    half_width: float
    spacing: float

    @property
    def dim(self) -> int:
        return self.center.size

    @property
    def half_nodes(self) -> int:
        return int(math.floor(self.half_width / self.spacing + 1e-9))

    @property
    def nodes_per_axis(self) -> int:
        return 2 * self.half_nodes + 1

    @property
    def shape(self) -> tuple:
        return (self.nodes_per_axis,) * self.dim

    def offsets_1d(self) -> np.ndarray:
        m = self.half_nodes
        return np.arange(-m, m + 1) * self.spacing

    def offsets(self) -> np.ndarray:
        """y - center at every node, shape ``shape + (dim,)``."""
        ax = self.offsets_1d()
        return np.stack(np.meshgrid(*([ax] * self.dim), indexing="ij"), axis=-1)

    def coords(self) -> np.ndarray:
        return self.center + self.offsets()

    def zeros(self, dtype=complex) -> np.ndarray:
        return np.zeros(self.shape, dtype=dtype)


def make_patch(center, half_width: float, spacing: float) -> Patch:
    center = np.atleast_1d(np.asarray(center, dtype=float))
    if not spacing > 0:
        raise BadGeometry(f"spacing must be positive, got {spacing}")
    if half_width < MIN_HALF_WIDTH:
        raise BadGeometry(f"half_width {half_width} below {MIN_HALF_WIDTH} does not cover the profile")
    return Patch(center, float(half_width), float(spacing))


def check_disjoint(patches) -> None:
    for a in range(len(patches)):
        for b in range(a + 1, len(patches)):
            pa, pb = patches[a], patches[b]
            dist = float(np.linalg.norm(pa.center - pb.center))
            if dist < pa.half_width + pb.half_width:
                raise BadGeometry(
                    f"patches {a} and {b} overlap: centre distance {dist:g} < "
                    f"{pa.half_width + pb.half_width:g}"
                )


@dataclass
class PatchedField:
    patches: list
    values: list
    meta: Any = field(default=None, repr=False)

    def __post_init__(self):
        check_disjoint(self.patches)
        for p, v in zip(self.patches, self.values):
            if v.shape[-p.dim :] != p.shape:
                raise BadGeometry(f"value array shape {v.shape} does not match patch {p.shape}")

    # elementwise helpers; fields built from the same patches combine nodewise
    def _new(self, values):
        return PatchedField(self.patches, values, self.meta)

    def map(self, fn):
        return self._new([fn(v) for v in self.values])

    def zip(self, other, fn):
        return self._new([fn(a, b) for a, b in zip(self.values, other.values)])

    def __add__(self, other):
        if isinstance(other, PatchedField):
            return self.zip(other, np.add)
        return self.map(lambda v: v + other)

    def __sub__(self, other):
        if isinstance(other, PatchedField):
            return self.zip(other, np.subtract)
        return self.map(lambda v: v - other)

    def __mul__(self, other):
        if isinstance(other, PatchedField):
            return self.zip(other, np.multiply)
        return self.map(lambda v: v * other)

    __rmul__ = __mul__
    __radd__ = __add__

    def __neg__(self):
        return self.map(np.negative)

    def conj(self):
        return self.map(np.conj)

    def abs(self):
        return self.map(np.abs)

    def copy(self):
        return self.map(np.copy)

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.values)

    def max_abs(self) -> float:
        return max(float(np.max(np.abs(v))) for v in self.values)

    @classmethod
    def zeros_like(cls, other, dtype=complex):
        return cls(other.patches, [p.zeros(dtype) for p in other.patches], other.meta)

    # flat real view used by the Krylov solvers
    def to_real_vector(self) -> np.ndarray:
        parts = []
        for v in self.values:
            c = np.asarray(v, dtype=complex).ravel()
            parts.append(c.real)
            parts.append(c.imag)
        return np.concatenate(parts)

    @classmethod
    def from_real_vector(cls, template, vec):
        values, k = [], 0
        for p in template.patches:
            n = int(np.prod(p.shape))
            re = vec[k : k + n]
            im = vec[k + n : k + 2 * n]
            values.append((re + 1j * im).reshape(p.shape))
            k += 2 * n
        return cls(template.patches, values, template.meta)


# ----------------------------------------------------------------------------
# stencils

_C1 = (1.0 / 12.0, -8.0 / 12.0, 0.0, 8.0 / 12.0, -1.0 / 12.0)
_C2 = (-1.0 / 12.0, 16.0 / 12.0, -30.0 / 12.0, 16.0 / 12.0, -1.0 / 12.0)


def _stencil_zero(u, axis, h, coef, power):
    """Five-point central stencil with zero values beyond the patch edge."""
    n = u.shape[axis]
    pad = [(0, 0)] * u.ndim
    pad[axis] = (2, 2)
    up = np.pad(u, pad)
    out = np.zeros_like(u)
    for k, c in enumerate(coef):
        if c == 0.0:
            continue
        sl = [slice(None)] * u.ndim
        sl[axis] = slice(k, k + n)
        out += c * up[tuple(sl)]
    return out / h**power


def d1(u, axis, h):
    """Fourth-order central first derivative; antisymmetric as a matrix."""
    return _stencil_zero(u, axis, h, _C1, 1)


def d2(u, axis, h):
    """Fourth-order central second derivative; symmetric as a matrix."""
    return _stencil_zero(u, axis, h, _C2, 2)


def laplacian(u, h, dims=None):
    dims = range(u.ndim) if dims is None else dims
    out = np.zeros_like(u)
    for ax in dims:
        out += d2(u, ax, h)
    return out


def d1_onesided(u, axis, h):
    """Fourth-order first derivative with one-sided closures at both edges."""
    u = np.moveaxis(u, axis, 0)
    out = np.empty_like(u)
    out[2:-2] = (u[:-4] - 8.0 * u[1:-3] + 8.0 * u[3:-1] - u[4:]) / 12.0
    out[0] = (-25.0 * u[0] + 48.0 * u[1] - 36.0 * u[2] + 16.0 * u[3] - 3.0 * u[4]) / 12.0
    out[1] = (-3.0 * u[0] - 10.0 * u[1] + 18.0 * u[2] - 6.0 * u[3] + u[4]) / 12.0
    out[-1] = -(-25.0 * u[-1] + 48.0 * u[-2] - 36.0 * u[-3] + 16.0 * u[-4] - 3.0 * u[-5]) / 12.0
    out[-2] = -(-3.0 * u[-1] - 10.0 * u[-2] + 18.0 * u[-3] - 6.0 * u[-4] + u[-5]) / 12.0
    return np.moveaxis(out / h, 0, axis)


# ----------------------------------------------------------------------------
# magnetic operators


def potential_on_patch(patch: Patch, A, eps: float, anchor=None):
    """A(x) and div A(x) at the physical points of the patch nodes.

    The physical point of node y is ``anchor + eps * (y - center)`` with
    ``anchor = eps * center`` unless given.
    """
    anchor = eps * patch.center if anchor is None else np.asarray(anchor, dtype=float)
    x = anchor + eps * patch.offsets()
    a = np.moveaxis(A.eval(x), -1, 0)
    div = A.divergence(x)
    return a, div


def _anchor(field, m, eps):
    meta = field.meta
    anchors = getattr(meta, "anchors", None)
    if anchors is not None:
        return anchors[m]
    return None


def magnetic_gradient(u: PatchedField, A, eps: float) -> PatchedField:
    """(i grad + A(eps y)) u, one vector field per patch with components first."""
    out = []
    for m, (p, v) in enumerate(zip(u.patches, u.values)):
        a, _ = potential_on_patch(p, A, eps, _anchor(u, m, eps))
        comps = [1j * d1_onesided(v, k, p.spacing) + a[k] * v for k in range(p.dim)]
        out.append(np.stack(comps))
    return PatchedField(u.patches, out, u.meta)


def apply_magnetic_laplacian(v, a, div, eps, h, form="symmetric"):
    """Single-patch kernel of ``magnetic_laplacian`` with precomputed A and div A."""
    out = -laplacian(v, h)
    a2 = np.sum(a * a, axis=0)
    if form == "symmetric":
        for k in range(v.ndim):
            out += 1j * (a[k] * d1(v, k, h) + d1(a[k] * v, k, h))
    elif form == "expanded":
        for k in range(v.ndim):
            out += 2j * a[k] * d1(v, k, h)
        out += 1j * eps * div * v
    else:
        raise ValueError(f"unknown form {form!r}")
    out += a2 * v
    return out


def magnetic_laplacian(u: PatchedField, A, eps: float, form: str = "symmetric") -> PatchedField:
    """(i grad + A(eps y))^2 u on every patch.

    ``form="expanded"`` evaluates  -lap u + 2i A.grad u + |A|^2 u + i eps (div A) u.
    ``form="symmetric"`` (default) replaces the two first-order terms by
    i (A.D u + D.(A u)), which is the same operator in the continuum and an
    exactly Hermitian matrix on the grid.
    """
    out = []
    for m, (p, v) in enumerate(zip(u.patches, u.values)):
        a, div = potential_on_patch(p, A, eps, _anchor(u, m, eps))
        out.append(apply_magnetic_laplacian(v, a, div, eps, p.spacing, form))
    return PatchedField(u.patches, out, u.meta)


# ----------------------------------------------------------------------------
# quadrature


def _trapz_nd(v, h):
    for _ in range(v.ndim):
        v = trapezoid(v, dx=h, axis=-1)
    return v


def integrate(s: PatchedField):
    total = 0.0
    for p, v in zip(s.patches, s.values):
        total = total + _trapz_nd(v, p.spacing)
    return total


def l2_norm(u: PatchedField) -> float:
    return math.sqrt(float(integrate(u.map(lambda v: np.abs(v) ** 2))))


def inner(u: PatchedField, v: PatchedField) -> float:
    """Re of the integral of u * conj(v)."""
    return float(np.real(integrate(u.zip(v, lambda a, b: a * np.conj(b)))))
