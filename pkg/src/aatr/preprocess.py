"""Mumford-Shah smoothing via the Ambrosio-Tortorelli approximation.

The functional minimised over the smoothed field ``u`` and the edge field
``v`` (1 inside smooth regions, towards 0 on edges) is::

    E = sum[(u - g)^2 + beta v^2 |grad u|^2
            + alpha (eps |grad v|^2 + (1 - v)^2 / (4 eps))] * voxel_volume

Gradients are central differences in mm with reflective boundaries, so the
derivative across the first and last plane of each axis is zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .volume import Volume


@dataclass(frozen=True)
class AtParams:
    alpha: float = 1000.0  # edge-length penalty
    beta: float = 0.9  # smoothness weight
    eps: float = 0.1  # edge band width
    max_iters: int = 30
    inner_sweeps: int = 3
    damping: float = 0.8
    tol: float = 1e-6

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0 and 0 < self.eps < 1):
            raise ValueError(f"need alpha > 0, beta > 0, 0 < eps < 1; got {self.alpha, self.beta, self.eps}")
        if self.max_iters < 1 or self.inner_sweeps < 1:
            raise ValueError("max_iters and inner_sweeps must be positive")
        if not 0 < self.damping < 1:
            raise ValueError("damping must lie in (0, 1)")


@dataclass(frozen=True, eq=False)
class AtResult:
    u: Volume
    v: np.ndarray
    energy: np.ndarray  # one entry per half-step, starting with the initial state
    n_iters: int


def _diff(a: np.ndarray, axis: int, h: float) -> np.ndarray:
    """Central difference along ``axis``; zero on the two boundary planes."""
    out = np.zeros_like(a)
    n = a.shape[axis]
    if n >= 3:
        hi = [slice(None)] * 3
        lo = [slice(None)] * 3
        mid = [slice(None)] * 3
        hi[axis], lo[axis], mid[axis] = slice(2, None), slice(None, -2), slice(1, -1)
        out[tuple(mid)] = (a[tuple(hi)] - a[tuple(lo)]) / (2.0 * h)
    return out


def _diff_adjoint(y: np.ndarray, axis: int, h: float) -> np.ndarray:
    """Transpose of ``_diff``: (K^T y)_i = (y_{i-1} - y_{i+1}) / 2h over interior y."""
    out = np.zeros_like(y)
    n = y.shape[axis]
    if n >= 3:
        inner = [slice(None)] * 3
        inner[axis] = slice(1, -1)
        yi = y[tuple(inner)]
        plus = [slice(None)] * 3
        minus = [slice(None)] * 3
        plus[axis], minus[axis] = slice(2, None), slice(None, -2)
        out[tuple(plus)] += yi / (2.0 * h)
        out[tuple(minus)] -= yi / (2.0 * h)
    return out


def _diag_ktwk(w: np.ndarray, axis: int, h: float) -> np.ndarray:
    """Diagonal of K^T diag(w) K, i.e. sum_j w_j (dK_j/du_i)^2."""
    out = np.zeros_like(w)
    n = w.shape[axis]
    if n >= 3:
        inner = [slice(None)] * 3
        inner[axis] = slice(1, -1)
        wi = w[tuple(inner)] / (4.0 * h * h)
        plus = [slice(None)] * 3
        minus = [slice(None)] * 3
        plus[axis], minus[axis] = slice(2, None), slice(None, -2)
        out[tuple(plus)] += wi
        out[tuple(minus)] += wi
    return out


def _grad_sq(a: np.ndarray, spacing) -> np.ndarray:
    return sum(_diff(a, ax, h) ** 2 for ax, h in enumerate(spacing))


def _check_shapes(*arrays):
    shapes = {np.shape(a) for a in arrays}
    if len(shapes) != 1:
        raise ValueError(f"dimension mismatch: {sorted(shapes)}")


def at_energy(g: Volume, u, v, params: AtParams) -> float:
    """Ambrosio-Tortorelli energy of ``(u, v)`` for the observed volume ``g``."""
    u = u.data if isinstance(u, Volume) else u
    gd = g.data
    _check_shapes(gd, u, v)
    return _energy(gd.astype(np.float64), np.asarray(u, np.float64), np.asarray(v, np.float64),
                   g.spacing_mm, g.voxel_volume_mm3, params)


def _energy(g, u, v, spacing, voxvol, p: AtParams) -> float:
    fidelity = np.sum((u - g) ** 2)
    smooth = p.beta * np.sum(v * v * _grad_sq(u, spacing))
    edge = p.alpha * (p.eps * np.sum(_grad_sq(v, spacing)) + np.sum((1.0 - v) ** 2) / (4.0 * p.eps))
    return float((fidelity + smooth + edge) * voxvol)


def _u_step(g, u, v, spacing, p: AtParams):
    # gradient / Hessian-diagonal of E in u (factor 2 and voxel volume cancel)
    w = p.beta * v * v
    grad = u - g
    diag = np.ones_like(u)
    for ax, h in enumerate(spacing):
        grad += _diff_adjoint(w * _diff(u, ax, h), ax, h)
        diag += _diag_ktwk(w, ax, h)
    return u - p.damping * grad / diag


def _v_step(u_gsq, v, spacing, p: AtParams):
    grad = p.beta * u_gsq * v + p.alpha * (v - 1.0) / (4.0 * p.eps)
    diag = p.beta * u_gsq + p.alpha / (4.0 * p.eps)
    ones = np.ones_like(v)
    for ax, h in enumerate(spacing):
        grad += p.alpha * p.eps * _diff_adjoint(_diff(v, ax, h), ax, h)
        diag += p.alpha * p.eps * _diag_ktwk(ones, ax, h)
    v = v - p.damping * grad / diag
    return np.clip(v, 0.0, 1.0)


def at_smooth(g: Volume, params: AtParams = AtParams(), init=None) -> AtResult:
    """Alternating minimisation of the AT energy with damped Jacobi sweeps.

    Starts from ``u = g, v = 1`` unless ``init=(u, v)`` is given.  Each outer
    iteration runs ``inner_sweeps`` Jacobi sweeps on u with v fixed, then on v
    with u fixed; the energy is recorded after each half-step.  Both
    subproblems are quadratic with diagonally dominant Hessians, so damped
    Jacobi decreases the energy monotonically and each update is a convex
    combination of its neighbours (u stays in [min g, max g], v in [0, 1]).
    """
    gd = np.asarray(g.data, dtype=np.float64)
    if not np.all(np.isfinite(gd)):
        raise ValueError("input volume contains non-finite values")
    spacing = g.spacing_mm
    voxvol = g.voxel_volume_mm3
    if init is None:
        u = gd.copy()
        v = np.ones_like(gd)
    else:
        u = np.array(init[0].data if isinstance(init[0], Volume) else init[0], dtype=np.float64)
        v = np.clip(np.array(init[1], dtype=np.float64), 0.0, 1.0)
        _check_shapes(gd, u, v)

    energy = [_energy(gd, u, v, spacing, voxvol, params)]
    n_iters = 0
    for _ in range(params.max_iters):
        n_iters += 1
        e_start = energy[-1]
        for _ in range(params.inner_sweeps):
            u = _u_step(gd, u, v, spacing, params)
        energy.append(_energy(gd, u, v, spacing, voxvol, params))
        u_gsq = _grad_sq(u, spacing)
        for _ in range(params.inner_sweeps):
            v = _v_step(u_gsq, v, spacing, params)
        energy.append(_energy(gd, u, v, spacing, voxvol, params))
        drop = e_start - energy[-1]
        if e_start == 0.0 or drop <= params.tol * abs(e_start):
            break
    lo, hi = float(gd.min()), float(gd.max())
    u_vol = Volume(np.clip(u, lo, hi).astype(np.float32), spacing)
    return AtResult(u=u_vol, v=v, energy=np.asarray(energy), n_iters=n_iters)
