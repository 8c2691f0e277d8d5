import numpy as np
import pytest

from aatr.preprocess import AtParams, at_energy, at_smooth
from aatr.volume import Volume

P = AtParams(1000.0, 0.9, 0.1)


def grad_sq_oracle(a, spacing):
    # central differences, reflective boundary: zero derivative on the end planes
    out = np.zeros_like(a)
    for ax, h in enumerate(spacing):
        d = np.zeros_like(a)
        n = a.shape[ax]
        for i in range(1, n - 1):
            idx = [slice(None)] * 3
            idx[ax] = i
            up = [slice(None)] * 3
            up[ax] = i + 1
            dn = [slice(None)] * 3
            dn[ax] = i - 1
            d[tuple(idx)] = (a[tuple(up)] - a[tuple(dn)]) / (2 * h)
        out += d * d
    return out


def energy_oracle(g, u, v, spacing, p):
    vv = float(np.prod(spacing))
    total = 0.0
    gu = grad_sq_oracle(u, spacing)
    gv = grad_sq_oracle(v, spacing)
    for i in np.ndindex(g.shape):
        total += (u[i] - g[i]) ** 2 + p.beta * v[i] ** 2 * gu[i]
        total += p.alpha * (p.eps * gv[i] + (1 - v[i]) ** 2 / (4 * p.eps))
    return total * vv


def test_energy_zero_for_constant_smooth():
    g = Volume(np.full((4, 5, 6), 1000.0), (2, 2, 2))
    assert at_energy(g, g.data, np.ones(g.dims), P) == 0.0


def test_energy_all_edges():
    g = Volume(np.full((4, 5, 6), 1000.0), (2, 2, 2))
    expect = P.alpha * g.data.size * g.voxel_volume_mm3 / (4 * P.eps)
    assert at_energy(g, g.data, np.zeros(g.dims), P) == pytest.approx(expect, rel=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_energy_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    dims = tuple(rng.integers(2, 6, size=3))
    sp = tuple(rng.uniform(0.5, 2.5, size=3))
    g = rng.uniform(0, 2000, size=dims)
    u = g + rng.normal(0, 50, size=dims)
    v = rng.uniform(0, 1, size=dims)
    got = at_energy(Volume(g, sp), u, v, P)
    ref = energy_oracle(Volume(g, sp).data.astype(np.float64), u, v, sp, P)
    assert got == pytest.approx(ref, rel=1e-10)


def test_energy_dimension_mismatch():
    g = Volume(np.ones((3, 3, 3)))
    with pytest.raises(ValueError, match="dimension mismatch"):
        at_energy(g, np.ones((3, 3, 4)), np.ones((3, 3, 3)), P)


def test_constant_is_fixpoint():
    g = Volume(np.full((8, 8, 8), 1234.0), (2, 2, 2))
    r = at_smooth(g, P)
    assert r.n_iters == 1
    assert np.array_equal(r.u.data, g.data)
    assert np.all(r.v == 1.0)


def test_step_volume_smooths_and_marks_interface():
    rng = np.random.default_rng(0)
    g = np.full((24, 24, 24), 1000.0)
    g[12:] = 1500.0
    g += rng.normal(0, 30, size=g.shape)
    g = Volume(np.clip(g, 0, None), (2, 2, 2))
    r = at_smooth(g, P)
    for sl in (np.s_[:12], np.s_[12:]):
        assert r.u.data[sl].var() < g.data[sl].var()
    assert r.v[11:13].min() < 0.5


@pytest.mark.parametrize("seed", range(3))
def test_descent_bounds_and_idempotence(seed):
    rng = np.random.default_rng(100 + seed)
    g = Volume(rng.uniform(0, 2500, size=(12, 12, 12)).astype(np.float32), (2, 2, 2))
    r = at_smooth(g, P)
    e = r.energy
    assert np.all(np.diff(e) <= 1e-9 * np.abs(e[:-1]))
    assert r.v.min() >= 0.0 and r.v.max() <= 1.0
    assert r.u.data.min() >= g.data.min() - 1e-6 and r.u.data.max() <= g.data.max() + 1e-6
    again = at_smooth(g, AtParams(1000.0, 0.9, 0.1, max_iters=1), init=(r.u, r.v))
    assert abs(again.energy[-1] - again.energy[0]) < 1e-6 * again.energy[0]


def test_params_validation():
    with pytest.raises(ValueError):
        AtParams(alpha=0)
    with pytest.raises(ValueError):
        AtParams(eps=1.0)
    with pytest.raises(ValueError):
        AtParams(max_iters=0)
    with pytest.raises(ValueError, match="dimension mismatch"):
        at_smooth(Volume(np.ones((2, 2, 2))), P, init=(np.ones((2, 2, 3)), np.ones((2, 2, 2))))
