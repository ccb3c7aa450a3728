import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from randflux import (
    BoxGeometry,
    ConstantFlux,
    FluxConfiguration,
    Grid,
    UniformFlux,
    assemble,
    assemble_comparison,
    assemble_free,
    build_potential,
    dense_spectrum,
    lowest_eigenpairs,
    sample_poisson,
)
from randflux.operators import apply


def fd_dirichlet_oracle(L, M):
    """Closed-form eigenvalues of the five-point Dirichlet Laplacian on a
    square of side L with mesh 1/M."""
    h = 1.0 / M
    n = L * M
    p = np.arange(1, n)
    lam1 = 4 / h**2 * np.sin(np.pi * p / (2 * n)) ** 2
    return np.sort(np.add.outer(lam1, lam1).ravel())


def dense_oracle(config, grid, boundary):
    """Node-by-node assembly with hopping -exp(-i theta)/h^2, theta the
    summed argument increments of the link."""
    x = grid.axis(boundary)
    n = len(x)
    h2 = grid.h**2
    H = np.zeros((n * n, n * n), dtype=complex)
    idx = lambda i, j: i * n + j
    g = config.positions[:, 0] + 1j * config.positions[:, 1]
    a = config.effective_alphas

    def theta(z0, z1):
        return float(np.sum(a * np.angle((z1 - g) / (z0 - g)))) if len(g) else 0.0

    for i in range(n):
        for j in range(n):
            z = x[i] + 1j * x[j]
            deg = 0
            for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                ii, jj = i + di, j + dj
                if 0 <= ii < n and 0 <= jj < n:
                    H[idx(i, j), idx(ii, jj)] = -np.exp(-1j * theta(z, x[ii] + 1j * x[jj])) / h2
                    deg += 1
                elif boundary == "dirichlet":
                    deg += 1
            H[idx(i, j), idx(i, j)] = deg / h2
    return H


def random_config(seed, k=1, rho=1.0):
    return sample_poisson(seed, BoxGeometry(k), rho, UniformFlux())


def test_free_dirichlet_closed_form():
    for k, M in ((0, 8), (0, 11), (1, 4)):
        grid = Grid(BoxGeometry(k), M)
        w = dense_spectrum(assemble_free(grid, "dirichlet")).eigenvalues
        assert np.max(np.abs(w - fd_dirichlet_oracle(grid.box.L, M))) < 1e-10


def test_zero_flux_operator_equals_free_stencil():
    box = BoxGeometry(1)
    cfg = FluxConfiguration(box, [[0.1, 0.2], [-1.1, 0.3]], [0.0, 0.0])
    for b in ("dirichlet", "neumann"):
        grid = Grid(box, 4)
        H, F = assemble(cfg, grid, b), assemble_free(grid, b)
        assert np.array_equal(H.to_dense().real, F.to_dense())
        assert np.all(H.to_dense().imag == 0)


def test_neumann_zero_flux_ground_state():
    grid = Grid(BoxGeometry(1), 5)
    res = dense_spectrum(assemble_free(grid, "neumann"), vectors=True)
    assert abs(res.eigenvalues[0]) < 1e-10
    v = res.eigenvectors[:, 0]
    assert np.allclose(v / v[0], 1.0)


def test_free_dirichlet_ground_energy_converges():
    k = 1
    target = 2 * (math.pi / (2 * k + 1)) ** 2
    errs = []
    for M in (8, 16, 32):
        op = assemble_free(Grid(BoxGeometry(k), M), "dirichlet")
        e1 = lowest_eigenpairs(op, 1, tol=1e-9).eigenvalues[0]
        errs.append(abs(e1 - target))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 1.9)


def test_unit_cell_neumann_spectrum():
    w = dense_spectrum(assemble_free(Grid(BoxGeometry(0), 2), "neumann")).eigenvalues
    assert np.allclose(w, [0, 8, 8, 16], atol=1e-12)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32))
def test_assembly_matches_dense_oracle(seed):
    cfg = random_config(seed, k=1, rho=1.5)
    grid = Grid(cfg.box, 3)
    for b in ("dirichlet", "neumann"):
        H = assemble(cfg, grid, b)
        if H.meta["nudged"]:
            continue
        assert np.max(np.abs(H.to_dense() - dense_oracle(cfg, grid, b))) < 1e-9


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32))
def test_apply_matches_dense_and_is_linear(seed):
    rng = np.random.default_rng(seed)
    cfg = random_config(seed, k=0, rho=2.0)
    grid = Grid(cfg.box, 10)  # 10 x 10 Neumann nodes
    H = assemble(cfg, grid, "neumann")
    A = H.to_dense()
    u = rng.standard_normal(H.dimension) + 1j * rng.standard_normal(H.dimension)
    v = rng.standard_normal(H.dimension) + 1j * rng.standard_normal(H.dimension)
    scale = np.linalg.norm(A, 2) * np.linalg.norm(u)
    assert np.linalg.norm(apply(H, u) - A @ u) < 1e-13 * scale
    assert np.linalg.norm(apply(H, u + v) - apply(H, u) - apply(H, v)) < 1e-13 * scale
    # Hermitian and non-negative
    lhs, rhs = np.vdot(u, H.apply(v)), np.vdot(H.apply(u), v)
    assert abs(lhs - rhs) < 1e-12 * abs(lhs)
    assert np.vdot(u, H.apply(u)).real >= -1e-12 * np.vdot(u, u).real


def test_apply_dimension_mismatch():
    H = assemble_free(Grid(BoxGeometry(0), 4), "neumann")
    with pytest.raises(ValueError):
        H.apply(np.ones(3))


def test_constant_vector_in_kernel():
    H = assemble_free(Grid(BoxGeometry(1), 4), "neumann")
    assert np.max(np.abs(H.apply(np.ones(H.dimension)))) < 1e-12


def test_consistency_on_polynomial():
    # interior nodes only: the five-point stencil is exact on quadratics
    grid = Grid(BoxGeometry(0), 12)
    H = assemble_free(grid, "neumann")
    xy = grid.nodes("neumann")
    u = xy[:, 0] ** 2 + 3 * xy[:, 1] ** 2 - xy[:, 0] * xy[:, 1]
    out = H.apply(u).reshape(12, 12)
    assert np.allclose(out[1:-1, 1:-1], -8.0, atol=1e-9)
    # quartic: O(h^2) truncation error
    errs = []
    for M in (8, 16, 32):
        g = Grid(BoxGeometry(0), M)
        p = g.nodes("neumann")
        v = p[:, 0] ** 4
        lap = assemble_free(g, "neumann").apply(v).reshape(M, M)[1:-1, 1:-1]
        exact = -12 * p[:, 0].reshape(M, M)[1:-1, 1:-1] ** 2
        errs.append(np.max(np.abs(lap - exact)))
    assert math.log2(errs[0] / errs[1]) > 1.9 and math.log2(errs[1] / errs[2]) > 1.9


def test_dirichlet_above_neumann():
    for seed in range(5):
        cfg = random_config(seed)
        grid = Grid(cfg.box, 4)
        d = dense_spectrum(assemble(cfg, grid, "dirichlet")).eigenvalues[0]
        n = dense_spectrum(assemble(cfg, grid, "neumann")).eigenvalues[0]
        assert d >= n
    grid = Grid(BoxGeometry(1), 4)
    assert (dense_spectrum(assemble_free(grid, "dirichlet")).eigenvalues[0]
            >= dense_spectrum(assemble_free(grid, "neumann")).eigenvalues[0])


def test_diamagnetic_positivity():
    for seed in range(10):
        cfg = random_config(seed)
        w = dense_spectrum(assemble(cfg, Grid(cfg.box, 4), "neumann")).eigenvalues
        assert w[0] >= -1e-9
    # integer fluxes give phases that vanish mod 2 pi: ground energy 0
    cfg = FluxConfiguration(BoxGeometry(1), [[0.1, 0.2]], [0.0], windings=[1])
    assert abs(dense_spectrum(assemble(cfg, Grid(cfg.box, 4), "neumann")).eigenvalues[0]) < 1e-9


def test_flux_on_mesh_line_is_nudged():
    cfg = FluxConfiguration(BoxGeometry(0), [[0.0, 0.1]], [0.5])  # on a Dirichlet node line for even M
    H = assemble(cfg, Grid(cfg.box, 4), "dirichlet")
    assert len(H.meta["nudged"]) == 1


# -- comparison operator ------------------------------------------------------


def test_comparison_t0_ground_state():
    cfg = random_config(3)
    grid = Grid(cfg.box, 4)
    res = dense_spectrum(assemble_comparison(cfg, grid, 0.0), vectors=True)
    assert abs(res.eigenvalues[0]) < 1e-10
    v = np.abs(res.eigenvectors[:, 0])
    assert np.allclose(v, 1 / math.sqrt(grid.dimension("neumann")))


def test_comparison_bounded_shift():
    for seed in range(5):
        cfg = random_config(seed, rho=2.0)
        grid = Grid(cfg.box, 4)
        pot = build_potential(cfg, grid)
        e0 = dense_spectrum(assemble_comparison(cfg, grid, 0.0, pot)).eigenvalues[0]
        for t in (-1.0, -0.3, 0.5, 1.0):
            et = dense_spectrum(assemble_comparison(cfg, grid, t, pot)).eigenvalues[0]
            assert et <= e0 + abs(t) / 2 + 1e-12


def test_comparison_rejects_large_t():
    cfg = random_config(0)
    with pytest.raises(ValueError):
        assemble_comparison(cfg, Grid(cfg.box, 2), 1.5)
