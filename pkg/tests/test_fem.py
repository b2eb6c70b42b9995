from __future__ import annotations

import math

import numpy as np
import pytest
import scipy.linalg
import sympy as sp

from pillarstokes.fem import (
    TAYLOR_HOOD,
    TAYLOR_HOOD_P3,
    BcKind,
    BcSetup,
    DegenerateElementError,
    ElementPair,
    apply_bcs,
    assemble,
    build_dofmap,
    elevate,
    errors_against_exact,
    evaluate_errors,
    export_fields,
    graddiv_operator,
    setup_a,
    setup_b,
)
from pillarstokes.fem.assembly import element_geometry, parabolic_profile, traction_load, scalar_mass_local, scalar_stiffness_local
from pillarstokes.fem.errors import interpolate, transfer
from pillarstokes.geometry import BoundaryLabel, DomainSpec
from pillarstokes.mesher import Mesh, mesh_domain, structured_rectangle
from pillarstokes.saddle import NullspacePolicy, build_system, solve_direct

from conftest import single_triangle, two_triangle_square
from symbolic import element_matrices


def enclosed(mesh, pair=TAYLOR_HOOD, mu=1.0, body_force=None):
    asm = assemble(mesh, build_dofmap(mesh, pair), mu=mu, body_force=body_force)
    return apply_bcs(asm, BcSetup(BcKind.ENCLOSED, mu=mu), mesh)


# ---------------------------------------------------------------- dofmap


def test_dof_counts_two_triangles(square2):
    p2 = build_dofmap(square2, TAYLOR_HOOD)
    assert (p2.velocity.n_nodes, p2.n_u, p2.n_p) == (9, 18, 4)
    p3 = build_dofmap(square2, TAYLOR_HOOD_P3)
    assert (p3.velocity.n_nodes, p3.n_u, p3.n_p) == (16, 32, 9)


def test_dof_counts_single_triangle(tri1):
    dm = build_dofmap(tri1, TAYLOR_HOOD)
    assert (dm.n_u, dm.n_p) == (12, 3)


def test_only_taylor_hood_pairs():
    with pytest.raises(ValueError):
        ElementPair(4)
    assert TAYLOR_HOOD_P3.pressure_order == 2


@pytest.mark.parametrize("order", [2, 3])
def test_shared_edge_nodes_conform(order):
    """Every element's node list, mapped from the reference nodes, hits the stored coordinates."""
    from pillarstokes.fem.elements import reference_nodes

    mesh = mesh_domain(DomainSpec(1, 1, 2, 1 / 3, 0.25), 3)
    dm = build_dofmap(mesh, ElementPair(order))
    space = dm.velocity
    ref = reference_nodes(order)
    p = mesh.vertices[mesh.triangles]
    phys = p[:, None, 0] + ref[None, :, :1] * (p[:, None, 1] - p[:, None, 0]) + ref[None, :, 1:] * (p[:, None, 2] - p[:, None, 0])
    assert np.allclose(space.coords[space.cell_nodes], phys, atol=1e-13)
    # each node is referenced consistently: no two distinct nodes share coordinates
    uniq = np.unique(np.round(space.coords, 12), axis=0)
    assert len(uniq) == space.n_nodes


def test_edge_node_order_independent_of_orientation():
    """Both orientations of the shared diagonal number its P3 nodes from the lower vertex."""
    a = two_triangle_square()
    b = Mesh(a.vertices, np.array([[0, 1, 2], [2, 3, 0]]), a.boundary_edges, a.boundary_labels)
    for mesh in (a, b):
        vel = build_dofmap(mesh, TAYLOR_HOOD_P3).velocity
        k = [i for i, e in enumerate(vel.edges) if tuple(e) == (0, 2)][0]
        first, second = vel.coords[vel.edge_nodes[k]]
        assert np.allclose(first, [1 / 3, 1 / 3]) and np.allclose(second, [2 / 3, 2 / 3])


# ---------------------------------------------------------------- element matrices


def test_p1_reference_matrices(tri1):
    geo = element_geometry(tri1)
    K = scalar_stiffness_local(geo, 1)[0]
    M = scalar_mass_local(geo, 1)[0]
    assert np.allclose(K, 0.5 * np.array([[2, -1, -1], [-1, 1, 0], [-1, 0, 1]]), atol=1e-15)
    assert np.allclose(M, np.array([[2, 1, 1], [1, 2, 1], [1, 1, 2]]) / 24, atol=1e-16)


@pytest.mark.parametrize("order", [1, 2, 3])
def test_stiffness_row_sums_vanish(order):
    mesh = mesh_domain(DomainSpec(1, 1, 2, 0.0, 0.25), 2)
    K = scalar_stiffness_local(element_geometry(mesh), order)
    assert np.abs(K.sum(axis=2)).max() <= 1e-12 * np.abs(K).max()


@pytest.mark.parametrize("order", [1, 2, 3])
def test_quadrature_matches_symbolic(order, rng):
    for _ in range(2):
        verts = np.round(rng.uniform(-1, 2, size=(3, 2)), 3)
        d1, d2 = verts[1] - verts[0], verts[2] - verts[0]
        if d1[0] * d2[1] - d1[1] * d2[0] < 0:
            verts = verts[[0, 2, 1]]
        M_exact, K_exact = element_matrices(verts, order)
        mesh = Mesh(verts, np.array([[0, 1, 2]]), np.zeros((0, 2), int), np.zeros(0, int))
        geo = element_geometry(mesh)
        M = scalar_mass_local(geo, order)[0]
        K = scalar_stiffness_local(geo, order)[0]
        M_e = np.array(M_exact, dtype=float)
        K_e = np.array(K_exact, dtype=float)
        assert np.abs(M - M_e).max() <= 1e-13 * max(1.0, np.abs(M_e).max())
        assert np.abs(K - K_e).max() <= 1e-13 * max(1.0, np.abs(K_e).max())


def test_degenerate_element_reported():
    v = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [0.0, 1.0]])
    mesh = Mesh(v, np.array([[0, 1, 3], [0, 1, 2]]), np.zeros((0, 2), int), np.zeros(0, int))
    with pytest.raises(DegenerateElementError) as exc:
        assemble(mesh, build_dofmap(mesh, TAYLOR_HOOD))
    assert exc.value.index == 1


# ---------------------------------------------------------------- global properties


@pytest.fixture(scope="module")
def pillar_mesh():
    return mesh_domain(DomainSpec(1, 1, 2, 1 / 3, 0.25), 3)


@pytest.mark.parametrize("pair", [TAYLOR_HOOD, TAYLOR_HOOD_P3])
def test_symmetry_and_partition_of_unity(pillar_mesh, pair):
    asm = assemble(pillar_mesh, build_dofmap(pillar_mesh, pair))
    assert abs(asm.A - asm.A.T).max() == 0.0
    assert abs(asm.M_p - asm.M_p.T).max() == 0.0
    assert abs(asm.M_p.sum() - pillar_mesh.area) <= 1e-12
    w = np.linalg.eigvalsh(asm.M_p.toarray()) if asm.n_p < 1500 else None
    if w is not None:
        assert w.min() > 0


@pytest.mark.parametrize("pair", [TAYLOR_HOOD, TAYLOR_HOOD_P3])
def test_discrete_divergence_theorem(pillar_mesh, pair):
    asm = enclosed(pillar_mesh, pair)
    _, B_f, f_f, _ = asm.reduced()
    row = np.ones(asm.n_p) @ B_f
    assert np.abs(row).max() <= 1e-12
    assert np.abs(f_f).max() == 0.0


def test_free_stiffness_positive_definite(pillar_mesh):
    A_f, *_ = enclosed(pillar_mesh).reduced()
    np.linalg.cholesky(A_f.toarray())


def test_enclosed_constrains_whole_boundary(pillar_mesh):
    asm = enclosed(pillar_mesh)
    vel = asm.dofmap.velocity
    bnodes = vel.boundary_nodes(pillar_mesh, np.arange(len(pillar_mesh.boundary_edges)))
    assert set(asm.dofmap.velocity_dofs(bnodes)) == set(asm.constrained)
    assert np.abs(asm.f).max() == 0


@pytest.mark.parametrize("pair", [TAYLOR_HOOD, TAYLOR_HOOD_P3])
def test_pressure_traction_sums_to_p_in_L_y(pair):
    mesh = structured_rectangle(3, 5, 2.0, 1.0)
    dm = build_dofmap(mesh, pair)
    n = dm.velocity.n_nodes
    inlet = traction_load(mesh, dm, BoundaryLabel.INLET, 1.0)
    assert inlet[:n].sum() == pytest.approx(1.0, abs=1e-14)
    assert abs(inlet[n:]).max() == 0.0
    outlet = traction_load(mesh, dm, BoundaryLabel.OUTLET, 1.0)
    assert outlet[:n].sum() == pytest.approx(-1.0, abs=1e-14)
    # after elimination the load lives on free DoFs only
    asm = apply_bcs(assemble(mesh, dm), BcSetup(BcKind.PRESSURE_DRIVEN, p_in=1.0, p_out=0.0), mesh)
    assert np.abs(asm.f[asm.constrained]).max() == 0.0


def test_setup_a_default_pressure():
    assert setup_a(4).inlet_pressure(4) == 16.0
    assert BcSetup(BcKind.PRESSURE_DRIVEN).inlet_pressure(4) == 16.0


def test_setup_b_parabolic_values():
    mesh = structured_rectangle(4, 4)
    asm = apply_bcs(assemble(mesh, build_dofmap(mesh, TAYLOR_HOOD)), setup_b(U_max=2.0), mesh)
    vel = asm.dofmap.velocity
    ud = asm.dirichlet_values
    inlet = np.flatnonzero(np.isclose(vel.coords[:, 0], 0.0))
    y = vel.coords[inlet, 1]
    assert np.allclose(ud[inlet], parabolic_profile(y, 0.0, 1.0, 2.0), atol=1e-15)
    assert np.allclose(ud[inlet + vel.n_nodes], 0.0)
    assert parabolic_profile(np.array([0.5]), 0, 1, 2.0)[0] == pytest.approx(2.0)
    # walls win at corners
    corner = np.flatnonzero(np.isclose(vel.coords[:, 0], 0) & np.isclose(vel.coords[:, 1], 0))
    assert ud[corner] == 0.0


# ---------------------------------------------------------------- grad-div


def test_graddiv_zero_for_zero_gamma(pillar_mesh):
    asm = enclosed(pillar_mesh)
    assert abs(graddiv_operator(asm, 0.0)).max() == 0


def test_graddiv_symmetric_psd_and_kernel(rng):
    mesh = mesh_domain(DomainSpec(1, 1, 1, 0.0, 0.25), 2)
    asm = enclosed(mesh)
    G = graddiv_operator(asm, 3.0)
    assert abs(G - G.T).max() <= 1e-14 * abs(G).max()
    X = rng.standard_normal((G.shape[0], 20))
    assert (np.einsum("ij,ij->j", X, G @ X) >= -1e-12).all()
    B = asm.B.toarray()
    Z = scipy.linalg.null_space(B)[:, :10]
    assert np.abs(G @ Z).max() <= 1e-10 * abs(G).max()


# ---------------------------------------------------------------- errors and fields


def test_elevation_gives_zero_error(pillar_mesh, rng):
    lo = build_dofmap(pillar_mesh, TAYLOR_HOOD)
    hi = build_dofmap(pillar_mesh, TAYLOR_HOOD_P3)
    u = rng.standard_normal(lo.n_u)
    p = rng.standard_normal(lo.n_p)
    rep = evaluate_errors(pillar_mesh, lo, (u, p), hi, elevate(lo, hi, u, p), (0.25, 0.75, 0, 1))
    assert rep.rel_p_L2 < 1e-13 and rep.rel_u_L2 < 1e-13 and rep.rel_u_H1 < 1e-13


def test_constant_pressure_shift_ignored(pillar_mesh, rng):
    lo = build_dofmap(pillar_mesh, TAYLOR_HOOD)
    u = rng.standard_normal(lo.n_u)
    p = rng.standard_normal(lo.n_p)
    rep = evaluate_errors(pillar_mesh, lo, (u, p + 7.5), lo, (u, p))
    assert rep.rel_p_L2 < 1e-14 and rep.abs_u_L2 == 0


def test_empty_inner_box_rejected(pillar_mesh):
    lo = build_dofmap(pillar_mesh, TAYLOR_HOOD)
    with pytest.raises(ValueError):
        evaluate_errors(pillar_mesh, lo, (np.zeros(lo.n_u), np.zeros(lo.n_p)), lo, (np.zeros(lo.n_u), np.ones(lo.n_p)), (5, 6, 5, 6))


def test_quadratic_roundtrip_p3(pillar_mesh):
    lo = build_dofmap(pillar_mesh, TAYLOR_HOOD).velocity
    hi = build_dofmap(pillar_mesh, TAYLOR_HOOD_P3).velocity
    q = lambda x, y: 1 + 2 * x - y + 3 * x * y - x * x + 0.5 * y * y  # noqa: E731
    vals = interpolate(lo, q)
    up = transfer(lo, hi, vals)
    assert np.allclose(up, interpolate(hi, q), atol=1e-13)
    assert np.array_equal(transfer(hi, lo, up), vals) or np.allclose(transfer(hi, lo, up), vals, atol=1e-14)


def test_export_zero_fields(tmp_path, pillar_mesh):
    dm = build_dofmap(pillar_mesh, TAYLOR_HOOD)
    path = export_fields(pillar_mesh, dm, (np.zeros(dm.n_u), np.zeros(dm.n_p)), tmp_path / "f.csv")
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    assert data.shape == (pillar_mesh.n_vertices, 6)
    assert np.abs(data[:, 2:]).max() == 0


def test_setup_a_speed_peaks_in_a_gap(tmp_path):
    spec = DomainSpec(1, 1, 2, 0.0, 0.25)
    mesh = mesh_domain(spec, 4)
    dm = build_dofmap(mesh, TAYLOR_HOOD)
    asm = apply_bcs(assemble(mesh, dm), setup_a(2), mesh, 2)
    sys = build_system(asm)
    u, p = solve_direct(sys)
    data = np.loadtxt(export_fields(mesh, dm, (asm.expand_velocity(u), p), tmp_path / "a.csv"), delimiter=",", skiprows=1)
    k = int(np.argmax(data[:, 2]))
    assert k not in set(mesh.boundary_edges.ravel())
    assert data[k, 2] > 0


# ---------------------------------------------------------------- manufactured solution


def manufactured(mu=1.0):
    x, y = sp.symbols("x y")
    psi = x**2 * (1 - x) ** 2 * y**2 * (1 - y) ** 2
    ux, uy = sp.diff(psi, y), -sp.diff(psi, x)
    p = sp.sin(sp.pi * x) * sp.cos(sp.pi * y)
    fx = -mu * (sp.diff(ux, x, 2) + sp.diff(ux, y, 2)) + sp.diff(p, x)
    fy = -mu * (sp.diff(uy, x, 2) + sp.diff(uy, y, 2)) + sp.diff(p, y)
    lam = lambda e: sp.lambdify((x, y), e, "numpy")  # noqa: E731
    zero = lambda f: (lambda X, Y: f(X, Y) + 0 * X)  # noqa: E731
    u_exact = lambda X, Y: (zero(lam(ux))(X, Y), zero(lam(uy))(X, Y))  # noqa: E731
    g = [[zero(lam(sp.diff(c, v))) for v in (x, y)] for c in (ux, uy)]
    grad = lambda X, Y: tuple(tuple(h(X, Y) for h in row) for row in g)  # noqa: E731
    return u_exact, grad, zero(lam(p)), lambda X, Y: (zero(lam(fx))(X, Y), zero(lam(fy))(X, Y))


def manufactured_errors(levels=(4, 8, 16, 32)):
    u_ex, grad_ex, p_ex, f = manufactured()
    out = []
    for n in levels:
        mesh = structured_rectangle(n, n)
        asm = enclosed(mesh, body_force=f)
        sys = build_system(asm)
        assert sys.nullspace is NullspacePolicy.CONSTANT_PRESSURE
        u, p = solve_direct(sys)
        rep = errors_against_exact(mesh, asm.dofmap, (asm.expand_velocity(u), p), u_ex, grad_ex, p_ex)
        out.append((1.0 / n, rep))
    return out


def manufactured_orders(levels=(4, 8, 16, 32)):
    errs = manufactured_errors(levels)
    (h0, a), (h1, b) = errs[-2], errs[-1]
    o = lambda e0, e1: math.log(e0 / e1) / math.log(h0 / h1)  # noqa: E731
    return o(a.abs_u_L2, b.abs_u_L2), o(a.abs_u_H1, b.abs_u_H1), o(a.abs_p_L2, b.abs_p_L2)


def test_manufactured_orders():
    uL2, uH1, pL2 = manufactured_orders()
    assert abs(uL2 - 3) <= 0.3 and abs(uH1 - 2) <= 0.3 and abs(pL2 - 2) <= 0.3
