"""Hermite-cubic C1 finite element engine."""

import numpy as np
import pytest
import scipy.optimize

from beamosc import fem
from beamosc.fem import (AssemblyForm, FemError, Mesh, SymmetricPair,
                         assemble, build_mesh, check_positive_definite,
                         form_from_hat, orthonormality_residual, residuals,
                         solve_gevp, solve_gevp_refined)

from conftest import load_spec


def unit_form(**over):
    kw = dict(p=lambda x: np.ones_like(np.asarray(x, dtype=float)),
              r=lambda x: np.ones_like(np.asarray(x, dtype=float)))
    kw.update(over)
    return AssemblyForm(**kw)


# --- meshes ---------------------------------------------------------------

def test_build_mesh_uniform():
    mesh = build_mesh([0.0, 1.0], 4)
    np.testing.assert_allclose(mesh.nodes, [0.0, 0.25, 0.5, 0.75, 1.0])
    assert mesh.n_elements == 4
    assert mesh.n_dofs == 8          # clamped left end removes two


def test_build_mesh_keeps_required_points():
    mesh = build_mesh([0.0, 1.0 / 3.0, 1.0], 8)
    assert np.min(np.abs(np.asarray(mesh.nodes) - 1.0 / 3.0)) == 0.0


def test_build_mesh_grading_bounded():
    mesh = build_mesh([0.0, 0.1, 0.9, 1.0], 8)
    h = np.diff(mesh.nodes)
    ratio = np.max(h[1:] / h[:-1])
    assert max(ratio, 1.0 / np.min(h[1:] / h[:-1])) <= 2.0 + 1e-12


def test_element_of():
    mesh = build_mesh([0.0, 1.0], 4)
    assert mesh.element_of(0.0) == 0
    assert mesh.element_of(0.26) == 1
    assert mesh.element_of(1.0) == 3


# --- element matrices against symbolic integration ------------------------

def test_single_element_stiffness_matches_sympy():
    sympy = pytest.importorskip("sympy")
    L = 0.7
    x, s = sympy.symbols("x s", positive=True)
    z = x / L
    # Hermite cubic basis on [0, L]: value/slope at each end
    H = [1 - 3 * z**2 + 2 * z**3, L * (z - 2 * z**2 + z**3),
         3 * z**2 - 2 * z**3, L * (-(z**2) + z**3)]
    exact = np.array([[float(sympy.integrate(
        sympy.diff(a, x, 2) * sympy.diff(b, x, 2), (x, 0, L)))
        for b in H] for a in H])
    mesh = Mesh((0.0, L, 1.0))
    pair = assemble(unit_form(), mesh)
    assert pair.A.shape[0] == 4
    # closed-form element stiffness: A[00] = 12/L^3 etc.
    full = np.array([[12, 6 * L, -12, 6 * L],
                     [6 * L, 4 * L**2, -6 * L, 2 * L**2],
                     [-12, -6 * L, 12, -6 * L],
                     [6 * L, 2 * L**2, -6 * L, 4 * L**2]]) / L**3
    np.testing.assert_allclose(exact, full, rtol=1e-12)
    # assembled (1,1)-block for element 0 = lower-right of the element
    # matrix (its first node is clamped away)
    np.testing.assert_allclose(pair.A[:2, :2],
                               full[2:, 2:] + _bending_block(L, 1.0),
                               rtol=1e-12)


def _bending_block(L, total):
    """Upper-left 2x2 of the second element's stiffness on [L, total]."""
    h = total - L
    return np.array([[12, 6 * h], [6 * h, 4 * h**2]]) / h**3


def test_mass_matrix_integrates_constants():
    # sum of value-DOF rows of B against the interpolant of 1 gives int r
    mesh = build_mesh([0.0, 1.0], 5)
    pair = assemble(unit_form(), mesh)
    ones = np.zeros(mesh.n_dofs)
    ones[::2] = 1.0                   # value DOFs of u == 1 (clamped end off)
    # u=1 is not in the clamped space; integrate x^2 instead: u(x)=x^2
    dofs = np.empty(mesh.n_dofs)
    nodes = np.asarray(mesh.nodes[1:])
    dofs[::2] = nodes**2
    dofs[1::2] = 2 * nodes
    val = dofs @ (pair.B @ dofs)      # int_0^1 x^4 = 1/5
    assert val == pytest.approx(0.2, rel=1e-12)


def test_atom_is_rank_one_update():
    mesh = build_mesh([0.0, 0.5, 1.0], 4)
    base = assemble(unit_form(), mesh)
    w = 2.5
    with_atom = assemble(unit_form(atoms=((0.5, w),)), mesh)
    diff = with_atom.A - base.A
    assert np.linalg.matrix_rank(diff, tol=1e-10) == 1
    # the update acts on u'(0.5): quadratic u = x^2 has u'(0.5) = 1
    dofs = np.empty(mesh.n_dofs)
    nodes = np.asarray(mesh.nodes[1:])
    dofs[::2] = nodes**2
    dofs[1::2] = 2 * nodes
    assert dofs @ (diff @ dofs) == pytest.approx(w * 1.0**2, rel=1e-12)


# --- generalized eigenvalue solver ----------------------------------------

def test_gevp_diagonal_case():
    mesh = Mesh((0.0, 1.0))
    pair = SymmetricPair(A=np.diag([2.0, 8.0]), B=np.diag([1.0, 2.0]),
                         mesh=mesh)
    sp = solve_gevp(pair, 2, unit_form())
    np.testing.assert_allclose(sp.eigenvalues, [2.0, 4.0], rtol=1e-12)


def test_gevp_identity_case():
    mesh = Mesh((0.0, 1.0))
    pair = SymmetricPair(A=np.eye(2), B=np.eye(2), mesh=mesh)
    sp = solve_gevp(pair, 2, unit_form())
    np.testing.assert_allclose(sp.eigenvalues, [1.0, 1.0], rtol=1e-12)


def test_gevp_rejects_bad_k():
    mesh = Mesh((0.0, 1.0))
    pair = SymmetricPair(A=np.eye(2), B=np.eye(2), mesh=mesh)
    with pytest.raises(FemError):
        solve_gevp(pair, 0, unit_form())
    with pytest.raises(FemError):
        solve_gevp(pair, 3, unit_form())


def cantilever_k0():
    return scipy.optimize.newton(
        lambda k: np.cos(k) * np.cosh(k) + 1.0, 1.9, tol=1e-14)


def test_cantilever_oracle_n64():
    mesh = build_mesh([0.0, 1.0], 64)
    pair = assemble(unit_form(), mesh)
    sp = solve_gevp(pair, 3, unit_form())
    lam0 = cantilever_k0() ** 4
    assert sp.eigenvalues[0] == pytest.approx(lam0, rel=1e-8)


def test_residuals_and_orthonormality():
    mesh = build_mesh([0.0, 1.0], 32)
    form = unit_form(b_beta=1.0)
    pair = assemble(form, mesh)
    sp = solve_gevp(pair, 6, form)
    assert np.max(residuals(pair, sp)) < 1e-8
    assert orthonormality_residual(pair, sp) < 1e-9


def test_refined_solver_matches_plain():
    form = unit_form(b_beta=1.0)
    mesh = build_mesh([0.0, 1.0], 64)
    plain = solve_gevp(assemble(form, mesh, quad_order=7), 4, form)
    refined = solve_gevp_refined(form, mesh, 4)
    np.testing.assert_allclose(refined.eigenvalues, plain.eigenvalues,
                               rtol=1e-7)


# --- eigenfunction evaluation ---------------------------------------------

def test_eigenfunction_clamped_end():
    mesh = build_mesh([0.0, 1.0], 16)
    form = unit_form(b_beta=1.0)
    sp = solve_gevp(assemble(form, mesh), 2, form)
    assert sp.u(0, 0.0) == 0.0
    assert sp.du(0, 0.0) == 0.0


def test_moment_jump_at_atom(reductions):
    hat, _, _ = reductions["multipoint"]
    form = form_from_hat(hat)
    mesh = build_mesh(form.required_points, 768)
    pair = assemble(form, mesh, quad_order=7)
    sp = solve_gevp(pair, 1, form)
    eps = 1e-9
    for loc, w in form.atoms:
        jump = sp.moment(0, loc + eps) - sp.moment(0, min(loc - eps, 1.0))
        # recovered natural interface condition: [p u''] = w u'(t_i)
        assert jump == pytest.approx(w * sp.du(0, loc), abs=1e-6)


def test_positive_definite_check():
    ok, _ = check_positive_definite(np.eye(3))
    assert ok
    ok, piv = check_positive_definite(np.diag([1.0, -2.0]))
    assert not ok and piv <= 0.0
