"""C1 Hermite-cubic Rayleigh-Ritz discretization and generalized eigensolve.

The trial space is spanned by cubic Hermite elements with (value, slope)
degrees of freedom per node; the clamped left end eliminates both DOFs at 0.
Atoms of the first-order coefficient contribute w * u'(t)v'(t) directly to the
stiffness matrix, which is conforming because the elements are C1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg


class FemError(ValueError):
    pass


# ---------------------------------------------------------------------------
# mesh

@dataclass(frozen=True)
class Mesh:
    nodes: tuple[float, ...]

    def __post_init__(self):
        nd = self.nodes
        if nd[0] != 0.0 or nd[-1] != 1.0:
            raise FemError("mesh must span [0,1]")
        if any(a >= b for a, b in zip(nd, nd[1:])):
            raise FemError("mesh nodes must be strictly ascending")

    @property
    def n_elements(self) -> int:
        return len(self.nodes) - 1

    @property
    def n_dofs(self) -> int:
        """Constrained DOF count (both DOFs at node 0 eliminated)."""
        return 2 * len(self.nodes) - 2

    def node_index(self, x: float) -> int:
        nodes = np.asarray(self.nodes)
        i = int(np.argmin(np.abs(nodes - x)))
        if abs(nodes[i] - x) > 1e-12:
            raise FemError(f"point {x} is not a mesh node")
        return i

    def element_of(self, x):
        nodes = np.asarray(self.nodes)
        idx = np.clip(np.searchsorted(nodes, x, side="right") - 1, 0, self.n_elements - 1)
        return idx


def build_mesh(required_points: Sequence[float], n: int) -> Mesh:
    """Quasi-uniform mesh with all required points as nodes, ~n elements."""
    pts = sorted(set(float(x) for x in required_points) | {0.0, 1.0})
    if any(x < 0.0 or x > 1.0 for x in pts):
        raise FemError("required points must lie in [0,1]")
    if n < max(4, len(pts) - 1):
        raise FemError(f"n={n} too small to contain {len(pts) - 1} required intervals")
    nodes = [0.0]
    for a, b in zip(pts, pts[1:]):
        parts = max(1, round(n * (b - a)))
        nodes.extend(a + (b - a) * (j + 1) / parts for j in range(parts))
    nodes[-1] = 1.0
    return Mesh(tuple(nodes))


# ---------------------------------------------------------------------------
# shape functions on an element [0, h], local coordinate z in [0, 1]

def _shape_values(z, h):
    z2, z3 = z * z, z * z * z
    return np.array([
        1.0 - 3.0 * z2 + 2.0 * z3,
        h * (z - 2.0 * z2 + z3),
        3.0 * z2 - 2.0 * z3,
        h * (z3 - z2),
    ])


def _shape_d1(z, h):
    z2 = z * z
    return np.array([
        (-6.0 * z + 6.0 * z2) / h,
        1.0 - 4.0 * z + 3.0 * z2,
        (6.0 * z - 6.0 * z2) / h,
        3.0 * z2 - 2.0 * z,
    ])


def _shape_d2(z, h):
    return np.array([
        (-6.0 + 12.0 * z) / (h * h),
        (-4.0 + 6.0 * z) / h,
        (6.0 - 12.0 * z) / (h * h),
        (6.0 * z - 2.0) / h,
    ])


def _shape_d3(z, h):
    return np.array([12.0 / h**3, 6.0 / (h * h), -12.0 / h**3, 6.0 / (h * h)])


def _gauss_rule(npts: int):
    z, w = np.polynomial.legendre.leggauss(npts)
    return 0.5 * (z + 1.0), 0.5 * w   # mapped to [0,1]


# ---------------------------------------------------------------------------
# assembly

@dataclass(frozen=True)
class SymmetricPair:
    A: np.ndarray
    B: np.ndarray
    mesh: Mesh


@dataclass(frozen=True)
class AssemblyForm:
    """Coefficients of the quadratic forms A(u,v) - lambda B(u,v) on the
    clamped space:

        A(u,v) = int p u''v'' + int q u'v' + sum_i w_i u'(t_i)v'(t_i)
                 + a_prime_end * u'(1)v'(1)
        B(u,v) = int r u v + b_alpha * u'(1)v'(1) + b_beta * u(1)v(1)
    """

    p: Callable
    r: Callable
    q: Optional[Callable] = None
    atoms: tuple = ()                # (location, weight) pairs
    a_prime_end: float = 0.0
    b_alpha: float = 0.0
    b_beta: float = 0.0
    p_derivative: Optional[Callable] = None
    required_points: tuple[float, ...] = ()


def form_from_hat(hat) -> AssemblyForm:
    return AssemblyForm(
        p=hat.p,
        r=hat.r,
        q=hat.q_density,
        atoms=tuple((a.location, a.weight) for a in hat.atoms),
        b_alpha=hat.alpha,
        b_beta=hat.beta,
        p_derivative=hat.p.derivative(),
        required_points=tuple(hat.required_points()),
    )


def assemble(form: AssemblyForm, mesh: Mesh, quad_order: int = 5,
             dtype=np.float64) -> SymmetricPair:
    gauss_nodes, gauss_weights = _gauss_rule(quad_order)
    ndof_full = 2 * len(mesh.nodes)
    A = np.zeros((ndof_full, ndof_full), dtype=dtype)
    B = np.zeros((ndof_full, ndof_full), dtype=dtype)

    for e in range(mesh.n_elements):
        a, b = mesh.nodes[e], mesh.nodes[e + 1]
        h = dtype(b) - dtype(a)
        Ae = np.zeros((4, 4), dtype=dtype)
        Be = np.zeros((4, 4), dtype=dtype)
        for z, w in zip(gauss_nodes, gauss_weights):
            x = a + (b - a) * z
            zd = dtype(z)
            N = _shape_values(zd, h)
            dN = _shape_d1(zd, h)
            ddN = _shape_d2(zd, h)
            wj = dtype(w) * h
            Ae += wj * dtype(float(form.p(x))) * np.outer(ddN, ddN)
            if form.q is not None:
                Ae += wj * dtype(float(form.q(x))) * np.outer(dN, dN)
            Be += wj * dtype(float(form.r(x))) * np.outer(N, N)
        sl = slice(2 * e, 2 * e + 4)
        A[sl, sl] += Ae
        B[sl, sl] += Be

    for loc, weight in form.atoms:
        i = mesh.node_index(loc)
        A[2 * i + 1, 2 * i + 1] += dtype(weight)

    A[-1, -1] += dtype(form.a_prime_end)
    B[-1, -1] += dtype(form.b_alpha)
    B[-2, -2] += dtype(form.b_beta)

    # clamped left end: drop value and slope DOFs at node 0
    A = A[2:, 2:]
    B = B[2:, 2:]
    A = 0.5 * (A + A.T)
    B = 0.5 * (B + B.T)
    return SymmetricPair(A=A, B=B, mesh=mesh)


def check_positive_definite(A: np.ndarray) -> tuple[bool, float]:
    """Cholesky-based test; returns (is positive definite, smallest pivot)."""
    try:
        L = np.linalg.cholesky(A)
        return True, float(np.min(np.diag(L)) ** 2)
    except np.linalg.LinAlgError:
        # locate the first failing leading minor for the diagnostic margin
        piv = _first_bad_pivot(A)
        return False, piv


def _first_bad_pivot(A: np.ndarray) -> float:
    A = A.copy()
    n = A.shape[0]
    for k in range(n):
        if A[k, k] <= 0.0:
            return float(A[k, k])
        A[k + 1:, k + 1:] -= np.outer(A[k + 1:, k], A[k + 1:, k]) / A[k, k]
    return float(np.min(np.diag(A)))


# ---------------------------------------------------------------------------
# spectrum

@dataclass(frozen=True)
class Spectrum:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray   # (ndof, k), B-orthonormal, constrained DOFs only
    mesh: Mesh
    form: AssemblyForm

    @property
    def k(self) -> int:
        return len(self.eigenvalues)

    def full_dofs(self, n: int) -> np.ndarray:
        """DOF vector with the clamped DOFs at node 0 reinserted as zeros."""
        if not 0 <= n < self.k:
            raise FemError(f"eigenpair index {n} out of range")
        return np.concatenate([[0.0, 0.0], self.eigenvectors[:, n]])

    def _eval(self, n, x, shape_fn):
        x_arr = np.atleast_1d(np.asarray(x, dtype=float))
        if np.any(x_arr < 0.0) or np.any(x_arr > 1.0):
            raise FemError("evaluation point outside [0,1]")
        dofs = self.full_dofs(n)
        e = np.asarray(self.mesh.element_of(x_arr))
        nodes = np.asarray(self.mesh.nodes)
        a = nodes[e]
        h = nodes[e + 1] - a
        z = (x_arr - a) / h
        coefs = dofs[2 * e[:, None] + np.arange(4)]          # (npts, 4)
        shapes = np.asarray(shape_fn(z, h))                  # (4, npts)
        vals = np.einsum("ij,ji->i", coefs, shapes)
        return float(vals[0]) if np.asarray(x).ndim == 0 else vals

    def u(self, n, x):
        return self._eval(n, x, _shape_values)

    def du(self, n, x):
        return self._eval(n, x, _shape_d1)

    def d2u(self, n, x):
        return self._eval(n, x, _shape_d2)

    def d3u(self, n, x):
        return self._eval(n, x, _shape_d3)

    def moment(self, n, x):
        """p * u'' (the bending moment in beam language)."""
        return np.asarray(self.form.p(x)) * self.d2u(n, x)

    def dmoment(self, n, x):
        """(p u'')' = p u''' + p' u''; p' from the exact/interpolant derivative
        when available, else a central difference."""
        p = self.form.p
        if self.form.p_derivative is not None:
            dp = self.form.p_derivative(x)
        else:
            eps = 1e-6
            xm = np.clip(np.asarray(x, dtype=float) - eps, 0.0, 1.0)
            xp = np.clip(np.asarray(x, dtype=float) + eps, 0.0, 1.0)
            dp = (np.asarray(p(xp)) - np.asarray(p(xm))) / (xp - xm)
        return np.asarray(p(x)) * self.d3u(n, x) + np.asarray(dp) * self.d2u(n, x)

    def sample_grid(self, per_element: int = 32, endpoint_trim: bool = True) -> np.ndarray:
        nodes = np.asarray(self.mesh.nodes)
        xs = []
        for a, b in zip(nodes[:-1], nodes[1:]):
            xs.append(np.linspace(a, b, per_element, endpoint=False))
        xs = np.concatenate(xs + [[1.0]])
        if endpoint_trim:
            xs = xs[(xs > 0.0) & (xs < 1.0)]
        return xs


def solve_gevp(pair: SymmetricPair, k: int, form: AssemblyForm) -> Spectrum:
    """k smallest eigenpairs of A x = lambda B x, B-orthonormal vectors.

    When A is positive definite the reversed pencil B x = mu A x is solved
    through a Cholesky factor of A (after Jacobi scaling), so the small
    eigenvalues lambda = 1/mu come out with full relative accuracy; the
    forward reduction through B would lose eps * lambda_max absolutely,
    which is ruinous for lambda_0 on fine meshes.
    """
    A, B = pair.A, pair.B
    n = A.shape[0]
    if k < 1:
        raise FemError("k must be >= 1")
    if k > n:
        raise FemError(f"k={k} exceeds DOF count {n}")
    ok, piv = check_positive_definite(B)
    if not ok:
        raise FemError(f"B matrix not positive definite (pivot {piv:g})")

    d = 1.0 / np.sqrt(np.abs(np.diag(A)))
    As = A * np.outer(d, d)
    Bs = B * np.outer(d, d)
    try:
        L = np.linalg.cholesky(As)
    except np.linalg.LinAlgError:
        # indefinite stiffness (validation-mode inputs): forward reduction
        vals, vecs = scipy.linalg.eigh(A, B, subset_by_index=[0, k - 1])
        order = np.argsort(vals)
        return Spectrum(np.asarray(vals)[order], np.asarray(vecs)[:, order],
                        pair.mesh, form)

    M = scipy.linalg.solve_triangular(L, Bs, lower=True)
    M = scipy.linalg.solve_triangular(L, M.T, lower=True)
    M = 0.5 * (M + M.T)
    mu, y = scipy.linalg.eigh(M, subset_by_index=[n - k, n - 1])
    order = np.argsort(mu)[::-1]          # largest mu = smallest lambda
    mu = mu[order]
    y = y[:, order]
    if np.any(mu <= 0.0):
        raise FemError("reversed pencil produced non-positive eigenvalue")
    lam = 1.0 / mu
    x = d[:, None] * scipy.linalg.solve_triangular(L, y, lower=True, trans="T")
    x = x / np.sqrt(mu)[None, :]          # B-orthonormal: x^T B x = mu / mu
    return Spectrum(eigenvalues=lam, eigenvectors=x, mesh=pair.mesh, form=form)


def _band_gauss_solve(T: np.ndarray, b: np.ndarray, half_bw: int = 3) -> np.ndarray:
    """Solve T x = b by banded Gaussian elimination with partial pivoting.

    Pure-numpy so it works in extended precision, where LAPACK does not.
    T must have half-bandwidth `half_bw` (Hermite cubics couple at most
    four consecutive DOFs, so half_bw = 3).
    """
    n = len(b)
    U = T.copy()
    x = b.copy()
    for k in range(n - 1):
        m = min(n, k + half_bw + 1)
        p = k + int(np.argmax(np.abs(U[k:m, k])))
        if p != k:
            U[[k, p]] = U[[p, k]]
            x[[k, p]] = x[[p, k]]
        hi = min(n, k + 2 * half_bw + 1)
        f = U[k + 1:m, k] / U[k, k]
        U[k + 1:m, k:hi] -= np.outer(f, U[k, k:hi])
        x[k + 1:m] -= f * x[k]
    for k in range(n - 1, -1, -1):
        hi = min(n, k + 2 * half_bw + 1)
        x[k] = (x[k] - U[k, k + 1:hi] @ x[k + 1:hi]) / U[k, k]
    return x


def solve_gevp_refined(form: AssemblyForm, mesh: Mesh, k: int,
                       quad_order: int = 7) -> Spectrum:
    """k smallest eigenpairs, refined in extended precision.

    float64 rounding in assembly and factorization floors the attainable
    eigenvalue accuracy near eps * ||A|| / ||B||, which grows like the
    fourth power of the element count; by n = 512 that floor sits around
    1e-7 relative and masks the h^4 discretization error.  To get truly
    converged discrete eigenvalues the pencil is assembled a second time
    in longdouble and each float64 eigenpair (from sparse shift-invert
    Lanczos) is polished by shifted inverse iteration with a banded
    longdouble solver.
    """
    pair = assemble(form, mesh, quad_order=quad_order)
    A_sp = scipy.sparse.csc_matrix(pair.A)
    B_sp = scipy.sparse.csc_matrix(pair.B)
    kk = min(k, pair.A.shape[0] - 1)
    v0 = np.cos(np.arange(pair.A.shape[0], dtype=float))  # deterministic start
    vals, vecs = scipy.sparse.linalg.eigsh(A_sp, k=kk, M=B_sp, sigma=0.0,
                                           which="LM", v0=v0)
    order = np.argsort(vals)
    vals, vecs = vals[order], vecs[:, order]

    pair_ld = assemble(form, mesh, quad_order=quad_order, dtype=np.longdouble)
    lam_out, x_out = refine_eigenpairs(pair_ld.A, pair_ld.B, vals, vecs)
    return Spectrum(eigenvalues=lam_out, eigenvectors=x_out,
                    mesh=mesh, form=form)


def refine_eigenpairs(A_ld: np.ndarray, B_ld: np.ndarray,
                      vals: np.ndarray, vecs: np.ndarray,
                      sweeps: int = 3):
    """Polish float64 eigenpairs of A x = lam B x against longdouble
    matrices by shifted inverse iteration; returns float64 copies whose
    error is the discretization alone, not float64 linear algebra."""
    ld = np.longdouble
    lam_out = np.empty(len(vals))
    x_out = np.empty_like(np.asarray(vecs, dtype=float))
    for j in range(len(vals)):
        x = vecs[:, j].astype(ld)
        lam = (x @ (A_ld @ x)) / (x @ (B_ld @ x))
        for _ in range(sweeps):
            shift = lam * (1 - ld(1e-10))
            x = _band_gauss_solve(A_ld - shift * B_ld, B_ld @ x)
            x = x / np.sqrt(x @ (B_ld @ x))
            lam = (x @ (A_ld @ x)) / (x @ (B_ld @ x))
        lam_out[j] = float(lam)
        x_out[:, j] = x.astype(np.float64)
    return lam_out, x_out


def residuals(pair: SymmetricPair, spectrum: Spectrum) -> np.ndarray:
    """Backward errors ||A x - lam B x|| / ((||A|| + |lam| ||B||) ||x||).

    The scaling is required: ||A|| grows like (element count)^3, so an
    absolute residual would be dominated by float64 rounding alone.
    """
    norm_a = np.linalg.norm(pair.A, 2)
    norm_b = np.linalg.norm(pair.B, 2)
    res = []
    for i in range(spectrum.k):
        x = spectrum.eigenvectors[:, i]
        lam = spectrum.eigenvalues[i]
        scale = (norm_a + abs(lam) * norm_b) * np.linalg.norm(x)
        res.append(np.linalg.norm(pair.A @ x - lam * pair.B @ x) / scale)
    return np.asarray(res)


def orthonormality_residual(pair: SymmetricPair, spectrum: Spectrum) -> float:
    g = spectrum.eigenvectors.T @ pair.B @ spectrum.eigenvectors
    return float(np.max(np.abs(g - np.eye(spectrum.k))))
