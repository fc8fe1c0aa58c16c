"""Factorization step: positive solution sigma of the second-order form,
the substitution omega with omega' = sigma, and the classical two-point
problem that results.

sigma solves -(p f')' + q f = 0 distributionally with end flux p sigma'(1) =
gamma > 0 and normalization int sigma = 1; atoms of q induce jumps of the
flux p sigma' of size w_i * sigma(t_i).  The substitution u -> u o omega then
eliminates the first-order coefficient entirely, leaving

    (pt u'')'' = lambda rt u,
    u(0) = u'(0) = 0,
    (pt u'')(1) + [gamma*sigma(1) - at*lambda] u'(1) = 0,
    (pt u'')'(1) + beta*lambda u(1) = 0,

with pt o omega = p sigma^3, rt o omega = r / sigma, at = alpha * sigma(1)^2.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import fem
from .transform import HatPencil

RK4_STEPS_PER_UNIT = 2048


class SigmaError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# cubic Hermite curves on a fine grid

@dataclass(frozen=True)
class HermiteCurve:
    t: np.ndarray
    y: np.ndarray
    dy: np.ndarray

    def _locate(self, x):
        return np.clip(np.searchsorted(self.t, x, side="right") - 1, 0, len(self.t) - 2)

    def __call__(self, x):
        x_arr = np.atleast_1d(np.asarray(x, dtype=float))
        i = self._locate(x_arr)
        h = self.t[i + 1] - self.t[i]
        z = (x_arr - self.t[i]) / h
        h00 = 1.0 - 3.0 * z**2 + 2.0 * z**3
        h10 = z - 2.0 * z**2 + z**3
        h01 = 3.0 * z**2 - 2.0 * z**3
        h11 = z**3 - z**2
        vals = (h00 * self.y[i] + h * h10 * self.dy[i]
                + h01 * self.y[i + 1] + h * h11 * self.dy[i + 1])
        return float(vals[0]) if np.asarray(x).ndim == 0 else vals

    def derivative(self, x):
        x_arr = np.atleast_1d(np.asarray(x, dtype=float))
        i = self._locate(x_arr)
        h = self.t[i + 1] - self.t[i]
        z = (x_arr - self.t[i]) / h
        d00 = (-6.0 * z + 6.0 * z**2) / h
        d10 = 1.0 - 4.0 * z + 3.0 * z**2
        d01 = (6.0 * z - 6.0 * z**2) / h
        d11 = 3.0 * z**2 - 2.0 * z
        vals = (d00 * self.y[i] + d10 * self.dy[i]
                + d01 * self.y[i + 1] + d11 * self.dy[i + 1])
        return float(vals[0]) if np.asarray(x).ndim == 0 else vals

    def segment_integrals(self) -> np.ndarray:
        h = np.diff(self.t)
        return h / 2.0 * (self.y[:-1] + self.y[1:]) + h**2 / 12.0 * (self.dy[:-1] - self.dy[1:])


# ---------------------------------------------------------------------------
# second-order positivity gate (P1 elements on [0,1], u(0) = 0)

def assemble_second_order(hat: HatPencil, n: int = 256) -> np.ndarray:
    """Stiffness of the second-order form  int p u'v' + int q u v + atom terms
    on piecewise-linear elements with u(0) = 0."""
    mesh = fem.build_mesh(hat.required_points(), n)
    nodes = np.asarray(mesh.nodes)
    m = len(nodes)
    A = np.zeros((m, m))
    gz, gw = np.polynomial.legendre.leggauss(3)
    gz = 0.5 * (gz + 1.0)
    gw = 0.5 * gw
    for e in range(m - 1):
        a, b = nodes[e], nodes[e + 1]
        h = b - a
        for z, w in zip(gz, gw):
            x = a + h * z
            wj = w * h
            dN = np.array([-1.0 / h, 1.0 / h])
            N = np.array([1.0 - z, z])
            A[e:e + 2, e:e + 2] += wj * hat.p(x) * np.outer(dN, dN)
            A[e:e + 2, e:e + 2] += wj * hat.q_density(x) * np.outer(N, N)
    for atom in hat.atoms:
        i = mesh.node_index(atom.location)
        A[i, i] += atom.weight
    A = A[1:, 1:]
    return 0.5 * (A + A.T)


def check_pencil_positivity(hat: HatPencil, n: int = 256) -> tuple[bool, float]:
    """Positive definiteness of the fourth-order stiffness (Cholesky test)."""
    form = fem.form_from_hat(hat)
    mesh = fem.build_mesh(form.required_points, n)
    pair = fem.assemble(form, mesh)
    return fem.check_positive_definite(pair.A)


def check_second_order_positivity(hat: HatPencil, n: int = 256) -> tuple[bool, float]:
    return fem.check_positive_definite(assemble_second_order(hat, n))


# ---------------------------------------------------------------------------
# sigma construction

@dataclass(frozen=True)
class SigmaData:
    sigma: "PiecewiseHermite"       # sigma(t), C0, kinked derivative at atoms
    flux: "PiecewiseHermite"        # p sigma', jumps at atoms
    gamma: float
    shift: float                    # the B used in sigma* = g + B h

    @property
    def sigma_at_1(self) -> float:
        return float(self.sigma(1.0))

    def min_sigma(self) -> float:
        return float(min(seg.y.min() for seg in self.sigma.segments))


@dataclass(frozen=True)
class PiecewiseHermite:
    """Hermite curves on consecutive subintervals (left-closed), continuous or
    not at the junctions; evaluation is right-continuous."""
    segments: tuple[HermiteCurve, ...]

    @property
    def boundaries(self) -> list[float]:
        return [seg.t[0] for seg in self.segments]

    def _segment_of(self, x: float) -> HermiteCurve:
        i = bisect.bisect_right(self.boundaries, x) - 1
        return self.segments[max(i, 0)]

    def __call__(self, x):
        x_arr = np.atleast_1d(np.asarray(x, dtype=float))
        vals = np.array([float(self._segment_of(v)(v)) for v in x_arr])
        return float(vals[0]) if np.asarray(x).ndim == 0 else vals

    def derivative(self, x):
        x_arr = np.atleast_1d(np.asarray(x, dtype=float))
        vals = np.array([float(self._segment_of(v).derivative(v)) for v in x_arr])
        return float(vals[0]) if np.asarray(x).ndim == 0 else vals

    def left_value(self, x: float) -> float:
        i = bisect.bisect_left(self.boundaries, x) - 1
        return float(self.segments[max(i, 0)](x))


def _integrate_flux_system(hat: HatPencil):
    """RK4 on (sigma, f) with f = p sigma' for the two fundamental solutions
    g: (1,0) and h: (0,1); atoms applied as flux jumps f += w * sigma."""
    cuts = sorted(set(hat.required_points()) | {0.0, 1.0})
    atom_at = {a.location: a.weight for a in hat.atoms}
    state = np.array([[1.0, 0.0], [0.0, 1.0]])  # rows: (sigma, f) for g and h
    segments = []   # per smooth piece: (t nodes, sigma (2,n), dsigma (2,n), f (2,n))
    for a, b in zip(cuts[:-1], cuts[1:]):
        if a in atom_at:
            state[:, 1] += atom_at[a] * state[:, 0]
        nsteps = max(1, int(np.ceil((b - a) * RK4_STEPS_PER_UNIT)))
        h = (b - a) / nsteps
        ts_half = a + h / 2.0 * np.arange(2 * nsteps + 1)
        ts_half[-1] = b
        pinv = 1.0 / np.asarray(hat.p(ts_half))
        qv = np.asarray(hat.q_density(ts_half))
        # the piece is smooth up to b: take the left limit there, not the
        # right-continuous value of the next piece
        pinv[-1] = 1.0 / hat.p.value_from_left(b)
        qv[-1] = hat.q_density.value_from_left(b)
        traj = np.empty((nsteps + 1, 2, 2))
        traj[0] = state
        for j in range(nsteps):
            y = traj[j]
            k1 = _flux_rhs(y, pinv[2 * j], qv[2 * j])
            k2 = _flux_rhs(y + 0.5 * h * k1, pinv[2 * j + 1], qv[2 * j + 1])
            k3 = _flux_rhs(y + 0.5 * h * k2, pinv[2 * j + 1], qv[2 * j + 1])
            k4 = _flux_rhs(y + h * k3, pinv[2 * j + 2], qv[2 * j + 2])
            traj[j + 1] = y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        state = traj[-1].copy()
        t_nodes = a + h * np.arange(nsteps + 1)
        t_nodes[-1] = b
        p_nodes = np.asarray(hat.p(t_nodes))
        p_nodes[-1] = hat.p.value_from_left(b)
        dsigma = traj[:, :, 1] / p_nodes[:, None]
        segments.append((t_nodes, traj[:, :, 0], dsigma, traj[:, :, 1]))
    return segments


def _flux_rhs(y, pinv, q):
    d = np.empty_like(y)
    d[:, 0] = y[:, 1] * pinv
    d[:, 1] = q * y[:, 0]
    return d


def solve_sigma(hat: HatPencil, extra_shift: float = 0.0, n_gate: int = 256) -> SigmaData:
    """Uniformly positive solution of the flux ODE with positive end flux,
    normalized to unit integral.

    The one-parameter family g + B*h is pinned by a deterministic rule:
    B = max(1, B_pos, B_flux) where B_pos keeps min(g + B h) at or above half
    the minimum of g near 0 and B_flux makes the end flux at least 1.
    extra_shift adds to B (any admissible B gives an equivalent reduction;
    used by the invariance tests).
    """
    ok, piv = check_second_order_positivity(hat, n_gate)
    if not ok:
        raise SigmaError(
            f"second-order form not positive definite (pivot {piv:g}); "
            "sigma existence not guaranteed"
        )
    segments = _integrate_flux_system(hat)

    t_all = np.concatenate([seg[0] for seg in segments])
    g_all = np.concatenate([seg[1][:, 0] for seg in segments])
    h_all = np.concatenate([seg[1][:, 1] for seg in segments])
    if np.min(h_all[t_all > 0.0]) <= 0.0:
        raise SigmaError("fundamental solution h not strictly positive on (0,1]; "
                         "form numerically indefinite")

    near0 = t_all <= 1.0 / 16.0
    target = 0.5 * float(np.min(g_all[near0]))
    mask = h_all > 1e-12
    b_pos = float(np.max((target - g_all[mask]) / h_all[mask])) if np.any(mask) else 0.0
    fg1 = segments[-1][3][-1, 0]
    fh1 = segments[-1][3][-1, 1]
    if fh1 <= 0.0:
        raise SigmaError("end flux of h non-positive; form numerically indefinite")
    b_flux = (1.0 - fg1) / fh1
    shift = max(1.0, b_pos, b_flux) + extra_shift

    sig_curves = []
    flux_curves = []
    for t_nodes, sig, dsig, fl in segments:
        y = sig[:, 0] + shift * sig[:, 1]
        dy = dsig[:, 0] + shift * dsig[:, 1]
        f = fl[:, 0] + shift * fl[:, 1]
        q_nodes = np.asarray(hat.q_density(t_nodes))
        q_nodes[-1] = hat.q_density.value_from_left(t_nodes[-1])
        df = q_nodes * y
        sig_curves.append(HermiteCurve(t_nodes, y, dy))
        flux_curves.append(HermiteCurve(t_nodes, f, df))

    total = sum(float(np.sum(c.segment_integrals())) for c in sig_curves)
    if total <= 0.0 or min(float(c.y.min()) for c in sig_curves) <= 0.0:
        raise SigmaError("constructed sigma not uniformly positive")
    sig_curves = [HermiteCurve(c.t, c.y / total, c.dy / total) for c in sig_curves]
    flux_curves = [HermiteCurve(c.t, c.y / total, c.dy / total) for c in flux_curves]
    gamma = float(flux_curves[-1].y[-1])
    if gamma <= 0.0:
        raise SigmaError(f"end flux gamma = {gamma:g} not positive")
    return SigmaData(
        sigma=PiecewiseHermite(tuple(sig_curves)),
        flux=PiecewiseHermite(tuple(flux_curves)),
        gamma=gamma,
        shift=shift,
    )


# ---------------------------------------------------------------------------
# omega and the tilde problem

@dataclass(frozen=True)
class MonotoneMap:
    curve: PiecewiseHermite   # omega with omega' = sigma at the grid nodes

    def __call__(self, t):
        return self.curve(t)

    def derivative(self, t):
        return self.curve.derivative(t)

    def inverse(self, s):
        s_arr = np.atleast_1d(np.asarray(s, dtype=float))
        out = np.empty_like(s_arr)
        for k, sv in enumerate(s_arr):
            out[k] = self._invert_scalar(float(sv))
        return float(out[0]) if np.asarray(s).ndim == 0 else out

    def _invert_scalar(self, s: float) -> float:
        if s <= 0.0:
            return 0.0
        if s >= 1.0:
            return 1.0
        lo, hi = 0.0, 1.0
        for seg in self.curve.segments:
            if seg.y[-1] >= s:
                i = int(np.searchsorted(seg.y, s, side="right")) - 1
                i = min(max(i, 0), len(seg.t) - 2)
                lo, hi = seg.t[i], seg.t[i + 1]
                break
        t = 0.5 * (lo + hi)
        for _ in range(60):
            val = float(self.curve(t)) - s
            if abs(val) < 1e-15:
                break
            d = float(self.curve.derivative(t))
            if val > 0.0:
                hi = t
            else:
                lo = t
            t_new = t - val / d if d > 0.0 else 0.5 * (lo + hi)
            t = t_new if lo < t_new < hi else 0.5 * (lo + hi)
            if hi - lo < 1e-16:
                break
        return t


def build_omega(sig: SigmaData) -> MonotoneMap:
    """omega(t) = int_0^t sigma, integrated exactly on the Hermite interpolant."""
    curves = []
    acc = 0.0
    for seg in sig.sigma.segments:
        vals = np.concatenate([[acc], acc + np.cumsum(seg.segment_integrals())])
        curves.append(HermiteCurve(seg.t, vals, seg.y.copy()))
        acc = float(vals[-1])
    if abs(acc - 1.0) > 1e-10:
        raise SigmaError(f"omega(1) = {acc} deviates from 1 beyond tolerance")
    # pin the endpoint exactly
    last = curves[-1]
    last.y[-1] = 1.0
    return MonotoneMap(PiecewiseHermite(tuple(curves)))


class MappedCoefficient:
    """Coefficient of the tilde problem, defined in the mapped variable s:
    value(s) = F(omega^{-1}(s)) with F and F' given in the t variable."""

    def __init__(self, omega: MonotoneMap, f_t: Callable, df_t: Callable, sigma_t: Callable):
        self._omega = omega
        self._f = f_t
        self._df = df_t
        self._sigma = sigma_t

    def __call__(self, s):
        t = self._omega.inverse(s)
        return self._f(t)

    def derivative(self, s):
        t = self._omega.inverse(s)
        return self._df(t) / self._sigma(t)


@dataclass(frozen=True)
class TildeProblem:
    p: MappedCoefficient
    r: MappedCoefficient
    alpha: float               # at = alpha_hat * sigma(1)^2
    gamma_sigma1: float        # boundary constant gamma * sigma(1)
    beta: float
    required_points: tuple[float, ...]
    hat: HatPencil
    sigma_data: SigmaData
    omega: MonotoneMap


def transform_tilde(hat: HatPencil, sig: SigmaData, omega: MonotoneMap) -> TildeProblem:
    sigma, flux = sig.sigma, sig.flux

    def p_t(t):
        return np.asarray(hat.p(t)) * np.asarray(sigma(t)) ** 3

    def dp_t(t):
        s = np.asarray(sigma(t))
        ds = np.asarray(flux(t)) / np.asarray(hat.p(t))
        return (np.asarray(hat.p.derivative()(t)) * s**3
                + 3.0 * np.asarray(hat.p(t)) * s * s * ds)

    def r_t(t):
        return np.asarray(hat.r(t)) / np.asarray(sigma(t))

    def dr_t(t):
        s = np.asarray(sigma(t))
        ds = np.asarray(flux(t)) / np.asarray(hat.p(t))
        return (np.asarray(hat.r.derivative()(t)) * s - np.asarray(hat.r(t)) * ds) / (s * s)

    s1 = sig.sigma_at_1
    req = sorted({float(omega(t)) for t in hat.required_points()} | {0.0, 1.0})
    return TildeProblem(
        p=MappedCoefficient(omega, p_t, dp_t, sigma),
        r=MappedCoefficient(omega, r_t, dr_t, sigma),
        alpha=hat.alpha * s1 * s1,
        gamma_sigma1=sig.gamma * s1,
        beta=hat.beta,
        required_points=tuple(req),
        hat=hat,
        sigma_data=sig,
        omega=omega,
    )


def form_from_tilde(tilde: TildeProblem) -> fem.AssemblyForm:
    return fem.AssemblyForm(
        p=tilde.p,
        r=tilde.r,
        q=None,
        atoms=(),
        a_prime_end=tilde.gamma_sigma1,
        b_alpha=tilde.alpha,
        b_beta=tilde.beta,
        p_derivative=tilde.p.derivative,
        required_points=tilde.required_points,
    )


def compose_V(u_eval, du_eval, omega: MonotoneMap, sigma, t_grid):
    """Samples of Vu = u o omega and (Vu)' = (u' o omega) * sigma."""
    ts = np.asarray(t_grid, dtype=float)
    ss = np.asarray(omega(ts))
    return np.asarray(u_eval(ss)), np.asarray(du_eval(ss)) * np.asarray(sigma(ts))


# ---------------------------------------------------------------------------
# diagnostics

def weak_identity_residual(hat: HatPencil, sig: SigmaData, tests) -> float:
    """Relative residual of  int f v' + int q sigma v + sum w sigma(t_i) v(t_i)
    - gamma v(1)  over test functions v with v(0) = 0, given as (v, v') pairs."""
    gz, gw = np.polynomial.legendre.leggauss(4)
    gz = 0.5 * (gz + 1.0)
    gw = 0.5 * gw
    worst = 0.0
    for v, dv in tests:
        total = 0.0
        scale = abs(sig.gamma * float(v(1.0)))
        for seg_s, seg_f in zip(sig.sigma.segments, sig.flux.segments):
            t0, t1 = seg_s.t[:-1], seg_s.t[1:]
            h = t1 - t0
            for z, w in zip(gz, gw):
                x = t0 + h * z
                part1 = seg_f(x) * np.asarray(dv(x))
                part2 = np.asarray(hat.q_density(x)) * seg_s(x) * np.asarray(v(x))
                total += float(np.sum(w * h * (part1 + part2)))
                scale = max(scale, float(np.max(np.abs(w * h * part1))) * len(h))
        for atom in hat.atoms:
            total += atom.weight * float(sig.sigma(atom.location)) * float(v(atom.location))
        total -= sig.gamma * float(v(1.0))
        worst = max(worst, abs(total) / max(scale, 1e-30))
    return worst
