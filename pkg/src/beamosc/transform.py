"""Piecewise-linear change of variables and push-forward to a two-point pencil.

The multipoint problem is straightened by a continuous increasing
piecewise-linear map tau of [0,1] onto itself whose only kinks sit at the
interface points and whose slope ratios there equal the given eta_i.  In the
new variable the interface terms collapse into point masses (atoms) of the
first-order coefficient, leaving a single-interval pencil.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coefficients import PiecewiseCoefficient
from .problem import InterfacePoint, ProblemSpec


class TransformError(ValueError):
    pass


@dataclass(frozen=True)
class PiecewiseLinearMap:
    knots: tuple[float, ...]   # 0 = x_0 < xi_0 < ... < xi_m < 1
    slopes: tuple[float, ...]  # one positive slope per interval

    def __post_init__(self):
        if self.knots[0] != 0.0 or self.knots[-1] != 1.0:
            raise TransformError("map must cover [0,1]")
        if len(self.slopes) != len(self.knots) - 1:
            raise TransformError("one slope per interval required")
        if any(s <= 0.0 for s in self.slopes):
            raise TransformError("slopes must be positive")
        total = sum(
            s * (b - a) for s, a, b in zip(self.slopes, self.knots, self.knots[1:])
        )
        if abs(total - 1.0) > 1e-12:
            raise TransformError(f"map does not land on [0,1]: total rise {total}")

    @property
    def images(self) -> tuple[float, ...]:
        vals = [0.0]
        for s, a, b in zip(self.slopes, self.knots, self.knots[1:]):
            vals.append(vals[-1] + s * (b - a))
        vals[-1] = 1.0
        return tuple(vals)

    def __call__(self, x):
        x_arr = np.asarray(x, dtype=float)
        knots = np.asarray(self.knots)
        images = np.asarray(self.images)
        idx = np.clip(np.searchsorted(knots, x_arr, side="right") - 1, 0, len(self.slopes) - 1)
        vals = images[idx] + np.asarray(self.slopes)[idx] * (x_arr - knots[idx])
        return float(vals) if x_arr.ndim == 0 else vals

    def inverse(self, t):
        t_arr = np.asarray(t, dtype=float)
        knots = np.asarray(self.knots)
        images = np.asarray(self.images)
        idx = np.clip(np.searchsorted(images, t_arr, side="right") - 1, 0, len(self.slopes) - 1)
        vals = knots[idx] + (t_arr - images[idx]) / np.asarray(self.slopes)[idx]
        return float(vals) if t_arr.ndim == 0 else vals

    def slope_at(self, x: float, side: str = "+") -> float:
        knots = np.asarray(self.knots)
        if side == "-":
            idx = int(np.searchsorted(knots, x, side="left")) - 1
        else:
            idx = int(np.searchsorted(knots, x, side="right")) - 1
        return self.slopes[min(max(idx, 0), len(self.slopes) - 1)]


@dataclass(frozen=True)
class Atom:
    location: float
    weight: float

    def __post_init__(self):
        if not 0.0 < self.location < 1.0:
            raise TransformError("atom location must lie strictly inside (0,1)")


@dataclass(frozen=True)
class HatPencil:
    """Single-interval pencil: stiffness  int p u'' v'' + <q, u'v'>  versus
    lambda-block  int r u v + alpha u'(1)v'(1) + beta u(1)v(1),
    with q split into an absolutely continuous density plus atoms."""

    p: PiecewiseCoefficient
    r: PiecewiseCoefficient
    q_density: PiecewiseCoefficient
    atoms: tuple[Atom, ...]
    alpha: float
    beta: float

    def required_points(self) -> list[float]:
        pts = set(self.p.breakpoints) | set(self.r.breakpoints) | set(self.q_density.breakpoints)
        pts |= {a.location for a in self.atoms}
        return sorted(pts)


def build_tau(interfaces: tuple[InterfacePoint, ...]) -> PiecewiseLinearMap:
    """Canonical tau: kinks at the xi_i, slope ratios eta_i, normalized onto [0,1]."""
    knots = [0.0] + [i.xi for i in interfaces] + [1.0]
    ratios = [1.0]
    for i in interfaces:
        ratios.append(ratios[-1] * i.eta)
    lengths = [b - a for a, b in zip(knots, knots[1:])]
    base = 1.0 / sum(rho * dl for rho, dl in zip(ratios, lengths))
    return PiecewiseLinearMap(tuple(knots), tuple(base * rho for rho in ratios))


def _compose_affine(coeff: PiecewiseCoefficient, tau: PiecewiseLinearMap,
                    power: int) -> PiecewiseCoefficient:
    """Push a piecewise polynomial through tau: value c(tau^{-1}(t)) * s^power,
    expressed in the local variable of the image interval.  Breakpoints of the
    coefficient are merged with the knots first so every output piece has a
    single slope."""
    merged = coeff.refine(tau.knots)
    out_bp = []
    out_pieces = []
    for a, (c0, c1, c2) in zip(merged.breakpoints[:-1], merged.pieces):
        s = tau.slope_at(a, side="+")
        fac = s**power
        out_bp.append(tau(a))
        # local variable v = t - tau(a) = s * (x - a)
        out_pieces.append((fac * c0, fac * c1 / s, fac * c2 / (s * s)))
    out_bp.append(1.0)
    out_bp[0] = 0.0
    return PiecewiseCoefficient(tuple(out_bp), tuple(out_pieces))


def push_forward(spec: ProblemSpec, tau: PiecewiseLinearMap) -> HatPencil:
    """Transform the multipoint problem into the single-interval hat pencil."""
    expected = {i.xi for i in spec.interfaces}
    if set(tau.knots) - {0.0, 1.0} != expected:
        raise TransformError("tau knots do not match the interface points")

    p_hat = _compose_affine(spec.p, tau, power=3)
    r_hat = _compose_affine(spec.r, tau, power=-1)
    q_hat = _compose_affine(spec.q, tau, power=1)

    atoms = []
    for i in spec.interfaces:
        if i.alpha_i != 0.0:
            s_left = tau.slope_at(i.xi, side="-")
            atoms.append(Atom(location=tau(i.xi), weight=i.alpha_i * s_left * s_left))

    s_last = tau.slopes[-1]
    return HatPencil(
        p=p_hat,
        r=r_hat,
        q_density=q_hat,
        atoms=tuple(atoms),
        alpha=spec.alpha * s_last * s_last,
        beta=spec.beta,
    )


def pull_back_function(u_eval, du_eval, tau: PiecewiseLinearMap, xs):
    """Samples of y = u o tau and y' = (u' o tau) * tau' on the grid xs."""
    xs = np.asarray(xs, dtype=float)
    ts = tau(xs)
    knots = np.asarray(tau.knots)
    idx = np.clip(np.searchsorted(knots, xs, side="right") - 1, 0, len(tau.slopes) - 1)
    slopes = np.asarray(tau.slopes)[idx]
    return np.asarray(u_eval(ts)), np.asarray(du_eval(ts)) * slopes
