"""Piecewise-polynomial coefficients on [0,1].

Each coefficient is a list of breakpoints 0 = b_0 < ... < b_N = 1 together
with one polynomial of degree <= 2 per interval, written in the local
variable s = x - b_i.  Evaluation is right-continuous at interior
breakpoints; at x = 1 the last piece is used.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MAX_DEGREE = 2


class CoefficientError(ValueError):
    pass


@dataclass(frozen=True)
class PiecewiseCoefficient:
    breakpoints: tuple[float, ...]
    pieces: tuple[tuple[float, float, float], ...]  # (c0, c1, c2), local variable

    def __post_init__(self):
        bp = self.breakpoints
        if len(bp) < 2:
            raise CoefficientError("need at least two breakpoints")
        if bp[0] != 0.0 or bp[-1] != 1.0:
            raise CoefficientError("breakpoints must start at 0 and end at 1")
        if any(b1 >= b2 for b1, b2 in zip(bp, bp[1:])):
            raise CoefficientError("breakpoints must be strictly ascending")
        if len(self.pieces) != len(bp) - 1:
            raise CoefficientError("need exactly one piece per interval")
        for c in self.pieces:
            if len(c) != MAX_DEGREE + 1:
                raise CoefficientError("pieces must have three coefficients (c0, c1, c2)")

    @classmethod
    def constant(cls, value: float) -> "PiecewiseCoefficient":
        return cls((0.0, 1.0), ((float(value), 0.0, 0.0),))

    def piece_index(self, x: float) -> int:
        if x < 0.0 or x > 1.0:
            raise CoefficientError(f"x={x} outside [0,1]")
        i = int(np.searchsorted(self.breakpoints, x, side="right")) - 1
        return min(max(i, 0), len(self.pieces) - 1)

    def __call__(self, x):
        x_arr = np.asarray(x, dtype=float)
        if np.any(x_arr < 0.0) or np.any(x_arr > 1.0):
            raise CoefficientError("evaluation point outside [0,1]")
        bp = np.asarray(self.breakpoints)
        idx = np.clip(np.searchsorted(bp, x_arr, side="right") - 1, 0, len(self.pieces) - 1)
        c = np.asarray(self.pieces)  # (npieces, 3)
        s = x_arr - bp[idx]
        vals = c[idx, 0] + c[idx, 1] * s + c[idx, 2] * s * s
        if np.isscalar(x) or x_arr.ndim == 0:
            return float(vals)
        return vals

    def value_from_left(self, x: float) -> float:
        """Left limit at x (the piece ending at x when x is a breakpoint)."""
        if x <= 0.0:
            return float(self(0.0))
        i = int(np.searchsorted(self.breakpoints, x, side="left")) - 1
        i = min(max(i, 0), len(self.pieces) - 1)
        c0, c1, c2 = self.pieces[i]
        s = x - self.breakpoints[i]
        return c0 + c1 * s + c2 * s * s

    def derivative(self) -> "PiecewiseCoefficient":
        return PiecewiseCoefficient(
            self.breakpoints,
            tuple((c1, 2.0 * c2, 0.0) for _, c1, c2 in self.pieces),
        )

    def integral(self) -> float:
        """Exact integral over [0,1]."""
        total = 0.0
        for (a, b), (c0, c1, c2) in zip(zip(self.breakpoints, self.breakpoints[1:]), self.pieces):
            h = b - a
            total += c0 * h + c1 * h * h / 2.0 + c2 * h**3 / 3.0
        return total

    def refine(self, extra_points) -> "PiecewiseCoefficient":
        """Equivalent coefficient whose breakpoint set includes extra_points."""
        pts = sorted(set(self.breakpoints) | {float(x) for x in extra_points})
        if pts[0] < 0.0 or pts[-1] > 1.0:
            raise CoefficientError("refinement points outside [0,1]")
        pieces = []
        for a in pts[:-1]:
            i = self.piece_index(a)
            c0, c1, c2 = self.pieces[i]
            s = a - self.breakpoints[i]
            # re-expand around the new left endpoint
            pieces.append((c0 + c1 * s + c2 * s * s, c1 + 2.0 * c2 * s, c2))
        return PiecewiseCoefficient(tuple(pts), tuple(pieces))

    def min_on_grid(self, n: int = 1024) -> float:
        xs = np.linspace(0.0, 1.0, n + 1)
        xs = np.unique(np.concatenate([xs, np.asarray(self.breakpoints)]))
        return float(np.min(self(xs)))

    def to_json(self):
        if len(self.pieces) == 1 and self.pieces[0][1] == 0.0 and self.pieces[0][2] == 0.0:
            return self.pieces[0][0]
        return {
            "breakpoints": list(self.breakpoints),
            "pieces": [list(c) for c in self.pieces],
        }

    @classmethod
    def from_json(cls, obj) -> "PiecewiseCoefficient":
        if isinstance(obj, (int, float)):
            return cls.constant(float(obj))
        if not isinstance(obj, dict):
            raise CoefficientError("coefficient must be a number or an object")
        for key in ("breakpoints", "pieces"):
            if key not in obj:
                raise CoefficientError(f"coefficient object missing field '{key}'")
        bp = tuple(float(b) for b in obj["breakpoints"])
        pieces = []
        for c in obj["pieces"]:
            c = list(c) + [0.0] * (MAX_DEGREE + 1 - len(c))
            if len(c) > MAX_DEGREE + 1:
                raise CoefficientError("polynomial pieces limited to degree 2")
            pieces.append(tuple(float(v) for v in c))
        return cls(bp, tuple(pieces))
