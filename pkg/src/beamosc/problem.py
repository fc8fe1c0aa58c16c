"""Problem data for the fourth-order multipoint boundary eigenvalue problem.

The differential equation is (p y'')'' - (q y')' = lambda r y on [0,1] with
clamped left end, interface conditions at interior points xi_i and two
boundary conditions at 1 that carry the spectral parameter:

    (p y'')(1) - alpha lambda y'(1) = 0,
    [(p y'')' - q y'](1) + beta lambda y(1) = 0.

At each interface xi_i: y is continuous, y'(xi+0) = eta_i y'(xi-0),
eta_i (p y'')(xi+0) - (p y'')(xi-0) = alpha_i y'(xi-0), and the flux
(p y'')' - q y' is continuous.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .coefficients import CoefficientError, PiecewiseCoefficient

MODES = ("theorem", "validation")


class ProblemError(ValueError):
    """Raised for malformed problem documents or violated invariants."""


@dataclass(frozen=True)
class InterfacePoint:
    xi: float
    eta: float
    alpha_i: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.xi < 1.0:
            raise ProblemError(f"interface violates 0 < xi < 1 (xi={self.xi})")
        if not self.eta > 0.0:
            raise ProblemError(f"interface violates eta > 0 (eta={self.eta})")


@dataclass(frozen=True)
class CheckRecord:
    name: str
    passed: bool
    detail: str = ""


@dataclass(frozen=True)
class ProblemSpec:
    p: PiecewiseCoefficient
    q: PiecewiseCoefficient
    r: PiecewiseCoefficient
    interfaces: tuple[InterfacePoint, ...] = ()
    alpha: float = 0.0
    beta: float = 1.0
    mode: str = "theorem"

    def to_json(self) -> dict:
        return {
            "p": self.p.to_json(),
            "q": self.q.to_json(),
            "r": self.r.to_json(),
            "interfaces": [
                {"xi": i.xi, "eta": i.eta, "alpha_i": i.alpha_i} for i in self.interfaces
            ],
            "alpha": self.alpha,
            "beta": self.beta,
            "mode": self.mode,
        }


def validate_problem(spec: ProblemSpec) -> list[CheckRecord]:
    """One record per invariant; failures are data, not exceptions."""
    checks = []

    pmin = spec.p.min_on_grid()
    checks.append(CheckRecord("p strictly positive", pmin > 0.0, f"min p = {pmin:g}"))

    rmin = spec.r.min_on_grid()
    # r may vanish at isolated breakpoints only; require positivity off them
    r_ok = rmin > 0.0 or _positive_off_breakpoints(spec.r)
    checks.append(CheckRecord("r positive almost everywhere", r_ok, f"min r = {rmin:g}"))

    xis = [i.xi for i in spec.interfaces]
    ordered = all(a < b for a, b in zip(xis, xis[1:]))
    checks.append(CheckRecord("interfaces strictly ordered", ordered, f"xi = {xis}"))

    checks.append(CheckRecord("alpha >= 0", spec.alpha >= 0.0, f"alpha = {spec.alpha:g}"))

    if spec.mode == "theorem":
        checks.append(CheckRecord("beta > 0 (theorem mode)", spec.beta > 0.0, f"beta = {spec.beta:g}"))
    else:
        checks.append(CheckRecord("beta >= 0 (validation mode)", spec.beta >= 0.0, f"beta = {spec.beta:g}"))

    checks.append(CheckRecord("mode recognized", spec.mode in MODES, f"mode = {spec.mode}"))
    return checks


def _positive_off_breakpoints(c: PiecewiseCoefficient, n: int = 1024) -> bool:
    import numpy as np

    xs = np.linspace(0.0, 1.0, n + 1)
    xs = xs[~np.isin(xs, c.breakpoints)]
    return bool(np.all(c(xs) > 0.0))


_SCHEMA_FIELDS = ("p", "q", "r")


def parse_problem(text: str) -> ProblemSpec:
    """Parse and validate a problem JSON document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ProblemError(f"invalid JSON: {e}") from e
    return problem_from_dict(doc)


def problem_from_dict(doc: dict) -> ProblemSpec:
    if not isinstance(doc, dict):
        raise ProblemError("problem document must be a JSON object")
    coeffs = {}
    for name in _SCHEMA_FIELDS:
        if name not in doc:
            raise ProblemError(f"missing field '{name}'")
        try:
            coeffs[name] = PiecewiseCoefficient.from_json(doc[name])
        except CoefficientError as e:
            raise ProblemError(f"field '{name}': {e}") from e

    interfaces = []
    for k, entry in enumerate(doc.get("interfaces", [])):
        if not isinstance(entry, dict) or "xi" not in entry or "eta" not in entry:
            raise ProblemError(f"interfaces[{k}] must be an object with 'xi' and 'eta'")
        interfaces.append(
            InterfacePoint(
                xi=float(entry["xi"]),
                eta=float(entry["eta"]),
                alpha_i=float(entry.get("alpha_i", 0.0)),
            )
        )

    mode = doc.get("mode", "theorem")
    if mode not in MODES:
        raise ProblemError(f"mode must be one of {MODES}, got '{mode}'")

    spec = ProblemSpec(
        p=coeffs["p"],
        q=coeffs["q"],
        r=coeffs["r"],
        interfaces=tuple(interfaces),
        alpha=float(doc.get("alpha", 0.0)),
        beta=float(doc.get("beta", 1.0)),
        mode=mode,
    )
    failures = [c for c in validate_problem(spec) if not c.passed]
    if failures:
        raise ProblemError("; ".join(f"{c.name} ({c.detail})" for c in failures))
    return spec


def serialize_problem(spec: ProblemSpec) -> str:
    return json.dumps(spec.to_json(), indent=2, sort_keys=True)


def eval_coefficient(c: PiecewiseCoefficient, x: float) -> float:
    """Value of the polynomial piece containing x (right-continuous)."""
    return c(x)
