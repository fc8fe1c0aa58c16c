"""Sign-change counting and the oscillation-theorem verification suite.

The analytic statements under test are exact: the n-th eigenfunction
derivative changes sign exactly n times, the moment p u'' cannot vanish
where u' does, and the eigenfunction itself changes sign n-1 or n times,
settling on n below an explicit threshold.  Numerically each of these
needs a tolerance policy; counts that move when the policy is tightened
are reported as "inconclusive" rather than silently passed or failed.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np


class OscillationError(ValueError):
    pass


class IdenticallyZero(OscillationError):
    """All samples fall below the significance threshold."""


@dataclass(frozen=True)
class SignCountPolicy:
    eps_rel: float = 1e-8
    samples_per_element: int = 32

    def __post_init__(self):
        if self.eps_rel <= 0.0:
            raise OscillationError("eps_rel must be positive")
        if self.samples_per_element < 2:
            raise OscillationError("need at least 2 samples per element")

    def halved(self) -> "SignCountPolicy":
        return replace(self, eps_rel=0.5 * self.eps_rel)

    def densified(self) -> "SignCountPolicy":
        return replace(self, samples_per_element=2 * self.samples_per_element)


def count_sign_changes(xs: np.ndarray, fs: np.ndarray,
                       policy: SignCountPolicy = SignCountPolicy()) -> int:
    """Count strict sign alternations of the surviving samples.

    Samples with |f| <= eps_rel * max|f| are dropped first, which removes
    endpoint zeros and machine-noise dips around tangential near-zeros.
    """
    xs = np.asarray(xs, dtype=float)
    fs = np.asarray(fs, dtype=float)
    if len(fs) < 2:
        raise OscillationError("need at least 2 samples")
    if np.any(np.diff(xs) < 0.0):
        raise OscillationError("sample abscissae must be ordered")
    top = np.max(np.abs(fs))
    keep = np.abs(fs) > policy.eps_rel * top
    if top == 0.0 or not np.any(keep):
        raise IdenticallyZero("all samples below threshold")
    signs = np.sign(fs[keep])
    return int(np.sum(signs[1:] != signs[:-1]))


@dataclass(frozen=True)
class CheckEntry:
    name: str
    index: Optional[int]
    expected: object
    observed: object
    verdict: str                  # "pass" | "fail" | "inconclusive"
    margin: Optional[float] = None

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"


@dataclass
class VerificationReport:
    entries: list = field(default_factory=list)

    def add(self, entry: CheckEntry) -> None:
        self.entries.append(entry)

    def extend(self, entries) -> None:
        self.entries.extend(entries)

    @property
    def all_passed(self) -> bool:
        return all(e.verdict == "pass" for e in self.entries)

    @property
    def failures(self) -> list:
        return [e for e in self.entries if e.verdict == "fail"]

    @property
    def inconclusive(self) -> list:
        return [e for e in self.entries if e.verdict == "inconclusive"]

    def to_dicts(self) -> list:
        return [
            {
                "name": e.name,
                "index": e.index,
                "expected": _plain(e.expected),
                "observed": _plain(e.observed),
                "verdict": e.verdict,
                "margin": e.margin,
            }
            for e in self.entries
        ]


def _plain(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


# ---------------------------------------------------------------------------
# individual suites.  Each takes the FEM spectrum of the tilde problem
# (whose evaluators provide u, u', and the moment p u'') plus the policy.

def verify_simplicity(eigenvalues: np.ndarray,
                      suspected_non_simple: Sequence[float] = (),
                      gap_tol: float = 1e-6) -> list:
    """All relative spectral gaps must exceed gap_tol and the shooting
    scan must not have flagged any near-double root."""
    lam = np.asarray(eigenvalues, dtype=float)
    entries = []
    for n in range(len(lam) - 1):
        gap = (lam[n + 1] - lam[n]) / lam[n]
        entries.append(CheckEntry(
            name="simplicity/gap", index=n,
            expected=f"> {gap_tol:g}", observed=float(gap),
            verdict="pass" if gap > gap_tol else "fail",
            margin=float(gap - gap_tol),
        ))
    entries.append(CheckEntry(
        name="simplicity/no-suspected-double", index=None,
        expected=0, observed=len(suspected_non_simple),
        verdict="pass" if not suspected_non_simple else "fail",
    ))
    return entries


def _stable_count(sampler: Callable, mesh_nodes: np.ndarray,
                  policy: SignCountPolicy):
    """Count with the given policy and re-count under a halved threshold
    and doubled density; returns (count, stable?)."""
    def grid(p):
        # endpoints are included: a genuine endpoint zero falls below the
        # relative threshold anyway, while a crossing in the last
        # sub-sample gap would otherwise be missed entirely
        xs = []
        for a, b in zip(mesh_nodes[:-1], mesh_nodes[1:]):
            xs.append(np.linspace(a, b, p.samples_per_element, endpoint=False))
        return np.concatenate(xs + [[mesh_nodes[-1]]])

    counts = []
    for p in (policy, policy.halved(), policy.densified()):
        xs = grid(p)
        counts.append(count_sign_changes(xs, sampler(xs), p))
    return counts[0], counts[0] == counts[1] == counts[2]


def verify_main_theorem(spectrum, policy: SignCountPolicy = SignCountPolicy(),
                        n_max: Optional[int] = None) -> list:
    """SC(u'_n) == n for every computed mode."""
    nodes = np.asarray(spectrum.mesh.nodes)
    entries = []
    for n in range(spectrum.k if n_max is None else min(n_max + 1, spectrum.k)):
        count, stable = _stable_count(lambda xs, n=n: spectrum.du(n, xs),
                                      nodes, policy)
        if not stable:
            verdict = "inconclusive"
        else:
            verdict = "pass" if count == n else "fail"
        entries.append(CheckEntry(
            name="main-theorem/SC(u')", index=n,
            expected=n, observed=count, verdict=verdict,
        ))
    return entries


def _derivative_zeros(spectrum, n: int, policy: SignCountPolicy,
                      tol: float = 1e-10) -> np.ndarray:
    """Interior zeros of u'_n located by bisection between samples of
    opposite sign."""
    nodes = np.asarray(spectrum.mesh.nodes)
    xs = spectrum.sample_grid(per_element=policy.samples_per_element,
                              endpoint_trim=False)
    fs = spectrum.du(n, xs)
    zeros = []
    for i in range(len(xs) - 1):
        a, b = xs[i], xs[i + 1]
        fa, fb = fs[i], fs[i + 1]
        if fa == 0.0 or fa * fb >= 0.0:
            continue
        while b - a > tol:
            m = 0.5 * (a + b)
            fm = spectrum.du(n, m)
            if fm == 0.0:
                a = b = m
                break
            if fa * fm < 0.0:
                b = m
            else:
                a, fa = m, fm
        z = 0.5 * (a + b)
        if 0.0 < z < 1.0:
            zeros.append(z)
    return np.asarray(zeros)


def verify_nonvanishing(spectrum, policy: SignCountPolicy = SignCountPolicy(),
                        n_max: int = 5, threshold: float = 1e-6) -> list:
    """The moment p u'' must be bounded away from zero at 0 and at every
    interior zero of u'."""
    entries = []
    for n in range(min(n_max + 1, spectrum.k)):
        xs = spectrum.sample_grid(per_element=policy.samples_per_element,
                                  endpoint_trim=False)
        top = np.max(np.abs(spectrum.moment(n, xs)))
        m0 = abs(spectrum.moment(n, 0.0))
        entries.append(CheckEntry(
            name="nonvanishing/moment-at-0", index=n,
            expected=f"> {threshold:g}*max", observed=float(m0 / top),
            verdict="pass" if m0 > threshold * top else "fail",
            margin=float(m0 / top - threshold),
        ))
        for z in _derivative_zeros(spectrum, n, policy):
            mz = abs(spectrum.moment(n, z))
            entries.append(CheckEntry(
                name="nonvanishing/moment-at-u'-zero", index=n,
                expected=f"> {threshold:g}*max", observed=float(mz / top),
                verdict="pass" if mz > threshold * top else "fail",
                margin=float(mz / top - threshold),
            ))
    return entries


def verify_y_sign_range(spectrum, tilde, policy: SignCountPolicy = SignCountPolicy(),
                        n_max: Optional[int] = None) -> list:
    """n-1 <= SC(u_n) <= n, sharpening to == n below the threshold
    alpha~ * lambda_n <= gamma * sigma(1)."""
    nodes = np.asarray(spectrum.mesh.nodes)
    entries = []
    for n in range(spectrum.k if n_max is None else min(n_max + 1, spectrum.k)):
        count, stable = _stable_count(lambda xs, n=n: spectrum.u(n, xs),
                                      nodes, policy)
        lam = spectrum.eigenvalues[n]
        sharp = tilde.alpha * lam <= tilde.gamma_sigma1
        if sharp:
            expected = f"== {n}"
            ok = count == n
        else:
            expected = f"{n - 1}..{n}"
            ok = n - 1 <= count <= n
        verdict = "inconclusive" if not stable else ("pass" if ok else "fail")
        entries.append(CheckEntry(
            name="y-sign-range/SC(u)" + ("/sharp" if sharp else ""),
            index=n, expected=expected, observed=count, verdict=verdict,
        ))
    return entries
