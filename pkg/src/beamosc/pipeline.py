"""End-to-end orchestration: problem file to verification report.

The full chain is: interface conditions absorbed by the piecewise-linear
change of variable, giving a pencil with coefficient atoms; positivity
gates; the sigma factorization removing the first-order term; the
monotone second change of variable to the classical clamped form; then
two independent eigenvalue methods plus the oscillation and K-operator
check suites on the result.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import fem, koperator, oscillation, shooting, sigma
from .oscillation import SignCountPolicy, VerificationReport, CheckEntry
from .problem import ProblemSpec, ProblemError, serialize_problem, validate_problem
from .transform import build_tau, push_forward


class HypothesisViolation(RuntimeError):
    """The positivity hypothesis fails; theorem checks are not applicable."""


@dataclass(frozen=True)
class PipelineConfig:
    n: int = 256                  # hat-mesh density (tilde mesh is its image)
    k: int = 8
    eps_rel: float = 1e-8
    samples_per_element: int = 32
    seed: int = 20260826
    vd_trials: int = 200
    vd_mesh_n: int = 64
    lam_cap: float = shooting.DEFAULT_LAMBDA_CAP
    extra_shift: float = 0.0

    @property
    def policy(self) -> SignCountPolicy:
        return SignCountPolicy(eps_rel=self.eps_rel,
                               samples_per_element=self.samples_per_element)


@dataclass
class PipelineResult:
    spec: ProblemSpec
    config: PipelineConfig
    hat: object
    sigma_data: object
    tilde: object
    hat_mesh: fem.Mesh
    tilde_mesh: fem.Mesh
    hat_spectrum: fem.Spectrum
    tilde_spectrum: fem.Spectrum
    shooting_result: shooting.ShootingResult
    report: VerificationReport = field(default_factory=VerificationReport)

    @property
    def eigenvalues(self) -> np.ndarray:
        return self.tilde_spectrum.eigenvalues


def problem_hash(spec: ProblemSpec) -> str:
    return hashlib.sha256(serialize_problem(spec).encode()).hexdigest()[:16]


def mapped_mesh(hat_mesh: fem.Mesh, omega) -> fem.Mesh:
    """Tilde mesh as the omega-image of the hat mesh: both discretizations
    then resolve the same physical detail, which keeps their eigenvalue
    errors comparable even when sigma varies strongly."""
    img = np.sort(np.unique(np.asarray(omega(np.asarray(hat_mesh.nodes)))))
    return fem.Mesh(tuple(img))


def reduce_problem(spec: ProblemSpec, config: PipelineConfig = PipelineConfig()):
    """Run the transform chain with positivity gates; returns
    (hat, sigma_data, tilde).  Raises HypothesisViolation when the
    lambda=0 form is not positive definite in theorem mode."""
    failures = [c for c in validate_problem(spec) if not c.passed]
    if failures:
        raise ProblemError("; ".join(f"{c.name}: {c.detail}" for c in failures))
    tau = build_tau(spec.interfaces)
    hat = push_forward(spec, tau)
    if spec.mode == "theorem":
        ok4, piv4 = sigma.check_pencil_positivity(hat, n=config.n)
        if not ok4:
            raise HypothesisViolation(
                f"fourth-order form not positive definite (pivot {piv4:g})")
        ok2, piv2 = sigma.check_second_order_positivity(hat, n=config.n)
        if not ok2:
            raise HypothesisViolation(
                f"second-order form not positive definite (pivot {piv2:g})")
    sig = sigma.solve_sigma(hat, extra_shift=config.extra_shift)
    omega = sigma.build_omega(sig)
    tilde = sigma.transform_tilde(hat, sig, omega)
    return hat, sig, tilde


def solve(spec: ProblemSpec, config: PipelineConfig = PipelineConfig(),
          method: str = "both"):
    """Eigenvalues by the requested method(s) on the reduced problem.

    Returns a dict with per-method arrays; 'both' adds the relative
    discrepancy column.
    """
    hat, sig, tilde = reduce_problem(spec, config)
    out = {"hash": problem_hash(spec), "mode": spec.mode}
    if method not in ("fem", "shoot", "both"):
        raise ProblemError(f"unknown method '{method}'")
    if method in ("fem", "both"):
        form = fem.form_from_hat(hat)
        mesh = fem.build_mesh(form.required_points, config.n)
        if spec.mode == "theorem":
            sp = fem.solve_gevp_refined(form, mesh, config.k)
        else:
            pair = fem.assemble(form, mesh, quad_order=7)
            sp = fem.solve_gevp(pair, config.k, form)
        out["fem"] = sp.eigenvalues
    if method in ("shoot", "both"):
        prob = shooting.problem_from_hat(hat)
        res = shooting.find_eigenvalues(prob, config.k, lam_cap=config.lam_cap)
        out["shoot"] = res.eigenvalues
        out["shoot_complete"] = res.complete
    if method == "both":
        m = min(len(out["fem"]), len(out["shoot"]))
        out["discrepancy"] = np.abs(out["shoot"][:m] / out["fem"][:m] - 1.0)
    return out


def verify(spec: ProblemSpec,
           config: PipelineConfig = PipelineConfig()) -> PipelineResult:
    """The full verification pipeline in theorem mode."""
    if spec.mode != "theorem":
        raise ProblemError("verification requires theorem mode")
    hat, sig, tilde = reduce_problem(spec, config)

    hat_form = fem.form_from_hat(hat)
    hat_mesh = fem.build_mesh(hat_form.required_points, config.n)
    tilde_mesh = mapped_mesh(hat_mesh, tilde.omega)
    tilde_form = sigma.form_from_tilde(tilde)

    hat_spec = fem.solve_gevp_refined(hat_form, hat_mesh, config.k)
    tilde_spec = fem.solve_gevp_refined(tilde_form, tilde_mesh, config.k)

    prob = shooting.problem_from_hat(hat)
    shot = shooting.find_eigenvalues(prob, config.k, lam_cap=config.lam_cap)

    report = VerificationReport()
    policy = config.policy

    # cross-method and cross-reduction agreement
    m = min(config.k, len(shot.eigenvalues))
    for n in range(m):
        rel = abs(shot.eigenvalues[n] / hat_spec.eigenvalues[n] - 1.0)
        report.add(CheckEntry(
            name="agreement/fem-vs-shooting", index=n,
            expected="<= 1e-5", observed=float(rel),
            verdict="pass" if rel <= 1e-5 else "fail", margin=float(1e-5 - rel)))
    for n in range(config.k):
        rel = abs(tilde_spec.eigenvalues[n] / hat_spec.eigenvalues[n] - 1.0)
        tol = 1e-7 if n < 6 else 1e-5
        report.add(CheckEntry(
            name="agreement/hat-vs-tilde", index=n,
            expected=f"<= {tol:g}", observed=float(rel),
            verdict="pass" if rel <= tol else "fail", margin=float(tol - rel)))

    # oscillation suites on the tilde spectrum
    report.extend(oscillation.verify_simplicity(
        tilde_spec.eigenvalues, shot.suspected_non_simple))
    report.extend(oscillation.verify_main_theorem(tilde_spec, policy))
    report.extend(oscillation.verify_nonvanishing(tilde_spec, policy))
    report.extend(oscillation.verify_y_sign_range(tilde_spec, tilde, policy))

    # K-operator checks on a moderate mesh
    vd_mesh = mapped_mesh(
        fem.build_mesh(hat_form.required_points, config.vd_mesh_n), tilde.omega)
    op = koperator.KOperator(tilde, mesh=vd_mesh)
    report.extend(koperator.verify_variation_diminishing(
        op, trials=config.vd_trials, seed=config.seed, policy=policy))
    op_big = koperator.KOperator(tilde, mesh=tilde_mesh)
    kk = min(6, config.k)
    mu, _ = op_big.spectrum(kk)
    rel = float(np.max(np.abs(mu * tilde_spec.eigenvalues[:kk] - 1.0)))
    report.add(CheckEntry(
        name="k-operator/spectrum-correspondence", index=None,
        expected="<= 1e-8", observed=rel,
        verdict="pass" if rel <= 1e-8 else "fail", margin=float(1e-8 - rel)))

    return PipelineResult(
        spec=spec, config=config, hat=hat, sigma_data=sig, tilde=tilde,
        hat_mesh=hat_mesh, tilde_mesh=tilde_mesh,
        hat_spectrum=hat_spec, tilde_spectrum=tilde_spec,
        shooting_result=shot, report=report,
    )


def report_json(result: PipelineResult, timestamp: Optional[str] = None) -> str:
    doc = {
        "problem_hash": problem_hash(result.spec),
        "mode": result.spec.mode,
        "timestamp": timestamp,
        "policy": {
            "eps_rel": result.config.eps_rel,
            "samples_per_element": result.config.samples_per_element,
        },
        "mesh": {
            "n": result.config.n,
            "hat_elements": result.hat_mesh.n_elements,
            "tilde_elements": result.tilde_mesh.n_elements,
        },
        "seeds": {"variation_diminishing": result.config.seed},
        "eigenvalues": [float(v) for v in result.tilde_spectrum.eigenvalues],
        "gamma_sigma1": result.tilde.gamma_sigma1,
        "alpha_tilde": result.tilde.alpha,
        "checks": result.report.to_dicts(),
        "summary": {
            "total": len(result.report.entries),
            "failures": len(result.report.failures),
            "inconclusive": len(result.report.inconclusive),
        },
    }
    return json.dumps(doc, indent=2, sort_keys=True)
