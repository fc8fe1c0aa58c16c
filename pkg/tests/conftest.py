"""Shared fixtures: problem files and cached pipeline runs.

The verification pipeline is expensive (tens of seconds per problem), so
results are computed once per session and shared by the module tests and
the acceptance suite.
"""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from beamosc import fem, pipeline, sigma, shooting
from beamosc.problem import parse_problem
from beamosc.transform import build_tau, push_forward

PROBLEM_DIR = Path(__file__).resolve().parent.parent / "problems"

THEOREM_FIXTURES = ("uniform_beam", "multipoint", "variable_coeffs",
                    "large_alpha")
ALL_FIXTURES = THEOREM_FIXTURES + ("cantilever",)


def load_spec(name: str):
    return parse_problem((PROBLEM_DIR / f"{name}.json").read_text())


@pytest.fixture(scope="session")
def specs():
    return {name: load_spec(name) for name in ALL_FIXTURES}


@pytest.fixture(scope="session")
def reductions(specs):
    """(hat, sigma_data, tilde) per fixture, default shift."""
    return {name: pipeline.reduce_problem(specs[name])
            for name in ALL_FIXTURES}


@pytest.fixture(scope="session")
def verified(specs):
    """Full pipeline results for every theorem-mode fixture."""
    return {name: pipeline.verify(specs[name])
            for name in THEOREM_FIXTURES}


@pytest.fixture(scope="session")
def shooting_results(reductions):
    out = {}
    for name in ALL_FIXTURES:
        hat, _, _ = reductions[name]
        prob = shooting.problem_from_hat(hat)
        out[name] = shooting.find_eigenvalues(prob, 8)
    return out


@pytest.fixture(scope="session")
def multipoint_parts(reductions):
    hat, sig, tilde = reductions["multipoint"]
    form = fem.form_from_hat(hat)
    mesh = fem.build_mesh(form.required_points, 256)
    tmesh = pipeline.mapped_mesh(mesh, tilde.omega)
    return {"hat": hat, "sig": sig, "tilde": tilde,
            "hat_mesh": mesh, "tilde_mesh": tmesh}
