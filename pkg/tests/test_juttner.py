import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from relbgk.bessel import chi, m_beta, psi, ratio_k1k2
from relbgk.errors import DomainError
from relbgk.juttner import (IDENTITY_TOL, JuttnerParams, closure_equilibrium, default_grid,
                            free_energy_gap, juttner_eval, juttner_field, juttner_log,
                            lambdas_from_params, match_equilibrium, params_from_lambdas,
                            tensor_decomposition_check, verify_all, verify_entropy_fluxes,
                            verify_general_moments, verify_rest_moments, refinement_study,
                            certified_tolerance, RefinementLevel)
from relbgk.errors import ConvergenceError
from relbgk.phase_space import DistributionField, MomentumGrid


@pytest.mark.parametrize("kw", [dict(n=0.0, beta=1.0), dict(n=1.0, beta=-1.0),
                                dict(n=np.nan, beta=1.0), dict(n=1.0, beta=1.0, u=(np.inf, 0, 0))])
def test_params_validation(kw):
    with pytest.raises(DomainError):
        JuttnerParams(**kw)


def test_closed_forms():
    p = JuttnerParams(2.0, 3.0, (0.4, 0.0, 0.0))
    assert p.u0 == pytest.approx(np.sqrt(1.16))
    assert p.alpha == pytest.approx(ratio_k1k2(3.0))
    assert p.energy == pytest.approx(2.0 * psi(3.0))
    assert p.pressure == pytest.approx(2.0 / 3.0)
    assert np.exp(p.log_prefactor) == pytest.approx(2.0 / m_beta(3.0))
    # enthalpy per particle
    assert (p.energy + p.pressure) / p.n == pytest.approx(chi(3.0))


def test_eval_matches_direct_formula():
    p = JuttnerParams(1.5, 2.0, (0.3, -0.2, 0.1))
    q = np.array([[0.0, 0.0, 0.0], [1.0, 2.0, -0.5], [10.0, 0.0, 0.0]])
    q0 = np.sqrt(1 + np.sum(q * q, axis=1))
    direct = p.n / m_beta(p.beta) * np.exp(-p.beta * (p.u0 * q0 - q @ p.uvec))
    assert np.allclose(juttner_eval(p, q), direct, rtol=1e-13)
    assert np.allclose(juttner_log(p, q), np.log(direct), rtol=1e-13)


def test_rest_report_has_all_identities():
    p = JuttnerParams(1.0, 5.0)
    rep = verify_rest_moments(p)
    assert len(rep.items) == 7 and rep.passed
    assert "identity" in rep.to_text() and len(rep.rows()) == 7


@pytest.mark.parametrize("n,beta,u", [(0.5, 0.5, (0.3, 0.0, 0.0)), (2.0, 20.0, (1.0, 0.0, 0.0)),
                                      (1.0, 1.0, (0.2, 0.2, -0.1))])
def test_identity_reports_pass(n, beta, u):
    p = JuttnerParams(n, beta, u)
    reps = verify_all(p, default_grid(p))
    assert [len(r.items) for r in reps] == [10, 10, 7]
    assert all(r.passed for r in reps), "\n".join(r.to_text() for r in reps)
    assert max(r.max_residual for r in reps) <= IDENTITY_TOL


def test_individual_reports_agree_with_combined():
    p = JuttnerParams(1.0, 5.0, (0.3, 0.0, 0.0))
    g = default_grid(p)
    assert verify_general_moments(p, g).passed
    assert tensor_decomposition_check(p, g).passed
    assert verify_entropy_fluxes(p, g).passed


def test_coarse_grid_fails_honestly():
    p = JuttnerParams(1.0, 1.0)
    rep = verify_rest_moments(p, MomentumGrid.cube(3.0, 6))
    assert not rep.passed


@settings(max_examples=40, deadline=None)
@given(st.floats(0.1, 10.0), st.floats(0.2, 50.0),
       st.lists(st.floats(-2.0, 2.0), min_size=3, max_size=3))
def test_lambda_parametrisation_round_trip(n, beta, u):
    lam = lambdas_from_params(n, beta, np.array(u))
    n2, b2, u2 = params_from_lambdas(lam)
    assert n2[0] == pytest.approx(n, rel=1e-10)
    assert b2[0] == pytest.approx(beta, rel=1e-10)
    assert np.allclose(u2[0], u, atol=1e-10)


def test_matching_reproduces_grid_equilibrium(small_cube):
    g = small_cube
    lam = lambdas_from_params(1.2, 1.5, np.array([0.2, 0.0, -0.1]))
    basis = np.column_stack([np.ones(g.size), -g.q0, g.q])
    f = np.exp(basis @ lam[0])
    res = match_equilibrium(g, f)
    assert np.allclose(res.lam, lam, rtol=1e-10, atol=1e-11)
    assert res.residual <= 1e-13


@pytest.mark.parametrize("weight", [None, "one", "relax"])
def test_matching_hits_weighted_moments(small_cube, rng, weight):
    g = small_cube
    f = (juttner_eval(JuttnerParams(1.0, 2.0, (0.5, 0, 0)), g.q)
         + juttner_eval(JuttnerParams(0.5, 1.0, (-0.4, 0.2, 0)), g.q))
    w = {None: None, "one": np.ones(g.size), "relax": -np.expm1(-0.3 / g.q0)}[weight]
    res = match_equilibrium(g, f, w)
    ww = g.weight * (1 / g.q0 if w is None else w)
    psi_b = np.column_stack([np.ones(g.size), g.q0, g.q])
    lhs = (ww * res.values[0]) @ psi_b
    rhs = (ww * f) @ psi_b
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-14)


def test_closure_equilibrium_of_juttner_is_itself():
    p = JuttnerParams(1.0, 2.0, (0.3, 0, 0))
    g = default_grid(p)
    st_, j = closure_equilibrium(juttner_field(p, g))
    assert st_.beta == pytest.approx(2.0, rel=1e-8)
    assert np.max(np.abs(j - juttner_eval(p, g.q))) <= 1e-8 * np.max(j)


def test_free_energy_gap_vanishes_at_equilibrium(small_cube):
    g = small_cube
    lam = lambdas_from_params(1.0, 1.0, np.zeros(3))
    f = np.exp(np.column_stack([np.ones(g.size), -g.q0, g.q]) @ lam[0])
    assert abs(free_energy_gap(DistributionField(g, f))) <= 1e-10


def test_free_energy_gap_positive_for_random_densities(small_cube, rng):
    g = small_cube
    for _ in range(5):
        f = juttner_eval(JuttnerParams(1.0, rng.uniform(0.5, 4), rng.normal(0, .3, 3)), g.q)
        f = f * np.exp(0.4 * rng.normal(size=g.size))
        gap = free_energy_gap(DistributionField(g, f))
        assert gap >= -1e-9


def test_free_energy_gap_rejects_negative(small_cube):
    with pytest.raises(DomainError):
        free_energy_gap(DistributionField(small_cube, -np.ones(small_cube.size)))


BASELINE = json.loads((Path(__file__).parent / "baselines" / "certified_tolerances.json").read_text())


@pytest.mark.parametrize("row", [r for r in BASELINE["rows"] if r["beta"] >= 1.0],
                         ids=lambda r: f"n{r['n']}-b{r['beta']}-u{r['u'][0]}")
def test_refinement_reproduces_certified_baseline(row):
    study = refinement_study(JuttnerParams(row["n"], row["beta"], tuple(row["u"])),
                             BASELINE["factors"])
    res = [lv.max_residual for lv in study]
    assert all(b < a for a, b in zip(res[:-1], res[1:]))
    assert res[-1] <= row["certified"]
    np.testing.assert_allclose(res, row["residuals"], rtol=1e-3)


def test_certified_baseline_within_default_tolerance():
    assert len(BASELINE["rows"]) == 12
    assert max(r["certified"] for r in BASELINE["rows"]) <= IDENTITY_TOL


def test_certified_tolerance_refuses_stagnation():
    lv = [RefinementLevel(2.0, 0.2, 10, 1e-5), RefinementLevel(1.0, 0.1, 80, 2e-5)]
    with pytest.raises(ConvergenceError):
        certified_tolerance(lv)
    assert certified_tolerance(lv[:1]) == pytest.approx(1e-4)
