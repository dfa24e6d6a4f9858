"""Measurement model construction, WLS estimation, the residual detector and
the chi-square quantile routine."""

import math

import numpy as np
import pytest

from fdibench.dc_grid import (build_dc_model, chi2_inverse_cdf, model_debug_rows,
                              residual_detect, wls_estimate)
from fdibench.errors import ContractError, ModelError
from fdibench.matpower import load_builtin, parse_case

# chi-square 95% quantiles, frozen from adaptive quadrature of the pdf plus
# bisection — independent of the incomplete-gamma route the implementation uses
CHI2_95 = {
    1: 3.8414588206934206,
    2: 5.991464547107974,
    10: 18.307038053275097,
    80: 101.87947396543646,
    186: 218.8204906597527,
}


@pytest.fixture(scope="module")
def ieee9():
    return build_dc_model(load_builtin("ieee9"), 0.01)


def test_dimensions_and_rank(ieee9):
    assert ieee9.H.shape == (18, 9)
    assert ieee9.rank == 8
    assert ieee9.n_measurements == 18
    assert ieee9.n_states == 9


@pytest.mark.parametrize("name,n,d", [
    ("ieee57", 137, 57), ("ieee118", 304, 118),
])
def test_larger_systems(name, n, d):
    model = build_dc_model(load_builtin(name), 0.01)
    assert model.H.shape == (n, d)
    assert model.rank == d - 1


def test_rows_sum_to_zero(ieee9):
    # both flow and injection rows are differences of angles
    assert np.allclose(ieee9.H @ np.ones(9), 0.0, atol=1e-9)


def test_injection_rows_are_signed_sums_of_flow_rows(ieee9):
    case = load_builtin("ieee9")
    nb = len(case.in_service_branches())
    bus_pos = {b.id: k for k, b in enumerate(case.buses)}
    recon = np.zeros((9, 9))
    for bi, br in enumerate(case.in_service_branches()):
        recon[bus_pos[br.from_bus]] += ieee9.H[bi]
        recon[bus_pos[br.to_bus]] -= ieee9.H[bi]
    assert np.allclose(ieee9.H[nb:], recon)


def test_noise_scale_applied(ieee9):
    sigma_ref = np.std(ieee9.H @ ieee9.x0)
    assert np.allclose(ieee9.noise_std, 0.01 * sigma_ref)
    with pytest.raises(ContractError):
        build_dc_model(load_builtin("ieee9"), -1.0)


def test_disconnected_network_rejected():
    case = parse_case("""\
function mpc = splitnet
mpc.baseMVA = 100;
mpc.bus = [
\t1\t3\t0\t0\t0\t0\t1\t1\t0.0\t1\t1\t1.1\t0.9;
\t2\t1\t0\t0\t0\t0\t1\t1\t1.0\t1\t1\t1.1\t0.9;
\t3\t1\t0\t0\t0\t0\t1\t1\t2.0\t1\t1\t1.1\t0.9;
\t4\t1\t0\t0\t0\t0\t1\t1\t3.0\t1\t1\t1.1\t0.9;
];
mpc.branch = [
\t1\t2\t0\t0.1\t0\t0\t0\t0\t0\t0\t1\t-360\t360;
\t3\t4\t0\t0.1\t0\t0\t0\t0\t0\t0\t1\t-360\t360;
];
""")
    with pytest.raises(ModelError):
        build_dc_model(case, 0.01)


def test_wls_consistent_system_exact(ieee9):
    z = ieee9.clean_measurements()
    x_hat = wls_estimate(ieee9, z)
    fitted = ieee9.H @ x_hat
    assert np.linalg.norm(fitted - z) <= 1e-9 * max(np.linalg.norm(z), 1.0)


def test_wls_minimum_norm(ieee9):
    # among all solutions (x_hat + alpha * ones), the returned one is shortest
    z = ieee9.clean_measurements()
    x_hat = wls_estimate(ieee9, z)
    assert abs(np.sum(x_hat)) < 1e-8   # orthogonal to the ones null direction


def test_wls_matches_weighted_normal_equations(ieee9):
    rng = np.random.default_rng(5)
    z = rng.normal(size=18)
    x_hat = wls_estimate(ieee9, z)
    W = ieee9.H / ieee9.noise_std[:, None]
    x_oracle, *_ = np.linalg.lstsq(W, z / ieee9.noise_std, rcond=None)
    assert np.allclose(x_hat, x_oracle, atol=1e-10)


def test_wls_shape_check(ieee9):
    with pytest.raises(ContractError):
        wls_estimate(ieee9, np.zeros(5))


def test_residual_zero_on_noiseless(ieee9):
    res = residual_detect(ieee9, ieee9.clean_measurements())
    assert res.residual_rho == pytest.approx(0.0, abs=1e-16)
    assert not res.attacked_flag


def test_residual_flags_gross_spike(ieee9):
    z = ieee9.clean_measurements().copy()
    z[3] += 50 * ieee9.noise_std[3]
    res = residual_detect(ieee9, z)
    assert res.attacked_flag
    assert res.residual_rho > res.threshold_tau


def test_residual_threshold_uses_dof(ieee9):
    res = residual_detect(ieee9, ieee9.clean_measurements(), confidence=0.95)
    assert res.threshold_tau == pytest.approx(CHI2_95[10], rel=1e-9)


def test_confidence_validated(ieee9):
    with pytest.raises(ContractError):
        residual_detect(ieee9, ieee9.clean_measurements(), confidence=1.5)


@pytest.mark.parametrize("dof", sorted(CHI2_95))
def test_chi2_quantile_against_integration_oracle(dof):
    assert chi2_inverse_cdf(0.95, dof) == pytest.approx(CHI2_95[dof], rel=1e-6)


def test_chi2_quantile_median_and_tails():
    # median of chi2_2 is exactly 2 ln 2
    assert chi2_inverse_cdf(0.5, 2) == pytest.approx(2 * math.log(2), rel=1e-9)
    assert chi2_inverse_cdf(0.999, 1) > chi2_inverse_cdf(0.99, 1)
    with pytest.raises(ContractError):
        chi2_inverse_cdf(1.0, 3)
    with pytest.raises(ContractError):
        chi2_inverse_cdf(0.5, 0)


def test_debug_rows_cover_all_measurements(ieee9):
    rows = model_debug_rows(ieee9)
    assert len(rows) == 18
    assert rows[0][0].startswith("branch_flow")
    assert rows[-1][0].startswith("bus_injection")
    assert all(len(r) == 10 for r in rows)
