import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from risisac.errors import DomainError, InfeasibleRate, StructuralError
from risisac.oracles import sdp_grid_oracle
from risisac.sdp import SdpSubproblem, from_coords, hermitian_basis, numerical_rank, solve_sdp, to_coords

from conftest import cscg


def _problem(seed, n=4, k=2, floor=0.3, p0=4.0, rank=None):
    rng = np.random.default_rng(seed)
    a = cscg(rng, n, rank or n)
    r_s = a @ a.conj().T
    return SdpSubproblem(r_s=r_s, mu=cscg(rng, k, n), sinr_floor=floor, power_budget=p0,
                         noise_s=1.0, noise_u=1.0)


@given(n=st.integers(1, 5), seed=st.integers(0, 2**32 - 1))
def test_hermitian_coordinates_round_trip(n, seed):
    basis = hermitian_basis(n)
    h = cscg(np.random.default_rng(seed), n, n)
    h = h + h.conj().T
    np.testing.assert_allclose(from_coords(basis, to_coords(basis, h)), h, atol=1e-12)
    # orthonormal under Re tr(A^H B)
    gram = np.einsum("aij,bij->ab", basis.conj(), basis).real
    np.testing.assert_allclose(gram, np.eye(n * n), atol=1e-12)


def test_eigen_aligned_single_user():
    prob = SdpSubproblem(r_s=np.diag([1.0, 0.0]), mu=np.ones((1, 2)), sinr_floor=0.0,
                         power_budget=3.0, noise_s=0.5, noise_u=1.0)
    sol = solve_sdp(prob)
    assert sol.objective == pytest.approx(np.log(3.0 + 0.5), rel=1e-7)
    assert sol.gammas[0][0, 0].real == pytest.approx(3.0, rel=1e-6)


def test_grid_oracle_agreement():
    for seed in range(5):
        rng = np.random.default_rng(seed)
        a = cscg(rng, 2, 2)
        r_s = a @ a.conj().T
        prob = SdpSubproblem(r_s=r_s, mu=np.ones((1, 2)), sinr_floor=0.0, power_budget=2.0,
                             noise_s=0.3, noise_u=1.0)
        ref = sdp_grid_oracle(r_s, 2.0, 0.3)
        assert abs(solve_sdp(prob).objective - ref) <= 1e-3 * abs(ref)


@given(seed=st.integers(0, 2**32 - 1))
def test_solution_invariants(seed):
    prob = _problem(seed)
    sol = solve_sdp(prob)
    assert np.trace(sol.gammas.sum(axis=0)).real <= prob.power_budget * (1 + 1e-8)
    for g in sol.gammas:
        assert np.linalg.eigvalsh(g).min() >= -1e-8 * prob.power_budget
    assert np.all(prob.constraint_margins(sol.gammas) >= -1e-8)
    assert sol.dual_objective >= sol.objective - 1e-9
    assert sol.kkt_residual <= 1e-6
    assert sol.objective == pytest.approx(prob.objective(sol.gammas), abs=1e-9)


def test_unattainable_floor():
    prob = _problem(3, floor=1e6)
    with pytest.raises(InfeasibleRate) as info:
        solve_sdp(prob)
    assert np.all(info.value.max_sinr < 1e6)
    assert np.all(info.value.max_sinr > 0)


def test_attainable_estimate_is_tight():
    prob = _problem(4, floor=1e6)
    with pytest.raises(InfeasibleRate) as info:
        solve_sdp(prob)
    reachable = SdpSubproblem(prob.r_s, prob.mu, 0.95 * info.value.max_sinr, prob.power_budget, 1.0, 1.0)
    solve_sdp(reachable)


def test_non_psd_rejected():
    with pytest.raises(StructuralError):
        SdpSubproblem(r_s=np.diag([1.0, -1.0]), mu=np.ones((1, 2)), sinr_floor=0.0,
                      power_budget=1.0, noise_s=1.0, noise_u=1.0)
    with pytest.raises(StructuralError):
        SdpSubproblem(r_s=np.array([[1.0, 1j], [1j, 1.0]]), mu=np.ones((1, 2)), sinr_floor=0.0,
                      power_budget=1.0, noise_s=1.0, noise_u=1.0)


def test_bad_scalars_rejected():
    with pytest.raises(DomainError):
        SdpSubproblem(np.eye(2), np.ones((1, 2)), -1.0, 1.0, 1.0, 1.0)
    with pytest.raises(DomainError):
        SdpSubproblem(np.eye(2), np.ones((1, 2)), 0.0, 0.0, 1.0, 1.0)


def test_rank_degenerate_covariance():
    # a flat top eigenspace leaves the optimum face rank two; the solver returns its center
    prob = _problem(5, floor=0.0, rank=None)
    q, _ = np.linalg.qr(cscg(np.random.default_rng(5), 4, 4))
    flat = SdpSubproblem(q @ np.diag([1.0, 1.0, 0, 0]) @ q.conj().T, prob.mu, 0.0, 4.0, 1.0, 1.0)
    sol = solve_sdp(flat)
    assert list(sol.ranks) == [2, 2]
    assert numerical_rank(np.zeros((3, 3))) == 0


def test_physical_scale_instance():
    # the reference noise floor is 1e-14 W; normalization keeps the solve well posed
    prob = _problem(6)
    tiny = SdpSubproblem(prob.r_s * 1e-12, prob.mu * 1e-6, 0.3, 1.0, 1e-14, 1e-14)
    sol = solve_sdp(tiny)
    assert sol.kkt_residual <= 1e-6
    assert np.all(tiny.constraint_margins(sol.gammas) >= -1e-8 * 1e-14)
