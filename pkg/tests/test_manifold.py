import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from risisac.channels import PhaseAlphabet, synthesize_channels
from risisac.config import ScenarioConfig
from risisac.errors import ManifoldContractError, StepTooLarge
from risisac.manifold import (
    ComplexCircle,
    Hypersphere,
    TangentVector,
    WeightedProblem,
    ao_rg,
    discretize_phases,
    egrad_ris,
    egrad_tx,
    project_ris,
    project_tx,
    retract_ris,
    retract_tx,
    riemannian_ascent,
    rsa_ris,
    rsa_tx,
)
from risisac.metrics import BeamformingState, evaluate
from risisac.oracles import finite_difference_oracle, random_channel_set

from conftest import cscg

_LN2 = np.log(2)


def gradient_instance(seed, eps=0.3, **kw):
    rng = np.random.default_rng(seed)
    ch = random_channel_set(rng, **kw)
    cfg = ScenarioConfig(n_ris=ch.n_ris, noise_power_w=1.0, weight_epsilon=eps,
                         rate_threshold=0.0, mi_norm=7.0, rate_norm=3.0).replace(n_users=ch.n_users)
    state = BeamformingState(cscg(rng, ch.n_tx, ch.n_users), np.exp(1j * rng.uniform(0, 2 * np.pi, ch.n_ris)))
    return ch, cfg, state


def tx_fd(ch, cfg, state):
    prob = WeightedProblem(ch, cfg, cfg.mi_norm, cfg.rate_norm)
    return finite_difference_oracle(lambda s: prob.value(s, state.ris_phases), state.tx_matrix, 1e-6)


def ris_fd(ch, cfg, state):
    prob = WeightedProblem(ch, cfg, cfg.mi_norm, cfg.rate_norm)
    return finite_difference_oracle(lambda th: prob.value(state.tx_matrix, th), state.ris_phases, 1e-6)


def rel_err(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


# finite-difference oracle -------------------------------------------------------

def test_fd_quadratic_and_linear(rng):
    a = cscg(rng, 3, 3)
    a = a @ a.conj().T
    c = cscg(rng, 3)
    x = cscg(rng, 3)
    quad = finite_difference_oracle(lambda z: np.real(np.vdot(z, a @ z)), x, 1e-4)
    np.testing.assert_allclose(quad, 2 * a @ x, atol=1e-8)
    for step in (1e-2, 1.0, 10.0):
        lin = finite_difference_oracle(lambda z: np.real(np.vdot(c, z)), x, step)
        np.testing.assert_allclose(lin, c, atol=1e-10)
    with pytest.raises(Exception):
        finite_difference_oracle(lambda z: 0.0, x, 0.0)


# Euclidean gradients -------------------------------------------------------

@pytest.mark.parametrize("seed", range(5))
def test_tx_gradient_matches_fd(seed):
    ch, cfg, state = gradient_instance(seed)
    assert rel_err(egrad_tx(state, ch, cfg), tx_fd(ch, cfg, state)) <= 1e-5


@pytest.mark.parametrize("seed", range(5))
def test_ris_gradient_matches_fd(seed):
    ch, cfg, state = gradient_instance(seed)
    assert rel_err(egrad_ris(state, ch, cfg), ris_fd(ch, cfg, state)) <= 1e-5


def test_tx_gradient_pure_sensing_form():
    ch, cfg, state = gradient_instance(7, eps=1.0)
    c = state.derived(ch)
    s = state.tx_matrix
    y = np.real(np.einsum("ik,ij,jk->k", s.conj(), c.r_s, s))
    expected = (2 / (_LN2 * cfg.mi_norm)) * (c.r_s @ s) / (y + cfg.noise_power_w)
    np.testing.assert_allclose(egrad_tx(state, ch, cfg), expected, rtol=1e-12)


def test_tx_gradient_zero_without_sensing():
    ch, cfg, state = gradient_instance(8, eps=1.0)
    ch0 = ch.replace(**{n: np.zeros_like(getattr(ch, n)) for n in ("h_rtr", "h_btb", "h_btr")})
    np.testing.assert_array_equal(egrad_tx(state, ch0, cfg), 0)


def test_ris_gradient_zero_without_ris_channels():
    ch, cfg, state = gradient_instance(9)
    names = ("d_bs_ris", "d_ris_rx", "h_ru", "h_rtr", "h_btr", "h_rtu")
    ch0 = ch.replace(**{n: np.zeros_like(getattr(ch, n)) for n in names})
    np.testing.assert_allclose(egrad_ris(state, ch0, cfg), 0, atol=1e-15)


def test_ris_gradient_without_scatterers():
    ch, cfg, state = gradient_instance(10, n_scatterers=0)
    grad = egrad_ris(state, ch, cfg)
    assert rel_err(grad, ris_fd(ch, cfg, state)) <= 1e-5
    # only the direct BS-RIS-user term of the rate derivative survives
    s, th = state.tx_matrix, state.ris_phases
    mu = ch.h_bu + (ch.d_bs_ris[None] * ch.h_ru[:, None, :]) @ th
    c = mu.conj() @ s
    p = np.abs(c) ** 2
    total = p.sum(1) + 1.0
    zeta = total - np.diag(p)
    w = np.asarray(cfg.rate_weights)
    coef = w[:, None] * (1 / total[:, None] - (1 - np.eye(2)) / zeta[:, None])
    direct = np.zeros(ch.n_ris, complex)
    for i in range(2):
        for j in range(2):
            direct += coef[i, j] * 2 * np.conj(c[i, j]) * (ch.d_bs_ris.conj().T @ s[:, j]) * ch.h_ru[i].conj()
    expected = (1 - cfg.weight_epsilon) / (_LN2 * cfg.rate_norm) * direct
    np.testing.assert_allclose(grad, expected, atol=1e-12)


# kernels -------------------------------------------------------------------

@given(seed=st.integers(0, 2**32 - 1), p0=st.floats(0.01, 100.0))
def test_hypersphere_kernels(seed, p0):
    rng = np.random.default_rng(seed)
    m = Hypersphere(p0)
    x = m.random_point(rng, (4, 2))
    z = cscg(rng, 4, 2)
    t = project_tx(m, x, z)
    assert m.tangent_residual(x, t) <= 1e-10
    np.testing.assert_allclose(project_tx(m, x, t.value).value, t.value, atol=1e-12 * np.linalg.norm(z))
    np.testing.assert_allclose(project_tx(m, x, x.value).value, 0, atol=1e-12 * np.sqrt(p0))
    y = retract_tx(m, x, t)
    assert m.feasibility_residual(y) <= 1e-12
    moved = m.transport(x, y, t)
    assert m.tangent_residual(y, moved) <= 1e-10
    np.testing.assert_allclose(m.transport(x, x, t).value, t.value, atol=1e-12 * np.linalg.norm(z))
    np.testing.assert_array_equal(m.transport(x, y, m.zero(x)).value, 0)
    np.testing.assert_allclose(retract_tx(m, x, np.zeros((4, 2))).value, x.value, atol=1e-14 * np.sqrt(p0))


@given(seed=st.integers(0, 2**32 - 1))
def test_circle_kernels(seed):
    rng = np.random.default_rng(seed)
    c = ComplexCircle()
    x = c.random_point(rng, 8)
    z = cscg(rng, 8)
    t = project_ris(x, z)
    assert c.tangent_residual(x, t) <= 1e-10
    np.testing.assert_allclose(project_ris(x, t.value).value, t.value, atol=1e-12)
    np.testing.assert_allclose(project_ris(x, 1j * x.value).value, 1j * x.value, atol=1e-15)
    np.testing.assert_allclose(project_ris(x, x.value).value, 0, atol=1e-15)
    y = retract_ris(x, t)
    assert c.feasibility_residual(y) <= 1e-12
    assert c.tangent_residual(y, c.transport(x, y, t)) <= 1e-10


def test_circle_collinear_step():
    c = ComplexCircle()
    x = c.point([1, 1j])
    np.testing.assert_allclose(retract_ris(x, np.array([0, 1j])).value, [1, 1j])


def test_zero_norm_retraction():
    m = Hypersphere(1.0)
    x = m.point(np.array([[1.0, 0.0]]))
    with pytest.raises(StepTooLarge):
        retract_tx(m, x, -x.value)
    c = ComplexCircle()
    y = c.point([1.0, 1j])
    with pytest.raises(StepTooLarge):
        retract_ris(y, np.array([-1.0, 0.0]))


def test_stamp_mismatch():
    c = ComplexCircle()
    a, b = c.point([1.0, 1j]), c.point([1j, 1.0])
    t = project_ris(a, np.array([1j, 1.0]))
    with pytest.raises(ManifoldContractError):
        c.transport(b, a, t)
    with pytest.raises(ManifoldContractError):
        c.retr(b, t)
    with pytest.raises(ManifoldContractError):
        Hypersphere(1.0).point(np.ones((2, 2)))


# discretization -------------------------------------------------------------

def test_discretize_examples():
    two = PhaseAlphabet.from_count(2)
    np.testing.assert_allclose(discretize_phases(np.array([np.exp(0.1j)]), two), [1j])
    levels = PhaseAlphabet.from_bits(3).levels
    np.testing.assert_array_equal(discretize_phases(levels, PhaseAlphabet.from_bits(3)), levels)


@given(seed=st.integers(0, 2**32 - 1), bits=st.integers(1, 4))
def test_discretization_is_coordinatewise_nearest(seed, bits):
    rng = np.random.default_rng(seed)
    alphabet = PhaseAlphabet.from_bits(bits)
    theta = np.exp(1j * rng.uniform(0, 2 * np.pi, 8))
    q = discretize_phases(theta, alphabet)
    # no other level is strictly closer in chordal distance
    d = np.abs(theta[:, None] - alphabet.levels[None, :])
    assert np.all(np.abs(theta - q) <= d.min(axis=1) + 1e-12)


# ascent ---------------------------------------------------------------------

def test_single_element_quadratic():
    # f(theta) = Re(conj(j) theta) peaks at theta = j
    c = ComplexCircle()
    res = riemannian_ascent(c, lambda th: float(np.real(np.conj(1j) * th[0])),
                            lambda th: np.array([1j]), np.array([np.exp(-0.4j)]), max_iter=100, tol=1e-10)
    assert abs(res.point.value[0] - 1j) < 1e-6
    assert np.all(np.diff(res.values) >= 0)


def test_degenerate_previous_gradient_resets():
    c = ComplexCircle()
    with np.errstate(all="raise"):
        res = riemannian_ascent(c, lambda th: 0.0, lambda th: np.zeros(2), np.array([1, 1j]),
                                max_iter=3, tol=0.0)
    assert not res.stalled and res.value == 0.0


def _profile_state(seed, m=16):
    from risisac.sdr_odi import feasible_start

    cfg = ScenarioConfig(n_ris=m)
    ch = synthesize_channels(cfg, seed)
    alphabet = PhaseAlphabet.from_bits(cfg.phase_bits)
    state = feasible_start(ch, cfg, np.random.default_rng(seed), alphabet)
    return ch, cfg, alphabet, state


@pytest.mark.parametrize("seed", range(3))
def test_rsa_steps_never_decrease(seed):
    ch, cfg, alphabet, state = _profile_state(seed)
    tx = rsa_tx(state, ch, cfg)
    assert np.all(np.diff(tx.values) >= 0) and tx.values[-1] >= tx.values[0]
    assert Hypersphere(cfg.tx_power_budget_w).feasibility_residual(tx.point) <= 1e-10
    theta, ris = rsa_ris(BeamformingState(tx.point.value, state.ris_phases), ch, cfg, alphabet=alphabet)
    assert np.all(np.diff(ris.values) >= 0)
    assert np.all(alphabet.contains(theta))


@pytest.mark.xfail(strict=False, reason="on the reference profile the zero-forcing start sits where the "
                   "rate term is sharply curved; the inner gradient norm grows before it falls (see ledger)")
def test_inner_gradient_norm_decreases():
    ch, cfg, alphabet, state = _profile_state(0, m=32)
    tx = rsa_tx(state, ch, cfg)
    g = np.asarray(tx.grad_norms)
    assert np.all(np.diff(g) < 0) and g[-1] < 1e-2 and len(g) <= 31


@pytest.mark.parametrize("seed", range(3))
def test_ao_rg_contract(seed):
    ch, cfg, alphabet, _ = _profile_state(seed)
    state, trace = ao_rg(ch, cfg, seed, alphabet)
    assert trace.is_monotone(1e-9)
    rep = evaluate(state, ch, cfg, alphabet)
    assert rep.feasible["alphabet"]
    assert rep.power == pytest.approx(cfg.tx_power_budget_w, rel=1e-9)
    assert len(trace.inner) == trace.iterations


def test_ao_rg_discretize_every_runs():
    ch, cfg, alphabet, _ = _profile_state(1)
    state, trace = ao_rg(ch, cfg, 1, alphabet, discretize="every")
    assert trace.is_monotone(1e-9) and np.all(alphabet.contains(state.ris_phases))
    with pytest.raises(ValueError):
        rsa_ris(state, ch, cfg, discretize="sometimes")


@pytest.mark.xfail(strict=False, reason="user rates sit near SINR 1e6 where they are limited by the "
                   "transmit interference nulls; the reflected path is too weak to move the seed average "
                   "(see ledger)")
def test_weighted_rate_grows_with_ris_size():
    totals = {}
    for m in (8, 32):
        vals = []
        for seed in range(20):
            cfg = ScenarioConfig(n_ris=m)
            ch = synthesize_channels(cfg, seed)
            state, _ = ao_rg(ch, cfg, seed)
            vals.append(np.sum(evaluate(state, ch, cfg).rates))
        totals[m] = np.mean(vals)
    assert totals[32] > totals[8]
