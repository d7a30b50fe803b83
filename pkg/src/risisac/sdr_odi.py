"""Relaxation-and-search optimizer for the MI-maximization problem.

Transmit side: the SDP relaxation of the beamformer design followed by
Gaussian randomization. RIS side: one-dimension-iterative (cyclic
coordinate) search over the discrete phase alphabet. The two are
alternated until the MI bound stops improving.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import flops
from .channels import ChannelSet, PhaseAlphabet
from .config import ScenarioConfig
from .errors import FeasibilityViolation, InfeasibleRate, NoFeasibleDraw, NoFeasibleStart
from .metrics import (
    COMM_TERMS,
    SENSING_PATHS,
    BeamformingState,
    PhaseEvaluator,
    effective_channels,
    path_decomposition,
    rates_from,
    sensing_covariance,
)
from .sdp import SdpSolution, SdpSubproblem, solve_sdp
from .trace import OptimizerTrace

RATE_TOL = 1e-9
IMPROVE_TOL = 1e-12


def sdp_subproblem(ch: ChannelSet, theta, cfg: ScenarioConfig,
                   sensing_paths=SENSING_PATHS, comm_terms=COMM_TERMS) -> SdpSubproblem:
    """Transmit subproblem for fixed RIS phases."""
    r_s = sensing_covariance(ch, theta, sensing_paths)
    return SdpSubproblem(
        r_s=0.5 * (r_s + r_s.conj().T),
        mu=effective_channels(ch, theta, comm_terms),
        sinr_floor=cfg.sinr_floor if cfg.rate_threshold > 0 else np.zeros(ch.n_users),
        power_budget=cfg.tx_power_budget_w,
        noise_s=cfg.noise_power_w,
        noise_u=cfg.noise_power_w,
    )


def _surrogate(prob: SdpSubproblem, s) -> np.ndarray:
    """sum_k log(y_k + sigma_s^2) for one or many stacked transmit matrices."""
    y = np.real(np.einsum("...nk,nm,...mk->...k", s.conj(), prob.r_s, s))
    return np.sum(np.log(y + prob.noise_s), axis=-1)


def _meets_constraints(prob: SdpSubproblem, s) -> np.ndarray:
    g = np.abs(np.einsum("kn,...nj->...kj", prob.mu.conj(), s)) ** 2      # g[k, j] = |mu_k^H s_j|^2
    xi = np.diagonal(g, axis1=-2, axis2=-1)
    zeta = g.sum(axis=-1) - xi + prob.noise_u
    power = np.sum(np.abs(s) ** 2, axis=(-2, -1))
    ok_rate = np.all(xi >= prob.sinr_floor * zeta, axis=-1)
    return ok_rate & (power <= prob.power_budget * (1 + 1e-12))


def gaussian_randomize(sol: SdpSolution, prob: SdpSubproblem, n_draws: int,
                       rng: np.random.Generator) -> np.ndarray:
    """Recover a transmit matrix (N_t x K) from the relaxed solution.

    When every block is numerically rank one the scaled principal
    eigenvectors are returned without sampling (rescaled to the full budget
    only if that is needed to meet the SINR floors). Otherwise ``n_draws``
    candidates s_k = V_k diag(w_k)^(1/2) x_k with CSCG ``x_k`` are scaled to
    the budget and the best one meeting every constraint is kept.

    Raises
    ------
    NoFeasibleDraw
        If no candidate satisfies the constraints.
    """
    w, v = np.linalg.eigh(sol.gammas)
    w = np.clip(w, 0.0, None)
    if np.all(sol.ranks <= 1):
        s = (v[:, :, -1] * np.sqrt(w[:, -1])[:, None]).T
        if _meets_constraints(prob, s):
            return s
        scaled = s * np.sqrt(prob.power_budget / np.sum(np.abs(s) ** 2))
        if _meets_constraints(prob, scaled):
            return scaled
    if n_draws <= 0:
        raise NoFeasibleDraw("no randomization draws requested")
    k, n = prob.n_users, prob.n_tx
    x = (rng.standard_normal((n_draws, k, n)) + 1j * rng.standard_normal((n_draws, k, n))) / np.sqrt(2)
    cols = np.einsum("knm,km,bkm->bnk", v, np.sqrt(w), x)
    cols *= np.sqrt(prob.power_budget / np.sum(np.abs(cols) ** 2, axis=(1, 2)))[:, None, None]
    flops.count("randomize.draws", n_draws * k * (8 * n * n + 8 * n * n + 8 * n * k))
    ok = _meets_constraints(prob, cols)
    if not np.any(ok):
        raise NoFeasibleDraw(f"none of {n_draws} draws met the constraints")
    value = np.where(ok, _surrogate(prob, cols), -np.inf)
    return cols[int(np.argmax(value))]


def _mrt(mu, p0):
    s = (mu / np.linalg.norm(mu, axis=1, keepdims=True)).T
    return s * np.sqrt(p0 / mu.shape[0])


def _zero_forcing(mu, p0):
    s = np.linalg.pinv(mu.conj())
    s /= np.linalg.norm(s, axis=0, keepdims=True)
    return s * np.sqrt(p0 / mu.shape[0])


def feasible_start(ch: ChannelSet, cfg: ScenarioConfig, rng: np.random.Generator,
                   alphabet: PhaseAlphabet | None = None, comm_terms=COMM_TERMS) -> BeamformingState:
    """Equal-power MRT (zero-forcing as fallback) with random alphabet phases.

    Raises
    ------
    NoFeasibleStart
        When ``cfg.init_retries`` phase draws all fail the rate floor.
    """
    alphabet = alphabet or PhaseAlphabet.from_bits(cfg.phase_bits)
    p0, noise = cfg.tx_power_budget_w, cfg.noise_power_w
    for _ in range(cfg.init_retries):
        theta = alphabet.sample(rng, ch.n_ris)
        mu = effective_channels(ch, theta, comm_terms)
        for build in (_mrt, _zero_forcing):
            s = build(mu, p0)
            if np.all(rates_from(s, mu, noise, cfg.rate_weights) >= cfg.rate_threshold):
                return BeamformingState(s, theta)
    raise NoFeasibleStart(f"no feasible start in {cfg.init_retries} attempts")


@dataclass
class OdiResult:
    theta: np.ndarray
    start_objective: float
    objective: float
    sweeps: int
    moves: list = field(default_factory=list)   # (element, level index, objective after move)


def _rate_ok(rates, threshold):
    return np.all(rates >= threshold - RATE_TOL, axis=-1)


def odi_phase_search(state: BeamformingState, ch: ChannelSet, cfg: ScenarioConfig,
                     alphabet: PhaseAlphabet | None = None, sensing_paths=SENSING_PATHS,
                     comm_terms=COMM_TERMS) -> OdiResult:
    """Cyclic per-element search over the alphabet with a move log.

    All levels of one element are evaluated in a single batch; acceptance is
    then replayed in level order, so the result equals the one-at-a-time
    procedure: a level is taken iff the rate floors hold and the MI bound
    rises by more than ``IMPROVE_TOL``.
    """
    alphabet = alphabet or PhaseAlphabet.from_bits(cfg.phase_bits)
    levels = alphabet.levels
    ev = PhaseEvaluator(ch, state.tx_matrix, cfg.noise_power_w, sensing_paths, comm_terms, stage="odi")
    theta = np.array(state.ris_phases, complex)
    if not _rate_ok(ev.rates(theta, cfg.rate_weights)[0], cfg.rate_threshold):
        raise FeasibilityViolation("ODI start point violates the rate floor")
    current = float(ev.mi_upper(theta)[0])
    result = OdiResult(theta=theta, start_objective=current, objective=current, sweeps=0)
    m = ch.n_ris
    for sweep in range(cfg.odi_max_sweeps):
        flops.tick("odi.sweep")
        before = current
        accepted = False
        for e in range(m):
            cand = np.tile(theta, (len(levels), 1))
            cand[:, e] = levels
            value = ev.mi_upper(cand)
            ok = _rate_ok(ev.rates(cand, cfg.rate_weights), cfg.rate_threshold)
            for j in range(len(levels)):
                if ok[j] and value[j] > current + IMPROVE_TOL:
                    theta = cand[j]
                    current = float(value[j])
                    result.moves.append((e, j, current))
                    accepted = True
        result.sweeps = sweep + 1
        if not accepted or current - before < cfg.odi_tol:
            break
    result.theta, result.objective = theta, current
    return result


def odi_phase_sweep(state: BeamformingState, ch: ChannelSet, cfg: ScenarioConfig,
                    alphabet: PhaseAlphabet | None = None, **kw) -> np.ndarray:
    """RIS phases after cyclic discrete search; see :func:`odi_phase_search`."""
    return odi_phase_search(state, ch, cfg, alphabet, **kw).theta


def replay_moves(theta0, moves, alphabet: PhaseAlphabet) -> list[np.ndarray]:
    """Phase vectors visited by a move log, starting point included."""
    theta = np.array(theta0, complex)
    visited = [theta.copy()]
    for e, j, _ in moves:
        theta[e] = alphabet.levels[j]
        visited.append(theta.copy())
    return visited


def ao_sdr_odi(ch: ChannelSet, cfg: ScenarioConfig, seed=None, alphabet: PhaseAlphabet | None = None,
               sensing_paths=SENSING_PATHS, comm_terms=COMM_TERMS):
    """Alternate the relaxed transmit design and the discrete phase search.

    Each outer iteration solves the SDP at the current phases, recovers a
    transmit matrix (keeping the previous one when randomization fails or
    lowers the MI bound) and runs ODI. Stops when the bound improves by
    less than ``cfg.ao_tol`` or after ``cfg.ao_max_iter_sdr`` iterations.

    Returns
    -------
    state : BeamformingState
    trace : OptimizerTrace
        Objective column is the MI bound in bits.
    """
    alphabet = alphabet or PhaseAlphabet.from_bits(cfg.phase_bits)
    rng = np.random.default_rng(cfg.rng_seed if seed is None else seed)
    trace = OptimizerTrace("sdr_odi")
    with flops.counting() as counter:
        state = feasible_start(ch, cfg, rng, alphabet, comm_terms)

        def report(st):
            return path_decomposition(st, ch, cfg, sensing_paths, comm_terms, alphabet=alphabet)

        rep = report(state)
        trace.record(0, rep.mi_upper, rep, counter)
        prev = rep.mi_upper
        for it in range(1, cfg.ao_max_iter_sdr + 1):
            prob = sdp_subproblem(ch, state.ris_phases, cfg, sensing_paths, comm_terms)
            s = state.tx_matrix
            try:
                sol = solve_sdp(prob, cfg.sdp_tol)
                s = gaussian_randomize(sol, prob, cfg.n_draws, rng)
            except InfeasibleRate:
                trace.notes.append(f"iteration {it}: SDP phase 1 failed, transmit matrix kept")
            except NoFeasibleDraw:
                trace.notes.append(f"iteration {it}: no feasible draw, transmit matrix kept")
            if _surrogate(prob, s) < _surrogate(prob, state.tx_matrix):
                s = state.tx_matrix
            candidate = BeamformingState(s, state.ris_phases)
            odi = odi_phase_search(candidate, ch, cfg, alphabet, sensing_paths, comm_terms)
            state = BeamformingState(s, odi.theta)
            rep = report(state)
            trace.record(it, rep.mi_upper, rep, counter)
            if rep.mi_upper - prev < cfg.ao_tol:
                trace.converged = True
                break
            prev = rep.mi_upper
    trace.finish(counter)
    return state, trace
