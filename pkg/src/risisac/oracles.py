"""Brute-force reference computations used to check the optimizers."""

from __future__ import annotations

import itertools

import numpy as np

from .channels import ChannelSet, PhaseAlphabet
from .config import ScenarioConfig
from .errors import DomainError, OracleInfeasible, OracleTooLarge
from .metrics import SENSING_PATHS, COMM_TERMS, BeamformingState, PhaseEvaluator

MAX_ENUMERATION = 2**20


def finite_difference_oracle(cost, point, step: float = 1e-6) -> np.ndarray:
    """Central-difference estimate of df/dRe(x) + j df/dIm(x).

    For a real cost of a complex array this equals the Euclidean gradient
    ``2 df/dx*``. Every real and imaginary coordinate is perturbed
    separately by ``step`` (absolute).
    """
    if step <= 0:
        raise DomainError("step must be positive")
    x = np.array(point, dtype=complex)
    grad = np.zeros_like(x)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        for unit in (1.0, 1j):
            orig = flat[i]
            flat[i] = orig + step * unit
            up = cost(x)
            flat[i] = orig - step * unit
            down = cost(x)
            flat[i] = orig
            gflat[i] += unit * (up - down) / (2 * step)
    return grad


def exhaustive_phase_oracle(state: BeamformingState, ch: ChannelSet, cfg: ScenarioConfig,
                            alphabet: PhaseAlphabet | None = None, sensing_paths=SENSING_PATHS,
                            comm_terms=COMM_TERMS, batch: int = 4096):
    """Feasible global maximizer of the MI bound over all alphabet assignments.

    Returns
    -------
    theta : ndarray
    objective : float
    landscape : ndarray
        MI bound of every assignment (``-inf`` where infeasible), indexed by
        the base-``d`` digits of the level indices, element 0 most significant.

    Raises
    ------
    OracleTooLarge
        If ``d**M`` exceeds 2**20.
    OracleInfeasible
        If no assignment meets the rate floor.
    """
    alphabet = alphabet or PhaseAlphabet.from_bits(cfg.phase_bits)
    d, m = len(alphabet), ch.n_ris
    if d**m > MAX_ENUMERATION:
        raise OracleTooLarge(f"{d}^{m} assignments exceed the enumeration limit")
    ev = PhaseEvaluator(ch, state.tx_matrix, cfg.noise_power_w, sensing_paths, comm_terms, stage="oracle")
    idx = np.array(list(itertools.product(range(d), repeat=m)), dtype=int).reshape(-1, m)
    landscape = np.empty(len(idx))
    for start in range(0, len(idx), batch):
        th = alphabet.levels[idx[start:start + batch]]
        val = ev.mi_upper(th)
        ok = np.all(ev.rates(th, cfg.rate_weights) >= cfg.rate_threshold - 1e-9, axis=1)
        landscape[start:start + batch] = np.where(ok, val, -np.inf)
    feasible = int(np.sum(np.isfinite(landscape)))
    if feasible == 0:
        raise OracleInfeasible("no phase assignment meets the rate floor", feasible_count=0)
    best = int(np.argmax(landscape))
    return alphabet.levels[idx[best]], float(landscape[best]), landscape.reshape((d,) * m)


def coordinate_local_maxima(landscape: np.ndarray) -> np.ndarray:
    """Mask of feasible entries no single-coordinate change can strictly improve."""
    mask = np.isfinite(landscape)
    for axis in range(landscape.ndim):
        best = np.max(landscape, axis=axis, keepdims=True)
        mask &= landscape >= best
    return mask


def random_phase_baseline(state: BeamformingState, ch: ChannelSet, cfg: ScenarioConfig,
                          rng: np.random.Generator, alphabet: PhaseAlphabet | None = None,
                          n_trials: int = 1):
    """Best MI bound over ``n_trials`` random feasible phase draws (or None)."""
    alphabet = alphabet or PhaseAlphabet.from_bits(cfg.phase_bits)
    ev = PhaseEvaluator(ch, state.tx_matrix, cfg.noise_power_w, stage="oracle")
    th = np.array([alphabet.sample(rng, ch.n_ris) for _ in range(n_trials)])
    ok = np.all(ev.rates(th, cfg.rate_weights) >= cfg.rate_threshold - 1e-9, axis=1)
    if not np.any(ok):
        return None
    val = np.where(ok, ev.mi_upper(th), -np.inf)
    i = int(np.argmax(val))
    return th[i], float(val[i])


def sdp_grid_oracle(r_s, power_budget: float, noise: float, mu=None, sinr_floor: float = 0.0,
                    noise_u: float | None = None, n_grid: int = 721, refine: int = 3) -> float:
    """Best sum-log objective over rank-one two-antenna single-user beams.

    Candidates are sqrt(P0) [cos a, sin a e^{jb}] on an ``n_grid`` x
    ``n_grid`` grid, then refined ``refine`` times on a local grid around
    the best point. Only beams meeting the SINR floor count.
    """
    r_s = np.asarray(r_s, complex)
    if r_s.shape != (2, 2):
        raise DomainError("grid oracle handles two transmit antennas only")
    noise_u = noise if noise_u is None else noise_u

    def evaluate(a, b):
        s1 = np.cos(a) + 0 * b
        s2 = np.sin(a) * np.exp(1j * b)
        y = power_budget * (r_s[0, 0].real * s1**2 + r_s[1, 1].real * np.abs(s2) ** 2
                            + 2 * np.real(s1 * r_s[0, 1] * s2))
        val = np.log(y + noise)
        if mu is not None:
            mu_ = np.asarray(mu, complex).reshape(-1)
            sig = power_budget * np.abs(np.conj(mu_[0]) * s1 + np.conj(mu_[1]) * s2) ** 2
            val = np.where(sig >= sinr_floor * noise_u, val, -np.inf)
        return val

    a = np.linspace(0, np.pi / 2, n_grid)[:, None]
    b = np.linspace(0, 2 * np.pi, n_grid)[None, :]
    val = evaluate(a, b)
    ia, ib = np.unravel_index(np.argmax(val), val.shape)
    best = val[ia, ib]
    ca, cb = a[ia, 0], b[0, ib]
    da, db = (np.pi / 2) / (n_grid - 1), 2 * np.pi / (n_grid - 1)
    for _ in range(refine):
        a = np.clip(np.linspace(ca - 2 * da, ca + 2 * da, 81), 0, np.pi / 2)[:, None]
        b = np.linspace(cb - 2 * db, cb + 2 * db, 81)[None, :]
        val = evaluate(a, b)
        ia, ib = np.unravel_index(np.argmax(val), val.shape)
        if val[ia, ib] >= best:
            best, ca, cb = val[ia, ib], a[ia, 0], b[0, ib]
        da, db = da / 20, db / 20
    if not np.isfinite(best):
        raise OracleInfeasible("no grid beam meets the SINR floor", feasible_count=0)
    return float(best)


def random_channel_set(rng: np.random.Generator, n_tx=4, n_rx=4, n_ris=8, n_users=2,
                       n_scatterers=2, scale: dict | None = None) -> ChannelSet:
    """Unit-variance CSCG channels of the given sizes.

    Every path then contributes at order one, which is what gradient and
    metric checks need; ``scale`` multiplies selected fields.
    """
    def cscg(*shape):
        return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)

    fields = dict(
        d_bs_ris=cscg(n_tx, n_ris), d_ris_rx=cscg(n_ris, n_rx), h_bu=cscg(n_users, n_tx),
        h_ru=cscg(n_users, n_ris), h_rtr=cscg(n_scatterers, n_ris, n_ris),
        h_btb=cscg(n_scatterers, n_rx, n_tx), h_btr=cscg(n_scatterers, n_tx, n_ris),
        h_btu=cscg(n_scatterers, n_users, n_tx), h_rtu=cscg(n_scatterers, n_users, n_ris),
    )
    for name, factor in (scale or {}).items():
        fields[name] = fields[name] * factor
    return ChannelSet(**fields)
