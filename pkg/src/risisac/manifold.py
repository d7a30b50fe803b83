"""Riemannian conjugate ascent for the weighted sensing/communication objective.

Transmit matrices live on the power hypersphere {S : ||S||_F^2 = P0}, RIS
phases on the complex circle {theta : |theta_m| = 1}. Both manifolds use
the real inner product Re tr(A^H B); Euclidean gradients are returned as
``2 df/dx*`` so that Re tr(G^H dX) is the first-order change of ``f``.

The weighted objective is

    eps * sum_k log2(1 + y_k/sigma^2) / I_max + (1 - eps) * sum_k R_k / R_max

with ``y_k = s_k^H R_s s_k`` and ``R_k`` the weighted user rates.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import flops
from .channels import ChannelSet, PhaseAlphabet
from .config import ScenarioConfig
from .errors import ManifoldContractError, StepTooLarge
from .metrics import (
    SENSING_PATHS,
    BeamformingState,
    PhaseEvaluator,
    diag_gains,
    effective_channels,
    evaluate,
    mu_affine,
    rates_from,
    sensing_covariance,
)
from .sdr_odi import feasible_start
from .trace import OptimizerTrace

_LN2 = np.log(2.0)
_stamps = itertools.count(1)


@dataclass(frozen=True)
class ManifoldPoint:
    value: np.ndarray
    stamp: int = field(default_factory=lambda: next(_stamps))


@dataclass(frozen=True)
class TangentVector:
    value: np.ndarray
    base_stamp: int


def _inner(u, v) -> float:
    return float(np.real(np.vdot(u, v)))


class _Manifold:
    def inner(self, u: TangentVector, v: TangentVector) -> float:
        return _inner(u.value, v.value)

    def norm(self, u: TangentVector) -> float:
        return float(np.linalg.norm(u.value))

    def transport(self, x_from: ManifoldPoint, x_to: ManifoldPoint, eta: TangentVector) -> TangentVector:
        """Carry ``eta`` from ``x_from`` to ``x_to`` by re-projection."""
        if eta.base_stamp != x_from.stamp:
            raise ManifoldContractError("tangent vector does not belong to the source point")
        return self.proj(x_to, eta.value)

    def zero(self, x: ManifoldPoint) -> TangentVector:
        return TangentVector(np.zeros_like(x.value), x.stamp)

    def _step(self, x, z):
        if isinstance(z, TangentVector):
            if z.base_stamp != x.stamp:
                raise ManifoldContractError("step is not tangent at this point")
            z = z.value
        return np.asarray(z)


class Hypersphere(_Manifold):
    """Complex matrices with squared Frobenius norm ``power``."""

    def __init__(self, power: float):
        self.power = float(power)

    def point(self, value) -> ManifoldPoint:
        value = np.asarray(value, complex)
        if abs(np.sum(np.abs(value) ** 2) - self.power) > 1e-9 * self.power:
            raise ManifoldContractError("matrix is off the power hypersphere")
        return ManifoldPoint(value.copy())

    def proj(self, x: ManifoldPoint, z) -> TangentVector:
        s = x.value
        return TangentVector(z - _inner(s, z) / self.power * s, x.stamp)

    def retr(self, x: ManifoldPoint, z) -> ManifoldPoint:
        y = x.value + self._step(x, z)
        nrm = np.linalg.norm(y)
        if nrm == 0 or not np.isfinite(nrm):
            raise StepTooLarge("retraction through the origin")
        return ManifoldPoint(np.sqrt(self.power) * y / nrm)

    def tangent_residual(self, x: ManifoldPoint, z) -> float:
        """|Re tr(S^H Z)| relative to ||S|| ||Z||."""
        z = z.value if isinstance(z, TangentVector) else z
        scale = np.linalg.norm(x.value) * np.linalg.norm(z)
        return abs(_inner(x.value, z)) / scale if scale > 0 else 0.0

    def feasibility_residual(self, x: ManifoldPoint) -> float:
        return abs(np.sum(np.abs(x.value) ** 2) - self.power) / self.power

    def random_point(self, rng, shape) -> ManifoldPoint:
        z = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        return ManifoldPoint(np.sqrt(self.power) * z / np.linalg.norm(z))


class ComplexCircle(_Manifold):
    """Complex vectors with unit-modulus entries."""

    def point(self, value) -> ManifoldPoint:
        value = np.asarray(value, complex)
        if np.max(np.abs(np.abs(value) - 1)) > 1e-12:
            raise ManifoldContractError("vector has non-unit-modulus entries")
        return ManifoldPoint(value.copy())

    def proj(self, x: ManifoldPoint, z) -> TangentVector:
        theta = x.value
        return TangentVector(z - np.real(z * theta.conj()) * theta, x.stamp)

    def retr(self, x: ManifoldPoint, z) -> ManifoldPoint:
        y = x.value + self._step(x, z)
        mag = np.abs(y)
        if np.any(mag == 0):
            raise StepTooLarge("retraction hits zero modulus")
        return ManifoldPoint(y / mag)

    def tangent_residual(self, x: ManifoldPoint, z) -> float:
        """max_m |Re(z_m conj(theta_m))| relative to ||z||."""
        z = z.value if isinstance(z, TangentVector) else z
        nrm = np.linalg.norm(z)
        return float(np.max(np.abs(np.real(z * x.value.conj())))) / nrm if nrm > 0 else 0.0

    def feasibility_residual(self, x: ManifoldPoint) -> float:
        return float(np.max(np.abs(np.abs(x.value) - 1)))

    def random_point(self, rng, shape) -> ManifoldPoint:
        return ManifoldPoint(np.exp(1j * rng.uniform(0, 2 * np.pi, shape)))


def project_tx(manifold: Hypersphere, base: ManifoldPoint, z) -> TangentVector:
    return manifold.proj(base, z)


def project_ris(base: ManifoldPoint, z) -> TangentVector:
    return ComplexCircle().proj(base, z)


def retract_tx(manifold: Hypersphere, base: ManifoldPoint, z) -> ManifoldPoint:
    return manifold.retr(base, z)


def retract_ris(base: ManifoldPoint, z) -> ManifoldPoint:
    return ComplexCircle().retr(base, z)


def discretize_phases(theta, alphabet: PhaseAlphabet) -> np.ndarray:
    """Nearest alphabet level per element (chordal distance, ties to the smaller argument)."""
    return alphabet.nearest(theta)


# ---------------------------------------------------------------------------
# conjugate ascent

@dataclass
class RcgState:
    direction: TangentVector
    last_gradient: TangentVector
    pr_beta: float = 0.0
    step: float = 1.0
    iter: int = 0


@dataclass
class AscentResult:
    point: ManifoldPoint
    value: float
    values: list
    grad_norms: list
    iterations: int
    converged: bool
    stalled: bool
    restarts: int = 0


def riemannian_ascent(manifold, cost: Callable, egrad: Callable, x0, max_iter=30, tol=1e-6,
                      step0=1.0, contraction=0.5, c1=1e-4, max_backtracks=30,
                      stage: str | None = None, snap: Callable | None = None,
                      difference: str = "direction") -> AscentResult:
    """Polak-Ribiere conjugate ascent with Armijo backtracking.

    The combination factor is <g_i, J_i> / <g_{i-1}, g_{i-1}> with
    J_i = g_i - T(eta_{i-1}) (``difference="direction"``) or the textbook
    J_i = g_i - T(g_{i-1}) (``difference="gradient"``). It is set to 0 when
    the previous gradient has squared norm below 1e-30, and the direction
    falls back to the gradient
    whenever it is not an ascent direction. ``snap`` (optional) maps each
    accepted point to a nearby one before the next iteration.
    """
    x = x0 if isinstance(x0, ManifoldPoint) else manifold.point(x0)
    f = cost(x.value)
    g = manifold.proj(x, egrad(x.value))
    st = RcgState(direction=g, last_gradient=g, step=step0)
    values, grad_norms = [f], [manifold.norm(g)]
    converged = stalled = False
    restarts = 0
    for i in range(max_iter):
        if grad_norms[-1] < tol:
            converged = True
            break
        if stage:
            flops.tick(f"{stage}.iteration")
        eta = st.direction
        slope = manifold.inner(g, eta)
        if slope <= 0:
            eta, slope = g, manifold.inner(g, g)
            restarts += 1
        step = step0
        for _ in range(max_backtracks + 1):
            try:
                xn = manifold.retr(x, TangentVector(step * eta.value, x.stamp))
                fn = cost(xn.value)
            except StepTooLarge:
                fn = -np.inf
            if fn >= f + c1 * step * slope:
                break
            step *= contraction
        else:
            stalled = True
            break
        if snap is not None:
            xn = manifold.point(snap(xn.value))
            fn = cost(xn.value)
        gn = manifold.proj(xn, egrad(xn.value))
        eta_t = manifold.transport(x, xn, eta)
        if difference == "direction":
            j = TangentVector(gn.value - eta_t.value, xn.stamp)
        else:
            j = TangentVector(gn.value - manifold.transport(x, xn, g).value, xn.stamp)
        denom = manifold.inner(g, g)
        delta = 0.0 if denom < 1e-30 else manifold.inner(gn, j) / denom
        st = RcgState(direction=TangentVector(gn.value + delta * eta_t.value, xn.stamp),
                      last_gradient=g, pr_beta=delta, step=step, iter=i + 1)
        x, f, g = xn, fn, gn
        values.append(f)
        grad_norms.append(manifold.norm(g))
    else:
        converged = grad_norms[-1] < tol
    return AscentResult(point=x, value=f, values=values, grad_norms=grad_norms,
                        iterations=len(values) - 1, converged=converged, stalled=stalled,
                        restarts=restarts)


# ---------------------------------------------------------------------------
# the weighted objective and its Euclidean gradients

class WeightedProblem:
    """Weighted objective on one channel realization with fixed normalizers."""

    def __init__(self, ch: ChannelSet, cfg: ScenarioConfig, mi_norm: float, rate_norm: float,
                 sensing_paths=SENSING_PATHS):
        self.ch, self.cfg = ch, cfg
        self.mi_norm, self.rate_norm = float(mi_norm), float(rate_norm)
        self.paths = tuple(sensing_paths)
        self.noise = cfg.noise_power_w
        self.weights = np.asarray(cfg.rate_weights, float)
        self.eps = cfg.weight_epsilon
        self.a, self.b = mu_affine(ch)
        self.p_conj = np.conj(ch.d_ris_rx @ ch.d_ris_rx.conj().T)   # conj(D' D'^H)

    # values -----------------------------------------------------------
    def _combine(self, y, rates):
        return (self.eps * np.sum(np.log2(1 + y / self.noise), axis=-1) / self.mi_norm
                + (1 - self.eps) * np.sum(rates, axis=-1) / self.rate_norm)

    def value(self, s, theta) -> float:
        r_s = sensing_covariance(self.ch, theta, self.paths)
        mu = effective_channels(self.ch, theta)
        return float(self._combine(diag_gains(s, r_s), rates_from(s, mu, self.noise, self.weights)))

    def tx_cost(self, theta):
        """Objective as a function of S at fixed phases."""
        r_s = sensing_covariance(self.ch, theta, self.paths)
        mu = effective_channels(self.ch, theta)
        nt, k = self.ch.n_tx, self.ch.n_users

        def cost(s):
            flops.count("rsa_tx.cost", 8 * nt * nt * k + 8 * nt * k * k + 16 * k)
            return float(self._combine(diag_gains(s, r_s), rates_from(s, mu, self.noise, self.weights)))

        return cost, r_s, mu

    def ris_cost(self, s):
        """Objective as a function of theta at fixed S."""
        ev = PhaseEvaluator(self.ch, s, self.noise, self.paths, stage="rsa_ris")

        def cost(theta):
            return float(self._combine(ev.gains(theta)[0], ev.rates(theta, self.weights)[0]))

        return cost

    # gradients ----------------------------------------------------------
    def egrad_tx(self, s, r_s, mu) -> np.ndarray:
        nt, k = s.shape
        y = diag_gains(s, r_s)
        g = (2 * self.eps / (_LN2 * self.mi_norm)) * (r_s @ s) / (y + self.noise)
        c = mu.conj() @ s                                   # c[i, j] = mu_i^H s_j
        p = np.abs(c) ** 2
        total = p.sum(axis=1) + self.noise                  # T_i
        zeta = total - np.diag(p)                           # interference + noise
        # coef[i, j]: weight of mu_i mu_i^H s_j in column j
        coef = self.weights[:, None] * (1 / total[:, None] - (1 - np.eye(k)) / zeta[:, None])
        g = g + (2 * (1 - self.eps) / (_LN2 * self.rate_norm)) * (mu.T @ (coef * c))
        flops.count("rsa_tx.egrad", 8 * nt * nt * k + 16 * nt * k * k + 24 * k * k + 8 * nt * k)
        return g

    def egrad_ris(self, s, theta) -> np.ndarray:
        ch = self.ch
        l_count, k, m, nt, nr = ch.n_scatterers, ch.n_users, ch.n_ris, ch.n_tx, ch.n_rx
        theta = np.asarray(theta, complex)
        pc = self.p_conj
        u = ch.d_bs_ris.conj().T @ s                        # u[:, k] = D^H s_k
        gy = np.zeros((k, m), complex)                      # 2 dy_k/dtheta*
        y = np.zeros(k)
        for kk in range(k):
            uk = u[:, kk]
            uc = uk.conj()
            y[kk] = np.sum(np.abs(ch.h_btb @ s[:, kk]) ** 2) if "BTB" in self.paths else 0.0
            for ll in range(l_count):
                if "RTR" in self.paths:
                    h = ch.h_rtr[ll]
                    w = h.T @ (uc * theta)
                    z = theta * w
                    pz = pc @ z
                    # quartic term: Q = diag(u) conj(H) [(theta* theta^T) o conj(P)] H^T diag(u*)
                    weighted = np.outer(theta.conj(), theta) * pc
                    q = (uk[:, None] * h.conj()) @ weighted @ (h.T * uc[None, :])
                    gy[kk] += 2 * (q @ theta + w.conj() * pz)
                    y[kk] += np.real(np.vdot(z, pz))
                    flops.count("rsa_ris.egrad", 16 * m**3 + 8 * m * m * 3 + 40 * m)
                if "BTR" in self.paths:
                    bk = ch.h_btr[ll].conj().T @ s[:, kk]
                    x = bk.conj() * theta
                    px = pc @ x
                    gy[kk] += 2 * bk * px
                    y[kk] += np.real(np.vdot(x, px))
                    flops.count("rsa_ris.egrad", 8 * nt * m + 8 * m * m + 20 * m)
                if "RTB" in self.paths:
                    hb = ch.h_btr[ll]
                    x = theta * uc
                    hx = hb @ x
                    gy[kk] += 2 * uk * (hb.conj().T @ hx)
                    y[kk] += np.real(np.vdot(hx, hx))
                    flops.count("rsa_ris.egrad", 16 * nt * m + 20 * m)
        grad = (self.eps / (_LN2 * self.mi_norm)) * np.sum(gy / (y + self.noise)[:, None], axis=0)

        mu = self.a + self.b @ theta
        c = mu.conj() @ s                                   # c[i, j] = mu_i^H s_j
        bs = np.einsum("inm,nj->ijm", self.b.conj(), s)     # B_i^H s_j
        gp = 2 * bs * np.conj(c)[:, :, None]                # 2 d|mu_i^H s_j|^2 / dtheta*
        p = np.abs(c) ** 2
        total = p.sum(axis=1) + self.noise
        zeta = total - np.diag(p)
        coef = self.weights[:, None] * (1 / total[:, None] - (1 - np.eye(k)) / zeta[:, None])
        grad = grad + ((1 - self.eps) / (_LN2 * self.rate_norm)) * np.einsum("ij,ijm->m", coef, gp)
        flops.count("rsa_ris.egrad", k * k * (8 * nt * m + 8 * nt + 16 * m) + 8 * nt * m * k)
        return grad


def default_normalizers(state: BeamformingState, ch: ChannelSet, cfg: ScenarioConfig):
    """(I_max, R_max): the MI term and sum rate at ``state``, unless set in ``cfg``."""
    c = state.derived(ch)
    s = state.tx_matrix
    mi = float(np.sum(np.log2(1 + diag_gains(s, c.r_s) / cfg.noise_power_w)))
    rate = float(np.sum(rates_from(s, c.mu, cfg.noise_power_w, cfg.rate_weights)))
    return (cfg.mi_norm if cfg.mi_norm is not None else mi,
            cfg.rate_norm if cfg.rate_norm is not None else rate)


def _problem(state, ch, cfg, mi_norm, rate_norm) -> WeightedProblem:
    if mi_norm is None or rate_norm is None:
        d_mi, d_rate = default_normalizers(state, ch, cfg)
        mi_norm = d_mi if mi_norm is None else mi_norm
        rate_norm = d_rate if rate_norm is None else rate_norm
    return WeightedProblem(ch, cfg, mi_norm, rate_norm)


def egrad_tx(state: BeamformingState, ch: ChannelSet, cfg: ScenarioConfig,
             mi_norm=None, rate_norm=None) -> np.ndarray:
    """Euclidean gradient (2 df/dS*) of the weighted objective in S."""
    c = state.derived(ch)
    return _problem(state, ch, cfg, mi_norm, rate_norm).egrad_tx(state.tx_matrix, c.r_s, c.mu)


def egrad_ris(state: BeamformingState, ch: ChannelSet, cfg: ScenarioConfig,
              mi_norm=None, rate_norm=None) -> np.ndarray:
    """Euclidean gradient (2 df/dtheta*) of the weighted objective in theta."""
    return _problem(state, ch, cfg, mi_norm, rate_norm).egrad_ris(state.tx_matrix, state.ris_phases)


def rsa_tx(state: BeamformingState, ch: ChannelSet, cfg: ScenarioConfig, mi_norm=None, rate_norm=None,
           problem: WeightedProblem | None = None) -> AscentResult:
    """Conjugate ascent over the power hypersphere at fixed phases."""
    problem = problem or _problem(state, ch, cfg, mi_norm, rate_norm)
    cost, r_s, mu = problem.tx_cost(state.ris_phases)
    sphere = Hypersphere(cfg.tx_power_budget_w)
    return riemannian_ascent(sphere, cost, lambda s: problem.egrad_tx(s, r_s, mu), state.tx_matrix,
                             max_iter=cfg.rsa_max_iter, tol=cfg.rsa_tol, stage="rsa_tx")


def rsa_ris(state: BeamformingState, ch: ChannelSet, cfg: ScenarioConfig, mi_norm=None, rate_norm=None,
            alphabet: PhaseAlphabet | None = None, discretize: str = "end",
            problem: WeightedProblem | None = None):
    """Conjugate ascent over the complex circle at fixed S, then quantization.

    ``discretize="end"`` runs the continuous ascent to completion and maps
    to the alphabet once; ``"every"`` quantizes after each accepted step.

    Returns
    -------
    theta : ndarray
        Phases on the alphabet.
    result : AscentResult
        The continuous run (its ``point`` is before the final mapping).
    """
    if discretize not in ("end", "every"):
        raise ValueError("discretize must be 'end' or 'every'")
    alphabet = alphabet or PhaseAlphabet.from_bits(cfg.phase_bits)
    problem = problem or _problem(state, ch, cfg, mi_norm, rate_norm)
    s = state.tx_matrix
    cost = problem.ris_cost(s)
    snap = alphabet.nearest if discretize == "every" else None
    res = riemannian_ascent(ComplexCircle(), cost, lambda th: problem.egrad_ris(s, th), state.ris_phases,
                            max_iter=cfg.rsa_max_iter, tol=cfg.rsa_tol, stage="rsa_ris", snap=snap)
    return discretize_phases(res.point.value, alphabet), res


def ao_rg(ch: ChannelSet, cfg: ScenarioConfig, seed=None, alphabet: PhaseAlphabet | None = None,
          discretize: str = "end"):
    """Alternate transmit and RIS conjugate ascent on the weighted objective.

    Starts from the same feasible point as the SDR-ODI loop. A quantized
    phase vector that scores below the previous one is discarded, so the
    objective trace never decreases. Stops when the objective improves by
    less than ``cfg.ao_tol`` or after ``cfg.ao_max_iter_rg`` iterations.
    """
    alphabet = alphabet or PhaseAlphabet.from_bits(cfg.phase_bits)
    rng = np.random.default_rng(cfg.rng_seed if seed is None else seed)
    trace = OptimizerTrace("rg")
    with flops.counting() as counter:
        state = feasible_start(ch, cfg, rng, alphabet)
        mi_norm, rate_norm = default_normalizers(state, ch, cfg)
        problem = WeightedProblem(ch, cfg, mi_norm, rate_norm)

        def report(st):
            return evaluate(st, ch, cfg, alphabet, mi_norm=mi_norm, rate_norm=rate_norm)

        value = problem.value(state.tx_matrix, state.ris_phases)
        trace.record(0, value, report(state), counter)
        trace.notes.append(f"normalizers mi={mi_norm!r} rate={rate_norm!r}")
        for it in range(1, cfg.ao_max_iter_rg + 1):
            tx = rsa_tx(state, ch, cfg, problem=problem)
            s = tx.point.value
            theta, ris = rsa_ris(BeamformingState(s, state.ris_phases), ch, cfg, alphabet=alphabet,
                                 discretize=discretize, problem=problem)
            trace.inner.append(dict(iteration=it, tx_grad_norms=tx.grad_norms, ris_grad_norms=ris.grad_norms))
            trace.stalled |= tx.stalled or ris.stalled
            if problem.value(s, theta) < problem.value(s, state.ris_phases):
                theta = state.ris_phases
            state = BeamformingState(s, theta)
            new_value = problem.value(s, theta)
            trace.record(it, new_value, report(state), counter)
            if new_value - value < cfg.ao_tol:
                trace.converged = True
                break
            value = new_value
    trace.finish(counter)
    return state, trace
