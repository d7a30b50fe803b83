"""Log-barrier interior-point solver for the relaxed transmit subproblem.

The problem is

    maximize    sum_k log(tr(R_s G_k) + sigma_s^2)
    subject to  mu_k^H G_k mu_k - g_k sum_{i != k} mu_k^H G_i mu_k >= g_k sigma_u^2
                sum_k tr(G_k) <= P0,   G_k >= 0

over K Hermitian N_t x N_t matrices ``G_k``. Each matrix is written in a
real orthonormal basis of the Hermitian space (N_t^2 coordinates) so the
Newton system is an ordinary real symmetric one. Data are rescaled so the
budget is 1 and the noise floors are 1 before solving.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import flops
from .errors import DomainError, InfeasibleRate, StructuralError

log = logging.getLogger(__name__)


def hermitian_basis(n: int) -> np.ndarray:
    """Orthonormal basis (n^2, n, n) of n x n Hermitian matrices under Re tr(A^H B)."""
    basis = []
    for i in range(n):
        e = np.zeros((n, n), complex)
        e[i, i] = 1.0
        basis.append(e)
    r = 1 / np.sqrt(2)
    for i in range(n):
        for j in range(i + 1, n):
            e = np.zeros((n, n), complex)
            e[i, j] = e[j, i] = r
            basis.append(e)
            e = np.zeros((n, n), complex)
            e[i, j], e[j, i] = 1j * r, -1j * r
            basis.append(e)
    return np.array(basis)


def to_coords(basis, x):
    return np.einsum("aij,...ji->...a", basis, x).real


def from_coords(basis, v):
    return np.einsum("...a,aij->...ij", v, basis)


@dataclass
class SdpSubproblem:
    """Data of one transmit subproblem.

    ``mu`` holds the K effective user channels as rows; ``sinr_floor`` is the
    per-user SINR target (0 disables that user's constraint).
    """

    r_s: np.ndarray
    mu: np.ndarray
    sinr_floor: np.ndarray
    power_budget: float
    noise_s: float
    noise_u: np.ndarray

    def __post_init__(self):
        self.r_s = np.asarray(self.r_s, complex)
        self.mu = np.atleast_2d(np.asarray(self.mu, complex))
        k, n = self.mu.shape
        self.sinr_floor = np.broadcast_to(np.asarray(self.sinr_floor, float), (k,)).copy()
        self.noise_u = np.broadcast_to(np.asarray(self.noise_u, float), (k,)).copy()
        if self.r_s.shape != (n, n):
            raise StructuralError("r_s must be N_t x N_t matching mu")
        scale = max(np.abs(self.r_s).max(), np.finfo(float).tiny)
        if np.abs(self.r_s - self.r_s.conj().T).max() > 1e-10 * scale:
            raise StructuralError("r_s is not Hermitian")
        if np.linalg.eigvalsh(self.r_s).min() < -1e-10 * scale * n:
            raise StructuralError("r_s is not positive semidefinite")
        if np.any(self.sinr_floor < 0):
            raise DomainError("SINR floors must be non-negative")
        if self.power_budget <= 0 or self.noise_s <= 0 or np.any(self.noise_u <= 0):
            raise DomainError("budget and noise powers must be positive")

    @property
    def n_tx(self):
        return self.mu.shape[1]

    @property
    def n_users(self):
        return self.mu.shape[0]

    def constraint_margins(self, gammas) -> np.ndarray:
        """Linearized SINR margins xi_k - g_k (sum_i zeta_ki + sigma_u^2) per user."""
        q = np.einsum("kn,inm,km->ki", self.mu.conj(), gammas, self.mu).real
        own = np.diag(q)
        other = q.sum(axis=1) - own
        return own - self.sinr_floor * (other + self.noise_u)

    def objective(self, gammas) -> float:
        y = np.einsum("nm,kmn->k", self.r_s, gammas).real
        return float(np.sum(np.log(y + self.noise_s)))


@dataclass
class SdpSolution:
    gammas: np.ndarray
    objective: float
    dual_objective: float
    kkt_residual: float
    ranks: np.ndarray
    iterations: int


def numerical_rank(g, rel_tol=1e-6) -> int:
    w = np.linalg.eigvalsh(g)
    top = np.abs(w).max()
    return int(np.sum(w > rel_tol * top)) if top > 0 else 0


class _Barrier:
    """Barrier machinery shared by the phase-1 and phase-2 problems.

    Variables are a real vector whose first ``K*n^2`` entries are the Hermitian
    coordinates of the K blocks; extra scalar variables may follow. Linear
    constraints read ``A x + b > 0``.
    """

    def __init__(self, n, k, a, b, n_extra=0):
        self.n, self.k = n, k
        self.basis = hermitian_basis(n)
        self.nb = n * n
        self.a, self.b = a, b
        self.dim = k * self.nb + n_extra
        self.degree = len(b) + k * n

    def blocks(self, x):
        return from_coords(self.basis, x[: self.k * self.nb].reshape(self.k, self.nb))

    def strictly_feasible(self, x):
        if np.any(self.a @ x + self.b <= 0):
            return False
        try:
            np.linalg.cholesky(self.blocks(x))
        except np.linalg.LinAlgError:
            return False
        return True

    def value(self, x):
        slack = self.a @ x + self.b
        _, logdet = np.linalg.slogdet(self.blocks(x))
        return float(np.sum(np.log(slack)) + np.sum(logdet))

    def derivatives(self, x):
        slack = self.a @ x + self.b
        ws = self.a / slack[:, None]
        grad = ws.sum(axis=0)
        hess = -ws.T @ ws
        inv = np.linalg.inv(self.blocks(x))
        e = self.basis
        for j in range(self.k):
            sl = slice(j * self.nb, (j + 1) * self.nb)
            ginv = 0.5 * (inv[j] + inv[j].conj().T)
            grad[sl] += to_coords(e, ginv)
            geg = np.einsum("ij,ajk,kl->ail", ginv, e, ginv)
            hess[sl, sl] -= to_coords(e, geg).T
        flops.count("sdp.newton", 8 * self.k * self.nb * self.n**3 + 2 * self.dim**3)
        return grad, hess

    def maximize(self, x, obj, t, tol, stop=None, residual=None, max_outer=60, max_newton=80):
        """Path-following ascent on ``t*obj + barrier`` from strictly feasible ``x``.

        ``obj(x)`` returns value, gradient and Hessian of the concave objective.
        With ``residual(x, t)`` given, the centered point with the smallest
        residual is returned and the path is abandoned once rounding makes
        the residual grow. Returns ``(x, t, iterations)``.
        """
        iters = 0
        best = None
        for _ in range(max_outer):
            last_dec = np.inf
            for _ in range(max_newton):
                iters += 1
                f0, g0, h0 = obj(x)
                gb, hb = self.derivatives(x)
                g = t * g0 + gb
                h = t * h0 + hb
                step = self._newton_step(h, g)
                dec = float(g @ step)
                if dec / 2 <= 1e-22:
                    break
                tau = 1.0
                while tau > 1e-20 and not self.strictly_feasible(x + tau * step):
                    tau *= 0.5
                if dec > 1e-6:
                    # damped phase; inside the quadratic region the pure step is
                    # taken since value comparisons lose meaning at this scale
                    fx = t * f0 + self.value(x)
                    while tau > 1e-20:
                        xn = x + tau * step
                        if t * obj(xn)[0] + self.value(xn) >= fx + 0.25 * tau * dec:
                            break
                        tau *= 0.5
                if tau <= 1e-20:
                    log.debug("line search stalled at t=%.1e, decrement %.2e", t, dec)
                    break
                if dec < 1e-6 and dec > 0.25 * last_dec:
                    break  # no longer converging: rounding floor reached
                last_dec = dec
                x = x + tau * step
                if stop is not None and stop(x):
                    return x, t, iters
            if stop is not None and stop(x):
                return x, t, iters
            log.debug("t=%.1e newton=%d decrement=%.2e", t, iters, dec)
            if residual is not None:
                r = residual(x, t)
                if best is None or r < best[2]:
                    best = (x, t, r)
                elif r > 10 * best[2]:
                    break
                if r <= tol:
                    break
            elif self.degree / t < tol:
                break
            t *= 10.0
        if best is not None:
            x, t = best[0], best[1]
        return x, t, iters

    def kkt_residual(self, x, grad_obj, t):
        """KKT residual of the barrier point read as a primal-dual pair.

        Multipliers of the linear rows are ``1/(t*slack)``; the matrix
        multiplier of each block is whatever closes stationarity, so the
        residual collects its PSD violation, complementarity and the gap.
        """
        slack = self.a @ x + self.b
        lam = 1.0 / (t * slack)
        z = -(grad_obj + self.a.T @ lam)
        zb = from_coords(self.basis, z[: self.k * self.nb].reshape(self.k, self.nb))
        gb = self.blocks(x)
        scale = max(1.0, float(np.abs(grad_obj).max()))
        viol = max(0.0, -float(min(np.linalg.eigvalsh(m).min() for m in zb))) / scale
        comp = abs(float(np.einsum("kij,kji->", zb, gb).real)) + float(lam @ slack)
        extra = float(np.abs(z[self.k * self.nb:]).max()) if self.dim > self.k * self.nb else 0.0
        return max(viol, comp, extra / scale)

    @staticmethod
    def _newton_step(h, g):
        # h is negative definite; solve (-h) step = g
        try:
            c = np.linalg.cholesky(-h)
            return np.linalg.solve(c.conj().T, np.linalg.solve(c, g))
        except np.linalg.LinAlgError:
            return np.linalg.lstsq(-h, g, rcond=None)[0]


def _normalized_rows(prob: SdpSubproblem, basis, floors):
    """Constraint rows A x + b > 0 on the normalized problem."""
    k, n = prob.mu.shape
    nb = n * n
    p0 = prob.power_budget
    mu_n = prob.mu * np.sqrt(p0 / prob.noise_u)[:, None]
    rows, offs = [], []
    for j in range(k):
        if floors[j] <= 0:
            continue
        c = to_coords(basis, np.outer(mu_n[j], mu_n[j].conj()))
        row = np.zeros(k * nb)
        for i in range(k):
            row[i * nb:(i + 1) * nb] = c if i == j else -floors[j] * c
        scale = max(np.linalg.norm(row), floors[j])
        rows.append(row / scale)
        offs.append(-floors[j] / scale)
    trace_row = np.tile(to_coords(basis, np.eye(n)), k)
    rows.append(-trace_row)
    offs.append(1.0)
    return np.array(rows), np.array(offs)


def _phase_one(prob, floors, tol=1e-10):
    """Strictly feasible normalized point for ``floors``, or None."""
    k, n = prob.mu.shape
    basis = hermitian_basis(n)
    a, b = _normalized_rows(prob, basis, floors)
    n_sinr = len(b) - 1
    x0 = np.tile(to_coords(basis, np.eye(n) / (2 * k * n)), k)
    if n_sinr == 0:
        return x0
    s0 = max(0.0, float(np.max(-(a[:n_sinr] @ x0 + b[:n_sinr])))) + 1.0
    a1 = np.hstack([a, np.zeros((len(b), 1))])
    a1[:n_sinr, -1] = 1.0
    bar = _Barrier(n, k, a1, b, n_extra=1)
    z0 = np.append(x0, s0)

    def obj(z):
        g = np.zeros_like(z)
        g[-1] = -1.0
        return -z[-1], g, np.zeros((len(z), len(z)))

    # keep some margin so the phase-2 start is not pinned to the boundary
    z, _, _ = bar.maximize(z0, obj, t=1.0, tol=tol, stop=lambda z: z[-1] < -1e-3)
    if z[-1] < 0:
        return z[:-1]
    return None


def _max_common_scale(prob, iters=30):
    lo, hi = 0.0, 1.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if _phase_one(prob, mid * prob.sinr_floor) is not None:
            lo = mid
        else:
            hi = mid
    return lo


def solve_sdp(prob: SdpSubproblem, tol: float = 1e-9) -> SdpSolution:
    """Solve the relaxed transmit subproblem to duality gap ``tol``.

    Raises
    ------
    InfeasibleRate
        When no strictly feasible point meets the SINR floors. The exception
        carries ``max_sinr``, the largest common fraction of the floors that
        phase 1 could certify.
    """
    flops.tick("sdp.solve")
    k, n = prob.mu.shape
    p0 = prob.power_budget
    x0 = _phase_one(prob, prob.sinr_floor)
    if x0 is None:
        c = _max_common_scale(prob)
        raise InfeasibleRate("SINR floors are not jointly attainable", max_sinr=c * prob.sinr_floor)
    basis = hermitian_basis(n)
    a, b = _normalized_rows(prob, basis, prob.sinr_floor)
    bar = _Barrier(n, k, a, b)
    r_c = to_coords(basis, prob.r_s * (p0 / prob.noise_s))
    nb = n * n

    def obj(x):
        xb = x.reshape(k, nb)
        u = 1.0 + xb @ r_c
        g = (r_c[None, :] / u[:, None]).ravel()
        h = np.zeros((k * nb, k * nb))
        for j in range(k):
            sl = slice(j * nb, (j + 1) * nb)
            h[sl, sl] = -np.outer(r_c, r_c) / u[j] ** 2
        return float(np.sum(np.log(u))), g, h

    def residual(x, t):
        return max(bar.kkt_residual(x, obj(x)[1], t), bar.degree / t)

    x, t, iters = bar.maximize(x0, obj, t=float(bar.degree), tol=tol, residual=residual)
    gap = bar.degree / t
    gammas = bar.blocks(x) * p0
    gammas = 0.5 * (gammas + np.conj(np.transpose(gammas, (0, 2, 1))))
    base = k * np.log(prob.noise_s)
    primal = base + obj(x)[0]
    return SdpSolution(
        gammas=gammas,
        objective=float(primal),
        dual_objective=float(primal + gap),
        kkt_residual=float(residual(x, t)),
        ranks=np.array([numerical_rank(g) for g in gammas]),
        iterations=iters,
    )
