"""Sensing and communication performance metrics.

Units: mutual information and rates are reported in bits (log base 2).
The radar MI is the constant-stripped form

    N_r * log2 det(I_K + S^H R_s S / sigma^2)

and its Hadamard upper bound replaces the determinant by the product of
the diagonal entries ``y_k = s_k^H R_s s_k``. The weighted objective uses
the per-receive-antenna bound ``sum_k log2(1 + y_k/sigma^2)`` as its MI
term.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import flops
from .channels import ChannelSet, PhaseAlphabet
from .config import ScenarioConfig
from .errors import ConfigError, DomainError, StaleCacheError, StructuralError

SENSING_PATHS = ("RTR", "BTB", "BTR", "RTB")
# direct, BS-RIS-user, BS-scatterer-user, BS-RIS-scatterer-user, BS-scatterer-RIS-user
COMM_TERMS = ("BU", "BRU", "BTU", "BRTU", "BTRU")


class BeamformingState:
    """Transmit matrix ``S`` (Nt x K) and RIS phase vector ``theta`` (M).

    The arrays are stored read-only; assigning a new array bumps a version
    stamp that invalidates the cached ``R_s`` and effective channels.
    """

    def __init__(self, tx_matrix, ris_phases):
        self._version = 0
        self._cache = None
        self.tx_matrix = tx_matrix
        self.ris_phases = ris_phases

    @staticmethod
    def _frozen(a):
        a = np.array(a, dtype=complex)
        a.setflags(write=False)
        return a

    @property
    def tx_matrix(self) -> np.ndarray:
        return self._s

    @tx_matrix.setter
    def tx_matrix(self, value):
        value = self._frozen(value)
        if value.ndim != 2:
            raise StructuralError("tx_matrix must be 2-D (Nt x K)")
        self._s = value
        self._version += 1

    @property
    def ris_phases(self) -> np.ndarray:
        return self._theta

    @ris_phases.setter
    def ris_phases(self, value):
        value = self._frozen(value)
        if value.ndim != 1:
            raise StructuralError("ris_phases must be 1-D")
        self._theta = value
        self._version += 1

    @property
    def stamp(self):
        return self._version

    def copy(self) -> "BeamformingState":
        return BeamformingState(self._s, self._theta)

    @property
    def cache(self) -> "DerivedCache":
        """The cached derived quantities; raises if they are stale."""
        if self._cache is None or self._cache.stamp != self._version:
            raise StaleCacheError("beamforming state changed since the cache was built")
        return self._cache

    def derived(self, ch: ChannelSet) -> "DerivedCache":
        c = self._cache
        if c is None or c.stamp != self._version or c.channel_id != id(ch):
            c = DerivedCache(
                stamp=self._version,
                channel_id=id(ch),
                r_s=sensing_covariance(ch, self._theta),
                mu=effective_channels(ch, self._theta),
            )
            self._cache = c
        return c


@dataclass(frozen=True)
class DerivedCache:
    stamp: int
    channel_id: int
    r_s: np.ndarray
    mu: np.ndarray


@dataclass
class MetricReport:
    mi_exact: float
    mi_upper: float
    rates: np.ndarray
    xi: np.ndarray
    zeta: np.ndarray
    feasible: dict
    weighted_objective: float | None = None
    power: float = 0.0

    @property
    def sinrs(self) -> np.ndarray:
        return self.xi / self.zeta

    @staticmethod
    def csv_header(n_users: int) -> list[str]:
        cols = ["mi_exact", "mi_upper"]
        cols += [f"rate_{k}" for k in range(n_users)]
        cols += [f"sinr_{k}" for k in range(n_users)]
        cols += ["power", "rate_ok", "power_ok", "alphabet_ok", "weighted_objective"]
        return cols

    def as_row(self) -> list:
        wo = "" if self.weighted_objective is None else f"{self.weighted_objective:.12g}"
        row = [f"{self.mi_exact:.12g}", f"{self.mi_upper:.12g}"]
        row += [f"{r:.12g}" for r in self.rates]
        row += [f"{s:.12g}" for s in self.sinrs]
        row += [f"{self.power:.12g}", int(np.all(self.feasible["rate"])),
                int(self.feasible["power"]), int(self.feasible["alphabet"]), wo]
        return row


def _check_paths(paths, allowed):
    paths = tuple(paths)
    bad = set(paths) - set(allowed)
    if bad:
        raise DomainError(f"unknown path names {sorted(bad)}")
    return paths


def sensing_covariance(ch: ChannelSet, theta, paths=SENSING_PATHS) -> np.ndarray:
    """Sum over scatterers of the per-path Gram matrices (Nt x Nt)."""
    theta = np.asarray(theta)
    paths = _check_paths(paths, SENSING_PATHS)
    if theta.shape != (ch.n_ris,):
        raise StructuralError(f"theta has shape {theta.shape}, expected ({ch.n_ris},)")
    nt = ch.n_tx
    r = np.zeros((nt, nt), dtype=complex)
    d_theta = ch.d_bs_ris * theta[None, :]           # D Theta
    theta_dp = theta[:, None] * ch.d_ris_rx           # Theta D'
    if "RTR" in paths:
        a = d_theta @ ch.h_rtr @ theta_dp             # (L, Nt, Nr)
        r += np.einsum("lij,lkj->ik", a, a.conj())
    if "BTB" in paths:
        r += np.einsum("lji,ljk->ik", ch.h_btb.conj(), ch.h_btb)
    if "BTR" in paths:
        b = ch.h_btr @ theta_dp
        r += np.einsum("lij,lkj->ik", b, b.conj())
    if "RTB" in paths:
        c = d_theta @ ch.h_rtb                       # (L, Nt, Nt)
        r += np.einsum("lij,lkj->ik", c, c.conj())
    return r


def mu_affine(ch: ChannelSet, terms=COMM_TERMS):
    """Offsets ``a`` (K, Nt) and maps ``B`` (K, Nt, M) with mu_k = a_k + B_k theta."""
    terms = _check_paths(terms, COMM_TERMS)
    k, nt, m = ch.n_users, ch.n_tx, ch.n_ris
    a = np.zeros((k, nt), dtype=complex)
    b = np.zeros((k, nt, m), dtype=complex)
    if "BU" in terms:
        a += ch.h_bu
    if "BTU" in terms:
        a += ch.h_btu.sum(axis=0)
    if "BRU" in terms:
        b += ch.d_bs_ris[None, :, :] * ch.h_ru[:, None, :]
    if "BRTU" in terms:
        b += ch.d_bs_ris[None, :, :] * ch.h_rtu.sum(axis=0)[:, None, :]
    if "BTRU" in terms:
        b += ch.h_btr.sum(axis=0)[None, :, :] * ch.h_ru[:, None, :]
    return a, b


def effective_channels(ch: ChannelSet, theta, terms=COMM_TERMS) -> np.ndarray:
    """All effective user channels mu_k stacked as rows (K, Nt)."""
    theta = np.asarray(theta)
    if theta.shape != (ch.n_ris,):
        raise StructuralError("theta does not match the RIS size")
    a, b = mu_affine(ch, terms)
    return a + b @ theta


def effective_channel(ch: ChannelSet, theta, k: int) -> np.ndarray:
    if not 0 <= k < ch.n_users:
        raise IndexError(f"user index {k} out of range")
    return effective_channels(ch, theta)[k]


def _check_noise(noise):
    if np.any(np.asarray(noise) <= 0):
        raise DomainError("noise power must be positive")


def mi_exact_from(s, r_s, noise, n_rx) -> float:
    q = s.conj().T @ r_s @ s
    k = q.shape[0]
    sign, logdet = np.linalg.slogdet(np.eye(k) + q / noise)
    return float(n_rx * logdet / np.log(2))


def diag_gains(s, r_s) -> np.ndarray:
    """y_k = s_k^H R_s s_k for every column."""
    return np.real(np.einsum("ik,ij,jk->k", s.conj(), r_s, s))


def mi_upper_from(s, r_s, noise, n_rx) -> float:
    y = diag_gains(s, r_s)
    return float(n_rx * np.sum(np.log2(1 + y / noise)))


def radar_mi_exact(state: BeamformingState, ch: ChannelSet, noise: float) -> float:
    _check_noise(noise)
    return mi_exact_from(state.tx_matrix, state.derived(ch).r_s, noise, ch.n_rx)


def radar_mi_upper(state: BeamformingState, ch: ChannelSet, noise: float) -> float:
    _check_noise(noise)
    return mi_upper_from(state.tx_matrix, state.derived(ch).r_s, noise, ch.n_rx)


def sinr_parts(s, mu, noise):
    """Signal powers xi_k and interference-plus-noise zeta_k."""
    g = np.abs(mu.conj() @ s) ** 2                    # g[k, i] = |mu_k^H s_i|^2
    xi = np.diag(g).copy()
    zeta = g.sum(axis=1) - xi + np.broadcast_to(noise, xi.shape)
    return xi, zeta


def rates_from(s, mu, noise, weights) -> np.ndarray:
    xi, zeta = sinr_parts(s, mu, noise)
    return np.asarray(weights) * np.log2(1 + xi / zeta)


def user_rate(state: BeamformingState, ch: ChannelSet, k: int, noise: float, weight: float):
    """(xi_k, zeta_k, R_k) for user ``k``; R_k = weight * log2(1 + xi/zeta)."""
    _check_noise(noise)
    if not 0 <= k < ch.n_users:
        raise IndexError(f"user index {k} out of range")
    mu = state.derived(ch).mu
    s = state.tx_matrix
    c = mu[k].conj() @ s
    xi = float(np.abs(c[k]) ** 2)
    zeta = float(np.sum(np.abs(c) ** 2) - xi + noise)
    return xi, zeta, float(weight * np.log2(1 + xi / zeta))


def resolve_normalizers(cfg: ScenarioConfig, mi_norm=None, rate_norm=None):
    mi_norm = cfg.mi_norm if mi_norm is None else mi_norm
    rate_norm = cfg.rate_norm if rate_norm is None else rate_norm
    if mi_norm is None or rate_norm is None or mi_norm <= 0 or rate_norm <= 0:
        raise ConfigError("weighted objective needs positive mi_norm and rate_norm")
    return mi_norm, rate_norm


def weighted_value(s, r_s, mu, cfg: ScenarioConfig, mi_norm, rate_norm) -> float:
    eps, noise = cfg.weight_epsilon, cfg.noise_power_w
    mi_term = np.sum(np.log2(1 + diag_gains(s, r_s) / noise))
    rate_term = np.sum(rates_from(s, mu, noise, cfg.rate_weights))
    return float(eps * mi_term / mi_norm + (1 - eps) * rate_term / rate_norm)


def weighted_objective(state: BeamformingState, ch: ChannelSet, cfg: ScenarioConfig,
                       mi_norm=None, rate_norm=None) -> float:
    """eps * MI-bound / I_max + (1 - eps) * sum rate / R_max."""
    mi_norm, rate_norm = resolve_normalizers(cfg, mi_norm, rate_norm)
    c = state.derived(ch)
    return weighted_value(state.tx_matrix, c.r_s, c.mu, cfg, mi_norm, rate_norm)


def _report(s, theta, r_s, mu, n_rx, cfg, alphabet=None, mi_norm=None, rate_norm=None) -> MetricReport:
    noise = cfg.noise_power_w
    xi, zeta = sinr_parts(s, mu, noise)
    rates = np.asarray(cfg.rate_weights) * np.log2(1 + xi / zeta)
    power = float(np.sum(np.abs(s) ** 2))
    alphabet = alphabet or PhaseAlphabet.from_bits(cfg.phase_bits)
    feasible = dict(
        rate=rates >= cfg.rate_threshold - 1e-9,
        power=power <= cfg.tx_power_budget_w * (1 + 1e-8),
        alphabet=bool(np.all(alphabet.contains(theta))),
    )
    wo = None
    mi_norm = cfg.mi_norm if mi_norm is None else mi_norm
    rate_norm = cfg.rate_norm if rate_norm is None else rate_norm
    if mi_norm and rate_norm:
        wo = weighted_value(s, r_s, mu, cfg, mi_norm, rate_norm)
    return MetricReport(
        mi_exact=mi_exact_from(s, r_s, noise, n_rx), mi_upper=mi_upper_from(s, r_s, noise, n_rx),
        rates=rates, xi=xi, zeta=zeta, feasible=feasible, weighted_objective=wo, power=power,
    )


def evaluate(state: BeamformingState, ch: ChannelSet, cfg: ScenarioConfig, alphabet=None,
             mi_norm=None, rate_norm=None) -> MetricReport:
    c = state.derived(ch)
    return _report(state.tx_matrix, state.ris_phases, c.r_s, c.mu, ch.n_rx, cfg, alphabet, mi_norm, rate_norm)


def path_decomposition(state: BeamformingState, ch: ChannelSet, cfg: ScenarioConfig,
                       sensing_paths=SENSING_PATHS, comm_terms=COMM_TERMS, **kw) -> MetricReport:
    """Metrics with only the selected sensing paths / user-channel terms present."""
    sensing_paths = _check_paths(sensing_paths, SENSING_PATHS)
    comm_terms = _check_paths(comm_terms, COMM_TERMS)
    if not sensing_paths or not comm_terms:
        raise DomainError("path mask must select at least one sensing path and one channel term")
    theta = state.ris_phases
    r_s = sensing_covariance(ch, theta, sensing_paths)
    mu = effective_channels(ch, theta, comm_terms)
    return _report(state.tx_matrix, theta, r_s, mu, ch.n_rx, cfg, mi_norm=kw.get("mi_norm"),
                   rate_norm=kw.get("rate_norm"), alphabet=kw.get("alphabet"))


def entropy_constants(cfg: ScenarioConfig, n_samples: int | None = None):
    """Additive entropy terms (nats) that cancel inside the radar MI.

    Returns ``(h_noise, h_conditional_offset)`` where ``h_noise`` is the
    full differential entropy of the receiver noise block, N_r N (log pi +
    1 + log sigma^2), and ``h_conditional_offset`` = N_r N (log pi + 1) is
    the part of h(Y|SX) that does not depend on the echo covariance.
    """
    n = cfg.n_samples if n_samples is None else n_samples
    offset = cfg.n_rx * n * (np.log(np.pi) + 1.0)
    h_noise = offset + cfg.n_rx * n * np.log(cfg.noise_power_w)
    return float(h_noise), float(offset)


class PhaseEvaluator:
    """Batched metrics for many RIS phase vectors at a fixed transmit matrix.

    ``gains(thetas)`` returns y_k for every row of ``thetas`` (B x M) and
    ``sinr(thetas)`` returns (xi, zeta), both shaped (B, K). The
    interference-plus-signal power is evaluated as mu_k^H (S S^H) mu_k so
    the per-candidate rate check is linear in the number of users. Flops
    are charged to ``<stage>.<kernel>``.
    """

    def __init__(self, ch: ChannelSet, s, noise, sensing_paths=SENSING_PATHS, comm_terms=COMM_TERMS,
                 stage="phase_eval"):
        self.ch, self.s, self.noise = ch, np.asarray(s), noise
        self.stage = stage
        self.paths = _check_paths(sensing_paths, SENSING_PATHS)
        s = self.s
        self.u_conj = (ch.d_bs_ris.conj().T @ s).T.conj()                  # u_k^* rows, (K, M)
        self.b_conj = np.einsum("lnm,nk->lkm", ch.h_btr, s.conj())          # (H_btr^H s_k)^*, (L, K, M)
        self.btb = np.sum(np.abs(ch.h_btb @ s) ** 2, axis=(0, 1)) if "BTB" in self.paths else np.zeros(s.shape[1])
        self.a, self.b = mu_affine(ch, comm_terms)
        self.c = s @ s.conj().T

    def gains(self, thetas) -> np.ndarray:
        ch = self.ch
        thetas = np.atleast_2d(thetas)
        nb, m = thetas.shape
        l, k, nt, nr = ch.n_scatterers, ch.n_users, ch.n_tx, ch.n_rx
        y = np.tile(self.btb, (nb, 1)).astype(float)
        if "RTR" in self.paths:
            v = self.u_conj[None, :, :] * thetas[:, None, :]               # (B, K, M)
            w = np.einsum("lnm,bkn->blkm", ch.h_rtr, v)
            z = thetas[:, None, None, :] * w
            y += np.sum(np.abs(z @ ch.d_ris_rx) ** 2, axis=(1, 3))
            flops.count(f"{self.stage}.rtr", nb * l * k * (8 * m * m + 8 * m * nr + 14 * m))
        if "BTR" in self.paths:
            x = self.b_conj[None] * thetas[:, None, None, :]
            y += np.sum(np.abs(x @ ch.d_ris_rx) ** 2, axis=(1, 3))
            flops.count(f"{self.stage}.btr", nb * l * k * (8 * m * nr + 6 * m))
        if "RTB" in self.paths:
            v = self.u_conj[None, :, :] * thetas[:, None, :]
            t = np.einsum("lnm,bkm->blkn", ch.h_btr, v)
            y += np.sum(np.abs(t) ** 2, axis=(1, 3))
            flops.count(f"{self.stage}.rtb", nb * l * k * (8 * nt * m + 6 * m))
        return y

    def mu(self, thetas) -> np.ndarray:
        thetas = np.atleast_2d(thetas)
        return self.a[None] + np.einsum("knm,bm->bkn", self.b, thetas)

    def sinr(self, thetas):
        thetas = np.atleast_2d(thetas)
        nb = thetas.shape[0]
        k, nt, m = self.ch.n_users, self.ch.n_tx, self.ch.n_ris
        mu = self.mu(thetas)
        total = np.real(np.einsum("bkn,nq,bkq->bk", mu.conj(), self.c, mu)) + self.noise
        xi = np.abs(np.einsum("bkn,nk->bk", mu.conj(), self.s)) ** 2
        flops.count(f"{self.stage}.rate_check", nb * k * (8 * nt * m + 8 * (nt * nt + nt) + 8 * nt))
        return xi, total - xi

    def rates(self, thetas, weights) -> np.ndarray:
        xi, zeta = self.sinr(thetas)
        return np.asarray(weights)[None, :] * np.log2(1 + xi / zeta)

    def mi_upper(self, thetas) -> np.ndarray:
        return self.ch.n_rx * np.sum(np.log2(1 + self.gains(thetas) / self.noise), axis=1)
