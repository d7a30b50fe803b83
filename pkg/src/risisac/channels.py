"""Geometry, path losses and channel synthesis.

All channels follow ``H = gain * G`` where ``gain`` is the large-scale
amplitude from the node geometry and ``G`` has unit-variance entries. The
direct BS-user, RIS-user and BS-RIS links are Rician with LOS components
taken from half-wavelength ULA steering vectors (array broadside along the
x-axis); every scatterer-touching link is zero-mean CSCG.

Array layout of a :class:`ChannelSet` (``L`` scatterers, ``K`` users):

==========  ===============  =====================================
attribute   shape            meaning
==========  ===============  =====================================
d_bs_ris    (Nt, M)          BS transmit array to RIS
d_ris_rx    (M, Nr)          RIS to BS receive array
h_bu        (K, Nt)          BS to user k
h_ru        (K, M)           RIS to user k
h_rtr       (L, M, M)        RIS-scatterer-RIS
h_btb       (L, Nr, Nt)      BS-scatterer-BS
h_btr       (L, Nt, M)       BS-scatterer-RIS (RIS-scatterer-BS is its transpose)
h_btu       (L, K, Nt)       BS-scatterer-user
h_rtu       (L, K, M)        RIS-scatterer-user
==========  ===============  =====================================
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .config import ScenarioConfig
from .errors import DomainError, GeometryError

_CHANNEL_FIELDS = ("d_bs_ris", "d_ris_rx", "h_bu", "h_ru", "h_rtr", "h_btb", "h_btr", "h_btu", "h_rtu")

# independent random streams, so draws for one family never shift another
_STREAM_POSITIONS = 1
_STREAM_BU = 2
_STREAM_RU = 3
_STREAM_BR = 4
_STREAM_RB = 5
_STREAM_RTR = 6
_STREAM_BTB = 7
_STREAM_BTR = 8
_STREAM_BTU = 9
_STREAM_RTU = 10


def path_loss_one_hop(wavelength_m: float, dist_m: float) -> float:
    """Free-space amplitude gain lambda / (4 pi d)."""
    if wavelength_m <= 0 or dist_m <= 0:
        raise DomainError("wavelength and distance must be positive")
    return float(np.sqrt(wavelength_m**2 / (16 * np.pi**2 * dist_m**2)))


def path_loss_backscatter(wavelength_m: float, rcs_m2: float, d1_m: float, d2_m: float) -> float:
    """Bistatic radar amplitude gain sqrt(lambda^2 kappa / (64 pi^3 d1^2 d2^2))."""
    if min(wavelength_m, rcs_m2, d1_m, d2_m) <= 0:
        raise DomainError("all backscatter arguments must be positive")
    return float(np.sqrt(wavelength_m**2 * rcs_m2 / (64 * np.pi**3 * d1_m**2 * d2_m**2)))


@dataclass(frozen=True)
class PhaseAlphabet:
    """The ``d`` unit-modulus RIS levels exp(j(2 pi i/d + pi/d))."""

    levels: np.ndarray

    @classmethod
    def from_count(cls, d: int) -> "PhaseAlphabet":
        if d < 1:
            raise DomainError("alphabet needs at least one level")
        i = np.arange(d)
        return cls(np.exp(1j * (2 * np.pi * i / d + np.pi / d)))

    @classmethod
    def from_bits(cls, bits: int) -> "PhaseAlphabet":
        return cls.from_count(2**bits)

    def __len__(self):
        return len(self.levels)

    def contains(self, theta, atol=1e-12) -> np.ndarray:
        theta = np.atleast_1d(theta)
        return np.min(np.abs(theta[:, None] - self.levels[None, :]), axis=1) <= atol

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Uniform phases quantized to the nearest level.

        Every alphabet consumes the same draws, so equal seeds give
        starting points that agree up to quantization across bit depths.
        """
        return self.nearest(np.exp(1j * rng.uniform(0, 2 * np.pi, size=size)))

    def nearest(self, theta) -> np.ndarray:
        """Closest level to each entry in chordal distance.

        Ties (within 1e-12) go to the level with the smaller argument.
        """
        theta = np.asarray(theta, complex)
        dist = np.abs(theta[..., None] - self.levels)
        tie = dist <= dist.min(axis=-1, keepdims=True) + 1e-12
        return self.levels[np.argmax(tie, axis=-1)]


def steering_vector(n: int, angle: float) -> np.ndarray:
    """Half-wavelength ULA response; angle is measured from broadside (x-axis)."""
    return np.exp(1j * np.pi * np.arange(n) * np.sin(angle))


def _cscg(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


# RIS-indexed draws are taken from a surface of at least this many elements
# and truncated, so an M-element RIS is the prefix of every larger one.
_RIS_DRAW_SIZE = 256


def _cscg_nested(rng, shape, ris_axes, m):
    cap = max(m, _RIS_DRAW_SIZE)
    full = tuple(cap if i in ris_axes else n for i, n in enumerate(shape))
    draw = _cscg(rng, full)
    return draw[tuple(slice(0, m) if i in ris_axes else slice(None) for i in range(len(shape)))]


def _rician_nested(rng, los, gamma, ris_axes, m):
    if np.isinf(gamma):
        return los.astype(complex)
    nlos = _cscg_nested(rng, los.shape, ris_axes, m)
    return np.sqrt(gamma / (1 + gamma)) * los + np.sqrt(1 / (1 + gamma)) * nlos


def _rician(rng, los, gamma):
    if np.isinf(gamma):
        return los.astype(complex)
    nlos = _cscg(rng, los.shape)
    return np.sqrt(gamma / (1 + gamma)) * los + np.sqrt(1 / (1 + gamma)) * nlos


def _angle(src, dst):
    d = np.asarray(dst, float) - np.asarray(src, float)
    return float(np.arctan2(d[1], d[0]))


def _uniform_disc(rng, center, radius, n):
    r = radius * np.sqrt(rng.uniform(size=n))
    phi = rng.uniform(0, 2 * np.pi, size=n)
    return np.asarray(center, float) + np.stack([r * np.cos(phi), r * np.sin(phi)], axis=1)


@dataclass(frozen=True)
class ChannelSet:
    d_bs_ris: np.ndarray
    d_ris_rx: np.ndarray
    h_bu: np.ndarray
    h_ru: np.ndarray
    h_rtr: np.ndarray
    h_btb: np.ndarray
    h_btr: np.ndarray
    h_btu: np.ndarray
    h_rtu: np.ndarray
    large_scale: dict = field(default_factory=dict)
    user_pos: np.ndarray | None = None
    scatterer_pos: np.ndarray | None = None

    @property
    def n_tx(self):
        return self.d_bs_ris.shape[0]

    @property
    def n_ris(self):
        return self.d_bs_ris.shape[1]

    @property
    def n_rx(self):
        return self.d_ris_rx.shape[1]

    @property
    def n_users(self):
        return self.h_bu.shape[0]

    @property
    def n_scatterers(self):
        return self.h_rtr.shape[0]

    @property
    def h_rtb(self) -> np.ndarray:
        """RIS-scatterer-BS matrices, the transposes of ``h_btr``."""
        return np.transpose(self.h_btr, (0, 2, 1))

    def replace(self, **changes) -> "ChannelSet":
        return dataclasses.replace(self, **changes)

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in _CHANNEL_FIELDS}

    def scaled(self, factor: float, names=("h_rtr", "h_btb", "h_btr")) -> "ChannelSet":
        return self.replace(**{n: getattr(self, n) * factor for n in names})

    def identical_to(self, other: "ChannelSet") -> bool:
        return all(
            a.shape == b.shape and a.tobytes() == b.tobytes()
            for a, b in zip(self.arrays().values(), other.arrays().values())
        )


def _draw_positions(cfg, rng, max_retries=100):
    anchors = [np.asarray(cfg.bs_pos, float), np.asarray(cfg.ris_pos, float)]
    if np.linalg.norm(anchors[0] - anchors[1]) <= 0:
        raise GeometryError("BS and RIS coincide")
    for _ in range(max_retries):
        users = _uniform_disc(rng, cfg.user_center, cfg.user_radius, cfg.n_users)
        scat = _uniform_disc(rng, cfg.scatterer_center, cfg.scatterer_radius, cfg.n_scatterers)
        d = [np.linalg.norm(p - a, axis=1) for p in (users, scat) for a in anchors]
        d.append(np.linalg.norm(scat[:, None, :] - users[None, :, :], axis=2).ravel())
        if min(np.min(x) for x in d) > 0:
            return users, scat
    raise GeometryError("could not draw positions with all distances positive")


def synthesize_channels(cfg: ScenarioConfig, seed=None, geometry_salt: int = 0) -> ChannelSet:
    """Draw one channel realization for ``cfg``.

    ``seed`` defaults to ``cfg.rng_seed``. Each channel family uses its own
    stream derived from the seed, so e.g. the BS-scatterer-BS draws for a
    seed do not depend on the RIS size. ``geometry_salt`` re-draws the user
    and scatterer positions without touching the small-scale streams.
    """
    seed = cfg.rng_seed if seed is None else int(seed)

    def stream(sid, *extra):
        return np.random.default_rng([seed, sid, *extra])

    lam, kappa = cfg.wavelength_m, cfg.rcs_m2
    nt, nr, m, k, l = cfg.n_tx, cfg.n_rx, cfg.n_ris, cfg.n_users, cfg.n_scatterers
    bs, ris = np.asarray(cfg.bs_pos, float), np.asarray(cfg.ris_pos, float)
    users, scat = _draw_positions(cfg, stream(_STREAM_POSITIONS, geometry_salt))

    d_br = float(np.linalg.norm(ris - bs))
    d_bu = np.linalg.norm(users - bs, axis=1)
    d_ru = np.linalg.norm(users - ris, axis=1)
    d_bt = np.linalg.norm(scat - bs, axis=1)
    d_rt = np.linalg.norm(scat - ris, axis=1)
    d_tu = np.linalg.norm(scat[:, None, :] - users[None, :, :], axis=2)

    beta_br = path_loss_one_hop(lam, d_br)
    beta_bu = np.array([path_loss_one_hop(lam, d) for d in d_bu])
    beta_ru = np.array([path_loss_one_hop(lam, d) for d in d_ru])
    alpha_rtr = np.array([path_loss_backscatter(lam, kappa, d, d) for d in d_rt])
    alpha_btb = np.array([path_loss_backscatter(lam, kappa, d, d) for d in d_bt])
    alpha_btr = np.array([path_loss_backscatter(lam, kappa, a, b) for a, b in zip(d_bt, d_rt)])
    alpha_btu = np.array([[path_loss_backscatter(lam, kappa, d_bt[i], d_tu[i, j]) for j in range(k)] for i in range(l)])
    alpha_rtu = np.array([[path_loss_backscatter(lam, kappa, d_rt[i], d_tu[i, j]) for j in range(k)] for i in range(l)])

    phi_br = _angle(bs, ris)  # departure at the BS towards the RIS
    phi_rb = _angle(ris, bs)  # departure at the RIS towards the BS
    a_bs_tx = steering_vector(nt, phi_br)
    a_bs_rx = steering_vector(nr, phi_br)
    a_ris = steering_vector(m, phi_rb)

    d_los = np.outer(a_bs_tx, a_ris.conj())
    d_bs_ris = beta_br * _rician_nested(stream(_STREAM_BR), d_los, cfg.rician_factor_br, (1,), m)
    dp_los = np.outer(a_ris, a_bs_rx.conj())
    d_ris_rx = beta_br * _rician_nested(stream(_STREAM_RB), dp_los, cfg.rician_factor_br, (0,), m)

    rng_bu, rng_ru = stream(_STREAM_BU), stream(_STREAM_RU)
    h_bu = np.stack([
        beta_bu[j] * _rician(rng_bu, steering_vector(nt, _angle(bs, users[j])), cfg.rician_factor_bu)
        for j in range(k)
    ])
    h_ru = np.stack([
        beta_ru[j] * _rician_nested(rng_ru, steering_vector(m, _angle(ris, users[j])), cfg.rician_factor_ru, (0,), m)
        for j in range(k)
    ])

    h_rtr = alpha_rtr[:, None, None] * _cscg_nested(stream(_STREAM_RTR), (l, m, m), (1, 2), m)
    h_btb = alpha_btb[:, None, None] * _cscg(stream(_STREAM_BTB), (l, nr, nt))
    h_btr = alpha_btr[:, None, None] * _cscg_nested(stream(_STREAM_BTR), (l, nt, m), (2,), m)
    h_btu = alpha_btu[:, :, None] * _cscg(stream(_STREAM_BTU), (l, k, nt))
    h_rtu = alpha_rtu[:, :, None] * _cscg_nested(stream(_STREAM_RTU), (l, k, m), (2,), m)

    large_scale = dict(
        beta_br=beta_br, beta_rb=beta_br, beta_bu=beta_bu, beta_ru=beta_ru,
        alpha_rtr=alpha_rtr, alpha_btb=alpha_btb, alpha_btr=alpha_btr,
        alpha_btu=alpha_btu, alpha_rtu=alpha_rtu,
        d_br=d_br, d_bu=d_bu, d_ru=d_ru, d_bt=d_bt, d_rt=d_rt, d_tu=d_tu,
    )
    return ChannelSet(
        d_bs_ris=d_bs_ris, d_ris_rx=d_ris_rx, h_bu=h_bu, h_ru=h_ru, h_rtr=h_rtr,
        h_btb=h_btb, h_btr=h_btr, h_btu=h_btu, h_rtu=h_rtu,
        large_scale=large_scale, user_pos=users, scatterer_pos=scat,
    )


# number of leading axes that index separate channel objects
_OBJECT_AXES = {"d_bs_ris": 0, "d_ris_rx": 0, "h_bu": 1, "h_ru": 1, "h_rtr": 1,
                "h_btb": 1, "h_btr": 1, "h_btu": 2, "h_rtu": 2}


def perturb_csi(ch: ChannelSet, error_ratio: float, rng: np.random.Generator) -> ChannelSet:
    """Imperfect-CSI copy: every channel object X becomes X + e*||X|| * U.

    U is an independent CSCG direction normalized to unit norm, so
    ``||X_hat - X|| / ||X|| == e`` exactly for each vector or matrix.
    """
    if error_ratio < 0:
        raise DomainError("error_ratio must be non-negative")
    if error_ratio == 0:
        return ch.replace(**{n: a.copy() for n, a in ch.arrays().items()})
    out = {}
    for name, arr in ch.arrays().items():
        lead = _OBJECT_AXES[name]
        axes = tuple(range(lead, arr.ndim))
        u = _cscg(rng, arr.shape)
        u /= np.sqrt(np.sum(np.abs(u) ** 2, axis=axes, keepdims=True))
        norm = np.sqrt(np.sum(np.abs(arr) ** 2, axis=axes, keepdims=True))
        out[name] = arr + error_ratio * norm * u
    return ch.replace(**out)
