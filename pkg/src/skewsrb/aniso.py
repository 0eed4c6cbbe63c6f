"""Littlewood-Paley cone-sector blocks and anisotropic Sobolev norms on the torus.

Everything is computed from the global Fourier coefficients of a grid field.
A polarisation splits frequency directions into a ``+`` sector (weighted by
``2^{pn}``) and a ``-`` sector (weighted by ``2^{qn}``), with a smooth angular
blend across the gaps between the two cones.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cones import ConeSpec, angular_distance, cones_disjoint, m_upper_bound
from .errors import InvalidParams
from .transfer import DiscreteTransfer, GridField, TransferConfig, int_freqs, random_field


def smoothstep(t):
    """Quintic ramp ``6t^5 - 15t^4 + 10t^3`` clipped to [0, 1]."""
    t = np.clip(t, 0.0, 1.0)
    return t * t * t * (t * (6.0 * t - 15.0) + 10.0)


def chi(s):
    """Radial cut-off: 1 on [0, 1], 0 on [2, inf), quintic ramp in between."""
    return 1.0 - smoothstep(np.asarray(s, dtype=float) - 1.0)


@dataclass(frozen=True)
class Polarisation:
    cone_plus: ConeSpec
    cone_minus: ConeSpec

    def __post_init__(self):
        if not cones_disjoint(self.cone_plus, self.cone_minus, margin=0.0):
            raise InvalidParams("polarisation cones must have disjoint closures")

    @classmethod
    def from_degrees(cls, plus_center: float, plus_half: float,
                     minus_center: float, minus_half: float) -> "Polarisation":
        r = np.radians
        return cls(ConeSpec(r(plus_center), r(plus_half)), ConeSpec(r(minus_center), r(minus_half)))

    @classmethod
    def default(cls, gap_degrees: float = 10.0) -> "Polarisation":
        """``C+`` around horizontal frequencies, ``C-`` around vertical ones."""
        if not (0.0 < gap_degrees < 90.0):
            raise InvalidParams("gap_degrees must lie in (0, 90)")
        h = (90.0 - gap_degrees) / 2.0
        return cls.from_degrees(0.0, h, 90.0, h)

    def blend_plus(self, angle):
        """Smooth weight of the ``+`` sector at projective frequency angle(s)."""
        a = np.asarray(angle, dtype=float)
        dp = np.maximum(angular_distance(a, self.cone_plus.center_angle) - self.cone_plus.half_width, 0.0)
        dm = np.maximum(angular_distance(a, self.cone_minus.center_angle) - self.cone_minus.half_width, 0.0)
        with np.errstate(invalid="ignore", divide="ignore"):
            ratio = np.where(dp + dm > 0, dp / (dp + dm), 0.0)
        out = 1.0 - smoothstep(ratio)
        out = np.where(dp == 0.0, 1.0, out)
        return np.where(dm == 0.0, 0.0, out)

    def blend_minus(self, angle):
        return 1.0 - self.blend_plus(angle)

    def precedes(self, other: "Polarisation") -> bool:
        """``self < other``: the closed complement of ``other``'s ``C+`` lies inside ``self``'s ``C-``.

        The complement of a cone of half-width ``h`` about ``c`` is the cone of
        half-width ``pi/2 - h`` about ``c + pi/2``.
        """
        comp_center = other.cone_plus.center_angle + np.pi / 2
        comp_half = np.pi / 2 - other.cone_plus.half_width
        d = angular_distance(comp_center, self.cone_minus.center_angle)
        return bool(d + comp_half < self.cone_minus.half_width)


def polarisation_chain(count: int, plus_start_degrees: float, spacing_degrees: float,
                       plus_center: float = 0.0) -> list[Polarisation]:
    """Polarisations ``Theta_0 < Theta_1 < ...`` with equally spaced cone widths.

    ``C+`` half-widths grow by ``spacing`` per step; ``C-`` half-widths are
    ``90 - h+ - spacing/2`` so each polarisation keeps a gap of ``spacing/2``
    on each side and consecutive members overlap by the same amount.
    """
    if count < 1 or spacing_degrees <= 0:
        raise InvalidParams("need count >= 1 and positive spacing")
    out = []
    for i in range(count):
        hp = plus_start_degrees + i * spacing_degrees
        hm = 90.0 - hp - spacing_degrees / 2.0
        if hp <= 0 or hm <= 0:
            raise InvalidParams("chain does not fit in the projective circle; reduce count or spacing")
        out.append(Polarisation.from_degrees(plus_center, hp, plus_center + 90.0, hm))
    return out


def _lattice(nx: int, ny: int):
    kx = int_freqs(nx)[:, None]
    ky = int_freqs(ny)[None, :]
    r = np.hypot(kx, ky)
    ang = np.mod(np.arctan2(np.broadcast_to(ky, r.shape), np.broadcast_to(kx, r.shape)), np.pi)
    return r, ang


def block_count(nx: int, ny: int) -> int:
    """Number of dyadic levels ``n = 0..N`` with ``2^N <= 2 * Nyquist radius``."""
    rmax = np.hypot(nx / 2, ny / 2)
    n = 0
    while 2.0 ** (n + 1) <= 2.0 * rmax:
        n += 1
    return n + 1


def lp_weights(theta: Polarisation, nx: int, ny: int) -> dict:
    """``psi_{n, sigma}`` sampled on the frequency lattice (FFT order)."""
    r, ang = _lattice(nx, ny)
    bp = theta.blend_plus(ang)
    out = {}
    for n in range(block_count(nx, ny)):
        if n == 0:
            w = chi(r) / 2.0
            out[(0, "+")] = w
            out[(0, "-")] = w
        else:
            ring = chi(2.0**-n * r) - chi(2.0 ** (-n + 1) * r)
            out[(n, "+")] = bp * ring
            out[(n, "-")] = (1.0 - bp) * ring
    return out


@dataclass(frozen=True)
class LPBlock:
    n: int
    sigma: str
    field: GridField


def lp_decompose(u: GridField, theta: Polarisation) -> list[LPBlock]:
    """Blocks ``u_{n, sigma} = psi_{n, sigma}(D) u``; they sum to ``u``."""
    c = u.coeffs
    blocks = []
    for (n, s), w in lp_weights(theta, u.nx, u.ny).items():
        b = GridField.from_coeffs(c * w)
        blocks.append(LPBlock(n, s, GridField(b.values.real) if u.is_real else b))
    return blocks


def _block_energies(c: np.ndarray, weights: dict) -> dict:
    p2 = np.abs(c) ** 2
    return {key: float(np.sum(w * w * p2)) for key, w in weights.items()}


def aniso_norm(u: GridField, theta: Polarisation, p: float, q: float, weights: dict | None = None) -> float:
    """``(sum_n 2^{2pn} |u_{n,+}|^2 + sum_n 2^{2qn} |u_{n,-}|^2)^{1/2}`` via Parseval."""
    if p < q:
        raise InvalidParams("anisotropic norm needs p >= q")
    weights = weights if weights is not None else lp_weights(theta, u.nx, u.ny)
    total = 0.0
    for (n, s), e in _block_energies(u.coeffs, weights).items():
        total += 2.0 ** (2 * (p if s == "+" else q) * n) * e
    return float(np.sqrt(total))


def sobolev_norm(u: GridField, p: float) -> float:
    """``(sum (|zeta|^2 + 1)^p |F u(zeta)|^2)^{1/2}``."""
    kx = int_freqs(u.nx)[:, None]
    ky = int_freqs(u.ny)[None, :]
    return float(np.sqrt(np.sum((kx**2 + ky**2 + 1.0) ** p * np.abs(u.coeffs) ** 2)))


def fit_rate(values, start: int | None = None) -> float:
    """Geometric rate ``exp(slope)`` of ``log values`` over the tail ``values[start:]``."""
    v = np.asarray(values, dtype=float)
    start = len(v) // 2 if start is None else start
    n = np.arange(len(v))[start:]
    tail = v[start:]
    if np.any(tail <= 0):
        tail = np.maximum(tail, np.finfo(float).tiny)
    slope = np.polyfit(n, np.log(tail), 1)[0]
    return float(np.exp(slope))


@dataclass
class LYDecayTable:
    n: np.ndarray
    strong: np.ndarray  # mean over trials of |P^n u|_{Theta,p,q} / |u|_{Theta,p,q}
    weak: np.ndarray  # same for |.|_{Theta',p-1,q-1}
    fitted_rate: float
    m0: float  # transversality bound min_n m(f,n)^{1/n}, reported alongside
    p: int
    q: int

    def rows(self):
        for i in range(len(self.n)):
            yield int(self.n[i]), float(self.strong[i]), float(self.weak[i]), self.fitted_rate


def ly_decay_experiment(f, t: float, theta: Polarisation, theta_prime: Polarisation, p: int, q: int,
                        n_max: int = 30, trials: int = 4, seed: int = 0,
                        cfg: TransferConfig | None = None, fields=None,
                        m_nmax: int = 6, m_grid: int = 32, cone_theta: float = 2.0) -> LYDecayTable:
    """Track strong and weak norms of ``P^n u`` and fit the strong-norm decay rate.

    ``u`` are random mean-zero band-limited fields unless ``fields`` is given.
    The rate is ``exp`` of the log-linear slope over the second half of the
    run, where the transient has died out.
    """
    if not theta_prime.precedes(theta):
        raise InvalidParams("the weak polarisation must precede the strong one")
    if q < 1 or p < q + 3:
        raise InvalidParams("need q >= 1 and p >= q + 3")
    if n_max < 2:
        raise InvalidParams("n_max must be >= 2")
    cfg = cfg or TransferConfig(128, 32)
    op = DiscreteTransfer(f, t, cfg)
    if fields is None:
        rng = np.random.default_rng(seed)
        kx, ky = int(cfg.dealias_fraction * cfg.nx / 2), int(cfg.dealias_fraction * cfg.ny / 2)
        fields = [random_field(cfg.nx, cfg.ny, kx, ky, rng, mean_zero=True, decay=0.1) for _ in range(trials)]
    ws = lp_weights(theta, cfg.nx, cfg.ny)
    wp = lp_weights(theta_prime, cfg.nx, cfg.ny)
    strong = np.zeros(n_max + 1)
    weak = np.zeros(n_max + 1)
    for u in fields:
        v = cfg.project(u.values)
        s0 = aniso_norm(GridField(v), theta, p, q, ws)
        w0 = aniso_norm(GridField(v), theta_prime, p - 1, q - 1, wp)
        for n in range(n_max + 1):
            g = GridField(v)
            strong[n] += aniso_norm(g, theta, p, q, ws) / s0
            weak[n] += aniso_norm(g, theta_prime, p - 1, q - 1, wp) / w0
            v = op(v)
    strong /= len(fields)
    weak /= len(fields)
    m0 = m_upper_bound(f, t, m_nmax, cone_theta, m_grid)
    return LYDecayTable(np.arange(n_max + 1), strong, weak, fit_rate(strong), float(m0), p, q)


def hookup_classify(m: int, tau: str, n: int, sigma: str, mu: int, nu: int) -> bool:
    """Whether block ``(m, tau)`` hooks up to ``(n, sigma)`` in the Lasota-Yorke bookkeeping."""
    if nu > mu - 6:
        raise InvalidParams("need nu <= mu - 6")
    for s in (tau, sigma):
        if s not in ("+", "-"):
            raise InvalidParams("signs must be '+' or '-'")
    if (tau, sigma) == ("+", "+"):
        return m - mu <= n <= max(0, m + nu + 6)
    if (tau, sigma) in (("-", "-"), ("+", "-")):
        return m - mu <= n <= m + mu
    return False
