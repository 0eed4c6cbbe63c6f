"""Perron-Frobenius operator on a periodic grid, SRB densities and spectra.

Fields are sampled on an ``nx x ny`` grid at ``(i/nx, j/ny)`` and treated as
trigonometric polynomials.  The transfer operator

    (P u)(z) = sum_{w in f^{-1} z} u(w) / det Df(w)

is evaluated pointwise with exact spectral interpolation at the preimages.
When every perturbation step is vertical the preimages of a grid row share
their x-coordinates, which lie on the refined grid ``(i + j nx)/(ell nx)``; the
x-interpolation is then a zero-padded FFT and only the y-evaluation is done
point by point.  Other maps fall back to dense evaluation.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse.linalg as spla

from .errors import GridMismatch, InvalidParams, NoConvergence
from .skew_map import TWO_PI, FrozenMap, canonical, frozen


def int_freqs(n: int) -> np.ndarray:
    """Integer frequencies in FFT order, in [-n/2, n/2)."""
    return np.fft.fftfreq(n, 1.0 / n)


def _is_pow2(n: int) -> bool:
    return n >= 2 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class GridField:
    """Samples of a function on the ``nx x ny`` torus grid."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 2:
            raise InvalidParams("grid values must be a 2-D array")
        if not np.iscomplexobj(v):
            v = v.astype(float)
        object.__setattr__(self, "values", v)

    @property
    def nx(self) -> int:
        return self.values.shape[0]

    @property
    def ny(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self):
        return self.values.shape

    @cached_property
    def coeffs(self) -> np.ndarray:
        """Fourier coefficients ``F(u)(zeta)`` in FFT order (mean-normalised)."""
        return np.fft.fft2(self.values) / self.values.size

    @classmethod
    def from_coeffs(cls, c: np.ndarray, real: bool = False) -> "GridField":
        v = np.fft.ifft2(c) * c.size
        return cls(v.real if real else v)

    @classmethod
    def from_function(cls, func, nx: int, ny: int) -> "GridField":
        X, Y = grid_points(nx, ny)
        return cls(np.broadcast_to(func(X, Y), (nx, ny)).copy())

    @classmethod
    def constant(cls, c: float, nx: int, ny: int) -> "GridField":
        return cls(np.full((nx, ny), float(c)))

    def mean(self):
        m = np.mean(self.values)
        return float(m) if not np.iscomplexobj(self.values) else complex(m)

    @property
    def is_real(self) -> bool:
        return not np.iscomplexobj(self.values)

    def __add__(self, other):
        return GridField(self.values + _vals(other))

    def __sub__(self, other):
        return GridField(self.values - _vals(other))

    def __mul__(self, other):
        return GridField(self.values * _vals(other))

    __rmul__ = __mul__

    def __neg__(self):
        return GridField(-self.values)


def _vals(other):
    return other.values if isinstance(other, GridField) else other


def grid_points(nx: int, ny: int):
    return np.meshgrid(np.arange(nx) / nx, np.arange(ny) / ny, indexing="ij")


def random_field(nx: int, ny: int, kx_max: int, ky_max: int, rng, mean_zero: bool = False,
                 real: bool = True, decay: float = 0.0) -> GridField:
    """Random trigonometric polynomial with ``|kx| <= kx_max`` and ``|ky| <= ky_max``."""
    kx = int_freqs(nx)[:, None]
    ky = int_freqs(ny)[None, :]
    mask = (np.abs(kx) <= kx_max) & (np.abs(ky) <= ky_max)
    c = (rng.standard_normal((nx, ny)) + 1j * rng.standard_normal((nx, ny))) * mask
    if decay:
        c = c * np.exp(-decay * np.hypot(kx, ky))
    if mean_zero:
        c[0, 0] = 0.0
    f = GridField.from_coeffs(c)
    return GridField(f.values.real) if real else f


@dataclass(frozen=True)
class TransferConfig:
    nx: int = 256
    ny: int = 64
    dealias_fraction: float = 2.0 / 3.0
    interpolation: str = "spectral"

    def __post_init__(self):
        if not (_is_pow2(self.nx) and _is_pow2(self.ny)):
            raise InvalidParams("nx and ny must be powers of two")
        if not (0.0 < self.dealias_fraction <= 1.0):
            raise InvalidParams("dealias_fraction must lie in (0, 1]")
        if self.dealias_fraction * min(self.nx, self.ny) < 4:
            raise InvalidParams("dealias_fraction * grid size must be at least 4")
        if self.interpolation != "spectral":
            raise InvalidParams("only spectral interpolation is implemented")

    @cached_property
    def band(self) -> np.ndarray:
        """Boolean mask of retained frequencies (FFT order)."""
        kx = np.abs(int_freqs(self.nx))[:, None]
        ky = np.abs(int_freqs(self.ny))[None, :]
        return (kx <= self.dealias_fraction * self.nx / 2) & (ky <= self.dealias_fraction * self.ny / 2)

    def project(self, values: np.ndarray) -> np.ndarray:
        """Truncate to the dealiased band (identity when the fraction is 1)."""
        if self.dealias_fraction >= 1.0:
            return values
        c = np.fft.fft2(values) * self.band
        out = np.fft.ifft2(c)
        return out.real if not np.iscomplexobj(values) else out


def _pad_x(c: np.ndarray, factor: int) -> np.ndarray:
    """Zero-pad FFT-ordered coefficients along axis 0 to ``factor * nx``."""
    nx = c.shape[0]
    h = nx // 2
    out = np.zeros((factor * nx,) + c.shape[1:], dtype=complex)
    out[:h] = c[:h]
    out[-h:] = c[h:]
    return out


def _eval_points(c: np.ndarray, x: np.ndarray, y: np.ndarray, chunk: int = 4096) -> np.ndarray:
    """Evaluate the trigonometric polynomial with coefficients ``c`` at arbitrary points."""
    nx, ny = c.shape
    kx = int_freqs(nx)
    ky = int_freqs(ny)
    xf, yf = x.ravel(), y.ravel()
    out = np.empty(xf.shape, dtype=complex)
    for s in range(0, len(xf), chunk):
        ex = np.exp(TWO_PI * 1j * np.outer(xf[s:s + chunk], kx))
        ey = np.exp(TWO_PI * 1j * np.outer(yf[s:s + chunk], ky))
        out[s:s + chunk] = np.einsum("pk,pk->p", ex @ c, ey)
    return out.reshape(x.shape)


class TransferOperator:
    """Matrix-free ``P_f`` for a frozen map on a fixed grid.

    Geometry (preimages, weights, interpolation kernels) is precomputed once so
    repeated applications cost a few FFTs.
    """

    def __init__(self, fm: FrozenMap, nx: int, ny: int):
        self.fm = fm
        self.nx, self.ny = nx, ny
        ell = fm.ell
        X, Y = grid_points(nx, ny)
        px, py, M = fm.pullback_steps(X, Y)
        detchi = M[..., 0, 0] * M[..., 1, 1] - M[..., 0, 1] * M[..., 1, 0]
        self.weight = 1.0 / (ell * detchi)
        ky = int_freqs(ny)
        if fm.is_vertical:
            self.mode = "shift" if fm.is_rot else "rows"
            xf = (np.arange(nx)[None, :] + nx * np.arange(ell)[:, None]) / (ell * nx)  # (ell, nx)
            phix = fm.phi(xf)
            if self.mode == "shift":
                self.phase = np.exp(-TWO_PI * 1j * phix[..., None] * ky)  # (ell, nx, ny)
            else:
                ystar = canonical(py[None, :, :] - phix[..., None])  # (ell, nx, ny)
                self.kernel = np.exp(TWO_PI * 1j * ystar[..., None] * ky)  # (ell, nx, ny, ky)
        else:
            self.mode = "points"
            j = np.arange(ell)[:, None, None]
            self.wx = (px[None] + j) / ell
            self.wy = canonical(py[None] - fm.phi(self.wx))

    def __call__(self, values: np.ndarray) -> np.ndarray:
        real = not np.iscomplexobj(values)
        ell, nx, ny = self.fm.ell, self.nx, self.ny
        c = np.fft.fft2(values) / values.size
        if self.mode == "points":
            vals = _eval_points(c, self.wx, self.wy)
        else:
            U = (np.fft.ifft(_pad_x(c, ell), axis=0) * (ell * nx)).reshape(ell, nx, ny)
            if self.mode == "shift":
                vals = np.fft.ifft(U * self.phase, axis=-1) * ny
            else:
                vals = np.einsum("jik,jiqk->jiq", U, self.kernel)
        out = self.weight * vals.sum(axis=0)
        return out.real if real else out


class ForwardComposer:
    """``v -> v o f`` sampled on the grid (spectral interpolation of ``v``)."""

    def __init__(self, fm: FrozenMap, nx: int, ny: int):
        self.fm = fm
        X, Y = grid_points(nx, ny)
        fx, fy = fm.forward(X, Y)
        self.fx, self.fy = fx, fy
        if fm.is_vertical:
            ix = np.rint(fx[:, 0] * nx).astype(int) % nx
            if not np.allclose(ix / nx, fx[:, 0], atol=1e-14, rtol=0):
                raise AssertionError("forward image of a grid row left the grid")
            self.rows = ix
            self.kernel = np.exp(TWO_PI * 1j * fy[..., None] * int_freqs(ny))  # (nx, ny, ky)

    def __call__(self, values: np.ndarray) -> np.ndarray:
        real = not np.iscomplexobj(values)
        c = np.fft.fft2(values) / values.size
        if self.fm.is_vertical:
            U = np.fft.ifft(c, axis=0) * c.shape[0]
            out = np.einsum("ik,iqk->iq", U[self.rows], self.kernel)
        else:
            out = _eval_points(c, self.fx, self.fy)
        return out.real if real else out


class DiscreteTransfer:
    """The operator used by the iterative solvers: band truncation after ``P``.

    A rank-one correction restores exact conservation of the grid mean, which
    the truncated collocation otherwise breaks at the level of the y-aliasing
    error of perturbed maps.  For unperturbed maps the correction is zero up
    to rounding.
    """

    def __init__(self, f, t: float, cfg: "TransferConfig"):
        self.cfg = cfg
        self.op = TransferOperator(frozen(f, t), cfg.nx, cfg.ny)

    def __call__(self, values: np.ndarray) -> np.ndarray:
        raw = self.op(values)
        return self.cfg.project(raw) + (np.mean(values) - np.mean(raw))


def _cfg_for(u: GridField, cfg: TransferConfig | None) -> TransferConfig:
    if cfg is None:
        return TransferConfig(u.nx, u.ny)
    if (cfg.nx, cfg.ny) != (u.nx, u.ny):
        raise GridMismatch(f"field is {u.nx}x{u.ny} but config is {cfg.nx}x{cfg.ny}")
    return cfg


def apply_P(f, t: float, u: GridField, cfg: TransferConfig | None = None) -> GridField:
    """``P_{f_t} u`` sampled on the grid (no band truncation of the output)."""
    cfg = _cfg_for(u, cfg)
    op = TransferOperator(frozen(f, t), cfg.nx, cfg.ny)
    return GridField(op(u.values))


def apply_P_n(f, t: float, u: GridField, n: int) -> GridField:
    """``P^n u`` from the ``ell^n`` branches of ``f^{-n}`` (no intermediate resampling)."""
    fm = frozen(f, t)
    X, Y = grid_points(u.nx, u.ny)
    wx, wy, J = fm.branch_tree(X, Y, n)
    det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    vals = _eval_points(u.coeffs, wx, wy)
    out = np.sum(vals / det, axis=0)
    return GridField(out.real if u.is_real else out)


def inner(u: GridField, v: GridField) -> complex:
    """``(u, v)_{L^2} = integral of u * conj(v)`` by grid quadrature."""
    if u.shape != v.shape:
        raise GridMismatch("fields live on different grids")
    return complex(np.mean(u.values * np.conj(v.values)))


def compose(v: GridField, f, t: float = 0.0) -> GridField:
    """``v o f_t`` on the grid."""
    comp = ForwardComposer(frozen(f, t), v.nx, v.ny)
    return GridField(comp(v.values))


def duality_residual(f, t: float, u: GridField, v: GridField, cfg: TransferConfig | None = None) -> float:
    """``|(P u, v) - (u, v o f_t)|``."""
    cfg = _cfg_for(u, cfg)
    lhs = inner(apply_P(f, t, u, cfg), v)
    rhs = inner(u, compose(v, f, t))
    return float(abs(lhs - rhs))


@dataclass
class DensityInfo:
    iterations: int
    residual: float
    mass: float
    min: float
    max: float


def srb_density(f, t: float = 0.0, cfg: TransferConfig | None = None, tol: float = 1e-12,
                max_iter: int = 2000, return_info: bool = False):
    """Fixed point of the (band-truncated) transfer operator by power iteration.

    Starts from the constant 1 and renormalises to unit mass each step.  Finds
    a fixed point; uniqueness is not checked.
    """
    cfg = cfg or TransferConfig()
    op = DiscreteTransfer(f, t, cfg)
    rho = np.ones((cfg.nx, cfg.ny))
    for it in range(max_iter + 1):
        nxt = op(rho)
        res = float(np.max(np.abs(nxt - rho)))
        if res <= tol:
            break
        rho = nxt / np.mean(nxt)
    else:
        raise NoConvergence(f"power iteration did not reach tol={tol:g} in {max_iter} steps "
                            f"(residual {res:.3e}); is there a spectral gap?")
    rho = rho / np.mean(rho)
    field_ = GridField(rho)
    if return_info:
        return field_, DensityInfo(it, res, float(np.mean(rho)), float(rho.min()), float(rho.max()))
    return field_


def observable_mean(rho: GridField, obs: GridField) -> float:
    """``integral rho * obs`` by grid quadrature."""
    if rho.shape != obs.shape:
        raise GridMismatch(f"density grid {rho.shape} differs from observable grid {obs.shape}")
    return float(np.real(np.mean(rho.values * obs.values)))


def fiber_block(f, m: int, nx: int) -> np.ndarray:
    """Matrix of ``L_m u(x) = ell^{-1} sum_j e^{-2 pi i m phi((x+j)/ell)} u((x+j)/ell)``.

    Rows and columns are x-Fourier coefficients in FFT order; the Nyquist
    column is the cosine mode.
    """
    fm = frozen(f, 0.0) if not isinstance(f, FrozenMap) else f
    if not fm.is_rot:
        raise InvalidParams("fiber blocks need the unperturbed skew map")
    ell = fm.ell
    x = np.arange(nx) / nx
    xp = (x[:, None] + np.arange(ell)[None, :]) / ell  # (nx, ell)
    k = int_freqs(nx)
    twist = np.exp(-TWO_PI * 1j * m * fm.phi(xp))  # (nx, ell)
    basis = np.exp(TWO_PI * 1j * xp[..., None] * k)
    # the Nyquist mode of a real grid function is the cosine, which is closed
    # under conjugation and so keeps L_{-m} = conj(L_m) exact
    basis[..., nx // 2] = np.cos(np.pi * nx * xp)
    samples = np.einsum("ij,ijk->ik", twist, basis) / ell
    return np.fft.fft(samples, axis=0) / nx


@dataclass
class SpectralReport:
    eigenvalues: list
    gap: float
    block_radii: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    @property
    def second_modulus(self) -> float:
        return 1.0 - self.gap


def discrete_operator(f, t: float, cfg: TransferConfig, dtype=float) -> spla.LinearOperator:
    """The discrete ``P_{f_t}`` as a scipy LinearOperator on flattened grids."""
    op = DiscreteTransfer(f, t, cfg)
    shape = (cfg.nx, cfg.ny)

    def mv(v):
        return op(np.asarray(v).reshape(shape)).ravel()

    n = cfg.nx * cfg.ny
    return spla.LinearOperator((n, n), matvec=mv, dtype=dtype)


def spectrum_estimate(f, t: float = 0.0, cfg: TransferConfig | None = None, k: int = 6,
                      m_max: int = 4, tol: float = 1e-13) -> SpectralReport:
    """Leading eigenvalues of the discretised operator (Arnoldi) and fibre-block radii."""
    if k < 2:
        raise InvalidParams("k must be >= 2")
    cfg = cfg or TransferConfig(128, 32)
    A = discrete_operator(f, t, cfg)
    v0 = np.ones(cfg.nx * cfg.ny) + np.random.default_rng(0).standard_normal(cfg.nx * cfg.ny) * 1e-3
    try:
        vals = spla.eigs(A, k=k, which="LM", tol=tol, v0=v0, return_eigenvectors=False,
                         maxiter=20 * cfg.nx * cfg.ny)
    except spla.ArpackNoConvergence as exc:
        raise NoConvergence(f"Arnoldi iteration did not converge: {exc}") from exc
    vals = sorted(vals, key=lambda z: (-abs(z), -z.real, -z.imag))
    fm = frozen(f, t)
    radii = {}
    if fm.is_rot:
        for m in range(-m_max, m_max + 1):
            ev = np.linalg.eigvals(fiber_block(fm, m, cfg.nx))
            radii[m] = float(np.max(np.abs(ev)))
    gap = 1.0 - abs(vals[1])
    meta = {"nx": cfg.nx, "ny": cfg.ny, "dealias_fraction": cfg.dealias_fraction}
    return SpectralReport([complex(v) for v in vals], float(gap), radii, meta)
