"""Skew endomorphisms of the 2-torus and their perturbations.

The base map is ``f(x, y) = (ell*x, y + phi(x)) mod 1`` with ``phi`` a real
trigonometric polynomial.  Perturbed maps are written in post-composition
form ``f_t = chi_t o f`` where ``chi_t(z) = z + t V(z) mod 1`` and ``V`` is a
trigonometric vector field.  A ``FrozenMap`` is a concrete map
``chi_k o ... o chi_1 o f`` with fixed amplitudes; every numerical routine
works on frozen maps, and ``SkewEndomorphism.at(t)`` produces one.

All evaluation routines are vectorised over numpy arrays of points.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import BranchCollision, InvalidParams, NewtonDivergence

TWO_PI = 2.0 * np.pi

NEWTON_TOL = 1e-13
NEWTON_MAX_ITER = 50
NEWTON_DAMPING = 0.5
MERGE_TOL = 1e-8


def canonical(a):
    """Reduce to [0, 1); guards against ``mod`` returning exactly 1.0."""
    r = np.mod(a, 1.0)
    if np.ndim(r) == 0:
        return 0.0 if r >= 1.0 else float(r)
    r[r >= 1.0] = 0.0
    return r


def wrap(a):
    """Representative of ``a`` mod 1 in [-1/2, 1/2]."""
    return a - np.round(a)


def torus_distance(x1, y1, x2, y2):
    return np.maximum(np.abs(wrap(x1 - x2)), np.abs(wrap(y1 - y2)))


@dataclass(frozen=True)
class TorusPoint:
    """Point of T^2 with coordinates canonicalised to [0, 1)."""

    x: float
    y: float

    def __post_init__(self):
        object.__setattr__(self, "x", canonical(self.x))
        object.__setattr__(self, "y", canonical(self.y))

    def as_tuple(self):
        return (self.x, self.y)


def Jacobian2x2(a, b, c, d) -> np.ndarray:
    """2x2 matrix ``[[a, b], [c, d]]`` as a float array."""
    return np.array([[a, b], [c, d]], dtype=float)


@dataclass(frozen=True)
class TrigPoly:
    """Real trigonometric polynomial on the circle.

    ``phi(x) = sum_k cos[k] cos(2 pi k x) + sin[k] sin(2 pi k x)``, indexed by
    frequency ``k >= 0`` (``sin[0]`` is ignored).
    """

    cos: tuple = ()
    sin: tuple = ()

    def __post_init__(self):
        c = [float(v) for v in self.cos]
        s = [float(v) for v in self.sin]
        n = max(len(c), len(s))
        c += [0.0] * (n - len(c))
        s += [0.0] * (n - len(s))
        if s:
            s[0] = 0.0
        if not all(np.isfinite(c + s)):
            raise InvalidParams("trigonometric coefficients must be finite")
        object.__setattr__(self, "cos", tuple(c))
        object.__setattr__(self, "sin", tuple(s))

    @classmethod
    def from_pairs(cls, cos_pairs=None, sin_pairs=None) -> "TrigPoly":
        """Build from ``{frequency: coefficient}`` mappings."""
        cos_pairs = dict(cos_pairs or {})
        sin_pairs = dict(sin_pairs or {})
        keys = list(cos_pairs) + list(sin_pairs)
        if any(int(k) < 0 for k in keys):
            raise InvalidParams("frequencies must be non-negative")
        n = max([int(k) for k in keys], default=-1) + 1
        c = [0.0] * n
        s = [0.0] * n
        for k, v in cos_pairs.items():
            c[int(k)] += float(v)
        for k, v in sin_pairs.items():
            s[int(k)] += float(v)
        return cls(tuple(c), tuple(s))

    @property
    def degree(self) -> int:
        nz = [k for k in range(len(self.cos)) if self.cos[k] != 0.0 or self.sin[k] != 0.0]
        return max(nz, default=0)

    @property
    def is_zero(self) -> bool:
        return not any(self.cos) and not any(self.sin)

    def derivative(self, x, order: int = 1):
        """``d^order phi / dx^order`` evaluated at ``x``."""
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for k in range(len(self.cos)):
            a, b = self.cos[k], self.sin[k]
            if a == 0.0 and b == 0.0:
                continue
            if k == 0:
                if order == 0:
                    out = out + a
                continue
            w = TWO_PI * k
            c, s = np.cos(w * x), np.sin(w * x)
            # derivatives cycle through (c, s) -> (-s, c) -> (-c, -s) -> (s, -c)
            for _ in range(order):
                c, s = -s, c
            out = out + w**order * (a * c + b * s)
        return out

    def __call__(self, x):
        return self.derivative(x, order=0)

    def derivative_bound(self) -> float:
        """Upper bound on sup|phi'| from the coefficients."""
        return float(sum(TWO_PI * k * np.hypot(self.cos[k], self.sin[k]) for k in range(len(self.cos))))

    def derivative_grid_max(self, n: int = 8192) -> float:
        """Dense-grid estimate of sup|phi'| (never exceeds the bound)."""
        x = np.arange(n) / n
        return float(np.max(np.abs(self.derivative(x)))) if n else 0.0

    def shifted(self, c: float) -> "TrigPoly":
        """``phi + c``."""
        cos = list(self.cos) or [0.0]
        cos[0] += c
        return TrigPoly(tuple(cos), self.sin)


def _eval_terms(terms, x, y, dx=0, dy=0):
    """Evaluate ``sum a cos(2pi(kx x + ky y)) + b sin(...)`` or a first partial."""
    out = np.zeros(np.broadcast(x, y).shape)
    for kx, ky, a, b in terms:
        ph = TWO_PI * (kx * x + ky * y)
        if dx == 0 and dy == 0:
            out = out + a * np.cos(ph) + b * np.sin(ph)
        else:
            w = TWO_PI * (kx if dx else ky)
            out = out + w * (-a * np.sin(ph) + b * np.cos(ph))
    return out


@dataclass(frozen=True)
class TorusField:
    """Smooth vector field ``V = (Vx, Vy)`` on T^2 given by Fourier term tables.

    Each component is a tuple of ``(kx, ky, a, b)`` terms contributing
    ``a cos(2pi(kx x + ky y)) + b sin(2pi(kx x + ky y))``.
    """

    vx: tuple = ()
    vy: tuple = ()
    name: str = "table"

    def __post_init__(self):
        def norm(terms):
            out = []
            for term in terms:
                kx, ky, a, b = term
                if not (np.isfinite(a) and np.isfinite(b)):
                    raise InvalidParams("vector field coefficients must be finite")
                out.append((int(kx), int(ky), float(a), float(b)))
            return tuple(out)

        object.__setattr__(self, "vx", norm(self.vx))
        object.__setattr__(self, "vy", norm(self.vy))

    @classmethod
    def vertical_const(cls, c: float = 1.0) -> "TorusField":
        """``V = (0, c)``: translation along the fibre."""
        return cls((), ((0, 0, c, 0.0),), name="vertical_const")

    @classmethod
    def vertical_profile(cls, h: TrigPoly | None = None) -> "TorusField":
        """``V = (0, h(x) sin(2 pi y))``; ``h`` defaults to the constant 1."""
        h = h if h is not None else TrigPoly((1.0,))
        terms = []
        for k in range(len(h.cos)):
            a, b = h.cos[k], h.sin[k]
            if a != 0.0:
                # cos(A) sin(B) = (sin(A+B) - sin(A-B)) / 2
                terms += [(k, 1, 0.0, a / 2), (k, -1, 0.0, -a / 2)]
            if b != 0.0 and k > 0:
                # sin(A) sin(B) = (cos(A-B) - cos(A+B)) / 2
                terms += [(k, -1, b / 2, 0.0), (k, 1, -b / 2, 0.0)]
        return cls((), tuple(terms), name="vertical_profile")

    @property
    def is_vertical(self) -> bool:
        return all(a == 0.0 and b == 0.0 for _, _, a, b in self.vx)

    def __call__(self, x, y):
        return _eval_terms(self.vx, x, y), _eval_terms(self.vy, x, y)

    def jacobian(self, x, y) -> np.ndarray:
        """Array of shape ``(..., 2, 2)`` with ``[[dVx/dx, dVx/dy], [dVy/dx, dVy/dy]]``."""
        shape = np.broadcast(x, y).shape
        J = np.empty(shape + (2, 2))
        J[..., 0, 0] = _eval_terms(self.vx, x, y, dx=1)
        J[..., 0, 1] = _eval_terms(self.vx, x, y, dy=1)
        J[..., 1, 0] = _eval_terms(self.vy, x, y, dx=1)
        J[..., 1, 1] = _eval_terms(self.vy, x, y, dy=1)
        return J

    def divergence(self, x, y):
        return _eval_terms(self.vx, x, y, dx=1) + _eval_terms(self.vy, x, y, dy=1)

    def sup_norms(self, grid: int = 64):
        """Grid maxima of |V| and |DV| (a proxy for the C^1 family norm)."""
        g = np.arange(grid) / grid
        X, Y = np.meshgrid(g, g, indexing="ij")
        vx, vy = self(X, Y)
        return float(np.max(np.hypot(vx, vy))), float(np.max(np.abs(self.jacobian(X, Y))))


def _chi_jacobian(V: TorusField, a: float, x, y) -> np.ndarray:
    J = a * V.jacobian(x, y)
    J[..., 0, 0] += 1.0
    J[..., 1, 1] += 1.0
    return J


def invert_chi(V: TorusField, a: float, zx, zy):
    """Solve ``p + a V(p) = z`` (mod 1) by damped Newton seeded at ``p = z``."""
    zx = np.asarray(zx, dtype=float)
    zy = np.asarray(zy, dtype=float)
    px, py = zx.copy(), zy.copy()

    def residual(px, py):
        vx, vy = V(px, py)
        return wrap(px + a * vx - zx), wrap(py + a * vy - zy)

    rx, ry = residual(px, py)
    res = np.maximum(np.abs(rx), np.abs(ry))
    polished = False
    for _ in range(NEWTON_MAX_ITER + 1):
        if np.all(res <= NEWTON_TOL):
            if polished:
                return canonical(px), canonical(py)
            # one extra step brings the residual down to rounding level
            polished = True
        J = _chi_jacobian(V, a, px, py)
        det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
        dx = (J[..., 1, 1] * rx - J[..., 0, 1] * ry) / det
        dy = (-J[..., 1, 0] * rx + J[..., 0, 0] * ry) / det
        step = np.ones_like(res)
        for _ in range(8):
            tx, ty = px - step * dx, py - step * dy
            trx, try_ = residual(tx, ty)
            tres = np.maximum(np.abs(trx), np.abs(try_))
            worse = tres > res
            if not np.any(worse):
                break
            step = np.where(worse, step * NEWTON_DAMPING, step)
        px, py, rx, ry, res = tx, ty, trx, try_, tres
    if np.all(res <= NEWTON_TOL):
        return canonical(px), canonical(py)
    raise NewtonDivergence(
        f"inverse of the perturbation failed to converge (residual {float(np.max(res)):.3e}); "
        "perturbation amplitude too large?"
    )


@dataclass(frozen=True)
class FrozenMap:
    """Concrete map ``chi_k o ... o chi_1 o f_rot`` with fixed amplitudes."""

    ell: int
    phi: TrigPoly
    steps: tuple = ()  # ((TorusField, amplitude), ...)

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple((V, float(a)) for V, a in self.steps if float(a) != 0.0))

    def at(self, t: float) -> "FrozenMap":
        if t != 0:
            raise InvalidParams("a frozen map has no free parameter")
        return self

    @property
    def is_rot(self) -> bool:
        """True when the map is the unperturbed skew product."""
        return not self.steps

    @property
    def is_vertical(self) -> bool:
        return all(V.is_vertical for V, _ in self.steps)

    def forward(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        px = canonical(self.ell * x)
        py = canonical(y + self.phi(x))
        for V, a in self.steps:
            vx, vy = V(px, py)
            px, py = canonical(px + a * vx), canonical(py + a * vy)
        return px, py

    def jacobian(self, x, y) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        shape = np.broadcast(x, y).shape
        J = np.zeros(shape + (2, 2))
        J[..., 0, 0] = self.ell
        J[..., 1, 0] = self.phi.derivative(x)
        J[..., 1, 1] = 1.0
        px = canonical(self.ell * x)
        py = canonical(y + self.phi(x))
        for V, a in self.steps:
            J = _chi_jacobian(V, a, px, py) @ J
            vx, vy = V(px, py)
            px, py = canonical(px + a * vx), canonical(py + a * vy)
        return J

    def pullback_steps(self, zx, zy):
        """Undo the perturbation steps.

        Returns ``(px, py, M)`` with ``p = chi^{-1}(z)`` and ``M`` the Jacobian
        of ``chi_k o ... o chi_1`` at ``p`` (shape ``(..., 2, 2)``).
        """
        px = np.asarray(zx, dtype=float)
        py = np.asarray(zy, dtype=float)
        shape = np.broadcast(px, py).shape
        M = np.broadcast_to(np.eye(2), shape + (2, 2)).copy()
        for V, a in reversed(self.steps):
            px, py = invert_chi(V, a, px, py)
            M = M @ _chi_jacobian(V, a, px, py)
        return px, py, M

    def preimages(self, zx, zy):
        """All ``ell`` preimages of each point.

        Returns ``(wx, wy, J)`` with leading axis of length ``ell`` indexing the
        branch ``j`` (``x``-coordinate ``(p_x + j)/ell``) and ``J`` the Jacobian
        ``Df`` at each preimage.
        """
        px, py, M = self.pullback_steps(zx, zy)
        j = np.arange(self.ell).reshape((-1,) + (1,) * np.ndim(px))
        wx = (px + j) / self.ell
        wy = canonical(py - self.phi(wx))
        D = np.zeros(wx.shape + (2, 2))
        D[..., 0, 0] = self.ell
        D[..., 1, 0] = self.phi.derivative(wx)
        D[..., 1, 1] = 1.0
        return wx, wy, M @ D

    def branch_tree(self, zx, zy, n: int):
        """Preimages under ``f^n`` with their cocycles ``Df^n``.

        Output arrays have a leading axis of length ``ell**n``; branch index
        ``b`` encodes the digit choices with the deepest level most significant.
        """
        zx = np.asarray(zx, dtype=float)
        zy = np.asarray(zy, dtype=float)
        shape = np.broadcast(zx, zy).shape
        wx = np.broadcast_to(zx, shape)[None].copy()
        wy = np.broadcast_to(zy, shape)[None].copy()
        J = np.broadcast_to(np.eye(2), (1,) + shape + (2, 2)).copy()
        for _ in range(n):
            qx, qy, D = self.preimages(wx, wy)
            # Df^k at the new point = Df^{k-1}(previous point) @ Df(new point)
            J = J[None] @ D
            wx = qx.reshape((-1,) + shape)
            wy = qy.reshape((-1,) + shape)
            J = J.reshape((-1,) + shape + (2, 2))
        return wx, wy, J


@dataclass(frozen=True)
class SkewEndomorphism:
    """``f(x, y) = (ell x, y + phi(x))`` with an optional perturbation direction."""

    ell: int
    phi: TrigPoly = field(default_factory=TrigPoly)
    perturbation: TorusField | None = None

    def __post_init__(self):
        if int(self.ell) != self.ell or self.ell < 2:
            raise InvalidParams(f"ell must be an integer >= 2, got {self.ell!r}")
        object.__setattr__(self, "ell", int(self.ell))

    def at(self, t: float = 0.0) -> FrozenMap:
        steps = ((self.perturbation, t),) if self.perturbation is not None else ()
        return FrozenMap(self.ell, self.phi, steps)

    @property
    def rot(self) -> FrozenMap:
        return FrozenMap(self.ell, self.phi)

    def derivative_bound(self) -> float:
        return self.phi.derivative_bound()

    def derivative_grid_max(self, n: int = 8192) -> float:
        return self.phi.derivative_grid_max(n)


def frozen(f, t: float = 0.0) -> FrozenMap:
    """Concrete map of ``f`` at parameter ``t`` (works for maps and families)."""
    return f.at(t)


def _point_arrays(z):
    if isinstance(z, TorusPoint):
        return z.x, z.y
    x, y = z
    return canonical(np.asarray(x, dtype=float)), canonical(np.asarray(y, dtype=float))


def eval_map(f, t: float, z):
    """``f_t(z)``. Accepts a ``TorusPoint`` or a pair of coordinate arrays."""
    x, y = _point_arrays(z)
    fx, fy = frozen(f, t).forward(x, y)
    if isinstance(z, TorusPoint):
        return TorusPoint(float(fx), float(fy))
    return fx, fy


def inverse_branches(f, t: float, z: TorusPoint, n: int):
    """The ``ell**n`` preimages of ``z`` under ``f_t^n`` paired with ``Df_t^n``."""
    if n < 1:
        raise InvalidParams("n must be >= 1")
    fm = frozen(f, t)
    wx, wy, J = fm.branch_tree(np.array(z.x), np.array(z.y), n)
    if len(wx) > 1:
        d = torus_distance(wx[:, None], wy[:, None], wx[None, :], wy[None, :])
        d[np.diag_indices(len(wx))] = np.inf
        if np.min(d) < MERGE_TOL:
            raise BranchCollision(f"two inverse branches closer than {MERGE_TOL:g}")
    return [(TorusPoint(float(a), float(b)), M.copy()) for a, b, M in zip(wx, wy, J)]


def cocycle(f, t: float, w: TorusPoint, n: int) -> np.ndarray:
    """``Df_t(f_t^{n-1} w) ... Df_t(w)``; the identity for ``n = 0``."""
    if n < 0:
        raise InvalidParams("n must be >= 0")
    fm = frozen(f, t)
    J = np.eye(2)
    x, y = np.asarray(w.x, dtype=float), np.asarray(w.y, dtype=float)
    for _ in range(n):
        J = fm.jacobian(x, y) @ J
        x, y = fm.forward(x, y)
    return J


def parse_pairs(text: str | Iterable | None) -> dict:
    """Parse ``"1:0.1,3:-0.02"`` into ``{1: 0.1, 3: -0.02}``."""
    if text is None or text == "":
        return {}
    if isinstance(text, dict):
        return {int(k): float(v) for k, v in text.items()}
    out: dict = {}
    for item in str(text).replace(";", ",").split(","):
        item = item.strip()
        if not item:
            continue
        k, _, v = item.partition(":")
        if not _:
            raise InvalidParams(f"expected frequency:coefficient, got {item!r}")
        out[int(k)] = out.get(int(k), 0.0) + float(v)
    return out


def parse_field_terms(text: str | None) -> tuple:
    """Parse ``"kx,ky:a:b; ..."`` into Fourier term tuples."""
    if not text:
        return ()
    terms = []
    for item in str(text).split(";"):
        item = item.strip()
        if not item:
            continue
        parts = item.split(":")
        if len(parts) != 3:
            raise InvalidParams(f"expected kx,ky:cos:sin, got {item!r}")
        kx, ky = (int(s) for s in parts[0].split(","))
        terms.append((kx, ky, float(parts[1]), float(parts[2])))
    return tuple(terms)


def make_perturbation(name: str | None, profile: TrigPoly | None = None,
                      vx_terms: Sequence = (), vy_terms: Sequence = ()) -> TorusField | None:
    """Named perturbation fields used by the CLI and config files."""
    if name in (None, "", "none"):
        return None
    if name == "vertical_const":
        return TorusField.vertical_const(1.0)
    if name == "vertical_sine":
        return TorusField.vertical_profile()
    if name == "vertical_profile":
        return TorusField.vertical_profile(profile)
    if name == "table":
        return TorusField(tuple(vx_terms), tuple(vy_terms))
    raise InvalidParams(f"unknown perturbation {name!r}")
