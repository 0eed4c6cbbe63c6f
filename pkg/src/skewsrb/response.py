"""Linear response of the SRB density along post-composition families.

For ``f_t = chi_t o F`` with ``chi_t(z) = z + t V(z)`` the transfer operators
satisfy ``P_t = P_{chi_t} P_F`` and the first Taylor operator has the closed
form ``Q_1 u = -div(V P_F u)``.  The derivative of ``integral obs drho_t`` is
computed three ways:

* ``neumann``: ``sum_n (obs, P^n g)`` with ``g`` the mean-zero part of ``Q_1 rho_0``;
* ``contour``: trapezoid rule for ``(2 pi i)^{-1} oint (obs, R(z) Q_1 R(z) 1) dz``
  on ``|z - 1| = kappa`` with ``R(z) = (z - P)^{-1}`` applied by GMRES;
* ``finite_difference``: central difference of the densities of ``f_{+-t}``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial

import numpy as np
import scipy.sparse.linalg as spla

from .errors import InvalidParams, LinearSolveFailure, NoGap, StepTooSmall
from .skew_map import TWO_PI, FrozenMap, SkewEndomorphism, TorusField
from .transfer import (DiscreteTransfer, GridField, TransferConfig, TransferOperator, grid_points,
                       int_freqs, spectrum_estimate, srb_density)

NEUMANN_TOL = 1e-13
NEUMANN_MAX = 10_000
GMRES_RTOL = 1e-13
GMRES_RESTART = 60

# central stencils: offsets and weights approximating the k-th derivative (second order)
STENCILS = {
    1: ((-1, 1), (-0.5, 0.5)),
    2: ((-1, 0, 1), (1.0, -2.0, 1.0)),
    3: ((-2, -1, 1, 2), (-0.5, 1.0, -1.0, 0.5)),
    4: ((-2, -1, 0, 1, 2), (1.0, -4.0, 6.0, -4.0, 1.0)),
}


@dataclass(frozen=True)
class FamilySpec:
    """``t -> chi_t o f_base`` with ``chi_t(z) = z + t V(z)``.

    ``base_t`` freezes the base map's own perturbation (if any) at that amplitude.
    """

    base: SkewEndomorphism
    field: TorusField
    base_t: float = 0.0
    t_range: tuple = (-1.0, 1.0)

    def __post_init__(self):
        lo, hi = self.t_range
        if not (-1.0 <= lo < 0.0 < hi <= 1.0):
            raise InvalidParams("t_range must be an interval inside (-1, 1) containing 0")

    @property
    def base_map(self) -> FrozenMap:
        return self.base.at(self.base_t)

    def at(self, t: float = 0.0) -> FrozenMap:
        lo, hi = self.t_range
        if not (lo <= t <= hi):
            raise InvalidParams(f"t={t} outside the family range {self.t_range}")
        bm = self.base_map
        return FrozenMap(bm.ell, bm.phi, bm.steps + ((self.field, t),))


def _d(values: np.ndarray, axis: int) -> np.ndarray:
    """Spectral partial derivative along ``axis`` (Nyquist mode dropped)."""
    n = values.shape[axis]
    k = int_freqs(n)
    k[n // 2] = 0.0
    shape = [1, 1]
    shape[axis] = n
    c = np.fft.fft(values, axis=axis) * (TWO_PI * 1j * k.reshape(shape))
    out = np.fft.ifft(c, axis=axis)
    return out.real if not np.iscomplexobj(values) else out


def divergence(V: TorusField, values: np.ndarray) -> np.ndarray:
    """``div(V u)`` for grid samples ``u``."""
    X, Y = grid_points(*values.shape)
    vx, vy = V(X, Y)
    return _d(vx * values, 0) + _d(vy * values, 1)


def q1_apply(fam: FamilySpec, u: GridField, cfg: TransferConfig | None = None) -> GridField:
    """``d/dt P_t u`` at ``t = 0``, i.e. ``-div(V P_base u)``.

    With ``cfg`` the result is truncated to its dealiased band.
    """
    op = TransferOperator(fam.base_map, u.nx, u.ny)
    out = -divergence(fam.field, op(u.values))
    if cfg is not None:
        out = cfg.project(out)
    return GridField(out)


def qk_finite_difference(fam: FamilySpec, u: GridField, k: int, step: float = 1e-3) -> GridField:
    """``(1/k!) d^k/dt^k P_t u`` at ``t = 0`` from a second-order central stencil."""
    if k not in STENCILS:
        raise InvalidParams("stencils are tabulated for 1 <= k <= 4")
    if step <= 0:
        raise InvalidParams("step must be positive")
    offsets, weights = STENCILS[k]
    acc = 0.0
    scale = 0.0
    samples = []
    for o, w in zip(offsets, weights):
        pu = TransferOperator(fam.at(o * step), u.nx, u.ny)(u.values)
        samples.append(pu)
        acc = acc + w * pu
        scale = max(scale, float(np.max(np.abs(pu))))
    if all(np.array_equal(samples[0], s) for s in samples[1:]):
        return GridField(np.zeros_like(samples[0]))  # no t-dependence at all
    denom = step**k * factorial(k)
    out = acc / denom
    noise = np.finfo(float).eps * scale * sum(abs(w) for w in weights) / denom
    if float(np.max(np.abs(out))) < 10.0 * noise:
        raise StepTooSmall(f"stencil result is below 10x the rounding noise ({noise:.2e}); increase step")
    return GridField(out)


def _resolvent_solver(P: DiscreteTransfer, shape, z: complex, rtol: float = GMRES_RTOL):
    n = shape[0] * shape[1]

    def mv(v):
        v = np.asarray(v).reshape(shape)
        return (z * v - P(v)).ravel()

    A = spla.LinearOperator((n, n), matvec=mv, dtype=complex)

    def solve(b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, dtype=complex)
        nb = float(np.linalg.norm(b))
        if nb == 0.0:
            return np.zeros(shape, dtype=complex)
        x, info = spla.gmres(A, b.ravel(), rtol=rtol, atol=0.0, restart=GMRES_RESTART, maxiter=200)
        if info != 0:
            raise LinearSolveFailure(f"GMRES did not converge at z={z:.6g} (info={info})")
        return x.reshape(shape)

    return solve


@dataclass
class ResponseReport:
    neumann: float | None = None
    contour: float | None = None
    finite_difference: float | None = None
    neumann_terms: int | None = None
    kappa: float | None = None
    nodes: int | None = None
    t_fd: float | None = None
    second_eigenvalue: float | None = None
    discrepancies: dict = field(default_factory=dict)

    def values(self) -> dict:
        out = {"neumann": self.neumann, "contour": self.contour, "finite_difference": self.finite_difference}
        return {k: v for k, v in out.items() if v is not None}


def _pairing(obs: np.ndarray, w: np.ndarray):
    """Bilinear ``integral obs * w`` by grid quadrature."""
    return np.mean(obs * w)


def neumann_response(fam: FamilySpec, obs: GridField, cfg: TransferConfig, rho0: GridField | None = None,
                     tol: float = NEUMANN_TOL, n_max: int = NEUMANN_MAX):
    """``sum_n (obs, P^n g)``; returns ``(value, number of terms)``."""
    rho0 = rho0 if rho0 is not None else srb_density(fam.base_map, 0.0, cfg, tol=1e-14)
    P = DiscreteTransfer(fam.base_map, 0.0, cfg)
    g = q1_apply(fam, rho0, cfg).values
    v = g - np.mean(g)  # stay off the eigenvalue-1 direction
    terms = []
    norms = []
    for n in range(n_max + 1):
        nv = float(np.max(np.abs(v)))
        norms.append(nv)
        if nv < tol:
            break
        terms.append(_pairing(obs.values, v))
        if n >= 200 and nv > 0.999 * norms[n - 100]:
            raise NoGap(f"Neumann terms are not decaying (|P^{n} g| = {nv:.3e}); no spectral gap")
        v = P(v)
    else:
        raise NoGap(f"Neumann series did not reach tol={tol:g} in {n_max} terms")
    return float(np.real(np.sum(terms))), len(terms)


def default_kappa(fam: FamilySpec, cfg: TransferConfig) -> tuple[float, float]:
    """Contour radius ``0.5 (1 - |lambda_2|)`` and ``|lambda_2|``."""
    rep = spectrum_estimate(fam.base_map, 0.0, cfg, k=4)
    lam2 = abs(rep.eigenvalues[1])
    if 1.0 - lam2 < 1e-6:
        raise NoGap(f"second eigenvalue {lam2:.8f} is on the unit circle; no spectral gap")
    return 0.5 * (1.0 - lam2), lam2


def contour_response(fam: FamilySpec, obs: GridField, cfg: TransferConfig, kappa: float | None = None,
                     nodes: int = 64, lam2: float | None = None):
    """Trapezoid rule on ``|z - 1| = kappa`` for the derivative of the spectral projector."""
    if nodes < 4 or nodes % 2:
        raise InvalidParams("nodes must be an even integer >= 4")
    if kappa is None:
        kappa, lam2 = default_kappa(fam, cfg)
    if not (0.0 < kappa < 1.0):
        raise InvalidParams("kappa must lie in (0, 1)")
    if lam2 is not None and 1.0 - lam2 <= kappa:
        raise InvalidParams(f"contour radius {kappa} encloses the second eigenvalue {lam2}")
    P = DiscreteTransfer(fam.base_map, 0.0, cfg)
    shape = (cfg.nx, cfg.ny)
    one = np.ones(shape)
    total = 0.0
    # conjugate symmetry: nodes j and N-j contribute complex-conjugate terms
    for j in range(nodes // 2 + 1):
        th = TWO_PI * j / nodes
        e = np.exp(1j * th)
        solve = _resolvent_solver(P, shape, 1.0 + kappa * e)
        a = solve(one)
        b = q1_apply(fam, GridField(a), cfg).values
        w = solve(b)
        term = float(np.real(_pairing(obs.values, w) * e))
        total += term if j in (0, nodes // 2) else 2.0 * term
    return kappa * total / nodes, kappa, lam2


def fd_response(fam: FamilySpec, obs: GridField, cfg: TransferConfig, t: float = 1e-4,
                tol: float = 1e-14) -> float:
    """Central difference of ``integral obs rho_t`` at ``+-t``."""
    means = []
    for s in (t, -t):
        rho = srb_density(fam.at(s), 0.0, cfg, tol=tol)
        means.append(float(np.mean(rho.values * obs.values)))
    return (means[0] - means[1]) / (2.0 * t)


def linear_response(fam: FamilySpec, obs: GridField, method: str = "all", cfg: TransferConfig | None = None,
                    t_fd: float = 1e-4, kappa: float | None = None, nodes: int = 64) -> ResponseReport:
    """``d/dt integral obs d mu_t`` at ``t = 0`` by the requested method(s)."""
    methods = {"neumann", "contour", "fd"} if method == "all" else {method}
    if not methods <= {"neumann", "contour", "fd"}:
        raise InvalidParams(f"unknown method {method!r}")
    cfg = cfg or TransferConfig(obs.nx, obs.ny)
    if (cfg.nx, cfg.ny) != obs.shape:
        raise InvalidParams("observable grid does not match the config")
    rep = ResponseReport()
    if "neumann" in methods:
        rep.neumann, rep.neumann_terms = neumann_response(fam, obs, cfg)
    if "contour" in methods:
        rep.contour, rep.kappa, rep.second_eigenvalue = contour_response(fam, obs, cfg, kappa, nodes)
        rep.nodes = nodes
    if "fd" in methods:
        rep.finite_difference = fd_response(fam, obs, cfg, t_fd)
        rep.t_fd = t_fd
    vals = rep.values()
    keys = sorted(vals)
    for i, a in enumerate(keys):
        for b in keys[i + 1:]:
            rep.discrepancies[f"{a}-{b}"] = abs(vals[a] - vals[b])
    return rep


def resolvent_error(fam: FamilySpec, s: int, z: complex, probe: GridField, t: float,
                    cfg: TransferConfig | None = None, q2_step: float = 1e-3) -> float:
    """``|(z - P_t)^{-1} probe - R_s(t) probe|_{L^2}`` for the order-``s`` expansion."""
    if s not in (1, 2, 3):
        raise InvalidParams("expansion order s must be 1, 2 or 3")
    cfg = cfg or TransferConfig(probe.nx, probe.ny)
    shape = probe.shape
    solve0 = _resolvent_solver(DiscreteTransfer(fam.base_map, 0.0, cfg), shape, z)
    r1 = solve0(probe.values)
    approx = r1
    if s >= 2:
        rq = solve0(q1_apply(fam, GridField(r1), cfg).values)
        approx = approx + t * rq
    if s >= 3:
        q2 = qk_finite_difference(fam, GridField(r1), 2, q2_step).values
        term_a = solve0(cfg.project(q2))
        term_b = solve0(q1_apply(fam, GridField(rq), cfg).values)
        approx = approx + t * t * (term_a + term_b)
    P_t = DiscreteTransfer(fam.at(t), 0.0, cfg) if t != 0 else DiscreteTransfer(fam.base_map, 0.0, cfg)
    exact = _resolvent_solver(P_t, shape, z)(probe.values)
    return float(np.sqrt(np.mean(np.abs(exact - approx) ** 2)))


def resolvent_truncation_order(fam: FamilySpec, s: int, z: complex, probe: GridField,
                               t_list=(1e-2, 1e-3, 1e-4, 1e-5), cfg: TransferConfig | None = None,
                               return_errors: bool = False):
    """Log-log slope of the expansion error against ``t`` (expected at least ``s - 1``)."""
    ts = [float(t) for t in t_list if t != 0]
    if len(ts) < 2:
        raise InvalidParams("need at least two non-zero t values")
    errs = [resolvent_error(fam, s, z, probe, t, cfg) for t in ts]
    pos = [(t, e) for t, e in zip(ts, errs) if e > 0]
    if len(pos) < 2:
        slope = float("inf")  # expansion exact on the ladder
    else:
        slope = float(np.polyfit(np.log([p[0] for p in pos]), np.log([p[1] for p in pos]), 1)[0])
    return (slope, errs) if return_errors else slope
