"""Monte Carlo laboratory for Hoelder-only parameter dependence of fibered drifts.

The system is ``f(z, x) = (ell_b z mod 1, A(z, x))`` on ``T x T`` where
``A(z, .)`` is the projective action of a unimodular matrix ``S(z)``:
hyperbolic ``C0 = diag(e^a, e^-a)`` on an arc ``C``, a quarter turn ``B0`` on a
disjoint arc ``B`` (it carries the sink of ``C0`` to its source) and a smooth
blend in the gaps.  The family ``f_t`` adds ``t`` to the fiber coordinate.

Fiber angles ``theta`` in [0, 1) stand for the lines ``R (cos pi theta, sin pi theta)``.
Lifts are evaluated as ``x + d(x - floor x)`` with a 1-periodic displacement
``d``, and drift sums are accumulated on the real line without wrapping.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.stats import binomtest

from .errors import DegenerateFit, InfeasibleMeasures, InvalidParams, NotHyperbolic, WitnessNotFound

LOW_BITS = 2.0**-40
CHUNK = 16384
COLLAR = 0.01
QUARTER_TURN = np.array([[0.0, -1.0], [1.0, 0.0]])


def _displacement(a, b, c, d, r):
    """``Hhat(r) - r`` for ``r`` in [0, 1) and matrix entries (broadcastable)."""
    cr, sr = np.cos(np.pi * r), np.sin(np.pi * r)
    w1 = a * cr + b * sr
    w2 = c * cr + d * sr
    # angle from v to Hv, in (-pi, pi]
    return np.arctan2(cr * w2 - sr * w1, cr * w1 + sr * w2) / np.pi


def projective_action(H, theta):
    """Angle in [0, 1) of the line ``H (cos pi theta, sin pi theta)``."""
    H = np.asarray(H, dtype=float)
    th = np.asarray(theta, dtype=float)
    w1 = H[0, 0] * np.cos(np.pi * th) + H[0, 1] * np.sin(np.pi * th)
    w2 = H[1, 0] * np.cos(np.pi * th) + H[1, 1] * np.sin(np.pi * th)
    return np.mod(np.arctan2(w2, w1) / np.pi, 1.0)


@dataclass(frozen=True)
class MobiusCircleMap:
    """Projective action of a unimodular 2x2 matrix with its degree-one lift."""

    matrix: np.ndarray

    def __post_init__(self):
        H = np.array(self.matrix, dtype=float)
        if H.shape != (2, 2):
            raise InvalidParams("matrix must be 2x2")
        if abs(np.linalg.det(H) - 1.0) > 1e-12:
            raise InvalidParams(f"determinant must be 1, got {np.linalg.det(H)!r}")
        H.setflags(write=False)
        object.__setattr__(self, "matrix", H)

    @classmethod
    def hyperbolic(cls, alpha: float) -> "MobiusCircleMap":
        if alpha <= 0:
            raise InvalidParams("alpha must be positive")
        return cls(np.diag([math.exp(alpha), math.exp(-alpha)]))

    def __call__(self, x):
        """The lift ``Hhat(x)``, with ``Hhat(x + 1) = Hhat(x) + 1``."""
        x = np.asarray(x, dtype=float)
        H = self.matrix
        return x + _displacement(H[0, 0], H[0, 1], H[1, 0], H[1, 1], x - np.floor(x))

    def derivative(self, x):
        """``Hhat'(x) = 1 / |H v|^2`` for unit ``v`` at angle ``pi x``."""
        x = np.asarray(x, dtype=float)
        v = np.stack([np.cos(np.pi * x), np.sin(np.pi * x)])
        w = np.tensordot(self.matrix, v, axes=1)
        return 1.0 / np.sum(w * w, axis=0)

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix))

    @property
    def is_hyperbolic(self) -> bool:
        return abs(self.trace) > 2.0

    @property
    def alpha(self) -> float | None:
        """Exponent with eigenvalues ``e^{+-alpha}``; ``None`` unless hyperbolic."""
        return float(np.arccosh(abs(self.trace) / 2.0)) if self.is_hyperbolic else None

    def _eigen_angles(self):
        vals, vecs = np.linalg.eig(self.matrix)
        order = np.argsort(-np.abs(vals))
        ang = [float(np.mod(np.arctan2(vecs[1, i], vecs[0, i]) / np.pi, 1.0)) for i in order]
        return ang[0], ang[1]

    @property
    def sink(self) -> float:
        """Attracting fixed angle (expanding eigendirection)."""
        if not self.is_hyperbolic:
            raise NotHyperbolic("matrix is not hyperbolic")
        return self._eigen_angles()[0]

    @property
    def source(self) -> float:
        if not self.is_hyperbolic:
            raise NotHyperbolic("matrix is not hyperbolic")
        return self._eigen_angles()[1]


def fixed_points(H: MobiusCircleMap, t: float = 0.0, grid: int = 512):
    """Sink and source of ``Hhat + t`` with their ``t``-derivatives.

    Returns ``(u_t, s_t, du_dt, ds_dt)``; derivatives from ``1 / (1 - Hhat'(p))``.
    """
    xs = (np.arange(grid + 1) + 0.5) / grid

    def g(x):
        return float(H(x) - x + t)

    vals = np.array([g(x) for x in xs])
    roots = []
    for i in range(grid):
        if vals[i] == 0.0:
            roots.append(xs[i])
        elif vals[i] * vals[i + 1] < 0:
            roots.append(brentq(g, xs[i], xs[i + 1], xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200))
    roots = sorted({round(float(np.mod(r, 1.0)), 14) % 1.0 for r in roots})
    sinks, sources = [], []
    for r in roots:
        dh = float(H.derivative(r))
        if abs(dh - 1.0) < 1e-9:
            raise NotHyperbolic("degenerate (parabolic) fixed point")
        (sinks if dh < 1.0 else sources).append((r, dh))
    if len(sinks) != 1 or len(sources) != 1:
        raise NotHyperbolic(f"expected one sink and one source, found {len(sinks)} and {len(sources)}")
    (u, du), (s, ds) = sinks[0], sources[0]
    return u, s, 1.0 / (1.0 - du), 1.0 / (1.0 - ds)


@dataclass
class HypReport:
    c: float
    table: dict  # (delta, n) -> distance * delta * e^{n rate}
    rate: float


def hyp_constant(H: MobiusCircleMap, delta_list, n_list, rate: float | None = None, samples: int = 4096) -> HypReport:
    """Empirical ``c`` in ``Hhat^n(T minus B(s, delta)) in B(u, c delta^{-1} e^{-n rate})``.

    ``rate`` defaults to ``alpha``.  The projective contraction at the sink is
    ``e^{-2 alpha}``, so ``rate = 2 alpha`` makes ``c`` independent of ``n``.
    """
    if not H.is_hyperbolic:
        raise NotHyperbolic("matrix is not hyperbolic")
    rate = H.alpha if rate is None else rate
    u, s = H.sink, H.source
    table = {}
    for delta in delta_list:
        if not (0.0 < delta < 0.5):
            raise InvalidParams("delta must lie in (0, 1/2)")
        x = s + delta + (1.0 - 2.0 * delta) * np.linspace(0.0, 1.0, samples)
        for n in sorted(n_list):
            y = x.copy()
            for _ in range(n):
                y = np.mod(H(y), 1.0)
            dist = np.abs(np.mod(y - u + 0.5, 1.0) - 0.5)
            table[(float(delta), int(n))] = float(dist.max() * delta * math.exp(n * rate))
    return HypReport(max(table.values()), table, float(rate))


@dataclass(frozen=True)
class Witness:
    z: float
    q: int
    eps1: float
    eps2: float
    displacement: float  # D(s0) - s0, lifted


@dataclass(frozen=True)
class FiberedSystem:
    base_degree: int
    kappa: float
    c0: float
    alpha: float
    offset: float  # start of the C arc
    c_length: float
    b_length: float
    gap: float
    collar: float
    fiberC: MobiusCircleMap
    fiberB: MobiusCircleMap
    u0: float = 0.0
    s0: float = 0.5
    witness: Witness | None = None
    eps: float | None = None
    K: int = 0
    j1_radius: float = 0.0  # J1 = T minus closed ball B(s0, j1_radius)
    fiber_derivative_max: float = float("nan")
    partially_hyperbolic: bool = False

    # arc layout relative to offset: C, gap/2, B, gap/2
    @property
    def b_start(self) -> float:
        return self.c_length + self.gap / 2.0

    def region_measures(self):
        return self.c_length, self.b_length, self.c_length + self.b_length

    def arcs(self):
        """Arc endpoints ``(start, end)`` mod 1 of the regions ``C`` and ``B``."""
        o = self.offset
        c = (o % 1.0, (o + self.c_length) % 1.0)
        b = ((o + self.b_start) % 1.0, (o + self.b_start + self.b_length) % 1.0)
        return c, b

    def blend_weight(self, z):
        """Weight of ``B0`` at base point ``z``: 0 on ``C``, 1 on ``B``, quintic ramps in the gaps."""
        pos = np.mod(np.asarray(z, dtype=float) - self.offset, 1.0)
        w = min(self.collar, self.gap / 2.0)
        g1 = self.c_length + self.gap / 4.0  # centres of the two gaps
        g2 = self.b_start + self.b_length + self.gap / 4.0
        up = _ramp((pos - (g1 - w / 2.0)) / w)
        down = 1.0 - _ramp((pos - (g2 - w / 2.0)) / w)
        return up * down

    def in_C(self, z):
        pos = np.mod(np.asarray(z, dtype=float) - self.offset, 1.0)
        return (pos > 0.0) & (pos < self.c_length)

    def in_B(self, z):
        pos = np.mod(np.asarray(z, dtype=float) - self.offset, 1.0)
        return (pos > self.b_start) & (pos < self.b_start + self.b_length)

    def matrices(self, z):
        """Entries ``(a, b, c, d)`` of ``S(z)`` (exact ``C0``/``B0`` off the blend)."""
        s = self.blend_weight(z)
        C, B = self.fiberC.matrix, self.fiberB.matrix
        a = (1 - s) * C[0, 0] + s * B[0, 0]
        b = (1 - s) * C[0, 1] + s * B[0, 1]
        c = (1 - s) * C[1, 0] + s * B[1, 0]
        d = (1 - s) * C[1, 1] + s * B[1, 1]
        mixed = (s > 0) & (s < 1)
        if np.any(mixed):
            det = a * d - b * c
            k = np.where(mixed, 1.0 / np.sqrt(np.where(mixed, det, 1.0)), 1.0)
            a, b, c, d = a * k, b * k, c * k, d * k
        return a, b, c, d

    def fiber_lift(self, z, x, t: float = 0.0):
        """``p2 fhat_t(z, x)`` on the real line."""
        x = np.asarray(x, dtype=float)
        a, b, c, d = self.matrices(z)
        return x + _displacement(a, b, c, d, x - np.floor(x)) + t

    def base_map(self, z):
        return np.mod(self.base_degree * np.asarray(z, dtype=float), 1.0)


def _ramp(t):
    t = np.clip(t, 0.0, 1.0)
    return t * t * t * (t * (6.0 * t - 15.0) + 10.0)


def refresh_low_bits(z, rng):
    """Replace the bits of ``z`` below ``2^-40`` by fresh uniform bits.

    Iterating ``z -> ell z mod 1`` in floating point shifts out one bit per
    step; without fresh bits every orbit collapses onto 0 after ~53 steps.
    """
    return np.floor(z / LOW_BITS) * LOW_BITS + rng.random(np.shape(z)) * LOW_BITS


def _base_step(sys: FiberedSystem, z, rng):
    return np.mod(refresh_low_bits(sys.base_map(z), rng), 1.0)


def allocate_arcs(kappa: float, c0: float):
    """Arc lengths ``(|C|, |B|, gap)``: the slack ``kappa - c0`` is split 1 : 1 : 3."""
    if not (0.0 < kappa < 1.0 and 0.0 < c0 < 1.0):
        raise InvalidParams("kappa and c0 must lie in (0, 1)")
    slack = 1.0 - (1.0 - kappa) - c0
    if slack <= 0.0:
        raise InfeasibleMeasures(
            f"need m(C) > 1 - kappa = {1 - kappa:.6g} and m(B) > c0 = {c0:.6g} on disjoint arcs "
            f"with a gap; the budget (1 - kappa) + c0 = {1 - kappa + c0:.6g} must be < 1")
    return (1.0 - kappa) + slack / 5.0, c0 + slack / 5.0, 3.0 * slack / 5.0


def _orbit_points(k: int, q: int, ell: int):
    """Orbit of the periodic point ``k / (ell^q - 1)`` by exact integer arithmetic."""
    den = ell**q - 1
    out = []
    num = k
    for _ in range(q):
        out.append(num / den)
        num = (num * ell) % den
    return out


def _fiber_composite(sys: FiberedSystem, orbit, x):
    for z in orbit:
        x = sys.fiber_lift(np.full(np.shape(x), z), x)
    return x


def _arcs_disjoint(a, b, center, eps) -> bool:
    """Lifted arc ``[a, b]`` misses ``B(center, eps) + Z``."""
    if b - a + 2 * eps >= 1.0:
        return False
    lo, hi = center - eps, center + eps
    k = math.floor(a - hi)
    for j in range(k - 1, k + 3):
        if a <= hi + j and lo + j <= b:
            return False
    return True


def _find_witness(sys: FiberedSystem, q_max: int = 12) -> Witness:
    ell = sys.base_degree
    s0 = sys.s0
    for q in range(1, q_max + 1):
        best = None
        for k in range(ell**q - 1):
            orbit = _orbit_points(k, q, ell)
            z = orbit[0]
            if not sys.in_C(z):
                continue
            pos = (z - sys.offset) % 1.0
            d_boundary = min(pos, sys.c_length - pos)
            disp = float(_fiber_composite(sys, orbit, np.array(s0))) - s0
            if abs(disp - round(disp)) < 1e-6:
                continue  # D fixes s0
            lo, hi = 0.0, 0.25
            if not _arcs_disjoint(*_fiber_composite(sys, orbit, np.array([s0 - 1e-12, s0 + 1e-12])), s0, 1e-12):
                continue
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                a, b = _fiber_composite(sys, orbit, np.array([s0 - mid, s0 + mid]))
                if _arcs_disjoint(a, b, s0, mid):
                    lo = mid
                else:
                    hi = mid
            cand = Witness(z, q, 0.5 * d_boundary, lo, disp)
            if best is None or min(cand.eps1, cand.eps2) > min(best.eps1, best.eps2):
                best = cand
        if best is not None:
            return best
    raise WitnessNotFound(f"no periodic base point of period <= {q_max} in C moves the source")


def _return_time(sys: FiberedSystem, eps: float, j1_radius: float, rng, boxes: int = 1000,
                 points: int = 16, k_max: int = 64) -> int:
    """Smallest ``K`` with every sample box meeting ``C x J1`` under ``f^K``."""
    zc = rng.random(boxes)
    xc = rng.random(boxes)
    z = np.mod(zc[:, None] + eps * rng.random((boxes, points)), 1.0)
    x = xc[:, None] + eps * rng.random((boxes, points))
    for K in range(k_max + 1):
        xm = np.mod(x, 1.0)
        far = np.abs(np.mod(xm - sys.s0 + 0.5, 1.0) - 0.5) > j1_radius
        if np.all(np.any(sys.in_C(z) & far, axis=1)):
            return K
        x = sys.fiber_lift(z, x)
        z = _base_step(sys, z, rng)
    raise WitnessNotFound(f"sample boxes did not all reach C x J1 within {k_max} steps")


def _fiber_derivative_max(sys: FiberedSystem, grid: int = 2048) -> float:
    z = np.linspace(0.0, 1.0, grid, endpoint=False)
    th = np.linspace(0.0, 1.0, 256, endpoint=False)
    a, b, c, d = sys.matrices(z)
    v1, v2 = np.cos(np.pi * th)[:, None], np.sin(np.pi * th)[:, None]
    w1, w2 = a * v1 + b * v2, c * v1 + d * v2
    det = a * d - b * c
    return float(np.max(det / (w1 * w1 + w2 * w2)))


def build_system(kappa: float, c0: float, alpha: float, base_degree: int = 2, seed: int = 0,
                 collar: float = COLLAR, q_max: int = 12, boxes: int = 1000) -> FiberedSystem:
    """Construct the fibered system and verify the measure, witness and return-time conditions."""
    if alpha <= 0:
        raise InvalidParams("alpha must be positive")
    if int(base_degree) != base_degree or base_degree < 2:
        raise InvalidParams("base_degree must be an integer >= 2")
    c_len, b_len, gap = allocate_arcs(kappa, c0)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, 0xB0])))
    offset = float(rng.random())
    sys = FiberedSystem(int(base_degree), float(kappa), float(c0), float(alpha), offset, c_len, b_len, gap,
                        float(collar), MobiusCircleMap.hyperbolic(alpha), MobiusCircleMap(QUARTER_TURN))
    u0, s0 = sys.fiberC.sink, sys.fiberC.source
    if abs(float(sys.fiberB(u0)) - s0) > 1e-12:
        raise InvalidParams("B0 must carry the sink of C0 to its source")
    sys = _replace(sys, u0=u0, s0=s0)
    wit = _find_witness(sys, q_max)
    eps = min(wit.eps1, wit.eps2) / 20.0
    K = _return_time(sys, eps, eps / 2.0, rng, boxes=boxes)
    dmax = _fiber_derivative_max(sys)
    return _replace(sys, witness=wit, eps=eps, K=K, j1_radius=eps / 2.0, fiber_derivative_max=dmax,
                    partially_hyperbolic=bool(dmax < base_degree))


def _replace(sys, **kw):
    from dataclasses import replace
    return replace(sys, **kw)


def identity_control(sys: FiberedSystem) -> FiberedSystem:
    """Same geometry with identity fibers: every step just translates by ``t``."""
    eye = MobiusCircleMap(np.eye(2))
    return _replace(sys, fiberC=eye, fiberB=eye, fiber_derivative_max=1.0)


# --------------------------------------------------------------------------- simulation


def _streams(seed: int, chunk: int, x_stream: int = 0):
    rz = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, chunk, 0])))
    rx = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, chunk, 1 + x_stream])))
    return rz, rx


def _chunk_sizes(samples: int, chunk: int = CHUNK):
    if samples < 1:
        raise InvalidParams("samples must be >= 1")
    sizes = [chunk] * (samples // chunk)
    if samples % chunk:
        sizes.append(samples % chunk)
    return sizes


def _simulate_chunk(sys, ts, n_steps, size, seed, chunk, record_every=0, box=None, x_stream=0):
    """Coupled lifts for each ``t`` in ``ts`` from shared initial points and base orbit.

    Returns ``(S, records, min_gap)``: final sums ``S[k] = x_n - x_0`` for each
    ``t``, their values at multiples of ``record_every`` and, when two values of
    ``t`` are given, the running minimum over steps of ``S[0] - S[1]``.
    """
    rz, rx = _streams(seed, chunk, x_stream)
    if box is None:
        z = rz.random(size)
        x0 = rx.random(size)
    else:
        eps, pts = box
        nb = -(-size // pts)
        zc = np.repeat(rz.random(nb), pts)[:size]
        xc = np.repeat(rx.random(nb), pts)[:size]
        z = np.mod(zc + eps * rz.random(size), 1.0)
        x0 = xc + eps * rx.random(size)
    xs = [x0.copy() for _ in ts]
    records = []
    min_gap = np.full(size, np.inf)
    for i in range(n_steps):
        a, b, c, d = sys.matrices(z)
        for k, t in enumerate(ts):
            x = xs[k]
            xs[k] = x + _displacement(a, b, c, d, x - np.floor(x)) + t
        if len(ts) == 2:
            min_gap = np.minimum(min_gap, xs[0] - xs[1])
        z = _base_step(sys, z, rz)
        if record_every and (i + 1) % record_every == 0:
            records.append(np.stack([x - x0 for x in xs]))
    S = np.stack([x - x0 for x in xs])
    return S, records, min_gap


def _run(sys, ts, n_steps, samples, seed, record_every=0, box=None, x_stream=0, threads: int = 1):
    sizes = _chunk_sizes(samples)
    jobs = [(sys, ts, n_steps, s, seed, i, record_every, box, x_stream) for i, s in enumerate(sizes)]
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(lambda a: _simulate_chunk(*a), jobs))
    else:
        parts = [_simulate_chunk(*a) for a in jobs]
    S = np.concatenate([p[0] for p in parts], axis=1)
    records = [np.concatenate([p[1][j] for p in parts], axis=1) for j in range(len(parts[0][1]))]
    min_gap = np.concatenate([p[2] for p in parts])
    return S, records, min_gap


def _mean_se(values):
    v = np.asarray(values, dtype=float)
    m = math.fsum(v) / len(v)
    if len(v) < 2:
        return m, 0.0
    var = math.fsum((v - m) ** 2) / (len(v) - 1)
    return m, math.sqrt(var / len(v))


@dataclass
class DriftResult:
    t: float
    n: int
    samples: int
    mean: float
    se: float
    ci: tuple


def drift_samples(sys: FiberedSystem, t: float, n: int, samples: int, seed: int = 0,
                  x_stream: int = 0, threads: int = 1) -> np.ndarray:
    """Per-sample ``S_n(t, z, x) / n``."""
    if n < 1:
        raise InvalidParams("n must be >= 1")
    S, _, _ = _run(sys, [t], n, samples, seed, x_stream=x_stream, threads=threads)
    return S[0] / n


def drift(sys: FiberedSystem, t: float, n: int, samples: int, seed: int = 0,
          x_stream: int = 0, threads: int = 1) -> DriftResult:
    """Mean of ``S_n / n`` over uniform ``(z, x)`` with a 95% normal CI."""
    m, se = _mean_se(drift_samples(sys, t, n, samples, seed, x_stream, threads))
    return DriftResult(float(t), int(n), int(samples), m, se, (m - 1.96 * se, m + 1.96 * se))


def default_delta(sys: FiberedSystem, L: int) -> float:
    return math.exp(-L * sys.alpha / 3.0)


def block_length(sys: FiberedSystem, L: int) -> int:
    return 2 * L + 1 + sys.K


@dataclass
class DriftExperiment:
    L: int
    delta: float
    N0: int
    n_blocks: int
    samples: int
    seed: int
    results: dict = field(default_factory=dict)


@dataclass
class ZResult:
    L: int
    delta: float
    N0: int
    samples: int
    fraction: float
    ci: tuple
    min_Z: float
    count_negative: int


def _box(sys: FiberedSystem, box_points: int):
    eps = sys.eps if sys.eps else 1e-3
    return (eps, box_points)


def z_experiment(sys: FiberedSystem, L: int, delta: float | None = None, samples: int = 100_000,
                 seed: int = 0, box_points: int = 16, threads: int = 1) -> ZResult:
    """Fraction of sampled points with ``Z = S_{N0}(delta) - S_{N0}(-delta) >= 1``.

    Points are drawn in groups of ``box_points`` from small product boxes of
    side ``eps``.
    """
    if L < 1:
        raise InvalidParams("L must be >= 1")
    delta = default_delta(sys, L) if delta is None else float(delta)
    if not (0.0 < delta < 0.5):
        raise InvalidParams("delta must lie in (0, 1/2)")
    N0 = block_length(sys, L)
    S, _, _ = _run(sys, [delta, -delta], N0, samples, seed, box=_box(sys, box_points), threads=threads)
    Z = S[0] - S[1]
    hits = int(np.count_nonzero(Z >= 1.0))
    ci = binomtest(hits, samples).proportion_ci(0.95, method="wilson")
    return ZResult(L, delta, N0, samples, hits / samples, (float(ci.low), float(ci.high)),
                   float(Z.min()), int(np.count_nonzero(Z < 0)))


@dataclass
class YResult:
    L: int
    delta: float
    N0: int
    mean_Y: np.ndarray  # E[Y_n], n = 0..n_blocks
    increments: np.ndarray  # E[Y_{n+1}] - E[Y_n]
    increment_mean: float
    increment_ci: tuple
    monotone: bool  # every sample has Y non-decreasing
    min_X: float


def y_process(sys: FiberedSystem, L: int, delta: float | None = None, n_blocks: int = 20,
              samples: int = 100_000, seed: int = 0, box_points: int = 16, threads: int = 1) -> YResult:
    """``X_n = S_{n N0}(delta) - S_{n N0}(-delta)`` and ``Y_n = floor(X_n)`` at block ends."""
    delta = default_delta(sys, L) if delta is None else float(delta)
    N0 = block_length(sys, L)
    _, rec, _ = _run(sys, [delta, -delta], N0 * n_blocks, samples, seed, record_every=N0,
                     box=_box(sys, box_points), threads=threads)
    X = np.stack([np.zeros(samples)] + [r[0] - r[1] for r in rec])  # (n_blocks + 1, samples)
    Y = np.floor(X)
    inc = np.diff(Y, axis=0)
    mean_Y = np.array([math.fsum(row) / samples for row in Y])
    per_sample_rate = (Y[-1] - Y[0]) / n_blocks
    m, se = _mean_se(per_sample_rate)
    return YResult(L, delta, N0, mean_Y, np.diff(mean_Y), m, (m - 1.96 * se, m + 1.96 * se),
                   bool(np.all(inc >= 0)), float(X.min()))


@dataclass
class HolderFit:
    slope: float
    intercept: float
    rows: list  # (L, delta, drift_plus, drift_minus, Delta, ci_halfwidth)
    bound: float  # -6 log(1 - kappa) / alpha


def delta_drift(sys: FiberedSystem, delta: float, n: int, samples: int, seed: int = 0, threads: int = 1):
    """Coupled estimate of ``drift(delta) - drift(-delta)``: ``(plus, minus, Delta, se)``."""
    S, _, _ = _run(sys, [delta, -delta], n, samples, seed, threads=threads)
    plus, _ = _mean_se(S[0] / n)
    minus, _ = _mean_se(S[1] / n)
    diff, se = _mean_se((S[0] - S[1]) / n)
    return plus, minus, diff, se


def holder_fit(sys: FiberedSystem, L_range, samples: int = 100_000, seed: int = 0,
               n_factor: int = 50, threads: int = 1) -> HolderFit:
    """Slope of ``log Delta(delta_L)`` against ``log delta_L`` with ``delta_L = e^{-L alpha/3}``."""
    Ls = [int(L) for L in L_range]
    if len(Ls) < 2:
        raise InvalidParams("need at least two values of L")
    steps = np.diff(Ls)
    if np.any(steps != steps[0]) or steps[0] == 0:
        raise InvalidParams("L_range must be an arithmetic progression")
    rows = []
    for L in Ls:
        delta = default_delta(sys, L)
        n = n_factor * block_length(sys, L)
        plus, minus, diff, se = delta_drift(sys, delta, n, samples, seed + L, threads)
        if diff <= 0 or diff < 2.0 * se:
            raise DegenerateFit(f"Delta at L={L} ({diff:.3e}) is below the noise floor ({se:.3e}); "
                                "increase samples")
        rows.append((L, delta, plus, minus, diff, 1.96 * se))
    logd = np.log([r[1] for r in rows])
    logD = np.log([r[4] for r in rows])
    slope, intercept = np.polyfit(logd, logD, 1)
    return HolderFit(float(slope), float(intercept), rows, -6.0 * math.log(1.0 - sys.kappa) / sys.alpha)
