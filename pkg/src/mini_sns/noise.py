"""Transport-noise families and the truncated cylindrical Brownian motion.

Each noise field is zeta_n = eps_n * (d psi_n / dy, -d psi_n / dx) for a
polynomial stream function psi_n, so div zeta_n = 0 identically.  Brownian
increments come from per-(seed, sample, mode) Philox streams and are always
generated on the finest requested grid; coarser paths are pairwise sums.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
import sympy
from numpy.polynomial import polynomial as P

log = logging.getLogger(__name__)

_X, _Y = sympy.symbols("x y")

BUILTIN_STREAMS = {
    "uniform_x": "y",
    "uniform_y": "-x",
    "strain": "(x - 1/2)*(y - 1/2)",
    "rotation": "((x - 1/2)**2 + (y - 1/2)**2)/2",
    "cell": "16*x**2*(1 - x)**2*y**2*(1 - y)**2",
    "cell_x": "16*x**2*(1 - x)**2*y**2*(1 - y)**2*(2*x - 1)",
    "cell_y": "16*x**2*(1 - x)**2*y**2*(1 - y)**2*(2*y - 1)",
    "cell_xy": "16*x**2*(1 - x)**2*y**2*(1 - y)**2*(2*x - 1)*(2*y - 1)",
}

# Fields that do not vanish on the boundary of the unit square.
DEFAULT_FAMILY = [("uniform_x", 0.3), ("uniform_y", 0.3), ("strain", 0.3), ("rotation", 0.3)]
# Comparison family: stream functions (and fields) vanishing on the boundary.
BOUNDARY_FAMILY = [("cell", 0.3), ("cell_x", 0.3), ("cell_y", 0.3), ("cell_xy", 0.3)]

NAMED_FAMILIES = {"default": DEFAULT_FAMILY, "boundary": BOUNDARY_FAMILY, "none": []}


def parse_stream_function(stream) -> tuple[np.ndarray, str]:
    """Return the coefficient array c[i, j] of x^i y^j and a printable expression.

    ``stream`` is a builtin name, a sympy-parsable string, or a 2D coefficient array.
    """
    if isinstance(stream, str):
        text = BUILTIN_STREAMS.get(stream, stream)
        try:
            expr = sympy.sympify(text, locals={"x": _X, "y": _Y})
        except (sympy.SympifyError, SyntaxError, TypeError) as exc:
            raise ValueError(f"cannot parse stream function {stream!r}") from exc
        if expr.free_symbols - {_X, _Y}:
            raise ValueError(f"stream function {stream!r} depends on symbols other than x, y")
        if not expr.is_polynomial(_X, _Y):
            raise ValueError(f"stream function {stream!r} is not a polynomial in x, y")
        poly = sympy.Poly(expr, _X, _Y)
        deg = max(poly.degree(_X), poly.degree(_Y), 0)
        coef = np.zeros((deg + 1, deg + 1))
        for (i, j), c in poly.terms():
            coef[i, j] = float(c)
        return coef, str(expr)
    coef = np.atleast_2d(np.asarray(stream, dtype=float))
    if coef.ndim != 2 or not np.all(np.isfinite(coef)):
        raise ValueError("coefficient stream function must be a finite 2D array")
    terms = [f"{float(c)!r}*x**{i}*y**{j}" for (i, j), c in np.ndenumerate(coef) if c != 0.0]
    return coef, " + ".join(terms) or "0"


@dataclass(frozen=True, eq=False)
class NoiseMode:
    stream: np.ndarray  # psi coefficients c[i, j]
    amplitude: float
    expression: str
    zeta_x: np.ndarray = field(init=False)  # d psi / dy
    zeta_y: np.ndarray = field(init=False)  # -d psi / dx

    def __post_init__(self):
        object.__setattr__(self, "zeta_x", P.polyder(self.stream, axis=1))
        object.__setattr__(self, "zeta_y", -P.polyder(self.stream, axis=0))

    @property
    def degree(self) -> int:
        """Total polynomial degree of the field."""
        deg = -1
        for c in (self.zeta_x, self.zeta_y):
            nz = np.argwhere(c != 0.0)
            if len(nz):
                deg = max(deg, int(nz.sum(axis=1).max()))
        return max(deg, 0)

    def __call__(self, x, y) -> np.ndarray:
        """(2, ...) values of amplitude * curl(psi)."""
        a = self.amplitude
        return np.stack([a * P.polyval2d(x, y, self.zeta_x), a * P.polyval2d(x, y, self.zeta_y)])

    def gradient(self, x, y) -> np.ndarray:
        """(2, 2, ...) array, entry [c, k] = d zeta_c / d x_k."""
        a = self.amplitude
        out = []
        for c in (self.zeta_x, self.zeta_y):
            out.append([a * P.polyval2d(x, y, P.polyder(c, axis=0)), a * P.polyval2d(x, y, P.polyder(c, axis=1))])
        return np.array(out)

    def divergence(self, x, y) -> np.ndarray:
        g = self.gradient(x, y)
        return g[0, 0] + g[1, 1]


@dataclass(frozen=True, eq=False)
class NoiseModel:
    modes: tuple[NoiseMode, ...]
    C_zeta: float
    kappa_estimate: float | None = None
    kappa_level: int | None = None

    @property
    def N(self) -> int:
        return len(self.modes)

    @property
    def max_degree(self) -> int:
        return max((m.degree for m in self.modes), default=0)

    def scaled(self, s: float) -> "NoiseModel":
        """Same fields with every amplitude multiplied by s (kappa must be re-estimated)."""
        return build_noise_family([(m.stream, m.amplitude * s) for m in self.modes])

    def with_kappa(self, level: int = 3) -> "NoiseModel":
        return replace(self, kappa_estimate=estimate_kappa(self, level), kappa_level=level)


def w1inf_norm(mode: NoiseMode, grid: int = 201) -> float:
    """Dense-grid estimate of sup|zeta| + sup|grad zeta| (Frobenius) over the unit square."""
    s = np.linspace(0.0, 1.0, grid)
    X, Y = np.meshgrid(s, s)
    val = np.sqrt((mode(X, Y) ** 2).sum(axis=0)).max()
    grad = np.sqrt((mode.gradient(X, Y) ** 2).sum(axis=(0, 1))).max()
    return float(val + grad)


def build_noise_family(spec) -> NoiseModel:
    """Build a NoiseModel from ``[(stream_function, amplitude), ...]`` or a family name."""
    if isinstance(spec, str):
        if spec not in NAMED_FAMILIES:
            raise ValueError(f"unknown noise family {spec!r}; choose from {sorted(NAMED_FAMILIES)}")
        spec = NAMED_FAMILIES[spec]
    modes = []
    for item in spec:
        if isinstance(item, dict):
            stream, amp = item["stream_function"], item["amplitude"]
        else:
            stream, amp = item
        amp = float(amp)
        if not np.isfinite(amp):
            raise ValueError("noise amplitude must be finite")
        coef, expr = parse_stream_function(stream)
        modes.append(NoiseMode(coef, amp, expr))
    C_zeta = float(sum(w1inf_norm(m) ** 2 for m in modes))
    if not modes:
        return NoiseModel((), 0.0, kappa_estimate=0.0)
    return NoiseModel(tuple(modes), C_zeta)


def estimate_kappa(noise: NoiseModel, level: int = 3) -> float:
    """Discrete smallness surrogate: sup over v of ||(1/2) sum_n L_n^2 v|| / ||A_h v||.

    Computed densely from the Stokes eigenbasis at the given mesh level, where
    every L_n is represented by the skew matrix X^T T_n X.
    """
    if noise.N == 0:
        return 0.0
    from .lab import stokes_eigendecomposition
    from .operators import assemble_level

    ops = assemble_level(level, noise)
    dec = stokes_eigendecomposition(level)
    X = dec.eigenvectors
    Q = np.zeros((dec.count, dec.count))
    for T in ops.T:
        L = X.T @ (T @ X)
        Q += 0.5 * (L @ L)
    kappa = float(np.linalg.norm(Q / dec.eigenvalues[None, :], 2))
    if kappa >= 1.0:
        log.warning("kappa_estimate = %.3f >= 1: noise smallness violated at the discrete level", kappa)
    return kappa


@dataclass(frozen=True, eq=False)
class BrownianDriver:
    base_seed: int
    sample_index: int
    dt: float
    increments: np.ndarray  # (steps, N), variance dt

    @property
    def steps(self) -> int:
        return self.increments.shape[0]

    @property
    def N(self) -> int:
        return self.increments.shape[1]

    def coarsen(self, factor: int) -> "BrownianDriver":
        """Pairwise dyadic summation; ``factor`` must be a power of two dividing ``steps``."""
        if factor < 1 or factor & (factor - 1) or self.steps % factor:
            raise ValueError(f"coarsening factor {factor} must be a power of two dividing {self.steps}")
        inc = self.increments
        dt = self.dt
        while factor > 1:
            inc = inc[0::2] + inc[1::2]
            dt *= 2.0
            factor //= 2
        return BrownianDriver(self.base_seed, self.sample_index, dt, inc)


def mode_generator(base_seed: int, sample_index: int, mode: int) -> np.random.Generator:
    """Counter-based stream keyed by (base_seed, sample_index, mode); draw k is step k."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([base_seed, sample_index, mode])))


def sample_path(base_seed: int, sample_index: int, steps: int, dt: float, N: int, finest_steps: int | None = None) -> BrownianDriver:
    """Brownian increments for one Monte Carlo sample.

    Increments are drawn on ``finest_steps`` (default ``steps``) sub-steps and
    summed pairwise down to ``steps``, so paths requested at different
    resolutions from the same finest grid are exactly nested.
    """
    if steps < 1 or dt <= 0:
        raise ValueError("need steps >= 1 and dt > 0")
    finest = steps if finest_steps is None else int(finest_steps)
    factor = finest // steps
    if factor * steps != finest or factor & (factor - 1):
        raise ValueError("finest_steps must be a power-of-two multiple of steps")
    dt_fine = dt / factor
    inc = np.empty((finest, N))
    for n in range(N):
        inc[:, n] = mode_generator(base_seed, sample_index, n).standard_normal(finest) * np.sqrt(dt_fine)
    return BrownianDriver(base_seed, sample_index, dt_fine, inc).coarsen(factor)
