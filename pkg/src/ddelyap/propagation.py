"""Solution operators for z'(t) = A(t) z(t) + B(t) z(t-1) on the segment fibers.

The unit-interval operator is realized by the method of steps: over one delay
span the delayed term is known forcing read from the stored segment nodes, so
the equation reduces to a linear ODE integrated with fixed-step classical
Runge-Kutta aligned to the grid.  Stage values of the history between nodes
come from local cubic interpolation; integration substeps are split at the
switch times of piecewise-constant drivers so no step straddles a coefficient
jump.  Both fibers share one integration core, which makes the intertwining
of the embedding with the unit steps exact at the discrete level, and makes
integer-time cocycle composition exact by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .drivers import Driver, spectral_norm
from .fibers import ContinuousSegment, GridSpec, LpSegment, fiber_dim, trapezoid_weights

__all__ = [
    "FundamentalMatrix",
    "StepBounds",
    "UnitStepOperator",
    "fundamental_matrix",
    "step_bounds",
    "unit_step_c",
    "unit_step_l",
    "unit_step_block",
    "propagate",
    "evolve_l_to_c",
    "assemble_unit_operator",
]

_TIME_EPS = 1e-12


def _cubic_weights(t: float) -> tuple[float, float, float, float]:
    # Lagrange weights on 4 consecutive integer abscissae, local coordinate t in [0, 3]
    return (
        -(t - 1.0) * (t - 2.0) * (t - 3.0) / 6.0,
        t * (t - 2.0) * (t - 3.0) / 2.0,
        -t * (t - 1.0) * (t - 3.0) / 2.0,
        t * (t - 1.0) * (t - 2.0) / 6.0,
    )


def _nodes_eval(values: np.ndarray, xi: float) -> np.ndarray:
    """Evaluate nodal data at fractional index xi by local cubic interpolation.

    `values` has node-major shape (n_nodes, ...); xi = 0 .. n_nodes - 1.
    Exact whenever xi is an integer.
    """
    last = values.shape[0] - 1
    xi = min(max(xi, 0.0), float(last))
    i = int(math.floor(xi))
    if float(i) == xi:
        return values[i]
    i0 = min(max(i - 1, 0), last - 3)
    w = _cubic_weights(xi - i0)
    return w[0] * values[i0] + w[1] * values[i0 + 1] + w[2] * values[i0 + 2] + w[3] * values[i0 + 3]


def _rk4_piece(driver, a, b, z, forcing, stage_times_constant):
    """One RK4 step of z' = A(t) z + g(t) over [a, b] with no coefficient jump inside."""
    delta = b - a
    mid = 0.5 * (a + b)
    if stage_times_constant:
        A_a, B_a = driver.matrices(mid)
        A_m, B_m, A_b, B_b = A_a, B_a, A_a, B_a
    else:
        A_a, B_a = driver.matrices(a)
        A_m, B_m = driver.matrices(mid)
        A_b, B_b = driver.matrices(b)
    if forcing is None:
        k1 = A_a @ z
        k2 = A_m @ (z + 0.5 * delta * k1)
        k3 = A_m @ (z + 0.5 * delta * k2)
        k4 = A_b @ (z + delta * k3)
    else:
        g_a = B_a @ forcing(a)
        g_m = B_m @ forcing(mid)
        g_b = B_b @ forcing(b)
        k1 = A_a @ z + g_a
        k2 = A_m @ (z + 0.5 * delta * k1) + g_m
        k3 = A_m @ (z + 0.5 * delta * k2) + g_m
        k4 = A_b @ (z + delta * k3) + g_b
    return z + (delta / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _rk4_span(driver, a, b, z, forcing):
    """Integrate over [a, b], splitting at driver switch times."""
    cuts = driver.switch_times_in(a + _TIME_EPS, b - _TIME_EPS)
    piecewise = driver.piecewise_constant
    if cuts.size == 0:
        return _rk4_piece(driver, a, b, z, forcing, piecewise)
    times = np.concatenate([[a], cuts, [b]])
    for lo, hi in zip(times[:-1], times[1:]):
        if hi - lo < _TIME_EPS:
            continue
        z = _rk4_piece(driver, lo, hi, z, forcing, piecewise)
    return z


def _advance_unit(driver, base_time: float, z0: np.ndarray, hist: np.ndarray) -> np.ndarray:
    """Nodal solution of the forced equation over [base_time, base_time + 1].

    z0: (N, K) initial value at base_time; hist: (M+1, N, K) nodal values of
    the delayed source on [base_time - 1, base_time].  Returns (M+1, N, K)
    with row j the solution at base_time + j/M (row 0 is z0).
    """
    M = hist.shape[0] - 1

    def forcing(t):
        return _nodes_eval(hist, (t - base_time) * M)

    out = np.empty((M + 1,) + z0.shape)
    out[0] = z0
    z = z0
    h = 1.0 / M
    for j in range(M):
        z = _rk4_span(driver, base_time + j * h, base_time + (j + 1) * h, z, forcing)
        out[j + 1] = z
    return out


@dataclass(frozen=True)
class FundamentalMatrix:
    """Solution operator of the undelayed part z' = A(t) z between two times."""

    t1: float
    t2: float
    matrix: np.ndarray


def fundamental_matrix(driver: Driver, t1: float, t2: float, substeps: int | None = None) -> FundamentalMatrix:
    """Integrate Z' = A(t) Z, Z(t1) = I over [t1, t2] with t2 - t1 <= 1."""
    if t2 < t1:
        raise ValueError("t2 must be >= t1")
    if t2 - t1 > 1.0 + _TIME_EPS:
        raise ValueError("spans longer than one unit are composed by the caller")
    driver._check_inside(t1)
    driver._check_inside(t2)
    N = driver.dimension
    Z = np.eye(N)
    if t2 > t1:
        n = substeps if substeps is not None else max(1, int(math.ceil((t2 - t1) * 64 - _TIME_EPS)))
        h = (t2 - t1) / n
        for j in range(n):
            Z = _rk4_span(driver, t1 + j * h, t1 + (j + 1) * h, Z, None)
    return FundamentalMatrix(t1, t2, Z)


@dataclass(frozen=True)
class StepBounds:
    """One-step growth constants of the undelayed flow and the delay forcing.

    c is a grid-pair lower estimate of the sup of fundamental-matrix norms
    over sub-spans of the unit interval; c_upper is its analytic exponential
    upper bound; d is the trapezoid q-norm of the B-coefficient over the
    incoming delay span.
    """

    c: float
    d: float
    c_upper: float


def step_bounds(driver: Driver, base_time: float, grid: GridSpec) -> StepBounds:
    driver._check_inside(base_time)
    driver._check_inside(base_time + 1.0)
    M, h = grid.M, grid.h
    N = driver.dimension

    # one integration pass gives all grid-time fundamental matrices
    phis = np.empty((M + 1, N, N))
    phis[0] = np.eye(N)
    Z = np.eye(N)
    for j in range(M):
        Z = _rk4_span(driver, base_time + j * h, base_time + (j + 1) * h, Z, None)
        phis[j + 1] = Z
    inv_phis = np.linalg.inv(phis)
    lo, hi = np.triu_indices(M + 1, k=1)
    pair_mats = phis[hi] @ inv_phis[lo]  # flow over [t_lo, t_hi] by composition
    norms = np.linalg.norm(pair_mats, ord=2, axis=(1, 2))
    c = max(1.0, float(np.max(norms)))

    q = driver.spec.q
    bq = np.array(
        [spectral_norm(driver.matrices(base_time + j * h)[1]) ** q for j in range(M + 1)]
    )
    d = float(np.dot(trapezoid_weights(grid), bq) ** (1.0 / q))
    c_upper = float(np.exp(driver.a_integral(base_time, base_time + 1.0)))
    return StepBounds(c=c, d=d, c_upper=c_upper)


def unit_step_c(driver: Driver, base_time: float, u: ContinuousSegment) -> ContinuousSegment:
    """One delay span forward on the continuous fiber."""
    _check_grid(driver, u.grid, u.dimension, base_time)
    hist = u.values[:, :, None]
    out = _advance_unit(driver, base_time, hist[-1], hist)
    return ContinuousSegment(u.grid, out[:, :, 0])


def unit_step_l(driver: Driver, base_time: float, u: LpSegment) -> LpSegment:
    """One delay span forward on the pair fiber.

    The head is the initial value and the stored density drives the delayed
    term; after one span the output head equals the output density at s = 0,
    so the image lies in the embedded range.
    """
    _check_grid(driver, u.grid, u.dimension, base_time)
    hist = u.density[:, :, None]
    out = _advance_unit(driver, base_time, u.head[:, None], hist)
    return LpSegment(u.grid, out[-1, :, 0], out[:, :, 0], u.p)


def _check_grid(driver, grid, dimension, base_time):
    if dimension != driver.dimension:
        raise ValueError(
            f"segment dimension {dimension} does not match driver dimension {driver.dimension}"
        )
    driver._check_inside(base_time)
    driver._check_inside(base_time + 1.0)


def _hermite(y0, m0, y1, m1, length, theta):
    t2 = theta * theta
    t3 = t2 * theta
    return (
        (2.0 * t3 - 3.0 * t2 + 1.0) * y0
        + (t3 - 2.0 * t2 + theta) * length * m0
        + (-2.0 * t3 + 3.0 * t2) * y1
        + (t3 - t2) * length * m1
    )


def _partial_step(driver, base_time, u, f):
    """Advance a segment by a fractional span 0 < f < 1.

    Grid-aligned fractions shift nodes exactly.  Otherwise the output nodes
    are re-interpolated: the old-segment side from its own nodes, the new
    solution by cubic Hermite between breakpoints that include every switch
    time, so no interpolation interval straddles a derivative jump.
    """
    grid = u.grid
    M, h = grid.M, grid.h
    is_lp = isinstance(u, LpSegment)
    hist = (u.density if is_lp else u.values)[:, :, None]
    z0 = (u.head if is_lp else u.values[-1])[:, None]

    def forcing(t):
        return _nodes_eval(hist, (t - base_time) * M)

    k_float = f * M
    aligned = abs(k_float - round(k_float)) < 1e-12 and round(k_float) >= 1
    if aligned:
        k = int(round(k_float))
        sol = np.empty((k + 1,) + z0.shape)
        sol[0] = z0
        z = z0
        for j in range(k):
            z = _rk4_span(driver, base_time + j * h, base_time + (j + 1) * h, z, forcing)
            sol[j + 1] = z
        out = np.empty_like(hist)
        out[: M + 1 - k] = hist[k:]
        out[M + 1 - k :] = sol[1:]
        head = sol[-1]
    else:
        n_sub = max(3, int(math.ceil(k_float)))
        h_sub = f / n_sub
        uniform = base_time + h_sub * np.arange(n_sub + 1)
        cuts = driver.switch_times_in(base_time + _TIME_EPS, base_time + f - _TIME_EPS)
        breaks = np.union1d(uniform, cuts)
        n_br = len(breaks)

        zs = np.empty((n_br,) + z0.shape)
        zs[0] = z0
        z = z0
        for j in range(n_br - 1):
            z = _rk4_span(driver, breaks[j], breaks[j + 1], z, forcing)
            zs[j + 1] = z

        # one-sided slopes per piece; piecewise-constant coefficients are read
        # at the piece midpoint so jumps never leak across a breakpoint
        right_slope = np.empty((n_br - 1,) + z0.shape)
        left_slope = np.empty((n_br - 1,) + z0.shape)
        for j in range(n_br - 1):
            lo, hi = breaks[j], breaks[j + 1]
            if driver.piecewise_constant:
                A_lo, B_lo = driver.matrices(0.5 * (lo + hi))
                A_hi, B_hi = A_lo, B_lo
            else:
                A_lo, B_lo = driver.matrices(lo)
                A_hi, B_hi = driver.matrices(hi)
            right_slope[j] = A_lo @ zs[j] + B_lo @ forcing(lo)
            left_slope[j] = A_hi @ zs[j + 1] + B_hi @ forcing(hi)

        out = np.empty_like(hist)
        for j in range(M + 1):
            tau = f + (-1.0 + j * h)
            if tau >= -1e-13:
                t_abs = base_time + min(max(tau, 0.0), f)
                piece = int(np.searchsorted(breaks, t_abs, side="right")) - 1
                piece = min(max(piece, 0), n_br - 2)
                length = breaks[piece + 1] - breaks[piece]
                theta = (t_abs - breaks[piece]) / length
                out[j] = _hermite(
                    zs[piece], right_slope[piece], zs[piece + 1], left_slope[piece], length, theta
                )
            else:
                out[j] = _nodes_eval(hist, (tau + 1.0) * M)
        head = zs[-1]

    if is_lp:
        return LpSegment(grid, head[:, 0], out[:, :, 0], u.p)
    return ContinuousSegment(grid, out[:, :, 0])


def propagate(driver: Driver, base_time: float, u, t: float):
    """Semiflow: the segment at time base_time + t, same fiber as the input.

    Fractional times take one partial step first, then unit steps, so integer
    times compose unit steps exactly.
    """
    if t < 0:
        raise ValueError(f"propagation time must be >= 0, got {t}")
    frac = t - math.floor(t)
    if frac < _TIME_EPS or frac > 1.0 - _TIME_EPS:
        frac = 0.0
    steps = int(round(t - frac))
    cur = u
    pos = base_time
    if frac > 0.0:
        cur = _partial_step(driver, pos, cur, frac)
        pos += frac
    step = unit_step_l if isinstance(u, LpSegment) else unit_step_c
    for _ in range(steps):
        cur = step(driver, pos, cur)
        pos += 1.0
    return cur


def evolve_l_to_c(driver: Driver, base_time: float, u: LpSegment, t: float) -> ContinuousSegment:
    """Pair-fiber data evolved for t >= 1, returned as a continuous segment.

    One delay span smooths the state, after which the trajectory segment is
    continuous; later times ride the continuous-fiber semiflow.
    """
    if t < 1.0 - _TIME_EPS:
        raise ValueError(f"continuous output needs t >= 1, got {t}")
    first = unit_step_l(driver, base_time, u)
    w = ContinuousSegment(u.grid, first.density.copy())
    if abs(t - 1.0) < _TIME_EPS:
        return w
    return propagate(driver, base_time + 1.0, w, t - 1.0)


def unit_step_block(
    driver: Driver,
    base_time: float,
    fiber_kind: str,
    X: np.ndarray,
    grid: GridSpec,
) -> np.ndarray:
    """Unit step applied to a block of fiber coordinate vectors (columns of X)."""
    N = driver.dimension
    d = fiber_dim(grid, N, fiber_kind)
    X = np.asarray(X, dtype=float)
    squeeze = X.ndim == 1
    if squeeze:
        X = X[:, None]
    if X.shape[0] != d:
        raise ValueError(f"coordinate rows {X.shape[0]} != fiber dimension {d}")
    K = X.shape[1]
    if fiber_kind == "continuous":
        hist = X.reshape(grid.M + 1, N, K)
        z0 = hist[-1]
    else:
        z0 = X[:N]
        hist = X[N:].reshape(grid.M + 1, N, K)
    out = _advance_unit(driver, base_time, z0, hist)
    flat = out.reshape(-1, K)
    result = flat if fiber_kind == "continuous" else np.vstack([out[-1], flat])
    return result[:, 0] if squeeze else result


@dataclass
class UnitStepOperator:
    """Dense matrix of the one-unit-time solution operator on a fiber."""

    fiber_kind: str
    base_time: float
    grid: GridSpec
    dimension: int
    matrix: np.ndarray

    def apply(self, coords: np.ndarray) -> np.ndarray:
        return self.matrix @ coords

    def to_csv(self, path) -> None:
        np.savetxt(path, self.matrix, delimiter=",")


def assemble_unit_operator(
    driver: Driver, base_time: float, fiber_kind: str, grid: GridSpec
) -> UnitStepOperator:
    """Dense unit-step matrix: columns are images of coordinate basis segments."""
    d = fiber_dim(grid, driver.dimension, fiber_kind)
    matrix = unit_step_block(driver, base_time, fiber_kind, np.eye(d), grid)
    return UnitStepOperator(fiber_kind, base_time, grid, driver.dimension, matrix)


def _simpson_weights(grid: GridSpec) -> np.ndarray:
    if grid.M % 2 != 0:
        raise ValueError("Simpson weighting needs an even number of subintervals")
    w = np.full(grid.M + 1, 2.0)
    w[1::2] = 4.0
    w[0] = w[-1] = 1.0
    return w * (grid.h / 3.0)


def lc_operator_singular_values(driver: Driver, base_time: float, grid: GridSpec) -> np.ndarray:
    """Singular values of the one-step pair-to-continuous operator.

    Measured between the integral inner products (Euclidean head plus
    Simpson-weighted L2 density in; Simpson-weighted L2 segment out) so the
    values converge under grid refinement instead of scaling with node count.
    The decay profile is the computable stand-in for compactness of the
    smoothing step.
    """
    N = driver.dimension
    op = assemble_unit_operator(driver, base_time, "lp", grid)
    K = op.matrix[N:, :]  # density block: the continuous segment after one span
    w = _simpson_weights(grid)
    sq = np.sqrt(np.repeat(w, N))
    w_out = sq
    w_in = np.concatenate([np.ones(N), sq])
    weighted = (w_out[:, None] * K) / w_in[None, :]
    return np.linalg.svd(weighted, compute_uv=False)
