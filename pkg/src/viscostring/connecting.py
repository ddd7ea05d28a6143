"""Connecting-operator Gram matrices from boundary data alone.

For two controls f, g the product moment

    H^{f,g}(s,t) = int_0^L w^f(x,t) w^g(x,s) dx

satisfies, after differentiating the model and unwinding the memory
convolutions with the resolvent, a perturbed wave equation in the two time
variables.  Substituting H = exp(gamma(s+t)) W(s,t) the equation becomes

    W_tt = W_ss + int_0^t R2(t-r) W(s,r) dr - int_0^s R2(s-r) W(r,t) dr + G

with zero data on s = 0 and t = 0, where R2(r) = exp(-gamma r) R''(r) and the
affine term collapses (all derivatives expanded through d/dt (N*h) = h + N1*h
and every resolvent application inverted analytically) to

    G(s,t) = exp(-gamma(s+t)) [ f(t) y^g(s) - y^f(t) g(s) ].

Both f-factors are needed on [0,T] only while the g-factors run over
[0, 2T]: the characteristic triangle of the diagonal point (T,T) reaches
s = 2T, which is why responses must be recorded on a doubled window.

The diagonal values H^{f,g}(T,T) = <C_T f, g> assemble the Gram matrix of the
connecting operator C_T for a control basis, the data side of the coefficient
reconstruction.  ``gram_oracle`` computes the same Gram from forward-solver
snapshots (it knows q; used for validation only).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import GridMismatchError, NumericalFailure
from .grid import (
    Sampled1D,
    Sampled2D,
    TimeGrid,
    TriangleAccumulator,
    convolve_values,
    trap_weights,
)
from .kernels import MemoryKernel, ResolventData, resolvent
from .forward import StringProblem, solve_mild

__all__ = [
    "ControlBasis",
    "hat_basis",
    "pw_linear_products",
    "ResponseTable",
    "synthesize_table",
    "SeparableField",
    "phi",
    "psi",
    "affine_chain",
    "BlagoSolution",
    "blago_solve",
    "ConnectingGram",
    "gram_from_data",
    "gram_oracle",
]


# ---------------------------------------------------------------------------
# Control basis and response data
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ControlBasis:
    """Piecewise-linear hat controls on [0, T_max].

    n tents peaking at interior grid nodes close to the uniform lattice
    i*T_max/(n+1), each vanishing at 0 (forward-solver requirement) and at
    T_max.  Knots are snapped to grid nodes so that every kink of a control
    (and of its piecewise-constant response) sits on a quadrature node.
    Supports are nested: e_1..e_k span the controls supported in
    (0, knots[k+1]).
    """

    grid: TimeGrid
    knots: np.ndarray
    samples: np.ndarray = field(repr=False)
    kind: str = "hat"

    def __post_init__(self):
        s = np.array(self.samples, dtype=float)
        kn = np.array(self.knots, dtype=float)
        if s.ndim != 2 or s.shape[1] != self.grid.n + 1:
            raise GridMismatchError(
                f"basis samples must be (n, {self.grid.n + 1}), got {s.shape}"
            )
        if kn.shape != (s.shape[0] + 2,) or np.any(np.diff(kn) <= 0):
            raise GridMismatchError("basis needs n+2 strictly increasing knots")
        if np.any(np.abs(s[:, 0]) > 0):
            raise GridMismatchError("basis controls must vanish at t = 0")
        s.flags.writeable = False
        kn.flags.writeable = False
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "knots", kn)

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def spacing(self) -> float:
        """Nominal center spacing T_max/(n+1) (knots are snapped to nodes)."""
        return self.grid.t_max / (self.n + 1)

    def centers(self) -> np.ndarray:
        return self.knots[1:-1]

    def dual_abscissae(self) -> np.ndarray:
        """First-moment points of the elements: <t, e_i>/<1, e_i>.

        A mass-weighted average <f, e_i>/<1, e_i> equals f at this abscissa
        exactly for affine f, which is what the steering readout relies on.
        """
        t = self.grid.nodes()[None, :].repeat(self.n, axis=0)
        return pw_linear_products(self.samples, t, self.grid.dt).diagonal() / self.element_masses()

    def active(self, T: float) -> np.ndarray:
        """Indices of hats supported inside (0, T] (support end <= T + dt/2)."""
        tol = 0.5 * self.grid.dt
        return np.nonzero(self.knots[2:] <= T + tol)[0]

    def mass_matrix(self) -> np.ndarray:
        """Exact L2(0, T_max) Gram of the basis (the samples are piecewise
        linear between nodes, so the cellwise Simpson sum is exact).  For a
        uniform knot lattice this is tridiag(spacing/6, 2*spacing/3)."""
        return pw_linear_products(self.samples, self.samples, self.grid.dt)

    def element_masses(self) -> np.ndarray:
        """<1, e_i>, exact for the piecewise-linear samples."""
        w = trap_weights(self.grid.n + 1, self.grid.dt)
        return self.samples @ w

    def sampled_on(self, grid2: TimeGrid) -> np.ndarray:
        """Zero-extend the basis samples onto a longer grid (same step)."""
        if not self.grid.compatible_step(grid2) or grid2.n < self.grid.n:
            raise GridMismatchError("extension grid must share the step and be longer")
        out = np.zeros((self.n, grid2.n + 1))
        out[:, : self.grid.n + 1] = self.samples
        return out


def pw_linear_products(A: np.ndarray, B: np.ndarray, dt: float) -> np.ndarray:
    """Exact pairwise L2 inner products of piecewise-linear node functions.

    Rows of A and B are samples; on every cell the product is quadratic, so
    the cellwise Simpson sum dt/6 * (2 v0 w0 + v0 w1 + v1 w0 + 2 v1 w1) is
    exact."""
    a0, a1 = A[:, :-1], A[:, 1:]
    b0, b1 = B[:, :-1], B[:, 1:]
    return (dt / 6.0) * (2.0 * a0 @ b0.T + a0 @ b1.T + a1 @ b0.T + 2.0 * a1 @ b1.T)


def hat_basis(grid: TimeGrid, n: int) -> ControlBasis:
    """n interior tents with knots at the grid nodes nearest i*T_max/(n+1)."""
    if n < 1:
        raise GridMismatchError(f"basis size must be >= 1, got {n}")
    knot_idx = np.round(np.arange(n + 2) * grid.n / (n + 1)).astype(int)
    if np.any(np.diff(knot_idx) < 1):
        raise GridMismatchError(
            f"basis of size {n} does not fit on a grid of {grid.n} steps"
        )
    knots = knot_idx * grid.dt
    t = grid.nodes()
    a, c, b = knots[:-2, None], knots[1:-1, None], knots[2:, None]
    samples = np.clip(np.minimum((t - a) / (c - a), (b - t) / (b - c)), 0.0, None)
    samples[:, 0] = 0.0
    samples[:, -1] = 0.0
    return ControlBasis(grid=grid, knots=knots, samples=samples)


@dataclass(frozen=True)
class ResponseTable:
    """Boundary responses y^{e_i} for a control basis on the doubled window.

    This is the sole input of the data-driven inverse path; rows are sampled
    on [0, 2*T_max] (the kernel lives on the same grid).
    """

    basis: ControlBasis
    kernel: MemoryKernel
    Y: np.ndarray = field(repr=False)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        grid2 = self.kernel.grid
        y = np.array(self.Y, dtype=float)
        if grid2.n != 2 * self.basis.grid.n or not grid2.compatible_step(self.basis.grid):
            raise GridMismatchError("response grid must be the doubled basis grid")
        if y.shape != (self.basis.n, grid2.n + 1):
            raise GridMismatchError(
                f"response table must be ({self.basis.n}, {grid2.n + 1}), got {y.shape}"
            )
        if not np.all(np.isfinite(y)):
            raise GridMismatchError("response table contains non-finite samples")
        # Zero initial state shows up as y(0) = -f'(0+): identically 0 for
        # controls that start flat, the launch slope for the first hat.
        launch = float(np.max(np.abs(self.basis.samples[:, 1]))) / self.basis.grid.dt
        scale = max(float(np.max(np.abs(y))), 1e-30)
        if np.max(np.abs(y[:, 0])) > 1.5 * launch + 1e-9 * scale:
            raise GridMismatchError(
                "responses at t=0 exceed the launch slope of the basis; "
                "the data do not start from a zero state"
            )
        y.flags.writeable = False
        object.__setattr__(self, "Y", y)

    @property
    def grid2(self) -> TimeGrid:
        return self.kernel.grid


def synthesize_table(
    basis: ControlBasis,
    kernel: MemoryKernel,
    q,
    L: float,
    res: ResolventData | None = None,
    threads: int = 1,
    noise_sigma: float = 0.0,
    seed: int = 0,
    meta: dict | None = None,
) -> ResponseTable:
    """Generate the response table with the forward solver (ground truth path).

    The simulation horizon is 2*T_max, so 2*T_max <= L is required for the
    no-reflection window to be valid.
    """
    grid2 = kernel.grid
    t2 = grid2.t_max
    if t2 > L + 1e-12:
        raise GridMismatchError(
            f"synthetic data needs 2*T_max = {t2} <= L = {L} (no-reflection window)"
        )
    if res is None:
        res = resolvent(kernel)
    p = StringProblem(L=L, q=q, kernel=kernel, T=t2)
    controls = basis.sampled_on(grid2)

    def one(i: int) -> np.ndarray:
        f = Sampled1D(grid2, controls[i])
        return solve_mild(p, f, res=res).y.values

    rows = _parallel_map(one, basis.n, threads)
    Y = np.vstack(rows)
    if noise_sigma > 0.0:
        rng = np.random.default_rng(seed)
        noise = noise_sigma * rng.standard_normal(Y.shape)
        noise[:, 0] = 0.0
        Y = Y + noise
    info = {"provenance": "synthetic", "L": L, "noise_sigma": noise_sigma}
    if meta:
        info.update(meta)
    return ResponseTable(basis=basis, kernel=kernel, Y=Y, meta=info)


def _parallel_map(fn, count: int, threads: int) -> list:
    if threads <= 1 or count <= 1:
        return [fn(i) for i in range(count)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(count)))


# ---------------------------------------------------------------------------
# The affine chain, kept in separated-rank form
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SeparableField:
    """Rank-2 function F(s,t) = sum_k sign_k * s_k(s) * t_k(t).

    Every object in the chain (Phi, Psi, G) separates this way, which is what
    collapses the per-pair cost from O(m^3) to O(m^2).  ``materialize`` yields
    the dense Sampled2D on demand.
    """

    sgrid: TimeGrid
    tgrid: TimeGrid
    s_factors: tuple
    t_factors: tuple
    signs: tuple
    raw: dict = field(default_factory=dict, repr=False)

    def materialize(self) -> Sampled2D:
        vals = np.zeros((self.sgrid.n + 1, self.tgrid.n + 1))
        for sgn, sf, tf in zip(self.signs, self.s_factors, self.t_factors):
            vals += sgn * np.outer(sf, tf)
        return Sampled2D(self.sgrid, self.tgrid, vals)

    def values(self) -> np.ndarray:
        return self.materialize().values


def _chain_grids(f: Sampled1D, kernel: MemoryKernel):
    grid2 = kernel.grid
    if not f.grid.same_as(grid2):
        raise GridMismatchError("chain inputs must live on the doubled response grid")
    if grid2.n % 2 != 0:
        raise GridMismatchError("doubled response grid must have an even step count")
    m = grid2.n // 2
    return grid2, TimeGrid(grid2.dt, m)


def phi(f: Sampled1D, g: Sampled1D, yf: Sampled1D, yg: Sampled1D, k: MemoryKernel) -> SeparableField:
    """Phi(s,t) = int_0^t N(t-r) [f(r) y^g(s) - y^f(r) g(s)] dr
                = (N*f)(t) y^g(s) - (N*y^f)(t) g(s).

    All four inputs on the doubled grid; t is truncated to [0, T_max].
    """
    grid2, tgrid = _chain_grids(f, k)
    for other in (g, yf, yg):
        f.require_same_grid(other, "chain inputs")
    dt = grid2.dt
    m = tgrid.n
    A = convolve_values(k.N.values, f.values, dt)[: m + 1]
    B = convolve_values(k.N.values, yf.values, dt)[: m + 1]
    return SeparableField(
        sgrid=grid2,
        tgrid=tgrid,
        s_factors=(yg.values.copy(), g.values.copy()),
        t_factors=(A, B),
        signs=(1.0, -1.0),
        raw={"f": f.values, "yf": yf.values, "g": g.values, "yg": yg.values},
    )


def psi(phi_field: SeparableField, k: MemoryKernel) -> SeparableField:
    """Psi(s,t) = int_0^s N(s-r) Phi(r,t) dr (convolution in the first slot)."""
    dt = phi_field.sgrid.dt
    new_s = tuple(convolve_values(k.N.values, sf, dt) for sf in phi_field.s_factors)
    return SeparableField(
        sgrid=phi_field.sgrid,
        tgrid=phi_field.tgrid,
        s_factors=new_s,
        t_factors=phi_field.t_factors,
        signs=phi_field.signs,
        raw=phi_field.raw,
    )


def affine_chain(psi_field: SeparableField, res: ResolventData, k: MemoryKernel) -> SeparableField:
    """Affine term G of the final W-equation.

    Pushing the two exponential substitutions through the derivative/resolvent
    chain, every step inverts the previous one exactly:
      d/ds Psi = Phi + N1 *_s Phi, so the s-resolvent application returns Phi;
      d/dt of (N*h) factors gives h + N1*h, so the t-resolvent returns h.
    What survives is

        G(s,t) = exp(-gamma(s+t)) [ f(t) y^g(s) - y^f(t) g(s) ].

    No numerical differentiation occurs anywhere (the chain applies up to two
    derivatives, which would cost two orders of accuracy).
    """
    raw = psi_field.raw
    if not raw:
        raise GridMismatchError("affine chain needs the raw control/response factors")
    sgrid, tgrid = psi_field.sgrid, psi_field.tgrid
    m = tgrid.n
    es = np.exp(-res.gamma * sgrid.nodes())
    et = np.exp(-res.gamma * tgrid.nodes())
    return SeparableField(
        sgrid=sgrid,
        tgrid=tgrid,
        s_factors=(es * raw["yg"], es * raw["g"]),
        t_factors=(et * raw["f"][: m + 1], et * raw["yf"][: m + 1]),
        signs=(1.0, -1.0),
        raw=raw,
    )


# ---------------------------------------------------------------------------
# The two-variable wave solve on the data trapezoid
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BlagoSolution:
    """Solution of the two-variable wave identity on the data trapezoid.

    W is the weighted unknown, H = exp(gamma(s+t)) W the product moment.
    Nodes outside the trapezoid {0 <= t <= T, 0 <= s <= 2T - t} are zero.
    """

    W: Sampled2D
    H: Sampled2D
    gamma: float
    scheme: str
    iterations: int = 0

    def diagonal(self) -> np.ndarray:
        """H(t_k, t_k) for every time node: the connecting readout."""
        n_t = self.H.tgrid.n
        idx = np.arange(n_t + 1)
        return self.H.values[idx, idx]


def _triangle_field(values: np.ndarray, dt: float) -> np.ndarray:
    """All half-triangle integrals (1/2) int_{D(s_i,t_k)} of a sampled field."""
    n_s, n_t = values.shape[0] - 1, values.shape[1] - 1
    acc = TriangleAccumulator(values, dt)
    out = np.zeros_like(values)
    for k in range(1, n_t + 1):
        out[: n_s - k + 1, k] = acc.level(k)
    return out


def _conv_columns(r2: np.ndarray, w: np.ndarray, dt: float) -> np.ndarray:
    """(R2 *_t w)(s_i, t_k) for all nodes: causal convolution down each row."""
    n_t = w.shape[1] - 1
    out = np.zeros_like(w)
    for i in range(w.shape[0]):
        out[i, :] = convolve_values(r2[: n_t + 1], w[i, :], dt)
    return out


def _conv_rows(r2: np.ndarray, w: np.ndarray, dt: float) -> np.ndarray:
    """(R2 *_s w)(s_i, t_k) for all nodes: causal convolution up each column."""
    n_s = w.shape[0] - 1
    out = np.zeros_like(w)
    for k in range(w.shape[1]):
        out[:, k] = convolve_values(r2[: n_s + 1], w[:, k], dt)
    return out


def blago_solve(
    G,
    res: ResolventData,
    sigma_weight: float = 0.0,
    scheme: str = "auto",
    tol: float = 1e-12,
    max_iter: int = 60,
) -> BlagoSolution:
    """Solve the integral form of the two-variable wave identity

        W(s,t) = (1/2) int_{D(s,t)} [ (R2 *_t W) - (R2 *_s W) ] + (1/2) int_{D(s,t)} G

    on the trapezoid covered by the data.  Schemes:

      "march"      explicit lozenge marching in t (default for R2 != 0),
      "quadrature" single triangle quadrature (exact reduction when R2 == 0),
      "picard"     fixed-point sweeps on the weighted unknown
                   Y = exp(-sigma(s+t)) W; sigma_weight only conditions the
                   iteration, the converged H is independent of it,
      "auto"       quadrature if R2 vanishes on the window, else march.
    """
    Gfield = G if isinstance(G, Sampled2D) else G.materialize()
    sgrid, tgrid = Gfield.sgrid, Gfield.tgrid
    n_s, n_t = sgrid.n, tgrid.n
    dt = sgrid.dt
    r2 = res.R2.values
    if len(r2) < n_s + 1:
        raise GridMismatchError("resolvent grid does not cover the s-window")
    has_r2 = bool(np.any(r2[: n_s + 1]))

    if scheme == "auto":
        scheme = "march" if has_r2 else "quadrature"
    if scheme == "quadrature" and has_r2:
        raise NumericalFailure("quadrature scheme is exact only when R2 vanishes")

    gvals = Gfield.values
    iterations = 0
    if scheme == "quadrature":
        W = _triangle_field(gvals, dt)
    elif scheme == "march":
        W = np.zeros((n_s + 1, n_t + 1))
        # Seed level 1 from the triangle quadrature itself: the tau = 0 row of
        # the source is nonzero whenever a control launches with a slope
        # (y(0+) = -f'(0+)), and the lozenge recursion alone would miss it.
        row0 = gvals[:, 0]
        if n_t >= 1:
            W[1:n_s, 1] = 0.25 * dt * dt * (
                0.5 * row0[: n_s - 1] + row0[1:n_s] + 0.5 * row0[2:]
            )
        for k in range(1, n_t):
            Q = gvals[:, k].copy()
            if has_r2:
                Q += _memory_columns_level(r2, W, k, dt)
                Q -= convolve_values(r2[: n_s + 1], W[:, k], dt)
            W[1:n_s, k + 1] = (
                W[2:, k] + W[: n_s - 1, k] - W[1:n_s, k - 1] + dt * dt * Q[1:n_s]
            )
            W[n_s - k :, k + 1] = 0.0  # outside the data trapezoid
    elif scheme == "picard":
        W, iterations = _picard(gvals, r2, dt, sigma_weight, sgrid, tgrid, tol, max_iter)
    else:
        raise ValueError(f"unknown scheme {scheme!r}")

    t = tgrid.nodes()
    s = sgrid.nodes()
    H = np.exp(res.gamma * s)[:, None] * W * np.exp(res.gamma * t)[None, :]
    return BlagoSolution(
        W=Sampled2D(sgrid, tgrid, W),
        H=Sampled2D(sgrid, tgrid, H),
        gamma=res.gamma,
        scheme=scheme,
        iterations=iterations,
    )


def _memory_columns_level(r2: np.ndarray, W: np.ndarray, k: int, dt: float) -> np.ndarray:
    """(R2 *_t W)(., t_k) from the marching history."""
    acc = 0.5 * r2[k] * W[:, 0] + 0.5 * r2[0] * W[:, k]
    if k > 1:
        acc += W[:, 1:k] @ r2[k - 1:0:-1]
    return dt * acc


def _picard(gvals, r2, dt, sigma, sgrid, tgrid, tol, max_iter):
    n_s, n_t = sgrid.n, tgrid.n
    has_r2 = bool(np.any(r2[: n_s + 1]))
    E = np.exp(-sigma * (sgrid.nodes()[:, None] + tgrid.nodes()[None, :]))
    g0 = E * _triangle_field(gvals, dt)
    Y = g0.copy()
    scale = max(np.max(np.abs(g0)), 1e-300)
    prev_delta = np.inf
    growth = 0
    for it in range(1, max_iter + 1):
        if not has_r2:
            return Y / E, it
        Wcur = Y / E
        core = _conv_columns(r2, Wcur, dt) - _conv_rows(r2, Wcur, dt)
        Y_new = E * _triangle_field(core, dt) + g0
        delta = np.max(np.abs(Y_new - Y))
        Y = Y_new
        if delta <= tol * scale:
            return Y / E, it
        if delta > prev_delta:
            growth += 1
            if growth >= 3:
                raise NumericalFailure(
                    f"picard sweeps diverge (delta {delta:.3e} after {it} sweeps); "
                    "increase sigma_weight or shorten the horizon"
                )
        else:
            growth = 0
        prev_delta = delta
    raise NumericalFailure(
        f"picard did not reach tolerance {tol} within {max_iter} sweeps "
        f"(last delta {prev_delta:.3e})"
    )


# ---------------------------------------------------------------------------
# Gram assembly
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConnectingGram:
    """Per-horizon Gram matrices <C_T e_i, e_j> of the connecting operator.

    C[k] is the symmetrized n x n matrix at horizon horizons[k]; asymmetry[k]
    records the pre-symmetrization relative Frobenius gap (a discretization
    diagnostic of the data chain; identically 0 for the forward oracle).
    gamma = R(0)/2 travels along because the steering trace needs it:
    the wavefront value of the physical field is exp(gamma T) f(0+).
    """

    horizons: np.ndarray
    C: np.ndarray
    asymmetry: np.ndarray
    source: str
    basis: ControlBasis
    gamma: float = 0.0
    meta: dict = field(default_factory=dict)

    def index_of(self, T: float) -> int:
        i = int(np.argmin(np.abs(self.horizons - T)))
        if abs(self.horizons[i] - T) > 1e-9 * max(1.0, abs(T)):
            raise GridMismatchError(f"no stored horizon at T={T}")
        return i

    def at(self, T: float) -> np.ndarray:
        return self.C[self.index_of(T)]


def gram_from_data(
    tab: ResponseTable,
    scheme: str = "auto",
    threads: int = 1,
    both_orientations: bool = True,
) -> ConnectingGram:
    """Gram of the connecting operator at every time node, from boundary data.

    Runs the chain phi -> psi -> affine term -> two-variable wave solve per
    control pair and reads the diagonal H(t_k, t_k).  With
    ``both_orientations`` the (i,j) and (j,i) chains are solved independently
    so the symmetry defect measures the chain's discretization error; the
    returned matrices are the symmetrized averages either way.
    """
    basis, kernel = tab.basis, tab.kernel
    grid2 = tab.grid2
    m = basis.grid.n
    n = basis.n
    dt = grid2.dt
    res = resolvent(kernel)
    gamma = res.gamma

    E = basis.sampled_on(grid2)
    Y = tab.Y
    es = np.exp(-gamma * grid2.nodes())
    et = es[: m + 1]
    t_nodes = basis.grid.nodes()

    s_resp = es[None, :] * Y       # exp(-gamma s) y^{e_j}(s)
    s_ctrl = es[None, :] * E       # exp(-gamma s) e_j(s)
    t_ctrl = et[None, :] * E[:, : m + 1]
    t_resp = et[None, :] * Y[:, : m + 1]

    sgrid, tgrid = grid2, basis.grid

    def solve_pair(i: int, j: int) -> np.ndarray:
        g_field = SeparableField(
            sgrid=sgrid,
            tgrid=tgrid,
            s_factors=(s_resp[j], s_ctrl[j]),
            t_factors=(t_ctrl[i], t_resp[i]),
            signs=(1.0, -1.0),
        )
        sol = blago_solve(g_field, res, scheme=scheme)
        return sol.diagonal()  # already carries the exp(gamma(s+t)) weight

    pairs = [(i, j) for i in range(n) for j in range(i, n)]
    if both_orientations:
        pairs += [(i, j) for i in range(n) for j in range(i)]

    def run(idx: int) -> np.ndarray:
        return solve_pair(*pairs[idx])

    rows = _parallel_map(run, len(pairs), threads)
    raw = np.zeros((m + 1, n, n))
    for (i, j), diag in zip(pairs, rows):
        raw[:, i, j] = diag
    if not both_orientations:
        for i in range(n):
            for j in range(i):
                raw[:, i, j] = raw[:, j, i]

    sym = 0.5 * (raw + np.transpose(raw, (0, 2, 1)))
    norms = np.linalg.norm(raw, axis=(1, 2))
    gaps = np.linalg.norm(raw - np.transpose(raw, (0, 2, 1)), axis=(1, 2))
    asym = np.where(norms > 0, gaps / np.where(norms > 0, norms, 1.0), 0.0)
    return ConnectingGram(
        horizons=t_nodes.copy(),
        C=sym,
        asymmetry=asym,
        source="boundary-data",
        basis=basis,
        gamma=gamma,
        meta={"scheme": scheme, "both_orientations": both_orientations},
    )


def gram_oracle(p: StringProblem, basis: ControlBasis, threads: int = 1) -> ConnectingGram:
    """Gram from forward snapshots: H^{ij}(T,T) = int_0^T w^{e_i}(x,T) w^{e_j}(x,T) dx.

    Knows the coefficient q; validation counterpart of ``gram_from_data``.
    """
    if abs(p.T - basis.grid.t_max) > 1e-9:
        raise GridMismatchError("oracle problem horizon must equal the basis window")
    res = resolvent(p.kernel)
    m = basis.grid.n
    dt = basis.grid.dt
    n = basis.n

    def one(i: int):
        f = Sampled1D(basis.grid, basis.samples[i])
        return solve_mild(p, f, res=res).w.values

    fields = _parallel_map(one, n, threads)

    raw = np.zeros((m + 1, n, n))
    idx = np.arange(m + 1)
    for i in range(n):
        for j in range(i, n):
            prod = fields[i] * fields[j]
            s = np.cumsum(prod, axis=0)
            diag_sum = s[idx, idx]
            h = dt * (diag_sum - 0.5 * prod[0, idx] - 0.5 * prod[idx, idx])
            h[0] = 0.0
            raw[:, i, j] = h
            raw[:, j, i] = h
    return ConnectingGram(
        horizons=basis.grid.nodes().copy(),
        C=raw,
        asymmetry=np.zeros(m + 1),
        source="forward-oracle",
        basis=basis,
        gamma=res.gamma,
        meta={},
    )
