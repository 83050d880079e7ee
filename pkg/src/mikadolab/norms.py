"""Function-space measurements and inequality-constant harnesses.

Everything in this module is an estimator, not a certificate: sups over
frequencies, radii, centers, and times are discretized (dyadic bands, dyadic
radii, lattice centers, log-uniform time nodes), so a reported value is a
lower bound of the continuum quantity it estimates.  All comparisons made
elsewhere in the package put the same estimator on both sides, which is what
keeps the discretization honest.

Four families live here:

* classical norms on grid fields: normalized Lebesgue, Hölder-Zygmund via
  Littlewood-Paley blocks, and the negative Sobolev norm through the |xi|^-1
  multiplier;
* the Carleson-window estimator behind the heat-extension norm of the data
  and the path-space norm of a branch evolution;
* sup-search reports packaged with their method metadata (``NormReport``);
* randomized harnesses that sweep a frequency- or scale-parameter and check
  that the measured ratio of the two sides of a standard inequality stays
  uniformly bounded across the sweep.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .spectral import (
    Grid,
    SpectralField,
    anti_divergence_hat,
    gradient_hat,
    heat_symbol,
    inv_grad_symbol,
    linf,
    lp_band_list,
    lp_project_hat,
    random_band_limited,
    scalar_field,
    vector_field,
)

TWO_PI = 2.0 * np.pi

# Frobenius weights for the 6-component symmetric tensor stack
# (xx, xy, xz, yy, yz, zz): off-diagonal components count twice.
SYM_WEIGHTS = (1.0, 2.0, 2.0, 1.0, 2.0, 1.0)


# ---------------------------------------------------------------------------
# pointwise magnitude and Lebesgue norms


def magnitude(data: np.ndarray, weights: Optional[Sequence[float]] = None) -> np.ndarray:
    """Pointwise Euclidean magnitude of a component stack.

    Scalar fields pass through as |f|; stacks are contracted with optional
    per-component weights (Frobenius weights for symmetric tensors).
    """
    if data.ndim == 3:
        return np.abs(data)
    if weights is None:
        return np.sqrt((data * data).sum(axis=0))
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (data.shape[0],):
        raise ValueError(
            f"weights must match the component count {data.shape[0]}, got {w.shape}"
        )
    return np.sqrt(np.tensordot(w, data * data, axes=(0, 0)))


def default_weights(rank: str) -> Optional[Tuple[float, ...]]:
    """Component weights that make the magnitude frame-invariant."""
    return SYM_WEIGHTS if rank == "symtensor" else None


def lebesgue_norm(f: SpectralField, p: float) -> float:
    """L^p norm with the normalized measure (torus volume = 1).

    ``p = inf`` (or numpy.inf) returns the sup of the pointwise magnitude.
    """
    mag = magnitude(f.data, default_weights(f.rank))
    if np.isinf(p):
        return float(mag.max())
    if p <= 0:
        raise ValueError(f"p must be positive, got {p}")
    return float(np.mean(mag**p) ** (1.0 / p))


# ---------------------------------------------------------------------------
# Hölder-Zygmund norms through Littlewood-Paley blocks


def holder_zygmund(
    f: SpectralField,
    s: float,
    weights: Optional[Sequence[float]] = None,
    bands: Optional[Sequence[int]] = None,
) -> float:
    """sup over resolvable dyadic N of N^s * ||P_N f||_inf.

    The homogeneous convention: the mean mode is outside every band, so a
    constant field measures 0 and fields with ``s <= 0`` are meaningful only
    up to their mean.
    """
    if weights is None:
        weights = default_weights(f.rank)
    return holder_zygmund_hat(f.grid, f.hat(), s, weights=weights, bands=bands)


def holder_zygmund_hat(
    grid: Grid,
    hat: np.ndarray,
    s: float,
    weights: Optional[Sequence[float]] = None,
    bands: Optional[Sequence[int]] = None,
) -> float:
    """Spectrum-side entry point for stacks of any component count."""
    return max(holder_zygmund_blocks(grid, hat, s, weights, bands).values(), default=0.0)


def holder_zygmund_blocks(
    grid: Grid,
    hat: np.ndarray,
    s: float,
    weights: Optional[Sequence[float]] = None,
    bands: Optional[Sequence[int]] = None,
) -> Dict[int, float]:
    """Per-band values N^s * ||P_N f||_inf keyed by the band center N."""
    if bands is None:
        bands = lp_band_list(grid.n)
    out: Dict[int, float] = {}
    for nb in bands:
        block = grid.inv(lp_project_hat(grid, hat, nb))
        out[nb] = float(nb) ** s * float(magnitude(block, weights).max())
    return out


def grad_holder(f: SpectralField, kappa: float) -> float:
    """||grad f||_{C^kappa}: the Hölder-Zygmund norm of the full gradient.

    The gradient of an m-component stack is measured as the 3m-component
    stack with each component's weight inherited from the parent component.
    """
    hat = f.hat()
    if f.rank == "scalar":
        ghat = gradient_hat(f.grid, hat)
        return holder_zygmund_hat(f.grid, ghat, kappa)
    base = default_weights(f.rank)
    stacks = []
    weights: List[float] = []
    for c in range(f.ncomp):
        stacks.append(gradient_hat(f.grid, hat[c]))
        weights.extend([1.0 if base is None else base[c]] * 3)
    ghat = np.concatenate(stacks, axis=0)
    return holder_zygmund_hat(f.grid, ghat, kappa, weights=weights)


def sobolev_neg(f: SpectralField, p: float) -> float:
    """|| |grad|^{-1} f ||_{L^p} via the |xi|^{-1} multiplier.

    The mean mode is annihilated by the multiplier, so ``f`` is measured up
    to its mean; p must lie in (1, inf).
    """
    if not 1.0 < p < np.inf:
        raise ValueError(f"p must lie in (1, inf), got {p}")
    tab = inv_grad_symbol().table(f.grid)
    lifted = SpectralField(f.grid, f.rank, f.grid.inv(f.hat() * tab))
    return lebesgue_norm(lifted, p)


# ---------------------------------------------------------------------------
# norm reports


@dataclass
class NormReport:
    """A measured norm with the discretization that produced it."""

    name: str
    value: float
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.value >= 0.0:
            raise ValueError(f"norm value must be >= 0, got {self.value}")

    def to_json_dict(self) -> dict:
        return {"name": self.name, "value": self.value, "metadata": self.metadata}


# ---------------------------------------------------------------------------
# Carleson-window machinery
#
# The window integral int_0^{R^2} int_{B(x0,R)} g(t,x) dx dt is evaluated by
# a log-uniform time quadrature (8 nodes per octave below t = R^2) and a ball
# integral realized as a convolution with the band-limited indicator of
# B(0,R): the sharp indicator's Fourier coefficients are analytic, and using
# them on the resolvable modes is the subcell antialiasing of the boundary.
# The center sup runs over the R/4-spaced lattice, which the dyadic radii
# make an exact subsampling of the grid.


def ball_indicator_hat(grid: Grid, radius: float) -> np.ndarray:
    """Fourier coefficients of the periodized indicator of B(0, radius)."""
    kmag = grid.kmag
    out = np.empty_like(kmag)
    nz = kmag > 0
    kr = kmag[nz] * radius
    out[nz] = 4.0 * np.pi * (np.sin(kr) - kr * np.cos(kr)) / (kmag[nz] ** 3)
    out[0, 0, 0] = 4.0 / 3.0 * np.pi * radius**3
    return out / TWO_PI**3


def ball_integrals(grid: Grid, g: np.ndarray, radius: float) -> np.ndarray:
    """int_{B(x0,R)} g dx for every grid center x0 at once (periodized)."""
    ghat = grid.fwd(g)
    return grid.inv(TWO_PI**3 * ghat * ball_indicator_hat(grid, radius))


def dyadic_radii(grid: Grid, levels: Optional[int] = None) -> List[float]:
    """Radii 2*pi*2^-m down to the grid spacing (center stride floors at 1).

    Going all the way down matters: a single shear mode sin(Nx) peaks the
    window average at R ~ pi/(2N), so stopping early biases large N low.
    """
    if levels is None:
        levels = int(np.log2(grid.n // 4)) + 3
    return [TWO_PI * 0.5**m for m in range(levels)]


def _lattice_max(grid: Grid, values: np.ndarray, radius: float) -> float:
    """Max over the R/4-spaced sublattice of a per-center value table."""
    stride = max(int(round((radius / 4.0) / grid.h)), 1)
    return float(values[::stride, ::stride, ::stride].max())


def carleson_window_sup(
    grid: Grid,
    field_at: Callable[[float], np.ndarray],
    radii: Sequence[float],
    octaves_below: int = 12,
    nodes_per_octave: int = 8,
) -> Tuple[float, dict]:
    """sup over (R, x0) of R^-3 * int_0^{R^2} int_{B(x0,R)} |u(t)|^2 dx dt.

    ``field_at(t)`` must return the real component stack of u(t).  Time
    nodes are shared across radii: t_q = (2 pi)^2 * 2^(-q/8), and each R^2
    is a node because the radii are dyadic.  The [0, t_min] remainder is
    approximated by a rectangle with the smallest-t integrand.
    """
    radii = sorted(radii, reverse=True)
    t_top = radii[0] ** 2
    per_r_nodes = octaves_below * nodes_per_octave
    extra = int(round(2 * nodes_per_octave * np.log2(radii[0] / radii[-1])))
    t_nodes = t_top * 2.0 ** (-np.arange(per_r_nodes + extra + 1) / nodes_per_octave)

    accum = {r: np.zeros((grid.n,) * 3) for r in radii}
    prev_g: Optional[np.ndarray] = None
    prev_t: Optional[float] = None
    for t in t_nodes:
        u = field_at(float(t))
        g = (u * u).sum(axis=0) if u.ndim == 4 else u * u
        if prev_g is not None:
            w = 0.5 * (prev_t - t)
            seg = w * (prev_g + g)
            for r in radii:
                if prev_t <= r * r * (1.0 + 1e-12):
                    accum[r] += seg
        prev_g, prev_t = g, t
    for r in radii:
        accum[r] += prev_t * prev_g  # [0, t_min] rectangle remainder

    best = 0.0
    per_radius = {}
    for r in radii:
        vals = ball_integrals(grid, accum[r], r) / r**3
        m = _lattice_max(grid, np.maximum(vals, 0.0), r)
        per_radius[r] = float(np.sqrt(m))
        best = max(best, per_radius[r])
    meta = {
        "radii": [float(r) for r in radii],
        "per_radius": {f"{r:.6g}": v for r, v in per_radius.items()},
        "octaves_below": octaves_below,
        "nodes_per_octave": nodes_per_octave,
        "time_nodes": len(t_nodes),
    }
    return best, meta


def bmo_minus_one(f: SpectralField, levels: Optional[int] = None) -> float:
    """Discretized Carleson norm of the heat extension of a mean-zero field.

    sup over dyadic R and centers x0 on the R/4 lattice of
    (R^-3 int_0^{R^2} int_{B(x0,R)} |e^{t Lap} f|^2)^{1/2}.
    """
    return bmo_minus_one_report(f, levels=levels).value


def bmo_minus_one_report(f: SpectralField, levels: Optional[int] = None) -> NormReport:
    mean = np.atleast_1d(f.mean())
    if np.max(np.abs(mean)) > 1e-10 * max(f.linf(), 1e-300):
        raise ValueError("bmo_minus_one needs a mean-zero field")
    grid = f.grid
    hat = f.hat()

    def field_at(t: float) -> np.ndarray:
        return grid.inv(hat * heat_symbol(t).table(grid))

    radii = dyadic_radii(grid, levels)
    value, meta = carleson_window_sup(grid, field_at, radii)
    meta["note"] = "largest radius exceeds the injectivity radius; its periodized ball overcounts overlaps"
    return NormReport("bmo_minus_one", value, meta)


def kt_path_norm(branch, t_grid: Sequence[float]) -> float:
    """Path-space norm: sup t^{1/2} ||u(t)||_inf plus the Carleson part.

    ``branch`` is anything with ``evaluate(t) -> SpectralField`` (a branch
    state, a stepper trajectory adapter, or a closure wrapper).
    """
    return kt_path_norm_report(branch, t_grid).value


def kt_path_norm_report(branch, t_grid: Sequence[float]) -> NormReport:
    t_grid = np.asarray(sorted(float(t) for t in t_grid))
    if t_grid.size == 0 or t_grid[0] <= 0:
        raise ValueError("kt_path_norm needs positive times")
    sup_term = 0.0
    sup_at = 0.0
    grid = None
    for t in t_grid:
        u = branch.evaluate(float(t))
        grid = u.grid
        val = np.sqrt(t) * u.linf()
        if val > sup_term:
            sup_term, sup_at = float(val), float(t)

    def field_at(t: float) -> np.ndarray:
        return branch.evaluate(float(t)).data

    radii = dyadic_radii(grid)
    carleson, meta = carleson_window_sup(grid, field_at, radii)
    value = sup_term + carleson
    meta.update(
        {
            "sup_weighted_linf": sup_term,
            "sup_attained_at_t": sup_at,
            "carleson_term": carleson,
            "t_grid": [float(t) for t in t_grid],
        }
    )
    return NormReport("kt_path_norm", value, meta)


# ---------------------------------------------------------------------------
# inequality-constant harnesses


HARNESS_NAMES = ("bernstein", "heat-decay", "stationary-phase", "improved-holder")


def inequality_harness(
    name: str, grid: Optional[Grid] = None, seed: int = 20240911, trials: int = 3
) -> dict:
    """Sweep a dyadic parameter and report LHS/RHS ratios for one inequality.

    The report's ``bounded`` flag asserts uniformity across the sweep as
    max ratio <= 10 * median ratio; the ratios themselves are kept for the
    reports so a reader can see the measured constants.
    """
    if name == "bernstein":
        fn = _harness_bernstein
    elif name == "heat-decay":
        fn = _harness_heat_decay
    elif name == "stationary-phase":
        fn = _harness_stationary_phase
    elif name == "improved-holder":
        fn = _harness_improved_holder
    else:
        raise ValueError(f"unknown harness {name!r}; choose from {HARNESS_NAMES}")
    if grid is None:
        grid = Grid(64)
    rows = fn(grid, np.random.default_rng(seed), trials)
    ratios = np.array([r["ratio"] for r in rows])
    med = float(np.median(ratios))
    out = {
        "name": name,
        "grid_n": grid.n,
        "rows": rows,
        "max_ratio": float(ratios.max()),
        "median_ratio": med,
        "bounded": bool(ratios.max() <= 10.0 * max(med, 1e-300)),
    }
    return out


def _harness_bernstein(grid: Grid, rng: np.random.Generator, trials: int) -> List[dict]:
    """||P_N grad f||_inf <= A N^{1 + 3/2} ||f||_2 for p=2 -> q=inf, m=1."""
    rows = []
    bands = [nb for nb in lp_band_list(grid.n) if 4 <= nb <= grid.n // 4]
    for trial in range(trials):
        f = random_band_limited(grid, grid.n // 2 - 1, rng, rank="vector")
        l2 = f.l2()
        hat = f.hat()
        for nb in bands:
            proj = lp_project_hat(grid, hat, nb)
            g = np.concatenate([gradient_hat(grid, proj[c]) for c in range(3)], axis=0)
            gmax = float(magnitude(grid.inv(g)).max())
            rows.append(
                {
                    "trial": trial,
                    "N": nb,
                    "ratio": gmax / (nb ** 2.5 * l2),
                }
            )
    return rows


def _harness_heat_decay(grid: Grid, rng: np.random.Generator, trials: int) -> List[dict]:
    """||grad e^{t Lap} P_N f||_inf <= A N e^{-N^2 t / 4} ||f||_inf.

    The band P_N lives on |xi| >= N/2, so e^{-N^2 t/4} is the sharp
    per-band rate; using it keeps the ratio roughly flat in t.
    """
    rows = []
    bands = [nb for nb in lp_band_list(grid.n) if 4 <= nb <= grid.n // 4]
    for trial in range(trials):
        f = random_band_limited(grid, grid.n // 2 - 1, rng, rank="scalar")
        fmax = f.linf()
        hat = f.hat()
        for nb in bands:
            proj = lp_project_hat(grid, hat, nb)
            for tn2 in (0.0625, 0.25, 1.0, 4.0):
                t = tn2 / nb**2
                evolved = proj * heat_symbol(t).table(grid)
                g = grid.inv(gradient_hat(grid, evolved))
                val = float(magnitude(g).max())
                rhs = nb * np.exp(-(nb**2) * t / 4.0) * fmax
                rows.append(
                    {"trial": trial, "N": nb, "t_N2": tn2, "ratio": val / rhs}
                )
    return rows


def _harness_stationary_phase(
    grid: Grid, rng: np.random.Generator, trials: int, beta: float = 0.5
) -> List[dict]:
    """||R(a e^{i lam k.x})||_{C^beta} <= A lam^{beta-1} ||a||_inf.

    Realized with the real carrier cos(lam k.x) against a low-frequency
    random amplitude; R is the symmetric anti-divergence.
    """
    rows = []
    x = grid.meshgrid()
    lams = [lam for lam in (4, 8, 16, 32) if lam <= grid.n // 2 - 4]
    for trial in range(trials):
        a = random_band_limited(grid, 2, rng, rank="scalar", mean_free=False)
        amp = a.data + 2.0 * a.linf() + 1.0  # keep ||a||_inf away from 0
        k_dir = np.array([1, 0, 0]) if trial % 2 == 0 else np.array([0, 1, 1])
        for lam in lams:
            phase = lam * (k_dir[0] * x[0] + k_dir[1] * x[1] + k_dir[2] * x[2])
            carrier = np.cos(phase)
            vec = np.stack([amp * carrier, np.zeros_like(carrier), np.zeros_like(carrier)])
            vhat = grid.fwd(vec)
            vhat[..., 0, 0, 0] = 0.0  # R needs a mean-free field
            rhat = anti_divergence_hat(grid, vhat)
            value = holder_zygmund_hat(grid, rhat, beta, weights=SYM_WEIGHTS)
            scale = float(lam * np.linalg.norm(k_dir)) ** (beta - 1.0)
            rows.append(
                {
                    "trial": trial,
                    "lambda": lam,
                    "beta": beta,
                    "ratio": value / (scale * float(np.abs(amp).max())),
                }
            )
    return rows


def _harness_improved_holder(
    grid: Grid, rng: np.random.Generator, trials: int
) -> List[dict]:
    """| ||f g(lam .)||_1 - ||f||_1 ||g||_1 | <= A lam^-1 ||f||_{C^1} ||g||_1."""
    rows = []
    x = grid.meshgrid()
    for trial in range(trials):
        f = random_band_limited(grid, 3, rng, rank="scalar", mean_free=False)
        fdata = f.data
        fgrad = grid.inv(gradient_hat(grid, f.hat()))
        f_c1 = float(np.abs(fdata).max() + magnitude(fgrad).max())
        f_l1 = float(np.abs(fdata).mean())
        for lam in (2, 4, 8, 16):
            g = np.sin(lam * x[0]) * np.cos(lam * x[1])
            g_l1 = float(np.abs(g).mean())
            resid = abs(float(np.abs(fdata * g).mean()) - f_l1 * g_l1)
            rows.append(
                {
                    "trial": trial,
                    "lambda": lam,
                    "ratio": resid * lam / (f_c1 * g_l1),
                }
            )
    return rows
