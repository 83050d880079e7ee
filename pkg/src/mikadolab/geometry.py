"""Pipe geometry: placed axes, plateau envelopes, cutoffs, support volumes.

A pipe family is six periodic tubes, one per frame direction. Pipe j has an
integer axis direction theta_j, a shift direction eta_j orthogonal to it, and
an anchor x_j. The level envelope is phi(dist(M x, line_j)/delta0) with a
plateau profile phi that is exactly 1 out to a fraction of the tube radius and
exactly 0.0 outside it, so pointwise products of distinct pipes vanish bitwise.

Anchor lattice. At tube radii thin enough to keep the pipes separated, the
scaled tubes are narrower than the scaled sample lattice, so a pipe carries
grid samples only where its scaled axis passes through sample points exactly.
The default anchors therefore live on the 2pi/16 sublattice, which makes the
scaled axes hit sample points at every built scale of any grid with 16*M | n,
and satisfy the parity condition (16/(2pi)) x_j . eta_j = odd. The carrier
sin(N (x - x_j) . eta_j) is constant on the scaled axis samples (the phase
advance along theta_j is a multiple of 2pi since theta_j . eta_j = 0), and the
parity pins that constant to |sin| = 1 exactly at both built reference scales.
The placement search maximizes the minimum pairwise axis distance over the
parity-constrained lattice.

Scaled distances are evaluated once per pipe on the base grid and remapped by
index arithmetic for every level (the grid is closed under x -> M x mod 2pi
for integer M), so each level costs an index gather, not a fresh distance
evaluation.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import j0 as bessel_j0

from .frame import NashFrame, default_frame
from .spectral import Grid, SpectralField, smoothstep, truncate_band

TWO_PI = 2.0 * np.pi

# frozen default placement: anchors in units of 2pi/16, found by a seeded
# multi-start hill climb over the parity-constrained lattice; min pairwise
# axis separation 0.734673, and every pipe's level-1 sample columns meet the
# generation-1 cutoff plateau in >= 64 grid points at n=128
DEFAULT_OFFSETS_16 = (
    (5, 1, 5),
    (15, 13, 3),
    (2, 1, 12),
    (3, 14, 3),
    (3, 3, 11),
    (7, 0, 0),
)
DEFAULT_DELTA0 = 0.058
DEFAULT_PLATEAU = 0.8

# cutoff window band, in units of delta0 (scaled distance): all windows sit
# strictly between the 2*delta0 inflation (where cutoffs must be identically
# one) and the 3*delta0 inflation (outside which they must vanish)
WINDOW_LOW = 2.3
WINDOW_HIGH = 3.0


# ---------------------------------------------------------------------------
# profile


def plateau_profile(r, plateau: float = DEFAULT_PLATEAU) -> np.ndarray:
    """Even C-infinity bump: 1 on |r| <= plateau, 0 at |r| >= 1 (exactly)."""
    r = np.abs(np.asarray(r, dtype=np.float64))
    return 1.0 - smoothstep((r - plateau) / (1.0 - plateau))


def _bump_g(v):
    out = np.zeros_like(v)
    pos = v > 0
    out[pos] = np.exp(-1.0 / v[pos])
    return out


def _bump_g_prime(v):
    out = np.zeros_like(v)
    pos = v > 0
    out[pos] = np.exp(-1.0 / v[pos]) / v[pos] ** 2
    return out


def smoothstep_deriv(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    inside = (v > 0.0) & (v < 1.0)
    out = np.zeros_like(v)
    vv = v[inside]
    g, gm = _bump_g(vv), _bump_g(1.0 - vv)
    gp, gmp = _bump_g_prime(vv), _bump_g_prime(1.0 - vv)
    out[inside] = (gp * gm + g * gmp) / (g + gm) ** 2
    return out


def plateau_profile_deriv(r, plateau: float = DEFAULT_PLATEAU) -> np.ndarray:
    """d/dr of the plateau profile; odd in r, zero on the plateau and tail."""
    r = np.asarray(r, dtype=np.float64)
    s = np.sign(r)
    r = np.abs(r)
    return -s * smoothstep_deriv((r - plateau) / (1.0 - plateau)) / (1.0 - plateau)


def window_step(rho, window: Tuple[float, float]) -> np.ndarray:
    """1 for rho <= a, 0 for rho >= b, smooth in between."""
    a, b = window
    return 1.0 - smoothstep((np.asarray(rho, dtype=np.float64) - a) / (b - a))


# ---------------------------------------------------------------------------
# torus line distance


def point_line_distance(pts: np.ndarray, anchor, theta, mrange: int = 2) -> np.ndarray:
    """Exact torus distance from points to the closed line anchor + s theta.

    pts: (..., 3). Minimizes |P_perp(pts - anchor - 2 pi m)| over integer
    shifts |m|_inf <= mrange after reducing to the fundamental cell.
    """
    pts = np.asarray(pts, dtype=np.float64)
    th = np.asarray(theta, dtype=np.float64)
    th2 = float(th @ th)
    w = pts - np.asarray(anchor, dtype=np.float64)
    w -= TWO_PI * np.round(w / TWO_PI)
    best = None
    for m in itertools.product(range(-mrange, mrange + 1), repeat=3):
        u = w - TWO_PI * np.asarray(m, dtype=np.float64)
        proj = (u @ th) / th2
        d2 = (u * u).sum(axis=-1) - proj**2 * th2
        best = d2 if best is None else np.minimum(best, d2)
    return np.sqrt(np.maximum(best, 0.0))


def point_line_offset(pts: np.ndarray, anchor, theta, mrange: int = 2) -> np.ndarray:
    """Transverse offset vector realizing the distance (zero on the axis)."""
    pts = np.asarray(pts, dtype=np.float64)
    th = np.asarray(theta, dtype=np.float64)
    th2 = float(th @ th)
    w = pts - np.asarray(anchor, dtype=np.float64)
    w -= TWO_PI * np.round(w / TWO_PI)
    best_d2 = None
    best_u = None
    for m in itertools.product(range(-mrange, mrange + 1), repeat=3):
        u = w - TWO_PI * np.asarray(m, dtype=np.float64)
        perp = u - ((u @ th) / th2)[..., None] * th
        d2 = (perp * perp).sum(axis=-1)
        if best_d2 is None:
            best_d2, best_u = d2, perp
        else:
            take = d2 < best_d2
            best_d2 = np.where(take, d2, best_d2)
            best_u = np.where(take[..., None], perp, best_u)
    return best_u


def line_line_distance(p1, th1, p2, th2) -> float:
    """Exact torus distance between two closed lines with integer directions."""
    th1 = np.asarray(th1, dtype=np.int64)
    th2 = np.asarray(th2, dtype=np.int64)
    n = np.cross(th1, th2)
    if not n.any():
        return float(point_line_distance(np.asarray(p2, float)[None], p1, th1)[0])
    g = int(np.gcd.reduce(np.abs(n)[np.abs(n) > 0]))
    dp = np.asarray(p2, dtype=np.float64) - np.asarray(p1, dtype=np.float64)
    phase = float(dp @ n)
    per = TWO_PI * g
    frac = phase - per * np.round(phase / per)
    return abs(frac) / float(np.linalg.norm(n))


# ---------------------------------------------------------------------------
# pipe family


@dataclass
class PipeFamily:
    """Placed pipes: frame directions plus anchors and tube geometry."""

    frame: NashFrame
    offsets: np.ndarray              # (6, 3) anchors in radians
    delta0: float = DEFAULT_DELTA0
    delta: float = 1.0 / 20.0        # pipe volume-fraction budget
    plateau: float = DEFAULT_PLATEAU
    _dist_cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.offsets = np.asarray(self.offsets, dtype=np.float64)
        if self.offsets.shape != (self.frame.npipes, 3):
            raise ValueError("offsets must be (npipes, 3)")

    # -- separation and volume -------------------------------------------

    def axis_separations(self) -> np.ndarray:
        np_ = self.frame.npipes
        th = self.frame.theta_arr()
        out = np.full((np_, np_), np.inf)
        for a in range(np_):
            for b in range(a + 1, np_):
                d = line_line_distance(self.offsets[a], th[a],
                                       self.offsets[b], th[b])
                out[a, b] = out[b, a] = d
        return out

    def min_separation(self) -> float:
        seps = self.axis_separations()
        iu = np.triu_indices(self.frame.npipes, 1)
        return float(seps[iu].min())

    def support_separation(self) -> float:
        """Min distance between closed delta0-tubes of distinct pipes."""
        return self.min_separation() - 2.0 * self.delta0

    def axis_lengths(self) -> np.ndarray:
        """Closed-geodesic lengths 2 pi |theta_j| (all theta_j primitive)."""
        return TWO_PI * np.linalg.norm(self.frame.theta_arr(), axis=1)

    def volume_fraction(self) -> float:
        """Fraction of the torus covered by the delta0-tubes (normalized)."""
        return float(np.pi * self.delta0**2 * self.axis_lengths().sum()
                     / TWO_PI**3)

    def verify(self) -> None:
        """Raise ``pipe-placement`` unless separation and volume hold."""
        ssep = self.support_separation()
        if not ssep > 10.0 * self.delta0:
            raise ValueError(
                f"pipe-placement: support separation {ssep:.4f} fails the "
                f"> 10 delta0 = {10 * self.delta0:.4f} requirement "
                f"(axis separation {self.min_separation():.4f})")
        if self.volume_fraction() > self.delta:
            raise ValueError(
                f"pipe-placement: tube volume fraction "
                f"{self.volume_fraction():.4f} exceeds the budget "
                f"{self.delta:.4f}")

    # -- cached base distance fields ---------------------------------------

    def base_distance(self, grid: Grid, j: int) -> np.ndarray:
        """dist(y, line_j) sampled on the unscaled grid (cached)."""
        key = (grid.n, j)
        if key not in self._dist_cache:
            x, y, z = grid.meshgrid()
            pts = np.stack([x, y, z], axis=-1).reshape(-1, 3)
            d = point_line_distance(pts, self.offsets[j],
                                    self.frame.theta_arr()[j])
            self._dist_cache[key] = d.reshape(grid.n, grid.n, grid.n)
        return self._dist_cache[key]

    def scaled_distance(self, grid: Grid, j: int, M: int) -> np.ndarray:
        """dist(M x, line_j) on the grid via the index remap x -> M x."""
        base = self.base_distance(grid, j)
        if M == 1:
            return base
        idx = (np.arange(grid.n) * M) % grid.n
        return base[np.ix_(idx, idx, idx)]

    def scaled_distance_points(self, pts, j: int, M: int) -> np.ndarray:
        scaled = (np.asarray(pts, dtype=np.float64) * M) % TWO_PI
        return point_line_distance(scaled, self.offsets[j],
                                   self.frame.theta_arr()[j])

    def min_scaled_distance(self, grid: Grid, M: int) -> np.ndarray:
        """min_j dist(M x, line_j) on the grid."""
        out = None
        for j in range(self.frame.npipes):
            d = self.scaled_distance(grid, j, M)
            out = d if out is None else np.minimum(out, d)
        return out

    # -- envelopes and carriers --------------------------------------------

    def envelope(self, grid: Grid, j: int, M: int) -> np.ndarray:
        """phi(dist(M x, line_j)/delta0): exact 1 on plateau, 0 outside."""
        d = self.scaled_distance(grid, j, M)
        return plateau_profile(d / self.delta0, self.plateau)

    def envelope_points(self, pts, j: int, M: int) -> np.ndarray:
        d = self.scaled_distance_points(pts, j, M)
        return plateau_profile(d / self.delta0, self.plateau)

    def envelope_gradient_points(self, pts, j: int, M: int) -> np.ndarray:
        """Analytic grad_x of phi(dist(M x, l_j)/delta0) at points (..., 3)."""
        pts = np.asarray(pts, dtype=np.float64)
        scaled = (pts * M) % TWO_PI
        off = point_line_offset(scaled, self.offsets[j],
                                self.frame.theta_arr()[j])
        d = np.linalg.norm(off, axis=-1)
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = off / d[..., None]
        unit[d < 1e-12] = 0.0
        dphi = plateau_profile_deriv(d / self.delta0, self.plateau) / self.delta0
        return dphi[..., None] * unit * M

    def support_count(self, grid: Grid, j: int, M: int) -> int:
        """Number of grid samples inside the scaled delta0-tube of pipe j."""
        return int((self.scaled_distance(grid, j, M) <= self.delta0).sum())

    def carrier(self, grid: Grid, j: int, N: int) -> np.ndarray:
        """sin(N (x - x_j) . eta_j) sampled on the grid."""
        x, y, z = grid.meshgrid()
        eta = self.frame.eta_arr()[j]
        ph = N * ((x - self.offsets[j][0]) * eta[0]
                  + (y - self.offsets[j][1]) * eta[1]
                  + (z - self.offsets[j][2]) * eta[2])
        return np.sin(ph)

    def carrier_points(self, pts, j: int, N: int) -> np.ndarray:
        pts = np.asarray(pts, dtype=np.float64)
        eta = self.frame.eta_arr()[j]
        return np.sin(N * ((pts - self.offsets[j]) @ eta))

    def carrier_phase(self, j: int, M: int, N: int) -> float:
        """Carrier phase on the scaled axis: (N/M - N) x_j . eta_j.

        At points x with M x on the axis, the carrier sin(N (x - x_j) . eta_j)
        equals sin of this constant (mod 2pi); the default anchors make
        |sin| = 1 at both built reference scales.
        """
        if N % M:
            raise ValueError("level requires M | N")
        eta = self.frame.eta_arr()[j]
        return (N // M - N) * float(self.offsets[j] @ eta)

    def carrier_alignment(self, M: int, N: int) -> np.ndarray:
        """|sin(axis carrier phase)| per pipe (1.0 = perfectly aligned)."""
        return np.array([abs(np.sin(self.carrier_phase(j, M, N)))
                         for j in range(self.frame.npipes)])

    def to_json_dict(self) -> dict:
        return {
            "offsets": self.offsets.tolist(),
            "offsets_16": (np.round(self.offsets / (TWO_PI / 16))
                           .astype(int).tolist()),
            "delta0": self.delta0,
            "delta": self.delta,
            "plateau": self.plateau,
            "min_separation": self.min_separation(),
            "support_separation": self.support_separation(),
            "volume_fraction": self.volume_fraction(),
            "frame": self.frame.to_json_dict(),
        }


# ---------------------------------------------------------------------------
# placement search


def _parity_ok(frame: NashFrame, j: int, r) -> bool:
    """Axis-sample carrier alignment: r . eta_j must be odd."""
    return int(np.dot(np.asarray(r, dtype=np.int64),
                      frame.eta_arr()[j].astype(np.int64))) % 2 == 1


def _minsep_r(frame: NashFrame, rs) -> float:
    lat = TWO_PI / 16.0
    th = frame.theta_arr()
    pts = np.asarray(rs, dtype=np.float64) * lat
    vals = [line_line_distance(pts[a], th[a], pts[b], th[b])
            for a in range(len(rs)) for b in range(a + 1, len(rs))]
    return min(vals)


def _greedy_placement(frame: NashFrame) -> np.ndarray:
    """Deterministic sweep on the parity lattice: each pipe in turn takes the
    admissible point maximizing its min distance to the placed ones."""
    lat = TWO_PI / 16.0
    th = frame.theta_arr()
    cands = [np.array(v) for v in itertools.product(range(16), repeat=3)]
    rs = []
    for j in range(frame.npipes):
        best, best_val = None, -1.0
        for c in cands:
            if not _parity_ok(frame, j, c):
                continue
            if not rs:
                best, best_val = c, 0.0
                break
            val = min(line_line_distance(np.asarray(r, float) * lat, th[a],
                                         c * lat, th[j])
                      for a, r in enumerate(rs))
            if val > best_val + 1e-12:
                best, best_val = c, val
        rs.append(best)
    return np.asarray(rs)


def _climb_placement(frame: NashFrame, rs: np.ndarray, seed: int = 20240817,
                     restarts: int = 8, iters: int = 60) -> np.ndarray:
    """Seeded multi-start hill climb on the parity lattice (deterministic)."""
    rng = np.random.default_rng(seed)

    def climb(state):
        state = [np.array(r) for r in state]
        cur = _minsep_r(frame, state)
        improved, it = True, 0
        while improved and it < iters:
            improved = False
            it += 1
            for j in range(frame.npipes):
                for d in itertools.product((-1, 0, 1), repeat=3):
                    if d == (0, 0, 0):
                        continue
                    t = (state[j] + d) % 16
                    if not _parity_ok(frame, j, t):
                        continue
                    old = state[j].copy()
                    state[j] = t
                    v = _minsep_r(frame, state)
                    if v > cur + 1e-12:
                        cur, improved = v, True
                    else:
                        state[j] = old
        return state, cur

    best, best_val = climb(rs)
    for _ in range(restarts):
        start = []
        for j in range(frame.npipes):
            while True:
                c = rng.integers(0, 16, 3)
                if _parity_ok(frame, j, c):
                    start.append(np.asarray(c))
                    break
        state, val = climb(start)
        if val > best_val:
            best, best_val = state, val
    return np.asarray(best)


def place_pipes(frame: Optional[NashFrame] = None,
                delta: float = 1.0 / 20.0,
                delta0: float = DEFAULT_DELTA0,
                plateau: float = DEFAULT_PLATEAU,
                search: str = "default") -> PipeFamily:
    """Construct a verified pipe family.

    search = "default" uses the frozen precomputed anchors; "greedy" runs the
    deterministic sweep; "refine" runs greedy plus the seeded hill climb. All
    modes are deterministic for the same inputs. If the requested delta0 is
    too fat for the achieved separation, delta0 is halved until the
    separation and volume requirements hold (raising ``pipe-placement`` if
    that never happens).
    """
    frame = frame or default_frame()
    if not 0.0 < delta <= 1.0 / 20.0:
        raise ValueError("pipe volume budget delta must lie in (0, 1/20]")
    if search == "default":
        offsets = np.asarray(DEFAULT_OFFSETS_16, dtype=np.float64) * (TWO_PI / 16)
    elif search == "greedy":
        offsets = _greedy_placement(frame) * (TWO_PI / 16)
    elif search == "refine":
        offsets = _climb_placement(frame, _greedy_placement(frame)) * (TWO_PI / 16)
    else:
        raise ValueError(f"unknown search mode {search!r}")
    d0 = float(delta0)
    last_err = None
    for _ in range(10):
        fam = PipeFamily(frame, offsets, d0, delta, plateau)
        try:
            fam.verify()
            return fam
        except ValueError as err:
            last_err = err
            d0 *= 0.5
    raise ValueError(f"pipe-placement: no admissible delta0 found ({last_err})")


# ---------------------------------------------------------------------------
# Mikado potentials


def mikado_potential(family: PipeFamily, grid: Grid, j: int, M: int, N: int,
                     representation: str = "sampled") -> SpectralField:
    """Pipe potential N^{-2} phi_j(M x) sin(N (x - x_j) . eta_j) theta_j.

    "sampled": exact pointwise samples (support claims hold bitwise).
    "band_limited": the sampled field projected onto modes with
    xi . theta_j = 0 and |xi|_inf below Nyquist, so divergence and the
    divergence of dealiased quadratic products vanish to machine precision.
    """
    if N % M:
        raise ValueError("level requires M | N")
    eta_inf = int(np.max(np.abs(family.frame.eta_arr()[j])))
    if N * eta_inf > grid.n // 2 - 1:
        raise ValueError(
            f"insufficient grid resolution: carrier frequency {N * eta_inf} "
            f"outside the open band of n={grid.n}")
    if family.support_count(grid, j, M) == 0:
        raise ValueError(
            f"insufficient grid resolution: pipe {j} at scale M={M} has no "
            f"in-support samples on n={grid.n}")
    scalar = family.envelope(grid, j, M) * family.carrier(grid, j, N) / N**2
    theta = family.frame.theta_arr()[j]
    data = np.stack([scalar * theta[0], scalar * theta[1], scalar * theta[2]])
    if representation == "sampled":
        return SpectralField(grid, "vector", data)
    if representation != "band_limited":
        raise ValueError(f"unknown representation {representation!r}")
    hat = grid.fwd(data)
    dot = (grid.kx * theta[0] + grid.ky * theta[1] + grid.kz * theta[2])
    hat[:, np.abs(dot) > 0.5] = 0.0
    hat = truncate_band(grid, hat, grid.n // 2 - 1)
    return SpectralField(grid, "vector", grid.inv(hat))


def layer_agreement(family: PipeFamily, grid: Grid, j: int, M: int, N: int) -> float:
    """Relative L2 gap between the sampled and band-limited layers."""
    a = mikado_potential(family, grid, j, M, N, "sampled")
    b = mikado_potential(family, grid, j, M, N, "band_limited")
    denom = np.sqrt(np.mean(a.data**2))
    return float(np.sqrt(np.mean((a.data - b.data) ** 2)) / max(denom, 1e-300))


# ---------------------------------------------------------------------------
# normalizers


def normalizer(family: PipeFamily, j: int, M: int, N: int,
               grid: Optional[Grid] = None, nodes: int = 96) -> dict:
    """Normalized integral of the squared pipe profile times squared carrier.

    Primary value: exact transverse quadrature of the continuum integral. The
    carrier phase is constant along the axis (the shift is orthogonal to the
    axis), so with q = (N/M)|eta_j| and c the axis phase,

        A = (|theta| / (2 pi)^2) * (I0 - cos(2c) I1) / 2,
        I_m = 2 pi int_0^{delta0} phi^2(r/delta0) J_0(2 m q r) r dr.

    The comparison value with sin^2 replaced by its mean 1/2 (the improved
    Hoelder limit) and the oscillatory ratio I1/I0 are included; a plain grid
    sample mean is recorded when a grid is supplied.
    """
    if N % M:
        raise ValueError("level requires M | N")
    L = N // M
    th = family.frame.theta_arr()[j]
    eta = family.frame.eta_arr()[j]
    q = L * float(np.linalg.norm(eta))
    c = family.carrier_phase(j, M, N)
    xg, wg = leggauss(nodes)
    r = 0.5 * family.delta0 * (xg + 1.0)
    w = 0.5 * family.delta0 * wg
    phi2 = plateau_profile(r / family.delta0, family.plateau) ** 2
    i0 = TWO_PI * float((phi2 * r * w).sum())
    i1 = TWO_PI * float((phi2 * bessel_j0(2.0 * q * r) * r * w).sum())
    norm_th = float(np.linalg.norm(th))
    analytic = (norm_th / TWO_PI**2) * 0.5 * (i0 - np.cos(2.0 * c) * i1)
    if analytic <= 0:
        raise ValueError("normalizer must be positive")
    out = {
        "j": j, "M": M, "N": N,
        "analytic": float(analytic),
        "mean_sq_envelope_half": float(norm_th / TWO_PI**2 * 0.5 * i0),
        "oscillatory_i1_over_i0": float(i1 / i0),
    }
    if grid is not None:
        out["grid"] = normalizer_grid(family, grid, j, M, N)
        out["grid_over_analytic"] = out["grid"] / analytic
    return out


def normalizer_grid(family: PipeFamily, grid: Grid, j: int, M: int, N: int) -> float:
    """Exact grid mean of the sampled squared envelope times squared carrier.

    This is the normalizer consistent with grid quadrature: with it, the
    oscillatory squared pipe field minus its normalizer is exactly mean-free
    on the grid. With the frozen anchors it takes exact dyadic rational
    values (every in-support sample sits on the plateau with |sin| = 1).
    """
    vals = family.envelope(grid, j, M) ** 2 * family.carrier(grid, j, N) ** 2
    out = float(vals.mean())
    if out <= 0:
        raise ValueError(
            f"insufficient grid resolution: pipe {j} scale M={M} carries no "
            "squared-envelope mass on the grid")
    return out


# ---------------------------------------------------------------------------
# cutoffs


def cutoff_windows(age: int, total_generations: int) -> Tuple[float, float]:
    """Window (in delta0 units) for a scale of the given age.

    Age a = generation - scale index (1 = the newest scale in the cutoff).
    The ladder partitions [WINDOW_LOW, WINDOW_HIGH] into widening slots: the
    support edge of age a sits strictly below the plateau edge of age a+1, so
    a generation's cutoff is identically 1 on the (mollified) support of the
    previous generation's fields. All slots respect the [2, 3] delta0
    sandwich.
    """
    A = max(int(total_generations), 1)
    if not 1 <= age <= A:
        raise ValueError("cutoff age out of range")
    step = (WINDOW_HIGH - WINDOW_LOW) / (2 * A - 1)
    lo = WINDOW_LOW + step * (2 * age - 2)
    hi = WINDOW_LOW + step * (2 * age - 1)
    return (lo, hi)


def cutoff_grid(family: PipeFamily, grid: Grid, Ms: Sequence[int],
                generation: int,
                total_generations: Optional[int] = None) -> np.ndarray:
    """chi_generation on the grid: product over scales m < generation of a
    smooth window of the scaled distance to the nearest pipe."""
    if generation < 1 or generation > len(Ms):
        raise ValueError("generation must address built scales")
    total = total_generations if total_generations is not None else len(Ms)
    out = np.ones((grid.n,) * 3)
    for m in range(generation):
        dmin = family.min_scaled_distance(grid, Ms[m])
        out *= window_step(dmin / family.delta0,
                           cutoff_windows(generation - m, total))
    return out


def cutoff_points(family: PipeFamily, pts, Ms: Sequence[int],
                  generation: int,
                  total_generations: Optional[int] = None) -> np.ndarray:
    if generation < 1 or generation > len(Ms):
        raise ValueError("generation must address built scales")
    total = total_generations if total_generations is not None else len(Ms)
    pts = np.asarray(pts, dtype=np.float64)
    out = np.ones(pts.shape[:-1])
    for m in range(generation):
        dmin = None
        for j in range(family.frame.npipes):
            d = family.scaled_distance_points(pts, j, Ms[m])
            dmin = d if dmin is None else np.minimum(dmin, d)
        out *= window_step(dmin / family.delta0,
                           cutoff_windows(generation - m, total))
    return out


# ---------------------------------------------------------------------------
# support volumes


def support_volume(family: PipeFamily, Ms: Sequence[int], k: int,
                   radius_factor: float = 3.0, samples: int = 20000,
                   seed: int = 99, grid: Optional[Grid] = None) -> dict:
    """Volume fraction of the nested tube set: intersection over scales
    m <= k of the union of (radius_factor * delta0) scaled tubes.
    Monte-Carlo with exact analytic distances, plus an optional deterministic
    grid count."""
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0.0, TWO_PI, size=(samples, 3))
    inside = np.ones(samples, dtype=bool)
    rad = radius_factor * family.delta0
    for m in range(k + 1):
        dmin = None
        for j in range(family.frame.npipes):
            d = family.scaled_distance_points(pts, j, Ms[m])
            dmin = d if dmin is None else np.minimum(dmin, d)
        inside &= dmin <= rad
    frac = float(inside.mean())
    half = 1.96 * float(np.sqrt(max(frac * (1 - frac), 1e-12) / samples))
    out = {"k": k, "radius_factor": radius_factor, "mc_fraction": frac,
           "mc_ci_halfwidth": half, "samples": samples}
    if grid is not None:
        gin = np.ones((grid.n,) * 3, dtype=bool)
        for m in range(k + 1):
            gin &= family.min_scaled_distance(grid, Ms[m]) <= rad
        out["grid_fraction"] = float(gin.mean())
    return out


def per_cube_max_fraction(family: PipeFamily, Ms: Sequence[int], k: int,
                          q: int = 4, radius_factor: float = 3.0,
                          n: int = 64) -> float:
    """Max over a q^3 cube partition of the local nested-tube volume fraction."""
    grid = Grid(n)
    inside = np.ones((n,) * 3, dtype=bool)
    for m in range(k + 1):
        inside &= (family.min_scaled_distance(grid, Ms[m])
                   <= radius_factor * family.delta0)
    s = n // q
    best = 0.0
    for a in range(q):
        for b in range(q):
            for c in range(q):
                frac = inside[a * s:(a + 1) * s, b * s:(b + 1) * s,
                              c * s:(c + 1) * s].mean()
                best = max(best, float(frac))
    return best


def geometry_report(family: PipeFamily, grid: Grid, Ms: Sequence[int],
                    Ns: Sequence[int]) -> dict:
    """JSON-ready geometry summary for the given scales. Carrier-resolvable
    levels get grid diagnostics; rate-only levels get analytic values."""
    seps = family.axis_separations()
    iu = np.triu_indices(family.frame.npipes, 1)
    levels = []
    for k in range(len(Ms)):
        M, N = Ms[k], Ns[k]
        eta_inf = np.abs(family.frame.eta_arr()).max(axis=1).astype(int)
        resolvable = bool((N * eta_inf).max() <= grid.n // 2 - 1)
        entry = {
            "k": k, "M": M, "N": N, "carrier_resolvable": resolvable,
            "A_analytic": [normalizer(family, j, M, N)["analytic"]
                           for j in range(family.frame.npipes)],
            "carrier_alignment": family.carrier_alignment(M, N).tolist(),
        }
        if resolvable:
            entry["A_grid"] = [normalizer_grid(family, grid, j, M, N)
                               for j in range(family.frame.npipes)]
            entry["support_counts"] = [family.support_count(grid, j, M)
                                       for j in range(family.frame.npipes)]
            entry["layer_agreement"] = [layer_agreement(family, grid, j, M, N)
                                        for j in range(family.frame.npipes)]
        levels.append(entry)
    return {
        "family": family.to_json_dict(),
        "min_separation": family.min_separation(),
        "support_separation": family.support_separation(),
        "pairwise_separations": seps[iu].tolist(),
        "volume_fraction": family.volume_fraction(),
        "levels": levels,
    }
