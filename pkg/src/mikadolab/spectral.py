"""Pseudo-spectral core on the 2pi-periodic 3-torus.

Conventions used throughout the package:

* real-space arrays are indexed ``[ix, iy, iz]`` (axis 0 is x); snapshots are
  written x-fastest, see :func:`write_snapshot`.
* transforms use ``norm="forward"``, so spectral entries are true Fourier
  coefficients ``c_xi = (2pi)^{-3} int f e^{-i xi.x}`` evaluated by the DFT.
  Zero-padding and truncation are then literal coefficient copies.
* the normalized integral of ``f`` is ``c_0``; ``l2norm(sin x1) = 1/sqrt(2)``.
* symmetric 3x3 tensor fields are stored with 6 components in the order
  ``(xx, xy, xz, yy, yz, zz)``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

import numpy as np
import scipy.fft as sfft

SYM_IDX = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))
# SYM_OF[i][j] = position of (i,j) in the 6-component storage
SYM_OF = ((0, 1, 2), (1, 3, 4), (2, 4, 5))

_RANK_COMPS = {"scalar": 1, "vector": 3, "symtensor": 6}
_RANK_CODES = {"scalar": 0, "vector": 1, "symtensor": 2}
_CODE_RANKS = {v: k for k, v in _RANK_CODES.items()}


def _workers() -> int:
    return -1


class Grid:
    """Uniform n^3 collocation grid on [0, 2pi)^3.

    ``dealias_fraction`` sets the band kept by the dealiased product used in
    the standalone Navier-Stokes stepper (2/3-rule by default). Construction
    and identity checks use exact padded products instead and are not limited
    by it.
    """

    def __init__(self, n: int, dealias_fraction: float = 2.0 / 3.0):
        if n < 4 or n % 2:
            raise ValueError(f"grid size must be even and >= 4, got {n}")
        if not 0.0 < dealias_fraction <= 1.0:
            raise ValueError("dealias_fraction must lie in (0, 1]")
        self.n = int(n)
        self.dealias_fraction = float(dealias_fraction)
        self.h = 2.0 * np.pi / self.n
        kx = np.fft.fftfreq(n, d=1.0 / n).astype(np.float64)
        kz = np.arange(n // 2 + 1, dtype=np.float64)
        self.kx = kx.reshape(n, 1, 1)
        self.ky = kx.reshape(1, n, 1)
        self.kz = kz.reshape(1, 1, n // 2 + 1)
        self.k2 = self.kx**2 + self.ky**2 + self.kz**2
        self.kmag = np.sqrt(self.k2)
        # |xi|_inf per mode, used for band masks
        self.kinf = np.maximum(np.abs(self.kx), np.maximum(np.abs(self.ky), self.kz))
        with np.errstate(divide="ignore"):
            inv = 1.0 / self.k2
        inv[0, 0, 0] = 0.0
        self.inv_k2 = inv

    @property
    def dealias_band(self) -> int:
        return int(np.floor(self.dealias_fraction * (self.n / 2)))

    def axes(self) -> np.ndarray:
        return np.arange(self.n) * self.h

    def meshgrid(self):
        x = self.axes()
        return np.meshgrid(x, x, x, indexing="ij")

    # -- transforms ---------------------------------------------------------

    def fwd(self, data: np.ndarray) -> np.ndarray:
        """Real -> half-complex spectrum, per component."""
        return sfft.rfftn(data, axes=(-3, -2, -1), norm="forward",
                          workers=_workers())

    def inv(self, hat: np.ndarray) -> np.ndarray:
        return sfft.irfftn(hat, s=(self.n, self.n, self.n), axes=(-3, -2, -1),
                           norm="forward", workers=_workers())

    def __repr__(self):
        return f"Grid(n={self.n}, dealias_fraction={self.dealias_fraction:.4f})"


@dataclass
class SpectralField:
    """A real field on a grid: scalar, vector, or symmetric tensor.

    Real space is the source of truth. ``hat()`` transforms on demand.
    """

    grid: Grid
    rank: str
    data: np.ndarray

    def __post_init__(self):
        if self.rank not in _RANK_COMPS:
            raise ValueError(f"unknown rank {self.rank!r}")
        want = _RANK_COMPS[self.rank]
        n = self.grid.n
        expect = (n, n, n) if want == 1 else (want, n, n, n)
        if self.data.shape != expect:
            raise ValueError(
                f"{self.rank} field on n={n} needs shape {expect}, "
                f"got {self.data.shape}")

    @property
    def ncomp(self) -> int:
        return _RANK_COMPS[self.rank]

    def hat(self) -> np.ndarray:
        return self.grid.fwd(self.data)

    def copy(self) -> "SpectralField":
        return SpectralField(self.grid, self.rank, self.data.copy())

    def linf(self) -> float:
        return linf(self.data, self.rank)

    def l2(self) -> float:
        return l2norm(self.data, self.rank)

    def mean(self) -> np.ndarray:
        if self.rank == "scalar":
            return np.asarray(self.data.mean())
        return self.data.mean(axis=(-3, -2, -1))


def scalar_field(grid: Grid, data: np.ndarray) -> SpectralField:
    return SpectralField(grid, "scalar", data)


def vector_field(grid: Grid, data: np.ndarray) -> SpectralField:
    return SpectralField(grid, "vector", data)


def symtensor_field(grid: Grid, data: np.ndarray) -> SpectralField:
    return SpectralField(grid, "symtensor", data)


#: Frobenius weights for the packed symmetric-tensor layout
#: (xx, xy, xz, yy, yz, zz): off-diagonal entries appear twice in the matrix.
SYMTENSOR_WEIGHTS = np.array([1.0, 2.0, 2.0, 1.0, 2.0, 1.0])


def _pointwise_square(data: np.ndarray, rank: str) -> np.ndarray:
    if data.ndim == 3:
        return data * data
    sq = data * data
    if rank == "symtensor":
        return np.tensordot(SYMTENSOR_WEIGHTS, sq, axes=(0, 0))
    return sq.sum(axis=0)


def linf(data: np.ndarray, rank: str = "vector") -> float:
    """Sup over grid points of the pointwise magnitude.

    Symmetric tensors use the Frobenius magnitude of the full 3x3 matrix,
    so packed off-diagonal components count twice.
    """
    return float(np.sqrt(_pointwise_square(data, rank).max()))


def l2norm(data: np.ndarray, rank: str = "vector") -> float:
    """Normalized L2 norm: sqrt of the mean of |f|^2 over the torus."""
    return float(np.sqrt(np.mean(_pointwise_square(data, rank))))


# ---------------------------------------------------------------------------
# multipliers


@dataclass(frozen=True)
class MultiplierSymbol:
    """Scalar Fourier multiplier m(xi) with a declared value at xi = 0.

    ``mean_value = None`` means the symbol is undefined on the mean mode; the
    field must then have zero mean or application raises
    ``ValueError("mean-mode-undefined: ...")``.
    """

    name: str
    func: Callable[[Grid], np.ndarray]
    mean_value: Optional[float] = None

    def table(self, grid: Grid) -> np.ndarray:
        tab = np.asarray(self.func(grid), dtype=np.float64).copy()
        if self.mean_value is not None:
            tab[0, 0, 0] = self.mean_value
        return tab


def heat_symbol(t: float) -> MultiplierSymbol:
    return MultiplierSymbol(f"heat(t={t})", lambda g: np.exp(-g.k2 * t), 1.0)


def inv_laplacian_symbol() -> MultiplierSymbol:
    # mean mode declared 0: the inverse acts on mean-free fields
    return MultiplierSymbol("inv_laplacian", lambda g: -g.inv_k2, 0.0)


def inv_grad_symbol() -> MultiplierSymbol:
    def f(g: Grid) -> np.ndarray:
        with np.errstate(divide="ignore"):
            tab = 1.0 / g.kmag
        tab[0, 0, 0] = 0.0
        return tab
    return MultiplierSymbol("inv_grad", f, 0.0)


def apply_multiplier(f: SpectralField, symbol: MultiplierSymbol) -> SpectralField:
    tab = symbol.table(f.grid)
    hat = f.hat()
    if symbol.mean_value is None:
        m = hat[..., 0, 0, 0] if f.ncomp > 1 else hat[0, 0, 0]
        if np.max(np.abs(np.atleast_1d(m))) > 1e-13 * max(1.0, f.linf()):
            raise ValueError(
                f"mean-mode-undefined: symbol {symbol.name!r} has no declared "
                "value at xi=0 but the field has nonzero mean")
    return SpectralField(f.grid, f.rank, f.grid.inv(hat * tab))


def heat_evolve(f: SpectralField, t: float) -> SpectralField:
    if t < 0:
        raise ValueError("heat_evolve needs t >= 0")
    return apply_multiplier(f, heat_symbol(t))


# ---------------------------------------------------------------------------
# differential operators (exact DFT symbols); *_hat variants stay spectral


def gradient_hat(grid: Grid, shat: np.ndarray) -> np.ndarray:
    out = np.empty((3,) + shat.shape, dtype=shat.dtype)
    out[0] = 1j * grid.kx * shat
    out[1] = 1j * grid.ky * shat
    out[2] = 1j * grid.kz * shat
    return out


def divergence_hat(grid: Grid, vhat: np.ndarray) -> np.ndarray:
    return 1j * (grid.kx * vhat[0] + grid.ky * vhat[1] + grid.kz * vhat[2])


def div_tensor_hat(grid: Grid, that: np.ndarray) -> np.ndarray:
    """(div T)_l = sum_i d_i T_{il} for a symmetric 6-component spectrum."""
    k = (grid.kx, grid.ky, grid.kz)
    out = np.empty((3,) + that.shape[1:], dtype=that.dtype)
    for ell in range(3):
        acc = k[0] * that[SYM_OF[0][ell]]
        acc = acc + k[1] * that[SYM_OF[1][ell]]
        acc = acc + k[2] * that[SYM_OF[2][ell]]
        out[ell] = 1j * acc
    return out


def curl_hat(grid: Grid, vhat: np.ndarray) -> np.ndarray:
    kx, ky, kz = grid.kx, grid.ky, grid.kz
    out = np.empty_like(vhat)
    out[0] = 1j * (ky * vhat[2] - kz * vhat[1])
    out[1] = 1j * (kz * vhat[0] - kx * vhat[2])
    out[2] = 1j * (kx * vhat[1] - ky * vhat[0])
    return out


def curl_curl_hat(grid: Grid, vhat: np.ndarray) -> np.ndarray:
    """curl curl = grad div - Lap, i.e. |xi|^2 Id - xi xi^T per mode."""
    k = (grid.kx, grid.ky, grid.kz)
    kdot = k[0] * vhat[0] + k[1] * vhat[1] + k[2] * vhat[2]
    out = np.empty_like(vhat)
    for i in range(3):
        out[i] = grid.k2 * vhat[i] - k[i] * kdot
    return out


def d_operator_hat(grid: Grid, vhat: np.ndarray) -> np.ndarray:
    """Df = -grad f - (grad f)^T + 2(div f)Id, so that div Df = curl curl f."""
    k = (grid.kx, grid.ky, grid.kz)
    divf = 1j * (k[0] * vhat[0] + k[1] * vhat[1] + k[2] * vhat[2])
    out = np.empty((6,) + vhat.shape[1:], dtype=vhat.dtype)
    for c, (i, l) in enumerate(SYM_IDX):
        t = -1j * (k[i] * vhat[l] + k[l] * vhat[i])
        if i == l:
            t = t + 2.0 * divf
        out[c] = t
    return out


def leray_hat(grid: Grid, vhat: np.ndarray) -> np.ndarray:
    """Leray projection Id - xi xi^T/|xi|^2; the mean mode is left alone."""
    k = (grid.kx, grid.ky, grid.kz)
    kdot = (k[0] * vhat[0] + k[1] * vhat[1] + k[2] * vhat[2]) * grid.inv_k2
    out = np.empty_like(vhat)
    for i in range(3):
        out[i] = vhat[i] - k[i] * kdot
    return out


def anti_divergence_hat(grid: Grid, vhat: np.ndarray) -> np.ndarray:
    """Symmetric anti-divergence R: div(RV) = V - mean(V).

    Per mode (RV)_{il} = i[ xi_i xi_l (xi.V)/(2|xi|^4) + (xi.V) d_{il}/(2|xi|^2)
                          - (xi_i V_l + xi_l V_i)/|xi|^2 ].
    The mean mode maps to zero.
    """
    k = (grid.kx, grid.ky, grid.kz)
    inv = grid.inv_k2
    kdot = k[0] * vhat[0] + k[1] * vhat[1] + k[2] * vhat[2]
    out = np.empty((6,) + vhat.shape[1:], dtype=vhat.dtype)
    for c, (i, l) in enumerate(SYM_IDX):
        t = 0.5 * k[i] * k[l] * kdot * inv * inv
        t = t - (k[i] * vhat[l] + k[l] * vhat[i]) * inv
        if i == l:
            t = t + 0.5 * kdot * inv
        out[c] = 1j * t
    return out


def _lift(op_hat):
    def op(f: SpectralField) -> SpectralField:
        hat = f.hat()
        out = op_hat(f.grid, hat)
        ncomp = out.shape[0] if out.ndim == 4 else 1
        rank = {1: "scalar", 3: "vector", 6: "symtensor"}[ncomp]
        return SpectralField(f.grid, rank, f.grid.inv(out))
    return op


def gradient(f: SpectralField) -> SpectralField:
    return _lift(gradient_hat)(f)


def divergence(f: SpectralField) -> SpectralField:
    if f.rank == "vector":
        return _lift(divergence_hat)(f)
    if f.rank == "symtensor":
        return _lift(div_tensor_hat)(f)
    raise ValueError("divergence needs a vector or symtensor field")


def curl(f: SpectralField) -> SpectralField:
    return _lift(curl_hat)(f)


def curl_curl(f: SpectralField) -> SpectralField:
    return _lift(curl_curl_hat)(f)


def d_operator(f: SpectralField) -> SpectralField:
    return _lift(d_operator_hat)(f)


def leray(f: SpectralField) -> SpectralField:
    return _lift(leray_hat)(f)


def anti_divergence(f: SpectralField) -> SpectralField:
    return _lift(anti_divergence_hat)(f)


def laplacian_hat(grid: Grid, hat: np.ndarray) -> np.ndarray:
    return -grid.k2 * hat


# ---------------------------------------------------------------------------
# Littlewood-Paley decomposition


def _bump_g(v: np.ndarray) -> np.ndarray:
    out = np.zeros_like(v)
    pos = v > 0
    out[pos] = np.exp(-1.0 / v[pos])
    return out


def smoothstep(v: np.ndarray) -> np.ndarray:
    """C-infinity step: 0 for v <= 0, 1 for v >= 1, strictly monotone inside."""
    v = np.asarray(v, dtype=np.float64)
    up = _bump_g(np.clip(v, 0.0, 1.0))
    down = _bump_g(np.clip(1.0 - v, 0.0, 1.0))
    with np.errstate(invalid="ignore"):
        s = up / (up + down)
    s[v <= 0.0] = 0.0
    s[v >= 1.0] = 1.0
    return s


def lp_eta(r: np.ndarray) -> np.ndarray:
    """Radial cutoff: 1 on r <= 1, 0 on r >= 2, smooth in between."""
    return 1.0 - smoothstep(np.asarray(r, dtype=np.float64) - 1.0)


def lp_band_list(n: int) -> list[int]:
    """Dyadic band centers covering every mode of an n-grid (radius sqrt3 n/2)."""
    top = int(np.ceil(np.log2(np.sqrt(3.0) * n / 2.0)))
    return [2**j for j in range(top + 1)]


def lp_project_hat(grid: Grid, hat: np.ndarray, band: int) -> np.ndarray:
    """P_N with multiplier pi(|xi|/N) = eta(|xi|/N) - eta(2|xi|/N)."""
    r = grid.kmag / band
    return hat * (lp_eta(r) - lp_eta(2.0 * r))


def lp_low_hat(grid: Grid, hat: np.ndarray, band: int) -> np.ndarray:
    """P_{<=N} with multiplier eta(2|xi|/(2N)) = eta(|xi|/N)."""
    return hat * lp_eta(grid.kmag / band)


def littlewood_paley(f: SpectralField, bands: Optional[list[int]] = None):
    """Return {N: P_N f} plus the low block, forming a partition of unity."""
    grid = f.grid
    if bands is None:
        bands = lp_band_list(grid.n)
    hat = f.hat()
    out = {}
    low = lp_eta(2.0 * grid.kmag / bands[0])
    out["low"] = SpectralField(grid, f.rank, grid.inv(hat * low))
    for nb in bands:
        out[nb] = SpectralField(grid, f.rank, grid.inv(lp_project_hat(grid, hat, nb)))
    return out


def lp_partition_defect(grid: Grid, bands: Optional[list[int]] = None) -> float:
    """Max deviation from 1 of the summed LP multipliers over all modes."""
    if bands is None:
        bands = lp_band_list(grid.n)
    total = lp_eta(2.0 * grid.kmag / bands[0])
    for nb in bands:
        r = grid.kmag / nb
        total = total + (lp_eta(r) - lp_eta(2.0 * r))
    return float(np.abs(total - 1.0).max())


# ---------------------------------------------------------------------------
# products


def outer_sym(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Symmetrized collocation product u (x) v + v (x) u ... halved:
    returns the symmetric part (u_i v_l + v_i u_l)/2 as 6 components."""
    out = np.empty((6,) + u.shape[1:], dtype=np.float64)
    for c, (i, l) in enumerate(SYM_IDX):
        out[c] = 0.5 * (u[i] * v[l] + v[i] * u[l])
    return out


def outer_self(u: np.ndarray) -> np.ndarray:
    """Collocation product u (x) u as 6 components."""
    out = np.empty((6,) + u.shape[1:], dtype=np.float64)
    for c, (i, l) in enumerate(SYM_IDX):
        out[c] = u[i] * u[l]
    return out


def pad_hat(hat: np.ndarray, n: int, m: int) -> np.ndarray:
    """Copy an n-grid half-complex spectrum into an m-grid spectrum (m > n)."""
    if m <= n or m % 2 or n % 2:
        raise ValueError("pad_hat needs even m > n")
    half = n // 2
    shape = hat.shape[:-3] + (m, m, m // 2 + 1)
    out = np.zeros(shape, dtype=hat.dtype)
    sl = (slice(0, half), slice(-half, None))
    for ax0 in range(2):
        for ax1 in range(2):
            out[..., sl[ax0], sl[ax1], 0:half + 1] = hat[..., sl[ax0], sl[ax1], 0:half + 1]
    return out


def truncate_hat(hat: np.ndarray, m: int, n: int) -> np.ndarray:
    """Inverse of pad_hat; target Nyquist bins are zeroed."""
    if m <= n or m % 2 or n % 2:
        raise ValueError("truncate_hat needs even m > n")
    half = n // 2
    shape = hat.shape[:-3] + (n, n, n // 2 + 1)
    out = np.zeros(shape, dtype=hat.dtype)
    sl = (slice(0, half), slice(-half, None))
    for ax0 in range(2):
        for ax1 in range(2):
            out[..., sl[ax0], sl[ax1], 0:half + 1] = hat[..., sl[ax0], sl[ax1], 0:half + 1]
    out[..., half, :, :] = 0.0
    out[..., :, half, :] = 0.0
    out[..., :, :, half] = 0.0
    return out


def padded_values(grid: Grid, hat: np.ndarray, m: Optional[int] = None) -> np.ndarray:
    """Evaluate a spectrum on a finer 3m^3 collocation grid (default m=3n/2)."""
    n = grid.n
    if m is None:
        m = (3 * n) // 2
    big = pad_hat(hat, n, m)
    return sfft.irfftn(big, s=(m, m, m), axes=(-3, -2, -1), norm="forward",
                       workers=_workers())


def dealiased_outer_hat(grid: Grid, uhat: np.ndarray, vhat: Optional[np.ndarray] = None,
                        m: Optional[int] = None) -> np.ndarray:
    """Spectrum of the symmetric product computed alias-free.

    Fields are evaluated on a 3/2-padded grid, multiplied pointwise, and the
    product spectrum is truncated back. For inputs band-limited to
    |xi|_inf <= n/2 - 1 the retained band is exact.
    """
    n = grid.n
    if m is None:
        m = (3 * n) // 2
    u = padded_values(grid, uhat, m)
    if vhat is None:
        prod = outer_self(u)
    else:
        v = padded_values(grid, vhat, m)
        prod = outer_sym(u, v)
    phat = sfft.rfftn(prod, axes=(-3, -2, -1), norm="forward", workers=_workers())
    return truncate_hat(phat, m, n)


def band_mask(grid: Grid, band: int) -> np.ndarray:
    """Boolean mask of modes with |xi|_inf <= band."""
    return grid.kinf <= band


def truncate_band(grid: Grid, hat: np.ndarray, band: int) -> np.ndarray:
    out = hat.copy()
    out[..., ~band_mask(grid, band)] = 0.0
    return out


# ---------------------------------------------------------------------------
# random fields


def random_band_limited(grid: Grid, band: int, rng: np.random.Generator,
                        rank: str = "vector", divergence_free: bool = False,
                        mean_free: bool = True) -> SpectralField:
    """Random real field with spectrum supported in |xi|_inf <= band."""
    ncomp = _RANK_COMPS[rank]
    n = grid.n
    data = rng.standard_normal((ncomp, n, n, n) if ncomp > 1 else (n, n, n))
    hat = grid.fwd(data)
    hat = truncate_band(grid, hat, band)
    if mean_free:
        hat[..., 0, 0, 0] = 0.0
    if divergence_free:
        if rank != "vector":
            raise ValueError("divergence_free applies to vector fields")
        hat = leray_hat(grid, hat)
    vals = grid.inv(hat)
    return SpectralField(grid, rank, vals)


# ---------------------------------------------------------------------------
# MKL1 snapshot format

_MAGIC = b"MKL1"


def write_snapshot(path, f: SpectralField) -> None:
    """Write magic 'MKL1', little-endian int32 (n, rank code, ncomp), then
    float64 real-space samples, x-fastest."""
    n = f.grid.n
    header = _MAGIC + struct.pack("<iii", n, _RANK_CODES[f.rank], f.ncomp)
    data = f.data if f.ncomp > 1 else f.data[None]
    with open(path, "wb") as fh:
        fh.write(header)
        for c in range(f.ncomp):
            fh.write(np.ascontiguousarray(data[c].transpose(2, 1, 0),
                                          dtype="<f8").tobytes())


def read_snapshot(path, dealias_fraction: float = 2.0 / 3.0) -> SpectralField:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise ValueError(f"not an MKL1 snapshot: bad magic {magic!r}")
        n, code, ncomp = struct.unpack("<iii", fh.read(12))
        rank = _CODE_RANKS.get(code)
        if rank is None or _RANK_COMPS[rank] != ncomp:
            raise ValueError(f"inconsistent MKL1 header: rank {code}, ncomp {ncomp}")
        raw = np.frombuffer(fh.read(), dtype="<f8")
    if raw.size != ncomp * n**3:
        raise ValueError("MKL1 payload size mismatch")
    comps = raw.reshape(ncomp, n, n, n).transpose(0, 3, 2, 1)
    grid = Grid(n, dealias_fraction)
    data = np.ascontiguousarray(comps if ncomp > 1 else comps[0])
    return SpectralField(grid, rank, data)
