"""Recursive construction of the pipe-flow potentials and the initial datum.

Level 0 seeds the recursion with a single pipe: psi0_0 = N_0 * phi_0 * Psi_{1,0}
(mollified at the level-0 scale).  Each later level k reads the deformation
tensor D psi0_{k-1} of the previous potential, rescales it into the frame's
reconstruction ball (entrywise within c0 of the identity), evaluates the six
frame coefficients Gamma_j there, masks by the inter-level cutoff chi_k, and
lays down the level's finer pipe potentials with amplitudes

    a_{j,k} = N_k * sqrt(2 ||D psi0_{k-1}||_inf / (c0 |eta_j|^2 A_{j,k}))
              * chi_k * Gamma_j(Id + c0 D psi0_{k-1} / ||D psi0_{k-1}||_inf)

where A_{j,k} is the exact grid normalizer of the squared envelope-carrier
product (so the oscillatory part of the squared pipe field is exactly
grid-mean-free).  The level potential is psi0_k = phi_k * sum_j a_{j,k}
Psi0_{j,k} with phi_k a Gaussian mollifier applied spectrally.

Sup norms feeding the recursion are taken on a refinement-by-2 oversampled
grid (the trigonometric interpolant's max, which always dominates the coarse
grid max because the coarse samples are a subset of the fine ones).

The initial datum is U0 = sum_k curl curl psi0_k; the equivalent route
U0 = sum_k div D psi0_k is provided separately so the two can be compared as
independent spectral code paths.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .frame import gamma
from .geometry import PipeFamily, cutoff_grid, mikado_potential, normalizer_grid
from .params import ParameterSet
from .spectral import (
    Grid,
    SpectralField,
    curl_curl_hat,
    curl_hat,
    d_operator_hat,
    div_tensor_hat,
    divergence_hat,
    gradient_hat,
    heat_symbol,
    apply_multiplier,
    padded_values,
    truncate_band,
    vector_field,
)

__all__ = [
    "BuildError",
    "DataLevel",
    "build_level",
    "build_all",
    "assemble_data",
    "assemble_data_via_deformation",
    "recursion_diagnostics",
    "mollify",
    "sup_norm",
    "l1_norm",
]

#: Frobenius weights for the 6-component symmetric tensor storage
#: (xx, xy, xz, yy, yz, zz): off-diagonal entries appear twice in the matrix.
FROBENIUS_WEIGHTS = (1.0, 2.0, 2.0, 1.0, 2.0, 1.0)

#: Identity matrix in 6-component symmetric storage.
IDENTITY_SYM = np.array([1.0, 0.0, 0.0, 1.0, 0.0, 1.0])


class BuildError(RuntimeError):
    """The recursion cannot proceed from the supplied state."""


def mollify(f: SpectralField, scale: float) -> SpectralField:
    """Convolve with a Gaussian of standard deviation ``scale``.

    Applied spectrally with the exact symbol exp(-scale^2 |xi|^2 / 2), which
    is the heat semigroup at time scale^2/2.
    """
    if scale < 0.0:
        raise ValueError(f"mollifier scale must be >= 0, got {scale}")
    return apply_multiplier(f, heat_symbol(0.5 * scale * scale))


def sup_norm(
    grid: Grid,
    data: np.ndarray,
    weights: Optional[Sequence[float]] = None,
    refine: int = 2,
) -> float:
    """Sup of the pointwise (weighted) Euclidean magnitude of a field.

    ``data`` is a scalar (n,n,n) or a component stack (c,n,n,n).  The field is
    read as its trigonometric interpolant and sampled on a ``refine``-times
    finer grid; since the coarse samples are a subset, this never undershoots
    the plain grid max.  ``weights`` multiply the squared components (used for
    the Frobenius norm of symmetric 6-component storage).
    """
    stack = data[None] if data.ndim == 3 else data
    if weights is None:
        w = [1.0] * stack.shape[0]
    else:
        w = list(weights)
        if len(w) != stack.shape[0]:
            raise ValueError("one weight per component required")
    if refine <= 1:
        sq = np.zeros(stack.shape[1:])
        for c, comp in enumerate(stack):
            sq += w[c] * comp * comp
        return float(np.sqrt(sq.max()))
    m = refine * grid.n
    acc = None
    for c, comp in enumerate(stack):
        vals = padded_values(grid, grid.fwd(comp), m)
        vals *= vals
        if w[c] != 1.0:
            vals *= w[c]
        acc = vals if acc is None else acc + vals
    return float(np.sqrt(acc.max()))


def l1_norm(data: np.ndarray) -> float:
    """Normalized L1 norm: mean over the torus of the pointwise magnitude."""
    if data.ndim == 3:
        return float(np.abs(data).mean())
    return float(np.sqrt((data * data).sum(axis=0)).mean())


@dataclass
class DataLevel:
    """One level of the recursive construction.

    ``a`` stacks the six coefficient fields a_{j,k}; ``chi`` is the cutoff
    factor they share (identically 1 at level 0); ``prefactors`` are the
    constant amplitudes P_{j,k} with a_{j,k} = P_{j,k} * chi * Gamma_j(...),
    so P alone carries the scale normalization (needed by the collapsed
    stress formulas downstream, where the normalizer cancels).
    """

    k: int
    M: int
    N: int
    psi0: SpectralField
    a: np.ndarray
    chi: np.ndarray
    normalizers: np.ndarray
    prefactors: np.ndarray
    d_psi0_prev_sup: float
    nash_radius: float
    mollifier_scale: float
    representation: str

    @property
    def grid(self) -> Grid:
        return self.psi0.grid

    def a_field(self, j: int) -> SpectralField:
        return SpectralField(self.grid, "scalar", self.a[j])


def _potentials(
    family: PipeFamily, grid: Grid, M: int, N: int, representation: str
) -> List[SpectralField]:
    return [
        mikado_potential(family, grid, j, M, N, representation=representation)
        for j in range(family.frame.npipes)
    ]


def build_level(
    params: ParameterSet,
    family: PipeFamily,
    grid: Grid,
    prev: Optional[DataLevel] = None,
    representation: str = "sampled",
) -> DataLevel:
    """Construct level k = 0 (prev None) or prev.k + 1 of the recursion."""
    k = 0 if prev is None else prev.k + 1
    if k > params.K:
        raise ValueError(f"level {k} exceeds the configured truncation K = {params.K}")
    M, N = params.Ms[k], params.Ns[k]
    scale = params.mollifier_scale(k)
    npipes = family.frame.npipes
    normalizers = np.array(
        [normalizer_grid(family, grid, j, M, N) for j in range(npipes)]
    )

    if k == 0:
        n0 = float(N)
        prefactors = np.zeros(npipes)
        prefactors[0] = n0
        a = np.zeros((npipes, grid.n, grid.n, grid.n))
        a[0] = n0
        chi = np.ones((grid.n, grid.n, grid.n))
        psi_seed = mikado_potential(family, grid, 0, M, N, representation=representation)
        shat = grid.fwd(n0 * psi_seed.data)
        shat *= heat_symbol(0.5 * scale * scale).table(grid)
        # sampled pipes alias energy onto the Nyquist planes, where one-sided
        # derivative symbols do not survive a real-field round trip; built
        # potentials therefore live in the open band |xi|_inf <= n/2 - 1
        shat = truncate_band(grid, shat, grid.n // 2 - 1)
        psi0 = vector_field(grid, grid.inv(shat))
        return DataLevel(
            k=0, M=M, N=N, psi0=psi0, a=a, chi=chi,
            normalizers=normalizers, prefactors=prefactors,
            d_psi0_prev_sup=0.0, nash_radius=0.0,
            mollifier_scale=scale, representation=representation,
        )

    dpsi = grid.inv(d_operator_hat(grid, prev.psi0.hat()))
    sup = sup_norm(grid, dpsi, weights=FROBENIUS_WEIGHTS)
    if sup == 0.0:
        raise BuildError(
            f"degenerate-previous-level: ||D psi0_{k - 1}||_inf = 0, "
            "the recursion has no deformation to reconstruct"
        )

    eps = (params.c0 / sup) * dpsi
    # the refined sup dominates every coarse sample, so the normalized
    # deviation cannot leave the frame's reconstruction ball
    fro = np.sqrt(np.tensordot(FROBENIUS_WEIGHTS, eps * eps, axes=(0, 0)))
    nash_radius = float(fro.max())
    assert nash_radius <= params.c0 * (1.0 + 1e-9), (
        "normalized deformation left the Nash ball; normalization is broken"
    )

    gammas = gamma(family.frame, eps + IDENTITY_SYM.reshape(6, 1, 1, 1))
    chi = cutoff_grid(
        family, grid, params.Ms[:k], generation=k, total_generations=params.K + 1
    )
    eta_sq = family.frame.eta_sq()
    prefactors = np.array(
        [
            N * np.sqrt(2.0 * sup / (params.c0 * eta_sq[j] * normalizers[j]))
            for j in range(npipes)
        ]
    )
    a = prefactors.reshape(npipes, 1, 1, 1) * chi[None] * gammas

    shat = None
    for j in range(npipes):
        pot = mikado_potential(family, grid, j, M, N, representation=representation)
        term = grid.fwd(a[j][None] * pot.data)
        shat = term if shat is None else shat + term
    shat *= heat_symbol(0.5 * scale * scale).table(grid)
    # same open-band restriction as the seed level (Nyquist planes excluded)
    shat = truncate_band(grid, shat, grid.n // 2 - 1)
    psi0 = vector_field(grid, grid.inv(shat))

    return DataLevel(
        k=k, M=M, N=N, psi0=psi0, a=a, chi=chi,
        normalizers=normalizers, prefactors=prefactors,
        d_psi0_prev_sup=sup, nash_radius=nash_radius,
        mollifier_scale=scale, representation=representation,
    )


def build_all(
    params: ParameterSet,
    family: PipeFamily,
    grid: Grid,
    representation: str = "sampled",
    env_bandwidth: Optional[int] = None,
) -> List[DataLevel]:
    """Build levels 0..K in order (strict data dependence across k)."""
    if env_bandwidth is None:
        params.check_grid(grid.n, family.frame)
    else:
        params.check_grid(grid.n, family.frame, env_bandwidth=env_bandwidth)
    levels = [build_level(params, family, grid, representation=representation)]
    for _ in range(params.K):
        levels.append(
            build_level(params, family, grid, prev=levels[-1],
                        representation=representation)
        )
    return levels


def assemble_data(levels: Sequence[DataLevel]) -> SpectralField:
    """Initial datum U0 = sum_k curl curl psi0_k (exactly divergence-free)."""
    if not levels:
        raise ValueError("no levels to assemble")
    grid = levels[0].grid
    acc = None
    for lvl in levels:
        term = curl_curl_hat(grid, lvl.psi0.hat())
        acc = term if acc is None else acc + term
    assert np.abs(acc[:, 0, 0, 0]).max() == 0.0, "curl curl left a nonzero mean"
    u = vector_field(grid, grid.inv(acc))
    div_sup = sup_norm(grid, grid.inv(divergence_hat(grid, acc)), refine=1)
    assert div_sup <= 1e-12 * max(u.linf(), 1e-300), (
        f"assembled datum is not divergence-free: {div_sup:.3e}"
    )
    return u


def assemble_data_via_deformation(levels: Sequence[DataLevel]) -> SpectralField:
    """The same datum through the deformation route: sum_k div D psi0_k."""
    if not levels:
        raise ValueError("no levels to assemble")
    grid = levels[0].grid
    acc = None
    for lvl in levels:
        term = div_tensor_hat(grid, d_operator_hat(grid, lvl.psi0.hat()))
        acc = term if acc is None else acc + term
    return vector_field(grid, grid.inv(acc))


def _grad_sup(grid: Grid, hat: np.ndarray, weights=None) -> float:
    """Refined sup of the gradient of a component stack given its spectrum."""
    comps = []
    w = []
    stack = hat[None] if hat.ndim == 3 else hat
    base_w = [1.0] * stack.shape[0] if weights is None else list(weights)
    for c, comp_hat in enumerate(stack):
        g = gradient_hat(grid, comp_hat)
        for i in range(3):
            comps.append(grid.inv(g[i]))
            w.append(base_w[c])
    return sup_norm(grid, np.stack(comps), weights=w)


def _fit_sandwich(values: Sequence[float]) -> dict:
    """Smallest C >= 1 with C^-2 (C^2 X0)^(2^-k) <= X_k <= C^2 (C^2 X0)^(2^-k).

    Monotone in C (the upper envelope grows, the lower shrinks), so bisection
    on log C converges; the fitted constant quantifies how tightly the
    measured deformation sups follow the square-root recursion.
    """
    x0 = values[0]

    def ok(c: float) -> bool:
        for k, xk in enumerate(values):
            core = (c * c * x0) ** (2.0 ** (-k))
            if not (core / (c * c) <= xk <= core * c * c):
                return False
        return True

    lo, hi = 0.0, 60.0
    if not ok(np.exp(hi)):
        return {"C2": float("inf"), "bounds": []}
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if ok(np.exp(mid)):
            hi = mid
        else:
            lo = mid
    c2 = float(np.exp(hi))
    bounds = []
    for k, xk in enumerate(values):
        core = (c2 * c2 * x0) ** (2.0 ** (-k))
        bounds.append(
            {"k": k, "lower": core / (c2 * c2), "value": xk, "upper": core * c2 * c2}
        )
    return {"C2": c2, "bounds": bounds}


def recursion_diagnostics(levels: Sequence[DataLevel], params: ParameterSet) -> dict:
    """Measured recursion ratios: iterative bounds, sandwich fit, scalings.

    Everything here is a measurement at the configured scales; nothing is
    asserted.  Callers (reports, tests) decide which ratios carry contracts.
    """
    if len(levels) < 2:
        raise ValueError("recursion diagnostics need at least 2 built levels")
    grid = levels[0].grid

    per_level = []
    d_sups = []
    grad_d_sups = []
    for lvl in levels:
        hat = lvl.psi0.hat()
        dpsi_hat = d_operator_hat(grid, hat)
        dpsi = grid.inv(dpsi_hat)
        d_sup = sup_norm(grid, dpsi, weights=FROBENIUS_WEIGHTS)
        grad_d_sup = _grad_sup(grid, dpsi_hat, weights=FROBENIUS_WEIGHTS)
        d_sups.append(d_sup)
        grad_d_sups.append(grad_d_sup)

        psi_sup = sup_norm(grid, lvl.psi0.data)
        grad_psi_sup = _grad_sup(grid, hat)
        grad2 = []
        for c in range(3):
            g = gradient_hat(grid, hat[c])
            for i in range(3):
                gg = gradient_hat(grid, g[i])
                grad2.extend(grid.inv(gg[m]) for m in range(3))
        grad2_sup = sup_norm(grid, np.stack(grad2))

        cc = grid.inv(curl_curl_hat(grid, hat))
        cr = grid.inv(curl_hat(grid, hat))
        entry = {
            "k": lvl.k,
            "M": lvl.M,
            "N": lvl.N,
            "psi0_sup": psi_sup,
            "d_psi0_sup": d_sup,
            "grad_d_psi0_sup": grad_d_sup,
            "curlcurl_l1": l1_norm(cc),
            "curl_l1": l1_norm(cr),
            "curl_sup": sup_norm(grid, cr, refine=1),
            "chi_support_fraction": float((lvl.chi > 0).mean()),
            "mollifier_scale": lvl.mollifier_scale,
            "scaling_ratios": {
                "m0": psi_sup * lvl.N,
                "m1": grad_psi_sup,
                "m2": grad2_sup / lvl.N,
            },
            "normalizers": lvl.normalizers.tolist(),
            "prefactors": lvl.prefactors.tolist(),
        }
        per_level.append(entry)

    for idx, lvl in enumerate(levels):
        if lvl.k == 0:
            continue
        prev_d = d_sups[idx - 1]
        entry = per_level[idx]
        entry["iter_bound_I_ratio"] = entry["psi0_sup"] * lvl.N / np.sqrt(prev_d)
        entry["iter_bound_II_ratio"] = (
            2.0
            * d_sups[idx]
            / (np.sqrt(prev_d) * (1.0 + grad_d_sups[idx - 1] / (lvl.N * prev_d)))
        )
        a_sups = [sup_norm(grid, lvl.a[j], refine=1) for j in range(lvl.a.shape[0])]
        entry["amplitude_ratios"] = [
            s / (lvl.N * np.sqrt(prev_d)) for s in a_sups
        ]
        entry["amplitude_over_N"] = [s / lvl.N for s in a_sups]
        entry["nash_radius"] = lvl.nash_radius
        # cancellation quality: the cutoff must hold the previous deformation
        # unchanged where it lives, so (chi^2 - 1) D psi0_{k-1} measures the
        # reconstruction defect introduced by masking
        prev_dpsi = grid.inv(d_operator_hat(grid, levels[idx - 1].psi0.hat()))
        defect = (lvl.chi * lvl.chi - 1.0) * prev_dpsi
        entry["cutoff_cancellation"] = (
            sup_norm(grid, defect, weights=FROBENIUS_WEIGHTS, refine=1) / prev_d
        )
        grad_a = _grad_sup(grid, grid.fwd(lvl.a))
        entry["grad_a_ratio"] = grad_a / (
            lvl.N
            * np.sqrt(prev_d)
            * (lvl.M + grad_d_sups[idx - 1] / prev_d)
        )

    c1_candidates = [
        e["iter_bound_I_ratio"] for e in per_level if "iter_bound_I_ratio" in e
    ]
    return {
        "K": params.K,
        "Ms": list(params.Ms),
        "Ns": list(params.Ns),
        "c0": params.c0,
        "levels": per_level,
        "C1_fitted": max(c1_candidates),
        "sandwich": _fit_sandwich(d_sups),
    }
