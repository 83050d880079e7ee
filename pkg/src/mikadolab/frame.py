"""Six-direction frame for symmetric-matrix reconstruction.

Six axis directions theta_j (integer vectors) and shift directions eta_j with
theta_j . eta_j = 0, together with affine coefficient functionals
Gamma_j^2(M) such that

    sum_j Gamma_j^2(M) theta_j (x) theta_j = M

holds exactly for every symmetric M near the identity. The coefficients are
exact rationals; evaluation broadcasts over grids so the functionals can be
applied pointwise to symmetric tensor fields.

Decay-rate bookkeeping: |eta_j|^2 takes the value 1 for j in {1,2,5,6} and 2
for j in {3,4} (1-based), which groups the six pipes into two rate classes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Sequence

import numpy as np

from .spectral import SYM_IDX

F = Fraction

_THETAS = ((0, 0, 1), (2, 0, 1), (1, 1, 1), (-1, 1, 1), (-2, 0, 1), (0, -2, 1))
_ETAS = ((1, 0, 0), (0, 1, 0), (1, -1, 0), (1, 1, 0), (0, 1, 0), (1, 0, 0))

# Gamma_j^2(Id + eps) = const_j + sum_c coef[j][c] * eps_c with eps stored as
# the 6 components (xx, xy, xz, yy, yz, zz) of the symmetric deviation.
_GAMMA_CONST = (F(1, 3), F(1, 12), F(1, 6), F(1, 6), F(1, 12), F(1, 6))
_GAMMA_COEF = (
    (F(-1, 4), F(0), F(0), F(-5, 12), F(-1, 3), F(1)),
    (F(1, 8), F(-1, 4), F(1, 4), F(-1, 24), F(-1, 12), F(0)),
    (F(0), F(1, 2), F(0), F(1, 6), F(1, 3), F(0)),
    (F(0), F(-1, 2), F(0), F(1, 6), F(1, 3), F(0)),
    (F(1, 8), F(1, 4), F(-1, 4), F(-1, 24), F(-1, 12), F(0)),
    (F(0), F(0), F(0), F(1, 6), F(-1, 6), F(0)),
)


@dataclass(frozen=True)
class NashFrame:
    """Reconstruction frame: directions, affine coefficients, validity domain.

    ``ball_radius`` is the certified reconstruction ball around Id (Frobenius);
    ``domain_radius`` is the entrywise deviation bound inside which all
    Gamma_j^2 stay positive: the tightest functional has constant 1/12 and
    l1 coefficient mass 3/4, giving radius 1/9; 0.11 keeps a margin.
    """

    thetas: tuple = _THETAS
    etas: tuple = _ETAS
    gamma_const: tuple = _GAMMA_CONST
    gamma_coef: tuple = _GAMMA_COEF
    ball_radius: float = 1e-3
    domain_radius: float = 0.11

    @property
    def npipes(self) -> int:
        return len(self.thetas)

    def theta_arr(self) -> np.ndarray:
        return np.asarray(self.thetas, dtype=np.float64)

    def eta_arr(self) -> np.ndarray:
        return np.asarray(self.etas, dtype=np.float64)

    def eta_sq(self) -> np.ndarray:
        e = self.eta_arr()
        return (e * e).sum(axis=1)

    def rate_groups(self) -> Dict[int, List[int]]:
        """Pipes grouped by |eta_j|^2 (shared decay-rate classes)."""
        groups: Dict[int, List[int]] = {}
        for j, s in enumerate(self.eta_sq()):
            groups.setdefault(int(round(s)), []).append(j)
        return groups

    def const_arr(self) -> np.ndarray:
        return np.array([float(c) for c in self.gamma_const])

    def coef_arr(self) -> np.ndarray:
        return np.array([[float(c) for c in row] for row in self.gamma_coef])

    def to_json_dict(self) -> dict:
        return {
            "thetas": [list(t) for t in self.thetas],
            "etas": [list(e) for e in self.etas],
            "eta_sq": [int(s) for s in self.eta_sq()],
            "gamma_const": [[c.numerator, c.denominator] for c in self.gamma_const],
            "gamma_coef": [[[c.numerator, c.denominator] for c in row]
                           for row in self.gamma_coef],
            "ball_radius": self.ball_radius,
            "domain_radius": self.domain_radius,
        }


def default_frame() -> NashFrame:
    return NashFrame()


def eps_from_matrix(M: np.ndarray) -> np.ndarray:
    """Symmetric deviation M - Id as 6 components (xx, xy, xz, yy, yz, zz)."""
    M = np.asarray(M, dtype=np.float64)
    if M.shape != (3, 3):
        raise ValueError("expected a 3x3 matrix")
    if np.abs(M - M.T).max() > 1e-14 * max(1.0, np.abs(M).max()):
        raise ValueError("matrix must be symmetric")
    eps = M - np.eye(3)
    return np.array([eps[i, l] for (i, l) in SYM_IDX])


def gamma_squared(frame: NashFrame, eps: np.ndarray) -> np.ndarray:
    """Affine functionals Gamma_j^2 on the deviation eps (6 comps, broadcast).

    eps may be shape (6,) or (6, ...) for pointwise field evaluation.
    Returns shape (npipes,) + eps.shape[1:].
    """
    eps = np.asarray(eps, dtype=np.float64)
    if eps.shape[0] != 6:
        raise ValueError("eps must have 6 leading components")
    coef = frame.coef_arr()
    const = frame.const_arr()
    out = np.tensordot(coef, eps, axes=(1, 0))
    return out + const.reshape((frame.npipes,) + (1,) * (eps.ndim - 1))


def gamma(frame: NashFrame, M: np.ndarray) -> np.ndarray:
    """Coefficients Gamma_j(M) >= 0 reconstructing M over the frame.

    M is a symmetric 3x3 matrix, or a 6-component symmetric tensor field whose
    components are read as the matrix entries (pointwise evaluation). Raises
    ``nash-domain`` when the deviation from Id exceeds the frame's entrywise
    domain radius and ``nash-degenerate`` when any Gamma_j^2 fails positivity.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.shape == (3, 3):
        eps = eps_from_matrix(M)
    elif M.shape[0] == 6:
        eps = M - np.array([1.0, 0, 0, 1.0, 0, 1.0]).reshape((6,) + (1,) * (M.ndim - 1))
    else:
        raise ValueError("M must be 3x3 or a 6-component symmetric stack")
    dev = np.abs(eps).max()
    if dev > frame.domain_radius:
        raise ValueError(
            f"nash-domain: entrywise deviation {dev:.4g} exceeds the frame "
            f"domain radius {frame.domain_radius}")
    g2 = gamma_squared(frame, eps)
    lo = g2.min()
    if lo <= 1e-12:
        raise ValueError(
            f"nash-degenerate: min Gamma_j^2 = {lo:.4g} is not positive")
    return np.sqrt(g2)


def reconstruct(frame: NashFrame, g2: np.ndarray) -> np.ndarray:
    """sum_j g2_j theta_j (x) theta_j as a symmetric 6-component object."""
    g2 = np.asarray(g2, dtype=np.float64)
    th = frame.theta_arr()
    out = np.zeros((6,) + g2.shape[1:], dtype=np.float64)
    for j in range(frame.npipes):
        for c, (i, l) in enumerate(SYM_IDX):
            out[c] += g2[j] * th[j, i] * th[j, l]
    return out


def gamma_squared_exact(frame: NashFrame, eps: Sequence[Fraction]) -> List[Fraction]:
    """Exact rational Gamma_j^2 for a rational deviation (6 components)."""
    eps = list(eps)
    out = []
    for j in range(frame.npipes):
        acc = frame.gamma_const[j]
        for c in range(6):
            acc += frame.gamma_coef[j][c] * Fraction(eps[c])
        out.append(acc)
    return out


def reconstruct_exact(frame: NashFrame, g2: Sequence[Fraction]) -> List[List[Fraction]]:
    """Exact rational sum_j g2_j theta_j theta_j^T as a full 3x3 matrix."""
    out = [[Fraction(0)] * 3 for _ in range(3)]
    for j in range(frame.npipes):
        t = frame.thetas[j]
        for i in range(3):
            for l in range(3):
                out[i][l] += Fraction(g2[j]) * t[i] * t[l]
    return out


def verify_frame(frame: NashFrame) -> dict:
    """Structural invariants: orthogonality, exact identity reconstruction,
    positivity margin on the certified ball. Returns a small report dict."""
    th = frame.theta_arr()
    et = frame.eta_arr()
    dots = [float(np.dot(th[j], et[j])) for j in range(frame.npipes)]
    recon_id = reconstruct_exact(frame, gamma_squared_exact(frame, [F(0)] * 6))
    id_exact = all(recon_id[i][l] == (1 if i == l else 0)
                   for i in range(3) for l in range(3))
    # worst-case positivity margin for entrywise deviation r: each functional
    # drops by at most r * (l1 mass of its coefficients)
    coef = frame.coef_arr()
    mass = np.abs(coef).sum(axis=1)
    margin = frame.const_arr() - frame.domain_radius * mass
    return {
        "theta_eta_dots": dots,
        "orthogonal": all(d == 0.0 for d in dots),
        "identity_reconstruction_exact": bool(id_exact),
        "coef_l1_mass": mass.tolist(),
        "positivity_margin_at_domain_radius": margin.tolist(),
        "gamma_sq_at_id": [[c.numerator, c.denominator] for c in frame.gamma_const],
    }
