"""Construction parameters: exponents, scale ladders, and their validation.

The construction is controlled by a small set of exponents (b, gamma, alpha,
kappa) and two sequences of integer scales: M_k (pipe period) and N_k
(oscillation wavenumber), k = 0 .. K+1.  Level K+1 is never built as a field;
its scales feed the level-K mollifier width and the fastest decay rate.

Two regimes:

- strict_mode=True derives M_k = floor(A**(b**k)), N_k = M_k*floor(M_k**(gamma-1))
  and validates the full exponent-constraint system (b > max(5, 1/(1-8*alpha)),
  1/(1-4*alpha) < gamma < 1/(4*alpha + 1/b), kappa in (0, 1/2 - 1/(2*gamma)
  - 2*alpha), and 4*alpha < 1 - 1/gamma < 1 - 1/b).  These ladders grow like
  A**(b**k) and are unresolvable on any realistic grid; strict mode exists so
  the constraint system itself is executable and testable.
- strict_mode=False (the default) accepts a hand-set ladder.  The default
  ladder is M_k = 2*4**k, N_k = 4*M_k, which at K = 1 gives M = (2, 8, 32),
  N = (8, 32, 128): every carrier of a built level fits the open spectral
  band at n = 128 and anchors on the 2*pi/16 lattice are hit exactly at both
  built scales.

In either regime the ladder invariants are enforced unconditionally:
M_k | N_k, N_k/M_k >= 2, and N_{k+1} >= 4*N_k.

Grid resolvability is a separate check (`check_grid`) because a ParameterSet
is meaningful without a grid: a built level k needs its carrier band plus the
envelope bandwidth inside the open band |xi|_inf <= n/2 - 1, and the quadratic
self-interaction band must fit the dealiased product grid.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields as dataclass_fields
from typing import Optional

import numpy as np

__all__ = [
    "ConfigError",
    "ParameterSet",
    "default_ladder",
    "strict_ladder",
]

#: Envelope bandwidth retained by the band-limited pipe layer at reference.
DEFAULT_ENVELOPE_BANDWIDTH = 24


class ConfigError(ValueError):
    """A parameter or grid configuration violates a validated constraint.

    The command-line layer maps this to exit status 2 (configuration error,
    as opposed to a failed numerical check, which is status 1).
    """


def default_ladder(K: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Hand ladder M_k = 2*4**k, N_k = 4*M_k for k = 0 .. K+1."""
    if K < 0:
        raise ConfigError(f"K must be >= 0, got {K}")
    Ms = tuple(2 * 4**k for k in range(K + 2))
    Ns = tuple(4 * m for m in Ms)
    return Ms, Ns


def _floor_power(A: float, exponent: float) -> int:
    """floor(A**exponent), exact when A and exponent are integral."""
    if float(A).is_integer() and float(exponent).is_integer() and A > 0:
        return int(A) ** int(exponent)
    return math.floor(A**exponent)


def strict_ladder(
    A: float, b: float, gamma: float, K: int
) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Derived ladder M_k = floor(A**(b**k)), N_k = M_k*floor(M_k**(gamma-1)).

    Integer A and b are computed in exact integer arithmetic (the ladders
    overflow float64 already at k = 2 for modest A); fractional exponents
    fall back to float and are accurate for the small k where they fit.
    """
    Ms = []
    Ns = []
    for k in range(K + 2):
        bk = b**k if not float(b).is_integer() else int(b) ** k
        m = _floor_power(A, bk)
        if m < 1:
            raise ConfigError(f"derived M_{k} = floor(A**(b**{k})) < 1 for A = {A}")
        ratio = _floor_power(m, gamma - 1.0)
        Ms.append(m)
        Ns.append(m * ratio)
    return tuple(Ms), tuple(Ns)


@dataclass(frozen=True)
class ParameterSet:
    """Exponents, geometry fractions, and the integer scale ladder.

    Fields follow the construction's own naming: A is the growth base for
    strict ladders, b the super-exponent, gamma the oscillation exponent
    (N_k ~ M_k**gamma), alpha the subcriticality of the perturbation, kappa
    the Hölder exponent used by the norm diagnostics, delta the tube-union
    volume fraction budget per level, delta0 the tube radius, K the last
    built level, and c0 the Nash-perturbation budget (the matrix argument of
    Gamma_j stays in B(Id, c0)).
    """

    A: float = 5.0
    b: float = 6.0
    gamma: float = 1.5
    alpha: float = 0.05
    kappa: float = 0.05
    delta: float = 0.05
    delta0: float = 0.058
    K: int = 1
    c0: float = 0.1
    strict_mode: bool = False
    Ms: tuple[int, ...] = field(default=())
    Ns: tuple[int, ...] = field(default=())

    def __post_init__(self) -> None:
        if self.K < 0:
            raise ConfigError(f"K must be >= 0, got {self.K}")
        if not 0.0 < self.alpha < 0.125:
            raise ConfigError(f"alpha must lie in (0, 1/8), got {self.alpha}")
        if not 0.0 < self.delta < 1.0:
            raise ConfigError(f"delta is a volume fraction in (0, 1), got {self.delta}")
        if self.delta0 <= 0.0:
            raise ConfigError(f"delta0 must be positive, got {self.delta0}")
        if self.c0 <= 0.0:
            raise ConfigError(f"c0 must be positive, got {self.c0}")
        if self.kappa <= 0.0:
            raise ConfigError(f"kappa must be positive, got {self.kappa}")

        if self.strict_mode:
            self._validate_strict_exponents()

        if not self.Ms and not self.Ns:
            if self.strict_mode:
                Ms, Ns = strict_ladder(self.A, self.b, self.gamma, self.K)
            else:
                Ms, Ns = default_ladder(self.K)
            object.__setattr__(self, "Ms", Ms)
            object.__setattr__(self, "Ns", Ns)
        else:
            object.__setattr__(self, "Ms", tuple(int(m) for m in self.Ms))
            object.__setattr__(self, "Ns", tuple(int(n) for n in self.Ns))

        self._validate_ladder()

    # -- constraint systems ------------------------------------------------

    def _validate_strict_exponents(self) -> None:
        b, gamma, alpha, kappa = self.b, self.gamma, self.alpha, self.kappa
        b_floor = max(5.0, 1.0 / (1.0 - 8.0 * alpha))
        if not b > b_floor:
            raise ConfigError(
                f"strict mode requires b > max(5, 1/(1-8*alpha)) = {b_floor:.6g}, got b = {b}"
            )
        lo = 1.0 / (1.0 - 4.0 * alpha)
        hi = 1.0 / (4.0 * alpha + 1.0 / b)
        if not lo < gamma < hi:
            raise ConfigError(
                f"strict mode requires 1/(1-4*alpha) < gamma < 1/(4*alpha + 1/b), "
                f"i.e. gamma in ({lo:.6g}, {hi:.6g}), got gamma = {gamma}"
            )
        kmax = 0.5 - 1.0 / (2.0 * gamma) - 2.0 * alpha
        if not 0.0 < kappa < kmax:
            raise ConfigError(
                f"strict mode requires kappa in (0, 1/2 - 1/(2*gamma) - 2*alpha) = "
                f"(0, {kmax:.6g}), got kappa = {kappa}"
            )
        if not 4.0 * alpha < 1.0 - 1.0 / gamma < 1.0 - 1.0 / b:
            raise ConfigError(
                f"strict mode requires 4*alpha < 1 - 1/gamma < 1 - 1/b, got "
                f"{4.0 * alpha:.6g}, {1.0 - 1.0 / gamma:.6g}, {1.0 - 1.0 / b:.6g}"
            )

    def _validate_ladder(self) -> None:
        need = self.K + 2
        if len(self.Ms) < need or len(self.Ns) < need:
            raise ConfigError(
                f"scale ladder must cover levels 0..K+1 = 0..{self.K + 1}: "
                f"got {len(self.Ms)} M entries and {len(self.Ns)} N entries"
            )
        if len(self.Ms) != len(self.Ns):
            raise ConfigError(
                f"M and N ladders differ in length: {len(self.Ms)} vs {len(self.Ns)}"
            )
        for k, (m, n) in enumerate(zip(self.Ms, self.Ns)):
            if m < 1 or n < 1:
                raise ConfigError(f"scales must be positive integers: M_{k}={m}, N_{k}={n}")
            if n % m != 0:
                raise ConfigError(f"M_{k} = {m} must divide N_{k} = {n}")
            if n // m < 2:
                raise ConfigError(f"N_{k}/M_{k} = {n // m} must be >= 2 (M_{k}={m}, N_{k}={n})")
        for k in range(len(self.Ns) - 1):
            if self.Ns[k + 1] < 4 * self.Ns[k]:
                raise ConfigError(
                    f"N_{k + 1} = {self.Ns[k + 1]} must be >= 4*N_{k} = {4 * self.Ns[k]}"
                )

    # -- grid compatibility --------------------------------------------------

    def max_eta_inf(self, frame=None) -> int:
        """Largest |eta_j|_inf over the frame (1 for the default frame)."""
        if frame is None:
            return 1
        return int(np.max(np.abs(np.asarray(frame.eta_arr(), dtype=int))))

    def check_grid(
        self, n: int, frame=None, env_bandwidth: int = DEFAULT_ENVELOPE_BANDWIDTH
    ) -> None:
        """Reject configurations whose built levels the grid cannot represent.

        Two conditions, both on the highest built carrier N_K:
        the field band N_K*|eta|_inf + env_bandwidth must fit the open band
        |xi|_inf <= n/2 - 1, and the quadratic self-interaction band
        2*(N_K*|eta|_inf + env_bandwidth) must fit the padded product grid
        (exact for inputs inside the open band), i.e. be <= n.
        """
        eta = self.max_eta_inf(frame)
        carrier = self.Ns[self.K] * eta
        half_open = n // 2 - 1
        if carrier + env_bandwidth > half_open:
            raise ConfigError(
                f"grid resolvability: carrier band N_K*|eta|_inf + envelope = "
                f"{carrier} + {env_bandwidth} exceeds n/2 - 1 = {half_open} at n = {n}"
            )
        if 2 * (carrier + env_bandwidth) > n:
            raise ConfigError(
                f"grid resolvability: quadratic interaction band "
                f"2*({carrier} + {env_bandwidth}) exceeds the padded product band n = {n}"
            )

    def carrier_resolvable(self, k: int, n: int, frame=None) -> bool:
        """Whether level k's oscillation is representable on an n-grid at all.

        Rate-only levels (k = K+1 at reference) fail this and are used solely
        through their decay rates and mollifier scales.
        """
        return self.Ns[k] * self.max_eta_inf(frame) <= n // 2 - 1

    # -- derived quantities ----------------------------------------------------

    def mollifier_scale(self, k: int) -> float:
        """Mollification length for level k.

        The nominal width is N_{k+1}**(-1/3) * N_k**(-2/3); it is capped at
        delta0/(8*M_k) so the mollification halo cannot leak across the
        cutoff-window gap of the level geometry.
        """
        if not 0 <= k <= self.K:
            raise ConfigError(f"mollifier scale defined for built levels 0..{self.K}, got {k}")
        nominal = self.Ns[k + 1] ** (-1.0 / 3.0) * self.Ns[k] ** (-2.0 / 3.0)
        cap = self.delta0 / (8.0 * self.Ms[k])
        return min(nominal, cap)

    def decay_rate(self, k: int, eta_sq: int = 1) -> float:
        """Heat decay rate |eta|^2 * N_k^2 for a rate group at level k."""
        return float(eta_sq) * float(self.Ns[k]) ** 2

    def t_grid(self, count: Optional[int] = None) -> np.ndarray:
        """Log-spaced diagnostic times on [N_K**-2 / 4, 1].

        The default density is 16 points per decade; pass ``count`` to pin
        the number of points instead.
        """
        t_min = 0.25 * float(self.Ns[self.K]) ** -2
        if count is None:
            count = int(np.ceil(16.0 * np.log10(1.0 / t_min))) + 1
        return np.geomspace(t_min, 1.0, count)

    # -- serialization -----------------------------------------------------------

    def to_json_dict(self) -> dict:
        return {
            "A": self.A,
            "b": self.b,
            "gamma": self.gamma,
            "alpha": self.alpha,
            "kappa": self.kappa,
            "delta": self.delta,
            "delta0": self.delta0,
            "K": self.K,
            "c0": self.c0,
            "strict_mode": self.strict_mode,
            "Ms": list(self.Ms),
            "Ns": list(self.Ns),
            "regime": "strict" if self.strict_mode else "desk-scale",
        }

    @classmethod
    def from_mapping(cls, mapping: dict) -> "ParameterSet":
        """Build from a parsed config mapping, rejecting unknown keys."""
        allowed = {f.name for f in dataclass_fields(cls)}
        unknown = set(mapping) - allowed - {"regime"}
        if unknown:
            raise ConfigError(f"unknown parameter keys: {sorted(unknown)}")
        kwargs = {k: v for k, v in mapping.items() if k in allowed}
        for key in ("Ms", "Ns"):
            if key in kwargs:
                kwargs[key] = tuple(int(v) for v in kwargs[key])
        return cls(**kwargs)

    def content_json(self) -> str:
        """Canonical JSON used for config hashing."""
        return json.dumps(self.to_json_dict(), sort_keys=True)
