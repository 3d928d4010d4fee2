"""Closed-form constants of the clique-factor threshold and its recursion.

Rational quantities (harmonic numbers, ``k_q``, ``delta_q``) are exact
``Fraction`` values. Anything involving the square root in ``rho`` is a float,
except :func:`floor_rho_times`, which decides ``floor(rho(delta) * s)`` exactly
for rational ``delta`` by comparing squares.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Union

import numpy as np

from .errors import DomainError, InstanceTooSmall, InvalidArgument

Number = Union[int, float, Fraction]

HALF = Fraction(1, 2)
SLACK = 1e-12  # comparison slack for float square-root evaluations
VARIANTS = ("proof", "conservative")


def as_fraction(x: Number) -> Fraction:
    """Exact rational view of ``x``; floats go through their shortest repr."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, float):
        if not math.isfinite(x):
            raise DomainError(f"non-finite value {x!r}")
        return Fraction(repr(float(x)))
    if isinstance(x, np.floating):
        return as_fraction(float(x))
    if isinstance(x, np.integer):
        return Fraction(int(x))
    return Fraction(x)


def harmonic(k: int) -> Fraction:
    if not isinstance(k, int) or k <= 0:
        raise InvalidArgument(f"harmonic number needs k >= 1, got {k!r}")
    return sum((Fraction(1, i) for i in range(1, k + 1)), Fraction(0))


def k_of_q(q: int, variant: str = "proof") -> Fraction:
    """``k_q = q - 3/2 + h_{q-1}/2`` (``h_q`` for the conservative variant)."""
    if not isinstance(q, int) or q < 2:
        raise InvalidArgument(f"k_q needs q >= 2, got {q!r}")
    if variant == "proof":
        return q - Fraction(3, 2) + harmonic(q - 1) / 2
    if variant == "conservative":
        return q - Fraction(3, 2) + harmonic(q) / 2
    raise InvalidArgument(f"unknown variant {variant!r}; choose from {VARIANTS}")


def delta_of_q(q: int, variant: str = "proof") -> Fraction:
    k = k_of_q(q, variant)
    return k / (k + 1)


def _check_domain(delta: Number) -> None:
    if delta < HALF:
        raise DomainError(f"rho is defined for delta >= 1/2, got {float(delta)!r}")
    if delta > 1:
        raise DomainError(f"rho is defined for delta <= 1, got {float(delta)!r}")


def rho(delta: Number) -> float:
    """``(delta + sqrt(2 delta - 1)) / 2``, the guaranteed regular-degree ratio."""
    _check_domain(delta)
    d = float(delta)
    return (d + math.sqrt(max(2.0 * d - 1.0, 0.0))) / 2.0


def _rational_sqrt(x: Fraction) -> Fraction | None:
    if x < 0:
        return None
    num, den = math.isqrt(x.numerator), math.isqrt(x.denominator)
    if num * num == x.numerator and den * den == x.denominator:
        return Fraction(num, den)
    return None


def rho_exact(delta: Number) -> Fraction | None:
    """Exact ``rho(delta)`` when ``2 delta - 1`` is a rational square, else ``None``."""
    d = as_fraction(delta)
    _check_domain(d)
    root = _rational_sqrt(2 * d - 1)
    return None if root is None else (d + root) / 2


def floor_rho_times(delta: Number, s: int) -> int:
    """Exact ``floor(rho(delta) * s)`` for rational ``delta`` and integer ``s >= 0``.

    ``rho(delta) * s >= r`` holds iff ``sqrt(2 delta - 1) >= 2r/s - delta``;
    when the right side is positive this is a comparison of squares.
    """
    d = as_fraction(delta)
    _check_domain(d)
    if s < 0:
        raise InvalidArgument("s must be nonnegative")
    if s == 0:
        return 0
    disc = 2 * d - 1

    def reaches(r: int) -> bool:
        t = Fraction(2 * r, s) - d
        return t <= 0 or t * t <= disc

    lo, hi = 0, s  # reaches(0) always; rho <= 1 so the answer is <= s
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if reaches(mid):
            lo = mid
        else:
            hi = mid - 1
    return lo


def recursed_delta(delta: Number) -> float:
    """Proportional minimum degree guaranteed one recursion level down.

    A vertex of proportional degree ``delta`` misses at most ``1 - delta`` of a
    class, so inside a ``rho``-fraction it keeps ``(delta - (1 - rho)) / rho``.
    """
    r = rho(delta)
    return (float(delta) - (1.0 - r)) / r


def recursed_delta_closed(k: Number) -> float:
    """``recursed_delta(k/(k+1))`` in closed form: ``1 - 2/(k + sqrt((k-1)(k+1)))``."""
    k = float(k)
    if k < 1:
        raise DomainError("closed form needs k >= 1")
    return 1.0 - 2.0 / (k + math.sqrt((k - 1.0) * (k + 1.0)))


def check_induction(q: int, variant: str = "proof") -> float:
    """Margin ``recursed_delta(delta_q) - delta_{q-1}``; positive means the recursion closes."""
    if not isinstance(q, int) or q < 3:
        raise InvalidArgument(f"induction check needs q >= 3, got {q!r}")
    return recursed_delta(delta_of_q(q, variant)) - float(delta_of_q(q - 1, variant))


def gamma_of_q(q: int, variant: str = "proof") -> float:
    """Operational slack below ``delta_q`` still accepted by the solver.

    Defined as ``check_induction(q) * rho(delta_q) / 2``; zero for ``q = 2``.
    """
    if not isinstance(q, int) or q < 2:
        raise InvalidArgument(f"gamma needs q >= 2, got {q!r}")
    if q == 2:
        return 0.0
    return check_induction(q, variant) * rho(delta_of_q(q, variant)) / 2.0


@dataclass(frozen=True)
class ChainStep:
    size: int          # s_i
    delta: Number      # proportional degree lower bound at this level


def recursion_chain(q: int, ell: int, delta: Number | None = None) -> list[ChainStep]:
    """Sizes ``s_1..s_{q-1}`` with the degree bound at each level.

    ``delta`` defaults to ``delta_q``. The first degree is kept exact; later
    ones are floats from :func:`recursed_delta`.
    """
    if not isinstance(q, int) or q < 2:
        raise InvalidArgument(f"q must be >= 2, got {q!r}")
    if not isinstance(ell, int) or ell < 1:
        raise InvalidArgument(f"ell must be >= 1, got {ell!r}")
    d: Number = delta_of_q(q) if delta is None else delta
    steps = [ChainStep(ell, d)]
    for _ in range(q - 2):
        prev = steps[-1]
        size = floor_rho_times(prev.delta, prev.size)
        if size == 0:
            raise InstanceTooSmall(
                f"ell={ell} too small for q={q}: a recursion level has no clusters",
                {"q": q, "ell": ell, "sizes": [s.size for s in steps] + [0]})
        steps.append(ChainStep(size, recursed_delta(prev.delta)))
    return steps


def s_table(q: int, ell: int, delta: Number | None = None) -> list[int]:
    if q < 3:
        raise InvalidArgument("s_table needs q >= 3")
    return [step.size for step in recursion_chain(q, ell, delta)]


def psi_and_c(q: int, ell: int, delta: Number | None = None) -> tuple[float, float]:
    """``psi``: margin above 1/2 at the terminal bipartite level; ``c = s_{q-1} psi^2 / (8 s_2)``."""
    if q < 3:
        raise InvalidArgument("psi_and_c needs q >= 3")
    chain = recursion_chain(q, ell, delta)
    psi = float(chain[-1].delta) - 0.5
    if abs(psi) < SLACK:
        psi = 0.0
    s = [step.size for step in chain]
    c = s[-1] * psi * psi / (8.0 * s[1])
    return psi, c


def theta(eps: float, d: float) -> float:
    """Reduced-graph degree loss ``2 eps + d``."""
    return 2.0 * eps + d


def _frac_str(x: Fraction) -> str:
    return f"{x.numerator}/{x.denominator}" if x.denominator != 1 else str(x.numerator)


@dataclass(frozen=True)
class ThresholdTable:
    q: int
    harmonic: Fraction
    k: Fraction
    delta: Fraction
    gamma: float
    ell: int | None = None
    s: tuple[int, ...] = ()
    psi: float | None = None
    c: float | None = None
    nu: float | None = None
    induction_margin: float | None = None
    variant: str = "proof"
    theta: float | None = None
    notes: dict = field(default_factory=dict)

    @classmethod
    def build(cls, q: int, ell: int | None = None, variant: str = "proof",
              eps: float | None = None, d: float | None = None) -> "ThresholdTable":
        k = k_of_q(q, variant)
        h = harmonic(q - 1) if variant == "proof" else harmonic(q)
        delta = k / (k + 1)
        kwargs = {}
        if q >= 3:
            kwargs["induction_margin"] = check_induction(q, variant)
            if ell is not None:
                s = s_table(q, ell, delta)
                psi, c = psi_and_c(q, ell, delta)
                kwargs.update(s=tuple(s), psi=psi, c=c,
                              nu=math.prod(s) / float(ell) ** (q - 1))
        elif ell is not None:
            kwargs.update(s=(ell,), psi=0.0, nu=1.0)
        if eps is not None and d is not None:
            kwargs["theta"] = theta(eps, d)
        return cls(q=q, harmonic=h, k=k, delta=delta, gamma=gamma_of_q(q, variant),
                   ell=ell, variant=variant, **kwargs)

    def to_json(self) -> dict:
        out = {
            "q": self.q,
            "variant": self.variant,
            "harmonic": _frac_str(self.harmonic),
            "harmonic_float": float(self.harmonic),
            "k": _frac_str(self.k),
            "k_float": float(self.k),
            "delta": _frac_str(self.delta),
            "delta_float": float(self.delta),
            "gamma": self.gamma,
        }
        if self.induction_margin is not None:
            out["induction_margin"] = self.induction_margin
        if self.ell is not None:
            out.update(ell=self.ell, s=list(self.s), psi=self.psi, c=self.c, nu=self.nu)
        if self.theta is not None:
            out["theta"] = self.theta
        return out
