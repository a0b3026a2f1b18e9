"""Closed-form head-draw probabilities and dissemination energy.

Probabilities are computed exactly as ``Fraction`` values and converted to
float at the end; the ``*_exact`` variants return the rationals.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence


def binomial(a: int, b: int) -> int:
    """Exact C(a, b), with C(a, b) = 0 for b > a."""
    if a < 0 or b < 0:
        raise ValueError("binomial arguments must be nonnegative")
    return math.comb(a, b)


def _check_draw(n: int, k: int, m: int) -> None:
    if n < 0 or not 0 <= k <= n:
        raise ValueError(f"need 0 <= k <= n, got n={n}, k={k}")
    if not 0 <= m <= n:
        raise ValueError(f"need 0 <= m <= n, got m={m}, n={n}")


def prob_at_least_one_head_exact(n: int, k: int, m: int, form: str = "ratio") -> Fraction:
    """P(a uniform m-subset of n nodes contains at least one of k heads).

    ``form="ratio"`` evaluates ``1 - C(n-k, m) / C(n, m)``;
    ``form="product"`` evaluates ``1 - prod_{i=1..m} (1 - k / (n - i + 1))``.
    """
    _check_draw(n, k, m)
    if form == "ratio":
        return 1 - Fraction(binomial(n - k, m), binomial(n, m))
    if form == "product":
        miss = Fraction(1)
        for i in range(1, m + 1):
            miss *= 1 - Fraction(k, n - i + 1)
        return 1 - miss
    raise ValueError(f"unknown form {form!r}")


def prob_at_least_one_head(n: int, k: int, m: int) -> float:
    return float(prob_at_least_one_head_exact(n, k, m))


def prob_at_least_one_head_product(n: int, k: int, m: int) -> float:
    """Floating-point product form, kept separate so the two routes can be compared."""
    _check_draw(n, k, m)
    miss = 1.0
    for i in range(1, m + 1):
        miss *= 1.0 - k / (n - i + 1)
    return 1.0 - miss


def prob_exact_heads_exact(n: int, k: int, m: int, z: int) -> Fraction:
    """Hypergeometric mass C(n-k, m-z) C(k, z) / C(n, m); 0 when infeasible."""
    _check_draw(n, k, m)
    if z < 0 or z > k or z > m or m - z > n - k:
        return Fraction(0)
    return Fraction(binomial(n - k, m - z) * binomial(k, z), binomial(n, m))


def prob_exact_heads(n: int, k: int, m: int, z: int) -> float:
    return float(prob_exact_heads_exact(n, k, m, z))


def beta(n: int, k: int, d: int, z: int) -> float:
    """Probability that a degree-``d`` node has exactly ``z`` neighboring heads."""
    if not 0 <= z <= d <= n:
        raise ValueError(f"need 0 <= z <= d <= n, got z={z}, d={d}, n={n}")
    return prob_exact_heads(n, k, d, z)


@dataclass(frozen=True)
class EnergyParams:
    n: int
    k: int
    epsilon: int
    mu: float
    p_t: float
    p_r: float
    alpha: Sequence[float]
    z: Sequence[int]
    d: Sequence[int]

    def __post_init__(self):
        if min(self.n, self.k, self.epsilon) < 0 or self.mu < 0 or self.p_t < 0 or self.p_r < 0:
            raise ValueError("energy parameters must be nonnegative")
        if not len(self.alpha) == len(self.z) == len(self.d):
            raise ValueError("alpha, z and d must have equal length")
        if any(zi < 0 or zi > di for zi, di in zip(self.z, self.d)):
            raise ValueError("need 0 <= z_i <= d_i for every node")


@dataclass(frozen=True)
class HeadEnergy:
    sigma: float  # per-slot receive cost, k * mu * p_r
    zeta: float  # per-slot transmit cost, (k p_t / n) * sum(beta_i alpha_i z_i)
    total: float  # epsilon * (sigma + zeta)
    literal: float  # (eps k / n)(n mu p_r + p_t sum(beta_i alpha_i z_i)), evaluated as written


def _weighted_sum(params: EnergyParams) -> float:
    return sum(beta(params.n, params.k, int(di), int(zi)) * ai * zi
               for ai, zi, di in zip(params.alpha, params.z, params.d))


def head_energy_terms(params: EnergyParams) -> HeadEnergy:
    p = params
    if p.n == 0 or p.k == 0:
        return HeadEnergy(0.0, 0.0, 0.0, 0.0)
    s = _weighted_sum(p)
    sigma = p.k * p.mu * p.p_r
    zeta = p.k * p.p_t / p.n * s
    literal = p.epsilon * p.k / p.n * (p.n * p.mu * p.p_r + p.p_t * s)
    return HeadEnergy(sigma, zeta, p.epsilon * (sigma + zeta), literal)


def head_energy(params: EnergyParams) -> float:
    """Dissemination energy E_h over one period of ``epsilon`` slots."""
    return head_energy_terms(params).literal


def sensing_energy(n: int, mu: float, p_t: float, p_r: float) -> float:
    """One sensing round: every node transmits once, every neighbor receives once."""
    if n < 0 or mu < 0 or p_t < 0 or p_r < 0:
        raise ValueError("inputs must be nonnegative")
    return n * (p_t + mu * p_r)


def k_opt_numeric(energy_model: Callable[[int], float], n: int) -> int:
    """Integer k in 1..n minimizing ``energy_model``; ties go to the smaller k."""
    if n < 1:
        raise ValueError("n must be >= 1")
    best_k, best = 1, energy_model(1)
    for k in range(2, n + 1):
        e = energy_model(k)
        if e < best:
            best_k, best = k, e
    return best_k


def k_opt_closed_form(n: int, e_h: float, epsilon: int, lam: float, alpha_z_sum: float) -> float:
    """sqrt(|n E_h / (eps * lam * sum(alpha_i z_i))|).

    ``lam`` is the derivative of the summed beta terms with respect to k and
    must be supplied by the caller; ``k_opt_numeric`` is the supported route.
    """
    denom = epsilon * lam * alpha_z_sum
    if denom == 0:
        raise ZeroDivisionError("epsilon * lam * sum(alpha z) is zero")
    return math.sqrt(abs(n * e_h / denom))
