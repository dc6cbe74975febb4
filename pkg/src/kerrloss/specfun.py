"""Scalar special functions used by the closed-form spectral expressions.

Everything here is finite-degree polynomial arithmetic (rising factorials,
terminating hypergeometric sums) except for the convergent-series helpers
``hyp1f1`` and ``hyp0f1``, which are only needed for moderate arguments.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "rising",
    "rising_table",
    "hyp1f1_truncated",
    "hyp2f1_terminating",
    "double_factorial",
    "hyp1f1",
    "hyp0f1",
    "log_factorial",
    "sqrt_binom",
]

#: denominators smaller than this are treated as a misclassified parameter
#: case rather than evaluated to a huge number
DENOMINATOR_FLOOR = 1e-9


class VanishingDenominatorError(ArithmeticError):
    """A rising-factorial denominator vanished.

    This happens exactly when a hypergeometric closed form is evaluated
    outside its parameter case (e.g. the generic-ratio inverse at an
    integer loss-rate ratio).
    """


def rising(z: complex, n: int) -> complex:
    """Rising factorial (z)_n = z (z+1) ... (z+n-1), with (z)_0 = 1."""
    if n < 0:
        raise ValueError("rising factorial needs n >= 0")
    out = complex(1.0)
    for j in range(n):
        out *= z + j
    return out


def rising_table(z: complex, n_max: int) -> np.ndarray:
    """Array [(z)_0, ..., (z)_n_max] by the recurrence (z)_{j+1} = (z)_j (z+j)."""
    vals = np.empty(n_max + 1, dtype=complex)
    vals[0] = 1.0
    for j in range(n_max):
        vals[j + 1] = vals[j] * (z + j)
    return vals


def hyp1f1_truncated(a: complex, b: complex, coefficient_count: int) -> np.ndarray:
    """Series coefficients (a)_j / ((b)_j j!) of 1F1(a; b; z), j < coefficient_count.

    Once a numerator factor vanishes all later coefficients are zero and the
    denominator is never touched, so terminating cases are safe.  A vanishing
    denominator that is actually needed raises ``VanishingDenominatorError``.
    """
    coeffs = np.zeros(coefficient_count, dtype=complex)
    if coefficient_count == 0:
        return coeffs
    coeffs[0] = 1.0
    term = complex(1.0)
    for j in range(coefficient_count - 1):
        num = a + j
        if num == 0:
            break
        den = b + j
        if abs(den) < DENOMINATOR_FLOOR:
            raise VanishingDenominatorError(
                f"(b)_j vanishes at j={j + 1} for b={b}: parameter case misclassified"
            )
        term *= num / (den * (j + 1))
        coeffs[j + 1] = term
    return coeffs


def hyp2f1_terminating(n: int, b: complex, c: complex, z: complex) -> complex:
    """2F1(-n, b; c; z) as the exact (n+1)-term sum.

    Terms are accumulated with running products; a zero numerator factor
    terminates the sum before the matching denominator factor can vanish.
    """
    if n < 0:
        raise ValueError("terminating 2F1 needs n >= 0")
    total = complex(1.0)
    term = complex(1.0)
    for q in range(n):
        num = (-n + q) * (b + q)
        if num == 0:
            break
        den = c + q
        if abs(den) < DENOMINATOR_FLOOR:
            raise VanishingDenominatorError(
                f"(c)_q vanishes at q={q + 1} for c={c}: parameter case misclassified"
            )
        term *= num * z / (den * (q + 1))
        total += term
    return total


def double_factorial(n: int) -> float:
    """n!! with the conventions 0!! = (-1)!! = 1."""
    if n < -1:
        raise ValueError("double factorial defined for n >= -1")
    out = 1.0
    k = n
    while k > 1:
        out *= k
        k -= 2
    return out


def hyp1f1(a: complex, b: complex, z: complex, tol: float = 1e-15, max_terms: int = 500) -> complex:
    """Convergent 1F1(a; b; z) series for moderate |z| (test/reference use)."""
    total = complex(1.0)
    term = complex(1.0)
    for j in range(max_terms):
        num = a + j
        if num == 0:
            break
        den = b + j
        if abs(den) < DENOMINATOR_FLOOR:
            raise VanishingDenominatorError(f"(b)_j vanishes at j={j + 1} for b={b}")
        term *= num * z / (den * (j + 1))
        total += term
        if abs(term) < tol * max(1.0, abs(total)):
            break
    return total


def hyp0f1(c: complex, z: complex, tol: float = 1e-15, max_terms: int = 500) -> complex:
    """Convergent 0F1(; c; z) series; tail below ``tol`` on the tested domain."""
    total = complex(1.0)
    term = complex(1.0)
    for j in range(max_terms):
        den = c + j
        if abs(den) < DENOMINATOR_FLOOR:
            raise VanishingDenominatorError(f"(c)_j vanishes at j={j + 1} for c={c}")
        term *= z / (den * (j + 1))
        total += term
        if abs(term) < tol * max(1.0, abs(total)):
            break
    return total


def log_factorial(n: int) -> float:
    """ln(n!) via lgamma (exact products are used implicitly below 20)."""
    return math.lgamma(n + 1)


def sqrt_binom(n: int, k: int) -> float:
    """sqrt(binomial(n, k)) computed in log space to avoid overflow."""
    if k < 0 or k > n:
        return 0.0
    if n <= 20:
        return math.sqrt(math.comb(n, k))
    return math.exp(0.5 * (log_factorial(n) - log_factorial(k) - log_factorial(n - k)))
